// SPDX-License-Identifier: Apache-2.0

use std::fmt::Write as _;
use std::io::IsTerminal;
use std::sync::mpsc;
use std::time::Instant;

use anyhow::{Context, Result};
use knn_core::classifier::{self, Neighbor};
use knn_core::crossval::{self, CrossValTable, Residency};
use knn_core::engine::{CacheStatus, Progress};
use knn_core::image::render_ascii;
use knn_core::metrics::mean_distance_by_class;
use knn_core::stats::{self, EvalReport, HypothesisResult};
use knn_core::{Dataset, Engine, Error, Label, MetricId};
use serde::Serialize;

use crate::config::{cache_path, OutputFormat, RunConfig};

#[derive(Serialize)]
pub struct EvaluateOutput {
    pub config: RunConfig,
    pub report: EvalReport,
}

#[derive(Serialize)]
pub struct CompareOutput {
    pub config: RunConfig,
    pub baseline: EvalReport,
    pub candidate: EvalReport,
    pub test: HypothesisResult,
}

#[derive(Serialize)]
pub struct CrossvalOutput {
    pub config: RunConfig,
    pub table: CrossValTable,
    pub selected_k: usize,
}

/// What a command hands back for printing: the main document plus an optional
/// line for standard error.
pub struct Rendered {
    pub body: String,
    pub note: Option<String>,
}

fn engine(cfg: &RunConfig) -> Result<Engine> {
    let engine = Engine::new(cfg.workers)?;
    if !std::io::stderr().is_terminal() {
        return Ok(engine);
    }
    let (tx, rx) = mpsc::channel::<Progress>();
    std::thread::spawn(move || {
        let mut last = 0;
        for p in rx {
            let pct = p.rows_done * 100 / p.rows_total.max(1);
            if pct != last {
                last = pct;
                eprint!("\r{pct:3}% of {} rows", p.rows_total);
            }
        }
        eprint!("\r\x1b[K");
    });
    Ok(engine.with_progress(tx))
}

/// Predicted labels for every test image at one k.
fn predict(engine: &Engine, cfg: &RunConfig, train: &Dataset, test: &Dataset, metric: MetricId, k: usize) -> Result<Vec<Label>> {
    if cfg.residency == Residency::Streaming {
        let mut per_k = classifier::classify_streaming(engine, train.images(), train.labels(), test.images(), metric, &[k])?;
        return Ok(per_k.swap_remove(0));
    }
    let m = match &cfg.cache_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            let path = cache_path(dir, metric, train, test);
            let (m, status) = engine.build_matrix_cached(train.images(), test.images(), metric, &path)?;
            if status == CacheStatus::Hit {
                eprintln!("loaded cached distances from {}", path.display());
            }
            m
        }
        None => engine.build_matrix(train.images(), test.images(), metric)?,
    };
    Ok(classifier::classify_all(&m, train.labels(), k)?
        .into_iter()
        .map(|p| p.label)
        .collect())
}

fn report(engine: &Engine, cfg: &RunConfig, train: &Dataset, test: &Dataset, metric: MetricId) -> Result<EvalReport> {
    if cfg.k > train.len() {
        return Err(Error::BadK { k: cfg.k, row_len: train.len() }.into());
    }
    let start = Instant::now();
    let preds = predict(engine, cfg, train, test, metric, cfg.k)?;
    let secs = start.elapsed().as_secs_f64();
    Ok(EvalReport::new(metric, cfg.k, &preds, test.labels(), cfg.z_value, secs)?)
}

const REPORT_HEADER: &str = "metric,k,n,correct,accuracy,std,z,ci_low,ci_high";

const COMPARE_HEADER: &str = "baseline_metric,candidate_metric,k,n,baseline_correct,candidate_correct,\
baseline_accuracy,candidate_accuracy,d,sigma_d,z_stat,z_critical,rejected,degenerate_variance";

fn report_row(r: &EvalReport) -> String {
    format!(
        "{},{},{},{},{:.6},{:.6},{},{:.6},{:.6}",
        r.metric, r.k, r.n, r.correct, r.accuracy, r.std, r.z, r.ci_low, r.ci_high
    )
}

fn json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn evaluate(cfg: RunConfig) -> Result<Rendered> {
    let (train, test) = (cfg.load_train()?, cfg.load_test()?);
    let engine = engine(&cfg)?;
    let report = report(&engine, &cfg, &train, &test, cfg.metric)?;
    let body = match cfg.output_format {
        OutputFormat::Json => json(&EvaluateOutput { config: cfg, report })?,
        OutputFormat::Csv => format!("{REPORT_HEADER}\n{}\n", report_row(&report)),
    };
    Ok(Rendered { body, note: None })
}

pub fn compare(cfg: RunConfig) -> Result<Rendered> {
    let (train, test) = (cfg.load_train()?, cfg.load_test()?);
    let engine = engine(&cfg)?;
    let baseline = report(&engine, &cfg, &train, &test, MetricId::Plain)?;
    let candidate = report(&engine, &cfg, &train, &test, cfg.metric)?;
    let test = stats::two_proportion_test(baseline.accuracy, baseline.n, candidate.accuracy, candidate.n, cfg.z_value)?;
    let note = test
        .degenerate_variance
        .then(|| "both accuracies are 0 or 1; the difference has no variance and the test was not applied".to_string());
    let body = match cfg.output_format {
        OutputFormat::Json => json(&CompareOutput { config: cfg, baseline, candidate, test })?,
        OutputFormat::Csv => {
            let mut s = String::from(COMPARE_HEADER);
            s.push('\n');
            writeln!(
                s,
                "{},{},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{},{},{}",
                baseline.metric,
                candidate.metric,
                cfg.k,
                candidate.n,
                baseline.correct,
                candidate.correct,
                baseline.accuracy,
                candidate.accuracy,
                test.d,
                test.sigma_d,
                test.z_stat,
                test.z_critical,
                test.rejected,
                test.degenerate_variance
            )?;
            s
        }
    };
    Ok(Rendered { body, note })
}

pub fn crossval(cfg: RunConfig) -> Result<Rendered> {
    let train = cfg.load_train()?;
    let engine = engine(&cfg)?;
    let table = crossval::cross_validate_with(&engine, &train, &cfg.k_values(), cfg.metric, cfg.folds, cfg.residency)?;
    let selected_k = crossval::select_k(&table);
    let note = Some(format!("selected k = {selected_k}"));
    let body = match cfg.output_format {
        OutputFormat::Json => json(&CrossvalOutput { config: cfg, table, selected_k })?,
        OutputFormat::Csv => table.to_csv(),
    };
    Ok(Rendered { body, note })
}

pub fn inspect(cfg: RunConfig, index: usize) -> Result<Rendered> {
    let (train, test) = (cfg.load_train()?, cfg.load_test()?);
    let (image, label) = test
        .get(index)
        .ok_or(Error::IndexOutOfRange { index, len: test.len() })?;
    if cfg.k > train.len() {
        return Err(Error::BadK { k: cfg.k, row_len: train.len() }.into());
    }
    let engine = Engine::new(cfg.workers)?;
    let row = engine.build_matrix(train.images(), std::slice::from_ref(image), cfg.metric)?;
    let neighbors = classifier::k_nearest(row.row(0), cfg.k)?;
    let predicted = classifier::vote(neighbors.entries(), train.labels());
    let means = mean_distance_by_class(image, &train)?;

    let mut s = format!("test image {index}, label {label}\n");
    s.push_str(&render_ascii(image));
    writeln!(s, "{} nearest training images ({}):", cfg.k, cfg.metric)?;
    for &Neighbor { distance, train_index } in neighbors.entries() {
        let l = train.labels()[train_index as usize];
        writeln!(s, "  #{train_index:<6} label {l}  distance {distance}")?;
    }
    writeln!(s, "predicted label: {predicted}")?;
    s.push_str("mean plain distance to each class:\n");
    for (class, mean) in means.iter().enumerate() {
        writeln!(s, "  {class}  {mean:.1}")?;
    }
    let closest = means
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(c, _)| c)
        .unwrap_or_default();
    writeln!(s, "closest class by mean distance: {closest}")?;
    Ok(Rendered { body: s, note: None })
}
