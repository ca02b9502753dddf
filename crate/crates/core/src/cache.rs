// SPDX-License-Identifier: Apache-2.0

//! On-disk distance-matrix cache.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! offset  size             field
//! 0       8                ASCII "KNNDMAT1"
//! 8       1                metric id (0 plain, 1 sliding)
//! 9       4                n_test  (u32)
//! 13      4                n_train (u32)
//! 17      4·n_test·n_train squared distances (u32), row-major
//! ```

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::engine::DistanceMatrix;
use crate::error::{Error, Result};
use crate::metrics::MetricId;

pub const CACHE_MAGIC: &[u8; 8] = b"KNNDMAT1";
pub const HEADER_LEN: u64 = 17;

const IO_CHUNK: usize = 1 << 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CacheHeader {
    pub metric: MetricId,
    pub n_test: u32,
    pub n_train: u32,
}

impl CacheHeader {
    fn encode(&self) -> [u8; HEADER_LEN as usize] {
        let mut out = [0u8; HEADER_LEN as usize];
        out[..8].copy_from_slice(CACHE_MAGIC);
        out[8] = self.metric.code();
        out[9..13].copy_from_slice(&self.n_test.to_le_bytes());
        out[13..17].copy_from_slice(&self.n_train.to_le_bytes());
        out
    }

    fn decode(bytes: &[u8; HEADER_LEN as usize]) -> Result<Self> {
        if &bytes[..8] != CACHE_MAGIC {
            return Err(Error::BadMagic {
                expected: String::from_utf8_lossy(CACHE_MAGIC).into_owned(),
                found: String::from_utf8_lossy(&bytes[..8]).into_owned(),
            });
        }
        Ok(CacheHeader {
            metric: MetricId::from_code(bytes[8])?,
            n_test: u32::from_le_bytes(bytes[9..13].try_into().unwrap()),
            n_train: u32::from_le_bytes(bytes[13..17].try_into().unwrap()),
        })
    }

    pub fn file_len(&self) -> u64 {
        HEADER_LEN + 4 * u64::from(self.n_test) * u64::from(self.n_train)
    }
}

/// Writes `matrix` to `path`. The bytes go to a sibling temporary file that is
/// renamed into place, so readers never observe a partial cache.
pub fn save_cache(matrix: &DistanceMatrix, path: &Path) -> Result<()> {
    let header = CacheHeader {
        metric: matrix.metric(),
        n_test: u32::try_from(matrix.n_test()).expect("n_test fits in u32"),
        n_train: u32::try_from(matrix.n_train()).expect("n_train fits in u32"),
    };
    let mut tmp_name = path.file_name().unwrap_or_default().to_owned();
    tmp_name.push(".partial");
    let tmp = path.with_file_name(tmp_name);

    let write = || -> std::io::Result<()> {
        let mut out = BufWriter::with_capacity(IO_CHUNK, File::create(&tmp)?);
        out.write_all(&header.encode())?;
        let mut buf = Vec::with_capacity(IO_CHUNK);
        for chunk in matrix.values().chunks(IO_CHUNK / 4) {
            buf.clear();
            buf.extend(chunk.iter().flat_map(|v| v.to_le_bytes()));
            out.write_all(&buf)?;
        }
        out.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

pub fn read_header(path: &Path) -> Result<CacheHeader> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_header_from(&mut file, path)
}

fn read_header_from(file: &mut File, path: &Path) -> Result<CacheHeader> {
    let actual = file.metadata().map_err(|e| Error::io(path, e))?.len();
    let mut raw = [0u8; HEADER_LEN as usize];
    if actual < HEADER_LEN {
        return Err(Error::TruncatedFile {
            expected: HEADER_LEN,
            actual,
        });
    }
    file.read_exact(&mut raw).map_err(|e| Error::io(path, e))?;
    let header = CacheHeader::decode(&raw)?;
    if header.file_len() != actual {
        return Err(Error::TruncatedFile {
            expected: header.file_len(),
            actual,
        });
    }
    Ok(header)
}

/// Reads a cache file. With `expected` set, a cache for any other metric is
/// a [`Error::MetricMismatch`].
pub fn load_cache(path: &Path, expected: Option<MetricId>) -> Result<DistanceMatrix> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let header = read_header_from(&mut file, path)?;
    if let Some(requested) = expected {
        if requested != header.metric {
            return Err(Error::MetricMismatch {
                requested,
                found: header.metric,
            });
        }
    }
    let len = header.n_test as usize * header.n_train as usize;
    let mut values = Vec::with_capacity(len);
    let mut reader = BufReader::with_capacity(IO_CHUNK, file);
    let mut buf = vec![0u8; IO_CHUNK];
    while values.len() < len {
        let want = ((len - values.len()) * 4).min(IO_CHUNK);
        reader
            .read_exact(&mut buf[..want])
            .map_err(|e| Error::io(path, e))?;
        values.extend(
            buf[..want]
                .chunks_exact(4)
                .map(|w| u32::from_le_bytes(w.try_into().unwrap())),
        );
    }
    DistanceMatrix::from_values(
        header.n_test as usize,
        header.n_train as usize,
        header.metric,
        values,
    )
}
