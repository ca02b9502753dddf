// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

/// Number of digit classes.
pub const NUM_CLASSES: usize = 10;

/// Digit class id, always `< NUM_CLASSES` inside a [`Dataset`].
pub type Label = u8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitTag {
    Train,
    Test,
    FoldDerived,
}

/// Paired images and labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    images: Vec<Image>,
    labels: Vec<Label>,
    split: SplitTag,
}

impl Dataset {
    pub fn new(images: Vec<Image>, labels: Vec<Label>, split: SplitTag) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::CountMismatch {
                images: images.len(),
                labels: labels.len(),
            });
        }
        if let Some((index, &value)) = labels
            .iter()
            .enumerate()
            .find(|(_, &l)| usize::from(l) >= NUM_CLASSES)
        {
            return Err(Error::BadLabel { index, value });
        }
        Ok(Dataset {
            images,
            labels,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn images(&self) -> &[Image] {
        &self.images
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn split(&self) -> SplitTag {
        self.split
    }

    pub fn get(&self, index: usize) -> Option<(&Image, Label)> {
        Some((self.images.get(index)?, *self.labels.get(index)?))
    }

    /// First `n` examples in file order; the whole set when `n >= len`.
    pub fn prefix(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            images: self.images[..n].to_vec(),
            labels: self.labels[..n].to_vec(),
            split: self.split,
        }
    }

    /// Examples per class.
    pub fn class_histogram(&self) -> [usize; NUM_CLASSES] {
        let mut hist = [0; NUM_CLASSES];
        for &l in &self.labels {
            hist[usize::from(l)] += 1;
        }
        hist
    }
}

/// Splits `data` into `(train_part, val_part)` for one fold.
///
/// The validation part is the contiguous slice
/// `[fold * n / folds, (fold + 1) * n / folds)`; the training part is every
/// other example in original order. Nothing is shuffled.
pub fn fold_split(data: &Dataset, num_folds: usize, fold_index: usize) -> Result<(Dataset, Dataset)> {
    let n = data.len();
    if num_folds == 0 || !n.is_multiple_of(num_folds) {
        return Err(Error::IndivisibleFold {
            len: n,
            folds: num_folds,
        });
    }
    if fold_index >= num_folds {
        return Err(Error::FoldOutOfRange {
            index: fold_index,
            folds: num_folds,
        });
    }
    let size = n / num_folds;
    let (lo, hi) = (fold_index * size, (fold_index + 1) * size);

    let take = |range: &mut dyn Iterator<Item = usize>| {
        let idx: Vec<usize> = range.collect();
        Dataset {
            images: idx.iter().map(|&i| data.images[i].clone()).collect(),
            labels: idx.iter().map(|&i| data.labels[i]).collect(),
            split: SplitTag::FoldDerived,
        }
    };
    let train = take(&mut (0..lo).chain(hi..n));
    let val = take(&mut (lo..hi));
    Ok((train, val))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Dataset whose image `i` has its first pixel set to `i`, so order is visible.
    fn numbered(n: usize) -> Dataset {
        let images = (0..n)
            .map(|i| {
                let mut img = Image::zeros();
                img.0[0] = i as u8;
                img.0[1] = (i >> 8) as u8;
                img
            })
            .collect();
        let labels = (0..n).map(|i| (i % NUM_CLASSES) as u8).collect();
        Dataset::new(images, labels, SplitTag::Train).unwrap()
    }

    fn ids(d: &Dataset) -> Vec<usize> {
        d.images()
            .iter()
            .map(|img| usize::from(img.0[0]) | usize::from(img.0[1]) << 8)
            .collect()
    }

    #[test]
    fn rejects_count_mismatch_and_bad_labels() {
        let err = Dataset::new(vec![Image::zeros(); 2], vec![0, 1, 2], SplitTag::Test).unwrap_err();
        assert!(matches!(err, Error::CountMismatch { images: 2, labels: 3 }));
        let err = Dataset::new(vec![Image::zeros()], vec![10], SplitTag::Test).unwrap_err();
        assert!(matches!(err, Error::BadLabel { index: 0, value: 10 }));
    }

    #[test]
    fn ten_folds_of_sixty_thousand() {
        // cheap images; only counts and slice bounds matter here
        let d = Dataset::new(vec![Image::zeros(); 60_000], vec![0; 60_000], SplitTag::Train).unwrap();
        let (train, val) = fold_split(&d, 10, 0).unwrap();
        assert_eq!(val.len(), 6_000);
        assert_eq!(train.len(), 54_000);
        assert_eq!(val.split(), SplitTag::FoldDerived);

        let d = numbered(600);
        let (_, val) = fold_split(&d, 10, 0).unwrap();
        assert_eq!(ids(&val), (0..60).collect::<Vec<_>>());
    }

    #[test]
    fn last_fold_of_ten() {
        let d = numbered(10);
        let (train, val) = fold_split(&d, 10, 9).unwrap();
        assert_eq!(ids(&val), vec![9]);
        assert_eq!(ids(&train), (0..9).collect::<Vec<_>>());
    }

    #[test]
    fn fold_errors() {
        let d = numbered(10);
        assert!(matches!(
            fold_split(&d, 3, 0),
            Err(Error::IndivisibleFold { len: 10, folds: 3 })
        ));
        assert!(matches!(
            fold_split(&d, 0, 0),
            Err(Error::IndivisibleFold { .. })
        ));
        assert!(matches!(
            fold_split(&d, 5, 5),
            Err(Error::FoldOutOfRange { index: 5, folds: 5 })
        ));
    }

    #[test]
    fn prefix_truncates_in_file_order() {
        let d = numbered(20);
        assert_eq!(ids(&d.prefix(5)), vec![0, 1, 2, 3, 4]);
        assert_eq!(d.prefix(100).len(), 20);
    }

    proptest! {
        #[test]
        fn folds_partition_in_order(folds in 1usize..8, per_fold in 1usize..6) {
            let d = numbered(folds * per_fold);
            let mut concatenated = Vec::new();
            for i in 0..folds {
                let (train, val) = fold_split(&d, folds, i).unwrap();
                prop_assert_eq!(train.len() + val.len(), d.len());
                let mut all = ids(&train);
                all.extend(ids(&val));
                all.sort_unstable();
                prop_assert_eq!(all, (0..d.len()).collect::<Vec<_>>());
                concatenated.extend(ids(&val));
            }
            prop_assert_eq!(concatenated, (0..d.len()).collect::<Vec<_>>());
        }
    }
}
