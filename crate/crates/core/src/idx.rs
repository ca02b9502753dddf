// SPDX-License-Identifier: Apache-2.0

//! Reader for the big-endian IDX container used by the MNIST distribution.
//!
//! Images use magic `0x00000803` with three dimensions `[count, 28, 28]`;
//! labels use magic `0x00000801` with one dimension `[count]`. The file length
//! must equal the header plus the product of the dimensions exactly.

use std::fs;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;

use crate::dataset::{Dataset, Label, SplitTag, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::image::{Image, IMAGE_LEN, SIDE};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

const GZIP_MAGIC: [u8; 2] = [0x1f, 0x8b];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxHeader {
    pub magic: u32,
    pub dims: Vec<u32>,
}

impl IdxHeader {
    pub fn header_len(&self) -> u64 {
        4 + 4 * self.dims.len() as u64
    }

    pub fn payload_len(&self) -> u64 {
        self.dims
            .iter()
            .fold(1u64, |acc, &d| acc.saturating_mul(u64::from(d)))
    }

    fn read(bytes: &[u8], expected_magic: u32, ndims: usize) -> Result<Self> {
        let magic = read_be_u32(bytes, 0).ok_or(Error::TruncatedFile {
            expected: 4,
            actual: bytes.len() as u64,
        })?;
        if magic != expected_magic {
            return Err(Error::BadMagic {
                expected: format!("{expected_magic:#010x}"),
                found: format!("{magic:#010x}"),
            });
        }
        let header_len = 4 + 4 * ndims;
        let dims = (0..ndims)
            .map(|i| read_be_u32(bytes, 4 + 4 * i))
            .collect::<Option<Vec<_>>>()
            .ok_or(Error::TruncatedFile {
                expected: header_len as u64,
                actual: bytes.len() as u64,
            })?;
        let header = IdxHeader { magic, dims };
        let expected = header.header_len().saturating_add(header.payload_len());
        if expected != bytes.len() as u64 {
            return Err(Error::TruncatedFile {
                expected,
                actual: bytes.len() as u64,
            });
        }
        Ok(header)
    }
}

fn read_be_u32(bytes: &[u8], at: usize) -> Option<u32> {
    let word = bytes.get(at..at + 4)?;
    Some(u32::from_be_bytes(word.try_into().ok()?))
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<Vec<Image>> {
    let header = IdxHeader::read(bytes, IMAGES_MAGIC, 3)?;
    let (rows, cols) = (header.dims[1], header.dims[2]);
    if rows as usize != SIDE || cols as usize != SIDE {
        return Err(Error::BadShape { rows, cols });
    }
    let payload = &bytes[header.header_len() as usize..];
    Ok(payload
        .chunks_exact(IMAGE_LEN)
        .map(|px| Image::from_slice(px).expect("chunk is one image"))
        .collect())
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<Label>> {
    let header = IdxHeader::read(bytes, LABELS_MAGIC, 1)?;
    let payload = &bytes[header.header_len() as usize..];
    if let Some((index, &value)) = payload
        .iter()
        .enumerate()
        .find(|(_, &b)| usize::from(b) >= NUM_CLASSES)
    {
        return Err(Error::BadLabel { index, value });
    }
    Ok(payload.to_vec())
}

/// Reads a file, inflating it first if it starts with the gzip magic.
pub fn read_maybe_gzip(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&GZIP_MAGIC) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

pub fn load_dataset(image_path: &Path, label_path: &Path, split: SplitTag) -> Result<Dataset> {
    let images = parse_idx_images(&read_maybe_gzip(image_path)?)?;
    let labels = parse_idx_labels(&read_maybe_gzip(label_path)?)?;
    Dataset::new(images, labels, split)
}

/// Serializes images and labels to IDX bytes. Used to build fixtures.
pub fn encode_idx_images(images: &[Image]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.len() * IMAGE_LEN);
    for word in [IMAGES_MAGIC, images.len() as u32, SIDE as u32, SIDE as u32] {
        out.extend_from_slice(&word.to_be_bytes());
    }
    for img in images {
        out.extend_from_slice(img.pixels());
    }
    out
}

pub fn encode_idx_labels(labels: &[Label]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn header(magic: u32, dims: &[u32]) -> Vec<u8> {
        let mut out = magic.to_be_bytes().to_vec();
        for d in dims {
            out.extend_from_slice(&d.to_be_bytes());
        }
        out
    }

    #[test]
    fn single_zero_image() {
        let mut bytes = header(IMAGES_MAGIC, &[1, 28, 28]);
        bytes.extend(std::iter::repeat_n(0, IMAGE_LEN));
        let images = parse_idx_images(&bytes).unwrap();
        assert_eq!(images, vec![Image::zeros()]);
    }

    #[test]
    fn label_magic_rejected_by_image_parser() {
        let mut bytes = header(LABELS_MAGIC, &[1]);
        bytes.push(3);
        assert!(matches!(parse_idx_images(&bytes), Err(Error::BadMagic { .. })));
        let bytes = header(IMAGES_MAGIC, &[0, 28, 28]);
        assert!(matches!(parse_idx_labels(&bytes), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn length_must_match_exactly() {
        let mut bytes = header(IMAGES_MAGIC, &[2, 28, 28]);
        bytes.extend(std::iter::repeat_n(0, IMAGE_LEN));
        assert!(matches!(
            parse_idx_images(&bytes),
            Err(Error::TruncatedFile { expected: 1584, actual: 800 })
        ));
        let mut bytes = header(LABELS_MAGIC, &[1]);
        bytes.extend([1, 2]);
        assert!(matches!(parse_idx_labels(&bytes), Err(Error::TruncatedFile { .. })));
        assert!(matches!(parse_idx_labels(&[]), Err(Error::TruncatedFile { .. })));
        assert!(matches!(parse_idx_images(&[0, 0, 8]), Err(Error::TruncatedFile { .. })));
    }

    #[test]
    fn non_28_shapes_rejected() {
        let mut bytes = header(IMAGES_MAGIC, &[1, 32, 32]);
        bytes.extend(std::iter::repeat_n(0, 32 * 32));
        assert!(matches!(
            parse_idx_images(&bytes),
            Err(Error::BadShape { rows: 32, cols: 32 })
        ));
    }

    #[test]
    fn huge_dims_do_not_overflow() {
        let bytes = header(IMAGES_MAGIC, &[u32::MAX, u32::MAX, u32::MAX]);
        assert!(matches!(parse_idx_images(&bytes), Err(Error::TruncatedFile { .. })));
    }

    #[test]
    fn labels_copied_and_range_checked() {
        let mut bytes = header(LABELS_MAGIC, &[3]);
        bytes.extend([5, 0, 4]);
        assert_eq!(parse_idx_labels(&bytes).unwrap(), vec![5, 0, 4]);

        let mut bytes = header(LABELS_MAGIC, &[2]);
        bytes.extend([1, 12]);
        assert!(matches!(
            parse_idx_labels(&bytes),
            Err(Error::BadLabel { index: 1, value: 12 })
        ));
    }

    #[test]
    fn load_pairs_files_and_inflates_gzip() {
        let dir = tempfile::tempdir().unwrap();
        let img_path = dir.path().join("images.idx3-ubyte.gz");
        let lbl_path = dir.path().join("labels.idx1-ubyte");
        let mut img = Image::zeros();
        img.set(3, 3, 99);

        let mut gz = flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::default());
        gz.write_all(&encode_idx_images(std::slice::from_ref(&img))).unwrap();
        fs::write(&img_path, gz.finish().unwrap()).unwrap();
        fs::write(&lbl_path, encode_idx_labels(&[6])).unwrap();

        let d = load_dataset(&img_path, &lbl_path, SplitTag::Test).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.get(0), Some((&img, 6)));
        assert_eq!(d.split(), SplitTag::Test);
    }

    #[test]
    fn load_reports_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let img_path = dir.path().join("i");
        let lbl_path = dir.path().join("l");
        fs::write(&img_path, encode_idx_images(&[Image::zeros(), Image::zeros()])).unwrap();
        fs::write(&lbl_path, encode_idx_labels(&[1, 2, 3])).unwrap();
        assert!(matches!(
            load_dataset(&img_path, &lbl_path, SplitTag::Train),
            Err(Error::CountMismatch { images: 2, labels: 3 })
        ));
        let missing = load_dataset(&dir.path().join("nope"), &lbl_path, SplitTag::Train).unwrap_err();
        assert!(missing.is_io());
    }

    proptest! {
        #[test]
        fn roundtrip(pixels in proptest::collection::vec(any::<u8>(), 0..4 * IMAGE_LEN),
                     seed_labels in proptest::collection::vec(0u8..10, 4)) {
            let images: Vec<Image> = pixels
                .chunks_exact(IMAGE_LEN)
                .map(|c| Image::from_slice(c).unwrap())
                .collect();
            let labels = seed_labels[..images.len()].to_vec();
            prop_assert_eq!(parse_idx_images(&encode_idx_images(&images)).unwrap(), images);
            prop_assert_eq!(parse_idx_labels(&encode_idx_labels(&labels)).unwrap(), labels);
        }

        #[test]
        fn parsers_are_total(bytes in proptest::collection::vec(any::<u8>(), 0..2048),
                             prefix in prop_oneof![Just(IMAGES_MAGIC), Just(LABELS_MAGIC), any::<u32>()]) {
            let mut input = prefix.to_be_bytes().to_vec();
            input.extend(bytes);
            // either Ok or one of the declared parse errors, never a panic
            match parse_idx_images(&input) {
                Ok(_) | Err(Error::BadMagic { .. } | Error::TruncatedFile { .. } | Error::BadShape { .. }) => {}
                Err(e) => prop_assert!(false, "undeclared error {e}"),
            }
            match parse_idx_labels(&input) {
                Ok(_) | Err(Error::BadMagic { .. } | Error::TruncatedFile { .. } | Error::BadLabel { .. }) => {}
                Err(e) => prop_assert!(false, "undeclared error {e}"),
            }
        }
    }
}
