use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub const IMAGE_BYTES: usize = 3 * 32 * 32;
/// One label byte followed by the R, G and B planes, each row-major.
pub const RECORD_BYTES: usize = 1 + IMAGE_BYTES;

/// Labelled 32×32 RGB images. Pixels stay as raw bytes; tensors handed to
/// the network are scaled to `[0, 1]` by dividing by 255.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LabeledImageSet {
    pixels: Vec<u8>,
    labels: Vec<u8>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CifarPart {
    Train,
    Test,
}

impl LabeledImageSet {
    pub fn new(pixels: Vec<u8>, labels: Vec<u8>) -> Result<Self> {
        if pixels.len() != labels.len() * IMAGE_BYTES {
            return Err(Error::Shape(format!(
                "{} pixel bytes for {} images",
                pixels.len(),
                labels.len()
            )));
        }
        Ok(LabeledImageSet { pixels, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn image_bytes(&self, i: usize) -> &[u8] {
        &self.pixels[i * IMAGE_BYTES..(i + 1) * IMAGE_BYTES]
    }

    /// `[ids.len(), 3, 32, 32]` tensor of the chosen images, scaled to `[0, 1]`.
    pub fn batch<T: Scalar>(&self, ids: &[usize]) -> Tensor<T> {
        let scale = T::from_f64_lossy(1.0 / 255.0);
        let mut data = Vec::with_capacity(ids.len() * IMAGE_BYTES);
        for &i in ids {
            data.extend(self.image_bytes(i).iter().map(|&p| T::from_f64_lossy(f64::from(p)) * scale));
        }
        Tensor::from_vec(&[ids.len(), 3, 32, 32], data).expect("batch extents match data")
    }

    pub fn subset(&self, ids: &[usize]) -> Self {
        let mut pixels = Vec::with_capacity(ids.len() * IMAGE_BYTES);
        for &i in ids {
            pixels.extend_from_slice(self.image_bytes(i));
        }
        LabeledImageSet {
            pixels,
            labels: ids.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn extend(&mut self, other: &LabeledImageSet) {
        self.pixels.extend_from_slice(&other.pixels);
        self.labels.extend_from_slice(&other.labels);
    }

    /// Serializes in CIFAR-10 binary record layout.
    pub fn to_records(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.len() * RECORD_BYTES);
        for (i, &label) in self.labels.iter().enumerate() {
            out.push(label);
            out.extend_from_slice(self.image_bytes(i));
        }
        out
    }
}

/// Parses one CIFAR-10 binary batch file.
pub fn load_cifar_file(path: impl AsRef<Path>) -> Result<LabeledImageSet> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.is_empty() {
        log::warn!("{}: empty CIFAR file, no records", path.display());
    }
    let whole = bytes.len() / RECORD_BYTES;
    if bytes.len() % RECORD_BYTES != 0 {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            offset: (whole * RECORD_BYTES) as u64,
            len: bytes.len() as u64,
        });
    }
    let mut pixels = Vec::with_capacity(whole * IMAGE_BYTES);
    let mut labels = Vec::with_capacity(whole);
    for (record, chunk) in bytes.chunks_exact(RECORD_BYTES).enumerate() {
        if chunk[0] > 9 {
            return Err(Error::CorruptRecord {
                path: path.to_path_buf(),
                record,
                offset: (record * RECORD_BYTES) as u64,
                label: chunk[0],
            });
        }
        labels.push(chunk[0]);
        pixels.extend_from_slice(&chunk[1..]);
    }
    Ok(LabeledImageSet { pixels, labels })
}

pub fn write_cifar_file(path: impl AsRef<Path>, set: &LabeledImageSet) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, set.to_records()).map_err(|e| Error::io(path, e))
}

fn part_files(part: CifarPart) -> Vec<String> {
    match part {
        CifarPart::Train => (1..=5).map(|i| format!("data_batch_{i}.bin")).collect(),
        CifarPart::Test => vec!["test_batch.bin".to_string()],
    }
}

fn resolve_dir(dir: &Path) -> PathBuf {
    let nested = dir.join("cifar-10-batches-bin");
    if nested.is_dir() {
        nested
    } else {
        dir.to_path_buf()
    }
}

/// Loads the train (5 files, 50000 records) or test (10000 records) part
/// from a directory holding the extracted binary distribution.
pub fn load_cifar10(dir: impl AsRef<Path>, part: CifarPart) -> Result<LabeledImageSet> {
    let dir = resolve_dir(dir.as_ref());
    let mut set = LabeledImageSet::default();
    for name in part_files(part) {
        set.extend(&load_cifar_file(dir.join(name))?);
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_white_record() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.bin");
        let mut rec = vec![3u8];
        rec.extend(std::iter::repeat(255u8).take(IMAGE_BYTES));
        fs::write(&path, &rec).unwrap();
        let set = load_cifar_file(&path).unwrap();
        assert_eq!(set.labels(), &[3]);
        let t = set.batch::<f32>(&[0]);
        assert!(t.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn empty_file_has_no_records() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.bin");
        fs::write(&path, []).unwrap();
        assert!(load_cifar_file(&path).unwrap().is_empty());
    }

    #[test]
    fn truncated_file_reports_offset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cut.bin");
        fs::write(&path, vec![1u8; RECORD_BYTES + 100]).unwrap();
        match load_cifar_file(&path) {
            Err(Error::Truncated { offset, .. }) => assert_eq!(offset, RECORD_BYTES as u64),
            other => panic!("expected truncation error, got {other:?}"),
        }
    }

    #[test]
    fn bad_label_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.bin");
        let mut bytes = vec![0u8; 2 * RECORD_BYTES];
        bytes[RECORD_BYTES] = 10;
        fs::write(&path, bytes).unwrap();
        assert!(matches!(
            load_cifar_file(&path),
            Err(Error::CorruptRecord { record: 1, .. })
        ));
    }

    #[test]
    fn fixture_round_trip_reproduces_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fx.bin");
        let pixels: Vec<u8> = (0..3 * IMAGE_BYTES).map(|i| (i * 37 % 256) as u8).collect();
        let set = LabeledImageSet::new(pixels, vec![0, 9, 4]).unwrap();
        write_cifar_file(&path, &set).unwrap();
        let back = load_cifar_file(&path).unwrap();
        assert_eq!(back, set);
        assert_eq!(fs::read(&path).unwrap(), set.to_records());
    }
}
