//! IDX-format MNIST loader and the digit-pair task split.
//!
//! Images are kept as raw bytes and scaled to `[0, 1]` on extraction. The
//! domain-incremental split groups the digits into five tasks:
//! `("0","1"), ("2","3"), ("4","5"), ("6","7"), ("8","9")`.

use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;

use crate::error::{Error, Result};
use crate::matrix::{Matrix, Vector};

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

/// Number of digit-pair tasks.
pub const TASKS: usize = 5;

/// Task index of a digit label: consecutive pairs of digits share a task.
pub fn task_of_label(label: u8) -> usize {
    (label / 2) as usize
}

/// A labeled image set: train and test splits with raw pixel bytes.
#[derive(Clone, Debug)]
pub struct MnistData {
    train_images: Vec<u8>,
    train_labels: Vec<u8>,
    test_images: Vec<u8>,
    test_labels: Vec<u8>,
    /// Pixels per image (28 x 28 = 784 for the standard files).
    pub image_len: usize,
}

impl MnistData {
    /// Load the four standard IDX files (optionally gzipped) from a
    /// directory.
    pub fn load(dir: &Path) -> Result<Self> {
        let (train_images, train_len) =
            read_idx_images(&locate(dir, "train-images-idx3-ubyte")?)?;
        let train_labels = read_idx_labels(&locate(dir, "train-labels-idx1-ubyte")?)?;
        let (test_images, test_len) = read_idx_images(&locate(dir, "t10k-images-idx3-ubyte")?)?;
        let test_labels = read_idx_labels(&locate(dir, "t10k-labels-idx1-ubyte")?)?;
        if train_len != test_len {
            return Err(Error::DataFormat {
                path: dir.to_path_buf(),
                reason: format!(
                    "train and test images disagree on size ({train_len} vs {test_len} pixels)"
                ),
            });
        }
        let data = Self {
            train_images,
            train_labels,
            test_images,
            test_labels,
            image_len: train_len,
        };
        data.check_counts(dir)?;
        Ok(data)
    }

    fn check_counts(&self, dir: &Path) -> Result<()> {
        for (split, images, labels) in [
            ("train", self.train_images.len(), self.train_labels.len()),
            ("test", self.test_images.len(), self.test_labels.len()),
        ] {
            if images != labels * self.image_len {
                return Err(Error::DataFormat {
                    path: dir.to_path_buf(),
                    reason: format!(
                        "{split} split has {labels} labels but {} pixels per its header",
                        images
                    ),
                });
            }
            if labels == 0 {
                return Err(Error::DataFormat {
                    path: dir.to_path_buf(),
                    reason: format!("{split} split is empty"),
                });
            }
        }
        Ok(())
    }

    pub fn train_count(&self) -> usize {
        self.train_labels.len()
    }

    pub fn test_count(&self) -> usize {
        self.test_labels.len()
    }

    pub fn train_label(&self, idx: usize) -> u8 {
        self.train_labels[idx]
    }

    pub fn test_label(&self, idx: usize) -> u8 {
        self.test_labels[idx]
    }

    fn scaled(&self, bytes: &[u8], idx: usize) -> Vector {
        let start = idx * self.image_len;
        Vector::from_iterator(
            self.image_len,
            bytes[start..start + self.image_len].iter().map(|&b| b as f64 / 255.0),
        )
    }

    /// Image `idx` of the training split as a `[0, 1]`-scaled vector.
    pub fn train_image_scaled(&self, idx: usize) -> Vector {
        self.scaled(&self.train_images, idx)
    }

    pub fn test_image_scaled(&self, idx: usize) -> Vector {
        self.scaled(&self.test_images, idx)
    }

    /// One `[0, 1]`-scaled image per row.
    pub fn train_images_scaled(&self, indices: &[usize]) -> Matrix {
        rows_from(&self.train_images, self.image_len, indices)
    }

    pub fn test_images_scaled(&self, indices: &[usize]) -> Matrix {
        rows_from(&self.test_images, self.image_len, indices)
    }

    /// Indices of the training samples belonging to one digit-pair task.
    pub fn train_indices_for_task(&self, task: usize) -> Vec<usize> {
        indices_for_task(&self.train_labels, task)
    }

    pub fn test_indices_for_task(&self, task: usize) -> Vec<usize> {
        indices_for_task(&self.test_labels, task)
    }
}

fn rows_from(bytes: &[u8], image_len: usize, indices: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(indices.len(), image_len);
    for (row, &idx) in indices.iter().enumerate() {
        let start = idx * image_len;
        for (col, &b) in bytes[start..start + image_len].iter().enumerate() {
            out[(row, col)] = b as f64 / 255.0;
        }
    }
    out
}

fn indices_for_task(labels: &[u8], task: usize) -> Vec<usize> {
    labels
        .iter()
        .enumerate()
        .filter(|(_, &label)| task_of_label(label) == task)
        .map(|(i, _)| i)
        .collect()
}

/// Resolve an IDX file, accepting the plain name, a `.gz` suffix, and the
/// dotted `name.idx3-ubyte` spelling some mirrors use.
fn locate(dir: &Path, base: &str) -> Result<PathBuf> {
    let dotted = base.replacen("-idx", ".idx", 1);
    let candidates = [
        dir.join(base),
        dir.join(format!("{base}.gz")),
        dir.join(&dotted),
        dir.join(format!("{dotted}.gz")),
    ];
    for c in &candidates {
        if c.is_file() {
            return Ok(c.clone());
        }
    }
    Err(Error::Io {
        path: candidates[0].clone(),
        source: std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("no IDX file named {base}[.gz] in {}", dir.display()),
        ),
    })
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let wrap = |source| Error::Io { path: path.to_path_buf(), source };
    let mut file = File::open(path).map_err(wrap)?;
    let mut head = [0u8; 2];
    let got = file.read(&mut head).map_err(wrap)?;
    let mut raw = Vec::new();
    raw.extend_from_slice(&head[..got]);
    file.read_to_end(&mut raw).map_err(wrap)?;
    if raw.len() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..]).read_to_end(&mut out).map_err(wrap)?;
        return Ok(out);
    }
    Ok(raw)
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::DataFormat {
            path: path.to_path_buf(),
            reason: "truncated header".into(),
        })
}

fn read_idx_images(path: &Path) -> Result<(Vec<u8>, usize)> {
    let bytes = read_bytes(path)?;
    let magic = be_u32(&bytes, 0, path)?;
    if magic != IMAGE_MAGIC {
        return Err(Error::DataFormat {
            path: path.to_path_buf(),
            reason: format!("bad image magic {magic:#010x}"),
        });
    }
    let count = be_u32(&bytes, 4, path)? as usize;
    let rows = be_u32(&bytes, 8, path)? as usize;
    let cols = be_u32(&bytes, 12, path)? as usize;
    let image_len = rows * cols;
    let expected = 16 + count * image_len;
    if bytes.len() != expected {
        return Err(Error::DataFormat {
            path: path.to_path_buf(),
            reason: format!(
                "header promises {count} images of {rows}x{cols} ({expected} bytes) but the file has {}",
                bytes.len()
            ),
        });
    }
    Ok((bytes[16..].to_vec(), image_len))
}

fn read_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let bytes = read_bytes(path)?;
    let magic = be_u32(&bytes, 0, path)?;
    if magic != LABEL_MAGIC {
        return Err(Error::DataFormat {
            path: path.to_path_buf(),
            reason: format!("bad label magic {magic:#010x}"),
        });
    }
    let count = be_u32(&bytes, 4, path)? as usize;
    if bytes.len() != 8 + count {
        return Err(Error::DataFormat {
            path: path.to_path_buf(),
            reason: format!(
                "header promises {count} labels but the file has {} payload bytes",
                bytes.len().saturating_sub(8)
            ),
        });
    }
    let labels = bytes[8..].to_vec();
    if let Some(bad) = labels.iter().find(|&&l| l > 9) {
        return Err(Error::DataFormat {
            path: path.to_path_buf(),
            reason: format!("label {bad} outside 0..=9"),
        });
    }
    Ok(labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use flate2::write::GzEncoder;
    use flate2::Compression;
    use std::io::Write;

    fn write_images(path: &Path, images: &[[u8; 4]], gz: bool) {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
        bytes.extend_from_slice(&(images.len() as u32).to_be_bytes());
        bytes.extend_from_slice(&2u32.to_be_bytes());
        bytes.extend_from_slice(&2u32.to_be_bytes());
        for img in images {
            bytes.extend_from_slice(img);
        }
        write_maybe_gz(path, &bytes, gz);
    }

    fn write_labels(path: &Path, labels: &[u8], gz: bool) {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
        bytes.extend_from_slice(&(labels.len() as u32).to_be_bytes());
        bytes.extend_from_slice(labels);
        write_maybe_gz(path, &bytes, gz);
    }

    fn write_maybe_gz(path: &Path, bytes: &[u8], gz: bool) {
        if gz {
            let file = File::create(path).unwrap();
            let mut enc = GzEncoder::new(file, Compression::fast());
            enc.write_all(bytes).unwrap();
            enc.finish().unwrap();
        } else {
            std::fs::write(path, bytes).unwrap();
        }
    }

    fn fixture(dir: &Path, gz: bool) {
        let suffix = if gz { ".gz" } else { "" };
        write_images(
            &dir.join(format!("train-images-idx3-ubyte{suffix}")),
            &[[0, 128, 255, 64], [255, 0, 0, 0], [10, 20, 30, 40]],
            gz,
        );
        write_labels(&dir.join(format!("train-labels-idx1-ubyte{suffix}")), &[0, 7, 9], gz);
        write_images(
            &dir.join(format!("t10k-images-idx3-ubyte{suffix}")),
            &[[1, 2, 3, 4], [5, 6, 7, 8]],
            gz,
        );
        write_labels(&dir.join(format!("t10k-labels-idx1-ubyte{suffix}")), &[2, 3], gz);
    }

    #[test]
    fn loads_and_scales() {
        for gz in [false, true] {
            let dir = tempfile::tempdir().unwrap();
            fixture(dir.path(), gz);
            let data = MnistData::load(dir.path()).unwrap();
            assert_eq!(data.train_count(), 3);
            assert_eq!(data.test_count(), 2);
            assert_eq!(data.image_len, 4);
            let img = data.train_image_scaled(0);
            assert_eq!(img[0], 0.0);
            assert_eq!(img[2], 1.0);
            assert_eq!(img[1], 128.0 / 255.0);
            assert_eq!(data.train_image_scaled(1)[0], 1.0);
        }
    }

    #[test]
    fn task_split() {
        assert_eq!(task_of_label(0), 0);
        assert_eq!(task_of_label(1), 0);
        assert_eq!(task_of_label(7), 3);
        assert_eq!(task_of_label(9), 4);

        let dir = tempfile::tempdir().unwrap();
        fixture(dir.path(), false);
        let data = MnistData::load(dir.path()).unwrap();
        assert_eq!(data.train_indices_for_task(0), vec![0]);
        assert_eq!(data.train_indices_for_task(3), vec![1]);
        assert_eq!(data.train_indices_for_task(4), vec![2]);
        assert_eq!(data.test_indices_for_task(1), vec![0, 1]);
        assert!(data.train_indices_for_task(2).is_empty());
    }

    #[test]
    fn batch_extraction_matches_single() {
        let dir = tempfile::tempdir().unwrap();
        fixture(dir.path(), false);
        let data = MnistData::load(dir.path()).unwrap();
        let rows = data.train_images_scaled(&[2, 0]);
        assert_eq!(rows.row(0).transpose(), data.train_image_scaled(2));
        assert_eq!(rows.row(1).transpose(), data.train_image_scaled(0));
    }

    #[test]
    fn missing_file_error_names_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let err = MnistData::load(dir.path()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("train-images-idx3-ubyte"), "{msg}");
    }

    #[test]
    fn corrupt_headers_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        fixture(dir.path(), false);
        // Truncate the train images file.
        let path = dir.path().join("train-images-idx3-ubyte");
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 2]).unwrap();
        assert!(matches!(MnistData::load(dir.path()), Err(Error::DataFormat { .. })));

        // Wrong magic on the labels file.
        fixture(dir.path(), false);
        let path = dir.path().join("train-labels-idx1-ubyte");
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[3] = 0x99;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(MnistData::load(dir.path()), Err(Error::DataFormat { .. })));
    }

    #[test]
    fn count_mismatch_between_images_and_labels() {
        let dir = tempfile::tempdir().unwrap();
        fixture(dir.path(), false);
        write_labels(&dir.path().join("train-labels-idx1-ubyte"), &[0, 7], false);
        assert!(MnistData::load(dir.path()).is_err());
    }
}
