//! CIFAR-10 binary batches: each record is one label byte followed by 3072
//! pixel bytes (1024 red, 1024 green, 1024 blue, each 32×32 row-major).
//!
//! Pixels are mapped to `[0, 1]` and standardized per channel with
//! mean `(0.4914, 0.4822, 0.4465)` and standard deviation
//! `(0.2470, 0.2435, 0.2616)`.

use std::path::Path;

use super::dataset::ImageDataset;
use crate::error::{Error, Result};

pub const RECORD_LEN: usize = 1 + 3 * 32 * 32;
pub const CLASSES: usize = 10;
pub const CHANNEL_MEAN: [f64; 3] = [0.4914, 0.4822, 0.4465];
pub const CHANNEL_STD: [f64; 3] = [0.2470, 0.2435, 0.2616];
pub const TRAIN_FILES: [&str; 5] = [
    "data_batch_1.bin",
    "data_batch_2.bin",
    "data_batch_3.bin",
    "data_batch_4.bin",
    "data_batch_5.bin",
];
pub const TEST_FILE: &str = "test_batch.bin";

const PLANE: usize = 32 * 32;

/// Parses the records of one batch file.
pub fn parse_records(bytes: &[u8], file: &Path) -> Result<ImageDataset> {
    if !bytes.len().is_multiple_of(RECORD_LEN) {
        let offset = (bytes.len() / RECORD_LEN * RECORD_LEN) as u64;
        return Err(Error::Format {
            file: file.to_path_buf(),
            offset,
            message: format!(
                "truncated record ({} of {RECORD_LEN} bytes)",
                bytes.len() % RECORD_LEN
            ),
        });
    }
    let count = bytes.len() / RECORD_LEN;
    let mut images = Vec::with_capacity(count * 3 * PLANE);
    let mut labels = Vec::with_capacity(count);
    for (i, rec) in bytes.chunks_exact(RECORD_LEN).enumerate() {
        let label = rec[0] as usize;
        if label >= CLASSES {
            return Err(Error::Format {
                file: file.to_path_buf(),
                offset: (i * RECORD_LEN) as u64,
                message: format!("label byte {label} outside [0, {CLASSES})"),
            });
        }
        labels.push(label);
        for (c, plane) in rec[1..].chunks_exact(PLANE).enumerate() {
            images.extend(
                plane
                    .iter()
                    .map(|&b| ((b as f64 / 255.0 - CHANNEL_MEAN[c]) / CHANNEL_STD[c]) as f32),
            );
        }
    }
    ImageDataset::new(images, vec![3, 32, 32], labels, CLASSES)
}

pub fn load_cifar10_file(path: &Path) -> Result<ImageDataset> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_records(&bytes, path)
}

/// Loads the five training batches followed by the test batch (60000 images
/// for the full dataset).
pub fn load_cifar10(dir: &Path) -> Result<ImageDataset> {
    let parts = TRAIN_FILES
        .iter()
        .chain(std::iter::once(&TEST_FILE))
        .map(|f| load_cifar10_file(&dir.join(f)))
        .collect::<Result<Vec<_>>>()?;
    ImageDataset::concat(&parts)
}

/// Serializes a dataset of `3×32×32` images back to the binary record format.
pub fn to_cifar_bytes(data: &ImageDataset) -> Result<Vec<u8>> {
    if data.sample_shape() != [3, 32, 32] {
        return Err(Error::shape("cifar serialization", [3, 32, 32], data.sample_shape()));
    }
    let mut out = Vec::with_capacity(data.len() * RECORD_LEN);
    for i in 0..data.len() {
        out.push(data.labels()[i] as u8);
        for (c, plane) in data.sample(i).chunks_exact(PLANE).enumerate() {
            out.extend(plane.iter().map(|&v| {
                let px = ((v as f64) * CHANNEL_STD[c] + CHANNEL_MEAN[c]) * 255.0;
                px.round().clamp(0.0, 255.0) as u8
            }));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn records(n: usize) -> Vec<u8> {
        let mut out = Vec::new();
        for i in 0..n {
            out.push((i % 10) as u8);
            out.extend((0..3 * PLANE).map(|p| ((p * 7 + i * 13) % 256) as u8));
        }
        out
    }

    #[test]
    fn parse_and_reserialize() {
        let bytes = records(3);
        let ds = parse_records(&bytes, Path::new("mem")).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.labels(), &[0, 1, 2]);
        assert_eq!(to_cifar_bytes(&ds).unwrap(), bytes);
    }

    #[test]
    fn truncated_file_reports_offset() {
        let mut bytes = records(2);
        bytes.truncate(RECORD_LEN + 100);
        match parse_records(&bytes, Path::new("data_batch_9.bin")) {
            Err(Error::Format { file, offset, .. }) => {
                assert_eq!(file, Path::new("data_batch_9.bin"));
                assert_eq!(offset, RECORD_LEN as u64);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_label_rejected() {
        let mut bytes = records(1);
        bytes[0] = 10;
        assert!(matches!(parse_records(&bytes, Path::new("x")), Err(Error::Format { offset: 0, .. })));
    }

    #[test]
    fn missing_directory_names_file() {
        let err = load_cifar10(Path::new("/nonexistent-cifar")).unwrap_err();
        assert!(err.to_string().contains("data_batch_1.bin"));
    }
}
