//! Datasets: CIFAR-10 binary batches, synthetic Gaussian classes, augmentation.

mod augment;
mod cifar;
mod dataset;
mod synthetic;

pub use augment::{augment_batch, hflip, pad_crop, AugmentConfig};
pub use cifar::{
    load_cifar10, load_cifar10_file, parse_records, to_cifar_bytes, CHANNEL_MEAN, CHANNEL_STD,
    RECORD_LEN, TEST_FILE, TRAIN_FILES,
};
pub use dataset::ImageDataset;
pub use synthetic::{gen_synthetic, SyntheticSpec};
