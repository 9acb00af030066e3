//! Synthetic classification data: ten Gaussian clusters in the unit cube,
//! balanced across classes and linearly separable by construction. Serves as
//! the offline stand-in when no image files are available.

use cbo::ensemble::stream_rng;
use cbo::objectives::LabeledDataset;
use rand::Rng;
use rand_distr::StandardNormal;

pub const BLOB_CLASSES: usize = 10;

/// Draws the train/test pair. Class `k` samples cluster around a fixed mean
/// vector drawn once from the seed; labels cycle `0..10` so every class holds
/// exactly (up to rounding) a tenth of each split.
pub fn synthetic_blobs(
    input_dim: usize,
    n_train: usize,
    n_test: usize,
    noise: f64,
    seed: u64,
) -> (LabeledDataset, LabeledDataset) {
    assert!(input_dim >= 1 && n_train >= 1 && n_test >= 1);
    let mut mean_rng = stream_rng(seed, 0);
    let mut means = vec![0.0; BLOB_CLASSES * input_dim];
    for m in means.iter_mut() {
        *m = mean_rng.gen_range(0.0..1.0);
    }

    let split = |count: usize, stream: u64| -> LabeledDataset {
        let mut rng = stream_rng(seed, stream);
        let mut features = Vec::with_capacity(count * input_dim);
        let mut labels = Vec::with_capacity(count);
        for i in 0..count {
            let class = i % BLOB_CLASSES;
            for d in 0..input_dim {
                let z: f64 = rng.sample(StandardNormal);
                let v = means[class * input_dim + d] + noise * z;
                features.push(v.clamp(0.0, 1.0));
            }
            labels.push(class);
        }
        LabeledDataset::new(features, labels, input_dim, BLOB_CLASSES)
            .expect("blob construction is shape-consistent")
    };

    (split(n_train, 1), split(n_test, 2))
}
