//! Benchmark objectives exercised by the experiment harness.

mod oscillatory;
mod rastrigin;
mod softmax;

pub use oscillatory::Oscillatory;
pub use rastrigin::Rastrigin;
pub use softmax::{
    cross_entropy, softmax_forward, test_accuracy, LabeledDataset, SoftmaxNet,
};
