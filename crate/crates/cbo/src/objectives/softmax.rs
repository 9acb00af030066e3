//! Linear softmax classifier: `f(x, input) = softmax(relu(theta * input + bias))`.
//!
//! Parameters are flattened as `x = [theta row-major (K x p), bias (K)]`,
//! giving dimension `K * p + K`. The training loss is the mean cross entropy
//! over the dataset.

use crate::error::{CboError, Result};
use crate::objective::Objective;

/// Probabilities are clamped here before taking logs.
const PROB_FLOOR: f64 = 1e-12;

/// Immutable feature/label storage shared by training and test splits.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    features: Vec<f64>,
    labels: Vec<usize>,
    input_dim: usize,
    n_classes: usize,
}

impl LabeledDataset {
    pub fn new(
        features: Vec<f64>,
        labels: Vec<usize>,
        input_dim: usize,
        n_classes: usize,
    ) -> Result<Self> {
        if input_dim == 0 || n_classes == 0 {
            return Err(CboError::InvalidConfig(
                "dataset needs input_dim >= 1 and n_classes >= 1".into(),
            ));
        }
        if labels.is_empty() || features.len() != labels.len() * input_dim {
            return Err(CboError::DimensionMismatch {
                expected: labels.len() * input_dim,
                got: features.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&c| c >= n_classes) {
            return Err(CboError::InvalidConfig(format!(
                "label {bad} out of range for {n_classes} classes"
            )));
        }
        Ok(Self {
            features,
            labels,
            input_dim,
            n_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn sample(&self, i: usize) -> (&[f64], usize) {
        (
            &self.features[i * self.input_dim..(i + 1) * self.input_dim],
            self.labels[i],
        )
    }

    /// Fraction of samples carrying the given label.
    pub fn class_frequency(&self, class: usize) -> f64 {
        self.labels.iter().filter(|&&c| c == class).count() as f64 / self.labels.len() as f64
    }
}

/// Class probabilities for one input under the flattened parameter vector.
///
/// Logits are rectified, then exponentiated relative to their maximum so large
/// biases cannot overflow. The output sums to one.
pub fn softmax_forward(
    params: &[f64],
    input: &[f64],
    input_dim: usize,
    n_classes: usize,
) -> Result<Vec<f64>> {
    if params.len() != n_classes * input_dim + n_classes {
        return Err(CboError::DimensionMismatch {
            expected: n_classes * input_dim + n_classes,
            got: params.len(),
        });
    }
    if input.len() != input_dim {
        return Err(CboError::DimensionMismatch {
            expected: input_dim,
            got: input.len(),
        });
    }

    let bias_start = n_classes * input_dim;
    let mut logits = vec![0.0; n_classes];
    for (k, logit) in logits.iter_mut().enumerate() {
        let row = &params[k * input_dim..(k + 1) * input_dim];
        let z: f64 = row.iter().zip(input).map(|(w, v)| w * v).sum::<f64>()
            + params[bias_start + k];
        *logit = z.max(0.0);
    }

    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for logit in logits.iter_mut() {
        *logit = (*logit - max).exp();
        total += *logit;
    }
    for logit in logits.iter_mut() {
        *logit /= total;
    }
    Ok(logits)
}

/// `-sum_k y_k log(f_k)` for a one-hot `y`, i.e. `-log f_{hot}` with the
/// probability clamped at `1e-12`.
pub fn cross_entropy(probs: &[f64], one_hot: &[f64]) -> Result<f64> {
    if probs.len() != one_hot.len() {
        return Err(CboError::DimensionMismatch {
            expected: probs.len(),
            got: one_hot.len(),
        });
    }
    let mut hot = None;
    for (k, &y) in one_hot.iter().enumerate() {
        if y == 1.0 {
            if hot.is_some() {
                return Err(CboError::InvalidConfig("label is not one-hot".into()));
            }
            hot = Some(k);
        } else if y != 0.0 {
            return Err(CboError::InvalidConfig("label is not one-hot".into()));
        }
    }
    let hot = hot.ok_or_else(|| CboError::InvalidConfig("label is not one-hot".into()))?;
    Ok(-probs[hot].max(PROB_FLOOR).ln())
}

/// Fraction of test samples whose highest-probability class (ties to the
/// lowest index) matches the label.
pub fn test_accuracy(params: &[f64], test: &LabeledDataset) -> Result<f64> {
    if test.is_empty() {
        return Err(CboError::EmptySubset);
    }
    let mut correct = 0usize;
    for i in 0..test.len() {
        let (input, label) = test.sample(i);
        let probs = softmax_forward(params, input, test.input_dim(), test.n_classes())?;
        let mut arg = 0;
        for (k, &p) in probs.iter().enumerate() {
            if p > probs[arg] {
                arg = k;
            }
        }
        if arg == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / test.len() as f64)
}

/// The classifier's training loss as a finite-sum objective.
#[derive(Debug, Clone)]
pub struct SoftmaxNet {
    train: LabeledDataset,
}

impl SoftmaxNet {
    pub fn new(train: LabeledDataset) -> Self {
        Self { train }
    }

    pub fn train_set(&self) -> &LabeledDataset {
        &self.train
    }

    pub fn param_dim(&self) -> usize {
        self.train.n_classes() * self.train.input_dim() + self.train.n_classes()
    }
}

impl Objective for SoftmaxNet {
    fn dim(&self) -> usize {
        self.param_dim()
    }

    fn eval_full(&self, x: &[f64]) -> f64 {
        let sum: f64 = (0..self.train.len()).map(|i| self.eval_sample(x, i)).sum();
        sum / self.train.len() as f64
    }

    fn n_samples(&self) -> usize {
        self.train.len()
    }

    fn eval_sample(&self, x: &[f64], i: usize) -> f64 {
        let (input, label) = self.train.sample(i);
        let probs = softmax_forward(x, input, self.train.input_dim(), self.train.n_classes())
            .expect("parameter layout mismatch");
        -probs[label].max(PROB_FLOOR).ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_dataset() -> LabeledDataset {
        // 4 samples, 3 features, 10 classes; labels 0, 1, 2, 0.
        let features = vec![
            1.0, 0.0, 0.0, //
            0.0, 1.0, 0.0, //
            0.0, 0.0, 1.0, //
            0.5, 0.5, 0.0,
        ];
        LabeledDataset::new(features, vec![0, 1, 2, 0], 3, 10).unwrap()
    }

    #[test]
    fn zero_parameters_give_uniform_probabilities() {
        let params = vec![0.0; 10 * 3 + 10];
        let probs = softmax_forward(&params, &[0.3, -0.2, 0.9], 3, 10).unwrap();
        for p in &probs {
            assert!((p - 0.1).abs() < 1e-15);
        }
    }

    #[test]
    fn large_bias_saturates_class_zero() {
        let mut params = vec![0.0; 10 * 3 + 10];
        params[30] = 100.0;
        let probs = softmax_forward(&params, &[1.0, 1.0, 1.0], 3, 10).unwrap();
        assert!(probs[0] >= 1.0 - 1e-40);
    }

    #[test]
    fn probabilities_sum_to_one() {
        let mut params = vec![0.0; 10 * 3 + 10];
        for (i, p) in params.iter_mut().enumerate() {
            *p = ((i * 37 % 19) as f64 - 9.0) * 0.37;
        }
        let probs = softmax_forward(&params, &[0.1, 0.2, 0.3], 3, 10).unwrap();
        let total: f64 = probs.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(probs.iter().all(|&p| p > 0.0 && p <= 1.0));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let params = vec![0.0; 10 * 3 + 10];
        assert!(softmax_forward(&params, &[1.0, 2.0], 3, 10).is_err());
        assert!(softmax_forward(&params[..20], &[1.0, 2.0, 3.0], 3, 10).is_err());
    }

    #[test]
    fn cross_entropy_reference_values() {
        let uniform = vec![0.1; 10];
        let mut y = vec![0.0; 10];
        y[4] = 1.0;
        let v = cross_entropy(&uniform, &y).unwrap();
        assert!((v - 10f64.ln()).abs() < 1e-12);
        assert!((v - 2.302585).abs() < 1e-6);

        let mut confident = vec![0.0; 10];
        confident[4] = 1.0;
        assert_eq!(cross_entropy(&confident, &y).unwrap(), 0.0);

        let mut half = vec![0.0; 10];
        half[0] = 0.5;
        half[1] = 0.5;
        let mut y0 = vec![0.0; 10];
        y0[0] = 1.0;
        let v = cross_entropy(&half, &y0).unwrap();
        assert!((v - 0.693147).abs() < 1e-6);
    }

    #[test]
    fn cross_entropy_rejects_non_one_hot() {
        let probs = vec![0.1; 10];
        assert!(cross_entropy(&probs, &vec![0.0; 10]).is_err());
        let mut two_hot = vec![0.0; 10];
        two_hot[1] = 1.0;
        two_hot[2] = 1.0;
        assert!(cross_entropy(&probs, &two_hot).is_err());
        let mut fractional = vec![0.0; 10];
        fractional[1] = 0.5;
        assert!(cross_entropy(&probs, &fractional).is_err());
    }

    #[test]
    fn accuracy_tie_break_hits_class_zero() {
        // Zero parameters tie all classes; argmax falls on class 0, so the
        // accuracy equals the class-0 frequency.
        let data = toy_dataset();
        let params = vec![0.0; 10 * 3 + 10];
        let acc = test_accuracy(&params, &data).unwrap();
        assert!((acc - data.class_frequency(0)).abs() < 1e-15);
        assert!((acc - 0.5).abs() < 1e-15);
    }

    #[test]
    fn accuracy_extremes() {
        let features = vec![1.0, 0.0, 0.0, 1.0];
        let data = LabeledDataset::new(features, vec![0, 1], 2, 2).unwrap();
        // Strong diagonal weights classify both samples correctly.
        let mut params = vec![0.0; 2 * 2 + 2];
        params[0] = 10.0;
        params[3] = 10.0;
        assert_eq!(test_accuracy(&params, &data).unwrap(), 1.0);
        // Swapped weights get both wrong.
        let mut swapped = vec![0.0; 2 * 2 + 2];
        swapped[1] = 10.0;
        swapped[2] = 10.0;
        assert_eq!(test_accuracy(&swapped, &data).unwrap(), 0.0);

        let single = LabeledDataset::new(vec![1.0, 0.0], vec![0], 2, 2).unwrap();
        assert_eq!(test_accuracy(&swapped, &single).unwrap(), 0.0);
    }

    #[test]
    fn empty_test_set_is_domain_error() {
        assert!(LabeledDataset::new(vec![], vec![], 3, 10).is_err());
    }

    #[test]
    fn finite_sum_consistency() {
        let data = toy_dataset();
        let net = SoftmaxNet::new(data);
        let mut x = vec![0.0; net.param_dim()];
        for (i, v) in x.iter_mut().enumerate() {
            *v = ((i % 7) as f64 - 3.0) * 0.21;
        }
        let n = net.n_samples();
        let mean: f64 = (0..n).map(|i| net.eval_sample(&x, i)).sum::<f64>() / n as f64;
        assert!((net.eval_full(&x) - mean).abs() <= 1e-12 * n as f64);
    }
}
