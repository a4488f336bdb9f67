//! Desk-scale trainers for the four model families: feed-forward networks,
//! recurrent networks, stacked autoencoders and RBM stacks (deep belief
//! networks). Plain mini-batch SGD, seed-deterministic throughout.

pub mod checkpoint;
mod ffnn;
mod rbm;
mod rnn;
mod sae;

pub use ffnn::{ffnn_train, FeedForwardModel, Layer, OutputKind};
pub use rbm::{dbn_classify, dbn_pretrain, dbn_pretrain_traced, rbm_cd1_update, Rbm, RbmStack};
pub use rnn::{
    rnn_output, rnn_step, rnn_train, sequences_from_table, RecurrentModel, SequenceExample,
};
pub use sae::{sae_finetune_classify, sae_pretrain, AutoencoderStack, AutoencoderLevel};

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The four model families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Ffnn,
    Rnn,
    Sae,
    Dbn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Ffnn, ModelKind::Rnn, ModelKind::Sae, ModelKind::Dbn];

    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Ffnn => "ffnn",
            ModelKind::Rnn => "rnn",
            ModelKind::Sae => "sae",
            ModelKind::Dbn => "dbn",
        }
    }

    /// Hidden dropout is tunable for DBN, FFNN and SAE only.
    pub fn supports_hidden_dropout(&self) -> bool {
        !matches!(self, ModelKind::Rnn)
    }

    /// Visible dropout is tunable for DBN and SAE only.
    pub fn supports_visible_dropout(&self) -> bool {
        matches!(self, ModelKind::Dbn | ModelKind::Sae)
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ffnn" => Ok(ModelKind::Ffnn),
            "rnn" => Ok(ModelKind::Rnn),
            "sae" => Ok(ModelKind::Sae),
            "dbn" => Ok(ModelKind::Dbn),
            other => Err(Error::invalid(format!("unknown model kind {other:?}"))),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Hidden-layer nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
    /// Identity; used for linear autoencoder levels.
    Linear,
}

impl Activation {
    pub fn apply(&self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
            Activation::Linear => z,
        }
    }

    /// Derivative expressed through the activation value `a = f(z)`
    /// (and `z` itself for relu).
    pub fn derivative(&self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            "linear" => Ok(Activation::Linear),
            other => Err(Error::invalid(format!("unknown activation {other:?}"))),
        }
    }
}

/// Decides when training is suspended: a hard epoch cap plus optional
/// patience on the epoch-loss trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoppingCriterion {
    pub max_epochs: usize,
    /// An epoch "improves" when it beats the best loss so far by at least
    /// this much.
    pub min_loss_delta: f64,
    /// Stop after this many consecutive non-improving epochs.
    pub patience: usize,
}

impl StoppingCriterion {
    pub fn max_epochs_only(max_epochs: usize) -> Self {
        StoppingCriterion {
            max_epochs,
            min_loss_delta: 0.0,
            patience: usize::MAX,
        }
    }
}

impl Default for StoppingCriterion {
    fn default() -> Self {
        StoppingCriterion::max_epochs_only(usize::MAX)
    }
}

/// One hyperparameter assignment for a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub hidden_dims: Vec<usize>,
    pub hidden_dropout: f64,
    pub visible_dropout: f64,
    pub activation: Activation,
    pub seed: u64,
    #[serde(default)]
    pub stopping: StoppingCriterion,
}

impl TrainConfig {
    pub fn new(learning_rate: f64, batch_size: usize, epochs: usize, hidden_dims: Vec<usize>) -> Self {
        TrainConfig {
            learning_rate,
            batch_size,
            epochs,
            hidden_dims,
            hidden_dropout: 0.0,
            visible_dropout: 0.0,
            activation: Activation::Sigmoid,
            seed: 0,
            stopping: StoppingCriterion::default(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    /// Epoch cap combining `epochs` with the stopping criterion.
    pub fn max_epochs(&self) -> usize {
        self.epochs.min(self.stopping.max_epochs)
    }

    /// Shared field checks plus the per-model dropout applicability rules.
    pub fn validate_for(&self, kind: ModelKind) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        self.validate_pretrain_for(kind)
    }

    /// Like [`Self::validate_for`] but allows `epochs = 0`, which the
    /// pretrainers interpret as "return the initialized, untrained stack".
    pub fn validate_pretrain_for(&self, kind: ModelKind) -> Result<()> {
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if self.hidden_dims.is_empty() || self.hidden_dims.contains(&0) {
            return Err(Error::invalid("hidden_dims must be non-empty and positive"));
        }
        if !(0.0..1.0).contains(&self.hidden_dropout) || !(0.0..1.0).contains(&self.visible_dropout) {
            return Err(Error::invalid("dropout fractions must lie in [0, 1)"));
        }
        if self.hidden_dropout > 0.0 && !kind.supports_hidden_dropout() {
            return Err(Error::invalid(format!(
                "hidden dropout is not applicable to {kind}"
            )));
        }
        if self.visible_dropout > 0.0 && !kind.supports_visible_dropout() {
            return Err(Error::invalid(format!(
                "visible dropout is not applicable to {kind}"
            )));
        }
        Ok(())
    }
}

/// Fraction of predictions matching the truth.
pub fn accuracy(predicted: &[f64], truth: &[f64]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            what: "accuracy inputs".into(),
            expected: truth.len(),
            got: predicted.len(),
        });
    }
    if predicted.is_empty() {
        return Err(Error::EmptyInput("accuracy of empty input".into()));
    }
    let matches = predicted
        .iter()
        .zip(truth)
        .filter(|(a, b)| a == b)
        .count();
    Ok(matches as f64 / truth.len() as f64)
}

/// Sorted distinct label values; class `i` corresponds to `labels[i]`.
pub(crate) fn distinct_labels(labels: &[f64]) -> Vec<f64> {
    let mut distinct = labels.to_vec();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup();
    distinct
}

pub(crate) fn class_index(label_values: &[f64], v: f64) -> Result<usize> {
    label_values
        .binary_search_by(|x| x.partial_cmp(&v).unwrap())
        .map_err(|_| Error::invalid(format!("label {v} not seen during training")))
}

/// Uniform Glorot init in [-r, r], r = sqrt(6 / (fan_in + fan_out)).
pub(crate) fn glorot_uniform(rows: usize, cols: usize, rng: &mut impl Rng) -> Array2<f64> {
    let r = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-r..r))
}

/// Row-wise numerically stable softmax.
pub(crate) fn softmax_rows(z: &Array2<f64>) -> Array2<f64> {
    let mut out = z.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Mean cross-entropy of softmax scores against class indices.
pub(crate) fn cross_entropy(scores: &Array2<f64>, classes: &[usize]) -> f64 {
    let mut total = 0.0;
    for (i, &c) in classes.iter().enumerate() {
        total -= scores[[i, c]].max(1e-300).ln();
    }
    total / classes.len() as f64
}

/// Inverted-dropout mask: zeros with probability `p`, survivors scaled by
/// 1/(1-p) so inference needs no rescaling.
pub(crate) fn dropout_mask(rows: usize, cols: usize, p: f64, rng: &mut impl Rng) -> Array2<f64> {
    let keep = 1.0 - p;
    Array2::from_shape_fn((rows, cols), |_| {
        if rng.random::<f64>() < keep {
            1.0 / keep
        } else {
            0.0
        }
    })
}

pub(crate) fn onehot(classes: &[usize], n_classes: usize) -> Array2<f64> {
    let mut y = Array2::zeros((classes.len(), n_classes));
    for (i, &c) in classes.iter().enumerate() {
        y[[i, c]] = 1.0;
    }
    y
}

pub(crate) fn mean_rows(m: &Array2<f64>) -> Array1<f64> {
    let n = m.nrows() as f64;
    m.sum_axis(ndarray::Axis(0)) / n
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_basic_cases() {
        assert_eq!(accuracy(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(accuracy(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(
            accuracy(&[0.0, 1.0, 1.0, 0.0], &[0.0, 1.0, 0.0, 1.0]).unwrap(),
            0.5
        );
    }

    #[test]
    fn accuracy_rejects_bad_input() {
        assert!(accuracy(&[1.0], &[1.0, 2.0]).is_err());
        assert!(accuracy(&[], &[]).is_err());
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let z = ndarray::array![[1.0, 2.0, 3.0], [-5.0, 0.0, 5.0], [1e3, 1e3, 1e3]];
        let s = softmax_rows(&z);
        for row in s.rows() {
            let sum: f64 = row.sum();
            assert!((sum - 1.0).abs() < 1e-9);
            assert!(row.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn dropout_applicability_enforced() {
        let mut cfg = TrainConfig::new(0.1, 4, 10, vec![3]);
        cfg.hidden_dropout = 0.5;
        assert!(cfg.validate_for(ModelKind::Ffnn).is_ok());
        assert!(cfg.validate_for(ModelKind::Rnn).is_err());
        cfg.hidden_dropout = 0.0;
        cfg.visible_dropout = 0.5;
        assert!(cfg.validate_for(ModelKind::Ffnn).is_err());
        assert!(cfg.validate_for(ModelKind::Rnn).is_err());
        assert!(cfg.validate_for(ModelKind::Dbn).is_ok());
        assert!(cfg.validate_for(ModelKind::Sae).is_ok());
    }

    #[test]
    fn zero_epochs_rejected() {
        let cfg = TrainConfig::new(0.1, 4, 0, vec![3]);
        assert!(cfg.validate_for(ModelKind::Ffnn).is_err());
    }

    #[test]
    fn glorot_bound_respected() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let w = glorot_uniform(20, 30, &mut rng);
        let r = (6.0f64 / 50.0).sqrt();
        assert!(w.iter().all(|&v| v.abs() <= r));
    }
}
