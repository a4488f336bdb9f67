//! Fully connected feed-forward classifier trained with mini-batch SGD and
//! backpropagation. Also the fine-tuning engine reused by the SAE and DBN
//! classifier heads.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use serde::{Deserialize, Serialize};

use super::{
    class_index, cross_entropy, distinct_labels, dropout_mask, glorot_uniform, mean_rows, onehot,
    softmax_rows, Activation, ModelKind, TrainConfig,
};
use crate::data::DataTable;
use crate::error::{Error, Result};
use crate::splits::SplitPlan;

/// One dense layer: `out = act(x . weights^T + biases)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// Shape (fan_out, fan_in).
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
}

impl Layer {
    pub fn zeros_like(&self) -> Layer {
        Layer {
            weights: Array2::zeros(self.weights.dim()),
            biases: Array1::zeros(self.biases.len()),
        }
    }
}

/// How the final layer maps onto class scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    /// Single sigmoid unit, classes {0, 1}.
    SigmoidBinary,
    /// K softmax units; binary problems use K = 2.
    SoftmaxMulticlass,
}

/// A trained feed-forward network. The last layer is the classifier head;
/// earlier layers use `activation`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedForwardModel {
    pub layers: Vec<Layer>,
    pub activation: Activation,
    pub output: OutputKind,
    /// Original label value of every class index.
    pub label_values: Vec<f64>,
}

struct ForwardCache {
    /// Post-activation of every layer; index 0 is the input batch
    /// (after visible dropout, when training).
    activations: Vec<Array2<f64>>,
    /// Pre-activation of every layer.
    pre: Vec<Array2<f64>>,
    /// Inverted-dropout masks applied to hidden activations.
    masks: Vec<Option<Array2<f64>>>,
}

impl FeedForwardModel {
    /// Fresh Glorot-initialized network with the given layer widths.
    pub fn init(
        input_dim: usize,
        hidden_dims: &[usize],
        n_classes: usize,
        activation: Activation,
        label_values: Vec<f64>,
        rng: &mut impl Rng,
    ) -> Self {
        let mut dims = vec![input_dim];
        dims.extend_from_slice(hidden_dims);
        dims.push(n_classes);
        let layers = (1..dims.len())
            .map(|i| Layer {
                weights: glorot_uniform(dims[i], dims[i - 1], rng),
                biases: Array1::zeros(dims[i]),
            })
            .collect();
        FeedForwardModel {
            layers,
            activation,
            output: OutputKind::SoftmaxMulticlass,
            label_values,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.ncols()
    }

    pub fn n_classes(&self) -> usize {
        match self.output {
            OutputKind::SigmoidBinary => 2,
            OutputKind::SoftmaxMulticlass => self.layers.last().unwrap().weights.nrows(),
        }
    }

    fn check_width(&self, features: &Array2<f64>) -> Result<()> {
        if features.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                what: "feature width".into(),
                expected: self.input_dim(),
                got: features.ncols(),
            });
        }
        Ok(())
    }

    fn forward(
        &self,
        x: &Array2<f64>,
        dropout: Option<(&TrainConfig, &mut ChaCha8Rng)>,
    ) -> ForwardCache {
        let n_layers = self.layers.len();
        let mut activations = Vec::with_capacity(n_layers + 1);
        let mut pre = Vec::with_capacity(n_layers);
        let mut masks: Vec<Option<Array2<f64>>> = vec![None; n_layers];

        let mut dropout = dropout;
        let input = match &mut dropout {
            Some((cfg, rng)) if cfg.visible_dropout > 0.0 => {
                x * &dropout_mask(x.nrows(), x.ncols(), cfg.visible_dropout, rng)
            }
            _ => x.clone(),
        };
        activations.push(input);

        for (li, layer) in self.layers.iter().enumerate() {
            let z = activations[li].dot(&layer.weights.t()) + &layer.biases;
            let is_output = li == n_layers - 1;
            let mut a = if is_output {
                z.clone() // scores are produced by softmax/sigmoid downstream
            } else {
                z.mapv(|v| self.activation.apply(v))
            };
            if !is_output {
                if let Some((cfg, rng)) = &mut dropout {
                    if cfg.hidden_dropout > 0.0 {
                        let mask = dropout_mask(a.nrows(), a.ncols(), cfg.hidden_dropout, rng);
                        a *= &mask;
                        masks[li] = Some(mask);
                    }
                }
            }
            pre.push(z);
            activations.push(a);
        }
        ForwardCache {
            activations,
            pre,
            masks,
        }
    }

    fn scores_from_logits(&self, logits: &Array2<f64>) -> Array2<f64> {
        match self.output {
            OutputKind::SoftmaxMulticlass => softmax_rows(logits),
            OutputKind::SigmoidBinary => {
                let mut out = Array2::zeros((logits.nrows(), 2));
                for i in 0..logits.nrows() {
                    let p = 1.0 / (1.0 + (-logits[[i, 0]]).exp());
                    out[[i, 0]] = 1.0 - p;
                    out[[i, 1]] = p;
                }
                out
            }
        }
    }

    /// Class scores per row (non-negative, summing to 1).
    pub fn scores(&self, features: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_width(features)?;
        let cache = self.forward(features, None);
        Ok(self.scores_from_logits(cache.activations.last().unwrap()))
    }

    /// Predicted original label values plus class scores. Dropout is never
    /// applied at inference.
    pub fn predict(&self, features: &Array2<f64>) -> Result<(Vec<f64>, Array2<f64>)> {
        let scores = self.scores(features)?;
        let labels = scores
            .rows()
            .into_iter()
            .map(|row| {
                let mut best = 0;
                for (k, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = k;
                    }
                }
                self.label_values[best]
            })
            .collect();
        Ok((labels, scores))
    }

    /// Mean cross-entropy loss over a batch of class indices. Deterministic;
    /// the hook used by gradient verification.
    pub fn batch_loss(&self, features: &Array2<f64>, classes: &[usize]) -> Result<f64> {
        self.check_width(features)?;
        let scores = self.scores(features)?;
        Ok(cross_entropy(&scores, classes))
    }

    /// Mean analytic gradients of [`Self::batch_loss`] for every layer.
    pub fn batch_gradients(&self, features: &Array2<f64>, classes: &[usize]) -> Result<Vec<Layer>> {
        self.check_width(features)?;
        let cache = self.forward(features, None);
        Ok(self.backward(&cache, classes))
    }

    /// Backpropagate mean gradients from softmax cross-entropy.
    fn backward(&self, cache: &ForwardCache, classes: &[usize]) -> Vec<Layer> {
        let batch = classes.len() as f64;
        let n_layers = self.layers.len();
        let logits = cache.activations.last().unwrap();

        let mut delta = match self.output {
            OutputKind::SoftmaxMulticlass => {
                &softmax_rows(logits) - &onehot(classes, self.n_classes())
            }
            OutputKind::SigmoidBinary => {
                let mut d = Array2::zeros((classes.len(), 1));
                for (i, &c) in classes.iter().enumerate() {
                    let p = 1.0 / (1.0 + (-logits[[i, 0]]).exp());
                    d[[i, 0]] = p - c as f64;
                }
                d
            }
        };

        let mut grads: Vec<Layer> = self.layers.iter().map(Layer::zeros_like).collect();
        for li in (0..n_layers).rev() {
            grads[li].weights = delta.t().dot(&cache.activations[li]) / batch;
            grads[li].biases = mean_rows(&delta);
            if li > 0 {
                let mut upstream = delta.dot(&self.layers[li].weights);
                if let Some(mask) = &cache.masks[li - 1] {
                    upstream *= mask;
                }
                // activations[li] may carry a dropout mask, so the derivative
                // is recomputed from the pre-activation.
                let z = &cache.pre[li - 1];
                let deriv = z.mapv(|v| {
                    let av = self.activation.apply(v);
                    self.activation.derivative(v, av)
                });
                delta = upstream * deriv;
            }
        }
        grads
    }

    fn sgd_step(&mut self, grads: &[Layer], lr: f64) {
        for (layer, g) in self.layers.iter_mut().zip(grads) {
            layer.weights.scaled_add(-lr, &g.weights);
            layer.biases.scaled_add(-lr, &g.biases);
        }
    }
}

/// Train a feed-forward classifier on the plan's training rows. Returns the
/// model and the per-epoch mean loss trace.
pub fn ffnn_train(
    data: &DataTable,
    plan: &SplitPlan,
    config: &TrainConfig,
) -> Result<(FeedForwardModel, Vec<f64>)> {
    config.validate_for(ModelKind::Ffnn)?;
    let label_values = distinct_labels(&data.labels());
    let (x, y) = data.select(&plan.train);
    let classes: Vec<usize> = y
        .iter()
        .map(|&v| class_index(&label_values, v))
        .collect::<Result<_>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let model = FeedForwardModel::init(
        x.ncols(),
        &config.hidden_dims,
        label_values.len().max(2),
        config.activation,
        label_values,
        &mut rng,
    );
    train_feedforward(model, &x, &classes, config, &mut rng)
}

/// Shared SGD loop over an initialized network; used directly by the SAE and
/// DBN fine-tuning paths.
pub(crate) fn train_feedforward(
    mut model: FeedForwardModel,
    x: &Array2<f64>,
    classes: &[usize],
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(FeedForwardModel, Vec<f64>)> {
    let n = x.nrows();
    if n == 0 {
        return Err(Error::EmptyInput("empty training split".into()));
    }
    if config.batch_size > n {
        return Err(Error::invalid(format!(
            "batch_size {} exceeds training size {n}",
            config.batch_size
        )));
    }

    let mut trace = Vec::new();
    let mut best_loss = f64::INFINITY;
    let mut stale_epochs = 0usize;
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 0..config.max_epochs() {
        order.shuffle(rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let xb = batch_rows(x, chunk);
            let cb: Vec<usize> = chunk.iter().map(|&i| classes[i]).collect();
            let cache = model.forward(&xb, Some((config, rng)));
            let scores = model.scores_from_logits(cache.activations.last().unwrap());
            epoch_loss += cross_entropy(&scores, &cb);
            batches += 1.0;
            let grads = model.backward(&cache, &cb);
            model.sgd_step(&grads, config.learning_rate);
        }
        let mean_loss = epoch_loss / batches;
        if !mean_loss.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        trace.push(mean_loss);

        if mean_loss < best_loss - config.stopping.min_loss_delta {
            best_loss = mean_loss;
            stale_epochs = 0;
        } else {
            stale_epochs += 1;
            if stale_epochs > config.stopping.patience {
                break;
            }
        }
        best_loss = best_loss.min(mean_loss);
    }
    Ok((model, trace))
}

pub(crate) fn batch_rows(x: &Array2<f64>, rows: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((rows.len(), x.ncols()));
    for (r, &i) in rows.iter().enumerate() {
        out.row_mut(r).assign(&x.row(i));
    }
    out
}
