//! Restricted Boltzmann machines trained with one-step contrastive
//! divergence, stacked greedily into a deep belief network: each layer's
//! hidden probabilities feed the next layer's visible units. Supervised use
//! unrolls the stack into a feed-forward net with a classifier head.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ffnn::{batch_rows, train_feedforward, FeedForwardModel, Layer, OutputKind};
use super::{class_index, distinct_labels, glorot_uniform, Activation, ModelKind, TrainConfig};
use crate::data::DataTable;
use crate::error::{Error, Result};
use crate::splits::SplitPlan;

/// A single visible/hidden RBM with Bernoulli units.
#[derive(Debug, Clone, PartialEq)]
pub struct Rbm {
    /// Shape (visible, hidden).
    pub weights: Array2<f64>,
    pub visible_bias: Array1<f64>,
    pub hidden_bias: Array1<f64>,
}

impl Rbm {
    pub fn init(n_visible: usize, n_hidden: usize, rng: &mut impl Rng) -> Self {
        Rbm {
            weights: glorot_uniform(n_visible, n_hidden, rng),
            visible_bias: Array1::zeros(n_visible),
            hidden_bias: Array1::zeros(n_hidden),
        }
    }

    pub fn n_visible(&self) -> usize {
        self.weights.nrows()
    }

    pub fn n_hidden(&self) -> usize {
        self.weights.ncols()
    }

    /// P(h = 1 | v) for a batch of visible rows.
    pub fn hidden_probabilities(&self, visible: &Array2<f64>) -> Array2<f64> {
        (visible.dot(&self.weights) + &self.hidden_bias).mapv(sigmoid)
    }

    /// P(v = 1 | h) for a batch of hidden rows.
    pub fn visible_probabilities(&self, hidden: &Array2<f64>) -> Array2<f64> {
        (hidden.dot(&self.weights.t()) + &self.visible_bias).mapv(sigmoid)
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn check_unit_interval(batch: &Array2<f64>) -> Result<()> {
    for ((r, c), &v) in batch.indexed_iter() {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::invalid(format!(
                "cell ({r}, {c}) = {v} outside [0, 1]; Bernoulli units need unit-scaled input"
            )));
        }
    }
    Ok(())
}

/// One CD-1 step on a batch: positive phase from the data, negative phase
/// from a single Gibbs reconstruction. Returns the updated machine and the
/// mean squared reconstruction error. `learning_rate = 0` leaves the
/// parameters unchanged.
pub fn rbm_cd1_update(
    rbm: &Rbm,
    batch: &Array2<f64>,
    learning_rate: f64,
    seed: u64,
) -> Result<(Rbm, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = rbm.clone();
    let err = cd1_step(&mut out, batch, learning_rate, &mut rng)?;
    Ok((out, err))
}

fn cd1_step(
    rbm: &mut Rbm,
    batch: &Array2<f64>,
    learning_rate: f64,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    if batch.nrows() == 0 {
        return Err(Error::EmptyInput("empty CD-1 batch".into()));
    }
    if batch.ncols() != rbm.n_visible() {
        return Err(Error::DimensionMismatch {
            what: "visible units".into(),
            expected: rbm.n_visible(),
            got: batch.ncols(),
        });
    }
    check_unit_interval(batch)?;
    let b = batch.nrows() as f64;

    // positive phase
    let h_prob0 = rbm.hidden_probabilities(batch);
    let h_sample = h_prob0.mapv(|p| f64::from(rng.random::<f64>() < p));

    // negative phase: one Gibbs reconstruction, probabilities throughout
    let v_prob1 = rbm.visible_probabilities(&h_sample);
    let h_prob1 = rbm.hidden_probabilities(&v_prob1);

    let positive = batch.t().dot(&h_prob0);
    let negative = v_prob1.t().dot(&h_prob1);
    rbm.weights
        .scaled_add(learning_rate / b, &(&positive - &negative));
    let dv = (batch - &v_prob1).sum_axis(ndarray::Axis(0));
    let dh = (&h_prob0 - &h_prob1).sum_axis(ndarray::Axis(0));
    rbm.visible_bias.scaled_add(learning_rate / b, &dv);
    rbm.hidden_bias.scaled_add(learning_rate / b, &dh);

    let diff = batch - &v_prob1;
    Ok(diff.iter().map(|v| v * v).sum::<f64>() / diff.len() as f64)
}

/// Train one RBM with epochs of mini-batch CD-1; returns the per-epoch mean
/// reconstruction error trace.
pub fn train_rbm(
    rbm: &mut Rbm,
    data: &Array2<f64>,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    use rand::seq::SliceRandom;
    if config.batch_size > data.nrows() {
        return Err(Error::invalid(format!(
            "batch_size {} exceeds data size {}",
            config.batch_size,
            data.nrows()
        )));
    }
    let mut trace = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..data.nrows()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(rng);
        let mut epoch_err = 0.0;
        let mut batches = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let vb = batch_rows(data, chunk);
            epoch_err += cd1_step(rbm, &vb, config.learning_rate, rng)?;
            batches += 1.0;
        }
        let mean_err = epoch_err / batches;
        if !mean_err.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        trace.push(mean_err);
    }
    Ok(trace)
}

/// A greedily pretrained stack of RBMs.
#[derive(Debug, Clone, PartialEq)]
pub struct RbmStack {
    pub rbms: Vec<Rbm>,
}

impl RbmStack {
    /// Adjacent layers must agree: RBM k's visible width is RBM k-1's
    /// hidden width.
    pub fn check_shapes(&self) -> Result<()> {
        for k in 1..self.rbms.len() {
            if self.rbms[k].n_visible() != self.rbms[k - 1].n_hidden() {
                return Err(Error::DimensionMismatch {
                    what: format!("rbm {k} visible units"),
                    expected: self.rbms[k - 1].n_hidden(),
                    got: self.rbms[k].n_visible(),
                });
            }
        }
        Ok(())
    }

    /// Top-layer hidden probabilities for a batch.
    pub fn propagate(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut h = x.clone();
        for rbm in &self.rbms {
            h = rbm.hidden_probabilities(&h);
        }
        h
    }
}

/// Greedy layerwise pretraining: one RBM per hidden dim, each trained on the
/// previous layer's hidden probabilities. `epochs = 0` returns the
/// initialized, untrained stack. Input must be scaled to [0, 1].
pub fn dbn_pretrain(data: &Array2<f64>, config: &TrainConfig) -> Result<RbmStack> {
    Ok(dbn_pretrain_traced(data, config)?.0)
}

/// [`dbn_pretrain`] returning each layer's reconstruction-error trace.
pub fn dbn_pretrain_traced(
    data: &Array2<f64>,
    config: &TrainConfig,
) -> Result<(RbmStack, Vec<Vec<f64>>)> {
    config.validate_pretrain_for(ModelKind::Dbn)?;
    if data.nrows() == 0 {
        return Err(Error::EmptyInput("no pretraining rows".into()));
    }
    check_unit_interval(data).map_err(|_| Error::invalid("dbn_pretrain needs input scaled to [0, 1]"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut stack = RbmStack { rbms: Vec::new() };
    let mut traces = Vec::new();
    let mut input = data.clone();
    for &n_hidden in &config.hidden_dims {
        let mut rbm = Rbm::init(input.ncols(), n_hidden, &mut rng);
        let trace = if config.epochs > 0 {
            train_rbm(&mut rbm, &input, config, &mut rng)?
        } else {
            Vec::new()
        };
        input = rbm.hidden_probabilities(&input);
        stack.rbms.push(rbm);
        traces.push(trace);
        stack.check_shapes()?;
    }
    Ok((stack, traces))
}

/// Classifier head over the top hidden layer, fine-tuned end to end by
/// backpropagation through the unrolled stack (sigmoid layers initialized
/// from the RBM weights).
pub fn dbn_classify(
    stack: &RbmStack,
    data: &DataTable,
    plan: &SplitPlan,
    config: &TrainConfig,
) -> Result<(FeedForwardModel, Vec<f64>)> {
    config.validate_for(ModelKind::Dbn)?;
    stack.check_shapes()?;
    if stack.rbms.is_empty() {
        return Err(Error::EmptyInput("stack has no layers".into()));
    }
    let label_values = distinct_labels(&data.labels());
    let (x, y) = data.select(&plan.train);
    if x.ncols() != stack.rbms[0].n_visible() {
        return Err(Error::DimensionMismatch {
            what: "stack input".into(),
            expected: stack.rbms[0].n_visible(),
            got: x.ncols(),
        });
    }
    let classes: Vec<usize> = y
        .iter()
        .map(|&v| class_index(&label_values, v))
        .collect::<Result<_>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n_classes = label_values.len().max(2);
    let mut layers: Vec<Layer> = stack
        .rbms
        .iter()
        .map(|rbm| Layer {
            weights: rbm.weights.t().to_owned(),
            biases: rbm.hidden_bias.clone(),
        })
        .collect();
    let top = stack.rbms.last().unwrap().n_hidden();
    layers.push(Layer {
        weights: glorot_uniform(n_classes, top, &mut rng),
        biases: Array1::zeros(n_classes),
    });
    let model = FeedForwardModel {
        layers,
        // RBM hidden units are sigmoidal, so the unrolled net is too
        activation: Activation::Sigmoid,
        output: OutputKind::SoftmaxMulticlass,
        label_values,
    };
    train_feedforward(model, &x, &classes, config, &mut rng)
}
