//! Stacked autoencoder: greedy layerwise pretraining of encoder/decoder
//! pairs with shrinking code sizes, plus supervised fine-tuning with a
//! classifier head built from the encoder weights.

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ffnn::{batch_rows, train_feedforward, FeedForwardModel, Layer, OutputKind};
use super::{
    class_index, distinct_labels, dropout_mask, glorot_uniform, Activation, ModelKind, TrainConfig,
};
use crate::data::DataTable;
use crate::error::{Error, Result};
use crate::splits::SplitPlan;

/// One autoencoder level: encoder (code x in) and decoder (in x code).
/// The decoder output is linear; the encoder uses the stack's activation.
#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderLevel {
    pub encoder: Layer,
    pub decoder: Layer,
}

impl AutoencoderLevel {
    pub fn input_dim(&self) -> usize {
        self.encoder.weights.ncols()
    }

    pub fn code_dim(&self) -> usize {
        self.encoder.weights.nrows()
    }
}

/// A greedily pretrained stack of autoencoders.
#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderStack {
    pub levels: Vec<AutoencoderLevel>,
    pub activation: Activation,
}

impl AutoencoderStack {
    /// Shape invariants: each decoder inverts its encoder, and level k's
    /// input is level k-1's code.
    pub fn check_shapes(&self) -> Result<()> {
        for (k, level) in self.levels.iter().enumerate() {
            let enc = level.encoder.weights.dim();
            let dec = level.decoder.weights.dim();
            if enc.0 != dec.1 || enc.1 != dec.0 {
                return Err(Error::invalid(format!(
                    "level {k}: decoder {dec:?} does not invert encoder {enc:?}"
                )));
            }
            if k > 0 && self.levels[k - 1].code_dim() != level.input_dim() {
                return Err(Error::DimensionMismatch {
                    what: format!("level {k} input"),
                    expected: self.levels[k - 1].code_dim(),
                    got: level.input_dim(),
                });
            }
        }
        Ok(())
    }

    fn encode_level(&self, level: &AutoencoderLevel, x: &Array2<f64>) -> Array2<f64> {
        (x.dot(&level.encoder.weights.t()) + &level.encoder.biases)
            .mapv(|v| self.activation.apply(v))
    }

    fn decode_level(&self, level: &AutoencoderLevel, code: &Array2<f64>) -> Array2<f64> {
        code.dot(&level.decoder.weights.t()) + &level.decoder.biases
    }

    /// Deepest code for a batch.
    pub fn encode(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut h = x.clone();
        for level in &self.levels {
            h = self.encode_level(level, &h);
        }
        h
    }

    /// Encode through every level, then decode back out.
    pub fn reconstruct(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut h = x.clone();
        for level in &self.levels {
            h = self.encode_level(level, &h);
        }
        for level in self.levels.iter().rev() {
            h = self.decode_level(level, &h);
        }
        h
    }

    /// Mean squared reconstruction error of the full stack.
    pub fn reconstruction_mse(&self, x: &Array2<f64>) -> f64 {
        let r = self.reconstruct(x);
        let diff = &r - x;
        diff.iter().map(|v| v * v).sum::<f64>() / diff.len() as f64
    }
}

/// Greedy layerwise pretraining: level k learns to reconstruct level k-1's
/// codes under mean squared error. Visible dropout corrupts the inputs
/// (denoising); hidden dropout is applied to the codes.
pub fn sae_pretrain(data: &Array2<f64>, config: &TrainConfig) -> Result<AutoencoderStack> {
    sae_pretrain_strict(data, config, false)
}

/// [`sae_pretrain`] with an optional strict-compression check that rejects
/// any level whose code is at least as wide as its input.
///
/// `epochs = 0` returns the initialized, untrained stack.
pub fn sae_pretrain_strict(
    data: &Array2<f64>,
    config: &TrainConfig,
    strict_compression: bool,
) -> Result<AutoencoderStack> {
    config.validate_pretrain_for(ModelKind::Sae)?;
    if data.nrows() == 0 {
        return Err(Error::EmptyInput("no pretraining rows".into()));
    }
    if config.batch_size > data.nrows() {
        return Err(Error::invalid(format!(
            "batch_size {} exceeds data size {}",
            config.batch_size,
            data.nrows()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut stack = AutoencoderStack {
        levels: Vec::with_capacity(config.hidden_dims.len()),
        activation: config.activation,
    };
    let mut input = data.clone();
    for &code_dim in &config.hidden_dims {
        let in_dim = input.ncols();
        if strict_compression && code_dim >= in_dim {
            return Err(Error::invalid(format!(
                "code dim {code_dim} does not compress input dim {in_dim}"
            )));
        }
        let mut level = AutoencoderLevel {
            encoder: Layer {
                weights: glorot_uniform(code_dim, in_dim, &mut rng),
                biases: Array1::zeros(code_dim),
            },
            decoder: Layer {
                weights: glorot_uniform(in_dim, code_dim, &mut rng),
                biases: Array1::zeros(in_dim),
            },
        };
        train_level(&stack, &mut level, &input, config, &mut rng)?;
        // the next level reconstructs this level's clean codes
        input = stack.encode_level(&level, &input);
        stack.levels.push(level);
        stack.check_shapes()?;
    }
    Ok(stack)
}

/// SGD on one level's reconstruction MSE.
fn train_level(
    stack: &AutoencoderStack,
    level: &mut AutoencoderLevel,
    data: &Array2<f64>,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    use rand::seq::SliceRandom;
    let n = data.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..config.epochs {
        order.shuffle(rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let clean = batch_rows(data, chunk);
            let corrupted = if config.visible_dropout > 0.0 {
                &clean * &dropout_mask(clean.nrows(), clean.ncols(), config.visible_dropout, rng)
            } else {
                clean.clone()
            };

            // forward
            let z = corrupted.dot(&level.encoder.weights.t()) + &level.encoder.biases;
            let mut code = z.mapv(|v| stack.activation.apply(v));
            let mask = if config.hidden_dropout > 0.0 {
                let m = dropout_mask(code.nrows(), code.ncols(), config.hidden_dropout, rng);
                code *= &m;
                Some(m)
            } else {
                None
            };
            let recon = code.dot(&level.decoder.weights.t()) + &level.decoder.biases;

            // batch loss: mean squared error over all cells
            let diff = &recon - &clean;
            let cells = diff.len() as f64;
            epoch_loss += diff.iter().map(|v| v * v).sum::<f64>() / cells;
            batches += 1.0;

            let d_recon = diff.mapv(|v| 2.0 * v / cells);
            let d_dec_w = d_recon.t().dot(&code);
            let d_dec_b = d_recon.sum_axis(ndarray::Axis(0));
            let mut d_code = d_recon.dot(&level.decoder.weights);
            if let Some(m) = &mask {
                d_code *= m;
            }
            let deriv = z.mapv(|v| {
                let a = stack.activation.apply(v);
                stack.activation.derivative(v, a)
            });
            let d_z = d_code * deriv;
            let d_enc_w = d_z.t().dot(&corrupted);
            let d_enc_b = d_z.sum_axis(ndarray::Axis(0));

            level
                .decoder
                .weights
                .scaled_add(-config.learning_rate, &d_dec_w);
            level.decoder.biases.scaled_add(-config.learning_rate, &d_dec_b);
            level
                .encoder
                .weights
                .scaled_add(-config.learning_rate, &d_enc_w);
            level.encoder.biases.scaled_add(-config.learning_rate, &d_enc_b);
        }
        if !(epoch_loss / batches).is_finite() {
            return Err(Error::Diverged { epoch });
        }
    }
    Ok(())
}

/// Put a classifier head on the deepest code and fine-tune the whole stack
/// by backpropagation. Returns the fine-tuned network and its loss trace.
pub fn sae_finetune_classify(
    stack: &AutoencoderStack,
    data: &DataTable,
    plan: &SplitPlan,
    config: &TrainConfig,
) -> Result<(FeedForwardModel, Vec<f64>)> {
    config.validate_for(ModelKind::Sae)?;
    stack.check_shapes()?;
    if stack.levels.is_empty() {
        return Err(Error::EmptyInput("stack has no levels".into()));
    }
    let label_values = distinct_labels(&data.labels());
    let (x, y) = data.select(&plan.train);
    if x.ncols() != stack.levels[0].input_dim() {
        return Err(Error::DimensionMismatch {
            what: "stack input".into(),
            expected: stack.levels[0].input_dim(),
            got: x.ncols(),
        });
    }
    let classes: Vec<usize> = y
        .iter()
        .map(|&v| class_index(&label_values, v))
        .collect::<Result<_>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n_classes = label_values.len().max(2);
    let top = stack.levels.last().unwrap().code_dim();
    let mut layers: Vec<Layer> = stack.levels.iter().map(|l| l.encoder.clone()).collect();
    layers.push(Layer {
        weights: glorot_uniform(n_classes, top, &mut rng),
        biases: Array1::zeros(n_classes),
    });
    let model = FeedForwardModel {
        layers,
        activation: stack.activation,
        output: OutputKind::SoftmaxMulticlass,
        label_values,
    };
    train_feedforward(model, &x, &classes, config, &mut rng)
}
