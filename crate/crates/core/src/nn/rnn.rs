//! Recurrent network with the state recurrence
//! `c_s = tanh(w_nn . p_s + w_in . i_s)` and linear readout `y = w_o . c_s`,
//! trained by backpropagation through time. Tabular rows are consumed one
//! feature per time step; the last state feeds the readout.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    class_index, distinct_labels, glorot_uniform, softmax_rows, ModelKind, TrainConfig,
};
use crate::data::DataTable;
use crate::error::{Error, Result};

/// Weights of a single-hidden-layer recurrent network.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentModel {
    /// Input-to-hidden, shape (hidden, input).
    pub w_in: Array2<f64>,
    /// Hidden-to-hidden recurrence, shape (hidden, hidden).
    pub w_nn: Array2<f64>,
    /// Hidden-to-output readout, shape (output, hidden).
    pub w_o: Array2<f64>,
    /// Original label value per class index (classification use).
    pub label_values: Vec<f64>,
}

impl RecurrentModel {
    pub fn new(w_in: Array2<f64>, w_nn: Array2<f64>, w_o: Array2<f64>) -> Result<Self> {
        if w_nn.nrows() != w_nn.ncols() {
            return Err(Error::DimensionMismatch {
                what: "w_nn must be square".into(),
                expected: w_nn.nrows(),
                got: w_nn.ncols(),
            });
        }
        if w_in.nrows() != w_nn.nrows() {
            return Err(Error::DimensionMismatch {
                what: "w_in rows vs hidden dim".into(),
                expected: w_nn.nrows(),
                got: w_in.nrows(),
            });
        }
        if w_o.ncols() != w_nn.nrows() {
            return Err(Error::DimensionMismatch {
                what: "w_o cols vs hidden dim".into(),
                expected: w_nn.nrows(),
                got: w_o.ncols(),
            });
        }
        Ok(RecurrentModel {
            w_in,
            w_nn,
            w_o,
            label_values: Vec::new(),
        })
    }

    pub fn init(
        input_dim: usize,
        hidden_dim: usize,
        output_dim: usize,
        rng: &mut impl rand::Rng,
    ) -> Self {
        RecurrentModel {
            w_in: glorot_uniform(hidden_dim, input_dim, rng),
            w_nn: glorot_uniform(hidden_dim, hidden_dim, rng),
            w_o: glorot_uniform(output_dim, hidden_dim, rng),
            label_values: Vec::new(),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_nn.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.w_in.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.w_o.nrows()
    }

    /// Hidden states h_1..h_L for a sequence, starting from a zero state.
    fn hidden_states(&self, steps: &Array2<f64>) -> Vec<Array1<f64>> {
        let mut states = Vec::with_capacity(steps.nrows());
        let mut prev = Array1::zeros(self.hidden_dim());
        for step in steps.rows() {
            let current = step_state(&self.w_nn, &self.w_in, &prev, &step.to_owned());
            states.push(current.clone());
            prev = current;
        }
        states
    }

    /// Per-step class scores for a sequence.
    pub fn step_scores(&self, steps: &Array2<f64>) -> Result<Array2<f64>> {
        if steps.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                what: "sequence input width".into(),
                expected: self.input_dim(),
                got: steps.ncols(),
            });
        }
        if steps.nrows() == 0 {
            return Err(Error::EmptyInput("empty sequence".into()));
        }
        let states = self.hidden_states(steps);
        let mut logits = Array2::zeros((states.len(), self.output_dim()));
        for (t, h) in states.iter().enumerate() {
            logits.row_mut(t).assign(&self.w_o.dot(h));
        }
        Ok(softmax_rows(&logits))
    }

    /// Predicted label from the final step of each sequence.
    pub fn predict_final(&self, sequences: &[Array2<f64>]) -> Result<Vec<f64>> {
        sequences
            .iter()
            .map(|steps| {
                let scores = self.step_scores(steps)?;
                let last = scores.row(scores.nrows() - 1);
                let mut best = 0;
                for (k, &v) in last.iter().enumerate() {
                    if v > last[best] {
                        best = k;
                    }
                }
                Ok(self
                    .label_values
                    .get(best)
                    .copied()
                    .unwrap_or(best as f64))
            })
            .collect()
    }

    /// Mean cross-entropy over every targeted step of the batch; the hook
    /// used by gradient verification.
    pub fn batch_loss(&self, examples: &[SequenceExample]) -> Result<f64> {
        let mut total = 0.0;
        let mut count = 0usize;
        for ex in examples {
            let scores = self.step_scores(&ex.steps)?;
            for (t, target) in ex.targets.iter().enumerate() {
                if let Some(c) = target {
                    total -= scores[[t, *c]].max(1e-300).ln();
                    count += 1;
                }
            }
        }
        if count == 0 {
            return Err(Error::EmptyInput("no targeted steps in batch".into()));
        }
        Ok(total / count as f64)
    }

    /// Analytic gradients of [`Self::batch_loss`] via full backpropagation
    /// through time.
    pub fn batch_gradients(
        &self,
        examples: &[SequenceExample],
    ) -> Result<(Array2<f64>, Array2<f64>, Array2<f64>)> {
        self.bptt_gradients(examples, None)
    }

    fn bptt_gradients(
        &self,
        examples: &[SequenceExample],
        truncation: Option<usize>,
    ) -> Result<(Array2<f64>, Array2<f64>, Array2<f64>)> {
        let mut d_in = Array2::zeros(self.w_in.dim());
        let mut d_nn = Array2::zeros(self.w_nn.dim());
        let mut d_o = Array2::zeros(self.w_o.dim());
        let mut count = 0usize;

        for ex in examples {
            let len = ex.steps.nrows();
            if len == 0 {
                return Err(Error::EmptyInput("empty sequence".into()));
            }
            if let Some(k) = truncation {
                if k == 0 || k > len {
                    return Err(Error::invalid(format!(
                        "truncation horizon {k} must be in 1..={len}"
                    )));
                }
            }
            let states = self.hidden_states(&ex.steps);
            let mut dh_next: Array1<f64> = Array1::zeros(self.hidden_dim());
            for t in (0..len).rev() {
                let mut dh = dh_next.clone();
                if let Some(c) = ex.targets[t] {
                    let logits = self.w_o.dot(&states[t]);
                    let mut dy = stable_softmax(&logits);
                    dy[c] -= 1.0;
                    count += 1;
                    d_o += &outer(&dy, &states[t]);
                    dh += &self.w_o.t().dot(&dy);
                }
                let dz = &dh * &states[t].mapv(|h| 1.0 - h * h);
                if t > 0 {
                    d_nn += &outer(&dz, &states[t - 1]);
                }
                d_in += &outer(&dz, &ex.steps.row(t).to_owned());
                // stop the flow at truncation-window boundaries
                let blocked = truncation.is_some_and(|k| t % k == 0);
                dh_next = if blocked {
                    Array1::zeros(self.hidden_dim())
                } else {
                    self.w_nn.t().dot(&dz)
                };
            }
        }
        if count == 0 {
            return Err(Error::EmptyInput("no targeted steps in batch".into()));
        }
        let scale = 1.0 / count as f64;
        Ok((d_in * scale, d_nn * scale, d_o * scale))
    }
}

/// One step of the recurrence: `c_s = tanh(w_nn . p_s + w_in . i_s)`.
pub fn rnn_step(model: &RecurrentModel, p_s: &Array1<f64>, i_s: &Array1<f64>) -> Result<Array1<f64>> {
    if p_s.len() != model.hidden_dim() {
        return Err(Error::DimensionMismatch {
            what: "previous state".into(),
            expected: model.hidden_dim(),
            got: p_s.len(),
        });
    }
    if i_s.len() != model.input_dim() {
        return Err(Error::DimensionMismatch {
            what: "input state".into(),
            expected: model.input_dim(),
            got: i_s.len(),
        });
    }
    Ok(step_state(&model.w_nn, &model.w_in, p_s, i_s))
}

/// Linear readout `y = w_o . c_s`.
pub fn rnn_output(model: &RecurrentModel, c_s: &Array1<f64>) -> Result<Array1<f64>> {
    if c_s.len() != model.hidden_dim() {
        return Err(Error::DimensionMismatch {
            what: "state".into(),
            expected: model.hidden_dim(),
            got: c_s.len(),
        });
    }
    Ok(model.w_o.dot(c_s))
}

fn step_state(
    w_nn: &Array2<f64>,
    w_in: &Array2<f64>,
    p_s: &Array1<f64>,
    i_s: &Array1<f64>,
) -> Array1<f64> {
    (w_nn.dot(p_s) + w_in.dot(i_s)).mapv(f64::tanh)
}

fn stable_softmax(z: &Array1<f64>) -> Array1<f64> {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut e = z.mapv(|v| (v - max).exp());
    let sum = e.sum();
    e /= sum;
    e
}

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    let mut out = Array2::zeros((a.len(), b.len()));
    for i in 0..a.len() {
        for j in 0..b.len() {
            out[[i, j]] = a[i] * b[j];
        }
    }
    out
}

/// One training sequence: step inputs (length x input_dim) and an optional
/// class target per step.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceExample {
    pub steps: Array2<f64>,
    pub targets: Vec<Option<usize>>,
}

impl SequenceExample {
    pub fn new(steps: Array2<f64>, targets: Vec<Option<usize>>) -> Result<Self> {
        if steps.nrows() == 0 {
            return Err(Error::EmptyInput("empty sequence".into()));
        }
        if targets.len() != steps.nrows() {
            return Err(Error::DimensionMismatch {
                what: "targets per step".into(),
                expected: steps.nrows(),
                got: targets.len(),
            });
        }
        Ok(SequenceExample { steps, targets })
    }

    /// A sequence classified only at its final step.
    pub fn classified(steps: Array2<f64>, class: usize) -> Result<Self> {
        let len = steps.nrows();
        let mut targets = vec![None; len];
        targets[len - 1] = Some(class);
        SequenceExample::new(steps, targets)
    }
}

/// Turn table rows into length-NF sequences of scalar steps, classified at
/// the last step. Returns the examples (in `indices` order) and the class
/// label values.
pub fn sequences_from_table(
    table: &DataTable,
    indices: &[usize],
) -> Result<(Vec<SequenceExample>, Vec<f64>)> {
    let label_values = distinct_labels(&table.labels());
    let feats = table.features();
    let mut examples = Vec::with_capacity(indices.len());
    for &i in indices {
        let row = feats.row(i);
        let steps = Array2::from_shape_vec((row.len(), 1), row.to_vec())
            .map_err(|e| Error::invalid(e.to_string()))?;
        let class = class_index(&label_values, table.labels()[i])?;
        examples.push(SequenceExample::classified(steps, class)?);
    }
    Ok((examples, label_values))
}

/// Train on sequences with mini-batch SGD over full-horizon BPTT.
pub fn rnn_train(
    examples: &[SequenceExample],
    n_classes: usize,
    config: &TrainConfig,
) -> Result<(RecurrentModel, Vec<f64>)> {
    rnn_train_truncated(examples, n_classes, config, None)
}

/// [`rnn_train`] with an explicit truncation horizon for the backward pass.
///
/// The state activation is always tanh, per the recurrence; the config's
/// `activation` field only affects the other model families.
pub fn rnn_train_truncated(
    examples: &[SequenceExample],
    n_classes: usize,
    config: &TrainConfig,
    truncation: Option<usize>,
) -> Result<(RecurrentModel, Vec<f64>)> {
    config.validate_for(ModelKind::Rnn)?;
    if examples.is_empty() {
        return Err(Error::EmptyInput("no training sequences".into()));
    }
    let input_dim = examples[0].steps.ncols();
    if examples.iter().any(|e| e.steps.ncols() != input_dim) {
        return Err(Error::invalid("sequences have mixed input widths"));
    }
    if config.batch_size > examples.len() {
        return Err(Error::invalid(format!(
            "batch_size {} exceeds number of sequences {}",
            config.batch_size,
            examples.len()
        )));
    }

    let hidden_dim = config.hidden_dims[0];
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = RecurrentModel::init(input_dim, hidden_dim, n_classes.max(2), &mut rng);

    let mut trace = Vec::new();
    let mut best_loss = f64::INFINITY;
    let mut stale = 0usize;
    let mut order: Vec<usize> = (0..examples.len()).collect();

    for epoch in 0..config.max_epochs() {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<SequenceExample> =
                chunk.iter().map(|&i| examples[i].clone()).collect();
            epoch_loss += model.batch_loss(&batch)?;
            batches += 1.0;
            let (d_in, d_nn, d_o) = model.bptt_gradients(&batch, truncation)?;
            model.w_in.scaled_add(-config.learning_rate, &d_in);
            model.w_nn.scaled_add(-config.learning_rate, &d_nn);
            model.w_o.scaled_add(-config.learning_rate, &d_o);
        }
        let mean_loss = epoch_loss / batches;
        if !mean_loss.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        trace.push(mean_loss);
        if mean_loss < best_loss - config.stopping.min_loss_delta {
            stale = 0;
        } else {
            stale += 1;
            if stale > config.stopping.patience {
                break;
            }
        }
        best_loss = best_loss.min(mean_loss);
    }
    Ok((model, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn scalar_model(w_nn: f64, w_in: f64, w_o: f64) -> RecurrentModel {
        RecurrentModel::new(
            array![[w_in]],
            array![[w_nn]],
            array![[w_o]],
        )
        .unwrap()
    }

    #[test]
    fn step_with_zero_weights_is_zero() {
        let m0 = scalar_model(0.0, 0.0, 0.0);
        let c0 = rnn_step(&m0, &array![5.0], &array![-3.0]).unwrap();
        assert_eq!(c0, array![0.0]);
        // with only the input path active, the step is tanh(w_in * i_s)
        let m = scalar_model(0.0, 1.0, 1.0);
        let c = rnn_step(&m, &array![0.7], &array![0.3]).unwrap();
        assert_eq!(c, array![(0.3f64).tanh()]);
    }

    #[test]
    fn scalar_step_matches_tanh() {
        let m = scalar_model(0.0, 1.0, 2.0);
        let c = rnn_step(&m, &array![0.0], &array![0.5]).unwrap();
        assert!((c[0] - 0.46211715726000974).abs() < 1e-12);
        assert!((c[0] - 0.46211716).abs() < 1e-7);
        let y = rnn_output(&m, &c).unwrap();
        assert!((y[0] - 0.92423432).abs() < 1e-7);
    }

    #[test]
    fn state_is_bounded_by_tanh_range() {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = RecurrentModel::init(4, 6, 2, &mut rng);
        let mut state = Array1::zeros(6);
        for _ in 0..50 {
            let input = Array1::from_shape_fn(4, |_| rng.random_range(-5.0..5.0));
            state = rnn_step(&m, &state, &input).unwrap();
            assert!(state.iter().all(|&v| v.abs() < 1.0));
        }
    }

    #[test]
    fn identity_readout_returns_state() {
        let m = RecurrentModel::new(
            Array2::zeros((2, 3)),
            Array2::zeros((2, 2)),
            ndarray::Array2::eye(2),
        )
        .unwrap();
        let c = array![0.25, -0.5];
        assert_eq!(rnn_output(&m, &c).unwrap(), c);
        assert_eq!(rnn_output(&m, &Array1::<f64>::zeros(2)).unwrap(), Array1::<f64>::zeros(2));
    }

    #[test]
    fn mismatched_dims_are_construction_errors() {
        assert!(RecurrentModel::new(
            Array2::zeros((3, 1)),
            Array2::zeros((2, 2)),
            Array2::zeros((1, 2)),
        )
        .is_err());
        assert!(RecurrentModel::new(
            Array2::zeros((2, 1)),
            Array2::zeros((2, 3)),
            Array2::zeros((1, 2)),
        )
        .is_err());
    }

    #[test]
    fn step_rejects_wrong_dims() {
        let m = scalar_model(0.0, 1.0, 1.0);
        assert!(rnn_step(&m, &array![0.0, 0.0], &array![1.0]).is_err());
        assert!(rnn_output(&m, &array![0.0, 0.0]).is_err());
    }

    fn cycle_examples(n_windows: usize, window: usize) -> Vec<SequenceExample> {
        // period-3 cycle 0,1,2,0,1,2,... as one-hot steps; target = next token
        let mut examples = Vec::new();
        for start in 0..n_windows {
            let mut steps = Array2::zeros((window, 3));
            let mut targets = Vec::with_capacity(window);
            for t in 0..window {
                let tok = (start + t) % 3;
                steps[[t, tok]] = 1.0;
                targets.push(Some((tok + 1) % 3));
            }
            examples.push(SequenceExample::new(steps, targets).unwrap());
        }
        examples
    }

    #[test]
    fn learns_period_three_cycle() {
        let examples = cycle_examples(3, 12);
        let cfg = TrainConfig::new(0.5, 3, 400, vec![8]).with_seed(5);
        let (model, trace) = rnn_train(&examples, 3, &cfg).unwrap();
        // next-token accuracy over a fresh window
        let eval = cycle_examples(1, 30);
        let scores = model.step_scores(&eval[0].steps).unwrap();
        let mut correct = 0;
        for (t, target) in eval[0].targets.iter().enumerate() {
            let row = scores.row(t);
            let mut best = 0;
            for (k, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = k;
                }
            }
            if Some(best) == *target {
                correct += 1;
            }
        }
        let acc = correct as f64 / eval[0].targets.len() as f64;
        assert!(acc >= 0.95, "next-token accuracy {acc}, trace tail {:?}", trace.last());
    }

    #[test]
    fn training_is_deterministic() {
        let examples = cycle_examples(2, 9);
        let cfg = TrainConfig::new(0.3, 2, 30, vec![4]).with_seed(1);
        let (a, ta) = rnn_train(&examples, 3, &cfg).unwrap();
        let (b, tb) = rnn_train(&examples, 3, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
    }

    #[test]
    fn gradients_match_finite_differences_through_three_steps() {
        use rand::{Rng, SeedableRng};
        for seed in 0..3u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let steps = Array2::from_shape_fn((3, 2), |_| rng.random_range(-1.0..1.0));
            let ex = SequenceExample::new(
                steps,
                vec![Some(0), Some(1), Some(0)],
            )
            .unwrap();
            let mut model = RecurrentModel::init(2, 4, 2, &mut rng);
            let (d_in, d_nn, d_o) = model.batch_gradients(std::slice::from_ref(&ex)).unwrap();
            let eps = 1e-5;
            let mut check = |mat: fn(&mut RecurrentModel) -> &mut Array2<f64>,
                             grad: &Array2<f64>,
                             name: &str| {
                for idx in 0..grad.len() {
                    let (r, c) = (idx / grad.ncols(), idx % grad.ncols());
                    let orig = mat(&mut model)[[r, c]];
                    mat(&mut model)[[r, c]] = orig + eps;
                    let up = model.batch_loss(std::slice::from_ref(&ex)).unwrap();
                    mat(&mut model)[[r, c]] = orig - eps;
                    let down = model.batch_loss(std::slice::from_ref(&ex)).unwrap();
                    mat(&mut model)[[r, c]] = orig;
                    let numeric = (up - down) / (2.0 * eps);
                    let analytic = grad[[r, c]];
                    let denom = numeric.abs().max(analytic.abs()).max(1e-8);
                    assert!(
                        (numeric - analytic).abs() / denom < 1e-4,
                        "{name} ({r},{c}): {analytic} vs {numeric}"
                    );
                }
            };
            check(|m| &mut m.w_in, &d_in, "w_in");
            check(|m| &mut m.w_nn, &d_nn, "w_nn");
            check(|m| &mut m.w_o, &d_o, "w_o");
        }
    }

    #[test]
    fn empty_sequences_rejected() {
        let cfg = TrainConfig::new(0.1, 1, 5, vec![4]);
        assert!(rnn_train(&[], 2, &cfg).is_err());
        assert!(SequenceExample::new(Array2::zeros((0, 2)), vec![]).is_err());
    }

    #[test]
    fn truncation_horizon_validated() {
        let ex = SequenceExample::classified(Array2::zeros((4, 1)), 0).unwrap();
        let cfg = TrainConfig::new(0.1, 1, 2, vec![2]);
        assert!(rnn_train_truncated(std::slice::from_ref(&ex), 2, &cfg, Some(9)).is_err());
        assert!(rnn_train_truncated(&[ex], 2, &cfg, Some(2)).is_ok());
    }
}
