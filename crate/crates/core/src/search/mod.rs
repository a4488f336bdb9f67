//! Hyperparameter search strategies over named axes: exhaustive grid,
//! budgeted uniform random sampling, and Nelder-Mead simplex descent.
//! Strategies generate their full assignment sequence up front so trials
//! can be evaluated by parallel workers; tie-breaking is by enumeration
//! order, keeping results deterministic.

mod nelder_mead;

pub use nelder_mead::{nelder_mead, NelderMeadResult};

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::nn::ModelKind;
use crate::error::{Error, Result};

/// A hyperparameter assignment: axis name to numeric value.
pub type Assignment = BTreeMap<String, f64>;

/// One axis of the search space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamAxis {
    pub name: String,
    pub domain: ParamDomain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamDomain {
    /// Finite value list, enumerated in order.
    Discrete(Vec<f64>),
    /// Closed real interval.
    Continuous { lo: f64, hi: f64 },
}

impl ParamAxis {
    pub fn discrete(name: impl Into<String>, values: Vec<f64>) -> Self {
        ParamAxis {
            name: name.into(),
            domain: ParamDomain::Discrete(values),
        }
    }

    pub fn continuous(name: impl Into<String>, lo: f64, hi: f64) -> Self {
        ParamAxis {
            name: name.into(),
            domain: ParamDomain::Continuous { lo, hi },
        }
    }

    /// Number of choices for a discrete axis.
    pub fn cardinality(&self) -> Option<usize> {
        match &self.domain {
            ParamDomain::Discrete(v) => Some(v.len()),
            ParamDomain::Continuous { .. } => None,
        }
    }
}

/// Named hyperparameter axes for one model kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpace {
    pub axes: Vec<ParamAxis>,
    pub model_kind: ModelKind,
}

impl ParamSpace {
    pub fn new(model_kind: ModelKind, axes: Vec<ParamAxis>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::invalid("a search space needs at least one axis"));
        }
        let mut names: Vec<&str> = axes.iter().map(|a| a.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != axes.len() {
            return Err(Error::invalid("axis names must be unique"));
        }
        for axis in &axes {
            match &axis.domain {
                ParamDomain::Discrete(v) if v.is_empty() => {
                    return Err(Error::invalid(format!("axis {:?} has no values", axis.name)));
                }
                ParamDomain::Continuous { lo, hi } if lo >= hi => {
                    return Err(Error::invalid(format!(
                        "axis {:?} needs lo < hi, got [{lo}, {hi}]",
                        axis.name
                    )));
                }
                _ => {}
            }
        }
        Ok(ParamSpace { axes, model_kind })
    }

    /// Product of discrete cardinalities; `None` if any axis is continuous.
    pub fn grid_size(&self) -> Option<usize> {
        self.axes.iter().map(|a| a.cardinality()).product()
    }

    /// True when `assignment` covers every axis with an in-domain value.
    pub fn contains(&self, assignment: &Assignment) -> bool {
        self.axes.len() == assignment.len()
            && self.axes.iter().all(|axis| {
                assignment.get(&axis.name).is_some_and(|v| match &axis.domain {
                    ParamDomain::Discrete(values) => values.contains(v),
                    ParamDomain::Continuous { lo, hi } => (lo..=hi).contains(&v),
                })
            })
    }
}

/// Search cost envelope: trial cap plus the prediction-volume scaling
/// of the complexity estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    pub max_trials: usize,
    /// Per-trial prediction volume V. V doubles as "targeted parameter
    /// volume" in the random-search complexity reading; the estimate
    /// reports the shared V/n factor so both glosses are available.
    pub prediction_volume: usize,
    pub iterations: usize,
}

impl Budget {
    pub fn trials(max_trials: usize) -> Self {
        Budget {
            max_trials,
            prediction_volume: 1,
            iterations: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_trials == 0 || self.prediction_volume == 0 || self.iterations == 0 {
            return Err(Error::invalid("budget fields must be positive"));
        }
        Ok(())
    }
}

/// Trial status; a diverged trial is recorded, not fatal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrialStatus {
    Ok,
    Diverged,
}

impl std::fmt::Display for TrialStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TrialStatus::Ok => "ok",
            TrialStatus::Diverged => "diverged",
        })
    }
}

impl std::str::FromStr for TrialStatus {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ok" => Ok(TrialStatus::Ok),
            "diverged" => Ok(TrialStatus::Diverged),
            other => Err(Error::invalid(format!("unknown trial status {other:?}"))),
        }
    }
}

/// One evaluated configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub assignment: Assignment,
    pub validation_accuracy: f64,
    pub test_accuracy: f64,
    pub wall_time: f64,
    pub loss_trace: Vec<f64>,
    pub status: TrialStatus,
}

impl TrialResult {
    /// A failed trial: accuracy zero, per the divergence policy.
    pub fn diverged(assignment: Assignment, wall_time: f64) -> Self {
        TrialResult {
            assignment,
            validation_accuracy: 0.0,
            test_accuracy: 0.0,
            wall_time,
            loss_trace: Vec::new(),
            status: TrialStatus::Diverged,
        }
    }
}

fn best_index(trials: &[TrialResult]) -> usize {
    let mut best = 0;
    for (i, t) in trials.iter().enumerate().skip(1) {
        if t.validation_accuracy > trials[best].validation_accuracy {
            best = i;
        }
    }
    best
}

/// Every point of the Cartesian product, first axis slowest, each evaluated
/// exactly once. Best trial by validation accuracy, earlier enumeration
/// winning ties.
pub fn grid_search(
    space: &ParamSpace,
    mut evaluate: impl FnMut(&Assignment) -> TrialResult,
) -> Result<(TrialResult, Vec<TrialResult>)> {
    let assignments = grid_assignments(space)?;
    let trials: Vec<TrialResult> = assignments.iter().map(&mut evaluate).collect();
    let best = best_index(&trials);
    Ok((trials[best].clone(), trials))
}

/// The grid's assignment sequence in enumeration order.
pub fn grid_assignments(space: &ParamSpace) -> Result<Vec<Assignment>> {
    let mut value_lists: Vec<(&str, &[f64])> = Vec::with_capacity(space.axes.len());
    for axis in &space.axes {
        match &axis.domain {
            ParamDomain::Discrete(values) => value_lists.push((&axis.name, values)),
            ParamDomain::Continuous { .. } => {
                return Err(Error::invalid(format!(
                    "grid search needs discrete axes; axis {:?} is continuous",
                    axis.name
                )));
            }
        }
    }
    let total: usize = value_lists.iter().map(|(_, v)| v.len()).product();
    let mut out = Vec::with_capacity(total);
    let mut counters = vec![0usize; value_lists.len()];
    for _ in 0..total {
        let assignment: Assignment = value_lists
            .iter()
            .zip(&counters)
            .map(|((name, values), &i)| (name.to_string(), values[i]))
            .collect();
        out.push(assignment);
        // odometer increment, last axis fastest
        for pos in (0..counters.len()).rev() {
            counters[pos] += 1;
            if counters[pos] < value_lists[pos].1.len() {
                break;
            }
            counters[pos] = 0;
        }
    }
    Ok(out)
}

/// `n_trials` independent uniform draws (duplicates permitted), deterministic
/// under `seed` and drawn up front, independent of evaluation order.
pub fn random_search(
    space: &ParamSpace,
    n_trials: usize,
    seed: u64,
    mut evaluate: impl FnMut(&Assignment) -> TrialResult,
) -> Result<(TrialResult, Vec<TrialResult>)> {
    let assignments = random_assignments(space, n_trials, seed)?;
    let trials: Vec<TrialResult> = assignments.iter().map(&mut evaluate).collect();
    let best = best_index(&trials);
    Ok((trials[best].clone(), trials))
}

/// The random strategy's assignment sequence.
pub fn random_assignments(
    space: &ParamSpace,
    n_trials: usize,
    seed: u64,
) -> Result<Vec<Assignment>> {
    if n_trials == 0 {
        return Err(Error::invalid("random search needs n_trials >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_trials);
    for _ in 0..n_trials {
        let assignment: Assignment = space
            .axes
            .iter()
            .map(|axis| {
                let v = match &axis.domain {
                    ParamDomain::Discrete(values) => values[rng.random_range(0..values.len())],
                    ParamDomain::Continuous { lo, hi } => rng.random_range(*lo..*hi),
                };
                (axis.name.clone(), v)
            })
            .collect();
        out.push(assignment);
    }
    Ok(out)
}

/// The per-model default spaces: learning rate 0.1..0.9, batch size (or
/// epochs for the recurrent net) 10..100, and hidden width 1..10.
pub fn default_space(kind: ModelKind) -> ParamSpace {
    let lr: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
    let tens: Vec<f64> = (1..=10).map(|i| (i * 10) as f64).collect();
    let units: Vec<f64> = (1..=10).map(|i| i as f64).collect();
    let axes = match kind {
        ModelKind::Rnn => vec![
            ParamAxis::discrete("learning_rate", lr),
            ParamAxis::discrete("numepochs", tens),
            ParamAxis::discrete("hidden_dim", units),
        ],
        _ => vec![
            ParamAxis::discrete("learning_rate", lr),
            ParamAxis::discrete("batch_size", tens),
            ParamAxis::discrete("hidden_nodes", units),
        ],
    };
    ParamSpace::new(kind, axes).expect("default space is well-formed")
}

/// The default learning-rate sweep grid: 208 uniformly spaced points over
/// [0.005, 0.823].
pub fn default_lr_grid() -> Vec<f64> {
    let n = 208;
    let (lo, hi) = (0.005f64, 0.823f64);
    let mut grid: Vec<f64> = (0..n)
        .map(|i| lo + i as f64 * (hi - lo) / (n - 1) as f64)
        .collect();
    grid[0] = lo;
    grid[n - 1] = hi;
    grid
}

/// Evaluate `evaluate` once per learning-rate value; all other
/// hyperparameters stay at their caller-side defaults. Returns the
/// (learning rate, mean accuracy) curve in grid order.
pub fn lr_sweep(
    lr_values: &[f64],
    mut evaluate: impl FnMut(f64) -> f64,
) -> Result<Vec<(f64, f64)>> {
    if lr_values.is_empty() {
        return Err(Error::EmptyInput("empty learning-rate grid".into()));
    }
    Ok(lr_values.iter().map(|&lr| (lr, evaluate(lr))).collect())
}

/// Which strategy a budget estimate is for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Grid,
    Random,
    NelderMead,
    LrSweep,
}

impl std::fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StrategyKind::Grid => "grid",
            StrategyKind::Random => "random",
            StrategyKind::NelderMead => "nelder_mead",
            StrategyKind::LrSweep => "lr_sweep",
        })
    }
}

impl std::str::FromStr for StrategyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "grid" => Ok(StrategyKind::Grid),
            "random" => Ok(StrategyKind::Random),
            "nelder_mead" => Ok(StrategyKind::NelderMead),
            "lr_sweep" => Ok(StrategyKind::LrSweep),
            other => Err(Error::invalid(format!("unknown strategy {other:?}"))),
        }
    }
}

/// Predicted evaluation count plus the V/n scaling factor shared by the
/// complexity estimates of both strategies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetEstimate {
    pub evaluations: usize,
    /// V/n: prediction volume per iteration. V is glossed both as the total
    /// number of predictions and as the targeted parameter volume; the same
    /// factor serves either reading.
    pub v_over_n: f64,
    /// evaluations scaled by V/n.
    pub scaled_cost: f64,
}

/// Evaluation count the strategy will spend on the space under the budget:
/// the full grid product for grid search, `max_trials` otherwise.
pub fn budget_estimate(
    space: &ParamSpace,
    budget: &Budget,
    strategy: StrategyKind,
) -> Result<BudgetEstimate> {
    budget.validate()?;
    let evaluations = match strategy {
        StrategyKind::Grid => space.grid_size().ok_or_else(|| {
            Error::invalid("grid budget needs a fully discrete space")
        })?,
        _ => budget.max_trials,
    };
    let v_over_n = budget.prediction_volume as f64 / budget.iterations as f64;
    Ok(BudgetEstimate {
        evaluations,
        v_over_n,
        scaled_cost: evaluations as f64 * v_over_n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn stub_eval(score: impl Fn(&Assignment) -> f64) -> impl FnMut(&Assignment) -> TrialResult {
        move |a: &Assignment| TrialResult {
            assignment: a.clone(),
            validation_accuracy: score(a),
            test_accuracy: score(a),
            wall_time: 0.0,
            loss_trace: Vec::new(),
            status: TrialStatus::Ok,
        }
    }

    #[test]
    fn default_ffnn_space_has_the_expected_axes() {
        let s = default_space(ModelKind::Ffnn);
        assert_eq!(s.axes.len(), 3);
        let cards: Vec<usize> = s.axes.iter().map(|a| a.cardinality().unwrap()).collect();
        assert_eq!(cards, vec![9, 10, 10]);
        assert_eq!(s.grid_size(), Some(900));
    }

    #[test]
    fn rnn_space_second_axis_is_numepochs() {
        let s = default_space(ModelKind::Rnn);
        assert_eq!(s.axes[1].name, "numepochs");
        assert_eq!(s.grid_size(), Some(900));
    }

    #[test]
    fn all_kinds_have_900_point_grids() {
        for kind in ModelKind::ALL {
            assert_eq!(default_space(kind).grid_size(), Some(900));
        }
    }

    #[test]
    fn grid_enumerates_single_axis_in_order() {
        let space = ParamSpace::new(
            ModelKind::Ffnn,
            vec![ParamAxis::discrete("learning_rate", vec![0.1, 0.2])],
        )
        .unwrap();
        let (_, trials) = grid_search(&space, stub_eval(|_| 0.5)).unwrap();
        assert_eq!(trials.len(), 2);
        assert_eq!(trials[0].assignment["learning_rate"], 0.1);
        assert_eq!(trials[1].assignment["learning_rate"], 0.2);
    }

    #[test]
    fn grid_covers_the_cartesian_product_exactly_once() {
        let space = ParamSpace::new(
            ModelKind::Ffnn,
            vec![
                ParamAxis::discrete("a", vec![1.0, 2.0, 3.0]),
                ParamAxis::discrete("b", vec![10.0, 20.0]),
            ],
        )
        .unwrap();
        let assignments = grid_assignments(&space).unwrap();
        assert_eq!(assignments.len(), 6);
        let seen: BTreeSet<String> = assignments.iter().map(|a| format!("{a:?}")).collect();
        assert_eq!(seen.len(), 6);
        let expected: BTreeSet<String> = [1.0, 2.0, 3.0]
            .iter()
            .flat_map(|&a| {
                [10.0, 20.0].iter().map(move |&b| {
                    let mut m = Assignment::new();
                    m.insert("a".into(), a);
                    m.insert("b".into(), b);
                    format!("{m:?}")
                })
            })
            .collect();
        assert_eq!(seen, expected);
    }

    #[test]
    fn grid_best_matches_brute_force_argmax() {
        let space = ParamSpace::new(
            ModelKind::Ffnn,
            vec![
                ParamAxis::discrete("x", (0..7).map(f64::from).collect()),
                ParamAxis::discrete("y", (0..5).map(f64::from).collect()),
            ],
        )
        .unwrap();
        // unique argmax at x=4, y=2
        let score = |a: &Assignment| {
            let (x, y) = (a["x"], a["y"]);
            1.0 - ((x - 4.0).powi(2) + (y - 2.0).powi(2)) / 100.0
        };
        let (best, trials) = grid_search(&space, stub_eval(score)).unwrap();
        let brute = trials
            .iter()
            .map(|t| t.validation_accuracy)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(best.validation_accuracy, brute);
        assert_eq!((best.assignment["x"], best.assignment["y"]), (4.0, 2.0));
    }

    #[test]
    fn grid_rejects_continuous_axes() {
        let space = ParamSpace::new(
            ModelKind::Ffnn,
            vec![ParamAxis::continuous("lr", 0.0, 1.0)],
        )
        .unwrap();
        assert!(grid_search(&space, stub_eval(|_| 0.0)).is_err());
    }

    #[test]
    fn grid_ties_break_to_earlier_trial() {
        let space = ParamSpace::new(
            ModelKind::Ffnn,
            vec![ParamAxis::discrete("x", vec![1.0, 2.0, 3.0])],
        )
        .unwrap();
        let (best, _) = grid_search(&space, stub_eval(|_| 0.7)).unwrap();
        assert_eq!(best.assignment["x"], 1.0);
    }

    #[test]
    fn random_search_draws_exactly_n_trials() {
        let space = default_space(ModelKind::Ffnn);
        let (_, trials) = random_search(&space, 50, 3, stub_eval(|_| 0.1)).unwrap();
        assert_eq!(trials.len(), 50);
        for t in &trials {
            assert!(space.contains(&t.assignment));
        }
    }

    #[test]
    fn random_search_is_seed_deterministic() {
        let space = default_space(ModelKind::Sae);
        let a = random_assignments(&space, 25, 9).unwrap();
        let b = random_assignments(&space, 25, 9).unwrap();
        assert_eq!(a, b);
        let c = random_assignments(&space, 25, 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn random_draws_are_roughly_uniform() {
        let space = ParamSpace::new(
            ModelKind::Ffnn,
            vec![ParamAxis::discrete("v", vec![0.0, 1.0])],
        )
        .unwrap();
        let assignments = random_assignments(&space, 10_000, 42).unwrap();
        let ones = assignments.iter().filter(|a| a["v"] == 1.0).count();
        // binomial 3-sigma bound around 5000
        assert!(
            (4700..=5300).contains(&ones),
            "{ones} ones out of 10000 draws"
        );
    }

    #[test]
    fn random_best_is_argmax_with_earlier_tie() {
        let space = ParamSpace::new(
            ModelKind::Dbn,
            vec![ParamAxis::continuous("x", 0.0, 1.0)],
        )
        .unwrap();
        let (best, trials) = random_search(&space, 40, 7, stub_eval(|a| a["x"])).unwrap();
        let max = trials
            .iter()
            .map(|t| t.validation_accuracy)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(best.validation_accuracy, max);
    }

    #[test]
    fn continuous_draws_stay_in_bounds() {
        let space = ParamSpace::new(
            ModelKind::Rnn,
            vec![ParamAxis::continuous("lr", 0.005, 0.823)],
        )
        .unwrap();
        for a in random_assignments(&space, 500, 1).unwrap() {
            assert!((0.005..0.823).contains(&a["lr"]));
        }
    }

    #[test]
    fn lr_grid_has_208_points_with_exact_bounds() {
        let grid = default_lr_grid();
        assert_eq!(grid.len(), 208);
        assert_eq!(grid[0], 0.005);
        assert_eq!(grid[207], 0.823);
        assert!(grid.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn lr_sweep_passes_values_through() {
        let grid = default_lr_grid();
        let curve = lr_sweep(&grid, |lr| lr * 2.0).unwrap();
        assert_eq!(curve.len(), 208);
        assert!(curve.windows(2).all(|w| w[0].1 < w[1].1));
        let flat = lr_sweep(&grid, |_| 0.4).unwrap();
        assert!(flat.iter().all(|&(_, acc)| acc == 0.4));
        assert!(lr_sweep(&[], |_| 0.0).is_err());
    }

    #[test]
    fn budget_estimates() {
        let uniform = ParamSpace::new(
            ModelKind::Ffnn,
            vec![
                ParamAxis::discrete("a", (0..10).map(f64::from).collect()),
                ParamAxis::discrete("b", (0..10).map(f64::from).collect()),
                ParamAxis::discrete("c", (0..10).map(f64::from).collect()),
            ],
        )
        .unwrap();
        let budget = Budget {
            max_trials: 50,
            prediction_volume: 30,
            iterations: 10,
        };
        let grid = budget_estimate(&uniform, &budget, StrategyKind::Grid).unwrap();
        assert_eq!(grid.evaluations, 1000);
        assert_eq!(grid.v_over_n, 3.0);
        assert_eq!(grid.scaled_cost, 3000.0);
        let random = budget_estimate(&uniform, &budget, StrategyKind::Random).unwrap();
        assert_eq!(random.evaluations, 50);
        let ffnn = budget_estimate(
            &default_space(ModelKind::Ffnn),
            &Budget::trials(50),
            StrategyKind::Grid,
        )
        .unwrap();
        assert_eq!(ffnn.evaluations, 900);
    }

    #[test]
    fn space_validation() {
        assert!(ParamSpace::new(ModelKind::Ffnn, vec![]).is_err());
        assert!(ParamSpace::new(
            ModelKind::Ffnn,
            vec![ParamAxis::discrete("a", vec![])]
        )
        .is_err());
        assert!(ParamSpace::new(
            ModelKind::Ffnn,
            vec![ParamAxis::continuous("a", 1.0, 1.0)]
        )
        .is_err());
        assert!(ParamSpace::new(
            ModelKind::Ffnn,
            vec![
                ParamAxis::discrete("a", vec![1.0]),
                ParamAxis::discrete("a", vec![2.0]),
            ]
        )
        .is_err());
    }

    proptest::proptest! {
        #[test]
        fn grid_multiset_equals_product(
            c1 in 1usize..5, c2 in 1usize..5, c3 in 1usize..4
        ) {
            let space = ParamSpace::new(ModelKind::Ffnn, vec![
                ParamAxis::discrete("a", (0..c1).map(|i| i as f64).collect()),
                ParamAxis::discrete("b", (0..c2).map(|i| i as f64).collect()),
                ParamAxis::discrete("c", (0..c3).map(|i| i as f64).collect()),
            ]).unwrap();
            let assignments = grid_assignments(&space).unwrap();
            assert_eq!(assignments.len(), c1 * c2 * c3);
            let unique: BTreeSet<String> =
                assignments.iter().map(|a| format!("{a:?}")).collect();
            assert_eq!(unique.len(), c1 * c2 * c3);
            for a in &assignments {
                assert!(space.contains(a));
            }
        }

        #[test]
        fn random_assignments_always_in_space(n in 1usize..60, seed in 0u64..100) {
            let space = default_space(ModelKind::Dbn);
            for a in random_assignments(&space, n, seed).unwrap() {
                assert!(space.contains(&a));
            }
        }
    }
}
