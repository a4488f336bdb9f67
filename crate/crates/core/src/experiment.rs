//! Experiment orchestration: load and preprocess datasets, generate split
//! plans, drive a search strategy over every (dataset, model) pair with a
//! worker pool, and write the trial log plus report artifacts.
//!
//! Per-trial seeds derive from hash(master seed, dataset, model, trial
//! index), so adding datasets or models never perturbs existing trials.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{DatasetConfig, ExperimentConfig};
use crate::data::{self, DataTable, DatasetProfile, PreprocessOptions};
use crate::error::{Error, Result};
use crate::nn::{
    accuracy, dbn_classify, dbn_pretrain, ffnn_train, rnn_train, sae_finetune_classify,
    sae_pretrain, sequences_from_table, ModelKind, TrainConfig,
};
use crate::report::{write_reports, write_trials_csv, TrialRecord};
use crate::search::{
    default_lr_grid, grid_assignments, nelder_mead, random_assignments, Assignment, ParamDomain,
    ParamSpace, StrategyKind, TrialResult, TrialStatus,
};
use crate::splits::{
    holdout, holdout_stratified, repeated_cv, repeated_cv_stratified, repeated_cv_subset,
    three_way, three_way_stratified, SplitPlan,
};
use crate::stats::{kruskal_wallis, GroupSample};

/// FNV-1a over the seed-relevant identifiers; stable across platforms.
pub fn derive_seed(master: u64, dataset: &str, model: &str, trial: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    eat(&master.to_le_bytes());
    eat(dataset.as_bytes());
    eat(&[0]);
    eat(model.as_bytes());
    eat(&[0]);
    eat(&trial.to_le_bytes());
    h
}

/// The split plans one trial trains against.
#[derive(Debug, Clone)]
pub enum Plans {
    /// One plan; validation accuracy comes from its validation part when
    /// present, otherwise from the test part.
    Single(SplitPlan),
    /// Cross-validation: accuracies are means over the plans.
    Cv(Vec<SplitPlan>),
}

/// Build the plans a config's split section asks for.
pub fn build_plans(config: &ExperimentConfig, table: &DataTable, dataset: &str) -> Result<Plans> {
    let n = table.n_instances();
    let seed = derive_seed(config.seed, dataset, "split", 0);
    let labels = table.labels();
    let s = &config.split;
    match s.scheme.as_str() {
        "holdout" => Ok(Plans::Single(if s.stratified {
            holdout_stratified(&labels, seed)?
        } else {
            holdout(n, seed)?
        })),
        "three_way" => Ok(Plans::Single(if s.stratified {
            three_way_stratified(&labels, seed)?
        } else {
            three_way(n, seed)?
        })),
        "repeated_cv" => {
            if s.cv_on_train_only {
                let outer = holdout(n, seed)?;
                Ok(Plans::Cv(repeated_cv_subset(
                    &outer.train,
                    s.folds,
                    s.repeats,
                    seed,
                )?))
            } else if s.stratified {
                Ok(Plans::Cv(repeated_cv_stratified(
                    &labels, s.folds, s.repeats, seed,
                )?))
            } else {
                Ok(Plans::Cv(repeated_cv(n, s.folds, s.repeats, seed)?))
            }
        }
        other => Err(Error::InvalidConfig(format!("unknown split scheme {other:?}"))),
    }
}

/// Apply a hyperparameter assignment on top of the base training config.
pub fn config_from_assignment(
    base: &TrainConfig,
    assignment: &Assignment,
    seed: u64,
) -> Result<TrainConfig> {
    let mut cfg = base.clone();
    cfg.seed = seed;
    for (name, &value) in assignment {
        match name.as_str() {
            "learning_rate" => cfg.learning_rate = value,
            "batch_size" => cfg.batch_size = value as usize,
            "hidden_nodes" | "hidden_dim" => cfg.hidden_dims = vec![value as usize],
            "numepochs" | "iteration" | "epochs" => {
                cfg.epochs = value as usize;
                cfg.stopping.max_epochs = value as usize;
            }
            "hidden_dropout" => cfg.hidden_dropout = value,
            "visible_dropout" => cfg.visible_dropout = value,
            other => {
                return Err(Error::invalid(format!(
                    "assignment names unknown hyperparameter {other:?}"
                )));
            }
        }
    }
    Ok(cfg)
}

fn eval_on(model: &crate::nn::FeedForwardModel, table: &DataTable, idx: &[usize]) -> Result<f64> {
    let (x, y) = table.select(idx);
    let (preds, _) = model.predict(&x)?;
    accuracy(&preds, &y)
}

/// Train `kind` on one plan; returns (validation accuracy, test accuracy,
/// loss trace).
fn train_on_plan(
    kind: ModelKind,
    table: &DataTable,
    plan: &SplitPlan,
    cfg: &TrainConfig,
) -> Result<(f64, f64, Vec<f64>)> {
    match kind {
        ModelKind::Ffnn => {
            let (model, trace) = ffnn_train(table, plan, cfg)?;
            let test = eval_on(&model, table, &plan.test)?;
            let val = if plan.validation.is_empty() {
                test
            } else {
                eval_on(&model, table, &plan.validation)?
            };
            Ok((val, test, trace))
        }
        ModelKind::Rnn => {
            let (examples, label_values) = sequences_from_table(table, &plan.train)?;
            let (mut model, trace) = rnn_train(&examples, label_values.len().max(2), cfg)?;
            model.label_values = label_values;
            let eval_rnn = |idx: &[usize]| -> Result<f64> {
                let (seqs, _) = sequences_from_table(table, idx)?;
                let steps: Vec<ndarray::Array2<f64>> =
                    seqs.iter().map(|e| e.steps.clone()).collect();
                let preds = model.predict_final(&steps)?;
                let truth: Vec<f64> = idx.iter().map(|&i| table.labels()[i]).collect();
                accuracy(&preds, &truth)
            };
            let test = eval_rnn(&plan.test)?;
            let val = if plan.validation.is_empty() {
                test
            } else {
                eval_rnn(&plan.validation)?
            };
            Ok((val, test, trace))
        }
        ModelKind::Sae => {
            let (x_train, _) = table.select(&plan.train);
            let stack = sae_pretrain(&x_train, cfg)?;
            let (model, trace) = sae_finetune_classify(&stack, table, plan, cfg)?;
            let test = eval_on(&model, table, &plan.test)?;
            let val = if plan.validation.is_empty() {
                test
            } else {
                eval_on(&model, table, &plan.validation)?
            };
            Ok((val, test, trace))
        }
        ModelKind::Dbn => {
            let (x_train, _) = table.select(&plan.train);
            let stack = dbn_pretrain(&x_train, cfg)?;
            let (model, trace) = dbn_classify(&stack, table, plan, cfg)?;
            let test = eval_on(&model, table, &plan.test)?;
            let val = if plan.validation.is_empty() {
                test
            } else {
                eval_on(&model, table, &plan.validation)?
            };
            Ok((val, test, trace))
        }
    }
}

/// Evaluate one assignment into a TrialResult. Failures (divergence,
/// inapplicable batch sizes, unscaled input) become status = diverged with
/// accuracy 0 instead of aborting the sweep.
pub fn evaluate_trial(
    kind: ModelKind,
    table: &DataTable,
    plans: &Plans,
    base: &TrainConfig,
    assignment: &Assignment,
    seed: u64,
    timing: bool,
) -> TrialResult {
    let started = Instant::now();
    let outcome = (|| -> Result<(f64, f64, Vec<f64>)> {
        let cfg = config_from_assignment(base, assignment, seed)?;
        match plans {
            Plans::Single(plan) => train_on_plan(kind, table, plan, &cfg),
            Plans::Cv(plans) => {
                let mut val_sum = 0.0;
                let mut test_sum = 0.0;
                let mut first_trace = Vec::new();
                for (i, plan) in plans.iter().enumerate() {
                    let (val, test, trace) = train_on_plan(kind, table, plan, &cfg)?;
                    val_sum += val;
                    test_sum += test;
                    if i == 0 {
                        first_trace = trace;
                    }
                }
                let n = plans.len() as f64;
                Ok((val_sum / n, test_sum / n, first_trace))
            }
        }
    })();
    let wall = if timing {
        started.elapsed().as_secs_f64()
    } else {
        0.0
    };
    match outcome {
        Ok((val, test, trace)) => TrialResult {
            assignment: assignment.clone(),
            validation_accuracy: val,
            test_accuracy: test,
            wall_time: wall,
            loss_trace: trace,
            status: TrialStatus::Ok,
        },
        Err(_) => TrialResult::diverged(assignment.clone(), wall),
    }
}

/// The search space for a model: config overrides when present, else the
/// model's default grid.
pub fn space_for(config: &ExperimentConfig, kind: ModelKind) -> Result<ParamSpace> {
    if config.space.axes.is_empty() {
        return Ok(crate::search::default_space(kind));
    }
    let axes = config
        .space
        .axes
        .iter()
        .map(|a| a.to_axis())
        .collect::<Result<Vec<_>>>()?;
    ParamSpace::new(kind, axes)
}

fn worker_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::invalid(format!("cannot build worker pool: {e}")))
}

fn load_one(dataset: &DatasetConfig) -> Result<DataTable> {
    data::load_table(&dataset.path, dataset.format()?, dataset.label_spec()?)
}

fn preprocess_options(config: &ExperimentConfig) -> Result<PreprocessOptions> {
    Ok(PreprocessOptions {
        factor_policy: config.preprocessing.factor_policy(config.seed)?,
        normalize: config.preprocessing.normalize,
        exclude_label: config.preprocessing.exclude_label,
        convert_factor_features: config.preprocessing.convert_factor_features,
    })
}

/// Variant tag for the box-plot panels.
fn variant_of(config: &ExperimentConfig) -> &'static str {
    if config.preprocessing.normalize {
        "normalized"
    } else {
        "original"
    }
}

/// Deterministic run metadata written next to trials.csv so re-reporting
/// can reproduce the same artifacts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMeta {
    pub variant: String,
    pub seed: u64,
    pub strategy: String,
}

/// Outcome of `tune`: records, artifact directory and per-dataset failures.
#[derive(Debug)]
pub struct TuneOutcome {
    pub records: Vec<TrialRecord>,
    pub out_dir: PathBuf,
    /// (dataset, error) pairs for datasets that failed to load.
    pub failures: Vec<(String, String)>,
}

/// Run the configured strategy over every (dataset x model) pair and write
/// trials.csv, run.json and the report artifacts.
pub fn run_tune(config: &ExperimentConfig) -> Result<TuneOutcome> {
    config.validate()?;
    let strategy = config.strategy_kind()?;
    if strategy == StrategyKind::LrSweep {
        let sweep = run_sweep_lr(config)?;
        return Ok(TuneOutcome {
            records: sweep.records,
            out_dir: sweep.out_dir,
            failures: sweep.failures,
        });
    }
    let kinds = config.model_kinds()?;
    let opts = preprocess_options(config)?;
    let pool = worker_pool(config.output.jobs)?;
    std::fs::create_dir_all(&config.output_dir)?;

    let mut records: Vec<TrialRecord> = Vec::new();
    let mut failures = Vec::new();
    for dataset in &config.datasets {
        let table = match load_one(dataset) {
            Ok(t) => t,
            Err(e) => {
                failures.push((dataset.name.clone(), e.to_string()));
                continue;
            }
        };
        let (table, _sparsity) = data::preprocess_one(&table, config.seed, &opts)?;
        let plans = build_plans(config, &table, &dataset.name)?;
        for &kind in &kinds {
            let space = space_for(config, kind)?;
            let base = config.train.to_train_config(config.seed)?;
            let trials = run_strategy(
                config, strategy, &space, kind, &table, &plans, &base, &dataset.name, &pool,
            )?;
            records.extend(trials.into_iter().map(|t| TrialRecord {
                strategy: strategy.to_string(),
                dataset: dataset.name.clone(),
                model: kind.to_string(),
                assignment: t.assignment,
                validation_accuracy: t.validation_accuracy,
                test_accuracy: t.test_accuracy,
                wall_time: t.wall_time,
                status: t.status,
            }));
        }
    }
    if records.is_empty() && !failures.is_empty() {
        return Err(Error::EmptyInput(format!(
            "no dataset could be loaded; first failure: {}: {}",
            failures[0].0, failures[0].1
        )));
    }

    let out_dir = config.output_dir.clone();
    write_trials_csv(&records, out_dir.join("trials.csv"))?;
    let meta = RunMeta {
        variant: variant_of(config).to_string(),
        seed: config.seed,
        strategy: strategy.to_string(),
    };
    std::fs::write(
        out_dir.join("run.json"),
        serde_json::to_string_pretty(&meta)?,
    )?;
    write_reports(&records, variant_of(config), &out_dir)?;
    Ok(TuneOutcome {
        records,
        out_dir,
        failures,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_strategy(
    config: &ExperimentConfig,
    strategy: StrategyKind,
    space: &ParamSpace,
    kind: ModelKind,
    table: &DataTable,
    plans: &Plans,
    base: &TrainConfig,
    dataset: &str,
    pool: &rayon::ThreadPool,
) -> Result<Vec<TrialResult>> {
    let model = kind.to_string();
    let timing = config.output.timing;
    match strategy {
        StrategyKind::Grid | StrategyKind::Random => {
            let assignments = match strategy {
                StrategyKind::Grid => grid_assignments(space)?,
                _ => random_assignments(
                    space,
                    config.strategy.n_trials,
                    derive_seed(config.seed, dataset, &model, u64::MAX),
                )?,
            };
            // trials are independent; evaluate them on the pool, keeping
            // enumeration order for deterministic tie-breaking downstream
            let trials: Vec<TrialResult> = pool.install(|| {
                assignments
                    .par_iter()
                    .enumerate()
                    .map(|(i, a)| {
                        let seed = derive_seed(config.seed, dataset, &model, i as u64);
                        evaluate_trial(kind, table, plans, base, a, seed, timing)
                    })
                    .collect()
            });
            Ok(trials)
        }
        StrategyKind::NelderMead => {
            nelder_mead_over_space(config, space, kind, table, plans, base, dataset)
        }
        StrategyKind::LrSweep => Err(Error::InvalidConfig(
            "lr_sweep runs through the sweep-lr path".into(),
        )),
    }
}

/// Nelder-Mead over the space: continuous axes move in their interval,
/// discrete axes in index space rounded to the nearest value; out-of-box
/// vectors are clamped before evaluation. Sequential by nature.
fn nelder_mead_over_space(
    config: &ExperimentConfig,
    space: &ParamSpace,
    kind: ModelKind,
    table: &DataTable,
    plans: &Plans,
    base: &TrainConfig,
    dataset: &str,
) -> Result<Vec<TrialResult>> {
    let model = kind.to_string();
    let bounds: Vec<(f64, f64)> = space
        .axes
        .iter()
        .map(|a| match &a.domain {
            ParamDomain::Discrete(v) => (0.0, (v.len() - 1) as f64),
            ParamDomain::Continuous { lo, hi } => (*lo, *hi),
        })
        .collect();
    let to_assignment = |x: &[f64]| -> Assignment {
        space
            .axes
            .iter()
            .zip(x)
            .zip(&bounds)
            .map(|((axis, &xi), &(lo, hi))| {
                let clamped = xi.clamp(lo, hi);
                let value = match &axis.domain {
                    ParamDomain::Discrete(values) => values[clamped.round() as usize],
                    ParamDomain::Continuous { .. } => clamped,
                };
                (axis.name.clone(), value)
            })
            .collect()
    };
    let x0: Vec<f64> = bounds.iter().map(|&(lo, hi)| (lo + hi) / 2.0).collect();

    let mut trials: Vec<TrialResult> = Vec::new();
    {
        let objective = |x: &[f64]| -> f64 {
            let assignment = to_assignment(x);
            let seed = derive_seed(config.seed, dataset, &model, trials.len() as u64);
            let trial = evaluate_trial(
                kind,
                table,
                plans,
                base,
                &assignment,
                seed,
                config.output.timing,
            );
            let score = 1.0 - trial.validation_accuracy;
            trials.push(trial);
            score
        };
        nelder_mead(
            objective,
            &x0,
            config.strategy.tolerance,
            config.strategy.max_evals,
        )?;
    }
    Ok(trials)
}

/// Profile artifacts for one dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NamedProfile {
    pub name: String,
    #[serde(flatten)]
    pub profile: DatasetProfile,
}

#[derive(Debug)]
pub struct ProfileOutcome {
    pub profiles: Vec<NamedProfile>,
    pub out_dir: PathBuf,
    pub failures: Vec<(String, String)>,
}

/// Profile every dataset: factor-convert, record sparsity (whole matrix,
/// pre-normalization) and the class histogram. Per-dataset failures are
/// recorded and skipped.
pub fn run_profile(config: &ExperimentConfig) -> Result<ProfileOutcome> {
    config.validate()?;
    let opts = PreprocessOptions {
        normalize: false, // sparsity and histograms come before normalization
        ..preprocess_options(config)?
    };
    let mut profiles = Vec::new();
    let mut failures = Vec::new();
    for dataset in &config.datasets {
        match load_one(dataset) {
            Ok(table) => {
                let (converted, _s) = data::preprocess_one(&table, config.seed, &opts)?;
                profiles.push(NamedProfile {
                    name: dataset.name.clone(),
                    profile: data::profile(&converted),
                });
            }
            Err(e) => failures.push((dataset.name.clone(), e.to_string())),
        }
    }
    let out_dir = config.output_dir.clone();
    std::fs::create_dir_all(&out_dir)?;
    for p in &profiles {
        std::fs::write(
            out_dir.join(format!("profile_{}.json", p.name)),
            serde_json::to_string_pretty(p)?,
        )?;
    }
    let mut sparsity_csv = String::from("name,sparsity\n");
    for p in &profiles {
        sparsity_csv.push_str(&format!("{},{}\n", p.name, p.profile.sparsity));
    }
    std::fs::write(out_dir.join("sparsity.csv"), sparsity_csv)?;
    Ok(ProfileOutcome {
        profiles,
        out_dir,
        failures,
    })
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub records: Vec<TrialRecord>,
    /// Per-model curves: (model, Vec<(learning rate, mean accuracy)>).
    pub curves: Vec<(String, Vec<(f64, f64)>)>,
    pub out_dir: PathBuf,
    pub failures: Vec<(String, String)>,
}

/// The learning-rate sweep: per model, one mean-CV-accuracy evaluation per
/// grid point (all other hyperparameters at the config's [train] defaults),
/// then a Kruskal-Wallis test across the models' accuracy samples.
pub fn run_sweep_lr(config: &ExperimentConfig) -> Result<SweepOutcome> {
    config.validate()?;
    let kinds = config.model_kinds()?;
    let opts = preprocess_options(config)?;
    let pool = worker_pool(config.output.jobs)?;

    let grid: Vec<f64> = if !config.sweep.lr_values.is_empty() {
        config.sweep.lr_values.clone()
    } else if config.sweep.points == 208 {
        default_lr_grid()
    } else {
        let n = config.sweep.points.max(2);
        (0..n)
            .map(|i| 0.005 + i as f64 * (0.823 - 0.005) / (n - 1) as f64)
            .collect()
    };

    // load all datasets with their CV plans up front
    let mut tables: Vec<(String, DataTable, Vec<SplitPlan>)> = Vec::new();
    let mut failures = Vec::new();
    for dataset in &config.datasets {
        match load_one(dataset) {
            Ok(table) => {
                let (table, _) = data::preprocess_one(&table, config.seed, &opts)?;
                let seed = derive_seed(config.seed, &dataset.name, "sweep-split", 0);
                let plans = repeated_cv(
                    table.n_instances(),
                    config.sweep.folds,
                    config.sweep.repeats,
                    seed,
                )?;
                tables.push((dataset.name.clone(), table, plans));
            }
            Err(e) => failures.push((dataset.name.clone(), e.to_string())),
        }
    }
    if tables.is_empty() {
        return Err(Error::EmptyInput("no dataset could be loaded".into()));
    }

    let out_dir = config.output_dir.clone();
    std::fs::create_dir_all(&out_dir)?;

    let mut curves = Vec::new();
    let mut records: Vec<TrialRecord> = Vec::new();
    for &kind in &kinds {
        let model = kind.to_string();
        let base = config.train.to_train_config(config.seed)?;
        // one point = mean CV accuracy over every dataset's plans
        let points: Vec<(f64, f64, Vec<TrialRecord>)> = pool.install(|| {
            grid.par_iter()
                .enumerate()
                .map(|(i, &lr)| {
                    let mut assignment = Assignment::new();
                    assignment.insert("learning_rate".into(), lr);
                    let mut acc_sum = 0.0;
                    let mut point_records = Vec::new();
                    for (name, table, plans) in &tables {
                        let seed = derive_seed(config.seed, name, &model, i as u64);
                        let trial = evaluate_trial(
                            kind,
                            table,
                            &Plans::Cv(plans.clone()),
                            &base,
                            &assignment,
                            seed,
                            config.output.timing,
                        );
                        acc_sum += trial.test_accuracy;
                        point_records.push(TrialRecord {
                            strategy: "lr_sweep".into(),
                            dataset: name.clone(),
                            model: model.clone(),
                            assignment: trial.assignment,
                            validation_accuracy: trial.validation_accuracy,
                            test_accuracy: trial.test_accuracy,
                            wall_time: trial.wall_time,
                            status: trial.status,
                        });
                    }
                    (lr, acc_sum / tables.len() as f64, point_records)
                })
                .collect()
        });

        let mut curve_csv = String::from("learning_rate,mean_accuracy\n");
        let mut curve = Vec::with_capacity(points.len());
        for (lr, acc, point_records) in points {
            curve_csv.push_str(&format!("{lr},{acc}\n"));
            curve.push((lr, acc));
            records.extend(point_records);
        }
        std::fs::write(out_dir.join(format!("lr_sweep_{model}.csv")), curve_csv)?;
        curves.push((model, curve));
    }

    // Kruskal-Wallis across the models' accuracy samples
    let kw_json = if curves.len() >= 2 {
        let groups: Vec<GroupSample> = curves
            .iter()
            .map(|(model, curve)| {
                GroupSample::new(model.clone(), curve.iter().map(|&(_, a)| a).collect())
            })
            .collect();
        let kw = kruskal_wallis(&groups)?;
        serde_json::json!({
            "groups": curves.iter().map(|(m, _)| m.clone()).collect::<Vec<_>>(),
            "h": kw.h,
            "df": kw.df,
            "p_value": kw.p_value,
            "reject_h0_at_0_05": kw.reject_at_0_05(),
        })
    } else {
        serde_json::json!({
            "note": "kruskal-wallis skipped: needs at least 2 model groups",
            "groups": curves.iter().map(|(m, _)| m.clone()).collect::<Vec<_>>(),
        })
    };
    std::fs::write(
        out_dir.join("lr_kw.json"),
        serde_json::to_string_pretty(&kw_json)?,
    )?;
    write_trials_csv(&records, out_dir.join("trials.csv"))?;
    let meta = RunMeta {
        variant: variant_of(config).to_string(),
        seed: config.seed,
        strategy: "lr_sweep".into(),
    };
    std::fs::write(
        out_dir.join("run.json"),
        serde_json::to_string_pretty(&meta)?,
    )?;

    Ok(SweepOutcome {
        records,
        curves,
        out_dir,
        failures,
    })
}

#[derive(Debug)]
pub struct ReportOutcome {
    pub records: Vec<TrialRecord>,
    pub out_dir: PathBuf,
}

/// Merge trial logs, recompute the summaries and emit the consolidated
/// artifacts into `out_dir`.
pub fn run_report(log_paths: &[PathBuf], out_dir: &Path) -> Result<ReportOutcome> {
    if log_paths.is_empty() {
        return Err(Error::EmptyInput("no trial logs given".into()));
    }
    let mut records: Vec<TrialRecord> = Vec::new();
    let mut variants: Vec<String> = Vec::new();
    for path in log_paths {
        records.extend(crate::report::read_trials_csv(path)?);
        let sibling = path
            .parent()
            .map(|p| p.join("run.json"))
            .filter(|p| p.exists());
        if let Some(meta_path) = sibling {
            let meta: RunMeta = serde_json::from_str(&std::fs::read_to_string(meta_path)?)?;
            variants.push(meta.variant);
        }
    }
    if records.is_empty() {
        return Err(Error::EmptyInput("trial logs contain no rows".into()));
    }
    variants.sort();
    variants.dedup();
    let variant = match variants.as_slice() {
        [only] => only.clone(),
        _ => "merged".to_string(),
    };

    std::fs::create_dir_all(out_dir)?;
    write_trials_csv(&records, out_dir.join("trials.csv"))?;
    write_reports(&records, &variant, out_dir)?;
    Ok(ReportOutcome {
        records,
        out_dir: out_dir.to_path_buf(),
    })
}

/// Mean accuracy per (model, strategy, dataset) of the records; a
/// convenience for tests and the bindings.
pub fn accuracy_by_group(records: &[TrialRecord]) -> BTreeMap<(String, String, String), f64> {
    let mut sums: BTreeMap<(String, String, String), (f64, usize)> = BTreeMap::new();
    for r in records {
        let e = sums
            .entry((r.model.clone(), r.strategy.clone(), r.dataset.clone()))
            .or_insert((0.0, 0));
        e.0 += r.test_accuracy;
        e.1 += 1;
    }
    sums.into_iter()
        .map(|(k, (sum, n))| (k, sum / n as f64))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;

    fn blob_csv(path: &Path, n_per: usize, seed: u64) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut text = String::from("x0,x1,x2,y\n");
        for i in 0..2 * n_per {
            let class = usize::from(i >= n_per);
            let center = if class == 0 { 0.25 } else { 0.75 };
            for _ in 0..3 {
                text.push_str(&format!("{},", center + rng.random_range(-0.2..0.2)));
            }
            text.push_str(&format!("{class}\n"));
        }
        std::fs::write(path, text).unwrap();
    }

    fn small_config(dir: &Path, strategy: &str) -> ExperimentConfig {
        let data_path = dir.join("blobs.csv");
        blob_csv(&data_path, 30, 42);
        let text = format!(
            r#"
seed = 11
output_dir = "{}"
models = ["ffnn"]

[[datasets]]
name = "blobs"
path = "{}"
format = "csv"
label = "y"

[strategy]
kind = "{strategy}"
n_trials = 4
max_evals = 12

[train]
epochs = 5
batch_size = 8
hidden_dims = [4]
learning_rate = 0.5

[space]
[[space.axes]]
name = "learning_rate"
values = [0.2, 0.6]

[[space.axes]]
name = "hidden_nodes"
values = [2.0, 4.0]

[output]
timing = false
"#,
            dir.join("out").display(),
            data_path.display()
        );
        ExperimentConfig::from_toml(&text).unwrap()
    }

    #[test]
    fn derive_seed_is_stable_and_sensitive() {
        let a = derive_seed(1, "d", "ffnn", 0);
        assert_eq!(a, derive_seed(1, "d", "ffnn", 0));
        assert_ne!(a, derive_seed(1, "d", "ffnn", 1));
        assert_ne!(a, derive_seed(1, "e", "ffnn", 0));
        assert_ne!(a, derive_seed(2, "d", "ffnn", 0));
        assert_ne!(a, derive_seed(1, "d", "rnn", 0));
    }

    #[test]
    fn config_from_assignment_maps_axes() {
        let base = TrainConfig::new(0.1, 10, 20, vec![8]);
        let mut a = Assignment::new();
        a.insert("learning_rate".into(), 0.7);
        a.insert("batch_size".into(), 30.0);
        a.insert("hidden_nodes".into(), 5.0);
        let cfg = config_from_assignment(&base, &a, 99).unwrap();
        assert_eq!(cfg.learning_rate, 0.7);
        assert_eq!(cfg.batch_size, 30);
        assert_eq!(cfg.hidden_dims, vec![5]);
        assert_eq!(cfg.seed, 99);

        let mut rnn = Assignment::new();
        rnn.insert("numepochs".into(), 40.0);
        rnn.insert("hidden_dim".into(), 3.0);
        let cfg = config_from_assignment(&base, &rnn, 0).unwrap();
        assert_eq!(cfg.epochs, 40);
        assert_eq!(cfg.hidden_dims, vec![3]);

        let mut bad = Assignment::new();
        bad.insert("momentum".into(), 0.9);
        assert!(config_from_assignment(&base, &bad, 0).is_err());
    }

    #[test]
    fn grid_tune_writes_deterministic_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let config = small_config(dir.path(), "grid");
        let a = run_tune(&config).unwrap();
        assert_eq!(a.records.len(), 4); // 2x2 grid
        let first = std::fs::read(a.out_dir.join("trials.csv")).unwrap();
        let b = run_tune(&config).unwrap();
        assert_eq!(b.records, a.records);
        assert_eq!(std::fs::read(b.out_dir.join("trials.csv")).unwrap(), first);
        for f in ["summary.json", "boxdata.csv", "ranking.csv", "timing.csv", "run.json"] {
            assert!(a.out_dir.join(f).exists(), "{f} missing");
        }
    }

    #[test]
    fn random_tune_respects_n_trials() {
        let dir = tempfile::tempdir().unwrap();
        let config = small_config(dir.path(), "random");
        let outcome = run_tune(&config).unwrap();
        assert_eq!(outcome.records.len(), 4);
        assert!(outcome
            .records
            .iter()
            .all(|r| r.strategy == "random" && r.dataset == "blobs"));
    }

    #[test]
    fn nelder_mead_tune_records_sequential_trials() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = small_config(dir.path(), "nelder_mead");
        config.strategy.max_evals = 8;
        let outcome = run_tune(&config).unwrap();
        assert!(!outcome.records.is_empty());
        assert!(outcome.records.len() <= 12);
        for r in &outcome.records {
            assert!(r.assignment.contains_key("learning_rate"));
        }
    }

    #[test]
    fn report_reproduces_tune_summaries_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let config = small_config(dir.path(), "grid");
        let tune = run_tune(&config).unwrap();
        let report_dir = dir.path().join("report");
        run_report(&[tune.out_dir.join("trials.csv")], &report_dir).unwrap();
        for f in ["trials.csv", "summary.json", "boxdata.csv", "ranking.csv", "timing.csv"] {
            let a = std::fs::read(tune.out_dir.join(f)).unwrap();
            let b = std::fs::read(report_dir.join(f)).unwrap();
            assert_eq!(a, b, "{f} differs after re-reporting");
        }
    }

    #[test]
    fn merging_two_logs_concatenates_rows() {
        let dir = tempfile::tempdir().unwrap();
        let config = small_config(dir.path(), "grid");
        let tune = run_tune(&config).unwrap();
        let merged_dir = dir.path().join("merged");
        let log = tune.out_dir.join("trials.csv");
        let outcome = run_report(&[log.clone(), log], &merged_dir).unwrap();
        assert_eq!(outcome.records.len(), 8);
    }

    #[test]
    fn profile_writes_sparsity_table_and_continues_past_failures() {
        let dir = tempfile::tempdir().unwrap();
        let data_path = dir.path().join("blobs.csv");
        blob_csv(&data_path, 10, 3);
        let text = format!(
            r#"
seed = 5
output_dir = "{}"
models = ["ffnn"]

[[datasets]]
name = "ok"
path = "{}"
format = "csv"
label = "y"

[[datasets]]
name = "missing"
path = "{}"
format = "csv"
label = "y"
"#,
            dir.path().join("out").display(),
            data_path.display(),
            dir.path().join("nope.csv").display()
        );
        let config = ExperimentConfig::from_toml(&text).unwrap();
        let outcome = run_profile(&config).unwrap();
        assert_eq!(outcome.profiles.len(), 1);
        assert_eq!(outcome.failures.len(), 1);
        let sparsity = std::fs::read_to_string(outcome.out_dir.join("sparsity.csv")).unwrap();
        assert!(sparsity.starts_with("name,sparsity\n"));
        assert!(sparsity.contains("ok,"));
        assert!(outcome.out_dir.join("profile_ok.json").exists());
    }

    #[test]
    fn sweep_writes_one_curve_per_model_and_skips_kw_for_single_model() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = small_config(dir.path(), "grid");
        config.sweep.points = 5;
        config.sweep.folds = 2;
        config.sweep.repeats = 1;
        let outcome = run_sweep_lr(&config).unwrap();
        assert_eq!(outcome.curves.len(), 1);
        assert_eq!(outcome.curves[0].1.len(), 5);
        let kw: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(outcome.out_dir.join("lr_kw.json")).unwrap())
                .unwrap();
        assert!(kw.get("note").is_some());
        assert!(outcome.out_dir.join("lr_sweep_ffnn.csv").exists());
    }

    #[test]
    fn sweep_with_two_models_runs_kruskal_wallis() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = small_config(dir.path(), "grid");
        config.models = vec!["ffnn".into(), "dbn".into()];
        config.train.epochs = 2;
        config.sweep.points = 4;
        config.sweep.folds = 2;
        config.sweep.repeats = 1;
        let outcome = run_sweep_lr(&config).unwrap();
        assert_eq!(outcome.curves.len(), 2);
        assert!(outcome.out_dir.join("lr_sweep_ffnn.csv").exists());
        assert!(outcome.out_dir.join("lr_sweep_dbn.csv").exists());
        let kw: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(outcome.out_dir.join("lr_kw.json")).unwrap())
                .unwrap();
        assert!(kw.get("h").is_some());
        assert!(kw.get("p_value").is_some());
        assert_eq!(kw["df"], 1);
    }

    #[test]
    fn trial_rows_scale_with_datasets_times_models() {
        let dir = tempfile::tempdir().unwrap();
        let d1 = dir.path().join("a.csv");
        let d2 = dir.path().join("b.csv");
        blob_csv(&d1, 20, 1);
        blob_csv(&d2, 20, 2);
        let text = format!(
            r#"
seed = 6
output_dir = "{}"
models = ["ffnn", "dbn"]

[[datasets]]
name = "a"
path = "{}"
format = "csv"
label = "y"

[[datasets]]
name = "b"
path = "{}"
format = "csv"
label = "y"

[strategy]
kind = "random"
n_trials = 10

[train]
epochs = 2
batch_size = 5
hidden_dims = [3]

[space]
[[space.axes]]
name = "learning_rate"
values = [0.2, 0.6]
"#,
            dir.path().join("out").display(),
            d1.display(),
            d2.display()
        );
        let config = ExperimentConfig::from_toml(&text).unwrap();
        let outcome = run_tune(&config).unwrap();
        // 2 datasets x 2 models x random(10)
        assert_eq!(outcome.records.len(), 40);
    }

    #[test]
    fn jobs_parallelism_keeps_results_identical() {
        let dir1 = tempfile::tempdir().unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        let mut c1 = small_config(dir1.path(), "grid");
        let mut c2 = small_config(dir2.path(), "grid");
        c1.output.jobs = 1;
        c2.output.jobs = 4;
        let a = run_tune(&c1).unwrap();
        let b = run_tune(&c2).unwrap();
        assert_eq!(a.records, b.records);
    }
}
