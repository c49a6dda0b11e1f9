//! Experiment orchestration: repeated stratified trials, grid search,
//! label-noise sweeps, learning curves, influence-parameter sensitivity and
//! report output.
//!
//! Trial `t` of a protocol uses seed `base_seed + t` for its split, noise and
//! subsample draws, so reports are deterministic functions of the dataset,
//! the protocol and the base seed. Only the `*_seconds` fields vary between
//! runs. Standard deviations use the population formula.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{inject_label_noise, stratified_split, subsample, Dataset, SplitSpec};
use crate::error::{Error, Result};
use crate::kernels::{InfluenceVariant, KernelSpec};
use crate::models::{FittedModel, ModelConfig, ModelKind, ModelParams, Scaling};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const STD_FORMULA: &str = "population";
pub const SELECTION_RULE: &str = "max mean test accuracy; ties: higher mean train accuracy, then smallest (gamma, lambda, kernel_param, influence_param)";
pub const TRAIN_SELECTION_RULE: &str = "max mean train accuracy; ties: higher mean test accuracy, then smallest (gamma, lambda, kernel_param, influence_param)";

/// `{2^i | i = -6, ..., 5}`.
pub fn power_grid() -> Vec<f64> {
    (-6..=5).map(|i| 2f64.powi(i)).collect()
}

/// Inclusive arithmetic range `start, start + step, ..., stop`.
pub fn linear_range(start: f64, step: f64, stop: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !start.is_finite() || !stop.is_finite() || stop < start {
        return Err(Error::InvalidParameter(format!(
            "range {start}:{step}:{stop} must have step > 0 and stop >= start"
        )));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count)
        .map(|i| {
            let v = start + i as f64 * step;
            // Trim binary noise such as 0.30000000000000004.
            (v * 1e12).round() / 1e12
        })
        .collect())
}

pub fn default_noise_fractions() -> Vec<f64> {
    linear_range(0.0, 0.05, 0.5).expect("valid range")
}

pub fn default_learning_fractions() -> Vec<f64> {
    linear_range(0.1, 0.1, 1.0).expect("valid range")
}

pub fn default_sensitivity_values() -> Vec<f64> {
    linear_range(0.1, 0.1, 2.0).expect("valid range")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub gamma_grid: Vec<f64>,
    pub lambda_grid: Vec<f64>,
    pub kernel_param_grid: Vec<f64>,
    pub influence_param_grid: Vec<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            gamma_grid: power_grid(),
            lambda_grid: power_grid(),
            kernel_param_grid: power_grid(),
            influence_param_grid: power_grid(),
        }
    }
}

impl GridSpec {
    pub fn single(params: &ParamTuple) -> Self {
        Self {
            gamma_grid: vec![params.gamma],
            lambda_grid: vec![params.lambda.unwrap_or(0.0)],
            kernel_param_grid: params.kernel_param.into_iter().collect(),
            influence_param_grid: params.influence_param.into_iter().collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |name: &str, values: &[f64], allow_zero: bool| -> Result<()> {
            if values.is_empty() {
                return Err(Error::InvalidParameter(format!("{name} grid is empty")));
            }
            match values
                .iter()
                .find(|v| !v.is_finite() || **v < 0.0 || (!allow_zero && **v == 0.0))
            {
                Some(v) => Err(Error::InvalidParameter(format!(
                    "{name} grid value {v} out of range"
                ))),
                None => Ok(()),
            }
        };
        check("gamma", &self.gamma_grid, false)?;
        check("lambda", &self.lambda_grid, true)?;
        check("kernel parameter", &self.kernel_param_grid, false)?;
        check("influence parameter", &self.influence_param_grid, false)
    }
}

/// Split fraction, number of repeats and seeding of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    pub train_fraction: f64,
    pub trials: usize,
    pub base_seed: u64,
    /// Worker threads for grid cells (0 = all available). Timed trials always run serially.
    #[serde(skip)]
    pub jobs: usize,
}

impl Protocol {
    /// 70/30 stratified split, five repeats.
    pub fn benchmark(base_seed: u64) -> Self {
        Self {
            train_fraction: 0.7,
            trials: 5,
            base_seed,
            jobs: 0,
        }
    }

    /// 80/20 stratified split, five repeats; used by the sweeps.
    pub fn sweep(base_seed: u64) -> Self {
        Self {
            train_fraction: 0.8,
            ..Self::benchmark(base_seed)
        }
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        self.base_seed.wrapping_add(trial as u64)
    }

    fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trial count must be positive".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "train fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        Ok(())
    }
}

/// Parameter values of one evaluated configuration. Fields that do not apply
/// to the model are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamTuple {
    pub gamma: f64,
    pub lambda: Option<f64>,
    pub kernel_param: Option<f64>,
    pub influence_param: Option<f64>,
}

impl ParamTuple {
    pub fn of(config: &ModelConfig) -> Self {
        let memory = config.kind.uses_memory();
        Self {
            gamma: config.params.gamma,
            lambda: memory.then_some(config.params.lambda),
            kernel_param: config.kernel.param(),
            influence_param: if memory {
                config.influence.map(|i| i.param)
            } else {
                None
            },
        }
    }

    fn key(&self) -> [f64; 4] {
        [
            self.gamma,
            self.lambda.unwrap_or(-1.0),
            self.kernel_param.unwrap_or(-1.0),
            self.influence_param.unwrap_or(-1.0),
        ]
    }

    fn lex_cmp(&self, other: &Self) -> std::cmp::Ordering {
        let (a, b) = (self.key(), other.key());
        a.iter()
            .zip(&b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    }
}

/// Model family, kernel and influence variant, with parameters left open.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelTemplate {
    pub kind: ModelKind,
    pub kernel: KernelSpec,
    pub influence: Option<InfluenceVariant>,
    pub scaling: Scaling,
}

impl ModelTemplate {
    pub fn new(kind: ModelKind, kernel: KernelSpec, influence: Option<InfluenceVariant>) -> Self {
        Self {
            kind,
            kernel,
            influence,
            scaling: Scaling::ZScore,
        }
    }

    pub fn of(config: &ModelConfig) -> Self {
        Self {
            kind: config.kind,
            kernel: config.kernel,
            influence: config.influence.map(|i| i.variant),
            scaling: config.scaling,
        }
    }

    pub fn config(&self, params: &ParamTuple) -> Result<ModelConfig> {
        let kernel = match params.kernel_param {
            Some(p) => self.kernel.with_param(p)?,
            None => self.kernel,
        };
        let influence = match (self.kind.uses_memory(), self.influence) {
            (false, _) => None,
            (true, Some(v)) => Some(v.with_param(params.influence_param.ok_or_else(|| {
                Error::InvalidParameter("influence parameter missing".into())
            })?)?),
            (true, None) => {
                return Err(Error::InvalidParameter(format!(
                    "{} needs an influence variant",
                    self.kind
                )))
            }
        };
        Ok(ModelConfig {
            kind: self.kind,
            kernel,
            influence,
            params: ModelParams::new(params.gamma, params.lambda.unwrap_or(0.0))?,
            scaling: self.scaling,
        })
    }

    fn kernel_axis(&self, grid: &GridSpec) -> Vec<Option<f64>> {
        match self.kernel {
            KernelSpec::Linear => vec![None],
            KernelSpec::Rbf { .. } => grid.kernel_param_grid.iter().map(|&v| Some(v)).collect(),
        }
    }

    fn influence_axis(&self, grid: &GridSpec) -> Vec<Option<f64>> {
        if self.kind.uses_memory() {
            grid.influence_param_grid.iter().map(|&v| Some(v)).collect()
        } else {
            vec![None]
        }
    }

    fn lambda_axis(&self, grid: &GridSpec) -> Vec<Option<f64>> {
        if self.kind.uses_memory() {
            grid.lambda_grid.iter().map(|&v| Some(v)).collect()
        } else {
            vec![None]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "code", content = "detail")]
pub enum TrialStatus {
    Ok,
    Singular,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub params: ParamTuple,
    pub train_size: usize,
    pub test_size: usize,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub fit_seconds: f64,
    pub predict_seconds: f64,
    pub solver_singular: bool,
    /// `max_i |training residual|`, for memory models.
    pub max_train_residual: Option<f64>,
    pub status: TrialStatus,
}

impl TrialResult {
    fn failed(trial: usize, seed: u64, params: ParamTuple, err: &Error) -> Self {
        let singular = err.is_singular();
        Self {
            trial,
            seed,
            params,
            train_size: 0,
            test_size: 0,
            train_accuracy: 0.0,
            test_accuracy: 0.0,
            fit_seconds: 0.0,
            predict_seconds: 0.0,
            solver_singular: singular,
            max_train_residual: None,
            status: if singular {
                TrialStatus::Singular
            } else {
                TrialStatus::Failed(err.to_string())
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub train_mean: f64,
    pub train_std: f64,
    pub test_mean: f64,
    pub test_std: f64,
    pub singular_trials: usize,
    pub failed_trials: usize,
}

impl Summary {
    pub fn of(trials: &[TrialResult]) -> Self {
        let (train_mean, train_std) = mean_std(trials.iter().map(|t| t.train_accuracy));
        let (test_mean, test_std) = mean_std(trials.iter().map(|t| t.test_accuracy));
        Self {
            train_mean,
            train_std,
            test_mean,
            test_std,
            singular_trials: trials.iter().filter(|t| t.solver_singular).count(),
            failed_trials: trials
                .iter()
                .filter(|t| matches!(t.status, TrialStatus::Failed(_)))
                .count(),
        }
    }
}

/// Mean and population standard deviation.
pub fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolDescriptor {
    pub name: String,
    pub train_fraction: f64,
    pub stratified: bool,
    pub trials: usize,
    pub base_seed: u64,
    pub sweep_axis: Option<String>,
    pub sweep_value: Option<f64>,
    pub selection: Option<String>,
    pub std_formula: String,
}

impl ProtocolDescriptor {
    fn new(name: &str, protocol: &Protocol) -> Self {
        Self {
            name: name.to_string(),
            train_fraction: protocol.train_fraction,
            stratified: true,
            trials: protocol.trials,
            base_seed: protocol.base_seed,
            sweep_axis: None,
            sweep_value: None,
            selection: None,
            std_formula: STD_FORMULA.to_string(),
        }
    }

    fn sweep(mut self, axis: &str, value: f64) -> Self {
        self.sweep_axis = Some(axis.to_string());
        self.sweep_value = Some(value);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub params: ParamTuple,
    pub summary: Summary,
    pub trials: Vec<TrialResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridOutcome {
    pub cells: Vec<GridCell>,
    pub best_by_test: ParamTuple,
    pub best_by_test_summary: Summary,
    pub best_by_train: ParamTuple,
    pub best_by_train_summary: Summary,
    pub train_selection: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub dataset: String,
    pub model: ModelKind,
    pub kernel: String,
    pub influence: Option<InfluenceVariant>,
    pub scaling: Scaling,
    pub protocol: ProtocolDescriptor,
    pub params: ParamTuple,
    pub trials: Vec<TrialResult>,
    pub summary: Summary,
    pub grid: Option<GridOutcome>,
}

impl ExperimentReport {
    fn new(ds: &Dataset, template: &ModelTemplate, protocol: ProtocolDescriptor) -> Self {
        Self {
            dataset: ds.name.clone(),
            model: template.kind,
            kernel: template.kernel.name().to_string(),
            influence: if template.kind.uses_memory() {
                template.influence
            } else {
                None
            },
            scaling: template.scaling,
            protocol,
            params: ParamTuple {
                gamma: 0.0,
                lambda: None,
                kernel_param: None,
                influence_param: None,
            },
            trials: Vec::new(),
            summary: Summary::of(&[]),
            grid: None,
        }
    }

    /// Zeroes every timing field.
    pub fn strip_timings(&mut self) {
        let strip = |t: &mut TrialResult| {
            t.fit_seconds = 0.0;
            t.predict_seconds = 0.0;
        };
        self.trials.iter_mut().for_each(strip);
        if let Some(g) = &mut self.grid {
            g.cells
                .iter_mut()
                .flat_map(|c| c.trials.iter_mut())
                .for_each(strip);
        }
    }
}

fn accuracy(pred: &[i8], truth: &[i8]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    pred.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64
}

fn max_abs(values: &[f64]) -> f64 {
    values.iter().fold(0.0, |a, v| a.max(v.abs()))
}

/// Fits on `train`, scores both parts and times the fit and the test-set
/// prediction separately.
pub fn evaluate(
    config: &ModelConfig,
    train: &Dataset,
    test: &Dataset,
    trial: usize,
    seed: u64,
) -> TrialResult {
    let params = ParamTuple::of(config);
    let start = Instant::now();
    let fitted = config.fit(&train.x, &train.y);
    let fit_seconds = start.elapsed().as_secs_f64();
    let model = match fitted {
        Ok(m) => m,
        Err(e) => {
            let mut r = TrialResult::failed(trial, seed, params, &e);
            r.train_size = train.len();
            r.test_size = test.len();
            r.fit_seconds = fit_seconds;
            return r;
        }
    };
    let start = Instant::now();
    let test_pred = model.predict(&test.x);
    let predict_seconds = start.elapsed().as_secs_f64();
    let scored = test_pred.and_then(|tp| Ok((tp, model.predict(&train.x)?)));
    match scored {
        Ok((test_pred, train_pred)) => TrialResult {
            trial,
            seed,
            params,
            train_size: train.len(),
            test_size: test.len(),
            train_accuracy: accuracy(&train_pred, &train.y),
            test_accuracy: accuracy(&test_pred, &test.y),
            fit_seconds,
            predict_seconds,
            solver_singular: false,
            max_train_residual: memory_residual(&model),
            status: TrialStatus::Ok,
        },
        Err(e) => TrialResult::failed(trial, seed, params, &e),
    }
}

fn memory_residual(model: &FittedModel) -> Option<f64> {
    model
        .kind()
        .uses_memory()
        .then(|| max_abs(&model.training_residuals()))
}

/// How the training part of a trial is derived from the split.
#[derive(Debug, Clone, Copy)]
enum TrainTransform {
    None,
    Noise(f64),
    Subsample(f64),
}

fn trial_data(
    ds: &Dataset,
    protocol: &Protocol,
    trial: usize,
    transform: TrainTransform,
) -> Result<(Dataset, Dataset)> {
    let seed = protocol.trial_seed(trial);
    let (train, test) = stratified_split(ds, &SplitSpec::new(protocol.train_fraction, seed))?;
    let train = match transform {
        TrainTransform::None => train,
        TrainTransform::Noise(f) => inject_label_noise(&train, f, seed)?,
        TrainTransform::Subsample(f) => subsample(&train, f, seed)?,
    };
    Ok((train, test))
}

fn run_protocol(
    ds: &Dataset,
    config: &ModelConfig,
    protocol: &Protocol,
    descriptor: ProtocolDescriptor,
    transform: TrainTransform,
    data_errors_fatal: bool,
) -> Result<ExperimentReport> {
    protocol.validate()?;
    let template = ModelTemplate::of(config);
    let mut report = ExperimentReport::new(ds, &template, descriptor);
    report.params = ParamTuple::of(config);
    for trial in 0..protocol.trials {
        let seed = protocol.trial_seed(trial);
        let result = match trial_data(ds, protocol, trial, transform) {
            Ok((train, test)) => evaluate(config, &train, &test, trial, seed),
            Err(e) if !data_errors_fatal => TrialResult::failed(trial, seed, report.params, &e),
            Err(e) => return Err(e),
        };
        report.trials.push(result);
    }
    report.summary = Summary::of(&report.trials);
    Ok(report)
}

/// Repeated stratified trials with fixed parameters. Trials run serially so
/// their timings are not skewed by contention.
pub fn run_trials(
    ds: &Dataset,
    config: &ModelConfig,
    protocol: &Protocol,
) -> Result<ExperimentReport> {
    run_protocol(
        ds,
        config,
        protocol,
        ProtocolDescriptor::new("trials", protocol),
        TrainTransform::None,
        true,
    )
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot start worker pool: {e}")))
}

/// One (trial, kernel parameter, influence parameter) work unit of a grid:
/// the kernel and memory matrices are assembled once, each γ is factored
/// once and each λ costs a single back-substitution.
fn grid_unit(
    template: &ModelTemplate,
    grid: &GridSpec,
    train: &Dataset,
    test: &Dataset,
    trial: usize,
    seed: u64,
    kernel_param: Option<f64>,
    influence_param: Option<f64>,
) -> Vec<TrialResult> {
    let lambdas = template.lambda_axis(grid);
    let tuples = |gamma: f64| {
        lambdas.iter().map(move |&lambda| ParamTuple {
            gamma,
            lambda,
            kernel_param,
            influence_param,
        })
    };
    let all_failed = |err: &Error, secs: f64| -> Vec<TrialResult> {
        grid.gamma_grid
            .iter()
            .flat_map(|&g| tuples(g))
            .map(|p| {
                let mut r = TrialResult::failed(trial, seed, p, err);
                r.train_size = train.len();
                r.test_size = test.len();
                r.fit_seconds = secs;
                r
            })
            .collect()
    };

    let start = Instant::now();
    let base = ParamTuple {
        gamma: grid.gamma_grid[0],
        lambda: lambdas[0],
        kernel_param,
        influence_param,
    };
    let prepared = template.config(&base).and_then(|config| {
        let problem = config.problem(&train.x, &train.y)?;
        let train_basis = problem.score_basis(problem.features())?;
        let test_basis = problem.score_basis(&problem.standardize(&test.x)?)?;
        Ok((problem, train_basis, test_basis))
    });
    let assembly = start.elapsed().as_secs_f64();
    let (problem, train_basis, test_basis) = match prepared {
        Ok(p) => p,
        Err(e) => return all_failed(&e, assembly),
    };

    let mut out = Vec::with_capacity(grid.gamma_grid.len() * lambdas.len());
    for &gamma in &grid.gamma_grid {
        let start = Instant::now();
        let factored = problem.factor(gamma);
        let factor_secs = start.elapsed().as_secs_f64();
        for params in tuples(gamma) {
            let record = |r: std::result::Result<(f64, f64, f64, f64), Error>| match r {
                Ok((train_acc, test_acc, fit_s, pred_s)) => TrialResult {
                    trial,
                    seed,
                    params,
                    train_size: train.len(),
                    test_size: test.len(),
                    train_accuracy: train_acc,
                    test_accuracy: test_acc,
                    fit_seconds: fit_s,
                    predict_seconds: pred_s,
                    solver_singular: false,
                    max_train_residual: None,
                    status: TrialStatus::Ok,
                },
                Err(e) => {
                    let mut r = TrialResult::failed(trial, seed, params, &e);
                    r.train_size = train.len();
                    r.test_size = test.len();
                    r
                }
            };
            let result = match &factored {
                Err(e) => Err(clone_error(e)),
                Ok(f) => {
                    let start = Instant::now();
                    f.solve(params.lambda.unwrap_or(0.0)).map(|model| {
                        let solve_secs = start.elapsed().as_secs_f64();
                        let start = Instant::now();
                        let test_scores = model.scores(&test_basis);
                        let pred_s = start.elapsed().as_secs_f64();
                        let train_scores = model.scores(&train_basis);
                        (
                            score_accuracy(&train_scores, &train.y),
                            score_accuracy(&test_scores, &test.y),
                            assembly + factor_secs + solve_secs,
                            pred_s,
                        )
                    })
                }
            };
            out.push(record(result));
        }
    }
    out
}

fn score_accuracy(scores: &[f64], truth: &[i8]) -> f64 {
    let pred: Vec<i8> = scores.iter().map(|&s| crate::models::sign_label(s)).collect();
    accuracy(&pred, truth)
}

fn clone_error(e: &Error) -> Error {
    match e {
        Error::SingularMatrix {
            step,
            pivot,
            threshold,
        } => Error::SingularMatrix {
            step: *step,
            pivot: *pivot,
            threshold: *threshold,
        },
        other => Error::InvalidParameter(other.to_string()),
    }
}

fn better(a: &GridCell, b: &GridCell, by_test: bool) -> bool {
    let (pa, sa) = if by_test {
        (a.summary.test_mean, a.summary.train_mean)
    } else {
        (a.summary.train_mean, a.summary.test_mean)
    };
    let (pb, sb) = if by_test {
        (b.summary.test_mean, b.summary.train_mean)
    } else {
        (b.summary.train_mean, b.summary.test_mean)
    };
    pa > pb || (pa == pb && (sa > sb || (sa == sb && a.params.lex_cmp(&b.params).is_lt())))
}

fn select(cells: &[GridCell], by_test: bool) -> &GridCell {
    let mut best = &cells[0];
    for c in &cells[1..] {
        if better(c, best, by_test) {
            best = c;
        }
    }
    best
}

/// Evaluates every parameter tuple of the grid over `protocol.trials`
/// stratified splits and re-runs the test-selected tuple with [`run_trials`]
/// for the headline numbers. Singular fits score zero accuracy and are
/// flagged; they never abort the sweep.
pub fn grid_search(
    ds: &Dataset,
    template: &ModelTemplate,
    grid: &GridSpec,
    protocol: &Protocol,
) -> Result<(ParamTuple, ExperimentReport)> {
    grid.validate()?;
    protocol.validate()?;
    let splits: Vec<(Dataset, Dataset)> = (0..protocol.trials)
        .map(|t| trial_data(ds, protocol, t, TrainTransform::None))
        .collect::<Result<_>>()?;

    let kernel_axis = template.kernel_axis(grid);
    let influence_axis = template.influence_axis(grid);
    let mut units = Vec::new();
    for trial in 0..protocol.trials {
        for &kp in &kernel_axis {
            for &ip in &influence_axis {
                units.push((trial, kp, ip));
            }
        }
    }
    let pool = thread_pool(protocol.jobs)?;
    let results: Vec<Vec<TrialResult>> = pool.install(|| {
        units
            .par_iter()
            .map(|&(trial, kp, ip)| {
                let (train, test) = &splits[trial];
                grid_unit(
                    template,
                    grid,
                    train,
                    test,
                    trial,
                    protocol.trial_seed(trial),
                    kp,
                    ip,
                )
            })
            .collect()
    });

    let mut cells: Vec<GridCell> = Vec::new();
    let mut flat: Vec<TrialResult> = results.into_iter().flatten().collect();
    flat.sort_by(|a, b| a.params.lex_cmp(&b.params).then(a.trial.cmp(&b.trial)));
    for r in flat {
        match cells.last_mut() {
            Some(c) if c.params.lex_cmp(&r.params).is_eq() => c.trials.push(r),
            _ => cells.push(GridCell {
                params: r.params,
                summary: Summary::of(&[]),
                trials: vec![r],
            }),
        }
    }
    for c in &mut cells {
        c.summary = Summary::of(&c.trials);
    }

    let by_test = select(&cells, true);
    let by_train = select(&cells, false);
    let best = by_test.params;
    let outcome = GridOutcome {
        best_by_test: best,
        best_by_test_summary: by_test.summary,
        best_by_train: by_train.params,
        best_by_train_summary: by_train.summary,
        train_selection: TRAIN_SELECTION_RULE.to_string(),
        cells,
    };

    let config = template.config(&best)?;
    let mut descriptor = ProtocolDescriptor::new("grid_search", protocol);
    descriptor.selection = Some(SELECTION_RULE.to_string());
    let mut report = run_protocol(ds, &config, protocol, descriptor, TrainTransform::None, true)?;
    report.grid = Some(outcome);
    Ok((best, report))
}

fn check_fractions(values: &[f64], lo_open: bool, name: &str) -> Result<()> {
    if values.is_empty() {
        return Err(Error::InvalidParameter(format!("{name} list is empty")));
    }
    for &v in values {
        let ok = if lo_open {
            v > 0.0 && v <= 1.0
        } else {
            (0.0..=1.0).contains(&v)
        };
        if !ok {
            return Err(Error::InvalidParameter(format!("{name} {v} out of range")));
        }
    }
    Ok(())
}

/// For each noise fraction: split, flip that fraction of the training labels,
/// fit, and record training accuracy on the noisy labels and test accuracy
/// on clean labels.
pub fn noise_sweep(
    ds: &Dataset,
    config: &ModelConfig,
    fractions: &[f64],
    protocol: &Protocol,
) -> Result<Vec<ExperimentReport>> {
    check_fractions(fractions, false, "noise fraction")?;
    fractions
        .iter()
        .map(|&f| {
            run_protocol(
                ds,
                config,
                protocol,
                ProtocolDescriptor::new("noise_sweep", protocol).sweep("label_noise", f),
                TrainTransform::Noise(f),
                true,
            )
        })
        .collect()
}

/// For each fraction: split, keep a stratified prefix subsample of the
/// training part, fit and evaluate. Sampling failures are recorded per trial.
pub fn learning_curve(
    ds: &Dataset,
    config: &ModelConfig,
    fractions: &[f64],
    protocol: &Protocol,
) -> Result<Vec<ExperimentReport>> {
    check_fractions(fractions, true, "training fraction")?;
    fractions
        .iter()
        .map(|&f| {
            run_protocol(
                ds,
                config,
                protocol,
                ProtocolDescriptor::new("learning_curve", protocol).sweep("train_fraction_used", f),
                TrainTransform::Subsample(f),
                false,
            )
        })
        .collect()
}

/// Sweeps the influence-function parameter with γ and λ held fixed.
pub fn param_sensitivity(
    ds: &Dataset,
    config: &ModelConfig,
    values: &[f64],
    protocol: &Protocol,
) -> Result<Vec<ExperimentReport>> {
    let Some(influence) = config.influence.filter(|_| config.kind.uses_memory()) else {
        return Err(Error::InvalidParameter(
            "parameter sensitivity needs a memory model with an influence function".into(),
        ));
    };
    if values.is_empty() {
        return Err(Error::InvalidParameter("parameter list is empty".into()));
    }
    values
        .iter()
        .map(|&v| {
            let config = ModelConfig {
                influence: Some(influence.variant.with_param(v)?),
                ..*config
            };
            run_protocol(
                ds,
                &config,
                protocol,
                ProtocolDescriptor::new("param_sensitivity", protocol)
                    .sweep("influence_param", v),
                TrainTransform::None,
                true,
            )
        })
        .collect()
}

/// One row of an accuracy table: LSSVM followed by one memory model per
/// influence variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub dataset: String,
    pub model: ModelKind,
    pub columns: Vec<TableColumn>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableColumn {
    pub label: String,
    pub train_mean_pct: f64,
    pub train_std_pct: f64,
    pub test_mean_pct: f64,
    pub test_std_pct: f64,
}

impl TableColumn {
    fn of(label: String, s: &Summary) -> Self {
        Self {
            label,
            train_mean_pct: 100.0 * s.train_mean,
            train_std_pct: 100.0 * s.train_std,
            test_mean_pct: 100.0 * s.test_mean,
            test_std_pct: 100.0 * s.test_std,
        }
    }
}

/// Output of [`benchmark`]: the grid-search reports (LSSVM first) and one
/// table row per memory model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchOutcome {
    pub reports: Vec<ExperimentReport>,
    pub rows: Vec<TableRow>,
}

fn variant_index(v: InfluenceVariant) -> usize {
    InfluenceVariant::ALL.iter().position(|x| *x == v).expect("listed") + 1
}

pub fn column_label(kind: ModelKind, variant: Option<InfluenceVariant>) -> String {
    match variant {
        Some(v) if kind.uses_memory() => format!("{}^{}", kind.name().to_uppercase(), variant_index(v)),
        _ => kind.name().to_uppercase(),
    }
}

/// Grid-searches the LSSVM baseline once and every memory model in `kinds`
/// with each influence variant, then tabulates the headline train/test
/// accuracies.
pub fn benchmark(
    ds: &Dataset,
    kinds: &[ModelKind],
    variants: &[InfluenceVariant],
    kernel: KernelSpec,
    grid: &GridSpec,
    protocol: &Protocol,
) -> Result<BenchOutcome> {
    let (_, baseline) = grid_search(ds, &ModelTemplate::new(ModelKind::Lssvm, kernel, None), grid, protocol)?;
    let base_col = TableColumn::of(column_label(ModelKind::Lssvm, None), &baseline.summary);
    let mut reports = vec![baseline];
    let mut rows = Vec::new();
    for &kind in kinds.iter().filter(|k| k.uses_memory()) {
        let mut columns = vec![base_col.clone()];
        for &v in variants {
            let (_, report) = grid_search(ds, &ModelTemplate::new(kind, kernel, Some(v)), grid, protocol)?;
            columns.push(TableColumn::of(column_label(kind, Some(v)), &report.summary));
            reports.push(report);
        }
        rows.push(TableRow {
            dataset: ds.name.clone(),
            model: kind,
            columns,
        });
    }
    Ok(BenchOutcome { reports, rows })
}

fn pm(mean: f64, std: f64) -> String {
    format!("{:.2}±{:.2}", mean, std)
}

/// Renders rows as a Markdown table: every train column, then every test
/// column, as `mean±std` percentages.
pub fn format_table(rows: &[TableRow]) -> String {
    let Some(first) = rows.first() else {
        return String::new();
    };
    let mut out = String::from("| dataset |");
    for c in &first.columns {
        out.push_str(&format!(" {} train(%) |", c.label));
    }
    for c in &first.columns {
        out.push_str(&format!(" {} test(%) |", c.label));
    }
    out.push('\n');
    out.push_str("|---|");
    for _ in 0..2 * first.columns.len() {
        out.push_str("---|");
    }
    out.push('\n');
    for r in rows {
        out.push_str(&format!("| {} |", r.dataset));
        for c in &r.columns {
            out.push_str(&format!(" {} |", pm(c.train_mean_pct, c.train_std_pct)));
        }
        for c in &r.columns {
            out.push_str(&format!(" {} |", pm(c.test_mean_pct, c.test_std_pct)));
        }
        out.push('\n');
    }
    out.push_str("\n^1 gaussian, ^2 hinge, ^3 ball, ^4 inverse influence\n");
    out
}

/// Top-level report file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub schema_version: u32,
    pub command: String,
    pub reports: Vec<ExperimentReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub table: Vec<TableRow>,
}

impl ReportDocument {
    pub fn new(command: impl Into<String>, reports: Vec<ExperimentReport>) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            command: command.into(),
            reports,
            table: Vec::new(),
        }
    }

    pub fn strip_timings(&mut self) {
        self.reports.iter_mut().for_each(ExperimentReport::strip_timings);
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&s)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::InvalidParameter(format!(
                "unknown report format '{other}' (expected json or csv)"
            ))),
        }
    }
}

pub const CSV_COLUMNS: [&str; 22] = [
    "dataset",
    "model",
    "kernel",
    "influence",
    "protocol",
    "sweep_axis",
    "sweep_value",
    "gamma",
    "lambda",
    "kernel_param",
    "influence_param",
    "trial",
    "seed",
    "train_size",
    "test_size",
    "train_accuracy",
    "test_accuracy",
    "fit_seconds",
    "predict_seconds",
    "solver_singular",
    "max_train_residual",
    "status",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// CSV rows: one per trial and parameter tuple (grid reports list every
/// cell) and sweep point.
pub fn to_csv(doc: &ReportDocument) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_COLUMNS)?;
    for r in &doc.reports {
        let trials: Vec<&TrialResult> = match &r.grid {
            Some(g) => g.cells.iter().flat_map(|c| &c.trials).collect(),
            None => r.trials.iter().collect(),
        };
        for t in trials {
            let status = match &t.status {
                TrialStatus::Ok => "ok".to_string(),
                TrialStatus::Singular => "singular".to_string(),
                TrialStatus::Failed(m) => format!("failed: {m}"),
            };
            w.write_record([
                r.dataset.clone(),
                r.model.to_string(),
                r.kernel.clone(),
                r.influence.map(|v| v.to_string()).unwrap_or_default(),
                r.protocol.name.clone(),
                r.protocol.sweep_axis.clone().unwrap_or_default(),
                opt(r.protocol.sweep_value),
                t.params.gamma.to_string(),
                opt(t.params.lambda),
                opt(t.params.kernel_param),
                opt(t.params.influence_param),
                t.trial.to_string(),
                t.seed.to_string(),
                t.train_size.to_string(),
                t.test_size.to_string(),
                t.train_accuracy.to_string(),
                t.test_accuracy.to_string(),
                t.fit_seconds.to_string(),
                t.predict_seconds.to_string(),
                t.solver_singular.to_string(),
                opt(t.max_train_residual),
                status,
            ])?;
        }
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::InvalidParameter(format!("csv buffer: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn write_report(doc: &ReportDocument, path: impl AsRef<Path>, format: ReportFormat) -> Result<()> {
    let path = path.as_ref();
    let body = match format {
        ReportFormat::Json => doc.to_json()?,
        ReportFormat::Csv => to_csv(doc)?,
    };
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        let g = power_grid();
        assert_eq!(g.len(), 12);
        assert_eq!(g[0], 1.0 / 64.0);
        assert_eq!(g[11], 32.0);
        assert_eq!(default_noise_fractions().len(), 11);
        assert_eq!(default_learning_fractions().len(), 10);
        assert_eq!(default_sensitivity_values().len(), 20);
        assert_eq!(default_noise_fractions()[3], 0.15);
        assert!(linear_range(1.0, 0.0, 2.0).is_err());
        assert!(GridSpec {
            gamma_grid: vec![0.0],
            ..GridSpec::default()
        }
        .validate()
        .is_err());
        assert!(GridSpec {
            lambda_grid: vec![0.0],
            ..GridSpec::default()
        }
        .validate()
        .is_ok());
    }

    #[test]
    fn population_std() {
        let (m, s) = mean_std([1.0, 3.0].into_iter());
        assert_eq!((m, s), (2.0, 1.0));
        assert_eq!(mean_std([0.5].into_iter()), (0.5, 0.0));
    }

    #[test]
    fn tuple_order() {
        let t = |g: f64, l: f64| ParamTuple {
            gamma: g,
            lambda: Some(l),
            kernel_param: None,
            influence_param: Some(1.0),
        };
        assert!(t(0.5, 2.0).lex_cmp(&t(1.0, 0.0)).is_lt());
        assert!(t(1.0, 0.0).lex_cmp(&t(1.0, 0.5)).is_lt());
        assert!(t(1.0, 0.5).lex_cmp(&t(1.0, 0.5)).is_eq());
    }

    #[test]
    fn table_layout() {
        let row = TableRow {
            dataset: "toy".into(),
            model: ModelKind::Wimm,
            columns: vec![
                TableColumn::of(
                    "LSSVM".into(),
                    &Summary {
                        train_mean: 0.9,
                        train_std: 0.01,
                        test_mean: 0.85,
                        test_std: 0.02,
                        singular_trials: 0,
                        failed_trials: 0,
                    },
                ),
                TableColumn::of(
                    "WIMM^1".into(),
                    &Summary {
                        train_mean: 1.0,
                        train_std: 0.0,
                        test_mean: 0.875,
                        test_std: 0.0,
                        singular_trials: 0,
                        failed_trials: 0,
                    },
                ),
            ],
        };
        let t = format_table(&[row]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(
            lines[0],
            "| dataset | LSSVM train(%) | WIMM^1 train(%) | LSSVM test(%) | WIMM^1 test(%) |"
        );
        assert_eq!(lines[2], "| toy | 90.00±1.00 | 100.00±0.00 | 85.00±2.00 | 87.50±0.00 |");
    }
}
