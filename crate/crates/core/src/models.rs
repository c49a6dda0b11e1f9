//! Least-squares SVM and its two memory-augmented variants.
//!
//! All three models reduce to one symmetric bordered system
//!
//! ```text
//! [ Y K Y + (1/γ) M   Y 1 ] [α]   [ 1 + (λ/γ) M 1 ]
//! [ 1ᵀ Y              0   ] [b] = [ 0             ]
//! ```
//!
//! with `M = I` for the LSSVM, `M = Y Δ Δᵀ Y` for the weighted-impact model
//! (WIMM) and `M = D²`, `D = diag(δ)`, for the maximum-impact model (MIMM).
//! The memory costs are recovered afterwards:
//! `ξ_k = (y_k/γ) Σ_i (α_i - λ) y_i δ(x_i, x_k)` for WIMM and
//! `ξ_i = (α_i - λ) δ_i / γ` for MIMM.
//!
//! [`TrainingProblem`] holds the assembled kernel and memory matrices;
//! [`TrainingProblem::factor`] fixes γ and factors the system, and
//! [`FactoredProblem::solve`] produces a [`FittedModel`] for any λ. The
//! `fit_*` functions chain the three steps.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::json;
use crate::kernels::{
    class_centroids, gram_matrix, gram_symmetric, influence_cross, influence_eval,
    influence_matrix, mimm_delta_vector, CentroidPair, InfluenceSpec, KernelSpec,
};
use crate::linalg::{
    assemble_bordered, dot, lu_factor, matmul_transpose_b, residual_inf_norm, squared_distance,
    DenseMatrix, LuFactors, SolveReport,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Lssvm,
    Wimm,
    Mimm,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Lssvm => "lssvm",
            ModelKind::Wimm => "wimm",
            ModelKind::Mimm => "mimm",
        }
    }

    pub fn uses_memory(&self) -> bool {
        !matches!(self, ModelKind::Lssvm)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lssvm" => Ok(ModelKind::Lssvm),
            "wimm" => Ok(ModelKind::Wimm),
            "mimm" => Ok(ModelKind::Mimm),
            other => Err(Error::InvalidParameter(format!(
                "unknown model '{other}' (expected lssvm, wimm or mimm)"
            ))),
        }
    }
}

/// Memory-cost weight γ > 0 and memory-impact weight λ ≥ 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub gamma: f64,
    pub lambda: f64,
}

impl ModelParams {
    pub fn new(gamma: f64, lambda: f64) -> Result<Self> {
        validate_gamma(gamma)?;
        validate_lambda(lambda)?;
        Ok(Self { gamma, lambda })
    }
}

fn validate_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "gamma must be positive and finite, got {gamma}"
        )))
    }
}

fn validate_lambda(lambda: f64) -> Result<()> {
    if lambda >= 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "lambda must be non-negative and finite, got {lambda}"
        )))
    }
}

/// Feature scaling applied inside fit and predict.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    /// Per-feature z-score from training statistics (population std; constant
    /// features get scale 1).
    #[default]
    ZScore,
    /// Features are used as given.
    None,
}

impl FromStr for Scaling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "zscore" => Ok(Scaling::ZScore),
            "none" => Ok(Scaling::None),
            other => Err(Error::InvalidParameter(format!(
                "unknown scaling '{other}' (expected zscore or none)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &DenseMatrix, scaling: Scaling) -> Self {
        let n = x.cols();
        if scaling == Scaling::None {
            return Self::identity(n);
        }
        let m = x.rows() as f64;
        let mut mean = vec![0.0; n];
        for row in x.row_iter() {
            for (a, v) in mean.iter_mut().zip(row) {
                *a += v;
            }
        }
        mean.iter_mut().for_each(|v| *v /= m);
        let mut var = vec![0.0; n];
        for row in x.row_iter() {
            for ((a, v), mu) in var.iter_mut().zip(row).zip(&mean) {
                *a += (v - mu) * (v - mu);
            }
        }
        let scale = var
            .into_iter()
            .map(|v| {
                let s = (v / m).sqrt();
                if s > 0.0 && s.is_finite() {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            mean: vec![0.0; n],
            scale: vec![1.0; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "point has {} features, model expects {}",
                row.len(),
                self.dim()
            )));
        }
        Ok(row
            .iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (mu, s))| (v - mu) / s)
            .collect())
    }

    pub fn apply(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        if x.cols() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "data has {} features, model expects {}",
                x.cols(),
                self.dim()
            )));
        }
        let mut out = x.clone();
        for i in 0..out.rows() {
            for (v, (mu, s)) in out.row_mut(i).iter_mut().zip(self.mean.iter().zip(&self.scale)) {
                *v = (*v - mu) / s;
            }
        }
        Ok(out)
    }
}

/// Source of the WIMM influence matrix `Δ`.
#[derive(Debug, Clone, PartialEq)]
pub enum WimmMemory {
    Influence(InfluenceSpec),
    /// Explicit symmetric `m x m` matrix. At prediction time the memory term
    /// is only defined on points that coincide with a training sample.
    Matrix(DenseMatrix),
}

/// Source of the MIMM influence vector `δ`.
#[derive(Debug, Clone, PartialEq)]
pub enum MimmMemory {
    Influence(InfluenceSpec),
    /// Explicit `δ_i`, one per training sample; used at prediction time only
    /// when the nearest training sample coincides with the query.
    Deltas(Vec<f64>),
}

/// Complete description of a model to fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub kernel: KernelSpec,
    pub influence: Option<InfluenceSpec>,
    pub params: ModelParams,
    pub scaling: Scaling,
}

impl ModelConfig {
    pub fn problem(&self, x: &DenseMatrix, y: &[i8]) -> Result<TrainingProblem> {
        let need_influence = || {
            self.influence.ok_or_else(|| {
                Error::InvalidParameter(format!("{} needs an influence function", self.kind))
            })
        };
        match self.kind {
            ModelKind::Lssvm => TrainingProblem::lssvm(x, y, self.kernel, self.scaling),
            ModelKind::Wimm => TrainingProblem::wimm(
                x,
                y,
                self.kernel,
                WimmMemory::Influence(need_influence()?),
                self.scaling,
            ),
            ModelKind::Mimm => TrainingProblem::mimm(
                x,
                y,
                self.kernel,
                MimmMemory::Influence(need_influence()?),
                self.scaling,
            ),
        }
    }

    pub fn fit(&self, x: &DenseMatrix, y: &[i8]) -> Result<FittedModel> {
        self.problem(x, y)?
            .factor(self.params.gamma)?
            .solve(self.params.lambda)
    }
}

#[derive(Debug, Clone)]
enum ProblemMemory {
    None,
    Weighted {
        influence: Option<InfluenceSpec>,
        explicit: Option<DenseMatrix>,
        /// Δ, borrowed from `explicit` when given.
        delta: Option<DenseMatrix>,
        /// Y Δ Δᵀ Y
        memory_block: DenseMatrix,
        memory_row_sums: Vec<f64>,
    },
    Maximum {
        influence: Option<InfluenceSpec>,
        centroids: CentroidPair,
        deltas: Vec<f64>,
    },
}

/// Standardized training data with the kernel and memory matrices assembled.
#[derive(Debug, Clone)]
pub struct TrainingProblem {
    kind: ModelKind,
    kernel: KernelSpec,
    standardizer: Standardizer,
    x: DenseMatrix,
    y: Vec<i8>,
    /// Y K Y
    kernel_block: DenseMatrix,
    memory: ProblemMemory,
}

fn check_labels(x: &DenseMatrix, y: &[i8]) -> Result<()> {
    if x.rows() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} feature rows and {} labels",
            x.rows(),
            y.len()
        )));
    }
    if let Some(bad) = y.iter().find(|&&l| l != 1 && l != -1) {
        return Err(Error::InvalidParameter(format!("label {bad} is not +1 or -1")));
    }
    if !y.contains(&1) {
        return Err(Error::MissingClass(1));
    }
    if !y.contains(&-1) {
        return Err(Error::MissingClass(-1));
    }
    Ok(())
}

fn signed_block(a: &DenseMatrix, y: &[i8]) -> DenseMatrix {
    let mut out = a.clone();
    for (i, &yi) in y.iter().enumerate() {
        for (v, &yj) in out.row_mut(i).iter_mut().zip(y) {
            if yi != yj {
                *v = -*v;
            }
        }
    }
    out
}

impl TrainingProblem {
    fn base(
        kind: ModelKind,
        x: &DenseMatrix,
        y: &[i8],
        kernel: KernelSpec,
        scaling: Scaling,
    ) -> Result<(Standardizer, DenseMatrix, DenseMatrix)> {
        check_labels(x, y)?;
        kernel.validate()?;
        if kind.uses_memory() && x.rows() < 2 {
            return Err(Error::InsufficientClassSamples("need at least 2 samples".into()));
        }
        let standardizer = Standardizer::fit(x, scaling);
        let xs = standardizer.apply(x)?;
        let kernel_block = signed_block(&gram_symmetric(&kernel, &xs), y);
        Ok((standardizer, xs, kernel_block))
    }

    pub fn lssvm(x: &DenseMatrix, y: &[i8], kernel: KernelSpec, scaling: Scaling) -> Result<Self> {
        let (standardizer, xs, kernel_block) = Self::base(ModelKind::Lssvm, x, y, kernel, scaling)?;
        Ok(Self {
            kind: ModelKind::Lssvm,
            kernel,
            standardizer,
            x: xs,
            y: y.to_vec(),
            kernel_block,
            memory: ProblemMemory::None,
        })
    }

    pub fn wimm(
        x: &DenseMatrix,
        y: &[i8],
        kernel: KernelSpec,
        memory: WimmMemory,
        scaling: Scaling,
    ) -> Result<Self> {
        let (standardizer, xs, kernel_block) = Self::base(ModelKind::Wimm, x, y, kernel, scaling)?;
        let m = xs.rows();
        let (influence, explicit, delta) = match memory {
            WimmMemory::Influence(spec) => {
                spec.validate()?;
                (Some(spec), None, Some(influence_matrix(&spec, &xs)))
            }
            WimmMemory::Matrix(d) => {
                if d.rows() != m || d.cols() != m {
                    return Err(Error::DimensionMismatch(format!(
                        "influence matrix is {}x{}, expected {m}x{m}",
                        d.rows(),
                        d.cols()
                    )));
                }
                if !d.is_symmetric() {
                    return Err(Error::InvalidParameter(
                        "influence matrix must be symmetric".into(),
                    ));
                }
                (None, Some(d), None)
            }
        };
        let delta_ref = delta.as_ref().or(explicit.as_ref()).expect("one source is set");
        let mut product = matmul_transpose_b(delta_ref, delta_ref)?;
        product.mirror_lower();
        let memory_block = signed_block(&product, y);
        let memory_row_sums = memory_block.row_iter().map(|r| r.iter().sum()).collect();
        Ok(Self {
            kind: ModelKind::Wimm,
            kernel,
            standardizer,
            x: xs,
            y: y.to_vec(),
            kernel_block,
            memory: ProblemMemory::Weighted {
                influence,
                explicit,
                delta,
                memory_block,
                memory_row_sums,
            },
        })
    }

    pub fn mimm(
        x: &DenseMatrix,
        y: &[i8],
        kernel: KernelSpec,
        memory: MimmMemory,
        scaling: Scaling,
    ) -> Result<Self> {
        let (standardizer, xs, kernel_block) = Self::base(ModelKind::Mimm, x, y, kernel, scaling)?;
        let centroids = class_centroids(&xs, y)?;
        let (influence, deltas) = match memory {
            MimmMemory::Influence(spec) => {
                spec.validate()?;
                let d = mimm_delta_vector(&spec, &xs, y, &centroids)?;
                (Some(spec), d)
            }
            MimmMemory::Deltas(d) => {
                if d.len() != xs.rows() {
                    return Err(Error::DimensionMismatch(format!(
                        "{} influence values for {} samples",
                        d.len(),
                        xs.rows()
                    )));
                }
                if d.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("influence vector".into()));
                }
                (None, d)
            }
        };
        Ok(Self {
            kind: ModelKind::Mimm,
            kernel,
            standardizer,
            x: xs,
            y: y.to_vec(),
            kernel_block,
            memory: ProblemMemory::Maximum {
                influence,
                centroids,
                deltas,
            },
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn standardizer(&self) -> &Standardizer {
        &self.standardizer
    }

    /// Standardized training features.
    pub fn features(&self) -> &DenseMatrix {
        &self.x
    }

    pub fn labels(&self) -> &[i8] {
        &self.y
    }

    /// Influence matrix Δ (WIMM only).
    pub fn influence_matrix(&self) -> Option<&DenseMatrix> {
        match &self.memory {
            ProblemMemory::Weighted {
                delta, explicit, ..
            } => delta.as_ref().or(explicit.as_ref()),
            _ => None,
        }
    }

    /// Influence vector δ (MIMM only).
    pub fn influence_vector(&self) -> Option<&[f64]> {
        match &self.memory {
            ProblemMemory::Maximum { deltas, .. } => Some(deltas),
            _ => None,
        }
    }

    /// Assembles the bordered system for this γ and factors it.
    pub fn factor(&self, gamma: f64) -> Result<FactoredProblem<'_>> {
        validate_gamma(gamma)?;
        let inv_gamma = 1.0 / gamma;
        let mut h = self.kernel_block.clone();
        match &self.memory {
            ProblemMemory::None => {
                for i in 0..h.rows() {
                    let v = h.get(i, i);
                    h.set(i, i, v + inv_gamma);
                }
            }
            ProblemMemory::Weighted { memory_block, .. } => {
                for (dst, src) in h.as_mut_slice().iter_mut().zip(memory_block.as_slice()) {
                    *dst += inv_gamma * src;
                }
            }
            ProblemMemory::Maximum { deltas, .. } => {
                for (i, d) in deltas.iter().enumerate() {
                    let v = h.get(i, i);
                    h.set(i, i, v + inv_gamma * (d * d));
                }
            }
        }
        let border: Vec<f64> = self.y.iter().map(|&l| f64::from(l)).collect();
        let system = assemble_bordered(&h, &border)?;
        drop(h);
        let lu = lu_factor(&system)?;
        Ok(FactoredProblem {
            problem: self,
            gamma,
            system,
            lu,
        })
    }

    /// Standardizes raw points with the training statistics.
    pub fn standardize(&self, raw: &DenseMatrix) -> Result<DenseMatrix> {
        self.standardizer.apply(raw)
    }

    /// Precomputes kernel and memory evaluations against standardized points.
    pub fn score_basis(&self, points: &DenseMatrix) -> Result<ScoreBasis> {
        let (influence, explicit_delta, centroids, delta_vec) = match &self.memory {
            ProblemMemory::None => (None, None, None, None),
            ProblemMemory::Weighted {
                influence,
                explicit,
                ..
            } => (influence.as_ref(), explicit.as_ref(), None, None),
            ProblemMemory::Maximum {
                influence,
                centroids,
                deltas,
            } => (influence.as_ref(), None, Some(centroids), Some(deltas.as_slice())),
        };
        build_basis(&MemoryView {
            kind: self.kind,
            kernel: &self.kernel,
            train_x: &self.x,
            train_y: &self.y,
            influence,
            explicit_delta,
            centroids,
            delta_vec,
            points,
        })
    }
}

/// A training problem with γ fixed and its bordered system factored.
pub struct FactoredProblem<'a> {
    problem: &'a TrainingProblem,
    gamma: f64,
    system: DenseMatrix,
    lu: LuFactors,
}

impl FactoredProblem<'_> {
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn system(&self) -> &DenseMatrix {
        &self.system
    }

    pub fn rhs(&self, lambda: f64) -> Vec<f64> {
        let p = self.problem;
        let scale = lambda / self.gamma;
        let mut rhs = vec![1.0; p.len() + 1];
        match &p.memory {
            ProblemMemory::None => {}
            ProblemMemory::Weighted {
                memory_row_sums, ..
            } => {
                for (r, s) in rhs.iter_mut().zip(memory_row_sums) {
                    *r += scale * s;
                }
            }
            ProblemMemory::Maximum { deltas, .. } => {
                for (r, d) in rhs.iter_mut().zip(deltas) {
                    *r += scale * (d * d);
                }
            }
        }
        rhs[p.len()] = 0.0;
        rhs
    }

    /// Solves for (α, b), recovers ξ and packages the model. λ is ignored
    /// for the LSSVM.
    pub fn solve(&self, lambda: f64) -> Result<FittedModel> {
        validate_lambda(lambda)?;
        let p = self.problem;
        let lambda = if p.kind == ModelKind::Lssvm { 0.0 } else { lambda };
        let rhs = self.rhs(lambda);
        let mut sol = self.lu.solve(&rhs)?;
        if let Some(i) = sol.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("solution component {i}")));
        }
        let report = SolveReport {
            residual_inf_norm: residual_inf_norm(&self.system, &sol, &rhs)?,
            condition_estimate: Some(self.lu.condition_estimate()),
            singular: false,
        };
        let bias = sol.pop().expect("bordered system has m + 1 unknowns");
        let alpha = sol;
        let y = &p.y;
        let inv_gamma = 1.0 / self.gamma;

        let (influence, explicit_delta, centroids, delta_vec, xi) = match &p.memory {
            ProblemMemory::None => (None, None, None, None, Vec::new()),
            ProblemMemory::Weighted {
                influence,
                explicit,
                delta,
                ..
            } => {
                let d = delta.as_ref().or(explicit.as_ref()).expect("one source is set");
                let v: Vec<f64> = alpha
                    .iter()
                    .zip(y)
                    .map(|(a, &l)| (a - lambda) * f64::from(l))
                    .collect();
                let xi = d
                    .row_iter()
                    .zip(y)
                    .map(|(row, &l)| f64::from(l) * dot(row, &v) * inv_gamma)
                    .collect();
                (*influence, explicit.clone(), None, None, xi)
            }
            ProblemMemory::Maximum {
                influence,
                centroids,
                deltas,
            } => {
                let xi = alpha
                    .iter()
                    .zip(deltas)
                    .map(|(a, d)| (a - lambda) * d * inv_gamma)
                    .collect();
                (
                    *influence,
                    None,
                    Some(centroids.clone()),
                    Some(deltas.clone()),
                    xi,
                )
            }
        };

        Ok(FittedModel {
            kind: p.kind,
            kernel: p.kernel,
            params: ModelParams {
                gamma: self.gamma,
                lambda,
            },
            influence,
            explicit_delta,
            alpha,
            bias,
            xi,
            train_x: p.x.clone(),
            train_y: p.y.clone(),
            standardizer: p.standardizer.clone(),
            centroids,
            delta_vec,
            solve_report: report,
        })
    }
}

/// A trained LSSVM, WIMM or MIMM. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    kind: ModelKind,
    kernel: KernelSpec,
    params: ModelParams,
    influence: Option<InfluenceSpec>,
    explicit_delta: Option<DenseMatrix>,
    alpha: Vec<f64>,
    bias: f64,
    xi: Vec<f64>,
    train_x: DenseMatrix,
    train_y: Vec<i8>,
    standardizer: Standardizer,
    centroids: Option<CentroidPair>,
    delta_vec: Option<Vec<f64>>,
    solve_report: SolveReport,
}

pub fn fit_lssvm(
    x: &DenseMatrix,
    y: &[i8],
    kernel: KernelSpec,
    gamma: f64,
    scaling: Scaling,
) -> Result<FittedModel> {
    TrainingProblem::lssvm(x, y, kernel, scaling)?
        .factor(gamma)?
        .solve(0.0)
}

pub fn fit_wimm(
    x: &DenseMatrix,
    y: &[i8],
    kernel: KernelSpec,
    memory: WimmMemory,
    params: ModelParams,
    scaling: Scaling,
) -> Result<FittedModel> {
    TrainingProblem::wimm(x, y, kernel, memory, scaling)?
        .factor(params.gamma)?
        .solve(params.lambda)
}

pub fn fit_mimm(
    x: &DenseMatrix,
    y: &[i8],
    kernel: KernelSpec,
    memory: MimmMemory,
    params: ModelParams,
    scaling: Scaling,
) -> Result<FittedModel> {
    TrainingProblem::mimm(x, y, kernel, memory, scaling)?
        .factor(params.gamma)?
        .solve(params.lambda)
}

impl FittedModel {
    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn params(&self) -> ModelParams {
        self.params
    }

    pub fn influence(&self) -> Option<&InfluenceSpec> {
        self.influence.as_ref()
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    /// Memory costs ξ; empty for the LSSVM.
    pub fn xi(&self) -> &[f64] {
        &self.xi
    }

    pub fn train_x(&self) -> &DenseMatrix {
        &self.train_x
    }

    pub fn train_y(&self) -> &[i8] {
        &self.train_y
    }

    pub fn standardizer(&self) -> &Standardizer {
        &self.standardizer
    }

    pub fn centroids(&self) -> Option<&CentroidPair> {
        self.centroids.as_ref()
    }

    pub fn delta_vec(&self) -> Option<&[f64]> {
        self.delta_vec.as_deref()
    }

    pub fn solve_report(&self) -> &SolveReport {
        &self.solve_report
    }

    /// `Σ α_i y_i`, zero up to round-off for every fitted model.
    pub fn balance(&self) -> f64 {
        self.alpha
            .iter()
            .zip(&self.train_y)
            .map(|(a, &l)| a * f64::from(l))
            .sum()
    }

    /// Precomputes kernel and memory evaluations against standardized points.
    pub fn score_basis(&self, points: &DenseMatrix) -> Result<ScoreBasis> {
        build_basis(&MemoryView {
            kind: self.kind,
            kernel: &self.kernel,
            train_x: &self.train_x,
            train_y: &self.train_y,
            influence: self.influence.as_ref(),
            explicit_delta: self.explicit_delta.as_ref(),
            centroids: self.centroids.as_ref(),
            delta_vec: self.delta_vec.as_deref(),
            points,
        })
    }

    /// `Σ y_i α_i K(x_i, x) + b` for every point of the basis.
    pub fn generalization_scores(&self, basis: &ScoreBasis) -> Vec<f64> {
        let coef: Vec<f64> = self
            .alpha
            .iter()
            .zip(&self.train_y)
            .map(|(a, &l)| a * f64::from(l))
            .collect();
        basis
            .kernel_rows
            .row_iter()
            .map(|row| dot(row, &coef) + self.bias)
            .collect()
    }

    /// Full decision values for every point of the basis.
    pub fn scores(&self, basis: &ScoreBasis) -> Vec<f64> {
        let mut scores = self.generalization_scores(basis);
        let signed_xi: Vec<f64> = self
            .xi
            .iter()
            .zip(&self.train_y)
            .map(|(x, &l)| x * f64::from(l))
            .collect();
        match &basis.memory {
            BasisMemory::None => {}
            BasisMemory::Influence(rows) => {
                for (s, row) in scores.iter_mut().zip(rows.row_iter()) {
                    *s += dot(row, &signed_xi);
                }
            }
            BasisMemory::Matched(matches) => {
                let delta = self
                    .explicit_delta
                    .as_ref()
                    .expect("matched basis comes from an explicit matrix");
                for (s, m) in scores.iter_mut().zip(matches) {
                    if let Some(j) = m {
                        *s += dot(delta.row(*j), &signed_xi);
                    }
                }
            }
            BasisMemory::Nearest(nearest) => {
                for (s, &(i, d)) in scores.iter_mut().zip(nearest) {
                    *s += signed_xi[i] * d;
                }
            }
        }
        scores
    }

    /// Decision value at one standardized point.
    pub fn decision(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.train_x.cols() {
            return Err(Error::DimensionMismatch(format!(
                "point has {} features, model expects {}",
                x.len(),
                self.train_x.cols()
            )));
        }
        let point = DenseMatrix::from_row_major(1, x.len(), x.to_vec())?;
        let basis = self.score_basis(&point)?;
        Ok(self.scores(&basis)[0])
    }

    /// Decision values for raw (unstandardized) points.
    pub fn decision_raw(&self, raw: &DenseMatrix) -> Result<Vec<f64>> {
        let xs = self.standardizer.apply(raw)?;
        let basis = self.score_basis(&xs)?;
        Ok(self.scores(&basis))
    }

    /// Labels for raw points; a zero score maps to +1.
    pub fn predict(&self, raw: &DenseMatrix) -> Result<Vec<i8>> {
        Ok(self.decision_raw(raw)?.into_iter().map(sign_label).collect())
    }

    /// `y_i f(x_i) - 1` (LSSVM, WIMM) or `y_i (<w, φ(x_i)> + b) - 1 + ξ_i δ_i` (MIMM).
    pub fn training_residuals(&self) -> Vec<f64> {
        let basis = self
            .score_basis(&self.train_x)
            .expect("training features match the model");
        match self.kind {
            ModelKind::Lssvm | ModelKind::Wimm => self
                .scores(&basis)
                .iter()
                .zip(&self.train_y)
                .map(|(s, &l)| f64::from(l) * s - 1.0)
                .collect(),
            ModelKind::Mimm => {
                let deltas = self.delta_vec.as_ref().expect("mimm stores its deltas");
                self.generalization_scores(&basis)
                    .iter()
                    .zip(&self.train_y)
                    .zip(self.xi.iter().zip(deltas))
                    .map(|((s, &l), (x, d))| f64::from(l) * s - 1.0 + x * d)
                    .collect()
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        json::to_precise_string(self)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let model: FittedModel = serde_json::from_str(s)?;
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }

    fn validate(&self) -> Result<()> {
        let m = self.train_y.len();
        let n = self.train_x.cols();
        let bad = |what: &str| Err(Error::DimensionMismatch(format!("model file: {what}")));
        if self.train_x.rows() != m || self.alpha.len() != m {
            return bad("alpha/train_x/train_y lengths differ");
        }
        if self.standardizer.dim() != n {
            return bad("standardizer dimension");
        }
        self.kernel.validate()?;
        if let Some(s) = &self.influence {
            s.validate()?;
        }
        match self.kind {
            ModelKind::Lssvm => {
                if !self.xi.is_empty() {
                    return bad("lssvm carries memory costs");
                }
            }
            ModelKind::Wimm => {
                if self.xi.len() != m {
                    return bad("xi length");
                }
                match (&self.influence, &self.explicit_delta) {
                    (Some(_), None) => {}
                    (None, Some(d)) if d.rows() == m && d.cols() == m => {}
                    _ => return bad("wimm needs an influence function or an m x m matrix"),
                }
            }
            ModelKind::Mimm => {
                if self.xi.len() != m || self.delta_vec.as_ref().map(Vec::len) != Some(m) {
                    return bad("xi/delta_vec length");
                }
                match &self.centroids {
                    Some(c) if c.centroid_pos.len() == n && c.centroid_neg.len() == n => {}
                    _ => return bad("mimm centroids"),
                }
            }
        }
        Ok(())
    }
}

#[inline]
pub fn sign_label(score: f64) -> i8 {
    if score >= 0.0 {
        1
    } else {
        -1
    }
}

pub fn decision_wimm(model: &FittedModel, x: &[f64]) -> Result<f64> {
    if model.kind != ModelKind::Wimm {
        return Err(Error::WrongModelKind {
            expected: "wimm",
            found: model.kind.name(),
        });
    }
    model.decision(x)
}

pub fn decision_mimm(model: &FittedModel, x: &[f64]) -> Result<f64> {
    if model.kind != ModelKind::Mimm {
        return Err(Error::WrongModelKind {
            expected: "mimm",
            found: model.kind.name(),
        });
    }
    model.decision(x)
}

pub fn predict(model: &FittedModel, x_test: &DenseMatrix) -> Result<Vec<i8>> {
    model.predict(x_test)
}

pub fn training_residuals(model: &FittedModel) -> Vec<f64> {
    model.training_residuals()
}

/// Index of the nearest training row (squared Euclidean; ties go to the
/// smallest index).
pub fn nearest_index(train_x: &DenseMatrix, x: &[f64]) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, row) in train_x.row_iter().enumerate() {
        let d = squared_distance(row, x);
        if d < best.1 {
            best = (i, d);
        }
    }
    best.0
}

#[derive(Debug, Clone)]
enum BasisMemory {
    None,
    /// `δ(x_i, p_j)` at row j, column i.
    Influence(DenseMatrix),
    /// Training index that coincides with each point, if any.
    Matched(Vec<Option<usize>>),
    /// Nearest training index and the influence value of the memory term.
    Nearest(Vec<(usize, f64)>),
}

/// Kernel and memory evaluations of a fixed point set against the training
/// samples. Independent of γ and λ, so one basis serves every model fitted
/// from the same [`TrainingProblem`].
#[derive(Debug, Clone)]
pub struct ScoreBasis {
    /// `K(x_i, p_j)` at row j, column i.
    kernel_rows: DenseMatrix,
    memory: BasisMemory,
}

impl ScoreBasis {
    pub fn len(&self) -> usize {
        self.kernel_rows.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

struct MemoryView<'a> {
    kind: ModelKind,
    kernel: &'a KernelSpec,
    train_x: &'a DenseMatrix,
    train_y: &'a [i8],
    influence: Option<&'a InfluenceSpec>,
    explicit_delta: Option<&'a DenseMatrix>,
    centroids: Option<&'a CentroidPair>,
    delta_vec: Option<&'a [f64]>,
    points: &'a DenseMatrix,
}

fn build_basis(v: &MemoryView<'_>) -> Result<ScoreBasis> {
    let kernel_rows = gram_matrix(v.kernel, v.points, v.train_x)?;
    let memory = match v.kind {
        ModelKind::Lssvm => BasisMemory::None,
        ModelKind::Wimm => match (v.influence, v.explicit_delta) {
            (Some(spec), _) => BasisMemory::Influence(influence_cross(spec, v.points, v.train_x)?),
            (None, Some(_)) => BasisMemory::Matched(
                v.points
                    .row_iter()
                    .map(|p| v.train_x.row_iter().position(|t| t == p))
                    .collect(),
            ),
            (None, None) => unreachable!("wimm always has a memory source"),
        },
        ModelKind::Mimm => {
            let centroids = v.centroids.expect("mimm stores centroids");
            let nearest = v
                .points
                .row_iter()
                .map(|p| -> Result<(usize, f64)> {
                    let i = nearest_index(v.train_x, p);
                    let d = match v.influence {
                        Some(spec) => {
                            influence_eval(spec, p, centroids.for_label(v.train_y[i]))?
                        }
                        None => {
                            if v.train_x.row(i) == p {
                                v.delta_vec.expect("explicit deltas")[i]
                            } else {
                                0.0
                            }
                        }
                    };
                    Ok((i, d))
                })
                .collect::<Result<_>>()?;
            BasisMemory::Nearest(nearest)
        }
    };
    Ok(ScoreBasis {
        kernel_rows,
        memory,
    })
}
