//! Least-squares support vector machines with generalization-memorization
//! mechanisms: the classical LSSVM, the weighted-impact memory model (WIMM)
//! and the maximum-impact memory model (MIMM), together with the data
//! pipeline and experiment harness used to evaluate them.

pub mod bench;
pub mod data;
pub mod error;
pub mod json;
pub mod kernels;
pub mod linalg;
pub mod models;

pub use error::{Error, Result};
pub use kernels::{CentroidPair, InfluenceSpec, InfluenceVariant, KernelSpec};
pub use linalg::{DenseMatrix, SolveReport};
pub use models::{
    FittedModel, MimmMemory, ModelConfig, ModelKind, ModelParams, Scaling, TrainingProblem,
    WimmMemory,
};
