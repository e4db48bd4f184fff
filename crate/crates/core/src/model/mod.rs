//! Samples, hyperparameters, dual model state and KKT bookkeeping.
//!
//! Classification and regression share one state layout, [`DualState`],
//! parameterized by a [`Task`]. For classification the multipliers are the
//! `α_i ∈ [0, C]` and the cached per-sample quantity is the margin
//! `G_i = Σ_j Q_ij α_j + y_i b − 1`. For regression the multipliers are
//! `θ_i = α_i − α_i* ∈ [−C, C]` and the cached quantity is the output error
//! `𝔉_i = Σ_j 𝒬_ij θ_j + b − y_i`.

mod state;
mod validate;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use state::{DualState, RegionCounts, SvmState, SvrState};
pub use validate::{
    classify_regions_svm, classify_regions_svr, ValidationReport, Violation, ViolationKind,
    HARD_VIOLATION, REGION_TOLERANCE,
};
pub(crate) use validate::kkt_residual;

/// Stable identifier of a sample across updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SampleId(pub u64);

impl fmt::Display for SampleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: SampleId,
    pub features: Vec<f64>,
    /// `±1` for classification, a (standardized) real value for regression.
    pub target: f64,
}

impl Sample {
    pub fn new(id: u64, features: Vec<f64>, target: f64) -> Self {
        Self {
            id: SampleId(id),
            features,
            target,
        }
    }
}

impl AsRef<[f64]> for Sample {
    fn as_ref(&self) -> &[f64] {
        &self.features
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Box penalty.
    #[serde(rename = "C")]
    pub c: f64,
    /// Half-width of the regression tube; ignored for classification.
    pub epsilon: f64,
}

impl Hyperparams {
    pub fn new(c: f64, epsilon: f64) -> Self {
        Self { c, epsilon }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) || !self.c.is_finite() {
            return Err(Error::InvalidHyperparams(format!("C must be > 0, got {}", self.c)));
        }
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return Err(Error::InvalidHyperparams(format!(
                "epsilon must be >= 0, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// KKT region of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    /// Unbounded support vector: multiplier strictly inside its box, active
    /// constraint satisfied with equality.
    #[serde(rename = "S")]
    Unbounded,
    /// Bounded support vector: multiplier saturated at the box bound.
    #[serde(rename = "B")]
    Bounded,
    /// Non-support vector: zero multiplier.
    #[serde(rename = "O")]
    NonSupport,
}

impl Region {
    pub fn tag(self) -> &'static str {
        match self {
            Region::Unbounded => "S",
            Region::Bounded => "B",
            Region::NonSupport => "O",
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Linear piece of the multiplier range an unbounded sample lives on.
///
/// Regression with `ε > 0` has a kink at `θ = 0`, so an unbounded sample
/// sits either on `(0, C)` (output error pinned at `−ε`) or on `(−C, 0)`
/// (pinned at `+ε`). Classification only uses `Positive`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub(crate) enum Piece {
    Positive,
    Negative,
    Whole,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Classification,
    Regression,
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskKind::Classification => "classification",
            TaskKind::Regression => "regression",
        })
    }
}

/// Static description of a learning task in the shared dual form
/// `min ½βᵀMβ + Σ c_i β_i + tube·‖β‖₁` s.t. `Σ v_i β_i = 0`, `lo ≤ β ≤ C`,
/// with `M_ij = v_i v_j (K_ij + ρ[i=j])`.
pub trait Task: Clone + Copy + fmt::Debug + Default + Send + Sync + 'static {
    const KIND: TaskKind;
    /// Border entry `v_i` of the bordered system.
    fn border(target: f64) -> f64;
    /// Linear coefficient `c_i` of the dual objective.
    fn linear(target: f64) -> f64;
    fn lower_bound(hyper: &Hyperparams) -> f64;
    /// Width of the insensitive zone around zero error.
    fn tube(hyper: &Hyperparams) -> f64;
    fn check_target(target: f64) -> Result<()>;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Classification;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Regression;

impl Task for Classification {
    const KIND: TaskKind = TaskKind::Classification;

    fn border(target: f64) -> f64 {
        target
    }

    fn linear(_target: f64) -> f64 {
        -1.0
    }

    fn lower_bound(_hyper: &Hyperparams) -> f64 {
        0.0
    }

    fn tube(_hyper: &Hyperparams) -> f64 {
        0.0
    }

    fn check_target(target: f64) -> Result<()> {
        if target == 1.0 || target == -1.0 {
            Ok(())
        } else {
            Err(Error::InvalidLabel(target))
        }
    }
}

impl Task for Regression {
    const KIND: TaskKind = TaskKind::Regression;

    fn border(_target: f64) -> f64 {
        1.0
    }

    fn linear(target: f64) -> f64 {
        -target
    }

    fn lower_bound(hyper: &Hyperparams) -> f64 {
        -hyper.c
    }

    fn tube(hyper: &Hyperparams) -> f64 {
        hyper.epsilon
    }

    fn check_target(target: f64) -> Result<()> {
        if target.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidHyperparams(format!("non-finite target {target}")))
        }
    }
}

/// Samples to add (`𝒟`) and identifiers to remove (`ℛ`), applied together.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateBatch {
    pub add: Vec<Sample>,
    pub remove: Vec<SampleId>,
}

impl UpdateBatch {
    pub fn new(add: Vec<Sample>, remove: Vec<SampleId>) -> Self {
        Self { add, remove }
    }

    pub fn is_empty(&self) -> bool {
        self.add.is_empty() && self.remove.is_empty()
    }
}
