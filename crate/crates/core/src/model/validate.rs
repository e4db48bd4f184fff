use std::fmt;

use super::{DualState, Region, Task};
use crate::error::{Error, Result};

/// Tolerance on KKT quantities when checking region tags.
pub const REGION_TOLERANCE: f64 = 1e-6;
/// KKT error above which an interior multiplier is treated as a logic error.
pub const HARD_VIOLATION: f64 = 1e-3;

const BOUND_TOLERANCE: f64 = 1e-9;
const EQUALITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    /// Multiplier outside its box.
    Box,
    /// `Σ v_i β_i ≠ 0`.
    Equality,
    /// Region tag inconsistent with the multiplier value.
    Tag,
    /// Region tag inconsistent with the margin or output error.
    Kkt,
    /// Cached KKT quantity drifted from its recomputed value.
    StaleCache,
    /// Non-finite value in the model.
    NonFinite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub index: Option<usize>,
    pub magnitude: f64,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.index {
            Some(i) => write!(f, "{:?} at {}: {} ({:.3e})", self.kind, i, self.detail, self.magnitude),
            None => write!(f, "{:?}: {} ({:.3e})", self.kind, self.detail, self.magnitude),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    /// Largest KKT residual over all samples, violations or not.
    pub max_kkt_residual: f64,
    pub equality_residual: f64,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn len(&self) -> usize {
        self.violations.len()
    }

    pub fn worst(&self) -> f64 {
        self.violations.iter().map(|v| v.magnitude).fold(0.0, f64::max)
    }

    fn push(&mut self, kind: ViolationKind, index: Option<usize>, magnitude: f64, detail: impl Into<String>) {
        self.violations.push(Violation {
            kind,
            index,
            magnitude,
            detail: detail.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "valid (max KKT residual {:.3e})", self.max_kkt_residual);
        }
        writeln!(f, "{} violation(s):", self.violations.len())?;
        for v in &self.violations {
            writeln!(f, "  {v}")?;
        }
        Ok(())
    }
}

/// KKT residual of one sample in the shared form, given its tag.
pub(crate) fn kkt_residual(region: Region, beta: f64, h: f64, lo: f64, hi: f64, tube: f64) -> f64 {
    match region {
        Region::Unbounded => {
            if beta > 0.0 {
                (h + tube).abs()
            } else if beta < 0.0 {
                (h - tube).abs()
            } else {
                (h + tube).abs().min((h - tube).abs())
            }
        }
        Region::Bounded => {
            if lo < 0.0 && (beta - lo).abs() < (beta - hi).abs() {
                (tube - h).max(0.0)
            } else {
                (h + tube).max(0.0)
            }
        }
        Region::NonSupport => {
            let below = (-tube - h).max(0.0);
            if lo < 0.0 {
                below.max(h - tube)
            } else {
                below
            }
        }
    }
}

pub(crate) fn validate_state<T: Task>(state: &DualState<T>, tol: f64) -> ValidationReport {
    let mut report = ValidationReport::default();
    let n = state.len();
    let (lo, hi, tube) = (state.lo(), state.hi(), state.tube());
    if !state.bias.is_finite() {
        report.push(ViolationKind::NonFinite, None, f64::INFINITY, "bias");
        return report;
    }
    let fresh = state.fresh_gradients();
    for i in 0..n {
        let (b, h) = (state.beta[i], fresh[i]);
        if !b.is_finite() || !h.is_finite() {
            report.push(ViolationKind::NonFinite, Some(i), f64::INFINITY, "multiplier or KKT value");
            continue;
        }
        if b < lo - BOUND_TOLERANCE || b > hi + BOUND_TOLERANCE {
            let m = (lo - b).max(b - hi);
            report.push(ViolationKind::Box, Some(i), m, format!("multiplier {b} outside [{lo}, {hi}]"));
        }
        let region = state.regions[i];
        let tag_gap = match region {
            Region::Unbounded => 0.0,
            Region::Bounded => {
                let to_hi = (b - hi).abs();
                if lo < 0.0 {
                    to_hi.min((b - lo).abs())
                } else {
                    to_hi
                }
            }
            Region::NonSupport => b.abs(),
        };
        if tag_gap > BOUND_TOLERANCE {
            report.push(
                ViolationKind::Tag,
                Some(i),
                tag_gap,
                format!("tag {region} with multiplier {b}"),
            );
        }
        let r = kkt_residual(region, b, h, lo, hi, tube);
        report.max_kkt_residual = report.max_kkt_residual.max(r);
        if r > tol {
            report.push(
                ViolationKind::Kkt,
                Some(i),
                r,
                format!("tag {region}, multiplier {b}, KKT value {h}"),
            );
        }
        let drift = (state.grad[i] - h).abs();
        if drift > tol {
            report.push(ViolationKind::StaleCache, Some(i), drift, "cached KKT value");
        }
    }
    let eq = state.equality_residual();
    report.equality_residual = eq.abs();
    if eq.abs() > EQUALITY_TOLERANCE {
        report.push(ViolationKind::Equality, None, eq.abs(), "equality constraint sum");
    }
    report
}

/// Region tags for classification from `α` and margins `G`.
pub fn classify_regions_svm(alpha: &[f64], margins: &[f64], c: f64) -> Result<Vec<Region>> {
    check_lengths(alpha, margins)?;
    alpha
        .iter()
        .zip(margins)
        .enumerate()
        .map(|(i, (&a, &g))| {
            let on_margin = g.abs() <= REGION_TOLERANCE;
            if a >= c - BOUND_TOLERANCE {
                Ok(if on_margin && a < c { Region::Unbounded } else { Region::Bounded })
            } else if a <= BOUND_TOLERANCE {
                Ok(if on_margin && a > 0.0 { Region::Unbounded } else { Region::NonSupport })
            } else if g.abs() > HARD_VIOLATION {
                Err(Error::InconsistentState {
                    index: i,
                    detail: format!("interior alpha {a} with margin {g}"),
                })
            } else {
                Ok(Region::Unbounded)
            }
        })
        .collect()
}

/// Region tags for regression from `θ` and output errors `𝔉`.
pub fn classify_regions_svr(theta: &[f64], outputs: &[f64], c: f64, epsilon: f64) -> Result<Vec<Region>> {
    check_lengths(theta, outputs)?;
    theta
        .iter()
        .zip(outputs)
        .enumerate()
        .map(|(i, (&t, &f))| {
            let on_edge = (f.abs() - epsilon).abs() <= REGION_TOLERANCE;
            if t.abs() >= c - BOUND_TOLERANCE {
                Ok(if on_edge && t.abs() < c { Region::Unbounded } else { Region::Bounded })
            } else if t.abs() <= BOUND_TOLERANCE {
                Ok(if on_edge && t != 0.0 { Region::Unbounded } else { Region::NonSupport })
            } else if (f.abs() - epsilon).abs() > HARD_VIOLATION {
                Err(Error::InconsistentState {
                    index: i,
                    detail: format!("interior theta {t} with output error {f}"),
                })
            } else {
                Ok(Region::Unbounded)
            }
        })
        .collect()
}

fn check_lengths(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(())
}
