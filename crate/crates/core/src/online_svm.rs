//! One-shot multiple incremental/decremental updates for ridge SVMs.
//!
//! New multipliers are read off the weight-error curve, removed ones are
//! set to zero, and a single bordered solve moves the unbounded set and the
//! bias back into equilibrium. An active-set repair then settles any
//! membership changes the one-shot step could not anticipate.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::active_set::{self, RepairStats};
use crate::error::{Error, Result};
use crate::linalg::bordered_inverse;
use crate::model::{DualState, Region, Sample, SampleId, SvmState, Task, UpdateBatch};
use crate::solver::{self, SolverConfig};

/// Intercept convention of the SVM weight-error curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WecMode {
    /// `α = (1 − y f) / ρ`, the ramp on which unbounded samples lie.
    #[default]
    Derived,
    /// `α = ρ ∓ f / ρ` with the intercept taken literally.
    LiteralIntercept,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateConfig {
    pub wec_mode: WecMode,
    pub max_repair_passes: usize,
    /// Retrain from scratch when the repair loop fails to settle.
    pub retrain_on_divergence: bool,
    /// Used by the empty-set rebuild and the retrain fallback.
    pub solver: SolverConfig,
}

impl Default for UpdateConfig {
    fn default() -> Self {
        Self {
            wec_mode: WecMode::Derived,
            max_repair_passes: active_set::DEFAULT_REPAIR_PASSES,
            retrain_on_divergence: true,
            solver: SolverConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct UpdateReport {
    pub added: usize,
    pub removed: usize,
    pub unbounded_before: usize,
    pub unbounded_after: usize,
    pub repair_passes: usize,
    pub entered: usize,
    pub left: usize,
    /// The unbounded set emptied and was rebuilt by a restricted batch solve.
    pub rebuilt: bool,
    /// The repair loop failed and the model was retrained from scratch.
    pub retrained: bool,
    /// Largest equilibrium residual of the final state.
    pub residual: f64,
}

fn check_rho(rho: f64) -> Result<()> {
    if rho > 0.0 {
        Ok(())
    } else {
        Err(Error::NonpositiveRho(rho))
    }
}

/// Multiplier of a new sample predicted from its test-form output.
pub fn wec_predict_svm(f_value: f64, label: f64, rho: f64, c: f64, mode: WecMode) -> Result<f64> {
    check_rho(rho)?;
    let raw = match mode {
        WecMode::Derived => (1.0 - label * f_value) / rho,
        WecMode::LiteralIntercept => rho - label * f_value / rho,
    };
    Ok(raw.clamp(0.0, c))
}

/// `Δβ_r = −β_r` for every id to remove.
pub fn assign_removals<T: Task>(state: &DualState<T>, remove: &[SampleId]) -> Result<Vec<(SampleId, f64)>> {
    remove
        .iter()
        .map(|&id| {
            state
                .multiplier_of(id)
                .map(|b| (id, -b))
                .ok_or(Error::UnknownId(id))
        })
        .collect()
}

/// `[Δb; Δβ_S]` restoring equilibrium after the given changes of new
/// samples `delta_add` and stored samples `delta_remove`. The state is not
/// modified and is assumed to be in equilibrium beforehand.
pub fn equilibrium_solve<T: Task>(
    state: &DualState<T>,
    delta_add: &[(Sample, f64)],
    delta_remove: &[(SampleId, f64)],
) -> Result<(f64, Vec<f64>)> {
    if state.free.is_empty() {
        return Err(Error::EmptyS);
    }
    let kernel = state.kernel();
    let free = &state.free;
    let mut rhs = vec![0.0; free.len() + 1];
    let mut push = |x: &[f64], target: f64, delta: f64, own: Option<usize>| {
        let v = T::border(target);
        rhs[0] -= v * delta;
        for (k, &s) in free.iter().enumerate() {
            let mut q = kernel.eval_unchecked(&state.samples[s].features, x);
            if own == Some(s) {
                q += kernel.ridge;
            }
            rhs[k + 1] -= state.border_of(s) * v * q * delta;
        }
    };
    for (s, d) in delta_add {
        push(&s.features, s.target, *d, None);
    }
    for &(id, d) in delta_remove {
        let p = state.position(id).ok_or(Error::UnknownId(id))?;
        push(&state.samples[p].features, state.samples[p].target, d, Some(p));
    }
    let sol = match state.cached_inverse() {
        Some(inv) if inv.order == free.len() => inv.solve(&rhs),
        _ => {
            let mut st = state.clone();
            let q = st.free_block();
            let border: Vec<f64> = free.iter().map(|&i| state.border_of(i)).collect();
            bordered_inverse(&q, &border)?.solve(&rhs)
        }
    };
    Ok((sol[0], sol[1..].to_vec()))
}

pub fn equilibrium_solve_svm(
    state: &SvmState,
    delta_add: &[(Sample, f64)],
    delta_remove: &[(SampleId, f64)],
) -> Result<(f64, Vec<f64>)> {
    equilibrium_solve(state, delta_add, delta_remove)
}

/// Restores every KKT condition by iterated equilibrium solves and
/// membership changes. Returns the number of passes taken.
pub fn kkt_repair<T: Task>(state: &mut DualState<T>, max_passes: usize) -> Result<usize> {
    let mut work = state.clone();
    let stats = active_set::repair(&mut work, max_passes)?;
    *state = work;
    Ok(stats.passes)
}

/// Appends `incoming` and re-establishes an unbounded set by a batch solve
/// over the current support vectors and the incoming samples.
pub fn rebuild_empty_s<T: Task>(state: &mut DualState<T>, incoming: Vec<Sample>, config: &SolverConfig) -> Result<()> {
    let mut work = state.clone();
    let range = work.append(incoming)?;
    let incoming: Vec<usize> = range.collect();
    active_set::rebuild(&mut work, &incoming, config)?;
    work.trim_columns();
    *state = work;
    Ok(())
}

pub fn update_multi_svm(state: &mut SvmState, batch: &UpdateBatch, config: &UpdateConfig) -> Result<UpdateReport> {
    let rho = state.kernel().ridge;
    let (c, mode) = (state.hyper().c, config.wec_mode);
    update_multi(state, batch, config, |f, y| wec_predict_svm(f, y, rho, c, mode))
}

/// Shared update pipeline; `predict(f, target)` gives the new multiplier
/// of an added sample from its test-form output.
pub(crate) fn update_multi<T: Task>(
    state: &mut DualState<T>,
    batch: &UpdateBatch,
    config: &UpdateConfig,
    predict: impl Fn(f64, f64) -> Result<f64>,
) -> Result<UpdateReport> {
    let mut report = UpdateReport {
        added: batch.add.len(),
        removed: batch.remove.len(),
        unbounded_before: state.free.len(),
        ..Default::default()
    };
    if batch.is_empty() {
        report.unbounded_after = state.free.len();
        report.residual = active_set::equilibrium_residual(state);
        return Ok(report);
    }
    if !batch.add.is_empty() {
        check_rho(state.kernel().ridge)?;
    }
    let mut seen = HashSet::new();
    for &id in &batch.remove {
        if state.position(id).is_none() {
            return Err(Error::UnknownId(id));
        }
        if !seen.insert(id) {
            return Err(Error::DuplicateId(id));
        }
    }

    let mut work = state.clone();
    let added = work.append(batch.add.clone())?;
    let (lo, hi, tube) = (work.lo(), work.hi(), work.tube());

    let mut fixed = Vec::with_capacity(added.len() + batch.remove.len());
    for d in added.clone() {
        let v = work.border_of(d);
        let f = (work.grad[d] - work.linear_of(d)) / v;
        let mut b = predict(f, work.samples[d].target)?.clamp(lo, hi);
        // a prediction must agree with the side of the tube or margin it came from
        let h = work.grad[d];
        if (b > 0.0 && h >= -tube) || (b < 0.0 && h <= tube) {
            b = 0.0;
        }
        fixed.push((d, b));
    }
    let removed: Vec<usize> = batch
        .remove
        .iter()
        .map(|id| work.position(*id).expect("checked above"))
        .collect();
    for &r in &removed {
        fixed.push((r, -work.beta[r]));
    }

    let removed_set: HashSet<usize> = removed.iter().copied().collect();
    let leaving: Vec<usize> = work.free.iter().copied().filter(|p| removed_set.contains(p)).collect();
    active_set::change_free_set(&mut work, &leaving, &[])?;

    let one_shot = active_set::solve_and_apply(&mut work, &fixed);
    let empty = matches!(one_shot, Err(Error::EmptyS));
    if empty {
        active_set::apply_changes(&mut work, 0.0, &fixed);
    } else {
        one_shot?;
    }
    for &(p, b) in &fixed {
        if removed_set.contains(&p) {
            work.beta[p] = 0.0;
        } else {
            work.beta[p] = b;
        }
        work.regions[p] = if work.beta[p] == hi || (lo < 0.0 && work.beta[p] == lo) {
            Region::Bounded
        } else {
            Region::NonSupport
        };
    }
    work.remove_positions(&removed);
    let incoming: Vec<usize> = (work.len() - batch.add.len()..work.len()).collect();

    let outcome = if empty {
        report.rebuilt = true;
        active_set::rebuild(&mut work, &incoming, &config.solver)
    } else {
        match active_set::repair(&mut work, config.max_repair_passes) {
            Err(Error::EmptyS) => {
                report.rebuilt = true;
                active_set::rebuild(&mut work, &incoming, &config.solver)
            }
            other => other,
        }
    };
    match outcome {
        Ok(stats) => record(&mut report, stats),
        Err(e @ (Error::RepairDivergence { .. } | Error::EmptyS | Error::SingularBorder { .. }
        | Error::SingularSchurBlock | Error::SingularCornerBlock | Error::NotPositiveDefinite { .. })) => {
            if !config.retrain_on_divergence {
                return Err(e);
            }
            let samples = work.samples.clone();
            work = solver::train_batch::<T>(&samples, &work.kernel, &work.hyper, &config.solver)?;
            report.retrained = true;
        }
        Err(e) => return Err(e),
    }
    work.trim_columns();
    report.unbounded_after = work.free.len();
    report.residual = active_set::equilibrium_residual(&work);
    *state = work;
    Ok(report)
}

fn record(report: &mut UpdateReport, stats: RepairStats) {
    report.repair_passes = stats.passes;
    report.entered = stats.entered;
    report.left = stats.left;
}
