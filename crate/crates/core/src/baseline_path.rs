//! Step-size path following for multiple incremental/decremental updates.
//!
//! Added and removed multipliers move linearly towards their targets in a
//! path parameter `η ∈ [0, 1]`. Between membership events the unbounded set
//! tracks them through the bordered system; at each event the largest
//! feasible step is taken and one sample migrates between regions.

use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use crate::active_set;
use crate::error::{Error, Result};
use crate::model::{DualState, Piece, Region, Sample, SampleId, SvmState, SvrState, Task, UpdateBatch};
use crate::online_svm;
use crate::solver::SolverConfig;

/// Rates below this magnitude never trigger events.
pub const RATE_TOLERANCE: f64 = 1e-12;
/// Steps at or below this size count towards the stall guard.
pub const MIN_STEP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathConfig {
    /// Hard cap on events, as a multiple of the samples involved.
    pub max_events_factor: usize,
    /// Solver used when the unbounded set empties mid-path.
    pub solver: SolverConfig,
}

impl Default for PathConfig {
    fn default() -> Self {
        Self {
            max_events_factor: 10,
            solver: SolverConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    /// An unbounded multiplier reached a bound and left the set.
    BoxHit { to: Region },
    /// A bounded or non-support sample's KKT value reached its boundary.
    Crossing { from: Region },
    /// A sample being added reached its margin or tube edge.
    Arrival,
    /// The path parameter reached one.
    End,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EventKind::BoxHit { to } => write!(f, "S->{to}"),
            EventKind::Crossing { from } => write!(f, "{from}->S"),
            EventKind::Arrival => f.write_str("D->S"),
            EventKind::End => f.write_str("end"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathEvent {
    pub kind: EventKind,
    pub id: Option<SampleId>,
    /// Cumulative path parameter at the event.
    pub eta: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PathReport {
    pub events: Vec<PathEvent>,
    pub cumulative_eta: f64,
    /// The unbounded set emptied and the update finished by a rebuild.
    pub rebuilt: bool,
    /// Membership changes made by the closing safety repair.
    pub repair_changes: usize,
}

/// Per-unit-η directions of every moving quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct Directions {
    pub bias: f64,
    pub unbounded: Vec<(SampleId, f64)>,
    pub added: Vec<(SampleId, f64)>,
    pub removed: Vec<(SampleId, f64)>,
}

/// A candidate event: the quantity must travel `distance` at `rate` per
/// unit η.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub id: SampleId,
    pub kind: EventKind,
    pub distance: f64,
    pub rate: f64,
}

impl Candidate {
    /// Step to this event, or `None` when it is never reached.
    pub fn step(&self) -> Option<f64> {
        if self.rate.abs() <= RATE_TOLERANCE {
            return None;
        }
        let eta = self.distance / self.rate;
        if eta >= 0.0 {
            Some(eta)
        } else if self.distance.abs() <= MIN_STEP {
            Some(0.0)
        } else {
            None
        }
    }
}

/// Smallest step among `candidates`, capped at `remaining`. Ties go to the
/// lowest id. Returns the step and the winning candidate, if any.
pub fn step_select(candidates: &[Candidate], remaining: f64) -> (f64, Option<Candidate>) {
    let mut best: Option<(f64, Candidate)> = None;
    for c in candidates {
        let Some(eta) = c.step() else { continue };
        let better = match &best {
            None => true,
            Some((b, bc)) => eta < *b || (eta == *b && c.id < bc.id),
        };
        if better {
            best = Some((eta, *c));
        }
    }
    match best {
        Some((eta, c)) if eta < remaining => (eta, Some(c)),
        _ => (remaining, None),
    }
}

/// Directions when added samples move from zero to the given target
/// multipliers and removed samples to zero. Removed samples are taken out
/// of the unbounded set first.
pub fn direction<T: Task>(
    state: &DualState<T>,
    add: &[(Sample, f64)],
    remove: &[SampleId],
) -> Result<Directions> {
    let removed = online_svm::assign_removals(state, remove)?;
    let positions: HashSet<usize> = remove.iter().filter_map(|id| state.position(*id)).collect();
    let owned;
    let base = if state.free.iter().any(|p| positions.contains(p)) {
        let mut s = state.clone();
        let leaving: Vec<usize> = s.free.iter().copied().filter(|p| positions.contains(p)).collect();
        active_set::change_free_set(&mut s, &leaving, &[])?;
        for &p in &leaving {
            s.regions[p] = Region::NonSupport;
        }
        owned = s;
        &owned
    } else {
        state
    };
    let (db, ds) = online_svm::equilibrium_solve(base, add, &removed)?;
    Ok(Directions {
        bias: db,
        unbounded: base.free.iter().map(|&p| base.samples[p].id).zip(ds).collect(),
        added: add.iter().map(|(s, d)| (s.id, *d)).collect(),
        removed,
    })
}

pub fn direction_svm(state: &SvmState, add: &[(Sample, f64)], remove: &[SampleId]) -> Result<Directions> {
    direction(state, add, remove)
}

pub fn direction_svr(state: &SvrState, add: &[(Sample, f64)], remove: &[SampleId]) -> Result<Directions> {
    direction(state, add, remove)
}

/// `dh_i/dη` for every stored sample followed by every added sample.
pub fn sensitivity_phi<T: Task>(state: &DualState<T>, add: &[Sample], dirs: &Directions) -> Result<Vec<f64>> {
    let kernel = state.kernel();
    let mut moving: Vec<(&[f64], f64)> = Vec::new();
    for &(id, d) in dirs.unbounded.iter().chain(&dirs.removed) {
        let p = state.position(id).ok_or(Error::UnknownId(id))?;
        moving.push((&state.samples[p].features, state.border_of(p) * d));
    }
    if add.len() != dirs.added.len() {
        return Err(Error::DimensionMismatch { expected: dirs.added.len(), got: add.len() });
    }
    for (s, &(_, d)) in add.iter().zip(&dirs.added) {
        moving.push((&s.features, T::border(s.target) * d));
    }
    let rate_of = |id: SampleId| -> f64 {
        dirs.unbounded
            .iter()
            .chain(&dirs.removed)
            .chain(&dirs.added)
            .find(|(i, _)| *i == id)
            .map_or(0.0, |(_, d)| *d)
    };
    let phi_at = |x: &[f64], target: f64, id: SampleId| -> f64 {
        let df = dirs.bias
            + moving
                .iter()
                .map(|(xj, w)| w * kernel.eval_unchecked(x, xj))
                .sum::<f64>();
        T::border(target) * df + kernel.ridge * rate_of(id)
    };
    let mut out: Vec<f64> = state.samples.iter().map(|s| phi_at(&s.features, s.target, s.id)).collect();
    out.extend(add.iter().map(|s| phi_at(&s.features, s.target, s.id)));
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
struct Driven {
    pos: usize,
    rate: f64,
    target: f64,
    added: bool,
}

/// Runs the path for one batch and commits the result on success.
pub fn path_update<T: Task>(state: &mut DualState<T>, batch: &UpdateBatch, config: &PathConfig) -> Result<PathReport> {
    path_update_observed(state, batch, config, |_, _| {})
}

pub fn path_update_svm(state: &mut SvmState, batch: &UpdateBatch, config: &PathConfig) -> Result<PathReport> {
    path_update(state, batch, config)
}

pub fn path_update_svr(state: &mut SvrState, batch: &UpdateBatch, config: &PathConfig) -> Result<PathReport> {
    path_update(state, batch, config)
}

/// As [`path_update`], calling `observer` after every event with the
/// intermediate state and the ids still in flight.
pub fn path_update_observed<T: Task>(
    state: &mut DualState<T>,
    batch: &UpdateBatch,
    config: &PathConfig,
    mut observer: impl FnMut(&DualState<T>, &[SampleId]),
) -> Result<PathReport> {
    let mut report = PathReport::default();
    if batch.is_empty() {
        report.cumulative_eta = 1.0;
        return Ok(report);
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

    let mut st = state.clone();
    let added = st.append(batch.add.clone())?;
    let (lo, hi, tube) = (st.lo(), st.hi(), st.tube());
    let ridge = st.kernel.ridge;

    let mut driven: Vec<Driven> = Vec::new();
    for d in added.clone() {
        let h = st.grad[d];
        let target = if h < -tube {
            hi
        } else if lo < 0.0 && h > tube {
            lo
        } else {
            continue;
        };
        driven.push(Driven { pos: d, rate: target, target, added: true });
    }
    let removed: Vec<usize> = batch.remove.iter().map(|id| st.position(*id).expect("checked")).collect();
    let removed_set: HashSet<usize> = removed.iter().copied().collect();
    for &r in &removed {
        driven.push(Driven { pos: r, rate: -st.beta[r], target: 0.0, added: false });
    }
    let leaving: Vec<usize> = st.free.iter().copied().filter(|p| removed_set.contains(p)).collect();
    active_set::change_free_set(&mut st, &leaving, &[])?;
    for &r in &removed {
        st.regions[r] = Region::NonSupport;
    }
    let flight_ids = |st: &DualState<T>, driven: &[Driven]| -> Vec<SampleId> {
        driven.iter().map(|d| st.samples[d.pos].id).collect()
    };

    let involved = st.len() + batch.add.len() + batch.remove.len();
    let max_events = config.max_events_factor.saturating_mul(involved).max(16);
    let mut t = 0.0f64;
    let mut tiny_steps = 0usize;
    loop {
        let remaining = 1.0 - t;
        let active: Vec<&Driven> = driven.iter().filter(|d| d.rate != 0.0).collect();
        if active.is_empty() || remaining <= 0.0 {
            break;
        }
        if st.free.is_empty() {
            let eq: f64 = active.iter().map(|d| st.border_of(d.pos) * d.rate).sum();
            if eq.abs() > 1e-12 {
                finish_by_rebuild(&mut st, &driven, &removed, batch.add.len(), &config.solver)?;
                report.rebuilt = true;
                report.cumulative_eta = 1.0;
                report.events.push(PathEvent { kind: EventKind::End, id: None, eta: 1.0 });
                st.trim_columns();
                *state = st;
                return Ok(report);
            }
        }

        // direction of the unbounded set and bias
        let mut changes: Vec<(usize, f64)> = active.iter().map(|d| (d.pos, d.rate)).collect();
        let mut db = 0.0;
        if !st.free.is_empty() {
            let cols: Vec<Arc<[f64]>> = changes.iter().map(|&(p, _)| st.kernel_column(p)).collect();
            let mut rhs = vec![0.0; st.free.len() + 1];
            rhs[0] = -changes.iter().map(|&(p, d)| st.border_of(p) * d).sum::<f64>();
            for (k, &s) in st.free.iter().enumerate() {
                rhs[k + 1] = -changes
                    .iter()
                    .zip(&cols)
                    .map(|(&(p, d), col)| st.m_entry(s, p, col) * d)
                    .sum::<f64>();
            }
            st.ensure_inverse()?;
            let sol = st.inverse.as_ref().expect("inverse").solve(&rhs);
            db = sol[0];
            changes.extend(st.free.iter().zip(&sol[1..]).map(|(&s, &d)| (s, d)));
        }
        let phi = rates(&mut st, db, &changes, ridge);

        let mut candidates = Vec::new();
        let in_free: HashSet<usize> = st.free.iter().copied().collect();
        let driving: HashSet<usize> = active.iter().map(|d| d.pos).collect();
        for (&(s, d), _) in changes[active.len()..].iter().zip(0..) {
            let (l, u) = st.piece_range(st.pieces[s]);
            let id = st.samples[s].id;
            let b = st.beta[s];
            if d > RATE_TOLERANCE {
                let to = if u == 0.0 { Region::NonSupport } else { Region::Bounded };
                candidates.push(Candidate { id, kind: EventKind::BoxHit { to }, distance: u - b, rate: d });
            } else if d < -RATE_TOLERANCE {
                let to = if l == 0.0 { Region::NonSupport } else { Region::Bounded };
                candidates.push(Candidate { id, kind: EventKind::BoxHit { to }, distance: l - b, rate: d });
            }
        }
        for i in 0..st.len() {
            if in_free.contains(&i) || removed_set.contains(&i) {
                continue;
            }
            let id = st.samples[i].id;
            let (h, p) = (st.grad[i], phi[i]);
            if driving.contains(&i) {
                let d = active.iter().find(|d| d.pos == i).expect("driven");
                let edge = if d.rate > 0.0 { -tube } else { tube };
                if (d.rate > 0.0 && p > 0.0) || (d.rate < 0.0 && p < 0.0) {
                    candidates.push(Candidate { id, kind: EventKind::Arrival, distance: edge - h, rate: p });
                }
                continue;
            }
            let b = st.beta[i];
            let from = st.regions[i];
            if b == 0.0 {
                if p < 0.0 {
                    candidates.push(Candidate { id, kind: EventKind::Crossing { from }, distance: -tube - h, rate: p });
                } else if lo < 0.0 && p > 0.0 {
                    candidates.push(Candidate { id, kind: EventKind::Crossing { from }, distance: tube - h, rate: p });
                }
            } else if b == hi {
                if p > 0.0 {
                    candidates.push(Candidate { id, kind: EventKind::Crossing { from }, distance: -tube - h, rate: p });
                }
            } else if lo < 0.0 && b == lo && p < 0.0 {
                candidates.push(Candidate { id, kind: EventKind::Crossing { from }, distance: tube - h, rate: p });
            }
        }

        let (eta, event) = step_select(&candidates, remaining);
        let scaled: Vec<(usize, f64)> = changes.iter().map(|&(p, d)| (p, eta * d)).collect();
        active_set::apply_changes(&mut st, eta * db, &scaled);
        t += eta;
        if eta <= MIN_STEP {
            tiny_steps += 1;
            if tiny_steps > involved {
                return Err(Error::StalledPath { events: report.events.len(), eta: t });
            }
        } else {
            tiny_steps = 0;
        }
        let Some(ev) = event else {
            t = 1.0;
            break;
        };
        let pos = st.position(ev.id).ok_or_else(|| Error::InconsistentEvent(format!("unknown id {}", ev.id)))?;
        migrate(&mut st, pos, ev.kind, ev.rate, &mut driven)?;
        report.events.push(PathEvent { kind: ev.kind, id: Some(ev.id), eta: t });
        if report.events.len() > max_events {
            return Err(Error::StalledPath { events: report.events.len(), eta: t });
        }
        observer(&st, &flight_ids(&st, &driven));
    }

    for d in &driven {
        st.beta[d.pos] = d.target;
        if d.added {
            st.regions[d.pos] = if d.target == 0.0 { Region::NonSupport } else { Region::Bounded };
        }
    }
    report.events.push(PathEvent { kind: EventKind::End, id: None, eta: t });
    report.cumulative_eta = t;
    st.remove_positions(&removed);
    // safety pass: drift correction and any residual boundary ties
    match active_set::repair(&mut st, active_set::DEFAULT_REPAIR_PASSES) {
        Ok(stats) => report.repair_changes = stats.entered + stats.left,
        Err(Error::EmptyS) => {
            let incoming: Vec<usize> = (st.len() - batch.add.len()..st.len()).collect();
            active_set::rebuild(&mut st, &incoming, &config.solver)?;
            report.rebuilt = true;
        }
        Err(e) => return Err(e),
    }
    st.trim_columns();
    *state = st;
    Ok(report)
}

/// `dh_i/dη` for all samples given the direction of `b` and the moving
/// multipliers.
fn rates<T: Task>(st: &mut DualState<T>, db: f64, changes: &[(usize, f64)], ridge: f64) -> Vec<f64> {
    let weighted: Vec<(Arc<[f64]>, f64)> = changes
        .iter()
        .map(|&(j, d)| (st.kernel_column(j), st.border_of(j) * d))
        .collect();
    let mut acc = vec![db; st.len()];
    for (col, w) in &weighted {
        for (a, k) in acc.iter_mut().zip(col.iter()) {
            *a += w * k;
        }
    }
    for (i, a) in acc.iter_mut().enumerate() {
        *a *= st.border_of(i);
    }
    for &(j, d) in changes {
        acc[j] += ridge * d;
    }
    acc
}

fn migrate<T: Task>(st: &mut DualState<T>, pos: usize, kind: EventKind, rate: f64, driven: &mut Vec<Driven>) -> Result<()> {
    match kind {
        EventKind::BoxHit { to } => {
            if st.regions[pos] != Region::Unbounded {
                return Err(Error::InconsistentEvent(format!("box hit on non-unbounded index {pos}")));
            }
            let (l, u) = st.piece_range(st.pieces[pos]);
            st.beta[pos] = if rate > 0.0 { u } else { l };
            st.regions[pos] = to;
            active_set::change_free_set(st, &[pos], &[])
        }
        EventKind::Crossing { .. } => {
            if st.regions[pos] == Region::Unbounded {
                return Err(Error::InconsistentEvent(format!("crossing on unbounded index {pos}")));
            }
            let b = st.beta[pos];
            let piece = if b == st.hi() && b != 0.0 {
                active_set::entry_piece(st, true)
            } else if b == st.lo() && b != 0.0 {
                active_set::entry_piece(st, false)
            } else {
                // at zero: the KKT value falling means the multiplier rises
                active_set::entry_piece(st, rate < 0.0)
            };
            enter(st, pos, piece)
        }
        EventKind::Arrival => {
            let k = driven
                .iter()
                .position(|d| d.pos == pos && d.added)
                .ok_or_else(|| Error::InconsistentEvent(format!("arrival of non-driven index {pos}")))?;
            let d = driven.remove(k);
            let piece = active_set::entry_piece(st, d.rate > 0.0);
            enter(st, pos, piece)
        }
        EventKind::End => Ok(()),
    }
}

fn enter<T: Task>(st: &mut DualState<T>, pos: usize, piece: Piece) -> Result<()> {
    st.pieces[pos] = piece;
    st.regions[pos] = Region::Unbounded;
    active_set::change_free_set(st, &[], &[pos])
}

fn finish_by_rebuild<T: Task>(
    st: &mut DualState<T>,
    driven: &[Driven],
    removed: &[usize],
    n_added: usize,
    solver: &SolverConfig,
) -> Result<()> {
    for d in driven.iter().filter(|d| !d.added) {
        st.beta[d.pos] = 0.0;
    }
    st.remove_positions(removed);
    st.recompute_gradients();
    let incoming: Vec<usize> = (st.len() - n_added..st.len()).collect();
    active_set::rebuild(st, &incoming, solver)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelSpec;
    use crate::model::Hyperparams;
    use crate::online_svm::{update_multi_svm, UpdateConfig};
    use crate::online_svr::update_multi_svr;
    use crate::solver::{train_svm_batch, train_svr_batch};
    use rand::{Rng, SeedableRng};

    fn blobs(n: usize, seed: u64, offset: u64) -> Vec<Sample> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let y = if i % 2 == 0 { 1.0 } else { -1.0 };
                let x = vec![y * 0.7 + rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
                Sample::new(offset + i as u64, x, y)
            })
            .collect()
    }

    fn sine(n: usize, seed: u64, offset: u64) -> Vec<Sample> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let x: f64 = rng.gen_range(-3.0..3.0);
                Sample::new(offset + i as u64, vec![x], x.sin() + rng.gen_range(-0.2..0.2))
            })
            .collect()
    }

    #[test]
    fn step_select_examples() {
        let c = |id, distance, rate| Candidate { id: SampleId(id), kind: EventKind::Arrival, distance, rate };
        let (eta, ev) = step_select(&[c(1, 0.1, 0.5), c(2, 0.3, 0.2)], 1.0);
        assert!((eta - 0.2).abs() < 1e-15);
        assert_eq!(ev.unwrap().id, SampleId(1));
        let (eta, ev) = step_select(&[c(1, 2.0, 0.5), c(2, 0.3, 0.2)], 1.0);
        assert_eq!((eta, ev), (1.0, None));
        // wrong-sign and flat candidates are skipped
        let (eta, ev) = step_select(&[c(1, -0.1, 0.5), c(2, 0.3, 1e-14)], 0.7);
        assert_eq!((eta, ev), (0.7, None));
        // ties go to the lowest id
        let (_, ev) = step_select(&[c(5, 0.1, 0.5), c(3, 0.2, 1.0)], 1.0);
        assert_eq!(ev.unwrap().id, SampleId(3));
    }

    fn one_free() -> SvmState {
        SvmState::from_parts(
            KernelSpec::linear(1.0),
            Hyperparams::new(10.0, 0.0),
            vec![Sample::new(0, vec![1.0], 1.0)],
            vec![0.5],
            0.0,
            Some(vec![Region::Unbounded]),
        )
        .unwrap()
    }

    #[test]
    fn direction_matches_equilibrium_example() {
        let s = one_free();
        let d = Sample::new(9, vec![0.5], -1.0);
        let dir = direction_svm(&s, &[(d.clone(), 0.3)], &[]).unwrap();
        assert!((dir.bias + 0.45).abs() < 1e-12);
        assert!((dir.unbounded[0].1 - 0.3).abs() < 1e-12);
        assert_eq!(dir.added, vec![(SampleId(9), 0.3)]);
        // equality per unit η
        let total = dir.unbounded[0].1 * 1.0 + 0.3 * -1.0;
        assert!(total.abs() < 1e-12);
        let phi = sensitivity_phi(&s, &[d], &dir).unwrap();
        assert!(phi[0].abs() < 1e-12);
    }

    #[test]
    fn zero_direction_when_targets_met() {
        let s = train_svm_batch(&blobs(12, 1, 0), &KernelSpec::rbf(1.0, 0.5), &Hyperparams::new(1.0, 0.0), &Default::default())
            .unwrap();
        let o: Vec<SampleId> = s.ids().zip(s.regions()).filter(|(_, r)| **r == Region::NonSupport).map(|(i, _)| i).collect();
        let dir = direction_svm(&s, &[], &o).unwrap();
        assert_eq!(dir.bias, 0.0);
        assert!(dir.unbounded.iter().all(|(_, d)| *d == 0.0));
        let phi = sensitivity_phi(&s, &[], &dir).unwrap();
        assert!(phi.iter().all(|p| *p == 0.0));
    }

    /// Finite-difference oracle for the sensitivities: move everything by
    /// `h` along the direction and recompute KKT values from scratch.
    fn fd_check<T: Task>(s: &DualState<T>, add: Vec<(Sample, f64)>, remove: Vec<SampleId>) {
        let dir = direction(s, &add, &remove).unwrap();
        let adds: Vec<Sample> = add.iter().map(|(x, _)| x.clone()).collect();
        let phi = sensitivity_phi(s, &adds, &dir).unwrap();
        let h = 1e-6;
        let mut samples = s.samples().to_vec();
        samples.extend(adds.iter().cloned());
        let mut beta = s.multipliers().to_vec();
        for (id, d) in dir.unbounded.iter().chain(&dir.removed) {
            beta[s.position(*id).unwrap()] += h * d;
        }
        beta.extend(add.iter().map(|(_, d)| h * d));
        let base_beta: Vec<f64> = s.multipliers().iter().copied().chain(add.iter().map(|_| 0.0)).collect();
        let before = DualState::<T>::from_parts(*s.kernel(), *s.hyper(), samples.clone(), base_beta, s.bias(), Some(vec![Region::NonSupport; samples.len()])).unwrap();
        let after = DualState::<T>::from_parts(*s.kernel(), *s.hyper(), samples.clone(), beta, s.bias() + h * dir.bias, Some(vec![Region::NonSupport; samples.len()])).unwrap();
        let (g0, g1) = (before.fresh_gradients(), after.fresh_gradients());
        for i in 0..samples.len() {
            let fd = (g1[i] - g0[i]) / h;
            assert!((fd - phi[i]).abs() < 1e-6, "{i}: fd {fd} phi {}", phi[i]);
        }
        for (id, _) in &dir.unbounded {
            assert!(phi[s.position(*id).unwrap()].abs() < 1e-10);
        }
    }

    #[test]
    fn phi_matches_finite_differences() {
        let data = blobs(24, 3, 0);
        let s = train_svm_batch(&data[..20], &KernelSpec::rbf(1.0, 0.5), &Hyperparams::new(1.0, 0.0), &Default::default())
            .unwrap();
        let add: Vec<(Sample, f64)> = data[20..].iter().map(|x| (x.clone(), 1.0)).collect();
        let sv = s.ids().zip(s.regions()).find(|(_, r)| **r == Region::Bounded).map(|(i, _)| i);
        fd_check(&s, add, sv.into_iter().collect());

        let data = sine(24, 3, 0);
        let s = train_svr_batch(&data[..20], &KernelSpec::rbf(1.0, 0.5), &Hyperparams::new(1.0, 0.2), &Default::default())
            .unwrap();
        let add: Vec<(Sample, f64)> = data[20..].iter().map(|x| (x.clone(), 1.0)).collect();
        fd_check(&s, add, vec![SampleId(2)]);
    }

    fn gap<T: Task>(a: &DualState<T>, b: &DualState<T>, dim: usize) -> f64 {
        (0..30)
            .map(|i| {
                let x: Vec<f64> = (0..dim).map(|k| -2.5 + 0.17 * i as f64 + 0.3 * k as f64).collect();
                (a.decision_value(&x).unwrap() - b.decision_value(&x).unwrap()).abs()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn svm_path_matches_retrain_and_one_shot() {
        let data = blobs(30, 11, 0);
        let spec = KernelSpec::rbf(1.0, 0.5);
        let hyper = Hyperparams::new(1.0, 0.0);
        let base = train_svm_batch(&data[..24], &spec, &hyper, &Default::default()).unwrap();
        let remove = vec![SampleId(1), SampleId(6)];
        let batch = UpdateBatch::new(data[24..].to_vec(), remove.clone());

        let mut path = base.clone();
        let mut checked = 0;
        path_update_observed(&mut path, &batch, &PathConfig::default(), |st, flight| {
            let report = st.validate();
            let bad: Vec<_> = report
                .violations
                .iter()
                .filter(|v| v.index.is_some_and(|i| !flight.contains(&st.samples()[i].id)))
                .collect();
            assert!(bad.is_empty(), "{bad:?}");
            assert!(report.equality_residual < 1e-9);
            checked += 1;
        })
        .unwrap();
        assert!(checked > 0);
        let mut again = base.clone();
        let r = path_update_svm(&mut again, &batch, &PathConfig::default()).unwrap();
        assert_eq!(r.repair_changes, 0);
        assert!(r.events.len() > 2);
        assert!(path.validate().is_empty(), "{}", path.validate());

        let mut shot = base.clone();
        update_multi_svm(&mut shot, &batch, &UpdateConfig::default()).unwrap();
        let kept: Vec<Sample> = data.iter().filter(|x| !remove.contains(&x.id)).cloned().collect();
        let oracle = train_svm_batch(&kept, &spec, &hyper, &Default::default()).unwrap();
        assert!(gap(&path, &oracle, 2) < 1e-6);
        assert!(gap(&path, &shot, 2) < 1e-6);
        for (a, b) in path.multipliers().iter().zip(shot.multipliers()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn svr_path_matches_retrain() {
        let data = sine(36, 5, 0);
        let spec = KernelSpec::rbf(1.0, 0.5);
        let hyper = Hyperparams::new(1.0, 0.2);
        let base = train_svr_batch(&data[..30], &spec, &hyper, &Default::default()).unwrap();
        let remove = vec![SampleId(0), SampleId(13)];
        let batch = UpdateBatch::new(data[30..].to_vec(), remove.clone());
        let mut path = base.clone();
        let r = path_update_svr(&mut path, &batch, &PathConfig::default()).unwrap();
        assert_eq!(r.repair_changes, 0);
        assert!(path.validate().is_empty(), "{}", path.validate());
        let mut shot = base.clone();
        update_multi_svr(&mut shot, &batch, &UpdateConfig::default()).unwrap();
        let kept: Vec<Sample> = data.iter().filter(|x| !remove.contains(&x.id)).cloned().collect();
        let oracle = train_svr_batch(&kept, &spec, &hyper, &Default::default()).unwrap();
        assert!(gap(&path, &oracle, 1) < 1e-6);
        assert!(gap(&path, &shot, 1) < 1e-6);
    }

    #[test]
    fn single_increment() {
        let data = blobs(21, 2, 0);
        let spec = KernelSpec::rbf(1.0, 0.5);
        let hyper = Hyperparams::new(1.0, 0.0);
        let mut s = train_svm_batch(&data[..20], &spec, &hyper, &Default::default()).unwrap();
        let r = path_update_svm(&mut s, &UpdateBatch::new(data[20..].to_vec(), vec![]), &PathConfig::default()).unwrap();
        assert!(r.events.last().is_some_and(|e| e.kind == EventKind::End));
        let etas: Vec<f64> = r.events.iter().map(|e| e.eta).collect();
        assert!(etas.windows(2).all(|w| w[0] <= w[1]));
        let oracle = train_svm_batch(&data, &spec, &hyper, &Default::default()).unwrap();
        assert!(gap(&s, &oracle, 2) < 1e-6);
    }

    #[test]
    fn empty_batch_is_noop() {
        let mut s = train_svm_batch(&blobs(10, 1, 0), &KernelSpec::rbf(1.0, 0.5), &Hyperparams::new(1.0, 0.0), &Default::default())
            .unwrap();
        let before = s.clone();
        path_update_svm(&mut s, &UpdateBatch::default(), &PathConfig::default()).unwrap();
        assert_eq!(s.multipliers(), before.multipliers());
        assert_eq!(s.bias(), before.bias());
    }
}
