//! Equilibrium solves and active-set bookkeeping shared by the batch
//! polish, the one-shot updaters and the path follower.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashSet;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::parallel_enabled;
use crate::linalg::{bordered_inverse, inverse_grow_shrink, BorderedInverse, DenseMatrix};
use crate::model::{DualState, Piece, Region, Task};
use crate::solver::{self, SolverConfig};

/// KKT slack tolerated on non-unbounded samples before they enter the set.
pub(crate) const KKT_TOLERANCE: f64 = 1e-9;
/// Largest acceptable residual of the unbounded equations after a solve.
pub(crate) const DRIFT_TOLERANCE: f64 = 1e-10;
pub(crate) const DEFAULT_REPAIR_PASSES: usize = 50;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub(crate) struct RepairStats {
    pub passes: usize,
    pub entered: usize,
    pub left: usize,
    pub refreshes: usize,
}

/// Entry piece for a sample joining the unbounded set moving its
/// multiplier upward (`up`) or downward.
pub(crate) fn entry_piece<T: Task>(st: &DualState<T>, up: bool) -> Piece {
    if st.lo() < 0.0 && st.tube() == 0.0 {
        Piece::Whole
    } else if up {
        Piece::Positive
    } else {
        Piece::Negative
    }
}

/// Residuals `h_s − target_s` over the unbounded set and the equality sum.
pub(crate) fn equilibrium_residual<T: Task>(st: &DualState<T>) -> f64 {
    let worst = st
        .free
        .iter()
        .map(|&s| (st.grad[s] - st.piece_target(st.pieces[s])).abs())
        .fold(0.0, f64::max);
    worst.max(st.equality_residual().abs())
}

/// Solves the bordered system for `Δb` and `Δβ_S` given fixed changes
/// `Δβ_P` of non-unbounded samples, folding in any current residual, and
/// applies the result. Returns whether anything changed.
pub(crate) fn solve_and_apply<T: Task>(st: &mut DualState<T>, fixed: &[(usize, f64)]) -> Result<bool> {
    let fixed: Vec<(usize, f64)> = fixed.iter().copied().filter(|&(_, d)| d != 0.0).collect();
    let mut eq = st.equality_residual();
    for &(p, d) in &fixed {
        eq += st.border_of(p) * d;
    }
    if st.free.is_empty() {
        if eq.abs() > 1e-12 {
            return Err(Error::EmptyS);
        }
        if fixed.is_empty() {
            return Ok(false);
        }
        apply_changes(st, 0.0, &fixed);
        return Ok(true);
    }
    let fixed_cols: Vec<Arc<[f64]>> = fixed.iter().map(|&(p, _)| st.kernel_column(p)).collect();
    let mut rhs = Vec::with_capacity(st.free.len() + 1);
    rhs.push(-eq);
    for &s in &st.free {
        let mut r = st.grad[s] - st.piece_target(st.pieces[s]);
        for (&(p, d), col) in fixed.iter().zip(&fixed_cols) {
            r += st.m_entry(s, p, col) * d;
        }
        rhs.push(-r);
    }
    if fixed.is_empty() && rhs.iter().all(|r| r.abs() <= 1e-15) {
        return Ok(false);
    }
    st.ensure_inverse()?;
    let sol = st.inverse.as_ref().expect("inverse present").solve(&rhs);
    let mut changes = fixed;
    changes.extend(st.free.iter().zip(&sol[1..]).map(|(&s, &d)| (s, d)));
    apply_changes(st, sol[0], &changes);
    Ok(true)
}

/// Applies `Δb` and `Δβ_j` and updates every cached KKT value:
/// `Δh_i = v_i (Δb + Σ_j v_j Δβ_j K_ij) + ρ Δβ_i`.
pub(crate) fn apply_changes<T: Task>(st: &mut DualState<T>, db: f64, changes: &[(usize, f64)]) {
    let weighted: Vec<(Arc<[f64]>, f64)> = changes
        .iter()
        .filter(|&&(_, d)| d != 0.0)
        .map(|&(j, d)| (st.kernel_column(j), st.border_of(j) * d))
        .collect();
    let n = st.len();
    let mut acc = vec![db; n];
    if parallel_enabled() && n * weighted.len() >= 1 << 16 {
        acc.par_chunks_mut(512).enumerate().for_each(|(c, chunk)| {
            let base = c * 512;
            for (col, w) in &weighted {
                for (k, a) in chunk.iter_mut().enumerate() {
                    *a += w * col[base + k];
                }
            }
        });
    } else {
        for (col, w) in &weighted {
            for (a, k) in acc.iter_mut().zip(col.iter()) {
                *a += w * k;
            }
        }
    }
    for (i, a) in acc.iter().enumerate() {
        let v = st.border_of(i);
        st.grad[i] += v * a;
    }
    let ridge = st.kernel.ridge;
    for &(j, d) in changes {
        st.beta[j] += d;
        st.grad[j] += ridge * d;
    }
    st.bias += db;
}

/// Moves samples out of and into the unbounded set, updating the bordered
/// inverse by a block grow/shrink or, failing that, from scratch.
/// Pieces of entering samples must already be set.
pub(crate) fn change_free_set<T: Task>(st: &mut DualState<T>, leaving: &[usize], entering: &[usize]) -> Result<()> {
    if leaving.is_empty() && entering.is_empty() {
        return Ok(());
    }
    let gone: HashSet<usize> = leaving.iter().copied().collect();
    let old = std::mem::take(&mut st.free);
    let removed: Vec<usize> = old
        .iter()
        .enumerate()
        .filter(|(_, p)| gone.contains(p))
        .map(|(k, _)| k + 1)
        .collect();
    let survivors: Vec<usize> = old.iter().copied().filter(|p| !gone.contains(p)).collect();
    let mut next = survivors.clone();
    next.extend_from_slice(entering);

    let prev = st.inverse.take();
    let usable = prev.filter(|inv| inv.order == old.len() && !survivors.is_empty() && !next.is_empty());
    st.free = next;
    if st.free.is_empty() {
        return Ok(());
    }
    if let Some(prev) = usable {
        let m = entering.len();
        let cols: Vec<Arc<[f64]>> = entering.iter().map(|&e| st.kernel_column(e)).collect();
        let mut cross = DenseMatrix::zeros(old.len() + 1, m);
        let mut block = DenseMatrix::zeros(m, m);
        for (c, (&e, col)) in entering.iter().zip(&cols).enumerate() {
            cross[(0, c)] = st.border_of(e);
            for (k, &s) in old.iter().enumerate() {
                cross[(k + 1, c)] = st.m_entry(s, e, col);
            }
            for (r, &e2) in entering.iter().enumerate() {
                block[(r, c)] = st.m_entry(e2, e, col);
            }
        }
        block.symmetrize();
        if let Ok(inv) = inverse_grow_shrink(&prev.inv, &cross, &block, &removed) {
            st.inverse = Some(BorderedInverse::from_matrix(inv));
            return Ok(());
        }
    }
    st.refresh_inverse()
}

/// Primal-dual active-set repair: solves for equilibrium, clamps unbounded
/// samples that left their piece, admits KKT violators, and repeats until
/// the partition is stable.
pub(crate) fn repair<T: Task>(st: &mut DualState<T>, max_passes: usize) -> Result<RepairStats> {
    let mut stats = RepairStats::default();
    let mut seen = HashSet::new();
    let mut fixed: Vec<(usize, f64)> = Vec::new();
    let mut snap: Vec<(usize, f64)> = Vec::new();
    let (lo, hi, tube) = (st.lo(), st.hi(), st.tube());
    for pass in 0..max_passes {
        stats.passes = pass + 1;
        solve_and_apply(st, &fixed)?;
        fixed.clear();
        for (s, bound) in snap.drain(..) {
            st.beta[s] = bound;
        }

        let mut leaving = Vec::new();
        let mut left = HashSet::new();
        for k in 0..st.free.len() {
            let s = st.free[k];
            let (l, u) = st.piece_range(st.pieces[s]);
            let b = st.beta[s];
            let bound = if b < l {
                l
            } else if b > u {
                u
            } else {
                continue;
            };
            fixed.push((s, bound - b));
            snap.push((s, bound));
            leaving.push(s);
            left.insert(s);
            st.regions[s] = if bound == 0.0 { Region::NonSupport } else { Region::Bounded };
        }

        let mut entering = Vec::new();
        for i in 0..st.len() {
            if st.regions[i] == Region::Unbounded || left.contains(&i) {
                continue;
            }
            let (b, h) = (st.beta[i], st.grad[i]);
            let direction = if b != 0.0 && b != hi && b != lo {
                Some(b > 0.0)
            } else if b == 0.0 {
                if h < -tube - KKT_TOLERANCE {
                    Some(true)
                } else if lo < 0.0 && h > tube + KKT_TOLERANCE {
                    Some(false)
                } else {
                    None
                }
            } else if b == hi {
                (h > -tube + KKT_TOLERANCE).then_some(false)
            } else {
                (h < tube - KKT_TOLERANCE).then_some(true)
            };
            match direction {
                Some(up) => {
                    let piece = if b == hi {
                        entry_piece(st, true)
                    } else if b == lo && lo < 0.0 {
                        entry_piece(st, false)
                    } else {
                        entry_piece(st, up)
                    };
                    st.pieces[i] = piece;
                    st.regions[i] = Region::Unbounded;
                    entering.push(i);
                }
                None => {
                    st.regions[i] = if b == 0.0 { Region::NonSupport } else { Region::Bounded };
                }
            }
        }

        if leaving.is_empty() && entering.is_empty() {
            if equilibrium_residual(st) <= DRIFT_TOLERANCE || stats.refreshes > 0 {
                return Ok(stats);
            }
            st.refresh_inverse()?;
            stats.refreshes += 1;
            continue;
        }
        stats.entered += entering.len();
        stats.left += leaving.len();
        if !seen.insert(signature(st)) {
            return Err(Error::RepairDivergence {
                passes: pass + 1,
                worst: worst_violation(st),
            });
        }
        change_free_set(st, &leaving, &entering)?;
    }
    Err(Error::RepairDivergence {
        passes: max_passes,
        worst: worst_violation(st),
    })
}

fn signature<T: Task>(st: &DualState<T>) -> u64 {
    let mut h = DefaultHasher::new();
    st.regions.hash(&mut h);
    st.pieces.hash(&mut h);
    h.finish()
}

/// Largest KKT residual under the current tags, using cached values.
pub(crate) fn worst_violation<T: Task>(st: &DualState<T>) -> f64 {
    let (lo, hi, tube) = (st.lo(), st.hi(), st.tube());
    (0..st.len())
        .map(|i| crate::model::kkt_residual(st.regions[i], st.beta[i], st.grad[i], lo, hi, tube))
        .fold(0.0, f64::max)
}

/// Re-establishes a valid unbounded set when it has emptied: batch-solves
/// over the current support vectors plus `incoming`, holds everything else
/// at zero, then repairs.
pub(crate) fn rebuild<T: Task>(st: &mut DualState<T>, incoming: &[usize], cfg: &SolverConfig) -> Result<RepairStats> {
    let mut keep: Vec<usize> = (0..st.len())
        .filter(|&i| st.beta[i] != 0.0 || incoming.contains(&i))
        .collect();
    if !solver::solvable::<T>(keep.iter().map(|&i| st.samples[i].target)) {
        keep = (0..st.len()).collect();
    }
    let subset: Vec<_> = keep.iter().map(|&i| st.samples[i].clone()).collect();
    let (beta_sub, bias) = solver::smo::<T>(&subset, &st.kernel, &st.hyper, cfg)?;
    st.beta.iter_mut().for_each(|b| *b = 0.0);
    for (&i, b) in keep.iter().zip(beta_sub) {
        st.beta[i] = b;
    }
    st.bias = bias;
    st.recompute_gradients();
    st.tag_by_value();
    st.refresh_inverse()?;
    repair(st, DEFAULT_REPAIR_PASSES)
}

/// Recomputes the bordered inverse over the unbounded set directly.
#[allow(dead_code)]
pub(crate) fn direct_inverse<T: Task>(st: &mut DualState<T>) -> Result<BorderedInverse> {
    let q = st.free_block();
    let border: Vec<f64> = st.free.iter().map(|&i| st.border_of(i)).collect();
    bordered_inverse(&q, &border)
}
