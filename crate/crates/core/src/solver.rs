//! Batch dual solver: sequential two-variable coordinate descent with
//! maximal-violating-pair selection.
//!
//! Both tasks are solved in `a`-space, `a_i = v_i β_i`, where the problem
//! reads `min ½ aᵀ(K + ρI)a − Σ y_i a_i + ε‖a‖₁` subject to `Σ a_i = 0` and
//! a per-sample box. The L1 term only appears for regression.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::active_set;
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::model::{Classification, DualState, Hyperparams, Region, Regression, Sample, SvmState, SvrState, Task, TaskKind};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Stop when the maximal pair violation drops to this value.
    pub kkt_tolerance: f64,
    /// Iteration cap, in multiples of the sample count.
    pub max_passes: usize,
    pub seed: u64,
    /// Finish with an exact equilibrium solve over the unbounded set.
    pub polish: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            kkt_tolerance: 1e-6,
            max_passes: 10_000,
            seed: 0,
            polish: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.kkt_tolerance > 0.0) {
            return Err(Error::InvalidHyperparams(format!(
                "kkt_tolerance must be > 0, got {}",
                self.kkt_tolerance
            )));
        }
        Ok(())
    }
}

pub fn train_svm_batch(
    samples: &[Sample],
    spec: &KernelSpec,
    hyper: &Hyperparams,
    config: &SolverConfig,
) -> Result<SvmState> {
    train_batch::<Classification>(samples, spec, hyper, config)
}

pub fn train_svr_batch(
    samples: &[Sample],
    spec: &KernelSpec,
    hyper: &Hyperparams,
    config: &SolverConfig,
) -> Result<SvrState> {
    train_batch::<Regression>(samples, spec, hyper, config)
}

pub fn train_batch<T: Task>(
    samples: &[Sample],
    spec: &KernelSpec,
    hyper: &Hyperparams,
    config: &SolverConfig,
) -> Result<DualState<T>> {
    spec.validate()?;
    hyper.validate()?;
    config.validate()?;
    if samples.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: samples.len(),
        });
    }
    for s in samples {
        T::check_target(s.target)?;
    }
    if !solvable::<T>(samples.iter().map(|s| s.target)) {
        return Err(Error::SingleClassInput);
    }
    let (beta, bias) = smo::<T>(samples, spec, hyper, config)?;
    let regions = tags_by_value(&beta, T::lower_bound(hyper), hyper.c);
    let state = DualState::<T>::from_parts(*spec, *hyper, samples.to_vec(), beta, bias, Some(regions))?;
    if !config.polish {
        return Ok(state);
    }
    let mut polished = state.clone();
    match active_set::repair(&mut polished, active_set::DEFAULT_REPAIR_PASSES) {
        Ok(_) => Ok(polished),
        Err(_) => Ok(state),
    }
}

/// Whether a batch problem over these targets has a feasible interior.
pub(crate) fn solvable<T: Task>(targets: impl Iterator<Item = f64>) -> bool {
    match T::KIND {
        TaskKind::Regression => true,
        TaskKind::Classification => {
            let (mut pos, mut neg) = (false, false);
            for y in targets {
                pos |= y > 0.0;
                neg |= y < 0.0;
            }
            pos && neg
        }
    }
}

fn tags_by_value(beta: &[f64], lo: f64, hi: f64) -> Vec<Region> {
    beta.iter()
        .map(|&b| {
            if b == 0.0 {
                Region::NonSupport
            } else if b == hi || (lo < 0.0 && b == lo) {
                Region::Bounded
            } else {
                Region::Unbounded
            }
        })
        .collect()
}

/// LRU cache of ridge-augmented kernel rows.
struct RowCache<'a> {
    samples: &'a [Sample],
    kernel: &'a KernelSpec,
    rows: HashMap<usize, (Arc<[f64]>, u64)>,
    order: BTreeMap<u64, usize>,
    clock: u64,
    capacity: usize,
}

impl<'a> RowCache<'a> {
    fn new(samples: &'a [Sample], kernel: &'a KernelSpec) -> Self {
        let n = samples.len().max(1);
        let capacity = ((1usize << 25) / n).clamp(2, n);
        Self {
            samples,
            kernel,
            rows: HashMap::new(),
            order: BTreeMap::new(),
            clock: 0,
            capacity,
        }
    }

    fn row(&mut self, i: usize) -> Arc<[f64]> {
        self.clock += 1;
        if let Some((row, stamp)) = self.rows.get_mut(&i) {
            self.order.remove(stamp);
            *stamp = self.clock;
            self.order.insert(self.clock, i);
            return Arc::clone(row);
        }
        if self.rows.len() >= self.capacity {
            if let Some((&stamp, &victim)) = self.order.iter().next() {
                self.order.remove(&stamp);
                self.rows.remove(&victim);
            }
        }
        let mut r = self.kernel.column(self.samples, &self.samples[i].features);
        r[i] += self.kernel.ridge;
        let r: Arc<[f64]> = r.into();
        self.rows.insert(i, (Arc::clone(&r), self.clock));
        self.order.insert(self.clock, i);
        r
    }
}

#[inline]
fn sign_up(a: f64) -> f64 {
    if a >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

#[inline]
fn sign_down(a: f64) -> f64 {
    if a > 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Minimizes `½κt² + g t + ε(|a_i + t| + |a_j − t|)` over `t ∈ [0, t_max]`.
fn pair_step(g: f64, ai: f64, aj: f64, tube: f64, kappa: f64, t_max: f64) -> f64 {
    let objective = |t: f64| 0.5 * kappa * t * t + g * t + tube * ((ai + t).abs() + (aj - t).abs());
    let mut cuts = vec![0.0];
    if tube > 0.0 {
        let mut bps: Vec<f64> = [-ai, aj].into_iter().filter(|&b| b > 0.0 && b < t_max).collect();
        bps.sort_by(f64::total_cmp);
        cuts.extend(bps);
    }
    cuts.push(t_max);
    let mut best = (objective(0.0), 0.0);
    for w in cuts.windows(2) {
        let (s, e) = (w[0], w[1]);
        let mid = 0.5 * (s + e);
        let slope = g + tube * ((ai + mid).signum() - (aj - mid).signum());
        let t = (-slope / kappa).clamp(s, e);
        let val = objective(t);
        if val < best.0 {
            best = (val, t);
        }
    }
    best.1
}

/// Runs the solver and returns `(β, b)`.
pub(crate) fn smo<T: Task>(
    samples: &[Sample],
    kernel: &KernelSpec,
    hyper: &Hyperparams,
    config: &SolverConfig,
) -> Result<(Vec<f64>, f64)> {
    let n = samples.len();
    let tube = T::tube(hyper);
    let (lo, hi) = (T::lower_bound(hyper), hyper.c);
    let v: Vec<f64> = samples.iter().map(|s| T::border(s.target)).collect();
    let y: Vec<f64> = samples.iter().map(|s| s.target).collect();
    let (a_lo, a_hi): (Vec<f64>, Vec<f64>) = v
        .iter()
        .map(|&vi| {
            let (p, q) = (vi * lo, vi * hi);
            (p.min(q), p.max(q))
        })
        .unzip();

    let mut a = vec![0.0; n];
    let mut ga: Vec<f64> = y.iter().map(|t| -t).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));
    let mut cache = RowCache::new(samples, kernel);

    let cap = config.max_passes.saturating_mul(n.max(1));
    let mut converged = false;
    let mut gap = f64::INFINITY;
    for _ in 0..cap {
        let (mut i, mut up_min) = (usize::MAX, f64::INFINITY);
        let (mut j, mut dn_max) = (usize::MAX, f64::NEG_INFINITY);
        for &k in &order {
            if a[k] < a_hi[k] {
                let up = ga[k] + tube * sign_up(a[k]);
                if up < up_min {
                    up_min = up;
                    i = k;
                }
            }
            if a[k] > a_lo[k] {
                let dn = ga[k] + tube * sign_down(a[k]);
                if dn > dn_max {
                    dn_max = dn;
                    j = k;
                }
            }
        }
        gap = dn_max - up_min;
        if i == usize::MAX || j == usize::MAX || gap <= config.kkt_tolerance {
            converged = true;
            break;
        }
        let (ri, rj) = (cache.row(i), cache.row(j));
        let kappa = (ri[i] + rj[j] - 2.0 * ri[j]).max(1e-12);
        let room_i = a_hi[i] - a[i];
        let room_j = a[j] - a_lo[j];
        let t_max = room_i.min(room_j);
        let t = pair_step(ga[i] - ga[j], a[i], a[j], tube, kappa, t_max);
        if t <= 0.0 {
            break;
        }
        a[i] = if t == room_i { a_hi[i] } else { a[i] + t };
        a[j] = if t == room_j { a_lo[j] } else { a[j] - t };
        for k in 0..n {
            ga[k] += t * (ri[k] - rj[k]);
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            iterations: cap,
            worst_gap: gap,
        });
    }

    let mut sum = 0.0;
    let mut count = 0usize;
    let (mut lower, mut upper) = (f64::NEG_INFINITY, f64::INFINITY);
    for k in 0..n {
        let interior = a[k] > a_lo[k] && a[k] < a_hi[k] && (tube == 0.0 || a[k] != 0.0);
        if interior {
            sum += -(ga[k] + tube * a[k].signum());
            count += 1;
        } else {
            if a[k] < a_hi[k] {
                lower = lower.max(-(ga[k] + tube * sign_up(a[k])));
            }
            if a[k] > a_lo[k] {
                upper = upper.min(-(ga[k] + tube * sign_down(a[k])));
            }
        }
    }
    let bias = if count > 0 {
        sum / count as f64
    } else if lower.is_finite() && upper.is_finite() {
        0.5 * (lower + upper)
    } else if lower.is_finite() {
        lower
    } else if upper.is_finite() {
        upper
    } else {
        0.0
    };
    let beta = a.iter().zip(&v).map(|(ai, vi)| ai * vi).collect();
    Ok((beta, bias))
}
