use std::collections::{HashMap, HashSet};
use std::marker::PhantomData;
use std::ops::Range;
use std::sync::Arc;

use rayon::prelude::*;

use super::validate::{self, ValidationReport, REGION_TOLERANCE};
use super::{
    Classification, Hyperparams, Piece, Region, Regression, Sample, SampleId, Task,
};
use crate::error::{Error, Result};
use crate::kernels::{self, parallel_enabled, KernelExpansion, KernelSpec};
use crate::linalg::{bordered_inverse, BorderedInverse, DenseMatrix};

pub type SvmState = DualState<Classification>;
pub type SvrState = DualState<Regression>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RegionCounts {
    pub unbounded: usize,
    pub bounded: usize,
    pub non_support: usize,
}

/// Trained dual model: samples, multipliers, bias, per-sample KKT quantity,
/// region partition and the cached bordered inverse over the unbounded set.
#[derive(Debug, Clone)]
pub struct DualState<T: Task> {
    pub(crate) kernel: KernelSpec,
    pub(crate) hyper: Hyperparams,
    pub(crate) samples: Vec<Sample>,
    pub(crate) beta: Vec<f64>,
    pub(crate) bias: f64,
    /// `G_i` (classification) or `𝔉_i` (regression), maintained incrementally.
    pub(crate) grad: Vec<f64>,
    pub(crate) regions: Vec<Region>,
    pub(crate) pieces: Vec<Piece>,
    /// Positions of unbounded samples, in the row order of `inverse`.
    pub(crate) free: Vec<usize>,
    pub(crate) inverse: Option<BorderedInverse>,
    positions: HashMap<SampleId, usize>,
    /// Kernel columns `K(x_·, x_j)` over the current sample order.
    columns: HashMap<SampleId, Arc<[f64]>>,
    _task: PhantomData<T>,
}

impl<T: Task> DualState<T> {
    pub fn empty(kernel: KernelSpec, hyper: Hyperparams) -> Result<Self> {
        kernel.validate()?;
        hyper.validate()?;
        Ok(Self {
            kernel,
            hyper,
            samples: Vec::new(),
            beta: Vec::new(),
            bias: 0.0,
            grad: Vec::new(),
            regions: Vec::new(),
            pieces: Vec::new(),
            free: Vec::new(),
            inverse: None,
            positions: HashMap::new(),
            columns: HashMap::new(),
            _task: PhantomData,
        })
    }

    /// Assembles a state from stored parts. Per-sample KKT quantities are
    /// recomputed; regions are classified from them when not given.
    pub fn from_parts(
        kernel: KernelSpec,
        hyper: Hyperparams,
        samples: Vec<Sample>,
        multipliers: Vec<f64>,
        bias: f64,
        regions: Option<Vec<Region>>,
    ) -> Result<Self> {
        let mut state = Self::empty(kernel, hyper)?;
        if multipliers.len() != samples.len() {
            return Err(Error::DimensionMismatch {
                expected: samples.len(),
                got: multipliers.len(),
            });
        }
        state.check_new_samples(&samples)?;
        for (i, s) in samples.iter().enumerate() {
            state.positions.insert(s.id, i);
        }
        state.pieces = vec![Piece::Positive; samples.len()];
        state.samples = samples;
        state.beta = multipliers;
        state.bias = bias;
        state.grad = state.fresh_gradients();
        state.regions = match regions {
            Some(r) => {
                if r.len() != state.samples.len() {
                    return Err(Error::DimensionMismatch {
                        expected: state.samples.len(),
                        got: r.len(),
                    });
                }
                r
            }
            None => state.classify_current()?,
        };
        state.reset_free_set();
        Ok(state)
    }

    fn classify_current(&self) -> Result<Vec<Region>> {
        let hi = self.hyper.c;
        if self.lo() < 0.0 {
            classify_regions_svr_impl(&self.beta, &self.grad, hi, self.tube())
        } else {
            validate::classify_regions_svm(&self.beta, &self.grad, hi)
        }
    }

    /// Rebuilds the unbounded list in position order and drops the inverse.
    pub(crate) fn reset_free_set(&mut self) {
        self.free = (0..self.len())
            .filter(|&i| self.regions[i] == Region::Unbounded)
            .collect();
        for i in 0..self.len() {
            self.pieces[i] = self.derive_piece(i);
        }
        self.inverse = None;
    }

    /// Tags every sample from its multiplier alone: interior values are
    /// unbounded, bound values bounded, zeros non-support.
    pub(crate) fn tag_by_value(&mut self) {
        let (lo, hi) = (self.lo(), self.hi());
        for i in 0..self.len() {
            let b = self.beta[i];
            self.regions[i] = if b == 0.0 {
                Region::NonSupport
            } else if b == hi || (lo < 0.0 && b == lo) {
                Region::Bounded
            } else {
                Region::Unbounded
            };
        }
        self.reset_free_set();
    }

    pub(crate) fn derive_piece(&self, i: usize) -> Piece {
        if self.lo() >= 0.0 {
            Piece::Positive
        } else if self.tube() == 0.0 {
            Piece::Whole
        } else if self.beta[i] > 0.0 {
            Piece::Positive
        } else if self.beta[i] < 0.0 {
            Piece::Negative
        } else if self.grad[i] >= 0.0 {
            Piece::Negative
        } else {
            Piece::Positive
        }
    }

    fn check_new_samples(&self, samples: &[Sample]) -> Result<()> {
        let dim = self
            .samples
            .first()
            .or(samples.first())
            .map(|s| s.features.len());
        let mut seen = HashSet::new();
        for s in samples {
            if let Some(d) = dim {
                if s.features.len() != d {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        got: s.features.len(),
                    });
                }
            }
            T::check_target(s.target)?;
            if self.positions.contains_key(&s.id) || !seen.insert(s.id) {
                return Err(Error::DuplicateId(s.id));
            }
        }
        Ok(())
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn hyper(&self) -> &Hyperparams {
        &self.hyper
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    /// `α` for classification, `θ` for regression.
    pub fn multipliers(&self) -> &[f64] {
        &self.beta
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    /// Cached `G` or `𝔉` values, maintained across updates.
    pub fn kkt_values(&self) -> &[f64] {
        &self.grad
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn position(&self, id: SampleId) -> Option<usize> {
        self.positions.get(&id).copied()
    }

    pub fn ids(&self) -> impl Iterator<Item = SampleId> + '_ {
        self.samples.iter().map(|s| s.id)
    }

    pub fn multiplier_of(&self, id: SampleId) -> Option<f64> {
        self.position(id).map(|i| self.beta[i])
    }

    pub fn region_of(&self, id: SampleId) -> Option<Region> {
        self.position(id).map(|i| self.regions[i])
    }

    pub fn counts(&self) -> RegionCounts {
        let mut c = RegionCounts::default();
        for r in &self.regions {
            match r {
                Region::Unbounded => c.unbounded += 1,
                Region::Bounded => c.bounded += 1,
                Region::NonSupport => c.non_support += 1,
            }
        }
        c
    }

    /// Ids of unbounded samples in the row order of the cached inverse.
    pub fn unbounded_ids(&self) -> Vec<SampleId> {
        self.free.iter().map(|&i| self.samples[i].id).collect()
    }

    pub fn cached_inverse(&self) -> Option<&BorderedInverse> {
        self.inverse.as_ref()
    }

    /// Next unused sample id (one past the largest id present).
    pub fn next_id(&self) -> u64 {
        self.samples.iter().map(|s| s.id.0 + 1).max().unwrap_or(0)
    }

    pub fn decision_value(&self, x: &[f64]) -> Result<f64> {
        kernels::decision_value(x, self)
    }

    pub fn decision_values<R: AsRef<[f64]> + Sync>(&self, xs: &[R]) -> Result<Vec<f64>> {
        xs.iter().map(|x| self.decision_value(x.as_ref())).collect()
    }

    pub fn training_decision_value(&self, i: usize) -> Result<f64> {
        kernels::training_decision_value(i, self)
    }

    /// `Σ_i v_i β_i`; zero at every valid state.
    pub fn equality_residual(&self) -> f64 {
        self.beta
            .iter()
            .zip(&self.samples)
            .map(|(b, s)| T::border(s.target) * b)
            .sum()
    }

    /// Dual objective in its maximization form.
    pub fn dual_objective(&self) -> f64 {
        let n = self.len();
        let mut quad = 0.0;
        for i in 0..n {
            if self.beta[i] == 0.0 {
                continue;
            }
            let ci = self.coefficient(i);
            for j in 0..n {
                if self.beta[j] == 0.0 {
                    continue;
                }
                let k = self
                    .kernel
                    .eval_unchecked(&self.samples[i].features, &self.samples[j].features);
                quad += ci * self.coefficient(j) * k;
            }
            quad += self.kernel.ridge * self.beta[i] * self.beta[i];
        }
        let linear: f64 = (0..n).map(|i| self.linear_of(i) * self.beta[i]).sum();
        let l1: f64 = self.beta.iter().map(|b| b.abs()).sum::<f64>() * self.tube();
        -(0.5 * quad + linear + l1)
    }

    /// KKT quantities recomputed from scratch, ignoring every cache.
    pub fn fresh_gradients(&self) -> Vec<f64> {
        let support: Vec<usize> = (0..self.len()).filter(|&j| self.beta[j] != 0.0).collect();
        let eval = |i: usize| -> f64 {
            let x = &self.samples[i].features;
            let mut f = self.bias;
            for &j in &support {
                f += self.coefficient(j) * self.kernel.eval_unchecked(x, &self.samples[j].features);
            }
            self.border_of(i) * f + self.kernel.ridge * self.beta[i] + self.linear_of(i)
        };
        if parallel_enabled() {
            (0..self.len()).into_par_iter().map(eval).collect()
        } else {
            (0..self.len()).map(eval).collect()
        }
    }

    pub fn validate(&self) -> ValidationReport {
        self.validate_with(REGION_TOLERANCE)
    }

    pub fn validate_with(&self, tol: f64) -> ValidationReport {
        validate::validate_state(self, tol)
    }

    // ---- crate internals -------------------------------------------------

    #[inline]
    pub(crate) fn border_of(&self, i: usize) -> f64 {
        T::border(self.samples[i].target)
    }

    #[inline]
    pub(crate) fn linear_of(&self, i: usize) -> f64 {
        T::linear(self.samples[i].target)
    }

    #[inline]
    pub(crate) fn lo(&self) -> f64 {
        T::lower_bound(&self.hyper)
    }

    #[inline]
    pub(crate) fn hi(&self) -> f64 {
        self.hyper.c
    }

    #[inline]
    pub(crate) fn tube(&self) -> f64 {
        T::tube(&self.hyper)
    }

    /// KKT target of an unbounded sample on `piece`.
    #[inline]
    pub(crate) fn piece_target(&self, piece: Piece) -> f64 {
        match piece {
            Piece::Positive => -self.tube(),
            Piece::Negative => self.tube(),
            Piece::Whole => 0.0,
        }
    }

    #[inline]
    pub(crate) fn piece_range(&self, piece: Piece) -> (f64, f64) {
        match piece {
            Piece::Positive => (0.0, self.hi()),
            Piece::Negative => (self.lo(), 0.0),
            Piece::Whole => (self.lo(), self.hi()),
        }
    }

    /// Kernel column of the sample at `pos`, cached until trimmed.
    pub(crate) fn kernel_column(&mut self, pos: usize) -> Arc<[f64]> {
        let id = self.samples[pos].id;
        if let Some(c) = self.columns.get(&id) {
            return Arc::clone(c);
        }
        let col: Arc<[f64]> = self
            .kernel
            .column(&self.samples, &self.samples[pos].features)
            .into();
        self.columns.insert(id, Arc::clone(&col));
        col
    }

    /// `M_ij = v_i v_j (K_ij + ρ[i=j])` from a cached column of `j`.
    #[inline]
    pub(crate) fn m_entry(&self, i: usize, j: usize, col_j: &[f64]) -> f64 {
        let k = col_j[i] + if i == j { self.kernel.ridge } else { 0.0 };
        self.border_of(i) * self.border_of(j) * k
    }

    /// Drops cached columns of samples that are not unbounded.
    pub(crate) fn trim_columns(&mut self) {
        let keep: HashSet<SampleId> = self.free.iter().map(|&i| self.samples[i].id).collect();
        self.columns.retain(|id, _| keep.contains(id));
    }

    /// Appends samples with zero multipliers; returns their positions.
    pub(crate) fn append(&mut self, new: Vec<Sample>) -> Result<Range<usize>> {
        self.check_new_samples(&new)?;
        let start = self.len();
        for s in new {
            self.positions.insert(s.id, self.samples.len());
            self.samples.push(s);
            self.beta.push(0.0);
            self.grad.push(0.0);
            self.regions.push(Region::NonSupport);
            self.pieces.push(Piece::Positive);
        }
        let end = self.len();
        // extend existing cached columns
        let ids: Vec<SampleId> = self.columns.keys().copied().collect();
        for id in ids {
            let j = self.positions[&id];
            let old = &self.columns[&id];
            let mut col = Vec::with_capacity(end);
            col.extend_from_slice(old);
            let xj = &self.samples[j].features;
            col.extend(
                self.samples[start..end]
                    .iter()
                    .map(|s| self.kernel.eval_unchecked(&s.features, xj)),
            );
            self.columns.insert(id, col.into());
        }
        let support: Vec<usize> = (0..start).filter(|&j| self.beta[j] != 0.0).collect();
        for d in start..end {
            let col = self.kernel_column(d);
            let f = self.bias
                + support
                    .iter()
                    .map(|&j| self.coefficient(j) * col[j])
                    .sum::<f64>();
            self.grad[d] = self.border_of(d) * f + self.linear_of(d);
            self.pieces[d] = self.derive_piece(d);
        }
        Ok(start..end)
    }

    /// Deletes the samples at `positions`. Removed samples must not be in
    /// the unbounded list.
    pub(crate) fn remove_positions(&mut self, positions: &[usize]) {
        if positions.is_empty() {
            return;
        }
        let n = self.len();
        let mut gone = vec![false; n];
        for &p in positions {
            gone[p] = true;
        }
        if self.free.iter().any(|&i| gone[i]) {
            self.free.retain(|&i| !gone[i]);
            self.inverse = None;
        }
        let mut remap = vec![usize::MAX; n];
        let mut next = 0;
        for i in 0..n {
            if !gone[i] {
                remap[i] = next;
                next += 1;
            }
        }
        for i in 0..n {
            if gone[i] {
                let id = self.samples[i].id;
                self.positions.remove(&id);
                self.columns.remove(&id);
            }
        }
        retain_mask(&mut self.beta, &gone);
        retain_mask(&mut self.grad, &gone);
        retain_mask(&mut self.regions, &gone);
        retain_mask(&mut self.pieces, &gone);
        retain_mask(&mut self.samples, &gone);
        for (i, s) in self.samples.iter().enumerate() {
            self.positions.insert(s.id, i);
        }
        for f in &mut self.free {
            *f = remap[*f];
        }
        for col in self.columns.values_mut() {
            let kept: Vec<f64> = col
                .iter()
                .zip(&gone)
                .filter(|(_, g)| !**g)
                .map(|(v, _)| *v)
                .collect();
            *col = kept.into();
        }
    }

    /// `M` restricted to the unbounded list.
    pub(crate) fn free_block(&mut self) -> DenseMatrix {
        let free = self.free.clone();
        let m = free.len();
        let mut q = DenseMatrix::zeros(m, m);
        for (b, &j) in free.iter().enumerate() {
            let col = self.kernel_column(j);
            for (a, &i) in free.iter().enumerate() {
                q[(a, b)] = self.m_entry(i, j, &col);
            }
        }
        q.symmetrize();
        q
    }

    /// Recomputes the bordered inverse over the unbounded list from scratch.
    pub(crate) fn refresh_inverse(&mut self) -> Result<()> {
        if self.free.is_empty() {
            self.inverse = None;
            return Ok(());
        }
        let q = self.free_block();
        let border: Vec<f64> = self.free.iter().map(|&i| self.border_of(i)).collect();
        self.inverse = Some(bordered_inverse(&q, &border)?);
        Ok(())
    }

    pub(crate) fn ensure_inverse(&mut self) -> Result<()> {
        let stale = match &self.inverse {
            Some(inv) => inv.order != self.free.len(),
            None => true,
        };
        if stale {
            self.refresh_inverse()?;
        }
        Ok(())
    }

    pub(crate) fn recompute_gradients(&mut self) {
        self.grad = self.fresh_gradients();
    }
}

impl<T: Task> KernelExpansion for DualState<T> {
    fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    fn len(&self) -> usize {
        self.samples.len()
    }

    fn features(&self, j: usize) -> &[f64] {
        &self.samples[j].features
    }

    fn coefficient(&self, j: usize) -> f64 {
        T::border(self.samples[j].target) * self.beta[j]
    }

    fn bias(&self) -> f64 {
        self.bias
    }
}

fn retain_mask<V>(v: &mut Vec<V>, gone: &[bool]) {
    let mut k = 0;
    v.retain(|_| {
        let keep = !gone[k];
        k += 1;
        keep
    });
}

fn classify_regions_svr_impl(theta: &[f64], outputs: &[f64], c: f64, eps: f64) -> Result<Vec<Region>> {
    validate::classify_regions_svr(theta, outputs, c, eps)
}

impl DualState<Classification> {
    pub fn alpha(&self) -> &[f64] {
        &self.beta
    }

    /// Cached margins `G_i`.
    pub fn margins(&self) -> &[f64] {
        &self.grad
    }

    /// Margins `G_i = Σ_j Q_ij α_j + y_i b − 1` computed from scratch.
    pub fn compute_margins(&self) -> Vec<f64> {
        self.fresh_gradients()
    }

    pub fn predict_label(&self, x: &[f64]) -> Result<f64> {
        Ok(if self.decision_value(x)? >= 0.0 { 1.0 } else { -1.0 })
    }
}

impl DualState<Regression> {
    pub fn theta(&self) -> &[f64] {
        &self.beta
    }

    /// Cached output errors `𝔉_i`.
    pub fn outputs(&self) -> &[f64] {
        &self.grad
    }

    /// Output errors `𝔉_i = Σ_j 𝒬_ij θ_j + b − y_i` computed from scratch.
    pub fn compute_outputs(&self) -> Vec<f64> {
        self.fresh_gradients()
    }
}
