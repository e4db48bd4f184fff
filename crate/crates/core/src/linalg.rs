//! Dense matrices, bordered (saddle-point) inverses and block inverse
//! updates.
//!
//! The equilibrium solves of the incremental engines need the inverse of
//!
//! ```text
//! [ 0   vᵀ ]
//! [ v   Q_S ]
//! ```
//!
//! where `v` is the label vector (classification) or all ones (regression).
//! The inverse is assembled once from the Schur complement of `Q_S` and is
//! then maintained through block grow/shrink updates as samples enter and
//! leave the unbounded set.

use std::fmt;
use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Absolute pivot tolerance used by every factorization in this module.
pub const PIVOT_TOLERANCE: f64 = 1e-12;

/// Row-major dense real matrix.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from nested rows. Panics on ragged input.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Self {
            rows: r,
            cols: c,
            data,
        }
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, v) in values.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                got: other.rows,
            });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let other_row = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, b) in out_row.iter_mut().zip(other_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if self.cols != x.len() {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                got: x.len(),
            });
        }
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// Sub-matrix with the given row and column index lists, in list order.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Self {
        Self::from_fn(rows.len(), cols.len(), |i, j| self[(rows[i], cols[j])])
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        if !self.is_square() {
            return false;
        }
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let a = self[(i, j)];
                let b = self[(j, i)];
                if (a - b).abs() > tol * a.abs().max(1.0) {
                    return false;
                }
            }
        }
        true
    }

    /// Replaces the matrix by `(M + Mᵀ) / 2`.
    pub fn symmetrize(&mut self) {
        debug_assert!(self.is_square());
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let avg = 0.5 * (self[(i, j)] + self[(j, i)]);
                self[(i, j)] = avg;
                self[(j, i)] = avg;
            }
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// `‖self − other‖_F / ‖other‖_F`.
    pub fn relative_frobenius_error(&self, other: &Self) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let diff: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let base = other.frobenius_norm();
        if base == 0.0 {
            diff
        } else {
            diff / base
        }
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

fn require_square(m: &DenseMatrix) -> Result<()> {
    if m.is_square() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected: m.rows,
            got: m.cols,
        })
    }
}

/// Inverse of a symmetric positive definite matrix through its Cholesky
/// factor.
pub fn invert_spd(m: &DenseMatrix) -> Result<DenseMatrix> {
    require_square(m)?;
    let n = m.rows;
    // lower-triangular factor, row-major
    let mut l = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= PIVOT_TOLERANCE || !d.is_finite() {
            return Err(Error::NotPositiveDefinite { row: j, pivot: d });
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    // L⁻¹ by forward substitution, column by column
    let mut linv = DenseMatrix::zeros(n, n);
    for c in 0..n {
        linv[(c, c)] = 1.0 / l[(c, c)];
        for i in (c + 1)..n {
            let mut s = 0.0;
            for k in c..i {
                s -= l[(i, k)] * linv[(k, c)];
            }
            linv[(i, c)] = s / l[(i, i)];
        }
    }
    // M⁻¹ = L⁻ᵀ L⁻¹
    let mut inv = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = 0.0;
            for k in i..n {
                s += linv[(k, i)] * linv[(k, j)];
            }
            inv[(i, j)] = s;
            inv[(j, i)] = s;
        }
    }
    Ok(inv)
}

/// Gauss-Jordan inverse with partial pivoting. `None` when a pivot falls
/// below [`PIVOT_TOLERANCE`].
fn invert_general(m: &DenseMatrix) -> Option<DenseMatrix> {
    let n = m.rows;
    let mut a = m.clone();
    let mut inv = DenseMatrix::identity(n);
    for col in 0..n {
        let (piv, best) = (col..n)
            .map(|r| (r, a[(r, col)].abs()))
            .fold((col, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if best <= PIVOT_TOLERANCE || !best.is_finite() {
            return None;
        }
        if piv != col {
            for j in 0..n {
                a.data.swap(piv * n + j, col * n + j);
                inv.data.swap(piv * n + j, col * n + j);
            }
        }
        let p = a[(col, col)];
        for j in 0..n {
            a[(col, j)] /= p;
            inv[(col, j)] /= p;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let factor = a[(r, col)];
            if factor == 0.0 {
                continue;
            }
            for j in 0..n {
                a.data[r * n + j] -= factor * a.data[col * n + j];
                inv.data[r * n + j] -= factor * inv.data[col * n + j];
            }
        }
    }
    Some(inv)
}

/// Inverse of the bordered matrix `[[0, vᵀ], [v, Q_S]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BorderedInverse {
    /// Top-left entry, `−(vᵀ Q_S⁻¹ v)⁻¹`.
    pub z: f64,
    /// Order of `Q_S`.
    pub order: usize,
    /// The `(order+1) × (order+1)` inverse; row/column 0 belong to the bias.
    pub inv: DenseMatrix,
}

impl BorderedInverse {
    /// Wraps an already computed bordered inverse.
    pub fn from_matrix(inv: DenseMatrix) -> Self {
        debug_assert!(inv.is_square() && inv.rows() >= 1);
        Self {
            z: inv[(0, 0)],
            order: inv.rows() - 1,
            inv,
        }
    }

    /// `inv · rhs`, where `rhs[0]` is the border row.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        self.inv
            .matvec(rhs)
            .expect("rhs length must equal order + 1")
    }
}

/// Inverse of `[[0, borderᵀ], [border, Q_S]]` assembled from `Q_S⁻¹` and
/// the scalar `z = −(borderᵀ Q_S⁻¹ border)⁻¹`.
pub fn bordered_inverse(q_s: &DenseMatrix, border: &[f64]) -> Result<BorderedInverse> {
    require_square(q_s)?;
    let n = q_s.rows;
    if border.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: border.len(),
        });
    }
    let q_inv = invert_spd(q_s)?;
    let w = q_inv.matvec(border)?;
    let quad: f64 = border.iter().zip(&w).map(|(a, b)| a * b).sum();
    if quad.abs() <= PIVOT_TOLERANCE {
        return Err(Error::SingularBorder { value: quad });
    }
    let z = -1.0 / quad;
    let mut inv = DenseMatrix::zeros(n + 1, n + 1);
    inv[(0, 0)] = z;
    for i in 0..n {
        inv[(0, i + 1)] = -z * w[i];
        inv[(i + 1, 0)] = -z * w[i];
        for j in 0..n {
            inv[(i + 1, j + 1)] = z * w[i] * w[j] + q_inv[(i, j)];
        }
    }
    inv.symmetrize();
    Ok(BorderedInverse {
        z,
        order: n,
        inv,
    })
}

/// Inverse of `[[P, X], [Xᵀ, N]]` given `P⁻¹`, the cross block `X`
/// (old × added) and the new diagonal block `N`.
///
/// With `H = −P⁻¹X` and `V = N + XᵀH` the result is
/// `[[P⁻¹ + H V⁻¹ Hᵀ, H V⁻¹], [V⁻¹ Hᵀ, V⁻¹]]`.
pub fn inverse_grow(
    prev_inv: &DenseMatrix,
    cross: &DenseMatrix,
    new_block: &DenseMatrix,
) -> Result<DenseMatrix> {
    require_square(prev_inv)?;
    require_square(new_block)?;
    let m = prev_inv.rows;
    let k = new_block.rows;
    if cross.rows != m || cross.cols != k {
        return Err(Error::DimensionMismatch {
            expected: m * k,
            got: cross.rows * cross.cols,
        });
    }
    if k == 0 {
        return Ok(prev_inv.clone());
    }
    // rows of Hᵀ and Xᵀ are contiguous, which keeps every inner loop a
    // full-length dot product or axpy
    let xt = cross.transpose();
    let mut ht = DenseMatrix::zeros(k, m);
    for c in 0..k {
        let x = xt.row(c);
        for i in 0..m {
            ht.data[c * m + i] = -dot(prev_inv.row(i), x);
        }
    }
    // V = N − Xᵀ P⁻¹ X = N + Xᵀ H
    let mut v = DenseMatrix::from_fn(k, k, |a, b| new_block[(a, b)] + dot(xt.row(a), ht.row(b)));
    v.symmetrize();
    let v_inv = invert_general(&v).ok_or(Error::SingularSchurBlock)?;
    // (H V⁻¹)ᵀ = V⁻ᵀ Hᵀ
    let mut hvt = DenseMatrix::zeros(k, m);
    for a in 0..k {
        let row = &mut hvt.data[a * m..(a + 1) * m];
        for b in 0..k {
            axpy(row, v_inv[(b, a)], ht.row(b));
        }
    }

    let n = m + k;
    let mut out = DenseMatrix::zeros(n, n);
    for i in 0..m {
        out.data[i * n..i * n + m].copy_from_slice(prev_inv.row(i));
    }
    rank_k_upper(&mut out, n, &hvt, &ht, 1.0);
    for i in 0..m {
        for c in 0..k {
            out.data[i * n + m + c] = hvt.data[c * m + i];
        }
    }
    for i in 0..k {
        for j in 0..k {
            out.data[(m + i) * n + m + j] = v_inv[(i, j)];
        }
    }
    mirror_upper(&mut out);
    Ok(out)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// `out[i][j] += sign · Σ_c u[c][i] w[c][j]` on the upper triangle of the
/// leading `u.cols` block.
fn rank_k_upper(out: &mut DenseMatrix, stride: usize, u: &DenseMatrix, w: &DenseMatrix, sign: f64) {
    let m = u.cols;
    for c in 0..u.rows {
        let (uc, wc) = (u.row(c), w.row(c));
        for i in 0..m {
            let a = sign * uc[i];
            if a != 0.0 {
                axpy(&mut out.data[i * stride + i..i * stride + m], a, &wc[i..]);
            }
        }
    }
}

fn mirror_upper(m: &mut DenseMatrix) {
    let n = m.rows;
    for i in 0..n {
        for j in 0..i {
            m.data[i * n + j] = m.data[j * n + i];
        }
    }
}

fn removal_split(order: usize, removed: &[usize]) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut flag = vec![false; order];
    for &r in removed {
        if r >= order {
            return Err(Error::IndexOutOfRange { index: r, order });
        }
        flag[r] = true;
    }
    let keep = (0..order).filter(|&i| !flag[i]).collect();
    let gone = (0..order).filter(|&i| flag[i]).collect();
    Ok((keep, gone))
}

/// Inverse of the matrix with the `removed` rows and columns deleted,
/// computed from the current inverse as `Λ − h v⁻¹ hᵀ`. Surviving indices
/// keep their relative order.
pub fn inverse_shrink(prev_inv: &DenseMatrix, removed: &[usize]) -> Result<DenseMatrix> {
    require_square(prev_inv)?;
    let (keep, gone) = removal_split(prev_inv.rows, removed)?;
    if gone.is_empty() {
        return Ok(prev_inv.clone());
    }
    let corner = prev_inv.select(&gone, &gone);
    let corner_inv = invert_general(&corner).ok_or(Error::SingularCornerBlock)?;
    let n = keep.len();
    let r = gone.len();
    let ht = prev_inv.select(&gone, &keep);
    // (h v⁻¹)ᵀ = v⁻ᵀ hᵀ
    let mut hvt = DenseMatrix::zeros(r, n);
    for a in 0..r {
        let row = &mut hvt.data[a * n..(a + 1) * n];
        for b in 0..r {
            axpy(row, corner_inv[(b, a)], ht.row(b));
        }
    }
    let mut out = prev_inv.select(&keep, &keep);
    rank_k_upper(&mut out, n, &hvt, &ht, -1.0);
    mirror_upper(&mut out);
    Ok(out)
}

/// Combined update: drop `removed` indices, then append the new block.
/// `cross` has one row per index of the *previous* matrix; rows of removed
/// indices are ignored. Survivors come first (stable order), added last.
pub fn inverse_grow_shrink(
    prev_inv: &DenseMatrix,
    cross: &DenseMatrix,
    new_block: &DenseMatrix,
    removed: &[usize],
) -> Result<DenseMatrix> {
    require_square(prev_inv)?;
    if cross.rows != prev_inv.rows {
        return Err(Error::DimensionMismatch {
            expected: prev_inv.rows,
            got: cross.rows,
        });
    }
    let (keep, _) = removal_split(prev_inv.rows, removed)?;
    let shrunk = inverse_shrink(prev_inv, removed)?;
    let all_cols: Vec<usize> = (0..cross.cols).collect();
    let cross_kept = cross.select(&keep, &all_cols);
    inverse_grow(&shrunk, &cross_kept, new_block)
}
