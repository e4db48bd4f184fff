#![allow(dead_code)]

use ridgesv::linalg::DenseMatrix;
use rand::Rng;

/// Gauss-Jordan inversion with partial pivoting.
pub fn gauss_jordan_inverse(m: &DenseMatrix) -> Option<DenseMatrix> {
    let n = m.rows();
    let mut a: Vec<Vec<f64>> = (0..n).map(|i| m.row(i).to_vec()).collect();
    let mut inv: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for col in 0..n {
        let pivot = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let p = a[col][col];
        for j in 0..n {
            a[col][j] /= p;
            inv[col][j] /= p;
        }
        for r in 0..n {
            if r != col {
                let f = a[r][col];
                if f != 0.0 {
                    for j in 0..n {
                        a[r][j] -= f * a[col][j];
                        inv[r][j] -= f * inv[col][j];
                    }
                }
            }
        }
    }
    Some(DenseMatrix::from_rows(&inv))
}

/// `BᵀB/n + shift·I` with standard-uniform `B`.
pub fn random_spd(rng: &mut impl Rng, n: usize, shift: f64) -> DenseMatrix {
    let b = DenseMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let mut m = b.transpose().matmul(&b).unwrap();
    m = DenseMatrix::from_fn(n, n, |i, j| m[(i, j)] / n as f64 + if i == j { shift } else { 0.0 });
    m.symmetrize();
    m
}
