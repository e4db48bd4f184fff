//! Kernel evaluation, ridge-augmented Q matrices and decision values.

use std::sync::atomic::{AtomicBool, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

static PARALLEL: AtomicBool = AtomicBool::new(false);

/// Enable parallel evaluation of kernel rows and columns. Results do not
/// depend on this setting.
pub fn set_parallel(enabled: bool) {
    PARALLEL.store(enabled, Ordering::Relaxed);
}

pub fn parallel_enabled() -> bool {
    PARALLEL.load(Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Linear,
    Polynomial,
    Rbf,
}

/// Kernel family, its parameters, and the ridge added to the Gram diagonal.
///
/// `degree` and `offset` are read only by the polynomial family, `sigma`
/// only by the RBF family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub degree: u32,
    pub offset: f64,
    pub sigma: f64,
    pub ridge: f64,
}

impl KernelSpec {
    pub fn linear(ridge: f64) -> Self {
        Self {
            family: KernelFamily::Linear,
            degree: 1,
            offset: 1.0,
            sigma: 1.0,
            ridge,
        }
    }

    pub fn polynomial(degree: u32, offset: f64, ridge: f64) -> Self {
        Self {
            family: KernelFamily::Polynomial,
            degree,
            offset,
            sigma: 1.0,
            ridge,
        }
    }

    pub fn rbf(sigma: f64, ridge: f64) -> Self {
        Self {
            family: KernelFamily::Rbf,
            degree: 1,
            offset: 1.0,
            sigma,
            ridge,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ridge >= 0.0) || !self.ridge.is_finite() {
            return Err(Error::InvalidKernel(format!(
                "ridge must be >= 0, got {}",
                self.ridge
            )));
        }
        match self.family {
            KernelFamily::Rbf if !(self.sigma > 0.0) || !self.sigma.is_finite() => Err(
                Error::InvalidKernel(format!("sigma must be > 0, got {}", self.sigma)),
            ),
            KernelFamily::Polynomial if self.degree < 1 => Err(Error::InvalidKernel(
                "polynomial degree must be >= 1".into(),
            )),
            KernelFamily::Polynomial if !self.offset.is_finite() => {
                Err(Error::InvalidKernel("offset must be finite".into()))
            }
            _ => Ok(()),
        }
    }

    /// Kernel value without the ridge. Callers guarantee equal lengths.
    #[inline]
    pub(crate) fn eval_unchecked(&self, a: &[f64], b: &[f64]) -> f64 {
        match self.family {
            KernelFamily::Linear => dot(a, b),
            KernelFamily::Polynomial => (dot(a, b) + self.offset).powi(self.degree as i32),
            KernelFamily::Rbf => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-d2 / (2.0 * self.sigma * self.sigma)).exp()
            }
        }
    }

    /// `K(x_i, x)` for every row `x_i` of `rows`.
    pub(crate) fn column<R: AsRef<[f64]> + Sync>(&self, rows: &[R], x: &[f64]) -> Vec<f64> {
        if parallel_enabled() && rows.len() >= 256 {
            rows.par_iter()
                .map(|r| self.eval_unchecked(r.as_ref(), x))
                .collect()
        } else {
            rows.iter()
                .map(|r| self.eval_unchecked(r.as_ref(), x))
                .collect()
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Kernel value `K(a, b)`; the ridge is not applied here.
pub fn kernel_eval(a: &[f64], b: &[f64], spec: &KernelSpec) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(spec.eval_unchecked(a, b))
}

fn check_dims(samples: &[Vec<f64>]) -> Result<()> {
    if let Some(first) = samples.first() {
        for s in samples {
            if s.len() != first.len() {
                return Err(Error::DimensionMismatch {
                    expected: first.len(),
                    got: s.len(),
                });
            }
        }
    }
    Ok(())
}

fn gram_with(
    samples: &[Vec<f64>],
    spec: &KernelSpec,
    scale: impl Fn(usize, usize) -> f64 + Sync,
) -> Result<DenseMatrix> {
    spec.validate()?;
    check_dims(samples)?;
    let n = samples.len();
    let row = |i: usize| -> Vec<f64> {
        (0..n)
            .map(|j| {
                let k = spec.eval_unchecked(&samples[i], &samples[j]);
                let ridge = if i == j { spec.ridge } else { 0.0 };
                scale(i, j) * (k + ridge)
            })
            .collect()
    };
    let rows: Vec<Vec<f64>> = if parallel_enabled() {
        (0..n).into_par_iter().map(row).collect()
    } else {
        (0..n).map(row).collect()
    };
    let mut m = DenseMatrix::from_rows(&rows);
    if n == 0 {
        m = DenseMatrix::zeros(0, 0);
    }
    Ok(m)
}

/// `Q[i,j] = y_i y_j (K(x_i, x_j) + ρ[i=j])`.
pub fn q_matrix(samples: &[Vec<f64>], labels: &[f64], spec: &KernelSpec) -> Result<DenseMatrix> {
    if samples.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: samples.len(),
            got: labels.len(),
        });
    }
    if let Some(&bad) = labels.iter().find(|&&y| y != 1.0 && y != -1.0) {
        return Err(Error::InvalidLabel(bad));
    }
    gram_with(samples, spec, |i, j| labels[i] * labels[j])
}

/// `K + ρI`, the regression counterpart of [`q_matrix`].
pub fn q_matrix_svr(samples: &[Vec<f64>], spec: &KernelSpec) -> Result<DenseMatrix> {
    gram_with(samples, spec, |_, _| 1.0)
}

/// A trained kernel expansion `f(x) = Σ_j c_j K(x, x_j) + b`.
pub trait KernelExpansion {
    fn kernel(&self) -> &KernelSpec;
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn features(&self, j: usize) -> &[f64];
    /// Signed expansion coefficient: `y_j α_j` or `θ_j`.
    fn coefficient(&self, j: usize) -> f64;
    fn bias(&self) -> f64;
    fn dimension(&self) -> Option<usize> {
        (!self.is_empty()).then(|| self.features(0).len())
    }
}

/// Test-point decision value; the ridge never enters here.
pub fn decision_value<E: KernelExpansion + ?Sized>(x: &[f64], model: &E) -> Result<f64> {
    if let Some(d) = model.dimension() {
        if d != x.len() {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: x.len(),
            });
        }
    }
    let spec = model.kernel();
    let mut f = model.bias();
    for j in 0..model.len() {
        let c = model.coefficient(j);
        if c != 0.0 {
            f += c * spec.eval_unchecked(x, model.features(j));
        }
    }
    Ok(f)
}

/// Decision value of training index `i`, including the ridge self-term
/// `ρ c_i` that the diagonal of Q contributes.
pub fn training_decision_value<E: KernelExpansion + ?Sized>(i: usize, model: &E) -> Result<f64> {
    if i >= model.len() {
        return Err(Error::IndexOutOfRange {
            index: i,
            order: model.len(),
        });
    }
    let f = decision_value(model.features(i), model)?;
    Ok(f + model.kernel().ridge * model.coefficient(i))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_values() {
        let rbf = KernelSpec::rbf(1.0, 0.0);
        assert_eq!(kernel_eval(&[0.3, -1.0], &[0.3, -1.0], &rbf).unwrap(), 1.0);
        let v = kernel_eval(&[0.0, 0.0], &[1.0, 1.0], &rbf).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-15);
        assert!((v - 0.367879).abs() < 1e-6);

        let poly = KernelSpec::polynomial(2, 1.0, 0.0);
        assert_eq!(kernel_eval(&[1.0, 1.0], &[1.0, 1.0], &poly).unwrap(), 9.0);

        let lin = KernelSpec::linear(0.5);
        assert_eq!(kernel_eval(&[1.0, 2.0], &[3.0, 4.0], &lin).unwrap(), 11.0);
    }

    #[test]
    fn kernel_dimension_mismatch() {
        let r = kernel_eval(&[1.0], &[1.0, 2.0], &KernelSpec::linear(0.0));
        assert!(matches!(r, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn invalid_specs() {
        assert!(KernelSpec::rbf(0.0, 0.5).validate().is_err());
        assert!(KernelSpec::polynomial(0, 1.0, 0.5).validate().is_err());
        assert!(KernelSpec::linear(-0.1).validate().is_err());
        assert!(KernelSpec::rbf(2.0, 0.0).validate().is_ok());
    }

    #[test]
    fn q_matrix_examples() {
        // features chosen so that K = [[1, 0.5], [0.5, 1]] under the linear kernel
        let c = 0.75f64.sqrt();
        let xs = vec![vec![1.0, 0.0], vec![0.5, c]];
        let q = q_matrix(&xs, &[1.0, -1.0], &KernelSpec::linear(0.5)).unwrap();
        let want = DenseMatrix::from_rows(&[vec![1.5, -0.5], vec![-0.5, 1.5]]);
        assert!(q.max_abs_diff(&want) < 1e-15);

        let spec = KernelSpec::rbf(1.3, 0.0);
        let xs = vec![vec![0.1], vec![0.7], vec![-1.2]];
        let q = q_matrix(&xs, &[1.0, 1.0, 1.0], &spec).unwrap();
        let k = q_matrix_svr(&xs, &spec).unwrap();
        assert_eq!(q, k);

        let q = q_matrix(&[vec![2.0]], &[-1.0], &KernelSpec::linear(0.25)).unwrap();
        assert_eq!(q.as_slice(), &[4.25]);

        assert!(matches!(
            q_matrix(&xs, &[1.0, 0.0, -1.0], &spec),
            Err(Error::InvalidLabel(_))
        ));
    }

    #[test]
    fn q_svr_examples() {
        let xs = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let q = q_matrix_svr(&xs, &KernelSpec::linear(0.5)).unwrap();
        assert_eq!(q.as_slice(), &[1.5, 0.0, 0.0, 1.5]);

        let xs = vec![vec![0.0], vec![1.0], vec![3.0]];
        let q = q_matrix_svr(&xs, &KernelSpec::rbf(1.0, 0.25)).unwrap();
        for i in 0..3 {
            assert_eq!(q[(i, i)], 1.25);
        }
        assert!(q.is_symmetric(0.0));
    }

    #[test]
    fn parallel_assembly_matches_sequential() {
        let xs: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64 * 0.1, (i as f64).sin()]).collect();
        let spec = KernelSpec::rbf(0.8, 0.5);
        let seq = q_matrix_svr(&xs, &spec).unwrap();
        set_parallel(true);
        let par = q_matrix_svr(&xs, &spec).unwrap();
        set_parallel(false);
        assert_eq!(seq, par);
    }
}
