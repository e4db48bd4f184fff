use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Sample, TaskKind};

/// Per-column z-score statistics fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Regression only.
    pub label_mean: Option<f64>,
    pub label_std: Option<f64>,
}

/// Population mean and standard deviation of every feature, and of the
/// targets for regression.
pub fn fit_standardizer(samples: &[Sample], task: TaskKind) -> Result<StandardizationStats> {
    StandardizationStats::fit(samples, task)
}

fn mean_std(values: impl Iterator<Item = f64> + Clone, n: f64) -> (f64, f64) {
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl StandardizationStats {
    pub fn fit(samples: &[Sample], task: TaskKind) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::TooFewSamples { needed: 2, got: samples.len() });
        }
        let dim = samples[0].features.len();
        if let Some(s) = samples.iter().find(|s| s.features.len() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, got: s.features.len() });
        }
        let n = samples.len() as f64;
        let mut mean = Vec::with_capacity(dim);
        let mut std = Vec::with_capacity(dim);
        for j in 0..dim {
            let (m, s) = mean_std(samples.iter().map(|x| x.features[j]), n);
            if !(s > 0.0) {
                return Err(Error::ConstantColumn(j));
            }
            mean.push(m);
            std.push(s);
        }
        let (label_mean, label_std) = match task {
            TaskKind::Classification => (None, None),
            TaskKind::Regression => {
                let (m, s) = mean_std(samples.iter().map(|x| x.target), n);
                if !(s > 0.0) {
                    return Err(Error::ConstantColumn(dim));
                }
                (Some(m), Some(s))
            }
        };
        Ok(Self { mean, std, label_mean, label_std })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
            label_mean: None,
            label_std: None,
        }
    }

    pub fn dimension(&self) -> usize {
        self.mean.len()
    }

    pub fn transform_features(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.mean.len() {
            return Err(Error::DimensionMismatch { expected: self.mean.len(), got: x.len() });
        }
        Ok(x.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| (v - m) / s).collect())
    }

    pub fn transform_label(&self, y: f64) -> f64 {
        match (self.label_mean, self.label_std) {
            (Some(m), Some(s)) => (y - m) / s,
            _ => y,
        }
    }

    pub fn restore_label(&self, y: f64) -> f64 {
        match (self.label_mean, self.label_std) {
            (Some(m), Some(s)) => y * s + m,
            _ => y,
        }
    }

    /// Transformed copies of `samples`; ids are kept.
    pub fn apply(&self, samples: &[Sample]) -> Result<Vec<Sample>> {
        samples
            .iter()
            .map(|s| Ok(Sample { id: s.id, features: self.transform_features(&s.features)?, target: self.transform_label(s.target) }))
            .collect()
    }
}
