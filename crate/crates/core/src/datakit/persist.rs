use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::StandardizationStats;
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::model::{DualState, Hyperparams, Region, RegionCounts, Sample, SvmState, SvrState, TaskKind, ValidationReport};

pub const FORMAT_VERSION: u64 = 1;

/// On-disk layout of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u64,
    pub task: TaskKind,
    pub kernel: KernelSpec,
    pub hyper: Hyperparams,
    pub standardizer: Option<StandardizationStats>,
    pub samples: Vec<Sample>,
    pub multipliers: Vec<f64>,
    pub bias: f64,
    pub partition: Vec<Region>,
}

/// A model of either task.
#[derive(Debug, Clone)]
pub enum Model {
    Svm(SvmState),
    Svr(SvrState),
}

macro_rules! both {
    ($self:expr, $m:ident => $e:expr) => {
        match $self {
            Model::Svm($m) => $e,
            Model::Svr($m) => $e,
        }
    };
}

impl Model {
    pub fn task(&self) -> TaskKind {
        match self {
            Model::Svm(_) => TaskKind::Classification,
            Model::Svr(_) => TaskKind::Regression,
        }
    }

    pub fn kernel(&self) -> &KernelSpec {
        both!(self, m => m.kernel())
    }

    pub fn hyper(&self) -> &Hyperparams {
        both!(self, m => m.hyper())
    }

    pub fn len(&self) -> usize {
        both!(self, m => m.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn samples(&self) -> &[Sample] {
        both!(self, m => m.samples())
    }

    pub fn multipliers(&self) -> &[f64] {
        both!(self, m => m.multipliers())
    }

    pub fn bias(&self) -> f64 {
        both!(self, m => m.bias())
    }

    pub fn regions(&self) -> &[Region] {
        both!(self, m => m.regions())
    }

    pub fn counts(&self) -> RegionCounts {
        both!(self, m => m.counts())
    }

    pub fn decision_value(&self, x: &[f64]) -> Result<f64> {
        both!(self, m => m.decision_value(x))
    }

    pub fn decision_values<R: AsRef<[f64]> + Sync>(&self, xs: &[R]) -> Result<Vec<f64>> {
        both!(self, m => m.decision_values(xs))
    }

    pub fn validate(&self) -> ValidationReport {
        both!(self, m => m.validate())
    }
}

/// A model together with the statistics its inputs were standardized with.
#[derive(Debug, Clone)]
pub struct StoredModel {
    pub model: Model,
    pub standardizer: Option<StandardizationStats>,
}

fn parts<T: crate::model::Task>(s: &DualState<T>) -> (KernelSpec, Hyperparams, Vec<Sample>, Vec<f64>, f64, Vec<Region>) {
    (*s.kernel(), *s.hyper(), s.samples().to_vec(), s.multipliers().to_vec(), s.bias(), s.regions().to_vec())
}

impl ModelFile {
    pub fn from_stored(stored: &StoredModel) -> Self {
        let (kernel, hyper, samples, multipliers, bias, partition) = both!(&stored.model, m => parts(m));
        Self {
            format_version: FORMAT_VERSION,
            task: stored.model.task(),
            kernel,
            hyper,
            standardizer: stored.standardizer.clone(),
            samples,
            multipliers,
            bias,
            partition,
        }
    }

    pub fn into_stored(self) -> Result<StoredModel> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::SchemaVersionMismatch { found: self.format_version, expected: FORMAT_VERSION });
        }
        let regions = Some(self.partition);
        let model = match self.task {
            TaskKind::Classification => Model::Svm(SvmState::from_parts(
                self.kernel,
                self.hyper,
                self.samples,
                self.multipliers,
                self.bias,
                regions,
            )?),
            TaskKind::Regression => Model::Svr(SvrState::from_parts(
                self.kernel,
                self.hyper,
                self.samples,
                self.multipliers,
                self.bias,
                regions,
            )?),
        };
        Ok(StoredModel { model, standardizer: self.standardizer })
    }
}

/// Writes `stored` as JSON, atomically replacing `path`.
pub fn save_model(path: &Path, stored: &StoredModel) -> Result<()> {
    let file = ModelFile::from_stored(stored);
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    serde_json::to_writer_pretty(&mut tmp, &file).map_err(|e| Error::Io(e.to_string()))?;
    tmp.write_all(b"\n")?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error.to_string()))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<StoredModel> {
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::CorruptFile(e.to_string()))?;
    let version = value
        .get("format_version")
        .ok_or_else(|| Error::CorruptFile("missing format_version".into()))?
        .as_u64()
        .ok_or_else(|| Error::CorruptFile("format_version is not an unsigned integer".into()))?;
    if version != FORMAT_VERSION {
        return Err(Error::SchemaVersionMismatch { found: version, expected: FORMAT_VERSION });
    }
    let file: ModelFile = serde_json::from_value(value).map_err(|e| Error::CorruptFile(e.to_string()))?;
    file.into_stored()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{train_svm_batch, train_svr_batch};

    fn toy() -> SvmState {
        let data = vec![Sample::new(0, vec![1.0], 1.0), Sample::new(1, vec![-1.0], -1.0)];
        train_svm_batch(&data, &KernelSpec::linear(0.5), &Hyperparams::new(1.0, 0.0), &Default::default()).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let stored = StoredModel { model: Model::Svm(toy()), standardizer: Some(StandardizationStats::identity(1)) };
        save_model(&path, &stored).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(ModelFile::from_stored(&back), ModelFile::from_stored(&stored));
        for x in [-2.0, 0.1, 0.37] {
            assert_eq!(back.model.decision_value(&[x]).unwrap(), stored.model.decision_value(&[x]).unwrap());
        }
    }

    #[test]
    fn svr_round_trip_with_awkward_floats() {
        let data: Vec<Sample> = (0..9).map(|i| Sample::new(i, vec![i as f64 / 3.0], (i as f64 / 7.0).sin())).collect();
        let s = train_svr_batch(&data, &KernelSpec::rbf(0.7, 0.3), &Hyperparams::new(1.0, 0.01), &Default::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.json");
        let stored = StoredModel { model: Model::Svr(s), standardizer: None };
        save_model(&path, &stored).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(back.model.multipliers(), stored.model.multipliers());
        assert_eq!(back.model.bias().to_bits(), stored.model.bias().to_bits());
        assert_eq!(back.model.regions(), stored.model.regions());
    }

    #[test]
    fn version_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_model(&path, &StoredModel { model: Model::Svm(toy()), standardizer: None }).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, text.replace("\"format_version\": 1", "\"format_version\": 7")).unwrap();
        assert!(matches!(load_model(&path), Err(Error::SchemaVersionMismatch { found: 7, expected: 1 })));
        std::fs::write(&path, &text[..text.len() / 2]).unwrap();
        assert!(matches!(load_model(&path), Err(Error::CorruptFile(_))));
    }

    #[test]
    fn file_fields() {
        let file = ModelFile::from_stored(&StoredModel { model: Model::Svm(toy()), standardizer: None });
        let v = serde_json::to_value(&file).unwrap();
        for key in ["format_version", "task", "kernel", "hyper", "standardizer", "samples", "multipliers", "bias", "partition"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert!(v["hyper"].get("C").is_some());
        assert!(v["kernel"].get("sigma").is_some());
        assert_eq!(v["task"], "classification");
    }
}
