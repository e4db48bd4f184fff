//! Round-by-round timing of the update engines against full retraining.

use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::baseline_path::{path_update, PathConfig};
use crate::datakit::{Model, RoundSchedule};
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::model::{DualState, Hyperparams, Sample, Task, TaskKind, UpdateBatch};
use crate::online_svm::{update_multi_svm, UpdateConfig};
use crate::online_svr::update_multi_svr;
use crate::solver::{train_batch, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Proposed,
    Baseline,
    Retrain,
}

impl Arm {
    pub const ALL: [Arm; 3] = [Arm::Proposed, Arm::Baseline, Arm::Retrain];

    pub fn name(self) -> &'static str {
        match self {
            Arm::Proposed => "proposed",
            Arm::Baseline => "baseline",
            Arm::Retrain => "retrain",
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Arm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proposed" => Ok(Arm::Proposed),
            "baseline" => Ok(Arm::Baseline),
            "retrain" => Ok(Arm::Retrain),
            _ => Err(Error::InvalidHyperparams(format!("unknown arm {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EngineConfig {
    pub update: UpdateConfig,
    pub path: PathConfig,
    pub solver: SolverConfig,
}

/// Applies one batch to `model` with the given arm. Retraining solves from
/// scratch on the post-batch sample set.
pub fn apply_arm(model: &mut Model, batch: &UpdateBatch, arm: Arm, cfg: &EngineConfig) -> Result<()> {
    match (model, arm) {
        (Model::Svm(m), Arm::Proposed) => update_multi_svm(m, batch, &cfg.update).map(|_| ()),
        (Model::Svr(m), Arm::Proposed) => update_multi_svr(m, batch, &cfg.update).map(|_| ()),
        (Model::Svm(m), Arm::Baseline) => path_update(m, batch, &cfg.path).map(|_| ()),
        (Model::Svr(m), Arm::Baseline) => path_update(m, batch, &cfg.path).map(|_| ()),
        (Model::Svm(m), Arm::Retrain) => retrain(m, batch, &cfg.solver),
        (Model::Svr(m), Arm::Retrain) => retrain(m, batch, &cfg.solver),
    }
}

fn retrain<T: Task>(m: &mut DualState<T>, batch: &UpdateBatch, solver: &SolverConfig) -> Result<()> {
    for id in &batch.remove {
        if m.position(*id).is_none() {
            return Err(Error::UnknownId(*id));
        }
    }
    let mut samples: Vec<Sample> = m.samples().iter().filter(|s| !batch.remove.contains(&s.id)).cloned().collect();
    samples.extend(batch.add.iter().cloned());
    *m = train_batch(&samples, m.kernel(), m.hyper(), solver)?;
    Ok(())
}

/// Accuracy in percent for classification, mean squared error for
/// regression.
pub fn evaluate(model: &Model, test: &[Sample]) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::EmptyData("test set".into()));
    }
    let xs: Vec<&[f64]> = test.iter().map(|s| s.features.as_slice()).collect();
    let f = model.decision_values(&xs)?;
    let n = test.len() as f64;
    Ok(match model.task() {
        TaskKind::Classification => {
            let hits = test.iter().zip(&f).filter(|(s, f)| (if **f >= 0.0 { 1.0 } else { -1.0 }) == s.target).count();
            100.0 * hits as f64 / n
        }
        TaskKind::Regression => test.iter().zip(&f).map(|(s, f)| (f - s.target).powi(2)).sum::<f64>() / n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub arm: Arm,
    /// Model size after the round.
    pub samples: usize,
    pub wall_seconds: f64,
    pub cumulative_seconds: f64,
    pub metric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchMeta {
    pub dataset: String,
    pub task: TaskKind,
    pub kernel: KernelSpec,
    pub hyper: Hyperparams,
    pub split_seed: u64,
    pub schedule: RoundSchedule,
    pub parallel: bool,
    pub initial_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parity {
    pub tolerance: f64,
    /// Largest prediction gap between any two arms after any round.
    pub max_gap: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub meta: BenchMeta,
    pub arms: Vec<Arm>,
    pub records: Vec<RoundRecord>,
    pub parity: Parity,
    pub complete: bool,
    pub failure: Option<String>,
}

pub const PARITY_TOLERANCE: f64 = 1e-3;

/// Runs every batch through every arm, starting each arm from `initial`.
/// Within a round the arms run one after another; predictions on `test`
/// are compared across arms after every round. An arm failure stops the
/// run and marks the report incomplete.
pub fn run_bench(
    initial: &Model,
    batches: &[UpdateBatch],
    test: &[Sample],
    arms: &[Arm],
    cfg: &EngineConfig,
    meta: BenchMeta,
) -> BenchReport {
    let mut models: Vec<Model> = arms.iter().map(|_| initial.clone()).collect();
    let mut cumulative = vec![0.0; arms.len()];
    let mut report = BenchReport {
        meta,
        arms: arms.to_vec(),
        records: Vec::new(),
        parity: Parity { tolerance: PARITY_TOLERANCE, max_gap: 0.0, passed: true },
        complete: true,
        failure: None,
    };
    let xs: Vec<&[f64]> = test.iter().map(|s| s.features.as_slice()).collect();
    for (round, batch) in batches.iter().enumerate() {
        let mut predictions = Vec::with_capacity(arms.len());
        for (k, &arm) in arms.iter().enumerate() {
            let start = Instant::now();
            let outcome = apply_arm(&mut models[k], batch, arm, cfg);
            let wall = start.elapsed().as_secs_f64();
            let scored = outcome.and_then(|_| {
                let metric = if test.is_empty() { f64::NAN } else { evaluate(&models[k], test)? };
                Ok((metric, models[k].decision_values(&xs)?))
            });
            let (metric, f) = match scored {
                Ok(v) => v,
                Err(e) => {
                    report.complete = false;
                    report.failure = Some(format!("round {} arm {arm}: {e}", round + 1));
                    report.parity.passed = false;
                    return report;
                }
            };
            cumulative[k] += wall;
            report.records.push(RoundRecord {
                round: round + 1,
                arm,
                samples: models[k].len(),
                wall_seconds: wall,
                cumulative_seconds: cumulative[k],
                metric,
            });
            predictions.push(f);
        }
        for a in 0..predictions.len() {
            for b in a + 1..predictions.len() {
                let gap = predictions[a].iter().zip(&predictions[b]).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
                report.parity.max_gap = report.parity.max_gap.max(gap);
            }
        }
    }
    report.parity.passed = report.parity.max_gap <= report.parity.tolerance;
    report
}

impl BenchReport {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.records {
            w.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
    }

    /// Rows are rounds, columns are arms; cells hold log10 of cumulative
    /// seconds.
    pub fn table(&self) -> String {
        let label = |a: Arm| match a {
            Arm::Proposed => "Proposed",
            Arm::Baseline => "Baseline",
            Arm::Retrain => "Nonincremental",
        };
        let mut out = String::new();
        let m = &self.meta;
        let _ = writeln!(
            out,
            "dataset {} ({}), kernel {:?}, rho {}, C {}, eps {}",
            m.dataset, m.task, m.kernel.family, m.kernel.ridge, m.hyper.c, m.hyper.epsilon
        );
        let _ = writeln!(
            out,
            "schedule {} rounds of +{}/-{}, seed {}, initial {} samples",
            m.schedule.rounds, m.schedule.add_per_round, m.schedule.remove_per_round, m.schedule.seed, m.initial_samples
        );
        let _ = write!(out, "{:>10}", "#Samples");
        for &a in &self.arms {
            let _ = write!(out, " {:>15}", label(a));
        }
        out.push('\n');
        let rounds = self.records.iter().map(|r| r.round).max().unwrap_or(0);
        for round in 1..=rounds {
            let row: Vec<&RoundRecord> = self.records.iter().filter(|r| r.round == round).collect();
            let size = row.first().map_or(0, |r| r.samples);
            let _ = write!(out, "{size:>10}");
            for &a in &self.arms {
                match row.iter().find(|r| r.arm == a) {
                    Some(r) => {
                        let _ = write!(out, " {:>15.3}", r.cumulative_seconds.max(1e-9).log10());
                    }
                    None => {
                        let _ = write!(out, " {:>15}", "-");
                    }
                }
            }
            out.push('\n');
        }
        let metric = if m.task == TaskKind::Classification { "accuracy %" } else { "MSE" };
        let _ = write!(out, "{:>10}", metric);
        for &a in &self.arms {
            let last = self.records.iter().filter(|r| r.arm == a).last();
            match last {
                Some(r) => {
                    let _ = write!(out, " {:>15.4}", r.metric);
                }
                None => {
                    let _ = write!(out, " {:>15}", "-");
                }
            }
        }
        out.push('\n');
        let _ = writeln!(
            out,
            "parity {} (max gap {:.3e}, tolerance {:.0e}){}",
            if self.parity.passed { "pass" } else { "FAIL" },
            self.parity.max_gap,
            self.parity.tolerance,
            if self.complete { String::new() } else { format!("; INCOMPLETE: {}", self.failure.as_deref().unwrap_or("")) }
        );
        out
    }

    /// Writes `bench.csv`, `bench.txt` and `bench.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("bench.csv"), self.to_csv()?)?;
        std::fs::write(dir.join("bench.txt"), self.table())?;
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))?;
        std::fs::write(dir.join("bench.json"), json)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datakit::synthetic::two_gaussians;
    use crate::datakit::schedule_rounds;
    use crate::model::SampleId;
    use crate::solver::train_svm_batch;

    fn setup() -> (Model, Vec<UpdateBatch>, Vec<Sample>, BenchMeta) {
        let data = two_gaussians(80, 1, 0);
        let spec = KernelSpec::rbf(1.0, 0.5);
        let hyper = Hyperparams::new(1.0, 0.0);
        let m = train_svm_batch(&data[..50], &spec, &hyper, &Default::default()).unwrap();
        let ids: Vec<SampleId> = m.ids().collect();
        let sched = RoundSchedule { rounds: 2, add_per_round: 6, remove_per_round: 2, seed: 4 };
        let batches = schedule_rounds(&data[50..70], &ids, &sched).unwrap();
        let meta = BenchMeta {
            dataset: "toy".into(),
            task: TaskKind::Classification,
            kernel: spec,
            hyper,
            split_seed: 0,
            schedule: sched,
            parallel: false,
            initial_samples: 50,
        };
        (Model::Svm(m), batches, data[70..].to_vec(), meta)
    }

    #[test]
    fn two_rounds_three_arms() {
        let (m, b, t, meta) = setup();
        let r = run_bench(&m, &b, &t, &Arm::ALL, &EngineConfig::default(), meta);
        assert!(r.complete);
        assert_eq!(r.records.len(), 6);
        assert!(r.parity.passed, "{}", r.parity.max_gap);
        for a in Arm::ALL {
            let c: Vec<f64> = r.records.iter().filter(|x| x.arm == a).map(|x| x.cumulative_seconds).collect();
            assert!(c.windows(2).all(|w| w[0] <= w[1]));
        }
        assert_eq!(r.to_csv().unwrap().lines().count(), 7);
        let table = r.table();
        assert!(table.contains("Nonincremental") && table.contains("parity pass"));
    }

    #[test]
    fn failure_marks_incomplete() {
        let (m, mut b, t, meta) = setup();
        b[1].remove.push(SampleId(9999));
        let r = run_bench(&m, &b, &t, &[Arm::Proposed], &EngineConfig::default(), meta);
        assert!(!r.complete);
        assert_eq!(r.records.len(), 1);
        assert!(r.table().contains("INCOMPLETE"));
    }

    #[test]
    fn evaluate_metrics() {
        let (m, _, t, _) = setup();
        let acc = evaluate(&m, &t).unwrap();
        assert!((0.0..=100.0).contains(&acc));
        assert!(evaluate(&m, &[]).is_err());
    }
}
