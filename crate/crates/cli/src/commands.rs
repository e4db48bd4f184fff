use std::path::Path;
use std::time::Instant;

use anyhow::{anyhow, Context};
use ridgesv::bench::{self, apply_arm, evaluate, Arm, BenchMeta, EngineConfig};
use ridgesv::datakit::synthetic::{noisy_sine, skin_segmentation, two_gaussians};
use ridgesv::datakit::{
    fit_standardizer, load_csv, load_model, save_model, schedule_rounds, split, subsample, DatasetSpec, LabelColumn,
    Model, RoundSchedule, SplitPlan, StandardizationStats, StoredModel,
};
use ridgesv::kernels::{self, KernelSpec};
use ridgesv::model::{Hyperparams, Sample, SampleId, TaskKind, UpdateBatch};
use ridgesv::solver::{train_svm_batch, train_svr_batch, SolverConfig};
use ridgesv::wec;

use crate::{BenchArgs, DataArgs, EngineArg, EvalArgs, KernelArg, ModelArgs, Stage, SyntheticArg, TaskArg, TrainArgs, UpdateArgs, WecArgs};

pub type CmdResult = Result<(), (Stage, anyhow::Error)>;

trait At<T> {
    fn at(self, stage: Stage) -> Result<T, (Stage, anyhow::Error)>;
}

impl<T, E: Into<anyhow::Error>> At<T> for Result<T, E> {
    fn at(self, stage: Stage) -> Result<T, (Stage, anyhow::Error)> {
        self.map_err(|e| (stage, e.into()))
    }
}

fn task_kind(t: TaskArg) -> TaskKind {
    match t {
        TaskArg::Classification => TaskKind::Classification,
        TaskArg::Regression => TaskKind::Regression,
    }
}

fn dataset_spec(path: &Path, label_col: LabelColumn, header: bool, delimiter: char, positive: Option<f64>, task: TaskKind) -> anyhow::Result<DatasetSpec> {
    let delimiter = u8::try_from(delimiter).map_err(|_| anyhow!("delimiter must be a single ASCII character"))?;
    Ok(DatasetSpec {
        path: path.to_path_buf(),
        label_column: label_col,
        has_header: header,
        task,
        delimiter,
        positive_label: positive,
    })
}

fn load(data: &DataArgs, task: TaskKind) -> anyhow::Result<Vec<Sample>> {
    let path = data.data.as_deref().ok_or_else(|| anyhow!("--data is required"))?;
    let spec = dataset_spec(path, data.label_col, data.header, data.delimiter, data.positive_label, task)?;
    load_csv(&spec).with_context(|| format!("loading {}", path.display()))
}

fn kernel_spec(m: &ModelArgs) -> KernelSpec {
    match m.kernel {
        KernelArg::Linear => KernelSpec::linear(m.ridge),
        KernelArg::Poly2 => KernelSpec::polynomial(m.degree.unwrap_or(2), m.offset, m.ridge),
        KernelArg::Poly3 => KernelSpec::polynomial(m.degree.unwrap_or(3), m.offset, m.ridge),
        KernelArg::Rbf => KernelSpec::rbf(m.sigma, m.ridge),
    }
}

fn hyperparams(m: &ModelArgs) -> Hyperparams {
    let eps = if m.task == TaskArg::Regression { m.epsilon } else { 0.0 };
    Hyperparams::new(m.c, eps)
}

fn train_model(samples: &[Sample], task: TaskKind, spec: &KernelSpec, hyper: &Hyperparams) -> ridgesv::Result<Model> {
    let cfg = SolverConfig::default();
    Ok(match task {
        TaskKind::Classification => Model::Svm(train_svm_batch(samples, spec, hyper, &cfg)?),
        TaskKind::Regression => Model::Svr(train_svr_batch(samples, spec, hyper, &cfg)?),
    })
}

fn standardize(samples: &[Sample], stats: Option<&StandardizationStats>) -> ridgesv::Result<Vec<Sample>> {
    match stats {
        Some(s) => s.apply(samples),
        None => Ok(samples.to_vec()),
    }
}

fn metric_line(model: &Model, data: &[Sample]) -> anyhow::Result<String> {
    let m = evaluate(model, data)?;
    Ok(match model.task() {
        TaskKind::Classification => format!("accuracy: {m:.4}%"),
        TaskKind::Regression => format!("mse: {m:.6}"),
    })
}

pub fn train(a: &TrainArgs) -> CmdResult {
    let task = task_kind(a.model.task);
    let raw = load(&a.data, task).at(Stage::Input)?;
    let stats = if a.model.no_standardize { None } else { Some(fit_standardizer(&raw, task).at(Stage::Input)?) };
    let data = standardize(&raw, stats.as_ref()).at(Stage::Input)?;
    let spec = kernel_spec(&a.model);
    let hyper = hyperparams(&a.model);
    spec.validate().at(Stage::Input)?;
    hyper.validate().at(Stage::Input)?;
    let cfg = SolverConfig { seed: a.seed, ..SolverConfig::default() };
    let start = Instant::now();
    let model = match task {
        TaskKind::Classification => Model::Svm(train_svm_batch(&data, &spec, &hyper, &cfg).at(Stage::Train)?),
        TaskKind::Regression => Model::Svr(train_svr_batch(&data, &spec, &hyper, &cfg).at(Stage::Train)?),
    };
    let secs = start.elapsed().as_secs_f64();
    let counts = model.counts();
    println!("samples: {}", model.len());
    println!("regions: S={} B={} O={}", counts.unbounded, counts.bounded, counts.non_support);
    println!("bias: {}", model.bias());
    if model.len() <= 10 {
        println!("multipliers: {:?}", model.multipliers());
    }
    println!("train {}", metric_line(&model, &data).at(Stage::Train)?);
    println!("train seconds: {secs:.6}");
    let stored = StoredModel { model, standardizer: stats };
    save_model(&a.out, &stored).at(Stage::Input)?;
    println!("wrote {}", a.out.display());
    Ok(())
}

pub fn update(a: &UpdateArgs) -> CmdResult {
    let mut stored = load_model(&a.model).with_context(|| format!("loading {}", a.model.display())).at(Stage::Input)?;
    let task = stored.model.task();
    let mut add = Vec::new();
    if let Some(path) = &a.add {
        let spec = dataset_spec(path, a.label_col, a.header, a.delimiter, a.positive_label, task).at(Stage::Input)?;
        let raw = load_csv(&spec).with_context(|| format!("loading {}", path.display())).at(Stage::Input)?;
        let next = stored.model.samples().iter().map(|s| s.id.0 + 1).max().unwrap_or(0);
        add = standardize(&raw, stored.standardizer.as_ref())
            .at(Stage::Input)?
            .into_iter()
            .enumerate()
            .map(|(k, s)| Sample::new(next + k as u64, s.features, s.target))
            .collect();
    }
    let batch = UpdateBatch::new(add, a.remove.iter().copied().map(SampleId).collect());
    let arm = match a.engine {
        EngineArg::Proposed => Arm::Proposed,
        EngineArg::Baseline => Arm::Baseline,
    };
    let before = stored.model.counts();
    let start = Instant::now();
    apply_arm(&mut stored.model, &batch, arm, &EngineConfig::default()).at(Stage::Update)?;
    let secs = start.elapsed().as_secs_f64();
    let after = stored.model.counts();
    let report = stored.model.validate();
    println!("engine: {arm}");
    println!("added: {} removed: {}", batch.add.len(), batch.remove.len());
    println!(
        "regions: S={} B={} O={} (delta S {:+})",
        after.unbounded,
        after.bounded,
        after.non_support,
        after.unbounded as i64 - before.unbounded as i64
    );
    println!("update seconds: {secs:.6}");
    println!("kkt residual: {:.3e}", report.max_kkt_residual);
    println!("violations: {}", report.len());
    let out = a.out.as_deref().unwrap_or(&a.model);
    save_model(out, &stored).at(Stage::Input)?;
    println!("wrote {}", out.display());
    Ok(())
}

pub fn eval(a: &EvalArgs) -> CmdResult {
    let stored = load_model(&a.model).with_context(|| format!("loading {}", a.model.display())).at(Stage::Input)?;
    let raw = load(&a.data, stored.model.task()).at(Stage::Input)?;
    let data = standardize(&raw, stored.standardizer.as_ref()).at(Stage::Input)?;
    println!("samples: {}", data.len());
    println!("{}", metric_line(&stored.model, &data).at(Stage::Input)?);
    Ok(())
}

pub fn bench(a: &BenchArgs) -> CmdResult {
    let task = task_kind(a.model.task);
    let (raw, name) = match &a.data.data {
        Some(p) => {
            let all = load(&a.data, task).at(Stage::Input)?;
            let rows = match a.limit {
                Some(n) => subsample(&all, n, a.seed),
                None => all,
            };
            (rows, p.display().to_string())
        }
        None => match a.synthetic {
            SyntheticArg::Gaussians => (two_gaussians(a.limit.unwrap_or(1000), a.seed, 0), "synthetic-gaussians".to_string()),
            SyntheticArg::Sine => (noisy_sine(a.limit.unwrap_or(1000), a.seed, 0), "synthetic-sine".to_string()),
            SyntheticArg::Skin => {
                let (rows, real) = skin_segmentation(a.limit.unwrap_or(5000), a.seed).at(Stage::Input)?;
                (rows, if real { "skin-segmentation" } else { "synthetic-skin" }.to_string())
            }
        },
    };
    if matches!(a.synthetic, SyntheticArg::Sine) && a.data.data.is_none() && task != TaskKind::Regression {
        return Err((Stage::Input, anyhow!("the sine dataset needs --task regression")));
    }
    let arms: Vec<Arm> = a.arms.iter().map(|s| s.parse::<Arm>()).collect::<Result<_, _>>().at(Stage::Input)?;
    let plan = SplitPlan { seed: a.seed, ..SplitPlan::default() };
    let (train, pool, test) = split(&raw, &plan).at(Stage::Input)?;
    let stats = if a.model.no_standardize { None } else { Some(fit_standardizer(&train, task).at(Stage::Input)?) };
    let train = standardize(&train, stats.as_ref()).at(Stage::Input)?;
    let pool = standardize(&pool, stats.as_ref()).at(Stage::Input)?;
    let test = standardize(&test, stats.as_ref()).at(Stage::Input)?;
    let spec = kernel_spec(&a.model);
    let hyper = hyperparams(&a.model);
    spec.validate().at(Stage::Input)?;
    hyper.validate().at(Stage::Input)?;
    kernels::set_parallel(a.parallel);
    let initial = train_model(&train, task, &spec, &hyper).at(Stage::Train)?;
    let ids: Vec<SampleId> = initial.samples().iter().map(|s| s.id).collect();
    let schedule = RoundSchedule {
        rounds: a.rounds,
        add_per_round: a.add_per_round,
        remove_per_round: a.remove_per_round,
        seed: a.seed,
    };
    let batches = schedule_rounds(&pool, &ids, &schedule).at(Stage::Input)?;
    let meta = BenchMeta {
        dataset: name,
        task,
        kernel: spec,
        hyper,
        split_seed: a.seed,
        schedule,
        parallel: a.parallel,
        initial_samples: initial.len(),
    };
    let report = bench::run_bench(&initial, &batches, &test, &arms, &EngineConfig::default(), meta);
    report.write(&a.out).at(Stage::Input)?;
    print!("{}", report.table());
    println!("wrote {}", a.out.display());
    if !report.complete {
        return Err((Stage::Update, anyhow!("bench incomplete: {}", report.failure.unwrap_or_default())));
    }
    if !report.parity.passed {
        return Err((Stage::Update, anyhow!("arms disagree by {:.3e}", report.parity.max_gap)));
    }
    Ok(())
}

pub fn wec(a: &WecArgs) -> CmdResult {
    let stored = load_model(&a.model).with_context(|| format!("loading {}", a.model.display())).at(Stage::Input)?;
    let points = wec::wec_points(&stored.model).at(Stage::Input)?;
    let mut w = csv::Writer::from_path(&a.out).with_context(|| format!("creating {}", a.out.display())).at(Stage::Input)?;
    for p in &points {
        w.serialize(p).at(Stage::Input)?;
    }
    w.flush().at(Stage::Input)?;
    println!("points: {}", points.len());
    let rho = stored.model.kernel().ridge;
    match wec::unbounded_slope(&points) {
        Some(s) if rho > 0.0 => println!("unbounded slope: {s:.6} (expected {:.6})", -1.0 / rho),
        Some(s) => println!("unbounded slope: {s:.6}"),
        None => println!("unbounded slope: undefined"),
    }
    if let Model::Svr(_) = stored.model {
        match wec::svr_crossings(&points) {
            Some((lo, hi)) => println!("zero crossings: {lo:.6} {hi:.6} (epsilon {})", stored.model.hyper().epsilon),
            None => println!("zero crossings: undefined"),
        }
    }
    println!("wrote {}", a.out.display());
    Ok(())
}
