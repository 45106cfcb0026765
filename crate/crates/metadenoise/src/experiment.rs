//! Builds problems from a config and runs the individual pipeline stages.

use std::path::{Path, PathBuf};

use metadenoise_core::evaluation::{compare_methods, evaluate_on_test, initial_noise, kshot_sweep, EvalReport, KShotRow, Method, MetricResult, Problem, SeedStreams};
use metadenoise_core::tasks::{patchify, window_signal, TaskDistribution};
use metadenoise_core::tensor::PairedSet;
use metadenoise_core::training::{fine_tune, meta_train, train_supervised, TrainLog};
use metadenoise_core::{synth, DenoiserModel, Executor, RngStream, Tensor};

use crate::config::{ExperimentConfig, ProblemKind, RealSource, Source};
use crate::datasets::{load_image_dataset, load_signal_dataset, save_pgm, save_signal_dataset};
use crate::{Error, Result};

// sub-stream tags under the base seed
const CLEAN_TAG: u64 = 0xC1EA;
const REAL_TAG: u64 = 0x4EA1;
const NOISE_TAG: u64 = 0x4015E;
const TRAIN_TAG: u64 = 0x7A1;

fn root(cfg: &ExperimentConfig) -> RngStream {
    RngStream::new(cfg.base_seed)
}

fn synthesize(kind: ProblemKind, count: usize, extent: usize, stream: &RngStream) -> Vec<Tensor> {
    match kind {
        ProblemKind::Signal1d => synth::signal_set(count, extent, stream),
        _ => synth::phantom_set(count, extent, stream),
    }
}

fn load_source(cfg: &ExperimentConfig, source: &Source, stream: &RngStream) -> Result<Vec<Tensor>> {
    match source {
        Source::File(path) => load_records(cfg.problem, path),
        Source::Synthetic { count, extent } => Ok(synthesize(cfg.problem, *count, *extent, stream)),
    }
}

fn load_records(kind: ProblemKind, path: &Path) -> Result<Vec<Tensor>> {
    match kind {
        ProblemKind::Signal1d => load_signal_dataset(path),
        _ => load_image_dataset(path),
    }
}

fn tile(cfg: &ExperimentConfig, records: &[Tensor], stride: usize) -> Result<Vec<Tensor>> {
    let size = cfg.tiling.size;
    let mut out = Vec::new();
    for r in records {
        out.extend(match cfg.problem {
            ProblemKind::Signal1d => window_signal(r, size, stride)?,
            _ => patchify(r, size, stride)?,
        });
    }
    Ok(out)
}

/// Clean training pool and the real pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct Datasets {
    pub clean_pool: Vec<Tensor>,
    pub real_pairs: PairedSet,
}

pub fn load_datasets(cfg: &ExperimentConfig) -> Result<Datasets> {
    let r = root(cfg);
    let clean = load_source(cfg, &cfg.clean, &r.derive(CLEAN_TAG))?;
    let clean_pool = tile(cfg, &clean, cfg.tiling.stride)?;
    let mut real_pairs = match &cfg.real {
        RealSource::Pairs { clean, noisy } => {
            let c = tile(cfg, &load_records(cfg.problem, clean)?, cfg.tiling.real_stride)?;
            let n = tile(cfg, &load_records(cfg.problem, noisy)?, cfg.tiling.real_stride)?;
            if c.len() != n.len() {
                return Err(Error::format(noisy, format!("{} noisy samples for {} clean ones", n.len(), c.len())));
            }
            PairedSet::new(n, c)?
        }
        RealSource::HeldOut { clean, noise } => {
            let records = load_source(cfg, clean, &r.derive(REAL_TAG))?;
            let mut windows = tile(cfg, &records, cfg.tiling.real_stride)?;
            windows.truncate(cfg.real_count);
            noise.make_pairs(&windows, &r.derive(NOISE_TAG))?
        }
    };
    if real_pairs.len() > cfg.real_count {
        real_pairs = real_pairs.select(&(0..cfg.real_count).collect::<Vec<_>>());
    }
    Ok(Datasets { clean_pool, real_pairs })
}

pub fn problem(cfg: &ExperimentConfig, data: &Datasets, n_tasks: usize) -> Result<Problem> {
    let p = Problem {
        network: cfg.network.clone(),
        clean_pool: data.clean_pool.clone(),
        real_pairs: data.real_pairs.clone(),
        prior: TaskDistribution::new(cfg.tasks.clone())?,
        n_tasks,
        metric: cfg.metric,
        meta: cfg.meta,
        supervised: cfg.supervised,
        finetune: cfg.finetune,
        base_seed: root(cfg).derive(TRAIN_TAG).next_seed(),
    };
    p.validate()?;
    Ok(p)
}

/// Problem and stream record of the first seed and task count, used by the
/// single-stage commands.
pub fn first_condition(cfg: &ExperimentConfig) -> Result<(Problem, SeedStreams)> {
    let data = load_datasets(cfg)?;
    let p = problem(cfg, &data, cfg.task_counts[0])?;
    let streams = SeedStreams::derive(p.base_seed, cfg.seeds[0]);
    Ok((p, streams))
}

/// Writes the built-in clean records: `clean.csv` and `real_clean.csv` for
/// signals, `clean/` and `real_clean/` directories of 16-bit PGMs for images.
pub fn write_synthetic(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    let r = root(cfg);
    let real_source = match &cfg.real {
        RealSource::HeldOut { clean: s @ Source::Synthetic { .. }, .. } => s.clone(),
        _ => Source::Synthetic { count: 8, extent: if cfg.problem == ProblemKind::Signal1d { 2000 } else { 64 } },
    };
    let train_source = match &cfg.clean {
        s @ Source::Synthetic { .. } => s.clone(),
        Source::File(_) => Source::Synthetic { count: 20, extent: if cfg.problem == ProblemKind::Signal1d { 2000 } else { 64 } },
    };
    let sets = [("clean", train_source, r.derive(CLEAN_TAG)), ("real_clean", real_source, r.derive(REAL_TAG))];
    let mut written = Vec::new();
    for (name, source, stream) in sets {
        let records = load_source(cfg, &source, &stream)?;
        if cfg.problem == ProblemKind::Signal1d {
            let path = dir.join(format!("{}.csv", name));
            save_signal_dataset(&path, &records)?;
            written.push(path);
        } else {
            let sub = dir.join(name);
            std::fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
            for (i, img) in records.iter().enumerate() {
                save_pgm(sub.join(format!("{:04}.pgm", i)), img, 65535)?;
            }
            written.push(sub);
        }
    }
    Ok(written)
}

pub fn run_meta_train<E: Executor>(cfg: &ExperimentConfig, exec: &E) -> Result<(DenoiserModel, TrainLog)> {
    let (p, streams) = first_condition(cfg)?;
    let init = p.initial_model(&streams)?;
    Ok(meta_train(&init, &p.task_set(&streams)?, &p.clean_pool, &p.meta_config(&streams), exec)?)
}

pub fn run_pretrain(cfg: &ExperimentConfig) -> Result<DenoiserModel> {
    let (p, streams) = first_condition(cfg)?;
    let init = p.initial_model(&streams)?;
    Ok(train_supervised(&init, &p.task_set(&streams)?, &p.clean_pool, &p.supervised_config(&streams))?)
}

/// Fine-tunes `model` on the first seed's k-shot split.
pub fn run_finetune(cfg: &ExperimentConfig, model: &DenoiserModel) -> Result<DenoiserModel> {
    let (p, streams) = first_condition(cfg)?;
    check_network(cfg, model)?;
    let split = p.split(&streams, cfg.k)?;
    Ok(fine_tune(model, &split, &p.finetune_config(&streams))?)
}

pub fn run_transfer(cfg: &ExperimentConfig) -> Result<(DenoiserModel, DenoiserModel)> {
    let pre = run_pretrain(cfg)?;
    let tuned = run_finetune(cfg, &pre)?;
    Ok((pre, tuned))
}

/// Test-set metric of `model` and of the unprocessed inputs.
pub fn run_evaluate(cfg: &ExperimentConfig, model: &DenoiserModel) -> Result<(MetricResult, MetricResult)> {
    let (p, streams) = first_condition(cfg)?;
    check_network(cfg, model)?;
    let split = p.split(&streams, cfg.k)?;
    Ok((evaluate_on_test(model, &split, p.metric)?, initial_noise(&split.test, p.metric)?))
}

fn check_network(cfg: &ExperimentConfig, model: &DenoiserModel) -> Result<()> {
    if model.spec() != &cfg.network {
        return Err(metadenoise_core::Error::Argument(format!("checkpoint network `{}` differs from the configured `{}`", model.spec(), cfg.network)).into());
    }
    Ok(())
}

/// One comparison per task count, merged.
pub fn run_compare<E: Executor>(cfg: &ExperimentConfig, exec: &E) -> Result<EvalReport> {
    let data = load_datasets(cfg)?;
    let mut report = EvalReport::empty(cfg.metric);
    for &n in &cfg.task_counts {
        let p = problem(cfg, &data, n)?;
        report.merge(compare_methods(&p, &cfg.methods, cfg.k, &cfg.seeds, exec)?);
    }
    Ok(report)
}

/// Sweep rows per task count.
pub fn run_kshot<E: Executor>(cfg: &ExperimentConfig, exec: &E) -> Result<Vec<(usize, Vec<KShotRow>)>> {
    let data = load_datasets(cfg)?;
    cfg.task_counts
        .iter()
        .map(|&n| {
            let p = problem(cfg, &data, n)?;
            Ok((n, kshot_sweep(&p, cfg.kshot_method, &cfg.kshot_ks, &cfg.seeds, exec)?))
        })
        .collect()
}

pub fn method_label(m: Method) -> &'static str {
    m.title()
}
