//! Command-line surface. Exit codes: 0 success, 1 usage, 2 data or format
//! error, 3 numeric failure.

use std::ffi::OsString;
use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::config::ExperimentConfig;
use crate::experiment;
use crate::parallel::Pool;
use crate::report;
use crate::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "metadenoise", version, about = "Few-shot meta-denoising experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Experiment config file (`key = value` lines)
    #[arg(long)]
    config: PathBuf,
    /// Overrides `base_seed`
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the number of fine-tuning shots
    #[arg(long)]
    k: Option<usize>,
    /// Worker threads (0 = one per core)
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args, Debug, Clone)]
struct WithModel {
    #[command(flatten)]
    common: Common,
    /// Checkpoint to start from; defaults to `model.checkpoint`
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the built-in synthetic clean datasets
    SynthData(Common),
    /// Reptile meta-training on synthetic tasks
    MetaTrain(Common),
    /// Supervised training on pooled synthetic pairs
    Pretrain(Common),
    /// Fine-tune a checkpoint on k real pairs
    Finetune(WithModel),
    /// Supervised pretraining followed by fine-tuning
    Transfer(Common),
    /// Evaluate a checkpoint on the real test split
    Evaluate(WithModel),
    /// Metric as a function of the number of shots
    KshotSweep(Common),
    /// Compare supervised, transfer and meta-denoising across seeds
    Compare(Common),
}

/// Removes the lock file when the run ends.
struct OutputLock(PathBuf);

impl OutputLock {
    fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(".metadenoise.lock");
        OpenOptions::new().write(true).create_new(true).open(&path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::AlreadyExists {
                Error::format(&path, "output directory is in use by another run")
            } else {
                Error::io(&path, e)
            }
        })?;
        Ok(OutputLock(path))
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

fn load(common: &Common) -> Result<(ExperimentConfig, Pool)> {
    if !common.config.is_file() {
        return Err(Error::Usage(format!("config file `{}` not found\n\nUsage: metadenoise <COMMAND> --config <CONFIG>", common.config.display())));
    }
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.base_seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    if let Some(k) = common.k {
        if k == 0 {
            return Err(Error::Usage("--k must be at least 1".into()));
        }
        cfg.k = k;
    }
    if let Some(w) = common.workers {
        cfg.workers = w;
    }
    let pool = Pool::new(cfg.workers)?;
    Ok((cfg, pool))
}

fn model_path(cfg: &ExperimentConfig, flag: &Option<PathBuf>) -> Result<PathBuf> {
    flag.clone()
        .or_else(|| cfg.checkpoint.clone())
        .ok_or_else(|| Error::Usage("no model given: pass --model or set model.checkpoint".into()))
}

fn announce(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::SynthData(c) => {
            let (cfg, _) = load(&c)?;
            let _lock = OutputLock::acquire(&cfg.out)?;
            announce(&experiment::write_synthetic(&cfg, &cfg.out)?);
        }
        Command::MetaTrain(c) => {
            let (cfg, pool) = load(&c)?;
            let _lock = OutputLock::acquire(&cfg.out)?;
            let (model, log) = experiment::run_meta_train(&cfg, &pool)?;
            let path = cfg.out.join("meta.mdnz");
            save_checkpoint(&model, &path)?;
            announce(&[path, report::emit_trainlog(&log, &cfg.out)?]);
        }
        Command::Pretrain(c) => {
            let (cfg, _) = load(&c)?;
            let _lock = OutputLock::acquire(&cfg.out)?;
            let path = cfg.out.join("supervised.mdnz");
            save_checkpoint(&experiment::run_pretrain(&cfg)?, &path)?;
            announce(&[path]);
        }
        Command::Finetune(m) => {
            let (cfg, _) = load(&m.common)?;
            let model = load_checkpoint(model_path(&cfg, &m.model)?)?;
            let _lock = OutputLock::acquire(&cfg.out)?;
            let path = cfg.out.join("finetuned.mdnz");
            save_checkpoint(&experiment::run_finetune(&cfg, &model)?, &path)?;
            announce(&[path]);
        }
        Command::Transfer(c) => {
            let (cfg, _) = load(&c)?;
            let _lock = OutputLock::acquire(&cfg.out)?;
            let (pre, tuned) = experiment::run_transfer(&cfg)?;
            let (a, b) = (cfg.out.join("pretrained.mdnz"), cfg.out.join("transfer.mdnz"));
            save_checkpoint(&pre, &a)?;
            save_checkpoint(&tuned, &b)?;
            announce(&[a, b]);
        }
        Command::Evaluate(m) => {
            let (cfg, _) = load(&m.common)?;
            let model = load_checkpoint(model_path(&cfg, &m.model)?)?;
            let _lock = OutputLock::acquire(&cfg.out)?;
            let (result, initial) = experiment::run_evaluate(&cfg, &model)?;
            let name = cfg.metric.name();
            println!("{} {} dB (sd {}), initial noise {} dB, {} test samples", name, report::real(result.mean), report::real(result.sd), report::real(initial.mean), result.count);
            announce(&[report::emit_evaluation(&result, &initial, &cfg.out)?]);
        }
        Command::KshotSweep(c) => {
            let (cfg, pool) = load(&c)?;
            let _lock = OutputLock::acquire(&cfg.out)?;
            let rows = experiment::run_kshot(&cfg, &pool)?;
            print!("{}", report::kshot_table(cfg.kshot_method, cfg.metric.name(), &rows));
            announce(&report::emit_kshot(cfg.kshot_method, cfg.metric.name(), &rows, &cfg.out)?);
        }
        Command::Compare(c) => {
            let (cfg, pool) = load(&c)?;
            let _lock = OutputLock::acquire(&cfg.out)?;
            let rep = experiment::run_compare(&cfg, &pool)?;
            print!("{}", report::report_table(&rep));
            announce(&report::emit_report(&rep, &cfg.out)?);
        }
    }
    Ok(())
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit status.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e);
            e.exit_code()
        }
    }
}
