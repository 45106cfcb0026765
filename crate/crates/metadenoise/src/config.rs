//! Flat `key = value` experiment configuration.
//!
//! Lines are `key = value`; `#` starts a comment; keys use dotted
//! namespaces. Unknown keys are rejected. Relative paths are resolved
//! against the directory of the config file.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use metadenoise_core::evaluation::{MetaSchedule, Method, Metric};
use metadenoise_core::nets::{build_autoencoder, build_conv_denoiser, build_ecg_autoencoder};
use metadenoise_core::noise::NoiseModel;
use metadenoise_core::optim::{InnerLoopConfig, OptimizerConfig, OptimizerKind};
use metadenoise_core::tasks::{HeldOutNoise, Hum, Prior, Spread, TaskTemplate};
use metadenoise_core::NetworkSpec;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    Signal1d,
    Image2d,
    Ct2d,
}

impl FromStr for ProblemKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "signal1d" => Ok(ProblemKind::Signal1d),
            "image2d" => Ok(ProblemKind::Image2d),
            "ct2d" => Ok(ProblemKind::Ct2d),
            _ => Err(format!("expected signal1d, image2d or ct2d, got `{}`", s)),
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProblemKind::Signal1d => "signal1d",
            ProblemKind::Image2d => "image2d",
            ProblemKind::Ct2d => "ct2d",
        })
    }
}

/// Where clean samples come from.
#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    /// A CSV signal file or a directory of PGM images.
    File(PathBuf),
    /// Built-in generator: `count` records of `extent` samples (signal
    /// length or image side).
    Synthetic { count: usize, extent: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum RealSource {
    /// Measured pairs: clean and noisy files with matching records.
    Pairs { clean: PathBuf, noisy: PathBuf },
    /// Clean records corrupted by a held-out noise model.
    HeldOut { clean: Source, noise: HeldOutNoise },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tiling {
    pub size: usize,
    pub stride: usize,
    /// Stride used on the real data.
    pub real_stride: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub problem: ProblemKind,
    pub base_seed: u64,
    pub seeds: Vec<u64>,
    pub k: usize,
    pub metric: Metric,
    pub out: PathBuf,
    /// Task-set sizes, one condition each.
    pub task_counts: Vec<usize>,
    pub methods: Vec<Method>,
    /// 0 means one worker per core.
    pub workers: usize,
    pub clean: Source,
    pub real: RealSource,
    /// Maximum number of real pairs kept after tiling.
    pub real_count: usize,
    pub tiling: Tiling,
    pub tasks: Vec<(TaskTemplate, f64)>,
    pub network: NetworkSpec,
    pub meta: MetaSchedule,
    pub supervised: InnerLoopConfig,
    pub finetune: InnerLoopConfig,
    pub kshot_ks: Vec<usize>,
    pub kshot_method: Method,
    pub checkpoint: Option<PathBuf>,
    pub ct_angles: usize,
    pub ct_pixel_size: f64,
}

struct Entries {
    path: PathBuf,
    map: BTreeMap<String, (String, usize)>,
    used: BTreeSet<String>,
}

impl Entries {
    fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::format(path, format!("line {}: expected `key = value`", i + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(Error::format(path, format!("line {}: empty key", i + 1)));
            }
            if map.insert(k.to_string(), (v.to_string(), i + 1)).is_some() {
                return Err(Error::format(path, format!("line {}: duplicate key `{}`", i + 1, k)));
            }
        }
        Ok(Entries { path: path.to_path_buf(), map, used: BTreeSet::new() })
    }

    fn raw(&mut self, key: &str) -> Option<(String, usize)> {
        let v = self.map.get(key).cloned();
        if v.is_some() {
            self.used.insert(key.to_string());
        }
        v
    }

    fn get<T: FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some((v, line)) => v
                .parse::<T>()
                .map(Some)
                .map_err(|e| Error::format(&self.path, format!("line {}: `{}`: {}", line, key, e))),
        }
    }

    fn or<T: FromStr>(&mut self, key: &str, default: T) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    fn require<T: FromStr>(&mut self, key: &str) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        self.get(key)?.ok_or_else(|| Error::Config(format!("missing required key `{}`", key)))
    }

    fn list<T: FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: fmt::Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some((v, line)) => v
                .split(',')
                .map(|p| p.trim().parse::<T>().map_err(|e| Error::format(&self.path, format!("line {}: `{}`: {}", line, key, e))))
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }

    fn path(&mut self, key: &str, base: &Path) -> Option<PathBuf> {
        self.raw(key).map(|(v, _)| base.join(v))
    }

    fn positive(&self, key: &str, v: usize) -> Result<usize> {
        if v == 0 {
            return Err(Error::Config(format!("`{}` must be positive", key)));
        }
        Ok(v)
    }

    fn finish(self) -> Result<()> {
        if let Some(k) = self.map.keys().find(|k| !self.used.contains(*k)) {
            let line = self.map[k].1;
            return Err(Error::format(&self.path, format!("line {}: unknown key `{}` (or one that has no effect with the other settings)", line, k)));
        }
        Ok(())
    }
}

/// Parsed as a number, `{a,b,...}` or `U(a,b)`.
struct PriorValue(Prior);

impl FromStr for PriorValue {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        s.parse::<Prior>().map(PriorValue).map_err(|e| e.to_string())
    }
}

struct Kind(OptimizerKind);

impl FromStr for Kind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "sgd" => Ok(Kind(OptimizerKind::Sgd)),
            "adam" => Ok(Kind(OptimizerKind::Adam)),
            "adadelta" => Ok(Kind(OptimizerKind::AdaDelta)),
            _ => Err(format!("expected sgd, adam or adadelta, got `{}`", s)),
        }
    }
}

struct Flag(bool);

impl FromStr for Flag {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "true" | "1" | "yes" => Ok(Flag(true)),
            "false" | "0" | "no" => Ok(Flag(false)),
            _ => Err(format!("expected true or false, got `{}`", s)),
        }
    }
}

fn loop_config(e: &mut Entries, prefix: &str, fallback: Option<InnerLoopConfig>) -> Result<InnerLoopConfig> {
    let key = |k: &str| format!("{}.{}", prefix, k);
    let base = fallback.unwrap_or(InnerLoopConfig { optimizer: OptimizerConfig::adadelta(1.5), epochs: 10, batch_size: 10, shuffle_seed: 0 });
    let kind = e.get::<Kind>(&key("optimizer"))?.map(|k| k.0).unwrap_or(base.optimizer.kind);
    let lr = e.or(&key("lr"), base.optimizer.learning_rate)?;
    let cfg = InnerLoopConfig {
        optimizer: OptimizerConfig::new(kind, lr),
        epochs: e.or(&key("epochs"), base.epochs)?,
        batch_size: e.or(&key("batch"), base.batch_size)?,
        shuffle_seed: 0,
    };
    cfg.validate().map_err(|err| Error::Config(format!("`{}.*`: {}", prefix, err)))?;
    Ok(cfg)
}

fn task_templates(e: &mut Entries, problem: ProblemKind, angles: usize, pixel_size: f64) -> Result<Vec<(TaskTemplate, f64)>> {
    let ids: BTreeSet<u32> = e
        .map
        .keys()
        .filter_map(|k| k.strip_prefix("task.")?.split('.').next()?.parse::<u32>().ok())
        .collect();
    let mut out = Vec::new();
    for id in ids {
        let key = |k: &str| format!("task.{}.{}", id, k);
        let kind: String = e.require(&key("kind"))?;
        let prior = |e: &mut Entries, k: &str| -> Result<Prior> { Ok(e.require::<PriorValue>(&key(k))?.0) };
        let template = match kind.as_str() {
            "gaussian" => {
                let mean = e.get::<PriorValue>(&key("mean"))?.map(|p| p.0).unwrap_or(Prior::Fixed(0.0));
                let spread = match (e.get::<PriorValue>(&key("sigma"))?, e.get::<PriorValue>(&key("variance"))?) {
                    (Some(s), None) => Spread::Sigma(s.0),
                    (None, Some(v)) => Spread::Variance(v.0),
                    _ => return Err(Error::Config(format!("task {} needs exactly one of sigma or variance", id))),
                };
                TaskTemplate::Gaussian { image: problem != ProblemKind::Signal1d, mean, spread }
            }
            "poisson" => TaskTemplate::PoissonImage { peak: prior(e, "peak")? },
            "sinogram" => TaskTemplate::PoissonSinogram {
                blank_scan: prior(e, "blank_scan")?,
                readout_sigma: e.get::<PriorValue>(&key("readout_sigma"))?.map(|p| p.0).unwrap_or(Prior::Fixed(0.0)),
                n_angles: angles,
                pixel_size,
            },
            other => return Err(Error::Config(format!("task {}: unknown kind `{}` (gaussian, poisson, sinogram)", id, other))),
        };
        let weight = e.or(&key("weight"), 1.0)?;
        out.push((template, weight));
    }
    if out.is_empty() {
        return Err(Error::Config("no tasks defined (task.1.kind = ...)".into()));
    }
    Ok(out)
}

fn held_out_noise(e: &mut Entries, problem: ProblemKind, angles: usize, pixel_size: f64) -> Result<HeldOutNoise> {
    let mut stages = Vec::new();
    if let Some(peak) = e.get::<f64>("real.poisson.peak")? {
        stages.push(NoiseModel::PoissonImage { peak });
    }
    if let Some(blank_scan) = e.get::<f64>("real.ct.blank_scan")? {
        let readout_sigma = e.or("real.ct.readout_sigma", 0.0)?;
        stages.push(NoiseModel::PoissonSinogram { blank_scan, readout_sigma, n_angles: angles, pixel_size });
    }
    let mean = e.get::<f64>("real.gaussian.mean")?;
    let sigma = e.get::<f64>("real.gaussian.sigma")?;
    if mean.is_some() || sigma.is_some() {
        let (mean, sigma) = (mean.unwrap_or(0.0), sigma.unwrap_or(0.0));
        stages.push(match problem {
            ProblemKind::Signal1d => NoiseModel::Gaussian1d { mean, sigma },
            _ => NoiseModel::Gaussian2d { mean, sigma },
        });
    }
    let hum = match (e.get::<f64>("real.hum.amplitude")?, e.get::<f64>("real.hum.period")?) {
        (None, None) => None,
        (Some(amplitude), Some(period)) => Some(Hum { amplitude, period }),
        _ => return Err(Error::Config("real.hum needs both amplitude and period".into())),
    };
    for s in &stages {
        s.validate().map_err(|err| Error::Config(format!("real noise: {}", err)))?;
    }
    Ok(HeldOutNoise { stages, hum })
}

fn must_exist(path: PathBuf) -> Result<PathBuf> {
    if !path.exists() {
        return Err(Error::io(&path, std::io::Error::new(std::io::ErrorKind::NotFound, "referenced dataset does not exist")));
    }
    Ok(path)
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// `path` names the source for diagnostics and anchors relative paths.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        let mut e = Entries::parse(text, path)?;
        let problem: ProblemKind = e.require("problem")?;
        let signal = problem == ProblemKind::Signal1d;

        let base_seed = e.or("base_seed", 0u64)?;
        let seeds = match e.raw("seeds") {
            None => vec![0],
            Some((v, line)) if !v.contains(',') => {
                let n: u64 = v.parse().map_err(|_| Error::format(path, format!("line {}: `seeds`: expected a count or a list", line)))?;
                (0..n).collect()
            }
            Some((v, line)) => v
                .split(',')
                .map(|s| s.trim().parse::<u64>().map_err(|_| Error::format(path, format!("line {}: `seeds`: bad seed `{}`", line, s.trim()))))
                .collect::<Result<Vec<_>>>()?,
        };
        if seeds.is_empty() {
            return Err(Error::Config("`seeds` must not be empty".into()));
        }
        let k = e.or("k", 10usize)?;
        e.positive("k", k)?;
        let metric = match e.get::<Metric>("metric")? {
            Some(m) => m,
            None if signal => Metric::Snr,
            None => Metric::Psnr { max_val: e.or("psnr.max", 1.0)? },
        };
        let out = e.path("out", &base).unwrap_or_else(|| base.join("results"));
        let task_counts = e.list::<usize>("tasks")?.unwrap_or_else(|| vec![50]);
        if task_counts.iter().any(|&n| n == 0) {
            return Err(Error::Config("`tasks` counts must be positive".into()));
        }
        let methods = e.list::<Method>("methods")?.unwrap_or_else(|| Method::ALL.to_vec());
        let workers = e.or("workers", 0usize)?;

        let ct_angles = e.or("ct.angles", 90usize)?;
        let ct_pixel_size = e.or("ct.pixel_size", 0.02)?;

        let default_extent = if signal { 2000 } else { 64 };
        let extent_key = if signal { "synth.length" } else { "synth.size" };
        let clean = match e.path("data.clean", &base) {
            Some(p) => Source::File(must_exist(p)?),
            None => Source::Synthetic { count: e.or("synth.count", 20usize)?, extent: e.or(extent_key, default_extent)? },
        };
        let noise = held_out_noise(&mut e, problem, ct_angles, ct_pixel_size)?;
        let real = match (e.path("data.real_clean", &base), e.path("data.real_noisy", &base)) {
            (Some(c), Some(n)) => RealSource::Pairs { clean: must_exist(c)?, noisy: must_exist(n)? },
            (Some(c), None) => RealSource::HeldOut { clean: Source::File(must_exist(c)?), noise },
            (None, Some(_)) => return Err(Error::Config("`data.real_noisy` needs `data.real_clean`".into())),
            (None, None) => RealSource::HeldOut {
                clean: Source::Synthetic { count: e.or("real.records", 8usize)?, extent: e.or("real.extent", default_extent)? },
                noise,
            },
        };
        let real_count = e.or("real.count", 160usize)?;

        let (size_key, stride_key, real_key) = if signal { ("window.size", "window.stride", "window.real_stride") } else { ("patch.size", "patch.stride", "patch.real_stride") };
        let size = e.or(size_key, if signal { 30 } else { 32 })?;
        let stride = e.or(stride_key, if signal { 1 } else { 16 })?;
        let real_stride = e.or(real_key, size)?;
        let tiling = Tiling { size: e.positive(size_key, size)?, stride: e.positive(stride_key, stride)?, real_stride: e.positive(real_key, real_stride)? };

        let tasks = task_templates(&mut e, problem, ct_angles, ct_pixel_size)?;

        let net_kind: String = e.or("net.kind", if signal { "ecg_autoencoder".to_string() } else { "conv".to_string() })?;
        let network = match net_kind.as_str() {
            "ecg_autoencoder" => build_ecg_autoencoder(),
            "autoencoder" => build_autoencoder(tiling.size, e.require("net.hidden")?, e.require("net.latent")?)?,
            "conv" => build_conv_denoiser(e.or("net.depth", 5usize)?, e.or("net.width", 16usize)?, e.or("net.residual", Flag(true))?.0)?,
            other => return Err(Error::Config(format!("unknown net.kind `{}` (ecg_autoencoder, autoencoder, conv)", other))),
        };
        if signal != network.dense_extent().is_some() {
            return Err(Error::Config(format!("net.kind `{}` does not fit problem {}", net_kind, problem)));
        }
        if let Some(extent) = network.dense_extent() {
            if extent != tiling.size {
                return Err(Error::Config(format!("network width {} differs from window.size {}", extent, tiling.size)));
            }
        }

        let inner = loop_config(&mut e, "inner", None)?;
        let meta = MetaSchedule {
            n: e.or("meta.tasks_per_iteration", 5usize)?,
            epsilon: e.or("meta.epsilon", 0.1)?,
            outer_epochs: e.or("meta.outer_epochs", 10usize)?,
            k: e.or("meta.k", k)?,
            inner,
        };
        e.positive("meta.tasks_per_iteration", meta.n)?;
        e.positive("meta.k", meta.k)?;
        if !(meta.epsilon >= 0.0) {
            return Err(Error::Config("`meta.epsilon` must be >= 0".into()));
        }
        let supervised = loop_config(&mut e, "supervised", Some(inner))?;
        let finetune = loop_config(&mut e, "finetune", Some(inner))?;

        let kshot_ks = e.list::<usize>("kshot.ks")?.unwrap_or_else(|| vec![1, 3, 5, 7, 10]);
        if kshot_ks.is_empty() || kshot_ks.contains(&0) {
            return Err(Error::Config("`kshot.ks` must list positive counts".into()));
        }
        let kshot_method = e.or("kshot.method", Method::Meta)?;
        let checkpoint = e.path("model.checkpoint", &base);

        e.finish()?;
        Ok(ExperimentConfig {
            problem,
            base_seed,
            seeds,
            k,
            metric,
            out,
            task_counts,
            methods,
            workers,
            clean,
            real,
            real_count,
            tiling,
            tasks,
            network,
            meta,
            supervised,
            finetune,
            kshot_ks,
            kshot_method,
            checkpoint,
            ct_angles,
            ct_pixel_size,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "problem = signal1d\ntask.1.kind = gaussian\ntask.1.sigma = U(0,0.3)\n";

    #[test]
    fn defaults() {
        let c = ExperimentConfig::parse(MINIMAL, Path::new("/tmp/x.cfg")).unwrap();
        assert_eq!(c.metric, Metric::Snr);
        assert_eq!(c.seeds, vec![0]);
        assert_eq!(c.network.param_count(), 107_455);
        assert_eq!(c.out, PathBuf::from("/tmp/results"));
    }

    #[test]
    fn field_level_errors() {
        let err = ExperimentConfig::parse(&format!("{MINIMAL}meta.epsilon = fast\n"), Path::new("c.cfg")).unwrap_err().to_string();
        assert!(err.contains("line 4") && err.contains("meta.epsilon"), "{err}");
        let err = ExperimentConfig::parse(&format!("{MINIMAL}bogus = 1\n"), Path::new("c.cfg")).unwrap_err().to_string();
        assert!(err.contains("unknown key `bogus`"), "{err}");
        assert!(ExperimentConfig::parse("task.1.kind = gaussian\n", Path::new("c.cfg")).is_err());
    }

    #[test]
    fn seeds_and_lists() {
        let c = ExperimentConfig::parse(&format!("{MINIMAL}seeds = 3\ntasks = 50, 100\nmethods = meta,transfer\n"), Path::new("c.cfg")).unwrap();
        assert_eq!(c.seeds, vec![0, 1, 2]);
        assert_eq!(c.task_counts, vec![50, 100]);
        assert_eq!(c.methods, vec![Method::Meta, Method::Transfer]);
        let c = ExperimentConfig::parse(&format!("{MINIMAL}seeds = 4,9\n"), Path::new("c.cfg")).unwrap();
        assert_eq!(c.seeds, vec![4, 9]);
    }
}
