//! Task distribution, k-shot sets, windowing/patching and the real split.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{bail, Error, Result};
use crate::math;
use crate::noise::{NoiseModel, NoiseTask};
use crate::rng::{RngStream, StreamKey};
use crate::tensor::{PairedSet, Tensor};

/// Prior over one noise parameter.
#[derive(Debug, Clone, PartialEq)]
pub enum Prior {
    Fixed(f64),
    /// Uniform choice from a finite set.
    Set(Vec<f64>),
    /// Uniform on `[a, b]`.
    Uniform(f64, f64),
}

impl Prior {
    pub fn validate(&self) -> Result<()> {
        match self {
            Prior::Fixed(v) if !v.is_finite() => bail!(Argument, "fixed prior value must be finite"),
            Prior::Set(vs) if vs.is_empty() => bail!(Argument, "set prior must not be empty"),
            Prior::Set(vs) if vs.iter().any(|v| !v.is_finite()) => bail!(Argument, "set prior values must be finite"),
            Prior::Uniform(a, b) if !(a <= b) || !a.is_finite() || !b.is_finite() => {
                bail!(Argument, "uniform prior needs finite a <= b, got U({}, {})", a, b)
            }
            _ => Ok(()),
        }
    }

    pub fn sample(&self, stream: &mut RngStream) -> f64 {
        match self {
            Prior::Fixed(v) => *v,
            Prior::Set(vs) => vs[stream.below(vs.len())],
            Prior::Uniform(a, b) => stream.uniform_in(*a, *b),
        }
    }

    pub fn min(&self) -> f64 {
        match self {
            Prior::Fixed(v) => *v,
            Prior::Set(vs) => vs.iter().cloned().fold(f64::INFINITY, f64::min),
            Prior::Uniform(a, _) => *a,
        }
    }
}

impl fmt::Display for Prior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Prior::Fixed(v) => write!(f, "{}", v),
            Prior::Set(vs) => {
                f.write_str("{")?;
                for (i, v) in vs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{}", v)?;
                }
                f.write_str("}")
            }
            Prior::Uniform(a, b) => write!(f, "U({},{})", a, b),
        }
    }
}

impl FromStr for Prior {
    type Err = Error;

    /// `0.3`, `{1e4,3e4}` or `U(0,0.3)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let num = |t: &str| -> Result<f64> { t.trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad number `{}` in prior `{}`", t.trim(), s))) };
        let prior = if let Some(inner) = s.strip_prefix('{').and_then(|r| r.strip_suffix('}')) {
            Prior::Set(inner.split(',').map(num).collect::<Result<Vec<f64>>>()?)
        } else if let Some(inner) = s.strip_prefix("U(").and_then(|r| r.strip_suffix(')')) {
            let (a, b) = inner.split_once(',').ok_or_else(|| Error::Parse(format!("uniform prior `{}` needs two bounds", s)))?;
            Prior::Uniform(num(a)?, num(b)?)
        } else {
            Prior::Fixed(num(s)?)
        };
        prior.validate().map_err(|e| Error::Parse(format!("{}", e)))?;
        Ok(prior)
    }
}

/// How the spread of a Gaussian template is specified.
#[derive(Debug, Clone, PartialEq)]
pub enum Spread {
    Sigma(Prior),
    Variance(Prior),
}

/// A noise family with priors over its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum TaskTemplate {
    Gaussian { image: bool, mean: Prior, spread: Spread },
    PoissonImage { peak: Prior },
    PoissonSinogram { blank_scan: Prior, readout_sigma: Prior, n_angles: usize, pixel_size: f64 },
    /// A single fully specified model.
    Fixed(NoiseModel),
}

impl TaskTemplate {
    fn validate(&self) -> Result<()> {
        match self {
            TaskTemplate::Gaussian { mean, spread, .. } => {
                mean.validate()?;
                let p = match spread {
                    Spread::Sigma(p) | Spread::Variance(p) => p,
                };
                p.validate()?;
                if p.min() < 0.0 {
                    bail!(Argument, "gaussian spread prior allows negative values");
                }
            }
            TaskTemplate::PoissonImage { peak } => {
                peak.validate()?;
                if !(peak.min() > 0.0) {
                    bail!(Argument, "poisson peak prior must be positive");
                }
            }
            TaskTemplate::PoissonSinogram { blank_scan, readout_sigma, .. } => {
                blank_scan.validate()?;
                readout_sigma.validate()?;
                if !(blank_scan.min() > 0.0) || readout_sigma.min() < 0.0 {
                    bail!(Argument, "sinogram priors need b > 0 and read-out sigma >= 0");
                }
            }
            TaskTemplate::Fixed(model) => model.validate()?,
        }
        Ok(())
    }

    fn draw(&self, stream: &mut RngStream) -> NoiseModel {
        match self {
            TaskTemplate::Gaussian { image, mean, spread } => {
                let mean = mean.sample(stream);
                let sigma = match spread {
                    Spread::Sigma(p) => p.sample(stream),
                    Spread::Variance(p) => math::sqrt(p.sample(stream)),
                };
                if *image {
                    NoiseModel::Gaussian2d { mean, sigma }
                } else {
                    NoiseModel::Gaussian1d { mean, sigma }
                }
            }
            TaskTemplate::PoissonImage { peak } => NoiseModel::PoissonImage { peak: peak.sample(stream) },
            TaskTemplate::PoissonSinogram { blank_scan, readout_sigma, n_angles, pixel_size } => NoiseModel::PoissonSinogram {
                blank_scan: blank_scan.sample(stream),
                readout_sigma: readout_sigma.sample(stream),
                n_angles: *n_angles,
                pixel_size: *pixel_size,
            },
            TaskTemplate::Fixed(model) => *model,
        }
    }
}

/// `p(tau)`: weighted noise templates.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TaskDistribution {
    templates: Vec<(TaskTemplate, f64)>,
}

impl TaskDistribution {
    pub fn new(templates: Vec<(TaskTemplate, f64)>) -> Result<Self> {
        for (t, w) in &templates {
            if !(*w > 0.0) || !w.is_finite() {
                bail!(Argument, "template weights must be positive, got {}", w);
            }
            t.validate()?;
        }
        Ok(TaskDistribution { templates })
    }

    /// Equal weights.
    pub fn uniform(templates: Vec<TaskTemplate>) -> Result<Self> {
        Self::new(templates.into_iter().map(|t| (t, 1.0)).collect())
    }

    /// A finite set of fully specified tasks, chosen uniformly.
    pub fn finite(models: Vec<NoiseModel>) -> Result<Self> {
        Self::uniform(models.into_iter().map(TaskTemplate::Fixed).collect())
    }

    pub fn templates(&self) -> &[(TaskTemplate, f64)] {
        &self.templates
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }
}

/// Picks a template by weight, draws its priors and a fresh task seed.
pub fn sample_task(dist: &TaskDistribution, stream: &mut RngStream) -> Result<NoiseTask> {
    if dist.is_empty() {
        bail!(Argument, "cannot sample from an empty task distribution");
    }
    let total: f64 = dist.templates.iter().map(|(_, w)| w).sum();
    let mut pick = stream.uniform() * total;
    let mut chosen = &dist.templates[dist.templates.len() - 1].0;
    for (t, w) in &dist.templates {
        if pick < *w {
            chosen = t;
            break;
        }
        pick -= w;
    }
    let model = chosen.draw(stream);
    NoiseTask::new(model, stream.next_seed())
}

/// Draws `count` tasks once and freezes them into a finite distribution.
pub fn draw_task_set(dist: &TaskDistribution, count: usize, stream: &RngStream) -> Result<TaskDistribution> {
    if count == 0 {
        bail!(Argument, "task set size must be at least 1");
    }
    let models = (0..count)
        .map(|i| sample_task(dist, &mut stream.derive(i as u64)).map(|t| t.model))
        .collect::<Result<Vec<_>>>()?;
    TaskDistribution::finite(models)
}

/// `k` clean samples, their corrupted versions and the task used.
#[derive(Debug, Clone, PartialEq)]
pub struct KShotSet {
    data: PairedSet,
    pool_indices: Vec<usize>,
    task: NoiseTask,
    stream: StreamKey,
}

impl KShotSet {
    pub fn clean(&self) -> &[Tensor] {
        self.data.clean()
    }

    pub fn noisy(&self) -> &[Tensor] {
        self.data.noisy()
    }

    pub fn task(&self) -> &NoiseTask {
        &self.task
    }

    pub fn pool_indices(&self) -> &[usize] {
        &self.pool_indices
    }

    /// Key of the stream that chose the clean samples.
    pub fn stream_key(&self) -> StreamKey {
        self.stream
    }

    pub fn pairs(&self) -> &PairedSet {
        &self.data
    }

    pub fn into_pairs(self) -> PairedSet {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Re-applies the recorded task to every clean sample and checks the
    /// noisy samples bit for bit.
    pub fn verify(&self) -> Result<bool> {
        for (i, (x, y)) in self.data.pairs().enumerate() {
            let again = self.task.apply(y, i as u64)?;
            if again.data().iter().zip(x.data()).any(|(a, b)| a.to_bits() != b.to_bits()) {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// First `k` entries of a seeded Fisher-Yates pass over `0..n`.
fn choose_without_replacement(n: usize, k: usize, stream: &mut RngStream) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = i + stream.below(n - i);
        idx.swap(i, j);
    }
    idx.truncate(k);
    idx
}

/// Draws `k` clean samples without replacement and corrupts sample `i`
/// with the task's sub-stream `i`.
pub fn build_kshot_set(clean_pool: &[Tensor], task: &NoiseTask, k: usize, stream: &mut RngStream) -> Result<KShotSet> {
    if k == 0 {
        bail!(Argument, "k must be at least 1");
    }
    if k > clean_pool.len() {
        bail!(Argument, "cannot draw {} samples from a pool of {}", k, clean_pool.len());
    }
    let key = stream.key();
    let pool_indices = choose_without_replacement(clean_pool.len(), k, stream);
    let clean: Vec<Tensor> = pool_indices.iter().map(|&i| clean_pool[i].clone()).collect();
    let noisy = clean.iter().enumerate().map(|(i, y)| task.apply(y, i as u64)).collect::<Result<Vec<_>>>()?;
    Ok(KShotSet { data: PairedSet::new(noisy, clean)?, pool_indices, task: *task, stream: key })
}

/// Length-`size` windows of a 1-D signal at the given stride.
pub fn window_signal(signal: &Tensor, size: usize, stride: usize) -> Result<Vec<Tensor>> {
    if signal.rank() != 1 {
        bail!(Dimension, "windowing expects a 1-D signal, got shape {:?}", signal.shape());
    }
    if size == 0 || stride == 0 {
        bail!(Argument, "window size and stride must be positive");
    }
    let len = signal.len();
    if len < size {
        bail!(Argument, "signal of length {} is shorter than the window {}", len, size);
    }
    let count = (len - size) / stride + 1;
    Ok((0..count)
        .map(|i| Tensor::from_parts_unchecked(alloc::vec![size], signal.data()[i * stride..i * stride + size].to_vec()))
        .collect())
}

/// Square patches on a regular grid; partial patches at the right and
/// bottom edges are dropped.
pub fn patchify(image: &Tensor, patch: usize, stride: usize) -> Result<Vec<Tensor>> {
    let (h, w) = match *image.shape() {
        [h, w] => (h, w),
        _ => bail!(Dimension, "patchify expects a 2-D image, got shape {:?}", image.shape()),
    };
    if patch == 0 || stride == 0 {
        bail!(Argument, "patch size and stride must be positive");
    }
    if h < patch || w < patch {
        bail!(Argument, "image {}x{} is smaller than the patch {}", h, w, patch);
    }
    let mut out = Vec::new();
    for r in (0..=h - patch).step_by(stride) {
        for c in (0..=w - patch).step_by(stride) {
            let mut data = Vec::with_capacity(patch * patch);
            for rr in r..r + patch {
                data.extend_from_slice(&image.data()[rr * w + c..rr * w + c + patch]);
            }
            out.push(Tensor::from_parts_unchecked(alloc::vec![patch, patch], data));
        }
    }
    Ok(out)
}

/// Real-noise pairs split into `k` fine-tuning pairs and a disjoint test set.
#[derive(Debug, Clone, PartialEq)]
pub struct RealSplit {
    pub finetune: PairedSet,
    pub test: PairedSet,
    pub finetune_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub stream: StreamKey,
}

/// Uniformly samples `k` fine-tuning pairs; the rest form the test set in
/// their original order.
pub fn split_real(pairs: &PairedSet, k: usize, stream: &mut RngStream) -> Result<RealSplit> {
    if k == 0 {
        bail!(Argument, "k must be at least 1");
    }
    if pairs.len() < k + 1 {
        bail!(Argument, "need at least {} real pairs for a {}-shot split, have {}", k + 1, k, pairs.len());
    }
    let key = stream.key();
    let finetune_indices = choose_without_replacement(pairs.len(), k, stream);
    let mut used = alloc::vec![false; pairs.len()];
    for &i in &finetune_indices {
        used[i] = true;
    }
    let test_indices: Vec<usize> = (0..pairs.len()).filter(|&i| !used[i]).collect();
    Ok(RealSplit {
        finetune: pairs.select(&finetune_indices),
        test: pairs.select(&test_indices),
        finetune_indices,
        test_indices,
        stream: key,
    })
}

/// Additive sinusoidal interference with a random phase per sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hum {
    pub amplitude: f64,
    /// Period in samples along the last axis.
    pub period: f64,
}

/// A structured corruption kept out of the training priors, standing in
/// for "real" noise: noise models applied in order, then optional hum.
#[derive(Debug, Clone, PartialEq)]
pub struct HeldOutNoise {
    pub stages: Vec<NoiseModel>,
    pub hum: Option<Hum>,
}

impl HeldOutNoise {
    pub fn apply(&self, y: &Tensor, stream: &mut RngStream) -> Result<Tensor> {
        let mut x = y.clone();
        for (i, stage) in self.stages.iter().enumerate() {
            x = stage.apply(&x, &mut stream.derive(i as u64))?;
        }
        if let Some(hum) = self.hum {
            if !(hum.period > 0.0) {
                bail!(Argument, "hum period must be positive");
            }
            let phase = stream.derive(u64::MAX).uniform_in(0.0, 2.0 * core::f64::consts::PI);
            let last = *x.shape().last().expect("non-empty shape");
            let w = 2.0 * core::f64::consts::PI / hum.period;
            let data = x
                .data()
                .iter()
                .enumerate()
                .map(|(i, v)| v + hum.amplitude * math::sin(w * (i % last) as f64 + phase))
                .collect();
            x = Tensor::new(x.shape().to_vec(), data)?;
        }
        Ok(x)
    }

    /// Pairs `(corrupt(y_i), y_i)` with per-sample sub-streams.
    pub fn make_pairs(&self, clean: &[Tensor], stream: &RngStream) -> Result<PairedSet> {
        let noisy = clean
            .iter()
            .enumerate()
            .map(|(i, y)| self.apply(y, &mut stream.derive(i as u64)))
            .collect::<Result<Vec<_>>>()?;
        PairedSet::new(noisy, clean.to_vec())
    }
}

impl fmt::Display for HeldOutNoise {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts: Vec<String> = self.stages.iter().map(|s| format!("{}", s)).collect();
        if let Some(h) = self.hum {
            parts.push(format!("hum(amplitude={}, period={})", h.amplitude, h.period));
        }
        f.write_str(&parts.join(" + "))
    }
}
