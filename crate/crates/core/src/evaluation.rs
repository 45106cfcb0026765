//! Metrics, the one-tailed paired t-test, k-shot sweeps and method
//! comparisons.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{bail, Error, Result};
use crate::exec::Executor;
use crate::math;
use crate::nets::{init_params, DenoiserModel, NetworkSpec};
use crate::optim::InnerLoopConfig;
use crate::rng::{RngStream, StreamKey};
use crate::tasks::{draw_task_set, split_real, RealSplit, TaskDistribution};
use crate::tensor::{PairedSet, Tensor};
use crate::training::{fine_tune, meta_train, train_supervised, transfer_learn, MetaConfig, SupervisedConfig};

/// Returned for a zero residual; written as "exact" in reports.
pub const EXACT: f64 = f64::INFINITY;

fn residual_energy(x_hat: &Tensor, y: &Tensor) -> Result<f64> {
    x_hat.check_same_shape(y, "metric")?;
    Ok(x_hat.data().iter().zip(y.data()).map(|(a, b)| (a - b) * (a - b)).sum())
}

/// `10 log10(max_val^2 / mse)` in dB.
pub fn psnr(x_hat: &Tensor, y: &Tensor, max_val: f64) -> Result<f64> {
    if !(max_val > 0.0) || !max_val.is_finite() {
        bail!(Argument, "psnr max value must be positive, got {}", max_val);
    }
    let mse = residual_energy(x_hat, y)? / y.len() as f64;
    if mse == 0.0 {
        return Ok(EXACT);
    }
    Ok(10.0 * math::log10(max_val * max_val / mse))
}

/// `10 log10(sum y^2 / sum (x_hat - y)^2)` in dB.
pub fn snr(x_hat: &Tensor, y: &Tensor) -> Result<f64> {
    let residual = residual_energy(x_hat, y)?;
    let signal: f64 = y.data().iter().map(|v| v * v).sum();
    if signal == 0.0 {
        bail!(Argument, "snr reference has zero energy");
    }
    if residual == 0.0 {
        return Ok(EXACT);
    }
    Ok(10.0 * math::log10(signal / residual))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Metric {
    Psnr { max_val: f64 },
    Snr,
}

impl Metric {
    pub fn eval(&self, x_hat: &Tensor, y: &Tensor) -> Result<f64> {
        match *self {
            Metric::Psnr { max_val } => psnr(x_hat, y, max_val),
            Metric::Snr => snr(x_hat, y),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Metric::Psnr { .. } => "PSNR",
            Metric::Snr => "SNR",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Psnr { max_val } => write!(f, "psnr({})", max_val),
            Metric::Snr => f.write_str("snr"),
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    /// `snr`, `psnr` (max 1) or `psnr(255)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "snr" => return Ok(Metric::Snr),
            "psnr" => return Ok(Metric::Psnr { max_val: 1.0 }),
            _ => {}
        }
        let inner = s
            .strip_prefix("psnr(")
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(|| Error::Parse(alloc::format!("unknown metric `{}`", s)))?;
        let max_val: f64 = inner.trim().parse().map_err(|_| Error::Parse(alloc::format!("bad psnr max `{}`", inner)))?;
        if !(max_val > 0.0) {
            bail!(Parse, "psnr max must be positive, got {}", max_val);
        }
        Ok(Metric::Psnr { max_val })
    }
}

/// Per-sample metric values and their aggregate. When any value is the
/// exact sentinel the mean is the sentinel and the spread is reported as 0.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricResult {
    pub values: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator; 0 for one value).
    pub sd: f64,
    pub count: usize,
}

impl MetricResult {
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            bail!(Argument, "a metric result needs at least one value");
        }
        let count = values.len();
        let (mean, sd) = mean_sd(&values);
        Ok(MetricResult { values, mean, sd, count })
    }
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.iter().any(|v| v.is_infinite()) {
        return (EXACT, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, math::sqrt(ss / (n - 1.0)))
}

/// Alternative hypothesis: `mean(a) > mean(b)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTestResult {
    pub t: f64,
    pub df: usize,
    pub p: f64,
    pub mean_diff: f64,
    /// Zero spread in the differences; `p` is then 0 or 1 by sign.
    pub degenerate: bool,
}

impl TTestResult {
    pub fn favours_a(&self) -> bool {
        self.mean_diff > 0.0
    }
}

pub fn paired_t_test_one_tailed(a: &[f64], b: &[f64]) -> Result<TTestResult> {
    if a.len() != b.len() {
        bail!(Dimension, "paired samples differ in length: {} vs {}", a.len(), b.len());
    }
    if a.len() < 2 {
        bail!(Argument, "a paired t-test needs at least two pairs");
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    if d.iter().any(|v| !v.is_finite()) {
        bail!(Numeric, "paired t-test on non-finite values");
    }
    let n = d.len() as f64;
    let df = d.len() - 1;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    if var == 0.0 {
        if mean == 0.0 {
            bail!(UndefinedStatistic, "all paired differences are zero");
        }
        let (t, p) = if mean > 0.0 { (f64::INFINITY, 0.0) } else { (f64::NEG_INFINITY, 1.0) };
        return Ok(TTestResult { t, df, p, mean_diff: mean, degenerate: true });
    }
    let t = mean / math::sqrt(var / n);
    Ok(TTestResult { t, df, p: student_t_upper_tail(t, df as f64), mean_diff: mean, degenerate: false })
}

/// `P(T > t)` for Student's t with `df` degrees of freedom.
pub fn student_t_upper_tail(t: f64, df: f64) -> f64 {
    let x = df / (df + t * t);
    let half = 0.5 * regularized_incomplete_beta(x, 0.5 * df, 0.5);
    if t >= 0.0 {
        half
    } else {
        1.0 - half
    }
}

/// `I_x(a, b)` by the continued fraction, using the symmetry relation
/// where it converges faster.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = math::lgamma(a + b) - math::lgamma(a) - math::lgamma(b) + a * math::ln(x) + b * math::ln(1.0 - x);
    let front = math::exp(ln_front);
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_fraction(x, a, b) / a
    } else {
        1.0 - front * beta_fraction(1.0 - x, b, a) / b
    }
}

// modified Lentz
fn beta_fraction(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let clamp = |v: f64| if v.abs() < TINY { TINY } else { v };
    let mut c = 1.0;
    let mut d = 1.0 / clamp(1.0 - (a + b) * x / (a + 1.0));
    let mut h = d;
    for m in 1..1000 {
        let m = m as f64;
        let even = m * (b - m) * x / ((a + 2.0 * m - 1.0) * (a + 2.0 * m));
        d = 1.0 / clamp(1.0 + even * d);
        c = clamp(1.0 + even / c);
        h *= d * c;
        let odd = -(a + m) * (a + b + m) * x / ((a + 2.0 * m) * (a + 2.0 * m + 1.0));
        d = 1.0 / clamp(1.0 + odd * d);
        c = clamp(1.0 + odd / c);
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h
}

/// Metric of `model(x)` against `y` for every test pair.
pub fn evaluate_pairs(model: &DenoiserModel, test: &PairedSet, metric: Metric) -> Result<MetricResult> {
    let values = test.pairs().map(|(x, y)| metric.eval(&model.forward(x)?, y)).collect::<Result<Vec<_>>>()?;
    MetricResult::from_values(values)
}

pub fn evaluate_on_test(model: &DenoiserModel, split: &RealSplit, metric: Metric) -> Result<MetricResult> {
    evaluate_pairs(model, &split.test, metric)
}

/// Metric of the noisy inputs themselves.
pub fn initial_noise(test: &PairedSet, metric: Metric) -> Result<MetricResult> {
    let values = test.pairs().map(|(x, y)| metric.eval(x, y)).collect::<Result<Vec<_>>>()?;
    MetricResult::from_values(values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Supervised,
    Transfer,
    Meta,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Supervised, Method::Transfer, Method::Meta];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Supervised => "supervised",
            Method::Transfer => "transfer",
            Method::Meta => "meta",
        }
    }

    /// Label used in tables.
    pub fn title(&self) -> &'static str {
        match self {
            Method::Supervised => "Supervised",
            Method::Transfer => "Transfer",
            Method::Meta => "Meta-denoising",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "supervised" => Ok(Method::Supervised),
            "transfer" => Ok(Method::Transfer),
            "meta" => Ok(Method::Meta),
            other => bail!(Parse, "unknown method `{}`", other),
        }
    }
}

/// Meta-training schedule in terms of passes over the finite task set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetaSchedule {
    pub n: usize,
    pub epsilon: f64,
    pub outer_epochs: usize,
    pub k: usize,
    pub inner: InnerLoopConfig,
}

/// One experimental condition: data, task prior, network and trainers.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub network: NetworkSpec,
    /// Clean samples the synthetic tasks corrupt.
    pub clean_pool: Vec<Tensor>,
    /// Pairs carrying the target noise, split per seed into fine-tune and test.
    pub real_pairs: PairedSet,
    pub prior: TaskDistribution,
    /// Size of the finite task set drawn from the prior per seed.
    pub n_tasks: usize,
    pub metric: Metric,
    pub meta: MetaSchedule,
    pub supervised: InnerLoopConfig,
    pub finetune: InnerLoopConfig,
    pub base_seed: u64,
}

impl Problem {
    /// `ceil(outer_epochs * n_tasks / n)`.
    pub fn outer_iterations(&self) -> usize {
        (self.meta.outer_epochs * self.n_tasks).div_ceil(self.meta.n.max(1))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_tasks == 0 {
            bail!(Argument, "the task set needs at least one task");
        }
        if self.prior.is_empty() {
            bail!(Argument, "the task prior is empty");
        }
        if self.clean_pool.len() < self.meta.k {
            bail!(Argument, "clean pool of {} cannot supply {}-shot sets", self.clean_pool.len(), self.meta.k);
        }
        Ok(())
    }
}

/// Sub-stream record of one seed, shared by every method.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedStreams {
    pub seed: u64,
    pub split: StreamKey,
    pub task_set: StreamKey,
    pub init_seed: u64,
    pub data_seed: u64,
    pub shuffle_seed: u64,
}

impl SeedStreams {
    pub fn derive(base_seed: u64, seed: u64) -> Self {
        let s = RngStream::new(base_seed).derive(seed);
        SeedStreams {
            seed,
            split: s.derive(0).key(),
            task_set: s.derive(1).key(),
            init_seed: s.derive(2).next_seed(),
            data_seed: s.derive(3).next_seed(),
            shuffle_seed: s.derive(4).next_seed(),
        }
    }
}

impl Problem {
    /// The finite task set of one seed.
    pub fn task_set(&self, streams: &SeedStreams) -> Result<TaskDistribution> {
        draw_task_set(&self.prior, self.n_tasks, &RngStream::from_key(streams.task_set))
    }

    /// The shared starting point of every method for one seed.
    pub fn initial_model(&self, streams: &SeedStreams) -> Result<DenoiserModel> {
        DenoiserModel::new(self.network.clone(), init_params(&self.network, streams.init_seed))
    }

    pub fn meta_config(&self, streams: &SeedStreams) -> MetaConfig {
        MetaConfig {
            n: self.meta.n,
            outer_iterations: self.outer_iterations(),
            epsilon: self.meta.epsilon,
            inner: self.meta.inner,
            k: self.meta.k,
            base_seed: streams.data_seed,
        }
    }

    /// Same pairs as meta-training, trained with the supervised schedule.
    pub fn supervised_config(&self, streams: &SeedStreams) -> SupervisedConfig {
        SupervisedConfig::matching(&self.meta_config(streams), self.supervised.with_seed(streams.shuffle_seed))
    }

    pub fn finetune_config(&self, streams: &SeedStreams) -> InnerLoopConfig {
        self.finetune.with_seed(streams.shuffle_seed)
    }

    pub fn split(&self, streams: &SeedStreams, k: usize) -> Result<RealSplit> {
        split_real(&self.real_pairs, k, &mut RngStream::from_key(streams.split))
    }
}

/// A method trained for one seed, before any fine-tuning.
struct Pretrained {
    tasks: TaskDistribution,
    meta: Option<DenoiserModel>,
    supervised: Option<DenoiserModel>,
}

fn pretrain<E: Executor + ?Sized>(problem: &Problem, streams: &SeedStreams, methods: &[Method], exec: &E) -> Result<Pretrained> {
    let tasks = problem.task_set(streams)?;
    let init = problem.initial_model(streams)?;
    let meta = if methods.contains(&Method::Meta) {
        Some(meta_train(&init, &tasks, &problem.clean_pool, &problem.meta_config(streams), exec)?.0)
    } else {
        None
    };
    let supervised = if methods.contains(&Method::Supervised) || methods.contains(&Method::Transfer) {
        Some(train_supervised(&init, &tasks, &problem.clean_pool, &problem.supervised_config(streams))?)
    } else {
        None
    };
    Ok(Pretrained { tasks, meta, supervised })
}

fn final_model(problem: &Problem, pre: &Pretrained, method: Method, split: &RealSplit, streams: &SeedStreams) -> Result<DenoiserModel> {
    let ft = problem.finetune_config(streams);
    let missing = || Error::Argument(alloc::format!("{} was not pretrained", method));
    match method {
        Method::Supervised => pre.supervised.clone().ok_or_else(missing),
        Method::Transfer => {
            let base = pre.supervised.as_ref().ok_or_else(missing)?;
            // pretraining already done; the zero budget skips it here
            let skip = SupervisedConfig { budget: 0, k: problem.meta.k, base_seed: streams.data_seed, inner: problem.supervised };
            Ok(transfer_learn(base, &pre.tasks, &problem.clean_pool, &skip, split, &ft)?.1)
        }
        Method::Meta => fine_tune(pre.meta.as_ref().ok_or_else(missing)?, split, &ft),
    }
}

/// Everything measured for one seed.
struct SeedOutcome {
    streams: SeedStreams,
    initial: MetricResult,
    methods: Vec<(Method, MetricResult)>,
}

fn run_seed<E: Executor + ?Sized>(problem: &Problem, methods: &[Method], k: usize, seed: u64, exec: &E) -> Result<SeedOutcome> {
    let streams = SeedStreams::derive(problem.base_seed, seed);
    let split = problem.split(&streams, k)?;
    let initial = initial_noise(&split.test, problem.metric)?;
    let pre = pretrain(problem, &streams, methods, exec)?;
    let methods = methods
        .iter()
        .map(|&m| Ok((m, evaluate_on_test(&final_model(problem, &pre, m, &split, &streams)?, &split, problem.metric)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SeedOutcome { streams, initial, methods })
}

fn unique(methods: &[Method]) -> Vec<Method> {
    let mut out: Vec<Method> = Vec::new();
    for m in methods {
        if !out.contains(m) {
            out.push(*m);
        }
    }
    out
}

/// Result of one method for one seed of one condition.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedResult {
    pub n_tasks: usize,
    pub k: usize,
    pub seed: u64,
    pub result: MetricResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodRow {
    pub method: Method,
    pub run: SeedResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestRow {
    pub n_tasks: usize,
    pub k: usize,
    pub a: Method,
    pub b: Method,
    pub result: TTestResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub metric: Metric,
    /// Metric of the unprocessed noisy test inputs per seed.
    pub initial: Vec<SeedResult>,
    pub rows: Vec<MethodRow>,
    pub tests: Vec<TestRow>,
    pub streams: Vec<SeedStreams>,
}

impl EvalReport {
    pub fn empty(metric: Metric) -> Self {
        EvalReport { metric, initial: Vec::new(), rows: Vec::new(), tests: Vec::new(), streams: Vec::new() }
    }

    pub fn merge(&mut self, other: EvalReport) {
        self.initial.extend(other.initial);
        self.rows.extend(other.rows);
        self.tests.extend(other.tests);
        self.streams.extend(other.streams);
    }

    /// Distinct `n_tasks` values in first-seen order.
    pub fn conditions(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for r in self.initial.iter().chain(self.rows.iter().map(|r| &r.run)) {
            if !out.contains(&r.n_tasks) {
                out.push(r.n_tasks);
            }
        }
        out
    }

    /// Distinct methods in first-seen order.
    pub fn methods(&self) -> Vec<Method> {
        unique(&self.rows.iter().map(|r| r.method).collect::<Vec<_>>())
    }

    /// Per-sample values of `method` pooled over seeds, in seed order.
    pub fn pooled(&self, method: Method, n_tasks: usize) -> Option<MetricResult> {
        let values: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.method == method && r.run.n_tasks == n_tasks)
            .flat_map(|r| r.run.result.values.iter().copied())
            .collect();
        MetricResult::from_values(values).ok()
    }

    pub fn pooled_initial(&self, n_tasks: usize) -> Option<MetricResult> {
        let values: Vec<f64> = self.initial.iter().filter(|r| r.n_tasks == n_tasks).flat_map(|r| r.result.values.iter().copied()).collect();
        MetricResult::from_values(values).ok()
    }

    pub fn test(&self, a: Method, b: Method, n_tasks: usize) -> Option<&TTestResult> {
        self.tests.iter().find(|t| t.a == a && t.b == b && t.n_tasks == n_tasks).map(|t| &t.result)
    }
}

/// Runs every listed method on each seed with shared splits, task sets,
/// initial parameters and data streams. Meta is tested against every other
/// entry and repeated entries against their first occurrence, on per-test
/// sample metrics pooled over seeds.
pub fn compare_methods<E: Executor + ?Sized>(problem: &Problem, methods: &[Method], k: usize, seeds: &[u64], exec: &E) -> Result<EvalReport> {
    problem.validate()?;
    if seeds.is_empty() {
        bail!(Argument, "comparison needs at least one seed");
    }
    let distinct = unique(methods);
    let outcomes = exec.map(seeds.len(), |i| run_seed(problem, &distinct, k, seeds[i], exec));
    let mut report = EvalReport::empty(problem.metric);
    for outcome in outcomes {
        let o = outcome?;
        let run = |result: MetricResult| SeedResult { n_tasks: problem.n_tasks, k, seed: o.streams.seed, result };
        report.initial.push(run(o.initial.clone()));
        for &m in methods {
            let result = o.methods.iter().find(|(dm, _)| *dm == m).map(|(_, r)| r.clone()).expect("every method ran");
            report.rows.push(MethodRow { method: m, run: run(result) });
        }
        report.streams.push(o.streams);
    }
    for i in 0..methods.len() {
        for j in i + 1..methods.len() {
            let (a, b) = if methods[j] == Method::Meta && methods[i] != Method::Meta { (methods[j], methods[i]) } else { (methods[i], methods[j]) };
            if a != Method::Meta && a != b {
                continue;
            }
            if a == b && methods[..i].contains(&a) {
                continue;
            }
            let va = report.pooled(a, problem.n_tasks).expect("rows present").values;
            let vb = report.pooled(b, problem.n_tasks).expect("rows present").values;
            let result = paired_t_test_one_tailed(&va, &vb)?;
            report.tests.push(TestRow { n_tasks: problem.n_tasks, k, a, b, result });
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KShotRow {
    pub k: usize,
    /// Mean test metric per seed.
    pub seed_means: Vec<f64>,
    pub mean: f64,
    /// Spread of the per-seed means.
    pub sd: f64,
}

/// For each seed the method is pretrained once; each `k` then draws its
/// split from the seed's split stream and fine-tunes.
pub fn kshot_sweep<E: Executor + ?Sized>(problem: &Problem, method: Method, ks: &[usize], seeds: &[u64], exec: &E) -> Result<Vec<KShotRow>> {
    problem.validate()?;
    if ks.is_empty() || seeds.is_empty() {
        bail!(Argument, "a k-shot sweep needs at least one k and one seed");
    }
    let per_seed = exec.map(seeds.len(), |i| -> Result<Vec<f64>> {
        let streams = SeedStreams::derive(problem.base_seed, seeds[i]);
        let pre = pretrain(problem, &streams, &[method], exec)?;
        ks.iter()
            .map(|&k| {
                let split = problem.split(&streams, k)?;
                Ok(evaluate_on_test(&final_model(problem, &pre, method, &split, &streams)?, &split, problem.metric)?.mean)
            })
            .collect()
    });
    let per_seed = per_seed.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(ks
        .iter()
        .enumerate()
        .map(|(j, &k)| {
            let seed_means: Vec<f64> = per_seed.iter().map(|m| m[j]).collect();
            let (mean, sd) = mean_sd(&seed_means);
            KShotRow { k, seed_means, mean, sd }
        })
        .collect())
}

/// `"exact"` for the sentinel, else the value with the given precision.
pub fn format_db(v: f64, precision: usize) -> String {
    if v == EXACT {
        "exact".to_string()
    } else {
        alloc::format!("{:.*}", precision, v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn v(xs: &[f64]) -> Tensor {
        Tensor::vector(xs.to_vec()).unwrap()
    }

    #[test]
    fn psnr_cases() {
        let y = v(&[0.1, 0.5, 0.9]);
        assert_eq!(psnr(&y, &y, 1.0).unwrap(), EXACT);
        let x = v(&[5.0, 5.0]);
        let z = v(&[0.0, 0.0]);
        assert!((psnr(&x, &z, 255.0).unwrap() - 34.151).abs() < 1e-3);
        let x2 = v(&[0.3, 0.2, 0.8]);
        let c = 7.5;
        let scaled = psnr(&x2.map(|a| a * c).unwrap(), &y.map(|a| a * c).unwrap(), c).unwrap();
        assert!((scaled - psnr(&x2, &y, 1.0).unwrap()).abs() < 1e-12);
        assert!(psnr(&v(&[1.0]), &y, 1.0).is_err());
    }

    #[test]
    fn snr_cases() {
        let y = v(&[3.0, 4.0]);
        assert_eq!(snr(&v(&[6.0, 8.0]), &y).unwrap(), 0.0);
        assert_eq!(snr(&y, &y).unwrap(), EXACT);
        let y2 = v(&[0.3, -1.7, 2.2]);
        assert!(snr(&y2.map(|a| 2.0 * a).unwrap(), &y2).unwrap().abs() < 1e-12);
        assert!(matches!(snr(&y, &v(&[0.0, 0.0])), Err(Error::Argument(_))));
    }

    #[test]
    fn psnr_decreases_with_mse() {
        let y = v(&[0.0; 4]);
        let mut last = f64::INFINITY;
        for e in [0.01, 0.02, 0.1, 0.5] {
            let p = psnr(&v(&[e; 4]), &y, 1.0).unwrap();
            assert!(p < last);
            last = p;
        }
    }

    #[test]
    fn t_test_example() {
        let r = paired_t_test_one_tailed(&[1.0, 2.0, 3.0], &[0.0, 0.0, 0.0]).unwrap();
        assert!((r.t - 3.4641).abs() < 1e-4);
        assert_eq!(r.df, 2);
        assert!((r.p - 0.0371).abs() < 1e-3);
        let flipped = paired_t_test_one_tailed(&[0.0, 0.0, 0.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!((flipped.p - (1.0 - r.p)).abs() < 1e-12);
        assert!(matches!(paired_t_test_one_tailed(&[1.0, 2.0], &[1.0, 2.0]), Err(Error::UndefinedStatistic(_))));
        let deg = paired_t_test_one_tailed(&[2.0, 3.0], &[1.0, 2.0]).unwrap();
        assert!(deg.degenerate && deg.p == 0.0);
        let shifted = paired_t_test_one_tailed(&[101.0, 102.5, 103.0], &[100.0, 100.0, 100.5]).unwrap();
        let base = paired_t_test_one_tailed(&[1.0, 2.5, 3.0], &[0.0, 0.0, 0.5]).unwrap();
        assert!((shifted.t - base.t).abs() < 1e-9);
    }

    #[test]
    fn incomplete_beta_known_values() {
        // I_x(1, 1) = x; I_x(a, 1) = x^a
        assert!((regularized_incomplete_beta(0.3, 1.0, 1.0) - 0.3).abs() < 1e-14);
        assert!((regularized_incomplete_beta(0.6, 3.0, 1.0) - 0.216).abs() < 1e-14);
        // t with 1 df is Cauchy: P(T > 1) = 1/4
        assert!((student_t_upper_tail(1.0, 1.0) - 0.25).abs() < 1e-12);
        assert_eq!(student_t_upper_tail(0.0, 7.0), 0.5);
    }

    #[test]
    fn metric_result_aggregates() {
        let r = MetricResult::from_values(vec![1.0, 2.0, 6.0]).unwrap();
        assert_eq!(r.mean, 3.0);
        assert!((r.sd - math::sqrt(7.0)).abs() < 1e-12);
        assert!(MetricResult::from_values(vec![]).is_err());
        assert_eq!(MetricResult::from_values(vec![EXACT, 3.0]).unwrap().mean, EXACT);
        assert_eq!(format_db(EXACT, 2), "exact");
        assert_eq!(format_db(2.345, 2), "2.35");
    }

    #[test]
    fn metric_parsing() {
        assert_eq!("snr".parse::<Metric>().unwrap(), Metric::Snr);
        assert_eq!("psnr".parse::<Metric>().unwrap(), Metric::Psnr { max_val: 1.0 });
        assert_eq!("psnr(255)".parse::<Metric>().unwrap(), Metric::Psnr { max_val: 255.0 });
        let m = Metric::Psnr { max_val: 255.0 };
        assert_eq!(m.to_string().parse::<Metric>().unwrap(), m);
        assert!("ssim".parse::<Metric>().is_err());
        assert_eq!("meta".parse::<Method>().unwrap(), Method::Meta);
    }
}
