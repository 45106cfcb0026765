//! Supervised, transfer and Reptile meta-denoising trainers.

use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::exec::Executor;
use crate::math;
use crate::nets::DenoiserModel;
use crate::noise::NoiseTask;
use crate::optim::{run_inner_loop, run_inner_loop_with_stats, InnerLoopConfig};
use crate::rng::RngStream;
use crate::tasks::{build_kshot_set, sample_task, KShotSet, RealSplit, TaskDistribution};
use crate::tensor::{PairedSet, ParamVector, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetaConfig {
    /// Tasks per outer iteration.
    pub n: usize,
    pub outer_iterations: usize,
    pub epsilon: f64,
    pub inner: InnerLoopConfig,
    /// Shots per task.
    pub k: usize,
    pub base_seed: u64,
}

impl MetaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            bail!(Argument, "meta-training needs at least one task per iteration");
        }
        if self.k == 0 {
            bail!(Argument, "meta-training needs k >= 1");
        }
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            bail!(Argument, "outer step size must be finite and >= 0, got {}", self.epsilon);
        }
        self.inner.validate()
    }

    /// Samples seen by one full meta-training run, each for `inner.epochs`
    /// passes.
    pub fn sample_budget(&self) -> usize {
        self.outer_iterations * self.n * self.k
    }
}

/// Per outer iteration: mean final-epoch inner loss, `|mean(theta' - theta)|`
/// and seconds since the start when the executor has a clock.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub inner_loss: Vec<f64>,
    pub displacement: Vec<f64>,
    pub wall_seconds: Vec<Option<f64>>,
}

impl TrainLog {
    pub fn len(&self) -> usize {
        self.inner_loss.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inner_loss.is_empty()
    }
}

/// Mean of `theta'_i - theta` per coordinate. The differences are summed in
/// sorted order so any permutation of the list gives the same bits.
fn mean_displacement(theta: &ParamVector, adapted: &[ParamVector]) -> Result<Vec<f64>> {
    if adapted.is_empty() {
        bail!(Argument, "outer update needs at least one adapted parameter vector");
    }
    for a in adapted {
        theta.check_layout(a)?;
    }
    let n = adapted.len() as f64;
    let mut diffs = Vec::with_capacity(adapted.len());
    Ok(theta
        .values()
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            diffs.clear();
            diffs.extend(adapted.iter().map(|a| a.values()[j] - t));
            diffs.sort_unstable_by(f64::total_cmp);
            diffs.iter().sum::<f64>() / n
        })
        .collect())
}

/// `theta + epsilon * mean(theta'_i - theta)`. With one adapted vector and
/// `epsilon == 1` the adapted vector is returned exactly.
pub fn reptile_outer_update(theta: &ParamVector, adapted: &[ParamVector], epsilon: f64) -> Result<ParamVector> {
    let mean = mean_displacement(theta, adapted)?;
    if epsilon == 1.0 && adapted.len() == 1 {
        return Ok(adapted[0].clone());
    }
    let values = theta.values().iter().zip(&mean).map(|(t, d)| t + epsilon * d).collect();
    theta.with_values(values)
}

/// Everything drawn for the `index`-th task of a run: the task, its k-shot
/// set and the inner-loop shuffle seed. Iteration `t`, slot `i` uses index
/// `t * n + i`.
pub fn task_draw(dist: &TaskDistribution, clean_pool: &[Tensor], k: usize, base_seed: u64, index: u64) -> Result<(NoiseTask, KShotSet, u64)> {
    let s = RngStream::new(base_seed).derive(index);
    let task = sample_task(dist, &mut s.derive(0))?;
    let set = build_kshot_set(clean_pool, &task, k, &mut s.derive(1))?;
    let shuffle_seed = s.derive(2).next_seed();
    Ok((task, set, shuffle_seed))
}

/// Reptile meta-training. The `n` inner loops of an iteration run through
/// `exec` from a shared snapshot; the result does not depend on the
/// executor.
pub fn meta_train<E: Executor + ?Sized>(
    model: &DenoiserModel,
    dist: &TaskDistribution,
    clean_pool: &[Tensor],
    cfg: &MetaConfig,
    exec: &E,
) -> Result<(DenoiserModel, TrainLog)> {
    cfg.validate()?;
    if dist.is_empty() {
        bail!(Argument, "meta-training needs a non-empty task distribution");
    }
    if clean_pool.len() < cfg.k {
        bail!(Argument, "clean pool of {} cannot supply {}-shot sets", clean_pool.len(), cfg.k);
    }
    let start = exec.seconds();
    let mut current = model.clone();
    let mut log = TrainLog::default();
    for t in 0..cfg.outer_iterations {
        let snapshot = &current;
        let results = exec.map(cfg.n, |i| {
            let index = (t * cfg.n + i) as u64;
            let (_, set, seed) = task_draw(dist, clean_pool, cfg.k, cfg.base_seed, index)?;
            run_inner_loop_with_stats(snapshot, set.pairs(), &cfg.inner.with_seed(seed))
        });
        let mut adapted = Vec::with_capacity(cfg.n);
        let mut loss = 0.0;
        for r in results {
            let (theta, stats) = r?;
            loss += stats.final_epoch_loss;
            adapted.push(theta);
        }
        let theta = current.get_params();
        let mean = mean_displacement(theta, &adapted)?;
        let next = reptile_outer_update(theta, &adapted, cfg.epsilon)?;
        if !next.all_finite() {
            bail!(Numeric, "meta-training diverged at outer iteration {}", t);
        }
        current.set_params(next)?;
        log.inner_loss.push(loss / cfg.n as f64);
        log.displacement.push(math::sqrt(mean.iter().map(|d| d * d).sum()));
        log.wall_seconds.push(match (start, exec.seconds()) {
            (Some(a), Some(b)) => Some(b - a),
            _ => None,
        });
    }
    Ok((current, log))
}

/// Supervised pretraining data and schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupervisedConfig {
    /// Number of synthetic training pairs.
    pub budget: usize,
    /// Pairs drawn per task; the pool is built from the same per-index
    /// draws as meta-training with this `k`.
    pub k: usize,
    pub base_seed: u64,
    pub inner: InnerLoopConfig,
}

impl SupervisedConfig {
    /// Matches a meta-training run sample for sample.
    pub fn matching(meta: &MetaConfig, inner: InnerLoopConfig) -> Self {
        SupervisedConfig { budget: meta.sample_budget(), k: meta.k, base_seed: meta.base_seed, inner }
    }
}

/// The pooled synthetic set: k-shot draws for indices `0, 1, ...` until
/// `budget` pairs are collected.
pub fn supervised_pool(dist: &TaskDistribution, clean_pool: &[Tensor], cfg: &SupervisedConfig) -> Result<PairedSet> {
    if cfg.k == 0 {
        bail!(Argument, "supervised pool needs k >= 1");
    }
    let mut pool = PairedSet::default();
    let mut index = 0u64;
    while pool.len() < cfg.budget {
        let (_, set, _) = task_draw(dist, clean_pool, cfg.k, cfg.base_seed, index)?;
        let take = (cfg.budget - pool.len()).min(set.len());
        let set = set.into_pairs();
        pool.extend(if take < set.len() { set.select(&(0..take).collect::<Vec<_>>()) } else { set });
        index += 1;
    }
    Ok(pool)
}

pub fn train_supervised(model: &DenoiserModel, dist: &TaskDistribution, clean_pool: &[Tensor], cfg: &SupervisedConfig) -> Result<DenoiserModel> {
    if cfg.budget == 0 {
        bail!(Argument, "supervised budget must be at least 1");
    }
    let pool = supervised_pool(dist, clean_pool, cfg)?;
    model.with_params(run_inner_loop(model, &pool, &cfg.inner)?)
}

/// Inner loop on the real fine-tuning pairs, starting from the model.
pub fn fine_tune(model: &DenoiserModel, split: &RealSplit, cfg: &InnerLoopConfig) -> Result<DenoiserModel> {
    if split.finetune.is_empty() {
        bail!(Argument, "fine-tuning needs at least one pair");
    }
    model.with_params(run_inner_loop(model, &split.finetune, cfg)?)
}

/// Supervised pretraining followed by fine-tuning; returns both models. A
/// zero budget skips pretraining.
pub fn transfer_learn(
    model: &DenoiserModel,
    dist: &TaskDistribution,
    clean_pool: &[Tensor],
    pretrain: &SupervisedConfig,
    split: &RealSplit,
    finetune: &InnerLoopConfig,
) -> Result<(DenoiserModel, DenoiserModel)> {
    let pretrained = if pretrain.budget == 0 { model.clone() } else { train_supervised(model, dist, clean_pool, pretrain)? };
    let tuned = fine_tune(&pretrained, split, finetune)?;
    Ok((pretrained, tuned))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{batch_loss, gradient};
    use crate::exec::Sequential;
    use crate::nets::{LayerSpec, NetworkSpec};
    use crate::noise::NoiseModel;
    use crate::optim::OptimizerConfig;
    use crate::tasks::split_real;
    use alloc::vec;

    fn flat(v: &[f64]) -> ParamVector {
        ParamVector::flat(v.to_vec())
    }

    #[test]
    fn outer_update_examples() {
        let theta = flat(&[1.0, -2.0]);
        let next = reptile_outer_update(&theta, &[flat(&[2.0, 0.0]), flat(&[0.0, -2.0])], 0.5).unwrap();
        assert_eq!(next.values(), &[1.0, -1.5]);
        let same = reptile_outer_update(&theta, &[theta.clone(), theta.clone(), theta.clone()], 0.3).unwrap();
        assert_eq!(same, theta);
        let target = flat(&[0.1, 1e-20]);
        assert_eq!(reptile_outer_update(&theta, &[target.clone()], 1.0).unwrap(), target);
        assert!(reptile_outer_update(&theta, &[], 0.5).is_err());
        assert!(reptile_outer_update(&theta, &[flat(&[1.0])], 0.5).is_err());
    }

    #[test]
    fn outer_update_ignores_order() {
        let theta = flat(&[0.1, 0.7, -0.3]);
        let list: Vec<ParamVector> = (0..6)
            .map(|i| flat(&[0.1 + 1e-3 * i as f64, 0.7 - 0.37 * i as f64, 1e8 * (i % 2) as f64 - 0.3]))
            .collect();
        let a = reptile_outer_update(&theta, &list, 0.1).unwrap();
        let mut rev = list.clone();
        rev.reverse();
        rev.swap(0, 3);
        assert_eq!(a, reptile_outer_update(&theta, &rev, 0.1).unwrap());
    }

    fn linear_spec() -> NetworkSpec {
        NetworkSpec::new(vec![LayerSpec::FullyConnected { inputs: 4, outputs: 4 }, LayerSpec::Linear], false).unwrap()
    }

    fn pool(count: usize) -> Vec<Tensor> {
        let s = RngStream::new(11);
        crate::synth::signal_set(count, 4, &s)
    }

    fn gaussian() -> TaskDistribution {
        TaskDistribution::finite(vec![NoiseModel::Gaussian1d { mean: 0.0, sigma: 0.2 }, NoiseModel::Gaussian1d { mean: 0.05, sigma: 0.1 }]).unwrap()
    }

    fn cfg(lr: f64, epochs: usize, batch: usize) -> InnerLoopConfig {
        InnerLoopConfig { optimizer: OptimizerConfig::sgd(lr), epochs, batch_size: batch, shuffle_seed: 0 }
    }

    #[test]
    fn single_step_reduction() {
        let model = DenoiserModel::initialized(linear_spec(), 3);
        let meta = MetaConfig { n: 1, outer_iterations: 1, epsilon: 0.3, inner: cfg(0.05, 1, 1), k: 1, base_seed: 9 };
        let pool = pool(5);
        let (trained, log) = meta_train(&model, &gaussian(), &pool, &meta, &Sequential).unwrap();
        let (_, set, _) = task_draw(&gaussian(), &pool, 1, 9, 0).unwrap();
        let pair = set.pairs().pair(0);
        let g = gradient(model.spec(), model.get_params(), &[pair]).unwrap();
        for ((a, t), gi) in trained.get_params().values().iter().zip(model.get_params().values()).zip(g.values()) {
            assert!((a - (t - 0.3 * 0.05 * gi)).abs() < 1e-12);
        }
        assert_eq!(log.len(), 1);
    }

    #[test]
    fn meta_train_no_ops() {
        let model = DenoiserModel::initialized(linear_spec(), 3);
        let pool = pool(8);
        let mut meta = MetaConfig { n: 3, outer_iterations: 0, epsilon: 0.5, inner: cfg(0.1, 2, 2), k: 4, base_seed: 1 };
        let (same, log) = meta_train(&model, &gaussian(), &pool, &meta, &Sequential).unwrap();
        assert_eq!(same, model);
        assert!(log.is_empty());
        meta.outer_iterations = 4;
        meta.epsilon = 0.0;
        assert_eq!(meta_train(&model, &gaussian(), &pool, &meta, &Sequential).unwrap().0, model);
        meta.epsilon = 0.5;
        meta.inner.optimizer.learning_rate = 0.0;
        assert_eq!(meta_train(&model, &gaussian(), &pool, &meta, &Sequential).unwrap().0, model);
        meta.inner.optimizer.learning_rate = 0.1;
        let a = meta_train(&model, &gaussian(), &pool, &meta, &Sequential).unwrap();
        let b = meta_train(&model, &gaussian(), &pool, &meta, &Sequential).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.0, model);
        assert_eq!(a.1.len(), 4);
    }

    #[test]
    fn supervised_on_one_set_is_one_inner_loop() {
        let model = DenoiserModel::initialized(linear_spec(), 2);
        let pool = pool(10);
        let sup = SupervisedConfig { budget: 4, k: 4, base_seed: 5, inner: cfg(0.05, 1, 2) };
        let trained = train_supervised(&model, &gaussian(), &pool, &sup).unwrap();
        let (_, set, _) = task_draw(&gaussian(), &pool, 4, 5, 0).unwrap();
        let direct = run_inner_loop(&model, set.pairs(), &sup.inner).unwrap();
        assert_eq!(trained.get_params(), &direct);
        assert_eq!(train_supervised(&model, &gaussian(), &pool, &sup).unwrap(), trained);
        assert_eq!(supervised_pool(&gaussian(), &pool, &SupervisedConfig { budget: 10, ..sup }).unwrap().len(), 10);
    }

    #[test]
    fn supervised_loss_decreases_on_linear_model() {
        let model = DenoiserModel::initialized(linear_spec(), 2);
        let pool = pool(12);
        let sup = SupervisedConfig { budget: 12, k: 4, base_seed: 5, inner: cfg(0.02, 1, 12) };
        let data = supervised_pool(&gaussian(), &pool, &sup).unwrap();
        let batch: Vec<_> = data.pairs().collect();
        let mut current = model;
        let mut last = batch_loss(current.spec(), current.get_params(), &batch).unwrap();
        for _ in 0..20 {
            current = train_supervised(&current, &gaussian(), &pool, &sup).unwrap();
            let loss = batch_loss(current.spec(), current.get_params(), &batch).unwrap();
            assert!(loss <= last);
            last = loss;
        }
    }

    fn real_split() -> RealSplit {
        let clean = pool(8);
        let noisy = clean.iter().map(|c| c.map(|v| v + 0.1).unwrap()).collect();
        split_real(&PairedSet::new(noisy, clean).unwrap(), 2, &mut RngStream::new(1)).unwrap()
    }

    #[test]
    fn fine_tune_cases() {
        let model = DenoiserModel::initialized(linear_spec(), 4);
        let split = real_split();
        assert_eq!(fine_tune(&model, &split, &cfg(0.1, 0, 1)).unwrap(), model);

        let one = RealSplit { finetune: split.finetune.select(&[0]), ..split.clone() };
        let tuned = fine_tune(&model, &one, &cfg(0.1, 1, 1)).unwrap();
        let g = gradient(model.spec(), model.get_params(), &[one.finetune.pair(0)]).unwrap();
        for ((a, t), gi) in tuned.get_params().values().iter().zip(model.get_params().values()).zip(g.values()) {
            assert_eq!(*a, t - 0.1 * gi);
        }

        let batch: Vec<_> = split.finetune.pairs().collect();
        let before = batch_loss(model.spec(), model.get_params(), &batch).unwrap();
        let tuned = fine_tune(&model, &split, &cfg(0.01, 1, 2)).unwrap();
        assert!(batch_loss(tuned.spec(), tuned.get_params(), &batch).unwrap() < before);
    }

    #[test]
    fn transfer_degenerate_compositions() {
        let model = DenoiserModel::initialized(linear_spec(), 4);
        let pool = pool(10);
        let split = real_split();
        let ft = cfg(0.05, 2, 1);
        let mut sup = SupervisedConfig { budget: 0, k: 4, base_seed: 3, inner: cfg(0.05, 2, 2) };
        let (pre, tuned) = transfer_learn(&model, &gaussian(), &pool, &sup, &split, &ft).unwrap();
        assert_eq!(pre, model);
        assert_eq!(tuned, fine_tune(&model, &split, &ft).unwrap());

        sup.budget = 8;
        let (pre, tuned) = transfer_learn(&model, &gaussian(), &pool, &sup, &split, &ft.with_epochs(0)).unwrap();
        assert_eq!(pre, train_supervised(&model, &gaussian(), &pool, &sup).unwrap());
        assert_eq!(tuned, pre);
        let again = transfer_learn(&model, &gaussian(), &pool, &sup, &split, &ft).unwrap();
        assert_eq!(again, transfer_learn(&model, &gaussian(), &pool, &sup, &split, &ft).unwrap());
    }
}
