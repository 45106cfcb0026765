//! Parameter update rules and the per-task inner loop.

use alloc::vec;
use alloc::vec::Vec;

use crate::autodiff::{loss_and_gradient, Pair};
use crate::error::{bail, Result};
use crate::math;
use crate::nets::DenoiserModel;
use crate::rng::RngStream;
use crate::tensor::{PairedSet, ParamVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Adam,
    AdaDelta,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub rho: f64,
    pub adadelta_epsilon: f64,
}

impl OptimizerConfig {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Self {
        OptimizerConfig {
            kind,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            rho: 0.9,
            adadelta_epsilon: 1e-6,
        }
    }

    pub fn sgd(learning_rate: f64) -> Self {
        Self::new(OptimizerKind::Sgd, learning_rate)
    }

    pub fn adam(learning_rate: f64) -> Self {
        Self::new(OptimizerKind::Adam, learning_rate)
    }

    /// AdaDelta whose displacement is multiplied by `learning_rate`.
    pub fn adadelta(learning_rate: f64) -> Self {
        Self::new(OptimizerKind::AdaDelta, learning_rate)
    }

    pub fn validate(&self) -> Result<()> {
        // lr = 0 is accepted so that a frozen run can be expressed.
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            bail!(Argument, "learning rate must be non-negative and finite, got {}", self.learning_rate);
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2), ("rho", self.rho)] {
            if !(v > 0.0 && v < 1.0) {
                bail!(Argument, "{} must lie in (0, 1), got {}", name, v);
            }
        }
        if !(self.adam_epsilon > 0.0) || !(self.adadelta_epsilon > 0.0) {
            bail!(Argument, "optimizer epsilons must be positive");
        }
        Ok(())
    }
}

/// Per-coordinate accumulators, layout-matched to the parameters.
///
/// Adam keeps `(m, v)`; AdaDelta keeps `(E[g^2], E[dx^2])`; SGD keeps
/// nothing but the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    first: Vec<f64>,
    second: Vec<f64>,
    step: u64,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, len: usize) -> Self {
        let n = if kind == OptimizerKind::Sgd { 0 } else { len };
        OptimizerState { first: vec![0.0; n], second: vec![0.0; n], step: 0 }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.first.len()
    }

    pub fn is_empty(&self) -> bool {
        self.first.is_empty()
    }

    fn check(&self, len: usize) -> Result<()> {
        if self.first.len() != len || self.second.len() != len {
            bail!(Dimension, "optimizer state holds {} coordinates, parameters have {}", self.first.len(), len);
        }
        Ok(())
    }
}

fn check_pair(theta: &ParamVector, grad: &ParamVector) -> Result<()> {
    if theta.len() != grad.len() {
        bail!(Dimension, "gradient has {} entries, parameters {}", grad.len(), theta.len());
    }
    Ok(())
}

/// `theta - lr * grad`.
pub fn sgd_step(theta: &ParamVector, grad: &ParamVector, lr: f64) -> Result<ParamVector> {
    check_pair(theta, grad)?;
    let mut next = theta.clone();
    sgd_in_place(next.values_mut(), grad.values(), lr);
    Ok(next)
}

fn sgd_in_place(theta: &mut [f64], grad: &[f64], lr: f64) {
    for (t, g) in theta.iter_mut().zip(grad) {
        *t -= lr * g;
    }
}

/// Bias-corrected Adam.
pub fn adam_step(theta: &ParamVector, grad: &ParamVector, state: &OptimizerState, cfg: &OptimizerConfig) -> Result<(ParamVector, OptimizerState)> {
    check_pair(theta, grad)?;
    state.check(theta.len())?;
    let (mut next, mut st) = (theta.clone(), state.clone());
    adam_in_place(next.values_mut(), grad.values(), &mut st, cfg);
    Ok((next, st))
}

fn adam_in_place(theta: &mut [f64], grad: &[f64], st: &mut OptimizerState, cfg: &OptimizerConfig) {
    st.step += 1;
    let t = st.step.min(i32::MAX as u64) as i32;
    let c1 = 1.0 - math::powi(cfg.beta1, t);
    let c2 = 1.0 - math::powi(cfg.beta2, t);
    for i in 0..theta.len() {
        let g = grad[i];
        let m = cfg.beta1 * st.first[i] + (1.0 - cfg.beta1) * g;
        let v = cfg.beta2 * st.second[i] + (1.0 - cfg.beta2) * g * g;
        st.first[i] = m;
        st.second[i] = v;
        let m_hat = m / c1;
        let v_hat = v / c2;
        theta[i] -= cfg.learning_rate * m_hat / (math::sqrt(v_hat) + cfg.adam_epsilon);
    }
}

/// AdaDelta with running averages of squared gradients and squared
/// updates; the unit-corrected displacement is scaled by the learning rate.
pub fn adadelta_step(
    theta: &ParamVector,
    grad: &ParamVector,
    state: &OptimizerState,
    cfg: &OptimizerConfig,
) -> Result<(ParamVector, OptimizerState)> {
    check_pair(theta, grad)?;
    state.check(theta.len())?;
    let (mut next, mut st) = (theta.clone(), state.clone());
    adadelta_in_place(next.values_mut(), grad.values(), &mut st, cfg);
    Ok((next, st))
}

fn adadelta_in_place(theta: &mut [f64], grad: &[f64], st: &mut OptimizerState, cfg: &OptimizerConfig) {
    st.step += 1;
    let (rho, eps) = (cfg.rho, cfg.adadelta_epsilon);
    for i in 0..theta.len() {
        let g = grad[i];
        let sq = rho * st.first[i] + (1.0 - rho) * g * g;
        let delta = math::sqrt(st.second[i] + eps) / math::sqrt(sq + eps) * g;
        st.first[i] = sq;
        st.second[i] = rho * st.second[i] + (1.0 - rho) * delta * delta;
        theta[i] -= cfg.learning_rate * delta;
    }
}

/// A configured optimizer with its running state.
#[derive(Debug, Clone)]
pub struct Optimizer {
    cfg: OptimizerConfig,
    state: OptimizerState,
}

impl Optimizer {
    pub fn new(cfg: OptimizerConfig, len: usize) -> Result<Self> {
        cfg.validate()?;
        Ok(Optimizer { cfg, state: OptimizerState::new(cfg.kind, len) })
    }

    pub fn state(&self) -> &OptimizerState {
        &self.state
    }

    pub fn step(&mut self, theta: &mut ParamVector, grad: &ParamVector) -> Result<()> {
        check_pair(theta, grad)?;
        match self.cfg.kind {
            OptimizerKind::Sgd => {
                self.state.step += 1;
                sgd_in_place(theta.values_mut(), grad.values(), self.cfg.learning_rate)
            }
            OptimizerKind::Adam => {
                self.state.check(theta.len())?;
                adam_in_place(theta.values_mut(), grad.values(), &mut self.state, &self.cfg)
            }
            OptimizerKind::AdaDelta => {
                self.state.check(theta.len())?;
                adadelta_in_place(theta.values_mut(), grad.values(), &mut self.state, &self.cfg)
            }
        }
        Ok(())
    }
}

/// Settings of the update operator `g(L, theta, s)`: the number of steps
/// `s` is `epochs * ceil(N / batch_size)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerLoopConfig {
    pub optimizer: OptimizerConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub shuffle_seed: u64,
}

impl InnerLoopConfig {
    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        if self.batch_size == 0 {
            bail!(Argument, "batch size must be at least 1");
        }
        Ok(())
    }

    pub fn with_seed(mut self, shuffle_seed: u64) -> Self {
        self.shuffle_seed = shuffle_seed;
        self
    }

    pub fn with_epochs(mut self, epochs: usize) -> Self {
        self.epochs = epochs;
        self
    }
}

/// Summary of one inner loop.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct InnerLoopStats {
    /// Mean mini-batch loss over the final epoch (0 when no epoch ran).
    pub final_epoch_loss: f64,
    pub steps: usize,
}

/// `theta' = g(L, theta, s)`: shuffled mini-batch passes over `data`
/// starting from the model's parameters with fresh optimizer state. The
/// model itself is not modified.
pub fn run_inner_loop(model: &DenoiserModel, data: &PairedSet, cfg: &InnerLoopConfig) -> Result<ParamVector> {
    run_inner_loop_with_stats(model, data, cfg).map(|(theta, _)| theta)
}

pub fn run_inner_loop_with_stats(model: &DenoiserModel, data: &PairedSet, cfg: &InnerLoopConfig) -> Result<(ParamVector, InnerLoopStats)> {
    cfg.validate()?;
    let mut theta = model.get_params().clone();
    if cfg.epochs == 0 {
        return Ok((theta, InnerLoopStats::default()));
    }
    if data.is_empty() {
        bail!(Argument, "inner loop over an empty training set with {} epochs", cfg.epochs);
    }
    let mut opt = Optimizer::new(cfg.optimizer, theta.len())?;
    let mut shuffle = RngStream::new(cfg.shuffle_seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut stats = InnerLoopStats::default();
    let mut batch: Vec<Pair<'_>> = Vec::with_capacity(cfg.batch_size);
    for _ in 0..cfg.epochs {
        shuffle.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| data.pair(i)));
            let (loss, grad) = loss_and_gradient(model.spec(), &theta, &batch)?;
            opt.step(&mut theta, &grad)?;
            epoch_loss += loss;
            batches += 1;
            stats.steps += 1;
        }
        stats.final_epoch_loss = epoch_loss / batches as f64;
    }
    if !theta.all_finite() {
        bail!(Numeric, "inner loop diverged to non-finite parameters");
    }
    Ok((theta, stats))
}
