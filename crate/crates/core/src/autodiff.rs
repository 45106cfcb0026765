//! Mean-squared-error loss and reverse-mode gradients.
//!
//! Networks implement [`Differentiable`]: a forward pass that leaves a
//! [`GradientRecord`] behind, and a backward pass that consumes it. The
//! record can be consumed exactly once.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{bail, Error, Result};
use crate::tensor::{ParamBlock, ParamVector, Tensor};

/// Mean over all elements of `(pred - target)^2`.
pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<f64> {
    pred.check_same_shape(target, "mse_loss")?;
    Ok(mse_slices(pred.data(), target.data()))
}

pub(crate) fn mse_slices(pred: &[f64], target: &[f64]) -> f64 {
    let sum: f64 = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum();
    sum / pred.len() as f64
}

/// Saved forward state needed for one backward pass.
#[derive(Debug, Default)]
pub struct GradientRecord {
    buffers: Vec<Vec<f64>>,
    extents: Vec<usize>,
    consumed: bool,
}

impl GradientRecord {
    pub fn new(buffers: Vec<Vec<f64>>, extents: Vec<usize>) -> Self {
        GradientRecord { buffers, extents, consumed: false }
    }

    /// Hands out the saved state. A second call fails with
    /// [`Error::RecordConsumed`].
    pub fn take(&mut self) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
        if self.consumed {
            return Err(Error::RecordConsumed);
        }
        self.consumed = true;
        Ok((core::mem::take(&mut self.buffers), core::mem::take(&mut self.extents)))
    }

    pub fn is_consumed(&self) -> bool {
        self.consumed
    }
}

/// A parameterised map `f_theta` with a reverse-mode derivative.
pub trait Differentiable {
    fn param_layout(&self) -> Vec<ParamBlock>;

    fn forward_recorded(&self, params: &[f64], input: &Tensor) -> Result<(Tensor, GradientRecord)>;

    /// Accumulates `d(loss)/d(params)` into `param_grad`, given
    /// `output_grad = d(loss)/d(output)`.
    fn backward(
        &self,
        params: &[f64],
        record: &mut GradientRecord,
        output_grad: &[f64],
        param_grad: &mut [f64],
    ) -> Result<()>;
}

/// One `(input, target)` training pair.
pub type Pair<'a> = (&'a Tensor, &'a Tensor);

fn check_params<M: Differentiable + ?Sized>(model: &M, theta: &ParamVector) -> Result<()> {
    let layout = model.param_layout();
    if layout.as_slice() != theta.layout() {
        let expected: usize = layout.iter().map(|b| b.len).sum();
        bail!(Dimension, "parameter layout does not match the model ({} values, model expects {})", theta.len(), expected);
    }
    Ok(())
}

/// Batch loss `(1/B) sum_b mse(f(x_b), y_b)` and its gradient.
pub fn loss_and_gradient<M: Differentiable + ?Sized>(
    model: &M,
    theta: &ParamVector,
    batch: &[Pair<'_>],
) -> Result<(f64, ParamVector)> {
    if batch.is_empty() {
        bail!(Argument, "gradient of an empty batch");
    }
    check_params(model, theta)?;
    let params = theta.values();
    let mut grad = vec![0.0; params.len()];
    let mut loss = 0.0;
    let scale = 1.0 / batch.len() as f64;
    for &(input, target) in batch {
        let (out, mut record) = model.forward_recorded(params, input)?;
        out.check_same_shape(target, "network output vs target")?;
        let n = out.len() as f64;
        let mut out_grad = Vec::with_capacity(out.len());
        let mut sample_loss = 0.0;
        for (o, t) in out.data().iter().zip(target.data()) {
            let d = o - t;
            sample_loss += d * d;
            out_grad.push(2.0 * d * scale / n);
        }
        loss += sample_loss / n * scale;
        model.backward(params, &mut record, &out_grad, &mut grad)?;
    }
    if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        bail!(Numeric, "non-finite loss or gradient (loss = {})", loss);
    }
    Ok((loss, theta.with_values(grad)?))
}

/// `dL/dtheta` for the batch-mean MSE, in the layout of `theta`.
pub fn gradient<M: Differentiable + ?Sized>(model: &M, theta: &ParamVector, batch: &[Pair<'_>]) -> Result<ParamVector> {
    loss_and_gradient(model, theta, batch).map(|(_, g)| g)
}

/// Batch-mean MSE without recording anything.
pub fn batch_loss<M: Differentiable + ?Sized>(model: &M, theta: &ParamVector, batch: &[Pair<'_>]) -> Result<f64> {
    if batch.is_empty() {
        bail!(Argument, "loss of an empty batch");
    }
    check_params(model, theta)?;
    let mut loss = 0.0;
    for &(input, target) in batch {
        let (out, _) = model.forward_recorded(theta.values(), input)?;
        loss += mse_loss(&out, target)?;
    }
    Ok(loss / batch.len() as f64)
}

/// Central differences `(L(theta + h e_i) - L(theta - h e_i)) / 2h`.
pub fn finite_diff_gradient<F>(mut loss_fn: F, theta: &ParamVector, h: f64) -> Result<ParamVector>
where
    F: FnMut(&ParamVector) -> Result<f64>,
{
    if !(h > 0.0) || !h.is_finite() {
        bail!(Argument, "finite-difference step must be positive, got {}", h);
    }
    let mut probe = theta.clone();
    let mut grad = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        let orig = theta.values()[i];
        probe.values_mut()[i] = orig + h;
        let plus = loss_fn(&probe)?;
        probe.values_mut()[i] = orig - h;
        let minus = loss_fn(&probe)?;
        probe.values_mut()[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            bail!(Numeric, "loss is not finite around coordinate {}", i);
        }
        grad.push((plus - minus) / (2.0 * h));
    }
    theta.with_values(grad)
}

/// Largest element-wise relative error `|a - b| / max(|a|, |b|, floor)`.
pub fn max_relative_error(a: &ParamVector, b: &ParamVector, floor: f64) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math;

    #[test]
    fn mse_examples() {
        let a = Tensor::vector(vec![1.0, 2.0]).unwrap();
        let z = Tensor::vector(vec![0.0, 0.0]).unwrap();
        assert_eq!(mse_loss(&a, &a).unwrap(), 0.0);
        assert_eq!(mse_loss(&a, &z).unwrap(), 2.5);
        let m = Tensor::matrix(1, 2, vec![0.0, 0.0]).unwrap();
        assert!(matches!(mse_loss(&a, &m), Err(Error::Dimension(_))));
    }

    #[test]
    fn mse_matches_double_loop() {
        let mut s = crate::RngStream::new(11);
        let p: Vec<f64> = (0..16).map(|_| s.uniform() * 4.0 - 2.0).collect();
        let t: Vec<f64> = (0..16).map(|_| s.uniform() * 4.0 - 2.0).collect();
        let mut acc = 0.0;
        for r in 0..4 {
            for c in 0..4 {
                let d = p[r * 4 + c] - t[r * 4 + c];
                acc += d * d;
            }
        }
        let pred = Tensor::matrix(4, 4, p).unwrap();
        let target = Tensor::matrix(4, 4, t).unwrap();
        approx::assert_relative_eq!(mse_loss(&pred, &target).unwrap(), acc / 16.0, max_relative = 1e-15);
    }

    #[test]
    fn finite_differences_of_scalar_functions() {
        let theta = ParamVector::flat(vec![3.0]);
        let g = finite_diff_gradient(|p| Ok(p.values()[0] * p.values()[0]), &theta, 1e-5).unwrap();
        assert!((g.values()[0] - 6.0).abs() < 1e-8);

        let theta = ParamVector::flat(vec![0.0]);
        let g = finite_diff_gradient(|p| Ok(math::sin(p.values()[0])), &theta, 1e-5).unwrap();
        assert!((g.values()[0] - 1.0).abs() < 1e-9);

        let theta = ParamVector::flat(vec![1.0, -2.0, 5.0]);
        let g = finite_diff_gradient(|_| Ok(4.2), &theta, 1e-5).unwrap();
        assert!(g.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn finite_differences_reject_bad_input() {
        let theta = ParamVector::flat(vec![1.0]);
        assert!(matches!(finite_diff_gradient(|_| Ok(1.0), &theta, 0.0), Err(Error::Argument(_))));
        assert!(matches!(finite_diff_gradient(|_| Ok(f64::NAN), &theta, 1e-3), Err(Error::Numeric(_))));
    }

    #[test]
    fn record_is_single_use() {
        let mut rec = GradientRecord::new(vec![vec![1.0]], vec![1]);
        assert!(rec.take().is_ok());
        assert!(rec.is_consumed());
        assert_eq!(rec.take(), Err(Error::RecordConsumed));
    }
}
