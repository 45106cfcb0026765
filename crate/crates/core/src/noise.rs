//! Corruption functions `h_tau` and the Poisson sampler beneath them.

use alloc::vec::Vec;
use core::fmt;

use crate::ct::{fbp_inverse, radon_forward, ProjectionGeometry};
use crate::error::{bail, Result};
use crate::math;
use crate::rng::RngStream;
use crate::tensor::Tensor;

/// A noise model with its (already sampled) parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseModel {
    /// `x = y + N(mean, sigma^2)` on 1-D signals.
    Gaussian1d { mean: f64, sigma: f64 },
    /// `x = y + N(mean, sigma^2)` on images.
    Gaussian2d { mean: f64, sigma: f64 },
    /// `x = Poisson(peak * y) / peak`.
    PoissonImage { peak: f64 },
    /// Low-dose CT: Poisson photon counts on the sinogram with blank-scan
    /// factor `blank_scan` plus Gaussian read-out noise, reconstructed by FBP.
    PoissonSinogram { blank_scan: f64, readout_sigma: f64, n_angles: usize, pixel_size: f64 },
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseModel::Gaussian1d { mean, sigma } | NoiseModel::Gaussian2d { mean, sigma } => {
                if !(sigma >= 0.0) || !sigma.is_finite() || !mean.is_finite() {
                    bail!(Argument, "gaussian noise needs finite mean and sigma >= 0 (sigma = {})", sigma);
                }
            }
            NoiseModel::PoissonImage { peak } => {
                if !(peak > 0.0) || !peak.is_finite() {
                    bail!(Argument, "poisson peak must be positive, got {}", peak);
                }
            }
            NoiseModel::PoissonSinogram { blank_scan, readout_sigma, n_angles, pixel_size } => {
                if !(blank_scan > 0.0) || !blank_scan.is_finite() {
                    bail!(Argument, "blank scan factor must be positive, got {}", blank_scan);
                }
                if !(readout_sigma >= 0.0) {
                    bail!(Argument, "read-out sigma must be >= 0, got {}", readout_sigma);
                }
                if n_angles == 0 || !(pixel_size > 0.0) {
                    bail!(Argument, "sinogram noise needs n_angles >= 1 and a positive pixel size");
                }
            }
        }
        Ok(())
    }

    /// Short name used in configs and reports.
    pub fn kind_name(&self) -> &'static str {
        match self {
            NoiseModel::Gaussian1d { .. } => "gaussian1d",
            NoiseModel::Gaussian2d { .. } => "gaussian2d",
            NoiseModel::PoissonImage { .. } => "poisson_image",
            NoiseModel::PoissonSinogram { .. } => "poisson_sinogram",
        }
    }

    /// Corrupts `y` drawing all randomness from `stream`.
    pub fn apply(&self, y: &Tensor, stream: &mut RngStream) -> Result<Tensor> {
        self.validate()?;
        match *self {
            NoiseModel::Gaussian1d { mean, sigma } => {
                if y.rank() != 1 {
                    bail!(Dimension, "gaussian1d expects a 1-D signal, got shape {:?}", y.shape());
                }
                apply_gaussian(y, mean, sigma, stream)
            }
            NoiseModel::Gaussian2d { mean, sigma } => {
                if y.rank() != 2 {
                    bail!(Dimension, "gaussian2d expects an image, got shape {:?}", y.shape());
                }
                apply_gaussian(y, mean, sigma, stream)
            }
            NoiseModel::PoissonImage { peak } => apply_poisson_image(y, peak, stream),
            NoiseModel::PoissonSinogram { blank_scan, readout_sigma, n_angles, pixel_size } => {
                let n = match *y.shape() {
                    [h, w] if h == w => h,
                    _ => bail!(Argument, "sinogram noise needs a square image, got shape {:?}", y.shape()),
                };
                let geom = ProjectionGeometry::with_angles(n, n_angles)?.with_pixel_size(pixel_size)?;
                apply_poisson_sinogram(y, blank_scan, readout_sigma, &geom, stream)
            }
        }
    }
}

impl fmt::Display for NoiseModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            NoiseModel::Gaussian1d { mean, sigma } | NoiseModel::Gaussian2d { mean, sigma } => {
                write!(f, "{}(mean={}, sigma={})", self.kind_name(), mean, sigma)
            }
            NoiseModel::PoissonImage { peak } => write!(f, "poisson_image(peak={})", peak),
            NoiseModel::PoissonSinogram { blank_scan, readout_sigma, .. } => {
                write!(f, "poisson_sinogram(b={}, readout_sigma={})", blank_scan, readout_sigma)
            }
        }
    }
}

/// A task `tau`: a noise model plus the seed that fixes its randomness.
///
/// Sample `i` is corrupted with the sub-stream `seed -> i`, so applying the
/// task to the same clean input and index is bit-reproducible.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseTask {
    pub model: NoiseModel,
    pub seed: u64,
}

impl NoiseTask {
    pub fn new(model: NoiseModel, seed: u64) -> Result<Self> {
        model.validate()?;
        Ok(NoiseTask { model, seed })
    }

    pub fn stream_for(&self, sample_index: u64) -> RngStream {
        RngStream::new(self.seed).derive(sample_index)
    }

    pub fn apply(&self, y: &Tensor, sample_index: u64) -> Result<Tensor> {
        self.model.apply(y, &mut self.stream_for(sample_index))
    }
}

/// `x = y + eta`, `eta ~ N(mean, sigma^2)` i.i.d.
pub fn apply_gaussian(y: &Tensor, mean: f64, sigma: f64, stream: &mut RngStream) -> Result<Tensor> {
    if !(sigma >= 0.0) {
        bail!(Argument, "gaussian sigma must be >= 0, got {}", sigma);
    }
    let data: Vec<f64> = y.data().iter().map(|&v| v + mean + sigma * stream.standard_normal()).collect();
    Tensor::new(y.shape().to_vec(), data)
}

/// `x = Poisson(peak * y) / peak`; mean `y`, variance `y / peak`.
pub fn apply_poisson_image(y: &Tensor, peak: f64, stream: &mut RngStream) -> Result<Tensor> {
    if !(peak > 0.0) || !peak.is_finite() {
        bail!(Argument, "poisson peak must be positive, got {}", peak);
    }
    if let Some(v) = y.data().iter().find(|&&v| v < 0.0) {
        bail!(Domain, "poisson image noise needs non-negative intensities, found {}", v);
    }
    let mut data = Vec::with_capacity(y.len());
    for &v in y.data() {
        data.push(sample_poisson(peak * v, stream)? as f64 / peak);
    }
    Tensor::new(y.shape().to_vec(), data)
}

/// Sinogram-domain low-dose simulation:
/// `z = Poisson(b * exp(-S(y))) + N(0, readout_sigma^2)`, counts clamped
/// to at least one, converted back to line integrals `-ln(z / b)` and
/// reconstructed with FBP.
pub fn apply_poisson_sinogram(
    y: &Tensor,
    blank_scan: f64,
    readout_sigma: f64,
    geom: &ProjectionGeometry,
    stream: &mut RngStream,
) -> Result<Tensor> {
    if !(blank_scan > 0.0) || !blank_scan.is_finite() {
        bail!(Argument, "blank scan factor must be positive, got {}", blank_scan);
    }
    if !(readout_sigma >= 0.0) {
        bail!(Argument, "read-out sigma must be >= 0, got {}", readout_sigma);
    }
    if let Some(v) = y.data().iter().find(|&&v| v < 0.0) {
        bail!(Domain, "attenuation image must be non-negative, found {}", v);
    }
    let sino = radon_forward(y, geom)?;
    let mut noisy = Vec::with_capacity(sino.data().len());
    for &p in sino.data() {
        let mut z = sample_poisson(blank_scan * math::exp(-p), stream)? as f64;
        if readout_sigma > 0.0 {
            z += readout_sigma * stream.standard_normal();
        }
        noisy.push(-math::ln(z.max(1.0) / blank_scan));
    }
    let sino = crate::ct::Sinogram::new(sino.n_angles, sino.n_detectors, noisy)?;
    fbp_inverse(&sino, geom)
}

/// Exact Poisson draw: multiplication inversion below 30, Hörmann's
/// transformed rejection with squeeze (PTRS) above.
pub fn sample_poisson(lambda: f64, stream: &mut RngStream) -> Result<u64> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        bail!(Domain, "poisson rate must be finite and >= 0, got {}", lambda);
    }
    if lambda == 0.0 {
        return Ok(0);
    }
    if lambda < 30.0 {
        let limit = math::exp(-lambda);
        let mut k = 0u64;
        let mut prod = stream.uniform();
        while prod > limit {
            k += 1;
            prod *= stream.uniform();
        }
        return Ok(k);
    }
    let slam = math::sqrt(lambda);
    let loglam = math::ln(lambda);
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let v_r = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u = stream.uniform() - 0.5;
        let v = stream.uniform();
        let us = 0.5 - u.abs();
        let k = math::floor((2.0 * a / us + b) * u + lambda + 0.43);
        if us >= 0.07 && v <= v_r {
            return Ok(k as u64);
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let lhs = math::ln(v) + math::ln(inv_alpha) - math::ln(a / (us * us) + b);
        let rhs = -lambda + k * loglam - math::lgamma(k + 1.0);
        if lhs <= rhs {
            return Ok(k as u64);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn gaussian_identity_and_shift() {
        let y = Tensor::vector(vec![0.5, -1.0, 2.0]).unwrap();
        let mut s = RngStream::new(1);
        assert_eq!(apply_gaussian(&y, 0.0, 0.0, &mut s).unwrap(), y);
        let shifted = apply_gaussian(&y, 0.1, 0.0, &mut s).unwrap();
        for (a, b) in shifted.data().iter().zip(y.data()) {
            assert_eq!(*a, b + 0.1);
        }
        assert!(apply_gaussian(&y, 0.0, -1.0, &mut s).is_err());
    }

    #[test]
    fn poisson_image_edge_cases() {
        let mut s = RngStream::new(2);
        let z = Tensor::zeros(vec![4, 4]).unwrap();
        assert_eq!(apply_poisson_image(&z, 50.0, &mut s).unwrap(), z);
        let neg = Tensor::vector(vec![0.1, -0.1]).unwrap();
        assert!(matches!(apply_poisson_image(&neg, 50.0, &mut s), Err(crate::Error::Domain(_))));
    }

    #[test]
    fn poisson_sampler_domain() {
        let mut s = RngStream::new(3);
        assert_eq!(sample_poisson(0.0, &mut s).unwrap(), 0);
        assert!(sample_poisson(-1.0, &mut s).is_err());
        assert!(sample_poisson(f64::NAN, &mut s).is_err());
    }

    #[test]
    fn large_rate_moments() {
        let mut s = RngStream::new(4);
        let n = 200_000;
        let lambda = 1000.0;
        let draws: Vec<f64> = (0..n).map(|_| sample_poisson(lambda, &mut s).unwrap() as f64).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1) as f64;
        let se = (lambda / n as f64).sqrt();
        assert!((mean - lambda).abs() < 4.0 * se, "mean {mean}");
        assert!((var / lambda - 1.0).abs() < 0.02, "var {var}");
    }

    #[test]
    fn task_is_reproducible_per_sample() {
        let task = NoiseTask::new(NoiseModel::Gaussian1d { mean: 0.05, sigma: 0.2 }, 99).unwrap();
        let y = Tensor::vector(vec![0.0; 8]).unwrap();
        assert_eq!(task.apply(&y, 3).unwrap(), task.apply(&y, 3).unwrap());
        assert_ne!(task.apply(&y, 3).unwrap(), task.apply(&y, 4).unwrap());
        assert!(NoiseTask::new(NoiseModel::PoissonImage { peak: 0.0 }, 1).is_err());
        let img = Tensor::zeros(vec![2, 2]).unwrap();
        assert!(task.apply(&img, 0).is_err());
    }
}
