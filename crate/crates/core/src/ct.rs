//! Parallel-beam Radon transform and filtered back-projection.
//!
//! Images are `N x N` with pixel centres at integer offsets from the image
//! centre. Angle `a` is `pi * a / n_angles`; detector `j` sits at
//! `(j - (n_detectors - 1) / 2) * spacing` pixels from the rotation axis.
//! `pixel_size` converts pixel units to the length unit of the line
//! integrals, so image values are attenuation per length unit.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{PI, SQRT_2};

use crate::error::{bail, Result};
use crate::fft;
use crate::math;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionGeometry {
    pub image_size: usize,
    pub n_angles: usize,
    pub n_detectors: usize,
    /// Detector spacing in pixels.
    pub detector_spacing: f64,
    /// Length units per pixel.
    pub pixel_size: f64,
}

impl ProjectionGeometry {
    pub fn new(image_size: usize, n_angles: usize, n_detectors: usize, detector_spacing: f64, pixel_size: f64) -> Result<Self> {
        let g = ProjectionGeometry { image_size, n_angles, n_detectors, detector_spacing, pixel_size };
        g.validate()?;
        Ok(g)
    }

    /// 180 angles, `ceil(sqrt(2) * N)` unit-spaced detectors, unit pixels.
    pub fn default_for(image_size: usize) -> Result<Self> {
        Self::with_angles(image_size, 180)
    }

    pub fn with_angles(image_size: usize, n_angles: usize) -> Result<Self> {
        let det = math::ceil(SQRT_2 * image_size as f64) as usize;
        Self::new(image_size, n_angles, det, 1.0, 1.0)
    }

    pub fn with_pixel_size(mut self, pixel_size: f64) -> Result<Self> {
        self.pixel_size = pixel_size;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_size == 0 || self.n_angles == 0 || self.n_detectors == 0 {
            bail!(Argument, "projection geometry needs positive image size, angle and detector counts");
        }
        if !(self.detector_spacing > 0.0) || !(self.pixel_size > 0.0) || !self.pixel_size.is_finite() {
            bail!(Argument, "detector spacing and pixel size must be positive");
        }
        // detector centres span (n - 1) * spacing; one extra spacing covers
        // the half-bins at both ends.
        let coverage = self.n_detectors as f64 * self.detector_spacing;
        let diagonal = SQRT_2 * (self.image_size - 1) as f64;
        if coverage < diagonal {
            bail!(Argument, "{} detectors at spacing {} cover {:.2} px, image diagonal is {:.2} px", self.n_detectors, self.detector_spacing, coverage, diagonal);
        }
        Ok(())
    }

    fn detector_offset(&self) -> f64 {
        (self.n_detectors as f64 - 1.0) / 2.0
    }

    fn angles(&self) -> Vec<(f64, f64)> {
        (0..self.n_angles)
            .map(|a| {
                let th = PI * a as f64 / self.n_angles as f64;
                (math::cos(th), math::sin(th))
            })
            .collect()
    }
}

/// `n_angles x n_detectors` line integrals.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    pub n_angles: usize,
    pub n_detectors: usize,
    data: Vec<f64>,
}

impl Sinogram {
    pub fn new(n_angles: usize, n_detectors: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_angles * n_detectors {
            bail!(Dimension, "sinogram {}x{} needs {} values, got {}", n_angles, n_detectors, n_angles * n_detectors, data.len());
        }
        if data.iter().any(|v| !v.is_finite()) {
            bail!(Numeric, "sinogram contains non-finite values");
        }
        Ok(Sinogram { n_angles, n_detectors, data })
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, angle: usize) -> &[f64] {
        &self.data[angle * self.n_detectors..(angle + 1) * self.n_detectors]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Sinogram> {
        Sinogram::new(self.n_angles, self.n_detectors, self.data.iter().map(|&v| f(v)).collect())
    }

    fn check(&self, geom: &ProjectionGeometry) -> Result<()> {
        if self.n_angles != geom.n_angles || self.n_detectors != geom.n_detectors {
            bail!(Argument, "sinogram {}x{} does not match geometry {}x{}", self.n_angles, self.n_detectors, geom.n_angles, geom.n_detectors);
        }
        Ok(())
    }
}

fn square_extent(image: &Tensor, geom: &ProjectionGeometry) -> Result<usize> {
    match *image.shape() {
        [h, w] if h == w && h == geom.image_size => Ok(h),
        _ => bail!(Argument, "geometry is for {0}x{0} images, got shape {1:?}", geom.image_size, image.shape()),
    }
}

#[inline]
fn bilinear(img: &[f64], n: usize, row: f64, col: f64) -> f64 {
    let r0 = math::floor(row);
    let c0 = math::floor(col);
    let (fr, fc) = (row - r0, col - c0);
    let (r0, c0) = (r0 as isize, c0 as isize);
    let at = |r: isize, c: isize| -> f64 {
        if r < 0 || c < 0 || r >= n as isize || c >= n as isize {
            0.0
        } else {
            img[r as usize * n + c as usize]
        }
    };
    (1.0 - fr) * ((1.0 - fc) * at(r0, c0) + fc * at(r0, c0 + 1)) + fr * ((1.0 - fc) * at(r0 + 1, c0) + fc * at(r0 + 1, c0 + 1))
}

/// Line integrals by bilinear sampling along each ray at unit steps.
pub fn radon_forward(image: &Tensor, geom: &ProjectionGeometry) -> Result<Sinogram> {
    geom.validate()?;
    let n = square_extent(image, geom)?;
    let img = image.data();
    let centre = (n as f64 - 1.0) / 2.0;
    let half = math::ceil(SQRT_2 * n as f64 / 2.0) as isize + 1;
    let det_off = geom.detector_offset();
    let mut data = Vec::with_capacity(geom.n_angles * geom.n_detectors);
    for (c, s) in geom.angles() {
        for j in 0..geom.n_detectors {
            let u = (j as f64 - det_off) * geom.detector_spacing;
            let mut acc = 0.0;
            for k in -half..=half {
                let t = k as f64;
                let x = u * c - t * s;
                let y = u * s + t * c;
                acc += bilinear(img, n, centre - y, x + centre);
            }
            data.push(acc * geom.pixel_size);
        }
    }
    Sinogram::new(geom.n_angles, geom.n_detectors, data)
}

/// Ram-Lak kernel sampled at detector offsets `-(n-1)..=(n-1)`.
fn ramp_kernel(n_detectors: usize, spacing: f64) -> Vec<f64> {
    let m = n_detectors as isize - 1;
    (-m..=m)
        .map(|k| {
            if k == 0 {
                1.0 / (4.0 * spacing * spacing)
            } else if k % 2 == 0 {
                0.0
            } else {
                -1.0 / (PI * PI * (k * k) as f64 * spacing * spacing)
            }
        })
        .collect()
}

/// Ramp-filtered (frequency-domain Ram-Lak) back-projection with linear
/// interpolation between detectors. Returns an `N x N` image.
pub fn fbp_inverse(sino: &Sinogram, geom: &ProjectionGeometry) -> Result<Tensor> {
    geom.validate()?;
    sino.check(geom)?;
    let n = geom.image_size;
    let kernel = ramp_kernel(geom.n_detectors, geom.detector_spacing);
    let filtered: Vec<Vec<f64>> = (0..geom.n_angles)
        .map(|a| {
            fft::convolve_centered(sino.row(a), &kernel)
                .into_iter()
                .map(|v| v * geom.detector_spacing)
                .collect()
        })
        .collect();
    let centre = (n as f64 - 1.0) / 2.0;
    let det_off = geom.detector_offset();
    let angles = geom.angles();
    let mut out = vec![0.0; n * n];
    let last = geom.n_detectors as f64 - 1.0;
    for r in 0..n {
        let y = centre - r as f64;
        for col in 0..n {
            let x = col as f64 - centre;
            let mut acc = 0.0;
            for (q, &(c, s)) in filtered.iter().zip(&angles) {
                let pos = (x * c + y * s) / geom.detector_spacing + det_off;
                if pos < 0.0 || pos > last {
                    continue;
                }
                let j0 = math::floor(pos);
                let f = pos - j0;
                let j0 = j0 as usize;
                let v1 = if j0 + 1 < q.len() { q[j0 + 1] } else { 0.0 };
                acc += (1.0 - f) * q[j0] + f * v1;
            }
            out[r * n + col] = acc * PI / geom.n_angles as f64 / geom.pixel_size;
        }
    }
    Tensor::new(vec![n, n], out)
}

/// Pixels whose centres lie inside the inscribed circle, row-major.
pub fn inscribed_mask(n: usize) -> Vec<bool> {
    let c = (n as f64 - 1.0) / 2.0;
    let r2 = (n as f64 / 2.0) * (n as f64 / 2.0);
    (0..n * n)
        .map(|i| {
            let (y, x) = ((i / n) as f64 - c, (i % n) as f64 - c);
            x * x + y * y <= r2
        })
        .collect()
}
