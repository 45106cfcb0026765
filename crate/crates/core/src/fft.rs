//! Radix-2 complex FFT used by the ramp filter.

use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub(crate) struct Complex {
    pub re: f64,
    pub im: f64,
}

impl Complex {
    fn mul(self, o: Complex) -> Complex {
        Complex { re: self.re * o.re - self.im * o.im, im: self.re * o.im + self.im * o.re }
    }
}

/// In-place iterative FFT; `buf.len()` must be a power of two.
/// `inverse` computes the unnormalised inverse transform.
pub(crate) fn fft_in_place(buf: &mut [Complex], inverse: bool) {
    let n = buf.len();
    assert!(n.is_power_of_two(), "fft length {} is not a power of two", n);
    let mut j = 0;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            buf.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let ang = sign * 2.0 * PI / len as f64;
        let half = len / 2;
        let twiddles: Vec<Complex> = (0..half)
            .map(|k| Complex { re: math::cos(ang * k as f64), im: math::sin(ang * k as f64) })
            .collect();
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let a = buf[start + k];
                let b = buf[start + k + half].mul(twiddles[k]);
                buf[start + k] = Complex { re: a.re + b.re, im: a.im + b.im };
                buf[start + k + half] = Complex { re: a.re - b.re, im: a.im - b.im };
            }
        }
        len <<= 1;
    }
}

/// Linear convolution of `signal` with a centred kernel, via zero-padded
/// FFTs: `out[n] = sum_m kernel[m] * signal[n - (m - centre)]`, where
/// `kernel.len() == 2 * centre + 1`. Output has `signal.len()` samples.
pub(crate) fn convolve_centered(signal: &[f64], kernel: &[f64]) -> Vec<f64> {
    let centre = kernel.len() / 2;
    let size = (signal.len() + kernel.len()).next_power_of_two();
    let mut a: Vec<Complex> = (0..size).map(|i| Complex { re: signal.get(i).copied().unwrap_or(0.0), im: 0.0 }).collect();
    let mut b: Vec<Complex> = (0..size).map(|i| Complex { re: kernel.get(i).copied().unwrap_or(0.0), im: 0.0 }).collect();
    fft_in_place(&mut a, false);
    fft_in_place(&mut b, false);
    for (x, y) in a.iter_mut().zip(&b) {
        *x = x.mul(*y);
    }
    fft_in_place(&mut a, true);
    let scale = 1.0 / size as f64;
    (0..signal.len()).map(|n| a[n + centre].re * scale).collect()
}
