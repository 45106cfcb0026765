//! Built-in clean data: ECG-like 1-D signals and CT-like 2-D phantoms.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::math;
use crate::rng::RngStream;
use crate::tensor::Tensor;

/// Sum of 2-4 sinusoids plus a train of narrow spikes, roughly in [-1.5, 1.5].
pub fn synthetic_signal(length: usize, stream: &mut RngStream) -> Tensor {
    let tones = 2 + stream.below(3);
    let params: Vec<(f64, f64, f64)> = (0..tones)
        .map(|_| (stream.uniform_in(0.15, 0.5), stream.uniform_in(12.0, 80.0), stream.uniform_in(0.0, 2.0 * PI)))
        .collect();
    let beat = stream.uniform_in(35.0, 60.0);
    let first = stream.uniform_in(0.0, beat);
    let spike_amp = stream.uniform_in(0.6, 1.0);
    let width = stream.uniform_in(1.0, 2.0);
    let data = (0..length)
        .map(|t| {
            let t = t as f64;
            let tonal: f64 = params.iter().map(|&(a, period, phase)| a * math::sin(2.0 * PI * t / period + phase)).sum();
            // distance to the nearest beat
            let rel = (t - first) / beat;
            let nearest = math::floor(rel + 0.5);
            let d = (rel - nearest) * beat;
            let spike = spike_amp * math::exp(-0.5 * d * d / (width * width));
            tonal + spike
        })
        .collect();
    Tensor::vector(data).expect("finite synthetic signal")
}

/// `count` independent signals drawn from per-signal sub-streams.
pub fn signal_set(count: usize, length: usize, stream: &RngStream) -> Vec<Tensor> {
    (0..count).map(|i| synthetic_signal(length, &mut stream.derive(i as u64))).collect()
}

/// Random phantom in [0, 1]: a soft background disk with Gaussian blobs
/// and small sharp disks inside.
pub fn synthetic_phantom(size: usize, stream: &mut RngStream) -> Tensor {
    let n = size as f64;
    let c = (n - 1.0) / 2.0;
    let mut img = vec![0.0; size * size];
    let body_r = stream.uniform_in(0.35, 0.45) * n;
    let body_v = stream.uniform_in(0.2, 0.35);
    let blobs: Vec<(f64, f64, f64, f64)> = (0..2 + stream.below(3))
        .map(|_| {
            let r = stream.uniform_in(0.0, 0.25) * n;
            let a = stream.uniform_in(0.0, 2.0 * PI);
            (c + r * math::cos(a), c + r * math::sin(a), stream.uniform_in(0.05, 0.12) * n, stream.uniform_in(0.2, 0.5))
        })
        .collect();
    let disks: Vec<(f64, f64, f64, f64)> = (0..1 + stream.below(3))
        .map(|_| {
            let r = stream.uniform_in(0.0, 0.25) * n;
            let a = stream.uniform_in(0.0, 2.0 * PI);
            (c + r * math::cos(a), c + r * math::sin(a), stream.uniform_in(0.03, 0.08) * n, stream.uniform_in(0.1, 0.4))
        })
        .collect();
    for row in 0..size {
        for col in 0..size {
            let (y, x) = (row as f64, col as f64);
            let dr = ((x - c) * (x - c) + (y - c) * (y - c)) / (body_r * body_r);
            if dr > 1.0 {
                continue;
            }
            let mut v = body_v;
            for &(bx, by, s, a) in &blobs {
                let d2 = (x - bx) * (x - bx) + (y - by) * (y - by);
                v += a * math::exp(-0.5 * d2 / (s * s));
            }
            for &(dx, dy, r, a) in &disks {
                if (x - dx) * (x - dx) + (y - dy) * (y - dy) <= r * r {
                    v += a;
                }
            }
            img[row * size + col] = v.clamp(0.0, 1.0);
        }
    }
    Tensor::matrix(size, size, img).expect("finite phantom")
}

pub fn phantom_set(count: usize, size: usize, stream: &RngStream) -> Vec<Tensor> {
    (0..count).map(|i| synthetic_phantom(size, &mut stream.derive(i as u64))).collect()
}

/// Deterministic smooth phantom: two Gaussian blobs.
pub fn two_blob_phantom(size: usize, amplitude: f64) -> Tensor {
    let n = size as f64;
    let c = (n - 1.0) / 2.0;
    let blobs = [(c - 0.15 * n, c - 0.1 * n, 0.12 * n, amplitude), (c + 0.12 * n, c + 0.14 * n, 0.09 * n, 0.7 * amplitude)];
    let data = (0..size * size)
        .map(|i| {
            let (y, x) = ((i / size) as f64, (i % size) as f64);
            blobs
                .iter()
                .map(|&(bx, by, s, a)| a * math::exp(-0.5 * ((x - bx) * (x - bx) + (y - by) * (y - by)) / (s * s)))
                .sum()
        })
        .collect();
    Tensor::matrix(size, size, data).expect("finite phantom")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signals_are_seeded_and_bounded() {
        let s = RngStream::new(1);
        let a = signal_set(3, 200, &s);
        let b = signal_set(3, 200, &s);
        assert_eq!(a, b);
        assert_ne!(a[0], a[1]);
        for sig in &a {
            assert!(sig.data().iter().all(|v| v.abs() < 3.0));
        }
    }

    #[test]
    fn phantoms_stay_in_unit_range() {
        let p = phantom_set(2, 32, &RngStream::new(4));
        for img in &p {
            assert!(img.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
            assert!(img.data().iter().any(|&v| v > 0.1));
        }
        let smooth = two_blob_phantom(64, 0.5);
        let peak = smooth.data().iter().cloned().fold(0.0, f64::max);
        assert!(peak > 0.45 && peak < 0.5 * 1.7);
    }
}
