use metadenoise_core::evaluation::{paired_t_test_one_tailed, psnr, regularized_incomplete_beta, snr, student_t_upper_tail};
use metadenoise_core::noise::{apply_gaussian, apply_poisson_image, sample_poisson};
use metadenoise_core::{RngStream, Tensor};
use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};
use statrs::function::beta::beta_reg;

#[test]
fn t_tail_matches_statrs() {
    for df in [1.0, 2.0, 5.0, 9.0, 30.0, 149.0, 1499.0] {
        let dist = StudentsT::new(0.0, 1.0, df).unwrap();
        for t in [-4.0, -1.3, -0.2, 0.0, 0.4, 1.0, 2.1, 3.4641, 8.0] {
            let expected = 1.0 - dist.cdf(t);
            let got = student_t_upper_tail(t, df);
            assert!((got - expected).abs() < 1e-10, "df {df} t {t}: {got} vs {expected}");
        }
    }
}

#[test]
fn incomplete_beta_matches_statrs() {
    for &(a, b) in &[(0.5, 0.5), (1.0, 3.0), (4.5, 0.5), (20.0, 0.5), (2.0, 7.0)] {
        for x in [0.01, 0.2, 0.5, 0.77, 0.99] {
            let expected = beta_reg(a, b, x);
            assert!((regularized_incomplete_beta(x, a, b) - expected).abs() < 1e-12, "I_{x}({a}, {b})");
        }
    }
}

#[test]
fn t_test_against_direct_computation() {
    let a = [12.1, 11.4, 13.0, 12.7, 11.9, 12.2];
    let b = [11.8, 11.5, 12.1, 12.0, 11.0, 12.3];
    let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let sd = (d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let t = mean / (sd / n.sqrt());
    let p = 1.0 - StudentsT::new(0.0, 1.0, n - 1.0).unwrap().cdf(t);
    let r = paired_t_test_one_tailed(&a, &b).unwrap();
    approx::assert_relative_eq!(r.t, t, max_relative = 1e-12);
    assert!((r.p - p).abs() < 1e-10);
    assert_eq!(r.df, 5);
}

#[test]
fn metric_examples() {
    let y = Tensor::vector(vec![0.0; 4]).unwrap();
    let x = Tensor::vector(vec![5.0; 4]).unwrap();
    assert!((psnr(&x, &y, 255.0).unwrap() - 34.151).abs() < 1e-3);
    let y = Tensor::vector(vec![3.0, 4.0]).unwrap();
    let x = Tensor::vector(vec![6.0, 8.0]).unwrap();
    assert_eq!(snr(&x, &y).unwrap(), 0.0);
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (m, xs.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0))
}

#[test]
fn gaussian_moments() {
    let n = 200_000;
    let y = Tensor::vector(vec![0.25; n]).unwrap();
    let (mean, sigma) = (0.05, 0.3);
    let x = apply_gaussian(&y, mean, sigma, &mut RngStream::new(3)).unwrap();
    let noise: Vec<f64> = x.data().iter().map(|v| v - 0.25).collect();
    let (m, v) = mean_var(&noise);
    let var = sigma * sigma;
    assert!((m - mean).abs() < 3.0 * sigma / (n as f64).sqrt());
    // var of the sample variance for a normal: 2 sigma^4 / (n - 1)
    assert!((v - var).abs() < 3.0 * (2.0 * var * var / (n as f64 - 1.0)).sqrt());
}

#[test]
fn scaled_poisson_moments() {
    let n = 200_000;
    let (y0, peak) = (0.4, 60.0);
    let x = apply_poisson_image(&Tensor::vector(vec![y0; n]).unwrap(), peak, &mut RngStream::new(8)).unwrap();
    let (m, v) = mean_var(x.data());
    let var = y0 / peak;
    assert!((m - y0).abs() < 3.0 * (var / n as f64).sqrt());
    // Poisson(l)/p: fourth central moment (l + 3 l^2) / p^4
    let lam = y0 * peak;
    let mu4 = (lam + 3.0 * lam * lam) / peak.powi(4);
    let se = ((mu4 - var * var) / n as f64).sqrt();
    assert!((v - var).abs() < 3.0 * se, "variance {v} vs {var}");
}

fn chi_square_poisson(lambda: f64, lo: u64, hi: u64, draws: usize, seed: u64) {
    let mut s = RngStream::new(seed);
    let bins = (hi - lo + 1) as usize;
    // bin 0: <= lo, last: >= hi
    let mut counts = vec![0usize; bins];
    for _ in 0..draws {
        let k = sample_poisson(lambda, &mut s).unwrap();
        counts[(k.clamp(lo, hi) - lo) as usize] += 1;
    }
    let pmf = |k: u64| (-lambda + k as f64 * lambda.ln() - statrs::function::gamma::ln_gamma(k as f64 + 1.0)).exp();
    let mut probs: Vec<f64> = (lo..=hi).map(pmf).collect();
    probs[0] = (0..=lo).map(pmf).sum();
    probs[bins - 1] = 1.0 - probs[..bins - 1].iter().sum::<f64>();
    let stat: f64 = counts
        .iter()
        .zip(&probs)
        .map(|(&c, &p)| {
            let e = p * draws as f64;
            assert!(e >= 5.0, "expected count {e} too small");
            (c as f64 - e).powi(2) / e
        })
        .sum();
    let critical = ChiSquared::new((bins - 1) as f64).unwrap().inverse_cdf(0.99);
    assert!(stat < critical, "lambda {lambda}: chi2 {stat} >= {critical}");
}

#[test]
fn poisson_chi_square_small_rate() {
    chi_square_poisson(4.0, 0, 15, 1_000_000, 21);
}

#[test]
fn poisson_chi_square_rejection_branch() {
    chi_square_poisson(50.0, 30, 72, 1_000_000, 22);
}
