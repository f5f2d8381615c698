//! Shared statistics and fixtures for the integration tests.

#![allow(dead_code)]

use cpf_core::models::{
    simulate, Diffusion, DiffusionParams, LinearGaussian, LinearGaussianParams, Ricker, RickerParams,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn std_error(xs: &[f64]) -> f64 {
    (variance(xs) / xs.len() as f64).sqrt()
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Kolmogorov survival function `Q(λ) = 2 Σ (−1)^{j−1} exp(−2 j² λ²)`.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..200 {
        let term = (-2.0 * (j * j) as f64 * lambda * lambda).exp();
        sum += if j % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov–Smirnov p-value (asymptotic, with the usual
/// small-sample correction).
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < n && j < m {
        let x = a[i].min(b[j]);
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let en = ((n * m) as f64 / (n + m) as f64).sqrt();
    kolmogorov_q((en + 0.12 + 0.11 / en) * d)
}

/// One-sample Kolmogorov–Smirnov p-value against a continuous CDF.
pub fn ks_one_sample<F: Fn(f64) -> f64>(xs: &[f64], cdf: F) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in v.iter().enumerate() {
        let f = cdf(x);
        d = d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs());
    }
    let en = n.sqrt();
    kolmogorov_q((en + 0.12 + 0.11 / en) * d)
}

/// One-sided Mann–Whitney (Wilcoxon rank-sum) p-value for the
/// alternative that `a` tends to be smaller than `b`. Normal
/// approximation with tie and continuity corrections.
pub fn mann_whitney_less(a: &[f64], b: &[f64]) -> f64 {
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let mut all: Vec<(f64, bool)> = a.iter().map(|&x| (x, true)).chain(b.iter().map(|&x| (x, false))).collect();
    all.sort_by(|x, y| x.0.total_cmp(&y.0));
    let n = all.len();
    let mut rank_sum_a = 0.0;
    let mut ties = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        let t = (j - i + 1) as f64;
        ties += t * t * t - t;
        for item in &all[i..=j] {
            if item.1 {
                rank_sum_a += rank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_a - n1 * (n1 + 1.0) / 2.0;
    let nn = n as f64;
    let var = n1 * n2 / 12.0 * ((nn + 1.0) - ties / (nn * (nn - 1.0)));
    if var <= 0.0 {
        return 1.0;
    }
    let z = (u - n1 * n2 / 2.0 + 0.5) / var.sqrt();
    Normal::new(0.0, 1.0).unwrap().cdf(z)
}

/// One-sided test that `a` has smaller spread than `b`: Mann–Whitney on
/// squared deviations from each sample's own median.
pub fn smaller_spread(a: &[f64], b: &[f64]) -> f64 {
    let dev = |xs: &[f64]| {
        let m = median(xs);
        xs.iter().map(|x| (x - m) * (x - m)).collect::<Vec<_>>()
    };
    mann_whitney_less(&dev(a), &dev(b))
}

/// Chi-square goodness-of-fit p-value for observed counts against
/// expected counts.
pub fn chi_square(observed: &[f64], expected: &[f64]) -> f64 {
    let stat: f64 = observed.iter().zip(expected).map(|(o, e)| (o - e) * (o - e) / e).sum();
    let df = (observed.len() - 1) as f64;
    1.0 - ChiSquared::new(df).unwrap().cdf(stat)
}

pub fn standard_normal_cdf(x: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().cdf(x)
}

pub fn ricker_star(d: usize) -> RickerParams {
    RickerParams { log_r: 2.0, sigma_eps: 0.3, phi: 5.0, x0: vec![5.0; d] }
}

pub fn ricker_scaled(p: &RickerParams, s: f64) -> RickerParams {
    RickerParams { log_r: p.log_r * s, sigma_eps: p.sigma_eps * s, phi: p.phi * s, x0: p.x0.clone() }
}

/// Observations simulated at `params`, `steps` rows.
pub fn ricker_data(params: &RickerParams, steps: usize, seed: u64) -> Vec<f64> {
    let template = Ricker::new(params.clone(), vec![0.0; steps * params.dim()]).unwrap();
    simulate(&template, &mut rng(seed)).1
}

pub fn diffusion_data(params: DiffusionParams, steps: usize, seed: u64) -> Vec<f64> {
    let template = Diffusion::new(params, vec![0.0; steps]).unwrap();
    simulate(&template, &mut rng(seed)).1
}

pub fn lg_params(a: f64) -> LinearGaussianParams {
    LinearGaussianParams { a, sigma_x: 1.0, sigma_y: 1.0, prior_mean: 0.0, prior_var: 1.0 }
}

pub fn lg_data(params: LinearGaussianParams, steps: usize, seed: u64) -> Vec<f64> {
    let template = LinearGaussian::new(params, vec![0.0; steps]).unwrap();
    simulate(&template, &mut rng(seed)).1
}
