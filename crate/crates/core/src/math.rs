//! Scalar numerics shared by the models and estimators.
//!
//! Everything routes through `libm` so a given seed produces the same numbers
//! on every platform.

pub use libm::{cos, erfc, exp, expm1, fabs, lgamma, log, log1p, pow, sin, sqrt};

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;
const SQRT_2PI: f64 = 2.506_628_274_631_000_7;

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * core::f64::consts::FRAC_1_SQRT_2)
}

/// Log density of `N(mean, sd^2)` at `x`.
pub fn normal_log_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * (LN_2PI + z * z) - log(sd)
}

/// Log pmf of a Poisson distribution with the given mean at `k`.
pub fn poisson_log_pmf(k: f64, mean: f64) -> f64 {
    k * log(mean) - mean - lgamma(k + 1.0)
}

/// Inverse of the standard normal CDF.
///
/// Acklam's rational approximation followed by one Halley step against
/// `erfc`; relative error stays below 1e-9 on (0, 1). Returns ±∞ at the
/// endpoints and NaN outside [0, 1].
pub fn normal_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.024_25;

    if p.is_nan() || !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }

    let x = if p < P_LOW {
        let q = sqrt(-2.0 * log(p));
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = sqrt(-2.0 * log1p(-p));
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };

    // Halley refinement. In the upper tail work with the complement so the
    // residual is not swamped by cancellation against 1.
    let (e, sign) = if p > 0.5 {
        (0.5 * erfc(x * core::f64::consts::FRAC_1_SQRT_2) - (1.0 - p), -1.0)
    } else {
        (normal_cdf(x) - p, 1.0)
    };
    let u = sign * e * SQRT_2PI * exp(0.5 * x * x);
    x - u / (1.0 + 0.5 * x * u)
}

/// Sum with Neumaier compensation; used where long accumulations feed a
/// normalising constant.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if fabs(sum) >= fabs(v) {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// `log(Σ exp(x_i))` without overflow. Returns -∞ for an empty or all -∞ input.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + log(compensated_sum(values.iter().map(|&v| exp(v - max))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ContinuousCDF, Normal};

    #[test]
    fn quantile_matches_reference_inverse() {
        let reference = Normal::new(0.0, 1.0).unwrap();
        let mut p = 1e-12;
        while p < 1.0 {
            let x = normal_quantile(p);
            let back = normal_cdf(x);
            let rel = ((back - p) / p).abs();
            assert!(rel < 1e-9, "p = {p}: round trip rel err {rel}");
            let r = reference.inverse_cdf(p);
            assert!((x - r).abs() <= 1e-9 * r.abs().max(1.0), "p = {p}: {x} vs {r}");
            p = if p < 0.01 { p * 3.0 } else { p + 0.0137 };
        }
    }

    #[test]
    fn quantile_upper_tail_and_symmetry() {
        for &p in &[1e-10, 1e-6, 0.01, 0.2, 0.4999] {
            let lo = normal_quantile(p);
            let hi = normal_quantile(1.0 - p);
            assert!((lo + hi).abs() < 1e-8 * lo.abs().max(1.0), "{p}: {lo} {hi}");
        }
        assert_eq!(normal_quantile(0.5), 0.0);
        assert!(normal_quantile(0.0).is_infinite());
        assert!(normal_quantile(1.5).is_nan());
    }

    #[test]
    fn poisson_at_zero_is_exp_minus_mean() {
        assert!((poisson_log_pmf(0.0, 1.0) + 1.0).abs() < 1e-15);
        // P(3; 2) = e^-2 2^3 / 6
        let expected = (-2.0f64).exp() * 8.0 / 6.0;
        assert!((poisson_log_pmf(3.0, 2.0).exp() - expected).abs() < 1e-14);
    }

    #[test]
    fn log_sum_exp_handles_large_offsets() {
        let v = [1000.0, 1000.0];
        assert!((log_sum_exp(&v) - (1000.0 + core::f64::consts::LN_2)).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
    }
}
