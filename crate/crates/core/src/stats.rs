//! Normality testing and normal quantiles.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Smallest sample accepted by the omnibus test.
pub const MIN_SAMPLE: usize = 20;

/// p-values are clamped to this range before taking normal quantiles.
pub const P_MIN: f64 = 1e-300;
pub const P_MAX: f64 = 1.0 - 1e-16;

/// Standard normal quantile `Φ^{-1}(p)` after clamping `p`.
pub fn normal_quantile(p: f64) -> f64 {
    let p = p.clamp(P_MIN, P_MAX);
    Normal::standard().inverse_cdf(p)
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    Normal::standard().cdf(z)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormalityTest {
    pub z_skew: f64,
    pub z_kurt: f64,
    pub k2: f64,
    pub p: f64,
    /// Zero (or round-off) spread; `p` is then below machine epsilon.
    pub degenerate: bool,
}

fn central_moments(x: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in x {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    (m2 / n, m3 / n, m4 / n)
}

/// Skewness z-score with the small-sample transformation (D'Agostino 1970).
fn skew_z(b1: f64, n: f64) -> f64 {
    let y = b1 * ((n + 1.0) * (n + 3.0) / (6.0 * (n - 2.0))).sqrt();
    let beta2 = 3.0 * (n * n + 27.0 * n - 70.0) * (n + 1.0) * (n + 3.0)
        / ((n - 2.0) * (n + 5.0) * (n + 7.0) * (n + 9.0));
    let w2 = -1.0 + (2.0 * (beta2 - 1.0)).sqrt();
    let delta = 1.0 / (0.5 * w2.ln()).sqrt();
    let alpha = (2.0 / (w2 - 1.0)).sqrt();
    let y = if y == 0.0 { 1.0 } else { y };
    delta * (y / alpha).asinh()
}

/// Kurtosis z-score by the Anscombe–Glynn transformation.
fn kurt_z(b2: f64, n: f64) -> f64 {
    let e = 3.0 * (n - 1.0) / (n + 1.0);
    let var = 24.0 * n * (n - 2.0) * (n - 3.0) / ((n + 1.0) * (n + 1.0) * (n + 3.0) * (n + 5.0));
    let x = (b2 - e) / var.sqrt();
    let sqrt_beta1 = 6.0 * (n * n - 5.0 * n + 2.0) / ((n + 7.0) * (n + 9.0))
        * (6.0 * (n + 3.0) * (n + 5.0) / (n * (n - 2.0) * (n - 3.0))).sqrt();
    let a = 6.0
        + 8.0 / sqrt_beta1 * (2.0 / sqrt_beta1 + (1.0 + 4.0 / (sqrt_beta1 * sqrt_beta1)).sqrt());
    let term1 = 1.0 - 2.0 / (9.0 * a);
    let denom = 1.0 + x * (2.0 / (a - 4.0)).sqrt();
    let term2 = if denom == 0.0 {
        f64::NAN
    } else {
        denom.signum() * ((1.0 - 2.0 / a) / denom.abs()).cbrt()
    };
    (term1 - term2) / (2.0 / (9.0 * a)).sqrt()
}

/// D'Agostino–Pearson K² omnibus test.
///
/// Samples whose standard deviation is at most `tol_scale · 1e-10` are
/// degenerate. Pass `None` to use the largest absolute sample as the scale.
pub fn dagostino_pearson(x: &[f64], tol_scale: Option<f64>) -> Result<NormalityTest> {
    if x.len() < MIN_SAMPLE {
        return Err(Error::SampleTooSmall(x.len()));
    }
    let n = x.len() as f64;
    let (m2, m3, m4) = central_moments(x);
    let scale = tol_scale.unwrap_or_else(|| x.iter().fold(0.0, |a: f64, v| a.max(v.abs())));
    if !(m2.sqrt() > 1e-10 * scale) {
        return Ok(NormalityTest {
            z_skew: f64::NAN,
            z_kurt: f64::NAN,
            k2: f64::INFINITY,
            p: 0.0,
            degenerate: true,
        });
    }
    let zs = skew_z(m3 / m2.powf(1.5), n);
    let zk = kurt_z(m4 / (m2 * m2), n);
    let k2 = zs * zs + zk * zk;
    // chi-square with two degrees of freedom has survival exp(-k/2)
    let p = if k2.is_nan() { 0.0 } else { (-0.5 * k2).exp() };
    Ok(NormalityTest {
        z_skew: zs,
        z_kurt: zk,
        k2,
        p,
        degenerate: false,
    })
}

/// Mean and unbiased standard deviation.
pub fn mean_std(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
