//! Closed-form Fourier identification of 1-D linear constant-coefficient
//! SPDEs `du = Σ_α a_α ∂^α u dt + (Σ_β b_β ∂^β) R dW`.
//!
//! Each Fourier mode evolves by the scalar multiplier `L(ξ) = Σ a_α (iξ)^α`,
//! so log-ratios of mode values between two times are polynomials in `ξ`:
//! even orders show up in the log-modulus, odd orders in the phase. Modes
//! use the physical frequency `ξ = 2πk/L` and the scaling
//! `û(ξ) = (2π)^{-1/2} Δx Σ_m e^{-iξx_m} u_m`, which approximates the
//! continuum transform; the scaling cancels in every ratio.

use nalgebra::{DMatrix, DVector};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::data::TrajectoryEnsemble;
use crate::error::{Error, Result};
use crate::linalg::lstsq;

/// Arguments above this are treated as wrapped phases.
pub const PHASE_LIMIT: f64 = 3.0;

/// Fourier values of one time slice: sample mean and every path.
#[derive(Debug, Clone)]
pub struct ModeSlice {
    pub wavenumbers: Vec<i64>,
    pub xi: Vec<f64>,
    pub mean: Vec<Complex64>,
    pub paths: Vec<Vec<Complex64>>,
}

/// Mode values at two times `t1 < t2`.
#[derive(Debug, Clone)]
pub struct ModeTable {
    pub wavenumbers: Vec<i64>,
    pub xi: Vec<f64>,
    pub t1: f64,
    pub t2: f64,
    pub mean1: Vec<Complex64>,
    pub mean2: Vec<Complex64>,
    /// Per-path values, `paths1[n][k]`. May be empty for the mean-ratio routes.
    pub paths1: Vec<Vec<Complex64>>,
    pub paths2: Vec<Vec<Complex64>>,
}

/// Scaled transform of a periodic field at all `M` wavenumbers, in FFT order.
pub fn fourier_transform(field: &[f64], x0: f64, dx: f64) -> Vec<Complex64> {
    let m = field.len();
    let mut buf: Vec<Complex64> = field.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(m).process(&mut buf);
    let length = m as f64 * dx;
    let scale = dx / (2.0 * std::f64::consts::PI).sqrt();
    buf.iter()
        .enumerate()
        .map(|(k, v)| {
            let kk = if k <= m / 2 { k as f64 } else { k as f64 - m as f64 };
            let xi = 2.0 * std::f64::consts::PI * kk / length;
            // shift the origin from x_0 to 0
            v * Complex64::from_polar(scale, -xi * x0)
        })
        .collect()
}

fn selected(m: usize, max_mode: usize) -> Vec<(usize, i64)> {
    let mx = max_mode as i64;
    (-mx..=mx)
        .map(|k| ((if k < 0 { k + m as i64 } else { k }) as usize, k))
        .collect()
}

/// Mode values at time index `time` for `|k| ≤ max_mode`.
pub fn fourier_modes(ens: &TrajectoryEnsemble, component: usize, time: usize, max_mode: usize) -> Result<ModeSlice> {
    let g = &ens.grid;
    if g.space_dims() != 1 {
        return Err(Error::InvalidArgument("Fourier identification needs a 1-D grid".into()));
    }
    let m = g.num_space[0];
    if max_mode + 1 > m / 2 {
        return Err(Error::InvalidArgument(format!(
            "max mode {max_mode} exceeds {} for {m} points",
            m / 2 - 1
        )));
    }
    let sel = selected(m, max_mode);
    let length = m as f64 * g.dx[0];
    let pick = |f: &[f64]| {
        let full = fourier_transform(f, g.x0[0], g.dx[0]);
        sel.iter().map(|&(i, _)| full[i]).collect::<Vec<_>>()
    };
    let paths: Vec<Vec<Complex64>> = (0..ens.num_paths).map(|n| pick(ens.slice(n, component, time))).collect();
    Ok(ModeSlice {
        wavenumbers: sel.iter().map(|s| s.1).collect(),
        xi: sel.iter().map(|s| 2.0 * std::f64::consts::PI * s.1 as f64 / length).collect(),
        mean: pick(&ens.mean_slice(component, time)),
        paths,
    })
}

pub fn mode_table(ens: &TrajectoryEnsemble, component: usize, i1: usize, i2: usize, max_mode: usize) -> Result<ModeTable> {
    if i1 >= i2 || i2 >= ens.grid.num_times {
        return Err(Error::InvalidArgument(format!("time indices {i1} < {i2} required")));
    }
    let a = fourier_modes(ens, component, i1, max_mode)?;
    let b = fourier_modes(ens, component, i2, max_mode)?;
    Ok(ModeTable {
        wavenumbers: a.wavenumbers,
        xi: a.xi,
        t1: ens.grid.time(i1),
        t2: ens.grid.time(i2),
        mean1: a.mean,
        mean2: b.mean,
        paths1: a.paths,
        paths2: b.paths,
    })
}

/// How log-ratios are formed from the table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftRoute {
    /// Log of the ratio of sample-mean modes. Recovers the Itô drift; exact
    /// for additive noise.
    MeanRatio,
    /// Sample mean of per-path log-ratios. For multiplicative noise this
    /// recovers the drift of the Stratonovich form.
    PathRatio,
}

/// Coefficients of `Σ_α a_α ∂^α u` by derivative order `0..=p1`.
#[derive(Debug, Clone, Serialize)]
pub struct LinearDrift {
    pub coeffs: Vec<f64>,
    pub modes_used: Vec<i64>,
}

impl LinearDrift {
    pub fn names(&self) -> Vec<String> {
        (0..self.coeffs.len()).map(order_name).collect()
    }
}

/// `u`, `u_x`, `u_xx`, ...
pub fn order_name(k: usize) -> String {
    if k == 0 {
        "u".into()
    } else {
        format!("u_{}", "x".repeat(k))
    }
}

/// `(-1)^{⌊k/2⌋}`: maps `i^k` (even `k`) or `i^{k-1}` (odd `k`) to a sign.
fn quarter_sign(k: usize) -> f64 {
    if (k / 2) % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

fn retained(table: &ModeTable, floor: f64) -> Vec<usize> {
    let max = table.mean1.iter().map(|v| v.norm()).fold(0.0, f64::max);
    (0..table.xi.len())
        .filter(|&k| table.mean1[k].norm() > floor * max && table.mean2[k].norm() > 0.0)
        .collect()
}

fn check_phase(mode: i64, arg: f64) -> Result<()> {
    if arg.abs() > PHASE_LIMIT {
        return Err(Error::PhaseWrap { mode, arg: arg.abs() });
    }
    Ok(())
}

/// Least squares of `y_k ≈ Σ_{γ∈orders} c_γ ξ_k^γ` with a rank check.
fn poly_fit(xi: &[f64], y: &[f64], orders: &[usize]) -> Result<Vec<f64>> {
    if orders.is_empty() {
        return Ok(Vec::new());
    }
    let a = DMatrix::from_fn(xi.len(), orders.len(), |r, c| xi[r].powi(orders[c] as i32));
    let sv = a.clone().svd(false, false).singular_values;
    let (smax, smin) = (sv.max(), sv.min());
    if xi.len() < orders.len() || !(smin > 1e-12 * smax) {
        return Err(Error::RankDeficient(format!(
            "{} usable modes for {} monomials",
            xi.len(),
            orders.len()
        )));
    }
    Ok(lstsq(&a, &DVector::from_column_slice(y)).as_slice().to_vec())
}

/// Fits even and odd parts: `re ≈ Σ_{even γ} c_γ ξ^γ`, `im ≈ Σ_{odd γ} c_γ ξ^γ`.
/// Returns `c_γ` for `γ = 0..=deg`.
fn split_fit(xi: &[f64], re: &[f64], im: &[f64], deg: usize) -> Result<Vec<f64>> {
    let even: Vec<usize> = (0..=deg).filter(|k| k % 2 == 0).collect();
    let odd: Vec<usize> = (0..=deg).filter(|k| k % 2 == 1).collect();
    let ce = poly_fit(xi, re, &even)?;
    let co = poly_fit(xi, im, &odd)?;
    let mut c = vec![0.0; deg + 1];
    for (k, v) in even.iter().zip(ce) {
        c[*k] = v;
    }
    for (k, v) in odd.iter().zip(co) {
        c[*k] = v;
    }
    Ok(c)
}

/// `log` of the multiplier between the two times for each retained mode.
fn log_ratios(table: &ModeTable, idx: &[usize], route: DriftRoute) -> Result<Vec<Complex64>> {
    idx.iter()
        .map(|&k| {
            let mode = table.wavenumbers[k];
            match route {
                DriftRoute::MeanRatio => {
                    let r = table.mean2[k] / table.mean1[k];
                    check_phase(mode, r.arg())?;
                    Ok(r.ln())
                }
                DriftRoute::PathRatio => {
                    if table.paths1.is_empty() || table.paths1.len() != table.paths2.len() {
                        return Err(Error::InvalidArgument("per-path modes missing".into()));
                    }
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (p1, p2) in table.paths1.iter().zip(&table.paths2) {
                        let r = p2[k] / p1[k];
                        check_phase(mode, r.arg())?;
                        acc += r.ln();
                    }
                    Ok(acc / table.paths1.len() as f64)
                }
            }
        })
        .collect()
}

/// Drift coefficients `a_0..a_{p1}` from log-modulus and phase regressions.
pub fn identify_drift_linear(table: &ModeTable, p1: usize, route: DriftRoute, floor: f64) -> Result<LinearDrift> {
    let dt = table.t2 - table.t1;
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument("t2 must exceed t1".into()));
    }
    let idx = retained(table, floor);
    let logs = log_ratios(table, &idx, route)?;
    let xi: Vec<f64> = idx.iter().map(|&k| table.xi[k]).collect();
    let re: Vec<f64> = logs.iter().map(|l| l.re / dt).collect();
    let im: Vec<f64> = logs.iter().map(|l| l.im / dt).collect();
    let c = split_fit(&xi, &re, &im, p1)?;
    Ok(LinearDrift {
        coeffs: c.iter().enumerate().map(|(k, v)| v * quarter_sign(k)).collect(),
        modes_used: idx.iter().map(|&k| table.wavenumbers[k]).collect(),
    })
}

/// `L(ξ) = Σ_α a_α (iξ)^α`.
pub fn symbol(a: &[f64], xi: f64) -> Complex64 {
    a.iter()
        .enumerate()
        .map(|(k, &v)| v * Complex64::new(0.0, xi).powi(k as i32))
        .sum()
}

/// Which quadratic map of `b` the recovered form represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadFormKind {
    /// Stratonovich multiplicative noise: `c_γ = Σ_{β+β̂=γ} i^{|β|+|β̂|} b_β b_β̂`
    /// for even `γ` and `i^{|β|+|β̂|-1}` for odd `γ`.
    Multiplicative,
    /// Additive noise: `|Σ b_β (iξ)^β|² = Σ_γ c_γ ξ^γ`, with
    /// `c_γ = Σ_{β+β̂=γ} i^{|β|-|β̂|} b_β b_β̂` (odd `γ` vanish).
    Additive,
}

#[derive(Debug, Clone, Serialize)]
pub struct QuadForm {
    pub kind: QuadFormKind,
    pub p2: usize,
    /// `c_γ` for `γ = 0..=2·p2`.
    pub c: Vec<f64>,
    pub modes_used: Vec<i64>,
}

/// Applies the quadratic map of `kind` to `b`.
pub fn quad_form_of(kind: QuadFormKind, b: &[f64]) -> Vec<f64> {
    let p2 = b.len().saturating_sub(1);
    let mut c = vec![0.0; 2 * p2 + 1];
    for (i, &bi) in b.iter().enumerate() {
        for (j, &bj) in b.iter().enumerate() {
            let g = i + j;
            let w = match kind {
                QuadFormKind::Multiplicative => quarter_sign(g),
                QuadFormKind::Additive => {
                    let d = i as i64 - j as i64;
                    match d.rem_euclid(4) {
                        0 => 1.0,
                        2 => -1.0,
                        // i^{±1} terms cancel in symmetric pairs
                        _ => 0.0,
                    }
                }
            };
            c[g] += w * bi * bj;
        }
    }
    c
}

/// Quadratic form of multiplicative (Stratonovich) diffusion given the
/// Stratonovich drift `a_known`, from the ratio of sample-mean modes.
pub fn identify_diffusion_quadform(table: &ModeTable, a_known: &[f64], p2: usize, floor: f64) -> Result<QuadForm> {
    let dt = table.t2 - table.t1;
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument("t2 must exceed t1".into()));
    }
    let idx = retained(table, floor);
    let logs = log_ratios(table, &idx, DriftRoute::MeanRatio)?;
    let xi: Vec<f64> = idx.iter().map(|&k| table.xi[k]).collect();
    let y: Vec<Complex64> = logs
        .iter()
        .zip(&xi)
        .map(|(l, &x)| 2.0 * (l / dt - symbol(a_known, x)))
        .collect();
    let re: Vec<f64> = y.iter().map(|v| v.re).collect();
    let im: Vec<f64> = y.iter().map(|v| v.im).collect();
    Ok(QuadForm {
        kind: QuadFormKind::Multiplicative,
        p2,
        c: split_fit(&xi, &re, &im, 2 * p2)?,
        modes_used: idx.iter().map(|&k| table.wavenumbers[k]).collect(),
    })
}

/// Quadratic form of additive diffusion `(Σ b_β ∂^β) R dW` given the drift
/// and the transform `r_hat` of `R` at the table's modes. Needs per-path modes.
pub fn identify_diffusion_additive(
    table: &ModeTable,
    a_known: &[f64],
    r_hat: &[Complex64],
    p2: usize,
    floor: f64,
) -> Result<QuadForm> {
    let dt = table.t2 - table.t1;
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument("t2 must exceed t1".into()));
    }
    if table.paths1.is_empty() || r_hat.len() != table.xi.len() {
        return Err(Error::InvalidArgument("per-path modes and R̂ for every mode required".into()));
    }
    let rmax = r_hat.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let idx: Vec<usize> = (0..table.xi.len()).filter(|&k| r_hat[k].norm() > floor * rmax).collect();
    let mut xi = Vec::new();
    let mut f = Vec::new();
    for &k in &idx {
        let x = table.xi[k];
        let l = symbol(a_known, x);
        let prop = (l * dt).exp();
        let msq = table
            .paths1
            .iter()
            .zip(&table.paths2)
            .map(|(p1, p2)| (p2[k] - p1[k] * prop).norm_sqr())
            .sum::<f64>()
            / table.paths1.len() as f64;
        // ∫_0^Δt e^{2 Re L s} ds
        let w = if l.re.abs() * dt < 1e-12 {
            dt
        } else {
            ((2.0 * l.re * dt).exp() - 1.0) / (2.0 * l.re)
        };
        xi.push(x);
        f.push(msq / (r_hat[k].norm_sqr() * w));
    }
    let even: Vec<usize> = (0..=2 * p2).filter(|k| k % 2 == 0).collect();
    let ce = poly_fit(&xi, &f, &even)?;
    let mut c = vec![0.0; 2 * p2 + 1];
    for (k, v) in even.iter().zip(ce) {
        c[*k] = v;
    }
    Ok(QuadForm {
        kind: QuadFormKind::Additive,
        p2,
        c,
        modes_used: idx.iter().map(|&k| table.wavenumbers[k]).collect(),
    })
}

/// All real `b` reproducing a quadratic form, grouped into `±` classes.
#[derive(Debug, Clone, Serialize)]
pub struct Factorization {
    pub candidates: Vec<Vec<f64>>,
    /// One representative per class `{b, -b}`, first nonzero entry positive.
    pub classes: Vec<Vec<f64>>,
}

fn signed_roots(x: f64, tol: f64, what: &str) -> Result<Vec<f64>> {
    if x < -tol {
        return Err(Error::Inconsistent(format!("negative {what} = {x}")));
    }
    let r = x.max(0.0).sqrt();
    Ok(if r == 0.0 { vec![0.0] } else { vec![r, -r] })
}

impl QuadForm {
    /// Solves for `b` when `p2 ≤ 2`. `tol` is relative to `max(1, max|c_γ|)`.
    pub fn factorize(&self, tol: f64) -> Result<Factorization> {
        if self.p2 > 2 {
            return Err(Error::InvalidArgument("factorization implemented for p2 ≤ 2 only".into()));
        }
        let scale = self.c.iter().fold(1.0, |a: f64, v| a.max(v.abs()));
        let atol = tol * scale;
        // leading and trailing entries are b_0² and b_{p2}² up to sign
        let lead = |g: usize| self.c[g] * quarter_sign(g).powi(if self.kind == QuadFormKind::Multiplicative { 1 } else { 0 });
        let mut cands: Vec<Vec<f64>> = Vec::new();
        match self.p2 {
            0 => {
                for b0 in signed_roots(lead(0), atol, "b_0²")? {
                    cands.push(vec![b0]);
                }
            }
            1 => {
                for b0 in signed_roots(lead(0), atol, "b_0²")? {
                    for b1 in signed_roots(lead(2), atol, "b_1²")? {
                        cands.push(vec![b0, b1]);
                    }
                }
            }
            _ => {
                for b0 in signed_roots(lead(0), atol, "b_0²")? {
                    for b2 in signed_roots(lead(4), atol, "b_2²")? {
                        // middle coefficient: additive c_2 = b_1² - 2b_0b_2,
                        // multiplicative c_2 = -(b_1² + 2b_0b_2)
                        let b1sq = match self.kind {
                            QuadFormKind::Additive => self.c[2] + 2.0 * b0 * b2,
                            QuadFormKind::Multiplicative => -self.c[2] - 2.0 * b0 * b2,
                        };
                        if b1sq < -atol {
                            continue;
                        }
                        let r = b1sq.max(0.0).sqrt();
                        for b1 in if r == 0.0 { vec![0.0] } else { vec![r, -r] } {
                            cands.push(vec![b0, b1, b2]);
                        }
                    }
                }
            }
        }
        let consistent: Vec<Vec<f64>> = cands
            .into_iter()
            .filter(|b| {
                quad_form_of(self.kind, b)
                    .iter()
                    .zip(&self.c)
                    .all(|(x, y)| (x - y).abs() <= atol.max(1e-12 * scale))
            })
            .collect();
        if consistent.is_empty() {
            return Err(Error::Inconsistent("no real coefficients reproduce the quadratic form".into()));
        }
        let mut classes: Vec<Vec<f64>> = Vec::new();
        for b in &consistent {
            let flip = b.iter().find(|v| **v != 0.0).is_some_and(|v| *v < 0.0);
            let rep: Vec<f64> = b.iter().map(|v| if flip { -v } else { *v }).collect();
            let close = |c: &Vec<f64>| c.iter().zip(&rep).all(|(x, y)| (x - y).abs() <= atol.max(1e-12 * scale));
            if !classes.iter().any(close) {
                classes.push(rep);
            }
        }
        Ok(Factorization {
            candidates: consistent,
            classes,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::UniformGrid;
    use std::f64::consts::PI;

    fn grid(m: usize) -> UniformGrid {
        UniformGrid::new_1d(0.0, 1.0, 2, -PI, 2.0 * PI, m).unwrap()
    }

    fn single_field(values: Vec<f64>) -> TrajectoryEnsemble {
        let g = grid(values.len());
        let mut v = values.clone();
        v.extend(values);
        TrajectoryEnsemble::new(g, 1, 1, v).unwrap()
    }

    #[test]
    fn pure_tone_and_constant() {
        let g = grid(64);
        let e = single_field(g.axis(0).iter().map(|x| x.cos()).collect());
        let s = fourier_modes(&e, 0, 0, 20).unwrap();
        for (k, v) in s.wavenumbers.iter().zip(&s.mean) {
            if k.abs() == 1 {
                // ∫cos(x)e^{∓ix}dx/√(2π) = √(π/2)
                assert!((v.re - (PI / 2.0).sqrt()).abs() < 1e-12 && v.im.abs() < 1e-12);
            } else {
                assert!(v.norm() < 1e-12);
            }
        }
        let e = single_field(vec![2.5; 64]);
        let s = fourier_modes(&e, 0, 0, 20).unwrap();
        let zero = s.wavenumbers.iter().position(|&k| k == 0).unwrap();
        assert!((s.mean[zero].re - 2.5 * (2.0 * PI).sqrt()).abs() < 1e-12);
        assert!(fourier_modes(&e, 0, 0, 32).is_err());
    }

    #[test]
    fn parseval() {
        let g = grid(64);
        let f: Vec<f64> = g.axis(0).iter().map(|x| (x.sin() + 0.3 * (2.0 * x).cos()).exp()).collect();
        // band-limited enough that the dropped Nyquist mode is negligible
        let e = single_field(f.clone());
        let s = fourier_modes(&e, 0, 0, 31).unwrap();
        let lhs: f64 = s.mean.iter().map(|v| v.norm_sqr()).sum();
        let rhs: f64 = f.iter().map(|v| v * v).sum::<f64>() * g.dx[0];
        assert!((lhs - rhs).abs() < 1e-10 * rhs);
    }

    /// Table from the exact propagator `û(t2) = û(t1) e^{L(ξ)Δt}`.
    fn exact_table(xi: &[f64], u1: &[Complex64], a: &[f64], t1: f64, t2: f64) -> ModeTable {
        let mean2 = xi.iter().zip(u1).map(|(&x, u)| u * (symbol(a, x) * (t2 - t1)).exp()).collect();
        ModeTable {
            wavenumbers: xi.iter().map(|x| *x as i64).collect(),
            xi: xi.to_vec(),
            t1,
            t2,
            mean1: u1.to_vec(),
            mean2,
            paths1: vec![],
            paths2: vec![],
        }
    }

    fn modes() -> (Vec<f64>, Vec<Complex64>) {
        let xi: Vec<f64> = (-6..=6).map(|k| k as f64).collect();
        let u1 = xi.iter().map(|x| Complex64::new(1.0 + 0.1 * x, 0.5 - 0.05 * x * x)).collect();
        (xi, u1)
    }

    #[test]
    fn exact_drift_recovery() {
        let (xi, u1) = modes();
        let a = [0.0, 3.0, 0.5];
        let t = exact_table(&xi, &u1, &a, 0.0, 1e-3);
        let d = identify_drift_linear(&t, 2, DriftRoute::MeanRatio, 1e-8).unwrap();
        assert!((d.coeffs[0]).abs() < 1e-8);
        assert!((d.coeffs[1] - 3.0).abs() < 1e-8 && (d.coeffs[2] - 0.5).abs() < 1e-8);
        assert_eq!(d.names(), vec!["u", "u_x", "u_xx"]);
        let a4 = [-0.2, 1.0, 0.3, -0.05, -0.01];
        let t = exact_table(&xi, &u1, &a4, 0.5, 0.502);
        let d = identify_drift_linear(&t, 4, DriftRoute::MeanRatio, 1e-8).unwrap();
        for (x, y) in d.coeffs.iter().zip(a4) {
            assert!((x - y).abs() < 1e-8, "{:?}", d.coeffs);
        }
    }

    #[test]
    fn single_mode_is_rank_deficient() {
        let xi = vec![-5.0, 5.0];
        let u1 = vec![Complex64::new(0.5, 0.0); 2];
        let t = exact_table(&xi, &u1, &[0.0, 3.0, 0.5], 0.0, 1e-3);
        assert!(matches!(
            identify_drift_linear(&t, 2, DriftRoute::MeanRatio, 1e-8),
            Err(Error::RankDeficient(_))
        ));
    }

    #[test]
    fn phase_wrap_refused() {
        let (xi, u1) = modes();
        // 3·6·Δt ≈ 3.1 at the outermost mode
        let t = exact_table(&xi, &u1, &[0.0, 3.0], 0.0, 0.172);
        assert!(matches!(
            identify_drift_linear(&t, 1, DriftRoute::MeanRatio, 1e-8),
            Err(Error::PhaseWrap { .. })
        ));
    }

    #[test]
    fn quadform_of_planted_b() {
        let b = [0.0, 1.0];
        let c = quad_form_of(QuadFormKind::Multiplicative, &b);
        assert_eq!(c, vec![0.0, 0.0, -1.0]);
        let c = quad_form_of(QuadFormKind::Additive, &[1.0, 0.0, 2.0]);
        assert_eq!(c, vec![1.0, 0.0, -4.0, 0.0, 4.0]);
        // sign symmetry
        assert_eq!(quad_form_of(QuadFormKind::Multiplicative, &[0.3, -1.0, 2.0]), quad_form_of(QuadFormKind::Multiplicative, &[-0.3, 1.0, -2.0]));
    }

    /// Mean ratio for Stratonovich noise `G u ∘ dW`: `e^{(L + ½ C(iξ))Δt}`.
    fn strat_table(a: &[f64], b: &[f64], t2: f64) -> ModeTable {
        let (xi, u1) = modes();
        let mean2 = xi
            .iter()
            .zip(&u1)
            .map(|(&x, u)| {
                let g = symbol(b, x);
                u * ((symbol(a, x) + 0.5 * g * g) * t2).exp()
            })
            .collect();
        ModeTable {
            wavenumbers: xi.iter().map(|x| *x as i64).collect(),
            xi,
            t1: 0.0,
            t2,
            mean1: u1,
            mean2,
            paths1: vec![],
            paths2: vec![],
        }
    }

    #[test]
    fn multiplicative_quadform_round_trip() {
        for b in [vec![0.0, 1.0], vec![0.4, -0.7, 0.2], vec![0.0]] {
            let a = [0.1, 3.0, 0.2];
            let t = strat_table(&a, &b, 1e-3);
            let p2 = b.len() - 1;
            let q = identify_diffusion_quadform(&t, &a, p2, 1e-8).unwrap();
            let want = quad_form_of(QuadFormKind::Multiplicative, &b);
            for (x, y) in q.c.iter().zip(&want) {
                assert!((x - y).abs() < 1e-8, "{:?} {:?}", q.c, want);
            }
            let f = q.factorize(1e-6).unwrap();
            let rep = &f.classes;
            let canon: Vec<f64> = {
                let flip = b.iter().find(|v| **v != 0.0).is_some_and(|v| *v < 0.0);
                b.iter().map(|v| if flip { -v } else { *v }).collect()
            };
            assert!(rep.iter().any(|r| r.iter().zip(&canon).all(|(x, y)| (x - y).abs() < 1e-6)), "{rep:?}");
        }
    }

    #[test]
    fn worked_example_factorization() {
        let q = QuadForm {
            kind: QuadFormKind::Additive,
            p2: 2,
            c: vec![1.0, 0.0, -4.0, 0.0, 4.0],
            modes_used: vec![],
        };
        let f = q.factorize(1e-9).unwrap();
        assert!(f.candidates.len() <= 8);
        assert_eq!(f.classes, vec![vec![1.0, 0.0, 2.0]]);
        assert_eq!(f.candidates.len(), 2);
        let bad = QuadForm { c: vec![-1.0, 0.0, 0.0, 0.0, 1.0], ..q };
        assert!(matches!(bad.factorize(1e-9), Err(Error::Inconsistent(_))));
    }

    #[test]
    fn zero_noise_gives_zero_form() {
        let a = [0.0, 3.0, 0.5];
        let t = strat_table(&a, &[0.0, 0.0], 1e-3);
        let q = identify_diffusion_quadform(&t, &a, 1, 1e-8).unwrap();
        assert!(q.c.iter().all(|v| v.abs() < 1e-8));
    }

    #[test]
    fn path_ratio_matches_mean_ratio_without_noise() {
        let (xi, u1) = modes();
        let a = [0.0, -2.0, 0.3];
        let mut t = exact_table(&xi, &u1, &a, 0.0, 1e-3);
        t.paths1 = vec![t.mean1.clone(); 3];
        t.paths2 = vec![t.mean2.clone(); 3];
        let d = identify_drift_linear(&t, 2, DriftRoute::PathRatio, 1e-8).unwrap();
        assert!((d.coeffs[1] + 2.0).abs() < 1e-8 && (d.coeffs[2] - 0.3).abs() < 1e-8);
    }

    #[test]
    fn additive_form_from_exact_second_moments() {
        // two paths with increments ±s, so the sample second moment is exact
        let (xi, u1) = modes();
        let a = [0.0, 1.0, 0.4];
        let b = [0.5, 0.0, 0.2];
        let dt = 1e-2;
        let r_hat: Vec<Complex64> = xi.iter().map(|x| Complex64::new(1.0 / (1.0 + x * x), 0.0)).collect();
        let mut p2s = vec![vec![], vec![]];
        for (k, &x) in xi.iter().enumerate() {
            let l = symbol(&a, x);
            let w = if l.re == 0.0 {
                dt
            } else {
                ((2.0 * l.re * dt).exp() - 1.0) / (2.0 * l.re)
            };
            let amp = symbol(&b, x).norm() * r_hat[k].norm() * w.sqrt();
            let det = u1[k] * (l * dt).exp();
            p2s[0].push(det + amp);
            p2s[1].push(det - amp);
        }
        let t = ModeTable {
            wavenumbers: xi.iter().map(|x| *x as i64).collect(),
            xi: xi.clone(),
            t1: 0.0,
            t2: dt,
            mean1: u1.clone(),
            mean2: u1.clone(),
            paths1: vec![u1.clone(), u1.clone()],
            paths2: p2s,
        };
        let q = identify_diffusion_additive(&t, &a, &r_hat, 2, 1e-8).unwrap();
        let want = quad_form_of(QuadFormKind::Additive, &b);
        for (x, y) in q.c.iter().zip(&want) {
            assert!((x - y).abs() < 1e-8, "{:?}", q.c);
        }
        let f = q.factorize(1e-6).unwrap();
        assert!(f.classes.iter().any(|r| (r[0] - 0.5).abs() < 1e-6 && r[1].abs() < 1e-6 && (r[2] - 0.2).abs() < 1e-6));
    }
}
