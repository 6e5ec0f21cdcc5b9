//! Nonlinear conjugate gradients for regression with quadratic measurements.
//!
//! Minimizes `L(c) = Σ_i (cᵀ G_i c − ζ_i)²` over coefficients restricted to
//! a support. Along any search direction `L` is an exact quartic in the step
//! length, so the line search starts from its exact minimizer and only falls
//! back to bracketing, and then to steepest descent, when the Wolfe tests fail.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Hager–Zhang lower-bound parameter for the CG coefficient.
const HZ_ETA: f64 = 0.01;
/// Wolfe sufficient-decrease parameter.
pub const WOLFE_DELTA: f64 = 0.1;
/// Wolfe curvature parameter.
pub const WOLFE_SIGMA: f64 = 0.9;
const APPROX_WOLFE_EPS: f64 = 1e-6;
const STALL_LIMIT: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CgOptions {
    pub max_iter: usize,
    pub grad_tol: f64,
    /// Starting value for support entries without a warm start.
    pub init: f64,
}

impl Default for CgOptions {
    fn default() -> Self {
        CgOptions {
            max_iter: 1000,
            grad_tol: 1e-14,
            init: 10.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CgReport {
    pub iterations: usize,
    pub loss: f64,
    pub grad_norm: f64,
    /// Steps where the Wolfe line search failed and steepest descent was used.
    pub fallbacks: usize,
    pub converged: bool,
}

/// Loss `Σ (cᵀG_i c − ζ_i)²` and its gradient `Σ 4(cᵀG_i c − ζ_i) G_i c`.
pub fn quad_loss_grad(g: &[DMatrix<f64>], zeta: &[f64], c: &DVector<f64>) -> (f64, DVector<f64>) {
    let mut loss = 0.0;
    let mut grad = DVector::zeros(c.len());
    for (gi, &z) in g.iter().zip(zeta) {
        let h = gi * c;
        let e = c.dot(&h) - z;
        loss += e * e;
        grad.axpy(4.0 * e, &h, 1.0);
    }
    (loss, grad)
}

/// Sub-matrices `G_i[S, S]`.
pub fn restrict(g: &[DMatrix<f64>], support: &[usize]) -> Vec<DMatrix<f64>> {
    g.iter()
        .map(|gi| {
            DMatrix::from_fn(support.len(), support.len(), |r, c| {
                gi[(support[r], support[c])]
            })
        })
        .collect()
}

/// Real roots of `a x³ + b x² + c x + d`, polished by Newton steps.
pub fn cubic_real_roots(a: f64, b: f64, c: f64, d: f64) -> Vec<f64> {
    let scale = a.abs().max(b.abs()).max(c.abs()).max(d.abs());
    if scale == 0.0 {
        return Vec::new();
    }
    let mut roots = Vec::new();
    if a.abs() <= 1e-14 * scale {
        if b.abs() <= 1e-14 * scale {
            if c != 0.0 {
                roots.push(-d / c);
            }
        } else {
            let disc = c * c - 4.0 * b * d;
            if disc >= 0.0 {
                let s = disc.sqrt();
                let q = -0.5 * (c + c.signum() * s);
                if q != 0.0 {
                    roots.push(q / b);
                    roots.push(d / q);
                } else {
                    roots.push(0.0);
                }
            }
        }
    } else {
        let (p, q, r) = (b / a, c / a, d / a);
        // depressed cubic t³ + e t + f with x = t − p/3
        let e = q - p * p / 3.0;
        let f = 2.0 * p * p * p / 27.0 - p * q / 3.0 + r;
        let disc = f * f / 4.0 + e * e * e / 27.0;
        let shift = -p / 3.0;
        if disc > 0.0 {
            let s = disc.sqrt();
            let u = (-f / 2.0 + s).cbrt();
            let v = (-f / 2.0 - s).cbrt();
            roots.push(u + v + shift);
        } else if e == 0.0 {
            roots.push(shift);
        } else {
            let m = 2.0 * (-e / 3.0).sqrt();
            let arg = (3.0 * f / (e * m)).clamp(-1.0, 1.0);
            let theta = arg.acos() / 3.0;
            for k in 0..3 {
                roots.push(m * (theta - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos() + shift);
            }
        }
    }
    for x in &mut roots {
        for _ in 0..3 {
            let fx = ((a * *x + b) * *x + c) * *x + d;
            let dfx = (3.0 * a * *x + 2.0 * b) * *x + c;
            if dfx == 0.0 {
                break;
            }
            let step = fx / dfx;
            if !step.is_finite() {
                break;
            }
            *x -= step;
        }
    }
    roots
}

/// Quartic `φ(α) = Σ p_k α^k` along a search direction.
struct Quartic([f64; 5]);

impl Quartic {
    fn value(&self, a: f64) -> f64 {
        let p = &self.0;
        (((p[4] * a + p[3]) * a + p[2]) * a + p[1]) * a + p[0]
    }

    fn slope(&self, a: f64) -> f64 {
        let p = &self.0;
        ((4.0 * p[4] * a + 3.0 * p[3]) * a + 2.0 * p[2]) * a + p[1]
    }

    fn wolfe(&self, a: f64) -> bool {
        let (f0, d0) = (self.0[0], self.0[1]);
        let (fa, da) = (self.value(a), self.slope(a));
        let standard = fa <= f0 + WOLFE_DELTA * a * d0 && da >= WOLFE_SIGMA * d0;
        let approximate = (2.0 * WOLFE_DELTA - 1.0) * d0 >= da
            && da >= WOLFE_SIGMA * d0
            && fa <= f0 + APPROX_WOLFE_EPS * f0.abs();
        a > 0.0 && a.is_finite() && (standard || approximate)
    }

    /// Exact minimizer over `α > 0`.
    fn argmin(&self) -> Option<f64> {
        let p = &self.0;
        cubic_real_roots(4.0 * p[4], 3.0 * p[3], 2.0 * p[2], p[1])
            .into_iter()
            .filter(|a| *a > 0.0 && a.is_finite())
            .min_by(|x, y| self.value(*x).total_cmp(&self.value(*y)))
    }

    /// Bracketing plus secant steps on `φ'`.
    fn bracket_search(&self) -> Option<f64> {
        let (mut lo, mut hi) = (0.0, 1.0);
        let mut grow = 0;
        while self.slope(hi) < 0.0 {
            lo = hi;
            hi *= 2.0;
            grow += 1;
            if grow > 60 {
                return None;
            }
        }
        for _ in 0..60 {
            let (slo, shi) = (self.slope(lo), self.slope(hi));
            let mut a = if shi != slo {
                lo - slo * (hi - lo) / (shi - slo)
            } else {
                0.5 * (lo + hi)
            };
            if !(a > lo && a < hi) {
                a = 0.5 * (lo + hi);
            }
            if self.wolfe(a) {
                return Some(a);
            }
            if self.slope(a) < 0.0 {
                lo = a;
            } else {
                hi = a;
            }
        }
        None
    }
}

fn state(
    g: &[DMatrix<f64>],
    zeta: &[f64],
    x: &DVector<f64>,
) -> (Vec<DVector<f64>>, Vec<f64>, f64, DVector<f64>) {
    let h: Vec<DVector<f64>> = g.iter().map(|gi| gi * x).collect();
    let e: Vec<f64> = h.iter().zip(zeta).map(|(hi, z)| x.dot(hi) - z).collect();
    let loss = e.iter().map(|v| v * v).sum();
    let mut grad = DVector::zeros(x.len());
    for (hi, ei) in h.iter().zip(&e) {
        grad.axpy(4.0 * ei, hi, 1.0);
    }
    (h, e, loss, grad)
}

/// Minimizes the quadratic-measurement loss on `g` (already restricted to the
/// active coordinates) from `x0`.
pub fn minimize(
    g: &[DMatrix<f64>],
    zeta: &[f64],
    x0: DVector<f64>,
    opts: &CgOptions,
) -> (DVector<f64>, CgReport) {
    let mut x = x0;
    let mut report = CgReport::default();
    if x.is_empty() {
        report.loss = zeta.iter().map(|z| z * z).sum();
        report.converged = true;
        return (x, report);
    }
    let (mut h, mut e, mut loss, mut grad) = state(g, zeta, &x);
    let mut d = -&grad;
    let mut stalls = 0;
    while report.iterations < opts.max_iter {
        if grad.norm() < opts.grad_tol {
            report.converged = true;
            break;
        }
        report.iterations += 1;
        if grad.dot(&d) >= 0.0 {
            d = -&grad;
        }
        let w: Vec<DVector<f64>> = g.iter().map(|gi| gi * &d).collect();
        let mut p = [0.0; 5];
        for i in 0..g.len() {
            let (a, b, c) = (e[i], 2.0 * h[i].dot(&d), d.dot(&w[i]));
            p[0] += a * a;
            p[1] += 2.0 * a * b;
            p[2] += b * b + 2.0 * a * c;
            p[3] += 2.0 * b * c;
            p[4] += c * c;
        }
        let phi = Quartic(p);
        let alpha = phi
            .argmin()
            .filter(|&a| phi.wolfe(a))
            .or_else(|| phi.bracket_search());
        let alpha = match alpha {
            Some(a) => a,
            None => {
                // steepest descent with backtracking
                report.fallbacks += 1;
                d = -&grad;
                let gg = grad.norm_squared();
                let mut a = 1.0;
                let mut ok = false;
                for _ in 0..80 {
                    let trial = &x + &d * a;
                    let (_, _, lt, _) = state(g, zeta, &trial);
                    if lt <= loss - 1e-4 * a * gg {
                        ok = true;
                        break;
                    }
                    a *= 0.5;
                }
                if !ok {
                    break;
                }
                let xn = &x + &d * a;
                let (hn, en, ln, gn) = state(g, zeta, &xn);
                stalls = if ln < loss { 0 } else { stalls + 1 };
                x = xn;
                h = hn;
                e = en;
                loss = ln;
                grad = gn;
                d = -&grad;
                if stalls >= STALL_LIMIT {
                    break;
                }
                continue;
            }
        };
        x.axpy(alpha, &d, 1.0);
        for (hi, wi) in h.iter_mut().zip(&w) {
            hi.axpy(alpha, wi, 1.0);
        }
        let mut new_loss = 0.0;
        let mut new_grad = DVector::zeros(x.len());
        for i in 0..g.len() {
            e[i] = x.dot(&h[i]) - zeta[i];
            new_loss += e[i] * e[i];
            new_grad.axpy(4.0 * e[i], &h[i], 1.0);
        }
        stalls = if new_loss < loss { 0 } else { stalls + 1 };
        // Hager–Zhang update
        let y = &new_grad - &grad;
        let dy = d.dot(&y);
        let beta = if dy != 0.0 {
            let bn = (&y - &d * (2.0 * y.norm_squared() / dy)).dot(&new_grad) / dy;
            let lower = -1.0 / (d.norm() * HZ_ETA.min(grad.norm()));
            bn.max(lower)
        } else {
            0.0
        };
        d = -&new_grad + &d * beta;
        grad = new_grad;
        loss = new_loss;
        if stalls >= STALL_LIMIT {
            break;
        }
    }
    // refresh from scratch to avoid drift in the incremental products
    let (_, _, l, gr) = state(g, zeta, &x);
    report.loss = l;
    report.grad_norm = gr.norm();
    report.converged |= report.grad_norm < opts.grad_tol;
    (x, report)
}

/// Fits coefficients on `support`, leaving every other entry exactly zero.
///
/// `warm` supplies starting values for support entries; entries it does not
/// cover (or `None`) start at `opts.init`.
pub fn nonlinear_cg_fit(
    g: &[DMatrix<f64>],
    zeta: &[f64],
    support: &[usize],
    warm: Option<&DVector<f64>>,
    opts: &CgOptions,
) -> (DVector<f64>, CgReport) {
    let dim = g.first().map_or(0, |m| m.nrows());
    let sub = restrict(g, support);
    let x0 = DVector::from_iterator(
        support.len(),
        support.iter().map(|&s| match warm {
            Some(w) if w[s] != 0.0 => w[s],
            _ => opts.init,
        }),
    );
    let (x, report) = minimize(&sub, zeta, x0, opts);
    let mut full = DVector::zeros(dim);
    for (k, &s) in support.iter().enumerate() {
        full[s] = x[k];
    }
    (full, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    pub(crate) fn random_psd(j: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let a = DMatrix::<f64>::from_fn(j, j + 2, |_, _| StandardNormal.sample(rng));
        &a * a.transpose() / (j as f64)
    }

    #[test]
    fn cubic_roots() {
        let mut r = cubic_real_roots(1.0, -6.0, 11.0, -6.0);
        r.sort_by(f64::total_cmp);
        assert!(
            (r[0] - 1.0).abs() < 1e-12 && (r[1] - 2.0).abs() < 1e-12 && (r[2] - 3.0).abs() < 1e-12
        );
        let r = cubic_real_roots(0.0, 1.0, 0.0, -4.0);
        assert_eq!(r.len(), 2);
        let r = cubic_real_roots(2.0, 0.0, 0.0, 16.0);
        assert!((r[0] + 2.0).abs() < 1e-12);
    }

    #[test]
    fn origin_is_stationary() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g: Vec<_> = (0..5).map(|_| random_psd(3, &mut rng)).collect();
        let zeta = vec![0.5, 1.0, 0.2, 0.0, 3.0];
        let (l, gr) = quad_loss_grad(&g, &zeta, &DVector::zeros(3));
        assert!((l - zeta.iter().map(|z| z * z).sum::<f64>()).abs() < 1e-15);
        assert_eq!(gr.norm(), 0.0);
    }

    #[test]
    fn scalar_closed_form() {
        let gs = [0.5, 1.2, 0.9, 2.0, 1.1];
        let zeta = [0.7, 1.0, 1.5, 2.2, 0.9];
        let g: Vec<_> = gs.iter().map(|&v| DMatrix::from_element(1, 1, v)).collect();
        let (c, rep) = nonlinear_cg_fit(&g, &zeta, &[0], None, &CgOptions::default());
        let c2 = gs.iter().zip(&zeta).map(|(a, b)| a * b).sum::<f64>()
            / gs.iter().map(|a| a * a).sum::<f64>();
        assert!((c[0] * c[0] - c2).abs() < 1e-8, "{} vs {c2}", c[0] * c[0]);
        assert!(rep.iterations > 0);
    }

    #[test]
    fn planted_recovery_up_to_sign() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let j = 4;
        let g: Vec<_> = (0..50).map(|_| random_psd(j, &mut rng)).collect();
        let cstar = DVector::from_vec(vec![1.0, 0.5, 2.0, 0.3]);
        let zeta: Vec<f64> = g.iter().map(|gi| cstar.dot(&(gi * &cstar))).collect();
        let (c, rep) = nonlinear_cg_fit(&g, &zeta, &[0, 1, 2, 3], None, &CgOptions::default());
        assert!(rep.loss < 1e-16, "{rep:?}");
        let err = (&c - &cstar).norm().min((&c + &cstar).norm());
        assert!(err < 1e-6, "{c}");
    }

    #[test]
    fn zero_response_goes_to_origin() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g: Vec<_> = (0..20).map(|_| random_psd(2, &mut rng)).collect();
        let zeta = vec![0.0; 20];
        let (c, rep) = nonlinear_cg_fit(&g, &zeta, &[0, 1], None, &CgOptions::default());
        assert!(c.norm() < 1e-3 && rep.loss < 1e-12, "{c} {rep:?}");
    }

    #[test]
    fn off_support_entries_stay_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let g: Vec<_> = (0..30).map(|_| random_psd(5, &mut rng)).collect();
        let zeta: Vec<f64> = (0..30).map(|i| 1.0 + 0.1 * i as f64).collect();
        let (c, _) = nonlinear_cg_fit(&g, &zeta, &[1, 3], None, &CgOptions::default());
        assert_eq!((c[0], c[2], c[4]), (0.0, 0.0, 0.0));
    }
}
