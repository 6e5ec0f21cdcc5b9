//! Quadratic subspace pursuit: greedy `j`-sparse fits of `cᵀ G_i c ≈ ζ_i`.
//!
//! Each iteration expands the support with the `j` coordinates whose
//! single-coordinate fit best explains the current measurement errors,
//! refits on the union, shrinks back to the `j` largest coefficients and
//! refits again. Iteration stops once the squared measurement error grows.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cg::{nonlinear_cg_fit, CgOptions, CgReport};
use crate::coeffs::SparseCoeffs;
use crate::diffusion::{normalize_diffusion, unnormalize, DiffusionSystem};
use crate::error::{Error, Result};
use crate::linalg::top_k;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QspOptions {
    pub max_iter: usize,
    pub cg: CgOptions,
}

impl Default for QspOptions {
    fn default() -> Self {
        QspOptions {
            max_iter: 100,
            cg: CgOptions::default(),
        }
    }
}

/// One accepted or rejected QSP iteration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QspIteration {
    pub iteration: usize,
    pub support: Vec<usize>,
    pub error: f64,
    pub accepted: bool,
    pub cg_iterations: usize,
    pub cg_fallbacks: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct QspResult {
    pub coeffs: SparseCoeffs,
    /// `Σ_i (ĉᵀG_iĉ − ζ_i)²` at the returned coefficients.
    pub loss: f64,
    pub trace: Vec<QspIteration>,
}

impl QspResult {
    /// Plain-text diagnostics, one line per iteration.
    pub fn diagnostics(&self) -> String {
        self.trace
            .iter()
            .map(|t| {
                format!(
                    "iter={} support={:?} error={:.6e} accepted={} cg_iter={} cg_fallbacks={}\n",
                    t.iteration, t.support, t.error, t.accepted, t.cg_iterations, t.cg_fallbacks
                )
            })
            .collect()
    }
}

fn measurement_errors(sys: &DiffusionSystem, c: &DVector<f64>) -> Vec<f64> {
    sys.g
        .iter()
        .zip(&sys.zeta)
        .map(|(gi, z)| c.dot(&(gi * c)) - z)
        .collect()
}

fn top_by_magnitude(c: &DVector<f64>, support: &[usize], j: usize) -> Vec<usize> {
    let keep = top_k(|k| c[support[k]].abs(), 0..support.len(), j);
    keep.into_iter().map(|k| support[k]).collect()
}

fn add_cg(rec: &mut (usize, usize), r: &CgReport) {
    rec.0 += r.iterations;
    rec.1 += r.fallbacks;
}

/// Runs QSP for sparsity `j` on a (normalized) system.
pub fn qsp(sys: &DiffusionSystem, j: usize, opts: &QspOptions) -> Result<QspResult> {
    let jj = sys.num_features();
    if j == 0 || j > jj {
        return Err(Error::InvalidArgument(format!(
            "sparsity {j} outside 1..={jj}"
        )));
    }
    let live = sys.live();
    if live.is_empty() {
        return Err(Error::InvalidArgument(
            "every diffusion feature vanishes".into(),
        ));
    }
    let j = j.min(live.len());
    let mut support: Vec<usize> = Vec::new();
    let mut c = DVector::zeros(jj);
    let mut eta = sys.zeta.clone();
    let mut err: f64 = eta.iter().map(|e| e * e).sum();
    let mut trace = Vec::new();

    for it in 1..=opts.max_iter {
        let mut cg_rec = (0, 0);
        // Step 1: single-coordinate fits against the current errors
        let q = |s: usize| -> f64 {
            let (mut gg, mut ge) = (0.0, 0.0);
            for (gi, e) in sys.g.iter().zip(&eta) {
                let d = gi[(s, s)];
                gg += d * d;
                ge += d * e;
            }
            if gg > 0.0 {
                err - ge * ge / gg
            } else {
                err
            }
        };
        let fresh = top_k(
            |s| -q(s).abs(),
            live.iter().copied().filter(|s| !support.contains(s)),
            j,
        );
        let mut expanded = support.clone();
        expanded.extend(fresh);
        expanded.sort_unstable();

        // Step 2: fit on the union, keep the j largest
        let (c_bar, r2) = nonlinear_cg_fit(&sys.g, &sys.zeta, &expanded, Some(&c), &opts.cg);
        add_cg(&mut cg_rec, &r2);
        let mut new_support = top_by_magnitude(&c_bar, &expanded, j);
        new_support.sort_unstable();

        // Step 3: refit on the shrunk support
        let (c_hat, r3) = nonlinear_cg_fit(&sys.g, &sys.zeta, &new_support, Some(&c_bar), &opts.cg);
        add_cg(&mut cg_rec, &r3);

        // Step 4: new measurement errors
        let new_eta = measurement_errors(sys, &c_hat);
        let new_err: f64 = new_eta.iter().map(|e| e * e).sum();
        let accepted = it == 1 || new_err <= err;
        trace.push(QspIteration {
            iteration: it,
            support: new_support.clone(),
            error: new_err,
            accepted,
            cg_iterations: cg_rec.0,
            cg_fallbacks: cg_rec.1,
        });
        if !accepted {
            break;
        }
        let unchanged = new_support == support;
        support = new_support;
        c = c_hat;
        eta = new_eta;
        err = new_err;
        if unchanged {
            break;
        }
    }
    let values: Vec<f64> = support.iter().map(|&s| c[s]).collect();
    Ok(QspResult {
        coeffs: SparseCoeffs::from_support(jj, &support, &values),
        loss: err,
        trace,
    })
}

/// Drops entries with `|b_k| / max|b| < tau` and refits, until stable.
/// The support never becomes empty.
pub fn trim_diffusion(
    sys: &DiffusionSystem,
    b: &SparseCoeffs,
    tau: f64,
    opts: &CgOptions,
) -> Result<(SparseCoeffs, f64)> {
    if !(0.0..1.0).contains(&tau) {
        return Err(Error::InvalidArgument(format!(
            "trim threshold {tau} outside [0, 1)"
        )));
    }
    b.check_len(sys.num_features())?;
    let mut cur = b.clone();
    let mut loss = {
        let e = measurement_errors(sys, &DVector::from_vec(cur.to_dense()));
        e.iter().map(|v| v * v).sum()
    };
    loop {
        let max = cur.entries.iter().map(|e| e.1.abs()).fold(0.0, f64::max);
        if cur.nnz() <= 1 || !(max > 0.0) {
            break;
        }
        let keep: Vec<usize> = cur
            .entries
            .iter()
            .filter(|e| e.1.abs() / max >= tau)
            .map(|e| e.0)
            .collect();
        if keep.len() == cur.nnz() {
            break;
        }
        let warm = DVector::from_vec(cur.to_dense());
        let (c, rep) = nonlinear_cg_fit(&sys.g, &sys.zeta, &keep, Some(&warm), opts);
        let values: Vec<f64> = keep.iter().map(|&k| c[k]).collect();
        let next = SparseCoeffs::from_support(cur.len, &keep, &values);
        loss = rep.loss;
        if next.nnz() == 0 {
            // keep the single largest entry rather than an empty model
            let top = cur
                .entries
                .iter()
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                .unwrap()
                .0;
            cur = SparseCoeffs::from_support(cur.len, &[top], &[c[top].max(cur.get(top).abs())]);
            break;
        }
        cur = next;
    }
    Ok((cur, loss))
}

/// A diffusion candidate in the original coefficient scale.
#[derive(Debug, Clone, Serialize)]
pub struct DiffusionCandidate {
    pub sparsity: usize,
    /// Canonical sign: first active entry is nonnegative.
    pub coeffs: SparseCoeffs,
    /// Loss on the normalized system.
    pub loss: f64,
    pub trace: Vec<QspIteration>,
}

/// Normalize, QSP, trim and map back, for `j = 1..=j_max`; deduplicated by support.
pub fn generate_diffusion_candidates(
    sys: &DiffusionSystem,
    j_max: usize,
    tau: f64,
    opts: &QspOptions,
) -> Result<Vec<DiffusionCandidate>> {
    let jj = sys.num_features();
    if j_max == 0 || j_max > jj {
        return Err(Error::InvalidArgument(format!(
            "j_max {j_max} outside 1..={jj}"
        )));
    }
    let nz = normalize_diffusion(sys)?;
    let runs: Vec<Result<DiffusionCandidate>> = (1..=j_max)
        .into_par_iter()
        .map(|j| {
            let r = qsp(&nz, j, opts)?;
            let (trimmed, loss) = trim_diffusion(&nz, &r.coeffs, tau, &opts.cg)?;
            Ok(DiffusionCandidate {
                sparsity: j,
                coeffs: unnormalize(&trimmed, &nz.lambda).canonical_sign(),
                loss,
                trace: r.trace,
            })
        })
        .collect();
    let mut out: Vec<DiffusionCandidate> = Vec::new();
    for r in runs {
        let c = r?;
        if !out.iter().any(|o| o.coeffs.support() == c.coeffs.support()) {
            out.push(c);
        }
    }
    Ok(out)
}
