//! Drift identification from sample means.
//!
//! Taking path expectations turns the SPDE into a deterministic relation
//! `E[u(t_i)] − E[u(t_{i−1})] ≈ Δt Σ a_k E[F_k(t_{i−1})]`, which is a sparse
//! linear regression solved for every sparsity level by subspace pursuit.

use log::warn;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::coeffs::SparseCoeffs;
use crate::data::TrajectoryEnsemble;
use crate::dictionary::{FeatureDictionary, FeatureEvaluator};
use crate::error::{Error, Result};
use crate::linalg::{lstsq, select_columns, top_k};

/// Iteration cap for subspace pursuit; it normally stops within a few steps.
pub const SP_MAX_ITER: usize = 100;

/// Sample-mean drift system `y ≈ F a` for one target component.
#[derive(Debug, Clone)]
pub struct DriftSystem {
    /// `I·M × K`; row `i·M + m` holds `Δt · mean_n F_k(t_i, x_m)`.
    pub f: DMatrix<f64>,
    /// Increments of the sample mean, `mean_n u(t_{i+1}) − u(t_i)`.
    pub y: DVector<f64>,
    /// Euclidean column norms of `f`.
    pub column_norms: Vec<f64>,
    pub steps: usize,
    pub points: usize,
    pub cell_volume: f64,
    pub component: usize,
}

impl DriftSystem {
    pub fn num_features(&self) -> usize {
        self.f.ncols()
    }
}

/// Builds the drift system for `component`. Sums over paths run in path
/// order inside each time step, so the result is deterministic.
pub fn assemble_drift_system(
    ens: &TrajectoryEnsemble,
    dict: &FeatureDictionary,
    component: usize,
) -> Result<DriftSystem> {
    dict.check_compatible(ens.grid.space_dims(), ens.num_components)?;
    if component >= ens.num_components {
        return Err(Error::InvalidArgument(format!("no component {component}")));
    }
    let ev = FeatureEvaluator::for_dictionary(dict, &ens.grid.num_space, &ens.grid.dx)?;
    let (steps, p, k) = (ens.grid.steps(), ens.grid.points(), dict.len());
    let inv_n = 1.0 / ens.num_paths as f64;
    let dt = ens.grid.dt;
    let blocks: Vec<(Vec<f64>, Vec<f64>)> = (0..steps)
        .into_par_iter()
        .map(|i| {
            let mut fsum = vec![0.0; k * p];
            let mut ysum = vec![0.0; p];
            let mut feats = vec![0.0; k * p];
            let mut sym = Vec::new();
            for n in 0..ens.num_paths {
                ev.evaluate_into(&ens.state(n, i), &mut sym, &mut feats);
                for (a, b) in fsum.iter_mut().zip(&feats) {
                    *a += b;
                }
                let (u0, u1) = (ens.slice(n, component, i), ens.slice(n, component, i + 1));
                for m in 0..p {
                    ysum[m] += u1[m] - u0[m];
                }
            }
            fsum.iter_mut().for_each(|v| *v *= dt * inv_n);
            ysum.iter_mut().for_each(|v| *v *= inv_n);
            (fsum, ysum)
        })
        .collect();
    let mut f = DMatrix::zeros(steps * p, k);
    let mut y = DVector::zeros(steps * p);
    for (i, (fb, yb)) in blocks.into_iter().enumerate() {
        for kk in 0..k {
            let mut col = f.column_mut(kk);
            for m in 0..p {
                col[i * p + m] = fb[kk * p + m];
            }
        }
        y.rows_mut(i * p, p).copy_from(&DVector::from_vec(yb));
    }
    let column_norms = f.column_iter().map(|c| c.norm()).collect();
    Ok(DriftSystem {
        f,
        y,
        column_norms,
        steps,
        points: p,
        cell_volume: ens.grid.cell_volume(),
        component,
    })
}

/// Result of one subspace-pursuit run.
#[derive(Debug, Clone, Serialize)]
pub struct SpResult {
    pub coeffs: SparseCoeffs,
    pub residual: f64,
    pub iterations: usize,
}

struct Normalized {
    fbar: DMatrix<f64>,
    norms: Vec<f64>,
    live: Vec<usize>,
}

fn normalize_columns(f: &DMatrix<f64>) -> Normalized {
    let mut fbar = f.clone();
    let mut norms = Vec::with_capacity(f.ncols());
    let mut live = Vec::new();
    for (k, mut col) in fbar.column_iter_mut().enumerate() {
        let n = col.norm();
        norms.push(n);
        if n > 0.0 && n.is_finite() {
            col /= n;
            live.push(k);
        } else {
            warn!("feature column {k} is identically zero; dropped from the search");
            col.fill(0.0);
        }
    }
    Normalized { fbar, norms, live }
}

fn restricted_fit(fbar: &DMatrix<f64>, y: &DVector<f64>, support: &[usize]) -> (DVector<f64>, f64) {
    let a = select_columns(fbar, support);
    let c = lstsq(&a, y);
    let r = y - &a * &c;
    (c, r.norm())
}

fn sp_normalized(
    nz: &Normalized,
    y: &DVector<f64>,
    k: usize,
) -> (Vec<usize>, DVector<f64>, f64, usize) {
    let fbar = &nz.fbar;
    let corr = fbar.tr_mul(y);
    let mut support = top_k(|i| corr[i].abs(), nz.live.iter().copied(), k);
    let (mut coef, mut res) = restricted_fit(fbar, y, &support);
    let mut resid_vec = y - select_columns(fbar, &support) * &coef;
    let mut iterations = 0;
    while iterations < SP_MAX_ITER {
        iterations += 1;
        let corr = fbar.tr_mul(&resid_vec);
        let fresh = top_k(
            |i| corr[i].abs(),
            nz.live.iter().copied().filter(|i| !support.contains(i)),
            k,
        );
        let mut expanded = support.clone();
        expanded.extend(fresh);
        expanded.sort_unstable();
        let (c_exp, _) = restricted_fit(fbar, y, &expanded);
        let keep = top_k(|j| c_exp[j].abs(), 0..expanded.len(), k);
        let new_support: Vec<usize> = keep.iter().map(|&j| expanded[j]).collect();
        let (new_coef, new_res) = restricted_fit(fbar, y, &new_support);
        if new_res >= res || new_support == support {
            break;
        }
        resid_vec = y - select_columns(fbar, &new_support) * &new_coef;
        support = new_support;
        coef = new_coef;
        res = new_res;
    }
    (support, coef, res, iterations)
}

/// `k`-sparse least-squares fit by subspace pursuit on the column-normalized
/// matrix. Coefficients are returned in the original column scale.
pub fn subspace_pursuit(f: &DMatrix<f64>, y: &DVector<f64>, k: usize) -> Result<SpResult> {
    let kk = f.ncols();
    if k == 0 || k > kk {
        return Err(Error::InvalidArgument(format!(
            "sparsity {k} outside 1..={kk}"
        )));
    }
    let nz = normalize_columns(f);
    if nz.live.is_empty() {
        return Err(Error::InvalidArgument(
            "every feature column is zero".into(),
        ));
    }
    let k = k.min(nz.live.len());
    let (support, coef, residual, iterations) = sp_normalized(&nz, y, k);
    let values: Vec<f64> = support
        .iter()
        .zip(coef.iter())
        .map(|(&s, c)| c / nz.norms[s])
        .collect();
    Ok(SpResult {
        coeffs: SparseCoeffs::from_support(kk, &support, &values),
        residual,
        iterations,
    })
}

/// Least-squares refit of `f` restricted to `support`, original scale.
pub fn refit(f: &DMatrix<f64>, y: &DVector<f64>, support: &[usize]) -> SparseCoeffs {
    let a = select_columns(f, support);
    let c = lstsq(&a, y);
    SparseCoeffs::from_support(f.ncols(), support, c.as_slice())
}

/// Drops features whose contribution `|c_k|·‖F_k‖` is below `tau` times the
/// largest one, refitting until nothing more is dropped.
pub fn trim_drift(
    f: &DMatrix<f64>,
    y: &DVector<f64>,
    c: &SparseCoeffs,
    tau: f64,
) -> Result<SparseCoeffs> {
    if !(0.0..1.0).contains(&tau) {
        return Err(Error::InvalidArgument(format!(
            "trim threshold {tau} outside [0, 1)"
        )));
    }
    c.check_len(f.ncols())?;
    let mut cur = c.clone();
    loop {
        if cur.nnz() == 0 {
            break;
        }
        let scores: Vec<f64> = cur
            .entries
            .iter()
            .map(|&(k, v)| v.abs() * f.column(k).norm())
            .collect();
        let max = scores.iter().cloned().fold(0.0, f64::max);
        if !(max > 0.0) {
            break;
        }
        let keep: Vec<usize> = cur
            .entries
            .iter()
            .zip(&scores)
            .filter(|(_, s)| **s / max >= tau)
            .map(|(e, _)| e.0)
            .collect();
        if keep.len() == cur.nnz() {
            break;
        }
        cur = refit(f, y, &keep);
        if cur.nnz() == 0 {
            break;
        }
    }
    if cur.nnz() == 0 {
        // nothing survives: fall back to the best single feature
        let sp = subspace_pursuit(f, y, 1)?;
        return Ok(sp.coeffs);
    }
    Ok(cur)
}

/// A drift candidate with its fit residual.
#[derive(Debug, Clone, Serialize)]
pub struct DriftCandidate {
    pub sparsity: usize,
    pub coeffs: SparseCoeffs,
    pub residual: f64,
}

/// Subspace pursuit plus trimming for `k = 1..=k_max`, deduplicated by support.
pub fn generate_drift_candidates(
    sys: &DriftSystem,
    k_max: usize,
    tau: f64,
) -> Result<Vec<DriftCandidate>> {
    let kk = sys.num_features();
    if k_max == 0 || k_max > kk {
        return Err(Error::InvalidArgument(format!(
            "k_max {k_max} outside 1..={kk}"
        )));
    }
    let runs: Vec<Result<DriftCandidate>> = (1..=k_max)
        .into_par_iter()
        .map(|k| {
            let sp = subspace_pursuit(&sys.f, &sys.y, k)?;
            let coeffs = trim_drift(&sys.f, &sys.y, &sp.coeffs, tau)?;
            let a = select_columns(&sys.f, &coeffs.support());
            let residual = (&sys.y - a * DVector::from_vec(coeffs.values())).norm();
            Ok(DriftCandidate {
                sparsity: k,
                coeffs,
                residual,
            })
        })
        .collect();
    let mut out: Vec<DriftCandidate> = Vec::new();
    for r in runs {
        let c = r?;
        if !out.iter().any(|o| o.coeffs.support() == c.coeffs.support()) {
            out.push(c);
        }
    }
    Ok(out)
}
