//! Time-integrated lack-of-fit scores and final model selection.
//!
//! Cumulative time integrals use the left Riemann rule, matching the
//! forward Euler relation the systems are built from; space integrals use
//! the periodic trapezoid rule (a plain sum times the cell volume).

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coeffs::SparseCoeffs;
use crate::data::TrajectoryEnsemble;
use crate::dictionary::FeatureDictionary;
use crate::diffusion::{path_residuals, DriftField};
use crate::drift::{assemble_drift_system, DriftSystem};
use crate::error::{Error, Result};
use crate::parallel::sum_over_paths;

/// `S_drift` on an assembled drift system.
pub fn score_drift_system(sys: &DriftSystem, a: &SparseCoeffs) -> Result<f64> {
    a.check_len(sys.num_features())?;
    let mut fit = -sys.y.clone();
    for &(k, v) in &a.entries {
        fit.axpy(v, &sys.f.column(k), 1.0);
    }
    let p = sys.points;
    let mut cum = vec![0.0; p];
    let mut total = 0.0;
    for i in 0..sys.steps {
        for m in 0..p {
            cum[m] += fit[i * p + m];
            total += cum[m] * cum[m];
        }
    }
    Ok(total * sys.cell_volume / sys.steps as f64)
}

/// `S_drift(a) = I^{-1} Σ_i ∫ (Σ_k a_k ∫_0^{t_i} Ê[F_k] ds + Ê[u(0)] − Ê[u(t_i)])² dx`.
pub fn score_drift(
    ens: &TrajectoryEnsemble,
    dict: &FeatureDictionary,
    a: &SparseCoeffs,
    component: usize,
) -> Result<f64> {
    score_drift_system(&assemble_drift_system(ens, dict, component)?, a)
}

/// `S_diffuse` for several diffusion vectors sharing one drift estimate.
///
/// `R_i(x)` is the cumulative drift residual of a path up to `t_i` and
/// `Q_i(x) = Σ_{i'<i} Δt (Σ_j b_j G_j)²`; the score compares their sample
/// means.
pub fn score_diffuse_many(
    ens: &TrajectoryEnsemble,
    drift_dict: &FeatureDictionary,
    diff_dict: &FeatureDictionary,
    a_hat: &SparseCoeffs,
    bs: &[SparseCoeffs],
    component: usize,
) -> Result<Vec<f64>> {
    drift_dict.check_compatible(ens.grid.space_dims(), ens.num_components)?;
    diff_dict.check_compatible(ens.grid.space_dims(), ens.num_components)?;
    let grid = &ens.grid;
    let drift = DriftField::new(drift_dict, a_hat, &grid.num_space, &grid.dx)?;
    let fields = bs
        .iter()
        .map(|b| DriftField::new(diff_dict, b, &grid.num_space, &grid.dx))
        .collect::<Result<Vec<_>>>()?;
    let (steps, p, nb) = (grid.steps(), grid.points(), bs.len());
    let block = steps * p;
    // layout: [E R_i² | E Q_i for each b], each I·M
    let sums = sum_over_paths(ens.num_paths, block * (1 + nb), |n, acc| {
        let r = path_residuals(ens, &drift, component, n);
        let mut cum = vec![0.0; p];
        for i in 0..steps {
            for m in 0..p {
                cum[m] += r[i * p + m];
                acc[i * p + m] += cum[m] * cum[m];
            }
        }
        let (mut buf, mut sym, mut g) = (Vec::new(), Vec::new(), vec![0.0; p]);
        for (c, field) in fields.iter().enumerate() {
            let out = &mut acc[(1 + c) * block..(2 + c) * block];
            cum.iter_mut().for_each(|v| *v = 0.0);
            for i in 0..steps {
                field.eval_into(&ens.state(n, i), &mut buf, &mut sym, &mut g);
                for m in 0..p {
                    cum[m] += grid.dt * g[m] * g[m];
                    out[i * p + m] += cum[m];
                }
            }
        }
    });
    let inv_n = 1.0 / ens.num_paths as f64;
    let r2 = &sums[..block];
    Ok((0..nb)
        .map(|c| {
            let q = &sums[(1 + c) * block..(2 + c) * block];
            let s: f64 = r2
                .iter()
                .zip(q)
                .map(|(a, b)| ((a - b) * inv_n).powi(2))
                .sum();
            s * grid.cell_volume() / steps as f64
        })
        .collect())
}

pub fn score_diffuse(
    ens: &TrajectoryEnsemble,
    drift_dict: &FeatureDictionary,
    diff_dict: &FeatureDictionary,
    a_hat: &SparseCoeffs,
    b: &SparseCoeffs,
    component: usize,
) -> Result<f64> {
    Ok(score_diffuse_many(
        ens,
        drift_dict,
        diff_dict,
        a_hat,
        std::slice::from_ref(b),
        component,
    )?[0])
}

/// Index of the minimal score; ties go to the smaller support, then the
/// lower index.
pub fn argmin_score(scores: &[f64], supports: &[usize]) -> Option<usize> {
    (0..scores.len()).min_by(|&a, &b| {
        scores[a]
            .total_cmp(&scores[b])
            .then(supports[a].cmp(&supports[b]))
            .then(a.cmp(&b))
    })
}

/// A candidate with its score.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub coeffs: SparseCoeffs,
    pub score: f64,
}

/// Scores drift candidates and returns them with the index of the winner.
pub fn select_drift(
    sys: &DriftSystem,
    cands: &[SparseCoeffs],
) -> Result<(Vec<ScoredCandidate>, usize)> {
    if cands.is_empty() {
        return Err(Error::InvalidArgument("no drift candidates".into()));
    }
    let scored = cands
        .par_iter()
        .map(|c| {
            Ok(ScoredCandidate {
                coeffs: c.clone(),
                score: score_drift_system(sys, c)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let best = pick(&scored);
    Ok((scored, best))
}

/// Scores diffusion candidates given the selected drift.
pub fn select_diffusion(
    ens: &TrajectoryEnsemble,
    drift_dict: &FeatureDictionary,
    diff_dict: &FeatureDictionary,
    a_hat: &SparseCoeffs,
    cands: &[SparseCoeffs],
    component: usize,
) -> Result<(Vec<ScoredCandidate>, usize)> {
    if cands.is_empty() {
        return Err(Error::InvalidArgument("no diffusion candidates".into()));
    }
    let scores = score_diffuse_many(ens, drift_dict, diff_dict, a_hat, cands, component)?;
    let scored: Vec<ScoredCandidate> = cands
        .iter()
        .zip(scores)
        .map(|(c, score)| ScoredCandidate {
            coeffs: c.clone(),
            score,
        })
        .collect();
    let best = pick(&scored);
    Ok((scored, best))
}

fn pick(scored: &[ScoredCandidate]) -> usize {
    let s: Vec<f64> = scored.iter().map(|c| c.score).collect();
    let n: Vec<usize> = scored.iter().map(|c| c.coeffs.nnz()).collect();
    argmin_score(&s, &n).expect("nonempty")
}

/// Dense helper used by score-shape checks: `a + t·δ`.
pub fn perturb(a: &SparseCoeffs, delta: &[f64], t: f64) -> SparseCoeffs {
    let mut v = DVector::from_vec(a.to_dense());
    v.axpy(t, &DVector::from_column_slice(delta), 1.0);
    SparseCoeffs::from_dense(v.as_slice())
}
