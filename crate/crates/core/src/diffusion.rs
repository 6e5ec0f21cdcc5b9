//! Quadratic-measurement system for diffusion identification.
//!
//! By the Itô isometry the expected squared drift residual over one step is
//! `Δt · E[(Σ_j b_j G_j)²]`, so every time step yields one quadratic
//! measurement `bᵀ G_i b ≈ ζ_i` of the diffusion coefficients.

use log::warn;
use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::coeffs::SparseCoeffs;
use crate::data::TrajectoryEnsemble;
use crate::dictionary::{FeatureDictionary, FeatureEvaluator, FeatureSpec};
use crate::error::{Error, Result};

/// `I` symmetric `J×J` matrices `G_i` and responses `ζ_i`.
#[derive(Debug, Clone)]
pub struct DiffusionSystem {
    pub g: Vec<DMatrix<f64>>,
    pub zeta: Vec<f64>,
    /// Normalization diagonal; all ones until `normalize_diffusion` runs.
    pub lambda: Vec<f64>,
    /// Features whose averaged diagonal is zero. They never enter a support.
    pub dead: Vec<usize>,
    pub component: usize,
}

impl DiffusionSystem {
    pub fn num_features(&self) -> usize {
        self.lambda.len()
    }

    pub fn steps(&self) -> usize {
        self.zeta.len()
    }

    /// Indices available for selection.
    pub fn live(&self) -> Vec<usize> {
        (0..self.num_features())
            .filter(|j| !self.dead.contains(j))
            .collect()
    }
}

/// Evaluates the drift `Σ_k a_k F_k` of one component on state slices.
pub struct DriftField {
    eval: FeatureEvaluator,
    coeffs: Vec<f64>,
}

impl DriftField {
    pub fn new(
        dict: &FeatureDictionary,
        a: &SparseCoeffs,
        num_space: &[usize],
        dx: &[f64],
    ) -> Result<Self> {
        a.check_len(dict.len())?;
        let specs: Vec<FeatureSpec> = a.support().iter().map(|&k| dict.specs[k].clone()).collect();
        Ok(DriftField {
            eval: FeatureEvaluator::new(&specs, num_space, dx)?,
            coeffs: a.values(),
        })
    }

    /// Writes the drift field into `out`; `buf` and `sym` are scratch space.
    pub fn eval_into(
        &self,
        state: &[&[f64]],
        buf: &mut Vec<f64>,
        sym: &mut Vec<f64>,
        out: &mut [f64],
    ) {
        let p = out.len();
        out.iter_mut().for_each(|v| *v = 0.0);
        if self.coeffs.is_empty() {
            return;
        }
        buf.resize(self.coeffs.len() * p, 0.0);
        self.eval.evaluate_into(state, sym, buf);
        for (k, &a) in self.coeffs.iter().enumerate() {
            for (o, f) in out.iter_mut().zip(&buf[k * p..(k + 1) * p]) {
                *o += a * f;
            }
        }
    }
}

/// Drift residual `r_i = u(t_{i+1}) − u(t_i) − Δt·drift(u(t_i))` of one path,
/// for every step, concatenated (`I·M` values).
pub fn path_residuals(
    ens: &TrajectoryEnsemble,
    drift: &DriftField,
    component: usize,
    path: usize,
) -> Vec<f64> {
    let p = ens.grid.points();
    let dt = ens.grid.dt;
    let mut out = vec![0.0; ens.grid.steps() * p];
    let (mut buf, mut sym, mut field) = (Vec::new(), Vec::new(), vec![0.0; p]);
    for i in 0..ens.grid.steps() {
        drift.eval_into(&ens.state(path, i), &mut buf, &mut sym, &mut field);
        let (u0, u1) = (
            ens.slice(path, component, i),
            ens.slice(path, component, i + 1),
        );
        for m in 0..p {
            out[i * p + m] = u1[m] - u0[m] - dt * field[m];
        }
    }
    out
}

/// Builds `G_i` and `ζ_i` for `component` given estimated drift `a_hat`.
pub fn assemble_diffusion_system(
    ens: &TrajectoryEnsemble,
    drift_dict: &FeatureDictionary,
    diff_dict: &FeatureDictionary,
    a_hat: &SparseCoeffs,
    component: usize,
) -> Result<DiffusionSystem> {
    drift_dict.check_compatible(ens.grid.space_dims(), ens.num_components)?;
    diff_dict.check_compatible(ens.grid.space_dims(), ens.num_components)?;
    let grid = &ens.grid;
    let drift = DriftField::new(drift_dict, a_hat, &grid.num_space, &grid.dx)?;
    let ev = FeatureEvaluator::for_dictionary(diff_dict, &grid.num_space, &grid.dx)?;
    let (p, j) = (grid.points(), diff_dict.len());
    let scale = grid.dt / (ens.num_paths as f64 * p as f64);
    let zscale = 1.0 / (ens.num_paths as f64 * p as f64);
    let per_step: Vec<(DMatrix<f64>, f64)> = (0..grid.steps())
        .into_par_iter()
        .map(|i| {
            let mut gsum = DMatrix::zeros(j, j);
            let mut zsum = 0.0;
            let mut feats = vec![0.0; j * p];
            let (mut sym, mut buf, mut field) = (Vec::new(), Vec::new(), vec![0.0; p]);
            for n in 0..ens.num_paths {
                let state = ens.state(n, i);
                ev.evaluate_into(&state, &mut sym, &mut feats);
                // feature-major buffer is the column-major M×J matrix Φ
                let phi = nalgebra::DMatrixView::from_slice(&feats, p, j);
                gsum.gemm_tr(1.0, &phi, &phi, 1.0);
                drift.eval_into(&state, &mut buf, &mut sym, &mut field);
                let (u0, u1) = (ens.slice(n, component, i), ens.slice(n, component, i + 1));
                for m in 0..p {
                    let r = u1[m] - u0[m] - grid.dt * field[m];
                    zsum += r * r;
                }
            }
            gsum *= scale;
            // enforce exact symmetry
            let sym_g = (&gsum + gsum.transpose()) * 0.5;
            (sym_g, zsum * zscale)
        })
        .collect();
    let (g, zeta) = per_step.into_iter().unzip();
    Ok(DiffusionSystem {
        g,
        zeta,
        lambda: vec![1.0; j],
        dead: Vec::new(),
        component,
    })
}

/// Rescales so every feature's time-averaged diagonal is one.
pub fn normalize_diffusion(sys: &DiffusionSystem) -> Result<DiffusionSystem> {
    let j = sys.num_features();
    let steps = sys.steps() as f64;
    let mut lambda = vec![1.0; j];
    let mut dead = sys.dead.clone();
    for k in 0..j {
        let avg = sys.g.iter().map(|gi| gi[(k, k)]).sum::<f64>() / steps;
        if avg < 0.0 {
            return Err(Error::Inconsistent(format!(
                "feature {k} has negative averaged diagonal {avg}"
            )));
        }
        if avg == 0.0 || !avg.is_finite() {
            if !dead.contains(&k) {
                warn!("diffusion feature {k} vanishes on the data; dropped");
                dead.push(k);
            }
        } else {
            lambda[k] = avg.sqrt();
        }
    }
    dead.sort_unstable();
    let g = sys
        .g
        .iter()
        .map(|gi| DMatrix::from_fn(j, j, |r, c| gi[(r, c)] / (lambda[r] * lambda[c])))
        .collect();
    Ok(DiffusionSystem {
        g,
        zeta: sys.zeta.clone(),
        lambda: sys.lambda.iter().zip(&lambda).map(|(a, b)| a * b).collect(),
        dead,
        component: sys.component,
    })
}

/// Maps coefficients of a normalized system back to the original scale.
pub fn unnormalize(c: &SparseCoeffs, lambda: &[f64]) -> SparseCoeffs {
    SparseCoeffs {
        len: c.len,
        entries: c.entries.iter().map(|&(k, v)| (k, v / lambda[k])).collect(),
    }
}
