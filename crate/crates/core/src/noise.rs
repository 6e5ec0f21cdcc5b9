//! Additive-noise detection.
//!
//! With purely additive noise `σ dW` the space-averaged drift residual of
//! each step is `σ ΔW` plus truncation error, hence Gaussian. Each path's
//! residual means are tested for normality and the per-path p-values are
//! combined with Stouffer's method.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coeffs::SparseCoeffs;
use crate::data::TrajectoryEnsemble;
use crate::dictionary::FeatureDictionary;
use crate::diffusion::{path_residuals, DriftField};
use crate::error::{Error, Result};
use crate::stats::{dagostino_pearson, mean_std, normal_quantile, MIN_SAMPLE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Additive,
    MultiplicativeOrMixed,
}

/// How the combined statistic is turned into a verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionRule {
    /// Multiplicative when `Z_N ≤ Φ^{-1}(p*)`: a level-`p*` left-tail test.
    #[default]
    OneSided,
    /// Two thresholds on `2|Z_N|` against `z* = |Φ^{-1}(p*)|`: multiplicative
    /// at or above `z*`, additive below `z*/2`, multiplicative in between.
    Band,
}

impl std::str::FromStr for DecisionRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one-sided" | "one_sided" => Ok(DecisionRule::OneSided),
            "band" => Ok(DecisionRule::Band),
            _ => Err(Error::InvalidArgument(format!(
                "unknown decision rule `{s}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseDecision {
    /// Stouffer statistic `N^{-1/2} Σ Φ^{-1}(p_n)`.
    pub z_combined: f64,
    pub per_path_p: Vec<f64>,
    pub verdict: NoiseKind,
    /// Present iff the verdict is additive.
    pub sigma_hat: Option<f64>,
    pub p_star: f64,
    pub rule: DecisionRule,
    /// Some path had residual means with round-off spread only.
    pub degenerate: bool,
}

/// Space-averaged drift residuals `ρ_i^n` (one row per path) and the RMS of
/// the pointwise residuals, which sets the round-off scale.
#[derive(Debug, Clone)]
pub struct ResidualMeans {
    pub rho: Vec<Vec<f64>>,
    pub pointwise_rms: f64,
    pub dt: f64,
}

pub fn residual_means(
    ens: &TrajectoryEnsemble,
    dict: &FeatureDictionary,
    a_hat: &SparseCoeffs,
    component: usize,
) -> Result<ResidualMeans> {
    dict.check_compatible(ens.grid.space_dims(), ens.num_components)?;
    let grid = &ens.grid;
    let drift = DriftField::new(dict, a_hat, &grid.num_space, &grid.dx)?;
    let p = grid.points();
    let rows: Vec<(Vec<f64>, f64)> = (0..ens.num_paths)
        .into_par_iter()
        .map(|n| {
            let r = path_residuals(ens, &drift, component, n);
            let sq = r.iter().map(|v| v * v).sum::<f64>();
            (
                r.chunks(p)
                    .map(|c| c.iter().sum::<f64>() / p as f64)
                    .collect(),
                sq,
            )
        })
        .collect();
    let total = (ens.num_paths * grid.steps() * p) as f64;
    let pointwise_rms = (rows.iter().map(|r| r.1).sum::<f64>() / total).sqrt();
    Ok(ResidualMeans {
        rho: rows.into_iter().map(|r| r.0).collect(),
        pointwise_rms,
        dt: grid.dt,
    })
}

fn verdict(z: f64, p_star: f64, rule: DecisionRule) -> NoiseKind {
    let q = normal_quantile(p_star);
    let multiplicative = match rule {
        DecisionRule::OneSided => z <= q,
        // the middle band goes to the multiplicative side
        DecisionRule::Band => 2.0 * z.abs() >= q.abs() / 2.0,
    };
    if multiplicative {
        NoiseKind::MultiplicativeOrMixed
    } else {
        NoiseKind::Additive
    }
}

/// Decision from a residual-mean matrix.
pub fn decide_from_residuals(
    res: &ResidualMeans,
    p_star: f64,
    rule: DecisionRule,
) -> Result<NoiseDecision> {
    if !(p_star > 0.0 && p_star < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "significance level {p_star} outside (0, 1)"
        )));
    }
    if res.rho.is_empty() {
        return Err(Error::InvalidArgument("no paths".into()));
    }
    if let Some(short) = res.rho.iter().find(|r| r.len() < MIN_SAMPLE) {
        return Err(Error::SampleTooSmall(short.len()));
    }
    // round-off floor relative to the size of the pointwise residuals
    let floor = (res.pointwise_rms > 0.0).then_some(res.pointwise_rms);
    let tests: Vec<_> = res
        .rho
        .par_iter()
        .map(|row| dagostino_pearson(row, floor))
        .collect::<Result<_>>()?;
    let degenerate = tests.iter().any(|t| t.degenerate);
    let per_path_p: Vec<f64> = tests.iter().map(|t| t.p).collect();
    let z = per_path_p.iter().map(|&p| normal_quantile(p)).sum::<f64>()
        / (per_path_p.len() as f64).sqrt();
    let kind = if degenerate {
        NoiseKind::MultiplicativeOrMixed
    } else {
        verdict(z, p_star, rule)
    };
    let sigma_hat = (kind == NoiseKind::Additive).then(|| {
        let all: Vec<f64> = res.rho.iter().flatten().copied().collect();
        mean_std(&all).1 / res.dt.sqrt()
    });
    Ok(NoiseDecision {
        z_combined: z,
        per_path_p,
        verdict: kind,
        sigma_hat,
        p_star,
        rule,
        degenerate,
    })
}

pub fn decide_noise(
    ens: &TrajectoryEnsemble,
    dict: &FeatureDictionary,
    a_hat: &SparseCoeffs,
    component: usize,
    p_star: f64,
    rule: DecisionRule,
) -> Result<NoiseDecision> {
    let res = residual_means(ens, dict, a_hat, component)?;
    decide_from_residuals(&res, p_star, rule)
}
