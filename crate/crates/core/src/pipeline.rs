//! End-to-end identification: drift candidates and selection, noise
//! detection, then diffusion candidates and selection.

use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::coeffs::SparseCoeffs;
use crate::data::TrajectoryEnsemble;
use crate::dictionary::{FeatureDictionary, FeatureSpec, Symbol};
use crate::diffusion::assemble_diffusion_system;
use crate::drift::{assemble_drift_system, generate_drift_candidates};
use crate::error::{Error, Result};
use crate::metrics::{EvalReport, TermMetrics};
use crate::noise::{decide_noise, DecisionRule, NoiseDecision, NoiseKind};
use crate::qsp::{generate_diffusion_candidates, QspIteration, QspOptions};
use crate::select::{select_diffusion, select_drift, ScoredCandidate};
use crate::simulate::{simulate_paths, ModelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentifyOptions {
    pub drift_p: usize,
    pub drift_q: usize,
    pub diffusion_p: usize,
    pub diffusion_q: usize,
    pub k_max: usize,
    /// `None` means `min(J, 6)`.
    pub j_max: Option<usize>,
    pub drift_trim: f64,
    pub diffusion_trim: f64,
    pub p_star: f64,
    pub noise_rule: DecisionRule,
    /// Run the diffusion stage even when the noise looks additive.
    pub force_diffusion: bool,
    pub qsp: QspOptions,
}

impl Default for IdentifyOptions {
    fn default() -> Self {
        IdentifyOptions {
            drift_p: 4,
            drift_q: 3,
            diffusion_p: 2,
            diffusion_q: 2,
            k_max: 10,
            j_max: None,
            drift_trim: 0.3,
            diffusion_trim: 0.3,
            p_star: 0.05,
            noise_rule: DecisionRule::OneSided,
            force_diffusion: false,
            qsp: QspOptions::default(),
        }
    }
}

impl IdentifyOptions {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("drift trim", self.drift_trim),
            ("diffusion trim", self.diffusion_trim),
            ("p*", self.p_star),
        ] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::InvalidArgument(format!("{name} {v} outside [0, 1)")));
            }
        }
        if self.p_star == 0.0 {
            return Err(Error::InvalidArgument("p* must be positive".into()));
        }
        if self.drift_p > 6 || self.diffusion_p > 6 {
            return Err(Error::InvalidArgument("dictionary orders above 6 are not supported".into()));
        }
        if self.k_max == 0 || self.j_max == Some(0) {
            return Err(Error::InvalidArgument("k_max and j_max must be positive".into()));
        }
        Ok(())
    }
}

/// Identified equation for one component.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComponentModel {
    pub component: usize,
    pub drift: SparseCoeffs,
    pub s_drift: f64,
    pub noise_kind: NoiseKind,
    /// Absent when the sample was too short for the normality test.
    pub noise: Option<NoiseDecision>,
    /// Canonical sign; present iff the noise is not additive.
    pub diffusion: Option<SparseCoeffs>,
    /// Present iff the noise is additive.
    pub sigma_hat: Option<f64>,
    pub s_diffuse: Option<f64>,
    pub drift_candidates: Vec<ScoredCandidate>,
    pub diffusion_candidates: Vec<ScoredCandidate>,
    /// QSP iteration records, one list per diffusion candidate.
    pub qsp_traces: Vec<Vec<QspIteration>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdentifiedModel {
    pub equations: Vec<String>,
    pub drift_features: Vec<String>,
    pub diffusion_features: Vec<String>,
    pub components: Vec<ComponentModel>,
    pub options: IdentifyOptions,
}

/// Wall-clock seconds per stage; kept out of the report so reports stay
/// reproducible.
#[derive(Debug, Clone, Copy, Default)]
pub struct Timings {
    pub drift: f64,
    pub noise: f64,
    pub diffusion: f64,
}

impl Timings {
    pub fn total(&self) -> f64 {
        self.drift + self.noise + self.diffusion
    }
}

fn component_name(c: usize) -> String {
    Symbol::new(c, [0, 0]).to_string()
}

fn expression(c: &SparseCoeffs, names: &[String]) -> String {
    c.to_expression(names)
}

/// Diffusion vector used for evaluation: for additive noise, `σ̂` on the
/// constant feature.
pub fn effective_diffusion(m: &ComponentModel, features: &[String]) -> Result<SparseCoeffs> {
    if let Some(b) = &m.diffusion {
        return Ok(b.clone());
    }
    let sigma = m.sigma_hat.unwrap_or(0.0);
    let one = features
        .iter()
        .position(|n| n == &FeatureSpec::constant().to_string())
        .ok_or_else(|| Error::Inconsistent("diffusion dictionary lacks the constant feature".into()))?;
    Ok(SparseCoeffs::from_support(features.len(), &[one], &[sigma]))
}

fn identify_component(
    ens: &TrajectoryEnsemble,
    dd: &FeatureDictionary,
    gd: &FeatureDictionary,
    c: usize,
    opts: &IdentifyOptions,
    t: &mut Timings,
) -> Result<ComponentModel> {
    let start = Instant::now();
    let sys = assemble_drift_system(ens, dd, c)?;
    let cands = generate_drift_candidates(&sys, opts.k_max.min(dd.len()), opts.drift_trim)?;
    let coeffs: Vec<SparseCoeffs> = cands.into_iter().map(|c| c.coeffs).collect();
    let (drift_candidates, best) = select_drift(&sys, &coeffs)?;
    let a_hat = drift_candidates[best].coeffs.clone();
    let s_drift = drift_candidates[best].score;
    drop(sys);
    t.drift += start.elapsed().as_secs_f64();
    info!("component {c}: drift {}", expression(&a_hat, &dd.names()));

    let start = Instant::now();
    let noise = match decide_noise(ens, dd, &a_hat, c, opts.p_star, opts.noise_rule) {
        Ok(d) => Some(d),
        Err(Error::SampleTooSmall(n)) => {
            warn!("only {n} steps per path; skipping the additive-noise test");
            None
        }
        Err(e) => return Err(e),
    };
    let noise_kind = noise.as_ref().map_or(NoiseKind::MultiplicativeOrMixed, |d| d.verdict);
    t.noise += start.elapsed().as_secs_f64();

    let mut model = ComponentModel {
        component: c,
        drift: a_hat,
        s_drift,
        noise_kind,
        sigma_hat: noise.as_ref().and_then(|d| d.sigma_hat),
        noise,
        diffusion: None,
        s_diffuse: None,
        drift_candidates,
        diffusion_candidates: Vec::new(),
        qsp_traces: Vec::new(),
    };
    if noise_kind == NoiseKind::Additive && !opts.force_diffusion {
        return Ok(model);
    }
    let start = Instant::now();
    let sys = assemble_diffusion_system(ens, dd, gd, &model.drift, c)?;
    let j_max = opts.j_max.unwrap_or(6).min(gd.len());
    let cands = generate_diffusion_candidates(&sys, j_max, opts.diffusion_trim, &opts.qsp)?;
    drop(sys);
    model.qsp_traces = cands.iter().map(|c| c.trace.clone()).collect();
    let coeffs: Vec<SparseCoeffs> = cands.into_iter().map(|c| c.coeffs).collect();
    let (scored, best) = select_diffusion(ens, dd, gd, &model.drift, &coeffs, c)?;
    model.diffusion = Some(scored[best].coeffs.clone());
    model.s_diffuse = Some(scored[best].score);
    model.diffusion_candidates = scored;
    if noise_kind == NoiseKind::Additive {
        model.sigma_hat = None;
        model.noise_kind = NoiseKind::MultiplicativeOrMixed;
    }
    t.diffusion += start.elapsed().as_secs_f64();
    Ok(model)
}

/// Identifies every component of the ensemble.
pub fn identify(ens: &TrajectoryEnsemble, opts: &IdentifyOptions) -> Result<IdentifiedModel> {
    Ok(identify_timed(ens, opts)?.0)
}

pub fn identify_timed(ens: &TrajectoryEnsemble, opts: &IdentifyOptions) -> Result<(IdentifiedModel, Timings)> {
    opts.validate()?;
    ens.check_finite()?;
    let (dims, nc) = (ens.grid.space_dims(), ens.num_components);
    let dd = FeatureDictionary::build(opts.drift_p, opts.drift_q, dims, nc)?;
    let gd = FeatureDictionary::build(opts.diffusion_p, opts.diffusion_q, dims, nc)?;
    let (dn, gn) = (dd.names(), gd.names());
    let mut t = Timings::default();
    let components = (0..nc)
        .map(|c| identify_component(ens, &dd, &gd, c, opts, &mut t))
        .collect::<Result<Vec<_>>>()?;
    let equations = components
        .iter()
        .map(|m| {
            let noise = match (&m.diffusion, m.sigma_hat) {
                (Some(b), _) => format!("({})", expression(b, &gn)),
                (None, Some(s)) => format!("{s:.6}"),
                (None, None) => "0".into(),
            };
            format!("d{} = ({}) dt + {} dW", component_name(m.component), expression(&m.drift, &dn), noise)
        })
        .collect();
    Ok((
        IdentifiedModel {
            equations,
            drift_features: dn,
            diffusion_features: gn,
            components,
            options: *opts,
        },
        t,
    ))
}

/// Per-component metrics against a known model.
pub fn evaluate_against(model: &IdentifiedModel, truth: &ModelSpec) -> Result<Vec<EvalReport>> {
    if truth.components != model.components.len() {
        return Err(Error::Shape(format!(
            "report has {} components, truth {}",
            model.components.len(),
            truth.components
        )));
    }
    let dd = FeatureDictionary::from_specs(
        model.drift_features.iter().map(|n| FeatureSpec::parse(n)).collect::<Result<_>>()?,
        truth.space_dims,
        truth.components,
    );
    let gd = FeatureDictionary::from_specs(
        model.diffusion_features.iter().map(|n| FeatureSpec::parse(n)).collect::<Result<_>>()?,
        truth.space_dims,
        truth.components,
    );
    model
        .components
        .iter()
        .map(|m| {
            let c = m.component;
            let a = SparseCoeffs::from_dense(&truth.drift_truth(c, &dd)?);
            let b = SparseCoeffs::from_dense(&truth.diffusion_truth(c, &gd)?);
            let b_hat = effective_diffusion(m, &model.diffusion_features)?;
            Ok(EvalReport {
                drift: TermMetrics::evaluate(&m.drift, &a, false)?,
                diffusion: TermMetrics::evaluate(&b_hat, &b, true)?,
            })
        })
        .collect()
}

/// Simulation settings for one experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationParams {
    pub num_paths: usize,
    pub num_times: Option<usize>,
    pub num_space: Option<usize>,
    pub upsample: usize,
    pub seed: u64,
}

/// Result of one simulate-identify-evaluate run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub seed: u64,
    pub model: IdentifiedModel,
    pub eval: Vec<EvalReport>,
    pub timings: Timings,
}

/// Simulates `truth` with `sim`, identifies it and scores the result.
pub fn run_experiment(truth: &ModelSpec, sim: &SimulationParams, opts: &IdentifyOptions) -> Result<RunOutcome> {
    let grid = truth.grid(sim.num_times, sim.num_space)?;
    let ens = simulate_paths(truth, &grid, sim.num_paths, sim.upsample, sim.seed)?;
    let (model, timings) = identify_timed(&ens, opts)?;
    let eval = evaluate_against(&model, truth)?;
    Ok(RunOutcome {
        seed: sim.seed,
        model,
        eval,
        timings,
    })
}

/// Repetitions with seeds `seed + r`, run one after another (each run is
/// internally parallel).
pub fn run_repetitions(
    truth: &ModelSpec,
    sim: &SimulationParams,
    opts: &IdentifyOptions,
    repetitions: usize,
) -> Result<Vec<RunOutcome>> {
    (0..repetitions as u64)
        .map(|r| {
            let p = SimulationParams {
                seed: sim.seed.wrapping_add(r),
                ..*sim
            };
            run_experiment(truth, &p, opts)
        })
        .collect()
}
