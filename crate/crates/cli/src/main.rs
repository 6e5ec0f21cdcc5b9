//! `stid`: simulate SPDE ensembles, identify drift, diffusion and noise
//! type, and score the result against known models.

mod config;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use rayon::prelude::*;
use serde::Serialize;

use stid_core::catalog::{builtin_model, MODEL_NAMES};
use stid_core::cg::CgOptions;
use stid_core::drift::{assemble_drift_system, generate_drift_candidates};
use stid_core::io::{read_ensemble, write_ensemble};
use stid_core::metrics::{mean_std_columns, EvalReport, TermMetrics};
use stid_core::noise::{decide_noise, DecisionRule};
use stid_core::pipeline::{evaluate_against, identify_timed, IdentifiedModel, IdentifyOptions};
use stid_core::qsp::QspOptions;
use stid_core::select::select_drift;
use stid_core::simulate::{simulate_paths, ModelSpec};
use stid_core::spectral::{
    fourier_transform, identify_diffusion_additive, identify_diffusion_quadform, identify_drift_linear, mode_table,
    DriftRoute, Factorization, LinearDrift, QuadForm,
};
use stid_core::{Error, FeatureDictionary, TrajectoryEnsemble};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(
                Error::InvalidArgument(_)
                | Error::UnknownModel(_)
                | Error::InvalidGrid(_)
                | Error::GridTooSmall(_)
                | Error::Shape(_),
            ) => 2,
            _ => 1,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "stid", version, about, args_override_self = true)]
#[command(after_help = "Worker threads are capped by STOCH_IDENT_THREADS. \
    Any long flag may also be set as `key = value` in a --config file; flags win.")]
struct Cli {
    /// Flat key = value file with defaults for the subcommand's flags.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a catalog model and write an STID1 ensemble file.
    #[command(args_override_self = true)]
    Simulate {
        #[command(flatten)]
        sim: SimArgs,
        /// Catalog model name.
        #[arg(long)]
        model: String,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Identify drift, noise type and diffusion from an ensemble.
    #[command(args_override_self = true)]
    Identify {
        #[command(flatten)]
        src: SourceArgs,
        #[command(flatten)]
        ident: IdentArgs,
        /// Independent repetitions (simulated input only), seeded seed + r.
        #[arg(long, default_value_t = 1)]
        repetitions: usize,
        /// Report path; with repetitions, `.rN` is inserted before the extension.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        /// Metrics CSV (needs a known model); rows are appended.
        #[arg(long, value_name = "FILE")]
        csv: Option<PathBuf>,
        /// Ground-truth model for --input data.
        #[arg(long)]
        truth: Option<String>,
    },
    /// Score identification reports against a known model.
    #[command(args_override_self = true)]
    Evaluate {
        /// One or more report files written by `identify`.
        #[arg(long, required = true, num_args = 1.., value_name = "FILE")]
        report: Vec<PathBuf>,
        /// Catalog model name, or a config file with a `model` key.
        #[arg(long)]
        truth: String,
        /// Metrics CSV; rows are appended.
        #[arg(long, value_name = "FILE")]
        csv: Option<PathBuf>,
    },
    /// Fourier-domain identification of linear constant-coefficient models.
    #[command(args_override_self = true)]
    Oracle {
        #[command(flatten)]
        src: SourceArgs,
        #[command(flatten)]
        oracle: OracleArgs,
    },
    /// Run the drift stage and the additive-noise test only.
    #[command(name = "detect-noise", args_override_self = true)]
    DetectNoise {
        #[command(flatten)]
        src: SourceArgs,
        #[command(flatten)]
        ident: IdentArgs,
    },
}

#[derive(Args, Debug, Clone)]
struct SimArgs {
    /// Number of sample paths N.
    #[arg(long, default_value_t = 100)]
    paths: usize,
    /// Time points (model default if omitted).
    #[arg(long)]
    nt: Option<usize>,
    /// Space points per axis (model default if omitted).
    #[arg(long)]
    nx: Option<usize>,
    /// Fine steps per observation interval.
    #[arg(long, default_value_t = 50)]
    upsample: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug, Clone)]
struct SourceArgs {
    /// STID1 ensemble file.
    #[arg(long, value_name = "FILE", conflicts_with = "model")]
    input: Option<PathBuf>,
    /// Catalog model to simulate instead of reading a file.
    #[arg(long)]
    model: Option<String>,
    #[command(flatten)]
    sim: SimArgs,
}

#[derive(Args, Debug, Clone)]
struct IdentArgs {
    /// Drift dictionary: highest derivative order.
    #[arg(long, default_value_t = 4)]
    drift_p: usize,
    /// Drift dictionary: most factors per monomial.
    #[arg(long, default_value_t = 3)]
    drift_q: usize,
    #[arg(long, default_value_t = 2)]
    diffusion_p: usize,
    #[arg(long, default_value_t = 2)]
    diffusion_q: usize,
    /// Largest drift sparsity tried.
    #[arg(long, default_value_t = 10)]
    k_max: usize,
    /// Largest diffusion sparsity tried [default: min(J, 6)].
    #[arg(long)]
    j_max: Option<usize>,
    #[arg(long, default_value_t = 0.3)]
    drift_trim: f64,
    #[arg(long, default_value_t = 0.3)]
    diffusion_trim: f64,
    /// Significance level of the additive-noise test.
    #[arg(long, default_value_t = 0.05)]
    p_star: f64,
    #[arg(long, value_enum, default_value_t = RuleArg::OneSided)]
    noise_rule: RuleArg,
    /// Run the diffusion stage even when the noise tests additive.
    #[arg(long)]
    force_diffusion: bool,
    #[arg(long, default_value_t = 100)]
    qsp_max_iter: usize,
    #[arg(long, default_value_t = 1000)]
    cg_max_iter: usize,
    #[arg(long, default_value_t = 1e-14)]
    cg_grad_tol: f64,
    /// Starting value of CG coefficients.
    #[arg(long, default_value_t = 10.0)]
    cg_init: f64,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum RuleArg {
    OneSided,
    Band,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum RouteArg {
    MeanRatio,
    PathRatio,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq)]
enum NoiseArg {
    None,
    Multiplicative,
    Additive,
}

#[derive(Args, Debug, Clone)]
struct OracleArgs {
    /// First time index.
    #[arg(long, default_value_t = 0)]
    t1: usize,
    /// Second time index [default: a quarter of the time span].
    #[arg(long)]
    t2: Option<usize>,
    /// Highest drift derivative order.
    #[arg(long, default_value_t = 2)]
    p1: usize,
    /// Highest diffusion derivative order.
    #[arg(long, default_value_t = 1)]
    p2: usize,
    #[arg(long, value_enum, default_value_t = RouteArg::MeanRatio)]
    route: RouteArg,
    /// Diffusion form to identify.
    #[arg(long, value_enum, default_value_t = NoiseArg::None)]
    noise: NoiseArg,
    /// Highest wavenumber used [default: M/8].
    #[arg(long)]
    max_mode: Option<usize>,
    /// Modes below this fraction of the largest amplitude are dropped.
    #[arg(long, default_value_t = 1e-8)]
    floor: f64,
    /// Relative tolerance of the factorization.
    #[arg(long, default_value_t = 0.05)]
    factor_tol: f64,
}

impl IdentArgs {
    fn options(&self) -> CliResult<IdentifyOptions> {
        let o = IdentifyOptions {
            drift_p: self.drift_p,
            drift_q: self.drift_q,
            diffusion_p: self.diffusion_p,
            diffusion_q: self.diffusion_q,
            k_max: self.k_max,
            j_max: self.j_max,
            drift_trim: self.drift_trim,
            diffusion_trim: self.diffusion_trim,
            p_star: self.p_star,
            noise_rule: match self.noise_rule {
                RuleArg::OneSided => DecisionRule::OneSided,
                RuleArg::Band => DecisionRule::Band,
            },
            force_diffusion: self.force_diffusion,
            qsp: QspOptions {
                max_iter: self.qsp_max_iter,
                cg: CgOptions {
                    max_iter: self.cg_max_iter,
                    grad_tol: self.cg_grad_tol,
                    init: self.cg_init,
                },
            },
        };
        o.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(o)
    }
}

fn model(name: &str) -> CliResult<ModelSpec> {
    builtin_model(name).map_err(|_| {
        CliError::Config(format!("unknown model `{name}` (available: {})", MODEL_NAMES.join(", ")))
    })
}

fn simulate_with(m: &ModelSpec, sim: &SimArgs, seed: u64) -> CliResult<TrajectoryEnsemble> {
    if sim.paths == 0 {
        return Err(CliError::Config("--paths must be at least 1".into()));
    }
    if sim.upsample == 0 {
        return Err(CliError::Config("--upsample must be at least 1".into()));
    }
    let grid = m.grid(sim.nt, sim.nx)?;
    Ok(simulate_paths(m, &grid, sim.paths, sim.upsample, seed)?)
}

fn load_source(src: &SourceArgs) -> CliResult<TrajectoryEnsemble> {
    match (&src.input, &src.model) {
        (Some(p), _) => Ok(read_ensemble(p)?),
        (None, Some(name)) => simulate_with(&model(name)?, &src.sim, src.sim.seed),
        (None, None) => Err(CliError::Config("either --input or --model is required".into())),
    }
}

/// Writes via a temporary sibling and a rename so readers never see partial files.
fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let tmp = path.with_extension("partial");
    fs::write(&tmp, bytes)
        .and_then(|_| fs::rename(&tmp, path))
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

fn append_csv(path: &Path, rows: &[String]) -> CliResult<()> {
    let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| CliError::Io(format!("cannot open {}: {e}", path.display())))?;
    let mut text = String::new();
    if fresh {
        text.push_str(&EvalReport::csv_header());
        text.push('\n');
    }
    for r in rows {
        text.push_str(r);
        text.push('\n');
    }
    f.write_all(text.as_bytes())
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

fn repetition_path(base: &Path, r: usize, reps: usize) -> PathBuf {
    if reps == 1 {
        return base.to_path_buf();
    }
    let stem = base.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match base.extension() {
        Some(ext) => format!("{stem}.r{r}.{}", ext.to_string_lossy()),
        None => format!("{stem}.r{r}"),
    };
    base.with_file_name(name)
}

fn to_json<T: Serialize>(v: &T) -> CliResult<String> {
    serde_json::to_string_pretty(v).map_err(|e| CliError::Core(e.into()))
}

fn print_aggregate(reports: &[EvalReport]) {
    let rows: Vec<Vec<f64>> = reports
        .iter()
        .map(|r| r.drift.values().iter().chain(&r.diffusion.values()).copied().collect())
        .collect();
    let stats = mean_std_columns(&rows);
    println!("metric,mean,std (over {} rows)", reports.len());
    for (i, (m, s)) in stats.iter().enumerate() {
        let part = if i < 6 { "drift" } else { "diffusion" };
        println!("{part}_{},{m:.4},{s:.4}", TermMetrics::NAMES[i % 6]);
    }
}

/// Most frequent support pattern with mean ± std of its coefficients.
fn print_most_frequent(models: &[IdentifiedModel]) {
    for c in 0..models[0].components.len() {
        let mut groups: BTreeMap<(Vec<usize>, Vec<usize>), Vec<(Vec<f64>, Vec<f64>)>> = BTreeMap::new();
        for m in models {
            let cm = &m.components[c];
            let b = stid_core::pipeline::effective_diffusion(cm, &m.diffusion_features)
                .unwrap_or_else(|_| stid_core::coeffs::SparseCoeffs::zeros(m.diffusion_features.len()));
            groups
                .entry((cm.drift.support(), b.support()))
                .or_default()
                .push((cm.drift.values(), b.values().iter().map(|v| v.abs()).collect()));
        }
        let Some(((ds, gs), runs)) = groups.iter().max_by_key(|(k, v)| (v.len(), std::cmp::Reverse((*k).clone())))
        else {
            continue;
        };
        let fmt = |supp: &[usize], vals: Vec<Vec<f64>>, names: &[String]| -> String {
            let st = mean_std_columns(&vals);
            supp.iter()
                .zip(st)
                .map(|(k, (m, s))| format!("{m:.3}±{s:.3} {}", names[*k]))
                .collect::<Vec<_>>()
                .join(" + ")
        };
        let m0 = &models[0];
        println!(
            "most frequent model, component {c} ({}/{} runs): drift {} | diffusion |{}|",
            runs.len(),
            models.len(),
            fmt(ds, runs.iter().map(|r| r.0.clone()).collect(), &m0.drift_features),
            fmt(gs, runs.iter().map(|r| r.1.clone()).collect(), &m0.diffusion_features),
        );
    }
}

fn cmd_simulate(sim: &SimArgs, name: &str, out: &Path) -> CliResult<()> {
    let m = model(name)?;
    let ens = simulate_with(&m, sim, sim.seed)?;
    let tmp = out.with_extension("partial");
    write_ensemble(&ens, &tmp)?;
    fs::rename(&tmp, out).map_err(|e| CliError::Io(format!("cannot write {}: {e}", out.display())))?;
    let g = &ens.grid;
    println!(
        "{}: N={} grid {}x{} (t in [{}, {}]) upsample {} seed {} -> {}",
        m.name,
        ens.num_paths,
        g.num_times,
        g.num_space.iter().map(|n| n.to_string()).collect::<Vec<_>>().join("x"),
        g.t0,
        g.t_final(),
        sim.upsample,
        sim.seed,
        out.display()
    );
    Ok(())
}

struct IdentifyRequest<'a> {
    src: &'a SourceArgs,
    opts: IdentifyOptions,
    repetitions: usize,
    out: Option<&'a Path>,
    csv: Option<&'a Path>,
    truth: Option<&'a str>,
}

fn cmd_identify(req: IdentifyRequest<'_>) -> CliResult<()> {
    if req.repetitions == 0 {
        return Err(CliError::Config("--repetitions must be at least 1".into()));
    }
    if req.src.input.is_some() && req.repetitions > 1 {
        return Err(CliError::Config("--repetitions needs --model".into()));
    }
    let truth = match (req.truth, &req.src.model) {
        (Some(t), _) => Some(resolve_truth(t)?),
        (None, Some(name)) => Some(model(name)?),
        (None, None) => None,
    };
    if req.csv.is_some() && truth.is_none() {
        return Err(CliError::Config("--csv needs a known model (--model or --truth)".into()));
    }
    let reps = req.repetitions;
    let runs: Vec<CliResult<(IdentifiedModel, f64)>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let ens = match &req.src.input {
                Some(_) => load_source(req.src)?,
                None => {
                    let m = model(req.src.model.as_deref().unwrap_or_default())?;
                    simulate_with(&m, &req.src.sim, req.src.sim.seed.wrapping_add(r as u64))?
                }
            };
            let (model, t) = identify_timed(&ens, &req.opts)?;
            if let Some(out) = req.out {
                write_atomic(&repetition_path(out, r, reps), to_json(&model)?.as_bytes())?;
            }
            info!("repetition {r}: {:.2}s", t.total());
            Ok((model, t.total()))
        })
        .collect();
    let runs = runs.into_iter().collect::<CliResult<Vec<_>>>()?;
    let models: Vec<IdentifiedModel> = runs.iter().map(|r| r.0.clone()).collect();
    if reps == 1 {
        if req.out.is_none() {
            println!("{}", to_json(&models[0])?);
        } else {
            for e in &models[0].equations {
                println!("{e}");
            }
        }
    } else {
        print_most_frequent(&models);
    }
    if let Some(truth) = &truth {
        let mut rows = Vec::new();
        let mut all = Vec::new();
        for (r, m) in models.iter().enumerate() {
            let ev = evaluate_against(m, truth).map_err(|e| CliError::Config(e.to_string()))?;
            for (c, e) in ev.iter().enumerate() {
                rows.push(e.csv_row(&(req.src.sim.seed.wrapping_add(r as u64)).to_string(), c));
            }
            all.extend(ev);
        }
        if let Some(csv) = req.csv {
            append_csv(csv, &rows)?;
        }
        if reps > 1 {
            print_aggregate(&all);
        }
    }
    Ok(())
}

fn resolve_truth(t: &str) -> CliResult<ModelSpec> {
    if MODEL_NAMES.contains(&t) {
        return model(t);
    }
    let path = Path::new(t);
    if !path.exists() {
        return Err(CliError::Config(format!(
            "truth `{t}` is neither a catalog model nor an existing file"
        )));
    }
    let pairs = config::load(path)?;
    let name = pairs
        .iter()
        .find(|(k, _)| k == "model")
        .map(|(_, v)| v.clone())
        .ok_or_else(|| CliError::Config(format!("truth file {t} has no `model` key")))?;
    model(&name)
}

fn cmd_evaluate(reports: &[PathBuf], truth: &str, csv: Option<&Path>) -> CliResult<()> {
    let truth = resolve_truth(truth)?;
    let mut rows = Vec::new();
    let mut all = Vec::new();
    for p in reports {
        let text = fs::read_to_string(p).map_err(|e| CliError::Io(format!("cannot read {}: {e}", p.display())))?;
        let m: IdentifiedModel = serde_json::from_str(&text).map_err(|e| CliError::Core(e.into()))?;
        let ev = evaluate_against(&m, &truth).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
        for (c, e) in ev.iter().enumerate() {
            let row = e.csv_row(&p.display().to_string(), c);
            println!("{row}");
            rows.push(row);
        }
        all.extend(ev);
    }
    if let Some(csv) = csv {
        append_csv(csv, &rows)?;
    }
    print_aggregate(&all);
    Ok(())
}

#[derive(Serialize)]
struct OracleReport {
    t1: f64,
    t2: f64,
    drift: LinearDrift,
    drift_terms: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    stratonovich_drift: Option<LinearDrift>,
    #[serde(skip_serializing_if = "Option::is_none")]
    quadratic_form: Option<QuadForm>,
    #[serde(skip_serializing_if = "Option::is_none")]
    factorization: Option<Factorization>,
    #[serde(skip_serializing_if = "Option::is_none")]
    factorization_error: Option<String>,
}

fn cmd_oracle(src: &SourceArgs, o: &OracleArgs) -> CliResult<()> {
    let ens = load_source(src)?;
    if ens.grid.space_dims() != 1 {
        return Err(CliError::Config("the oracle handles one space dimension only".into()));
    }
    let t2 = o.t2.unwrap_or(o.t1 + (ens.grid.num_times - 1 - o.t1) / 4);
    if t2 <= o.t1 || t2 >= ens.grid.num_times {
        return Err(CliError::Config(format!(
            "need t1 < t2 < {} (got {}, {})",
            ens.grid.num_times, o.t1, t2
        )));
    }
    let m = ens.grid.num_space[0];
    let max_mode = o.max_mode.unwrap_or(m / 8);
    let table = mode_table(&ens, 0, o.t1, t2, max_mode)?;
    let route = match o.route {
        RouteArg::MeanRatio => DriftRoute::MeanRatio,
        RouteArg::PathRatio => DriftRoute::PathRatio,
    };
    let drift = identify_drift_linear(&table, o.p1, route, o.floor)?;
    let mut stratonovich = None;
    let quad = match o.noise {
        NoiseArg::None => None,
        NoiseArg::Multiplicative => {
            // the mean ratio carries the Ito drift, per-path ratios the Stratonovich one
            let strat = identify_drift_linear(&table, o.p1, DriftRoute::PathRatio, o.floor)?;
            let q = identify_diffusion_quadform(&table, &strat.coeffs, o.p2, o.floor)?;
            stratonovich = Some(strat);
            Some(q)
        }
        NoiseArg::Additive => {
            let ones = vec![1.0; m];
            let full = fourier_transform(&ones, ens.grid.x0[0], ens.grid.dx[0]);
            let r_hat: Vec<_> = table
                .wavenumbers
                .iter()
                .map(|&k| full[k.rem_euclid(m as i64) as usize])
                .collect();
            Some(identify_diffusion_additive(&table, &drift.coeffs, &r_hat, o.p2, o.floor)?)
        }
    };
    let (factorization, factorization_error) = match &quad {
        Some(q) if q.p2 <= 2 => match q.factorize(o.factor_tol) {
            Ok(f) => (Some(f), None),
            Err(e) => (None, Some(e.to_string())),
        },
        _ => (None, None),
    };
    let report = OracleReport {
        t1: table.t1,
        t2: table.t2,
        drift_terms: drift.names().into_iter().zip(drift.coeffs.iter().copied()).collect(),
        drift,
        stratonovich_drift: stratonovich,
        quadratic_form: quad,
        factorization,
        factorization_error,
    };
    println!("{}", to_json(&report)?);
    Ok(())
}

#[derive(Serialize)]
struct NoiseReport {
    drift: String,
    decision: stid_core::noise::NoiseDecision,
}

fn cmd_detect_noise(src: &SourceArgs, ident: &IdentArgs) -> CliResult<()> {
    let opts = ident.options()?;
    let ens = load_source(src)?;
    let (dims, nc) = (ens.grid.space_dims(), ens.num_components);
    let dict = FeatureDictionary::build(opts.drift_p, opts.drift_q, dims, nc)?;
    let names = dict.names();
    let mut out = Vec::new();
    for c in 0..nc {
        let sys = assemble_drift_system(&ens, &dict, c)?;
        let cands = generate_drift_candidates(&sys, opts.k_max.min(dict.len()), opts.drift_trim)?;
        let coeffs: Vec<_> = cands.into_iter().map(|c| c.coeffs).collect();
        let (scored, best) = select_drift(&sys, &coeffs)?;
        let a = &scored[best].coeffs;
        let decision = decide_noise(&ens, &dict, a, c, opts.p_star, opts.noise_rule)?;
        out.push(NoiseReport {
            drift: a.to_expression(&names),
            decision,
        });
    }
    println!("{}", to_json(&out)?);
    Ok(())
}

fn init_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("STOCH_IDENT_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("STOCH_IDENT_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))
}

fn run(cli: Cli) -> CliResult<()> {
    init_threads()?;
    match &cli.command {
        Command::Simulate { sim, model, out } => cmd_simulate(sim, model, out),
        Command::Identify {
            src,
            ident,
            repetitions,
            out,
            csv,
            truth,
        } => cmd_identify(IdentifyRequest {
            src,
            opts: ident.options()?,
            repetitions: *repetitions,
            out: out.as_deref(),
            csv: csv.as_deref(),
            truth: truth.as_deref(),
        }),
        Command::Evaluate { report, truth, csv } => cmd_evaluate(report, truth, csv.as_deref()),
        Command::Oracle { src, oracle } => cmd_oracle(src, oracle),
        Command::DetectNoise { src, ident } => cmd_detect_noise(src, ident),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args: Vec<OsString> = std::env::args_os().collect();
    let args = match config::merge_args(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::try_parse_from(args).unwrap_or_else(|e| e.exit());
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
