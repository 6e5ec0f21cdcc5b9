//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Deterministic algorithmic criteria (1-5) set the exit status. The
//! statistical criteria (6-12) depend on random draws; they are always run
//! and reported, and set the exit status only when `STID_ACCEPTANCE_STRICT=1`.

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use stid_core::catalog::builtin_model;
use stid_core::cg::{nonlinear_cg_fit, quad_loss_grad};
use stid_core::coeffs::SparseCoeffs;
use stid_core::diffusion::{assemble_diffusion_system, normalize_diffusion, DiffusionSystem};
use stid_core::drift::{assemble_drift_system, subspace_pursuit};
use stid_core::linalg::{lstsq, select_columns};
use stid_core::noise::{decide_from_residuals, DecisionRule, NoiseKind, ResidualMeans};
use stid_core::pipeline::{identify_timed, run_repetitions, IdentifyOptions, RunOutcome, SimulationParams};
use stid_core::qsp::{qsp, QspOptions};
use stid_core::select::{perturb, score_diffuse_many, score_drift_system};
use stid_core::simulate::simulate_paths;
use stid_core::spectral::{identify_drift_linear, mode_table, quad_form_of, symbol, DriftRoute, ModeTable, QuadForm, QuadFormKind};
use stid_core::stencil::{centered_weights, differentiate};
use stid_core::{FeatureDictionary, TrajectoryEnsemble};

struct Outcome {
    pass: bool,
    detail: String,
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    (0..n)
        .flat_map(|last| {
            combinations(last, k - 1).into_iter().map(move |mut c| {
                c.push(last);
                c
            })
        })
        .collect()
}

fn planted(rng: &mut ChaCha8Rng, len: usize, k: usize) -> Vec<(usize, f64)> {
    let mut idx: Vec<usize> = (0..len).collect();
    for i in 0..k {
        let j = rng.random_range(i..len);
        idx.swap(i, j);
    }
    let mut s: Vec<usize> = idx[..k].to_vec();
    s.sort_unstable();
    s.into_iter()
        .map(|i| {
            let mag = rng.random_range(0.5..2.0);
            (i, if rng.random_bool(0.5) { mag } else { -mag })
        })
        .collect()
}

fn c1_dictionary() -> Outcome {
    let d = FeatureDictionary::build(4, 3, 1, 1).unwrap();
    Outcome {
        pass: d.len() == 56,
        detail: format!("(4,3) 1-D dictionary has {} features (want 56)", d.len()),
    }
}

fn c2_stencil() -> Outcome {
    let d1 = [-1.0 / 60.0, 3.0 / 20.0, -0.75, 0.0, 0.75, -3.0 / 20.0, 1.0 / 60.0];
    let d2 = [1.0 / 90.0, -3.0 / 20.0, 1.5, -49.0 / 18.0, 1.5, -3.0 / 20.0, 1.0 / 90.0];
    let w1 = centered_weights(1).unwrap();
    let w2 = centered_weights(2).unwrap();
    let werr = w1
        .iter()
        .zip(&d1)
        .chain(w2.iter().zip(&d2))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let errs: Vec<f64> = [64usize, 128, 256]
        .iter()
        .map(|&m| {
            let dx = 2.0 * std::f64::consts::PI / m as f64;
            let x: Vec<f64> = (0..m).map(|i| i as f64 * dx).collect();
            let f: Vec<f64> = x.iter().map(|v| v.sin()).collect();
            let d = differentiate(&f, 1, dx).unwrap();
            d.iter().zip(&x).map(|(a, v)| (a - v.cos()).abs()).fold(0.0, f64::max)
        })
        .collect();
    let order = errs.windows(2).map(|w| (w[0] / w[1]).log2()).fold(f64::INFINITY, f64::min);
    Outcome {
        pass: werr <= 1e-12 && order >= 5.5,
        detail: format!("max weight error {werr:.1e} (<= 1e-12), observed order {order:.2} (>= 5.5), errors {errs:?}"),
    }
}

fn c3_gradient() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let j = rng.random_range(1..=8);
        let i = rng.random_range(1..=60);
        let g: Vec<DMatrix<f64>> = (0..i)
            .map(|_| {
                let a = DMatrix::<f64>::from_fn(j, j, |_, _| gauss(&mut rng));
                (&a + a.transpose()) * 0.5
            })
            .collect();
        let zeta: Vec<f64> = (0..i).map(|_| gauss(&mut rng)).collect();
        let c = DVector::<f64>::from_fn(j, |_, _| gauss(&mut rng));
        let (_, grad) = quad_loss_grad(&g, &zeta, &c);
        let h = 1e-5;
        let fd = DVector::from_fn(j, |k, _| {
            let mut p = c.clone();
            let mut m = c.clone();
            p[k] += h;
            m[k] -= h;
            (quad_loss_grad(&g, &zeta, &p).0 - quad_loss_grad(&g, &zeta, &m).0) / (2.0 * h)
        });
        worst = worst.max((&grad - &fd).norm() / grad.norm().max(1e-300));
    }
    Outcome {
        pass: worst <= 1e-6,
        detail: format!("worst relative gradient error {worst:.2e} over 50 instances (<= 1e-6)"),
    }
}

fn c4_subspace_pursuit() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut hits = 0;
    for _ in 0..100 {
        let k = rng.random_range(1..=3);
        let f = DMatrix::<f64>::from_fn(200, 10, |_, _| gauss(&mut rng));
        let truth = planted(&mut rng, 10, k);
        let mut y = DVector::zeros(200);
        for &(i, v) in &truth {
            y.axpy(v, &f.column(i), 1.0);
        }
        let best = combinations(10, k)
            .into_iter()
            .map(|s| {
                let a = select_columns(&f, &s);
                let r = (&a * lstsq(&a, &y) - &y).norm();
                (r, s)
            })
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .unwrap()
            .1;
        let sp = subspace_pursuit(&f, &y, k).unwrap();
        if sp.coeffs.support() == best {
            hits += 1;
        }
    }
    Outcome {
        pass: hits >= 95,
        detail: format!("{hits}/100 brute-force-optimal supports recovered (>= 95)"),
    }
}

fn c5_qsp() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut loss_ok, mut support_ok) = (0, 0);
    let opts = QspOptions::default();
    for _ in 0..100 {
        let j = rng.random_range(1..=2);
        let g: Vec<DMatrix<f64>> = (0..60)
            .map(|_| {
                let a = DMatrix::<f64>::from_fn(8, 10, |_, _| gauss(&mut rng));
                &a * a.transpose() / 8.0
            })
            .collect();
        let truth = planted(&mut rng, 8, j);
        let c = DVector::from_vec(SparseCoeffs { len: 8, entries: truth.clone() }.to_dense());
        let zeta: Vec<f64> = g.iter().map(|gi| c.dot(&(gi * &c))).collect();
        let sys = DiffusionSystem {
            g: g.clone(),
            zeta: zeta.clone(),
            lambda: vec![1.0; 8],
            dead: vec![],
            component: 0,
        };
        let bf = combinations(8, j)
            .into_iter()
            .map(|s| nonlinear_cg_fit(&g, &zeta, &s, None, &opts.cg).1.loss)
            .fold(f64::INFINITY, f64::min);
        let r = qsp(&sys, j, &opts).unwrap();
        if r.loss <= bf + 1e-10 {
            loss_ok += 1;
        }
        let want: Vec<usize> = truth.iter().map(|t| t.0).collect();
        if r.coeffs.support() == want {
            support_ok += 1;
        }
    }
    Outcome {
        pass: loss_ok >= 90 && support_ok >= 90,
        detail: format!(
            "loss within 1e-10 of brute force in {loss_ok}/100, planted support in {support_ok}/100 (both >= 90)"
        ),
    }
}

fn support_names(c: &SparseCoeffs, names: &[String]) -> Vec<String> {
    c.support().iter().map(|&k| names[k].clone()).collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Most frequent support over runs with the median of each coefficient
/// (absolute values when `abs`) over the runs sharing it.
fn modal_support(runs: &[(Vec<String>, Vec<f64>)], abs: bool) -> (Vec<String>, usize, Vec<f64>) {
    let mut groups: BTreeMap<Vec<String>, Vec<Vec<f64>>> = BTreeMap::new();
    for (s, v) in runs {
        groups.entry(s.clone()).or_default().push(v.clone());
    }
    let (s, vals) = groups.into_iter().max_by_key(|(_, v)| v.len()).unwrap();
    let med = (0..s.len())
        .map(|i| median(vals.iter().map(|v| if abs { v[i].abs() } else { v[i] }).collect()))
        .collect();
    (s, vals.len(), med)
}

fn drift_runs(out: &[RunOutcome]) -> Vec<(Vec<String>, Vec<f64>)> {
    out.iter()
        .map(|r| {
            let c = &r.model.components[0].drift;
            (support_names(c, &r.model.drift_features), c.values())
        })
        .collect()
}

fn diffusion_runs(out: &[RunOutcome]) -> Vec<(Vec<String>, Vec<f64>)> {
    out.iter()
        .map(|r| {
            let m = &r.model.components[0];
            let b = stid_core::pipeline::effective_diffusion(m, &r.model.diffusion_features).unwrap();
            (support_names(&b, &r.model.diffusion_features), b.values())
        })
        .collect()
}

fn c6_transport() -> Outcome {
    let truth = builtin_model("transport").unwrap();
    let sim = SimulationParams {
        num_paths: 100,
        num_times: None,
        num_space: None,
        upsample: 50,
        seed: 600,
    };
    let out = run_repetitions(&truth, &sim, &IdentifyOptions::default(), 20).unwrap();
    let (ds, dn, dm) = modal_support(&drift_runs(&out), false);
    let (gs, gn, gm) = modal_support(&diffusion_runs(&out), true);
    let drift_ok = ds == ["u_x", "u_xx"] && (dm[0] / 3.0 - 1.0).abs() <= 0.10 && (dm[1] / 0.5 - 1.0).abs() <= 0.10;
    let diff_ok = gs == ["u_x"] && (gm[0] - 1.0).abs() <= 0.15;
    Outcome {
        pass: drift_ok && diff_ok,
        detail: format!(
            "drift {ds:?} in {dn}/20, median {dm:.3?} (want u_x,u_xx within 10% of 3,0.5); \
             diffusion {gs:?} in {gn}/20, median |b| {gm:.3?} (want u_x within 15% of 1)"
        ),
    }
}

fn coefficient(r: &RunOutcome, drift: bool, name: &str) -> f64 {
    let m = &r.model.components[0];
    if drift {
        let k = r.model.drift_features.iter().position(|n| n == name).unwrap();
        m.drift.get(k)
    } else {
        let k = r.model.diffusion_features.iter().position(|n| n == name).unwrap();
        stid_core::pipeline::effective_diffusion(m, &r.model.diffusion_features).unwrap().get(k).abs()
    }
}

fn c7_heat() -> Outcome {
    let truth = builtin_model("heat_mult").unwrap();
    let sim = SimulationParams {
        num_paths: 50,
        num_times: None,
        num_space: None,
        upsample: 50,
        seed: 700,
    };
    let out = run_repetitions(&truth, &sim, &IdentifyOptions::default(), 20).unwrap();
    let n = out.len() as f64;
    let a = out.iter().map(|r| coefficient(r, true, "u_xx")).sum::<f64>() / n;
    let b = out.iter().map(|r| coefficient(r, false, "u_x")).sum::<f64>() / n;
    let dp = out.iter().map(|r| r.eval[0].drift.precision).sum::<f64>() / n;
    let gp = out.iter().map(|r| r.eval[0].diffusion.precision).sum::<f64>() / n;
    Outcome {
        pass: (0.95..=1.05).contains(&a) && (0.27..=0.33).contains(&b) && dp >= 0.85 && gp >= 0.9,
        detail: format!(
            "mean u_xx {a:.4} in [0.95,1.05], mean |u_x| {b:.4} in [0.27,0.33], \
             drift precision {dp:.4} (>= 0.85), diffusion precision {gp:.4} (>= 0.9)"
        ),
    }
}

fn c8_kdv() -> Outcome {
    let truth = builtin_model("kdv").unwrap();
    // explicit Euler-Maruyama needs a finer step than the default for u_xxx
    let sim = SimulationParams {
        num_paths: 50,
        num_times: None,
        num_space: None,
        upsample: 200,
        seed: 800,
    };
    let out = run_repetitions(&truth, &sim, &IdentifyOptions::default(), 20).unwrap();
    let additive: Vec<&RunOutcome> = out
        .iter()
        .filter(|r| r.model.components[0].noise_kind == NoiseKind::Additive)
        .collect();
    let sigma = additive
        .iter()
        .map(|r| r.model.components[0].sigma_hat.unwrap())
        .sum::<f64>()
        / additive.len().max(1) as f64;
    Outcome {
        pass: additive.len() >= 18 && (sigma / 7.0 - 1.0).abs() <= 0.10,
        detail: format!("additive in {}/20 (>= 18), mean sigma {sigma:.3} (within 10% of 7)", additive.len()),
    }
}

fn c9_calibration() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut additive, mut zsum) = (0, 0.0);
    for _ in 0..100 {
        let rho: Vec<Vec<f64>> = (0..50).map(|_| (0..299).map(|_| gauss(&mut rng)).collect()).collect();
        let res = ResidualMeans {
            rho,
            pointwise_rms: 1.0,
            dt: 1.0,
        };
        let d = decide_from_residuals(&res, 0.05, DecisionRule::OneSided).unwrap();
        if d.verdict == NoiseKind::Additive {
            additive += 1;
        }
        zsum += d.z_combined;
    }
    let zmean = zsum / 100.0;
    Outcome {
        pass: additive >= 90 && zmean.abs() <= 0.1,
        detail: format!("additive in {additive}/100 (>= 90), mean Z_N {zmean:.3} (|.| <= 0.1)"),
    }
}

/// Mode table of `u_t = Σ a_α ∂^α u` with exact exponential evolution.
fn exact_table(a: &[f64]) -> ModeTable {
    let wavenumbers: Vec<i64> = (-6..=6).filter(|k| *k != 0).collect();
    let xi: Vec<f64> = wavenumbers.iter().map(|&k| k as f64).collect();
    let mean1: Vec<_> = xi
        .iter()
        .map(|x| rustfft::num_complex::Complex64::from_polar(1.0 / (1.0 + x * x), 0.3 * x))
        .collect();
    let dt = 2e-3;
    let mean2 = mean1.iter().zip(&xi).map(|(u, &x)| u * (symbol(a, x) * dt).exp()).collect();
    ModeTable {
        wavenumbers,
        xi,
        t1: 0.0,
        t2: dt,
        mean1,
        mean2,
        paths1: vec![],
        paths2: vec![],
    }
}

fn c10_spectral() -> Outcome {
    // statistical part: a one-off choice made from the noise analysis (full
    // time span, |k| <= 5), not tuned on outcomes
    let truth = builtin_model("transport").unwrap();
    let grid = truth.grid(None, None).unwrap();
    let ens = simulate_paths(&truth, &grid, 400, 50, 2024).unwrap();
    let table = mode_table(&ens, 0, 0, grid.num_times - 1, 5).unwrap();
    let d = identify_drift_linear(&table, 2, DriftRoute::MeanRatio, 1e-8).unwrap();
    let (e1, e2) = ((d.coeffs[1] / 3.0 - 1.0).abs(), (d.coeffs[2] / 0.5 - 1.0).abs());
    let stat_ok = e1 <= 0.05 && e2 <= 0.05;

    let planted = [0.2, -1.5, 0.4, 0.1];
    let exact = identify_drift_linear(&exact_table(&planted), 3, DriftRoute::MeanRatio, 1e-12).unwrap();
    let exact_err = exact.coeffs.iter().zip(&planted).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    let q = QuadForm {
        kind: QuadFormKind::Multiplicative,
        p2: 2,
        c: quad_form_of(QuadFormKind::Multiplicative, &[1.0, 0.0, 2.0]),
        modes_used: vec![],
    };
    let f = q.factorize(1e-10).unwrap();
    let class_ok = f.classes.len() == 1
        && f.classes[0].iter().zip([1.0, 0.0, 2.0]).all(|(a, b)| (a - b).abs() < 1e-10);
    Outcome {
        pass: stat_ok && exact_err <= 1e-8 && class_ok,
        detail: format!(
            "transport N=400: a1 {:.4} ({:.1}%), a2 {:.4} ({:.1}%) (<= 5%); exact-table error {exact_err:.1e} (<= 1e-8); \
             (1,0,2) class {:?}",
            d.coeffs[1],
            100.0 * e1,
            d.coeffs[2],
            100.0 * e2,
            f.classes
        ),
    }
}

/// Least-squares quadratic `α + βt + γt²` through the samples; returns the
/// residual relative to the spread of `s`.
fn quadratic_residual(ts: &[f64], s: &[f64]) -> f64 {
    let a = DMatrix::from_fn(ts.len(), 3, |r, c| ts[r].powi(c as i32));
    let y = DVector::from_column_slice(s);
    let fit = &a * lstsq(&a, &y);
    let mean = s.iter().sum::<f64>() / s.len() as f64;
    let tot: f64 = s.iter().map(|v| (v - mean).powi(2)).sum();
    ((fit - y).norm_squared() / tot).sqrt()
}

fn c11_score_shape(ens: &TrajectoryEnsemble) -> Outcome {
    let truth = builtin_model("transport").unwrap();
    let dd = FeatureDictionary::build(4, 3, 1, 1).unwrap();
    let gd = FeatureDictionary::build(2, 2, 1, 1).unwrap();
    let a_star = SparseCoeffs::from_dense(&truth.drift_truth(0, &dd).unwrap());
    let b_star = SparseCoeffs::from_dense(&truth.diffusion_truth(0, &gd).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let ts: Vec<f64> = (-10..=10).map(|k| k as f64 * 0.01).collect();

    // directions scaled so every feature moves the fit by a comparable amount
    let sys = assemble_drift_system(ens, &dd, 0).unwrap();
    let fa: f64 = a_star.entries.iter().map(|&(k, v)| v.abs() * sys.column_norms[k]).sum();
    let kk = dd.len() as f64;
    let delta: Vec<f64> = sys
        .column_norms
        .iter()
        .map(|&n| if n > 0.0 { gauss(&mut rng) * fa / (n * kk.sqrt()) } else { 0.0 })
        .collect();
    let s: Vec<f64> = ts
        .iter()
        .map(|&t| score_drift_system(&sys, &perturb(&a_star, &delta, t)).unwrap())
        .collect();
    let rd = quadratic_residual(&ts, &s);

    let dsys = normalize_diffusion(&assemble_diffusion_system(ens, &dd, &gd, &a_star, 0).unwrap()).unwrap();
    let lam = &dsys.lambda;
    let gb: f64 = b_star.entries.iter().map(|&(k, v)| v.abs() * lam[k]).sum();
    let jj = gd.len() as f64;
    let gdelta: Vec<f64> = lam
        .iter()
        .enumerate()
        .map(|(k, &l)| if dsys.dead.contains(&k) { 0.0 } else { gauss(&mut rng) * gb / (l * jj.sqrt()) })
        .collect();
    let bs: Vec<SparseCoeffs> = ts.iter().map(|&t| perturb(&b_star, &gdelta, t)).collect();
    let sc = score_diffuse_many(ens, &dd, &gd, &a_star, &bs, 0).unwrap();
    let rg = quadratic_residual(&ts, &sc);
    Outcome {
        pass: rd < 0.05 && rg < 0.05,
        detail: format!("quadratic fit residual: S_drift {:.2}%, S_diffuse {:.2}% (< 5%)", 100.0 * rd, 100.0 * rg),
    }
}

fn c12_runtime() -> Outcome {
    let truth = builtin_model("transport").unwrap();
    let grid = truth.grid(None, None).unwrap();
    let opts = IdentifyOptions::default();
    let ns = [25usize, 50, 100];
    let times: Vec<f64> = ns
        .iter()
        .map(|&n| {
            let ens = simulate_paths(&truth, &grid, n, 50, 1200).unwrap();
            // best of two to damp scheduler noise
            (0..2)
                .map(|_| {
                    let t = Instant::now();
                    identify_timed(&ens, &opts).unwrap();
                    t.elapsed().as_secs_f64()
                })
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let x: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    let (mx, my) = (x.iter().sum::<f64>() / 3.0, times.iter().sum::<f64>() / 3.0);
    let sxy: f64 = x.iter().zip(&times).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = times.iter().map(|b| (b - my).powi(2)).sum();
    let r2 = sxy * sxy / (sxx * syy);
    Outcome {
        pass: r2 >= 0.95,
        detail: format!("identification seconds at N=25,50,100: {times:.2?}; linear R² {r2:.4} (>= 0.95)"),
    }
}

fn main() {
    let strict = std::env::var("STID_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let only: Option<Vec<usize>> = std::env::var("STID_ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let transport = std::sync::LazyLock::new(|| {
        let m = builtin_model("transport").unwrap();
        simulate_paths(&m, &m.grid(None, None).unwrap(), 100, 50, 1100).unwrap()
    });
    let criteria: Vec<(usize, bool, Box<dyn Fn() -> Outcome + '_>)> = vec![
        (1, true, Box::new(c1_dictionary)),
        (2, true, Box::new(c2_stencil)),
        (3, true, Box::new(c3_gradient)),
        (4, true, Box::new(c4_subspace_pursuit)),
        (5, true, Box::new(c5_qsp)),
        (6, false, Box::new(c6_transport)),
        (7, false, Box::new(c7_heat)),
        (8, false, Box::new(c8_kdv)),
        (9, false, Box::new(c9_calibration)),
        (10, false, Box::new(c10_spectral)),
        (11, false, Box::new(|| c11_score_shape(&transport))),
        (12, false, Box::new(c12_runtime)),
    ];
    let mut gated_failures = Vec::new();
    for (id, exact, run) in &criteria {
        if only.as_ref().is_some_and(|o| !o.contains(id)) {
            continue;
        }
        let start = Instant::now();
        let o = run();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {id:>2} [{tag}] {} ({:.1}s)", o.detail, start.elapsed().as_secs_f64());
        if !o.pass && (*exact || strict) {
            gated_failures.push(*id);
        }
    }
    if !gated_failures.is_empty() {
        eprintln!("gated criteria failed: {gated_failures:?}");
        std::process::exit(1);
    }
}
