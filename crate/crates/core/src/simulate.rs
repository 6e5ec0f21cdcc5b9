//! Euler–Maruyama simulation of polynomial SPDEs driven by a scalar Wiener process.
//!
//! Each path steps on a fine time grid (`dt / upsample`) and is sampled back
//! onto the observation grid. Path `n` draws its Wiener increments from
//! ChaCha stream `2n` and its random initial data from stream `2n + 1`, so
//! the output is independent of the worker count.

use std::fmt;
use std::sync::Arc;

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::data::{TrajectoryEnsemble, UniformGrid};
use crate::dictionary::{FeatureDictionary, FeatureEvaluator, FeatureSpec};
use crate::error::{Error, Result};

/// Linear combination of monomial features.
pub type Terms = Vec<(f64, FeatureSpec)>;

/// Initial data: one field per component, given the grid and a random stream.
pub type InitialFn = Arc<dyn Fn(&UniformGrid, &mut dyn RngCore) -> Vec<Vec<f64>> + Send + Sync>;

/// An SPDE `du_c = Σ a F dt + Σ b G dW` with polynomial drift and diffusion.
#[derive(Clone)]
pub struct ModelSpec {
    pub name: String,
    pub components: usize,
    pub space_dims: usize,
    /// Drift terms per component.
    pub drift: Vec<Terms>,
    /// Diffusion terms (coefficients of `dW`) per component.
    pub diffusion: Vec<Terms>,
    pub initial: InitialFn,
    /// Draw random initial data per path instead of once for the ensemble.
    pub per_path_init: bool,
    /// Default observation grid.
    pub t_final: f64,
    pub num_times: usize,
    pub num_space: usize,
    pub x0: f64,
    pub length: f64,
}

impl fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSpec")
            .field("name", &self.name)
            .field("equations", &self.equations())
            .field("t_final", &self.t_final)
            .field("num_times", &self.num_times)
            .field("num_space", &self.num_space)
            .finish()
    }
}

fn terms_to_string(terms: &Terms) -> String {
    if terms.is_empty() {
        return "0".into();
    }
    terms
        .iter()
        .map(|(c, s)| format!("{c}*{s}"))
        .collect::<Vec<_>>()
        .join(" + ")
}

impl ModelSpec {
    /// 1-D single-component model on `[-π, π)`.
    pub fn scalar_1d(
        name: &str,
        drift: Terms,
        diffusion: Terms,
        initial: InitialFn,
        t_final: f64,
    ) -> Self {
        ModelSpec {
            name: name.into(),
            components: 1,
            space_dims: 1,
            drift: vec![drift],
            diffusion: vec![diffusion],
            initial,
            per_path_init: false,
            t_final,
            num_times: 300,
            num_space: 100,
            x0: -std::f64::consts::PI,
            length: 2.0 * std::f64::consts::PI,
        }
    }

    /// Human-readable equations, one per component.
    pub fn equations(&self) -> Vec<String> {
        let names = ["u", "v"];
        (0..self.components)
            .map(|c| {
                format!(
                    "d{} = ({}) dt + ({}) dW",
                    names[c],
                    terms_to_string(&self.drift[c]),
                    terms_to_string(&self.diffusion[c])
                )
            })
            .collect()
    }

    /// Default observation grid, optionally overriding the sizes.
    pub fn grid(&self, num_times: Option<usize>, num_space: Option<usize>) -> Result<UniformGrid> {
        let nt = num_times.unwrap_or(self.num_times);
        let nx = num_space.unwrap_or(self.num_space);
        match self.space_dims {
            1 => UniformGrid::new_1d(0.0, self.t_final, nt, self.x0, self.length, nx),
            _ => UniformGrid::new_2d(0.0, self.t_final, nt, self.x0, self.length, nx),
        }
    }

    /// Dense true coefficient vector of `terms` against a dictionary.
    pub fn coefficients_in(terms: &Terms, dict: &FeatureDictionary) -> Result<Vec<f64>> {
        let mut out = vec![0.0; dict.len()];
        for (c, s) in terms {
            let k = dict.index_of(s).ok_or_else(|| {
                Error::InvalidArgument(format!("feature `{s}` is not in the dictionary"))
            })?;
            out[k] += c;
        }
        Ok(out)
    }

    /// True drift coefficients of component `c` against `dict`.
    pub fn drift_truth(&self, c: usize, dict: &FeatureDictionary) -> Result<Vec<f64>> {
        Self::coefficients_in(&self.drift[c], dict)
    }

    /// True diffusion coefficients of component `c` against `dict`.
    pub fn diffusion_truth(&self, c: usize, dict: &FeatureDictionary) -> Result<Vec<f64>> {
        Self::coefficients_in(&self.diffusion[c], dict)
    }

    /// Whether every diffusion term is the constant feature.
    pub fn has_additive_noise(&self) -> bool {
        self.diffusion
            .iter()
            .flatten()
            .all(|(_, s)| s.degree() == 0)
    }
}

/// Identifies one path's Wiener process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct WienerStream {
    pub seed: u64,
    pub path_index: u64,
}

impl WienerStream {
    fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(2 * self.path_index);
        rng
    }
}

fn init_rng(seed: u64, path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * path + 1);
    rng
}

/// The first `count` increments of a Wiener stream at step `dt_fine`.
pub fn wiener_increments(stream: WienerStream, count: usize, dt_fine: f64) -> Result<Vec<f64>> {
    if count == 0 || !(dt_fine > 0.0) {
        return Err(Error::InvalidArgument(
            "count ≥ 1 and dt_fine > 0 required".into(),
        ));
    }
    let mut rng = stream.rng();
    let s = dt_fine.sqrt();
    Ok((0..count)
        .map(|_| s * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
        .collect::<Vec<f64>>())
}

/// Precompiled right-hand side.
struct Rhs {
    eval: FeatureEvaluator,
    // per component: (coefficient, feature index)
    drift: Vec<Vec<(f64, usize)>>,
    diffusion: Vec<Vec<(f64, usize)>>,
}

impl Rhs {
    fn new(model: &ModelSpec, grid: &UniformGrid) -> Result<Self> {
        let mut specs: Vec<FeatureSpec> = Vec::new();
        let mut index = |s: &FeatureSpec| -> usize {
            if let Some(k) = specs.iter().position(|t| t == s) {
                k
            } else {
                specs.push(s.clone());
                specs.len() - 1
            }
        };
        let drift: Vec<Vec<(f64, usize)>> = model
            .drift
            .iter()
            .map(|t| t.iter().map(|(c, s)| (*c, index(s))).collect())
            .collect();
        let diffusion: Vec<Vec<(f64, usize)>> = model
            .diffusion
            .iter()
            .map(|t| t.iter().map(|(c, s)| (*c, index(s))).collect())
            .collect();
        for s in &specs {
            if s.factors.iter().any(|f| f.component >= model.components)
                || (grid.space_dims() == 1 && s.factors.iter().any(|f| f.alpha[1] > 0))
            {
                return Err(Error::Shape(format!(
                    "term `{s}` does not fit the model layout"
                )));
            }
        }
        let eval = FeatureEvaluator::new(&specs, &grid.num_space, &grid.dx)?;
        Ok(Rhs {
            eval,
            drift,
            diffusion,
        })
    }
}

fn simulate_one(
    model: &ModelSpec,
    rhs: &Rhs,
    grid: &UniformGrid,
    upsample: usize,
    seed: u64,
    path: usize,
    shared_init: Option<&Vec<Vec<f64>>>,
) -> Result<Vec<f64>> {
    let p = grid.points();
    let nc = model.components;
    let mut state: Vec<Vec<f64>> = match shared_init {
        Some(u0) => u0.clone(),
        None => (model.initial)(grid, &mut init_rng(seed, path as u64)),
    };
    if state.len() != nc || state.iter().any(|s| s.len() != p) {
        return Err(Error::Shape("initial condition has the wrong shape".into()));
    }
    let mut out = vec![0.0; nc * grid.num_times * p];
    let save = |out: &mut [f64], state: &[Vec<f64>], i: usize| {
        for (c, s) in state.iter().enumerate() {
            out[(c * grid.num_times + i) * p..][..p].copy_from_slice(s);
        }
    };
    save(&mut out, &state, 0);
    if state.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::BlowUp {
            time: grid.t0,
            path,
        });
    }

    let dt = grid.dt / upsample as f64;
    let sdt = dt.sqrt();
    let mut rng = WienerStream {
        seed,
        path_index: path as u64,
    }
    .rng();
    let nf = rhs.eval.num_features();
    let mut feats = vec![0.0; nf * p];
    let mut sym = Vec::new();
    let mut incr = vec![0.0; p];
    for i in 1..grid.num_times {
        for step in 0..upsample {
            let dw = sdt * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng);
            {
                let views: Vec<&[f64]> = state.iter().map(|s| s.as_slice()).collect();
                rhs.eval.evaluate_into(&views, &mut sym, &mut feats);
            }
            // all components are updated from the same left-endpoint features
            for c in 0..nc {
                incr.iter_mut().for_each(|v| *v = 0.0);
                for &(a, k) in &rhs.drift[c] {
                    let w = a * dt;
                    for (v, f) in incr.iter_mut().zip(&feats[k * p..(k + 1) * p]) {
                        *v += w * f;
                    }
                }
                for &(b, k) in &rhs.diffusion[c] {
                    let w = b * dw;
                    for (v, f) in incr.iter_mut().zip(&feats[k * p..(k + 1) * p]) {
                        *v += w * f;
                    }
                }
                for (s, d) in state[c].iter_mut().zip(&incr) {
                    *s += d;
                }
            }
            if state.iter().flatten().any(|v| !v.is_finite()) {
                let t = grid.time(i - 1) + dt * (step + 1) as f64;
                return Err(Error::BlowUp { time: t, path });
            }
        }
        save(&mut out, &state, i);
    }
    Ok(out)
}

/// Simulates `num_paths` independent paths on `grid`.
pub fn simulate_paths(
    model: &ModelSpec,
    grid: &UniformGrid,
    num_paths: usize,
    upsample: usize,
    seed: u64,
) -> Result<TrajectoryEnsemble> {
    grid.validate()?;
    if upsample == 0 {
        return Err(Error::InvalidArgument(
            "upsample factor must be at least 1".into(),
        ));
    }
    if num_paths == 0 {
        return Err(Error::InvalidArgument(
            "number of paths must be at least 1".into(),
        ));
    }
    if grid.space_dims() != model.space_dims {
        return Err(Error::Shape(format!(
            "model `{}` is {}-D but the grid is {}-D",
            model.name,
            model.space_dims,
            grid.space_dims()
        )));
    }
    let rhs = Rhs::new(model, grid)?;
    let shared = if model.per_path_init {
        None
    } else {
        Some((model.initial)(grid, &mut init_rng(seed, 0)))
    };
    let paths: Vec<Result<Vec<f64>>> = (0..num_paths)
        .into_par_iter()
        .map(|n| simulate_one(model, &rhs, grid, upsample, seed, n, shared.as_ref()))
        .collect();
    let mut values =
        Vec::with_capacity(num_paths * model.components * grid.num_times * grid.points());
    for r in paths {
        values.extend(r?);
    }
    TrajectoryEnsemble::new(grid.clone(), num_paths, model.components, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine_init() -> InitialFn {
        Arc::new(|g: &UniformGrid, _: &mut dyn RngCore| {
            vec![g.axis(0).iter().map(|x| x.sin()).collect()]
        })
    }

    fn spec(s: &str) -> FeatureSpec {
        FeatureSpec::parse(s).unwrap()
    }

    #[test]
    fn wiener_moments_and_determinism() {
        let s = WienerStream {
            seed: 7,
            path_index: 3,
        };
        let w = wiener_increments(s, 1_000_000, 0.01).unwrap();
        let n = w.len() as f64;
        let mean = w.iter().sum::<f64>() / n;
        let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 4e-4, "{mean}");
        assert!((var / 0.01 - 1.0).abs() < 0.01, "{var}");
        assert_eq!(w[..100], wiener_increments(s, 100, 0.01).unwrap()[..]);
    }

    #[test]
    fn zero_model_is_constant() {
        let m = ModelSpec::scalar_1d("zero", vec![], vec![], sine_init(), 0.1);
        let g = m.grid(Some(11), Some(32)).unwrap();
        let e = simulate_paths(&m, &g, 2, 5, 1).unwrap();
        for i in 0..11 {
            assert_eq!(e.slice(1, 0, i), e.slice(1, 0, 0));
        }
    }

    #[test]
    fn additive_noise_is_spatially_constant() {
        let sigma = 2.0;
        let m = ModelSpec::scalar_1d(
            "add",
            vec![],
            vec![(sigma, FeatureSpec::constant())],
            sine_init(),
            1.0,
        );
        let g = m.grid(Some(21), Some(16)).unwrap();
        let e = simulate_paths(&m, &g, 400, 4, 3).unwrap();
        let i = 20;
        let mut incs = Vec::new();
        for n in 0..e.num_paths {
            let d: Vec<f64> = e
                .slice(n, 0, i)
                .iter()
                .zip(e.slice(n, 0, 0))
                .map(|(a, b)| a - b)
                .collect();
            assert!(d.iter().all(|v| (v - d[0]).abs() < 1e-12));
            incs.push(d[0]);
        }
        let t = g.time(i);
        let var = incs.iter().map(|v| v * v).sum::<f64>() / incs.len() as f64;
        // chi-square with 400 dof: relative std about 7%
        assert!((var / (sigma * sigma * t) - 1.0).abs() < 0.25, "{var}");
    }

    #[test]
    fn heat_matches_exact_decay() {
        let m = ModelSpec::scalar_1d("heat", vec![(1.0, spec("u_xx"))], vec![], sine_init(), 0.1);
        let g = m.grid(Some(101), Some(100)).unwrap();
        let e = simulate_paths(&m, &g, 1, 10, 0).unwrap();
        let x = g.axis(0);
        let last = e.slice(0, 0, 100);
        let (mut num, mut den) = (0.0, 0.0);
        for (u, x) in last.iter().zip(&x) {
            let ex = (-0.1f64).exp() * x.sin();
            num += (u - ex).powi(2);
            den += ex * ex;
        }
        assert!((num / den).sqrt() < 1e-2);
    }

    #[test]
    fn independent_of_thread_count() {
        let m = crate::catalog::builtin_model("transport").unwrap();
        let g = m.grid(Some(21), Some(32)).unwrap();
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let many = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap();
        let a = one.install(|| simulate_paths(&m, &g, 9, 5, 11).unwrap());
        let b = many.install(|| simulate_paths(&m, &g, 9, 5, 11).unwrap());
        assert!(a
            .values()
            .iter()
            .zip(b.values())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn blow_up_is_reported() {
        let m = ModelSpec::scalar_1d(
            "explode",
            vec![(1.0, spec("u^3"))],
            vec![],
            sine_init(),
            10.0,
        );
        let g = m.grid(Some(11), Some(16)).unwrap();
        let err = simulate_paths(&m, &g, 1, 2, 0).unwrap_err();
        assert!(
            err.to_string().contains("solution blow-up at time"),
            "{err}"
        );
    }
}
