//! Built-in SPDE models on the periodic domain `[-π, π)`.

use std::sync::Arc;

use rand::{Rng, RngCore};

use crate::data::UniformGrid;
use crate::dictionary::FeatureSpec;
use crate::error::{Error, Result};
use crate::simulate::{InitialFn, ModelSpec, Terms};

pub const MODEL_NAMES: [&str; 8] = [
    "transport",
    "kdv",
    "burgers",
    "nls",
    "allen_cahn",
    "kpz",
    "heat_mult",
    "heat_mix",
];

fn terms(list: &[(f64, &str)]) -> Terms {
    list.iter()
        .map(|&(c, s)| {
            (
                c,
                FeatureSpec::parse(s).expect("catalog feature names are valid"),
            )
        })
        .collect()
}

fn init_1d(f: fn(f64) -> f64) -> InitialFn {
    Arc::new(move |g: &UniformGrid, _: &mut dyn RngCore| {
        vec![g.axis(0).into_iter().map(f).collect()]
    })
}

fn base(
    name: &str,
    drift: &[(f64, &str)],
    diffusion: &[(f64, &str)],
    initial: InitialFn,
    t_final: f64,
) -> ModelSpec {
    ModelSpec::scalar_1d(name, terms(drift), terms(diffusion), initial, t_final)
}

/// Looks up a catalog model by name.
pub fn builtin_model(name: &str) -> Result<ModelSpec> {
    let heat_init = |x: f64| 0.2 * (3.0 * x - 0.2).sin().exp() * (4.0 * x + 0.8).cos();
    let m = match name {
        "transport" => base(
            name,
            &[(3.0, "u_x"), (0.5, "u_xx")],
            &[(1.0, "u_x")],
            init_1d(|x| 0.1 * (4.0 * x - 0.2).sin().exp() * (5.0 * x + 0.8).cos()),
            0.1,
        ),
        "kdv" => base(
            name,
            &[(-6.0, "u*u_x"), (-1.0, "u_xxx")],
            &[(7.0, "1")],
            init_1d(|x| (3.0 * x - 0.2).sin().exp() * (2.0 * x + 0.8).cos() + 4.0),
            0.05,
        ),
        "burgers" => base(
            name,
            &[(3.0, "u*u_x"), (0.5, "u_xx")],
            &[(5.0, "1"), (2.0, "u")],
            init_1d(|x| {
                3.0 * (x - 1.0).sin().powi(2)
                    + 2.0 * (2.0 * x).cos()
                    + 5.0 * (5.0 * x + 2.0).sin()
                    + 1.0
            }),
            0.05,
        ),
        "heat_mult" => base(
            name,
            &[(1.0, "u_xx")],
            &[(0.3, "u_x")],
            init_1d(heat_init),
            0.1,
        ),
        "heat_mix" => base(
            name,
            &[(1.0, "u_xx")],
            &[(2.0, "u"), (0.5, "u_x")],
            init_1d(heat_init),
            0.1,
        ),
        "nls" => {
            // ρ = u + iv with dρ = 5iρ_xx dt + i|ρ|²ρ dt + iρ dW
            let mut m = base(name, &[], &[], Arc::new(nls_init), 0.2);
            m.components = 2;
            m.drift = vec![
                terms(&[(-5.0, "v_xx"), (-1.0, "u^2*v"), (-1.0, "v^3")]),
                terms(&[(5.0, "u_xx"), (1.0, "u^3"), (1.0, "u*v^2")]),
            ];
            m.diffusion = vec![terms(&[(-1.0, "v")]), terms(&[(1.0, "u")])];
            m
        }
        "allen_cahn" => {
            let mut m = base(name, &[], &[], Arc::new(allen_cahn_init), 0.08);
            m.space_dims = 2;
            m.drift = vec![terms(&[
                (0.5, "u_xx"),
                (0.5, "u_yy"),
                (-2.0, "u^3"),
                (2.0, "u"),
            ])];
            m.diffusion = vec![terms(&[(1.0, "u_x"), (1.0, "u_y")])];
            m.num_times = 100;
            m.num_space = 50;
            m
        }
        "kpz" => {
            let mut m = base(
                name,
                &[(3.0, "u_xx"), (3.0, "u_x^2")],
                &[(1.0, "1")],
                Arc::new(kpz_init),
                0.5,
            );
            m.num_times = 200;
            m
        }
        _ => return Err(Error::UnknownModel(name.to_string())),
    };
    Ok(m)
}

fn nls_init(g: &UniformGrid, _: &mut dyn RngCore) -> Vec<Vec<f64>> {
    let x = g.axis(0);
    vec![
        x.iter()
            .map(|x| (2.0 * x + 1.0).sin().exp() + 1.0)
            .collect(),
        x.iter()
            .map(|x| (3.0 * x + 1.0).cos().exp() + 1.0)
            .collect(),
    ]
}

fn allen_cahn_init(g: &UniformGrid, rng: &mut dyn RngCore) -> Vec<Vec<f64>> {
    let (x, y) = (g.axis(0), g.axis(1));
    let mut u = Vec::with_capacity(x.len() * y.len());
    for &yv in &y {
        for &xv in &x {
            let smooth = ((2.0 * xv).sin().powi(2) + (2.0 * yv).cos().powi(2)).sqrt()
                + 0.5 * (xv + yv).sin().exp();
            u.push(smooth + rng.random_range(-1.0..1.0));
        }
    }
    vec![u]
}

fn kpz_init(g: &UniformGrid, rng: &mut dyn RngCore) -> Vec<Vec<f64>> {
    vec![g
        .axis(0)
        .iter()
        .map(|x| ((2.0 * x).sin() + rng.random_range(-0.5..0.5)).exp())
        .collect()]
}
