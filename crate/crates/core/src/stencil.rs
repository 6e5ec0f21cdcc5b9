//! Finite-difference weights and periodic differentiation.

use crate::error::{Error, Result};

/// Highest derivative order a centered 7-point stencil supports.
pub const MAX_ORDER: usize = 6;
const HALF: usize = 3;

/// Weights `w` with `Σ w_j f(x + s_j h) ≈ h^d f^{(d)}(x)`, by Fornberg's recursion
/// evaluated at `x = 0`.
pub fn fornberg_weights(order: usize, offsets: &[f64]) -> Result<Vec<f64>> {
    let n = offsets.len();
    if n < order + 1 {
        return Err(Error::InvalidArgument(format!(
            "{n} nodes cannot resolve derivative order {order}"
        )));
    }
    for i in 0..n {
        for j in 0..i {
            if offsets[i] == offsets[j] {
                return Err(Error::InvalidArgument(format!(
                    "repeated offset {}",
                    offsets[i]
                )));
            }
        }
    }
    // c[j][k]: weight of node j for derivative k
    let mut c = vec![vec![0.0; order + 1]; n];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = offsets[0];
    for i in 1..n {
        let mn = i.min(order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = offsets[i];
        for j in 0..i {
            let c3 = offsets[i] - offsets[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    Ok(c.into_iter().map(|row| row[order]).collect())
}

/// Centered 7-point weights for derivative `order` at unit spacing.
pub fn centered_weights(order: usize) -> Result<[f64; 7]> {
    if order > MAX_ORDER {
        return Err(Error::InvalidArgument(format!(
            "derivative order {order} exceeds the 7-point stencil limit {MAX_ORDER}"
        )));
    }
    let offsets: Vec<f64> = (-3..=3).map(|s| s as f64).collect();
    let w = fornberg_weights(order, &offsets)?;
    Ok(w.try_into().unwrap())
}

/// Precomputed periodic stencil, scaled by `1/dx^d`.
#[derive(Debug, Clone)]
pub struct Stencil {
    pub order: usize,
    w: [f64; 7],
}

impl Stencil {
    pub fn new(order: usize, dx: f64) -> Result<Self> {
        let mut w = centered_weights(order)?;
        let scale = dx.powi(order as i32).recip();
        w.iter_mut().for_each(|v| *v *= scale);
        Ok(Stencil { order, w })
    }

    /// Applies the stencil along a contiguous periodic line.
    pub fn apply_line(&self, f: &[f64], out: &mut [f64]) {
        let m = f.len();
        debug_assert!(m >= 7 && out.len() == m);
        if self.order == 0 {
            out.copy_from_slice(f);
            return;
        }
        let w = &self.w;
        let idx = |k: isize| -> usize { (k.rem_euclid(m as isize)) as usize };
        for i in 0..HALF {
            out[i] = (0..7)
                .map(|j| w[j] * f[idx(i as isize + j as isize - 3)])
                .sum();
        }
        for i in HALF..m - HALF {
            let s = &f[i - 3..i + 4];
            out[i] = w[0] * s[0]
                + w[1] * s[1]
                + w[2] * s[2]
                + w[3] * s[3]
                + w[4] * s[4]
                + w[5] * s[5]
                + w[6] * s[6];
        }
        for i in m - HALF..m {
            out[i] = (0..7)
                .map(|j| w[j] * f[idx(i as isize + j as isize - 3)])
                .sum();
        }
    }

    /// Applies the stencil along axis 1 (`y`) of a row-major `(ny, nx)` field.
    fn apply_columns(&self, f: &[f64], nx: usize, ny: usize, out: &mut [f64]) {
        if self.order == 0 {
            out.copy_from_slice(f);
            return;
        }
        out.iter_mut().for_each(|v| *v = 0.0);
        for (j, &wj) in self.w.iter().enumerate() {
            if wj == 0.0 {
                continue;
            }
            for r in 0..ny {
                let src = (r + ny + j - 3) % ny;
                let (o, s) = (&mut out[r * nx..(r + 1) * nx], &f[src * nx..(src + 1) * nx]);
                for (a, b) in o.iter_mut().zip(s) {
                    *a += wj * b;
                }
            }
        }
    }
}

/// `d`-th derivative of a periodic 1-D field, 7-point centered stencil.
pub fn differentiate(field: &[f64], d: usize, dx: f64) -> Result<Vec<f64>> {
    if field.len() < 7 {
        return Err(Error::GridTooSmall(field.len()));
    }
    let st = Stencil::new(d, dx)?;
    let mut out = vec![0.0; field.len()];
    st.apply_line(field, &mut out);
    Ok(out)
}

/// Periodic differentiation operator for a (possibly 2-D) grid.
#[derive(Debug, Clone)]
pub struct Differentiator {
    num_space: Vec<usize>,
    // stencils[axis][order]
    stencils: Vec<Vec<Stencil>>,
}

impl Differentiator {
    pub fn new(num_space: &[usize], dx: &[f64], max_order: usize) -> Result<Self> {
        if max_order > MAX_ORDER {
            return Err(Error::InvalidArgument(format!(
                "derivative order {max_order} exceeds the 7-point stencil limit {MAX_ORDER}"
            )));
        }
        for &m in num_space {
            if m < 7 {
                return Err(Error::GridTooSmall(m));
            }
        }
        let stencils = dx
            .iter()
            .map(|&h| {
                (0..=max_order)
                    .map(|d| Stencil::new(d, h))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Differentiator {
            num_space: num_space.to_vec(),
            stencils,
        })
    }

    pub fn max_order(&self) -> usize {
        self.stencils[0].len() - 1
    }

    /// Mixed partial `∂^α f`, `α[0]` along `x`, `α[1]` along `y`.
    pub fn apply(&self, f: &[f64], alpha: &[usize], out: &mut [f64]) {
        match self.num_space.len() {
            1 => self.stencils[0][alpha[0]].apply_line(f, out),
            _ => {
                let (nx, ny) = (self.num_space[0], self.num_space[1]);
                let mut tmp = vec![0.0; f.len()];
                for r in 0..ny {
                    self.stencils[0][alpha[0]]
                        .apply_line(&f[r * nx..(r + 1) * nx], &mut tmp[r * nx..(r + 1) * nx]);
                }
                self.stencils[1][alpha[1]].apply_columns(&tmp, nx, ny, out);
            }
        }
    }
}
