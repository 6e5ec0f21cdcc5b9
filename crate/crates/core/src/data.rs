//! Grids and trajectory ensembles.
//!
//! An ensemble stores `N` sampled paths of an `n_c`-component field on a
//! uniform, periodic time–space grid. Samples are laid out path-major, then
//! component, then time, then space (row-major over `(y, x)` in 2-D, so `x`
//! varies fastest).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum number of points per space dimension (width of the centered stencil).
pub const MIN_SPACE_POINTS: usize = 7;

/// Uniform periodic grid on `[t0, t0 + dt·(num_times-1)] × D`.
///
/// Space axes are ordered `x` first, then `y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformGrid {
    pub t0: f64,
    pub dt: f64,
    pub num_times: usize,
    pub x0: Vec<f64>,
    pub dx: Vec<f64>,
    pub num_space: Vec<usize>,
    pub periodic: bool,
}

impl UniformGrid {
    /// 1-D grid whose `nx` points cover the period `[x0, x0 + length)`.
    pub fn new_1d(
        t0: f64,
        t_final: f64,
        num_times: usize,
        x0: f64,
        length: f64,
        nx: usize,
    ) -> Result<Self> {
        if num_times < 2 {
            return Err(Error::InvalidGrid("num_times must be at least 2".into()));
        }
        let grid = UniformGrid {
            t0,
            dt: (t_final - t0) / (num_times - 1) as f64,
            num_times,
            x0: vec![x0],
            dx: vec![length / nx as f64],
            num_space: vec![nx],
            periodic: true,
        };
        grid.validate()?;
        Ok(grid)
    }

    /// 2-D square-period grid with `n` points along both axes.
    pub fn new_2d(
        t0: f64,
        t_final: f64,
        num_times: usize,
        x0: f64,
        length: f64,
        n: usize,
    ) -> Result<Self> {
        if num_times < 2 {
            return Err(Error::InvalidGrid("num_times must be at least 2".into()));
        }
        let grid = UniformGrid {
            t0,
            dt: (t_final - t0) / (num_times - 1) as f64,
            num_times,
            x0: vec![x0, x0],
            dx: vec![length / n as f64; 2],
            num_space: vec![n, n],
            periodic: true,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() || !self.t0.is_finite() {
            return Err(Error::InvalidGrid(format!(
                "dt must be positive and finite, got {}",
                self.dt
            )));
        }
        if self.num_times < 2 {
            return Err(Error::InvalidGrid("num_times must be at least 2".into()));
        }
        let dims = self.num_space.len();
        if dims == 0 || dims > 2 {
            return Err(Error::InvalidGrid(format!(
                "space dimension must be 1 or 2, got {dims}"
            )));
        }
        if self.x0.len() != dims || self.dx.len() != dims {
            return Err(Error::InvalidGrid(
                "x0/dx must have one entry per dimension".into(),
            ));
        }
        for (&m, &h) in self.num_space.iter().zip(&self.dx) {
            if m < MIN_SPACE_POINTS {
                return Err(Error::GridTooSmall(m));
            }
            if !(h > 0.0) || !h.is_finite() {
                return Err(Error::InvalidGrid(format!(
                    "dx must be positive and finite, got {h}"
                )));
            }
        }
        if !self.periodic {
            return Err(Error::InvalidGrid(
                "only periodic grids are supported".into(),
            ));
        }
        Ok(())
    }

    pub fn space_dims(&self) -> usize {
        self.num_space.len()
    }

    /// Number of grid points in one space slice.
    pub fn points(&self) -> usize {
        self.num_space.iter().product()
    }

    /// Number of time steps `I` (one less than the number of time samples).
    pub fn steps(&self) -> usize {
        self.num_times - 1
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + self.dt * i as f64
    }

    pub fn t_final(&self) -> f64 {
        self.time(self.num_times - 1)
    }

    /// Volume of one grid cell; the periodic trapezoid rule weight.
    pub fn cell_volume(&self) -> f64 {
        self.dx.iter().product()
    }

    /// Coordinates of axis `d`.
    pub fn axis(&self, d: usize) -> Vec<f64> {
        (0..self.num_space[d])
            .map(|m| self.x0[d] + self.dx[d] * m as f64)
            .collect()
    }
}

/// `N` sampled trajectories of an `n_c`-component field.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEnsemble {
    pub grid: UniformGrid,
    pub num_paths: usize,
    pub num_components: usize,
    values: Vec<f64>,
}

impl TrajectoryEnsemble {
    /// Builds an ensemble from a flat buffer in `(path, component, time, space)` order.
    pub fn new(
        grid: UniformGrid,
        num_paths: usize,
        num_components: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        grid.validate()?;
        if num_paths == 0 {
            return Err(Error::InvalidArgument(
                "ensemble needs at least one path".into(),
            ));
        }
        if num_components == 0 || num_components > 2 {
            return Err(Error::InvalidArgument(format!(
                "number of components must be 1 or 2, got {num_components}"
            )));
        }
        let expected = num_paths * num_components * grid.num_times * grid.points();
        if values.len() != expected {
            return Err(Error::Shape(format!(
                "expected {expected} samples, got {}",
                values.len()
            )));
        }
        let ens = TrajectoryEnsemble {
            grid,
            num_paths,
            num_components,
            values,
        };
        ens.check_finite()?;
        Ok(ens)
    }

    /// Zero-filled ensemble.
    pub fn zeros(grid: UniformGrid, num_paths: usize, num_components: usize) -> Result<Self> {
        let len = num_paths * num_components * grid.num_times * grid.points();
        Self::new(grid, num_paths, num_components, vec![0.0; len])
    }

    pub fn check_finite(&self) -> Result<()> {
        if let Some(pos) = self.values.iter().position(|v| !v.is_finite()) {
            let slice = pos / self.grid.points();
            let time = slice % self.grid.num_times;
            let component = (slice / self.grid.num_times) % self.num_components;
            let path = slice / (self.grid.num_times * self.num_components);
            return Err(Error::NonFinite {
                path,
                component,
                time,
            });
        }
        Ok(())
    }

    fn offset(&self, path: usize, component: usize, time: usize) -> usize {
        let p = self.grid.points();
        ((path * self.num_components + component) * self.grid.num_times + time) * p
    }

    /// Space slice of `component` at `(path, time)`.
    pub fn slice(&self, path: usize, component: usize, time: usize) -> &[f64] {
        let start = self.offset(path, component, time);
        &self.values[start..start + self.grid.points()]
    }

    pub fn slice_mut(&mut self, path: usize, component: usize, time: usize) -> &mut [f64] {
        let start = self.offset(path, component, time);
        let p = self.grid.points();
        &mut self.values[start..start + p]
    }

    /// Slices of every component at `(path, time)`.
    pub fn state(&self, path: usize, time: usize) -> Vec<&[f64]> {
        (0..self.num_components)
            .map(|c| self.slice(path, c, time))
            .collect()
    }

    /// All samples of one path, `(component, time, space)` order.
    pub fn path_values(&self, path: usize) -> &[f64] {
        let len = self.num_components * self.grid.num_times * self.grid.points();
        &self.values[path * len..(path + 1) * len]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Keeps every `factor`-th time slice.
    pub fn subsample_time(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::InvalidArgument(
                "subsampling factor must be positive".into(),
            ));
        }
        let steps = self.grid.steps();
        if steps % factor != 0 {
            return Err(Error::InvalidArgument(format!(
                "{steps} time steps are not divisible by factor {factor}"
            )));
        }
        let mut grid = self.grid.clone();
        grid.dt *= factor as f64;
        grid.num_times = steps / factor + 1;
        let p = self.grid.points();
        let mut values =
            Vec::with_capacity(self.num_paths * self.num_components * grid.num_times * p);
        for n in 0..self.num_paths {
            for c in 0..self.num_components {
                for i in (0..self.grid.num_times).step_by(factor) {
                    values.extend_from_slice(self.slice(n, c, i));
                }
            }
        }
        Ok(TrajectoryEnsemble {
            grid,
            num_paths: self.num_paths,
            num_components: self.num_components,
            values,
        })
    }

    /// Ensemble made of a subset of paths, in the given order.
    pub fn select_paths(&self, paths: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(paths.len() * self.path_values(0).len());
        for &n in paths {
            if n >= self.num_paths {
                return Err(Error::InvalidArgument(format!(
                    "path index {n} out of range"
                )));
            }
            values.extend_from_slice(self.path_values(n));
        }
        Self::new(self.grid.clone(), paths.len(), self.num_components, values)
    }

    /// Sample mean over paths of `component` at time index `time`.
    pub fn mean_slice(&self, component: usize, time: usize) -> Vec<f64> {
        let mut acc = vec![0.0; self.grid.points()];
        for n in 0..self.num_paths {
            for (a, v) in acc.iter_mut().zip(self.slice(n, component, time)) {
                *a += v;
            }
        }
        let inv = 1.0 / self.num_paths as f64;
        acc.iter_mut().for_each(|a| *a *= inv);
        acc
    }
}
