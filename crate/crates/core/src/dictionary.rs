//! Monomial feature dictionaries of type `(p, q)`.
//!
//! A feature is a product of at most `q` derivative symbols `∂^α u_c` with
//! `|α| ≤ p`. Symbols are ordered by component, then total order, then with
//! `x`-heavy multi-indices first; features by product length, then
//! lexicographically by symbol index.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stencil::{Differentiator, MAX_ORDER};

const COMPONENT_NAMES: [&str; 2] = ["u", "v"];

/// Derivative symbol `∂^α u_c`; `alpha[1]` is zero on 1-D grids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Symbol {
    pub component: usize,
    pub alpha: [usize; 2],
}

impl Symbol {
    pub fn new(component: usize, alpha: [usize; 2]) -> Self {
        Symbol { component, alpha }
    }

    /// Symbol for the `d`-th `x` derivative of component `c`.
    pub fn dx(component: usize, d: usize) -> Self {
        Symbol::new(component, [d, 0])
    }

    pub fn order(&self) -> usize {
        self.alpha[0] + self.alpha[1]
    }

    fn sort_key(&self) -> (usize, usize, std::cmp::Reverse<usize>) {
        (
            self.component,
            self.order(),
            std::cmp::Reverse(self.alpha[0]),
        )
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(COMPONENT_NAMES.get(self.component).copied().unwrap_or("w"))?;
        if self.order() > 0 {
            f.write_str("_")?;
            for _ in 0..self.alpha[0] {
                f.write_str("x")?;
            }
            for _ in 0..self.alpha[1] {
                f.write_str("y")?;
            }
        }
        Ok(())
    }
}

fn parse_symbol(s: &str) -> Result<Symbol> {
    let bad = || Error::InvalidArgument(format!("cannot parse feature symbol `{s}`"));
    let (head, tail) = match s.split_once('_') {
        Some((h, t)) => (h, t),
        None => (s, ""),
    };
    let component = COMPONENT_NAMES
        .iter()
        .position(|&n| n == head)
        .ok_or_else(bad)?;
    let nx = tail.chars().take_while(|&c| c == 'x').count();
    let ny = tail[nx..].chars().take_while(|&c| c == 'y').count();
    if nx + ny != tail.len() || (s.contains('_') && tail.is_empty()) {
        return Err(bad());
    }
    Ok(Symbol::new(component, [nx, ny]))
}

/// A monomial: sorted multiset of symbols. Empty means the constant 1.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub factors: Vec<Symbol>,
}

impl FeatureSpec {
    pub fn constant() -> Self {
        FeatureSpec {
            factors: Vec::new(),
        }
    }

    pub fn new(mut factors: Vec<Symbol>) -> Self {
        factors.sort_by_key(|s| s.sort_key());
        FeatureSpec { factors }
    }

    /// Parses names such as `1`, `u`, `u_xx`, `u^2*u_x`, `u*v_y`.
    pub fn parse(name: &str) -> Result<Self> {
        let name = name.trim();
        if name == "1" {
            return Ok(Self::constant());
        }
        let mut factors = Vec::new();
        for part in name.split('*') {
            let part = part.trim();
            let (sym, pow) = match part.split_once('^') {
                Some((s, p)) => (
                    s,
                    p.parse::<usize>()
                        .map_err(|_| Error::InvalidArgument(format!("bad exponent in `{part}`")))?,
                ),
                None => (part, 1),
            };
            let sym = parse_symbol(sym)?;
            factors.extend(std::iter::repeat_n(sym, pow));
        }
        Ok(Self::new(factors))
    }

    /// Product length.
    pub fn degree(&self) -> usize {
        self.factors.len()
    }

    pub fn max_order(&self) -> usize {
        self.factors.iter().map(Symbol::order).max().unwrap_or(0)
    }

    /// Multiset union.
    pub fn times(&self, other: &FeatureSpec) -> FeatureSpec {
        let mut f = self.factors.clone();
        f.extend_from_slice(&other.factors);
        FeatureSpec::new(f)
    }
}

impl fmt::Display for FeatureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.factors.is_empty() {
            return f.write_str("1");
        }
        let mut first = true;
        let mut i = 0;
        while i < self.factors.len() {
            let s = self.factors[i];
            let mut run = 1;
            while i + run < self.factors.len() && self.factors[i + run] == s {
                run += 1;
            }
            if !first {
                f.write_str("*")?;
            }
            first = false;
            if run > 1 {
                write!(f, "{s}^{run}")?;
            } else {
                write!(f, "{s}")?;
            }
            i += run;
        }
        Ok(())
    }
}

/// Symbols `∂^α u_c` with `|α| ≤ p`, in canonical order.
pub fn symbols(p: usize, space_dims: usize, components: usize) -> Vec<Symbol> {
    let mut out = Vec::new();
    for c in 0..components {
        for order in 0..=p {
            if space_dims == 1 {
                out.push(Symbol::new(c, [order, 0]));
            } else {
                for ay in 0..=order {
                    out.push(Symbol::new(c, [order - ay, ay]));
                }
            }
        }
    }
    out
}

/// Ordered list of monomial features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDictionary {
    pub p: usize,
    pub q: usize,
    pub space_dims: usize,
    pub components: usize,
    pub specs: Vec<FeatureSpec>,
}

impl FeatureDictionary {
    /// All multisets of size `0..=q` over the symbol set, canonical order.
    pub fn build(p: usize, q: usize, space_dims: usize, components: usize) -> Result<Self> {
        if p > MAX_ORDER {
            return Err(Error::InvalidArgument(format!(
                "derivative order {p} exceeds the stencil limit {MAX_ORDER}"
            )));
        }
        if q == 0 || !(1..=2).contains(&space_dims) || !(1..=2).contains(&components) {
            return Err(Error::InvalidArgument(format!(
                "invalid dictionary type: q={q}, dims={space_dims}, components={components}"
            )));
        }
        let syms = symbols(p, space_dims, components);
        let mut specs = vec![FeatureSpec::constant()];
        let mut idx: Vec<usize> = Vec::new();
        for size in 1..=q {
            // non-decreasing index tuples of length `size`, lexicographic
            idx.clear();
            idx.resize(size, 0);
            loop {
                specs.push(FeatureSpec {
                    factors: idx.iter().map(|&k| syms[k]).collect(),
                });
                let mut pos = size;
                while pos > 0 && idx[pos - 1] == syms.len() - 1 {
                    pos -= 1;
                }
                if pos == 0 {
                    break;
                }
                idx[pos - 1] += 1;
                let v = idx[pos - 1];
                for k in &mut idx[pos..] {
                    *k = v;
                }
            }
        }
        Ok(FeatureDictionary {
            p,
            q,
            space_dims,
            components,
            specs,
        })
    }

    /// Dictionary made of an explicit list of features.
    pub fn from_specs(specs: Vec<FeatureSpec>, space_dims: usize, components: usize) -> Self {
        let p = specs.iter().map(FeatureSpec::max_order).max().unwrap_or(0);
        let q = specs
            .iter()
            .map(FeatureSpec::degree)
            .max()
            .unwrap_or(1)
            .max(1);
        FeatureDictionary {
            p,
            q,
            space_dims,
            components,
            specs,
        }
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.specs.iter().map(|s| s.to_string()).collect()
    }

    pub fn index_of(&self, spec: &FeatureSpec) -> Option<usize> {
        self.specs.iter().position(|s| s == spec)
    }

    pub fn index_of_name(&self, name: &str) -> Result<usize> {
        let spec = FeatureSpec::parse(name)?;
        self.index_of(&spec)
            .ok_or_else(|| Error::InvalidArgument(format!("feature `{name}` not in dictionary")))
    }

    /// Distinct symbols needed by any feature, in canonical order.
    pub fn used_symbols(&self) -> Vec<Symbol> {
        let mut s: Vec<Symbol> = self
            .specs
            .iter()
            .flat_map(|f| f.factors.iter().copied())
            .collect();
        s.sort_by_key(|s| s.sort_key());
        s.dedup();
        s
    }

    /// Checks that the dictionary fits an ensemble's layout.
    pub fn check_compatible(&self, space_dims: usize, components: usize) -> Result<()> {
        if self.space_dims != space_dims {
            return Err(Error::Shape(format!(
                "dictionary is {}-D but data is {}-D",
                self.space_dims, space_dims
            )));
        }
        if self
            .used_symbols()
            .iter()
            .any(|s| s.component >= components)
        {
            return Err(Error::Shape(format!(
                "dictionary refers to more than {components} component(s)"
            )));
        }
        Ok(())
    }
}

/// Evaluates features on state slices, caching each distinct derivative once.
#[derive(Debug, Clone)]
pub struct FeatureEvaluator {
    diff: Differentiator,
    symbols: Vec<Symbol>,
    // feature -> indices into `symbols`
    plan: Vec<Vec<usize>>,
    points: usize,
}

impl FeatureEvaluator {
    pub fn new(specs: &[FeatureSpec], num_space: &[usize], dx: &[f64]) -> Result<Self> {
        let mut symbols: Vec<Symbol> = specs
            .iter()
            .flat_map(|f| f.factors.iter().copied())
            .collect();
        symbols.sort_by_key(|s| s.sort_key());
        symbols.dedup();
        let max_order = symbols
            .iter()
            .map(|s| s.alpha[0].max(s.alpha[1]))
            .max()
            .unwrap_or(0);
        let diff = Differentiator::new(num_space, dx, max_order)?;
        let plan = specs
            .iter()
            .map(|f| {
                f.factors
                    .iter()
                    .map(|s| symbols.iter().position(|t| t == s).unwrap())
                    .collect()
            })
            .collect();
        Ok(FeatureEvaluator {
            diff,
            symbols,
            plan,
            points: num_space.iter().product(),
        })
    }

    pub fn for_dictionary(
        dict: &FeatureDictionary,
        num_space: &[usize],
        dx: &[f64],
    ) -> Result<Self> {
        Self::new(&dict.specs, num_space, dx)
    }

    pub fn num_features(&self) -> usize {
        self.plan.len()
    }

    pub fn points(&self) -> usize {
        self.points
    }

    /// Derivative slices of every cached symbol, stored contiguously.
    pub fn symbol_values(&self, state: &[&[f64]], out: &mut Vec<f64>) {
        let p = self.points;
        out.resize(self.symbols.len() * p, 0.0);
        for (k, s) in self.symbols.iter().enumerate() {
            let dst = &mut out[k * p..(k + 1) * p];
            if s.order() == 0 {
                dst.copy_from_slice(state[s.component]);
            } else {
                self.diff.apply(state[s.component], &s.alpha, dst);
            }
        }
    }

    /// Feature values, `num_features × points` row-major into `out`.
    pub fn evaluate_into(&self, state: &[&[f64]], sym_buf: &mut Vec<f64>, out: &mut [f64]) {
        let p = self.points;
        self.symbol_values(state, sym_buf);
        for (k, factors) in self.plan.iter().enumerate() {
            let dst = &mut out[k * p..(k + 1) * p];
            match factors.split_first() {
                None => dst.iter_mut().for_each(|v| *v = 1.0),
                Some((&first, rest)) => {
                    dst.copy_from_slice(&sym_buf[first * p..(first + 1) * p]);
                    for &s in rest {
                        for (a, b) in dst.iter_mut().zip(&sym_buf[s * p..(s + 1) * p]) {
                            *a *= b;
                        }
                    }
                }
            }
        }
    }

    /// Convenience wrapper returning one vector per feature.
    pub fn evaluate(&self, state: &[&[f64]]) -> Vec<Vec<f64>> {
        let mut buf = Vec::new();
        let mut out = vec![0.0; self.num_features() * self.points];
        self.evaluate_into(state, &mut buf, &mut out);
        out.chunks(self.points).map(|c| c.to_vec()).collect()
    }
}

/// Feature values for one `(path, time)` of an ensemble.
pub fn evaluate_features(
    dict: &FeatureDictionary,
    ens: &crate::data::TrajectoryEnsemble,
    path: usize,
    time: usize,
) -> Result<Vec<Vec<f64>>> {
    dict.check_compatible(ens.grid.space_dims(), ens.num_components)?;
    let ev = FeatureEvaluator::for_dictionary(dict, &ens.grid.num_space, &ens.grid.dx)?;
    Ok(ev.evaluate(&ens.state(path, time)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binom(n: usize, k: usize) -> usize {
        (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }

    #[test]
    fn dictionary_sizes() {
        assert_eq!(FeatureDictionary::build(4, 3, 1, 1).unwrap().len(), 56);
        assert_eq!(FeatureDictionary::build(2, 2, 1, 1).unwrap().len(), 10);
        let d = FeatureDictionary::build(0, 1, 1, 1).unwrap();
        assert_eq!(d.names(), vec!["1", "u"]);
        for (p, q, dims, nc) in [(2, 3, 2, 1), (3, 2, 1, 2), (2, 2, 2, 2)] {
            let s = symbols(p, dims, nc).len();
            let expect = 1 + (1..=q).map(|k| binom(s + k - 1, k)).sum::<usize>();
            assert_eq!(
                FeatureDictionary::build(p, q, dims, nc).unwrap().len(),
                expect
            );
        }
    }

    #[test]
    fn canonical_names() {
        let d = FeatureDictionary::build(2, 2, 1, 1).unwrap();
        assert_eq!(
            d.names(),
            vec!["1", "u", "u_x", "u_xx", "u^2", "u*u_x", "u*u_xx", "u_x^2", "u_x*u_xx", "u_xx^2"]
        );
        let d2 = FeatureDictionary::build(2, 1, 2, 1).unwrap();
        assert_eq!(
            d2.names(),
            vec!["1", "u", "u_x", "u_y", "u_xx", "u_xy", "u_yy"]
        );
    }

    #[test]
    fn names_round_trip() {
        for d in [
            FeatureDictionary::build(4, 3, 1, 1).unwrap(),
            FeatureDictionary::build(2, 2, 2, 2).unwrap(),
        ] {
            for (k, n) in d.names().iter().enumerate() {
                assert_eq!(d.index_of_name(n).unwrap(), k, "{n}");
            }
        }
        assert_eq!(FeatureSpec::parse("u_x*u").unwrap().to_string(), "u*u_x");
        assert!(FeatureSpec::parse("q_x").is_err());
    }

    #[test]
    fn evaluation_basics() {
        let specs = vec![
            FeatureSpec::constant(),
            FeatureSpec::parse("u").unwrap(),
            FeatureSpec::parse("u^2").unwrap(),
        ];
        let ev = FeatureEvaluator::new(&specs, &[8], &[0.5]).unwrap();
        let s = vec![2.0; 8];
        let vals = ev.evaluate(&[&s]);
        assert!(vals[0].iter().all(|&v| v == 1.0));
        assert_eq!(vals[1], s);
        assert!(vals[2].iter().all(|&v| v == 4.0));
    }

    #[test]
    fn product_feature_on_sine() {
        let m = 256;
        let dx = 2.0 * std::f64::consts::PI / m as f64;
        let x: Vec<f64> = (0..m).map(|i| dx * i as f64).collect();
        let u: Vec<f64> = x.iter().map(|v| v.sin()).collect();
        let ev =
            FeatureEvaluator::new(&[FeatureSpec::parse("u*u_x").unwrap()], &[m], &[dx]).unwrap();
        let got = &ev.evaluate(&[&u])[0];
        let err = x
            .iter()
            .zip(got)
            .map(|(x, g)| (g - x.sin() * x.cos()).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-8, "{err}");
    }
}
