use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sparse coefficient vector over a dictionary. Entries are sorted by index
/// and never store zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseCoeffs {
    pub len: usize,
    pub entries: Vec<(usize, f64)>,
}

impl SparseCoeffs {
    pub fn zeros(len: usize) -> Self {
        SparseCoeffs {
            len,
            entries: Vec::new(),
        }
    }

    pub fn from_dense(values: &[f64]) -> Self {
        SparseCoeffs {
            len: values.len(),
            entries: values
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(i, v)| (i, *v))
                .collect(),
        }
    }

    /// Builds from `support` and matching `values`, dropping exact zeros.
    pub fn from_support(len: usize, support: &[usize], values: &[f64]) -> Self {
        let mut entries: Vec<(usize, f64)> = support
            .iter()
            .zip(values)
            .filter(|(_, v)| **v != 0.0)
            .map(|(&i, &v)| (i, v))
            .collect();
        entries.sort_by_key(|e| e.0);
        SparseCoeffs { len, entries }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.len];
        for &(i, v) in &self.entries {
            out[i] = v;
        }
        out
    }

    pub fn support(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.0).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.1).collect()
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.entries.iter().find(|e| e.0 == i).map_or(0.0, |e| e.1)
    }

    /// Flips the overall sign so the first active entry is nonnegative.
    pub fn canonical_sign(mut self) -> Self {
        if self.entries.first().is_some_and(|e| e.1 < 0.0) {
            self.entries.iter_mut().for_each(|e| e.1 = -e.1);
        }
        self
    }

    pub fn check_len(&self, len: usize) -> Result<()> {
        if self.len != len {
            return Err(Error::Shape(format!(
                "coefficient vector has length {}, dictionary has {len}",
                self.len
            )));
        }
        Ok(())
    }

    /// Formats as `c1*name1 + c2*name2` using dictionary names.
    pub fn to_expression(&self, names: &[String]) -> String {
        if self.entries.is_empty() {
            return "0".into();
        }
        self.entries
            .iter()
            .map(|&(i, v)| format!("{v:.6}*{}", names[i]))
            .collect::<Vec<_>>()
            .join(" + ")
    }
}
