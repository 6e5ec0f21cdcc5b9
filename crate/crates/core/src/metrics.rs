//! Support-recovery and coefficient-error metrics against ground truth.

use serde::{Deserialize, Serialize};

use crate::coeffs::SparseCoeffs;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportMetrics {
    pub precision: f64,
    pub accuracy: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Precision, accuracy, recall and F1 of the estimated support.
///
/// An empty estimate has precision 0 unless the truth is empty too; an empty
/// truth has recall 1.
pub fn support_metrics(est: &SparseCoeffs, truth: &SparseCoeffs) -> Result<SupportMetrics> {
    if est.len != truth.len {
        return Err(Error::Shape(format!("estimate has length {}, truth {}", est.len, truth.len)));
    }
    let (e, t) = (est.support(), truth.support());
    let tp = e.iter().filter(|k| t.contains(k)).count() as f64;
    let fp = e.len() as f64 - tp;
    let fne = t.len() as f64 - tp;
    let tn = est.len as f64 - tp - fp - fne;
    let precision = if e.is_empty() {
        if t.is_empty() { 1.0 } else { 0.0 }
    } else {
        tp / (tp + fp)
    };
    let recall = if t.is_empty() { 1.0 } else { tp / (tp + fne) };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(SupportMetrics {
        precision,
        accuracy: if est.len == 0 { 1.0 } else { (tp + tn) / est.len as f64 },
        recall,
        f1,
    })
}

/// Relative in-support and out-of-support errors, in percent.
///
/// `e_in = ‖(est − truth) on supp(truth)‖ / ‖truth‖`,
/// `e_out = ‖est off supp(truth)‖ / ‖est‖` (0 for an all-zero estimate).
pub fn coeff_errors(est: &SparseCoeffs, truth: &SparseCoeffs) -> Result<(f64, f64)> {
    if est.len != truth.len {
        return Err(Error::Shape(format!("estimate has length {}, truth {}", est.len, truth.len)));
    }
    let (e, t) = (est.to_dense(), truth.to_dense());
    let tnorm = t.iter().map(|v| v * v).sum::<f64>().sqrt();
    if tnorm == 0.0 {
        return Err(Error::InvalidArgument("true coefficient vector is zero".into()));
    }
    let (mut din, mut out, mut enorm) = (0.0, 0.0, 0.0);
    for (x, y) in e.iter().zip(&t) {
        enorm += x * x;
        if *y != 0.0 {
            din += (x - y) * (x - y);
        } else {
            out += x * x;
        }
    }
    let e_out = if enorm == 0.0 { 0.0 } else { 100.0 * (out / enorm).sqrt() };
    Ok((100.0 * din.sqrt() / tnorm, e_out))
}

/// Errors for diffusion coefficients, which are only defined up to a global
/// sign: the sign of `est` closer to `truth` is used.
pub fn coeff_errors_up_to_sign(est: &SparseCoeffs, truth: &SparseCoeffs) -> Result<(f64, f64)> {
    let neg = SparseCoeffs {
        len: est.len,
        entries: est.entries.iter().map(|&(k, v)| (k, -v)).collect(),
    };
    let a = coeff_errors(est, truth)?;
    let b = coeff_errors(&neg, truth)?;
    Ok(if b.0 < a.0 { b } else { a })
}

/// Metrics for one coefficient vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TermMetrics {
    pub precision: f64,
    pub accuracy: f64,
    pub recall: f64,
    pub f1: f64,
    pub e_in: f64,
    pub e_out: f64,
}

impl TermMetrics {
    pub fn evaluate(est: &SparseCoeffs, truth: &SparseCoeffs, up_to_sign: bool) -> Result<Self> {
        let s = support_metrics(est, truth)?;
        let (e_in, e_out) = if up_to_sign {
            coeff_errors_up_to_sign(est, truth)?
        } else {
            coeff_errors(est, truth)?
        };
        Ok(TermMetrics {
            precision: s.precision,
            accuracy: s.accuracy,
            recall: s.recall,
            f1: s.f1,
            e_in,
            e_out,
        })
    }

    pub fn values(&self) -> [f64; 6] {
        [self.precision, self.accuracy, self.recall, self.f1, self.e_in, self.e_out]
    }

    pub const NAMES: [&'static str; 6] = ["precision", "accuracy", "recall", "f1", "e_in", "e_out"];
}

/// Drift and diffusion metrics of one identified component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub drift: TermMetrics,
    pub diffusion: TermMetrics,
}

impl EvalReport {
    pub fn csv_header() -> String {
        let mut cols = vec!["run".to_string(), "component".to_string()];
        for part in ["drift", "diffusion"] {
            cols.extend(TermMetrics::NAMES.iter().map(|n| format!("{part}_{n}")));
        }
        cols.join(",")
    }

    pub fn csv_row(&self, run: &str, component: usize) -> String {
        let mut cols = vec![run.to_string(), component.to_string()];
        cols.extend(self.drift.values().iter().chain(&self.diffusion.values()).map(|v| format!("{v}")));
        cols.join(",")
    }
}

/// Mean and population standard deviation per column.
pub fn mean_std_columns(rows: &[Vec<f64>]) -> Vec<(f64, f64)> {
    let Some(first) = rows.first() else {
        return Vec::new();
    };
    let n = rows.len() as f64;
    (0..first.len())
        .map(|c| {
            let mean = rows.iter().map(|r| r[c]).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r[c] - mean).powi(2)).sum::<f64>() / n;
            (mean, var.sqrt())
        })
        .collect()
}
