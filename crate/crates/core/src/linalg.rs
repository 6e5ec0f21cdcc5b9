//! Small dense least-squares helpers.

use nalgebra::{DMatrix, DVector};

/// Minimum-norm least-squares solution of `a x ≈ b`.
///
/// Tall systems are reduced with a thin QR first; the (square) triangular
/// factor is then pseudo-inverted through its SVD, so rank-deficient column
/// sets get the minimum-norm solution.
pub fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let (m, n) = a.shape();
    if n == 0 {
        return DVector::zeros(0);
    }
    let (core, rhs) = if m > n {
        let qr = a.clone().qr();
        let mut qtb = b.clone();
        qr.q_tr_mul(&mut qtb);
        (qr.r(), qtb.rows(0, n).into_owned())
    } else {
        (a.clone(), b.clone())
    };
    let svd = core.svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * (m.max(n) as f64) * f64::EPSILON;
    svd.solve(&rhs, tol).unwrap_or_else(|_| DVector::zeros(n))
}

/// Columns `idx` of `a` as a new matrix.
pub fn select_columns(a: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), idx.len(), |r, c| a[(r, idx[c])])
}

/// Indices of the `k` largest values of `score` among `candidates`; ties go to
/// the lower index. Output is sorted ascending.
pub fn top_k(
    score: impl Fn(usize) -> f64,
    candidates: impl IntoIterator<Item = usize>,
    k: usize,
) -> Vec<usize> {
    let mut c: Vec<(usize, f64)> = candidates.into_iter().map(|i| (i, score(i))).collect();
    c.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
    let mut out: Vec<usize> = c.into_iter().take(k).map(|(i, _)| i).collect();
    out.sort_unstable();
    out
}
