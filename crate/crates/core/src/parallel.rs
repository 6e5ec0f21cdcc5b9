//! Deterministic parallel reductions over paths.
//!
//! Paths are split into fixed-size chunks; each chunk is reduced
//! sequentially and the chunk results are combined in chunk order. The
//! result therefore does not depend on how many workers run.

use rayon::prelude::*;

/// Paths per reduction chunk. Fixed so sums never depend on the thread count.
pub const CHUNK: usize = 8;

/// Sums `f(path)` into a vector accumulator of length `len`.
///
/// `f` receives the path index and the chunk accumulator to add into.
pub fn sum_over_paths<F>(num_paths: usize, len: usize, f: F) -> Vec<f64>
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    let chunks: Vec<Vec<f64>> = (0..num_paths.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![0.0; len];
            for n in c * CHUNK..((c + 1) * CHUNK).min(num_paths) {
                f(n, &mut acc);
            }
            acc
        })
        .collect();
    let mut total = vec![0.0; len];
    for acc in chunks {
        for (t, a) in total.iter_mut().zip(acc) {
            *t += a;
        }
    }
    total
}
