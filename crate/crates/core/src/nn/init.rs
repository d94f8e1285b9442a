use rand_distr::{Distribution, StandardNormal};

use crate::seeding::Rng;

/// Row-major `rows x cols` matrix with orthonormal rows (if `rows <= cols`)
/// or columns, scaled by `gain`. Gaussian draws are orthonormalized with two
/// passes of modified Gram-Schmidt.
pub fn orthogonal(rows: usize, cols: usize, gain: f64, rng: &mut Rng) -> Vec<f64> {
    let (n, len) = if rows <= cols { (rows, cols) } else { (cols, rows) };
    let mut vecs: Vec<Vec<f64>> = (0..n).map(|_| (0..len).map(|_| StandardNormal.sample(rng)).collect()).collect();
    for i in 0..n {
        for _ in 0..2 {
            for j in 0..i {
                let (done, rest) = vecs.split_at_mut(i);
                let d: f64 = rest[0].iter().zip(&done[j]).map(|(a, b)| a * b).sum();
                for (a, b) in rest[0].iter_mut().zip(&done[j]) {
                    *a -= d * b;
                }
            }
        }
        let norm = vecs[i].iter().map(|a| a * a).sum::<f64>().sqrt();
        for a in &mut vecs[i] {
            *a /= norm;
        }
    }
    let mut out = vec![0.0; rows * cols];
    for (k, v) in vecs.iter().enumerate() {
        for (l, &x) in v.iter().enumerate() {
            let (r, c) = if rows <= cols { (k, l) } else { (l, k) };
            out[r * cols + c] = gain * x;
        }
    }
    out
}
