use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{row_quadratic_forms, spd_inverse, weighted_gram};
use crate::matcore::{MatrixF, PNorm};

#[derive(Debug, Clone, Serialize)]
pub struct LewisWeights {
    pub weights: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// A `1e-12 * trace` ridge was added to a singular Gram matrix.
    pub regularized: bool,
}

/// `M(w) = A^T W^{1-2/p} A` inverted, plus whether a ridge was needed.
fn gram_inverse(a: &MatrixF, w: &[f64], p: f64) -> (MatrixF, bool) {
    let e = 1.0 - 2.0 / p;
    let scale: Vec<f64> = w
        .iter()
        .map(|&wi| if wi > 0.0 { wi.powf(e) } else { 0.0 })
        .collect();
    spd_inverse(&weighted_gram(a, &scale))
}

/// Image of `w` under the Lewis map `w_i <- (a_i^T M(w)^{-1} a_i)^{p/2}`.
pub fn lewis_map(a: &MatrixF, w: &[f64], p: f64) -> (Vec<f64>, bool) {
    let (minv, reg) = gram_inverse(a, w, p);
    let tau = row_quadratic_forms(a, &minv);
    (tau.iter().map(|t| t.max(0.0).powf(p / 2.0)).collect(), reg)
}

/// Max relative violation of the fixed-point equation over rows with positive weight.
pub fn fixed_point_residual(a: &MatrixF, w: &[f64], p: f64) -> f64 {
    let (fw, _) = lewis_map(a, w, p);
    w.iter()
        .zip(&fw)
        .filter(|(wi, _)| **wi > 0.0)
        .map(|(wi, fi)| (wi - fi).abs() / wi)
        .fold(0.0, f64::max)
}

/// lp Lewis weights by fixed-point iteration from the all-ones start.
///
/// For `p < 4` the plain map `w <- (a_i^T M(w)^{-1} a_i)^{p/2}` contracts.
/// For `p >= 4` it does not, and the equivalent map
/// `w <- w^{1-2/p} a_i^T M(w)^{-1} a_i` (same fixed point) is used instead.
pub fn lewis_weights(a: &MatrixF, p: PNorm, iters: usize, tol: f64) -> Result<LewisWeights> {
    let p = p.finite()?;
    if a.rows() == 0 {
        return Err(Error::InvalidArgument("Lewis weights of an empty matrix".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    let mut w = vec![1.0; a.rows()];
    let mut regularized = false;
    for it in 1..=iters.max(1) {
        let (minv, reg) = gram_inverse(a, &w, p);
        regularized |= reg;
        let tau = row_quadratic_forms(a, &minv);
        let next: Vec<f64> = if p < 4.0 {
            tau.iter().map(|t| t.max(0.0).powf(p / 2.0)).collect()
        } else {
            let e = 1.0 - 2.0 / p;
            w.iter().zip(&tau).map(|(wi, t)| wi.powf(e) * t.max(0.0)).collect()
        };
        let change = w
            .iter()
            .zip(&next)
            .map(|(old, new)| {
                if *old > 0.0 {
                    (new - old).abs() / old
                } else if *new > 0.0 {
                    f64::INFINITY
                } else {
                    0.0
                }
            })
            .fold(0.0, f64::max);
        w = next;
        if change < tol {
            return Ok(LewisWeights { weights: w, iterations: it, converged: true, regularized });
        }
    }
    Ok(LewisWeights { weights: w, iterations: iters.max(1), converged: false, regularized })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{invert, row_quadratic_forms};
    use crate::rng::{gaussian, seeded};

    fn random(n: usize, d: usize, seed: u64) -> MatrixF {
        let mut r = seeded(seed);
        MatrixF::new(n, d, (0..n * d).map(|_| gaussian(&mut r)).collect()).unwrap()
    }

    #[test]
    fn identity_fixed_point() {
        let lw = lewis_weights(&MatrixF::identity(4), PNorm::one(), 100, 1e-10).unwrap();
        assert!(lw.converged);
        assert!(lw.weights.iter().all(|w| (w - 1.0).abs() < 1e-12));
    }

    #[test]
    fn p_two_equals_leverage_scores() {
        let a = random(40, 3, 3);
        // closed form: diag(A (A^T A)^{-1} A^T)
        let g = a.transpose().matmul(&a).unwrap();
        let lev = row_quadratic_forms(&a, &invert(&g).unwrap());
        let lw = lewis_weights(&a, PNorm::two(), 50, 1e-12).unwrap();
        for (x, y) in lw.weights.iter().zip(&lev) {
            assert!((x - y).abs() < 1e-8);
        }
    }

    #[test]
    fn l1_weights_sum_to_rank() {
        let a = random(50, 3, 11);
        let tol = 1e-9;
        let lw = lewis_weights(&a, PNorm::one(), 1000, tol).unwrap();
        assert!(lw.converged);
        let s: f64 = lw.weights.iter().sum();
        assert!((s - 3.0).abs() < 1e-4, "sum {s}");
        assert!(fixed_point_residual(&a, &lw.weights, 1.0) <= 10.0 * tol);
    }

    #[test]
    fn large_p_converges() {
        let a = random(60, 3, 5);
        let lw = lewis_weights(&a, PNorm::Finite(6.0), 5000, 1e-10).unwrap();
        assert!(lw.converged);
        assert!(fixed_point_residual(&a, &lw.weights, 6.0) < 1e-7);
        let s: f64 = lw.weights.iter().sum();
        assert!((s - 3.0).abs() < 1e-6);
    }
}
