use serde::Serialize;

use super::{WcbCertificate, WcbFactorization, WcbMethod, SAFETY_FACTOR};
use crate::linalg::smallest_right_singular_vector;
use crate::matcore::{entrywise_pnorm, vector_pnorm, MatrixF, PNorm};
use crate::rng::{generalized_gaussian, seeded};

/// Random directions used when certifying a basis.
pub const CERT_SAMPLES: usize = 256;
/// Fixed seed for certification so deterministic methods stay deterministic.
pub const CERT_SEED: u64 = 0x5eed_ce27;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct WcbCheck {
    pub pass: bool,
    /// `||U||_p / alpha`.
    pub worst_alpha_ratio: f64,
    /// `max_z ||z||_q / (beta ||U z||_p)` over the tested directions.
    pub worst_beta_ratio: f64,
}

/// Test directions in `R^d`: the `2d` signed coordinate vectors, the weakest
/// singular direction of `u` (both signs), then `n_samples` points drawn from
/// the generalized Gaussian of order `q` (uniform on the unit q-sphere after
/// normalization).
pub(crate) fn test_directions(u: &MatrixF, q: PNorm, n_samples: usize, seed: u64) -> Vec<Vec<f64>> {
    let d = u.cols();
    let mut dirs = Vec::with_capacity(2 * d + 2 + n_samples);
    for i in 0..d {
        for s in [1.0, -1.0] {
            let mut e = vec![0.0; d];
            e[i] = s;
            dirs.push(e);
        }
    }
    if let Some(v) = smallest_right_singular_vector(u) {
        dirs.push(v.iter().map(|x| -x).collect());
        dirs.push(v);
    }
    let mut rng = seeded(seed);
    let qv = q.value();
    for _ in 0..n_samples {
        let mut z: Vec<f64> = (0..d).map(|_| generalized_gaussian(&mut rng, qv)).collect();
        let nz = vector_pnorm(&z, q);
        if nz > 0.0 {
            z.iter_mut().for_each(|x| *x /= nz);
            dirs.push(z);
        }
    }
    dirs
}

/// Largest `||z||_q / ||U z||_p` over the test directions.
pub(crate) fn sampled_beta(u: &MatrixF, p: PNorm, n_samples: usize, seed: u64) -> f64 {
    let q = p.dual();
    test_directions(u, q, n_samples, seed)
        .iter()
        .map(|z| {
            let uz = vector_pnorm(&u.mul_vec(z).expect("direction width"), p);
            let zq = vector_pnorm(z, q);
            if uz > 0.0 {
                zq / uz
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, f64::max)
}

/// Certificate from measurement: `alpha = 2 ||U||_p`, `beta = 2 * sampled beta`.
/// For `p = 2` both constants are computed exactly from the singular values.
pub fn certify_empirically(u: &MatrixF, p: PNorm, method: WcbMethod) -> WcbCertificate {
    if p == PNorm::two() {
        let s = crate::linalg::singular_values(u);
        let smin = s.last().copied().unwrap_or(0.0);
        return WcbCertificate {
            alpha: u.frobenius(),
            beta: if smin > 0.0 { 1.0 / smin } else { f64::INFINITY },
            p,
            method,
        };
    }
    WcbCertificate {
        alpha: SAFETY_FACTOR * entrywise_pnorm(u, p),
        beta: SAFETY_FACTOR * sampled_beta(u, p, CERT_SAMPLES, CERT_SEED),
        p,
        method,
    }
}

/// Checks both conditions of the certificate: condition (i) exactly and
/// condition (ii) over `n_samples` random unit-q directions plus the signed
/// coordinate vectors and the weakest singular direction.
pub fn wcb_check(f: &WcbFactorization, n_samples: usize, seed: u64) -> WcbCheck {
    const SLACK: f64 = 1e-9;
    let p = f.cert.p;
    let q = p.dual();
    let worst_alpha_ratio = entrywise_pnorm(&f.u, p) / f.cert.alpha;
    let worst_beta_ratio = test_directions(&f.u, q, n_samples.max(1), seed)
        .iter()
        .map(|z| {
            let uz = vector_pnorm(&f.u.mul_vec(z).expect("direction width"), p);
            let zq = vector_pnorm(z, q);
            if uz > 0.0 {
                zq / (f.cert.beta * uz)
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, f64::max);
    WcbCheck {
        pass: worst_alpha_ratio <= 1.0 + SLACK && worst_beta_ratio <= 1.0 + SLACK,
        worst_alpha_ratio,
        worst_beta_ratio,
    }
}
