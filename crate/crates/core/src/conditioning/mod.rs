//! Well-conditioned bases for lp column spaces.
//!
//! A factorization `A R = U`, `U S = A` is an `(alpha, beta, p)`
//! well-conditioned basis when `||U||_p <= alpha` (entrywise) and
//! `||z||_q <= beta ||U z||_p` for every `z`. Three constructions are offered:
//! QR (`Orth`, exact for p = 2), an lp Lewis-weight ellipsoidal rounding
//! (`Rounding`, deterministic, any finite p) and a sparse Cauchy pipeline
//! (`Spc3`, randomized, l1).

mod check;
mod lewis;
mod spc3;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use check::{certify_empirically, wcb_check, WcbCheck, CERT_SAMPLES, CERT_SEED};
pub(crate) use check::test_directions;
pub use lewis::{fixed_point_residual, lewis_map, lewis_weights, LewisWeights};
pub use spc3::{spc3_sketch_rows, wcb_spc3};

use crate::error::{Error, Result};
use crate::linalg::{invert_upper, require_full_column_rank, thin_qr};
use crate::matcore::{entrywise_pnorm, MatrixF, PNorm};

/// Default tolerance of the rounding iteration.
pub const ROUNDING_TOL: f64 = 1e-6;
/// Safety multiplier applied to empirically measured constants.
pub const SAFETY_FACTOR: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum WcbMethod {
    Orth,
    Spc3,
    Rounding,
}

impl WcbMethod {
    pub fn name(self) -> &'static str {
        match self {
            WcbMethod::Orth => "orth",
            WcbMethod::Spc3 => "spc3",
            WcbMethod::Rounding => "rounding",
        }
    }

    pub fn is_deterministic(self) -> bool {
        !matches!(self, WcbMethod::Spc3)
    }

    /// The norm the method conditions for natively.
    pub fn native_p(self) -> Option<PNorm> {
        match self {
            WcbMethod::Orth => Some(PNorm::two()),
            WcbMethod::Spc3 => Some(PNorm::one()),
            WcbMethod::Rounding => None,
        }
    }
}

impl fmt::Display for WcbMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WcbMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "orth" => Ok(WcbMethod::Orth),
            "spc3" => Ok(WcbMethod::Spc3),
            "rounding" => Ok(WcbMethod::Rounding),
            other => Err(Error::InvalidArgument(format!("unknown basis method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WcbCertificate {
    pub alpha: f64,
    pub beta: f64,
    pub p: PNorm,
    pub method: WcbMethod,
}

impl WcbCertificate {
    /// `alpha^p`, the bound on the total leverage mass.
    pub fn alpha_pow(&self) -> f64 {
        self.p.pow(self.alpha)
    }

    /// Factor by which a local leverage score may fall below the global one:
    /// `d * alpha^p * max(beta, beta^p)`. Hoelder's inequality only bounds
    /// `|(U z)_i|^p` by `w_i * ||z||_q^p`, so `beta` enters to the power `p`
    /// once it exceeds one.
    pub fn local_adjust(&self, d: usize) -> f64 {
        d as f64 * self.alpha_pow() * self.beta.max(self.p.pow(self.beta))
    }

    /// Distortion `d_eff` of the reduce step: `||x||_q / beta <= ||U x||_p <= alpha ||x||_q`
    /// gives `||S x||_p` within `alpha * beta * c` of `||B x||_p`, where `c`
    /// converts between the p and q norms on `R^d`.
    pub fn embedding_distortion(&self, d: usize) -> f64 {
        let p = self.p.value();
        let q = self.p.dual().value();
        let inv = |x: f64| if x.is_infinite() { 0.0 } else { 1.0 / x };
        // ||x||_q <= d^{max(0, 1/q - 1/p)} ||x||_p
        let conv = (d as f64).powf((inv(q) - inv(p)).max(0.0));
        self.alpha * self.beta * conv
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct WcbFactorization {
    /// n x d basis, `U = A R`.
    pub u: MatrixF,
    /// d x d change of basis.
    pub r: MatrixF,
    /// `S = R^{-1}`, so `U S = A`.
    pub s: MatrixF,
    pub cert: WcbCertificate,
}

impl WcbFactorization {
    pub fn dim(&self) -> usize {
        self.u.cols()
    }

    /// Relative errors `(||A R - U||_F / ||U||_F, ||U S - A||_F / ||A||_F, ||R S - I||_F / sqrt(d))`.
    pub fn consistency(&self, a: &MatrixF) -> Result<(f64, f64, f64)> {
        let ar = a.matmul(&self.r)?;
        let us = self.u.matmul(&self.s)?;
        let rs = self.r.matmul(&self.s)?;
        let d = self.dim();
        let e1 = ar.sub(&self.u)?.frobenius() / self.u.frobenius().max(f64::MIN_POSITIVE);
        let e2 = us.sub(a)?.frobenius() / a.frobenius().max(f64::MIN_POSITIVE);
        let e3 = rs.sub(&MatrixF::identity(d))?.frobenius() / (d as f64).sqrt();
        Ok((e1, e2, e3))
    }
}

/// Orthonormal basis from a thin QR: a `(sqrt(d), 1, 2)` basis.
pub fn wcb_orth(a: &MatrixF) -> Result<WcbFactorization> {
    require_full_column_rank(a)?;
    let (q, rq) = thin_qr(a);
    let r = invert_upper(&rq)?;
    let d = a.cols();
    Ok(WcbFactorization {
        u: q,
        r,
        s: rq,
        cert: WcbCertificate {
            alpha: (d as f64).sqrt(),
            beta: 1.0,
            p: PNorm::two(),
            method: WcbMethod::Orth,
        },
    })
}

/// Change of basis from the QR factor of `W^{1/2 - 1/p} A`.
fn lewis_basis(a: &MatrixF, weights: &[f64], p: f64) -> Result<(MatrixF, MatrixF, MatrixF)> {
    let e = 0.5 - 1.0 / p;
    let mut scaled = Vec::with_capacity(a.rows() * a.cols());
    for (row, &w) in a.row_iter().zip(weights) {
        let s = if w > 0.0 { w.powf(e) } else { 0.0 };
        scaled.extend(row.iter().map(|x| x * s));
    }
    let scaled = MatrixF::new(a.rows(), a.cols(), scaled)?;
    let (_, rbar) = thin_qr(&scaled);
    let r = invert_upper(&rbar)?;
    let u = a.matmul(&r)?;
    Ok((u, r, rbar))
}

/// Deterministic lp basis by Lewis-weight ellipsoidal rounding.
///
/// The Lewis ellipsoid `{x : x^T A^T W^{1-2/p} A x <= 1}` sandwiches the lp
/// ball of the column space; mapping it to the unit ball gives
/// `alpha <= d^{2/p - 1/2}, beta <= 1` for `p <= 2` and
/// `alpha <= d^{1/p}, beta <= d^{1 - 2/p}` for `p > 2`. The certificate records
/// twice the measured `||U||_p` and twice the worst sampled beta ratio.
/// The iteration is capped at `500 d` steps.
pub fn wcb_rounding(a: &MatrixF, p: PNorm, tol: f64) -> Result<WcbFactorization> {
    let pv = p.finite()?;
    require_full_column_rank(a)?;
    let d = a.cols();
    let lw = lewis_weights(a, p, 500 * d, tol)?;
    let (u, r, s) = lewis_basis(a, &lw.weights, pv)?;
    if !lw.converged {
        let cert = certify_empirically(&u, p, WcbMethod::Rounding);
        return Err(Error::RoundingNotConverged {
            iterations: lw.iterations,
            alpha: cert.alpha,
            beta: cert.beta,
        });
    }
    let cert = certify_empirically(&u, p, WcbMethod::Rounding);
    Ok(WcbFactorization { u, r, s, cert })
}

/// A basis for `a` with a certificate valid for the requested `p`.
///
/// When `p` differs from the method's native norm the basis is re-certified
/// empirically at `p`.
pub fn wcb(a: &MatrixF, p: PNorm, method: WcbMethod, seed: u64) -> Result<WcbFactorization> {
    if p.is_inf() {
        return Err(Error::InvalidArgument("well-conditioned bases need a finite p".into()));
    }
    let mut f = match method {
        WcbMethod::Orth => wcb_orth(a)?,
        WcbMethod::Spc3 => wcb_spc3(a, seed)?,
        WcbMethod::Rounding => return wcb_rounding(a, p, ROUNDING_TOL),
    };
    if Some(p) != method.native_p() {
        f.cert = certify_empirically(&f.u, p, method);
    }
    Ok(f)
}

/// `||U||_p` for a factorization, for reporting.
pub fn basis_norm(f: &WcbFactorization) -> f64 {
    entrywise_pnorm(&f.u, f.cert.p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::singular_values;
    use crate::rng::{cauchy, gaussian, seeded};

    fn random(n: usize, d: usize, seed: u64) -> MatrixF {
        let mut r = seeded(seed);
        MatrixF::new(n, d, (0..n * d).map(|_| gaussian(&mut r)).collect()).unwrap()
    }

    #[test]
    fn orth_identity() {
        let f = wcb_orth(&MatrixF::identity(3)).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((f.u.get(i, j).abs() - expect).abs() < 1e-14);
                assert!((f.r.get(i, j).abs() - expect).abs() < 1e-14);
            }
        }
        assert_eq!(f.cert.alpha, 3f64.sqrt());
        assert_eq!(f.cert.beta, 1.0);
        assert_eq!(f.cert.p, PNorm::two());
    }

    #[test]
    fn orth_diagonal_scaling() {
        let a = MatrixF::diag(&[2.0, 5.0]).unwrap();
        let f = wcb_orth(&a).unwrap();
        for (i, expect) in [0.5, 0.2].iter().enumerate() {
            assert!((f.r.get(i, i).abs() - expect).abs() < 1e-14);
            assert!((f.u.get(i, i).abs() - 1.0).abs() < 1e-14);
        }
        assert!(f.r.get(0, 1).abs() < 1e-14 && f.r.get(1, 0).abs() < 1e-14);
    }

    #[test]
    fn orth_random_is_orthonormal() {
        let a = random(200, 6, 1);
        let f = wcb_orth(&a).unwrap();
        assert!((f.u.frobenius() - 6f64.sqrt()).abs() < 1e-9);
        let s = singular_values(&f.u);
        assert!((s[5] - 1.0).abs() < 1e-9 && (s[0] - 1.0).abs() < 1e-9);
        let (e1, e2, e3) = f.consistency(&a).unwrap();
        assert!(e1 < 1e-8 && e2 < 1e-8 && e3 < 1e-8);
    }

    #[test]
    fn orth_rank_deficient_reports_rank() {
        // third column = first + second
        let dep = MatrixF::from_rows(&[[1.0, 1.0, 2.0], [0.0, 1.0, 1.0], [1.0, 0.0, 1.0], [2.0, 3.0, 5.0]])
            .unwrap();
        match wcb_orth(&dep) {
            Err(Error::RankDeficient { rank, expected }) => assert_eq!((rank, expected), (2, 3)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rounding_identity_is_already_conditioned() {
        for p in [1.0, 1.5, 3.0] {
            let f = wcb_rounding(&MatrixF::identity(4), PNorm::Finite(p), ROUNDING_TOL).unwrap();
            // U = I up to signs, ||U||_p = d^{1/p}
            let norm = entrywise_pnorm(&f.u, PNorm::Finite(p));
            assert!((norm - 4f64.powf(1.0 / p)).abs() < 1e-9);
            assert!(wcb_check(&f, 500, 3).pass);
        }
    }

    #[test]
    fn rounding_cauchy_l1_constants() {
        let mut r = seeded(17);
        let a = MatrixF::new(100, 3, (0..300).map(|_| cauchy(&mut r)).collect()).unwrap();
        let f = wcb_rounding(&a, PNorm::one(), ROUNDING_TOL).unwrap();
        // 10^4 sampled directions plus coordinate directions
        let chk = wcb_check(&f, 10_000, 99);
        assert!(chk.pass, "{chk:?}");
        assert!(f.cert.alpha <= 2.0 * 3f64.powf(1.5), "alpha {}", f.cert.alpha);
        assert!(f.cert.beta <= 2.0, "beta {}", f.cert.beta);
        let (e1, e2, e3) = f.consistency(&a).unwrap();
        assert!(e1 < 1e-8 && e2 < 1e-8 && e3 < 1e-8);
    }

    #[test]
    fn rounding_leverage_mass_bounded() {
        let a = random(120, 4, 23);
        let f = wcb_rounding(&a, PNorm::one(), ROUNDING_TOL).unwrap();
        let mass: f64 = f.u.data().iter().map(|x| x.abs()).sum();
        assert!(mass <= f.cert.alpha_pow() + 1e-9);
    }

    #[test]
    fn rounding_rejects_infinite_p_and_rank_loss() {
        assert!(wcb_rounding(&MatrixF::identity(2), PNorm::Inf, 1e-6).is_err());
        let a = MatrixF::from_rows(&[[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]]).unwrap();
        assert!(matches!(
            wcb_rounding(&a, PNorm::one(), 1e-6),
            Err(Error::RankDeficient { rank: 1, expected: 2 })
        ));
    }

    #[test]
    fn mapped_norms_agree() {
        // ||(A R) x||_p == ||U x||_p
        let a = random(80, 3, 8);
        let f = wcb(&a, PNorm::Finite(3.0), WcbMethod::Rounding, 0).unwrap();
        let ar = a.matmul(&f.r).unwrap();
        let mut rng = seeded(4);
        for _ in 0..50 {
            let x: Vec<f64> = (0..3).map(|_| gaussian(&mut rng)).collect();
            let p = PNorm::Finite(3.0);
            let l = crate::matcore::vector_pnorm(&ar.mul_vec(&x).unwrap(), p);
            let r = crate::matcore::vector_pnorm(&f.u.mul_vec(&x).unwrap(), p);
            assert!((l - r).abs() <= 1e-8 * r);
        }
    }

    #[test]
    fn method_parsing() {
        assert_eq!("SPC3".parse::<WcbMethod>().unwrap(), WcbMethod::Spc3);
        assert!("qr".parse::<WcbMethod>().is_err());
    }
}
