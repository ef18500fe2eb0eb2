use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// An lp norm exponent in `[1, inf]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PNorm {
    Finite(f64),
    Inf,
}

impl PNorm {
    pub fn new(p: f64) -> Result<Self> {
        if p.is_infinite() && p > 0.0 {
            return Ok(PNorm::Inf);
        }
        if !p.is_finite() || p < 1.0 {
            return Err(Error::InvalidArgument(format!("p must lie in [1, inf], got {p}")));
        }
        Ok(PNorm::Finite(p))
    }

    pub fn one() -> Self {
        PNorm::Finite(1.0)
    }

    pub fn two() -> Self {
        PNorm::Finite(2.0)
    }

    /// The exponent as a float (`f64::INFINITY` for the max norm).
    pub fn value(self) -> f64 {
        match self {
            PNorm::Finite(p) => p,
            PNorm::Inf => f64::INFINITY,
        }
    }

    pub fn is_inf(self) -> bool {
        matches!(self, PNorm::Inf)
    }

    /// Finite exponent, or an error for `inf`.
    pub fn finite(self) -> Result<f64> {
        match self {
            PNorm::Finite(p) => Ok(p),
            PNorm::Inf => Err(Error::InvalidArgument("a finite p is required".into())),
        }
    }

    /// Hoelder dual `q = p/(p-1)`, with `(1, inf)` and `(inf, 1)` at the ends.
    pub fn dual(self) -> PNorm {
        match self {
            PNorm::Inf => PNorm::Finite(1.0),
            PNorm::Finite(p) if p == 1.0 => PNorm::Inf,
            PNorm::Finite(p) => PNorm::Finite(p / (p - 1.0)),
        }
    }

    /// `x^p` for finite p. Used for leverage scores and norm powers.
    pub fn pow(self, x: f64) -> f64 {
        match self {
            PNorm::Finite(p) if p == 1.0 => x,
            PNorm::Finite(p) if p == 2.0 => x * x,
            PNorm::Finite(p) => x.powf(p),
            PNorm::Inf => x,
        }
    }
}

impl fmt::Display for PNorm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PNorm::Finite(p) => write!(f, "{p}"),
            PNorm::Inf => f.write_str("inf"),
        }
    }
}

impl FromStr for PNorm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        if t == "inf" || t == "infinity" {
            return Ok(PNorm::Inf);
        }
        let p: f64 = t
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("cannot parse p from {s:?}")))?;
        PNorm::new(p)
    }
}

impl Serialize for PNorm {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            PNorm::Finite(p) => serializer.serialize_f64(*p),
            PNorm::Inf => serializer.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for PNorm {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Num(p) => PNorm::new(p).map_err(serde::de::Error::custom),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// `(sum |v_i|^p)^(1/p)`, or `max |v_i|` for `p = inf`.
pub fn vector_pnorm(v: &[f64], p: PNorm) -> f64 {
    match p {
        PNorm::Inf => v.iter().fold(0.0_f64, |m, x| m.max(x.abs())),
        PNorm::Finite(p) if p == 1.0 => v.iter().map(|x| x.abs()).sum(),
        PNorm::Finite(p) if p == 2.0 => scaled_two_norm(v),
        PNorm::Finite(p) => {
            // scale by the max entry so large p does not overflow
            let m = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
            if m == 0.0 {
                return 0.0;
            }
            let s: f64 = v.iter().map(|x| (x.abs() / m).powf(p)).sum();
            m * s.powf(1.0 / p)
        }
    }
}

/// `sum |v_i|^p` for finite p; the p-th power of [`vector_pnorm`].
pub fn vector_pnorm_pow(v: &[f64], p: PNorm) -> f64 {
    match p {
        PNorm::Finite(p) if p == 1.0 => v.iter().map(|x| x.abs()).sum(),
        PNorm::Finite(p) if p == 2.0 => v.iter().map(|x| x * x).sum(),
        PNorm::Finite(p) => v.iter().map(|x| x.abs().powf(p)).sum(),
        PNorm::Inf => vector_pnorm(v, p),
    }
}

fn scaled_two_norm(v: &[f64]) -> f64 {
    let m = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if m == 0.0 || !m.is_finite() {
        return m;
    }
    let s: f64 = v.iter().map(|x| (x / m) * (x / m)).sum();
    m * s.sqrt()
}
