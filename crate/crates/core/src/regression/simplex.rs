//! Dense bounded-variable simplex with Dantzig pricing and a Bland fallback.
//!
//! Solves `min c^T z` subject to `A z = b`, `0 <= z_j <= u_j` (`u_j` may be
//! infinite), with a phase one on artificial variables. The programs solved
//! here have few equality rows and many columns, so the revised form is used:
//! the basis is refactored every iteration and the basic values, multipliers
//! and reduced costs are recomputed from the original data, which keeps
//! round-off from accumulating over long pivot sequences.

use nalgebra::{DMatrix, DVector, Dyn, LU};

use crate::error::{Error, Result};

/// Reduced-cost tolerance, relative to the largest cost.
const RC_TOL: f64 = 1e-10;
/// Pivot tolerance, relative to the largest entry of the entering column.
const PIV_TOL: f64 = 1e-9;
/// Consecutive degenerate pivots after which pricing switches to Bland's
/// rule, which cannot cycle; it switches back after the next real step.
const DEGENERATE_RUN: usize = 50;

#[derive(Debug, Clone)]
pub(crate) struct LpSolution {
    #[allow(dead_code)]
    pub z: Vec<f64>,
    #[allow(dead_code)]
    pub objective: f64,
    /// Multipliers `y` of the equality rows: `c_j - a_j^T y` are the reduced costs.
    pub duals: Vec<f64>,
    pub iterations: usize,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Status {
    Basic,
    Lower,
    Upper,
}

struct Problem {
    m: usize,
    /// Structural columns; artificial column `nv + r` is `e_r`.
    nv: usize,
    /// Column-major structural matrix after row sign flips.
    cols: Vec<f64>,
    b: DVector<f64>,
    upper: Vec<f64>,
    basis: Vec<usize>,
    status: Vec<Status>,
    iterations: usize,
    degenerate: usize,
}

type Factor = LU<f64, Dyn, Dyn>;

impl Problem {
    fn n(&self) -> usize {
        self.nv + self.m
    }

    fn column(&self, j: usize) -> DVector<f64> {
        if j < self.nv {
            DVector::from_column_slice(&self.cols[j * self.m..(j + 1) * self.m])
        } else {
            let mut e = DVector::zeros(self.m);
            e[j - self.nv] = 1.0;
            e
        }
    }

    fn dot_column(&self, y: &DVector<f64>, j: usize) -> f64 {
        if j < self.nv {
            self.cols[j * self.m..(j + 1) * self.m].iter().zip(y.iter()).map(|(a, b)| a * b).sum()
        } else {
            y[j - self.nv]
        }
    }

    fn factor(&self) -> Result<Factor> {
        let m = self.m;
        let mut bm = DMatrix::zeros(m, m);
        for (k, &j) in self.basis.iter().enumerate() {
            bm.set_column(k, &self.column(j));
        }
        let lu = bm.lu();
        if !lu.is_invertible() {
            return Err(Error::SimplexStall { iterations: self.iterations, basis: self.basis.clone() });
        }
        Ok(lu)
    }

    /// Basic values `B^{-1} (b - sum_{j at upper} A_j u_j)`.
    fn basic_values(&self, lu: &Factor) -> Result<DVector<f64>> {
        let mut rhs = self.b.clone();
        for j in 0..self.n() {
            if self.status[j] == Status::Upper {
                rhs -= self.column(j) * self.upper[j];
            }
        }
        lu.solve(&rhs).ok_or_else(|| Error::SimplexStall { iterations: self.iterations, basis: self.basis.clone() })
    }

    /// `y` with `B^T y = c_B`.
    fn multipliers(&self, c: &[f64]) -> Result<DVector<f64>> {
        let cb = DVector::from_iterator(self.m, self.basis.iter().map(|&j| c[j]));
        let mut bt = DMatrix::zeros(self.m, self.m);
        for (k, &j) in self.basis.iter().enumerate() {
            bt.set_row(k, &self.column(j).transpose());
        }
        bt.lu()
            .solve(&cb)
            .ok_or_else(|| Error::SimplexStall { iterations: self.iterations, basis: self.basis.clone() })
    }

    /// One pricing step; columns `>= barred` never enter. False at optimality.
    fn step(&mut self, c: &[f64], barred: usize) -> Result<bool> {
        let lu = self.factor()?;
        let xb = self.basic_values(&lu)?;
        let y = self.multipliers(c)?;
        let tol = RC_TOL * c.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        // improvement rate of column j, positive when it may enter
        let gain = |j: usize| -> f64 {
            let rc = c[j] - self.dot_column(&y, j);
            match self.status[j] {
                Status::Basic => 0.0,
                Status::Lower if self.upper[j] > 0.0 && rc < -tol => -rc,
                Status::Upper if rc > tol => rc,
                _ => 0.0,
            }
        };
        let entering = if self.degenerate >= DEGENERATE_RUN {
            (0..barred).find(|&j| gain(j) > 0.0)
        } else {
            (0..barred)
                .map(|j| (j, gain(j)))
                .filter(|&(_, g)| g > 0.0)
                .fold(None, |best: Option<(usize, f64)>, (j, g)| match best {
                    Some((_, bg)) if bg >= g => best,
                    _ => Some((j, g)),
                })
                .map(|(j, _)| j)
        };
        let Some(j) = entering else { return Ok(false) };
        let dir = if self.status[j] == Status::Lower { 1.0 } else { -1.0 };
        let alpha = lu
            .solve(&self.column(j))
            .ok_or_else(|| Error::SimplexStall { iterations: self.iterations, basis: self.basis.clone() })?;
        let amax = alpha.iter().fold(0.0f64, |m, a| m.max(a.abs()));
        let ptol = PIV_TOL * amax.max(1.0);
        // basic values move by -dir * theta * alpha
        let mut best: Option<(f64, usize, Status)> = None;
        for r in 0..self.m {
            let a = alpha[r] * dir;
            let bj = self.basis[r];
            let cand = if a > ptol {
                Some((xb[r].max(0.0) / a, Status::Lower))
            } else if a < -ptol && self.upper[bj].is_finite() {
                Some(((self.upper[bj] - xb[r]).max(0.0) / -a, Status::Upper))
            } else {
                None
            };
            if let Some((theta, to)) = cand {
                let better = match best {
                    None => true,
                    Some((bt, br, _)) => theta < bt || (theta == bt && bj < self.basis[br]),
                };
                if better {
                    best = Some((theta, r, to));
                }
            }
        }
        let flip = self.upper[j];
        let step = best.map_or(flip, |(t, _, _)| t.min(flip));
        if step > 0.0 {
            self.degenerate = 0;
        } else {
            self.degenerate += 1;
        }
        match best {
            Some((theta, r, to)) if theta < flip => {
                let leaving = self.basis[r];
                self.status[leaving] = to;
                self.basis[r] = j;
                self.status[j] = Status::Basic;
            }
            _ if flip.is_finite() => {
                self.status[j] = if dir > 0.0 { Status::Upper } else { Status::Lower };
            }
            _ => return Err(Error::Invariant("linear program is unbounded".into())),
        }
        self.iterations += 1;
        Ok(true)
    }

    fn run(&mut self, c: &[f64], barred: usize, max_iter: usize) -> Result<()> {
        while self.step(c, barred)? {
            if self.iterations > max_iter {
                return Err(Error::SimplexStall { iterations: self.iterations, basis: self.basis.clone() });
            }
        }
        Ok(())
    }
}

/// `min c^T z, A z = b, 0 <= z <= upper` with `A` given row-major (`m x nv`).
pub(crate) fn solve_bounded(
    a: &[f64],
    m: usize,
    nv: usize,
    b: &[f64],
    c: &[f64],
    upper: &[f64],
) -> Result<LpSolution> {
    assert_eq!(a.len(), m * nv);
    let sign: Vec<f64> = b.iter().map(|&x| if x < 0.0 { -1.0 } else { 1.0 }).collect();
    let mut cols = vec![0.0; m * nv];
    for r in 0..m {
        for j in 0..nv {
            cols[j * m + r] = sign[r] * a[r * nv + j];
        }
    }
    let n = nv + m;
    let mut ub = upper.to_vec();
    ub.extend(std::iter::repeat(f64::INFINITY).take(m));
    let mut pb = Problem {
        m,
        nv,
        cols,
        b: DVector::from_iterator(m, b.iter().zip(&sign).map(|(x, s)| x * s)),
        upper: ub,
        basis: (nv..n).collect(),
        status: (0..n).map(|j| if j < nv { Status::Lower } else { Status::Basic }).collect(),
        iterations: 0,
        degenerate: 0,
    };
    let max_iter = 50 * (n + m) + 1000;

    // phase one
    let mut c1 = vec![0.0; n];
    c1[nv..].iter_mut().for_each(|x| *x = 1.0);
    pb.run(&c1, n, max_iter)?;
    let lu = pb.factor()?;
    let xb = pb.basic_values(&lu)?;
    let infeas: f64 = pb.basis.iter().zip(xb.iter()).filter(|(&j, _)| j >= nv).map(|(_, x)| x.abs()).sum();
    let bscale = b.iter().fold(1.0f64, |s, x| s.max(x.abs()));
    if infeas > 1e-7 * bscale {
        return Err(Error::Invariant(format!("linear program is infeasible (residual {infeas:.3e})")));
    }
    // swap zero-level artificials for structural columns where possible; the
    // rest sit on redundant rows
    for r in 0..m {
        if pb.basis[r] < nv {
            continue;
        }
        let lu = pb.factor()?;
        let found = (0..nv).filter(|&j| pb.status[j] != Status::Basic).find(|&j| {
            lu.solve(&pb.column(j)).is_some_and(|alpha| alpha[r].abs() > 1e-7)
        });
        if let Some(j) = found {
            let leaving = pb.basis[r];
            pb.status[leaving] = Status::Lower;
            pb.basis[r] = j;
            pb.status[j] = Status::Basic;
        }
    }
    for j in nv..n {
        pb.upper[j] = 0.0;
        if pb.status[j] != Status::Basic {
            pb.status[j] = Status::Lower;
        }
    }

    // phase two
    let mut c2 = c.to_vec();
    c2.extend(std::iter::repeat(0.0).take(m));
    pb.run(&c2, nv, max_iter)?;

    let lu = pb.factor()?;
    let xb = pb.basic_values(&lu)?;
    let mut z = vec![0.0; nv];
    for j in 0..nv {
        z[j] = match pb.status[j] {
            Status::Lower => 0.0,
            Status::Upper => upper[j],
            Status::Basic => xb[pb.basis.iter().position(|&b| b == j).expect("basic")],
        }
        .clamp(0.0, upper[j]);
    }
    let objective = z.iter().zip(c).map(|(x, c)| x * c).sum();
    let y = pb.multipliers(&c2)?;
    let duals = (0..m).map(|r| y[r] * sign[r]).collect();
    Ok(LpSolution { z, objective, duals, iterations: pb.iterations })
}
