//! Semidefinite relaxation of max-min SINR reflect-vector subproblems.
//!
//! A subproblem over a unit-modulus vector `theta` (length `M'`) has, for
//! every user `k` and every user `j`, a linear term `q_{k,j}^H theta +
//! qbar_{k,j}`. User `k`'s SINR is
//!
//! ```text
//!   |q_kk^H theta + qbar_kk|^2 / (sum_{j != k} |q_kj^H theta + qbar_kj|^2 + noise_k).
//! ```
//!
//! Homogenising with an auxiliary unit-modulus `t` and `theta~ = [theta t;
//! t]` turns each square into `theta~^H B_kj theta~ + |qbar_kj|^2` with
//! `B = [q q^H, q qbar; conj(qbar) q^H, 0]`; relaxing `theta~ theta~^H` to a
//! PSD `Psi` with unit diagonal gives a convex feasibility problem for any
//! fixed SINR target, and bisection on the target gives the relaxed
//! max-min value.

mod barrier;
mod bisection;
mod randomize;

use num_complex::Complex64;
use thiserror::Error;

use crate::linalg::{c64, CMat, CVec};

pub use bisection::{
    bisection_maxmin, feasibility_check, feasibility_check_with, max_hermitian_form,
    max_quadratic_form, upper_bracket, Bisection, RelaxedMax, DEFAULT_BISECTION_EPS,
    FEASIBILITY_TOL,
};
pub use randomize::{gaussian_randomization, randomize_with, Randomized, DEFAULT_CANDIDATES};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SdpError {
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("invalid bisection bracket: {0}")]
    InvalidBracket(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Data of one max-min SINR subproblem.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxMinSdpInstance {
    q: Vec<Vec<CVec>>,
    q_bar: Vec<Vec<Complex64>>,
    noise: Vec<f64>,
    dim: usize,
}

impl MaxMinSdpInstance {
    /// `q[k][j]`, `q_bar[k][j]` and `noise[k]` for users `k, j`.
    pub fn new(
        q: Vec<Vec<CVec>>,
        q_bar: Vec<Vec<Complex64>>,
        noise: Vec<f64>,
    ) -> Result<Self, SdpError> {
        let k = q.len();
        if k == 0 {
            return Err(SdpError::InvalidInstance("no users".into()));
        }
        if q_bar.len() != k
            || noise.len() != k
            || q.iter().any(|r| r.len() != k)
            || q_bar.iter().any(|r| r.len() != k)
        {
            return Err(SdpError::InvalidInstance(format!(
                "expected {k} x {k} coefficient tables"
            )));
        }
        let dim = q[0][0].len();
        if dim == 0 {
            return Err(SdpError::InvalidInstance(
                "reflect vector has zero length".into(),
            ));
        }
        for row in &q {
            for v in row {
                if v.len() != dim {
                    return Err(SdpError::InvalidInstance(
                        "coefficient vectors differ in length".into(),
                    ));
                }
                if v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                    return Err(SdpError::InvalidInstance("non-finite coefficient".into()));
                }
            }
        }
        if q_bar
            .iter()
            .flatten()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(SdpError::InvalidInstance("non-finite constant term".into()));
        }
        if noise.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(SdpError::InvalidInstance(
                "noise terms must be strictly positive".into(),
            ));
        }
        Ok(MaxMinSdpInstance {
            q,
            q_bar,
            noise,
            dim,
        })
    }

    pub fn users(&self) -> usize {
        self.q.len()
    }

    /// Length `M'` of the reflect vector.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn q(&self, k: usize, j: usize) -> &CVec {
        &self.q[k][j]
    }

    pub fn q_bar(&self, k: usize, j: usize) -> Complex64 {
        self.q_bar[k][j]
    }

    pub fn noise(&self, k: usize) -> f64 {
        self.noise[k]
    }

    /// Homogenised `(M'+1) x (M'+1)` matrix `B_{k,j}`.
    pub fn b_matrix(&self, k: usize, j: usize) -> CMat {
        let v = self.lifted(k, j);
        let mut b = &v * v.adjoint();
        b[(self.dim, self.dim)] = c64(0.0, 0.0);
        b
    }

    /// `[q; conj(qbar)]`, so that `B = v v^H - |qbar|^2 e e^T`.
    fn lifted(&self, k: usize, j: usize) -> CVec {
        let mut v = CVec::zeros(self.dim + 1);
        v.rows_mut(0, self.dim).copy_from(&self.q[k][j]);
        v[self.dim] = self.q_bar[k][j].conj();
        v
    }

    /// `|q_kj^H theta + qbar_kj|^2`.
    pub fn term(&self, k: usize, j: usize, theta: &CVec) -> f64 {
        (self.q[k][j].dotc(theta) + self.q_bar[k][j]).norm_sqr()
    }

    /// `theta~^H B_kj theta~ + |qbar_kj|^2`.
    pub fn homogenized_term(&self, k: usize, j: usize, theta_tilde: &CVec) -> f64 {
        (theta_tilde.dotc(&(self.b_matrix(k, j) * theta_tilde))).re + self.q_bar[k][j].norm_sqr()
    }

    /// `tr(B_kj Psi) + |qbar_kj|^2`, computed as `v^H Psi v + |qbar|^2 (1 -
    /// Psi_nn)`.
    pub fn relaxed_term(&self, k: usize, j: usize, psi: &CMat) -> f64 {
        let v = self.lifted(k, j);
        let last = psi[(self.dim, self.dim)].re;
        v.dotc(&(psi * &v)).re + self.q_bar[k][j].norm_sqr() * (1.0 - last)
    }

    pub fn sinr(&self, theta: &CVec) -> Result<Vec<f64>, SdpError> {
        if theta.len() != self.dim {
            return Err(SdpError::InvalidArgument(format!(
                "expected length {}, got {}",
                self.dim,
                theta.len()
            )));
        }
        Ok((0..self.users())
            .map(|k| {
                let interference: f64 = (0..self.users())
                    .filter(|&j| j != k)
                    .map(|j| self.term(k, j, theta))
                    .sum();
                self.term(k, k, theta) / (interference + self.noise[k])
            })
            .collect())
    }

    pub fn min_sinr(&self, theta: &CVec) -> Result<f64, SdpError> {
        Ok(self.sinr(theta)?.into_iter().fold(f64::INFINITY, f64::min))
    }

    /// Per-user ratio of relaxed signal to relaxed interference-plus-noise.
    pub fn relaxed_sinr(&self, psi: &CMat) -> Vec<f64> {
        (0..self.users())
            .map(|k| {
                let interference: f64 = (0..self.users())
                    .filter(|&j| j != k)
                    .map(|j| self.relaxed_term(k, j, psi))
                    .sum();
                self.relaxed_term(k, k, psi) / (interference + self.noise[k])
            })
            .collect()
    }

    /// Constraint margins `signal - delta (interference + noise)` of a
    /// relaxed solution at target `delta`.
    pub fn margins(&self, psi: &CMat, delta: f64) -> Vec<f64> {
        (0..self.users())
            .map(|k| {
                let interference: f64 = (0..self.users())
                    .filter(|&j| j != k)
                    .map(|j| self.relaxed_term(k, j, psi))
                    .sum();
                self.relaxed_term(k, k, psi) - delta * (interference + self.noise[k])
            })
            .collect()
    }

    /// Recover `theta = conj(t) theta~[..M']` from a homogenised vector.
    pub fn recover_theta(&self, theta_tilde: &CVec) -> Result<CVec, SdpError> {
        if theta_tilde.len() != self.dim + 1 {
            return Err(SdpError::InvalidArgument(format!(
                "expected homogenised length {}, got {}",
                self.dim + 1,
                theta_tilde.len()
            )));
        }
        let t = theta_tilde[self.dim];
        if !(t.norm() > 0.0) {
            return Err(SdpError::InvalidArgument("auxiliary entry is zero".into()));
        }
        let phase = (t / t.norm()).conj();
        Ok(theta_tilde.rows(0, self.dim).map(|z| z * phase))
    }

    /// Constraint data normalised by the noise term:
    /// `A_k = (B_kk - delta sum_{j != k} B_kj) / noise_k`,
    /// `c_k = (|qbar_kk|^2 - delta (sum_{j != k} |qbar_kj|^2 + noise_k)) / noise_k`.
    pub(crate) fn normalized(&self, delta: f64) -> (Vec<CMat>, Vec<f64>) {
        let kk = self.users();
        let mut a = Vec::with_capacity(kk);
        let mut c = Vec::with_capacity(kk);
        for k in 0..kk {
            let mut ak = self.b_matrix(k, k);
            let mut ck = self.q_bar[k][k].norm_sqr();
            for j in (0..kk).filter(|&j| j != k) {
                ak -= self.b_matrix(k, j) * c64(delta, 0.0);
                ck -= delta * self.q_bar[k][j].norm_sqr();
            }
            ck -= delta * self.noise[k];
            let inv = 1.0 / self.noise[k];
            a.push(ak * c64(inv, 0.0));
            c.push(ck * inv);
        }
        (a, c)
    }

    /// Flatten to named matrices for [`crate::matio`].
    pub fn to_matrices(&self) -> Vec<(String, CMat)> {
        let kk = self.users();
        let mut out = Vec::new();
        let mut qb = CMat::zeros(kk, kk);
        for k in 0..kk {
            let mut qk = CMat::zeros(self.dim, kk);
            for j in 0..kk {
                qk.column_mut(j).copy_from(&self.q[k][j]);
                qb[(k, j)] = self.q_bar[k][j];
            }
            out.push((format!("q{k}"), qk));
        }
        out.push(("q_bar".into(), qb));
        out.push((
            "noise".into(),
            CMat::from_iterator(kk, 1, self.noise.iter().map(|&s| c64(s, 0.0))),
        ));
        out
    }

    pub fn from_matrices(mats: &[(String, CMat)]) -> Result<Self, SdpError> {
        let find = |name: &str| {
            mats.iter()
                .find(|(n, _)| n == name)
                .map(|(_, m)| m)
                .ok_or_else(|| SdpError::InvalidInstance(format!("missing matrix '{name}'")))
        };
        let qb = find("q_bar")?;
        let noise = find("noise")?;
        let kk = qb.nrows();
        if qb.ncols() != kk || noise.shape() != (kk, 1) {
            return Err(SdpError::InvalidInstance("inconsistent table sizes".into()));
        }
        let mut q = Vec::with_capacity(kk);
        for k in 0..kk {
            let qk = find(&format!("q{k}"))?;
            if qk.ncols() != kk {
                return Err(SdpError::InvalidInstance(format!(
                    "q{k} must have {kk} columns"
                )));
            }
            q.push((0..kk).map(|j| qk.column(j).into_owned()).collect());
        }
        let q_bar = (0..kk)
            .map(|k| (0..kk).map(|j| qb[(k, j)]).collect())
            .collect();
        Self::new(q, q_bar, noise.iter().map(|z| z.re).collect())
    }
}

/// Outcome of a feasibility check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeasibilityStatus {
    Feasible,
    Infeasible,
    NumericalFailure,
}

/// Relaxed solution of a feasibility check.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdSolution {
    pub psi: CMat,
    pub status: FeasibilityStatus,
    /// Per-user `signal - delta (interference + noise)` at `psi`.
    pub margins: Vec<f64>,
    pub newton_steps: usize,
}
