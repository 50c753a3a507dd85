//! Dual log-barrier path-following for the margin SDP
//!
//! ```text
//!   maximize  s
//!   s.t.      tr(A_k Psi) + c_k >= s d_k,   k = 1..K
//!             diag(Psi) = 1,  Psi Hermitian PSD
//! ```
//!
//! whose dual is
//!
//! ```text
//!   minimize  sum(nu) + sum_k lambda_k c_k
//!   s.t.      sum_k lambda_k d_k = 1,  lambda >= 0,
//!             S = Diag(nu) - sum_k lambda_k A_k  PSD.
//! ```
//!
//! Newton steps work on the (nu, lambda) dual with an equality-constrained
//! KKT system. Every iterate gives a valid upper bound `g` (the dual
//! value) and a primal point `Psi = D^{-1/2} S^{-1} D^{-1/2}`, `D =
//! diag(S^{-1})`, giving a lower bound. Both bounds are exact certificates,
//! so the sign of the optimum can be decided as soon as one of them
//! crosses the tolerance.

use nalgebra::{DMatrix, DVector};

use super::SdpError;
use crate::linalg::CMat;

const MAX_NEWTON_STEPS: usize = 600;
const BARRIER_GROWTH: f64 = 8.0;
const CENTERING_TOL: f64 = 1e-9;

/// What the caller needs from a solve.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Goal {
    /// Decide whether the optimum is `>= -tau`.
    Sign { tau: f64 },
    /// Close the duality gap to `rel_tol * max(1, |dual|)`.
    Optimum { rel_tol: f64 },
}

#[derive(Debug, Clone)]
pub(crate) struct Outcome {
    pub psi: CMat,
    /// Objective of `psi` (lower bound on the optimum).
    pub primal: f64,
    /// Dual value (upper bound on the optimum).
    pub dual: f64,
    pub newton_steps: usize,
    /// For [`Goal::Sign`]: whether the optimum was judged `>= -tau`.
    pub nonnegative: Option<bool>,
}

struct Problem<'a> {
    a: &'a [CMat],
    c: &'a [f64],
    d: &'a [f64],
    n: usize,
}

impl Problem<'_> {
    fn slack(&self, nu: &[f64], lam: &[f64]) -> CMat {
        let mut s = CMat::zeros(self.n, self.n);
        for (ak, &l) in self.a.iter().zip(lam) {
            s.zip_apply(ak, |x, y| *x -= y * l);
        }
        for i in 0..self.n {
            s[(i, i)] += nu[i];
        }
        s
    }

    /// Upper bound `(sum(nu) + lambda . c) / (lambda . d)`, valid for any
    /// `lambda >= 0` with `S` PSD; the division absorbs rounding drift in
    /// the equality constraint.
    fn dual_value(&self, nu: &[f64], lam: &[f64]) -> f64 {
        let w: f64 = lam.iter().zip(self.d).map(|(l, d)| l * d).sum();
        (nu.iter().sum::<f64>() + lam.iter().zip(self.c).map(|(l, c)| l * c).sum::<f64>()) / w
    }

    /// Barrier objective; uses the unnormalised dual value, whose gradient
    /// the Newton system is built from.
    fn barrier(&self, t: f64, nu: &[f64], lam: &[f64], logdet: f64) -> f64 {
        let raw = nu.iter().sum::<f64>() + lam.iter().zip(self.c).map(|(l, c)| l * c).sum::<f64>();
        t * raw - logdet - lam.iter().map(|l| l.ln()).sum::<f64>()
    }

    /// Minimum normalised margin of a diag-one PSD matrix.
    fn primal_value(&self, psi: &CMat) -> f64 {
        self.a
            .iter()
            .zip(self.c.iter().zip(self.d))
            .map(|(ak, (ck, dk))| (trace_product(ak, psi) + ck) / dk)
            .fold(f64::INFINITY, f64::min)
    }
}

/// `Re tr(A B)` for Hermitian `A`, `B`.
pub(crate) fn trace_product(a: &CMat, b: &CMat) -> f64 {
    let n = a.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += (a[(i, j)] * b[(j, i)]).re;
        }
    }
    acc
}

/// Cholesky-based inverse and log-determinant of a Hermitian PD matrix.
fn inverse_logdet(s: &CMat) -> Option<(CMat, f64)> {
    let chol = s.clone().cholesky()?;
    let l = chol.l_dirty();
    let mut logdet = 0.0;
    for i in 0..s.nrows() {
        let v = l[(i, i)].re;
        if !(v > 0.0) || !v.is_finite() {
            return None;
        }
        logdet += 2.0 * v.ln();
    }
    let inv = chol.inverse();
    if inv.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return None;
    }
    Some((inv, logdet))
}

fn normalise_diagonal(x: &CMat) -> Option<CMat> {
    let n = x.nrows();
    let scale: Vec<f64> = (0..n).map(|i| x[(i, i)].re).collect();
    if scale.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return None;
    }
    let inv_sqrt: Vec<f64> = scale.iter().map(|v| 1.0 / v.sqrt()).collect();
    let mut psi = CMat::from_fn(n, n, |i, j| x[(i, j)] * (inv_sqrt[i] * inv_sqrt[j]));
    for i in 0..n {
        psi[(i, i)] = crate::linalg::c64(1.0, 0.0);
    }
    // exact Hermitian symmetry
    let psi_h = psi.adjoint();
    psi = (psi + psi_h) * crate::linalg::c64(0.5, 0.0);
    Some(psi)
}

pub(crate) fn solve(a: &[CMat], c: &[f64], d: &[f64], goal: Goal) -> Result<Outcome, SdpError> {
    let k = a.len();
    if k == 0 || c.len() != k || d.len() != k {
        return Err(SdpError::InvalidInstance(
            "margin problem needs matching non-empty data".into(),
        ));
    }
    let n = a[0].nrows();
    if d.iter().any(|&v| !(v > 0.0)) {
        return Err(SdpError::InvalidInstance(
            "constraint weights must be positive".into(),
        ));
    }
    let p = Problem { a, c, d, n };
    let m = (n + k) as f64;

    let d_sum: f64 = d.iter().sum();
    let mut lam = vec![1.0 / d_sum; k];
    let weighted = p.slack(&vec![0.0; n], &lam);
    let mut nu: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| weighted[(i, j)].norm()).sum::<f64>() + 1.0)
        .collect();

    let (mut x, mut logdet) = inverse_logdet(&p.slack(&nu, &lam)).ok_or_else(|| {
        SdpError::NumericalFailure("initial dual point is not positive definite".into())
    })?;
    let mut g = p.dual_value(&nu, &lam);
    let mut t = m / g.abs().max(1e-12);
    let mut steps = 0usize;
    let mut best: Option<(CMat, f64)> = None;
    // set once a Newton step could not make progress in floating point
    let mut stalled = false;

    loop {
        // centering for the current t
        loop {
            if let Some(psi) = normalise_diagonal(&x) {
                let sp = p.primal_value(&psi);
                if best.as_ref().is_none_or(|(_, b)| sp > *b) {
                    best = Some((psi, sp));
                }
            }
            let (psi, sp) = best
                .clone()
                .ok_or_else(|| SdpError::NumericalFailure("no primal point".into()))?;
            match goal {
                Goal::Sign { tau } => {
                    let verdict = if sp >= -tau {
                        Some(true)
                    } else if g < -tau {
                        Some(false)
                    } else if g - sp < 0.1 * tau {
                        Some(0.5 * (g + sp) >= -tau)
                    } else if (stalled || steps >= MAX_NEWTON_STEPS) && g - sp <= 100.0 * tau {
                        // the optimum lies within a few tau of the threshold
                        // and precision allows no further progress; without
                        // a certifying primal point the answer is "no"
                        Some(false)
                    } else if m / t < 1e-3 * tau {
                        // the primal recovery is precision-limited here, but
                        // the dual value is within m/t of the optimum
                        Some(g >= -tau)
                    } else {
                        None
                    };
                    if let Some(v) = verdict {
                        return Ok(Outcome {
                            psi,
                            primal: sp,
                            dual: g,
                            newton_steps: steps,
                            nonnegative: Some(v),
                        });
                    }
                }
                Goal::Optimum { rel_tol } => {
                    if g - sp <= rel_tol * g.abs().max(1.0) {
                        return Ok(Outcome {
                            psi,
                            primal: sp,
                            dual: g,
                            newton_steps: steps,
                            nonnegative: None,
                        });
                    }
                }
            }
            if steps >= MAX_NEWTON_STEPS {
                return Err(SdpError::NumericalFailure(format!(
                    "no decision after {steps} Newton steps (primal {sp:.3e}, dual {g:.3e})"
                )));
            }

            // gradient and Hessian of t*g - logdet(S) - sum log(lambda)
            let dim = n + k;
            let mut grad = DVector::<f64>::zeros(dim);
            let mut hess = DMatrix::<f64>::zeros(dim, dim);
            let y: Vec<CMat> = a.iter().map(|ak| &x * ak).collect();
            for i in 0..n {
                grad[i] = t - x[(i, i)].re;
                for j in 0..n {
                    hess[(i, j)] = x[(i, j)].norm_sqr();
                }
            }
            for kk in 0..k {
                let trace_xa: f64 = (0..n).map(|i| y[kk][(i, i)].re).sum();
                grad[n + kk] = t * c[kk] + trace_xa - 1.0 / lam[kk];
                for i in 0..n {
                    // (X A_k X)_ii = sum_j Y_k[i, j] X[j, i]
                    let v: f64 = (0..n).map(|j| (y[kk][(i, j)] * x[(j, i)]).re).sum();
                    hess[(i, n + kk)] = -v;
                    hess[(n + kk, i)] = -v;
                }
                for l in kk..k {
                    let v = trace_product_general(&y[kk], &y[l]);
                    hess[(n + kk, n + l)] = v;
                    hess[(n + l, n + kk)] = v;
                }
                hess[(n + kk, n + kk)] += 1.0 / (lam[kk] * lam[kk]);
            }

            // equality-constrained Newton step; the KKT system is solved after
            // symmetric diagonal scaling, since nu- and lambda-blocks of the
            // Hessian differ by many orders of magnitude late in the path
            let scale: Vec<f64> = (0..dim)
                .map(|i| 1.0 / hess[(i, i)].max(f64::MIN_POSITIVE).sqrt())
                .collect();
            let d_norm = (0..k)
                .map(|kk| (d[kk] * scale[n + kk]).powi(2))
                .sum::<f64>()
                .sqrt();
            let mut kkt = DMatrix::<f64>::zeros(dim + 1, dim + 1);
            for i in 0..dim {
                for j in 0..dim {
                    kkt[(i, j)] = hess[(i, j)] * scale[i] * scale[j];
                }
            }
            for kk in 0..k {
                let v = d[kk] * scale[n + kk] / d_norm;
                kkt[(n + kk, dim)] = v;
                kkt[(dim, n + kk)] = v;
            }
            let mut rhs = DVector::<f64>::zeros(dim + 1);
            for i in 0..dim {
                rhs[i] = -grad[i] * scale[i];
            }
            let sol = kkt
                .lu()
                .solve(&rhs)
                .filter(|v| v.iter().all(|z| z.is_finite()))
                .ok_or_else(|| SdpError::NumericalFailure("singular Newton system".into()))?;
            let sol = DVector::from_fn(dim, |i, _| sol[i] * scale[i]);
            let dx = sol;
            let slope = grad.dot(&dx);
            if -slope / 2.0 <= CENTERING_TOL {
                break;
            }

            // backtracking line search keeping S PD and lambda > 0
            let mut alpha: f64 = 1.0;
            for kk in 0..k {
                if dx[n + kk] < 0.0 {
                    alpha = alpha.min(-0.99 * lam[kk] / dx[n + kk]);
                }
            }
            let f0 = p.barrier(t, &nu, &lam, logdet);
            // inside the quadratic-convergence region the full step is taken
            // without a descent test, which rounding in f would defeat
            let trust_full_step = -slope < 0.25;
            let mut accepted = false;
            while alpha > 1e-14 {
                let nu_new: Vec<f64> = (0..n).map(|i| nu[i] + alpha * dx[i]).collect();
                let lam_new: Vec<f64> = (0..k).map(|kk| lam[kk] + alpha * dx[n + kk]).collect();
                if lam_new.iter().all(|&l| l > 0.0) {
                    if let Some((x_new, ld_new)) = inverse_logdet(&p.slack(&nu_new, &lam_new)) {
                        let f_new = p.barrier(t, &nu_new, &lam_new, ld_new);
                        if (trust_full_step && alpha == 1.0) || f_new <= f0 + 0.25 * alpha * slope {
                            let g_new = p.dual_value(&nu_new, &lam_new);
                            nu = nu_new;
                            lam = lam_new;
                            x = x_new;
                            logdet = ld_new;
                            g = g_new;
                            accepted = true;
                            break;
                        }
                    }
                }
                alpha *= 0.5;
            }
            steps += 1;
            if !accepted {
                // limited by floating-point precision: treat as centred
                stalled = true;
                break;
            }
        }

        if let Goal::Optimum { rel_tol } = goal {
            if m / t <= 0.1 * rel_tol * g.abs().max(1.0) {
                let (psi, sp) = best.clone().expect("primal point recorded");
                return Ok(Outcome {
                    psi,
                    primal: sp,
                    dual: g,
                    newton_steps: steps,
                    nonnegative: None,
                });
            }
        }
        if m / t < 1e-15 * g.abs().max(1.0) {
            return Err(SdpError::NumericalFailure(
                "barrier parameter exhausted without a decision".into(),
            ));
        }
        t *= BARRIER_GROWTH;
    }
}

/// `Re tr(A B)` for general square `A`, `B`.
fn trace_product_general(a: &CMat, b: &CMat) -> f64 {
    let n = a.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += (a[(i, j)] * b[(j, i)]).re;
        }
    }
    acc
}
