use super::barrier::{self, Goal};
use super::{FeasibilityStatus, MaxMinSdpInstance, PsdSolution, SdpError};
use crate::linalg::CMat;

/// Normalised constraint slack accepted as feasible.
pub const FEASIBILITY_TOL: f64 = 1e-6;
/// Absolute bisection accuracy on the SINR target.
pub const DEFAULT_BISECTION_EPS: f64 = 0.1;

/// Relaxed feasibility of SINR target `delta` for every user.
///
/// At `delta = 0` the identity is returned directly (every relaxed signal
/// term is a PSD quadratic form). A numerical failure is reported through
/// the status, never as `Infeasible`.
pub fn feasibility_check(inst: &MaxMinSdpInstance, delta: f64) -> Result<PsdSolution, SdpError> {
    feasibility_check_with(inst, delta, FEASIBILITY_TOL)
}

pub fn feasibility_check_with(
    inst: &MaxMinSdpInstance,
    delta: f64,
    tol: f64,
) -> Result<PsdSolution, SdpError> {
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(SdpError::InvalidArgument(format!(
            "SINR target must be finite and >= 0, got {delta}"
        )));
    }
    let n = inst.dim() + 1;
    if delta == 0.0 {
        let psi = CMat::identity(n, n);
        let margins = inst.margins(&psi, 0.0);
        return Ok(PsdSolution {
            psi,
            status: FeasibilityStatus::Feasible,
            margins,
            newton_steps: 0,
        });
    }
    let (a, c) = inst.normalized(delta);
    let d = vec![1.0 + delta; inst.users()];
    match barrier::solve(&a, &c, &d, Goal::Sign { tau: tol }) {
        Ok(out) => {
            let status = if out.nonnegative == Some(true) {
                FeasibilityStatus::Feasible
            } else {
                FeasibilityStatus::Infeasible
            };
            let margins = inst.margins(&out.psi, delta);
            Ok(PsdSolution {
                psi: out.psi,
                status,
                margins,
                newton_steps: out.newton_steps,
            })
        }
        Err(SdpError::NumericalFailure(_)) => Ok(PsdSolution {
            psi: CMat::identity(n, n),
            status: FeasibilityStatus::NumericalFailure,
            margins: Vec::new(),
            newton_steps: 0,
        }),
        Err(e) => Err(e),
    }
}

/// Interference-free upper bound on every user's relaxed SINR,
/// `min_k (‖q_kk‖_1 + |qbar_kk|)^2 / noise_k`. It bounds the relaxation
/// too, since unit-diagonal PSD matrices have entries of modulus <= 1.
pub fn upper_bracket(inst: &MaxMinSdpInstance) -> f64 {
    (0..inst.users())
        .map(|k| {
            let l1: f64 = inst.q(k, k).iter().map(|z| z.norm()).sum();
            (l1 + inst.q_bar(k, k).norm()).powi(2) / inst.noise(k)
        })
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bisection {
    /// Largest target found feasible.
    pub delta: f64,
    /// Relaxed solution at `delta`.
    pub psi: CMat,
    /// Smallest target found infeasible (or the initial upper end when
    /// saturated); the relaxed optimum lies below it.
    pub upper: f64,
    /// The upper end of the bracket was already feasible.
    pub saturated: bool,
    /// Feasibility checks at the upper end and at midpoints.
    pub steps: usize,
}

/// Bisection for the largest relaxed-feasible SINR target in `[lo, hi]`,
/// stopping once the bracket is narrower than `eps` (absolute).
pub fn bisection_maxmin(
    inst: &MaxMinSdpInstance,
    lo: f64,
    hi: f64,
    eps: f64,
) -> Result<Bisection, SdpError> {
    if !(lo >= 0.0) || !hi.is_finite() || !(hi > lo) {
        return Err(SdpError::InvalidBracket(format!(
            "need 0 <= lo < hi < inf, got [{lo}, {hi}]"
        )));
    }
    if !(eps > 0.0) {
        return Err(SdpError::InvalidBracket(format!(
            "accuracy must be positive, got {eps}"
        )));
    }
    let check = |delta: f64| -> Result<PsdSolution, SdpError> {
        let sol = feasibility_check(inst, delta)?;
        if sol.status == FeasibilityStatus::NumericalFailure {
            return Err(SdpError::NumericalFailure(format!(
                "feasibility check at target {delta:.6e} failed"
            )));
        }
        Ok(sol)
    };

    let top = check(hi)?;
    if top.status == FeasibilityStatus::Feasible {
        return Ok(Bisection {
            delta: hi,
            psi: top.psi,
            upper: hi,
            saturated: true,
            steps: 1,
        });
    }
    let (mut lo, mut hi) = (lo, hi);
    let mut steps = 1;
    let mut best: Option<CMat> = None;
    while hi - lo > eps {
        let mid = 0.5 * (lo + hi);
        let sol = check(mid)?;
        steps += 1;
        if sol.status == FeasibilityStatus::Feasible {
            lo = mid;
            best = Some(sol.psi);
        } else {
            hi = mid;
        }
    }
    let psi = match best {
        Some(psi) => psi,
        None => {
            let sol = check(lo)?;
            if sol.status != FeasibilityStatus::Feasible {
                return Err(SdpError::InvalidBracket(format!(
                    "lower end {lo} is infeasible"
                )));
            }
            sol.psi
        }
    };
    Ok(Bisection {
        delta: lo,
        psi,
        upper: hi,
        saturated: false,
        steps,
    })
}

/// Relaxed maximum of a single user's SINR without interference,
/// `max (tr(B Psi) + |qbar|^2) / noise` over unit-diagonal PSD `Psi`.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxedMax {
    pub psi: CMat,
    /// Value achieved by `psi`.
    pub value: f64,
    /// Certified upper bound on the relaxed maximum.
    pub upper_bound: f64,
}

pub fn max_quadratic_form(inst: &MaxMinSdpInstance) -> Result<RelaxedMax, SdpError> {
    if inst.users() != 1 {
        return Err(SdpError::InvalidInstance(format!(
            "expected a single-user instance, got {} users",
            inst.users()
        )));
    }
    let (a, c) = inst.normalized(0.0);
    let out = barrier::solve(&a, &c, &[1.0], Goal::Optimum { rel_tol: 1e-9 })?;
    Ok(RelaxedMax {
        psi: out.psi,
        value: out.primal,
        upper_bound: out.dual,
    })
}

/// Relaxed maximum of a Hermitian form, `max tr(A Psi)` over
/// unit-diagonal PSD `Psi`; an upper bound on `max x^H A x` over
/// unit-modulus `x`.
pub fn max_hermitian_form(a: &CMat) -> Result<RelaxedMax, SdpError> {
    if a.nrows() != a.ncols() || a.nrows() == 0 {
        return Err(SdpError::InvalidInstance(
            "form must be a non-empty square matrix".into(),
        ));
    }
    let scale = a.norm().max(f64::MIN_POSITIVE);
    let a_n = a * crate::linalg::c64(1.0 / scale, 0.0);
    let out = barrier::solve(&[a_n], &[0.0], &[1.0], Goal::Optimum { rel_tol: 1e-9 })?;
    Ok(RelaxedMax {
        psi: out.psi,
        value: out.primal * scale,
        upper_bound: out.dual * scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c64, CVec};
    use crate::sdp::tests::random_instance;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar_instance(
        q: num_complex::Complex64,
        q_bar: num_complex::Complex64,
        noise: f64,
    ) -> MaxMinSdpInstance {
        MaxMinSdpInstance::new(
            vec![vec![CVec::from_element(1, q)]],
            vec![vec![q_bar]],
            vec![noise],
        )
        .unwrap()
    }

    #[test]
    fn zero_target_is_feasible_with_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let inst = random_instance(3, 4, &mut rng);
        let sol = feasibility_check(&inst, 0.0).unwrap();
        assert_eq!(sol.status, FeasibilityStatus::Feasible);
        assert_eq!(sol.psi, CMat::identity(5, 5));
        assert!(sol.margins.iter().all(|&m| m >= 0.0));
        assert!(feasibility_check(&inst, -1.0).is_err());
    }

    #[test]
    fn scalar_instance_boundary() {
        // one element: max_theta |q^* theta + qbar|^2 = (|q| + |qbar|)^2
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let q = c64(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let qb = c64(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let noise = rng.random_range(0.1..2.0);
            let inst = scalar_instance(q, qb, noise);
            let opt = (q.norm() + qb.norm()).powi(2) / noise;
            assert!((upper_bracket(&inst) - opt).abs() < 1e-12 * opt);
            assert_eq!(
                feasibility_check(&inst, 0.98 * opt).unwrap().status,
                FeasibilityStatus::Feasible
            );
            assert_eq!(
                feasibility_check(&inst, 1.02 * opt).unwrap().status,
                FeasibilityStatus::Infeasible
            );
            let eps = 1e-4;
            let b = bisection_maxmin(&inst, 0.0, 2.0 * opt, eps).unwrap();
            // the feasibility slack admits targets up to FEASIBILITY_TOL (1 + delta) too high
            let slack = 2.0 * FEASIBILITY_TOL * (1.0 + opt);
            assert!(
                b.delta <= opt + slack && b.delta >= opt - eps - slack,
                "{} vs {opt}",
                b.delta
            );
            let bound = ((2.0 * opt) / eps).log2().ceil() as usize + 1;
            assert!(b.steps <= bound);
        }
    }

    #[test]
    fn above_matched_filter_bound_is_infeasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let inst = random_instance(2, 3, &mut rng);
            let ub = upper_bracket(&inst);
            assert_eq!(
                feasibility_check(&inst, 1.01 * ub).unwrap().status,
                FeasibilityStatus::Infeasible
            );
        }
    }

    #[test]
    fn feasibility_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let inst = random_instance(2, 3, &mut rng);
            let b = bisection_maxmin(&inst, 0.0, upper_bracket(&inst), 1e-3).unwrap();
            if b.delta > 0.0 {
                let half = feasibility_check(&inst, b.delta / 2.0).unwrap();
                assert_eq!(half.status, FeasibilityStatus::Feasible);
            }
        }
    }

    #[test]
    fn feasible_solutions_satisfy_constraints() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let inst = random_instance(3, 4, &mut rng);
            let b = bisection_maxmin(&inst, 0.0, upper_bracket(&inst), 1e-3).unwrap();
            let sol = feasibility_check(&inst, b.delta).unwrap();
            assert_eq!(sol.status, FeasibilityStatus::Feasible);
            let eig = sol.psi.clone().symmetric_eigen();
            assert!(eig.eigenvalues.min() >= -1e-7 * sol.psi.norm());
            for i in 0..5 {
                assert!((sol.psi[(i, i)].re - 1.0).abs() < 1e-6);
            }
            for (k, m) in sol.margins.iter().enumerate() {
                let scale = (1.0 + b.delta) * inst.noise(k);
                assert!(*m >= -2.0 * FEASIBILITY_TOL * scale, "user {k}: margin {m}");
            }
        }
    }

    #[test]
    fn saturated_bracket_is_flagged() {
        let inst = scalar_instance(c64(1.0, 0.0), c64(0.0, 1.0), 1.0);
        let b = bisection_maxmin(&inst, 0.0, 1.0, 0.1).unwrap();
        assert!(b.saturated);
        assert_eq!(b.delta, 1.0);
        assert_eq!(b.steps, 1);
    }

    #[test]
    fn invalid_brackets_rejected() {
        let inst = scalar_instance(c64(1.0, 0.0), c64(0.0, 0.0), 1.0);
        assert!(matches!(
            bisection_maxmin(&inst, 2.0, 1.0, 0.1),
            Err(SdpError::InvalidBracket(_))
        ));
        assert!(matches!(
            bisection_maxmin(&inst, 0.0, 1.0, 0.0),
            Err(SdpError::InvalidBracket(_))
        ));
        assert!(matches!(
            bisection_maxmin(&inst, 1.5, 3.0, 0.1),
            Err(SdpError::InvalidBracket(_))
        ));
    }

    #[test]
    fn hermitian_form_bound_dominates_unit_modulus_vectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let g = crate::linalg::complex_gaussian_matrix(3, 4, &mut rng);
        let a = g.adjoint() * &g;
        let r = max_hermitian_form(&a).unwrap();
        for _ in 0..200 {
            let x = crate::linalg::random_phases(4, &mut rng);
            assert!(x.dotc(&(&a * &x)).re <= r.upper_bound * (1.0 + 1e-9));
        }
        assert!(r.value <= r.upper_bound * (1.0 + 1e-12));
    }

    #[test]
    fn relaxed_max_of_scalar_instance() {
        let inst = scalar_instance(c64(0.6, -0.8), c64(2.0, 0.0), 0.5);
        let r = max_quadratic_form(&inst).unwrap();
        let opt = (1.0f64 + 2.0).powi(2) / 0.5;
        assert!((r.value - opt).abs() < 1e-8 * opt);
        assert!(r.upper_bound >= r.value * (1.0 - 1e-12));
    }
}
