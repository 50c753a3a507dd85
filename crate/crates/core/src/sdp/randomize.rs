use rand::Rng;

use super::{MaxMinSdpInstance, SdpError};
use crate::linalg::{align_phases, c64, complex_gaussian, CMat, CVec};

/// Default number of Gaussian candidates.
pub const DEFAULT_CANDIDATES: usize = 100;

/// Best rank-one candidate extracted from a relaxed solution.
#[derive(Debug, Clone, PartialEq)]
pub struct Randomized {
    /// Unit-modulus homogenised vector.
    pub theta_tilde: CVec,
    /// Recovered reflect vector.
    pub theta: CVec,
    /// True minimum SINR of `theta`.
    pub min_sinr: f64,
}

/// Draw `candidates` vectors `xi ~ CN(0, Psi)`, project each entry to unit
/// modulus, recover the reflect vector and keep the one with the largest
/// true minimum SINR.
pub fn gaussian_randomization<R: Rng + ?Sized>(
    psi: &CMat,
    inst: &MaxMinSdpInstance,
    candidates: usize,
    rng: &mut R,
) -> Result<Randomized, SdpError> {
    let n = inst.dim() + 1;
    if psi.shape() != (n, n) {
        return Err(SdpError::InvalidArgument(format!(
            "expected a {n} x {n} relaxed solution"
        )));
    }
    let mut failure = None;
    let (theta_tilde, _) = randomize_with(psi, candidates, rng, |tilde| {
        match inst.recover_theta(tilde).and_then(|th| inst.min_sinr(&th)) {
            Ok(v) => v,
            Err(e) => {
                failure = Some(e);
                f64::NEG_INFINITY
            }
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    let theta = inst.recover_theta(&theta_tilde)?;
    let min_sinr = inst.min_sinr(&theta)?;
    Ok(Randomized {
        theta_tilde,
        theta,
        min_sinr,
    })
}

/// Gaussian randomization against an arbitrary objective: returns the
/// unit-modulus projection of `xi ~ CN(0, Psi)` with the largest objective
/// among `candidates` draws.
pub fn randomize_with<R, F>(
    psi: &CMat,
    candidates: usize,
    rng: &mut R,
    mut objective: F,
) -> Result<(CVec, f64), SdpError>
where
    R: Rng + ?Sized,
    F: FnMut(&CVec) -> f64,
{
    if candidates < 1 {
        return Err(SdpError::InvalidArgument(
            "at least one randomization candidate is required".into(),
        ));
    }
    if psi.nrows() != psi.ncols() || psi.nrows() == 0 {
        return Err(SdpError::InvalidArgument(
            "relaxed solution must be a non-empty square matrix".into(),
        ));
    }
    let n = psi.nrows();
    let eig = psi.clone().symmetric_eigen();
    let mut factor = eig.eigenvectors;
    // eigenvalues at rounding level are treated as exact zeros so that a
    // rank-one relaxation yields its rank-one vector exactly
    let floor = 1e-12 * eig.eigenvalues.amax();
    for (i, &lam) in eig.eigenvalues.iter().enumerate() {
        let s = c64(if lam > floor { lam.sqrt() } else { 0.0 }, 0.0);
        let mut col = factor.column_mut(i);
        col *= s;
    }

    let mut best: Option<(CVec, f64)> = None;
    for _ in 0..candidates {
        let r = CVec::from_fn(n, |_, _| complex_gaussian(rng));
        let x = align_phases(&(&factor * r));
        let value = objective(&x);
        if best.as_ref().is_none_or(|(_, b)| value > *b) {
            best = Some((x, value));
        }
    }
    Ok(best.expect("at least one candidate"))
}
