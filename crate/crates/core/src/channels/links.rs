use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{c64, complex_gaussian_matrix, phasor, CMat, CVec};

/// Distance-dependent path loss `gamma0 / d^alpha` as a linear power gain,
/// with the reference loss at 1 m given in dB.
pub fn path_loss_linear(distance: f64, exponent: f64, ref_loss_db: f64) -> Result<f64> {
    if !(distance > 0.0) || !distance.is_finite() {
        return Err(Error::Domain(format!(
            "link distance must be positive, got {distance}"
        )));
    }
    Ok(10f64.powf(ref_loss_db / 10.0) / distance.powf(exponent))
}

/// Rician link: `sqrt(g) (sqrt(k/(1+k)) LoS + sqrt(1/(1+k)) NLoS)` with
/// i.i.d. CN(0, 1) scattered part.
pub fn rician_link<R: Rng + ?Sized>(
    los: &CMat,
    rician_k: f64,
    path_gain: f64,
    rng: &mut R,
) -> Result<CMat> {
    if !(rician_k >= 0.0) {
        return Err(Error::Domain(format!(
            "Rician factor must be non-negative, got {rician_k}"
        )));
    }
    if !(path_gain >= 0.0) {
        return Err(Error::Domain(format!(
            "path gain must be non-negative, got {path_gain}"
        )));
    }
    let nlos = complex_gaussian_matrix(los.nrows(), los.ncols(), rng);
    let (a_los, a_nlos) = if rician_k.is_infinite() {
        (1.0, 0.0)
    } else {
        (
            (rician_k / (1.0 + rician_k)).sqrt(),
            (1.0 / (1.0 + rician_k)).sqrt(),
        )
    };
    Ok((los * c64(a_los, 0.0) + nlos * c64(a_nlos, 0.0)) * c64(path_gain.sqrt(), 0.0))
}

/// Geometric (finite-scatterer) link `sum_l rho_l a_rx(l) a_tx(l)^H`.
///
/// Every path has the same magnitude `|rho_l| = sqrt(path_gain / L)` and a
/// uniform random phase, so that `E‖G‖_F^2 = path_gain * rows * cols` for
/// unit-modulus steering vectors. Steering vectors come from the supplied
/// samplers, called once per path in the order rx then tx.
pub fn geometric_link<R, Rx, Tx>(
    scatterers: usize,
    mut rx_steering: Rx,
    mut tx_steering: Tx,
    path_gain: f64,
    rng: &mut R,
) -> Result<CMat>
where
    R: Rng + ?Sized,
    Rx: FnMut(&mut R) -> CVec,
    Tx: FnMut(&mut R) -> CVec,
{
    if scatterers < 1 {
        return Err(Error::Domain(
            "geometric link needs at least one scatterer".into(),
        ));
    }
    if !(path_gain >= 0.0) {
        return Err(Error::Domain(format!(
            "path gain must be non-negative, got {path_gain}"
        )));
    }
    let rho = (path_gain / scatterers as f64).sqrt();
    let mut out: Option<CMat> = None;
    for _ in 0..scatterers {
        let a_rx = rx_steering(rng);
        let a_tx = tx_steering(rng);
        let gain = phasor(rng.random_range(0.0..std::f64::consts::TAU)) * rho;
        let term = (&a_rx * a_tx.adjoint()) * gain;
        out = Some(match out {
            Some(acc) => acc + term,
            None => term,
        });
    }
    Ok(out.expect("at least one scatterer"))
}
