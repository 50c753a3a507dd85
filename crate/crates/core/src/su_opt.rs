//! Single-user joint receive / cooperative reflect beamforming.
//!
//! With one user the SNR is `P |w^H h|^2 / sigma^2` for a unit-norm `w`.
//! For fixed `theta1` and `w`, `w^H h = b^H theta2 + b0` is affine in
//! `theta2` and is maximised by aligning every term with `b0`; the same
//! holds for `theta1` with `c, c0`, and MRC is optimal for fixed
//! reflections. Alternating the three closed forms never decreases the SNR.

use rand::Rng;

use crate::channels::ChannelSet;
use crate::error::{dim_mismatch, Error, Result};
use crate::linalg::{
    align_phases, c64, concat_vec, is_unit_modulus, phasor, random_phases, CMat, CVec,
    UNIT_MODULUS_TOL,
};
use crate::sdp::{max_hermitian_form, randomize_with, DEFAULT_CANDIDATES};
use crate::system::{channel_matrix, ReflectPattern, SinrContext};

/// Default iteration budget of the alternating optimisation.
pub const DEFAULT_MAX_ITERATIONS: usize = 100;
/// Default relative SNR improvement below which iterations stop.
pub const DEFAULT_TOL: f64 = 1e-8;
/// Default number of starts for the single-IRS optimiser.
pub const DEFAULT_RESTARTS: usize = 20;

fn check_single_user(chs: &ChannelSet) -> Result<()> {
    if chs.users() != 1 {
        return Err(Error::Contract(format!(
            "single-user routine called with {} users",
            chs.users()
        )));
    }
    Ok(())
}

fn check_len(what: &'static str, v: &CVec, expected: usize) -> Result<()> {
    if v.len() != expected {
        return Err(dim_mismatch(what, expected, v.len()));
    }
    Ok(())
}

fn check_pattern(chs: &ChannelSet, theta1: &CVec, theta2: &CVec) -> Result<()> {
    check_len("theta1 length", theta1, chs.m1())?;
    check_len("theta2 length", theta2, chs.m2())?;
    if !is_unit_modulus(theta1, UNIT_MODULUS_TOL) || !is_unit_modulus(theta2, UNIT_MODULUS_TOL) {
        return Err(Error::Domain(
            "reflection coefficients must be unit-modulus".into(),
        ));
    }
    Ok(())
}

/// Effective single-user channel `h` for the given reflections.
pub fn su_channel(chs: &ChannelSet, theta1: &CVec, theta2: &CVec) -> Result<CVec> {
    let pat = ReflectPattern::new(theta1.clone(), theta2.clone())?;
    Ok(channel_matrix(chs, &pat)?.column(0).into_owned())
}

/// `P |w^H h|^2 / (sigma^2 ‖w‖^2)`.
pub fn su_snr(
    chs: &ChannelSet,
    ctx: &SinrContext,
    theta1: &CVec,
    theta2: &CVec,
    w: &CVec,
) -> Result<f64> {
    check_single_user(chs)?;
    check_len("receive vector length", w, chs.antennas())?;
    let h = su_channel(chs, theta1, theta2)?;
    ctx.snr(w, &h)
}

/// Closed-form optimal `theta2` for fixed `theta1` and `w`:
/// `theta2 = exp(j(arg b0 + arg b))` with `b^H = w^H (sum_m theta1_m Q_m + R2)`
/// and `b0 = w^H R1 theta1`. A vanishing `b0` uses phase reference 0.
pub fn opt_theta2(chs: &ChannelSet, theta1: &CVec, w: &CVec) -> Result<CVec> {
    check_single_user(chs)?;
    check_len("theta1 length", theta1, chs.m1())?;
    check_len("receive vector length", w, chs.antennas())?;
    let b = chs.theta2_coupling(0, theta1).adjoint() * w;
    let b0 = w.dotc(&(&chs.r1[0] * theta1));
    Ok(aligned(&b, b0))
}

/// Closed-form optimal `theta1` for fixed `theta2` and `w`:
/// `theta1 = exp(j(arg c0 + arg c))` with `c^H = w^H ([Q_m theta2]_m + R1)` and
/// `c0 = w^H R2 theta2`.
pub fn opt_theta1(chs: &ChannelSet, theta2: &CVec, w: &CVec) -> Result<CVec> {
    check_single_user(chs)?;
    check_len("theta2 length", theta2, chs.m2())?;
    check_len("receive vector length", w, chs.antennas())?;
    let c = chs.theta1_coupling(0, theta2).adjoint() * w;
    let c0 = w.dotc(&(&chs.r2[0] * theta2));
    Ok(aligned(&c, c0))
}

/// `exp(j(arg ref + arg v))` entrywise; zero entries and a zero reference
/// contribute phase 0.
fn aligned(v: &CVec, reference: num_complex::Complex64) -> CVec {
    let r = if reference.norm() > 0.0 {
        phasor(reference.arg())
    } else {
        c64(1.0, 0.0)
    };
    align_phases(v) * r
}

/// Maximum-ratio combining: unit-norm `w` parallel to `h`.
pub fn mrc_receive(chs: &ChannelSet, theta1: &CVec, theta2: &CVec) -> Result<CVec> {
    check_single_user(chs)?;
    let h = su_channel(chs, theta1, theta2)?;
    mrc_from_channel(&h)
}

pub(crate) fn mrc_from_channel(h: &CVec) -> Result<CVec> {
    let norm = h.norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::DegenerateChannel(
            "effective channel is zero; MRC undefined".into(),
        ));
    }
    Ok(h / c64(norm, 0.0))
}

/// Iterate of the single-user alternating optimisation.
#[derive(Debug, Clone, PartialEq)]
pub struct SuSolveState {
    pub w: CVec,
    pub theta1: CVec,
    pub theta2: CVec,
    pub snr: f64,
    /// Completed AO iterations.
    pub iterations: usize,
    /// SNR at the start and after every full iteration.
    pub trace: Vec<f64>,
    /// SNR at the start and after every sub-step.
    pub substep_trace: Vec<f64>,
}

impl SuSolveState {
    /// State from explicit vectors; `w` is normalised.
    pub fn new(
        chs: &ChannelSet,
        ctx: &SinrContext,
        theta1: CVec,
        theta2: CVec,
        w: CVec,
    ) -> Result<Self> {
        check_single_user(chs)?;
        check_pattern(chs, &theta1, &theta2)?;
        check_len("receive vector length", &w, chs.antennas())?;
        let norm = w.norm();
        if !(norm > 0.0) {
            return Err(Error::Domain("receive vector is zero".into()));
        }
        let w = w / c64(norm, 0.0);
        let snr = su_snr(chs, ctx, &theta1, &theta2, &w)?;
        Ok(SuSolveState {
            w,
            theta1,
            theta2,
            snr,
            iterations: 0,
            trace: vec![snr],
            substep_trace: vec![snr],
        })
    }

    /// Random reflections with the matching MRC receiver.
    pub fn random<R: Rng + ?Sized>(
        chs: &ChannelSet,
        ctx: &SinrContext,
        rng: &mut R,
    ) -> Result<Self> {
        let theta1 = random_phases(chs.m1(), rng);
        let theta2 = random_phases(chs.m2(), rng);
        let w = mrc_receive(chs, &theta1, &theta2)?;
        Self::new(chs, ctx, theta1, theta2, w)
    }

    pub fn pattern(&self) -> ReflectPattern {
        ReflectPattern::new(self.theta1.clone(), self.theta2.clone())
            .expect("state holds unit-modulus vectors")
    }

    pub fn rate(&self) -> f64 {
        crate::system::rate(self.snr)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AoOptions {
    pub max_iterations: usize,
    /// Stop when an iteration improves the SNR by less than this fraction.
    pub tol: f64,
}

impl Default for AoOptions {
    fn default() -> Self {
        AoOptions {
            max_iterations: DEFAULT_MAX_ITERATIONS,
            tol: DEFAULT_TOL,
        }
    }
}

/// Alternating optimisation `theta2 -> theta1 -> w` from `init`.
pub fn ao_single_user(
    chs: &ChannelSet,
    ctx: &SinrContext,
    init: SuSolveState,
    opts: AoOptions,
) -> Result<SuSolveState> {
    check_single_user(chs)?;
    let mut st = init;
    for _ in 0..opts.max_iterations {
        let start = st.snr;
        if chs.m2() > 0 {
            st.theta2 = opt_theta2(chs, &st.theta1, &st.w)?;
            st.snr = su_snr(chs, ctx, &st.theta1, &st.theta2, &st.w)?;
            st.substep_trace.push(st.snr);
        }
        if chs.m1() > 0 {
            st.theta1 = opt_theta1(chs, &st.theta2, &st.w)?;
            st.snr = su_snr(chs, ctx, &st.theta1, &st.theta2, &st.w)?;
            st.substep_trace.push(st.snr);
        }
        st.w = mrc_receive(chs, &st.theta1, &st.theta2)?;
        st.snr = su_snr(chs, ctx, &st.theta1, &st.theta2, &st.w)?;
        st.substep_trace.push(st.snr);
        st.iterations += 1;
        st.trace.push(st.snr);
        if st.snr - start <= opts.tol * start.abs() {
            break;
        }
    }
    Ok(st)
}

/// Best single-IRS solution found.
#[derive(Debug, Clone, PartialEq)]
pub struct SingleIrsSolution {
    pub w: CVec,
    pub theta: CVec,
    pub snr: f64,
    /// Final SNR of every start.
    pub start_snrs: Vec<f64>,
}

/// Single-IRS optimum by alternating MRC `w = R theta / ‖R theta‖` and
/// `theta = exp(j arg(R^H w))`, from `restarts` starts (the first from the
/// phases of the dominant right singular vector of `R`, the rest random).
pub fn single_irs_opt<R: Rng + ?Sized>(
    baseline: &ChannelSet,
    ctx: &SinrContext,
    opts: AoOptions,
    restarts: usize,
    rng: &mut R,
) -> Result<SingleIrsSolution> {
    check_single_user(baseline)?;
    if !baseline.is_single_irs() {
        return Err(Error::Contract(
            "single-IRS optimiser needs an M1 = 0 channel set".into(),
        ));
    }
    if restarts < 1 {
        return Err(Error::Config("at least one start is required".into()));
    }
    let r = &baseline.r2[0];
    let m = r.ncols();
    let mut starts = Vec::with_capacity(restarts);
    starts.push(dominant_phases(r));
    for _ in 1..restarts {
        starts.push(random_phases(m, rng));
    }

    let mut best: Option<SingleIrsSolution> = None;
    let mut start_snrs = Vec::with_capacity(restarts);
    for theta0 in starts {
        let (w, theta, snr) = match single_irs_ao(r, ctx, theta0, opts) {
            Ok(v) => v,
            Err(Error::DegenerateChannel(_)) => {
                start_snrs.push(0.0);
                continue;
            }
            Err(e) => return Err(e),
        };
        start_snrs.push(snr);
        if best.as_ref().is_none_or(|b| snr > b.snr) {
            best = Some(SingleIrsSolution {
                w,
                theta,
                snr,
                start_snrs: Vec::new(),
            });
        }
    }
    let mut best = best.ok_or_else(|| {
        Error::DegenerateChannel("single-IRS channel is zero for every start".into())
    })?;
    best.start_snrs = start_snrs;
    Ok(best)
}

fn dominant_phases(r: &CMat) -> CVec {
    let svd = r.clone().svd(false, true);
    match svd.v_t {
        Some(vt) if vt.nrows() > 0 => {
            let (idx, _) = svd.singular_values.argmax();
            align_phases(&vt.row(idx).adjoint())
        }
        _ => CVec::from_element(r.ncols(), c64(1.0, 0.0)),
    }
}

fn single_irs_ao(
    r: &CMat,
    ctx: &SinrContext,
    theta0: CVec,
    opts: AoOptions,
) -> Result<(CVec, CVec, f64)> {
    let mut theta = theta0;
    let mut w = mrc_from_channel(&(r * &theta))?;
    let mut snr = ctx.snr(&w, &(r * &theta))?;
    for _ in 0..opts.max_iterations {
        let prev = snr;
        theta = align_phases(&(r.adjoint() * &w));
        let h = r * &theta;
        w = mrc_from_channel(&h)?;
        snr = ctx.snr(&w, &h)?;
        if snr - prev <= opts.tol * prev.abs() {
            break;
        }
    }
    Ok((w, theta, snr))
}

/// Double-IRS initialisation built from a single-IRS solution on the
/// paired channel set.
#[derive(Debug, Clone, PartialEq)]
pub struct SingleIrsInit {
    pub state: SuSolveState,
    /// Double-reflection gain `w^H sum_m Q_m theta2* theta1*_m`.
    pub a1: num_complex::Complex64,
    /// Single-reflection gain `w^H [R1 R2] theta*`.
    pub a2: num_complex::Complex64,
    /// Common phase applied to both reflect vectors.
    pub phi: f64,
}

/// Split the single-IRS pattern across the two IRSs (first `M1` entries to
/// IRS 1) and rotate both by the common phase `arg(a2 / a1)`, so that the
/// double- and single-reflection signals add coherently:
/// `|w^H h| = |a1| + |a2|`. If `a1 = 0` the phase is 0 and the SNR equals
/// the single-IRS SNR.
pub fn init_from_single_irs(
    chs: &ChannelSet,
    ctx: &SinrContext,
    sol: &SingleIrsSolution,
) -> Result<SingleIrsInit> {
    check_single_user(chs)?;
    let (m1, m2) = (chs.m1(), chs.m2());
    check_len("single-IRS pattern length", &sol.theta, m1 + m2)?;
    check_len("receive vector length", &sol.w, chs.antennas())?;
    let t1 = sol.theta.rows(0, m1).into_owned();
    let t2 = sol.theta.rows(m1, m2).into_owned();
    let w = &sol.w;

    let mut a1 = c64(0.0, 0.0);
    for (m, qm) in chs.q[0].iter().enumerate() {
        a1 += w.dotc(&(qm * &t2)) * t1[m];
    }
    let a2 = w.dotc(&(&chs.r1[0] * &t1 + &chs.r2[0] * &t2));
    let phi = if a1.norm() > 0.0 {
        (a2 / a1).arg()
    } else {
        0.0
    };
    let rot = phasor(phi);
    let state = SuSolveState::new(chs, ctx, t1 * rot, t2 * rot, w.clone())?;
    Ok(SingleIrsInit { state, a1, a2, phi })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdrOptions {
    pub candidates: usize,
    pub max_rounds: usize,
    pub tol: f64,
    /// Largest lifted dimension `M1 M2 + M1 + M2` for which the joint
    /// relaxation bound is computed.
    pub joint_bound_max_dim: usize,
}

impl Default for SdrOptions {
    fn default() -> Self {
        SdrOptions {
            candidates: DEFAULT_CANDIDATES,
            max_rounds: 20,
            tol: 1e-8,
            joint_bound_max_dim: 64,
        }
    }
}

/// Result of the semidefinite-relaxation benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct SdrBenchmark {
    pub theta1: CVec,
    pub theta2: CVec,
    /// MRC SNR of the returned reflections.
    pub snr: f64,
    /// Relaxation bound of the last subproblem solved (over the last
    /// updated reflect vector with the other held fixed).
    pub subproblem_bound: f64,
    /// Relaxation bound over both reflect vectors jointly, an upper bound on
    /// the optimal SNR; `None` when the lifted dimension is too large.
    pub joint_bound: Option<f64>,
    pub rounds: usize,
}

/// Semidefinite-relaxation benchmark for the MRC objective `P ‖h‖^2 /
/// sigma^2`. Starting from the joint lifted relaxation when it is small
/// enough (all-ones reflections otherwise), it alternates relaxed updates
/// of `theta2` and `theta1`, each followed by Gaussian randomization and
/// kept only if the SNR improves.
pub fn sdr_benchmark_su<R: Rng + ?Sized>(
    chs: &ChannelSet,
    ctx: &SinrContext,
    opts: SdrOptions,
    rng: &mut R,
) -> Result<SdrBenchmark> {
    check_single_user(chs)?;
    let (m1, m2) = (chs.m1(), chs.m2());
    let gain = ctx.powers()[0] / ctx.noise();
    let snr_of = |t1: &CVec, t2: &CVec| -> Result<f64> {
        Ok(gain * su_channel(chs, t1, t2)?.norm_squared())
    };

    let mut theta1 = CVec::from_element(m1, c64(1.0, 0.0));
    let mut theta2 = CVec::from_element(m2, c64(1.0, 0.0));
    let mut joint_bound = None;
    let lifted = m1 * m2 + m1 + m2;
    if lifted <= opts.joint_bound_max_dim {
        let f = lifted_map(chs);
        let relaxed = max_hermitian_form(&(f.adjoint() * &f)).map_err(Error::from)?;
        joint_bound = Some(gain * relaxed.upper_bound);
        let (z, _) = randomize_with(&relaxed.psi, opts.candidates, rng, |z| {
            let (t1, t2) = lifted_split(z, m1, m2);
            snr_of(&t1, &t2).unwrap_or(f64::NEG_INFINITY)
        })
        .map_err(Error::from)?;
        let (t1, t2) = lifted_split(&z, m1, m2);
        if snr_of(&t1, &t2)? > snr_of(&theta1, &theta2)? {
            theta1 = t1;
            theta2 = t2;
        }
    }

    let mut snr = snr_of(&theta1, &theta2)?;
    let mut subproblem_bound = snr;
    let mut rounds = 0;
    for _ in 0..opts.max_rounds {
        let start = snr;
        if m2 > 0 {
            // ‖C theta2 + r‖^2 with C the theta2 coupling and r = R1 theta1
            let c = chs.theta2_coupling(0, &theta1);
            let r = &chs.r1[0] * &theta1;
            let (t2, bound) = relaxed_affine_update(&c, &r, opts.candidates, rng)?;
            subproblem_bound = gain * bound;
            let cand = snr_of(&theta1, &t2)?;
            if cand > snr {
                theta2 = t2;
                snr = cand;
            }
        }
        if m1 > 0 {
            let c = chs.theta1_coupling(0, &theta2);
            let r = &chs.r2[0] * &theta2;
            let (t1, bound) = relaxed_affine_update(&c, &r, opts.candidates, rng)?;
            subproblem_bound = gain * bound;
            let cand = snr_of(&t1, &theta2)?;
            if cand > snr {
                theta1 = t1;
                snr = cand;
            }
        }
        rounds += 1;
        if snr - start <= opts.tol * start.abs() {
            break;
        }
    }
    Ok(SdrBenchmark {
        theta1,
        theta2,
        snr,
        subproblem_bound,
        joint_bound,
        rounds,
    })
}

/// Relaxed maximisation of `‖C x + r‖^2` over unit-modulus `x` via the
/// homogenised form `[C r]^H [C r]`, followed by randomization.
fn relaxed_affine_update<R: Rng + ?Sized>(
    c: &CMat,
    r: &CVec,
    candidates: usize,
    rng: &mut R,
) -> Result<(CVec, f64)> {
    let m = c.ncols();
    let mut f = CMat::zeros(c.nrows(), m + 1);
    f.view_mut((0, 0), (c.nrows(), m)).copy_from(c);
    f.column_mut(m).copy_from(r);
    let relaxed = max_hermitian_form(&(f.adjoint() * &f)).map_err(Error::from)?;
    let (tilde, _) = randomize_with(&relaxed.psi, candidates, rng, |x| (&f * x).norm_squared())
        .map_err(Error::from)?;
    let t = tilde[m];
    let x = tilde.rows(0, m).map(|z| z * t.conj());
    Ok((x, relaxed.upper_bound))
}

/// Linear map `F` with `h = F [theta1 (x) theta2; theta2; theta1]`, where the
/// Kronecker block is ordered `theta1_m theta2_i` at index `m M2 + i`.
fn lifted_map(chs: &ChannelSet) -> CMat {
    let (n, m1, m2) = (chs.antennas(), chs.m1(), chs.m2());
    let mut f = CMat::zeros(n, m1 * m2 + m2 + m1);
    for (m, qm) in chs.q[0].iter().enumerate() {
        f.view_mut((0, m * m2), (n, m2)).copy_from(qm);
    }
    f.view_mut((0, m1 * m2), (n, m2)).copy_from(&chs.r2[0]);
    f.view_mut((0, m1 * m2 + m2), (n, m1)).copy_from(&chs.r1[0]);
    f
}

fn lifted_split(z: &CVec, m1: usize, m2: usize) -> (CVec, CVec) {
    let t2 = z.rows(m1 * m2, m2).into_owned();
    let t1 = z.rows(m1 * m2 + m2, m1).into_owned();
    (t1, t2)
}

/// Concatenated pattern `[theta1; theta2]` of a state.
pub fn concatenated(st: &SuSolveState) -> CVec {
    concat_vec(&st.theta1, &st.theta2)
}
