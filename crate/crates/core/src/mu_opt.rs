//! Multi-user max-min SINR: receive beamformers, relaxation instances over
//! one reflect vector, the alternating algorithm and the DFT codebook
//! benchmark.
//!
//! For fixed receivers and a fixed `theta1`, user `k`'s SINR is a ratio of
//! affine-in-`theta2` magnitudes,
//! `|q_kk^H theta2 + qbar_kk|^2 / (sum_{j != k} |q_kj^H theta2 + qbar_kj|^2 + sigma_k^2)`,
//! which is what [`MaxMinSdpInstance`] encodes; the same holds for `theta1`
//! with `theta2` fixed.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::channels::ChannelSet;
use crate::error::{dim_mismatch, Error, Result};
use crate::linalg::{
    c64, hpd_inverse, inverse, is_unit_modulus, phasor, rank, CMat, CVec, UNIT_MODULUS_TOL,
};
use crate::sdp::{
    bisection_maxmin, gaussian_randomization, upper_bracket, MaxMinSdpInstance,
    DEFAULT_BISECTION_EPS, DEFAULT_CANDIDATES,
};
use crate::system::{channel_matrix, sinr_per_user, ReflectPattern, SinrContext};

/// Outer iteration cap of the alternating algorithm.
pub const DEFAULT_OUTER_ITERATIONS: usize = 4;
/// Fractional min-SINR increase below which the algorithm stops.
pub const DEFAULT_XI: f64 = 1e-3;
/// Bisection accuracy relative to the current min-SINR; the effective
/// accuracy is `min(eps, eps_rel * current)`.
pub const DEFAULT_BISECTION_EPS_REL: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RxMode {
    Zf,
    Mmse,
    Mrc,
    Fixed,
}

impl RxMode {
    pub fn name(self) -> &'static str {
        match self {
            RxMode::Zf => "zf",
            RxMode::Mmse => "mmse",
            RxMode::Mrc => "mrc",
            RxMode::Fixed => "fixed",
        }
    }
}

/// Receive matrix; column `k` decodes user `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceiveBeamformers {
    pub w: CMat,
    pub mode: RxMode,
    /// Zero forcing was requested but `H` lacked full column rank, so MMSE
    /// was used instead.
    pub zf_fallback: bool,
}

impl ReceiveBeamformers {
    pub fn fixed(w: CMat) -> Result<Self> {
        check_columns(&w)?;
        Ok(ReceiveBeamformers {
            w,
            mode: RxMode::Fixed,
            zf_fallback: false,
        })
    }

    pub fn users(&self) -> usize {
        self.w.ncols()
    }
}

fn check_columns(w: &CMat) -> Result<()> {
    for (k, col) in w.column_iter().enumerate() {
        let n = col.norm_squared();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::DegenerateChannel(format!(
                "receive vector of user {k} is zero or non-finite"
            )));
        }
    }
    Ok(())
}

fn check_users(h: &CMat, ctx: &SinrContext) -> Result<()> {
    if ctx.users() != h.ncols() {
        return Err(dim_mismatch("power vector length", h.ncols(), ctx.users()));
    }
    Ok(())
}

/// Zero forcing `W = H (P H^H H)^{-1}` with `P = diag(sqrt(P_k))`, so that
/// `W^H H = P^{-1}`.
pub fn zf_receivers(h: &CMat, ctx: &SinrContext) -> Result<ReceiveBeamformers> {
    check_users(h, ctx)?;
    let k = h.ncols();
    let r = rank(h);
    if r < k {
        return Err(Error::RankDeficient {
            rank: r,
            required: k,
        });
    }
    let gram = h.adjoint() * h;
    let gram_inv = hpd_inverse(&gram)
        .or_else(|| inverse(&gram))
        .ok_or(Error::RankDeficient {
            rank: r,
            required: k,
        })?;
    // (P G)^{-1} = G^{-1} P^{-1}
    let mut inv = gram_inv;
    for (j, &p) in ctx.powers().iter().enumerate() {
        let mut col = inv.column_mut(j);
        col *= c64(1.0 / p.sqrt(), 0.0);
    }
    let w = h * inv;
    check_columns(&w)?;
    Ok(ReceiveBeamformers {
        w,
        mode: RxMode::Zf,
        zf_fallback: false,
    })
}

/// Linear MMSE `W = (H P P H^H + sigma^2 I)^{-1} H P`, evaluated through
/// the equivalent `K x K` form `H P (P H^H H P + sigma^2 I)^{-1}`, which
/// stays well conditioned as the noise vanishes.
pub fn mmse_receivers(h: &CMat, ctx: &SinrContext) -> Result<ReceiveBeamformers> {
    check_users(h, ctx)?;
    let k = h.ncols();
    let mut hp = h.clone();
    for (j, &p) in ctx.powers().iter().enumerate() {
        let mut col = hp.column_mut(j);
        col *= c64(p.sqrt(), 0.0);
    }
    let cov = hp.adjoint() * &hp + CMat::identity(k, k) * c64(ctx.noise(), 0.0);
    let cov_inv = hpd_inverse(&cov)
        .or_else(|| inverse(&cov))
        .ok_or_else(|| Error::Domain("MMSE covariance is not invertible".into()))?;
    let w = hp * cov_inv;
    check_columns(&w)?;
    Ok(ReceiveBeamformers {
        w,
        mode: RxMode::Mmse,
        zf_fallback: false,
    })
}

/// Matched filter `W = H`.
pub fn mrc_receivers(h: &CMat) -> Result<ReceiveBeamformers> {
    check_columns(h)?;
    Ok(ReceiveBeamformers {
        w: h.clone(),
        mode: RxMode::Mrc,
        zf_fallback: false,
    })
}

/// Receivers of the requested kind; zero forcing on a rank-deficient
/// channel falls back to MMSE and sets the flag.
pub fn receivers(h: &CMat, ctx: &SinrContext, mode: RxMode) -> Result<ReceiveBeamformers> {
    match mode {
        RxMode::Zf => match zf_receivers(h, ctx) {
            Ok(rx) => Ok(rx),
            Err(Error::RankDeficient { .. }) => {
                let mut rx = mmse_receivers(h, ctx)?;
                rx.zf_fallback = true;
                Ok(rx)
            }
            Err(e) => Err(e),
        },
        RxMode::Mmse => mmse_receivers(h, ctx),
        RxMode::Mrc => mrc_receivers(h),
        RxMode::Fixed => Err(Error::Config("fixed receivers cannot be recomputed".into())),
    }
}

fn check_rx(chs: &ChannelSet, w: &CMat, ctx: &SinrContext) -> Result<()> {
    let k = chs.users();
    if w.shape() != (chs.antennas(), k) {
        return Err(dim_mismatch(
            "receive matrix shape",
            format!("{:?}", (chs.antennas(), k)),
            format!("{:?}", w.shape()),
        ));
    }
    if ctx.users() != k {
        return Err(dim_mismatch("power vector length", k, ctx.users()));
    }
    check_columns(w)
}

fn check_phase(what: &'static str, v: &CVec, len: usize) -> Result<()> {
    if v.len() != len {
        return Err(dim_mismatch(what, len, v.len()));
    }
    if !is_unit_modulus(v, UNIT_MODULUS_TOL) {
        return Err(Error::Domain(format!(
            "{what}: entries must be unit-modulus"
        )));
    }
    Ok(())
}

/// Instance over `theta2` for fixed `theta1` and receivers:
/// `q_kj = sqrt(P_j) (sum_m theta1_m Q_jm + R2_j)^H w_k`,
/// `qbar_kj = sqrt(P_j) w_k^H R1_j theta1`, `sigma_k^2 = sigma^2 ‖w_k‖^2`.
pub fn build_p31_instance(
    chs: &ChannelSet,
    theta1: &CVec,
    w: &CMat,
    ctx: &SinrContext,
) -> Result<MaxMinSdpInstance> {
    check_phase("theta1 length", theta1, chs.m1())?;
    check_rx(chs, w, ctx)?;
    if chs.m2() == 0 {
        return Err(Error::Domain("no IRS-2 subsurfaces to optimise".into()));
    }
    let k = chs.users();
    let couplings: Vec<CMat> = (0..k).map(|j| chs.theta2_coupling(j, theta1)).collect();
    let fixed: Vec<CVec> = (0..k).map(|j| &chs.r1[j] * theta1).collect();
    build_instance(w, ctx, &couplings, &fixed)
}

/// Instance over `theta1` for fixed `theta2` and receivers:
/// `p_kj = sqrt(P_j) ([Q_j1 theta2, ..., Q_jM1 theta2] + R1_j)^H w_k`,
/// `pbar_kj = sqrt(P_j) w_k^H R2_j theta2`.
pub fn build_p34_instance(
    chs: &ChannelSet,
    theta2: &CVec,
    w: &CMat,
    ctx: &SinrContext,
) -> Result<MaxMinSdpInstance> {
    check_phase("theta2 length", theta2, chs.m2())?;
    check_rx(chs, w, ctx)?;
    if chs.m1() == 0 {
        return Err(Error::Domain("no IRS-1 subsurfaces to optimise".into()));
    }
    let k = chs.users();
    let couplings: Vec<CMat> = (0..k).map(|j| chs.theta1_coupling(j, theta2)).collect();
    let fixed: Vec<CVec> = (0..k).map(|j| &chs.r2[j] * theta2).collect();
    build_instance(w, ctx, &couplings, &fixed)
}

fn build_instance(
    w: &CMat,
    ctx: &SinrContext,
    couplings: &[CMat],
    fixed: &[CVec],
) -> Result<MaxMinSdpInstance> {
    let k = w.ncols();
    let amp: Vec<f64> = ctx.powers().iter().map(|p| p.sqrt()).collect();
    let mut q = Vec::with_capacity(k);
    let mut q_bar = Vec::with_capacity(k);
    let mut noise = Vec::with_capacity(k);
    for user in 0..k {
        let wk = w.column(user);
        q.push(
            (0..k)
                .map(|j| couplings[j].adjoint() * wk * c64(amp[j], 0.0))
                .collect(),
        );
        q_bar.push((0..k).map(|j| wk.dotc(&fixed[j]) * amp[j]).collect());
        noise.push(ctx.noise() * wk.norm_squared());
    }
    Ok(MaxMinSdpInstance::new(q, q_bar, noise)?)
}

/// Per-user SINR of a full configuration.
pub fn configuration_sinr(
    chs: &ChannelSet,
    ctx: &SinrContext,
    theta1: &CVec,
    theta2: &CVec,
    w: &CMat,
) -> Result<Vec<f64>> {
    let pat = ReflectPattern::new(theta1.clone(), theta2.clone())?;
    sinr_per_user(&channel_matrix(chs, &pat)?, w, ctx)
}

pub fn configuration_min_sinr(
    chs: &ChannelSet,
    ctx: &SinrContext,
    theta1: &CVec,
    theta2: &CVec,
    w: &CMat,
) -> Result<f64> {
    Ok(configuration_sinr(chs, ctx, theta1, theta2, w)?
        .into_iter()
        .fold(f64::INFINITY, f64::min))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Algorithm1Options {
    /// Outer iteration cap.
    pub max_iterations: usize,
    /// Stop once an iteration raises the min-SINR by less than this fraction.
    pub xi: f64,
    /// Absolute bisection accuracy cap.
    pub eps: f64,
    /// Bisection accuracy relative to the current min-SINR.
    pub eps_rel: f64,
    /// Gaussian randomization candidates per relaxation.
    pub candidates: usize,
    pub rx_mode: RxMode,
}

impl Default for Algorithm1Options {
    fn default() -> Self {
        Algorithm1Options {
            max_iterations: DEFAULT_OUTER_ITERATIONS,
            xi: DEFAULT_XI,
            eps: DEFAULT_BISECTION_EPS,
            eps_rel: DEFAULT_BISECTION_EPS_REL,
            candidates: DEFAULT_CANDIDATES,
            rx_mode: RxMode::Mmse,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Block {
    Theta2,
    Theta1,
    Receivers,
}

/// One block update of the alternating algorithm.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub iteration: usize,
    pub block: Block,
    /// Min-SINR before the update.
    pub before: f64,
    /// Exact min-SINR of the candidate.
    pub candidate: f64,
    pub accepted: bool,
    /// Largest relaxed-feasible target (reflect-vector blocks only).
    pub relaxed_delta: Option<f64>,
    /// Smallest relaxed-infeasible target; an upper bound on the candidate.
    pub relaxed_upper: Option<f64>,
    /// Bisection accuracy used.
    pub eps: Option<f64>,
    pub bisection_steps: usize,
    pub saturated: bool,
    pub zf_fallback: bool,
}

/// State of the multi-user alternating algorithm.
#[derive(Debug, Clone, PartialEq)]
pub struct MuSolveState {
    pub theta1: CVec,
    pub theta2: CVec,
    pub rx: ReceiveBeamformers,
    pub min_sinr: f64,
    /// Completed outer iterations.
    pub iteration: usize,
    /// Min-SINR at the start and after every outer iteration.
    pub trace: Vec<f64>,
    pub steps: Vec<StepRecord>,
}

impl MuSolveState {
    pub fn new(
        chs: &ChannelSet,
        ctx: &SinrContext,
        theta1: CVec,
        theta2: CVec,
        rx: ReceiveBeamformers,
    ) -> Result<Self> {
        check_phase("theta1 length", &theta1, chs.m1())?;
        check_phase("theta2 length", &theta2, chs.m2())?;
        check_rx(chs, &rx.w, ctx)?;
        let min_sinr = configuration_min_sinr(chs, ctx, &theta1, &theta2, &rx.w)?;
        Ok(MuSolveState {
            theta1,
            theta2,
            rx,
            min_sinr,
            iteration: 0,
            trace: vec![min_sinr],
            steps: Vec::new(),
        })
    }

    /// Reflections with the matching receivers of `mode`.
    pub fn with_receivers(
        chs: &ChannelSet,
        ctx: &SinrContext,
        theta1: CVec,
        theta2: CVec,
        mode: RxMode,
    ) -> Result<Self> {
        let pat = ReflectPattern::new(theta1.clone(), theta2.clone())?;
        let rx = receivers(&channel_matrix(chs, &pat)?, ctx, mode)?;
        Self::new(chs, ctx, theta1, theta2, rx)
    }

    pub fn rate(&self) -> f64 {
        crate::system::rate(self.min_sinr)
    }
}

/// Failure inside the alternating algorithm with the last accepted state.
#[derive(Debug)]
pub struct Algorithm1Failure {
    pub error: Error,
    pub partial: Box<MuSolveState>,
}

impl std::fmt::Display for Algorithm1Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} (after {} iterations)",
            self.error, self.partial.iteration
        )
    }
}

impl std::error::Error for Algorithm1Failure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl From<Algorithm1Failure> for Error {
    fn from(f: Algorithm1Failure) -> Self {
        f.error
    }
}

/// Alternating max-min SINR optimisation: per outer iteration, relaxed
/// updates of `theta2` then `theta1` (bisection on the relaxation followed
/// by Gaussian randomization) and a receiver update. Every candidate is
/// kept only if the exact min-SINR does not decrease, so the trace is
/// non-decreasing.
pub fn algorithm1<R: Rng + ?Sized>(
    chs: &ChannelSet,
    ctx: &SinrContext,
    init: MuSolveState,
    opts: Algorithm1Options,
    rng: &mut R,
) -> std::result::Result<MuSolveState, Algorithm1Failure> {
    let mut st = init;
    if let Err(error) = validate_run(chs, ctx, &st, &opts) {
        return Err(Algorithm1Failure {
            error,
            partial: Box::new(st),
        });
    }
    while st.iteration < opts.max_iterations {
        let start = st.min_sinr;
        let it = st.iteration + 1;
        if let Err(error) = outer_iteration(chs, ctx, &mut st, &opts, it, rng) {
            return Err(Algorithm1Failure {
                error,
                partial: Box::new(st),
            });
        }
        st.iteration = it;
        st.trace.push(st.min_sinr);
        if st.min_sinr - start < opts.xi * start.abs() {
            break;
        }
    }
    Ok(st)
}

fn validate_run(
    chs: &ChannelSet,
    ctx: &SinrContext,
    st: &MuSolveState,
    opts: &Algorithm1Options,
) -> Result<()> {
    if !(opts.xi >= 0.0) || !(opts.eps > 0.0) || !(opts.eps_rel > 0.0) || opts.candidates < 1 {
        return Err(Error::Config(
            "invalid alternating-algorithm options".into(),
        ));
    }
    if opts.rx_mode == RxMode::Fixed {
        return Err(Error::Config(
            "receiver mode must be zf, mmse or mrc".into(),
        ));
    }
    check_phase("theta1 length", &st.theta1, chs.m1())?;
    check_phase("theta2 length", &st.theta2, chs.m2())?;
    check_rx(chs, &st.rx.w, ctx)
}

fn outer_iteration<R: Rng + ?Sized>(
    chs: &ChannelSet,
    ctx: &SinrContext,
    st: &mut MuSolveState,
    opts: &Algorithm1Options,
    it: usize,
    rng: &mut R,
) -> Result<()> {
    if chs.m2() > 0 {
        let inst = build_p31_instance(chs, &st.theta1, &st.rx.w, ctx)?;
        let (theta, record) = relaxed_update(&inst, &st.theta2, st.min_sinr, opts, rng)?;
        let candidate = configuration_min_sinr(chs, ctx, &st.theta1, &theta, &st.rx.w)?;
        let accepted = candidate >= st.min_sinr;
        st.steps.push(StepRecord {
            iteration: it,
            block: Block::Theta2,
            before: st.min_sinr,
            candidate,
            accepted,
            ..record
        });
        if accepted {
            st.theta2 = theta;
            st.min_sinr = candidate;
        }
    }
    if chs.m1() > 0 {
        let inst = build_p34_instance(chs, &st.theta2, &st.rx.w, ctx)?;
        let (theta, record) = relaxed_update(&inst, &st.theta1, st.min_sinr, opts, rng)?;
        let candidate = configuration_min_sinr(chs, ctx, &theta, &st.theta2, &st.rx.w)?;
        let accepted = candidate >= st.min_sinr;
        st.steps.push(StepRecord {
            iteration: it,
            block: Block::Theta1,
            before: st.min_sinr,
            candidate,
            accepted,
            ..record
        });
        if accepted {
            st.theta1 = theta;
            st.min_sinr = candidate;
        }
    }
    let pat = ReflectPattern::new(st.theta1.clone(), st.theta2.clone())?;
    let h = channel_matrix(chs, &pat)?;
    let rx = receivers(&h, ctx, opts.rx_mode)?;
    let candidate = crate::system::min_sinr(&h, &rx.w, ctx)?;
    let accepted = candidate >= st.min_sinr;
    st.steps.push(StepRecord {
        iteration: it,
        block: Block::Receivers,
        before: st.min_sinr,
        candidate,
        accepted,
        relaxed_delta: None,
        relaxed_upper: None,
        eps: None,
        bisection_steps: 0,
        saturated: false,
        zf_fallback: rx.zf_fallback,
    });
    if accepted {
        st.rx = rx;
        st.min_sinr = candidate;
    }
    Ok(())
}

/// Bisection from the current (rank-one feasible) value up to the
/// relaxation bracket, then randomization. When the bracket is already
/// narrower than the accuracy the current vector is returned unchanged.
fn relaxed_update<R: Rng + ?Sized>(
    inst: &MaxMinSdpInstance,
    theta: &CVec,
    current: f64,
    opts: &Algorithm1Options,
    rng: &mut R,
) -> Result<(CVec, StepRecord)> {
    let lo = current.max(0.0);
    let hi = upper_bracket(inst);
    let eps = opts.eps.min(opts.eps_rel * lo).max(f64::MIN_POSITIVE);
    let record = |delta, upper, steps, saturated| StepRecord {
        iteration: 0,
        block: Block::Theta2,
        before: current,
        candidate: f64::NAN,
        accepted: false,
        relaxed_delta: Some(delta),
        relaxed_upper: Some(upper),
        eps: Some(eps),
        bisection_steps: steps,
        saturated,
        zf_fallback: false,
    };
    if !(hi > lo + eps) {
        return Ok((theta.clone(), record(lo, hi, 0, true)));
    }
    let b = bisection_maxmin(inst, lo, hi, eps)?;
    let r = gaussian_randomization(&b.psi, inst, opts.candidates, rng)?;
    Ok((r.theta, record(b.delta, b.upper, b.steps, b.saturated)))
}

/// `f_i[m] = exp(-j 2 pi m i / M)` for `i = 0..M`; the empty vector when
/// `M = 0`.
pub fn dft_codebook(m: usize) -> Vec<CVec> {
    if m == 0 {
        return vec![CVec::zeros(0)];
    }
    (0..m)
        .map(|i| {
            CVec::from_fn(m, |row, _| {
                phasor(-2.0 * std::f64::consts::PI * (row * i) as f64 / m as f64)
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodebookResult {
    pub theta1: CVec,
    pub theta2: CVec,
    pub rx: ReceiveBeamformers,
    pub min_sinr: f64,
    /// Codeword indices `(i1, i2)`.
    pub index: (usize, usize),
}

impl CodebookResult {
    pub fn into_state(self, chs: &ChannelSet, ctx: &SinrContext) -> Result<MuSolveState> {
        MuSolveState::new(chs, ctx, self.theta1, self.theta2, self.rx)
    }
}

/// Exhaustive joint search over the two DFT codebooks. Each pair is scored
/// by its min-SINR with MRC when `K = 1` and receivers of `mode`
/// otherwise; ties keep the lowest index pair.
pub fn dft_codebook_search(
    chs: &ChannelSet,
    ctx: &SinrContext,
    mode: RxMode,
) -> Result<CodebookResult> {
    if ctx.users() != chs.users() {
        return Err(dim_mismatch(
            "power vector length",
            chs.users(),
            ctx.users(),
        ));
    }
    let mode = if chs.users() == 1 { RxMode::Mrc } else { mode };
    let book1 = dft_codebook(chs.m1());
    let book2 = dft_codebook(chs.m2());
    let pairs: Vec<(usize, usize)> = (0..book1.len())
        .flat_map(|i| (0..book2.len()).map(move |j| (i, j)))
        .collect();
    let scored: Vec<Result<(f64, ReceiveBeamformers)>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let pat = ReflectPattern::new(book1[i].clone(), book2[j].clone())?;
            let h = channel_matrix(chs, &pat)?;
            let rx = receivers(&h, ctx, mode)?;
            Ok((crate::system::min_sinr(&h, &rx.w, ctx)?, rx))
        })
        .collect();
    let mut best: Option<(usize, f64, ReceiveBeamformers)> = None;
    for (idx, s) in scored.into_iter().enumerate() {
        let (v, rx) = match s {
            Ok(v) => v,
            Err(Error::DegenerateChannel(_)) => continue,
            Err(e) => return Err(e),
        };
        if best.as_ref().is_none_or(|(_, b, _)| v > *b) {
            best = Some((idx, v, rx));
        }
    }
    let (idx, min_sinr, rx) = best.ok_or_else(|| {
        Error::DegenerateChannel("every codebook pair gives a zero channel".into())
    })?;
    let (i, j) = pairs[idx];
    Ok(CodebookResult {
        theta1: book1[i].clone(),
        theta2: book2[j].clone(),
        rx,
        min_sinr,
        index: (i, j),
    })
}
