//! Effective channels, SINR / rate metrics and multi-user rank analysis.

use rand::Rng;
use std::collections::BTreeMap;

use crate::channels::ChannelSet;
use crate::error::{dim_mismatch, Error, Result};
use crate::linalg::{
    concat_vec, is_unit_modulus, phasor, random_phases, rank, CMat, CVec, UNIT_MODULUS_TOL,
};

/// Unit-modulus reflection coefficients of IRS 1 and IRS 2. A single-IRS
/// pattern has an empty `theta1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectPattern {
    theta1: CVec,
    theta2: CVec,
}

impl ReflectPattern {
    pub fn new(theta1: CVec, theta2: CVec) -> Result<Self> {
        for (name, v) in [("theta1", &theta1), ("theta2", &theta2)] {
            if !is_unit_modulus(v, UNIT_MODULUS_TOL) {
                return Err(Error::Domain(format!("{name} is not unit-modulus")));
            }
        }
        Ok(ReflectPattern { theta1, theta2 })
    }

    /// Single-IRS pattern `theta`.
    pub fn single(theta: CVec) -> Result<Self> {
        Self::new(CVec::zeros(0), theta)
    }

    pub fn random<R: Rng + ?Sized>(m1: usize, m2: usize, rng: &mut R) -> Self {
        let theta1 = random_phases(m1, rng);
        let theta2 = random_phases(m2, rng);
        ReflectPattern { theta1, theta2 }
    }

    /// All-ones pattern.
    pub fn identity(m1: usize, m2: usize) -> Self {
        ReflectPattern {
            theta1: CVec::from_element(m1, phasor(0.0)),
            theta2: CVec::from_element(m2, phasor(0.0)),
        }
    }

    pub fn theta1(&self) -> &CVec {
        &self.theta1
    }

    pub fn theta2(&self) -> &CVec {
        &self.theta2
    }

    pub fn m1(&self) -> usize {
        self.theta1.len()
    }

    pub fn m2(&self) -> usize {
        self.theta2.len()
    }

    /// `[theta1; theta2]`.
    pub fn concatenated(&self) -> CVec {
        concat_vec(&self.theta1, &self.theta2)
    }

    /// Multiply both reflect vectors by `exp(j phi)`.
    pub fn with_common_phase(&self, phi: f64) -> Self {
        let s = phasor(phi);
        ReflectPattern {
            theta1: &self.theta1 * s,
            theta2: &self.theta2 * s,
        }
    }

    fn check_dims(&self, chs: &ChannelSet) -> Result<()> {
        if self.m1() != chs.m1() {
            return Err(dim_mismatch("theta1 length", chs.m1(), self.m1()));
        }
        if self.m2() != chs.m2() {
            return Err(dim_mismatch("theta2 length", chs.m2(), self.m2()));
        }
        Ok(())
    }
}

/// Multi-user effective channel `H = H_d + H_s`.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveChannel {
    pub h: CMat,
    /// Double-reflection part (user → IRS 1 → IRS 2 → BS).
    pub double_reflection: CMat,
    /// Sum of the two single-reflection parts.
    pub single_reflection: CMat,
}

/// Compose the effective channel of every user from the cascaded
/// channels: `h_k = sum_m Q_{k,m} theta2 theta1_m + R_{2,k} theta2 + R_{1,k} theta1`.
pub fn effective_channel(chs: &ChannelSet, pat: &ReflectPattern) -> Result<EffectiveChannel> {
    pat.check_dims(chs)?;
    let (n, k) = (chs.antennas(), chs.users());
    let mut hd = CMat::zeros(n, k);
    let mut hs = CMat::zeros(n, k);
    for user in 0..k {
        let mut d = CVec::zeros(n);
        for (m, qm) in chs.q[user].iter().enumerate() {
            d += (qm * pat.theta2()) * pat.theta1()[m];
        }
        let s = &chs.r2[user] * pat.theta2() + &chs.r1[user] * pat.theta1();
        hd.column_mut(user).copy_from(&d);
        hs.column_mut(user).copy_from(&s);
    }
    Ok(EffectiveChannel {
        h: &hd + &hs,
        double_reflection: hd,
        single_reflection: hs,
    })
}

/// Just `H`.
pub fn channel_matrix(chs: &ChannelSet, pat: &ReflectPattern) -> Result<CMat> {
    Ok(effective_channel(chs, pat)?.h)
}

/// User powers and receiver noise, watts.
#[derive(Debug, Clone, PartialEq)]
pub struct SinrContext {
    powers: Vec<f64>,
    noise: f64,
}

impl SinrContext {
    pub fn new(powers: Vec<f64>, noise: f64) -> Result<Self> {
        if powers.is_empty() || powers.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
            return Err(Error::Domain(
                "powers must be non-empty and strictly positive".into(),
            ));
        }
        if !(noise > 0.0 && noise.is_finite()) {
            return Err(Error::Domain(
                "noise power must be strictly positive".into(),
            ));
        }
        Ok(SinrContext { powers, noise })
    }

    pub fn equal(users: usize, power: f64, noise: f64) -> Result<Self> {
        Self::new(vec![power; users], noise)
    }

    pub fn from_scenario(sc: &crate::channels::SystemScenario) -> Result<Self> {
        Self::new(sc.powers.clone(), sc.noise)
    }

    pub fn powers(&self) -> &[f64] {
        &self.powers
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    pub fn users(&self) -> usize {
        self.powers.len()
    }

    /// Single-user SNR `P |w^H h|^2 / (sigma^2 ‖w‖^2)`.
    pub fn snr(&self, w: &CVec, h: &CVec) -> Result<f64> {
        let wn = w.norm_squared();
        if !(wn > 0.0) {
            return Err(Error::Domain("receive vector is zero".into()));
        }
        Ok(self.powers[0] * w.dotc(h).norm_sqr() / (self.noise * wn))
    }
}

/// Per-user SINR for receive matrix `w` (column `k` decodes user `k`).
pub fn sinr_per_user(h: &CMat, w: &CMat, ctx: &SinrContext) -> Result<Vec<f64>> {
    let k = h.ncols();
    if w.shape() != h.shape() {
        return Err(dim_mismatch(
            "receive matrix shape",
            format!("{:?}", h.shape()),
            format!("{:?}", w.shape()),
        ));
    }
    if ctx.users() != k {
        return Err(dim_mismatch("power vector length", k, ctx.users()));
    }
    let gram = w.adjoint() * h;
    (0..k)
        .map(|user| {
            let wn = w.column(user).norm_squared();
            if !(wn > 0.0) {
                return Err(Error::Domain(format!(
                    "receive vector of user {user} is zero"
                )));
            }
            let p = ctx.powers();
            let signal = p[user] * gram[(user, user)].norm_sqr();
            let interference: f64 = (0..k)
                .filter(|&j| j != user)
                .map(|j| p[j] * gram[(user, j)].norm_sqr())
                .sum();
            Ok(signal / (interference + ctx.noise() * wn))
        })
        .collect()
}

pub fn min_sinr(h: &CMat, w: &CMat, ctx: &SinrContext) -> Result<f64> {
    Ok(sinr_per_user(h, w, ctx)?
        .into_iter()
        .fold(f64::INFINITY, f64::min))
}

/// Max-min achievable rate `log2(1 + min_k gamma_k)` in bits/s/Hz.
pub fn max_min_rate(sinrs: &[f64]) -> f64 {
    let m = sinrs.iter().copied().fold(f64::INFINITY, f64::min);
    (1.0 + m.max(0.0)).log2()
}

pub fn rate(sinr: f64) -> f64 {
    (1.0 + sinr.max(0.0)).log2()
}

/// Interference-free minimum SINR under zero forcing with equal powers,
/// `min_k P / (sigma^2 [(H^H H)^{-1}]_{kk})`.
pub fn zf_min_sinr_formula(h: &CMat, power: f64, noise: f64) -> Result<f64> {
    let k = h.ncols();
    let r = rank(h);
    if r < k {
        return Err(Error::RankDeficient {
            rank: r,
            required: k,
        });
    }
    let gram = h.adjoint() * h;
    let inv = crate::linalg::hpd_inverse(&gram)
        .or_else(|| crate::linalg::inverse(&gram))
        .ok_or(Error::RankDeficient {
            rank: r,
            required: k,
        })?;
    Ok((0..k)
        .map(|i| power / (noise * inv[(i, i)].re))
        .fold(f64::INFINITY, f64::min))
}

/// Ranks of the double-IRS and single-IRS systems and the rank-gain bound.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct RankReport {
    pub rank_h: usize,
    pub rank_h_bar: usize,
    pub rank_hd: usize,
    pub rank_hs: usize,
    pub rank_u1: usize,
    pub rank_u2: usize,
    pub rank_d: usize,
    pub rank_g1: usize,
    pub rank_g2: usize,
    pub rank_g_bar: usize,
    pub rank_u_bar: usize,
    /// `min(rank G1, rank U1)`.
    pub bound: usize,
    /// `rank H - rank H_bar >= bound`, unclipped.
    pub raw_bound_holds: bool,
    /// `rank H >= min(min(N, K), rank H_bar + bound)`.
    pub clipped_bound_holds: bool,
    /// `min(rank G2, rank U2) + min(rank G1, rank U1)`, the additive
    /// single-reflection rank without the `min(N, K)` cap.
    pub hs_additive_rank: usize,
    pub hs_additivity_holds: bool,
    /// `min(rank G2, rank D, rank U1)`.
    pub hd_predicted_rank: usize,
}

impl RankReport {
    pub fn csv_header() -> &'static str {
        "rank_h,rank_h_bar,rank_hd,rank_hs,rank_u1,rank_u2,rank_d,rank_g1,rank_g2,rank_g_bar,rank_u_bar,bound,raw_bound_holds,clipped_bound_holds,hs_additive_rank,hs_additivity_holds,hd_predicted_rank"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.rank_h,
            self.rank_h_bar,
            self.rank_hd,
            self.rank_hs,
            self.rank_u1,
            self.rank_u2,
            self.rank_d,
            self.rank_g1,
            self.rank_g2,
            self.rank_g_bar,
            self.rank_u_bar,
            self.bound,
            self.raw_bound_holds,
            self.clipped_bound_holds,
            self.hs_additive_rank,
            self.hs_additivity_holds,
            self.hd_predicted_rank
        )
    }
}

/// Number of random reflect patterns used for rank evaluation.
pub const RANK_PATTERN_DRAWS: usize = 10;

/// Most frequent value; ties go to the larger value.
fn majority(values: &[usize]) -> usize {
    let mut counts = BTreeMap::new();
    for &v in values {
        *counts.entry(v).or_insert(0usize) += 1;
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|(v, _)| v)
        .unwrap_or(0)
}

/// Rank comparison between a double-IRS channel set and its single-IRS
/// baseline (given in `M1 = 0` form). Ranks of `H`, `H_bar`, `H_d` and
/// `H_s` are the majority over [`RANK_PATTERN_DRAWS`] random unit-modulus
/// patterns, which avoids measure-zero phase alignments.
pub fn rank_gain_report<R: Rng + ?Sized>(
    double: &ChannelSet,
    baseline: &ChannelSet,
    rng: &mut R,
) -> Result<RankReport> {
    if !baseline.is_single_irs() {
        return Err(Error::Contract(
            "baseline must be a single-IRS (M1 = 0) channel set".into(),
        ));
    }
    let mut rh = Vec::new();
    let mut rhd = Vec::new();
    let mut rhs = Vec::new();
    let mut rhb = Vec::new();
    for _ in 0..RANK_PATTERN_DRAWS {
        let pat = ReflectPattern::random(double.m1(), double.m2(), rng);
        let eff = effective_channel(double, &pat)?;
        rh.push(rank(&eff.h));
        rhd.push(rank(&eff.double_reflection));
        rhs.push(rank(&eff.single_reflection));
        let pat_b = ReflectPattern::random(0, baseline.m2(), rng);
        rhb.push(rank(&channel_matrix(baseline, &pat_b)?));
    }
    let (rank_u1, rank_u2, rank_d, rank_g1, rank_g2) = (
        rank(&double.u1),
        rank(&double.u2),
        rank(&double.d),
        rank(&double.g1),
        rank(&double.g2),
    );
    let (rank_h, rank_h_bar) = (majority(&rh), majority(&rhb));
    let bound = rank_g1.min(rank_u1);
    let cap = double.antennas().min(double.users());
    let rank_hs = majority(&rhs);
    let hs_additive_rank = rank_g2.min(rank_u2) + bound;
    Ok(RankReport {
        rank_h,
        rank_h_bar,
        rank_hd: majority(&rhd),
        rank_hs,
        rank_u1,
        rank_u2,
        rank_d,
        rank_g1,
        rank_g2,
        rank_g_bar: rank(&baseline.g2),
        rank_u_bar: rank(&baseline.u2),
        bound,
        raw_bound_holds: rank_h as i64 - rank_h_bar as i64 >= bound as i64,
        clipped_bound_holds: rank_h >= cap.min(rank_h_bar + bound),
        hs_additive_rank,
        hs_additivity_holds: rank_hs == hs_additive_rank,
        hd_predicted_rank: rank_g2.min(rank_d).min(rank_u1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{
        build_double_irs, single_irs_baseline_a2, BaselineRanks, SystemScenario,
    };
    use crate::linalg::{c64, diag, rel_diff};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_set(seed: u64, m1: usize, m2: usize, k: usize) -> ChannelSet {
        let sc = SystemScenario::single_user(0.0)
            .with_split(m1, m2)
            .with_users(k)
            .with_seed(seed);
        build_double_irs(&sc, &mut sc.rng()).unwrap()
    }

    #[test]
    fn pattern_rejects_non_unit_entries() {
        let bad = CVec::from_vec(vec![c64(1.0, 0.0), c64(0.5, 0.0)]);
        assert!(ReflectPattern::new(CVec::zeros(0), bad).is_err());
        let ok = CVec::from_vec(vec![phasor(0.3), phasor(-2.0)]);
        assert!(ReflectPattern::single(ok).is_ok());
    }

    #[test]
    fn raw_link_form_matches_cascaded_form() {
        let chs = small_set(1, 4, 3, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..5 {
            let pat = ReflectPattern::random(4, 3, &mut rng);
            let eff = effective_channel(&chs, &pat).unwrap();
            let phi1 = diag(pat.theta1());
            let phi2 = diag(pat.theta2());
            let direct = &chs.g2 * &phi2 * &chs.d * &phi1 * &chs.u1
                + &chs.g2 * &phi2 * &chs.u2
                + &chs.g1 * &phi1 * &chs.u1;
            assert!(rel_diff(&eff.h, &direct, 1e-300) < 1e-10);
            assert!(
                rel_diff(
                    &eff.h,
                    &(&eff.double_reflection + &eff.single_reflection),
                    1e-300
                ) < 1e-12
            );
        }
    }

    #[test]
    fn zero_inter_irs_link_kills_double_reflection() {
        let chs = small_set(3, 3, 3, 2);
        let chs = ChannelSet::from_links(
            chs.u1.clone(),
            chs.u2.clone(),
            CMat::zeros(3, 3),
            chs.g1.clone(),
            chs.g2.clone(),
        )
        .unwrap();
        let pat = ReflectPattern::random(3, 3, &mut ChaCha8Rng::seed_from_u64(4));
        let eff = effective_channel(&chs, &pat).unwrap();
        assert_eq!(eff.double_reflection.norm(), 0.0);
        assert_eq!(eff.h, eff.single_reflection);
    }

    #[test]
    fn empty_irs1_reduces_to_single_reflection() {
        let chs = small_set(5, 0, 6, 1);
        let pat = ReflectPattern::random(0, 6, &mut ChaCha8Rng::seed_from_u64(6));
        let h = channel_matrix(&chs, &pat).unwrap();
        let expected = &chs.r2[0] * pat.theta2();
        assert!((h.column(0) - expected).norm() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let chs = small_set(7, 2, 2, 1);
        let pat = ReflectPattern::identity(3, 2);
        assert!(matches!(
            effective_channel(&chs, &pat),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn single_user_sinr_is_snr() {
        let h = CMat::from_column_slice(2, 1, &[c64(1.0, 1.0), c64(0.0, 2.0)]);
        let w = CMat::from_column_slice(2, 1, &[c64(0.5, 0.0), c64(0.0, -1.0)]);
        let ctx = SinrContext::equal(1, 2.0, 0.1).unwrap();
        let g = sinr_per_user(&h, &w, &ctx).unwrap();
        let wh = w.column(0).dotc(&h.column(0));
        let expected = 2.0 * wh.norm_sqr() / (0.1 * w.norm_squared());
        assert!((g[0] - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn orthogonal_receiver_gives_zero_sinr() {
        let h = CMat::from_column_slice(2, 1, &[c64(1.0, 0.0), c64(0.0, 0.0)]);
        let w = CMat::from_column_slice(2, 1, &[c64(0.0, 0.0), c64(1.0, 0.0)]);
        let ctx = SinrContext::equal(1, 1.0, 1.0).unwrap();
        assert_eq!(sinr_per_user(&h, &w, &ctx).unwrap()[0], 0.0);
    }

    #[test]
    fn two_user_sinr_scalar_oracle() {
        let h = CMat::from_row_slice(
            2,
            2,
            &[c64(1.0, 0.5), c64(-0.3, 0.2), c64(0.1, -1.0), c64(0.7, 0.0)],
        );
        let w = CMat::from_row_slice(
            2,
            2,
            &[c64(0.2, 0.1), c64(1.0, 0.0), c64(-0.4, 0.3), c64(0.0, 0.5)],
        );
        let p = [0.8, 1.7];
        let noise = 0.05;
        let ctx = SinrContext::new(p.to_vec(), noise).unwrap();
        let got = sinr_per_user(&h, &w, &ctx).unwrap();
        // scalar evaluation
        for k in 0..2 {
            let inner = |j: usize| {
                let mut acc = c64(0.0, 0.0);
                for n in 0..2 {
                    acc += w[(n, k)].conj() * h[(n, j)];
                }
                acc.norm_sqr()
            };
            let wn: f64 = (0..2).map(|n| w[(n, k)].norm_sqr()).sum();
            let other = 1 - k;
            let expected = p[k] * inner(k) / (p[other] * inner(other) + noise * wn);
            assert!((got[k] - expected).abs() < 1e-12 * expected);
        }
    }

    #[test]
    fn zero_receiver_rejected() {
        let h = CMat::from_element(2, 1, c64(1.0, 0.0));
        let w = CMat::zeros(2, 1);
        let ctx = SinrContext::equal(1, 1.0, 1.0).unwrap();
        assert!(sinr_per_user(&h, &w, &ctx).is_err());
    }

    #[test]
    fn sinr_invariant_to_receiver_scaling() {
        let chs = small_set(8, 3, 3, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h = channel_matrix(&chs, &ReflectPattern::random(3, 3, &mut rng)).unwrap();
        let w = crate::linalg::complex_gaussian_matrix(5, 3, &mut rng);
        let ctx = SinrContext::equal(3, 0.1, 1e-9).unwrap();
        let a = sinr_per_user(&h, &w, &ctx).unwrap();
        let mut ws = w.clone();
        for (k, c) in [c64(3.0, -1.0), c64(-1e-3, 0.0), c64(0.0, 7.5)]
            .iter()
            .enumerate()
        {
            let mut col = ws.column_mut(k);
            col *= *c;
        }
        let b = sinr_per_user(&h, &ws, &ctx).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-12 * x.abs().max(1e-300));
        }
    }

    #[test]
    fn rate_examples() {
        assert!((max_min_rate(&[1.0, 1.0]) - 1.0).abs() < 1e-15);
        assert!((max_min_rate(&[3.0, 1.0]) - 1.0).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..50 {
            let g: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..100.0)).collect();
            let m = g.iter().cloned().fold(f64::MAX, f64::min);
            assert_eq!(max_min_rate(&g), (1.0 + m).log2());
        }
    }

    #[test]
    fn zf_formula_examples() {
        let h = CMat::identity(3, 2);
        let l = zf_min_sinr_formula(&h, 2.0, 0.5).unwrap();
        assert!((l - 4.0).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = crate::linalg::complex_gaussian_matrix(4, 3, &mut rng);
        let a = zf_min_sinr_formula(&h, 1.0, 0.3).unwrap();
        let b = zf_min_sinr_formula(&h, 2.0, 0.3).unwrap();
        assert!((b - 2.0 * a).abs() < 1e-12 * b);
        let deficient = CMat::from_element(3, 2, c64(1.0, 0.0));
        assert!(matches!(
            zf_min_sinr_formula(&deficient, 1.0, 1.0),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn majority_breaks_ties_upwards() {
        assert_eq!(majority(&[2, 3, 3, 2]), 3);
        assert_eq!(majority(&[1, 1, 4]), 1);
    }

    #[test]
    fn rank_report_for_multi_user_setup() {
        let sc = SystemScenario::multi_user().with_seed(21);
        let mut rng = sc.rng();
        let double = build_double_irs(&sc, &mut rng).unwrap();
        let base = single_irs_baseline_a2(
            &sc,
            BaselineRanks {
                irs_bs: rank(&double.g2),
                user_irs: rank(&double.u2),
            },
            &mut rng,
        )
        .unwrap();
        let rep = rank_gain_report(&double, &base, &mut rng).unwrap();
        assert_eq!(rep.rank_h, 5);
        assert_eq!(rep.rank_h_bar, 2);
        assert_eq!(rep.bound, 4);
        assert!(rep.clipped_bound_holds);
        assert!(!rep.raw_bound_holds);
        assert_eq!(rep.rank_h_bar, rep.rank_g_bar.min(rep.rank_u_bar));
        assert_eq!(rep.rank_hd, rep.hd_predicted_rank);
        assert!(rep.rank_h <= 5);
    }
}
