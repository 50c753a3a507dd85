use nalgebra::Vector3;
use rand::Rng;

use super::array::{ArrayKind, PlacedArray};
use super::links::{geometric_link, path_loss_linear, rician_link};
use super::scenario::{ChannelModel, LinkParams, SystemScenario};
use crate::error::{dim_mismatch, Error, Result};
use crate::linalg::{hstack, phasor, scale_columns, vstack, CMat, CVec};

/// All individual links of one channel realization plus the cascaded
/// channels derived from them.
///
/// A single-IRS system is stored as the special case `M1 = 0`: its
/// IRS→BS link lives in `g2`, its user→IRS link in `u2`, and the
/// per-user cascaded channel in `r2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    /// user → IRS 1, `M1 x K`.
    pub u1: CMat,
    /// user → IRS 2, `M2 x K`.
    pub u2: CMat,
    /// IRS 1 → IRS 2, `M2 x M1`.
    pub d: CMat,
    /// IRS 1 → BS, `N x M1`.
    pub g1: CMat,
    /// IRS 2 → BS, `N x M2`.
    pub g2: CMat,
    /// `R_{1,k} = G1 diag(u_{1,k})`.
    pub r1: Vec<CMat>,
    /// `R_{2,k} = G2 diag(u_{2,k})`.
    pub r2: Vec<CMat>,
    /// `q[k][m] = G2 diag(D[:, m] u_{1,k}[m])`, one `N x M2` matrix per
    /// subsurface of IRS 1.
    pub q: Vec<Vec<CMat>>,
}

impl ChannelSet {
    /// Assemble a channel set from raw links and derive the cascaded
    /// channels.
    pub fn from_links(u1: CMat, u2: CMat, d: CMat, g1: CMat, g2: CMat) -> Result<Self> {
        let (m1, k) = u1.shape();
        let m2 = u2.nrows();
        let n = g2.nrows();
        if u2.ncols() != k {
            return Err(dim_mismatch("U2 columns", k, u2.ncols()));
        }
        if d.shape() != (m2, m1) {
            return Err(dim_mismatch(
                "D shape",
                format!("{m2}x{m1}"),
                format!("{:?}", d.shape()),
            ));
        }
        if g1.shape() != (n, m1) {
            return Err(dim_mismatch(
                "G1 shape",
                format!("{n}x{m1}"),
                format!("{:?}", g1.shape()),
            ));
        }
        if g2.ncols() != m2 {
            return Err(dim_mismatch("G2 columns", m2, g2.ncols()));
        }
        if k == 0 || n == 0 {
            return Err(Error::Domain("channel set needs K >= 1 and N >= 1".into()));
        }
        for (name, m) in [
            ("U1", &u1),
            ("U2", &u2),
            ("D", &d),
            ("G1", &g1),
            ("G2", &g2),
        ] {
            if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::Domain(format!("{name} has non-finite entries")));
            }
        }

        let mut r1 = Vec::with_capacity(k);
        let mut r2 = Vec::with_capacity(k);
        let mut q = Vec::with_capacity(k);
        for user in 0..k {
            let u1k: CVec = u1.column(user).into_owned();
            let u2k: CVec = u2.column(user).into_owned();
            r1.push(scale_columns(&g1, &u1k));
            r2.push(scale_columns(&g2, &u2k));
            // columns of D diag(u_{1,k})
            let dk = scale_columns(&d, &u1k);
            q.push(
                (0..m1)
                    .map(|m| scale_columns(&g2, &dk.column(m).into_owned()))
                    .collect(),
            );
        }
        Ok(ChannelSet {
            u1,
            u2,
            d,
            g1,
            g2,
            r1,
            r2,
            q,
        })
    }

    pub fn antennas(&self) -> usize {
        self.g2.nrows()
    }

    pub fn users(&self) -> usize {
        self.u1.ncols()
    }

    pub fn m1(&self) -> usize {
        self.u1.nrows()
    }

    pub fn m2(&self) -> usize {
        self.u2.nrows()
    }

    pub fn is_single_irs(&self) -> bool {
        self.m1() == 0
    }

    /// `sum_m theta1_m Q_{k,m} + R_{2,k}`: the matrix multiplying `theta2`
    /// in user `k`'s channel for fixed `theta1`.
    pub fn theta2_coupling(&self, user: usize, theta1: &CVec) -> CMat {
        let mut acc = self.r2[user].clone();
        for (m, qm) in self.q[user].iter().enumerate() {
            acc += qm * theta1[m];
        }
        acc
    }

    /// `[Q_{k,1} theta2, ..., Q_{k,M1} theta2] + R_{1,k}`: the matrix
    /// multiplying `theta1` in user `k`'s channel for fixed `theta2`.
    pub fn theta1_coupling(&self, user: usize, theta2: &CVec) -> CMat {
        let mut acc = self.r1[user].clone();
        for (m, qm) in self.q[user].iter().enumerate() {
            let col = qm * theta2;
            let mut dst = acc.column_mut(m);
            dst += col;
        }
        acc
    }
}

/// Pairwise-distinct node check; coincident nodes make path loss undefined.
fn check_distance(a: &Vector3<f64>, b: &Vector3<f64>, what: &str) -> Result<f64> {
    let d = (a - b).norm();
    if !(d > 1e-9) {
        return Err(Error::Domain(format!(
            "degenerate geometry: {what} nodes coincide"
        )));
    }
    Ok(d)
}

fn link_gain(
    sc: &SystemScenario,
    p: &LinkParams,
    distance: f64,
    irs_endpoints: i32,
) -> Result<f64> {
    Ok(path_loss_linear(distance, p.exponent, sc.ref_loss_db)?
        * sc.aperture_gain.powi(irs_endpoints))
}

/// User positions drawn uniformly in a horizontal disk around the cluster
/// center.
pub fn draw_user_positions<R: Rng + ?Sized>(sc: &SystemScenario, rng: &mut R) -> Vec<Vector3<f64>> {
    (0..sc.users)
        .map(|_| {
            if sc.cluster_radius == 0.0 {
                return sc.cluster_center;
            }
            let r = sc.cluster_radius * rng.random::<f64>().sqrt();
            let phi = rng.random_range(0.0..std::f64::consts::TAU);
            sc.cluster_center + Vector3::new(r * phi.cos(), r * phi.sin(), 0.0)
        })
        .collect()
}

struct Nodes {
    bs: PlacedArray,
    irs1: PlacedArray,
    irs2: PlacedArray,
}

fn nodes(sc: &SystemScenario) -> Nodes {
    Nodes {
        bs: PlacedArray {
            kind: ArrayKind::Ula {
                elements: sc.bs_antennas,
            },
            position: sc.bs,
            azimuth: sc.bs_azimuth,
            spacing: sc.spacing,
        },
        irs1: PlacedArray {
            kind: ArrayKind::square_ura(sc.m1),
            position: sc.irs1,
            azimuth: sc.irs1_azimuth,
            spacing: sc.spacing,
        },
        irs2: PlacedArray {
            kind: ArrayKind::square_ura(sc.m2),
            position: sc.irs2,
            azimuth: sc.irs2_azimuth,
            spacing: sc.spacing,
        },
    }
}

/// Channel between two placed arrays (`rx` rows, `tx` columns).
fn array_link<R: Rng + ?Sized>(
    model: ChannelModel,
    params: &LinkParams,
    rx: &PlacedArray,
    tx: &PlacedArray,
    gain: f64,
    rng: &mut R,
) -> Result<CMat> {
    if rx.is_empty() || tx.is_empty() {
        return Ok(CMat::zeros(rx.len(), tx.len()));
    }
    match model {
        ChannelModel::Rician => {
            let los =
                rx.response_towards(&tx.position) * tx.response_towards(&rx.position).adjoint();
            rician_link(&los, params.rician_k, gain, rng)
        }
        ChannelModel::Geometric => geometric_link(
            params.scatterers,
            |r| rx.random_front_response(r),
            |r| tx.random_front_response(r),
            gain,
            rng,
        ),
    }
}

/// User → IRS channel matrix, one column per user with its own path gain.
fn user_link<R: Rng + ?Sized>(
    sc: &SystemScenario,
    params: &LinkParams,
    irs: &PlacedArray,
    users: &[Vector3<f64>],
    rng: &mut R,
) -> Result<CMat> {
    let mut out = CMat::zeros(irs.len(), users.len());
    if irs.is_empty() {
        return Ok(out);
    }
    let one = |_: &mut R| CVec::from_element(1, phasor(0.0));
    for (k, pos) in users.iter().enumerate() {
        let dist = check_distance(pos, &irs.position, "user/IRS")?;
        let gain = link_gain(sc, params, dist, 1)?;
        let col = match sc.model {
            ChannelModel::Rician => {
                let los =
                    CMat::from_column_slice(irs.len(), 1, irs.response_towards(pos).as_slice());
                rician_link(&los, params.rician_k, gain, rng)?
            }
            ChannelModel::Geometric => geometric_link(
                params.scatterers,
                |r| irs.random_front_response(r),
                one,
                gain,
                rng,
            )?,
        };
        out.column_mut(k).copy_from(&col.column(0));
    }
    Ok(out)
}

/// Draw a double-IRS channel realization. Links are drawn in the fixed
/// order U1, U2, D, G1, G2 after the user positions, so the result is a
/// deterministic function of the scenario and generator state.
pub fn build_double_irs<R: Rng + ?Sized>(sc: &SystemScenario, rng: &mut R) -> Result<ChannelSet> {
    sc.validate()?;
    let n = nodes(sc);
    check_distance(&sc.bs, &sc.irs1, "BS/IRS1")?;
    check_distance(&sc.bs, &sc.irs2, "BS/IRS2")?;
    check_distance(&sc.irs1, &sc.irs2, "IRS1/IRS2")?;
    let users = draw_user_positions(sc, rng);

    let l = &sc.links;
    let u1 = user_link(sc, &l.user_irs1, &n.irs1, &users, rng)?;
    let u2 = user_link(sc, &l.user_irs2, &n.irs2, &users, rng)?;
    let d_gain = link_gain(sc, &l.irs1_irs2, (sc.irs1 - sc.irs2).norm(), 2)?;
    let d = array_link(sc.model, &l.irs1_irs2, &n.irs2, &n.irs1, d_gain, rng)?;
    let g1_gain = link_gain(sc, &l.irs1_bs, (sc.irs1 - sc.bs).norm(), 1)?;
    let g1 = array_link(sc.model, &l.irs1_bs, &n.bs, &n.irs1, g1_gain, rng)?;
    let g2_gain = link_gain(sc, &l.irs2_bs, (sc.irs2 - sc.bs).norm(), 1)?;
    let g2 = array_link(sc.model, &l.irs2_bs, &n.bs, &n.irs2, g2_gain, rng)?;
    ChannelSet::from_links(u1, u2, d, g1, g2)
}

/// Single-IRS baseline under the cascaded-channel pairing
/// `R_bar = [R1, R2]`: the returned set has `M1 = 0`, `G2 = [G1, G2]` and
/// `U2 = [U1; U2]`, so its cascaded channel equals the concatenation.
pub fn single_irs_baseline_a1(double: &ChannelSet) -> Result<ChannelSet> {
    if double.users() != 1 {
        return Err(Error::Contract(format!(
            "cascaded-channel baseline pairing is single-user, got K = {}",
            double.users()
        )));
    }
    let n = double.antennas();
    let g = hstack(&double.g1, &double.g2);
    let u = vstack(&double.u1, &double.u2);
    let m = u.nrows();
    ChannelSet::from_links(
        CMat::zeros(0, 1),
        u,
        CMat::zeros(m, 0),
        CMat::zeros(n, 0),
        g,
    )
}

/// Requested link ranks for the single-IRS baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BaselineRanks {
    /// `rank(G_bar)`, matched to `rank(G2)`.
    pub irs_bs: usize,
    /// `rank(U_bar)`, matched to `rank(U2)`.
    pub user_irs: usize,
}

/// Single-IRS baseline under link-rank matching: one IRS with `M1 + M2`
/// subsurfaces at the position of IRS 2, geometric IRS→BS link of rank
/// `ranks.irs_bs` and user→IRS link of rank `ranks.user_irs`. The set is
/// returned in `M1 = 0` form.
pub fn single_irs_baseline_a2<R: Rng + ?Sized>(
    sc: &SystemScenario,
    ranks: BaselineRanks,
    rng: &mut R,
) -> Result<ChannelSet> {
    sc.validate()?;
    let m = sc.total_subsurfaces();
    let (n, k) = (sc.bs_antennas, sc.users);
    if m == 0 {
        return Err(Error::Domain(
            "baseline needs at least one subsurface".into(),
        ));
    }
    if ranks.irs_bs < 1 || ranks.irs_bs > n.min(m) {
        return Err(Error::Domain(format!(
            "IRS-BS rank {} infeasible for {n}x{m}",
            ranks.irs_bs
        )));
    }
    if ranks.user_irs < 1 || ranks.user_irs > m.min(k) {
        return Err(Error::Domain(format!(
            "user-IRS rank {} infeasible for {m}x{k}",
            ranks.user_irs
        )));
    }
    let bs = PlacedArray {
        kind: ArrayKind::Ula { elements: n },
        position: sc.bs,
        azimuth: sc.bs_azimuth,
        spacing: sc.spacing,
    };
    let irs = PlacedArray {
        kind: ArrayKind::square_ura(m),
        position: sc.irs2,
        azimuth: sc.irs2_azimuth,
        spacing: sc.spacing,
    };
    let d_bs = check_distance(&sc.bs, &sc.irs2, "BS/IRS")?;
    let users = draw_user_positions(sc, rng);

    let ul = &sc.links.user_irs2;
    let u = if ranks.user_irs == m.min(k) {
        let mut per_user = *ul;
        per_user.scatterers = per_user.scatterers.max(1);
        let geo = SystemScenario {
            model: ChannelModel::Geometric,
            ..sc.clone()
        };
        user_link(&geo, &per_user, &irs, &users, rng)?
    } else {
        // shared paths: rank equals the number of common directions
        let dirs: Vec<CVec> = (0..ranks.user_irs)
            .map(|_| irs.random_front_response(rng))
            .collect();
        let mut u = CMat::zeros(m, k);
        for (col, pos) in users.iter().enumerate() {
            let dist = check_distance(pos, &irs.position, "user/IRS")?;
            let rho = (link_gain(sc, ul, dist, 1)? / ranks.user_irs as f64).sqrt();
            for a in &dirs {
                let g = phasor(rng.random_range(0.0..std::f64::consts::TAU)) * rho;
                let mut c = u.column_mut(col);
                c += a * g;
            }
        }
        u
    };
    let g_gain = link_gain(sc, &sc.links.irs2_bs, d_bs, 1)?;
    let g = geometric_link(
        ranks.irs_bs,
        |r| bs.random_front_response(r),
        |r| irs.random_front_response(r),
        g_gain,
        rng,
    )?;
    ChannelSet::from_links(
        CMat::zeros(0, k),
        u,
        CMat::zeros(m, 0),
        CMat::zeros(n, 0),
        g,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::scenario::ScenarioConfig;
    use crate::linalg::{random_phases, rank};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cascaded_channels_recompute() {
        let sc = SystemScenario::single_user(0.0)
            .with_split(3, 4)
            .with_users(2);
        let chs = build_double_irs(&sc, &mut sc.rng()).unwrap();
        for k in 0..2 {
            let u1k = chs.u1.column(k).into_owned();
            let r1 = &chs.g1 * crate::linalg::diag(&u1k);
            assert!((&r1 - &chs.r1[k]).norm() < 1e-15);
            let dk = &chs.d * crate::linalg::diag(&u1k);
            for m in 0..3 {
                let qm = &chs.g2 * crate::linalg::diag(&dk.column(m).into_owned());
                assert!((&qm - &chs.q[k][m]).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let sc = SystemScenario::multi_user().with_seed(42);
        let a = build_double_irs(&sc, &mut sc.rng()).unwrap();
        let b = build_double_irs(&sc, &mut sc.rng()).unwrap();
        assert_eq!(a, b);
        let c = build_double_irs(
            &sc.clone().with_seed(43),
            &mut sc.clone().with_seed(43).rng(),
        )
        .unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn empty_irs1_split() {
        let sc = SystemScenario::single_user(0.0).with_split(0, 8);
        let chs = build_double_irs(&sc, &mut sc.rng()).unwrap();
        assert_eq!(chs.u1.shape(), (0, 1));
        assert_eq!(chs.g1.shape(), (5, 0));
        assert_eq!(chs.d.shape(), (8, 0));
        assert!(chs.q[0].is_empty());
    }

    #[test]
    fn coincident_nodes_rejected() {
        let mut cfg = ScenarioConfig::default();
        cfg.irs1_position = cfg.irs2_position;
        let sc = cfg.to_scenario().unwrap();
        assert!(matches!(
            build_double_irs(&sc, &mut sc.rng()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn a1_baseline_is_concatenation() {
        let sc = SystemScenario::single_user(0.0).with_split(3, 5);
        let chs = build_double_irs(&sc, &mut sc.rng()).unwrap();
        let base = single_irs_baseline_a1(&chs).unwrap();
        let rbar = &base.r2[0];
        assert_eq!(rbar.shape(), (5, 8));
        for j in 0..3 {
            assert_eq!(rbar.column(j), chs.r1[0].column(j));
        }
        for j in 0..5 {
            assert_eq!(rbar.column(3 + j), chs.r2[0].column(j));
        }
        let concat = hstack(&chs.r1[0], &chs.r2[0]);
        assert_eq!(rank(rbar), rank(&concat));
    }

    #[test]
    fn a1_baseline_with_empty_irs1_equals_r2() {
        let sc = SystemScenario::single_user(0.0).with_split(0, 6);
        let chs = build_double_irs(&sc, &mut sc.rng()).unwrap();
        let base = single_irs_baseline_a1(&chs).unwrap();
        assert_eq!(base.r2[0], chs.r2[0]);
    }

    #[test]
    fn a1_baseline_requires_single_user() {
        let sc = SystemScenario::single_user(0.0).with_users(2);
        let chs = build_double_irs(&sc, &mut sc.rng()).unwrap();
        assert!(matches!(
            single_irs_baseline_a1(&chs),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn a2_baseline_ranks() {
        let sc = SystemScenario::multi_user();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let base = single_irs_baseline_a2(
                &sc,
                BaselineRanks {
                    irs_bs: 2,
                    user_irs: 5,
                },
                &mut rng,
            )
            .unwrap();
            assert_eq!(base.g2.shape(), (40, 32));
            assert_eq!(rank(&base.g2), 2);
            assert_eq!(rank(&base.u2), 5);
        }
        let full = single_irs_baseline_a2(
            &sc,
            BaselineRanks {
                irs_bs: 32,
                user_irs: 3,
            },
            &mut rng,
        )
        .unwrap();
        assert_eq!(rank(&full.g2), 32);
        assert_eq!(rank(&full.u2), 3);
        assert!(single_irs_baseline_a2(
            &sc,
            BaselineRanks {
                irs_bs: 33,
                user_irs: 5
            },
            &mut rng
        )
        .is_err());
        assert!(single_irs_baseline_a2(
            &sc,
            BaselineRanks {
                irs_bs: 2,
                user_irs: 6
            },
            &mut rng
        )
        .is_err());
    }

    #[test]
    fn multi_user_link_ranks() {
        let sc = SystemScenario::multi_user();
        let chs = build_double_irs(&sc, &mut sc.rng()).unwrap();
        assert_eq!(rank(&chs.g2), 2);
        assert_eq!(rank(&chs.g1), 4);
        assert_eq!(rank(&chs.d), 4);
        assert_eq!(rank(&chs.u1), 5);
        assert_eq!(rank(&chs.u2), 5);
    }

    #[test]
    fn couplings_reproduce_channel() {
        let sc = SystemScenario::single_user(3.0)
            .with_split(4, 3)
            .with_users(2);
        let chs = build_double_irs(&sc, &mut sc.rng()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let t1 = random_phases(4, &mut rng);
        let t2 = random_phases(3, &mut rng);
        for k in 0..2 {
            let a = chs.theta2_coupling(k, &t1) * &t2 + &chs.r1[k] * &t1;
            let b = chs.theta1_coupling(k, &t2) * &t1 + &chs.r2[k] * &t2;
            assert!((&a - &b).norm() <= 1e-12 * a.norm());
        }
    }
}
