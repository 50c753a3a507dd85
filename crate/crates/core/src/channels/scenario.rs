//! System scenario: node geometry, array sizes, propagation parameters and
//! link budget. [`ScenarioConfig`] is the serialized form (dB / dBm units);
//! [`SystemScenario`] is the validated, linear-units form used internally.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_4, PI};

use crate::error::{Error, Result};

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_linear(dbm - 30.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    linear_to_db(w) + 30.0
}

/// Small-scale fading model used for every link of a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelModel {
    Rician,
    Geometric,
}

/// Propagation parameters of one link (linear units).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkParams {
    pub exponent: f64,
    /// Rician factor, linear.
    pub rician_k: f64,
    /// Scatterer count for the geometric model. For user links this is the
    /// number of paths per user.
    pub scatterers: usize,
}

/// The five individual links of the double-IRS system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Link {
    UserIrs1,
    UserIrs2,
    Irs1Irs2,
    Irs1Bs,
    Irs2Bs,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkTable<T> {
    pub user_irs1: T,
    pub user_irs2: T,
    pub irs1_irs2: T,
    pub irs1_bs: T,
    pub irs2_bs: T,
}

impl<T> LinkTable<T> {
    pub fn get(&self, link: Link) -> &T {
        match link {
            Link::UserIrs1 => &self.user_irs1,
            Link::UserIrs2 => &self.user_irs2,
            Link::Irs1Irs2 => &self.irs1_irs2,
            Link::Irs1Bs => &self.irs1_bs,
            Link::Irs2Bs => &self.irs2_bs,
        }
    }

    pub fn get_mut(&mut self, link: Link) -> &mut T {
        match link {
            Link::UserIrs1 => &mut self.user_irs1,
            Link::UserIrs2 => &mut self.user_irs2,
            Link::Irs1Irs2 => &mut self.irs1_irs2,
            Link::Irs1Bs => &mut self.irs1_bs,
            Link::Irs2Bs => &mut self.irs2_bs,
        }
    }

    fn map<U>(&self, f: impl Fn(&T) -> U) -> LinkTable<U> {
        LinkTable {
            user_irs1: f(&self.user_irs1),
            user_irs2: f(&self.user_irs2),
            irs1_irs2: f(&self.irs1_irs2),
            irs1_bs: f(&self.irs1_bs),
            irs2_bs: f(&self.irs2_bs),
        }
    }
}

impl Link {
    pub const ALL: [Link; 5] = [
        Link::UserIrs1,
        Link::UserIrs2,
        Link::Irs1Irs2,
        Link::Irs1Bs,
        Link::Irs2Bs,
    ];

    /// Links between the user cluster / BS and their far-apart IRS, plus
    /// the inter-IRS link.
    pub const FAR: [Link; 3] = [Link::UserIrs2, Link::Irs1Irs2, Link::Irs1Bs];
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemScenario {
    pub bs: Vector3<f64>,
    pub irs1: Vector3<f64>,
    pub irs2: Vector3<f64>,
    pub cluster_center: Vector3<f64>,
    /// Users are placed uniformly in a horizontal disk of this radius.
    pub cluster_radius: f64,
    pub bs_antennas: usize,
    pub m1: usize,
    pub m2: usize,
    pub users: usize,
    /// Reference path loss at 1 m, dB.
    pub ref_loss_db: f64,
    pub links: LinkTable<LinkParams>,
    pub model: ChannelModel,
    /// Per-user transmit powers, watts.
    pub powers: Vec<f64>,
    /// Noise power, watts.
    pub noise: f64,
    pub wavelength: f64,
    /// Element / subsurface spacing in wavelengths.
    pub spacing: f64,
    /// Power gain applied per IRS endpoint of a link, modelling the
    /// reflecting elements grouped into one subsurface.
    pub aperture_gain: f64,
    pub bs_azimuth: f64,
    pub irs1_azimuth: f64,
    pub irs2_azimuth: f64,
    pub seed: u64,
}

impl SystemScenario {
    pub fn total_subsurfaces(&self) -> usize {
        self.m1 + self.m2
    }

    pub fn validate(&self) -> Result<()> {
        if self.users < 1 {
            return Err(Error::Domain("at least one user is required".into()));
        }
        if self.bs_antennas < 1 {
            return Err(Error::Domain("at least one BS antenna is required".into()));
        }
        if self.powers.len() != self.users {
            return Err(Error::Domain(format!(
                "{} transmit powers given for {} users",
                self.powers.len(),
                self.users
            )));
        }
        if self.powers.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
            return Err(Error::Domain(
                "transmit powers must be strictly positive".into(),
            ));
        }
        if !(self.noise > 0.0 && self.noise.is_finite()) {
            return Err(Error::Domain(
                "noise power must be strictly positive".into(),
            ));
        }
        if !(self.wavelength > 0.0) || !(self.spacing > 0.0) {
            return Err(Error::Domain(
                "wavelength and spacing must be positive".into(),
            ));
        }
        if !(self.aperture_gain > 0.0) {
            return Err(Error::Domain("aperture gain must be positive".into()));
        }
        if !(self.cluster_radius >= 0.0) {
            return Err(Error::Domain("cluster radius must be non-negative".into()));
        }
        for link in Link::ALL {
            let p = self.links.get(link);
            if !(p.rician_k >= 0.0) {
                return Err(Error::Domain(format!(
                    "{link:?}: Rician factor must be >= 0"
                )));
            }
            if !p.exponent.is_finite() {
                return Err(Error::Domain(format!(
                    "{link:?}: invalid path-loss exponent"
                )));
            }
            if self.model == ChannelModel::Geometric && p.scatterers < 1 {
                return Err(Error::Domain(format!(
                    "{link:?}: geometric model needs >= 1 scatterer"
                )));
            }
        }
        Ok(())
    }

    /// Generator seeded from the scenario seed.
    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Set every user's transmit power (watts).
    pub fn with_equal_power(mut self, watts: f64) -> Self {
        self.powers = vec![watts; self.users];
        self
    }

    pub fn with_split(mut self, m1: usize, m2: usize) -> Self {
        self.m1 = m1;
        self.m2 = m2;
        self
    }

    pub fn with_users(mut self, users: usize) -> Self {
        let p = self.powers.first().copied().unwrap_or(1.0);
        self.users = users;
        self.powers = vec![p; users];
        self
    }

    /// Set the Rician factor (linear) of the far-apart and inter-IRS links.
    pub fn with_far_rician(mut self, k: f64) -> Self {
        for link in Link::FAR {
            self.links.get_mut(link).rician_k = k;
        }
        self
    }

    /// Single-user setup: N = 5, M1 = M2 = 16, Rician links with 10 dB on
    /// the near links and `far_kappa_db` on the rest, P = 15 dBm.
    pub fn single_user(far_kappa_db: f64) -> Self {
        let mut cfg = ScenarioConfig::default();
        for link in [
            &mut cfg.links.user_irs2,
            &mut cfg.links.irs1_irs2,
            &mut cfg.links.irs1_bs,
        ] {
            link.rician_k_db = far_kappa_db;
        }
        cfg.to_scenario()
            .expect("default single-user config is valid")
    }

    /// Multi-user setup: N = 40, M1 = M2 = 16, K = 5, geometric model with
    /// rank(G2) = 2 and rank(G1) = rank(D) = 4.
    pub fn multi_user() -> Self {
        ScenarioConfig::multi_user()
            .to_scenario()
            .expect("default multi-user config is valid")
    }
}

/// Serialized link parameters (dB).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkConfig {
    pub exponent: f64,
    pub rician_k_db: f64,
    pub scatterers: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkConfigs {
    pub user_irs1: LinkConfig,
    pub user_irs2: LinkConfig,
    pub irs1_irs2: LinkConfig,
    pub irs1_bs: LinkConfig,
    pub irs2_bs: LinkConfig,
}

impl Default for LinkConfigs {
    fn default() -> Self {
        let near = LinkConfig {
            exponent: 2.2,
            rician_k_db: 10.0,
            scatterers: 1,
        };
        let far = LinkConfig {
            exponent: 3.0,
            rician_k_db: -10.0,
            scatterers: 4,
        };
        LinkConfigs {
            user_irs1: near,
            user_irs2: LinkConfig {
                scatterers: 1,
                ..far
            },
            irs1_irs2: far,
            irs1_bs: far,
            irs2_bs: LinkConfig {
                scatterers: 2,
                ..near
            },
        }
    }
}

/// JSON scenario description. Every field is optional in the file and
/// defaults to the single-user setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub bs_position: [f64; 3],
    pub irs1_position: [f64; 3],
    pub irs2_position: [f64; 3],
    pub cluster_center: [f64; 3],
    pub cluster_radius_m: f64,
    pub bs_antennas: usize,
    pub irs1_subsurfaces: usize,
    pub irs2_subsurfaces: usize,
    pub users: usize,
    pub ref_path_loss_db: f64,
    pub model: ChannelModel,
    pub links: LinkConfigs,
    /// Common transmit power, used when `tx_powers_dbm` is absent.
    pub tx_power_dbm: f64,
    pub tx_powers_dbm: Option<Vec<f64>>,
    pub noise_dbm: f64,
    pub wavelength_m: f64,
    pub spacing_wavelengths: f64,
    pub aperture_gain: f64,
    pub bs_azimuth_rad: f64,
    pub irs1_azimuth_rad: f64,
    pub irs2_azimuth_rad: f64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            bs_position: [1.0, 0.0, 2.0],
            irs1_position: [0.0, 49.5, 1.0],
            irs2_position: [0.0, 0.5, 1.0],
            cluster_center: [1.0, 50.0, 0.0],
            cluster_radius_m: 0.0,
            bs_antennas: 5,
            irs1_subsurfaces: 16,
            irs2_subsurfaces: 16,
            users: 1,
            ref_path_loss_db: -30.0,
            model: ChannelModel::Rician,
            links: LinkConfigs::default(),
            tx_power_dbm: 15.0,
            tx_powers_dbm: None,
            noise_dbm: -64.0,
            wavelength_m: 0.05,
            spacing_wavelengths: 0.5,
            aperture_gain: 25.0,
            bs_azimuth_rad: PI,
            irs1_azimuth_rad: FRAC_PI_4,
            irs2_azimuth_rad: 3.0 * FRAC_PI_4,
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn multi_user() -> Self {
        let mut links = LinkConfigs::default();
        links.irs2_bs.scatterers = 2;
        links.irs1_bs.scatterers = 4;
        links.irs1_irs2.scatterers = 4;
        links.user_irs1.scatterers = 1;
        links.user_irs2.scatterers = 1;
        ScenarioConfig {
            bs_antennas: 40,
            users: 5,
            cluster_radius_m: 2.0,
            model: ChannelModel::Geometric,
            tx_power_dbm: 30.0,
            links,
            ..ScenarioConfig::default()
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| {
            Error::Config(format!(
                "scenario config, line {} column {}: {e}",
                e.line(),
                e.column()
            ))
        })
    }

    pub fn to_scenario(&self) -> Result<SystemScenario> {
        let powers = match &self.tx_powers_dbm {
            Some(p) => p.iter().map(|&x| dbm_to_watts(x)).collect(),
            None => vec![dbm_to_watts(self.tx_power_dbm); self.users],
        };
        let l = &self.links;
        let table = LinkTable {
            user_irs1: l.user_irs1,
            user_irs2: l.user_irs2,
            irs1_irs2: l.irs1_irs2,
            irs1_bs: l.irs1_bs,
            irs2_bs: l.irs2_bs,
        };
        let sc = SystemScenario {
            bs: self.bs_position.into(),
            irs1: self.irs1_position.into(),
            irs2: self.irs2_position.into(),
            cluster_center: self.cluster_center.into(),
            cluster_radius: self.cluster_radius_m,
            bs_antennas: self.bs_antennas,
            m1: self.irs1_subsurfaces,
            m2: self.irs2_subsurfaces,
            users: self.users,
            ref_loss_db: self.ref_path_loss_db,
            links: table.map(|c| LinkParams {
                exponent: c.exponent,
                rician_k: db_to_linear(c.rician_k_db),
                scatterers: c.scatterers,
            }),
            model: self.model,
            powers,
            noise: dbm_to_watts(self.noise_dbm),
            wavelength: self.wavelength_m,
            spacing: self.spacing_wavelengths,
            aperture_gain: self.aperture_gain,
            bs_azimuth: self.bs_azimuth_rad,
            irs1_azimuth: self.irs1_azimuth_rad,
            irs2_azimuth: self.irs2_azimuth_rad,
            seed: self.seed,
        };
        sc.validate()?;
        Ok(sc)
    }

    pub fn from_scenario(sc: &SystemScenario) -> Self {
        let to_cfg = |p: &LinkParams| LinkConfig {
            exponent: p.exponent,
            rician_k_db: linear_to_db(p.rician_k),
            scatterers: p.scatterers,
        };
        let equal = sc.powers.windows(2).all(|w| w[0] == w[1]);
        ScenarioConfig {
            bs_position: sc.bs.into(),
            irs1_position: sc.irs1.into(),
            irs2_position: sc.irs2.into(),
            cluster_center: sc.cluster_center.into(),
            cluster_radius_m: sc.cluster_radius,
            bs_antennas: sc.bs_antennas,
            irs1_subsurfaces: sc.m1,
            irs2_subsurfaces: sc.m2,
            users: sc.users,
            ref_path_loss_db: sc.ref_loss_db,
            model: sc.model,
            links: LinkConfigs {
                user_irs1: to_cfg(&sc.links.user_irs1),
                user_irs2: to_cfg(&sc.links.user_irs2),
                irs1_irs2: to_cfg(&sc.links.irs1_irs2),
                irs1_bs: to_cfg(&sc.links.irs1_bs),
                irs2_bs: to_cfg(&sc.links.irs2_bs),
            },
            tx_power_dbm: sc.powers.first().map(|&p| watts_to_dbm(p)).unwrap_or(0.0),
            tx_powers_dbm: if equal {
                None
            } else {
                Some(sc.powers.iter().map(|&p| watts_to_dbm(p)).collect())
            },
            noise_dbm: watts_to_dbm(sc.noise),
            wavelength_m: sc.wavelength,
            spacing_wavelengths: sc.spacing,
            aperture_gain: sc.aperture_gain,
            bs_azimuth_rad: sc.bs_azimuth,
            irs1_azimuth_rad: sc.irs1_azimuth,
            irs2_azimuth_rad: sc.irs2_azimuth,
            seed: sc.seed,
        }
    }
}
