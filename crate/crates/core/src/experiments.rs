//! Monte-Carlo experiment harness: JSON experiment specs, parameter sweeps,
//! CSV/summary artifacts and plot-ready series.
//!
//! Seed splitting: for master seed `s`, draw `d` and sweep point `p`
//!
//! - channel seed = first output of ChaCha8 seeded with `s` on stream `d`;
//! - algorithm seed = first output of ChaCha8 seeded with `s` on stream
//!   `((p + 1) << 32) | d`.
//!
//! The channel seed does not depend on the sweep point, so every point of a
//! sweep sees the same channel draws (common random numbers). Draws are
//! evaluated in parallel and reduced in draw order, so artifacts do not
//! depend on the thread count.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::channels::{
    build_double_irs, single_irs_baseline_a1, single_irs_baseline_a2, BaselineRanks, ChannelSet,
    ScenarioConfig,
};
use crate::linalg::{phasor, random_phases, CVec};
use crate::mu_opt::{algorithm1, dft_codebook_search, Algorithm1Options, RxMode};
use crate::report::csv_error;
use crate::su_opt::{
    ao_single_user, init_from_single_irs, opt_theta1, opt_theta2, sdr_benchmark_su, single_irs_opt,
    AoOptions, SdrOptions, SuSolveState,
};
use crate::system::{rank_gain_report, rate, SinrContext};
use crate::{Error, Result};

pub const DEFAULT_DRAWS: usize = 100;

/// Phase-grid points per entry in the closed-form oracle experiment.
const ORACLE_GRID: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExperimentId {
    #[serde(rename = "fig4-rate-vs-power")]
    Fig4RateVsPower,
    #[serde(rename = "fig5-rate-vs-M1-split")]
    Fig5RateVsSplit,
    #[serde(rename = "fig6-rate-vs-totalM")]
    Fig6RateVsTotalM,
    #[serde(rename = "fig7-mu-alg")]
    Fig7MuAlg,
    #[serde(rename = "fig8-mu-vs-power")]
    Fig8MuVsPower,
    #[serde(rename = "fig9-rate-vs-K")]
    Fig9RateVsK,
    #[serde(rename = "prop1-property")]
    Prop1Property,
    #[serde(rename = "prop2-rank")]
    Prop2Rank,
    #[serde(rename = "oracle-suite")]
    OracleSuite,
}

/// Scenario parameter varied along a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    TxPowerDbm,
    /// Subsurfaces on IRS 1 with the total held fixed.
    M1,
    /// Total subsurfaces, split evenly.
    TotalSubsurfaces,
    Users,
    /// Rician factor of the far-apart and inter-IRS links.
    KappaDb,
    /// Subsurfaces per IRS in the closed-form oracle.
    Dim,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::TxPowerDbm => "tx_power_dbm",
            SweepAxis::M1 => "m1",
            SweepAxis::TotalSubsurfaces => "total_subsurfaces",
            SweepAxis::Users => "users",
            SweepAxis::KappaDb => "kappa_db",
            SweepAxis::Dim => "dim",
        }
    }

    fn integral(self) -> bool {
        !matches!(self, SweepAxis::TxPowerDbm | SweepAxis::KappaDb)
    }
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 9] = [
        ExperimentId::Fig4RateVsPower,
        ExperimentId::Fig5RateVsSplit,
        ExperimentId::Fig6RateVsTotalM,
        ExperimentId::Fig7MuAlg,
        ExperimentId::Fig8MuVsPower,
        ExperimentId::Fig9RateVsK,
        ExperimentId::Prop1Property,
        ExperimentId::Prop2Rank,
        ExperimentId::OracleSuite,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentId::Fig4RateVsPower => "fig4-rate-vs-power",
            ExperimentId::Fig5RateVsSplit => "fig5-rate-vs-M1-split",
            ExperimentId::Fig6RateVsTotalM => "fig6-rate-vs-totalM",
            ExperimentId::Fig7MuAlg => "fig7-mu-alg",
            ExperimentId::Fig8MuVsPower => "fig8-mu-vs-power",
            ExperimentId::Fig9RateVsK => "fig9-rate-vs-K",
            ExperimentId::Prop1Property => "prop1-property",
            ExperimentId::Prop2Rank => "prop2-rank",
            ExperimentId::OracleSuite => "oracle-suite",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|id| id.as_str() == s)
    }

    pub fn description(self) -> &'static str {
        match self {
            ExperimentId::Fig4RateVsPower => {
                "single-user rate vs transmit power: AO from single-IRS and DFT initializations, SDR, and the initializations themselves"
            }
            ExperimentId::Fig5RateVsSplit => {
                "single-user rate vs subsurfaces on IRS 1 with the total fixed, against the paired single-IRS optimum"
            }
            ExperimentId::Fig6RateVsTotalM => {
                "single-user rate vs total subsurfaces (even split) for several Rician factors, double vs single IRS"
            }
            ExperimentId::Fig7MuAlg => {
                "multi-user max-min rate vs power: alternating SDR algorithm vs its DFT codebook initialization"
            }
            ExperimentId::Fig8MuVsPower => {
                "multi-user max-min rate vs power: double-IRS vs rank-limited single-IRS baseline"
            }
            ExperimentId::Fig9RateVsK => {
                "multi-user max-min rate vs number of users at fixed power, double vs single IRS"
            }
            ExperimentId::Prop1Property => {
                "single-user: double-IRS AO from the single-IRS initialization never below the single-IRS optimum"
            }
            ExperimentId::Prop2Rank => {
                "numerical ranks of the double-IRS and single-IRS effective channels vs number of users"
            }
            ExperimentId::OracleSuite => {
                "closed-form reflect updates vs exhaustive phase-grid search on small surfaces"
            }
        }
    }

    pub fn axis(self) -> SweepAxis {
        match self {
            ExperimentId::Fig4RateVsPower
            | ExperimentId::Fig7MuAlg
            | ExperimentId::Fig8MuVsPower => SweepAxis::TxPowerDbm,
            ExperimentId::Fig5RateVsSplit => SweepAxis::M1,
            ExperimentId::Fig6RateVsTotalM => SweepAxis::TotalSubsurfaces,
            ExperimentId::Fig9RateVsK | ExperimentId::Prop2Rank => SweepAxis::Users,
            ExperimentId::Prop1Property => SweepAxis::KappaDb,
            ExperimentId::OracleSuite => SweepAxis::Dim,
        }
    }

    pub fn default_sweep(self) -> Vec<f64> {
        match self {
            ExperimentId::Fig4RateVsPower => vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
            ExperimentId::Fig5RateVsSplit => vec![4.0, 8.0, 12.0, 16.0, 20.0, 24.0, 28.0],
            ExperimentId::Fig6RateVsTotalM => vec![16.0, 32.0, 64.0, 128.0],
            ExperimentId::Fig7MuAlg | ExperimentId::Fig8MuVsPower => {
                vec![10.0, 15.0, 20.0, 25.0, 30.0]
            }
            ExperimentId::Fig9RateVsK => vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            ExperimentId::Prop1Property => vec![-10.0, 0.0, 10.0],
            ExperimentId::Prop2Rank => vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            ExperimentId::OracleSuite => vec![1.0, 2.0, 3.0],
        }
    }

    pub fn is_multi_user(self) -> bool {
        matches!(
            self,
            ExperimentId::Fig7MuAlg
                | ExperimentId::Fig8MuVsPower
                | ExperimentId::Fig9RateVsK
                | ExperimentId::Prop2Rank
        )
    }

    /// Scenario before spec overrides.
    pub fn base_config(self) -> ScenarioConfig {
        if self.is_multi_user() {
            ScenarioConfig::multi_user()
        } else {
            ScenarioConfig::default()
        }
    }
}

fn default_restarts() -> usize {
    crate::su_opt::DEFAULT_RESTARTS
}
fn default_ao_iterations() -> usize {
    crate::su_opt::DEFAULT_MAX_ITERATIONS
}
fn default_outer_iterations() -> usize {
    crate::mu_opt::DEFAULT_OUTER_ITERATIONS
}
fn default_candidates() -> usize {
    crate::sdp::DEFAULT_CANDIDATES
}
fn default_eps() -> f64 {
    crate::sdp::DEFAULT_BISECTION_EPS
}
fn default_xi() -> f64 {
    crate::mu_opt::DEFAULT_XI
}
fn default_receivers() -> Vec<RxMode> {
    vec![RxMode::Mmse, RxMode::Zf]
}
fn default_kappas() -> Vec<f64> {
    vec![-10.0, 0.0, 10.0]
}
fn default_irs_bs_rank() -> usize {
    2
}
fn default_true() -> bool {
    true
}
fn default_draws() -> usize {
    DEFAULT_DRAWS
}

/// Algorithm knobs shared by all experiments; each experiment reads the
/// ones it needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentOptions {
    /// Starts of the single-IRS optimizer.
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    /// Iteration cap of single-user AO.
    #[serde(default = "default_ao_iterations")]
    pub ao_iterations: usize,
    /// Outer iteration cap of the multi-user alternating algorithm.
    #[serde(default = "default_outer_iterations")]
    pub outer_iterations: usize,
    /// Gaussian randomization candidates per relaxation.
    #[serde(default = "default_candidates")]
    pub candidates: usize,
    /// Bisection accuracy.
    #[serde(default = "default_eps")]
    pub eps: f64,
    /// Fractional improvement below which the multi-user algorithm stops.
    #[serde(default = "default_xi")]
    pub xi: f64,
    /// Receivers evaluated by the multi-user experiments.
    #[serde(default = "default_receivers")]
    pub receivers: Vec<RxMode>,
    /// Rician factors (dB) of the total-subsurface sweep.
    #[serde(default = "default_kappas")]
    pub kappas_db: Vec<f64>,
    /// Rank of the single-IRS baseline's IRS-BS link.
    #[serde(default = "default_irs_bs_rank")]
    pub baseline_irs_bs_rank: usize,
    /// Include the SDR benchmark in the power sweep.
    #[serde(default = "default_true")]
    pub sdr: bool,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        serde_json::from_value(Value::Object(Default::default())).expect("all options defaulted")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub experiment: ExperimentId,
    /// Scenario fields overriding the experiment's base scenario; nested
    /// objects (e.g. `links`) are merged key by key.
    #[serde(default)]
    pub scenario: serde_json::Map<String, Value>,
    /// Sweep values; the experiment's default sweep when absent.
    #[serde(default)]
    pub sweep: Option<Vec<f64>>,
    #[serde(default = "default_draws")]
    pub draws: usize,
    #[serde(default)]
    pub seed: u64,
    /// Output directory.
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub options: ExperimentOptions,
    #[serde(skip)]
    source: Option<String>,
}

impl ExperimentSpec {
    pub fn new(experiment: ExperimentId) -> Self {
        ExperimentSpec {
            experiment,
            scenario: Default::default(),
            sweep: None,
            draws: DEFAULT_DRAWS,
            seed: 0,
            output: None,
            options: ExperimentOptions::default(),
            source: None,
        }
    }

    /// Parse a JSON spec. Errors carry the line and column of the problem.
    pub fn from_json(text: &str) -> Result<Self> {
        let mut spec: ExperimentSpec = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("line {} column {}: {e}", e.line(), e.column())))?;
        spec.source = Some(text.to_owned());
        Ok(spec)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn sweep_values(&self) -> Vec<f64> {
        self.sweep
            .clone()
            .unwrap_or_else(|| self.experiment.default_sweep())
    }

    /// Line of `"key"` in the source text, for diagnostics on errors found
    /// after parsing.
    fn locate(&self, key: &str) -> String {
        let needle = format!("\"{key}\"");
        self.source
            .as_deref()
            .and_then(|src| {
                src.lines()
                    .position(|l| l.contains(&needle))
                    .map(|i| format!("line {}: ", i + 1))
            })
            .unwrap_or_default()
    }

    fn config_error(&self, key: &str, msg: impl std::fmt::Display) -> Error {
        Error::Config(format!("{}{key}: {msg}", self.locate(key)))
    }

    /// Base scenario with the overrides applied.
    pub fn scenario_config(&self) -> Result<ScenarioConfig> {
        let mut base = serde_json::to_value(self.experiment.base_config())?;
        merge(&mut base, &Value::Object(self.scenario.clone()));
        serde_json::from_value(base).map_err(|e| {
            let msg = e.to_string();
            // point at the offending key when the message names one
            let key = msg
                .split('`')
                .nth(1)
                .filter(|k| {
                    self.source
                        .as_deref()
                        .is_some_and(|s| s.contains(&format!("\"{k}\"")))
                })
                .unwrap_or("scenario")
                .to_owned();
            self.config_error(&key, format!("scenario override: {msg}"))
        })
    }

    /// Check the experiment file and resolve every sweep point's scenario.
    pub fn plan(&self) -> Result<Plan> {
        if self.draws == 0 {
            return Err(self.config_error("draws", "must be at least 1"));
        }
        let sweep = self.sweep_values();
        if sweep.is_empty() {
            return Err(self.config_error("sweep", "must not be empty"));
        }
        let o = &self.options;
        if o.restarts == 0 || o.ao_iterations == 0 || o.outer_iterations == 0 || o.candidates == 0 {
            return Err(self.config_error(
                "options",
                "restarts, ao_iterations, outer_iterations and candidates must be positive",
            ));
        }
        if !(o.eps > 0.0 && o.eps.is_finite()) || !(o.xi >= 0.0 && o.xi.is_finite()) {
            return Err(self.config_error("options", "eps must be positive and xi non-negative"));
        }
        if self.experiment.is_multi_user() && self.experiment != ExperimentId::Prop2Rank {
            if o.receivers.is_empty() {
                return Err(self.config_error("receivers", "at least one receiver is required"));
            }
            if let Some(bad) = o
                .receivers
                .iter()
                .find(|m| !matches!(m, RxMode::Zf | RxMode::Mmse))
            {
                return Err(self.config_error(
                    "receivers",
                    format!("'{}' is not supported; use zf or mmse", bad.name()),
                ));
            }
        }
        if self.experiment == ExperimentId::Fig6RateVsTotalM && o.kappas_db.is_empty() {
            return Err(self.config_error("kappas_db", "at least one Rician factor is required"));
        }
        if o.baseline_irs_bs_rank == 0 {
            return Err(self.config_error("baseline_irs_bs_rank", "must be at least 1"));
        }
        let base = self.scenario_config()?;
        base.to_scenario()
            .map_err(|e| self.config_error("scenario", e))?;
        let axis = self.experiment.axis();
        let mut points = Vec::with_capacity(sweep.len());
        for &x in &sweep {
            let cfg = apply_axis(&base, axis, x).map_err(|e| self.config_error("sweep", e))?;
            let mut variants = vec![cfg.clone()];
            if self.experiment == ExperimentId::Fig6RateVsTotalM {
                variants = o
                    .kappas_db
                    .iter()
                    .map(|&k| with_far_kappa(&cfg, k))
                    .collect();
            }
            for v in &variants {
                let sc = v
                    .to_scenario()
                    .map_err(|e| self.config_error("sweep", format!("at {x}: {e}")))?;
                if self.experiment.is_multi_user() && self.experiment != ExperimentId::Fig7MuAlg {
                    let max_rank = sc.bs_antennas.min(sc.total_subsurfaces());
                    if o.baseline_irs_bs_rank > max_rank {
                        return Err(self.config_error(
                            "baseline_irs_bs_rank",
                            format!("exceeds min(N, M) = {max_rank}"),
                        ));
                    }
                    if sc.users > sc.total_subsurfaces() {
                        return Err(
                            self.config_error("sweep", format!("K = {} exceeds M", sc.users))
                        );
                    }
                }
            }
            points.push(SweepPoint { x, variants });
        }
        Ok(Plan {
            id: self.experiment,
            axis,
            methods: methods(self.experiment, o),
            checks: check_specs(self.experiment),
            points,
            draws: self.draws,
            seed: self.seed,
            options: o.clone(),
        })
    }
}

fn merge(base: &mut Value, over: &Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, o) => *b = o.clone(),
    }
}

fn as_count(x: f64, what: &str) -> std::result::Result<usize, String> {
    if x.fract() != 0.0 || x < 0.0 || !x.is_finite() {
        return Err(format!("{what} must be a non-negative integer, got {x}"));
    }
    Ok(x as usize)
}

fn with_far_kappa(cfg: &ScenarioConfig, kappa_db: f64) -> ScenarioConfig {
    let mut c = cfg.clone();
    c.links.user_irs2.rician_k_db = kappa_db;
    c.links.irs1_irs2.rician_k_db = kappa_db;
    c.links.irs1_bs.rician_k_db = kappa_db;
    c
}

fn apply_axis(
    base: &ScenarioConfig,
    axis: SweepAxis,
    x: f64,
) -> std::result::Result<ScenarioConfig, String> {
    if !x.is_finite() {
        return Err(format!("non-finite sweep value {x}"));
    }
    if axis.integral() {
        as_count(x, axis.name())?;
    }
    let mut c = base.clone();
    match axis {
        SweepAxis::TxPowerDbm => {
            c.tx_power_dbm = x;
            c.tx_powers_dbm = None;
        }
        SweepAxis::M1 => {
            let total = c.irs1_subsurfaces + c.irs2_subsurfaces;
            let m1 = x as usize;
            if m1 == 0 || m1 >= total {
                return Err(format!("m1 = {m1} must lie in 1..{total}"));
            }
            c.irs1_subsurfaces = m1;
            c.irs2_subsurfaces = total - m1;
        }
        SweepAxis::TotalSubsurfaces => {
            let m = x as usize;
            if m < 2 || !m.is_multiple_of(2) {
                return Err(format!(
                    "total subsurfaces must be even and at least 2, got {m}"
                ));
            }
            c.irs1_subsurfaces = m / 2;
            c.irs2_subsurfaces = m / 2;
        }
        SweepAxis::Users => {
            c.users = x as usize;
            c.tx_powers_dbm = None;
        }
        SweepAxis::KappaDb => c = with_far_kappa(&c, x),
        SweepAxis::Dim => {
            let d = x as usize;
            if !(1..=3).contains(&d) {
                return Err(format!("oracle dimension must be 1, 2 or 3, got {d}"));
            }
            c.irs1_subsurfaces = d;
            c.irs2_subsurfaces = d;
            c.users = 1;
            c.tx_powers_dbm = None;
        }
    }
    Ok(c)
}

fn methods(id: ExperimentId, o: &ExperimentOptions) -> Vec<String> {
    let per_mode = |names: &[&str]| -> Vec<String> {
        o.receivers
            .iter()
            .flat_map(|m| names.iter().map(move |n| format!("{n}-{}", m.name())))
            .collect()
    };
    let owned = |names: &[&str]| names.iter().map(|s| s.to_string()).collect();
    match id {
        ExperimentId::Fig4RateVsPower => {
            let mut v: Vec<String> = owned(&["ao-ib", "ao-dft", "init-ib", "init-dft"]);
            if o.sdr {
                v.push("sdr".into());
            }
            v
        }
        ExperimentId::Fig5RateVsSplit => owned(&["double-ao", "double-ib", "single-irs"]),
        ExperimentId::Fig6RateVsTotalM => o
            .kappas_db
            .iter()
            .flat_map(|k| {
                [
                    format!("double-ao-kappa{k}dB"),
                    format!("single-irs-kappa{k}dB"),
                ]
            })
            .collect(),
        ExperimentId::Fig7MuAlg => per_mode(&["alg1", "dft"]),
        ExperimentId::Fig8MuVsPower | ExperimentId::Fig9RateVsK => {
            per_mode(&["double-alg1", "single-alg1"])
        }
        ExperimentId::Prop1Property => owned(&["double-ao-ib", "single-irs"]),
        ExperimentId::Prop2Rank => owned(&["rank-h", "rank-h-bar", "rank-bound"]),
        ExperimentId::OracleSuite => owned(&[
            "theta2-closed",
            "theta2-grid",
            "theta1-closed",
            "theta1-grid",
        ]),
    }
}

/// Per-draw property checked by an experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckSpec {
    pub name: &'static str,
    /// Fraction of evaluated draws that must pass; `None` for checks that
    /// are only reported.
    pub required_fraction: Option<f64>,
}

fn check_specs(id: ExperimentId) -> Vec<CheckSpec> {
    let all = |name| CheckSpec {
        name,
        required_fraction: Some(1.0),
    };
    match id {
        ExperimentId::Fig4RateVsPower => vec![all("ao-not-below-init")],
        ExperimentId::Fig5RateVsSplit | ExperimentId::Prop1Property => {
            vec![
                all("ib-not-below-single-irs"),
                all("ao-not-below-single-irs"),
            ]
        }
        ExperimentId::Fig6RateVsTotalM => vec![all("ao-not-below-single-irs")],
        ExperimentId::Fig7MuAlg => vec![all("alg1-not-below-dft")],
        ExperimentId::Fig8MuVsPower | ExperimentId::Fig9RateVsK => vec![CheckSpec {
            name: "zf-exists-single-irs",
            required_fraction: None,
        }],
        ExperimentId::Prop2Rank => vec![
            CheckSpec {
                name: "clipped-rank-bound",
                required_fraction: Some(0.95),
            },
            CheckSpec {
                name: "raw-rank-bound",
                required_fraction: None,
            },
            CheckSpec {
                name: "single-reflection-rank-additivity",
                required_fraction: None,
            },
        ],
        ExperimentId::OracleSuite => vec![
            all("closed-form-not-below-grid"),
            all("grid-within-resolution"),
        ],
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub x: f64,
    /// Scenario of this point; several for the Rician-factor families.
    pub variants: Vec<ScenarioConfig>,
}

/// A validated, fully resolved experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub id: ExperimentId,
    pub axis: SweepAxis,
    pub methods: Vec<String>,
    pub checks: Vec<CheckSpec>,
    pub points: Vec<SweepPoint>,
    pub draws: usize,
    pub seed: u64,
    pub options: ExperimentOptions,
}

fn split_seed(master: u64, stream: u64) -> u64 {
    let mut r = ChaCha8Rng::seed_from_u64(master);
    r.set_stream(stream);
    r.next_u64()
}

/// Seed of the channel realization of `draw`; identical across sweep points.
pub fn channel_seed(master: u64, draw: usize) -> u64 {
    split_seed(master, draw as u64)
}

/// Seed of the optimizers' randomness at (`point`, `draw`).
pub fn algorithm_seed(master: u64, point: usize, draw: usize) -> u64 {
    split_seed(master, ((point as u64 + 1) << 32) | draw as u64)
}

/// Values of one draw: one entry per method (`None` when that method
/// failed) and one entry per check (`None` when it could not be evaluated).
#[derive(Debug, Clone, PartialEq)]
pub struct DrawOutcome {
    pub values: Vec<Option<f64>>,
    pub checks: Vec<Option<bool>>,
    pub error: Option<String>,
}

impl DrawOutcome {
    fn empty(plan: &Plan) -> Self {
        DrawOutcome {
            values: vec![None; plan.methods.len()],
            checks: vec![None; plan.checks.len()],
            error: None,
        }
    }

    fn note<T>(&mut self, r: Result<T>) -> Option<T> {
        match r {
            Ok(v) => Some(v),
            Err(e) => {
                self.error.get_or_insert_with(|| e.to_string());
                None
            }
        }
    }
}

/// Relative slack for comparisons between an optimizer and the solution it
/// was initialized from.
const CMP_REL: f64 = 1e-9;

fn not_below(a: f64, b: f64) -> bool {
    a >= b * (1.0 - CMP_REL)
}

struct SuRun {
    chs: ChannelSet,
    ctx: SinrContext,
    single_snr: f64,
    ib: SuSolveState,
    ao_ib: SuSolveState,
}

fn su_core(
    cfg: &ScenarioConfig,
    opts: &ExperimentOptions,
    ch_seed: u64,
    rng: &mut ChaCha8Rng,
) -> Result<SuRun> {
    let sc = cfg.to_scenario()?;
    let chs = build_double_irs(&sc, &mut ChaCha8Rng::seed_from_u64(ch_seed))?;
    let ctx = SinrContext::from_scenario(&sc)?;
    let ao = AoOptions {
        max_iterations: opts.ao_iterations,
        ..Default::default()
    };
    let base = single_irs_baseline_a1(&chs)?;
    let single = single_irs_opt(&base, &ctx, ao, opts.restarts, rng)?;
    let ib = init_from_single_irs(&chs, &ctx, &single)?.state;
    let ao_ib = ao_single_user(&chs, &ctx, ib.clone(), ao)?;
    Ok(SuRun {
        chs,
        ctx,
        single_snr: single.snr,
        ib,
        ao_ib,
    })
}

fn dft_su_state(chs: &ChannelSet, ctx: &SinrContext) -> Result<SuSolveState> {
    let cb = dft_codebook_search(chs, ctx, RxMode::Mrc)?;
    let w = cb.rx.w.column(0).into_owned();
    SuSolveState::new(chs, ctx, cb.theta1, cb.theta2, w)
}

fn eval_fig4(
    plan: &Plan,
    cfg: &ScenarioConfig,
    ch_seed: u64,
    rng: &mut ChaCha8Rng,
    out: &mut DrawOutcome,
) {
    let opts = &plan.options;
    let Some(run) = out.note(su_core(cfg, opts, ch_seed, rng)) else {
        return;
    };
    out.values[0] = Some(run.ao_ib.rate());
    out.values[2] = Some(run.ib.rate());
    let ao = AoOptions {
        max_iterations: opts.ao_iterations,
        ..Default::default()
    };
    let mut monotone = not_below(run.ao_ib.snr, run.ib.snr);
    if let Some(dft) = out.note(dft_su_state(&run.chs, &run.ctx)) {
        out.values[3] = Some(dft.rate());
        if let Some(st) = out.note(ao_single_user(&run.chs, &run.ctx, dft.clone(), ao)) {
            out.values[1] = Some(st.rate());
            monotone &= not_below(st.snr, dft.snr);
        }
    }
    out.checks[0] = Some(monotone);
    if opts.sdr {
        let sdr = SdrOptions {
            candidates: opts.candidates,
            ..Default::default()
        };
        if let Some(b) = out.note(sdr_benchmark_su(&run.chs, &run.ctx, sdr, rng)) {
            out.values[4] = Some(rate(b.snr));
        }
    }
}

fn eval_prop1_like(
    plan: &Plan,
    cfg: &ScenarioConfig,
    ch_seed: u64,
    rng: &mut ChaCha8Rng,
    out: &mut DrawOutcome,
) {
    let Some(run) = out.note(su_core(cfg, &plan.options, ch_seed, rng)) else {
        return;
    };
    let with_ib = plan.id == ExperimentId::Fig5RateVsSplit;
    out.values[0] = Some(run.ao_ib.rate());
    if with_ib {
        out.values[1] = Some(run.ib.rate());
    }
    *out.values.last_mut().unwrap() = Some(rate(run.single_snr));
    out.checks[0] = Some(not_below(run.ib.snr, run.single_snr));
    out.checks[1] = Some(not_below(run.ao_ib.snr, run.single_snr));
}

fn eval_fig6(
    plan: &Plan,
    point: &SweepPoint,
    ch_seed: u64,
    rng: &mut ChaCha8Rng,
    out: &mut DrawOutcome,
) {
    let mut all_ok = Some(true);
    for (i, cfg) in point.variants.iter().enumerate() {
        match out.note(su_core(cfg, &plan.options, ch_seed, rng)) {
            Some(run) => {
                out.values[2 * i] = Some(run.ao_ib.rate());
                out.values[2 * i + 1] = Some(rate(run.single_snr));
                all_ok = all_ok.map(|ok| ok && not_below(run.ao_ib.snr, run.single_snr));
            }
            None => all_ok = None,
        }
    }
    out.checks[0] = all_ok;
}

fn alg1_options(o: &ExperimentOptions, mode: RxMode) -> Algorithm1Options {
    Algorithm1Options {
        max_iterations: o.outer_iterations,
        xi: o.xi,
        eps: o.eps,
        candidates: o.candidates,
        rx_mode: mode,
        ..Default::default()
    }
}

/// Max-min rate of Algorithm 1 from the DFT codebook initialization, plus
/// the initialization's own rate. A ZF point whose channel admits no
/// zero-forcing receiver scores zero.
fn mu_run(
    chs: &ChannelSet,
    ctx: &SinrContext,
    opts: &ExperimentOptions,
    mode: RxMode,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, f64, bool)> {
    let init = dft_codebook_search(chs, ctx, mode)?.into_state(chs, ctx)?;
    let zf_score = |fallback: bool, v: f64| {
        if mode == RxMode::Zf && fallback {
            0.0
        } else {
            v
        }
    };
    let init_sinr = zf_score(init.rx.zf_fallback, init.min_sinr);
    let st = algorithm1(chs, ctx, init, alg1_options(opts, mode), rng).map_err(Error::from)?;
    let zf_exists = !st.rx.zf_fallback;
    Ok((
        zf_score(st.rx.zf_fallback, st.min_sinr),
        init_sinr,
        zf_exists,
    ))
}

fn mu_sets(
    plan: &Plan,
    cfg: &ScenarioConfig,
    ch_seed: u64,
    with_single: bool,
) -> Result<(ChannelSet, Option<ChannelSet>, SinrContext)> {
    let sc = cfg.to_scenario()?;
    let mut r = ChaCha8Rng::seed_from_u64(ch_seed);
    let double = build_double_irs(&sc, &mut r)?;
    let single = if with_single {
        let ranks = BaselineRanks {
            irs_bs: plan.options.baseline_irs_bs_rank,
            user_irs: sc.users,
        };
        Some(single_irs_baseline_a2(&sc, ranks, &mut r)?)
    } else {
        None
    };
    Ok((double, single, SinrContext::from_scenario(&sc)?))
}

fn eval_mu(
    plan: &Plan,
    cfg: &ScenarioConfig,
    ch_seed: u64,
    rng: &mut ChaCha8Rng,
    out: &mut DrawOutcome,
) {
    let fig7 = plan.id == ExperimentId::Fig7MuAlg;
    let Some((double, single, ctx)) = out.note(mu_sets(plan, cfg, ch_seed, !fig7)) else {
        return;
    };
    let mut check = Some(true);
    for (i, &mode) in plan.options.receivers.iter().enumerate() {
        match out.note(mu_run(&double, &ctx, &plan.options, mode, rng)) {
            Some((sinr, init, _)) => {
                out.values[2 * i] = Some(rate(sinr));
                if fig7 {
                    out.values[2 * i + 1] = Some(rate(init));
                    check = check.map(|c| c && sinr >= init);
                }
            }
            None => check = None,
        }
        if let Some(single) = &single {
            match out.note(mu_run(single, &ctx, &plan.options, mode, rng)) {
                Some((sinr, _, zf_exists)) => {
                    out.values[2 * i + 1] = Some(rate(sinr));
                    if mode == RxMode::Zf {
                        check = check.map(|c| c && zf_exists);
                    }
                }
                None => check = None,
            }
        }
    }
    if fig7 || plan.options.receivers.contains(&RxMode::Zf) {
        out.checks[0] = check;
    }
}

fn eval_prop2(
    plan: &Plan,
    cfg: &ScenarioConfig,
    ch_seed: u64,
    rng: &mut ChaCha8Rng,
    out: &mut DrawOutcome,
) {
    let Some((double, Some(single), _)) = out.note(mu_sets(plan, cfg, ch_seed, true)) else {
        return;
    };
    if let Some(rep) = out.note(rank_gain_report(&double, &single, rng)) {
        out.values = vec![
            Some(rep.rank_h as f64),
            Some(rep.rank_h_bar as f64),
            Some(rep.bound as f64),
        ];
        out.checks = vec![
            Some(rep.clipped_bound_holds),
            Some(rep.raw_bound_holds),
            Some(rep.hs_additivity_holds),
        ];
    }
}

/// Largest `|c0 + sum_m v_m x_m|^2` over `x_m` on a `points`-phase grid.
fn grid_max(c0: num_complex::Complex64, v: &[num_complex::Complex64], points: usize) -> f64 {
    let grid: Vec<_> = (0..points)
        .map(|i| phasor(std::f64::consts::TAU * i as f64 / points as f64))
        .collect();
    let mut best = 0.0f64;
    let mut idx = vec![0usize; v.len()];
    loop {
        let s = idx
            .iter()
            .zip(v)
            .fold(c0, |acc, (&i, vm)| acc + vm * grid[i]);
        best = best.max(s.norm_sqr());
        let mut pos = 0;
        loop {
            if pos == idx.len() {
                return best;
            }
            idx[pos] += 1;
            if idx[pos] < points {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

fn eval_oracle(cfg: &ScenarioConfig, ch_seed: u64, rng: &mut ChaCha8Rng, out: &mut DrawOutcome) {
    let res = (|| -> Result<()> {
        let sc = cfg.to_scenario()?;
        let chs = build_double_irs(&sc, &mut ChaCha8Rng::seed_from_u64(ch_seed))?;
        let ctx = SinrContext::from_scenario(&sc)?;
        let (m1, m2) = (chs.m1(), chs.m2());
        let t1 = random_phases(m1, rng);
        let t2 = random_phases(m2, rng);
        let w = CVec::from_fn(chs.antennas(), |_, _| crate::linalg::complex_gaussian(rng));
        let scale = ctx.powers()[0] / (ctx.noise() * w.norm_squared());
        let snr = |c0: num_complex::Complex64, v: &[num_complex::Complex64], x: &CVec| {
            let s = v
                .iter()
                .zip(x.iter())
                .fold(c0, |acc, (vm, xm)| acc + vm * xm);
            s.norm_sqr() * scale
        };
        // h = (sum_m theta1_m Q_m + R2) theta2 + R1 theta1
        let mut a = chs.r2[0].clone();
        for (m, q) in chs.q[0].iter().enumerate() {
            a += q * t1[m];
        }
        let c0 = w.dotc(&(&chs.r1[0] * &t1));
        let v2: Vec<_> = (0..m2).map(|m| w.dotc(&a.column(m).into_owned())).collect();
        let closed2 = snr(c0, &v2, &opt_theta2(&chs, &t1, &w)?);
        let grid2 = grid_max(c0, &v2, ORACLE_GRID) * scale;
        // h = sum_m theta1_m (Q_m theta2 + R1[:, m]) + R2 theta2
        let c0 = w.dotc(&(&chs.r2[0] * &t2));
        let v1: Vec<_> = (0..m1)
            .map(|m| w.dotc(&(&chs.q[0][m] * &t2 + chs.r1[0].column(m))))
            .collect();
        let closed1 = snr(c0, &v1, &opt_theta1(&chs, &t2, &w)?);
        let grid1 = grid_max(c0, &v1, ORACLE_GRID) * scale;
        out.values = vec![
            Some(rate(closed2)),
            Some(rate(grid2)),
            Some(rate(closed1)),
            Some(rate(grid1)),
        ];
        let floor = (std::f64::consts::PI / ORACLE_GRID as f64).cos().powi(2);
        out.checks = vec![
            Some(not_below(closed2, grid2) && not_below(closed1, grid1)),
            Some(not_below(grid2, closed2 * floor) && not_below(grid1, closed1 * floor)),
        ];
        Ok(())
    })();
    out.note(res);
}

/// Evaluate one draw at one sweep point.
pub fn evaluate_draw(plan: &Plan, point: usize, draw: usize) -> DrawOutcome {
    let mut out = DrawOutcome::empty(plan);
    let p = &plan.points[point];
    let ch_seed = channel_seed(plan.seed, draw);
    let mut rng = ChaCha8Rng::seed_from_u64(algorithm_seed(plan.seed, point, draw));
    let cfg = &p.variants[0];
    match plan.id {
        ExperimentId::Fig4RateVsPower => eval_fig4(plan, cfg, ch_seed, &mut rng, &mut out),
        ExperimentId::Fig5RateVsSplit | ExperimentId::Prop1Property => {
            eval_prop1_like(plan, cfg, ch_seed, &mut rng, &mut out)
        }
        ExperimentId::Fig6RateVsTotalM => eval_fig6(plan, p, ch_seed, &mut rng, &mut out),
        ExperimentId::Fig7MuAlg | ExperimentId::Fig8MuVsPower | ExperimentId::Fig9RateVsK => {
            eval_mu(plan, cfg, ch_seed, &mut rng, &mut out)
        }
        ExperimentId::Prop2Rank => eval_prop2(plan, cfg, ch_seed, &mut rng, &mut out),
        ExperimentId::OracleSuite => eval_oracle(cfg, ch_seed, &mut rng, &mut out),
    }
    out
}

/// Mean and standard error of one method at one sweep point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stat {
    pub mean: Option<f64>,
    pub stderr: Option<f64>,
    pub n: usize,
}

fn stat(values: impl Iterator<Item = f64>) -> Stat {
    let v: Vec<f64> = values.collect();
    let n = v.len();
    if n == 0 {
        return Stat {
            mean: None,
            stderr: None,
            n,
        };
    }
    let mean = v.iter().sum::<f64>() / n as f64;
    let stderr = if n > 1 {
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    } else {
        0.0
    };
    Stat {
        mean: Some(mean),
        stderr: Some(stderr),
        n,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Ok,
    /// Some draws failed for some method; means cover the rest.
    Partial,
    /// Every draw failed for at least one method.
    Failed,
}

impl RowStatus {
    fn as_str(self) -> &'static str {
        match self {
            RowStatus::Ok => "ok",
            RowStatus::Partial => "partial",
            RowStatus::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointSummary {
    pub x: f64,
    pub stats: Vec<Stat>,
    /// Draws with at least one failed method.
    pub failed_draws: usize,
    pub status: RowStatus,
    /// First error message seen at this point.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub experiment: &'static str,
    pub seed: u64,
    pub draws: usize,
    pub sweep_axis: &'static str,
    pub methods: Vec<String>,
    pub points: Vec<PointSummary>,
    pub assertions: Vec<Assertion>,
    pub failed_draws: usize,
    /// All embedded assertions passed.
    pub passed: bool,
}

fn fmt_num(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

pub fn csv_header(plan: &Plan) -> Vec<String> {
    let mut h = vec![plan.axis.name().to_string()];
    for m in &plan.methods {
        h.push(format!("{m}_mean"));
        h.push(format!("{m}_stderr"));
    }
    h.extend(["draws", "failed_draws", "status"].map(String::from));
    h
}

fn csv_row(plan: &Plan, p: &PointSummary) -> Vec<String> {
    let mut r = vec![format!("{}", p.x)];
    for s in &p.stats {
        r.push(fmt_num(s.mean));
        r.push(fmt_num(s.stderr));
    }
    r.push(plan.draws.to_string());
    r.push(p.failed_draws.to_string());
    r.push(p.status.as_str().to_string());
    r
}

fn summarize_point(plan: &Plan, x: f64, outcomes: &[DrawOutcome]) -> PointSummary {
    let stats: Vec<Stat> = (0..plan.methods.len())
        .map(|m| stat(outcomes.iter().filter_map(|o| o.values[m])))
        .collect();
    let failed_draws = outcomes
        .iter()
        .filter(|o| o.values.iter().any(Option::is_none))
        .count();
    let status = if stats.iter().any(|s| s.n == 0) {
        RowStatus::Failed
    } else if failed_draws > 0 {
        RowStatus::Partial
    } else {
        RowStatus::Ok
    };
    PointSummary {
        x,
        stats,
        failed_draws,
        status,
        first_error: outcomes.iter().find_map(|o| o.error.clone()),
    }
}

fn check_assertions(plan: &Plan, outcomes: &[Vec<DrawOutcome>]) -> Vec<Assertion> {
    plan.checks
        .iter()
        .enumerate()
        .map(|(c, spec)| {
            let results: Vec<bool> = outcomes
                .iter()
                .flatten()
                .filter_map(|o| o.checks[c])
                .collect();
            let pass = results.iter().filter(|&&b| b).count();
            let frac = if results.is_empty() {
                1.0
            } else {
                pass as f64 / results.len() as f64
            };
            let passed = spec.required_fraction.is_none_or(|req| frac >= req);
            let req = spec
                .required_fraction
                .map(|r| format!("required {r}"))
                .unwrap_or_else(|| "reported only".into());
            Assertion {
                name: spec.name.to_string(),
                passed,
                detail: format!("{pass}/{} draws ({req})", results.len()),
            }
        })
        .collect()
}

fn show(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}"))
        .unwrap_or_else(|| "missing".into())
}

fn mean_of(plan: &Plan, points: &[PointSummary], method: &str, i: usize) -> Option<f64> {
    let m = plan.methods.iter().position(|n| n == method)?;
    points[i].stats[m].mean
}

/// Curve-level assertions on the point means.
fn curve_assertions(plan: &Plan, points: &[PointSummary]) -> Vec<Assertion> {
    let mut out = Vec::new();
    let dominance = |out: &mut Vec<Assertion>, hi: &str, lo: &str| {
        let mut bad = Vec::new();
        for (i, p) in points.iter().enumerate() {
            match (mean_of(plan, points, hi, i), mean_of(plan, points, lo, i)) {
                (Some(a), Some(b)) if a >= b - 1e-12 => {}
                _ => bad.push(p.x),
            }
        }
        out.push(Assertion {
            name: format!("{hi} >= {lo} at every point"),
            passed: bad.is_empty(),
            detail: if bad.is_empty() {
                format!("{} points", points.len())
            } else {
                format!("violated or missing at {bad:?}")
            },
        });
    };
    match plan.id {
        ExperimentId::Fig5RateVsSplit => dominance(&mut out, "double-ao", "single-irs"),
        ExperimentId::Fig6RateVsTotalM => {
            for k in &plan.options.kappas_db {
                dominance(
                    &mut out,
                    &format!("double-ao-kappa{k}dB"),
                    &format!("single-irs-kappa{k}dB"),
                );
            }
        }
        ExperimentId::Fig8MuVsPower if points.len() >= 2 => {
            let last = points.len() - 1;
            for mode in &plan.options.receivers {
                let (d, s) = (
                    format!("double-alg1-{}", mode.name()),
                    format!("single-alg1-{}", mode.name()),
                );
                let gain =
                    |m: &str| Some(mean_of(plan, points, m, last)? - mean_of(plan, points, m, 0)?);
                let (gd, gs) = (gain(&d), gain(&s));
                out.push(Assertion {
                    name: format!("{d} gains more than {s} over the sweep"),
                    passed: matches!((gd, gs), (Some(a), Some(b)) if a > b),
                    detail: format!(
                        "rate gain double {}, single {} bits/s/Hz",
                        show(gd),
                        show(gs)
                    ),
                });
            }
        }
        ExperimentId::Fig9RateVsK => {
            let r = plan.options.baseline_irs_bs_rank as f64;
            let at = |k: f64| points.iter().position(|p| p.x == k);
            if let (Some(i), Some(j)) = (at(r), at(r + 1.0)) {
                for mode in &plan.options.receivers {
                    let s = format!("single-alg1-{}", mode.name());
                    let (a, b) = (mean_of(plan, points, &s, i), mean_of(plan, points, &s, j));
                    out.push(Assertion {
                        name: format!("{s} at least halves from K = {r} to K = {}", r + 1.0),
                        passed: matches!((a, b), (Some(a), Some(b)) if b < 0.5 * a),
                        detail: format!("{} -> {} bits/s/Hz", show(a), show(b)),
                    });
                }
            }
        }
        _ => {}
    }
    out
}

fn write_record<W: Write>(w: &mut csv::Writer<W>, rec: &[String]) -> Result<()> {
    w.write_record(rec).map_err(csv_error)?;
    w.flush()?;
    Ok(())
}

/// Run a plan, writing CSV rows to `csv_out` as each sweep point
/// completes.
pub fn run_plan<W: Write>(plan: &Plan, csv_out: W) -> Result<RunSummary> {
    let mut w = csv::Writer::from_writer(csv_out);
    write_record(&mut w, &csv_header(plan))?;
    let mut points = Vec::with_capacity(plan.points.len());
    let mut all = Vec::with_capacity(plan.points.len());
    for (i, p) in plan.points.iter().enumerate() {
        let outcomes: Vec<DrawOutcome> = (0..plan.draws)
            .into_par_iter()
            .map(|d| evaluate_draw(plan, i, d))
            .collect();
        let summary = summarize_point(plan, p.x, &outcomes);
        write_record(&mut w, &csv_row(plan, &summary))?;
        points.push(summary);
        all.push(outcomes);
    }
    let mut assertions = check_assertions(plan, &all);
    assertions.extend(curve_assertions(plan, &points));
    let failed_draws = points.iter().map(|p| p.failed_draws).sum();
    Ok(RunSummary {
        experiment: plan.id.as_str(),
        seed: plan.seed,
        draws: plan.draws,
        sweep_axis: plan.axis.name(),
        methods: plan.methods.clone(),
        passed: assertions.iter().all(|a| a.passed),
        points,
        assertions,
        failed_draws,
    })
}

/// Paths written by [`run_experiment`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    pub csv: PathBuf,
    pub summary: PathBuf,
    pub summary_record: RunSummary,
}

/// Run an experiment into `out_dir` (created if needed): `<id>.csv` and
/// `<id>.summary.json`.
pub fn run_experiment(spec: &ExperimentSpec, out_dir: &Path) -> Result<RunArtifacts> {
    let plan = spec.plan()?;
    std::fs::create_dir_all(out_dir)?;
    let csv = out_dir.join(format!("{}.csv", plan.id.as_str()));
    let summary = out_dir.join(format!("{}.summary.json", plan.id.as_str()));
    let file = std::fs::File::create(&csv)?;
    let record = run_plan(&plan, std::io::BufWriter::new(file))?;
    let mut text = serde_json::to_string_pretty(&record)?;
    text.push('\n');
    std::fs::write(&summary, text)?;
    Ok(RunArtifacts {
        csv,
        summary,
        summary_record: record,
    })
}

/// One plot series: `(x, y, yerr)` triples of a method.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub method: String,
    pub points: Vec<(f64, f64, f64)>,
}

/// Parse a run CSV into one series per method. Rows with an empty mean for
/// a method are skipped for that method.
pub fn parse_series(csv_text: &str) -> Result<(String, Vec<Series>)> {
    let bad = |msg: String| Error::Config(format!("malformed experiment csv: {msg}"));
    let mut r = csv::Reader::from_reader(csv_text.as_bytes());
    let header: Vec<String> = r
        .headers()
        .map_err(csv_error)?
        .iter()
        .map(String::from)
        .collect();
    if header.is_empty() {
        return Err(bad("missing header".into()));
    }
    let mut cols = Vec::new();
    for (i, h) in header.iter().enumerate().skip(1) {
        if let Some(m) = h.strip_suffix("_mean") {
            if header.get(i + 1).map(String::as_str) != Some(&format!("{m}_stderr")) {
                return Err(bad(format!("column '{h}' is not followed by '{m}_stderr'")));
            }
            cols.push((m.to_string(), i));
        }
    }
    if cols.is_empty() {
        return Err(bad("no '<method>_mean' columns".into()));
    }
    let mut series: Vec<Series> = cols
        .iter()
        .map(|(m, _)| Series {
            method: m.clone(),
            points: Vec::new(),
        })
        .collect();
    let num = |s: &str, line: usize, col: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            return Ok(None);
        }
        s.parse::<f64>().map(Some).map_err(|_| {
            bad(format!(
                "line {line}: '{s}' in column '{col}' is not a number"
            ))
        })
    };
    let mut rows = 0;
    for (k, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_error)?;
        let line = k + 2;
        if rec.len() != header.len() {
            return Err(bad(format!(
                "line {line}: expected {} fields, got {}",
                header.len(),
                rec.len()
            )));
        }
        let x = num(&rec[0], line, &header[0])?
            .ok_or_else(|| bad(format!("line {line}: empty sweep value")))?;
        for (s, (_, i)) in series.iter_mut().zip(&cols) {
            let y = num(&rec[*i], line, &header[*i])?;
            let e = num(&rec[*i + 1], line, &header[*i + 1])?;
            if let Some(y) = y {
                s.points.push((x, y, e.unwrap_or(0.0)));
            }
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(bad("empty sweep (no data rows)".into()));
    }
    Ok((header[0].clone(), series))
}

/// Write one plot-ready file per method, `<out_dir>/<stem>.<method>.dat`,
/// with a header line `# <axis> y yerr` followed by whitespace-separated
/// triples. Nothing is written if the CSV is rejected.
pub fn emit_plotdata(csv_path: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let text = std::fs::read_to_string(csv_path)?;
    let (axis, series) = parse_series(&text)?;
    let stem = csv_path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::Config(format!("bad csv file name {}", csv_path.display())))?;
    std::fs::create_dir_all(out_dir)?;
    let mut paths = Vec::with_capacity(series.len());
    for s in &series {
        let path = out_dir.join(format!("{stem}.{}.dat", s.method));
        let mut body = format!("# {axis} y yerr\n");
        for (x, y, e) in &s.points {
            body.push_str(&format!("{x} {y} {e}\n"));
        }
        std::fs::write(&path, body)?;
        paths.push(path);
    }
    Ok(paths)
}
