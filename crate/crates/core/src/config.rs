//! Scenario configuration.
//!
//! Configs are TOML with a top-level `scenario` key and the sections
//! `[physics]`, `[numerics]`, `[ensemble]`, `[outputs]` and, for correlation
//! runs, `[correlations]`. Every key is optional except `scenario`; unknown keys
//! are rejected. [`parse_config`] fills in defaults and checks physical bounds,
//! and [`ScenarioConfig::to_toml`] writes the resolved config back out so that a
//! run directory always records exactly what was executed.
//!
//! ```toml
//! scenario = "single_drain"
//!
//! [physics]
//! gamma = 0.1
//!
//! [numerics]
//! n_sites = 4096
//! t_max = 200.0
//!
//! [ensemble]
//! n_traj = 1000
//! base_seed = 7
//! ```

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::engine::{DrainSpec, EngineConfig, Scheme};
use crate::error::{Error, Result};
use crate::lattice::{make_grid, Boundary, GridSpec, Units};
use crate::observables::BinLayout;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    SingleDrain,
    TwoDrain,
    CriticalScan,
    ScatteringScan,
    GammaSweep,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::SingleDrain,
        Scenario::TwoDrain,
        Scenario::CriticalScan,
        Scenario::ScatteringScan,
        Scenario::GammaSweep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::SingleDrain => "single_drain",
            Scenario::TwoDrain => "two_drain",
            Scenario::CriticalScan => "critical_scan",
            Scenario::ScatteringScan => "scattering_scan",
            Scenario::GammaSweep => "gamma_sweep",
        }
    }

    pub fn summary(self) -> &'static str {
        match self {
            Scenario::SingleDrain => {
                "one drain at x = 0; profiles, fluctuation wedge, optional g2 map"
            }
            Scenario::TwoDrain => "two drains a distance L apart; profiles and soliton census",
            Scenario::CriticalScan => {
                "drain at the critical rate; profiles against the scaling solution"
            }
            Scenario::ScatteringScan => "BdG scattering matrix over a logarithmic frequency grid",
            Scenario::GammaSweep => "steady drain density and flow for a list of loss rates",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Binary,
    Csv,
}

/// Reference ensemble for fluctuation growth and correlation maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    /// The same ensemble at `t = 0`.
    Initial,
    /// A lossless ensemble with the same seeds at the same time. Removes the
    /// slow drift of the truncated-Wigner vacuum, at twice the cost.
    Control,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Physics {
    /// Loss rate for single-rate scenarios; defaults to `0.1`, or to the critical
    /// rate `2 c0 / 3` for `critical_scan`.
    pub gamma: Option<f64>,
    /// Loss rates for `gamma_sweep`.
    pub gammas: Vec<f64>,
    /// Dilution `n0 xi`; equals `n0` in these units.
    pub n0_xi: f64,
    /// Distance between the drains in `two_drain`.
    pub drain_separation: f64,
    /// Asymptotic density of the scattering background; `0` picks the natural
    /// one (the cone density below criticality, `n0` above).
    pub background_density: f64,
}

impl Default for Physics {
    fn default() -> Self {
        Self {
            gamma: None,
            gammas: Vec::new(),
            n0_xi: 10.0,
            drain_separation: 60.0,
            background_density: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Numerics {
    pub n_sites: usize,
    pub dx: f64,
    pub dt: f64,
    pub t_max: f64,
    /// Output times; `t = 0` is always added as the baseline.
    pub snapshot_times: Vec<f64>,
    pub scheme: Scheme,
    pub boundary: Boundary,
    /// Drop the vacuum noise and the reservoir noise; one trajectory suffices.
    pub mean_field: bool,
    /// Flow window `[r_min, r_max]` around the drain, in healing lengths.
    pub flow_window: [f64; 2],
    pub omega_min: f64,
    pub omega_max: f64,
    pub n_omega: usize,
    /// Reference for the fluctuation wedge and the correlation map.
    pub baseline: Baseline,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            n_sites: 4096,
            dx: 0.5,
            dt: 0.01,
            t_max: 200.0,
            snapshot_times: Vec::new(),
            scheme: Scheme::SplitStepSpectral,
            boundary: Boundary::Periodic,
            mean_field: false,
            flow_window: [10.0, 20.0],
            omega_min: 1e-3,
            omega_max: 10.0,
            n_omega: 61,
            baseline: Baseline::Control,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleSection {
    pub n_traj: usize,
    pub base_seed: u64,
    /// `0` uses every available core.
    pub workers: usize,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        Self {
            n_traj: 100,
            base_seed: 1,
            workers: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Outputs {
    pub directory: String,
    pub formats: Vec<Format>,
}

impl Default for Outputs {
    fn default() -> Self {
        Self {
            directory: "runs".into(),
            formats: vec![Format::Binary, Format::Csv],
        }
    }
}

/// Density-density correlation map settings (single drain only).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Correlations {
    pub enabled: bool,
    /// Map time; must be one of the snapshot times.
    pub time: f64,
    pub bin_sites: usize,
    pub half_bins: usize,
    pub n_batches: usize,
}

impl Default for Correlations {
    fn default() -> Self {
        Self {
            enabled: false,
            time: 100.0,
            bin_sites: 5,
            half_bins: 60,
            n_batches: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    #[serde(default)]
    pub physics: Physics,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub ensemble: EnsembleSection,
    #[serde(default)]
    pub outputs: Outputs,
    #[serde(default)]
    pub correlations: Correlations,
}

/// Parses, fills in scenario defaults and validates.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let mut cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    cfg.resolve();
    cfg.validate()?;
    Ok(cfg)
}

impl ScenarioConfig {
    /// Defaults with the scenario-specific choices applied.
    pub fn new(scenario: Scenario) -> Self {
        let mut cfg = Self {
            scenario,
            physics: Physics::default(),
            numerics: Numerics::default(),
            ensemble: EnsembleSection::default(),
            outputs: Outputs::default(),
            correlations: Correlations::default(),
        };
        cfg.resolve();
        cfg
    }

    /// Fills values left empty in the text.
    fn resolve(&mut self) {
        let units = Units::new(self.physics.n0_xi).ok();
        match self.scenario {
            Scenario::GammaSweep if self.physics.gammas.is_empty() => {
                self.physics.gammas = (1..=12).map(|i| 0.1 * i as f64).collect();
            }
            _ => {}
        }
        if self.physics.gamma.is_none() {
            self.physics.gamma = Some(match (self.scenario, units) {
                (Scenario::CriticalScan, Some(u)) => 2.0 * u.c0() / 3.0,
                _ => 0.1,
            });
        }
        if self.numerics.snapshot_times.is_empty() && self.scenario != Scenario::ScatteringScan {
            let t = self.numerics.t_max;
            self.numerics.snapshot_times = (1..=4).map(|i| t * i as f64 / 4.0).collect();
        }
        if self.numerics.snapshot_times.first() != Some(&0.0)
            && self.scenario != Scenario::ScatteringScan
        {
            self.numerics.snapshot_times.insert(0, 0.0);
        }
        if self.physics.background_density == 0.0 && self.scenario == Scenario::ScatteringScan {
            self.physics.background_density = match units {
                Some(u) if self.gamma() < 2.0 * u.c0() / 3.0 => {
                    let r = 1.0 - self.gamma() / (2.0 * u.c0());
                    u.n0 * r * r
                }
                Some(u) => u.n0,
                None => 0.0,
            };
        }
    }

    pub fn validate(&self) -> Result<()> {
        let units = Units::new(self.physics.n0_xi)?;
        let p = &self.physics;
        let n = &self.numerics;
        let bad = |what: &str, why: String| Err(Error::Config(format!("{what}: {why}")));
        let gamma = self.gamma();
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return bad(
                "physics.gamma",
                format!("must be finite and non-negative, got {gamma}"),
            );
        }
        if p.gammas.iter().any(|g| !(*g >= 0.0 && g.is_finite())) {
            return bad(
                "physics.gammas",
                "rates must be finite and non-negative".into(),
            );
        }
        if self.scenario == Scenario::ScatteringScan {
            if !(n.omega_min > 0.0 && n.omega_max > n.omega_min && n.n_omega >= 2) {
                return bad(
                    "numerics.omega_*",
                    "need 0 < omega_min < omega_max and n_omega >= 2".into(),
                );
            }
            if !(p.background_density > 0.0) {
                return bad("physics.background_density", "must be positive".into());
            }
            return Ok(());
        }
        let grid = self.grid()?;
        if self.scenario == Scenario::TwoDrain
            && !(p.drain_separation > 0.0 && p.drain_separation < grid.length())
        {
            return bad("physics.drain_separation", "must fit inside the box".into());
        }
        let ec = self.engine_config(gamma, &units);
        ec.validate(&grid)?;
        if !(n.t_max > 0.0) {
            return bad("numerics.t_max", "must be positive".into());
        }
        if n.snapshot_times.windows(2).any(|w| w[1] <= w[0])
            || n.snapshot_times.iter().any(|t| *t > n.t_max)
        {
            return bad(
                "numerics.snapshot_times",
                "must increase and not exceed t_max".into(),
            );
        }
        if !(n.flow_window[0] >= 0.0 && n.flow_window[1] > n.flow_window[0]) {
            return bad("numerics.flow_window", "need 0 <= r_min < r_max".into());
        }
        if self.ensemble.n_traj == 0 {
            return bad("ensemble.n_traj", "need at least one trajectory".into());
        }
        if !n.mean_field && self.ensemble.n_traj < 2 {
            return bad(
                "ensemble.n_traj",
                "noisy runs need at least two trajectories".into(),
            );
        }
        if self.correlations.enabled {
            if self.scenario != Scenario::SingleDrain {
                return bad(
                    "correlations.enabled",
                    "only single_drain records correlation maps".into(),
                );
            }
            if !n.snapshot_times.contains(&self.correlations.time) {
                return bad(
                    "correlations.time",
                    "must be one of the snapshot times".into(),
                );
            }
            self.layout().validate(&grid)?;
            if self.correlations.n_batches < 2 || self.correlations.n_batches > self.ensemble.n_traj
            {
                return bad(
                    "correlations.n_batches",
                    "need 2 <= n_batches <= n_traj".into(),
                );
            }
        }
        if !grid.contains_cone(units.c0(), n.t_max) {
            return bad(
                "numerics.n_sites",
                format!("the sound cone at t_max = {} leaves the box", n.t_max),
            );
        }
        Ok(())
    }

    /// The resolved single loss rate.
    pub fn gamma(&self) -> f64 {
        self.physics.gamma.unwrap_or(0.1)
    }

    pub fn units(&self) -> Result<Units> {
        Units::new(self.physics.n0_xi)
    }

    pub fn grid(&self) -> Result<GridSpec> {
        make_grid(
            self.numerics.n_sites,
            self.numerics.dx,
            self.numerics.boundary,
        )
    }

    pub fn layout(&self) -> BinLayout {
        BinLayout {
            half_bins: self.correlations.half_bins,
            bin_sites: self.correlations.bin_sites,
        }
    }

    /// Drain layout for this scenario at rate `gamma`.
    pub fn drains(&self, gamma: f64) -> Vec<DrainSpec> {
        match self.scenario {
            Scenario::TwoDrain => {
                let h = 0.5 * self.physics.drain_separation;
                vec![
                    DrainSpec {
                        position: -h,
                        gamma,
                    },
                    DrainSpec { position: h, gamma },
                ]
            }
            _ => vec![DrainSpec::centered(gamma)],
        }
    }

    pub fn engine_config(&self, gamma: f64, units: &Units) -> EngineConfig {
        let mut ec = EngineConfig::new(units)
            .with_dt(self.numerics.dt)
            .with_scheme(self.numerics.scheme)
            .with_noise(!self.numerics.mean_field);
        for d in self.drains(gamma) {
            ec = ec.with_drain(d);
        }
        ec
    }

    /// Trajectories actually run: one for mean-field runs.
    pub fn n_traj(&self) -> usize {
        if self.numerics.mean_field {
            1
        } else {
            self.ensemble.n_traj
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// SHA-256 of the resolved TOML, hex encoded.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_toml()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }
}
