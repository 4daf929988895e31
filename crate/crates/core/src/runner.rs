//! Scenario execution.
//!
//! [`run_scenario`] runs the pipeline for a resolved config, writes every
//! dataset into `<outputs.directory>/<scenario>-<hash prefix>/` together with
//! the resolved `config.toml` and a `manifest.json`, and returns the manifest.
//! Each dataset file embeds the config hash.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde_json::json;

use crate::analytics::{
    critical_profile, subcritical_state, supercritical_state, StationaryProfile,
};
use crate::config::{Baseline, Format, Scenario, ScenarioConfig};
use crate::engine::{run_ensemble, Engine, EnsembleSpec, Schedule};
use crate::error::{invalid, Error, Result};
use crate::observables::{
    density_dips, drain_flow, fluctuation_wedge, g2_map, CorrelationMap, DensityCorrelation,
    DrainFlow, FieldMoments, FluctuationWedge, PhaseMoments, ProfileSeries,
};
use crate::persist::{file_sha256, Axis, Dataset, FileEntry, RunManifest, VERSION};
use crate::scattering::{log_omega_grid, phonon_flux, scan, Input, Output};
use crate::vacuum::VacuumSampler;

/// Result of one ensemble (or mean-field) simulation.
#[derive(Debug, Clone)]
pub struct EnsembleProfiles {
    pub series: ProfileSeries,
    pub fields: FieldMoments,
    /// Map against this ensemble's own `t = 0` state.
    pub correlation: Option<CorrelationMap>,
    /// Raw bin moments at the map time and at `t = 0`.
    pub pairs: Option<(DensityCorrelation, DensityCorrelation)>,
    pub n_completed: usize,
    pub n_aborted: usize,
}

/// Fluctuation growth and correlations of one ensemble relative to a baseline.
#[derive(Debug, Clone)]
pub struct Excess {
    /// One wedge per output time.
    pub wedge: Vec<FluctuationWedge>,
    pub correlation: Option<CorrelationMap>,
}

impl EnsembleProfiles {
    /// Drain flow at output `t` in the configured window around `drain_x`.
    pub fn flow(&self, cfg: &ScenarioConfig, t: usize, drain_x: f64) -> Result<DrainFlow> {
        let xi = cfg.units()?.xi();
        let [lo, hi] = cfg.numerics.flow_window;
        drain_flow(
            &self.series.density[t],
            &self.series.velocity[t],
            &self.series.grid,
            drain_x,
            lo * xi,
            hi * xi,
        )
    }

    /// Excess over this ensemble's own initial state.
    pub fn excess_over_initial(&self) -> Result<Excess> {
        let wedge = (0..self.series.times.len())
            .map(|t| fluctuation_wedge(&self.fields, t, &self.fields, 0))
            .collect::<Result<_>>()?;
        Ok(Excess {
            wedge,
            correlation: self.correlation.clone(),
        })
    }

    /// Excess over a same-seed control ensemble, time by time.
    pub fn excess_over(&self, control: &EnsembleProfiles) -> Result<Excess> {
        if control.series.times != self.series.times {
            return Err(Error::BaselineMismatch("output times differ".into()));
        }
        let wedge = (0..self.series.times.len())
            .map(|t| fluctuation_wedge(&self.fields, t, &control.fields, t))
            .collect::<Result<_>>()?;
        let correlation = match (&self.pairs, &control.pairs) {
            (Some((a, _)), Some((b, _))) => Some(g2_map(a, b)?),
            (None, None) => None,
            _ => {
                return Err(Error::BaselineMismatch(
                    "only one ensemble has correlations".into(),
                ))
            }
        };
        Ok(Excess { wedge, correlation })
    }
}

/// Runs the configured engine at loss rate `gamma` and reduces profiles,
/// plus the correlation map when enabled.
pub fn simulate(cfg: &ScenarioConfig, gamma: f64) -> Result<EnsembleProfiles> {
    let units = cfg.units()?;
    let grid = cfg.grid()?;
    let engine = Engine::new(grid, cfg.engine_config(gamma, &units))?;
    let mut sampler = VacuumSampler::new(grid, units, None)?;
    if cfg.numerics.mean_field {
        sampler = sampler.mean_field();
    }
    let times = cfg.numerics.snapshot_times.clone();
    let schedule = Schedule::new(times.clone()).with_end(cfg.numerics.t_max);
    let n_times = times.len();
    let corr = if cfg.correlations.enabled {
        let idx = times
            .iter()
            .position(|&t| t == cfg.correlations.time)
            .ok_or_else(|| invalid("correlations.time", "not a snapshot time"))?;
        let at = DensityCorrelation::new(grid, cfg.layout(), idx, cfg.correlations.n_batches)?;
        let base = at.at_time(0);
        Some((at, base))
    } else {
        None
    };
    let mut moments = FieldMoments::new(grid, n_times);
    if cfg.numerics.mean_field {
        moments = moments.classical();
    }
    let prototype = (moments, PhaseMoments::new(grid, n_times, units.n0), corr);
    let spec = EnsembleSpec {
        engine: &engine,
        sampler: &sampler,
        schedule: &schedule,
        n_traj: cfg.n_traj(),
        base_seed: cfg.ensemble.base_seed,
        workers: (cfg.ensemble.workers > 0).then_some(cfg.ensemble.workers),
    };
    let stats = run_ensemble(&spec, &prototype)?;
    let (fields, phases, corr) = stats.accumulator;
    let series = ProfileSeries::from_moments(&fields, &phases, &times)?;
    let correlation = match &corr {
        Some((at, base)) => Some(g2_map(at, base)?),
        None => None,
    };
    Ok(EnsembleProfiles {
        series,
        fields,
        correlation,
        pairs: corr,
        n_completed: stats.n_completed,
        n_aborted: stats.n_aborted,
    })
}

/// Writes datasets in the configured formats and records them for the manifest.
struct Sink {
    dir: PathBuf,
    hash: String,
    formats: Vec<Format>,
    files: Vec<FileEntry>,
}

impl Sink {
    fn put(&mut self, ds: Dataset) -> Result<()> {
        let ds = ds.with_hash(&self.hash);
        for f in self.formats.clone() {
            let (ext, label) = match f {
                Format::Binary => ("bin", "binary"),
                Format::Csv => ("csv", "csv"),
            };
            let rel = format!("{}.{ext}", ds.name);
            let path = self.dir.join(&rel);
            match f {
                Format::Binary => ds.write_binary(&path)?,
                Format::Csv => ds.write_csv(&path)?,
            }
            self.files.push(FileEntry {
                path: rel,
                dataset: ds.name.clone(),
                format: label.into(),
                sha256: file_sha256(&path)?,
            });
        }
        Ok(())
    }
}

/// Run directory for a config: `<outputs.directory>/<scenario>-<first 12 hash chars>`.
pub fn run_directory(cfg: &ScenarioConfig) -> Result<PathBuf> {
    let hash = cfg.hash()?;
    Ok(Path::new(&cfg.outputs.directory).join(format!("{}-{}", cfg.scenario.name(), &hash[..12])))
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunManifest> {
    cfg.validate()?;
    let started = Instant::now();
    let started_unix = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let hash = cfg.hash()?;
    let dir = run_directory(cfg)?;
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("config.toml"), cfg.to_toml()?)?;
    let mut sink = Sink {
        dir: dir.clone(),
        hash: hash.clone(),
        formats: cfg.outputs.formats.clone(),
        files: Vec::new(),
    };
    let (summary, completed, aborted) = match cfg.scenario {
        Scenario::SingleDrain => single_drain(cfg, &mut sink)?,
        Scenario::TwoDrain => two_drain(cfg, &mut sink)?,
        Scenario::CriticalScan => critical_scan(cfg, &mut sink)?,
        Scenario::GammaSweep => gamma_sweep(cfg, &mut sink)?,
        Scenario::ScatteringScan => (scattering_scan(cfg, &mut sink)?, 0, 0),
    };
    let manifest = RunManifest {
        scenario: cfg.scenario.name().into(),
        config_hash: hash,
        base_seed: cfg.ensemble.base_seed,
        workers: cfg.ensemble.workers,
        crate_version: env!("CARGO_PKG_VERSION").into(),
        format_version: VERSION,
        started_unix,
        wall_time_s: started.elapsed().as_secs_f64(),
        n_completed: completed,
        n_aborted: aborted,
        files: sink.files,
        summary,
    };
    manifest.write(&dir)?;
    Ok(manifest)
}

fn put_series(sink: &mut Sink, series: &ProfileSeries) -> Result<()> {
    let x = series.grid.positions();
    let shape = vec![series.times.len(), series.grid.n_sites];
    for (name, rows) in [
        ("density", &series.density),
        ("density_stderr", &series.density_stderr),
        ("phase", &series.phase),
        ("velocity", &series.velocity),
    ] {
        let ds = Dataset::new(name, shape.clone(), rows.concat())?
            .with_axis(Axis::new("t", series.times.clone()))
            .with_axis(Axis::new("x", x.clone()));
        sink.put(ds)?;
    }
    Ok(())
}

type Outcome = (serde_json::Value, usize, usize);

fn single_drain(cfg: &ScenarioConfig, sink: &mut Sink) -> Result<Outcome> {
    let run = simulate(cfg, cfg.gamma())?;
    put_series(sink, &run.series)?;
    let last = run.series.times.len() - 1;
    let mut correlation = None;
    if !cfg.numerics.mean_field {
        let excess = match cfg.numerics.baseline {
            Baseline::Initial => run.excess_over_initial()?,
            Baseline::Control => run.excess_over(&simulate(cfg, 0.0)?)?,
        };
        let rows: Vec<f64> = excess
            .wedge
            .iter()
            .flat_map(|w| w.n_out.iter().copied())
            .collect();
        let ds = Dataset::new(
            "wedge",
            vec![excess.wedge.len(), run.series.grid.n_sites],
            rows,
        )?
        .with_axis(Axis::new("t", run.series.times.clone()))
        .with_axis(Axis::new("x", run.series.grid.positions()));
        sink.put(ds)?;
        correlation = excess.correlation;
    }
    if let Some(map) = &correlation {
        let n = map.n();
        let ds = Dataset::new("g2", vec![n, n], map.g2.clone())?
            .with_axis(Axis::new("x", map.positions.clone()))
            .with_axis(Axis::new("x_prime", map.positions.clone()));
        sink.put(ds)?;
    }
    let flow = run.flow(cfg, last, 0.0)?;
    let summary = json!({
        "gamma": cfg.gamma(),
        "t": run.series.times[last],
        "plateau_density": flow.density,
        "plateau_speed": flow.speed,
        "speed_asymmetry": flow.asymmetry,
        "g2_warning": correlation.as_ref().and_then(|m| m.warning.clone()),
    });
    Ok((summary, run.n_completed, run.n_aborted))
}

fn two_drain(cfg: &ScenarioConfig, sink: &mut Sink) -> Result<Outcome> {
    let run = simulate(cfg, cfg.gamma())?;
    put_series(sink, &run.series)?;
    let xi = cfg.units()?.xi();
    let half = 0.5 * cfg.physics.drain_separation;
    let grid = run.series.grid;
    let mut rows = Vec::new();
    let mut census = Vec::new();
    for (t, &time) in run.series.times.iter().enumerate() {
        let dips = density_dips(
            &run.series.density[t],
            &grid,
            -half + 2.0 * xi,
            half - 2.0 * xi,
            5.0 * xi,
            0.3,
        );
        for d in &dips {
            rows.push(vec![time, d.position, d.density, d.depth()]);
        }
        let inner: Vec<f64> = (0..grid.n_sites)
            .filter(|&j| grid.position(j).abs() < half - 5.0 * xi)
            .map(|j| run.series.velocity[t][j])
            .collect();
        let mean_flow = inner.iter().sum::<f64>() / inner.len().max(1) as f64;
        census.push(json!({ "t": time, "dips": dips.len(), "mean_flow": mean_flow }));
    }
    sink.put(Dataset::table(
        "dips",
        &["t", "x", "density", "depth"],
        &rows,
    )?)?;
    let summary = json!({ "gamma": cfg.gamma(), "drain_separation": cfg.physics.drain_separation, "census": census });
    Ok((summary, run.n_completed, run.n_aborted))
}

fn critical_scan(cfg: &ScenarioConfig, sink: &mut Sink) -> Result<Outcome> {
    let units = cfg.units()?;
    let run = simulate(cfg, cfg.gamma())?;
    put_series(sink, &run.series)?;
    let x = run.series.grid.positions();
    let mut deviations = Vec::new();
    let mut curves = Vec::new();
    for (t, &time) in run.series.times.iter().enumerate() {
        if time <= 0.0 {
            continue;
        }
        let cp = critical_profile(time, units.n0, units.c0())?;
        let dev = cp.deviation(&x, &run.series.density[t], &run.series.phase[t], 0.9)?;
        deviations.push(vec![time, dev.density, dev.phase]);
        let e = units.c0() * units.c0() * time;
        let outside = cp.phase(f64::INFINITY);
        for (j, &xj) in x.iter().enumerate() {
            if xj.abs() <= 1.2 * units.c0() * time {
                curves.push(vec![
                    time,
                    xj / (units.c0() * time),
                    run.series.density[t][j] / units.n0,
                    cp.density(xj) / units.n0,
                    run.series.phase[t][j] / e,
                    (cp.phase(xj) - outside) / e,
                ]);
            }
        }
    }
    sink.put(Dataset::table(
        "collapse_deviation",
        &["t", "density_l2", "phase_l2"],
        &deviations,
    )?)?;
    sink.put(Dataset::table(
        "collapse",
        &[
            "t",
            "x_scaled",
            "density_scaled",
            "density_theory",
            "phase_scaled",
            "phase_theory",
        ],
        &curves,
    )?)?;
    let summary = json!({
        "gamma": cfg.gamma(),
        "deviations": deviations.iter().map(|r| json!({"t": r[0], "density_l2": r[1], "phase_l2": r[2]})).collect::<Vec<_>>(),
    });
    Ok((summary, run.n_completed, run.n_aborted))
}

fn gamma_sweep(cfg: &ScenarioConfig, sink: &mut Sink) -> Result<Outcome> {
    let mut rows = Vec::new();
    let (mut completed, mut aborted) = (0, 0);
    for &gamma in &cfg.physics.gammas {
        let run = simulate(cfg, gamma)?;
        let last = run.series.times.len() - 1;
        let flow = run.flow(cfg, last, 0.0)?;
        let origin = run.series.grid.origin_index;
        rows.push(vec![
            gamma,
            run.series.density[last][origin],
            flow.density,
            flow.speed,
            flow.asymmetry,
        ]);
        completed += run.n_completed;
        aborted += run.n_aborted;
    }
    sink.put(Dataset::table(
        "sweep",
        &[
            "gamma",
            "drain_density",
            "plateau_density",
            "plateau_speed",
            "speed_asymmetry",
        ],
        &rows,
    )?)?;
    let peak = rows
        .iter()
        .max_by(|a, b| a[3].total_cmp(&b[3]))
        .map(|r| r[0])
        .unwrap_or(f64::NAN);
    Ok((
        json!({ "gammas": cfg.physics.gammas, "peak_speed_gamma": peak }),
        completed,
        aborted,
    ))
}

/// Stationary background used by a scattering scan.
pub fn scattering_background(cfg: &ScenarioConfig) -> Result<StationaryProfile> {
    let units = cfg.units()?;
    let gamma = cfg.gamma();
    let n = cfg.physics.background_density;
    subcritical_state(gamma, n, &units).or_else(|_| supercritical_state(gamma, n, &units))
}

fn scattering_scan(cfg: &ScenarioConfig, sink: &mut Sink) -> Result<serde_json::Value> {
    let profile = scattering_background(cfg)?;
    let n = &cfg.numerics;
    let omegas = log_omega_grid(n.omega_min, n.omega_max, n.n_omega);
    let mats = scan(&omegas, &profile)?;
    let outs = [
        ("a_out", Output::AOut),
        ("b_out", Output::BOut),
        ("a_loc", Output::ALoc),
        ("b_loc", Output::BLoc),
    ];
    let ins = [
        ("a_in", Input::AIn),
        ("b_in", Input::BIn),
        ("eta", Input::Eta),
        ("eta_conj", Input::EtaConj),
    ];
    let mut columns = vec!["omega".to_string()];
    for (o, _) in &outs {
        for (i, _) in &ins {
            columns.push(format!("re_{o}_{i}"));
            columns.push(format!("im_{o}_{i}"));
        }
    }
    for (o, _) in &outs {
        for (i, _) in &ins {
            columns.push(format!("intensity_{o}_{i}"));
        }
    }
    columns.push("phonon_flux".into());
    let rows: Vec<Vec<f64>> = mats
        .iter()
        .map(|m| {
            let mut r = vec![m.omega];
            for (_, o) in &outs {
                for (_, i) in &ins {
                    let s = m.get(*o, *i);
                    r.extend([s.re, s.im]);
                }
            }
            for (_, o) in &outs {
                for (_, i) in &ins {
                    r.push(m.intensity(*o, *i));
                }
            }
            r.push(phonon_flux(m));
            r
        })
        .collect();
    let cols: Vec<&str> = columns.iter().map(String::as_str).collect();
    sink.put(Dataset::table("smatrix", &cols, &rows)?)?;
    Ok(json!({
        "gamma": profile.gamma,
        "regime": profile.regime,
        "background_density": profile.density,
        "flow": profile.velocity,
    }))
}
