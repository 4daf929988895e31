use std::path::PathBuf;

use lossy_condensate::config::{parse_config, Baseline, Scenario, ScenarioConfig};
use lossy_condensate::Error;
use proptest::prelude::*;

fn shipped_configs() -> Vec<PathBuf> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "toml"))
        .collect();
    files.sort();
    files
}

#[test]
fn shipped_configs_resolve_and_round_trip() {
    let files = shipped_configs();
    assert!(files.len() >= 5);
    let mut seen = Vec::new();
    for f in files {
        let cfg = parse_config(&std::fs::read_to_string(&f).unwrap())
            .unwrap_or_else(|e| panic!("{}: {e}", f.display()));
        let again = parse_config(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(again, cfg, "{}", f.display());
        assert_eq!(again.hash().unwrap(), cfg.hash().unwrap());
        seen.push(cfg.scenario);
    }
    for s in Scenario::ALL {
        assert!(seen.contains(&s), "no shipped config for {}", s.name());
    }
}

#[test]
fn minimal_config_gets_defaults() {
    let cfg = parse_config("scenario = \"single_drain\"").unwrap();
    assert_eq!(cfg, ScenarioConfig::new(Scenario::SingleDrain));
    assert_eq!(cfg.gamma(), 0.1);
    assert_eq!(
        (cfg.numerics.n_sites, cfg.numerics.dx, cfg.numerics.dt),
        (4096, 0.5, 0.01)
    );
    assert_eq!(cfg.physics.n0_xi, 10.0);
    assert_eq!(
        cfg.numerics.snapshot_times,
        vec![0.0, 50.0, 100.0, 150.0, 200.0]
    );
    assert_eq!(cfg.numerics.baseline, Baseline::Control);
}

#[test]
fn scenario_defaults() {
    let crit = parse_config("scenario = \"critical_scan\"").unwrap();
    assert!((crit.gamma() - 2.0 / 3.0).abs() < 1e-15);
    let sweep = parse_config("scenario = \"gamma_sweep\"").unwrap();
    assert_eq!(sweep.physics.gammas.len(), 12);
    let scan = parse_config("scenario = \"scattering_scan\"\n[physics]\ngamma = 0.1").unwrap();
    // below criticality the background is the depleted cone density
    assert!((scan.physics.background_density - 10.0 * 0.95f64.powi(2)).abs() < 1e-12);
    let scan = parse_config("scenario = \"scattering_scan\"\n[physics]\ngamma = 3.0").unwrap();
    assert_eq!(scan.physics.background_density, 10.0);
}

#[test]
fn two_drains_sit_symmetrically() {
    let cfg = parse_config("scenario = \"two_drain\"").unwrap();
    let d = cfg.drains(0.4);
    assert_eq!(d.len(), 2);
    assert_eq!((d[0].position, d[1].position), (-30.0, 30.0));
    assert!(d.iter().all(|d| d.gamma == 0.4));
    assert_eq!(
        ScenarioConfig::new(Scenario::SingleDrain).drains(0.2)[0].position,
        0.0
    );
}

#[test]
fn snapshot_times_always_start_at_zero() {
    let cfg = parse_config(
        "scenario = \"single_drain\"\n[numerics]\nt_max = 50.0\nsnapshot_times = [10.0, 50.0]",
    )
    .unwrap();
    assert_eq!(cfg.numerics.snapshot_times, vec![0.0, 10.0, 50.0]);
}

#[test]
fn unknown_keys_are_rejected() {
    for text in [
        "scenario = \"single_drain\"\nspeed = 1",
        "scenario = \"single_drain\"\n[physics]\ngama = 0.1",
        "scenario = \"single_drain\"\n[numerics]\nsteps = 10",
        "scenario = \"single_drain\"\n[extras]\na = 1",
        "scenario = \"black_hole\"",
        "[physics]\ngamma = 0.1",
    ] {
        let err = parse_config(text).unwrap_err();
        assert_eq!(err.kind(), "config", "{text}");
    }
}

#[test]
fn time_step_above_the_bound_names_it() {
    let err = parse_config("scenario = \"single_drain\"\n[numerics]\ndt = 0.05").unwrap_err();
    match err {
        Error::StabilityBound { dt, bound } => {
            assert_eq!(dt, 0.05);
            assert!((bound - 0.025).abs() < 1e-15);
        }
        other => panic!("unexpected {other:?}"),
    }
    assert!(err_text("dt = 0.05").contains("0.025"));
}

fn err_text(numerics: &str) -> String {
    parse_config(&format!(
        "scenario = \"single_drain\"\n[numerics]\n{numerics}"
    ))
    .unwrap_err()
    .to_string()
}

#[test]
fn invalid_values_are_rejected() {
    let cases = [
        ("[physics]\ngamma = -0.1", "gamma"),
        ("[physics]\nn0_xi = 0.0", "n0"),
        ("[numerics]\nn_sites = 7", "even"),
        ("[numerics]\nn_sites = 256", "sound cone"),
        (
            "[numerics]\nt_max = 100.0\nsnapshot_times = [50.0, 20.0]",
            "snapshot_times",
        ),
        (
            "[numerics]\nt_max = 100.0\nsnapshot_times = [150.0]",
            "snapshot_times",
        ),
        ("[ensemble]\nn_traj = 1", "two trajectories"),
        ("[numerics]\nflow_window = [5.0, 2.0]", "flow_window"),
        (
            "[correlations]\nenabled = true\ntime = 7.0",
            "correlations.time",
        ),
        (
            "[correlations]\nenabled = true\nbin_sites = 4\ntime = 100.0",
            "odd",
        ),
        (
            "[correlations]\nenabled = true\nhalf_bins = 1000\ntime = 100.0",
            "exceeds",
        ),
    ];
    for (body, needle) in cases {
        let text = format!("scenario = \"single_drain\"\n{body}");
        let msg = parse_config(&text).unwrap_err().to_string();
        assert!(msg.contains(needle), "{body:?}: {msg}");
    }
    let msg = parse_config("scenario = \"two_drain\"\n[correlations]\nenabled = true")
        .unwrap_err()
        .to_string();
    assert!(msg.contains("single_drain"), "{msg}");
    let msg = parse_config("scenario = \"two_drain\"\n[physics]\ndrain_separation = 5000.0")
        .unwrap_err()
        .to_string();
    assert!(msg.contains("drain_separation"), "{msg}");
    let msg = parse_config(
        "scenario = \"scattering_scan\"\n[numerics]\nomega_min = 1.0\nomega_max = 0.5",
    )
    .unwrap_err()
    .to_string();
    assert!(msg.contains("omega"), "{msg}");
}

#[test]
fn off_site_drains_are_rejected() {
    let err =
        parse_config("scenario = \"two_drain\"\n[physics]\ndrain_separation = 60.3").unwrap_err();
    assert_eq!(err.kind(), "off_site_drain");
}

#[test]
fn mean_field_runs_one_trajectory() {
    let cfg = parse_config(
        "scenario = \"two_drain\"\n[numerics]\nmean_field = true\n[ensemble]\nn_traj = 1",
    )
    .unwrap();
    assert_eq!(cfg.n_traj(), 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn resolved_configs_round_trip(
        gamma in 0.0f64..5.0,
        seed in any::<u64>(),
        n_traj in 2usize..5000,
        workers in 0usize..64,
        mean_field in any::<bool>(),
    ) {
        let mut cfg = ScenarioConfig::new(Scenario::SingleDrain);
        cfg.physics.gamma = Some(gamma);
        cfg.ensemble.base_seed = seed;
        cfg.ensemble.n_traj = n_traj;
        cfg.ensemble.workers = workers;
        cfg.numerics.mean_field = mean_field;
        cfg.validate().unwrap();
        let back = parse_config(&cfg.to_toml().unwrap()).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.hash().unwrap(), cfg.hash().unwrap());
    }

    #[test]
    fn hash_tracks_every_change(seed in any::<u64>(), other in any::<u64>()) {
        prop_assume!(seed != other);
        let mut a = ScenarioConfig::new(Scenario::SingleDrain);
        a.ensemble.base_seed = seed;
        let mut b = a.clone();
        b.ensemble.base_seed = other;
        prop_assert_ne!(a.hash().unwrap(), b.hash().unwrap());
        prop_assert_eq!(a.hash().unwrap().len(), 64);
    }
}
