//! Density-density correlation map after a drain is switched on, summarized on
//! the diagonal, the anti-diagonal and the bins next to the drain.
//!
//! `cargo run --release --example density_correlations -- 0.1 1000`

use lossy_condensate::config::{Scenario, ScenarioConfig};
use lossy_condensate::runner::simulate;

fn main() -> lossy_condensate::Result<()> {
    let mut args = std::env::args().skip(1);
    let gamma: f64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(0.1);
    let n_traj: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(1000);
    let mut cfg = ScenarioConfig::new(Scenario::SingleDrain);
    cfg.physics.n0_xi = 100.0;
    cfg.numerics.n_sites = 512;
    cfg.numerics.t_max = 100.0;
    cfg.numerics.snapshot_times = vec![0.0, 100.0];
    cfg.ensemble.n_traj = n_traj;
    cfg.correlations.enabled = true;
    cfg.correlations.half_bins = 40;
    cfg.validate()?;
    let control = simulate(&cfg, 0.0)?;
    let run = simulate(&cfg, gamma)?;
    let map = run
        .excess_over(&control)?
        .correlation
        .expect("correlations enabled");
    if let Some(w) = &map.warning {
        println!("warning: {w}");
    }
    let lim = 80.0;
    let bands = [
        (
            "diagonal",
            map.band(|x, y| (x - y).abs() < 0.1 && x.abs() > 4.0 && x.abs() < lim),
        ),
        (
            "anti-diagonal",
            map.band(|x, y| (x + y).abs() < 0.1 && x.abs() > 4.0 && x.abs() < lim),
        ),
        (
            "drain bin, same side",
            map.band(|x, y| {
                (x.abs() - 2.5).abs() < 0.1 && x * y > 0.0 && y.abs() > 5.0 && y.abs() < lim
            }),
        ),
        (
            "drain bin, other side",
            map.band(|x, y| {
                (x.abs() - 2.5).abs() < 0.1 && x * y < 0.0 && y.abs() > 5.0 && y.abs() < lim
            }),
        ),
    ];
    println!(
        "gamma {gamma}, {} trajectories, normalization {:.4}",
        map.n_traj, map.normalization
    );
    for (name, b) in bands {
        println!(
            "{name:<22} {:+.5} +- {:.5} ({} entries)",
            b.mean, b.stderr, b.n_points
        );
    }
    Ok(())
}
