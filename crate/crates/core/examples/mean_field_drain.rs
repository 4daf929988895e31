//! Noise-free evolution of a condensate with one drain, compared with the
//! steady-state flow law.
//!
//! `cargo run --release --example mean_field_drain -- 0.1`

use lossy_condensate::config::{Scenario, ScenarioConfig};
use lossy_condensate::runner::simulate;

fn main() -> lossy_condensate::Result<()> {
    let gamma: f64 = std::env::args()
        .nth(1)
        .and_then(|a| a.parse().ok())
        .unwrap_or(0.1);
    let mut cfg = ScenarioConfig::new(Scenario::SingleDrain);
    cfg.physics.gamma = Some(gamma);
    cfg.numerics.n_sites = 2048;
    cfg.numerics.t_max = 200.0;
    cfg.numerics.snapshot_times = vec![0.0, 50.0, 100.0, 200.0];
    cfg.numerics.mean_field = true;
    cfg.validate()?;
    let run = simulate(&cfg, gamma)?;
    for (t, &time) in run.series.times.iter().enumerate().skip(1) {
        let f = run.flow(&cfg, t, 0.0)?;
        println!(
            "t = {time:>5}: plateau n = {:.4}, speed = {:.5}",
            f.density, f.speed
        );
    }
    let last = run.series.times.len() - 1;
    let grid = run.series.grid;
    println!("\n{:>8} {:>10} {:>10}", "x", "density", "velocity");
    for x in [
        -150.0, -100.0, -50.0, -20.0, -5.0, 0.0, 5.0, 20.0, 50.0, 100.0, 150.0,
    ] {
        let j = grid.nearest_site(x);
        println!(
            "{x:>8.1} {:>10.4} {:>10.4}",
            run.series.density[last][j], run.series.velocity[last][j]
        );
    }
    Ok(())
}
