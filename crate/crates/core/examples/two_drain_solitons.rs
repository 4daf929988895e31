//! Two drains: soliton census between them over time.
//!
//! `cargo run --release --example two_drain_solitons -- 0.4`

use lossy_condensate::config::{Scenario, ScenarioConfig};
use lossy_condensate::observables::density_dips;
use lossy_condensate::runner::simulate;

fn main() -> lossy_condensate::Result<()> {
    let gamma: f64 = std::env::args()
        .nth(1)
        .and_then(|a| a.parse().ok())
        .unwrap_or(0.4);
    let mut cfg = ScenarioConfig::new(Scenario::TwoDrain);
    cfg.physics.gamma = Some(gamma);
    cfg.numerics.t_max = 200.0;
    cfg.numerics.snapshot_times = (1..=8).map(|i| 25.0 * i as f64).collect();
    cfg.numerics.mean_field = true;
    cfg.validate()?;
    let run = simulate(&cfg, gamma)?;
    let half = 0.5 * cfg.physics.drain_separation;
    for (t, &time) in run.series.times.iter().enumerate().skip(1) {
        let dips = density_dips(
            &run.series.density[t],
            &run.series.grid,
            -half + 2.0,
            half - 2.0,
            5.0,
            0.3,
        );
        let at: Vec<String> = dips
            .iter()
            .map(|d| format!("{:+.1} ({:.0}%)", d.position, 100.0 * d.depth()))
            .collect();
        println!("t = {time:>5}: {} dips {}", dips.len(), at.join(" "));
    }
    Ok(())
}
