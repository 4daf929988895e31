//! Drain at the critical rate: density and phase inside the sound cone against
//! the self-similar solution.
//!
//! `cargo run --release --example critical_collapse`

use lossy_condensate::analytics::critical_profile;
use lossy_condensate::config::{Scenario, ScenarioConfig};
use lossy_condensate::runner::simulate;

fn main() -> lossy_condensate::Result<()> {
    let mut cfg = ScenarioConfig::new(Scenario::CriticalScan);
    cfg.numerics.n_sites = 4096;
    cfg.numerics.t_max = 300.0;
    cfg.numerics.snapshot_times = vec![0.0, 100.0, 200.0, 300.0];
    cfg.numerics.mean_field = true;
    cfg.validate()?;
    let units = cfg.units()?;
    let run = simulate(&cfg, cfg.gamma())?;
    let x = run.series.grid.positions();
    println!("gamma = {:.4}", cfg.gamma());
    for (t, &time) in run.series.times.iter().enumerate().skip(1) {
        let cp = critical_profile(time, units.n0, units.c0())?;
        let dev = cp.deviation(&x, &run.series.density[t], &run.series.phase[t], 0.9)?;
        println!(
            "t = {time:>5}: relative L2 deviation density {:.2}%, phase {:.2}%",
            100.0 * dev.density,
            100.0 * dev.phase
        );
    }
    Ok(())
}
