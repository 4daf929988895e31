//! Truncated-Wigner ensemble with one drain: condensate density, flow and the
//! growth of incoherent atoms relative to a lossless control ensemble.
//!
//! `cargo run --release --example wigner_ensemble -- 200`

use lossy_condensate::config::{Scenario, ScenarioConfig};
use lossy_condensate::runner::simulate;

fn main() -> lossy_condensate::Result<()> {
    let n_traj: usize = std::env::args()
        .nth(1)
        .and_then(|a| a.parse().ok())
        .unwrap_or(200);
    let mut cfg = ScenarioConfig::new(Scenario::SingleDrain);
    cfg.physics.gamma = Some(0.1);
    cfg.physics.n0_xi = 100.0;
    cfg.numerics.n_sites = 512;
    cfg.numerics.t_max = 100.0;
    cfg.numerics.snapshot_times = vec![0.0, 50.0, 100.0];
    cfg.ensemble.n_traj = n_traj;
    cfg.validate()?;
    let drain = simulate(&cfg, 0.1)?;
    let control = simulate(&cfg, 0.0)?;
    let excess = drain.excess_over(&control)?;
    println!(
        "{} trajectories, {} aborted",
        drain.n_completed, drain.n_aborted
    );
    let grid = drain.series.grid;
    for (t, &time) in drain.series.times.iter().enumerate().skip(1) {
        let f = drain.flow(&cfg, t, 0.0)?;
        println!(
            "\nt = {time}: plateau n = {:.3}, speed = {:.4}",
            f.density, f.speed
        );
        println!("{:>6} {:>10}", "|x|", "n_out");
        for r in (0..=120).step_by(10) {
            let x = r as f64;
            let (a, b) = (grid.nearest_site(x), grid.nearest_site(-x));
            println!(
                "{x:>6.0} {:>10.4}",
                0.5 * (excess.wedge[t].n_out[a] + excess.wedge[t].n_out[b])
            );
        }
    }
    Ok(())
}
