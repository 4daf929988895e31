//! Drain flow of the analytic steady states on both sides of the critical rate.
//!
//! `cargo run --release --example stationary_states`

use lossy_condensate::analytics::{critical_gamma, subcritical_state, supercritical_state};
use lossy_condensate::lattice::Units;

fn main() -> lossy_condensate::Result<()> {
    let units = Units::new(10.0)?;
    let gc = critical_gamma(units.c0());
    println!("critical rate {gc:.4}");
    println!(
        "{:>6} {:>12} {:>10} {:>12} {:>12}",
        "gamma", "regime", "flow v", "n(drain)", "gpe residual"
    );
    // the strong branch against the undepleted density needs gamma above c
    for gamma in [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 1.5, 2.0, 4.0, 8.0] {
        let p = if gamma < gc {
            subcritical_state(gamma, units.n0, &units)?
        } else {
            supercritical_state(gamma, units.n0, &units)?
        };
        println!(
            "{gamma:>6.2} {:>12} {:>10.4} {:>12.4} {:>12.2e}",
            format!("{:?}", p.regime),
            p.velocity,
            p.density_at(0.0),
            p.gpe_residual(1.3, 1e-3)
        );
    }
    Ok(())
}
