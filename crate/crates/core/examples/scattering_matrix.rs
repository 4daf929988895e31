//! Bogoliubov scattering on the drain below and above the critical rate.
//!
//! `cargo run --release --example scattering_matrix`

use lossy_condensate::analytics::{subcritical_state, supercritical_state};
use lossy_condensate::lattice::Units;
use lossy_condensate::scattering::{
    log_log_slope, log_omega_grid, phonon_flux, scan, Input, Output,
};

fn main() -> lossy_condensate::Result<()> {
    let units = Units::new(10.0)?;
    let ws = log_omega_grid(1e-3, 1.0, 13);
    for p in [
        subcritical_state(0.6, units.n0, &units)?,
        supercritical_state(10.0, units.n0, &units)?,
    ] {
        println!(
            "\ngamma = {}, {:?}, flow {:.4}",
            p.gamma, p.regime, p.velocity
        );
        println!(
            "{:>9} {:>18} {:>18} {:>11} {:>11} {:>11}",
            "omega", "r", "t", "|S_loc,in|", "omega p_out", "I_loc,eta"
        );
        let mats = scan(&ws, &p)?;
        for s in &mats {
            let (r, t) = (s.reflection(), s.transmission());
            println!(
                "{:>9.2e} {:>8.4}{:>+9.4}i {:>8.4}{:>+9.4}i {:>11.3e} {:>11.4} {:>11.3e}",
                s.omega,
                r.re,
                r.im,
                t.re,
                t.im,
                s.intensity(Output::ALoc, Input::AIn).sqrt(),
                s.omega * phonon_flux(s),
                s.intensity(Output::ALoc, Input::Eta),
            );
        }
        let low: Vec<_> = mats.iter().filter(|s| s.omega <= 1e-2).collect();
        let w: Vec<f64> = low.iter().map(|s| s.omega).collect();
        for (name, o, i) in [
            ("localized <- incoming", Output::ALoc, Input::AIn),
            ("outgoing <- noise", Output::AOut, Input::Eta),
            ("localized <- noise", Output::ALoc, Input::Eta),
        ] {
            let y: Vec<f64> = low.iter().map(|s| s.intensity(o, i)).collect();
            println!(
                "low-frequency slope of {name}: {:.3}",
                log_log_slope(&w, &y)
            );
        }
    }
    Ok(())
}
