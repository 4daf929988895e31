//! Draws Bogoliubov vacuum states and compares the ensemble density with the
//! mode sum.
//!
//! `cargo run --release --example vacuum_sampling`

use lossy_condensate::engine::trajectory_stream;
use lossy_condensate::lattice::{make_grid, Boundary, Units};
use lossy_condensate::vacuum::VacuumSampler;

fn main() -> lossy_condensate::Result<()> {
    let grid = make_grid(256, 0.5, Boundary::Periodic)?;
    for n0 in [10.0, 100.0] {
        let units = Units::new(n0)?;
        let sampler = VacuumSampler::new(grid, units, None)?;
        let trials = 2000;
        let mean: f64 = (0..trials)
            .map(|i| {
                let f = sampler.sample(&mut trajectory_stream(1, i)).field;
                f.values.iter().map(|z| z.norm_sqr()).sum::<f64>() / grid.n_sites as f64
            })
            .sum::<f64>()
            / trials as f64;
        let half_quantum = 0.5 / grid.dx;
        println!(
            "n0 xi = {n0:>5}: <|psi|^2> = {mean:.4}, mode sum {:.4}, atoms above the condensate {:.4}",
            sampler.expected_weyl_density(),
            sampler.expected_weyl_density() - half_quantum - n0,
        );
    }
    Ok(())
}
