//! Runs a scenario end to end and reads the results back from disk.
//!
//! `cargo run --release --example run_pipeline`

use lossy_condensate::config::parse_config;
use lossy_condensate::persist::{read_csv, Dataset, RunManifest};
use lossy_condensate::runner::{run_directory, run_scenario};

fn main() -> lossy_condensate::Result<()> {
    let out = std::env::temp_dir().join("lossy-condensate-example");
    let text = format!(
        r#"
scenario = "gamma_sweep"

[physics]
gammas = [0.2, 0.4, 0.6, 0.8, 1.0]

[numerics]
n_sites = 2048
t_max = 150.0
mean_field = true

[outputs]
directory = "{}"
formats = ["binary", "csv"]
"#,
        out.display()
    );
    let cfg = parse_config(&text)?;
    let manifest = run_scenario(&cfg)?;
    let dir = run_directory(&cfg)?;
    println!("run directory {}", dir.display());
    println!("summary {}", manifest.summary);

    let back = RunManifest::read(&dir.join("manifest.json"))?;
    for f in &back.files {
        println!("  {:<12} {:<7} {}", f.path, f.format, &f.sha256[..16]);
    }
    let table = Dataset::read_binary(&dir.join("sweep.bin"))?;
    println!("columns {:?}", table.columns);
    let (header, rows) = read_csv(&dir.join("sweep.csv"))?;
    let speed = header
        .iter()
        .position(|h| h == "plateau_speed")
        .unwrap_or(3);
    for r in rows {
        println!("gamma {:.2}: speed {:.4}", r[0], r[speed]);
    }
    Ok(())
}
