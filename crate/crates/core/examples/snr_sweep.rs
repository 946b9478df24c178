//! Runs the full strategy × SNR × seed sweep for two trained languages and
//! writes the results CSV.
//!
//! Run with: cargo run --release --example snr_sweep -- [out.csv]

use semeq::codebook::DEFAULT_REG;
use semeq::gridworld::GridConfig;
use semeq::harness::{fit_bundle, sweep, write_results_csv, Artifacts, SweepConfig};
use semeq::language::{train_language, TrainConfig};

fn main() -> semeq::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "sweep.csv".into());
    let grid = GridConfig::default();
    let tc = TrainConfig::default();
    let source = train_language(&grid, &tc, 1)?;
    let target = train_language(&grid, &tc, 2)?;
    let cfg = SweepConfig::default();
    let b = fit_bundle(&source, &target, cfg.samples, DEFAULT_REG, 0)?;
    let art = Artifacts::new(source, target, b.codebook, b.tensor)?;
    let rows = sweep(&cfg, &art)?;
    write_results_csv(&rows, &out)?;
    println!("wrote {out} ({} rows)", rows.len());
    Ok(())
}
