//! Trains two languages on different seeds, fits the codebook between them
//! and compares the five communication strategies over a small SNR sweep.
//!
//! Run with: cargo run --release --example equalize_mismatch -- [source_seed] [target_seed]

use semeq::channel::Snr;
use semeq::codebook::DEFAULT_REG;
use semeq::gridworld::GridConfig;
use semeq::harness::{evaluate, fit_bundle, mean_ci95, Artifacts, DecoderMode, Strategy, StrategySpec};
use semeq::language::{train_language, TrainConfig};
use semeq::semantics::DEFAULT_SAMPLES;

fn main() -> semeq::Result<()> {
    let mut args = std::env::args().skip(1).map(|s| s.parse::<u64>().expect("seed"));
    let s_seed = args.next().unwrap_or(1);
    let t_seed = args.next().unwrap_or(2);

    let grid = GridConfig::default();
    let tc = TrainConfig::default();
    let source = train_language(&grid, &tc, s_seed)?;
    let target = train_language(&grid, &tc, t_seed)?;
    let bundle = fit_bundle(&source, &target, DEFAULT_SAMPLES, DEFAULT_REG, 0)?;
    println!(
        "codebook: {} maps, {} skipped atoms",
        bundle.codebook.len(),
        bundle.codebook.skipped().len()
    );
    for i in 0..4 {
        let row: Vec<String> = (0..4)
            .map(|j| format!("{:.3}", bundle.tensor.zeta(i, j, 0).unwrap_or(f64::NAN)))
            .collect();
        println!("identity zeta row {i}: [{}]", row.join(", "));
    }
    let art = Artifacts::new(source, target, bundle.codebook, bundle.tensor)?;

    println!(
        "{:>6} {:>16} {:>8} {:>8} {:>8} {:>8}",
        "snr", "strategy", "mean", "ci95", "success", "power"
    );
    for db in [0.0, 10.0, 20.0] {
        for st in Strategy::ALL {
            let runs = (1..=10)
                .map(|seed| {
                    evaluate(
                        StrategySpec::new(st, DecoderMode::Stochastic),
                        &art,
                        Snr::Db(db),
                        1000,
                        seed,
                    )
                })
                .collect::<semeq::Result<Vec<_>>>()?;
            let (m, h) = mean_ci95(&runs.iter().map(|r| r.mean_length).collect::<Vec<_>>());
            let succ = runs.iter().map(|r| r.success_rate).sum::<f64>() / runs.len() as f64;
            let pw = runs.iter().map(|r| r.mean_post_t_power).sum::<f64>() / runs.len() as f64;
            println!("{db:>6} {:>16} {m:>8.3} {h:>8.3} {succ:>8.3} {pw:>8.3}", st.name());
        }
    }
    Ok(())
}
