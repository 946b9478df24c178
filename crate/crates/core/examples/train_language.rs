//! Trains a language and reports its greedy performance.
//!
//! Run with: cargo run --release --example train_language -- [seed]

use semeq::gridworld::{mean_optimal_length, GridConfig};
use semeq::language::{train_language, TrainConfig};

fn main() -> semeq::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let grid = GridConfig::default();
    let tc = TrainConfig::default();
    let start = std::time::Instant::now();
    let lang = train_language(&grid, &tc, seed)?;
    let meta = lang.train_meta().expect("trained");
    println!(
        "seed {seed}: trained {} episodes in {:.1?}",
        tc.episodes,
        start.elapsed()
    );
    println!(
        "greedy noiseless mean length {:.3} (optimal {:.3})",
        meta.final_score,
        mean_optimal_length(&grid)
    );
    Ok(())
}
