//! Solves the grid exactly and prints the optimal action values for one
//! observation together with the mean optimal episode length.
//!
//! Run with: cargo run --release --example gridworld_oracle -- [grid_size]

use semeq::gridworld::{mean_optimal_length, optimal_q, Action, Cell, GridConfig, Observation};

fn main() -> semeq::Result<()> {
    let size = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let grid = GridConfig::new(size, 10 * size)?;
    let q = optimal_q(&grid);
    println!(
        "{size}x{size}: {} observations, value iteration converged in {} sweeps (residual {:e})",
        grid.num_observations(),
        q.iterations(),
        q.residual()
    );
    let obs = Observation::new(Cell::new(0, 0), Cell::new(size - 1, size - 1));
    for a in Action::ALL {
        println!("q({obs}, {a:?}) = {}", q.get(&obs, a)?);
    }
    println!("mean optimal episode length: {:.4}", mean_optimal_length(&grid));
    Ok(())
}
