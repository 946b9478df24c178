//! Fits the Gaussian optimal-transport codebook between two trained
//! languages and prints the maps and their information transfer.
//!
//! Run with: cargo run --release --example codebook_fit -- [source_seed] [target_seed]

use semeq::codebook::DEFAULT_REG;
use semeq::gridworld::GridConfig;
use semeq::harness::fit_bundle;
use semeq::language::{train_language, TrainConfig};
use semeq::semantics::DEFAULT_SAMPLES;

fn main() -> semeq::Result<()> {
    let mut args = std::env::args().skip(1).map(|s| s.parse::<u64>().expect("seed"));
    let (s_seed, t_seed) = (args.next().unwrap_or(1), args.next().unwrap_or(2));
    let grid = GridConfig::default();
    let tc = TrainConfig::default();
    let source = train_language(&grid, &tc, s_seed)?;
    let target = train_language(&grid, &tc, t_seed)?;
    let b = fit_bundle(&source, &target, DEFAULT_SAMPLES, DEFAULT_REG, 0)?;

    println!(
        "source atoms {:?}, target atoms {:?}",
        b.source_cloud.counts(),
        b.target_cloud.counts()
    );
    for s in b.codebook.skipped() {
        println!("skipped {:?} atom {} ({} samples)", s.side, s.atom, s.samples);
    }
    for m in b.codebook.maps() {
        let pair = match (m.source_atom, m.target_atom) {
            (Some(i), Some(j)) => format!("{i}->{j}"),
            _ => "identity".into(),
        };
        // Transfer of the map's own source atom into its intended target.
        let zeta = match (m.source_atom, m.target_atom) {
            (Some(i), Some(j)) => b.tensor.zeta(i, j, m.id).map(|z| format!("{z:.3}")).unwrap_or_default(),
            _ => String::new(),
        };
        println!(
            "map {:>2} {pair:>8}  A = [{:7.3} {:7.3}; {:7.3} {:7.3}]  b = ({:6.3}, {:6.3})  zeta {zeta}",
            m.id,
            m.matrix[(0, 0)],
            m.matrix[(0, 1)],
            m.matrix[(1, 0)],
            m.matrix[(1, 1)],
            m.offset.x,
            m.offset.y
        );
    }
    Ok(())
}
