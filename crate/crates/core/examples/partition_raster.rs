//! Trains a language and renders its decision regions as a PGM image, with
//! the encoder points alongside as CSV.
//!
//! Run with: cargo run --release --example partition_raster -- [seed] [out.pgm]

use std::path::PathBuf;

use semeq::gridworld::GridConfig;
use semeq::harness::{partition_raster, write_raster, Bounds};
use semeq::language::{train_language, TrainConfig};
use semeq::rng;
use semeq::semantics::{build_cloud, CloudSampling, ObservationSampler};

fn main() -> semeq::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| format!("partition_s{seed}.pgm")));

    let lang = train_language(&GridConfig::default(), &TrainConfig::default(), seed)?;
    let raster = partition_raster(&lang, Bounds::around(&lang)?, 256)?;
    let points = out.with_extension("points.csv");
    write_raster(&lang, &raster, &out, &points)?;

    let sampler = ObservationSampler::new(*lang.grid());
    let cloud = build_cloud(
        &lang,
        &sampler,
        CloudSampling::Exhaustive { repeats: 1 },
        &mut rng::stream(0),
    )?;
    let mut pixels = [0usize; 4];
    for &a in &raster.atoms {
        pixels[a as usize] += 1;
    }
    println!("bounds {:?}", raster.bounds);
    println!(
        "pixels per atom {pixels:?}, encoder points per atom {:?}",
        cloud.counts()
    );
    println!("wrote {} and {}", out.display(), points.display());
    Ok(())
}
