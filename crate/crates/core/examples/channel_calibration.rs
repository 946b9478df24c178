//! Calibrates the AWGN channel for a range of SNRs and checks the empirical
//! SNR by simulation.
//!
//! Run with: cargo run --release --example channel_calibration

use rand::Rng;
use rand_distr::StandardNormal;
use semeq::channel::{transmit, ChannelConfig, Snr};
use semeq::{rng, Symbol};

fn main() -> semeq::Result<()> {
    let mut r = rng::stream(7);
    let symbols: Vec<Symbol> = (0..1000)
        .map(|_| Symbol::new(r.sample(StandardNormal), r.sample(StandardNormal)))
        .collect();
    let power = symbols.iter().map(|x| x.norm_squared()).sum::<f64>() / symbols.len() as f64;
    println!("average symbol power {power:.4}");
    for db in [-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0] {
        let cfg = ChannelConfig::calibrated(power, Snr::Db(db))?;
        let (mut sig, mut noise) = (0.0, 0.0);
        for k in 0..200_000 {
            let x = symbols[k % symbols.len()];
            sig += x.norm_squared();
            noise += (transmit(&x, &cfg, &mut r) - x).norm_squared();
        }
        println!(
            "snr {db:>5} dB  sigma {:.4}  empirical {:.3} dB",
            cfg.sigma,
            10.0 * (sig / noise).log10()
        );
    }
    Ok(())
}
