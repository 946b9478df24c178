//! Additive white Gaussian noise channel.
//!
//! SNR is total symbol power over total noise power. With two real
//! components of variance `sigma²` each, noise power is `2·sigma²`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, Symbol};

/// Signal-to-noise ratio setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Snr {
    Db(f64),
    Noiseless,
}

impl Snr {
    pub fn db(&self) -> f64 {
        match self {
            Snr::Db(db) => *db,
            Snr::Noiseless => f64::INFINITY,
        }
    }
}

impl std::fmt::Display for Snr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Snr::Db(db) => write!(f, "{db}"),
            Snr::Noiseless => f.write_str("noiseless"),
        }
    }
}

impl std::str::FromStr for Snr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "noiseless" | "inf" | "+inf" => Ok(Snr::Noiseless),
            other => other
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("cannot parse SNR `{other}`")))
                .map(|db| {
                    if db == f64::INFINITY {
                        Snr::Noiseless
                    } else {
                        Snr::Db(db)
                    }
                }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelConfig {
    pub snr: Snr,
    pub sigma: f64,
}

impl ChannelConfig {
    pub fn noiseless() -> Self {
        Self {
            snr: Snr::Noiseless,
            sigma: 0.0,
        }
    }

    pub fn calibrated(avg_power: f64, snr: Snr) -> Result<Self> {
        Ok(Self {
            snr,
            sigma: calibrate_sigma(avg_power, snr.db())?,
        })
    }

    pub fn is_noiseless(&self) -> bool {
        self.sigma == 0.0
    }
}

/// Per-component noise standard deviation for a target SNR.
pub fn calibrate_sigma(avg_power: f64, snr_db: f64) -> Result<f64> {
    if avg_power <= 0.0 || !avg_power.is_finite() {
        return Err(Error::Config(format!(
            "average symbol power must be positive and finite, got {avg_power}"
        )));
    }
    if snr_db.is_nan() {
        return Err(Error::Config("SNR is NaN".into()));
    }
    if snr_db == f64::INFINITY {
        return Ok(0.0);
    }
    let linear = 10f64.powf(snr_db / 10.0);
    Ok((avg_power / (2.0 * linear)).sqrt())
}

/// One noise realisation `n ~ N(0, sigma²·I₂)`. Draws nothing when noiseless.
pub fn noise<R: Rng + ?Sized>(cfg: &ChannelConfig, rng: &mut R) -> Symbol {
    if cfg.is_noiseless() {
        return Symbol::zeros();
    }
    let n1: f64 = rng.sample(StandardNormal);
    let n2: f64 = rng.sample(StandardNormal);
    Symbol::new(n1, n2) * cfg.sigma
}

pub fn transmit<R: Rng + ?Sized>(symbol: &Symbol, cfg: &ChannelConfig, rng: &mut R) -> Symbol {
    if cfg.is_noiseless() {
        return *symbol;
    }
    symbol + noise(cfg, rng)
}
