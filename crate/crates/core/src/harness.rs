//! Experiment driver: episodes, strategy evaluation, SNR sweeps and
//! partition rasters.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{self, ChannelConfig, Snr};
use crate::codebook::{build_codebook, Codebook, DEFAULT_REG};
use crate::equalizer::{Correspondence, Equalizer, Policy};
use crate::gridworld::{self, optimal_q, GridConfig, Observation};
use crate::language::{argmax, Language};
use crate::rng;
use crate::semantics::{
    build_cloud, transfer_tensor, CloudSampling, ObservationSampler, Partition, SampleCloud, TransferTensor,
    DEFAULT_SAMPLES,
};
use crate::{Error, Result, Symbol};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    SourceMatched,
    TargetMatched,
    CrossNoEq,
    CrossSem,
    CrossEff,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::SourceMatched,
        Strategy::TargetMatched,
        Strategy::CrossNoEq,
        Strategy::CrossSem,
        Strategy::CrossEff,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::SourceMatched => "source_matched",
            Strategy::TargetMatched => "target_matched",
            Strategy::CrossNoEq => "cross_no_eq",
            Strategy::CrossSem => "cross_sem",
            Strategy::CrossEff => "cross_eff",
        }
    }

    pub fn policy(self) -> Policy {
        match self {
            Strategy::CrossSem => Policy::Sem,
            Strategy::CrossEff => Policy::Eff,
            _ => Policy::None,
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown strategy `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecoderMode {
    #[default]
    Stochastic,
    Greedy,
}

impl DecoderMode {
    pub fn name(self) -> &'static str {
        match self {
            DecoderMode::Stochastic => "stochastic",
            DecoderMode::Greedy => "greedy",
        }
    }
}

impl std::fmt::Display for DecoderMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for DecoderMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stochastic" => Ok(DecoderMode::Stochastic),
            "greedy" => Ok(DecoderMode::Greedy),
            other => Err(Error::Config(format!(
                "unknown decoder mode `{other}` (stochastic|greedy)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategySpec {
    pub strategy: Strategy,
    pub decoder: DecoderMode,
}

impl StrategySpec {
    pub fn new(strategy: Strategy, decoder: DecoderMode) -> Self {
        Self { strategy, decoder }
    }
}

/// Everything an evaluation needs, checked once for consistency.
#[derive(Debug, Clone)]
pub struct Artifacts {
    source: Language,
    target: Language,
    equalizer: Equalizer,
}

impl Artifacts {
    pub fn new(source: Language, target: Language, codebook: Codebook, tensor: TransferTensor) -> Result<Self> {
        Self::with_correspondence(source, target, codebook, tensor, Correspondence::identity())
    }

    pub fn with_correspondence(
        source: Language,
        target: Language,
        codebook: Codebook,
        tensor: TransferTensor,
        kappa: Correspondence,
    ) -> Result<Self> {
        if source.grid() != target.grid() {
            return Err(Error::Provenance(
                "source and target languages use different grids".into(),
            ));
        }
        let target_fp = target.fingerprint();
        if codebook.provenance().target_language != target_fp {
            return Err(Error::Provenance(
                "codebook was fitted for a different target language".into(),
            ));
        }
        if tensor.provenance().target_language != target_fp {
            return Err(Error::Provenance(
                "transfer tensor was built for a different target language".into(),
            ));
        }
        let q = optimal_q(source.grid());
        let equalizer = Equalizer::new(source.clone(), codebook, tensor, kappa, q, Policy::None)?;
        Ok(Self {
            source,
            target,
            equalizer,
        })
    }

    pub fn source(&self) -> &Language {
        &self.source
    }

    pub fn target(&self) -> &Language {
        &self.target
    }

    pub fn grid(&self) -> &GridConfig {
        self.source.grid()
    }

    pub fn codebook(&self) -> &Codebook {
        self.equalizer.codebook()
    }

    pub fn tensor(&self) -> &TransferTensor {
        self.equalizer.tensor()
    }

    pub fn equalizer(&self, policy: Policy) -> Equalizer {
        self.equalizer.with_policy(policy)
    }
}

/// Clouds, codebook and transfer tensor for a language pair.
#[derive(Debug, Clone)]
pub struct Bundle {
    pub source_cloud: SampleCloud,
    pub target_cloud: SampleCloud,
    pub codebook: Codebook,
    pub tensor: TransferTensor,
}

/// Samples both clouds (`samples` symbols each), fits the codebook and
/// estimates the transfer tensor from the source cloud.
pub fn fit_bundle(source: &Language, target: &Language, samples: usize, reg: f64, seed: u64) -> Result<Bundle> {
    if source.grid() != target.grid() {
        return Err(Error::Provenance(
            "source and target languages use different grids".into(),
        ));
    }
    let sampler = ObservationSampler::new(*source.grid());
    let sampling = CloudSampling::Random { samples };
    let source_cloud = build_cloud(source, &sampler, sampling, &mut rng::substream(seed, 0))?;
    let target_cloud = build_cloud(target, &sampler, sampling, &mut rng::substream(seed, 1))?;
    let codebook = build_codebook(&source_cloud, &target_cloud, reg)?;
    let tensor = transfer_tensor(&codebook, &source_cloud, &Partition::new(target))?;
    Ok(Bundle {
        source_cloud,
        target_cloud,
        codebook,
        tensor,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeOutcome {
    pub length: usize,
    pub success: bool,
    /// Sum of `‖x‖²` over the symbols that entered the channel.
    pub post_t_energy: f64,
}

/// Runs one episode from `start`.
#[allow(clippy::too_many_arguments)]
pub fn run_episode_from<R: Rng + ?Sized>(
    start: Observation,
    tx: &Language,
    rx: &Language,
    equalizer: Option<&Equalizer>,
    channel: &ChannelConfig,
    grid: &GridConfig,
    mode: DecoderMode,
    rng: &mut R,
) -> Result<EpisodeOutcome> {
    if tx.grid() != grid || rx.grid() != grid {
        return Err(Error::Config("language grid differs from the episode grid".into()));
    }
    let mut obs = start;
    let mut length = 0;
    let mut energy = 0.0;
    while length < grid.max_steps {
        let mut x = tx.encode(&obs)?;
        if let Some(eq) = equalizer {
            x = eq.equalize(&obs, &x)?;
        }
        energy += x.norm_squared();
        let y = channel::transmit(&x, channel, rng);
        let action = match mode {
            DecoderMode::Stochastic => rx.sample_action(&y, rng)?,
            DecoderMode::Greedy => rx.greedy_action(&y)?,
        };
        let out = gridworld::step(&obs, action, grid);
        length += 1;
        obs = out.next;
        if out.terminal {
            return Ok(EpisodeOutcome {
                length,
                success: true,
                post_t_energy: energy,
            });
        }
    }
    Ok(EpisodeOutcome {
        length,
        success: false,
        post_t_energy: energy,
    })
}

/// Runs one episode from a uniformly drawn start.
pub fn run_episode<R: Rng + ?Sized>(
    tx: &Language,
    rx: &Language,
    equalizer: Option<&Equalizer>,
    channel: &ChannelConfig,
    grid: &GridConfig,
    mode: DecoderMode,
    rng: &mut R,
) -> Result<EpisodeOutcome> {
    let start = gridworld::new_episode(grid, rng);
    run_episode_from(start, tx, rx, equalizer, channel, grid, mode, rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub strategy: Strategy,
    pub decoder_mode: DecoderMode,
    pub snr_db: f64,
    pub seed: u64,
    pub episodes: usize,
    pub mean_length: f64,
    pub std_length: f64,
    pub success_rate: f64,
    #[serde(rename = "mean_post_T_power")]
    pub mean_post_t_power: f64,
}

/// Runs `episodes` episodes of one strategy at one SNR.
///
/// Episode `k` draws everything from `substream(seed, k)`, so strategies
/// evaluated with the same seed share start positions. Failed episodes count
/// as `max_steps`.
pub fn evaluate(spec: StrategySpec, artifacts: &Artifacts, snr: Snr, episodes: usize, seed: u64) -> Result<EvalResult> {
    if episodes == 0 {
        return Err(Error::Config("episodes must be at least 1".into()));
    }
    let (tx, rx) = match spec.strategy {
        Strategy::SourceMatched => (&artifacts.source, &artifacts.source),
        Strategy::TargetMatched => (&artifacts.target, &artifacts.target),
        _ => (&artifacts.source, &artifacts.target),
    };
    let equalizer = match spec.strategy.policy() {
        Policy::None => None,
        p => Some(artifacts.equalizer(p)),
    };
    let channel = ChannelConfig::calibrated(tx.average_power(), snr)?;
    let grid = *artifacts.grid();

    let outcomes = (0..episodes)
        .into_par_iter()
        .map(|k| {
            let mut r = rng::substream(seed, k as u64);
            run_episode(tx, rx, equalizer.as_ref(), &channel, &grid, spec.decoder, &mut r)
        })
        .collect::<Result<Vec<_>>>()?;

    let n = episodes as f64;
    let mean = outcomes.iter().map(|o| o.length as f64).sum::<f64>() / n;
    let var = if episodes > 1 {
        outcomes.iter().map(|o| (o.length as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let steps: usize = outcomes.iter().map(|o| o.length).sum();
    let energy: f64 = outcomes.iter().map(|o| o.post_t_energy).sum();
    Ok(EvalResult {
        strategy: spec.strategy,
        decoder_mode: spec.decoder,
        snr_db: snr.db(),
        seed,
        episodes,
        mean_length: mean,
        std_length: var.sqrt(),
        success_rate: outcomes.iter().filter(|o| o.success).count() as f64 / n,
        mean_post_t_power: energy / steps as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub snr_list: Vec<f64>,
    pub episodes: usize,
    pub seeds: Vec<u64>,
    pub samples: usize,
    pub reg: f64,
    pub decoder: DecoderMode,
    pub strategies: Vec<Strategy>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            snr_list: vec![-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0],
            episodes: 1000,
            seeds: (1..=10).collect(),
            samples: DEFAULT_SAMPLES,
            reg: DEFAULT_REG,
            decoder: DecoderMode::Stochastic,
            strategies: Strategy::ALL.to_vec(),
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.snr_list.is_empty() || self.seeds.is_empty() || self.strategies.is_empty() {
            return Err(Error::Config(
                "sweep needs nonempty snr_list, seeds and strategies".into(),
            ));
        }
        if self.snr_list.iter().any(|s| s.is_nan()) {
            return Err(Error::Config("snr_list contains NaN".into()));
        }
        if self.episodes == 0 {
            return Err(Error::Config("episodes must be at least 1".into()));
        }
        Ok(())
    }
}

fn snr_of(db: f64) -> Snr {
    if db == f64::INFINITY {
        Snr::Noiseless
    } else {
        Snr::Db(db)
    }
}

/// Full cross product strategies × SNR × seeds, in that nesting order.
pub fn sweep(cfg: &SweepConfig, artifacts: &Artifacts) -> Result<Vec<EvalResult>> {
    cfg.validate()?;
    let mut out = Vec::with_capacity(cfg.strategies.len() * cfg.snr_list.len() * cfg.seeds.len());
    for &strategy in &cfg.strategies {
        for &db in &cfg.snr_list {
            for &seed in &cfg.seeds {
                let spec = StrategySpec::new(strategy, cfg.decoder);
                out.push(evaluate(spec, artifacts, snr_of(db), cfg.episodes, seed)?);
            }
        }
    }
    Ok(out)
}

pub fn write_results_csv(results: &[EvalResult], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "strategy",
        "decoder_mode",
        "snr_db",
        "seed",
        "episodes",
        "mean_length",
        "std_length",
        "success_rate",
        "mean_post_T_power",
    ])?;
    for r in results {
        w.write_record([
            r.strategy.name().to_string(),
            r.decoder_mode.name().to_string(),
            r.snr_db.to_string(),
            r.seed.to_string(),
            r.episodes.to_string(),
            r.mean_length.to_string(),
            r.std_length.to_string(),
            r.success_rate.to_string(),
            r.mean_post_t_power.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Mean and 95% half-width (Student t) of a metric across seeds.
pub fn mean_ci95(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, f64::INFINITY);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, t975(n - 1) * (var / n as f64).sqrt())
}

/// Two-sided 95% Student t quantile.
fn t975(dof: usize) -> f64 {
    const TABLE: [f64; 30] = [
        12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228, 2.201, 2.179, 2.160, 2.145, 2.131,
        2.120, 2.110, 2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064, 2.060, 2.056, 2.052, 2.048, 2.045, 2.042,
    ];
    TABLE.get(dof - 1).copied().unwrap_or(1.96)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Bounds {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self> {
        let b = Self {
            x_min,
            x_max,
            y_min,
            y_max,
        };
        let ok = [x_min, x_max, y_min, y_max].iter().all(|v| v.is_finite()) && x_max > x_min && y_max > y_min;
        if !ok {
            return Err(Error::Config(format!("degenerate raster bounds {b:?}")));
        }
        Ok(b)
    }

    /// Bounding box of the encoder table, inflated by 20% on each axis.
    pub fn around(lang: &Language) -> Result<Self> {
        let t = lang.encoder().table();
        let fold = |f: fn(&Symbol) -> f64| {
            t.iter()
                .map(f)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
        };
        let (x0, x1) = fold(|s| s.x);
        let (y0, y1) = fold(|s| s.y);
        let (dx, dy) = (0.1 * (x1 - x0), 0.1 * (y1 - y0));
        Self::new(x0 - dx, x1 + dx, y0 - dy, y1 + dy)
    }
}

impl std::str::FromStr for Bounds {
    type Err = Error;

    /// `x_min,x_max,y_min,y_max`
    fn from_str(s: &str) -> Result<Self> {
        let v: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Config(format!("cannot parse bounds `{s}`")))?;
        match v[..] {
            [a, b, c, d] => Self::new(a, b, c, d),
            _ => Err(Error::Config(format!("bounds need four numbers, got `{s}`"))),
        }
    }
}

/// Atom index at each pixel centre. Row 0 is the top edge (`y_max`).
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub bounds: Bounds,
    pub resolution: usize,
    pub atoms: Vec<u8>,
}

impl Raster {
    pub fn at(&self, row: usize, col: usize) -> u8 {
        self.atoms[row * self.resolution + col]
    }

    pub fn pixel_center(&self, row: usize, col: usize) -> Symbol {
        pixel_center(&self.bounds, self.resolution, row, col)
    }

    /// Binary PGM, grey level `85 · atom`.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{0} {0}\n255\n", self.resolution).into_bytes();
        out.extend(self.atoms.iter().map(|a| a * 85));
        out
    }
}

fn pixel_center(b: &Bounds, res: usize, row: usize, col: usize) -> Symbol {
    let dx = (b.x_max - b.x_min) / res as f64;
    let dy = (b.y_max - b.y_min) / res as f64;
    Symbol::new(b.x_min + (col as f64 + 0.5) * dx, b.y_max - (row as f64 + 0.5) * dy)
}

pub fn partition_raster(lang: &Language, bounds: Bounds, resolution: usize) -> Result<Raster> {
    if resolution < 2 {
        return Err(Error::Config("raster resolution must be at least 2".into()));
    }
    let mut atoms = Vec::with_capacity(resolution * resolution);
    for row in 0..resolution {
        for col in 0..resolution {
            let logits = lang
                .decoder()
                .forward(&pixel_center(&bounds, resolution, row, col))
                .logits;
            atoms.push(argmax(&logits) as u8);
        }
    }
    Ok(Raster {
        bounds,
        resolution,
        atoms,
    })
}

/// Writes the raster as PGM and the encoder points next to it as CSV
/// (`obs_index, observation, x, y, atom`).
pub fn write_raster(lang: &Language, raster: &Raster, pgm: &Path, points: &Path) -> Result<()> {
    let mut f = std::fs::File::create(pgm).map_err(|e| Error::io(pgm, e))?;
    f.write_all(&raster.to_pgm()).map_err(|e| Error::io(pgm, e))?;
    let part = Partition::new(lang);
    let mut w = csv::Writer::from_path(points)?;
    w.write_record(["obs_index", "observation", "x", "y", "atom"])?;
    for (k, obs) in gridworld::all_observations(lang.grid()).iter().enumerate() {
        let x = lang.encode(obs)?;
        w.write_record([
            k.to_string(),
            obs.to_string(),
            x.x.to_string(),
            x.y.to_string(),
            part.atom_of(&x)?.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(points, e))
}
