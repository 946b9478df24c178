//! Command-line front end.
//!
//! Precedence for every setting: built-in default, then `--config` (a JSON
//! object whose keys are the field names of `TrainConfig` or `SweepConfig`),
//! then explicit flags.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use crate::channel::Snr;
use crate::codebook::{load_codebook, save_codebook, DEFAULT_REG};
use crate::equalizer::Policy;
use crate::gridworld::GridConfig;
use crate::harness::{
    evaluate, fit_bundle, partition_raster, sweep, write_raster, write_results_csv, Artifacts, Bounds, DecoderMode,
    Strategy, StrategySpec, SweepConfig,
};
use crate::language::{load_language, save_language, train_language, Language, TrainConfig};
use crate::semantics::{TransferTensor, DEFAULT_SAMPLES};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "semeq", version, about = "Semantic channel equalization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a language and write it as JSON.
    Train(TrainArgs),
    /// Fit clouds, codebook and transfer tensor for a language pair.
    Codebook(CodebookArgs),
    /// Evaluate one strategy at one SNR.
    Eval(EvalArgs),
    /// Run the strategy × SNR × seed sweep and write a results CSV.
    Sweep(SweepArgs),
    /// Render a language's decision regions as PGM plus encoder points CSV.
    Raster(RasterArgs),
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    grid_size: Option<usize>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    decoder_learning_rate: Option<f64>,
    #[arg(long)]
    entropy_bonus: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    train_snr_db: Option<f64>,
    #[arg(long)]
    baseline: Option<f64>,
    #[arg(long)]
    hidden_units: Option<usize>,
}

#[derive(Debug, Args)]
struct PairArgs {
    /// Source (transmitter) language file.
    #[arg(long)]
    source: PathBuf,
    /// Target (receiver) language file.
    #[arg(long)]
    target: PathBuf,
    /// Expected grid size; checked against the language files.
    #[arg(long)]
    grid_size: Option<usize>,
    #[arg(long)]
    max_steps: Option<usize>,
}

#[derive(Debug, Args)]
struct CodebookArgs {
    #[command(flatten)]
    pair: PairArgs,
    #[arg(long)]
    seed: u64,
    /// Codebook JSON path; tensor and cloud files are written next to it.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    reg: Option<f64>,
}

#[derive(Debug, Args)]
struct FittedArgs {
    /// Codebook file from `semeq codebook`; fitted on the fly when absent.
    #[arg(long)]
    codebook: Option<PathBuf>,
    /// Tensor file; defaults to `<codebook stem>.tensor.json`.
    #[arg(long)]
    tensor: Option<PathBuf>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    reg: Option<f64>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    pair: PairArgs,
    #[command(flatten)]
    fitted: FittedArgs,
    #[arg(long)]
    seed: u64,
    /// SNR in dB, or `noiseless`.
    #[arg(long, allow_negative_numbers = true, default_value = "20")]
    snr: String,
    #[arg(long, default_value_t = 1000)]
    episodes: usize,
    /// Strategy; overrides `--policy`.
    #[arg(long)]
    strategy: Option<String>,
    /// Cross-language policy: none, sem or eff.
    #[arg(long, default_value = "none")]
    policy: String,
    #[arg(long, default_value = "stochastic")]
    decoder: String,
    /// Write the result as JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    pair: PairArgs,
    #[command(flatten)]
    fitted: FittedArgs,
    /// Base seed: fits the codebook when none is given and, unless the config
    /// lists seeds, evaluation uses seeds `seed .. seed + n`.
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated SNR values in dB.
    #[arg(long, allow_negative_numbers = true)]
    snr_list: Option<String>,
    #[arg(long)]
    episodes: Option<usize>,
    /// Number of evaluation seeds.
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    decoder: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct RasterArgs {
    #[arg(long)]
    source: PathBuf,
    /// PGM path; encoder points go to `<stem>.points.csv`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 256)]
    resolution: usize,
    /// `x_min,x_max,y_min,y_max`; defaults to the encoder bounding box + 20%.
    #[arg(long, allow_hyphen_values = true)]
    bounds: Option<String>,
}

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("semeq: error: {e}");
            1
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Train(a) => cmd_train(a),
        Command::Codebook(a) => cmd_codebook(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Raster(a) => cmd_raster(a),
    }
}

fn read_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// `a.json` → `a<suffix>`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let mut tc: TrainConfig = match &a.config {
        Some(p) => read_config(p)?,
        None => TrainConfig::default(),
    };
    macro_rules! set {
        ($($f:ident),*) => { $(if let Some(v) = a.$f { tc.$f = v; })* };
    }
    set!(
        episodes,
        learning_rate,
        decoder_learning_rate,
        entropy_bonus,
        train_snr_db,
        baseline,
        hidden_units
    );
    let d = GridConfig::default();
    let grid = GridConfig::new(a.grid_size.unwrap_or(d.size), a.max_steps.unwrap_or(d.max_steps))?;
    let lang = train_language(&grid, &tc, a.seed)?;
    save_language(&lang, &a.out)?;
    let score = lang.train_meta().map(|m| m.final_score).unwrap_or(f64::NAN);
    println!("wrote {} (greedy noiseless mean length {score:.3})", a.out.display());
    Ok(())
}

fn load_pair(p: &PairArgs) -> Result<(Language, Language)> {
    let source = load_language(&p.source)?;
    let target = load_language(&p.target)?;
    for lang in [&source, &target] {
        let g = lang.grid();
        if p.grid_size.is_some_and(|n| n != g.size) || p.max_steps.is_some_and(|n| n != g.max_steps) {
            return Err(Error::Config(format!(
                "language grid {}x{} (max_steps {}) does not match the requested grid",
                g.size, g.size, g.max_steps
            )));
        }
    }
    Ok((source, target))
}

fn cmd_codebook(a: CodebookArgs) -> Result<()> {
    let (source, target) = load_pair(&a.pair)?;
    let b = fit_bundle(
        &source,
        &target,
        a.samples.unwrap_or(DEFAULT_SAMPLES),
        a.reg.unwrap_or(DEFAULT_REG),
        a.seed,
    )?;
    save_codebook(&b.codebook, &a.out)?;
    let write = |path: PathBuf, text: String| std::fs::write(&path, text).map_err(|e| Error::io(&path, e));
    write(sibling(&a.out, ".tensor.json"), b.tensor.to_json())?;
    b.tensor.write_csv(sibling(&a.out, ".tensor.csv"))?;
    write(sibling(&a.out, ".source_cloud.json"), b.source_cloud.to_json())?;
    write(sibling(&a.out, ".target_cloud.json"), b.target_cloud.to_json())?;
    println!(
        "wrote {} ({} maps, {} skipped atoms)",
        a.out.display(),
        b.codebook.len(),
        b.codebook.skipped().len()
    );
    Ok(())
}

fn artifacts(pair: &PairArgs, fitted: &FittedArgs, seed: u64) -> Result<Artifacts> {
    let (source, target) = load_pair(pair)?;
    let (codebook, tensor) = match &fitted.codebook {
        Some(cb_path) => {
            let cb = load_codebook(cb_path)?;
            let t_path = fitted
                .tensor
                .clone()
                .unwrap_or_else(|| sibling(cb_path, ".tensor.json"));
            let text = std::fs::read_to_string(&t_path).map_err(|e| Error::io(&t_path, e))?;
            (cb, TransferTensor::from_json(&text)?)
        }
        None => {
            if fitted.tensor.is_some() {
                return Err(Error::Config("--tensor requires --codebook".into()));
            }
            let b = fit_bundle(
                &source,
                &target,
                fitted.samples.unwrap_or(DEFAULT_SAMPLES),
                fitted.reg.unwrap_or(DEFAULT_REG),
                seed,
            )?;
            (b.codebook, b.tensor)
        }
    };
    Artifacts::new(source, target, codebook, tensor)
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let strategy = match &a.strategy {
        Some(s) => s.parse()?,
        None => match a.policy.parse::<Policy>()? {
            Policy::None => Strategy::CrossNoEq,
            Policy::Sem => Strategy::CrossSem,
            Policy::Eff => Strategy::CrossEff,
        },
    };
    let spec = StrategySpec::new(strategy, a.decoder.parse()?);
    let snr: Snr = a.snr.parse()?;
    let art = artifacts(&a.pair, &a.fitted, a.seed)?;
    let res = evaluate(spec, &art, snr, a.episodes, a.seed)?;
    let text = serde_json::to_string_pretty(&res).map_err(|e| Error::Numerical(e.to_string()))?;
    match &a.out {
        Some(p) => std::fs::write(p, text + "\n").map_err(|e| Error::io(p, e)),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|p| p.trim().parse::<Snr>().map(|snr| snr.db()))
        .collect()
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    let raw: serde_json::Value = match &a.config {
        Some(p) => read_config(p)?,
        None => serde_json::json!({}),
    };
    let listed_seeds = raw.get("seeds").is_some();
    let mut cfg: SweepConfig = serde_json::from_value(raw).map_err(|e| Error::Config(format!("sweep config: {e}")))?;
    if !listed_seeds {
        cfg.seeds = (a.seed..a.seed + cfg.seeds.len() as u64).collect();
    }
    if let Some(s) = &a.snr_list {
        cfg.snr_list = parse_list(s)?;
    }
    if let Some(n) = a.episodes {
        cfg.episodes = n;
    }
    if let Some(n) = a.seeds {
        cfg.seeds = (a.seed..a.seed + n as u64).collect();
    }
    if let Some(d) = &a.decoder {
        cfg.decoder = d.parse::<DecoderMode>()?;
    }
    let fitted = FittedArgs {
        codebook: a.fitted.codebook.clone(),
        tensor: a.fitted.tensor.clone(),
        samples: a.fitted.samples.or(Some(cfg.samples)),
        reg: a.fitted.reg.or(Some(cfg.reg)),
    };
    let art = artifacts(&a.pair, &fitted, a.seed)?;
    let rows = sweep(&cfg, &art)?;
    write_results_csv(&rows, &a.out)?;
    println!("wrote {} ({} rows)", a.out.display(), rows.len());
    Ok(())
}

fn cmd_raster(a: RasterArgs) -> Result<()> {
    let lang = load_language(&a.source)?;
    let bounds = match &a.bounds {
        Some(b) => b.parse::<Bounds>()?,
        None => Bounds::around(&lang)?,
    };
    let raster = partition_raster(&lang, bounds, a.resolution)?;
    let points = sibling(&a.out, ".points.csv");
    write_raster(&lang, &raster, &a.out, &points)?;
    println!("wrote {} and {}", a.out.display(), points.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sibling_paths() {
        assert_eq!(
            sibling(Path::new("out/cb.json"), ".tensor.json"),
            PathBuf::from("out/cb.tensor.json")
        );
        assert_eq!(
            sibling(Path::new("r.pgm"), ".points.csv"),
            PathBuf::from("r.points.csv")
        );
    }

    #[test]
    fn snr_lists() {
        assert_eq!(parse_list("-10,0, 20").unwrap(), vec![-10.0, 0.0, 20.0]);
        assert_eq!(parse_list("noiseless").unwrap(), vec![f64::INFINITY]);
        assert!(parse_list("1,x").is_err());
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(
            run(["semeq", "sweep", "--out", "x.csv", "--source", "a", "--target", "b"]),
            2
        );
        assert_eq!(run(["semeq", "train", "--seed", "1", "--out", "x", "--bogus"]), 2);
        assert_eq!(run(["semeq", "frobnicate"]), 2);
    }

    #[test]
    fn runtime_errors_exit_1() {
        assert_eq!(
            run([
                "semeq",
                "raster",
                "--source",
                "/nonexistent/lang.json",
                "--out",
                "x.pgm"
            ]),
            1
        );
    }
}
