//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use nalgebra::Matrix2;
use rand::Rng;
use rand_distr::StandardNormal;

use semeq::channel::{self, ChannelConfig, Snr};
use semeq::codebook::{
    build_codebook, fit_linear_ot, matrix_sqrt_spd, Codebook, CodebookProvenance, LinearMap, Side, DEFAULT_REG,
};
use semeq::equalizer::{Correspondence, Equalizer, Policy};
use semeq::gridworld::{all_observations, manhattan, mean_optimal_length, optimal_q, step, Action, GridConfig, QTable};
use semeq::harness::{evaluate, fit_bundle, mean_ci95, Artifacts, DecoderMode, Strategy, StrategySpec};
use semeq::language::{save_language, train_language, Decoder, Encoder, Language, TrainConfig};
use semeq::rng;
use semeq::semantics::{info_transfer, transfer_tensor, Partition, SampleCloud};
use semeq::{Error, Symbol};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e2s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Quadrant-decoder language whose encoder is a fixed pseudo-random table.
fn quadrant_language(seed: u64) -> Language {
    let mut r = rng::stream(seed);
    let table = (0..600)
        .map(|_| Symbol::new(r.sample(StandardNormal), r.sample(StandardNormal)))
        .collect();
    Language::from_parts(GridConfig::default(), Encoder::new(table).unwrap(), Decoder::quadrant()).unwrap()
}

fn uniform_square(n: usize, seed: u64) -> Vec<Symbol> {
    let mut r = rng::stream(seed);
    (0..n)
        .map(|_| Symbol::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)))
        .collect()
}

fn exact_math() -> Check {
    // Row normalization over random codebooks.
    let lang = quadrant_language(11);
    let part = Partition::new(&lang);
    let cloud = SampleCloud::from_symbols(&part, &uniform_square(4000, 12)).map_err(e2s)?;
    let fp = lang.fingerprint();
    let mut r = rng::stream(13);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let mut maps = vec![LinearMap::identity(0)];
        for id in 1..=6 {
            let a = Matrix2::from_fn(|_, _| r.sample::<f64, _>(StandardNormal));
            let b = Symbol::new(r.sample(StandardNormal), r.sample(StandardNormal));
            maps.push(LinearMap::new(id, a, b));
        }
        let prov = CodebookProvenance {
            source_language: fp.clone(),
            target_language: fp.clone(),
            reg: 0.0,
        };
        let cb = Codebook::new(maps, vec![], prov).map_err(e2s)?;
        let t = transfer_tensor(&cb, &cloud, &part).map_err(e2s)?;
        for i in 0..4 {
            for m in 0..cb.len() {
                let hits: usize = (0..4).map(|j| t.count(i, j, m)).sum();
                ensure(hits == t.source_count(i), || {
                    format!("row ({i}, map {m}) counts {hits} != {}", t.source_count(i))
                })?;
                let s: f64 = (0..4).map(|j| t.zeta(i, j, m).unwrap()).sum();
                worst = worst.max((s - 1.0).abs());
            }
        }
    }
    ensure(worst <= 4.0 * f64::EPSILON, || format!("zeta row sum off by {worst:e}"))?;

    // Gaussian Monge closed form.
    let src: Vec<Symbol> = (0..50)
        .map(|k| {
            let t = k as f64 * 0.37;
            Symbol::new(t.sin() * 2.0 + 0.1 * k as f64, t.cos() - 0.05 * k as f64)
        })
        .collect();
    let id = fit_linear_ot(&src, &src, DEFAULT_REG).map_err(e2s)?;
    let id_err = (id.matrix - Matrix2::identity()).norm();
    ensure(id_err <= 1e-6, || format!("identity recovery ‖A−I‖ = {id_err:e}"))?;
    let shifted: Vec<Symbol> = src.iter().map(|x| x * 2.0 + Symbol::new(3.0, -1.0)).collect();
    let aff = fit_linear_ot(&src, &shifted, DEFAULT_REG).map_err(e2s)?;
    let a_err = (aff.matrix - Matrix2::identity() * 2.0).norm();
    let b_err = (aff.offset - Symbol::new(3.0, -1.0)).norm();
    ensure(a_err <= 1e-6 && b_err <= 1e-6, || {
        format!("affine recovery errors A {a_err:e} b {b_err:e}")
    })?;
    let mut sqrt_worst = 0.0f64;
    for m in [
        Matrix2::new(4.0, 1.0, 1.0, 3.0),
        Matrix2::new(1e-3, 0.0, 0.0, 1e3),
        Matrix2::new(2.0, -1.9, -1.9, 2.0),
    ] {
        let s = matrix_sqrt_spd(&m).map_err(e2s)?;
        sqrt_worst = sqrt_worst.max((s * s - m).norm() / m.norm());
    }
    ensure(sqrt_worst < 1e-12, || format!("sqrt residual {sqrt_worst:e}"))?;

    // Value iteration against the Manhattan closed form.
    let grid = GridConfig::default();
    let q = optimal_q(&grid);
    for o in all_observations(&grid) {
        for a in Action::ALL {
            let next = step(&o, a, &grid).next;
            let want = -1.0 - manhattan(next.scout, o.treasure) as f64;
            let got = q.get(&o, a).map_err(e2s)?;
            ensure(got == want, || format!("q({o}, {a:?}) = {got}, closed form {want}"))?;
        }
    }

    // Empirical SNR of the channel.
    let mut r = rng::stream(14);
    let table = lang.encoder().table();
    let power = lang.average_power();
    let mut snr_worst = 0.0f64;
    for db in [-10.0, 0.0, 10.0, 20.0] {
        let cfg = ChannelConfig::calibrated(power, Snr::Db(db)).map_err(e2s)?;
        let (mut sig, mut noi) = (0.0, 0.0);
        for _ in 0..1_000_000 {
            let x = table[r.random_range(0..table.len())];
            let y = channel::transmit(&x, &cfg, &mut r);
            sig += x.norm_squared();
            noi += (y - x).norm_squared();
        }
        snr_worst = snr_worst.max((10.0 * (sig / noi).log10() - db).abs());
    }
    ensure(snr_worst <= 0.1, || format!("empirical SNR off by {snr_worst:.4} dB"))?;

    // Policies: eff shift invariance and sem identity on matched languages.
    let other = quadrant_language(15);
    let sc = SampleCloud::from_symbols(&part, lang.encoder().table()).map_err(e2s)?;
    let tpart = Partition::new(&other);
    let rotated: Vec<Symbol> = other.encoder().table().iter().map(|x| Symbol::new(-x.y, x.x)).collect();
    let tc = SampleCloud::from_symbols(&tpart, &rotated).map_err(e2s)?;
    let cb = build_codebook(&sc, &tc, DEFAULT_REG).map_err(e2s)?;
    let t = transfer_tensor(&cb, &sc, &tpart).map_err(e2s)?;
    let eq = Equalizer::new(lang.clone(), cb, t, Correspondence::identity(), q.clone(), Policy::Eff).map_err(e2s)?;
    for c in [-17.25, 0.5, 1e3] {
        let rows = q.rows().iter().map(|row| row.map(|v| v + c)).collect();
        let shifted = eq
            .with_qtable(QTable::from_rows(grid, rows).map_err(e2s)?)
            .map_err(e2s)?;
        for o in all_observations(&grid) {
            ensure(
                eq.select_eff(&o).map_err(e2s)? == shifted.select_eff(&o).map_err(e2s)?,
                || format!("eff selection at {o} changed under q + {c}"),
            )?;
        }
    }
    let b = fit_bundle(&lang, &lang, 5000, DEFAULT_REG, 16).map_err(e2s)?;
    let same = Equalizer::new(
        lang.clone(),
        b.codebook,
        b.tensor,
        Correspondence::identity(),
        q,
        Policy::Sem,
    )
    .map_err(e2s)?;
    for o in all_observations(&grid) {
        ensure(same.select_sem(&o).map_err(e2s)? == 0, || {
            format!("sem picked a non-identity map at {o}")
        })?;
    }

    Ok(format!(
        "row-sum slack {worst:e}, sqrt residual {sqrt_worst:.1e}, SNR error {snr_worst:.4} dB"
    ))
}

fn training_sanity(langs: &[Language]) -> Check {
    let grid = GridConfig::default();
    let opt = mean_optimal_length(&grid);
    let mut parts = vec![];
    for lang in langs {
        let seed = lang.train_meta().map(|m| m.seed).unwrap_or(0);
        let bundle = fit_bundle(lang, lang, 2000, DEFAULT_REG, 0).map_err(e2s)?;
        let art = Artifacts::new(lang.clone(), lang.clone(), bundle.codebook, bundle.tensor).map_err(e2s)?;
        let res = evaluate(
            StrategySpec::new(Strategy::SourceMatched, DecoderMode::Greedy),
            &art,
            Snr::Noiseless,
            1000,
            seed,
        )
        .map_err(e2s)?;
        ensure(res.mean_length <= 1.3 * opt && res.success_rate >= 0.99, || {
            format!(
                "seed {seed}: mean length {:.3} (limit {:.3}), success {:.3}",
                res.mean_length,
                1.3 * opt,
                res.success_rate
            )
        })?;
        parts.push(format!("seed {seed}: {:.3}/{:.3}", res.mean_length, opt));
    }
    Ok(parts.join(", "))
}

fn mismatch(source: &Language, target: &Language) -> Check {
    let b = fit_bundle(source, target, 10_000, DEFAULT_REG, 0).map_err(e2s)?;
    let art = Artifacts::new(source.clone(), target.clone(), b.codebook, b.tensor).map_err(e2s)?;
    let stats = |st: Strategy, db: f64| -> Result<(f64, f64), String> {
        let means = (1..=10)
            .map(|seed| {
                evaluate(
                    StrategySpec::new(st, DecoderMode::Stochastic),
                    &art,
                    Snr::Db(db),
                    1000,
                    seed,
                )
                .map(|r| r.mean_length)
            })
            .collect::<Result<Vec<_>, _>>()
            .map_err(e2s)?;
        Ok(mean_ci95(&means))
    };
    let mut summary = vec![];
    for db in [0.0, 10.0, 20.0] {
        let (no_eq, h_no) = stats(Strategy::CrossNoEq, db)?;
        let (sem, h_sem) = stats(Strategy::CrossSem, db)?;
        let (eff, h_eff) = stats(Strategy::CrossEff, db)?;
        ensure(eff <= sem + 0.25, || {
            format!("{db} dB: eff {eff:.3} > sem {sem:.3} + 0.25")
        })?;
        if db == 20.0 {
            let (tgt, _) = stats(Strategy::TargetMatched, db)?;
            ensure(no_eq - h_no > sem + h_sem, || {
                format!("20 dB: no-eq {no_eq:.3}±{h_no:.3} vs sem {sem:.3}±{h_sem:.3}")
            })?;
            ensure(no_eq - h_no > eff + h_eff, || {
                format!("20 dB: no-eq {no_eq:.3}±{h_no:.3} vs eff {eff:.3}±{h_eff:.3}")
            })?;
            ensure(eff <= 1.25 * tgt, || {
                format!("20 dB: eff {eff:.3} > 1.25 × target {tgt:.3}")
            })?;
            ensure(eff < sem, || format!("20 dB: eff {eff:.3} not below sem {sem:.3}"))?;
            summary.push(format!("target {tgt:.3}"));
        }
        summary.push(format!("{db} dB no-eq/sem/eff {no_eq:.2}/{sem:.2}/{eff:.2}"));
    }
    Ok(summary.join(", "))
}

fn cli(args: &[&str], dir: &Path) -> Result<(), String> {
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_semeq"))
        .args(args)
        .current_dir(dir)
        .output()
        .map_err(e2s)?;
    ensure(out.status.success(), || {
        format!(
            "semeq {} failed: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr).trim()
        )
    })
}

fn pipeline(dir: &Path) -> Result<(), String> {
    cli(&["train", "--seed", "1", "--out", "s.json"], dir)?;
    cli(&["train", "--seed", "2", "--out", "t.json"], dir)?;
    cli(
        &[
            "codebook", "--source", "s.json", "--target", "t.json", "--seed", "7", "--out", "cb.json",
        ],
        dir,
    )?;
    cli(
        &[
            "sweep",
            "--source",
            "s.json",
            "--target",
            "t.json",
            "--codebook",
            "cb.json",
            "--seed",
            "1",
            "--snr-list",
            "0,10,20",
            "--episodes",
            "1000",
            "--seeds",
            "3",
            "--out",
            "results.csv",
        ],
        dir,
    )?;
    Ok(())
}

const PIPELINE_FILES: [&str; 8] = [
    "s.json",
    "t.json",
    "cb.json",
    "cb.tensor.json",
    "cb.tensor.csv",
    "cb.source_cloud.json",
    "cb.target_cloud.json",
    "results.csv",
];

fn reproducibility(langs: &[Language]) -> Check {
    let a = tempfile::tempdir().map_err(e2s)?;
    let b = tempfile::tempdir().map_err(e2s)?;
    pipeline(a.path())?;
    pipeline(b.path())?;
    for f in PIPELINE_FILES {
        let x = std::fs::read(a.path().join(f)).map_err(e2s)?;
        let y = std::fs::read(b.path().join(f)).map_err(e2s)?;
        ensure(x == y, || format!("{f} differs between runs"))?;
    }
    // The library path produces the same language bytes as the CLI.
    let lib = a.path().join("lib_s.json");
    save_language(&langs[0], &lib).map_err(e2s)?;
    ensure(
        std::fs::read(&lib).map_err(e2s)? == std::fs::read(a.path().join("s.json")).map_err(e2s)?,
        || "library and CLI training disagree".into(),
    )?;
    Ok(format!("{} files byte-identical", PIPELINE_FILES.len()))
}

fn degenerate_inputs() -> Check {
    let lang = quadrant_language(21);
    let part = Partition::new(&lang);
    // Every point in atom 0 except a single atom-1 point; atoms 2 and 3 empty.
    let mut pts: Vec<Symbol> = (0..50)
        .map(|k| Symbol::new(1.0 + 0.01 * k as f64, 0.1 * ((k % 7) as f64 - 3.0) / 7.0))
        .collect();
    pts.push(Symbol::new(0.0, 1.0));
    let cloud = SampleCloud::from_symbols(&part, &pts).map_err(e2s)?;
    let id = LinearMap::identity(0);
    ensure(
        matches!(info_transfer(&id, &cloud, 2, &part, 0), Err(Error::EmptyAtom(2))),
        || "info_transfer on an empty atom did not raise EmptyAtom".into(),
    )?;
    let cb = build_codebook(&cloud, &cloud, DEFAULT_REG).map_err(e2s)?;
    ensure(cb.len() == 2 && cb.pair(0, 0).is_some(), || {
        format!("expected identity + (0,0), got {} maps", cb.len())
    })?;
    let skipped: Vec<(Side, usize, usize)> = cb.skipped().iter().map(|s| (s.side, s.atom, s.samples)).collect();
    for want in [(Side::Source, 1, 1), (Side::Source, 2, 0), (Side::Target, 3, 0)] {
        ensure(skipped.contains(&want), || {
            format!("missing skip diagnostic {want:?} in {skipped:?}")
        })?;
    }
    let t = transfer_tensor(&cb, &cloud, &part).map_err(e2s)?;
    ensure(matches!(t.zeta(3, 0, 0), Err(Error::EmptyAtom(3))), || {
        "zeta on empty row did not error".into()
    })?;
    let eq = Equalizer::new(
        lang.clone(),
        cb.clone(),
        t.clone(),
        Correspondence::identity(),
        optimal_q(lang.grid()),
        Policy::Sem,
    )
    .map_err(e2s)?;
    let in_empty = all_observations(lang.grid())
        .into_iter()
        .find(|o| eq.source_atom(o).unwrap() == 2)
        .ok_or("no observation lands in atom 2")?;
    ensure(matches!(eq.select_sem(&in_empty), Err(Error::EmptyAtom(2))), || {
        "select_sem on empty atom did not error".into()
    })?;
    let empty = SampleCloud::from_symbols(&part, &[]).map_err(e2s)?;
    ensure(
        matches!(transfer_tensor(&cb, &empty, &part), Err(Error::AllAtomsEmpty)),
        || "all-empty cloud accepted".into(),
    )?;

    // Provenance: artifacts refuse foreign pieces before any episode.
    let other = quadrant_language(22);
    let b = fit_bundle(&lang, &other, 2000, DEFAULT_REG, 0).map_err(e2s)?;
    let bad = [
        Artifacts::new(other.clone(), other.clone(), b.codebook.clone(), b.tensor.clone()),
        Artifacts::new(lang.clone(), lang.clone(), b.codebook.clone(), b.tensor.clone()),
        Artifacts::new(lang.clone(), other.clone(), b.codebook.clone(), t.clone()),
        Artifacts::new(lang.clone(), other.clone(), cb, b.tensor.clone()),
    ];
    for (k, r) in bad.into_iter().enumerate() {
        ensure(matches!(r, Err(Error::Provenance(_))), || {
            format!("mismatched artifact set {k} accepted")
        })?;
    }
    Artifacts::new(lang, other, b.codebook, b.tensor).map_err(e2s)?;
    Ok("empty atoms, skipped pairs and provenance mismatches rejected".into())
}

fn main() {
    let mut failed = 0;
    let mut report = |name: &str, started: Instant, res: Check| {
        let secs = started.elapsed().as_secs_f64();
        let line = match res {
            Ok(detail) => format!("PASS  {name} ({secs:.1}s): {detail}"),
            Err(why) => {
                failed += 1;
                format!("FAIL  {name} ({secs:.1}s): {why}")
            }
        };
        let mut out = std::io::stdout().lock();
        let _ = writeln!(out, "{line}");
        let _ = out.flush();
    };

    let t = Instant::now();
    report("1 exact-math suite", t, exact_math());

    let t = Instant::now();
    let grid = GridConfig::default();
    let trained: Result<Vec<Language>, String> = [1, 2]
        .iter()
        .map(|&s| train_language(&grid, &TrainConfig::default(), s).map_err(e2s))
        .collect();
    match trained {
        Ok(langs) => {
            report("2 training sanity", t, training_sanity(&langs));
            let t = Instant::now();
            report("3 mismatch experiment", t, mismatch(&langs[0], &langs[1]));
            let t = Instant::now();
            report("4 reproducibility", t, reproducibility(&langs));
        }
        Err(e) => {
            for name in ["2 training sanity", "3 mismatch experiment", "4 reproducibility"] {
                report(name, t, Err(format!("training failed: {e}")));
            }
        }
    }

    let t = Instant::now();
    report("5 degenerate inputs", t, degenerate_inputs());

    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
