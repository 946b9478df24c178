//! Partitions of the semantic plane and the information-transfer metric.
//!
//! Atom `i` of a language is the decision region of action `i` under its
//! decoder. The transfer `ζ_{i→j}(T)` is estimated by counting: of the source
//! symbols that fall in source atom `i`, the fraction whose image under `T`
//! falls in target atom `j`.

use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codebook::{Codebook, LinearMap};
use crate::gridworld::{self, GridConfig, Observation};
use crate::language::{argmax, json_path, Language};
use crate::{Error, Result, Symbol, NUM_ACTIONS};

pub const DEFAULT_SAMPLES: usize = 10_000;

/// Uniform distribution over valid observations.
#[derive(Debug, Clone, Copy)]
pub struct ObservationSampler {
    grid: GridConfig,
}

impl ObservationSampler {
    pub fn new(grid: GridConfig) -> Self {
        Self { grid }
    }

    pub fn grid(&self) -> &GridConfig {
        &self.grid
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Observation {
        gridworld::new_episode(&self.grid, rng)
    }

    pub fn enumerate(&self) -> Vec<Observation> {
        gridworld::all_observations(&self.grid)
    }
}

/// Partition induced by a language's decoder.
#[derive(Debug, Clone, Copy)]
pub struct Partition<'a> {
    lang: &'a Language,
}

impl<'a> Partition<'a> {
    pub fn new(lang: &'a Language) -> Self {
        Self { lang }
    }

    pub fn language(&self) -> &'a Language {
        self.lang
    }

    /// Most probable action at `x`, lowest index on ties. Argmax of the
    /// logits, which equals the argmax of the probabilities at any temperature.
    pub fn atom_of(&self, x: &Symbol) -> Result<usize> {
        if !(x.x.is_finite() && x.y.is_finite()) {
            return Err(Error::NonFiniteSymbol(x.x, x.y));
        }
        Ok(argmax(&self.lang.decoder().forward(x).logits))
    }
}

/// One-hot membership of `e(o)` in the atoms of `lang` (deterministic encoder).
pub fn atom_membership_prob(lang: &Language, obs: &Observation) -> Result<[f64; NUM_ACTIONS]> {
    let atom = Partition::new(lang).atom_of(&lang.encode(obs)?)?;
    let mut p = [0.0; NUM_ACTIONS];
    p[atom] = 1.0;
    Ok(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudSampling {
    /// `samples` i.i.d. observations from the sampler.
    Random { samples: usize },
    /// Every observation exactly `repeats` times, in index order.
    Exhaustive { repeats: usize },
}

/// Encoded observations binned by atom of the encoding language.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleCloud {
    language: String,
    atoms: Vec<Vec<Symbol>>,
    total: usize,
    avg_power: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CloudFile {
    language: String,
    total: usize,
    avg_power: f64,
    atoms: Vec<Vec<[f64; 2]>>,
}

impl SampleCloud {
    /// Bins `symbols` by their atom under `partition`.
    pub fn from_symbols(partition: &Partition<'_>, symbols: &[Symbol]) -> Result<Self> {
        let mut atoms = vec![Vec::new(); NUM_ACTIONS];
        let mut power = 0.0;
        for x in symbols {
            atoms[partition.atom_of(x)?].push(*x);
            power += x.norm_squared();
        }
        Ok(Self {
            language: partition.language().fingerprint(),
            atoms,
            total: symbols.len(),
            avg_power: power / symbols.len().max(1) as f64,
        })
    }

    /// Fingerprint of the language whose partition binned the cloud.
    pub fn language(&self) -> &str {
        &self.language
    }

    pub fn atom(&self, i: usize) -> &[Symbol] {
        &self.atoms[i]
    }

    pub fn counts(&self) -> [usize; NUM_ACTIONS] {
        std::array::from_fn(|i| self.atoms[i].len())
    }

    pub fn total(&self) -> usize {
        self.total
    }

    /// Empirical E‖x‖².
    pub fn avg_power(&self) -> f64 {
        self.avg_power
    }

    pub fn to_json(&self) -> String {
        let file = CloudFile {
            language: self.language.clone(),
            total: self.total,
            avg_power: self.avg_power,
            atoms: self
                .atoms
                .iter()
                .map(|a| a.iter().map(|x| [x.x, x.y]).collect())
                .collect(),
        };
        serde_json::to_string(&file).expect("serializable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: CloudFile = serde_json::from_str(text).map_err(|e| Error::schema(json_path(&e), e.to_string()))?;
        if f.atoms.len() != NUM_ACTIONS {
            return Err(Error::schema(
                "atoms",
                format!("expected {NUM_ACTIONS} atoms, got {}", f.atoms.len()),
            ));
        }
        let sum: usize = f.atoms.iter().map(Vec::len).sum();
        if sum != f.total {
            return Err(Error::schema(
                "total",
                format!("atoms hold {sum} samples, total says {}", f.total),
            ));
        }
        Ok(Self {
            language: f.language,
            atoms: f
                .atoms
                .into_iter()
                .map(|a| a.into_iter().map(|[x, y]| Symbol::new(x, y)).collect())
                .collect(),
            total: f.total,
            avg_power: f.avg_power,
        })
    }
}

pub fn build_cloud<R: Rng + ?Sized>(
    lang: &Language,
    sampler: &ObservationSampler,
    sampling: CloudSampling,
    rng: &mut R,
) -> Result<SampleCloud> {
    let observations: Vec<Observation> = match sampling {
        CloudSampling::Random { samples } => {
            if samples == 0 {
                return Err(Error::Config("cloud needs at least one sample".into()));
            }
            (0..samples).map(|_| sampler.sample(rng)).collect()
        }
        CloudSampling::Exhaustive { repeats } => {
            if repeats == 0 {
                return Err(Error::Config("cloud needs at least one repeat".into()));
            }
            let all = sampler.enumerate();
            (0..repeats).flat_map(|_| all.iter().copied()).collect()
        }
    };
    let symbols = observations
        .iter()
        .map(|o| lang.encode(o))
        .collect::<Result<Vec<_>>>()?;
    SampleCloud::from_symbols(&Partition::new(lang), &symbols)
}

/// Counting estimate of `ζ_{i→j}(T)`.
pub fn info_transfer(map: &LinearMap, source: &SampleCloud, i: usize, target: &Partition<'_>, j: usize) -> Result<f64> {
    let cloud = source.atom(i);
    if cloud.is_empty() {
        return Err(Error::EmptyAtom(i));
    }
    let mut hits = 0usize;
    for x in cloud {
        if target.atom_of(&map.apply(x))? == j {
            hits += 1;
        }
    }
    Ok(hits as f64 / cloud.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorProvenance {
    pub source_language: String,
    pub target_language: String,
    pub codebook: String,
}

/// `ζ_{i→j}(T)` for every source atom, target atom and codebook entry,
/// stored as exact integer counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferTensor {
    maps: usize,
    /// Samples in each source atom; zero marks an invalid row.
    source_counts: Vec<usize>,
    /// `counts[(i * NUM_ACTIONS + j) * maps + t]`.
    counts: Vec<usize>,
    samples: usize,
    provenance: TensorProvenance,
}

impl TransferTensor {
    pub fn num_maps(&self) -> usize {
        self.maps
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn provenance(&self) -> &TensorProvenance {
        &self.provenance
    }

    pub fn source_count(&self, i: usize) -> usize {
        self.source_counts[i]
    }

    pub fn row_valid(&self, i: usize) -> bool {
        self.source_counts[i] > 0
    }

    /// Source samples of atom `i` sent into target atom `j` by map `t`.
    pub fn count(&self, i: usize, j: usize, t: usize) -> usize {
        self.counts[(i * NUM_ACTIONS + j) * self.maps + t]
    }

    pub fn zeta(&self, i: usize, j: usize, t: usize) -> Result<f64> {
        if !self.row_valid(i) {
            return Err(Error::EmptyAtom(i));
        }
        Ok(self.count(i, j, t) as f64 / self.source_counts[i] as f64)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let t: Self = serde_json::from_str(text).map_err(|e| Error::schema(json_path(&e), e.to_string()))?;
        if t.source_counts.len() != NUM_ACTIONS {
            return Err(Error::schema(
                "source_counts",
                format!("expected {NUM_ACTIONS} entries"),
            ));
        }
        if t.counts.len() != NUM_ACTIONS * NUM_ACTIONS * t.maps {
            return Err(Error::schema("counts", "length does not match atoms × atoms × maps"));
        }
        for i in 0..NUM_ACTIONS {
            for m in 0..t.maps {
                let row: usize = (0..NUM_ACTIONS).map(|j| t.count(i, j, m)).sum();
                if row != t.source_counts[i] {
                    return Err(Error::schema(
                        format!("counts[{i}][*][{m}]"),
                        "row does not sum to the source atom count",
                    ));
                }
            }
        }
        Ok(t)
    }

    /// CSV rows `source_atom,target_atom,map_id,zeta,samples` for valid rows.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["source_atom", "target_atom", "map_id", "zeta", "samples"])?;
        for i in (0..NUM_ACTIONS).filter(|&i| self.row_valid(i)) {
            for j in 0..NUM_ACTIONS {
                for t in 0..self.maps {
                    w.write_record([
                        i.to_string(),
                        j.to_string(),
                        t.to_string(),
                        self.zeta(i, j, t)?.to_string(),
                        self.source_counts[i].to_string(),
                    ])?;
                }
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

pub fn transfer_tensor(codebook: &Codebook, source: &SampleCloud, target: &Partition<'_>) -> Result<TransferTensor> {
    if codebook.is_empty() {
        return Err(Error::Config("codebook is empty".into()));
    }
    let source_counts = source.counts().to_vec();
    if source_counts.iter().all(|&c| c == 0) {
        return Err(Error::AllAtomsEmpty);
    }
    let maps = codebook.len();
    // per_map[t][i][j]
    let per_map = codebook
        .maps()
        .par_iter()
        .map(|map| {
            let mut block = [[0usize; NUM_ACTIONS]; NUM_ACTIONS];
            for (i, row) in block.iter_mut().enumerate() {
                for x in source.atom(i) {
                    row[target.atom_of(&map.apply(x))?] += 1;
                }
            }
            Ok(block)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut counts = vec![0; NUM_ACTIONS * NUM_ACTIONS * maps];
    for (t, block) in per_map.iter().enumerate() {
        for i in 0..NUM_ACTIONS {
            for j in 0..NUM_ACTIONS {
                counts[(i * NUM_ACTIONS + j) * maps + t] = block[i][j];
            }
        }
    }
    Ok(TransferTensor {
        maps,
        source_counts,
        counts,
        samples: source.total(),
        provenance: TensorProvenance {
            source_language: source.language().to_string(),
            target_language: target.language().fingerprint(),
            codebook: codebook.fingerprint(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::{build_codebook, CodebookProvenance, DEFAULT_REG};
    use crate::language::{Decoder, Encoder};
    use crate::rng;
    use nalgebra::Matrix2;

    fn quadrant_lang(grid: GridConfig, table: Vec<Symbol>) -> Language {
        Language::from_parts(grid, Encoder::new(table).unwrap(), Decoder::quadrant()).unwrap()
    }

    fn spread_table(n: usize, seed: u64) -> Vec<Symbol> {
        let mut r = rng::stream(seed);
        (0..n)
            .map(|_| Symbol::new(r.random_range(-2.0..2.0), r.random_range(-2.0..2.0)))
            .collect()
    }

    #[test]
    fn atom_of_examples() {
        let grid = GridConfig::default();
        let uniform = Language::from_parts(grid, Encoder::constant(600, Symbol::zeros()), Decoder::zeros(4)).unwrap();
        let p = Partition::new(&uniform);
        for x in [Symbol::new(3.0, 1.0), Symbol::new(-5.0, 2.0)] {
            assert_eq!(p.atom_of(&x).unwrap(), 0);
        }
        let q = quadrant_lang(grid, vec![Symbol::zeros(); 600]);
        let p = Partition::new(&q);
        assert_eq!(p.atom_of(&Symbol::new(3.0, 1.0)).unwrap(), 0);
        assert_eq!(p.atom_of(&Symbol::new(0.2, 1.0)).unwrap(), 1);
        assert_eq!(p.atom_of(&Symbol::new(-3.0, 1.0)).unwrap(), 2);
        assert_eq!(p.atom_of(&Symbol::new(0.5, -1.0)).unwrap(), 3);
        assert!(p.atom_of(&Symbol::new(f64::NAN, 0.0)).is_err());
    }

    #[test]
    fn atom_of_ignores_temperature() {
        let mut r = rng::stream(2);
        let d = Decoder::random(16, &mut r);
        let grid = GridConfig::new(2, 2).unwrap();
        let a = Language::from_parts(grid, Encoder::constant(12, Symbol::zeros()), d.clone()).unwrap();
        let b = Language::from_parts(grid, Encoder::constant(12, Symbol::zeros()), d.with_temperature(3.7)).unwrap();
        for x in spread_table(500, 3) {
            assert_eq!(
                Partition::new(&a).atom_of(&x).unwrap(),
                Partition::new(&b).atom_of(&x).unwrap()
            );
            // Stochastic and greedy modes share one atom definition.
            let probs = a.decode_probs(&x).unwrap();
            assert_eq!(argmax(&probs), Partition::new(&a).atom_of(&x).unwrap());
        }
    }

    #[test]
    fn constant_encoder_cloud() {
        let grid = GridConfig::default();
        let lang = quadrant_lang(grid, vec![Symbol::new(1.0, 0.0); 600]);
        let mut r = rng::stream(0);
        let cloud = build_cloud(
            &lang,
            &ObservationSampler::new(grid),
            CloudSampling::Random { samples: 777 },
            &mut r,
        )
        .unwrap();
        assert_eq!(cloud.counts(), [777, 0, 0, 0]);
        assert!(cloud.atom(0).iter().all(|x| *x == Symbol::new(1.0, 0.0)));
        assert_eq!(cloud.avg_power(), 1.0);
    }

    #[test]
    fn exhaustive_cloud_counts_each_observation() {
        let grid = GridConfig::default();
        // Distinct symbol per observation so occurrences can be counted.
        let table: Vec<Symbol> = (0..600).map(|k| Symbol::new(k as f64, (k % 7) as f64 - 3.0)).collect();
        let lang = quadrant_lang(grid, table.clone());
        let mut r = rng::stream(0);
        let k = 3;
        let cloud = build_cloud(
            &lang,
            &ObservationSampler::new(grid),
            CloudSampling::Exhaustive { repeats: k },
            &mut r,
        )
        .unwrap();
        assert_eq!(cloud.total(), 600 * k);
        let mut seen = vec![0usize; 600];
        for i in 0..NUM_ACTIONS {
            for x in cloud.atom(i) {
                seen[x.x as usize] += 1;
                assert_eq!(Partition::new(&lang).atom_of(x).unwrap(), i);
            }
        }
        assert!(seen.iter().all(|&c| c == k));
    }

    #[test]
    fn cloud_sizes_sum_to_samples() {
        let grid = GridConfig::default();
        let lang = quadrant_lang(grid, spread_table(600, 9));
        let mut r = rng::stream(1);
        let cloud = build_cloud(
            &lang,
            &ObservationSampler::new(grid),
            CloudSampling::Random { samples: 5000 },
            &mut r,
        )
        .unwrap();
        assert_eq!(cloud.counts().iter().sum::<usize>(), 5000);
    }

    #[test]
    fn identity_transfer_on_shared_partition() {
        let grid = GridConfig::default();
        let lang = quadrant_lang(grid, spread_table(600, 4));
        let mut r = rng::stream(5);
        let cloud = build_cloud(
            &lang,
            &ObservationSampler::new(grid),
            CloudSampling::Exhaustive { repeats: 1 },
            &mut r,
        )
        .unwrap();
        let p = Partition::new(&lang);
        let id = LinearMap::identity(0);
        for i in 0..4 {
            for j in 0..4 {
                let z = info_transfer(&id, &cloud, i, &p, j).unwrap();
                assert_eq!(z, if i == j { 1.0 } else { 0.0 });
            }
        }
        let cb = Codebook::new(
            vec![LinearMap::identity(0)],
            vec![],
            CodebookProvenance {
                source_language: lang.fingerprint(),
                target_language: lang.fingerprint(),
                reg: 0.0,
            },
        )
        .unwrap();
        let t = transfer_tensor(&cb, &cloud, &p).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(t.zeta(i, j, 0).unwrap(), if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn rotation_moves_atom_zero_to_atom_one() {
        let grid = GridConfig::default();
        // Every symbol deep inside atom 0 (x₁ > |x₂|).
        let table: Vec<Symbol> = spread_table(600, 6)
            .iter()
            .map(|x| Symbol::new(3.0 + x.x.abs(), 0.5 * x.y))
            .collect();
        let lang = quadrant_lang(grid, table);
        let mut r = rng::stream(0);
        let cloud = build_cloud(
            &lang,
            &ObservationSampler::new(grid),
            CloudSampling::Exhaustive { repeats: 1 },
            &mut r,
        )
        .unwrap();
        assert_eq!(cloud.counts(), [600, 0, 0, 0]);
        // 90° rotation: (x, y) → (−y, x) takes the +x₁ cone to the +x₂ cone.
        let rot = LinearMap::new(1, Matrix2::new(0.0, -1.0, 1.0, 0.0), Symbol::zeros());
        let p = Partition::new(&lang);
        assert_eq!(info_transfer(&rot, &cloud, 0, &p, 1).unwrap(), 1.0);
        assert!(matches!(
            info_transfer(&rot, &cloud, 2, &p, 1),
            Err(Error::EmptyAtom(2))
        ));
    }

    #[test]
    fn tensor_rows_and_errors() {
        let grid = GridConfig::default();
        let lang = quadrant_lang(grid, spread_table(600, 12));
        let mut r = rng::stream(3);
        let sampler = ObservationSampler::new(grid);
        let cloud = build_cloud(&lang, &sampler, CloudSampling::Random { samples: 2000 }, &mut r).unwrap();
        let cb = build_codebook(&cloud, &cloud, DEFAULT_REG).unwrap();
        let p = Partition::new(&lang);
        let t = transfer_tensor(&cb, &cloud, &p).unwrap();
        assert_eq!(t.num_maps(), 17);
        for i in 0..4 {
            for m in 0..17 {
                let total: usize = (0..4).map(|j| t.count(i, j, m)).sum();
                assert_eq!(total, t.source_count(i));
                for j in 0..4 {
                    let z = t.zeta(i, j, m).unwrap();
                    assert!((0.0..=1.0).contains(&z));
                }
            }
        }
        // Same seed, same samples: identical tensor.
        let mut r2 = rng::stream(3);
        let cloud2 = build_cloud(&lang, &sampler, CloudSampling::Random { samples: 2000 }, &mut r2).unwrap();
        assert_eq!(transfer_tensor(&cb, &cloud2, &p).unwrap(), t);

        let back = TransferTensor::from_json(&t.to_json()).unwrap();
        assert_eq!(back, t);

        let empty = SampleCloud::from_symbols(&p, &[]).unwrap();
        assert!(matches!(transfer_tensor(&cb, &empty, &p), Err(Error::AllAtomsEmpty)));
    }

    #[test]
    fn membership_is_one_hot() {
        let grid = GridConfig::default();
        let lang = quadrant_lang(grid, spread_table(600, 21));
        let p = Partition::new(&lang);
        for o in gridworld::all_observations(&grid) {
            let m = atom_membership_prob(&lang, &o).unwrap();
            assert_eq!(m.iter().sum::<f64>(), 1.0);
            assert_eq!(m.iter().filter(|&&v| v == 1.0).count(), 1);
            let brute = p.atom_of(&lang.encode(&o).unwrap()).unwrap();
            assert_eq!(m[brute], 1.0);
        }
    }
}
