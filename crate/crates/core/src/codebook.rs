//! Codebook of affine maps of the semantic plane, one per (source atom,
//! target atom) pair, fitted with the closed-form optimal-transport map
//! between the Gaussian approximations of the two atom clouds.
//!
//! For `N(m_s, Σ_s)` and `N(m_t, Σ_t)` the quadratic-cost Monge map is
//! `T(x) = A x + b` with
//!
//! ```text
//! A = Σ_s^{-1/2} (Σ_s^{1/2} Σ_t Σ_s^{1/2})^{1/2} Σ_s^{-1/2},   b = m_t − A m_s.
//! ```

use std::path::Path;

use nalgebra::{Matrix2, SymmetricEigen};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::language::json_path;
use crate::semantics::SampleCloud;
use crate::{Error, Result, Symbol, NUM_ACTIONS};

pub const CODEBOOK_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_REG: f64 = 1e-6;

/// Relative tolerance for symmetry and eigenvalue sign checks.
const SPD_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub source_samples: usize,
    pub target_samples: usize,
    pub reg: f64,
}

/// `T(x) = A x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMap {
    pub id: usize,
    pub matrix: Matrix2<f64>,
    pub offset: Symbol,
    /// `None` for the identity entry.
    pub source_atom: Option<usize>,
    pub target_atom: Option<usize>,
    pub diagnostics: Option<FitDiagnostics>,
}

impl LinearMap {
    pub fn identity(id: usize) -> Self {
        Self::new(id, Matrix2::identity(), Symbol::zeros())
    }

    pub fn new(id: usize, matrix: Matrix2<f64>, offset: Symbol) -> Self {
        Self {
            id,
            matrix,
            offset,
            source_atom: None,
            target_atom: None,
            diagnostics: None,
        }
    }

    pub fn apply(&self, x: &Symbol) -> Symbol {
        self.matrix * x + self.offset
    }

    pub fn is_identity(&self) -> bool {
        self.matrix == Matrix2::identity() && self.offset == Symbol::zeros()
    }
}

/// Empirical mean and (biased, `1/n`) covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: Symbol,
    pub cov: Matrix2<f64>,
}

impl Moments {
    pub fn from_samples(samples: &[Symbol]) -> Self {
        let n = samples.len() as f64;
        let mean = samples.iter().fold(Symbol::zeros(), |acc, x| acc + x) / n;
        let cov = samples.iter().fold(Matrix2::zeros(), |acc, x| {
            let d = x - mean;
            acc + d * d.transpose()
        }) / n;
        Self { mean, cov }
    }

    fn is_finite(&self) -> bool {
        self.mean.iter().chain(self.cov.iter()).all(|v| v.is_finite())
    }
}

fn spd_eigen(m: &Matrix2<f64>) -> Result<SymmetricEigen<f64, nalgebra::U2>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("matrix has non-finite entries".into()));
    }
    let scale = m.abs().max().max(f64::MIN_POSITIVE);
    if (m[(0, 1)] - m[(1, 0)]).abs() > SPD_TOL * scale {
        return Err(Error::Numerical(format!("matrix is not symmetric: {m}")));
    }
    let eig = SymmetricEigen::new(*m);
    let min = eig.eigenvalues.min();
    if min <= 0.0 {
        return Err(Error::Numerical(format!(
            "matrix is not positive definite (smallest eigenvalue {min:e})"
        )));
    }
    Ok(eig)
}

fn spectral(eig: &SymmetricEigen<f64, nalgebra::U2>, f: impl Fn(f64) -> f64) -> Matrix2<f64> {
    let v = &eig.eigenvectors;
    let d = Matrix2::from_diagonal(&eig.eigenvalues.map(f));
    let s = v * d * v.transpose();
    (s + s.transpose()) * 0.5
}

/// Principal square root of a symmetric positive-definite matrix.
pub fn matrix_sqrt_spd(m: &Matrix2<f64>) -> Result<Matrix2<f64>> {
    Ok(spectral(&spd_eigen(m)?, f64::sqrt))
}

fn matrix_inv_sqrt_spd(m: &Matrix2<f64>) -> Result<Matrix2<f64>> {
    Ok(spectral(&spd_eigen(m)?, |l| l.sqrt().recip()))
}

/// Gaussian Monge map between two sets of moments, with `reg·I` added to
/// both covariances.
pub fn monge_map(source: &Moments, target: &Moments, reg: f64) -> Result<(Matrix2<f64>, Symbol)> {
    if !(reg >= 0.0 && reg.is_finite()) {
        return Err(Error::Config(format!("covariance regularizer must be >= 0, got {reg}")));
    }
    if !source.is_finite() || !target.is_finite() {
        return Err(Error::Numerical("non-finite moments".into()));
    }
    let ridge = Matrix2::identity() * reg;
    let cov_s = source.cov + ridge;
    let cov_t = target.cov + ridge;
    let root_s = matrix_sqrt_spd(&cov_s)?;
    let inv_root_s = matrix_inv_sqrt_spd(&cov_s)?;
    let middle = root_s * cov_t * root_s;
    let middle = matrix_sqrt_spd(&((middle + middle.transpose()) * 0.5))?;
    let a = inv_root_s * middle * inv_root_s;
    let a = (a + a.transpose()) * 0.5;
    let b = target.mean - a * source.mean;
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numerical("fitted map is not finite".into()));
    }
    Ok((a, b))
}

pub fn fit_linear_ot(source: &[Symbol], target: &[Symbol], reg: f64) -> Result<LinearMap> {
    if source.len() < 2 || target.len() < 2 {
        return Err(Error::InsufficientSamples {
            source_count: source.len(),
            target_count: target.len(),
        });
    }
    let (a, b) = monge_map(&Moments::from_samples(source), &Moments::from_samples(target), reg)?;
    let mut map = LinearMap::new(0, a, b);
    map.diagnostics = Some(FitDiagnostics {
        source_samples: source.len(),
        target_samples: target.len(),
        reg,
    });
    Ok(map)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Source,
    Target,
}

/// An atom with too few samples to fit; every pair touching it is skipped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedAtom {
    pub side: Side,
    pub atom: usize,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodebookProvenance {
    pub source_language: String,
    pub target_language: String,
    pub reg: f64,
}

/// Map 0 is always the identity; fitted pairs follow in row-major
/// `(source atom, target atom)` order.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    maps: Vec<LinearMap>,
    skipped: Vec<SkippedAtom>,
    provenance: CodebookProvenance,
}

impl Codebook {
    pub fn new(maps: Vec<LinearMap>, skipped: Vec<SkippedAtom>, provenance: CodebookProvenance) -> Result<Self> {
        if maps.is_empty() {
            return Err(Error::Config("codebook is empty".into()));
        }
        for (k, m) in maps.iter().enumerate() {
            if m.id != k {
                return Err(Error::schema(
                    format!("maps[{k}].id"),
                    format!("expected id {k}, got {}", m.id),
                ));
            }
            if m.matrix.iter().chain(m.offset.iter()).any(|v| !v.is_finite()) {
                return Err(Error::schema(format!("maps[{k}]"), "non-finite entry"));
            }
        }
        let mut pairs: Vec<_> = maps.iter().filter_map(|m| m.source_atom.zip(m.target_atom)).collect();
        let n = pairs.len();
        pairs.sort_unstable();
        pairs.dedup();
        if pairs.len() != n {
            return Err(Error::Config("codebook holds two maps for the same atom pair".into()));
        }
        Ok(Self {
            maps,
            skipped,
            provenance,
        })
    }

    pub fn maps(&self) -> &[LinearMap] {
        &self.maps
    }

    pub fn get(&self, id: usize) -> Option<&LinearMap> {
        self.maps.get(id)
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    pub fn skipped(&self) -> &[SkippedAtom] {
        &self.skipped
    }

    pub fn provenance(&self) -> &CodebookProvenance {
        &self.provenance
    }

    pub fn identity_included(&self) -> bool {
        self.maps.first().is_some_and(LinearMap::is_identity)
    }

    /// Map fitted for a given atom pair.
    pub fn pair(&self, source_atom: usize, target_atom: usize) -> Option<&LinearMap> {
        self.maps
            .iter()
            .find(|m| m.source_atom == Some(source_atom) && m.target_atom == Some(target_atom))
    }

    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&CodebookFile::from(self)).expect("serializable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CodebookFile = serde_json::from_str(text).map_err(|e| Error::schema(json_path(&e), e.to_string()))?;
        file.try_into()
    }
}

pub fn build_codebook(source: &SampleCloud, target: &SampleCloud, reg: f64) -> Result<Codebook> {
    let mut skipped = Vec::new();
    for (side, cloud) in [(Side::Source, source), (Side::Target, target)] {
        for atom in 0..NUM_ACTIONS {
            let samples = cloud.atom(atom).len();
            if samples < 2 {
                skipped.push(SkippedAtom { side, atom, samples });
            }
        }
    }

    let mut maps = vec![LinearMap::identity(0)];
    for i in 0..NUM_ACTIONS {
        for j in 0..NUM_ACTIONS {
            match fit_linear_ot(source.atom(i), target.atom(j), reg) {
                Ok(mut map) => {
                    map.id = maps.len();
                    map.source_atom = Some(i);
                    map.target_atom = Some(j);
                    maps.push(map);
                }
                Err(Error::InsufficientSamples { .. }) => {}
                Err(e) => return Err(e),
            }
        }
    }
    if maps.len() == 1 {
        return Err(Error::NoValidPairs);
    }
    Codebook::new(
        maps,
        skipped,
        CodebookProvenance {
            source_language: source.language().to_string(),
            target_language: target.language().to_string(),
            reg,
        },
    )
}

pub fn save_codebook(cb: &Codebook, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, cb.to_json()).map_err(|e| Error::io(path, e))
}

pub fn load_codebook(path: impl AsRef<Path>) -> Result<Codebook> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Codebook::from_json(&text)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MapEntry {
    id: usize,
    i: Option<usize>,
    j: Option<usize>,
    #[serde(rename = "A")]
    a: [f64; 4],
    b: [f64; 2],
    fit: Option<FitDiagnostics>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Diagnostics {
    maps: usize,
    identity_included: bool,
    skipped: Vec<SkippedAtom>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CodebookFile {
    schema_version: u32,
    provenance: CodebookProvenance,
    maps: Vec<MapEntry>,
    diagnostics: Diagnostics,
}

impl From<&Codebook> for CodebookFile {
    fn from(cb: &Codebook) -> Self {
        Self {
            schema_version: CODEBOOK_SCHEMA_VERSION,
            provenance: cb.provenance.clone(),
            maps: cb
                .maps
                .iter()
                .map(|m| MapEntry {
                    id: m.id,
                    i: m.source_atom,
                    j: m.target_atom,
                    a: [m.matrix[(0, 0)], m.matrix[(0, 1)], m.matrix[(1, 0)], m.matrix[(1, 1)]],
                    b: [m.offset.x, m.offset.y],
                    fit: m.diagnostics,
                })
                .collect(),
            diagnostics: Diagnostics {
                maps: cb.maps.len(),
                identity_included: cb.identity_included(),
                skipped: cb.skipped.clone(),
            },
        }
    }
}

impl TryFrom<CodebookFile> for Codebook {
    type Error = Error;

    fn try_from(f: CodebookFile) -> Result<Self> {
        if f.schema_version != CODEBOOK_SCHEMA_VERSION {
            return Err(Error::schema(
                "schema_version",
                format!("unsupported version {}", f.schema_version),
            ));
        }
        if f.diagnostics.maps != f.maps.len() {
            return Err(Error::schema(
                "diagnostics.maps",
                format!("declares {} maps, file holds {}", f.diagnostics.maps, f.maps.len()),
            ));
        }
        let maps = f
            .maps
            .into_iter()
            .enumerate()
            .map(|(k, e)| {
                for (name, atom) in [("i", e.i), ("j", e.j)] {
                    if atom.is_some_and(|a| a >= NUM_ACTIONS) {
                        return Err(Error::schema(format!("maps[{k}].{name}"), "atom index out of range"));
                    }
                }
                if e.i.is_some() != e.j.is_some() {
                    return Err(Error::schema(
                        format!("maps[{k}]"),
                        "i and j must both be set or both null",
                    ));
                }
                Ok(LinearMap {
                    id: e.id,
                    matrix: Matrix2::new(e.a[0], e.a[1], e.a[2], e.a[3]),
                    offset: Symbol::new(e.b[0], e.b[1]),
                    source_atom: e.i,
                    target_atom: e.j,
                    diagnostics: e.fit,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Codebook::new(maps, f.diagnostics.skipped, f.provenance)
    }
}
