//! Codebook-operation policies.
//!
//! For an observation `o` with source atom `i* = atom_of(e_s(o))`:
//!
//! - semantic policy: `argmax_T Σ_{j∈κ(i*)} ζ_{i*→j}(T)`
//! - effectiveness policy: `argmax_T Σ_j ζ_{i*→j}(T) · q(a_j, o)`
//!
//! Both break ties towards the lowest map id. The selected map is applied to
//! the symbol before it enters the channel.

use serde::{Deserialize, Serialize};

use crate::codebook::Codebook;
use crate::gridworld::{Observation, QTable};
use crate::language::Language;
use crate::semantics::{Partition, TransferTensor};
use crate::{Error, Result, Symbol, NUM_ACTIONS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    None,
    Sem,
    Eff,
}

impl std::str::FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Policy::None),
            "sem" => Ok(Policy::Sem),
            "eff" => Ok(Policy::Eff),
            other => Err(Error::Config(format!("unknown policy `{other}` (none|sem|eff)"))),
        }
    }
}

impl std::fmt::Display for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Policy::None => "none",
            Policy::Sem => "sem",
            Policy::Eff => "eff",
        })
    }
}

/// Source atom → set of corresponding target atoms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Correspondence {
    targets: Vec<Vec<usize>>,
}

impl Default for Correspondence {
    fn default() -> Self {
        Self::identity()
    }
}

impl Correspondence {
    pub fn new(targets: Vec<Vec<usize>>) -> Result<Self> {
        if targets.len() != NUM_ACTIONS {
            return Err(Error::Config(format!(
                "correspondence needs {NUM_ACTIONS} source atoms, got {}",
                targets.len()
            )));
        }
        if targets.iter().flatten().any(|&j| j >= NUM_ACTIONS) {
            return Err(Error::Config(
                "correspondence points at a nonexistent target atom".into(),
            ));
        }
        Ok(Self { targets })
    }

    /// `κ(i) = {i}`: atoms matched by action.
    pub fn identity() -> Self {
        Self {
            targets: (0..NUM_ACTIONS).map(|i| vec![i]).collect(),
        }
    }

    /// `κ(i)` = every target atom.
    pub fn full() -> Self {
        Self {
            targets: vec![(0..NUM_ACTIONS).collect(); NUM_ACTIONS],
        }
    }

    pub fn targets(&self, i: usize) -> &[usize] {
        &self.targets[i]
    }
}

/// Lowest index whose score is within a relative `1e-12` of the maximum.
///
/// The slack keeps selections stable when `q` is shifted or scaled, which
/// perturbs otherwise tied sums by a few ulps.
fn argmax_tol(scores: &[f64]) -> usize {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tol = 1e-12 * max.abs().max(1.0);
    scores.iter().position(|&s| s >= max - tol).unwrap_or(0)
}

/// Immutable selection state for one source language.
#[derive(Debug, Clone)]
pub struct Equalizer {
    tensor: TransferTensor,
    codebook: Codebook,
    kappa: Correspondence,
    qtable: QTable,
    source: Language,
    policy: Policy,
    /// The semantic choice depends on the observation only through `i*`.
    sem_cache: [Option<usize>; NUM_ACTIONS],
}

impl Equalizer {
    pub fn new(
        source: Language,
        codebook: Codebook,
        tensor: TransferTensor,
        kappa: Correspondence,
        qtable: QTable,
        policy: Policy,
    ) -> Result<Self> {
        let fp = source.fingerprint();
        let cb_fp = codebook.fingerprint();
        let prov = tensor.provenance();
        if prov.source_language != fp {
            return Err(Error::Provenance(
                "transfer tensor was built from a different source language".into(),
            ));
        }
        if prov.codebook != cb_fp {
            return Err(Error::Provenance(
                "transfer tensor was built from a different codebook".into(),
            ));
        }
        if codebook.provenance().source_language != fp {
            return Err(Error::Provenance(
                "codebook was fitted for a different source language".into(),
            ));
        }
        if codebook.provenance().target_language != prov.target_language {
            return Err(Error::Provenance(
                "codebook and transfer tensor disagree on the target language".into(),
            ));
        }
        if tensor.num_maps() != codebook.len() {
            return Err(Error::Provenance("tensor and codebook sizes differ".into()));
        }
        if qtable.grid() != source.grid() {
            return Err(Error::Provenance("q table grid differs from the language grid".into()));
        }
        let mut eq = Self {
            tensor,
            codebook,
            kappa,
            qtable,
            source,
            policy,
            sem_cache: [None; NUM_ACTIONS],
        };
        for i in 0..NUM_ACTIONS {
            if eq.tensor.row_valid(i) {
                let scores: Vec<f64> = (0..eq.codebook.len())
                    .map(|t| eq.sem_score(i, t))
                    .collect::<Result<_>>()?;
                eq.sem_cache[i] = Some(argmax_tol(&scores));
            }
        }
        Ok(eq)
    }

    pub fn policy(&self) -> Policy {
        self.policy
    }

    pub fn codebook(&self) -> &Codebook {
        &self.codebook
    }

    pub fn tensor(&self) -> &TransferTensor {
        &self.tensor
    }

    pub fn source(&self) -> &Language {
        &self.source
    }

    pub fn source_atom(&self, obs: &Observation) -> Result<usize> {
        Partition::new(&self.source).atom_of(&self.source.encode(obs)?)
    }

    /// `Σ_{j∈κ(i)} ζ_{i→j}(T)`.
    pub fn sem_score(&self, i: usize, map: usize) -> Result<f64> {
        self.kappa.targets(i).iter().map(|&j| self.tensor.zeta(i, j, map)).sum()
    }

    /// `Σ_j ζ_{i→j}(T) · q(a_j, o)`.
    pub fn eff_score(&self, i: usize, obs: &Observation, map: usize) -> Result<f64> {
        let q = self.qtable.row(obs)?;
        (0..NUM_ACTIONS).map(|j| Ok(self.tensor.zeta(i, j, map)? * q[j])).sum()
    }

    pub fn select_sem(&self, obs: &Observation) -> Result<usize> {
        let i = self.source_atom(obs)?;
        self.sem_cache[i].ok_or(Error::EmptyAtom(i))
    }

    pub fn select_eff(&self, obs: &Observation) -> Result<usize> {
        let i = self.source_atom(obs)?;
        if !self.tensor.row_valid(i) {
            return Err(Error::EmptyAtom(i));
        }
        let scores: Vec<f64> = (0..self.codebook.len())
            .map(|t| self.eff_score(i, obs, t))
            .collect::<Result<_>>()?;
        Ok(argmax_tol(&scores))
    }

    /// Map chosen by the active policy, `None` when equalization is off.
    pub fn select(&self, obs: &Observation) -> Result<Option<usize>> {
        match self.policy {
            Policy::None => Ok(None),
            Policy::Sem => self.select_sem(obs).map(Some),
            Policy::Eff => self.select_eff(obs).map(Some),
        }
    }

    pub fn equalize(&self, obs: &Observation, symbol: &Symbol) -> Result<Symbol> {
        Ok(match self.select(obs)? {
            None => *symbol,
            Some(id) => self.codebook.maps()[id].apply(symbol),
        })
    }

    /// Same state with a different policy.
    pub fn with_policy(&self, policy: Policy) -> Self {
        Self { policy, ..self.clone() }
    }

    /// Same state with a different q table (same grid).
    pub fn with_qtable(&self, qtable: QTable) -> Result<Self> {
        if qtable.grid() != self.source.grid() {
            return Err(Error::Provenance("q table grid differs from the language grid".into()));
        }
        Ok(Self { qtable, ..self.clone() })
    }

    pub fn with_correspondence(&self, kappa: Correspondence) -> Result<Self> {
        Self::new(
            self.source.clone(),
            self.codebook.clone(),
            self.tensor.clone(),
            kappa,
            self.qtable.clone(),
            self.policy,
        )
    }
}
