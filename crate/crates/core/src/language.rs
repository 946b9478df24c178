//! Agent languages: a deterministic encoder into the semantic plane and a
//! stochastic MLP decoder over the four actions, trained end to end with
//! REINFORCE through a noisy channel.

use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{self, ChannelConfig, Snr};
use crate::gridworld::{self, Action, GridConfig, Observation};
use crate::{rng, Error, Result, Symbol, NUM_ACTIONS};

pub const LANGUAGE_SCHEMA_VERSION: u32 = 1;
const OBS_INDEXING: &str = "scout row-major, then treasure row-major skipping the scout cell";

/// Observation-indexed table of semantic symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    table: Vec<Symbol>,
}

impl Encoder {
    pub fn new(table: Vec<Symbol>) -> Result<Self> {
        if let Some(bad) = table.iter().find(|x| !(x.x.is_finite() && x.y.is_finite())) {
            return Err(Error::NonFiniteSymbol(bad.x, bad.y));
        }
        Ok(Self { table })
    }

    pub fn constant(n: usize, symbol: Symbol) -> Self {
        Self { table: vec![symbol; n] }
    }

    pub fn table(&self) -> &[Symbol] {
        &self.table
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    /// E‖x‖² under the uniform observation distribution.
    pub fn average_power(&self) -> f64 {
        self.table.iter().map(|x| x.norm_squared()).sum::<f64>() / self.table.len() as f64
    }

    fn normalize_power(&mut self) {
        let p = self.average_power();
        if p > 0.0 {
            let scale = p.sqrt().recip();
            self.table.iter_mut().for_each(|x| *x *= scale);
        }
    }
}

/// Two-layer perceptron `2 → H → 4` with tanh hidden units.
///
/// Parameters live in one flat vector laid out as `w1 (H×2) | b1 (H) |
/// w2 (4×H) | b2 (4)`, all row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoder {
    hidden: usize,
    params: Vec<f64>,
    temperature: f64,
}

/// Intermediate values of one decoder evaluation.
#[derive(Debug, Clone)]
pub struct Forward {
    pub input: Symbol,
    pub hidden: Vec<f64>,
    pub logits: [f64; NUM_ACTIONS],
    pub log_probs: [f64; NUM_ACTIONS],
    pub probs: [f64; NUM_ACTIONS],
}

impl Decoder {
    pub fn num_params(hidden: usize) -> usize {
        hidden * 2 + hidden + NUM_ACTIONS * hidden + NUM_ACTIONS
    }

    pub fn zeros(hidden: usize) -> Self {
        Self {
            hidden,
            params: vec![0.0; Self::num_params(hidden)],
            temperature: 1.0,
        }
    }

    pub fn random<R: Rng + ?Sized>(hidden: usize, rng: &mut R) -> Self {
        let mut d = Self::zeros(hidden);
        let mut normal = |scale: f64| scale * rng.sample::<f64, _>(StandardNormal);
        for h in 0..hidden {
            for c in 0..2 {
                d.params[h * 2 + c] = normal(1.0);
            }
        }
        for h in 0..hidden {
            d.params[2 * hidden + h] = normal(0.5);
        }
        let w2 = 3 * hidden;
        let scale = 0.1 / (hidden as f64).sqrt();
        for p in &mut d.params[w2..w2 + NUM_ACTIONS * hidden] {
            *p = normal(scale);
        }
        d
    }

    pub fn from_weights(w1: &[[f64; 2]], b1: &[f64], w2: &[Vec<f64>], b2: &[f64], temperature: f64) -> Result<Self> {
        let hidden = w1.len();
        let shape = |path: &str, msg: String| Error::schema(path, msg);
        if hidden == 0 {
            return Err(shape("decoder.w1", "hidden layer is empty".into()));
        }
        if b1.len() != hidden {
            return Err(shape(
                "decoder.b1",
                format!("expected {hidden} entries, got {}", b1.len()),
            ));
        }
        if w2.len() != NUM_ACTIONS {
            return Err(shape(
                "decoder.w2",
                format!("expected {NUM_ACTIONS} action rows, got {}", w2.len()),
            ));
        }
        if let Some((k, row)) = w2.iter().enumerate().find(|(_, r)| r.len() != hidden) {
            return Err(shape(
                &format!("decoder.w2[{k}]"),
                format!("expected {hidden} entries, got {}", row.len()),
            ));
        }
        if b2.len() != NUM_ACTIONS {
            return Err(shape(
                "decoder.b2",
                format!("expected {NUM_ACTIONS} entries, got {}", b2.len()),
            ));
        }
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(shape("decoder.temperature", "must be positive and finite".into()));
        }
        let mut params: Vec<f64> = Vec::with_capacity(Self::num_params(hidden));
        params.extend(w1.iter().flatten());
        params.extend(b1);
        params.extend(w2.iter().flatten());
        params.extend(b2);
        if params.iter().any(|p| !p.is_finite()) {
            return Err(shape("decoder", "non-finite weight".into()));
        }
        Ok(Self {
            hidden,
            params,
            temperature,
        })
    }

    /// Reference decoder with logits `tanh` of `(x₁, x₂, −x₁, −x₂)`.
    ///
    /// Its decision regions are the four 45°-rotated quadrants
    /// `{x₁ ≥ |x₂|}`, `{x₂ ≥ |x₁|}`, `{−x₁ ≥ |x₂|}`, `{−x₂ ≥ |x₁|}`.
    pub fn quadrant() -> Self {
        Self::from_weights(
            &[[1.0, 0.0], [0.0, 1.0]],
            &[0.0, 0.0],
            &[vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.0], vec![0.0, -1.0]],
            &[0.0; NUM_ACTIONS],
            1.0,
        )
        .expect("well-formed")
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        assert!(temperature > 0.0, "temperature must be positive");
        self.temperature = temperature;
        self
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn w1(&self, h: usize, c: usize) -> f64 {
        self.params[h * 2 + c]
    }

    fn b1(&self, h: usize) -> f64 {
        self.params[2 * self.hidden + h]
    }

    fn w2(&self, k: usize, h: usize) -> f64 {
        self.params[3 * self.hidden + k * self.hidden + h]
    }

    fn b2(&self, k: usize) -> f64 {
        self.params[3 * self.hidden + NUM_ACTIONS * self.hidden + k]
    }

    pub fn forward(&self, x: &Symbol) -> Forward {
        let hidden: Vec<f64> = (0..self.hidden)
            .map(|h| (self.w1(h, 0) * x.x + self.w1(h, 1) * x.y + self.b1(h)).tanh())
            .collect();
        let logits: [f64; NUM_ACTIONS] = std::array::from_fn(|k| {
            self.b2(k) + hidden.iter().enumerate().map(|(h, v)| self.w2(k, h) * v).sum::<f64>()
        });
        let scaled = logits.map(|z| z / self.temperature);
        let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + scaled.iter().map(|u| (u - max).exp()).sum::<f64>().ln();
        let log_probs = scaled.map(|u| u - lse);
        let probs = log_probs.map(f64::exp);
        Forward {
            input: *x,
            hidden,
            logits,
            log_probs,
            probs,
        }
    }

    /// Accumulates parameter gradients into `grad` for an upstream gradient
    /// with respect to the raw logits, returning the input gradient.
    fn backward(&self, fwd: &Forward, dlogits: &[f64; NUM_ACTIONS], grad: &mut [f64]) -> Symbol {
        let hdim = self.hidden;
        let w2_off = 3 * hdim;
        let b2_off = w2_off + NUM_ACTIONS * hdim;
        let mut dx = Symbol::zeros();
        for k in 0..NUM_ACTIONS {
            grad[b2_off + k] += dlogits[k];
        }
        for h in 0..hdim {
            let mut dh = 0.0;
            for k in 0..NUM_ACTIONS {
                grad[w2_off + k * hdim + h] += dlogits[k] * fwd.hidden[h];
                dh += dlogits[k] * self.w2(k, h);
            }
            let dpre = dh * (1.0 - fwd.hidden[h] * fwd.hidden[h]);
            grad[2 * hdim + h] += dpre;
            grad[h * 2] += dpre * fwd.input.x;
            grad[h * 2 + 1] += dpre * fwd.input.y;
            dx.x += dpre * self.w1(h, 0);
            dx.y += dpre * self.w1(h, 1);
        }
        dx
    }

    pub fn probs(&self, x: &Symbol) -> Result<[f64; NUM_ACTIONS]> {
        check_finite(x)?;
        Ok(self.forward(x).probs)
    }

    fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }
}

fn check_finite(x: &Symbol) -> Result<()> {
    if x.x.is_finite() && x.y.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFiniteSymbol(x.x, x.y))
    }
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub episodes: usize,
    /// Adam step size for the encoder table.
    pub learning_rate: f64,
    /// Adam step size for the decoder weights. Kept well below the encoder
    /// rate so the decision regions stay soft while symbols settle into them.
    pub decoder_learning_rate: f64,
    pub entropy_bonus: f64,
    pub train_snr_db: f64,
    pub baseline: f64,
    pub hidden_units: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            episodes: 150_000,
            learning_rate: 3e-3,
            decoder_learning_rate: 3e-5,
            entropy_bonus: 3e-2,
            train_snr_db: 10.0,
            baseline: 0.99,
            hidden_units: 32,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.episodes == 0 {
            return bad("episodes must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.decoder_learning_rate > 0.0 && self.decoder_learning_rate.is_finite()) {
            return bad("decoder_learning_rate must be positive");
        }
        if !(self.entropy_bonus >= 0.0 && self.entropy_bonus.is_finite()) {
            return bad("entropy_bonus must be nonnegative");
        }
        if self.train_snr_db.is_nan() {
            return bad("train_snr_db is NaN");
        }
        if !(0.0..1.0).contains(&self.baseline) {
            return bad("baseline decay must lie in [0, 1)");
        }
        if self.hidden_units == 0 {
            return bad("hidden_units must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainMeta {
    pub seed: u64,
    pub config: TrainConfig,
    /// Mean greedy, noiseless episode length over every start observation.
    pub final_score: f64,
    /// SHA-256 of the training inputs (grid, config, seed).
    pub inputs_hash: String,
}

/// A language: encoder and decoder built for one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Language {
    grid: GridConfig,
    encoder: Encoder,
    decoder: Decoder,
    train_meta: Option<TrainMeta>,
}

impl Language {
    pub fn from_parts(grid: GridConfig, encoder: Encoder, decoder: Decoder) -> Result<Self> {
        grid.validate()?;
        if encoder.len() != grid.num_observations() {
            return Err(Error::Config(format!(
                "encoder has {} entries, grid has {} observations",
                encoder.len(),
                grid.num_observations()
            )));
        }
        Ok(Self {
            grid,
            encoder,
            decoder,
            train_meta: None,
        })
    }

    pub fn grid(&self) -> &GridConfig {
        &self.grid
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn decoder(&self) -> &Decoder {
        &self.decoder
    }

    pub fn train_meta(&self) -> Option<&TrainMeta> {
        self.train_meta.as_ref()
    }

    pub fn encode(&self, obs: &Observation) -> Result<Symbol> {
        Ok(self.encoder.table[obs.index(&self.grid)?])
    }

    pub fn decode_probs(&self, symbol: &Symbol) -> Result<[f64; NUM_ACTIONS]> {
        self.decoder.probs(symbol)
    }

    pub fn greedy_action(&self, symbol: &Symbol) -> Result<Action> {
        check_finite(symbol)?;
        let fwd = self.decoder.forward(symbol);
        Ok(Action::from_index(argmax(&fwd.logits)).expect("four logits"))
    }

    pub fn sample_action<R: Rng + ?Sized>(&self, symbol: &Symbol, rng: &mut R) -> Result<Action> {
        let probs = self.decode_probs(symbol)?;
        Ok(sample_from(&probs, rng))
    }

    /// Mean power of the encoder table under the uniform observation law.
    pub fn average_power(&self) -> f64 {
        self.encoder.average_power()
    }

    /// SHA-256 of the serialized language.
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(&LanguageFile::from(self)).expect("serializable");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&LanguageFile::from(self)).expect("serializable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: LanguageFile = serde_json::from_str(text).map_err(|e| Error::schema(json_path(&e), e.to_string()))?;
        file.try_into()
    }
}

fn sample_from<R: Rng + ?Sized>(probs: &[f64; NUM_ACTIONS], rng: &mut R) -> Action {
    let dist = WeightedIndex::new(probs).expect("softmax output is a valid weight vector");
    Action::from_index(dist.sample(rng)).expect("index below four")
}

pub(crate) fn json_path(e: &serde_json::Error) -> String {
    format!("line {} column {}", e.line(), e.column())
}

pub fn save_language(lang: &Language, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, lang.to_json()).map_err(|e| Error::io(path, e))
}

pub fn load_language(path: impl AsRef<Path>) -> Result<Language> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Language::from_json(&text)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DecoderFile {
    hidden: usize,
    actions: usize,
    w1: Vec<[f64; 2]>,
    b1: Vec<f64>,
    w2: Vec<Vec<f64>>,
    b2: Vec<f64>,
    temperature: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LanguageFile {
    schema_version: u32,
    grid: GridConfig,
    obs_indexing: String,
    encoder: Vec<[f64; 2]>,
    decoder: DecoderFile,
    train_meta: Option<TrainMeta>,
}

impl From<&Language> for LanguageFile {
    fn from(lang: &Language) -> Self {
        let d = &lang.decoder;
        let h = d.hidden;
        let p = &d.params;
        Self {
            schema_version: LANGUAGE_SCHEMA_VERSION,
            grid: lang.grid,
            obs_indexing: OBS_INDEXING.to_string(),
            encoder: lang.encoder.table.iter().map(|x| [x.x, x.y]).collect(),
            decoder: DecoderFile {
                hidden: h,
                actions: NUM_ACTIONS,
                w1: p[..2 * h].chunks(2).map(|c| [c[0], c[1]]).collect(),
                b1: p[2 * h..3 * h].to_vec(),
                w2: p[3 * h..3 * h + NUM_ACTIONS * h]
                    .chunks(h)
                    .map(<[f64]>::to_vec)
                    .collect(),
                b2: p[3 * h + NUM_ACTIONS * h..].to_vec(),
                temperature: d.temperature,
            },
            train_meta: lang.train_meta.clone(),
        }
    }
}

impl TryFrom<LanguageFile> for Language {
    type Error = Error;

    fn try_from(f: LanguageFile) -> Result<Self> {
        if f.schema_version != LANGUAGE_SCHEMA_VERSION {
            return Err(Error::schema(
                "schema_version",
                format!("unsupported version {}", f.schema_version),
            ));
        }
        f.grid.validate().map_err(|e| Error::schema("grid", e.to_string()))?;
        if f.obs_indexing != OBS_INDEXING {
            return Err(Error::schema("obs_indexing", "unknown observation ordering"));
        }
        if f.decoder.actions != NUM_ACTIONS {
            return Err(Error::schema(
                "decoder.actions",
                format!("expected {NUM_ACTIONS} actions, got {}", f.decoder.actions),
            ));
        }
        if f.decoder.hidden != f.decoder.w1.len() {
            return Err(Error::schema(
                "decoder.hidden",
                format!("declared {} but w1 has {} rows", f.decoder.hidden, f.decoder.w1.len()),
            ));
        }
        let decoder = Decoder::from_weights(
            &f.decoder.w1,
            &f.decoder.b1,
            &f.decoder.w2,
            &f.decoder.b2,
            f.decoder.temperature,
        )?;
        if f.encoder.len() != f.grid.num_observations() {
            return Err(Error::schema(
                "encoder",
                format!("expected {} rows, got {}", f.grid.num_observations(), f.encoder.len()),
            ));
        }
        let encoder = Encoder::new(f.encoder.iter().map(|r| Symbol::new(r[0], r[1])).collect())
            .map_err(|e| Error::schema("encoder", e.to_string()))?;
        let mut lang = Language::from_parts(f.grid, encoder, decoder)?;
        lang.train_meta = f.train_meta;
        Ok(lang)
    }
}

/// One decision of a trajectory, frozen for gradient evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicySample {
    pub obs_index: usize,
    pub noise: Symbol,
    pub action: usize,
    pub advantage: f64,
}

/// Gradient of the surrogate with respect to every parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub encoder: Vec<Symbol>,
    pub decoder: Vec<f64>,
}

/// REINFORCE surrogate `Σ A·log π(a | e(o) + n) + β·H(π(· | e(o) + n))`.
pub fn surrogate(lang: &Language, batch: &[PolicySample], entropy_bonus: f64) -> f64 {
    batch
        .iter()
        .map(|s| {
            let y = lang.encoder.table[s.obs_index] + s.noise;
            let fwd = lang.decoder.forward(&y);
            let entropy: f64 = -fwd.probs.iter().zip(&fwd.log_probs).map(|(p, l)| p * l).sum::<f64>();
            s.advantage * fwd.log_probs[s.action] + entropy_bonus * entropy
        })
        .sum()
}

pub fn surrogate_gradient(lang: &Language, batch: &[PolicySample], entropy_bonus: f64) -> Gradient {
    let mut grad = Gradient {
        encoder: vec![Symbol::zeros(); lang.encoder.len()],
        decoder: vec![0.0; lang.decoder.params.len()],
    };
    let tau = lang.decoder.temperature;
    for s in batch {
        let y = lang.encoder.table[s.obs_index] + s.noise;
        let fwd = lang.decoder.forward(&y);
        let entropy: f64 = -fwd.probs.iter().zip(&fwd.log_probs).map(|(p, l)| p * l).sum::<f64>();
        // d/du of A·log p_a + β·H where u = z/τ; dH/du_k = −p_k (log p_k + H).
        let dlogits: [f64; NUM_ACTIONS] = std::array::from_fn(|k| {
            let onehot = if k == s.action { 1.0 } else { 0.0 };
            let pg = s.advantage * (onehot - fwd.probs[k]);
            let ent = -fwd.probs[k] * (fwd.log_probs[k] + entropy);
            (pg + entropy_bonus * ent) / tau
        });
        let dx = lang.decoder.backward(&fwd, &dlogits, &mut grad.decoder);
        grad.encoder[s.obs_index] += dx;
    }
    grad
}

/// Adam in ascent form over a flat parameter vector.
struct Adam {
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize, lr: f64) -> Self {
        Self {
            lr,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn ascend<'a>(&mut self, params: impl Iterator<Item = (&'a mut f64, f64)>) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for (i, (p, g)) in params.enumerate() {
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * g;
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * g * g;
            *p += self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

fn inputs_hash(grid: &GridConfig, tc: &TrainConfig, seed: u64) -> String {
    let doc = serde_json::json!({ "grid": grid, "train": tc, "seed": seed });
    hex::encode(Sha256::digest(doc.to_string().as_bytes()))
}

/// Trains one language with REINFORCE.
///
/// Each step encodes the observation, adds channel noise at the training
/// SNR, samples an action from the decoder and advances the grid. Returns to
/// go are centred by a per-observation exponential moving average. After
/// every update the encoder table is rescaled to unit average power.
pub fn train_language(grid: &GridConfig, tc: &TrainConfig, seed: u64) -> Result<Language> {
    grid.validate()?;
    tc.validate()?;
    let mut rng = rng::stream(seed);
    let n_obs = grid.num_observations();

    let table = (0..n_obs)
        .map(|_| Symbol::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    let mut encoder = Encoder { table };
    encoder.normalize_power();
    let decoder = Decoder::random(tc.hidden_units, &mut rng);
    let mut lang = Language::from_parts(*grid, encoder, decoder)?;

    let channel = ChannelConfig::calibrated(1.0, Snr::Db(tc.train_snr_db))?;
    let mut enc_opt = Adam::new(2 * n_obs, tc.learning_rate);
    let mut dec_opt = Adam::new(lang.decoder.params.len(), tc.decoder_learning_rate);
    let mut baseline: Vec<Option<f64>> = vec![None; n_obs];
    let mut batch = Vec::with_capacity(grid.max_steps);
    let mut rewards = Vec::with_capacity(grid.max_steps);

    for episode in 0..tc.episodes {
        batch.clear();
        rewards.clear();
        let mut obs = gridworld::new_episode(grid, &mut rng);
        for _ in 0..grid.max_steps {
            let obs_index = obs.index(grid)?;
            let noise = channel::noise(&channel, &mut rng);
            let y = lang.encoder.table[obs_index] + noise;
            let fwd = lang.decoder.forward(&y);
            let action = sample_from(&fwd.probs, &mut rng);
            let out = gridworld::step(&obs, action, grid);
            batch.push(PolicySample {
                obs_index,
                noise,
                action: action.index(),
                advantage: 0.0,
            });
            rewards.push(out.reward);
            obs = out.next;
            if out.terminal {
                break;
            }
        }

        let mut ret = 0.0;
        for (s, r) in batch.iter_mut().zip(&rewards).rev() {
            ret += r;
            let b = baseline[s.obs_index].get_or_insert(ret);
            s.advantage = ret - *b;
            *b = tc.baseline * *b + (1.0 - tc.baseline) * ret;
        }

        let grad = surrogate_gradient(&lang, &batch, tc.entropy_bonus);
        let enc_params = lang.encoder.table.iter_mut().zip(&grad.encoder).flat_map(|(x, g)| {
            let [a, b] = x.as_mut_slice() else { unreachable!() };
            [(a, g.x), (b, g.y)]
        });
        enc_opt.ascend(enc_params);
        dec_opt.ascend(lang.decoder.params.iter_mut().zip(grad.decoder.iter().copied()));
        lang.encoder.normalize_power();

        let finite = lang.decoder.all_finite() && lang.encoder.table.iter().all(|x| x.x.is_finite() && x.y.is_finite());
        if !finite {
            return Err(Error::Divergence { episode });
        }
    }

    let final_score = greedy_mean_length(&lang)?;
    lang.train_meta = Some(TrainMeta {
        seed,
        config: tc.clone(),
        final_score,
        inputs_hash: inputs_hash(grid, tc, seed),
    });
    Ok(lang)
}

/// Mean episode length under greedy decoding over a noiseless channel,
/// enumerating every start observation once.
pub fn greedy_mean_length(lang: &Language) -> Result<f64> {
    let grid = lang.grid;
    let mut total = 0usize;
    for start in gridworld::all_observations(&grid) {
        let mut obs = start;
        let mut steps = 0;
        while steps < grid.max_steps {
            let a = lang.greedy_action(&lang.encode(&obs)?)?;
            let out = gridworld::step(&obs, a, &grid);
            steps += 1;
            obs = out.next;
            if out.terminal {
                break;
            }
        }
        total += steps;
    }
    Ok(total as f64 / grid.num_observations() as f64)
}
