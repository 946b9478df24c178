//! Scout-and-treasure grid world.
//!
//! A scout and a treasure occupy distinct cells of a square grid. The scout
//! moves one cell per step (clamped at the borders) and the episode ends when
//! it lands on the treasure or the step cap is reached.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, NUM_ACTIONS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridConfig {
    pub size: usize,
    pub max_steps: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { size: 5, max_steps: 50 }
    }
}

impl GridConfig {
    pub fn new(size: usize, max_steps: usize) -> Result<Self> {
        let cfg = Self { size, max_steps };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.size < 2 {
            return Err(Error::Config(format!(
                "grid size must be at least 2, got {}",
                self.size
            )));
        }
        let worst = 2 * (self.size - 1);
        if self.max_steps < worst {
            return Err(Error::Config(format!(
                "max_steps {} is below the worst-case shortest path {}",
                self.max_steps, worst
            )));
        }
        Ok(())
    }

    pub fn num_cells(&self) -> usize {
        self.size * self.size
    }

    /// Number of valid observations (ordered pairs of distinct cells).
    pub fn num_observations(&self) -> usize {
        let cells = self.num_cells();
        cells * (cells - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    fn flat(self, size: usize) -> usize {
        self.row * size + self.col
    }

    fn from_flat(idx: usize, size: usize) -> Self {
        Self::new(idx / size, idx % size)
    }
}

pub fn manhattan(a: Cell, b: Cell) -> usize {
    a.row.abs_diff(b.row) + a.col.abs_diff(b.col)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Observation {
    pub scout: Cell,
    pub treasure: Cell,
}

impl Observation {
    pub const fn new(scout: Cell, treasure: Cell) -> Self {
        Self { scout, treasure }
    }

    pub fn is_valid(&self, cfg: &GridConfig) -> bool {
        let n = cfg.size;
        self.scout.row < n
            && self.scout.col < n
            && self.treasure.row < n
            && self.treasure.col < n
            && self.scout != self.treasure
    }

    /// Position in the fixed observation ordering: scouts in row-major order,
    /// then treasures in row-major order skipping the scout's cell.
    pub fn index(&self, cfg: &GridConfig) -> Result<usize> {
        if !self.is_valid(cfg) {
            return Err(Error::UnknownObservation(self.to_string()));
        }
        let s = self.scout.flat(cfg.size);
        let t = self.treasure.flat(cfg.size);
        let t = if t < s { t } else { t - 1 };
        Ok(s * (cfg.num_cells() - 1) + t)
    }

    pub fn from_index(index: usize, cfg: &GridConfig) -> Result<Self> {
        if index >= cfg.num_observations() {
            return Err(Error::UnknownObservation(format!("index {index}")));
        }
        let per_scout = cfg.num_cells() - 1;
        let s = index / per_scout;
        let t = index % per_scout;
        let t = if t < s { t } else { t + 1 };
        Ok(Self::new(Cell::from_flat(s, cfg.size), Cell::from_flat(t, cfg.size)))
    }

    pub fn distance(&self) -> usize {
        manhattan(self.scout, self.treasure)
    }
}

impl std::fmt::Display for Observation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "s{}-{}/t{}-{}",
            self.scout.row, self.scout.col, self.treasure.row, self.treasure.col
        )
    }
}

/// Every valid observation, in index order.
pub fn all_observations(cfg: &GridConfig) -> Vec<Observation> {
    (0..cfg.num_observations())
        .map(|i| Observation::from_index(i, cfg).expect("index in range"))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Right = 0,
    Down = 1,
    Left = 2,
    Up = 3,
}

impl Action {
    pub const ALL: [Action; NUM_ACTIONS] = [Action::Right, Action::Down, Action::Left, Action::Up];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub next: Observation,
    pub reward: f64,
    pub terminal: bool,
}

/// Samples scout and treasure uniformly over distinct cells.
pub fn new_episode<R: Rng + ?Sized>(cfg: &GridConfig, rng: &mut R) -> Observation {
    let cells = cfg.num_cells();
    let scout = rng.random_range(0..cells);
    let treasure = loop {
        let t = rng.random_range(0..cells);
        if t != scout {
            break t;
        }
    };
    Observation::new(Cell::from_flat(scout, cfg.size), Cell::from_flat(treasure, cfg.size))
}

fn moved(cell: Cell, action: Action, size: usize) -> Cell {
    let last = size - 1;
    match action {
        Action::Right => Cell::new(cell.row, (cell.col + 1).min(last)),
        Action::Down => Cell::new((cell.row + 1).min(last), cell.col),
        Action::Left => Cell::new(cell.row, cell.col.saturating_sub(1)),
        Action::Up => Cell::new(cell.row.saturating_sub(1), cell.col),
    }
}

pub fn step(obs: &Observation, action: Action, cfg: &GridConfig) -> StepOutcome {
    let next = Observation::new(moved(obs.scout, action, cfg.size), obs.treasure);
    let terminal = next.scout == next.treasure;
    StepOutcome {
        next,
        reward: if terminal { 0.0 } else { -1.0 },
        terminal,
    }
}

/// Optimal action values for every valid observation.
///
/// Values count every executed step as a cost of one, including the capturing
/// step, so `q(a, o)` is minus the number of steps needed to reach the
/// treasure when taking `a` first and acting optimally afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    grid: GridConfig,
    values: Vec<[f64; NUM_ACTIONS]>,
    residual: f64,
    iterations: usize,
}

impl QTable {
    pub fn grid(&self) -> &GridConfig {
        &self.grid
    }

    pub fn get(&self, obs: &Observation, action: Action) -> Result<f64> {
        Ok(self.row(obs)?[action.index()])
    }

    pub fn row(&self, obs: &Observation) -> Result<&[f64; NUM_ACTIONS]> {
        Ok(&self.values[obs.index(&self.grid)?])
    }

    pub fn rows(&self) -> &[[f64; NUM_ACTIONS]] {
        &self.values
    }

    /// Final sup-norm change of the value iteration.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Builds a table from explicit rows (index order).
    pub fn from_rows(grid: GridConfig, values: Vec<[f64; NUM_ACTIONS]>) -> Result<Self> {
        if values.len() != grid.num_observations() {
            return Err(Error::Config(format!(
                "q table has {} rows, grid needs {}",
                values.len(),
                grid.num_observations()
            )));
        }
        Ok(Self {
            grid,
            values,
            residual: 0.0,
            iterations: 0,
        })
    }
}

const VALUE_ITERATION_TOL: f64 = 1e-12;

/// Exact value iteration (unit step cost, no discount, absorbing terminal).
pub fn optimal_q(cfg: &GridConfig) -> QTable {
    let observations = all_observations(cfg);
    // transitions[o][a] = Some(next index) or None when the move captures.
    let transitions: Vec<[Option<usize>; NUM_ACTIONS]> = observations
        .iter()
        .map(|o| {
            Action::ALL.map(|a| {
                let out = step(o, a, cfg);
                (!out.terminal).then(|| out.next.index(cfg).expect("valid successor"))
            })
        })
        .collect();

    let backup = |values: &[f64], t: Option<usize>| -1.0 + t.map_or(0.0, |n| values[n]);

    let mut values = vec![0.0; observations.len()];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    // The fixed point is reached after at most (#states + 1) sweeps.
    while residual >= VALUE_ITERATION_TOL && iterations <= observations.len() + 1 {
        let next: Vec<f64> = transitions
            .iter()
            .map(|row| {
                row.iter()
                    .map(|&t| backup(&values, t))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        residual = next.iter().zip(&values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        values = next;
        iterations += 1;
    }

    let q = transitions.iter().map(|row| row.map(|t| backup(&values, t))).collect();
    QTable {
        grid: *cfg,
        values: q,
        residual,
        iterations,
    }
}

/// Expected Manhattan distance between uniformly placed distinct cells.
pub fn mean_optimal_length(cfg: &GridConfig) -> f64 {
    let obs = all_observations(cfg);
    let total: usize = obs.iter().map(Observation::distance).sum();
    total as f64 / obs.len() as f64
}
