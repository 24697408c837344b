//! Finite MDPs with atomic-proposition labels, and the benchmark environments.

mod grid;

pub use grid::{load_grid, CellClass, Direction, GridSpec};

use rand::Rng;

use crate::ltl::{Alphabet, Letter};

/// Row sums must be within this of 1.
pub const PROBABILITY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, thiserror::Error)]
pub enum EnvError {
    #[error("state {0} out of range")]
    UnknownState(usize),
    #[error("action {action} is not available in state {state}")]
    UnavailableAction { state: usize, action: usize },
    #[error("transition row ({state}, {action}) is not a distribution: {msg}")]
    BadDistribution {
        state: usize,
        action: usize,
        msg: String,
    },
    #[error("MDP has no actions")]
    NoActions,
    #[error("label error: {0}")]
    Label(#[from] crate::ltl::AlphabetError),
    #[error("grid line {line}: {msg}")]
    Grid { line: usize, msg: String },
    #[error("unknown builtin environment {0:?}")]
    UnknownBuiltin(String),
}

/// A finite MDP `(S, s0, A, P, AP, L)` with a point initial distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledMdp {
    init: usize,
    action_names: Vec<String>,
    available: Vec<Vec<usize>>,
    /// `rows[s][a]` is empty when `a` is unavailable in `s`.
    rows: Vec<Vec<Vec<(usize, f64)>>>,
    alphabet: Alphabet,
    labels: Vec<Letter>,
    shape: Option<(usize, usize)>,
}

/// One `(state, action)` row under construction.
pub type Row = (usize, usize, Vec<(usize, f64)>);

impl LabeledMdp {
    /// Builds an MDP from explicit rows. States without any row receive a
    /// self-loop on action 0. Duplicate targets within a row are merged.
    pub fn new(
        num_states: usize,
        init: usize,
        action_names: Vec<String>,
        rows: Vec<Row>,
        alphabet: Alphabet,
        labels: Vec<Letter>,
    ) -> Result<Self, EnvError> {
        if action_names.is_empty() {
            return Err(EnvError::NoActions);
        }
        if init >= num_states {
            return Err(EnvError::UnknownState(init));
        }
        if labels.len() != num_states {
            return Err(EnvError::BadDistribution {
                state: 0,
                action: 0,
                msg: format!("{} labels for {num_states} states", labels.len()),
            });
        }
        let na = action_names.len();
        let mut table = vec![vec![Vec::new(); na]; num_states];
        for (s, a, dist) in rows {
            if s >= num_states {
                return Err(EnvError::UnknownState(s));
            }
            let bad = |msg: String| EnvError::BadDistribution {
                state: s,
                action: a,
                msg,
            };
            if a >= na {
                return Err(bad("unknown action".into()));
            }
            let mut merged: Vec<(usize, f64)> = Vec::new();
            for (t, p) in dist {
                if t >= num_states {
                    return Err(EnvError::UnknownState(t));
                }
                if !(p.is_finite() && p >= 0.0) {
                    return Err(bad(format!("probability {p}")));
                }
                if p == 0.0 {
                    continue;
                }
                match merged.iter_mut().find(|(x, _)| *x == t) {
                    Some(e) => e.1 += p,
                    None => merged.push((t, p)),
                }
            }
            merged.sort_by_key(|&(t, _)| t);
            let total: f64 = merged.iter().map(|(_, p)| p).sum();
            if (total - 1.0).abs() > PROBABILITY_TOLERANCE {
                return Err(bad(format!("sums to {total}")));
            }
            table[s][a] = merged;
        }
        for (s, row) in table.iter_mut().enumerate() {
            if row.iter().all(Vec::is_empty) {
                row[0] = vec![(s, 1.0)];
            }
        }
        let available = table
            .iter()
            .map(|row| (0..na).filter(|&a| !row[a].is_empty()).collect())
            .collect();
        let ab_bits = alphabet.letter_count() as u64;
        if labels.iter().any(|l| l.bits() >= ab_bits) {
            return Err(EnvError::BadDistribution {
                state: 0,
                action: 0,
                msg: "label outside alphabet".into(),
            });
        }
        Ok(Self {
            init,
            action_names,
            available,
            rows: table,
            alphabet,
            labels,
            shape: None,
        })
    }

    pub(crate) fn with_shape(mut self, rows: usize, cols: usize) -> Self {
        self.shape = Some((rows, cols));
        self
    }

    pub fn num_states(&self) -> usize {
        self.rows.len()
    }

    pub fn init(&self) -> usize {
        self.init
    }

    pub fn num_actions(&self) -> usize {
        self.action_names.len()
    }

    pub fn action_names(&self) -> &[String] {
        &self.action_names
    }

    pub fn action_index(&self, name: &str) -> Option<usize> {
        self.action_names.iter().position(|a| a == name)
    }

    /// Available actions in `s`, ascending. Never empty.
    pub fn actions(&self, s: usize) -> &[usize] {
        &self.available[s]
    }

    pub fn distribution(&self, s: usize, a: usize) -> Result<&[(usize, f64)], EnvError> {
        let row = self.rows.get(s).ok_or(EnvError::UnknownState(s))?;
        match row.get(a) {
            Some(d) if !d.is_empty() => Ok(d),
            _ => Err(EnvError::UnavailableAction {
                state: s,
                action: a,
            }),
        }
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn label(&self, s: usize) -> Letter {
        self.labels[s]
    }

    pub fn label_names(&self, s: usize) -> Vec<&str> {
        self.alphabet
            .atoms()
            .iter()
            .enumerate()
            .filter(|(i, _)| self.labels[s].contains(*i))
            .map(|(_, a)| a.as_str())
            .collect()
    }

    /// `(rows, cols)` for grid worlds; states are then indexed row-major.
    pub fn shape(&self) -> Option<(usize, usize)> {
        self.shape
    }

    pub fn cell_index(&self, row: usize, col: usize) -> Option<usize> {
        let (r, c) = self.shape?;
        (row < r && col < c).then_some(row * c + col)
    }

    /// Smallest nonzero transition probability.
    pub fn p_min(&self) -> f64 {
        self.rows
            .iter()
            .flatten()
            .flatten()
            .map(|&(_, p)| p)
            .fold(1.0, f64::min)
    }

    /// States reachable from the initial state under some action sequence.
    pub fn reachable(&self) -> Vec<bool> {
        let adj: Vec<Vec<usize>> = self
            .rows
            .iter()
            .map(|row| row.iter().flatten().map(|&(t, _)| t).collect())
            .collect();
        crate::graph::forward_reachable(&adj, [self.init])
    }

    /// Draws a successor of `(s, a)`.
    pub fn sample_transition<R: Rng + ?Sized>(
        &self,
        s: usize,
        a: usize,
        rng: &mut R,
    ) -> Result<usize, EnvError> {
        let dist = self.distribution(s, a)?;
        Ok(sample_from(dist, rng))
    }
}

pub(crate) fn sample_from<R: Rng + ?Sized>(dist: &[(usize, f64)], rng: &mut R) -> usize {
    if dist.len() == 1 {
        return dist[0].0;
    }
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for &(t, p) in dist {
        acc += p;
        if u < acc {
            return t;
        }
    }
    dist[dist.len() - 1].0
}

pub const PROB_GATE_GRID: &str = include_str!("../../data/grids/prob_gate.grid");
pub const FROZEN_LAKE_GRID: &str = include_str!("../../data/grids/frozen_lake8.grid");
pub const OFFICE_GRID: &str = include_str!("../../data/grids/office.grid");

/// The 4×10 probabilistic gate world, built directly (independently of the grid loader).
///
/// Row 0 is a corridor labelled `a` that only allows `right` and ends in an
/// unlabelled sink at (0,9). The start (1,0) leads down to a gate at (2,0) that
/// sends the agent right with probability 0.8 (towards the `a`-labelled sink at
/// (2,9)) and down with probability 0.2 into the `c`-labelled sink at (3,0).
/// The remaining cells of rows 1 and 3 are walls.
pub fn probabilistic_gate() -> LabeledMdp {
    const COLS: usize = 10;
    let idx = |r: usize, c: usize| r * COLS + c;
    let alphabet = Alphabet::new(["a", "c"]).expect("static alphabet");
    let a = alphabet.letter(["a"]).unwrap();
    let c = alphabet.letter(["c"]).unwrap();
    let mut labels = vec![Letter::EMPTY; 4 * COLS];
    let mut rows: Vec<Row> = Vec::new();
    let all = |s: usize, dist: Vec<(usize, f64)>, rows: &mut Vec<Row>| {
        for act in 0..4 {
            rows.push((s, act, dist.clone()));
        }
    };
    let (up, down, left, right) = (0, 1, 2, 3);
    for col in 0..COLS - 1 {
        labels[idx(0, col)] = a;
        rows.push((idx(0, col), right, vec![(idx(0, col + 1), 1.0)]));
    }
    all(idx(0, 9), vec![(idx(0, 9), 1.0)], &mut rows);
    let start = idx(1, 0);
    rows.push((start, up, vec![(idx(0, 0), 1.0)]));
    rows.push((start, down, vec![(idx(2, 0), 1.0)]));
    rows.push((start, left, vec![(start, 1.0)]));
    rows.push((start, right, vec![(start, 1.0)]));
    all(
        idx(2, 0),
        vec![(idx(3, 0), 0.2), (idx(2, 1), 0.8)],
        &mut rows,
    );
    for col in 1..COLS - 1 {
        let s = idx(2, col);
        rows.push((s, up, vec![(s, 1.0)]));
        rows.push((s, down, vec![(s, 1.0)]));
        rows.push((s, left, vec![(idx(2, col - 1), 1.0)]));
        rows.push((s, right, vec![(idx(2, col + 1), 1.0)]));
    }
    labels[idx(2, 9)] = a;
    all(idx(2, 9), vec![(idx(2, 9), 1.0)], &mut rows);
    labels[idx(3, 0)] = c;
    all(idx(3, 0), vec![(idx(3, 0), 1.0)], &mut rows);
    for col in 1..COLS {
        all(idx(1, col), vec![(idx(1, col), 1.0)], &mut rows);
        all(idx(3, col), vec![(idx(3, col), 1.0)], &mut rows);
    }
    let names = Direction::ALL
        .iter()
        .map(|d| d.name().to_string())
        .collect();
    LabeledMdp::new(4 * COLS, start, names, rows, alphabet, labels)
        .expect("probabilistic gate is well formed")
        .with_shape(4, COLS)
}

/// 8×8 slippery frozen lake with two camps (`a`, `b`) and holes (`h`).
pub fn frozen_lake8() -> LabeledMdp {
    load_grid(FROZEN_LAKE_GRID).expect("bundled frozen lake grid is valid")
}

/// Office world with icy patches, obstacles and two one-way gates.
pub fn office_world() -> LabeledMdp {
    load_grid(OFFICE_GRID).expect("bundled office grid is valid")
}

/// Looks up a builtin environment by name.
pub fn builtin(name: &str) -> Result<LabeledMdp, EnvError> {
    match name {
        "prob_gate" | "probabilistic_gate" => Ok(probabilistic_gate()),
        "frozen_lake" | "frozen_lake8" => Ok(frozen_lake8()),
        "office" | "office_world" => Ok(office_world()),
        other => Err(EnvError::UnknownBuiltin(other.to_string())),
    }
}
