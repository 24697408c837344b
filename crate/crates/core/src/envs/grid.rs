//! Text grid worlds.
//!
//! ```text
//! rows: 2
//! cols: 3
//! legend: . = plain
//! legend: S = start
//! legend: # = wall
//! legend: A = sink+label:a
//! S.#
//! ..A
//! ```
//!
//! Blank lines and lines starting with `//` are ignored. Every line that is not
//! a `rows:`/`cols:`/`legend:` header is a glyph row. A legend entry is a
//! `+`-separated list of at most one dynamics class (`plain`, `wall`, `ice`,
//! `hole`, `sink`, `oneway:<dir>`, `gate:<p_down>,<p_right>`; default `plain`)
//! and any number of modifiers (`start`, `label:<ap>`).

use std::collections::HashMap;

use super::{EnvError, LabeledMdp, Row};
use crate::ltl::{Alphabet, Letter};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
}

impl Direction {
    /// Action order of every grid world.
    pub const ALL: [Direction; 4] = [
        Direction::Up,
        Direction::Down,
        Direction::Left,
        Direction::Right,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Down => "down",
            Direction::Left => "left",
            Direction::Right => "right",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|d| d.name() == s)
    }

    fn opposite(self) -> Self {
        match self {
            Direction::Up => Direction::Down,
            Direction::Down => Direction::Up,
            Direction::Left => Direction::Right,
            Direction::Right => Direction::Left,
        }
    }

    fn perpendicular(self) -> [Direction; 2] {
        match self {
            Direction::Up | Direction::Down => [Direction::Left, Direction::Right],
            Direction::Left | Direction::Right => [Direction::Up, Direction::Down],
        }
    }

    fn delta(self) -> (isize, isize) {
        match self {
            Direction::Up => (-1, 0),
            Direction::Down => (1, 0),
            Direction::Left => (0, -1),
            Direction::Right => (0, 1),
        }
    }
}

/// Dynamics of a cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CellClass {
    /// Deterministic moves.
    Plain,
    /// Blocks movement; never entered.
    Wall,
    /// Intended move with probability 1/3, each perpendicular move 1/3.
    Ice,
    /// Absorbing.
    Hole,
    /// Absorbing.
    Sink,
    /// Only the given action is available; cannot be entered against it.
    OneWay(Direction),
    /// Every action moves down with `p_down` and right with `p_right`.
    Gate { p_down: f64, p_right: f64 },
}

#[derive(Clone, Debug, PartialEq)]
struct Glyph {
    class: CellClass,
    start: bool,
    labels: Vec<String>,
}

/// Parsed grid file.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    /// Row-major cell classes.
    pub cells: Vec<CellClass>,
    /// Row-major labels.
    pub labels: Vec<Vec<String>>,
    pub start: usize,
}

fn grid_err(line: usize, msg: impl Into<String>) -> EnvError {
    EnvError::Grid {
        line,
        msg: msg.into(),
    }
}

fn parse_glyph(line: usize, spec: &str) -> Result<Glyph, EnvError> {
    let mut class = None;
    let mut start = false;
    let mut labels = Vec::new();
    for part in spec.split('+').map(str::trim) {
        let (head, arg) = match part.split_once(':') {
            Some((h, a)) => (h.trim(), Some(a.trim())),
            None => (part, None),
        };
        let new_class = match (head, arg) {
            ("start", None) => {
                start = true;
                continue;
            }
            ("label", Some(ap)) => {
                labels.push(ap.to_string());
                continue;
            }
            ("plain", None) => CellClass::Plain,
            ("wall", None) => CellClass::Wall,
            ("ice", None) => CellClass::Ice,
            ("hole", None) => CellClass::Hole,
            ("sink", None) => CellClass::Sink,
            ("oneway", Some(d)) => CellClass::OneWay(
                Direction::parse(d)
                    .ok_or_else(|| grid_err(line, format!("unknown direction {d:?}")))?,
            ),
            ("gate", Some(ps)) => {
                let probs: Vec<f64> = ps
                    .split(',')
                    .map(|p| p.trim().parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| grid_err(line, format!("bad gate probability: {e}")))?;
                let [p_down, p_right] = probs[..] else {
                    return Err(grid_err(line, "gate needs two probabilities"));
                };
                if !(p_down >= 0.0 && p_right >= 0.0)
                    || (p_down + p_right - 1.0).abs() > super::PROBABILITY_TOLERANCE
                {
                    return Err(grid_err(
                        line,
                        format!("gate probabilities {p_down} + {p_right} do not sum to 1"),
                    ));
                }
                CellClass::Gate { p_down, p_right }
            }
            _ => return Err(grid_err(line, format!("unknown cell attribute {part:?}"))),
        };
        if class.replace(new_class).is_some() {
            return Err(grid_err(
                line,
                format!("more than one cell class in {spec:?}"),
            ));
        }
    }
    if start && class == Some(CellClass::Wall) {
        return Err(grid_err(line, "start cell cannot be a wall"));
    }
    Ok(Glyph {
        class: class.unwrap_or(CellClass::Plain),
        start,
        labels,
    })
}

impl GridSpec {
    pub fn parse(text: &str) -> Result<Self, EnvError> {
        let mut rows = None;
        let mut cols = None;
        let mut legend: HashMap<char, Glyph> = HashMap::new();
        let mut block: Vec<(usize, &str)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim_end();
            if line.trim().is_empty() || line.trim_start().starts_with("//") {
                continue;
            }
            let header = |key: &str| line.strip_prefix(key).map(str::trim);
            if let Some(v) = header("rows:") {
                rows = Some(
                    v.parse::<usize>()
                        .map_err(|e| grid_err(line_no, format!("rows: {e}")))?,
                );
            } else if let Some(v) = header("cols:") {
                cols = Some(
                    v.parse::<usize>()
                        .map_err(|e| grid_err(line_no, format!("cols: {e}")))?,
                );
            } else if let Some(v) = header("legend:") {
                let (g, spec) = v
                    .split_once('=')
                    .ok_or_else(|| grid_err(line_no, "legend entry needs `<glyph> = <classes>`"))?;
                let mut chars = g.trim().chars();
                let (Some(glyph), None) = (chars.next(), chars.next()) else {
                    return Err(grid_err(
                        line_no,
                        format!("glyph {:?} is not a single character", g.trim()),
                    ));
                };
                if legend.insert(glyph, parse_glyph(line_no, spec)?).is_some() {
                    return Err(grid_err(line_no, format!("glyph {glyph:?} declared twice")));
                }
            } else {
                block.push((line_no, line));
            }
        }
        let rows = rows.ok_or_else(|| grid_err(0, "missing rows:"))?;
        let cols = cols.ok_or_else(|| grid_err(0, "missing cols:"))?;
        if rows == 0 || cols == 0 {
            return Err(grid_err(0, "grid must be non-empty"));
        }
        if block.len() != rows {
            return Err(grid_err(
                block.last().map_or(0, |b| b.0),
                format!("expected {rows} glyph rows, found {}", block.len()),
            ));
        }
        let mut cells = Vec::with_capacity(rows * cols);
        let mut labels = Vec::with_capacity(rows * cols);
        let mut start = None;
        for &(line_no, line) in &block {
            let glyphs: Vec<char> = line.chars().collect();
            if glyphs.len() != cols {
                return Err(grid_err(
                    line_no,
                    format!("expected {cols} glyphs, found {}", glyphs.len()),
                ));
            }
            for g in glyphs {
                let glyph = legend
                    .get(&g)
                    .ok_or_else(|| grid_err(line_no, format!("undeclared glyph {g:?}")))?;
                if glyph.start && start.replace(cells.len()).is_some() {
                    return Err(grid_err(line_no, "more than one start cell"));
                }
                cells.push(glyph.class);
                labels.push(glyph.labels.clone());
            }
        }
        let start = start.ok_or_else(|| grid_err(0, "no start cell"))?;
        Ok(Self {
            rows,
            cols,
            cells,
            labels,
            start,
        })
    }

    /// Where a deterministic move in `dir` from `cell` ends up.
    fn step(&self, cell: usize, dir: Direction) -> usize {
        let (r, c) = ((cell / self.cols) as isize, (cell % self.cols) as isize);
        let (dr, dc) = dir.delta();
        let (nr, nc) = (r + dr, c + dc);
        if nr < 0 || nc < 0 || nr >= self.rows as isize || nc >= self.cols as isize {
            return cell;
        }
        let target = nr as usize * self.cols + nc as usize;
        match self.cells[target] {
            CellClass::Wall => cell,
            CellClass::OneWay(d) if d == dir.opposite() => cell,
            _ => target,
        }
    }

    pub fn to_mdp(&self) -> Result<LabeledMdp, EnvError> {
        let n = self.rows * self.cols;
        let mut atoms: Vec<&str> = Vec::new();
        for l in self.labels.iter().flatten() {
            if !atoms.contains(&l.as_str()) {
                atoms.push(l);
            }
        }
        let alphabet = Alphabet::new(atoms.iter().copied())?;
        let labels = self
            .labels
            .iter()
            .map(|ls| alphabet.letter(ls.iter().map(String::as_str)))
            .collect::<Result<Vec<Letter>, _>>()?;
        let mut rows: Vec<Row> = Vec::new();
        for cell in 0..n {
            for dir in Direction::ALL {
                let dist = match self.cells[cell] {
                    CellClass::Plain => vec![(self.step(cell, dir), 1.0)],
                    CellClass::Wall | CellClass::Hole | CellClass::Sink => vec![(cell, 1.0)],
                    CellClass::Ice => {
                        let [p, q] = dir.perpendicular();
                        [dir, p, q]
                            .into_iter()
                            .map(|d| (self.step(cell, d), 1.0 / 3.0))
                            .collect()
                    }
                    CellClass::OneWay(d) if d == dir => vec![(self.step(cell, dir), 1.0)],
                    CellClass::OneWay(_) => continue,
                    CellClass::Gate { p_down, p_right } => vec![
                        (self.step(cell, Direction::Down), p_down),
                        (self.step(cell, Direction::Right), p_right),
                    ],
                };
                rows.push((cell, dir.index(), dist));
            }
        }
        let names = Direction::ALL
            .iter()
            .map(|d| d.name().to_string())
            .collect();
        Ok(
            LabeledMdp::new(n, self.start, names, rows, alphabet, labels)?
                .with_shape(self.rows, self.cols),
        )
    }
}

/// Parses a grid file into a labelled MDP with row-major state indices.
pub fn load_grid(text: &str) -> Result<LabeledMdp, EnvError> {
    GridSpec::parse(text)?.to_mdp()
}
