//! Limit-deterministic Büchi automata with ε-transitions.
//!
//! Text format (line oriented, `#` starts a comment):
//!
//! ```text
//! ap: a c          # alphabet, in letter bit order
//! states: 2        # states are 0..N-1
//! init: 0
//! nondet: 0        # initial component; every other state is deterministic
//! acc: 1
//! trans: 0 {a} 0   # letter edge, `{}` is the empty letter
//! eps: 0 1         # ε edge
//! ```

use std::fmt::Write as _;

use crate::graph::tarjan_scc;
use crate::ltl::{Alphabet, LassoWord, Letter};

/// Largest alphabet the explicit letter tables accept (2^16 letters per state).
pub const MAX_LDBA_ATOMS: usize = 16;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ldba {
    alphabet: Alphabet,
    initial: usize,
    nondet: Vec<bool>,
    accepting: Vec<bool>,
    /// `letters[q][letter]` is the sorted successor set.
    letters: Vec<Vec<Vec<usize>>>,
    epsilon: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub rule: &'static str,
    pub state: usize,
    pub letter: Option<Letter>,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    /// Non-fatal findings such as ε-cycles inside the initial component.
    pub warnings: Vec<Violation>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for v in &self.violations {
            writeln!(f, "[{}] state {}: {}", v.rule, v.state, v.message)?;
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AutomatonError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("automaton is not limit-deterministic:\n{0}")]
    Invalid(ValidationReport),
    #[error("unknown automaton state {0}")]
    UnknownState(usize),
    #[error("unknown bundled automaton {0:?}")]
    UnknownBundled(String),
}

impl Ldba {
    /// Builds an automaton without validating it.
    pub fn from_parts(
        alphabet: Alphabet,
        num_states: usize,
        initial: usize,
        nondet: &[usize],
        accepting: &[usize],
        letter_edges: &[(usize, Letter, usize)],
        epsilon_edges: &[(usize, usize)],
    ) -> Result<Self, AutomatonError> {
        let check = |q: usize| {
            if q < num_states {
                Ok(q)
            } else {
                Err(AutomatonError::UnknownState(q))
            }
        };
        if alphabet.len() > MAX_LDBA_ATOMS {
            return Err(AutomatonError::Parse {
                line: 0,
                msg: format!("at most {MAX_LDBA_ATOMS} propositions are supported"),
            });
        }
        check(initial)?;
        let mut nd = vec![false; num_states];
        for &q in nondet {
            nd[check(q)?] = true;
        }
        let mut acc = vec![false; num_states];
        for &q in accepting {
            acc[check(q)?] = true;
        }
        let letter_count = alphabet.letter_count();
        let mut letters = vec![vec![Vec::new(); letter_count]; num_states];
        for &(q, l, q2) in letter_edges {
            check(q)?;
            check(q2)?;
            if l.bits() as usize >= letter_count {
                return Err(AutomatonError::Parse {
                    line: 0,
                    msg: "letter outside alphabet".into(),
                });
            }
            let slot = &mut letters[q][l.bits() as usize];
            if !slot.contains(&q2) {
                slot.push(q2);
                slot.sort_unstable();
            }
        }
        let mut epsilon = vec![Vec::new(); num_states];
        for &(q, q2) in epsilon_edges {
            check(q)?;
            check(q2)?;
            if !epsilon[q].contains(&q2) {
                epsilon[q].push(q2);
                epsilon[q].sort_unstable();
            }
        }
        Ok(Self {
            alphabet,
            initial,
            nondet: nd,
            accepting: acc,
            letters,
            epsilon,
        })
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn num_states(&self) -> usize {
        self.nondet.len()
    }

    pub fn initial(&self) -> usize {
        self.initial
    }

    pub fn is_accepting(&self, q: usize) -> bool {
        self.accepting.get(q).copied().unwrap_or(false)
    }

    pub fn is_nondet(&self, q: usize) -> bool {
        self.nondet[q]
    }

    pub fn accepting_states(&self) -> Vec<usize> {
        (0..self.num_states())
            .filter(|&q| self.accepting[q])
            .collect()
    }

    pub fn nondet_states(&self) -> Vec<usize> {
        (0..self.num_states()).filter(|&q| self.nondet[q]).collect()
    }

    pub fn successors(&self, q: usize, letter: Letter) -> &[usize] {
        &self.letters[q][letter.bits() as usize]
    }

    /// The letter successor of `q`, or `None` when the automaton has no move.
    pub fn step(&self, q: usize, letter: Letter) -> Option<usize> {
        self.successors(q, letter).first().copied()
    }

    pub fn epsilon_successors(&self, q: usize) -> Result<&[usize], AutomatonError> {
        self.epsilon
            .get(q)
            .map(Vec::as_slice)
            .ok_or(AutomatonError::UnknownState(q))
    }

    pub fn max_epsilon_degree(&self) -> usize {
        self.epsilon.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Returns a copy with the letter edge `(q, letter)` redirected to `target`.
    pub fn with_edge_redirected(&self, q: usize, letter: Letter, target: Option<usize>) -> Ldba {
        let mut out = self.clone();
        out.letters[q][letter.bits() as usize] = target.into_iter().collect();
        out
    }

    /// Checks the limit-determinism conditions.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        let mut violate = |rule, state, letter, message: String| {
            report.violations.push(Violation {
                rule,
                state,
                letter,
                message,
            })
        };
        if !self.nondet[self.initial] {
            violate(
                "init-in-nondet",
                self.initial,
                None,
                "initial state must belong to the initial (nondeterministic) component".into(),
            );
        }
        for q in 0..self.num_states() {
            if self.accepting[q] && self.nondet[q] {
                violate(
                    "acc-in-det",
                    q,
                    None,
                    "accepting states must be deterministic".into(),
                );
            }
            for l in self.alphabet.letters() {
                let succ = self.successors(q, l);
                if succ.len() > 1 {
                    let rule = if self.nondet[q] {
                        "nondet-letter-unique"
                    } else {
                        "det-letter-unique"
                    };
                    violate(
                        rule,
                        q,
                        Some(l),
                        format!(
                            "{} letter successors on {}",
                            succ.len(),
                            self.alphabet.format_letter(l)
                        ),
                    );
                }
                if !self.nondet[q] {
                    if let Some(&bad) = succ.iter().find(|&&s| self.nondet[s]) {
                        violate(
                            "det-closed",
                            q,
                            Some(l),
                            format!(
                                "deterministic state moves to initial-component state {bad} on {}",
                                self.alphabet.format_letter(l)
                            ),
                        );
                    }
                }
            }
            if !self.nondet[q] && !self.epsilon[q].is_empty() {
                violate(
                    "det-no-epsilon",
                    q,
                    None,
                    "deterministic states may not have ε-transitions".into(),
                );
            }
        }

        // ε-cycles among reachable states: harmless for acceptance, but suspicious.
        let reachable = self.reachable_states();
        let eps_adj: Vec<Vec<usize>> = (0..self.num_states())
            .map(|q| {
                if reachable[q] {
                    self.epsilon[q]
                        .iter()
                        .copied()
                        .filter(|&s| reachable[s])
                        .collect()
                } else {
                    Vec::new()
                }
            })
            .collect();
        for comp in tarjan_scc(&eps_adj) {
            let q = comp[0];
            if comp.len() > 1 || eps_adj[q].contains(&q) {
                report.warnings.push(Violation {
                    rule: "epsilon-cycle",
                    state: q,
                    letter: None,
                    message: format!("ε-cycle through states {comp:?}"),
                });
            }
        }
        report
    }

    fn reachable_states(&self) -> Vec<bool> {
        let adj: Vec<Vec<usize>> = (0..self.num_states())
            .map(|q| {
                let mut s: Vec<usize> = self.letters[q].iter().flatten().copied().collect();
                s.extend_from_slice(&self.epsilon[q]);
                s.sort_unstable();
                s.dedup();
                s
            })
            .collect();
        crate::graph::forward_reachable(&adj, [self.initial])
    }

    /// Nodes `(position, state)` of an accepting strongly connected part of the run
    /// graph of `w`, if the word is accepted.
    ///
    /// The run graph has a node per (lasso position, automaton state), letter edges
    /// advancing the position and ε edges keeping it. A word is accepted iff a
    /// reachable SCC contains an accepting state and at least one letter edge.
    pub fn lasso_acceptance_witness(&self, w: &LassoWord) -> Option<Vec<(usize, usize)>> {
        let nq = self.num_states();
        let n = w.len();
        let node = |p: usize, q: usize| p * nq + q;
        let mut adj = vec![Vec::new(); n * nq];
        for p in 0..n {
            let letter = w.letter_at(p);
            let next = w.succ(p);
            for q in 0..nq {
                let v = node(p, q);
                adj[v].extend(self.successors(q, letter).iter().map(|&q2| node(next, q2)));
                adj[v].extend(self.epsilon[q].iter().map(|&q2| node(p, q2)));
            }
        }
        let reach = crate::graph::forward_reachable(&adj, [node(0, self.initial)]);
        let restricted: Vec<Vec<usize>> = adj
            .iter()
            .enumerate()
            .map(|(v, s)| if reach[v] { s.clone() } else { Vec::new() })
            .collect();
        for comp in tarjan_scc(&restricted) {
            if !reach[comp[0]] || !comp.iter().any(|&v| self.accepting[v % nq]) {
                continue;
            }
            let has_letter_edge = comp.iter().any(|&v| {
                let (p, q) = (v / nq, v % nq);
                let next = w.succ(p);
                self.successors(q, w.letter_at(p))
                    .iter()
                    .any(|&q2| comp.binary_search(&node(next, q2)).is_ok())
            });
            if has_letter_edge {
                return Some(comp.iter().map(|&v| (v / nq, v % nq)).collect());
            }
        }
        None
    }

    /// Büchi acceptance of an ultimately periodic word.
    pub fn accepts_lasso(&self, w: &LassoWord) -> bool {
        self.lasso_acceptance_witness(w).is_some()
    }

    /// Serialises to the text format, in a canonical order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let list = |v: Vec<usize>| {
            v.iter()
                .map(|q| q.to_string())
                .collect::<Vec<_>>()
                .join(" ")
        };
        writeln!(out, "ap: {}", self.alphabet.atoms().join(" ")).unwrap();
        writeln!(out, "states: {}", self.num_states()).unwrap();
        writeln!(out, "init: {}", self.initial).unwrap();
        writeln!(out, "nondet: {}", list(self.nondet_states())).unwrap();
        writeln!(out, "acc: {}", list(self.accepting_states())).unwrap();
        for q in 0..self.num_states() {
            for l in self.alphabet.letters() {
                for &q2 in self.successors(q, l) {
                    writeln!(out, "trans: {q} {} {q2}", self.alphabet.format_letter(l)).unwrap();
                }
            }
        }
        for q in 0..self.num_states() {
            for &q2 in &self.epsilon[q] {
                writeln!(out, "eps: {q} {q2}").unwrap();
            }
        }
        out
    }
}

/// Parses the text format without checking limit-determinism.
pub fn parse_ldba_unchecked(text: &str) -> Result<Ldba, AutomatonError> {
    let mut alphabet: Option<Alphabet> = None;
    let mut states: Option<usize> = None;
    let mut init: Option<usize> = None;
    let mut nondet: Option<Vec<usize>> = None;
    let mut acc: Vec<usize> = Vec::new();
    let mut letter_edges = Vec::new();
    let mut eps_edges = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let err = |msg: String| AutomatonError::Parse { line: line_no, msg };
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, rest) = line
            .split_once(':')
            .ok_or_else(|| err(format!("expected `key: value`, got {line:?}")))?;
        let rest = rest.trim();
        let states_n = states;
        let state = |tok: &str| -> Result<usize, AutomatonError> {
            let q: usize = tok
                .parse()
                .map_err(|_| err(format!("bad state index {tok:?}")))?;
            match states_n {
                Some(n) if q < n => Ok(q),
                Some(_) => Err(err(format!("state {q} out of range"))),
                None => Err(err("`states:` must precede state references".into())),
            }
        };
        match key.trim() {
            "ap" => {
                let ab = Alphabet::new(rest.split_whitespace()).map_err(|e| err(e.to_string()))?;
                if ab.len() > MAX_LDBA_ATOMS {
                    return Err(err(format!("at most {MAX_LDBA_ATOMS} propositions")));
                }
                alphabet = Some(ab);
            }
            "states" => {
                let n: usize = rest
                    .parse()
                    .map_err(|_| err(format!("bad state count {rest:?}")))?;
                if n == 0 {
                    return Err(err("automaton needs at least one state".into()));
                }
                states = Some(n);
            }
            "init" => init = Some(state(rest)?),
            "nondet" => {
                nondet = Some(
                    rest.split_whitespace()
                        .map(&state)
                        .collect::<Result<_, _>>()?,
                )
            }
            "acc" => {
                acc = rest
                    .split_whitespace()
                    .map(&state)
                    .collect::<Result<_, _>>()?
            }
            "trans" => {
                let ab = alphabet
                    .as_ref()
                    .ok_or_else(|| err("`ap:` must precede transitions".into()))?;
                let open = rest.find('{').ok_or_else(|| err("missing `{`".into()))?;
                let close = rest.find('}').ok_or_else(|| err("missing `}`".into()))?;
                if close < open {
                    return Err(err("malformed letter".into()));
                }
                let from = state(rest[..open].trim())?;
                let to = state(rest[close + 1..].trim())?;
                let names: Vec<&str> = rest[open + 1..close]
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .collect();
                let letter = ab.letter(names).map_err(|e| err(e.to_string()))?;
                letter_edges.push((from, letter, to));
            }
            "eps" => {
                let parts: Vec<&str> = rest.split_whitespace().collect();
                if parts.len() != 2 {
                    return Err(err("expected `eps: q q'`".into()));
                }
                eps_edges.push((state(parts[0])?, state(parts[1])?));
            }
            other => return Err(err(format!("unknown key {other:?}"))),
        }
    }
    let missing = |what: &str| AutomatonError::Parse {
        line: 0,
        msg: format!("missing `{what}:` line"),
    };
    let alphabet = alphabet.ok_or_else(|| missing("ap"))?;
    let states = states.ok_or_else(|| missing("states"))?;
    let init = init.ok_or_else(|| missing("init"))?;
    let nondet = nondet.ok_or_else(|| missing("nondet"))?;
    Ldba::from_parts(
        alphabet,
        states,
        init,
        &nondet,
        &acc,
        &letter_edges,
        &eps_edges,
    )
}

/// Parses and validates an automaton description.
pub fn load_ldba(text: &str) -> Result<Ldba, AutomatonError> {
    let a = parse_ldba_unchecked(text)?;
    let report = a.validate();
    if !report.ok() {
        return Err(AutomatonError::Invalid(report));
    }
    Ok(a)
}

/// A bundled automaton together with the formula it was built for.
#[derive(Clone, Copy, Debug)]
pub struct BundledAutomaton {
    pub name: &'static str,
    pub formula: &'static str,
    pub text: &'static str,
}

pub const BUNDLED: &[BundledAutomaton] = &[
    BundledAutomaton {
        name: "fga_gnc",
        formula: "F G a & G !c",
        text: include_str!("../data/automata/fga_gnc.ldba"),
    },
    BundledAutomaton {
        name: "frozen_lake",
        formula: "(G F a | G F b) & G !h",
        text: include_str!("../data/automata/frozen_lake.ldba"),
    },
    BundledAutomaton {
        name: "office",
        formula: "((G F a & G F b) | (F l & X (G F t & G F w))) & G !o",
        text: include_str!("../data/automata/office.ldba"),
    },
];

pub fn bundled(name: &str) -> Result<&'static BundledAutomaton, AutomatonError> {
    let name = name.strip_suffix(".ldba").unwrap_or(name);
    BUNDLED
        .iter()
        .find(|b| b.name == name)
        .ok_or_else(|| AutomatonError::UnknownBundled(name.to_string()))
}

pub fn load_bundled(name: &str) -> Result<Ldba, AutomatonError> {
    load_ldba(bundled(name)?.text)
}
