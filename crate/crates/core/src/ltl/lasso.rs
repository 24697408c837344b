use rand::Rng;

use super::{Alphabet, Letter, LtlFormula};

/// The ultimately periodic word `stem · loop^ω`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LassoWord {
    pub stem: Vec<Letter>,
    pub cycle: Vec<Letter>,
}

impl LassoWord {
    /// Panics if `cycle` is empty.
    pub fn new(stem: Vec<Letter>, cycle: Vec<Letter>) -> Self {
        assert!(!cycle.is_empty(), "lasso loop must be non-empty");
        Self { stem, cycle }
    }

    /// Number of distinct positions, `|stem| + |loop|`.
    pub fn len(&self) -> usize {
        self.stem.len() + self.cycle.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn letter_at(&self, pos: usize) -> Letter {
        if pos < self.stem.len() {
            self.stem[pos]
        } else {
            self.cycle[(pos - self.stem.len()) % self.cycle.len()]
        }
    }

    /// Successor of a position in the finite representation.
    pub fn succ(&self, pos: usize) -> usize {
        if pos + 1 < self.len() {
            pos + 1
        } else {
            self.stem.len()
        }
    }

    /// The suffix starting one position later.
    pub fn shift(&self) -> LassoWord {
        if self.stem.is_empty() {
            let mut cycle = self.cycle.clone();
            cycle.rotate_left(1);
            LassoWord::new(Vec::new(), cycle)
        } else {
            LassoWord::new(self.stem[1..].to_vec(), self.cycle.clone())
        }
    }

    /// Same infinite word with the loop written twice.
    pub fn unrolled(&self) -> LassoWord {
        let mut cycle = self.cycle.clone();
        cycle.extend_from_slice(&self.cycle);
        LassoWord::new(self.stem.clone(), cycle)
    }
}

/// Draws a lasso with stem length in `0..=max_stem` and loop length in
/// `1..=max_loop`, every letter uniform over `alphabet`.
pub fn random_lasso<R: Rng + ?Sized>(
    alphabet: &Alphabet,
    max_stem: usize,
    max_loop: usize,
    rng: &mut R,
) -> LassoWord {
    let letters = alphabet.letter_count() as u64;
    let stem_len = rng.gen_range(0..=max_stem);
    let loop_len = rng.gen_range(1..=max_loop.max(1));
    let mut draw = |len: usize| {
        (0..len)
            .map(|_| Letter(rng.gen_range(0..letters)))
            .collect::<Vec<_>>()
    };
    let stem = draw(stem_len);
    LassoWord::new(stem, draw(loop_len))
}

/// Decides whether `stem · loop^ω` satisfies `f`.
///
/// Each subformula is evaluated at every position of the finite representation.
/// `U`/`F` are least fixpoints and `G` a greatest fixpoint over the successor
/// relation; sweeps are repeated until stable. Atoms absent from `alphabet` are false.
pub fn lasso_satisfies(f: &LtlFormula, alphabet: &Alphabet, w: &LassoWord) -> bool {
    eval(f, alphabet, w)[0]
}

fn eval(f: &LtlFormula, ab: &Alphabet, w: &LassoWord) -> Vec<bool> {
    let n = w.len();
    match f {
        LtlFormula::True => vec![true; n],
        LtlFormula::Atom(a) => match ab.index_of(a) {
            Some(i) => (0..n).map(|p| w.letter_at(p).contains(i)).collect(),
            None => vec![false; n],
        },
        LtlFormula::Not(x) => eval(x, ab, w).into_iter().map(|b| !b).collect(),
        LtlFormula::And(x, y) => zip(eval(x, ab, w), eval(y, ab, w), |a, b| a && b),
        LtlFormula::Or(x, y) => zip(eval(x, ab, w), eval(y, ab, w), |a, b| a || b),
        LtlFormula::Implies(x, y) => zip(eval(x, ab, w), eval(y, ab, w), |a, b| !a || b),
        LtlFormula::Next(x) => {
            let inner = eval(x, ab, w);
            (0..n).map(|p| inner[w.succ(p)]).collect()
        }
        LtlFormula::Until(x, y) => {
            let hold = eval(x, ab, w);
            let goal = eval(y, ab, w);
            fixpoint(w, false, |p, next| goal[p] || (hold[p] && next))
        }
        LtlFormula::Eventually(x) => {
            let goal = eval(x, ab, w);
            fixpoint(w, false, |p, next| goal[p] || next)
        }
        LtlFormula::Always(x) => {
            let hold = eval(x, ab, w);
            fixpoint(w, true, |p, next| hold[p] && next)
        }
    }
}

fn zip(a: Vec<bool>, b: Vec<bool>, op: impl Fn(bool, bool) -> bool) -> Vec<bool> {
    a.into_iter().zip(b).map(|(x, y)| op(x, y)).collect()
}

fn fixpoint(w: &LassoWord, init: bool, step: impl Fn(usize, bool) -> bool) -> Vec<bool> {
    let n = w.len();
    let mut val = vec![init; n];
    loop {
        let mut changed = false;
        for p in (0..n).rev() {
            let v = step(p, val[w.succ(p)]);
            if v != val[p] {
                val[p] = v;
                changed = true;
            }
        }
        if !changed {
            return val;
        }
    }
}
