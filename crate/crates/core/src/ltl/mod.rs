//! Linear temporal logic: formulas, letters over an alphabet, and lasso words.

mod lasso;
mod parse;

pub use lasso::{lasso_satisfies, random_lasso, LassoWord};
pub use parse::{parse_ltl, ParseError};

use std::fmt;

/// Maximum number of atomic propositions in one alphabet (letters are `u64` bitmasks).
pub const MAX_ATOMS: usize = 64;

/// Returns true if `name` is a valid atomic proposition identifier.
pub fn is_valid_atom(name: &str) -> bool {
    !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
        && name != "true"
        && name != "false"
}

/// An ordered set of atomic proposition names. Letters are bitmasks over this order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Alphabet {
    atoms: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AlphabetError {
    #[error("invalid atomic proposition name {0:?}")]
    InvalidName(String),
    #[error("duplicate atomic proposition {0:?}")]
    Duplicate(String),
    #[error("alphabet has more than {MAX_ATOMS} propositions")]
    TooLarge,
    #[error("proposition {0:?} is not in the alphabet")]
    Unknown(String),
}

impl Alphabet {
    pub fn new<I, S>(atoms: I) -> Result<Self, AlphabetError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut out: Vec<String> = Vec::new();
        for a in atoms {
            let a = a.into();
            if !is_valid_atom(&a) {
                return Err(AlphabetError::InvalidName(a));
            }
            if out.contains(&a) {
                return Err(AlphabetError::Duplicate(a));
            }
            out.push(a);
        }
        if out.len() > MAX_ATOMS {
            return Err(AlphabetError::TooLarge);
        }
        Ok(Self { atoms: out })
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atoms(&self) -> &[String] {
        &self.atoms
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.atoms.iter().position(|a| a == name)
    }

    /// Number of distinct letters, `2^|AP|`.
    pub fn letter_count(&self) -> usize {
        1usize << self.atoms.len()
    }

    pub fn letter<'a, I>(&self, names: I) -> Result<Letter, AlphabetError>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut bits = 0u64;
        for n in names {
            let i = self
                .index_of(n)
                .ok_or_else(|| AlphabetError::Unknown(n.to_string()))?;
            bits |= 1 << i;
        }
        Ok(Letter(bits))
    }

    /// Iterates all letters in bitmask order.
    pub fn letters(&self) -> impl Iterator<Item = Letter> {
        (0..self.letter_count() as u64).map(Letter)
    }

    /// Renders a letter as `{a,c}`.
    pub fn format_letter(&self, letter: Letter) -> String {
        let names: Vec<&str> = self
            .atoms
            .iter()
            .enumerate()
            .filter(|(i, _)| letter.contains(*i))
            .map(|(_, a)| a.as_str())
            .collect();
        format!("{{{}}}", names.join(","))
    }
}

/// A set of atomic propositions, stored as a bitmask relative to an [`Alphabet`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Letter(pub u64);

impl Letter {
    pub const EMPTY: Letter = Letter(0);

    pub fn contains(self, atom_index: usize) -> bool {
        self.0 >> atom_index & 1 == 1
    }

    pub fn bits(self) -> u64 {
        self.0
    }
}

/// Abstract syntax tree of an LTL formula. Derived operators are kept explicitly.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum LtlFormula {
    True,
    Atom(String),
    Not(Box<LtlFormula>),
    And(Box<LtlFormula>, Box<LtlFormula>),
    Or(Box<LtlFormula>, Box<LtlFormula>),
    Implies(Box<LtlFormula>, Box<LtlFormula>),
    Next(Box<LtlFormula>),
    Until(Box<LtlFormula>, Box<LtlFormula>),
    Eventually(Box<LtlFormula>),
    Always(Box<LtlFormula>),
}

impl LtlFormula {
    pub fn atom(name: impl Into<String>) -> Self {
        LtlFormula::Atom(name.into())
    }
    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Self) -> Self {
        LtlFormula::Not(Box::new(f))
    }
    pub fn and(a: Self, b: Self) -> Self {
        LtlFormula::And(Box::new(a), Box::new(b))
    }
    pub fn or(a: Self, b: Self) -> Self {
        LtlFormula::Or(Box::new(a), Box::new(b))
    }
    pub fn implies(a: Self, b: Self) -> Self {
        LtlFormula::Implies(Box::new(a), Box::new(b))
    }
    pub fn next(f: Self) -> Self {
        LtlFormula::Next(Box::new(f))
    }
    pub fn until(a: Self, b: Self) -> Self {
        LtlFormula::Until(Box::new(a), Box::new(b))
    }
    pub fn eventually(f: Self) -> Self {
        LtlFormula::Eventually(Box::new(f))
    }
    pub fn always(f: Self) -> Self {
        LtlFormula::Always(Box::new(f))
    }

    /// Atom names in order of first occurrence.
    pub fn atoms(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms(&self, out: &mut Vec<String>) {
        match self {
            LtlFormula::True => {}
            LtlFormula::Atom(a) => {
                if !out.contains(a) {
                    out.push(a.clone());
                }
            }
            LtlFormula::Not(f)
            | LtlFormula::Next(f)
            | LtlFormula::Eventually(f)
            | LtlFormula::Always(f) => f.collect_atoms(out),
            LtlFormula::And(a, b)
            | LtlFormula::Or(a, b)
            | LtlFormula::Implies(a, b)
            | LtlFormula::Until(a, b) => {
                a.collect_atoms(out);
                b.collect_atoms(out);
            }
        }
    }

    fn is_leaf(&self) -> bool {
        matches!(self, LtlFormula::True | LtlFormula::Atom(_))
    }

    fn is_unary(&self) -> bool {
        matches!(
            self,
            LtlFormula::Not(_)
                | LtlFormula::Next(_)
                | LtlFormula::Eventually(_)
                | LtlFormula::Always(_)
        )
    }
}

/// Prints a formula in the ASCII concrete syntax accepted by [`parse_ltl`].
pub fn format_ltl(f: &LtlFormula) -> String {
    f.to_string()
}

struct UnaryOperand<'a>(&'a LtlFormula);
struct BinaryOperand<'a>(&'a LtlFormula);

impl fmt::Display for UnaryOperand<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_leaf() || self.0.is_unary() {
            write!(f, "{}", self.0)
        } else {
            write!(f, "({})", self.0)
        }
    }
}

impl fmt::Display for BinaryOperand<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_leaf() {
            write!(f, "{}", self.0)
        } else {
            write!(f, "({})", self.0)
        }
    }
}

impl fmt::Display for LtlFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use LtlFormula::*;
        match self {
            True => write!(f, "true"),
            Atom(a) => write!(f, "{a}"),
            Not(x) => write!(f, "!{}", UnaryOperand(x)),
            Next(x) => write!(f, "X {}", UnaryOperand(x)),
            Eventually(x) => write!(f, "F {}", UnaryOperand(x)),
            Always(x) => write!(f, "G {}", UnaryOperand(x)),
            And(a, b) => write!(f, "{} & {}", BinaryOperand(a), BinaryOperand(b)),
            Or(a, b) => write!(f, "{} | {}", BinaryOperand(a), BinaryOperand(b)),
            Implies(a, b) => write!(f, "{} -> {}", BinaryOperand(a), BinaryOperand(b)),
            Until(a, b) => write!(f, "{} U {}", BinaryOperand(a), BinaryOperand(b)),
        }
    }
}
