//! PRISM DTMC export and a parser for the exported subset.
//!
//! ```text
//! dtmc
//!
//! module ProductMDP
//!     m : [0..1] init 0;
//!     [] (m=0) -> 0.5 : (m'=0) + 0.5 : (m'=1);
//!     [] (m=1) -> 1 : (m'=1);
//! endmodule
//!
//! label "a" = (m=1);
//! label "accepting" = false;
//! ```

use std::fmt::Write as _;

use super::{Dtmc, McError, ROW_TOLERANCE};

/// Label marking product states whose automaton component is accepting.
pub const ACCEPTING_LABEL: &str = "accepting";

/// The content of an exported PRISM DTMC.
#[derive(Clone, Debug, PartialEq)]
pub struct PrismModel {
    pub init: usize,
    /// `rows[k]` lists `(target, probability)` in file order.
    pub rows: Vec<Vec<(usize, f64)>>,
    /// Labels in file order, each with its ascending state list.
    pub labels: Vec<(String, Vec<usize>)>,
}

impl PrismModel {
    pub fn from_dtmc(d: &Dtmc) -> Self {
        let rows = d
            .rows()
            .iter()
            .map(|r| r.iter().map(|t| (t.to, t.probability)).collect())
            .collect();
        let mut labels: Vec<(String, Vec<usize>)> = d
            .atoms()
            .iter()
            .enumerate()
            .map(|(i, a)| {
                (
                    a.clone(),
                    (0..d.len()).filter(|&k| d.label(k).contains(i)).collect(),
                )
            })
            .collect();
        labels.push((
            ACCEPTING_LABEL.to_string(),
            (0..d.len()).filter(|&k| d.is_accepting(k)).collect(),
        ));
        Self {
            init: d.init(),
            rows,
            labels,
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("dtmc\n\nmodule ProductMDP\n");
        let max = self.rows.len().saturating_sub(1);
        writeln!(out, "    m : [0..{max}] init {};", self.init).unwrap();
        for (k, row) in self.rows.iter().enumerate() {
            let rhs: Vec<String> = row
                .iter()
                .map(|&(j, p)| format!("{p} : (m'={j})"))
                .collect();
            writeln!(out, "    [] (m={k}) -> {};", rhs.join(" + ")).unwrap();
        }
        out.push_str("endmodule\n\n");
        for (name, states) in &self.labels {
            let body = if states.is_empty() {
                "false".to_string()
            } else {
                states
                    .iter()
                    .map(|k| format!("(m={k})"))
                    .collect::<Vec<_>>()
                    .join(" | ")
            };
            writeln!(out, "label \"{name}\" = {body};").unwrap();
        }
        out
    }

    /// Largest deviation of a row sum from 1.
    pub fn max_row_error(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| (r.iter().map(|&(_, p)| p).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Renders the DTMC as a PRISM model with one integer state variable.
///
/// Probabilities are printed in the shortest form that parses back to the same
/// `f64`, so the text is exact and byte-deterministic.
pub fn export_prism(d: &Dtmc) -> String {
    PrismModel::from_dtmc(d).to_text()
}

fn err(line: usize, msg: impl Into<String>) -> McError {
    McError::Prism {
        line,
        msg: msg.into(),
    }
}

fn parse_state_ref(line: usize, s: &str, var: &str) -> Result<usize, McError> {
    let inner = s
        .trim()
        .strip_prefix('(')
        .and_then(|x| x.strip_suffix(')'))
        .and_then(|x| x.trim().strip_prefix(var))
        .and_then(|x| x.trim().strip_prefix('='))
        .ok_or_else(|| err(line, format!("expected ({var}=<k>), found {s:?}")))?;
    inner
        .trim()
        .parse()
        .map_err(|e| err(line, format!("state index: {e}")))
}

/// Parses text in the form written by [`export_prism`].
pub fn parse_prism(text: &str) -> Result<PrismModel, McError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with("//"));
    let mut expect = |want: &str| -> Result<usize, McError> {
        match lines.next() {
            Some((n, l)) if l == want => Ok(n),
            Some((n, l)) => Err(err(n, format!("expected {want:?}, found {l:?}"))),
            None => Err(err(0, format!("missing {want:?}"))),
        }
    };
    expect("dtmc")?;
    expect("module ProductMDP")?;
    let (decl_line, decl) = lines
        .next()
        .ok_or_else(|| err(0, "missing variable declaration"))?;
    let rest = decl
        .strip_prefix("m : [0..")
        .and_then(|r| r.strip_suffix(';'))
        .ok_or_else(|| err(decl_line, "expected `m : [0..N] init k;`"))?;
    let (max, init) = rest
        .split_once("] init ")
        .ok_or_else(|| err(decl_line, "expected `init`"))?;
    let max: usize = max
        .trim()
        .parse()
        .map_err(|e| err(decl_line, format!("{e}")))?;
    let init: usize = init
        .trim()
        .parse()
        .map_err(|e| err(decl_line, format!("{e}")))?;
    let n = max + 1;
    let mut rows: Vec<Option<Vec<(usize, f64)>>> = vec![None; n];
    let mut labels = Vec::new();
    let mut in_module = true;
    for (ln, l) in lines {
        if in_module {
            if l == "endmodule" {
                in_module = false;
                continue;
            }
            let body = l
                .strip_prefix("[]")
                .and_then(|r| r.strip_suffix(';'))
                .ok_or_else(|| err(ln, "expected a `[] guard -> updates;` command"))?;
            let (guard, updates) = body
                .split_once("->")
                .ok_or_else(|| err(ln, "missing `->`"))?;
            let k = parse_state_ref(ln, guard, "m")?;
            if k >= n {
                return Err(err(ln, format!("state {k} outside [0..{max}]")));
            }
            let mut row = Vec::new();
            for upd in updates.split('+') {
                let (p, target) = upd
                    .split_once(':')
                    .ok_or_else(|| err(ln, "expected `p : (m'=j)`"))?;
                let p: f64 = p
                    .trim()
                    .parse()
                    .map_err(|e| err(ln, format!("probability: {e}")))?;
                let j = parse_state_ref(ln, target, "m'")?;
                if j >= n {
                    return Err(err(ln, format!("target {j} outside [0..{max}]")));
                }
                row.push((j, p));
            }
            let sum: f64 = row.iter().map(|&(_, p)| p).sum();
            if (sum - 1.0).abs() > ROW_TOLERANCE {
                return Err(err(ln, format!("probabilities sum to {sum}")));
            }
            if rows[k].replace(row).is_some() {
                return Err(err(ln, format!("second command for state {k}")));
            }
        } else {
            let body = l
                .strip_prefix("label \"")
                .and_then(|r| r.strip_suffix(';'))
                .ok_or_else(|| err(ln, "expected `label \"x\" = ...;`"))?;
            let (name, expr) = body
                .split_once("\" =")
                .ok_or_else(|| err(ln, "malformed label"))?;
            let states = match expr.trim() {
                "false" => Vec::new(),
                e => e
                    .split('|')
                    .map(|s| parse_state_ref(ln, s, "m"))
                    .collect::<Result<Vec<_>, _>>()?,
            };
            labels.push((name.to_string(), states));
        }
    }
    if in_module {
        return Err(err(0, "missing endmodule"));
    }
    let rows = rows
        .into_iter()
        .enumerate()
        .map(|(k, r)| r.ok_or_else(|| err(0, format!("no command for state {k}"))))
        .collect::<Result<_, _>>()?;
    Ok(PrismModel { init, rows, labels })
}
