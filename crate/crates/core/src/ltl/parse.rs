use super::LtlFormula;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("empty formula")]
    Empty,
    #[error("unknown token {found:?} at position {pos}")]
    UnknownToken { pos: usize, found: String },
    #[error("syntax error at position {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    True,
    False,
    Ident(String),
    Not,
    And,
    Or,
    Implies,
    Next,
    Until,
    Eventually,
    Always,
    LParen,
    RParen,
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let start = i;
        let tok = match c {
            c if c.is_whitespace() => {
                i += 1;
                continue;
            }
            '!' | '¬' | '~' => Tok::Not,
            '&' | '∧' => {
                if chars.get(i + 1) == Some(&'&') {
                    i += 1;
                }
                Tok::And
            }
            '|' | '∨' => {
                if chars.get(i + 1) == Some(&'|') {
                    i += 1;
                }
                Tok::Or
            }
            '→' => Tok::Implies,
            '-' if chars.get(i + 1) == Some(&'>') => {
                i += 1;
                Tok::Implies
            }
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            'X' => Tok::Next,
            'U' => Tok::Until,
            'F' => Tok::Eventually,
            'G' => Tok::Always,
            c if c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_' => {
                let mut j = i;
                while j < chars.len()
                    && (chars[j].is_ascii_lowercase()
                        || chars[j].is_ascii_digit()
                        || chars[j] == '_')
                {
                    j += 1;
                }
                let word: String = chars[i..j].iter().collect();
                i = j;
                let tok = match word.as_str() {
                    "true" => Tok::True,
                    "false" => Tok::False,
                    _ => Tok::Ident(word),
                };
                out.push((start, tok));
                continue;
            }
            other => {
                return Err(ParseError::UnknownToken {
                    pos: start,
                    found: other.to_string(),
                })
            }
        };
        i += 1;
        out.push((start, tok));
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn here(&self) -> usize {
        self.toks.get(self.pos).map(|(p, _)| *p).unwrap_or(self.end)
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == Some(t) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn implies(&mut self) -> Result<LtlFormula, ParseError> {
        let lhs = self.or()?;
        if self.eat(&Tok::Implies) {
            let rhs = self.implies()?;
            return Ok(LtlFormula::implies(lhs, rhs));
        }
        Ok(lhs)
    }

    fn or(&mut self) -> Result<LtlFormula, ParseError> {
        let mut lhs = self.and()?;
        while self.eat(&Tok::Or) {
            let rhs = self.and()?;
            lhs = LtlFormula::or(lhs, rhs);
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<LtlFormula, ParseError> {
        let mut lhs = self.until()?;
        while self.eat(&Tok::And) {
            let rhs = self.until()?;
            lhs = LtlFormula::and(lhs, rhs);
        }
        Ok(lhs)
    }

    fn until(&mut self) -> Result<LtlFormula, ParseError> {
        let lhs = self.unary()?;
        if self.eat(&Tok::Until) {
            let rhs = self.until()?;
            return Ok(LtlFormula::until(lhs, rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<LtlFormula, ParseError> {
        let wrap: fn(LtlFormula) -> LtlFormula = match self.peek() {
            Some(Tok::Not) => LtlFormula::not,
            Some(Tok::Next) => LtlFormula::next,
            Some(Tok::Eventually) => LtlFormula::eventually,
            Some(Tok::Always) => LtlFormula::always,
            _ => return self.primary(),
        };
        self.pos += 1;
        Ok(wrap(self.unary()?))
    }

    fn primary(&mut self) -> Result<LtlFormula, ParseError> {
        let pos = self.here();
        let Some((_, tok)) = self.toks.get(self.pos).cloned() else {
            return Err(ParseError::Syntax {
                pos,
                msg: "unexpected end of formula".into(),
            });
        };
        self.pos += 1;
        match tok {
            Tok::True => Ok(LtlFormula::True),
            Tok::False => Ok(LtlFormula::not(LtlFormula::True)),
            Tok::Ident(name) => Ok(LtlFormula::Atom(name)),
            Tok::LParen => {
                let inner = self.implies()?;
                if !self.eat(&Tok::RParen) {
                    return Err(ParseError::Syntax {
                        pos: self.here(),
                        msg: "expected ')'".into(),
                    });
                }
                Ok(inner)
            }
            other => Err(ParseError::Syntax {
                pos,
                msg: format!("unexpected {other:?}"),
            }),
        }
    }
}

/// Parses an LTL formula.
///
/// Unary operators (`!`, `X`, `F`, `G`) bind tightest, then `U` (right
/// associative), then `&`, then `|`, then `->` (right associative).
/// `¬`, `∧`, `∨` and `→` are accepted as synonyms; `false` is read as `!true`.
pub fn parse_ltl(text: &str) -> Result<LtlFormula, ParseError> {
    let toks = lex(text)?;
    if toks.is_empty() {
        return Err(ParseError::Empty);
    }
    let mut p = Parser {
        toks,
        pos: 0,
        end: text.chars().count(),
    };
    let f = p.implies()?;
    if p.pos != p.toks.len() {
        return Err(ParseError::Syntax {
            pos: p.here(),
            msg: "trailing input".into(),
        });
    }
    Ok(f)
}
