//! Line-oriented reaction DSL.
//!
//! ```text
//! # diatomic formation plus a bath coupling
//! A + A <k_1=1.0> A2
//! 0 <k_2=0.01> A
//! energy A2 = 1.1
//! ```
//!
//! Statements are separated by newlines or `;`, `#` starts a comment. A side
//! is `0` (the bath) or `term + term ...` with `term := [integer] name`.
//! The arrow is `<k=RATE>`, `<k2=RATE>` or `<k_2=RATE>`. `energy NAME = E`
//! sets a ground-state energy (default 0) of a species used in a reaction.

use std::collections::HashMap;

use super::{NetworkError, Reaction, ReactionNetwork, Species, Term};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(String),
    Plus,
    Lt,
    Gt,
    Eq,
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    column: usize,
}

impl Spanned {
    fn describe(&self) -> String {
        match &self.tok {
            Tok::Ident(s) | Tok::Number(s) => format!("{s:?}"),
            Tok::Plus => "'+'".into(),
            Tok::Lt => "'<'".into(),
            Tok::Gt => "'>'".into(),
            Tok::Eq => "'='".into(),
        }
    }
}

/// Splits the text into statements of tokens. Positions are 1-based.
fn lex(text: &str) -> Result<Vec<Vec<Spanned>>, NetworkError> {
    let mut statements = Vec::new();
    for (li, raw) in text.lines().enumerate() {
        let line = li + 1;
        let chars: Vec<char> = raw.chars().collect();
        let mut current = Vec::new();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let column = i + 1;
            let single = |tok| Spanned { tok, line, column };
            match c {
                '#' => break,
                ';' => statements.push(std::mem::take(&mut current)),
                c if c.is_whitespace() => {}
                '+' => current.push(single(Tok::Plus)),
                '<' => current.push(single(Tok::Lt)),
                '>' => current.push(single(Tok::Gt)),
                '=' => current.push(single(Tok::Eq)),
                c if c.is_ascii_alphabetic() => {
                    let start = i;
                    while i + 1 < chars.len() && (chars[i + 1].is_ascii_alphanumeric() || chars[i + 1] == '_') {
                        i += 1;
                    }
                    let s: String = chars[start..=i].iter().collect();
                    current.push(single(Tok::Ident(s)));
                }
                c if c.is_ascii_digit() || c == '.' || c == '-' => {
                    let start = i;
                    let digitish = |ch: char| ch.is_ascii_digit() || ch == '.';
                    while i + 1 < chars.len() && digitish(chars[i + 1]) {
                        i += 1;
                    }
                    // exponent only when followed by a digit (optionally signed)
                    if i + 1 < chars.len() && matches!(chars[i + 1], 'e' | 'E') {
                        let mut j = i + 2;
                        if j < chars.len() && matches!(chars[j], '+' | '-') {
                            j += 1;
                        }
                        if j < chars.len() && chars[j].is_ascii_digit() {
                            i = j;
                            while i + 1 < chars.len() && chars[i + 1].is_ascii_digit() {
                                i += 1;
                            }
                        }
                    }
                    let s: String = chars[start..=i].iter().collect();
                    current.push(single(Tok::Number(s)));
                }
                other => {
                    return Err(NetworkError::UnknownToken {
                        line,
                        column,
                        token: other.to_string(),
                    })
                }
            }
            i += 1;
        }
        statements.push(current);
    }
    Ok(statements.into_iter().filter(|s| !s.is_empty()).collect())
}

struct Builder {
    species: Vec<Species>,
    reactions: Vec<Reaction>,
    labels: HashMap<u32, f64>,
    energies: Vec<(String, f64, usize, usize)>,
}

impl Builder {
    fn species_id(&mut self, name: &str) -> usize {
        match self.species.iter().position(|s| s.name == name) {
            Some(i) => i,
            None => {
                self.species.push(Species {
                    name: name.to_string(),
                    ground_energy: 0.0,
                });
                self.species.len() - 1
            }
        }
    }
}

struct Cursor<'a> {
    toks: &'a [Spanned],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<&'a Spanned> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<&'a Spanned> {
        let t = self.toks.get(self.pos);
        self.pos += 1;
        t
    }

    /// Position just after the last token, for "unexpected end" errors.
    fn end_position(&self) -> (usize, usize) {
        let last = self.toks.last().expect("statements are non-empty");
        let width = match &last.tok {
            Tok::Ident(s) | Tok::Number(s) => s.chars().count(),
            _ => 1,
        };
        (last.line, last.column + width)
    }

    fn syntax_here(&self, message: impl Into<String>) -> NetworkError {
        let (line, column) = match self.peek() {
            Some(t) => (t.line, t.column),
            None => self.end_position(),
        };
        NetworkError::Syntax {
            line,
            column,
            message: message.into(),
        }
    }
}

fn parse_float(t: &Spanned) -> Result<f64, NetworkError> {
    match &t.tok {
        Tok::Number(s) => s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| NetworkError::Syntax {
            line: t.line,
            column: t.column,
            message: format!("malformed number {s:?}"),
        }),
        _ => Err(NetworkError::Syntax {
            line: t.line,
            column: t.column,
            message: format!("expected a number, found {}", t.describe()),
        }),
    }
}

/// Parses one side up to (not including) the arrow or the end of statement.
fn parse_side(cur: &mut Cursor<'_>, b: &mut Builder) -> Result<Vec<Term>, NetworkError> {
    let mut terms: Vec<Term> = Vec::new();
    let mut first = true;
    loop {
        let start = cur.peek();
        let mut coefficient = 1u32;
        if let Some(Spanned { tok: Tok::Number(s), line, column }) = start {
            let (line, column) = (*line, *column);
            let value: i64 = s.parse().map_err(|_| NetworkError::Syntax {
                line,
                column,
                message: format!("stoichiometric coefficient must be an integer, found {s:?}"),
            })?;
            cur.next();
            let followed_by_name = matches!(cur.peek(), Some(Spanned { tok: Tok::Ident(_), .. }));
            if value == 0 && first && !followed_by_name {
                return Ok(Vec::new());
            }
            if value <= 0 {
                return Err(NetworkError::NonPositiveCoefficient { line, column });
            }
            coefficient = u32::try_from(value).map_err(|_| NetworkError::Syntax {
                line,
                column,
                message: "coefficient too large".into(),
            })?;
        }
        let name = match cur.next() {
            Some(Spanned { tok: Tok::Ident(s), .. }) => s.clone(),
            Some(t) => {
                return Err(NetworkError::Syntax {
                    line: t.line,
                    column: t.column,
                    message: format!("expected a species name, found {}", t.describe()),
                })
            }
            None => {
                let (line, column) = cur.end_position();
                return Err(NetworkError::Syntax {
                    line,
                    column,
                    message: "expected a species name".into(),
                });
            }
        };
        let id = b.species_id(&name);
        match terms.iter_mut().find(|t| t.species == id) {
            Some(t) => t.coefficient += coefficient,
            None => terms.push(Term { species: id, coefficient }),
        }
        first = false;
        match cur.peek() {
            Some(plus @ Spanned { tok: Tok::Plus, .. }) => {
                cur.next();
                let dangling = match cur.peek() {
                    None => true,
                    Some(t) => !matches!(t.tok, Tok::Ident(_) | Tok::Number(_)),
                };
                if dangling {
                    return Err(NetworkError::Syntax {
                        line: plus.line,
                        column: plus.column,
                        message: "dangling '+' without a following term".into(),
                    });
                }
            }
            _ => return Ok(terms),
        }
    }
}

/// `<k=…>`, `<k2=…>` or `<k_2=…>`; returns the label and the rate.
fn parse_arrow(cur: &mut Cursor<'_>) -> Result<(Option<u32>, f64), NetworkError> {
    match cur.next() {
        Some(Spanned { tok: Tok::Lt, .. }) => {}
        _ => {
            cur.pos -= 1;
            return Err(cur.syntax_here("expected a rate arrow '<k=…>'"));
        }
    }
    let label = match cur.next() {
        Some(t @ Spanned { tok: Tok::Ident(s), .. }) => {
            let rest = s.strip_prefix('k').ok_or_else(|| NetworkError::Syntax {
                line: t.line,
                column: t.column,
                message: format!("rate symbol must start with 'k', found {s:?}"),
            })?;
            let digits = rest.strip_prefix('_').unwrap_or(rest);
            if rest.is_empty() {
                None
            } else {
                Some(digits.parse::<u32>().map_err(|_| NetworkError::Syntax {
                    line: t.line,
                    column: t.column,
                    message: format!("malformed rate symbol {s:?}"),
                })?)
            }
        }
        _ => {
            cur.pos -= 1;
            return Err(cur.syntax_here("expected rate symbol 'k'"));
        }
    };
    if !matches!(cur.next(), Some(Spanned { tok: Tok::Eq, .. })) {
        cur.pos -= 1;
        return Err(cur.syntax_here("expected '=' in rate arrow"));
    }
    let value_tok = match cur.next() {
        Some(t) => t,
        None => return Err(cur.syntax_here("expected a rate value")),
    };
    let rate = parse_float(value_tok)?;
    if rate < 0.0 {
        return Err(NetworkError::Syntax {
            line: value_tok.line,
            column: value_tok.column,
            message: "rates must be non-negative".into(),
        });
    }
    if !matches!(cur.next(), Some(Spanned { tok: Tok::Gt, .. })) {
        cur.pos -= 1;
        return Err(cur.syntax_here("expected '>' closing the rate arrow"));
    }
    Ok((label, rate))
}

fn parse_energy(cur: &mut Cursor<'_>, b: &mut Builder) -> Result<(), NetworkError> {
    cur.next();
    let (name, line, column) = match cur.next() {
        Some(Spanned { tok: Tok::Ident(s), line, column }) => (s.clone(), *line, *column),
        _ => {
            cur.pos -= 1;
            return Err(cur.syntax_here("expected a species name after 'energy'"));
        }
    };
    if !matches!(cur.next(), Some(Spanned { tok: Tok::Eq, .. })) {
        cur.pos -= 1;
        return Err(cur.syntax_here("expected '='"));
    }
    let value = match cur.next() {
        Some(t) => parse_float(t)?,
        None => return Err(cur.syntax_here("expected an energy value")),
    };
    if let Some(t) = cur.peek() {
        return Err(NetworkError::Syntax {
            line: t.line,
            column: t.column,
            message: format!("unexpected {} after energy statement", t.describe()),
        });
    }
    b.energies.push((name, value, line, column));
    Ok(())
}

fn parse_reaction(cur: &mut Cursor<'_>, b: &mut Builder) -> Result<(), NetworkError> {
    let line = cur.peek().map(|t| t.line).unwrap_or(0);
    let reactants = parse_side(cur, b)?;
    let arrow = cur.peek().cloned();
    let (label, rate) = parse_arrow(cur)?;
    let products = parse_side(cur, b)?;
    if let Some(t) = cur.peek() {
        if t.tok == Tok::Lt {
            return Err(NetworkError::DuplicateRate {
                line: t.line,
                column: t.column,
                message: "a reaction carries exactly one rate arrow".into(),
            });
        }
        return Err(NetworkError::Syntax {
            line: t.line,
            column: t.column,
            message: format!("unexpected {}", t.describe()),
        });
    }
    if let Some(l) = label {
        match b.labels.get(&l) {
            Some(&prev) if prev != rate => {
                let a = arrow.expect("arrow was parsed");
                return Err(NetworkError::DuplicateRate {
                    line: a.line,
                    column: a.column,
                    message: format!("k_{l} already defined as {prev}"),
                });
            }
            _ => {
                b.labels.insert(l, rate);
            }
        }
    }
    for t in &reactants {
        if products.iter().any(|p| p.species == t.species) {
            return Err(NetworkError::SpeciesOnBothSides {
                name: b.species[t.species].name.clone(),
                line,
            });
        }
    }
    b.reactions.push(Reaction {
        reactants,
        products,
        rate,
        rate_label: label,
    });
    Ok(())
}

/// Parses the reaction DSL. Species are numbered in order of first
/// appearance.
pub fn parse_network(text: &str) -> Result<ReactionNetwork, NetworkError> {
    let mut b = Builder {
        species: Vec::new(),
        reactions: Vec::new(),
        labels: HashMap::new(),
        energies: Vec::new(),
    };
    for statement in lex(text)? {
        let mut cur = Cursor { toks: &statement, pos: 0 };
        let is_energy = matches!(
            (&statement[0].tok, statement.get(1).map(|t| &t.tok)),
            (Tok::Ident(s), Some(Tok::Ident(_))) if s == "energy"
        );
        if is_energy {
            parse_energy(&mut cur, &mut b)?;
        } else {
            parse_reaction(&mut cur, &mut b)?;
        }
    }
    for (name, value, line, column) in std::mem::take(&mut b.energies) {
        match b.species.iter_mut().find(|s| s.name == name) {
            Some(s) => s.ground_energy = value,
            None => {
                return Err(NetworkError::UnknownToken {
                    line,
                    column,
                    token: name,
                })
            }
        }
    }
    if b.reactions.is_empty() {
        return Err(NetworkError::Syntax {
            line: 1,
            column: 1,
            message: "no reactions found".into(),
        });
    }
    ReactionNetwork::new(b.species, b.reactions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn diatomic_formation() {
        let n = parse_network("A + A <k=1.0> A2").unwrap();
        assert_eq!(n.species_count(), 2);
        assert_eq!(n.species()[0].name, "A");
        assert_eq!(n.species()[1].name, "A2");
        let r = &n.reactions()[0];
        assert_eq!(r.reactants, vec![Term { species: 0, coefficient: 2 }]);
        assert_eq!(r.products, vec![Term { species: 1, coefficient: 1 }]);
        assert_eq!(r.rate, 1.0);
    }

    #[test]
    fn bath_side_is_empty() {
        let n = parse_network("0 <k=0.5> A").unwrap();
        assert_eq!(n.species_count(), 1);
        assert!(n.reactions()[0].reactants.is_empty());
        assert_eq!(n.reactions()[0].rate, 0.5);
    }

    #[test]
    fn dangling_plus_is_a_syntax_error_at_the_plus() {
        let err = parse_network("A + <k=1> B").unwrap_err();
        assert_eq!(
            err,
            NetworkError::Syntax {
                line: 1,
                column: 3,
                message: "dangling '+' without a following term".into()
            }
        );
        assert!(matches!(parse_network("A <k=1> B +"), Err(NetworkError::Syntax { column: 11, .. })));
    }

    #[test]
    fn multi_line_file_with_labels_and_comments() {
        let text = "# concurrent\nA + A <k=1.0> A2\n0 <k2=0.01> A ; energy A = 1\nenergy A2 = 1.1\n";
        let n = parse_network(text).unwrap();
        assert_eq!(n.reactions().len(), 2);
        assert_eq!(n.reactions()[1].rate_label, Some(2));
        assert_eq!(n.reactions()[1].rate, 0.01);
        assert_eq!(n.ground_energies(), vec![1.0, 1.1]);
    }

    #[test]
    fn coefficients_and_merging() {
        let n = parse_network("2A + B + A <k_3=1e-3> 3 C").unwrap();
        let r = &n.reactions()[0];
        assert_eq!(r.reactants, vec![Term { species: 0, coefficient: 3 }, Term { species: 1, coefficient: 1 }]);
        assert_eq!(r.products, vec![Term { species: 2, coefficient: 3 }]);
        assert_eq!(r.rate, 1e-3);
    }

    #[test]
    fn error_kinds() {
        assert!(matches!(
            parse_network("0 A <k=1> B"),
            Err(NetworkError::NonPositiveCoefficient { line: 1, column: 1 })
        ));
        assert!(matches!(
            parse_network("A <k=1> B <k=2> C"),
            Err(NetworkError::DuplicateRate { .. })
        ));
        assert!(matches!(
            parse_network("A <k_1=1> B\nC <k_1=2> D"),
            Err(NetworkError::DuplicateRate { line: 2, column: 3, .. })
        ));
        assert!(parse_network("A <k_1=1> B\nC <k_1=1> D").is_ok());
        assert!(matches!(
            parse_network("A <k=1> B $"),
            Err(NetworkError::UnknownToken { line: 1, column: 11, .. })
        ));
        assert!(matches!(
            parse_network("A + A2 <k=1> A"),
            Err(NetworkError::SpeciesOnBothSides { .. })
        ));
        assert!(matches!(parse_network("A <k=-1> B"), Err(NetworkError::Syntax { .. })));
        assert!(matches!(parse_network("A <r=1> B"), Err(NetworkError::Syntax { .. })));
        assert!(matches!(parse_network("A B"), Err(NetworkError::Syntax { .. })));
        assert!(matches!(parse_network("# nothing"), Err(NetworkError::Syntax { .. })));
        assert!(matches!(
            parse_network("A <k=1> B\nenergy Z = 1"),
            Err(NetworkError::UnknownToken { line: 2, .. })
        ));
    }

    fn network_strategy() -> impl Strategy<Value = String> {
        let names = prop::sample::select(vec!["A", "A2", "B", "Cs", "Cs2", "X_1"]);
        let term = (1u32..4, names);
        let side = prop::collection::vec(term, 0..3);
        let rate = prop_oneof![Just(0.0), 1e-6f64..1e3];
        let reaction = (side.clone(), side, rate, prop::option::of(0u32..5));
        prop::collection::vec(reaction, 1..4).prop_map(|rs| {
            rs.into_iter()
                .map(|(l, r, k, label)| {
                    let fmt_side = |s: &Vec<(u32, &str)>| {
                        if s.is_empty() {
                            "0".to_string()
                        } else {
                            s.iter().map(|(c, n)| format!("{c} {n}")).collect::<Vec<_>>().join(" + ")
                        }
                    };
                    let arrow = match label {
                        Some(i) => format!("<k_{i}={k}>"),
                        None => format!("<k={k}>"),
                    };
                    format!("{} {} {}", fmt_side(&l), arrow, fmt_side(&r))
                })
                .collect::<Vec<_>>()
                .join("\n")
        })
    }

    proptest! {
        #[test]
        fn pretty_print_reparses_identically(text in network_strategy()) {
            if let Ok(net) = parse_network(&text) {
                let printed = net.to_string();
                prop_assert_eq!(parse_network(&printed).unwrap(), net);
            }
        }
    }
}
