//! Parameter-file reader.
//!
//! One parameter per line: `<name> <r|i|c> <domain> [log] [| <condition>]`
//! with `(lb, ub)` numeric domains and `{v1, v2, ...}` categorical ones.
//! `#` starts a comment.

use super::condition::CondParser;
use super::lexer::{is_ident_char, is_ident_start, strip_comment, tokenize, Tok, Token};
use super::{ConditionExpr, Domain, ParamKind, ParameterSpace, ParameterSpec, ParseError, Scale, SpaceError};

pub fn parse_parameter_file(text: &str) -> Result<ParameterSpace, SpaceError> {
    let mut specs: Vec<ParameterSpec> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = strip_comment(raw);
        if line.trim().is_empty() {
            continue;
        }
        let spec = parse_line(line, line_no)?;
        if specs.iter().any(|s| s.name == spec.name) {
            return Err(SpaceError::DuplicateName(spec.name));
        }
        specs.push(spec);
    }
    ParameterSpace::new(specs)
}

/// Parses a standalone condition; parameter references stay unresolved
/// until the expression is attached to a space.
pub(crate) fn parse_condition(text: &str) -> Result<ConditionExpr, ParseError> {
    let toks = tokenize(text, 1)?;
    CondParser::new(&toks, 1, text.len() + 1).parse_all()
}

/// Parses a condition and resolves it against an existing space.
pub fn parse_condition_in(space: &ParameterSpace, text: &str) -> Result<ConditionExpr, ParseError> {
    let mut e = parse_condition(text)?;
    e.resolve(&|n| space.index_of(n)).map_err(|message| ParseError {
        line: 1,
        column: 1,
        message,
    })?;
    Ok(e)
}

/// Whether a categorical label can be written without quotes.
pub(crate) fn is_bare_value(v: &str) -> bool {
    let mut chars = v.chars();
    match chars.next() {
        Some(c) if is_ident_start(c) => {
            chars.all(is_ident_char) && !matches!(v, "and" | "or" | "not" | "in" | "log")
        }
        Some(_) => v.parse::<f64>().is_ok_and(|x| x.is_finite() && x.to_string() == v),
        None => false,
    }
}

struct Cursor<'t> {
    toks: &'t [Token],
    pos: usize,
    line: usize,
    end_col: usize,
}

impl Cursor<'_> {
    fn err(&self, message: impl Into<String>) -> ParseError {
        ParseError {
            line: self.line,
            column: self.toks.get(self.pos).map_or(self.end_col, |t| t.col),
            message: message.into(),
        }
    }

    fn next(&mut self) -> Option<&Tok> {
        let t = self.toks.get(self.pos).map(|t| &t.tok);
        self.pos += 1;
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), ParseError> {
        if self.toks.get(self.pos).map(|t| &t.tok) == Some(&want) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(format!("expected {what}")))
        }
    }

    fn number(&mut self) -> Result<f64, ParseError> {
        match self.toks.get(self.pos).map(|t| &t.tok) {
            Some(Tok::Number(v, _)) => {
                let v = *v;
                self.pos += 1;
                Ok(v)
            }
            _ => Err(self.err("expected number")),
        }
    }
}

fn parse_line(line: &str, line_no: usize) -> Result<ParameterSpec, SpaceError> {
    let toks = tokenize(line, line_no)?;
    let mut cur = Cursor {
        toks: &toks,
        pos: 0,
        line: line_no,
        end_col: line.len() + 1,
    };
    let name = match cur.next() {
        Some(Tok::Ident(n)) => n.clone(),
        _ => {
            cur.pos -= 1;
            return Err(cur.err("expected parameter name").into());
        }
    };
    let kind = match cur.next() {
        Some(Tok::Ident(k)) if k == "r" => ParamKind::Real,
        Some(Tok::Ident(k)) if k == "i" => ParamKind::Integer,
        Some(Tok::Ident(k)) if k == "c" => ParamKind::Categorical,
        _ => {
            cur.pos -= 1;
            return Err(cur.err("expected kind letter r, i or c").into());
        }
    };
    let domain = if kind == ParamKind::Categorical {
        cur.expect(Tok::LBrace, "'{'")?;
        let mut values = Vec::new();
        loop {
            let v = match cur.next() {
                Some(Tok::Ident(s)) | Some(Tok::Str(s)) => s.clone(),
                Some(Tok::Number(_, text)) => text.clone(),
                _ => {
                    cur.pos -= 1;
                    return Err(cur.err("expected categorical value").into());
                }
            };
            values.push(v);
            match cur.next() {
                Some(Tok::Comma) => {}
                Some(Tok::RBrace) => break,
                _ => {
                    cur.pos -= 1;
                    return Err(cur.err("expected ',' or '}'").into());
                }
            }
        }
        Domain::Categorical(values)
    } else {
        cur.expect(Tok::LParen, "'('")?;
        let lb = cur.number()?;
        cur.expect(Tok::Comma, "','")?;
        let ub = cur.number()?;
        cur.expect(Tok::RParen, "')'")?;
        Domain::Numeric { lb, ub }
    };
    let mut scale = Scale::Linear;
    if matches!(toks.get(cur.pos).map(|t| &t.tok), Some(Tok::Ident(s)) if s == "log") {
        scale = Scale::Log;
        cur.pos += 1;
    }
    let condition = match toks.get(cur.pos).map(|t| &t.tok) {
        None => None,
        Some(Tok::Pipe) => {
            let rest = &toks[cur.pos + 1..];
            if rest.is_empty() {
                cur.pos += 1;
                return Err(cur.err("empty condition").into());
            }
            Some(CondParser::new(rest, line_no, line.len() + 1).parse_all()?)
        }
        Some(_) => return Err(cur.err("expected 'log', '|' or end of line").into()),
    };
    Ok(ParameterSpec {
        name,
        kind,
        domain,
        scale,
        condition,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::Value;
    use proptest::prelude::*;

    #[test]
    fn real_parameter_line() {
        let s = parse_parameter_file("beta r (0, 10)").unwrap();
        let p = &s.params()[0];
        assert_eq!(p.name, "beta");
        assert_eq!(p.kind, ParamKind::Real);
        assert_eq!(p.bounds(), Some((0.0, 10.0)));
        assert!(p.condition.is_none());
    }

    #[test]
    fn conditional_line_activates_on_category() {
        let s = parse_parameter_file("algorithm c {as, acs}\nq0 r (0, 1) | algorithm == \"acs\"\n").unwrap();
        let acs = s.configuration_from_pairs(0, &[("algorithm", "acs"), ("q0", "0.5")]).unwrap();
        let as_ = s.configuration_from_pairs(0, &[("algorithm", "as")]).unwrap();
        assert!(s.active_parameters(&acs).contains("q0"));
        assert!(!s.active_parameters(&as_).contains("q0"));
    }

    #[test]
    fn two_node_cycle_is_rejected() {
        let e = parse_parameter_file("a r (0,1) | b == 1\nb i (0,1) | a > 0\n").unwrap_err();
        match e {
            SpaceError::CyclicConditions(names) => assert_eq!(names, vec!["a".to_string(), "b".to_string()]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn self_reference_is_a_cycle() {
        assert!(matches!(
            parse_parameter_file("a r (0,1) | a > 0"),
            Err(SpaceError::CyclicConditions(_))
        ));
    }

    #[test]
    fn syntax_errors_carry_position() {
        let e = parse_parameter_file("# header\nalpha r (0, 5\n").unwrap_err();
        match e {
            SpaceError::Syntax(p) => {
                assert_eq!(p.line, 2);
                assert_eq!(p.column, 14);
            }
            other => panic!("unexpected {other:?}"),
        }
        let e = parse_parameter_file("alpha x (0, 5)").unwrap_err();
        assert!(matches!(e, SpaceError::Syntax(ParseError { line: 1, column: 7, .. })));
        let e = parse_parameter_file("q r (0, 1) | a ==").unwrap_err();
        assert!(matches!(e, SpaceError::Syntax(_)));
    }

    #[test]
    fn duplicate_and_unknown_names() {
        assert!(matches!(
            parse_parameter_file("a r (0,1)\na i (0, 3)"),
            Err(SpaceError::DuplicateName(n)) if n == "a"
        ));
        assert!(matches!(
            parse_parameter_file("a r (0,1) | zz == 1"),
            Err(SpaceError::BadCondition { .. })
        ));
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let s = parse_parameter_file("\n# only a comment\nx i (-5, 5) # trailing\n\n").unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.params()[0].parse_value("-3"), Some(Value::Int(-3)));
    }

    #[test]
    fn shipped_spaces_parse() {
        let aco = parse_parameter_file(include_str!("../../data/acotsp.params")).unwrap();
        assert_eq!(aco.len(), 10);
        let syn = parse_parameter_file(include_str!("../../data/synthetic.params")).unwrap();
        assert_eq!(syn.len(), 6);
    }

    #[test]
    fn nested_condition_round_trips() {
        let text = "a c {x, y, \"z w\"}\nb i (0, 9)\nc r (0.001, 1) log | not (a == \"x\" or b > 3) and (b in {1, 2} or a != \"y\")\n";
        let s = parse_parameter_file(text).unwrap();
        let again = parse_parameter_file(&s.to_string()).unwrap();
        assert_eq!(s, again);
    }

    fn arb_condition(names: Vec<String>) -> impl Strategy<Value = String> {
        let leaf = (prop::sample::select(names), 0..4usize, -5i32..5).prop_map(|(n, op, v)| {
            let op = ["==", "!=", "<", ">="][op];
            format!("{n} {op} {v}")
        });
        leaf.prop_recursive(3, 8, 2, |inner| {
            prop_oneof![
                (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a}) and ({b})")),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("{a} or {b}")),
                inner.prop_map(|a| format!("not ({a})")),
            ]
        })
    }

    fn arb_space_text() -> impl Strategy<Value = String> {
        (2usize..6).prop_flat_map(|n| {
            let kinds = prop::collection::vec(0..3usize, n);
            let bounds = prop::collection::vec((-100i32..100, 1i32..50), n);
            (kinds, bounds, prop::collection::vec(any::<bool>(), n), prop::collection::vec(any::<u8>(), n))
        })
        .prop_flat_map(|(kinds, bounds, logs, salt)| {
            let n = kinds.len();
            let conds: Vec<BoxedStrategy<Option<String>>> = (0..n)
                .map(|i| {
                    if i == 0 {
                        Just(None).boxed()
                    } else {
                        let earlier: Vec<String> = (0..i).map(|k| format!("p{k}")).collect();
                        prop::option::of(arb_condition(earlier)).boxed()
                    }
                })
                .collect();
            (Just((kinds, bounds, logs, salt)), conds)
        })
        .prop_map(|((kinds, bounds, logs, salt), conds)| {
            let mut out = String::new();
            for i in 0..kinds.len() {
                let (lo, w) = bounds[i];
                let dom = match kinds[i] {
                    0 if logs[i] => format!("r ({}, {}) log", 0.5 + f64::from(salt[i]) / 7.0, 300.25),
                    0 => format!("r ({}, {})", f64::from(lo) / 3.0, f64::from(lo + w) / 3.0),
                    1 => format!("i ({lo}, {})", lo + w),
                    _ => format!("c {{v{}, \"w x\", 3}}", salt[i]),
                };
                out.push_str(&format!("p{i} {dom}"));
                if let Some(c) = &conds[i] {
                    out.push_str(&format!(" | {c}"));
                }
                out.push('\n');
            }
            out
        })
    }

    proptest! {
        #[test]
        fn serialize_then_parse_is_identity(text in arb_space_text()) {
            let s = parse_parameter_file(&text).unwrap();
            let printed = s.to_string();
            let again = parse_parameter_file(&printed).unwrap();
            prop_assert_eq!(&s, &again);
            prop_assert_eq!(printed, again.to_string());
        }
    }
}
