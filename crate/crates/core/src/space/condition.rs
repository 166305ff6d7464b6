//! Activation conditions of conditional parameters.
//!
//! A condition is a boolean expression over other parameters of the same
//! space. Evaluation is total: any comparison that reads an inactive
//! parameter is false.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::lexer::{Tok, Token};
use super::{Domain, ParameterSpace, ParseError, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    fn holds(self, ord: Ordering) -> bool {
        match self {
            CmpOp::Eq => ord == Ordering::Equal,
            CmpOp::Ne => ord != Ordering::Equal,
            CmpOp::Lt => ord == Ordering::Less,
            CmpOp::Le => ord != Ordering::Greater,
            CmpOp::Gt => ord == Ordering::Greater,
            CmpOp::Ge => ord != Ordering::Less,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Literal {
    Num(f64),
    Str(String),
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Num(v) => write!(f, "{v}"),
            Literal::Str(s) => write!(f, "\"{s}\""),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Operand {
    /// Parameter reference; `index` is resolved when the space is built.
    Param { name: String, index: usize },
    Lit(Literal),
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Param { name, .. } => f.write_str(name),
            Operand::Lit(l) => l.fmt(f),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ConditionExpr {
    Cmp {
        lhs: Operand,
        op: CmpOp,
        rhs: Operand,
    },
    In {
        operand: Operand,
        set: Vec<Literal>,
    },
    And(Box<ConditionExpr>, Box<ConditionExpr>),
    Or(Box<ConditionExpr>, Box<ConditionExpr>),
    Not(Box<ConditionExpr>),
}

/// A resolved operand value during evaluation.
enum Resolved<'a> {
    Num(f64),
    Str(&'a str),
}

impl ConditionExpr {
    /// Names of all parameters referenced by the expression.
    pub fn references(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_refs(&mut out);
        out
    }

    fn collect_refs<'a>(&'a self, out: &mut Vec<&'a str>) {
        let mut push = |o: &'a Operand| {
            if let Operand::Param { name, .. } = o {
                out.push(name.as_str());
            }
        };
        match self {
            ConditionExpr::Cmp { lhs, rhs, .. } => {
                push(lhs);
                push(rhs);
            }
            ConditionExpr::In { operand, .. } => push(operand),
            ConditionExpr::And(a, b) | ConditionExpr::Or(a, b) => {
                a.collect_refs(out);
                b.collect_refs(out);
            }
            ConditionExpr::Not(a) => a.collect_refs(out),
        }
    }

    pub(crate) fn resolve(&mut self, lookup: &dyn Fn(&str) -> Option<usize>) -> Result<(), String> {
        let fix = |o: &mut Operand| -> Result<(), String> {
            if let Operand::Param { name, index } = o {
                *index = lookup(name).ok_or_else(|| format!("unknown parameter '{name}' in condition"))?;
            }
            Ok(())
        };
        match self {
            ConditionExpr::Cmp { lhs, rhs, .. } => {
                fix(lhs)?;
                fix(rhs)
            }
            ConditionExpr::In { operand, .. } => fix(operand),
            ConditionExpr::And(a, b) | ConditionExpr::Or(a, b) => {
                a.resolve(lookup)?;
                b.resolve(lookup)
            }
            ConditionExpr::Not(a) => a.resolve(lookup),
        }
    }

    /// Evaluates against a value vector laid out in space order; `None`
    /// marks an inactive parameter.
    pub fn evaluate(&self, space: &ParameterSpace, values: &[Option<Value>]) -> bool {
        match self {
            ConditionExpr::Cmp { lhs, op, rhs } => {
                let (Some(l), Some(r)) = (resolve(space, values, lhs), resolve(space, values, rhs)) else {
                    return false;
                };
                match (l, r) {
                    (Resolved::Num(a), Resolved::Num(b)) => a.partial_cmp(&b).is_some_and(|o| op.holds(o)),
                    (Resolved::Str(a), Resolved::Str(b)) => match op {
                        CmpOp::Eq => a == b,
                        CmpOp::Ne => a != b,
                        _ => categorical_order(space, lhs, rhs, a, b).is_some_and(|o| op.holds(o)),
                    },
                    // A categorical label that reads as a number compares by value.
                    (Resolved::Str(s), Resolved::Num(n)) => match s.parse::<f64>() {
                        Ok(v) => v.partial_cmp(&n).is_some_and(|o| op.holds(o)),
                        Err(_) => *op == CmpOp::Ne,
                    },
                    (Resolved::Num(n), Resolved::Str(s)) => match s.parse::<f64>() {
                        Ok(v) => n.partial_cmp(&v).is_some_and(|o| op.holds(o)),
                        Err(_) => *op == CmpOp::Ne,
                    },
                }
            }
            ConditionExpr::In { operand, set } => {
                let Some(v) = resolve(space, values, operand) else {
                    return false;
                };
                set.iter().any(|lit| match (&v, lit) {
                    (Resolved::Num(a), Literal::Num(b)) => a == b,
                    (Resolved::Str(a), Literal::Str(b)) => a == b,
                    (Resolved::Str(a), Literal::Num(b)) => a.parse::<f64>().is_ok_and(|x| x == *b),
                    (Resolved::Num(_), Literal::Str(_)) => false,
                })
            }
            ConditionExpr::And(a, b) => a.evaluate(space, values) && b.evaluate(space, values),
            ConditionExpr::Or(a, b) => a.evaluate(space, values) || b.evaluate(space, values),
            ConditionExpr::Not(a) => !a.evaluate(space, values),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            ConditionExpr::Or(..) => 1,
            ConditionExpr::And(..) => 2,
            ConditionExpr::Not(..) => 3,
            _ => 4,
        }
    }

    fn write_prec(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        if self.precedence() < min {
            write!(f, "(")?;
            self.write_prec(f, 0)?;
            return write!(f, ")");
        }
        match self {
            ConditionExpr::Cmp { lhs, op, rhs } => write!(f, "{lhs} {} {rhs}", op.symbol()),
            ConditionExpr::In { operand, set } => {
                write!(f, "{operand} in {{")?;
                for (i, lit) in set.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{lit}")?;
                }
                write!(f, "}}")
            }
            ConditionExpr::Or(a, b) => {
                a.write_prec(f, 1)?;
                write!(f, " or ")?;
                b.write_prec(f, 2)
            }
            ConditionExpr::And(a, b) => {
                a.write_prec(f, 2)?;
                write!(f, " and ")?;
                b.write_prec(f, 3)
            }
            ConditionExpr::Not(a) => {
                write!(f, "not ")?;
                a.write_prec(f, 3)
            }
        }
    }
}

impl fmt::Display for ConditionExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write_prec(f, 0)
    }
}

fn resolve<'a>(space: &'a ParameterSpace, values: &[Option<Value>], op: &'a Operand) -> Option<Resolved<'a>> {
    match op {
        Operand::Lit(Literal::Num(v)) => Some(Resolved::Num(*v)),
        Operand::Lit(Literal::Str(s)) => Some(Resolved::Str(s)),
        Operand::Param { index, .. } => match values.get(*index)?.as_ref()? {
            Value::Real(v) => Some(Resolved::Num(*v)),
            Value::Int(v) => Some(Resolved::Num(*v as f64)),
            Value::Cat(k) => match &space.params()[*index].domain {
                Domain::Categorical(labels) => labels.get(*k).map(|s| Resolved::Str(s.as_str())),
                Domain::Numeric { .. } => None,
            },
        },
    }
}

/// Ordering between categorical labels follows declaration order of the
/// domain the parameter operand belongs to.
fn categorical_order(space: &ParameterSpace, lhs: &Operand, rhs: &Operand, a: &str, b: &str) -> Option<Ordering> {
    let domain_of = |o: &Operand| match o {
        Operand::Param { index, .. } => match &space.params()[*index].domain {
            Domain::Categorical(labels) => Some(labels),
            _ => None,
        },
        _ => None,
    };
    let labels = domain_of(lhs).or_else(|| domain_of(rhs))?;
    let pa = labels.iter().position(|l| l == a)?;
    let pb = labels.iter().position(|l| l == b)?;
    Some(pa.cmp(&pb))
}

/// Recursive-descent parser over a token slice.
pub(crate) struct CondParser<'t> {
    toks: &'t [Token],
    pos: usize,
    line: usize,
    end_col: usize,
}

impl<'t> CondParser<'t> {
    pub(crate) fn new(toks: &'t [Token], line: usize, end_col: usize) -> Self {
        Self {
            toks,
            pos: 0,
            line,
            end_col,
        }
    }

    fn err(&self, msg: impl Into<String>) -> ParseError {
        let column = self.toks.get(self.pos).map_or(self.end_col, |t| t.col);
        ParseError {
            line: self.line,
            column,
            message: msg.into(),
        }
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn peek_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s == kw)
    }

    pub(crate) fn parse_all(mut self) -> Result<ConditionExpr, ParseError> {
        let e = self.parse_or()?;
        if self.pos != self.toks.len() {
            return Err(self.err("unexpected token after condition"));
        }
        Ok(e)
    }

    fn parse_or(&mut self) -> Result<ConditionExpr, ParseError> {
        let mut lhs = self.parse_and()?;
        while self.peek_keyword("or") {
            self.pos += 1;
            let rhs = self.parse_and()?;
            lhs = ConditionExpr::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn parse_and(&mut self) -> Result<ConditionExpr, ParseError> {
        let mut lhs = self.parse_not()?;
        while self.peek_keyword("and") {
            self.pos += 1;
            let rhs = self.parse_not()?;
            lhs = ConditionExpr::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn parse_not(&mut self) -> Result<ConditionExpr, ParseError> {
        if self.peek_keyword("not") || self.peek() == Some(&Tok::Not) {
            self.pos += 1;
            return Ok(ConditionExpr::Not(Box::new(self.parse_not()?)));
        }
        self.parse_primary()
    }

    fn parse_primary(&mut self) -> Result<ConditionExpr, ParseError> {
        if self.peek() == Some(&Tok::LParen) {
            self.pos += 1;
            let e = self.parse_or()?;
            if self.peek() != Some(&Tok::RParen) {
                return Err(self.err("expected ')'"));
            }
            self.pos += 1;
            return Ok(e);
        }
        let lhs = self.parse_operand()?;
        if self.peek_keyword("in") {
            self.pos += 1;
            if self.peek() != Some(&Tok::LBrace) {
                return Err(self.err("expected '{' after 'in'"));
            }
            self.pos += 1;
            let mut set = Vec::new();
            loop {
                set.push(self.parse_literal()?);
                match self.peek() {
                    Some(Tok::Comma) => self.pos += 1,
                    Some(Tok::RBrace) => {
                        self.pos += 1;
                        break;
                    }
                    _ => return Err(self.err("expected ',' or '}' in set")),
                }
            }
            return Ok(ConditionExpr::In { operand: lhs, set });
        }
        let op = match self.peek() {
            Some(Tok::Eq) => CmpOp::Eq,
            Some(Tok::Ne) => CmpOp::Ne,
            Some(Tok::Lt) => CmpOp::Lt,
            Some(Tok::Le) => CmpOp::Le,
            Some(Tok::Gt) => CmpOp::Gt,
            Some(Tok::Ge) => CmpOp::Ge,
            _ => return Err(self.err("expected comparison operator or 'in'")),
        };
        self.pos += 1;
        let rhs = self.parse_operand()?;
        Ok(ConditionExpr::Cmp { lhs, op, rhs })
    }

    fn parse_operand(&mut self) -> Result<Operand, ParseError> {
        match self.peek() {
            Some(Tok::Ident(name)) if !matches!(name.as_str(), "and" | "or" | "not" | "in") => {
                let name = name.clone();
                self.pos += 1;
                Ok(Operand::Param { name, index: usize::MAX })
            }
            _ => Ok(Operand::Lit(self.parse_literal()?)),
        }
    }

    fn parse_literal(&mut self) -> Result<Literal, ParseError> {
        let lit = match self.peek() {
            Some(Tok::Number(v, _)) => Literal::Num(*v),
            Some(Tok::Str(s)) => Literal::Str(s.clone()),
            _ => return Err(self.err("expected literal")),
        };
        self.pos += 1;
        Ok(lit)
    }
}
