//! Mixed-type parameter spaces with conditional parameters.
//!
//! A space is an ordered list of real, integer and categorical parameters.
//! Any parameter may carry an activation condition over other parameters;
//! the conditions must form a DAG, which fixes a topological evaluation
//! order used for sampling and activation checks.

mod condition;
mod lexer;
mod parse;

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use condition::{CmpOp, ConditionExpr, Literal, Operand};
pub use parse::{parse_condition_in, parse_parameter_file};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}, column {column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpaceError {
    #[error(transparent)]
    Syntax(#[from] ParseError),
    #[error("duplicate parameter name '{0}'")]
    DuplicateName(String),
    #[error("cyclic activation conditions among {0:?}")]
    CyclicConditions(Vec<String>),
    #[error("malformed domain for '{name}': {reason}")]
    MalformedDomain { name: String, reason: String },
    #[error("parameter '{name}': {reason}")]
    BadCondition { name: String, reason: String },
    #[error("empty parameter space")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamKind {
    Real,
    Integer,
    Categorical,
}

impl ParamKind {
    pub fn letter(self) -> char {
        match self {
            ParamKind::Real => 'r',
            ParamKind::Integer => 'i',
            ParamKind::Categorical => 'c',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Scale {
    #[default]
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Domain {
    Numeric { lb: f64, ub: f64 },
    Categorical(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSpec {
    pub name: String,
    pub kind: ParamKind,
    pub domain: Domain,
    pub scale: Scale,
    pub condition: Option<ConditionExpr>,
}

impl ParameterSpec {
    pub fn real(name: &str, lb: f64, ub: f64) -> Self {
        Self::numeric(name, ParamKind::Real, lb, ub)
    }

    pub fn integer(name: &str, lb: i64, ub: i64) -> Self {
        Self::numeric(name, ParamKind::Integer, lb as f64, ub as f64)
    }

    pub fn categorical(name: &str, values: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            kind: ParamKind::Categorical,
            domain: Domain::Categorical(values.iter().map(|s| s.to_string()).collect()),
            scale: Scale::Linear,
            condition: None,
        }
    }

    fn numeric(name: &str, kind: ParamKind, lb: f64, ub: f64) -> Self {
        Self {
            name: name.to_string(),
            kind,
            domain: Domain::Numeric { lb, ub },
            scale: Scale::Linear,
            condition: None,
        }
    }

    pub fn with_scale(mut self, scale: Scale) -> Self {
        self.scale = scale;
        self
    }

    /// Attaches a condition given in the parameter-file condition syntax.
    pub fn with_condition(mut self, text: &str) -> Result<Self, ParseError> {
        self.condition = Some(parse::parse_condition(text)?);
        Ok(self)
    }

    pub fn is_numeric(&self) -> bool {
        self.kind != ParamKind::Categorical
    }

    pub fn is_conditional(&self) -> bool {
        self.condition.is_some()
    }

    /// `(lb, ub)` of a numeric parameter.
    pub fn bounds(&self) -> Option<(f64, f64)> {
        match self.domain {
            Domain::Numeric { lb, ub } => Some((lb, ub)),
            Domain::Categorical(_) => None,
        }
    }

    /// Declared domain width for numeric parameters.
    pub fn range(&self) -> Option<f64> {
        self.bounds().map(|(lb, ub)| ub - lb)
    }

    pub fn labels(&self) -> Option<&[String]> {
        match &self.domain {
            Domain::Categorical(v) => Some(v),
            Domain::Numeric { .. } => None,
        }
    }

    /// Number of representable values: categories for categorical kinds,
    /// integers in range for integer kinds; `None` for reals.
    pub fn cardinality(&self) -> Option<usize> {
        match (&self.domain, self.kind) {
            (Domain::Categorical(v), _) => Some(v.len()),
            (Domain::Numeric { lb, ub }, ParamKind::Integer) => Some((ub - lb) as usize + 1),
            _ => None,
        }
    }

    /// Parses a textual value for this parameter.
    pub fn parse_value(&self, text: &str) -> Option<Value> {
        let text = text.trim();
        match (&self.domain, self.kind) {
            (Domain::Categorical(labels), _) => {
                let t = text.trim_matches('"');
                labels.iter().position(|l| l == t).map(Value::Cat)
            }
            (_, ParamKind::Integer) => text
                .parse::<i64>()
                .ok()
                .or_else(|| text.parse::<f64>().ok().filter(|v| v.fract() == 0.0).map(|v| v as i64))
                .map(Value::Int),
            _ => text.parse::<f64>().ok().filter(|v| v.is_finite()).map(Value::Real),
        }
    }

    pub fn format_value(&self, value: &Value) -> String {
        match (value, &self.domain) {
            (Value::Cat(k), Domain::Categorical(labels)) => labels.get(*k).cloned().unwrap_or_default(),
            (Value::Cat(k), _) => k.to_string(),
            (Value::Int(v), _) => v.to_string(),
            (Value::Real(v), _) => v.to_string(),
        }
    }

    fn check(&self) -> Result<(), SpaceError> {
        let bad = |reason: &str| SpaceError::MalformedDomain {
            name: self.name.clone(),
            reason: reason.to_string(),
        };
        match (&self.domain, self.kind) {
            (Domain::Categorical(values), ParamKind::Categorical) => {
                let distinct: BTreeSet<&String> = values.iter().collect();
                if distinct.len() != values.len() {
                    return Err(bad("repeated categorical value"));
                }
                if values.len() < 2 {
                    return Err(bad("categorical domain needs at least two values"));
                }
                if self.scale == Scale::Log {
                    return Err(bad("log scale on a categorical parameter"));
                }
            }
            (Domain::Numeric { lb, ub }, ParamKind::Real | ParamKind::Integer) => {
                if !(lb.is_finite() && ub.is_finite()) || lb >= ub {
                    return Err(bad("numeric domain needs finite lb < ub"));
                }
                if self.kind == ParamKind::Integer && (lb.fract() != 0.0 || ub.fract() != 0.0) {
                    return Err(bad("integer bounds must be integral"));
                }
                if self.scale == Scale::Log && *lb <= 0.0 {
                    return Err(bad("log scale requires lb > 0"));
                }
            }
            _ => return Err(bad("domain does not match parameter kind")),
        }
        Ok(())
    }
}

/// A single parameter value. Categorical values are indices into the
/// declared domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Value {
    Real(f64),
    Int(i64),
    Cat(usize),
}

impl Value {
    /// Numeric view of the value; categorical indices map to their index.
    pub fn as_f64(&self) -> f64 {
        match *self {
            Value::Real(v) => v,
            Value::Int(v) => v as f64,
            Value::Cat(k) => k as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Origin {
    Initial,
    Sampled { parent: u64, iteration: usize },
}

/// One assignment of values to every parameter of a space, in space order.
/// `None` marks an inactive parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    pub id: u64,
    pub values: Vec<Option<Value>>,
    pub origin: Origin,
}

impl Configuration {
    pub fn new(id: u64, values: Vec<Option<Value>>, origin: Origin) -> Self {
        Self { id, values, origin }
    }

    /// True when both configurations assign identical values.
    pub fn same_values(&self, other: &Configuration) -> bool {
        self.values == other.values
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ViolationKind {
    WrongType,
    OutOfDomain,
    /// The condition holds but no value is assigned.
    MissingActive,
    /// A value is assigned although the condition does not hold.
    AssignedInactive,
    WrongLength,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub param: String,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSpace {
    params: Vec<ParameterSpec>,
    /// Topological order of the condition dependency graph.
    order: Vec<usize>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl ParameterSpace {
    pub fn new(mut params: Vec<ParameterSpec>) -> Result<Self, SpaceError> {
        if params.is_empty() {
            return Err(SpaceError::Empty);
        }
        let mut index = HashMap::with_capacity(params.len());
        for (i, p) in params.iter().enumerate() {
            p.check()?;
            if index.insert(p.name.clone(), i).is_some() {
                return Err(SpaceError::DuplicateName(p.name.clone()));
            }
        }
        for p in params.iter_mut() {
            let name = p.name.clone();
            if let Some(cond) = p.condition.as_mut() {
                cond.resolve(&|n| index.get(n).copied())
                    .map_err(|reason| SpaceError::BadCondition {
                        name: name.clone(),
                        reason,
                    })?;
                if cond.references().contains(&name.as_str()) {
                    return Err(SpaceError::CyclicConditions(vec![name]));
                }
            }
        }
        let order = topological_order(&params, &index)?;
        Ok(Self { params, order, index })
    }

    pub fn params(&self) -> &[ParameterSpec] {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Condition-respecting evaluation order.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&ParameterSpec> {
        self.index_of(name).map(|i| &self.params[i])
    }

    pub fn evaluate_condition(&self, expr: &ConditionExpr, config: &Configuration) -> bool {
        expr.evaluate(self, &config.values)
    }

    /// Activation flags derived in topological order: a parameter is active
    /// when its condition holds over the values of active parameters only.
    pub fn activation(&self, values: &[Option<Value>]) -> Vec<bool> {
        let mut masked: Vec<Option<Value>> = vec![None; self.params.len()];
        let mut active = vec![false; self.params.len()];
        for &i in &self.order {
            let on = match &self.params[i].condition {
                None => true,
                Some(c) => c.evaluate(self, &masked),
            };
            active[i] = on;
            if on {
                masked[i] = values.get(i).copied().flatten();
            }
        }
        active
    }

    /// Names of the active parameters of `config`, in space order.
    pub fn active_parameters(&self, config: &Configuration) -> BTreeSet<String> {
        self.activation(&config.values)
            .into_iter()
            .zip(&self.params)
            .filter(|(on, _)| *on)
            .map(|(_, p)| p.name.clone())
            .collect()
    }

    /// Clears values of parameters whose condition does not hold.
    pub fn apply_activation(&self, values: &mut [Option<Value>]) {
        let active = self.activation(values);
        for (v, on) in values.iter_mut().zip(active) {
            if !on {
                *v = None;
            }
        }
    }

    pub fn value_in_domain(&self, index: usize, value: &Value) -> Result<(), ViolationKind> {
        let p = &self.params[index];
        match (value, &p.domain, p.kind) {
            (Value::Real(v), Domain::Numeric { lb, ub }, ParamKind::Real) => {
                if v.is_finite() && *v >= *lb && *v <= *ub {
                    Ok(())
                } else {
                    Err(ViolationKind::OutOfDomain)
                }
            }
            (Value::Int(v), Domain::Numeric { lb, ub }, ParamKind::Integer) => {
                let v = *v as f64;
                if v >= *lb && v <= *ub {
                    Ok(())
                } else {
                    Err(ViolationKind::OutOfDomain)
                }
            }
            (Value::Cat(k), Domain::Categorical(labels), ParamKind::Categorical) => {
                if *k < labels.len() {
                    Ok(())
                } else {
                    Err(ViolationKind::OutOfDomain)
                }
            }
            _ => Err(ViolationKind::WrongType),
        }
    }

    /// One violation per offending parameter; empty when the configuration
    /// is valid.
    pub fn validate_configuration(&self, config: &Configuration) -> Vec<Violation> {
        if config.values.len() != self.params.len() {
            return vec![Violation {
                param: String::new(),
                kind: ViolationKind::WrongLength,
            }];
        }
        let active = self.activation(&config.values);
        let mut out = Vec::new();
        for (i, p) in self.params.iter().enumerate() {
            let kind = match (&config.values[i], active[i]) {
                (Some(v), true) => self.value_in_domain(i, v).err(),
                (None, true) => Some(ViolationKind::MissingActive),
                (Some(_), false) => Some(ViolationKind::AssignedInactive),
                (None, false) => None,
            };
            if let Some(kind) = kind {
                out.push(Violation {
                    param: p.name.clone(),
                    kind,
                });
            }
        }
        out
    }

    /// Builds a configuration from textual `(name, value)` pairs; missing
    /// names and the literal `INACTIVE` or an empty string mean inactive.
    pub fn configuration_from_pairs(&self, id: u64, pairs: &[(&str, &str)]) -> Result<Configuration, String> {
        let mut values = vec![None; self.params.len()];
        for (name, text) in pairs {
            let i = self.index_of(name).ok_or_else(|| format!("unknown parameter '{name}'"))?;
            if text.trim().is_empty() || text.trim() == "INACTIVE" {
                continue;
            }
            values[i] = Some(
                self.params[i]
                    .parse_value(text)
                    .ok_or_else(|| format!("bad value '{text}' for '{name}'"))?,
            );
        }
        Ok(Configuration::new(id, values, Origin::Initial))
    }

    /// Renders a value or `INACTIVE`.
    pub fn format_slot(&self, index: usize, value: &Option<Value>) -> String {
        match value {
            Some(v) => self.params[index].format_value(v),
            None => "INACTIVE".to_string(),
        }
    }

    pub(crate) fn rebuild_index(&mut self) {
        self.index = self.params.iter().enumerate().map(|(i, p)| (p.name.clone(), i)).collect();
    }
}

impl ParameterSpace {
    /// Deserializes and restores the name index.
    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        let mut s: ParameterSpace = serde_json::from_str(text)?;
        s.rebuild_index();
        Ok(s)
    }
}

fn topological_order(params: &[ParameterSpec], index: &HashMap<String, usize>) -> Result<Vec<usize>, SpaceError> {
    let n = params.len();
    let mut indegree = vec![0usize; n];
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, p) in params.iter().enumerate() {
        if let Some(c) = &p.condition {
            let deps: BTreeSet<usize> = c.references().iter().filter_map(|r| index.get(*r).copied()).collect();
            for d in deps {
                children[d].push(i);
                indegree[i] += 1;
            }
        }
    }
    // Kahn's algorithm, always releasing the lowest declared index first.
    let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(i) = ready.pop_first() {
        order.push(i);
        for &c in &children[i] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                ready.insert(c);
            }
        }
    }
    if order.len() != n {
        let cyclic = (0..n).filter(|&i| indegree[i] > 0).map(|i| params[i].name.clone()).collect();
        return Err(SpaceError::CyclicConditions(cyclic));
    }
    Ok(order)
}

impl fmt::Display for ParameterSpace {
    /// Writes the space in parameter-file syntax.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.params {
            write!(f, "{} {} ", p.name, p.kind.letter())?;
            match &p.domain {
                Domain::Numeric { lb, ub } => write!(f, "({lb}, {ub})")?,
                Domain::Categorical(values) => {
                    write!(f, "{{")?;
                    for (i, v) in values.iter().enumerate() {
                        if i > 0 {
                            write!(f, ", ")?;
                        }
                        if parse::is_bare_value(v) {
                            write!(f, "{v}")?;
                        } else {
                            write!(f, "\"{v}\"")?;
                        }
                    }
                    write!(f, "}}")?;
                }
            }
            if p.scale == Scale::Log {
                write!(f, " log")?;
            }
            if let Some(c) = &p.condition {
                write!(f, " | {c}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ACO: &str = include_str!("../../data/acotsp.params");

    fn aco() -> ParameterSpace {
        parse_parameter_file(ACO).unwrap()
    }

    fn cfg(space: &ParameterSpace, pairs: &[(&str, &str)]) -> Configuration {
        space.configuration_from_pairs(1, pairs).unwrap()
    }

    #[test]
    fn condition_true_on_matching_category() {
        let s = aco();
        let c = cfg(&s, &[("algorithm", "ras"), ("ants", "20")]);
        let e = parse::parse_condition_in(&s, r#"algorithm == "ras""#).unwrap();
        assert!(s.evaluate_condition(&e, &c));
    }

    #[test]
    fn comparison_on_inactive_is_false() {
        let s = aco();
        let c = cfg(&s, &[("algorithm", "ras")]);
        let e = parse::parse_condition_in(&s, "q0 > 0.5").unwrap();
        assert!(!s.evaluate_condition(&e, &c));
        let e = parse::parse_condition_in(&s, "q0 != 0.5").unwrap();
        assert!(!s.evaluate_condition(&e, &c));
    }

    #[test]
    fn membership_and_conjunction() {
        let s = aco();
        let c = cfg(&s, &[("algorithm", "mmas"), ("ants", "20")]);
        let e = parse::parse_condition_in(&s, r#"algorithm in {"acs","ras"} and ants >= 10"#).unwrap();
        assert!(!s.evaluate_condition(&e, &c));
        let e = parse::parse_condition_in(&s, r#"algorithm in {"acs","mmas"} and ants >= 10"#).unwrap();
        assert!(s.evaluate_condition(&e, &c));
    }

    #[test]
    fn validation_flags_out_of_domain_and_activation() {
        let s = aco();
        let ok = cfg(
            &s,
            &[
                ("algorithm", "ras"),
                ("alpha", "1"),
                ("beta", "5.0"),
                ("rho", "0.5"),
                ("ants", "10"),
                ("nnls", "10"),
                ("rasrank", "6"),
                ("localsearch", "0"),
            ],
        );
        assert!(s.validate_configuration(&ok).is_empty());

        let mut bad = ok.clone();
        bad.values[s.index_of("rho").unwrap()] = Some(Value::Real(1.5));
        let v = s.validate_configuration(&bad);
        assert_eq!(v, vec![Violation { param: "rho".into(), kind: ViolationKind::OutOfDomain }]);

        let mut bad = ok.clone();
        bad.values[s.index_of("q0").unwrap()] = Some(Value::Real(0.3));
        let v = s.validate_configuration(&bad);
        assert_eq!(v, vec![Violation { param: "q0".into(), kind: ViolationKind::AssignedInactive }]);

        let mut bad = ok;
        bad.values[s.index_of("rasrank").unwrap()] = None;
        assert_eq!(s.validate_configuration(&bad)[0].kind, ViolationKind::MissingActive);
    }

    #[test]
    fn active_parameters_follow_algorithm() {
        let s = aco();
        let acs = cfg(&s, &[("algorithm", "acs"), ("q0", "0.9"), ("localsearch", "1"), ("dlb", "1")]);
        let active = s.active_parameters(&acs);
        assert!(active.contains("q0"));
        assert!(!active.contains("rasrank"));
        assert!(active.contains("dlb"));

        let ras = cfg(&s, &[("algorithm", "ras"), ("rasrank", "5"), ("localsearch", "0")]);
        let active = s.active_parameters(&ras);
        assert!(active.contains("rasrank"));
        assert!(!active.contains("q0"));
        assert!(!active.contains("dlb"));
    }

    #[test]
    fn unconditioned_space_is_fully_active() {
        let s = parse_parameter_file("a r (0, 1)\nb i (1, 4)\nc c {x, y}\n").unwrap();
        let c = cfg(&s, &[("a", "0.5"), ("b", "2"), ("c", "x")]);
        assert_eq!(s.active_parameters(&c).len(), 3);
    }

    #[test]
    fn chained_conditions_use_topological_order() {
        // `c` depends on `b`, which is declared after it and is itself conditional.
        let s = parse_parameter_file("c r (0, 1) | b > 2\na c {on, off}\nb i (0, 5) | a == \"on\"\n").unwrap();
        assert_eq!(s.order(), &[1, 2, 0]);
        let mut c = cfg(&s, &[("a", "off"), ("b", "4"), ("c", "0.5")]);
        // b is assigned but inactive, so c must be inactive too.
        assert!(!s.activation(&c.values)[0]);
        s.apply_activation(&mut c.values);
        assert_eq!(c.values, vec![None, Some(Value::Cat(1)), None]);
    }

    #[test]
    fn numeric_literal_matches_numeric_label() {
        let s = parse_parameter_file("ls c {0, 1}\ndlb c {0, 1} | ls == 1\n").unwrap();
        let c = cfg(&s, &[("ls", "1"), ("dlb", "0")]);
        assert!(s.validate_configuration(&c).is_empty());
    }

    #[test]
    fn log_scale_and_domain_checks() {
        assert!(matches!(
            parse_parameter_file("a r (0, 1) log"),
            Err(SpaceError::MalformedDomain { .. })
        ));
        assert!(matches!(parse_parameter_file("a r (1, 1)"), Err(SpaceError::MalformedDomain { .. })));
        assert!(matches!(parse_parameter_file("a c {x}"), Err(SpaceError::MalformedDomain { .. })));
        assert!(matches!(parse_parameter_file("a c {x, x}"), Err(SpaceError::MalformedDomain { .. })));
        assert!(matches!(parse_parameter_file("a i (0.5, 3)"), Err(SpaceError::MalformedDomain { .. })));
        let s = parse_parameter_file("lr r (0.0001, 1) log").unwrap();
        assert_eq!(s.params()[0].scale, Scale::Log);
    }

    #[test]
    fn json_round_trip_restores_index() {
        let s = aco();
        let text = serde_json::to_string(&s).unwrap();
        let back = ParameterSpace::from_json(&text).unwrap();
        assert_eq!(back.index_of("q0"), s.index_of("q0"));
        assert_eq!(back.to_string(), s.to_string());
    }
}
