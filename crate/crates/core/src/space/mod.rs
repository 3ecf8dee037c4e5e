//! Mixed-type search spaces.
//!
//! Every numeric parameter is *warped* onto the unit interval (linear, log,
//! logit or bilog), booleans occupy a single thresholded coordinate and
//! categoricals are one-hot encoded. Optimizers work on the resulting unit
//! hypercube and hand back [`Suggestion`]s in raw units.

mod config;
pub mod fuzz;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::parse_space_config;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpaceError {
    #[error("parameter `{param}`: {reason}")]
    Domain { param: String, reason: String },
    #[error("invalid parameter spec `{param}`: {reason}")]
    InvalidSpec { param: String, reason: String },
    #[error("duplicate parameter name `{0}`")]
    DuplicateName(String),
    #[error("invalid suggestion: {}", .0.join("; "))]
    Validation(Vec<String>),
    #[error("expected a point of length {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },
    #[error("space config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, SpaceError>;

/// Monotone transform applied before the linear rescale onto `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Warp {
    #[default]
    Linear,
    Log,
    Logit,
    Bilog,
}

impl Warp {
    pub fn forward(self, x: f64) -> f64 {
        match self {
            Warp::Linear => x,
            Warp::Log => x.ln(),
            Warp::Logit => (x / (1.0 - x)).ln(),
            Warp::Bilog => x.signum() * x.abs().ln_1p(),
        }
    }

    pub fn inverse(self, y: f64) -> f64 {
        match self {
            Warp::Linear => y,
            Warp::Log => y.exp(),
            Warp::Logit => 1.0 / (1.0 + (-y).exp()),
            Warp::Bilog => y.signum() * y.abs().exp_m1(),
        }
    }

    fn check_bounds(self, lo: f64, hi: f64) -> std::result::Result<(), String> {
        if !(lo.is_finite() && hi.is_finite()) {
            return Err("range must be finite".into());
        }
        if lo >= hi {
            return Err(format!(
                "range lower bound {lo} must be below upper bound {hi}"
            ));
        }
        match self {
            Warp::Log if lo <= 0.0 => Err(format!("log warp requires lo > 0, got {lo}")),
            Warp::Logit if !(lo > 0.0 && hi < 1.0) => Err(format!(
                "logit warp requires 0 < lo < hi < 1, got ({lo}, {hi})"
            )),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Warp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Warp::Linear => "linear",
            Warp::Log => "log",
            Warp::Logit => "logit",
            Warp::Bilog => "bilog",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParamKind {
    Real { lo: f64, hi: f64, warp: Warp },
    Int { lo: i64, hi: i64, warp: Warp },
    Cat { values: Vec<String> },
    Bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    name: String,
    kind: ParamKind,
}

impl ParamSpec {
    pub fn real(name: impl Into<String>, lo: f64, hi: f64, warp: Warp) -> Result<Self> {
        Self::new(name, ParamKind::Real { lo, hi, warp })
    }

    pub fn int(name: impl Into<String>, lo: i64, hi: i64, warp: Warp) -> Result<Self> {
        Self::new(name, ParamKind::Int { lo, hi, warp })
    }

    pub fn cat<S: Into<String>>(
        name: impl Into<String>,
        values: impl IntoIterator<Item = S>,
    ) -> Result<Self> {
        let values = values.into_iter().map(Into::into).collect();
        Self::new(name, ParamKind::Cat { values })
    }

    pub fn boolean(name: impl Into<String>) -> Result<Self> {
        Self::new(name, ParamKind::Bool)
    }

    pub fn new(name: impl Into<String>, kind: ParamKind) -> Result<Self> {
        let name = name.into();
        let invalid = |reason: String| SpaceError::InvalidSpec {
            param: name.clone(),
            reason,
        };
        if name.is_empty() {
            return Err(invalid("empty parameter name".into()));
        }
        match &kind {
            ParamKind::Real { lo, hi, warp } => warp.check_bounds(*lo, *hi).map_err(invalid)?,
            ParamKind::Int { lo, hi, warp } => {
                if hi < &(lo + 1) {
                    return Err(invalid(format!(
                        "int range needs hi >= lo + 1, got ({lo}, {hi})"
                    )));
                }
                warp.check_bounds(*lo as f64, *hi as f64).map_err(invalid)?;
            }
            ParamKind::Cat { values } => {
                if values.is_empty() {
                    return Err(invalid("categorical values must be nonempty".into()));
                }
                for (i, v) in values.iter().enumerate() {
                    if values[..i].contains(v) {
                        return Err(invalid(format!("duplicate categorical value `{v}`")));
                    }
                }
            }
            ParamKind::Bool => {}
        }
        Ok(Self { name, kind })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> &ParamKind {
        &self.kind
    }

    /// Number of unit-cube coordinates this parameter occupies.
    pub fn width(&self) -> usize {
        match &self.kind {
            ParamKind::Cat { values } => values.len(),
            _ => 1,
        }
    }

    pub fn is_discrete(&self) -> bool {
        !matches!(self.kind, ParamKind::Real { .. })
    }

    fn renamed(&self, name: String) -> Self {
        Self {
            name,
            kind: self.kind.clone(),
        }
    }

    fn domain(&self, reason: impl Into<String>) -> SpaceError {
        SpaceError::Domain {
            param: self.name.clone(),
            reason: reason.into(),
        }
    }

    /// Checks that `value` is a legal raw value for this parameter.
    pub fn check(&self, value: &Value) -> Result<()> {
        match (&self.kind, value) {
            (ParamKind::Real { lo, hi, .. }, Value::Real(x)) => {
                if x.is_nan() || x < lo || x > hi {
                    return Err(self.domain(format!("{x} outside [{lo}, {hi}]")));
                }
            }
            (ParamKind::Int { lo, hi, .. }, Value::Int(x)) => {
                if x < lo || x > hi {
                    return Err(self.domain(format!("{x} outside [{lo}, {hi}]")));
                }
            }
            (ParamKind::Cat { values }, Value::Cat(label)) => {
                if !values.contains(label) {
                    return Err(self.domain(format!("unknown category `{label}`")));
                }
            }
            (ParamKind::Bool, Value::Bool(_)) => {}
            (_, other) => {
                return Err(self.domain(format!("value {other} has the wrong type")));
            }
        }
        Ok(())
    }
}

/// Maps a raw numeric or boolean value onto `[0, 1]`.
pub fn warp_value(spec: &ParamSpec, raw: &Value) -> Result<f64> {
    spec.check(raw)?;
    let (x, lo, hi, warp) = match (&spec.kind, raw) {
        (ParamKind::Real { lo, hi, warp }, Value::Real(x)) => (*x, *lo, *hi, *warp),
        (ParamKind::Int { lo, hi, warp }, Value::Int(x)) => {
            (*x as f64, *lo as f64, *hi as f64, *warp)
        }
        (ParamKind::Bool, Value::Bool(b)) => return Ok(if *b { 1.0 } else { 0.0 }),
        _ => return Err(spec.domain("categorical parameters are one-hot encoded, not warped")),
    };
    if x == lo {
        return Ok(0.0);
    }
    if x == hi {
        return Ok(1.0);
    }
    let (glo, ghi) = (warp.forward(lo), warp.forward(hi));
    Ok(((warp.forward(x) - glo) / (ghi - glo)).clamp(0.0, 1.0))
}

/// Inverse of [`warp_value`]. Ints round to nearest then clamp; booleans
/// threshold at 0.5.
pub fn unwarp_value(spec: &ParamSpec, u: f64) -> Result<Value> {
    if !(0.0..=1.0).contains(&u) {
        return Err(spec.domain(format!("unit coordinate {u} outside [0, 1]")));
    }
    let real = |lo: f64, hi: f64, warp: Warp| -> f64 {
        if u == 0.0 {
            return lo;
        }
        if u == 1.0 {
            return hi;
        }
        let (glo, ghi) = (warp.forward(lo), warp.forward(hi));
        warp.inverse(glo + u * (ghi - glo)).clamp(lo, hi)
    };
    match &spec.kind {
        ParamKind::Real { lo, hi, warp } => Ok(Value::Real(real(*lo, *hi, *warp))),
        ParamKind::Int { lo, hi, warp } => {
            let x = real(*lo as f64, *hi as f64, *warp).round() as i64;
            Ok(Value::Int(x.clamp(*lo, *hi)))
        }
        ParamKind::Bool => Ok(Value::Bool(u >= 0.5)),
        ParamKind::Cat { .. } => {
            Err(spec.domain("categorical parameters are one-hot encoded, not warped"))
        }
    }
}

/// A typed raw parameter value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Real(f64),
    Cat(String),
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Real(x) => Some(*x),
            Value::Int(x) => Some(*x as f64),
            Value::Bool(b) => Some(if *b { 1.0 } else { 0.0 }),
            Value::Cat(_) => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Cat(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            Value::Int(x) => Some(*x),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(x) => write!(f, "{x}"),
            Value::Real(x) => write!(f, "{x}"),
            Value::Cat(s) => write!(f, "\"{s}\""),
        }
    }
}

/// A concrete parameter assignment in raw units.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Suggestion(BTreeMap<String, Value>);

impl Suggestion {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: impl Into<String>, value: Value) -> Self {
        self.0.insert(name.into(), value);
        self
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Value) {
        self.0.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.0.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Value)> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Real-valued lookup; panics are avoided by returning `None` on absence.
    pub fn real(&self, name: &str) -> Option<f64> {
        self.get(name).and_then(Value::as_f64)
    }
}

impl FromIterator<(String, Value)> for Suggestion {
    fn from_iter<I: IntoIterator<Item = (String, Value)>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

/// Canonical string identifying a space's names, kinds, warps and ranges.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpaceSignature(pub String);

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SearchSpace {
    params: Vec<ParamSpec>,
    offsets: Vec<usize>,
    encoded_dim: usize,
}

impl SearchSpace {
    pub fn new(params: Vec<ParamSpec>) -> Result<Self> {
        let mut offsets = Vec::with_capacity(params.len());
        let mut encoded_dim = 0;
        for (i, p) in params.iter().enumerate() {
            if params[..i].iter().any(|q| q.name == p.name) {
                return Err(SpaceError::DuplicateName(p.name.clone()));
            }
            offsets.push(encoded_dim);
            encoded_dim += p.width();
        }
        Ok(Self {
            params,
            offsets,
            encoded_dim,
        })
    }

    pub fn params(&self) -> &[ParamSpec] {
        &self.params
    }

    pub fn param(&self, name: &str) -> Option<&ParamSpec> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn encoded_dim(&self) -> usize {
        self.encoded_dim
    }

    /// Encoded coordinate range `[start, start + width)` of each parameter.
    pub fn blocks(&self) -> impl Iterator<Item = (&ParamSpec, std::ops::Range<usize>)> {
        self.params
            .iter()
            .zip(&self.offsets)
            .map(|(p, &o)| (p, o..o + p.width()))
    }

    pub fn signature(&self) -> SpaceSignature {
        SpaceSignature(serde_json::to_string(self).expect("space serializes"))
    }

    /// Validates a suggestion, collecting every offending parameter.
    pub fn validate(&self, s: &Suggestion) -> Result<()> {
        let mut issues = Vec::new();
        for p in &self.params {
            match s.get(&p.name) {
                None => issues.push(format!("{}: missing", p.name)),
                Some(v) => {
                    if let Err(e) = p.check(v) {
                        issues.push(match e {
                            SpaceError::Domain { param, reason } => format!("{param}: {reason}"),
                            other => other.to_string(),
                        });
                    }
                }
            }
        }
        for (name, _) in s.iter() {
            if self.param(name).is_none() {
                issues.push(format!("{name}: not a parameter of this space"));
            }
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(SpaceError::Validation(issues))
        }
    }

    /// Converts loosely typed values (e.g. JSON `5` for a real, `5.0` for an
    /// int) into the kinds the space declares, then validates.
    pub fn coerce(&self, s: &Suggestion) -> Result<Suggestion> {
        let mut out = Suggestion::new();
        for (name, v) in s.iter() {
            let v = match (self.param(name).map(|p| &p.kind), v) {
                (Some(ParamKind::Real { .. }), Value::Int(x)) => Value::Real(*x as f64),
                (Some(ParamKind::Int { .. }), Value::Real(x)) if x.fract() == 0.0 => {
                    Value::Int(*x as i64)
                }
                _ => v.clone(),
            };
            out.insert(name.clone(), v);
        }
        self.validate(&out)?;
        Ok(out)
    }

    pub fn encode(&self, s: &Suggestion) -> Result<Vec<f64>> {
        self.validate(s)?;
        let mut u = vec![0.0; self.encoded_dim];
        for (p, range) in self.blocks() {
            let v = s.get(&p.name).expect("validated");
            match &p.kind {
                ParamKind::Cat { values } => {
                    let label = v.as_str().expect("validated");
                    let idx = values.iter().position(|x| x == label).expect("validated");
                    u[range.start + idx] = 1.0;
                }
                _ => u[range.start] = warp_value(p, v)?,
            }
        }
        Ok(u)
    }

    pub fn decode(&self, u: &[f64]) -> Result<Suggestion> {
        if u.len() != self.encoded_dim {
            return Err(SpaceError::Shape {
                expected: self.encoded_dim,
                actual: u.len(),
            });
        }
        let mut s = Suggestion::new();
        for (p, range) in self.blocks() {
            let block = &u[range];
            let value = match &p.kind {
                ParamKind::Cat { values } => {
                    if let Some(bad) = block.iter().find(|x| !(0.0..=1.0).contains(*x)) {
                        return Err(p.domain(format!("unit coordinate {bad} outside [0, 1]")));
                    }
                    let mut best = 0;
                    for (i, &x) in block.iter().enumerate() {
                        if x > block[best] {
                            best = i;
                        }
                    }
                    Value::Cat(values[best].clone())
                }
                _ => unwarp_value(p, block[0])?,
            };
            s.insert(p.name.clone(), value);
        }
        Ok(s)
    }

    /// Projects an arbitrary point onto the nearest encodable point:
    /// clamp to the cube, decode, re-encode.
    pub fn snap(&self, u: &[f64]) -> Result<(Suggestion, Vec<f64>)> {
        let clamped: Vec<f64> = u
            .iter()
            .map(|x| if x.is_nan() { 0.5 } else { x.clamp(0.0, 1.0) })
            .collect();
        let s = self.decode(&clamped)?;
        let e = self.encode(&s)?;
        Ok((s, e))
    }

    /// Replaces names with `P1..Pn` in declaration order.
    pub fn anonymize(&self) -> (SearchSpace, AnonymizationMap) {
        let mut pairs = Vec::with_capacity(self.params.len());
        let params = self
            .params
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let alias = format!("P{}", i + 1);
                pairs.push((p.name.clone(), alias.clone()));
                p.renamed(alias)
            })
            .collect();
        let space = SearchSpace::new(params).expect("aliases are unique");
        (space, AnonymizationMap { pairs })
    }
}

/// Bijection between real parameter names and their `P<index>` aliases.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AnonymizationMap {
    pairs: Vec<(String, String)>,
}

impl AnonymizationMap {
    pub fn alias(&self, name: &str) -> Option<&str> {
        self.pairs
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, a)| a.as_str())
    }

    pub fn original(&self, alias: &str) -> Option<&str> {
        self.pairs
            .iter()
            .find(|(_, a)| a == alias)
            .map(|(n, _)| n.as_str())
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }

    pub fn to_alias(&self, s: &Suggestion) -> Suggestion {
        s.iter()
            .map(|(k, v)| (self.alias(k).unwrap_or(k).to_string(), v.clone()))
            .collect()
    }

    pub fn to_original(&self, s: &Suggestion) -> Suggestion {
        s.iter()
            .map(|(k, v)| (self.original(k).unwrap_or(k).to_string(), v.clone()))
            .collect()
    }
}
