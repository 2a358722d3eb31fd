//! Named experimental conditions and their textual syntax.
//!
//! A condition is written `name=kind,k=N,p=F,seed=S`. Everything after the
//! kind is optional, and a bare `kind` names itself.

use std::fmt;
use std::str::FromStr;

use mapcs_core::strategy::{StrategyConfig, StrategyKind};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConditionError {
    #[error("empty condition spec")]
    Empty,
    #[error("condition {spec:?}: {reason}")]
    Syntax { spec: String, reason: String },
    #[error("duplicate condition name {0:?}")]
    Duplicate(String),
    #[error("unknown condition {0:?}")]
    Unknown(String),
    #[error("no conditions configured")]
    NoConditions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub name: String,
    pub config: StrategyConfig,
}

impl Condition {
    pub fn new(name: impl Into<String>, config: StrategyConfig) -> Self {
        Condition { name: name.into(), config }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.config;
        write!(f, "{}={},k={},p={},seed={}", self.name, c.kind, c.k, c.switch_probability, c.rng_seed)
    }
}

impl FromStr for Condition {
    type Err = ConditionError;

    fn from_str(spec: &str) -> Result<Self, Self::Err> {
        let spec = spec.trim();
        if spec.is_empty() {
            return Err(ConditionError::Empty);
        }
        let err = |reason: String| ConditionError::Syntax { spec: spec.to_string(), reason };
        let mut parts = spec.split(',').map(str::trim);
        let head = parts.next().unwrap_or_default();
        let (name, kind) = match head.split_once('=') {
            Some((name, kind)) => (name.trim(), kind.trim()),
            None => (head, head),
        };
        if name.is_empty() || name.chars().any(|c| c.is_whitespace() || c == ';') {
            return Err(err(format!("bad name {name:?}")));
        }
        let kind: StrategyKind = kind.parse().map_err(|e| err(format!("{e}")))?;
        let mut config = StrategyConfig::new(kind);
        for part in parts {
            let (key, value) = part.split_once('=').ok_or_else(|| err(format!("expected key=value, got {part:?}")))?;
            let bad = |_| err(format!("bad value for {key}: {value:?}"));
            match key.trim() {
                "k" => config.k = value.trim().parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
                "p" => {
                    config.switch_probability =
                        value.trim().parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?
                }
                "seed" => {
                    config.rng_seed = value.trim().parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?
                }
                other => return Err(err(format!("unknown parameter {other:?}"))),
            }
        }
        config.validate().map_err(|e| err(e.to_string()))?;
        Ok(Condition::new(name, config))
    }
}

/// The configured conditions, in order. `auto` assignment cycles through
/// them.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionSet {
    conditions: Vec<Condition>,
}

impl ConditionSet {
    pub fn new(conditions: Vec<Condition>) -> Result<Self, ConditionError> {
        if conditions.is_empty() {
            return Err(ConditionError::NoConditions);
        }
        for (i, c) in conditions.iter().enumerate() {
            if conditions[..i].iter().any(|d| d.name == c.name) {
                return Err(ConditionError::Duplicate(c.name.clone()));
            }
        }
        Ok(ConditionSet { conditions })
    }

    /// One condition per strategy, named after it.
    pub fn all_strategies() -> Self {
        ConditionSet {
            conditions: StrategyKind::ALL
                .into_iter()
                .map(|k| Condition::new(k.name(), StrategyConfig::new(k)))
                .collect(),
        }
    }

    /// Specs separated by `;` or whitespace.
    pub fn parse_list(list: &str) -> Result<Self, ConditionError> {
        let specs: Vec<Condition> = list
            .split(|c: char| c == ';' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(str::parse)
            .collect::<Result<_, _>>()?;
        ConditionSet::new(specs)
    }

    pub fn get(&self, name: &str) -> Result<&Condition, ConditionError> {
        self.conditions.iter().find(|c| c.name == name).ok_or_else(|| ConditionError::Unknown(name.to_string()))
    }

    pub fn round_robin(&self, n: u64) -> &Condition {
        &self.conditions[(n % self.conditions.len() as u64) as usize]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Condition> {
        self.conditions.iter()
    }

    pub fn len(&self) -> usize {
        self.conditions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.conditions.is_empty()
    }
}

impl Default for ConditionSet {
    fn default() -> Self {
        ConditionSet::all_strategies()
    }
}
