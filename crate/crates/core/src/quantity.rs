//! Units and measured quantities.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unit must be a non-empty string")]
pub struct EmptyUnit;

/// A unit symbol such as `m`, `deg` or `m^2`. Units are compared literally;
/// no conversion is attempted.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Unit(String);

impl Unit {
    /// Unit of boolean validity measurements (1 = valid, 0 = invalid).
    pub const FLAG: &'static str = "flag";

    pub fn new(symbol: impl Into<String>) -> Result<Self, EmptyUnit> {
        let symbol = symbol.into();
        if symbol.trim().is_empty() {
            Err(EmptyUnit)
        } else {
            Ok(Unit(symbol))
        }
    }

    pub fn flag() -> Self {
        Unit(Self::FLAG.to_string())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for Unit {
    type Error = EmptyUnit;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Unit::new(value)
    }
}

impl From<Unit> for String {
    fn from(u: Unit) -> Self {
        u.0
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl PartialEq<str> for Unit {
    fn eq(&self, other: &str) -> bool {
        self.0 == other
    }
}

impl PartialEq<&str> for Unit {
    fn eq(&self, other: &&str) -> bool {
        self.0 == *other
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantity {
    pub value: f64,
    pub unit: Unit,
}

impl Quantity {
    /// Panics if `unit` is empty; intended for literals.
    pub fn new(value: f64, unit: &str) -> Self {
        Self {
            value,
            unit: Unit::new(unit).expect("non-empty unit literal"),
        }
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.value, self.unit)
    }
}
