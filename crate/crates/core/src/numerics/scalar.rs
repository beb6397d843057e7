use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::field::FieldElement;
use crate::error::{Error, Result};

/// A number as it appears in outputs: exact, or a float of stated precision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scalar {
    Exact(FieldElement),
    Float { value: String, bits: u32 },
}

impl Scalar {
    pub fn from_f64(x: f64) -> Self {
        Scalar::Float { value: format!("{x:?}"), bits: 53 }
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            Scalar::Exact(x) => x.to_f64(),
            Scalar::Float { value, .. } => value.parse().unwrap_or(f64::NAN),
        }
    }

    pub fn as_exact(&self) -> Option<&FieldElement> {
        match self {
            Scalar::Exact(x) => Some(x),
            Scalar::Float { .. } => None,
        }
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Exact(x) => write!(f, "{x}"),
            Scalar::Float { value, .. } => write!(f, "{value}"),
        }
    }
}

/// Arithmetic backend selection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Exact,
    Float { bits: u32 },
}

/// Precisions with a compiled-in float backend.
pub const SUPPORTED_BITS: [u32; 4] = [53, 80, 128, 256];

pub const DEFAULT_FLOAT_BITS: u32 = 80;

impl Backend {
    pub fn float(bits: u32) -> Result<Self> {
        if SUPPORTED_BITS.contains(&bits) {
            Ok(Backend::Float { bits })
        } else {
            Err(Error::InvalidArgument(format!(
                "unsupported precision {bits}; choose one of {SUPPORTED_BITS:?}"
            )))
        }
    }
}

impl Default for Backend {
    fn default() -> Self {
        Backend::Float { bits: DEFAULT_FLOAT_BITS }
    }
}

impl FromStr for Backend {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Backend::Exact),
            "float" => Ok(Backend::default()),
            other => Err(Error::InvalidArgument(format!("unknown backend `{other}`"))),
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Backend::Exact => write!(f, "exact"),
            Backend::Float { bits } => write!(f, "float{bits}"),
        }
    }
}
