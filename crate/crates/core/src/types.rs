//! Shared domain types.
//!
//! Dimension convention used everywhere: a layer's weight matrix `W` is
//! `N x M` (row `y` = output neuron, column `x` = input neuron), and batch
//! samples are stored as columns (`a_prev` is `M x B`, `delta` is `N x B`).
//! On the array, `PE(x, y)` holds `W[y][x]`: `x` runs along the `P`
//! (horizontal) axis and `y` along the `Q` (vertical) axis.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::matrix::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LayerShape {
    /// Output neurons (N).
    pub n_out: usize,
    /// Input neurons (M).
    pub m_in: usize,
    /// Mini-batch size (B).
    pub batch: usize,
}

impl LayerShape {
    pub fn new(n_out: usize, m_in: usize, batch: usize) -> Result<Self> {
        if n_out == 0 || m_in == 0 || batch == 0 {
            return Err(Error::Dimension(format!(
                "layer shape must be positive, got N={n_out} M={m_in} B={batch}"
            )));
        }
        Ok(Self { n_out, m_in, batch })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ArrayGeometry {
    /// Horizontal PE count (P).
    pub p: usize,
    /// Vertical PE count (Q).
    pub q: usize,
}

impl ArrayGeometry {
    pub fn new(p: usize, q: usize) -> Result<Self> {
        if p == 0 || q == 0 {
            return Err(Error::Dimension(format!(
                "array must be at least 1x1, got {p}x{q}"
            )));
        }
        Ok(Self { p, q })
    }

    pub fn pes(&self) -> usize {
        self.p * self.q
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataflowMode {
    /// Weight-stationary.
    Ws,
    /// Output-stationary.
    Os,
    /// Input-stationary; only defined for the forward product.
    Is,
    /// Gradient-interleaved backward with in-place update.
    Interleaved,
}

impl DataflowMode {
    pub const TRADITIONAL: [DataflowMode; 3] =
        [DataflowMode::Ws, DataflowMode::Os, DataflowMode::Is];
    pub const ALL: [DataflowMode; 4] = [
        DataflowMode::Ws,
        DataflowMode::Os,
        DataflowMode::Is,
        DataflowMode::Interleaved,
    ];

    pub fn is_traditional(self) -> bool {
        self != DataflowMode::Interleaved
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DataflowMode::Ws => "ws",
            DataflowMode::Os => "os",
            DataflowMode::Is => "is",
            DataflowMode::Interleaved => "interleaved",
        }
    }
}

impl fmt::Display for DataflowMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DataflowMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ws" => Ok(DataflowMode::Ws),
            "os" => Ok(DataflowMode::Os),
            "is" => Ok(DataflowMode::Is),
            "interleaved" | "inter" => Ok(DataflowMode::Interleaved),
            other => config_err(format!("unknown dataflow mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    Identity,
    Relu,
    Sigmoid,
}

impl ActivationKind {
    pub fn apply<T: Scalar>(self, x: T) -> Result<T> {
        match self {
            ActivationKind::Identity => Ok(x),
            ActivationKind::Relu => Ok(if x > T::ZERO { x } else { T::ZERO }),
            ActivationKind::Sigmoid => x
                .sigmoid()
                .ok_or_else(|| Error::Config("sigmoid needs f64 precision".into())),
        }
    }

    /// Analytic derivative; ReLU's derivative at 0 is 0.
    pub fn derivative<T: Scalar>(self, x: T) -> Result<T> {
        match self {
            ActivationKind::Identity => Ok(T::ONE),
            ActivationKind::Relu => Ok(if x > T::ZERO { T::ONE } else { T::ZERO }),
            ActivationKind::Sigmoid => {
                let s = self.apply(x)?;
                Ok(s * (T::ONE - s))
            }
        }
    }
}

/// Datapath precision selector for runtime entry points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    Int,
    F64,
}

impl FromStr for Precision {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "int" => Ok(Precision::Int),
            "f64" => Ok(Precision::F64),
            other => config_err(format!("unknown precision {other:?}")),
        }
    }
}
