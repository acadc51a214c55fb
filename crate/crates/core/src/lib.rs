//! Systolic-array training simulator: reference math, a cycle-stepped PE
//! grid, closed-form costs, a multiprocessor scheduler and sweep harness.

pub mod bench;
pub mod costmodel;
pub mod error;
pub mod golden;
pub mod matrix;
pub mod rng;
pub mod schedule;
pub mod sysarray;
pub mod types;

pub use error::{Error, Result};
pub use matrix::{Matrix, MatrixF, MatrixI, Scalar};
pub use rng::{seeded_matrix, SeededValue, ValueClass, XorShift64Star};
pub use sysarray::{AccessCounters, CycleReport};
pub use types::{ActivationKind, ArrayGeometry, DataflowMode, LayerShape, Precision};
