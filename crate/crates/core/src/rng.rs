//! Deterministic test-data generation.
//!
//! The generator is xorshift64* (Marsaglia / Vigna) seeded through one
//! SplitMix64 step, so the stream is reproducible from its update equations
//! alone:
//!
//! ```text
//! seed:  z = seed + 0x9E3779B97F4A7C15
//!        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//!        z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//!        state = z ^ (z >> 31)            (0 is replaced by 0x9E3779B97F4A7C15)
//! next:  x ^= x >> 12; x ^= x << 25; x ^= x >> 27
//!        return x * 0x2545F4914F6CDD1D     (all arithmetic mod 2^64)
//! ```
//!
//! `small_int` values are `((next >> 32) % 17) - 8`, `unit_float` values are
//! `2 * ((next >> 11) / 2^53) - 1`.

use serde::{Deserialize, Serialize};

use crate::error::{config_err, dim_err, Result};
use crate::matrix::{Matrix, Scalar};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone)]
pub struct XorShift64Star {
    state: u64,
}

impl XorShift64Star {
    pub fn new(seed: u64) -> Self {
        let mut z = seed.wrapping_add(GOLDEN_GAMMA);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        let state = z ^ (z >> 31);
        Self {
            state: if state == 0 { GOLDEN_GAMMA } else { state },
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.state = x;
        x.wrapping_mul(0x2545_F491_4F6C_DD1D)
    }

    /// Integer in `[-8, 8]`.
    pub fn small_int(&mut self) -> i64 {
        ((self.next_u64() >> 32) % 17) as i64 - 8
    }

    /// Float in `[-1, 1)`.
    pub fn unit_float(&mut self) -> f64 {
        let u = (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        2.0 * u - 1.0
    }

    /// Uniform index in `0..n` (modulo reduction; `n` is always tiny here).
    pub fn below(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueClass {
    SmallInt,
    UnitFloat,
}

/// Element types that can be drawn from the generator.
pub trait SeededValue: Scalar {
    fn draw(rng: &mut XorShift64Star, class: ValueClass) -> Result<Self>;
}

impl SeededValue for i64 {
    fn draw(rng: &mut XorShift64Star, class: ValueClass) -> Result<Self> {
        match class {
            ValueClass::SmallInt => Ok(rng.small_int()),
            ValueClass::UnitFloat => config_err("unit_float values need f64 precision"),
        }
    }
}

impl SeededValue for f64 {
    fn draw(rng: &mut XorShift64Star, class: ValueClass) -> Result<Self> {
        Ok(match class {
            ValueClass::SmallInt => rng.small_int() as f64,
            ValueClass::UnitFloat => rng.unit_float(),
        })
    }
}

/// Row-major matrix filled from a fresh generator seeded with `seed`.
pub fn seeded_matrix<T: SeededValue>(
    rows: usize,
    cols: usize,
    seed: u64,
    class: ValueClass,
) -> Result<Matrix<T>> {
    if rows == 0 || cols == 0 {
        return dim_err(format!(
            "seeded matrix needs positive dims, got {rows}x{cols}"
        ));
    }
    let mut rng = XorShift64Star::new(seed);
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        data.push(T::draw(&mut rng, class)?);
    }
    Matrix::from_vec(rows, cols, data)
}
