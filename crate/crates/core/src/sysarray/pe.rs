//! Processing-element state and the tokens that travel between PEs.

use crate::matrix::Scalar;

/// A value in flight on a link, tagged with the sample (or reduction) index
/// it belongs to so the simulator can assert wavefront alignment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Token<T> {
    pub value: T,
    pub tag: usize,
}

/// What the vertical link carries in a given cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Vertical<T> {
    /// Streamed operand (`a` in OS / interleaved accumulate phases).
    Operand(Token<T>),
    /// Partial sum `res`.
    Partial(Token<T>),
}

impl<T> Vertical<T> {
    pub fn token(&self) -> &Token<T> {
        match self {
            Vertical::Operand(t) | Vertical::Partial(t) => t,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeState<T> {
    /// Stationary weight (WS / interleaved) or stationary operand in general.
    pub w_stationary: T,
    /// Stationary accumulator (OS / interleaved).
    pub g_accum: T,
    /// Eastbound pipeline register (delta in transit).
    pub pipe_west: Option<Token<T>>,
    /// Northbound pipeline register (operand or partial sum in transit).
    pub pipe_south: Option<Vertical<T>>,
}

impl<T: Scalar> Default for PeState<T> {
    fn default() -> Self {
        Self {
            w_stationary: T::ZERO,
            g_accum: T::ZERO,
            pipe_west: None,
            pipe_south: None,
        }
    }
}

/// `cols x rows` grid; `cols` runs along P (x), `rows` along Q (y).
#[derive(Debug, Clone)]
pub struct Grid<T> {
    pub cols: usize,
    pub rows: usize,
    pub pes: Vec<PeState<T>>,
}

impl<T: Scalar> Grid<T> {
    pub fn new(cols: usize, rows: usize) -> Self {
        Self {
            cols,
            rows,
            pes: vec![PeState::default(); cols * rows],
        }
    }

    #[inline]
    pub fn idx(&self, x: usize, y: usize) -> usize {
        y * self.cols + x
    }

    pub fn pe(&self, x: usize, y: usize) -> &PeState<T> {
        &self.pes[self.idx(x, y)]
    }

    pub fn pe_mut(&mut self, x: usize, y: usize) -> &mut PeState<T> {
        let i = self.idx(x, y);
        &mut self.pes[i]
    }

    pub fn links_idle(&self) -> bool {
        self.pes
            .iter()
            .all(|p| p.pipe_west.is_none() && p.pipe_south.is_none())
    }

    /// Shift-chain load: one row of `cols` words enters at `y = 0` per cycle
    /// and everything already loaded moves one row up. `rows_src(y)` returns
    /// the values that must end up in row `y`. Returns the cycle count.
    pub fn load_stationary(&mut self, rows_src: impl Fn(usize) -> Vec<T>) -> u64 {
        let (cols, rows) = (self.cols, self.rows);
        for cycle in 0..rows {
            for y in (1..rows).rev() {
                for x in 0..cols {
                    let below = self.pe(x, y - 1).w_stationary;
                    self.pe_mut(x, y).w_stationary = below;
                }
            }
            let row = rows_src(rows - 1 - cycle);
            debug_assert_eq!(row.len(), cols);
            for (x, v) in row.into_iter().enumerate() {
                self.pe_mut(x, 0).w_stationary = v;
            }
        }
        rows as u64
    }

    /// Reverse shift chain for the stationary accumulators: the top row leaves
    /// the array each cycle. Returns the rows in exit order (top first) and
    /// the cycle count.
    pub fn unload_accumulators(&mut self) -> (Vec<(usize, Vec<T>)>, u64) {
        let (cols, rows) = (self.cols, self.rows);
        let mut out = Vec::with_capacity(rows);
        // Row identity travels with the value; after c shifts, original row
        // rows-1-c sits at the top.
        let mut origin: Vec<usize> = (0..rows).collect();
        for _ in 0..rows {
            let top = rows - 1;
            out.push((
                origin[top],
                (0..cols).map(|x| self.pe(x, top).g_accum).collect(),
            ));
            for y in (1..rows).rev() {
                for x in 0..cols {
                    let below = self.pe(x, y - 1).g_accum;
                    self.pe_mut(x, y).g_accum = below;
                }
                origin[y] = origin[y - 1];
            }
            for x in 0..cols {
                self.pe_mut(x, 0).g_accum = T::ZERO;
            }
        }
        (out, rows as u64)
    }
}
