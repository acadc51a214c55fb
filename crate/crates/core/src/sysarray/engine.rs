//! Cycle-stepped engines shared by every dataflow.
//!
//! Orientation for all engines: `x` is the column index (P axis), `y` the
//! row index (Q axis). Eastbound operands enter at `x = 0`, northbound
//! operands and partial sums enter at `y = 0`, and each hop costs one cycle.
//! Streams entering row `y` (or column `x`) are skewed by `y` (or `x`) cycles.

use crate::matrix::{Matrix, Scalar};

use super::pe::{Grid, Token, Vertical};
use super::report::{AccessCounters, CycleReport, ReadPort, WritePort};

/// Counter routing for the held-operand engine.
#[derive(Debug, Clone, Copy)]
pub(crate) struct HeldPorts {
    pub held: ReadPort,
    pub stream: ReadPort,
    pub out: WritePort,
}

/// Counter routing for the output-stationary engine.
#[derive(Debug, Clone, Copy)]
pub(crate) struct OsPorts {
    /// Operand entering the south edge, indexed by column.
    pub south: ReadPort,
    /// Operand entering the west edge, indexed by row.
    pub west: ReadPort,
    pub out: WritePort,
}

pub(crate) struct EngineRun<T> {
    pub out: Matrix<T>,
    pub cycles: CycleReport,
    pub counters: AccessCounters,
}

fn skewed(t: usize, offset: usize, len: usize) -> Option<usize> {
    t.checked_sub(offset).filter(|&k| k < len)
}

/// Held-operand pass: `out[i][j] = partial_in[i][j] + sum_k held[k][i] * stream[k][j]`.
///
/// `held` (`tk x ti`) is loaded so that `PE(i, k)` keeps `held[k][i]`.
/// `stream[k][j]` enters row `k` from the west; partial sums climb the
/// columns and leave at the top row. This is the weight-stationary mapping
/// when `held` is a weight tile and the input-stationary one when it is an
/// activation tile.
pub(crate) fn run_held<T: Scalar>(
    held: &Matrix<T>,
    stream: &Matrix<T>,
    partial_in: Option<&Matrix<T>>,
    ports: HeldPorts,
) -> EngineRun<T> {
    let (tk, ti) = held.shape();
    let jn = stream.cols();
    debug_assert_eq!(stream.rows(), tk);
    debug_assert!(partial_in.is_none_or(|p| p.shape() == (ti, jn)));

    let mut counters = AccessCounters::default();
    let mut grid = Grid::new(ti, tk);
    let load = grid.load_stationary(|y| (0..ti).map(|x| held.get(y, x)).collect());
    counters.read(ports.held, (tk * ti) as u64);

    let mut out = Matrix::zeros(ti, jn);
    let expected = ti * jn;
    let mut collected = 0;
    let mut t = 0;
    while collected < expected {
        let west_prev: Vec<_> = grid.pes.iter().map(|p| p.pipe_west).collect();
        let south_prev: Vec<_> = grid.pes.iter().map(|p| p.pipe_south).collect();
        for y in 0..tk {
            for x in 0..ti {
                let west_in = if x == 0 {
                    skewed(t, y, jn).map(|j| {
                        counters.read(ports.stream, 1);
                        Token {
                            value: stream.get(y, j),
                            tag: j,
                        }
                    })
                } else {
                    west_prev[grid.idx(x - 1, y)]
                };
                let south_in = if y == 0 {
                    skewed(t, x, jn).map(|j| {
                        let value = match partial_in {
                            Some(p) => {
                                counters.read(ReadPort::Partial, 1);
                                p.get(x, j)
                            }
                            None => T::ZERO,
                        };
                        Vertical::Partial(Token { value, tag: j })
                    })
                } else {
                    south_prev[grid.idx(x, y - 1)]
                };
                let pe = grid.pe_mut(x, y);
                match (west_in, south_in) {
                    (Some(d), Some(Vertical::Partial(r))) => {
                        assert_eq!(
                            d.tag, r.tag,
                            "wavefront misaligned at PE({x},{y}) cycle {t}"
                        );
                        let res = r.value + pe.w_stationary * d.value;
                        pe.pipe_west = Some(d);
                        pe.pipe_south = Some(Vertical::Partial(Token {
                            value: res,
                            tag: d.tag,
                        }));
                        if y == tk - 1 {
                            out[(x, d.tag)] = res;
                            counters.write(ports.out, 1);
                            collected += 1;
                        }
                    }
                    (None, None) => {
                        pe.pipe_west = None;
                        pe.pipe_south = None;
                    }
                    other => panic!("unpaired operands at PE({x},{y}) cycle {t}: {other:?}"),
                }
            }
        }
        t += 1;
    }
    let stream_cycles = t as u64;
    let compute = jn as u64;
    EngineRun {
        out,
        cycles: CycleReport::from_phases(load, compute, stream_cycles - compute, 0, 0),
        counters,
    }
}

/// Output-stationary pass: `out[i][j] = sum_k south[i][k] * west[j][k]`,
/// accumulated in `PE(i, j)` and shifted out afterwards.
pub(crate) fn run_os<T: Scalar>(
    south: &Matrix<T>,
    west: &Matrix<T>,
    ports: OsPorts,
) -> EngineRun<T> {
    let (ti, kn) = south.shape();
    let tj = west.rows();
    debug_assert_eq!(west.cols(), kn);

    let mut counters = AccessCounters::default();
    let mut grid = Grid::new(ti, tj);
    let expected = ti * tj * kn;
    let mut macs = 0;
    let mut t = 0;
    while macs < expected {
        let west_prev: Vec<_> = grid.pes.iter().map(|p| p.pipe_west).collect();
        let south_prev: Vec<_> = grid.pes.iter().map(|p| p.pipe_south).collect();
        for y in 0..tj {
            for x in 0..ti {
                let west_in = if x == 0 {
                    skewed(t, y, kn).map(|k| {
                        counters.read(ports.west, 1);
                        Token {
                            value: west.get(y, k),
                            tag: k,
                        }
                    })
                } else {
                    west_prev[grid.idx(x - 1, y)]
                };
                let south_in = if y == 0 {
                    skewed(t, x, kn).map(|k| {
                        counters.read(ports.south, 1);
                        Vertical::Operand(Token {
                            value: south.get(x, k),
                            tag: k,
                        })
                    })
                } else {
                    south_prev[grid.idx(x, y - 1)]
                };
                let pe = grid.pe_mut(x, y);
                match (west_in, south_in) {
                    (Some(d), Some(Vertical::Operand(a))) => {
                        assert_eq!(
                            d.tag, a.tag,
                            "wavefront misaligned at PE({x},{y}) cycle {t}"
                        );
                        pe.g_accum = pe.g_accum + a.value * d.value;
                        pe.pipe_west = Some(d);
                        pe.pipe_south = Some(Vertical::Operand(a));
                        macs += 1;
                    }
                    (None, None) => {
                        pe.pipe_west = None;
                        pe.pipe_south = None;
                    }
                    other => panic!("unpaired operands at PE({x},{y}) cycle {t}: {other:?}"),
                }
            }
        }
        t += 1;
    }
    let stream_cycles = t as u64;
    let (rows, unload) = grid.unload_accumulators();
    let mut out = Matrix::zeros(ti, tj);
    for (y, vals) in rows {
        for (x, v) in vals.into_iter().enumerate() {
            out[(x, y)] = v;
        }
    }
    counters.write(ports.out, (ti * tj) as u64);
    let compute = kn as u64;
    EngineRun {
        out,
        cycles: CycleReport::from_phases(0, compute, stream_cycles - compute, unload, 0),
        counters,
    }
}

/// Number of cycles an elementwise pass over `elements` words takes when
/// every PE handles one element per cycle.
pub fn elementwise_cycles(elements: usize, pes: usize) -> u64 {
    elements.div_ceil(pes) as u64
}
