//! Gradient-interleaved tile: the activation gradient (weight-stationary
//! multiply) and the transposed weight gradient (output-stationary
//! accumulate) share one pass over the array, followed by an in-place SGD
//! step.
//!
//! Per-cycle behaviour of `PE(x, y)`, with `phase = t - x - y`:
//!
//! | phase      | west link  | vertical link in      | action                          | vertical link out |
//! |------------|------------|-----------------------|---------------------------------|-------------------|
//! | `2n`       | `d[y][n]`  | `a[x][n]`             | `g += d * a`                    | `a[x][n]`         |
//! | `2n + 1`   | `d[y][n]`  | `res` from `PE(x,y-1)`| `res' = res + d * w`            | `res'`            |
//!
//! Each delta word is read once and held on the west link for two cycles;
//! the vertical links alternate operand and partial-sum traffic.

use crate::matrix::{Matrix, Scalar};

use super::pe::{Grid, Token, Vertical};
use super::report::{AccessCounters, CycleReport, ReadPort, WritePort};

pub(crate) struct InterleavedRun<T> {
    pub partial_grad_a: Matrix<T>,
    pub grad_w_t: Matrix<T>,
    pub w_next: Matrix<T>,
    pub cycles: CycleReport,
    pub counters: AccessCounters,
}

/// `w`: `tq x tp` weight block (`w[y][x]`), `delta`: `tq x B`,
/// `act`: `tp x B`, `partial_in`: `tp x B` partial `grad_a` from the
/// row-tiles below this one.
pub(crate) fn run<T: Scalar>(
    w: &Matrix<T>,
    delta: &Matrix<T>,
    act: &Matrix<T>,
    partial_in: Option<&Matrix<T>>,
    lr: T,
) -> InterleavedRun<T> {
    let (tq, tp) = w.shape();
    let batch = delta.cols();
    debug_assert_eq!(delta.rows(), tq);
    debug_assert_eq!(act.shape(), (tp, batch));

    let mut counters = AccessCounters::default();
    let mut grid = Grid::new(tp, tq);
    let load = grid.load_stationary(|y| (0..tp).map(|x| w.get(y, x)).collect());
    counters.read(ReadPort::Weight, (tq * tp) as u64);

    let mut partial_out = Matrix::zeros(tp, batch);
    let expected_out = tp * batch;
    let expected_acc = tp * tq * batch;
    let (mut collected, mut accumulated) = (0, 0);
    let mut t: usize = 0;
    while collected < expected_out || accumulated < expected_acc {
        let west_prev: Vec<_> = grid.pes.iter().map(|p| p.pipe_west).collect();
        let south_prev: Vec<_> = grid.pes.iter().map(|p| p.pipe_south).collect();
        for y in 0..tq {
            for x in 0..tp {
                let west_in = if x == 0 {
                    // d[y][n] is presented on cycles 2n + y and 2n + y + 1.
                    t.checked_sub(y).filter(|&s| s / 2 < batch).map(|s| {
                        let n = s / 2;
                        if s % 2 == 0 {
                            counters.read(ReadPort::Delta, 1);
                        }
                        Token {
                            value: delta.get(y, n),
                            tag: n,
                        }
                    })
                } else {
                    west_prev[grid.idx(x - 1, y)]
                };
                let south_in = if y == 0 {
                    t.checked_sub(x).filter(|&s| s / 2 < batch).map(|s| {
                        let n = s / 2;
                        if s % 2 == 0 {
                            counters.read(ReadPort::Activation, 1);
                            Vertical::Operand(Token {
                                value: act.get(x, n),
                                tag: n,
                            })
                        } else {
                            let value = match partial_in {
                                Some(p) => {
                                    counters.read(ReadPort::Partial, 1);
                                    p.get(x, n)
                                }
                                None => T::ZERO,
                            };
                            Vertical::Partial(Token { value, tag: n })
                        }
                    })
                } else {
                    south_prev[grid.idx(x, y - 1)]
                };
                let pe = grid.pe_mut(x, y);
                match (west_in, south_in) {
                    (Some(d), Some(v)) => {
                        assert_eq!(
                            d.tag,
                            v.token().tag,
                            "wavefront misaligned at PE({x},{y}) cycle {t}"
                        );
                        let even = (t - x - y).is_multiple_of(2);
                        pe.pipe_west = Some(d);
                        match v {
                            Vertical::Operand(a) => {
                                assert!(even, "operand on odd phase at PE({x},{y}) cycle {t}");
                                pe.g_accum = pe.g_accum + a.value * d.value;
                                pe.pipe_south = Some(v);
                                accumulated += 1;
                            }
                            Vertical::Partial(r) => {
                                assert!(
                                    !even,
                                    "partial sum on even phase at PE({x},{y}) cycle {t}"
                                );
                                let res = r.value + pe.w_stationary * d.value;
                                pe.pipe_south = Some(Vertical::Partial(Token {
                                    value: res,
                                    tag: r.tag,
                                }));
                                if y == tq - 1 {
                                    partial_out[(x, r.tag)] = res;
                                    counters.write(WritePort::Result, 1);
                                    collected += 1;
                                }
                            }
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

    // The whole batch has been both multiplied against the old weight and
    // accumulated, so the update can fire in one cycle.
    let grad_w_t = Matrix::from_fn(tp, tq, |x, y| grid.pe(x, y).g_accum);
    for pe in &mut grid.pes {
        pe.w_stationary = pe.w_stationary - lr * pe.g_accum;
    }
    let w_next = Matrix::from_fn(tq, tp, |y, x| grid.pe(x, y).w_stationary);
    // Updated weights drain through the load chain while the next tile loads.
    counters.write(WritePort::Weight, (tq * tp) as u64);

    let compute = 2 * batch as u64;
    InterleavedRun {
        partial_grad_a: partial_out,
        grad_w_t,
        w_next,
        cycles: CycleReport::from_phases(load, compute, stream_cycles - compute, 0, 1),
        counters,
    }
}
