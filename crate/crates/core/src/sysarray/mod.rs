//! Cycle-stepped model of the P x Q processing-element grid.
//!
//! `PE(x, y)` sits at column `x` (`0..P`) and row `y` (`0..Q`). For the
//! backward pass a weight tile covers rows `y0..y0+tq` of `W` (output
//! neurons, along Q) and columns `x0..x0+tp` (input neurons, along P).
//!
//! Cycle model per tile (true extents, so edge tiles are cheaper):
//!
//! | mapping        | cycles                                   |
//! |----------------|------------------------------------------|
//! | held operand   | `tk` load + `J` stream + `(ti-1) + (tk-1)` drain |
//! | output-stat.   | `K` stream + `(ti-1) + (tj-1)` drain + `tj` unload |
//! | interleaved    | `tq` load + `2B` + `(tp-1) + (tq-1)` drain + 1 update |
//!
//! Elementwise passes (update, Hadamard, activation) take
//! `ceil(elements / PQ)` cycles.

mod engine;
mod interleaved;
mod pe;
mod report;

pub use engine::elementwise_cycles;
pub use pe::{Grid, PeState, Token, Vertical};
pub use report::{AccessCounters, CycleReport, ReadPort, WritePort};

use serde::Serialize;

use crate::error::{config_err, dim_err, Result};
use crate::golden::{TrainStepInputs, TrainStepOutputs};
use crate::matrix::{Matrix, Scalar};
use crate::types::{ActivationKind, ArrayGeometry, DataflowMode, LayerShape};
use engine::{run_held, run_os, HeldPorts, OsPorts};

/// One tile's worth of work. Which operands must be present depends on the
/// mode: WS needs `weight` and `delta`; OS needs `delta` and `activation`;
/// INTERLEAVED needs all three plus `lr`.
#[derive(Debug, Clone)]
pub struct TileJob<T> {
    pub mode: DataflowMode,
    pub geom: ArrayGeometry,
    /// Rows of `W` covered (output neurons), at most Q.
    pub tile_rows: usize,
    /// Columns of `W` covered (input neurons), at most P.
    pub tile_cols: usize,
    pub batch: usize,
    /// `tile_rows x tile_cols`.
    pub weight: Option<Matrix<T>>,
    /// `tile_rows x B`.
    pub delta: Option<Matrix<T>>,
    /// `tile_cols x B`.
    pub activation: Option<Matrix<T>>,
    /// `tile_cols x B` running sum of `grad_a` from earlier row-tiles.
    pub partial_in: Option<Matrix<T>>,
    pub lr: Option<T>,
}

impl<T: Scalar> TileJob<T> {
    pub fn new(
        mode: DataflowMode,
        geom: ArrayGeometry,
        tile_rows: usize,
        tile_cols: usize,
        batch: usize,
    ) -> Self {
        Self {
            mode,
            geom,
            tile_rows,
            tile_cols,
            batch,
            weight: None,
            delta: None,
            activation: None,
            partial_in: None,
            lr: None,
        }
    }

    fn check(&self, want: DataflowMode) -> Result<()> {
        if self.mode != want {
            return config_err(format!(
                "tile job is {} but {} was requested",
                self.mode, want
            ));
        }
        if self.tile_rows == 0 || self.tile_cols == 0 || self.batch == 0 {
            return dim_err("tile dimensions must be at least 1");
        }
        if self.tile_rows > self.geom.q || self.tile_cols > self.geom.p {
            return dim_err(format!(
                "tile {}x{} does not fit a {}x{} array",
                self.tile_rows, self.tile_cols, self.geom.p, self.geom.q
            ));
        }
        Ok(())
    }

    fn operand(
        &self,
        m: &Option<Matrix<T>>,
        name: &str,
        shape: (usize, usize),
    ) -> Result<Matrix<T>> {
        match m {
            None => dim_err(format!("{} tile needs a {name} slice", self.mode)),
            Some(m) if m.shape() != shape => dim_err(format!(
                "{name} slice is {:?}, expected {shape:?}",
                m.shape()
            )),
            Some(m) => Ok(m.clone()),
        }
    }

    fn partial(&self) -> Result<Option<&Matrix<T>>> {
        match &self.partial_in {
            Some(p) if p.shape() != (self.tile_cols, self.batch) => dim_err(format!(
                "partial_in is {:?}, expected {:?}",
                p.shape(),
                (self.tile_cols, self.batch)
            )),
            p => Ok(p.as_ref()),
        }
    }
}

/// Result of a single-output pass (one tile or a whole tiled product).
#[derive(Debug, Clone, PartialEq)]
pub struct PassRun<T> {
    pub out: Matrix<T>,
    pub cycles: CycleReport,
    pub counters: AccessCounters,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterleavedTile<T> {
    pub partial_grad_a: Matrix<T>,
    pub w_next_tile: Matrix<T>,
    pub grad_w_t_tile: Matrix<T>,
    pub cycles: CycleReport,
    pub counters: AccessCounters,
}

/// `partial_grad_a[x][n] = partial_in[x][n] + sum_y w[y][x] * delta[y][n]`.
pub fn run_tile_ws<T: Scalar>(job: &TileJob<T>) -> Result<PassRun<T>> {
    job.check(DataflowMode::Ws)?;
    let w = job.operand(&job.weight, "weight", (job.tile_rows, job.tile_cols))?;
    let d = job.operand(&job.delta, "delta", (job.tile_rows, job.batch))?;
    let ports = HeldPorts {
        held: ReadPort::Weight,
        stream: ReadPort::Delta,
        out: WritePort::Result,
    };
    let r = run_held(&w, &d, job.partial()?, ports);
    Ok(PassRun {
        out: r.out,
        cycles: r.cycles,
        counters: r.counters,
    })
}

/// `grad_w_t_tile[x][y] = sum_n a[x][n] * delta[y][n]`, accumulated in place
/// and then shifted out.
pub fn run_tile_os<T: Scalar>(job: &TileJob<T>) -> Result<PassRun<T>> {
    job.check(DataflowMode::Os)?;
    let d = job.operand(&job.delta, "delta", (job.tile_rows, job.batch))?;
    let a = job.operand(&job.activation, "activation", (job.tile_cols, job.batch))?;
    let ports = OsPorts {
        south: ReadPort::Activation,
        west: ReadPort::Delta,
        out: WritePort::Grad,
    };
    let r = run_os(&a, &d, ports);
    Ok(PassRun {
        out: r.out,
        cycles: r.cycles,
        counters: r.counters,
    })
}

pub fn run_tile_interleaved<T: Scalar>(job: &TileJob<T>) -> Result<InterleavedTile<T>> {
    job.check(DataflowMode::Interleaved)?;
    let Some(lr) = job.lr else {
        return config_err("interleaved tile needs a learning rate");
    };
    let w = job.operand(&job.weight, "weight", (job.tile_rows, job.tile_cols))?;
    let d = job.operand(&job.delta, "delta", (job.tile_rows, job.batch))?;
    let a = job.operand(&job.activation, "activation", (job.tile_cols, job.batch))?;
    let r = interleaved::run(&w, &d, &a, job.partial()?, lr);
    Ok(InterleavedTile {
        partial_grad_a: r.partial_grad_a,
        w_next_tile: r.w_next,
        grad_w_t_tile: r.grad_w_t,
        cycles: r.cycles,
        counters: r.counters,
    })
}

fn check_geom(geom: ArrayGeometry) -> Result<()> {
    if geom.p == 0 || geom.q == 0 {
        return dim_err("array dimensions must be at least 1");
    }
    Ok(())
}

/// Tiled `out[i][j] = sum_k held[k][i] * stream[k][j]` with `k` along Q and
/// `i` along P. Row-tiles of `k` are chained through the partial-sum input so
/// each output is summed in ascending `k`.
fn tiled_held<T: Scalar>(
    geom: ArrayGeometry,
    held: &Matrix<T>,
    stream: &Matrix<T>,
    ports: HeldPorts,
) -> PassRun<T> {
    let (kn, ni) = held.shape();
    let jn = stream.cols();
    let mut out = Matrix::zeros(ni, jn);
    let mut cycles = CycleReport::default();
    let mut counters = AccessCounters::default();
    for i0 in (0..ni).step_by(geom.p) {
        let ti = geom.p.min(ni - i0);
        let mut partial: Option<Matrix<T>> = None;
        for k0 in (0..kn).step_by(geom.q) {
            let tk = geom.q.min(kn - k0);
            let h = held.block(k0, i0, tk, ti);
            let s = stream.block(k0, 0, tk, jn);
            let r = run_held(&h, &s, partial.as_ref(), ports);
            cycles += r.cycles;
            counters += r.counters;
            partial = Some(r.out);
        }
        out.set_block(i0, 0, &partial.expect("at least one row-tile"));
    }
    PassRun {
        out,
        cycles,
        counters,
    }
}

/// Tiled `out[i][j] = sum_k south[i][k] * west[j][k]` with `i` along P and
/// `j` along Q.
fn tiled_os<T: Scalar>(
    geom: ArrayGeometry,
    south: &Matrix<T>,
    west: &Matrix<T>,
    ports: OsPorts,
) -> PassRun<T> {
    let (ni, kn) = south.shape();
    let nj = west.rows();
    let mut out = Matrix::zeros(ni, nj);
    let mut cycles = CycleReport::default();
    let mut counters = AccessCounters::default();
    for i0 in (0..ni).step_by(geom.p) {
        let ti = geom.p.min(ni - i0);
        for j0 in (0..nj).step_by(geom.q) {
            let tj = geom.q.min(nj - j0);
            let r = run_os(
                &south.block(i0, 0, ti, kn),
                &west.block(j0, 0, tj, kn),
                ports,
            );
            cycles += r.cycles;
            counters += r.counters;
            out.set_block(i0, j0, &r.out);
        }
    }
    PassRun {
        out,
        cycles,
        counters,
    }
}

/// Forward product `z = W a_prev` under a traditional dataflow.
///
/// * WS holds `W^T` tiles (input neuron along Q, output neuron along P) and
///   streams the batch.
/// * IS holds activation tiles (input neuron along Q, sample along P) and
///   streams weight rows; the result leaves transposed.
/// * OS accumulates `z` in place with output neurons along P and samples
///   along Q.
pub fn run_forward<T: Scalar>(
    geom: ArrayGeometry,
    mode: DataflowMode,
    w: &Matrix<T>,
    a_prev: &Matrix<T>,
) -> Result<PassRun<T>> {
    check_geom(geom)?;
    if w.cols() != a_prev.rows() {
        return dim_err(format!(
            "forward: W is {:?} but a_prev has {} rows",
            w.shape(),
            a_prev.rows()
        ));
    }
    Ok(match mode {
        DataflowMode::Ws => {
            let ports = HeldPorts { held: ReadPort::Weight, stream: ReadPort::Activation, out: WritePort::Result };
            tiled_held(geom, &w.transpose(), a_prev, ports)
        }
        DataflowMode::Is => {
            let ports = HeldPorts { held: ReadPort::Activation, stream: ReadPort::Weight, out: WritePort::Result };
            let r = tiled_held(geom, a_prev, &w.transpose(), ports);
            PassRun { out: r.out.transpose(), ..r }
        }
        DataflowMode::Os => {
            let ports = OsPorts { south: ReadPort::Weight, west: ReadPort::Activation, out: WritePort::Result };
            tiled_os(geom, w, &a_prev.transpose(), ports)
        }
        DataflowMode::Interleaved => {
            return config_err("interleaving is a backward-pass schedule; the forward pass uses a traditional dataflow")
        }
    })
}

/// `a = f(z)` elementwise: one read and one write per element.
pub fn activation_pass<T: Scalar>(
    geom: ArrayGeometry,
    z: &Matrix<T>,
    act: ActivationKind,
) -> Result<PassRun<T>> {
    check_geom(geom)?;
    let mut data = Vec::with_capacity(z.data().len());
    for &v in z.data() {
        data.push(act.apply(v)?);
    }
    let out = Matrix::from_vec(z.rows(), z.cols(), data)?;
    let n = z.data().len();
    let mut counters = AccessCounters::default();
    counters.read(ReadPort::Partial, n as u64);
    counters.write(WritePort::Result, n as u64);
    let cycles = CycleReport::from_phases(0, elementwise_cycles(n, geom.pes()), 0, 0, 0);
    Ok(PassRun {
        out,
        cycles,
        counters,
    })
}

/// `delta_prev = grad_a ⊙ f'(z_prev)`: read both operands, write the result.
pub fn hadamard_pass<T: Scalar>(
    geom: ArrayGeometry,
    grad_a: &Matrix<T>,
    fprime: &Matrix<T>,
) -> Result<PassRun<T>> {
    check_geom(geom)?;
    let out = grad_a.hadamard(fprime)?;
    let n = out.data().len() as u64;
    let mut counters = AccessCounters::default();
    counters.read(ReadPort::Partial, n);
    counters.read(ReadPort::Activation, n);
    counters.write(WritePort::Result, n);
    let cycles =
        CycleReport::from_phases(0, elementwise_cycles(out.data().len(), geom.pes()), 0, 0, 0);
    Ok(PassRun {
        out,
        cycles,
        counters,
    })
}

/// Separate SGD pass of the traditional flow: read `G`, read `W`, write `W`.
pub fn update_pass<T: Scalar>(
    geom: ArrayGeometry,
    w: &Matrix<T>,
    grad_w_t: &Matrix<T>,
    lr: T,
) -> Result<PassRun<T>> {
    check_geom(geom)?;
    let out = crate::golden::sgd_update(w, grad_w_t, lr)?;
    let n = out.data().len() as u64;
    let mut counters = AccessCounters::default();
    counters.read(ReadPort::Grad, n);
    counters.read(ReadPort::Weight, n);
    counters.write(WritePort::Weight, n);
    let cycles =
        CycleReport::from_phases(0, 0, 0, 0, elementwise_cycles(out.data().len(), geom.pes()));
    Ok(PassRun {
        out,
        cycles,
        counters,
    })
}

/// Cost of one named pass inside a layer run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PassCost {
    pub pass: &'static str,
    pub cycles: CycleReport,
    pub counters: AccessCounters,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerRun<T> {
    pub outputs: TrainStepOutputs<T>,
    pub cycles: CycleReport,
    pub counters: AccessCounters,
    pub passes: Vec<PassCost>,
}

impl<T> LayerRun<T> {
    fn push(&mut self, pass: &'static str, cycles: CycleReport, counters: AccessCounters) {
        self.cycles += cycles;
        self.counters += counters;
        self.passes.push(PassCost {
            pass,
            cycles,
            counters,
        });
    }
}

/// Backward step of one layer on the array, tiles executed serially.
///
/// Every traditional mode runs the activation gradient weight-stationary,
/// the weight gradient output-stationary and a separate update pass; the
/// mode only matters for the forward pass. INTERLEAVED fuses all three into
/// one pass per tile. Both finish with the Hadamard pass.
pub fn run_layer<T: Scalar>(
    shape: LayerShape,
    geom: ArrayGeometry,
    mode: DataflowMode,
    inputs: &TrainStepInputs<T>,
) -> Result<LayerRun<T>> {
    check_geom(geom)?;
    let dims = inputs.dims()?;
    if dims != (shape.n_out, shape.m_in, shape.batch) {
        return dim_err(format!(
            "inputs are {dims:?} but the layer shape is {:?}",
            (shape.n_out, shape.m_in, shape.batch)
        ));
    }
    let TrainStepInputs {
        w,
        a_prev,
        delta,
        fprime_z_prev,
        lr,
    } = inputs;
    let mut run = LayerRun {
        outputs: TrainStepOutputs {
            grad_a: Matrix::zeros(0, 0),
            delta_prev: Matrix::zeros(0, 0),
            grad_w_t: Matrix::zeros(0, 0),
            w_next: Matrix::zeros(0, 0),
        },
        cycles: CycleReport::default(),
        counters: AccessCounters::default(),
        passes: Vec::new(),
    };
    if mode.is_traditional() {
        let eq4 = HeldPorts {
            held: ReadPort::Weight,
            stream: ReadPort::Delta,
            out: WritePort::Result,
        };
        let ga = tiled_held(geom, w, delta, eq4);
        let eq6 = OsPorts {
            south: ReadPort::Activation,
            west: ReadPort::Delta,
            out: WritePort::Grad,
        };
        let gw = tiled_os(geom, a_prev, delta, eq6);
        let up = update_pass(geom, w, &gw.out, *lr)?;
        run.push("activation_grad", ga.cycles, ga.counters);
        run.push("weight_grad", gw.cycles, gw.counters);
        run.push("update", up.cycles, up.counters);
        run.outputs.grad_a = ga.out;
        run.outputs.grad_w_t = gw.out;
        run.outputs.w_next = up.out;
    } else {
        let (n, m, b) = dims;
        let mut grad_a = Matrix::zeros(m, b);
        let mut grad_w_t = Matrix::zeros(m, n);
        let mut w_next = Matrix::zeros(n, m);
        let mut cycles = CycleReport::default();
        let mut counters = AccessCounters::default();
        for x0 in (0..m).step_by(geom.p) {
            let tp = geom.p.min(m - x0);
            let act = a_prev.block(x0, 0, tp, b);
            let mut partial: Option<Matrix<T>> = None;
            for y0 in (0..n).step_by(geom.q) {
                let tq = geom.q.min(n - y0);
                let mut job = TileJob::new(DataflowMode::Interleaved, geom, tq, tp, b);
                job.weight = Some(w.block(y0, x0, tq, tp));
                job.delta = Some(delta.block(y0, 0, tq, b));
                job.activation = Some(act.clone());
                job.partial_in = partial.take();
                job.lr = Some(*lr);
                let r = run_tile_interleaved(&job)?;
                cycles += r.cycles;
                counters += r.counters;
                grad_w_t.set_block(x0, y0, &r.grad_w_t_tile);
                w_next.set_block(y0, x0, &r.w_next_tile);
                partial = Some(r.partial_grad_a);
            }
            grad_a.set_block(x0, 0, &partial.expect("at least one row-tile"));
        }
        run.push("interleaved", cycles, counters);
        run.outputs.grad_a = grad_a;
        run.outputs.grad_w_t = grad_w_t;
        run.outputs.w_next = w_next;
    }
    let hd = hadamard_pass(geom, &run.outputs.grad_a, fprime_z_prev)?;
    run.push("hadamard", hd.cycles, hd.counters);
    run.outputs.delta_prev = hd.out;
    Ok(run)
}
