//! Closed-form cycle and access counts, term-for-term equal to the
//! cycle-stepped array on any shape (edge tiles included).
//!
//! With `nX = ceil(M/P)` and `nY = ceil(N/Q)`, a held-operand product with
//! `K` along Q, `I` along P and `J` streamed costs
//! `2K*nI + I*nK + nK*nI*(J-2)` cycles; the output-stationary product with
//! `I` along P, `J` along Q and `K` streamed costs
//! `nI*nJ*(K-2) + I*nJ + 2J*nI`; the interleaved backward costs
//! `2N*nX + M*nY + nX*nY*(2B-1)`.

use serde::Serialize;

use crate::error::{config_err, Result};
use crate::sysarray::{elementwise_cycles, AccessCounters, CycleReport, ReadPort, WritePort};
use crate::types::{ArrayGeometry, DataflowMode, LayerShape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Forward,
    Activation,
    BackwardDelta,
    BackwardGradW,
    Update,
    Hadamard,
    FusedBackward,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CostEstimate {
    pub cycles: CycleReport,
    pub accesses: AccessCounters,
    pub formula_trace: Vec<(String, u64)>,
}

impl CostEstimate {
    fn new(cycles: CycleReport, accesses: AccessCounters) -> Self {
        Self {
            cycles,
            accesses,
            formula_trace: Vec::new(),
        }
    }

    fn trace(mut self, term: &str, value: u64) -> Self {
        self.formula_trace.push((term.to_string(), value));
        self
    }

    /// Value of a named trace term, if present.
    pub fn term(&self, name: &str) -> Option<u64> {
        self.formula_trace
            .iter()
            .find(|(t, _)| t == name)
            .map(|&(_, v)| v)
    }

    fn merge(mut self, other: CostEstimate, prefix: &str) -> Self {
        self.cycles += other.cycles;
        self.accesses += other.accesses;
        for (t, v) in other.formula_trace {
            self.formula_trace.push((format!("{prefix}.{t}"), v));
        }
        self
    }

    fn empty() -> Self {
        Self::new(CycleReport::default(), AccessCounters::default())
    }
}

fn ceil(a: usize, b: usize) -> u64 {
    a.div_ceil(b) as u64
}

fn held(
    geom: ArrayGeometry,
    k: usize,
    i: usize,
    j: usize,
    held: ReadPort,
    stream: ReadPort,
    out: WritePort,
) -> CostEstimate {
    let (nk, ni) = (ceil(k, geom.q), ceil(i, geom.p));
    let (k, i, j) = (k as u64, i as u64, j as u64);
    let load = k * ni;
    let compute = j * nk * ni;
    let drain = i * nk + k * ni - 2 * nk * ni;
    let mut c = AccessCounters::default();
    c.read(held, k * i);
    c.read(stream, k * j * ni);
    c.read(ReadPort::Partial, i * j * (nk - 1));
    c.write(out, i * j * nk);
    CostEstimate::new(CycleReport::from_phases(load, compute, drain, 0, 0), c)
        .trace("tiles_q", nk)
        .trace("tiles_p", ni)
        .trace("load", load)
        .trace("stream", compute)
        .trace("fill_drain", drain)
}

fn os(
    geom: ArrayGeometry,
    i: usize,
    j: usize,
    k: usize,
    south: ReadPort,
    west: ReadPort,
    out: WritePort,
) -> CostEstimate {
    let (ni, nj) = (ceil(i, geom.p), ceil(j, geom.q));
    let (i, j, k) = (i as u64, j as u64, k as u64);
    let compute = k * ni * nj;
    let drain = i * nj + j * ni - 2 * ni * nj;
    let unload = j * ni;
    let mut c = AccessCounters::default();
    c.read(south, i * k * nj);
    c.read(west, j * k * ni);
    c.write(out, i * j);
    CostEstimate::new(CycleReport::from_phases(0, compute, drain, unload, 0), c)
        .trace("tiles_p", ni)
        .trace("tiles_q", nj)
        .trace("stream", compute)
        .trace("fill_drain", drain)
        .trace("unload", unload)
}

fn forward_traditional(shape: LayerShape, geom: ArrayGeometry, mode: DataflowMode) -> CostEstimate {
    let LayerShape {
        n_out: n,
        m_in: m,
        batch: b,
    } = shape;
    use {ReadPort::*, WritePort::Result as Out};
    match mode {
        DataflowMode::Ws => held(geom, m, n, b, Weight, Activation, Out),
        DataflowMode::Is => held(geom, m, b, n, Activation, Weight, Out),
        DataflowMode::Os => os(geom, n, b, m, Weight, Activation, Out),
        DataflowMode::Interleaved => {
            unreachable!("forward of the fused schedule is resolved by the caller")
        }
    }
}

/// Traditional forward dataflow with the fewest cycles (accesses break
/// ties, then the order WS, OS, IS).
pub fn best_forward(shape: LayerShape, geom: ArrayGeometry) -> (DataflowMode, CostEstimate) {
    DataflowMode::TRADITIONAL
        .into_iter()
        .map(|md| (md, forward_traditional(shape, geom, md)))
        .min_by_key(|(_, e)| (e.cycles.total_cycles, e.accesses.total()))
        .expect("three traditional modes")
}

fn fused(shape: LayerShape, geom: ArrayGeometry) -> CostEstimate {
    let LayerShape {
        n_out: n,
        m_in: m,
        batch: b,
    } = shape;
    let (nx, ny) = (ceil(m, geom.p), ceil(n, geom.q));
    let (n, m, b) = (n as u64, m as u64, b as u64);
    let load = n * nx;
    let compute = 2 * b * nx * ny;
    let drain = m * ny + n * nx - 2 * nx * ny;
    let update = nx * ny;
    let mut c = AccessCounters::default();
    c.read(ReadPort::Weight, n * m);
    c.read(ReadPort::Delta, n * b * nx);
    c.read(ReadPort::Activation, m * b * ny);
    c.read(ReadPort::Partial, m * b * (ny - 1));
    c.write(WritePort::Result, m * b * ny);
    c.write(WritePort::Weight, n * m);
    CostEstimate::new(CycleReport::from_phases(load, compute, drain, 0, update), c)
        .trace("tiles_p", nx)
        .trace("tiles_q", ny)
        .trace("load", load)
        .trace("two_phase_stream", compute)
        .trace("fill_drain", drain)
        .trace("inplace_update", update)
}

fn elementwise(elements: usize, geom: ArrayGeometry, in_update_phase: bool) -> CycleReport {
    let c = elementwise_cycles(elements, geom.pes());
    if in_update_phase {
        CycleReport::from_phases(0, 0, 0, 0, c)
    } else {
        CycleReport::from_phases(0, c, 0, 0, 0)
    }
}

/// Cost of one step of a layer's training loop under `mode`.
///
/// Traditional backward steps are mode-independent: the activation gradient
/// is weight-stationary, the weight gradient output-stationary. The fused
/// step exists only for INTERLEAVED, which has no separate backward steps
/// and whose forward is the best traditional forward.
pub fn estimate(
    shape: LayerShape,
    geom: ArrayGeometry,
    mode: DataflowMode,
    step: StepKind,
) -> Result<CostEstimate> {
    check(shape, geom)?;
    let LayerShape {
        n_out: n,
        m_in: m,
        batch: b,
    } = shape;
    let il = mode == DataflowMode::Interleaved;
    Ok(match step {
        StepKind::Forward if il => {
            let (best, e) = best_forward(shape, geom);
            let idx = DataflowMode::TRADITIONAL
                .iter()
                .position(|&x| x == best)
                .unwrap_or(0);
            e.trace("matched_forward_mode", idx as u64)
        }
        StepKind::Forward => forward_traditional(shape, geom, mode),
        StepKind::Activation => {
            let mut c = AccessCounters::default();
            c.read(ReadPort::Partial, (n * b) as u64);
            c.write(WritePort::Result, (n * b) as u64);
            CostEstimate::new(elementwise(n * b, geom, false), c)
        }
        StepKind::Hadamard => {
            let e = (m * b) as u64;
            let mut c = AccessCounters::default();
            c.read(ReadPort::Partial, e);
            c.read(ReadPort::Activation, e);
            c.write(WritePort::Result, e);
            CostEstimate::new(elementwise(m * b, geom, false), c)
        }
        StepKind::BackwardDelta | StepKind::BackwardGradW | StepKind::Update if il => {
            return config_err(format!(
                "{step:?} is not a separate step under interleaving; use FusedBackward"
            ))
        }
        StepKind::BackwardDelta => held(
            geom,
            n,
            m,
            b,
            ReadPort::Weight,
            ReadPort::Delta,
            WritePort::Result,
        ),
        StepKind::BackwardGradW => os(
            geom,
            m,
            n,
            b,
            ReadPort::Activation,
            ReadPort::Delta,
            WritePort::Grad,
        ),
        StepKind::Update => {
            let e = (n * m) as u64;
            let mut c = AccessCounters::default();
            c.read(ReadPort::Grad, e);
            c.read(ReadPort::Weight, e);
            c.write(WritePort::Weight, e);
            CostEstimate::new(elementwise(n * m, geom, true), c)
        }
        StepKind::FusedBackward if il => fused(shape, geom),
        StepKind::FusedBackward => {
            return config_err(format!(
                "FusedBackward requires interleaved mode, got {mode}"
            ))
        }
    })
}

fn check(shape: LayerShape, geom: ArrayGeometry) -> Result<()> {
    LayerShape::new(shape.n_out, shape.m_in, shape.batch)?;
    ArrayGeometry::new(geom.p, geom.q)?;
    Ok(())
}

/// Whole backward step, the analytic twin of `sysarray::run_layer`.
pub fn estimate_backward(
    shape: LayerShape,
    geom: ArrayGeometry,
    mode: DataflowMode,
) -> Result<CostEstimate> {
    let steps: &[(StepKind, &str)] = if mode.is_traditional() {
        &[
            (StepKind::BackwardDelta, "activation_grad"),
            (StepKind::BackwardGradW, "weight_grad"),
            (StepKind::Update, "update"),
            (StepKind::Hadamard, "hadamard"),
        ]
    } else {
        &[
            (StepKind::FusedBackward, "interleaved"),
            (StepKind::Hadamard, "hadamard"),
        ]
    };
    let mut acc = CostEstimate::empty();
    for &(step, name) in steps {
        acc = acc.merge(estimate(shape, geom, mode, step)?, name);
    }
    if !mode.is_traditional() {
        let d = delta_reuse_saving(shape, geom);
        let u = inplace_update_saving(shape, geom);
        acc.formula_trace.extend(d.formula_trace);
        acc.formula_trace.extend(u.formula_trace);
    }
    Ok(acc)
}

/// One layer's full training loop: forward, activation, backward.
pub fn estimate_loop(
    shape: LayerShape,
    geom: ArrayGeometry,
    mode: DataflowMode,
) -> Result<CostEstimate> {
    Ok(CostEstimate::empty()
        .merge(estimate(shape, geom, mode, StepKind::Forward)?, "forward")
        .merge(
            estimate(shape, geom, mode, StepKind::Activation)?,
            "activation",
        )
        .merge(estimate_backward(shape, geom, mode)?, "backward"))
}

/// A savings term: the literal floor expression plus the per-word count the
/// counters actually realise.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Saving {
    pub words: u64,
    pub formula_trace: Vec<(String, u64)>,
}

impl Saving {
    pub fn first_principles(&self) -> u64 {
        self.formula_trace[1].1
    }
}

/// Words saved by reading each delta once for both gradients.
///
/// `words` is `B * floor(N/Q) * floor(M/P)`. The trace adds the per-word
/// count `B * Q * floor(N/Q) * floor(M/P)` (every delta word of every tile)
/// and the exact counter difference `N * B * ceil(M/P)`, which includes
/// edge tiles.
pub fn delta_reuse_saving(shape: LayerShape, geom: ArrayGeometry) -> Saving {
    let (n, m, b) = (shape.n_out as u64, shape.m_in as u64, shape.batch as u64);
    let (p, q) = (geom.p as u64, geom.q as u64);
    let literal = b * (n / q) * (m / p);
    let per_word = b * q * (n / q) * (m / p);
    let counted = n * b * m.div_ceil(p);
    Saving {
        words: literal,
        formula_trace: vec![
            ("delta_reuse_literal".into(), literal),
            ("delta_reuse_per_word".into(), per_word),
            ("delta_reuse_counted".into(), counted),
            ("delta_reuse_discrepancy".into(), per_word.abs_diff(literal)),
        ],
    }
}

/// Words saved by updating weights inside the array.
///
/// `words` is `3 * B * floor(N/P) * floor(M/Q)`. The per-element count is
/// `3 * N * M`: the gradient is never written out, read back, and the
/// weight is not re-read for the update.
pub fn inplace_update_saving(shape: LayerShape, geom: ArrayGeometry) -> Saving {
    let (n, m, b) = (shape.n_out as u64, shape.m_in as u64, shape.batch as u64);
    let (p, q) = (geom.p as u64, geom.q as u64);
    let literal = 3 * b * (n / p) * (m / q);
    let per_element = 3 * n * m;
    Saving {
        words: literal,
        formula_trace: vec![
            ("inplace_literal".into(), literal),
            ("inplace_per_element".into(), per_element),
            ("inplace_discrepancy".into(), per_element.abs_diff(literal)),
        ],
    }
}

/// Weighted access score; `weights` are per counter in the order of the
/// `AccessCounters` fields.
pub fn weighted_accesses(c: &AccessCounters, weights: &[f64; 8]) -> f64 {
    let v = [
        c.reads_weight,
        c.reads_delta,
        c.reads_activation,
        c.reads_grad,
        c.reads_partial,
        c.writes_grad,
        c.writes_weight,
        c.writes_result,
    ];
    v.iter().zip(weights).map(|(&n, &w)| n as f64 * w).sum()
}

/// Traditional mode minimising the weighted access score of a step; ties go
/// to the earlier mode in WS, OS, IS order.
pub fn best_traditional_weighted(
    shape: LayerShape,
    geom: ArrayGeometry,
    step: StepKind,
    weights: &[f64; 8],
) -> Result<DataflowMode> {
    let mut best: Option<(DataflowMode, f64)> = None;
    for md in DataflowMode::TRADITIONAL {
        let s = weighted_accesses(&estimate(shape, geom, md, step)?.accesses, weights);
        if best.is_none_or(|(_, b)| s < b) {
            best = Some((md, s));
        }
    }
    Ok(best.expect("three traditional modes").0)
}
