//! Sweep harness for single-layer loops and the fully connected layers of
//! CNN presets.
//!
//! Every row measures one layer's training loop: forward product,
//! activation, backward step and Hadamard. The interleaved design runs
//! the best traditional forward, so it differs only in the backward step.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::costmodel::{best_forward, estimate_loop};
use crate::error::{config_err, Result};
use crate::golden::TrainStepInputs;
use crate::matrix::MatrixI;
use crate::rng::{seeded_matrix, ValueClass};
use crate::sysarray::{activation_pass, run_forward, run_layer, AccessCounters, CycleReport};
use crate::types::{ActivationKind, ArrayGeometry, DataflowMode, LayerShape};

/// Largest `N * M * B` the cycle-stepped engine accepts.
pub const SIMULATION_CAP: usize = 1 << 22;

pub const CSV_HEADER: &str = "n,m,batch,p,q,mode,cycles_total,cycles_load,cycles_compute,cycles_drain,\
cycles_unload,cycles_update,reads_total,writes_total,reads_delta,reads_weight,reads_activation,reads_grad,\
reads_partial,writes_grad,writes_weight,writes_result,norm_cycles,norm_accesses";

pub const ALEXNET_PRESET: &str = include_str!("../presets/alexnet.csv");
pub const VGG16_PRESET: &str = include_str!("../presets/vgg16.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Analytic,
    Simulated,
}

impl std::str::FromStr for Engine {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Engine> {
        match s {
            "analytic" => Ok(Engine::Analytic),
            "simulated" | "sim" => Ok(Engine::Simulated),
            _ => config_err(format!("unknown engine '{s}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSpec {
    /// `(N, M)` pairs.
    pub sizes: Vec<(usize, usize)>,
    pub batches: Vec<usize>,
    pub geom: ArrayGeometry,
    pub modes: Vec<DataflowMode>,
    pub normalize_to: DataflowMode,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub n: usize,
    pub m: usize,
    pub batch: usize,
    pub p: usize,
    pub q: usize,
    pub mode: String,
    pub cycles: CycleReport,
    pub accesses: AccessCounters,
    pub norm_cycles: f64,
    pub norm_accesses: f64,
}

/// Batch-averaged values of one mode at one size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SizeAggregate {
    pub n: usize,
    pub m: usize,
    pub mode: String,
    pub mean_cycles: f64,
    pub mean_accesses: f64,
    pub norm_cycles: f64,
    pub norm_accesses: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub normalize_to: String,
    pub rows: Vec<BenchRow>,
    pub aggregates: Vec<SizeAggregate>,
}

/// Loop cost of one `(shape, mode)` point.
pub fn measure(
    shape: LayerShape,
    geom: ArrayGeometry,
    mode: DataflowMode,
    engine: Engine,
) -> Result<(CycleReport, AccessCounters)> {
    match engine {
        Engine::Analytic => {
            let e = estimate_loop(shape, geom, mode)?;
            Ok((e.cycles, e.accesses))
        }
        Engine::Simulated => simulate_loop(shape, geom, mode),
    }
}

fn simulate_loop(
    shape: LayerShape,
    geom: ArrayGeometry,
    mode: DataflowMode,
) -> Result<(CycleReport, AccessCounters)> {
    let LayerShape {
        n_out: n,
        m_in: m,
        batch: b,
    } = shape;
    if n * m * b > SIMULATION_CAP {
        return config_err(format!(
            "{n}x{m}x{b} exceeds the cycle-accurate cap of {SIMULATION_CAP} (N*M*B); use the analytic engine"
        ));
    }
    let seed = ((n as u64) << 40) ^ ((m as u64) << 20) ^ b as u64;
    let int = |r, c, s| -> Result<MatrixI> { seeded_matrix(r, c, s, ValueClass::SmallInt) };
    let w = int(n, m, seed)?;
    let a_prev = int(m, b, seed + 1)?;
    let fwd_mode = if mode.is_traditional() {
        mode
    } else {
        best_forward(shape, geom).0
    };
    let fwd = run_forward(geom, fwd_mode, &w, &a_prev)?;
    let act = activation_pass(geom, &fwd.out, ActivationKind::Identity)?;
    let inputs = TrainStepInputs {
        w,
        a_prev,
        delta: int(n, b, seed + 2)?,
        fprime_z_prev: int(m, b, seed + 3)?,
        lr: 1,
    };
    let bwd = run_layer(shape, geom, mode, &inputs)?;
    Ok((
        fwd.cycles + act.cycles + bwd.cycles,
        fwd.counters + act.counters + bwd.counters,
    ))
}

fn ratio(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        1.0
    } else {
        a / b
    }
}

fn mode_rank(mode: &str) -> usize {
    [
        "ws",
        "os",
        "is",
        "interleaved",
        "best-baseline",
        "interleaved/best",
    ]
    .iter()
    .position(|m| *m == mode)
    .unwrap_or(usize::MAX)
}

pub fn run_sweep(spec: &SweepSpec, engine: Engine) -> Result<BenchReport> {
    if !spec.modes.contains(&spec.normalize_to) {
        return config_err(format!(
            "normalize_to {} is not among the swept modes",
            spec.normalize_to
        ));
    }
    let mut points = Vec::new();
    for &(n, m) in &spec.sizes {
        for &b in &spec.batches {
            for &mode in &spec.modes {
                points.push((LayerShape::new(n, m, b)?, mode));
            }
        }
    }
    let geom = spec.geom;
    let mut rows: Vec<BenchRow> = points
        .par_iter()
        .map(|&(shape, mode)| {
            let (cycles, accesses) = measure(shape, geom, mode, engine)?;
            Ok(BenchRow {
                n: shape.n_out,
                m: shape.m_in,
                batch: shape.batch,
                p: geom.p,
                q: geom.q,
                mode: mode.to_string(),
                cycles,
                accesses,
                norm_cycles: 1.0,
                norm_accesses: 1.0,
            })
        })
        .collect::<Result<_>>()?;
    rows.sort_by(|a, b| {
        (a.n, a.m, a.batch, mode_rank(&a.mode)).cmp(&(b.n, b.m, b.batch, mode_rank(&b.mode)))
    });
    rows.dedup_by(|a, b| (a.n, a.m, a.batch, &a.mode) == (b.n, b.m, b.batch, &b.mode));
    let mut report = BenchReport {
        normalize_to: spec.normalize_to.to_string(),
        rows,
        aggregates: Vec::new(),
    };
    report.renormalize(spec.normalize_to)?;
    Ok(report)
}

impl BenchReport {
    /// Recomputes every normalized column against `mode`: rows per
    /// `(N, M, B)`, aggregates by averaging across batches first.
    pub fn renormalize(&mut self, mode: DataflowMode) -> Result<()> {
        let key = mode.to_string();
        let mut refs = std::collections::BTreeMap::new();
        for r in self.rows.iter().filter(|r| r.mode == key) {
            refs.insert(
                (r.n, r.m, r.batch),
                (r.cycles.total_cycles as f64, r.accesses.total() as f64),
            );
        }
        for r in &mut self.rows {
            let Some(&(c, a)) = refs.get(&(r.n, r.m, r.batch)) else {
                return config_err(format!("no {key} row for {}x{}x{}", r.n, r.m, r.batch));
            };
            r.norm_cycles = ratio(r.cycles.total_cycles as f64, c);
            r.norm_accesses = ratio(r.accesses.total() as f64, a);
        }
        type Key = (usize, usize, usize, String);
        let mut sums: std::collections::BTreeMap<Key, (f64, f64, usize)> = Default::default();
        for r in &self.rows {
            let e = sums
                .entry((r.n, r.m, mode_rank(&r.mode), r.mode.clone()))
                .or_default();
            e.0 += r.cycles.total_cycles as f64;
            e.1 += r.accesses.total() as f64;
            e.2 += 1;
        }
        let mut aggs: Vec<SizeAggregate> = sums
            .into_iter()
            .map(|((n, m, _, mode), (c, a, k))| SizeAggregate {
                n,
                m,
                mode,
                mean_cycles: c / k as f64,
                mean_accesses: a / k as f64,
                norm_cycles: 1.0,
                norm_accesses: 1.0,
            })
            .collect();
        let base: std::collections::BTreeMap<_, _> = aggs
            .iter()
            .filter(|g| g.mode == key)
            .map(|g| ((g.n, g.m), (g.mean_cycles, g.mean_accesses)))
            .collect();
        for g in &mut aggs {
            let (c, a) = base[&(g.n, g.m)];
            g.norm_cycles = ratio(g.mean_cycles, c);
            g.norm_accesses = ratio(g.mean_accesses, a);
        }
        self.aggregates = aggs;
        self.normalize_to = key;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        s.push_str(CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let (c, a) = (&r.cycles, &r.accesses);
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{:.6},{:.6}",
                r.n,
                r.m,
                r.batch,
                r.p,
                r.q,
                r.mode,
                c.total_cycles,
                c.load_cycles,
                c.compute_cycles,
                c.drain_cycles,
                c.unload_cycles,
                c.update_cycles,
                a.total_reads(),
                a.total_writes(),
                a.reads_delta,
                a.reads_weight,
                a.reads_activation,
                a.reads_grad,
                a.reads_partial,
                a.writes_grad,
                a.writes_weight,
                a.writes_result,
                r.norm_cycles,
                r.norm_accesses
            );
        }
        s
    }
}

/// Interleaved vs the best traditional dataflow, computed per size from the
/// batch-averaged aggregates and then averaged over sizes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Headline {
    /// `(N, M, cycle reduction, access reduction)` per size.
    pub per_size: Vec<(usize, usize, f64, f64)>,
    pub cycle_reduction: f64,
    pub access_reduction: f64,
}

pub fn headline(report: &BenchReport) -> Result<Headline> {
    let mut sizes: Vec<(usize, usize)> = report.aggregates.iter().map(|g| (g.n, g.m)).collect();
    sizes.dedup();
    let mut per_size = Vec::new();
    for (n, m) in sizes {
        let at: Vec<_> = report
            .aggregates
            .iter()
            .filter(|g| (g.n, g.m) == (n, m))
            .collect();
        let Some(il) = at.iter().find(|g| g.mode == "interleaved") else {
            return config_err("headline needs interleaved rows");
        };
        let trad: Vec<_> = at
            .iter()
            .filter(|g| ["ws", "os", "is"].contains(&g.mode.as_str()))
            .collect();
        if trad.is_empty() {
            return config_err("headline needs at least one traditional mode");
        }
        let bc = trad
            .iter()
            .map(|g| g.mean_cycles)
            .fold(f64::INFINITY, f64::min);
        let ba = trad
            .iter()
            .map(|g| g.mean_accesses)
            .fold(f64::INFINITY, f64::min);
        per_size.push((n, m, 1.0 - il.mean_cycles / bc, 1.0 - il.mean_accesses / ba));
    }
    let k = per_size.len() as f64;
    Ok(Headline {
        cycle_reduction: per_size.iter().map(|x| x.2).sum::<f64>() / k,
        access_reduction: per_size.iter().map(|x| x.3).sum::<f64>() / k,
        per_size,
    })
}

/// Parses a preset: one `n,m` pair per line, `#` comments and blank lines
/// ignored.
pub fn parse_preset(text: &str) -> Result<Vec<(usize, usize)>> {
    let mut layers = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parsed = line.split_once(',').and_then(|(a, b)| {
            Some((
                a.trim().parse::<usize>().ok()?,
                b.trim().parse::<usize>().ok()?,
            ))
        });
        match parsed {
            Some((n, m)) if n > 0 && m > 0 => layers.push((n, m)),
            _ => {
                return config_err(format!(
                    "preset line {}: expected 'n,m', got '{line}'",
                    i + 1
                ))
            }
        }
    }
    if layers.is_empty() {
        return config_err("preset has no layers");
    }
    Ok(layers)
}

pub fn preset(net: &str) -> Result<Vec<(usize, usize)>> {
    match net {
        "alexnet" => parse_preset(ALEXNET_PRESET),
        "vgg16" => parse_preset(VGG16_PRESET),
        _ => config_err(format!("unknown net '{net}' (expected alexnet or vgg16)")),
    }
}

/// Whole-network totals of the CNN comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CnnSummary {
    pub best_cycles: u64,
    pub best_accesses: u64,
    pub interleaved_cycles: u64,
    pub interleaved_accesses: u64,
    /// Best baseline over interleaved.
    pub cycle_ratio: f64,
    pub access_ratio: f64,
    pub cycle_reduction: f64,
    pub access_reduction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CnnReport {
    pub report: BenchReport,
    pub summary: CnnSummary,
}

/// Per layer: the three traditional modes, interleaved, the best traditional
/// mode (fewest cycles, then fewest accesses) and interleaved normalized to
/// that best. Other rows are normalized to WS.
pub fn run_cnn_fc(
    layers: &[(usize, usize)],
    batch: usize,
    geom: ArrayGeometry,
    engine: Engine,
) -> Result<CnnReport> {
    let spec = SweepSpec {
        sizes: layers.to_vec(),
        batches: vec![batch],
        geom,
        modes: DataflowMode::ALL.to_vec(),
        normalize_to: DataflowMode::Ws,
    };
    let base = run_sweep(&spec, engine)?;
    let mut rows = Vec::new();
    let (mut bc, mut ba, mut ic, mut ia) = (0u64, 0u64, 0u64, 0u64);
    for &(n, m) in layers {
        let at: Vec<&BenchRow> = base.rows.iter().filter(|r| (r.n, r.m) == (n, m)).collect();
        let il = *at
            .iter()
            .find(|r| r.mode == "interleaved")
            .expect("interleaved swept");
        let best = *at
            .iter()
            .filter(|r| r.mode != "interleaved")
            .min_by_key(|r| {
                (
                    r.cycles.total_cycles,
                    r.accesses.total(),
                    mode_rank(&r.mode),
                )
            })
            .expect("traditional modes swept");
        rows.extend(at.iter().map(|r| (*r).clone()));
        rows.push(BenchRow {
            mode: "best-baseline".into(),
            ..best.clone()
        });
        rows.push(BenchRow {
            mode: "interleaved/best".into(),
            norm_cycles: ratio(
                il.cycles.total_cycles as f64,
                best.cycles.total_cycles as f64,
            ),
            norm_accesses: ratio(il.accesses.total() as f64, best.accesses.total() as f64),
            ..il.clone()
        });
        bc += best.cycles.total_cycles;
        ba += best.accesses.total();
        ic += il.cycles.total_cycles;
        ia += il.accesses.total();
    }
    let summary = CnnSummary {
        best_cycles: bc,
        best_accesses: ba,
        interleaved_cycles: ic,
        interleaved_accesses: ia,
        cycle_ratio: ratio(bc as f64, ic as f64),
        access_ratio: ratio(ba as f64, ia as f64),
        cycle_reduction: 1.0 - ratio(ic as f64, bc as f64),
        access_reduction: 1.0 - ratio(ia as f64, ba as f64),
    };
    Ok(CnnReport {
        report: BenchReport {
            normalize_to: base.normalize_to,
            rows,
            aggregates: base.aggregates,
        },
        summary,
    })
}
