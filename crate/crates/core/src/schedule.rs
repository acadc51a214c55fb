//! Dependence graph of one training iteration of a multi-layer perceptron
//! and its list schedule on identical processors.
//!
//! Layer `l` (1-based) maps `dims[l-1]` inputs to `dims[l]` outputs. Node
//! kinds: `Fwd` (`z = W a`), `Act` (`a = f(z)`), `BpDelta` (`W^T delta`),
//! `GradAct` (Hadamard with `f'`, producing the lower layer's delta),
//! `GradW` (`a delta^T`), `Update`, and `Fused` (interleaved backward).

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::Serialize;

use crate::costmodel::{estimate, StepKind};
use crate::error::{config_err, Result};
use crate::types::{ArrayGeometry, DataflowMode, LayerShape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum OpKind {
    Fwd,
    Act,
    BpDelta,
    GradAct,
    GradW,
    Update,
    Fused,
}

impl OpKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OpKind::Fwd => "fwd",
            OpKind::Act => "act",
            OpKind::BpDelta => "bp_delta",
            OpKind::GradAct => "grad_act",
            OpKind::GradW => "grad_w",
            OpKind::Update => "update",
            OpKind::Fused => "fused",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OpNode {
    pub id: usize,
    pub kind: OpKind,
    pub layer: usize,
    pub cost_cycles: u64,
    pub accesses: u64,
    pub fused: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OpGraph {
    pub nodes: Vec<OpNode>,
    /// `(producer, consumer)` pairs.
    pub edges: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Policy {
    /// Separate backward passes; the mode picks the forward dataflow.
    Baseline(DataflowMode),
    /// Fused backward per layer, forward matched to the best traditional one.
    Proposed,
}

impl Policy {
    pub const ALL: [Policy; 4] = [
        Policy::Baseline(DataflowMode::Ws),
        Policy::Baseline(DataflowMode::Os),
        Policy::Baseline(DataflowMode::Is),
        Policy::Proposed,
    ];

    pub fn name(self) -> String {
        match self {
            Policy::Baseline(m) => format!("baseline-{m}"),
            Policy::Proposed => "proposed".to_string(),
        }
    }

    pub fn parse(s: &str) -> Result<Policy> {
        match s {
            "proposed" => Ok(Policy::Proposed),
            _ => match s.strip_prefix("baseline-").map(str::parse::<DataflowMode>) {
                Some(Ok(m)) if m.is_traditional() => Ok(Policy::Baseline(m)),
                _ => config_err(format!("unknown policy '{s}'")),
            },
        }
    }

    fn mode(self) -> DataflowMode {
        match self {
            Policy::Baseline(m) => m,
            Policy::Proposed => DataflowMode::Interleaved,
        }
    }
}

impl OpGraph {
    /// Graph from explicit costs, used for synthetic tests.
    pub fn from_costs(costs: &[u64], edges: Vec<(usize, usize)>) -> Result<OpGraph> {
        let nodes = costs
            .iter()
            .enumerate()
            .map(|(id, &c)| OpNode {
                id,
                kind: OpKind::Fwd,
                layer: 0,
                cost_cycles: c,
                accesses: 0,
                fused: false,
            })
            .collect();
        let g = OpGraph { nodes, edges };
        g.topo_order()?;
        Ok(g)
    }

    fn add(&mut self, kind: OpKind, layer: usize, est: (u64, u64)) -> usize {
        let id = self.nodes.len();
        self.nodes.push(OpNode {
            id,
            kind,
            layer,
            cost_cycles: est.0,
            accesses: est.1,
            fused: kind == OpKind::Fused,
        });
        id
    }

    pub fn preds(&self) -> Vec<Vec<usize>> {
        let mut p = vec![Vec::new(); self.nodes.len()];
        for &(u, v) in &self.edges {
            p[v].push(u);
        }
        p
    }

    pub fn succs(&self) -> Vec<Vec<usize>> {
        let mut s = vec![Vec::new(); self.nodes.len()];
        for &(u, v) in &self.edges {
            s[u].push(v);
        }
        s
    }

    /// Kahn order with the smallest ready id first; errors on a cycle or a
    /// dangling edge.
    pub fn topo_order(&self) -> Result<Vec<usize>> {
        let n = self.nodes.len();
        if self.edges.iter().any(|&(u, v)| u >= n || v >= n) {
            return config_err("edge refers to a missing node");
        }
        let succ = self.succs();
        let mut indeg = vec![0usize; n];
        for &(_, v) in &self.edges {
            indeg[v] += 1;
        }
        let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(u) = ready.pop_first() {
            order.push(u);
            for &v in &succ[u] {
                indeg[v] -= 1;
                if indeg[v] == 0 {
                    ready.insert(v);
                }
            }
        }
        if order.len() != n {
            return config_err("dependence graph has a cycle");
        }
        Ok(order)
    }

    /// Longest path from each node to a sink, own cost included.
    pub fn bottom_levels(&self) -> Vec<u64> {
        let order = self
            .topo_order()
            .expect("graphs are acyclic by construction");
        let succ = self.succs();
        let mut bl = vec![0u64; self.nodes.len()];
        for &u in order.iter().rev() {
            bl[u] = self.nodes[u].cost_cycles + succ[u].iter().map(|&v| bl[v]).max().unwrap_or(0);
        }
        bl
    }

    pub fn critical_path(&self) -> u64 {
        self.bottom_levels().into_iter().max().unwrap_or(0)
    }

    pub fn total_cost(&self) -> u64 {
        self.nodes.iter().map(|n| n.cost_cycles).sum()
    }

    pub fn total_accesses(&self) -> u64 {
        self.nodes.iter().map(|n| n.accesses).sum()
    }
}

fn cost(
    shape: LayerShape,
    geom: ArrayGeometry,
    mode: DataflowMode,
    step: StepKind,
) -> Result<(u64, u64)> {
    let e = estimate(shape, geom, mode, step)?;
    Ok((e.cycles.total_cycles, e.accesses.total()))
}

/// Training-iteration graph for layer widths `dims` (input first).
pub fn build_graph(
    dims: &[usize],
    batch: usize,
    geom: ArrayGeometry,
    policy: Policy,
) -> Result<OpGraph> {
    if dims.len() < 2 {
        return config_err("need at least two layer widths");
    }
    let mode = policy.mode();
    let nl = dims.len() - 1;
    let shapes: Vec<LayerShape> = (1..=nl)
        .map(|l| LayerShape::new(dims[l], dims[l - 1], batch))
        .collect::<Result<_>>()?;
    let sh = |l: usize| shapes[l - 1];
    let mut g = OpGraph {
        nodes: Vec::new(),
        edges: Vec::new(),
    };

    let mut act = vec![usize::MAX; nl + 1];
    for l in 1..=nl {
        let f = g.add(OpKind::Fwd, l, cost(sh(l), geom, mode, StepKind::Forward)?);
        if l > 1 {
            g.edges.push((act[l - 1], f));
        }
        act[l] = g.add(
            OpKind::Act,
            l,
            cost(sh(l), geom, mode, StepKind::Activation)?,
        );
        g.edges.push((f, act[l]));
    }

    // `delta_src[l]` produces delta of layer l; the top one comes from the output.
    let mut delta_src = vec![usize::MAX; nl + 1];
    delta_src[nl] = act[nl];
    for l in (1..=nl).rev() {
        let grad_a_src = match policy {
            Policy::Baseline(_) => {
                let bp = g.add(
                    OpKind::BpDelta,
                    l,
                    cost(sh(l), geom, mode, StepKind::BackwardDelta)?,
                );
                let gw = g.add(
                    OpKind::GradW,
                    l,
                    cost(sh(l), geom, mode, StepKind::BackwardGradW)?,
                );
                let up = g.add(
                    OpKind::Update,
                    l,
                    cost(sh(l), geom, mode, StepKind::Update)?,
                );
                g.edges.push((delta_src[l], bp));
                g.edges.push((delta_src[l], gw));
                if l > 1 {
                    g.edges.push((act[l - 1], gw));
                }
                g.edges.push((gw, up));
                // The update overwrites W, which the activation gradient reads.
                g.edges.push((bp, up));
                bp
            }
            Policy::Proposed => {
                let fu = g.add(
                    OpKind::Fused,
                    l,
                    cost(sh(l), geom, mode, StepKind::FusedBackward)?,
                );
                g.edges.push((delta_src[l], fu));
                if l > 1 {
                    g.edges.push((act[l - 1], fu));
                }
                fu
            }
        };
        if l > 1 {
            let ga = g.add(
                OpKind::GradAct,
                l - 1,
                cost(sh(l), geom, mode, StepKind::Hadamard)?,
            );
            g.edges.push((grad_a_src, ga));
            g.edges.push((act[l - 1], ga));
            delta_src[l - 1] = ga;
        }
    }
    g.edges.sort_unstable();
    g.edges.dedup();
    Ok(g)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Slot {
    pub proc: usize,
    pub node: usize,
    pub start: u64,
    pub end: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScheduleResult {
    pub procs: usize,
    /// Sorted by processor, then start time.
    pub timeline: Vec<Slot>,
    pub makespan: u64,
    pub utilization: f64,
    pub total_processor_cycles: u64,
    pub total_accesses: u64,
}

impl ScheduleResult {
    fn from_slots(graph: &OpGraph, procs: usize, mut timeline: Vec<Slot>) -> Self {
        timeline.sort_by_key(|s| (s.proc, s.start, s.node));
        let makespan = timeline.iter().map(|s| s.end).max().unwrap_or(0);
        let busy = graph.total_cost();
        let utilization = if makespan == 0 {
            1.0
        } else {
            busy as f64 / (procs as u64 * makespan) as f64
        };
        ScheduleResult {
            procs,
            timeline,
            makespan,
            utilization,
            total_processor_cycles: procs as u64 * makespan,
            total_accesses: graph.total_accesses(),
        }
    }

    pub fn to_csv(&self, graph: &OpGraph) -> String {
        let mut s = String::from("proc,node_id,kind,layer,start,end\n");
        for t in &self.timeline {
            let n = &graph.nodes[t.node];
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                t.proc,
                t.node,
                n.kind.as_str(),
                n.layer,
                t.start,
                t.end
            );
        }
        s
    }
}

/// Greedy list scheduling: whenever a processor is idle it takes the ready
/// node with the longest remaining path (lowest id on ties).
pub fn list_schedule(graph: &OpGraph, procs: usize) -> Result<ScheduleResult> {
    if procs == 0 {
        return config_err("need at least one processor");
    }
    graph.topo_order()?;
    let n = graph.nodes.len();
    let bl = graph.bottom_levels();
    let succ = graph.succs();
    let mut missing: Vec<usize> = graph.preds().iter().map(Vec::len).collect();
    // Ready nodes ordered by (-bottom level, id).
    let mut ready: BTreeSet<(std::cmp::Reverse<u64>, usize)> = (0..n)
        .filter(|&i| missing[i] == 0)
        .map(|i| (std::cmp::Reverse(bl[i]), i))
        .collect();
    let mut running: BTreeSet<(u64, usize, usize)> = BTreeSet::new(); // (end, proc, node)
    let mut idle: BTreeSet<usize> = (0..procs).collect();
    let mut slots = Vec::with_capacity(n);
    let mut now = 0u64;
    while slots.len() < n || !running.is_empty() {
        while let (Some(&p), Some(&(_, v))) = (idle.first(), ready.first()) {
            idle.remove(&p);
            ready.remove(&(std::cmp::Reverse(bl[v]), v));
            let end = now + graph.nodes[v].cost_cycles;
            running.insert((end, p, v));
            slots.push(Slot {
                proc: p,
                node: v,
                start: now,
                end,
            });
        }
        let Some(&(t, _, _)) = running.first() else {
            break;
        };
        now = t;
        while let Some(&(t, p, v)) = running.first() {
            if t != now {
                break;
            }
            running.pop_first();
            idle.insert(p);
            for &w in &succ[v] {
                missing[w] -= 1;
                if missing[w] == 0 {
                    ready.insert((std::cmp::Reverse(bl[w]), w));
                }
            }
        }
    }
    Ok(ScheduleResult::from_slots(graph, procs, slots))
}

/// Optimal makespan by enumerating every topological order and placing
/// each node at its earliest feasible slot on any processor (gaps allowed),
/// which reaches every active schedule. Exponential; meant for tiny graphs.
pub fn exhaustive_makespan(graph: &OpGraph, procs: usize) -> Result<u64> {
    if procs == 0 {
        return config_err("need at least one processor");
    }
    graph.topo_order()?;
    let n = graph.nodes.len();
    if n > 10 {
        return config_err("exhaustive search is limited to 10 nodes");
    }
    let preds = graph.preds();
    let mut best = u64::MAX;
    let mut order = Vec::with_capacity(n);
    let mut used = vec![false; n];
    enumerate(graph, &preds, procs, &mut order, &mut used, &mut best);
    Ok(best)
}

fn enumerate(
    g: &OpGraph,
    preds: &[Vec<usize>],
    procs: usize,
    order: &mut Vec<usize>,
    used: &mut [bool],
    best: &mut u64,
) {
    let n = g.nodes.len();
    if order.len() == n {
        *best = (*best).min(place(g, preds, procs, order));
        return;
    }
    for v in 0..n {
        if !used[v] && preds[v].iter().all(|&u| used[u]) {
            used[v] = true;
            order.push(v);
            enumerate(g, preds, procs, order, used, best);
            order.pop();
            used[v] = false;
        }
    }
}

fn place(g: &OpGraph, preds: &[Vec<usize>], procs: usize, order: &[usize]) -> u64 {
    let mut end = vec![0u64; g.nodes.len()];
    let mut busy: Vec<Vec<(u64, u64)>> = vec![Vec::new(); procs];
    for &v in order {
        let ready = preds[v].iter().map(|&u| end[u]).max().unwrap_or(0);
        let c = g.nodes[v].cost_cycles;
        let (mut bs, mut bp) = (u64::MAX, 0);
        for (p, iv) in busy.iter().enumerate() {
            let mut t = ready;
            for &(s, e) in iv {
                if t + c <= s {
                    break;
                }
                t = t.max(e);
            }
            if t < bs {
                (bs, bp) = (t, p);
            }
        }
        busy[bp].push((bs, bs + c));
        busy[bp].sort_unstable();
        end[v] = bs + c;
    }
    end.into_iter().max().unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyRow {
    pub policy: String,
    pub procs: usize,
    pub makespan: u64,
    pub utilization: f64,
    pub total_processor_cycles: u64,
    pub total_accesses: u64,
}

/// Proposed schedule on one processor against a baseline on `procs`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reduction {
    pub baseline: String,
    pub procs: usize,
    pub processor_cycle_reduction: f64,
    pub access_reduction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub rows: Vec<PolicyRow>,
    pub reductions: Vec<Reduction>,
}

impl Comparison {
    pub fn row(&self, policy: Policy, procs: usize) -> Option<&PolicyRow> {
        let name = policy.name();
        self.rows
            .iter()
            .find(|r| r.policy == name && r.procs == procs)
    }

    pub fn reduction(&self, baseline: DataflowMode, procs: usize) -> Option<&Reduction> {
        let name = Policy::Baseline(baseline).name();
        self.reductions
            .iter()
            .find(|r| r.baseline == name && r.procs == procs)
    }
}

/// Schedules every policy on every processor count. Reductions compare the
/// proposed schedule on a single processor with each baseline on `k`
/// processors, in processor-cycles (`procs * makespan`).
pub fn compare_policies(
    dims: &[usize],
    batch: usize,
    geom: ArrayGeometry,
    procs_list: &[usize],
) -> Result<Comparison> {
    let mut rows = Vec::new();
    let mut reductions = Vec::new();
    let proposed = list_schedule(&build_graph(dims, batch, geom, Policy::Proposed)?, 1)?;
    for policy in Policy::ALL {
        let g = build_graph(dims, batch, geom, policy)?;
        for &k in procs_list {
            let r = list_schedule(&g, k)?;
            rows.push(PolicyRow {
                policy: policy.name(),
                procs: k,
                makespan: r.makespan,
                utilization: r.utilization,
                total_processor_cycles: r.total_processor_cycles,
                total_accesses: r.total_accesses,
            });
            if let Policy::Baseline(_) = policy {
                reductions.push(Reduction {
                    baseline: policy.name(),
                    procs: k,
                    processor_cycle_reduction: 1.0
                        - proposed.total_processor_cycles as f64 / r.total_processor_cycles as f64,
                    access_reduction: 1.0
                        - proposed.total_accesses as f64 / r.total_accesses as f64,
                });
            }
        }
    }
    Ok(Comparison { rows, reductions })
}
