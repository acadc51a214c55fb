//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::process::Command;
use std::time::Instant;

use gisim_core::bench::{headline, preset, run_cnn_fc, run_sweep, Engine, SweepSpec};
use gisim_core::costmodel::{delta_reuse_saving, estimate_backward, inplace_update_saving};
use gisim_core::golden::{self, TrainStepInputs};
use gisim_core::rng::XorShift64Star;
use gisim_core::schedule::{compare_policies, exhaustive_makespan, list_schedule, OpGraph, Policy};
use gisim_core::sysarray::{
    elementwise_cycles, run_layer, run_tile_interleaved, run_tile_os, run_tile_ws, TileJob,
};
use gisim_core::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn first(bad: &[String]) -> String {
    bad.first()
        .map(|b| format!(", first: {b}"))
        .unwrap_or_default()
}

fn int_inputs(n: usize, m: usize, b: usize, seed: u64) -> TrainStepInputs<i64> {
    let g = |r, c, k| seeded_matrix(r, c, seed.wrapping_add(k), ValueClass::SmallInt).unwrap();
    TrainStepInputs {
        w: g(n, m, 0),
        a_prev: g(m, b, 1),
        delta: g(n, b, 2),
        fprime_z_prev: g(m, b, 3),
        lr: 1,
    }
}

/// The 200 configurations shared by the first two criteria.
fn configs() -> Vec<(usize, usize, usize, usize, usize, u64)> {
    let mut rng = XorShift64Star::new(0x5eed);
    let pq = [2, 4, 8];
    (0..200)
        .map(|_| {
            let n = 2 + rng.below(31);
            let m = 2 + rng.below(31);
            let b = 1 + rng.below(8);
            (n, m, b, pq[rng.below(3)], pq[rng.below(3)], rng.next_u64())
        })
        .collect()
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let mut bad = Vec::new();
    for (n, m, b, p, q, seed) in configs() {
        let inp = int_inputs(n, m, b, seed);
        let want = golden::train_step(&inp).unwrap();
        let (shape, geom) = (
            LayerShape::new(n, m, b).unwrap(),
            ArrayGeometry::new(p, q).unwrap(),
        );
        for mode in [
            DataflowMode::Ws,
            DataflowMode::Os,
            DataflowMode::Interleaved,
        ] {
            let got = run_layer(shape, geom, mode, &inp).unwrap().outputs;
            if got.grad_a != want.grad_a
                || got.grad_w_t != want.grad_w_t
                || got.w_next != want.w_next
            {
                bad.push(format!("{mode} {n}x{m}x{b} on {p}x{q}"));
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(
        bad.is_empty() && secs < 60.0,
        format!(
            "200 configs x {{ws, os, interleaved}}, {} mismatches, {secs:.2}s{}",
            bad.len(),
            first(&bad)
        ),
    )
}

fn criterion_2() -> Outcome {
    let (mut checked, mut bad) = (0, Vec::new());
    for (n, m, b, p, q, seed) in configs()
        .into_iter()
        .filter(|c| c.0 % c.4 == 0 && c.1 % c.3 == 0)
    {
        checked += 1;
        let inp = int_inputs(n, m, b, seed);
        let (shape, geom) = (
            LayerShape::new(n, m, b).unwrap(),
            ArrayGeometry::new(p, q).unwrap(),
        );
        let mut totals = Vec::new();
        for mode in DataflowMode::ALL {
            let sim = run_layer(shape, geom, mode, &inp).unwrap();
            let est = estimate_backward(shape, geom, mode).unwrap();
            if sim.counters != est.accesses || sim.cycles != est.cycles {
                bad.push(format!("{mode} {n}x{m}x{b} on {p}x{q}"));
            }
            totals.push((mode, sim.counters.total(), est));
        }
        let fused = &totals[3].2;
        let want = fused.term("delta_reuse_per_word").unwrap()
            + fused.term("inplace_per_element").unwrap();
        let fp = delta_reuse_saving(shape, geom).first_principles()
            + inplace_update_saving(shape, geom).first_principles();
        for (mode, total, _) in &totals[..3] {
            if total - totals[3].1 != want || want != fp {
                bad.push(format!(
                    "saving {mode} {n}x{m}x{b} on {p}x{q}: {} vs {want}",
                    total - totals[3].1
                ));
            }
        }
    }
    outcome(
        checked > 0 && bad.is_empty(),
        format!("{checked} divisible configs, counters and cycles field-for-field, saving = delta + in-place terms; {} mismatches{}", bad.len(), first(&bad)),
    )
}

fn criterion_3() -> Outcome {
    let spec = SweepSpec {
        sizes: vec![(128, 128), (256, 256), (512, 512), (1024, 1024)],
        batches: vec![4, 16, 64],
        geom: ArrayGeometry::new(128, 128).unwrap(),
        modes: DataflowMode::ALL.to_vec(),
        normalize_to: DataflowMode::Ws,
    };
    let h = headline(&run_sweep(&spec, Engine::Analytic).unwrap()).unwrap();
    let (c, a) = (h.cycle_reduction * 100.0, h.access_reduction * 100.0);
    let per: Vec<String> = h
        .per_size
        .iter()
        .map(|x| format!("{}:{:.1}/{:.1}", x.0, x.2 * 100.0, x.3 * 100.0))
        .collect();
    outcome(
        (c - 30.0).abs() <= 8.0 && (a - 42.0).abs() <= 8.0,
        format!(
            "cycles -{c:.1}% (30 +/- 8), accesses -{a:.1}% (42 +/- 8); per size cyc/acc {}",
            per.join(" ")
        ),
    )
}

fn criterion_4() -> Outcome {
    let geom = ArrayGeometry::new(128, 128).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for net in ["alexnet", "vgg16"] {
        let s = run_cnn_fc(&preset(net).unwrap(), 32, geom, Engine::Analytic)
            .unwrap()
            .summary;
        let red = s.cycle_reduction * 100.0;
        let ok_c = (1.4..=2.2).contains(&s.cycle_ratio);
        let ok_a = (1.5..=1.9).contains(&s.access_ratio);
        let ok_r = (red - 29.0).abs() <= 10.0;
        pass &= ok_c && ok_a && ok_r;
        parts.push(format!(
            "{net}: cycle ratio {:.3}x [{}], access ratio {:.3}x [{}], cycle reduction {red:.1}% vs 29 +/- 10 [{}]",
            s.cycle_ratio,
            if ok_c { "ok" } else { "out" },
            s.access_ratio,
            if ok_a { "ok" } else { "out" },
            if ok_r { "ok" } else { "out" },
        ));
    }
    if !pass {
        // Per-tile cycle constants behind the gap, 128x128 array, B = 32.
        let t = |n, m| {
            estimate_backward(
                LayerShape::new(n, m, 32).unwrap(),
                geom,
                DataflowMode::Interleaved,
            )
            .unwrap()
        };
        let f = t(4096, 4096);
        parts.push(format!(
            "model: per tile interleaved = Q + 2B + (P-1) + (Q-1) + 1 = {}, separate = 2 x (Q+B+P+Q-2) + 1 = {}; \
             the matched forward is input-stationary, so the backward saving dominates (trace load={} stream={} drain={})",
            128 + 64 + 127 + 127 + 1,
            2 * (128 + 32 + 127 + 127) + 1,
            f.term("interleaved.load").unwrap_or(0),
            f.term("interleaved.two_phase_stream").unwrap_or(0),
            f.term("interleaved.fill_drain").unwrap_or(0),
        ));
    }
    outcome(pass, parts.join("; "))
}

fn criterion_5() -> Outcome {
    let c = compare_policies(
        &[1024; 5],
        32,
        ArrayGeometry::new(128, 128).unwrap(),
        &[1, 2, 3],
    )
    .unwrap();
    let mut pass = true;
    let mut notes = Vec::new();
    for policy in Policy::ALL {
        let rows: Vec<_> = (1..=3).map(|k| c.row(policy, k).unwrap()).collect();
        let a = rows[0].utilization == 1.0;
        let b = rows.windows(2).all(|w| w[1].utilization < w[0].utilization);
        let cc = rows
            .windows(2)
            .all(|w| w[1].total_accesses == w[0].total_accesses);
        pass &= a && b && cc;
        notes.push(format!(
            "{} util {:.2}/{:.2}/{:.2}%",
            policy.name(),
            rows[0].utilization * 100.0,
            rows[1].utilization * 100.0,
            rows[2].utilization * 100.0
        ));
    }
    let reds: Vec<f64> = (1..=3)
        .map(|k| {
            c.reduction(DataflowMode::Os, k)
                .unwrap()
                .processor_cycle_reduction
                * 100.0
        })
        .collect();
    let d = reds.windows(2).all(|w| w[1] >= w[0])
        && reds
            .iter()
            .zip([36.0, 40.0, 55.0])
            .all(|(r, p)| (r - p).abs() <= 10.0);
    pass &= d;
    outcome(
        pass,
        format!(
            "{}; reductions vs baseline-os {:.1}/{:.1}/{:.1}% (36/40/55 +/- 10)",
            notes.join(", "),
            reds[0],
            reds[1],
            reds[2]
        ),
    )
}

fn criterion_6() -> Outcome {
    let geom = ArrayGeometry::new(8, 8).unwrap();
    let (mut tiles, mut bad) = (0, Vec::new());
    for tq in 1..=8 {
        for tp in 1..=8 {
            for b in 1..=16 {
                tiles += 1;
                let seed = (tq * 1000 + tp * 100 + b) as u64;
                let g =
                    |r, c, k| seeded_matrix::<i64>(r, c, seed + k, ValueClass::SmallInt).unwrap();
                let (w, d, a) = (g(tq, tp, 0), g(tq, b, 1), g(tp, b, 2));
                let mut ws = TileJob::new(DataflowMode::Ws, geom, tq, tp, b);
                ws.weight = Some(w.clone());
                ws.delta = Some(d.clone());
                let mut os = TileJob::new(DataflowMode::Os, geom, tq, tp, b);
                os.delta = Some(d.clone());
                os.activation = Some(a.clone());
                let mut il = TileJob::new(DataflowMode::Interleaved, geom, tq, tp, b);
                il.weight = Some(w);
                il.delta = Some(d);
                il.activation = Some(a);
                il.lr = Some(1);
                let (ws, os, il) = (
                    run_tile_ws(&ws).unwrap(),
                    run_tile_os(&os).unwrap(),
                    run_tile_interleaved(&il).unwrap(),
                );
                let sep_c = ws.cycles.total_cycles
                    + os.cycles.total_cycles
                    + elementwise_cycles(tq * tp, geom.pes());
                let sep_a = ws.counters.total() + os.counters.total() + 3 * (tq * tp) as u64;
                if !(il.cycles.total_cycles < sep_c
                    && il.counters.total() < sep_a
                    && il.counters.reads_delta == ws.counters.reads_delta)
                {
                    bad.push(format!("{tq}x{tp} B={b}"));
                }
            }
        }
    }
    outcome(
        bad.is_empty(),
        format!(
            "{tiles} tiles (1..8 x 1..8, B 1..16), {} violations{}",
            bad.len(),
            first(&bad)
        ),
    )
}

fn random_dag(rng: &mut XorShift64Star, n: usize, density: usize) -> OpGraph {
    let costs: Vec<u64> = (0..n).map(|_| 1 + rng.below(20) as u64).collect();
    let mut edges = Vec::new();
    for v in 0..n {
        for u in 0..v {
            if rng.below(100) < density {
                edges.push((u, v));
            }
        }
    }
    OpGraph::from_costs(&costs, edges).unwrap()
}

fn criterion_7() -> Outcome {
    let mut rng = XorShift64Star::new(7);
    let (mut small, mut worst, mut inexact) = (0, 1.0f64, 0);
    for i in 0..200 {
        let n = 1 + rng.below(8);
        let g = random_dag(&mut rng, n, (i % 6) * 15);
        for procs in 1..=3 {
            small += 1;
            let greedy = list_schedule(&g, procs).unwrap().makespan as f64;
            worst = worst.max(greedy / exhaustive_makespan(&g, procs).unwrap() as f64);
        }
    }
    for n in 1..=8 {
        let costs: Vec<u64> = (0..n).map(|_| 1 + rng.below(9) as u64).collect();
        let chain = OpGraph::from_costs(&costs, (1..n).map(|v| (v - 1, v)).collect()).unwrap();
        let wide = OpGraph::from_costs(&costs, vec![]).unwrap();
        for procs in 1..=3 {
            inexact += (list_schedule(&chain, procs).unwrap().makespan
                != exhaustive_makespan(&chain, procs).unwrap()) as usize;
        }
        inexact += (list_schedule(&wide, n).unwrap().makespan
            != exhaustive_makespan(&wide, n).unwrap()) as usize;
    }
    let mut violations = 0;
    for i in 0..1000 {
        let n = 1 + rng.below(40);
        let g = random_dag(&mut rng, n, 3 + i % 50);
        let r = list_schedule(&g, 1 + rng.below(4)).unwrap();
        let mut span = vec![(0, 0); n];
        for s in &r.timeline {
            span[s.node] = (s.start, s.end);
        }
        violations += g
            .edges
            .iter()
            .filter(|&&(u, v)| span[u].1 > span[v].0)
            .count();
        violations += r
            .timeline
            .windows(2)
            .filter(|w| w[0].proc == w[1].proc && w[0].end > w[1].start)
            .count();
    }
    outcome(
        worst <= 1.5 && inexact == 0 && violations == 0,
        format!("{small} small schedules, worst greedy/optimum {worst:.3} (<= 1.5); chain/wide inexact {inexact}; 1000 random DAGs, {violations} violations"),
    )
}

fn gisim(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_gisim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn criterion_8() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cases: [&[&str]; 8] = [
        &[
            "golden", "--n", "6", "--m", "5", "--batch", "4", "--seed", "9",
        ],
        &[
            "sim",
            "--mode",
            "interleaved",
            "--precision",
            "f64",
            "--check",
        ],
        &[
            "estimate", "--mode", "ws", "--step", "loop", "--n", "300", "--m", "200",
        ],
        &["schedule", "--dims", "1024x5", "--procs", "1,2,3"],
        &[
            "schedule",
            "--dims",
            "512,256,128",
            "--procs",
            "2",
            "--policy",
            "proposed",
            "--format",
            "csv",
        ],
        &["bench", "sweep", "--threads", "8"],
        &["bench", "cnn", "--net", "vgg16", "--threads", "4"],
        &["compare", "--n", "20", "--m", "12", "--engine", "simulated"],
    ];
    let mut bad = Vec::new();
    for (i, args) in cases.iter().enumerate() {
        let first = dir.path().join(format!("a{i}"));
        let again = dir.path().join(format!("b{i}"));
        let ok1 = gisim(&[&args[..], &["--out", first.to_str().unwrap()]].concat())
            .status
            .success();
        let ok2 = gisim(&[
            "replay",
            first.to_str().unwrap(),
            "--out",
            again.to_str().unwrap(),
        ])
        .status
        .success();
        if !(ok1 && ok2 && std::fs::read(&first).unwrap() == std::fs::read(&again).unwrap()) {
            bad.push(args.join(" "));
        }
    }
    let serial = gisim(&[
        "bench",
        "sweep",
        "--threads",
        "1",
        "--engine",
        "simulated",
        "--sizes",
        "16,24x8",
        "--batches",
        "2,5",
        "--p",
        "4",
        "--q",
        "4",
    ]);
    let parallel = gisim(&[
        "bench",
        "sweep",
        "--threads",
        "8",
        "--engine",
        "simulated",
        "--sizes",
        "16,24x8",
        "--batches",
        "2,5",
        "--p",
        "4",
        "--q",
        "4",
    ]);
    if serial.stdout != parallel.stdout || !serial.status.success() {
        bad.push("bench sweep 1 vs 8 threads".into());
    }
    outcome(
        bad.is_empty(),
        format!(
            "{} replays + serial/parallel sweep byte-identical{}",
            cases.len(),
            first(&bad)
        ),
    )
}

/// Surrogate loss `E = sum c * z` over the output: `dE/dW = c a^T`.
fn criterion_9() -> Outcome {
    let h = 1e-6;
    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        let (n, m, b) = (
            2 + (seed % 5) as usize,
            2 + (seed % 4) as usize,
            1 + (seed % 3) as usize,
        );
        let u =
            |r, c, k| seeded_matrix::<f64>(r, c, 1000 * seed + k, ValueClass::UnitFloat).unwrap();
        let (w, a, c) = (u(n, m, 0), u(m, b, 1), u(n, b, 2));
        let loss = |w: &MatrixF| {
            let (z, _) = golden::forward(w, &a, ActivationKind::Identity).unwrap();
            z.data()
                .iter()
                .zip(c.data())
                .map(|(z, c)| z * c)
                .sum::<f64>()
        };
        let g = golden::weight_grad_t(&a, &c).unwrap().transpose();
        for y in 0..n {
            for x in 0..m {
                let (mut wp, mut wm) = (w.clone(), w.clone());
                wp[(y, x)] += h;
                wm[(y, x)] -= h;
                let fd = (loss(&wp) - loss(&wm)) / (2.0 * h);
                worst = worst.max((fd - g.get(y, x)).abs() / g.get(y, x).abs().max(1e-3));
            }
        }
    }
    outcome(
        worst < 1e-5,
        format!("20 cases, h = 1e-6, worst relative error {worst:.2e} (< 1e-5)"),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("oracle equivalence", criterion_1),
        ("counter exactness", criterion_2),
        ("single-loop headline ratios", criterion_3),
        ("CNN fully connected ratios", criterion_4),
        ("multiprocessor schedule structure", criterion_5),
        ("interleaving dominance", criterion_6),
        ("scheduler sanity", criterion_7),
        ("determinism", criterion_8),
        ("finite-difference gradient", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let o = f();
        failed += (!o.pass) as usize;
        println!(
            "{} {} {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail
        );
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
