use std::path::Path;

use gisim_core::bench::{self, BenchReport, SweepSpec};
use gisim_core::costmodel::{self, StepKind};
use gisim_core::golden::{self, TrainStepInputs, TrainStepOutputs};
use gisim_core::schedule::{build_graph, compare_policies, list_schedule, Policy};
use gisim_core::sysarray::run_layer;
use gisim_core::{
    seeded_matrix, ArrayGeometry, DataflowMode, LayerShape, Matrix, Precision, Scalar, SeededValue,
    ValueClass,
};
use serde_json::{json, Value};

use crate::args::*;
use crate::digest::matrix_digest;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Io(String),
}

impl From<gisim_core::Error> for Failure {
    fn from(e: gisim_core::Error) -> Self {
        Failure::Config(e.to_string())
    }
}

/// A rendered document plus whether an embedded check failed.
pub struct Output {
    pub text: String,
    pub check_failed: bool,
}

type Res<T> = Result<T, Failure>;

fn cfg<T>(msg: impl Into<String>) -> Res<T> {
    Err(Failure::Config(msg.into()))
}

fn usize_of(v: u64) -> usize {
    v as usize
}

fn shape(l: &LayerArgs) -> Res<(LayerShape, ArrayGeometry)> {
    Ok((
        LayerShape::new(usize_of(l.n), usize_of(l.m), usize_of(l.batch))?,
        ArrayGeometry::new(usize_of(l.p), usize_of(l.q))?,
    ))
}

fn json_doc(cmd: &Command, result: Value) -> String {
    let doc = json!({ "schema_version": SCHEMA_VERSION, "config": cmd, "result": result });
    let mut s = serde_json::to_string_pretty(&doc).expect("serializable");
    s.push('\n');
    s
}

/// CSV documents start with one comment line carrying the schema version
/// and the embedded configuration.
fn csv_doc(cmd: &Command, body: &str) -> String {
    let cfg = serde_json::to_string(cmd).expect("serializable");
    format!("# schema_version={SCHEMA_VERSION} config={cfg}\n{body}")
}

fn ok(text: String) -> Res<Output> {
    Ok(Output {
        text,
        check_failed: false,
    })
}

pub fn run(cmd: &Command) -> Res<Output> {
    match cmd {
        Command::Golden(a) => match a.data.precision {
            Precision::Int => golden_cmd::<i64>(cmd, a),
            Precision::F64 => golden_cmd::<f64>(cmd, a),
        },
        Command::Sim(a) => match a.data.precision {
            Precision::Int => sim_cmd::<i64>(cmd, a),
            Precision::F64 => sim_cmd::<f64>(cmd, a),
        },
        Command::Estimate(a) => estimate_cmd(cmd, a),
        Command::Schedule(a) => schedule_cmd(cmd, a),
        Command::Bench(BenchCmd::Sweep(a)) => sweep_cmd(cmd, a),
        Command::Bench(BenchCmd::Cnn(a)) => cnn_cmd(cmd, a),
        Command::Compare(a) => compare_cmd(cmd, a),
        Command::Replay { file } => replay(file),
    }
}

/// Reads the configuration embedded in a JSON or CSV output and re-runs it.
pub fn replay(file: &Path) -> Res<Output> {
    let text = std::fs::read_to_string(file)
        .map_err(|e| Failure::Io(format!("{}: {e}", file.display())))?;
    let embedded: Value = if let Some(first) = text.lines().next().filter(|l| l.starts_with('#')) {
        let Some((_, j)) = first.split_once("config=") else {
            return cfg("CSV comment line has no embedded config");
        };
        serde_json::from_str(j).map_err(|e| Failure::Config(format!("embedded config: {e}")))?
    } else {
        let doc: Value = serde_json::from_str(&text)
            .map_err(|e| Failure::Config(format!("not a gisim output: {e}")))?;
        if doc.get("schema_version") != Some(&json!(SCHEMA_VERSION)) {
            return cfg("unsupported or missing schema_version");
        }
        doc.get("config").cloned().unwrap_or(Value::Null)
    };
    let cmd: Command = serde_json::from_value(embedded)
        .map_err(|e| Failure::Config(format!("embedded config: {e}")))?;
    if matches!(cmd, Command::Replay { .. }) {
        return cfg("cannot replay a replay");
    }
    run(&cmd)
}

trait FromLr: Sized {
    fn from_lr(lr: Option<f64>) -> Res<Self>;
    const CLASS: ValueClass;
}

impl FromLr for i64 {
    const CLASS: ValueClass = ValueClass::SmallInt;
    fn from_lr(lr: Option<f64>) -> Res<i64> {
        let lr = lr.unwrap_or(1.0);
        if lr.fract() != 0.0 || lr.abs() > 1e15 {
            return cfg(format!(
                "integer precision needs an integral learning rate, got {lr}"
            ));
        }
        Ok(lr as i64)
    }
}

impl FromLr for f64 {
    const CLASS: ValueClass = ValueClass::UnitFloat;
    fn from_lr(lr: Option<f64>) -> Res<f64> {
        match lr.unwrap_or(0.01) {
            v if v.is_finite() => Ok(v),
            v => cfg(format!("learning rate must be finite, got {v}")),
        }
    }
}

/// Inputs drawn from consecutive seeds: `W`, `a_prev`, `delta`, `f'`.
fn seeded_inputs<T: SeededValue + FromLr>(l: &LayerArgs, d: &DataArgs) -> Res<TrainStepInputs<T>> {
    let (n, m, b) = (usize_of(l.n), usize_of(l.m), usize_of(l.batch));
    let g = |r, c, k: u64| seeded_matrix::<T>(r, c, d.seed.wrapping_add(k), T::CLASS);
    Ok(TrainStepInputs {
        w: g(n, m, 0)?,
        a_prev: g(m, b, 1)?,
        delta: g(n, b, 2)?,
        fprime_z_prev: g(m, b, 3)?,
        lr: T::from_lr(d.lr)?,
    })
}

fn input_digests<T: Scalar>(i: &TrainStepInputs<T>) -> Value {
    json!({
        "w": matrix_digest(&i.w),
        "a_prev": matrix_digest(&i.a_prev),
        "delta": matrix_digest(&i.delta),
        "fprime_z_prev": matrix_digest(&i.fprime_z_prev),
    })
}

fn output_digests<T: Scalar>(o: &TrainStepOutputs<T>) -> Value {
    json!({
        "grad_a": matrix_digest(&o.grad_a),
        "delta_prev": matrix_digest(&o.delta_prev),
        "grad_w_t": matrix_digest(&o.grad_w_t),
        "w_next": matrix_digest(&o.w_next),
    })
}

fn rows<T: Scalar + serde::Serialize>(m: &Matrix<T>) -> Value {
    json!((0..m.rows())
        .map(|r| (0..m.cols()).map(|c| m.get(r, c)).collect::<Vec<_>>())
        .collect::<Vec<_>>())
}

fn golden_cmd<T: SeededValue + FromLr + serde::Serialize>(
    cmd: &Command,
    a: &GoldenArgs,
) -> Res<Output> {
    shape(&a.layer)?;
    let inp = seeded_inputs::<T>(&a.layer, &a.data)?;
    let out = golden::train_step(&inp)?;
    let mut result = json!({
        "inputs": input_digests(&inp),
        "outputs": output_digests(&out),
    });
    if a.full {
        result["matrices"] = json!({
            "w": rows(&inp.w), "a_prev": rows(&inp.a_prev), "delta": rows(&inp.delta),
            "fprime_z_prev": rows(&inp.fprime_z_prev), "grad_a": rows(&out.grad_a),
            "delta_prev": rows(&out.delta_prev), "grad_w_t": rows(&out.grad_w_t), "w_next": rows(&out.w_next),
        });
    }
    ok(json_doc(cmd, result))
}

fn sim_cmd<T: SeededValue + FromLr>(cmd: &Command, a: &SimArgs) -> Res<Output> {
    let (sh, geom) = shape(&a.layer)?;
    let inp = seeded_inputs::<T>(&a.layer, &a.data)?;
    let run = run_layer(sh, geom, a.mode, &inp)?;
    let (check, failed) = if a.check {
        let want = golden::train_step(&inp)?;
        let fields = [
            ("grad_a", run.outputs.grad_a == want.grad_a),
            ("delta_prev", run.outputs.delta_prev == want.delta_prev),
            ("grad_w_t", run.outputs.grad_w_t == want.grad_w_t),
            ("w_next", run.outputs.w_next == want.w_next),
        ];
        let bad: Vec<_> = fields.iter().filter(|f| !f.1).map(|f| f.0).collect();
        (
            json!({ "status": if bad.is_empty() { "pass" } else { "fail" }, "mismatched": bad }),
            !bad.is_empty(),
        )
    } else {
        (json!({ "status": "skipped" }), false)
    };
    let result = json!({
        "mode": a.mode,
        "cycles": run.cycles,
        "counters": run.counters,
        "total_reads": run.counters.total_reads(),
        "total_writes": run.counters.total_writes(),
        "passes": run.passes,
        "inputs": input_digests(&inp),
        "outputs": output_digests(&run.outputs),
        "check": check,
    });
    Ok(Output {
        text: json_doc(cmd, result),
        check_failed: failed,
    })
}

fn estimate_cmd(cmd: &Command, a: &EstimateArgs) -> Res<Output> {
    let (sh, geom) = shape(&a.layer)?;
    let est = match a.step {
        StepArg::Backward => costmodel::estimate_backward(sh, geom, a.mode)?,
        StepArg::Loop => costmodel::estimate_loop(sh, geom, a.mode)?,
        s => {
            let step = match s {
                StepArg::Forward => StepKind::Forward,
                StepArg::Activation => StepKind::Activation,
                StepArg::BackwardDelta => StepKind::BackwardDelta,
                StepArg::BackwardGradw => StepKind::BackwardGradW,
                StepArg::Update => StepKind::Update,
                StepArg::Hadamard => StepKind::Hadamard,
                _ => StepKind::FusedBackward,
            };
            costmodel::estimate(sh, geom, a.mode, step)?
        }
    };
    let result = json!({
        "mode": a.mode,
        "step": a.step,
        "cycles": est.cycles,
        "counters": est.accesses,
        "total_reads": est.accesses.total_reads(),
        "total_writes": est.accesses.total_writes(),
        "formula_trace": est.formula_trace,
        "delta_reuse_saving": costmodel::delta_reuse_saving(sh, geom),
        "inplace_update_saving": costmodel::inplace_update_saving(sh, geom),
    });
    ok(json_doc(cmd, result))
}

fn parse_list(s: &str, what: &str) -> Res<Vec<usize>> {
    let v: Option<Vec<usize>> = s
        .split(',')
        .map(|x| x.trim().parse().ok().filter(|&v: &usize| v > 0))
        .collect();
    match v {
        Some(v) if !v.is_empty() => Ok(v),
        _ => cfg(format!(
            "{what}: expected a comma list of positive integers, got '{s}'"
        )),
    }
}

pub fn parse_dims(s: &str) -> Res<Vec<usize>> {
    if let Some((w, k)) = s.split_once('x') {
        match (w.trim().parse::<usize>(), k.trim().parse::<usize>()) {
            (Ok(w), Ok(k)) if w > 0 => Ok(vec![w; k]),
            _ => cfg(format!("dims: expected WIDTHxCOUNT, got '{s}'")),
        }
    } else {
        parse_list(s, "dims")
    }
}

fn schedule_cmd(cmd: &Command, a: &ScheduleArgs) -> Res<Output> {
    let dims = parse_dims(&a.dims)?;
    let geom = ArrayGeometry::new(usize_of(a.p), usize_of(a.q))?;
    let procs = parse_list(&a.procs, "procs")?;
    let batch = usize_of(a.batch);
    match &a.policy {
        Some(p) => {
            let policy = Policy::parse(p)?;
            let [k] = procs[..] else {
                return cfg("a single policy schedules on exactly one processor count");
            };
            let g = build_graph(&dims, batch, geom, policy)?;
            let r = list_schedule(&g, k)?;
            match a.format {
                Format::Csv => ok(csv_doc(cmd, &r.to_csv(&g))),
                Format::Json => ok(json_doc(
                    cmd,
                    json!({
                        "policy": policy.name(),
                        "procs": k,
                        "makespan": r.makespan,
                        "utilization": r.utilization,
                        "total_processor_cycles": r.total_processor_cycles,
                        "total_accesses": r.total_accesses,
                        "critical_path": g.critical_path(),
                        "nodes": g.nodes,
                        "edges": g.edges,
                        "timeline": r.timeline,
                    }),
                )),
            }
        }
        None => {
            let c = compare_policies(&dims, batch, geom, &procs)?;
            match a.format {
                Format::Json => ok(json_doc(
                    cmd,
                    serde_json::to_value(&c).expect("serializable"),
                )),
                Format::Csv => {
                    let mut s = String::from("policy,procs,makespan,utilization,total_processor_cycles,total_accesses,cycle_reduction,access_reduction\n");
                    for r in &c.rows {
                        let red = c
                            .reductions
                            .iter()
                            .find(|x| x.baseline == r.policy && x.procs == r.procs);
                        let (cr, ar) = red.map_or((String::new(), String::new()), |x| {
                            (
                                format!("{:.6}", x.processor_cycle_reduction),
                                format!("{:.6}", x.access_reduction),
                            )
                        });
                        s += &format!(
                            "{},{},{},{:.6},{},{},{cr},{ar}\n",
                            r.policy,
                            r.procs,
                            r.makespan,
                            r.utilization,
                            r.total_processor_cycles,
                            r.total_accesses
                        );
                    }
                    ok(csv_doc(cmd, &s))
                }
            }
        }
    }
}

fn parse_modes(s: &str) -> Res<Vec<DataflowMode>> {
    s.split(',')
        .map(|x| x.trim().parse::<DataflowMode>().map_err(Failure::from))
        .collect()
}

fn parse_sizes(s: &str) -> Res<Vec<(usize, usize)>> {
    s.split(',')
        .map(|x| {
            let x = x.trim();
            let (n, m) = x.split_once('x').unwrap_or((x, x));
            match (n.parse::<usize>(), m.parse::<usize>()) {
                (Ok(n), Ok(m)) if n > 0 && m > 0 => Ok((n, m)),
                _ => cfg(format!("sizes: bad entry '{x}'")),
            }
        })
        .collect()
}

fn report_doc(cmd: &Command, format: Format, report: &BenchReport, extra: Value) -> Res<Output> {
    match format {
        Format::Csv => ok(csv_doc(cmd, &report.to_csv())),
        Format::Json => {
            let mut v = serde_json::to_value(report).expect("serializable");
            if let (Value::Object(o), Value::Object(e)) = (&mut v, extra) {
                o.extend(e);
            }
            ok(json_doc(cmd, v))
        }
    }
}

fn sweep_cmd(cmd: &Command, a: &SweepArgs) -> Res<Output> {
    let spec = SweepSpec {
        sizes: parse_sizes(&a.sizes)?,
        batches: parse_list(&a.batches, "batches")?,
        geom: ArrayGeometry::new(usize_of(a.p), usize_of(a.q))?,
        modes: parse_modes(&a.modes)?,
        normalize_to: a.normalize_to,
    };
    let report = bench::run_sweep(&spec, a.engine)?;
    let extra = match bench::headline(&report) {
        Ok(h) => json!({ "headline": h }),
        Err(_) => json!({}),
    };
    report_doc(cmd, a.format, &report, extra)
}

fn cnn_cmd(cmd: &Command, a: &CnnArgs) -> Res<Output> {
    let layers = match &a.preset {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
            bench::parse_preset(&text)?
        }
        None => bench::preset(&a.net)?,
    };
    let geom = ArrayGeometry::new(usize_of(a.p), usize_of(a.q))?;
    let r = bench::run_cnn_fc(&layers, usize_of(a.batch), geom, a.engine)?;
    report_doc(cmd, a.format, &r.report, json!({ "summary": r.summary }))
}

fn compare_cmd(cmd: &Command, a: &CompareArgs) -> Res<Output> {
    let (sh, geom) = shape(&a.layer)?;
    let spec = SweepSpec {
        sizes: vec![(sh.n_out, sh.m_in)],
        batches: vec![sh.batch],
        geom,
        modes: DataflowMode::ALL.to_vec(),
        normalize_to: DataflowMode::Ws,
    };
    let report = bench::run_sweep(&spec, a.engine)?;
    let extra = json!({
        "headline": bench::headline(&report)?,
        "delta_reuse_saving": costmodel::delta_reuse_saving(sh, geom),
        "inplace_update_saving": costmodel::inplace_update_saving(sh, geom),
    });
    report_doc(cmd, a.format, &report, extra)
}
