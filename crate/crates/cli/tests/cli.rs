use std::process::{Command, Output};

use serde_json::Value;

fn gisim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gisim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(args: &[&str]) -> Value {
    let o = gisim(args);
    assert!(
        o.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    serde_json::from_slice(&o.stdout).unwrap()
}

// Produced once by an independent script: same generator equations, plain
// loops for the training step, SHA-256 over shape then little-endian values.
const FIXTURE_6_5_4_SEED9: [(&str, &str); 8] = [
    (
        "w",
        "54aa63ba865ca04f1c87bbb468df0da279d21d780fa68359aecf953bb5240fa3",
    ),
    (
        "a_prev",
        "6fb63658793c1843430c6614f546ffaffc0149ea9e050b4c8c997d16fa43d169",
    ),
    (
        "delta",
        "7ce0c6155d6fc48e5fa73dd315821cde1494fd511f5daf45f24fcc4a71969385",
    ),
    (
        "fprime_z_prev",
        "48e46079edc234478d7cfc86d98882e060c181fbe566e95484cd2d71b85ce27c",
    ),
    (
        "grad_a",
        "a3d61b53e948baf7d9d0f76c9d63ecfe23b0b052e8d27ed90f6c65a9659b70c7",
    ),
    (
        "delta_prev",
        "ce69f6c0ebd408f1bca29177b89946472d8ec54217c4e613db2cc694bf25d5aa",
    ),
    (
        "grad_w_t",
        "9c20e26a3e1bbf070fed2210f286b74a30904642d3a34616aad88804479d4b06",
    ),
    (
        "w_next",
        "cd2e4deb526758ac95cb2c22a4031bc463a489cc3ece244ef1a0ee8eaf63a2fe",
    ),
];

#[test]
fn golden_is_deterministic() {
    let args = [
        "golden",
        "--n",
        "4",
        "--m",
        "3",
        "--batch",
        "2",
        "--seed",
        "1",
        "--precision",
        "int",
    ];
    assert_eq!(gisim(&args).stdout, gisim(&args).stdout);
}

#[test]
fn golden_zero_lr_keeps_weights() {
    for prec in ["int", "f64"] {
        let v = json(&["golden", "--lr", "0", "--precision", prec, "--seed", "3"]);
        assert_eq!(v["result"]["outputs"]["w_next"], v["result"]["inputs"]["w"]);
    }
}

#[test]
fn golden_digest_fixture() {
    let v = json(&[
        "golden", "--n", "6", "--m", "5", "--batch", "4", "--seed", "9",
    ]);
    for (name, want) in FIXTURE_6_5_4_SEED9 {
        let got = v["result"]["inputs"]
            .get(name)
            .or(v["result"]["outputs"].get(name))
            .unwrap();
        assert_eq!(got, want, "{name}");
    }
}

#[test]
fn integer_lr_must_be_integral() {
    assert_eq!(gisim(&["golden", "--lr", "0.5"]).status.code(), Some(3));
}

#[test]
fn sim_check_passes_and_delta_reads_match() {
    let base = [
        "--n", "8", "--m", "8", "--batch", "4", "--p", "4", "--q", "4",
    ];
    let il = json(&[&["sim", "--mode", "interleaved", "--check"], &base[..]].concat());
    assert_eq!(il["result"]["check"]["status"], "pass");
    let ws = json(&[&["sim", "--mode", "ws"], &base[..]].concat());
    let ws_pass = ws["result"]["passes"]
        .as_array()
        .unwrap()
        .iter()
        .find(|p| p["pass"] == "activation_grad")
        .unwrap();
    assert_eq!(
        il["result"]["counters"]["reads_delta"],
        ws_pass["counters"]["reads_delta"]
    );
    for mode in ["ws", "os", "is"] {
        let v = json(
            &[
                &["sim", "--check", "--precision", "f64", "--mode", mode],
                &base[..],
            ]
            .concat(),
        );
        assert_eq!(v["result"]["check"]["status"], "pass");
    }
}

#[test]
fn usage_errors() {
    assert_eq!(gisim(&["sim", "--mode", "diagonal"]).status.code(), Some(2));
    assert_eq!(gisim(&["sim", "--n", "0"]).status.code(), Some(2));
    assert_eq!(gisim(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        gisim(&["estimate", "--mode", "ws", "--step", "fused-backward"])
            .status
            .code(),
        Some(3)
    );
}

#[test]
fn estimate_agrees_with_sim() {
    let base = [
        "--n", "8", "--m", "8", "--batch", "4", "--p", "4", "--q", "4",
    ];
    for mode in ["ws", "os", "is", "interleaved"] {
        let e = json(&[&["estimate", "--mode", mode], &base[..]].concat());
        let s = json(&[&["sim", "--mode", mode], &base[..]].concat());
        assert_eq!(e["result"]["counters"], s["result"]["counters"], "{mode}");
        assert_eq!(e["result"]["cycles"], s["result"]["cycles"], "{mode}");
    }
}

#[test]
fn schedule_serial_utilization() {
    let v = json(&[
        "schedule",
        "--dims",
        "1024x5",
        "--procs",
        "1",
        "--policy",
        "baseline-os",
    ]);
    assert_eq!(v["result"]["utilization"], 1.0);
    let v = json(&["schedule", "--dims", "1024x5", "--procs", "1"]);
    for row in v["result"]["rows"].as_array().unwrap() {
        assert_eq!(row["utilization"], 1.0);
    }
    let csv = gisim(&[
        "schedule", "--dims", "64,32,16", "--procs", "2", "--policy", "proposed", "--format", "csv",
    ]);
    let text = String::from_utf8(csv.stdout).unwrap();
    assert_eq!(
        text.lines().nth(1),
        Some("proc,node_id,kind,layer,start,end")
    );
    assert_eq!(
        gisim(&["schedule", "--dims", "8", "--procs", "1"])
            .status
            .code(),
        Some(3)
    );
}

#[test]
fn bench_cnn_row_count() {
    let o = gisim(&["bench", "cnn", "--net", "alexnet", "--batch", "32"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert!(lines
        .next()
        .unwrap()
        .starts_with("# schema_version=1 config="));
    assert!(lines.next().unwrap().starts_with("n,m,batch,p,q,mode,"));
    assert_eq!(lines.count(), 18);
}

#[test]
fn bench_cnn_preset_override() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tiny.csv");
    std::fs::write(&path, "# two layers\n64,128\n10,64\n").unwrap();
    let o = gisim(&[
        "bench",
        "cnn",
        "--preset",
        path.to_str().unwrap(),
        "--p",
        "16",
        "--q",
        "16",
    ]);
    assert!(o.status.success());
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().count(), 2 + 12);
    let missing = dir.path().join("missing.csv");
    assert_eq!(
        gisim(&["bench", "cnn", "--preset", missing.to_str().unwrap()])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn replay_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [&[&str]; 5] = [
        &[
            "golden",
            "--n",
            "5",
            "--m",
            "3",
            "--seed",
            "4",
            "--precision",
            "f64",
            "--full",
        ],
        &["sim", "--mode", "os", "--check"],
        &[
            "bench",
            "sweep",
            "--sizes",
            "16,32x8",
            "--batches",
            "2,4",
            "--p",
            "8",
            "--q",
            "8",
        ],
        &[
            "schedule", "--dims", "64x4", "--procs", "1,2", "--format", "csv",
        ],
        &["compare", "--n", "12", "--m", "20", "--engine", "simulated"],
    ];
    for (i, args) in cases.iter().enumerate() {
        let first = dir.path().join(format!("run{i}"));
        let again = dir.path().join(format!("again{i}"));
        let o = gisim(&[&args[..], &["--out", first.to_str().unwrap()]].concat());
        assert!(o.status.success(), "{args:?}");
        let o = gisim(&[
            "replay",
            first.to_str().unwrap(),
            "--out",
            again.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(
            std::fs::read(&first).unwrap(),
            std::fs::read(&again).unwrap(),
            "{args:?}"
        );
    }
}

#[test]
fn sweep_output_independent_of_threads() {
    let args = [
        "bench",
        "sweep",
        "--sizes",
        "8,16,12x20",
        "--batches",
        "1,3",
        "--p",
        "4",
        "--q",
        "4",
        "--engine",
        "simulated",
    ];
    let one = gisim(&[&args[..], &["--threads", "1"]].concat());
    let many = gisim(&[&args[..], &["--threads", "8"]].concat());
    assert!(one.status.success());
    assert_eq!(one.stdout, many.stdout);
}
