use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use yoloflow::output::read_csv_records;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn yoloflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_yoloflow")).args(args).output().expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

/// Run `command` on `network`/`platform` into `out` with extra args.
fn run(command: &str, network: &Path, platform: Option<&Path>, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![command, "--network", path(network), "--out-dir", path(out)];
    if let Some(p) = platform {
        args.extend(["--platform", path(p)]);
    }
    args.extend(extra);
    yoloflow(&args)
}

fn assert_ok(o: &Output) {
    assert!(o.status.success(), "exit {:?}: {}", o.status.code(), stderr(o));
}

/// One line, machine-parsable.
fn assert_error_line(o: &Output, code: i32) -> String {
    assert_eq!(o.status.code(), Some(code), "{}", stderr(o));
    let e = stderr(o);
    let lines: Vec<&str> = e.lines().collect();
    assert_eq!(lines.len(), 1, "{e}");
    assert!(lines[0].starts_with("error["), "{e}");
    e
}

#[test]
fn flow_on_full_yolov5n_stays_within_budget() {
    let dir = tempfile::tempdir().unwrap();
    assert_ok(&run("flow", &fixture("yolov5n.json"), Some(&fixture("zcu104.toml")), dir.path(), &[]));
    for f in ["design.json", "report.json", "nodes.csv", "edges.csv", "memory.svg", "latency.svg", "manifest.json"] {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
    let r = json(&dir.path().join("report.json"));
    assert!(r["dsp_used"].as_u64().unwrap() <= r["dsp_total"].as_u64().unwrap());
    assert_eq!(r["dsp_total"], 1728);
    assert!(r["mem_total"].as_u64().unwrap() <= r["onchip_bits"].as_u64().unwrap());
    let max_node = r["nodes"].as_array().unwrap().iter().map(|n| n["latency_s"].as_f64().unwrap()).fold(0.0, f64::max);
    assert!(r["total_latency"].as_f64().unwrap() >= max_node);
}

#[test]
fn every_artifact_carries_the_manifest_hash() {
    let dir = tempfile::tempdir().unwrap();
    assert_ok(&run("flow", &fixture("yolov3_tiny_reduced.json"), Some(&fixture("vcu118.json")), dir.path(), &[]));
    let m = json(&dir.path().join("manifest.json"));
    let hash = m["config_hash"].as_str().unwrap();
    assert_eq!(hash.len(), 64);
    for a in m["artifacts"].as_array().unwrap() {
        let name = a.as_str().unwrap();
        let p = dir.path().join(name);
        if name.ends_with(".json") {
            assert_eq!(json(&p)["config_hash"], hash, "{name}");
        } else if name.ends_with(".csv") {
            assert!(fs::read_to_string(&p).unwrap().starts_with(&format!("# config {hash}\n")), "{name}");
        } else if name.ends_with(".svg") {
            assert!(fs::read_to_string(&p).unwrap().contains(&format!("<!-- config {hash} -->")), "{name}");
        }
    }
}

#[test]
fn missing_platform_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere.toml");
    let o = run("flow", &fixture("yolov5n_reduced.json"), Some(&missing), &dir.path().join("out"), &[]);
    let e = assert_error_line(&o, 2);
    assert!(e.contains("nowhere.toml"), "{e}");
}

#[test]
fn one_dsp_is_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let pf = dir.path().join("tiny.toml");
    fs::write(&pf, "dsp_total = 1\nonchip_bits = 39813120\nf_clk = 200e6\noffchip_bw = 135e9\ndma_burst = 256\n").unwrap();
    let o = run("flow", &fixture("yolov5n_reduced.json"), Some(&pf), &dir.path().join("out"), &[]);
    let e = assert_error_line(&o, 3);
    assert!(e.contains("infeasible"), "{e}");
}

#[test]
fn simulated_design_matches_the_reference() {
    let dir = tempfile::tempdir().unwrap();
    let net = fixture("yolov5n_reduced.json");
    assert_ok(&run("dse", &net, Some(&fixture("zcu104.toml")), dir.path(), &[]));
    let design = dir.path().join("design.json");
    let sim = dir.path().join("sim");
    assert_ok(&run("simulate", &net, None, &sim, &["--design", path(&design), "--check"]));
    let s = json(&sim.join("sim.json"));
    assert_eq!(s["check"], "pass");
    assert!(s["cycles_total"].as_u64().unwrap() >= s["cycles_steady"].as_u64().unwrap());
    assert!(sim.join("outputs.sati").is_file());
    let depths = json(&sim.join("depths.json"));
    assert_eq!(depths["source"], "measured");
    let occ = read_csv_records(&fs::read_to_string(sim.join("occupancy.csv")).unwrap());
    assert!(occ.iter().all(|r| r[4].parse::<u64>().unwrap() <= r[3].parse::<u64>().unwrap_or(u64::MAX)));
}

#[test]
fn design_missing_a_node_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let net = fixture("yolov3_tiny_reduced.json");
    assert_ok(&run("dse", &net, Some(&fixture("zcu104.toml")), dir.path(), &[]));
    let mut doc = json(&dir.path().join("design.json"));
    let par = doc["parallelism"].as_object_mut().unwrap();
    let victim = par.keys().nth(1).unwrap().clone();
    par.remove(&victim);
    let design = dir.path().join("broken.json");
    fs::write(&design, doc.to_string()).unwrap();
    let o = run("simulate", &net, None, &dir.path().join("sim"), &["--design", path(&design)]);
    let e = assert_error_line(&o, 2);
    assert!(e.contains(&victim), "{e}");
}

const FORK: &str = r#"{ "name": "fork", "nodes": [
  { "id": "in", "kind": "Input", "shape": [8, 8, 4] },
  { "id": "c", "kind": "Convolution", "inputs": ["in"], "kernel_size": 3, "padding": 1, "filters": 4 },
  { "id": "add", "kind": "Add", "inputs": ["c", "in"] },
  { "id": "out", "kind": "Output", "inputs": ["add"] } ] }"#;

#[test]
fn undersized_skip_buffer_deadlocks() {
    let dir = tempfile::tempdir().unwrap();
    let net = dir.path().join("fork.json");
    fs::write(&net, FORK).unwrap();
    let design = dir.path().join("design.json");
    fs::write(&design, r#"{ "parallelism": { "in": 1, "c": 1, "add": 1, "out": 1 } }"#).unwrap();
    let depths = dir.path().join("depths.json");
    fs::write(&depths, r#"{ "source": "measured", "depths": { "in->c": 1, "in->add": 1 } }"#).unwrap();
    let o = run("simulate", &net, None, &dir.path().join("sim"), &["--design", path(&design), "--depths", path(&depths)]);
    let e = assert_error_line(&o, 4);
    assert!(e.contains("deadlock") && e.contains("in->add"), "{e}");

    // The same graph with measured depths completes.
    let measured = dir.path().join("m");
    assert_ok(&run("depths", &net, None, &measured, &["--simulate", "--design", path(&design)]));
    let o = run(
        "simulate",
        &net,
        None,
        &dir.path().join("sim2"),
        &["--design", path(&design), "--depths", path(&measured.join("depths.json")), "--check"],
    );
    assert_ok(&o);
}

#[test]
fn ablation_is_monotone_and_starts_from_the_flow_report() {
    let dir = tempfile::tempdir().unwrap();
    let pf = dir.path().join("roomy.toml");
    fs::write(&pf, "dsp_total = 1728\nonchip_bits = 400000000\nf_clk = 200e6\noffchip_bw = 135e9\ndma_burst = 256\n").unwrap();
    let net = fixture("yolov5n.json");
    let flow = dir.path().join("flow");
    assert_ok(&run("flow", &net, Some(&pf), &flow, &[]));
    let abl = dir.path().join("abl");
    assert_ok(&run("ablation", &net, Some(&pf), &abl, &["--top-k", "5"]));
    let rows = read_csv_records(&fs::read_to_string(abl.join("ablation.csv")).unwrap());
    assert_eq!(rows.len(), 6);
    let col = |i: usize| rows.iter().map(|r| r[i].parse::<f64>().unwrap()).collect::<Vec<_>>();
    let (skip, total, bw) = (col(1), col(2), col(3));
    for k in 1..rows.len() {
        assert!(skip[k] <= skip[k - 1] && total[k] <= total[k - 1], "row {k}");
        assert!(bw[k] >= bw[k - 1], "row {k}");
    }
    let r = json(&flow.join("report.json"));
    assert_eq!(skip[0], r["memory"]["skip"].as_f64().unwrap());
    assert_eq!(total[0], r["mem_total"].as_f64().unwrap());
    let svg = fs::read_to_string(abl.join("ablation.svg")).unwrap();
    assert!(svg.matches(r#"class="bar""#).count() >= 6);
}

#[test]
fn ablation_past_the_skip_count_warns() {
    let dir = tempfile::tempdir().unwrap();
    let net = dir.path().join("fork.json");
    fs::write(&net, FORK).unwrap();
    let o = run("ablation", &net, Some(&fixture("zcu104.toml")), dir.path(), &["--top-k", "4"]);
    assert_ok(&o);
    assert!(stderr(&o).starts_with("warning[ablation]"), "{}", stderr(&o));
    let rows = read_csv_records(&fs::read_to_string(dir.path().join("ablation.csv")).unwrap());
    // Both branches of the fork are skip edges.
    assert_eq!(rows.len(), 3);
}

/// JSON and CSV artifacts by name, with manifest timings dropped.
fn artifacts(dir: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        let name = p.file_name().unwrap().to_string_lossy().into_owned();
        if name == "manifest.json" {
            let mut m = json(&p);
            m.as_object_mut().unwrap().remove("timings_ms");
            out.insert(name, m.to_string());
        } else if name.ends_with(".json") || name.ends_with(".csv") {
            out.insert(name, fs::read_to_string(&p).unwrap());
        }
    }
    out
}

#[test]
fn identical_runs_produce_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let net = fixture("yolov5n_reduced.json");
    let pf = fixture("vcu110.toml");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        assert_ok(&run("flow", &net, Some(&pf), out, &["--simulate", "--seed", "7"]));
    }
    let (x, y) = (artifacts(&a), artifacts(&b));
    assert!(x.len() >= 7, "{:?}", x.keys());
    assert_eq!(x, y);
    for svg in ["memory.svg", "latency.svg"] {
        let count = |d: &Path| fs::read_to_string(d.join(svg)).unwrap().matches("<rect").count();
        assert_eq!(count(&a), count(&b), "{svg}");
    }
    assert_eq!(fs::read(a.join("weights.satq")).unwrap(), fs::read(b.join("weights.satq")).unwrap());

    let c = dir.path().join("c");
    assert_ok(&run("flow", &net, Some(&pf), &c, &["--simulate", "--seed", "8"]));
    assert_ne!(json(&a.join("report.json"))["config_hash"], json(&c.join("report.json"))["config_hash"]);
}

#[test]
fn quantize_writes_containers() {
    let dir = tempfile::tempdir().unwrap();
    assert_ok(&run("quantize", &fixture("yolov3_tiny_reduced.json"), None, dir.path(), &["--w-bits", "4"]));
    let plan = json(&dir.path().join("quant_plan.json"));
    assert_eq!(plan["w_bits"], 4);
    let satq = fs::read(dir.path().join("weights.satq")).unwrap();
    assert_eq!(&satq[..4], b"SATQ");
    let sati = fs::read(dir.path().join("input.sati")).unwrap();
    assert_eq!(&sati[..4], b"SATI");
}

#[test]
fn errors_are_one_prefixed_line() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{ not json").unwrap();
    let cyclic = dir.path().join("cyclic.json");
    fs::write(
        &cyclic,
        r#"{ "nodes": [ { "id": "in", "kind": "Input", "shape": [4, 4, 1] },
            { "id": "a", "kind": "HardSwish", "inputs": ["b"] },
            { "id": "b", "kind": "HardSwish", "inputs": ["a"] },
            { "id": "out", "kind": "Output", "inputs": ["b"] } ] }"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let full = fixture("yolov5n.json");
    let cases: Vec<(Vec<&str>, i32)> = vec![
        (vec!["validate", "--network", path(&bad), "--out-dir", path(&out)], 2),
        (vec!["validate", "--network", path(&cyclic), "--out-dir", path(&out)], 2),
        (vec!["validate", "--network", "/no/such/net.json", "--out-dir", path(&out)], 2),
        (vec!["dse", "--network", path(&full), "--out-dir", path(&out)], 2),
        (vec!["flow", "--network"], 2),
        (vec!["flow", "--bogus"], 2),
    ];
    for (args, code) in cases {
        let o = yoloflow(&args);
        let e = assert_error_line(&o, code);
        assert!(!e.contains('\u{1b}'), "{e}");
    }
}
