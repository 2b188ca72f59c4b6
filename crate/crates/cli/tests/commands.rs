use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn soda(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_soda"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn soda")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn error_line(out: &Output) -> serde_json::Value {
    assert!(!out.status.success());
    let text = String::from_utf8_lossy(&out.stderr);
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    assert_eq!(lines.len(), 1, "{text}");
    serde_json::from_str(lines[0]).expect("structured error line")
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

const CORPUS_SPEC: &str = r#"{
  "classes": [
    {"label": "a", "lag": 1, "coupling": 0.9},
    {"label": "b", "lag": 2, "coupling": 0.6},
    {"label": "c", "lag": 1, "coupling": 0.2}
  ],
  "persons": 2, "arity": 3, "frames": 16, "noise": 0.2
}"#;

const FAST: &str = r#"{"gibbs_burnin": 50, "gibbs_samples": 200, "null_reps": 40}"#;

fn setup(dir: &Path) {
    fs::write(dir.join("spec.json"), CORPUS_SPEC).unwrap();
    fs::write(dir.join("fast.json"), FAST).unwrap();
}

#[test]
fn synth_infer_classify_chain() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    setup(d);
    ok(&soda(&["synth", "--spec", "spec.json", "--per-class", "4", "--out", "corpus", "--seed", "1"], d));
    assert_eq!(fs::read_dir(d.join("corpus")).unwrap().count(), 12 + 2);
    ok(&soda(&["validate", "corpus", "--out", "val"], d));
    ok(&soda(&["infer", "corpus", "--config", "fast.json", "--out", "inf", "--seed", "1"], d));

    let sym = fs::read_to_string(d.join("inf/symbols/a_000.sym")).unwrap();
    let header: serde_json::Value = serde_json::from_str(sym.lines().next().unwrap()).unwrap();
    assert_eq!((header["p"].as_u64(), header["n"].as_u64(), header["M"].as_u64()), (Some(16), Some(200), Some(16)));
    let codebook: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("inf/codebook.json")).unwrap()).unwrap();
    assert_eq!(codebook["centroids"].as_array().unwrap().len(), 16);
    assert!(d.join("inf/samples/a_000.jsonl").exists());
    let m = manifest(&d.join("inf"));
    assert_eq!(m["config"]["p"], 16);
    assert_eq!(m["seed"], 1);
    assert_eq!(m["inputs"].as_array().unwrap().len(), 13);

    ok(&soda(&["classify", "inf/symbols", "--config", "fast.json", "--out", "cls", "--seed", "1", "--repeats", "2"], d));
    let preds = fs::read_to_string(d.join("cls/predictions.csv")).unwrap();
    assert!(preds.starts_with("id,predicted,truth\n"));
    assert_eq!(preds.lines().count(), 1 + 6);
    let matrix = fs::read_to_string(d.join("cls/matrix.csv")).unwrap();
    assert_eq!(matrix.lines().count(), 13);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("cls/report.json")).unwrap()).unwrap();
    assert_eq!(report["repeats"].as_array().unwrap().len(), 2);
    assert_eq!(report["confusion"].as_array().unwrap().len(), 3);
}

#[test]
fn reruns_produce_identical_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    setup(d);
    ok(&soda(&["synth", "--spec", "spec.json", "--per-class", "4", "--out", "corpus", "--seed", "2"], d));
    for out in ["run1", "run2"] {
        ok(&soda(&["infer", "corpus", "--config", "fast.json", "--no-samples", "--out", out, "--seed", "2"], d));
    }
    assert_eq!(manifest(&d.join("run1"))["artifacts"], manifest(&d.join("run2"))["artifacts"]);
    for (out, threads) in [("c1", "1"), ("c2", "3")] {
        ok(&soda(&["classify", "run1/symbols", "--config", "fast.json", "--out", out, "--threads", threads], d));
    }
    assert_eq!(manifest(&d.join("c1"))["artifacts"], manifest(&d.join("c2"))["artifacts"]);
}

#[test]
fn surface_outputs_and_window_flag() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    setup(d);
    let pair = r#"{"classes": [{"label": "p", "lag": 1, "coupling": 0.9, "active_window": [6, 16]}],
                   "persons": 1, "arity": 3, "frames": 24, "noise": 0.2}"#;
    fs::write(d.join("pair.json"), pair).unwrap();
    ok(&soda(&["synth", "--pair", "--spec", "pair.json", "--out", "pair", "--seed", "3"], d));
    assert!(d.join("pair/truth.json").exists());
    ok(&soda(&["infer", "pair", "--config", "fast.json", "--out", "inf", "--seed", "3"], d));
    ok(&soda(
        &["surface", "inf/symbols/x.sym", "inf/symbols/y.sym", "--config", "fast.json", "--window", "5", "--fdr-method", "bh", "--out", "surf"],
        d,
    ));
    let csv = fs::read_to_string(d.join("surf/surface.csv")).unwrap();
    assert!(csv.starts_with("tau_x,tau_y,di,pval\n"));
    assert_eq!(csv.lines().count(), 1 + 20 * 20);
    let peaks: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("surf/peaks.json")).unwrap()).unwrap();
    for p in peaks.as_array().unwrap() {
        for key in ["tau_x", "tau_y", "di", "pval", "significant"] {
            assert!(p.get(key).is_some(), "{key}");
        }
    }
    let svg = fs::read_to_string(d.join("surf/bubble.svg")).unwrap();
    assert!(svg.contains(r#"width="800" height="600""#));
    assert!(svg.contains("T = 5, q = 0.1 (BH), seed = 0"));
    let m = manifest(&d.join("surf"));
    assert_eq!(m["config"]["window"], 5);
    assert_eq!(m["config"]["fdr_method"], "bh");

    ok(&soda(&["surface", "inf/symbols/x.sym", "inf/symbols/y.sym", "--config", "fast.json", "--out", "surf7"], d));
    assert_eq!(manifest(&d.join("surf7"))["config"]["window"], 7);
}

#[test]
fn failures_print_one_structured_line() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    setup(d);
    let e = error_line(&soda(&["surface", "missing.sym", "other.sym"], d));
    assert_eq!(e["error"], "IoFailure");

    fs::write(d.join("bad.json"), r#"{"windw": 7}"#).unwrap();
    let e = error_line(&soda(&["classify", ".", "--config", "bad.json"], d));
    assert_eq!(e["error"], "InvalidConfig");

    let e = error_line(&soda(&["infer"], d));
    assert_eq!(e["error"], "Usage");

    let a = "{\"p\":4,\"n\":2,\"M\":1}\n0 1\n";
    let b = "{\"p\":8,\"n\":2,\"M\":1}\n0 1\n";
    fs::write(d.join("a.sym"), a).unwrap();
    fs::write(d.join("b.sym"), b).unwrap();
    let e = error_line(&soda(&["surface", "a.sym", "b.sym"], d));
    assert_eq!(e["error"], "IncompatibleAlphabets");

    fs::write(d.join("broken.jsonl"), "{\"sequence_id\":\"s\",\"grid\":[8,8],\"model_arity\":3}\nnot json\n").unwrap();
    let e = error_line(&soda(&["validate", "broken.jsonl", "--out", "v"], d));
    assert_eq!(e["error"], "ValidationFailed");
    let report = fs::read_to_string(d.join("v/validation.json")).unwrap();
    assert!(report.contains("MalformedRecord"));
}
