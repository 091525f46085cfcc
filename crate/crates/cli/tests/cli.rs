use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn rgbt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rgbt")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn synth(dir: &Path, frames: usize) {
    let out = rgbt(&["synth", "--n", &frames.to_string(), "--seed", "5", "--out", dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn track_writes_results_and_records_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("seq");
    let res = tmp.path().join("res");
    synth(&data, 12);
    let out = rgbt(&[
        "track",
        data.to_str().unwrap(),
        "--set",
        "fusion.s=0.47",
        "--out",
        res.to_str().unwrap(),
        "--jobs",
        "1",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(res.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["config"]["fusion.s"], "0.47");
    assert_eq!(summary["config"]["eval.protocol"], "ope");
    for key in ["A", "R_failures", "R_inverted", "EAO", "success", "precision"] {
        assert!(summary.get(key).is_some(), "summary lacks {key}");
    }
    let lines: Vec<serde_json::Value> = fs::read_to_string(res.join("results.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 12);
    assert_eq!(lines[0]["frame"], 0);
    assert!(lines[0]["lambda12"].is_null());
    assert!(lines[1]["lambda12"].is_number());
    assert_eq!(lines[1]["bbox"].as_array().unwrap().len(), 4);

    let plots = tmp.path().join("plots");
    let out = rgbt(&["plotdata", res.to_str().unwrap(), "--out", plots.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let bias = fs::read_to_string(plots.join("bias_gap.csv")).unwrap();
    let mut rows = bias.lines();
    assert_eq!(rows.next(), Some("original,modulated"));
    let rows: Vec<(f64, f64)> = rows
        .map(|l| {
            let (a, b) = l.split_once(',').unwrap();
            (a.parse().unwrap(), b.parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 11);
    assert!(rows.iter().all(|r| r.1.abs() <= 1e-9));
    assert!(plots.join("eao_curve.csv").is_file());
    assert!(plots.join("eao_curve.svg").is_file());
}

#[test]
fn ablate_writes_one_row_per_grid_point() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("seq");
    let res = tmp.path().join("abl");
    synth(&data, 8);
    let out = rgbt(&["ablate", data.to_str().unwrap(), "--axis", "s", "--out", res.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(res.join("ablation.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "value,A,R_failures,R_inverted,EAO,mean_iou");
    assert_eq!(lines.len(), 11);
    assert!(lines[1].starts_with("0.44,"));
    assert!(lines[10].starts_with("0.53,"));
}

#[test]
fn eval_runs_the_configured_protocol() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("seq");
    let res = tmp.path().join("ev");
    synth(&data, 10);
    let cfg = tmp.path().join("run.cfg");
    fs::write(&cfg, "# anchors protocol\neval.protocol = anchors\n").unwrap();
    let out = rgbt(&["eval", data.to_str().unwrap(), "--config", cfg.to_str().unwrap(), "--out", res.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(res.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["config"]["eval.protocol"], "anchors");
    assert!(summary.get("success").is_none());
    assert!(res.join("eao_curve.csv").is_file());
}

#[test]
fn synth_suite_lists_its_sequences() {
    let tmp = tempfile::tempdir().unwrap();
    let out = rgbt(&["synth", "--n", "3", "--count", "2", "--bias", "1", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let list = fs::read_to_string(tmp.path().join("sequences.txt")).unwrap();
    assert_eq!(list.lines().collect::<Vec<_>>(), ["synth_000", "synth_001"]);
    assert!(tmp.path().join("synth_001/ir/00000003.png").is_file());
}

#[test]
fn exit_codes_distinguish_failures() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("o");
    let o = out_dir.to_str().unwrap();
    let missing = tmp.path().join("nope");

    assert_eq!(code(&rgbt(&["track", missing.to_str().unwrap(), "--out", o])), 3);

    let data = tmp.path().join("seq");
    synth(&data, 3);
    let d = data.to_str().unwrap();
    assert_eq!(code(&rgbt(&["track", d, "--set", "fusion.s=-1", "--out", o])), 2);
    assert_eq!(code(&rgbt(&["track", d, "--set", "no.such.key=1", "--out", o])), 2);
    assert_eq!(code(&rgbt(&["track", d, "--set", "fusion.mode=bogus", "--out", o])), 2);
    assert_eq!(code(&rgbt(&["ablate", d, "--axis", "s", "--values", ",", "--out", o])), 2);

    let bad_cfg = tmp.path().join("bad.cfg");
    fs::write(&bad_cfg, "fusion.s 0.5\n").unwrap();
    assert_eq!(code(&rgbt(&["track", d, "--config", bad_cfg.to_str().unwrap(), "--out", o])), 2);

    fs::write(data.join("groundtruth.txt"), "1,2,3\n").unwrap();
    assert_eq!(code(&rgbt(&["track", d, "--out", o])), 3);
}
