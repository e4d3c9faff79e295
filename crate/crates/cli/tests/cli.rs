use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn blowpack(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_blowpack")).args(args).output().unwrap()
}

fn json(bytes: &[u8]) -> Value {
    serde_json::from_slice(bytes).unwrap()
}

fn gen_and_pack(dir: &Path, spec: &str, seed: &str) {
    let config = dir.join("spec.json");
    std::fs::write(&config, spec).unwrap();
    let d = dir.to_str().unwrap();
    let out = blowpack(&["gen", "--seed", seed, "--config", config.to_str().unwrap(), "--out", d]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let instance = dir.join("instance.json");
    let out = blowpack(&["pack", "--seed", seed, "--instance", instance.to_str().unwrap(), "--out", d]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
}

fn verify(dir: &Path, result: &str) -> Output {
    let instance = dir.join("instance.json");
    let result = dir.join(result);
    blowpack(&["verify", "--instance", instance.to_str().unwrap(), "--result", result.to_str().unwrap()])
}

#[test]
fn verify_accepts_a_pack_output() {
    let dir = tempfile::tempdir().unwrap();
    gen_and_pack(dir.path(), r#"{"format": 1, "n": 64, "r": 3, "count": 4}"#, "3");
    let out = verify(dir.path(), "result.json");
    assert_eq!(out.status.code(), Some(0));
    let summary = json(&out.stdout);
    assert_eq!(summary["valid"], true);
    assert!(summary["violations"].as_array().unwrap().is_empty());
}

#[test]
fn verify_rejects_a_tampered_result() {
    let dir = tempfile::tempdir().unwrap();
    gen_and_pack(dir.path(), r#"{"format": 1, "n": 64, "r": 3, "count": 4}"#, "4");
    let mut result = json(&std::fs::read(dir.path().join("result.json")).unwrap());
    // Send two guest vertices onto one host vertex.
    let phi = result["phi"][0].as_array_mut().unwrap();
    let image = phi[0][1].clone();
    phi[1][1] = image;
    std::fs::write(dir.path().join("tampered.json"), serde_json::to_string(&result).unwrap()).unwrap();
    let out = verify(dir.path(), "tampered.json");
    assert_eq!(out.status.code(), Some(1));
    let summary = json(&out.stdout);
    assert_eq!(summary["valid"], false);
    assert!(!summary["violations"].as_array().unwrap().is_empty());
}

#[test]
fn stage_failures_exit_two_with_an_error_record() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.json");
    let out = blowpack(&["pack", "--seed", "1", "--instance", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = json(&out.stderr);
    assert_eq!(err["format"], 1);
    assert_eq!(err["error"]["kind"], "format");

    let bad = dir.path().join("spec.json");
    std::fs::write(&bad, r#"{"format": 7}"#).unwrap();
    let out = blowpack(&["gen", "--seed", "1", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(json(&out.stderr)["error"]["detail"].as_str().unwrap().contains("format"));
}

#[test]
fn bench_timings_grow_with_n() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = blowpack(&["bench", "--seed", "0", "--out", d, "--sizes", "128,256,512", "--reps", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("bench_summary.csv")).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    let (n, t) = (col("n"), col("mean_total_s"));
    let rows: Vec<(usize, f64)> = lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[n].parse().unwrap(), f[t].parse().unwrap())
        })
        .collect();
    assert_eq!(rows.iter().map(|r| r.0).collect::<Vec<_>>(), vec![128, 256, 512]);
    assert!(rows.windows(2).all(|w| w[0].1 < w[1].1), "{rows:?}");
    let runs = std::fs::read_to_string(dir.path().join("bench.csv")).unwrap();
    assert_eq!(runs.lines().count(), 4);
}
