use std::path::PathBuf;
use std::process::Command;

use serde_json::Value;

fn fixture(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name).display().to_string()
}

/// Runs the binary with `--output` into a temp dir; returns exit code, report and raw bytes.
fn run(args: &[&str]) -> (i32, Value, Vec<u8>) {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let status = Command::new(env!("CARGO_BIN_EXE_crnf"))
        .args(args)
        .arg("--output")
        .arg(&out)
        .status()
        .unwrap();
    let bytes = std::fs::read(&out).expect("report is always written");
    let report = serde_json::from_slice(&bytes).unwrap();
    (status.code().unwrap(), report, bytes)
}

#[test]
fn analyze_mixed_sign_example() {
    let (code, r, _) = run(&["analyze", "--input", &fixture("re_w2_zbar2.json")]);
    assert_eq!(code, 0);
    assert_eq!(r["regime"], "exact");
    assert_eq!(r["status"], "ok");
    assert_eq!(r["result"]["rank"], 2);
    assert_eq!(r["result"]["neg"], 1);
    assert_eq!(r["result"]["pos"], 1);
    let h = r["result"]["classes"]["H"].as_array().unwrap();
    assert!(h.contains(&Value::from(2)));
    assert!(!h.contains(&Value::from(1)));
}

#[test]
fn equiv_verify_identity_exits_zero() {
    let m = fixture("model_sq.json");
    let (code, r, _) = run(&["equiv-verify", "--model", &m, "--model2", &m, "--automorphism", &fixture("identity.json")]);
    assert_eq!(code, 0);
    assert_eq!(r["result"]["equivalent"], true);
}

#[test]
fn equiv_verify_dilation_is_a_verified_negative() {
    let m = fixture("model_sq.json");
    let (code, r, _) = run(&["equiv-verify", "--model", &m, "--model2", &m, "--automorphism", &fixture("dilation.json")]);
    assert_eq!(code, 2);
    assert_eq!(r["status"], "negative");
    assert_eq!(r["result"]["equivalent"], false);
}

#[test]
fn cm_solve_refutes_a_square_and_solves_zero() {
    let (code, r, _) = run(&["cm-solve", "--series", &fixture("series_sq.json"), "--ell", "0", "--degree", "6"]);
    assert_eq!(code, 2);
    assert_eq!(r["result"]["outcome"], "refuted");
    assert_eq!(r["result"]["certificate"]["verified"], true);

    let (code, r, _) = run(&["cm-solve", "--series", &fixture("series_zero.json"), "--ell", "0"]);
    assert_eq!(code, 0);
    assert_eq!(r["result"]["outcome"], "solved");
}

#[test]
fn cm_solve_rejects_degree_mismatch() {
    let (code, r, _) = run(&["cm-solve", "--series", &fixture("series_sq.json"), "--ell", "0", "--degree", "8"]);
    assert_eq!(code, 1);
    assert_eq!(r["error"]["kind"], "precondition");
}

#[test]
fn malformed_json_reports_position() {
    let (code, r, _) = run(&["analyze", "--input", &fixture("malformed.json")]);
    assert_eq!(code, 1);
    assert_eq!(r["status"], "error");
    let msg = r["error"]["message"].as_str().unwrap();
    assert!(msg.contains("line 2 column 16"), "{msg}");
}

#[test]
fn bad_signature_is_an_input_error() {
    let (code, r, _) = run(&["cm-kernel", "--n", "2", "--ell", "2"]);
    assert_eq!(code, 1);
    assert_eq!(r["status"], "error");
}

#[test]
fn unknown_subcommand_exits_one() {
    let status = Command::new(env!("CARGO_BIN_EXE_crnf")).arg("frobnicate").status().unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn cm_kernel_is_trivial_with_full_normalization() {
    let (code, r, _) = run(&["cm-kernel", "--n", "3", "--ell", "1", "--sigma-max", "8"]);
    assert_eq!(code, 0);
    let dims = r["result"]["dims"].as_array().unwrap();
    assert_eq!(dims.len(), 9);
    assert!(dims.iter().all(|d| d["dim"] == 0));

    // Dropping the Re g_ww row frees the r-direction (r z w, r w^2), weight 4.
    let (_, r, _) = run(&["cm-kernel", "--n", "3", "--ell", "1", "--sigma-max", "4", "--mode", "free-re-gww"]);
    let dims: Vec<_> = r["result"]["dims"].as_array().unwrap().iter().map(|d| d["dim"].as_u64().unwrap()).collect();
    assert_eq!(dims, vec![0, 0, 0, 0, 1]);
}

#[test]
fn embed_normalize_and_rigidity_pipeline() {
    let m = fixture("model_sq.json");
    let (code, r, _) = run(&["embed", "--model", &m]);
    assert_eq!(code, 0);
    assert_eq!(r["result"]["transversal"], true);
    let expected: Value = serde_json::from_str(&std::fs::read_to_string(fixture("embedding_sq.json")).unwrap()).unwrap();
    assert_eq!(r["result"]["embedding"], expected);

    let h = fixture("embedding_sq.json");
    let (code, r, _) = run(&["normalize-map", "--h", &h, "--model", &m]);
    assert_eq!(code, 0);
    assert_eq!(r["result"]["sigma"], 1);
    assert_eq!(r["result"]["htilde"], expected["map"]);

    let (code, r, _) = run(&["rigidity", "--h1", &h, "--h2", &h, "--model", &m]);
    assert_eq!(code, 0);
    assert_eq!(r["result"]["residual_exact"], true);
    assert_eq!(r["result"]["T"]["lam"], "1/1");
}

#[test]
fn transform_by_identity_is_identity() {
    let s = fixture("series_sq.json");
    let (code, r, _) = run(&["transform", "--input", &s, "--automorphism", &fixture("identity.json"), "--ell", "0"]);
    assert_eq!(code, 0);
    let input: Value = serde_json::from_str(&std::fs::read_to_string(&s).unwrap()).unwrap();
    assert_eq!(r["result"]["series"]["terms"], input["terms"]);
}

#[test]
fn restrict_and_decompose() {
    let s = fixture("series_sq.json");
    let (code, r, _) = run(&["restrict", "--input", &s, "--ell", "0"]);
    assert_eq!(code, 0);
    assert_eq!(r["result"]["zero"], false);
    let (code, r, _) = run(&["decompose", "--input", &s]);
    assert_eq!(code, 0);
    assert_eq!(r["result"]["s"], 0);
    assert_eq!(r["result"]["recompose_exact"], true);
}

#[test]
fn sweep_certifies_every_instance() {
    let (code, r, _) = run(&["thm12-sweep", "--n", "3", "--ell", "0", "--count", "100", "--seed", "7", "--jobs", "4"]);
    assert_eq!(code, 0);
    assert_eq!(r["status"], "ok");
    assert_eq!(r["provenance"]["seed"], 7);
    assert_eq!(r["result"]["certificates"], 100);
    assert_eq!(r["result"]["violations"], 0);
}

#[test]
fn sweep_requires_a_seed() {
    let status = Command::new(env!("CARGO_BIN_EXE_crnf")).args(["thm12-sweep", "--n", "3", "--ell", "0"]).status().unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn sweep_reports_are_byte_identical() {
    let args = ["thm12-sweep", "--n", "3", "--ell", "1", "--count", "30", "--seed", "19", "--jobs", "3"];
    let (_, _, a) = run(&args);
    let (_, _, b) = run(&args);
    assert_eq!(a, b);
    // Scheduling does not leak into the result.
    let (_, serial, _) = run(&["thm12-sweep", "--n", "3", "--ell", "1", "--count", "30", "--seed", "19", "--jobs", "1"]);
    let parallel: Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(serial["result"], parallel["result"]);
}
