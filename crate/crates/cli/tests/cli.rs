use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn scratch(name: &str, files: &[(&str, &str)]) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("tropma-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    for (f, text) in files {
        std::fs::write(dir.join(f), text).unwrap();
    }
    dir
}

fn tropma(dir: &PathBuf, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tropma")).current_dir(dir).args(args).output().unwrap()
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

const ABS: &str = r#"{"dim":1,"pieces":[{"slope":["1"],"offset":"0"},{"slope":["-1"],"offset":"0"}]}"#;

#[test]
fn ma_and_legendre() {
    let dir = scratch("ma", &[("f.json", ABS)]);
    let v = json(&tropma(&dir, &["ma", "--f", "f.json"]));
    assert_eq!(v["atoms"][0]["mass"], "2");
    assert_eq!(v["atoms"][0]["point"][0], "0");
    let csv = tropma(&dir, &["ma", "--f", "f.json", "--format", "csv"]);
    assert_eq!(String::from_utf8(csv.stdout).unwrap(), "u0,mass\n0,2\n");
    let v = json(&tropma(&dir, &["legendre", "--f", "f.json"]));
    assert!(v["domain"].is_object() && v["function"]["pieces"].is_array());
    let v = json(&tropma(&dir, &["mixed-ma", "--f", "f.json"]));
    assert_eq!(v["atoms"][0]["mass"], "2");
}

#[test]
fn sbp_solves_and_writes_file() {
    let body = r#"{"vertices":[["-1"],["1"]]}"#;
    let mu = r#"{"dim":1,"atoms":[{"point":["0"],"mass":"2"}]}"#;
    let dir = scratch("sbp", &[("body.json", body), ("mu.json", mu), ("bad.json", r#"{"dim":1,"atoms":[{"point":["0"],"mass":"1"}]}"#)]);
    let out = tropma(&dir, &["sbp", "--body", "body.json", "--measure", "mu.json", "-o", "sol.json"]);
    assert!(out.status.success());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(dir.join("sol.json")).unwrap()).unwrap();
    assert_eq!(v["report"]["passed"], true);
    let bad = tropma(&dir, &["sbp", "--body", "body.json", "--measure", "bad.json"]);
    assert_eq!(bad.status.code(), Some(2));
    let rescaled = tropma(&dir, &["sbp", "--body", "body.json", "--measure", "bad.json", "--rescale"]);
    assert!(rescaled.status.success());
    let missing = tropma(&dir, &["sbp", "--body", "nope.json", "--measure", "mu.json"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn no_convergence_exits_with_three() {
    let body = r#"{"vertices":[["0","0"],["1","0"],["0","1"],["1","1"]]}"#;
    let mu = r#"{"dim":2,"atoms":[{"point":["0","0"],"mass":"1/2"},{"point":["1","0"],"mass":"1/2"},{"point":["0","1"],"mass":"1/2"},{"point":["3","5"],"mass":"1/2"}]}"#;
    let dir = scratch("noconv", &[("body.json", body), ("mu.json", mu)]);
    let out = tropma(&dir, &["sbp", "--body", "body.json", "--measure", "mu.json", "--max-iter", "1", "--tol", "1e-14"]);
    assert_eq!(out.status.code(), Some(3));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["converged"], false);
    assert_eq!(v["best_offsets"].as_array().unwrap().len(), 4);
}

#[test]
fn torus_and_mumford() {
    let ptav = r#"{"n":1,"lambda_basis":[["1"]],"polarization":[[1]]}"#;
    let mu = r#"{"dim":1,"atoms":[{"point":["1/2"],"mass":"1"}]}"#;
    let ctx = r#"{"g":2,"n":1,"deg_H_B":1,"d":1}"#;
    let dir = scratch("torus", &[("p.json", ptav), ("mu.json", mu), ("ctx.json", ctx), ("abs.json", ABS)]);
    let out = tropma(&dir, &["torus-ma", "--ptav", "p.json", "--measure", "mu.json", "-o", "sol.json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let sol: Value = serde_json::from_str(&std::fs::read_to_string(dir.join("sol.json")).unwrap()).unwrap();
    std::fs::write(dir.join("f.json"), serde_json::to_string(&sol["f"]).unwrap()).unwrap();
    let v = json(&tropma(&dir, &["mumford-degree", "--ctx", "ctx.json", "--f", "f.json"]));
    assert_eq!(v["total"]["sum"], "2");
    assert_eq!(v["total"]["equal"], true);
    assert_eq!(v["chi"]["deg_l"], "2");
    let v = json(&tropma(&dir, &["mumford-degree", "--ctx", "ctx.json", "--f", "abs.json", "--vertex", "0"]));
    assert_eq!(v["degree"], "4");
    assert_eq!(v["nef"], true);
}

#[test]
fn check_psh_on_fans() {
    let fan = r#"{"dim":1,"cones":[{"rays":[[1]]},{"rays":[[-1]]}]}"#;
    let half = r#"{"dim":1,"cones":[{"rays":[[1]]}]}"#;
    let f = r#"{"dim":1,"pieces":[{"slope":["0"],"offset":"0"},{"slope":["-1"],"offset":"0"}]}"#;
    let dir = scratch("psh", &[("fan.json", fan), ("half.json", half), ("f.json", f)]);
    let v = json(&tropma(&dir, &["check-psh", "--f", "f.json", "--fan", "fan.json"]));
    assert_eq!((v["psh"].as_bool(), v["fan"]["complete"].as_bool()), (Some(false), Some(true)));
    let v = json(&tropma(&dir, &["check-psh", "--f", "f.json", "--fan", "half.json"]));
    assert_eq!(v["psh"], true);
}

#[test]
fn projective_line_and_oracles() {
    let dir = scratch("p1", &[("f.json", ABS), ("q.json", r#"[["1","0"],["0","4"]]"#), ("body.json", r#"{"vertices":[["-2"],["2"]]}"#), ("q1.json", r#"[["1"]]"#)]);
    let v = json(&tropma(&dir, &["example-p1", "--alpha", "1/4", "--atoms", "100", "--tol", "1e-7"]));
    assert!(v["sup_error"].as_f64().unwrap() < 0.05);
    assert_eq!(v["energy"].as_array().unwrap().len(), 3);
    let v = json(&tropma(&dir, &["oracle", "fd", "--quadratic", "q.json", "--point", "0.5,1"]));
    assert!((v["value"].as_f64().unwrap() - 8.0).abs() < 1e-4);
    let v = json(&tropma(&dir, &["oracle", "mc", "--f", "f.json", "--lo=-0.001", "--hi=0.001", "--samples", "500", "--seed", "3"]));
    assert_eq!(v["estimate"], 2.0);
    let v = json(&tropma(&dir, &["oracle", "mc", "--quadratic", "q1.json", "--body", "body.json", "--lo=-1", "--hi=1", "--samples", "2000"]));
    let (e, s) = (v["estimate"].as_f64().unwrap(), v["stderr"].as_f64().unwrap());
    assert!((e - 2.0).abs() <= 3.0 * s);
    let bad = tropma(&dir, &["example-p1", "--alpha", "1"]);
    assert_eq!(bad.status.code(), Some(2));
}
