use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn ncmaj(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ncmaj")).args(args).env_remove("NCMAJ_SEED").output().expect("binary runs")
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("bad JSON ({e}): {}", String::from_utf8_lossy(&out.stderr)))
}

fn result(r: &Value, label: &str) -> f64 {
    let rec = r["results"].as_array().unwrap().iter().find(|x| x["label"] == label).unwrap_or_else(|| panic!("no {label}"));
    rec.get("value").or(rec.get("mean")).and_then(Value::as_f64).unwrap()
}

fn without_timings(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("timings");
    v
}

#[test]
fn list_names_every_experiment() {
    let out = ncmaj(&["list", "--json"]);
    assert!(out.status.success());
    let items: Vec<Value> = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(items.len(), 12);
    let text = String::from_utf8(ncmaj(&["list"]).stdout).unwrap();
    for it in &items {
        assert!(text.contains(it["name"].as_str().unwrap()));
        assert!(it["defaults"].is_object());
    }
}

#[test]
fn wigner_boolean_side_for_two_variables() {
    let out = ncmaj(&["run", "counterexample-wigner", "--m", "2", "--n", "60", "--samples", "20", "--seed", "1", "--set", "tolerance=0.5"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out);
    assert!((result(&r, "boolean (1/n) E Tr|Q|^4") - 2.0).abs() < 1e-12);
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed: 1 (flag)"));
}

#[test]
fn kd_estimate_k1() {
    let out = ncmaj(&["run", "kd-estimate", "--d", "1", "--samples", "1000000", "--seed", "5"]);
    assert!(out.status.success());
    let k = result(&report(&out), "K(1)");
    assert!((k - 0.7854).abs() < 0.003, "{k}");
}

#[test]
fn haar_c2_is_one() {
    let out = ncmaj(&["run", "ensemble-check", "--kind", "haar", "--K", "2", "--samples", "2000", "--p", "8", "--seed", "3"]);
    assert!(out.status.success());
    let c2 = result(&report(&out), "c_2 = ||E (G G*)^2||");
    assert!((c2 - 1.0).abs() < 1e-12);
}

#[test]
fn reruns_are_byte_identical_and_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    let args = ["run", "majorize", "--samples", "400", "--p", "8,16", "--seed", "99", "--workers", "2"];
    let a = ncmaj(&args);
    let b = ncmaj(&args);
    assert!(a.status.success());
    let (ra, rb) = (without_timings(report(&a)), without_timings(report(&b)));
    assert_eq!(serde_json::to_string(&ra).unwrap(), serde_json::to_string(&rb).unwrap());
    assert_eq!(report(&a)["timings"]["workers"], 2);

    let mut with_out = args.to_vec();
    with_out.extend(["--out", path.to_str().unwrap()]);
    assert!(ncmaj(&with_out).status.success());
    let again = ncmaj(&["run", "--config", path.to_str().unwrap(), "--workers", "1"]);
    assert!(again.status.success(), "{}", String::from_utf8_lossy(&again.stderr));
    let mut rc = without_timings(report(&again));
    assert_eq!(rc["seed_source"], "config");
    let mut ra = ra;
    rc.as_object_mut().unwrap().remove("seed_source");
    ra.as_object_mut().unwrap().remove("seed_source");
    assert_eq!(serde_json::to_string(&ra).unwrap(), serde_json::to_string(&rc).unwrap());
}

#[test]
fn seed_comes_from_the_environment() {
    let out = Command::new(env!("CARGO_BIN_EXE_ncmaj"))
        .args(["run", "kd-estimate", "--samples", "100"])
        .env("NCMAJ_SEED", "1234")
        .output()
        .unwrap();
    assert_eq!(report(&out)["seed"], 1234);
    assert_eq!(report(&out)["seed_source"], "env");
    let t = ncmaj(&["run", "kd-estimate", "--samples", "100"]);
    assert_eq!(report(&t)["seed_source"], "time");
    assert!(String::from_utf8_lossy(&t.stderr).contains("seed: "));
}

#[test]
fn exit_codes() {
    assert_eq!(ncmaj(&["run", "no-such-experiment"]).status.code(), Some(2));
    assert_eq!(ncmaj(&["run", "kd-estimate", "--rho", "0.5"]).status.code(), Some(2));
    assert_eq!(ncmaj(&["run", "kd-estimate", "--set", "bogus=1"]).status.code(), Some(2));
    assert_eq!(ncmaj(&["run", "chop", "--rho", "1.5"]).status.code(), Some(2));
    // Precondition of the noise-stability estimate: E f = 0.
    assert_eq!(ncmaj(&["run", "noise-stability", "--family", "constant"]).status.code(), Some(2));
    // A hard check that cannot pass: K(32) within 1e-9 of its limit.
    let fail = ncmaj(&["run", "kd-estimate", "--d", "32", "--samples", "200", "--tol", "1e-9", "--seed", "1"]);
    assert_eq!(fail.status.code(), Some(1));
    assert_eq!(report(&fail)["verdict"], "fail");
    let ok = ncmaj(&["run", "noise-stability", "--samples", "200", "--seed", "1"]);
    assert_eq!(ok.status.code(), Some(0));
    assert_eq!(report(&ok)["verdict"], "report_only");
}

#[test]
fn csv_tables_and_instance_files() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("inst.json");
    // Rank-one block matrix v v* with v = (1, 1, 1): optimum (sum |v_i|)^2 = 9.
    let ones: Vec<Vec<[f64; 2]>> = vec![vec![[1.0, 0.0]; 3]; 3];
    std::fs::write(&inst, serde_json::json!({"n": 3, "d": 1, "matrix": ones}).to_string()).unwrap();
    let out = ncmaj(&[
        "run", "psd-variant", "--instance", inst.to_str().unwrap(), "--pipeline", "constrained", "--restarts", "3", "--seed", "2",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!((result(&report(&out), "constrained value") - 9.0).abs() < 1e-9);

    let csv = dir.path().join("csv");
    let out = ncmaj(&["run", "hyper", "--set", "instances=2", "--samples", "100", "--seed", "4", "--csv", csv.to_str().unwrap()]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(csv.join("hyper-hypercontractivity.csv")).unwrap();
    assert!(text.starts_with("instance,m,d,K,"));
    assert_eq!(text.lines().count(), 1 + 2 * 2);
}

#[test]
fn readme_indexes_every_anchor() {
    let readme = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../README.md")).unwrap();
    let out = ncmaj(&["list", "--json"]);
    let items: Vec<Value> = serde_json::from_slice(&out.stdout).unwrap();
    for it in items {
        let (name, anchor) = (it["name"].as_str().unwrap(), it["anchor"].as_str().unwrap());
        assert!(readme.contains(name) && readme.contains(anchor), "README lacks {name} / {anchor}");
    }
}
