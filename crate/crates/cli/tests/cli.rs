use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn didp(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_didp")).args(args).current_dir(dir).output().expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn keys(v: &Value, prefix: &str, out: &mut Vec<String>) {
    match v {
        Value::Object(map) => {
            for (k, v) in map {
                let p = format!("{prefix}.{k}");
                out.push(p.clone());
                keys(v, &p, out);
            }
        }
        Value::Array(items) => {
            for v in items {
                keys(v, &format!("{prefix}[]"), out);
            }
        }
        _ => {}
    }
}

#[test]
fn simulate_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a.csv", "b.csv"] {
        let out = didp(&["simulate", "--scm", "cars", "--n", "1000", "--seed", "7", "--out", name], dir.path());
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let read = |n: &str| std::fs::read(dir.path().join(n)).unwrap();
    assert_eq!(read("a.csv"), read("b.csv"));
    let (ma, mb) = (json(&dir.path().join("a.manifest.json")), json(&dir.path().join("b.manifest.json")));
    assert_eq!(ma["seed"], 7);
    assert_eq!(ma["n_units"], 1000);
    assert_eq!(ma["scm_sha256"], mb["scm_sha256"]);
    assert_eq!(ma["panel_sha256"], mb["panel_sha256"]);
}

#[test]
fn seed_is_recorded_when_drawn_from_entropy() {
    let dir = tempfile::tempdir().unwrap();
    let out = didp(&["simulate", "--scm", "cars", "--n", "10", "--out", "p.csv"], dir.path());
    assert!(out.status.success());
    assert!(json(&dir.path().join("p.manifest.json"))["seed"].is_u64());
}

#[test]
fn cyclic_model_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let doc = r#"{"name":"loop","nodes":[
        {"name":"X","kind":"deterministic","dist":"deterministic","mean":{"intercept":0,"terms":[{"parent":"Y","coef":1}]}},
        {"name":"Y","kind":"deterministic","dist":"deterministic","mean":{"intercept":0,"terms":[{"parent":"X","coef":1}]}}]}"#;
    std::fs::write(dir.path().join("loop.json"), doc).unwrap();
    let out = didp(&["simulate", "--scm", "file:loop.json", "--n", "5", "--seed", "1", "--out", "x.csv"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("forward reference"));
    assert!(!dir.path().join("x.csv").exists());
}

#[test]
fn manifest_hash_tracks_model_content() {
    let dir = tempfile::tempdir().unwrap();
    let cars = didp::scm::builtin_cars_example().document().clone();
    let mut edited = cars.clone();
    edited.node_mut("U").unwrap().mean.intercept = 0.25;
    std::fs::write(dir.path().join("same.json"), cars.to_json_pretty()).unwrap();
    // Same model, different whitespace.
    std::fs::write(dir.path().join("compact.json"), cars.canonical_json()).unwrap();
    std::fs::write(dir.path().join("edited.json"), edited.to_json_pretty()).unwrap();
    let hash = |file: &str| {
        let out = didp(
            &["simulate", "--scm", &format!("file:{file}"), "--n", "5", "--seed", "1", "--out", &format!("{file}.csv")],
            dir.path(),
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        json(&dir.path().join(format!("{file}.manifest.json")))["scm_sha256"].as_str().unwrap().to_string()
    };
    let builtin = {
        didp(&["simulate", "--scm", "cars", "--n", "5", "--seed", "1", "--out", "b.csv"], dir.path());
        json(&dir.path().join("b.manifest.json"))["scm_sha256"].as_str().unwrap().to_string()
    };
    assert_eq!(hash("same.json"), builtin);
    assert_eq!(hash("compact.json"), builtin);
    assert_ne!(hash("edited.json"), builtin);
}

#[test]
fn all_zero_panel_estimates_zero() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("unit,time,a,y\n");
    for (u, a2) in [(1, 0), (2, 1), (3, 0), (4, 1)] {
        csv += &format!("{u},1,0,0\n{u},2,{a2},0\n");
    }
    std::fs::write(dir.path().join("z.csv"), csv).unwrap();
    let out = didp(&["estimate", "--panel", "z.csv", "--seed", "1", "--report", "r.json"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = json(&dir.path().join("r.json"));
    assert_eq!(r["result"]["report"]["estimate"], 0.0);
    assert_eq!(r["result"]["report"]["estimand"], "ATT_A2");
    assert_eq!(r["seed"], 1);
}

#[test]
fn reading_selects_the_assumption_label() {
    let dir = tempfile::tempdir().unwrap();
    didp(&["simulate", "--scm", "cars", "--n", "300", "--seed", "2", "--out", "c.csv"], dir.path());
    for (reading, label) in [("implementation", "ATT_A2"), ("decision", "ATT_P")] {
        let out = didp(&["estimate", "--panel", "c.csv", "--reading", reading, "--json", "--seed", "0"], dir.path());
        let v: Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(v["result"]["report"]["estimand"], label);
        assert!(v["result"]["report"]["assumption_set"].as_str().unwrap().contains("parallel trends"));
    }
}

#[test]
fn empty_cell_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("t.csv"), "unit,time,a,y\n1,1,0,1\n1,2,0,2\n2,1,0,3\n2,2,0,5\n").unwrap();
    let out = didp(&["estimate", "--panel", "t.csv", "--seed", "0"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("positivity"));
    let missing = didp(&["estimate", "--panel", "nope.csv"], dir.path());
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn group_time_matches_hand_arithmetic() {
    let dir = tempfile::tempdir().unwrap();
    let out = didp(
        &[
            "simulate",
            "--scm",
            "builtin:staggered",
            "--tau",
            "4",
            "--s",
            "1",
            "--n",
            "2000",
            "--seed",
            "9",
            "--out",
            "s.csv",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    let out = didp(
        &[
            "estimate",
            "--panel",
            "s.csv",
            "--g",
            "2",
            "--k",
            "4",
            "--s",
            "1",
            "--control",
            "never",
            "--seed",
            "0",
            "--json",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let got = serde_json::from_slice::<Value>(&out.stdout).unwrap()["result"]["report"]["estimate"].as_f64().unwrap();

    // Straight from the file: cohort first treated at 3, never-treated
    // units, outcome at 4 against outcome at 2.
    let text = std::fs::read_to_string(dir.path().join("s.csv")).unwrap();
    let mut units: std::collections::BTreeMap<u64, [(u8, f64); 4]> = Default::default();
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let (u, t): (u64, usize) = (f[0].parse().unwrap(), f[1].parse().unwrap());
        units.entry(u).or_insert([(0, 0.0); 4])[t - 1] = (f[2].parse().unwrap(), f[3].parse().unwrap());
    }
    let (mut tr, mut co) = ((0.0, 0.0, 0usize), (0.0, 0.0, 0usize));
    for path in units.values() {
        let a: Vec<u8> = path.iter().map(|c| c.0).collect();
        let cell = if a == [0, 0, 1, 1] {
            &mut tr
        } else if a == [0, 0, 0, 0] {
            &mut co
        } else {
            continue;
        };
        cell.0 += path[3].1;
        cell.1 += path[1].1;
        cell.2 += 1;
    }
    let n = |c: (f64, f64, usize)| c.2 as f64;
    let want = (tr.0 / n(tr) - tr.1 / n(tr)) - (co.0 / n(co) - co.1 / n(co));
    assert!((got - want).abs() < 1e-9, "{got} vs {want}");
}

#[test]
fn verify_exit_codes_separate_vacuous_from_pass() {
    let dir = tempfile::tempdir().unwrap();
    let common = ["--n", "2000", "--replications", "40", "--oracle-draws", "60000", "--seed", "3"];
    let run = |scm: &str| {
        let mut args = vec!["verify", "--prop", "2", "--scm", scm];
        args.extend(common);
        didp(&args, dir.path()).status.code()
    };
    assert_eq!(run("cars"), Some(4));
    assert_eq!(run("builtin:prop2-dgp"), Some(0));
    let bad = didp(&["verify", "--prop", "7", "--scm", "cars"], dir.path());
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn small_example_run_is_flagged_inconclusive() {
    let dir = tempfile::tempdir().unwrap();
    let out = didp(&["replicate-example", "--n", "100", "--seed", "5", "--report", "e.json"], dir.path());
    assert!(out.status.success());
    let v = json(&dir.path().join("e.json"));
    let statuses: Vec<&str> =
        v["result"]["rows"].as_array().unwrap().iter().map(|r| r["status"].as_str().unwrap()).collect();
    assert!(statuses.contains(&"inconclusive"), "{statuses:?}");
    assert!(String::from_utf8_lossy(&out.stdout).contains("inconclusive"));

    // Same keys whatever the seed.
    didp(&["replicate-example", "--n", "100", "--seed", "6", "--report", "f.json"], dir.path());
    let w = json(&dir.path().join("f.json"));
    let (mut ka, mut kb) = (Vec::new(), Vec::new());
    keys(&v, "", &mut ka);
    keys(&w, "", &mut kb);
    assert_eq!(ka, kb);
    assert_ne!(v["result"]["rows"][0]["value"], w["result"]["rows"][0]["value"]);
}

#[test]
fn oracle_lists_default_estimands() {
    let dir = tempfile::tempdir().unwrap();
    let out = didp(&["oracle", "--scm", "cars", "--draws", "20000", "--seed", "1", "--json"], dir.path());
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let names: Vec<&str> =
        v["result"]["estimands"].as_array().unwrap().iter().map(|e| e["kind"].as_str().unwrap()).collect();
    assert_eq!(names, ["ATT_A2", "ATT_P", "PSI"]);
    let bad = didp(&["oracle", "--scm", "cars", "--estimand", "ATT_P_GT"], dir.path());
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn invalid_thread_setting_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_didp"))
        .args(["oracle", "--scm", "cars", "--draws", "10", "--seed", "1"])
        .env("DIDP_THREADS", "zero")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
