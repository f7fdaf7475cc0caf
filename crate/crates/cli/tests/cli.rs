use std::path::Path;
use std::process::{Command, Output};

fn sepnet(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sepnet"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("spawn sepnet")
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn eps_outside_unit_interval_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = sepnet(dir.path(), &["params", "--eps", "1.5"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("ε ∈ (0,1)"), "{err}");
    assert!(!dir.path().join("params.json").exists());
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"params": {"levles": 3}}"#).unwrap();
    let o = sepnet(dir.path(), &["params", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn params_writes_trace_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let o = sepnet(
        dir.path(),
        &[
            "params",
            "--d",
            "2",
            "--modulus",
            "logpow:0.01",
            "--eps",
            "0.1",
            "--c",
            "0.1",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(&dir.path().join("params.csv"));
    assert!(csv.starts_with("# tool sepnet "));
    assert!(csv.contains("# config_hash "));
    assert!(csv.contains("# seed 0"));
    // header comments, column names, 30 levels
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 31);
    let v: serde_json::Value =
        serde_json::from_str(&read(&dir.path().join("params.json"))).unwrap();
    assert_eq!(v["header"]["tool"], "sepnet");
    assert_eq!(v["config"]["modulus"], "logpow:0.01");
    assert!(v["result"]["r"]["r"].as_str().unwrap().len() > 30);
}

#[test]
fn config_file_values_are_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(
        &cfg,
        r#"{"seed": 7, "params": {"max_levels": 4, "eps": 0.2, "no_r": true}}"#,
    )
    .unwrap();
    let o = sepnet(
        dir.path(),
        &["params", "--config", cfg.to_str().unwrap(), "--eps", "0.05"],
    );
    assert!(o.status.success());
    let v: serde_json::Value =
        serde_json::from_str(&read(&dir.path().join("params.json"))).unwrap();
    assert_eq!(v["config"]["max_levels"], 4);
    assert_eq!(v["config"]["eps"], 0.05);
    assert_eq!(v["header"]["seed"], 7);
}

#[test]
fn feige_cn_reports_value_and_maximizer() {
    let dir = tempfile::tempdir().unwrap();
    let o = sepnet(
        dir.path(),
        &["feige-cn", "--n", "2", "--d", "2", "--window", "0:3"],
    );
    assert!(o.status.success());
    let v: serde_json::Value =
        serde_json::from_str(&read(&dir.path().join("feige-cn.json"))).unwrap();
    let value = v["result"]["value"].as_f64().unwrap();
    assert!((value - 2f64.sqrt()).abs() < 1e-12);
    assert_eq!(v["result"]["subsets"], 1820);
    assert_eq!(v["result"]["exact"], true);
    assert_eq!(v["result"]["maximizer"].as_array().unwrap().len(), 4);
}

#[test]
fn reruns_are_byte_identical() {
    let runs: Vec<(&str, Vec<&str>)> = vec![
        ("feige-cn", vec!["feige-cn", "--window", "0:3"]),
        (
            "net-build",
            vec!["net", "build", "--window", "0:6", "--base", "2.5"],
        ),
        (
            "distort-profile",
            vec!["distort", "profile", "--scales", "2,3", "--seed", "3"],
        ),
        (
            "volume-check",
            vec![
                "volume-check",
                "--eps",
                "0.5",
                "--samples",
                "20000",
                "--seed",
                "5",
            ],
        ),
    ];
    for (name, args) in runs {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        assert!(sepnet(a.path(), &args).status.success(), "{name}");
        assert!(sepnet(b.path(), &args).status.success(), "{name}");
        for ext in ["json", "csv"] {
            let (pa, pb) = (
                a.path().join(format!("{name}.{ext}")),
                b.path().join(format!("{name}.{ext}")),
            );
            if pa.exists() {
                assert_eq!(
                    std::fs::read(&pa).unwrap(),
                    std::fs::read(&pb).unwrap(),
                    "{name}.{ext}"
                );
            }
        }
    }
}

#[test]
fn seed_changes_the_config_hash() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    sepnet(a.path(), &["feige-cn", "--seed", "1"]);
    sepnet(b.path(), &["feige-cn", "--seed", "2"]);
    let ha: serde_json::Value =
        serde_json::from_str(&read(&a.path().join("feige-cn.json"))).unwrap();
    let hb: serde_json::Value =
        serde_json::from_str(&read(&b.path().join("feige-cn.json"))).unwrap();
    assert_ne!(ha["header"]["config_hash"], hb["header"]["config_hash"]);
}

#[test]
fn svg_only_in_the_plane() {
    let dir = tempfile::tempdir().unwrap();
    assert!(sepnet(dir.path(), &["net", "build", "--window", "0:4"])
        .status
        .success());
    let svg = read(&dir.path().join("net-build.svg"));
    assert!(svg.contains("config_hash"));
    assert_eq!(svg.matches("<circle").count(), 16);

    let dir3 = tempfile::tempdir().unwrap();
    assert!(sepnet(
        dir3.path(),
        &["net", "build", "--d", "3", "--window", "0:2"]
    )
    .status
    .success());
    assert!(!dir3.path().join("net-build.svg").exists());
}

#[test]
fn net_round_trip_through_netf() {
    let dir = tempfile::tempdir().unwrap();
    assert!(sepnet(
        dir.path(),
        &["net", "build", "--window", "0:10", "--netf", "true"]
    )
    .status
    .success());
    let netf = dir.path().join("net-build.netf");
    let o = sepnet(
        dir.path(),
        &["net", "audit", "--input", netf.to_str().unwrap()],
    );
    assert!(o.status.success());
    let v: serde_json::Value =
        serde_json::from_str(&read(&dir.path().join("net-audit.json"))).unwrap();
    assert_eq!(v["result"]["s"], 1.0);
}

#[test]
fn failing_check_exits_one_after_writing() {
    let dir = tempfile::tempdir().unwrap();
    // five points in a cell whose ρ-mass is four
    let pts = dir.path().join("pts.csv");
    std::fs::write(&pts, "0.1,0.1\n0.2,0.2\n0.3,0.3\n0.4,0.4\n0.5,0.5\n").unwrap();
    let o = sepnet(
        dir.path(),
        &[
            "net",
            "discrepancy",
            "--cube",
            "0,0:4",
            "--input",
            pts.to_str().unwrap(),
        ],
    );
    assert_eq!(
        o.status.code(),
        Some(1),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(dir.path().join("net-discrepancy.json").exists());
}

#[test]
fn bad_map_spec_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = sepnet(dir.path(), &["symdiff", "--f", "{\"kind\": \"nope\"}"]);
    assert_eq!(o.status.code(), Some(2));
}
