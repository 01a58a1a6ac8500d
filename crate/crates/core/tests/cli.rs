use std::path::Path;
use std::process::{Command, Output};

fn nf_noma(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nf-noma"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

const SMALL: &str = r#"{
    "scenario": {"num_antennas": 64, "seed": 3},
    "sweep": {"variable": "pmax_dbm", "values": [25, 30, 35]},
    "schemes": ["SLB-NF-NOMA", "NF-OMA"],
    "trials": 3,
    "output_dir": "out"
}"#;

#[test]
fn run_writes_one_row_per_point_scheme_and_metric() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.json"), SMALL).unwrap();
    let out = nf_noma(&["run", "--config", "c.json"], dir.path());
    assert!(out.status.success(), "{out:?}");
    let curves = std::fs::read_to_string(dir.path().join("out/curves.csv")).unwrap();
    assert_eq!(curves.lines().count(), 1 + 3 * 2 * 4);
    assert!(curves.starts_with("sweep_var,value,scheme,metric,mean,stderr,n_feasible,n_total\n"));
    let trials = std::fs::read_to_string(dir.path().join("out/trials.csv")).unwrap();
    assert_eq!(trials.lines().count(), 1 + 3 * 2 * 3);
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.json"), SMALL).unwrap();
    let read = |name: &str| std::fs::read(dir.path().join(name).join("trials.csv")).unwrap();
    for (name, seed) in [("a", "3"), ("b", "4"), ("c", "3")] {
        let out = nf_noma(
            &["run", "--config", "c.json", "--seed", seed, "--out", name],
            dir.path(),
        );
        assert!(out.status.success(), "{out:?}");
    }
    assert_eq!(read("a"), read("c"));
    assert_ne!(read("a"), read("b"));
}

#[test]
fn dry_run_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.json"), SMALL).unwrap();
    let out = nf_noma(&["run", "--config", "c.json", "--dry-run"], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("24 curve rows"), "{text}");
    assert!(!dir.path().join("out").exists());
}

#[test]
fn bad_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("bad.json"),
        r#"{"scenario": {"noise_dbm": "loud"}}"#,
    )
    .unwrap();
    for cmd in ["validate", "run"] {
        let out = nf_noma(&[cmd, "--config", "bad.json"], dir.path());
        assert_eq!(out.status.code(), Some(1));
        let err = String::from_utf8(out.stderr).unwrap();
        assert!(err.contains("scenario.noise_dbm"), "{err}");
    }
    let out = nf_noma(&["validate", "--config", "missing.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn gainmap_peaks_at_the_foci() {
    let dir = tempfile::tempdir().unwrap();
    let out = nf_noma(
        &[
            "gainmap",
            "--focus",
            "25,40",
            "--focus",
            "60,-30",
            "--radius-m",
            "20,70",
            "--angle-deg",
            "-40,50",
            "--resolution",
            "51,91",
            "--out",
            "map.csv",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{out:?}");
    let text = std::fs::read_to_string(dir.path().join("map.csv")).unwrap();
    let angles: Vec<f64> = text
        .lines()
        .next()
        .unwrap()
        .split(',')
        .skip(1)
        .map(|v| v.parse().unwrap())
        .collect();
    assert_eq!(angles.len(), 91);
    let at = |r: f64, a: f64| -> f64 {
        let col = angles.iter().position(|x| (x - a).abs() < 1e-9).unwrap();
        let row = text
            .lines()
            .skip(1)
            .find(|l| (l.split(',').next().unwrap().parse::<f64>().unwrap() - r).abs() < 1e-9)
            .unwrap();
        row.split(',').nth(col + 1).unwrap().parse().unwrap()
    };
    assert!((at(25.0, 40.0) - 1.0).abs() < 1e-8);
    assert!((at(60.0, -30.0) - 1.0).abs() < 1e-8);
    assert!(at(45.0, 0.0) < 0.1);
}
