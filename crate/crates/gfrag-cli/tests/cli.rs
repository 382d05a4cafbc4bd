use std::process::Command;

use gfrag_cli::config::ExperimentConfig;

fn gfrag() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gfrag"))
}

#[test]
fn spectral_writes_outputs_and_passes() {
    let dir = tempfile::tempdir().unwrap();
    let st = gfrag().args(["--out", dir.path().to_str().unwrap(), "spectral"]).status().unwrap();
    assert_eq!(st.code(), Some(0));
    for f in ["summary.json", "spectral/summary.json", "spectral/spectral.csv", "spectral/chi.svg"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let s: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(s["pass"], true);
    assert_eq!(s["criteria"][0]["criterion"], 1);
}

#[test]
fn bad_config_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"replicas": {"trees": 3}}"#).unwrap();
    let st = gfrag().args(["--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "spectral"]).status().unwrap();
    assert_eq!(st.code(), Some(2));
    std::fs::write(&cfg, r#"{"unknown_field": 1}"#).unwrap();
    let st = gfrag().args(["--config", cfg.to_str().unwrap(), "spectral"]).status().unwrap();
    assert_eq!(st.code(), Some(2));
}

#[test]
fn empty_config_is_the_default() {
    let c: ExperimentConfig = serde_json::from_str("{}").unwrap();
    assert_eq!(c, ExperimentConfig::default());
    c.validate().unwrap();
}

#[test]
fn seed_changes_output() {
    let dir = tempfile::tempdir().unwrap();
    let run = |seed: &str, sub: &str| {
        let out = dir.path().join(sub);
        let st = gfrag().args(["--seed", seed, "--out", out.to_str().unwrap(), "entrance"]).status().unwrap();
        assert!(matches!(st.code(), Some(0 | 1)));
        std::fs::read(out.join("entrance/entrance.csv")).unwrap()
    };
    let a = run("1", "a");
    let b = run("1", "b");
    let c = run("2", "c");
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn dirs_equal_detects_differences() {
    let d = tempfile::tempdir().unwrap();
    let (a, b) = (d.path().join("a"), d.path().join("b"));
    for p in [&a, &b] {
        std::fs::create_dir_all(p.join("x")).unwrap();
        std::fs::write(p.join("x/f.csv"), "1,2\n").unwrap();
    }
    assert!(gfrag_cli::dirs_equal(&a, &b).unwrap());
    std::fs::write(b.join("x/f.csv"), "1,3\n").unwrap();
    assert!(!gfrag_cli::dirs_equal(&a, &b).unwrap());
    std::fs::write(b.join("x/f.csv"), "1,2\n").unwrap();
    std::fs::write(b.join("g.csv"), "").unwrap();
    assert!(!gfrag_cli::dirs_equal(&a, &b).unwrap());
}
