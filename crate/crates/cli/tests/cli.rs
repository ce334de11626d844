use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_branchflow"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).env("RUST_LOG", "error").output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

const SMALL: &str = "seed = 4
[medium]
ell_c_over_lambda = 10
[run]
n_medium = 12
z_max_over_zc = 1.0
output_count = 5
[rays]
rays_per_medium = 100
k_labels = 8
";

fn small_config(dir: &Path) -> String {
    let p = dir.join("small.toml");
    fs::write(&p, SMALL).unwrap();
    p.to_str().unwrap().to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn theory_simulate_compare_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("run");
    assert_eq!(code(&run(&["theory", "--config", &cfg, "--out", s(&out)])), 0);
    assert_eq!(code(&run(&["simulate", "--config", &cfg, "--out", s(&out), "--workers", "1"])), 0);
    for f in ["theory_scintillation.csv", "theory_scintillation.json", "scintillation.csv", "manifest.json", "config.toml"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let (t, sim) = (out.join("theory_scintillation.csv"), out.join("scintillation.csv"));
    let args = ["compare", s(&t), s(&sim)];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stdout));
    assert_eq!(a.stdout, b.stdout);
    assert!(String::from_utf8_lossy(&a.stdout).contains("PASS"));
}

#[test]
fn manifest_rerun_is_bit_identical_for_any_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    assert_eq!(code(&run(&["simulate", "--config", &cfg, "--out", s(&first), "--workers", "1"])), 0);
    let manifest = first.join("manifest.json");
    assert_eq!(code(&run(&["simulate", "--manifest", s(&manifest), "--out", s(&second), "--workers", "3"])), 0);
    let mut compared = 0;
    for entry in fs::read_dir(&first).unwrap() {
        let name = entry.unwrap().file_name();
        let name = name.to_str().unwrap();
        if name.ends_with(".csv") {
            assert_eq!(fs::read(first.join(name)).unwrap(), fs::read(second.join(name)).unwrap(), "{name}");
            compared += 1;
        }
    }
    assert!(compared >= 12);
}

#[test]
fn flags_override_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("run");
    assert_eq!(code(&run(&["simulate", "--config", &cfg, "--out", s(&out), "--seed", "77", "--scale", "0.5"])), 0);
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["plan"]["root_seed"], 77);
    assert_eq!(m["plan"]["n_medium"], 6);
    // A different plan may not overwrite the directory.
    assert_eq!(code(&run(&["simulate", "--config", &cfg, "--out", s(&out)])), 1);
}

#[test]
fn validation_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[medium]\nsigma = 3\n").unwrap();
    assert_eq!(code(&run(&["theory", "--config", s(&bad)])), 1);
    let o = run(&["preset", "fig9"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("fig1b"));
    assert_eq!(code(&run(&["nonsense"])), 1);
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn comparison_failure_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("t.csv");
    let sim = dir.path().join("s.csv");
    fs::write(&t, "z_over_zc,S\n0,0\n1,1\n2,2\n").unwrap();
    fs::write(&sim, "z_over_zc,S,stderr,n\n0.5,0.55,0.1,10\n1.5,1.45,0.1,10\n").unwrap();
    assert_eq!(code(&run(&["compare", s(&t), s(&sim)])), 0);
    assert_eq!(code(&run(&["compare", s(&t), s(&sim), "--sigma", "0.4"])), 3);
    fs::write(&sim, "z_over_zc,S,stderr,n\n0.5,0.9,0.1,10\n").unwrap();
    let out = dir.path().join("report");
    assert_eq!(code(&run(&["compare", s(&t), s(&sim), "--out", s(&out)])), 3);
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("compare.json")).unwrap()).unwrap();
    assert_eq!(r["pass"], false);
    fs::write(&sim, "z_over_zc,S,stderr,n\n2.5,0.9,0.1,10\n").unwrap();
    assert_eq!(code(&run(&["compare", s(&t), s(&sim)])), 1);
}

#[test]
fn presets_expand_to_loadable_configs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fig4");
    assert_eq!(code(&run(&["preset", "fig4", "--out", s(&out)])), 0);
    let c = fs::read_to_string(out.join("fig4_c.toml")).unwrap();
    let pc = fs::read_to_string(out.join("fig4_pc.toml")).unwrap();
    assert!(c.contains("n_medium = 200"), "{c}");
    assert!(pc.contains("regime = \"pc\"") && pc.contains("m_source = 80"), "{pc}");
    assert!(pc.contains("rho_o_over_lambda = 10.0") && pc.contains("ell_c_over_lambda = 100.0"));
    let o = run(&["preset", "fig2", "--scale", "1"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("n_medium = 1000") && text.contains("regime = \"plane\""), "{text}");
    // A preset file is a valid config for the other commands.
    let th = dir.path().join("th");
    assert_eq!(code(&run(&["theory", "--config", s(&out.join("fig4_pc.toml")), "--out", s(&th)])), 0);
    assert!(th.join("theory_scintillation_c.csv").exists() && th.join("theory_scintillation_pc.csv").exists());
}

#[test]
fn rays_write_moments_and_histograms() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("rays");
    assert_eq!(code(&run(&["rays", "--config", &cfg, "--out", s(&out), "--scale", "0.5"])), 0);
    let text = fs::read_to_string(out.join("ray_moments.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("z_over_zc,var_k,var_k_se,var_k_theory"));
    assert_eq!(lines.len(), 5);
    for i in 0..4 {
        assert!(out.join(format!("ray_histogram_{i:03}.bin")).exists());
    }
    assert!(out.join("ray_manifest.json").exists());
}
