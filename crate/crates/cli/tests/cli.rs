use std::f64::consts::TAU;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use dicke_tc::series::SeriesMeta;
use dicke_tc::TrajectorySeries;
use serde_json::Value;

fn dicke_tc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dicke-tc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn header(file: &Path) -> Value {
    let text = fs::read_to_string(file).unwrap();
    let first = text.lines().next().unwrap();
    serde_json::from_str(first.strip_prefix("# ").expect("metadata line")).unwrap()
}

#[test]
fn lmg_trajectory_alternates_stroboscopically() {
    let dir = tempfile::tempdir().unwrap();
    let out = dicke_tc(&["trajectory", "--preset", "lmg-trajectory", "--out", path(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let s = TrajectorySeries::load_csv(&dir.path().join("trajectory.csv")).unwrap();
    let strobe = s.stroboscopic("jx").unwrap();
    assert_eq!(strobe.len(), 101);
    for w in strobe.windows(2) {
        assert!(w[0] * w[1] < 0.0 && (w[0] + w[1]).abs() < 1e-6, "{w:?}");
    }
    assert!(dir.path().join("spectrum.csv").exists());
}

#[test]
fn undriven_spins_precess() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("free.toml");
    fs::write(
        &cfg,
        "horizon = 10\n[physics]\nkappa = \"inf\"\n[drive]\nrow = 0.0\nomega_d = 1.4\n[initial_state]\nkind = \"polarized_x\"\n",
    )
    .unwrap();
    let out = dicke_tc(&["trajectory", "--config", path(&cfg), "--out", path(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let s = TrajectorySeries::load_csv(&dir.path().join("trajectory.csv")).unwrap();
    let jx = s.jx().unwrap();
    for (t, v) in s.t.iter().zip(jx) {
        assert!((v - 0.5 * t.cos()).abs() < 1e-8, "t={t}: {v}");
    }
}

#[test]
fn malformed_config_exits_2_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[drive]\nduty = 0.5\n").unwrap();
    let target = dir.path().join("out");
    let out = dicke_tc(&["trajectory", "--config", path(&cfg), "--out", path(&target)]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("duty") && err.contains("line 2"), "{err}");
    assert!(!target.exists());
}

#[test]
fn unknown_preset_exits_2() {
    let out = dicke_tc(&["trajectory", "--preset", "nope", "--out", "unused"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn atom_only_quantum_run_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("adm.toml");
    fs::write(&cfg, "[physics]\nkappa = 1000.0\n[level]\nkind = \"quantum\"\nn_spins = 4\n").unwrap();
    let out = dicke_tc(&["quantum", "--config", path(&cfg), "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn classify_pure_tone() {
    let dir = tempfile::tempdir().unwrap();
    let omega_d = 1.3;
    let spp = 32;
    let meta = SeriesMeta {
        omega_d,
        samples_per_period: spp,
        dt: 1e-3,
        drive_active: true,
        ..Default::default()
    };
    let n = 100 * spp + 1;
    let mut s = TrajectorySeries::with_columns(meta, &["jx", "jy", "jz"], n);
    let period = TAU / omega_d;
    for i in 0..n {
        let t = i as f64 * period / spp as f64;
        s.push(t, &[0.5 * (omega_d * t).cos(), 0.0, 0.0]);
    }
    let file = dir.path().join("tone.csv");
    s.save_csv(&file).unwrap();
    let out = dicke_tc(&["classify", path(&file)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let c: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(c["label"], "Other");
    assert_eq!(c["subharmonic_order"], 1);
}

#[test]
fn kappa_scan_has_an_intermediate_plateau() {
    let dir = tempfile::tempdir().unwrap();
    let out = dicke_tc(&["kappa-scan", "--preset", "kappa-scan-circle", "--out", path(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let file = dir.path().join("kappa_scan.csv");
    assert!(header(&file)["config_hash"].is_string());
    let text = fs::read_to_string(&file).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().skip(2).map(|l| l.split(',').collect()).collect();
    let label = |k: &str| rows.iter().find(|r| r[0] == k).unwrap()[2];
    assert_eq!(label("0"), "Thermal");
    assert_eq!(label("1"), "TC");
    assert_eq!(label("5"), "TC");
    assert_eq!(label("inf"), "Thermal");
}

#[test]
fn quantum_lmg_is_period_doubled() {
    let dir = tempfile::tempdir().unwrap();
    let out = dicke_tc(&["quantum", "--preset", "quantum-lmg-strong", "--out", path(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let s = TrajectorySeries::load_csv(&dir.path().join("trajectory.csv")).unwrap();
    let strobe: Vec<f64> = s.jx().unwrap().iter().step_by(s.meta.samples_per_period).copied().collect();
    for w in strobe[..40].windows(2) {
        assert!(w[0] * w[1] < 0.0, "{w:?}");
    }
    assert!(header(&dir.path().join("envelope.csv"))["seed"].is_u64());
}

#[test]
fn header_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("a");
    let out = dicke_tc(&["trajectory", "--preset", "dissipative-trajectory", "--seed", "7", "--out", path(&first)]);
    assert!(out.status.success());
    let s = TrajectorySeries::load_csv(&first.join("trajectory.csv")).unwrap();
    let run = &s.meta.extra["run"];
    assert_eq!(run["seed"], 7);
    let cfg = dir.path().join("rerun.json");
    fs::write(&cfg, run["config"].to_string()).unwrap();
    let second = dir.path().join("b");
    let out = dicke_tc(&["trajectory", "--config", path(&cfg), "--out", path(&second)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["trajectory.csv", "spectrum.csv"] {
        assert_eq!(fs::read(first.join(f)).unwrap(), fs::read(second.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn phase_diagram_resumes_to_the_same_result() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("grid.toml");
    fs::write(
        &cfg,
        "[grid]\nrows = { min = 0.3, max = 0.7, count = 3 }\nomega_d = { min = 1.2, max = 1.4, count = 3 }\nkappa = [1.0, \"inf\"]\n",
    )
    .unwrap();
    let whole = dir.path().join("whole");
    let parts = dir.path().join("parts");
    let run = |out: &Path, extra: &[&str]| {
        let mut args = vec!["phase-diagram", "--config", path(&cfg), "--out", path(out), "--workers", "2"];
        args.extend_from_slice(extra);
        let o = dicke_tc(&args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    };
    run(&whole, &[]);
    run(&parts, &["--max-cells", "7"]);
    assert!(!parts.join("label_k0.csv").exists());
    run(&parts, &[]);
    let load = |p: &Path| dicke_tc::sweep::load_phase_diagram(&p.join("phase_diagram.jsonl")).unwrap();
    assert_eq!(load(&whole), load(&parts));
    for f in ["label_k0.csv", "d_k1.csv", "t_tc_k0.csv"] {
        assert_eq!(fs::read(whole.join(f)).unwrap(), fs::read(parts.join(f)).unwrap(), "{f}");
    }
}
