use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rdec::harness::gamma_stats;

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("rdec-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn rdec(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rdec")).args(args).arg("--output").arg(out).output().unwrap()
}

fn rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(str::to_string).collect()).collect()
}

#[test]
fn tableau_prints_dec3() {
    let dir = scratch("tableau");
    let out = rdec(&["tableau", "--order", "3"], &dir);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("5 stages") && text.contains("Shu-Osher alpha"));
    let csv = std::fs::read_to_string(dir.join("tableau.csv")).unwrap();
    let b: Vec<f64> = csv.lines().last().unwrap().split(',').skip(2).map(|v| v.parse().unwrap()).collect();
    let expect = [1.0 / 6.0, 0.0, 0.0, 4.0 / 6.0, 1.0 / 6.0];
    assert!(b.iter().zip(expect).all(|(x, y)| (x - y).abs() < 1e-15), "{b:?}");
}

#[test]
fn pendulum_run_has_1112_rows_and_relaxation_shifts_step_count() {
    let dir = scratch("pendulum");
    let base = ["ode-run", "--problem", "pendulum", "--order", "2", "--dt", "0.9", "--t-final", "1000"];
    assert!(rdec(&base, &dir).status.success());
    let plain = rows(&dir.join("ode-run.csv"));
    // initial state plus 1112 steps
    assert_eq!(plain.len(), 1113);
    assert_eq!(plain.last().unwrap()[0], "1112");

    let mut relaxed_args = base.to_vec();
    relaxed_args.extend(["--relaxation", "relaxation", "--entropy", "general"]);
    assert!(rdec(&relaxed_args, &dir).status.success());
    let relaxed = rows(&dir.join("ode-run.csv"));
    let gammas: Vec<f64> = relaxed[1..].iter().map(|r| r[2].parse().unwrap()).collect();
    let median = gamma_stats(&gammas).unwrap().median;
    let steps = relaxed.len() as i64 - 1;
    assert_ne!(median, 1.0);
    // time advances by gamma dt, so gamma < 1 needs more steps
    assert_eq!((steps - 1112).signum(), -(median - 1.0).signum() as i64);
    let drift: f64 = relaxed.iter().map(|r| r[4].parse::<f64>().unwrap().abs()).fold(0.0, f64::max);
    assert!(drift <= 1e-10);
}

#[test]
fn converge_reports_high_order() {
    let dir = scratch("converge");
    let out = rdec(&["ode-converge", "--order", "4", "--family", "gauss-lobatto", "--refinements", "5"], &dir);
    assert!(out.status.success());
    let table = rows(&dir.join("ode-converge.csv"));
    assert_eq!(table.len(), 5);
    let errors: Vec<f64> = table.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(errors.windows(2).all(|w| w[1] < w[0]));
    let dts: Vec<f64> = table.iter().map(|r| r[0].parse().unwrap()).collect();
    assert!(rdec::harness::fit_slope(&dts, &errors) >= 3.8);
}

#[test]
fn identical_configs_give_identical_bytes() {
    for (name, args) in [
        ("det-ode", vec!["ode-run", "--problem", "oscillator", "--relaxation", "relaxation", "--order", "4"]),
        ("det-fv", vec!["fv-burgers", "--seed", "11", "--relaxation", "relaxation"]),
        ("det-rd", vec!["rd-transport", "--degree", "2", "--relaxation", "conservative", "--refinements", "2"]),
    ] {
        let a = scratch(&format!("{name}-a"));
        let b = scratch(&format!("{name}-b"));
        let oa = rdec(&args, &a);
        let ob = rdec(&args, &b);
        assert!(oa.status.success() && ob.status.success());
        let mut files: Vec<_> = std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
        files.sort();
        assert!(!files.is_empty());
        for f in files {
            assert_eq!(std::fs::read(a.join(&f)).unwrap(), std::fs::read(b.join(&f)).unwrap(), "{name}: {f:?}");
        }
    }
}

#[test]
fn config_file_with_flag_override() {
    let dir = scratch("config");
    let cfg = dir.join("run.cfg");
    std::fs::write(&cfg, "# oscillator run\nproblem = oscillator\norder = 3\ndt = 0.5\nt_final = 2.0\n").unwrap();
    let out = rdec(&["ode-run", "--config", cfg.to_str().unwrap(), "--dt", "0.25"], &dir);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = rows(&dir.join("ode-run.csv"));
    assert_eq!(r.len(), 9);
    assert_eq!(r[1][1].parse::<f64>().unwrap(), 0.25);
}

#[test]
fn csv_uses_seventeen_significant_digits() {
    let dir = scratch("digits");
    assert!(rdec(&["ode-run", "--t-final", "0.3"], &dir).status.success());
    let r = rows(&dir.join("ode-run.csv"));
    let mantissa = r[1][1].split('e').next().unwrap();
    assert_eq!(mantissa.chars().filter(char::is_ascii_digit).count(), 17);
}

#[test]
fn failures_have_distinct_exit_codes_and_one_line_diagnostics() {
    let dir = scratch("errors");
    let cases: [(&[&str], i32, &str); 5] = [
        (&["ode-run", "--dt", "-1"], 2, "config"),
        (&["ode-run", "--problem", "nope"], 2, "config"),
        (&["ode-run", "--problem", "damped", "--alpha", "0.3", "--dt", "0.5", "--relaxation", "relaxation"], 3, "numerical"),
        (&["ode-run", "--problem", "oscillator", "--u0", "0,0"], 2, "config"),
        (&["ode-run", "--problem", "pendulum", "--entropy", "general", "--relaxation", "relaxation", "--dt", "8"], 4, "solver"),
    ];
    for (args, code, kind) in cases {
        let out = rdec(args, &dir);
        assert_eq!(out.status.code(), Some(code), "{args:?}");
        let err = String::from_utf8(out.stderr).unwrap();
        assert_eq!(err.lines().count(), 1, "{err}");
        assert!(err.starts_with(&format!("rdec: error[{kind}]:")), "{err}");
    }
}

#[test]
fn output_directory_from_environment() {
    let dir = scratch("env");
    let out = Command::new(env!("CARGO_BIN_EXE_rdec"))
        .args(["tableau", "--method", "ssprk33"])
        .env(rdec::harness::OUTPUT_DIR_ENV, &dir)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.join("tableau.csv").exists());
}
