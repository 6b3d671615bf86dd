use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use fracwave_cli::{run_args, RunResult, EXIT_CONFIG, EXIT_CONSISTENCY, EXIT_NUMERICAL, EXIT_OK};
use tempfile::TempDir;

const REFERENCE: &str = include_str!("../examples/reference.ini");

fn config(dir: &Path, edits: &[(&str, &str)], extra: &str) -> PathBuf {
    let mut text = REFERENCE.to_string();
    for (from, to) in edits {
        assert!(text.contains(from), "{from}");
        text = text.replace(from, to);
    }
    text.push_str(extra);
    let p = dir.join("run.ini");
    fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str]) -> RunResult {
    let mut v = vec!["fracwave"];
    v.extend_from_slice(args);
    run_args(v)
}

fn report_value(path: &Path, key: &str) -> String {
    let text = fs::read_to_string(path).unwrap();
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}: ")).map(str::to_string))
        .unwrap_or_else(|| panic!("{key} missing from\n{text}"))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn direct_solve_writes_three_files() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), &[], "");
    let out = dir.path().join("d");
    let r = run(&["direct", "solve", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(r.exit_code, EXIT_OK, "{:?}", r.error);
    assert_eq!(r.outputs.len(), 3);
    for suffix in ["d_modes.csv", "d_norms.csv", "d_report.txt"] {
        assert!(dir.path().join(suffix).is_file(), "{suffix}");
    }
    let modes = fs::read_to_string(dir.path().join("d_modes.csv")).unwrap();
    assert_eq!(modes.lines().next().unwrap(), "t,u_1,u_2,u_3,u_4,u_5,u_6,u_7,u_8");
    assert_eq!(modes.lines().count(), 258);
    assert_eq!(report_value(&dir.path().join("d_report.txt"), "status"), "ok");
}

#[test]
fn picard_and_implicit_agree() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), &[("N = 256", "N = 64")], "");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(run(&["direct", "solve", "--config", s(&cfg), "--out", s(&a)]).exit_code, 0);
    assert_eq!(run(&["direct", "solve", "--config", s(&cfg), "--picard", "--out", s(&b)]).exit_code, 0);
    let read = |p: &str| -> Vec<f64> {
        fs::read_to_string(dir.path().join(p))
            .unwrap()
            .lines()
            .skip(1)
            .flat_map(|l| l.split(',').map(|c| c.parse::<f64>().unwrap()).collect::<Vec<_>>())
            .collect()
    };
    let (x, y) = (read("a_modes.csv"), read("b_modes.csv"));
    let worst = x.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(worst <= 1e-9, "{worst}");
}

#[test]
fn q_file_on_the_wrong_grid_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), &[("N = 256", "N = 4")], "");
    let q = dir.path().join("q.csv");
    fs::write(&q, "t,q\n0,1\n0.1,1\n0.25,1\n0.375,1\n0.5,1\n").unwrap();
    let out = dir.path().join("d");
    let r = run(&["direct", "solve", "--config", s(&cfg), "--q-file", s(&q), "--out", s(&out)]);
    assert_eq!(r.exit_code, EXIT_CONFIG);
    assert!(r.error.unwrap().contains("q.csv:3"));
    assert_eq!(report_value(&dir.path().join("d_report.txt"), "exit_code"), "2");
}

#[test]
fn round_trip_through_the_cli() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), &[], "");
    let syn = dir.path().join("s");
    let r = run(&["synthesize", "--config", s(&cfg), "--out", s(&syn)]);
    assert_eq!(r.exit_code, EXIT_OK, "{:?}", r.error);
    let mu = dir.path().join("s_mu.csv");
    let text = fs::read_to_string(&mu).unwrap();
    assert!(text.starts_with("# mu_prime_0 = "));
    assert_eq!(text.lines().nth(1), Some("t,mu"));
    assert_eq!(report_value(&dir.path().join("s_report.txt"), "floor_holds"), "true");

    let rec = dir.path().join("r");
    let r = run(&["recover", "--config", s(&cfg), "--measurement", s(&mu), "--out", s(&rec)]);
    assert_eq!(r.exit_code, EXIT_OK, "{:?}", r.error);
    let report = dir.path().join("r_report.txt");
    let err: f64 = report_value(&report, "q_error_vs_q_true").parse().unwrap();
    let iters: usize = report_value(&report, "iterations").parse().unwrap();
    assert!(err <= 5e-3 && iters <= 30, "{err} {iters}");
    let trace = fs::read_to_string(dir.path().join("r_trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), iters + 1);
    assert!(dir.path().join("r_q.csv").is_file());
}

#[test]
fn inconsistent_initial_value_exits_4() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), &[], "");
    let syn = dir.path().join("s");
    assert_eq!(run(&["synthesize", "--config", s(&cfg), "--out", s(&syn)]).exit_code, 0);
    // same measurement, but phi doubled in the config
    let other = config(dir.path(), &[("phi = decay 3", "phi = decay 3 scale 2")], "");
    let rec = dir.path().join("r");
    let mu = dir.path().join("s_mu.csv");
    let r = run(&["recover", "--config", s(&other), "--measurement", s(&mu), "--out", s(&rec)]);
    assert_eq!(r.exit_code, EXIT_CONSISTENCY, "{:?}", r.error);
    let report = dir.path().join("r_report.txt");
    assert!(report_value(&report, "error").contains("consistency"));

    let r = run(&[
        "recover", "--config", s(&other), "--measurement", s(&mu), "--skip-consistency", "--out", s(&rec),
    ]);
    assert_ne!(r.exit_code, EXIT_CONSISTENCY);
}

#[test]
fn zero_data_fails_the_floor() {
    let dir = TempDir::new().unwrap();
    let cfg = config(
        dir.path(),
        &[
            ("phi = decay 3", "phi = zero"),
            ("psi = decay 3", "psi = zero"),
            ("f = exp-decay 1 decay 3", "f = zero"),
            ("N = 256", "N = 32"),
        ],
        "",
    );
    let syn = dir.path().join("s");
    assert_eq!(run(&["synthesize", "--config", s(&cfg), "--out", s(&syn)]).exit_code, 0);
    assert_eq!(report_value(&dir.path().join("s_report.txt"), "floor_holds"), "false");
    let mu = dir.path().join("s_mu.csv");
    let rec = dir.path().join("r");
    let r = run(&["recover", "--config", s(&cfg), "--measurement", s(&mu), "--out", s(&rec)]);
    assert_eq!(r.exit_code, EXIT_CONSISTENCY);
    assert!(r.error.unwrap().contains("t_0"));
}

#[test]
fn config_errors_exit_2_with_locations() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), &[("alpha = 1.5", "alpha = 2.5")], "");
    let out = dir.path().join("d");
    let r = run(&["direct", "solve", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(r.exit_code, EXIT_CONFIG);
    let e = r.error.unwrap();
    assert!(e.contains("run.ini:3: [problem] alpha: alpha must lie in (1,2)"), "{e}");
    assert!(report_value(&dir.path().join("d_report.txt"), "error").contains("alpha"));

    let cfg = config(dir.path(), &[("functional = decay 1", "functional = file weights/w.csv")], "");
    let r = run(&["direct", "solve", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(r.exit_code, EXIT_CONFIG);
    assert!(r.error.unwrap().contains("weights/w.csv"));

    let r = run(&["direct", "solve", "--config", s(&dir.path().join("absent.ini")), "--out", s(&out)]);
    assert_eq!(r.exit_code, EXIT_CONFIG);
}

#[test]
fn relative_files_resolve_against_the_config() {
    let dir = TempDir::new().unwrap();
    fs::create_dir(dir.path().join("data")).unwrap();
    fs::write(dir.path().join("data/w.csv"), "k,w\n1,1\n2,0.5\n").unwrap();
    fs::write(dir.path().join("data/phi.csv"), "k,c\n1,1\n").unwrap();
    fs::write(dir.path().join("data/lambdas.txt"), "# eigenvalues\n1\n4\n").unwrap();
    let text = "[problem]\nalpha = 1.5\nbeta = 0.5\nT = 0.5\nN = 16\nbasis = file data/lambdas.txt\n\
                phi = file data/phi.csv\npsi = zero\nfunctional = file data/w.csv\n";
    let cfg = dir.path().join("c.ini");
    fs::write(&cfg, text).unwrap();
    let out = dir.path().join("d");
    let r = run(&["direct", "solve", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(r.exit_code, EXIT_OK, "{:?}", r.error);
    assert_eq!(report_value(&dir.path().join("d_report.txt"), "K"), "2");
}

#[test]
fn point_functional_needs_opt_in() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), &[("functional = decay 1", "functional = point 1.0"), ("N = 256", "N = 32")], "");
    let out = dir.path().join("d");
    let r = run(&["direct", "solve", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(r.exit_code, EXIT_CONFIG);
    assert!(r.error.unwrap().contains("--allow-non-l2"));
    let r = run(&["direct", "solve", "--config", s(&cfg), "--out", s(&out), "--allow-non-l2"]);
    assert_eq!(r.exit_code, EXIT_OK, "{:?}", r.error);
}

#[test]
fn divergence_and_budget_exhaustion_exit_3() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), &[("N = 256", "N = 64")], "");
    let syn = dir.path().join("s");
    assert_eq!(run(&["synthesize", "--config", s(&cfg), "--out", s(&syn)]).exit_code, 0);
    let mu = dir.path().join("s_mu.csv");
    let rec = dir.path().join("r");

    let r = run(&["recover", "--config", s(&cfg), "--measurement", s(&mu), "--max-iter", "2", "--out", s(&rec)]);
    assert_eq!(r.exit_code, EXIT_NUMERICAL);
    assert!(r.error.unwrap().contains("not converged"));
    // partial results are still written
    assert!(dir.path().join("r_q.csv").is_file());

    let far = config(dir.path(), &[("N = 256", "N = 64"), ("mu_floor = 0.1", "mu_floor = 0.1\nq0 = constant 50\nmax_q_norm = 3")], "");
    let r = run(&["recover", "--config", s(&far), "--measurement", s(&mu), "--out", s(&rec)]);
    assert_eq!(r.exit_code, EXIT_NUMERICAL);
    let e = r.error.unwrap();
    assert!(e.contains("diverged") && e.contains("ball"), "{e}");
}

#[test]
fn contraction_study_table() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), &[("N = 256", "N = 128")], "");
    let out = dir.path().join("c");
    let r = run(&["study", "contraction", "--config", s(&cfg), "--horizons", "0.25", "0.5", "1.0", "--out", s(&out)]);
    assert_eq!(r.exit_code, EXIT_OK, "{:?}", r.error);
    let text = fs::read_to_string(dir.path().join("c_contraction.csv")).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    assert_eq!(text.lines().next(), Some("T,ratio,min_abs_mu"));
    assert_eq!(rows.len(), 3);
    assert!(rows[0][1] < rows[1][1] && rows[1][1] < rows[2][1], "{rows:?}");
    assert_eq!(report_value(&dir.path().join("c_report.txt"), "ratio_increases_with_T"), "true");
}

#[test]
fn convergence_study_table() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), &[], "");
    let out = dir.path().join("v");
    let r = run(&["study", "convergence", "--config", s(&cfg), "--levels", "64", "128", "256", "--out", s(&out)]);
    assert_eq!(r.exit_code, EXIT_OK, "{:?}", r.error);
    let text = fs::read_to_string(dir.path().join("v_convergence.csv")).unwrap();
    assert_eq!(text.lines().count(), 4);
    let r = run(&["study", "convergence", "--config", s(&cfg), "--levels", "64", "96", "--out", s(&out)]);
    assert_eq!(r.exit_code, EXIT_CONFIG);
}

#[test]
fn stability_study_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), &[("N = 256", "N = 64")], "");
    let body = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let r = run(&[
            "study", "stability", "--config", s(&cfg), "--noise", "seeded-uniform", "--seed", seed, "--deltas", "1e-4",
            "1e-3", "--out", s(&out),
        ]);
        assert_eq!(r.exit_code, EXIT_OK, "{:?}", r.error);
        fs::read(dir.path().join(format!("{name}_stability.csv"))).unwrap()
    };
    assert_eq!(body("a", "5"), body("b", "5"));
    assert_ne!(body("a", "5"), body("c", "6"));
}

#[test]
fn mlf_subcommand() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("m.csv");
    let r = run(&["mlf", "--alpha", "2", "--beta", "1", "--table", "0", "-4", "5", "--out", s(&out)]);
    assert_eq!(r.exit_code, EXIT_OK, "{:?}", r.error);
    let text = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 6);
    let cols: Vec<&str> = lines[5].split(',').collect();
    assert_eq!(cols[2], "closed-form");
    let v: f64 = cols[1].parse().unwrap();
    assert!((v - 2f64.cos()).abs() < 1e-14);

    assert_eq!(run(&["mlf", "--alpha", "2.5", "--beta", "1", "--z", "-1"]).exit_code, EXIT_CONFIG);
    assert_eq!(run(&["mlf", "--alpha", "1.5", "--beta", "1"]).exit_code, EXIT_CONFIG);
    assert_eq!(run(&["mlf", "--alpha", "1.5", "--beta", "1", "--z", "50"]).exit_code, EXIT_CONFIG);
}

#[test]
fn binary_exit_codes() {
    let dir = TempDir::new().unwrap();
    let bin = env!("CARGO_BIN_EXE_fracwave");
    let ok = Command::new(bin).args(["mlf", "--alpha", "1.5", "--beta", "1", "--z", "-5"]).output().unwrap();
    assert_eq!(ok.status.code(), Some(0));
    let stdout = String::from_utf8(ok.stdout).unwrap();
    assert!(stdout.starts_with("z,value,regime,abs_err\n-5.0000000000000000e0,-3.00082050413"), "{stdout}");

    let cfg = config(dir.path(), &[("beta = 0.5", "beta = 1.5")], "");
    let out = dir.path().join("d");
    let bad = Command::new(bin)
        .args(["direct", "solve", "--config", s(&cfg), "--out", s(&out)])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("beta must lie in (0,1)"));

    let usage = Command::new(bin).args(["recover"]).output().unwrap();
    assert_eq!(usage.status.code(), Some(2));
}
