use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use fracwave_cli::run_args;
use fracwave_core::direct::{solve_direct, solve_mode, z1};
use fracwave_core::fracops::{caputo_derivative, gronwall_z, rl_integral};
use fracwave_core::gamma::gamma;
use fracwave_core::inverse::{prepare_measurement, uniqueness_defect, InverseSolver};
use fracwave_core::synth::synthesize_measurement;
use fracwave_core::{
    mlf, reference_problem, EigenBasis, Forcing, Functional, MLParams, ProblemSpec, Samples, SpectralCoeffs,
    TimeGrid,
};
use fracwave_validation::Suite;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

const REFERENCE: &str = include_str!("../../cli/examples/reference.ini");

/// Frozen from the forward solve of the reference configuration.
const REFERENCE_MIN_ABS_MU: f64 = 1.0818;

fn ml(a: f64, b: f64, z: f64) -> f64 {
    mlf(MLParams::new(a, b).unwrap(), z).unwrap()
}

fn identities() -> (bool, String) {
    let start = Instant::now();
    let mut worst_exp: f64 = 0.0;
    for i in 0..=140 {
        let x = -30.0 + 0.25 * i as f64;
        worst_exp = worst_exp.max((ml(1.0, 1.0, x) - x.exp()).abs() / x.exp().max(1.0));
    }
    let mut worst_cos: f64 = 0.0;
    for i in 0..=200 {
        let x = 0.1 * i as f64;
        worst_cos = worst_cos.max((ml(2.0, 1.0, -x * x) - x.cos()).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    (
        worst_exp <= 1e-10 && worst_cos <= 1e-10 && secs < 5.0,
        format!("exp rel err {worst_exp:.2e}, cos abs err {worst_cos:.2e}"),
    )
}

fn decay_bound() -> (bool, String) {
    let start = Instant::now();
    let zs: Vec<f64> = (0..60).map(|i| -(10f64).powf(-3.0 + 9.0 * i as f64 / 59.0)).collect();
    let mut worst = (0.0, 0.0, 0.0, 0.0);
    let mut violations = Vec::new();
    for a in [1.1, 1.5, 1.9] {
        for b in [1.0, 2.0, a] {
            let mut local = (0.0, 0.0);
            for &z in &zs {
                let v = (1.0 + z.abs()) * ml(a, b, z).abs();
                if v > local.0 {
                    local = (v, z);
                }
            }
            if local.0 > 10.0 {
                violations.push(format!("({a},{b}) max {:.2} at z = {:.3e}", local.0, local.1));
            }
            if local.0 > worst.0 {
                worst = (local.0, a, b, local.1);
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let ok = violations.is_empty() && secs < 5.0;
    let mut detail = format!(
        "max (1+|z|)|E| = {:.3} at alpha = {}, beta = {}, z = {:.3e} (bound 10)",
        worst.0, worst.1, worst.2, worst.3
    );
    if !violations.is_empty() {
        detail.push_str(&format!("; exceeded for {}", violations.join(", ")));
    }
    (ok, detail)
}

fn fractional_calculus() -> (bool, String) {
    let g = TimeGrid::new(1.0, 256).unwrap();
    let d = caputo_derivative(&Samples::from_fn(g, |t| t * t), 1.5).unwrap();
    let caputo_err = (d.values()[256] - 2.0 / gamma(1.5)).abs();
    let comp = |n: usize| {
        let g = TimeGrid::new(1.0, n).unwrap();
        let h = Samples::from_fn(g, |t| t * t * t);
        rl_integral(&caputo_derivative(&h, 1.5).unwrap(), 1.5)
            .unwrap()
            .sup_distance(&h)
            .unwrap()
    };
    let (e256, e512) = (comp(256), comp(512));
    // "halves (within 25%)": the finer error is at most 0.625 of the coarser one
    let ok = caputo_err <= 2e-3 && e256 <= 5e-3 && e512 <= 0.625 * e256;
    (
        ok,
        format!(
            "caputo(t^2)(1) err {caputo_err:.2e}; composition {e256:.2e} (N=256) -> {e512:.2e} (N=512), ratio {:.2}",
            e256 / e512
        ),
    )
}

fn scalar_problem(forcing: Forcing, phi: f64, n: usize) -> ProblemSpec {
    let basis = Arc::new(EigenBasis::new(vec![1.0], "scalar").unwrap());
    ProblemSpec {
        alpha: 1.5,
        beta: 0.5,
        phi: SpectralCoeffs::new(basis.clone(), vec![phi]).unwrap(),
        psi: SpectralCoeffs::zeros(basis.clone()),
        forcing,
        grid: TimeGrid::new(1.0, n).unwrap(),
        functional: Functional::new(basis.clone(), vec![1.0], None).unwrap(),
        basis,
    }
}

fn direct_convergence() -> (bool, String) {
    let start = Instant::now();
    let ns = [64, 128, 256, 512];
    let errs: Vec<f64> = ns
        .iter()
        .map(|&n| {
            let f = Forcing::Custom(Arc::new(|_, t: f64| 2.0 * t.sqrt() / gamma(1.5) + 2.0 * t * t));
            let p = scalar_problem(f, 0.0, n);
            let sol = solve_direct(&p, &Samples::constant(p.grid, 1.0)).unwrap();
            p.grid
                .nodes()
                .zip(sol.modes[0].values.values())
                .map(|(t, u)| (u - t * t).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let orders: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let p = scalar_problem(Forcing::Zero, 1.0, 512);
    let m = solve_mode(1, &p, &Samples::constant(p.grid, 0.5)).unwrap();
    let fold = p
        .grid
        .nodes()
        .zip(m.values.values())
        .map(|(t, u)| (u - z1(1.5, 1.5, t)).abs())
        .fold(0.0, f64::max);
    let secs = start.elapsed().as_secs_f64();
    let ok = errs[3] <= 1e-4 && orders.iter().all(|&o| o >= 1.5) && fold <= 1e-4 && secs < 30.0;
    (
        ok,
        format!(
            "errors {:?}, orders {:?}, fold check {fold:.2e}",
            errs.iter().map(|e| format!("{e:.2e}")).collect::<Vec<_>>(),
            orders.iter().map(|o| format!("{o:.2}")).collect::<Vec<_>>()
        ),
    )
}

fn uniqueness() -> (bool, String) {
    let g = TimeGrid::new(1.0, 512).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let zero = Samples::zeros(g);
    let mut all_zero = true;
    for _ in 0..5 {
        let (a, b, w): (f64, f64, f64) = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(0.5..8.0));
        let q = Samples::from_fn(g, |t| a + b * (w * t).sin());
        let y = uniqueness_defect(&q, &zero, 1.5).unwrap();
        all_zero &= y.values().iter().all(|v| *v == 0.0);
    }
    let y = uniqueness_defect(&Samples::constant(g, 1.0), &Samples::constant(g, 1.0), 1.5).unwrap();
    let relax_err = g
        .nodes()
        .zip(y.values())
        .map(|(t, v)| (v - ml(1.5, 1.0, -t.powf(1.5))).abs())
        .fold(0.0, f64::max);
    (
        all_zero && relax_err <= 1e-4,
        format!("zero data gives exactly zero for 5 random q: {all_zero}; relaxation error {relax_err:.2e}"),
    )
}

struct Cli {
    dir: TempDir,
    config: PathBuf,
}

impl Cli {
    fn new() -> Self {
        let dir = TempDir::new().unwrap();
        let config = dir.path().join("reference.ini");
        fs::write(&config, REFERENCE).unwrap();
        Cli { dir, config }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn run(&self, args: &[&str], out: &str) -> i32 {
        let out = self.path(out);
        let mut v: Vec<String> = vec!["fracwave".into()];
        v.extend(args.iter().map(|s| s.to_string()));
        v.extend(["--config".into(), self.config.display().to_string(), "--out".into(), out.display().to_string()]);
        let r = run_args(v);
        if let Some(e) = &r.error {
            eprintln!("fracwave {args:?}: {e}");
        }
        r.exit_code
    }

    fn report(&self, name: &str, key: &str) -> Option<String> {
        let text = fs::read_to_string(self.path(name)).ok()?;
        text.lines()
            .find_map(|l| l.strip_prefix(&format!("{key}: ")).map(str::to_string))
    }

    fn table(&self, name: &str) -> Vec<Vec<f64>> {
        fs::read_to_string(self.path(name))
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with('#'))
            .skip(1)
            .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
            .collect()
    }

    fn recovery(&self) -> i32 {
        let code = self.run(&["synthesize", "--refine", "2"], "syn");
        if code != 0 {
            return code;
        }
        let mu = self.path("syn_mu.csv").display().to_string();
        self.run(&["recover", "--measurement", &mu], "rec")
    }

    fn contraction(&self) -> i32 {
        self.run(&["study", "contraction", "--horizons", "0.5", "1.0"], "con")
    }

    fn stability(&self) -> i32 {
        let a = self.run(&["study", "stability", "--deltas", "1e-3", "3e-3", "1e-2"], "stab");
        let b = self.run(
            &["study", "stability", "--noise", "seeded-uniform", "--seed", "17", "--deltas", "1e-5", "1e-4"],
            "noise",
        );
        a.max(b)
    }
}

fn recovery() -> (bool, String) {
    let start = Instant::now();
    let cli = Cli::new();
    let code = cli.recovery();
    let secs = start.elapsed().as_secs_f64();
    let num = |name: &str, key: &str| cli.report(name, key).and_then(|v| v.parse::<f64>().ok()).unwrap_or(f64::NAN);
    let min_mu = num("syn_report.txt", "min_abs_mu");
    let err = num("rec_report.txt", "q_error_vs_q_true");
    let iters = num("rec_report.txt", "iterations");
    let ok = code == 0
        && err <= 5e-3
        && iters <= 30.0
        && min_mu >= 0.1
        && (min_mu - REFERENCE_MIN_ABS_MU).abs() <= 1e-3
        && secs < 120.0;
    (
        ok,
        format!("exit {code}, sup error {err:.2e} after {iters} iterations, min|mu| = {min_mu:.4} (fixture {REFERENCE_MIN_ABS_MU})"),
    )
}

fn contraction() -> (bool, String) {
    let p = reference_problem(0.5, 256).unwrap();
    let q_true = Samples::from_fn(p.grid, |t| 1.0 + 0.5 * (2.0 * t).sin());
    let s = synthesize_measurement(&p, &q_true, 2).unwrap();
    let m = prepare_measurement(s.mu, Some(s.mu_prime_0), 0.1, p.alpha).unwrap();
    let inv = InverseSolver::new(&p, &m).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut ratios = vec![inv.contraction_ratio(&q_true, &q_true.map(|v| v + 0.1)).unwrap()];
    for _ in 0..5 {
        let mut probe = || {
            let (c, a, w): (f64, f64, f64) = (rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5), rng.gen_range(0.5..6.0));
            Samples::from_fn(p.grid, move |t| c + a * (w * t).cos())
        };
        let (qa, qb) = (probe(), probe());
        assert!(qa.sup_norm() <= 3.0 && qb.sup_norm() <= 3.0);
        ratios.push(inv.contraction_ratio(&qa, &qb).unwrap());
    }
    let worst = ratios.iter().cloned().fold(0.0, f64::max);

    let cli = Cli::new();
    let code = cli.contraction();
    let rows = if code == 0 { cli.table("con_contraction.csv") } else { Vec::new() };
    let (r05, r10) = rows
        .iter()
        .fold((f64::NAN, f64::NAN), |acc, r| if r[0] == 0.5 { (r[1], acc.1) } else { (acc.0, r[1]) });
    (
        worst <= 0.9 && r10 > r05,
        format!(
            "max ratio over 6 probe pairs in B_3 {worst:.3} (q_true pair {:.3}); T = 0.5: {r05:.3}, T = 1.0: {r10:.3}",
            ratios[0]
        ),
    )
}

fn stability() -> (bool, String) {
    let cli = Cli::new();
    let code = cli.run(&["study", "stability", "--deltas", "1e-3", "3e-3", "1e-2"], "stab");
    if code != 0 {
        return (false, format!("study stability exited {code}"));
    }
    let rows = cli.table("stab_stability.csv");
    let converged = rows.iter().all(|r| r[1] == 1.0);
    let growth = rows[2][3] / rows[0][3];
    let c = rows.iter().map(|r| r[5].max(1.0 / r[5])).fold(0.0, f64::max);
    (
        converged && (3.0..=30.0).contains(&growth) && c <= 100.0,
        format!(
            "errors {:.2e}, {:.2e}, {:.2e}; error(1e-2)/error(1e-3) = {growth:.2}; two-sided constant {c:.3}",
            rows[0][3], rows[1][3], rows[2][3]
        ),
    )
}

fn gronwall() -> (bool, String) {
    let mut worst: f64 = 0.0;
    for i in 0..=500 {
        let t = 0.01 * i as f64;
        worst = worst.max((gronwall_z(1.0, 1.0, t, 1e-17).unwrap() - t.exp()).abs());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut at_zero = true;
    let mut tried = 0;
    while tried < 20 {
        let (a, g): (f64, f64) = (rng.gen_range(0.05..2.0), rng.gen_range(0.05..2.0));
        if a + g <= 1.0 {
            continue;
        }
        tried += 1;
        at_zero &= gronwall_z(a, g, 0.0, 1e-16).unwrap() == 1.0;
    }
    (
        worst <= 1e-10 && at_zero,
        format!("max |Z_11(t) - e^t| on [0,5] = {worst:.2e}; Z(0) = 1 for 20 random pairs: {at_zero}"),
    )
}

fn bodies(dir: &Path, names: &[&str]) -> Vec<(String, Vec<u8>)> {
    names
        .iter()
        .map(|n| (n.to_string(), fs::read(dir.join(n)).unwrap_or_default()))
        .collect()
}

fn determinism() -> (bool, String) {
    let names = [
        "syn_mu.csv",
        "rec_q.csv",
        "rec_trace.csv",
        "con_contraction.csv",
        "stab_stability.csv",
        "noise_stability.csv",
    ];
    let runs: Vec<_> = (0..2)
        .map(|_| {
            let cli = Cli::new();
            let codes = [cli.recovery(), cli.contraction(), cli.stability()];
            (codes, bodies(cli.dir.path(), &names))
        })
        .collect();
    let codes_ok = runs.iter().all(|(c, _)| c.iter().all(|&x| x == 0));
    let nonempty = runs[0].1.iter().all(|(_, b)| !b.is_empty());
    let differing: Vec<&str> = runs[0]
        .1
        .iter()
        .zip(&runs[1].1)
        .filter(|(a, b)| a.1 != b.1)
        .map(|(a, _)| a.0.as_str())
        .collect();
    (
        codes_ok && nonempty && differing.is_empty(),
        format!(
            "{} CSV files compared across two runs; differing: {}",
            names.len(),
            if differing.is_empty() { "none".to_string() } else { differing.join(", ") }
        ),
    )
}

fn main() -> ExitCode {
    let mut suite = Suite::default();
    suite.criterion(1, "Mittag-Leffler identities", identities);
    suite.criterion(2, "Mittag-Leffler decay bound", decay_bound);
    suite.criterion(3, "fractional calculus oracles", fractional_calculus);
    suite.criterion(4, "direct solver convergence", direct_convergence);
    suite.criterion(5, "uniqueness march", uniqueness);
    suite.criterion(6, "end-to-end recovery", recovery);
    suite.criterion(7, "contraction", contraction);
    suite.criterion(8, "stability", stability);
    suite.criterion(9, "Gronwall function", gronwall);
    suite.criterion(10, "determinism", determinism);
    suite.finish()
}
