use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use fracwave_core::direct::{residual, DirectSolver, Scheme};
use fracwave_core::inverse::{
    check_consistency, prepare_measurement, presmooth, stability_experiment, InverseSolver, NoiseMode,
    StabilityConfig,
};
use fracwave_core::mlf::mlf_eval;
use fracwave_core::synth::synthesize_measurement;
use fracwave_core::{Error, MLParams, Samples, TimeGrid};

use crate::config::{parse_config, Config, ConfigError, QSpec};
use crate::io::{column_on_grid, csv, csv_cells, num, prefixed, read_table, write_file, Report};
use crate::{NotConverged, UsageError};

/// Per-run bookkeeping: report entries, written files, phase timings.
#[derive(Debug, Default)]
pub struct Ctx {
    pub report: Report,
    pub outputs: Vec<PathBuf>,
    pub timings: Vec<(String, f64)>,
}

impl Ctx {
    fn time<T>(&mut self, phase: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.timings.push((phase.to_string(), start.elapsed().as_secs_f64()));
        out
    }

    fn write(&mut self, path: PathBuf, body: &str) -> anyhow::Result<()> {
        self.outputs.push(write_file(&path, body)?);
        Ok(())
    }
}

pub fn load_config(ctx: &mut Ctx, path: &Path, allow_non_l2: bool) -> anyhow::Result<Config> {
    let cfg = ctx.time("parse", || parse_config(path))?;
    if cfg.problem.functional.is_non_l2() && !allow_non_l2 {
        return Err(ConfigError {
            path: cfg.path.clone(),
            line: None,
            section: Some("problem".into()),
            key: Some("functional".into()),
            msg: "point evaluation weights are not square-summable, so the observation is not a bounded \
                  functional on H; pass --allow-non-l2 to use it anyway"
                .into(),
        }
        .into());
    }
    ctx.report.set("config", path.display());
    let p = &cfg.problem;
    ctx.report.num("alpha", p.alpha);
    ctx.report.num("beta", p.beta);
    ctx.report.num("T", p.grid.horizon());
    ctx.report.set("N", p.grid.steps());
    ctx.report.set("K", p.dim());
    ctx.report.set("basis", p.basis.label());
    let warnings = p.data_warnings();
    ctx.report.set(
        "data_warnings",
        if warnings.is_empty() { "none".to_string() } else { warnings.join("; ") },
    );
    Ok(cfg)
}

fn missing(cfg: &Config, section: &str, key: &str) -> ConfigError {
    ConfigError {
        path: cfg.path.clone(),
        line: None,
        section: Some(section.into()),
        key: Some(key.into()),
        msg: "required by this command but not set".into(),
    }
}

fn q_true(cfg: &Config) -> anyhow::Result<&QSpec> {
    cfg.study.q_true.as_ref().ok_or_else(|| missing(cfg, "study", "q_true").into())
}

fn describe(q: &QSpec) -> String {
    match q {
        QSpec::Zero => "zero".into(),
        QSpec::Constant(c) => format!("constant {c}"),
        QSpec::Sine { a, b, w } => format!("sine {a} {b} {w}"),
        QSpec::File(p) => format!("file {}", p.display()),
    }
}

fn series_csv(grid: &TimeGrid, name: &str, s: &Samples) -> String {
    csv(&["t", name], grid.nodes().zip(s.values()).map(|(t, v)| vec![t, *v]))
}

// ---------------------------------------------------------------- mlf

pub struct MlfRequest {
    pub alpha: f64,
    pub beta: f64,
    pub points: Vec<f64>,
}

/// `--z` or `--table zmin zmax n [--log]` as a list of arguments.
pub fn mlf_points(z: Option<f64>, table: Option<&[String]>, log: bool) -> anyhow::Result<Vec<f64>> {
    match (z, table) {
        (Some(z), None) => Ok(vec![z]),
        (None, Some([a, b, n])) => {
            let parse = |s: &str| s.parse::<f64>().map_err(|_| UsageError(format!("--table: not a number: {s:?}")));
            let (lo, hi) = (parse(a)?, parse(b)?);
            let n: usize = n
                .parse()
                .ok()
                .filter(|&n| n >= 1)
                .ok_or_else(|| UsageError(format!("--table: point count must be a positive integer, got {n:?}")))?;
            if n == 1 {
                return Ok(vec![lo]);
            }
            if log {
                if lo == 0.0 || hi == 0.0 || lo.signum() != hi.signum() {
                    bail!(UsageError("--log needs zmin and zmax nonzero and of one sign".into()));
                }
                let (la, lb) = (lo.abs().ln(), hi.abs().ln());
                Ok((0..n)
                    .map(|i| lo.signum() * (la + (lb - la) * i as f64 / (n - 1) as f64).exp())
                    .collect())
            } else {
                Ok((0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect())
            }
        }
        _ => bail!(UsageError("give exactly one of --z or --table".into())),
    }
}

pub fn mlf_table(req: &MlfRequest) -> anyhow::Result<String> {
    let params = MLParams::new(req.alpha, req.beta)?;
    let rows = req
        .points
        .iter()
        .map(|&z| {
            let e = mlf_eval(params, z).with_context(|| format!("E_{{{},{}}}({z})", req.alpha, req.beta))?;
            Ok(vec![num(z), num(e.value), e.regime.as_str().to_string(), num(e.abs_error_estimate)])
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    Ok(csv_cells(&["z", "value", "regime", "abs_err"], rows))
}

// ---------------------------------------------------------------- direct

pub struct DirectRequest<'a> {
    pub config: &'a Path,
    pub q_file: Option<&'a Path>,
    pub picard: bool,
    pub out: &'a Path,
    pub allow_non_l2: bool,
}

pub fn direct_solve(ctx: &mut Ctx, req: &DirectRequest) -> anyhow::Result<()> {
    ctx.report.set("command", "direct solve");
    let cfg = load_config(ctx, req.config, req.allow_non_l2)?;
    let p = &cfg.problem;
    let grid = p.grid;
    let q = match (req.q_file, &cfg.q) {
        (Some(f), _) => {
            ctx.report.set("q", format!("file {}", f.display()));
            column_on_grid(&read_table(f)?, 1, &grid, &f.display().to_string())?
        }
        (None, Some(spec)) => {
            ctx.report.set("q", describe(spec));
            spec.resolve(&grid)?
        }
        (None, None) => {
            ctx.report.set("q", "zero");
            Samples::zeros(grid)
        }
    };
    let scheme = if req.picard { Scheme::Picard } else { Scheme::Implicit };
    ctx.report.set("scheme", if req.picard { "picard" } else { "implicit" });
    let solver = ctx.time("setup", || DirectSolver::new(p))?.with_scheme(scheme);
    let sol = ctx.time("solve", || solver.solve(&q))?;
    let res = ctx.time("residual", || residual(p, &q, &sol))?;

    let mut header = vec!["t".to_string()];
    header.extend((1..=p.dim()).map(|k| format!("u_{k}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let modes = csv(
        &header,
        grid.nodes().enumerate().map(|(i, t)| {
            let mut row = vec![t];
            row.extend(sol.modes.iter().map(|m| m.values.values()[i]));
            row
        }),
    );
    let mu = sol.functional_trace(p.functional.weights(), 0.0);
    let norms = csv(
        &["t", "norm_d_beta", "norm_h", "mu"],
        grid.nodes()
            .enumerate()
            .map(|(i, t)| vec![t, sol.node_norms[i], sol.h_norms[i], mu.values()[i]]),
    );
    ctx.write(prefixed(req.out, "modes.csv"), &modes)?;
    ctx.write(prefixed(req.out, "norms.csv"), &norms)?;

    ctx.report.num("sup_norm_d_beta", sol.sup_norm());
    ctx.report.num("residual_max", res.iter().cloned().fold(0.0, f64::max));
    for (k, r) in res.iter().enumerate() {
        ctx.report.num(format!("residual_mode_{}", k + 1), *r);
    }
    Ok(())
}

// ---------------------------------------------------------------- synthesize

pub struct SynthRequest<'a> {
    pub config: &'a Path,
    pub refine: Option<usize>,
    pub out: &'a Path,
    pub allow_non_l2: bool,
}

pub fn synthesize(ctx: &mut Ctx, req: &SynthRequest) -> anyhow::Result<()> {
    ctx.report.set("command", "synthesize");
    let cfg = load_config(ctx, req.config, req.allow_non_l2)?;
    let refine = req.refine.unwrap_or(cfg.study.refine);
    if refine < 2 {
        bail!(UsageError(format!("--refine must be >= 2, got {refine}")));
    }
    let spec = q_true(&cfg)?;
    let q = spec.resolve(&cfg.grid())?;
    let s = ctx.time("synthesize", || synthesize_measurement(&cfg.problem, &q, refine))?;
    let body = format!("# mu_prime_0 = {}\n{}", num(s.mu_prime_0), series_csv(&cfg.grid(), "mu", &s.mu));
    ctx.write(prefixed(req.out, "mu.csv"), &body)?;
    ctx.report.set("q_true", describe(spec));
    ctx.report.set("refine", refine);
    ctx.report.num("mu_prime_0", s.mu_prime_0);
    ctx.report.num("min_abs_mu", s.min_abs_mu);
    ctx.report.num("mu_floor", cfg.inverse.mu_floor);
    ctx.report.set("floor_holds", s.min_abs_mu >= cfg.inverse.mu_floor);
    Ok(())
}

// ---------------------------------------------------------------- recover

pub struct RecoverRequest<'a> {
    pub config: &'a Path,
    pub measurement: &'a Path,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub relax: Option<f64>,
    pub presmooth: Option<usize>,
    pub mu_prime_0: Option<f64>,
    pub skip_consistency: bool,
    pub out: &'a Path,
    pub allow_non_l2: bool,
}

pub fn recover(ctx: &mut Ctx, req: &RecoverRequest) -> anyhow::Result<()> {
    ctx.report.set("command", "recover");
    let cfg = load_config(ctx, req.config, req.allow_non_l2)?;
    let p = &cfg.problem;
    let grid = p.grid;
    ctx.report.set("measurement", req.measurement.display());

    let table = read_table(req.measurement)?;
    let mut mu = column_on_grid(&table, 1, &grid, &req.measurement.display().to_string())?;
    if let Some(w) = req.presmooth {
        mu = presmooth(&mu, w);
        ctx.report.set("presmooth_window", w);
    }
    let compat_slope: f64 = p.functional.weights().iter().zip(p.psi.coeffs()).map(|(w, c)| w * c).sum();
    let file_slope = match table.meta("mu_prime_0") {
        Some(v) => Some(v.parse::<f64>().map_err(|_| Error::Parse {
            source_name: req.measurement.display().to_string(),
            line: 0,
            msg: format!("bad mu_prime_0 comment {v:?}"),
        })?),
        None => None,
    };
    // without a declared slope, compatibility fixes mu'(0) = Phi[psi]
    let (slope, source) = match (req.mu_prime_0, file_slope) {
        (Some(s), _) => (s, "flag"),
        (None, Some(s)) => (s, "measurement-file"),
        (None, None) => (compat_slope, "compatibility"),
    };
    ctx.report.num("mu_prime_0", slope);
    ctx.report.set("mu_prime_0_source", source);
    if source == "compatibility" {
        let est = fracwave_core::fracops::initial_slope(&mu);
        ctx.report.num("mu_prime_0_one_sided_estimate", est);
    }

    let m = ctx.time("measurement", || prepare_measurement(mu, Some(slope), cfg.inverse.mu_floor, p.alpha))?;
    let min_abs = m.mu.values().iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
    ctx.report.num("min_abs_mu", min_abs);
    let c = check_consistency(p, &m, cfg.inverse.consistency_tol);
    ctx.report.num("consistency_value_defect", c.value_defect);
    ctx.report.num("consistency_slope_defect", c.slope_defect);
    ctx.report.num("consistency_tol", c.tol);
    if !c.passed {
        if req.skip_consistency {
            ctx.report.set("consistency", "failed (skipped by request)");
        } else {
            return Err(Error::Consistency(format!(
                "|mu(0) - Phi[phi]| = {:e}, |mu'(0) - Phi[psi]| = {:e}, tolerance {:e}",
                c.value_defect, c.slope_defect, c.tol
            ))
            .into());
        }
    } else {
        ctx.report.set("consistency", "passed");
    }

    let mut settings = cfg.inverse.settings.clone();
    if let Some(t) = req.tol {
        settings.tol = t;
    }
    if let Some(n) = req.max_iter {
        if n == 0 {
            bail!(UsageError("--max-iter must be at least 1".into()));
        }
        settings.max_iter = n;
    }
    if let Some(w) = req.relax {
        settings.relaxation = w;
    }
    if let Some(q0) = &cfg.inverse.q0 {
        settings.q0 = Some(q0.resolve(&grid)?);
        ctx.report.set("q0", describe(q0));
    } else {
        ctx.report.set("q0", "zero");
    }
    settings.validate().map_err(|e| UsageError(e.to_string()))?;
    ctx.report.num("tol", settings.tol);
    ctx.report.set("max_iter", settings.max_iter);
    ctx.report.num("relaxation", settings.relaxation);
    ctx.report.num("max_q_norm", settings.max_q_norm);

    let solver = ctx.time("setup", || InverseSolver::new(p, &m))?;
    let (q, rep) = ctx.time("iterate", || solver.iterate(&settings))?;

    ctx.write(prefixed(req.out, "q.csv"), &series_csv(&grid, "q", &q))?;
    let trace = csv_cells(
        &["iteration", "sup_change", "contraction_estimate"],
        rep.sup_changes.iter().enumerate().map(|(i, &c)| {
            let est = if i == 0 { f64::NAN } else { rep.contraction_estimates[i - 1] };
            vec![(i + 1).to_string(), num(c), num(est)]
        }),
    );
    ctx.write(prefixed(req.out, "trace.csv"), &trace)?;

    ctx.report.set("iterations", rep.iterations);
    ctx.report.set("converged", rep.converged);
    ctx.report.num("final_sup_change", rep.sup_changes.last().copied().unwrap_or(f64::NAN));
    ctx.report.num("final_residual", rep.final_residual);
    ctx.report.num("q_sup_norm", q.sup_norm());
    if let Some(spec) = &cfg.study.q_true {
        if let Ok(truth) = spec.resolve(&grid) {
            ctx.report.num("q_error_vs_q_true", q.sup_distance(&truth)?);
        }
    }
    ctx.report.set(
        "warnings",
        if rep.warnings.is_empty() { "none".to_string() } else { rep.warnings.join("; ") },
    );
    if let Some(reason) = rep.divergence {
        return Err(Error::Divergence {
            iteration: rep.iterations,
            reason,
        }
        .into());
    }
    if !rep.converged {
        return Err(NotConverged(format!(
            "sup change {:e} still above tolerance {:e} after {} iterations",
            rep.sup_changes.last().copied().unwrap_or(f64::NAN),
            settings.tol,
            rep.iterations
        ))
        .into());
    }
    Ok(())
}

// ---------------------------------------------------------------- studies

pub struct ConvergenceRequest<'a> {
    pub config: &'a Path,
    pub levels: Option<Vec<usize>>,
    pub out: &'a Path,
    pub allow_non_l2: bool,
}

/// Potential used by the direct-side studies: `q_true`, else `q`, else zero.
fn study_q(cfg: &Config) -> (&str, Option<&QSpec>) {
    match (&cfg.study.q_true, &cfg.q) {
        (Some(q), _) => ("study.q_true", Some(q)),
        (None, Some(q)) => ("problem.q", Some(q)),
        _ => ("zero", None),
    }
}

pub fn study_convergence(ctx: &mut Ctx, req: &ConvergenceRequest) -> anyhow::Result<()> {
    ctx.report.set("command", "study convergence");
    let cfg = load_config(ctx, req.config, req.allow_non_l2)?;
    let n0 = cfg.grid().steps();
    let levels = req
        .levels
        .clone()
        .or_else(|| cfg.study.levels.clone())
        .unwrap_or_else(|| vec![n0, 2 * n0, 4 * n0]);
    if levels.len() < 2 || levels.windows(2).any(|w| w[1] <= w[0] || w[1] % w[0] != 0) {
        bail!(UsageError(format!(
            "levels must be at least two increasing grid sizes, each dividing the next; got {levels:?}"
        )));
    }
    let (q_source, spec) = study_q(&cfg);
    ctx.report.set("q", q_source);
    ctx.report.set("levels", format!("{levels:?}"));

    struct Level {
        mu: Samples,
        defect: f64,
    }
    let horizon = cfg.grid().horizon();
    let run = |n: usize| -> anyhow::Result<Level> {
        let grid = TimeGrid::new(horizon, n)?;
        let p = cfg.problem.with_grid(grid)?;
        let q = match spec {
            Some(s) => s.resolve(&grid)?,
            None => Samples::zeros(grid),
        };
        let sol = DirectSolver::new(&p)?.solve(&q)?;
        let mu = sol.functional_trace(p.functional.weights(), 0.0);
        let defect = match cfg.study.q_true.as_ref() {
            Some(_) => {
                let s = synthesize_measurement(&p, &q, 1)?;
                let m = prepare_measurement(s.mu, Some(s.mu_prime_0), cfg.inverse.mu_floor, p.alpha)?;
                InverseSolver::new(&p, &m)?.apply_q(&q)?.sup_distance(&q)?
            }
            None => f64::NAN,
        };
        Ok(Level { mu, defect })
    };
    let results = ctx.time("levels", || levels.iter().map(|&n| run(n)).collect::<anyhow::Result<Vec<_>>>())?;

    // successive differences of mu on the coarser grid
    let mut changes = Vec::with_capacity(levels.len());
    for i in 0..levels.len() {
        if i + 1 < levels.len() {
            let fine = results[i + 1].mu.downsample(levels[i + 1] / levels[i])?;
            changes.push(fine.sup_distance(&results[i].mu)?);
        } else {
            changes.push(f64::NAN);
        }
    }
    let order = |a: f64, b: f64| if a > 0.0 && b > 0.0 { (a / b).log2() } else { f64::NAN };
    let rows = (0..levels.len()).map(|i| {
        let ratio = if i == 0 { 1.0 } else { (levels[i] as f64 / levels[i - 1] as f64).log2() };
        let mu_order = if i == 0 { f64::NAN } else { order(changes[i - 1], changes[i]) / ratio };
        let def_order = if i == 0 { f64::NAN } else { order(results[i - 1].defect, results[i].defect) / ratio };
        vec![
            levels[i].to_string(),
            num(changes[i]),
            num(mu_order),
            num(results[i].defect),
            num(def_order),
        ]
    });
    let body = csv_cells(&["N", "mu_change", "mu_order", "fixed_point_defect", "defect_order"], rows);
    ctx.write(prefixed(req.out, "convergence.csv"), &body)?;
    for (n, r) in levels.iter().zip(&results) {
        ctx.report.num(format!("fixed_point_defect_N{n}"), r.defect);
    }
    Ok(())
}

pub struct ContractionRequest<'a> {
    pub config: &'a Path,
    pub horizons: Option<Vec<f64>>,
    pub out: &'a Path,
    pub allow_non_l2: bool,
}

pub fn study_contraction(ctx: &mut Ctx, req: &ContractionRequest) -> anyhow::Result<()> {
    ctx.report.set("command", "study contraction");
    let cfg = load_config(ctx, req.config, req.allow_non_l2)?;
    let horizons = req.horizons.clone().unwrap_or_else(|| cfg.study.horizons.clone());
    if horizons.is_empty() || horizons.iter().any(|&h| !(h > 0.0)) {
        bail!(UsageError("horizons must be positive".into()));
    }
    let spec = q_true(&cfg)?;
    let shift = cfg.study.probe_shift;
    ctx.report.set("q_true", describe(spec));
    ctx.report.num("probe_shift", shift);
    ctx.report.set("refine", cfg.study.refine);

    let steps = cfg.grid().steps();
    let rows = ctx.time("probes", || {
        horizons
            .iter()
            .map(|&h| -> anyhow::Result<Vec<f64>> {
                let grid = TimeGrid::new(h, steps)?;
                let p = cfg.problem.with_grid(grid)?;
                let q = spec.resolve(&grid)?;
                let s = synthesize_measurement(&p, &q, cfg.study.refine)?;
                let min_abs = s.min_abs_mu;
                let m = prepare_measurement(s.mu, Some(s.mu_prime_0), cfg.inverse.mu_floor, p.alpha)
                    .with_context(|| format!("T = {h}"))?;
                let r = InverseSolver::new(&p, &m)?.contraction_ratio(&q, &q.map(|v| v + shift))?;
                Ok(vec![h, r, min_abs])
            })
            .collect::<anyhow::Result<Vec<_>>>()
    })?;
    for r in &rows {
        ctx.report.num(format!("ratio_T{}", r[0]), r[1]);
    }
    let increasing = rows.windows(2).all(|w| w[0][0] >= w[1][0] || w[1][1] > w[0][1]);
    ctx.report.set("ratio_increases_with_T", increasing);
    ctx.write(prefixed(req.out, "contraction.csv"), &csv(&["T", "ratio", "min_abs_mu"], rows))?;
    Ok(())
}

pub struct StabilityRequest<'a> {
    pub config: &'a Path,
    pub deltas: Option<Vec<f64>>,
    pub noise: Option<NoiseMode>,
    pub seed: Option<u64>,
    pub out: &'a Path,
    pub allow_non_l2: bool,
}

pub fn study_stability(ctx: &mut Ctx, req: &StabilityRequest) -> anyhow::Result<()> {
    ctx.report.set("command", "study stability");
    let cfg = load_config(ctx, req.config, req.allow_non_l2)?;
    let spec = q_true(&cfg)?;
    let deltas = req.deltas.clone().unwrap_or_else(|| cfg.study.deltas.clone());
    if deltas.is_empty() || deltas.iter().any(|d| !(*d >= 0.0) || !d.is_finite()) {
        bail!(UsageError("deltas must be finite and non-negative".into()));
    }
    let mut settings = cfg.inverse.settings.clone();
    if let Some(q0) = &cfg.inverse.q0 {
        settings.q0 = Some(q0.resolve(&cfg.grid())?);
    }
    let sc = StabilityConfig {
        deltas,
        mode: req.noise.unwrap_or(cfg.study.noise),
        seed: req.seed.unwrap_or(cfg.study.seed),
        refine: cfg.study.refine,
        mu_floor: cfg.inverse.mu_floor,
        settings,
    };
    ctx.report.set("q_true", describe(spec));
    ctx.report.set("noise", sc.mode.as_str());
    ctx.report.set("seed", sc.seed);
    ctx.report.set("refine", sc.refine);
    let q = spec.resolve(&cfg.grid())?;
    let rows = ctx.time("experiment", || stability_experiment(&cfg.problem, &q, &sc))?;

    let body = csv_cells(
        &["delta", "converged", "iterations", "q_error", "measurement_defect", "ratio"],
        rows.iter().map(|r| {
            vec![
                num(r.delta),
                u8::from(r.converged).to_string(),
                r.iterations.to_string(),
                num(r.q_error),
                num(r.measurement_defect),
                num(r.ratio),
            ]
        }),
    );
    ctx.write(prefixed(req.out, "stability.csv"), &body)?;

    let ratios: Vec<f64> = rows
        .iter()
        .filter(|r| r.delta > 0.0 && r.converged && r.ratio.is_finite())
        .map(|r| r.ratio)
        .collect();
    if !ratios.is_empty() {
        let hi = ratios.iter().cloned().fold(0.0, f64::max);
        let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        ctx.report.num("ratio_min", lo);
        ctx.report.num("ratio_max", hi);
        ctx.report.num("two_sided_constant", hi.max(1.0 / lo));
    }
    for r in &rows {
        if let Some(f) = &r.failure {
            ctx.report.set(format!("failure_delta_{}", r.delta), f);
        }
    }
    Ok(())
}

/// Used by `mlf` when a report is not requested.
pub fn stdout_or_file(ctx: &mut Ctx, out: Option<&Path>, body: &str) -> anyhow::Result<()> {
    match out {
        Some(p) => ctx.write(p.to_path_buf(), body),
        None => {
            use std::io::Write;
            std::io::stdout()
                .write_all(body.as_bytes())
                .map_err(|e| anyhow!("writing to stdout: {e}"))
        }
    }
}
