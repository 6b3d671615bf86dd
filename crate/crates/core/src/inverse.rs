//! Recovery of the potential `q(t)` from `mu(t) = Phi[u(t)]`.
//!
//! Applying `Phi` to the equation gives
//! `q(t) = (Phi[f] - d^alpha mu - Phi[A^beta u]) / mu`, whose right-hand side
//! depends on `q` through `u`; the recovery iterates that map.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::direct::{DirectSolver, Solution};
use crate::error::{Error, Result};
use crate::fracops::{caputo_derivative_rl_form, initial_slope, ProductTrapezoid, Samples};
use crate::gamma::gamma;
use crate::problem::ProblemSpec;
use crate::spectrum::dot;
use crate::synth::synthesize_measurement;

/// Observed trace with its precomputed Caputo derivative.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub mu: Samples,
    pub mu_prime_0: f64,
    pub dalpha_mu: Samples,
    pub mu_floor: f64,
}

/// Builds a [`Measurement`]; `mu_prime_0` is estimated by a second-order
/// one-sided difference when not supplied.
pub fn prepare_measurement(
    mu: Samples,
    mu_prime_0: Option<f64>,
    mu_floor: f64,
    alpha: f64,
) -> Result<Measurement> {
    if !(mu_floor > 0.0) {
        return Err(Error::Domain(format!("mu floor must be positive, got {mu_floor}")));
    }
    if let Some((i, v)) = mu
        .values()
        .iter()
        .enumerate()
        .find(|(_, v)| !(v.abs() >= mu_floor))
    {
        return Err(Error::Consistency(format!(
            "|mu(t_{i})| = {:e} at t = {} is below the floor {mu_floor}",
            v.abs(),
            mu.grid().node(i)
        )));
    }
    let mu_prime_0 = mu_prime_0.unwrap_or_else(|| initial_slope(&mu));
    let dalpha_mu = caputo_derivative_rl_form(&mu, alpha, Some(mu_prime_0))?;
    Ok(Measurement {
        mu,
        mu_prime_0,
        dalpha_mu,
        mu_floor,
    })
}

/// Centred moving average over `window` nodes (truncated at the ends).
pub fn presmooth(mu: &Samples, window: usize) -> Samples {
    if window <= 1 {
        return mu.clone();
    }
    let v = mu.values();
    let half = window / 2;
    let out = (0..v.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(v.len() - 1);
            v[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect();
    Samples::from_vec_unchecked(*mu.grid(), out)
}

/// Compatibility defects `|mu(0) - Phi[phi]|` and `|mu'(0) - Phi[psi]|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsistencyReport {
    pub value_defect: f64,
    pub slope_defect: f64,
    pub tol: f64,
    pub passed: bool,
}

pub fn check_consistency(problem: &ProblemSpec, m: &Measurement, tol_c: f64) -> ConsistencyReport {
    let w = problem.functional.weights();
    let value_defect = (m.mu.values()[0] - dot(w, problem.phi.coeffs())).abs();
    let slope_defect = (m.mu_prime_0 - dot(w, problem.psi.coeffs())).abs();
    ConsistencyReport {
        value_defect,
        slope_defect,
        tol: tol_c,
        passed: value_defect <= tol_c && slope_defect <= tol_c,
    }
}

#[derive(Debug, Clone)]
pub struct RecoverySettings {
    pub tol: f64,
    pub max_iter: usize,
    /// Relaxation factor `omega` in `(0, 1]`.
    pub relaxation: f64,
    /// Initial guess; `None` means `q0 = 0`.
    pub q0: Option<Samples>,
    /// Radius `R` of the ball the iterates must stay in.
    pub max_q_norm: f64,
}

impl Default for RecoverySettings {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 50,
            relaxation: 1.0,
            q0: None,
            max_q_norm: 1e3,
        }
    }
}

impl RecoverySettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::Domain(format!("tol must be positive, got {}", self.tol)));
        }
        if !(self.relaxation > 0.0 && self.relaxation <= 1.0) {
            return Err(Error::Domain(format!(
                "relaxation must lie in (0,1], got {}",
                self.relaxation
            )));
        }
        if !(self.max_q_norm > 0.0) {
            return Err(Error::Domain("max_q_norm must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RecoveryReport {
    pub iterations: usize,
    /// `||q^(n+1) - q^(n)||_C`
    pub sup_changes: Vec<f64>,
    /// Ratios of successive sup changes.
    pub contraction_estimates: Vec<f64>,
    /// `||q - Q(q)||_C` at the returned iterate.
    pub final_residual: f64,
    pub converged: bool,
    /// Why the iteration was abandoned, if it was.
    pub divergence: Option<String>,
    pub warnings: Vec<String>,
}

/// The fixed-point map together with the `q`-independent pieces it needs.
#[derive(Debug, Clone)]
pub struct InverseSolver {
    solver: DirectSolver,
    measurement: Measurement,
    phi_f: Samples,
    weights: Vec<f64>,
    /// `lambda_k^beta w_k`
    weighted_lambda: Vec<f64>,
}

impl InverseSolver {
    pub fn new(problem: &ProblemSpec, m: &Measurement) -> Result<Self> {
        m.mu.check_same_grid(&Samples::zeros(problem.grid))?;
        let solver = DirectSolver::new(problem)?;
        let weights = problem.functional.weights().to_vec();
        let weighted_lambda = solver
            .lambda_beta()
            .iter()
            .zip(&weights)
            .map(|(l, w)| l * w)
            .collect();
        Ok(Self {
            phi_f: problem.functional_of_forcing()?,
            solver,
            measurement: m.clone(),
            weights,
            weighted_lambda,
        })
    }

    pub fn direct(&self) -> &DirectSolver {
        &self.solver
    }

    pub fn measurement(&self) -> &Measurement {
        &self.measurement
    }

    /// `Phi[u]` for the forward solution with potential `q`.
    pub fn trace(&self, q: &Samples) -> Result<Samples> {
        Ok(self.solver.solve(q)?.functional_trace(&self.weights, 0.0))
    }

    fn q_from_solution(&self, sol: &Solution) -> Samples {
        let m = &self.measurement;
        let values = (0..sol.grid.len())
            .map(|i| {
                let au = dot(&self.weighted_lambda, &sol.coeffs_at(i));
                (self.phi_f.values()[i] - m.dalpha_mu.values()[i] - au) / m.mu.values()[i]
            })
            .collect();
        Samples::from_vec_unchecked(sol.grid, values)
    }

    /// One application of the fixed-point map.
    pub fn apply_q(&self, q: &Samples) -> Result<Samples> {
        let sol = self.solver.solve(q)?;
        Ok(self.q_from_solution(&sol))
    }

    /// Like [`InverseSolver::apply_q`], with a warning when `||q||_C > max_q_norm`.
    pub fn apply_q_bounded(&self, q: &Samples, max_q_norm: f64) -> Result<(Samples, Option<String>)> {
        let out = self.apply_q(q)?;
        let warn = (q.sup_norm() > max_q_norm).then(|| {
            format!(
                "||q||_C = {:e} exceeds the ball radius R = {max_q_norm}",
                q.sup_norm()
            )
        });
        Ok((out, warn))
    }

    /// Runs the relaxed iteration; divergence is recorded in the report
    /// rather than returned as an error.
    pub fn iterate(&self, s: &RecoverySettings) -> Result<(Samples, RecoveryReport)> {
        s.validate()?;
        let grid = self.measurement.mu.grid();
        let mut q = match &s.q0 {
            Some(q0) => {
                q0.check_same_grid(&self.measurement.mu)?;
                q0.clone()
            }
            None => Samples::zeros(*grid),
        };
        let mut report = RecoveryReport::default();
        if q.sup_norm() > s.max_q_norm {
            report.divergence = Some(format!(
                "initial guess has ||q||_C = {:e}, outside the ball of radius {}",
                q.sup_norm(),
                s.max_q_norm
            ));
            report.final_residual = f64::NAN;
            return Ok((q, report));
        }
        let mut growth_streak = 0;
        for n in 1..=s.max_iter {
            let applied = self.apply_q(&q)?;
            let next = if s.relaxation == 1.0 {
                applied
            } else {
                let w = s.relaxation;
                Samples::from_vec_unchecked(
                    *grid,
                    q.values()
                        .iter()
                        .zip(applied.values())
                        .map(|(a, b)| (1.0 - w) * a + w * b)
                        .collect(),
                )
            };
            let change = next.sup_distance(&q)?;
            if let Some(&prev) = report.sup_changes.last() {
                report.contraction_estimates.push(change / prev);
                growth_streak = if change > prev { growth_streak + 1 } else { 0 };
            }
            report.sup_changes.push(change);
            report.iterations = n;
            q = next;

            if !change.is_finite() {
                report.divergence = Some("iterate is no longer finite".into());
                break;
            }
            if q.sup_norm() > s.max_q_norm {
                report.divergence = Some(format!(
                    "||q||_C = {:e} left the ball of radius {}",
                    q.sup_norm(),
                    s.max_q_norm
                ));
                break;
            }
            if change <= s.tol {
                report.converged = true;
                break;
            }
            if growth_streak >= 3 {
                report.divergence = Some("sup change grew for 3 consecutive iterations".into());
                break;
            }
        }
        if report.divergence.is_none() && !report.converged {
            report.warnings.push(format!(
                "tolerance {} not reached within {} iterations",
                s.tol, s.max_iter
            ));
        }
        if report.divergence.is_none() {
            report.final_residual = self.apply_q(&q)?.sup_distance(&q)?;
        } else {
            report.final_residual = f64::NAN;
        }
        Ok((q, report))
    }

    /// Like [`InverseSolver::iterate`], but divergence is an error.
    pub fn recover(&self, s: &RecoverySettings) -> Result<(Samples, RecoveryReport)> {
        let (q, report) = self.iterate(s)?;
        if let Some(reason) = &report.divergence {
            return Err(Error::Divergence {
                iteration: report.iterations,
                reason: reason.clone(),
            });
        }
        Ok((q, report))
    }

    /// `||Q(q_a) - Q(q_b)||_C / ||q_a - q_b||_C`
    pub fn contraction_ratio(&self, q_a: &Samples, q_b: &Samples) -> Result<f64> {
        let den = q_a.sup_distance(q_b)?;
        if den == 0.0 {
            return Err(Error::Domain("contraction probes must differ".into()));
        }
        let (a, b) = rayon::join(|| self.apply_q(q_a), || self.apply_q(q_b));
        Ok(a?.sup_distance(&b?)? / den)
    }
}

pub fn apply_q(problem: &ProblemSpec, m: &Measurement, q: &Samples) -> Result<Samples> {
    InverseSolver::new(problem, m)?.apply_q(q)
}

pub fn recover_q(problem: &ProblemSpec, m: &Measurement, s: &RecoverySettings) -> Result<(Samples, RecoveryReport)> {
    InverseSolver::new(problem, m)?.recover(s)
}

pub fn contraction_ratio(problem: &ProblemSpec, m: &Measurement, q_a: &Samples, q_b: &Samples) -> Result<f64> {
    InverseSolver::new(problem, m)?.contraction_ratio(q_a, q_b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseMode {
    /// `delta sin(3t)`
    SmoothSine,
    /// i.i.d. uniform in `[-delta, delta]`
    SeededUniform,
}

impl NoiseMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            NoiseMode::SmoothSine => "smooth-sine",
            NoiseMode::SeededUniform => "seeded-uniform",
        }
    }
}

impl std::str::FromStr for NoiseMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smooth-sine" => Ok(NoiseMode::SmoothSine),
            "seeded-uniform" => Ok(NoiseMode::SeededUniform),
            _ => Err(Error::Domain(format!(
                "unknown noise mode {s:?} (expected smooth-sine or seeded-uniform)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityRow {
    pub delta: f64,
    pub converged: bool,
    pub iterations: usize,
    /// `||q_rec - q_true||_C`
    pub q_error: f64,
    /// `||d^alpha (Phi[u_rec] - mu)||_C` against the unperturbed `mu`.
    pub measurement_defect: f64,
    /// `q_error / measurement_defect`
    pub ratio: f64,
    pub failure: Option<String>,
}

#[derive(Debug, Clone)]
pub struct StabilityConfig {
    pub deltas: Vec<f64>,
    pub mode: NoiseMode,
    pub seed: u64,
    pub refine: usize,
    pub mu_floor: f64,
    pub settings: RecoverySettings,
}

/// Perturbs a synthetic measurement by each `delta`, recovers `q` and tabulates
/// the error against the measurement defect.
pub fn stability_experiment(
    problem: &ProblemSpec,
    q_true: &Samples,
    cfg: &StabilityConfig,
) -> Result<Vec<StabilityRow>> {
    let synth = synthesize_measurement(problem, q_true, cfg.refine)?;
    let grid = problem.grid;
    let alpha = problem.alpha;
    let clean = synth.mu.clone();
    let slope = synth.mu_prime_0;
    // Shares the direct solver; only the measurement differs per case.
    let base = InverseSolver::new(problem, &prepare_measurement(clean.clone(), Some(slope), cfg.mu_floor, alpha)?)?;

    let rows = cfg
        .deltas
        .par_iter()
        .enumerate()
        .map(|(idx, &delta)| {
            let (noisy, noisy_slope) = match cfg.mode {
                NoiseMode::SmoothSine => (
                    Samples::from_vec_unchecked(
                        grid,
                        clean
                            .values()
                            .iter()
                            .zip(grid.nodes())
                            .map(|(m, t)| m + delta * (3.0 * t).sin())
                            .collect(),
                    ),
                    slope + 3.0 * delta,
                ),
                NoiseMode::SeededUniform => {
                    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(idx as u64));
                    let values = clean
                        .values()
                        .iter()
                        .map(|m| {
                            if delta > 0.0 {
                                m + rng.gen_range(-delta..=delta)
                            } else {
                                *m
                            }
                        })
                        .collect();
                    (Samples::from_vec_unchecked(grid, values), slope)
                }
            };
            let failed = |msg: String| StabilityRow {
                delta,
                converged: false,
                iterations: 0,
                q_error: f64::NAN,
                measurement_defect: f64::NAN,
                ratio: f64::NAN,
                failure: Some(msg),
            };
            let m = match prepare_measurement(noisy, Some(noisy_slope), cfg.mu_floor, alpha) {
                Ok(m) => m,
                Err(e) => return Ok(failed(e.to_string())),
            };
            let solver = InverseSolver {
                measurement: m,
                ..base.clone()
            };
            let (q_rec, report) = match solver.iterate(&cfg.settings) {
                Ok(r) => r,
                Err(e) => return Ok(failed(e.to_string())),
            };
            if let Some(reason) = report.divergence {
                let mut row = failed(reason);
                row.iterations = report.iterations;
                return Ok(row);
            }
            let q_error = q_rec.sup_distance(q_true)?;
            let trace = solver.trace(&q_rec)?;
            let diff = Samples::from_vec_unchecked(
                grid,
                trace.values().iter().zip(clean.values()).map(|(a, b)| a - b).collect(),
            );
            let measurement_defect = caputo_derivative_rl_form(&diff, alpha, Some(0.0))?.sup_norm();
            Ok(StabilityRow {
                delta,
                converged: report.converged,
                iterations: report.iterations,
                q_error,
                measurement_defect,
                ratio: q_error / measurement_defect,
                failure: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(rows)
}

/// Solves `y = y0 - (1/Gamma(alpha)) int_0^t (t-s)^(alpha-1) q(s) y(s) ds`
/// with the same implicit product-integration marching as the direct solver.
pub fn uniqueness_defect(q: &Samples, y0_data: &Samples, alpha: f64) -> Result<Samples> {
    q.check_same_grid(y0_data)?;
    let grid = *q.grid();
    let rule = ProductTrapezoid::new(alpha, &grid)?;
    let inv_gamma = 1.0 / gamma(alpha);
    let (qv, y0) = (q.values(), y0_data.values());
    let mut y = vec![0.0; grid.len()];
    let mut qy = vec![0.0; grid.len()];
    y[0] = y0[0];
    qy[0] = qv[0] * y[0];
    for i in 1..grid.len() {
        let mut acc = 0.0;
        for j in 0..i {
            acc += rule.weight(i, j) * qy[j];
        }
        let denom = 1.0 + inv_gamma * rule.weight(i, i) * qv[i];
        if denom.abs() < crate::direct::SINGULAR_STEP_TOL {
            return Err(Error::SingularStep { node: i });
        }
        y[i] = (y0[i] - inv_gamma * acc) / denom;
        qy[i] = qv[i] * y[i];
    }
    Samples::new(grid, y)
}
