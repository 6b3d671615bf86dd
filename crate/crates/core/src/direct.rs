//! Direct problem, one eigenmode at a time.
//!
//! Because the potential depends on time only, each coefficient
//! `u_k(t) = (u(t), e_k)` solves the scalar Volterra equation
//!
//! ```text
//! u_k(t) = phi_k Z1(t) + psi_k Z2(t) + int_0^t Y_k(t-s) (f_k(s) - q(s) u_k(s)) ds
//! ```
//!
//! with `Y_k(t) = t^(alpha-1) E_{alpha,alpha}(-lambda_k^beta t^alpha)`,
//! `Z1 = E_{alpha,1}(-lambda_k^beta t^alpha)` and `Z2 = t E_{alpha,2}(-lambda_k^beta t^alpha)`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fracops::{caputo_derivative_rl_form, starting_weights, ProductTrapezoid, Samples, TimeGrid};
use crate::mlf::ml;
use crate::problem::ProblemSpec;
use crate::spectrum::sigma_norm_of;

/// Threshold on `|1 + w_ii q_i|` below which a step is rejected.
pub const SINGULAR_STEP_TOL: f64 = 1e-12;
pub const PICARD_MAX_ITER: usize = 50;
pub const PICARD_TOL: f64 = 1e-10;

/// `t^(alpha-1) E_{alpha,alpha}(-lambda_beta t^alpha)`
pub fn y_kernel(alpha: f64, lambda_beta: f64, t: f64) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    t.powf(alpha - 1.0) * ml(alpha, alpha, -lambda_beta * t.powf(alpha))
}

/// `E_{alpha,1}(-lambda_beta t^alpha)`
pub fn z1(alpha: f64, lambda_beta: f64, t: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    ml(alpha, 1.0, -lambda_beta * t.powf(alpha))
}

/// `t E_{alpha,2}(-lambda_beta t^alpha)`
pub fn z2(alpha: f64, lambda_beta: f64, t: f64) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    t * ml(alpha, 2.0, -lambda_beta * t.powf(alpha))
}

/// Product-integration weights for `int_0^{t_i} Y(t_i - s) v(s) ds`.
///
/// The factor `(t_i - s)^(alpha-1)` is integrated exactly against the linear
/// interpolant of `E_{alpha,alpha}(-lambda_beta (t_i - s)^alpha) v(s)`, so
/// `w_ij = rule(i, j) * E_{alpha,alpha}(-lambda_beta ((i-j) dt)^alpha)`.
#[derive(Debug, Clone)]
pub struct KernelWeights {
    alpha: f64,
    lambda_beta: f64,
    grid: TimeGrid,
    rule: ProductTrapezoid,
    ml_factor: Vec<f64>,
}

pub fn build_kernel_weights(alpha: f64, lambda_beta: f64, grid: &TimeGrid) -> Result<KernelWeights> {
    if !(alpha > 1.0 && alpha < 2.0) {
        return Err(Error::Domain(format!("alpha must lie in (1,2), got {alpha}")));
    }
    if !(lambda_beta >= 0.0 && lambda_beta.is_finite()) {
        return Err(Error::Domain(format!("lambda^beta must be finite and >= 0, got {lambda_beta}")));
    }
    let rule = ProductTrapezoid::new(alpha, grid)?;
    let dt = grid.dt();
    let ml_factor = (0..grid.len())
        .map(|m| ml(alpha, alpha, -lambda_beta * (m as f64 * dt).powf(alpha)))
        .collect();
    Ok(KernelWeights {
        alpha,
        lambda_beta,
        grid: *grid,
        rule,
        ml_factor,
    })
}

impl KernelWeights {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn lambda_beta(&self) -> f64 {
        self.lambda_beta
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// `w_ij` for `1 <= i`, `j <= i`.
    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.rule.weight(i, j) * self.ml_factor[i - j]
    }

    /// Row `i` of the lower-triangular weight array (empty for `i = 0`).
    pub fn row(&self, i: usize) -> Vec<f64> {
        if i == 0 {
            return Vec::new();
        }
        (0..=i).map(|j| self.weight(i, j)).collect()
    }

    /// `sum_j w_ij v_j` at every node; node 0 maps to 0.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for (i, o) in out.iter_mut().enumerate().skip(1) {
            let mut acc = 0.0;
            for (j, vj) in v.iter().enumerate().take(i + 1) {
                acc += self.weight(i, j) * vj;
            }
            *o = acc;
        }
        out
    }
}

/// Coefficient trajectory `u_k(t_i)` of one mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeTrajectory {
    /// 1-based mode index.
    pub k: usize,
    pub values: Samples,
}

/// All mode trajectories plus the assembled norms.
#[derive(Debug, Clone)]
pub struct Solution {
    pub grid: TimeGrid,
    pub beta: f64,
    pub lambdas: Vec<f64>,
    pub modes: Vec<ModeTrajectory>,
    /// `||u(t_i)||_{D(A^beta)}`
    pub node_norms: Vec<f64>,
    /// `||u(t_i)||_H`
    pub h_norms: Vec<f64>,
}

impl Solution {
    fn assemble(grid: TimeGrid, beta: f64, lambdas: Vec<f64>, modes: Vec<ModeTrajectory>) -> Self {
        let mut node_norms = Vec::with_capacity(grid.len());
        let mut h_norms = Vec::with_capacity(grid.len());
        let mut col = vec![0.0; modes.len()];
        for i in 0..grid.len() {
            for (c, m) in col.iter_mut().zip(&modes) {
                *c = m.values.values()[i];
            }
            node_norms.push(sigma_norm_of(&lambdas, &col, beta));
            h_norms.push(sigma_norm_of(&lambdas, &col, 0.0));
        }
        Self {
            grid,
            beta,
            lambdas,
            modes,
            node_norms,
            h_norms,
        }
    }

    /// `max_i ||u(t_i)||_{D(A^beta)}`
    pub fn sup_norm(&self) -> f64 {
        self.node_norms.iter().fold(0.0, |a, &b| a.max(b))
    }

    /// `u_k(t_i)` for all modes at node `i`.
    pub fn coeffs_at(&self, i: usize) -> Vec<f64> {
        self.modes.iter().map(|m| m.values.values()[i]).collect()
    }

    /// `Phi[A^sigma u](t_i) = sum_k lambda_k^sigma w_k u_k(t_i)`, ascending `k`.
    pub fn functional_trace(&self, weights: &[f64], sigma: f64) -> Samples {
        let scaled: Vec<f64> = self
            .lambdas
            .iter()
            .zip(weights)
            .map(|(l, w)| if sigma == 0.0 { *w } else { l.powf(sigma) * w })
            .collect();
        let values = (0..self.grid.len())
            .map(|i| {
                let mut acc = 0.0;
                for (s, m) in scaled.iter().zip(&self.modes) {
                    acc += s * m.values.values()[i];
                }
                acc
            })
            .collect();
        Samples::from_vec_unchecked(self.grid, values)
    }
}

/// Marches `u_i = (g_i - sum_{j<i} w_ij q_j u_j) / (1 + w_ii q_i)`.
fn march(kernel: &KernelWeights, g: &[f64], q: &[f64]) -> Result<Vec<f64>> {
    let n = g.len();
    let mut u = vec![0.0; n];
    u[0] = g[0];
    let mut qu = vec![0.0; n];
    qu[0] = q[0] * u[0];
    for i in 1..n {
        let mut acc = 0.0;
        for j in 0..i {
            acc += kernel.weight(i, j) * qu[j];
        }
        let denom = 1.0 + kernel.weight(i, i) * q[i];
        if denom.abs() < SINGULAR_STEP_TOL {
            return Err(Error::SingularStep { node: i });
        }
        u[i] = (g[i] - acc) / denom;
        qu[i] = q[i] * u[i];
    }
    Ok(u)
}

/// Whole-trajectory Picard iteration `u <- g - W(q u)`, kept as a cross-check.
fn march_picard(kernel: &KernelWeights, g: &[f64], q: &[f64]) -> Result<Vec<f64>> {
    let mut u = g.to_vec();
    for it in 1..=PICARD_MAX_ITER {
        let qu: Vec<f64> = q.iter().zip(&u).map(|(a, b)| a * b).collect();
        let conv = kernel.apply(&qu);
        let next: Vec<f64> = g.iter().zip(&conv).map(|(a, b)| a - b).collect();
        let change = next
            .iter()
            .zip(&u)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        u = next;
        if change <= PICARD_TOL {
            return Ok(u);
        }
        if !change.is_finite() {
            return Err(Error::Divergence {
                iteration: it,
                reason: "Picard cross-check produced non-finite values".into(),
            });
        }
    }
    Err(Error::Divergence {
        iteration: PICARD_MAX_ITER,
        reason: format!("Picard cross-check did not reach tolerance {PICARD_TOL}"),
    })
}

/// Per-mode data that does not depend on `q`: the kernel weights and
/// `g_k = phi_k Z1 + psi_k Z2 + W f_k`.
#[derive(Debug, Clone)]
struct ModeCache {
    kernel: KernelWeights,
    base: Vec<f64>,
}

/// Starting weights for the forcing convolution, exact for `s^(2-alpha)`:
/// the Caputo derivative of a smooth function carries that term at the origin,
/// and plain linear interpolation would cap the order at `3 - alpha`.
fn forcing_correction(alpha: f64, grid: &TimeGrid) -> Result<Vec<Vec<f64>>> {
    if grid.steps() < 3 {
        return Ok(vec![Vec::new(); grid.len()]);
    }
    starting_weights(alpha, grid.steps(), &[0.0, 1.0, 2.0 - alpha])
}

fn build_mode(
    problem: &ProblemSpec,
    k: usize,
    lambda_beta: f64,
    correction: &[Vec<f64>],
) -> Result<ModeCache> {
    let grid = problem.grid;
    let alpha = problem.alpha;
    let kernel = build_kernel_weights(alpha, lambda_beta, &grid)?;
    let phi = problem.phi.coeffs()[k - 1];
    let psi = problem.psi.coeffs()[k - 1];
    let mut base: Vec<f64> = grid
        .nodes()
        .map(|t| phi * z1(alpha, lambda_beta, t) + psi * z2(alpha, lambda_beta, t))
        .collect();
    if !problem.forcing.is_zero() {
        let f = problem.forcing.sample(k, &grid)?;
        let fv = f.values();
        let conv = kernel.apply(fv);
        let dt_alpha = grid.dt().powf(alpha);
        for (i, (b, c)) in base.iter_mut().zip(conv).enumerate() {
            let extra: f64 = correction[i]
                .iter()
                .enumerate()
                .map(|(l, w)| w * kernel.ml_factor[i - l - 1] * fv[l + 1])
                .sum();
            *b += c + dt_alpha * extra;
        }
    }
    Ok(ModeCache { kernel, base })
}

/// Marching scheme for the per-mode Volterra equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    #[default]
    Implicit,
    Picard,
}

/// Direct solver with the `q`-independent work done once.
#[derive(Debug, Clone)]
pub struct DirectSolver {
    problem: ProblemSpec,
    lambda_beta: Vec<f64>,
    modes: Vec<ModeCache>,
    scheme: Scheme,
}

impl DirectSolver {
    pub fn new(problem: &ProblemSpec) -> Result<Self> {
        problem.validate()?;
        let lambda_beta = problem.lambda_beta();
        let correction = forcing_correction(problem.alpha, &problem.grid)?;
        let modes = lambda_beta
            .par_iter()
            .enumerate()
            .map(|(idx, &lb)| {
                build_mode(problem, idx + 1, lb, &correction).map_err(|e| Error::Mode {
                    mode: idx + 1,
                    source: Box::new(e),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            problem: problem.clone(),
            lambda_beta,
            modes,
            scheme: Scheme::Implicit,
        })
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn problem(&self) -> &ProblemSpec {
        &self.problem
    }

    pub fn lambda_beta(&self) -> &[f64] {
        &self.lambda_beta
    }

    pub fn kernel(&self, k: usize) -> &KernelWeights {
        &self.modes[k - 1].kernel
    }

    fn check_q(&self, q: &Samples) -> Result<()> {
        if *q.grid() != self.problem.grid {
            return Err(Error::GridMismatch("q is not sampled on the problem grid".into()));
        }
        if q.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("q must be finite".into()));
        }
        Ok(())
    }

    pub fn solve_mode(&self, k: usize, q: &Samples) -> Result<ModeTrajectory> {
        self.check_q(q)?;
        self.solve_mode_unchecked(k, q)
    }

    fn solve_mode_unchecked(&self, k: usize, q: &Samples) -> Result<ModeTrajectory> {
        let cache = &self.modes[k - 1];
        let values = match self.scheme {
            Scheme::Implicit => march(&cache.kernel, &cache.base, q.values()),
            Scheme::Picard => march_picard(&cache.kernel, &cache.base, q.values()),
        }
        .map_err(|e| Error::Mode {
            mode: k,
            source: Box::new(e),
        })?;
        Ok(ModeTrajectory {
            k,
            values: Samples::from_vec_unchecked(self.problem.grid, values),
        })
    }

    pub fn solve(&self, q: &Samples) -> Result<Solution> {
        self.check_q(q)?;
        let modes = (1..=self.modes.len())
            .into_par_iter()
            .map(|k| self.solve_mode_unchecked(k, q))
            .collect::<Result<Vec<_>>>()?;
        Ok(Solution::assemble(
            self.problem.grid,
            self.problem.beta,
            self.problem.basis.lambdas().to_vec(),
            modes,
        ))
    }
}

/// Solves mode `k` (1-based) alone.
pub fn solve_mode(k: usize, problem: &ProblemSpec, q: &Samples) -> Result<ModeTrajectory> {
    problem.validate()?;
    if k == 0 || k > problem.dim() {
        return Err(Error::Size(format!("mode index {k} outside 1..={}", problem.dim())));
    }
    let lb = problem.basis.lambdas()[k - 1].powf(problem.beta);
    let cache = build_mode(problem, k, lb, &forcing_correction(problem.alpha, &problem.grid)?)?;
    if *q.grid() != problem.grid {
        return Err(Error::GridMismatch("q is not sampled on the problem grid".into()));
    }
    let values = march(&cache.kernel, &cache.base, q.values()).map_err(|e| Error::Mode {
        mode: k,
        source: Box::new(e),
    })?;
    Ok(ModeTrajectory {
        k,
        values: Samples::from_vec_unchecked(problem.grid, values),
    })
}

pub fn solve_direct(problem: &ProblemSpec, q: &Samples) -> Result<Solution> {
    DirectSolver::new(problem)?.solve(q)
}

/// Sup over interior nodes `2..=N-2` of `|d^alpha u_k + lambda_k^beta u_k + q u_k - f_k|`, per mode.
///
/// The derivative is taken in Riemann-Liouville form with the exact slope
/// `u_k'(0) = psi_k`, since the solutions carry `t^alpha` terms at the origin.
pub fn residual(problem: &ProblemSpec, q: &Samples, sol: &Solution) -> Result<Vec<f64>> {
    let n = problem.grid.steps();
    if n < 8 {
        return Err(Error::Size(format!("residual needs N >= 8, got {n}")));
    }
    let lb = problem.lambda_beta();
    sol.modes
        .iter()
        .map(|m| {
            let d = caputo_derivative_rl_form(&m.values, problem.alpha, Some(problem.psi.coeffs()[m.k - 1]))?;
            let f = problem.forcing.sample(m.k, &problem.grid)?;
            let u = m.values.values();
            let mut worst: f64 = 0.0;
            for i in 2..=n - 2 {
                let r = d.values()[i] + lb[m.k - 1] * u[i] + q.values()[i] * u[i] - f.values()[i];
                worst = worst.max(r.abs());
            }
            Ok(worst)
        })
        .collect()
}

/// Both sides of the data-continuity estimate and their ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuityGap {
    /// `||u - u_hat||_{C([0,T]; D(A^beta))}`
    pub solution_gap: f64,
    /// `||phi - phi_hat||_{2 beta} + ||psi - psi_hat||_{2 beta} + ||q - q_hat||_C + ||f - f_hat||_{C; beta}`
    pub data_gap: f64,
    pub ratio: f64,
}

pub fn data_continuity_gap(
    sol_a: &Solution,
    sol_b: &Solution,
    (prob_a, q_a): (&ProblemSpec, &Samples),
    (prob_b, q_b): (&ProblemSpec, &Samples),
) -> Result<ContinuityGap> {
    if sol_a.grid != sol_b.grid || prob_a.grid != prob_b.grid || sol_a.grid != prob_a.grid {
        return Err(Error::GridMismatch("continuity gap needs a common grid".into()));
    }
    crate::spectrum::check_same_basis(&prob_a.basis, &prob_b.basis)?;
    let lambdas = prob_a.basis.lambdas();
    let beta = prob_a.beta;

    let mut solution_gap: f64 = 0.0;
    for i in 0..sol_a.grid.len() {
        let d: Vec<f64> = sol_a
            .coeffs_at(i)
            .iter()
            .zip(sol_b.coeffs_at(i))
            .map(|(a, b)| a - b)
            .collect();
        solution_gap = solution_gap.max(sigma_norm_of(lambdas, &d, beta));
    }

    let dphi = prob_a.phi.difference(&prob_b.phi)?;
    let dpsi = prob_a.psi.difference(&prob_b.psi)?;
    let mut data_gap = sigma_norm_of(lambdas, dphi.coeffs(), 2.0 * beta)
        + sigma_norm_of(lambdas, dpsi.coeffs(), 2.0 * beta)
        + q_a.sup_distance(q_b)?;
    let fa = prob_a.forcing_samples()?;
    let fb = prob_b.forcing_samples()?;
    let mut f_gap: f64 = 0.0;
    for i in 0..prob_a.grid.len() {
        let d: Vec<f64> = fa.iter().zip(&fb).map(|(a, b)| a.values()[i] - b.values()[i]).collect();
        f_gap = f_gap.max(sigma_norm_of(lambdas, &d, beta));
    }
    data_gap += f_gap;

    let ratio = if data_gap > 0.0 { solution_gap / data_gap } else { 0.0 };
    Ok(ContinuityGap {
        solution_gap,
        data_gap,
        ratio,
    })
}
