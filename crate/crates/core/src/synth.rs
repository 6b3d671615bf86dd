//! Synthetic measurements: forward solve on a refined grid, then node selection.

use crate::direct::{DirectSolver, Solution};
use crate::error::{Error, Result};
use crate::fracops::Samples;
use crate::problem::ProblemSpec;
use crate::spectrum::dot;

#[derive(Debug, Clone)]
pub struct SyntheticMeasurement {
    /// `mu(t_i) = Phi[u(t_i)]` on the problem grid.
    pub mu: Samples,
    /// `mu'(0) = Phi[psi]`, known exactly from the data.
    pub mu_prime_0: f64,
    pub min_abs_mu: f64,
    pub refine: usize,
    /// Forward solution on the refined grid.
    pub fine_solution: Solution,
}

/// Upsamples `q_true` linearly by `refine`, solves there and downsamples
/// `mu = sum_k w_k u_k` back to the problem grid. `refine = 1` solves on the
/// problem grid itself.
pub fn synthesize_measurement(
    problem: &ProblemSpec,
    q_true: &Samples,
    refine: usize,
) -> Result<SyntheticMeasurement> {
    if refine == 0 {
        return Err(Error::Size("refinement factor must be >= 1".into()));
    }
    if *q_true.grid() != problem.grid {
        return Err(Error::GridMismatch("q_true is not sampled on the problem grid".into()));
    }
    let fine_grid = problem.grid.refined(refine)?;
    let fine_problem = problem.with_grid(fine_grid)?;
    let q_fine = q_true.upsample_linear(refine)?;
    let fine_solution = DirectSolver::new(&fine_problem)?.solve(&q_fine)?;
    let mu_fine = fine_solution.functional_trace(problem.functional.weights(), 0.0);
    let mu = mu_fine.downsample(refine)?;
    let min_abs_mu = mu.values().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    let mu_prime_0 = dot(problem.functional.weights(), problem.psi.coeffs());
    Ok(SyntheticMeasurement {
        mu,
        mu_prime_0,
        min_abs_mu,
        refine,
        fine_solution,
    })
}
