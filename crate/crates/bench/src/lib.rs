//! Fixtures shared by the benchmarks.

use fracwave_core::inverse::prepare_measurement;
use fracwave_core::synth::synthesize_measurement;
use fracwave_core::{reference_problem, Measurement, ProblemSpec, Samples};

/// Reference problem on `[0, 0.5]` with `steps` intervals, the potential
/// `1 + 0.5 sin 2t` and its synthetic measurement (refinement 2).
pub fn reference_case(steps: usize) -> (ProblemSpec, Samples, Measurement) {
    let p = reference_problem(0.5, steps).expect("reference problem");
    let q = Samples::from_fn(p.grid, |t| 1.0 + 0.5 * (2.0 * t).sin());
    let s = synthesize_measurement(&p, &q, 2).expect("synthesis");
    let m = prepare_measurement(s.mu, Some(s.mu_prime_0), 0.1, p.alpha).expect("measurement");
    (p, q, m)
}
