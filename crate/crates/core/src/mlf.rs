//! Two-parameter Mittag-Leffler function `E_{alpha,beta}(z)` on the real line.
//!
//! Two evaluation branches meet at [`switch_radius`]:
//!
//! * the Taylor series `sum z^k / Gamma(alpha k + beta)`, with terms formed in
//!   double-double precision (log-magnitude plus sign) and accumulated in a
//!   double-double sum, so the cancellation on the negative axis (the largest
//!   term is about `exp(|z|^(1/alpha))`) stays well below `1e-10`;
//! * for `z -> -infinity`, the algebraic expansion
//!   `-sum_{k>=1} z^(-k) / Gamma(beta - alpha k)`, optimally truncated, plus for
//!   `alpha > 1` the decaying oscillatory pair
//!   `(2/alpha) Re[zeta^(1-beta) exp(zeta)]`, `zeta = |z|^(1/alpha) e^(i pi/alpha)`.
//!
//! The switch sits where `|z|^(1/alpha) = 30`: the series then loses at most
//! `e^30 ~ 1e13` to cancellation (well inside double-double headroom) and the
//! expansion's exponentially small remainder is below `e^-30`.

use std::f64::consts::PI;

use crate::dd::{DoubleDouble, DD_EPS};
use crate::error::{Error, Result};
use crate::gamma::{ln_abs_recip_gamma, ln_abs_recip_gamma_dd, recip_gamma};

/// `|z|^(1/alpha)` at which the dispatcher switches from the series to the expansion.
pub const SWITCH_EXPONENT: f64 = 30.0;

/// Smallest `|z|` accepted by [`mlf_asymptotic`] (capped by [`switch_radius`]).
pub const ASYMPTOTIC_MIN_RADIUS: f64 = 40.0;

/// Largest positive argument accepted by the dispatcher.
pub const POSITIVE_CAP: f64 = 10.0;

/// Default term budget of the series branch.
pub const DEFAULT_SERIES_TERMS: usize = 2000;

/// Default term budget of the asymptotic branch.
pub const DEFAULT_ASYMPTOTIC_TERMS: usize = 200;

// Below this value of |z|^(1/alpha) the series terms are formed in f64.
const FAST_EXPONENT: f64 = 4.0;

// Series truncation: term below this fraction of the partial sum.
const SERIES_REL_TOL: f64 = 1e-18;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MLParams {
    pub alpha: f64,
    pub beta: f64,
}

impl MLParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Domain(format!("Mittag-Leffler alpha must be positive, got {alpha}")));
        }
        if !beta.is_finite() {
            return Err(Error::Domain(format!("Mittag-Leffler beta must be finite, got {beta}")));
        }
        Ok(Self { alpha, beta })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Series,
    Asymptotic,
    /// `alpha = 2`, `beta` in {1, 2}: cos/cosh and sin/sinh forms.
    ClosedForm,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::Series => "series",
            Regime::Asymptotic => "asymptotic",
            Regime::ClosedForm => "closed-form",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MLEvaluation {
    pub value: f64,
    pub regime: Regime,
    pub abs_error_estimate: f64,
}

/// `|z|` at which [`mlf`] leaves the series: `30^alpha`.
pub fn switch_radius(alpha: f64) -> f64 {
    SWITCH_EXPONENT.powf(alpha)
}

fn asymptotic_min_radius(alpha: f64) -> f64 {
    ASYMPTOTIC_MIN_RADIUS.min(switch_radius(alpha))
}

/// Taylor series with double-double terms and accumulation.
pub fn mlf_series(params: MLParams, z: f64, max_terms: usize) -> Result<MLEvaluation> {
    let MLParams { alpha, beta } = params;
    if !(alpha > 0.0) {
        return Err(Error::Domain(format!("alpha must be positive, got {alpha}")));
    }
    if max_terms == 0 {
        return Err(Error::Domain("max_terms must be >= 1".into()));
    }
    if !z.is_finite() {
        return Err(Error::Domain(format!("argument must be finite, got {z}")));
    }
    if z == 0.0 {
        return Ok(MLEvaluation {
            value: recip_gamma(beta),
            regime: Regime::Series,
            abs_error_estimate: 0.0,
        });
    }
    let peak_exponent = z.abs().powf(1.0 / alpha);
    // exp(peak_exponent) bounds the largest term; past ~700 even the terms overflow.
    if peak_exponent > 700.0 {
        return Err(Error::NonConvergent { terms: 0, z });
    }
    let peak_index = peak_exponent / alpha;
    if peak_exponent <= FAST_EXPONENT {
        series_fast(alpha, beta, z, max_terms, peak_index)
    } else {
        series_dd(alpha, beta, z, max_terms, peak_index)
    }
}

struct SeriesState {
    sum: DoubleDouble,
    max_partial: f64,
    max_term: f64,
    prev_mag: f64,
}

impl SeriesState {
    fn new() -> Self {
        Self {
            sum: DoubleDouble::ZERO,
            max_partial: 0.0,
            max_term: 0.0,
            prev_mag: f64::INFINITY,
        }
    }

    fn push(&mut self, term: DoubleDouble) {
        self.sum += term;
        self.max_partial = self.max_partial.max(self.sum.hi.abs());
        self.max_term = self.max_term.max(term.hi.abs());
    }
}

fn finish(
    state: &SeriesState,
    omitted: f64,
    term_rel_precision: f64,
    terms_used: usize,
    z: f64,
    converged: bool,
) -> Result<MLEvaluation> {
    if !converged && !(omitted < state.prev_mag) {
        return Err(Error::NonConvergent { terms: terms_used, z });
    }
    let value = state.sum.to_f64();
    let err = omitted
        + state.max_partial * DD_EPS
        + state.max_term * term_rel_precision
        + value.abs() * f64::EPSILON * 0.5;
    Ok(MLEvaluation {
        value,
        regime: Regime::Series,
        abs_error_estimate: err,
    })
}

fn series_fast(alpha: f64, beta: f64, z: f64, max_terms: usize, peak_index: f64) -> Result<MLEvaluation> {
    let mut st = SeriesState::new();
    let mut zk = 1.0;
    for k in 0..max_terms {
        let term = zk * recip_gamma(alpha * k as f64 + beta);
        let mag = term.abs();
        if k as f64 > peak_index + 1.0 && mag <= SERIES_REL_TOL * st.sum.hi.abs() && mag <= st.prev_mag {
            return finish(&st, mag, 8.0 * f64::EPSILON * (k as f64 + 1.0), k, z, true);
        }
        st.push(DoubleDouble::from_f64(term));
        st.prev_mag = mag;
        zk *= z;
    }
    let omitted = (zk * recip_gamma(alpha * max_terms as f64 + beta)).abs();
    finish(&st, omitted, 8.0 * f64::EPSILON * max_terms as f64, max_terms, z, false)
}

fn series_dd(alpha: f64, beta: f64, z: f64, max_terms: usize, peak_index: f64) -> Result<MLEvaluation> {
    let ln_abs_z = DoubleDouble::from_f64(z.abs()).ln();
    let negative = z < 0.0;
    let dd_term = |k: usize| -> DoubleDouble {
        let arg = DoubleDouble::from_product(alpha, k as f64) + DoubleDouble::from_f64(beta);
        match ln_abs_recip_gamma_dd(arg) {
            None => DoubleDouble::ZERO,
            Some((sign, ln_mag)) => {
                let parity = if negative && k % 2 == 1 { -1.0 } else { 1.0 };
                let mag = (ln_abs_z * DoubleDouble::from_f64(k as f64) + ln_mag).exp();
                if sign * parity < 0.0 {
                    -mag
                } else {
                    mag
                }
            }
        }
    };
    let mut st = SeriesState::new();
    for k in 0..max_terms {
        let term = dd_term(k);
        let mag = term.hi.abs();
        if k as f64 > peak_index + 1.0 && mag <= SERIES_REL_TOL * st.sum.hi.abs() && mag <= st.prev_mag {
            return finish(&st, mag, 1e-28, k, z, true);
        }
        st.push(term);
        st.prev_mag = mag;
    }
    let omitted = dd_term(max_terms).hi.abs();
    finish(&st, omitted, 1e-28, max_terms, z, false)
}

/// Asymptotic expansion for `z -> -infinity`, `0 < alpha < 2`.
///
/// The algebraic sum stops at the smallest term of its envelope
/// `|z|^(-k) Gamma(alpha k - beta + 1) / pi`; that envelope value is returned
/// as the error estimate. Terms where `beta - alpha k` is a pole of Gamma
/// contribute zero.
pub fn mlf_asymptotic(params: MLParams, z: f64, max_terms: usize) -> Result<MLEvaluation> {
    let MLParams { alpha, beta } = params;
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(Error::Domain(format!(
            "asymptotic branch requires 0 < alpha < 2, got {alpha}"
        )));
    }
    if !(z < 0.0) || !z.is_finite() {
        return Err(Error::Domain(format!("asymptotic branch requires finite z < 0, got {z}")));
    }
    let r_min = asymptotic_min_radius(alpha);
    if z.abs() < r_min {
        return Err(Error::Domain(format!(
            "|z| = {} is below the asymptotic radius {r_min}",
            z.abs()
        )));
    }
    let (value, err) = asymptotic_core(alpha, beta, z, max_terms.max(1));
    Ok(MLEvaluation {
        value,
        regime: Regime::Asymptotic,
        abs_error_estimate: err,
    })
}

fn asymptotic_core(alpha: f64, beta: f64, z: f64, max_terms: usize) -> (f64, f64) {
    let x = -z;
    let ln_x = x.ln();
    // ln of the envelope |z|^-k Gamma(alpha k - beta + 1) / pi
    let envelope = |k: usize| -> f64 {
        let a = alpha * k as f64 - beta + 1.0;
        let lg = if a > 0.0 {
            crate::gamma::ln_gamma(a)
        } else {
            0.0
        };
        lg - k as f64 * ln_x - PI.ln()
    };

    // Term k is the first omitted one once the envelope turns upward after it.
    let mut sum = 0.0;
    let mut err = envelope(max_terms + 1).exp();
    for k in 1..=max_terms {
        let env = envelope(k);
        if envelope(k + 1) > env {
            err = env.exp();
            break;
        }
        if let Some((sign, ln_mag)) = ln_abs_recip_gamma(beta - alpha * k as f64) {
            // -z^-k / Gamma(beta - alpha k) with z^-k = (-1)^k x^-k
            let parity = if k % 2 == 1 { -1.0 } else { 1.0 };
            sum -= parity * sign * (ln_mag - k as f64 * ln_x).exp();
        }
    }

    let mut exp_part = 0.0;
    if alpha > 1.0 {
        let rho = x.powf(1.0 / alpha);
        let theta = PI / alpha;
        let decay = rho * theta.cos();
        if decay > -745.0 {
            exp_part = 2.0 / alpha
                * rho.powf(1.0 - beta)
                * decay.exp()
                * ((1.0 - beta) * theta + rho * theta.sin()).cos();
        }
    }
    (sum + exp_part, err)
}

fn closed_form_alpha2(beta: f64, z: f64) -> Option<f64> {
    if beta == 1.0 {
        Some(if z < 0.0 {
            (-z).sqrt().cos()
        } else {
            z.sqrt().cosh()
        })
    } else if beta == 2.0 {
        if z == 0.0 {
            return Some(1.0);
        }
        Some(if z < 0.0 {
            let x = (-z).sqrt();
            x.sin() / x
        } else {
            let x = z.sqrt();
            x.sinh() / x
        })
    } else {
        None
    }
}

/// Dispatcher returning the branch used and its error estimate.
pub fn mlf_eval(params: MLParams, z: f64) -> Result<MLEvaluation> {
    let MLParams { alpha, beta } = params;
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(Error::Domain(format!("alpha must lie in (0, 2], got {alpha}")));
    }
    if !beta.is_finite() {
        return Err(Error::Domain(format!("beta must be finite, got {beta}")));
    }
    if !z.is_finite() || z > POSITIVE_CAP {
        return Err(Error::Domain(format!(
            "argument must be finite and <= {POSITIVE_CAP}, got {z}"
        )));
    }
    if z == 0.0 {
        return Ok(MLEvaluation {
            value: recip_gamma(beta),
            regime: Regime::Series,
            abs_error_estimate: 0.0,
        });
    }
    if alpha == 2.0 {
        if let Some(v) = closed_form_alpha2(beta, z) {
            return Ok(MLEvaluation {
                value: v,
                regime: Regime::ClosedForm,
                abs_error_estimate: 2.0 * f64::EPSILON * (1.0 + v.abs()),
            });
        }
    }
    if z > 0.0 || z.abs() < switch_radius(alpha) {
        return mlf_series(params, z, DEFAULT_SERIES_TERMS);
    }
    if alpha < 2.0 {
        mlf_asymptotic(params, z, DEFAULT_ASYMPTOTIC_TERMS)
    } else {
        Err(Error::Domain(format!(
            "alpha = 2 with |z| >= {} is only supported for beta in {{1, 2}}",
            switch_radius(alpha)
        )))
    }
}

/// `E_{alpha,beta}(z)` for `alpha` in (0, 2] and `z <= 10`.
pub fn mlf(params: MLParams, z: f64) -> Result<f64> {
    mlf_eval(params, z).map(|e| e.value)
}

/// Infallible evaluation for parameters already validated by the caller
/// (`0 < alpha < 2` or `alpha = 2` with `beta` in {1, 2}, `z <= 0`).
pub(crate) fn ml(alpha: f64, beta: f64, z: f64) -> f64 {
    match mlf_eval(MLParams { alpha, beta }, z) {
        Ok(e) => e.value,
        Err(e) => panic!("Mittag-Leffler evaluation outside validated domain: {e}"),
    }
}
