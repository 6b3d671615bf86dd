//! Euler's Gamma function.
//!
//! The `f64` routines use the Lanczos approximation (g = 7, nine terms) with
//! the reflection formula for arguments below one half. The double-double
//! routines use Stirling's series after shifting the argument above 40 and
//! are only used where the Mittag-Leffler series needs more than 53 bits.

use std::f64::consts::PI;

use crate::dd::{DoubleDouble, HALF_LN_TWO_PI};

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEFFS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Tolerance of the integer test used to detect poles of Gamma.
pub const POLE_TOL: f64 = 1e-12;

/// `true` when `x` lies within [`POLE_TOL`] of 0, -1, -2, ...
pub fn is_pole(x: f64) -> bool {
    x <= POLE_TOL && (x - x.round()).abs() <= POLE_TOL
}

/// `sin(pi x)` with exact argument reduction modulo 2.
pub fn sin_pi(x: f64) -> f64 {
    let r = x - 2.0 * (x / 2.0).round();
    if r == 0.0 || r.abs() == 1.0 {
        return 0.0;
    }
    (PI * r).sin()
}

fn lanczos_sum(x: f64) -> f64 {
    let mut a = LANCZOS_COEFFS[0];
    for (i, c) in LANCZOS_COEFFS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    a
}

/// `Gamma(x)`; `NaN` at the poles.
pub fn gamma(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if is_pole(x) {
        return f64::NAN;
    }
    if x < 0.5 {
        return PI / (sin_pi(x) * gamma(1.0 - x));
    }
    if x > 171.7 {
        return f64::INFINITY;
    }
    if x.fract() == 0.0 && x <= 23.0 {
        // (x-1)! is exact in f64 up to 22!
        return (2..x as u64).fold(1.0, |acc, k| acc * k as f64);
    }
    let xm = x - 1.0;
    let t = xm + LANCZOS_G + 0.5;
    // t^(xm+0.5) split in two halves so the power does not overflow early.
    let half = t.powf(0.5 * (xm + 0.5));
    (2.0 * PI).sqrt() * half * (half * (-t).exp()) * lanczos_sum(xm)
}

/// `ln |Gamma(x)|` for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    if x < 0.5 {
        // Lanczos loses relative accuracy near the zero of ln Gamma at 1;
        // shift by the recurrence instead.
        return ln_gamma(x + 1.0) - x.ln();
    }
    let xm = x - 1.0;
    let t = xm + LANCZOS_G + 0.5;
    0.5 * (2.0 * PI).ln() + (xm + 0.5) * t.ln() - t + lanczos_sum(xm).ln()
}

/// `1/Gamma(x)`, which is entire: zero at the poles of Gamma.
pub fn recip_gamma(x: f64) -> f64 {
    if is_pole(x) {
        return 0.0;
    }
    if x > 171.0 {
        return (-ln_gamma(x)).exp();
    }
    if x < 0.5 {
        // 1/Gamma(x) = sin(pi x) Gamma(1-x) / pi
        let lg = ln_gamma(1.0 - x);
        return sin_pi(x) / PI * lg.exp();
    }
    1.0 / gamma(x)
}

/// Sign and log-magnitude of `1/Gamma(x)` in `f64`; `None` at the poles.
pub fn ln_abs_recip_gamma(x: f64) -> Option<(f64, f64)> {
    if is_pole(x) {
        return None;
    }
    if x > 0.0 {
        return Some((1.0, -ln_gamma(x)));
    }
    let s = sin_pi(x);
    if s == 0.0 {
        return None;
    }
    Some((s.signum(), (s.abs() / PI).ln() + ln_gamma(1.0 - x)))
}

// B_{2j} / (2j (2j-1)), j = 1..12, rounded to double-double.
const STIRLING: [DoubleDouble; 12] = [
    DoubleDouble { hi: 0.08333333333333333, lo: 4.625929269271485e-18 },
    DoubleDouble { hi: -0.002777777777777778, lo: 1.0601087908747154e-19 },
    DoubleDouble { hi: 0.0007936507936507937, lo: 6.883823317368282e-22 },
    DoubleDouble { hi: -0.0005952380952380953, lo: 5.36938218754726e-20 },
    DoubleDouble { hi: 0.0008417508417508417, lo: 3.6870174889237694e-20 },
    DoubleDouble { hi: -0.0019175269175269176, lo: 1.0675702776872475e-19 },
    DoubleDouble { hi: 0.00641025641025641, lo: 2.2240044563805217e-19 },
    DoubleDouble { hi: -0.029550653594771242, lo: 4.861760957508855e-19 },
    DoubleDouble { hi: 0.17964437236883057, lo: -6.401600482710946e-19 },
    DoubleDouble { hi: -1.3924322169059011, lo: 1.5837056989230303e-17 },
    DoubleDouble { hi: 13.402864044168393, lo: -6.154114101993966e-16 },
    DoubleDouble { hi: -156.84828462600203, lo: 9.391823141715389e-15 },
];

const STIRLING_SHIFT: f64 = 40.0;

/// `ln Gamma(x)` in double-double for `x > 0`.
pub fn ln_gamma_dd(x: DoubleDouble) -> DoubleDouble {
    debug_assert!(x.hi > 0.0);
    let mut y = x;
    let mut shift_product = DoubleDouble::ONE;
    while y.hi < STIRLING_SHIFT {
        shift_product *= y;
        y += DoubleDouble::ONE;
    }
    let inv = DoubleDouble::ONE / y;
    let inv2 = inv.sqr();
    let mut series = DoubleDouble::ZERO;
    for &c in STIRLING.iter().rev() {
        series = series * inv2 + c;
    }
    let series = series * inv;
    let half = DoubleDouble::from_f64(0.5);
    let lg = (y - half) * y.ln() - y + HALF_LN_TWO_PI + series;
    if shift_product == DoubleDouble::ONE {
        lg
    } else {
        lg - shift_product.ln()
    }
}

/// Sign and double-double log-magnitude of `1/Gamma(x)`; `None` at the poles.
///
/// Negative arguments are shifted up with `1/Gamma(x) = x (x+1) ... (x+m-1) / Gamma(x+m)`.
pub fn ln_abs_recip_gamma_dd(x: DoubleDouble) -> Option<(f64, DoubleDouble)> {
    if is_pole(x.to_f64()) {
        return None;
    }
    if x.hi > 0.0 {
        return Some((1.0, -ln_gamma_dd(x)));
    }
    let mut y = x;
    let mut product = DoubleDouble::ONE;
    while y.hi <= 0.0 {
        product *= y;
        y += DoubleDouble::ONE;
    }
    let sign = product.hi.signum();
    Some((sign, product.abs().ln() - ln_gamma_dd(y)))
}
