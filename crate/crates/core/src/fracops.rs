//! Fractional calculus on uniform time grids.
//!
//! All integrals are discretized by product integration: the weakly singular
//! factor `(t_n - s)^(nu-1)` is integrated exactly against the piecewise-linear
//! interpolant of the data. On a uniform grid the resulting weights depend on
//! `n - j` except for the first node.

use crate::error::{Error, Result};
use crate::gamma::{gamma, ln_gamma};

/// Uniform discretization `t_i = i * T / N`, `i = 0..=N`, of `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Domain(format!("horizon T must be positive, got {horizon}")));
        }
        if steps < 2 {
            return Err(Error::Size(format!("a time grid needs N >= 2 steps, got {steps}")));
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Number of nodes, `N + 1`.
    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// Node `t_i`. The last node is exactly `T`.
    pub fn node(&self, i: usize) -> f64 {
        if i == self.steps {
            self.horizon
        } else {
            i as f64 * self.dt()
        }
    }

    pub fn nodes(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        (0..self.len()).map(move |i| self.node(i))
    }

    /// Grid with `factor` times as many steps over the same horizon.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::Domain("refinement factor must be >= 1".into()));
        }
        Self::new(self.horizon, self.steps * factor)
    }
}

/// Real values sampled on every node of a [`TimeGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl Samples {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Size(format!(
                "expected {} samples for N = {}, got {}",
                grid.len(),
                grid.steps(),
                values.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub(crate) fn from_vec_unchecked(grid: TimeGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn from_fn(grid: TimeGrid, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.nodes().map(f).collect();
        Self { grid, values }
    }

    pub fn constant(grid: TimeGrid, c: f64) -> Self {
        Self::from_fn(grid, |_| c)
    }

    pub fn zeros(grid: TimeGrid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Sup norm over all nodes.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Sup norm of `self - other`.
    pub fn sup_distance(&self, other: &Samples) -> Result<f64> {
        self.check_same_grid(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    pub fn check_same_grid(&self, other: &Samples) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch(format!(
                "T = {}, N = {} vs T = {}, N = {}",
                self.grid.horizon(),
                self.grid.steps(),
                other.grid.horizon(),
                other.grid.steps()
            )));
        }
        Ok(())
    }

    /// Keep every `factor`-th node of a refined grid.
    pub fn downsample(&self, factor: usize) -> Result<Self> {
        if factor == 0 || self.grid.steps() % factor != 0 {
            return Err(Error::Size(format!(
                "cannot downsample N = {} by {factor}",
                self.grid.steps()
            )));
        }
        let grid = TimeGrid::new(self.grid.horizon(), self.grid.steps() / factor)?;
        let values = self.values.iter().step_by(factor).copied().collect();
        Samples::new(grid, values)
    }

    /// Piecewise-linear interpolation onto a grid refined by `factor`.
    pub fn upsample_linear(&self, factor: usize) -> Result<Self> {
        let fine = self.grid.refined(factor)?;
        let mut values = Vec::with_capacity(fine.len());
        for i in 0..self.grid.steps() {
            let (a, b) = (self.values[i], self.values[i + 1]);
            for r in 0..factor {
                let s = r as f64 / factor as f64;
                values.push(a + s * (b - a));
            }
        }
        values.push(*self.values.last().expect("grid has at least three nodes"));
        Samples::new(fine, values)
    }
}

/// Product-trapezoid weights for `int_0^{t_n} (t_n - s)^(nu-1) g(s) ds`
/// (no `1/Gamma(nu)` factor) with `g` interpolated linearly between nodes.
///
/// `int ~= scale * (start[n] g_0 + sum_{0<j<n} interior[n-j] g_j + g_n)`.
#[derive(Debug, Clone)]
pub struct ProductTrapezoid {
    nu: f64,
    scale: f64,
    start: Vec<f64>,
    interior: Vec<f64>,
}

// Above this index the second differences of m^(nu+1) are summed as a
// binomial series instead of being formed by subtraction.
const SERIES_INDEX: usize = 16;

/// `sum_{i>=1} 2 C(p, 2i) m^(-2i)`, i.e. `((m+1)^p - 2 m^p + (m-1)^p) / m^p`.
fn centered_second_difference_ratio(p: f64, m: f64) -> f64 {
    let x2 = 1.0 / (m * m);
    let mut coeff = 1.0; // C(p, 2i) built incrementally
    let mut pow = 1.0;
    let mut sum = 0.0;
    let mut k = 0.0;
    for _ in 0..40 {
        coeff *= (p - k) * (p - k - 1.0) / ((k + 1.0) * (k + 2.0));
        k += 2.0;
        pow *= x2;
        let term = 2.0 * coeff * pow;
        sum += term;
        if term.abs() <= 1e-18 * sum.abs() {
            break;
        }
    }
    sum
}

/// `sum_{i>=2} C(p, i) (-x)^i`, i.e. `(1-x)^p - 1 + p x`.
fn start_defect_ratio(p: f64, x: f64) -> f64 {
    let mut coeff = p;
    let mut pow = -x;
    let mut sum = 0.0;
    for i in 1..60 {
        let i = i as f64;
        coeff *= (p - i) / (i + 1.0);
        pow *= -x;
        let term = coeff * pow;
        sum += term;
        if term.abs() <= 1e-18 * sum.abs() {
            break;
        }
    }
    sum
}

impl ProductTrapezoid {
    pub fn new(nu: f64, grid: &TimeGrid) -> Result<Self> {
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(Error::Domain(format!("integral order must be positive, got {nu}")));
        }
        let n_steps = grid.steps();
        let p = nu + 1.0;
        let scale = grid.dt().powf(nu) / (nu * p);

        let mut interior = vec![0.0; n_steps + 1];
        for (m, w) in interior.iter_mut().enumerate().skip(1) {
            let mf = m as f64;
            *w = if m < SERIES_INDEX {
                (mf + 1.0).powf(p) - 2.0 * mf.powf(p) + (mf - 1.0).powf(p)
            } else {
                mf.powf(p) * centered_second_difference_ratio(p, mf)
            };
        }
        let mut start = vec![0.0; n_steps + 1];
        for (n, w) in start.iter_mut().enumerate().skip(1) {
            let nf = n as f64;
            *w = if n < SERIES_INDEX {
                (nf - 1.0).powf(p) - (nf - p) * nf.powf(nu)
            } else {
                nf.powf(p) * start_defect_ratio(p, 1.0 / nf)
            };
        }
        Ok(Self {
            nu,
            scale,
            start,
            interior,
        })
    }

    pub fn order(&self) -> f64 {
        self.nu
    }

    /// Weight of node `j` in the integral up to node `n` (`j <= n`, `n >= 1`).
    #[inline]
    pub fn weight(&self, n: usize, j: usize) -> f64 {
        debug_assert!(j <= n && n >= 1);
        let raw = if j == n {
            1.0
        } else if j == 0 {
            self.start[n]
        } else {
            self.interior[n - j]
        };
        self.scale * raw
    }

    /// Applies the rule at every node; node 0 maps to 0.
    pub fn apply(&self, g: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; g.len()];
        for n in 1..g.len() {
            let mut acc = self.start[n] * g[0];
            for j in 1..n {
                acc += self.interior[n - j] * g[j];
            }
            acc += g[n];
            out[n] = self.scale * acc;
        }
        out
    }
}

/// Riemann-Liouville integral `I^alpha h` by product integration.
pub fn rl_integral(h: &Samples, alpha: f64) -> Result<Samples> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Domain(format!("integral order must be positive, got {alpha}")));
    }
    let rule = ProductTrapezoid::new(alpha, h.grid())?;
    let g = 1.0 / gamma(alpha);
    let values = rule.apply(h.values()).into_iter().map(|v| v * g).collect();
    Samples::new(*h.grid(), values)
}

/// Riemann-Liouville integral with starting weights on nodes `1..=s` that make
/// the rule exact for `t^gamma`, `gamma` in `exponents` (`s = exponents.len()`).
///
/// Used for data that behave like `c t^gamma` near `t = 0` with non-integer
/// `gamma`, where plain linear interpolation loses accuracy on the first cells.
pub fn rl_integral_corrected(h: &Samples, alpha: f64, exponents: &[f64]) -> Result<Samples> {
    let grid = *h.grid();
    let s = exponents.len();
    if s == 0 {
        return rl_integral(h, alpha);
    }
    if grid.steps() < s {
        return Err(Error::Size(format!(
            "{s} starting weights need N >= {s}, got {}",
            grid.steps()
        )));
    }
    if exponents.iter().any(|&g| !(g > 0.0)) {
        return Err(Error::Domain("correction exponents must be positive".into()));
    }
    let rule = ProductTrapezoid::new(alpha, &grid)?;
    let inv_gamma = 1.0 / gamma(alpha);
    let mut values: Vec<f64> = rule.apply(h.values()).into_iter().map(|v| v * inv_gamma).collect();

    // Dimensionless form: nodes are 0, 1, ..., N and the rule scale is dt^alpha.
    let unit = TimeGrid::new(grid.steps() as f64, grid.steps())?;
    let unit_rule = ProductTrapezoid::new(alpha, &unit)?;
    let mut basis = vec![vec![0.0; s]; s];
    for (m, &gexp) in exponents.iter().enumerate() {
        for (l, b) in basis[m].iter_mut().enumerate() {
            *b = ((l + 1) as f64).powf(gexp);
        }
    }
    let exact_coeff: Vec<f64> = exponents
        .iter()
        .map(|&g| (ln_gamma(g + 1.0) - ln_gamma(g + 1.0 + alpha)).exp())
        .collect();
    let powers: Vec<Vec<f64>> = exponents
        .iter()
        .map(|&g| (0..grid.len()).map(|j| (j as f64).powf(g)).collect())
        .collect();

    let dt_alpha = grid.dt().powf(alpha);
    for n in 1..grid.len() {
        let mut rhs = vec![0.0; s];
        for (m, &g) in exponents.iter().enumerate() {
            let mut quad = unit_rule.start[n] * powers[m][0];
            for j in 1..n {
                quad += unit_rule.interior[n - j] * powers[m][j];
            }
            quad += powers[m][n];
            quad *= unit_rule.scale * inv_gamma;
            rhs[m] = exact_coeff[m] * (n as f64).powf(g + alpha) - quad;
        }
        let w = solve_small(&basis, &rhs)?;
        let corr: f64 = w.iter().enumerate().map(|(l, wl)| wl * h.values()[l + 1]).sum();
        values[n] += dt_alpha * corr;
    }
    Samples::new(grid, values)
}

/// Starting weights for the product-trapezoid rule of order `nu` on a unit
/// grid with `steps` cells: for every `n >= exponents.len()`, the weights
/// `c[n][l]` on nodes `l + 1` such that rule plus correction integrates
/// `s^gamma` exactly for each `gamma` in `exponents`. Rows below
/// `exponents.len()` are empty. Multiply by `dt^nu` on a real grid.
pub fn starting_weights(nu: f64, steps: usize, exponents: &[f64]) -> Result<Vec<Vec<f64>>> {
    let s = exponents.len();
    let unit = TimeGrid::new(steps as f64, steps)?;
    let rule = ProductTrapezoid::new(nu, &unit)?;
    let basis: Vec<Vec<f64>> = exponents
        .iter()
        .map(|&g| (1..=s).map(|l| (l as f64).powf(g)).collect())
        .collect();
    // B(nu, gamma + 1) = Gamma(nu) Gamma(gamma + 1) / Gamma(nu + gamma + 1)
    let beta_fn: Vec<f64> = exponents
        .iter()
        .map(|&g| (ln_gamma(nu) + ln_gamma(g + 1.0) - ln_gamma(nu + g + 1.0)).exp())
        .collect();
    let powers: Vec<Vec<f64>> = exponents
        .iter()
        .map(|&g| (0..=steps).map(|j| if g == 0.0 { 1.0 } else { (j as f64).powf(g) }).collect())
        .collect();
    let mut out = vec![Vec::new(); steps + 1];
    for (n, row) in out.iter_mut().enumerate().skip(s.max(1)) {
        let mut rhs = vec![0.0; s];
        for (m, &g) in exponents.iter().enumerate() {
            if g == 0.0 || g == 1.0 {
                continue; // the rule is already exact for these
            }
            let quad: f64 = (0..=n).map(|j| rule.weight(n, j) * powers[m][j]).sum();
            rhs[m] = beta_fn[m] * (n as f64).powf(nu + g) - quad;
        }
        *row = solve_small(&basis, &rhs)?;
    }
    Ok(out)
}

/// Gaussian elimination with partial pivoting for the tiny starting-weight systems.
fn solve_small(a: &[Vec<f64>], b: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .map(|(row, &r)| {
            let mut row = row.clone();
            row.push(r);
            row
        })
        .collect();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .expect("non-empty");
        if m[piv][col].abs() < 1e-300 {
            return Err(Error::Domain("correction exponents must be distinct".into()));
        }
        m.swap(col, piv);
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            for c in col..=n {
                m[r][c] -= f * m[col][c];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let mut acc = m[r][n];
        for c in r + 1..n {
            acc -= m[r][c] * x[c];
        }
        x[r] = acc / m[r][r];
    }
    Ok(x)
}

/// Second derivative by central differences, with second-order one-sided
/// four-point stencils at both ends.
pub fn second_derivative(values: &[f64], dt: f64) -> Result<Vec<f64>> {
    let n = values.len();
    if n < 4 {
        return Err(Error::Size(format!("second derivative needs >= 4 nodes, got {n}")));
    }
    let inv = 1.0 / (dt * dt);
    let mut d2 = vec![0.0; n];
    for i in 1..n - 1 {
        d2[i] = (values[i + 1] - 2.0 * values[i] + values[i - 1]) * inv;
    }
    d2[0] = (2.0 * values[0] - 5.0 * values[1] + 4.0 * values[2] - values[3]) * inv;
    let l = n - 1;
    d2[l] = (2.0 * values[l] - 5.0 * values[l - 1] + 4.0 * values[l - 2] - values[l - 3]) * inv;
    Ok(d2)
}

/// Second-order one-sided estimate of `h'(0)`.
pub fn initial_slope(h: &Samples) -> f64 {
    let v = h.values();
    (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h.grid().dt())
}

fn check_caputo_order(alpha: f64) -> Result<()> {
    if !(alpha > 1.0 && alpha < 2.0) {
        return Err(Error::Domain(format!("Caputo order must lie in (1,2), got {alpha}")));
    }
    Ok(())
}

/// Caputo derivative of order `alpha` in (1,2): `I^(2-alpha) h''`, with `h''`
/// from [`second_derivative`]. Node 0 maps to 0.
pub fn caputo_derivative(h: &Samples, alpha: f64) -> Result<Samples> {
    check_caputo_order(alpha)?;
    if h.grid().steps() < 4 {
        return Err(Error::Size(format!(
            "Caputo derivative needs N >= 4, got {}",
            h.grid().steps()
        )));
    }
    let d2 = second_derivative(h.values(), h.grid().dt())?;
    rl_integral(&Samples::new(*h.grid(), d2)?, 2.0 - alpha)
}

/// Caputo derivative through the Riemann-Liouville form
/// `D^2 I^(2-alpha) [h - h(0) - h'(0) t]`.
///
/// Suited to data with `t^alpha`-type terms at the origin (such as the
/// solutions of the diffusion-wave equation), whose second derivative is
/// unbounded at `t = 0`. The inner integral uses starting weights exact for
/// `t^alpha` and `t^(alpha+1)`; the outer second derivative uses central
/// differences with one-sided stencils at both ends, so node 0 carries the
/// extrapolated value rather than a forced zero. `slope` is `h'(0)`; when
/// `None` it is estimated by [`initial_slope`].
pub fn caputo_derivative_rl_form(h: &Samples, alpha: f64, slope: Option<f64>) -> Result<Samples> {
    check_caputo_order(alpha)?;
    let grid = *h.grid();
    if grid.steps() < 4 {
        return Err(Error::Size(format!(
            "Caputo derivative needs N >= 4, got {}",
            grid.steps()
        )));
    }
    let slope = slope.unwrap_or_else(|| initial_slope(h));
    let h0 = h.values()[0];
    let detrended = Samples::new(
        grid,
        h.values()
            .iter()
            .zip(grid.nodes())
            .map(|(&v, t)| v - h0 - slope * t)
            .collect(),
    )?;
    let inner = rl_integral_corrected(&detrended, 2.0 - alpha, &[alpha, alpha + 1.0])?;
    Samples::new(grid, second_derivative(inner.values(), grid.dt())?)
}

fn check_gronwall(alpha: f64, gamma_: f64) -> Result<f64> {
    if !(alpha > 0.0 && gamma_ > 0.0 && alpha + gamma_ > 1.0) {
        return Err(Error::Domain(format!(
            "Gronwall parameters need alpha > 0, gamma > 0, alpha + gamma > 1; got ({alpha}, {gamma_})"
        )));
    }
    Ok(alpha + gamma_ - 1.0)
}

/// Comparison function `Z_{alpha,gamma}(t) = sum c_m t^(m theta)`, `theta = alpha + gamma - 1`,
/// with `c_0 = 1` and `c_{m+1}/c_m = Gamma(m theta + gamma) / Gamma(m theta + alpha + gamma)`.
pub fn gronwall_z(alpha: f64, gamma_: f64, t: f64, tol: f64) -> Result<f64> {
    let theta = check_gronwall(alpha, gamma_)?;
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("Gronwall argument must be >= 0, got {t}")));
    }
    if t == 0.0 {
        return Ok(1.0);
    }
    let x = t.powf(theta);
    let mut term = 1.0;
    let mut sum = 1.0;
    for m in 0..100_000 {
        let a = m as f64 * theta + gamma_;
        let b = a + alpha;
        let ratio = if b < 170.0 {
            gamma(a) / gamma(b)
        } else {
            (ln_gamma(a) - ln_gamma(b)).exp()
        };
        let next = term * ratio * x;
        sum += next;
        if next <= tol * sum && next <= term {
            return Ok(sum);
        }
        if !sum.is_finite() {
            return Ok(f64::INFINITY);
        }
        term = next;
    }
    Ok(sum)
}

/// Nodewise `a(t_i) Z_{alpha,gamma}((b Gamma(alpha))^(1/theta) t_i)`.
pub fn gronwall_bound(a: &Samples, b: f64, alpha: f64, gamma_: f64) -> Result<Samples> {
    let theta = check_gronwall(alpha, gamma_)?;
    if !(b >= 0.0) {
        return Err(Error::Domain(format!("Gronwall constant b must be >= 0, got {b}")));
    }
    let scale = (b * gamma(alpha)).powf(1.0 / theta);
    let mut out = Vec::with_capacity(a.values().len());
    for (&ai, t) in a.values().iter().zip(a.grid().nodes()) {
        let z = gronwall_z(alpha, gamma_, scale * t, 1e-16)?;
        out.push(ai * z);
    }
    Samples::new(*a.grid(), out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn grid(t: f64, n: usize) -> TimeGrid {
        TimeGrid::new(t, n).unwrap()
    }

    #[test]
    fn grid_nodes() {
        let g = grid(1.0, 4);
        let nodes: Vec<f64> = g.nodes().collect();
        assert_eq!(nodes, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert!(TimeGrid::new(1.0, 1).is_err());
        assert!(TimeGrid::new(0.0, 8).is_err());
    }

    #[test]
    fn integral_of_zero_is_zero() {
        let h = Samples::zeros(grid(1.0, 32));
        for alpha in [0.3, 1.0, 1.5] {
            assert!(rl_integral(&h, alpha).unwrap().values().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn integral_of_one() {
        let g = grid(1.0, 64);
        let h = Samples::constant(g, 1.0);
        let out = rl_integral(&h, 1.5).unwrap();
        // t^alpha / Gamma(alpha + 1) at t = 1 is 1/Gamma(2.5)
        assert_abs_diff_eq!(out.values()[64], 0.752_252_778_063_675_1, epsilon = 1e-12);
        for (v, t) in out.values().iter().zip(g.nodes()) {
            assert_abs_diff_eq!(*v, t.powf(1.5) / gamma(2.5), epsilon = 1e-12);
        }
    }

    #[test]
    fn order_one_is_trapezoid() {
        let g = grid(2.0, 10);
        let h = Samples::from_fn(g, |t| t);
        let out = rl_integral(&h, 1.0).unwrap();
        assert_abs_diff_eq!(out.values()[10], 2.0, epsilon = 1e-13);
    }

    #[test]
    fn rejects_nonpositive_order() {
        let h = Samples::zeros(grid(1.0, 8));
        assert!(matches!(rl_integral(&h, 0.0), Err(Error::Domain(_))));
        assert!(matches!(rl_integral(&h, -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn large_index_weights_match_direct_formula() {
        // The series branch must agree with the direct formula where both are accurate.
        let p = 2.5;
        for m in [16.0, 20.0, 40.0] {
            let direct: f64 = (m + 1.0_f64).powf(p) - 2.0 * m.powf(p) + (m - 1.0_f64).powf(p);
            let series = m.powf(p) * centered_second_difference_ratio(p, m);
            assert!((direct - series).abs() < 1e-11 * direct.abs());
            let direct_start = (m - 1.0_f64).powf(p) - (m - p) * m.powf(p - 1.0);
            let series_start = m.powf(p) * start_defect_ratio(p, 1.0 / m);
            assert!((direct_start - series_start).abs() < 1e-10 * direct_start.abs());
        }
    }

    #[test]
    fn caputo_annihilates_constants_and_lines() {
        let g = grid(1.0, 64);
        for h in [Samples::constant(g, 3.7), Samples::from_fn(g, |t| 2.0 * t - 1.0)] {
            let d = caputo_derivative(&h, 1.5).unwrap();
            assert!(d.sup_norm() < 1e-10, "{}", d.sup_norm());
            let d = caputo_derivative_rl_form(&h, 1.5, None).unwrap();
            assert!(d.sup_norm() < 1e-10, "{}", d.sup_norm());
        }
    }

    #[test]
    fn caputo_of_square() {
        let g = grid(1.0, 256);
        let h = Samples::from_fn(g, |t| t * t);
        let d = caputo_derivative(&h, 1.5).unwrap();
        assert_abs_diff_eq!(d.values()[256], 2.256_758_334_191_025_1, epsilon = 2e-3);
        assert_eq!(d.values()[0], 0.0);
    }

    #[test]
    fn caputo_rejects_bad_order_and_small_grid() {
        let h = Samples::zeros(grid(1.0, 16));
        assert!(matches!(caputo_derivative(&h, 1.0), Err(Error::Domain(_))));
        assert!(matches!(caputo_derivative(&h, 2.0), Err(Error::Domain(_))));
        let small = Samples::zeros(grid(1.0, 3));
        assert!(matches!(caputo_derivative(&small, 1.5), Err(Error::Size(_))));
    }

    #[test]
    fn rl_form_handles_fractional_power_at_origin() {
        // d^alpha t^alpha = Gamma(alpha + 1), constant, including at t = 0.
        let alpha = 1.5;
        let g = grid(0.5, 256);
        let h = Samples::from_fn(g, |t| 1.0 + 0.3 * t + t.powf(alpha));
        let d = caputo_derivative_rl_form(&h, alpha, Some(0.3)).unwrap();
        let exact = gamma(alpha + 1.0);
        for v in d.values() {
            assert!((v - exact).abs() < 1e-6, "{v} vs {exact}");
        }
    }

    #[test]
    fn corrected_integral_is_exact_for_its_exponents() {
        let g = grid(1.0, 40);
        let nu = 0.5;
        for gexp in [1.5, 2.5] {
            let h = Samples::from_fn(g, |t| t.powf(gexp));
            let out = rl_integral_corrected(&h, nu, &[1.5, 2.5]).unwrap();
            let c = gamma(gexp + 1.0) / gamma(gexp + 1.0 + nu);
            for (v, t) in out.values().iter().zip(g.nodes()) {
                assert_abs_diff_eq!(*v, c * t.powf(gexp + nu), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn gronwall_z_values() {
        assert_eq!(gronwall_z(1.3, 0.4, 0.0, 1e-16).unwrap(), 1.0);
        assert_abs_diff_eq!(
            gronwall_z(1.0, 1.0, 1.0, 1e-16).unwrap(),
            std::f64::consts::E,
            epsilon = 1e-10
        );
        // 1 + Gamma(1)/Gamma(1.5) * 0.1 + 0.01 + ... (50-digit series: 1.12364335419920947)
        let z = gronwall_z(0.5, 1.0, 0.01, 1e-16).unwrap();
        assert_abs_diff_eq!(z, 1.123_643_354_199_209_5, epsilon = 1e-14);
        assert!((z - 1.0 - 0.112_837_916_709_551_26).abs() <= 0.01 + 1e-3);
        assert!(gronwall_z(0.2, 0.5, 1.0, 1e-16).is_err());
    }

    #[test]
    fn gronwall_bound_cases() {
        let g = grid(2.0, 20);
        let a = Samples::constant(g, 1.0);
        let same = gronwall_bound(&a, 0.0, 1.2, 0.7).unwrap();
        assert_eq!(same, a);
        let exp = gronwall_bound(&a, 1.0, 1.0, 1.0).unwrap();
        for (v, t) in exp.values().iter().zip(g.nodes()) {
            assert_abs_diff_eq!(*v, t.exp(), epsilon = 1e-10 * t.exp());
        }
        let zero = gronwall_bound(&Samples::zeros(g), 3.0, 1.5, 0.5).unwrap();
        assert_eq!(zero.sup_norm(), 0.0);
    }

    #[test]
    fn resampling() {
        let g = grid(1.0, 4);
        let s = Samples::from_fn(g, |t| 2.0 * t);
        let up = s.upsample_linear(2).unwrap();
        assert_eq!(up.values().len(), 9);
        assert_abs_diff_eq!(up.values()[3], 0.75, epsilon = 1e-15);
        assert_eq!(up.downsample(2).unwrap(), s);
        assert!(up.downsample(3).is_err());
    }
}
