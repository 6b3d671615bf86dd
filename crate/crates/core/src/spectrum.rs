//! The operator `A` as data: its eigenvalues, fractional powers `A^sigma`,
//! the `D(A^sigma)` norms, and linear functionals given by their values on
//! the eigenvectors.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Spatial realisation of the eigenvectors, when one is known.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpatialEvaluator {
    /// `e_k(x) = sqrt(2/pi) sin(k x)` on `(0, pi)`.
    DirichletSine,
}

impl SpatialEvaluator {
    pub fn eval(&self, k: usize, x: f64) -> f64 {
        match self {
            SpatialEvaluator::DirichletSine => (2.0 / PI).sqrt() * (k as f64 * x).sin(),
        }
    }
}

/// Nondecreasing positive eigenvalues `lambda_1 <= ... <= lambda_K`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenBasis {
    lambdas: Vec<f64>,
    label: String,
    spatial: Option<SpatialEvaluator>,
}

pub const LAPLACIAN_LABEL: &str = "dirichlet-laplacian-(0,pi)";

impl EigenBasis {
    pub fn new(lambdas: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if lambdas.is_empty() {
            return Err(Error::Size("an eigenbasis needs at least one eigenvalue".into()));
        }
        for (i, w) in lambdas.windows(2).enumerate() {
            if w[1] < w[0] {
                return Err(Error::Domain(format!(
                    "eigenvalues must be nondecreasing: lambda_{} = {} < lambda_{} = {}",
                    i + 2,
                    w[1],
                    i + 1,
                    w[0]
                )));
            }
        }
        if !(lambdas[0] > 0.0) || lambdas.iter().any(|l| !l.is_finite()) {
            return Err(Error::Domain("eigenvalues must be finite and positive".into()));
        }
        Ok(Self {
            lambdas,
            label: label.into(),
            spatial: None,
        })
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn spatial(&self) -> Option<SpatialEvaluator> {
        self.spatial
    }

    /// Truncation dimension `K`.
    pub fn dim(&self) -> usize {
        self.lambdas.len()
    }

    /// `lambda_k^sigma` for every mode.
    pub fn powers(&self, sigma: f64) -> Vec<f64> {
        self.lambdas.iter().map(|l| l.powf(sigma)).collect()
    }
}

/// Dirichlet Laplacian on `(0, pi)`: `lambda_k = k^2`.
pub fn make_laplacian_basis(k: usize) -> Result<EigenBasis> {
    if k == 0 {
        return Err(Error::Size("K must be >= 1".into()));
    }
    let lambdas = (1..=k).map(|k| (k * k) as f64).collect();
    let mut basis = EigenBasis::new(lambdas, LAPLACIAN_LABEL)?;
    basis.spatial = Some(SpatialEvaluator::DirichletSine);
    Ok(basis)
}

/// Parses one eigenvalue per line; blank lines and `#` comments are skipped.
pub fn parse_basis(text: &str, name: &str) -> Result<EigenBasis> {
    let err = |line: usize, msg: String| Error::Parse {
        source_name: name.to_string(),
        line,
        msg,
    };
    let mut lambdas: Vec<f64> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let v: f64 = line
            .parse()
            .map_err(|_| err(line_no, format!("not a number: {line:?}")))?;
        if !(v > 0.0) || !v.is_finite() {
            return Err(err(line_no, format!("eigenvalue must be positive, got {v}")));
        }
        if let Some(&prev) = lambdas.last() {
            if v < prev {
                return Err(err(line_no, format!("eigenvalues must be nondecreasing: {v} < {prev}")));
            }
        }
        lambdas.push(v);
    }
    if lambdas.is_empty() {
        return Err(err(0, "no eigenvalues found".into()));
    }
    EigenBasis::new(lambdas, name)
}

pub fn load_basis(path: &Path) -> Result<EigenBasis> {
    let text = std::fs::read_to_string(path)?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    parse_basis(&text, &name)
}

/// Eigen-coefficients `h_k = (h, e_k)` of an element of H.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCoeffs {
    basis: Arc<EigenBasis>,
    coeffs: Vec<f64>,
}

impl SpectralCoeffs {
    pub fn new(basis: Arc<EigenBasis>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != basis.dim() {
            return Err(Error::Size(format!(
                "expected {} coefficients, got {}",
                basis.dim(),
                coeffs.len()
            )));
        }
        Ok(Self { basis, coeffs })
    }

    pub fn zeros(basis: Arc<EigenBasis>) -> Self {
        let coeffs = vec![0.0; basis.dim()];
        Self { basis, coeffs }
    }

    /// `h_k = scale * k^(-p)`.
    pub fn decay(basis: Arc<EigenBasis>, scale: f64, p: f64) -> Self {
        let coeffs = (1..=basis.dim()).map(|k| scale * (k as f64).powf(-p)).collect();
        Self { basis, coeffs }
    }

    pub fn basis(&self) -> &Arc<EigenBasis> {
        &self.basis
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    /// `self - other`, both on the same basis.
    pub fn difference(&self, other: &SpectralCoeffs) -> Result<SpectralCoeffs> {
        check_same_basis(&self.basis, &other.basis)?;
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect();
        Ok(SpectralCoeffs {
            basis: self.basis.clone(),
            coeffs,
        })
    }
}

pub(crate) fn check_same_basis(a: &EigenBasis, b: &EigenBasis) -> Result<()> {
    if a.lambdas != b.lambdas {
        return Err(Error::BasisMismatch(format!(
            "{} (K = {}) vs {} (K = {})",
            a.label,
            a.dim(),
            b.label,
            b.dim()
        )));
    }
    Ok(())
}

/// `A^sigma h`: coefficients `lambda_k^sigma h_k`.
pub fn frac_power_apply(h: &SpectralCoeffs, sigma: f64) -> SpectralCoeffs {
    let coeffs = h
        .basis
        .lambdas
        .iter()
        .zip(&h.coeffs)
        .map(|(l, c)| l.powf(sigma) * c)
        .collect();
    SpectralCoeffs {
        basis: h.basis.clone(),
        coeffs,
    }
}

/// `||h||_{D(A^sigma)} = (sum lambda_k^(2 sigma) h_k^2)^(1/2)`, summed in ascending `k`.
pub fn sigma_norm(h: &SpectralCoeffs, sigma: f64) -> f64 {
    sigma_norm_of(h.basis.lambdas(), &h.coeffs, sigma)
}

pub(crate) fn sigma_norm_of(lambdas: &[f64], coeffs: &[f64], sigma: f64) -> f64 {
    let mut acc = 0.0;
    for (l, c) in lambdas.iter().zip(coeffs) {
        let v = l.powf(sigma) * c;
        acc += v * v;
    }
    acc.sqrt()
}

/// Outcome of the finite-`K` decay check used as a proxy for `h in D(A^sigma)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailCheck {
    pub sigma: f64,
    pub total: f64,
    /// Share of `sum lambda_k^(2 sigma) h_k^2` carried by the last quarter of the modes.
    pub tail_fraction: f64,
    pub passed: bool,
}

pub const TAIL_FRACTION_LIMIT: f64 = 0.1;

pub fn tail_check(h: &SpectralCoeffs, sigma: f64) -> TailCheck {
    let k = h.dim();
    let start = k - (k / 4).max(1).min(k);
    let mut total = 0.0;
    let mut tail = 0.0;
    for (i, (l, c)) in h.basis.lambdas.iter().zip(&h.coeffs).enumerate() {
        let v = l.powf(2.0 * sigma) * c * c;
        total += v;
        if i >= start {
            tail += v;
        }
    }
    let tail_fraction = if total > 0.0 { tail / total } else { 0.0 };
    TailCheck {
        sigma,
        total,
        tail_fraction,
        // With K < 4 there is no meaningful tail to inspect.
        passed: k < 4 || tail_fraction <= TAIL_FRACTION_LIMIT,
    }
}

/// Linear functional `Phi` given by `w_k = Phi[e_k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Functional {
    basis: Arc<EigenBasis>,
    weights: Vec<f64>,
    declared_decay: Option<f64>,
    non_l2: bool,
}

impl Functional {
    pub fn new(basis: Arc<EigenBasis>, weights: Vec<f64>, declared_decay: Option<f64>) -> Result<Self> {
        if weights.len() != basis.dim() {
            return Err(Error::Size(format!(
                "expected {} functional weights, got {}",
                basis.dim(),
                weights.len()
            )));
        }
        if let Some(p) = declared_decay {
            if !(p > 0.5) {
                return Err(Error::Domain(format!(
                    "declared weight decay k^-p needs p > 1/2 for an l2 sequence, got {p}"
                )));
            }
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Domain("functional weights must be finite".into()));
        }
        Ok(Self {
            basis,
            weights,
            declared_decay,
            non_l2: false,
        })
    }

    /// `w_k = scale * k^(-p)` with the decay declared.
    pub fn power_decay(basis: Arc<EigenBasis>, scale: f64, p: f64) -> Result<Self> {
        let w = (1..=basis.dim()).map(|k| scale * (k as f64).powf(-p)).collect();
        Self::new(basis, w, Some(p))
    }

    /// Point evaluation `h -> h(x0)` for a basis with a spatial realisation.
    ///
    /// The weights `e_k(x0)` do not decay, so the infinite-dimensional functional
    /// is not given by an l2 sequence; the result is marked [`Functional::is_non_l2`].
    pub fn point_evaluation(basis: Arc<EigenBasis>, x0: f64) -> Result<Self> {
        let spatial = basis.spatial().ok_or_else(|| {
            Error::Domain(format!("basis {} has no spatial evaluator", basis.label()))
        })?;
        let weights = (1..=basis.dim()).map(|k| spatial.eval(k, x0)).collect();
        let mut f = Self::new(basis, weights, None)?;
        f.non_l2 = true;
        Ok(f)
    }

    pub fn basis(&self) -> &Arc<EigenBasis> {
        &self.basis
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn declared_decay(&self) -> Option<f64> {
        self.declared_decay
    }

    pub fn is_non_l2(&self) -> bool {
        self.non_l2
    }

    pub fn l2_norm(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum::<f64>().sqrt()
    }
}

/// Parses `k,w_k` lines (1-based `k`); an optional non-numeric header line and
/// `#` comments are skipped. Modes not listed get weight 0.
pub fn parse_functional(text: &str, name: &str, basis: Arc<EigenBasis>) -> Result<Functional> {
    let err = |line: usize, msg: String| Error::Parse {
        source_name: name.to_string(),
        line,
        msg,
    };
    let mut weights = vec![0.0; basis.dim()];
    let mut seen_data = false;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 2 {
            return Err(err(line_no, format!("expected two columns `k,w_k`, got {line:?}")));
        }
        let k = match cols[0].parse::<usize>() {
            Ok(k) => k,
            Err(_) if !seen_data && cols[1].parse::<f64>().is_err() => continue, // header
            Err(_) => return Err(err(line_no, format!("bad mode index {:?}", cols[0]))),
        };
        seen_data = true;
        let w: f64 = cols[1]
            .parse()
            .map_err(|_| err(line_no, format!("bad weight {:?}", cols[1])))?;
        if k == 0 || k > basis.dim() {
            return Err(err(line_no, format!("mode index {k} outside 1..={}", basis.dim())));
        }
        weights[k - 1] = w;
    }
    Functional::new(basis, weights, None)
}

pub fn load_functional(path: &Path, basis: Arc<EigenBasis>) -> Result<Functional> {
    let text = std::fs::read_to_string(path)?;
    parse_functional(&text, &path.display().to_string(), basis)
}

/// `Phi[h] = sum w_k h_k` in ascending `k`.
pub fn functional_apply(phi: &Functional, h: &SpectralCoeffs) -> Result<f64> {
    check_same_basis(&phi.basis, &h.basis)?;
    Ok(dot(&phi.weights, &h.coeffs))
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn basis(l: &[f64]) -> Arc<EigenBasis> {
        Arc::new(EigenBasis::new(l.to_vec(), "test").unwrap())
    }

    #[test]
    fn laplacian_eigenvalues() {
        assert_eq!(make_laplacian_basis(3).unwrap().lambdas(), &[1.0, 4.0, 9.0]);
        assert_eq!(make_laplacian_basis(1).unwrap().lambdas(), &[1.0]);
        let b = make_laplacian_basis(8).unwrap();
        assert_eq!(b.lambdas()[7], 64.0);
        assert_eq!(b.label(), LAPLACIAN_LABEL);
        assert!(b.spatial().is_some());
        assert!(make_laplacian_basis(0).is_err());
    }

    #[test]
    fn basis_file_parsing() {
        let b = parse_basis("1.0\n2.5\n2.5\n7.0", "f").unwrap();
        assert_eq!(b.lambdas(), &[1.0, 2.5, 2.5, 7.0]);
        assert_eq!(b.label(), "f");

        let b = parse_basis("# comment\n1\n\n4 # four\n", "f").unwrap();
        assert_eq!(b.lambdas(), &[1.0, 4.0]);

        match parse_basis("1.0\n0.5", "f") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        match parse_basis("-1", "f") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("{other:?}"),
        }
        match parse_basis("1\nabc", "f") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn fractional_powers() {
        let b = basis(&[1.0, 4.0, 9.0]);
        let h = SpectralCoeffs::new(b.clone(), vec![1.0, 1.0, 1.0]).unwrap();
        assert_eq!(frac_power_apply(&h, 0.5).coeffs(), &[1.0, 2.0, 3.0]);
        assert_eq!(frac_power_apply(&h, 0.0), h);
        let b2 = basis(&[1.0, 4.0]);
        let h = SpectralCoeffs::new(b2, vec![2.0, 3.0]).unwrap();
        assert_eq!(frac_power_apply(&h, -1.0).coeffs(), &[2.0, 0.75]);
    }

    #[test]
    fn norms() {
        let h = SpectralCoeffs::new(basis(&[1.0, 2.0, 3.0]), vec![1.0, 0.0, 0.0]).unwrap();
        assert_eq!(sigma_norm(&h, 3.7), 1.0);
        let b = basis(&[1.0, 4.0]);
        let h = SpectralCoeffs::new(b.clone(), vec![3.0, 4.0]).unwrap();
        assert_eq!(sigma_norm(&h, 0.0), 5.0);
        let h = SpectralCoeffs::new(b, vec![1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(sigma_norm(&h, 0.5), 5f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn functional_application() {
        let b = basis(&[1.0, 2.0, 3.0]);
        let phi = Functional::new(b.clone(), vec![1.0, 0.0, 0.0], None).unwrap();
        let h = SpectralCoeffs::new(b.clone(), vec![5.0, 7.0, 9.0]).unwrap();
        assert_eq!(functional_apply(&phi, &h).unwrap(), 5.0);
        let phi = Functional::new(b.clone(), vec![1.0, 0.5, 1.0 / 3.0], None).unwrap();
        let ones = SpectralCoeffs::new(b.clone(), vec![1.0; 3]).unwrap();
        assert_abs_diff_eq!(functional_apply(&phi, &ones).unwrap(), 11.0 / 6.0, epsilon = 1e-15);
        assert_eq!(functional_apply(&phi, &SpectralCoeffs::zeros(b)).unwrap(), 0.0);

        let other = SpectralCoeffs::new(basis(&[1.0, 2.0, 4.0]), vec![1.0; 3]).unwrap();
        assert!(matches!(functional_apply(&phi, &other), Err(Error::BasisMismatch(_))));
    }

    #[test]
    fn functional_file_and_decay_declaration() {
        let b = basis(&[1.0, 4.0, 9.0]);
        let f = parse_functional("k,w\n1,1.0\n3,0.25\n", "w.csv", b.clone()).unwrap();
        assert_eq!(f.weights(), &[1.0, 0.0, 0.25]);
        assert!(parse_functional("4,1.0\n", "w.csv", b.clone()).is_err());
        assert!(Functional::power_decay(b.clone(), 1.0, 0.5).is_err());
        assert!(Functional::power_decay(b, 1.0, 1.0).is_ok());
    }

    #[test]
    fn point_evaluation_is_flagged() {
        let b = Arc::new(make_laplacian_basis(16).unwrap());
        let f = Functional::point_evaluation(b, 1.0).unwrap();
        assert!(f.is_non_l2());
        assert!(Functional::point_evaluation(basis(&[1.0]), 1.0).is_err());
    }

    #[test]
    fn tail_check_flags_slow_decay() {
        let b = Arc::new(make_laplacian_basis(16).unwrap());
        let fast = SpectralCoeffs::decay(b.clone(), 1.0, 3.0);
        assert!(tail_check(&fast, 0.5).passed);
        let slow = SpectralCoeffs::decay(b, 1.0, 0.5);
        assert!(!tail_check(&slow, 1.0).passed);
    }

    fn coeff_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (1usize..12).prop_flat_map(|k| {
            (
                prop::collection::vec(0.0f64..5.0, k),
                prop::collection::vec(-10.0f64..10.0, k),
            )
        })
    }

    fn sorted_basis(incr: &[f64]) -> Arc<EigenBasis> {
        let mut acc = 1.0;
        let lambdas = incr
            .iter()
            .map(|d| {
                acc += d;
                acc
            })
            .collect();
        Arc::new(EigenBasis::new(lambdas, "prop").unwrap())
    }

    proptest! {
        #[test]
        fn power_composition((incr, c) in coeff_strategy(), s1 in -2.0f64..2.0, s2 in -2.0f64..2.0) {
            let h = SpectralCoeffs::new(sorted_basis(&incr), c).unwrap();
            let lhs = frac_power_apply(&frac_power_apply(&h, s1), s2);
            let rhs = frac_power_apply(&h, s1 + s2);
            for (a, b) in lhs.coeffs().iter().zip(rhs.coeffs()) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
        }

        #[test]
        fn norm_is_norm_of_power((incr, c) in coeff_strategy(), s in -1.5f64..1.5) {
            let h = SpectralCoeffs::new(sorted_basis(&incr), c).unwrap();
            let a = sigma_norm(&h, s);
            let b = sigma_norm(&frac_power_apply(&h, s), 0.0);
            prop_assert!((a - b).abs() <= 1e-13 * (1.0 + b));
        }

        #[test]
        fn monotone_embedding((incr, c) in coeff_strategy(), s2 in -1.0f64..1.0, ds in 0.0f64..1.0) {
            // lambda_1 >= 1 in sorted_basis
            let h = SpectralCoeffs::new(sorted_basis(&incr), c).unwrap();
            prop_assert!(sigma_norm(&h, s2) <= sigma_norm(&h, s2 + ds) * (1.0 + 1e-14));
        }

        #[test]
        fn holder_bound((incr, c) in coeff_strategy(), seed in prop::collection::vec(-3.0f64..3.0, 12)) {
            let b = sorted_basis(&incr);
            let w = seed[..b.dim()].to_vec();
            let phi = Functional::new(b.clone(), w, None).unwrap();
            let h = SpectralCoeffs::new(b, c).unwrap();
            let v = functional_apply(&phi, &h).unwrap();
            prop_assert!(v.abs() <= phi.l2_norm() * sigma_norm(&h, 0.0) + 1e-12);
        }
    }
}
