//! The data of a direct problem: orders, eigenbasis, initial data, forcing,
//! time grid and the observation functional.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fracops::{Samples, TimeGrid};
use crate::spectrum::{check_same_basis, dot, tail_check, EigenBasis, Functional, SpectralCoeffs};

/// Time dependence shared by every mode of a separable forcing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeProfile {
    Constant,
    /// `e^(-rate t)`
    ExpDecay { rate: f64 },
    /// `t^power`
    Monomial { power: f64 },
}

impl TimeProfile {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            TimeProfile::Constant => 1.0,
            TimeProfile::ExpDecay { rate } => (-rate * t).exp(),
            TimeProfile::Monomial { power } => {
                if power == 0.0 {
                    1.0
                } else {
                    t.powf(power)
                }
            }
        }
    }
}

pub type ModeFn = Arc<dyn Fn(usize, f64) -> f64 + Send + Sync>;

/// Right-hand side `f(t)` through its mode coefficients `f_k(t)`.
#[derive(Clone)]
pub enum Forcing {
    Zero,
    /// `f_k(t) = coeffs[k] * profile(t)`
    Separable {
        profile: TimeProfile,
        coeffs: Vec<f64>,
    },
    /// Per-mode samples on one fixed grid.
    Sampled(Vec<Samples>),
    /// `f_k(t) = func(k, t)` with 1-based `k`.
    Custom(ModeFn),
}

impl fmt::Debug for Forcing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Forcing::Zero => write!(f, "Zero"),
            Forcing::Separable { profile, coeffs } => f
                .debug_struct("Separable")
                .field("profile", profile)
                .field("coeffs", coeffs)
                .finish(),
            Forcing::Sampled(s) => write!(f, "Sampled({} modes)", s.len()),
            Forcing::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl Forcing {
    /// Samples of `f_k` (1-based `k`) on `grid`.
    pub fn sample(&self, k: usize, grid: &TimeGrid) -> Result<Samples> {
        match self {
            Forcing::Zero => Ok(Samples::zeros(*grid)),
            Forcing::Separable { profile, coeffs } => {
                let c = coeffs[k - 1];
                Ok(Samples::from_fn(*grid, |t| c * profile.eval(t)))
            }
            Forcing::Sampled(modes) => {
                let s = &modes[k - 1];
                if s.grid() != grid {
                    return Err(Error::GridMismatch(
                        "sampled forcing cannot be evaluated on a different grid".into(),
                    ));
                }
                Ok(s.clone())
            }
            Forcing::Custom(func) => Ok(Samples::from_fn(*grid, |t| func(k, t))),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Forcing::Zero)
    }

    /// Number of modes the forcing describes, when it fixes one.
    fn declared_modes(&self) -> Option<usize> {
        match self {
            Forcing::Separable { coeffs, .. } => Some(coeffs.len()),
            Forcing::Sampled(m) => Some(m.len()),
            _ => None,
        }
    }

    /// Multiply every mode by `s`.
    pub fn scaled(&self, s: f64) -> Forcing {
        match self {
            Forcing::Zero => Forcing::Zero,
            Forcing::Separable { profile, coeffs } => Forcing::Separable {
                profile: *profile,
                coeffs: coeffs.iter().map(|c| c * s).collect(),
            },
            Forcing::Sampled(m) => Forcing::Sampled(m.iter().map(|x| x.map(|v| v * s)).collect()),
            Forcing::Custom(func) => {
                let func = func.clone();
                Forcing::Custom(Arc::new(move |k, t| s * func(k, t)))
            }
        }
    }
}

/// Everything that defines one instance of the direct problem.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub alpha: f64,
    pub beta: f64,
    pub basis: Arc<EigenBasis>,
    pub phi: SpectralCoeffs,
    pub psi: SpectralCoeffs,
    pub forcing: Forcing,
    pub grid: TimeGrid,
    pub functional: Functional,
}

impl ProblemSpec {
    /// Checks orders, dimensions and bases. Decay-quality findings are not
    /// errors; see [`ProblemSpec::data_warnings`].
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 1.0 && self.alpha < 2.0) {
            return Err(Error::Domain(format!("alpha must lie in (1,2), got {}", self.alpha)));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::Domain(format!("beta must lie in (0,1), got {}", self.beta)));
        }
        check_same_basis(&self.basis, self.phi.basis())?;
        check_same_basis(&self.basis, self.psi.basis())?;
        check_same_basis(&self.basis, self.functional.basis())?;
        if let Some(m) = self.forcing.declared_modes() {
            if m != self.basis.dim() {
                return Err(Error::Size(format!(
                    "forcing has {m} modes, basis has {}",
                    self.basis.dim()
                )));
            }
        }
        if let Forcing::Sampled(modes) = &self.forcing {
            if modes.iter().any(|s| *s.grid() != self.grid) {
                return Err(Error::GridMismatch("sampled forcing is not on the problem grid".into()));
            }
        }
        Ok(())
    }

    /// Finite-`K` decay checks: `phi`, `psi` against `D(A^(2 beta))` and the
    /// forcing against `D(A^beta)` at every node.
    pub fn data_warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, h) in [("phi", &self.phi), ("psi", &self.psi)] {
            let c = tail_check(h, 2.0 * self.beta);
            if !c.passed {
                out.push(format!(
                    "{name}: last quarter of modes carries {:.1}% of the D(A^{}) norm",
                    100.0 * c.tail_fraction,
                    2.0 * self.beta
                ));
            }
        }
        if !self.forcing.is_zero() {
            if let Ok(modes) = self.forcing_samples() {
                let mut worst: f64 = 0.0;
                for i in 0..self.grid.len() {
                    let coeffs: Vec<f64> = modes.iter().map(|m| m.values()[i]).collect();
                    if let Ok(h) = SpectralCoeffs::new(self.basis.clone(), coeffs) {
                        let c = tail_check(&h, self.beta);
                        if !c.passed {
                            worst = worst.max(c.tail_fraction);
                        }
                    }
                }
                if worst > 0.0 {
                    out.push(format!(
                        "forcing: last quarter of modes carries up to {:.1}% of the D(A^{}) norm",
                        100.0 * worst,
                        self.beta
                    ));
                }
            }
        }
        if self.functional.is_non_l2() {
            out.push("functional: weights are not an l2 sequence (point evaluation)".into());
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    /// `lambda_k^beta`
    pub fn lambda_beta(&self) -> Vec<f64> {
        self.basis.powers(self.beta)
    }

    pub fn forcing_samples(&self) -> Result<Vec<Samples>> {
        (1..=self.dim()).map(|k| self.forcing.sample(k, &self.grid)).collect()
    }

    /// `Phi[f](t_i)`
    pub fn functional_of_forcing(&self) -> Result<Samples> {
        let modes = self.forcing_samples()?;
        let w = self.functional.weights();
        let values = (0..self.grid.len())
            .map(|i| {
                let col: Vec<f64> = modes.iter().map(|m| m.values()[i]).collect();
                dot(w, &col)
            })
            .collect();
        Samples::new(self.grid, values)
    }

    /// Same problem on another grid (the forcing must be grid-independent).
    pub fn with_grid(&self, grid: TimeGrid) -> Result<ProblemSpec> {
        if matches!(self.forcing, Forcing::Sampled(_)) && grid != self.grid {
            return Err(Error::GridMismatch(
                "a sampled forcing cannot be moved to another grid".into(),
            ));
        }
        Ok(ProblemSpec {
            grid,
            ..self.clone()
        })
    }
}

/// The standard test configuration: Dirichlet Laplacian with `K = 8`,
/// `alpha = 1.5`, `beta = 0.5`, `phi_k = psi_k = k^-3`, `f_k = e^-t k^-3`,
/// `w_k = 1/k`.
pub fn reference_problem(horizon: f64, steps: usize) -> Result<ProblemSpec> {
    let basis = Arc::new(crate::spectrum::make_laplacian_basis(8)?);
    let cubic = SpectralCoeffs::decay(basis.clone(), 1.0, 3.0);
    Ok(ProblemSpec {
        alpha: 1.5,
        beta: 0.5,
        phi: cubic.clone(),
        forcing: Forcing::Separable {
            profile: TimeProfile::ExpDecay { rate: 1.0 },
            coeffs: cubic.coeffs().to_vec(),
        },
        psi: cubic,
        grid: TimeGrid::new(horizon, steps)?,
        functional: Functional::power_decay(basis.clone(), 1.0, 1.0)?,
        basis,
    })
}
