use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("series did not converge after {terms} terms at z = {z}; the asymptotic branch is required")]
    NonConvergent { terms: usize, z: f64 },

    #[error("size error: {0}")]
    Size(String),

    #[error("{source_name}:{line}: {msg}")]
    Parse {
        source_name: String,
        line: usize,
        msg: String,
    },

    #[error("singular step multiplier |1 + w_ii q_i| < 1e-12 at node {node}")]
    SingularStep { node: usize },

    #[error("mode {mode}: {source}")]
    Mode {
        mode: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("basis mismatch: {0}")]
    BasisMismatch(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("consistency violation: {0}")]
    Consistency(String),

    #[error("fixed-point iteration diverged at iteration {iteration}: {reason}; try a shorter horizon T or a smaller relaxation factor")]
    Divergence { iteration: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Numerical failures (as opposed to bad input or inconsistent data).
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NonConvergent { .. } | Error::SingularStep { .. } | Error::Divergence { .. } => true,
            Error::Mode { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
