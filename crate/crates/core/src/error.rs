use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point {point:?} lies outside [0,1]^{dim}")]
    Domain { point: Vec<f64>, dim: usize },

    #[error("{what} needs {requested} items, cap is {cap}")]
    Resource {
        what: &'static str,
        requested: usize,
        cap: usize,
    },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("no independent perturbation found after {attempts} attempts (seed {seed})")]
    Nondeterminism { attempts: usize, seed: u64 },

    #[error("stage ({n},{m}) infeasible: predicate `{predicate}` violated")]
    Stage {
        n: u32,
        m: u32,
        predicate: &'static str,
    },

    #[error("estimate failed: {0}")]
    Estimate(String),

    #[error("undefined: {0}")]
    Undefined(String),

    #[error("dimension {0} is not supported here")]
    Unsupported(usize),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(point: &[f64]) -> Self {
        Error::Domain {
            point: point.to_vec(),
            dim: point.len(),
        }
    }
}
