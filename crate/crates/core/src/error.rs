use num_complex::Complex64;
use thiserror::Error;

/// Pipeline stage a failure originated from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Operator,
    Orbit,
    Coefficients,
    Zeros,
    Resolvent,
    Basis,
    Functionals,
    Blaschke,
    Duality,
    Chain,
    Config,
    Io,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Stage::Operator => "operator",
            Stage::Orbit => "orbit",
            Stage::Coefficients => "coefficients",
            Stage::Zeros => "zeros",
            Stage::Resolvent => "resolvent",
            Stage::Basis => "basis",
            Stage::Functionals => "functionals",
            Stage::Blaschke => "blaschke",
            Stage::Duality => "duality",
            Stage::Chain => "chain",
            Stage::Config => "config",
            Stage::Io => "io",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum AihsError {
    #[error("invalid operator: {0}")]
    InvalidOperator(String),

    #[error("weight {index} is zero")]
    ZeroWeight { index: usize },

    #[error("donoghue weights must be strictly decreasing in modulus (violated at weight {index})")]
    NotMonotone { index: usize },

    #[error("orbit vector {index} is numerically zero")]
    OrbitDied { index: usize },

    #[error("orbit is not minimal: vector {index} lies in the span of the others (relative distance {distance:e})")]
    NonMinimalOrbit { index: usize, distance: f64 },

    #[error("lambda = {lambda} is not a resolvent point of the truncation (1/lambda is an eigenvalue)")]
    SingularResolvent { lambda: Complex64 },

    #[error("Neumann series diverges for lambda = {lambda}; use the direct solve")]
    NeumannDivergent { lambda: Complex64 },

    #[error("need {required} biorthogonal norms, got {available}")]
    InsufficientNorms { required: usize, available: usize },

    #[error("root finder failed: {0}")]
    RootFinding(String),

    #[error("zeros {first} and {second} are not distinct within tolerance; raise the degree")]
    RepeatedZeros { first: usize, second: usize },

    #[error("point {index} lies outside the open unit disk or at the origin")]
    OutsideDisk { index: usize },

    #[error("Taylor order {available} is too small, need {required}")]
    InsufficientTaylorOrder { required: usize, available: usize },

    #[error("subspaces Y and F are nearly dependent (smallest singular value {sigma_min:e})")]
    DegenerateAngle { sigma_min: f64 },

    #[error("chain terminated at depth {depth}: found an invariant subspace of codimension {depth}")]
    ChainTerminated { depth: usize },

    #[error("{stage}: {source}")]
    Staged {
        stage: Stage,
        #[source]
        source: Box<AihsError>,
    },

    #[error("audit failed for metric `{metric}`: {detail}")]
    Audit { metric: String, detail: String },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl AihsError {
    pub fn at(self, stage: Stage) -> AihsError {
        match self {
            e @ AihsError::Staged { .. } => e,
            e => AihsError::Staged {
                stage,
                source: Box::new(e),
            },
        }
    }

    /// The innermost error, with stage tags peeled off.
    pub fn root(&self) -> &AihsError {
        match self {
            AihsError::Staged { source, .. } => source.root(),
            e => e,
        }
    }

    pub fn stage(&self) -> Option<Stage> {
        match self {
            AihsError::Staged { stage, .. } => Some(*stage),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, AihsError>;

pub(crate) trait StageExt<T> {
    fn stage(self, stage: Stage) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: Stage) -> Result<T> {
        self.map_err(|e| e.at(stage))
    }
}
