use thiserror::Error;

/// Errors raised across the analysis, surrogate and tuning pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("eigenvalue iteration did not converge for a {dim}x{dim} matrix")]
    EigenNoConvergence { dim: usize },

    #[error("undamped zero eigenvalue")]
    ZeroEigenvalue,

    #[error("residue undefined for non-simple mode {mode}")]
    NonSimpleMode { mode: usize },

    #[error("evaluation point {point} lies within 1e-9 of a controller pole")]
    ControllerPole { point: String },

    #[error("ill-posed algebraic loop on input channel {input} / output channel {output}")]
    IllPosedLoop { input: usize, output: usize },

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("operating point infeasible at e = {e} p.u.: {reason}")]
    InfeasibleOperatingPoint { e: f64, reason: String },

    #[error("no oscillatory mode in the closed-loop spectrum")]
    NoOscillatoryMode,

    #[error("constant output, indices undefined")]
    ConstantOutput,

    #[error("too many infeasible design points: {dropped} of {total} rows; tighten the parameter bounds")]
    TooManyInfeasible { dropped: usize, total: usize },

    #[error("rank-deficient regression design ({samples} samples, {terms} terms); add samples or lower the order")]
    RankDeficient { samples: usize, terms: usize },

    #[error("correlation matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("root finder failed for polynomial {coefficients:?}")]
    RootFinding { coefficients: Vec<f64> },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("malformed input at line {line}: {message}")]
    Malformed { line: usize, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable tag for the error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidModel(_) => "invalid_model",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::EigenNoConvergence { .. } => "eigen_no_convergence",
            Error::ZeroEigenvalue => "zero_eigenvalue",
            Error::NonSimpleMode { .. } => "non_simple_mode",
            Error::ControllerPole { .. } => "controller_pole",
            Error::IllPosedLoop { .. } => "ill_posed_loop",
            Error::IndexOutOfRange(_) => "index_out_of_range",
            Error::InfeasibleOperatingPoint { .. } => "operating_point_infeasible",
            Error::NoOscillatoryMode => "no_oscillatory_mode",
            Error::ConstantOutput => "constant_output",
            Error::TooManyInfeasible { .. } => "too_many_infeasible",
            Error::RankDeficient { .. } => "rank_deficient",
            Error::NotPositiveDefinite => "not_positive_definite",
            Error::RootFinding { .. } => "root_finding",
            Error::Infeasible(_) => "infeasible",
            Error::Empty(_) => "empty_input",
            Error::Malformed { .. } => "malformed_input",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
