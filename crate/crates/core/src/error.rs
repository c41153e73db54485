use thiserror::Error;

/// Errors raised anywhere in the pipeline, tagged with the module that produced them.
#[derive(Debug, Error)]
pub enum Error {
    #[error("equilibrium: invalid parameters: {}", .0.join("; "))]
    InvalidParams(Vec<String>),

    #[error("equilibrium: degenerate entry threshold, (1-kappa)V - lambda*Pi_P1 = {denominator} <= 0 (entry never profitable)")]
    DegenerateThreshold { denominator: f64 },

    #[error("oracle: {0}")]
    Oracle(String),

    #[error("panelgen: invalid calibration: {0}")]
    InvalidCalibration(String),

    #[error("panelgen: truncation rate {rate:.4} exceeds limit {limit:.4} ({count} of {total} bribes truncated at zero)")]
    ExcessTruncation {
        rate: f64,
        limit: f64,
        count: usize,
        total: usize,
    },

    #[error("panelgen: schema mismatch at {location}: {message}")]
    Schema { location: String, message: String },

    #[error("panelgen: record {row} (firm {firm_id}, year {year}) has zero workers")]
    ZeroWorkers { row: usize, firm_id: u64, year: i32 },

    #[error("panelgen: empty panel")]
    EmptyPanel,

    #[error("estimator: {0}")]
    Estimator(String),

    #[error("estimator: rank deficient design, collinear set {{{}}}", .0.join(", "))]
    RankDeficient(Vec<String>),

    #[error("estimator: LSDV oracle size limit exceeded ({rows} rows, {firms} firms; cap {max_rows} rows, {max_firms} firms)")]
    SizeLimit {
        rows: usize,
        firms: usize,
        max_rows: usize,
        max_firms: usize,
    },

    #[error("identify: missing coefficient `{0}`")]
    MissingCoefficient(String),

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
