use recast_core::RecastError;

/// Process exit codes.
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
    Numerical(String),
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Data(_) => EXIT_DATA,
            CliError::Numerical(_) => EXIT_NUMERICAL,
            CliError::Other(_) => EXIT_OTHER,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Other(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<RecastError> for CliError {
    fn from(e: RecastError) -> Self {
        use RecastError::*;
        let msg = e.to_string();
        match e {
            Config(_) => CliError::Config(msg),
            Dimension { .. } | ZeroScore { .. } | ZeroVariance { .. } | InvalidData(_) | SingleClass | Container(_) => {
                CliError::Data(msg)
            }
            Domain(_)
            | NonFiniteIntegrand { .. }
            | SubdivisionLimit { .. }
            | RankDeficient(_)
            | Separation { .. }
            | NonFiniteLoss { .. }
            | DegenerateLatent
            | DegenerateDenominator
            | NonFiniteInit => CliError::Numerical(msg),
            Io(_) => CliError::Other(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Data(e.to_string())
    }
}
