use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    /// Bug or violated internal contract.
    pub const INTERNAL: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const DATA: i32 = 3;
    pub const NUMERIC: i32 = 4;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] ecgbench_core::Error),

    #[error(transparent)]
    Autodiff(#[from] ecgbench_autodiff::Error),

    #[error("config: {0}")]
    Config(String),

    #[error("data: {0}")]
    Data(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        use ecgbench_core::Error as E;
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::Data(_) | CliError::Io { .. } => exit::DATA,
            CliError::Autodiff(e) => autodiff_code(e),
            CliError::Core(e) => match e {
                E::Config(_) | E::TaskConfig(_) => exit::CONFIG,
                E::Parse { .. } | E::Io { .. } | E::TooShort { .. } | E::InvalidRecord(_) | E::Degenerate(_) => {
                    exit::DATA
                }
                E::Numeric(_) | E::NonFiniteLoss { .. } => exit::NUMERIC,
                E::Autodiff(inner) => autodiff_code(inner),
                E::Contract(_) => exit::INTERNAL,
            },
        }
    }
}

fn autodiff_code(e: &ecgbench_autodiff::Error) -> i32 {
    use ecgbench_autodiff::Error as A;
    match e {
        A::NonFinite { .. } | A::NanGradient { .. } => exit::NUMERIC,
        A::Checkpoint(_) | A::Io(_) | A::UnknownParam(_) => exit::DATA,
        A::Dimension { .. } | A::Geometry { .. } | A::Domain { .. } | A::Contract(_) => exit::INTERNAL,
    }
}
