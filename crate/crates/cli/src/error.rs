use std::path::PathBuf;

/// Failures that end a command. Infeasibility is not an error: commands
/// report it in their output and exit with code 2.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("cannot read `{}`: {source}", path.display())]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse `{}`: {message}", path.display())]
    Parse { path: PathBuf, message: String },
    #[error("`{}` has no .toml or .json extension", .0.display())]
    Format(PathBuf),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("cannot write `{}`: {source}", path.display())]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// Process exit code for this failure.
    pub fn exit_code(&self) -> u8 {
        1
    }
}

/// Exit code of a run that found no feasible plan.
pub const EXIT_INFEASIBLE: u8 = 2;
