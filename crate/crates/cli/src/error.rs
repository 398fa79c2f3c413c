use std::fmt;
use std::path::PathBuf;

use crate::config::Diagnostic;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration:\n{}", DiagnosticList(.0))]
    Config(Vec<Diagnostic>),

    #[error("input error: {0}")]
    Input(String),

    #[error("analysis error: {0}")]
    Analysis(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    /// 2 for anything the user can fix in the inputs or configuration,
    /// 1 when an analysis step fails on valid inputs.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Analysis(_) => 1,
            CliError::Config(_) | CliError::Input(_) | CliError::Io { .. } => 2,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    pub(crate) fn input<E: fmt::Display>(context: impl fmt::Display) -> impl FnOnce(E) -> CliError {
        move |e| CliError::Input(format!("{context}: {e}"))
    }

    pub(crate) fn analysis<E: fmt::Display>(context: impl fmt::Display) -> impl FnOnce(E) -> CliError {
        move |e| CliError::Analysis(format!("{context}: {e}"))
    }
}

struct DiagnosticList<'a>(&'a [Diagnostic]);

impl fmt::Display for DiagnosticList<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, d) in self.0.iter().enumerate() {
            if k > 0 {
                writeln!(f)?;
            }
            write!(f, "  {d}")?;
        }
        Ok(())
    }
}
