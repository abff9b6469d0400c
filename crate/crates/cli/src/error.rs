use std::fmt;
use std::path::Path;

/// A failure with its process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_SHAPE: u8 = 4;

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }

    pub fn shape(message: impl Into<String>) -> Self {
        Self { code: EXIT_SHAPE, message: message.into() }
    }

    pub fn io(path: &Path, err: impl fmt::Display) -> Self {
        Self { code: EXIT_IO, message: format!("{}: {err}", path.display()) }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

fn is_shape(err: &sgbh::Error) -> bool {
    use sgbh::Error as E;
    match err {
        E::Overlap { .. }
        | E::Gap { .. }
        | E::EmptyGroup { .. }
        | E::IndexOutOfRange { .. }
        | E::GroupOutOfRange { .. }
        | E::LengthMismatch { .. }
        | E::EmptyInput
        | E::Shape(_) => true,
        E::InGroup { source, .. } | E::InRep { source, .. } => is_shape(source),
        _ => false,
    }
}

impl From<sgbh::Error> for CliError {
    fn from(err: sgbh::Error) -> Self {
        let code = if is_shape(&err) { EXIT_SHAPE } else { EXIT_USAGE };
        Self { code, message: err.to_string() }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
