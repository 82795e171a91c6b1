use std::fmt;

/// CLI failure with its exit code and a `kind:detail` tag for stderr.
#[derive(Debug)]
pub enum CliError {
    Config { detail: &'static str, message: String },
    Missing { artifact: &'static str, message: String },
    Lib(attriweight::Error),
}

impl CliError {
    pub fn config(detail: &'static str, message: impl Into<String>) -> Self {
        CliError::Config {
            detail,
            message: message.into(),
        }
    }

    pub fn missing(artifact: &'static str, message: impl Into<String>) -> Self {
        CliError::Missing {
            artifact,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } => 1,
            CliError::Missing { .. } => 2,
            CliError::Lib(e) => match e {
                attriweight::Error::InvalidArgument(_) | attriweight::Error::DimensionMismatch { .. } => 1,
                attriweight::Error::Parse { .. }
                | attriweight::Error::Format(_)
                | attriweight::Error::ChecksumMismatch { .. }
                | attriweight::Error::LayoutMismatch(_)
                | attriweight::Error::IdNotFound(_) => 2,
                _ => 3,
            },
        }
    }

    pub fn tag(&self) -> String {
        match self {
            CliError::Config { detail, .. } => format!("config:{detail}"),
            CliError::Missing { artifact, .. } => format!("missing:{artifact}"),
            CliError::Lib(e) => {
                let kind = match self.exit_code() {
                    1 => "config",
                    2 => "artifact",
                    _ => "numerical",
                };
                format!("{kind}:{}", e.tag())
            }
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config { message, .. } | CliError::Missing { message, .. } => f.write_str(message),
            CliError::Lib(e) => write!(f, "{e}"),
        }
    }
}

impl From<attriweight::Error> for CliError {
    fn from(e: attriweight::Error) -> Self {
        CliError::Lib(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;
