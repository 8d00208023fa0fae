use std::fmt;

/// Why a run stopped. Each class maps to its own exit status.
#[derive(Debug)]
pub enum Failure {
    /// The manifest does not parse or names invalid parameters.
    Manifest(String),
    /// A parameter lies outside the range an estimate is stated for.
    Refused(String),
    /// Numerical or I/O failure after validation succeeded.
    Runtime(anyhow::Error),
}

impl Failure {
    pub const EXIT_CHECKS_FAILED: u8 = 1;
    pub const EXIT_MANIFEST: u8 = 2;
    pub const EXIT_REFUSED: u8 = 3;
    pub const EXIT_RUNTIME: u8 = 4;

    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Manifest(_) => Self::EXIT_MANIFEST,
            Failure::Refused(_) => Self::EXIT_REFUSED,
            Failure::Runtime(_) => Self::EXIT_RUNTIME,
        }
    }

    pub fn manifest(msg: impl Into<String>) -> Self {
        Failure::Manifest(msg.into())
    }

    /// Maps a core error raised while validating `field`: invalid values
    /// become manifest errors, refusals stay refusals.
    pub fn at(field: &str, err: fracheat::Error) -> Self {
        match err {
            fracheat::Error::InvalidParameter(msg) => Failure::Manifest(format!("{field}: {msg}")),
            fracheat::Error::Refused(msg) => Failure::Refused(msg),
            other => Failure::Runtime(other.into()),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Manifest(msg) => write!(f, "invalid manifest: {msg}"),
            Failure::Refused(msg) => write!(f, "refused: {msg}"),
            Failure::Runtime(err) => write!(f, "run failed: {err:#}"),
        }
    }
}

impl std::error::Error for Failure {}

impl From<fracheat::Error> for Failure {
    fn from(err: fracheat::Error) -> Self {
        match err {
            fracheat::Error::Refused(msg) => Failure::Refused(msg),
            other => Failure::Runtime(other.into()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(err: std::io::Error) -> Self {
        Failure::Runtime(err.into())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(err: serde_json::Error) -> Self {
        Failure::Runtime(err.into())
    }
}

pub type Outcome<T> = std::result::Result<T, Failure>;

/// Extension for attaching a manifest field to core results during validation.
pub trait AtField<T> {
    fn at(self, field: &str) -> Outcome<T>;
}

impl<T> AtField<T> for fracheat::Result<T> {
    fn at(self, field: &str) -> Outcome<T> {
        self.map_err(|e| Failure::at(field, e))
    }
}
