use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("numeric error: {message} (partial value {partial})")]
    Numeric { message: String, partial: f64 },
    #[error("resource guard: {0}")]
    ResourceGuard(String),
    #[error("sampler efficiency: {0}")]
    Efficiency(String),
    #[error("degenerate test: {0}")]
    DegenerateTest(String),
    #[error("usage: {0}")]
    Usage(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

pub(crate) fn numeric(msg: impl Into<String>, partial: f64) -> Error {
    Error::Numeric {
        message: msg.into(),
        partial,
    }
}
