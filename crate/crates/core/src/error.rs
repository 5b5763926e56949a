/// A configuration value that cannot be used: unknown names, out-of-range
/// sizes, inconsistent flags.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("unknown model family '{0}' (expected one of: weinet, fastweights, lstm, rhn)")]
    UnknownFamily(String),
    #[error("unknown update variant '{0}' (expected one of: fullmatrix, rowcol, gated, crossbitdot)")]
    UnknownVariant(String),
    #[error("{0}")]
    Invalid(String),
}
