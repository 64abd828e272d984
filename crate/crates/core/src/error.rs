use std::path::PathBuf;

use thiserror::Error;

use crate::state::Account;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown {kind} preset `{name}`")]
    UnknownPreset { kind: &'static str, name: String },
    #[error("cannot read config file {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config file {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Reasons a contract call is rejected before it touches storage.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ContractError {
    #[error("{0} is not a registered provider")]
    UnregisteredProvider(Account),
    #[error("{0} does not hold the role required for this call")]
    RoleViolation(Account),
    #[error("provider {0} not found")]
    ProviderNotFound(Account),
    #[error("service {index} not found for provider {provider}")]
    ServiceNotFound { provider: Account, index: u64 },
    #[error("number of breaches must be at least 1")]
    ZeroBreaches,
    #[error("transfer value must be nonzero")]
    ZeroValue,
    #[error("insufficient balance: have {available}, need {required}")]
    InsufficientBalance { available: u128, required: u128 },
    #[error("call requires the {0:?} layout")]
    WrongLayout(crate::contracts::LayoutMode),
}

#[derive(Debug, Error)]
pub enum ChainError {
    #[error("transaction gas estimate {estimate} exceeds the block gas limit {limit}")]
    TxTooLarge { estimate: u64, limit: u64 },
    #[error("dry run rejected: {0}")]
    DryRun(#[from] ContractError),
    #[error("unknown dependency tx {0}")]
    UnknownDependency(u64),
    #[error("slots must be at least 1")]
    ZeroSlots,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
