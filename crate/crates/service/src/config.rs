//! Environment-driven service settings.

use std::env;
use std::net::IpAddr;
use std::num::NonZeroUsize;

use fmkit_core::analysis::DEFAULT_ENUMERATION_BOUND;

pub const DEFAULT_BIND: &str = "127.0.0.1";
pub const DEFAULT_PORT: u16 = 8080;
pub const DEFAULT_JOB_STORE: usize = 1024;
pub const DEFAULT_MAX_MODEL_BYTES: usize = 16 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Config {
    /// `FMKIT_BIND`.
    pub bind: IpAddr,
    /// `FMKIT_PORT`; 0 picks a free port.
    pub port: u16,
    /// `FMKIT_WORKERS`: jobs computing at once.
    pub workers: usize,
    /// `FMKIT_JOB_STORE`: jobs retained before LRU eviction.
    pub job_store: NonZeroUsize,
    /// `FMKIT_MAX_MODEL_BYTES`: limit on model text and request bodies.
    pub max_model_bytes: usize,
    /// `FMKIT_ENUM_BOUND`: feature limit for COUNT.
    pub enum_bound: usize,
    /// `FMKIT_PUBLIC_URL`: prefix of share links; derived from bind and port when unset.
    pub public_url: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("environment variable {name}={value:?} is invalid: {reason}")]
pub struct ConfigError {
    pub name: &'static str,
    pub value: String,
    pub reason: String,
}

/// At least two, so one long job cannot starve every other.
fn default_workers() -> usize {
    std::thread::available_parallelism()
        .map(NonZeroUsize::get)
        .unwrap_or(1)
        .max(2)
}

impl Default for Config {
    fn default() -> Self {
        Config {
            bind: DEFAULT_BIND.parse().expect("literal address"),
            port: DEFAULT_PORT,
            workers: default_workers(),
            job_store: NonZeroUsize::new(DEFAULT_JOB_STORE).expect("non-zero"),
            max_model_bytes: DEFAULT_MAX_MODEL_BYTES,
            enum_bound: DEFAULT_ENUMERATION_BOUND,
            public_url: None,
        }
    }
}

fn parsed<T: std::str::FromStr>(
    lookup: &impl Fn(&str) -> Option<String>,
    name: &'static str,
    default: T,
    check: impl Fn(&T) -> bool,
) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    let Some(value) = lookup(name) else {
        return Ok(default);
    };
    let err = |reason: String| ConfigError {
        name,
        value: value.clone(),
        reason,
    };
    let v: T = value
        .trim()
        .parse()
        .map_err(|e: T::Err| err(e.to_string()))?;
    if !check(&v) {
        return Err(err("out of range".into()));
    }
    Ok(v)
}

impl Config {
    pub fn from_env() -> Result<Self, ConfigError> {
        Self::from_lookup(|k| env::var(k).ok())
    }

    pub fn from_lookup(lookup: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        let d = Config::default();
        let job_store: usize = parsed(&lookup, "FMKIT_JOB_STORE", d.job_store.get(), |&n| n > 0)?;
        Ok(Config {
            bind: parsed(&lookup, "FMKIT_BIND", d.bind, |_| true)?,
            port: parsed(&lookup, "FMKIT_PORT", d.port, |_| true)?,
            workers: parsed(&lookup, "FMKIT_WORKERS", d.workers, |&n| n > 0)?,
            job_store: NonZeroUsize::new(job_store).expect("checked"),
            max_model_bytes: parsed(&lookup, "FMKIT_MAX_MODEL_BYTES", d.max_model_bytes, |&n| {
                n > 0
            })?,
            enum_bound: parsed(&lookup, "FMKIT_ENUM_BOUND", d.enum_bound, |&n| n > 0)?,
            public_url: lookup("FMKIT_PUBLIC_URL").filter(|s| !s.trim().is_empty()),
        })
    }

    pub fn share_base(&self, port: u16) -> String {
        match &self.public_url {
            Some(u) => u.trim_end_matches('/').to_string(),
            None if self.bind.is_ipv6() => format!("http://[{}]:{port}", self.bind),
            None => format!("http://{}:{port}", self.bind),
        }
    }
}
