use std::fmt;
use std::path::Path;

use serde::de::DeserializeOwned;

/// Exit status 1 for usage errors, 2 for data errors.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(anyhow::Error),
}

pub type CmdResult<T> = Result<T, Failure>;

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage error: {m}"),
            Failure::Data(e) => write!(f, "error: {e:#}"),
        }
    }
}

impl From<repgeo::Error> for Failure {
    fn from(e: repgeo::Error) -> Self {
        Failure::Data(e.into())
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Data(e)
    }
}

pub fn usage(message: impl Into<String>) -> Failure {
    Failure::Usage(message.into())
}

/// Attaches the offending file to a data error.
pub trait Context<T> {
    fn file(self, flag: &str, path: &Path) -> CmdResult<T>;
}

impl<T> Context<T> for repgeo::Result<T> {
    fn file(self, flag: &str, path: &Path) -> CmdResult<T> {
        self.map_err(|e| Failure::Data(anyhow::anyhow!("{flag} {}: {e}", path.display())))
    }
}

/// Reads a command's config file; missing keys take their defaults.
pub fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> CmdResult<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| usage(format!("--config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("--config {}: {e}", path.display())))
}

/// Required input that may come from a flag or the config file.
pub fn required<'a, T>(value: &'a Option<T>, flag: &str) -> CmdResult<&'a T> {
    value
        .as_ref()
        .ok_or_else(|| usage(format!("{flag} is required (as a flag or in --config)")))
}

/// Copies every flag that was given over the config value of the same name.
macro_rules! overlay {
    ($cfg:expr, $args:expr, $($field:ident),+ $(,)?) => {
        $(
            if let Some(v) = $args.$field.clone() {
                $cfg.$field = v.into();
            }
        )+
    };
}

pub(crate) use overlay;
