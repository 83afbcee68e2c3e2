use std::io;
use std::path::{Path, PathBuf};

/// Stable process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const IO: i32 = 3;
    pub const DATA: i32 = 4;
    pub const BUNDLE: i32 = 5;
    pub const COVERAGE: i32 = 6;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: line {line}: {msg}")]
    Config { path: PathBuf, line: usize, msg: String },
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: byte {offset}: {msg}")]
    Image { path: PathBuf, offset: usize, msg: String },
    #[error("{path}: line {line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("{0}")]
    Data(String),
    #[error("bundle: {0}")]
    Bundle(String),
    #[error("coverage: {0}")]
    Coverage(String),
    #[error(transparent)]
    Core(xlhwr_core::Error),
}

impl From<xlhwr_core::Error> for CliError {
    fn from(e: xlhwr_core::Error) -> Self {
        match e {
            xlhwr_core::Error::Unmapped(c) => CliError::Coverage(format!("no mapping for {}", crate::text::char_list(&c))),
            xlhwr_core::Error::MissingCoverage(c) => {
                CliError::Coverage(format!("no samples for {}", crate::text::char_list(&c)))
            }
            other => CliError::Core(other),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Usage(_) => exit::CONFIG,
            CliError::Io { .. } => exit::IO,
            CliError::Image { .. } | CliError::Parse { .. } | CliError::Data(_) | CliError::Core(_) => exit::DATA,
            CliError::Bundle(_) => exit::BUNDLE,
            CliError::Coverage(_) => exit::COVERAGE,
        }
    }

    pub fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn parse(path: &Path, line: usize, msg: impl Into<String>) -> Self {
        CliError::Parse {
            path: path.to_path_buf(),
            line,
            msg: msg.into(),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn read_to_string(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn write_file(path: &Path, data: impl AsRef<[u8]>) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, data).map_err(|e| CliError::io(path, e))
}
