use std::fmt;
use std::path::PathBuf;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_MISSING: i32 = 4;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    /// Inputs parse but cannot produce a result.
    Infeasible(String),
    MissingArtifact(PathBuf),
    Io(PathBuf, std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Infeasible(_) | CliError::Io(..) => EXIT_INFEASIBLE,
            CliError::MissingArtifact(_) => EXIT_MISSING,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Infeasible(m) => write!(f, "{m}"),
            CliError::MissingArtifact(p) => write!(f, "missing artifact {}", p.display()),
            CliError::Io(p, e) => write!(f, "{}: {e}", p.display()),
        }
    }
}

impl std::error::Error for CliError {}

impl From<qosmc_core::Error> for CliError {
    fn from(e: qosmc_core::Error) -> Self {
        CliError::Infeasible(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn read_file(path: &std::path::Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::MissingArtifact(path.to_path_buf()),
        _ => CliError::Io(path.to_path_buf(), e),
    })
}

pub fn write_file(path: &std::path::Path, contents: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(dir.to_path_buf(), e))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::Io(path.to_path_buf(), e))
}
