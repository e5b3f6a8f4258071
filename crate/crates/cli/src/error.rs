//! Exit-code mapping for every failure the pipeline can produce.

use std::fmt;
use std::path::Path;

use sotif_core::catalog::CatalogError;
use sotif_core::classify::ClassifyError;
use sotif_core::constraints::ConstraintError;
use sotif_core::simkernel::SimError;
use sotif_core::testgen::TestgenError;

/// Process exit codes. Stable across releases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Code {
    Success = 0,
    Validation = 1,
    Usage = 2,
    Infeasible = 3,
    Io = 4,
}

#[derive(Debug)]
pub struct CliError {
    pub code: Code,
    pub message: String,
}

impl CliError {
    pub fn new(code: Code, message: impl Into<String>) -> Self {
        CliError {
            code,
            message: message.into(),
        }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        CliError::new(Code::Io, format!("{}: {err}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

fn constraint_code(e: &ConstraintError) -> Code {
    match e {
        ConstraintError::Infeasible { .. }
        | ConstraintError::EmptySamplingRange { .. }
        | ConstraintError::UnboundedSamplingRange { .. }
        | ConstraintError::MissingBaseValue { .. } => Code::Infeasible,
        _ => Code::Validation,
    }
}

impl From<ConstraintError> for CliError {
    fn from(e: ConstraintError) -> Self {
        CliError::new(constraint_code(&e), e.to_string())
    }
}

impl From<TestgenError> for CliError {
    fn from(e: TestgenError) -> Self {
        let code = match &e {
            TestgenError::InvalidLevels => Code::Usage,
            TestgenError::Constraint(c) => constraint_code(c),
            TestgenError::Parse { .. } => Code::Io,
        };
        CliError::new(code, e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        CliError::new(Code::Validation, e.to_string())
    }
}

impl From<ClassifyError> for CliError {
    fn from(e: ClassifyError) -> Self {
        let code = match &e {
            ClassifyError::InvalidTolerance(_) => Code::Usage,
            _ => Code::Validation,
        };
        CliError::new(code, e.to_string())
    }
}

impl From<CatalogError> for CliError {
    fn from(e: CatalogError) -> Self {
        let code = match &e {
            CatalogError::DigestMismatch { .. } | CatalogError::Corrupt(_) | CatalogError::Io { .. } => Code::Io,
            _ => Code::Validation,
        };
        CliError::new(code, e.to_string())
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;
