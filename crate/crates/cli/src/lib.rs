//! File formats, catalog handling, and command implementations behind the
//! `vma` binary.
//!
//! Split from the binary so commands and schemas are testable in-process.
//! Exit-code policy: 0 on success, 1 for numerical failures (the inputs
//! were well-formed but the computation could not deliver, e.g. a fit that
//! did not converge or a trace that did not segment), 2 for usage and
//! validation problems (bad flags, unreadable files, schema violations,
//! unknown ids).

pub mod catalog;
pub mod commands;
pub mod io;
pub mod params;
pub mod sweep;

use std::fmt;

/// Command failure carrying its exit class.
#[derive(Debug)]
pub enum Failure {
    /// Exit 2: the invocation or an input file is at fault.
    Usage(anyhow::Error),
    /// Exit 1: inputs were valid but the computation failed.
    Numerical(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Numerical(_) => 1,
        }
    }

    pub fn usage(e: impl Into<anyhow::Error>) -> Self {
        Failure::Usage(e.into())
    }

    pub fn numerical(e: impl Into<anyhow::Error>) -> Self {
        Failure::Numerical(e.into())
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(e) | Failure::Numerical(e) => write!(f, "{e:#}"),
        }
    }
}

impl std::error::Error for Failure {}

pub type CmdResult<T> = std::result::Result<T, Failure>;

/// Extension trait tagging a result with its failure class.
pub trait Classify<T> {
    fn or_usage(self) -> CmdResult<T>;
    fn or_numerical(self) -> CmdResult<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for std::result::Result<T, E> {
    fn or_usage(self) -> CmdResult<T> {
        self.map_err(|e| Failure::Usage(e.into()))
    }

    fn or_numerical(self) -> CmdResult<T> {
        self.map_err(|e| Failure::Numerical(e.into()))
    }
}
