//! File formats, reports and the command-line front end for `omega-core`.

pub mod cli;
pub mod dsl;
pub mod fuzz;
pub mod verdicts;

use omega_core::backforth::BackForthError;
use omega_core::games::GameError;
use omega_core::invariants::InvariantError;
use omega_core::presheaf::StructureError;
use omega_core::semantics::EvalError;
use omega_core::syntax::ParseError;

/// Anything a command can fail with. All of these are validation failures
/// except [`Error::Usage`].
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Dsl(#[from] dsl::DslError),
    #[error("{0}")]
    Name(String),
    #[error("formula: {0}")]
    Parse(#[from] ParseError),
    #[error("{0}")]
    Structure(#[from] StructureError),
    #[error("{0}")]
    BackForth(#[from] BackForthError),
    #[error("{0}")]
    Game(#[from] GameError),
    #[error("{0}")]
    Invariant(#[from] InvariantError),
    #[error("{0}")]
    Eval(#[from] EvalError),
    #[error("{0}: {1}")]
    Io(String, std::io::Error),
}
