//! The `advtex` command-line pipeline: transpile a keyframed sequence into
//! per-frame scenes, check alignment with a white texture, render, run the
//! adversarial texture attack, evaluate and report.
//!
//! Exit codes: 0 ok, 1 parse error, 2 invariant violation (including a
//! missing or uninitialized workdir), 3 render or alignment failure,
//! 4 attack abort.

pub mod commands;
pub mod config;
pub mod error;
pub mod verify;
pub mod workdir;

pub use config::Config;
pub use error::CliError;
pub use workdir::{init, Workdir, WORKDIR_ENV};
