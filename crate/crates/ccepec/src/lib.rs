//! Files, solver adapters and the `ccepec` command line for
//! [`ccepec_core`].
//!
//! - [`io`]: grid (JSON or CSV directory), policy (JSON/TOML) and scenario
//!   loaders,
//! - [`isone`]: the bundled 8-zone ISO New England case,
//! - [`backend`]: built-in and external-command solver backends, a wall
//!   clock, and a threaded executor for progressive hedging,
//! - [`output`]: result CSV and JSON writers,
//! - [`cli`]: the command-line driver.

pub mod backend;
pub mod cli;
pub mod io;
pub mod isone;
pub mod output;

pub use ccepec_core as core;
