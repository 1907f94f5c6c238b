//! Command-line front end for the effective-potential solver.
//!
//! Every subcommand reads a JSON config, writes CSV/JSON artefacts into an
//! output directory and ends with `manifest.json`. Floats are printed with
//! 17 significant digits so that repeated runs are byte-identical.

pub mod commands;
pub mod error;
pub mod output;

pub use commands::{
    cmd_basis, cmd_effpot_kernel, cmd_figure1, cmd_reconstruct, cmd_spectrum, cmd_sweep,
    cmd_verify, load_config, load_config_text, with_jobs, RunManifest, RunOptions,
};
pub use error::{CliError, CliResult};
