//! Experiment front end for the distributed continual-learning simulator:
//! preset grids, the MNIST pipeline, machine-readable result tables, and the
//! verification suite.

use std::path::PathBuf;

pub mod config;
pub mod experiment;
pub mod mnist_exp;
pub mod table;
pub mod verify;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] cocoa_cl::Error),
}
