//! Configuration-driven experiment runner around `skg_core`.
//!
//! A run lives in one output directory. `simulate` writes CSI captures,
//! `scatter` their scattering features (and the correlation table), `embed`
//! the t-SNE embeddings of every cluster-set pair, `keygen` the keys and
//! public transcripts, `evaluate` the BER and KGR tables, and `nist` the
//! randomness table.

pub mod config;
pub mod error;
pub mod pipeline;

pub use config::ExperimentConfig;
pub use error::{Stage, StageError};
pub use pipeline::{cmd_all, cmd_embed, cmd_evaluate, cmd_keygen, cmd_nist, cmd_scatter, cmd_simulate, Layout, Log, Summary};

/// Worker threads requested through `SKG_THREADS`, if set to a positive number.
pub fn threads_from_env() -> Option<usize> {
    std::env::var("SKG_THREADS").ok()?.trim().parse().ok().filter(|&n| n > 0)
}
