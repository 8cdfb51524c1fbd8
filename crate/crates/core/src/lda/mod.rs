//! Latent Dirichlet allocation trained by token-level coordinate ascent.
//!
//! Topics λ (word-major `V × K`), document proportions γ and per-token
//! assignments φ are kept consistent by applying `count · (φ_new − φ_old)`
//! to γ_d, the word's λ column and the per-topic normalizers
//! π_k = Σ_v λ_k^v after every φ update.

mod elbo;
mod perplexity;
mod shard;
mod state;
mod topk;

pub use crate::special::digamma;
pub use elbo::lda_elbo;
pub use perplexity::{heldout_perplexity, PerplexityReport, FOLD_IN_ITERATIONS};
pub use shard::{DocShard, Entry, Normalizers, PhiMode, PhiStore, Scratch};
pub use state::{column_sums, process_word_column, word_order, worker_rng, ConservationReport, LdaState, WordSweep};
pub use topk::{topk_truncate, truncate_pairs, TopKAssignment};

use crate::error::{Error, Result};

/// Random topics scored alongside the stored ones under top-k storage.
pub const DEFAULT_REFRESH: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LdaHyper {
    pub topics: usize,
    pub vocab: usize,
    /// Document-topic Dirichlet concentration.
    pub alpha: f64,
    /// Topic-word Dirichlet concentration.
    pub eta: f64,
}

impl LdaHyper {
    pub fn validate(&self) -> Result<()> {
        if self.topics == 0 || self.vocab == 0 {
            return Err(Error::InvalidState("need at least one topic and one word".into()));
        }
        if !(self.alpha > 0.0 && self.eta > 0.0) {
            return Err(Error::InvalidState(format!(
                "alpha and eta must be positive, got {} and {}",
                self.alpha, self.eta
            )));
        }
        Ok(())
    }
}
