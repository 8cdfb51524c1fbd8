//! Variational inference for mixtures of exponential families.
//!
//! Three optimizers share one model abstraction:
//!
//! * batch VI ([`expfam::MixtureFit::vi_epoch`], [`lda::LdaState::vi_epoch`]),
//! * SVI, which updates one local assignment and then the globals,
//! * ESVI, which updates a subset of assignment coordinates in closed form
//!   and can therefore run as an asynchronous, lock-free scheduler where the
//!   global parameter columns circulate between workers ([`nomad`]).
//!
//! The [`lda`] module specializes the machinery to latent Dirichlet
//! allocation, including top-k truncated assignments. The [`harness`] module
//! drives experiments and writes ELBO / perplexity traces.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod expfam;
pub mod harness;
pub mod lda;
pub mod models;
pub mod nomad;
pub mod special;

pub use error::{Error, Result};
