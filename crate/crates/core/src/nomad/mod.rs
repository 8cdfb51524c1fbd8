//! Asynchronous multi-worker execution with circulating parameter columns.
//!
//! Each global column (a word's λ column for LDA, a component's π̃ and θ̃
//! for generic mixtures) is a token that lives in exactly one place at a
//! time: a worker's queue or the worker processing it. A worker only ever
//! updates the columns it holds, so no locks guard parameter state. The
//! LDA normalizers π_k are shared by every column and are instead kept as
//! per-worker copies reconciled around a ring.

mod engine;
mod lda;
mod ledger;
mod mixture;
mod transport;

pub use engine::{
    census, run_async, Checkpoint, CheckpointKind, NomadConfig, NomadOutcome, RunStats, StopCondition, Token,
    Workload,
};
pub use lda::{run_lda, LdaRun, LdaSnapshot, LdaView, LdaWorker, WordColumn};
pub use ledger::{ring, NormalizerLedger, RingLink, RingMessage};
pub use mixture::{assemble_mixture, run_mixture, ComponentColumn, MixtureRun, MixtureSnapshot, MixtureWorker};
pub use transport::{ChannelTransport, Transport};
