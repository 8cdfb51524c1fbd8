use rand_chacha::ChaCha8Rng;

use super::engine::{run_async, Checkpoint, NomadConfig, RunStats, Token, Workload};
use super::ledger::{ring, NormalizerLedger, RingLink};
use crate::error::{Error, Result};
use crate::lda::{lda_elbo, word_order, worker_rng, ConservationReport, DocShard, LdaHyper, LdaState, Scratch};

/// The λ column of one word, λ_{1:K}^v.
#[derive(Debug, Clone, PartialEq)]
pub struct WordColumn {
    pub word: usize,
    pub version: u64,
    pub values: Vec<f64>,
}

impl Token for WordColumn {
    fn id(&self) -> usize {
        self.word
    }

    fn version(&self) -> u64 {
        self.version
    }

    fn bump_version(&mut self) {
        self.version += 1;
    }
}

/// A worker's documents and its normalizer copy.
pub struct LdaWorker {
    shard: DocShard,
    ledger: NormalizerLedger,
    link: RingLink,
    scratch: Scratch,
    sync_every: usize,
    since_sync: usize,
}

impl Workload for LdaWorker {
    type Token = WordColumn;
    type Snapshot = LdaSnapshot;

    fn process(&mut self, held: &mut [WordColumn], rng: &mut ChaCha8Rng) -> Result<u64> {
        let mut total = 0;
        for col in held {
            total += crate::lda::process_word_column(
                &mut self.shard,
                col.word,
                &mut col.values,
                &mut self.ledger,
                rng,
                &mut self.scratch,
            )?;
        }
        Ok(total)
    }

    fn after_step(&mut self) {
        self.since_sync += 1;
        if self.since_sync >= self.sync_every {
            self.since_sync = 0;
            self.ledger.sync_normalizers(&self.link);
        }
    }

    fn flush(&mut self) {
        self.ledger.flush(&self.link);
    }

    fn drain(&mut self) {
        self.ledger.drain(&self.link);
    }

    fn snapshot(&self, held: &[WordColumn]) -> LdaSnapshot {
        LdaSnapshot {
            shard: self.shard.clone(),
            columns: held.iter().map(|c| (c.word, c.values.clone())).collect(),
            normalizers: self.ledger.local().to_vec(),
        }
    }
}

/// One worker's state at a pause.
#[derive(Debug, Clone)]
pub struct LdaSnapshot {
    pub shard: DocShard,
    pub columns: Vec<(usize, Vec<f64>)>,
    pub normalizers: Vec<f64>,
}

/// The whole model assembled from every worker's snapshot.
#[derive(Debug, Clone)]
pub struct LdaView {
    pub hyper: LdaHyper,
    /// Word-major `V × K`.
    pub lambda: Vec<f64>,
    pub shards: Vec<DocShard>,
    /// Each worker's normalizer copy.
    pub normalizer_copies: Vec<Vec<f64>>,
}

impl LdaView {
    pub fn assemble(hyper: LdaHyper, snapshots: &[LdaSnapshot]) -> Result<Self> {
        let k = hyper.topics;
        let mut lambda = vec![f64::NAN; hyper.vocab * k];
        let mut seen = 0;
        for s in snapshots {
            for (w, values) in &s.columns {
                lambda[w * k..(w + 1) * k].copy_from_slice(values);
                seen += 1;
            }
        }
        if seen != hyper.vocab {
            return Err(Error::Corrupted(format!("assembled {seen} of {} word columns", hyper.vocab)));
        }
        Ok(Self {
            hyper,
            lambda,
            shards: snapshots.iter().map(|s| s.shard.clone()).collect(),
            normalizer_copies: snapshots.iter().map(|s| s.normalizers.clone()).collect(),
        })
    }

    pub fn elbo(&self) -> Result<f64> {
        let refs: Vec<&DocShard> = self.shards.iter().collect();
        lda_elbo(&self.hyper, &self.lambda, &refs)
    }

    /// Conservation identities; the normalizer entry is the largest gap
    /// between any worker's copy and the true column sums.
    pub fn conservation(&self) -> ConservationReport {
        let k = self.hyper.topics;
        let tokens: f64 = self.shards.iter().map(DocShard::total_tokens).sum();
        let mass: f64 = self.lambda.iter().map(|l| l - self.hyper.eta).sum();
        let exact = crate::lda::column_sums(&self.lambda, k);
        let normalizers = self
            .normalizer_copies
            .iter()
            .flat_map(|c| c.iter().zip(&exact).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        ConservationReport {
            gamma: self.shards.iter().map(DocShard::gamma_conservation_error).fold(0.0, f64::max),
            lambda: (mass - tokens).abs(),
            normalizers,
        }
    }
}

/// Finished asynchronous LDA run.
pub struct LdaRun {
    pub state: LdaState,
    pub stats: RunStats,
}

/// ESVI-LDA on `config.workers` threads.
///
/// Documents are split into contiguous shards; word columns start in the
/// seeded [`word_order`] and are dealt round-robin. With one worker the run
/// replays [`crate::lda::WordSweep`] under the same seed exactly.
pub fn run_lda<F>(state: LdaState, config: &NomadConfig, seed: u64, sync_every: usize, mut on_checkpoint: F) -> Result<LdaRun>
where
    F: FnMut(&Checkpoint, &LdaView) -> Result<()>,
{
    let p = config.workers;
    let hyper = *state.hyper();
    let k = hyper.topics;
    let (shard, lambda, normalizers) = state.into_parts();
    let links = ring(p);
    let workers: Vec<LdaWorker> = shard
        .split(p)
        .into_iter()
        .zip(links)
        .enumerate()
        .map(|(w, (shard, link))| LdaWorker {
            shard,
            ledger: NormalizerLedger::new(w, p, normalizers.clone()),
            link,
            scratch: Scratch::default(),
            sync_every: sync_every.max(1),
            since_sync: 0,
        })
        .collect();
    let tokens: Vec<WordColumn> = word_order(hyper.vocab, seed)
        .into_iter()
        .map(|w| WordColumn { word: w, version: 0, values: lambda[w * k..(w + 1) * k].to_vec() })
        .collect();
    let rngs = (0..p).map(|w| worker_rng(seed, w)).collect();

    let outcome = run_async(workers, tokens, rngs, config, |c, snaps| {
        let view = LdaView::assemble(hyper, snaps)?;
        on_checkpoint(c, &view)
    })?;

    let mut lambda = vec![0.0; hyper.vocab * k];
    for t in &outcome.tokens {
        lambda[t.word * k..(t.word + 1) * k].copy_from_slice(&t.values);
    }
    let mut workers = outcome.workloads;
    let normalizers = workers[0].ledger.local().to_vec();
    let shards = workers.drain(..).map(|w| w.shard).collect();
    let mut state = LdaState::from_parts(DocShard::merge(shards)?, lambda, normalizers);
    state.add_updates(outcome.stats.updates);
    Ok(LdaRun { state, stats: outcome.stats })
}
