use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use super::shard::{DocShard, PhiMode, Scratch};
use super::{lda_elbo, LdaHyper};
use crate::error::{Error, Result};
use crate::expfam::MonotonicityPolicy;
use crate::harness::corpus::Corpus;
use crate::special::digamma;

/// Shape of the Gamma noise on the initial topics (mean 1).
const INIT_SHAPE: f64 = 100.0;
const INIT_STREAM: u64 = 0;
const ORDER_STREAM: u64 = 1;
const WORKER_STREAM_BASE: u64 = 2;

/// RNG used by worker `worker` of a run seeded with `seed`. The serial word
/// sweep uses worker 0, so a one-worker scheduler replays it exactly.
pub fn worker_rng(seed: u64, worker: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(WORKER_STREAM_BASE + worker as u64);
    rng
}

/// Seeded permutation of all word ids; the order in which word columns
/// first circulate.
pub fn word_order(vocab: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(ORDER_STREAM);
    let mut order: Vec<usize> = (0..vocab).collect();
    order.shuffle(&mut rng);
    order
}

/// Deviations from the conservation identities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConservationReport {
    /// max_d |Σ_k (γ_dk − α) − N_d|.
    pub gamma: f64,
    /// |Σ_{k,v} (λ_kv − η) − total tokens|.
    pub lambda: f64,
    /// max_k |π_k − Σ_v λ_kv|.
    pub normalizers: f64,
}

impl ConservationReport {
    pub fn holds(&self) -> bool {
        self.gamma <= 1e-8 && self.lambda <= 1e-6
    }
}

/// Serial LDA state: one shard holding every document, the full λ and
/// exact normalizers.
#[derive(Debug, Clone)]
pub struct LdaState {
    shard: DocShard,
    lambda: Vec<f64>,
    normalizers: Vec<f64>,
    policy: MonotonicityPolicy,
    last_elbo: Option<f64>,
    updates: u64,
}

impl LdaState {
    /// Random initialization. Topic-word weights are drawn around uniform
    /// (Gamma(100, 1/100)), each φ row is set proportional to its word's
    /// weight in every topic (then truncated under top-k), and γ and λ are
    /// computed from the rows.
    pub fn new(corpus: &Corpus, hyper: LdaHyper, mode: PhiMode, seed: u64) -> Result<Self> {
        hyper.validate()?;
        if corpus.num_words != hyper.vocab {
            return Err(Error::InvalidState(format!(
                "corpus has {} words, model expects {}",
                corpus.num_words, hyper.vocab
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(INIT_STREAM);
        let (k, v) = (hyper.topics, hyper.vocab);
        let noise = Gamma::new(INIT_SHAPE, 1.0 / INIT_SHAPE).expect("valid gamma");
        let mut topics: Vec<f64> = (0..k * v).map(|_| noise.sample(&mut rng)).collect();
        for t in topics.chunks_mut(v) {
            let total: f64 = t.iter().sum();
            t.iter_mut().for_each(|x| *x /= total);
        }
        let init = |w: u32| {
            let mut row: Vec<f64> = (0..k).map(|t| topics[t * v + w as usize]).collect();
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= total);
            row
        };
        let shard = DocShard::build(hyper, 0, &corpus.docs, mode, init)?;
        Ok(Self::from_shard(shard))
    }

    /// λ and normalizers recomputed from the shard's assignments.
    pub fn from_shard(shard: DocShard) -> Self {
        let hyper = *shard.hyper();
        let mut lambda = vec![hyper.eta; hyper.vocab * hyper.topics];
        shard.accumulate_lambda(&mut lambda);
        let normalizers = column_sums(&lambda, hyper.topics);
        Self::from_parts(shard, lambda, normalizers)
    }

    pub fn from_parts(shard: DocShard, lambda: Vec<f64>, normalizers: Vec<f64>) -> Self {
        Self {
            shard,
            lambda,
            normalizers,
            policy: MonotonicityPolicy::default(),
            last_elbo: None,
            updates: 0,
        }
    }

    pub fn into_parts(self) -> (DocShard, Vec<f64>, Vec<f64>) {
        (self.shard, self.lambda, self.normalizers)
    }

    pub fn with_policy(mut self, policy: MonotonicityPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn hyper(&self) -> &LdaHyper {
        self.shard.hyper()
    }

    pub fn shard(&self) -> &DocShard {
        &self.shard
    }

    /// Word-major `V × K`.
    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn lambda_column(&self, w: usize) -> &[f64] {
        let k = self.hyper().topics;
        &self.lambda[w * k..(w + 1) * k]
    }

    pub fn normalizers(&self) -> &[f64] {
        &self.normalizers
    }

    pub fn coordinate_updates(&self) -> u64 {
        self.updates
    }

    pub fn add_updates(&mut self, n: u64) {
        self.updates += n;
    }

    pub fn elbo(&self) -> Result<f64> {
        lda_elbo(self.hyper(), &self.lambda, &[&self.shard])
    }

    /// Records `after` as the latest ELBO, checking it against the previous
    /// one under the monotonicity policy.
    pub fn check_progress(&mut self, after: f64) -> Result<()> {
        if let Some(before) = self.last_elbo {
            self.policy.check(before, after)?;
        }
        self.last_elbo = Some(after);
        Ok(())
    }

    /// Fresh φ for entry `e` without applying it: `(topics, weights)`.
    pub fn update_phi<R: Rng + ?Sized>(&self, e: usize, rng: &mut R) -> Result<(Vec<usize>, Vec<f64>)> {
        let mut scratch = Scratch::default();
        let w = self.shard.entries()[e].word as usize;
        self.shard.update_phi(e, self.lambda_column(w), &self.normalizers, rng, &mut scratch)?;
        Ok(scratch.proposal())
    }

    /// Full-K update of one entry with its deltas applied (SVI step).
    pub fn svi_entry_step<R: Rng + ?Sized>(&mut self, e: usize, rng: &mut R) -> Result<u64> {
        let k = self.hyper().topics;
        let w = self.shard.entries()[e].word as usize;
        let mut scratch = Scratch::default();
        let column = &mut self.lambda[w * k..(w + 1) * k];
        let n = self.shard.step_entry(e, column, &mut self.normalizers, rng, &mut scratch)?;
        self.updates += n;
        Ok(n)
    }

    /// Restricted update of one entry over `subset`.
    pub fn esvi_entry_step(&mut self, e: usize, subset: &[usize]) -> Result<u64> {
        let k = self.hyper().topics;
        let w = self.shard.entries()[e].word as usize;
        let mut scratch = Scratch::default();
        let column = &mut self.lambda[w * k..(w + 1) * k];
        let n = self.shard.restricted_step(e, subset, column, &mut self.normalizers, &mut scratch)?;
        self.updates += n;
        Ok(n)
    }

    /// Updates every entry of word `w` while holding its λ column.
    pub fn process_word<R: Rng + ?Sized>(&mut self, w: usize, rng: &mut R, scratch: &mut Scratch) -> Result<u64> {
        let k = self.hyper().topics;
        let column = &mut self.lambda[w * k..(w + 1) * k];
        let n = process_word_column(&mut self.shard, w, column, &mut self.normalizers, rng, scratch)?;
        self.updates += n;
        Ok(n)
    }

    /// Updates every entry of document `d` with full-K φ updates.
    pub fn process_doc<R: Rng + ?Sized>(&mut self, d: usize, rng: &mut R) -> Result<u64> {
        let mut total = 0;
        for e in self.shard.doc_entries(d) {
            total += self.svi_entry_step(e, rng)?;
        }
        Ok(total)
    }

    /// One synchronous batch pass: all φ from the current (γ, λ), then γ,
    /// λ and the normalizers recomputed. Work is split over `threads`
    /// document chunks. Returns the new ELBO.
    pub fn vi_epoch(&mut self, threads: usize) -> Result<f64> {
        if self.last_elbo.is_none() {
            self.last_elbo = Some(self.elbo()?);
        }
        let k = self.hyper().topics;
        let entries = self.shard.num_entries();
        let mut fresh = vec![0.0; entries * k];
        let chunk = entries.div_ceil(threads.max(1)).max(1);
        {
            let shard = &self.shard;
            let lambda = &self.lambda;
            let dg_norms: Vec<f64> = self.normalizers.iter().map(|&p| digamma(p)).collect();
            std::thread::scope(|scope| -> Result<()> {
                let handles: Vec<_> = fresh
                    .chunks_mut(chunk * k)
                    .enumerate()
                    .map(|(c, out)| {
                        let dg_norms = &dg_norms;
                        scope.spawn(move || vi_rows(shard, lambda, dg_norms, c * chunk, out))
                    })
                    .collect();
                for h in handles {
                    h.join().map_err(|_| Error::InvalidState("vi worker panicked".into()))??;
                }
                Ok(())
            })?;
        }
        *self.shard.phi_dense_rows_mut().ok_or_else(|| Error::InvalidState("batch VI needs dense assignments".into()))? =
            fresh;
        let gamma = self.shard.batch_gamma();
        self.shard.set_gamma(gamma);
        self.lambda = self.batch_lambda();
        self.normalizers = column_sums(&self.lambda, k);
        self.updates += (entries * k) as u64;
        let after = self.elbo()?;
        self.check_progress(after)?;
        Ok(after)
    }

    /// λ recomputed from the stored assignments.
    pub fn batch_lambda(&self) -> Vec<f64> {
        let h = self.hyper();
        let mut lambda = vec![h.eta; h.vocab * h.topics];
        self.shard.accumulate_lambda(&mut lambda);
        lambda
    }

    /// Largest relative deviation of the incremental γ, λ and normalizers
    /// from a batch recomputation.
    pub fn batch_deviation(&self) -> f64 {
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1.0);
        let max_rel = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(&a, &b)| rel(a, b)).fold(0.0, f64::max);
        let lambda = self.batch_lambda();
        let norms = column_sums(&lambda, self.hyper().topics);
        max_rel(&self.shard.batch_gamma(), self.shard.gamma())
            .max(max_rel(&lambda, &self.lambda))
            .max(max_rel(&norms, &self.normalizers))
    }

    pub fn conservation(&self) -> ConservationReport {
        let h = self.hyper();
        let lambda_mass: f64 = self.lambda.iter().map(|l| l - h.eta).sum();
        let exact = column_sums(&self.lambda, h.topics);
        ConservationReport {
            gamma: self.shard.gamma_conservation_error(),
            lambda: (lambda_mass - self.shard.total_tokens()).abs(),
            normalizers: exact.iter().zip(&self.normalizers).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max),
        }
    }
}

/// Serial ESVI driver: word columns visited cyclically in the seeded
/// [`word_order`], with the RNG of worker 0.
#[derive(Debug, Clone)]
pub struct WordSweep {
    order: Vec<usize>,
    cursor: usize,
    rng: ChaCha8Rng,
}

impl WordSweep {
    pub fn new(vocab: usize, seed: u64) -> Self {
        Self { order: word_order(vocab, seed), cursor: 0, rng: worker_rng(seed, 0) }
    }

    /// Processes the next word column. Returns the coordinate updates made.
    pub fn step(&mut self, state: &mut LdaState, scratch: &mut Scratch) -> Result<u64> {
        let w = self.order[self.cursor];
        self.cursor = (self.cursor + 1) % self.order.len();
        state.process_word(w, &mut self.rng, scratch)
    }
}

/// Shared word-column kernel: every entry of `w` in the shard, in index order.
pub fn process_word_column<R: Rng + ?Sized>(
    shard: &mut DocShard,
    w: usize,
    column: &mut [f64],
    norms: &mut impl super::Normalizers,
    rng: &mut R,
    scratch: &mut Scratch,
) -> Result<u64> {
    let mut total = 0;
    let count = shard.word_entries(w).len();
    for i in 0..count {
        let e = shard.word_entries(w)[i] as usize;
        total += shard.step_entry(e, column, norms, rng, scratch)?;
    }
    Ok(total)
}

fn vi_rows(shard: &DocShard, lambda: &[f64], dg_norms: &[f64], first: usize, out: &mut [f64]) -> Result<()> {
    let k = shard.hyper().topics;
    let mut scores = vec![0.0; k];
    for (i, row) in out.chunks_mut(k).enumerate() {
        let entry = shard.entries()[first + i];
        let gamma = shard.gamma_row(entry.doc as usize);
        let col = &lambda[entry.word as usize * k..(entry.word as usize + 1) * k];
        for t in 0..k {
            if !(gamma[t] > 0.0 && col[t] > 0.0) {
                return Err(Error::Corrupted(format!("nonpositive parameter at topic {t}")));
            }
            scores[t] = digamma(gamma[t]) + digamma(col[t]) - dg_norms[t];
        }
        crate::expfam::softmax_into(&scores, 1.0, row);
    }
    Ok(())
}

/// Per-topic sums Σ_v λ_kv of a word-major matrix.
pub fn column_sums(lambda: &[f64], k: usize) -> Vec<f64> {
    let mut sums = vec![0.0; k];
    for col in lambda.chunks_exact(k) {
        for (s, l) in sums.iter_mut().zip(col) {
            *s += l;
        }
    }
    sums
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::corpus::Document;

    fn tiny() -> (Corpus, LdaHyper) {
        let docs = vec![
            Document::from_tokens([0, 1, 1, 2]),
            Document::from_tokens([2, 3, 3, 3, 4]),
            Document::from_tokens([0, 4]),
        ];
        (Corpus::new(5, docs), LdaHyper { topics: 3, vocab: 5, alpha: 0.1, eta: 0.01 })
    }

    #[test]
    fn initial_state_is_consistent() {
        let (corpus, hyper) = tiny();
        let s = LdaState::new(&corpus, hyper, PhiMode::Dense, 4).unwrap();
        let c = s.conservation();
        assert!(c.holds(), "{c:?}");
        assert!(c.normalizers < 1e-12);
        assert!(s.batch_deviation() < 1e-14);
        assert!(s.shard().phi_normalization_error() < 1e-12);
    }

    #[test]
    fn word_sweeps_are_monotone() {
        let (corpus, hyper) = tiny();
        let mut s = LdaState::new(&corpus, hyper, PhiMode::Dense, 4).unwrap();
        let mut rng = worker_rng(4, 0);
        let mut scratch = Scratch::default();
        let mut prev = s.elbo().unwrap();
        for _ in 0..20 {
            for w in word_order(5, 4) {
                s.process_word(w, &mut rng, &mut scratch).unwrap();
                let now = s.elbo().unwrap();
                assert!(now >= prev - 1e-9 * prev.abs(), "{prev} -> {now}");
                prev = now;
            }
        }
        assert!(s.batch_deviation() < 1e-12);
        assert!(s.conservation().holds());
    }

    #[test]
    fn vi_epochs_agree_across_threads() {
        let (corpus, hyper) = tiny();
        let mut a = LdaState::new(&corpus, hyper, PhiMode::Dense, 7).unwrap();
        let mut b = a.clone();
        for _ in 0..5 {
            let ea = a.vi_epoch(1).unwrap();
            let eb = b.vi_epoch(3).unwrap();
            assert_eq!(ea, eb);
        }
        assert_eq!(a.lambda(), b.lambda());
    }

    #[test]
    fn rng_streams_differ() {
        let a: u64 = worker_rng(1, 0).random();
        let b: u64 = worker_rng(1, 1).random();
        assert_ne!(a, b);
        assert_eq!(word_order(10, 3), word_order(10, 3));
    }
}
