use rand::Rng;

use super::topk::{truncate_pairs, TopKAssignment};
use super::LdaHyper;
use crate::error::{Error, Result};
use crate::expfam::{softmax_into, update_z_subset, RestrictedProblem};
use crate::harness::corpus::Document;
use crate::special::digamma;

/// Source of the per-topic normalizers π_k = Σ_v λ_k^v seen by a worker.
/// Serial drivers use the exact vector; parallel workers use a ledger that
/// buffers their own changes for later broadcast.
pub trait Normalizers {
    fn get(&self, k: usize) -> f64;
    fn add(&mut self, k: usize, delta: f64);
}

impl Normalizers for Vec<f64> {
    fn get(&self, k: usize) -> f64 {
        self[k]
    }

    fn add(&mut self, k: usize, delta: f64) {
        self[k] += delta;
    }
}

/// One distinct (document, word) pair; `count` repeated tokens share φ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entry {
    /// Document index local to the shard.
    pub doc: u32,
    pub word: u32,
    pub count: f64,
}

/// Stored per-entry assignments.
#[derive(Debug, Clone, PartialEq)]
pub enum PhiStore {
    /// `entries × K`, row-major.
    Dense(Vec<f64>),
    TopK { cutoff: usize, refresh: usize, rows: Vec<TopKAssignment> },
}

/// How a fresh assignment is stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhiMode {
    Dense,
    /// Keep the `cutoff` largest weights; each update also scores
    /// `refresh` random topics outside the stored set.
    TopK { cutoff: usize, refresh: usize },
}

/// A contiguous range of documents with their γ rows and φ assignments,
/// indexed both by document and by word.
#[derive(Debug, Clone, PartialEq)]
pub struct DocShard {
    hyper: LdaHyper,
    first_doc: usize,
    doc_start: Vec<usize>,
    gamma: Vec<f64>,
    entries: Vec<Entry>,
    phi: PhiStore,
    word_start: Vec<usize>,
    word_entries: Vec<u32>,
}

/// Scratch buffers reused across kernel calls.
#[derive(Debug, Default)]
pub struct Scratch {
    topics: Vec<usize>,
    scores: Vec<f64>,
    fresh: Vec<f64>,
    old: Vec<f64>,
}

impl Scratch {
    /// The last proposal as `(topics, weights)`.
    pub fn proposal(&self) -> (Vec<usize>, Vec<f64>) {
        (self.topics.clone(), self.fresh.clone())
    }
}

fn dense_row(phi: &[f64], e: usize, k: usize) -> &[f64] {
    &phi[e * k..(e + 1) * k]
}

impl DocShard {
    /// Builds a shard over `docs` whose first document has global index
    /// `first_doc`. Initial φ rows come from `init(word)`, called once per
    /// entry in document-major order; γ is recomputed from them.
    pub fn build<F>(hyper: LdaHyper, first_doc: usize, docs: &[Document], mode: PhiMode, mut init: F) -> Result<Self>
    where
        F: FnMut(u32) -> Vec<f64>,
    {
        let k = hyper.topics;
        let mut entries = Vec::new();
        let mut doc_start = Vec::with_capacity(docs.len() + 1);
        doc_start.push(0);
        for (d, doc) in docs.iter().enumerate() {
            for &(w, c) in &doc.entries {
                if w as usize >= hyper.vocab {
                    return Err(Error::InvalidState(format!("word {w} outside vocabulary of {}", hyper.vocab)));
                }
                entries.push(Entry { doc: d as u32, word: w, count: c as f64 });
            }
            doc_start.push(entries.len());
        }
        let phi = match mode {
            PhiMode::Dense => {
                let mut rows = Vec::with_capacity(entries.len() * k);
                for e in &entries {
                    rows.extend(init(e.word));
                }
                PhiStore::Dense(rows)
            }
            PhiMode::TopK { cutoff, refresh } => {
                if cutoff == 0 || cutoff > k {
                    return Err(Error::InvalidState(format!("cutoff {cutoff} outside [1, {k}]")));
                }
                let rows = entries.iter().map(|e| super::topk::topk_truncate(&init(e.word), cutoff)).collect();
                PhiStore::TopK { cutoff, refresh, rows }
            }
        };
        let mut shard = Self {
            hyper,
            first_doc,
            doc_start,
            gamma: vec![hyper.alpha; docs.len() * k],
            entries,
            phi,
            word_start: Vec::new(),
            word_entries: Vec::new(),
        };
        shard.index_words();
        shard.gamma = shard.batch_gamma();
        Ok(shard)
    }

    fn index_words(&mut self) {
        let v = self.hyper.vocab;
        let mut start = vec![0usize; v + 1];
        for e in &self.entries {
            start[e.word as usize + 1] += 1;
        }
        for w in 0..v {
            start[w + 1] += start[w];
        }
        let mut fill = start.clone();
        let mut index = vec![0u32; self.entries.len()];
        for (i, e) in self.entries.iter().enumerate() {
            let slot = &mut fill[e.word as usize];
            index[*slot] = i as u32;
            *slot += 1;
        }
        self.word_start = start;
        self.word_entries = index;
    }

    pub fn hyper(&self) -> &LdaHyper {
        &self.hyper
    }

    pub fn first_doc(&self) -> usize {
        self.first_doc
    }

    pub fn num_docs(&self) -> usize {
        self.doc_start.len() - 1
    }

    pub fn num_entries(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn phi_store(&self) -> &PhiStore {
        &self.phi
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn gamma_row(&self, d: usize) -> &[f64] {
        let k = self.hyper.topics;
        &self.gamma[d * k..(d + 1) * k]
    }

    /// Entry indices of document `d` (local).
    pub fn doc_entries(&self, d: usize) -> std::ops::Range<usize> {
        self.doc_start[d]..self.doc_start[d + 1]
    }

    /// Entry indices holding word `w`.
    pub fn word_entries(&self, w: usize) -> &[u32] {
        &self.word_entries[self.word_start[w]..self.word_start[w + 1]]
    }

    pub fn doc_tokens(&self, d: usize) -> f64 {
        self.entries[self.doc_entries(d)].iter().map(|e| e.count).sum()
    }

    pub fn total_tokens(&self) -> f64 {
        self.entries.iter().map(|e| e.count).sum()
    }

    /// φ of entry `e` as a dense K-vector.
    pub fn phi_dense(&self, e: usize) -> Vec<f64> {
        let k = self.hyper.topics;
        match &self.phi {
            PhiStore::Dense(rows) => dense_row(rows, e, k).to_vec(),
            PhiStore::TopK { rows, .. } => {
                let mut out = vec![0.0; k];
                for &(t, w) in rows[e].entries() {
                    out[t] = w;
                }
                out
            }
        }
    }

    /// Calls `f(topic, weight)` for every stored weight, in increasing
    /// topic order so that sums over a full top-k row match dense ones.
    pub fn for_each_phi(&self, e: usize, mut f: impl FnMut(usize, f64)) {
        let k = self.hyper.topics;
        match &self.phi {
            PhiStore::Dense(rows) => dense_row(rows, e, k).iter().enumerate().for_each(|(t, &w)| f(t, w)),
            PhiStore::TopK { rows, .. } => {
                let mut pairs = rows[e].entries().to_vec();
                pairs.sort_unstable_by_key(|p| p.0);
                pairs.into_iter().for_each(|(t, w)| f(t, w));
            }
        }
    }

    /// γ recomputed from the stored φ: α + Σ_n count · φ.
    pub fn batch_gamma(&self) -> Vec<f64> {
        let k = self.hyper.topics;
        let mut gamma = vec![self.hyper.alpha; self.num_docs() * k];
        for (i, e) in self.entries.iter().enumerate() {
            let row = &mut gamma[e.doc as usize * k..(e.doc as usize + 1) * k];
            self.for_each_phi(i, |t, w| row[t] += e.count * w);
        }
        gamma
    }

    /// Adds Σ count · φ into a word-major `V × K` buffer.
    pub fn accumulate_lambda(&self, lambda: &mut [f64]) {
        let k = self.hyper.topics;
        for (i, e) in self.entries.iter().enumerate() {
            let col = &mut lambda[e.word as usize * k..(e.word as usize + 1) * k];
            self.for_each_phi(i, |t, w| col[t] += e.count * w);
        }
    }

    fn score(&self, d: usize, column: &[f64], norms: &impl Normalizers, t: usize) -> Result<f64> {
        let g = self.gamma[d * self.hyper.topics + t];
        let l = column[t];
        let p = norms.get(t);
        if !(g > 0.0) || !(l > 0.0) || !(p > 0.0) {
            return Err(Error::Corrupted(format!(
                "nonpositive parameter at topic {t}: gamma {g}, lambda {l}, normalizer {p}"
            )));
        }
        Ok(digamma(g) + digamma(l) - digamma(p))
    }

    /// Fresh φ for entry `e` given its word's λ column.
    ///
    /// Dense storage scores all K topics. Top-k storage scores the stored
    /// topics plus `refresh` random ones, in increasing topic order, and
    /// then truncates. The result lands in `scratch.topics` and
    /// `scratch.fresh` (parallel arrays, sorted by topic).
    pub fn update_phi<R: Rng + ?Sized>(
        &self,
        e: usize,
        column: &[f64],
        norms: &impl Normalizers,
        rng: &mut R,
        scratch: &mut Scratch,
    ) -> Result<()> {
        let k = self.hyper.topics;
        let d = self.entries[e].doc as usize;
        scratch.topics.clear();
        match &self.phi {
            PhiStore::Dense(_) => scratch.topics.extend(0..k),
            PhiStore::TopK { refresh, rows, .. } => {
                scratch.topics.extend(rows[e].entries().iter().map(|p| p.0));
                if scratch.topics.len() < k && *refresh > 0 {
                    let draw = rand::seq::index::sample(rng, k, (*refresh).min(k));
                    scratch.topics.extend(draw);
                }
                scratch.topics.sort_unstable();
                scratch.topics.dedup();
            }
        }
        scratch.scores.clear();
        for &t in &scratch.topics {
            scratch.scores.push(self.score(d, column, norms, t)?);
        }
        scratch.fresh.resize(scratch.topics.len(), 0.0);
        softmax_into(&scratch.scores, 1.0, &mut scratch.fresh);
        Ok(())
    }

    /// Replaces the stored φ of entry `e` by the proposal in `scratch` and
    /// applies `count · (new − old)` to γ_d, the λ column and the
    /// normalizers. Returns the number of coordinates touched.
    pub fn apply_phi_delta(
        &mut self,
        e: usize,
        column: &mut [f64],
        norms: &mut impl Normalizers,
        scratch: &mut Scratch,
    ) -> Result<u64> {
        let k = self.hyper.topics;
        let Entry { doc, count, .. } = self.entries[e];
        let d = doc as usize;
        let touched = scratch.topics.len() as u64;
        match &mut self.phi {
            PhiStore::Dense(rows) => {
                let row = &mut rows[e * k..(e + 1) * k];
                scratch.old.clear();
                scratch.old.extend(scratch.topics.iter().map(|&t| row[t]));
                for (&t, &w) in scratch.topics.iter().zip(&scratch.fresh) {
                    row[t] = w;
                }
            }
            PhiStore::TopK { cutoff, rows, .. } => {
                let kept = truncate_pairs(scratch.topics.iter().copied().zip(scratch.fresh.iter().copied()), *cutoff);
                scratch.old.clear();
                scratch.old.extend(scratch.topics.iter().map(|&t| rows[e].weight(t)));
                for (i, &t) in scratch.topics.iter().enumerate() {
                    scratch.fresh[i] = kept.weight(t);
                }
                rows[e] = kept;
            }
        }
        let eta = self.hyper.eta;
        for i in 0..scratch.topics.len() {
            let t = scratch.topics[i];
            let delta = count * (scratch.fresh[i] - scratch.old[i]);
            if delta == 0.0 {
                continue;
            }
            self.gamma[d * k + t] += delta;
            column[t] += delta;
            norms.add(t, delta);
            if column[t] < eta - 1e-9 {
                return Err(Error::Corrupted(format!("lambda fell to {} below eta {eta} at topic {t}", column[t])));
            }
        }
        Ok(touched)
    }

    /// One full φ update of entry `e` followed by its deltas.
    pub fn step_entry<R: Rng + ?Sized>(
        &mut self,
        e: usize,
        column: &mut [f64],
        norms: &mut impl Normalizers,
        rng: &mut R,
        scratch: &mut Scratch,
    ) -> Result<u64> {
        self.update_phi(e, column, norms, rng, scratch)?;
        self.apply_phi_delta(e, column, norms, scratch)
    }

    /// Restricted update of entry `e` over `subset` (dense storage only):
    /// the mass C currently on the subset is redistributed in closed form.
    /// The full subset uses C = 1 exactly, matching [`Self::step_entry`].
    pub fn restricted_step(
        &mut self,
        e: usize,
        subset: &[usize],
        column: &mut [f64],
        norms: &mut impl Normalizers,
        scratch: &mut Scratch,
    ) -> Result<u64> {
        let k = self.hyper.topics;
        let PhiStore::Dense(rows) = &self.phi else {
            return Err(Error::InvalidState("restricted updates need dense assignments".into()));
        };
        let row = dense_row(rows, e, k);
        let mass = if subset.len() == k { 1.0 } else { subset.iter().map(|&t| row[t]).sum() };
        if mass == 0.0 {
            return Ok(0);
        }
        let d = self.entries[e].doc as usize;
        let scores = subset.iter().map(|&t| self.score(d, column, norms, t)).collect::<Result<Vec<_>>>()?;
        let problem = RestrictedProblem::new(subset.to_vec(), mass, scores)?;
        scratch.fresh = update_z_subset(&problem)?;
        scratch.topics.clear();
        scratch.topics.extend_from_slice(subset);
        self.apply_phi_delta(e, column, norms, scratch)
    }

    /// Splits into `parts` shards over contiguous, near-equal document ranges.
    pub fn split(self, parts: usize) -> Vec<DocShard> {
        let k = self.hyper.topics;
        let docs = self.num_docs();
        let mut out = Vec::with_capacity(parts);
        for p in 0..parts {
            let (lo, hi) = (p * docs / parts, (p + 1) * docs / parts);
            let (elo, ehi) = (self.doc_start[lo], self.doc_start[hi]);
            let entries = self.entries[elo..ehi]
                .iter()
                .map(|e| Entry { doc: e.doc - lo as u32, ..*e })
                .collect();
            let phi = match &self.phi {
                PhiStore::Dense(rows) => PhiStore::Dense(rows[elo * k..ehi * k].to_vec()),
                PhiStore::TopK { cutoff, refresh, rows } => {
                    PhiStore::TopK { cutoff: *cutoff, refresh: *refresh, rows: rows[elo..ehi].to_vec() }
                }
            };
            let mut shard = DocShard {
                hyper: self.hyper,
                first_doc: self.first_doc + lo,
                doc_start: self.doc_start[lo..=hi].iter().map(|s| s - elo).collect(),
                gamma: self.gamma[lo * k..hi * k].to_vec(),
                entries,
                phi,
                word_start: Vec::new(),
                word_entries: Vec::new(),
            };
            shard.index_words();
            out.push(shard);
        }
        out
    }

    /// Concatenates shards that cover consecutive document ranges.
    pub fn merge(mut shards: Vec<DocShard>) -> Result<DocShard> {
        if shards.is_empty() {
            return Err(Error::InvalidState("nothing to merge".into()));
        }
        shards.sort_by_key(|s| s.first_doc);
        if shards.len() == 1 {
            return Ok(shards.pop().expect("one shard"));
        }
        let mut iter = shards.into_iter();
        let mut acc = iter.next().expect("nonempty");
        for s in iter {
            if s.first_doc != acc.first_doc + acc.num_docs() {
                return Err(Error::InvalidState("shards are not contiguous".into()));
            }
            let doc_offset = acc.num_docs() as u32;
            let entry_offset = acc.entries.len();
            acc.entries.extend(s.entries.iter().map(|e| Entry { doc: e.doc + doc_offset, ..*e }));
            acc.doc_start.extend(s.doc_start[1..].iter().map(|x| x + entry_offset));
            acc.gamma.extend_from_slice(&s.gamma);
            match (&mut acc.phi, s.phi) {
                (PhiStore::Dense(a), PhiStore::Dense(b)) => a.extend(b),
                (PhiStore::TopK { rows: a, .. }, PhiStore::TopK { rows: b, .. }) => a.extend(b),
                _ => return Err(Error::InvalidState("mixed assignment storage".into())),
            }
        }
        acc.index_words();
        Ok(acc)
    }

    /// Largest |Σ_k (γ_dk − α) − N_d| over the shard's documents.
    pub fn gamma_conservation_error(&self) -> f64 {
        (0..self.num_docs())
            .map(|d| {
                let mass: f64 = self.gamma_row(d).iter().map(|g| g - self.hyper.alpha).sum();
                (mass - self.doc_tokens(d)).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Largest deviation of any stored φ row from unit mass.
    pub fn phi_normalization_error(&self) -> f64 {
        (0..self.entries.len())
            .map(|e| {
                let mut s = 0.0;
                self.for_each_phi(e, |_, w| s += w);
                (s - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }

    pub(crate) fn set_gamma(&mut self, gamma: Vec<f64>) {
        self.gamma = gamma;
    }

    pub(crate) fn phi_dense_rows_mut(&mut self) -> Option<&mut Vec<f64>> {
        match &mut self.phi {
            PhiStore::Dense(rows) => Some(rows),
            PhiStore::TopK { .. } => None,
        }
    }
}
