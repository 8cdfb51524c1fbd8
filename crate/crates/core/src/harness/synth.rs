//! Synthetic datasets with planted structure for tests and demos.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Gamma, Normal};

use super::corpus::{Corpus, Document};

/// Parameters of the LDA generative process used to plant topics.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedTopics {
    pub docs: usize,
    pub vocab: usize,
    pub topics: usize,
    pub min_doc_len: usize,
    pub max_doc_len: usize,
    /// Document-topic Dirichlet concentration.
    pub alpha: f64,
    /// Topic-word Dirichlet concentration; small values give sparse,
    /// well-separated topics.
    pub eta: f64,
}

impl Default for PlantedTopics {
    fn default() -> Self {
        Self { docs: 50, vocab: 200, topics: 8, min_doc_len: 80, max_doc_len: 160, alpha: 0.2, eta: 0.05 }
    }
}

/// Corpus drawn from [`PlantedTopics`] plus the true topic-word matrix.
#[derive(Debug, Clone)]
pub struct PlantedCorpus {
    pub corpus: Corpus,
    /// `topics × vocab`, rows on the simplex.
    pub topic_word: Vec<Vec<f64>>,
}

fn dirichlet<R: Rng>(rng: &mut R, dim: usize, conc: f64) -> Vec<f64> {
    let gamma = Gamma::new(conc, 1.0).expect("positive concentration");
    let mut v: Vec<f64> = (0..dim).map(|_| gamma.sample(rng).max(1e-300)).collect();
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

impl PlantedTopics {
    pub fn generate(&self, seed: u64) -> PlantedCorpus {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let topic_word: Vec<Vec<f64>> = (0..self.topics).map(|_| dirichlet(&mut rng, self.vocab, self.eta)).collect();
        let word_dists: Vec<WeightedIndex<f64>> =
            topic_word.iter().map(|t| WeightedIndex::new(t).expect("valid topic")).collect();
        let docs = (0..self.docs)
            .map(|_| {
                let theta = dirichlet(&mut rng, self.topics, self.alpha);
                let topic_dist = WeightedIndex::new(&theta).expect("valid mixture");
                let len = rng.random_range(self.min_doc_len..=self.max_doc_len);
                Document::from_tokens((0..len).map(|_| {
                    let k = topic_dist.sample(&mut rng);
                    word_dists[k].sample(&mut rng) as u32
                }))
            })
            .collect();
        PlantedCorpus { corpus: Corpus::new(self.vocab, docs), topic_word }
    }
}

/// Mixture of multinomials: each document draws all its words from one
/// planted component. Components use disjoint vocabulary blocks with a
/// little leakage, so the planted partition is recoverable.
pub fn planted_multinomial_mixture(
    docs: usize,
    vocab: usize,
    components: usize,
    doc_len: usize,
    leakage: f64,
    seed: u64,
) -> (Corpus, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let block = vocab / components;
    let dists: Vec<WeightedIndex<f64>> = (0..components)
        .map(|k| {
            let weights: Vec<f64> = (0..vocab)
                .map(|v| if v / block == k { 1.0 } else { leakage })
                .collect();
            WeightedIndex::new(&weights).expect("valid component")
        })
        .collect();
    let mut labels = Vec::with_capacity(docs);
    let corpus_docs = (0..docs)
        .map(|i| {
            let k = i % components;
            labels.push(k);
            Document::from_tokens((0..doc_len).map(|_| dists[k].sample(&mut rng) as u32))
        })
        .collect();
    (Corpus::new(vocab, corpus_docs), labels)
}

/// Isotropic Gaussian clusters around the given centers.
pub fn planted_gaussian_clusters(
    points_per_cluster: usize,
    centers: &[Vec<f64>],
    sigma: f64,
    seed: u64,
) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).expect("valid sigma");
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for i in 0..points_per_cluster * centers.len() {
        let k = i % centers.len();
        data.push(centers[k].iter().map(|c| c + noise.sample(&mut rng)).collect());
        labels.push(k);
    }
    (data, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planted_topics_shape() {
        let spec = PlantedTopics::default();
        let p = spec.generate(3);
        assert_eq!(p.corpus.num_docs(), 50);
        assert_eq!(p.corpus.num_words, 200);
        assert_eq!(p.topic_word.len(), 8);
        for d in &p.corpus.docs {
            let n = d.total_tokens() as usize;
            assert!((spec.min_doc_len..=spec.max_doc_len).contains(&n));
            assert!(d.entries.iter().all(|&(w, _)| (w as usize) < 200));
        }
        assert_eq!(spec.generate(3).corpus, p.corpus);
    }

    #[test]
    fn clusters_and_mixtures() {
        let (data, labels) = planted_gaussian_clusters(5, &[vec![0.0, 0.0], vec![10.0, 10.0]], 1.0, 1);
        assert_eq!(data.len(), 10);
        assert_eq!(labels.iter().filter(|&&l| l == 1).count(), 5);
        let (corpus, labels) = planted_multinomial_mixture(20, 40, 2, 30, 0.01, 2);
        assert_eq!(corpus.num_docs(), 20);
        assert_eq!(labels.len(), 20);
        assert!(corpus.docs.iter().all(|d| d.total_tokens() == 30));
    }
}
