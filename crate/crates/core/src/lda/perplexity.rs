use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::LdaHyper;
use crate::harness::corpus::Corpus;
use crate::special::digamma;

/// γ fixed-point iterations used to fold in the observed half.
pub const FOLD_IN_ITERATIONS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerplexityReport {
    /// exp(−mean log p(w)) over scored tokens; NaN when nothing was scored.
    pub perplexity: f64,
    pub scored_tokens: u64,
    /// Test documents with fewer than two tokens.
    pub skipped_docs: usize,
}

/// Document-completion perplexity with λ frozen.
///
/// Each test document's tokens are shuffled under `seed` and split in
/// half. γ is fitted to the first half by fixed-point iteration and the
/// second half is scored under p(w) = Σ_k (γ_k / Σγ) (λ_kw / π_k).
pub fn heldout_perplexity(hyper: &LdaHyper, lambda: &[f64], test: &Corpus, seed: u64) -> PerplexityReport {
    let k = hyper.topics;
    let mut norms = vec![0.0; k];
    for col in lambda.chunks_exact(k) {
        for (n, l) in norms.iter_mut().zip(col) {
            *n += l;
        }
    }
    let dg_norms: Vec<f64> = norms.iter().map(|&n| digamma(n)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut log_lik = 0.0;
    let mut scored = 0u64;
    let mut skipped = 0usize;
    let mut gamma = vec![0.0; k];
    let mut phi = vec![0.0; k];
    let mut next = vec![0.0; k];
    for doc in &test.docs {
        let mut tokens = doc.tokens();
        if tokens.len() < 2 {
            skipped += 1;
            continue;
        }
        tokens.shuffle(&mut rng);
        let (observed, held) = tokens.split_at(tokens.len() / 2);

        let mut counts: Vec<(u32, f64)> = Vec::new();
        let mut sorted = observed.to_vec();
        sorted.sort_unstable();
        for w in sorted {
            match counts.last_mut() {
                Some(last) if last.0 == w => last.1 += 1.0,
                _ => counts.push((w, 1.0)),
            }
        }

        gamma.fill(hyper.alpha + observed.len() as f64 / k as f64);
        for _ in 0..FOLD_IN_ITERATIONS {
            let dg: Vec<f64> = gamma.iter().map(|&g| digamma(g)).collect();
            next.fill(hyper.alpha);
            for &(w, c) in &counts {
                let col = &lambda[w as usize * k..(w as usize + 1) * k];
                let mut max = f64::NEG_INFINITY;
                for t in 0..k {
                    phi[t] = dg[t] + digamma(col[t]) - dg_norms[t];
                    max = max.max(phi[t]);
                }
                let mut total = 0.0;
                for p in phi.iter_mut() {
                    *p = (*p - max).exp();
                    total += *p;
                }
                for t in 0..k {
                    next[t] += c * phi[t] / total;
                }
            }
            std::mem::swap(&mut gamma, &mut next);
        }

        let gamma_total: f64 = gamma.iter().sum();
        for &w in held {
            let col = &lambda[w as usize * k..(w as usize + 1) * k];
            let p: f64 = (0..k).map(|t| gamma[t] / gamma_total * col[t] / norms[t]).sum();
            log_lik += p.ln();
            scored += 1;
        }
    }
    let perplexity = if scored == 0 { f64::NAN } else { (-log_lik / scored as f64).exp() };
    PerplexityReport { perplexity, scored_tokens: scored, skipped_docs: skipped }
}
