use crate::error::{Error, Result};
use crate::expfam::ExpFamily;
use crate::harness::corpus::Document;
use crate::special::{digamma, dirichlet_kl_symmetric, ln_gamma};

/// Mixture-of-multinomials component over a vocabulary of size V with a
/// symmetric Dirichlet(η) prior. φ(x, k) is the word-count vector of x.
///
/// ν̃_k holds the Dirichlet parameters directly, so E_q[θ_k] is the
/// Dirichlet expectation of the log word probabilities and E_q[g(θ_k)] is
/// zero: the normalizer is carried by the ψ(Σ_v ν̃_kv) term.
#[derive(Debug, Clone)]
pub struct MultinomialFamily {
    eta: f64,
    prior: Vec<f64>,
}

impl MultinomialFamily {
    pub fn new(vocab_size: usize, eta: f64) -> Result<Self> {
        if !(eta > 0.0) {
            return Err(Error::InvalidState(format!("eta must be positive, got {eta}")));
        }
        Ok(Self { eta, prior: vec![eta; vocab_size] })
    }

    pub fn vocab_size(&self) -> usize {
        self.prior.len()
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }
}

/// E_q[log θ_v] = ψ(count_v) − ψ(Σ counts) and E_q[g] = 0.
pub fn multinomial_expectations(counts: &[f64]) -> Result<(Vec<f64>, f64)> {
    if let Some(c) = counts.iter().find(|c| !(**c > 0.0)) {
        return Err(Error::InvalidState(format!("dirichlet count must be positive, got {c}")));
    }
    let dg_total = digamma(counts.iter().sum());
    Ok((counts.iter().map(|&c| digamma(c) - dg_total).collect(), 0.0))
}

impl ExpFamily for MultinomialFamily {
    type Datum = Document;

    fn stat_dim(&self) -> usize {
        self.prior.len()
    }

    fn prior_strength(&self) -> f64 {
        1.0
    }

    fn prior_stat(&self) -> &[f64] {
        &self.prior
    }

    fn accumulate_stat(&self, x: &Document, weight: f64, out: &mut [f64]) {
        for &(w, c) in &x.entries {
            out[w as usize] += weight * c as f64;
        }
    }

    fn expected_natural_param(&self, _n_tilde: f64, nu_tilde: &[f64], out: &mut [f64]) {
        let dg_total = digamma(nu_tilde.iter().sum());
        for (o, &c) in out.iter_mut().zip(nu_tilde) {
            *o = digamma(c) - dg_total;
        }
    }

    fn expected_log_partition(&self, _n_tilde: f64, _nu_tilde: &[f64]) -> f64 {
        0.0
    }

    fn expected_score(&self, x: &Document, _n_tilde: f64, nu_tilde: &[f64]) -> f64 {
        let dg_total = digamma(nu_tilde.iter().sum());
        x.entries
            .iter()
            .map(|&(w, c)| c as f64 * (digamma(nu_tilde[w as usize]) - dg_total))
            .sum()
    }

    fn score_from_expectations(&self, x: &Document, e_theta: &[f64], e_g: f64) -> f64 {
        x.entries.iter().map(|&(w, c)| c as f64 * e_theta[w as usize]).sum::<f64>() - e_g
    }

    fn log_base_measure(&self, x: &Document) -> f64 {
        let total = x.total_tokens() as f64;
        ln_gamma(total + 1.0) - x.entries.iter().map(|&(_, c)| ln_gamma(c as f64 + 1.0)).sum::<f64>()
    }

    fn kl_from_prior(&self, _n_tilde: f64, nu_tilde: &[f64]) -> f64 {
        dirichlet_kl_symmetric(nu_tilde, self.eta)
    }
}
