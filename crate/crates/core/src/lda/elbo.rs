use super::{DocShard, LdaHyper};
use crate::error::{Error, Result};
use crate::special::{digamma, dirichlet_kl_symmetric, ln_gamma};

/// Full LDA ELBO:
/// −Σ_k KL(λ_k ‖ η) − Σ_d KL(γ_d ‖ α)
/// + Σ_{d,n} count Σ_k φ (E log θ_dk + E log β_kw − log φ).
///
/// `lambda` is word-major `V × K`; shards may cover any disjoint set of
/// documents.
pub fn lda_elbo(hyper: &LdaHyper, lambda: &[f64], shards: &[&DocShard]) -> Result<f64> {
    let (k, v) = (hyper.topics, hyper.vocab);
    let mut norms = vec![0.0; k];
    for col in lambda.chunks_exact(k) {
        for (n, l) in norms.iter_mut().zip(col) {
            *n += l;
        }
    }
    let dg_norms: Vec<f64> = norms.iter().map(|&n| digamma(n)).collect();
    let mut e_log_beta = vec![0.0; v * k];
    let mut elbo = 0.0;
    let topic_const = ln_gamma(v as f64 * hyper.eta) - v as f64 * ln_gamma(hyper.eta);
    for t in 0..k {
        // KL(Dir(λ_t) ‖ Dir(η)) accumulated column by column.
        let mut kl = ln_gamma(norms[t]) - topic_const;
        for w in 0..v {
            let l = lambda[w * k + t];
            let elb = digamma(l) - dg_norms[t];
            e_log_beta[w * k + t] = elb;
            kl += -ln_gamma(l) + (l - hyper.eta) * elb;
        }
        elbo -= kl;
    }

    let mut e_log_theta = vec![0.0; k];
    for shard in shards {
        for d in 0..shard.num_docs() {
            let gamma = shard.gamma_row(d);
            elbo -= dirichlet_kl_symmetric(gamma, hyper.alpha);
            let dg_total = digamma(gamma.iter().sum());
            for (o, &g) in e_log_theta.iter_mut().zip(gamma) {
                *o = digamma(g) - dg_total;
            }
            for e in shard.doc_entries(d) {
                let entry = shard.entries()[e];
                let elb = &e_log_beta[entry.word as usize * k..(entry.word as usize + 1) * k];
                let mut term = 0.0;
                shard.for_each_phi(e, |t, w| {
                    if w > 0.0 {
                        term += w * (e_log_theta[t] + elb[t] - w.ln());
                    }
                });
                elbo += entry.count * term;
            }
        }
    }
    if !elbo.is_finite() {
        return Err(Error::Corrupted(format!("non-finite ELBO {elbo}")));
    }
    Ok(elbo)
}
