use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::expfam::ExpFamily;
use crate::special::{digamma, ln_gamma};

/// Normal-Gamma distribution over one dimension's (mean μ, precision τ):
/// τ ~ Gamma(shape, rate), μ | τ ~ N(mean, 1 / (kappa τ)).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalGamma {
    pub mean: f64,
    pub kappa: f64,
    pub shape: f64,
    pub rate: f64,
}

impl NormalGamma {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0 && self.shape > 0.0 && self.rate > 0.0) || !self.mean.is_finite() {
            return Err(Error::InvalidState(format!("invalid normal-gamma parameters {self:?}")));
        }
        Ok(())
    }

    /// KL(self ‖ other).
    pub fn kl(&self, other: &NormalGamma) -> f64 {
        let (a, b, a0, b0) = (self.shape, self.rate, other.shape, other.rate);
        let gamma_kl = (a - a0) * digamma(a) - ln_gamma(a) + ln_gamma(a0) + a0 * (b.ln() - b0.ln())
            + a * (b0 - b) / b;
        let ratio = other.kappa / self.kappa;
        let diff = self.mean - other.mean;
        let normal_kl = 0.5 * (ratio - 1.0 - ratio.ln() + other.kappa * (a / b) * diff * diff);
        gamma_kl + normal_kl
    }
}

/// Closed-form moments for the diagonal Gaussian likelihood.
///
/// With θ_j = (τ_j μ_j, −τ_j / 2) and g(θ) = Σ_j (τ_j μ_j² / 2 − log τ_j / 2),
/// returns (E[θ] laid out as `[E τμ; D] ++ [−E τ / 2; D]`, E[g]).
pub fn gaussian_expectations(posterior: &[NormalGamma]) -> Result<(Vec<f64>, f64)> {
    let d = posterior.len();
    let mut e_theta = vec![0.0; 2 * d];
    let mut e_g = 0.0;
    for (j, p) in posterior.iter().enumerate() {
        p.validate()?;
        let e_tau = p.shape / p.rate;
        let e_log_tau = digamma(p.shape) - p.rate.ln();
        e_theta[j] = p.mean * e_tau;
        e_theta[d + j] = -0.5 * e_tau;
        e_g += 0.5 * (1.0 / p.kappa + p.mean * p.mean * e_tau) - 0.5 * e_log_tau;
    }
    Ok((e_theta, e_g))
}

/// Diagonal-covariance Gaussian component with an independent Normal-Gamma
/// prior per dimension.
///
/// φ(x) = (x, x²). The conjugate statistic is stored as
/// `ν̃ = [κ m + Σ z x; D] ++ [2 b + κ m² + Σ z x²; D]` with ñ = κ, so the
/// posterior shape follows from the accumulated mass ñ − κ₀.
#[derive(Debug, Clone)]
pub struct DiagonalGaussianFamily {
    dim: usize,
    prior: NormalGamma,
    prior_stat: Vec<f64>,
}

impl DiagonalGaussianFamily {
    pub fn new(dim: usize, prior: NormalGamma) -> Result<Self> {
        prior.validate()?;
        let mut prior_stat = vec![prior.kappa * prior.mean; dim];
        prior_stat.extend(std::iter::repeat_n(
            2.0 * prior.rate + prior.kappa * prior.mean * prior.mean,
            dim,
        ));
        Ok(Self { dim, prior, prior_stat })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn prior(&self) -> NormalGamma {
        self.prior
    }

    /// Per-dimension posterior from the accumulated (ñ, ν̃).
    pub fn posterior(&self, n_tilde: f64, nu_tilde: &[f64]) -> Vec<NormalGamma> {
        let shape = self.prior.shape + 0.5 * (n_tilde - self.prior.kappa);
        (0..self.dim)
            .map(|j| {
                let first = nu_tilde[j];
                let second = nu_tilde[self.dim + j];
                let rate = 0.5 * (second - first * first / n_tilde);
                NormalGamma { mean: first / n_tilde, kappa: n_tilde, shape, rate }
            })
            .collect()
    }
}

impl ExpFamily for DiagonalGaussianFamily {
    type Datum = Vec<f64>;

    fn stat_dim(&self) -> usize {
        2 * self.dim
    }

    fn prior_strength(&self) -> f64 {
        self.prior.kappa
    }

    fn prior_stat(&self) -> &[f64] {
        &self.prior_stat
    }

    fn accumulate_stat(&self, x: &Vec<f64>, weight: f64, out: &mut [f64]) {
        for (j, &v) in x.iter().enumerate() {
            out[j] += weight * v;
            out[self.dim + j] += weight * v * v;
        }
    }

    fn expected_natural_param(&self, n_tilde: f64, nu_tilde: &[f64], out: &mut [f64]) {
        match gaussian_expectations(&self.posterior(n_tilde, nu_tilde)) {
            Ok((e, _)) => out.copy_from_slice(&e),
            Err(_) => out.fill(f64::NAN),
        }
    }

    fn expected_log_partition(&self, n_tilde: f64, nu_tilde: &[f64]) -> f64 {
        gaussian_expectations(&self.posterior(n_tilde, nu_tilde)).map_or(f64::NAN, |(_, g)| g)
    }

    fn score_from_expectations(&self, x: &Vec<f64>, e_theta: &[f64], e_g: f64) -> f64 {
        let d = self.dim;
        x.iter()
            .enumerate()
            .map(|(j, &v)| v * e_theta[j] + v * v * e_theta[d + j])
            .sum::<f64>()
            - e_g
    }

    fn log_base_measure(&self, _x: &Vec<f64>) -> f64 {
        -0.5 * self.dim as f64 * (2.0 * PI).ln()
    }

    fn kl_from_prior(&self, n_tilde: f64, nu_tilde: &[f64]) -> f64 {
        self.posterior(n_tilde, nu_tilde).iter().map(|p| p.kl(&self.prior)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prior() -> NormalGamma {
        NormalGamma { mean: 0.5, kappa: 0.1, shape: 2.0, rate: 3.0 }
    }

    #[test]
    fn prior_only_posterior_is_prior() {
        let fam = DiagonalGaussianFamily::new(3, prior()).unwrap();
        let post = fam.posterior(fam.prior_strength(), fam.prior_stat());
        for p in &post {
            assert!((p.mean - 0.5).abs() < 1e-15);
            assert!((p.kappa - 0.1).abs() < 1e-15);
            assert!((p.shape - 2.0).abs() < 1e-15);
            assert!((p.rate - 3.0).abs() < 1e-12);
        }
        let (e, g) = gaussian_expectations(&post).unwrap();
        let (e0, g0) = gaussian_expectations(&[prior(); 3]).unwrap();
        for (a, b) in e.iter().zip(&e0) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((g - g0).abs() < 1e-12);
        assert!(fam.kl_from_prior(fam.prior_strength(), fam.prior_stat()).abs() < 1e-12);
    }

    #[test]
    fn symmetric_data_keeps_prior_mean() {
        let fam = DiagonalGaussianFamily::new(1, prior()).unwrap();
        let mut nu = fam.prior_stat().to_vec();
        fam.accumulate_stat(&vec![0.5 + 2.0], 1.0, &mut nu);
        fam.accumulate_stat(&vec![0.5 - 2.0], 1.0, &mut nu);
        let post = fam.posterior(fam.prior_strength() + 2.0, &nu);
        assert!((post[0].mean - 0.5).abs() < 1e-14);
        assert!((post[0].shape - 3.0).abs() < 1e-14);
        // b = b0 + (Σ (x - m)^2) / 2 when the data mean equals m0.
        assert!((post[0].rate - 7.0).abs() < 1e-12);
    }

    #[test]
    fn conjugate_update_matches_textbook() {
        let p = prior();
        let fam = DiagonalGaussianFamily::new(1, p).unwrap();
        let xs = [1.0, 2.5, -0.7, 4.0];
        let mut nu = fam.prior_stat().to_vec();
        for &x in &xs {
            fam.accumulate_stat(&vec![x], 1.0, &mut nu);
        }
        let post = fam.posterior(p.kappa + xs.len() as f64, &nu)[0];
        let n = xs.len() as f64;
        let mean_x = xs.iter().sum::<f64>() / n;
        let ss: f64 = xs.iter().map(|x| (x - mean_x).powi(2)).sum();
        let kappa_n = p.kappa + n;
        let m_n = (p.kappa * p.mean + n * mean_x) / kappa_n;
        let b_n = p.rate + 0.5 * ss + p.kappa * n * (mean_x - p.mean).powi(2) / (2.0 * kappa_n);
        assert!((post.mean - m_n).abs() < 1e-13);
        assert!((post.shape - (p.shape + n / 2.0)).abs() < 1e-13);
        assert!((post.rate - b_n).abs() < 1e-11);
    }

    #[test]
    fn invalid_parameters_rejected() {
        let bad = NormalGamma { mean: 0.0, kappa: 1.0, shape: 0.0, rate: 1.0 };
        assert!(gaussian_expectations(&[bad]).is_err());
        assert!(DiagonalGaussianFamily::new(2, NormalGamma { rate: -1.0, ..prior() }).is_err());
        assert!(DiagonalGaussianFamily::new(2, NormalGamma { kappa: 0.0, ..prior() }).is_err());
    }

    #[test]
    fn kl_nonnegative() {
        let other = NormalGamma { mean: -1.0, kappa: 4.0, shape: 7.0, rate: 0.5 };
        assert!(other.kl(&prior()) > 0.0);
        assert!(prior().kl(&prior()).abs() < 1e-14);
    }
}
