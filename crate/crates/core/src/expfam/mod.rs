//! Mixtures of exponential families: state, update rules and objectives.
//!
//! The generative model draws mixing weights π ~ Dirichlet(α), component
//! parameters θ_k from a conjugate prior with strength n_k and mean ν_k, a
//! component z_i ~ Multinomial(π) per datum, and x_i from the exponential
//! family `exp(⟨φ(x_i, k), θ_k⟩ − g(θ_k))`. The conjugate prior has
//! log-normalizer h(n_k, ν_k); it only enters the objective through the
//! family's KL term.
//!
//! The variational posterior is fully factorized: π̃ for the mixing weights,
//! (ñ_k, ν̃_k) per component and a point z̃_i on the K-simplex per datum.
//! Throughout, ν̃_k is stored as the accumulated natural statistic
//! `n_k ν_k + Σ_i z̃_{i,k} φ(x_i, k)`.

mod fit;
mod ops;

pub use fit::{mixture_elbo, MixtureFit, MonotonicityPolicy};
pub use ops::{
    component_score, compute_u, restricted_elbo, softmax_into, update_z_full, update_z_subset,
};

use crate::error::{Error, Result};

/// Relative ELBO slack tolerated by monotonicity checks.
pub const ELBO_SLACK: f64 = 1e-9;

/// A conjugate exponential family usable as a mixture component.
///
/// The sufficient statistic is assumed to be independent of the component
/// index, which holds for every family in [`crate::models`].
pub trait ExpFamily: Sync {
    type Datum: Sync;

    /// Length of φ(x, k) and ν̃_k.
    fn stat_dim(&self) -> usize;

    /// Prior strength n_k.
    fn prior_strength(&self) -> f64;

    /// The prior natural statistic n_k ν_k.
    fn prior_stat(&self) -> &[f64];

    /// `out += weight · φ(x, k)`.
    fn accumulate_stat(&self, x: &Self::Datum, weight: f64, out: &mut [f64]);

    /// E_q[θ_k] under the variational factor (ñ_k, ν̃_k).
    fn expected_natural_param(&self, n_tilde: f64, nu_tilde: &[f64], out: &mut [f64]);

    /// E_q[g(θ_k)].
    fn expected_log_partition(&self, n_tilde: f64, nu_tilde: &[f64]) -> f64;

    /// `⟨φ(x, k), E_q[θ_k]⟩ − E_q[g(θ_k)]`. Families override this when the
    /// statistic is sparse.
    fn expected_score(&self, x: &Self::Datum, n_tilde: f64, nu_tilde: &[f64]) -> f64 {
        let mut e_theta = vec![0.0; self.stat_dim()];
        self.expected_natural_param(n_tilde, nu_tilde, &mut e_theta);
        let e_g = self.expected_log_partition(n_tilde, nu_tilde);
        self.score_from_expectations(x, &e_theta, e_g)
    }

    /// Same score from precomputed expectations.
    fn score_from_expectations(&self, x: &Self::Datum, e_theta: &[f64], e_g: f64) -> f64 {
        let mut stat = vec![0.0; self.stat_dim()];
        self.accumulate_stat(x, 1.0, &mut stat);
        let inner: f64 = stat.iter().zip(e_theta).map(|(a, b)| a * b).sum();
        inner - e_g
    }

    /// log h(x), the base measure of the likelihood. Constant in all
    /// variational parameters; only shifts the ELBO.
    fn log_base_measure(&self, _x: &Self::Datum) -> f64 {
        0.0
    }

    /// KL(q(θ_k | ñ_k, ν̃_k) ‖ p(θ_k | n_k, ν_k)).
    fn kl_from_prior(&self, n_tilde: f64, nu_tilde: &[f64]) -> f64;
}

/// Variational global parameters: π̃ and θ̃_k = (ñ_k, ν̃_k).
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalMixtureState {
    pub alpha: f64,
    pub pi_tilde: Vec<f64>,
    pub n_tilde: Vec<f64>,
    pub nu_tilde: Vec<Vec<f64>>,
}

impl GlobalMixtureState {
    /// The prior-only state: π̃_k = α, ñ_k = n_k, ν̃_k = n_k ν_k.
    pub fn prior<F: ExpFamily>(family: &F, num_components: usize, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::InvalidState(format!("dirichlet prior must be positive, got {alpha}")));
        }
        if !(family.prior_strength() > 0.0) {
            return Err(Error::InvalidState("prior strength must be positive".into()));
        }
        Ok(Self {
            alpha,
            pi_tilde: vec![alpha; num_components],
            n_tilde: vec![family.prior_strength(); num_components],
            nu_tilde: vec![family.prior_stat().to_vec(); num_components],
        })
    }

    pub fn num_components(&self) -> usize {
        self.pi_tilde.len()
    }

    /// Batch recomputation of π̃, ñ, ν̃ from all assignments.
    pub fn from_assignments<F: ExpFamily>(
        family: &F,
        alpha: f64,
        data: &[F::Datum],
        z: &[Vec<f64>],
        num_components: usize,
    ) -> Result<Self> {
        let mut state = Self::prior(family, num_components, alpha)?;
        for (x, zi) in data.iter().zip(z) {
            for (k, &w) in zi.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                state.pi_tilde[k] += w;
                state.n_tilde[k] += w;
                family.accumulate_stat(x, w, &mut state.nu_tilde[k]);
            }
        }
        Ok(state)
    }

    /// π̃_k += Δz̃_{i,k}.
    pub fn update_pi(&mut self, k: usize, delta: f64) -> Result<()> {
        self.pi_tilde[k] += delta;
        if self.pi_tilde[k] < self.alpha - 1e-9 {
            return Err(Error::Corrupted(format!(
                "pi_tilde[{k}] = {} fell below alpha = {}",
                self.pi_tilde[k], self.alpha
            )));
        }
        Ok(())
    }

    /// ñ_k += Δz̃_{i,k} and ν̃_k += Δz̃_{i,k} φ(x_i, k).
    pub fn update_theta<F: ExpFamily>(
        &mut self,
        family: &F,
        k: usize,
        x: &F::Datum,
        delta: f64,
    ) -> Result<()> {
        self.n_tilde[k] += delta;
        family.accumulate_stat(x, delta, &mut self.nu_tilde[k]);
        if self.n_tilde[k] < family.prior_strength() - 1e-9 {
            return Err(Error::Corrupted(format!(
                "n_tilde[{k}] = {} fell below the prior strength {}",
                self.n_tilde[k],
                family.prior_strength()
            )));
        }
        Ok(())
    }

    /// Largest relative deviation between two states, used for
    /// incremental-versus-batch comparisons.
    pub fn max_relative_diff(&self, other: &Self) -> f64 {
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1.0);
        let mut worst: f64 = 0.0;
        for k in 0..self.num_components() {
            worst = worst.max(rel(self.pi_tilde[k], other.pi_tilde[k]));
            worst = worst.max(rel(self.n_tilde[k], other.n_tilde[k]));
            for (a, b) in self.nu_tilde[k].iter().zip(&other.nu_tilde[k]) {
                worst = worst.max(rel(*a, *b));
            }
        }
        worst
    }
}

/// Per-datum variational distribution z̃_i.
#[derive(Debug, Clone, PartialEq)]
pub enum LocalAssignment {
    Dense(Vec<f64>),
    /// Truncated to a subset of components; weights sum to `stored_mass`.
    Sparse { entries: Vec<(usize, f64)>, stored_mass: f64 },
}

impl LocalAssignment {
    pub fn stored_mass(&self) -> f64 {
        match self {
            LocalAssignment::Dense(_) => 1.0,
            LocalAssignment::Sparse { stored_mass, .. } => *stored_mass,
        }
    }

    pub fn weight(&self, k: usize) -> f64 {
        match self {
            LocalAssignment::Dense(w) => w[k],
            LocalAssignment::Sparse { entries, .. } => {
                entries.iter().find(|(t, _)| *t == k).map_or(0.0, |(_, w)| *w)
            }
        }
    }

    pub fn total(&self) -> f64 {
        match self {
            LocalAssignment::Dense(w) => w.iter().sum(),
            LocalAssignment::Sparse { entries, .. } => entries.iter().map(|(_, w)| w).sum(),
        }
    }
}

/// Maximize Σ_{k∈𝒦} z_k (u_k − log z_k) subject to Σ z_k = C, z ≥ 0.
#[derive(Debug, Clone, PartialEq)]
pub struct RestrictedProblem {
    pub subset: Vec<usize>,
    pub mass: f64,
    pub scores: Vec<f64>,
}

impl RestrictedProblem {
    pub fn new(subset: Vec<usize>, mass: f64, scores: Vec<f64>) -> Result<Self> {
        let problem = Self { subset, mass, scores };
        problem.validate()?;
        Ok(problem)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0) {
            return Err(Error::InvalidProblem(format!("mass must be positive, got {}", self.mass)));
        }
        if self.subset.len() < 2 {
            return Err(Error::InvalidProblem(format!(
                "subset needs at least two components, got {}",
                self.subset.len()
            )));
        }
        if self.scores.len() != self.subset.len() {
            return Err(Error::InvalidProblem("one score per subset entry required".into()));
        }
        let mut sorted = self.subset.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidProblem("subset indices must be distinct".into()));
        }
        Ok(())
    }
}
