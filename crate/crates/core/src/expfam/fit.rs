use rand::Rng;
use rand_distr::Exp1;

use super::ops::{component_score, softmax_into, update_z_subset};
use super::{ExpFamily, GlobalMixtureState, RestrictedProblem, ELBO_SLACK};
use crate::error::{Error, Result};
use crate::special::{digamma, dirichlet_kl_symmetric};

/// What to do when the ELBO decreases by more than the allowed slack.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MonotonicityPolicy {
    /// Return [`Error::ElboDecrease`].
    Strict,
    /// Log a warning and continue.
    Warn,
}

impl Default for MonotonicityPolicy {
    fn default() -> Self {
        if cfg!(debug_assertions) {
            MonotonicityPolicy::Strict
        } else {
            MonotonicityPolicy::Warn
        }
    }
}

impl MonotonicityPolicy {
    pub fn check(self, before: f64, after: f64) -> Result<()> {
        if after >= before - ELBO_SLACK * before.abs().max(1.0) {
            return Ok(());
        }
        match self {
            MonotonicityPolicy::Strict => Err(Error::ElboDecrease { before, after }),
            MonotonicityPolicy::Warn => {
                log::warn!("ELBO decreased from {before} to {after}");
                Ok(())
            }
        }
    }
}

/// Draw z̃_i ~ Dirichlet(1, …, 1).
fn dirichlet_one<R: Rng + ?Sized>(rng: &mut R, k: usize) -> Vec<f64> {
    let mut z: Vec<f64> = (0..k).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = z.iter().sum();
    z.iter_mut().for_each(|w| *w /= total);
    z
}

/// A mixture model under fit: data, dense local assignments and the
/// variational globals, kept consistent by incremental updates.
pub struct MixtureFit<'a, F: ExpFamily> {
    family: &'a F,
    data: &'a [F::Datum],
    state: GlobalMixtureState,
    z: Vec<Vec<f64>>,
    policy: MonotonicityPolicy,
    last_elbo: Option<f64>,
    updates: u64,
}

impl<'a, F: ExpFamily> MixtureFit<'a, F> {
    /// Random start: each z̃_i ~ Dirichlet(1), globals by one batch pass.
    pub fn new<R: Rng + ?Sized>(
        family: &'a F,
        data: &'a [F::Datum],
        num_components: usize,
        alpha: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if num_components == 0 {
            return Err(Error::InvalidState("need at least one component".into()));
        }
        let z = (0..data.len()).map(|_| dirichlet_one(rng, num_components)).collect();
        Self::from_assignments(family, data, alpha, z)
    }

    pub fn from_assignments(
        family: &'a F,
        data: &'a [F::Datum],
        alpha: f64,
        z: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if z.len() != data.len() {
            return Err(Error::InvalidState("one assignment per datum required".into()));
        }
        let k = z.first().map_or(1, Vec::len);
        let state = GlobalMixtureState::from_assignments(family, alpha, data, &z, k)?;
        Ok(Self {
            family,
            data,
            state,
            z,
            policy: MonotonicityPolicy::default(),
            last_elbo: None,
            updates: 0,
        })
    }

    pub fn with_policy(mut self, policy: MonotonicityPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn family(&self) -> &'a F {
        self.family
    }

    pub fn data(&self) -> &'a [F::Datum] {
        self.data
    }

    pub fn state(&self) -> &GlobalMixtureState {
        &self.state
    }

    pub fn assignments(&self) -> &[Vec<f64>] {
        &self.z
    }

    pub fn num_components(&self) -> usize {
        self.state.num_components()
    }

    /// Number of z̃_{i,k} coordinates rewritten so far.
    pub fn coordinate_updates(&self) -> u64 {
        self.updates
    }

    pub(crate) fn into_parts(self) -> (GlobalMixtureState, Vec<Vec<f64>>) {
        (self.state, self.z)
    }

    pub(crate) fn from_parts(
        family: &'a F,
        data: &'a [F::Datum],
        state: GlobalMixtureState,
        z: Vec<Vec<f64>>,
        updates: u64,
    ) -> Self {
        Self {
            family,
            data,
            state,
            z,
            policy: MonotonicityPolicy::default(),
            last_elbo: None,
            updates,
        }
    }

    /// Globals recomputed from scratch from the current assignments.
    pub fn batch_state(&self) -> Result<GlobalMixtureState> {
        GlobalMixtureState::from_assignments(
            self.family,
            self.state.alpha,
            self.data,
            &self.z,
            self.num_components(),
        )
    }

    /// Hard assignment (argmax z̃_i) per datum.
    pub fn labels(&self) -> Vec<usize> {
        self.z
            .iter()
            .map(|zi| {
                zi.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (k, &w)| if w > best.1 { (k, w) } else { best })
                    .0
            })
            .collect()
    }

    pub fn elbo(&self) -> f64 {
        mixture_elbo(self.family, self.data, &self.state, &self.z)
    }

    fn scores(&self, x: &F::Datum, subset: &[usize]) -> Result<Vec<f64>> {
        let s = &self.state;
        subset
            .iter()
            .map(|&k| component_score(self.family, k, s.pi_tilde[k], s.n_tilde[k], &s.nu_tilde[k], x))
            .collect()
    }

    fn check_progress(&mut self, after: f64) -> Result<()> {
        if let Some(before) = self.last_elbo {
            self.policy.check(before, after)?;
        }
        self.last_elbo = Some(after);
        Ok(())
    }

    /// One batch VI pass: every z̃_i from the current globals, then π̃ and
    /// θ̃ recomputed from all assignments. Returns the new ELBO.
    pub fn vi_epoch(&mut self) -> Result<f64> {
        if self.last_elbo.is_none() {
            self.last_elbo = Some(self.elbo());
        }
        let k = self.num_components();
        let all: Vec<usize> = (0..k).collect();
        let mut fresh = Vec::with_capacity(self.z.len());
        for x in self.data {
            let u = self.scores(x, &all)?;
            let mut zi = vec![0.0; k];
            softmax_into(&u, 1.0, &mut zi);
            fresh.push(zi);
        }
        self.z = fresh;
        self.state = self.batch_state()?;
        self.updates += (self.z.len() * k) as u64;
        let after = self.elbo();
        self.check_progress(after)?;
        Ok(after)
    }

    /// SVI step on datum `i`: full z̃_i update, then incremental globals.
    pub fn svi_step(&mut self, i: usize) -> Result<()> {
        let k = self.num_components();
        let all: Vec<usize> = (0..k).collect();
        let u = self.scores(&self.data[i], &all)?;
        let mut fresh = vec![0.0; k];
        softmax_into(&u, 1.0, &mut fresh);
        self.apply(i, &all, &fresh)
    }

    /// ESVI step on datum `i` restricted to `subset`.
    ///
    /// The mass C = Σ_{k∈𝒦} z̃_{i,k} is redistributed in closed form; a
    /// subset with no current mass is left untouched. When 𝒦 covers every
    /// component C is exactly 1 and the step coincides with [`Self::svi_step`].
    pub fn esvi_step(&mut self, i: usize, subset: &[usize]) -> Result<()> {
        let k = self.num_components();
        let mass = if subset.len() == k {
            1.0
        } else {
            subset.iter().map(|&c| self.z[i][c]).sum()
        };
        if mass == 0.0 {
            return Ok(());
        }
        let scores = self.scores(&self.data[i], subset)?;
        let problem = RestrictedProblem::new(subset.to_vec(), mass, scores)?;
        let fresh = update_z_subset(&problem)?;
        self.apply(i, subset, &fresh)
    }

    /// ESVI step on a uniformly sampled datum and a random subset of
    /// `subset_size` distinct components.
    pub fn esvi_random_step<R: Rng + ?Sized>(&mut self, rng: &mut R, subset_size: usize) -> Result<()> {
        let k = self.num_components();
        if subset_size < 2 || subset_size > k {
            return Err(Error::InvalidProblem(format!(
                "subset size {subset_size} outside [2, {k}]"
            )));
        }
        let i = rng.random_range(0..self.data.len());
        let subset = rand::seq::index::sample(rng, k, subset_size).into_vec();
        self.esvi_step(i, &subset)
    }

    fn apply(&mut self, i: usize, subset: &[usize], fresh: &[f64]) -> Result<()> {
        let x = &self.data[i];
        for (&k, &new) in subset.iter().zip(fresh) {
            let delta = new - self.z[i][k];
            if delta != 0.0 {
                self.state.update_pi(k, delta)?;
                self.state.update_theta(self.family, k, x, delta)?;
            }
            self.z[i][k] = new;
        }
        self.updates += subset.len() as u64;
        Ok(())
    }

    /// Refresh the cached ELBO used by monotonicity checks.
    pub fn mark_elbo(&mut self) -> f64 {
        let e = self.elbo();
        self.last_elbo = Some(e);
        e
    }
}

/// Full ELBO of a mixture: −KL(π) − Σ_k KL(θ_k) + Σ_i E[log p(x_i, z_i)] + H(z̃).
pub fn mixture_elbo<F: ExpFamily>(
    family: &F,
    data: &[F::Datum],
    state: &GlobalMixtureState,
    z: &[Vec<f64>],
) -> f64 {
    let k = state.num_components();
    let dg_total = digamma(state.pi_tilde.iter().sum());
    let mut elbo = -dirichlet_kl_symmetric(&state.pi_tilde, state.alpha);
    let mut e_theta = vec![vec![0.0; family.stat_dim()]; k];
    let mut e_g = vec![0.0; k];
    let mut e_log_pi = vec![0.0; k];
    for c in 0..k {
        elbo -= family.kl_from_prior(state.n_tilde[c], &state.nu_tilde[c]);
        family.expected_natural_param(state.n_tilde[c], &state.nu_tilde[c], &mut e_theta[c]);
        e_g[c] = family.expected_log_partition(state.n_tilde[c], &state.nu_tilde[c]);
        e_log_pi[c] = digamma(state.pi_tilde[c]) - dg_total;
    }
    for (x, zi) in data.iter().zip(z) {
        let mut local = family.log_base_measure(x) * zi.iter().sum::<f64>();
        for c in 0..k {
            let w = zi[c];
            if w > 0.0 {
                let score = family.score_from_expectations(x, &e_theta[c], e_g[c]);
                local += w * (e_log_pi[c] + score - w.ln());
            }
        }
        elbo += local;
    }
    elbo
}
