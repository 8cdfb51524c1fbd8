use super::{ExpFamily, GlobalMixtureState, LocalAssignment, RestrictedProblem};
use crate::error::{Error, Result};
use crate::special::digamma;

/// Score u_{i,k} of one component given its variational parameters.
///
/// ψ(Σ_k π̃_k) is common to every component and cancels in the softmax, so
/// it is left out.
pub fn component_score<F: ExpFamily>(
    family: &F,
    component: usize,
    pi_tilde: f64,
    n_tilde: f64,
    nu_tilde: &[f64],
    x: &F::Datum,
) -> Result<f64> {
    let dirichlet = digamma(pi_tilde);
    if !dirichlet.is_finite() {
        return Err(Error::NonFiniteScore { component, term: "digamma(pi_tilde)" });
    }
    let likelihood = family.expected_score(x, n_tilde, nu_tilde);
    if !likelihood.is_finite() {
        return Err(Error::NonFiniteScore { component, term: "expected likelihood" });
    }
    Ok(dirichlet + likelihood)
}

/// u_{i,k} for every k in `subset`, in subset order.
pub fn compute_u<F: ExpFamily>(
    state: &GlobalMixtureState,
    family: &F,
    x: &F::Datum,
    subset: &[usize],
) -> Result<Vec<f64>> {
    if subset.is_empty() {
        return Err(Error::InvalidProblem("empty component subset".into()));
    }
    subset
        .iter()
        .map(|&k| {
            component_score(family, k, state.pi_tilde[k], state.n_tilde[k], &state.nu_tilde[k], x)
        })
        .collect()
}

/// `out = scale · softmax(u)` with max-subtraction.
pub fn softmax_into(u: &[f64], scale: f64, out: &mut [f64]) {
    debug_assert_eq!(u.len(), out.len());
    let max = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &v) in out.iter_mut().zip(u) {
        *o = (v - max).exp();
        sum += *o;
    }
    let factor = scale / sum;
    for o in out.iter_mut() {
        *o *= factor;
    }
}

/// Full z̃_i update: z̃_{i,k} = exp(u_k) / Σ_k' exp(u_k').
pub fn update_z_full(u: &[f64]) -> LocalAssignment {
    let mut z = vec![0.0; u.len()];
    softmax_into(u, 1.0, &mut z);
    LocalAssignment::Dense(z)
}

/// Closed-form maximizer of the restricted problem:
/// z̃*_k = C exp(u_k) / Σ_{k'∈𝒦} exp(u_k'), returned in subset order.
pub fn update_z_subset(problem: &RestrictedProblem) -> Result<Vec<f64>> {
    problem.validate()?;
    let mut z = vec![0.0; problem.scores.len()];
    softmax_into(&problem.scores, problem.mass, &mut z);
    Ok(z)
}

/// Restricted objective Σ_{k∈𝒦} z_k (u_k − log z_k), with 0 log 0 = 0.
pub fn restricted_elbo(problem: &RestrictedProblem, weights: &[f64]) -> Result<f64> {
    if weights.len() != problem.scores.len() {
        return Err(Error::Infeasible("weight vector does not match subset".into()));
    }
    if let Some(w) = weights.iter().find(|w| !(**w >= 0.0)) {
        return Err(Error::Infeasible(format!("negative or NaN weight {w}")));
    }
    let total: f64 = weights.iter().sum();
    if (total - problem.mass).abs() > 1e-9 * problem.mass.max(1.0) {
        return Err(Error::Infeasible(format!(
            "weights sum to {total}, expected {}",
            problem.mass
        )));
    }
    Ok(weights
        .iter()
        .zip(&problem.scores)
        .map(|(&z, &u)| if z > 0.0 { z * (u - z.ln()) } else { 0.0 })
        .sum())
}
