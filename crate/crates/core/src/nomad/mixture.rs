use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::engine::{run_async, Checkpoint, NomadConfig, RunStats, Token, Workload};
use crate::error::{Error, Result};
use crate::expfam::{component_score, update_z_subset, ExpFamily, GlobalMixtureState, MixtureFit, RestrictedProblem};
use crate::lda::{word_order, worker_rng};

/// Variational parameters of one mixture component: π̃_k and θ̃_k.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentColumn {
    pub k: usize,
    pub version: u64,
    pub pi: f64,
    pub n: f64,
    pub nu: Vec<f64>,
}

impl Token for ComponentColumn {
    fn id(&self) -> usize {
        self.k
    }

    fn version(&self) -> u64 {
        self.version
    }

    fn bump_version(&mut self) {
        self.version += 1;
    }
}

/// A worker's slice of the data and its assignments.
pub struct MixtureWorker<'a, F: ExpFamily> {
    family: &'a F,
    data: &'a [F::Datum],
    first: usize,
    z: Vec<Vec<f64>>,
    alpha: f64,
    group: usize,
    steps_per_hold: usize,
}

impl<'a, F: ExpFamily> Workload for MixtureWorker<'a, F> {
    type Token = ComponentColumn;
    type Snapshot = MixtureSnapshot;

    fn group_size(&self) -> usize {
        self.group
    }

    /// Restricted updates on random local data over the held components.
    fn process(&mut self, held: &mut [ComponentColumn], rng: &mut ChaCha8Rng) -> Result<u64> {
        if held.len() < 2 || self.data.is_empty() {
            return Ok(0);
        }
        let subset: Vec<usize> = held.iter().map(|c| c.k).collect();
        let mut total = 0;
        for _ in 0..self.steps_per_hold {
            let i = rng.random_range(0..self.data.len());
            let x = &self.data[i];
            let zi = &mut self.z[i];
            let mass: f64 = subset.iter().map(|&k| zi[k]).sum();
            if mass == 0.0 {
                continue;
            }
            let scores = held
                .iter()
                .map(|c| component_score(self.family, c.k, c.pi, c.n, &c.nu, x))
                .collect::<Result<Vec<_>>>()?;
            let fresh = update_z_subset(&RestrictedProblem::new(subset.clone(), mass, scores)?)?;
            for (c, new) in held.iter_mut().zip(fresh) {
                let delta = new - zi[c.k];
                zi[c.k] = new;
                if delta == 0.0 {
                    continue;
                }
                c.pi += delta;
                c.n += delta;
                self.family.accumulate_stat(x, delta, &mut c.nu);
                if c.pi < self.alpha - 1e-9 || c.n < self.family.prior_strength() - 1e-9 {
                    return Err(Error::Corrupted(format!("component {} lost more mass than it held", c.k)));
                }
            }
            total += subset.len() as u64;
        }
        Ok(total)
    }

    fn snapshot(&self, held: &[ComponentColumn]) -> MixtureSnapshot {
        MixtureSnapshot { first: self.first, z: self.z.clone(), columns: held.to_vec() }
    }
}

#[derive(Debug, Clone)]
pub struct MixtureSnapshot {
    pub first: usize,
    pub z: Vec<Vec<f64>>,
    pub columns: Vec<ComponentColumn>,
}

/// Globals and assignments assembled from all snapshots.
pub fn assemble_mixture(alpha: f64, snapshots: &[MixtureSnapshot]) -> Result<(GlobalMixtureState, Vec<Vec<f64>>)> {
    let mut columns: Vec<&ComponentColumn> = snapshots.iter().flat_map(|s| &s.columns).collect();
    columns.sort_by_key(|c| c.k);
    if columns.iter().enumerate().any(|(i, c)| c.k != i) {
        return Err(Error::Corrupted("component columns missing or duplicated".into()));
    }
    let state = GlobalMixtureState {
        alpha,
        pi_tilde: columns.iter().map(|c| c.pi).collect(),
        n_tilde: columns.iter().map(|c| c.n).collect(),
        nu_tilde: columns.iter().map(|c| c.nu.clone()).collect(),
    };
    let mut parts: Vec<&MixtureSnapshot> = snapshots.iter().collect();
    parts.sort_by_key(|s| s.first);
    let z = parts.iter().flat_map(|s| s.z.iter().cloned()).collect();
    Ok((state, z))
}

pub struct MixtureRun<'a, F: ExpFamily> {
    pub fit: MixtureFit<'a, F>,
    pub stats: RunStats,
}

/// Asynchronous restricted updates for a generic mixture.
///
/// Data are split into contiguous shards, one per worker. A worker gathers
/// up to `group` component columns, then performs restricted updates over
/// exactly the components it holds.
pub fn run_mixture<'a, F, C>(
    fit: MixtureFit<'a, F>,
    config: &NomadConfig,
    seed: u64,
    group: usize,
    mut on_checkpoint: C,
) -> Result<MixtureRun<'a, F>>
where
    F: ExpFamily,
    C: FnMut(&Checkpoint, &GlobalMixtureState, &[Vec<f64>]) -> Result<()>,
{
    let p = config.workers;
    let k = fit.num_components();
    if k < 2 {
        return Err(Error::InvalidState("restricted updates need at least two components".into()));
    }
    let (family, data, alpha, updates) = (fit.family(), fit.data(), fit.state().alpha, fit.coordinate_updates());
    let (state, mut z) = fit.into_parts();
    let n = data.len();
    let group = group.clamp(2, k);
    let mut workers = Vec::with_capacity(p);
    for w in (0..p).rev() {
        let (lo, hi) = (w * n / p, (w + 1) * n / p);
        let rows = z.split_off(lo);
        workers.push(MixtureWorker {
            family,
            data: &data[lo..hi],
            first: lo,
            z: rows,
            alpha,
            group,
            steps_per_hold: ((hi - lo) / k).max(1),
        });
    }
    workers.reverse();

    let tokens = word_order(k, seed)
        .into_iter()
        .map(|c| ComponentColumn {
            k: c,
            version: 0,
            pi: state.pi_tilde[c],
            n: state.n_tilde[c],
            nu: state.nu_tilde[c].clone(),
        })
        .collect();
    let rngs = (0..p).map(|w| worker_rng(seed, w)).collect();
    let outcome = run_async(workers, tokens, rngs, config, |c, snaps| {
        let (state, z) = assemble_mixture(alpha, snaps)?;
        on_checkpoint(c, &state, &z)
    })?;

    let snaps: Vec<MixtureSnapshot> = outcome
        .workloads
        .into_iter()
        .map(|w| MixtureSnapshot { first: w.first, z: w.z, columns: Vec::new() })
        .collect();
    let mut parts = snaps;
    parts[0].columns = outcome.tokens;
    let (state, z) = assemble_mixture(alpha, &parts)?;
    let fit = MixtureFit::from_parts(family, data, state, z, updates + outcome.stats.updates);
    Ok(MixtureRun { fit, stats: outcome.stats })
}
