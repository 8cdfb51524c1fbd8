//! Runs one configured experiment and records its trace.

use std::fs::File;
use std::io::BufReader;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::config::{Algo, Budget, ConfigError, DataSource, ExperimentConfig, Model};
use super::corpus::{load_dense_matrix, load_uci_corpus, split_train_test, Corpus, CorpusError};
use super::synth::{planted_gaussian_clusters, planted_multinomial_mixture, PlantedTopics};
use super::trace::{write_trace, RunTrace, TraceError, TraceRecord};
use crate::error::Error;
use crate::expfam::{mixture_elbo, ExpFamily, MixtureFit};
use crate::lda::{heldout_perplexity, worker_rng, LdaHyper, LdaState, PhiMode, DEFAULT_REFRESH};
use crate::models::{DiagonalGaussianFamily, MultinomialFamily, NormalGamma};
use crate::nomad::{run_lda, run_mixture, NomadConfig, RunStats, StopCondition};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] CorpusError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Model(#[from] Error),
    #[error("conservation violated at {updates} updates: {detail}")]
    Conservation { updates: u64, detail: String },
}

pub type RunResult<T> = std::result::Result<T, RunError>;

/// Loaded training data.
#[derive(Debug, Clone)]
pub enum Dataset {
    Corpus(Corpus),
    Dense(Vec<Vec<f64>>),
}

/// Generated clusters for `gmm`: four well-separated centers in the plane.
const CLUSTER_CENTERS: [[f64; 2]; 4] = [[0.0, 0.0], [6.0, 0.0], [0.0, 6.0], [6.0, 6.0]];

pub fn load_dataset(config: &ExperimentConfig) -> RunResult<Dataset> {
    Ok(match &config.data {
        DataSource::Synthetic { size, seed } => match config.model {
            Model::Lda => Dataset::Corpus(PlantedTopics { docs: *size, ..Default::default() }.generate(*seed).corpus),
            Model::Mixmult => Dataset::Corpus(planted_multinomial_mixture(*size, 200, 4, 60, 0.05, *seed).0),
            Model::Gmm => {
                let centers: Vec<Vec<f64>> = CLUSTER_CENTERS.iter().map(|c| c.to_vec()).collect();
                let per = size.div_ceil(centers.len());
                Dataset::Dense(planted_gaussian_clusters(per, &centers, 1.0, *seed).0)
            }
        },
        DataSource::Uci { docword, vocab } => {
            let docs = BufReader::new(File::open(docword).map_err(CorpusError::from)?);
            let vocab = match vocab {
                Some(p) => Some(BufReader::new(File::open(p).map_err(CorpusError::from)?)),
                None => None,
            };
            Dataset::Corpus(load_uci_corpus(docs, vocab)?)
        }
        DataSource::Dense(path) => {
            Dataset::Dense(load_dense_matrix(BufReader::new(File::open(path).map_err(CorpusError::from)?))?)
        }
    })
}

/// A finished experiment.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub trace: RunTrace,
    /// Scheduler statistics for esvi runs.
    pub stats: Option<RunStats>,
}

/// Loads the data, runs, and writes the trace when `out` is set.
pub fn run_experiment(config: &ExperimentConfig) -> RunResult<RunTrace> {
    config.validate()?;
    let data = load_dataset(config)?;
    let outcome = run_on(config, &data)?;
    if let Some(path) = &config.out {
        write_trace(&outcome.trace, path)?;
    }
    Ok(outcome.trace)
}

/// Runs `config` on already loaded data.
pub fn run_on(config: &ExperimentConfig, data: &Dataset) -> RunResult<RunOutcome> {
    config.validate()?;
    match (config.model, data) {
        (Model::Lda, Dataset::Corpus(c)) => run_lda_experiment(config, c),
        (Model::Mixmult, Dataset::Corpus(c)) => {
            let family = MultinomialFamily::new(c.num_words, config.eta)?;
            run_mixture_experiment(config, &family, &c.docs)
        }
        (Model::Gmm, Dataset::Dense(rows)) => {
            let family = gaussian_family(rows)?;
            run_mixture_experiment(config, &family, rows)
        }
        _ => Err(ConfigError::Contradiction(format!("model {} does not match the loaded data", config.model)).into()),
    }
}

/// Weakly informative prior centred on the data: grand mean, pooled
/// variance as the expected noise variance, one pseudo-observation.
fn gaussian_family(rows: &[Vec<f64>]) -> RunResult<DiagonalGaussianFamily> {
    let dim = rows.first().map_or(0, Vec::len);
    if dim == 0 {
        return Err(Error::InvalidState("empty dense dataset".into()).into());
    }
    let n = (rows.len() * dim) as f64;
    let mean = rows.iter().flatten().sum::<f64>() / n;
    let var = rows.iter().flatten().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let prior = NormalGamma { mean, kappa: 1.0, shape: 1.0, rate: var.max(1e-12) };
    Ok(DiagonalGaussianFamily::new(dim, prior)?)
}

/// Process time that stops while evaluating.
struct Stopwatch {
    start: Instant,
    excluded: Duration,
}

impl Stopwatch {
    fn new() -> Self {
        Self { start: Instant::now(), excluded: Duration::ZERO }
    }

    fn seconds(&self) -> f64 {
        self.start.elapsed().saturating_sub(self.excluded).as_secs_f64()
    }

    fn exclude<T>(&mut self, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.excluded += t.elapsed();
        out
    }
}

/// Budget and evaluation period in coordinate updates.
fn schedule(config: &ExperimentConfig, epoch: u64) -> (u64, u64) {
    let budget = match config.budget {
        Budget::Updates(u) => u,
        Budget::Epochs(e) => e.saturating_mul(epoch),
    };
    (budget, config.eval_every.unwrap_or(epoch).max(1))
}

fn new_trace(config: &ExperimentConfig) -> RunTrace {
    RunTrace { meta: config.describe(), records: Vec::new() }
}

fn run_lda_experiment(config: &ExperimentConfig, corpus: &Corpus) -> RunResult<RunOutcome> {
    let (train, test) = if config.test_fraction > 0.0 {
        let (a, b) = split_train_test(corpus, config.test_fraction, config.seed)?;
        (a, Some(b))
    } else {
        (corpus.clone(), None)
    };
    let hyper = LdaHyper { topics: config.topics, vocab: corpus.num_words, alpha: config.alpha, eta: config.eta };
    let mode = match (config.algo, config.topk) {
        (Algo::EsviTopk, Some(cutoff)) => PhiMode::TopK { cutoff, refresh: DEFAULT_REFRESH },
        _ => PhiMode::Dense,
    };
    let mut state = LdaState::new(&train, hyper, mode, config.seed)?;
    let k = config.topics as u64;
    let nnz = train.nnz() as u64;
    let touched = match mode {
        PhiMode::TopK { cutoff, refresh } => (cutoff as u64 + refresh as u64).min(k),
        PhiMode::Dense => k,
    };
    let (budget, every) = schedule(config, nnz * touched);
    let perplexity = |lambda: &[f64]| test.as_ref().map(|t| heldout_perplexity(&hyper, lambda, t, config.seed).perplexity);

    let mut trace = new_trace(config);
    let mut clock = Stopwatch::new();
    let first = clock.exclude(|| -> RunResult<TraceRecord> {
        Ok(TraceRecord { updates: 0, seconds: 0.0, elbo: state.elbo()?, perplexity: perplexity(state.lambda()) })
    })?;
    trace.push(first)?;

    let mut stats = None;
    match config.algo {
        Algo::Vi | Algo::Svi => {
            let mut rng = worker_rng(config.seed, 0);
            let mut next = every;
            while state.coordinate_updates() < budget {
                if config.algo == Algo::Vi {
                    state.vi_epoch(config.workers)?;
                } else {
                    let d = rng.random_range(0..train.num_docs().max(1));
                    state.process_doc(d, &mut rng)?;
                }
                let updates = state.coordinate_updates();
                if updates >= next || updates >= budget {
                    next = (updates / every + 1) * every;
                    let seconds = clock.seconds();
                    let record = clock.exclude(|| -> RunResult<TraceRecord> {
                        let elbo = state.elbo()?;
                        state.check_progress(elbo).or_else(|e| if config.algo == Algo::Svi { Ok(()) } else { Err(e) })?;
                        check_lda(updates, state.conservation())?;
                        Ok(TraceRecord { updates, seconds, elbo, perplexity: perplexity(state.lambda()) })
                    })?;
                    trace.push(record)?;
                }
            }
        }
        Algo::Esvi | Algo::EsviTopk => {
            let stop = match (mode, config.budget) {
                (PhiMode::TopK { .. }, Budget::Epochs(e)) => {
                    StopCondition { max_visits: Some(e.saturating_mul(hyper.vocab as u64)), ..Default::default() }
                }
                _ => StopCondition { max_updates: Some(budget), ..Default::default() },
            };
            let mut nomad = NomadConfig::new(config.workers, stop);
            nomad.eval_every = Some(every);
            let run = run_lda(state, &nomad, config.seed, config.sync_every, |c, view| {
                check_lda(c.updates, view.conservation())?;
                let elbo = view.elbo()?;
                let record = TraceRecord { updates: c.updates, seconds: c.seconds, elbo, perplexity: perplexity(&view.lambda) };
                trace.push(record).map_err(|e| Error::InvalidState(e.to_string()))?;
                Ok(())
            })?;
            stats = Some(run.stats);
        }
    }
    Ok(RunOutcome { trace, stats })
}

fn check_lda(updates: u64, report: crate::lda::ConservationReport) -> Result<(), Error> {
    if report.holds() {
        Ok(())
    } else {
        Err(Error::Corrupted(format!("conservation violated at {updates} updates: {report:?}")))
    }
}

fn run_mixture_experiment<F: ExpFamily>(config: &ExperimentConfig, family: &F, data: &[F::Datum]) -> RunResult<RunOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut fit = MixtureFit::new(family, data, config.topics, config.alpha, &mut rng)?;
    let (budget, every) = schedule(config, (data.len() * config.topics) as u64);

    let mut trace = new_trace(config);
    let mut clock = Stopwatch::new();
    let elbo = clock.exclude(|| fit.mark_elbo());
    trace.push(TraceRecord { updates: 0, seconds: 0.0, elbo, perplexity: None })?;

    let mut stats = None;
    match config.algo {
        Algo::Vi | Algo::Svi => {
            let mut rng = worker_rng(config.seed, 0);
            let mut next = every;
            while fit.coordinate_updates() < budget {
                if config.algo == Algo::Vi {
                    fit.vi_epoch()?;
                } else {
                    let i = rng.random_range(0..data.len().max(1));
                    fit.svi_step(i)?;
                }
                let updates = fit.coordinate_updates();
                if updates >= next || updates >= budget {
                    next = (updates / every + 1) * every;
                    let seconds = clock.seconds();
                    let elbo = clock.exclude(|| fit.elbo());
                    trace.push(TraceRecord { updates, seconds, elbo, perplexity: None })?;
                }
            }
        }
        Algo::Esvi => {
            let mut nomad = NomadConfig::new(config.workers, StopCondition { max_updates: Some(budget), ..Default::default() });
            nomad.eval_every = Some(every);
            let run = run_mixture(fit, &nomad, config.seed, config.subset_size, |c, state, z| {
                let elbo = mixture_elbo(family, data, state, z);
                let record = TraceRecord { updates: c.updates, seconds: c.seconds, elbo, perplexity: None };
                trace.push(record).map_err(|e| Error::InvalidState(e.to_string()))?;
                Ok(())
            })?;
            stats = Some(run.stats);
        }
        Algo::EsviTopk => return Err(ConfigError::Contradiction("esvi-topk is implemented for lda only".into()).into()),
    }
    Ok(RunOutcome { trace, stats })
}
