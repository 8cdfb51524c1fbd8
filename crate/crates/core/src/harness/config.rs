//! Experiment configuration from command-line flags and `key=value` files.
//!
//! A config file uses the flag names without dashes (`topics=16`,
//! `max-epochs=50`); `#` starts a comment. Flags override file values.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("invalid value {value:?} for {key}: {message}")]
    Value { key: String, value: String, message: String },
    #[error("{0}")]
    Contradiction(String),
    #[error("cannot read config: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algo {
    /// Synchronous batch VI: all assignments, then all globals.
    Vi,
    Svi,
    Esvi,
    EsviTopk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    Lda,
    /// Diagonal Gaussian mixture.
    Gmm,
    /// Mixture of multinomials over bag-of-words documents.
    Mixmult,
}

impl FromStr for Algo {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "vi" => Ok(Algo::Vi),
            "svi" => Ok(Algo::Svi),
            "esvi" => Ok(Algo::Esvi),
            "esvi-topk" => Ok(Algo::EsviTopk),
            _ => Err("expected vi, svi, esvi or esvi-topk".into()),
        }
    }
}

impl FromStr for Model {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "lda" => Ok(Model::Lda),
            "gmm" => Ok(Model::Gmm),
            "mixmult" => Ok(Model::Mixmult),
            _ => Err("expected lda, gmm or mixmult".into()),
        }
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algo::Vi => "vi",
            Algo::Svi => "svi",
            Algo::Esvi => "esvi",
            Algo::EsviTopk => "esvi-topk",
        })
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Model::Lda => "lda",
            Model::Gmm => "gmm",
            Model::Mixmult => "mixmult",
        })
    }
}

/// Unvalidated settings; every field is optional so sources can be layered.
#[derive(Debug, Clone, Default, PartialEq, Args)]
pub struct RawConfig {
    /// lda, gmm or mixmult.
    #[arg(long)]
    pub model: Option<String>,
    /// vi, svi, esvi or esvi-topk.
    #[arg(long)]
    pub algo: Option<String>,
    /// Number of topics / components K.
    #[arg(long)]
    pub topics: Option<usize>,
    /// Top-k cutoff C (esvi-topk only).
    #[arg(long)]
    pub topk: Option<usize>,
    /// Worker threads P.
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Topic-word prior (lda, mixmult).
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Budget in epochs; one epoch rewrites every assignment coordinate once.
    #[arg(long)]
    pub max_epochs: Option<u64>,
    /// Budget in coordinate updates; overrides --max-epochs.
    #[arg(long)]
    pub max_updates: Option<u64>,
    /// Coordinate updates between evaluations.
    #[arg(long)]
    pub eval_every: Option<u64>,
    /// Fraction of documents held out for perplexity (lda only).
    #[arg(long)]
    pub test_fraction: Option<f64>,
    /// Trace CSV path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// UCI docword file.
    #[arg(long)]
    pub docword: Option<PathBuf>,
    /// UCI vocab file.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Dense real matrix (gmm).
    #[arg(long)]
    pub dense: Option<PathBuf>,
    /// Documents (or points) in the generated dataset.
    #[arg(long)]
    pub synthetic: Option<usize>,
    /// Seed of the generated dataset.
    #[arg(long)]
    pub data_seed: Option<u64>,
    /// Steps between normalizer ring syncs (lda esvi).
    #[arg(long)]
    pub sync_every: Option<usize>,
    /// Components gathered per restricted update (mixture esvi).
    #[arg(long)]
    pub subset_size: Option<usize>,
}

fn value_err(key: &str, value: &str, message: impl ToString) -> ConfigError {
    ConfigError::Value { key: key.into(), value: value.into(), message: message.to_string() }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<Option<T>, ConfigError>
where
    T::Err: ToString,
{
    value.parse().map(Some).map_err(|e: T::Err| value_err(key, value, e))
}

impl RawConfig {
    pub fn parse_kv(text: &str) -> Result<Self, ConfigError> {
        let mut raw = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: n + 1,
                message: "expected key=value".into(),
            })?;
            raw.set(key.trim(), value.trim())?;
        }
        Ok(raw)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
        Self::parse_kv(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let path = || Some(PathBuf::from(value));
        match key.replace('_', "-").as_str() {
            "model" => self.model = Some(value.into()),
            "algo" => self.algo = Some(value.into()),
            "topics" => self.topics = parse(key, value)?,
            "topk" => self.topk = parse(key, value)?,
            "workers" => self.workers = parse(key, value)?,
            "alpha" => self.alpha = parse(key, value)?,
            "eta" => self.eta = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "max-epochs" => self.max_epochs = parse(key, value)?,
            "max-updates" => self.max_updates = parse(key, value)?,
            "eval-every" => self.eval_every = parse(key, value)?,
            "test-fraction" => self.test_fraction = parse(key, value)?,
            "out" => self.out = path(),
            "docword" => self.docword = path(),
            "vocab" => self.vocab = path(),
            "dense" => self.dense = path(),
            "synthetic" => self.synthetic = parse(key, value)?,
            "data-seed" => self.data_seed = parse(key, value)?,
            "sync-every" => self.sync_every = parse(key, value)?,
            "subset-size" => self.subset_size = parse(key, value)?,
            _ => return Err(ConfigError::UnknownKey(key.into())),
        }
        Ok(())
    }

    /// `self` wins wherever it has a value.
    pub fn over(self, base: RawConfig) -> RawConfig {
        RawConfig {
            model: self.model.or(base.model),
            algo: self.algo.or(base.algo),
            topics: self.topics.or(base.topics),
            topk: self.topk.or(base.topk),
            workers: self.workers.or(base.workers),
            alpha: self.alpha.or(base.alpha),
            eta: self.eta.or(base.eta),
            seed: self.seed.or(base.seed),
            max_epochs: self.max_epochs.or(base.max_epochs),
            max_updates: self.max_updates.or(base.max_updates),
            eval_every: self.eval_every.or(base.eval_every),
            test_fraction: self.test_fraction.or(base.test_fraction),
            out: self.out.or(base.out),
            docword: self.docword.or(base.docword),
            vocab: self.vocab.or(base.vocab),
            dense: self.dense.or(base.dense),
            synthetic: self.synthetic.or(base.synthetic),
            data_seed: self.data_seed.or(base.data_seed),
            sync_every: self.sync_every.or(base.sync_every),
            subset_size: self.subset_size.or(base.subset_size),
        }
    }

    /// Fills defaults and checks for contradictions.
    pub fn resolve(self) -> Result<ExperimentConfig, ConfigError> {
        let model: Model = match &self.model {
            Some(m) => m.parse().map_err(|e| value_err("model", m, e))?,
            None => Model::Lda,
        };
        let algo: Algo = match &self.algo {
            Some(a) => a.parse().map_err(|e| value_err("algo", a, e))?,
            None => Algo::Esvi,
        };
        let topics = self.topics.unwrap_or(8);
        let data = match (self.docword, self.dense) {
            (Some(_), Some(_)) => return Err(ConfigError::Contradiction("give either docword or dense, not both".into())),
            (Some(docword), None) => DataSource::Uci { docword, vocab: self.vocab },
            (None, Some(path)) => DataSource::Dense(path),
            (None, None) => DataSource::Synthetic { size: self.synthetic.unwrap_or(50), seed: self.data_seed.unwrap_or(1) },
        };
        let config = ExperimentConfig {
            model,
            algo,
            topics,
            topk: match algo {
                Algo::EsviTopk => Some(self.topk.unwrap_or((topics / 4).max(1))),
                _ => self.topk,
            },
            workers: self.workers.unwrap_or(1),
            alpha: self.alpha.unwrap_or(0.1),
            eta: self.eta.unwrap_or(0.01),
            seed: self.seed.unwrap_or(0),
            budget: match (self.max_updates, self.max_epochs) {
                (Some(u), _) => Budget::Updates(u),
                (None, e) => Budget::Epochs(e.unwrap_or(20)),
            },
            eval_every: self.eval_every,
            test_fraction: self.test_fraction.unwrap_or(0.0),
            out: self.out,
            data,
            sync_every: self.sync_every.unwrap_or(1),
            subset_size: self.subset_size.unwrap_or(2),
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// Generated: planted topics (lda), planted components (mixmult) or
    /// Gaussian clusters (gmm).
    Synthetic { size: usize, seed: u64 },
    Uci { docword: PathBuf, vocab: Option<PathBuf> },
    Dense(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Budget {
    Epochs(u64),
    Updates(u64),
}

/// A validated experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: Model,
    pub algo: Algo,
    pub topics: usize,
    pub topk: Option<usize>,
    pub workers: usize,
    pub alpha: f64,
    pub eta: f64,
    pub seed: u64,
    pub budget: Budget,
    pub eval_every: Option<u64>,
    pub test_fraction: f64,
    pub out: Option<PathBuf>,
    pub data: DataSource,
    pub sync_every: usize,
    pub subset_size: usize,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Contradiction(m));
        let k = self.topics;
        if k == 0 {
            return bad("topics must be at least 1".into());
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return bad(format!("eta must be positive, got {}", self.eta));
        }
        if self.algo == Algo::Svi && self.workers > 1 {
            return bad("svi is serial; use workers=1".into());
        }
        match (self.algo, self.topk) {
            (Algo::EsviTopk, Some(c)) if c == 0 || c > k => return bad(format!("topk {c} outside [1, {k}]")),
            (Algo::EsviTopk, _) => {}
            (_, Some(_)) => return bad("topk applies only to esvi-topk".into()),
            _ => {}
        }
        if self.algo == Algo::EsviTopk && self.model != Model::Lda {
            return bad("esvi-topk is implemented for lda only".into());
        }
        if self.model != Model::Lda && self.algo == Algo::Esvi {
            if k < 2 {
                return bad("mixture esvi needs at least two components".into());
            }
            if self.subset_size < 2 || self.subset_size > k {
                return bad(format!("subset-size {} outside [2, {k}]", self.subset_size));
            }
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return bad(format!("test-fraction {} outside [0, 1)", self.test_fraction));
        }
        if self.test_fraction > 0.0 && self.model != Model::Lda {
            return bad("held-out perplexity is defined for lda only".into());
        }
        if matches!(self.budget, Budget::Epochs(0) | Budget::Updates(0)) {
            return bad("budget must be positive".into());
        }
        if self.eval_every == Some(0) {
            return bad("eval-every must be positive".into());
        }
        if self.sync_every == 0 {
            return bad("sync-every must be positive".into());
        }
        match (&self.data, self.model) {
            (DataSource::Uci { .. }, Model::Gmm) => return bad("gmm reads a dense matrix, not docword".into()),
            (DataSource::Dense(_), Model::Lda | Model::Mixmult) => {
                return bad("bag-of-words models read docword, not a dense matrix".into())
            }
            (DataSource::Synthetic { size: 0, .. }, _) => return bad("synthetic dataset must be nonempty".into()),
            _ => {}
        }
        Ok(())
    }

    /// `key=value` pairs for the trace header.
    pub fn describe(&self) -> Vec<(String, String)> {
        let mut meta = vec![
            ("algo", self.algo.to_string()),
            ("model", self.model.to_string()),
            ("topics", self.topics.to_string()),
            ("topk", self.topk.map_or("dense".into(), |c| c.to_string())),
            ("workers", self.workers.to_string()),
            ("seed", self.seed.to_string()),
            ("alpha", self.alpha.to_string()),
            ("eta", self.eta.to_string()),
        ];
        if self.model == Model::Lda && matches!(self.algo, Algo::Esvi | Algo::EsviTopk) {
            meta.push(("sync-every", self.sync_every.to_string()));
        }
        if self.model != Model::Lda && self.algo == Algo::Esvi {
            meta.push(("subset-size", self.subset_size.to_string()));
        }
        meta.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn resolve(text: &str) -> Result<ExperimentConfig, ConfigError> {
        RawConfig::parse_kv(text)?.resolve()
    }

    #[test]
    fn defaults() {
        let c = resolve("").unwrap();
        assert_eq!((c.model, c.algo, c.topics, c.workers), (Model::Lda, Algo::Esvi, 8, 1));
        assert_eq!(c.budget, Budget::Epochs(20));
        assert_eq!(resolve("algo=esvi-topk\ntopics=16").unwrap().topk, Some(4));
    }

    #[test]
    fn file_syntax() {
        let c = resolve("# comment\nmodel = gmm\ntopics=3 # trailing\nmax_updates=100\n").unwrap();
        assert_eq!((c.model, c.topics, c.budget), (Model::Gmm, 3, Budget::Updates(100)));
        assert!(matches!(resolve("topics"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(resolve("colour=red"), Err(ConfigError::UnknownKey(_))));
        assert!(matches!(resolve("topics=-1"), Err(ConfigError::Value { .. })));
        assert!(matches!(resolve("algo=gibbs"), Err(ConfigError::Value { .. })));
    }

    #[test]
    fn flags_win() {
        let file = RawConfig::parse_kv("topics=4\nseed=9").unwrap();
        let flags = RawConfig { topics: Some(12), ..Default::default() };
        let c = flags.over(file).resolve().unwrap();
        assert_eq!((c.topics, c.seed), (12, 9));
    }

    #[test]
    fn contradictions() {
        for text in [
            "algo=svi\nworkers=2",
            "algo=esvi-topk\nmodel=gmm",
            "algo=esvi-topk\ntopics=4\ntopk=5",
            "algo=esvi-topk\ntopk=0",
            "algo=esvi\ntopk=2",
            "model=mixmult\ntopics=1",
            "model=gmm\nsubset-size=9",
            "alpha=0",
            "eta=-1",
            "test-fraction=1",
            "model=gmm\ntest-fraction=0.2",
            "topics=0",
            "workers=0",
            "max-updates=0",
            "eval-every=0",
            "model=gmm\ndocword=a.txt",
            "dense=a.txt",
            "docword=a\ndense=b",
        ] {
            assert!(matches!(resolve(text), Err(ConfigError::Contradiction(_))), "{text:?} accepted");
        }
    }

    proptest! {
        /// Whatever combination is generated, a config that resolves
        /// satisfies every rule the runner relies on.
        #[test]
        fn resolved_configs_are_consistent(
            model in prop::sample::select(vec!["lda", "gmm", "mixmult"]),
            algo in prop::sample::select(vec!["vi", "svi", "esvi", "esvi-topk"]),
            topics in 0usize..6,
            topk in prop::option::of(0usize..8),
            workers in 0usize..4,
            alpha in -1.0f64..1.0,
            fraction in -0.5f64..1.5,
        ) {
            let raw = RawConfig {
                model: Some(model.into()),
                algo: Some(algo.into()),
                topics: Some(topics),
                topk,
                workers: Some(workers),
                alpha: Some(alpha),
                test_fraction: Some(fraction),
                ..Default::default()
            };
            if let Ok(c) = raw.resolve() {
                prop_assert!(c.topics >= 1 && c.workers >= 1 && c.alpha > 0.0);
                prop_assert!(!(c.algo == Algo::Svi && c.workers > 1));
                prop_assert!(c.topk.is_none_or(|k| k >= 1 && k <= c.topics));
                prop_assert!(c.algo != Algo::EsviTopk || c.model == Model::Lda);
                prop_assert!(c.model == Model::Lda || c.algo != Algo::Esvi || c.topics >= 2);
                prop_assert!((0.0..1.0).contains(&c.test_fraction));
            }
        }
    }
}
