use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Barrier, Mutex};
use std::time::{Duration, Instant};

use crossbeam_channel::{unbounded, Sender};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::transport::{ChannelTransport, Transport};
use crate::error::{Error, Result};

const NO_OWNER: usize = usize::MAX;
const IDLE_WAIT: Duration = Duration::from_millis(1);
const COORDINATOR_POLL: Duration = Duration::from_micros(200);

/// A circulating global-parameter column.
pub trait Token: Send {
    fn id(&self) -> usize;
    fn version(&self) -> u64;
    fn bump_version(&mut self);
}

/// Per-worker computation driven by the scheduler.
pub trait Workload: Send {
    type Token: Token;
    type Snapshot: Send;

    /// Tokens gathered before [`Workload::process`] is called. Fewer may be
    /// passed when the queue runs dry.
    fn group_size(&self) -> usize {
        1
    }

    /// Updates local data and the held columns. Returns the number of
    /// coordinate updates performed.
    fn process(&mut self, held: &mut [Self::Token], rng: &mut ChaCha8Rng) -> Result<u64>;

    /// Called after every processed group.
    fn after_step(&mut self) {}

    /// Sends buffered shared-state changes to peers.
    fn flush(&mut self) {}

    /// Applies and forwards changes received from peers.
    fn drain(&mut self) {}

    /// Copy of the local state plus the tokens the worker holds.
    fn snapshot(&self, held: &[Self::Token]) -> Self::Snapshot;
}

/// When a run ends. The first condition met wins; at least one is required.
#[derive(Debug, Clone, Default)]
pub struct StopCondition {
    pub max_updates: Option<u64>,
    /// Token visits, i.e. processed columns summed over workers.
    pub max_visits: Option<u64>,
    pub max_seconds: Option<f64>,
    pub kill: Option<Arc<AtomicBool>>,
}

#[derive(Debug, Clone)]
pub struct NomadConfig {
    pub workers: usize,
    pub stop: StopCondition,
    /// Coordinate updates between evaluation snapshots.
    pub eval_every: Option<u64>,
    /// Extra census-only pauses, spaced uniformly at random in
    /// `[0, 2 · census_interval]`.
    pub census_interval: Option<Duration>,
    /// A worker with queued tokens and no progress for this long is reported.
    pub watchdog: Duration,
}

impl NomadConfig {
    pub fn new(workers: usize, stop: StopCondition) -> Self {
        Self { workers, stop, eval_every: None, census_interval: None, watchdog: Duration::from_secs(5) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckpointKind {
    Eval,
    Final,
}

/// Position of a snapshot in the run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Checkpoint {
    pub kind: CheckpointKind,
    pub updates: u64,
    pub visits: u64,
    /// Running time excluding pauses.
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunStats {
    pub updates: u64,
    pub visits: u64,
    pub census_checks: u64,
    pub owner_violations: u64,
    pub starvation_events: u64,
    pub per_worker_visits: Vec<u64>,
    pub seconds: f64,
}

/// Everything handed back when the run ends.
pub struct NomadOutcome<W: Workload> {
    pub workloads: Vec<W>,
    /// Every token, ordered by id.
    pub tokens: Vec<W::Token>,
    pub stats: RunStats,
}

struct Report<S> {
    ids: Vec<usize>,
    snapshot: S,
}

struct Shared {
    workers: usize,
    pause: AtomicBool,
    /// Requests a final pause; any thread may set it.
    stop: AtomicBool,
    /// Set by the coordinator during the final pause only. Workers read it
    /// after the closing barrier, where `stop` may already have been raised
    /// by a worker that left the pause early.
    exit: AtomicBool,
    updates: AtomicU64,
    visits: AtomicU64,
    next_eval: AtomicU64,
    max_updates: u64,
    max_visits: u64,
    all: Barrier,
    ring: Barrier,
    owners: Vec<AtomicUsize>,
    violations: AtomicU64,
    heartbeat: Vec<AtomicU64>,
    start: Instant,
    failure: Mutex<Option<Error>>,
}

impl Shared {
    fn halt(&self) {
        self.stop.store(true, Ordering::SeqCst);
        self.pause.store(true, Ordering::SeqCst);
    }

    fn fail(&self, err: Error) {
        let mut slot = self.failure.lock().unwrap_or_else(|e| e.into_inner());
        slot.get_or_insert(err);
        drop(slot);
        self.halt();
    }

    fn beat(&self, worker: usize) {
        self.heartbeat[worker].store(self.start.elapsed().as_nanos() as u64, Ordering::Relaxed);
    }
}

fn next_multiple(count: u64, every: u64) -> u64 {
    (count / every + 1).saturating_mul(every)
}

/// Checks that ids 0..n each appear exactly once.
pub fn census(ids: impl IntoIterator<Item = usize>, n: usize) -> Result<()> {
    let mut seen = vec![0u32; n];
    for id in ids {
        if id >= n {
            return Err(Error::Corrupted(format!("census found unknown token {id}")));
        }
        seen[id] += 1;
    }
    if let Some((id, &c)) = seen.iter().enumerate().find(|(_, &c)| c != 1) {
        let what = if c == 0 { "lost" } else { "duplicated" };
        return Err(Error::Corrupted(format!("census: token {id} {what} ({c} holders)")));
    }
    Ok(())
}

/// Runs the workloads asynchronously, one thread per worker.
///
/// Tokens are dealt round-robin in the given order. Each worker pops a
/// token (or a group of tokens), processes it against its local data and
/// pushes it to a uniformly chosen other worker. Whenever the global update
/// count crosses an evaluation point, or the run stops, all workers meet at
/// a barrier, drain their queues, settle peer messages and report a
/// snapshot; `on_checkpoint` then sees the snapshots of every worker.
pub fn run_async<W, F>(
    workloads: Vec<W>,
    tokens: Vec<W::Token>,
    rngs: Vec<ChaCha8Rng>,
    config: &NomadConfig,
    mut on_checkpoint: F,
) -> Result<NomadOutcome<W>>
where
    W: Workload,
    F: FnMut(&Checkpoint, &[W::Snapshot]) -> Result<()>,
{
    let p = config.workers;
    if p == 0 || workloads.len() != p || rngs.len() != p {
        return Err(Error::InvalidState(format!(
            "need one workload and rng per worker, got {} and {} for {p} workers",
            workloads.len(),
            rngs.len()
        )));
    }
    let stop = &config.stop;
    if stop.max_updates.is_none() && stop.max_visits.is_none() && stop.max_seconds.is_none() && stop.kill.is_none() {
        return Err(Error::InvalidState("run has no stop condition".into()));
    }
    let num_tokens = tokens.len();
    census(tokens.iter().map(Token::id), num_tokens)?;

    let transport = ChannelTransport::new(p);
    for (i, t) in tokens.into_iter().enumerate() {
        transport.push(i % p, t).map_err(|_| Error::InvalidState("no live worker".into()))?;
    }
    let shared = Shared {
        workers: p,
        pause: AtomicBool::new(false),
        stop: AtomicBool::new(false),
        exit: AtomicBool::new(false),
        updates: AtomicU64::new(0),
        visits: AtomicU64::new(0),
        next_eval: AtomicU64::new(config.eval_every.map_or(u64::MAX, |e| e.max(1))),
        max_updates: stop.max_updates.unwrap_or(u64::MAX),
        max_visits: stop.max_visits.unwrap_or(u64::MAX),
        all: Barrier::new(p + 1),
        ring: Barrier::new(p),
        owners: (0..num_tokens).map(|_| AtomicUsize::new(NO_OWNER)).collect(),
        violations: AtomicU64::new(0),
        heartbeat: (0..p).map(|_| AtomicU64::new(0)).collect(),
        start: Instant::now(),
        failure: Mutex::new(None),
    };
    if shared.max_updates == 0 || shared.max_visits == 0 {
        shared.halt();
    }
    let (report_tx, report_rx) = unbounded::<(usize, Report<W::Snapshot>)>();

    let mut stats = RunStats::default();
    let (finished, coordinator_result) = std::thread::scope(|scope| {
        let handles: Vec<_> = workloads
            .into_iter()
            .zip(rngs)
            .enumerate()
            .map(|(id, (w, rng))| {
                let shared = &shared;
                let transport = &transport;
                let tx = report_tx.clone();
                scope.spawn(move || worker_loop(id, w, rng, shared, transport, tx))
            })
            .collect();

        let result = coordinate(&shared, &transport, config, num_tokens, &report_rx, &mut stats, &mut on_checkpoint);
        let finished: Vec<_> = handles.into_iter().map(|h| h.join()).collect();
        (finished, result)
    });
    coordinator_result?;

    let mut outs = Vec::with_capacity(p);
    let mut all_tokens = Vec::with_capacity(num_tokens);
    for f in finished {
        let (w, held, visits) = f.map_err(|_| Error::InvalidState("worker panicked".into()))?;
        outs.push(w);
        all_tokens.extend(held);
        stats.per_worker_visits.push(visits);
    }
    if let Some(err) = shared.failure.lock().unwrap_or_else(|e| e.into_inner()).take() {
        return Err(err);
    }
    census(all_tokens.iter().map(Token::id), num_tokens)?;
    all_tokens.sort_by_key(Token::id);
    stats.updates = shared.updates.load(Ordering::SeqCst);
    stats.visits = shared.visits.load(Ordering::SeqCst);
    stats.owner_violations = shared.violations.load(Ordering::SeqCst);
    Ok(NomadOutcome { workloads: outs, tokens: all_tokens, stats })
}

fn coordinate<S, F>(
    shared: &Shared,
    transport: &ChannelTransport<impl Token>,
    config: &NomadConfig,
    num_tokens: usize,
    reports: &crossbeam_channel::Receiver<(usize, Report<S>)>,
    stats: &mut RunStats,
    on_checkpoint: &mut F,
) -> Result<()>
where
    F: FnMut(&Checkpoint, &[S]) -> Result<()>,
{
    let p = shared.workers;
    let mut paused = Duration::ZERO;
    let mut jitter = rand::rng();
    let mut census_gap = move |d: Duration| d.mul_f64(jitter.random_range(0.0..2.0));
    let mut next_census = config.census_interval.map(|d| Instant::now() + census_gap(d));
    let mut starving = vec![false; p];
    loop {
        let now = Instant::now();
        let active = now.duration_since(shared.start).saturating_sub(paused);
        let killed = config.stop.kill.as_ref().is_some_and(|k| k.load(Ordering::SeqCst));
        let timed_out = config.stop.max_seconds.is_some_and(|s| active.as_secs_f64() >= s);
        if killed || timed_out {
            shared.halt();
        }
        if let Some(at) = next_census {
            if now >= at {
                shared.pause.store(true, Ordering::SeqCst);
                next_census = config.census_interval.map(|d| now + census_gap(d));
            }
        }
        for (w, flag) in starving.iter_mut().enumerate() {
            let last = Duration::from_nanos(shared.heartbeat[w].load(Ordering::Relaxed));
            let stalled = now.duration_since(shared.start).saturating_sub(last) > config.watchdog;
            if stalled && transport.pending(w) > 0 && !shared.pause.load(Ordering::SeqCst) {
                if !*flag {
                    log::warn!("worker {w} made no progress for {:?} with queued tokens", config.watchdog);
                    stats.starvation_events += 1;
                    *flag = true;
                }
            } else if !stalled {
                *flag = false;
            }
        }

        if !shared.pause.load(Ordering::SeqCst) {
            let nap = next_census.map_or(COORDINATOR_POLL, |at| at.saturating_duration_since(now).min(COORDINATOR_POLL));
            std::thread::sleep(nap);
            continue;
        }

        let pause_start = Instant::now();
        shared.all.wait();
        let seconds = pause_start.duration_since(shared.start).saturating_sub(paused).as_secs_f64();
        let mut collected: Vec<Option<Report<S>>> = (0..p).map(|_| None).collect();
        for _ in 0..p {
            let (w, r) = reports
                .recv()
                .map_err(|_| Error::InvalidState("worker exited during a pause".into()))?;
            collected[w] = Some(r);
        }
        let collected: Vec<Report<S>> = collected.into_iter().map(|r| r.expect("one report per worker")).collect();
        let mut result = census(collected.iter().flat_map(|r| r.ids.iter().copied()), num_tokens);
        stats.census_checks += 1;
        let updates = shared.updates.load(Ordering::SeqCst);
        let visits = shared.visits.load(Ordering::SeqCst);
        let mut stopping = shared.stop.load(Ordering::SeqCst) || result.is_err();
        let eval_due = updates >= shared.next_eval.load(Ordering::SeqCst);
        if let Some(every) = config.eval_every {
            if eval_due {
                shared.next_eval.store(next_multiple(updates, every.max(1)), Ordering::SeqCst);
            }
        }
        // The callback runs while workers are parked, so a failure can still
        // turn this pause into the final one.
        if result.is_ok() && (stopping || eval_due) {
            let kind = if stopping { CheckpointKind::Final } else { CheckpointKind::Eval };
            let snapshots: Vec<S> = collected.into_iter().map(|r| r.snapshot).collect();
            result = on_checkpoint(&Checkpoint { kind, updates, visits, seconds }, &snapshots);
            stopping |= result.is_err();
        }
        if stopping {
            shared.stop.store(true, Ordering::SeqCst);
            shared.exit.store(true, Ordering::SeqCst);
        } else {
            shared.pause.store(false, Ordering::SeqCst);
        }
        shared.all.wait();
        paused += pause_start.elapsed();
        stats.seconds = seconds;
        result?;
        if stopping {
            return Ok(());
        }
    }
}

#[allow(clippy::type_complexity)]
fn worker_loop<W: Workload>(
    id: usize,
    mut work: W,
    mut rng: ChaCha8Rng,
    shared: &Shared,
    transport: &ChannelTransport<W::Token>,
    reports: Sender<(usize, Report<W::Snapshot>)>,
) -> (W, Vec<W::Token>, u64) {
    let p = shared.workers;
    let mut backlog: VecDeque<W::Token> = VecDeque::new();
    let mut held: Vec<W::Token> = Vec::with_capacity(work.group_size());
    let mut visits = 0u64;
    let mut failed = false;
    shared.beat(id);
    loop {
        if shared.pause.load(Ordering::SeqCst) {
            shared.all.wait();
            while let Some(t) = transport.try_pop(id) {
                backlog.push_back(t);
            }
            work.flush();
            for _ in 0..p {
                shared.ring.wait();
                work.drain();
            }
            shared.ring.wait();
            let tokens = backlog.make_contiguous();
            let report = Report { ids: tokens.iter().map(Token::id).collect(), snapshot: work.snapshot(tokens) };
            let _ = reports.send((id, report));
            shared.all.wait();
            shared.beat(id);
            if shared.exit.load(Ordering::SeqCst) {
                transport.shut(id);
                return (work, backlog.into(), visits);
            }
            continue;
        }

        let pop = |backlog: &mut VecDeque<W::Token>| backlog.pop_front().or_else(|| transport.try_pop(id));
        let first = match pop(&mut backlog) {
            Some(t) => t,
            None => match transport.pop_timeout(id, IDLE_WAIT) {
                Some(t) => t,
                None => continue,
            },
        };
        shared.owners[first.id()].store(id, Ordering::Release);
        held.push(first);
        while held.len() < work.group_size() {
            match pop(&mut backlog) {
                Some(t) => {
                    shared.owners[t.id()].store(id, Ordering::Release);
                    held.push(t);
                }
                None => break,
            }
        }
        for t in &held {
            if shared.owners[t.id()].load(Ordering::Acquire) != id {
                shared.violations.fetch_add(1, Ordering::Relaxed);
            }
        }
        let n = if failed {
            0
        } else {
            match work.process(&mut held, &mut rng) {
                Ok(n) => n,
                Err(e) => {
                    failed = true;
                    shared.fail(e);
                    0
                }
            }
        };
        shared.beat(id);
        let count = held.len() as u64;
        for mut t in held.drain(..) {
            t.bump_version();
            shared.owners[t.id()].store(NO_OWNER, Ordering::Release);
            let dest = if p == 1 {
                id
            } else {
                let d = rng.random_range(0..p - 1);
                if d >= id {
                    d + 1
                } else {
                    d
                }
            };
            if let Err(t) = transport.push(dest, t) {
                backlog.push_back(t);
            }
        }
        visits += count;
        let total_visits = shared.visits.fetch_add(count, Ordering::SeqCst) + count;
        let total = shared.updates.fetch_add(n, Ordering::SeqCst) + n;
        if total >= shared.max_updates || total_visits >= shared.max_visits {
            shared.halt();
        } else if total >= shared.next_eval.load(Ordering::SeqCst) {
            shared.pause.store(true, Ordering::SeqCst);
        }
        work.after_step();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lda::worker_rng;

    #[derive(Debug)]
    struct Counter {
        id: usize,
        version: u64,
    }

    impl Token for Counter {
        fn id(&self) -> usize {
            self.id
        }
        fn version(&self) -> u64 {
            self.version
        }
        fn bump_version(&mut self) {
            self.version += 1;
        }
    }

    struct Touch {
        touched: u64,
    }

    impl Workload for Touch {
        type Token = Counter;
        type Snapshot = u64;

        fn process(&mut self, held: &mut [Counter], _rng: &mut ChaCha8Rng) -> Result<u64> {
            self.touched += held.len() as u64;
            Ok(3)
        }

        fn snapshot(&self, _held: &[Counter]) -> u64 {
            self.touched
        }
    }

    fn run(p: usize, stop: StopCondition, eval: Option<u64>) -> (NomadOutcome<Touch>, Vec<Checkpoint>) {
        let tokens: Vec<Counter> = (0..10).map(|id| Counter { id, version: 0 }).collect();
        let mut cfg = NomadConfig::new(p, stop);
        cfg.eval_every = eval;
        let mut seen = Vec::new();
        let out = run_async(
            (0..p).map(|_| Touch { touched: 0 }).collect(),
            tokens,
            (0..p).map(|w| worker_rng(1, w)).collect(),
            &cfg,
            |c, snaps: &[u64]| {
                assert_eq!(snaps.len(), p);
                seen.push(*c);
                Ok(())
            },
        )
        .unwrap();
        (out, seen)
    }

    #[test]
    fn stops_on_update_budget() {
        let (out, seen) = run(3, StopCondition { max_updates: Some(300), ..Default::default() }, Some(60));
        assert!(out.stats.updates >= 300);
        assert_eq!(out.tokens.len(), 10);
        assert_eq!(out.stats.owner_violations, 0);
        let versions: u64 = out.tokens.iter().map(|t| t.version).sum();
        assert_eq!(versions, out.stats.visits);
        assert_eq!(seen.last().unwrap().kind, CheckpointKind::Final);
        assert!(seen.len() >= 2);
        assert!(seen.windows(2).all(|w| w[0].updates <= w[1].updates && w[0].seconds <= w[1].seconds));
    }

    #[test]
    fn single_worker_is_deterministic() {
        let stop = StopCondition { max_visits: Some(95), ..Default::default() };
        let (a, sa) = run(1, stop.clone(), Some(25));
        let (b, sb) = run(1, stop, Some(25));
        let ua: Vec<u64> = sa.iter().map(|c| c.updates).collect();
        let ub: Vec<u64> = sb.iter().map(|c| c.updates).collect();
        assert_eq!(ua, ub);
        assert_eq!(&ua[..3], &[27, 51, 75]);
        assert_eq!(*ua.last().unwrap(), 285);
        assert_eq!(a.stats.visits, 95);
        assert_eq!(b.workloads[0].touched, 95);
    }

    #[test]
    fn kill_flag_stops_the_run() {
        let kill = Arc::new(AtomicBool::new(false));
        let k2 = kill.clone();
        let t = std::thread::spawn(move || {
            std::thread::sleep(Duration::from_millis(30));
            k2.store(true, Ordering::SeqCst);
        });
        let (out, _) = run(4, StopCondition { kill: Some(kill), ..Default::default() }, None);
        t.join().unwrap();
        assert_eq!(out.tokens.len(), 10);
    }

    #[test]
    fn requires_a_stop_condition() {
        let cfg = NomadConfig::new(1, StopCondition::default());
        let r = run_async(vec![Touch { touched: 0 }], vec![], vec![worker_rng(0, 0)], &cfg, |_, _: &[u64]| Ok(()));
        assert!(r.is_err());
    }

    #[test]
    fn census_detects_loss_and_duplication() {
        assert!(census([0, 1, 2], 3).is_ok());
        assert!(census([0, 2], 3).is_err());
        assert!(census([0, 1, 1, 2], 3).is_err());
        assert!(census([0, 1, 5], 3).is_err());
    }
}
