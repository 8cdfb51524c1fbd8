use crossbeam_channel::{unbounded, Receiver, Sender};

use crate::lda::Normalizers;

/// Normalizer changes made by one worker, travelling around the ring.
#[derive(Debug, Clone, PartialEq)]
pub struct RingMessage {
    pub origin: usize,
    pub delta: Vec<f64>,
}

/// A worker's link into the normalizer ring: its own inbox and the inbox
/// of the next worker.
#[derive(Debug, Clone)]
pub struct RingLink {
    inbox: Receiver<RingMessage>,
    next: Sender<RingMessage>,
}

/// One link per worker; worker p forwards to worker (p + 1) mod P.
pub fn ring(workers: usize) -> Vec<RingLink> {
    let (senders, receivers): (Vec<_>, Vec<_>) = (0..workers).map(|_| unbounded()).unzip();
    receivers
        .into_iter()
        .enumerate()
        .map(|(p, inbox)| RingLink { inbox, next: senders[(p + 1) % workers].clone() })
        .collect()
}

/// A worker's copy of π_k = Σ_v λ_k^v.
///
/// Local changes apply immediately and also accumulate as pending deltas.
/// Syncing sends the pending deltas to the next worker in the ring; each
/// worker applies a message once and passes it on until it would return
/// to its origin, so after quiescence every copy has seen every delta.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizerLedger {
    worker: usize,
    workers: usize,
    local: Vec<f64>,
    pending: Vec<f64>,
    dirty: bool,
}

impl NormalizerLedger {
    pub fn new(worker: usize, workers: usize, initial: Vec<f64>) -> Self {
        let k = initial.len();
        Self { worker, workers, local: initial, pending: vec![0.0; k], dirty: false }
    }

    pub fn local(&self) -> &[f64] {
        &self.local
    }

    pub fn has_pending(&self) -> bool {
        self.dirty
    }

    /// Pending deltas as a message for the next worker, clearing them.
    /// Returns `None` when nothing changed or there is no one to tell.
    pub fn take_pending(&mut self) -> Option<RingMessage> {
        if !self.dirty {
            return None;
        }
        self.dirty = false;
        let delta = std::mem::replace(&mut self.pending, vec![0.0; self.local.len()]);
        (self.workers > 1).then_some(RingMessage { origin: self.worker, delta })
    }

    /// Applies a message from another worker. Returns it back when it still
    /// has workers to visit.
    pub fn receive(&mut self, msg: RingMessage) -> Option<RingMessage> {
        for (l, d) in self.local.iter_mut().zip(&msg.delta) {
            *l += d;
        }
        ((self.worker + 1) % self.workers != msg.origin).then_some(msg)
    }

    /// Sends pending deltas and handles every message already in the inbox.
    pub fn sync_normalizers(&mut self, link: &RingLink) {
        if let Some(msg) = self.take_pending() {
            let _ = link.next.send(msg);
        }
        self.drain(link);
    }

    /// Applies and forwards every message in the inbox.
    pub fn drain(&mut self, link: &RingLink) {
        while let Ok(msg) = link.inbox.try_recv() {
            if let Some(fwd) = self.receive(msg) {
                let _ = link.next.send(fwd);
            }
        }
    }

    /// Sends pending deltas without reading the inbox.
    pub fn flush(&mut self, link: &RingLink) {
        if let Some(msg) = self.take_pending() {
            let _ = link.next.send(msg);
        }
    }
}

impl Normalizers for NormalizerLedger {
    fn get(&self, k: usize) -> f64 {
        self.local[k]
    }

    fn add(&mut self, k: usize, delta: f64) {
        self.local[k] += delta;
        self.pending[k] += delta;
        self.dirty = true;
    }
}
