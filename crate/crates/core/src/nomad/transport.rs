use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Duration;

use crossbeam_channel::{unbounded, Receiver, Sender};

/// Per-worker inbound token queues.
///
/// Every queue is multi-producer single-consumer: any worker may push to
/// any queue, but only worker `p` pops from queue `p`. Order is FIFO per
/// producer.
pub trait Transport<T>: Sync {
    fn workers(&self) -> usize;

    /// Delivers `token` to `to`, or to the next live worker if `to` has
    /// stopped. Returns the receiving worker, or the token back if every
    /// worker has stopped.
    fn push(&self, to: usize, token: T) -> Result<usize, T>;

    /// Non-blocking pop.
    fn try_pop(&self, worker: usize) -> Option<T>;

    /// Pop that waits up to `timeout` for a token.
    fn pop_timeout(&self, worker: usize, timeout: Duration) -> Option<T>;

    /// Tokens currently queued for `worker`.
    fn pending(&self, worker: usize) -> usize;

    /// Marks `worker` as stopped; later pushes to it are rerouted.
    fn shut(&self, worker: usize);
}

/// In-process transport over unbounded channels.
pub struct ChannelTransport<T> {
    senders: Vec<Sender<T>>,
    receivers: Vec<Receiver<T>>,
    live: Vec<AtomicBool>,
}

impl<T> ChannelTransport<T> {
    pub fn new(workers: usize) -> Self {
        let (senders, receivers) = (0..workers).map(|_| unbounded()).unzip();
        Self { senders, receivers, live: (0..workers).map(|_| AtomicBool::new(true)).collect() }
    }

    pub fn is_live(&self, worker: usize) -> bool {
        self.live[worker].load(Ordering::Acquire)
    }
}

impl<T: Send> Transport<T> for ChannelTransport<T> {
    fn workers(&self) -> usize {
        self.senders.len()
    }

    fn push(&self, to: usize, token: T) -> Result<usize, T> {
        let n = self.senders.len();
        for step in 0..n {
            let target = (to + step) % n;
            if self.is_live(target) {
                // The receiver lives as long as `self`, so sending cannot fail.
                return match self.senders[target].send(token) {
                    Ok(()) => Ok(target),
                    Err(e) => Err(e.into_inner()),
                };
            }
        }
        Err(token)
    }

    fn try_pop(&self, worker: usize) -> Option<T> {
        self.receivers[worker].try_recv().ok()
    }

    fn pop_timeout(&self, worker: usize, timeout: Duration) -> Option<T> {
        self.receivers[worker].recv_timeout(timeout).ok()
    }

    fn pending(&self, worker: usize) -> usize {
        self.receivers[worker].len()
    }

    fn shut(&self, worker: usize) {
        self.live[worker].store(false, Ordering::Release);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn push_pop_roundtrip() {
        let t = ChannelTransport::new(2);
        assert_eq!(t.try_pop(1), None::<(u32, u64)>);
        assert_eq!(t.push(1, (7, 3)), Ok(1));
        assert_eq!(t.pending(1), 1);
        assert_eq!(t.try_pop(1), Some((7, 3)));
        assert_eq!(t.try_pop(0), None);
    }

    #[test]
    fn per_producer_order() {
        let t = ChannelTransport::new(1);
        std::thread::scope(|s| {
            for producer in 0..2u32 {
                let t = &t;
                s.spawn(move || {
                    for i in 0..1000u32 {
                        t.push(0, (producer, i)).unwrap();
                    }
                });
            }
        });
        let mut last = [None::<u32>; 2];
        while let Some((p, i)) = t.try_pop(0) {
            if let Some(prev) = last[p as usize] {
                assert!(i > prev);
            }
            last[p as usize] = Some(i);
        }
        assert_eq!(last, [Some(999), Some(999)]);
    }

    #[test]
    fn reroutes_around_stopped_workers() {
        let t = ChannelTransport::new(3);
        t.shut(1);
        assert_eq!(t.push(1, 5u8), Ok(2));
        t.shut(2);
        assert_eq!(t.push(1, 6u8), Ok(0));
        t.shut(0);
        assert_eq!(t.push(0, 9u8), Err(9));
    }
}
