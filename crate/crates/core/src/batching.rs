//! Threshold-or-timeout batch formation.
//!
//! [`BatchCollector`] is a clock-agnostic state machine: callers pass the
//! current time (a `Duration` since any fixed origin) on every call. The
//! pipeline drives it with a monotonic clock through [`collect_batch`]; tests
//! drive it with a simulated clock through [`simulate`].

use std::collections::VecDeque;
use std::fmt;
use std::time::{Duration, Instant};

use crossbeam_channel::{Receiver, RecvTimeoutError};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FlushReason {
    /// `threshold` items were queued.
    Threshold,
    /// The oldest queued item waited `max_wait`.
    Timeout,
    /// Upstream closed; whatever was left is flushed.
    Drain,
}

impl fmt::Display for FlushReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FlushReason::Threshold => "threshold",
            FlushReason::Timeout => "timeout",
            FlushReason::Drain => "drain",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch<T> {
    pub items: Vec<T>,
    pub reason: FlushReason,
}

#[derive(Debug)]
pub struct BatchCollector<T> {
    threshold: usize,
    max_wait: Duration,
    queue: VecDeque<(Duration, T)>,
}

impl<T> BatchCollector<T> {
    pub fn new(threshold: usize, max_wait: Duration) -> Self {
        assert!(threshold >= 1, "batch threshold must be >= 1");
        Self {
            threshold,
            max_wait,
            queue: VecDeque::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn push(&mut self, item: T, now: Duration) {
        self.queue.push_back((now, item));
    }

    /// Time at which the oldest queued item times out.
    pub fn deadline(&self) -> Option<Duration> {
        self.queue.front().map(|(t, _)| *t + self.max_wait)
    }

    /// Flush if either trigger has fired at `now`.
    pub fn poll(&mut self, now: Duration) -> Option<Batch<T>> {
        if self.queue.len() >= self.threshold {
            let items = self.queue.drain(..self.threshold).map(|(_, x)| x).collect();
            return Some(Batch {
                items,
                reason: FlushReason::Threshold,
            });
        }
        match self.deadline() {
            Some(d) if now >= d => Some(Batch {
                items: self.queue.drain(..).map(|(_, x)| x).collect(),
                reason: FlushReason::Timeout,
            }),
            _ => None,
        }
    }

    /// Flush everything left, in chunks of at most `threshold`.
    pub fn drain(&mut self) -> Option<Batch<T>> {
        if self.queue.is_empty() {
            return None;
        }
        let n = self.queue.len().min(self.threshold);
        Some(Batch {
            items: self.queue.drain(..n).map(|(_, x)| x).collect(),
            reason: FlushReason::Drain,
        })
    }
}

/// Returned by [`collect_batch`] once upstream has closed and nothing is left.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Closed;

/// Block until the collector produces a batch, pulling items from `rx`.
/// `origin` anchors the collector's time axis.
pub fn collect_batch<T>(
    rx: &Receiver<T>,
    collector: &mut BatchCollector<T>,
    origin: Instant,
) -> Result<Batch<T>, Closed> {
    loop {
        let now = origin.elapsed();
        if let Some(b) = collector.poll(now) {
            return Ok(b);
        }
        let received = match collector.deadline() {
            Some(deadline) => rx.recv_timeout(deadline.saturating_sub(now)),
            None => rx.recv().map_err(|_| RecvTimeoutError::Disconnected),
        };
        match received {
            Ok(item) => {
                collector.push(item, origin.elapsed());
                // pick up anything already waiting without blocking
                while collector.len() < collector.threshold {
                    match rx.try_recv() {
                        Ok(item) => collector.push(item, origin.elapsed()),
                        Err(_) => break,
                    }
                }
            }
            Err(RecvTimeoutError::Timeout) => {}
            Err(RecvTimeoutError::Disconnected) => return collector.drain().ok_or(Closed),
        }
    }
}

/// A flush observed by [`simulate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimulatedFlush {
    pub at: Duration,
    pub size: usize,
    pub reason: FlushReason,
}

/// Discrete-event run of a collector against a fixed arrival schedule.
/// Arrivals must be sorted. Items still queued at the end flush on their
/// timeout.
pub fn simulate(arrivals: &[Duration], threshold: usize, max_wait: Duration) -> Vec<SimulatedFlush> {
    let mut c = BatchCollector::new(threshold, max_wait);
    let mut out = Vec::new();
    let mut next = 0;
    loop {
        let next_arrival = arrivals.get(next).copied();
        let deadline = c.deadline();
        let now = match (next_arrival, deadline) {
            (None, None) => break,
            (Some(a), Some(d)) => a.min(d),
            (Some(a), None) => a,
            (None, Some(d)) => d,
        };
        // arrivals at `now` are enqueued before checking triggers
        while next < arrivals.len() && arrivals[next] <= now {
            c.push(next, arrivals[next]);
            next += 1;
            while let Some(b) = c.poll(now).filter(|b| b.reason == FlushReason::Threshold) {
                out.push(SimulatedFlush {
                    at: now,
                    size: b.items.len(),
                    reason: b.reason,
                });
            }
        }
        while let Some(b) = c.poll(now) {
            out.push(SimulatedFlush {
                at: now,
                size: b.items.len(),
                reason: b.reason,
            });
        }
    }
    out
}
