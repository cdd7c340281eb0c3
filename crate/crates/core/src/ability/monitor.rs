//! Queue-based front end for running an ability graph next to sample producers.
//!
//! Producers push samples through cloned [`SampleSender`]s. Each
//! [`ConcurrentMonitor::run_cycle`] drains what is queued at cycle start,
//! propagates once and publishes an immutable [`Snapshot`] that any number
//! of [`SnapshotReader`]s can fetch without blocking the evaluator for long.

use std::sync::mpsc::{self, Receiver, SendError, Sender};
use std::sync::{Arc, RwLock};

use super::{AbilityGraph, MonitorThresholds, RuntimeError, SignalSample, Snapshot};

#[derive(Debug, Clone)]
pub struct SampleSender(Sender<SignalSample>);

impl SampleSender {
    pub fn send(&self, sample: SignalSample) -> Result<(), SendError<SignalSample>> {
        self.0.send(sample)
    }
}

#[derive(Debug, Clone)]
pub struct SnapshotReader(Arc<RwLock<Arc<Snapshot>>>);

impl SnapshotReader {
    pub fn latest(&self) -> Arc<Snapshot> {
        // A poisoned lock still holds the last complete snapshot.
        match self.0.read() {
            Ok(guard) => Arc::clone(&guard),
            Err(poisoned) => Arc::clone(&poisoned.into_inner()),
        }
    }
}

#[derive(Debug)]
pub struct CycleReport {
    pub snapshot: Arc<Snapshot>,
    pub accepted: usize,
    pub rejected: Vec<(SignalSample, RuntimeError)>,
}

#[derive(Debug)]
pub struct ConcurrentMonitor {
    graph: AbilityGraph,
    thresholds: MonitorThresholds,
    inbox: Receiver<SignalSample>,
    published: Arc<RwLock<Arc<Snapshot>>>,
}

impl ConcurrentMonitor {
    pub fn new(graph: AbilityGraph, thresholds: MonitorThresholds) -> (Self, SampleSender) {
        let (tx, rx) = mpsc::channel();
        let published = Arc::new(RwLock::new(Arc::new(graph.snapshot())));
        (
            Self {
                graph,
                thresholds,
                inbox: rx,
                published,
            },
            SampleSender(tx),
        )
    }

    pub fn reader(&self) -> SnapshotReader {
        SnapshotReader(Arc::clone(&self.published))
    }

    pub fn graph(&self) -> &AbilityGraph {
        &self.graph
    }

    pub fn run_cycle(&mut self) -> CycleReport {
        let batch: Vec<SignalSample> = self.inbox.try_iter().collect();
        let mut accepted = 0;
        let mut rejected = Vec::new();
        for sample in batch {
            match self.graph.ingest_sample(sample.clone()) {
                Ok(()) => accepted += 1,
                Err(e) => rejected.push((sample, e)),
            }
        }
        self.graph.propagate();
        self.graph.assess(&self.thresholds);
        let snapshot = Arc::new(self.graph.snapshot());
        match self.published.write() {
            Ok(mut guard) => *guard = Arc::clone(&snapshot),
            Err(poisoned) => *poisoned.into_inner() = Arc::clone(&snapshot),
        }
        CycleReport {
            snapshot,
            accepted,
            rejected,
        }
    }
}
