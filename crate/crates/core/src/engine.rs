//! Event-driven master–worker simulation.
//!
//! Workers request work as soon as their current batch is done. The master
//! answers with an [`Allocation`] from the configured strategy, every block
//! sent is counted, and the worker then runs its batch at `1/s_k` time per
//! task. Communication is fully overlapped and takes no simulated time.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::Write;

use thiserror::Error;

use crate::analysis;
use crate::kernel::{BlockId, IndexSet, KernelKind, LedgerError, Problem, TaskId, TaskLedger};
use crate::platform::Platform;
use crate::rng::RandomStream;
use crate::strategies::{allocate, two_phase_threshold, AllocationKind, Policy, StrategyId};

/// Consecutive empty batches after which a worker is declared livelocked.
pub const LIVELOCK_LIMIT: usize = 1000;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("strategy {strategy} does not apply to {kernel} problems")]
    KernelMismatch { strategy: StrategyId, kernel: KernelKind },
    #[error("beta is only meaningful for two-phase strategies, not {0}")]
    UnexpectedBeta(StrategyId),
    #[error("beta must be finite and non-negative (got {0})")]
    BadBeta(f64),
    #[error("worker {worker} was given {task} without holding {block:?}")]
    MissingInput { worker: usize, task: TaskId, block: BlockId },
    #[error("worker {worker} was sent {block:?} which it already holds")]
    DuplicateTransfer { worker: usize, block: BlockId },
    #[error("worker {worker} received {LIVELOCK_LIMIT} consecutive empty batches ({remaining} tasks left)")]
    Livelock { worker: usize, remaining: usize },
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

/// What the master knows about one worker.
#[derive(Debug, Clone)]
pub struct WorkerState {
    pub id: usize,
    /// Index sets I, J, K of the square/cube grown by cross allocations.
    /// K is empty and unused for outer products.
    pub known: [IndexSet; 3],
    held: Vec<bool>,
    pub busy_until: f64,
    pub blocks_received: usize,
    pub tasks_done: usize,
}

impl WorkerState {
    pub fn new(id: usize, problem: Problem) -> Self {
        let n = problem.n;
        let k_dim = if problem.kind == KernelKind::Matmul { n } else { 0 };
        Self {
            id,
            known: [IndexSet::new(n), IndexSet::new(n), IndexSet::new(k_dim)],
            held: vec![false; problem.block_slots()],
            busy_until: 0.0,
            blocks_received: 0,
            tasks_done: 0,
        }
    }

    pub fn holds(&self, problem: Problem, block: BlockId) -> bool {
        self.held[problem.block_slot(block)]
    }

    /// Records a transfer. Returns false if the block was already held.
    pub fn receive(&mut self, problem: Problem, block: BlockId) -> bool {
        let slot = problem.block_slot(block);
        if self.held[slot] {
            return false;
        }
        self.held[slot] = true;
        self.blocks_received += 1;
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TraceMode {
    #[default]
    Off,
    KnowledgeGrowth,
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub problem: Problem,
    pub platform: Platform,
    pub strategy: StrategyId,
    /// Switch parameter of the two-phase strategies. `None` means the
    /// homogeneous-platform optimum for this `(p, n)`.
    pub beta: Option<f64>,
    pub seed: u64,
    pub trace: TraceMode,
}

impl SimConfig {
    pub fn new(problem: Problem, platform: Platform, strategy: StrategyId, seed: u64) -> Self {
        Self { problem, platform, strategy, beta: None, seed, trace: TraceMode::Off }
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = Some(beta);
        self
    }

    pub fn with_trace(mut self) -> Self {
        self.trace = TraceMode::KnowledgeGrowth;
        self
    }

    /// Validates the config and resolves beta and the strategy parameters.
    pub fn resolve(&self) -> Result<(Policy, Option<f64>), SimError> {
        if self.strategy.kernel() != self.problem.kind {
            return Err(SimError::KernelMismatch { strategy: self.strategy, kernel: self.problem.kind });
        }
        if !self.strategy.is_two_phase() {
            if self.beta.is_some() {
                return Err(SimError::UnexpectedBeta(self.strategy));
            }
            let policy = match self.strategy {
                StrategyId::RandomOuter | StrategyId::RandomMatrix => Policy::Random,
                StrategyId::SortedOuter | StrategyId::SortedMatrix => Policy::Sorted,
                _ => Policy::Dynamic,
            };
            return Ok((policy, None));
        }
        let beta = match self.beta {
            Some(b) if !(b.is_finite() && b >= 0.0) => return Err(SimError::BadBeta(b)),
            Some(b) => b,
            None => analysis::beta_homogeneous(self.platform.len(), self.problem.n, self.problem.kind),
        };
        let threshold = two_phase_threshold(beta, self.problem.total_tasks());
        Ok((Policy::TwoPhase { threshold }, Some(beta)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorkerSummary {
    pub blocks_received: usize,
    pub tasks_done: usize,
    pub finish_time: f64,
}

/// One knowledge-growth observation, taken just before a cross allocation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSample {
    pub time: f64,
    pub worker: usize,
    /// Fraction of indices the worker knows per dimension.
    pub x: f64,
    /// Fraction of the tasks outside the worker's square/cube still unprocessed.
    pub unprocessed_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub per_worker: Vec<WorkerSummary>,
    pub total_comm_blocks: usize,
    pub makespan: f64,
    pub lower_bound: f64,
    /// `total_comm_blocks / lower_bound`.
    pub normalized_comm: f64,
    /// Beta actually used, for two-phase strategies.
    pub beta: Option<f64>,
    pub trace: Option<Vec<TraceSample>>,
}

impl SimResult {
    pub fn total_tasks_done(&self) -> usize {
        self.per_worker.iter().map(|w| w.tasks_done).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Event {
    time: f64,
    worker: usize,
}

impl Eq for Event {}

impl Ord for Event {
    // Reversed so that BinaryHeap pops the earliest time, then smallest id.
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then_with(|| other.worker.cmp(&self.worker))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub fn run_simulation(config: &SimConfig) -> Result<SimResult, SimError> {
    let (policy, beta) = config.resolve()?;
    let problem = config.problem;
    let p = config.platform.len();
    let drift = config.platform.drift();
    let root = RandomStream::new(config.seed);
    let mut strategy_rng = root.split("strategy");
    let mut drift_rng = root.split("drift");

    let mut speeds = config.platform.speeds().to_vec();
    let mut ledger = TaskLedger::new(problem);
    let mut workers: Vec<WorkerState> = (0..p).map(|id| WorkerState::new(id, problem)).collect();
    let mut finish = vec![0.0f64; p];
    let mut empty_streak = vec![0usize; p];
    let mut trace = (config.trace == TraceMode::KnowledgeGrowth).then(Vec::new);
    let total = problem.total_tasks() as f64;

    let mut queue: BinaryHeap<Event> = (0..p).map(|worker| Event { time: 0.0, worker }).collect();
    let mut clock = 0.0f64;

    while let Some(Event { time, worker: w }) = queue.pop() {
        debug_assert!(time >= clock, "event clock went backwards");
        clock = time;
        if ledger.remaining() == 0 {
            finish[w] = time;
            continue;
        }

        let alloc = allocate(policy, &ledger, &workers[w], &mut strategy_rng);

        if let (Some(samples), AllocationKind::Cross) = (trace.as_mut(), alloc.kind) {
            let state = &workers[w];
            let side = state.known[0].len() as f64;
            let cube = match problem.kind {
                KernelKind::Outer => (state.known[0].len() * state.known[1].len()) as f64,
                KernelKind::Matmul => (state.known[0].len() * state.known[1].len() * state.known[2].len()) as f64,
            };
            // Every task inside the cube was handed out when the cube grew, so
            // all remaining tasks lie outside it.
            if total > cube {
                samples.push(TraceSample {
                    time,
                    worker: w,
                    x: side / problem.n as f64,
                    unprocessed_fraction: ledger.remaining() as f64 / (total - cube),
                });
            }
        }

        let state = &mut workers[w];
        for &block in &alloc.blocks {
            if !state.receive(problem, block) {
                return Err(SimError::DuplicateTransfer { worker: w, block });
            }
        }
        for (d, x) in alloc.extend.iter().enumerate() {
            if let Some(x) = *x {
                state.known[d].insert(x);
            }
        }
        for &task in &alloc.batch {
            if let Some(block) = task.inputs(problem.kind).into_iter().find(|b| !state.holds(problem, *b)) {
                return Err(SimError::MissingInput { worker: w, task, block });
            }
            ledger.mark_processed(task)?;
        }

        if alloc.batch.is_empty() {
            empty_streak[w] += 1;
            if empty_streak[w] >= LIVELOCK_LIMIT {
                return Err(SimError::Livelock { worker: w, remaining: ledger.remaining() });
            }
        } else {
            empty_streak[w] = 0;
        }

        state.tasks_done += alloc.batch.len();
        let mut end = time;
        if drift.is_active() {
            for _ in 0..alloc.batch.len() {
                end += 1.0 / speeds[w];
                speeds[w] = drift.drift_speed(speeds[w], &mut drift_rng);
            }
        } else {
            end += alloc.batch.len() as f64 / speeds[w];
        }
        state.busy_until = end;
        queue.push(Event { time: end, worker: w });
    }

    let per_worker: Vec<WorkerSummary> = workers
        .iter()
        .zip(&finish)
        .map(|(w, &finish_time)| WorkerSummary {
            blocks_received: w.blocks_received,
            tasks_done: w.tasks_done,
            finish_time,
        })
        .collect();
    let total_comm_blocks = per_worker.iter().map(|w| w.blocks_received).sum();
    let rs = config.platform.relative_speeds();
    let lower_bound = analysis::lower_bound(problem.kind, &rs, problem.n);
    Ok(SimResult {
        makespan: finish.iter().copied().fold(0.0, f64::max),
        per_worker,
        total_comm_blocks,
        lower_bound,
        normalized_comm: total_comm_blocks as f64 / lower_bound,
        beta,
        trace,
    })
}

/// Knowledge-growth samples of one worker as `(x, unprocessed_fraction)`.
/// Empty when the run was not traced.
pub fn sample_knowledge_growth(result: &SimResult, worker: usize) -> Vec<(f64, f64)> {
    result.trace.iter().flatten().filter(|s| s.worker == worker).map(|s| (s.x, s.unprocessed_fraction)).collect()
}

/// Writes the trace as CSV: `event_time,worker,x,unprocessed_fraction`.
pub fn write_trace_csv<W: Write>(result: &SimResult, out: W) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["event_time", "worker", "x", "unprocessed_fraction"])?;
    for s in result.trace.iter().flatten() {
        wtr.write_record([
            s.time.to_string(),
            s.worker.to_string(),
            s.x.to_string(),
            s.unprocessed_fraction.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outer(n: usize, speeds: Vec<f64>, strategy: StrategyId) -> SimConfig {
        SimConfig::new(Problem::outer(n).unwrap(), Platform::new(speeds).unwrap(), strategy, 1)
    }

    #[test]
    fn single_task_costs_two_blocks() {
        for s in StrategyId::family(KernelKind::Outer) {
            let r = run_simulation(&outer(1, vec![3.0], s)).unwrap();
            assert_eq!(r.total_comm_blocks, 2);
            assert_eq!(r.per_worker[0].tasks_done, 1);
        }
    }

    #[test]
    fn one_worker_dynamic_outer_two_crosses() {
        // First cross: 2 blocks, 1 task. Second: 2 blocks, the remaining 3.
        let r = run_simulation(&outer(2, vec![1.0], StrategyId::DynamicOuter)).unwrap();
        assert_eq!(r.per_worker[0].tasks_done, 4);
        assert_eq!(r.total_comm_blocks, 4);
        assert_eq!(r.makespan, 4.0);
        assert_eq!(r.lower_bound, 4.0);
    }

    #[test]
    fn rejects_mismatched_configs() {
        let cfg = outer(4, vec![1.0], StrategyId::DynamicMatrix);
        assert!(matches!(run_simulation(&cfg), Err(SimError::KernelMismatch { .. })));
        let cfg = outer(4, vec![1.0], StrategyId::DynamicOuter).with_beta(3.0);
        assert_eq!(run_simulation(&cfg), Err(SimError::UnexpectedBeta(StrategyId::DynamicOuter)));
        let cfg = outer(4, vec![1.0], StrategyId::DynamicOuter2Phases).with_beta(-1.0);
        assert_eq!(run_simulation(&cfg), Err(SimError::BadBeta(-1.0)));
    }

    #[test]
    fn ties_go_to_smallest_id() {
        let mut heap: BinaryHeap<Event> = [2, 0, 1].map(|w| Event { time: 1.0, worker: w }).into();
        heap.push(Event { time: 0.5, worker: 9 });
        let order: Vec<usize> = std::iter::from_fn(|| heap.pop()).map(|e| e.worker).collect();
        assert_eq!(order, vec![9, 0, 1, 2]);
    }

    #[test]
    fn faster_worker_does_more() {
        let r = run_simulation(&outer(30, vec![10.0, 40.0], StrategyId::RandomOuter)).unwrap();
        assert!(r.per_worker[1].tasks_done > 3 * r.per_worker[0].tasks_done);
        assert_eq!(r.total_tasks_done(), 900);
    }

    #[test]
    fn trace_single_worker_never_loses_tasks() {
        let r = run_simulation(&outer(20, vec![1.0], StrategyId::DynamicOuter).with_trace()).unwrap();
        let samples = sample_knowledge_growth(&r, 0);
        assert_eq!(samples[0], (0.0, 1.0));
        assert_eq!(samples.len(), 20);
        assert!(samples.iter().all(|&(_, g)| g == 1.0));
    }

    #[test]
    fn trace_disabled_is_empty() {
        let r = run_simulation(&outer(5, vec![1.0], StrategyId::DynamicOuter)).unwrap();
        assert!(sample_knowledge_growth(&r, 0).is_empty());
    }

    #[test]
    fn trace_csv_header() {
        let r = run_simulation(&outer(3, vec![1.0], StrategyId::DynamicOuter).with_trace()).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&r, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("event_time,worker,x,unprocessed_fraction"));
        assert_eq!(lines.next(), Some("0,0,0,1"));
        assert_eq!(text.lines().count(), 4);
    }
}
