//! Allocation policies.
//!
//! Every policy is a pure decision: given the ledger, the requesting
//! worker's state and a random stream, it returns which blocks to send and
//! which tasks to hand over. The engine applies the decision.

use std::fmt;
use std::str::FromStr;

use crate::engine::WorkerState;
use crate::kernel::{cross_matmul, cross_outer, Array, BlockId, KernelKind, Problem, TaskId, TaskLedger};
use crate::rng::RandomStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StrategyId {
    RandomOuter,
    SortedOuter,
    DynamicOuter,
    DynamicOuter2Phases,
    RandomMatrix,
    SortedMatrix,
    DynamicMatrix,
    DynamicMatrix2Phases,
}

impl StrategyId {
    pub const ALL: [StrategyId; 8] = [
        StrategyId::RandomOuter,
        StrategyId::SortedOuter,
        StrategyId::DynamicOuter,
        StrategyId::DynamicOuter2Phases,
        StrategyId::RandomMatrix,
        StrategyId::SortedMatrix,
        StrategyId::DynamicMatrix,
        StrategyId::DynamicMatrix2Phases,
    ];

    pub fn kernel(self) -> KernelKind {
        use StrategyId::*;
        match self {
            RandomOuter | SortedOuter | DynamicOuter | DynamicOuter2Phases => KernelKind::Outer,
            _ => KernelKind::Matmul,
        }
    }

    pub fn is_two_phase(self) -> bool {
        matches!(self, StrategyId::DynamicOuter2Phases | StrategyId::DynamicMatrix2Phases)
    }

    pub fn as_str(self) -> &'static str {
        use StrategyId::*;
        match self {
            RandomOuter => "random-outer",
            SortedOuter => "sorted-outer",
            DynamicOuter => "dynamic-outer",
            DynamicOuter2Phases => "dynamic-outer-2p",
            RandomMatrix => "random-matrix",
            SortedMatrix => "sorted-matrix",
            DynamicMatrix => "dynamic-matrix",
            DynamicMatrix2Phases => "dynamic-matrix-2p",
        }
    }

    /// The four strategies of one kernel family, baselines first.
    pub fn family(kernel: KernelKind) -> [StrategyId; 4] {
        use StrategyId::*;
        match kernel {
            KernelKind::Outer => [RandomOuter, SortedOuter, DynamicOuter, DynamicOuter2Phases],
            KernelKind::Matmul => [RandomMatrix, SortedMatrix, DynamicMatrix, DynamicMatrix2Phases],
        }
    }
}

impl fmt::Display for StrategyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StrategyId::ALL.into_iter().find(|id| id.as_str() == s).ok_or_else(|| format!("unknown strategy {s:?}"))
    }
}

/// A strategy with its parameters resolved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Policy {
    Random,
    Sorted,
    Dynamic,
    /// Dynamic while more than `threshold` tasks remain, random afterwards.
    TwoPhase {
        threshold: usize,
    },
}

/// Number of tasks left when the two-phase strategies switch to random
/// allocation: `round(e^{-beta} · total)`.
pub fn two_phase_threshold(beta: f64, total_tasks: usize) -> usize {
    ((-beta).exp() * total_tasks as f64).round() as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AllocationKind {
    /// Grew the worker's known square/cube.
    Cross,
    /// One uniformly drawn task.
    Random,
    /// The lexicographically first task.
    Sorted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub kind: AllocationKind,
    /// Blocks to transfer; never one the worker already holds.
    pub blocks: Vec<BlockId>,
    pub batch: Vec<TaskId>,
    /// Index added to each dimension of the worker's known sets (I, J, K).
    pub extend: [Option<u32>; 3],
}

pub fn allocate(policy: Policy, ledger: &TaskLedger, worker: &WorkerState, rng: &mut RandomStream) -> Allocation {
    match policy {
        Policy::Random => allocate_random(ledger, worker, rng),
        Policy::Sorted => allocate_sorted(ledger, worker),
        Policy::Dynamic => allocate_dynamic(ledger, worker, rng),
        Policy::TwoPhase { threshold } => allocate_two_phase(ledger, worker, rng, threshold),
    }
}

fn single_task(kind: AllocationKind, problem: Problem, worker: &WorkerState, t: TaskId) -> Allocation {
    let blocks = t.inputs(problem.kind).into_iter().filter(|b| !worker.holds(problem, *b)).collect();
    Allocation { kind, blocks, batch: vec![t], extend: [None; 3] }
}

/// One unprocessed task drawn uniformly; sends whichever inputs are missing.
pub fn allocate_random(ledger: &TaskLedger, worker: &WorkerState, rng: &mut RandomStream) -> Allocation {
    assert!(ledger.remaining() > 0, "allocation requested with no task left");
    let t = ledger.unprocessed_at(rng.below(ledger.remaining()));
    single_task(AllocationKind::Random, ledger.problem(), worker, t)
}

/// The lexicographically smallest unprocessed task.
pub fn allocate_sorted(ledger: &TaskLedger, worker: &WorkerState) -> Allocation {
    let t = ledger.first_unprocessed().expect("allocation requested with no task left");
    single_task(AllocationKind::Sorted, ledger.problem(), worker, t)
}

/// Dispatches to the cross allocator of the ledger's kernel.
pub fn allocate_dynamic(ledger: &TaskLedger, worker: &WorkerState, rng: &mut RandomStream) -> Allocation {
    match ledger.problem().kind {
        KernelKind::Outer => allocate_dynamic_outer(ledger, worker, rng),
        KernelKind::Matmul => allocate_dynamic_matrix(ledger, worker, rng),
    }
}

/// Draws one fresh index per non-full dimension; `None` if all are full.
fn draw_fresh(worker: &WorkerState, dims: usize, rng: &mut RandomStream) -> Option<[Option<u32>; 3]> {
    let mut fresh = [None; 3];
    for (d, slot) in fresh.iter_mut().enumerate().take(dims) {
        let set = &worker.known[d];
        if !set.is_full() {
            *slot = Some(set.complement_at(rng.below(set.complement_len())));
        }
    }
    fresh.iter().any(Option::is_some).then_some(fresh)
}

/// Sends `a_i` and `b_j` for fresh `i ∉ I`, `j ∉ J` and allocates the whole
/// unprocessed cross. If one of I, J is already full only the other grows;
/// if both are, falls back to a random task.
pub fn allocate_dynamic_outer(ledger: &TaskLedger, worker: &WorkerState, rng: &mut RandomStream) -> Allocation {
    assert!(ledger.remaining() > 0, "allocation requested with no task left");
    let problem = ledger.problem();
    let Some(fresh) = draw_fresh(worker, 2, rng) else {
        return allocate_random(ledger, worker, rng);
    };
    let mut blocks = Vec::with_capacity(2);
    if let Some(i) = fresh[0] {
        blocks.push(BlockId::new(Array::A, i, 0));
    }
    if let Some(j) = fresh[1] {
        blocks.push(BlockId::new(Array::B, j, 0));
    }
    blocks.retain(|b| !worker.holds(problem, *b));
    let batch = cross_outer(&worker.known[0], &worker.known[1], fresh[0], fresh[1], ledger);
    Allocation { kind: AllocationKind::Cross, blocks, batch, extend: fresh }
}

/// Grows the known cube by a fresh `(i, j, k)`: sends the `3(2y+1)` blocks
/// of A, B and C that the grown cube needs and allocates every unprocessed
/// task of the grown cube that uses a new index.
pub fn allocate_dynamic_matrix(ledger: &TaskLedger, worker: &WorkerState, rng: &mut RandomStream) -> Allocation {
    assert!(ledger.remaining() > 0, "allocation requested with no task left");
    let problem = ledger.problem();
    let Some(fresh) = draw_fresh(worker, 3, rng) else {
        return allocate_random(ledger, worker, rng);
    };
    let grown = |d: usize| -> Vec<u32> {
        let mut v: Vec<u32> = worker.known[d].iter().collect();
        if let Some(x) = fresh[d] {
            v.push(x);
        }
        v
    };
    let (gi, gj, gk) = (grown(0), grown(1), grown(2));
    let mut blocks = Vec::new();
    if let Some(i) = fresh[0] {
        blocks.extend(gk.iter().map(|&k| BlockId::new(Array::A, i, k)));
        blocks.extend(gj.iter().map(|&j| BlockId::new(Array::C, i, j)));
    }
    if let Some(j) = fresh[1] {
        blocks.extend(gk.iter().map(|&k| BlockId::new(Array::B, k, j)));
        blocks.extend(gi.iter().map(|&i| BlockId::new(Array::C, i, j)));
    }
    if let Some(k) = fresh[2] {
        blocks.extend(gi.iter().map(|&i| BlockId::new(Array::A, i, k)));
        blocks.extend(gj.iter().map(|&j| BlockId::new(Array::B, k, j)));
    }
    blocks.sort_unstable();
    blocks.dedup();
    blocks.retain(|b| !worker.holds(problem, *b));
    let known = [&worker.known[0], &worker.known[1], &worker.known[2]];
    let batch = cross_matmul(known, fresh, ledger);
    Allocation { kind: AllocationKind::Cross, blocks, batch, extend: fresh }
}

/// Cross allocation while more than `threshold` tasks remain, uniform random
/// allocation afterwards.
pub fn allocate_two_phase(
    ledger: &TaskLedger,
    worker: &WorkerState,
    rng: &mut RandomStream,
    threshold: usize,
) -> Allocation {
    if ledger.remaining() > threshold {
        allocate_dynamic(ledger, worker, rng)
    } else {
        allocate_random(ledger, worker, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::IndexSet;
    use std::collections::{BTreeSet, HashMap};

    fn fresh_worker(problem: Problem) -> WorkerState {
        WorkerState::new(0, problem)
    }

    /// Puts `y` indices in each known set and marks the corresponding cube
    /// blocks as held, as a run of cross allocations would.
    fn worker_with_cube(problem: Problem, idx: &[u32]) -> WorkerState {
        let mut w = fresh_worker(problem);
        for d in 0..problem.kind.dims() {
            w.known[d] = IndexSet::from_indices(problem.n, idx);
        }
        for &a in idx {
            for &b in idx {
                match problem.kind {
                    KernelKind::Outer => {
                        w.receive(problem, BlockId::new(Array::A, a, 0));
                        w.receive(problem, BlockId::new(Array::B, b, 0));
                    }
                    KernelKind::Matmul => {
                        for arr in [Array::A, Array::B, Array::C] {
                            w.receive(problem, BlockId::new(arr, a, b));
                        }
                    }
                }
            }
        }
        w
    }

    #[test]
    fn strategy_ids_parse() {
        for id in StrategyId::ALL {
            assert_eq!(id.as_str().parse::<StrategyId>().unwrap(), id);
        }
        assert!("dynamic".parse::<StrategyId>().is_err());
        assert_eq!(StrategyId::DynamicMatrix2Phases.kernel(), KernelKind::Matmul);
        assert!(StrategyId::DynamicOuter2Phases.is_two_phase());
    }

    #[test]
    fn random_sends_missing_inputs_only() {
        let p = Problem::outer(3).unwrap();
        let ledger = TaskLedger::new(p);
        let mut rng = RandomStream::new(1);
        let w = fresh_worker(p);
        let a = allocate_random(&ledger, &w, &mut rng);
        assert_eq!(a.blocks.len(), 2);
        assert_eq!(a.batch.len(), 1);

        let full = worker_with_cube(p, &[0, 1, 2]);
        let a = allocate_random(&ledger, &full, &mut rng);
        assert!(a.blocks.is_empty());

        let pm = Problem::matmul(3).unwrap();
        let a = allocate_random(&TaskLedger::new(pm), &fresh_worker(pm), &mut rng);
        assert_eq!(a.blocks.len(), 3);
    }

    #[test]
    fn sorted_order() {
        let p = Problem::outer(4).unwrap();
        let mut ledger = TaskLedger::new(p);
        let w = fresh_worker(p);
        assert_eq!(allocate_sorted(&ledger, &w).batch, vec![TaskId::outer(0, 0)]);
        for j in 0..4 {
            ledger.mark_processed(TaskId::outer(0, j)).unwrap();
        }
        assert_eq!(allocate_sorted(&ledger, &w).batch, vec![TaskId::outer(1, 0)]);

        // Matmul: k varies fastest.
        let pm = Problem::matmul(3).unwrap();
        let mut ledger = TaskLedger::new(pm);
        let w = fresh_worker(pm);
        let mut seen = Vec::new();
        while ledger.remaining() > 0 {
            let t = allocate_sorted(&ledger, &w).batch[0];
            ledger.mark_processed(t).unwrap();
            seen.push(t);
        }
        let mut want = Vec::new();
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    want.push(TaskId::matmul(i, j, k));
                }
            }
        }
        assert_eq!(seen, want);
    }

    #[test]
    fn dynamic_outer_first_cross() {
        let p = Problem::outer(2).unwrap();
        let a = allocate_dynamic_outer(&TaskLedger::new(p), &fresh_worker(p), &mut RandomStream::new(0));
        assert_eq!(a.kind, AllocationKind::Cross);
        assert_eq!(a.blocks.len(), 2);
        assert_eq!(a.batch.len(), 1);
    }

    #[test]
    fn dynamic_outer_batch_is_2y_plus_1() {
        for y in 0..=5u32 {
            let p = Problem::outer(12).unwrap();
            let idx: Vec<u32> = (0..y).collect();
            let w = worker_with_cube(p, &idx);
            let a = allocate_dynamic_outer(&TaskLedger::new(p), &w, &mut RandomStream::new(y as u64));
            assert_eq!(a.batch.len(), 2 * y as usize + 1);
            assert_eq!(a.blocks.len(), 2);
        }
    }

    #[test]
    fn dynamic_outer_half_cross_and_fallback() {
        let p = Problem::outer(3).unwrap();
        let ledger = TaskLedger::new(p);
        let mut w = fresh_worker(p);
        w.known[0] = IndexSet::from_indices(3, &[0, 1, 2]);
        for i in 0..3 {
            w.receive(p, BlockId::new(Array::A, i, 0));
        }
        let a = allocate_dynamic_outer(&ledger, &w, &mut RandomStream::new(4));
        assert_eq!(a.kind, AllocationKind::Cross);
        assert_eq!(a.extend[0], None);
        assert_eq!(a.blocks.len(), 1);
        assert_eq!(a.blocks[0].array, Array::B);
        assert_eq!(a.batch.len(), 3);

        let full = worker_with_cube(p, &[0, 1, 2]);
        let a = allocate_dynamic_outer(&ledger, &full, &mut RandomStream::new(4));
        assert_eq!(a.kind, AllocationKind::Random);
    }

    #[test]
    fn dynamic_matrix_block_counts() {
        let p = Problem::matmul(6).unwrap();
        let ledger = TaskLedger::new(p);
        let a = allocate_dynamic_matrix(&ledger, &fresh_worker(p), &mut RandomStream::new(2));
        assert_eq!(a.blocks.len(), 3);
        assert_eq!(a.batch.len(), 1);
        let t = a.batch[0];
        let want: BTreeSet<_> = t.inputs(KernelKind::Matmul).into_iter().collect();
        assert_eq!(a.blocks.iter().copied().collect::<BTreeSet<_>>(), want);

        for y in 1..=4u32 {
            let idx: Vec<u32> = (0..y).collect();
            let w = worker_with_cube(p, &idx);
            let a = allocate_dynamic_matrix(&ledger, &w, &mut RandomStream::new(9));
            assert_eq!(a.blocks.len(), 3 * (2 * y as usize + 1));
            assert_eq!(a.batch.len(), ((y + 1).pow(3) - y.pow(3)) as usize);
        }
    }

    #[test]
    fn dynamic_matrix_empty_cross_still_sends() {
        let p = Problem::matmul(3).unwrap();
        let mut ledger = TaskLedger::new(p);
        // Leave a single unprocessed task that the fresh cross cannot reach.
        let w = worker_with_cube(p, &[0]);
        for id in 0..p.total_tasks() {
            let t = p.task_at(id);
            if t != TaskId::matmul(0, 0, 0) {
                ledger.mark_processed(t).unwrap();
            }
        }
        let a = allocate_dynamic_matrix(&ledger, &w, &mut RandomStream::new(0));
        assert!(a.batch.is_empty());
        assert_eq!(a.blocks.len(), 9);
    }

    #[test]
    fn two_phase_threshold_switch() {
        // e^-4.17 * 10000 = 154.52
        assert_eq!(two_phase_threshold(4.17, 10_000), 155);
        let p = Problem::outer(4).unwrap();
        let ledger = TaskLedger::new(p);
        let w = fresh_worker(p);
        let dynamic = allocate_two_phase(&ledger, &w, &mut RandomStream::new(5), 0);
        assert_eq!(dynamic, allocate_dynamic(&ledger, &w, &mut RandomStream::new(5)));
        let random = allocate_two_phase(&ledger, &w, &mut RandomStream::new(5), 16);
        assert_eq!(random, allocate_random(&ledger, &w, &mut RandomStream::new(5)));
    }

    #[test]
    fn dynamic_outer_draw_is_uniform() {
        // Fixed I = {0, 1}, J = {2}: 3 × 4 eligible pairs.
        let p = Problem::outer(5).unwrap();
        let ledger = TaskLedger::new(p);
        let mut w = fresh_worker(p);
        w.known[0] = IndexSet::from_indices(5, &[0, 1]);
        w.known[1] = IndexSet::from_indices(5, &[2]);
        let mut rng = RandomStream::new(77);
        let draws = 24_000;
        let mut counts: HashMap<(u32, u32), usize> = HashMap::new();
        for _ in 0..draws {
            let a = allocate_dynamic_outer(&ledger, &w, &mut rng);
            *counts.entry((a.extend[0].unwrap(), a.extend[1].unwrap())).or_default() += 1;
        }
        assert_eq!(counts.len(), 12);
        let prob = 1.0 / 12.0;
        let mean = draws as f64 * prob;
        let sigma = (draws as f64 * prob * (1.0 - prob)).sqrt();
        for ((i, j), c) in counts {
            assert!(i >= 2 && j != 2);
            assert!((c as f64 - mean).abs() <= 3.0 * sigma, "pair ({i},{j}) drawn {c} times");
        }
    }
}
