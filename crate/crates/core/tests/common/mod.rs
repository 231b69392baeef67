#![allow(dead_code)]

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashSet};

use dynsched::engine::WorkerState;
use dynsched::experiments::{round_sig6, CsvRecord};
use dynsched::kernel::{cross_matmul, cross_outer, BlockId, IndexSet, TaskLedger};
use dynsched::strategies::allocate;
use dynsched::{run_simulation, DriftPolicy, KernelKind, Platform, Problem, RandomStream, SimConfig, StrategyId};
use proptest::prelude::*;

/// Small random simulation configs over both kernels and all strategies.
pub fn small_config() -> impl Strategy<Value = SimConfig> {
    (
        prop_oneof![Just(KernelKind::Outer), Just(KernelKind::Matmul)],
        0usize..4,
        1usize..=7,
        prop::collection::vec(1.0f64..10.0, 1..=7),
        prop_oneof![3 => Just(0.0), 1 => 0.0f64..0.3],
        prop::option::of(0.0f64..6.0),
        any::<u64>(),
    )
        .prop_flat_map(|(kernel, s, p, speeds, jitter, beta, seed)| {
            let max_n: usize = if kernel == KernelKind::Outer { 12 } else { 6 };
            (1..=max_n).prop_map(move |n| {
                let strategy = StrategyId::family(kernel)[s];
                let speeds = speeds.iter().copied().cycle().take(p).collect();
                let platform = Platform::new(speeds).unwrap().with_drift(DriftPolicy::jitter(jitter).unwrap());
                let mut config = SimConfig::new(Problem::new(kernel, n).unwrap(), platform, strategy, seed);
                if let (true, Some(b)) = (strategy.is_two_phase(), beta) {
                    config = config.with_beta(b);
                }
                config
            })
        })
}

/// Every worker's volume against the geometric minimum for its task count:
/// `r + c >= 2 sqrt(rc)` for outer products, Loomis–Whitney for matmul.
pub fn meets_geometric_bound(kind: KernelKind, blocks: usize, tasks: usize) -> bool {
    let (b, t) = (blocks as u128, tasks as u128);
    match kind {
        KernelKind::Outer => b * b >= 4 * t,
        KernelKind::Matmul => b * b * b >= 27 * t * t,
    }
}

#[derive(Debug, PartialEq)]
pub struct Replay {
    pub blocks: Vec<usize>,
    pub tasks: Vec<usize>,
}

/// Re-drives the allocation decisions outside the engine, checking every
/// task runs exactly once on a worker holding all its inputs and that no
/// block is sent twice to the same worker.
pub fn replay(config: &SimConfig) -> Result<Replay, String> {
    let (policy, _) = config.resolve().map_err(|e| e.to_string())?;
    let problem = config.problem;
    let p = config.platform.len();
    let root = RandomStream::new(config.seed);
    let mut rng = root.split("strategy");
    let mut drift_rng = root.split("drift");
    let mut speeds = config.platform.speeds().to_vec();
    let mut ledger = TaskLedger::new(problem);
    let mut states: Vec<WorkerState> = (0..p).map(|k| WorkerState::new(k, problem)).collect();
    let mut held: Vec<HashSet<BlockId>> = vec![HashSet::new(); p];
    let mut done: HashSet<_> = HashSet::new();
    let mut tasks = vec![0; p];
    // Ordered by (time, worker); times are non-negative so their bit
    // patterns sort like the values.
    let mut queue: BinaryHeap<Reverse<(u64, usize)>> = (0..p).map(|k| Reverse((0f64.to_bits(), k))).collect();
    while let Some(Reverse((bits, w))) = queue.pop() {
        if ledger.remaining() == 0 {
            continue;
        }
        let alloc = allocate(policy, &ledger, &states[w], &mut rng);
        for &b in &alloc.blocks {
            if !held[w].insert(b) {
                return Err(format!("block {b:?} sent twice to worker {w}"));
            }
            states[w].receive(problem, b);
        }
        for (d, x) in alloc.extend.iter().enumerate() {
            if let Some(x) = x {
                states[w].known[d].insert(*x);
            }
        }
        for &t in &alloc.batch {
            if !done.insert(t) {
                return Err(format!("task {t} processed twice"));
            }
            if let Some(b) = t.inputs(problem.kind).into_iter().find(|b| !held[w].contains(b)) {
                return Err(format!("task {t} ran on worker {w} without {b:?}"));
            }
            ledger.mark_processed(t).map_err(|e| e.to_string())?;
        }
        tasks[w] += alloc.batch.len();
        let mut end = f64::from_bits(bits);
        if config.platform.drift().is_active() {
            for _ in 0..alloc.batch.len() {
                end += 1.0 / speeds[w];
                speeds[w] = config.platform.drift().drift_speed(speeds[w], &mut drift_rng);
            }
        } else {
            end += alloc.batch.len() as f64 / speeds[w];
        }
        queue.push(Reverse((end.to_bits(), w)));
    }
    if done.len() != problem.total_tasks() {
        return Err(format!("{} of {} tasks processed", done.len(), problem.total_tasks()));
    }
    Ok(Replay { blocks: held.iter().map(HashSet::len).collect(), tasks })
}

/// All invariants of one simulated run; `Err` names the first violation.
pub fn check_run(config: &SimConfig) -> Result<(), String> {
    let result = run_simulation(config).map_err(|e| e.to_string())?;
    let again = run_simulation(config).map_err(|e| e.to_string())?;
    if result != again {
        return Err("two runs with the same seed differ".into());
    }
    let total = config.problem.total_tasks();
    if result.total_tasks_done() != total {
        return Err(format!("{} tasks done, expected {total}", result.total_tasks_done()));
    }
    for (k, w) in result.per_worker.iter().enumerate() {
        if !meets_geometric_bound(config.problem.kind, w.blocks_received, w.tasks_done) {
            return Err(format!("worker {k}: {} blocks for {} tasks", w.blocks_received, w.tasks_done));
        }
    }
    let r = replay(config)?;
    let blocks: Vec<usize> = result.per_worker.iter().map(|w| w.blocks_received).collect();
    let tasks: Vec<usize> = result.per_worker.iter().map(|w| w.tasks_done).collect();
    if r != (Replay { blocks, tasks }) {
        return Err(format!("independent replay disagrees: {r:?}"));
    }
    Ok(())
}

/// A random cross-set question: known sets, processed tasks, new indices.
#[derive(Debug, Clone)]
pub struct CrossCase {
    pub kind: KernelKind,
    pub n: usize,
    pub known: [Vec<u32>; 3],
    pub new: [Option<u32>; 3],
    pub processed: Vec<usize>,
}

pub fn cross_case() -> impl Strategy<Value = CrossCase> {
    (prop_oneof![Just(KernelKind::Outer), Just(KernelKind::Matmul)], 1usize..=8).prop_flat_map(|(kind, n)| {
        let dims = kind.dims();
        let total = n.pow(dims as u32);
        let idx = move || prop::collection::vec(0..n as u32, 0..=n);
        let fresh = move || prop::option::of(0..n as u32);
        let k_known = if dims == 3 { idx().boxed() } else { Just(vec![]).boxed() };
        let k_new = if dims == 3 { fresh().boxed() } else { Just(None).boxed() };
        (idx(), idx(), k_known, fresh(), fresh(), k_new, prop::collection::vec(0..total, 0..=total)).prop_map(
            move |(i, j, k, ni, nj, nk, processed)| CrossCase {
                kind,
                n,
                known: [i, j, k],
                new: [ni, nj, nk],
                processed,
            },
        )
    })
}

/// Compares the cross computation with a scan over every task.
pub fn check_cross(case: &CrossCase) -> Result<(), String> {
    let problem = Problem::new(case.kind, case.n).map_err(|e| e.to_string())?;
    let mut ledger = TaskLedger::new(problem);
    for &l in &case.processed {
        let t = problem.task_at(l);
        if !ledger.is_processed(t) {
            ledger.mark_processed(t).map_err(|e| e.to_string())?;
        }
    }
    let k_size = if case.kind == KernelKind::Matmul { case.n } else { 0 };
    let sets = [
        IndexSet::from_indices(case.n, &case.known[0]),
        IndexSet::from_indices(case.n, &case.known[1]),
        IndexSet::from_indices(k_size, &case.known[2]),
    ];
    let got = match case.kind {
        KernelKind::Outer => cross_outer(&sets[0], &sets[1], case.new[0], case.new[1], &ledger),
        KernelKind::Matmul => cross_matmul([&sets[0], &sets[1], &sets[2]], case.new, &ledger),
    };
    let got_set: BTreeSet<_> = got.iter().copied().collect();
    if got_set.len() != got.len() {
        return Err("cross contains duplicates".into());
    }
    let old: [HashSet<u32>; 3] = case.known.clone().map(|v| v.into_iter().collect());
    let mut grown = old.clone();
    for (set, new) in grown.iter_mut().zip(case.new) {
        set.extend(new);
    }
    let coords = |t: dynsched::TaskId| [t.i, t.j, t.k];
    let dims = case.kind.dims();
    let expected: BTreeSet<_> = (0..problem.total_tasks())
        .map(|l| problem.task_at(l))
        .filter(|&t| !ledger.is_processed(t))
        .filter(|&t| {
            let c = coords(t);
            let in_grown = (0..dims).all(|d| grown[d].contains(&c[d]));
            let in_old = (0..dims).all(|d| old[d].contains(&c[d]));
            in_grown && !in_old
        })
        .collect();
    if got_set != expected {
        return Err(format!("cross {got_set:?} != brute force {expected:?}"));
    }
    Ok(())
}

/// Results tables whose floats are already at CSV precision.
pub fn csv_table() -> impl Strategy<Value = Vec<CsvRecord>> {
    let float = || prop_oneof![Just(0.0), -1e6f64..1e6, 1e-9f64..1e-3].prop_map(round_sig6);
    let record = (
        0usize..8,
        1usize..100_000,
        1usize..10_000,
        "[a-z0-9:.,\" ]{0,16}",
        prop::option::of(float()),
        float(),
        float(),
        1usize..1000,
        prop::option::of(float()),
    )
        .prop_map(|(s, n, p, scenario, beta, mean, sd, reps, pred)| {
            let strategy = StrategyId::ALL[s];
            CsvRecord {
                kernel: strategy.kernel(),
                n,
                p,
                strategy,
                scenario,
                beta,
                mean_norm_comm: mean,
                stddev: sd,
                replications: reps,
                analysis_pred: pred,
            }
        });
    prop::collection::vec(record, 1..8)
}
