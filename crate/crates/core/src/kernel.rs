//! Kernels, task and block identities, and the global task ledger.
//!
//! An outer-product problem with `n` blocks per vector has `n²` tasks
//! `T(i, j)`, each needing `a_i` and `b_j`. A matrix-multiplication problem
//! has `n³` tasks `T(i, j, k)` (`C_ij += A_ik · B_kj`), each needing
//! `A_ik`, `B_kj` and `C_ij`. All indices are 0-based.

use std::fmt;
use std::str::FromStr;

use arrayvec::ArrayVec;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum KernelKind {
    Outer,
    Matmul,
}

impl KernelKind {
    /// Number of index dimensions of the task space.
    pub fn dims(self) -> usize {
        match self {
            KernelKind::Outer => 2,
            KernelKind::Matmul => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            KernelKind::Outer => "outer",
            KernelKind::Matmul => "matmul",
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for KernelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "outer" => Ok(KernelKind::Outer),
            "matmul" => Ok(KernelKind::Matmul),
            other => Err(format!("unknown kernel {other:?} (expected outer or matmul)")),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LedgerError {
    #[error("block count per dimension must be at least 1")]
    EmptyProblem,
    #[error("problem with n={0} has too many tasks to index")]
    TooLarge(usize),
    #[error("task {0} processed twice")]
    AlreadyProcessed(TaskId),
    #[error("task {0} out of range")]
    OutOfRange(TaskId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Problem {
    pub kind: KernelKind,
    pub n: usize,
}

impl Problem {
    pub fn new(kind: KernelKind, n: usize) -> Result<Self, LedgerError> {
        if n == 0 {
            return Err(LedgerError::EmptyProblem);
        }
        let total = (n as u128).pow(kind.dims() as u32);
        if total > u32::MAX as u128 {
            return Err(LedgerError::TooLarge(n));
        }
        Ok(Self { kind, n })
    }

    pub fn outer(n: usize) -> Result<Self, LedgerError> {
        Self::new(KernelKind::Outer, n)
    }

    pub fn matmul(n: usize) -> Result<Self, LedgerError> {
        Self::new(KernelKind::Matmul, n)
    }

    /// `n²` for outer, `n³` for matmul.
    pub fn total_tasks(&self) -> usize {
        self.n.pow(self.kind.dims() as u32)
    }

    /// Position of `t` in lexicographic `(i, j, k)` order.
    pub fn linear(&self, t: TaskId) -> usize {
        let n = self.n;
        match self.kind {
            KernelKind::Outer => t.i as usize * n + t.j as usize,
            KernelKind::Matmul => (t.i as usize * n + t.j as usize) * n + t.k as usize,
        }
    }

    pub fn task_at(&self, linear: usize) -> TaskId {
        let n = self.n;
        match self.kind {
            KernelKind::Outer => TaskId::outer((linear / n) as u32, (linear % n) as u32),
            KernelKind::Matmul => {
                TaskId::matmul((linear / (n * n)) as u32, ((linear / n) % n) as u32, (linear % n) as u32)
            }
        }
    }

    pub fn contains(&self, t: TaskId) -> bool {
        let n = self.n as u32;
        t.i < n && t.j < n && (t.k < n) && (self.kind == KernelKind::Matmul || t.k == 0)
    }

    /// Number of distinct blocks the problem touches.
    pub fn block_slots(&self) -> usize {
        match self.kind {
            KernelKind::Outer => 2 * self.n,
            KernelKind::Matmul => 3 * self.n * self.n,
        }
    }

    /// Dense index of a block in `0..block_slots()`.
    pub fn block_slot(&self, b: BlockId) -> usize {
        let n = self.n;
        let array = b.array as usize;
        match self.kind {
            KernelKind::Outer => array * n + b.row as usize,
            KernelKind::Matmul => array * n * n + b.row as usize * n + b.col as usize,
        }
    }
}

/// An elementary task. `k` is always 0 for outer products.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TaskId {
    pub i: u32,
    pub j: u32,
    pub k: u32,
}

impl TaskId {
    pub fn outer(i: u32, j: u32) -> Self {
        Self { i, j, k: 0 }
    }

    pub fn matmul(i: u32, j: u32, k: u32) -> Self {
        Self { i, j, k }
    }

    /// Blocks a worker must hold to execute the task.
    pub fn inputs(self, kind: KernelKind) -> ArrayVec<BlockId, 3> {
        let mut out = ArrayVec::new();
        match kind {
            KernelKind::Outer => {
                out.push(BlockId::new(Array::A, self.i, 0));
                out.push(BlockId::new(Array::B, self.j, 0));
            }
            KernelKind::Matmul => {
                out.push(BlockId::new(Array::A, self.i, self.k));
                out.push(BlockId::new(Array::B, self.k, self.j));
                out.push(BlockId::new(Array::C, self.i, self.j));
            }
        }
        out
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "T({},{},{})", self.i, self.j, self.k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Array {
    A = 0,
    B = 1,
    C = 2,
}

/// A transferable block. Vector blocks (outer product) use `col = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockId {
    pub array: Array,
    pub row: u32,
    pub col: u32,
}

impl BlockId {
    pub fn new(array: Array, row: u32, col: u32) -> Self {
        Self { array, row, col }
    }
}

/// Which tasks have been handed out. A task is "processed" from the moment
/// it is allocated.
///
/// Also keeps the unprocessed ids in a swap-remove pool for O(1) uniform
/// draws, and a cursor to the lexicographically first unprocessed task.
#[derive(Debug, Clone)]
pub struct TaskLedger {
    problem: Problem,
    processed: Vec<bool>,
    pool: Vec<u32>,
    pool_pos: Vec<u32>,
    cursor: usize,
}

impl TaskLedger {
    pub fn new(problem: Problem) -> Self {
        let total = problem.total_tasks();
        Self {
            problem,
            processed: vec![false; total],
            pool: (0..total as u32).collect(),
            pool_pos: (0..total as u32).collect(),
            cursor: 0,
        }
    }

    pub fn problem(&self) -> Problem {
        self.problem
    }

    pub fn total(&self) -> usize {
        self.processed.len()
    }

    pub fn remaining(&self) -> usize {
        self.pool.len()
    }

    pub fn is_processed(&self, t: TaskId) -> bool {
        self.processed[self.problem.linear(t)]
    }

    pub fn mark_processed(&mut self, t: TaskId) -> Result<(), LedgerError> {
        if !self.problem.contains(t) {
            return Err(LedgerError::OutOfRange(t));
        }
        let id = self.problem.linear(t);
        if self.processed[id] {
            return Err(LedgerError::AlreadyProcessed(t));
        }
        self.processed[id] = true;
        let pos = self.pool_pos[id] as usize;
        let last = *self.pool.last().expect("pool nonempty while a task is unprocessed");
        self.pool.swap_remove(pos);
        if last as usize != id {
            self.pool_pos[last as usize] = pos as u32;
        }
        while self.cursor < self.processed.len() && self.processed[self.cursor] {
            self.cursor += 1;
        }
        Ok(())
    }

    /// The `index`-th entry of the unprocessed pool, `index < remaining()`.
    pub fn unprocessed_at(&self, index: usize) -> TaskId {
        self.problem.task_at(self.pool[index] as usize)
    }

    /// Lexicographically smallest unprocessed task.
    pub fn first_unprocessed(&self) -> Option<TaskId> {
        (self.cursor < self.processed.len()).then(|| self.problem.task_at(self.cursor))
    }
}

/// A subset of `0..n` supporting ascending iteration and uniform draws from
/// its complement.
#[derive(Debug, Clone)]
pub struct IndexSet {
    member: Vec<bool>,
    len: usize,
    outside: Vec<u32>,
    outside_pos: Vec<u32>,
}

impl IndexSet {
    pub fn new(n: usize) -> Self {
        Self { member: vec![false; n], len: 0, outside: (0..n as u32).collect(), outside_pos: (0..n as u32).collect() }
    }

    pub fn from_indices(n: usize, indices: &[u32]) -> Self {
        let mut s = Self::new(n);
        for &x in indices {
            s.insert(x);
        }
        s
    }

    pub fn universe(&self) -> usize {
        self.member.len()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn is_full(&self) -> bool {
        self.outside.is_empty()
    }

    pub fn contains(&self, x: u32) -> bool {
        self.member[x as usize]
    }

    /// Returns false if `x` was already present.
    pub fn insert(&mut self, x: u32) -> bool {
        if self.member[x as usize] {
            return false;
        }
        self.member[x as usize] = true;
        self.len += 1;
        let pos = self.outside_pos[x as usize] as usize;
        let last = *self.outside.last().unwrap();
        self.outside.swap_remove(pos);
        if last != x {
            self.outside_pos[last as usize] = pos as u32;
        }
        true
    }

    pub fn iter(&self) -> impl Iterator<Item = u32> + '_ {
        self.member.iter().enumerate().filter(|(_, m)| **m).map(|(i, _)| i as u32)
    }

    pub fn complement_len(&self) -> usize {
        self.outside.len()
    }

    /// The `index`-th element of the complement (in internal order).
    pub fn complement_at(&self, index: usize) -> u32 {
        self.outside[index]
    }

    /// Members plus `extra`, ascending.
    fn with(&self, extra: Option<u32>) -> Vec<u32> {
        let mut v: Vec<u32> = self.iter().collect();
        if let Some(x) = extra {
            if !self.contains(x) {
                let at = v.partition_point(|&y| y < x);
                v.insert(at, x);
            }
        }
        v
    }
}

/// Unprocessed tasks gained when the known square `I × J` grows by the new
/// indices. `None` leaves that dimension unchanged. Row tasks come first,
/// then column tasks, each ascending.
pub fn cross_outer(
    known_i: &IndexSet,
    known_j: &IndexSet,
    new_i: Option<u32>,
    new_j: Option<u32>,
    ledger: &TaskLedger,
) -> Vec<TaskId> {
    let mut out = Vec::new();
    let new_i = new_i.filter(|&i| !known_i.contains(i));
    let new_j = new_j.filter(|&j| !known_j.contains(j));
    if let Some(i) = new_i {
        for j in known_j.with(new_j) {
            out.push(TaskId::outer(i, j));
        }
    }
    if let Some(j) = new_j {
        for i in known_i.iter() {
            out.push(TaskId::outer(i, j));
        }
    }
    out.retain(|t| !ledger.is_processed(*t));
    out
}

/// Unprocessed tasks of the cross `{T(i,j)} ∪ {T(i,j'), j'∈J} ∪ {T(i',j), i'∈I}`.
pub fn tasks_for_cross_outer(
    known_i: &IndexSet,
    known_j: &IndexSet,
    i: u32,
    j: u32,
    ledger: &TaskLedger,
) -> Vec<TaskId> {
    cross_outer(known_i, known_j, Some(i), Some(j), ledger)
}

/// Unprocessed tasks gained when the known cube `I × J × K` grows by the new
/// indices: every task of the grown cube with at least one new coordinate.
pub fn cross_matmul(known: [&IndexSet; 3], new: [Option<u32>; 3], ledger: &TaskLedger) -> Vec<TaskId> {
    let [ki, kj, kk] = known;
    let ni = new[0].filter(|&x| !ki.contains(x));
    let nj = new[1].filter(|&x| !kj.contains(x));
    let nk = new[2].filter(|&x| !kk.contains(x));
    let old_i: Vec<u32> = ki.iter().collect();
    let old_j: Vec<u32> = kj.iter().collect();
    let grown_j = kj.with(nj);
    let grown_k = kk.with(nk);
    let mut out = Vec::new();
    if let Some(i) = ni {
        for &j in &grown_j {
            for &k in &grown_k {
                out.push(TaskId::matmul(i, j, k));
            }
        }
    }
    if let Some(j) = nj {
        for &i in &old_i {
            for &k in &grown_k {
                out.push(TaskId::matmul(i, j, k));
            }
        }
    }
    if let Some(k) = nk {
        for &i in &old_i {
            for &j in &old_j {
                out.push(TaskId::matmul(i, j, k));
            }
        }
    }
    out.retain(|t| !ledger.is_processed(*t));
    out
}

/// Unprocessed tasks `T(i',j',k')` of `(I∪{i})×(J∪{j})×(K∪{k})` with
/// `i'=i` or `j'=j` or `k'=k`.
pub fn tasks_for_cross_matmul(
    known_i: &IndexSet,
    known_j: &IndexSet,
    known_k: &IndexSet,
    i: u32,
    j: u32,
    k: u32,
    ledger: &TaskLedger,
) -> Vec<TaskId> {
    cross_matmul([known_i, known_j, known_k], [Some(i), Some(j), Some(k)], ledger)
}
