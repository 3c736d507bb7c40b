//! MPK executors on a per-run worker pool.
//!
//! Every variant walks an [`LpSchedule`] node by node. A node's rows are split
//! into one contiguous, nnz-balanced chunk per worker, and every row is
//! computed by [`CrsMatrix::row_dot`]'s summation order, so all variants give
//! the same bits. They differ only in how workers synchronize: a barrier after
//! every node, or point-to-point waits on per-node completion counters.

use std::fmt;
use std::hint::spin_loop;
use std::marker::PhantomData;
use std::ops::Range;
use std::str::FromStr;
use std::sync::atomic::{AtomicU32, AtomicUsize, Ordering};
use std::sync::Barrier;
use std::time::Instant;

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::levels::{
    build_level_structure, single_level_groups, GroupBudget, LevelGroupTree, LevelParams, DEFAULT_SAFETY,
};
use crate::matrix::{permute_symmetric, CrsMatrix, Permutation};
use crate::schedule::{build_schedule, sweep_schedule, DepKind, LpSchedule};

/// Default cache budget: 35 MB.
pub const DEFAULT_CACHE_BYTES: f64 = 35e6;

/// Spins before a waiting worker starts yielding its time slice.
const SPIN_LIMIT: u32 = 128;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// `p_max` full sweeps, barrier between sweeps.
    Baseline,
    /// One group per BFS level, barrier after each node.
    Lb,
    /// Cache-sized level groups, barrier after each node.
    LbLg,
    /// Cache-sized level groups, point-to-point waits.
    LbLgP2p,
    /// As [`Variant::LbLgP2p`], with recursive refinement of bulky groups.
    LbLgP2pRec,
}

impl Variant {
    pub const ALL: [Variant; 5] = [Self::Baseline, Self::Lb, Self::LbLg, Self::LbLgP2p, Self::LbLgP2pRec];

    pub fn name(self) -> &'static str {
        match self {
            Self::Baseline => "baseline",
            Self::Lb => "lb",
            Self::LbLg => "lb_lg",
            Self::LbLgP2p => "lb_lg_p2p",
            Self::LbLgP2pRec => "lb_lg_p2p_rec",
        }
    }

    pub fn point_to_point(self) -> bool {
        matches!(self, Self::LbLgP2p | Self::LbLgP2pRec)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown variant '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MpkConfig {
    pub variant: Variant,
    pub p_max: usize,
    pub budget: GroupBudget,
    /// Recursion depth; only used by [`Variant::LbLgP2pRec`].
    pub s_max: usize,
    pub workers: usize,
    pub root: usize,
}

impl MpkConfig {
    pub fn new(variant: Variant, p_max: usize) -> Self {
        Self {
            variant,
            p_max,
            budget: GroupBudget::CacheFit { cache_bytes: DEFAULT_CACHE_BYTES, safety: DEFAULT_SAFETY },
            s_max: 0,
            workers: 1,
            root: 0,
        }
    }

    pub fn with_workers(self, workers: usize) -> Self {
        Self { workers, ..self }
    }

    pub fn with_budget(self, budget: GroupBudget) -> Self {
        Self { budget, ..self }
    }

    pub fn with_s_max(self, s_max: usize) -> Self {
        Self { s_max, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p_max < 1 {
            return invalid("p_max must be at least 1");
        }
        if self.workers < 1 {
            return invalid("need at least one worker");
        }
        if let GroupBudget::CacheFit { cache_bytes, safety } = self.budget {
            if !(cache_bytes > 0.0) || !(safety > 0.0 && safety <= 1.0) {
                return invalid("cache size must be positive and 0 < f <= 1");
            }
        }
        Ok(())
    }
}

/// `y_0 ..= y_{p_max}` in one block, `y_p` at `data[p * n..(p + 1) * n]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerVectors {
    n: usize,
    p_max: usize,
    data: Vec<f64>,
}

impl PowerVectors {
    /// `y_0 = x`, higher powers zeroed.
    pub fn new(x: &[f64], p_max: usize) -> Self {
        let n = x.len();
        let mut data = vec![0.0; n * (p_max + 1)];
        data[..n].copy_from_slice(x);
        Self { n, p_max, data }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p_max(&self) -> usize {
        self.p_max
    }

    pub fn power(&self, p: usize) -> &[f64] {
        &self.data[p * self.n..(p + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Replaces `y_0`; higher powers are left as they are until the next run.
    pub fn set_input(&mut self, x: &[f64]) -> Result<()> {
        if x.len() != self.n {
            return invalid("input length does not match");
        }
        self.data[..self.n].copy_from_slice(x);
        Ok(())
    }

    /// Every power mapped through `f`, e.g. a permutation.
    fn map_powers(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for p in 0..=self.p_max {
            data.extend(f(self.power(p)));
        }
        Self { n: self.n, p_max: self.p_max, data }
    }

    /// Bitwise equality of all powers.
    pub fn bits_eq(&self, other: &Self) -> bool {
        self.n == other.n
            && self.p_max == other.p_max
            && self.data.iter().zip(&other.data).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Vectors computed in permuted numbering, returned in the original one.
pub fn undo_permutation(result: &PowerVectors, perm: &Permutation) -> Result<PowerVectors> {
    if perm.len() != result.n {
        return invalid("permutation length does not match vectors");
    }
    Ok(result.map_powers(|y| perm.unapply(y)))
}

/// Earlier powers of the row being computed.
pub struct PowerView<'a> {
    base: *const f64,
    n: usize,
    row: usize,
    power: usize,
    _life: PhantomData<&'a [f64]>,
}

impl PowerView<'_> {
    /// `y_q[row]` for `q` below the power being computed.
    pub fn get(&self, q: usize) -> f64 {
        assert!(q < self.power, "power {q} is not computed yet");
        // SAFETY: a row is always computed by the same worker for every power
        // and powers of a row in increasing order, so y_q[row] is finished.
        unsafe { *self.base.add(q * self.n + self.row) }
    }
}

/// Per-row output of a node: receives `ax = (A y_{p-1})[row]` and returns the
/// value stored in `y_p[row]`.
pub trait RowHook: Sync {
    fn value(&self, power: usize, row: usize, ax: f64, earlier: &PowerView<'_>) -> f64;
}

/// Plain powers, `y_p = A y_{p-1}`.
pub struct PlainPowers;

impl RowHook for PlainPowers {
    #[inline(always)]
    fn value(&self, _: usize, _: usize, ax: f64, _: &PowerView<'_>) -> f64 {
        ax
    }
}

/// Schedule with the static worker partition.
#[derive(Clone, Debug)]
pub struct ExecPlan {
    pub variant: Variant,
    pub workers: usize,
    pub schedule: LpSchedule,
    /// Chunk boundaries, `workers + 1` per unit.
    bounds: Vec<usize>,
    /// Workers whose chunk meets the unit's first level.
    boundary_workers: Vec<u32>,
}

impl ExecPlan {
    pub fn new(schedule: LpSchedule, a: &CrsMatrix, variant: Variant, workers: usize) -> Result<Self> {
        if workers < 1 || workers > u32::MAX as usize {
            return invalid("worker count out of range");
        }
        let covered = schedule.units.last().map_or(0, |u| u.row_end);
        if covered != a.n_rows() {
            return invalid("schedule does not match matrix");
        }
        let rp = a.row_ptr();
        let mut bounds = Vec::with_capacity(schedule.units.len() * (workers + 1));
        let mut boundary_workers = Vec::with_capacity(schedule.units.len());
        for u in &schedule.units {
            let first = rp[u.row_start] as u64;
            let nnz = rp[u.row_end] as u64 - first;
            let window = &rp[u.row_start..=u.row_end];
            let start = bounds.len();
            bounds.push(u.row_start);
            for w in 1..workers {
                let target = first + (w as u64 * nnz + workers as u64 / 2) / workers as u64;
                let r = u.row_start + window.partition_point(|&x| (x as u64) < target);
                bounds.push(r.min(u.row_end).max(*bounds.last().unwrap()));
            }
            bounds.push(u.row_end);
            let k = bounds[start..start + workers].iter().filter(|&&b| b < u.boundary_left_end).count();
            boundary_workers.push(k.max(1) as u32);
        }
        Ok(Self { variant, workers, schedule, bounds, boundary_workers })
    }

    /// Rows of `unit` computed by worker `w`.
    pub fn chunk(&self, unit: usize, w: usize) -> Range<usize> {
        let b = unit * (self.workers + 1) + w;
        self.bounds[b]..self.bounds[b + 1]
    }

    /// Barriers a run performs.
    pub fn n_barriers(&self) -> usize {
        if self.variant.point_to_point() {
            0
        } else {
            self.schedule.n_nodes()
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct RunStats {
    pub seconds: f64,
    /// Barrier episodes observed by worker 0.
    pub barriers: usize,
}

#[derive(Clone, Copy)]
struct SharedPtr(*mut f64);
// SAFETY: workers write disjoint rows; reads are ordered by barriers or
// acquire/release counters.
unsafe impl Send for SharedPtr {}
unsafe impl Sync for SharedPtr {}

struct Run<'a, H> {
    plan: &'a ExecPlan,
    a: &'a CrsMatrix,
    hook: &'a H,
    data: SharedPtr,
    n: usize,
    done: Vec<AtomicU32>,
    boundary_done: Vec<AtomicU32>,
    barrier: Barrier,
    barriers: AtomicUsize,
    #[cfg(debug_assertions)]
    written: Vec<std::sync::atomic::AtomicBool>,
}

#[inline]
fn wait_for(counter: &AtomicU32, target: u32) {
    let mut spins = 0u32;
    while counter.load(Ordering::Acquire) < target {
        if spins < SPIN_LIMIT {
            spins += 1;
            spin_loop();
        } else {
            std::thread::yield_now();
        }
    }
}

impl<H: RowHook> Run<'_, H> {
    fn worker(&self, w: usize) {
        let sched = &self.plan.schedule;
        let p2p = self.plan.variant.point_to_point();
        let full = self.plan.workers as u32;
        let base = self.data.0;
        for (k, node) in sched.order.iter().enumerate() {
            if p2p {
                for wait in sched.waits_of(k) {
                    match wait.kind {
                        DepKind::Full => wait_for(&self.done[wait.pos], full),
                        DepKind::LeftBoundary => {
                            let u = sched.order[wait.pos].unit;
                            wait_for(&self.boundary_done[wait.pos], self.plan.boundary_workers[u]);
                        }
                    }
                }
            }
            let p = node.power;
            // SAFETY: y_{p-1} rows read here were completed before this node,
            // and rows of y_p in this chunk are written by this worker only.
            unsafe {
                let src = base.add((p - 1) * self.n) as *const f64;
                let dst = base.add(p * self.n);
                for r in self.plan.chunk(node.unit, w) {
                    let ax = self.a.row_dot_ptr(r, src);
                    let view = PowerView { base, n: self.n, row: r, power: p, _life: PhantomData };
                    #[cfg(debug_assertions)]
                    assert!(
                        !self.written[(p - 1) * self.n + r].swap(true, Ordering::Relaxed),
                        "row {r} of power {p} written twice"
                    );
                    *dst.add(r) = self.hook.value(p, r, ax, &view);
                }
            }
            if p2p {
                self.done[k].fetch_add(1, Ordering::Release);
                if (w as u32) < self.plan.boundary_workers[node.unit] {
                    self.boundary_done[k].fetch_add(1, Ordering::Release);
                }
            } else {
                self.barrier.wait();
                if w == 0 {
                    self.barriers.fetch_add(1, Ordering::Relaxed);
                }
            }
        }
    }
}

/// Executes `plan` on `a` with `y_0 = pv.power(0)`, filling all higher powers.
pub fn execute<H: RowHook>(plan: &ExecPlan, a: &CrsMatrix, pv: &mut PowerVectors, hook: &H) -> Result<RunStats> {
    let n = a.n_rows();
    if pv.n != n || pv.p_max != plan.schedule.p_max {
        return invalid("power vectors do not match plan");
    }
    if plan.schedule.units.last().map_or(0, |u| u.row_end) != n {
        return invalid("plan does not match matrix");
    }
    let nodes = plan.schedule.n_nodes();
    let p2p = plan.variant.point_to_point();
    let counters = |len: usize| (0..len).map(|_| AtomicU32::new(0)).collect::<Vec<_>>();
    let run = Run {
        plan,
        a,
        hook,
        data: SharedPtr(pv.data.as_mut_ptr()),
        n,
        done: counters(if p2p { nodes } else { 0 }),
        boundary_done: counters(if p2p { nodes } else { 0 }),
        barrier: Barrier::new(plan.workers),
        barriers: AtomicUsize::new(0),
        #[cfg(debug_assertions)]
        written: (0..n * pv.p_max).map(|_| std::sync::atomic::AtomicBool::new(false)).collect(),
    };
    let start = Instant::now();
    if plan.workers == 1 {
        run.worker(0);
    } else {
        std::thread::scope(|s| {
            for w in 1..plan.workers {
                let run = &run;
                s.spawn(move || run.worker(w));
            }
            run.worker(0);
        });
    }
    let seconds = start.elapsed().as_secs_f64();
    Ok(RunStats { seconds, barriers: run.barriers.into_inner() })
}

/// `p_max` full parallel sweeps `y_p = A y_{p-1}` with a barrier between them.
pub fn run_baseline(a: &CrsMatrix, x: &[f64], p_max: usize, workers: usize) -> Result<PowerVectors> {
    if x.len() != a.n_rows() {
        return invalid("x length does not match matrix");
    }
    let plan = ExecPlan::new(sweep_schedule(a, p_max)?, a, Variant::Baseline, workers)?;
    let mut pv = PowerVectors::new(x, p_max);
    execute(&plan, a, &mut pv, &PlainPowers)?;
    Ok(pv)
}

/// Level-blocked run of `plan` on the permuted matrix and permuted input.
pub fn run_lb(plan: &ExecPlan, a_permuted: &CrsMatrix, x_permuted: &[f64]) -> Result<PowerVectors> {
    if x_permuted.len() != a_permuted.n_rows() {
        return invalid("x length does not match matrix");
    }
    let mut pv = PowerVectors::new(x_permuted, plan.schedule.p_max);
    execute(plan, a_permuted, &mut pv, &PlainPowers)?;
    Ok(pv)
}

/// Preprocessed matrix power kernel for one configuration.
#[derive(Clone, Debug)]
pub struct MpkEngine {
    config: MpkConfig,
    a: CrsMatrix,
    perm: Permutation,
    tree: Option<LevelGroupTree>,
    plan: ExecPlan,
    preprocess_seconds: f64,
}

impl MpkEngine {
    /// Permutes `a` and builds the schedule for `config`.
    pub fn new(a: &CrsMatrix, config: MpkConfig) -> Result<Self> {
        config.validate()?;
        if a.n_rows() == 0 {
            return invalid("matrix has no rows");
        }
        if config.root >= a.n_rows() {
            return invalid(format!("root {} outside the matrix", config.root));
        }
        let start = Instant::now();
        let p_max = config.p_max;
        let (a_perm, perm, tree, schedule) = match config.variant {
            Variant::Baseline => {
                let s = sweep_schedule(a, p_max)?;
                (a.clone(), Permutation::identity(a.n_rows()), None, s)
            }
            v => {
                let s_max = if v == Variant::LbLgP2pRec { config.s_max } else { 0 };
                let mut params = LevelParams { p_max, budget: config.budget, s_max, root: config.root };
                if v == Variant::Lb {
                    params.s_max = 0;
                }
                let st = build_level_structure(a, &params)?;
                let ap = permute_symmetric(a, &st.perm)?;
                let mut tree = st.tree;
                if v == Variant::Lb {
                    tree.groups = single_level_groups(&tree.levels, &ap);
                }
                let s = build_schedule(&tree, &ap, p_max)?;
                (ap, st.perm, Some(tree), s)
            }
        };
        let plan = ExecPlan::new(schedule, &a_perm, config.variant, config.workers)?;
        let preprocess_seconds = start.elapsed().as_secs_f64();
        Ok(Self { config, a: a_perm, perm, tree, plan, preprocess_seconds })
    }

    /// Same numbering and groups, schedule for another highest power.
    pub fn with_power(&self, p_max: usize) -> Result<Self> {
        if p_max < 1 {
            return invalid("p_max must be at least 1");
        }
        let start = Instant::now();
        let schedule = match &self.tree {
            None => sweep_schedule(&self.a, p_max)?,
            Some(tree) => build_schedule(tree, &self.a, p_max)?,
        };
        let plan = ExecPlan::new(schedule, &self.a, self.config.variant, self.config.workers)?;
        Ok(Self {
            config: MpkConfig { p_max, ..self.config },
            a: self.a.clone(),
            perm: self.perm.clone(),
            tree: self.tree.clone(),
            plan,
            preprocess_seconds: start.elapsed().as_secs_f64(),
        })
    }

    pub fn config(&self) -> &MpkConfig {
        &self.config
    }

    /// The matrix in execution numbering.
    pub fn matrix(&self) -> &CrsMatrix {
        &self.a
    }

    pub fn permutation(&self) -> &Permutation {
        &self.perm
    }

    pub fn tree(&self) -> Option<&LevelGroupTree> {
        self.tree.as_ref()
    }

    pub fn plan(&self) -> &ExecPlan {
        &self.plan
    }

    pub fn schedule(&self) -> &LpSchedule {
        &self.plan.schedule
    }

    pub fn preprocess_seconds(&self) -> f64 {
        self.preprocess_seconds
    }

    /// Flops of one run: `2 nnz p_max`.
    pub fn flops(&self) -> f64 {
        2.0 * self.a.nnz() as f64 * self.config.p_max as f64
    }

    /// Powers of `x`, both in original numbering.
    pub fn run(&self, x: &[f64]) -> Result<PowerVectors> {
        if x.len() != self.a.n_rows() {
            return invalid("x length does not match matrix");
        }
        let (pv, _) = self.run_permuted(&self.perm.apply(x))?;
        undo_permutation(&pv, &self.perm)
    }

    /// Powers of an input already in execution numbering.
    pub fn run_permuted(&self, x_permuted: &[f64]) -> Result<(PowerVectors, RunStats)> {
        if x_permuted.len() != self.a.n_rows() {
            return invalid("x length does not match matrix");
        }
        let mut pv = PowerVectors::new(x_permuted, self.config.p_max);
        let stats = self.run_into(&mut pv)?;
        Ok((pv, stats))
    }

    /// Recomputes all powers of `pv` from its `y_0`.
    pub fn run_into(&self, pv: &mut PowerVectors) -> Result<RunStats> {
        execute(&self.plan, &self.a, pv, &PlainPowers)
    }

    pub fn run_with_hook<H: RowHook>(&self, pv: &mut PowerVectors, hook: &H) -> Result<RunStats> {
        execute(&self.plan, &self.a, pv, hook)
    }

    /// Repeats runs until at least `min_seconds` have passed; returns the mean
    /// time per run and the number of runs.
    pub fn bench(&self, x_permuted: &[f64], min_reps: usize, min_seconds: f64) -> Result<(f64, usize)> {
        let mut pv = PowerVectors::new(x_permuted, self.config.p_max);
        let mut total = 0.0;
        let mut reps = 0;
        while reps < min_reps.max(1) || total < min_seconds {
            total += self.run_into(&mut pv)?.seconds;
            reps += 1;
        }
        Ok((total / reps as f64, reps))
    }
}
