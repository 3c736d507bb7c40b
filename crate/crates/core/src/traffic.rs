//! Trace-driven LRU cache model for MPK memory traffic.
//!
//! The matrix arrays and the power vectors are laid out in one address space,
//! each array starting on a line boundary. A run is replayed row by row in
//! single-worker execution order. For each row the model touches its
//! `row_ptr` entry, its `val` and `col` ranges, the input entries at its
//! column indices and finally its output entry. Every miss moves one line
//! from memory; stores allocate their line like loads do and write-backs are
//! not counted.

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::matrix::CrsMatrix;
use crate::schedule::LpSchedule;

pub const DEFAULT_LINE_BYTES: usize = 64;

/// CSV columns of [`TrafficReport::csv_row`].
pub const CSV_HEADER: &str = "variant,p_m,C_model,matrix_bytes,vector_bytes,code_balance";

/// Fully associative LRU cache of whole lines.
#[derive(Clone, Debug)]
pub struct CacheModel {
    capacity_bytes: usize,
    line_bytes: usize,
    capacity_lines: usize,
    // intrusive list over line ids, most recent at head
    prev: Vec<u32>,
    next: Vec<u32>,
    present: Vec<bool>,
    head: u32,
    tail: u32,
    occupied: usize,
    pub hits: u64,
    pub misses: u64,
}

const NIL: u32 = u32::MAX;

impl CacheModel {
    pub fn new(capacity_bytes: usize, line_bytes: usize) -> Result<Self> {
        if line_bytes == 0 {
            return invalid("line size must be positive");
        }
        Ok(Self {
            capacity_bytes,
            line_bytes,
            capacity_lines: capacity_bytes / line_bytes,
            prev: Vec::new(),
            next: Vec::new(),
            present: Vec::new(),
            head: NIL,
            tail: NIL,
            occupied: 0,
            hits: 0,
            misses: 0,
        })
    }

    pub fn capacity_bytes(&self) -> usize {
        self.capacity_bytes
    }

    pub fn line_bytes(&self) -> usize {
        self.line_bytes
    }

    pub fn occupied_lines(&self) -> usize {
        self.occupied
    }

    fn reserve(&mut self, n_lines: usize) -> Result<()> {
        if n_lines >= NIL as usize {
            return invalid("address space too large for the cache model");
        }
        if self.present.len() < n_lines {
            self.prev.resize(n_lines, NIL);
            self.next.resize(n_lines, NIL);
            self.present.resize(n_lines, false);
        }
        Ok(())
    }

    fn unlink(&mut self, l: u32) {
        let (p, n) = (self.prev[l as usize], self.next[l as usize]);
        if p == NIL {
            self.head = n;
        } else {
            self.next[p as usize] = n;
        }
        if n == NIL {
            self.tail = p;
        } else {
            self.prev[n as usize] = p;
        }
    }

    fn push_front(&mut self, l: u32) {
        self.prev[l as usize] = NIL;
        self.next[l as usize] = self.head;
        if self.head != NIL {
            self.prev[self.head as usize] = l;
        }
        self.head = l;
        if self.tail == NIL {
            self.tail = l;
        }
    }

    /// Touches one line; returns true on a miss.
    pub fn access_line(&mut self, line: usize) -> bool {
        if line >= self.present.len() {
            self.reserve(line + 1).expect("line id in range");
        }
        let l = line as u32;
        if self.present[line] {
            self.hits += 1;
            if self.head != l {
                self.unlink(l);
                self.push_front(l);
            }
            return false;
        }
        self.misses += 1;
        if self.capacity_lines == 0 {
            return true;
        }
        if self.occupied == self.capacity_lines {
            let victim = self.tail;
            self.unlink(victim);
            self.present[victim as usize] = false;
            self.occupied -= 1;
        }
        self.present[line] = true;
        self.push_front(l);
        self.occupied += 1;
        true
    }

    /// Touches bytes `[addr, addr + len)`; returns the missed line count.
    pub fn access(&mut self, addr: usize, len: usize) -> u64 {
        if len == 0 {
            return 0;
        }
        let first = addr / self.line_bytes;
        let last = (addr + len - 1) / self.line_bytes;
        (first..=last).map(|l| self.access_line(l) as u64).sum()
    }
}

/// Bytes moved while computing one power.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct PowerTraffic {
    pub matrix_bytes: u64,
    pub row_ptr_bytes: u64,
    pub vector_bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrafficReport {
    pub p_max: usize,
    pub nnz: usize,
    pub cache_bytes: usize,
    pub line_bytes: usize,
    /// `val` and `col` streams.
    pub matrix_bytes: u64,
    pub row_ptr_bytes: u64,
    /// Input reads and output write-allocates of the power vectors.
    pub vector_bytes: u64,
    pub total_bytes: u64,
    pub flops: f64,
    /// Total bytes per flop.
    pub code_balance: f64,
    /// Matrix stream bytes per flop.
    pub matrix_code_balance: f64,
    /// Index `p - 1` holds power `p`.
    pub per_power: Vec<PowerTraffic>,
    pub accesses: u64,
    pub hits: u64,
    pub misses: u64,
}

impl TrafficReport {
    pub fn csv_row(&self, variant: &str) -> String {
        format!(
            "{variant},{},{},{},{},{}",
            self.p_max, self.cache_bytes, self.matrix_bytes, self.vector_bytes, self.code_balance
        )
    }
}

/// Execution order to replay.
#[derive(Clone, Copy, Debug)]
pub enum Trace<'a> {
    /// Full sweeps, one per power.
    Baseline,
    Schedule(&'a LpSchedule),
}

struct Layout {
    val: usize,
    col: usize,
    row_ptr: usize,
    vectors: usize,
    end: usize,
}

impl Layout {
    fn new(a: &CrsMatrix, p_max: usize, line: usize) -> Self {
        let align = |x: usize| x.div_ceil(line) * line;
        let val = 0;
        let col = align(val + 8 * a.nnz());
        let row_ptr = align(col + 4 * a.nnz());
        let vectors = align(row_ptr + 4 * (a.n_rows() + 1));
        let end = align(vectors + 8 * a.n_rows() * (p_max + 1));
        Self { val, col, row_ptr, vectors, end }
    }
}

/// Replays `trace` for `p_max` powers of `a` through `cache`.
pub fn simulate_traffic(
    a: &CrsMatrix,
    trace: Trace<'_>,
    p_max: usize,
    cache: &mut CacheModel,
) -> Result<TrafficReport> {
    if p_max < 1 {
        return invalid("p_max must be at least 1");
    }
    if let Trace::Schedule(s) = trace {
        if s.p_max != p_max {
            return invalid("schedule built for a different p_max");
        }
        if s.units.last().map_or(0, |u| u.row_end) != a.n_rows() {
            return invalid("schedule does not match matrix");
        }
    }
    let line = cache.line_bytes();
    let layout = Layout::new(a, p_max, line);
    cache.reserve(layout.end / line)?;
    let (hits0, misses0) = (cache.hits, cache.misses);
    let n = a.n_rows();
    let rp = a.row_ptr();
    let col = a.col();
    let mut per_power = vec![PowerTraffic::default(); p_max];
    let mut accesses = 0u64;
    let lb = line as u64;
    let mut run_rows = |cache: &mut CacheModel, rows: std::ops::Range<usize>, p: usize| {
        let t = &mut per_power[p - 1];
        let x = layout.vectors + 8 * n * (p - 1);
        let y = layout.vectors + 8 * n * p;
        for r in rows {
            let (s, e) = (rp[r] as usize, rp[r + 1] as usize);
            t.row_ptr_bytes += cache.access(layout.row_ptr + 4 * r, 8) * lb;
            t.matrix_bytes += cache.access(layout.val + 8 * s, 8 * (e - s)) * lb;
            t.matrix_bytes += cache.access(layout.col + 4 * s, 4 * (e - s)) * lb;
            for &c in &col[s..e] {
                t.vector_bytes += cache.access(x + 8 * c as usize, 8) * lb;
            }
            t.vector_bytes += cache.access(y + 8 * r, 8) * lb;
            accesses += 4 + (e - s) as u64;
        }
    };
    match trace {
        Trace::Baseline => {
            for p in 1..=p_max {
                run_rows(cache, 0..n, p);
            }
        }
        Trace::Schedule(s) => {
            for nd in &s.order {
                run_rows(cache, s.units[nd.unit].rows(), nd.power);
            }
        }
    }
    let matrix_bytes: u64 = per_power.iter().map(|t| t.matrix_bytes).sum();
    let row_ptr_bytes: u64 = per_power.iter().map(|t| t.row_ptr_bytes).sum();
    let vector_bytes: u64 = per_power.iter().map(|t| t.vector_bytes).sum();
    let total_bytes = matrix_bytes + row_ptr_bytes + vector_bytes;
    let flops = 2.0 * a.nnz() as f64 * p_max as f64;
    Ok(TrafficReport {
        p_max,
        nnz: a.nnz(),
        cache_bytes: cache.capacity_bytes(),
        line_bytes: line,
        matrix_bytes,
        row_ptr_bytes,
        vector_bytes,
        total_bytes,
        flops,
        code_balance: total_bytes as f64 / flops,
        matrix_code_balance: matrix_bytes as f64 / flops,
        per_power,
        accesses,
        hits: cache.hits - hits0,
        misses: cache.misses - misses0,
    })
}

/// Memory-bound performance limit in flop/s.
pub fn roofline_estimate(code_balance: f64, mem_bw: f64) -> Result<f64> {
    if !(code_balance > 0.0) || !(mem_bw > 0.0) {
        return invalid("code balance and bandwidth must be positive");
    }
    Ok(mem_bw / code_balance)
}
