//! BFS levels, level groups and recursive refinement.
//!
//! Levels are built on the symmetrized pattern `A | A^T`, so every neighbour
//! of a vertex in level `i` lies in level `i - 1`, `i` or `i + 1` regardless
//! of whether the matrix is structurally symmetric. The renumbering puts the
//! vertices of each level consecutively, level by level, and within a level
//! in ascending order of their previous position.

use std::ops::Range;

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::matrix::{CrsMatrix, Permutation};

/// Matrix bytes streamed per nonzero: an 8-byte value plus a 4-byte column index.
pub const BYTES_PER_NNZ: usize = 12;

/// Default cache safety factor.
pub const DEFAULT_SAFETY: f64 = 0.5;

/// Adjacency of the symmetrized matrix pattern, without self loops.
#[derive(Clone, Debug)]
pub struct Graph {
    ptr: Vec<usize>,
    adj: Vec<u32>,
}

impl Graph {
    pub fn from_matrix(a: &CrsMatrix) -> Self {
        let n = a.n_rows();
        let mut deg = vec![0usize; n + 1];
        for r in 0..n {
            for &c in a.row(r).0 {
                let c = c as usize;
                if c != r {
                    deg[r + 1] += 1;
                    deg[c + 1] += 1;
                }
            }
        }
        for i in 0..n {
            deg[i + 1] += deg[i];
        }
        let mut fill = deg.clone();
        let mut adj = vec![0u32; deg[n]];
        for r in 0..n {
            for &c in a.row(r).0 {
                let c = c as usize;
                if c != r {
                    adj[fill[r]] = c as u32;
                    fill[r] += 1;
                    adj[fill[c]] = r as u32;
                    fill[c] += 1;
                }
            }
        }
        let mut ptr = vec![0usize; n + 1];
        let mut out = Vec::with_capacity(adj.len());
        for v in 0..n {
            let list = &mut adj[deg[v]..deg[v + 1]];
            list.sort_unstable();
            let start = out.len();
            for &u in list.iter() {
                if out.len() == start || *out.last().unwrap() != u {
                    out.push(u);
                }
            }
            ptr[v + 1] = out.len();
        }
        Self { ptr, adj: out }
    }

    pub fn n_vertices(&self) -> usize {
        self.ptr.len() - 1
    }

    pub fn neighbors(&self, v: usize) -> &[u32] {
        &self.adj[self.ptr[v]..self.ptr[v + 1]]
    }
}

/// BFS levels of a contiguous row range in permuted numbering.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LevelSet {
    /// First row of each level plus a final end entry; absolute row indices.
    pub level_ptr: Vec<usize>,
    /// Root vertex, as a row index of the numbering before this BFS.
    pub root: usize,
}

impl LevelSet {
    pub fn n_levels(&self) -> usize {
        self.level_ptr.len() - 1
    }

    pub fn level(&self, i: usize) -> Range<usize> {
        self.level_ptr[i]..self.level_ptr[i + 1]
    }

    pub fn rows(&self) -> Range<usize> {
        self.level_ptr[0]..*self.level_ptr.last().unwrap()
    }
}

/// Current vertex numbering during preprocessing.
#[derive(Clone, Debug)]
struct Ordering {
    /// position -> original vertex
    order: Vec<usize>,
    /// original vertex -> position
    pos: Vec<usize>,
}

impl Ordering {
    fn from_permutation(p: &Permutation) -> Self {
        Self { order: p.perm().to_vec(), pos: p.inv_perm().to_vec() }
    }

    fn into_permutation(self) -> Permutation {
        Permutation::new(self.order).expect("ordering stays a bijection")
    }
}

/// BFS on the subgraph induced by positions `rows`, rooted at the vertex in
/// position `rows.start`. Unreached vertices restart the search at the
/// lowest unvisited position. Reorders `rows` in `ord` and returns the level
/// pointer (absolute positions).
fn bfs_in_range(graph: &Graph, ord: &mut Ordering, rows: Range<usize>, visited: &mut [bool]) -> LevelSet {
    let (lo, hi) = (rows.start, rows.end);
    let root = lo;
    let mut new_order: Vec<usize> = Vec::with_capacity(hi - lo);
    let mut level_ptr = vec![lo];
    let mut frontier = vec![ord.order[lo]];
    visited[ord.order[lo]] = true;
    let mut next_unvisited = lo;
    let mut next: Vec<usize> = Vec::new();
    loop {
        new_order.extend_from_slice(&frontier);
        level_ptr.push(lo + new_order.len());
        next.clear();
        for &v in &frontier {
            for &u in graph.neighbors(v) {
                let u = u as usize;
                let p = ord.pos[u];
                if p >= lo && p < hi && !visited[u] {
                    visited[u] = true;
                    next.push(u);
                }
            }
        }
        if next.is_empty() {
            if new_order.len() == hi - lo {
                break;
            }
            while visited[ord.order[next_unvisited]] {
                next_unvisited += 1;
            }
            let v = ord.order[next_unvisited];
            visited[v] = true;
            next.push(v);
        }
        next.sort_unstable_by_key(|&u| ord.pos[u]);
        std::mem::swap(&mut frontier, &mut next);
    }
    for (k, &v) in new_order.iter().enumerate() {
        visited[v] = false;
        ord.order[lo + k] = v;
        ord.pos[v] = lo + k;
    }
    LevelSet { level_ptr, root }
}

/// BFS levels of the whole matrix graph from `root`, plus the permutation
/// that numbers vertices level by level.
///
/// Disconnected components are appended as further levels, each restarted at
/// the lowest-index unvisited vertex.
pub fn bfs_levels(a: &CrsMatrix, root: usize) -> Result<(LevelSet, Permutation)> {
    let n = a.n_rows();
    if root >= n {
        return invalid(format!("root {root} outside [0, {n})"));
    }
    let graph = Graph::from_matrix(a);
    // start from a numbering that places the root first, everything else in order
    let mut start: Vec<usize> = Vec::with_capacity(n);
    start.push(root);
    start.extend((0..n).filter(|&v| v != root));
    let mut ord = Ordering { pos: vec![0; n], order: start };
    for (p, &v) in ord.order.iter().enumerate() {
        ord.pos[v] = p;
    }
    let mut visited = vec![false; n];
    let mut levels = bfs_in_range(&graph, &mut ord, 0..n, &mut visited);
    levels.root = root;
    Ok((levels, ord.into_permutation()))
}

/// Size criterion a level group has to meet.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum GroupBudget {
    /// `(p_max + 1) * nnz * 12 bytes < safety * cache_bytes`.
    CacheFit { cache_bytes: f64, safety: f64 },
    /// At most this many rows per group.
    MaxRows(usize),
}

impl GroupBudget {
    pub fn cache(cache_bytes: f64) -> Self {
        Self::CacheFit { cache_bytes, safety: DEFAULT_SAFETY }
    }

    pub fn fits(&self, p_max: usize, rows: usize, nnz: usize) -> bool {
        match *self {
            Self::CacheFit { cache_bytes, safety } => {
                (((p_max + 1) * nnz * BYTES_PER_NNZ) as f64) < safety * cache_bytes
            }
            Self::MaxRows(max) => rows <= max,
        }
    }
}

/// Consecutive levels executed as one unit.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LevelGroup {
    pub row_start: usize,
    /// Exclusive.
    pub row_end: usize,
    pub nnz: usize,
    /// End of the group's first constituent level.
    pub boundary_left_end: usize,
    /// Start of the group's last constituent level.
    pub boundary_right_start: usize,
    pub first_level: usize,
    pub n_levels: usize,
    /// The group does not meet the budget.
    pub violating: bool,
    /// The group belongs to a span refined at the next stage.
    pub refined: bool,
}

impl LevelGroup {
    pub fn rows(&self) -> Range<usize> {
        self.row_start..self.row_end
    }
}

/// Greedy left-to-right aggregation of levels into groups with a custom
/// per-row nonzero count.
fn aggregate(
    levels: &LevelSet,
    row_nnz: impl Fn(usize) -> usize,
    p_max: usize,
    budget: &GroupBudget,
) -> Vec<LevelGroup> {
    let level_nnz: Vec<usize> = (0..levels.n_levels()).map(|l| levels.level(l).map(&row_nnz).sum()).collect();
    let mut groups = Vec::new();
    let mut l = 0;
    while l < levels.n_levels() {
        let first = l;
        let mut nnz = level_nnz[l];
        let mut rows = levels.level(l).len();
        let violating = !budget.fits(p_max, rows, nnz);
        l += 1;
        if !violating {
            while l < levels.n_levels() {
                let (r2, n2) = (rows + levels.level(l).len(), nnz + level_nnz[l]);
                if !budget.fits(p_max, r2, n2) {
                    break;
                }
                rows = r2;
                nnz = n2;
                l += 1;
            }
        }
        groups.push(LevelGroup {
            row_start: levels.level_ptr[first],
            row_end: levels.level_ptr[l],
            nnz,
            boundary_left_end: levels.level_ptr[first + 1],
            boundary_right_start: levels.level_ptr[l - 1],
            first_level: first,
            n_levels: l - first,
            violating,
            refined: false,
        });
    }
    groups
}

/// Groups the levels of an already permuted matrix so each group meets the budget.
pub fn aggregate_with_budget(
    levels: &LevelSet,
    a_permuted: &CrsMatrix,
    p_max: usize,
    budget: &GroupBudget,
) -> Vec<LevelGroup> {
    aggregate(levels, |r| a_permuted.row_nnz(r), p_max, budget)
}

/// Level groups under the cache criterion `(p_max + 1) * nnz * 12 < f * C`.
///
/// `a_permuted` must be numbered consistently with `levels`. Each group is the
/// longest run of remaining levels meeting the criterion; a level that fails
/// on its own becomes a group flagged as violating.
pub fn aggregate_level_groups(
    levels: &LevelSet,
    a_permuted: &CrsMatrix,
    p_max: usize,
    cache_bytes: f64,
    safety: f64,
) -> Result<Vec<LevelGroup>> {
    if p_max < 1 || cache_bytes <= 0.0 || !(safety > 0.0 && safety <= 1.0) {
        return invalid("need p_max >= 1, cache_bytes > 0 and 0 < f <= 1");
    }
    Ok(aggregate_with_budget(levels, a_permuted, p_max, &GroupBudget::CacheFit { cache_bytes, safety }))
}

/// A run of groups `first_group..=last_group` refined into a child tree.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RefinedSpan {
    pub first_group: usize,
    pub last_group: usize,
    pub child: LevelGroupTree,
}

/// Level groups of one recursion stage over a contiguous row range.
///
/// Inside refined spans the parent's levels no longer describe the rows: the
/// child renumbered them. Group row ranges stay valid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelGroupTree {
    pub stage: usize,
    pub row_start: usize,
    pub row_end: usize,
    pub levels: LevelSet,
    pub groups: Vec<LevelGroup>,
    pub spans: Vec<RefinedSpan>,
}

impl LevelGroupTree {
    pub fn rows(&self) -> Range<usize> {
        self.row_start..self.row_end
    }

    pub fn depth(&self) -> usize {
        self.spans.iter().map(|s| 1 + s.child.depth()).max().unwrap_or(0)
    }

    /// Groups that are executed directly (not refined), in row order.
    pub fn leaves(&self) -> Vec<&LevelGroup> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a LevelGroup>) {
        let mut spans = self.spans.iter().peekable();
        let mut g = 0;
        while g < self.groups.len() {
            if let Some(span) = spans.peek() {
                if span.first_group == g {
                    span.child.collect_leaves(out);
                    g = span.last_group + 1;
                    spans.next();
                    continue;
                }
            }
            out.push(&self.groups[g]);
            g += 1;
        }
    }

    pub fn n_groups_total(&self) -> usize {
        self.groups.len() + self.spans.iter().map(|s| s.child.n_groups_total()).sum::<usize>()
    }
}

/// Parameters of the level preprocessing.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LevelParams {
    pub p_max: usize,
    pub budget: GroupBudget,
    pub s_max: usize,
    pub root: usize,
}

/// Result of preprocessing: the group hierarchy and the composed permutation.
#[derive(Clone, Debug)]
pub struct LevelStructure {
    pub tree: LevelGroupTree,
    pub perm: Permutation,
}

/// Spans of consecutive violating groups, merged while their parallelograms
/// (span widened by `p_max - 1` groups per side) overlap.
fn refinement_spans(groups: &[LevelGroup], p_max: usize) -> Vec<(usize, usize)> {
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut g = 0;
    while g < groups.len() {
        if groups[g].violating {
            let a = g;
            while g + 1 < groups.len() && groups[g + 1].violating {
                g += 1;
            }
            runs.push((a, g));
        }
        g += 1;
    }
    let w = p_max - 1;
    let last = groups.len().saturating_sub(1);
    let mut merged: Vec<(usize, usize)> = Vec::new();
    for (a, b) in runs {
        if let Some(prev) = merged.last_mut() {
            let prev_right = (prev.1 + w).min(last);
            let left = a.saturating_sub(w);
            if left <= prev_right {
                prev.1 = b;
                continue;
            }
        }
        merged.push((a, b));
    }
    merged
}

fn refine_node(
    graph: &Graph,
    a: &CrsMatrix,
    ord: &mut Ordering,
    visited: &mut [bool],
    node: &mut LevelGroupTree,
    params: &LevelParams,
) {
    if node.stage >= params.s_max {
        return;
    }
    let spans = refinement_spans(&node.groups, params.p_max);
    for (first, last) in spans {
        let rows = node.groups[first].row_start..node.groups[last].row_end;
        let levels = bfs_in_range(graph, ord, rows.clone(), visited);
        let groups = aggregate(&levels, |r| a.row_nnz(ord.order[r]), params.p_max, &params.budget);
        let mut child = LevelGroupTree {
            stage: node.stage + 1,
            row_start: rows.start,
            row_end: rows.end,
            levels,
            groups,
            spans: Vec::new(),
        };
        refine_node(graph, a, ord, visited, &mut child, params);
        for g in &mut node.groups[first..=last] {
            g.refined = true;
        }
        node.spans.push(RefinedSpan { first_group: first, last_group: last, child });
    }
}

/// Refines runs of violating groups of `tree` (numbered by `perm` relative to
/// `a`) by BFS on the induced subgraph until groups meet the budget or
/// `params.s_max` is reached. Returns the refined tree and the composed
/// permutation.
pub fn refine_recursive(
    mut tree: LevelGroupTree,
    perm: &Permutation,
    a: &CrsMatrix,
    params: &LevelParams,
) -> Result<LevelStructure> {
    if perm.len() != a.n_rows() {
        return invalid("permutation does not match matrix");
    }
    let graph = Graph::from_matrix(a);
    let mut ord = Ordering::from_permutation(perm);
    let mut visited = vec![false; a.n_rows()];
    refine_node(&graph, a, &mut ord, &mut visited, &mut tree, params);
    Ok(LevelStructure { tree, perm: ord.into_permutation() })
}

/// Full preprocessing: BFS levels of `a`, level groups and recursive refinement.
pub fn build_level_structure(a: &CrsMatrix, params: &LevelParams) -> Result<LevelStructure> {
    if params.p_max < 1 {
        return invalid("p_max must be at least 1");
    }
    if a.n_rows() == 0 {
        return invalid("matrix has no rows");
    }
    let (levels, perm) = bfs_levels(a, params.root)?;
    let groups = aggregate(&levels, |r| a.row_nnz(perm.perm()[r]), params.p_max, &params.budget);
    let tree = LevelGroupTree { stage: 0, row_start: 0, row_end: a.n_rows(), levels, groups, spans: Vec::new() };
    refine_recursive(tree, &perm, a, params)
}

/// One group per level, no recursion.
pub fn single_level_groups(levels: &LevelSet, a_permuted: &CrsMatrix) -> Vec<LevelGroup> {
    aggregate_with_budget(levels, a_permuted, 1, &GroupBudget::MaxRows(0))
        .into_iter()
        .map(|g| LevelGroup { violating: false, ..g })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{gen_random_symmetric, gen_stencil_2d7pt, permute_symmetric};

    fn path(n: usize) -> CrsMatrix {
        let mut t = vec![];
        for i in 0..n {
            t.push((i, i, 2.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        CrsMatrix::from_triplets(n, &t).unwrap()
    }

    /// Brute-force BFS distances from `root`, components restarted in index order.
    fn distances(a: &CrsMatrix, root: usize) -> Vec<usize> {
        let g = Graph::from_matrix(a);
        let n = a.n_rows();
        let mut dist = vec![usize::MAX; n];
        let mut base = 0;
        let mut roots = std::iter::once(root).chain(0..n);
        while let Some(r) = roots.next() {
            if dist[r] != usize::MAX {
                continue;
            }
            dist[r] = base;
            let mut q = std::collections::VecDeque::from([r]);
            let mut maxd = base;
            while let Some(v) = q.pop_front() {
                for &u in g.neighbors(v) {
                    if dist[u as usize] == usize::MAX {
                        dist[u as usize] = dist[v] + 1;
                        maxd = maxd.max(dist[v] + 1);
                        q.push_back(u as usize);
                    }
                }
            }
            base = maxd + 1;
        }
        dist
    }

    #[test]
    fn path_graph_levels() {
        let (ls, p) = bfs_levels(&path(4), 0).unwrap();
        assert_eq!(ls.level_ptr, vec![0, 1, 2, 3, 4]);
        assert_eq!(p.perm(), &[0, 1, 2, 3]);
    }

    #[test]
    fn single_vertex() {
        let (ls, _) = bfs_levels(&CrsMatrix::identity(1), 0).unwrap();
        assert_eq!(ls.level_ptr, vec![0, 1]);
    }

    #[test]
    fn root_out_of_range() {
        assert!(bfs_levels(&path(3), 3).is_err());
    }

    #[test]
    fn stencil_8x8_has_fifteen_levels() {
        let a = gen_stencil_2d7pt(8, 8).unwrap();
        let (ls, perm) = bfs_levels(&a, 0).unwrap();
        assert_eq!(ls.n_levels(), 15);
        let sizes: Vec<usize> = (0..15).map(|i| ls.level(i).len()).collect();
        assert_eq!(sizes, vec![1, 2, 3, 4, 5, 6, 7, 8, 7, 6, 5, 4, 3, 2, 1]);
        // L(6) holds permuted rows 21..=27, i.e. the grid anti-diagonal x + y = 6
        assert_eq!(ls.level(6), 21..28);
        for r in ls.level(6) {
            let v = perm.perm()[r];
            assert_eq!(v % 8 + v / 8, 6);
        }
    }

    #[test]
    fn levels_match_brute_force_distances() {
        let a = gen_random_symmetric(120, 3, 5).unwrap();
        let (ls, perm) = bfs_levels(&a, 7).unwrap();
        let dist = distances(&a, 7);
        for l in 0..ls.n_levels() {
            for r in ls.level(l) {
                assert_eq!(dist[perm.perm()[r]], l);
            }
        }
    }

    #[test]
    fn disconnected_graph_restarts() {
        // two paths: 0-1-2 and 3-4
        let t = vec![(0, 1, 1.0), (1, 2, 1.0), (3, 4, 1.0), (4, 3, 1.0), (1, 0, 1.0), (2, 1, 1.0)];
        let a = CrsMatrix::from_triplets(5, &t).unwrap();
        let (ls, perm) = bfs_levels(&a, 1).unwrap();
        assert_eq!(ls.level_ptr, vec![0, 1, 3, 4, 5]);
        assert_eq!(perm.perm(), &[1, 0, 2, 3, 4]);
    }

    #[test]
    fn unsymmetric_pattern_is_symmetrized() {
        // only upper entries: 0 -> 1 -> 2
        let a = CrsMatrix::from_triplets(3, &[(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        let (ls, _) = bfs_levels(&a, 2).unwrap();
        assert_eq!(ls.level_ptr, vec![0, 1, 2, 3]);
    }

    fn stencil_groups(max_rows: usize) -> (CrsMatrix, LevelSet, Vec<LevelGroup>) {
        let a = gen_stencil_2d7pt(8, 8).unwrap();
        let (ls, perm) = bfs_levels(&a, 0).unwrap();
        let ap = permute_symmetric(&a, &perm).unwrap();
        let g = aggregate_with_budget(&ls, &ap, 2, &GroupBudget::MaxRows(max_rows));
        (ap, ls, g)
    }

    #[test]
    fn six_row_budget_groups() {
        let (_, _, g) = stencil_groups(6);
        let levels: Vec<usize> = g.iter().map(|g| g.n_levels).collect();
        assert_eq!(levels, vec![3, 1, 1, 1, 1, 1, 1, 1, 1, 1, 3]);
        let flagged: Vec<usize> = (0..g.len()).filter(|&i| g[i].violating).collect();
        assert_eq!(flagged, vec![4, 5, 6]);
    }

    #[test]
    fn unconstrained_budget_gives_one_group() {
        let (ap, ls, _) = stencil_groups(6);
        let g = aggregate_level_groups(&ls, &ap, 4, 1e12, 0.5).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!((g[0].row_start, g[0].row_end, g[0].nnz), (0, 64, ap.nnz()));
        assert_eq!(g[0].boundary_left_end, 1);
        assert_eq!(g[0].boundary_right_start, 63);
    }

    #[test]
    fn one_level_per_group_budget() {
        // path graph: every level has one row; interior rows have 3 nonzeros
        let a = path(10);
        let (ls, _) = bfs_levels(&a, 0).unwrap();
        // (p+1) * 3 * 12 = 72 with p = 1 must fit, 2 levels (>= 5 nnz -> 120) must not
        let g = aggregate_level_groups(&ls, &a, 1, 2.0 * 73.0, 0.5).unwrap();
        assert_eq!(g.len(), ls.n_levels());
        assert!(g.iter().all(|g| !g.violating));
    }

    #[test]
    fn aggregate_rejects_bad_params() {
        let (ap, ls, _) = stencil_groups(6);
        assert!(aggregate_level_groups(&ls, &ap, 0, 1e6, 0.5).is_err());
        assert!(aggregate_level_groups(&ls, &ap, 2, 1e6, 0.0).is_err());
        assert!(aggregate_level_groups(&ls, &ap, 2, 0.0, 0.5).is_err());
    }

    #[test]
    fn recursion_on_stencil_example() {
        let a = gen_stencil_2d7pt(8, 8).unwrap();
        let params = LevelParams { p_max: 2, budget: GroupBudget::MaxRows(6), s_max: 1, root: 0 };
        let s = build_level_structure(&a, &params).unwrap();
        assert_eq!(s.tree.groups.len(), 11);
        assert_eq!(s.tree.spans.len(), 1);
        let span = &s.tree.spans[0];
        assert_eq!((span.first_group, span.last_group), (4, 6));
        assert_eq!(span.child.levels.n_levels(), 8);
        assert_eq!(span.child.rows(), 21..43);
        assert!(span.child.groups.iter().all(|g| g.row_end - g.row_start <= 6 && !g.violating));
        assert_eq!(s.tree.depth(), 1);
    }

    #[test]
    fn s_max_zero_is_plain_grouping() {
        let a = gen_stencil_2d7pt(8, 8).unwrap();
        let params = LevelParams { p_max: 2, budget: GroupBudget::MaxRows(6), s_max: 0, root: 0 };
        let s = build_level_structure(&a, &params).unwrap();
        let (_, _, g) = stencil_groups(6);
        assert_eq!(s.tree.groups, g);
        assert!(s.tree.spans.is_empty());
    }

    #[test]
    fn refinement_widens_bandwidth_at_span_boundary() {
        let a = gen_stencil_2d7pt(8, 8).unwrap();
        let flat = LevelParams { p_max: 2, budget: GroupBudget::MaxRows(6), s_max: 0, root: 0 };
        let rec = LevelParams { s_max: 1, ..flat };
        let bw = |p: &Permutation| {
            let b = permute_symmetric(&a, p).unwrap();
            (0..64)
                .map(|r| b.row(r).0.iter().map(|&c| (c as isize - r as isize).unsigned_abs()).max().unwrap())
                .collect::<Vec<_>>()
        };
        let s0 = build_level_structure(&a, &flat).unwrap();
        let s1 = build_level_structure(&a, &rec).unwrap();
        let (b0, b1) = (bw(&s0.perm), bw(&s1.perm));
        let span = s1.tree.spans[0].child.rows();
        let b_rec = permute_symmetric(&a, &s1.perm).unwrap();
        // rows of the span touching the outside reach further than before
        let edge_rows: Vec<usize> =
            span.clone().filter(|&r| b_rec.row(r).0.iter().any(|&c| !span.contains(&(c as usize)))).collect();
        assert!(!edge_rows.is_empty());
        assert!(edge_rows.iter().map(|&r| b1[r]).max() > edge_rows.iter().map(|&r| b0[r]).max());
    }
}
