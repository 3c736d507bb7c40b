//! Level/power execution order.
//!
//! A node `(u, p)` computes power `p` on the rows of unit `u`, where units are
//! the leaf level groups of a [`LevelGroupTree`] in row order. Nodes are
//! visited by diagonals `d = u + p` with ascending `p` inside a diagonal. A
//! refined span is executed as one macro step containing its child's nodes
//! plus the nodes of neighbouring groups that both feed and consume it; the
//! macro's content follows the same diagonal rule recursively.
//!
//! The resulting order is repaired against the dependency graph of the
//! matrix, so [`LpSchedule::order`] is always a valid topological order, and
//! each node carries the minimal set of waits needed for point-to-point
//! execution.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::ops::Range;

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::levels::LevelGroupTree;
use crate::matrix::CrsMatrix;

/// Largest number of node positions a schedule may address.
const MAX_NODES: usize = u32::MAX as usize;

/// Rows executed together for one power.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Unit {
    pub row_start: usize,
    pub row_end: usize,
    /// End of the unit's first level.
    pub boundary_left_end: usize,
    pub nnz: usize,
    pub stage: usize,
}

impl Unit {
    pub fn rows(&self) -> Range<usize> {
        self.row_start..self.row_end
    }
}

/// Role of a node relative to the nearest refined span.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeClass {
    Regular,
    /// Needed by the span, independent of it.
    Input,
    /// Depends on the span, not needed by it.
    Output,
    /// Both needed by and dependent on the span.
    Diamond,
    /// Rows of the span itself.
    Inside,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Node {
    pub unit: usize,
    pub power: usize,
    pub class: NodeClass,
}

/// Nodes in traversal order before dependency repair.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    Node(Node),
    Macro { stage: usize, row_start: usize, row_end: usize, steps: Vec<Step> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DepKind {
    /// Every row of the producer is needed.
    Full,
    /// Only rows of the producer's first level are needed.
    LeftBoundary,
}

/// A wait on an earlier node of the order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Wait {
    /// Position of the producer in [`LpSchedule::order`].
    pub pos: usize,
    pub kind: DepKind,
}

/// Ordered nodes with their synchronization requirements.
#[derive(Clone, Debug, Serialize)]
pub struct LpSchedule {
    pub p_max: usize,
    pub units: Vec<Unit>,
    /// Traversal before repair, macro steps kept as blocks.
    pub steps: Vec<Step>,
    /// Executable order.
    pub order: Vec<Node>,
    /// `waits[wait_ptr[k]..wait_ptr[k + 1]]` must be satisfied before `order[k]`.
    pub wait_ptr: Vec<usize>,
    pub waits: Vec<Wait>,
    /// Units whose rows feed each unit, with the dependency kind. Sorted by unit.
    #[serde(skip)]
    pub unit_deps: Vec<Vec<(usize, DepKind)>>,
    #[serde(skip)]
    position: Vec<usize>,
}

impl LpSchedule {
    pub fn n_nodes(&self) -> usize {
        self.order.len()
    }

    /// Position of node `(unit, power)` in [`Self::order`].
    pub fn position(&self, unit: usize, power: usize) -> usize {
        self.position[unit * self.p_max + power - 1]
    }

    pub fn waits_of(&self, pos: usize) -> &[Wait] {
        &self.waits[self.wait_ptr[pos]..self.wait_ptr[pos + 1]]
    }

    /// Steps between computing `(unit, power)` and `(unit, power + 1)`.
    pub fn reuse_distance(&self, unit: usize, power: usize) -> Option<usize> {
        if unit >= self.units.len() || power == 0 || power >= self.p_max {
            return None;
        }
        Some(self.position(unit, power + 1) - self.position(unit, power))
    }

    /// Order of the traversal before repair, macro contents inlined.
    pub fn ideal_order(&self) -> Vec<Node> {
        let mut out = Vec::new();
        flatten(&self.steps, &mut out);
        out
    }

    /// Checks that every dependency precedes its consumer.
    pub fn is_topological(&self) -> bool {
        self.order.iter().enumerate().all(|(k, nd)| {
            nd.power == 1 || self.unit_deps[nd.unit].iter().all(|&(v, _)| self.position(v, nd.power - 1) < k)
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schedule serializes")
    }
}

fn flatten(steps: &[Step], out: &mut Vec<Node>) {
    for s in steps {
        match s {
            Step::Node(n) => out.push(*n),
            Step::Macro { steps, .. } => flatten(steps, out),
        }
    }
}

/// Units of a tree in row order.
pub fn leaf_units(tree: &LevelGroupTree) -> Vec<Unit> {
    let mut out = Vec::new();
    collect_units(tree, &mut out);
    out
}

fn collect_units(tree: &LevelGroupTree, out: &mut Vec<Unit>) {
    let mut g = 0;
    let mut spans = tree.spans.iter().peekable();
    while g < tree.groups.len() {
        if let Some(s) = spans.peek() {
            if s.first_group == g {
                collect_units(&s.child, out);
                g = s.last_group + 1;
                spans.next();
                continue;
            }
        }
        let gr = &tree.groups[g];
        out.push(Unit {
            row_start: gr.row_start,
            row_end: gr.row_end,
            boundary_left_end: gr.boundary_left_end,
            nnz: gr.nnz,
            stage: tree.stage,
        });
        g += 1;
    }
}

fn n_leaves(tree: &LevelGroupTree) -> usize {
    let refined: usize = tree.spans.iter().map(|s| s.last_group - s.first_group + 1).sum();
    tree.groups.len() - refined + tree.spans.iter().map(|s| n_leaves(&s.child)).sum::<usize>()
}

#[derive(Clone)]
struct Entry {
    unit: Option<usize>,
    /// `allowed[p]` for `p` in `1..=p_max`.
    allowed: Vec<bool>,
    base: NodeClass,
}

struct LineSpan<'a> {
    first: usize,
    last: usize,
    child: &'a LevelGroupTree,
    unit_base: usize,
}

struct Line<'a> {
    entries: Vec<Entry>,
    spans: Vec<LineSpan<'a>>,
}

fn tree_line(tree: &LevelGroupTree, unit_base: usize, p_max: usize) -> Line<'_> {
    let all = vec![true; p_max + 1];
    let mut entries = Vec::with_capacity(tree.groups.len());
    let mut spans = Vec::new();
    let mut next = unit_base;
    let mut span_iter = tree.spans.iter().peekable();
    let mut g = 0;
    while g < tree.groups.len() {
        if let Some(s) = span_iter.peek() {
            if s.first_group == g {
                spans.push(LineSpan { first: g, last: s.last_group, child: &s.child, unit_base: next });
                next += n_leaves(&s.child);
                for _ in s.first_group..=s.last_group {
                    entries.push(Entry { unit: None, allowed: all.clone(), base: NodeClass::Inside });
                }
                g = s.last_group + 1;
                span_iter.next();
                continue;
            }
        }
        entries.push(Entry { unit: Some(next), allowed: all.clone(), base: NodeClass::Regular });
        next += 1;
        g += 1;
    }
    Line { entries, spans }
}

/// Class of `(i, p)` relative to span `[a, b]`, `None` when unrelated.
fn classify(i: usize, p: usize, a: usize, b: usize, p_max: usize) -> Option<NodeClass> {
    let dist = if i < a {
        a - i
    } else if i > b {
        i - b
    } else {
        return Some(NodeClass::Inside);
    };
    if dist >= p_max {
        return None;
    }
    let input = p + dist <= p_max;
    let output = p > dist;
    Some(match (input, output) {
        (true, true) => NodeClass::Diamond,
        (true, false) => NodeClass::Input,
        (false, true) => NodeClass::Output,
        (false, false) => NodeClass::Regular,
    })
}

fn traverse(line: &Line<'_>, p_max: usize) -> Vec<Step> {
    let len = line.entries.len();
    let mut done: Vec<Vec<bool>> = vec![vec![false; p_max + 1]; len];
    let node_class = |i: usize, p: usize| -> NodeClass {
        let base = line.entries[i].base;
        line.spans
            .iter()
            .find_map(|s| classify(i, p, s.first, s.last, p_max))
            .filter(|&c| c != NodeClass::Regular)
            .map(|c| if base == NodeClass::Regular { c } else { base })
            .unwrap_or(base)
    };
    let mut out = Vec::new();
    let mut spans = line.spans.iter().peekable();
    if len == 0 {
        return out;
    }
    for d in 1..len + p_max {
        while let Some(s) = spans.peek() {
            if s.first + 1 != d {
                break;
            }
            let s = spans.next().unwrap();
            // right nodes the span needs, in diagonal order
            let mut hoist = Vec::new();
            for i in s.last + 1..(s.last + p_max).min(len) {
                for p in 1..=p_max {
                    if line.entries[i].unit.is_some()
                        && line.entries[i].allowed[p]
                        && !done[i][p]
                        && classify(i, p, s.first, s.last, p_max) == Some(NodeClass::Input)
                    {
                        hoist.push((i + p, p, i));
                    }
                }
            }
            hoist.sort_unstable();
            for (_, p, i) in hoist {
                done[i][p] = true;
                let class = match line.entries[i].base {
                    NodeClass::Regular => NodeClass::Input,
                    base => base,
                };
                out.push(Step::Node(Node { unit: line.entries[i].unit.unwrap(), power: p, class }));
            }
            out.push(macro_step(line, s, &mut done, p_max));
        }
        for p in 1..=p_max {
            if p > d || d - p >= len {
                continue;
            }
            let i = d - p;
            let e = &line.entries[i];
            if let Some(u) = e.unit {
                if e.allowed[p] && !done[i][p] {
                    done[i][p] = true;
                    out.push(Step::Node(Node { unit: u, power: p, class: node_class(i, p) }));
                }
            }
        }
    }
    out
}

fn macro_step(line: &Line<'_>, s: &LineSpan<'_>, done: &mut [Vec<bool>], p_max: usize) -> Step {
    let len = line.entries.len();
    let lo = s.first.saturating_sub(p_max - 1);
    let hi = (s.last + p_max).min(len);
    let mut outer = |i: usize| -> Entry {
        let e = &line.entries[i];
        let mut allowed = vec![false; p_max + 1];
        for p in 1..=p_max {
            if e.allowed[p] && !done[i][p] && classify(i, p, s.first, s.last, p_max) == Some(NodeClass::Diamond) {
                allowed[p] = true;
                done[i][p] = true;
            }
        }
        Entry { unit: e.unit, allowed, base: NodeClass::Diamond }
    };
    let mut entries: Vec<Entry> = (lo..s.first).map(&mut outer).collect();
    let shift = entries.len();
    let child = tree_line(s.child, s.unit_base, p_max);
    let spans =
        child.spans.into_iter().map(|c| LineSpan { first: c.first + shift, last: c.last + shift, ..c }).collect();
    entries.extend(child.entries.into_iter().map(|e| Entry { base: NodeClass::Inside, ..e }));
    entries.extend((s.last + 1..hi).map(&mut outer));
    let inner = Line { entries, spans };
    Step::Macro {
        stage: s.child.stage,
        row_start: s.child.row_start,
        row_end: s.child.row_end,
        steps: traverse(&inner, p_max),
    }
}

/// Units referenced by the rows of each unit, with the dependency kind.
pub fn unit_dependencies(units: &[Unit], a: &CrsMatrix) -> Vec<Vec<(usize, DepKind)>> {
    let n = a.n_rows();
    let mut unit_of = vec![0u32; n];
    for (u, un) in units.iter().enumerate() {
        for r in un.rows() {
            unit_of[r] = u as u32;
        }
    }
    let mut stamp = vec![usize::MAX; units.len()];
    let mut boundary_only = vec![true; units.len()];
    let mut out = Vec::with_capacity(units.len());
    for (u, un) in units.iter().enumerate() {
        let mut list: Vec<usize> = Vec::new();
        for &c in &a.col()[a.row_ptr()[un.row_start] as usize..a.row_ptr()[un.row_end] as usize] {
            let c = c as usize;
            let v = unit_of[c] as usize;
            if stamp[v] != u {
                stamp[v] = u;
                boundary_only[v] = true;
                list.push(v);
            }
            if c >= units[v].boundary_left_end || units[v].boundary_left_end == units[v].row_end {
                boundary_only[v] = false;
            }
        }
        list.sort_unstable();
        out.push(
            list.into_iter()
                .map(|v| (v, if boundary_only[v] { DepKind::LeftBoundary } else { DepKind::Full }))
                .collect(),
        );
    }
    out
}

/// Schedule for the leaf groups of `tree` on `a_permuted` (numbered like the tree).
pub fn build_schedule(tree: &LevelGroupTree, a_permuted: &CrsMatrix, p_max: usize) -> Result<LpSchedule> {
    if p_max < 1 {
        return invalid("p_max must be at least 1");
    }
    if tree.row_start != 0 || tree.row_end != a_permuted.n_rows() {
        return invalid("tree does not cover the matrix");
    }
    let units = leaf_units(tree);
    if units.len().checked_mul(p_max).map_or(true, |n| n > MAX_NODES) {
        return invalid("too many nodes");
    }
    let steps = traverse(&tree_line(tree, 0, p_max), p_max);
    schedule_from_steps(units, steps, a_permuted, p_max)
}

/// `p_max` sweeps over the whole matrix as a single unit.
pub fn sweep_schedule(a: &CrsMatrix, p_max: usize) -> Result<LpSchedule> {
    if p_max < 1 {
        return invalid("p_max must be at least 1");
    }
    let units = vec![Unit { row_start: 0, row_end: a.n_rows(), boundary_left_end: a.n_rows(), nnz: a.nnz(), stage: 0 }];
    let steps = (1..=p_max).map(|p| Step::Node(Node { unit: 0, power: p, class: NodeClass::Regular })).collect();
    schedule_from_steps(units, steps, a, p_max)
}

fn schedule_from_steps(units: Vec<Unit>, steps: Vec<Step>, a: &CrsMatrix, p_max: usize) -> Result<LpSchedule> {
    let n_nodes = units.len() * p_max;
    let mut ideal = Vec::with_capacity(n_nodes);
    flatten(&steps, &mut ideal);
    let mut ideal_pos = vec![usize::MAX; n_nodes];
    for (k, nd) in ideal.iter().enumerate() {
        let id = nd.unit * p_max + nd.power - 1;
        if ideal_pos[id] != usize::MAX {
            return invalid(format!("node ({}, {}) scheduled twice", nd.unit, nd.power));
        }
        ideal_pos[id] = k;
    }
    if ideal.len() != n_nodes {
        return invalid("traversal missed nodes");
    }
    let unit_deps = unit_dependencies(&units, a);
    let mut consumers: Vec<Vec<usize>> = vec![Vec::new(); units.len()];
    for (u, deps) in unit_deps.iter().enumerate() {
        for &(v, _) in deps {
            consumers[v].push(u);
        }
    }
    // priority topological sort keyed by the traversal position
    let mut indeg = vec![0usize; n_nodes];
    for u in 0..units.len() {
        for p in 2..=p_max {
            indeg[u * p_max + p - 1] = unit_deps[u].len();
        }
    }
    let mut heap: BinaryHeap<Reverse<usize>> =
        (0..n_nodes).filter(|&id| indeg[id] == 0).map(|id| Reverse(ideal_pos[id])).collect();
    let mut order = Vec::with_capacity(n_nodes);
    let mut position = vec![0usize; n_nodes];
    while let Some(Reverse(k)) = heap.pop() {
        let nd = ideal[k];
        position[nd.unit * p_max + nd.power - 1] = order.len();
        order.push(nd);
        if nd.power < p_max {
            for &w in &consumers[nd.unit] {
                let id = w * p_max + nd.power;
                indeg[id] -= 1;
                if indeg[id] == 0 {
                    heap.push(Reverse(ideal_pos[id]));
                }
            }
        }
    }
    debug_assert_eq!(order.len(), n_nodes);
    // waits: the latest full dependency covers everything ordered before it
    let mut wait_ptr = Vec::with_capacity(n_nodes + 1);
    let mut waits = Vec::new();
    wait_ptr.push(0);
    for nd in &order {
        if nd.power > 1 {
            let mut deps: Vec<Wait> = unit_deps[nd.unit]
                .iter()
                .map(|&(v, kind)| Wait { pos: position[v * p_max + nd.power - 2], kind })
                .collect();
            deps.sort_unstable_by_key(|w| w.pos);
            let cut = deps.iter().rposition(|w| w.kind == DepKind::Full).unwrap_or(0);
            waits.extend_from_slice(&deps[cut..]);
        }
        wait_ptr.push(waits.len());
    }
    Ok(LpSchedule { p_max, units, steps, order, wait_ptr, waits, unit_deps, position })
}
