//! Hierarchy-constrained maximum spanning tree.
//!
//! Edges are consumed in descending score order. Pairs related in the
//! hierarchy may only enter with their hierarchy direction; unrelated pairs
//! are oriented away from an endpoint that already has a parent, rejected if
//! both endpoints do, and kept undirected otherwise. Every insertion is
//! followed by dependency propagation to a fixpoint, and whatever is still
//! undirected at the end gets a seeded random orientation.

use petgraph::unionfind::UnionFind;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hie_mst_lite::{is_redundant, remove_redundancy, InstanceContext};
use crate::hierarchy::FeatureDag;
use crate::infostats::ScoredEdge;
use crate::tree::DependencyTree;

/// Partially built structure: directed edges stored as a parent map, plus
/// undirected edges in insertion order.
#[derive(Debug, Clone)]
pub struct EdgeSets {
    parent: Vec<Option<usize>>,
    undirected: Vec<(usize, usize)>,
    components: UnionFind<usize>,
}

impl EdgeSets {
    pub fn new(n_features: usize) -> Self {
        Self {
            parent: vec![None; n_features],
            undirected: Vec::new(),
            components: UnionFind::new(n_features),
        }
    }

    pub fn n_features(&self) -> usize {
        self.parent.len()
    }

    /// True iff `a` and `b` are already connected, ignoring direction.
    pub fn would_create_cycle(&self, a: usize, b: usize) -> bool {
        self.components.equiv(a, b)
    }

    /// True iff `child` already has a parent among the directed edges.
    pub fn violates_single_parent(&self, child: usize) -> bool {
        self.parent[child].is_some()
    }

    pub fn has_parent(&self, v: usize) -> bool {
        self.parent[v].is_some()
    }

    /// Adds `parent -> child`. Caller guarantees no cycle and no existing
    /// parent of `child`.
    pub fn add_directed(&mut self, parent: usize, child: usize) {
        debug_assert!(self.parent[child].is_none());
        self.parent[child] = Some(parent);
        self.components.union(parent, child);
    }

    pub fn add_undirected(&mut self, a: usize, b: usize) {
        self.undirected.push((a, b));
        self.components.union(a, b);
    }

    /// `(parent, child)` pairs ordered by child.
    pub fn directed(&self) -> Vec<(usize, usize)> {
        self.parent
            .iter()
            .enumerate()
            .filter_map(|(c, p)| p.map(|p| (p, c)))
            .collect()
    }

    pub fn undirected(&self) -> &[(usize, usize)] {
        &self.undirected
    }

    /// Orients undirected edges with exactly one parented endpoint away from
    /// that endpoint, until nothing changes. Returns the oriented edges as
    /// `(parent, child)` in the order they were fixed.
    pub fn propagate(&mut self) -> Vec<(usize, usize)> {
        let mut oriented = Vec::new();
        loop {
            let before = oriented.len();
            let mut k = 0;
            while k < self.undirected.len() {
                let (a, b) = self.undirected[k];
                let edge = match (self.has_parent(a), self.has_parent(b)) {
                    (true, false) => (a, b),
                    (false, true) => (b, a),
                    _ => {
                        k += 1;
                        continue;
                    }
                };
                self.undirected.remove(k);
                self.parent[edge.1] = Some(edge.0);
                oriented.push(edge);
            }
            if oriented.len() == before {
                return oriented;
            }
        }
    }

    pub fn into_tree(self) -> DependencyTree {
        DependencyTree::from_parents(self.parent).expect("acyclic skeleton with single parents")
    }
}

/// Returns a copy of `sets` with propagation run to its fixpoint.
pub fn propagate_dependencies(sets: &EdgeSets) -> EdgeSets {
    let mut out = sets.clone();
    out.propagate();
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    AcceptedDirected,
    AcceptedUndirected,
    RejectedCycle,
    RejectedSingleParent,
    OrientedByPropagation,
    OrientedRandomly,
    DroppedResidual,
    RejectedUnavailable,
    RejectedRedundant,
    RelativeRemoved,
}

/// One line of a learner trace. `step` is the position of the candidate edge
/// being processed (residual orientation steps continue the count).
/// For `relative_removed`, `i` is the edge endpoint and `j` the removed
/// relative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TraceEvent {
    pub step: usize,
    pub i: usize,
    pub j: usize,
    pub decision: Decision,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parent: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub child: Option<usize>,
}

struct Tracer<'a>(Option<&'a mut Vec<TraceEvent>>);

impl Tracer<'_> {
    fn emit(&mut self, step: usize, (i, j): (usize, usize), decision: Decision) {
        self.oriented(step, (i, j), decision, None);
    }

    fn oriented(
        &mut self,
        step: usize,
        (i, j): (usize, usize),
        decision: Decision,
        edge: Option<(usize, usize)>,
    ) {
        if let Some(out) = self.0.as_deref_mut() {
            out.push(TraceEvent {
                step,
                i,
                j,
                decision,
                parent: edge.map(|e| e.0),
                child: edge.map(|e| e.1),
            });
        }
    }
}

pub(crate) fn check_inputs(edges: &[ScoredEdge], dag: &FeatureDag, n_features: usize) -> Result<()> {
    if dag.n_features() != n_features {
        return Err(Error::DimensionMismatch {
            expected: n_features,
            found: dag.n_features(),
        });
    }
    if let Some(e) = edges.iter().find(|e| e.i >= n_features || e.j >= n_features || e.i == e.j) {
        return Err(Error::IndexOutOfRange {
            index: e.i.max(e.j),
            len: n_features,
        });
    }
    Ok(())
}

/// Greedy constrained learner shared by the plain and the redundancy-aware
/// variants; `lite` switches on the availability and redundancy gates.
pub(crate) fn learn_constrained(
    edges: &[ScoredEdge],
    dag: &FeatureDag,
    n_features: usize,
    seed: u64,
    mut lite: Option<&mut InstanceContext>,
    trace: Option<&mut Vec<TraceEvent>>,
) -> DependencyTree {
    let mut trace = Tracer(trace);
    let mut sets = EdgeSets::new(n_features);

    for (step, e) in edges.iter().enumerate() {
        let pair = (e.i, e.j);
        if sets.would_create_cycle(e.i, e.j) {
            trace.emit(step, pair, Decision::RejectedCycle);
            continue;
        }
        if let Some(ctx) = lite.as_deref() {
            if !ctx.is_available(step) {
                trace.emit(step, pair, Decision::RejectedUnavailable);
                continue;
            }
            if is_redundant(dag, ctx.values(), e.i, e.j) {
                trace.emit(step, pair, Decision::RejectedRedundant);
                continue;
            }
        }

        let hierarchy_direction = if dag.ancestors(e.j).contains(e.i) {
            Some((e.i, e.j))
        } else if dag.ancestors(e.i).contains(e.j) {
            Some((e.j, e.i))
        } else {
            None
        };
        match hierarchy_direction {
            Some((p, c)) => {
                if sets.violates_single_parent(c) {
                    trace.emit(step, pair, Decision::RejectedSingleParent);
                    continue;
                }
                sets.add_directed(p, c);
                trace.oriented(step, pair, Decision::AcceptedDirected, Some((p, c)));
            }
            None => match (sets.has_parent(e.i), sets.has_parent(e.j)) {
                (true, true) => {
                    trace.emit(step, pair, Decision::RejectedSingleParent);
                    continue;
                }
                (true, false) | (false, true) => {
                    let edge = if sets.has_parent(e.i) { pair } else { (e.j, e.i) };
                    sets.add_directed(edge.0, edge.1);
                    trace.oriented(step, pair, Decision::OrientedByPropagation, Some(edge));
                }
                (false, false) => {
                    sets.add_undirected(e.i, e.j);
                    trace.emit(step, pair, Decision::AcceptedUndirected);
                }
            },
        }

        if let Some(ctx) = lite.as_deref_mut() {
            for (endpoint, removed) in remove_redundancy(ctx, dag, pair) {
                trace.emit(step, (endpoint, removed), Decision::RelativeRemoved);
            }
        }
        for edge in sets.propagate() {
            trace.oriented(step, (edge.0.min(edge.1), edge.0.max(edge.1)), Decision::OrientedByPropagation, Some(edge));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut step = edges.len();
    while !sets.undirected.is_empty() {
        let (a, b) = sets.undirected.remove(0);
        let pair = (a.min(b), a.max(b));
        let edge = match (sets.has_parent(a), sets.has_parent(b)) {
            (false, false) => {
                if rng.random_bool(0.5) {
                    (a, b)
                } else {
                    (b, a)
                }
            }
            (true, false) => (a, b),
            (false, true) => (b, a),
            (true, true) => {
                log::warn!("dropping residual edge {a} -- {b}: both endpoints already have parents");
                trace.emit(step, pair, Decision::DroppedResidual);
                step += 1;
                continue;
            }
        };
        sets.parent[edge.1] = Some(edge.0);
        trace.oriented(step, pair, Decision::OrientedRandomly, Some(edge));
        for edge in sets.propagate() {
            trace.oriented(step, (edge.0.min(edge.1), edge.0.max(edge.1)), Decision::OrientedByPropagation, Some(edge));
        }
        step += 1;
    }

    sets.into_tree()
}

/// Learns the hierarchy-constrained tree from edges sorted by descending
/// score. `seed` only drives the orientation of residual undirected edges.
pub fn hie_mst(
    edges: &[ScoredEdge],
    dag: &FeatureDag,
    n_features: usize,
    seed: u64,
) -> Result<DependencyTree> {
    check_inputs(edges, dag, n_features)?;
    Ok(learn_constrained(edges, dag, n_features, seed, None, None))
}

/// [`hie_mst`] plus the per-edge decision trace.
pub fn hie_mst_traced(
    edges: &[ScoredEdge],
    dag: &FeatureDag,
    n_features: usize,
    seed: u64,
) -> Result<(DependencyTree, Vec<TraceEvent>)> {
    check_inputs(edges, dag, n_features)?;
    let mut trace = Vec::new();
    let tree = learn_constrained(edges, dag, n_features, seed, None, Some(&mut trace));
    Ok((tree, trace))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::hierarchy::tests::{canonical, A, B, C, D, E, F};

    /// Candidate list whose head is the worked example's order
    /// F-C, E-A, C-A, C-D, B-D, F-B, B-E, followed by every other pair.
    pub fn worked_example_edges() -> Vec<ScoredEdge> {
        let dag = canonical();
        let head = [(F, C), (E, A), (C, A), (C, D), (B, D), (F, B), (B, E)];
        let mut edges: Vec<ScoredEdge> = head
            .iter()
            .enumerate()
            .map(|(k, &(a, b))| ScoredEdge::new(a, b, 1.0 - 0.05 * k as f64, &dag))
            .collect();
        let mut rest = 0.5;
        for i in 0..6 {
            for j in i + 1..6 {
                if !edges.iter().any(|e| (e.i, e.j) == (i, j)) {
                    edges.push(ScoredEdge::new(i, j, rest, &dag));
                    rest -= 0.01;
                }
            }
        }
        edges
    }

    #[test]
    fn worked_example_chain() {
        let edges = worked_example_edges();
        assert_eq!(edges.len(), 15);
        for seed in 0..5 {
            let tree = hie_mst(&edges, &canonical(), 6, seed).unwrap();
            assert_eq!(tree.parent(F), None);
            assert_eq!(tree.parent(C), Some(F));
            assert_eq!(tree.parent(D), Some(C));
            assert_eq!(tree.parent(B), Some(D));
            assert_eq!(tree.parent(E), Some(B));
            assert_eq!(tree.parent(A), Some(E));
        }
    }

    #[test]
    fn worked_example_trace() {
        let (_, trace) = hie_mst_traced(&worked_example_edges(), &canonical(), 6, 0).unwrap();
        let decisions: Vec<Decision> = trace.iter().take(7).map(|t| t.decision).collect();
        use Decision::*;
        assert_eq!(
            decisions,
            vec![
                AcceptedDirected,
                AcceptedDirected,
                RejectedSingleParent,
                AcceptedDirected,
                OrientedByPropagation,
                RejectedCycle,
                OrientedByPropagation
            ]
        );
        assert_eq!((trace[4].parent, trace[4].child), (Some(D), Some(B)));
        assert!(trace[7..].iter().all(|t| t.decision == RejectedCycle));
        let line = serde_json::to_string(&trace[0]).unwrap();
        assert_eq!(line, r#"{"step":0,"i":2,"j":5,"decision":"accepted_directed","parent":5,"child":2}"#);
    }

    #[test]
    fn cycle_check_uses_both_sets() {
        let mut sets = EdgeSets::new(6);
        assert!(!sets.would_create_cycle(F, B));
        sets.add_directed(F, C);
        sets.add_directed(E, A);
        sets.add_directed(C, D);
        sets.add_directed(D, B);
        sets.add_undirected(B, E);
        assert!(sets.would_create_cycle(F, B));
        assert!(sets.would_create_cycle(A, F));
    }

    #[test]
    fn single_parent_checks() {
        let mut sets = EdgeSets::new(6);
        assert!(!sets.violates_single_parent(C));
        sets.add_directed(F, C);
        assert!(sets.violates_single_parent(C));
        sets.add_directed(C, D);
        sets.add_undirected(B, D);
        let sets = propagate_dependencies(&sets);
        assert!(sets.violates_single_parent(B));
    }

    #[test]
    fn propagation_scenarios() {
        // Parented endpoint becomes the parent.
        let mut sets = EdgeSets::new(6);
        sets.add_directed(F, C);
        sets.add_undirected(C, A);
        let out = propagate_dependencies(&sets);
        assert!(out.undirected().is_empty());
        assert_eq!(out.directed(), vec![(C, A), (F, C)]);

        // Both endpoints are only parents: stays undirected.
        let mut sets = EdgeSets::new(6);
        sets.add_directed(F, C);
        sets.add_directed(E, A);
        sets.add_undirected(F, E);
        let out = propagate_dependencies(&sets);
        assert_eq!(out.undirected(), &[(F, E)]);

        let empty = propagate_dependencies(&EdgeSets::new(3));
        assert!(empty.directed().is_empty() && empty.undirected().is_empty());
    }

    #[test]
    fn single_feature() {
        let tree = hie_mst(&[], &FeatureDag::empty(1), 1, 3).unwrap();
        assert_eq!(tree.roots(), vec![0]);
        assert_eq!(tree.n_edges(), 0);
    }

    #[test]
    fn rejects_mismatched_inputs() {
        assert!(hie_mst(&worked_example_edges(), &canonical(), 5, 0).is_err());
    }
}
