//! Lazy, per-instance variant of the constrained tree learner that also
//! drops hierarchically redundant features: relatives carrying the same
//! value in the instance being classified.

use fixedbitset::FixedBitSet;

use crate::error::{Error, Result};
use crate::hie_mst::{check_inputs, learn_constrained, TraceEvent};
use crate::hierarchy::FeatureDag;
use crate::infostats::{EdgeStatus, ScoredEdge};
use crate::tree::DependencyTree;

/// Per-instance learning state: candidate edge availability and the
/// features not yet removed as redundant.
#[derive(Debug, Clone)]
pub struct InstanceContext {
    values: Vec<u8>,
    edge_status: Vec<EdgeStatus>,
    active: FixedBitSet,
    incident: Vec<Vec<usize>>,
}

impl InstanceContext {
    /// Fresh context for `values` over the candidate list `edges`.
    pub fn new(values: &[u8], edges: &[ScoredEdge]) -> Self {
        let n = values.len();
        let mut incident = vec![Vec::new(); n];
        for (k, e) in edges.iter().enumerate() {
            incident[e.i].push(k);
            incident[e.j].push(k);
        }
        let mut active = FixedBitSet::with_capacity(n);
        active.insert_range(..);
        Self {
            values: values.to_vec(),
            edge_status: edges.iter().map(|e| e.status).collect(),
            active,
            incident,
        }
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn edge_status(&self) -> &[EdgeStatus] {
        &self.edge_status
    }

    pub fn is_available(&self, edge: usize) -> bool {
        self.edge_status[edge] == EdgeStatus::Available
    }

    pub fn is_active(&self, feature: usize) -> bool {
        self.active.contains(feature)
    }

    pub fn active_features(&self) -> Vec<usize> {
        self.active.ones().collect()
    }

    fn remove(&mut self, feature: usize) {
        self.active.set(feature, false);
        for &k in &self.incident[feature] {
            self.edge_status[k] = EdgeStatus::Unavailable;
        }
    }
}

/// True iff `a` and `b` are hierarchically related and share a value.
pub fn is_redundant_pair(dag: &FeatureDag, values: &[u8], a: usize, b: usize) -> Result<bool> {
    for v in [a, b] {
        if v >= values.len() {
            return Err(Error::IndexOutOfRange {
                index: v,
                len: values.len(),
            });
        }
    }
    Ok(dag.hierarchically_related(a, b)? && values[a] == values[b])
}

#[inline]
pub(crate) fn is_redundant(dag: &FeatureDag, values: &[u8], a: usize, b: usize) -> bool {
    values[a] == values[b] && dag.related(a, b)
}

/// Removes every active ancestor or descendant of either endpoint that has
/// the endpoint's value, and marks their incident candidate edges
/// unavailable. Returns `(endpoint, removed)` pairs in removal order.
pub fn remove_redundancy(
    ctx: &mut InstanceContext,
    dag: &FeatureDag,
    (a, b): (usize, usize),
) -> Vec<(usize, usize)> {
    let mut removed = Vec::new();
    for v in [a, b] {
        let relatives: Vec<usize> = dag.ancestors(v).union(dag.descendants(v)).collect();
        for u in relatives {
            if u != a && u != b && ctx.is_active(u) && ctx.values[u] == ctx.values[v] {
                ctx.remove(u);
                removed.push((v, u));
            }
        }
    }
    removed
}

/// Tree learned for one instance together with the features that survived
/// redundancy removal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LiteTree {
    pub tree: DependencyTree,
    pub active_features: Vec<usize>,
}

fn prepare(edges: &[ScoredEdge], dag: &FeatureDag, instance: &[u8], n_features: usize) -> Result<InstanceContext> {
    check_inputs(edges, dag, n_features)?;
    if instance.len() != n_features {
        return Err(Error::DimensionMismatch {
            expected: n_features,
            found: instance.len(),
        });
    }
    Ok(InstanceContext::new(instance, edges))
}

/// Learns the redundancy-free constrained tree for one test instance.
pub fn hie_mst_lite(
    edges: &[ScoredEdge],
    dag: &FeatureDag,
    instance: &[u8],
    n_features: usize,
    seed: u64,
) -> Result<LiteTree> {
    let mut ctx = prepare(edges, dag, instance, n_features)?;
    let tree = learn_constrained(edges, dag, n_features, seed, Some(&mut ctx), None);
    Ok(LiteTree {
        tree,
        active_features: ctx.active_features(),
    })
}

/// [`hie_mst_lite`] plus the per-edge decision trace.
pub fn hie_mst_lite_traced(
    edges: &[ScoredEdge],
    dag: &FeatureDag,
    instance: &[u8],
    n_features: usize,
    seed: u64,
) -> Result<(LiteTree, Vec<TraceEvent>)> {
    let mut ctx = prepare(edges, dag, instance, n_features)?;
    let mut trace = Vec::new();
    let tree = learn_constrained(edges, dag, n_features, seed, Some(&mut ctx), Some(&mut trace));
    Ok((
        LiteTree {
            tree,
            active_features: ctx.active_features(),
        },
        trace,
    ))
}
