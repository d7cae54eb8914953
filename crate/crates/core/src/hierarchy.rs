//! The pre-defined feature hierarchy: a DAG over dense feature indices with
//! precomputed ancestor and descendant closures.

use std::collections::{HashMap, VecDeque};
use std::fs;
use std::path::Path;

use fixedbitset::FixedBitSet;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Generalisation/specialisation DAG over features. Immutable after
/// construction.
#[derive(Debug, Clone)]
pub struct FeatureDag {
    n_features: usize,
    edges: Vec<(usize, usize)>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    ancestors: Vec<FixedBitSet>,
    descendants: Vec<FixedBitSet>,
}

impl FeatureDag {
    /// Builds the DAG and its transitive closures. Duplicate edges are merged.
    pub fn new(n_features: usize, edge_list: &[(usize, usize)]) -> Result<Self> {
        let mut edges = Vec::with_capacity(edge_list.len());
        for &(p, c) in edge_list {
            for v in [p, c] {
                if v >= n_features {
                    return Err(Error::IndexOutOfRange {
                        index: v,
                        len: n_features,
                    });
                }
            }
            if p == c {
                return Err(Error::CyclicHierarchy(p));
            }
            edges.push((p, c));
        }
        edges.sort_unstable();
        edges.dedup();

        let mut parents = vec![Vec::new(); n_features];
        let mut children = vec![Vec::new(); n_features];
        for &(p, c) in &edges {
            parents[c].push(p);
            children[p].push(c);
        }

        // Kahn's algorithm; anything left unvisited sits on a cycle.
        let mut indegree: Vec<usize> = parents.iter().map(Vec::len).collect();
        let mut queue: VecDeque<usize> = (0..n_features).filter(|&v| indegree[v] == 0).collect();
        let mut order = Vec::with_capacity(n_features);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &c in &children[v] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    queue.push_back(c);
                }
            }
        }
        if order.len() < n_features {
            let on_cycle = (0..n_features).find(|&v| indegree[v] > 0).unwrap_or(0);
            return Err(Error::CyclicHierarchy(on_cycle));
        }

        let mut ancestors = vec![FixedBitSet::with_capacity(n_features); n_features];
        for &v in &order {
            for &p in &parents[v] {
                let (from, to) = if p < v {
                    let (lo, hi) = ancestors.split_at_mut(v);
                    (&lo[p], &mut hi[0])
                } else {
                    let (lo, hi) = ancestors.split_at_mut(p);
                    (&hi[0], &mut lo[v])
                };
                to.union_with(from);
                to.insert(p);
            }
        }
        let mut descendants = vec![FixedBitSet::with_capacity(n_features); n_features];
        for (v, anc) in ancestors.iter().enumerate() {
            for a in anc.ones() {
                descendants[a].insert(v);
            }
        }

        Ok(Self {
            n_features,
            edges,
            parents,
            children,
            ancestors,
            descendants,
        })
    }

    /// A DAG with no edges.
    pub fn empty(n_features: usize) -> Self {
        Self::new(n_features, &[]).expect("edgeless graph is acyclic")
    }

    /// Builds a DAG from named edges, resolving names against `feature_names`.
    /// Edges naming an unknown feature are dropped with a warning.
    pub fn from_named_edges<S: AsRef<str>>(
        feature_names: &[S],
        named_edges: &[(String, String)],
    ) -> Result<Self> {
        let index: HashMap<&str, usize> = feature_names
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_ref(), i))
            .collect();
        let mut edges = Vec::with_capacity(named_edges.len());
        for (p, c) in named_edges {
            match (index.get(p.as_str()), index.get(c.as_str())) {
                (Some(&pi), Some(&ci)) => edges.push((pi, ci)),
                _ => log::warn!("dropping hierarchy edge {p} -> {c}: feature not in dataset"),
            }
        }
        Self::new(feature_names.len(), &edges)
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// Direct (parent, child) edges, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn parents(&self, v: usize) -> &[usize] {
        &self.parents[v]
    }

    pub fn children(&self, v: usize) -> &[usize] {
        &self.children[v]
    }

    pub fn ancestors(&self, v: usize) -> &FixedBitSet {
        &self.ancestors[v]
    }

    pub fn descendants(&self, v: usize) -> &FixedBitSet {
        &self.descendants[v]
    }

    /// Features with no children in the hierarchy.
    pub fn sinks(&self) -> Vec<usize> {
        (0..self.n_features)
            .filter(|&v| self.children[v].is_empty())
            .collect()
    }

    fn check(&self, v: usize) -> Result<()> {
        if v < self.n_features {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                index: v,
                len: self.n_features,
            })
        }
    }

    /// True iff `a` is a proper ancestor of `b`.
    pub fn is_ancestor(&self, a: usize, b: usize) -> Result<bool> {
        self.check(a)?;
        self.check(b)?;
        Ok(self.ancestors[b].contains(a))
    }

    /// True iff one of `a`, `b` is an ancestor of the other.
    pub fn hierarchically_related(&self, a: usize, b: usize) -> Result<bool> {
        self.check(a)?;
        self.check(b)?;
        Ok(self.related(a, b))
    }

    /// Unchecked variant for inner loops; indices must be in range.
    #[inline]
    pub(crate) fn related(&self, a: usize, b: usize) -> bool {
        self.ancestors[b].contains(a) || self.ancestors[a].contains(b)
    }

    /// Random GO-like hierarchy: a few roots, every other feature gets one
    /// parent (two with probability `second_parent_prob`) among features
    /// created before it. Indices are shuffled afterwards so that index order
    /// carries no hierarchy information.
    pub fn random(n_features: usize, second_parent_prob: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_roots = (n_features / 10).max(1).min(n_features);
        let mut label: Vec<usize> = (0..n_features).collect();
        label.shuffle(&mut rng);
        let mut edges = Vec::new();
        for v in n_roots..n_features {
            let p = rng.random_range(0..v);
            edges.push((label[p], label[v]));
            if v > 1 && rng.random_bool(second_parent_prob) {
                let q = rng.random_range(0..v);
                if q != p {
                    edges.push((label[q], label[v]));
                }
            }
        }
        Self::new(n_features, &edges).expect("edges point forward in creation order")
    }
}

/// Reads a hierarchy file: one `parent<TAB>child` edge per line, `#` comments.
pub fn read_dag_edges(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut edges = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split('\t');
        match (parts.next(), parts.next(), parts.next()) {
            (Some(p), Some(c), None) if !p.is_empty() && !c.is_empty() => {
                edges.push((p.to_string(), c.to_string()))
            }
            _ => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: lineno as u64 + 1,
                    message: "expected `<parent>\\t<child>`".into(),
                })
            }
        }
    }
    Ok(edges)
}

/// Loads a hierarchy file and resolves its IDs against the dataset header.
pub fn load_dag<S: AsRef<str>>(path: &Path, feature_names: &[S]) -> Result<FeatureDag> {
    let edges = read_dag_edges(path)?;
    FeatureDag::from_named_edges(feature_names, &edges)
}

pub fn write_dag<S: AsRef<str>>(path: &Path, dag: &FeatureDag, feature_names: &[S]) -> Result<()> {
    let mut out = String::new();
    for &(p, c) in dag.edges() {
        out.push_str(feature_names[p].as_ref());
        out.push('\t');
        out.push_str(feature_names[c].as_ref());
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
