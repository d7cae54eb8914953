//! Conventional TAN structure: maximum spanning tree over CMI scores,
//! oriented outward from a randomly chosen root. Ignores the hierarchy.

use std::collections::{HashMap, VecDeque};

use petgraph::unionfind::UnionFind;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::infostats::ScoredEdge;
use crate::tree::DependencyTree;

/// Greedy Kruskal selection over an already sorted edge list.
pub fn max_spanning_skeleton(edges: &[ScoredEdge], n_features: usize) -> Vec<(usize, usize)> {
    let mut components = UnionFind::<usize>::new(n_features);
    let mut chosen = Vec::with_capacity(n_features.saturating_sub(1));
    for e in edges {
        if chosen.len() + 1 >= n_features {
            break;
        }
        if components.union(e.i, e.j) {
            chosen.push((e.i, e.j));
        }
    }
    chosen
}

/// Learns the TAN tree with a root drawn uniformly under `seed`.
pub fn learn_tan_structure(
    edges: &[ScoredEdge],
    n_features: usize,
    seed: u64,
) -> Result<DependencyTree> {
    if n_features == 0 {
        return Err(Error::EmptyFeatureSet);
    }
    let root = ChaCha8Rng::seed_from_u64(seed).random_range(0..n_features);
    learn_tan_structure_rooted(edges, n_features, root)
}

/// Learns the TAN tree oriented away from `root`. Components the edge list
/// does not connect to `root` hang from their lowest-index feature.
pub fn learn_tan_structure_rooted(
    edges: &[ScoredEdge],
    n_features: usize,
    root: usize,
) -> Result<DependencyTree> {
    if n_features == 0 {
        return Err(Error::EmptyFeatureSet);
    }
    if root >= n_features {
        return Err(Error::IndexOutOfRange {
            index: root,
            len: n_features,
        });
    }
    if let Some(e) = edges.iter().find(|e| e.j >= n_features) {
        return Err(Error::IndexOutOfRange {
            index: e.j,
            len: n_features,
        });
    }
    let mut adjacent = vec![Vec::new(); n_features];
    for (a, b) in max_spanning_skeleton(edges, n_features) {
        adjacent[a].push(b);
        adjacent[b].push(a);
    }
    let mut parent_of = vec![None; n_features];
    let mut visited = vec![false; n_features];
    let starts = std::iter::once(root).chain(0..n_features);
    for start in starts {
        if visited[start] {
            continue;
        }
        visited[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            for &u in &adjacent[v] {
                if !visited[u] {
                    visited[u] = true;
                    parent_of[u] = Some(v);
                    queue.push_back(u);
                }
            }
        }
    }
    DependencyTree::from_parents(parent_of)
}

/// Sum of the scores of the tree's edges.
pub fn tree_total_score(tree: &DependencyTree, edges: &[ScoredEdge]) -> Result<f64> {
    let scores: HashMap<(usize, usize), f64> =
        edges.iter().map(|e| ((e.i, e.j), e.score)).collect();
    tree.skeleton()
        .into_iter()
        .map(|pair| scores.get(&pair).copied().ok_or(Error::UnknownEdge(pair.0, pair.1)))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::tests::{A, B, C, D, E, F};
    use crate::hierarchy::FeatureDag;
    use crate::infostats::sort_edges;

    fn scored(n: usize, pairs: &[((usize, usize), f64)]) -> Vec<ScoredEdge> {
        let dag = FeatureDag::empty(n);
        let mut v: Vec<_> = pairs.iter().map(|&((a, b), s)| ScoredEdge::new(a, b, s, &dag)).collect();
        sort_edges(&mut v);
        v
    }

    fn all_pairs_with(n: usize, strong: &[(usize, usize)]) -> Vec<ScoredEdge> {
        let mut pairs = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let s = if strong.contains(&(i, j)) || strong.contains(&(j, i)) {
                    1.0
                } else {
                    0.1
                };
                pairs.push(((i, j), s));
            }
        }
        scored(n, &pairs)
    }

    #[test]
    fn conventional_tree_rooted_at_c() {
        let edges = all_pairs_with(6, &[(C, A), (C, F), (A, E), (C, D), (D, B)]);
        let tree = learn_tan_structure_rooted(&edges, 6, C).unwrap();
        assert_eq!(tree.parent(A), Some(C));
        assert_eq!(tree.parent(F), Some(C));
        assert_eq!(tree.parent(E), Some(A));
        assert_eq!(tree.parent(D), Some(C));
        assert_eq!(tree.parent(B), Some(D));
        assert_eq!(tree.roots(), vec![C]);
        assert_eq!(tree_total_score(&tree, &edges).unwrap(), 5.0);

        let seeded = learn_tan_structure(&edges, 6, 77).unwrap();
        assert_eq!(seeded.skeleton(), tree.skeleton());
        assert_eq!(seeded, learn_tan_structure(&edges, 6, 77).unwrap());
    }

    #[test]
    fn degenerate_sizes() {
        let tree = learn_tan_structure(&[], 1, 0).unwrap();
        assert_eq!(tree.roots(), vec![0]);
        assert_eq!(tree_total_score(&tree, &[]).unwrap(), 0.0);
        assert!(matches!(learn_tan_structure(&[], 0, 0), Err(Error::EmptyFeatureSet)));
    }

    #[test]
    fn unknown_edge_is_reported() {
        let tree = DependencyTree::from_parents(vec![None, Some(0), Some(1)]).unwrap();
        let edges = scored(3, &[((0, 1), 0.4)]);
        assert!(matches!(tree_total_score(&tree, &edges), Err(Error::UnknownEdge(1, 2))));
    }
}
