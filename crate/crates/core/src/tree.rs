use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Single-parent dependency structure over features. The class variable is
/// an implicit parent of every feature and is not stored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Option<usize>>", into = "Vec<Option<usize>>")]
pub struct DependencyTree {
    parent_of: Vec<Option<usize>>,
}

impl DependencyTree {
    /// A forest of isolated roots.
    pub fn empty(n_features: usize) -> Self {
        Self {
            parent_of: vec![None; n_features],
        }
    }

    /// Validates indices and acyclicity of the parent relation.
    pub fn from_parents(parent_of: Vec<Option<usize>>) -> Result<Self> {
        let n = parent_of.len();
        for (v, p) in parent_of.iter().enumerate() {
            if let Some(p) = *p {
                if p >= n {
                    return Err(Error::IndexOutOfRange { index: p, len: n });
                }
                if p == v {
                    return Err(Error::InvalidArgument(format!("feature {v} is its own parent")));
                }
            }
        }
        // Walking up from any node must reach a root within n steps.
        for start in 0..n {
            let mut v = start;
            let mut steps = 0;
            while let Some(p) = parent_of[v] {
                v = p;
                steps += 1;
                if steps > n {
                    return Err(Error::InvalidArgument(format!(
                        "parent relation has a cycle through feature {start}"
                    )));
                }
            }
        }
        Ok(Self { parent_of })
    }

    pub fn n_features(&self) -> usize {
        self.parent_of.len()
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        self.parent_of[v]
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parent_of
    }

    pub fn roots(&self) -> Vec<usize> {
        (0..self.n_features())
            .filter(|&v| self.parent_of[v].is_none())
            .collect()
    }

    /// `(parent, child)` pairs ordered by child.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.parent_of
            .iter()
            .enumerate()
            .filter_map(|(c, p)| p.map(|p| (p, c)))
            .collect()
    }

    /// Undirected edges as sorted `(min, max)` pairs.
    pub fn skeleton(&self) -> Vec<(usize, usize)> {
        let mut s: Vec<_> = self
            .edges()
            .into_iter()
            .map(|(p, c)| (p.min(c), p.max(c)))
            .collect();
        s.sort_unstable();
        s
    }

    pub fn n_edges(&self) -> usize {
        self.parent_of.iter().flatten().count()
    }

    /// Features that are an endpoint of at least one edge.
    pub fn covered(&self) -> Vec<usize> {
        let mut seen = vec![false; self.n_features()];
        for (p, c) in self.edges() {
            seen[p] = true;
            seen[c] = true;
        }
        (0..seen.len()).filter(|&v| seen[v]).collect()
    }
}

impl TryFrom<Vec<Option<usize>>> for DependencyTree {
    type Error = Error;

    fn try_from(parent_of: Vec<Option<usize>>) -> Result<Self> {
        Self::from_parents(parent_of)
    }
}

impl From<DependencyTree> for Vec<Option<usize>> {
    fn from(t: DependencyTree) -> Self {
        t.parent_of
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_cycles() {
        assert!(DependencyTree::from_parents(vec![Some(1), Some(0)]).is_err());
        assert!(DependencyTree::from_parents(vec![Some(0)]).is_err());
        assert!(DependencyTree::from_parents(vec![Some(3)]).is_err());
        let t = DependencyTree::from_parents(vec![None, Some(0), Some(1), None]).unwrap();
        assert_eq!(t.roots(), vec![0, 3]);
        assert_eq!(t.edges(), vec![(0, 1), (1, 2)]);
        assert_eq!(t.covered(), vec![0, 1, 2]);
    }

    #[test]
    fn json_rejects_cyclic_parents() {
        assert!(serde_json::from_str::<DependencyTree>("[1,0]").is_err());
        let t: DependencyTree = serde_json::from_str("[null,0]").unwrap();
        assert_eq!(t.parent(1), Some(0));
    }
}
