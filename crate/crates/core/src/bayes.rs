//! Parameter estimation and prediction for tree-augmented classifiers.
//! The class is a parent of every feature; tree parents add one more.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::tree::DependencyTree;

/// `P(x | y)` for roots (rows indexed by `y`) or `P(x | y, parent)` for
/// parented features (rows indexed by `2 * y + parent_value`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cpt {
    pub feature: usize,
    pub parent: Option<usize>,
    pub rows: Vec<[f64; 2]>,
}

impl Cpt {
    #[inline]
    fn row_index(&self, y: usize, instance: &[u8]) -> usize {
        match self.parent {
            Some(p) => 2 * y + instance[p] as usize,
            None => y,
        }
    }

    #[inline]
    pub fn prob(&self, y: usize, instance: &[u8]) -> f64 {
        self.rows[self.row_index(y, instance)][instance[self.feature] as usize]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedClassifier {
    pub feature_names: Vec<String>,
    pub tree: DependencyTree,
    pub active_features: Vec<usize>,
    pub prior: [f64; 2],
    pub cpts: Vec<Cpt>,
    pub smoothing: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub label: u8,
    pub log_posterior: [f64; 2],
}

/// Additive-smoothed ratio; an empty row without smoothing falls back to a
/// uniform distribution.
fn smoothed(count: u64, total: u64, smoothing: f64, cells: f64) -> f64 {
    let denom = total as f64 + cells * smoothing;
    if denom == 0.0 {
        1.0 / cells
    } else {
        (count as f64 + smoothing) / denom
    }
}

/// Estimates the prior and one CPT per active feature from `ds`.
pub fn fit(
    ds: &Dataset,
    tree: &DependencyTree,
    active_features: &[usize],
    smoothing: f64,
) -> Result<FittedClassifier> {
    let n_features = ds.n_features();
    if ds.n_instances() == 0 {
        return Err(Error::EmptyTrainingSet);
    }
    if tree.n_features() != n_features {
        return Err(Error::DimensionMismatch {
            expected: n_features,
            found: tree.n_features(),
        });
    }
    if smoothing < 0.0 || !smoothing.is_finite() {
        return Err(Error::InvalidArgument(format!("smoothing {smoothing} must be >= 0")));
    }
    let mut is_active = vec![false; n_features];
    for &f in active_features {
        if f >= n_features {
            return Err(Error::IndexOutOfRange {
                index: f,
                len: n_features,
            });
        }
        is_active[f] = true;
    }
    if let Some((p, c)) = tree.edges().into_iter().find(|&(p, c)| !is_active[p] || !is_active[c]) {
        return Err(Error::InvalidArgument(format!(
            "tree edge {p} -> {c} touches an inactive feature"
        )));
    }

    let class_counts = ds.class_counts();
    let n = ds.n_instances() as u64;
    let prior = [0, 1].map(|y| smoothed(class_counts[y] as u64, n, smoothing, 2.0));

    let mut active: Vec<usize> = (0..n_features).filter(|&f| is_active[f]).collect();
    active.dedup();
    let cpts = active
        .iter()
        .map(|&f| {
            let parent = tree.parent(f);
            let n_rows = if parent.is_some() { 4 } else { 2 };
            let mut counts = vec![[0u64; 2]; n_rows];
            for (row, &y) in ds.rows().zip(ds.labels()) {
                let r = match parent {
                    Some(p) => 2 * y as usize + row[p] as usize,
                    None => y as usize,
                };
                counts[r][row[f] as usize] += 1;
            }
            let rows = counts
                .iter()
                .map(|c| {
                    let total = c[0] + c[1];
                    [
                        smoothed(c[0], total, smoothing, 2.0),
                        smoothed(c[1], total, smoothing, 2.0),
                    ]
                })
                .collect();
            Cpt {
                feature: f,
                parent,
                rows,
            }
        })
        .collect();

    Ok(FittedClassifier {
        feature_names: ds.feature_names().to_vec(),
        tree: tree.clone(),
        active_features: active,
        prior,
        cpts,
        smoothing,
    })
}

impl FittedClassifier {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Log-space posterior (up to a shared constant) and its argmax; ties go
    /// to class 0.
    pub fn predict(&self, instance: &[u8]) -> Result<Prediction> {
        if instance.len() != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                found: instance.len(),
            });
        }
        let mut log_posterior = [self.prior[0].ln(), self.prior[1].ln()];
        for cpt in &self.cpts {
            for (y, lp) in log_posterior.iter_mut().enumerate() {
                *lp += cpt.prob(y, instance).ln();
            }
        }
        let label = u8::from(log_posterior[1] > log_posterior[0]);
        Ok(Prediction {
            label,
            log_posterior,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let clf: FittedClassifier = serde_json::from_str(text)?;
        if clf.tree.n_features() != clf.n_features() {
            return Err(Error::DimensionMismatch {
                expected: clf.n_features(),
                found: clf.tree.n_features(),
            });
        }
        for cpt in &clf.cpts {
            let want = if cpt.parent.is_some() { 4 } else { 2 };
            if cpt.feature >= clf.n_features() || cpt.rows.len() != want {
                return Err(Error::InvalidArgument(format!(
                    "malformed table for feature {}",
                    cpt.feature
                )));
            }
        }
        Ok(clf)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(rows: &[Vec<u8>], labels: &[u8]) -> Dataset {
        Dataset::from_rows(rows, labels).unwrap()
    }

    #[test]
    fn balanced_prior_without_smoothing() {
        let d = ds(&[vec![0], vec![1], vec![1], vec![0]], &[0, 1, 0, 1]);
        let clf = fit(&d, &DependencyTree::empty(1), &[0], 0.0).unwrap();
        assert_eq!(clf.prior, [0.5, 0.5]);
    }

    #[test]
    fn hand_computed_parented_cpt() {
        // Feature 1 has parent 0.
        let rows = vec![vec![1, 1], vec![1, 0], vec![0, 0], vec![1, 1]];
        let labels = vec![1, 1, 0, 0];
        let tree = DependencyTree::from_parents(vec![None, Some(0)]).unwrap();
        let clf = fit(&ds(&rows, &labels), &tree, &[0, 1], 1.0).unwrap();
        let cpt = &clf.cpts[1];
        assert_eq!(cpt.parent, Some(0));
        // Row (y=0, parent=0): one instance with x=0 -> (1+1)/(1+2), (0+1)/(1+2).
        let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
        assert!(close(cpt.rows[0][0], 2.0 / 3.0) && close(cpt.rows[0][1], 1.0 / 3.0));
        // Row (y=0, parent=1): one instance with x=1.
        assert!(close(cpt.rows[1][1], 2.0 / 3.0));
        // Row (y=1, parent=0): no instances.
        assert!(close(cpt.rows[2][1], 1.0 / 2.0));
        // Row (y=1, parent=1): x=1 once, x=0 once -> 2/4 each.
        assert!(close(cpt.rows[3][0], 0.5) && close(cpt.rows[3][1], 0.5));
        // Root feature 0: y=0 has x=(0,1), y=1 has x=(1,1).
        assert!(close(clf.cpts[0].rows[1][1], 3.0 / 4.0));
        for c in &clf.cpts {
            for r in &c.rows {
                assert!((r[0] + r[1] - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn empty_active_set_uses_prior() {
        let d = ds(&[vec![0, 1], vec![1, 1], vec![1, 0]], &[1, 1, 0]);
        let clf = fit(&d, &DependencyTree::empty(2), &[], 1.0).unwrap();
        assert!(clf.cpts.is_empty());
        assert_eq!(clf.predict(&[0, 0]).unwrap().label, 1);
    }

    #[test]
    fn ties_go_to_class_zero() {
        let d = ds(&[vec![0], vec![1]], &[0, 1]);
        let clf = fit(&d, &DependencyTree::empty(1), &[], 0.0).unwrap();
        assert_eq!(clf.predict(&[1]).unwrap().label, 0);
    }

    #[test]
    fn error_paths() {
        let empty = Dataset::new(vec!["a".into()], vec![], vec![]).unwrap();
        assert!(matches!(
            fit(&empty, &DependencyTree::empty(1), &[0], 1.0),
            Err(Error::EmptyTrainingSet)
        ));
        let d = ds(&[vec![0, 1]], &[1]);
        let tree = DependencyTree::from_parents(vec![None, Some(0)]).unwrap();
        assert!(fit(&d, &tree, &[1], 1.0).is_err());
        let clf = fit(&d, &tree, &[0, 1], 1.0).unwrap();
        assert!(matches!(clf.predict(&[0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn constant_training_features_do_not_break_prediction() {
        let rows = vec![vec![1, 0, 1]; 6];
        let labels = vec![0, 1, 0, 1, 1, 1];
        let tree = DependencyTree::from_parents(vec![None, Some(0), Some(1)]).unwrap();
        let d = ds(&rows, &labels);
        let clf = fit(&d, &tree, &[0, 1, 2], 1.0).unwrap();
        for row in d.rows() {
            let p = clf.predict(row).unwrap();
            assert!(p.log_posterior.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn json_round_trip_is_exact() {
        let rows = vec![vec![1, 1, 0], vec![1, 0, 1], vec![0, 0, 0], vec![1, 1, 1], vec![0, 1, 1]];
        let labels = vec![1, 1, 0, 0, 1];
        let tree = DependencyTree::from_parents(vec![None, Some(0), Some(0)]).unwrap();
        let clf = fit(&ds(&rows, &labels), &tree, &[0, 1, 2], 0.7).unwrap();
        let back = FittedClassifier::from_json(&clf.to_json().unwrap()).unwrap();
        assert_eq!(back, clf);
        for c in back.cpts.iter().zip(&clf.cpts) {
            for (a, b) in c.0.rows.iter().zip(&c.1.rows) {
                assert_eq!(a[0].to_bits(), b[0].to_bits());
                assert_eq!(a[1].to_bits(), b[1].to_bits());
            }
        }
    }
}
