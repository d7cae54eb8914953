//! Cross-validated experiments and the statistics used to compare methods.

use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::bayes::fit;
use crate::chowliu::learn_tan_structure;
use crate::dataset::{stratified_folds, Dataset};
use crate::error::{Error, Result};
use crate::exec::{derive_seed, Exec};
use crate::hie_mst::hie_mst;
use crate::hie_mst_lite::hie_mst_lite;
use crate::hierarchy::FeatureDag;
use crate::infostats::rank_edges;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    /// Records one prediction; class 1 is the positive class.
    pub fn record(&mut self, truth: u8, predicted: u8) {
        match (truth, predicted) {
            (1, 1) => self.tp += 1,
            (1, _) => self.fn_ += 1,
            (_, 1) => self.fp += 1,
            _ => self.tn += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn merge(&self, other: &ConfusionCounts) -> ConfusionCounts {
        ConfusionCounts {
            tp: self.tp + other.tp,
            fp: self.fp + other.fp,
            tn: self.tn + other.tn,
            fn_: self.fn_ + other.fn_,
        }
    }
}

/// Geometric mean of sensitivity and specificity.
pub fn gmean(c: &ConfusionCounts) -> Result<f64> {
    if c.tp + c.fn_ == 0 {
        return Err(Error::UndefinedClassSide(1));
    }
    if c.tn + c.fp == 0 {
        return Err(Error::UndefinedClassSide(0));
    }
    let sensitivity = c.tp as f64 / (c.tp + c.fn_) as f64;
    let specificity = c.tn as f64 / (c.tn + c.fp) as f64;
    Ok((sensitivity * specificity).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Tan,
    HieTan,
    HieTanLite,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Tan, Method::HieTan, Method::HieTanLite];

    pub fn name(self) -> &'static str {
        match self {
            Method::Tan => "tan",
            Method::HieTan => "hie-tan",
            Method::HieTanLite => "hie-tan-lite",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-dataset tied ranks (1 = highest GMean) and their averages.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankTable {
    pub methods: Vec<String>,
    pub gmeans: Vec<Vec<f64>>,
    pub ranks: Vec<Vec<f64>>,
    pub average_ranks: Vec<f64>,
    pub wins: Vec<usize>,
}

impl RankTable {
    pub fn n_datasets(&self) -> usize {
        self.gmeans.len()
    }

    /// A table carrying only average ranks, for applying the post-hoc test
    /// to published summaries.
    pub fn from_average_ranks(methods: Vec<String>, average_ranks: Vec<f64>, n_datasets: usize) -> Self {
        let k = methods.len();
        Self {
            methods,
            gmeans: vec![Vec::new(); n_datasets],
            ranks: vec![Vec::new(); n_datasets],
            average_ranks,
            wins: vec![0; k],
        }
    }
}

/// Ranks `gmeans[dataset][method]`; tied methods share the mean of the
/// ranks they span. Every tied best method counts a win.
pub fn average_ranks(methods: &[String], gmeans: &[Vec<f64>]) -> Result<RankTable> {
    let k = methods.len();
    if k == 0 || gmeans.is_empty() {
        return Err(Error::IncompleteTable("no methods or no datasets".into()));
    }
    let mut ranks = Vec::with_capacity(gmeans.len());
    let mut wins = vec![0; k];
    for (d, row) in gmeans.iter().enumerate() {
        if row.len() != k || row.iter().any(|v| v.is_nan()) {
            return Err(Error::IncompleteTable(format!("dataset {d} has a missing value")));
        }
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| row[b].total_cmp(&row[a]));
        let mut r = vec![0.0; k];
        let mut start = 0;
        while start < k {
            let mut end = start + 1;
            while end < k && row[order[end]] == row[order[start]] {
                end += 1;
            }
            // positions start..end hold ranks start+1..=end
            let shared = (start + 1 + end) as f64 / 2.0;
            for &m in &order[start..end] {
                r[m] = shared;
            }
            if start == 0 {
                for &m in &order[start..end] {
                    wins[m] += 1;
                }
            }
            start = end;
        }
        ranks.push(r);
    }
    let n = gmeans.len() as f64;
    let average_ranks = (0..k)
        .map(|m| ranks.iter().map(|r| r[m]).sum::<f64>() / n)
        .collect();
    Ok(RankTable {
        methods: methods.to_vec(),
        gmeans: gmeans.to_vec(),
        ranks,
        average_ranks,
        wins,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HolmRow {
    pub method: String,
    pub average_rank: f64,
    pub z: f64,
    pub p_value: f64,
    pub adjusted_alpha: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HolmTable {
    pub control: String,
    pub alpha: f64,
    pub friedman_statistic: f64,
    pub friedman_p_value: f64,
    /// Comparisons against the control, by ascending p-value.
    pub rows: Vec<HolmRow>,
}

/// Friedman test over average ranks, then Holm's step-down comparison of
/// the best-ranked method against every other.
///
/// `z = (R_i - R_control) / sqrt(k (k + 1) / (6 N))` with the one-sided
/// p-value `1 - Phi(z)`; the i-th smallest p-value (0-based) is compared
/// with `alpha / (m - i)`.
pub fn friedman_holm(table: &RankTable, alpha: f64) -> Result<HolmTable> {
    let k = table.methods.len();
    let n = table.n_datasets();
    if k < 2 || n < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 methods and 2 datasets, got {k} and {n}"
        )));
    }
    if table.average_ranks.len() != k {
        return Err(Error::IncompleteTable("average rank per method".into()));
    }
    let r = &table.average_ranks;
    let (lo, hi) = r
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if hi - lo < 1e-12 {
        return Err(Error::DegenerateRanks);
    }
    let (kf, nf) = (k as f64, n as f64);
    let sum_sq: f64 = r.iter().map(|v| v * v).sum();
    let friedman_statistic = 12.0 * nf / (kf * (kf + 1.0)) * (sum_sq - kf * (kf + 1.0).powi(2) / 4.0);
    let chi = ChiSquared::new(kf - 1.0).expect("k >= 2");
    let friedman_p_value = 1.0 - chi.cdf(friedman_statistic.max(0.0));

    let control = (0..k)
        .min_by(|&a, &b| r[a].total_cmp(&r[b]))
        .expect("k >= 2");
    let se = (kf * (kf + 1.0) / (6.0 * nf)).sqrt();
    let normal = Normal::standard();
    let mut rows: Vec<HolmRow> = (0..k)
        .filter(|&m| m != control)
        .map(|m| {
            let z = (r[m] - r[control]) / se;
            HolmRow {
                method: table.methods[m].clone(),
                average_rank: r[m],
                z,
                p_value: normal.sf(z),
                adjusted_alpha: 0.0,
                significant: false,
            }
        })
        .collect();
    rows.sort_by(|a, b| a.p_value.total_cmp(&b.p_value));
    let m = rows.len();
    let mut still_rejecting = true;
    for (i, row) in rows.iter_mut().enumerate() {
        row.adjusted_alpha = alpha / (m - i) as f64;
        still_rejecting &= row.p_value <= row.adjusted_alpha;
        row.significant = still_rejecting;
    }
    Ok(HolmTable {
        control: table.methods[control].clone(),
        alpha,
        friedman_statistic,
        friedman_p_value,
        rows,
    })
}

/// How often each feature survives into a lazily learned tree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FeatureUsageReport {
    pub feature_names: Vec<String>,
    pub n_instances: u64,
    /// Test instances whose tree kept the feature as a node.
    pub freq_of_selection: Vec<u64>,
    /// Tree edges containing the feature, summed over test instances.
    pub freq_in_edges: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UsageCriterion {
    Selection,
    Edges,
}

impl FeatureUsageReport {
    pub fn new(feature_names: Vec<String>) -> Self {
        let n = feature_names.len();
        Self {
            feature_names,
            n_instances: 0,
            freq_of_selection: vec![0; n],
            freq_in_edges: vec![0; n],
        }
    }

    pub fn merge(&mut self, other: &FeatureUsageReport) {
        self.n_instances += other.n_instances;
        for (a, b) in self.freq_of_selection.iter_mut().zip(&other.freq_of_selection) {
            *a += b;
        }
        for (a, b) in self.freq_in_edges.iter_mut().zip(&other.freq_in_edges) {
            *a += b;
        }
    }

    /// `(feature, count)` by descending count, ties by feature index, omitting
    /// zero counts; at most `top` rows.
    pub fn ranked(&self, criterion: UsageCriterion, top: Option<usize>) -> Vec<(usize, u64)> {
        let counts = match criterion {
            UsageCriterion::Selection => &self.freq_of_selection,
            UsageCriterion::Edges => &self.freq_in_edges,
        };
        let mut rows: Vec<(usize, u64)> = counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(f, &c)| (f, c))
            .collect();
        rows.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        if let Some(top) = top {
            rows.truncate(top);
        }
        rows
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CvConfig {
    pub folds: usize,
    pub seed: u64,
    pub smoothing: f64,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            folds: 10,
            seed: 0,
            smoothing: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodResult {
    pub method: Method,
    pub folds: Vec<ConfusionCounts>,
    /// `None` where the test fold lacks one of the classes.
    pub fold_gmeans: Vec<Option<f64>>,
    /// Mean of the defined per-fold GMeans.
    pub gmean: Option<f64>,
    /// Learned `(parent, child)` edges per fold; empty for the lazy method,
    /// whose trees are per instance.
    pub fold_trees: Vec<Vec<(usize, usize)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvResult {
    pub config: CvConfig,
    pub n_instances: usize,
    pub fold_of: Vec<usize>,
    pub methods: Vec<MethodResult>,
    pub usage: Option<FeatureUsageReport>,
}

impl CvResult {
    pub fn method(&self, m: Method) -> Option<&MethodResult> {
        self.methods.iter().find(|r| r.method == m)
    }
}

struct FoldOutcome {
    counts: Vec<ConfusionCounts>,
    trees: Vec<Vec<(usize, usize)>>,
    usage: FeatureUsageReport,
}

/// Stratified k-fold cross-validation of `methods`.
///
/// Edge ranking runs once per training split and is shared by all methods.
/// Seeds: fold assignment `derive(seed, [0])`; the TAN root and the
/// residual orientation of the constrained tree share `derive(seed, [1,
/// fold])`; the lazy tree of test instance `i` uses `derive(seed, [3, fold,
/// i])`.
pub fn run_cv_experiment(
    ds: &Dataset,
    dag: &FeatureDag,
    methods: &[Method],
    config: &CvConfig,
    exec: Exec,
) -> Result<CvResult> {
    if dag.n_features() != ds.n_features() {
        return Err(Error::DimensionMismatch {
            expected: ds.n_features(),
            found: dag.n_features(),
        });
    }
    let folds = stratified_folds(ds, config.folds, derive_seed(config.seed, &[0]))?;
    let n = ds.n_features();
    let outcomes = exec.try_map_range(config.folds, |fold| -> Result<FoldOutcome> {
        let train = ds.subset(&folds.train_indices(fold));
        let test_idx = folds.test_indices(fold);
        let edges = rank_edges(&train, dag, config.smoothing, exec)?;
        let all: Vec<usize> = (0..n).collect();
        let tree_seed = derive_seed(config.seed, &[1, fold as u64]);
        let mut usage = FeatureUsageReport::new(ds.feature_names().to_vec());
        let mut counts = Vec::with_capacity(methods.len());
        let mut trees = Vec::with_capacity(methods.len());
        for &method in methods {
            let mut c = ConfusionCounts::default();
            match method {
                Method::Tan | Method::HieTan => {
                    let tree = if method == Method::Tan {
                        learn_tan_structure(&edges, n, tree_seed)?
                    } else {
                        hie_mst(&edges, dag, n, tree_seed)?
                    };
                    let clf = fit(&train, &tree, &all, config.smoothing)?;
                    for &i in &test_idx {
                        c.record(ds.labels()[i], clf.predict(ds.row(i))?.label);
                    }
                    trees.push(tree.edges());
                }
                Method::HieTanLite => {
                    let per_instance = exec.try_map_range(test_idx.len(), |t| -> Result<_> {
                        let i = test_idx[t];
                        let seed = derive_seed(config.seed, &[3, fold as u64, i as u64]);
                        let lite = hie_mst_lite(&edges, dag, ds.row(i), n, seed)?;
                        let clf = fit(&train, &lite.tree, &lite.active_features, config.smoothing)?;
                        Ok((clf.predict(ds.row(i))?.label, lite))
                    })?;
                    for (&i, (label, lite)) in test_idx.iter().zip(&per_instance) {
                        c.record(ds.labels()[i], *label);
                        usage.n_instances += 1;
                        for &f in &lite.active_features {
                            usage.freq_of_selection[f] += 1;
                        }
                        for (p, ch) in lite.tree.edges() {
                            usage.freq_in_edges[p] += 1;
                            usage.freq_in_edges[ch] += 1;
                        }
                    }
                    trees.push(Vec::new());
                }
            }
            counts.push(c);
        }
        Ok(FoldOutcome {
            counts,
            trees,
            usage,
        })
    })?;

    let mut results = Vec::with_capacity(methods.len());
    for (m, &method) in methods.iter().enumerate() {
        let fold_counts: Vec<ConfusionCounts> = outcomes.iter().map(|o| o.counts[m]).collect();
        let fold_gmeans: Vec<Option<f64>> = fold_counts.iter().map(|c| gmean(c).ok()).collect();
        let defined: Vec<f64> = fold_gmeans.iter().flatten().copied().collect();
        let mean = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
        results.push(MethodResult {
            method,
            folds: fold_counts,
            fold_gmeans,
            gmean: mean,
            fold_trees: outcomes.iter().map(|o| o.trees[m].clone()).collect(),
        });
    }
    let usage = methods.contains(&Method::HieTanLite).then(|| {
        let mut total = FeatureUsageReport::new(ds.feature_names().to_vec());
        for o in &outcomes {
            total.merge(&o.usage);
        }
        total
    });

    Ok(CvResult {
        config: *config,
        n_instances: ds.n_instances(),
        fold_of: folds.fold_of,
        methods: results,
        usage,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("m{i}")).collect()
    }

    #[test]
    fn gmean_examples() {
        let c = |tp, fn_, tn, fp| ConfusionCounts { tp, fp, tn, fn_ };
        assert_eq!(gmean(&c(5, 0, 5, 0)).unwrap(), 1.0);
        assert_eq!(gmean(&c(5, 0, 0, 5)).unwrap(), 0.0);
        assert!((gmean(&c(4, 1, 3, 3)).unwrap() - 0.632_455_532_033_675_9).abs() < 1e-15);
        assert!(matches!(gmean(&c(0, 0, 3, 1)), Err(Error::UndefinedClassSide(1))));
        assert!(matches!(gmean(&c(2, 1, 0, 0)), Err(Error::UndefinedClassSide(0))));
    }

    #[test]
    fn record_counts() {
        let mut c = ConfusionCounts::default();
        for (t, p) in [(1, 1), (1, 0), (0, 1), (0, 0), (0, 0)] {
            c.record(t, p);
        }
        assert_eq!(c, ConfusionCounts { tp: 1, fn_: 1, fp: 1, tn: 2 });
        assert_eq!(serde_json::to_string(&c).unwrap(), r#"{"tp":1,"fp":1,"tn":2,"fn":1}"#);
    }

    #[test]
    fn tied_best_share_rank() {
        let t = average_ranks(&names(3), &[vec![0.9, 0.9, 0.4]]).unwrap();
        assert_eq!(t.ranks[0], vec![1.5, 1.5, 3.0]);
        assert_eq!(t.wins, vec![1, 1, 0]);
        let t = average_ranks(&names(4), &[vec![0.1, 0.7, 0.3, 0.9]]).unwrap();
        assert_eq!(t.ranks[0], vec![4.0, 2.0, 3.0, 1.0]);
        assert!(matches!(
            average_ranks(&names(2), &[vec![0.1]]),
            Err(Error::IncompleteTable(_))
        ));
    }

    #[test]
    fn holm_thresholds_for_six_methods() {
        let t = RankTable::from_average_ranks(
            names(6),
            vec![1.89, 2.59, 3.43, 3.71, 4.52, 4.86],
            28,
        );
        let h = friedman_holm(&t, 0.05).unwrap();
        assert_eq!(h.control, "m0");
        let sci = |v: f64| format!("{v:.2E}");
        let alphas: Vec<String> = h.rows.iter().map(|r| sci(r.adjusted_alpha)).collect();
        assert_eq!(alphas, ["1.00E-2", "1.25E-2", "1.67E-2", "2.50E-2", "5.00E-2"]);
        // Published one-sided p-values for the same average ranks.
        let p: Vec<String> = h.rows.iter().map(|r| sci(r.p_value)).collect();
        assert_eq!(p, ["1.43E-9", "7.20E-8", "1.36E-4", "1.04E-3", "8.08E-2"]);
        let sig: Vec<bool> = h.rows.iter().map(|r| r.significant).collect();
        assert_eq!(sig, [true, true, true, true, false]);
    }

    #[test]
    fn identical_ranks_are_degenerate() {
        let t = average_ranks(&names(2), &[vec![0.5, 0.5], vec![0.7, 0.7]]).unwrap();
        assert!(matches!(friedman_holm(&t, 0.05), Err(Error::DegenerateRanks)));
    }

    #[test]
    fn usage_ranking() {
        let mut r = FeatureUsageReport::new(names(4));
        r.freq_of_selection = vec![3, 5, 0, 5];
        r.freq_in_edges = vec![1, 2, 0, 7];
        assert_eq!(r.ranked(UsageCriterion::Selection, None), vec![(1, 5), (3, 5), (0, 3)]);
        assert_eq!(r.ranked(UsageCriterion::Edges, Some(1)), vec![(3, 7)]);
        assert!(FeatureUsageReport::new(names(2)).ranked(UsageCriterion::Edges, None).is_empty());
    }
}
