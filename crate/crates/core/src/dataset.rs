//! Binary instance data: CSV loading, hierarchy propagation checks,
//! stratified folds and a synthetic generator.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hierarchy::FeatureDag;

pub const CLASS_COLUMN: &str = "class";

/// Instance-major binary feature matrix with binary class labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    feature_names: Vec<String>,
    class_names: [String; 2],
    values: Vec<u8>,
    labels: Vec<u8>,
}

impl Dataset {
    pub fn new(feature_names: Vec<String>, values: Vec<u8>, labels: Vec<u8>) -> Result<Self> {
        let n_features = feature_names.len();
        if values.len() != n_features * labels.len() {
            return Err(Error::DimensionMismatch {
                expected: n_features * labels.len(),
                found: values.len(),
            });
        }
        if let Some(v) = values.iter().chain(&labels).find(|&&v| v > 1) {
            return Err(Error::InvalidArgument(format!("non-binary value {v}")));
        }
        Ok(Self {
            feature_names,
            class_names: ["0".into(), "1".into()],
            values,
            labels,
        })
    }

    /// Builds a dataset from rows, naming features `f0, f1, ..`.
    pub fn from_rows(rows: &[Vec<u8>], labels: &[u8]) -> Result<Self> {
        let n_features = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(n_features * rows.len());
        for row in rows {
            if row.len() != n_features {
                return Err(Error::DimensionMismatch {
                    expected: n_features,
                    found: row.len(),
                });
            }
            values.extend_from_slice(row);
        }
        if labels.len() != rows.len() {
            return Err(Error::DimensionMismatch {
                expected: rows.len(),
                found: labels.len(),
            });
        }
        let names = (0..n_features).map(|i| format!("f{i}")).collect();
        Self::new(names, values, labels.to_vec())
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_instances(&self) -> usize {
        self.labels.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn class_names(&self) -> &[String; 2] {
        &self.class_names
    }

    pub fn row(&self, instance: usize) -> &[u8] {
        let n = self.n_features();
        &self.values[instance * n..(instance + 1) * n]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[u8]> + '_ {
        (0..self.n_instances()).map(move |i| self.row(i))
    }

    pub fn value(&self, instance: usize, feature: usize) -> u8 {
        self.values[instance * self.n_features() + feature]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn class_counts(&self) -> [usize; 2] {
        let ones = self.labels.iter().filter(|&&y| y == 1).count();
        [self.labels.len() - ones, ones]
    }

    /// The instances at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut values = Vec::with_capacity(indices.len() * self.n_features());
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        Dataset {
            feature_names: self.feature_names.clone(),
            class_names: self.class_names.clone(),
            values,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    fn check_dag(&self, dag: &FeatureDag) -> Result<()> {
        if dag.n_features() == self.n_features() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.n_features(),
                found: dag.n_features(),
            })
        }
    }
}

fn parse_bit(field: &str, line: u64, column: usize) -> Result<u8> {
    match field {
        "0" => Ok(0),
        "1" => Ok(1),
        other => Err(Error::NonBinaryValue {
            line,
            column,
            value: other.to_string(),
        }),
    }
}

/// Loads a CSV with header `f1,..,fn,class` and `0`/`1` cells.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .quoting(false)
        .from_reader(file);
    let header = reader
        .headers()
        .map_err(|e| parse_err(e.position().map_or(1, |p| p.line()), e.to_string()))?
        .clone();
    let names: Vec<String> = header.iter().map(str::to_string).collect();
    match names.last() {
        Some(last) if last == CLASS_COLUMN => {}
        _ => return Err(Error::MissingClassColumn),
    }
    let n_features = names.len() - 1;

    let mut values = Vec::new();
    let mut labels = Vec::new();
    for record in reader.records() {
        let record =
            record.map_err(|e| parse_err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        for (column, field) in record.iter().take(n_features).enumerate() {
            values.push(parse_bit(field, line, column + 1)?);
        }
        labels.push(parse_bit(&record[n_features], line, n_features + 1)?);
    }
    let mut feature_names = names;
    feature_names.pop();
    Dataset::new(feature_names, values, labels)
}

pub fn save_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        let mut header = ds.feature_names.join(",");
        if !header.is_empty() {
            header.push(',');
        }
        header.push_str(CLASS_COLUMN);
        writeln!(out, "{header}")?;
        let mut line = String::with_capacity(2 * ds.n_features() + 2);
        for (row, &y) in ds.rows().zip(&ds.labels) {
            line.clear();
            for &v in row {
                line.push(if v == 1 { '1' } else { '0' });
                line.push(',');
            }
            line.push(if y == 1 { '1' } else { '0' });
            writeln!(out, "{line}")?;
        }
        out.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

/// An instance where `feature` is 1 but its ancestor `ancestor` is 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub instance: usize,
    pub feature: usize,
    pub ancestor: usize,
}

/// Every (instance, feature, ancestor) triple breaking upward propagation of 1s.
pub fn validate_propagation(ds: &Dataset, dag: &FeatureDag) -> Result<Vec<Violation>> {
    ds.check_dag(dag)?;
    let mut out = Vec::new();
    for (instance, row) in ds.rows().enumerate() {
        for feature in (0..row.len()).filter(|&f| row[f] == 1) {
            for ancestor in dag.ancestors(feature).ones() {
                if row[ancestor] == 0 {
                    out.push(Violation {
                        instance,
                        feature,
                        ancestor,
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Sets every ancestor of a 1-valued feature to 1. Idempotent.
pub fn repair_propagation(ds: &Dataset, dag: &FeatureDag) -> Result<Dataset> {
    ds.check_dag(dag)?;
    let mut repaired = ds.clone();
    let n = ds.n_features();
    for row in repaired.values.chunks_mut(n.max(1)) {
        propagate_row(row, dag);
    }
    Ok(repaired)
}

fn propagate_row(row: &mut [u8], dag: &FeatureDag) {
    let ones: Vec<usize> = (0..row.len()).filter(|&f| row[f] == 1).collect();
    for f in ones {
        for a in dag.ancestors(f).ones() {
            row[a] = 1;
        }
    }
}

/// Fold index per instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub fold_of: Vec<usize>,
}

impl FoldAssignment {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len())
            .filter(|&i| self.fold_of[i] == fold)
            .collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len())
            .filter(|&i| self.fold_of[i] != fold)
            .collect()
    }
}

/// Per-class seeded shuffle, then round-robin over folds. The round-robin
/// position carries over from class 0 to class 1 so total fold sizes also
/// stay within one of each other.
pub fn stratified_folds(ds: &Dataset, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 folds, got {k}")));
    }
    let counts = ds.class_counts();
    if let Some(y) = (0..2).find(|&y| counts[y] == 0) {
        return Err(Error::TooFewInstances(format!("class {y} has no instances")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of = vec![0; ds.n_instances()];
    let mut next = 0;
    for y in 0..2u8 {
        let mut members: Vec<usize> = (0..ds.n_instances())
            .filter(|&i| ds.labels[i] == y)
            .collect();
        members.shuffle(&mut rng);
        for i in members {
            fold_of[i] = next;
            next = (next + 1) % k;
        }
    }
    Ok(FoldAssignment { k, fold_of })
}

/// Label rule planted by [`generate_synthetic`]: the class is 1 exactly when
/// the two rule features disagree. When `a` is an ancestor of `b` this reads
/// "annotated somewhere under `a` but not under `b`".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PlantedRule {
    pub a: usize,
    pub b: usize,
}

impl PlantedRule {
    pub fn label(&self, row: &[u8]) -> u8 {
        row[self.a] ^ row[self.b]
    }
}

#[derive(Debug, Clone)]
pub struct Synthetic {
    pub dataset: Dataset,
    pub rule: PlantedRule,
}

/// Samples hierarchy-consistent data: sink features are switched on
/// independently with `leaf_density`, 1s are propagated upwards, and labels
/// come from a planted two-feature rule flipped with probability
/// `class_noise`.
pub fn generate_synthetic(
    dag: &FeatureDag,
    n_instances: usize,
    leaf_density: f64,
    class_noise: f64,
    seed: u64,
) -> Result<Synthetic> {
    for (name, p) in [("leaf_density", leaf_density), ("class_noise", class_noise)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!("{name} = {p} not in [0, 1]")));
        }
    }
    let n = dag.n_features();
    if n < 2 {
        return Err(Error::InvalidArgument("need at least 2 features".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sinks = dag.sinks();
    let mut values = vec![0u8; n * n_instances];
    for row in values.chunks_mut(n) {
        for &s in &sinks {
            if rng.random_bool(leaf_density) {
                row[s] = 1;
            }
        }
        propagate_row(row, dag);
    }

    // The rule pair is an ancestor and one of its descendants, preferably
    // one whose rule fires on neither almost all nor almost no instances.
    let firing_rate = |a: usize, b: usize| {
        let fired = values.chunks(n).filter(|row| row[a] != row[b]).count();
        fired as f64 / n_instances.max(1) as f64
    };
    let related_pairs = |strict: bool| -> Vec<(usize, usize)> {
        (0..n)
            .flat_map(|b| dag.ancestors(b).ones().map(move |a| (a, b)))
            .filter(|&(a, b)| !strict || (0.15..=0.85).contains(&firing_rate(a, b)))
            .collect()
    };
    let mut pairs = related_pairs(true);
    if pairs.is_empty() {
        pairs = related_pairs(false);
    }
    let rule = match pairs.choose(&mut rng) {
        Some(&(a, b)) => PlantedRule { a, b },
        None => {
            let mut candidates: Vec<(usize, usize)> = (0..n)
                .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
                .filter(|&(a, b)| (0.15..=0.85).contains(&firing_rate(a, b)))
                .collect();
            if candidates.is_empty() {
                candidates = vec![(0, 1)];
            }
            let &(a, b) = candidates.choose(&mut rng).expect("non-empty");
            PlantedRule { a, b }
        }
    };

    let labels = values
        .chunks(n)
        .map(|row| rule.label(row) ^ u8::from(rng.random_bool(class_noise)))
        .collect();
    let names = (0..n).map(|i| format!("f{i}")).collect();
    Ok(Synthetic {
        dataset: Dataset::new(names, values, labels)?,
        rule,
    })
}
