//! Conditional mutual information between feature pairs given the class, and
//! the descending candidate edge list every structure learner consumes.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::hierarchy::FeatureDag;

/// Contingency table over `(x_i, x_j, y)`, indexed by `x_i << 2 | x_j << 1 | y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct JointCounts {
    pub counts: [u64; 8],
    pub n: u64,
}

impl JointCounts {
    #[inline]
    pub fn cell(xi: u8, xj: u8, y: u8) -> usize {
        ((xi as usize) << 2) | ((xj as usize) << 1) | y as usize
    }

    pub fn get(&self, xi: u8, xj: u8, y: u8) -> u64 {
        self.counts[Self::cell(xi, xj, y)]
    }

    /// The same table with the roles of the two features exchanged.
    pub fn transposed(&self) -> JointCounts {
        let mut counts = [0; 8];
        for xi in 0..2 {
            for xj in 0..2 {
                for y in 0..2 {
                    counts[Self::cell(xj, xi, y)] = self.get(xi, xj, y);
                }
            }
        }
        JointCounts { counts, n: self.n }
    }
}

/// Exact counts by a direct scan over instances.
pub fn joint_counts(ds: &Dataset, i: usize, j: usize) -> Result<JointCounts> {
    for v in [i, j] {
        if v >= ds.n_features() {
            return Err(Error::IndexOutOfRange {
                index: v,
                len: ds.n_features(),
            });
        }
    }
    let mut out = JointCounts {
        n: ds.n_instances() as u64,
        ..Default::default()
    };
    for (row, &y) in ds.rows().zip(ds.labels()) {
        out.counts[JointCounts::cell(row[i], row[j], y)] += 1;
    }
    Ok(out)
}

/// Conditional mutual information `I(X_i; X_j | Y)` in nats.
///
/// Probabilities come from the joint table with `smoothing` added to each of
/// the 8 cells; the class and per-feature marginals are sums of the smoothed
/// joint. Cells with zero probability contribute nothing. The summation order
/// is symmetric in the two features, so `cmi(t) == cmi(t.transposed())`
/// holds exactly.
pub fn cmi(counts: &JointCounts, smoothing: f64) -> Result<f64> {
    if counts.n == 0 && smoothing == 0.0 {
        return Err(Error::DegenerateDistribution);
    }
    if smoothing < 0.0 || !smoothing.is_finite() {
        return Err(Error::InvalidArgument(format!("smoothing {smoothing} must be >= 0")));
    }
    let total = counts.n as f64 + 8.0 * smoothing;
    let p = |xi: u8, xj: u8, y: u8| (counts.get(xi, xj, y) as f64 + smoothing) / total;

    let mut sum = 0.0;
    for y in 0..2 {
        let (p00, p01, p10, p11) = (p(0, 0, y), p(0, 1, y), p(1, 0, y), p(1, 1, y));
        let py = (p00 + p11) + (p01 + p10);
        let pi = [p00 + p01, p10 + p11];
        let pj = [p00 + p10, p01 + p11];
        let term = |pxy: f64, a: usize, b: usize| {
            if pxy > 0.0 {
                pxy * ((pxy * py) / (pi[a] * pj[b])).ln()
            } else {
                0.0
            }
        };
        sum += (term(p00, 0, 0) + term(p11, 1, 1)) + (term(p01, 0, 1) + term(p10, 1, 0));
    }
    Ok(sum.max(0.0))
}

/// Direction a pair inherits from the hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    IToJ,
    JToI,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeStatus {
    Available,
    Unavailable,
}

/// A candidate feature pair (`i < j`) with its CMI score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredEdge {
    pub i: usize,
    pub j: usize,
    pub score: f64,
    pub predefined_direction: Direction,
    pub status: EdgeStatus,
}

impl ScoredEdge {
    /// Normalises the pair to `i < j` and reads the direction off `dag`.
    pub fn new(a: usize, b: usize, score: f64, dag: &FeatureDag) -> Self {
        let (i, j) = if a < b { (a, b) } else { (b, a) };
        let predefined_direction = if dag.ancestors(j).contains(i) {
            Direction::IToJ
        } else if dag.ancestors(i).contains(j) {
            Direction::JToI
        } else {
            Direction::None
        };
        Self {
            i,
            j,
            score,
            predefined_direction,
            status: EdgeStatus::Available,
        }
    }

    /// `(parent, child)` imposed by the hierarchy, if any.
    pub fn oriented(&self) -> Option<(usize, usize)> {
        match self.predefined_direction {
            Direction::IToJ => Some((self.i, self.j)),
            Direction::JToI => Some((self.j, self.i)),
            Direction::None => None,
        }
    }

    pub fn touches(&self, v: usize) -> bool {
        self.i == v || self.j == v
    }
}

/// Sorts by score descending, ties by `(i, j)` ascending.
pub fn sort_edges(edges: &mut [ScoredEdge]) {
    edges.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| (a.i, a.j).cmp(&(b.i, b.j)))
    });
}

/// Bit-packed feature columns for fast pairwise counting.
struct Columns {
    words: usize,
    bits: Vec<u64>,
    class: Vec<u64>,
    ones: Vec<u64>,
    ones_pos: Vec<u64>,
    n: u64,
    n_pos: u64,
}

impl Columns {
    fn new(ds: &Dataset) -> Self {
        let n = ds.n_instances();
        let words = n.div_ceil(64);
        let mut bits = vec![0u64; words * ds.n_features()];
        let mut class = vec![0u64; words];
        for (r, (row, &y)) in ds.rows().zip(ds.labels()).enumerate() {
            let (w, b) = (r / 64, 1u64 << (r % 64));
            for (f, &v) in row.iter().enumerate() {
                if v == 1 {
                    bits[f * words + w] |= b;
                }
            }
            if y == 1 {
                class[w] |= b;
            }
        }
        let n_pos = class.iter().map(|w| w.count_ones() as u64).sum();
        let mut ones = Vec::with_capacity(ds.n_features());
        let mut ones_pos = Vec::with_capacity(ds.n_features());
        for c in bits.chunks(words.max(1)).take(ds.n_features()) {
            ones.push(c.iter().map(|w| w.count_ones() as u64).sum());
            ones_pos.push(
                c.iter()
                    .zip(&class)
                    .map(|(a, y)| (a & y).count_ones() as u64)
                    .sum(),
            );
        }
        ones.resize(ds.n_features(), 0);
        ones_pos.resize(ds.n_features(), 0);
        Self {
            words,
            bits,
            class,
            ones,
            ones_pos,
            n: n as u64,
            n_pos,
        }
    }

    fn col(&self, f: usize) -> &[u64] {
        &self.bits[f * self.words..(f + 1) * self.words]
    }

    fn pair(&self, i: usize, j: usize) -> JointCounts {
        let (mut both, mut both_pos) = (0u64, 0u64);
        for ((a, b), y) in self.col(i).iter().zip(self.col(j)).zip(&self.class) {
            let ab = a & b;
            both += ab.count_ones() as u64;
            both_pos += (ab & y).count_ones() as u64;
        }
        let mut t = JointCounts {
            n: self.n,
            ..Default::default()
        };
        let n_by_class = [self.n - self.n_pos, self.n_pos];
        let i_by_class = [self.ones[i] - self.ones_pos[i], self.ones_pos[i]];
        let j_by_class = [self.ones[j] - self.ones_pos[j], self.ones_pos[j]];
        let both_by_class = [both - both_pos, both_pos];
        for y in 0..2u8 {
            let c = y as usize;
            let n11 = both_by_class[c];
            let n10 = i_by_class[c] - n11;
            let n01 = j_by_class[c] - n11;
            t.counts[JointCounts::cell(1, 1, y)] = n11;
            t.counts[JointCounts::cell(1, 0, y)] = n10;
            t.counts[JointCounts::cell(0, 1, y)] = n01;
            t.counts[JointCounts::cell(0, 0, y)] = n_by_class[c] - n11 - n10 - n01;
        }
        t
    }
}

/// Scores every unordered pair and returns them sorted by [`sort_edges`].
pub fn rank_edges(
    ds: &Dataset,
    dag: &FeatureDag,
    smoothing: f64,
    exec: Exec,
) -> Result<Vec<ScoredEdge>> {
    let n = ds.n_features();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 features to rank edges, got {n}"
        )));
    }
    if dag.n_features() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: dag.n_features(),
        });
    }
    let cols = Columns::new(ds);
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    let mut edges = exec.try_map_range(pairs.len(), |k| {
        let (i, j) = pairs[k];
        let score = cmi(&cols.pair(i, j), smoothing)?;
        Ok::<_, Error>(ScoredEdge::new(i, j, score, dag))
    })?;
    sort_edges(&mut edges);
    Ok(edges)
}
