//! Internal (SSE, DBI) and external (NMI, ARI, V-measure) clustering
//! measures and the exact-recovery robustness count.

use rayon::prelude::*;

use crate::data::{child_seed, Dataset};
use crate::error::{Error, Result};

/// Cross-tabulation of two labelings: rows are classes of `a`, columns of `b`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    counts: Vec<Vec<usize>>,
    row_sums: Vec<usize>,
    col_sums: Vec<usize>,
    total: usize,
}

impl ContingencyTable {
    /// Builds the table. Label values need not be dense; empty rows and
    /// columns are dropped.
    pub fn new(a: &[usize], b: &[usize]) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::InvalidInput(format!(
                "labelings differ in length ({} vs {})",
                a.len(),
                b.len()
            )));
        }
        let ra = dense(a);
        let rb = dense(b);
        let na = ra.iter().max().map_or(0, |m| m + 1);
        let nb = rb.iter().max().map_or(0, |m| m + 1);
        let mut counts = vec![vec![0; nb]; na];
        for (&i, &j) in ra.iter().zip(&rb) {
            counts[i][j] += 1;
        }
        let row_sums = counts.iter().map(|r| r.iter().sum()).collect();
        let col_sums = (0..nb).map(|j| counts.iter().map(|r| r[j]).sum()).collect();
        Ok(Self {
            counts,
            row_sums,
            col_sums,
            total: a.len(),
        })
    }

    pub fn counts(&self) -> &[Vec<usize>] {
        &self.counts
    }

    pub fn row_sums(&self) -> &[usize] {
        &self.row_sums
    }

    pub fn col_sums(&self) -> &[usize] {
        &self.col_sums
    }

    pub fn total(&self) -> usize {
        self.total
    }

    fn entropy(marginal: &[usize], n: f64) -> f64 {
        marginal
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / n;
                -p * p.ln()
            })
            .sum()
    }

    /// H(a) and H(b) in nats.
    pub fn entropies(&self) -> (f64, f64) {
        let n = self.total as f64;
        (
            Self::entropy(&self.row_sums, n),
            Self::entropy(&self.col_sums, n),
        )
    }

    /// Mutual information I(a; b) in nats.
    pub fn mutual_information(&self) -> f64 {
        let n = self.total as f64;
        let mut mi = 0.0;
        for (i, row) in self.counts.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                if c > 0 {
                    let c = c as f64;
                    mi +=
                        c / n * (c * n / (self.row_sums[i] as f64 * self.col_sums[j] as f64)).ln();
                }
            }
        }
        mi.max(0.0)
    }
}

/// Maps arbitrary label values to 0.. in order of first appearance.
fn dense(labels: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect()
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Per-cluster means of a hard labeling into `k` clusters. Empty clusters
/// get a zero vector.
pub fn cluster_means(x: &Dataset, labels: &[usize], k: usize) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; x.dim()]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in x.rows().zip(labels) {
        counts[l] += 1;
        sums[l].iter_mut().zip(p).for_each(|(s, v)| *s += v);
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        if c > 0 {
            s.iter_mut().for_each(|v| *v /= c as f64);
        }
    }
    sums
}

/// Σ_j Σ_{x ∈ ω_j} ‖x − c_j‖².
pub fn sse(x: &Dataset, labels: &[usize], centers: &[Vec<f64>]) -> f64 {
    x.rows()
        .zip(labels)
        .map(|(p, &l)| sq_dist(p, &centers[l]))
        .sum()
}

/// Davies–Bouldin index over the non-empty clusters.
pub fn dbi(x: &Dataset, labels: &[usize], centers: &[Vec<f64>]) -> Result<f64> {
    let k = centers.len();
    let mut spread = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in x.rows().zip(labels) {
        spread[l] += sq_dist(p, &centers[l]).sqrt();
        counts[l] += 1;
    }
    let used: Vec<usize> = (0..k).filter(|&j| counts[j] > 0).collect();
    if used.len() < 2 {
        return Err(Error::InvalidInput(
            "DBI needs at least two non-empty clusters".into(),
        ));
    }
    for &j in &used {
        spread[j] /= counts[j] as f64;
    }
    let mut total = 0.0;
    for &j in &used {
        let mut worst = 0.0_f64;
        for &o in &used {
            if o == j {
                continue;
            }
            let gap = sq_dist(&centers[j], &centers[o]).sqrt();
            if gap == 0.0 {
                return Err(Error::IdenticalCenters {
                    first: j.min(o),
                    second: j.max(o),
                });
            }
            worst = worst.max((spread[j] + spread[o]) / gap);
        }
        total += worst;
    }
    Ok(total / used.len() as f64)
}

/// Normalized mutual information, I / sqrt(H(a)·H(b)). A constant labeling
/// scores 0 against a non-constant one and 1 against another constant one.
pub fn nmi(a: &[usize], b: &[usize]) -> Result<f64> {
    let t = ContingencyTable::new(a, b)?;
    let (ha, hb) = t.entropies();
    Ok(match (ha > 0.0, hb > 0.0) {
        (false, false) => 1.0,
        (true, true) => (t.mutual_information() / (ha * hb).sqrt()).min(1.0),
        _ => 0.0,
    })
}

fn choose2(n: usize) -> f64 {
    let n = n as f64;
    n * (n - 1.0) / 2.0
}

/// Hubert–Arabie adjusted Rand index.
pub fn ari(a: &[usize], b: &[usize]) -> Result<f64> {
    let t = ContingencyTable::new(a, b)?;
    let index: f64 = t.counts.iter().flatten().map(|&c| choose2(c)).sum();
    let sa: f64 = t.row_sums.iter().map(|&c| choose2(c)).sum();
    let sb: f64 = t.col_sums.iter().map(|&c| choose2(c)).sum();
    let pairs = choose2(t.total);
    if pairs == 0.0 {
        return Ok(1.0);
    }
    let expected = sa * sb / pairs;
    let max = 0.5 * (sa + sb);
    if max == expected {
        return Ok(if index == expected { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / (max - expected))
}

/// Homogeneity, completeness and their harmonic mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VMeasure {
    pub homogeneity: f64,
    pub completeness: f64,
    pub v: f64,
}

pub fn v_measure_parts(truth: &[usize], pred: &[usize]) -> Result<VMeasure> {
    let t = ContingencyTable::new(truth, pred)?;
    let (hc, hk) = t.entropies();
    let mi = t.mutual_information();
    // H(C|K) = H(C) − I and H(K|C) = H(K) − I
    let homogeneity = if hc > 0.0 { (mi / hc).min(1.0) } else { 1.0 };
    let completeness = if hk > 0.0 { (mi / hk).min(1.0) } else { 1.0 };
    let v = if homogeneity + completeness > 0.0 {
        2.0 * homogeneity * completeness / (homogeneity + completeness)
    } else {
        0.0
    };
    Ok(VMeasure {
        homogeneity,
        completeness,
        v,
    })
}

pub fn v_measure(truth: &[usize], pred: &[usize]) -> Result<f64> {
    Ok(v_measure_parts(truth, pred)?.v)
}

/// Maximum-weight assignment of rows to columns of a square matrix
/// (Hungarian method, O(n³)). Returns the column for each row.
pub fn max_weight_assignment(weights: &[Vec<f64>]) -> Vec<usize> {
    let n = weights.len();
    if n == 0 {
        return Vec::new();
    }
    let top = weights
        .iter()
        .flatten()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let cost = |i: usize, j: usize| top - weights[i][j];
    // 1-based potentials, column 0 is the virtual start
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        if owner[j] > 0 {
            assignment[owner[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Number of points lying on the best one-to-one matching of the two
/// labelings' clusters.
pub fn matched_count(a: &[usize], b: &[usize]) -> Result<usize> {
    let t = ContingencyTable::new(a, b)?;
    let n = t.counts.len().max(t.col_sums.len());
    let mut w = vec![vec![0.0; n]; n];
    for (i, row) in t.counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            w[i][j] = c as f64;
        }
    }
    let assign = max_weight_assignment(&w);
    Ok(assign
        .iter()
        .enumerate()
        .filter(|&(i, _)| i < t.counts.len())
        .map(|(i, &j)| t.counts[i].get(j).copied().unwrap_or(0))
        .sum())
}

/// True when the labelings agree exactly up to renaming clusters.
pub fn matches_up_to_permutation(a: &[usize], b: &[usize]) -> Result<bool> {
    Ok(matched_count(a, b)? == a.len())
}

/// Runs `algorithm(child_seed(seed, r))` for r in 0..runs across the rayon
/// pool and counts labelings that equal `truth` up to permutation. Failed
/// runs count as incorrect.
pub fn robustness<F>(truth: &[usize], runs: usize, seed: u64, algorithm: F) -> usize
where
    F: Fn(u64) -> Result<Vec<usize>> + Sync,
{
    (0..runs)
        .into_par_iter()
        .filter(|&r| {
            algorithm(child_seed(seed, r as u64))
                .and_then(|labels| matches_up_to_permutation(truth, &labels))
                .unwrap_or(false)
        })
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(points: &[f64]) -> Dataset {
        let rows: Vec<Vec<f64>> = points.iter().map(|&v| vec![v]).collect();
        Dataset::from_rows("line", &rows, None).unwrap()
    }

    #[test]
    fn sse_examples() {
        let x = line(&[0.0, 2.0]);
        assert_eq!(sse(&x, &[0, 0], &cluster_means(&x, &[0, 0], 1)), 2.0);
        assert_eq!(sse(&x, &[0, 1], &cluster_means(&x, &[0, 1], 2)), 0.0);
    }

    #[test]
    fn dbi_examples() {
        let x = line(&[0.0, 0.1, 10.0, 10.1]);
        let labels = [0, 0, 1, 1];
        let c = cluster_means(&x, &labels, 2);
        assert!((dbi(&x, &labels, &c).unwrap() - 0.01).abs() < 1e-12);
        let x = line(&[1.0, 1.0, 4.0]);
        let c = cluster_means(&x, &[0, 0, 1], 2);
        assert_eq!(dbi(&x, &[0, 0, 1], &c).unwrap(), 0.0);
        let x = line(&[1.0, 1.0]);
        assert!(matches!(
            dbi(&x, &[0, 1], &[vec![1.0], vec![1.0]]),
            Err(Error::IdenticalCenters {
                first: 0,
                second: 1
            })
        ));
    }

    #[test]
    fn identity_and_independence() {
        let a = [0, 0, 1, 1, 2];
        assert!((nmi(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert!((ari(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert!((v_measure(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert!(nmi(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap().abs() < 1e-12);
    }

    #[test]
    fn constant_labelings() {
        assert_eq!(nmi(&[0, 0, 0], &[1, 1, 1]).unwrap(), 1.0);
        assert_eq!(nmi(&[0, 0, 0, 0], &[0, 0, 1, 1]).unwrap(), 0.0);
        assert!(ari(&[0, 0, 0, 0], &[0, 0, 1, 1]).unwrap().abs() < 1e-12);
    }

    #[test]
    fn singleton_prediction_is_homogeneous() {
        let v = v_measure_parts(&[0, 0, 1, 1], &[0, 1, 2, 3]).unwrap();
        assert!((v.homogeneity - 1.0).abs() < 1e-12);
        assert!(v.completeness < 1.0 && v.v < 1.0);
    }

    #[test]
    fn permutation_matching() {
        assert!(matches_up_to_permutation(&[0, 0, 1], &[1, 1, 0]).unwrap());
        assert!(!matches_up_to_permutation(&[0, 0, 1], &[1, 0, 0]).unwrap());
        assert!(!matches_up_to_permutation(&[0, 1, 2], &[0, 1, 1]).unwrap());
        assert_eq!(
            matched_count(&[0, 0, 1, 1, 2], &[2, 2, 0, 1, 1]).unwrap(),
            4
        );
    }

    #[test]
    fn hungarian_small() {
        let w = vec![
            vec![1.0, 5.0, 0.0],
            vec![4.0, 3.0, 0.0],
            vec![0.0, 0.0, 2.0],
        ];
        assert_eq!(max_weight_assignment(&w), vec![1, 0, 2]);
    }

    #[test]
    fn robustness_counts() {
        let truth = [0, 0, 1, 1];
        assert_eq!(robustness(&truth, 7, 1, |_| Ok(vec![1, 1, 0, 0])), 7);
        assert_eq!(robustness(&truth, 5, 1, |_| Ok(vec![0, 1, 0, 1])), 0);
        assert_eq!(robustness(&truth, 0, 1, |_| Ok(vec![0, 0, 1, 1])), 0);
        let half = robustness(&truth, 100, 3, |s| {
            Ok(if s % 2 == 0 {
                vec![0, 0, 1, 1]
            } else {
                vec![0, 0, 0, 1]
            })
        });
        assert!(half > 20 && half < 80);
    }
}
