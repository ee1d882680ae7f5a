//! Value types shared by the solvers, baselines and metrics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row sums of a probability matrix must match 1 within this tolerance.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// L points in D dimensions with optional ground-truth labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    name: String,
    n_points: usize,
    dim: usize,
    points: Vec<f64>,
    labels: Option<Vec<usize>>,
    label_names: Vec<String>,
}

impl Dataset {
    /// Builds a dataset from row-major coordinates.
    pub fn from_flat(
        name: impl Into<String>,
        points: Vec<f64>,
        dim: usize,
        labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("dimension must be at least 1".into()));
        }
        if points.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if !points.len().is_multiple_of(dim) {
            return Err(Error::InvalidInput(format!(
                "{} coordinates do not divide into rows of {dim}",
                points.len()
            )));
        }
        let n_points = points.len() / dim;
        if let Some(pos) = points.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue {
                row: pos / dim,
                col: pos % dim,
            });
        }
        let label_names = match &labels {
            Some(l) => {
                if l.len() != n_points {
                    return Err(Error::InvalidInput(format!(
                        "{} labels for {n_points} points",
                        l.len()
                    )));
                }
                let classes = l.iter().max().map_or(0, |m| m + 1);
                (0..classes).map(|c| c.to_string()).collect()
            }
            None => Vec::new(),
        };
        Ok(Self {
            name: name.into(),
            n_points,
            dim,
            points,
            labels,
            label_names,
        })
    }

    pub fn from_rows(
        name: impl Into<String>,
        rows: &[Vec<f64>],
        labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if let Some(bad) = rows.iter().position(|r| r.len() != dim) {
            return Err(Error::InvalidInput(format!(
                "row {bad} has {} columns, expected {dim}",
                rows[bad].len()
            )));
        }
        let flat = rows.iter().flatten().copied().collect();
        Self::from_flat(name, flat, dim, labels)
    }

    /// Replaces the generic "0", "1", ... class names.
    pub fn with_label_names(mut self, names: Vec<String>) -> Self {
        self.label_names = names;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        self.n_points == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim)
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    /// Number of distinct ground-truth classes, if labels are present.
    pub fn n_classes(&self) -> Option<usize> {
        self.labels
            .as_ref()
            .map(|l| l.iter().max().map_or(0, |m| m + 1))
    }

    /// Per-feature z-score standardization. Constant features are centered only.
    pub fn standardized(&self) -> Self {
        let n = self.n_points as f64;
        let mut mean = vec![0.0; self.dim];
        for row in self.rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; self.dim];
        for row in self.rows() {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let sd: Vec<f64> = var.iter().map(|s| (s / n).sqrt()).collect();
        let points = self
            .rows()
            .flat_map(|row| {
                row.iter()
                    .zip(&mean)
                    .zip(&sd)
                    .map(|((v, m), s)| if *s > 0.0 { (v - m) / s } else { v - m })
                    .collect::<Vec<_>>()
            })
            .collect();
        Self {
            points,
            ..self.clone()
        }
    }

    /// Subset of the rows, keeping labels aligned.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let points = indices
            .iter()
            .flat_map(|&i| self.point(i).to_vec())
            .collect();
        let labels = self
            .labels
            .as_ref()
            .map(|l| indices.iter().map(|&i| l[i]).collect());
        Ok(
            Self::from_flat(self.name.clone(), points, self.dim, labels)?
                .with_label_names(self.label_names.clone()),
        )
    }
}

/// L×K assignment probabilities, stored row-major so that the flat vector is
/// ordered p_11..p_1K, p_21..p_LK (entry (i, j) sits at index i·K + j).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityMatrix {
    n_points: usize,
    n_clusters: usize,
    entries: Vec<f64>,
}

impl ProbabilityMatrix {
    /// Validates nonnegativity and unit row sums.
    pub fn from_vector(n_points: usize, n_clusters: usize, entries: Vec<f64>) -> Result<Self> {
        let m = Self::from_vector_unchecked(n_points, n_clusters, entries)?;
        m.check_feasible(ROW_SUM_TOLERANCE)?;
        Ok(m)
    }

    /// Only checks the shape; used internally by solvers that maintain
    /// feasibility themselves.
    pub(crate) fn from_vector_unchecked(
        n_points: usize,
        n_clusters: usize,
        entries: Vec<f64>,
    ) -> Result<Self> {
        if n_points == 0 || n_clusters == 0 {
            return Err(Error::InvalidInput(
                "probability matrix must be non-empty".into(),
            ));
        }
        if entries.len() != n_points * n_clusters {
            return Err(Error::InvalidInput(format!(
                "{} entries for a {n_points}x{n_clusters} matrix",
                entries.len()
            )));
        }
        Ok(Self {
            n_points,
            n_clusters,
            entries,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::InvalidInput("ragged probability rows".into()));
        }
        Self::from_vector(rows.len(), k, rows.iter().flatten().copied().collect())
    }

    /// One-hot matrix for a hard labeling.
    pub fn one_hot(labels: &[usize], n_clusters: usize) -> Result<Self> {
        let mut entries = vec![0.0; labels.len() * n_clusters];
        for (i, &l) in labels.iter().enumerate() {
            if l >= n_clusters {
                return Err(Error::InvalidInput(format!(
                    "label {l} out of range for {n_clusters} clusters"
                )));
            }
            entries[i * n_clusters + l] = 1.0;
        }
        Self::from_vector(labels.len(), n_clusters, entries)
    }

    pub fn check_feasible(&self, tol: f64) -> Result<()> {
        for (i, row) in self.rows().enumerate() {
            if let Some(j) = row.iter().position(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(Error::InvalidInput(format!(
                    "p[{i}][{j}] = {} outside [0, 1]",
                    row[j]
                )));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > tol {
                return Err(Error::InvalidInput(format!("row {i} sums to {s}")));
            }
        }
        Ok(())
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn n_clusters(&self) -> usize {
        self.n_clusters
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n_clusters + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n_clusters..(i + 1) * self.n_clusters]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.entries.chunks_exact(self.n_clusters)
    }

    /// The vectorized form P.
    pub fn as_vector(&self) -> &[f64] {
        &self.entries
    }

    pub fn into_vector(self) -> Vec<f64> {
        self.entries
    }

    /// Vector index of entry (i, j).
    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.n_clusters + j
    }

    pub fn labels(&self) -> Vec<usize> {
        labels_from(self)
    }
}

/// Random feasible start: each row an independent flat-Dirichlet draw.
pub fn init_probabilities(n_points: usize, n_clusters: usize, seed: u64) -> ProbabilityMatrix {
    assert!(
        n_points >= 1 && n_clusters >= 1,
        "need at least one point and cluster"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::with_capacity(n_points * n_clusters);
    for _ in 0..n_points {
        let start = entries.len();
        let mut total = 0.0;
        for _ in 0..n_clusters {
            let mut e: f64 = rng.sample(Exp1);
            while e <= f64::MIN_POSITIVE {
                e = rng.sample(Exp1);
            }
            total += e;
            entries.push(e);
        }
        entries[start..].iter_mut().for_each(|e| *e /= total);
    }
    ProbabilityMatrix {
        n_points,
        n_clusters,
        entries,
    }
}

/// Independent child seed for run `index` of a multi-run experiment
/// (SplitMix64 finalizer over the combined words).
pub fn child_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Row-wise argmax, ties toward the smallest column.
pub fn labels_from(p: &ProbabilityMatrix) -> Vec<usize> {
    p.rows()
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// One solver iteration, for descent traces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub step_length: f64,
    pub active_count: usize,
    /// Seconds since the start of the run.
    pub wall_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Multiplier test passed at a point with zero projected gradient.
    Kkt,
    /// Objective stalled and the multiplier test passed.
    ObjectiveStall,
    /// Baseline converged by its own criterion.
    Converged,
    /// Iteration cap reached.
    NotConverged,
}

impl Termination {
    pub fn converged(self) -> bool {
        !matches!(self, Termination::NotConverged)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterResult {
    pub probabilities: ProbabilityMatrix,
    /// K×D cluster centers.
    pub centers: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub objective: f64,
    pub iterations: usize,
    pub termination: Termination,
    pub trace: Vec<IterationRecord>,
    /// Seed of the run that produced this result (differs from the requested
    /// one after a degenerate-cluster restart).
    pub seed: u64,
    pub elapsed: f64,
}

impl ClusterResult {
    pub fn converged(&self) -> bool {
        self.termination.converged()
    }
}
