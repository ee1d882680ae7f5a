//! Reference algorithms: Lloyd's K-means with K-means++ seeding, and fuzzy
//! c-means for fuzzifier m > 1.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{
    init_probabilities, labels_from, ClusterResult, Dataset, IterationRecord, ProbabilityMatrix,
    Termination,
};
use crate::error::{Error, Result};

pub const LLOYD_MAX_ITERATIONS: usize = 300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcmConfig {
    pub m: f64,
    pub max_iterations: usize,
    /// Stop once the largest membership change falls below this.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for FcmConfig {
    fn default() -> Self {
        Self {
            m: 1.3,
            max_iterations: 300,
            tolerance: 1e-5,
            seed: 0,
        }
    }
}

impl FcmConfig {
    pub fn with_m(m: f64) -> Self {
        Self {
            m,
            ..Self::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_k(x: &Dataset, k: usize) -> Result<()> {
    if k == 0 || k > x.len() {
        return Err(Error::InvalidInput(format!(
            "K = {k} must be between 1 and the number of points ({})",
            x.len()
        )));
    }
    Ok(())
}

/// Output of Lloyd's iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct LloydOutcome {
    pub labels: Vec<usize>,
    pub centers: Vec<Vec<f64>>,
    pub sse: f64,
    /// SSE after each assignment/update pair.
    pub sse_trace: Vec<f64>,
    pub converged: bool,
}

fn nearest(point: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Lloyd's algorithm from the given centers until the assignment is stable.
/// An empty cluster is re-seeded at the point farthest from its own center.
pub fn lloyd(x: &Dataset, init: &[Vec<f64>], max_iterations: usize) -> LloydOutcome {
    let k = init.len();
    let dim = x.dim();
    let mut centers = init.to_vec();
    let mut labels: Vec<usize> = x.rows().map(|p| nearest(p, &centers).0).collect();
    let mut sse_trace = Vec::new();
    let mut converged = false;
    for _ in 0..max_iterations {
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in x.rows().zip(&labels) {
            counts[l] += 1;
            sums[l].iter_mut().zip(p).for_each(|(s, v)| *s += v);
        }
        for j in 0..k {
            if counts[j] == 0 {
                let far = (0..x.len())
                    .filter(|&i| counts[labels[i]] > 1)
                    .max_by(|&a, &b| {
                        let da = sq_dist(x.point(a), &centers[labels[a]]);
                        let db = sq_dist(x.point(b), &centers[labels[b]]);
                        da.total_cmp(&db).then(b.cmp(&a))
                    });
                if let Some(i) = far {
                    let old = labels[i];
                    counts[old] -= 1;
                    sums[old]
                        .iter_mut()
                        .zip(x.point(i))
                        .for_each(|(s, v)| *s -= v);
                    labels[i] = j;
                    counts[j] = 1;
                    sums[j] = x.point(i).to_vec();
                }
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                centers[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
        let sse: f64 = x
            .rows()
            .zip(&labels)
            .map(|(p, &l)| sq_dist(p, &centers[l]))
            .sum();
        sse_trace.push(sse);
        let next: Vec<usize> = x.rows().map(|p| nearest(p, &centers).0).collect();
        if next == labels {
            converged = true;
            break;
        }
        labels = next;
    }
    let sse = x
        .rows()
        .zip(&labels)
        .map(|(p, &l)| sq_dist(p, &centers[l]))
        .sum();
    LloydOutcome {
        labels,
        centers,
        sse,
        sse_trace,
        converged,
    }
}

/// K-means++ D² seeding.
pub fn kmeans_pp_centers(x: &Dataset, k: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut centers = vec![x.point(rng.random_range(0..n)).to_vec()];
    let mut dist: Vec<f64> = x.rows().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = dist.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, d) in dist.iter().enumerate() {
                acc += d;
                if acc > target && *d > 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = x.point(next).to_vec();
        for (d, p) in dist.iter_mut().zip(x.rows()) {
            *d = d.min(sq_dist(p, &c));
        }
        centers.push(c);
    }
    centers
}

/// K-means++ seeding followed by Lloyd's iterations.
pub fn kmeans_pp(x: &Dataset, k: usize, seed: u64) -> Result<ClusterResult> {
    check_k(x, k)?;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = kmeans_pp_centers(x, k, &mut rng);
    let out = lloyd(x, &init, LLOYD_MAX_ITERATIONS);
    let trace = out
        .sse_trace
        .iter()
        .enumerate()
        .map(|(i, &sse)| IterationRecord {
            iteration: i + 1,
            objective: sse,
            step_length: 0.0,
            active_count: 0,
            wall_time: 0.0,
        })
        .collect::<Vec<_>>();
    Ok(ClusterResult {
        probabilities: ProbabilityMatrix::one_hot(&out.labels, k)?,
        centers: out.centers,
        iterations: trace.len(),
        labels: out.labels,
        objective: out.sse,
        termination: if out.converged {
            Termination::Converged
        } else {
            Termination::NotConverged
        },
        trace,
        seed,
        elapsed: start.elapsed().as_secs_f64(),
    })
}

/// Weighted centers Σ w^m x / Σ w^m; a cluster with no weight keeps `prev`.
fn fcm_centers(x: &Dataset, w: &[f64], k: usize, m: f64, prev: &mut [Vec<f64>]) {
    let dim = x.dim();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut mass = vec![0.0; k];
    for (i, p) in x.rows().enumerate() {
        for j in 0..k {
            let wm = w[i * k + j].powf(m);
            mass[j] += wm;
            sums[j].iter_mut().zip(p).for_each(|(s, v)| *s += wm * v);
        }
    }
    for j in 0..k {
        if mass[j] > 0.0 {
            prev[j] = sums[j].iter().map(|s| s / mass[j]).collect();
        }
    }
}

/// Membership update w_ij ∝ ‖x_i − c_j‖^(−2/(m−1)), evaluated in log space.
/// A point on a center belongs fully to the first such center.
fn fcm_memberships(x: &Dataset, centers: &[Vec<f64>], m: f64, w: &mut [f64]) {
    let k = centers.len();
    let mut logits = vec![0.0; k];
    for (i, p) in x.rows().enumerate() {
        let row = &mut w[i * k..(i + 1) * k];
        let dsq: Vec<f64> = centers.iter().map(|c| sq_dist(p, c)).collect();
        if let Some(hit) = dsq.iter().position(|&d| d == 0.0) {
            row.iter_mut()
                .enumerate()
                .for_each(|(j, v)| *v = (j == hit) as u8 as f64);
            continue;
        }
        for (l, d) in logits.iter_mut().zip(&dsq) {
            *l = -d.ln() / (m - 1.0);
        }
        let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for (v, l) in row.iter_mut().zip(&logits) {
            *v = (l - top).exp();
            total += *v;
        }
        row.iter_mut().for_each(|v| *v /= total);
    }
}

/// The FCM objective Σ_j Σ_i w_ij^m ‖x_i − c_j‖².
pub fn fcm_objective(x: &Dataset, w: &ProbabilityMatrix, centers: &[Vec<f64>], m: f64) -> f64 {
    x.rows()
        .zip(w.rows())
        .map(|(p, row)| {
            row.iter()
                .zip(centers)
                .map(|(wij, c)| wij.powf(m) * sq_dist(p, c))
                .sum::<f64>()
        })
        .sum()
}

/// Bezdek's alternating optimization from random memberships.
pub fn fcm(x: &Dataset, k: usize, cfg: &FcmConfig) -> Result<ClusterResult> {
    check_k(x, k)?;
    if !(cfg.m > 1.0 && cfg.m.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "FCM fuzzifier must exceed 1, got {}",
            cfg.m
        )));
    }
    let start = Instant::now();
    let n = x.len();
    let mut w = init_probabilities(n, k, cfg.seed).into_vector();
    let mut next = w.clone();
    let mut centers = vec![vec![0.0; x.dim()]; k];
    let mut trace = Vec::new();
    let mut termination = Termination::NotConverged;
    for it in 1..=cfg.max_iterations {
        fcm_centers(x, &w, k, cfg.m, &mut centers);
        fcm_memberships(x, &centers, cfg.m, &mut next);
        let change = w
            .iter()
            .zip(&next)
            .fold(0.0_f64, |a, (u, v)| a.max((u - v).abs()));
        std::mem::swap(&mut w, &mut next);
        let wm = ProbabilityMatrix::from_vector_unchecked(n, k, w.clone())?;
        trace.push(IterationRecord {
            iteration: it,
            objective: fcm_objective(x, &wm, &centers, cfg.m),
            step_length: change,
            active_count: 0,
            wall_time: start.elapsed().as_secs_f64(),
        });
        if change < cfg.tolerance {
            termination = Termination::Converged;
            break;
        }
    }
    fcm_centers(x, &w, k, cfg.m, &mut centers);
    let probabilities = ProbabilityMatrix::from_vector_unchecked(n, k, w)?;
    Ok(ClusterResult {
        objective: fcm_objective(x, &probabilities, &centers, cfg.m),
        labels: labels_from(&probabilities),
        probabilities,
        centers,
        iterations: trace.len(),
        termination,
        trace,
        seed: cfg.seed,
        elapsed: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(points: &[f64]) -> Dataset {
        let rows: Vec<Vec<f64>> = points.iter().map(|&v| vec![v]).collect();
        Dataset::from_rows("line", &rows, None).unwrap()
    }

    fn clouds() -> Dataset {
        let mut rows = Vec::new();
        for (cx, cy) in [(0.0, 0.0), (8.0, 0.0), (0.0, 8.0)] {
            for t in 0..10 {
                let a = t as f64;
                rows.push(vec![cx + (a * 1.7).sin(), cy + (a * 0.9).cos()]);
            }
        }
        Dataset::from_rows("clouds", &rows, None).unwrap()
    }

    #[test]
    fn k_equals_l_has_zero_sse() {
        let x = line(&[0.0, 1.0, 5.0, 9.0]);
        assert_eq!(kmeans_pp(&x, 4, 3).unwrap().objective, 0.0);
    }

    #[test]
    fn single_cluster_is_total_variance() {
        let x = line(&[0.0, 2.0, 4.0]);
        assert!((kmeans_pp(&x, 1, 0).unwrap().objective - 8.0).abs() < 1e-12);
    }

    #[test]
    fn lloyd_sse_non_increasing() {
        let x = clouds();
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let init = kmeans_pp_centers(&x, 4, &mut rng);
            let out = lloyd(&x, &init, 100);
            assert!(out.sse_trace.windows(2).all(|w| w[1] <= w[0] + 1e-9));
            assert!(out.converged);
        }
    }

    #[test]
    fn lloyd_reseeds_empty_cluster() {
        let x = line(&[0.0, 0.1, 10.0, 10.1]);
        let out = lloyd(&x, &[vec![0.0], vec![10.0], vec![100.0]], 50);
        let mut used = out.labels.clone();
        used.sort();
        used.dedup();
        assert_eq!(used.len(), 3);
    }

    #[test]
    fn kmeans_pp_is_deterministic() {
        let x = clouds();
        let a = kmeans_pp(&x, 3, 5).unwrap();
        let b = kmeans_pp(&x, 3, 5).unwrap();
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.objective, b.objective);
    }

    #[test]
    fn fcm_rows_sum_to_one_and_objective_decreases() {
        let x = clouds();
        let r = fcm(&x, 3, &FcmConfig::default().with_seed(2)).unwrap();
        for row in r.probabilities.rows() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(r
            .trace
            .windows(2)
            .all(|w| w[1].objective <= w[0].objective + 1e-9));
        assert!(r.converged());
    }

    #[test]
    fn fcm_coincident_point_gets_full_membership() {
        let x = line(&[0.0, 4.0]);
        let mut w = vec![0.0; 4];
        fcm_memberships(&x, &[vec![0.0], vec![1.0]], 1.3, &mut w);
        assert_eq!(&w[..2], &[1.0, 0.0]);
        fcm_memberships(&x, &[vec![0.0], vec![0.0]], 1.3, &mut w);
        assert_eq!(&w[..2], &[1.0, 0.0]);
    }

    #[test]
    fn large_m_approaches_uniform() {
        let x = clouds();
        let centers = [vec![0.0, 0.0], vec![8.0, 0.0], vec![0.0, 8.0]];
        let spread = |m: f64| {
            let mut w = vec![0.0; x.len() * 3];
            fcm_memberships(&x, &centers, m, &mut w);
            w.iter().fold(0.0_f64, |a, v| a.max((v - 1.0 / 3.0).abs()))
        };
        assert!(spread(10.0) < spread(2.0));
        assert!(spread(1e4) < 1e-3);
    }

    #[test]
    fn fcm_rejects_m_of_one() {
        assert!(fcm(&clouds(), 2, &FcmConfig::with_m(1.0)).is_err());
    }
}
