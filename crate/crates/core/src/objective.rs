//! PKM objective, probability-weighted centers and the analytic gradient.

use std::ops::Deref;

use crate::data::{Dataset, ProbabilityMatrix};
use crate::error::{Error, Result};

/// Column sums below this are treated as an empty cluster.
pub const DEGENERACY_FLOOR: f64 = 1e-12;

/// ∂J/∂p_ij laid out in the same row-major order as the probability vector.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientVector(Vec<f64>);

impl GradientVector {
    pub fn new(entries: Vec<f64>) -> Self {
        Self(entries)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for GradientVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Flat K×D centers and the column sums they were divided by.
pub(crate) fn centers_raw(x: &Dataset, p: &[f64], k: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = x.dim();
    let mut mass = vec![0.0; k];
    let mut sums = vec![0.0; k * d];
    for (i, row) in p.chunks_exact(k).enumerate() {
        let xi = x.point(i);
        for (j, &pij) in row.iter().enumerate() {
            if pij == 0.0 {
                continue;
            }
            mass[j] += pij;
            for (s, v) in sums[j * d..(j + 1) * d].iter_mut().zip(xi) {
                *s += pij * v;
            }
        }
    }
    for (j, &m) in mass.iter().enumerate() {
        if m.is_nan() || m < DEGENERACY_FLOOR {
            return Err(Error::DegenerateCluster {
                cluster: j,
                mass: m,
            });
        }
        sums[j * d..(j + 1) * d].iter_mut().for_each(|s| *s /= m);
    }
    Ok((sums, mass))
}

/// c_j = Σ_i p_ij x_i / Σ_i p_ij for every cluster.
pub fn centers(x: &Dataset, p: &ProbabilityMatrix) -> Result<Vec<Vec<f64>>> {
    check_shapes(x, p)?;
    let (flat, _) = centers_raw(x, p.as_vector(), p.n_clusters())?;
    Ok(flat.chunks_exact(x.dim()).map(<[f64]>::to_vec).collect())
}

/// Evaluates Σ_j Σ_i p_ij ‖x_i − c_j(P)‖² for any nonnegative vector of length
/// L·K, without requiring unit row sums. This is the unconstrained extension
/// the gradient differentiates.
pub fn objective_unconstrained(x: &Dataset, p: &[f64], k: usize) -> Result<f64> {
    if p.len() != x.len() * k {
        return Err(Error::InvalidInput(format!(
            "probability vector of length {} for {} points and {k} clusters",
            p.len(),
            x.len()
        )));
    }
    let (c, _) = centers_raw(x, p, k)?;
    let d = x.dim();
    let mut total = 0.0;
    for (i, row) in p.chunks_exact(k).enumerate() {
        let xi = x.point(i);
        for (j, &pij) in row.iter().enumerate() {
            if pij != 0.0 {
                total += pij * sq_dist(xi, &c[j * d..(j + 1) * d]);
            }
        }
    }
    Ok(total)
}

/// The PKM objective: soft K-means with the centers eliminated.
pub fn objective(x: &Dataset, p: &ProbabilityMatrix) -> Result<f64> {
    check_shapes(x, p)?;
    objective_unconstrained(x, p.as_vector(), p.n_clusters())
}

/// Soft K-means objective for explicitly supplied centers.
pub fn soft_kmeans_objective(x: &Dataset, p: &ProbabilityMatrix, centers: &[Vec<f64>]) -> f64 {
    p.rows()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .zip(centers)
                .map(|(&pij, c)| pij * sq_dist(x.point(i), c))
                .sum::<f64>()
        })
        .sum()
}

/// Analytic gradient of the PKM objective:
///
/// ∂J/∂p_ij = ‖x_i − c_j‖² − (2 / Σ_k p_kj) Σ_k p_kj (x_k − c_j)ᵀ (x_i − c_j)
///
/// These are raw partials of the unconstrained extension, not derivatives
/// restricted to the simplex. The correction sum vanishes in exact arithmetic
/// (Σ_k p_kj (x_k − c_j) = 0 by the definition of c_j) but is evaluated as
/// written from the cached residuals.
pub fn gradient(x: &Dataset, p: &ProbabilityMatrix) -> Result<GradientVector> {
    check_shapes(x, p)?;
    gradient_raw(x, p.as_vector(), p.n_clusters()).map(GradientVector)
}

pub(crate) fn gradient_raw(x: &Dataset, p: &[f64], k: usize) -> Result<Vec<f64>> {
    let d = x.dim();
    let n = x.len();
    let (c, mass) = centers_raw(x, p, k)?;

    // residuals[(i*k + j)*d ..] = x_i - c_j
    let mut residuals = vec![0.0; n * k * d];
    let mut correction = vec![0.0; k * d];
    for i in 0..n {
        let xi = x.point(i);
        for j in 0..k {
            let cj = &c[j * d..(j + 1) * d];
            let r = &mut residuals[(i * k + j) * d..(i * k + j + 1) * d];
            let pij = p[i * k + j];
            let acc = &mut correction[j * d..(j + 1) * d];
            for t in 0..d {
                r[t] = xi[t] - cj[t];
                acc[t] += pij * r[t];
            }
        }
    }

    let mut grad = vec![0.0; n * k];
    for i in 0..n {
        for j in 0..k {
            let r = &residuals[(i * k + j) * d..(i * k + j + 1) * d];
            let v = &correction[j * d..(j + 1) * d];
            let mut f = 0.0;
            let mut dot = 0.0;
            for t in 0..d {
                f += r[t] * r[t];
                dot += v[t] * r[t];
            }
            grad[i * k + j] = f - 2.0 / mass[j] * dot;
        }
    }
    Ok(grad)
}

fn check_shapes(x: &Dataset, p: &ProbabilityMatrix) -> Result<()> {
    if x.len() != p.n_points() {
        return Err(Error::InvalidInput(format!(
            "dataset has {} points but probability matrix has {} rows",
            x.len(),
            p.n_points()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::init_probabilities;

    fn toy() -> Dataset {
        Dataset::from_rows("toy", &[vec![1.0, 1.0], vec![2.0, 2.0]], None).unwrap()
    }

    #[test]
    fn hard_assignment_centers_are_means() {
        let x = Dataset::from_rows("x", &[vec![0.0], vec![2.0], vec![10.0]], None).unwrap();
        let p = ProbabilityMatrix::one_hot(&[0, 0, 1], 2).unwrap();
        let c = centers(&x, &p).unwrap();
        assert_eq!(c, vec![vec![1.0], vec![10.0]]);
    }

    #[test]
    fn uniform_probabilities_give_global_mean() {
        let x = Dataset::from_rows("x", &[vec![0.0, 1.0], vec![2.0, 5.0], vec![4.0, 0.0]], None)
            .unwrap();
        let p = ProbabilityMatrix::from_vector(3, 3, vec![1.0 / 3.0; 9]).unwrap();
        for c in centers(&x, &p).unwrap() {
            assert!((c[0] - 2.0).abs() < 1e-12 && (c[1] - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn singleton_centers() {
        let p = ProbabilityMatrix::one_hot(&[0, 1], 2).unwrap();
        assert_eq!(
            centers(&toy(), &p).unwrap(),
            vec![vec![1.0, 1.0], vec![2.0, 2.0]]
        );
    }

    #[test]
    fn empty_column_is_degenerate() {
        let p = ProbabilityMatrix::one_hot(&[0, 0], 2).unwrap();
        assert!(matches!(
            centers(&toy(), &p),
            Err(Error::DegenerateCluster { cluster: 1, .. })
        ));
        assert!(objective(&toy(), &p).is_err());
        assert!(gradient(&toy(), &p).is_err());
    }

    #[test]
    fn toy_extremes() {
        let p = ProbabilityMatrix::one_hot(&[0, 1], 2).unwrap();
        assert_eq!(objective(&toy(), &p).unwrap(), 0.0);
        let p = ProbabilityMatrix::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        assert!((objective(&toy(), &p).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn toy_matches_closed_form() {
        // J(p11, p21) = (p11 + p21 - p11² - p21²) / ((p11 + p21)(2 - p11 - p21)) · ‖x1 - x2‖²
        for &(a, b) in &[(0.3, 0.9), (0.1, 0.2), (0.75, 0.5), (0.99, 0.01)] {
            let p = ProbabilityMatrix::from_rows(&[vec![a, 1.0 - a], vec![b, 1.0 - b]]).unwrap();
            let closed = (a + b - a * a - b * b) / ((a + b) * (2.0 - a - b)) * 2.0;
            assert!((objective(&toy(), &p).unwrap() - closed).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_points_have_zero_objective_and_gradient() {
        let x = Dataset::from_rows("x", &vec![vec![3.0, -1.0]; 5], None).unwrap();
        let p = init_probabilities(5, 3, 11);
        assert!(objective(&x, &p).unwrap().abs() < 1e-24);
        assert!(gradient(&x, &p).unwrap().iter().all(|g| g.abs() < 1e-12));
    }

    #[test]
    fn soft_kmeans_hand_value() {
        let x = Dataset::from_rows("x", &[vec![0.0], vec![2.0]], None).unwrap();
        let p = ProbabilityMatrix::from_rows(&[vec![1.0], vec![1.0]]).unwrap();
        assert_eq!(soft_kmeans_objective(&x, &p, &[vec![0.0]]), 4.0);
    }

    #[test]
    fn substitution_identity() {
        let x = Dataset::from_rows(
            "x",
            &[
                vec![0.0, 1.0],
                vec![2.0, 5.0],
                vec![4.0, 0.0],
                vec![-1.0, 2.5],
            ],
            None,
        )
        .unwrap();
        let p = init_probabilities(4, 3, 5);
        let c = centers(&x, &p).unwrap();
        let j = objective(&x, &p).unwrap();
        assert!((soft_kmeans_objective(&x, &p, &c) - j).abs() <= 1e-12 * j);
    }

    #[test]
    fn single_cluster_gradient() {
        let x = Dataset::from_rows("x", &[vec![0.0, 1.0], vec![2.0, 5.0], vec![4.0, 0.0]], None)
            .unwrap();
        let p = ProbabilityMatrix::from_rows(&[vec![1.0], vec![1.0], vec![1.0]]).unwrap();
        let g = gradient(&x, &p).unwrap();
        let mean = [2.0, 2.0];
        for i in 0..3 {
            let r: Vec<f64> = x.point(i).iter().zip(&mean).map(|(a, b)| a - b).collect();
            let mut corr = 0.0;
            for k in 0..3 {
                let rk: Vec<f64> = x.point(k).iter().zip(&mean).map(|(a, b)| a - b).collect();
                corr += rk.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>();
            }
            let expected = r.iter().map(|v| v * v).sum::<f64>() - 2.0 / 3.0 * corr;
            assert!((g[i] - expected).abs() < 1e-12);
        }
    }
}
