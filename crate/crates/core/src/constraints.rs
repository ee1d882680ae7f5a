//! The linear constraint system AP ≥ 0, EP = 1, its active set, and the
//! projection matrices G = Nᵀ(NNᵀ)⁻¹N and Q = I − G.
//!
//! Every row of A (a standard basis vector) and of E (the ones over one
//! point's K coordinates) touches a single point, so N is block-diagonal by
//! point after a row permutation. G and Q are therefore block-diagonal with
//! K×K blocks and are stored as those L blocks. `dense` rebuilds the full
//! LK×LK matrices from the unpermuted N for verification.

use crate::error::{Error, Result};

/// Coordinates at or below this value are snapped to zero and activated.
pub const ACTIVE_TOLERANCE: f64 = 1e-10;

/// Pivot and rank-one denominators below this are treated as singular.
pub const RANK_TOLERANCE: f64 = 1e-12;

/// Structural description of A (identity, LK×LK) and E (L×LK row-sum rows).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConstraintSystem {
    n_points: usize,
    n_clusters: usize,
}

impl ConstraintSystem {
    pub fn new(n_points: usize, n_clusters: usize) -> Self {
        Self {
            n_points,
            n_clusters,
        }
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn n_clusters(&self) -> usize {
        self.n_clusters
    }

    /// LK, the length of the vectorized probability matrix.
    pub fn dim(&self) -> usize {
        self.n_points * self.n_clusters
    }

    /// Point whose equality row covers coordinate r.
    #[inline]
    pub fn point_of(&self, r: usize) -> usize {
        r / self.n_clusters
    }
}

/// Coordinates r with p_r = 0 whose inequality rows are in A₁. The equality
/// rows of E are always part of N and are not stored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActiveSet {
    n_clusters: usize,
    flags: Vec<bool>,
    per_point: Vec<usize>,
    count: usize,
}

impl ActiveSet {
    pub fn empty(sys: &ConstraintSystem) -> Self {
        Self {
            n_clusters: sys.n_clusters,
            flags: vec![false; sys.dim()],
            per_point: vec![0; sys.n_points],
            count: 0,
        }
    }

    pub fn from_coords(sys: &ConstraintSystem, coords: &[usize]) -> Result<Self> {
        let mut set = Self::empty(sys);
        for &r in coords {
            set.insert(r)?;
        }
        Ok(set)
    }

    /// Activates every coordinate of `p` at or below `tol`.
    pub fn from_probabilities(sys: &ConstraintSystem, p: &[f64], tol: f64) -> Result<Self> {
        let zeros: Vec<usize> = (0..p.len()).filter(|&r| p[r] <= tol).collect();
        Self::from_coords(sys, &zeros)
    }

    /// Adds coordinate r. Fails if that would activate a point's whole row.
    pub fn insert(&mut self, r: usize) -> Result<bool> {
        if r >= self.flags.len() {
            return Err(Error::InvalidInput(format!("coordinate {r} out of range")));
        }
        if self.flags[r] {
            return Ok(false);
        }
        let i = r / self.n_clusters;
        if self.per_point[i] + 1 >= self.n_clusters {
            return Err(Error::RankDeficient { point: i });
        }
        self.flags[r] = true;
        self.per_point[i] += 1;
        self.count += 1;
        Ok(true)
    }

    pub fn remove(&mut self, r: usize) -> bool {
        if r < self.flags.len() && self.flags[r] {
            self.flags[r] = false;
            self.per_point[r / self.n_clusters] -= 1;
            self.count -= 1;
            true
        } else {
            false
        }
    }

    #[inline]
    pub fn contains(&self, r: usize) -> bool {
        self.flags[r]
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// Active coordinates in ascending order.
    pub fn coords(&self) -> Vec<usize> {
        (0..self.flags.len()).filter(|&r| self.flags[r]).collect()
    }

    /// Local (within-point) indices of point i's active coordinates.
    fn local(&self, i: usize, out: &mut Vec<usize>) {
        out.clear();
        let base = i * self.n_clusters;
        out.extend((0..self.n_clusters).filter(|&c| self.flags[base + c]));
    }
}

/// In-place lower Cholesky of the n×n row-major matrix `m`.
fn cholesky(m: &mut [f64], n: usize, point: usize) -> Result<()> {
    let scale = (0..n).map(|i| m[i * n + i]).fold(1.0_f64, f64::max);
    for j in 0..n {
        let mut diag = m[j * n + j];
        for t in 0..j {
            diag -= m[j * n + t] * m[j * n + t];
        }
        if diag.is_nan() || diag <= RANK_TOLERANCE * scale {
            return Err(Error::RankDeficient { point });
        }
        let diag = diag.sqrt();
        m[j * n + j] = diag;
        for i in j + 1..n {
            let mut v = m[i * n + j];
            for t in 0..j {
                v -= m[i * n + t] * m[j * n + t];
            }
            m[i * n + j] = v / diag;
        }
    }
    Ok(())
}

/// Solves L Lᵀ y = b in place given the factor from `cholesky`.
fn cholesky_solve(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut v = b[i];
        for t in 0..i {
            v -= l[i * n + t] * b[t];
        }
        b[i] = v / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut v = b[i];
        for t in i + 1..n {
            v -= l[t * n + i] * b[t];
        }
        b[i] = v / l[i * n + i];
    }
}

/// One point's rows of N (active unit rows, then the ones row) with the
/// Cholesky factor of their Gram matrix.
struct BlockSystem {
    k: usize,
    m: usize,
    rows: Vec<f64>,
    chol: Vec<f64>,
}

impl BlockSystem {
    fn new(k: usize) -> Self {
        Self {
            k,
            m: 0,
            rows: Vec::with_capacity(k * k),
            chol: Vec::with_capacity(k * k),
        }
    }

    fn factor(&mut self, active_local: &[usize], point: usize) -> Result<()> {
        let k = self.k;
        self.m = active_local.len() + 1;
        self.rows.clear();
        for &c in active_local {
            self.rows
                .extend((0..k).map(|t| if t == c { 1.0 } else { 0.0 }));
        }
        self.rows.extend(std::iter::repeat_n(1.0, k));
        let m = self.m;
        self.chol.clear();
        self.chol.resize(m * m, 0.0);
        for s in 0..m {
            for t in 0..=s {
                let v: f64 = (0..k)
                    .map(|c| self.rows[s * k + c] * self.rows[t * k + c])
                    .sum();
                self.chol[s * m + t] = v;
                self.chol[t * m + s] = v;
            }
        }
        cholesky(&mut self.chol, m, point)
    }

    /// Writes Nᵀ(NNᵀ)⁻¹N into the K×K block `g`.
    fn projection(&self, g: &mut [f64], y: &mut Vec<f64>) {
        let (k, m) = (self.k, self.m);
        for c in 0..k {
            y.clear();
            y.extend((0..m).map(|s| self.rows[s * k + c]));
            cholesky_solve(&self.chol, m, y);
            for row in 0..k {
                g[row * k + c] = (0..m).map(|s| self.rows[s * k + row] * y[s]).sum();
            }
        }
    }

    /// Least-squares multipliers (NNᵀ)⁻¹N g for this block's gradient.
    fn multipliers(&self, grad: &[f64]) -> Vec<f64> {
        let (k, m) = (self.k, self.m);
        let mut q: Vec<f64> = (0..m)
            .map(|s| (0..k).map(|c| self.rows[s * k + c] * grad[c]).sum())
            .collect();
        cholesky_solve(&self.chol, m, &mut q);
        q
    }
}

/// G and Q over the current active set, stored as L blocks of size K×K.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    n_points: usize,
    n_clusters: usize,
    g: Vec<f64>,
}

impl Projection {
    /// Builds G = Nᵀ(NNᵀ)⁻¹N from a Cholesky factorization of NNᵀ.
    pub fn direct(sys: &ConstraintSystem, active: &ActiveSet) -> Result<Self> {
        let k = sys.n_clusters;
        let mut proj = Self {
            n_points: sys.n_points,
            n_clusters: k,
            g: vec![0.0; sys.n_points * k * k],
        };
        let mut block = BlockSystem::new(k);
        let mut local = Vec::with_capacity(k);
        let mut y = Vec::with_capacity(k);
        for i in 0..sys.n_points {
            active.local(i, &mut local);
            block.factor(&local, i)?;
            block.projection(&mut proj.g[i * k * k..(i + 1) * k * k], &mut y);
        }
        Ok(proj)
    }

    /// Rank-one update for activating coordinate r:
    /// G' = G + (Q n)(Q n)ᵀ / ⟨Q n, Q n⟩ with n = e_r.
    pub fn add_row(&mut self, r: usize) -> Result<()> {
        let k = self.n_clusters;
        let (i, c) = (r / k, r % k);
        let g = &mut self.g[i * k * k..(i + 1) * k * k];
        let mut u = [0.0; 64];
        let mut heap;
        let u: &mut [f64] = if k <= 64 {
            &mut u[..k]
        } else {
            heap = vec![0.0; k];
            &mut heap
        };
        for row in 0..k {
            u[row] = if row == c { 1.0 } else { 0.0 } - g[row * k + c];
        }
        let denom: f64 = u.iter().map(|v| v * v).sum();
        if denom < RANK_TOLERANCE {
            return Err(Error::DegenerateDirection { coordinate: r });
        }
        for a in 0..k {
            for b in 0..k {
                g[a * k + b] += u[a] * u[b] / denom;
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

    /// Point i's K×K block of G, row-major.
    pub fn g_block(&self, i: usize) -> &[f64] {
        let kk = self.n_clusters * self.n_clusters;
        &self.g[i * kk..(i + 1) * kk]
    }

    /// Point i's K×K block of Q = I − G, row-major.
    pub fn q_block(&self, i: usize) -> Vec<f64> {
        let k = self.n_clusters;
        self.g_block(i)
            .iter()
            .enumerate()
            .map(|(idx, g)| if idx / k == idx % k { 1.0 - g } else { -g })
            .collect()
    }

    /// d = −Q∇J.
    pub fn projected_gradient(&self, grad: &[f64]) -> Vec<f64> {
        let mut d = vec![0.0; grad.len()];
        self.projected_gradient_into(grad, &mut d);
        d
    }

    pub(crate) fn projected_gradient_into(&self, grad: &[f64], d: &mut [f64]) {
        let k = self.n_clusters;
        for i in 0..self.n_points {
            let gb = self.g_block(i);
            let gi = &grad[i * k..(i + 1) * k];
            for row in 0..k {
                let gg: f64 = (0..k).map(|c| gb[row * k + c] * gi[c]).sum();
                d[i * k + row] = gg - gi[row];
            }
        }
    }

    /// The full LK×LK matrix G.
    pub fn dense_g(&self) -> nalgebra::DMatrix<f64> {
        let k = self.n_clusters;
        let n = self.n_points * k;
        let mut g = nalgebra::DMatrix::zeros(n, n);
        for i in 0..self.n_points {
            let b = self.g_block(i);
            for a in 0..k {
                for c in 0..k {
                    g[(i * k + a, i * k + c)] = b[a * k + c];
                }
            }
        }
        g
    }

    /// The full LK×LK matrix Q.
    pub fn dense_q(&self) -> nalgebra::DMatrix<f64> {
        let n = self.n_points * self.n_clusters;
        nalgebra::DMatrix::identity(n, n) - self.dense_g()
    }
}

/// Multiplier estimates q = (NNᵀ)⁻¹N∇J split into q₁ (one per active
/// coordinate, ascending) and q₂ (one per point).
#[derive(Debug, Clone, PartialEq)]
pub struct Multipliers {
    pub inequality: Vec<(usize, f64)>,
    pub equality: Vec<f64>,
    /// Per-entry threshold below which an inequality multiplier counts as
    /// negative: 1e-9 · max(1, max |∇J| over the point's coordinates).
    pub thresholds: Vec<f64>,
}

impl Multipliers {
    /// Active coordinate to release, if any multiplier is negative.
    pub fn release(&self) -> Option<usize> {
        most_negative(
            self.inequality
                .iter()
                .zip(&self.thresholds)
                .filter(|((_, q), t)| *q < -**t)
                .map(|(e, _)| *e),
        )
    }
}

fn most_negative(entries: impl Iterator<Item = (usize, f64)>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (r, q) in entries {
        if q < 0.0 && best.is_none_or(|(_, b)| q < b) {
            best = Some((r, q));
        }
    }
    best.map(|(r, _)| r)
}

/// Most negative entry of q₁ (ties to the earliest), or None when q₁ ≥ 0.
pub fn choose_release(q1: &[(usize, f64)]) -> Option<usize> {
    most_negative(q1.iter().copied())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EscapeDecision {
    /// q₁ ≥ 0: the current point satisfies the KKT conditions.
    Stop,
    /// Release this active coordinate and rebuild the projection.
    Drop(usize),
}

pub fn multipliers(
    sys: &ConstraintSystem,
    active: &ActiveSet,
    grad: &[f64],
) -> Result<Multipliers> {
    let k = sys.n_clusters;
    let mut out = Multipliers {
        inequality: Vec::with_capacity(active.len()),
        equality: Vec::with_capacity(sys.n_points),
        thresholds: Vec::with_capacity(active.len()),
    };
    let mut block = BlockSystem::new(k);
    let mut local = Vec::with_capacity(k);
    for i in 0..sys.n_points {
        let gi = &grad[i * k..(i + 1) * k];
        active.local(i, &mut local);
        block.factor(&local, i)?;
        let q = block.multipliers(gi);
        let scale = gi.iter().fold(1.0_f64, |m, g| m.max(g.abs()));
        for (s, &c) in local.iter().enumerate() {
            out.inequality.push((i * k + c, q[s]));
            out.thresholds.push(1e-9 * scale);
        }
        out.equality.push(q[local.len()]);
    }
    Ok(out)
}

/// Lagrange-multiplier test at a point where the projected gradient vanishes.
pub fn escape_test(
    sys: &ConstraintSystem,
    active: &ActiveSet,
    grad: &[f64],
) -> Result<EscapeDecision> {
    Ok(match multipliers(sys, active, grad)?.release() {
        Some(r) => EscapeDecision::Drop(r),
        None => EscapeDecision::Stop,
    })
}

/// Full-matrix constructions straight from N = [A₁; E], used to verify the
/// block implementation.
pub mod dense {
    use nalgebra::{DMatrix, DVector};

    use super::{ActiveSet, ConstraintSystem};
    use crate::error::{Error, Result};

    /// N with the active rows of A in ascending order above the L rows of E.
    pub fn constraint_matrix(sys: &ConstraintSystem, active: &ActiveSet) -> DMatrix<f64> {
        let coords = active.coords();
        let (l, k) = (sys.n_points(), sys.n_clusters());
        let mut n = DMatrix::zeros(coords.len() + l, l * k);
        for (row, &r) in coords.iter().enumerate() {
            n[(row, r)] = 1.0;
        }
        for i in 0..l {
            for j in 0..k {
                n[(coords.len() + i, i * k + j)] = 1.0;
            }
        }
        n
    }

    /// (G, Q) with G = Nᵀ(NNᵀ)⁻¹N via a Cholesky solve on the full NNᵀ.
    pub fn projection(
        sys: &ConstraintSystem,
        active: &ActiveSet,
    ) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let n = constraint_matrix(sys, active);
        let chol = (&n * n.transpose())
            .cholesky()
            .ok_or(Error::RankDeficient { point: 0 })?;
        let g = n.transpose() * chol.solve(&n);
        let q = DMatrix::identity(g.nrows(), g.ncols()) - &g;
        Ok((g, q))
    }

    /// q = (NNᵀ)⁻¹N∇J in the row order of `constraint_matrix`.
    pub fn multipliers(
        sys: &ConstraintSystem,
        active: &ActiveSet,
        grad: &[f64],
    ) -> Result<DVector<f64>> {
        let n = constraint_matrix(sys, active);
        let chol = (&n * n.transpose())
            .cholesky()
            .ok_or(Error::RankDeficient { point: 0 })?;
        Ok(chol.solve(&(&n * DVector::from_column_slice(grad))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_abs(m: &nalgebra::DMatrix<f64>) -> f64 {
        m.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    #[test]
    fn no_active_rows_gives_half_blocks() {
        let sys = ConstraintSystem::new(2, 2);
        let p = Projection::direct(&sys, &ActiveSet::empty(&sys)).unwrap();
        for i in 0..2 {
            assert!(p.g_block(i).iter().all(|v| (v - 0.5).abs() < 1e-15));
        }
        let g = p.dense_g();
        assert_eq!(g[(0, 2)], 0.0);
    }

    #[test]
    fn full_vertex_gives_identity() {
        let sys = ConstraintSystem::new(3, 3);
        let active = ActiveSet::from_coords(&sys, &[1, 2, 3, 5, 6, 7]).unwrap();
        let p = Projection::direct(&sys, &active).unwrap();
        assert!(max_abs(&p.dense_q()) < 1e-12);
    }

    #[test]
    fn whole_row_active_is_rejected() {
        let sys = ConstraintSystem::new(2, 2);
        assert!(matches!(
            ActiveSet::from_coords(&sys, &[2, 3]),
            Err(Error::RankDeficient { point: 1 })
        ));
    }

    #[test]
    fn singular_block_factorization_fails() {
        let mut block = BlockSystem::new(2);
        assert!(block.factor(&[0, 1], 4).is_err());
    }

    #[test]
    fn rank_one_matches_direct() {
        let sys = ConstraintSystem::new(2, 4);
        let mut active = ActiveSet::empty(&sys);
        let mut p = Projection::direct(&sys, &active).unwrap();
        for r in [5, 1, 6, 3] {
            active.insert(r).unwrap();
            p.add_row(r).unwrap();
            let direct = Projection::direct(&sys, &active).unwrap();
            assert!(max_abs(&(p.dense_g() - direct.dense_g())) < 1e-12);
            assert!((p.dense_g()[(r, r)] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn adding_spanned_row_is_degenerate() {
        let sys = ConstraintSystem::new(1, 3);
        let active = ActiveSet::from_coords(&sys, &[0]).unwrap();
        let mut p = Projection::direct(&sys, &active).unwrap();
        assert!(matches!(
            p.add_row(0),
            Err(Error::DegenerateDirection { coordinate: 0 })
        ));
    }

    #[test]
    fn block_matches_dense_oracle() {
        let sys = ConstraintSystem::new(3, 3);
        let active = ActiveSet::from_coords(&sys, &[0, 4, 5]).unwrap();
        let (g, q) = dense::projection(&sys, &active).unwrap();
        let p = Projection::direct(&sys, &active).unwrap();
        assert!(max_abs(&(g - p.dense_g())) < 1e-12);
        assert!(max_abs(&(q - p.dense_q())) < 1e-12);
    }

    #[test]
    fn projected_gradient_zero_cases() {
        let sys = ConstraintSystem::new(2, 3);
        let p = Projection::direct(&sys, &ActiveSet::empty(&sys)).unwrap();
        assert!(p.projected_gradient(&[0.0; 6]).iter().all(|&v| v == 0.0));
        let full = ActiveSet::from_coords(&sys, &[0, 1, 4, 5]).unwrap();
        let p = Projection::direct(&sys, &full).unwrap();
        let d = p.projected_gradient(&[3.0, -1.0, 2.0, 0.5, 7.0, 1.0]);
        assert!(d.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn multipliers_have_closed_form() {
        let sys = ConstraintSystem::new(1, 4);
        let active = ActiveSet::from_coords(&sys, &[1, 3]).unwrap();
        let g = [2.0, 0.5, 4.0, 9.0];
        let q = multipliers(&sys, &active, &g).unwrap();
        // free mean (2 + 4) / 2 = 3
        assert_eq!(q.inequality.len(), 2);
        assert!((q.inequality[0].1 - (0.5 - 3.0)).abs() < 1e-12);
        assert!((q.inequality[1].1 - (9.0 - 3.0)).abs() < 1e-12);
        assert!((q.equality[0] - 3.0).abs() < 1e-12);
        assert_eq!(q.release(), Some(1));
        let oracle = dense::multipliers(&sys, &active, &g).unwrap();
        assert!((oracle[0] - q.inequality[0].1).abs() < 1e-12);
        assert!((oracle[2] - q.equality[0]).abs() < 1e-12);
    }

    #[test]
    fn release_choice() {
        assert_eq!(choose_release(&[(3, 0.3), (7, 0.1)]), None);
        assert_eq!(choose_release(&[(3, 0.3), (7, -0.2)]), Some(7));
        assert_eq!(choose_release(&[(3, -0.2), (7, -0.2)]), Some(3));
        assert_eq!(choose_release(&[]), None);
    }

    #[test]
    fn empty_active_set_stops() {
        let sys = ConstraintSystem::new(2, 2);
        let decision = escape_test(&sys, &ActiveSet::empty(&sys), &[1.0, 1.0, 2.0, 2.0]).unwrap();
        assert_eq!(decision, EscapeDecision::Stop);
    }

    #[test]
    fn dropping_released_row_gives_descent() {
        let sys = ConstraintSystem::new(1, 3);
        let mut active = ActiveSet::from_coords(&sys, &[0]).unwrap();
        let g = [0.0, 1.0, 1.0];
        let EscapeDecision::Drop(r) = escape_test(&sys, &active, &g).unwrap() else {
            panic!("expected a drop");
        };
        assert_eq!(r, 0);
        active.remove(r);
        let d = Projection::direct(&sys, &active)
            .unwrap()
            .projected_gradient(&g);
        assert!(d.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>() < 0.0);
        assert!(d[0] > 0.0);
    }
}
