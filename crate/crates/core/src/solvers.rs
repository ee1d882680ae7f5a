//! AGP, MSAGP and FMSAGP: active-set gradient projection on the product of
//! probability simplices.
//!
//! All three share one iteration: project the gradient onto the null space
//! of the active constraints, run the multiplier test when the projected
//! direction vanishes, take a step, snap newly zeroed coordinates into the
//! active set and update the projection. They differ in the step rule (AGP:
//! fixed length clipped to the feasible maximum; MSAGP/FMSAGP: the feasible
//! maximum under a monotone-descent safeguard) and in how the projection
//! follows the active set (FMSAGP: rank-one updates; the others: rebuild).

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::constraints::{multipliers, ActiveSet, ConstraintSystem, Projection, ACTIVE_TOLERANCE};
use crate::data::{
    child_seed, init_probabilities, labels_from, ClusterResult, Dataset, IterationRecord,
    ProbabilityMatrix, Termination, ROW_SUM_TOLERANCE,
};
use crate::error::{Error, Result};
use crate::objective::{centers, gradient_raw, objective_unconstrained};

const MAX_HALVINGS: usize = 50;
const MIN_STEP: f64 = 1e-15;
const ARMIJO_C: f64 = 1e-4;
const STALL_WINDOW: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Agp,
    Msagp,
    Fmsagp,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Agp, Method::Msagp, Method::Fmsagp];

    pub fn name(self) -> &'static str {
        match self {
            Method::Agp => "agp",
            Method::Msagp => "msagp",
            Method::Fmsagp => "fmsagp",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "agp" => Ok(Method::Agp),
            "msagp" => Ok(Method::Msagp),
            "fmsagp" => Ok(Method::Fmsagp),
            other => Err(Error::InvalidInput(format!(
                "unknown solver method '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub method: Method,
    /// Fixed step for AGP; ignored by the other methods.
    pub step_length: f64,
    pub max_iterations: usize,
    /// Threshold on ‖d‖∞ below which the multiplier test runs.
    pub direction_tolerance: f64,
    /// Relative objective change counted as a stall.
    pub objective_tolerance: f64,
    pub seed: u64,
    /// Largest accepted L·K.
    pub lk_cap: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: Method::Fmsagp,
            step_length: 0.01,
            max_iterations: 200_000,
            direction_tolerance: 1e-8,
            objective_tolerance: 1e-12,
            seed: 0,
            lk_cap: 20_000,
        }
    }
}

impl SolverConfig {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_step_length(mut self, step: f64) -> Self {
        self.step_length = step;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.step_length) {
            return Err(Error::InvalidInput("step_length must be positive".into()));
        }
        if !positive(self.direction_tolerance) || !positive(self.objective_tolerance) {
            return Err(Error::InvalidInput("tolerances must be positive".into()));
        }
        Ok(())
    }
}

/// Largest t with p + t·d ≥ 0: min of −p_r/d_r over p_r > 0, d_r < 0.
/// None when nothing blocks the direction.
pub fn max_step(p: &[f64], d: &[f64]) -> Option<f64> {
    p.iter()
        .zip(d)
        .filter(|(&pr, &dr)| pr > 0.0 && dr < 0.0)
        .map(|(&pr, &dr)| -pr / dr)
        .min_by(f64::total_cmp)
}

/// AGP's applied step: the configured length, clipped to the blocking bound.
pub fn agp_step_length(step_length: f64, t_max: Option<f64>) -> f64 {
    t_max.map_or(step_length, |t| step_length.min(t))
}

/// Stepwise solver state; `solve` drives it to termination.
pub struct PkmSolver<'a> {
    x: &'a Dataset,
    k: usize,
    cfg: SolverConfig,
    sys: ConstraintSystem,
    p: Vec<f64>,
    active: ActiveSet,
    proj: Projection,
    objective: f64,
    grad: Vec<f64>,
    direction: Vec<f64>,
    trial: Vec<f64>,
    iteration: usize,
    stall: usize,
    force_escape: bool,
    trace: Vec<IterationRecord>,
    start: Instant,
    done: Option<Termination>,
}

impl<'a> PkmSolver<'a> {
    pub fn new(x: &'a Dataset, p0: ProbabilityMatrix, cfg: SolverConfig) -> Result<Self> {
        cfg.validate()?;
        let (l, k) = (p0.n_points(), p0.n_clusters());
        check_problem(x, k, &cfg)?;
        if l != x.len() {
            return Err(Error::InvalidInput(format!(
                "initial probabilities have {l} rows for {} points",
                x.len()
            )));
        }
        p0.check_feasible(ROW_SUM_TOLERANCE)?;
        let start = Instant::now();
        let sys = ConstraintSystem::new(l, k);
        let mut p = p0.into_vector();
        snap_rows(&mut p, k);
        let active = ActiveSet::from_probabilities(&sys, &p, 0.0)?;
        let proj = Projection::direct(&sys, &active)?;
        let objective = objective_unconstrained(x, &p, k)?;
        let grad = gradient_raw(x, &p, k)?;
        let trace = vec![IterationRecord {
            iteration: 0,
            objective,
            step_length: 0.0,
            active_count: active.len(),
            wall_time: start.elapsed().as_secs_f64(),
        }];
        Ok(Self {
            x,
            k,
            cfg,
            sys,
            direction: vec![0.0; p.len()],
            trial: Vec::with_capacity(p.len()),
            p,
            active,
            proj,
            objective,
            grad,
            iteration: 0,
            stall: 0,
            force_escape: false,
            trace,
            start,
            done: None,
        })
    }

    /// Current iterate in row-major vector order.
    pub fn probabilities(&self) -> &[f64] {
        &self.p
    }

    pub fn objective(&self) -> f64 {
        self.objective
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn active_count(&self) -> usize {
        self.active.len()
    }

    pub fn trace(&self) -> &[IterationRecord] {
        &self.trace
    }

    pub fn termination(&self) -> Option<Termination> {
        self.done
    }

    /// Advances one iteration. Returns the termination reason once reached.
    pub fn step(&mut self) -> Result<Option<Termination>> {
        if self.done.is_some() {
            return Ok(self.done);
        }
        if self.iteration >= self.cfg.max_iterations {
            self.done = Some(Termination::NotConverged);
            return Ok(self.done);
        }

        self.proj
            .projected_gradient_into(&self.grad, &mut self.direction);
        let small = inf_norm(&self.direction) < self.cfg.direction_tolerance;
        if small || self.force_escape {
            self.force_escape = false;
            match multipliers(&self.sys, &self.active, &self.grad)?.release() {
                None => {
                    self.done = Some(Termination::Kkt);
                    return Ok(self.done);
                }
                Some(r) => {
                    self.active.remove(r);
                    self.proj = Projection::direct(&self.sys, &self.active)?;
                    self.proj
                        .projected_gradient_into(&self.grad, &mut self.direction);
                }
            }
        }

        let t_max = max_step(&self.p, &self.direction);
        let accepted = match self.cfg.method {
            Method::Agp => {
                self.search(agp_step_length(self.cfg.step_length, t_max), |_, _| true)?
            }
            Method::Msagp | Method::Fmsagp => match t_max {
                Some(t) => {
                    let current = self.objective;
                    self.search(t, |_, j| j <= current)?
                }
                None => {
                    let current = self.objective;
                    let slope: f64 = self
                        .grad
                        .iter()
                        .zip(&self.direction)
                        .map(|(g, d)| g * d)
                        .sum();
                    self.search(1.0, |t, j| j <= current + ARMIJO_C * t * slope)?
                }
            },
        };

        let previous = self.objective;
        let step_length = match accepted {
            Some((t, j)) => {
                std::mem::swap(&mut self.p, &mut self.trial);
                self.objective = j;
                self.update_active_set()?;
                self.grad = gradient_raw(self.x, &self.p, self.k)?;
                t
            }
            None => {
                self.force_escape = true;
                0.0
            }
        };

        self.iteration += 1;
        self.trace.push(IterationRecord {
            iteration: self.iteration,
            objective: self.objective,
            step_length,
            active_count: self.active.len(),
            wall_time: self.start.elapsed().as_secs_f64(),
        });

        let change = (previous - self.objective).abs();
        if change <= self.cfg.objective_tolerance * previous.abs().max(f64::MIN_POSITIVE) {
            self.stall += 1;
        } else {
            self.stall = 0;
        }
        if self.stall >= STALL_WINDOW {
            self.stall = 0;
            if multipliers(&self.sys, &self.active, &self.grad)?
                .release()
                .is_none()
            {
                self.done = Some(Termination::ObjectiveStall);
            }
        }
        Ok(self.done)
    }

    /// Tries t, t/2, t/4, ... until `accept(t, J(trial))` holds. Trials that
    /// empty a cluster are rejected.
    fn search(
        &mut self,
        mut t: f64,
        accept: impl Fn(f64, f64) -> bool,
    ) -> Result<Option<(f64, f64)>> {
        for _ in 0..=MAX_HALVINGS {
            if t < MIN_STEP {
                break;
            }
            build_trial(&self.p, &self.direction, t, self.k, &mut self.trial);
            match objective_unconstrained(self.x, &self.trial, self.k) {
                Ok(j) if accept(t, j) => return Ok(Some((t, j))),
                Ok(_) | Err(Error::DegenerateCluster { .. }) => {}
                Err(e) => return Err(e),
            }
            t *= 0.5;
        }
        Ok(None)
    }

    fn update_active_set(&mut self) -> Result<()> {
        let mut added = Vec::new();
        for (r, &v) in self.p.iter().enumerate() {
            if v == 0.0 && !self.active.contains(r) {
                self.active.insert(r)?;
                added.push(r);
            }
        }
        if added.is_empty() {
            return Ok(());
        }
        match self.cfg.method {
            Method::Fmsagp => {
                for r in added {
                    self.proj.add_row(r)?;
                }
            }
            Method::Agp | Method::Msagp => {
                self.proj = Projection::direct(&self.sys, &self.active)?;
            }
        }
        Ok(())
    }

    /// Runs to termination and packages the result.
    pub fn run(mut self) -> Result<ClusterResult> {
        let termination = loop {
            if let Some(t) = self.step()? {
                break t;
            }
        };
        let probabilities = ProbabilityMatrix::from_vector_unchecked(self.x.len(), self.k, self.p)?;
        Ok(ClusterResult {
            centers: centers(self.x, &probabilities)?,
            labels: labels_from(&probabilities),
            probabilities,
            objective: self.objective,
            iterations: self.iteration,
            termination,
            trace: self.trace,
            seed: self.cfg.seed,
            elapsed: self.start.elapsed().as_secs_f64(),
        })
    }
}

fn check_problem(x: &Dataset, k: usize, cfg: &SolverConfig) -> Result<()> {
    if k == 0 || k > x.len() {
        return Err(Error::InvalidInput(format!(
            "K = {k} must be between 1 and the number of points ({})",
            x.len()
        )));
    }
    let lk = x.len() * k;
    if lk > cfg.lk_cap {
        return Err(Error::DimensionCap {
            lk,
            cap: cfg.lk_cap,
        });
    }
    Ok(())
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Zeroes entries at or below the activity tolerance and renormalizes rows.
fn snap_rows(p: &mut [f64], k: usize) {
    for row in p.chunks_exact_mut(k) {
        let mut sum = 0.0;
        for v in row.iter_mut() {
            if *v <= ACTIVE_TOLERANCE {
                *v = 0.0;
            }
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
}

fn build_trial(p: &[f64], d: &[f64], t: f64, k: usize, out: &mut Vec<f64>) {
    out.clear();
    out.extend(p.iter().zip(d).map(|(pr, dr)| pr + t * dr));
    snap_rows(out, k);
}

/// Solves from a random start, restarting once from a derived seed if a
/// cluster degenerates.
pub fn solve(x: &Dataset, k: usize, cfg: &SolverConfig) -> Result<ClusterResult> {
    check_problem(x, k, cfg)?;
    match solve_from(x, init_probabilities(x.len(), k, cfg.seed), cfg) {
        Err(Error::DegenerateCluster { .. }) => {
            let retry = SolverConfig {
                seed: child_seed(cfg.seed, u64::MAX),
                ..cfg.clone()
            };
            solve_from(x, init_probabilities(x.len(), k, retry.seed), &retry)
        }
        other => other,
    }
}

pub fn solve_from(x: &Dataset, p0: ProbabilityMatrix, cfg: &SolverConfig) -> Result<ClusterResult> {
    PkmSolver::new(x, p0, cfg.clone())?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::objective;

    fn toy() -> Dataset {
        Dataset::from_rows("toy", &[vec![1.0, 1.0], vec![2.0, 2.0]], None).unwrap()
    }

    fn blobs() -> Dataset {
        let mut rows = Vec::new();
        for (cx, cy) in [(0.0, 0.0), (5.0, 1.0), (1.0, 6.0)] {
            for t in 0..8 {
                let a = t as f64 * 0.7;
                rows.push(vec![cx + 0.4 * a.cos(), cy + 0.3 * (1.3 * a).sin()]);
            }
        }
        Dataset::from_rows("blobs", &rows, None).unwrap()
    }

    #[test]
    fn max_step_examples() {
        assert_eq!(max_step(&[0.25, 0.75], &[-0.5, 0.5]), Some(0.5));
        assert_eq!(max_step(&[0.5, 0.5], &[-1.0, -1.0]), Some(0.5));
        assert_eq!(max_step(&[0.0, 1.0], &[-1.0, 1.0]), None);
        assert_eq!(max_step(&[0.3, 0.7], &[0.0, 0.0]), None);
    }

    #[test]
    fn agp_clipping() {
        assert_eq!(agp_step_length(0.01, Some(0.5)), 0.01);
        assert_eq!(agp_step_length(0.1, Some(0.05)), 0.05);
        assert_eq!(agp_step_length(0.1, None), 0.1);
    }

    #[test]
    fn trial_points_stay_feasible() {
        let p = [0.2, 0.8, 0.5, 0.5];
        let d = [1.0, -1.0, 0.0, 0.0];
        let mut out = Vec::new();
        build_trial(&p, &d, 0.8, 2, &mut out);
        assert_eq!(out, vec![1.0, 0.0, 0.5, 0.5]);
        build_trial(&p, &d, 0.3, 2, &mut out);
        assert!((out[0] - 0.5).abs() < 1e-15 && (out[0] + out[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn toy_reaches_a_vertex() {
        for method in Method::ALL {
            for seed in 0..10 {
                let r = solve(&toy(), 2, &SolverConfig::new(method).with_seed(seed)).unwrap();
                assert!(r.objective <= 1e-9, "{method} seed {seed}: {}", r.objective);
                assert_ne!(r.labels[0], r.labels[1]);
                assert!(r.converged());
            }
        }
    }

    #[test]
    fn iterates_feasible_and_monotone() {
        let x = blobs();
        for method in [Method::Msagp, Method::Fmsagp] {
            let p0 = init_probabilities(x.len(), 3, 4);
            let mut s = PkmSolver::new(&x, p0, SolverConfig::new(method)).unwrap();
            let mut prev = s.objective();
            while s.step().unwrap().is_none() {
                for row in s.probabilities().chunks(3) {
                    assert!(row.iter().all(|&v| v >= 0.0));
                    assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
                }
                assert!(s.objective() <= prev + 1e-12);
                prev = s.objective();
            }
            assert_eq!(s.termination(), Some(Termination::Kkt));
        }
    }

    #[test]
    fn result_objective_matches_probabilities() {
        let x = blobs();
        for method in Method::ALL {
            let r = solve(&x, 3, &SolverConfig::new(method).with_seed(1)).unwrap();
            let j = objective(&x, &r.probabilities).unwrap();
            assert!((j - r.objective).abs() <= 1e-9 * j.max(1.0));
            let iters: Vec<usize> = r.trace.iter().map(|t| t.iteration).collect();
            assert!(iters.windows(2).all(|w| w[1] == w[0] + 1));
        }
    }

    #[test]
    fn growth_phase_bounded() {
        let x = blobs();
        let p0 = init_probabilities(x.len(), 3, 9);
        let mut s = PkmSolver::new(&x, p0, SolverConfig::new(Method::Fmsagp)).unwrap();
        let mut prev = 0;
        while s.step().unwrap().is_none() {
            if s.active_count() < prev {
                break;
            }
            assert!(s.active_count() <= 2 * x.len());
            prev = s.active_count();
        }
    }

    #[test]
    fn rejects_bad_problems() {
        let cfg = SolverConfig {
            lk_cap: 3,
            ..SolverConfig::default()
        };
        assert!(matches!(
            solve(&toy(), 2, &cfg),
            Err(Error::DimensionCap { lk: 4, cap: 3 })
        ));
        assert!(solve(&toy(), 3, &SolverConfig::default()).is_err());
        let bad = SolverConfig::default().with_step_length(0.0);
        assert!(solve(&toy(), 2, &bad).is_err());
    }

    #[test]
    fn iteration_cap_is_reported() {
        let cfg = SolverConfig {
            max_iterations: 2,
            ..SolverConfig::new(Method::Agp)
        };
        let r = solve(&blobs(), 3, &cfg).unwrap();
        assert_eq!(r.termination, Termination::NotConverged);
        assert_eq!(r.iterations, 2);
    }

    #[test]
    fn method_parsing() {
        assert_eq!("MSAGP".parse::<Method>().unwrap(), Method::Msagp);
        assert!("newton".parse::<Method>().is_err());
    }
}
