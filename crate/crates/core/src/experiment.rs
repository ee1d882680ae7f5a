//! Experiment plumbing behind the `pkm` binary: algorithm selection,
//! multi-seed runs on a worker pool, metrics, and serializable reports.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{fcm, kmeans_pp, FcmConfig};
use crate::data::{child_seed, ClusterResult, Dataset, IterationRecord, Termination};
use crate::error::{Error, Result};
use crate::metrics::{ari, cluster_means, dbi, nmi, robustness, sse, v_measure};
use crate::solvers::{solve, Method, SolverConfig};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// A clustering algorithm together with its method-specific parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "snake_case")]
pub enum Algorithm {
    Pkm {
        method: Method,
        /// AGP step length; None means the solver default.
        step: Option<f64>,
    },
    KmeansPp,
    Fcm {
        /// None means the FCM default.
        m: Option<f64>,
    },
}

impl Algorithm {
    pub fn pkm(method: Method) -> Self {
        Algorithm::Pkm { method, step: None }
    }

    /// Fills unset parameters from command-line level overrides.
    pub fn with_defaults(self, step: Option<f64>, m: Option<f64>) -> Self {
        match self {
            Algorithm::Pkm {
                method: Method::Agp,
                step: None,
            } => Algorithm::Pkm {
                method: Method::Agp,
                step,
            },
            Algorithm::Fcm { m: None } => Algorithm::Fcm { m },
            other => other,
        }
    }

    pub fn is_pkm(&self) -> bool {
        matches!(self, Algorithm::Pkm { .. })
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Algorithm::Pkm { method, step: None } => write!(f, "pkm-{method}"),
            Algorithm::Pkm {
                method,
                step: Some(t),
            } => write!(f, "pkm-{method}@{t}"),
            Algorithm::KmeansPp => f.write_str("kmeanspp"),
            Algorithm::Fcm { m: None } => f.write_str("fcm"),
            Algorithm::Fcm { m: Some(m) } => write!(f, "fcm@{m}"),
        }
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    /// Accepts `pkm-agp`, `pkm-msagp`, `pkm-fmsagp`, `kmeanspp`, `fcm`, with
    /// an optional `@value` suffix for the AGP step or the FCM fuzzifier.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let (name, param) = match lower.split_once('@') {
            Some((n, p)) => {
                let v: f64 = p
                    .parse()
                    .map_err(|_| Error::InvalidInput(format!("bad parameter in '{s}'")))?;
                (n.to_string(), Some(v))
            }
            None => (lower, None),
        };
        let alg = match name.as_str() {
            "kmeanspp" | "km++" | "kmeans++" => Algorithm::KmeansPp,
            "fcm" => Algorithm::Fcm { m: param },
            other => {
                let method = other
                    .strip_prefix("pkm-")
                    .ok_or_else(|| Error::InvalidInput(format!("unknown method '{s}'")))?
                    .parse()?;
                if param.is_some() && method != Method::Agp {
                    return Err(Error::InvalidInput(format!(
                        "only pkm-agp takes a step parameter ('{s}')"
                    )));
                }
                Algorithm::Pkm {
                    method,
                    step: param,
                }
            }
        };
        if matches!(alg, Algorithm::KmeansPp) && param.is_some() {
            return Err(Error::InvalidInput(format!(
                "kmeanspp takes no parameter ('{s}')"
            )));
        }
        Ok(alg)
    }
}

/// Everything besides the algorithm that shapes a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct RunSettings {
    pub solver: SolverConfig,
    pub fcm: FcmConfig,
}

pub fn run_algorithm(
    x: &Dataset,
    k: usize,
    alg: Algorithm,
    seed: u64,
    settings: &RunSettings,
) -> Result<ClusterResult> {
    match alg {
        Algorithm::Pkm { method, step } => {
            let mut cfg = settings.solver.clone();
            cfg.method = method;
            cfg.seed = seed;
            if let Some(t) = step {
                cfg.step_length = t;
            }
            solve(x, k, &cfg)
        }
        Algorithm::KmeansPp => kmeans_pp(x, k, seed),
        Algorithm::Fcm { m } => {
            let mut cfg = settings.fcm.clone();
            cfg.seed = seed;
            if let Some(m) = m {
                cfg.m = m;
            }
            fcm(x, k, &cfg)
        }
    }
}

/// SSE and DBI of the hard labeling, plus external scores when truth exists.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub sse: f64,
    /// None when fewer than two clusters are non-empty or centers coincide.
    pub dbi: Option<f64>,
    pub nmi: Option<f64>,
    pub ari: Option<f64>,
    pub v_measure: Option<f64>,
}

pub fn evaluate(x: &Dataset, labels: &[usize], k: usize) -> Result<MetricSet> {
    let means = cluster_means(x, labels, k);
    let (n, a, v) = match x.labels() {
        Some(truth) => (
            Some(nmi(truth, labels)?),
            Some(ari(truth, labels)?),
            Some(v_measure(truth, labels)?),
        ),
        None => (None, None, None),
    };
    Ok(MetricSet {
        sse: sse(x, labels, &means),
        dbi: dbi(x, labels, &means).ok(),
        nmi: n,
        ari: a,
        v_measure: v,
    })
}

/// Runs `alg` once per seed on a pool of `jobs` threads. Results come back in
/// seed order regardless of scheduling.
pub fn run_seeds(
    x: &Dataset,
    k: usize,
    alg: Algorithm,
    seeds: &[u64],
    settings: &RunSettings,
    jobs: usize,
) -> Vec<Result<ClusterResult>> {
    with_pool(jobs, || {
        seeds
            .par_iter()
            .map(|&s| run_algorithm(x, k, alg, s, settings))
            .collect()
    })
}

pub fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> T {
    match rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
    {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

pub fn derive_seeds(master: u64, count: usize) -> Vec<u64> {
    (0..count as u64).map(|r| child_seed(master, r)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub name: String,
    pub source: String,
    pub n_points: usize,
    pub dim: usize,
    pub n_classes: Option<usize>,
    pub standardized: bool,
}

impl DatasetInfo {
    pub fn new(x: &Dataset, source: impl Into<String>, standardized: bool) -> Self {
        Self {
            name: x.name().to_string(),
            source: source.into(),
            n_points: x.len(),
            dim: x.dim(),
            n_classes: x.n_classes(),
            standardized,
        }
    }
}

/// Configuration block embedded in every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub version: String,
    pub command: String,
    pub algorithms: Vec<String>,
    pub k: usize,
    pub master_seed: u64,
    pub seeds: usize,
    pub jobs: usize,
    pub settings: RunSettings,
    pub nmi_normalization: String,
    pub log_base: String,
}

impl ReportConfig {
    pub fn new(
        command: &str,
        algorithms: &[Algorithm],
        k: usize,
        master_seed: u64,
        seeds: usize,
        jobs: usize,
        settings: &RunSettings,
    ) -> Self {
        Self {
            version: VERSION.to_string(),
            command: command.to_string(),
            algorithms: algorithms.iter().map(ToString::to_string).collect(),
            k,
            master_seed,
            seeds,
            jobs,
            settings: settings.clone(),
            nmi_normalization: "geometric_mean".into(),
            log_base: "e".into(),
        }
    }
}

/// One seed's outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub objective: Option<f64>,
    pub iterations: Option<usize>,
    pub termination: Option<Termination>,
    pub wall_time: Option<f64>,
    pub error: Option<ErrorRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub kind: String,
    pub message: String,
}

impl From<&Error> for ErrorRecord {
    fn from(e: &Error) -> Self {
        Self {
            kind: e.kind().to_string(),
            message: e.to_string(),
        }
    }
}

/// The best run of an algorithm in full.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunDetail {
    pub seed: u64,
    pub objective: f64,
    pub iterations: usize,
    pub termination: Termination,
    pub metrics: MetricSet,
    pub labels: Vec<usize>,
    pub centers: Vec<Vec<f64>>,
    pub wall_time: f64,
    pub trace: Vec<IterationRecord>,
}

/// Report of `pkm cluster`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub config: ReportConfig,
    pub dataset: DatasetInfo,
    pub algorithm: String,
    pub runs: Vec<RunSummary>,
    pub best: Option<RunDetail>,
}

impl ClusterReport {
    /// True when every successful run converged.
    pub fn all_converged(&self) -> bool {
        self.runs
            .iter()
            .filter_map(|r| r.termination)
            .all(Termination::converged)
    }

    pub fn first_error(&self) -> Option<&ErrorRecord> {
        self.runs.iter().find_map(|r| r.error.as_ref())
    }
}

fn summarize(seed: u64, r: &Result<ClusterResult>) -> RunSummary {
    match r {
        Ok(res) => RunSummary {
            seed: res.seed,
            objective: Some(res.objective),
            iterations: Some(res.iterations),
            termination: Some(res.termination),
            wall_time: Some(res.elapsed),
            error: None,
        },
        Err(e) => RunSummary {
            seed,
            objective: None,
            iterations: None,
            termination: None,
            wall_time: None,
            error: Some(e.into()),
        },
    }
}

/// Index of the successful run with the lowest objective (earliest on ties).
fn best_index(results: &[Result<ClusterResult>]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, r) in results.iter().enumerate() {
        if let Ok(res) = r {
            if best.is_none_or(|(_, o)| res.objective < o) {
                best = Some((i, res.objective));
            }
        }
    }
    best.map(|(i, _)| i)
}

/// One line of a comparison table: an algorithm's best-of-seeds result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub algorithm: String,
    pub best_seed: Option<u64>,
    pub objective: Option<f64>,
    pub metrics: Option<MetricSet>,
    pub iterations: Option<usize>,
    pub termination: Option<Termination>,
    pub wall_time: Option<f64>,
    pub failures: Vec<RunSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub config: ReportConfig,
    pub dataset: DatasetInfo,
    pub rows: Vec<CompareRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRow {
    pub algorithm: String,
    pub runs: usize,
    pub correct: usize,
    pub percentage: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub config: ReportConfig,
    pub dataset: DatasetInfo,
    pub rows: Vec<RobustnessRow>,
}

/// A dataset and run settings shared by the report builders.
pub struct Experiment<'a> {
    pub x: &'a Dataset,
    pub k: usize,
    pub settings: RunSettings,
    pub jobs: usize,
    pub config: ReportConfig,
    pub dataset: DatasetInfo,
}

impl Experiment<'_> {
    /// Multi-seed run of one algorithm, keeping the lowest-objective result.
    pub fn cluster(&self, alg: Algorithm, seeds: &[u64]) -> Result<ClusterReport> {
        let (x, k) = (self.x, self.k);
        let results = run_seeds(x, k, alg, seeds, &self.settings, self.jobs);
        let runs = seeds
            .iter()
            .zip(&results)
            .map(|(&s, r)| summarize(s, r))
            .collect();
        let best = match best_index(&results) {
            Some(i) => {
                let res = results[i]
                    .as_ref()
                    .map_err(|e| Error::InvalidInput(e.to_string()))?;
                Some(RunDetail {
                    seed: res.seed,
                    objective: res.objective,
                    iterations: res.iterations,
                    termination: res.termination,
                    metrics: evaluate(x, &res.labels, k)?,
                    labels: res.labels.clone(),
                    centers: res.centers.clone(),
                    wall_time: res.elapsed,
                    trace: res.trace.clone(),
                })
            }
            None => None,
        };
        Ok(ClusterReport {
            config: self.config.clone(),
            dataset: self.dataset.clone(),
            algorithm: alg.to_string(),
            runs,
            best,
        })
    }

    /// Best-of-seeds row per algorithm; failed runs are recorded per row.
    pub fn compare(&self, algorithms: &[Algorithm], seeds: &[u64]) -> CompareReport {
        let (x, k, settings, jobs) = (self.x, self.k, &self.settings, self.jobs);
        let rows = algorithms
            .iter()
            .map(|&alg| {
                let results = run_seeds(x, k, alg, seeds, settings, jobs);
                let failures = seeds
                    .iter()
                    .zip(&results)
                    .filter(|(_, r)| r.is_err())
                    .map(|(&s, r)| summarize(s, r))
                    .collect();
                let mut row = CompareRow {
                    algorithm: alg.to_string(),
                    best_seed: None,
                    objective: None,
                    metrics: None,
                    iterations: None,
                    termination: None,
                    wall_time: None,
                    failures,
                };
                if let Some(Ok(res)) = best_index(&results).map(|i| &results[i]) {
                    row.best_seed = Some(res.seed);
                    row.objective = Some(res.objective);
                    row.metrics = evaluate(x, &res.labels, k).ok();
                    row.iterations = Some(res.iterations);
                    row.termination = Some(res.termination);
                    row.wall_time = Some(res.elapsed);
                }
                row
            })
            .collect();
        CompareReport {
            config: self.config.clone(),
            dataset: self.dataset.clone(),
            rows,
        }
    }

    /// Exact-recovery counts over `runs` derived seeds per algorithm.
    pub fn robustness(
        &self,
        algorithms: &[Algorithm],
        runs: usize,
        master_seed: u64,
    ) -> Result<RobustnessReport> {
        let (x, k, settings, jobs) = (self.x, self.k, &self.settings, self.jobs);
        let truth = x
            .labels()
            .ok_or_else(|| Error::InvalidInput("robustness needs ground-truth labels".into()))?;
        let rows = algorithms
            .iter()
            .map(|&alg| {
                let correct = with_pool(jobs, || {
                    robustness(truth, runs, master_seed, |s| {
                        run_algorithm(x, k, alg, s, settings).map(|r| r.labels)
                    })
                });
                RobustnessRow {
                    algorithm: alg.to_string(),
                    runs,
                    correct,
                    percentage: (runs > 0).then(|| 100.0 * correct as f64 / runs as f64),
                }
            })
            .collect();
        Ok(RobustnessReport {
            config: self.config.clone(),
            dataset: self.dataset.clone(),
            rows,
        })
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v}")).unwrap_or_default()
}

impl CompareReport {
    /// Flat table: one row per algorithm.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "algorithm,best_seed,objective,sse,dbi,nmi,ari,v_measure,iterations,wall_time,failures\n",
        );
        for r in &self.rows {
            let m = r.metrics;
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                r.algorithm,
                r.best_seed.map(|s| s.to_string()).unwrap_or_default(),
                opt(r.objective),
                opt(m.map(|m| m.sse)),
                opt(m.and_then(|m| m.dbi)),
                opt(m.and_then(|m| m.nmi)),
                opt(m.and_then(|m| m.ari)),
                opt(m.and_then(|m| m.v_measure)),
                r.iterations.map(|s| s.to_string()).unwrap_or_default(),
                opt(r.wall_time),
                r.failures.len(),
            ));
        }
        out
    }
}

impl RobustnessReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("algorithm,runs,correct,percentage\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.algorithm,
                r.runs,
                r.correct,
                opt(r.percentage)
            ));
        }
        out
    }
}

/// Descent traces of several algorithms from one seed, as long-form CSV whose
/// last column names the algorithm (readable by `datasets::load_csv` with a
/// header and label column 4).
pub fn trace_csv(traces: &[(String, Vec<IterationRecord>)]) -> String {
    let mut out = String::from("iteration,objective,step_length,active_count,algorithm\n");
    for (name, trace) in traces {
        for r in trace {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.iteration, r.objective, r.step_length, r.active_count, name
            ));
        }
    }
    out
}
