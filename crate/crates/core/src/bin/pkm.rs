use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use pkm::baselines::FcmConfig;
use pkm::datasets::{bundled, load_csv, make_artificial, CsvOptions, Delimiter};
use pkm::experiment::{
    derive_seeds, run_algorithm, trace_csv, Algorithm, DatasetInfo, ErrorRecord, Experiment,
    ReportConfig, RunSettings,
};
use pkm::{Dataset, Error, SolverConfig};

const EXIT_INPUT: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_NOT_CONVERGED: u8 = 4;

#[derive(Parser)]
#[command(
    name = "pkm",
    version,
    about = "Probabilistic K-means clustering experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cluster a dataset with one algorithm over one or more seeds.
    Cluster(ClusterArgs),
    /// Run several algorithms over the same seeds and tabulate the best runs.
    Compare(CompareArgs),
    /// Count exact recoveries of the ground truth over many random starts.
    Robustness(RobustnessArgs),
    /// Write per-iteration objective traces as CSV.
    Trace(TraceArgs),
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Delimited data file (.gz accepted).
    #[arg(long, conflicts_with_all = ["dataset", "artificial"])]
    data: Option<PathBuf>,
    /// Bundled dataset name (iris, seeds, glass, ionosphere, dermatology, breast_cancer, yeast).
    #[arg(long, conflicts_with = "artificial")]
    dataset: Option<String>,
    /// Generate the synthetic four-blob dataset from this seed.
    #[arg(long, value_name = "SEED")]
    artificial: Option<u64>,
    /// Zero-based column holding ground-truth labels.
    #[arg(long)]
    label_col: Option<usize>,
    /// The first line of the file is data, not a header.
    #[arg(long)]
    no_header: bool,
    /// Field delimiter: a single character, or "ws" for runs of whitespace.
    #[arg(long, default_value = ",")]
    delimiter: String,
    /// Z-score every feature before clustering.
    #[arg(long)]
    standardize: bool,
    /// Number of clusters (defaults to the bundled dataset's class count).
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Master seed; run r uses a seed derived from it and r.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads for multi-run commands.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// AGP step length for pkm-agp without an explicit @step.
    #[arg(long)]
    step: Option<f64>,
    /// FCM fuzzifier for fcm without an explicit @m.
    #[arg(long)]
    m: Option<f64>,
    #[arg(long, default_value_t = SolverConfig::default().max_iterations)]
    max_iterations: usize,
    #[arg(long, default_value_t = SolverConfig::default().direction_tolerance)]
    direction_tolerance: f64,
    #[arg(long, default_value_t = SolverConfig::default().objective_tolerance)]
    objective_tolerance: f64,
    #[arg(long, default_value_t = SolverConfig::default().lk_cap)]
    lk_cap: usize,
    /// Output file (default: <output-dir>/<command>-<dataset>.<ext>).
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long, env = "PKM_OUTPUT_DIR", default_value = ".")]
    output_dir: PathBuf,
}

#[derive(Args)]
struct ClusterArgs {
    #[command(flatten)]
    data: DataArgs,
    /// pkm-agp, pkm-msagp, pkm-fmsagp, kmeanspp or fcm (optionally @param).
    #[arg(long, default_value = "pkm-fmsagp")]
    method: String,
    /// Number of seeds; the lowest-objective run is reported in full.
    #[arg(long, default_value_t = 1)]
    seeds: usize,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Comma-separated algorithms.
    #[arg(long, value_delimiter = ',', default_value = "pkm-fmsagp,kmeanspp,fcm")]
    methods: Vec<String>,
    #[arg(long, default_value_t = 5)]
    seeds: usize,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct RobustnessArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_delimiter = ',', default_value = "pkm-fmsagp,kmeanspp,fcm")]
    methods: Vec<String>,
    #[arg(long, default_value_t = 100)]
    runs: usize,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct TraceArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_delimiter = ',', default_value = "pkm-msagp,pkm-agp")]
    methods: Vec<String>,
    #[command(flatten)]
    run: RunArgs,
}

struct Loaded {
    x: Dataset,
    k: usize,
    info: DatasetInfo,
}

fn parse_delimiter(s: &str) -> Result<Delimiter, Error> {
    match s {
        "ws" | "whitespace" => Ok(Delimiter::Whitespace),
        "," => Ok(Delimiter::Comma),
        "\\t" | "tab" => Ok(Delimiter::Byte(b'\t')),
        other if other.len() == 1 => Ok(Delimiter::Byte(other.as_bytes()[0])),
        other => Err(Error::InvalidInput(format!("bad delimiter '{other}'"))),
    }
}

fn load(args: &DataArgs) -> Result<Loaded, Error> {
    let (x, source, default_k) = if let Some(path) = &args.data {
        let opts = CsvOptions {
            has_header: !args.no_header,
            label_column: args.label_col,
            delimiter: parse_delimiter(&args.delimiter)?,
        };
        let x = load_csv(path, &opts)?;
        let k = x.n_classes();
        (x, path.display().to_string(), k)
    } else if let Some(name) = &args.dataset {
        let b = bundled(name)
            .ok_or_else(|| Error::InvalidInput(format!("no bundled dataset '{name}'")))?;
        (b.load()?, format!("bundled:{}", b.name), Some(b.k))
    } else if let Some(seed) = args.artificial {
        (make_artificial(seed), format!("artificial:{seed}"), Some(4))
    } else {
        return Err(Error::InvalidInput(
            "one of --data, --dataset or --artificial is required".into(),
        ));
    };
    let x = if args.standardize {
        x.standardized()
    } else {
        x
    };
    let k = args
        .k
        .or(default_k)
        .ok_or_else(|| Error::InvalidInput("--k is required for unlabeled data".into()))?;
    let info = DatasetInfo::new(&x, source, args.standardize);
    Ok(Loaded { x, k, info })
}

fn parse_algorithms(names: &[String], run: &RunArgs) -> Result<Vec<Algorithm>, Error> {
    names
        .iter()
        .map(|n| Ok(n.parse::<Algorithm>()?.with_defaults(run.step, run.m)))
        .collect()
}

fn settings(run: &RunArgs) -> RunSettings {
    RunSettings {
        solver: SolverConfig {
            max_iterations: run.max_iterations,
            direction_tolerance: run.direction_tolerance,
            objective_tolerance: run.objective_tolerance,
            lk_cap: run.lk_cap,
            ..SolverConfig::default()
        },
        fcm: FcmConfig::default(),
    }
}

fn output_path(run: &RunArgs, command: &str, dataset: &str, ext: &str) -> PathBuf {
    run.output
        .clone()
        .unwrap_or_else(|| run.output_dir.join(format!("{command}-{dataset}.{ext}")))
}

fn write(path: &Path, text: &str) -> Result<(), Error> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io)?;
    }
    fs::write(path, text).map_err(io)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::InvalidInput(format!("serialization failed: {e}")))?;
    write(path, &(text + "\n"))
}

fn exit_for(e: &Error) -> u8 {
    if e.is_input_error() {
        EXIT_INPUT
    } else {
        EXIT_NUMERICAL
    }
}

fn experiment<'a>(
    loaded: &'a Loaded,
    command: &str,
    algorithms: &[Algorithm],
    seeds: usize,
    run: &RunArgs,
) -> Experiment<'a> {
    let settings = settings(run);
    Experiment {
        x: &loaded.x,
        k: loaded.k,
        config: ReportConfig::new(
            command, algorithms, loaded.k, run.seed, seeds, run.jobs, &settings,
        ),
        settings,
        jobs: run.jobs,
        dataset: loaded.info.clone(),
    }
}

fn cluster(args: ClusterArgs) -> Result<u8, Error> {
    let loaded = load(&args.data)?;
    let alg = parse_algorithms(std::slice::from_ref(&args.method), &args.run)?[0];
    let exp = experiment(&loaded, "cluster", &[alg], args.seeds, &args.run);
    let report = exp.cluster(alg, &derive_seeds(args.run.seed, args.seeds))?;
    let path = output_path(&args.run, "cluster", loaded.x.name(), "json");
    write_json(&path, &report)?;
    if report.best.is_none() {
        if let Some(err) = report.first_error() {
            eprintln!("{}", error_json(err));
            return Ok(
                if err.kind == "invalid_input" || err.kind == "dimension_cap" {
                    EXIT_INPUT
                } else {
                    EXIT_NUMERICAL
                },
            );
        }
    }
    Ok(if report.all_converged() {
        0
    } else {
        EXIT_NOT_CONVERGED
    })
}

fn compare(args: CompareArgs) -> Result<u8, Error> {
    let loaded = load(&args.data)?;
    let algs = parse_algorithms(&args.methods, &args.run)?;
    let exp = experiment(&loaded, "compare", &algs, args.seeds, &args.run);
    let report = exp.compare(&algs, &derive_seeds(args.run.seed, args.seeds));
    let path = output_path(&args.run, "compare", loaded.x.name(), "json");
    write_json(&path, &report)?;
    write(&path.with_extension("csv"), &report.to_csv())?;
    let converged = report
        .rows
        .iter()
        .filter_map(|r| r.termination)
        .all(|t| t.converged());
    Ok(if converged { 0 } else { EXIT_NOT_CONVERGED })
}

fn robustness(args: RobustnessArgs) -> Result<u8, Error> {
    let loaded = load(&args.data)?;
    let algs = parse_algorithms(&args.methods, &args.run)?;
    let exp = experiment(&loaded, "robustness", &algs, args.runs, &args.run);
    let report = exp.robustness(&algs, args.runs, args.run.seed)?;
    let path = output_path(&args.run, "robustness", loaded.x.name(), "json");
    write_json(&path, &report)?;
    write(&path.with_extension("csv"), &report.to_csv())?;
    Ok(0)
}

fn trace(args: TraceArgs) -> Result<u8, Error> {
    let loaded = load(&args.data)?;
    let algs = parse_algorithms(&args.methods, &args.run)?;
    let settings = settings(&args.run);
    let mut traces = Vec::new();
    let mut converged = true;
    for alg in &algs {
        let r = run_algorithm(&loaded.x, loaded.k, *alg, args.run.seed, &settings)?;
        converged &= r.converged();
        traces.push((alg.to_string(), r.trace));
    }
    let path = output_path(&args.run, "trace", loaded.x.name(), "csv");
    write(&path, &trace_csv(&traces))?;
    Ok(if converged { 0 } else { EXIT_NOT_CONVERGED })
}

fn error_json(err: &ErrorRecord) -> String {
    serde_json::json!({ "error": err }).to_string()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Cluster(a) => cluster(a),
        Command::Compare(a) => compare(a),
        Command::Robustness(a) => robustness(a),
        Command::Trace(a) => trace(a),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("{}", error_json(&ErrorRecord::from(&e)));
            ExitCode::from(exit_for(&e))
        }
    }
}
