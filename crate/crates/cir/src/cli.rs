//! Command-line interface of the `cir` binary.
//!
//! Four subcommands: `simulate` writes one exact path as CSV, `estimate`
//! fits a path from file, `mc` runs a replication study, and `table1`
//! reproduces the full simulation-study grid over (n, T) cells. Results go
//! to stdout as JSON and to files named inside `--outdir`; diagnostics go to
//! stderr only.
//!
//! Exit codes: 0 success, 1 runtime failure (a typed estimation or i/o
//! error), 2 usage error (bad flags or an invalid configuration).

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path as FsPath, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::error::CirError;
use crate::estimate::{
    fixed_t_gamma, initial_estimate, newton_blockdiag_onestep, newton_onestep, scoring_onestep,
    studentize, EstimationResult, EstimatorKind,
};
use crate::model::{CirParams, SamplingScheme};
use crate::montecarlo::{
    asymptotic_prediction, run_study, studentized_histogram, write_records_csv, McConfig, McStudy,
    RecordStatus,
};
use crate::simulate::{simulate_path, Path, StreamSeed};

#[derive(Debug, Parser)]
#[command(
    name = "cir",
    version,
    about = "Exact simulation and quasi-likelihood estimation for the square-root diffusion"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one stationary path and write it as CSV.
    Simulate(SimulateArgs),
    /// Estimate parameters from a path CSV and print a JSON report.
    Estimate(EstimateArgs),
    /// Run a Monte Carlo replication study.
    Mc(McArgs),
    /// Reproduce the full simulation-study grid at truth (3, 1, 1).
    Table1(Table1Args),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Drift level parameter alpha > 0.
    #[arg(long)]
    alpha: f64,
    /// Mean-reversion speed beta > 0.
    #[arg(long)]
    beta: f64,
    /// Volatility parameter gamma > 0.
    #[arg(long)]
    gamma: f64,
    /// Number of increments (the path carries n + 1 observations).
    #[arg(long)]
    n: usize,
    /// Step size between observations.
    #[arg(long = "h")]
    h: f64,
    /// Master seed of the random stream.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV file; a manifest is written next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    /// Input path CSV with header t,x.
    #[arg(long = "in")]
    input: PathBuf,
    /// Step size of the observation grid in the file.
    #[arg(long = "h")]
    h: f64,
    /// Which estimator to run.
    #[arg(long)]
    estimator: EstimatorKind,
    /// True parameters "alpha,beta,gamma"; when given, the report includes
    /// scaled and studentized errors.
    #[arg(long, value_parser = parse_truth)]
    truth: Option<CirParams>,
}

#[derive(Debug, Args)]
struct McArgs {
    /// True drift level alpha > 0 used for simulation.
    #[arg(long)]
    alpha: f64,
    /// True mean-reversion speed beta > 0.
    #[arg(long)]
    beta: f64,
    /// True volatility gamma > 0.
    #[arg(long)]
    gamma: f64,
    /// Increments per replication path.
    #[arg(long)]
    n: usize,
    /// Step size of the observation grid.
    #[arg(long = "h")]
    h: f64,
    /// Number of replications.
    #[arg(long)]
    reps: usize,
    /// Master seed; replication r uses random stream r.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated estimators to run.
    #[arg(long, default_value = "initial,newton,scoring")]
    estimators: String,
    /// Worker threads (any value gives byte-identical output).
    #[arg(long, default_value_t = default_workers())]
    workers: usize,
    /// Directory for records.csv, summary.json, and manifest.json.
    #[arg(long)]
    outdir: PathBuf,
    /// Also write hist.csv with 40-bin histograms of the studentized errors.
    #[arg(long)]
    emit_hist: bool,
}

#[derive(Debug, Args)]
struct Table1Args {
    /// Master seed shared by all cells.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Replications per cell before scaling.
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    /// Fraction of the replications to run (for quick passes); the
    /// effective count is max(1, round(reps * scale)).
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    /// Worker threads.
    #[arg(long, default_value_t = default_workers())]
    workers: usize,
    /// Directory for per-cell records, table1.json, and manifest.json.
    #[arg(long)]
    outdir: PathBuf,
}

fn default_workers() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

fn parse_truth(s: &str) -> Result<CirParams, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!(
            "expected three comma-separated values alpha,beta,gamma, got '{s}'"
        ));
    }
    let mut v = [0.0; 3];
    for (slot, part) in v.iter_mut().zip(&parts) {
        *slot = part
            .trim()
            .parse::<f64>()
            .map_err(|e| format!("bad float '{part}': {e}"))?;
    }
    CirParams::new(v[0], v[1], v[2]).map_err(|e| e.to_string())
}

/// Errors of the CLI layer, split by the exit code they map to.
enum AppError {
    /// Invalid configuration: exit 2.
    Usage(String),
    /// Failure while doing the work: exit 1.
    Runtime(CirError),
}

impl From<CirError> for AppError {
    fn from(e: CirError) -> Self {
        AppError::Runtime(e)
    }
}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        AppError::Runtime(CirError::Io(e))
    }
}

type AppResult<T> = std::result::Result<T, AppError>;

/// Parse arguments from the process environment, run, and return the exit
/// code for the process.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints help/version to stdout (exit 0) and usage errors
            // to stderr (exit 2).
            let _ = e.print();
            return e.exit_code();
        }
    };
    let outcome = match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Estimate(args) => cmd_estimate(args),
        Command::Mc(args) => cmd_mc(args),
        Command::Table1(args) => cmd_table1(args),
    };
    match outcome {
        Ok(()) => 0,
        Err(AppError::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(AppError::Runtime(e)) => {
            eprintln!("error[{}]: {e}", e.name());
            1
        }
    }
}

/// Validated parameters for a simulation-backed subcommand: positivity via
/// the constructor, plus the positivity-preservation condition on the
/// boundary, without which simulated paths may effectively hit zero.
fn simulation_params(alpha: f64, beta: f64, gamma: f64) -> AppResult<CirParams> {
    let params = CirParams::new(alpha, beta, gamma).map_err(usage)?;
    if !params.boundary_nonattracting() {
        return Err(AppError::Usage(format!(
            "parameters must satisfy 2 alpha > gamma so the process stays away from zero; \
             got alpha = {alpha}, gamma = {gamma}"
        )));
    }
    Ok(params)
}

fn usage(e: CirError) -> AppError {
    AppError::Usage(e.to_string())
}

#[derive(Serialize)]
struct RunManifest {
    command: &'static str,
    version: &'static str,
    config: serde_json::Value,
    outputs: Vec<String>,
    elapsed_seconds: f64,
}

fn write_json<T: Serialize>(path: &FsPath, value: &T) -> AppResult<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| {
        AppError::Runtime(CirError::Io(std::io::Error::other(format!(
            "serialize {}: {e}",
            path.display()
        ))))
    })?;
    w.write_all(b"\n")?;
    Ok(())
}

fn print_json<T: Serialize>(value: &T) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("report serialization cannot fail")
    );
}

fn cmd_simulate(args: SimulateArgs) -> AppResult<()> {
    let start = Instant::now();
    let params = simulation_params(args.alpha, args.beta, args.gamma)?;
    let scheme = SamplingScheme::new(args.n, args.h).map_err(usage)?;
    let path = simulate_path(&params, &scheme, StreamSeed::new(args.seed, 0))?;

    let mut w = BufWriter::new(File::create(&args.out)?);
    path.write_csv(&mut w)?;
    w.flush()?;

    let manifest_path = manifest_sibling(&args.out);
    let manifest = RunManifest {
        command: "simulate",
        version: env!("CARGO_PKG_VERSION"),
        config: json!({
            "params": params,
            "scheme": scheme,
            "seed": { "master_seed": args.seed, "replication_index": 0 },
        }),
        outputs: vec![args.out.display().to_string()],
        elapsed_seconds: start.elapsed().as_secs_f64(),
    };
    write_json(&manifest_path, &manifest)?;
    print_json(&manifest);
    Ok(())
}

fn manifest_sibling(out: &FsPath) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    out.with_file_name(name)
}

/// JSON report of one estimation run.
#[derive(Serialize)]
struct EstimateReport {
    estimator: EstimatorKind,
    n: usize,
    h: f64,
    alpha: f64,
    beta: f64,
    gamma: f64,
    admissible: bool,
    scaled_error: Option<[f64; 3]>,
    studentized: Option<[f64; 3]>,
}

fn cmd_estimate(args: EstimateArgs) -> AppResult<()> {
    if !(args.h.is_finite() && args.h > 0.0) {
        return Err(AppError::Usage(format!(
            "step size h must be finite and > 0, got {}",
            args.h
        )));
    }
    let reader = BufReader::new(File::open(&args.input)?);
    let path = Path::read_csv(reader, args.h)?;

    let mut result = match args.estimator {
        EstimatorKind::Initial => initial_estimate(&path)?,
        EstimatorKind::Newton => newton_onestep(&path, &initial_estimate(&path)?)?,
        EstimatorKind::Scoring => scoring_onestep(&path, &initial_estimate(&path)?)?,
        EstimatorKind::NewtonBlockdiag => {
            newton_blockdiag_onestep(&path, &initial_estimate(&path)?)?
        }
        EstimatorKind::FixedTGamma => fixed_t_gamma(&path)?,
    };
    if let Some(truth) = &args.truth {
        // An inadmissible estimate cannot be studentized; the report still
        // carries the estimate, with admissible = false and null errors.
        match studentize(&result, truth, &path.scheme()) {
            Ok(stud) => result = stud,
            Err(CirError::InadmissibleEstimate(..)) => {}
            Err(e) => return Err(e.into()),
        }
    }
    print_json(&report_of(&result, &path));
    Ok(())
}

fn report_of(result: &EstimationResult, path: &Path) -> EstimateReport {
    EstimateReport {
        estimator: result.estimator,
        n: path.n(),
        h: path.scheme().h(),
        alpha: result.theta[0],
        beta: result.theta[1],
        gamma: result.theta[2],
        admissible: result.admissible,
        scaled_error: result.scaled_error,
        studentized: result.studentized,
    }
}

fn parse_estimator_list(s: &str) -> AppResult<Vec<EstimatorKind>> {
    s.split(',')
        .map(|part| part.trim().parse::<EstimatorKind>().map_err(usage))
        .collect()
}

fn write_hist_csv(study: &McStudy, path: &FsPath) -> AppResult<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "estimator,parameter,center,count,normal_density")?;
    let kinds: Vec<EstimatorKind> = study
        .summary
        .estimators
        .iter()
        .map(|s| s.estimator)
        .collect();
    for kind in kinds {
        for (idx, param) in ["alpha", "beta", "gamma"].iter().enumerate() {
            let coords: Vec<f64> = study
                .records
                .iter()
                .filter(|r| r.estimator == kind && r.status == RecordStatus::Ok)
                .filter_map(|r| r.studentized.map(|z| z[idx]))
                .collect();
            for bin in studentized_histogram(&coords) {
                writeln!(
                    w,
                    "{},{},{},{},{}",
                    kind.label(),
                    param,
                    crate::numeric::fmt_f64(bin.center),
                    bin.count,
                    crate::numeric::fmt_f64(bin.normal_density),
                )?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn cmd_mc(args: McArgs) -> AppResult<()> {
    let start = Instant::now();
    let truth = simulation_params(args.alpha, args.beta, args.gamma)?;
    let scheme = SamplingScheme::new(args.n, args.h).map_err(usage)?;
    let estimators = parse_estimator_list(&args.estimators)?;
    let config = McConfig {
        truth,
        scheme,
        replications: args.reps,
        master_seed: args.seed,
        estimators,
        workers: args.workers,
    };
    if args.reps == 0 || args.workers == 0 || args.n < 2 {
        return Err(AppError::Usage(
            "mc needs --reps >= 1, --workers >= 1, and --n >= 2".to_string(),
        ));
    }

    std::fs::create_dir_all(&args.outdir)?;
    let study = run_study(&config).map_err(|e| match e {
        CirError::InvalidInput(msg) => AppError::Usage(msg),
        other => AppError::Runtime(other),
    })?;

    let records_path = args.outdir.join("records.csv");
    let mut w = BufWriter::new(File::create(&records_path)?);
    write_records_csv(&study.records, &mut w)?;
    w.flush()?;

    let summary_path = args.outdir.join("summary.json");
    write_json(&summary_path, &study.summary)?;

    let mut outputs = vec![
        records_path.display().to_string(),
        summary_path.display().to_string(),
    ];
    if args.emit_hist {
        let hist_path = args.outdir.join("hist.csv");
        write_hist_csv(&study, &hist_path)?;
        outputs.push(hist_path.display().to_string());
    }

    if study.summary.suspect {
        eprintln!(
            "warning: more than 1% of replications failed for at least one estimator; \
             summary moments are not trustworthy"
        );
    }

    let manifest_path = args.outdir.join("manifest.json");
    let manifest = RunManifest {
        command: "mc",
        version: env!("CARGO_PKG_VERSION"),
        config: serde_json::to_value(&config).expect("config serialization cannot fail"),
        outputs,
        elapsed_seconds: start.elapsed().as_secs_f64(),
    };
    write_json(&manifest_path, &manifest)?;

    print_json(&study.summary);
    Ok(())
}

/// One cell of the reproduction grid.
#[derive(Serialize)]
struct TableCell {
    n: usize,
    horizon: f64,
    h: f64,
    asymptotic_sd: [f64; 3],
    summary: crate::montecarlo::McSummary,
}

#[derive(Serialize)]
struct TableDocument {
    truth: CirParams,
    replications: usize,
    master_seed: u64,
    cells: Vec<TableCell>,
}

fn cmd_table1(args: Table1Args) -> AppResult<()> {
    let start = Instant::now();
    if !(args.scale.is_finite() && args.scale > 0.0) {
        return Err(AppError::Usage(format!(
            "--scale must be finite and > 0, got {}",
            args.scale
        )));
    }
    if args.reps == 0 || args.workers == 0 {
        return Err(AppError::Usage(
            "table1 needs --reps >= 1 and --workers >= 1".to_string(),
        ));
    }
    let replications = ((args.reps as f64 * args.scale).round() as usize).max(1);
    let truth = CirParams::new(3.0, 1.0, 1.0).expect("reference parameters are valid");

    std::fs::create_dir_all(&args.outdir)?;
    let mut outputs = Vec::new();
    let mut cells = Vec::new();
    for &n in &[5000usize, 10000, 20000] {
        for &horizon in &[500.0f64, 1000.0, 2000.0] {
            let h = horizon / n as f64;
            let scheme = SamplingScheme::new(n, h).map_err(usage)?;
            let config = McConfig {
                truth,
                scheme,
                replications,
                master_seed: args.seed,
                estimators: vec![
                    EstimatorKind::Initial,
                    EstimatorKind::Newton,
                    EstimatorKind::Scoring,
                ],
                workers: args.workers,
            };
            eprintln!("table1: cell n = {n}, T = {horizon} ({replications} replications)");
            let study = run_study(&config)?;
            let records_path = args.outdir.join(format!("records_n{n}_T{horizon:.0}.csv"));
            let mut w = BufWriter::new(File::create(&records_path)?);
            write_records_csv(&study.records, &mut w)?;
            w.flush()?;
            outputs.push(records_path.display().to_string());
            cells.push(TableCell {
                n,
                horizon,
                h,
                asymptotic_sd: asymptotic_prediction(&truth, &scheme),
                summary: study.summary,
            });
        }
    }
    let doc = TableDocument {
        truth,
        replications,
        master_seed: args.seed,
        cells,
    };
    let table_path = args.outdir.join("table1.json");
    write_json(&table_path, &doc)?;
    outputs.push(table_path.display().to_string());

    let manifest_path = args.outdir.join("manifest.json");
    let manifest = RunManifest {
        command: "table1",
        version: env!("CARGO_PKG_VERSION"),
        config: json!({
            "truth": truth,
            "replications": replications,
            "requested_reps": args.reps,
            "scale": args.scale,
            "master_seed": args.seed,
            "workers": args.workers,
        }),
        outputs,
        elapsed_seconds: start.elapsed().as_secs_f64(),
    };
    write_json(&manifest_path, &manifest)?;

    print_json(&doc);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truth_parser_accepts_triples_and_rejects_garbage() {
        let p = parse_truth("3.0, 1.0, 1.0").unwrap();
        assert_eq!(p.theta(), [3.0, 1.0, 1.0]);
        assert!(parse_truth("3.0,1.0").is_err());
        assert!(parse_truth("3.0,1.0,x").is_err());
        assert!(parse_truth("3.0,1.0,-1.0").is_err());
    }

    #[test]
    fn estimator_list_parser_handles_spaces_and_errors() {
        let list = parse_estimator_list("initial, newton,scoring").unwrap();
        assert_eq!(
            list,
            vec![
                EstimatorKind::Initial,
                EstimatorKind::Newton,
                EstimatorKind::Scoring
            ]
        );
        assert!(parse_estimator_list("initial,bogus").is_err());
    }

    #[test]
    fn manifest_sibling_appends_suffix() {
        assert_eq!(
            manifest_sibling(FsPath::new("/tmp/a/path.csv")),
            PathBuf::from("/tmp/a/path.csv.manifest.json")
        );
    }

    #[test]
    fn boundary_condition_is_a_usage_error() {
        assert!(simulation_params(3.0, 1.0, 1.0).is_ok());
        let err = simulation_params(0.5, 1.0, 1.0);
        assert!(matches!(err, Err(AppError::Usage(_))));
        let err = simulation_params(-1.0, 1.0, 1.0);
        assert!(matches!(err, Err(AppError::Usage(_))));
    }

    #[test]
    fn cli_parses_a_full_mc_invocation() {
        let cli = Cli::try_parse_from([
            "cir", "mc", "--alpha", "3", "--beta", "1", "--gamma", "1", "--n", "5000", "--h",
            "0.1", "--reps", "1000", "--seed", "7", "--estimators", "initial,scoring",
            "--workers", "4", "--outdir", "/tmp/x", "--emit-hist",
        ])
        .unwrap();
        match cli.command {
            Command::Mc(args) => {
                assert_eq!(args.n, 5000);
                assert_eq!(args.h, 0.1);
                assert_eq!(args.seed, 7);
                assert!(args.emit_hist);
            }
            _ => panic!("wrong subcommand"),
        }
    }
}
