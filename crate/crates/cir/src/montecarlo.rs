//! Monte Carlo replication harness.
//!
//! Each replication simulates one stationary path, runs the selected
//! estimators, and studentizes against the known truth. Replication r always
//! draws from random stream r of the master seed, and records are assembled
//! in replication order, so the output is byte-identical no matter how many
//! worker threads run the study.
//!
//! Failures are part of the measurement: a replication whose estimator
//! raises a typed error is recorded with that error's name and excluded from
//! moments; an estimate that is produced but falls outside the admissible
//! set is recorded (and enters the moments) but cannot be studentized and is
//! flagged separately.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{CirError, Result};
use crate::estimate::{
    fixed_t_gamma, initial_estimate, newton_blockdiag_onestep, newton_onestep, scoring_onestep,
    studentize, EstimationResult, EstimatorKind,
};
use crate::gql::{info_matrix_inverse, rate_diag};
use crate::model::{CirParams, SamplingScheme};
use crate::numeric::{fmt_f64, normal_cdf, normal_pdf, KahanSum};
use crate::simulate::{simulate_path, StreamSeed};

/// Configuration of one replication study.
#[derive(Debug, Clone, Serialize)]
pub struct McConfig {
    /// True parameter used to simulate and to center the errors.
    pub truth: CirParams,
    /// Observation grid of every replication.
    pub scheme: SamplingScheme,
    /// Number of replications.
    pub replications: usize,
    /// Master seed; replication r uses random stream r.
    pub master_seed: u64,
    /// Estimators to run, in reporting order.
    pub estimators: Vec<EstimatorKind>,
    /// Worker threads. Any value >= 1 yields identical output.
    pub workers: usize,
}

impl McConfig {
    fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(CirError::InvalidInput(
                "replications must be >= 1".to_string(),
            ));
        }
        if self.workers == 0 {
            return Err(CirError::InvalidInput("workers must be >= 1".to_string()));
        }
        if self.scheme.n() < 2 {
            return Err(CirError::InvalidInput(
                "a study needs at least 2 increments per path".to_string(),
            ));
        }
        if self.estimators.is_empty() {
            return Err(CirError::InvalidInput(
                "estimator list must not be empty".to_string(),
            ));
        }
        for (i, k) in self.estimators.iter().enumerate() {
            if *k == EstimatorKind::FixedTGamma {
                return Err(CirError::InvalidInput(
                    "fixedt-gamma estimates only gamma and cannot run in a full-parameter study"
                        .to_string(),
                ));
            }
            if self.estimators[..i].contains(k) {
                return Err(CirError::InvalidInput(format!(
                    "duplicate estimator '{k}' in list"
                )));
            }
        }
        Ok(())
    }
}

/// Outcome classification of one (replication, estimator) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordStatus {
    /// Estimate produced, admissible, studentized.
    Ok,
    /// Estimate produced but outside the admissible set; no studentization.
    Inadmissible,
    /// A typed error aborted this estimator; the name is the error's.
    Failed(&'static str),
}

impl RecordStatus {
    /// Stable string used in the records CSV.
    pub fn as_str(&self) -> &'static str {
        match self {
            RecordStatus::Ok => "ok",
            RecordStatus::Inadmissible => "inadmissible",
            RecordStatus::Failed(name) => name,
        }
    }
}

/// One row of the study: what one estimator produced on one replication.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RepRecord {
    pub rep: u64,
    pub estimator: EstimatorKind,
    /// Estimate, present unless the estimator failed.
    pub theta: Option<[f64; 3]>,
    /// Studentized error, present only for admissible estimates.
    pub studentized: Option<[f64; 3]>,
    pub status: RecordStatus,
}

/// Summary of one estimator across all replications.
#[derive(Debug, Clone, Serialize)]
pub struct EstimatorSummary {
    pub estimator: EstimatorKind,
    /// Replications that produced an estimate (ok + inadmissible).
    pub successes: usize,
    /// Replications aborted by a typed error.
    pub failures: usize,
    /// Produced estimates outside the admissible set.
    pub inadmissible: usize,
    /// Sample mean of the produced estimates, per coordinate.
    pub mean: [f64; 3],
    /// Sample standard deviation (divisor n - 1); NaN below 2 successes.
    pub sd: [f64; 3],
    /// Moments of the studentized errors (ok records only); the theory
    /// predicts mean 0, sd 1.
    pub studentized_mean: [f64; 3],
    pub studentized_sd: [f64; 3],
    /// Kolmogorov-Smirnov distance of each studentized coordinate to the
    /// standard normal.
    pub ks: [f64; 3],
}

/// Study-level summary.
#[derive(Debug, Clone, Serialize)]
pub struct McSummary {
    pub replications: usize,
    pub estimators: Vec<EstimatorSummary>,
    /// True when any estimator failed on more than 1% of replications, in
    /// which case the moments are not trustworthy as a simulation result.
    pub suspect: bool,
}

/// Full result of a study: per-replication records in deterministic order
/// (replication-major, estimator order as configured) plus the summary.
#[derive(Debug, Clone)]
pub struct McStudy {
    pub records: Vec<RepRecord>,
    pub summary: McSummary,
}

fn run_one_estimator(
    kind: EstimatorKind,
    path: &crate::simulate::Path,
    pilot: &Result<EstimationResult>,
) -> Result<EstimationResult> {
    match kind {
        EstimatorKind::Initial => match pilot {
            Ok(est) => Ok(*est),
            Err(e) => Err(clone_error(e)),
        },
        EstimatorKind::Newton => newton_onestep(path, propagate(pilot)?),
        EstimatorKind::Scoring => scoring_onestep(path, propagate(pilot)?),
        EstimatorKind::NewtonBlockdiag => newton_blockdiag_onestep(path, propagate(pilot)?),
        EstimatorKind::FixedTGamma => fixed_t_gamma(path),
    }
}

fn propagate<'a>(pilot: &'a Result<EstimationResult>) -> Result<&'a EstimationResult> {
    pilot.as_ref().map_err(clone_error)
}

/// The error type is not Clone (it may wrap io::Error), but replication
/// bookkeeping only needs the classification, so rebuild a lightweight copy.
fn clone_error(e: &CirError) -> CirError {
    match e {
        CirError::NonPositiveCorrelation(r) => CirError::NonPositiveCorrelation(*r),
        CirError::DegenerateRegressor => CirError::DegenerateRegressor,
        CirError::EmptyPath => CirError::EmptyPath,
        other => CirError::InvalidInput(other.to_string()),
    }
}

fn run_replication(config: &McConfig, rep: u64) -> Vec<RepRecord> {
    let mut out = Vec::with_capacity(config.estimators.len());
    let path = simulate_path(
        &config.truth,
        &config.scheme,
        StreamSeed::new(config.master_seed, rep),
    );
    let path = match path {
        Ok(p) => p,
        Err(e) => {
            // Simulation failure aborts every estimator of this replication.
            let name = e.name();
            for &kind in &config.estimators {
                out.push(RepRecord {
                    rep,
                    estimator: kind,
                    theta: None,
                    studentized: None,
                    status: RecordStatus::Failed(name),
                });
            }
            return out;
        }
    };
    let pilot = initial_estimate(&path);
    for &kind in &config.estimators {
        let record = match run_one_estimator(kind, &path, &pilot) {
            Err(e) => RepRecord {
                rep,
                estimator: kind,
                theta: None,
                studentized: None,
                status: RecordStatus::Failed(e.name()),
            },
            Ok(est) => match studentize(&est, &config.truth, &config.scheme) {
                Ok(stud) => RepRecord {
                    rep,
                    estimator: kind,
                    theta: Some(stud.theta),
                    studentized: stud.studentized,
                    status: RecordStatus::Ok,
                },
                Err(_) => RepRecord {
                    rep,
                    estimator: kind,
                    theta: Some(est.theta),
                    studentized: None,
                    status: RecordStatus::Inadmissible,
                },
            },
        };
        out.push(record);
    }
    out
}

/// Run the full study. Deterministic given the configuration: worker count
/// and thread scheduling cannot change a single byte of the records.
///
/// Fails with [`CirError::AllReplicationsFailed`] when not a single
/// (replication, estimator) pair produced an estimate.
pub fn run_study(config: &McConfig) -> Result<McStudy> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| CirError::InvalidInput(format!("thread pool: {e}")))?;
    let per_rep: Vec<Vec<RepRecord>> = pool.install(|| {
        (0..config.replications as u64)
            .into_par_iter()
            .map(|rep| run_replication(config, rep))
            .collect()
    });
    let records: Vec<RepRecord> = per_rep.into_iter().flatten().collect();
    if records.iter().all(|r| r.theta.is_none()) {
        return Err(CirError::AllReplicationsFailed(config.replications));
    }
    let summary = summarize(&records, config.replications);
    Ok(McStudy { records, summary })
}

fn mean_sd<I: Iterator<Item = [f64; 3]> + Clone>(values: I, count: usize) -> ([f64; 3], [f64; 3]) {
    if count == 0 {
        return ([f64::NAN; 3], [f64::NAN; 3]);
    }
    let mut mean = [0.0; 3];
    for i in 0..3 {
        let mut acc = KahanSum::new();
        for v in values.clone() {
            acc.add(v[i]);
        }
        mean[i] = acc.value() / count as f64;
    }
    if count < 2 {
        return (mean, [f64::NAN; 3]);
    }
    let mut sd = [0.0; 3];
    for i in 0..3 {
        let mut acc = KahanSum::new();
        for v in values.clone() {
            let d = v[i] - mean[i];
            acc.add(d * d);
        }
        sd[i] = (acc.value() / (count - 1) as f64).sqrt();
    }
    (mean, sd)
}

/// Aggregate records into per-estimator summaries. Estimators appear in
/// order of first appearance in `records`.
pub fn summarize(records: &[RepRecord], replications: usize) -> McSummary {
    let mut order: Vec<EstimatorKind> = Vec::new();
    for r in records {
        if !order.contains(&r.estimator) {
            order.push(r.estimator);
        }
    }
    let mut summaries = Vec::with_capacity(order.len());
    let mut suspect = false;
    for kind in order {
        let of_kind: Vec<&RepRecord> = records.iter().filter(|r| r.estimator == kind).collect();
        let produced: Vec<[f64; 3]> = of_kind.iter().filter_map(|r| r.theta).collect();
        let failures = of_kind
            .iter()
            .filter(|r| matches!(r.status, RecordStatus::Failed(_)))
            .count();
        let inadmissible = of_kind
            .iter()
            .filter(|r| r.status == RecordStatus::Inadmissible)
            .count();
        let (mean, sd) = mean_sd(produced.iter().copied(), produced.len());
        let z: Vec<[f64; 3]> = of_kind.iter().filter_map(|r| r.studentized).collect();
        let (z_mean, z_sd) = mean_sd(z.iter().copied(), z.len());
        let mut ks = [f64::NAN; 3];
        if !z.is_empty() {
            for i in 0..3 {
                let coord: Vec<f64> = z.iter().map(|v| v[i]).collect();
                ks[i] = ks_statistic_normal(&coord);
            }
        }
        if failures as f64 > 0.01 * replications as f64 {
            suspect = true;
        }
        summaries.push(EstimatorSummary {
            estimator: kind,
            successes: produced.len(),
            failures,
            inadmissible,
            mean,
            sd,
            studentized_mean: z_mean,
            studentized_sd: z_sd,
            ks,
        });
    }
    McSummary {
        replications,
        estimators: summaries,
        suspect,
    }
}

/// Kolmogorov-Smirnov distance of a sample to the standard normal law:
/// sup_x |F_n(x) - Phi(x)|, computed exactly from the order statistics.
/// NaN for an empty sample.
pub fn ks_statistic_normal(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d = 0.0_f64;
    for (i, &x) in sorted.iter().enumerate() {
        let phi = normal_cdf(x);
        let upper = (i as f64 + 1.0) / n - phi;
        let lower = phi - i as f64 / n;
        d = d.max(upper).max(lower);
    }
    d
}

/// Standard deviations that the asymptotic theory predicts for the
/// estimation error theta_hat - theta_0: the square roots of the diagonal of
/// the inverse information, scaled back by the convergence rates, i.e.
/// (sqrt(alpha (2 alpha - gamma) / beta) / sqrt(T),
///  sqrt(2 beta) / sqrt(T),
///  sqrt(2) gamma / sqrt(n)).
pub fn asymptotic_prediction(truth: &CirParams, scheme: &SamplingScheme) -> [f64; 3] {
    let inv = info_matrix_inverse(truth);
    let d = rate_diag(scheme);
    [
        inv[0][0].sqrt() / d[0],
        inv[1][1].sqrt() / d[1],
        inv[2][2].sqrt() / d[2],
    ]
}

/// Write records as CSV with header
/// `rep,estimator,alpha,beta,gamma,z_alpha,z_beta,z_gamma,status`.
/// Missing values are `NaN`; floats carry 17 significant digits, so the file
/// is byte-stable across runs and worker counts.
pub fn write_records_csv<W: Write>(records: &[RepRecord], mut w: W) -> io::Result<()> {
    writeln!(w, "rep,estimator,alpha,beta,gamma,z_alpha,z_beta,z_gamma,status")?;
    for r in records {
        let t = r.theta.unwrap_or([f64::NAN; 3]);
        let z = r.studentized.unwrap_or([f64::NAN; 3]);
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            r.rep,
            r.estimator.label(),
            fmt_f64(t[0]),
            fmt_f64(t[1]),
            fmt_f64(t[2]),
            fmt_f64(z[0]),
            fmt_f64(z[1]),
            fmt_f64(z[2]),
            r.status.as_str()
        )?;
    }
    Ok(())
}

/// One bin of a studentized-error histogram.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistBin {
    pub center: f64,
    pub count: usize,
    /// Standard normal density at the bin center, for overlay plots.
    pub normal_density: f64,
}

/// Histogram of studentized errors over 40 equal bins on [-4, 4], with the
/// standard normal density at each bin center. Values outside [-4, 4] are
/// dropped (under the theory they are vanishingly rare).
pub fn studentized_histogram(values: &[f64]) -> Vec<HistBin> {
    const BINS: usize = 40;
    const LO: f64 = -4.0;
    const HI: f64 = 4.0;
    let width = (HI - LO) / BINS as f64;
    let mut counts = [0usize; BINS];
    for &x in values {
        if (LO..=HI).contains(&x) {
            let idx = (((x - LO) / width) as usize).min(BINS - 1);
            counts[idx] += 1;
        }
    }
    (0..BINS)
        .map(|i| {
            let center = LO + (i as f64 + 0.5) * width;
            HistBin {
                center,
                count: counts[i],
                normal_density: normal_pdf(center),
            }
        })
        .collect()
}
