//! Experiment orchestration: phase-transition grids over
//! (ensemble, d, m, k), timing benchmarks, and the file formats the CLI
//! speaks (trial CSV, flat key=value configs, text matrices).
//!
//! Science is deterministic, clocks are not: with a fixed base seed every
//! record field except wall_ms is identical across runs and worker counts.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::baseline::{trace_min, BaselineConfig};
use crate::numkernel::{check_finite, DenseMatrix};
use crate::operators::{apply, gen_gaussian, gen_sparse_onehot, Ensemble, MeasurementOperator};
use crate::recovery::{recover, RecoveryConfig};
use crate::sampling::{mix_seed, random_psd};

/// Success threshold for the subspace solver in phase grids.
pub const ALG1_SUCCESS_THRESHOLD: f64 = 1e-6;
/// Success threshold for the trace-minimization baseline (looser:
/// first-order methods plateau).
pub const BASELINE_SUCCESS_THRESHOLD: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad config: {0}")]
    Config(String),
    #[error("bad matrix file: {0}")]
    MatrixFile(String),
    #[error("trial failed: {0}")]
    Trial(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Solver {
    Alg1,
    Baseline,
}

impl Solver {
    pub fn name(self) -> &'static str {
        match self {
            Solver::Alg1 => "alg1",
            Solver::Baseline => "baseline",
        }
    }
}

/// Grid description for a phase-transition sweep.
#[derive(Debug, Clone)]
pub struct PhaseConfig {
    pub n: usize,
    pub ensemble: Ensemble,
    pub d_values: Vec<usize>,
    pub m_values: Vec<usize>,
    pub k_values: Vec<usize>,
    pub trials: usize,
    pub base_seed: u64,
    pub solvers: Vec<Solver>,
    pub alg1_threshold: f64,
    pub baseline_threshold: f64,
    /// Worker threads for trial execution; `None` uses the rayon default.
    pub workers: Option<usize>,
}

impl PhaseConfig {
    pub fn threshold(&self, solver: Solver) -> f64 {
        match solver {
            Solver::Alg1 => self.alg1_threshold,
            Solver::Baseline => self.baseline_threshold,
        }
    }

    fn validate(&self) -> Result<(), HarnessError> {
        if self.n == 0
            || self.d_values.is_empty()
            || self.m_values.is_empty()
            || self.k_values.is_empty()
            || self.solvers.is_empty()
        {
            return Err(HarnessError::Config(
                "n, d, m, k and solvers must all be nonempty".into(),
            ));
        }
        if self.trials == 0 {
            return Err(HarnessError::Config("trials must be at least 1".into()));
        }
        if self.k_values.iter().any(|&k| k > self.n) {
            return Err(HarnessError::Config("k cannot exceed n".into()));
        }
        Ok(())
    }
}

/// One solver run on one grid cell instance.
#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub ensemble: Ensemble,
    pub n: usize,
    pub d: usize,
    pub m: usize,
    pub k: usize,
    pub trial: usize,
    pub seed: u64,
    pub solver: Solver,
    pub success: bool,
    pub rel_err: f64,
    pub subspace_dim: usize,
    pub wall_ms: f64,
    pub status: String,
}

/// Success counts per cell and solver.
#[derive(Debug, Clone)]
pub struct CellSummary {
    pub d: usize,
    pub m: usize,
    pub k: usize,
    pub trials: usize,
    pub successes: BTreeMap<Solver, usize>,
}

/// Largest tested k with success rate >= 0.95 for one (solver, d, m);
/// 0 when no tested k reached it.
#[derive(Debug, Clone, Copy)]
pub struct ThresholdPoint {
    pub solver: Solver,
    pub d: usize,
    pub m: usize,
    pub k_star: usize,
}

#[derive(Debug, Clone)]
pub struct PhaseSummary {
    pub cells: Vec<CellSummary>,
    pub thresholds: Vec<ThresholdPoint>,
}

impl PhaseSummary {
    pub fn success_rate(&self, solver: Solver, d: usize, m: usize, k: usize) -> Option<f64> {
        self.cells
            .iter()
            .find(|c| c.d == d && c.m == m && c.k == k)
            .map(|c| *c.successes.get(&solver).unwrap_or(&0) as f64 / c.trials as f64)
    }

    pub fn k_star(&self, solver: Solver, d: usize, m: usize) -> Option<usize> {
        self.thresholds
            .iter()
            .find(|t| t.solver == solver && t.d == d && t.m == m)
            .map(|t| t.k_star)
    }
}

/// The seed every solver sees for cell (d, m, k), trial index `trial`.
/// Solver-independent so both solvers get the same instance.
pub fn trial_seed(base_seed: u64, d: usize, m: usize, k: usize, trial: usize) -> u64 {
    mix_seed(&[base_seed, d as u64, m as u64, k as u64, trial as u64])
}

fn gen_operator(
    ensemble: Ensemble,
    n: usize,
    m: usize,
    d: usize,
    seed: u64,
) -> Result<MeasurementOperator, HarnessError> {
    let op = match ensemble {
        Ensemble::Gaussian => gen_gaussian(n, m, d, seed),
        Ensemble::SparseOnehot => gen_sparse_onehot(n, m, d, seed),
    };
    op.map_err(|e| HarnessError::Trial(e.to_string()))
}

/// Draw one instance: operator, rank-k PSD ground truth, measurement.
fn draw_instance(
    ensemble: Ensemble,
    n: usize,
    m: usize,
    d: usize,
    k: usize,
    seed: u64,
) -> Result<(MeasurementOperator, DenseMatrix, DenseMatrix), HarnessError> {
    let op = gen_operator(ensemble, n, m, d, mix_seed(&[seed, 1]))?;
    let mut rng = rand::SeedableRng::seed_from_u64(mix_seed(&[seed, 2]));
    let x = random_psd(&mut rng, n, k);
    let y = apply(&op, &x).map_err(|e| HarnessError::Trial(e.to_string()))?;
    Ok((op, x, y))
}

fn relative_error(x_hat: &DenseMatrix, x: &DenseMatrix) -> f64 {
    let denom = x.norm();
    if denom == 0.0 {
        x_hat.norm()
    } else {
        (x_hat - x).norm() / denom
    }
}

/// Run one solver on a prepared instance, timing only the solve.
fn run_solver(
    solver: Solver,
    op: &MeasurementOperator,
    x: &DenseMatrix,
    y: &DenseMatrix,
    threshold: f64,
) -> (bool, f64, usize, f64, String) {
    match solver {
        Solver::Alg1 => {
            let start = Instant::now();
            let outcome = recover(op, y, &RecoveryConfig::default());
            let wall_ms = start.elapsed().as_secs_f64() * 1e3;
            match outcome {
                Ok(result) => {
                    let rel_err = relative_error(&result.x_hat, x);
                    (
                        rel_err <= threshold,
                        rel_err,
                        result.subspace_dim,
                        wall_ms,
                        result.status.name().to_string(),
                    )
                }
                Err(e) => (false, f64::INFINITY, 0, wall_ms, format!("error: {e}")),
            }
        }
        Solver::Baseline => {
            let start = Instant::now();
            let outcome = trace_min(op, y, &BaselineConfig::default());
            let wall_ms = start.elapsed().as_secs_f64() * 1e3;
            match outcome {
                Ok(result) => {
                    let rel_err = relative_error(&result.x_hat, x);
                    let status = if result.converged {
                        "converged"
                    } else {
                        "not_converged"
                    };
                    (rel_err <= threshold, rel_err, 0, wall_ms, status.to_string())
                }
                Err(e) => (false, f64::INFINITY, 0, wall_ms, format!("error: {e}")),
            }
        }
    }
}

fn run_grid_jobs(cfg: &PhaseConfig) -> Result<Vec<TrialRecord>, HarnessError> {
    let mut jobs = Vec::new();
    for &d in &cfg.d_values {
        for &m in &cfg.m_values {
            for &k in &cfg.k_values {
                for trial in 0..cfg.trials {
                    jobs.push((d, m, k, trial));
                }
            }
        }
    }
    let run_one = |&(d, m, k, trial): &(usize, usize, usize, usize)| {
        let seed = trial_seed(cfg.base_seed, d, m, k, trial);
        let (op, x, y) = draw_instance(cfg.ensemble, cfg.n, m, d, k, seed)?;
        let mut records = Vec::with_capacity(cfg.solvers.len());
        for &solver in &cfg.solvers {
            let (success, rel_err, subspace_dim, wall_ms, status) =
                run_solver(solver, &op, &x, &y, cfg.threshold(solver));
            records.push(TrialRecord {
                ensemble: cfg.ensemble,
                n: cfg.n,
                d,
                m,
                k,
                trial,
                seed,
                solver,
                success,
                rel_err,
                subspace_dim,
                wall_ms,
                status,
            });
        }
        Ok::<_, HarnessError>(records)
    };
    let nested: Result<Vec<Vec<TrialRecord>>, HarnessError> = match cfg.workers {
        Some(workers) => rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| HarnessError::Trial(e.to_string()))?
            .install(|| jobs.par_iter().map(run_one).collect()),
        None => jobs.par_iter().map(run_one).collect(),
    };
    let mut records: Vec<TrialRecord> = nested?.into_iter().flatten().collect();
    // canonical emission order regardless of scheduling
    records.sort_by_key(|r| (r.d, r.m, r.k, r.trial, r.solver));
    Ok(records)
}

/// Run the full grid and summarize: per-cell success rates plus the
/// empirical threshold curve k*(m) at the 95% success level.
pub fn run_phase_grid(cfg: &PhaseConfig) -> Result<(Vec<TrialRecord>, PhaseSummary), HarnessError> {
    cfg.validate()?;
    let records = run_grid_jobs(cfg)?;

    let mut cells: BTreeMap<(usize, usize, usize), CellSummary> = BTreeMap::new();
    for record in &records {
        let cell = cells
            .entry((record.d, record.m, record.k))
            .or_insert_with(|| CellSummary {
                d: record.d,
                m: record.m,
                k: record.k,
                trials: cfg.trials,
                successes: BTreeMap::new(),
            });
        if record.success {
            *cell.successes.entry(record.solver).or_insert(0) += 1;
        }
    }
    let cells: Vec<CellSummary> = cells.into_values().collect();

    let mut thresholds = Vec::new();
    for &solver in &cfg.solvers {
        for &d in &cfg.d_values {
            for &m in &cfg.m_values {
                let k_star = cfg
                    .k_values
                    .iter()
                    .filter(|&&k| {
                        cells
                            .iter()
                            .find(|c| c.d == d && c.m == m && c.k == k)
                            .map(|c| {
                                *c.successes.get(&solver).unwrap_or(&0) as f64
                                    >= 0.95 * c.trials as f64
                            })
                            .unwrap_or(false)
                    })
                    .max()
                    .copied()
                    .unwrap_or(0);
                thresholds.push(ThresholdPoint { solver, d, m, k_star });
            }
        }
    }
    Ok((records, PhaseSummary { cells, thresholds }))
}

/// Timing comparison on one parameter point.
#[derive(Debug, Clone)]
pub struct BenchInstance {
    pub trial: usize,
    /// Solve time when the solver succeeded, `None` when it failed.
    pub alg1_ms: Option<f64>,
    pub baseline_ms: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverTiming {
    pub solver: Solver,
    pub succeeded: usize,
    pub excluded: usize,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub min_ms: f64,
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub instances: Vec<BenchInstance>,
    pub alg1: SolverTiming,
    pub baseline: SolverTiming,
    /// median baseline time / median subspace-solver time.
    pub speedup_median: f64,
}

fn summarize_timing(solver: Solver, times: &[f64], excluded: usize) -> SolverTiming {
    if times.is_empty() {
        return SolverTiming {
            solver,
            succeeded: 0,
            excluded,
            mean_ms: f64::NAN,
            median_ms: f64::NAN,
            min_ms: f64::NAN,
        };
    }
    let mut sorted = times.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median_ms = if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
    };
    SolverTiming {
        solver,
        succeeded: times.len(),
        excluded,
        mean_ms: times.iter().sum::<f64>() / times.len() as f64,
        median_ms,
        min_ms: sorted[0],
    }
}

/// Time both solvers on `trials` fresh instances at one parameter point.
/// Operator generation and measurement are excluded from the clock.
pub fn bench_timing(
    n: usize,
    d: usize,
    m: usize,
    k: usize,
    trials: usize,
    seed: u64,
) -> Result<BenchReport, HarnessError> {
    let mut instances = Vec::with_capacity(trials);
    let mut alg1_times = Vec::new();
    let mut baseline_times = Vec::new();
    for trial in 0..trials {
        let instance_seed = trial_seed(seed, d, m, k, trial);
        let (op, x, y) = draw_instance(Ensemble::Gaussian, n, m, d, k, instance_seed)?;
        let (alg1_ok, _, _, alg1_ms, _) =
            run_solver(Solver::Alg1, &op, &x, &y, ALG1_SUCCESS_THRESHOLD);
        let (baseline_ok, _, _, baseline_ms, _) =
            run_solver(Solver::Baseline, &op, &x, &y, BASELINE_SUCCESS_THRESHOLD);
        if alg1_ok {
            alg1_times.push(alg1_ms);
        }
        if baseline_ok {
            baseline_times.push(baseline_ms);
        }
        instances.push(BenchInstance {
            trial,
            alg1_ms: alg1_ok.then_some(alg1_ms),
            baseline_ms: baseline_ok.then_some(baseline_ms),
        });
    }
    let alg1 = summarize_timing(Solver::Alg1, &alg1_times, trials - alg1_times.len());
    let baseline = summarize_timing(
        Solver::Baseline,
        &baseline_times,
        trials - baseline_times.len(),
    );
    let speedup_median = baseline.median_ms / alg1.median_ms;
    Ok(BenchReport {
        instances,
        alg1,
        baseline,
        speedup_median,
    })
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<10} {:>10} {:>10} {:>10} {:>6} {:>6}",
            "solver", "mean_ms", "median_ms", "min_ms", "ok", "excl"
        )?;
        for timing in [&self.alg1, &self.baseline] {
            writeln!(
                f,
                "{:<10} {:>10.3} {:>10.3} {:>10.3} {:>6} {:>6}",
                timing.solver.name(),
                timing.mean_ms,
                timing.median_ms,
                timing.min_ms,
                timing.succeeded,
                timing.excluded
            )?;
        }
        write!(f, "median speedup (baseline / alg1): {:.1}x", self.speedup_median)
    }
}

/// CSV columns, in emission order.
pub const CSV_COLUMNS: &str = "ensemble,n,d,m,k,trial,seed,solver,success,rel_err,subspace_dim,wall_ms,status";

/// Write trial records as CSV. The per-solver success thresholds go in
/// `#`-prefixed header lines ahead of the column row.
pub fn write_phase_csv<W: Write>(
    out: &mut W,
    cfg: &PhaseConfig,
    records: &[TrialRecord],
) -> Result<(), HarnessError> {
    writeln!(
        out,
        "# success thresholds: alg1={:e} baseline={:e}",
        cfg.alg1_threshold, cfg.baseline_threshold
    )?;
    writeln!(out, "{CSV_COLUMNS}")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{:e},{},{:.3},{}",
            r.ensemble.name(),
            r.n,
            r.d,
            r.m,
            r.k,
            r.trial,
            r.seed,
            r.solver.name(),
            r.success,
            r.rel_err,
            r.subspace_dim,
            r.wall_ms,
            r.status
        )?;
    }
    Ok(())
}

fn parse_usize_list(value: &str, key: &str) -> Result<Vec<usize>, HarnessError> {
    let parse_one = |s: &str| {
        s.trim()
            .parse::<usize>()
            .map_err(|_| HarnessError::Config(format!("{key}: cannot parse '{s}'")))
    };
    if value.contains(':') {
        let parts: Vec<&str> = value.split(':').collect();
        if parts.len() < 2 || parts.len() > 3 {
            return Err(HarnessError::Config(format!(
                "{key}: range must be start:stop or start:stop:step, got '{value}'"
            )));
        }
        let start = parse_one(parts[0])?;
        let stop = parse_one(parts[1])?;
        let step = if parts.len() == 3 { parse_one(parts[2])? } else { 1 };
        if step == 0 || stop < start {
            return Err(HarnessError::Config(format!(
                "{key}: invalid range '{value}'"
            )));
        }
        Ok((start..=stop).step_by(step).collect())
    } else {
        value.split(',').map(parse_one).collect()
    }
}

/// Parse a flat `key = value` config file. Ranges are written
/// `start:stop[:step]`, lists as comma-separated values.
pub fn parse_phase_config(text: &str) -> Result<PhaseConfig, HarnessError> {
    let mut n = None;
    let mut ensemble = None;
    let mut d_values = None;
    let mut m_values = None;
    let mut k_values = None;
    let mut trials = None;
    let mut base_seed = None;
    let mut solvers = None;
    let mut alg1_threshold = ALG1_SUCCESS_THRESHOLD;
    let mut baseline_threshold = BASELINE_SUCCESS_THRESHOLD;
    let mut workers = None;

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            HarnessError::Config(format!("line {}: expected key = value", lineno + 1))
        })?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "n" => {
                n = Some(value.parse::<usize>().map_err(|_| {
                    HarnessError::Config(format!("n: cannot parse '{value}'"))
                })?)
            }
            "ensemble" => {
                ensemble = Some(match value {
                    "gaussian" => Ensemble::Gaussian,
                    "sparse" | "sparse_onehot" => Ensemble::SparseOnehot,
                    other => {
                        return Err(HarnessError::Config(format!(
                            "ensemble: unknown value '{other}'"
                        )))
                    }
                })
            }
            "d" => d_values = Some(parse_usize_list(value, "d")?),
            "m" => m_values = Some(parse_usize_list(value, "m")?),
            "k" => k_values = Some(parse_usize_list(value, "k")?),
            "trials" => {
                trials = Some(value.parse::<usize>().map_err(|_| {
                    HarnessError::Config(format!("trials: cannot parse '{value}'"))
                })?)
            }
            "seed" => {
                base_seed = Some(value.parse::<u64>().map_err(|_| {
                    HarnessError::Config(format!("seed: cannot parse '{value}'"))
                })?)
            }
            "solvers" => {
                let mut set = Vec::new();
                for part in value.split(',') {
                    match part.trim() {
                        "alg1" => set.push(Solver::Alg1),
                        "baseline" => set.push(Solver::Baseline),
                        other => {
                            return Err(HarnessError::Config(format!(
                                "solvers: unknown solver '{other}'"
                            )))
                        }
                    }
                }
                solvers = Some(set);
            }
            "alg1_threshold" => {
                alg1_threshold = value.parse::<f64>().map_err(|_| {
                    HarnessError::Config(format!("alg1_threshold: cannot parse '{value}'"))
                })?
            }
            "baseline_threshold" => {
                baseline_threshold = value.parse::<f64>().map_err(|_| {
                    HarnessError::Config(format!("baseline_threshold: cannot parse '{value}'"))
                })?
            }
            "workers" => {
                workers = Some(value.parse::<usize>().map_err(|_| {
                    HarnessError::Config(format!("workers: cannot parse '{value}'"))
                })?)
            }
            other => {
                return Err(HarnessError::Config(format!("unknown key '{other}'")));
            }
        }
    }

    let missing = |what: &str| HarnessError::Config(format!("missing required key '{what}'"));
    Ok(PhaseConfig {
        n: n.ok_or_else(|| missing("n"))?,
        ensemble: ensemble.ok_or_else(|| missing("ensemble"))?,
        d_values: d_values.ok_or_else(|| missing("d"))?,
        m_values: m_values.ok_or_else(|| missing("m"))?,
        k_values: k_values.ok_or_else(|| missing("k"))?,
        trials: trials.ok_or_else(|| missing("trials"))?,
        base_seed: base_seed.ok_or_else(|| missing("seed"))?,
        solvers: solvers.unwrap_or_else(|| vec![Solver::Alg1, Solver::Baseline]),
        alg1_threshold,
        baseline_threshold,
        workers,
    })
}

/// Read a text matrix file: header `rows cols`, then row-major
/// whitespace-separated values.
pub fn read_matrix_text(path: &Path) -> Result<DenseMatrix, HarnessError> {
    let reader = BufReader::new(File::open(path)?);
    let mut tokens = Vec::new();
    for line in reader.lines() {
        let line = line?;
        let content = line.split('#').next().unwrap_or("");
        tokens.extend(content.split_whitespace().map(str::to_string));
    }
    if tokens.len() < 2 {
        return Err(HarnessError::MatrixFile("missing 'rows cols' header".into()));
    }
    let rows: usize = tokens[0]
        .parse()
        .map_err(|_| HarnessError::MatrixFile(format!("bad row count '{}'", tokens[0])))?;
    let cols: usize = tokens[1]
        .parse()
        .map_err(|_| HarnessError::MatrixFile(format!("bad column count '{}'", tokens[1])))?;
    let expected = rows * cols;
    if tokens.len() - 2 != expected {
        return Err(HarnessError::MatrixFile(format!(
            "expected {expected} values for a {rows}x{cols} matrix, found {}",
            tokens.len() - 2
        )));
    }
    let mut matrix = DenseMatrix::zeros(rows, cols);
    for (idx, token) in tokens[2..].iter().enumerate() {
        let value: f64 = token
            .parse()
            .map_err(|_| HarnessError::MatrixFile(format!("bad value '{token}'")))?;
        matrix[(idx / cols, idx % cols)] = value;
    }
    check_finite(&matrix).map_err(|e| HarnessError::MatrixFile(e.to_string()))?;
    Ok(matrix)
}

/// Write a matrix in the text format read by [`read_matrix_text`].
pub fn write_matrix_text(path: &Path, matrix: &DenseMatrix) -> Result<(), HarnessError> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{} {}", matrix.nrows(), matrix.ncols())?;
    for row in 0..matrix.nrows() {
        let line: Vec<String> = (0..matrix.ncols())
            .map(|col| format!("{:.17e}", matrix[(row, col)]))
            .collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    out.flush()?;
    Ok(())
}
