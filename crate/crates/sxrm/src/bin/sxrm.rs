//! Command-line front end: operator generation, recovery, certification
//! checks, phase-transition sweeps, and timing benchmarks.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime failure.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};

use sxrm::certify::{self, count_negative_eigs, ExpansionMode, DEFAULT_NEG_EIG_TOL};
use sxrm::harness::{
    bench_timing, parse_phase_config, read_matrix_text, run_phase_grid, write_matrix_text,
    write_phase_csv,
};
use sxrm::numkernel::RankTolerance;
use sxrm::operators::{
    gen_gaussian, gen_sparse_onehot, read_operator, write_operator, Ensemble, MeasurementOperator,
};
use sxrm::recovery::{recover_diagnostics, RecoveryConfig};

#[derive(Parser)]
#[command(
    name = "sxrm",
    version,
    about = "Low-rank PSD matrix recovery with low-density measurement operators"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum EnsembleArg {
    Gaussian,
    Sparse,
}

impl From<EnsembleArg> for Ensemble {
    fn from(value: EnsembleArg) -> Self {
        match value {
            EnsembleArg::Gaussian => Ensemble::Gaussian,
            EnsembleArg::Sparse => Ensemble::SparseOnehot,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Psd,
    Hermitian,
}

#[derive(Clone, Copy, ValueEnum)]
enum CheckArg {
    /// rank(A(X)) = min(d k, m) on random rank-k PSD inputs
    RankIdentity,
    /// expansion ratios over random rank-r inputs
    Expansion,
    /// negative-eigenvalue signature of sampled null-space elements
    Nullspace,
    /// A(X) stays PSD for random PSD X
    Psd,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a measurement operator and write it to a file.
    GenOp {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        d: usize,
        #[arg(long, value_enum)]
        ensemble: EnsembleArg,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply an operator to a matrix file: Y = A(X).
    Measure {
        #[arg(long)]
        op: PathBuf,
        /// Input X as a text matrix file (n x n).
        #[arg(long)]
        x: PathBuf,
        /// Where to write the m x m measurement.
        #[arg(long)]
        out: PathBuf,
    },
    /// Recover X from a measurement file via subspace identification.
    Recover {
        /// Operator file produced by gen-op.
        #[arg(long)]
        op: PathBuf,
        /// Measurement Y as a text matrix file.
        #[arg(long)]
        y: PathBuf,
        /// Where to write the recovered matrix.
        #[arg(long)]
        out: PathBuf,
        /// Relative rank-tolerance factor for the spectral cutoffs.
        #[arg(long)]
        tol: Option<f64>,
        /// Residual threshold classifying the recovery as exact.
        #[arg(long, default_value_t = 1e-8)]
        exact_tol: f64,
    },
    /// Run one empirical certification check against an operator file.
    Certify {
        #[arg(long)]
        op: PathBuf,
        #[arg(value_enum)]
        check: CheckArg,
        /// Tested rank for the expansion check.
        #[arg(long, default_value_t = 1)]
        r: usize,
        /// Tested rank for the rank-identity check.
        #[arg(long, default_value_t = 1)]
        k: usize,
        /// Trials (or null-space samples).
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long)]
        seed: u64,
        /// Input distribution for the expansion check.
        #[arg(long, value_enum, default_value = "psd")]
        mode: ModeArg,
        /// Also write per-trial rows as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run a phase-transition grid from a config file and emit CSV.
    Phase {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Time both solvers on fresh instances at one parameter point.
    Bench {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long)]
        seed: u64,
    },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli.command) {
        eprintln!("error: {e}");
        std::process::exit(2);
    }
}

fn run(command: Command) -> Result<(), Box<dyn std::error::Error>> {
    match command {
        Command::GenOp {
            n,
            m,
            d,
            ensemble,
            seed,
            out,
        } => {
            let op = match Ensemble::from(ensemble) {
                Ensemble::Gaussian => gen_gaussian(n, m, d, seed)?,
                Ensemble::SparseOnehot => gen_sparse_onehot(n, m, d, seed)?,
            };
            write_operator(&op, &out)?;
            println!(
                "wrote {} operator: n={n} m={m} d={d} seed={seed} -> {}",
                op.ensemble().name(),
                out.display()
            );
            Ok(())
        }
        Command::Measure { op, x, out } => {
            let op = read_operator(&op)?;
            let x = read_matrix_text(&x)?;
            let y = sxrm::operators::apply(&op, &x)?;
            write_matrix_text(&out, &y)?;
            println!("wrote {}x{} measurement to {}", y.nrows(), y.ncols(), out.display());
            Ok(())
        }
        Command::Recover {
            op,
            y,
            out,
            tol,
            exact_tol,
        } => {
            let op = read_operator(&op)?;
            let y = read_matrix_text(&y)?;
            let cfg = RecoveryConfig {
                rank_tol: tol.map_or_else(RankTolerance::default, RankTolerance::Relative),
                exact_tol,
                ..RecoveryConfig::default()
            };
            let (result, diag) = recover_diagnostics(&op, &y, &cfg)?;
            write_matrix_text(&out, &result.x_hat)?;
            println!("status: {}", result.status.name());
            println!(
                "rank(Y) = {}, subspace dimension = {}",
                result.rank_y, result.subspace_dim
            );
            println!(
                "core system: {} equations, {} unknowns",
                diag.system_rows, diag.system_cols
            );
            println!("relative residual: {:.3e}", result.residual_rel);
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Certify {
            op,
            check,
            r,
            k,
            trials,
            seed,
            mode,
            csv,
        } => run_certify(&op, check, r, k, trials, seed, mode, csv),
        Command::Phase { config, out } => {
            let text = std::fs::read_to_string(&config)?;
            let cfg = parse_phase_config(&text)?;
            let (records, summary) = run_phase_grid(&cfg)?;
            let mut writer = BufWriter::new(File::create(&out)?);
            write_phase_csv(&mut writer, &cfg, &records)?;
            writer.flush()?;
            println!(
                "{} trial records into {} ({} cells)",
                records.len(),
                out.display(),
                summary.cells.len()
            );
            for &solver in &cfg.solvers {
                for &d in &cfg.d_values {
                    let curve: Vec<String> = cfg
                        .m_values
                        .iter()
                        .map(|&m| {
                            let k_star = summary.k_star(solver, d, m).unwrap_or(0);
                            format!("k*({m})={k_star}")
                        })
                        .collect();
                    println!("{} d={d}: {}", solver.name(), curve.join(" "));
                }
            }
            Ok(())
        }
        Command::Bench {
            n,
            d,
            m,
            k,
            trials,
            seed,
        } => {
            let report = bench_timing(n, d, m, k, trials, seed)?;
            println!("timing at n={n} d={d} m={m} k={k} over {trials} instances (solve only)");
            println!("{report}");
            Ok(())
        }
    }
}

const CERTIFY_CSV_COLUMNS: &str = "check,ensemble,n,m,d,param,index,seed,observed,expected,pass";

struct CsvRow {
    check: &'static str,
    param: usize,
    index: usize,
    observed: usize,
    expected: usize,
    pass: bool,
}

fn write_certify_csv(
    path: &PathBuf,
    op: &MeasurementOperator,
    seed: u64,
    rows: &[CsvRow],
) -> Result<(), Box<dyn std::error::Error>> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{CERTIFY_CSV_COLUMNS}")?;
    for row in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            row.check,
            op.ensemble().name(),
            op.n(),
            op.m(),
            op.d(),
            row.param,
            row.index,
            seed,
            row.observed,
            row.expected,
            row.pass
        )?;
    }
    out.flush()?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_certify(
    op_path: &PathBuf,
    check: CheckArg,
    r: usize,
    k: usize,
    trials: usize,
    seed: u64,
    mode: ModeArg,
    csv: Option<PathBuf>,
) -> Result<(), Box<dyn std::error::Error>> {
    let op = read_operator(op_path)?;
    match check {
        CheckArg::RankIdentity => {
            let outcomes = certify::rank_identity_trials(&op, k, trials, seed)?;
            let passes = outcomes.iter().filter(|t| t.pass).count();
            let expected = (op.d() * k).min(op.m());
            println!(
                "rank identity at k={k}: {passes}/{trials} trials matched min(d k, m) = {expected}"
            );
            if let Some(path) = csv {
                let rows: Vec<CsvRow> = outcomes
                    .iter()
                    .map(|t| CsvRow {
                        check: "rank-identity",
                        param: k,
                        index: t.trial as usize,
                        observed: t.observed,
                        expected: t.expected,
                        pass: t.pass,
                    })
                    .collect();
                write_certify_csv(&path, &op, seed, &rows)?;
            }
        }
        CheckArg::Expansion => {
            let mode = match mode {
                ModeArg::Psd => ExpansionMode::PsdProjection,
                ModeArg::Hermitian => ExpansionMode::Hermitian,
            };
            let report = certify::estimate_expansion(&op, r, trials, seed, mode)?;
            println!("{report}");
            if let Some(path) = csv {
                let denom = (op.d() * r).min(op.m());
                let rows: Vec<CsvRow> = report
                    .observed_ranks
                    .iter()
                    .enumerate()
                    .map(|(index, &rank)| CsvRow {
                        check: "expansion",
                        param: r,
                        index,
                        observed: rank,
                        expected: denom,
                        pass: rank <= op.d() * r,
                    })
                    .collect();
                write_certify_csv(&path, &op, seed, &rows)?;
            }
        }
        CheckArg::Nullspace => {
            let signature =
                certify::sample_nullspace_signature(&op, trials, seed, DEFAULT_NEG_EIG_TOL)?;
            println!("{signature}");
            if let Some(path) = csv {
                let elements = certify::sample_nullspace_elements(&op, trials, seed)?;
                let rows: Vec<CsvRow> = elements
                    .iter()
                    .enumerate()
                    .map(|(index, w)| {
                        let neg = count_negative_eigs(w, DEFAULT_NEG_EIG_TOL)
                            .expect("sampled element is symmetric");
                        CsvRow {
                            check: "nullspace",
                            param: signature.null_dim,
                            index,
                            observed: neg,
                            expected: 1,
                            pass: neg >= 1,
                        }
                    })
                    .collect();
                write_certify_csv(&path, &op, seed, &rows)?;
            }
        }
        CheckArg::Psd => {
            let outcomes = certify::psd_preservation_trials(&op, trials, seed)?;
            let passes = outcomes.iter().filter(|t| t.pass).count();
            println!("psd preservation: {passes}/{trials} random PSD inputs mapped to PSD outputs");
            if let Some(path) = csv {
                let rows: Vec<CsvRow> = outcomes
                    .iter()
                    .map(|t| CsvRow {
                        check: "psd",
                        param: 0,
                        index: t.trial as usize,
                        observed: t.observed,
                        expected: t.expected,
                        pass: t.pass,
                    })
                    .collect();
                write_certify_csv(&path, &op, seed, &rows)?;
            }
        }
    }
    Ok(())
}
