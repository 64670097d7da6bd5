use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use nlgcs::harness::{self, report, sweep, ExperimentConfig};
use nlgcs::{par, Error};

/// Nonlinear generative compressed sensing experiments.
#[derive(Parser)]
#[command(name = "nlgcs", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a uniform-recovery sweep and write sweep.csv, summary.csv, report.json.
    Sweep { config: PathBuf },
    /// Run a lemma verification suite; exits 1 if any check fails.
    VerifyLemmas {
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the table as lemmas.csv to this path.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Write a preset config to a file (`-` for stdout).
    Preset {
        name: String,
        #[arg(long)]
        emit: PathBuf,
    },
    /// Fit a log-log slope to (m, err) pairs or to a sweep.csv.
    Fit { csv: PathBuf },
    /// Write the ensemble a sweep would use at its first m and trial 0.
    DumpEnsemble { config: PathBuf, path: PathBuf },
}

fn threads_from_env() -> Result<(), Error> {
    match std::env::var("NLGCS_THREADS") {
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| Error::Config(format!("NLGCS_THREADS must be a positive integer, got `{v}`")))?;
            par::configure_threads(n);
            Ok(())
        }
        Err(_) => Ok(()),
    }
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    threads_from_env()?;
    match cli.command {
        Command::Sweep { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let rep = sweep::run_and_write(&cfg)?;
            for p in &rep.per_m {
                println!(
                    "m={:<6} worst_case_mean={:.6} worst_case_std={:.6} mean_{}={:.6} failures={}",
                    p.m,
                    p.worst_case_mean,
                    p.worst_case_std,
                    rep.metric.as_str(),
                    p.mean_metric,
                    p.failures
                );
            }
            if let Some(fit) = &rep.fit {
                println!(
                    "slope={:.4} band95=[{:.4}, {:.4}] r2={:.4}",
                    fit.fit.slope, fit.band_95.0, fit.band_95.1, fit.fit.r2
                );
            }
            println!("wrote {}", cfg.output_dir.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::VerifyLemmas { suite, seed, csv } => {
            let rows = harness::verify_lemmas(&suite, seed)?;
            let mut out = std::io::stdout().lock();
            for r in &rows {
                let _ = writeln!(
                    out,
                    "{} {} {}={} threshold={}",
                    if r.pass { "PASS" } else { "FAIL" },
                    r.lemma_id,
                    r.statistic,
                    r.value,
                    r.threshold
                );
            }
            let failed = rows.iter().filter(|r| !r.pass).count();
            let _ = writeln!(out, "{} checks, {} failed", rows.len(), failed);
            if let Some(path) = csv {
                report::write_lemmas_csv(&rows, &path)?;
            }
            Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Preset { name, emit } => {
            let text = harness::preset(&name)?.to_text();
            if emit.as_os_str() == "-" {
                print!("{text}");
            } else {
                std::fs::write(&emit, text).map_err(|e| Error::Io { path: emit.clone(), source: e })?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Fit { csv } => {
            let pairs = report::read_fit_pairs(&csv)?;
            let fit = harness::fit_slope(&pairs)?;
            let (lo, hi) = fit.slope_band(0.95);
            println!(
                "{}",
                serde_json::json!({
                    "slope": fit.slope,
                    "intercept": fit.intercept,
                    "r2": fit.r2,
                    "slope_stderr": fit.slope_stderr,
                    "band_95": [lo, hi],
                    "n_points": fit.n_points,
                })
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::DumpEnsemble { config, path } => {
            let cfg = ExperimentConfig::load(&config)?;
            let ens = sweep::first_ensemble(&cfg)?;
            ens.write_dump(&path)?;
            println!("wrote {}x{} ensemble to {}", ens.m(), ens.n(), path.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
