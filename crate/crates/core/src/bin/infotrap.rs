use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use infotrap::oracle;
use infotrap::scenario::{self, SweepSpec};
use infotrap::Result;

/// Greedy social learning from correlated Gaussian sources.
#[derive(Parser)]
#[command(name = "infotrap", version)]
struct Cli {
    /// Directory for written artifacts.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Suppress the stdout summary.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Minimal spanning sets, φ values and assumption checks.
    Analyze { file: PathBuf },
    /// Run the greedy dynamics; writes trace CSV and report JSON per scenario.
    Simulate { file: PathBuf },
    /// Exhaustive t-optimal division.
    Oracle {
        file: PathBuf,
        #[arg(long)]
        t: u64,
    },
    /// Vary one prior variance over a grid and locate the classification change.
    Sweep {
        file: PathBuf,
        /// 1-based state index.
        #[arg(long)]
        state: usize,
        /// Comma-separated, strictly increasing variances.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        grid: Vec<f64>,
    },
    /// Greedy against t-optimal posterior variance for t = 1..=T.
    Compare {
        file: PathBuf,
        #[arg(long)]
        t: u64,
    },
}

fn write_artifact(dir: &Path, name: &str, contents: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), contents)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let say = |line: String| {
        if !cli.quiet {
            println!("{line}");
        }
    };
    match &cli.command {
        Command::Analyze { file } => {
            for s in scenario::load_batch(file)? {
                let a = scenario::analyze(&s)?;
                write_artifact(&cli.out, &format!("{}.analysis.json", s.name), &a.to_json())?;
                match (&a.best_set, &a.minimal_sets) {
                    (Some(best), Some(sets)) => say(format!(
                        "{}: {} minimal spanning sets, best {:?} with phi {}",
                        s.name,
                        sets.len(),
                        best,
                        sets[0].phi
                    )),
                    _ => say(format!("{}: numeric optimum only", s.name)),
                }
            }
        }
        Command::Simulate { file } => {
            let scenarios = scenario::load_batch(file)?;
            for r in scenario::run_batch(&scenarios, &cli.out)? {
                let ratio = r
                    .inefficiency_ratio
                    .map_or("inf".to_string(), |x| x.to_string());
                match &r.trapped_set {
                    Some(set) => say(format!(
                        "{}: trap {:?}, inefficiency ratio {}",
                        r.name, set, ratio
                    )),
                    None => say(format!(
                        "{}: {}, inefficiency ratio {}",
                        r.name, r.classification, ratio
                    )),
                }
            }
        }
        Command::Oracle { file, t } => {
            for s in scenario::load_batch(file)? {
                let r = oracle::optimal_division(&s.environment, &s.prior, *t)?;
                let json = serde_json::to_string_pretty(&r)? + "\n";
                write_artifact(&cli.out, &format!("{}.oracle.json", s.name), &json)?;
                say(format!(
                    "{}: t={} counts {:?} value {} ({} optima)",
                    s.name,
                    t,
                    r.counts.counts(),
                    scenario::format_g17(r.value),
                    r.num_optima
                ));
            }
        }
        Command::Sweep { file, state, grid } => {
            if *state == 0 {
                return Err(infotrap::Error::Scenario {
                    path: "state".into(),
                    reason: "state indices are 1-based".into(),
                });
            }
            for s in scenario::load_batch(file)? {
                let name = s.name.clone();
                let report = scenario::sweep(&SweepSpec::new(s, state - 1, grid.clone())?)?;
                let json = serde_json::to_string_pretty(&report)? + "\n";
                write_artifact(&cli.out, &format!("{name}.sweep.json"), &json)?;
                for row in &report.rows {
                    say(format!(
                        "{name}: variance {} -> {}",
                        row.variance, row.classification
                    ));
                }
                match report.threshold {
                    Some((lo, hi)) => say(format!("{name}: threshold in ({lo}, {hi})")),
                    None => say(format!("{name}: no classification change")),
                }
            }
        }
        Command::Compare { file, t } => {
            for s in scenario::load_batch(file)? {
                let rows = oracle::greedy_vs_optimal(&s.environment, &s.prior, *t)?;
                write_artifact(
                    &cli.out,
                    &format!("{}.compare.csv", s.name),
                    &scenario::comparison_csv(&rows),
                )?;
                if let Some(last) = rows.last() {
                    say(format!(
                        "{}: t={} ratio {}",
                        s.name,
                        last.t,
                        scenario::format_g17(last.ratio)
                    ));
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
