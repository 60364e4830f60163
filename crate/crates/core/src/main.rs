use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use twinfl::scenario::{Scenario, Scheme, KEYS};
use twinfl::sweep::{self, Axis};
use twinfl::{selftest, sim, Error};

/// Digital-twin-assisted federated learning over NOMA: allocation,
/// simulation and cost sweeps.
#[derive(Debug, Parser)]
#[command(name = "twinfl", version)]
struct Cli {
    /// Scenario file with `key = value` lines.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,

    /// Override one scenario key, e.g. `--set poison_ratio=0.3`. Repeatable.
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Directory for CSV output.
    #[arg(long, env = "TWINFL_OUT_DIR", default_value = ".", global = true)]
    out_dir: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one allocation round and print the decision and its cost.
    Solve {
        /// Channel realisation to use.
        #[arg(long, default_value_t = 0)]
        round: usize,
    },
    /// Run the full FL simulation and write per-round metrics.
    Simulate {
        /// Comma-separated schemes; defaults to the scenario's scheme.
        #[arg(long, value_delimiter = ',')]
        schemes: Vec<Scheme>,
    },
    /// Sweep one parameter and write per-seed costs plus medians.
    Sweep {
        #[arg(long)]
        axis: Axis,
        /// Comma-separated values: Mbit for dn, clients for n, MHz for b.
        #[arg(
            long,
            value_delimiter = ',',
            required = true,
            allow_negative_numbers = true
        )]
        values: Vec<f64>,
        /// Comma-separated schemes; defaults to all.
        #[arg(long, value_delimiter = ',')]
        schemes: Vec<Scheme>,
    },
    /// Check the solver against the brute-force oracles.
    Selftest,
    /// Print the effective scenario.
    Config,
    /// List the scenario keys.
    Keys,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::NotConverged { history, .. } = &e {
                if let Some(last) = history.last() {
                    eprintln!("last iterate: {last}");
                }
            }
            ExitCode::FAILURE
        }
    }
}

fn scenario(cli: &Cli) -> twinfl::Result<Scenario> {
    let mut s = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            Scenario::from_text(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        }
        None => Scenario::default(),
    };
    for kv in &cli.overrides {
        s.apply_override(kv)?;
    }
    s.validate()?;
    Ok(s)
}

fn create(dir: &Path, name: &str) -> twinfl::Result<BufWriter<File>> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    log::info!("writing {}", path.display());
    Ok(BufWriter::new(File::create(path)?))
}

fn run(cli: Cli) -> twinfl::Result<ExitCode> {
    let s = scenario(&cli)?;
    match &cli.command {
        Command::Solve { round } => solve(&s, *round)?,
        Command::Simulate { schemes } => {
            let schemes = if schemes.is_empty() {
                vec![s.scheme]
            } else {
                schemes.clone()
            };
            let runs: Vec<twinfl::Result<Vec<sim::MetricsRow>>> = schemes
                .par_iter()
                .map(|&scheme| {
                    sim::run_simulation(&Scenario {
                        scheme,
                        ..s.clone()
                    })
                })
                .collect();
            let mut rows = Vec::new();
            for r in runs {
                rows.extend(r?);
            }
            let name = format!("metrics_seed{}.csv", s.seed);
            sim::write_csv(&rows, create(&cli.out_dir, &name)?)?;
            println!(
                "{} rows written to {}",
                rows.len(),
                cli.out_dir.join(name).display()
            );
        }
        Command::Sweep {
            axis,
            values,
            schemes,
        } => {
            let schemes = if schemes.is_empty() {
                Scheme::ALL.to_vec()
            } else {
                schemes.clone()
            };
            let rows = sweep::sweep(&s, *axis, values, &schemes)?;
            let name = format!("sweep_{axis}.csv");
            sweep::write_csv(&rows, create(&cli.out_dir, &name)?)?;
            for r in rows.iter().filter(|r| r.stat != sweep::Stat::Sample) {
                match (r.scheme, r.cost) {
                    (Some(scheme), Some((t, e, c))) => {
                        println!(
                            "{axis}={:<6} {scheme:<8} T={t:.4} E={e:.4} T+E={c:.4}",
                            r.value
                        )
                    }
                    _ => println!("{axis}={:<6} skipped: {}", r.value, r.note),
                }
            }
            println!("written to {}", cli.out_dir.join(name).display());
        }
        Command::Selftest => {
            let mut ok = true;
            for (name, c) in selftest::run_all(&s) {
                println!(
                    "{name}: {} {}",
                    if c.pass { "PASS" } else { "FAIL" },
                    c.detail
                );
                ok &= c.pass;
            }
            if !ok {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Config => print!("{}", s.to_text()),
        Command::Keys => {
            for (k, d) in KEYS {
                println!("{k:<20} {d}");
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn solve(s: &Scenario, round: usize) -> twinfl::Result<()> {
    let (_, a) = sim::solve_round(s, round)?;
    let d = &a.decision;
    println!(
        "scheme {}, branch {:?}, decode order {:?}",
        a.scheme, d.branch, d.decode_order
    );
    println!(
        "{:>4} {:>10} {:>12} {:>8} {:>10} {:>12} {:>10} {:>10}",
        "id", "p [W]", "f [Hz]", "v", "alpha", "rate [b/s]", "E_cmp [J]", "E_com [J]"
    );
    for (c, cost) in d.clients.iter().zip(&a.report.clients) {
        println!(
            "{:>4} {:>10.5} {:>12.4e} {:>8.4} {:>10.3e} {:>12.4e} {:>10.5} {:>10.5}",
            c.id, c.power, c.frequency, c.fraction, c.alpha, c.rate, cost.e_cmp, cost.e_com
        );
    }
    println!(
        "t_cmp {:.4} s, t_com {:.4} s, t_server {:.4} s",
        d.t_cmp, d.t_com, d.t_server
    );
    println!(
        "T {:.6} s, E {:.6} J, T+E {:.6}",
        a.report.latency,
        a.report.energy,
        a.report.total_cost()
    );
    Ok(())
}
