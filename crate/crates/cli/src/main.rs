use std::path::PathBuf;
use std::process::ExitCode;

use axonfd_cli::{cmd_audit, cmd_converge, cmd_ou_stats, cmd_simulate, in_pool, CliError, RunConfig};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "axonfd", version, about = "Finite-difference simulations of stochastic neuron cable models")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON run configuration; defaults apply to every missing key.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Run only this seed (replaces the config's seed list).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output directory (default: config `out_dir`, else `out`).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Integrate one trajectory per seed and write CSV, binary and monitors.
    Simulate,
    /// Run the nested-grid convergence study.
    Converge,
    /// Check the declared model constants.
    Audit,
    /// Quantiles of the discrete OU sup-norm across grid sizes.
    OuStats,
}

fn run(cli: Cli) -> Result<i32, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seeds = vec![seed];
    }
    let out = cli
        .out_dir
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let command = cli.command;
    in_pool(cli.threads, move || -> Result<i32, CliError> {
        match command {
            Command::Simulate => {
                for s in cmd_simulate(&cfg, &out)? {
                    println!(
                        "seed {}: {} snapshots, max excursion {:e}, final sup|u| {:e}",
                        s.seed, s.snapshots, s.max_excursion, s.final_sup_u
                    );
                }
                Ok(0)
            }
            Command::Converge => {
                let res = cmd_converge(&cfg, &out)?;
                for l in &res.report.levels {
                    println!("n = {:>5}  mean_err = {:e}  mean_werr = {:e}", l.n, l.mean_err, l.mean_werr);
                }
                let show = |v: Option<f64>| v.map_or("n/a".to_string(), |s| format!("{s:.4}"));
                println!("slope_plain = {}", show(res.report.slope_plain));
                println!("slope_weighted = {}", show(res.report.slope_weighted));
                for f in &res.report.failures {
                    eprintln!("seed {} failed: {}", f.seed, f.reason);
                }
                Ok(0)
            }
            Command::Audit => {
                let report = cmd_audit(&cfg, &out)?;
                println!("model {} with K = {}", report.model, report.constants.k);
                for c in &report.checks {
                    println!(
                        "assumption {} {:<28} {:?} (measured {:e}, declared {:e})",
                        c.assumption, c.check, c.status, c.measured, c.declared
                    );
                }
                if report.passed {
                    Ok(0)
                } else {
                    for c in report.failures() {
                        eprintln!("violated: assumption {} {}: {}", c.assumption, c.check, c.detail);
                    }
                    Ok(4)
                }
            }
            Command::OuStats => {
                let stats = cmd_ou_stats(&cfg, &out)?;
                for r in &stats.rows {
                    let qs: Vec<String> = r.quantiles.iter().map(|q| format!("q{}={:.4}", q.q, q.value)).collect();
                    println!("n = {:>5}  {}", r.n, qs.join("  "));
                }
                if let Some(s) = stats.spread_p95 {
                    println!("p95 spread = {:.2}%", 100.0 * s);
                }
                Ok(0)
            }
        }
    })?
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
