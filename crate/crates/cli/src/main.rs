use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use jdexpand_cli::commands::{
    cmd_density, cmd_mc, cmd_moment, cmd_price, density_csv, mc_csv, moment_csv, price_csv, price_table, Report,
};
use jdexpand_cli::config::{ExperimentConfig, Overrides};
use jdexpand_cli::error::CliError;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "jdexpand", version, about = "Generator expansions for jump-diffusion models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Call prices from the smoothed expansion against Monte Carlo.
    Price(Common),
    /// Transition density approximation on a grid.
    Density(Common),
    /// Moment E[f(x_t)] from the regular expansion.
    Moment(Common),
    /// Monte Carlo reference values only.
    Mc(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// CSV output; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON summary; defaults to `<out>.summary.json` when --out is given.
    #[arg(long)]
    summary: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    steps_per_year: Option<usize>,
    /// Run orders 1..=M.
    #[arg(long = "max-M")]
    max_m: Option<usize>,
    /// Single jump quadrature size.
    #[arg(long)]
    quad_n: Option<usize>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        Overrides {
            seed: self.seed,
            paths: self.paths,
            steps_per_year: self.steps_per_year,
            max_order: self.max_m,
            quad_n: self.quad_n,
            cache_dir: self.cache_dir.clone(),
        }
        .apply(&mut cfg)?;
        Ok(cfg)
    }

    fn emit<R: Serialize, S: Serialize>(&self, report: &Report<R, S>, csv: String) -> Result<(), CliError> {
        match &self.out {
            Some(p) => fs::write(p, csv)?,
            None => std::io::stdout().write_all(csv.as_bytes())?,
        }
        let summary = self.summary.clone().or_else(|| {
            self.out.as_ref().map(|p| {
                let mut s = p.clone().into_os_string();
                s.push(".summary.json");
                PathBuf::from(s)
            })
        });
        if let Some(p) = summary {
            fs::write(p, report.summary_json() + "\n")?;
        }
        for w in &report.warnings {
            eprintln!("{w}");
        }
        Ok(())
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Price(c) => {
            let r = cmd_price(&c.load()?)?;
            for line in price_table(&r.summaries) {
                eprintln!("{line}");
            }
            c.emit(&r, price_csv(&r.rows))
        }
        Command::Density(c) => {
            let r = cmd_density(&c.load()?)?;
            for s in &r.summaries {
                eprintln!(
                    "delta={} M={} n={} normalization={} min={:e} sup_err={}",
                    s.delta,
                    s.order,
                    s.quad_n,
                    s.normalization.map_or("-".into(), |v| v.to_string()),
                    s.min_density,
                    s.sup_abs_err.map_or("-".into(), |v| format!("{v:e}"))
                );
            }
            c.emit(&r, density_csv(&r.rows))
        }
        Command::Moment(c) => {
            let r = cmd_moment(&c.load()?)?;
            c.emit(&r, moment_csv(&r.rows))
        }
        Command::Mc(c) => {
            let r = cmd_mc(&c.load()?)?;
            c.emit(&r, mc_csv(&r.rows))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
