use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gmekf::bench::{
    equivalence_report, monte_carlo, run_filter, summarize, write_equivalence_csv, write_nees_csv,
    write_run_csv, FilterKind, FilterOptions, RunError,
};
use gmekf::config::{ConfigError, ConfigFile, CovarianceMod};
use gmekf::sim::{generate_scenario, ScenarioConfig};

/// Attitude filter benchmark: MEKF, GMEKF and GEKF over simulated scenarios.
#[derive(Parser)]
#[command(name = "gmekf", version)]
struct Cli {
    /// Post-reset covariance modification for GMEKF; overrides the config.
    #[arg(long, global = true, value_enum)]
    covariance_mod: Option<CovarianceMod>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one filter and write per-epoch errors, covariance diagonal and NEES.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        filter: FilterKind,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run GEKF and GMEKF in lockstep and write their per-epoch discrepancy.
    Equiv {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run many seeds and write per-run CSVs plus run-averaged NEES.
    Montecarlo {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = FilterKind::Gmekf)]
        filter: FilterKind,
        #[arg(long)]
        runs: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// TOML scenario and tuning file.
    #[arg(long)]
    config: PathBuf,
    /// Scenario seed (first seed for montecarlo); defaults to the config's.
    #[arg(long)]
    seed: Option<u64>,
}

enum Failure {
    Config(String),
    Numerical(String),
    Io(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Scenario(e) => Failure::Config(e.to_string()),
            e => Failure::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

fn load(
    common: &Common,
    cov_mod: Option<CovarianceMod>,
) -> Result<(ScenarioConfig, FilterOptions), Failure> {
    let mut file = ConfigFile::load(&common.config)?;
    if let Some(m) = cov_mod {
        file.filter.covariance_mod = m;
    }
    let (mut scenario, options) = file.to_runtime()?;
    if let Some(seed) = common.seed {
        scenario.seed = seed;
    }
    Ok((scenario, options))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run {
            common,
            filter,
            out,
        } => {
            let (cfg, options) = load(&common, cli.covariance_mod)?;
            let scenario = generate_scenario(&cfg).map_err(|e| Failure::Config(e.to_string()))?;
            let records = run_filter(&scenario, filter, &options)?;
            let mut w = create(&out)?;
            write_run_csv(&mut w, &records)?;
            w.flush()?;
            if let Ok(s) = summarize(&records) {
                println!(
                    "{filter}: {} epochs, attitude RMSE {:.3e} rad, bias RMSE {:.3e} rad/s, \
                     mean NEES {:.3}, NEES 95% coverage {:.1}%",
                    s.epochs,
                    s.rmse_attitude,
                    s.rmse_bias,
                    s.mean_nees,
                    100.0 * s.nees_coverage
                );
            }
        }
        Command::Equiv { common, out } => {
            let (cfg, options) = load(&common, cli.covariance_mod)?;
            let scenario = generate_scenario(&cfg).map_err(|e| Failure::Config(e.to_string()))?;
            let report = equivalence_report(&scenario, &options)?;
            let mut w = create(&out)?;
            write_equivalence_csv(&mut w, &report)?;
            w.flush()?;
            println!(
                "GEKF vs GMEKF over {} epochs: max dq {:.3e} rad, max db {:.3e} rad/s, max dP {:.3e}",
                report.records.len(),
                report.max_dq_rad,
                report.max_db_norm,
                report.max_dp_rel
            );
        }
        Command::Montecarlo {
            common,
            filter,
            runs,
            out,
        } => {
            if runs == 0 {
                return Err(Failure::Config("--runs must be at least 1".into()));
            }
            let (cfg, options) = load(&common, cli.covariance_mod)?;
            let mc = monte_carlo(&cfg, filter, &options, runs, cfg.seed)?;
            fs::create_dir_all(&out).map_err(|e| Failure::Io(format!("{}: {e}", out.display())))?;
            let mut summary = create(&out.join("summary.csv"))?;
            writeln!(
                summary,
                "seed,rmse_att_rad,rmse_bias_rad_s,mean_nees,nees_coverage"
            )?;
            for (seed, records) in mc.seeds.iter().zip(&mc.runs) {
                let mut w = create(&out.join(format!("run_{seed}.csv")))?;
                write_run_csv(&mut w, records)?;
                w.flush()?;
                if let Ok(s) = summarize(records) {
                    writeln!(
                        summary,
                        "{seed},{:e},{:e},{:e},{:e}",
                        s.rmse_attitude, s.rmse_bias, s.mean_nees, s.nees_coverage
                    )?;
                }
            }
            summary.flush()?;
            let mut w = create(&out.join("nees.csv"))?;
            write_nees_csv(&mut w, &mc)?;
            w.flush()?;
            println!(
                "{filter}: {runs} runs, run-averaged NEES inside [{:.3}, {:.3}] for {:.1}% of epochs",
                mc.band.0,
                mc.band.1,
                100.0 * mc.fraction_inside
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
