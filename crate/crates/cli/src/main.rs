use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use cellfree::accounting::CostReport;
use cellfree::campaign::SetupState;
use cellfree::scenario::{emit_scenario, run_scenario, ScenarioOptions};
use cellfree::{emit_results, parse_config, run_campaign};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cellfree", version, about = "Cell-free massive MIMO Monte-Carlo simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a campaign and write the SE table, CDFs and metadata.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (default: all cores). Results do not depend on it.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Print fronthaul loads and multiplication counts as CSV.
    Account {
        #[arg(long)]
        config: PathBuf,
        /// Setup whose cluster assignment is accounted.
        #[arg(long, default_value_t = 0)]
        setup: usize,
    },
    /// Run a named comparison scenario and check its expected properties.
    Bench {
        #[arg(long)]
        scenario: String,
        /// Full-size networks; takes hours.
        #[arg(long)]
        full_scale: bool,
        #[arg(long)]
        setups: Option<usize>,
        #[arg(long)]
        realizations: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Also write per-campaign result files here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn read_config(path: &PathBuf) -> Result<cellfree::SimulationConfig> {
    parse_config(path).with_context(|| format!("loading {}", path.display()))
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Simulate {
            config,
            out,
            seed,
            threads,
        } => {
            let mut cfg = read_config(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let mut pool = rayon::ThreadPoolBuilder::new();
            if let Some(t) = threads {
                pool = pool.num_threads(t);
            }
            let pool = pool.build()?;
            let report = pool.install(|| run_campaign(&cfg))?;
            for path in emit_results(&report, &out)? {
                println!("{}", path.display());
            }
            Ok(true)
        }
        Command::Account { config, setup } => {
            let cfg = read_config(&config)?;
            let state = SetupState::build(&cfg, setup)?;
            let costs = CostReport::new(&cfg, &state.assignment, &state.partners);
            print!("{}", costs.to_csv());
            Ok(true)
        }
        Command::Bench {
            scenario,
            full_scale,
            setups,
            realizations,
            seed,
            out,
        } => {
            let opts = ScenarioOptions {
                full_scale,
                setups,
                realizations,
                seed,
            };
            let report = run_scenario(&scenario, &opts)?;
            println!("scenario {}", report.name);
            for c in &report.columns {
                println!("  {:<28} {:>8.4}", format!("{} [{}]", c.label, c.column.campaign), c.mean);
            }
            for p in &report.properties {
                let tag = if p.passed { "PASS" } else { "FAIL" };
                println!("{tag} {}: {}", p.description, p.detail);
            }
            if let Some(dir) = out {
                emit_scenario(&report, &dir)?;
            }
            Ok(report.passed())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
