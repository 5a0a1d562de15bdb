use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use uavcol_cli::commands::{
    cmd_generate, cmd_run, cmd_sweep, cmd_validate, load_config, CliError, GenerateArgs, RunOptions, SweepArgs,
};
use uavcol_cli::{SchemeSelector, Template};

#[derive(Parser)]
#[command(name = "uavcol", version, about = "UAV item-collection planning: LK ordering, DDPG flight, MPC baseline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunFlags {
    #[arg(long, value_enum, env = "UAVCOL_SCHEME")]
    scheme: Option<SchemeSelector>,
    /// Single seed; ignored when --seeds is given.
    #[arg(long, env = "UAVCOL_SEED")]
    seed: Option<u64>,
    #[arg(long, value_delimiter = ',', env = "UAVCOL_SEEDS")]
    seeds: Option<Vec<u64>>,
    #[arg(long, env = "UAVCOL_OUT")]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 1, env = "UAVCOL_JOBS")]
    jobs: usize,
    /// Unscaled distance penalties in the training reward.
    #[arg(long, env = "UAVCOL_PAPER_REWARDS")]
    paper_rewards: bool,
    /// Training episodes, overriding the preset and config file.
    #[arg(long, env = "UAVCOL_EPISODES")]
    episodes: Option<usize>,
    /// JSON run configuration with preset overrides.
    #[arg(long, env = "UAVCOL_CONFIG")]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a random scenario file.
    Generate {
        #[arg(long, env = "UAVCOL_ITEMS")]
        items: usize,
        /// Obstacle count; defaults to the template's.
        #[arg(long, env = "UAVCOL_OBSTACLES")]
        obstacles: Option<usize>,
        #[arg(long, default_value_t = 0, env = "UAVCOL_SEED")]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Template::SmallDesk, env = "UAVCOL_TEMPLATE")]
        template: Template,
        #[arg(long, env = "UAVCOL_OUT")]
        out: PathBuf,
    },
    /// Fly the selected schemes on a scenario.
    Run {
        #[arg(long, env = "UAVCOL_SCENARIO")]
        scenario: PathBuf,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Compare the schemes over generated scenarios for several item counts.
    Sweep {
        #[arg(long, value_delimiter = ',', default_values_t = [2, 4, 6], env = "UAVCOL_KS")]
        ks: Vec<usize>,
        #[arg(long, env = "UAVCOL_OBSTACLES")]
        obstacles: Option<usize>,
        #[arg(long, value_enum, default_value_t = Template::SmallDesk, env = "UAVCOL_TEMPLATE")]
        template: Template,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Check a trajectory CSV against a scenario.
    Validate {
        #[arg(long, env = "UAVCOL_TRAJECTORY")]
        trajectory: PathBuf,
        #[arg(long, env = "UAVCOL_SCENARIO")]
        scenario: PathBuf,
    },
}

fn options(flags: RunFlags) -> Result<RunOptions, CliError> {
    let config = load_config(flags.config.as_deref())?;
    Ok(RunOptions {
        scheme: flags.scheme,
        seeds: flags.seeds.or(flags.seed.map(|s| vec![s])),
        out: flags.out,
        jobs: flags.jobs,
        paper_rewards: flags.paper_rewards,
        episodes: flags.episodes,
        config,
    })
}

fn mission_status(failed: usize, total: usize) -> Result<(), CliError> {
    if failed == 0 {
        Ok(())
    } else {
        Err(CliError::MissionFailed(format!("{failed} of {total} missions failed")))
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate { items, obstacles, seed, template, out } => {
            cmd_generate(&GenerateArgs { items, obstacles, seed, template, out })
        }
        Command::Run { scenario, flags } => {
            let summary = cmd_run(&scenario, &options(flags)?)?;
            mission_status(summary.failed, summary.rows.len())
        }
        Command::Sweep { ks, obstacles, template, flags } => {
            let rows = cmd_sweep(&SweepArgs { ks, obstacles, template }, &options(flags)?)?;
            mission_status(rows.iter().filter(|r| !r.success).count(), rows.len())
        }
        Command::Validate { trajectory, scenario } => {
            if cmd_validate(&trajectory, &scenario)? {
                Ok(())
            } else {
                Err(CliError::MissionFailed("trajectory has violations".into()))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
