use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use evseg_cli::{commands, exit_code, Config, ConfigError};

#[derive(Parser)]
#[command(name = "evseg", version, about = "Event-camera flow, BEI rendering and superevent segmentation")]
struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Process only the first N events.
    #[arg(long, global = true)]
    limit: Option<usize>,
    /// Input event file (overrides `events`).
    #[arg(long, global = true)]
    events: Option<PathBuf>,
    /// Override any config key, e.g. `--set kappa_bei=1`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate normal flow and write flow.csv.
    Flow,
    /// Render BEIs at the scene-adaptive rate.
    Render {
        /// Debug: render at exact multiples of this period (seconds).
        #[arg(long)]
        fixed_interval: Option<f64>,
    },
    /// Cluster rendered BEIs into superevents.
    Superevents,
    /// Score superevent boundaries against frame edges.
    Eval,
    /// Generate a synthetic scene.
    Synth,
    /// Run every stage.
    Pipeline,
    /// Print the effective configuration.
    Config,
}

fn build_config(cli: &Cli) -> Result<Config> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| ConfigError(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(n) = cli.limit {
        cfg.limit = Some(n);
    }
    if let Some(e) = &cli.events {
        cfg.events = Some(e.clone());
    }
    if let Command::Render {
        fixed_interval: Some(p),
    } = cli.command
    {
        cfg.fixed_interval = Some(p);
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = build_config(cli).context("configuration")?;
    match cli.command {
        Command::Flow => {
            let s = commands::cmd_flow(&cfg)?;
            println!("{} events, {} flow rows", s.events, s.flow_rows);
        }
        Command::Render { .. } => {
            let s = commands::cmd_render(&cfg)?;
            println!("{} events, {} renders", s.events, s.renders);
        }
        Command::Superevents => {
            let s = commands::cmd_superevents(&cfg)?;
            println!("{} label maps", s.maps);
        }
        Command::Eval => {
            let rows = commands::cmd_eval(&cfg)?;
            println!("{} label maps scored", rows.len());
        }
        Command::Synth => {
            let s = commands::cmd_synth(&cfg)?;
            println!("{} events, {} frames", s.events, s.frames);
        }
        Command::Pipeline => {
            let s = commands::cmd_pipeline(&cfg)?;
            println!(
                "{} events, {} renders, {:.0} events/s",
                s.process.events,
                s.process.renders,
                s.process.events_per_second()
            );
        }
        Command::Config => {
            cfg.validate()?;
            print!("{}", cfg.to_text());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "debug" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
