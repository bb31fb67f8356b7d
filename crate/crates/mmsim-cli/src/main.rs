use clap::{Parser, Subcommand};
use mmsim_cli::commands;
use mmsim_cli::config::Config;
use mmsim_cli::report::Report;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "mmsim", about = "Minimax simulator learning: bound certification and desk-scale studies")]
struct Cli {
    /// TOML configuration file; omitted sections take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory root (overrides the config and MMSIM_OUT_DIR).
    #[arg(long, global = true)]
    out_dir: Option<String>,
    /// Base seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every bound-certification suite; nonzero exit on any violation.
    Verify {
        /// Corrupt a kernel after computing a bound, proving detection works.
        #[arg(long)]
        sabotage: bool,
    },
    /// Bounded-witness critic game on the scalar benchmark kernel.
    TrainTv,
    /// Transport-critic game on the scalar benchmark kernel.
    TrainW1,
    /// Tabular active learning with finite-time and saddle-point accounting.
    Active,
    /// Narrow-passage study: active rounds, heatmaps, vector fields.
    ReproduceNarrowPassage,
    /// Biased-coverage accuracy study across seeds.
    BiasStudy,
    /// Importance-clip stability study across seeds.
    Stability,
    /// Print the report of an existing run directory.
    Report {
        dir: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut cfg = match Config::load(cli.config.as_deref()) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(dir) = cli.out_dir {
        cfg.run.out_dir = dir;
    }
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
    }

    let (name, report): (&str, Report) = match cli.command {
        Command::Verify { sabotage } => {
            if sabotage {
                cfg.verify.sabotage = true;
            }
            ("verify", commands::verify::run(&cfg))
        }
        Command::TrainTv => {
            let dir = cfg.run_dir("train-tv");
            ("train-tv", commands::train::run_tv(&cfg, Some(&dir)))
        }
        Command::TrainW1 => {
            let dir = cfg.run_dir("train-w1");
            ("train-w1", commands::train::run_w1(&cfg, Some(&dir)))
        }
        Command::Active => {
            let dir = cfg.run_dir("active");
            ("active", commands::active_cmd::run(&cfg, Some(&dir)))
        }
        Command::ReproduceNarrowPassage => {
            let dir = cfg.run_dir("reproduce-narrow-passage");
            ("reproduce-narrow-passage", commands::narrow::run(&cfg, Some(&dir)))
        }
        Command::BiasStudy => {
            let dir = cfg.run_dir("bias-study");
            ("bias-study", commands::bias::run(&cfg, Some(&dir)))
        }
        Command::Stability => {
            let dir = cfg.run_dir("stability");
            ("stability", commands::stability::run(&cfg, Some(&dir)))
        }
        Command::Report { dir } => {
            let path = dir.join("report.json");
            match std::fs::read_to_string(&path) {
                Ok(text) => match serde_json::from_str::<Report>(&text) {
                    Ok(report) => {
                        print!("{}", report.summary());
                        return if report.all_passed() { ExitCode::SUCCESS } else { ExitCode::FAILURE };
                    }
                    Err(e) => {
                        eprintln!("bad report {}: {e}", path.display());
                        return ExitCode::from(2);
                    }
                },
                Err(e) => {
                    eprintln!("cannot read {}: {e}", path.display());
                    return ExitCode::from(2);
                }
            }
        }
    };

    let dir = cfg.run_dir(name);
    if let Err(e) = report.write(&dir) {
        eprintln!("cannot write report: {e}");
        return ExitCode::from(2);
    }
    print!("{}", report.summary());
    println!("report: {}", dir.join("report.json").display());
    if report.all_passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
