use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dse_cli::{run_file, write_error_record, Overrides};

#[derive(Parser)]
#[command(name = "dse", version, about = "Deception Stackelberg equilibrium solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configuration and write results into the output directory.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        mode: Option<String>,
        #[arg(long, env = "DSE_OUT_DIR")]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, env = "DSE_WORKERS")]
        workers: Option<usize>,
    },
}

fn main() -> ExitCode {
    let Command::Solve {
        config,
        mode,
        out,
        seed,
        workers,
    } = Cli::parse().command;
    let overrides = Overrides {
        mode,
        output_dir: out,
        seed,
        workers,
    };
    match run_file(&config, &overrides) {
        Ok(results) => {
            let summary = &results["result"];
            if let Some(eq) = summary.get("equilibrium") {
                println!(
                    "theta* = {}  x* = {}  utility = {}",
                    eq["theta_star"], eq["x_star"], eq["utility"]
                );
            } else {
                println!("{} finished", results["mode"].as_str().unwrap_or("run"));
            }
            ExitCode::SUCCESS
        }
        Err(err) => {
            let record = err.record();
            eprintln!("{}", serde_json::to_string(&record).unwrap_or_default());
            let dir = overrides.output_dir.clone().or_else(|| {
                // fall back to the directory named in the file, when it parses
                std::fs::read_to_string(&config)
                    .ok()
                    .and_then(|t| t.parse::<toml::Table>().ok())
                    .and_then(|t| t.get("output_dir").and_then(|v| v.as_str()).map(PathBuf::from))
            });
            if let Some(dir) = dir {
                write_error_record(&dir, &err);
            }
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
