use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use s5p_ssr::cli::{run, Command};

#[derive(Parser)]
#[command(name = "s5p-ssr", version, about = "Self-supervised super-resolution for Sentinel-5P radiance bands")]
struct Args {
    /// One of synth-data, prepare, train, evaluate, superresolve, visualize.
    command: String,
    #[arg(long)]
    config: PathBuf,
    /// Dotted override such as `train.eq.lambda=0.5`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let result = args
        .command
        .parse::<Command>()
        .and_then(|c| run(c, &args.config, &args.set));
    match result {
        Ok(artifacts) => {
            for p in artifacts {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
