use std::path::PathBuf;
use std::process::ExitCode;

use cameras_cli::commands::{self, build_fixture, Context, FixtureOptions, RunSummary};
use cameras_cli::config::{parse_dims, parse_fraction, MethodName, Overrides};
use cameras_cli::error::{CliError, EXIT_OK};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cameras", version, about = "High-resolution class activation maps and their checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a map, an overlay and a record per image.
    Saliency(RunArgs),
    /// Pointing game and density scores over annotated images.
    Eval(RunArgs),
    /// Cascading model-randomization check.
    Sanity(RunArgs),
    /// Vanilla and saliency-masked targeted attacks.
    Attack(RunArgs),
    /// Generate the toy quadrant dataset, model and config.
    Fixture(FixtureArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// A directory of PNG images or a JSON manifest.
    #[arg(long)]
    images: PathBuf,
    /// Model descriptor (TOML).
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Largest ladder size, `N` or `HxW`.
    #[arg(long, value_parser = parse_dims)]
    zeta_max: Option<(usize, usize)>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    layer: Option<String>,
    /// cameras, gradcam or edge-control.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    beta: Option<f64>,
    /// Raw-unit budget, e.g. `12/255`.
    #[arg(long, value_parser = parse_fraction)]
    epsilon: Option<f64>,
}

#[derive(Args)]
struct FixtureArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 20)]
    count: usize,
    #[arg(long, default_value_t = 12_345)]
    seed: u64,
    /// Training epochs; 0 keeps random weights.
    #[arg(long, default_value_t = 6)]
    epochs: usize,
    #[arg(long, default_value_t = cameras::fixture::TRAIN_SIZE)]
    train_size: usize,
}

fn run(args: RunArgs, f: fn(&Context) -> Result<RunSummary, CliError>) -> Result<i32, CliError> {
    let overrides = Overrides {
        model: args.model,
        out: args.out,
        seed: args.seed,
        zeta_max: args.zeta_max,
        steps: args.steps,
        layer: args.layer,
        method: args.method.as_deref().map(MethodName::parse).transpose()?,
        beta: args.beta,
        epsilon: args.epsilon,
    };
    let ctx = Context::new(args.config.as_deref(), &args.images, &overrides)?;
    let summary = f(&ctx)?;
    eprintln!("{} processed, {} failed; outputs in {}", summary.processed, summary.failed, ctx.config.out.display());
    Ok(summary.exit_code())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            let ok = matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            return ExitCode::from(if ok { 0 } else { 1 });
        }
    };
    let result = match cli.command {
        Command::Saliency(a) => run(a, commands::cmd_saliency),
        Command::Eval(a) => run(a, commands::cmd_eval),
        Command::Sanity(a) => run(a, commands::cmd_sanity),
        Command::Attack(a) => run(a, commands::cmd_attack),
        Command::Fixture(a) => build_fixture(&FixtureOptions {
            out: a.out,
            count: a.count,
            seed: a.seed,
            epochs: a.epochs,
            train_size: a.train_size,
        })
        .map(|_| EXIT_OK),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
