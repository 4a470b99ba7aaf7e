use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use flt::attention::alloc::CountingAllocator;
use flt::cli::{self, approx, bench, train, verify};
use flt::Error;

#[global_allocator]
static ALLOC: CountingAllocator = CountingAllocator;

#[derive(Parser)]
#[command(name = "flt", version, about = "Spectral RPE attention: checks, sweeps, benchmarks, toy training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON config file; missing fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any config field, e.g. `--set train.adam.eps=1e-8`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Base seed (also settable through FLT_SEED).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the invariant suite; exit 1 if any property fails.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Run only properties whose name contains this.
        #[arg(long)]
        filter: Option<String>,
        /// Deliberate defect, e.g. `sinc_limit_sign_flip`.
        #[arg(long)]
        inject_fault: Option<String>,
    },
    /// Relative error of FLT against the dense oracle.
    ApproxError {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        num_seeds: Option<usize>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Wall time and peak heap per method over an L grid.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        reps: Option<usize>,
    },
    /// Toy training, optionally paired FLT vs Performer.
    Train {
        #[command(flatten)]
        common: Common,
        /// offset_kernel_1d, neighborhood_3d or causal_copy.
        #[arg(long)]
        task: Option<String>,
        #[arg(long)]
        paired: bool,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        num_seeds: Option<usize>,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
}

fn resolve(common: &Common, flags: Vec<(&str, Option<Value>)>) -> flt::Result<Value> {
    let mut v = cli::read_config_value(common.config.as_deref())?;
    if let Some(seed) = cli::seed_from_env()? {
        cli::set_path(&mut v, "seed", json!(seed))?;
    }
    if let Some(seed) = common.seed {
        cli::set_path(&mut v, "seed", json!(seed))?;
    }
    for (key, value) in flags {
        if let Some(value) = value {
            cli::set_path(&mut v, key, value)?;
        }
    }
    cli::apply_overrides(&mut v, &common.set)?;
    Ok(v)
}

fn path_value(p: &Option<PathBuf>) -> Option<Value> {
    p.as_ref().map(|p| json!(p))
}

/// Summary goes to stderr when the CSV itself is on stdout.
fn summary_sink(csv_to_file: bool) -> Box<dyn Write> {
    if csv_to_file {
        Box::new(std::io::stdout())
    } else {
        Box::new(std::io::stderr())
    }
}

fn dispatch(command: Command) -> flt::Result<bool> {
    match command {
        Command::Verify {
            common,
            filter,
            inject_fault,
        } => {
            let v = resolve(&common, vec![("filter", filter.map(Value::from)), ("inject_fault", inject_fault.map(Value::from))])?;
            let cfg: verify::VerifyConfig = cli::parse_config(v)?;
            Ok(verify::run(&cfg, &mut std::io::stdout())?.passed())
        }
        Command::ApproxError {
            common,
            output,
            num_seeds,
            threads,
        } => {
            let v = resolve(
                &common,
                vec![
                    ("output", path_value(&output)),
                    ("num_seeds", num_seeds.map(Value::from)),
                    ("threads", threads.map(Value::from)),
                ],
            )?;
            let cfg: approx::ApproxConfig = cli::parse_config(v)?;
            approx::run(&cfg, &mut summary_sink(cfg.output.is_some()))?;
            Ok(true)
        }
        Command::Bench { common, output, reps } => {
            let v = resolve(&common, vec![("output", path_value(&output)), ("reps", reps.map(Value::from))])?;
            let cfg: bench::BenchConfig = cli::parse_config(v)?;
            bench::run(&cfg, &mut summary_sink(cfg.output.is_some()))?;
            Ok(true)
        }
        Command::Train {
            common,
            task,
            paired,
            steps,
            num_seeds,
            threads,
            output_dir,
        } => {
            let v = resolve(
                &common,
                vec![
                    ("task.kind", task.map(Value::from)),
                    ("paired", paired.then_some(Value::Bool(true))),
                    ("train.steps", steps.map(Value::from)),
                    ("num_seeds", num_seeds.map(Value::from)),
                    ("threads", threads.map(Value::from)),
                    ("output_dir", path_value(&output_dir)),
                ],
            )?;
            let cfg: train::TrainCommandConfig = cli::parse_config(v)?;
            train::run(&cfg, &mut std::io::stdout())?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let args = Cli::parse();
    match dispatch(args.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(cli::EXIT_FAILURE as u8),
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::Io(_) => cli::EXIT_FAILURE,
                ref other => cli::exit_code(other),
            };
            ExitCode::from(code as u8)
        }
    }
}
