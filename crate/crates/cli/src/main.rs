use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use automarg::experiment::{run, Mode, RunConfig};
use automarg::sampler::NutsConfig;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "automarg", version, about = "Automatically marginalized HMC experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one sampler configuration on a model and print a JSON report.
    Run(RunArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    /// eight_schools, repeated_binary_trials, electric_company,
    /// pulmonary_fibrosis, funnel or no_conjugacy.
    #[arg(long)]
    model: String,
    /// CSV dataset; defaults to the model's bundled or synthetic data.
    #[arg(long)]
    data: Option<PathBuf>,
    /// hmc, hmc-m or hmc-r.
    #[arg(long, default_value = "hmc-m")]
    mode: String,
    #[arg(long, default_value_t = 2000)]
    warmup: usize,
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long, default_value_t = 1)]
    chains: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Node-name globs never marginalized. Replaces the model's defaults;
    /// pass an empty string to exempt nothing.
    #[arg(long, value_delimiter = ',')]
    exempt: Option<Vec<String>>,
    #[arg(long, default_value_t = 0.8)]
    target_accept: f64,
    #[arg(long, default_value_t = 10)]
    max_tree_depth: usize,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write draws of the original latents as CSV.
    #[arg(long)]
    draws_csv: Option<PathBuf>,
    /// Print the transformation log to stderr.
    #[arg(long)]
    explain: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let Command::Run(args) = Cli::parse().command;
    match run_cmd(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

fn run_cmd(args: RunArgs) -> Result<(), String> {
    let mode: Mode = args.mode.parse().map_err(|e| format!("{e}"))?;
    let exempt = args
        .exempt
        .map(|e| e.into_iter().filter(|s| !s.is_empty()).collect::<Vec<_>>());
    let config = RunConfig {
        model: args.model,
        data: args.data,
        mode,
        exempt,
        sampler: NutsConfig {
            warmup: args.warmup,
            draws: args.samples,
            max_tree_depth: args.max_tree_depth,
            target_accept: args.target_accept,
            seed: args.seed,
            chains: args.chains,
        },
        out: args.out.clone(),
        draws_csv: args.draws_csv,
    };
    let output = run(&config).map_err(|e| e.to_string())?;
    let report = &output.report;
    if args.explain {
        eprintln!(
            "reduced dimension {} (from {})",
            report.reduced_dim, report.original_dim
        );
        for event in &report.transformation_log {
            eprintln!("{event}");
        }
        for name in &report.reparameterized {
            eprintln!("non-centered {name}");
        }
    }
    for w in &report.warnings {
        log::warn!("{w}");
    }
    if args.out.is_none() {
        // A closed pipe (e.g. `| head`) is not an error worth reporting.
        let _ = writeln!(std::io::stdout().lock(), "{}", report.to_json());
    }
    Ok(())
}
