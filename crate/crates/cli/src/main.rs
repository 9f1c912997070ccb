use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cocoa_cl::mnist::MnistData;
use cocoa_cl_cli::config::{ExperimentConfig, ExperimentId, Mode};
use cocoa_cl_cli::table::{emit, Format};
use cocoa_cl_cli::verify::{locate_mnist, run_all, Status, VerifyOptions};
use cocoa_cl_cli::{config, experiment, mnist_exp, CliError};

/// Distributed continual learning for linear regression: closed-form error
/// sweeps, Monte-Carlo simulation, digit classification, and verification.
#[derive(Parser)]
#[command(name = "cocoa-cl", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment preset.
    #[arg(value_name = "EXPERIMENT")]
    experiment: Option<String>,

    /// Flat key=value config file; CLI flags override it.
    #[arg(long)]
    config: Option<PathBuf>,

    #[arg(long)]
    seed: Option<u64>,

    /// Output path (defaults to `cocoa-cl-<experiment>.<format>`).
    #[arg(long)]
    out: Option<PathBuf>,

    /// csv or json.
    #[arg(long)]
    format: Option<String>,

    #[arg(long)]
    trials: Option<usize>,

    /// Worker threads (defaults to the number of cores).
    #[arg(long)]
    parallel: Option<usize>,

    /// Use the full-scale reference dimensions instead of the desk-scale
    /// simulation defaults.
    #[arg(long)]
    full_scale: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the closed-form error expressions over a preset grid.
    Theory(CommonArgs),
    /// Run Monte-Carlo simulation (with theory columns for comparison).
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// Skip the theory columns.
        #[arg(long)]
        sim_only: bool,
    },
    /// Continual digit classification on MNIST.
    Mnist {
        #[command(flatten)]
        common: CommonArgs,
        /// Directory with the four IDX files (falls back to
        /// COCOA_CL_MNIST_DIR, then data/mnist).
        #[arg(long)]
        mnist_dir: Option<PathBuf>,
    },
    /// Run the verification suite; exits nonzero on any failed criterion.
    Verify {
        #[arg(long)]
        mnist_dir: Option<PathBuf>,
        /// Reduced random-feature dimension for the digit criterion.
        #[arg(long)]
        mnist_features: Option<usize>,
        #[arg(long)]
        parallel: Option<usize>,
        /// Also write the outcomes as a table.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        format: Option<String>,
    },
}

fn set_parallelism(parallel: Option<usize>) {
    if let Some(threads) = parallel {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
}

fn build_config(common: &CommonArgs, mode: Mode) -> Result<ExperimentConfig, CliError> {
    // Resolution order: preset defaults, then the config file, then flags.
    let file_pairs = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Io { path: path.clone(), source: e })?;
            config::parse_config_text(&text)?
        }
        None => Default::default(),
    };
    let experiment = match &common.experiment {
        Some(name) => name.parse::<ExperimentId>()?,
        None => match file_pairs.get("experiment") {
            Some(name) => name.parse::<ExperimentId>()?,
            None => ExperimentId::Custom,
        },
    };
    let mut cfg = ExperimentConfig::preset(experiment, mode, common.full_scale);
    cfg.apply_pairs(&file_pairs)?;
    cfg.mode = mode;
    cfg.experiment = experiment;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = common.trials {
        cfg.trials = trials;
    }
    if let Some(format) = &common.format {
        cfg.format = format.parse()?;
    }
    if let Some(out) = &common.out {
        cfg.out = Some(out.clone());
    }
    Ok(cfg)
}

fn output_path(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out.clone().unwrap_or_else(|| {
        let ext = match cfg.format {
            Format::Csv => "csv",
            Format::Json => "json",
        };
        PathBuf::from(format!("cocoa-cl-{}.{ext}", cfg.experiment.name()))
    })
}

fn run_grid(common: &CommonArgs, mode: Mode) -> Result<(), CliError> {
    set_parallelism(common.parallel);
    let cfg = build_config(common, mode)?;
    let table = experiment::run_experiment(&cfg)?;
    let path = output_path(&cfg);
    emit(&table, cfg.format, &path)?;
    eprintln!(
        "{}: {} rows -> {} (p = {}, scale = {}, seed = {}, mode = {})",
        cfg.experiment.name(),
        table.rows.len(),
        path.display(),
        cfg.p,
        cfg.scale(),
        cfg.seed,
        cfg.mode.name(),
    );
    Ok(())
}

fn run_mnist_cmd(common: &CommonArgs, mnist_dir: Option<PathBuf>) -> Result<(), CliError> {
    set_parallelism(common.parallel);
    let mut cfg = build_config(common, Mode::Simulate)?;
    cfg.experiment = ExperimentId::Mnist;
    if let Some(dir) = mnist_dir {
        cfg.mnist.dir = Some(dir);
    }
    // For the digit pipeline, the generic trial knob means sequence replays.
    if let Some(trials) = common.trials {
        cfg.mnist.repetitions = trials;
    }
    let opts = VerifyOptions { mnist_dir: cfg.mnist.dir.clone(), mnist_features: None };
    let dir = locate_mnist(&opts).ok_or_else(|| {
        CliError::Config(
            "MNIST data not found; pass --mnist-dir, set COCOA_CL_MNIST_DIR, \
             or place the IDX files under data/mnist"
                .into(),
        )
    })?;
    let data = MnistData::load(&dir)?;
    let outcome = mnist_exp::run_mnist(&data, &cfg.mnist, cfg.seed)?;
    let path = output_path(&cfg);
    emit(&outcome.table, cfg.format, &path)?;
    let rates: Vec<String> =
        outcome.final_error.iter().map(|r| format!("{r:.3}")).collect();
    eprintln!(
        "mnist: {} rows -> {} (p = {}, reps = {}, final error rates [{}])",
        outcome.table.rows.len(),
        path.display(),
        cfg.mnist.features,
        cfg.mnist.repetitions,
        rates.join(", ")
    );
    Ok(())
}

fn run_verify(
    mnist_dir: Option<PathBuf>,
    mnist_features: Option<usize>,
    parallel: Option<usize>,
    out: Option<PathBuf>,
    format: Option<String>,
) -> Result<bool, CliError> {
    set_parallelism(parallel);
    let opts = VerifyOptions { mnist_dir, mnist_features };
    let outcomes = run_all(&opts);
    let mut all_ok = true;
    for outcome in &outcomes {
        println!("{}", outcome.line());
        all_ok &= outcome.status != Status::Fail;
    }
    if let Some(path) = out {
        let format = match format {
            Some(f) => f.parse()?,
            None => Format::Csv,
        };
        emit(&cocoa_cl_cli::verify::outcomes_table(&outcomes), format, &path)?;
    }
    Ok(all_ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Theory(common) => run_grid(common, Mode::Theory).map(|_| true),
        Command::Simulate { common, sim_only } => {
            let mode = if *sim_only { Mode::Simulate } else { Mode::Both };
            run_grid(common, mode).map(|_| true)
        }
        Command::Mnist { common, mnist_dir } => {
            run_mnist_cmd(common, mnist_dir.clone()).map(|_| true)
        }
        Command::Verify { mnist_dir, mnist_features, parallel, out, format } => run_verify(
            mnist_dir.clone(),
            *mnist_features,
            *parallel,
            out.clone(),
            format.clone(),
        ),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
