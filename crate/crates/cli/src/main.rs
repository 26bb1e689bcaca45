mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{Settings, UsageError};

#[derive(Parser)]
#[command(
    name = "ddgfusion",
    version,
    about = "Stability change prediction from experimental and simulated data"
)]
struct Cli {
    /// Flat `key = value` file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
pub struct StructureArgs {
    /// PDB file of the wild-type structure.
    #[arg(long)]
    pub structure: Option<String>,
    /// Chain identifier (default: first chain in the file).
    #[arg(long)]
    pub chain: Option<char>,
    /// Contact distance in Ångström.
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Args, Clone, Default)]
pub struct MatrixArgs {
    /// Directory of AAindex2 or TSV matrices (default: the bundled set).
    #[arg(long)]
    pub matrix_dir: Option<String>,
}

#[derive(Args, Clone, Default)]
pub struct DataArgs {
    /// Experimental `variant,ddg` CSV.
    #[arg(long)]
    pub experimental: Option<String>,
    /// Simulated `variant,ddg` CSV.
    #[arg(long)]
    pub simulated: Option<String>,
    /// Fail on variants naming residues missing from the structure instead of skipping them.
    #[arg(long)]
    pub strict_residues: bool,
}

#[derive(Args, Clone, Default)]
pub struct ChainArgs {
    /// Scaling chain length, burn-in included.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// Variance of experimental values around transformed simulated ones.
    #[arg(long)]
    pub noise_variance: Option<f64>,
    /// Scaling without matched pairs: `baseline` (0.57·y) or `prior`.
    #[arg(long)]
    pub no_pairs: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the scaling posterior and rescale simulated values.
    Calibrate {
        #[command(flatten)]
        structure: StructureArgs,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        chain: ChainArgs,
        /// Receives posterior.csv and scaled.csv.
        #[arg(long)]
        out_dir: Option<String>,
    },
    /// Fit a model and write it with a parameter summary.
    Train {
        #[command(flatten)]
        structure: StructureArgs,
        #[command(flatten)]
        matrices: MatrixArgs,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        chain: ChainArgs,
        /// `fusion-<mkl|MATRIX>` or `exp-<mkl|MATRIX>`; default single BLOSUM62.
        #[arg(long)]
        mode: Option<String>,
        /// Receives model.bin and summary.csv.
        #[arg(long)]
        out_dir: Option<String>,
    },
    /// Predict mean and standard deviation for a list of variants.
    Predict {
        #[command(flatten)]
        structure: StructureArgs,
        #[command(flatten)]
        matrices: MatrixArgs,
        /// Model file written by `train`.
        #[arg(long)]
        model: Option<String>,
        /// CSV with a `variant` column.
        #[arg(long)]
        variants: Option<String>,
        #[arg(long)]
        output: Option<String>,
    },
    /// Cross-validate model modes at one or more levels.
    Cv {
        #[command(flatten)]
        structure: StructureArgs,
        #[command(flatten)]
        matrices: MatrixArgs,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        chain: ChainArgs,
        /// Comma-separated predictors, e.g. `fusion-mkl,exp-B62,sim-bayes`.
        #[arg(long)]
        modes: Option<String>,
        /// `mutation`, `position`, `protein`, a comma list, or `all`.
        #[arg(long)]
        level: Option<String>,
        /// Label for the report (default: structure file stem).
        #[arg(long)]
        protein: Option<String>,
        /// Fraction dropped by the trimmed metrics.
        #[arg(long)]
        trim: Option<f64>,
        /// Pooled report.
        #[arg(long)]
        output: Option<String>,
        /// Per-fold metrics.
        #[arg(long)]
        folds: Option<String>,
        /// Per-variant predictions.
        #[arg(long)]
        predictions: Option<String>,
    },
    /// Score predictors trained on random experimental subsets.
    LearningCurve {
        #[command(flatten)]
        structure: StructureArgs,
        #[command(flatten)]
        matrices: MatrixArgs,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        chain: ChainArgs,
        #[arg(long)]
        modes: Option<String>,
        /// Comma-separated training-set sizes.
        #[arg(long)]
        sizes: Option<String>,
        #[arg(long)]
        repeats: Option<usize>,
        #[arg(long)]
        protein: Option<String>,
        #[arg(long)]
        output: Option<String>,
    },
    /// Validate substitution matrices and list accepted and rejected ones.
    Matrices {
        #[command(flatten)]
        matrices: MatrixArgs,
        #[arg(long)]
        output: Option<String>,
    },
    /// Dump the residue contact graph.
    Contacts {
        #[command(flatten)]
        structure: StructureArgs,
        #[arg(long)]
        output: Option<String>,
    },
    /// Kernel debugging tools.
    Kernel {
        #[command(subcommand)]
        action: KernelAction,
    },
}

#[derive(Subcommand)]
enum KernelAction {
    /// Write the normalized Gram matrix of one base kernel.
    Dump {
        #[command(flatten)]
        structure: StructureArgs,
        #[command(flatten)]
        matrices: MatrixArgs,
        /// Matrix name; `B62` selects BLOSUM62.
        #[arg(long)]
        matrix: Option<String>,
        #[arg(long)]
        variants: Option<String>,
        /// `csv` or `bin` (little-endian u64 size, then row-major f64).
        #[arg(long)]
        format: Option<String>,
        #[arg(long)]
        output: Option<String>,
    },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use ddgfusion::Error as E;
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Config(_) => 1,
                E::KernelDomain(_)
                | E::Indefinite { .. }
                | E::ChainInit
                | E::NonFiniteObjective
                | E::UndefinedCorrelation
                | E::TooFewSurvivors(_) => 3,
                _ => 2,
            };
        }
    }
    2
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut settings = Settings::from_file(cli.config.as_deref())?;
    if let Some(n) = settings.get::<usize>("jobs", cli.jobs)? {
        if n == 0 {
            return Err(config::usage("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| config::usage(format!("thread pool: {e}")))?;
    }
    settings.forget("jobs");
    let seed = settings.get_or("seed", cli.seed, 0u64)?;
    let mut ctx = commands::Ctx { settings, seed };
    match cli.command {
        Command::Calibrate {
            structure,
            data,
            chain,
            out_dir,
        } => commands::calibrate(&mut ctx, &structure, &data, &chain, out_dir),
        Command::Train {
            structure,
            matrices,
            data,
            chain,
            mode,
            out_dir,
        } => commands::train(&mut ctx, &structure, &matrices, &data, &chain, mode, out_dir),
        Command::Predict {
            structure,
            matrices,
            model,
            variants,
            output,
        } => commands::predict(&mut ctx, &structure, &matrices, model, variants, output),
        Command::Cv {
            structure,
            matrices,
            data,
            chain,
            modes,
            level,
            protein,
            trim,
            output,
            folds,
            predictions,
        } => commands::cv(
            &mut ctx,
            &structure,
            &matrices,
            &data,
            &chain,
            commands::CvArgs {
                modes,
                level,
                protein,
                trim,
                output,
                folds,
                predictions,
            },
        ),
        Command::LearningCurve {
            structure,
            matrices,
            data,
            chain,
            modes,
            sizes,
            repeats,
            protein,
            output,
        } => commands::learning_curve(
            &mut ctx,
            &structure,
            &matrices,
            &data,
            &chain,
            commands::CurveArgs {
                modes,
                sizes,
                repeats,
                protein,
                output,
            },
        ),
        Command::Matrices { matrices, output } => commands::matrices(&mut ctx, &matrices, output),
        Command::Contacts { structure, output } => commands::contacts(&mut ctx, &structure, output),
        Command::Kernel {
            action:
                KernelAction::Dump {
                    structure,
                    matrices,
                    matrix,
                    variants,
                    format,
                    output,
                },
        } => commands::kernel_dump(&mut ctx, &structure, &matrices, matrix, variants, format, output),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
