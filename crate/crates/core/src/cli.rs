//! `factvae` command-line frontend.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or model error,
//! 3 numerical failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::data::{generate_bars, join_quadrants, read_dataset, write_dataset, BarsConfig, GroupedDataset};
use crate::error::Error;
use crate::eval::{heldout_ll, reconstruct_dataset, sparsity_matrix, write_pgm, ReconstructMode};
use crate::math::SeededRng;
use crate::model::{read_model, resolve_groups, write_model};
use crate::trainer::{fit, TrainConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "factvae", about = "Factorized VAE for grouped data with missing groups")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic horizontal-bars dataset.
    Genbars(GenbarsArgs),
    /// Train a model on a dataset file.
    Train(TrainArgs),
    /// Reconstruct all groups of every sample from a subset of groups.
    Reconstruct(ReconstructArgs),
    /// Export the group × latent sparsity matrix as CSV.
    Sparsity(SparsityArgs),
    /// Heldout log-likelihood (importance weighted) of a dataset.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
struct GenbarsArgs {
    #[arg(long, default_value_t = 2000)]
    n: usize,
    /// Image side length (even, >= 4).
    #[arg(long, default_value_t = 8)]
    size: usize,
    #[arg(long, default_value_t = 0.25)]
    p_row: f64,
    /// Standard deviation of the additive pixel noise.
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    /// Probability of withholding each quadrant.
    #[arg(long, default_value_t = 0.25)]
    p_miss: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 8)]
    latent: usize,
    #[arg(long, default_value_t = 32)]
    hidden: usize,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Adam learning rate for the dense parameters.
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// Gradient step size on the sparsity matrices.
    #[arg(long, default_value_t = 1e-4)]
    eta: f64,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.5)]
    keep_prob: f64,
    #[arg(long, default_value_t = 1)]
    mc_samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Write the per-epoch training history as CSV.
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Mean,
    Sample,
}

#[derive(Debug, Args)]
struct ReconstructArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated group names to condition on.
    #[arg(long, value_delimiter = ',', required = true)]
    observe: Vec<String>,
    #[arg(long, value_enum, default_value_t = Mode::Mean)]
    mode: Mode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also write reconstructed images as PGM (four-quadrant datasets only).
    #[arg(long)]
    pgm_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    pgm_count: usize,
}

#[derive(Debug, Args)]
struct SparsityArgs {
    #[arg(long)]
    model: PathBuf,
    /// Output CSV; printed to standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Importance samples per record.
    #[arg(long, default_value_t = 64)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-record CSV `index,heldout_ll`.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

/// Parses `argv` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                EXIT_NUMERICAL
            } else {
                EXIT_DATA
            }
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Genbars(a) => genbars(a),
        Command::Train(a) => train(a),
        Command::Reconstruct(a) => reconstruct(a),
        Command::Sparsity(a) => sparsity(a),
        Command::Eval(a) => eval(a),
    }
}

fn usage(e: Error) -> Failure {
    Failure::Usage(e.to_string())
}

fn genbars(a: GenbarsArgs) -> Result<(), Failure> {
    let cfg = BarsConfig { n: a.n, size: a.size, p_row: a.p_row, noise: a.noise, p_miss: a.p_miss, seed: a.seed };
    cfg.validate().map_err(usage)?;
    let ds = generate_bars(&cfg)?;
    write_dataset(&ds, &a.out)?;
    Ok(())
}

fn train(a: TrainArgs) -> Result<(), Failure> {
    let cfg = TrainConfig {
        lambda: a.lambda,
        lr: a.lr,
        eta: a.eta,
        epochs: a.epochs,
        batch_size: a.batch_size,
        keep_prob: a.keep_prob,
        mc_samples: a.mc_samples,
        seed: a.seed,
    };
    cfg.validate().map_err(usage)?;
    if a.latent == 0 || a.hidden == 0 {
        return Err(Failure::Usage("--latent and --hidden must be positive".into()));
    }
    let ds = read_dataset(&a.data)?;
    let (model, history) = fit(&ds, a.latent, a.hidden, &cfg)?;
    write_model(&model, &a.out)?;
    if let Some(path) = a.history {
        history.write_csv(&path)?;
    }
    Ok(())
}

fn reconstruct(a: ReconstructArgs) -> Result<(), Failure> {
    let model = read_model(&a.model)?;
    let ds = read_dataset(&a.data)?;
    if ds.specs() != model.groups() {
        return Err(Error::InvalidArgument(format!(
            "{} and {} describe different groups",
            a.data.display(),
            a.model.display()
        ))
        .into());
    }
    let names: Vec<&str> = a.observe.iter().map(String::as_str).collect();
    let observe = resolve_groups(model.groups(), &names).map_err(usage)?;
    // records missing an observed group cannot be conditioned on it
    let usable: Vec<_> = ds.samples().iter().filter(|s| observe.iter().all(|&g| s.is_present(g))).cloned().collect();
    let subset = GroupedDataset::new(ds.specs().to_vec(), usable)?;
    let mode = match a.mode {
        Mode::Mean => ReconstructMode::Mean,
        Mode::Sample => ReconstructMode::Sample,
    };
    let mut rng = SeededRng::new(a.seed);
    let out = reconstruct_dataset(&model, &subset, &observe, mode, &mut rng)?;
    write_dataset(&out, &a.out)?;
    if let Some(dir) = a.pgm_dir {
        write_pgms(&out, &dir, a.pgm_count)?;
    }
    Ok(())
}

fn write_pgms(ds: &GroupedDataset, dir: &Path, count: usize) -> Result<(), Failure> {
    let specs = ds.specs();
    let side = (specs[0].dim as f64).sqrt() as usize;
    if specs.len() != 4 || specs.iter().any(|s| s.dim != side * side) {
        return Err(Failure::Usage("--pgm-dir needs four square quadrant groups".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, s) in ds.samples().iter().take(count).enumerate() {
        let quads: Vec<Vec<f64>> = (0..4).map(|g| s.storage(g).to_vec()).collect();
        let image = join_quadrants(&quads, 2 * side);
        write_pgm(&image, 2 * side, &dir.join(format!("recon_{i:04}.pgm")))?;
    }
    Ok(())
}

fn sparsity(a: SparsityArgs) -> Result<(), Failure> {
    let model = read_model(&a.model)?;
    let csv = sparsity_matrix(&model).to_csv();
    match a.out {
        Some(path) => std::fs::write(&path, csv).map_err(|e| Error::io(&path, e))?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn eval(a: EvalArgs) -> Result<(), Failure> {
    if a.samples == 0 {
        return Err(Failure::Usage("--samples must be at least 1".into()));
    }
    let model = read_model(&a.model)?;
    let ds = read_dataset(&a.data)?;
    if ds.specs() != model.groups() {
        return Err(Error::InvalidArgument("dataset and model describe different groups".into()).into());
    }
    let mut rng = SeededRng::new(a.seed);
    let mut csv = String::from("index,heldout_ll\n");
    let mut total = 0.0;
    for (i, s) in ds.samples().iter().enumerate() {
        let ll = heldout_ll(&model, s, a.samples, &mut rng)?;
        total += ll;
        csv.push_str(&format!("{i},{ll:.9e}\n"));
    }
    let mean = if ds.is_empty() { 0.0 } else { total / ds.len() as f64 };
    println!("records={} mean_heldout_ll={mean:.9e}", ds.len());
    if let Some(path) = a.out {
        std::fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
