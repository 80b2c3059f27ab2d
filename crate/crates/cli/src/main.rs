use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use featlink_core::data::{generate_synthetic, write_feature_file, Split, SyntheticSpec};
use featlink_core::digital::{decode_entropy_model, load_digital};
use featlink_core::experiment::{parse_config, plot_data, run_experiment, PlotAxis, ResultTable, RunOptions};
use featlink_core::jscc::{load_jscc, MANIFEST_FILE};
use featlink_core::nn::{decode_checkpoint, MlpModel, CHECKPOINT_MAGIC};

const CACHE_ENV: &str = "FEATLINK_CACHE_DIR";

#[derive(Parser)]
#[command(name = "featlink", version, about = "Feature transmission experiments over AWGN channels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a sweep described by a config file and write the result CSV.
    ///
    /// Trained models are cached under $FEATLINK_CACHE_DIR when it is set.
    Run(RunArgs),
    /// Write a synthetic feature file.
    GenData(GenDataArgs),
    /// Describe a checkpoint file (.flnn, .flem) or checkpoint directory.
    InspectCheckpoint { path: PathBuf },
    /// Turn a result CSV into gnuplot data blocks, one per series.
    PlotData {
        csv: PathBuf,
        /// test_snr, bandwidth or mean_bits
        #[arg(long, default_value = "test_snr")]
        x: String,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed (and the synthetic dataset seed unless pinned).
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV; defaults to the config's `output`, else stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 50)]
    identities: usize,
    #[arg(long, default_value_t = 20)]
    samples_per_identity: usize,
    #[arg(long, default_value_t = 64)]
    dim: usize,
    #[arg(long, default_value_t = 1.0)]
    center_scale: f64,
    #[arg(long, default_value_t = 0.25)]
    sigma: f64,
    #[arg(long, default_value_t = 0.6)]
    train_fraction: f64,
    #[arg(long, default_value_t = 1)]
    queries_per_identity: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Run(args) => run(args),
        Command::GenData(args) => gen_data(args),
        Command::InspectCheckpoint { path } => inspect(&path),
        Command::PlotData { csv, x } => {
            let axis = PlotAxis::parse(&x)
                .with_context(|| format!("--x must be test_snr, bandwidth or mean_bits, got {x:?}"))?;
            let text = fs::read_to_string(&csv).with_context(|| format!("reading {}", csv.display()))?;
            print!("{}", plot_data(&ResultTable::from_csv(&text)?, axis));
            Ok(())
        }
    }
}

fn run(args: RunArgs) -> Result<()> {
    let text = fs::read_to_string(&args.config).with_context(|| format!("reading {}", args.config.display()))?;
    let mut config = parse_config(&text)?;
    if let Some(seed) = args.seed {
        config = config.with_seed(seed);
    }
    if args.jobs == Some(0) {
        bail!("--jobs must be at least 1");
    }
    let opts = RunOptions { jobs: args.jobs, cache_dir: std::env::var_os(CACHE_ENV).map(PathBuf::from) };
    let report = run_experiment(&config, &opts)?;
    let csv = report.table.to_csv();
    match args.out.or(config.output) {
        Some(path) => {
            fs::write(&path, &csv).with_context(|| format!("writing {}", path.display()))?;
            eprintln!(
                "wrote {} rows to {} ({} errors; {} models trained, {} loaded from cache)",
                report.table.rows.len(),
                path.display(),
                report.table.error_count(),
                report.trained,
                report.loaded
            );
        }
        None => print!("{csv}"),
    }
    for row in report.table.rows.iter().filter(|r| !r.is_ok()) {
        log::warn!("error row: {}", row.error.as_deref().unwrap_or(""));
    }
    Ok(())
}

fn gen_data(a: GenDataArgs) -> Result<()> {
    let spec = SyntheticSpec {
        num_identities: a.identities,
        samples_per_identity: a.samples_per_identity,
        feature_dim: a.dim,
        cluster_center_scale: a.center_scale,
        within_class_sigma: a.sigma,
        seed: a.seed,
        train_fraction: a.train_fraction,
        queries_per_identity: a.queries_per_identity,
    };
    let ds = generate_synthetic(&spec)?;
    write_feature_file(&ds, &a.out)?;
    let count = |s| ds.indices(s).len();
    println!(
        "{}: {} vectors of dim {} (train {}, query {}, gallery {}), sha256 {}",
        a.out.display(),
        ds.len(),
        ds.dim(),
        count(Split::Train),
        count(Split::Query),
        count(Split::Gallery),
        ds.as_stored().content_hash()
    );
    Ok(())
}

fn inspect(path: &Path) -> Result<()> {
    if path.is_dir() {
        return inspect_dir(path);
    }
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    if bytes.starts_with(CHECKPOINT_MAGIC) {
        let (model, _) = decode_checkpoint(&bytes)?;
        print_mlp("network", &model);
    } else if bytes.starts_with(b"FLEM") {
        let m = decode_entropy_model(&bytes)?;
        println!("entropy model: {} dims, support [-{}, {}]", m.dims(), m.support(), m.support());
    } else {
        bail!("{} is not an FLNN or FLEM file", path.display());
    }
    Ok(())
}

fn inspect_dir(dir: &Path) -> Result<()> {
    if dir.join("entropy.flem").exists() {
        let m = load_digital(dir)?;
        println!("digital model: latent dim {}, lambda {}", m.latent_dim(), m.lambda);
        print_mlp("encoder", &m.encoder);
        print_mlp("head", &m.head);
        println!("entropy: {} dims, support [-{}, {}]", m.entropy.dims(), m.entropy.support(), m.entropy.support());
    } else if dir.join(MANIFEST_FILE).exists() {
        let m = load_jscc(dir)?;
        println!(
            "jscc {} model: feature dim {}, bandwidth {}, train snr {} dB, power {}",
            m.variant,
            m.feature_dim(),
            m.bandwidth(),
            m.train_snr,
            m.power
        );
        print_mlp("extractor", &m.extractor);
        print_mlp("encoder", &m.encoder);
        print_mlp("decoder", &m.decoder);
        print_mlp("head", &m.head);
    } else {
        bail!("{} is not a checkpoint directory", dir.display());
    }
    Ok(())
}

fn print_mlp(name: &str, m: &MlpModel) {
    if m.is_identity() {
        println!("{name}: identity");
        return;
    }
    let layers: Vec<String> =
        m.layers().iter().map(|l| format!("{}→{} {}", l.in_dim(), l.out_dim(), l.activation.name())).collect();
    println!("{name}: {} ({} params)", layers.join(", "), m.param_count());
}
