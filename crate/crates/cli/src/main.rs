use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use isokit::io::{load_labels, load_matrix, save_labels, save_matrix, MatrixFormat};
use isokit::linalg::EmbeddingMatrix;
use isokit::metrics::explained_variance;
use isokit::normalize::{batch_normalize, isobn_infer, isobn_train, whiten, IsoBnConfig, MomentCache};
use isokit::probe::{run_probe, TrainConfig};
use isokit::report::{analyze, to_canonical_json, AnalyzeOptions, Analysis, REPORT_SCHEMA_VERSION};
use isokit::synth::{generate, SyntheticSpec};
use isokit::IsoError;

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "isokit", version, about = "Isotropy diagnostics and normalization for embedding matrices")]
struct Cli {
    /// Override the matrix format instead of inferring it from file extensions.
    #[arg(long, global = true)]
    format: Option<FormatArg>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    #[value(name = "raw-f64", alias = "raw")]
    RawF64,
}

#[derive(Subcommand)]
enum Command {
    /// Report std distribution, correlation clusters and explained variance.
    Analyze(AnalyzeArgs),
    /// Apply whitening, batch normalization or IsoBN.
    Transform(TransformArgs),
    /// Train a softmax probe and record weight drift and logit variance shares.
    Probe(ProbeArgs),
    /// Generate a synthetic embedding matrix from a JSON spec.
    Gen(GenArgs),
}

#[derive(Args)]
struct AnalyzeArgs {
    input: PathBuf,
    /// Number of EV values to report [default: min(10, d)].
    #[arg(long)]
    ev_k: Option<usize>,
    #[arg(long, default_value_t = isokit::metrics::DEFAULT_CLUSTER_TAU)]
    cluster_tau: f64,
    #[arg(long, default_value_t = isokit::metrics::DEFAULT_BUCKETS)]
    buckets: usize,
    /// Also report spectra after batch normalization and IsoBN.
    #[arg(long)]
    compare_transforms: bool,
    #[command(flatten)]
    isobn: IsoBnArgs,
    #[arg(long)]
    out: PathBuf,
    /// Directory for CSV plot data.
    #[arg(long)]
    plots: Option<PathBuf>,
}

#[derive(Args)]
struct IsoBnArgs {
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    #[arg(long, default_value_t = 0.95)]
    alpha: f64,
    /// Renormalize with the square root of the variance ratio so total
    /// variance is preserved exactly.
    #[arg(long)]
    exact_renorm: bool,
}

impl IsoBnArgs {
    fn config(&self) -> Result<IsoBnConfig, IsoError> {
        let config = IsoBnConfig {
            momentum: self.alpha,
            strength: self.beta,
            stabilizer: self.eps,
            exact_variance_renorm: self.exact_renorm,
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Whiten,
    Bn,
    Isobn,
}

#[derive(Args)]
struct TransformArgs {
    input: PathBuf,
    #[arg(long)]
    method: Method,
    #[command(flatten)]
    isobn: IsoBnArgs,
    /// Moment cache file; read if it exists, written back after training.
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long, conflicts_with = "infer")]
    train: bool,
    /// Use the cached statistics without updating them.
    #[arg(long)]
    infer: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ProbeArgs {
    embeddings: PathBuf,
    labels: PathBuf,
    #[arg(long, default_value_t = 500)]
    steps: usize,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    record_every: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    labels_out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            emit_error("usage", e.render().to_string().trim(), EXIT_USAGE);
            return ExitCode::from(EXIT_USAGE);
        }
    };
    if let Err(e) = configure_threads() {
        emit_error("usage", &e, EXIT_USAGE);
        return ExitCode::from(EXIT_USAGE);
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = if e.is_numerical() { EXIT_NUMERICAL } else { EXIT_DATA };
            emit_error(e.kind(), &e.to_string(), code);
            ExitCode::from(code)
        }
    }
}

fn emit_error(kind: &str, message: &str, code: u8) {
    eprintln!("{}", json!({ "error": kind, "message": message, "exit_code": code }));
}

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("ISOKIT_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| format!("ISOKIT_THREADS must be a positive integer, got {raw:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn run(cli: &Cli) -> Result<(), IsoError> {
    match &cli.command {
        Command::Analyze(args) => cmd_analyze(cli, args),
        Command::Transform(args) => cmd_transform(cli, args),
        Command::Probe(args) => cmd_probe(cli, args),
        Command::Gen(args) => cmd_gen(cli, args),
    }
}

fn format_for(cli: &Cli, path: &Path) -> MatrixFormat {
    match cli.format {
        Some(FormatArg::Csv) => MatrixFormat::Csv,
        Some(FormatArg::RawF64) => MatrixFormat::RawF64,
        None => MatrixFormat::from_path(path),
    }
}

fn load(cli: &Cli, path: &Path) -> Result<EmbeddingMatrix, IsoError> {
    load_matrix(path, format_for(cli, path))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), IsoError> {
    fs::write(path, contents).map_err(|source| IsoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn cmd_analyze(cli: &Cli, args: &AnalyzeArgs) -> Result<(), IsoError> {
    let h = load(cli, &args.input)?;
    let options = AnalyzeOptions {
        ev_k: args.ev_k.unwrap_or(h.dim().min(AnalyzeOptions::default().ev_k)),
        cluster_tau: args.cluster_tau,
        buckets: args.buckets,
        compare: if args.compare_transforms { Some(args.isobn.config()?) } else { None },
    };
    let analysis = analyze(&h, &args.input.display().to_string(), &options)?;
    write_file(&args.out, to_canonical_json(&analysis.report) + "\n")?;
    if let Some(dir) = &args.plots {
        write_plots(dir, &h, &analysis, &options)?;
    }
    Ok(())
}

fn write_plots(dir: &Path, h: &EmbeddingMatrix, analysis: &Analysis, options: &AnalyzeOptions) -> Result<(), IsoError> {
    use isokit::io::format_f64;
    fs::create_dir_all(dir).map_err(|source| IsoError::Io {
        path: dir.to_path_buf(),
        source,
    })?;

    let mut hist = String::from("lower_edge,count\n");
    for (edge, count) in &analysis.report.std_distribution.histogram {
        hist.push_str(&format!("{},{count}\n", format_f64(*edge)));
    }
    write_file(&dir.join("std_histogram.csv"), hist)?;

    // the full curve, not just the first ev_k values
    let d = h.dim();
    let mut columns = vec![("raw", explained_variance(h, d)?.values)];
    if let Some(config) = &options.compare {
        columns.push(("bn", explained_variance(&batch_normalize(h), d)?.values));
        let mut cache = MomentCache::new(d);
        columns.push(("isobn", explained_variance(&isobn_train(h, &mut cache, config)?, d)?.values));
    }
    let mut ev = String::from("k");
    for (name, _) in &columns {
        ev.push(',');
        ev.push_str(name);
    }
    ev.push('\n');
    for k in 0..d {
        ev.push_str(&(k + 1).to_string());
        for (_, values) in &columns {
            ev.push(',');
            ev.push_str(&format_f64(values[k]));
        }
        ev.push('\n');
    }
    write_file(&dir.join("ev_curve.csv"), ev)?;

    let m = &analysis.clustering.abs_corr_reordered;
    let mut corr = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format_f64(m[(i, j)])).collect();
        corr.push_str(&row.join(","));
        corr.push('\n');
    }
    write_file(&dir.join("abs_corr_reordered.csv"), corr)?;
    let perm: Vec<String> = analysis.clustering.permutation.iter().map(|p| p.to_string()).collect();
    write_file(&dir.join("permutation.csv"), format!("original_index\n{}\n", perm.join("\n")))
}

fn cmd_transform(cli: &Cli, args: &TransformArgs) -> Result<(), IsoError> {
    let h = load(cli, &args.input)?;
    let out = match args.method {
        Method::Whiten => whiten(&h)?,
        Method::Bn => batch_normalize(&h),
        Method::Isobn => {
            let config = args.isobn.config()?;
            if args.infer {
                let path = args.cache.as_ref().ok_or_else(|| {
                    IsoError::InvalidArgument("--infer needs --cache with trained statistics".into())
                })?;
                isobn_infer(&h, &MomentCache::load(path)?, &config)?
            } else {
                let mut cache = match &args.cache {
                    Some(path) if path.exists() => MomentCache::load(path)?,
                    _ => MomentCache::new(h.dim()),
                };
                let out = isobn_train(&h, &mut cache, &config)?;
                if let Some(path) = &args.cache {
                    cache.save(path)?;
                }
                out
            }
        }
    };
    save_matrix(&out, &args.out, format_for(cli, &args.out))
}

fn cmd_probe(cli: &Cli, args: &ProbeArgs) -> Result<(), IsoError> {
    let h = load(cli, &args.embeddings)?;
    let labels = load_labels(&args.labels)?;
    let config = TrainConfig {
        steps: args.steps,
        lr: args.lr,
        seed: args.seed,
        record_every: args.record_every,
        n_classes: None,
    };
    let (_, result) = run_probe(&h, &labels, &config)?;
    let mut value = serde_json::to_value(&result).expect("probe results serialize");
    if let Value::Object(map) = &mut value {
        map.insert("schema_version".into(), json!(REPORT_SCHEMA_VERSION));
    }
    write_file(&args.out, to_canonical_json(&value) + "\n")
}

fn cmd_gen(cli: &Cli, args: &GenArgs) -> Result<(), IsoError> {
    let text = fs::read_to_string(&args.spec).map_err(|source| IsoError::Io {
        path: args.spec.clone(),
        source,
    })?;
    let spec: SyntheticSpec = serde_json::from_str(&text).map_err(|e| IsoError::Malformed {
        location: args.spec.display().to_string(),
        reason: e.to_string(),
    })?;
    let (h, labels) = generate(&spec)?;
    save_matrix(&h, &args.out, format_for(cli, &args.out))?;
    match (&args.labels_out, labels) {
        (Some(path), Some(labels)) => save_labels(&labels, path),
        (Some(_), None) => Err(IsoError::InvalidArgument(
            "--labels-out given but the spec has no label_axis".into(),
        )),
        _ => Ok(()),
    }
}
