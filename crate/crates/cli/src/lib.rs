//! `ph-tool`: command-line access to persistence diagrams, diagram matching,
//! the windowed topological loss, the repair demo, the synthetic
//! monotonicity experiment and the segmentation metrics.
//!
//! Every command writes its report to the given output stream and its
//! diagnostics to the error stream. Exit codes: 0 success, 1 usage error,
//! 2 data error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use ph_core::cubical::{build_complex, compute_persistence, format_sig9, read_diagram_csv, write_diagram_csv};
use ph_core::diagram::{match_diagrams, MatchOptions};
use ph_core::filtration::{combine, FiltrationSpec, HeightFamily, HeightFunction};
use ph_core::grid::{
    binarize, distance_transform, load_grid, load_mask, save_grid, save_mask, BinaryMask, ScalarGrid,
    DEFAULT_TRUNCATION,
};
use ph_core::loss::{optimize_demo, total_loss, BaseLoss, DemoConfig, FiltrationPolicy, LossConfig};
use ph_core::metrics::{betti_error, ccq, BettiConfig};
use ph_core::synth::{
    make_synthetic_gt, monotonicity_experiment, InjectParams, MonotonicityConfig, NetworkParams,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "ph-tool", version, about = "Localized-filtration persistent homology for segmentation maps")]
pub struct Cli {
    /// Master seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Worker threads (default: available parallelism). Output does not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Report format. `diagram` defaults to csv, everything else to json.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Persistence diagram of a grid.
    Diagram(DiagramArgs),
    /// Optimal matching between two diagram CSV files.
    Match(MatchArgs),
    /// Total loss of a prediction against a ground truth.
    Loss(LossArgs),
    /// Gradient descent on a prediction map, logging loss and Betti error.
    Optimize(OptimizeArgs),
    /// Synthetic error-injection monotonicity experiment.
    Synth(SynthArgs),
    /// Betti error and correctness/completeness/quality of two masks.
    Metrics(MetricsArgs),
    /// Truncated, normalized distance transform of a mask.
    Dt(DtArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum FiltrationArg {
    Plain,
    Linear,
    Radial,
    Quadratic,
    RandomLinear,
}

#[derive(Debug, Args)]
struct DiagramArgs {
    /// Input grid (.pgm or raw + .json sidecar).
    #[arg(long = "in")]
    input: PathBuf,
    /// Homology dimensions to report, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0,1")]
    dims: Vec<usize>,
    /// Filtration spec as JSON, e.g. {"kind":"linear","w":[0.01,0.0]}. Plain if omitted.
    #[arg(long)]
    spec: Option<String>,
    /// Surround the grid with a frame below its minimum.
    #[arg(long)]
    frame: bool,
}

#[derive(Debug, Args)]
struct MatchArgs {
    /// First diagram (CSV as written by `diagram`).
    #[arg(long)]
    a: PathBuf,
    /// Second diagram.
    #[arg(long)]
    b: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    dims: Vec<usize>,
    /// Reference birth for surplus essential classes.
    #[arg(long, default_value_t = 0.5)]
    anchor: f64,
}

#[derive(Debug, Args)]
struct LossOptions {
    /// Weight of the topological term.
    #[arg(long, default_value_t = 0.01)]
    alpha: f64,
    #[arg(long, default_value_t = 64)]
    window: usize,
    /// Window stride (defaults to the window size).
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long, value_enum, default_value = "random-linear")]
    filtration: FiltrationArg,
    /// Fixed filtration spec as JSON; overrides the per-window draw of linear, radial and quadratic.
    #[arg(long)]
    spec: Option<String>,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    dims: Vec<usize>,
    /// Add the one-cell frame to every window (default).
    #[arg(long, overrides_with = "no_frame")]
    frame: bool,
    /// Compute window diagrams without the frame.
    #[arg(long = "no-frame", overrides_with = "frame")]
    no_frame: bool,
    #[arg(long, value_enum, default_value = "mse")]
    base: BaseArg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum BaseArg {
    Mse,
    CrossEntropy,
}

#[derive(Debug, Args)]
struct LossArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[command(flatten)]
    opts: LossOptions,
    /// Write the gradient grid here (raw f32 + .json sidecar, or .pgm).
    #[arg(long)]
    grad_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct OptimizeArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[command(flatten)]
    opts: LossOptions,
    #[arg(long, default_value_t = 500)]
    steps: usize,
    #[arg(long, default_value_t = 5.0)]
    lr: f64,
    /// Maps are foreground where the value is below this.
    #[arg(long, default_value_t = 0.025)]
    threshold: f64,
    /// Betti-error patch side (clipped to the grid).
    #[arg(long, default_value_t = 64)]
    patch: usize,
    /// Write the final prediction here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Side length of each synthetic ground-truth map.
    #[arg(long, default_value_t = 128)]
    size: usize,
    /// Number of ground-truth maps.
    #[arg(long, default_value_t = 2)]
    maps: usize,
    /// Errors injected per trial.
    #[arg(long, default_value_t = 30)]
    errors: usize,
    /// Trials per map.
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long, default_value_t = 64)]
    window: usize,
    /// Distance-map truncation in pixels.
    #[arg(long, default_value_t = 20.0)]
    truncation: f64,
    /// Road spacing of the synthetic networks in pixels.
    #[arg(long, default_value_t = 12.0)]
    spacing: f64,
    /// Also write the loss changes as CSV here.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Directory for the generated ground-truth masks (gt_<i>.pgm).
    #[arg(long)]
    gt_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MetricsArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Read both inputs as grids and threshold them (foreground below the value).
    #[arg(long)]
    threshold: Option<f64>,
    /// Matching distance of correctness and completeness, in pixels.
    #[arg(long, default_value_t = 5.0)]
    tolerance: f64,
    #[arg(long, default_value_t = 64)]
    patch: usize,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long, default_value_t = 10)]
    patches_per_trial: usize,
}

#[derive(Debug, Args)]
struct DtArgs {
    /// Input mask.
    #[arg(long = "in")]
    input: PathBuf,
    /// Output grid.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TRUNCATION)]
    truncation: f64,
}

/// Parses `argv` (including the program name) and runs the command.
pub fn run<I, S>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(text.as_bytes())
            } else {
                out.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let pool = match cli.threads {
        Some(0) => {
            let _ = writeln!(err, "error: --threads must be at least 1");
            return EXIT_USAGE;
        }
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build(),
        None => rayon::ThreadPoolBuilder::new().build(),
    };
    let pool = match pool {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(err, "error: cannot start worker pool: {e}");
            return EXIT_DATA;
        }
    };
    match pool.install(|| execute(&cli)) {
        Ok(report) => {
            if out.write_all(report.as_bytes()).is_err() {
                return EXIT_DATA;
            }
            EXIT_OK
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_DATA
        }
    }
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Core(#[from] ph_core::Error),
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid --spec: {0}")]
    Spec(serde_json::Error),
    #[error("{0}")]
    Invalid(String),
}

type CliResult<T> = std::result::Result<T, CliError>;

fn execute(cli: &Cli) -> CliResult<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
    let format = |default| cli.format.unwrap_or(default);
    match &cli.command {
        Command::Diagram(a) => diagram(a, format(Format::Csv)),
        Command::Match(a) => matching(a, format(Format::Json)),
        Command::Loss(a) => loss(a, format(Format::Json), &mut rng),
        Command::Optimize(a) => optimize(a, format(Format::Json), cli.seed),
        Command::Synth(a) => synth(a, format(Format::Json), &mut rng),
        Command::Metrics(a) => metrics(a, format(Format::Json), &mut rng),
        Command::Dt(a) => dt(a, format(Format::Json)),
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

fn parse_spec(text: &str) -> CliResult<FiltrationSpec> {
    serde_json::from_str(text).map_err(CliError::Spec)
}

fn diagram(a: &DiagramArgs, format: Format) -> CliResult<String> {
    let grid = load_grid(&a.input)?;
    let mut spec = match &a.spec {
        Some(s) => parse_spec(s)?,
        None => FiltrationSpec::plain(),
    };
    if a.frame {
        spec.frame = true;
    }
    let max_dim = a.dims.iter().copied().max().unwrap_or(0);
    let field = combine(&grid, &spec)?;
    let diagram = compute_persistence(&build_complex(&field), max_dim)?.restricted(&a.dims);
    Ok(match format {
        Format::Csv => write_diagram_csv(&diagram, grid.shape().ndim()),
        Format::Json => to_json(&diagram),
    })
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })
}

fn matching(a: &MatchArgs, format: Format) -> CliResult<String> {
    let d1 = read_diagram_csv(&read_text(&a.a)?, None)?;
    let d2 = read_diagram_csv(&read_text(&a.b)?, None)?;
    let m = match_diagrams(&d1, &d2, &MatchOptions::new(a.dims.clone()).with_anchor(a.anchor));
    Ok(match format {
        Format::Json => to_json(&m),
        Format::Csv => {
            let mut s = String::from("a,b,cost\n");
            for (&(i, j), c) in m.pairs.iter().zip(&m.pair_costs) {
                s.push_str(&format!("{i},{j},{}\n", format_sig9(*c)));
            }
            for (&i, c) in m.unmatched1.iter().zip(&m.unmatched1_costs) {
                s.push_str(&format!("{i},,{}\n", format_sig9(*c)));
            }
            for (&j, c) in m.unmatched2.iter().zip(&m.unmatched2_costs) {
                s.push_str(&format!(",{j},{}\n", format_sig9(*c)));
            }
            s
        }
    })
}

fn loss_config(o: &LossOptions) -> CliResult<LossConfig> {
    let frame = !o.no_frame;
    let family = match o.filtration {
        FiltrationArg::Plain => None,
        FiltrationArg::Linear | FiltrationArg::RandomLinear => Some(HeightFamily::Linear),
        FiltrationArg::Radial => Some(HeightFamily::Radial),
        FiltrationArg::Quadratic => Some(HeightFamily::Quadratic),
    };
    let filtration = match (&o.spec, family) {
        (Some(_), _) if matches!(o.filtration, FiltrationArg::Plain | FiltrationArg::RandomLinear) => {
            return Err(CliError::Invalid(
                "--spec needs --filtration linear, radial or quadratic".into(),
            ));
        }
        (Some(text), Some(family)) => {
            let mut spec = parse_spec(text)?;
            let kind_matches = matches!(
                (&spec.height, family),
                (HeightFunction::Linear { .. }, HeightFamily::Linear)
                    | (HeightFunction::Radial { .. }, HeightFamily::Radial)
                    | (HeightFunction::Quadratic { .. }, HeightFamily::Quadratic)
            );
            if !kind_matches {
                return Err(CliError::Invalid("--spec kind differs from --filtration".into()));
            }
            spec.frame = frame;
            FiltrationPolicy::Fixed { spec }
        }
        (_, None) => FiltrationPolicy::plain(frame),
        (None, Some(family)) => FiltrationPolicy::random(family, frame),
    };
    let cfg = LossConfig {
        alpha: o.alpha,
        window: o.window,
        stride: o.stride.unwrap_or(o.window),
        dims: o.dims.clone(),
        filtration,
        base_loss: match o.base {
            BaseArg::Mse => BaseLoss::Mse,
            BaseArg::CrossEntropy => BaseLoss::CrossEntropy,
        },
    };
    cfg.validate()?;
    Ok(cfg)
}

fn loss(a: &LossArgs, format: Format, rng: &mut ChaCha8Rng) -> CliResult<String> {
    let cfg = loss_config(&a.opts)?;
    let pred = load_grid(&a.pred)?;
    let gt = load_grid(&a.gt)?;
    let report = total_loss(&pred, &gt, &cfg, rng)?;
    if let Some(path) = &a.grad_out {
        save_grid(&report.gradient, path)?;
    }
    Ok(match format {
        Format::Json => to_json(&report),
        Format::Csv => {
            let mut s = String::from("origin,cost,pred_points,gt_points\n");
            for w in &report.windows {
                let origin: Vec<String> = w.origin.iter().map(|c| c.to_string()).collect();
                s.push_str(&format!(
                    "{},{},{},{}\n",
                    origin.join(" "),
                    format_sig9(w.cost),
                    w.pred_points,
                    w.gt_points
                ));
            }
            s.push_str(&format!("total,{},,\n", format_sig9(report.total)));
            s
        }
    })
}

fn optimize(a: &OptimizeArgs, format: Format, seed: u64) -> CliResult<String> {
    let cfg = loss_config(&a.opts)?;
    let pred = load_grid(&a.pred)?;
    let gt = load_grid(&a.gt)?;
    let demo = DemoConfig {
        steps: a.steps,
        lr: a.lr,
        threshold: a.threshold,
        betti: BettiConfig {
            patch: a.patch,
            ..BettiConfig::default()
        },
        seed,
    };
    let result = optimize_demo(&pred, &gt, &cfg, &demo)?;
    if let Some(path) = &a.out {
        save_grid(&result.pred, path)?;
    }
    Ok(match format {
        Format::Json => to_json(&result),
        Format::Csv => {
            let mut s = String::from("step,total,topo,betti_error\n");
            for st in &result.trajectory {
                s.push_str(&format!(
                    "{},{},{},{}\n",
                    st.step,
                    format_sig9(st.total),
                    format_sig9(st.topo),
                    format_sig9(st.betti_error)
                ));
            }
            s
        }
    })
}

fn synth(a: &SynthArgs, format: Format, rng: &mut ChaCha8Rng) -> CliResult<String> {
    let params = NetworkParams {
        spacing: a.spacing,
        ..NetworkParams::default()
    };
    let masks: Vec<BinaryMask> = (0..a.maps)
        .map(|_| make_synthetic_gt(a.size, &params, rng))
        .collect::<ph_core::Result<_>>()?;
    if let Some(dir) = &a.gt_out {
        fs::create_dir_all(dir).map_err(|source| CliError::Write {
            path: dir.clone(),
            source,
        })?;
        for (i, m) in masks.iter().enumerate() {
            save_mask(m, dir.join(format!("gt_{i}.pgm")))?;
        }
    }
    let cfg = MonotonicityConfig {
        n_errors: a.errors,
        n_trials: a.trials,
        loss: LossConfig::default().with_window(a.window),
        inject: InjectParams {
            truncation: a.truncation,
            ..InjectParams::default()
        },
        ..MonotonicityConfig::default()
    };
    let report = monotonicity_experiment(&masks, &cfg, rng)?;
    let csv = report.deltas_csv();
    if let Some(path) = &a.csv {
        fs::write(path, &csv).map_err(|source| CliError::Write {
            path: path.clone(),
            source,
        })?;
    }
    Ok(match format {
        Format::Json => to_json(&report),
        Format::Csv => csv,
    })
}

#[derive(Serialize)]
struct MetricsReport {
    correctness: f64,
    completeness: f64,
    quality: f64,
    betti_error: f64,
}

fn read_mask(path: &Path, threshold: Option<f64>) -> CliResult<BinaryMask> {
    Ok(match threshold {
        Some(t) => binarize(&load_grid(path)?, t),
        None => load_mask(path)?,
    })
}

fn metrics(a: &MetricsArgs, format: Format, rng: &mut ChaCha8Rng) -> CliResult<String> {
    let pred = read_mask(&a.pred, a.threshold)?;
    let gt = read_mask(&a.gt, a.threshold)?;
    let c = ccq(&pred, &gt, a.tolerance)?;
    let betti = BettiConfig {
        patch: a.patch,
        trials: a.trials,
        patches_per_trial: a.patches_per_trial,
    };
    let report = MetricsReport {
        correctness: c.correctness,
        completeness: c.completeness,
        quality: c.quality,
        betti_error: betti_error(&pred, &gt, &betti, rng)?,
    };
    Ok(match format {
        Format::Json => to_json(&report),
        Format::Csv => format!(
            "correctness,completeness,quality,betti_error\n{},{},{},{}\n",
            format_sig9(report.correctness),
            format_sig9(report.completeness),
            format_sig9(report.quality),
            format_sig9(report.betti_error)
        ),
    })
}

#[derive(Serialize)]
struct DtReport {
    shape: Vec<usize>,
    truncation: f64,
    foreground: usize,
    max: f64,
}

fn dt(a: &DtArgs, format: Format) -> CliResult<String> {
    let mask = load_mask(&a.input)?;
    let grid: ScalarGrid = distance_transform(&mask, a.truncation)?;
    save_grid(&grid, &a.out)?;
    let report = DtReport {
        shape: grid.dims().to_vec(),
        truncation: a.truncation,
        foreground: mask.count(),
        max: grid.max(),
    };
    Ok(match format {
        Format::Json => to_json(&report),
        Format::Csv => format!(
            "shape,truncation,foreground,max\n{},{},{},{}\n",
            report.shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x"),
            format_sig9(report.truncation),
            report.foreground,
            format_sig9(report.max)
        ),
    })
}
