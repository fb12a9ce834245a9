use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use capbound::convop::DEFAULT_MATERIALIZE_CAP;
use capbound::io::{archdoc_to_string, dataset_to_string, read_archdoc, read_dataset, write_jsonl, Checkpoint, DType};
use capbound::lipschitz::PowerOptions;
use capbound::pipeline::{
    analyze, project_net, spectra, AnalyzeOptions, LayerProjection, MarginChoice, ReferenceLogits, Scheme,
};
use capbound::train::sweep::{run_sweep_with, SweepConfig};
use capbound::train::{LayerConstraint, NetArch, Task, TrainStatus};
use clap::{Args, Parser, Subcommand};

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Lib(#[from] capbound::Error),
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Lib(capbound::Error::Numerical(_) | capbound::Error::Resource(_)) => 2,
            _ => 1,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser)]
#[command(name = "capbound", version, about = "Capacity bounds and constraint projections for small conv nets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Per-layer statistics, capacity terms and bound comparison for a checkpoint.
    Analyze(AnalyzeArgs),
    /// Projects constrained layers onto their feasible sets and writes a new checkpoint.
    Project(ProjectArgs),
    /// Trains a grid of constrained models on a synthetic task.
    TrainDemo(TrainDemoArgs),
    /// Singular-value summaries per layer.
    Spectra(SpectraArgs),
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Architecture document (TOML).
    #[arg(long)]
    arch: PathBuf,
}

impl ModelArgs {
    fn load(&self) -> Result<(Checkpoint, NetArch)> {
        let ckpt = Checkpoint::read(&self.checkpoint).map_err(|e| at(&self.checkpoint, e))?;
        let arch = read_archdoc(&self.arch).map_err(|e| at(&self.arch, e))?;
        Ok((ckpt, arch))
    }
}

#[derive(Args)]
struct PowerArgs {
    /// Power-iteration seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Power-iteration relative tolerance.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 1000)]
    max_iters: usize,
}

impl PowerArgs {
    fn options(&self) -> Result<PowerOptions> {
        if !(self.tol > 0.0) || self.max_iters == 0 {
            return Err(CliError::Usage("--tol must be > 0 and --max-iters >= 1".into()));
        }
        Ok(PowerOptions {
            tol: self.tol,
            max_iters: self.max_iters,
            seed: self.seed,
        })
    }
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Dataset document (JSON).
    #[arg(long)]
    data: PathBuf,
    /// Fixed margin.
    #[arg(long, conflicts_with = "equal_ramp_to", required_unless_present = "equal_ramp_to")]
    gamma: Option<f64>,
    /// Reference logits (JSON with logits, labels, gamma); the margin is chosen for equal ramp loss.
    #[arg(long)]
    equal_ramp_to: Option<PathBuf>,
    #[arg(long, default_value_t = 0.01)]
    delta: f64,
    /// Cover resolution for the whole-network covering bound.
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    #[command(flatten)]
    power: PowerArgs,
    /// Print the report as JSON.
    #[arg(long)]
    json: bool,
    /// Also write this model's logits, labels and chosen margin, usable as --equal-ramp-to.
    #[arg(long)]
    emit_logits: Option<PathBuf>,
}

#[derive(Args)]
struct ProjectArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// alternating, dykstra or radial.
    #[arg(long, default_value = "alternating")]
    scheme: String,
    #[arg(long, default_value_t = 15)]
    rounds: usize,
    /// Lipschitz bound for every layer, replacing the architecture's.
    #[arg(long)]
    lipschitz: Option<f64>,
    /// Distance bound for every layer, replacing the architecture's.
    #[arg(long)]
    distance: Option<f64>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct TrainDemoArgs {
    /// blobs or rings (default blobs).
    #[arg(long)]
    task: Option<String>,
    /// Sweep configuration (JSON); flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Lipschitz bounds as fractions of the unconstrained median ("inf" disables).
    #[arg(long, value_delimiter = ',')]
    lipschitz_fractions: Option<Vec<f64>>,
    /// Distance bounds as fractions of the unconstrained median ("inf" disables).
    #[arg(long, value_delimiter = ',')]
    distance_fractions: Option<Vec<f64>>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Optimizer steps between projection cycles.
    #[arg(long)]
    cadence: Option<usize>,
    /// Minibatch order seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_train: Option<usize>,
    #[arg(long)]
    n_test: Option<usize>,
    /// Channel width of the demo network.
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SpectraArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Use a dense SVD for layers without an exact FFT spectrum.
    #[arg(long)]
    dense: bool,
    /// Size cap for dense materialization.
    #[arg(long, env = "CAPBOUND_MATERIALIZE_CAP", default_value_t = DEFAULT_MATERIALIZE_CAP)]
    materialize_cap: usize,
    #[arg(long)]
    json: bool,
}

fn at(path: &Path, e: capbound::Error) -> CliError {
    match e {
        capbound::Error::Format(m) => capbound::Error::Format(format!("{}: {m}", path.display())).into(),
        capbound::Error::Io(source) => CliError::Io {
            path: path.to_path_buf(),
            source,
        },
        e => e.into(),
    }
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn to_json<T: serde::Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v).map_err(|source| CliError::Json {
        path: PathBuf::from("<stdout>"),
        source,
    })
}

fn cmd_analyze(a: &AnalyzeArgs) -> Result<()> {
    let (ckpt, arch) = a.model.load()?;
    let net = ckpt.to_net(&arch)?;
    let data = read_dataset(&a.data).map_err(|e| at(&a.data, e))?;
    let margin = match (&a.gamma, &a.equal_ramp_to) {
        (Some(g), _) => MarginChoice::Fixed(*g),
        (None, Some(path)) => {
            let text = fs::read_to_string(path).map_err(|source| CliError::Io {
                path: path.clone(),
                source,
            })?;
            let r: ReferenceLogits = serde_json::from_str(&text).map_err(|source| CliError::Json {
                path: path.clone(),
                source,
            })?;
            MarginChoice::EqualRamp(r)
        }
        (None, None) => return Err(CliError::Usage("either --gamma or --equal-ramp-to is required".into())),
    };
    let opts = AnalyzeOptions {
        margin,
        delta: a.delta,
        epsilon: a.epsilon,
        power: a.power.options()?,
    };
    let report = analyze(&net, &data, &opts)?;
    if let Some(path) = &a.emit_logits {
        let r = ReferenceLogits {
            logits: net.forward_batch(&data.batch)?,
            labels: data.labels.clone(),
            gamma: report.summary.margin,
        };
        write_file(path, to_json(&r)?)?;
    }
    if a.json {
        println!("{}", to_json(&report)?);
    } else {
        print!("{}", report.render());
    }
    Ok(())
}

fn cmd_project(a: &ProjectArgs) -> Result<()> {
    let scheme: Scheme = a.scheme.parse()?;
    let (mut ckpt, arch) = a.model.load()?;
    let mut net = ckpt.to_net(&arch)?;
    let constraints: Vec<LayerConstraint> = arch
        .constraints()
        .into_iter()
        .map(|c| LayerConstraint {
            lipschitz_bound: a.lipschitz.unwrap_or(c.lipschitz_bound),
            distance_bound: a.distance.unwrap_or(c.distance_bound),
        })
        .collect();
    for c in &constraints {
        if c.lipschitz_bound.is_nan() || c.distance_bound.is_nan() || c.lipschitz_bound < 0.0 || c.distance_bound < 0.0 {
            return Err(CliError::Usage("constraint bounds must be non-negative".into()));
        }
    }
    let entries = project_net(&mut net, &constraints, scheme, a.rounds)?;
    for (e, l) in entries.iter().zip(&net.layers) {
        if matches!(e.outcome, LayerProjection::Projected { .. }) {
            ckpt.set_weight(&l.name, &l.weight)?;
        }
    }
    ckpt.write(&a.out).map_err(|e| at(&a.out, e))?;
    if a.json {
        println!("{}", to_json(&entries)?);
    } else {
        for e in &entries {
            let line = match &e.outcome {
                LayerProjection::Unconstrained => "unconstrained".to_string(),
                LayerProjection::AlreadyFeasible { .. } => "already feasible, unchanged".to_string(),
                LayerProjection::Projected {
                    initial,
                    final_violations,
                    moved,
                } => format!(
                    "violation {:.3e} -> {:.3e} (relative), moved {:.4e}",
                    initial.max_relative(),
                    final_violations.max_relative(),
                    moved
                ),
                LayerProjection::Error { message } => format!("error: {message}"),
            };
            println!("{:<12} {line}", e.name);
        }
    }
    Ok(())
}

fn cmd_train_demo(a: &TrainDemoArgs) -> Result<()> {
    let task: Option<Task> = a.task.as_deref().map(str::parse).transpose()?;
    let mut cfg = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|source| CliError::Io {
                path: path.clone(),
                source,
            })?;
            serde_json::from_str::<SweepConfig>(&text).map_err(|source| CliError::Json {
                path: path.clone(),
                source,
            })?
        }
        None => SweepConfig::new(task.unwrap_or(Task::Blobs)),
    };
    if let Some(t) = task {
        cfg.task = t;
    }
    if let Some(v) = &a.lipschitz_fractions {
        cfg.lipschitz_fractions = v.clone();
    }
    if let Some(v) = &a.distance_fractions {
        cfg.distance_fractions = v.clone();
    }
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    if let Some(c) = a.cadence {
        cfg.train.cadence = c;
    }
    if let Some(s) = a.seed {
        cfg.train.seed = s;
    }
    if let Some(n) = a.n_train {
        cfg.n_train = n;
    }
    if let Some(n) = a.n_test {
        cfg.n_test = n;
    }
    if let Some(w) = a.width {
        cfg.arch = NetArch::demo(capbound::train::data::SIDE, w, cfg.arch.classes);
    }

    let traj_dir = a.out_dir.join("trajectories");
    let ckpt_dir = a.out_dir.join("checkpoints");
    for d in [&a.out_dir, &traj_dir, &ckpt_dir] {
        fs::create_dir_all(d).map_err(|source| CliError::Io {
            path: d.clone(),
            source,
        })?;
    }
    let report = run_sweep_with(&cfg, |label, out| {
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &out.trajectory)?;
        fs::write(traj_dir.join(format!("{label}.jsonl")), buf)?;
        Checkpoint::from_net(&out.net, DType::F64).write(&ckpt_dir.join(format!("{label}.ckpt")))?;
        if let TrainStatus::Diverged { epoch, step } = out.status {
            eprintln!("{label}: diverged at epoch {epoch}, step {step}");
        }
        Ok(())
    })?;

    write_file(&a.out_dir.join("arch.toml"), archdoc_to_string(&cfg.arch)?)?;
    write_file(&a.out_dir.join("config.json"), to_json(&cfg)?)?;
    let train = capbound::train::synth_data(cfg.task, cfg.n_train, cfg.data_seed)?;
    write_file(&a.out_dir.join("train.json"), dataset_to_string(&train)?)?;
    write_file(&a.out_dir.join("summary.json"), to_json(&report)?)?;
    write_file(&a.out_dir.join("summary.txt"), report.table())?;
    if a.json {
        println!("{}", to_json(&report)?);
    } else {
        print!("{}", report.table());
    }
    Ok(())
}

fn cmd_spectra(a: &SpectraArgs) -> Result<()> {
    let (ckpt, arch) = a.model.load()?;
    let net = ckpt.to_net(&arch)?;
    let entries = spectra(&net, a.dense.then_some(a.materialize_cap))?;
    if a.json {
        println!("{}", to_json(&entries)?);
        return Ok(());
    }
    let mut out = std::io::stdout().lock();
    let _ = writeln!(
        out,
        "{:<12} {:>10} {:>10} {:>10} {:>10} {:>10} {:>7}  method",
        "layer", "min", "q25", "median", "q75", "max", "count"
    );
    for e in &entries {
        let _ = match (&e.summary, &e.skipped) {
            (Some(s), _) => writeln!(
                out,
                "{:<12} {:>10.4e} {:>10.4e} {:>10.4e} {:>10.4e} {:>10.4e} {:>7}  {:?}",
                e.name, s.min, s.q25, s.median, s.q75, s.max, s.count, s.method
            ),
            (None, reason) => writeln!(out, "{:<12} skipped: {}", e.name, reason.as_deref().unwrap_or("")),
        };
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Analyze(a) => cmd_analyze(a),
        Command::Project(a) => cmd_project(a),
        Command::TrainDemo(a) => cmd_train_demo(a),
        Command::Spectra(a) => cmd_spectra(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
