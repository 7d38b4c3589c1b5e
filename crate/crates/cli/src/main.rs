use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;

use wafer_tda::classifier::{evaluate, load_model, save_model, train, TrainConfig};
use wafer_tda::diagram_metrics::{bottleneck_distance, wasserstein_distance};
use wafer_tda::harness::{
    plot, run_basic_with_models, run_bench, run_experiment, ExperimentKind, ExperimentReport, ExperimentSpec,
};
use wafer_tda::persistence_image::{FeatureSet, PIConfig};
use wafer_tda::ph_engine::{compute_persistence, PersistenceDiagram};
use wafer_tda::wafer_sim::{
    draw_imbalanced_counts, generate_dataset, load_dataset, write_dataset, DatasetSpec, Label, Split, SplitSizes,
    WaferMap, NUM_CLASSES,
};
use wafer_tda::{Error, Result};

/// Topological classification of wafer defect maps.
#[derive(Parser)]
#[command(name = "wafer-tda", version)]
struct Cli {
    /// Random seed for data generation and training.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file or directory, depending on the command.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// JSON file with the command's parameters (training, experiment or
    /// persistence-image settings).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print JSON instead of human-readable tables.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic wafer dataset.
    Generate(GenerateArgs),
    /// Compute persistence-image feature vectors for a dataset.
    Featurize(FeaturizeArgs),
    /// Distances between the persistence diagrams of two wafers or diagram files.
    Dist(DistArgs),
    /// Train the classifier on a feature file.
    Train(TrainArgs),
    /// Evaluate a trained model on a feature file.
    Eval(EvalArgs),
    /// Time raw wafer maps to predictions for several random-pattern ratios.
    Bench(BenchArgs),
    /// Run a full experiment.
    Experiment(ExperimentArgs),
    /// Render a wafer, diagram, persistence image or report to PNG and CSV.
    Plot(PlotArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Wafers per class: one number for all classes or five comma-separated
    /// counts (Random, Ring, Scratch, Dense, Cluster).
    #[arg(long, value_delimiter = ',', default_value = "500")]
    counts: Vec<usize>,
    /// Draw every class count uniformly from 1..=300 instead.
    #[arg(long, conflicts_with = "counts")]
    imbalanced: bool,
    /// Per-class train,val,test sizes.
    #[arg(long, value_delimiter = ',', num_args = 1)]
    split: Option<Vec<usize>>,
}

#[derive(Args)]
struct FeaturizeArgs {
    /// Dataset directory written by `generate`.
    #[arg(long)]
    data: PathBuf,
    /// Only featurize this split.
    #[arg(long, value_enum)]
    split: Option<SplitArg>,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Also write each wafer's diagrams as `<dir>/<id>.json`.
    #[arg(long)]
    diagrams: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Args)]
struct DistArgs {
    /// Wafer JSON, diagram JSON or array of diagrams.
    a: PathBuf,
    b: PathBuf,
    #[arg(long, value_enum, default_value = "all")]
    metric: Metric,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Metric {
    All,
    W1,
    W2,
    Bottleneck,
}

#[derive(Args)]
struct TrainArgs {
    /// Training feature file.
    #[arg(long)]
    features: PathBuf,
    /// Validation feature file, scored after every epoch.
    #[arg(long)]
    val: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Write the per-epoch history as JSON.
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    features: PathBuf,
    /// Write the full evaluation report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Trained checkpoint; a freshly initialized model is timed otherwise.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    ratios: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    totals: Option<Vec<usize>>,
    #[arg(long)]
    repetitions: Option<usize>,
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(value_enum)]
    kind: KindArg,
    /// Seeds, one run each; overrides the config and `--seed`.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Basic,
    SmallData,
    Imbalanced,
}

impl From<KindArg> for ExperimentKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Basic => ExperimentKind::Basic,
            KindArg::SmallData => ExperimentKind::SmallData,
            KindArg::Imbalanced => ExperimentKind::Imbalanced,
        }
    }
}

#[derive(Args)]
struct PlotArgs {
    /// JSON file: wafer, diagram(s), persistence image, evaluation or
    /// experiment report.
    input: PathBuf,
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| io_error(path, e))
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn config_or_default<T: DeserializeOwned + Default>(cli: &Cli) -> Result<T> {
    cli.config.as_deref().map_or_else(|| Ok(T::default()), read_json)
}

/// Prints `value` as JSON with `--json`, otherwise the given lines.
fn emit<T: Serialize>(cli: &Cli, value: &T, lines: impl FnOnce() -> Vec<String>) -> Result<()> {
    if cli.json {
        println!(
            "{}",
            serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?
        );
    } else {
        for line in lines() {
            println!("{line}");
        }
    }
    Ok(())
}

fn out_or(cli: &Cli, default: &str) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn generate(cli: &Cli, args: &GenerateArgs) -> Result<()> {
    let seed = cli.seed.unwrap_or(0);
    let counts: [usize; NUM_CLASSES] = if args.imbalanced {
        draw_imbalanced_counts(seed)
    } else {
        match args.counts.as_slice() {
            [n] => [*n; NUM_CLASSES],
            c if c.len() == NUM_CLASSES => c.try_into().unwrap(),
            c => {
                return Err(Error::InvalidParameter(format!(
                    "--counts takes 1 or {NUM_CLASSES} values, got {}",
                    c.len()
                )))
            }
        }
    };
    let split = match args.split.as_deref() {
        None => None,
        Some(&[train, val, test]) => Some(SplitSizes { train, val, test }),
        Some(s) => {
            return Err(Error::InvalidParameter(format!(
                "--split takes train,val,test sizes, got {} values",
                s.len()
            )))
        }
    };
    let dataset = generate_dataset(&DatasetSpec { counts, split }, seed)?;
    let dir = out_or(cli, "data");
    write_dataset(&dataset, &dir)?;
    emit(cli, &dataset.manifest.counts, || {
        vec![format!(
            "wrote {} wafers (counts {counts:?}, seed {seed}) to {}",
            dataset.wafers.len(),
            dir.display()
        )]
    })
}

fn featurize(cli: &Cli, args: &FeaturizeArgs) -> Result<()> {
    let cfg: PIConfig = config_or_default(cli)?;
    let dataset = load_dataset(&args.data)?;
    let wanted = args.split.map(Split::from);
    let (ids, wafers): (Vec<String>, Vec<&WaferMap>) = dataset
        .manifest
        .wafers
        .iter()
        .zip(&dataset.wafers)
        .filter(|(e, _)| wanted.is_none_or(|s| e.split == s))
        .map(|(e, w)| (e.id.clone(), w))
        .unzip();
    if let Some(dir) = &args.diagrams {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        for (id, w) in ids.iter().zip(&wafers) {
            let (h0, h1) = compute_persistence(&w.cloud())?;
            write_json(&dir.join(format!("{id}.json")), &[h0, h1])?;
        }
    }
    let set = FeatureSet::from_wafers(ids, &wafers, cfg, args.jobs)?;
    let path = out_or(cli, "features.bin");
    set.save(&path)?;
    emit(cli, &json!({"rows": set.len(), "dim": set.dim, "path": path}), || {
        vec![format!(
            "featurized {} wafers into {} ({} features each)",
            set.len(),
            path.display(),
            set.dim
        )]
    })
}

/// Diagrams of a wafer file, or the diagrams stored in a diagram file.
fn diagrams_of(path: &Path) -> Result<Vec<PersistenceDiagram>> {
    match plot::PlotInput::read(path)? {
        plot::PlotInput::Wafer(w) => {
            let (h0, h1) = compute_persistence(&w.cloud())?;
            Ok(vec![h0, h1])
        }
        plot::PlotInput::Diagrams(d) => Ok(d),
        _ => Err(Error::Format(format!(
            "{}: expected a wafer or persistence diagram file",
            path.display()
        ))),
    }
}

fn dist(cli: &Cli, args: &DistArgs) -> Result<()> {
    let (a, b) = (diagrams_of(&args.a)?, diagrams_of(&args.b)?);
    let mut rows = Vec::new();
    for da in &a {
        let Some(db) = b.iter().find(|d| d.dim == da.dim) else {
            continue;
        };
        let want = |m: Metric| args.metric == Metric::All || args.metric == m;
        let mut row = serde_json::Map::new();
        row.insert("dim".into(), json!(da.dim));
        if want(Metric::W1) {
            row.insert("w1".into(), json!(wasserstein_distance(da, db, 1.0)?));
        }
        if want(Metric::W2) {
            row.insert("w2".into(), json!(wasserstein_distance(da, db, 2.0)?));
        }
        if want(Metric::Bottleneck) {
            row.insert("bottleneck".into(), json!(bottleneck_distance(da, db)?));
        }
        rows.push(serde_json::Value::Object(row));
    }
    if rows.is_empty() {
        return Err(Error::InvalidDiagram("the inputs share no homology dimension".into()));
    }
    emit(cli, &rows, || {
        rows.iter()
            .map(|r| {
                let fields: Vec<String> = r
                    .as_object()
                    .unwrap()
                    .iter()
                    .filter(|(k, _)| *k != "dim")
                    .map(|(k, v)| format!("{k} {:.6}", v.as_f64().unwrap_or(f64::NAN)))
                    .collect();
                format!("H{}: {}", r["dim"], fields.join("  "))
            })
            .collect()
    })
}

fn train_cmd(cli: &Cli, args: &TrainArgs) -> Result<()> {
    let mut cfg: TrainConfig = config_or_default(cli)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(e) = args.epochs {
        cfg.epochs = e;
    }
    let train_set = FeatureSet::load(&args.features)?;
    let val = args.val.as_deref().map(FeatureSet::load).transpose()?;
    let (model, history) = train(&train_set, val.as_ref(), &cfg)?;
    let path = out_or(cli, "model.ckpt");
    save_model(&model, Some(&cfg), &path)?;
    if let Some(h) = &args.history {
        write_json(h, &history)?;
    }
    let last = history.epochs.last().unwrap();
    let summary = json!({
        "model": path,
        "epochs": cfg.epochs,
        "train_accuracy": last.train_accuracy,
        "train_loss": last.train_loss,
        "val_accuracy": last.val_accuracy,
        "epochs_to_90": history.epochs_to_train_accuracy(0.9),
        "mean_epoch_seconds": history.mean_epoch_seconds(),
    });
    emit(cli, &summary, || {
        let mut lines = vec![format!(
            "epoch {}: train loss {:.4}, train accuracy {:.3}{}",
            last.epoch,
            last.train_loss,
            last.train_accuracy,
            last.val_accuracy
                .map_or(String::new(), |v| format!(", validation accuracy {v:.3}"))
        )];
        lines.push(format!(
            "90% train accuracy reached at epoch {}; {:.3} s/epoch",
            history
                .epochs_to_train_accuracy(0.9)
                .map_or("-".to_string(), |e| e.to_string()),
            history.mean_epoch_seconds()
        ));
        lines.push(format!("saved {}", path.display()));
        lines
    })
}

fn eval_cmd(cli: &Cli, args: &EvalArgs) -> Result<()> {
    let (model, cfg) = load_model(&args.model)?;
    let test = FeatureSet::load(&args.features)?;
    let mut report = evaluate(&model, &test)?;
    report.config = cfg;
    if let Some(p) = &args.report {
        write_json(p, &report)?;
    }
    emit(cli, &report, || {
        let mut lines = vec![format!(
            "accuracy {:.4} ({} wafers), mean loss {:.4}",
            report.accuracy, report.total, report.loss
        )];
        lines.push(format!(
            "{:<10}{}",
            "true\\pred",
            Label::ALL
                .iter()
                .map(|l| format!("{:>9}", l.name()))
                .collect::<String>()
        ));
        for l in Label::ALL {
            lines.push(format!(
                "{:<10}{}",
                l.name(),
                report.confusion[l.index()]
                    .iter()
                    .map(|c| format!("{c:>9}"))
                    .collect::<String>()
            ));
        }
        lines
    })
}

fn spec_for(cli: &Cli, kind: ExperimentKind) -> Result<ExperimentSpec> {
    let mut spec = match &cli.config {
        Some(p) => read_json::<ExperimentSpec>(p)?,
        None => ExperimentSpec::new(kind),
    };
    if spec.kind != kind {
        return Err(Error::InvalidParameter(format!(
            "{} describes a {} experiment, not {kind}",
            cli.config.as_ref().unwrap().display(),
            spec.kind
        )));
    }
    if let Some(seed) = cli.seed {
        spec.seeds = vec![seed];
    }
    Ok(spec)
}

/// Writes `report.json`, the report's CSV tables and its figures.
fn write_report(report: &ExperimentReport, dir: &Path) -> Result<()> {
    write_json(&dir.join("report.json"), report)?;
    for (name, text) in report.tables() {
        let p = dir.join(format!("{name}.csv"));
        fs::write(&p, text).map_err(|e| io_error(&p, e))?;
    }
    let figures = plot::figures(&plot::PlotInput::Report(Box::new(report.clone())), &report.spec.pi)?;
    plot::write_figures(&figures, "report", dir)?;
    Ok(())
}

fn bench(cli: &Cli, args: &BenchArgs) -> Result<()> {
    let mut spec = spec_for(cli, ExperimentKind::Bench)?;
    if let Some(r) = &args.ratios {
        spec.ratios = r.clone();
    }
    if let Some(t) = &args.totals {
        spec.totals = t.clone();
    }
    if let Some(r) = args.repetitions {
        spec.repetitions = r;
    }
    if let Some(j) = args.jobs {
        spec.jobs = j;
    }
    let model = args.model.as_deref().map(load_model).transpose()?.map(|(m, _)| m);
    let report = run_bench(&spec, model.as_ref())?;
    let dir = out_or(cli, "bench");
    write_report(&report, &dir)?;
    emit(cli, &report, || report.summary())
}

fn experiment(cli: &Cli, args: &ExperimentArgs) -> Result<()> {
    let kind = ExperimentKind::from(args.kind);
    let mut spec = spec_for(cli, kind)?;
    if let Some(s) = &args.seeds {
        spec.seeds = s.clone();
    }
    if let Some(e) = args.epochs {
        spec.train.epochs = e;
    }
    if let Some(j) = args.jobs {
        spec.jobs = j;
    }
    let dir = out_or(cli, &format!("experiments/{}", kind.name()));
    let report = if kind == ExperimentKind::Basic {
        let (report, models) = run_basic_with_models(&spec)?;
        fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
        for (seed, model) in spec.seeds.iter().zip(&models) {
            save_model(model, Some(&spec.train), &dir.join(format!("model_seed{seed}.ckpt")))?;
        }
        report
    } else {
        run_experiment(&spec)?
    };
    write_report(&report, &dir)?;
    emit(cli, &report, || {
        let mut lines = report.summary();
        lines.push(format!("wrote {}", dir.display()));
        lines
    })
}

fn plot_cmd(cli: &Cli, args: &PlotArgs) -> Result<()> {
    let cfg: PIConfig = config_or_default(cli)?;
    let written = plot::plot_file(&args.input, &out_or(cli, "plots"), &cfg)?;
    emit(cli, &written, || {
        written.iter().map(|p| p.display().to_string()).collect()
    })
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Generate(a) => generate(cli, a),
        Command::Featurize(a) => featurize(cli, a),
        Command::Dist(a) => dist(cli, a),
        Command::Train(a) => train_cmd(cli, a),
        Command::Eval(a) => eval_cmd(cli, a),
        Command::Bench(a) => bench(cli, a),
        Command::Experiment(a) => experiment(cli, a),
        Command::Plot(a) => plot_cmd(cli, a),
    }
}

fn fail(kind: &str, message: String, code: u8) -> ExitCode {
    eprintln!("{}", json!({"error": kind, "message": message}));
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("UsageError", e.to_string().trim().to_string(), 2),
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.kind(), e.to_string(), 1),
    }
}
