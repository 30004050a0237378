use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use gesturehmm::baselines::{assign_event_labels, ec_segment, EcConfig, KnnConfig, KnnModel, Weighting, DEFAULT_K};
use gesturehmm::data::{
    generate, load_dataset, load_events, load_labels, save_dataset, save_events, save_labels, split_train_test,
    synthetic_spec, Dataset, GeneratorConfig,
};
use gesturehmm::eval::{
    confusion, default_curve_thresholds, default_profiles, event_lags, histogram, latency_budget, misclassified_blocks,
    precision_recall, smtsc_window, variance_ratio_test, LatencyProfile, SmtscResponseTable, CANONICAL_WINDOW_MS,
    DEFAULT_FRAME_MS, SAMPLE_PERIOD_MS,
};
use gesturehmm::io::{write_atomic, write_string_atomic};
use gesturehmm::labels::{LabelSequence, Provenance};
use gesturehmm::model::{HhmmSpec, DEFAULT_MOVEMENTS, DEFAULT_RHO, DEFAULT_SEGMENTS};
use gesturehmm::stream::run_stream;
use gesturehmm::trainer::{train_full_spec, TrainConfig};
use gesturehmm::{Error, PreparedSpec};

#[derive(Parser, Debug)]
#[command(name = "gesturehmm", version, about = "Online VAR-HHMM movement classification for IMU streams")]
struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, env = "GESTUREHMM_SEED", default_value_t = 0)]
    seed: u64,

    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    /// Only log errors.
    #[arg(short, long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw a labelled synthetic recording.
    Generate(GenerateArgs),
    /// Fit a model to a labelled recording.
    Train(TrainArgs),
    /// Label every sample of a recording.
    Classify(ClassifyArgs),
    /// Compare predicted labels with reference labels and events.
    Evaluate(EvaluateArgs),
    /// Classify newline-delimited JSON frames online.
    Stream(StreamArgs),
    /// Fit the acceptable latency window from synchrony ratings.
    Smtsc(SmtscArgs),
    /// Detect movement onsets and ends with the two-threshold segmenter.
    Segment(SegmentArgs),
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// Output dataset CSV (with labels).
    #[arg(long)]
    out: PathBuf,
    /// Generator model; defaults to the built-in synthetic model.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Movement classes of the built-in model, rest included.
    #[arg(long, default_value_t = DEFAULT_MOVEMENTS)]
    movements: usize,
    /// Segments per movement of the built-in model.
    #[arg(long, default_value_t = DEFAULT_SEGMENTS)]
    segments: usize,
    /// Number of gesture events.
    #[arg(long, default_value_t = 20)]
    events: usize,
    #[arg(long, default_value_t = 1.0)]
    noise_scale: f64,
    /// Also write the generator events CSV.
    #[arg(long)]
    events_out: Option<PathBuf>,
    /// Also write the built-in generator model.
    #[arg(long)]
    model_out: Option<PathBuf>,
    /// Split into training and test files at this fraction of events.
    #[arg(long, requires_all = ["train_out", "test_out"])]
    split: Option<f64>,
    #[arg(long)]
    train_out: Option<PathBuf>,
    #[arg(long)]
    test_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Labelled dataset CSV.
    #[arg(long)]
    data: PathBuf,
    /// Output model JSON.
    #[arg(long)]
    out: PathBuf,
    /// Training report JSON; defaults to `<out>.report.json`.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    restarts: usize,
    #[arg(long, default_value_t = 1e-10)]
    ftol: f64,
    #[arg(long, default_value_t = 200)]
    max_iters: usize,
    #[arg(long, default_value_t = DEFAULT_SEGMENTS)]
    segments: usize,
    /// Comma-separated lag orders tried by BIC.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    tau_candidates: Vec<usize>,
    /// Movement self-transition probability.
    #[arg(long, default_value_t = DEFAULT_RHO)]
    rho: f64,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Classifier {
    VarHhmm,
    Knn,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum WeightingArg {
    Uniform,
    InverseDistance,
}

#[derive(Args, Debug)]
struct ClassifyArgs {
    /// Dataset CSV to label.
    #[arg(long)]
    data: PathBuf,
    /// Output labels CSV (`t,label`).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Classifier::VarHhmm)]
    classifier: Classifier,
    /// Model JSON (var-hhmm).
    #[arg(long, required_if_eq("classifier", "var-hhmm"))]
    model: Option<PathBuf>,
    /// Labelled training CSV (knn).
    #[arg(long, required_if_eq("classifier", "knn"))]
    train: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,
    #[arg(long, value_enum, default_value_t = WeightingArg::InverseDistance)]
    weighting: WeightingArg,
    /// Frames per KNN feature vector.
    #[arg(long, default_value_t = 1)]
    window: usize,
    /// Also write per-sample movement posteriors (var-hhmm).
    #[arg(long)]
    posteriors_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Reference labels CSV.
    #[arg(long = "true")]
    truth: PathBuf,
    /// Predicted labels CSV.
    #[arg(long)]
    pred: PathBuf,
    /// Reference events CSV.
    #[arg(long)]
    events: Option<PathBuf>,
    /// Labels of a second classifier; its misclassified-block durations are
    /// compared with those of `--pred` by a two-tailed variance-ratio test.
    #[arg(long)]
    baseline_pred: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Upper bound of the acceptable latency window in ms.
    #[arg(long, default_value_t = CANONICAL_WINDOW_MS[1])]
    window_upper_ms: f64,
    /// Extra hardware profile as NAME=MS (repeatable); replaces the defaults.
    #[arg(long = "profile", value_parser = parse_profile)]
    profiles: Vec<LatencyProfile>,
    /// Histogram bin width in ms.
    #[arg(long, default_value_t = 50.0)]
    bin_ms: f64,
}

#[derive(Args, Debug)]
struct StreamArgs {
    #[arg(long)]
    model: PathBuf,
    /// Input NDJSON; stdin when absent.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output NDJSON; stdout when absent.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SmtscArgs {
    /// Response table CSV `subject,lag,response,repetition`.
    #[arg(long)]
    responses: PathBuf,
    /// Output window JSON.
    #[arg(long)]
    out: PathBuf,
    /// Video frame period in ms.
    #[arg(long, default_value_t = DEFAULT_FRAME_MS)]
    frame_ms: f64,
}

#[derive(Args, Debug)]
struct SegmentArgs {
    #[arg(long)]
    data: PathBuf,
    /// Output events CSV.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.30)]
    ec_upper_frac: f64,
    #[arg(long, default_value_t = 20.0)]
    ec_lower_div: f64,
    /// Per-sample labels derived from the events (needs a labelled dataset).
    #[arg(long)]
    labels_out: Option<PathBuf>,
}

fn parse_profile(s: &str) -> Result<LatencyProfile, String> {
    let (name, ms) = s.split_once('=').ok_or("expected NAME=MS")?;
    let ms: f64 = ms.parse().map_err(|e| format!("{e}"))?;
    LatencyProfile::new(name, ms).map_err(|e| e.to_string())
}

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Parameter(_) => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn require_file(path: &Path) -> CmdResult {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::Usage(format!("input file not found: {}", path.display())))
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CmdResult {
    let text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    write_string_atomic(path, &(text + "\n"))?;
    Ok(())
}

fn load_spec(path: &Path) -> Result<HhmmSpec, Failure> {
    require_file(path)?;
    let text = fs::read_to_string(path).map_err(Error::from)?;
    Ok(HhmmSpec::from_json(&text)?)
}

fn times(dataset: &Dataset) -> Vec<u64> {
    dataset.frames.iter().map(|f| f.t).collect()
}

fn cmd_generate(a: &GenerateArgs, seed: u64) -> CmdResult {
    let spec = match &a.model {
        Some(p) => load_spec(p)?,
        None => synthetic_spec(a.movements, a.segments)?,
    };
    let mut cfg = GeneratorConfig::new(spec, a.events, seed);
    cfg.noise_scale = a.noise_scale;
    let (dataset, report) = generate(&cfg)?;
    log::info!(
        "generated {} samples, {} events, {:.2}% clipped",
        report.n_samples,
        a.events,
        100.0 * report.clip_fraction
    );
    save_dataset(&dataset, &a.out)?;
    if let Some(p) = &a.events_out {
        save_events(dataset.events.as_deref().unwrap_or_default(), p)?;
    }
    if let Some(p) = &a.model_out {
        write_string_atomic(p, &cfg.spec.to_json()?)?;
    }
    if let (Some(fraction), Some(train), Some(test)) = (a.split, &a.train_out, &a.test_out) {
        let (tr, te) = split_train_test(&dataset, fraction)?;
        save_dataset(&tr, train)?;
        save_dataset(&te, test)?;
    }
    Ok(())
}

fn cmd_train(a: &TrainArgs, seed: u64) -> CmdResult {
    require_file(&a.data)?;
    let config = TrainConfig {
        n_restarts: a.restarts,
        ftol: a.ftol,
        max_iters: a.max_iters,
        k_segments: a.segments,
        tau_candidates: a.tau_candidates.clone(),
        seed,
        rho: a.rho,
    };
    config.validate()?;
    let dataset = load_dataset(&a.data)?;
    if dataset.labels.is_none() {
        return Err(Failure::Usage(format!("{} has no label column", a.data.display())));
    }
    let (spec, report) = train_full_spec(&dataset, &config)?;
    write_string_atomic(&a.out, &spec.to_json()?)?;
    let report_path = a.report.clone().unwrap_or_else(|| {
        let mut p = a.out.clone().into_os_string();
        p.push(".report.json");
        PathBuf::from(p)
    });
    write_json(&report_path, &report)
}

fn cmd_classify(a: &ClassifyArgs) -> CmdResult {
    require_file(&a.data)?;
    let dataset = load_dataset(&a.data)?;
    let labels = match a.classifier {
        Classifier::VarHhmm => {
            let spec = load_spec(a.model.as_deref().expect("required by clap"))?;
            let prepared = PreparedSpec::new(&spec)?;
            let result = prepared.classify(&dataset.frames)?;
            if let Some(p) = &a.posteriors_out {
                write_atomic(p, |w| {
                    let mut csv = csv::Writer::from_writer(w);
                    let mut header = vec!["t".to_string()];
                    header.extend((1..=spec.n_movements()).map(|m| format!("p{m}")));
                    csv.write_record(&header)?;
                    for (f, post) in dataset.frames.iter().zip(&result.posteriors) {
                        let mut row = vec![f.t.to_string()];
                        row.extend(post.iter().map(f64::to_string));
                        csv.write_record(&row)?;
                    }
                    csv.flush()?;
                    Ok(())
                })?;
            }
            result.labels
        }
        Classifier::Knn => {
            let train_path = a.train.as_deref().expect("required by clap");
            require_file(train_path)?;
            let train = load_dataset(train_path)?;
            let train_labels = train
                .labels
                .as_ref()
                .ok_or_else(|| Failure::Usage(format!("{} has no label column", train_path.display())))?;
            let cfg = KnnConfig {
                k: a.k,
                weighting: match a.weighting {
                    WeightingArg::Uniform => Weighting::Uniform,
                    WeightingArg::InverseDistance => Weighting::InverseDistance,
                },
                window: a.window,
            };
            let vectors: Vec<[f64; 6]> = train.frames.iter().map(|f| f.to_array()).collect();
            let features = gesturehmm::baselines::window_features(&vectors, cfg.window);
            let model = KnnModel::fit(&features, &train_labels.labels, cfg)?;
            model.classify_sequence(&dataset.frames)?
        }
    };
    save_labels(&times(&dataset), &labels, &a.out)?;
    Ok(())
}

#[derive(Serialize)]
struct LagSummary {
    n_events: usize,
    n_matched: usize,
    mean_onset_lag_ms: Option<f64>,
    mean_end_lag_ms: Option<f64>,
}

#[derive(Serialize)]
struct BlockComparison {
    baseline_misclassified_blocks: usize,
    mean_block_ms: Option<f64>,
    baseline_mean_block_ms: Option<f64>,
    variance_ratio: Option<gesturehmm::eval::VarianceRatioTest>,
}

#[derive(Serialize)]
struct Metrics {
    n_samples: usize,
    n_classes: usize,
    accuracy: f64,
    confusion: Vec<Vec<u64>>,
    precision: Vec<Option<f64>>,
    recall: Vec<Option<f64>>,
    misclassified_blocks: usize,
    misclassified_samples: u64,
    block_comparison: Option<BlockComparison>,
    lags: Option<LagSummary>,
    latency: Option<gesturehmm::eval::LatencyBudget>,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

fn write_rows<I, R>(path: &Path, header: &[&str], rows: I) -> CmdResult
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    write_atomic(path, |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(header)?;
        for row in rows {
            csv.write_record(row)?;
        }
        csv.flush()?;
        Ok(())
    })?;
    Ok(())
}

fn write_histogram(path: &Path, values: &[f64], bin_ms: f64) -> CmdResult {
    write_rows(
        path,
        &["bin_start_ms", "count"],
        histogram(values, bin_ms)
            .into_iter()
            .map(|(start, count)| vec![start.to_string(), count.to_string()]),
    )
}

fn opt(v: Option<impl ToString>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn cmd_evaluate(a: &EvaluateArgs) -> CmdResult {
    require_file(&a.truth)?;
    require_file(&a.pred)?;
    for p in a.events.iter().chain(&a.baseline_pred) {
        require_file(p)?;
    }
    let truth = load_labels(&a.truth)?;
    let pred = load_labels(&a.pred)?;
    if truth.len() != pred.len() {
        return Err(Failure::Usage(format!(
            "label files differ in length: {} vs {}",
            truth.len(),
            pred.len()
        )));
    }
    let events = a.events.as_deref().map(load_events).transpose()?;
    let n_classes = truth
        .n_classes()
        .max(pred.n_classes())
        .max(events.iter().flatten().filter_map(|e| e.movement_label).map(|l| l + 1).max().unwrap_or(0));
    let cm = confusion(&truth.labels, &pred.labels, n_classes)?;
    let scores = precision_recall(&cm);
    let blocks = misclassified_blocks(&truth.labels, &pred.labels)?;
    fs::create_dir_all(&a.out).map_err(Error::from)?;

    let class_header: Vec<String> = std::iter::once("true\\pred".to_string())
        .chain((1..=n_classes).map(|c| c.to_string()))
        .collect();
    let header_refs: Vec<&str> = class_header.iter().map(String::as_str).collect();
    write_rows(
        &a.out.join("confusion.csv"),
        &header_refs,
        cm.counts.iter().enumerate().map(|(i, row)| {
            std::iter::once((i + 1).to_string()).chain(row.iter().map(u64::to_string)).collect::<Vec<_>>()
        }),
    )?;
    write_rows(
        &a.out.join("blocks.csv"),
        &["duration_samples"],
        blocks.iter().map(|b| vec![b.to_string()]),
    )?;
    let to_ms = |b: &[usize]| -> Vec<f64> { b.iter().map(|&n| n as f64 * SAMPLE_PERIOD_MS).collect() };
    let block_ms = to_ms(&blocks);
    write_histogram(&a.out.join("block_histogram.csv"), &block_ms, a.bin_ms)?;
    let block_comparison = match &a.baseline_pred {
        Some(p) => {
            let base = load_labels(p)?;
            if base.len() != truth.len() {
                return Err(Failure::Usage(format!("{} differs in length from --true", p.display())));
            }
            let base_ms = to_ms(&misclassified_blocks(&truth.labels, &base.labels)?);
            write_histogram(&a.out.join("baseline_block_histogram.csv"), &base_ms, a.bin_ms)?;
            Some(BlockComparison {
                baseline_misclassified_blocks: base_ms.len(),
                mean_block_ms: mean(&block_ms),
                baseline_mean_block_ms: mean(&base_ms),
                variance_ratio: variance_ratio_test(&block_ms, &base_ms).ok(),
            })
        }
        None => None,
    };

    let (lags, latency) = match &events {
        Some(events) => {
            let records = event_lags(events, &pred.labels);
            write_rows(
                &a.out.join("lags.csv"),
                &["onset", "end", "label", "matched", "onset_lag_ms", "end_lag_ms"],
                records.iter().map(|r| {
                    vec![
                        r.event.onset.to_string(),
                        r.event.end.to_string(),
                        opt(r.event.movement_label.map(|l| l + 1)),
                        r.matched.to_string(),
                        opt(r.onset_lag_ms()),
                        opt(r.end_lag_ms()),
                    ]
                }),
            )?;
            let onset: Vec<f64> = records.iter().filter_map(|r| r.onset_lag_ms()).collect();
            let end: Vec<f64> = records.iter().filter_map(|r| r.end_lag_ms()).collect();
            write_histogram(&a.out.join("onset_lag_histogram.csv"), &onset, a.bin_ms)?;
            write_histogram(&a.out.join("end_lag_histogram.csv"), &end, a.bin_ms)?;
            let profiles = if a.profiles.is_empty() {
                default_profiles()
            } else {
                a.profiles.clone()
            };
            let budget = latency_budget(&records, &profiles, a.window_upper_ms, &default_curve_thresholds());
            write_rows(
                &a.out.join("latency_curve.csv"),
                &["threshold_ms", "delayed_events"],
                budget.curve.iter().map(|(th, n)| vec![th.to_string(), n.to_string()]),
            )?;
            let summary = LagSummary {
                n_events: records.len(),
                n_matched: records.iter().filter(|r| r.matched).count(),
                mean_onset_lag_ms: mean(&onset),
                mean_end_lag_ms: mean(&end),
            };
            (Some(summary), Some(budget))
        }
        None => (None, None),
    };

    let valid = |v: &[f64], ok: &[bool]| v.iter().zip(ok).map(|(&x, &k)| k.then_some(x)).collect();
    let metrics = Metrics {
        n_samples: truth.len(),
        n_classes,
        accuracy: cm.accuracy(),
        confusion: cm.counts.clone(),
        precision: valid(&scores.precision, &scores.precision_valid),
        recall: valid(&scores.recall, &scores.recall_valid),
        misclassified_blocks: blocks.len(),
        misclassified_samples: cm.off_diagonal(),
        block_comparison,
        lags,
        latency,
    };
    write_json(&a.out.join("metrics.json"), &metrics)
}

fn cmd_stream(a: &StreamArgs) -> CmdResult {
    let spec = load_spec(&a.model)?;
    let prepared = PreparedSpec::new(&spec)?;
    if let Some(p) = &a.input {
        require_file(p)?;
    }
    let input: Box<dyn io::BufRead> = match &a.input {
        Some(p) => Box::new(BufReader::new(File::open(p).map_err(Error::from)?)),
        None => Box::new(io::stdin().lock()),
    };
    let n = match &a.output {
        Some(p) => {
            let mut n = 0;
            write_atomic(p, |w| {
                n = run_stream(&prepared, input, w)?;
                Ok(())
            })?;
            n
        }
        None => run_stream(&prepared, input, BufWriter::new(io::stdout().lock()))?,
    };
    log::info!("streamed {n} frames");
    Ok(())
}

fn cmd_smtsc(a: &SmtscArgs) -> CmdResult {
    require_file(&a.responses)?;
    let table = SmtscResponseTable::from_csv(File::open(&a.responses).map_err(Error::from)?)?;
    let window = smtsc_window(&table, a.frame_ms)?;
    write_json(&a.out, &window)
}

fn cmd_segment(a: &SegmentArgs) -> CmdResult {
    require_file(&a.data)?;
    let cfg = EcConfig {
        upper_frac: a.ec_upper_frac,
        lower_divisor: a.ec_lower_div,
    };
    cfg.validate()?;
    let dataset = load_dataset(&a.data)?;
    let mut events = ec_segment(&dataset.frames, &cfg)?;
    if let Some(labels) = &dataset.labels {
        assign_event_labels(&mut events, &labels.labels);
    }
    save_events(&events, &a.out)?;
    if let Some(p) = &a.labels_out {
        if dataset.labels.is_none() {
            return Err(Failure::Usage("--labels-out needs a labelled dataset".into()));
        }
        let mut labels = vec![0; dataset.len()];
        for ev in &events {
            if let Some(l) = ev.movement_label {
                labels[ev.onset..=ev.end].fill(l);
            }
        }
        save_labels(&times(&dataset), &LabelSequence::new(labels, Provenance::Expert), p)?;
    }
    log::info!("{} events detected", events.len());
    Ok(())
}

fn run(cli: &Cli) -> CmdResult {
    match &cli.command {
        Command::Generate(a) => cmd_generate(a, cli.seed),
        Command::Train(a) => cmd_train(a, cli.seed),
        Command::Classify(a) => cmd_classify(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Stream(a) => cmd_stream(a),
        Command::Smtsc(a) => cmd_smtsc(a),
        Command::Segment(a) => cmd_segment(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => log::LevelFilter::Error,
        (false, 0) => log::LevelFilter::Warn,
        (false, 1) => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\nRun `gesturehmm --help` for usage.");
            let _ = io::stderr().flush();
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
