use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use scenerisk::io;
use scenerisk::pipeline::{self, AnalysisConfig, RunOptions};
use scenerisk::providers::{DetectionTable, NoSegmentation, SegmentationProvider, SegmentationTable};
use scenerisk_core::dataset::{self, class_balance, summarize, FrameRecord, Split};
use scenerisk_core::metrics::{self, ClassReport, ConfusionMatrix};
use scenerisk_core::multinet::{self, ModelConfig, MultiNetModel, TaskPair, TrainConfig, TrainingSample};
use scenerisk_core::Task;

#[derive(Parser)]
#[command(name = "scenerisk", version, about = "Driving-scene risk analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analyze the sampled frames of every video in a manifest.
    Analyze {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        segmentation: Option<PathBuf>,
        /// Report file, one JSON record per frame.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Fetch and persist segmentation for all frames before analysis.
        #[arg(long)]
        two_stage: bool,
        /// JSON file with camera, heights and grid overrides.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train one network of the model on a records file.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum)]
        task_pair: PairArg,
        /// JSON training settings; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Start from this model instead of a fresh initialization.
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = SplitArg::Train)]
        split: SplitArg,
        /// Write the per-epoch losses as JSON.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Evaluate a model on a records file.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Text report.
        #[arg(long)]
        report: PathBuf,
        /// Also write per-task metrics and confusion matrices as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
    },
    /// Sample, label and split the frames of a manifest.
    Sample {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Train, validation and test fractions.
        #[arg(long, value_delimiter = ',', num_args = 3, default_value = "0.7,0.15,0.15")]
        fractions: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Time the per-frame analysis on synthetic frames.
    Bench {
        #[arg(long)]
        frames: usize,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 320)]
        width: u32,
        #[arg(long, default_value_t = 180)]
        height: u32,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PairArg {
    CrashRoad,
    WeatherTime,
}

impl From<PairArg> for TaskPair {
    fn from(p: PairArg) -> Self {
        match p {
            PairArg::CrashRoad => TaskPair::CrashRoad,
            PairArg::WeatherTime => TaskPair::WeatherTime,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
    All,
}

impl SplitArg {
    fn keeps(self, split: Split) -> bool {
        match self {
            SplitArg::Train => split == Split::Train,
            SplitArg::Val => split == Split::Val,
            SplitArg::Test => split == Split::Test,
            SplitArg::All => true,
        }
    }
}

#[derive(Clone, Copy, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Profile {
    #[default]
    Desk,
    Full,
}

/// Contents of the `train --config` file.
#[derive(Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TrainSettings {
    profile: Profile,
    /// Explicit layer sizes; overrides `profile`.
    model: Option<ModelConfig>,
    train: TrainConfig,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("invalid JSON in {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("cannot write {}", path.display()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Analyze {
            manifest,
            model,
            detections,
            segmentation,
            out,
            workers,
            two_stage,
            config,
        } => {
            let analysis: AnalysisConfig = match config {
                Some(p) => read_json(&p)?,
                None => AnalysisConfig::default(),
            };
            analysis.validate()?;
            let manifests = io::read_manifests(&manifest)?;
            let frames = pipeline::frames_from_manifests(&manifests, &io::base_dir(&manifest))?;
            let model = io::load_model(&model)?;
            let detections = DetectionTable::from_sidecar(&detections)?;
            let segmentation: Box<dyn SegmentationProvider> = match segmentation {
                Some(p) => Box::new(SegmentationTable::from_sidecar(&p)?),
                None => Box::new(NoSegmentation),
            };
            let options = RunOptions {
                workers,
                two_stage: two_stage.then(|| out.with_extension("segmentation.jsonl")),
                analysis,
            };
            let file = fs::File::create(&out).with_context(|| format!("cannot create {}", out.display()))?;
            let mut sink = BufWriter::new(file);
            let summary = pipeline::run(&frames, &detections, segmentation.as_ref(), &model, &mut sink, &options)?;
            println!("{}", serde_json::to_string(&summary)?);
            if summary.skipped > 0 {
                log::warn!("{} of {} frames skipped", summary.skipped, summary.frames);
            }
            Ok(())
        }
        Command::Train {
            dataset,
            task_pair,
            config,
            out,
            init,
            split,
            log: log_path,
        } => {
            let pair = TaskPair::from(task_pair);
            let settings: TrainSettings = match config {
                Some(p) => read_json(&p)?,
                None => TrainSettings::default(),
            };
            let mut model = match init {
                Some(p) => io::load_model(&p)?,
                None => {
                    let shape = settings.model.unwrap_or(match settings.profile {
                        Profile::Desk => ModelConfig::desk(),
                        Profile::Full => ModelConfig::full(),
                    });
                    MultiNetModel::new(shape, settings.train.seed)?
                }
            };
            let samples = load_samples(&dataset, split, pair)?;
            log::info!("training {} on {} samples", pair.name(), samples.len());
            let losses = multinet::train_pair(&mut model, pair, &samples, &settings.train)?;
            for (epoch, loss) in losses.iter().enumerate() {
                log::debug!("epoch {}: loss {loss:.6}", epoch + 1);
            }
            if let Some(last) = losses.last() {
                log::info!("final epoch loss {last:.6}");
            }
            io::save_model(&out, &model)?;
            if let Some(p) = log_path {
                write_json(&p, &losses)?;
            }
            Ok(())
        }
        Command::Eval {
            model,
            dataset,
            report,
            json,
            split,
        } => {
            let model = io::load_model(&model)?;
            let evaluation = evaluate(&model, &dataset, split)?;
            let rows: Vec<(&str, &ClassReport)> =
                evaluation.iter().map(|t| (t.task.title(), &t.report)).collect();
            let table = metrics::render_table(&rows);
            fs::write(&report, &table).with_context(|| format!("cannot write {}", report.display()))?;
            print!("{table}");
            if let Some(p) = json {
                write_json(&p, &evaluation)?;
            }
            Ok(())
        }
        Command::Sample {
            manifest,
            out,
            fractions,
            seed,
        } => {
            let fractions: [f64; 3] = fractions
                .try_into()
                .map_err(|_| anyhow::anyhow!("--fractions needs three values"))?;
            let mut records = Vec::new();
            for m in io::read_manifests(&manifest)? {
                records.extend(dataset::build_records(&m)?);
            }
            let records = dataset::split_records(records, fractions, seed)?;
            let summary = summarize(&records);
            io::write_records(&out, &records, &summary)?;
            for row in &summary {
                println!(
                    "{:<16} classes {:>2}  total {:>6}  train {:>6}  val {:>6}  test {:>6}",
                    row.task.name(),
                    row.classes,
                    row.total,
                    row.train,
                    row.val,
                    row.test
                );
            }
            for task in Task::ALL {
                match class_balance(&records, task) {
                    Ok(b) => log::info!("{} class counts {:?}, ratio {:.2}", task.name(), b.counts, b.ratio),
                    Err(e) => log::warn!("{}: {e}", task.name()),
                }
            }
            Ok(())
        }
        Command::Bench {
            frames,
            model,
            seed,
            width,
            height,
        } => {
            let model = io::load_model(&model)?;
            let stats = pipeline::bench(&model, frames, seed, (width, height))?;
            let mut out = std::io::stdout().lock();
            writeln!(out, "{}", serde_json::to_string(&stats)?)?;
            writeln!(
                out,
                "{:.2} fps ({} the {} fps sampling rate)",
                stats.fps,
                if stats.meets_sampling_rate { "meets" } else { "below" },
                pipeline::SAMPLING_RATE_FPS
            )?;
            Ok(())
        }
    }
}

fn selected_records(dataset: &Path, split: SplitArg) -> Result<Vec<FrameRecord>> {
    let (records, _) = io::read_records(dataset)?;
    let records: Vec<FrameRecord> = records.into_iter().filter(|r| split.keeps(r.split)).collect();
    if records.is_empty() {
        bail!("{}: no records in the selected split", dataset.display());
    }
    Ok(records)
}

/// Records carrying both labels of the pair, with their images loaded.
fn load_samples(dataset: &Path, split: SplitArg, pair: TaskPair) -> Result<Vec<TrainingSample>> {
    let base = io::base_dir(dataset);
    let records = selected_records(dataset, split)?;
    let total = records.len();
    let mut samples = Vec::new();
    for r in records {
        if pair.tasks().iter().any(|&t| r.labels.get(t).is_none()) {
            continue;
        }
        let image = io::load_image(&io::resolve(&base, &r.image))
            .with_context(|| format!("frame {}", pipeline::frame_id(&r.video_id, r.frame_index)))?;
        samples.push(TrainingSample { image, labels: r.labels });
    }
    if samples.len() < total {
        log::info!(
            "{} of {total} records lack {} labels and are not used",
            total - samples.len(),
            pair.name()
        );
    }
    Ok(samples)
}

#[derive(Serialize)]
struct TaskEvaluation {
    task: Task,
    report: ClassReport,
    confusion: Vec<Vec<u64>>,
}

fn evaluate(model: &MultiNetModel, dataset: &Path, split: SplitArg) -> Result<Vec<TaskEvaluation>> {
    let base = io::base_dir(dataset);
    let mut matrices: Vec<ConfusionMatrix> = Task::ALL
        .iter()
        .map(|t| ConfusionMatrix::zeros(t.class_names()))
        .collect::<Result<_, _>>()?;
    for r in selected_records(dataset, split)? {
        let image = io::load_image(&io::resolve(&base, &r.image))
            .with_context(|| format!("frame {}", pipeline::frame_id(&r.video_id, r.frame_index)))?;
        let predicted = model.classify(&image)?.labels.indices();
        for (i, task) in Task::ALL.into_iter().enumerate() {
            if let Some(truth) = r.labels.get(task) {
                matrices[i].record(truth, predicted[i])?;
            }
        }
    }
    Ok(Task::ALL
        .into_iter()
        .zip(matrices)
        .filter(|(_, m)| m.total() > 0)
        .map(|(task, m)| TaskEvaluation {
            task,
            report: metrics::report(&m),
            confusion: m.rows().map(<[u64]>::to_vec).collect(),
        })
        .collect())
}
