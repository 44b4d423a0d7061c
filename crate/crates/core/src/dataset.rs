//! Labeled frame datasets from video manifests.
//!
//! Frames are sampled with period 6 (keep one, skip five). Crash videos are
//! labeled by temporal windows around the impact time: `crash` from impact
//! on, `pre_crash` for the 2 s before it, `no_crash` for the 3 s before that.
//! Frames earlier than that are not part of the dataset. Splits are made per
//! video so near-identical neighbouring frames never straddle two splits.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::labels::{CrashLikelihood, RoadFunction, SceneLabels, Task, TimeOfDay, Weather};

/// Keep one frame, skip five.
pub const SAMPLING_PERIOD: u64 = 6;
/// Length of the pre-crash window before impact, seconds.
pub const PRE_CRASH_SECONDS: f64 = 2.0;
/// Length of the no-crash window before the pre-crash window, seconds.
pub const NO_CRASH_SECONDS: f64 = 3.0;

#[derive(Clone, Debug, PartialEq)]
pub enum DatasetError {
    InvalidFps { video_id: String, fps: f64 },
    CrashTimeOutOfRange { video_id: String, crash_time: f64, duration: f64 },
    MissingCrashTime(String),
    BadTemplate { template: String, reason: &'static str },
    InvalidFractions([f64; 3]),
    NoLabeledRecords(Task),
    /// A class of the task has no samples, so the balance ratio is undefined.
    EmptyClass { task: Task, class: &'static str },
}

impl fmt::Display for DatasetError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetError::InvalidFps { video_id, fps } => {
                write!(f, "video {video_id}: frame rate {fps} must be positive")
            }
            DatasetError::CrashTimeOutOfRange {
                video_id,
                crash_time,
                duration,
            } => write!(
                f,
                "video {video_id}: crash time {crash_time} s outside [0, {duration}] s"
            ),
            DatasetError::MissingCrashTime(id) => write!(f, "video {id} has no crash time"),
            DatasetError::BadTemplate { template, reason } => {
                write!(f, "frame path template {template:?}: {reason}")
            }
            DatasetError::InvalidFractions(fr) => write!(
                f,
                "split fractions {fr:?} must be non-negative and sum to 1"
            ),
            DatasetError::NoLabeledRecords(task) => write!(f, "no records labeled for {task}"),
            DatasetError::EmptyClass { task, class } => {
                write!(f, "{task} class {class} has no samples; balance ratio undefined")
            }
        }
    }
}

impl core::error::Error for DatasetError {}

/// One source video.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoManifest {
    pub video_id: String,
    pub fps: f64,
    pub frame_count: u64,
    /// Moment of impact in seconds from the start of the video.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crash_time: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub road_function: Option<RoadFunction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weather: Option<Weather>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_of_day: Option<TimeOfDay>,
    /// Image path pattern with `{video_id}` and `{frame}` / `{frame:0N}`
    /// placeholders.
    pub frame_path_template: String,
}

impl VideoManifest {
    pub fn duration(&self) -> f64 {
        self.frame_count as f64 / self.fps
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(DatasetError::InvalidFps {
                video_id: self.video_id.clone(),
                fps: self.fps,
            });
        }
        if let Some(t) = self.crash_time {
            let duration = self.duration();
            if !(0.0..=duration).contains(&t) {
                return Err(DatasetError::CrashTimeOutOfRange {
                    video_id: self.video_id.clone(),
                    crash_time: t,
                    duration,
                });
            }
        }
        render_frame_path(&self.frame_path_template, &self.video_id, 0)?;
        Ok(())
    }

    pub fn timestamp(&self, frame_index: u64) -> f64 {
        frame_index as f64 / self.fps
    }

    pub fn frame_path(&self, frame_index: u64) -> Result<String, DatasetError> {
        render_frame_path(&self.frame_path_template, &self.video_id, frame_index)
    }
}

/// Expands `{video_id}`, `{frame}` and zero-padded `{frame:0N}`.
pub fn render_frame_path(template: &str, video_id: &str, frame_index: u64) -> Result<String, DatasetError> {
    let bad = |reason| DatasetError::BadTemplate {
        template: template.into(),
        reason,
    };
    let mut out = String::with_capacity(template.len() + 8);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let close = rest[open..].find('}').ok_or_else(|| bad("unclosed placeholder"))? + open;
        match &rest[open + 1..close] {
            "video_id" => out.push_str(video_id),
            "frame" => out.push_str(&format!("{frame_index}")),
            spec => {
                let width = spec
                    .strip_prefix("frame:0")
                    .and_then(|w| w.parse::<usize>().ok())
                    .ok_or_else(|| bad("unknown placeholder"))?;
                out.push_str(&format!("{frame_index:0width$}"));
            }
        }
        rest = &rest[close + 1..];
    }
    if rest.contains('}') {
        return Err(bad("unmatched closing brace"));
    }
    out.push_str(rest);
    Ok(out)
}

/// Indices kept by the 1-in-6 sampling rule.
pub fn sample_frames(frame_count: u64) -> Vec<u64> {
    (0..frame_count).step_by(SAMPLING_PERIOD as usize).collect()
}

/// Crash label of a frame at time `t`; `None` before the no-crash window.
pub fn crash_label_at(t: f64, crash_time: f64) -> Option<CrashLikelihood> {
    if t >= crash_time {
        Some(CrashLikelihood::Crash)
    } else if t >= crash_time - PRE_CRASH_SECONDS {
        Some(CrashLikelihood::PreCrash)
    } else if t >= crash_time - PRE_CRASH_SECONDS - NO_CRASH_SECONDS {
        Some(CrashLikelihood::NoCrash)
    } else {
        None
    }
}

/// Crash label of every frame of the video, indexed by frame.
pub fn label_crash_windows(manifest: &VideoManifest) -> Result<Vec<Option<CrashLikelihood>>, DatasetError> {
    manifest.validate()?;
    let crash_time = manifest
        .crash_time
        .ok_or_else(|| DatasetError::MissingCrashTime(manifest.video_id.clone()))?;
    Ok((0..manifest.frame_count)
        .map(|i| crash_label_at(manifest.timestamp(i), crash_time))
        .collect())
}

/// Labels of a frame; any task may be unlabeled.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameLabels {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crash_likelihood: Option<CrashLikelihood>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub road_function: Option<RoadFunction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weather: Option<Weather>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_of_day: Option<TimeOfDay>,
}

impl FrameLabels {
    /// Class index for the task, if labeled.
    pub fn get(&self, task: Task) -> Option<usize> {
        match task {
            Task::CrashLikelihood => self.crash_likelihood.map(CrashLikelihood::index),
            Task::RoadFunction => self.road_function.map(RoadFunction::index),
            Task::Weather => self.weather.map(Weather::index),
            Task::TimeOfDay => self.time_of_day.map(TimeOfDay::index),
        }
    }
}

impl From<SceneLabels> for FrameLabels {
    fn from(l: SceneLabels) -> Self {
        FrameLabels {
            crash_likelihood: Some(l.crash_likelihood),
            road_function: Some(l.road_function),
            weather: Some(l.weather),
            time_of_day: Some(l.time_of_day),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
    #[default]
    Unassigned,
}

impl Split {
    pub const ASSIGNED: [Split; 3] = [Split::Train, Split::Val, Split::Test];
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub video_id: String,
    pub frame_index: u64,
    pub timestamp: f64,
    pub image: String,
    pub labels: FrameLabels,
    #[serde(default)]
    pub split: Split,
}

/// Sampled, labeled frames of one video. Crash videos keep only frames
/// inside the labeling windows; other videos keep every sampled frame with
/// no crash label.
pub fn build_records(manifest: &VideoManifest) -> Result<Vec<FrameRecord>, DatasetError> {
    manifest.validate()?;
    let mut records = Vec::new();
    for frame_index in sample_frames(manifest.frame_count) {
        let timestamp = manifest.timestamp(frame_index);
        let crash_likelihood = match manifest.crash_time {
            Some(crash_time) => match crash_label_at(timestamp, crash_time) {
                Some(label) => Some(label),
                None => continue,
            },
            None => None,
        };
        records.push(FrameRecord {
            video_id: manifest.video_id.clone(),
            frame_index,
            timestamp,
            image: manifest.frame_path(frame_index)?,
            labels: FrameLabels {
                crash_likelihood,
                road_function: manifest.road_function,
                weather: manifest.weather,
                time_of_day: manifest.time_of_day,
            },
            split: Split::Unassigned,
        });
    }
    Ok(records)
}

/// Largest-remainder apportionment of `total` items by `fractions`; ties in
/// the remainders go to the earlier split.
pub fn apportion(total: usize, fractions: [f64; 3]) -> [usize; 3] {
    let raw = fractions.map(|f| f * total as f64);
    let mut counts = raw.map(|r| libm::floor(r) as usize);
    let assigned: usize = counts.iter().sum();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let ra = raw[a] - counts[a] as f64;
        let rb = raw[b] - counts[b] as f64;
        rb.partial_cmp(&ra).unwrap_or(core::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    for &i in order.iter().cycle().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Assigns train/val/test splits by video. Target frame counts come from
/// [`apportion`]; videos are visited in a seeded random order and each goes
/// to the split furthest below its target. Record order is preserved.
pub fn split_records(
    mut records: Vec<FrameRecord>,
    fractions: [f64; 3],
    seed: u64,
) -> Result<Vec<FrameRecord>, DatasetError> {
    let sum: f64 = fractions.iter().sum();
    if fractions.iter().any(|f| !f.is_finite() || *f < 0.0) || (sum - 1.0).abs() > 1e-9 {
        return Err(DatasetError::InvalidFractions(fractions));
    }
    let mut sizes: BTreeMap<&str, usize> = BTreeMap::new();
    let mut videos: Vec<&str> = Vec::new();
    for r in &records {
        let count = sizes.entry(r.video_id.as_str()).or_insert(0);
        if *count == 0 {
            videos.push(r.video_id.as_str());
        }
        *count += 1;
    }
    let targets = apportion(records.len(), fractions);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    videos.shuffle(&mut rng);
    let mut filled = [0usize; 3];
    let mut assignment: BTreeMap<String, Split> = BTreeMap::new();
    for video in videos {
        let deficit = |i: usize| targets[i] as i64 - filled[i] as i64;
        let best = (0..3).fold(0, |best, i| if deficit(i) > deficit(best) { i } else { best });
        filled[best] += sizes[video];
        assignment.insert(video.into(), Split::ASSIGNED[best]);
    }
    for r in &mut records {
        r.split = assignment[&r.video_id];
    }
    Ok(records)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassBalance {
    pub task: Task,
    pub counts: Vec<usize>,
    /// Largest class count over the smallest.
    pub ratio: f64,
}

pub fn class_balance(records: &[FrameRecord], task: Task) -> Result<ClassBalance, DatasetError> {
    let mut counts = vec![0usize; task.num_classes()];
    for class in records.iter().filter_map(|r| r.labels.get(task)) {
        counts[class] += 1;
    }
    balance_of(task, counts)
}

/// Balance ratio of explicit per-class counts.
pub fn balance_of(task: Task, counts: Vec<usize>) -> Result<ClassBalance, DatasetError> {
    if counts.iter().all(|&c| c == 0) {
        return Err(DatasetError::NoLabeledRecords(task));
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(DatasetError::EmptyClass {
            task,
            class: task.class_names()[empty],
        });
    }
    let max = *counts.iter().max().expect("non-empty");
    let min = *counts.iter().min().expect("non-empty");
    Ok(ClassBalance {
        task,
        ratio: max as f64 / min as f64,
        counts,
    })
}

/// Per-task dataset size, in the layout of a dataset summary table.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub task: Task,
    pub classes: usize,
    pub total: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

pub fn summarize(records: &[FrameRecord]) -> Vec<SummaryRow> {
    Task::ALL
        .iter()
        .map(|&task| {
            let mut row = SummaryRow {
                task,
                classes: task.num_classes(),
                total: 0,
                train: 0,
                val: 0,
                test: 0,
            };
            for r in records.iter().filter(|r| r.labels.get(task).is_some()) {
                row.total += 1;
                match r.split {
                    Split::Train => row.train += 1,
                    Split::Val => row.val += 1,
                    Split::Test => row.test += 1,
                    Split::Unassigned => {}
                }
            }
            row
        })
        .collect()
}
