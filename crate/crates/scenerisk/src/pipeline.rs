//! Per-frame risk analysis, batch runs over manifests, and the throughput
//! benchmark.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use scenerisk_core::dataset::{sample_frames, VideoManifest};
use scenerisk_core::geometry::{nearest_vehicle, roi_for_cells, GridCells};
use scenerisk_core::multinet::MultiNetModel;
use scenerisk_core::nn::Tensor;
use scenerisk_core::risk::{detect_risky_pedestrians, lane_relation, DrivableArea, LaneRelation, PedestrianAssessment};
use scenerisk_core::{CameraModel, Detection, HeightTable, ObjectClass, PixelBox, SceneLabels, Vertex};

use crate::io;
use crate::providers::{DetectionProvider, SegmentationProvider, SegmentationTable};

/// Frames per second kept from the source video by the sampling rule.
pub const SAMPLING_RATE_FPS: f64 = 5.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub camera: CameraModel,
    pub heights: HeightTable,
    pub grid: GridCells,
}

impl AnalysisConfig {
    /// Checks values that may come from a hand-written config file.
    pub fn validate(&self) -> Result<()> {
        CameraModel::new(self.camera.focal_length_inches(), self.camera.pixels_per_inch())?;
        self.heights.validate()?;
        roi_for_cells(8, 8, self.grid)?;
        Ok(())
    }
}

/// Wall time of each stage of [`analyze_frame`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub classification_ms: f64,
    pub detection_ms: f64,
    pub segmentation_ms: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleReport {
    /// Index into the frame's detection list.
    pub index: usize,
    pub distance: f64,
    /// Absent when the frame has no segmentation.
    pub lane_relation: Option<LaneRelation>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub frame_id: String,
    pub labels: SceneLabels,
    pub pedestrians: Vec<PedestrianAssessment>,
    /// Set when no drivable area was available for the frame.
    pub pedestrian_analysis_skipped: bool,
    pub nearest_vehicle: Option<VehicleReport>,
    pub timing: StageTiming,
}

impl RiskReport {
    /// The report with timing zeroed, for comparing runs.
    pub fn without_timing(&self) -> RiskReport {
        RiskReport {
            timing: StageTiming::default(),
            ..self.clone()
        }
    }
}

fn millis(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

/// Classifies the frame and runs the geometric risk analysis on its
/// detections and lanes.
pub fn analyze_frame(
    frame_id: &str,
    image: &Tensor,
    detections: &[Detection],
    area: Option<&DrivableArea>,
    model: &MultiNetModel,
    config: &AnalysisConfig,
) -> Result<RiskReport> {
    let fail = || format!("frame {frame_id}");
    let &[height, width, _] = image.shape() else {
        bail!("frame {frame_id}: expected an HxWx3 image, got {:?}", image.shape());
    };
    let (width, height) = (width as u32, height as u32);

    let start = Instant::now();
    let labels = model.classify(image).with_context(fail)?.labels;
    let classification_ms = millis(start);

    let start = Instant::now();
    if let Some(d) = detections.iter().find(|d| !d.bbox.fits_frame(width, height)) {
        bail!("frame {frame_id}: detection {:?} outside the {width}x{height} frame", d.bbox);
    }
    let roi = roi_for_cells(width, height, config.grid).with_context(fail)?;
    let nearest = nearest_vehicle(detections, &roi, &config.heights, &config.camera).map(|n| VehicleReport {
        index: n.index,
        distance: n.distance,
        lane_relation: area.map(|a| lane_relation(&detections[n.index].bbox, a)),
    });
    let detection_ms = millis(start);

    let start = Instant::now();
    let pedestrians = match area {
        Some(a) => {
            if !a.fits_frame(width, height) {
                bail!("frame {frame_id}: lane polygon outside the {width}x{height} frame");
            }
            detect_risky_pedestrians(detections, a, &config.heights, &config.camera).with_context(fail)?
        }
        None => Vec::new(),
    };
    let segmentation_ms = millis(start);

    Ok(RiskReport {
        frame_id: frame_id.to_owned(),
        labels,
        pedestrians,
        pedestrian_analysis_skipped: area.is_none(),
        nearest_vehicle: nearest,
        timing: StageTiming {
            classification_ms,
            detection_ms,
            segmentation_ms,
        },
    })
}

/// A sampled frame and where its image lives.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrameRef {
    pub frame_id: String,
    pub image: PathBuf,
}

pub fn frame_id(video_id: &str, frame_index: u64) -> String {
    format!("{video_id}/{frame_index}")
}

/// Sampled frames of every video in manifest order. Relative image paths
/// are resolved against `base`.
pub fn frames_from_manifests(manifests: &[VideoManifest], base: &Path) -> Result<Vec<FrameRef>> {
    let mut frames = Vec::new();
    for m in manifests {
        for index in sample_frames(m.frame_count) {
            let path = m.frame_path(index).with_context(|| format!("video {}", m.video_id))?;
            frames.push(FrameRef {
                frame_id: frame_id(&m.video_id, index),
                image: io::resolve(base, &path),
            });
        }
    }
    Ok(frames)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOptions {
    /// Worker threads for the analysis pass; at least one is used.
    pub workers: usize,
    /// When set, segmentation is fetched for every frame first and
    /// persisted to this file, then read back for the analysis pass.
    pub two_stage: Option<PathBuf>,
    pub analysis: AnalysisConfig,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            workers: 1,
            two_stage: None,
            analysis: AnalysisConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub frames: usize,
    pub reports: usize,
    /// Frames whose image could not be read.
    pub skipped: usize,
    pub mean_timing: StageTiming,
    pub wall_seconds: f64,
    /// Reports per wall-clock second; `None` when nothing was processed.
    pub fps: Option<f64>,
}

pub fn effective_fps(frames: usize, seconds: f64) -> Option<f64> {
    (frames > 0 && seconds > 0.0).then(|| frames as f64 / seconds)
}

enum Outcome {
    Report(Box<RiskReport>),
    Skipped,
}

/// Analyzes every frame and writes one JSON report per line to `sink`, in
/// frame order. Frames whose image cannot be read are skipped with a
/// warning; any other failure aborts the run.
pub fn run(
    frames: &[FrameRef],
    detections: &dyn DetectionProvider,
    segmentation: &dyn SegmentationProvider,
    model: &MultiNetModel,
    sink: &mut dyn Write,
    options: &RunOptions,
) -> Result<RunSummary> {
    let started = Instant::now();
    let staged;
    let segmentation: &dyn SegmentationProvider = match &options.two_stage {
        Some(path) => {
            let mut table = SegmentationTable::new();
            for f in frames {
                if let Some(area) = segmentation.drivable_area(&f.frame_id)? {
                    table.insert(f.frame_id.clone(), area);
                }
            }
            let ids: Vec<String> = frames.iter().map(|f| f.frame_id.clone()).collect();
            io::write_jsonl(path, &table.to_lines(&ids))?;
            log::info!("segmentation pass written to {}", path.display());
            staged = SegmentationTable::from_sidecar(path)?;
            &staged
        }
        None => segmentation,
    };

    let analyze = |i: usize| -> Result<Outcome> {
        let frame = &frames[i];
        let image = match io::load_image(&frame.image) {
            Ok(image) => image,
            Err(e) => {
                log::warn!("skipping frame {}: {e:#}", frame.frame_id);
                return Ok(Outcome::Skipped);
            }
        };
        let dets = detections
            .detections(&frame.frame_id)
            .with_context(|| format!("detection provider failed on frame {}", frame.frame_id))?;
        let area = segmentation
            .drivable_area(&frame.frame_id)
            .with_context(|| format!("segmentation provider failed on frame {}", frame.frame_id))?;
        let report = analyze_frame(&frame.frame_id, &image, &dets, area.as_ref(), model, &options.analysis)?;
        Ok(Outcome::Report(Box::new(report)))
    };

    let mut summary = RunSummary {
        frames: frames.len(),
        reports: 0,
        skipped: 0,
        mean_timing: StageTiming::default(),
        wall_seconds: 0.0,
        fps: None,
    };
    let mut totals = StageTiming::default();
    for_each_ordered(frames.len(), options.workers, analyze, |outcome| {
        match outcome {
            Outcome::Report(report) => {
                serde_json::to_writer(&mut *sink, &report)?;
                sink.write_all(b"\n")?;
                summary.reports += 1;
                totals.classification_ms += report.timing.classification_ms;
                totals.detection_ms += report.timing.detection_ms;
                totals.segmentation_ms += report.timing.segmentation_ms;
            }
            Outcome::Skipped => summary.skipped += 1,
        }
        Ok(())
    })?;
    sink.flush()?;

    if summary.reports > 0 {
        let n = summary.reports as f64;
        summary.mean_timing = StageTiming {
            classification_ms: totals.classification_ms / n,
            detection_ms: totals.detection_ms / n,
            segmentation_ms: totals.segmentation_ms / n,
        };
    }
    summary.wall_seconds = started.elapsed().as_secs_f64();
    summary.fps = effective_fps(summary.reports, summary.wall_seconds);
    Ok(summary)
}

/// Runs `work` on `0..n` with up to `workers` threads and hands results to
/// `emit` in index order. Stops at the first error.
fn for_each_ordered<T: Send>(
    n: usize,
    workers: usize,
    work: impl Fn(usize) -> Result<T> + Sync,
    mut emit: impl FnMut(T) -> Result<()>,
) -> Result<()> {
    let workers = workers.clamp(1, n.max(1));
    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    std::thread::scope(|scope| {
        let (tx, rx) = mpsc::sync_channel::<(usize, Result<T>)>(workers * 2);
        for _ in 0..workers {
            let tx = tx.clone();
            let (next, abort, work) = (&next, &abort, &work);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n || abort.load(Ordering::Relaxed) {
                    break;
                }
                if tx.send((i, work(i))).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        let mut pending = BTreeMap::new();
        let mut want = 0;
        let result = (|| {
            for (i, outcome) in &rx {
                pending.insert(i, outcome?);
                while let Some(item) = pending.remove(&want) {
                    emit(item)?;
                    want += 1;
                }
            }
            Ok(())
        })();
        if result.is_err() {
            abort.store(true, Ordering::Relaxed);
        }
        drop(rx);
        result
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchStats {
    pub frames: usize,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub p95_ms: f64,
    /// Frames over the summed per-frame latency.
    pub fps: f64,
    /// Whether `fps` reaches the 5 fps sampling rate.
    pub meets_sampling_rate: bool,
}

/// Statistics of per-frame latencies; p95 uses the nearest-rank rule.
pub fn latency_stats(latencies_ms: &[f64]) -> Option<BenchStats> {
    if latencies_ms.is_empty() {
        return None;
    }
    let n = latencies_ms.len();
    let mut sorted = latencies_ms.to_vec();
    sorted.sort_by(f64::total_cmp);
    let total: f64 = sorted.iter().sum();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    };
    let rank = ((0.95 * n as f64).ceil() as usize).max(1);
    let fps = if total > 0.0 { n as f64 / (total / 1e3) } else { f64::INFINITY };
    Some(BenchStats {
        frames: n,
        mean_ms: total / n as f64,
        median_ms: median,
        p95_ms: sorted[rank - 1],
        fps,
        meets_sampling_rate: fps >= SAMPLING_RATE_FPS,
    })
}

/// A deterministic synthetic frame with detections and lanes.
pub struct SyntheticFrame {
    pub image: Tensor,
    pub detections: Vec<Detection>,
    pub area: DrivableArea,
}

pub fn synthetic_frame(rng: &mut ChaCha8Rng, width: u32, height: u32) -> SyntheticFrame {
    let n = (width * height * 3) as usize;
    let image = Tensor::new(
        vec![height as usize, width as usize, 3],
        (0..n).map(|_| rng.gen::<f32>()).collect(),
    )
    .expect("shape matches buffer");
    let classes = [ObjectClass::Car, ObjectClass::Suv, ObjectClass::Van, ObjectClass::Pedestrian];
    let detections = (0..rng.gen_range(0..6))
        .map(|_| {
            let x0 = rng.gen_range(0..width - 1);
            let y0 = rng.gen_range(0..height - 1);
            let bbox = PixelBox::new(x0, y0, rng.gen_range(x0 + 1..=width), rng.gen_range(y0 + 1..=height))
                .expect("non-empty box");
            let class = classes[rng.gen_range(0..classes.len())];
            Detection::new(class, bbox, rng.gen()).expect("confidence in range")
        })
        .collect();
    let (w, h) = (width, height);
    let area = DrivableArea::new(
        vec![Vertex(w / 3, h / 2), Vertex(2 * w / 3, h / 2), Vertex(2 * w / 3, h), Vertex(w / 3, h)],
        vec![vec![Vertex(0, h / 2), Vertex(w / 3, h / 2), Vertex(w / 3, h)]],
    )
    .expect("frame is large enough");
    SyntheticFrame {
        image,
        detections,
        area,
    }
}

/// Times [`analyze_frame`] on `n_frames` synthetic frames. The workload is
/// fixed by `seed`; frame generation is not timed.
pub fn bench(model: &MultiNetModel, n_frames: usize, seed: u64, frame_size: (u32, u32)) -> Result<BenchStats> {
    if n_frames == 0 {
        bail!("bench needs at least one frame");
    }
    let (width, height) = frame_size;
    if width < 8 || height < 8 {
        bail!("bench frames must be at least 8x8");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let config = AnalysisConfig::default();
    let mut latencies = Vec::with_capacity(n_frames);
    for i in 0..n_frames {
        let frame = synthetic_frame(&mut rng, width, height);
        let start = Instant::now();
        analyze_frame(
            &format!("bench/{i}"),
            &frame.image,
            &frame.detections,
            Some(&frame.area),
            model,
            &config,
        )?;
        latencies.push(millis(start));
    }
    Ok(latency_stats(&latencies).expect("at least one frame"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use scenerisk_core::multinet::ModelConfig;

    #[test]
    fn fps_arithmetic() {
        assert_eq!(effective_fps(50, 10.0), Some(5.0));
        assert_eq!(effective_fps(0, 3.0), None);
    }

    #[test]
    fn single_latency_stats() {
        let s = latency_stats(&[12.5]).unwrap();
        assert_eq!((s.mean_ms, s.median_ms, s.p95_ms), (12.5, 12.5, 12.5));
        assert!((s.fps - 80.0).abs() < 1e-9);
        assert!(latency_stats(&[]).is_none());
    }

    #[test]
    fn stats_are_consistent() {
        let lat: Vec<f64> = (1..=20).map(f64::from).collect();
        let s = latency_stats(&lat).unwrap();
        assert_eq!(s.median_ms, 10.5);
        assert_eq!(s.p95_ms, 19.0);
        assert!((s.fps - 1e3 / s.mean_ms).abs() < 1e-6);
    }

    #[test]
    fn ordered_pool_keeps_order_and_stops_on_error() {
        let mut seen = Vec::new();
        for_each_ordered(100, 4, |i| Ok(i * 2), |v| {
            seen.push(v);
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, (0..100).map(|i| i * 2).collect::<Vec<_>>());

        let mut emitted = 0;
        let err = for_each_ordered(
            100,
            3,
            |i| if i == 40 { bail!("boom at {i}") } else { Ok(i) },
            |_| {
                emitted += 1;
                Ok(())
            },
        )
        .unwrap_err();
        assert!(err.to_string().contains("boom at 40"));
        assert!(emitted <= 40);
    }

    #[test]
    fn empty_frame_list() {
        let model = MultiNetModel::zeroed(ModelConfig::desk(), 0).unwrap();
        let mut out = Vec::new();
        let s = run(
            &[],
            &crate::providers::DetectionTable::new(),
            &crate::providers::NoSegmentation,
            &model,
            &mut out,
            &RunOptions::default(),
        )
        .unwrap();
        assert_eq!((s.frames, s.reports, s.fps), (0, 0, None));
        assert!(out.is_empty());
    }
}
