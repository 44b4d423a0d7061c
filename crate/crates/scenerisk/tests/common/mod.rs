//! Fixtures shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scenerisk::io::{self, DetectionLine};
use scenerisk_core::dataset::{FrameLabels, VideoManifest};
use scenerisk_core::multinet::{ModelConfig, MultiNetModel, TrainingSample};
use scenerisk_core::nn::Tensor;
use scenerisk_core::segmentation::LaneMask;
use scenerisk_core::{CrashLikelihood, ObjectClass, RoadFunction, SceneLabels, Task, TimeOfDay, Weather};

/// Zero-weight desk model whose output biases peak at `labels`.
pub fn stub_model(labels: SceneLabels) -> MultiNetModel {
    let mut file = MultiNetModel::zeroed(ModelConfig::desk(), 0).unwrap().to_weight_file();
    let heads = [
        "network1.head0.4.bias",
        "network1.head1.4.bias",
        "network2.head0.2.bias",
        "network2.head1.2.bias",
    ];
    for (name, class) in heads.iter().zip(labels.indices()) {
        let (_, t) = file.tensors.iter_mut().find(|(n, _)| n == name).unwrap();
        t.data_mut()[class] = 3.0;
    }
    MultiNetModel::from_weight_file(file).unwrap()
}

pub fn noise_image(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Tensor {
    Tensor::new(vec![h, w, 3], (0..h * w * 3).map(|_| rng.gen::<f32>()).collect()).unwrap()
}

pub struct Corpus {
    pub dir: PathBuf,
    pub manifest: PathBuf,
    pub detections: PathBuf,
    pub segmentation: PathBuf,
    pub frames: usize,
}

pub const CORPUS_WIDTH: u32 = 64;
pub const CORPUS_HEIGHT: u32 = 48;

/// `videos` videos of 60 source frames (10 sampled each) with PNG frames,
/// a detection sidecar and a segmentation sidecar mixing polygons, masks
/// and frames without segmentation.
pub fn write_corpus(dir: &Path, videos: usize, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    fs::create_dir_all(dir.join("frames")).unwrap();
    fs::create_dir_all(dir.join("masks")).unwrap();
    let (w, h) = (CORPUS_WIDTH, CORPUS_HEIGHT);
    let mut manifests = Vec::new();
    let mut detections = Vec::new();
    let mut segmentation = Vec::new();
    let mut frames = 0;
    for v in 0..videos {
        let video_id = format!("clip{v:02}");
        manifests.push(VideoManifest {
            video_id: video_id.clone(),
            fps: 30.0,
            frame_count: 60,
            crash_time: (v % 2 == 0).then_some(1.5),
            road_function: Some(RoadFunction::ALL[v % 4]),
            weather: Some(Weather::ALL[v % 5]),
            time_of_day: Some(TimeOfDay::ALL[v % 3]),
            frame_path_template: "frames/{video_id}_{frame:04}.png".into(),
        });
        for index in (0..60).step_by(6) {
            frames += 1;
            let frame_id = format!("{video_id}/{index}");
            let image = noise_image(&mut rng, h as usize, w as usize);
            io::save_image(&dir.join(format!("frames/{video_id}_{index:04}.png")), &image).unwrap();
            for _ in 0..rng.gen_range(0..5) {
                let x0 = rng.gen_range(0..w - 2);
                let y0 = rng.gen_range(0..h - 2);
                let classes = [ObjectClass::Car, ObjectClass::Suv, ObjectClass::Van, ObjectClass::Pedestrian, ObjectClass::Other];
                detections.push(DetectionLine {
                    frame_id: frame_id.clone(),
                    class: classes[rng.gen_range(0..classes.len())],
                    x_min: x0,
                    y_min: y0,
                    x_max: rng.gen_range(x0 + 1..=w),
                    y_max: rng.gen_range(y0 + 1..=h),
                    confidence: rng.gen_range(0.3..1.0),
                });
            }
            match index / 6 % 3 {
                0 => {
                    let mid = rng.gen_range(w / 4..w / 2);
                    segmentation.push(serde_json::json!({
                        "frame_id": frame_id, "lane_kind": "direct",
                        "vertices": [[mid, h / 2], [mid + w / 4, h / 2], [mid + w / 3, h], [mid - w / 8, h]],
                    }));
                    segmentation.push(serde_json::json!({
                        "frame_id": frame_id, "lane_kind": "alternative",
                        "vertices": [[0, h / 2], [mid, h / 2], [mid - w / 8, h], [0, h]],
                    }));
                }
                1 => {
                    let split = rng.gen_range(w / 4..3 * w / 4);
                    let data = (0..h)
                        .flat_map(|y| {
                            (0..w).map(move |x| match (y >= h / 2, x >= split) {
                                (false, _) => 0,
                                (true, true) => 1,
                                (true, false) => 2,
                            })
                        })
                        .collect();
                    let name = format!("masks/{video_id}_{index}.png");
                    io::save_mask(&dir.join(&name), &LaneMask::new(w, h, data).unwrap()).unwrap();
                    segmentation.push(serde_json::json!({ "frame_id": frame_id, "mask": name }));
                }
                _ => {}
            }
        }
    }
    let corpus = Corpus {
        dir: dir.to_path_buf(),
        manifest: dir.join("manifest.jsonl"),
        detections: dir.join("detections.jsonl"),
        segmentation: dir.join("segmentation.jsonl"),
        frames,
    };
    io::write_jsonl(&corpus.manifest, &manifests).unwrap();
    io::write_jsonl(&corpus.detections, &detections).unwrap();
    io::write_jsonl(&corpus.segmentation, &segmentation).unwrap();
    corpus
}

/// Class color of a synthetic sample: each task owns one channel band and
/// each class a distinct level in it, so all four labels are linearly
/// separable from the mean image color.
pub fn color_coded_sample(rng: &mut ChaCha8Rng, labels: SceneLabels, side: usize) -> TrainingSample {
    let idx = labels.indices();
    let level = |task: Task, class: usize| (class as f32 + 0.5) / task.num_classes() as f32;
    let mut data = Vec::with_capacity(side * side * 3);
    for y in 0..side {
        for x in 0..side {
            let quadrant = (y * 2 / side) * 2 + x * 2 / side;
            let task = Task::ALL[quadrant];
            let v = level(task, idx[quadrant]);
            for c in 0..3 {
                let jitter = rng.gen_range(-0.05..0.05);
                let base = if c == quadrant % 3 { v } else { 1.0 - v };
                data.push((base + jitter).clamp(0.0, 1.0));
            }
        }
    }
    TrainingSample {
        image: Tensor::new(vec![side, side, 3], data).unwrap(),
        labels: FrameLabels::from(labels),
    }
}

pub fn random_labels(rng: &mut ChaCha8Rng) -> SceneLabels {
    SceneLabels {
        crash_likelihood: CrashLikelihood::ALL[rng.gen_range(0..3)],
        road_function: RoadFunction::ALL[rng.gen_range(0..4)],
        weather: Weather::ALL[rng.gen_range(0..5)],
        time_of_day: TimeOfDay::ALL[rng.gen_range(0..3)],
    }
}

pub fn separable_dataset(n: usize, seed: u64) -> Vec<TrainingSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let labels = random_labels(&mut rng);
            color_coded_sample(&mut rng, labels, 32)
        })
        .collect()
}
