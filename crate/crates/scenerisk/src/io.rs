//! File formats: JSONL manifests, records, sidecars and reports, PNG
//! frames and masks, and model files.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use scenerisk_core::dataset::{FrameRecord, SummaryRow, VideoManifest};
use scenerisk_core::multinet::MultiNetModel;
use scenerisk_core::nn::Tensor;
use scenerisk_core::segmentation::LaneMask;
use scenerisk_core::{Detection, ObjectClass, PixelBox, Vertex};

/// Parses one JSON value per non-blank line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.with_context(|| format!("cannot read {}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line)
            .with_context(|| format!("{}:{}: invalid record", path.display(), i + 1))?;
        out.push(value);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = create(path)?;
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(file))
}

/// Directory that relative paths inside `file` are resolved against.
pub fn base_dir(file: &Path) -> PathBuf {
    file.parent().map(Path::to_path_buf).unwrap_or_default()
}

pub fn resolve(base: &Path, reference: &str) -> PathBuf {
    let p = Path::new(reference);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn read_manifests(path: &Path) -> Result<Vec<VideoManifest>> {
    let manifests: Vec<VideoManifest> = read_jsonl(path)?;
    for m in &manifests {
        m.validate()
            .with_context(|| format!("{}: video {}", path.display(), m.video_id))?;
    }
    Ok(manifests)
}

/// Last line of a records file.
#[derive(Serialize, Deserialize)]
struct SummaryLine {
    summary: Vec<SummaryRow>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RecordsLine {
    Summary(SummaryLine),
    Frame(Box<FrameRecord>),
}

/// Frame records, one per line, followed by a `{"summary": [...]}` line.
pub fn write_records(path: &Path, records: &[FrameRecord], summary: &[SummaryRow]) -> Result<()> {
    let mut w = create(path)?;
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    serde_json::to_writer(
        &mut w,
        &SummaryLine {
            summary: summary.to_vec(),
        },
    )?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Reads a records file; the summary line is optional.
pub fn read_records(path: &Path) -> Result<(Vec<FrameRecord>, Option<Vec<SummaryRow>>)> {
    let mut records = Vec::new();
    let mut summary = None;
    for line in read_jsonl::<RecordsLine>(path)? {
        match line {
            RecordsLine::Frame(r) if summary.is_none() => records.push(*r),
            RecordsLine::Frame(_) => bail!("{}: frame record after the summary line", path.display()),
            RecordsLine::Summary(s) => summary = Some(s.summary),
        }
    }
    Ok((records, summary))
}

/// One line of a detection sidecar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionLine {
    pub frame_id: String,
    pub class: ObjectClass,
    pub x_min: u32,
    pub y_min: u32,
    pub x_max: u32,
    pub y_max: u32,
    pub confidence: f32,
}

impl DetectionLine {
    pub fn from_detection(frame_id: &str, d: &Detection) -> Self {
        DetectionLine {
            frame_id: frame_id.to_owned(),
            class: d.class,
            x_min: d.bbox.x_min(),
            y_min: d.bbox.y_min(),
            x_max: d.bbox.x_max(),
            y_max: d.bbox.y_max(),
            confidence: d.confidence,
        }
    }

    pub fn to_detection(&self) -> Result<Detection> {
        let bbox = PixelBox::new(self.x_min, self.y_min, self.x_max, self.y_max)
            .with_context(|| format!("frame {}: bad box", self.frame_id))?;
        Detection::new(self.class, bbox, self.confidence).with_context(|| format!("frame {}", self.frame_id))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaneKind {
    Direct,
    Alternative,
}

/// One line of a segmentation sidecar: either a lane polygon or the path
/// of an 8-bit mask PNG (0 background, 1 direct lane, 2 alternative lane).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SegmentationLine {
    Polygon {
        frame_id: String,
        lane_kind: LaneKind,
        vertices: Vec<Vertex>,
    },
    Mask {
        frame_id: String,
        mask: String,
    },
}

impl SegmentationLine {
    pub fn frame_id(&self) -> &str {
        match self {
            SegmentationLine::Polygon { frame_id, .. } | SegmentationLine::Mask { frame_id, .. } => frame_id,
        }
    }
}

/// Loads an RGB frame as an `H x W x 3` tensor scaled to `[0, 1]`.
pub fn load_image(path: &Path) -> Result<Tensor> {
    let img = image::open(path)
        .with_context(|| format!("cannot read image {}", path.display()))?
        .into_rgb8();
    let (w, h) = img.dimensions();
    let data = img.into_raw().into_iter().map(|v| f32::from(v) / 255.0).collect();
    Ok(Tensor::new(vec![h as usize, w as usize, 3], data)?)
}

/// Writes an `H x W x 3` tensor in `[0, 1]` as an RGB PNG.
pub fn save_image(path: &Path, image: &Tensor) -> Result<()> {
    let &[h, w, 3] = image.shape() else {
        bail!("expected an HxWx3 tensor, got {:?}", image.shape());
    };
    let bytes = image
        .data()
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let buffer = image::RgbImage::from_raw(w as u32, h as u32, bytes).expect("buffer matches size");
    buffer
        .save(path)
        .with_context(|| format!("cannot write image {}", path.display()))
}

pub fn load_mask(path: &Path) -> Result<LaneMask> {
    let img = image::open(path)
        .with_context(|| format!("cannot read mask {}", path.display()))?
        .into_luma8();
    let (w, h) = img.dimensions();
    LaneMask::new(w, h, img.into_raw()).with_context(|| format!("bad mask {}", path.display()))
}

pub fn save_mask(path: &Path, mask: &LaneMask) -> Result<()> {
    let buffer = image::GrayImage::from_raw(mask.width(), mask.height(), mask.data().to_vec())
        .expect("buffer matches size");
    buffer
        .save(path)
        .with_context(|| format!("cannot write mask {}", path.display()))
}

pub fn save_model(path: &Path, model: &MultiNetModel) -> Result<()> {
    fs::write(path, model.to_bytes()).with_context(|| format!("cannot write model {}", path.display()))
}

pub fn load_model(path: &Path) -> Result<MultiNetModel> {
    let bytes = fs::read(path).with_context(|| format!("cannot read model {}", path.display()))?;
    MultiNetModel::from_bytes(&bytes).with_context(|| format!("cannot load model {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use scenerisk_core::dataset::{summarize, Split};

    #[test]
    fn records_round_trip_with_summary() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.jsonl");
        let record = FrameRecord {
            video_id: "v1".into(),
            frame_index: 6,
            timestamp: 0.2,
            image: "v1/6.png".into(),
            labels: Default::default(),
            split: Split::Test,
        };
        let summary = summarize(std::slice::from_ref(&record));
        write_records(&path, std::slice::from_ref(&record), &summary).unwrap();
        let (records, read_summary) = read_records(&path).unwrap();
        assert_eq!(records, [record]);
        assert_eq!(read_summary.unwrap(), summary);
    }

    #[test]
    fn sidecar_lines_parse() {
        let d: DetectionLine = serde_json::from_str(
            r#"{"frame_id":"a/0","class":"pedestrian","x_min":1,"y_min":2,"x_max":5,"y_max":9,"confidence":0.8}"#,
        )
        .unwrap();
        assert_eq!(d.to_detection().unwrap().bbox.height(), 7);
        let bad = DetectionLine { x_max: 1, ..d.clone() };
        assert!(bad.to_detection().is_err());

        let p: SegmentationLine =
            serde_json::from_str(r#"{"frame_id":"a/0","lane_kind":"direct","vertices":[[0,0],[4,0],[4,3]]}"#).unwrap();
        assert!(matches!(p, SegmentationLine::Polygon { lane_kind: LaneKind::Direct, .. }));
        let m: SegmentationLine = serde_json::from_str(r#"{"frame_id":"a/6","mask":"m.png"}"#).unwrap();
        assert_eq!(m.frame_id(), "a/6");
    }

    #[test]
    fn image_and_mask_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let data: Vec<f32> = (0..4 * 3 * 3).map(|i| (i * 7 % 256) as f32 / 255.0).collect();
        let img = Tensor::new(vec![4, 3, 3], data).unwrap();
        let path = dir.path().join("f.png");
        save_image(&path, &img).unwrap();
        assert_eq!(load_image(&path).unwrap(), img);

        let mask = LaneMask::new(3, 2, vec![0, 1, 2, 1, 1, 0]).unwrap();
        let path = dir.path().join("m.png");
        save_mask(&path, &mask).unwrap();
        assert_eq!(load_mask(&path).unwrap(), mask);
    }

    #[test]
    fn missing_files_report_their_path() {
        let err = read_manifests(Path::new("/nonexistent/m.jsonl")).unwrap_err();
        assert!(format!("{err:#}").contains("/nonexistent/m.jsonl"));
    }
}
