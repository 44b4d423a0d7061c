//! Sources of per-frame detections and drivable areas.
//!
//! The pipeline only sees the two traits; the table implementations read
//! sidecar files once up front or are filled in memory.

use std::collections::HashMap;
use std::path::Path;

use anyhow::{bail, Context, Result};

use scenerisk_core::risk::DrivableArea;
use scenerisk_core::segmentation::drivable_area_from_mask;
use scenerisk_core::Detection;

use crate::io::{self, DetectionLine, LaneKind, SegmentationLine};

pub trait DetectionProvider: Send + Sync {
    /// Detections of a frame; frames without any give an empty list.
    fn detections(&self, frame_id: &str) -> Result<Vec<Detection>>;
}

pub trait SegmentationProvider: Send + Sync {
    /// Lanes of a frame, or `None` when no segmentation is available.
    fn drivable_area(&self, frame_id: &str) -> Result<Option<DrivableArea>>;
}

#[derive(Clone, Debug, Default)]
pub struct DetectionTable {
    frames: HashMap<String, Vec<Detection>>,
}

impl DetectionTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, frame_id: impl Into<String>, detection: Detection) {
        self.frames.entry(frame_id.into()).or_default().push(detection);
    }

    /// Reads a detection sidecar. Detections keep their file order.
    pub fn from_sidecar(path: &Path) -> Result<Self> {
        let mut table = Self::new();
        for line in io::read_jsonl::<DetectionLine>(path)? {
            let det = line.to_detection().with_context(|| path.display().to_string())?;
            table.insert(line.frame_id, det);
        }
        Ok(table)
    }

    pub fn to_lines(&self, frame_ids: &[String]) -> Vec<DetectionLine> {
        frame_ids
            .iter()
            .flat_map(|id| {
                self.frames
                    .get(id)
                    .into_iter()
                    .flatten()
                    .map(move |d| DetectionLine::from_detection(id, d))
            })
            .collect()
    }
}

impl DetectionProvider for DetectionTable {
    fn detections(&self, frame_id: &str) -> Result<Vec<Detection>> {
        Ok(self.frames.get(frame_id).cloned().unwrap_or_default())
    }
}

#[derive(Clone, Debug, Default)]
pub struct SegmentationTable {
    frames: HashMap<String, DrivableArea>,
}

impl SegmentationTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, frame_id: impl Into<String>, area: DrivableArea) {
        self.frames.insert(frame_id.into(), area);
    }

    /// Reads a segmentation sidecar of polygon records and mask references.
    /// A frame needs exactly one direct lane; mask paths are relative to the
    /// sidecar. Masks without a direct-lane region give no area.
    pub fn from_sidecar(path: &Path) -> Result<Self> {
        let base = io::base_dir(path);
        let mut direct: HashMap<String, Vec<_>> = HashMap::new();
        let mut alternative: HashMap<String, Vec<_>> = HashMap::new();
        let mut order = Vec::new();
        let mut table = Self::new();
        for line in io::read_jsonl::<SegmentationLine>(path)? {
            match line {
                SegmentationLine::Polygon {
                    frame_id,
                    lane_kind,
                    vertices,
                } => {
                    if !direct.contains_key(&frame_id) && !alternative.contains_key(&frame_id) {
                        order.push(frame_id.clone());
                    }
                    let slot = match lane_kind {
                        LaneKind::Direct => &mut direct,
                        LaneKind::Alternative => &mut alternative,
                    };
                    slot.entry(frame_id).or_default().push(vertices);
                }
                SegmentationLine::Mask { frame_id, mask } => {
                    let mask = io::load_mask(&io::resolve(&base, &mask))?;
                    if let Some(area) = drivable_area_from_mask(&mask) {
                        table.insert(frame_id, area);
                    }
                }
            }
        }
        for frame_id in order {
            let mut lanes = direct.remove(&frame_id).unwrap_or_default();
            if lanes.len() != 1 {
                bail!(
                    "{}: frame {frame_id} has {} direct lanes, expected 1",
                    path.display(),
                    lanes.len()
                );
            }
            let alternatives = alternative.remove(&frame_id).unwrap_or_default();
            let area = DrivableArea::new(lanes.remove(0), alternatives)
                .with_context(|| format!("{}: frame {frame_id}", path.display()))?;
            if table.frames.contains_key(&frame_id) {
                bail!("{}: frame {frame_id} has both a mask and polygons", path.display());
            }
            table.insert(frame_id, area);
        }
        Ok(table)
    }

    /// Polygon records for the given frames, in order.
    pub fn to_lines(&self, frame_ids: &[String]) -> Vec<SegmentationLine> {
        let mut lines = Vec::new();
        for id in frame_ids {
            let Some(area) = self.frames.get(id) else {
                continue;
            };
            lines.push(SegmentationLine::Polygon {
                frame_id: id.clone(),
                lane_kind: LaneKind::Direct,
                vertices: area.direct_lane.clone(),
            });
            for lane in &area.alternative_lanes {
                lines.push(SegmentationLine::Polygon {
                    frame_id: id.clone(),
                    lane_kind: LaneKind::Alternative,
                    vertices: lane.clone(),
                });
            }
        }
        lines
    }
}

impl SegmentationProvider for SegmentationTable {
    fn drivable_area(&self, frame_id: &str) -> Result<Option<DrivableArea>> {
        Ok(self.frames.get(frame_id).cloned())
    }
}

/// Provider for runs without segmentation.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoSegmentation;

impl SegmentationProvider for NoSegmentation {
    fn drivable_area(&self, _frame_id: &str) -> Result<Option<DrivableArea>> {
        Ok(None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use scenerisk_core::segmentation::LaneMask;
    use scenerisk_core::Vertex;
    use std::fs;

    #[test]
    fn segmentation_sidecar_polygons_and_masks() {
        let dir = tempfile::tempdir().unwrap();
        let mask = LaneMask::new(4, 2, vec![0, 1, 1, 2, 0, 1, 1, 2]).unwrap();
        io::save_mask(&dir.path().join("m.png"), &mask).unwrap();
        let path = dir.path().join("seg.jsonl");
        fs::write(
            &path,
            concat!(
                r#"{"frame_id":"v/0","lane_kind":"direct","vertices":[[0,0],[4,0],[4,4],[0,4]]}"#,
                "\n",
                r#"{"frame_id":"v/0","lane_kind":"alternative","vertices":[[4,0],[8,0],[8,4]]}"#,
                "\n",
                r#"{"frame_id":"v/6","mask":"m.png"}"#,
                "\n"
            ),
        )
        .unwrap();
        let table = SegmentationTable::from_sidecar(&path).unwrap();
        let a = table.drivable_area("v/0").unwrap().unwrap();
        assert_eq!(a.alternative_lanes.len(), 1);
        let b = table.drivable_area("v/6").unwrap().unwrap();
        assert_eq!(
            b.direct_lane,
            vec![Vertex(1, 0), Vertex(3, 0), Vertex(3, 2), Vertex(1, 2)]
        );
        assert_eq!(table.drivable_area("v/12").unwrap(), None);

        // polygons written back read the same
        let ids = vec!["v/0".to_string(), "v/6".to_string()];
        let out = dir.path().join("out.jsonl");
        io::write_jsonl(&out, &table.to_lines(&ids)).unwrap();
        let again = SegmentationTable::from_sidecar(&out).unwrap();
        for id in &ids {
            assert_eq!(again.drivable_area(id).unwrap(), table.drivable_area(id).unwrap());
        }
    }

    #[test]
    fn alternative_lane_without_direct_lane_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("seg.jsonl");
        fs::write(
            &path,
            r#"{"frame_id":"v/0","lane_kind":"alternative","vertices":[[0,0],[4,0],[4,4]]}"#,
        )
        .unwrap();
        let err = SegmentationTable::from_sidecar(&path).unwrap_err();
        assert!(err.to_string().contains("0 direct lanes"), "{err}");
    }
}
