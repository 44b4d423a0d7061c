//! Drivable-area modeling, risky-pedestrian detection and lane relations.
//!
//! A pedestrian is risky when its box touches the bounding rectangle of the
//! direct lane. The rectangle over-approximates the lane polygon; that
//! approximation is intended. Alternative lanes never make a pedestrian risky.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::detection::{Detection, ObjectClass};
use crate::geometry::{
    boxes_intersect, estimate_distance, lane_bounding_box, CameraModel, GeometryError, HeightTable,
    PixelBox, Vertex,
};

/// Lanes segmented from one frame.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DrivableArea {
    /// Lane the ego vehicle occupies.
    pub direct_lane: Vec<Vertex>,
    /// Lanes reachable by a lane change; may be empty.
    #[serde(default)]
    pub alternative_lanes: Vec<Vec<Vertex>>,
}

impl DrivableArea {
    /// Checks that every polygon has a non-degenerate bounding box.
    pub fn new(
        direct_lane: Vec<Vertex>,
        alternative_lanes: Vec<Vec<Vertex>>,
    ) -> Result<Self, GeometryError> {
        lane_bounding_box(&direct_lane)?;
        for lane in &alternative_lanes {
            lane_bounding_box(lane)?;
        }
        Ok(DrivableArea {
            direct_lane,
            alternative_lanes,
        })
    }

    /// Whether every vertex lies inside a `width` x `height` frame.
    pub fn fits_frame(&self, width: u32, height: u32) -> bool {
        core::iter::once(&self.direct_lane)
            .chain(&self.alternative_lanes)
            .flatten()
            .all(|v| v.0 <= width && v.1 <= height)
    }
}

/// Outcome of the risk test for one pedestrian detection.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PedestrianAssessment {
    /// Index into the full detection list.
    pub detection_index: usize,
    pub risky: bool,
    /// Estimated distance in feet; present only for risky pedestrians.
    pub distance: Option<f64>,
    pub lane_box: PixelBox,
    pub pedestrian_box: PixelBox,
}

/// Tests every pedestrian detection against the direct lane's bounding
/// rectangle. Output follows input order; other classes are skipped.
pub fn detect_risky_pedestrians(
    detections: &[Detection],
    area: &DrivableArea,
    heights: &HeightTable,
    camera: &CameraModel,
) -> Result<Vec<PedestrianAssessment>, GeometryError> {
    let lane_box = lane_bounding_box(&area.direct_lane)?;
    detections
        .iter()
        .enumerate()
        .filter(|(_, d)| d.class == ObjectClass::Pedestrian)
        .map(|(detection_index, d)| {
            let risky = boxes_intersect(&lane_box, &d.bbox);
            let distance = if risky {
                Some(estimate_distance(d.bbox.height(), heights.pedestrian, camera)?)
            } else {
                None
            };
            Ok(PedestrianAssessment {
                detection_index,
                risky,
                distance,
                lane_box,
                pedestrian_box: d.bbox,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaneRelation {
    Direct,
    Alternative,
    OffRoad,
}

/// Which lane a box belongs to, with the direct lane taking precedence.
/// Lanes whose polygon is degenerate are ignored.
pub fn lane_relation(bbox: &PixelBox, area: &DrivableArea) -> LaneRelation {
    let touches = |lane: &[Vertex]| {
        lane_bounding_box(lane)
            .map(|lane_box| boxes_intersect(&lane_box, bbox))
            .unwrap_or(false)
    };
    if touches(&area.direct_lane) {
        LaneRelation::Direct
    } else if area.alternative_lanes.iter().any(|lane| touches(lane)) {
        LaneRelation::Alternative
    } else {
        LaneRelation::OffRoad
    }
}
