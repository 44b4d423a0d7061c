//! Pinhole distance estimation, region-of-interest gating and the box and
//! polygon primitives shared by all spatial reasoning.
//!
//! Pixel coordinates are integer positions on the pixel-corner lattice with
//! the origin at the top-left of the frame. A box `(x_min, y_min, x_max,
//! y_max)` covers the closed rectangle between those corners.

use core::fmt;

use serde::{Deserialize, Serialize};

use crate::detection::{Detection, ObjectClass};

#[derive(Clone, Debug, PartialEq)]
pub enum GeometryError {
    /// Box with `x_min >= x_max` or `y_min >= y_max`.
    EmptyBox {
        x_min: u32,
        y_min: u32,
        x_max: u32,
        y_max: u32,
    },
    FrameTooSmall { width: u32, height: u32 },
    NonPositiveBoxHeight,
    NonPositiveTrueHeight(f64),
    InvalidCamera,
    InvalidGrid,
    TooFewVertices(usize),
    ZeroExtent,
}

impl fmt::Display for GeometryError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeometryError::EmptyBox {
                x_min,
                y_min,
                x_max,
                y_max,
            } => write!(
                f,
                "box ({x_min}, {y_min}, {x_max}, {y_max}) has no positive area"
            ),
            GeometryError::FrameTooSmall { width, height } => {
                write!(f, "frame {width}x{height} is smaller than the 4x4 grid")
            }
            GeometryError::NonPositiveBoxHeight => {
                f.write_str("degenerate detection: box height must be positive")
            }
            GeometryError::NonPositiveTrueHeight(h) => {
                write!(f, "true object height must be positive, got {h}")
            }
            GeometryError::InvalidCamera => {
                f.write_str("focal length and pixels per inch must be positive")
            }
            GeometryError::InvalidGrid => {
                f.write_str("grid cell selection must be a non-empty range inside the 4x4 grid")
            }
            GeometryError::TooFewVertices(n) => {
                write!(f, "polygon needs at least 3 vertices, got {n}")
            }
            GeometryError::ZeroExtent => f.write_str("polygon has zero extent along an axis"),
        }
    }
}

impl core::error::Error for GeometryError {}

/// Axis-aligned box with positive area.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawBox", into = "RawBox")]
pub struct PixelBox {
    x_min: u32,
    y_min: u32,
    x_max: u32,
    y_max: u32,
}

#[derive(Clone, Copy, Serialize, Deserialize)]
struct RawBox {
    x_min: u32,
    y_min: u32,
    x_max: u32,
    y_max: u32,
}

impl TryFrom<RawBox> for PixelBox {
    type Error = GeometryError;

    fn try_from(raw: RawBox) -> Result<Self, Self::Error> {
        PixelBox::new(raw.x_min, raw.y_min, raw.x_max, raw.y_max)
    }
}

impl From<PixelBox> for RawBox {
    fn from(b: PixelBox) -> Self {
        RawBox {
            x_min: b.x_min,
            y_min: b.y_min,
            x_max: b.x_max,
            y_max: b.y_max,
        }
    }
}

impl PixelBox {
    pub fn new(x_min: u32, y_min: u32, x_max: u32, y_max: u32) -> Result<Self, GeometryError> {
        if x_min >= x_max || y_min >= y_max {
            return Err(GeometryError::EmptyBox {
                x_min,
                y_min,
                x_max,
                y_max,
            });
        }
        Ok(PixelBox {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn x_min(&self) -> u32 {
        self.x_min
    }

    pub fn y_min(&self) -> u32 {
        self.y_min
    }

    pub fn x_max(&self) -> u32 {
        self.x_max
    }

    pub fn y_max(&self) -> u32 {
        self.y_max
    }

    pub fn width(&self) -> u32 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> u32 {
        self.y_max - self.y_min
    }

    /// Whether the box lies inside a `width` x `height` frame.
    pub fn fits_frame(&self, width: u32, height: u32) -> bool {
        self.x_max <= width && self.y_max <= height
    }

    pub fn contains(&self, v: Vertex) -> bool {
        (self.x_min..=self.x_max).contains(&v.0) && (self.y_min..=self.y_max).contains(&v.1)
    }
}

/// Polygon vertex `(x, y)` on the pixel-corner lattice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Vertex(pub u32, pub u32);

/// Pinhole camera parameters. Distances come out in the unit of the true
/// object heights (feet with the default [`HeightTable`]).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    focal_length_inches: f64,
    pixels_per_inch: f64,
}

impl Default for CameraModel {
    fn default() -> Self {
        CameraModel {
            focal_length_inches: 2.5,
            pixels_per_inch: 100.0,
        }
    }
}

impl CameraModel {
    pub fn new(focal_length_inches: f64, pixels_per_inch: f64) -> Result<Self, GeometryError> {
        let valid = |v: f64| v.is_finite() && v > 0.0;
        if !valid(focal_length_inches) || !valid(pixels_per_inch) {
            return Err(GeometryError::InvalidCamera);
        }
        Ok(CameraModel {
            focal_length_inches,
            pixels_per_inch,
        })
    }

    pub fn focal_length_inches(&self) -> f64 {
        self.focal_length_inches
    }

    pub fn pixels_per_inch(&self) -> f64 {
        self.pixels_per_inch
    }

    /// Focal length expressed in pixels (250 with the defaults).
    pub fn focal_pixels(&self) -> f64 {
        self.focal_length_inches * self.pixels_per_inch
    }
}

/// True heights in feet per object class.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeightTable {
    pub van: f64,
    pub suv: f64,
    pub car: f64,
    pub pedestrian: f64,
}

impl Default for HeightTable {
    fn default() -> Self {
        HeightTable {
            van: 7.0,
            suv: 6.0,
            car: 4.7,
            pedestrian: 5.6,
        }
    }
}

impl HeightTable {
    pub fn height(&self, class: ObjectClass) -> Option<f64> {
        match class {
            ObjectClass::Van => Some(self.van),
            ObjectClass::Suv => Some(self.suv),
            ObjectClass::Car => Some(self.car),
            ObjectClass::Pedestrian => Some(self.pedestrian),
            ObjectClass::Other => None,
        }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        for h in [self.van, self.suv, self.car, self.pedestrian] {
            if !(h.is_finite() && h > 0.0) {
                return Err(GeometryError::NonPositiveTrueHeight(h));
            }
        }
        Ok(())
    }
}

/// Selected cells of the 4x4 frame grid: half-open column and row ranges.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridCells {
    pub columns: (u32, u32),
    pub rows: (u32, u32),
}

impl Default for GridCells {
    /// Middle two columns of the bottom two rows: the forward travel path.
    fn default() -> Self {
        GridCells {
            columns: (1, 3),
            rows: (2, 4),
        }
    }
}

impl GridCells {
    fn validate(&self) -> Result<(), GeometryError> {
        let ok = |(a, b): (u32, u32)| a < b && b <= 4;
        if ok(self.columns) && ok(self.rows) {
            Ok(())
        } else {
            Err(GeometryError::InvalidGrid)
        }
    }
}

/// Region of the frame in which vehicles are considered for the distance
/// measurement.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionOfInterest(pub PixelBox);

impl RegionOfInterest {
    pub fn bounds(&self) -> PixelBox {
        self.0
    }
}

/// Region of interest for the default grid cells.
pub fn roi_for_frame(frame_width: u32, frame_height: u32) -> Result<RegionOfInterest, GeometryError> {
    roi_for_cells(frame_width, frame_height, GridCells::default())
}

/// Union of the selected 4x4 grid cells, with cell edges at `floor(k * W / 4)`.
pub fn roi_for_cells(
    frame_width: u32,
    frame_height: u32,
    cells: GridCells,
) -> Result<RegionOfInterest, GeometryError> {
    if frame_width < 4 || frame_height < 4 {
        return Err(GeometryError::FrameTooSmall {
            width: frame_width,
            height: frame_height,
        });
    }
    cells.validate()?;
    let edge = |extent: u32, k: u32| ((u64::from(extent) * u64::from(k)) / 4) as u32;
    let bounds = PixelBox::new(
        edge(frame_width, cells.columns.0),
        edge(frame_height, cells.rows.0),
        edge(frame_width, cells.columns.1),
        edge(frame_height, cells.rows.1),
    )?;
    Ok(RegionOfInterest(bounds))
}

/// Distance to an object of known height from the height of its box:
/// `true_height * focal_pixels / box_height`.
pub fn estimate_distance(
    box_height: u32,
    true_height: f64,
    camera: &CameraModel,
) -> Result<f64, GeometryError> {
    if box_height == 0 {
        return Err(GeometryError::NonPositiveBoxHeight);
    }
    if !(true_height.is_finite() && true_height > 0.0) {
        return Err(GeometryError::NonPositiveTrueHeight(true_height));
    }
    Ok(true_height * camera.focal_pixels() / f64::from(box_height))
}

/// Closed-box intersection; touching edges or corners count.
pub fn boxes_intersect(a: &PixelBox, b: &PixelBox) -> bool {
    a.x_min <= b.x_max && b.x_min <= a.x_max && a.y_min <= b.y_max && b.y_min <= a.y_max
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NearestVehicle {
    /// Index into the detection list.
    pub index: usize,
    pub distance: f64,
}

/// Closest vehicle among the detections whose box touches the region of
/// interest. Ties go to the lowest index.
pub fn nearest_vehicle(
    detections: &[Detection],
    roi: &RegionOfInterest,
    heights: &HeightTable,
    camera: &CameraModel,
) -> Option<NearestVehicle> {
    let mut best: Option<NearestVehicle> = None;
    for (index, det) in detections.iter().enumerate() {
        if !det.class.is_vehicle() || !boxes_intersect(&det.bbox, &roi.0) {
            continue;
        }
        let Some(true_height) = heights.height(det.class) else {
            continue;
        };
        let Ok(distance) = estimate_distance(det.bbox.height(), true_height, camera) else {
            continue;
        };
        if best.map_or(true, |b| distance < b.distance) {
            best = Some(NearestVehicle { index, distance });
        }
    }
    best
}

/// Smallest axis-aligned box containing every vertex of the polygon.
pub fn lane_bounding_box(polygon: &[Vertex]) -> Result<PixelBox, GeometryError> {
    if polygon.len() < 3 {
        return Err(GeometryError::TooFewVertices(polygon.len()));
    }
    let (mut x_min, mut y_min) = (u32::MAX, u32::MAX);
    let (mut x_max, mut y_max) = (0, 0);
    for &Vertex(x, y) in polygon {
        x_min = x_min.min(x);
        y_min = y_min.min(y);
        x_max = x_max.max(x);
        y_max = y_max.max(y);
    }
    PixelBox::new(x_min, y_min, x_max, y_max).map_err(|_| GeometryError::ZeroExtent)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::vec::Vec;
    use proptest::prelude::*;

    fn bx(a: u32, b: u32, c: u32, d: u32) -> PixelBox {
        PixelBox::new(a, b, c, d).unwrap()
    }

    fn car(b: PixelBox) -> Detection {
        Detection::new(ObjectClass::Car, b, 0.9).unwrap()
    }

    #[test]
    fn roi_grid_examples() {
        assert_eq!(roi_for_frame(400, 400).unwrap().0, bx(100, 200, 300, 400));
        assert_eq!(roi_for_frame(4, 4).unwrap().0, bx(1, 2, 3, 4));
        assert_eq!(roi_for_frame(1280, 720).unwrap().0, bx(320, 360, 960, 720));
        // floor arithmetic on sizes not divisible by 4
        assert_eq!(roi_for_frame(7, 9).unwrap().0, bx(1, 4, 5, 9));
    }

    #[test]
    fn roi_rejects_tiny_frames() {
        assert_eq!(
            roi_for_frame(3, 10),
            Err(GeometryError::FrameTooSmall { width: 3, height: 10 })
        );
        assert!(roi_for_frame(10, 0).is_err());
    }

    #[test]
    fn roi_custom_cells() {
        let cells = GridCells {
            columns: (0, 4),
            rows: (3, 4),
        };
        assert_eq!(roi_for_cells(100, 100, cells).unwrap().0, bx(0, 75, 100, 100));
        let bad = GridCells {
            columns: (2, 2),
            rows: (0, 4),
        };
        assert_eq!(roi_for_cells(100, 100, bad), Err(GeometryError::InvalidGrid));
    }

    #[test]
    fn camera_defaults() {
        let cam = CameraModel::default();
        assert_eq!(cam.focal_pixels(), 250.0);
        assert!(CameraModel::new(0.0, 100.0).is_err());
        assert!(CameraModel::new(2.5, -1.0).is_err());
    }

    #[test]
    fn distance_examples() {
        let cam = CameraModel::default();
        assert_eq!(estimate_distance(250, 7.0, &cam).unwrap(), 7.0);
        let d = estimate_distance(235, 4.7, &cam).unwrap();
        assert!((d - 5.0).abs() <= 5.0 * 1e-9);
        assert_eq!(estimate_distance(100, 6.0, &cam).unwrap(), 15.0);
    }

    #[test]
    fn distance_errors() {
        let cam = CameraModel::default();
        assert_eq!(
            estimate_distance(0, 4.7, &cam),
            Err(GeometryError::NonPositiveBoxHeight)
        );
        assert!(estimate_distance(10, 0.0, &cam).is_err());
        assert!(estimate_distance(10, f64::NAN, &cam).is_err());
    }

    #[test]
    fn intersection_examples() {
        assert!(boxes_intersect(&bx(0, 0, 10, 10), &bx(5, 5, 15, 15)));
        assert!(!boxes_intersect(&bx(0, 0, 10, 10), &bx(20, 20, 30, 30)));
        assert!(boxes_intersect(&bx(0, 0, 10, 10), &bx(10, 0, 20, 10)));
        assert!(boxes_intersect(&bx(0, 0, 10, 10), &bx(10, 10, 20, 20)));
        assert!(!boxes_intersect(&bx(0, 0, 10, 10), &bx(11, 0, 20, 10)));
    }

    #[test]
    fn nearest_vehicle_examples() {
        let cam = CameraModel::default();
        let heights = HeightTable::default();
        let roi = roi_for_frame(400, 400).unwrap();
        assert_eq!(nearest_vehicle(&[], &roi, &heights, &cam), None);

        let dets = vec![car(bx(120, 200, 160, 300)), car(bx(150, 190, 250, 390))];
        let nearest = nearest_vehicle(&dets, &roi, &heights, &cam).unwrap();
        assert_eq!(nearest.index, 1);
        assert!((nearest.distance - 5.875).abs() < 1e-12);

        let outside = vec![car(bx(0, 0, 50, 50))];
        assert_eq!(nearest_vehicle(&outside, &roi, &heights, &cam), None);
    }

    #[test]
    fn nearest_vehicle_ignores_pedestrians_and_breaks_ties_low() {
        let cam = CameraModel::default();
        let heights = HeightTable::default();
        let roi = roi_for_frame(400, 400).unwrap();
        let ped = Detection::new(ObjectClass::Pedestrian, bx(150, 200, 160, 390), 0.9).unwrap();
        let other = Detection::new(ObjectClass::Other, bx(150, 200, 160, 390), 0.9).unwrap();
        let dets = vec![ped, other, car(bx(110, 250, 130, 350)), car(bx(200, 250, 210, 350))];
        let nearest = nearest_vehicle(&dets, &roi, &heights, &cam).unwrap();
        assert_eq!(nearest.index, 2);
    }

    #[test]
    fn lane_box_examples() {
        let tri = [Vertex(2, 3), Vertex(5, 1), Vertex(4, 6)];
        assert_eq!(lane_bounding_box(&tri).unwrap(), bx(2, 1, 5, 6));
        let square = [Vertex(0, 0), Vertex(10, 0), Vertex(10, 10), Vertex(0, 10)];
        assert_eq!(lane_bounding_box(&square).unwrap(), bx(0, 0, 10, 10));
        assert_eq!(
            lane_bounding_box(&[Vertex(1, 1), Vertex(2, 1)]),
            Err(GeometryError::TooFewVertices(2))
        );
        let flat = [Vertex(1, 1), Vertex(2, 1), Vertex(5, 1)];
        assert_eq!(lane_bounding_box(&flat), Err(GeometryError::ZeroExtent));
    }

    #[test]
    fn pixel_box_rejects_empty() {
        assert!(PixelBox::new(5, 0, 5, 10).is_err());
        assert!(PixelBox::new(0, 7, 3, 2).is_err());
    }

    fn arb_box(limit: u32) -> impl Strategy<Value = PixelBox> {
        (0..limit, 0..limit, 1..=limit, 1..=limit)
            .prop_map(|(x, y, w, h)| PixelBox::new(x, y, x + w, y + h).unwrap())
    }

    proptest! {
        #[test]
        fn distance_is_homogeneous(h in 1u32..5_000, true_h in 0.1f64..20.0) {
            let cam = CameraModel::default();
            let base = estimate_distance(h, true_h, &cam).unwrap();
            let taller = estimate_distance(h, 2.0 * true_h, &cam).unwrap();
            let bigger = estimate_distance(2 * h, true_h, &cam).unwrap();
            prop_assert!((taller - 2.0 * base).abs() <= 1e-9 * taller);
            prop_assert!((bigger - 0.5 * base).abs() <= 1e-9 * base);
        }

        #[test]
        fn intersection_symmetric_and_reflexive(a in arb_box(64), b in arb_box(64)) {
            prop_assert_eq!(boxes_intersect(&a, &b), boxes_intersect(&b, &a));
            prop_assert!(boxes_intersect(&a, &a));
        }

        #[test]
        fn lane_box_is_tight(points in proptest::collection::vec((0u32..100, 0u32..100), 3..12)) {
            let poly: Vec<Vertex> = points.iter().map(|&(x, y)| Vertex(x, y)).collect();
            match lane_bounding_box(&poly) {
                Ok(b) => {
                    prop_assert!(poly.iter().all(|&v| b.contains(v)));
                    prop_assert!(poly.iter().any(|v| v.0 == b.x_min()));
                    prop_assert!(poly.iter().any(|v| v.0 == b.x_max()));
                    prop_assert!(poly.iter().any(|v| v.1 == b.y_min()));
                    prop_assert!(poly.iter().any(|v| v.1 == b.y_max()));
                }
                Err(e) => {
                    prop_assert_eq!(e, GeometryError::ZeroExtent);
                    let xs_equal = poly.iter().all(|v| v.0 == poly[0].0);
                    let ys_equal = poly.iter().all(|v| v.1 == poly[0].1);
                    prop_assert!(xs_equal || ys_equal);
                }
            }
        }
    }
}
