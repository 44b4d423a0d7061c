//! Conversion of lane segmentation masks into drivable-area polygons.
//!
//! Masks are 8-bit rasters: 0 background, 1 direct lane, 2 alternative lane.
//! Each 4-connected region of a lane value is traced along its outer pixel
//! edges, so polygon vertices sit on the pixel-corner lattice like box
//! coordinates do. The direct lane is the largest direct-lane region.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::geometry::Vertex;
use crate::risk::DrivableArea;

pub const BACKGROUND: u8 = 0;
pub const DIRECT_LANE: u8 = 1;
pub const ALTERNATIVE_LANE: u8 = 2;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MaskError {
    SizeMismatch { expected: usize, actual: usize },
    InvalidValue { x: u32, y: u32, value: u8 },
}

impl fmt::Display for MaskError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MaskError::SizeMismatch { expected, actual } => {
                write!(f, "mask buffer holds {actual} bytes, expected {expected}")
            }
            MaskError::InvalidValue { x, y, value } => {
                write!(f, "mask value {value} at ({x}, {y}) is not 0, 1 or 2")
            }
        }
    }
}

impl core::error::Error for MaskError {}

/// Row-major single-channel lane mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LaneMask {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl LaneMask {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self, MaskError> {
        let expected = width as usize * height as usize;
        if data.len() != expected {
            return Err(MaskError::SizeMismatch {
                expected,
                actual: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|&v| v > ALTERNATIVE_LANE) {
            return Err(MaskError::InvalidValue {
                x: (i % width as usize) as u32,
                y: (i / width as usize) as u32,
                value: data[i],
            });
        }
        Ok(LaneMask {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    /// Row-major mask values.
    pub fn data(&self) -> &[u8] {
        &self.data
    }
}

/// One 4-connected region of equal mask value.
#[derive(Clone, Debug)]
struct Region {
    value: u8,
    /// First pixel in raster order.
    start: (u32, u32),
    pixels: usize,
}

/// Labels 4-connected regions; returns the per-pixel region ids (`usize::MAX`
/// for background) and the regions in raster order of their first pixel.
fn label_regions(mask: &LaneMask) -> (Vec<usize>, Vec<Region>) {
    let (w, h) = (mask.width as usize, mask.height as usize);
    let mut ids = vec![usize::MAX; w * h];
    let mut regions = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        let value = mask.data[start];
        if value == BACKGROUND || ids[start] != usize::MAX {
            continue;
        }
        let id = regions.len();
        ids[start] = id;
        queue.push_back(start);
        let mut pixels = 0;
        while let Some(i) = queue.pop_front() {
            pixels += 1;
            let (x, y) = (i % w, i / w);
            let mut visit = |j: usize| {
                if mask.data[j] == value && ids[j] == usize::MAX {
                    ids[j] = id;
                    queue.push_back(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        regions.push(Region {
            value,
            start: ((start % w) as u32, (start / w) as u32),
            pixels,
        });
    }
    (ids, regions)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Heading {
    Right,
    Down,
    Left,
    Up,
}

impl Heading {
    fn step(self, (x, y): (i64, i64)) -> (i64, i64) {
        match self {
            Heading::Right => (x + 1, y),
            Heading::Down => (x, y + 1),
            Heading::Left => (x - 1, y),
            Heading::Up => (x, y - 1),
        }
    }

    fn clockwise(self) -> Self {
        match self {
            Heading::Right => Heading::Down,
            Heading::Down => Heading::Left,
            Heading::Left => Heading::Up,
            Heading::Up => Heading::Right,
        }
    }

    fn counter_clockwise(self) -> Self {
        match self {
            Heading::Right => Heading::Up,
            Heading::Up => Heading::Left,
            Heading::Left => Heading::Down,
            Heading::Down => Heading::Right,
        }
    }

    /// Pixels ahead-left and ahead-right of a corner when travelling along
    /// this heading with the region on the right-hand side.
    fn ahead(self, (x, y): (i64, i64)) -> ((i64, i64), (i64, i64)) {
        match self {
            Heading::Right => ((x, y - 1), (x, y)),
            Heading::Down => ((x, y), (x - 1, y)),
            Heading::Left => ((x - 1, y), (x - 1, y - 1)),
            Heading::Up => ((x - 1, y - 1), (x, y - 1)),
        }
    }
}

/// Traces the outer boundary of the region containing `start`, which must be
/// its first pixel in raster order. Vertices are the corners where the
/// boundary turns, in clockwise screen order beginning at the top-left
/// corner of `start`.
fn trace_outline(member: impl Fn(i64, i64) -> bool, start: (u32, u32)) -> Vec<Vertex> {
    let origin = (i64::from(start.0), i64::from(start.1));
    let mut corner = origin;
    let mut heading = Heading::Right;
    let mut vertices = vec![Vertex(start.0, start.1)];
    loop {
        corner = heading.step(corner);
        let (left, right) = heading.ahead(corner);
        let next = if !member(right.0, right.1) {
            heading.clockwise()
        } else if member(left.0, left.1) {
            heading.counter_clockwise()
        } else {
            heading
        };
        if corner == origin {
            break;
        }
        if next != heading {
            vertices.push(Vertex(corner.0 as u32, corner.1 as u32));
        }
        heading = next;
    }
    vertices
}

/// Outer boundary polygons of every region with the given mask value, in
/// raster order of their first pixel, paired with their pixel counts.
pub fn lane_polygons(mask: &LaneMask, value: u8) -> Vec<(Vec<Vertex>, usize)> {
    let (ids, regions) = label_regions(mask);
    let (w, h) = (i64::from(mask.width), i64::from(mask.height));
    regions
        .iter()
        .enumerate()
        .filter(|(_, r)| r.value == value)
        .map(|(id, r)| {
            let member = |x: i64, y: i64| {
                x >= 0 && y >= 0 && x < w && y < h && ids[(y * w + x) as usize] == id
            };
            (trace_outline(member, r.start), r.pixels)
        })
        .collect()
}

/// Drivable area of a mask, or `None` when it has no direct-lane pixels.
/// The largest direct-lane region (first in raster order on ties) becomes
/// the direct lane; every alternative-lane region becomes an alternative
/// lane.
pub fn drivable_area_from_mask(mask: &LaneMask) -> Option<DrivableArea> {
    let mut direct: Option<(Vec<Vertex>, usize)> = None;
    for (poly, pixels) in lane_polygons(mask, DIRECT_LANE) {
        if direct.as_ref().map_or(true, |(_, best)| pixels > *best) {
            direct = Some((poly, pixels));
        }
    }
    let (direct_lane, _) = direct?;
    let alternative_lanes = lane_polygons(mask, ALTERNATIVE_LANE)
        .into_iter()
        .map(|(poly, _)| poly)
        .collect();
    Some(DrivableArea {
        direct_lane,
        alternative_lanes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{lane_bounding_box, PixelBox};

    fn mask_from(rows: &[&str]) -> LaneMask {
        let h = rows.len() as u32;
        let w = rows[0].len() as u32;
        let data = rows
            .iter()
            .flat_map(|r| r.bytes().map(|b| b - b'0'))
            .collect();
        LaneMask::new(w, h, data).unwrap()
    }

    #[test]
    fn rectangle_traces_four_corners() {
        let m = mask_from(&["000000", "001110", "001110", "000000"]);
        let polys = lane_polygons(&m, DIRECT_LANE);
        assert_eq!(polys.len(), 1);
        assert_eq!(
            polys[0].0,
            vec![Vertex(2, 1), Vertex(5, 1), Vertex(5, 3), Vertex(2, 3)]
        );
        assert_eq!(polys[0].1, 6);
    }

    #[test]
    fn l_shape_traces_six_corners() {
        let m = mask_from(&["100", "100", "111"]);
        let polys = lane_polygons(&m, DIRECT_LANE);
        assert_eq!(
            polys[0].0,
            vec![
                Vertex(0, 0),
                Vertex(1, 0),
                Vertex(1, 2),
                Vertex(3, 2),
                Vertex(3, 3),
                Vertex(0, 3)
            ]
        );
    }

    #[test]
    fn single_pixel_region() {
        let m = mask_from(&["000", "010", "000"]);
        let polys = lane_polygons(&m, DIRECT_LANE);
        assert_eq!(
            polys[0].0,
            vec![Vertex(1, 1), Vertex(2, 1), Vertex(2, 2), Vertex(1, 2)]
        );
    }

    #[test]
    fn diagonal_pixels_are_separate_regions() {
        let m = mask_from(&["10", "01"]);
        assert_eq!(lane_polygons(&m, DIRECT_LANE).len(), 2);
    }

    #[test]
    fn hole_does_not_change_outer_boundary() {
        let m = mask_from(&["1111", "1001", "1111"]);
        let polys = lane_polygons(&m, DIRECT_LANE);
        assert_eq!(polys.len(), 1);
        assert_eq!(
            polys[0].0,
            vec![Vertex(0, 0), Vertex(4, 0), Vertex(4, 3), Vertex(0, 3)]
        );
    }

    #[test]
    fn drivable_area_picks_largest_direct_region() {
        let m = mask_from(&[
            "1000000", //
            "0001102", //
            "0011122", //
            "0111122", //
        ]);
        let area = drivable_area_from_mask(&m).unwrap();
        assert_eq!(
            lane_bounding_box(&area.direct_lane).unwrap(),
            PixelBox::new(1, 1, 5, 4).unwrap()
        );
        assert_eq!(area.alternative_lanes.len(), 1);
        assert_eq!(
            lane_bounding_box(&area.alternative_lanes[0]).unwrap(),
            PixelBox::new(5, 1, 7, 4).unwrap()
        );
    }

    #[test]
    fn no_direct_lane_means_no_area() {
        let m = mask_from(&["0220", "0220"]);
        assert_eq!(drivable_area_from_mask(&m), None);
    }

    #[test]
    fn rejects_bad_masks() {
        assert!(matches!(
            LaneMask::new(2, 2, vec![0, 0, 0]),
            Err(MaskError::SizeMismatch { .. })
        ));
        assert_eq!(
            LaneMask::new(2, 1, vec![0, 255]),
            Err(MaskError::InvalidValue { x: 1, y: 0, value: 255 })
        );
    }

    #[test]
    fn outline_bounding_box_matches_pixel_extent() {
        // pseudo-random blobs: the traced polygon's box must equal the
        // pixel extent of the region in corner coordinates
        let mut state = 0x2545_f491_4f6c_dd1du64;
        for _ in 0..200 {
            let (w, h) = (12u32, 9u32);
            let mut data = vec![0u8; (w * h) as usize];
            for v in data.iter_mut() {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                *v = u8::from(state % 3 == 0);
            }
            let m = LaneMask::new(w, h, data).unwrap();
            let (ids, regions) = label_regions(&m);
            for (id, (poly, _)) in lane_polygons(&m, DIRECT_LANE).into_iter().enumerate() {
                let region_id = regions
                    .iter()
                    .enumerate()
                    .filter(|(_, r)| r.value == DIRECT_LANE)
                    .nth(id)
                    .unwrap()
                    .0;
                let mut ext = (u32::MAX, u32::MAX, 0, 0);
                for (i, _) in ids.iter().enumerate().filter(|(_, &r)| r == region_id) {
                    let (x, y) = (i as u32 % w, i as u32 / w);
                    ext = (ext.0.min(x), ext.1.min(y), ext.2.max(x + 1), ext.3.max(y + 1));
                }
                let expect = PixelBox::new(ext.0, ext.1, ext.2, ext.3).unwrap();
                assert_eq!(lane_bounding_box(&poly).unwrap(), expect);
            }
        }
    }
}
