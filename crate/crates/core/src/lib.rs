//! Driving-scene risk analysis without the standard library.
//!
//! This crate holds every algorithm of the engine and performs no IO:
//!
//! - [`geometry`]: pinhole distance estimation, the region-of-interest grid,
//!   and box/polygon primitives.
//! - [`risk`]: drivable-area modeling, risky-pedestrian detection and lane
//!   relations.
//! - [`segmentation`]: conversion of lane masks into drivable-area polygons.
//! - [`nn`]: tensors, layers with exact backward passes, SGD, bilinear
//!   resizing and the weight container format.
//! - [`multinet`]: the two parallel multi-task networks, four-label
//!   classification and training.
//! - [`dataset`]: frame sampling, crash-window labeling, video-level splits
//!   and class balance.
//! - [`metrics`]: confusion matrices and per-class precision/recall/F1.
//!
//! Everything only needs `alloc`. File formats, providers, the frame
//! pipeline and the command line live in the `scenerisk` crate.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod dataset;
pub mod detection;
pub mod geometry;
pub mod labels;
pub mod metrics;
pub mod multinet;
pub mod nn;
pub mod risk;
pub mod segmentation;

pub use detection::{Detection, ObjectClass};
pub use geometry::{CameraModel, HeightTable, PixelBox, RegionOfInterest, Vertex};
pub use labels::{CrashLikelihood, RoadFunction, SceneLabels, Task, TimeOfDay, Weather};
