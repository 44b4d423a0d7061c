//! Driving-scene risk analysis on top of `scenerisk-core`: file formats,
//! annotation providers, the frame pipeline and its benchmark.

pub mod io;
pub mod pipeline;
pub mod providers;

pub use scenerisk_core as core;
