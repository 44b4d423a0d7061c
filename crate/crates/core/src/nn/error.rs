use alloc::vec::Vec;
use core::fmt;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum NnError {
    /// Buffer length disagrees with the product of the shape.
    BufferLength { shape: Vec<usize>, len: usize },
    ShapeMismatch {
        op: &'static str,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    KernelTooLarge { kernel: usize, height: usize, width: usize },
    InputTooSmall { op: &'static str, height: usize, width: usize },
    EmptyDimension,
    NonFinite(&'static str),
    TooFewClasses(usize),
    TargetOutOfRange { target: usize, classes: usize },
    InvalidLearningRate,
    InvalidSpec(&'static str),
}

impl fmt::Display for NnError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NnError::BufferLength { shape, len } => {
                write!(f, "buffer of {len} values does not fit shape {shape:?}")
            }
            NnError::ShapeMismatch {
                op,
                expected,
                actual,
            } => write!(f, "{op}: expected shape {expected:?}, got {actual:?}"),
            NnError::KernelTooLarge {
                kernel,
                height,
                width,
            } => write!(f, "{kernel}x{kernel} kernel does not fit {height}x{width} input"),
            NnError::InputTooSmall { op, height, width } => {
                write!(f, "{op}: input {height}x{width} is too small")
            }
            NnError::EmptyDimension => f.write_str("tensor dimensions must be positive"),
            NnError::NonFinite(what) => write!(f, "non-finite values in {what}"),
            NnError::TooFewClasses(k) => write!(f, "need at least 2 classes, got {k}"),
            NnError::TargetOutOfRange { target, classes } => {
                write!(f, "target class {target} out of range for {classes} classes")
            }
            NnError::InvalidLearningRate => f.write_str("learning rate must be finite and >= 0"),
            NnError::InvalidSpec(why) => write!(f, "invalid layer spec: {why}"),
        }
    }
}

impl core::error::Error for NnError {}
