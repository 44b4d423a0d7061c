use core::fmt;

use serde::{Deserialize, Serialize};

use crate::geometry::PixelBox;

/// Object classes reported by the detection provider.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectClass {
    Car,
    Suv,
    Van,
    Pedestrian,
    Other,
}

impl ObjectClass {
    pub fn is_vehicle(self) -> bool {
        matches!(self, ObjectClass::Car | ObjectClass::Suv | ObjectClass::Van)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InvalidConfidence(pub f32);

impl fmt::Display for InvalidConfidence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "detection confidence {} is outside [0, 1]", self.0)
    }
}

impl core::error::Error for InvalidConfidence {}

/// A detected object: class, box and confidence in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub class: ObjectClass,
    pub bbox: PixelBox,
    pub confidence: f32,
}

impl Detection {
    pub fn new(class: ObjectClass, bbox: PixelBox, confidence: f32) -> Result<Self, InvalidConfidence> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(InvalidConfidence(confidence));
        }
        Ok(Detection {
            class,
            bbox,
            confidence,
        })
    }
}
