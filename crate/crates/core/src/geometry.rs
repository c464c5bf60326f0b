//! Bounding boxes in the two-image setting.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageSide {
    Left,
    Right,
}

impl ImageSide {
    pub const BOTH: [ImageSide; 2] = [ImageSide::Left, ImageSide::Right];

    pub fn other(self) -> Self {
        match self {
            ImageSide::Left => ImageSide::Right,
            ImageSide::Right => ImageSide::Left,
        }
    }
}

impl fmt::Display for ImageSide {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ImageSide::Left => "left",
            ImageSide::Right => "right",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid box [{x1}, {y1}, {x2}, {y2}]: need finite nonnegative coordinates with x1 < x2 and y1 < y2")]
pub struct BoxError {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

/// Axis-aligned box in pixel coordinates, tagged with the image it lies in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    pub image: ImageSide,
}

impl BoundingBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64, image: ImageSide) -> Result<Self, BoxError> {
        let ok = [x1, y1, x2, y2].iter().all(|c| c.is_finite() && *c >= 0.0) && x1 < x2 && y1 < y2;
        if ok {
            Ok(Self { x1, y1, x2, y2, image })
        } else {
            Err(BoxError { x1, y1, x2, y2 })
        }
    }

    pub fn coords(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn intersection_area(&self, other: &BoundingBox) -> f64 {
        if self.image != other.image {
            return 0.0;
        }
        let w = self.x2.min(other.x2) - self.x1.max(other.x1);
        let h = self.y2.min(other.y2) - self.y1.max(other.y1);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }
}

/// Intersection over union; boxes in different images never overlap.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter == 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}
