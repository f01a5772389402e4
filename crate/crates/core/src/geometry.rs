//! Axis-aligned boxes in page or pixel coordinates (origin top-left).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RectError {
    #[error("non-finite coordinate in box {0:?}")]
    NonFinite([f64; 4]),
    #[error("degenerate box {0:?}: requires x1 > x0 and y1 > y0")]
    Degenerate([f64; 4]),
}

/// Non-degenerate rectangle `(x0, y0, x1, y1)` with `x1 > x0`, `y1 > y0`.
///
/// Serialized as a four element array `[x0, y0, x1, y1]`; deserialization
/// rejects degenerate or non-finite boxes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(
    into = "[T; 4]",
    try_from = "[T; 4]",
    bound(serialize = "T: Scalar", deserialize = "T: Scalar")
)]
pub struct Rect<T: Scalar> {
    pub x0: T,
    pub y0: T,
    pub x1: T,
    pub y1: T,
}

impl<T: Scalar> Rect<T> {
    pub fn new(x0: T, y0: T, x1: T, y1: T) -> Result<Self, RectError> {
        let raw = [x0, y0, x1, y1].map(Scalar::to_f64_lossy);
        if [x0, y0, x1, y1].iter().any(|v| !v.is_finite()) {
            return Err(RectError::NonFinite(raw));
        }
        if x1 <= x0 || y1 <= y0 {
            return Err(RectError::Degenerate(raw));
        }
        Ok(Self { x0, y0, x1, y1 })
    }

    /// Convenience constructor from `f64` literals; panics on invalid input.
    pub fn from_f64(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self::new(T::lit(x0), T::lit(y0), T::lit(x1), T::lit(y1)).expect("valid rectangle")
    }

    pub fn width(&self) -> T {
        self.x1 - self.x0
    }

    pub fn height(&self) -> T {
        self.y1 - self.y0
    }

    pub fn area(&self) -> T {
        self.width() * self.height()
    }

    pub fn center_y(&self) -> T {
        (self.y0 + self.y1) / T::lit(2.0)
    }

    /// Smallest box containing both.
    pub fn union(&self, other: &Self) -> Self {
        Self {
            x0: self.x0.min(other.x0),
            y0: self.y0.min(other.y0),
            x1: self.x1.max(other.x1),
            y1: self.y1.max(other.y1),
        }
    }

    pub fn intersection_area(&self, other: &Self) -> T {
        let w = (self.x1.min(other.x1) - self.x0.max(other.x0)).max(T::zero());
        let h = (self.y1.min(other.y1) - self.y0.max(other.y0)).max(T::zero());
        w * h
    }

    pub fn iou(&self, other: &Self) -> T {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        if union <= T::zero() {
            T::zero()
        } else {
            inter / union
        }
    }

    /// Intersection over the smaller of the two areas.
    pub fn containment(&self, other: &Self) -> T {
        let denom = self.area().min(other.area());
        if denom <= T::zero() {
            T::zero()
        } else {
            self.intersection_area(other) / denom
        }
    }

    /// Gap between the vertical extents; zero when they overlap.
    pub fn vertical_gap(&self, other: &Self) -> T {
        (self.y0.max(other.y0) - self.y1.min(other.y1)).max(T::zero())
    }

    pub fn expand(&self, pad: T) -> Self {
        Self {
            x0: self.x0 - pad,
            y0: self.y0 - pad,
            x1: self.x1 + pad,
            y1: self.y1 + pad,
        }
    }

    /// Clamps into `[0, width] x [0, height]`; `None` when nothing remains.
    pub fn clamp_to(&self, width: T, height: T) -> Option<Self> {
        let zero = T::zero();
        Self::new(
            self.x0.max(zero).min(width),
            self.y0.max(zero).min(height),
            self.x1.max(zero).min(width),
            self.y1.max(zero).min(height),
        )
        .ok()
    }

    pub fn scale(&self, sx: T, sy: T) -> Self {
        Self {
            x0: self.x0 * sx,
            y0: self.y0 * sy,
            x1: self.x1 * sx,
            y1: self.y1 * sy,
        }
    }

    /// Reading-order key: top edge, then left edge.
    pub(crate) fn reading_cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.y0
            .partial_cmp(&other.y0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(self.x0.partial_cmp(&other.x0).unwrap_or(std::cmp::Ordering::Equal))
            .then(self.y1.partial_cmp(&other.y1).unwrap_or(std::cmp::Ordering::Equal))
            .then(self.x1.partial_cmp(&other.x1).unwrap_or(std::cmp::Ordering::Equal))
    }

    pub fn as_array(&self) -> [T; 4] {
        [self.x0, self.y0, self.x1, self.y1]
    }
}

impl<T: Scalar> From<Rect<T>> for [T; 4] {
    fn from(r: Rect<T>) -> Self {
        r.as_array()
    }
}

impl<T: Scalar> TryFrom<[T; 4]> for Rect<T> {
    type Error = RectError;

    fn try_from(v: [T; 4]) -> Result<Self, Self::Error> {
        Rect::new(v[0], v[1], v[2], v[3])
    }
}

/// Horizontal overlap of two boxes relative to the narrower one, with a
/// one-unit floor on the denominator.
pub fn overlap_x<T: Scalar>(a: &Rect<T>, b: &Rect<T>) -> T {
    let inter = (a.x1.min(b.x1) - a.x0.max(b.x0)).max(T::zero());
    let denom = a.width().min(b.width()).max(T::one());
    inter / denom
}
