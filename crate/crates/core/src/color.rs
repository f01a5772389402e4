//! WCAG linear-light color math: sRGB linearization, relative luminance and
//! contrast ratio. Out-of-range inputs are clamped to `[0, 1]` first.

use serde::{Deserialize, Serialize};

use crate::scalar::{clamp01, Scalar};

/// sRGB-encoded color, each channel in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(
    into = "[T; 3]",
    from = "[T; 3]",
    bound(serialize = "T: Scalar", deserialize = "T: Scalar")
)]
pub struct Rgb<T: Scalar> {
    pub r: T,
    pub g: T,
    pub b: T,
}

impl<T: Scalar> Rgb<T> {
    pub fn new(r: T, g: T, b: T) -> Self {
        Self {
            r: clamp01(r),
            g: clamp01(g),
            b: clamp01(b),
        }
    }

    pub fn gray(v: T) -> Self {
        Self::new(v, v, v)
    }

    pub fn from_f64(r: f64, g: f64, b: f64) -> Self {
        Self::new(T::lit(r), T::lit(g), T::lit(b))
    }

    pub fn black() -> Self {
        Self::gray(T::zero())
    }

    pub fn white() -> Self {
        Self::gray(T::one())
    }

    pub fn luminance(&self) -> Luminance<T> {
        relative_luminance(self)
    }
}

impl<T: Scalar> From<Rgb<T>> for [T; 3] {
    fn from(c: Rgb<T>) -> Self {
        [c.r, c.g, c.b]
    }
}

impl<T: Scalar> From<[T; 3]> for Rgb<T> {
    fn from(v: [T; 3]) -> Self {
        Rgb::new(v[0], v[1], v[2])
    }
}

/// Relative luminance in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent, bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct Luminance<T: Scalar>(T);

impl<T: Scalar> Luminance<T> {
    /// Clamps into `[0, 1]`. NaN is preserved so samplers can reject it.
    pub fn new(v: T) -> Self {
        if v.is_nan() {
            Self(v)
        } else {
            Self(clamp01(v))
        }
    }

    pub fn value(self) -> T {
        self.0
    }
}

pub fn srgb_to_linear<T: Scalar>(c: T) -> T {
    let c = clamp01(c);
    if c <= T::lit(0.04045) {
        c / T::lit(12.92)
    } else {
        ((c + T::lit(0.055)) / T::lit(1.055)).powf(T::lit(2.4))
    }
}

/// Inverse of [`srgb_to_linear`].
pub fn linear_to_srgb<T: Scalar>(c: T) -> T {
    let c = clamp01(c);
    if c <= T::lit(0.0031308) {
        c * T::lit(12.92)
    } else {
        T::lit(1.055) * c.powf(T::lit(1.0 / 2.4)) - T::lit(0.055)
    }
}

pub fn relative_luminance<T: Scalar>(c: &Rgb<T>) -> Luminance<T> {
    Luminance::new(
        T::lit(0.2126) * srgb_to_linear(c.r)
            + T::lit(0.7152) * srgb_to_linear(c.g)
            + T::lit(0.0722) * srgb_to_linear(c.b),
    )
}

/// `(max + 0.05) / (min + 0.05)`; symmetric, in `[1, 21]`.
pub fn contrast_ratio<T: Scalar>(l1: Luminance<T>, l2: Luminance<T>) -> T {
    let (a, b) = (l1.value(), l2.value());
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    (hi + T::lit(0.05)) / (lo + T::lit(0.05))
}
