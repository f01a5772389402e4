//! Layered page assembly and the contrast-coverage evaluator.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aro::{composite_overlay_into, BackingOverlay};
use crate::color::{contrast_ratio, relative_luminance, Rgb};
use crate::geometry::Rect;
use crate::raster::{PixelSpan, RasterImage};
use crate::scalar::Scalar;

/// WCAG AA threshold for body text.
pub const AA_THRESHOLD: f64 = 4.5;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ComposeError {
    #[error("layer {layer} is {got:?} but the background is {expected:?}")]
    DimensionMismatch {
        layer: String,
        expected: (usize, usize),
        got: (usize, usize),
    },
}

/// Background, backings, and an optional pre-rendered foreground (text and
/// figures with alpha), bottom to top.
#[derive(Debug, Clone)]
pub struct PageLayers<T: Scalar> {
    pub background: RasterImage<T>,
    pub backings: Vec<BackingOverlay<T>>,
    pub foreground: Option<RasterImage<T>>,
}

pub fn compose_page<T: Scalar>(layers: &PageLayers<T>) -> Result<RasterImage<T>, ComposeError> {
    let bg = &layers.background;
    let dims = (bg.width(), bg.height());
    if let Some(fg) = &layers.foreground {
        if !fg.same_size(bg) {
            return Err(ComposeError::DimensionMismatch {
                layer: "foreground".into(),
                expected: dims,
                got: (fg.width(), fg.height()),
            });
        }
    }
    let mut out = bg.clone();
    for b in &layers.backings {
        composite_overlay_into(&mut out, b);
    }
    if let Some(fg) = &layers.foreground {
        let pixels: Vec<[T; 4]> = out
            .pixels()
            .iter()
            .zip(fg.pixels())
            .map(|(under, over)| {
                let a = over[3];
                let keep = T::one() - a;
                [
                    a * over[0] + keep * under[0],
                    a * over[1] + keep * under[1],
                    a * over[2] + keep * under[2],
                    a + keep * under[3],
                ]
            })
            .collect();
        out = RasterImage::new(dims.0, dims.1, pixels).expect("dimensions preserved");
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct BoxReadability<T: Scalar> {
    #[serde(rename = "box")]
    pub bbox: Rect<T>,
    pub pixel_count: usize,
    pub min_contrast: T,
    /// Fraction of pixels at or above the threshold.
    pub coverage: T,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct ReadabilityReport<T: Scalar> {
    pub threshold: T,
    pub required_coverage: T,
    pub per_box: Vec<BoxReadability<T>>,
    /// Passing boxes over all boxes.
    pub page_pass_rate: T,
    /// Passing pixels over all pixels under the boxes.
    pub pixel_pass_rate: T,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Contrast of every pixel under each box against the text color; a box
/// passes when the fraction at or above `threshold` reaches
/// `required_coverage`. Measure the background+backings composite, without
/// the glyph layer.
pub fn evaluate_wcag<T: Scalar>(
    composited: &RasterImage<T>,
    text_boxes: &[Rect<T>],
    text_color: &Rgb<T>,
    threshold: T,
    required_coverage: T,
) -> ReadabilityReport<T> {
    let colors = vec![*text_color; text_boxes.len()];
    evaluate_wcag_per_box(composited, text_boxes, &colors, threshold, required_coverage)
}

pub fn evaluate_wcag_per_box<T: Scalar>(
    composited: &RasterImage<T>,
    text_boxes: &[Rect<T>],
    text_colors: &[Rgb<T>],
    threshold: T,
    required_coverage: T,
) -> ReadabilityReport<T> {
    assert_eq!(text_boxes.len(), text_colors.len(), "one color per box");
    let mut warnings = Vec::new();
    let mut per_box = Vec::with_capacity(text_boxes.len());
    let (mut px_total, mut px_pass) = (0usize, 0usize);
    for (i, (bbox, color)) in text_boxes.iter().zip(text_colors).enumerate() {
        let lt = relative_luminance(color);
        let span = PixelSpan::of(bbox, composited.width(), composited.height());
        let mut hits = 0usize;
        let mut min_cr = T::infinity();
        for (x, y) in span.iter() {
            let cr = contrast_ratio(composited.luminance_at(x, y), lt);
            min_cr = min_cr.min(cr);
            if cr >= threshold {
                hits += 1;
            }
        }
        let n = span.count();
        let coverage = if n == 0 {
            warnings.push(format!("box {i} covers no pixels"));
            T::one()
        } else {
            T::from_usize_lossy(hits) / T::from_usize_lossy(n)
        };
        px_total += n;
        px_pass += hits;
        per_box.push(BoxReadability {
            bbox: *bbox,
            pixel_count: n,
            min_contrast: if n == 0 { T::zero() } else { min_cr },
            coverage,
            pass: coverage >= required_coverage,
        });
    }
    let page_pass_rate = if per_box.is_empty() {
        warnings.push("no text boxes; pass rate defined as 1".into());
        T::one()
    } else {
        T::from_usize_lossy(per_box.iter().filter(|b| b.pass).count()) / T::from_usize_lossy(per_box.len())
    };
    let pixel_pass_rate = if px_total == 0 {
        T::one()
    } else {
        T::from_usize_lossy(px_pass) / T::from_usize_lossy(px_total)
    };
    ReadabilityReport {
        threshold,
        required_coverage,
        per_box,
        page_pass_rate,
        pixel_pass_rate,
        warnings,
    }
}
