//! Readability backings: the minimal opacity of a semi-transparent backing
//! that lifts a coverage fraction of background pixels to a target contrast
//! against the text color, and rasterization of the rounded backings.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::color::{contrast_ratio, linear_to_srgb, relative_luminance, srgb_to_linear, Luminance, Rgb};
use crate::geometry::Rect;
use crate::raster::{PixelSpan, RasterImage};
use crate::scalar::{clamp01, Scalar};

/// Pixel budget per box before stride subsampling kicks in.
pub const MAX_SAMPLES: usize = 1_000_000;

/// Supersampling factor per axis for backing edges.
const EDGE_SUPERSAMPLE: usize = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AroError {
    #[error("no pixels under box")]
    NoPixels,
    #[error("invalid sample at index {0}")]
    InvalidSample(usize),
    #[error("box {0:?} has zero area after expansion and clamping")]
    ZeroArea([f64; 4]),
    #[error("invalid readability parameter {name}: {reason}")]
    Param { name: &'static str, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(
    default,
    deny_unknown_fields,
    bound(serialize = "T: Scalar", deserialize = "T: Scalar")
)]
pub struct AroParams<T: Scalar> {
    /// Contrast ratio every covered pixel must reach, `>= 1`.
    pub target_contrast: T,
    /// Fraction of sampled pixels that must reach the target, `(0, 1]`.
    pub coverage: T,
    /// Expansion of the text box on every side, pixels.
    pub padding: T,
    /// Corner radius as a fraction of the expanded box's smaller side.
    pub radius_fraction: T,
    /// Opacity margin added to the solved minimum.
    pub epsilon: T,
    /// Opacity floor.
    pub alpha_min: T,
    /// Grid spacing of the opacity search, `(0, 0.05]`.
    pub alpha_step: T,
}

impl<T: Scalar> Default for AroParams<T> {
    fn default() -> Self {
        Self {
            target_contrast: T::lit(7.0),
            coverage: T::lit(0.98),
            padding: T::lit(24.0),
            radius_fraction: T::lit(0.12),
            epsilon: T::lit(0.02),
            alpha_min: T::lit(0.15),
            alpha_step: T::lit(0.001),
        }
    }
}

impl<T: Scalar> AroParams<T> {
    pub fn validate(&self) -> Result<(), AroError> {
        let check = |name: &'static str, ok: bool, v: T, range: &str| {
            if ok {
                Ok(())
            } else {
                Err(AroError::Param {
                    name,
                    reason: format!("{v} not in {range}"),
                })
            }
        };
        let (zero, one) = (T::zero(), T::one());
        check(
            "target_contrast",
            self.target_contrast >= one && self.target_contrast.is_finite(),
            self.target_contrast,
            "[1, inf)",
        )?;
        check(
            "coverage",
            self.coverage > zero && self.coverage <= one,
            self.coverage,
            "(0, 1]",
        )?;
        check(
            "padding",
            self.padding >= zero && self.padding.is_finite(),
            self.padding,
            "[0, inf)",
        )?;
        check(
            "radius_fraction",
            self.radius_fraction >= zero && self.radius_fraction <= T::lit(0.5),
            self.radius_fraction,
            "[0, 0.5]",
        )?;
        check(
            "epsilon",
            self.epsilon >= zero && self.epsilon <= one,
            self.epsilon,
            "[0, 1]",
        )?;
        check(
            "alpha_min",
            self.alpha_min >= zero && self.alpha_min <= one,
            self.alpha_min,
            "[0, 1]",
        )?;
        check(
            "alpha_step",
            self.alpha_step > zero && self.alpha_step <= T::lit(0.05),
            self.alpha_step,
            "(0, 0.05]",
        )
    }

    /// Opacity grid `{0, 1/n, ..., 1}` with `n = ceil(1 / alpha_step)`.
    pub fn grid(&self) -> AlphaGrid {
        let n = (T::one() / self.alpha_step - T::lit(1e-9)).ceil().to_f64_lossy();
        AlphaGrid {
            steps: n.max(1.0) as usize,
        }
    }
}

/// Uniform opacity grid with `steps + 1` points from 0 to 1 inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AlphaGrid {
    pub steps: usize,
}

impl AlphaGrid {
    pub fn alpha<T: Scalar>(&self, index: usize) -> T {
        T::from_usize_lossy(index) / T::from_usize_lossy(self.steps)
    }

    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

pub fn blend_luminance<T: Scalar>(alpha: T, l_overlay: Luminance<T>, l_bg: Luminance<T>) -> Luminance<T> {
    Luminance::new(alpha * l_overlay.value() + (T::one() - alpha) * l_bg.value())
}

/// Light neutral behind dark text, dark neutral behind light text; a text
/// luminance of exactly 0.5 gets the dark neutral.
pub fn choose_overlay_color<T: Scalar>(text_color: &Rgb<T>) -> Rgb<T> {
    overlay_color_for(relative_luminance(text_color))
}

pub fn overlay_color_for<T: Scalar>(l_text: Luminance<T>) -> Rgb<T> {
    if l_text.value() < T::lit(0.5) {
        Rgb::gray(T::lit(0.98))
    } else {
        Rgb::gray(T::lit(0.06))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct AlphaSolution<T: Scalar> {
    pub alpha_star: T,
    pub grid_index: usize,
    /// Fraction of samples meeting the target at `alpha_star`.
    pub coverage: T,
    pub attainable: bool,
}

/// Contrast predicate shared by the solver and the coverage helper.
#[inline]
fn meets<T: Scalar>(alpha: T, lo: Luminance<T>, lbg: Luminance<T>, lt: Luminance<T>, tau: T) -> bool {
    contrast_ratio(blend_luminance(alpha, lo, lbg), lt) >= tau
}

/// Fraction of samples with contrast at least `tau` after blending at `alpha`.
pub fn coverage_at<T: Scalar>(
    bg: &[Luminance<T>],
    alpha: T,
    l_overlay: Luminance<T>,
    l_text: Luminance<T>,
    tau: T,
) -> T {
    if bg.is_empty() {
        return T::zero();
    }
    let hits = bg.iter().filter(|&&l| meets(alpha, l_overlay, l, l_text, tau)).count();
    T::from_usize_lossy(hits) / T::from_usize_lossy(bg.len())
}

/// Smallest grid opacity at which the coverage fraction reaches
/// `params.coverage`. When no grid opacity qualifies the result is
/// `alpha_star = 1` with `attainable = false`.
///
/// Each sample's feasible opacities form at most two runs on the grid
/// (blending into the dark or the light acceptable band). The runs are
/// located in closed form, snapped with the exact predicate, and summed
/// with a difference array, so the cost is `O(samples + grid)`.
pub fn solve_alpha<T: Scalar>(
    bg: &[Luminance<T>],
    l_overlay: Luminance<T>,
    l_text: Luminance<T>,
    params: &AroParams<T>,
) -> Result<AlphaSolution<T>, AroError> {
    if bg.is_empty() {
        return Err(AroError::NoPixels);
    }
    if let Some(i) = bg.iter().position(|l| !l.value().is_finite()) {
        return Err(AroError::InvalidSample(i));
    }
    if !l_overlay.value().is_finite() || !l_text.value().is_finite() {
        return Err(AroError::InvalidSample(usize::MAX));
    }
    let grid = params.grid();
    let n = grid.steps;
    let tau = params.target_contrast;
    let mut diff = vec![0i64; n + 2];
    for &lbg in bg {
        for (a, b) in feasible_runs(lbg, l_overlay, l_text, tau, grid) {
            diff[a] += 1;
            diff[b + 1] -= 1;
        }
    }
    let total = T::from_usize_lossy(bg.len());
    let mut count = 0i64;
    let mut last = T::zero();
    for (i, d) in diff.iter().take(n + 1).enumerate() {
        count += d;
        let frac = T::from_usize_lossy(count as usize) / total;
        if frac >= params.coverage {
            return Ok(AlphaSolution {
                alpha_star: grid.alpha(i),
                grid_index: i,
                coverage: frac,
                attainable: true,
            });
        }
        last = frac;
    }
    Ok(AlphaSolution {
        alpha_star: T::one(),
        grid_index: n,
        coverage: last,
        attainable: false,
    })
}

/// Inclusive grid-index runs where the predicate holds for one sample.
fn feasible_runs<T: Scalar>(
    lbg: Luminance<T>,
    lo: Luminance<T>,
    lt: Luminance<T>,
    tau: T,
    grid: AlphaGrid,
) -> Vec<(usize, usize)> {
    let n = grid.steps;
    let pred = |i: usize| meets(grid.alpha(i), lo, lbg, lt, tau);
    let delta = lo.value() - lbg.value();
    if delta == T::zero() {
        return if pred(0) { vec![(0, n)] } else { Vec::new() };
    }

    let k = T::lit(0.05);
    let dark = (lt.value() + k) / tau - k;
    let light = tau * (lt.value() + k) - k;
    // alpha at which the blend reaches a band edge
    let cross = |edge: T| (edge - lbg.value()) / delta;
    let (zero, one) = (T::zero(), T::one());
    let mut approx: Vec<(T, T)> = Vec::with_capacity(2);
    // blend <= dark
    if dark >= zero {
        let c = cross(dark);
        approx.push(if delta > zero { (zero, c) } else { (c, one) });
    }
    // blend >= light
    if light <= one {
        let c = cross(light);
        approx.push(if delta > zero { (c, one) } else { (zero, c) });
    }

    let nf = T::from_usize_lossy(n);
    let to_index = |v: T, up: bool| -> i64 {
        let s = (v * nf).max(-T::one()).min(nf + T::one());
        let s = if up { s.ceil() } else { s.floor() };
        s.to_f64_lossy() as i64
    };

    let mut runs: Vec<(usize, usize)> = Vec::with_capacity(2);
    for (a, b) in approx {
        let lo_i = to_index(a, true).clamp(0, n as i64) as usize;
        let hi_i = to_index(b, false).clamp(0, n as i64) as usize;
        // seed with a grid point that truly satisfies the predicate
        let seed = if lo_i <= hi_i && pred(lo_i) {
            Some(lo_i)
        } else if lo_i <= hi_i && pred(hi_i) {
            Some(hi_i)
        } else {
            let near = [lo_i.saturating_sub(1), lo_i, hi_i, (hi_i + 1).min(n)];
            near.into_iter().find(|&i| pred(i))
        };
        let Some(seed) = seed else {
            // an interior point may still hold when both ends rounded badly
            if lo_i + 1 < hi_i && pred((lo_i + hi_i) / 2) {
                runs.push(extend((lo_i + hi_i) / 2, n, &pred));
            }
            continue;
        };
        runs.push(extend(seed, n, &pred));
    }
    runs.sort_unstable();
    let mut merged: Vec<(usize, usize)> = Vec::with_capacity(2);
    for (a, b) in runs {
        match merged.last_mut() {
            Some(last) if a <= last.1 + 1 => last.1 = last.1.max(b),
            _ => merged.push((a, b)),
        }
    }
    merged
}

fn extend(seed: usize, n: usize, pred: &impl Fn(usize) -> bool) -> (usize, usize) {
    let (mut a, mut b) = (seed, seed);
    while a > 0 && pred(a - 1) {
        a -= 1;
    }
    while b < n && pred(b + 1) {
        b += 1;
    }
    (a, b)
}

/// `min(1, max(alpha_star + epsilon, alpha_min))`.
pub fn finalize_alpha<T: Scalar>(alpha_star: T, params: &AroParams<T>) -> T {
    (alpha_star + params.epsilon).max(params.alpha_min).min(T::one())
}

/// One rounded, semi-transparent backing behind a text box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct BackingOverlay<T: Scalar> {
    pub text_box: Rect<T>,
    /// Text box expanded by the padding and clamped to the image.
    #[serde(rename = "box")]
    pub bbox: Rect<T>,
    pub corner_radius: T,
    pub overlay_color: Rgb<T>,
    pub alpha: T,
    pub solved_alpha_star: T,
    pub attained_coverage: T,
    pub unattainable: bool,
    pub sample_count: usize,
}

/// Luminances under `span`, stride-subsampled beyond [`MAX_SAMPLES`].
pub fn sample_luminance<T: Scalar>(image: &RasterImage<T>, span: &PixelSpan) -> Vec<Luminance<T>> {
    let count = span.count();
    let stride = if count > MAX_SAMPLES {
        ((count as f64 / MAX_SAMPLES as f64).sqrt().ceil()) as usize
    } else {
        1
    };
    (span.y0..span.y1)
        .step_by(stride)
        .flat_map(|y| (span.x0..span.x1).step_by(stride).map(move |x| (x, y)))
        .map(|(x, y)| image.luminance_at(x, y))
        .collect()
}

pub fn build_overlay<T: Scalar>(
    text_box: &Rect<T>,
    text_color: &Rgb<T>,
    background: &RasterImage<T>,
    params: &AroParams<T>,
) -> Result<BackingOverlay<T>, AroError> {
    let (w, h) = (
        T::from_usize_lossy(background.width()),
        T::from_usize_lossy(background.height()),
    );
    let raw = text_box.expand(params.padding);
    let bbox = raw
        .clamp_to(w, h)
        .ok_or(AroError::ZeroArea(raw.as_array().map(Scalar::to_f64_lossy)))?;
    let span = PixelSpan::of(&bbox, background.width(), background.height());
    if span.is_empty() {
        return Err(AroError::ZeroArea(bbox.as_array().map(Scalar::to_f64_lossy)));
    }
    let samples = sample_luminance(background, &span);
    let overlay_color = choose_overlay_color(text_color);
    let sol = solve_alpha(
        &samples,
        relative_luminance(&overlay_color),
        relative_luminance(text_color),
        params,
    )?;
    Ok(BackingOverlay {
        text_box: *text_box,
        bbox,
        corner_radius: params.radius_fraction * bbox.width().min(bbox.height()),
        overlay_color,
        alpha: finalize_alpha(sol.alpha_star, params),
        solved_alpha_star: sol.alpha_star,
        attained_coverage: sol.coverage,
        unattainable: !sol.attainable,
        sample_count: samples.len(),
    })
}

fn inside_rounded<T: Scalar>(px: T, py: T, r: &Rect<T>, radius: T) -> bool {
    if px < r.x0 || px > r.x1 || py < r.y0 || py > r.y1 {
        return false;
    }
    let cx = px.max(r.x0 + radius).min(r.x1 - radius);
    let cy = py.max(r.y0 + radius).min(r.y1 - radius);
    let (dx, dy) = (px - cx, py - cy);
    dx * dx + dy * dy <= radius * radius
}

/// Fraction of pixel `(x, y)` inside the rounded rectangle, from a
/// 4x4 grid of subpixel samples.
pub fn rounded_rect_coverage<T: Scalar>(x: usize, y: usize, rect: &Rect<T>, radius: T) -> T {
    let radius = radius.max(T::zero()).min(rect.width().min(rect.height()) / T::lit(2.0));
    let s = EDGE_SUPERSAMPLE;
    let sf = T::from_usize_lossy(s);
    let mut hits = 0usize;
    for j in 0..s {
        let py = T::from_usize_lossy(y) + (T::from_usize_lossy(j) + T::lit(0.5)) / sf;
        for i in 0..s {
            let px = T::from_usize_lossy(x) + (T::from_usize_lossy(i) + T::lit(0.5)) / sf;
            if inside_rounded(px, py, rect, radius) {
                hits += 1;
            }
        }
    }
    if hits == s * s {
        T::one()
    } else {
        T::from_usize_lossy(hits) / sf / sf
    }
}

/// Source-over of one backing onto `image` in place. Blending happens in
/// linear light so the composited luminance equals the blended luminance the
/// solver assumed; fully opaque pixels take the overlay color exactly.
pub fn composite_overlay_into<T: Scalar>(image: &mut RasterImage<T>, overlay: &BackingOverlay<T>) {
    let (w, h) = (image.width(), image.height());
    let r = &overlay.bbox;
    let x0 = r.x0.floor().to_f64_lossy().max(0.0) as usize;
    let y0 = r.y0.floor().to_f64_lossy().max(0.0) as usize;
    let x1 = (r.x1.ceil().to_f64_lossy().max(0.0) as usize).min(w);
    let y1 = (r.y1.ceil().to_f64_lossy().max(0.0) as usize).min(h);
    let c = overlay.overlay_color;
    let alpha = clamp01(overlay.alpha);
    for y in y0..y1 {
        for x in x0..x1 {
            let a = rounded_rect_coverage(x, y, r, overlay.corner_radius) * alpha;
            if a == T::zero() {
                continue;
            }
            let p = image.get_mut(x, y);
            if a == T::one() {
                *p = [c.r, c.g, c.b, T::one()];
                continue;
            }
            let keep = T::one() - a;
            for (ch, src) in p.iter_mut().zip([c.r, c.g, c.b]) {
                *ch = linear_to_srgb(a * srgb_to_linear(src) + keep * srgb_to_linear(*ch));
            }
            p[3] = a + keep * p[3];
        }
    }
}

/// Composites the backings in order onto a copy of `background`.
pub fn composite_overlays<T: Scalar>(background: &RasterImage<T>, overlays: &[BackingOverlay<T>]) -> RasterImage<T> {
    let mut out = background.clone();
    for o in overlays {
        composite_overlay_into(&mut out, o);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    type L = Luminance<f64>;

    fn l(v: f64) -> L {
        Luminance::new(v)
    }

    fn exact() -> AroParams<f64> {
        AroParams {
            epsilon: 0.0,
            alpha_min: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn blend_examples() {
        assert_eq!(blend_luminance(1.0, l(0.3), l(0.9)).value(), 0.3);
        assert_eq!(blend_luminance(0.0, l(0.3), l(0.9)).value(), 0.9);
        assert!((blend_luminance(0.5, l(1.0), l(0.2)).value() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn overlay_color_rule() {
        let light = Rgb::gray(0.98);
        let dark = Rgb::gray(0.06);
        assert_eq!(choose_overlay_color(&Rgb::<f64>::black()), light);
        assert_eq!(choose_overlay_color(&Rgb::<f64>::white()), dark);
        assert_eq!(overlay_color_for(l(0.5)), dark);
        assert_eq!(overlay_color_for(l(0.499_999)), light);
        // both neutrals reach 7:1 against pure black / white
        assert!(contrast_ratio(light.luminance(), l(0.0)) >= 7.0);
        assert!(contrast_ratio(dark.luminance(), l(1.0)) >= 7.0);
    }

    #[test]
    fn solve_trivial_when_overlay_equals_background() {
        let s = solve_alpha(&[l(1.0); 10], l(1.0), l(0.0), &exact()).unwrap();
        assert_eq!(s.alpha_star, 0.0);
        assert!(s.attainable);
    }

    #[test]
    fn solve_closed_form_example() {
        // (a + (1-a)*0.05 + 0.05) / 0.05 >= 7  =>  a >= 0.25 / 0.95 = 0.26316
        let s = solve_alpha(&[l(0.05); 50], l(1.0), l(0.0), &exact()).unwrap();
        assert_eq!(s.grid_index, 264);
        assert!((s.alpha_star - 0.264).abs() < 1e-12);
        assert_eq!(s.coverage, 1.0);
    }

    #[test]
    fn solve_flags_unattainable() {
        let params = AroParams {
            target_contrast: 9.0,
            ..exact()
        };
        let s = solve_alpha(&[l(0.3), l(0.9)], l(1.0), l(0.18), &params).unwrap();
        assert!(!s.attainable);
        assert_eq!(s.alpha_star, 1.0);
        assert_eq!(s.coverage, 0.0);
    }

    #[test]
    fn solve_errors() {
        assert_eq!(solve_alpha(&[], l(1.0), l(0.0), &exact()), Err(AroError::NoPixels));
        let bad = [l(0.2), Luminance::new(f64::NAN)];
        assert_eq!(
            solve_alpha(&bad, l(1.0), l(0.0), &exact()),
            Err(AroError::InvalidSample(1))
        );
    }

    #[test]
    fn finalize_examples() {
        let p = AroParams::<f64>::default();
        assert_eq!(finalize_alpha(0.0, &p), 0.15);
        assert_eq!(finalize_alpha(0.99, &p), 1.0);
        assert_eq!(finalize_alpha(0.5, &exact()), 0.5);
    }

    #[test]
    fn grid_from_step() {
        assert_eq!(AroParams::<f64>::default().grid().steps, 1000);
        let p = AroParams::<f64> {
            alpha_step: 0.03,
            ..Default::default()
        };
        assert_eq!(p.grid().steps, 34);
        assert_eq!(p.grid().alpha::<f64>(34), 1.0);
    }

    #[test]
    fn params_validation() {
        assert!(AroParams::<f64>::default().validate().is_ok());
        let bad = AroParams::<f64> {
            alpha_step: 0.1,
            ..Default::default()
        };
        assert!(matches!(
            bad.validate(),
            Err(AroError::Param { name: "alpha_step", .. })
        ));
        let bad = AroParams::<f64> {
            target_contrast: 0.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn build_overlay_geometry_and_tier() {
        let bg = RasterImage::filled(400, 300, Rgb::<f64>::white()).unwrap();
        let text = Rect::from_f64(100.0, 100.0, 300.0, 140.0);
        let o = build_overlay(&text, &Rgb::black(), &bg, &AroParams::default()).unwrap();
        assert_eq!(o.bbox, Rect::from_f64(76.0, 76.0, 324.0, 164.0));
        assert!((o.corner_radius - 10.56).abs() < 1e-12);
        assert_eq!(o.solved_alpha_star, 0.0);
        assert_eq!(o.alpha, 0.15);
        assert_eq!(o.sample_count, 248 * 88);
        assert!(!o.unattainable);
    }

    #[test]
    fn build_overlay_offimage_errors() {
        let bg = RasterImage::filled(100, 100, Rgb::<f64>::white()).unwrap();
        let text = Rect::from_f64(500.0, 500.0, 600.0, 520.0);
        assert!(matches!(
            build_overlay(&text, &Rgb::black(), &bg, &AroParams::default()),
            Err(AroError::ZeroArea(_))
        ));
    }

    fn overlay(rect: Rect<f64>, color: Rgb<f64>, alpha: f64, radius: f64) -> BackingOverlay<f64> {
        BackingOverlay {
            text_box: rect,
            bbox: rect,
            corner_radius: radius,
            overlay_color: color,
            alpha,
            solved_alpha_star: alpha,
            attained_coverage: 1.0,
            unattainable: false,
            sample_count: 0,
        }
    }

    #[test]
    fn composite_examples() {
        let bg = RasterImage::filled(40, 30, Rgb::<f64>::black()).unwrap();
        assert_eq!(composite_overlays(&bg, &[]), bg);

        let red = Rgb::from_f64(1.0, 0.0, 0.0);
        let out = composite_overlays(&bg, &[overlay(Rect::from_f64(5.0, 5.0, 35.0, 25.0), red, 1.0, 4.0)]);
        assert_eq!(out.get(20, 15), [1.0, 0.0, 0.0, 1.0]);
        // outside untouched
        assert_eq!(out.get(1, 1), bg.get(1, 1));
        // the very corner pixel is outside the rounded shape
        assert_eq!(out.get(5, 5), bg.get(5, 5));

        let out = composite_overlays(
            &bg,
            &[overlay(Rect::from_f64(5.0, 5.0, 35.0, 25.0), Rgb::white(), 0.5, 4.0)],
        );
        let mid = linear_to_srgb(0.5);
        assert_eq!(out.get(20, 15), [mid, mid, mid, 1.0]);
        assert!((out.luminance_at(20, 15).value() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn composite_edge_is_antialiased() {
        let bg = RasterImage::filled(20, 20, Rgb::<f64>::black()).unwrap();
        let out = composite_overlays(
            &bg,
            &[overlay(Rect::from_f64(5.5, 5.0, 15.0, 15.0), Rgb::white(), 1.0, 0.0)],
        );
        // left edge pixel is half covered
        assert_eq!(out.get(5, 10)[0], linear_to_srgb(0.5));
    }

    #[test]
    fn rounded_coverage_bounds() {
        let r = Rect::<f64>::from_f64(0.0, 0.0, 10.0, 10.0);
        assert_eq!(rounded_rect_coverage(5, 5, &r, 3.0), 1.0);
        let corner = rounded_rect_coverage(0, 1, &r, 3.0);
        assert_eq!(rounded_rect_coverage(0, 0, &r, 3.0), 0.0);
        assert!(corner > 0.0 && corner < 1.0);
        assert_eq!(rounded_rect_coverage(0, 0, &r, 0.0), 1.0);
    }
}
