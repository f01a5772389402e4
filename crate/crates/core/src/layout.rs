//! Foreground region extraction from page layouts.
//!
//! Lines are grouped into paragraphs by left margin and vertical gap, the
//! paragraphs are split into top/side/bottom bands around image zones,
//! merged into column-like regions inside each band, and finally pruned by
//! containment/IoU suppression. Precise line boxes feed the readability
//! backings; the surviving regions feed the latent mask.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::color::Rgb;
use crate::geometry::{overlap_x, Rect};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct TextLine<T: Scalar> {
    pub bbox: Rect<T>,
    pub text: String,
    /// Rules, ornaments and other non-text marks; may carry empty text.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub decorative: bool,
    /// Optional text color (sRGB, `[0, 1]`); the configured default applies otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<Rgb<T>>,
}

impl<T: Scalar> TextLine<T> {
    pub fn new(bbox: Rect<T>, text: impl Into<String>) -> Self {
        Self {
            bbox,
            text: text.into(),
            decorative: false,
            color: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct ImageZone<T: Scalar> {
    pub bbox: Rect<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct PageLayout<T: Scalar> {
    #[serde(rename = "index")]
    pub page_index: usize,
    pub width: T,
    pub height: T,
    #[serde(default)]
    pub lines: Vec<TextLine<T>>,
    #[serde(default)]
    pub images: Vec<ImageZone<T>>,
}

/// A merged block of text lines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct Region<T: Scalar> {
    pub bbox: Rect<T>,
    pub text: String,
    /// Indices into the page's line list, ascending.
    pub member_line_ids: Vec<usize>,
    /// Median height of the member lines.
    pub line_height: T,
}

/// Vertical gap tolerance, either absolute or relative to the median line height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub enum VerticalGap<T: Scalar> {
    Points(T),
    LineHeights(T),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(
    default,
    deny_unknown_fields,
    bound(serialize = "T: Scalar", deserialize = "T: Scalar")
)]
pub struct ExtractionParams<T: Scalar> {
    /// Minimum horizontal overlap for column merging, in `(0, 1]`.
    pub eta_x: T,
    pub max_vgap: VerticalGap<T>,
    /// Maximum left-margin difference between lines of one paragraph, points.
    pub left_margin_tol: T,
    /// Containment threshold for suppression, in `(0, 1]`.
    pub tau_cont: T,
    /// IoU threshold for suppression, in `(0, 1]`.
    pub tau_iou: T,
    /// Adds image zones to the representative (masked) boxes.
    pub protect_images: bool,
}

impl<T: Scalar> Default for ExtractionParams<T> {
    fn default() -> Self {
        Self {
            eta_x: T::lit(0.5),
            max_vgap: VerticalGap::LineHeights(T::lit(1.5)),
            left_margin_tol: T::lit(4.0),
            tau_cont: T::lit(0.9),
            tau_iou: T::lit(0.5),
            protect_images: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid extraction parameter {name}: {reason}")]
pub struct ParamError {
    pub name: &'static str,
    pub reason: String,
}

fn unit_ratio<T: Scalar>(name: &'static str, v: T) -> Result<(), ParamError> {
    if v > T::zero() && v <= T::one() {
        Ok(())
    } else {
        Err(ParamError {
            name,
            reason: format!("{v} not in (0, 1]"),
        })
    }
}

impl<T: Scalar> ExtractionParams<T> {
    pub fn validate(&self) -> Result<(), ParamError> {
        unit_ratio("eta_x", self.eta_x)?;
        unit_ratio("tau_cont", self.tau_cont)?;
        unit_ratio("tau_iou", self.tau_iou)?;
        let gap = match self.max_vgap {
            VerticalGap::Points(v) | VerticalGap::LineHeights(v) => v,
        };
        if !(gap >= T::zero() && gap.is_finite()) {
            return Err(ParamError {
                name: "max_vgap",
                reason: format!("{gap} must be finite and non-negative"),
            });
        }
        if !(self.left_margin_tol >= T::zero() && self.left_margin_tol.is_finite()) {
            return Err(ParamError {
                name: "left_margin_tol",
                reason: format!("{} must be finite and non-negative", self.left_margin_tol),
            });
        }
        Ok(())
    }

    /// Absolute gap tolerance given the line heights in play.
    pub fn vgap_points(&self, line_heights: impl IntoIterator<Item = T>) -> T {
        match self.max_vgap {
            VerticalGap::Points(p) => p,
            VerticalGap::LineHeights(k) => k * median(line_heights.into_iter().collect()),
        }
    }

    /// Copy with the gap tolerance fixed in points for this set of lines.
    pub fn resolved_for(&self, lines: &[TextLine<T>]) -> Self {
        Self {
            max_vgap: VerticalGap::Points(self.vgap_points(lines.iter().map(|l| l.bbox.height()))),
            ..*self
        }
    }
}

fn median<T: Scalar>(mut v: Vec<T>) -> T {
    if v.is_empty() {
        return T::zero();
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / T::lit(2.0)
    }
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // smaller root wins so component ids are stable
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }

    fn components(&mut self) -> Vec<Vec<usize>> {
        let n = self.parent.len();
        let mut by_root: Vec<Vec<usize>> = vec![Vec::new(); n];
        for i in 0..n {
            let r = self.find(i);
            by_root[r].push(i);
        }
        by_root.into_iter().filter(|c| !c.is_empty()).collect()
    }
}

fn sort_reading<T: Scalar>(regions: &mut [Region<T>]) {
    regions.sort_by(|a, b| {
        a.bbox
            .reading_cmp(&b.bbox)
            .then_with(|| a.member_line_ids.cmp(&b.member_line_ids))
    });
}

fn join_texts<'a>(texts: impl Iterator<Item = &'a str>) -> String {
    texts
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Groups lines into paragraphs. Two lines are linked when their left
/// margins differ by at most `left_margin_tol` and their vertical gap is at
/// most the gap tolerance; paragraphs are the connected components.
///
/// `member_line_ids` index into `lines`.
pub fn group_paragraphs<T: Scalar>(lines: &[TextLine<T>], params: &ExtractionParams<T>) -> Vec<Region<T>> {
    let ids: Vec<usize> = (0..lines.len()).collect();
    group_indexed(lines, &ids, params)
}

fn group_indexed<T: Scalar>(lines: &[TextLine<T>], ids: &[usize], params: &ExtractionParams<T>) -> Vec<Region<T>> {
    if ids.is_empty() {
        return Vec::new();
    }
    let max_gap = params.vgap_points(ids.iter().map(|&i| lines[i].bbox.height()));
    let tol = params.left_margin_tol;

    // sweep in left-margin order; only lines within `tol` can link
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| {
        let (la, lb) = (&lines[ids[a]].bbox, &lines[ids[b]].bbox);
        la.x0.partial_cmp(&lb.x0).unwrap_or(Ordering::Equal).then(a.cmp(&b))
    });
    let mut dsu = DisjointSet::new(ids.len());
    for (pos, &a) in order.iter().enumerate() {
        let ba = &lines[ids[a]].bbox;
        for &b in &order[pos + 1..] {
            let bb = &lines[ids[b]].bbox;
            if bb.x0 - ba.x0 > tol {
                break;
            }
            if ba.vertical_gap(bb) <= max_gap {
                dsu.union(a, b);
            }
        }
    }

    let mut out: Vec<Region<T>> = dsu
        .components()
        .into_iter()
        .map(|members| {
            let mut members: Vec<usize> = members.into_iter().map(|m| ids[m]).collect();
            members.sort_by(|&a, &b| lines[a].bbox.reading_cmp(&lines[b].bbox).then(a.cmp(&b)));
            let bbox = members
                .iter()
                .map(|&m| lines[m].bbox)
                .reduce(|acc, b| acc.union(&b))
                .expect("component is non-empty");
            let text = join_texts(members.iter().map(|&m| lines[m].text.as_str()));
            let line_height = median(members.iter().map(|&m| lines[m].bbox.height()).collect());
            members.sort_unstable();
            Region {
                bbox,
                text,
                member_line_ids: members,
                line_height,
            }
        })
        .collect();
    sort_reading(&mut out);
    out
}

/// Paragraphs split into bands around the image zones.
#[derive(Debug, Clone, PartialEq)]
pub struct PagePartition<T: Scalar> {
    pub top: Vec<Region<T>>,
    pub side: Vec<Region<T>>,
    pub bottom: Vec<Region<T>>,
}

impl<T: Scalar> PagePartition<T> {
    pub fn groups(&self) -> [&[Region<T>]; 3] {
        [&self.top, &self.side, &self.bottom]
    }
}

/// Assigns each paragraph by its vertical center against the vertical
/// extent spanned by the image zones: above it goes to `top`, below to
/// `bottom`, within to `side`. Without images everything lands in `top`.
pub fn partition_by_images<T: Scalar>(paragraphs: Vec<Region<T>>, images: &[ImageZone<T>]) -> PagePartition<T> {
    let mut part = PagePartition {
        top: Vec::new(),
        side: Vec::new(),
        bottom: Vec::new(),
    };
    let extent = images
        .iter()
        .map(|z| (z.bbox.y0, z.bbox.y1))
        .reduce(|(a0, a1), (b0, b1)| (a0.min(b0), a1.max(b1)));
    let Some((lo, hi)) = extent else {
        part.top = paragraphs;
        return part;
    };
    for p in paragraphs {
        let cy = p.bbox.center_y();
        if cy < lo {
            part.top.push(p);
        } else if cy > hi {
            part.bottom.push(p);
        } else {
            part.side.push(p);
        }
    }
    part
}

/// Merges paragraphs of one band into column-like regions: the transitive
/// closure of `overlap_x >= eta_x` and vertical gap within tolerance.
pub fn merge_columns<T: Scalar>(group: &[Region<T>], params: &ExtractionParams<T>) -> Vec<Region<T>> {
    if group.is_empty() {
        return Vec::new();
    }
    let mut sorted = group.to_vec();
    sort_reading(&mut sorted);
    let max_gap = params.vgap_points(sorted.iter().map(|r| r.line_height));

    let n = sorted.len();
    let mut dsu = DisjointSet::new(n);
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (&sorted[i].bbox, &sorted[j].bbox);
            if overlap_x(a, b) >= params.eta_x && a.vertical_gap(b) <= max_gap {
                dsu.union(i, j);
            }
        }
    }

    let mut out: Vec<Region<T>> = dsu
        .components()
        .into_iter()
        .map(|members| {
            // members ascend, so they are already in reading order
            let bbox = members
                .iter()
                .map(|&m| sorted[m].bbox)
                .reduce(|acc, b| acc.union(&b))
                .expect("component is non-empty");
            let text = join_texts(members.iter().map(|&m| sorted[m].text.as_str()));
            let mut ids: Vec<usize> = members
                .iter()
                .flat_map(|&m| sorted[m].member_line_ids.iter().copied())
                .collect();
            ids.sort_unstable();
            ids.dedup();
            let line_height = median(members.iter().map(|&m| sorted[m].line_height).collect());
            Region {
                bbox,
                text,
                member_line_ids: ids,
                line_height,
            }
        })
        .collect();
    sort_reading(&mut out);
    out
}

/// Containment/IoU suppression. Candidates are visited by descending area
/// and a candidate is dropped when it is largely contained in, or overlaps
/// too much with, an already kept region. Output is in reading order.
pub fn suppress<T: Scalar>(regions: &[Region<T>], params: &ExtractionParams<T>) -> Vec<Region<T>> {
    let mut by_area = regions.to_vec();
    by_area.sort_by(|a, b| {
        b.bbox
            .area()
            .partial_cmp(&a.bbox.area())
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.bbox.reading_cmp(&b.bbox))
            .then_with(|| a.member_line_ids.cmp(&b.member_line_ids))
    });
    let mut kept: Vec<Region<T>> = Vec::with_capacity(by_area.len());
    for cand in by_area {
        let redundant = kept
            .iter()
            .any(|q| cand.bbox.containment(&q.bbox) >= params.tau_cont || cand.bbox.iou(&q.bbox) >= params.tau_iou);
        if !redundant {
            kept.push(cand);
        }
    }
    sort_reading(&mut kept);
    kept
}

/// Result of extracting one page.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct Extraction<T: Scalar> {
    pub page_index: usize,
    pub width: T,
    pub height: T,
    /// Clamped line boxes in reading order.
    pub text_boxes: Vec<Rect<T>>,
    /// Per text box color, when the layout supplied one.
    pub text_colors: Vec<Option<Rgb<T>>>,
    pub regions: Vec<Region<T>>,
    /// Region boxes plus, when enabled, the image zones.
    pub representative_boxes: Vec<Rect<T>>,
    pub page_text: String,
}

pub fn extract<T: Scalar>(page: &PageLayout<T>, params: &ExtractionParams<T>) -> Extraction<T> {
    // clamp; drop decorative and fully off-page lines
    let clamped: Vec<TextLine<T>> = page
        .lines
        .iter()
        .map(|l| TextLine {
            bbox: l.bbox.clamp_to(page.width, page.height).unwrap_or(l.bbox),
            ..l.clone()
        })
        .collect();
    let mut kept: Vec<usize> = page
        .lines
        .iter()
        .enumerate()
        .filter(|(_, l)| !l.decorative && l.bbox.clamp_to(page.width, page.height).is_some())
        .map(|(i, _)| i)
        .collect();
    kept.sort_by(|&a, &b| clamped[a].bbox.reading_cmp(&clamped[b].bbox).then(a.cmp(&b)));

    let page_text = join_texts(kept.iter().map(|&i| clamped[i].text.as_str()));
    let text_boxes = kept.iter().map(|&i| clamped[i].bbox).collect();
    let text_colors = kept.iter().map(|&i| clamped[i].color).collect();

    let kept_lines: Vec<TextLine<T>> = kept.iter().map(|&i| clamped[i].clone()).collect();
    let params = params.resolved_for(&kept_lines);
    let paragraphs = group_indexed(&clamped, &kept, &params);
    let images: Vec<ImageZone<T>> = page
        .images
        .iter()
        .filter_map(|z| z.bbox.clamp_to(page.width, page.height).map(|bbox| ImageZone { bbox }))
        .collect();
    let partition = partition_by_images(paragraphs, &images);
    let merged: Vec<Region<T>> = partition
        .groups()
        .into_iter()
        .flat_map(|g| merge_columns(g, &params))
        .collect();
    let regions = suppress(&merged, &params);

    let mut representative_boxes: Vec<Rect<T>> = regions.iter().map(|r| r.bbox).collect();
    if params.protect_images {
        representative_boxes.extend(images.iter().map(|z| z.bbox));
    }

    Extraction {
        page_index: page.page_index,
        width: page.width,
        height: page.height,
        text_boxes,
        text_colors,
        regions,
        representative_boxes,
        page_text,
    }
}

// ---------------------------------------------------------------------------
// Interchange file

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct LayoutDocument<T: Scalar> {
    pub pages: Vec<PageLayout<T>>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LayoutError {
    #[error("no pages in layout file")]
    NoPages,
    #[error("layout schema error at {path} (line {line}, column {column}): {message}")]
    Schema {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid layout at {path}: {message}")]
    Invalid { path: String, message: String },
}

impl<T: Scalar> LayoutDocument<T> {
    pub fn from_json_str(src: &str) -> Result<Self, LayoutError> {
        if src.trim().is_empty() {
            return Err(LayoutError::NoPages);
        }
        let de = &mut serde_json::Deserializer::from_str(src);
        let doc: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let (line, column) = (inner.line(), inner.column());
            let full = inner.to_string();
            let suffix = format!(" at line {line} column {column}");
            LayoutError::Schema {
                path,
                line,
                column,
                message: full.strip_suffix(&suffix).unwrap_or(&full).to_string(),
            }
        })?;
        doc.validate()?;
        Ok(doc)
    }

    pub fn validate(&self) -> Result<(), LayoutError> {
        if self.pages.is_empty() {
            return Err(LayoutError::NoPages);
        }
        let mut seen = std::collections::BTreeSet::new();
        for (p, page) in self.pages.iter().enumerate() {
            let invalid = |path: String, message: String| LayoutError::Invalid { path, message };
            if !(page.width > T::zero() && page.width.is_finite() && page.height > T::zero() && page.height.is_finite())
            {
                return Err(invalid(
                    format!("pages[{p}]"),
                    "page width and height must be positive".into(),
                ));
            }
            if !seen.insert(page.page_index) {
                return Err(invalid(
                    format!("pages[{p}].index"),
                    format!("duplicate page index {}", page.page_index),
                ));
            }
            for (l, line) in page.lines.iter().enumerate() {
                if line.text.trim().is_empty() && !line.decorative {
                    return Err(invalid(
                        format!("pages[{p}].lines[{l}].text"),
                        "empty text on a line not flagged decorative".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}
