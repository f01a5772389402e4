//! Seeded generators and brute-force oracles shared by the integration tests.
//! The oracles deliberately avoid the library's own algorithms.

#![allow(dead_code)]

use std::collections::BTreeSet;

use docback::geometry::Rect;
use docback::layout::{ImageZone, TextLine};
use docback::raster::RasterImage;
use docback::Srgb;
use docback::{PageLayout, Region};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------------------
// Color oracle

pub fn lin(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

pub fn lum(rgb: [f64; 3]) -> f64 {
    0.2126 * lin(rgb[0]) + 0.7152 * lin(rgb[1]) + 0.0722 * lin(rgb[2])
}

pub fn ratio(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    (hi + 0.05) / (lo + 0.05)
}

/// Exhaustive scan over `{0, 1/steps, ..., 1}`. Returns the first grid index
/// meeting the coverage, or `None`.
pub fn scan_alpha(bg: &[f64], lo: f64, lt: f64, tau: f64, rho: f64, steps: usize) -> Option<usize> {
    (0..=steps).find(|&i| {
        let a = i as f64 / steps as f64;
        let hits = bg.iter().filter(|&&l| ratio(a * lo + (1.0 - a) * l, lt) >= tau).count();
        hits as f64 / bg.len() as f64 >= rho
    })
}

// ---------------------------------------------------------------------------
// Synthetic backgrounds

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackgroundKind {
    LinearGradient,
    RadialGradient,
    ValueNoise,
    PhotoLike,
    Stripes,
    SaltPepper,
}

pub const KINDS: [BackgroundKind; 6] = [
    BackgroundKind::LinearGradient,
    BackgroundKind::RadialGradient,
    BackgroundKind::ValueNoise,
    BackgroundKind::PhotoLike,
    BackgroundKind::Stripes,
    BackgroundKind::SaltPepper,
];

fn rand_rgb(r: &mut ChaCha8Rng) -> [f64; 3] {
    [r.gen(), r.gen(), r.gen()]
}

fn mix(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [0, 1, 2].map(|i| a[i] * (1.0 - t) + b[i] * t)
}

fn image(w: usize, h: usize, f: impl Fn(usize, usize) -> [f64; 3]) -> RasterImage<f64> {
    RasterImage::from_fn(w, h, |x, y| {
        let c = f(x, y);
        Srgb::new(c[0], c[1], c[2])
    })
    .unwrap()
}

/// Bilinear value noise over a `cells x cells` lattice of random colors.
fn value_noise(r: &mut ChaCha8Rng, w: usize, h: usize, cells: usize) -> Vec<[f64; 3]> {
    let lattice: Vec<[f64; 3]> = (0..(cells + 1) * (cells + 1)).map(|_| rand_rgb(r)).collect();
    let at = |i: usize, j: usize| lattice[i * (cells + 1) + j];
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let fy = y as f64 / h as f64 * cells as f64;
            let fx = x as f64 / w as f64 * cells as f64;
            let (i, j) = (fy.floor() as usize, fx.floor() as usize);
            let (ty, tx) = (fy - i as f64, fx - j as f64);
            let top = mix(at(i, j), at(i, j + 1), tx);
            let bot = mix(at(i + 1, j), at(i + 1, j + 1), tx);
            out.push(mix(top, bot, ty));
        }
    }
    out
}

pub fn background(kind: BackgroundKind, seed: u64, w: usize, h: usize) -> RasterImage<f64> {
    let r = &mut rng(seed);
    match kind {
        BackgroundKind::LinearGradient => {
            let (a, b) = (rand_rgb(r), rand_rgb(r));
            let th: f64 = r.gen_range(0.0..std::f64::consts::TAU);
            let (dx, dy) = (th.cos(), th.sin());
            let span = (w as f64).abs() * dx.abs() + (h as f64) * dy.abs();
            image(w, h, |x, y| {
                let p = (x as f64 - w as f64 / 2.0) * dx + (y as f64 - h as f64 / 2.0) * dy;
                mix(a, b, (p / span + 0.5).clamp(0.0, 1.0))
            })
        }
        BackgroundKind::RadialGradient => {
            let (a, b) = (rand_rgb(r), rand_rgb(r));
            let (cx, cy) = (r.gen_range(0.0..w as f64), r.gen_range(0.0..h as f64));
            let rad = r.gen_range(20.0..(w.max(h) as f64));
            image(w, h, |x, y| {
                let d = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
                mix(a, b, (d / rad).min(1.0))
            })
        }
        BackgroundKind::ValueNoise => {
            let cells = r.gen_range(2..24);
            let v = value_noise(r, w, h, cells);
            image(w, h, |x, y| v[y * w + x])
        }
        BackgroundKind::PhotoLike => {
            // smooth base, a few soft blobs, sinusoidal texture, fine grain
            let base = value_noise(r, w, h, 3);
            let blobs: Vec<(f64, f64, f64, [f64; 3])> = (0..r.gen_range(2..7))
                .map(|_| {
                    (
                        r.gen_range(0.0..w as f64),
                        r.gen_range(0.0..h as f64),
                        r.gen_range(8.0..60.0),
                        rand_rgb(r),
                    )
                })
                .collect();
            let (fx, fy, ph): (f64, f64, f64) = (r.gen_range(0.01..0.3), r.gen_range(0.01..0.3), r.gen());
            let grain: Vec<f64> = (0..w * h).map(|_| r.gen_range(-0.08..0.08)).collect();
            image(w, h, |x, y| {
                let mut c = base[y * w + x];
                for &(bx, by, s, col) in &blobs {
                    let d2 = (x as f64 - bx).powi(2) + (y as f64 - by).powi(2);
                    c = mix(c, col, (-d2 / (2.0 * s * s)).exp());
                }
                let wave = 0.15 * (fx * x as f64 + fy * y as f64 + ph * std::f64::consts::TAU).sin();
                c.map(|v| (v + wave + grain[y * w + x]).clamp(0.0, 1.0))
            })
        }
        BackgroundKind::Stripes => {
            let (a, b) = (rand_rgb(r), rand_rgb(r));
            let period = r.gen_range(1..12);
            let vertical: bool = r.gen();
            image(w, h, |x, y| {
                let k = if vertical { x } else { y };
                if (k / period) % 2 == 0 {
                    a
                } else {
                    b
                }
            })
        }
        BackgroundKind::SaltPepper => {
            let base = rand_rgb(r);
            let p: f64 = r.gen_range(0.01..0.5);
            let noise: Vec<u8> = (0..w * h)
                .map(|_| if r.gen_bool(p) { 1 + r.gen_range(0..2) } else { 0 })
                .collect();
            image(w, h, |x, y| match noise[y * w + x] {
                0 => base,
                1 => [0.0; 3],
                _ => [1.0; 3],
            })
        }
    }
}

/// Non-overlapping-ish text boxes inside a `w x h` image.
pub fn text_boxes(r: &mut ChaCha8Rng, w: usize, h: usize) -> Vec<Rect<f64>> {
    (0..r.gen_range(1..6))
        .map(|_| {
            let bw = r.gen_range(12.0..(w as f64 * 0.7));
            let bh = r.gen_range(6.0..30.0);
            let x0 = r.gen_range(0.0..(w as f64 - bw));
            let y0 = r.gen_range(0.0..(h as f64 - bh));
            Rect::from_f64(x0, y0, x0 + bw, y0 + bh)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Synthetic layouts

/// A page with 1-3 columns of jittered paragraphs, stray lines, and up to
/// two image zones.
pub fn random_page(seed: u64) -> PageLayout {
    let r = &mut rng(seed);
    let (width, height) = (612.0, 792.0);
    let mut lines = Vec::new();
    let cols = r.gen_range(1..4);
    let col_w = (width - 80.0) / cols as f64;
    for c in 0..cols {
        let mut y = r.gen_range(30.0..80.0);
        let x_base = 40.0 + c as f64 * col_w;
        while y < height - 60.0 {
            let x0 = x_base + r.gen_range(0.0..20.0);
            for _ in 0..r.gen_range(1..7) {
                let lh = r.gen_range(8.0..16.0);
                let jitter = r.gen_range(-6.0..6.0);
                let w = r.gen_range(40.0..col_w - 10.0);
                let lx = (x0 + jitter).max(0.0);
                lines.push(TextLine::new(Rect::from_f64(lx, y, lx + w, y + lh), "word word"));
                y += lh + r.gen_range(0.0..12.0);
                if y > height - 60.0 {
                    break;
                }
            }
            y += r.gen_range(0.0..40.0);
        }
    }
    for _ in 0..r.gen_range(0..5) {
        let x0 = r.gen_range(0.0..500.0);
        let y0 = r.gen_range(0.0..760.0);
        lines.push(TextLine::new(
            Rect::from_f64(x0, y0, x0 + r.gen_range(20.0..110.0), y0 + r.gen_range(6.0..20.0)),
            "stray",
        ));
    }
    let images = (0..r.gen_range(0..3))
        .map(|_| {
            let x0 = r.gen_range(0.0..400.0);
            let y0 = r.gen_range(0.0..600.0);
            ImageZone {
                bbox: Rect::from_f64(x0, y0, x0 + r.gen_range(60.0..200.0), y0 + r.gen_range(60.0..180.0)),
            }
        })
        .collect();
    PageLayout {
        page_index: seed as usize,
        width,
        height,
        lines,
        images,
    }
}

pub fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Connected components of a symmetric relation via Warshall's transitive
/// closure, as sets of element indices.
#[allow(clippy::needless_range_loop)]
pub fn closure_components(n: usize, related: impl Fn(usize, usize) -> bool) -> BTreeSet<Vec<usize>> {
    let mut reach = vec![vec![false; n]; n];
    for (i, row) in reach.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = i == j || related(i, j);
        }
    }
    for k in 0..n {
        for i in 0..n {
            if reach[i][k] {
                for j in 0..n {
                    if reach[k][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
    }
    (0..n).map(|i| (0..n).filter(|&j| reach[i][j]).collect()).collect()
}

/// Connected components of a symmetric relation by flood fill over all
/// pairs, as sets of element indices.
pub fn flood_components(n: usize, related: impl Fn(usize, usize) -> bool) -> BTreeSet<Vec<usize>> {
    let mut seen = vec![false; n];
    let mut out = BTreeSet::new();
    for s in 0..n {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        let (mut stack, mut members) = (vec![s], vec![s]);
        while let Some(i) = stack.pop() {
            for (j, s) in seen.iter_mut().enumerate() {
                if !*s && related(i, j) {
                    *s = true;
                    stack.push(j);
                    members.push(j);
                }
            }
        }
        members.sort_unstable();
        out.insert(members);
    }
    out
}

pub fn vgap(a: &Rect<f64>, b: &Rect<f64>) -> f64 {
    (a.y0.max(b.y0) - a.y1.min(b.y1)).max(0.0)
}

pub fn overlap_frac(a: &Rect<f64>, b: &Rect<f64>) -> f64 {
    let ov = (a.x1.min(b.x1) - a.x0.max(b.x0)).max(0.0);
    ov / (a.x1 - a.x0).min(b.x1 - b.x0).max(1.0)
}

pub fn inter(a: &Rect<f64>, b: &Rect<f64>) -> f64 {
    (a.x1.min(b.x1) - a.x0.max(b.x0)).max(0.0) * (a.y1.min(b.y1) - a.y0.max(b.y0)).max(0.0)
}

pub fn area(a: &Rect<f64>) -> f64 {
    (a.x1 - a.x0) * (a.y1 - a.y0)
}

/// Whether two boxes violate the suppression criterion.
pub fn redundant(a: &Rect<f64>, b: &Rect<f64>, tau_cont: f64, tau_iou: f64) -> bool {
    let i = inter(a, b);
    let small = area(a).min(area(b));
    let cont = if small > 0.0 { i / small } else { 0.0 };
    let uni = area(a) + area(b) - i;
    let iou = if uni > 0.0 { i / uni } else { 0.0 };
    cont >= tau_cont || iou >= tau_iou
}

pub fn id_sets(regions: &[Region]) -> BTreeSet<Vec<usize>> {
    regions.iter().map(|r| r.member_line_ids.clone()).collect()
}
