//! Attenuation masks over a latent lattice and a time-gated sampler that
//! scales the update field inside protected cells.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::color::Rgb;
use crate::geometry::Rect;
use crate::raster::{RasterError, RasterImage};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SamplerError {
    #[error("invalid mask parameter {name}: {reason}")]
    Param { name: &'static str, reason: String },
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch { expected: LatticeShape, got: LatticeShape },
    #[error("velocity length {got} does not match lattice size {expected} (provider {provider})")]
    VelocityLength {
        provider: String,
        expected: usize,
        got: usize,
    },
    #[error("non-finite velocity from provider {provider} at index {index}")]
    NonFinite { provider: String, index: usize },
    #[error("provider {provider} failed: {message}")]
    Provider { provider: String, message: String },
}

fn param_err(name: &'static str, reason: impl Into<String>) -> SamplerError {
    SamplerError::Param {
        name,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeShape {
    pub h: usize,
    pub w: usize,
    pub channels: usize,
}

impl LatticeShape {
    pub fn new(h: usize, w: usize, channels: usize) -> Result<Self, SamplerError> {
        if h == 0 || w == 0 || channels == 0 {
            return Err(param_err("lattice", format!("{h}x{w}x{channels} must be positive")));
        }
        Ok(Self { h, w, channels })
    }

    pub fn cells(&self) -> usize {
        self.h * self.w
    }

    pub fn len(&self) -> usize {
        self.cells() * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Default for LatticeShape {
    fn default() -> Self {
        Self {
            h: 64,
            w: 64,
            channels: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    tag = "kind",
    rename_all = "snake_case",
    bound(serialize = "T: Scalar", deserialize = "T: Scalar")
)]
pub enum MaskSource<T: Scalar> {
    CenteredWindow {
        rho_mask: T,
    },
    Boxes {
        boxes: Vec<Rect<T>>,
        page_width: T,
        page_height: T,
    },
}

/// Per-cell multiplier field: `lambda` on protected cells, 1 elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct AttenuationMask<T: Scalar> {
    pub shape: LatticeShape,
    pub lambda: T,
    pub source: MaskSource<T>,
    /// Row-major `h * w` values.
    pub values: Vec<T>,
}

impl<T: Scalar> AttenuationMask<T> {
    pub fn at(&self, i: usize, j: usize) -> T {
        self.values[i * self.shape.w + j]
    }

    pub fn is_masked(&self, cell: usize) -> bool {
        self.values[cell] != T::one()
    }

    pub fn masked_cells(&self) -> usize {
        (0..self.values.len()).filter(|&c| self.is_masked(c)).count()
    }

    /// Identity mask (nothing protected).
    pub fn ones(shape: LatticeShape, lambda: T) -> Self {
        Self {
            shape,
            lambda,
            source: MaskSource::CenteredWindow { rho_mask: T::zero() },
            values: vec![T::one(); shape.cells()],
        }
    }

    /// Grayscale visualization, one pixel per cell (value 1 is white).
    pub fn to_raster(&self) -> Result<RasterImage<T>, RasterError> {
        RasterImage::from_fn(self.shape.w, self.shape.h, |x, y| Rgb::gray(self.at(y, x)))
    }
}

fn check_lambda<T: Scalar>(lambda: T) -> Result<(), SamplerError> {
    if lambda > T::zero() && lambda <= T::one() {
        Ok(())
    } else {
        Err(param_err("lambda", format!("{lambda} not in (0, 1]")))
    }
}

/// Centered window of `round(sqrt(rho) * h) x round(sqrt(rho) * w)` cells.
pub fn build_mask_centered<T: Scalar>(
    shape: LatticeShape,
    rho_mask: T,
    lambda: T,
) -> Result<AttenuationMask<T>, SamplerError> {
    check_lambda(lambda)?;
    if !(rho_mask >= T::zero() && rho_mask <= T::one()) {
        return Err(param_err("rho_mask", format!("{rho_mask} not in [0, 1]")));
    }
    let side = |n: usize| -> usize {
        let v = (rho_mask.sqrt() * T::from_usize_lossy(n)).round().to_f64_lossy() as usize;
        v.min(n)
    };
    let (rows, cols) = (side(shape.h), side(shape.w));
    let (r0, c0) = ((shape.h - rows) / 2, (shape.w - cols) / 2);
    let mut values = vec![T::one(); shape.cells()];
    for i in r0..r0 + rows {
        for j in c0..c0 + cols {
            values[i * shape.w + j] = lambda;
        }
    }
    Ok(AttenuationMask {
        shape,
        lambda,
        source: MaskSource::CenteredWindow { rho_mask },
        values,
    })
}

/// Rasterizes page-space boxes onto the lattice with outward rounding, so
/// any cell a box touches is protected.
pub fn build_mask_from_boxes<T: Scalar>(
    shape: LatticeShape,
    boxes: &[Rect<T>],
    page_width: T,
    page_height: T,
    lambda: T,
) -> Result<AttenuationMask<T>, SamplerError> {
    check_lambda(lambda)?;
    if !(page_width > T::zero() && page_height > T::zero()) {
        return Err(param_err("page", "page dimensions must be positive"));
    }
    let tol = T::lit(1e-9);
    let span = |a: T, b: T, extent: T, n: usize| -> (usize, usize) {
        let nf = T::from_usize_lossy(n);
        let lo = (a * nf / extent + tol).floor().max(T::zero()).min(nf);
        let hi = (b * nf / extent - tol).ceil().max(T::zero()).min(nf);
        (lo.to_f64_lossy() as usize, hi.to_f64_lossy() as usize)
    };
    let mut values = vec![T::one(); shape.cells()];
    for b in boxes {
        let (r0, r1) = span(b.y0, b.y1, page_height, shape.h);
        let (c0, c1) = span(b.x0, b.x1, page_width, shape.w);
        for i in r0..r1 {
            for j in c0..c1 {
                values[i * shape.w + j] = lambda;
            }
        }
    }
    Ok(AttenuationMask {
        shape,
        lambda,
        source: MaskSource::Boxes {
            boxes: boxes.to_vec(),
            page_width,
            page_height,
        },
        values,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct GateSchedule<T: Scalar> {
    pub total_steps: usize,
    /// Fraction of the schedule after which masking switches on.
    pub start_fraction: T,
}

impl<T: Scalar> GateSchedule<T> {
    pub fn new(total_steps: usize, start_fraction: T) -> Result<Self, SamplerError> {
        if total_steps == 0 {
            return Err(param_err("total_steps", "must be at least 1"));
        }
        if !(start_fraction >= T::zero() && start_fraction <= T::one()) {
            return Err(param_err("start_fraction", format!("{start_fraction} not in [0, 1]")));
        }
        Ok(Self {
            total_steps,
            start_fraction,
        })
    }
}

/// Masking is active at step `k` iff `k / K >= start_fraction`.
pub fn gate_active<T: Scalar>(k: usize, schedule: &GateSchedule<T>) -> bool {
    T::from_usize_lossy(k) / T::from_usize_lossy(schedule.total_steps) >= schedule.start_fraction
}

/// Latent values laid out channel-major: index `(c * h + i) * w + j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct LatentState<T: Scalar> {
    pub shape: LatticeShape,
    pub x: Vec<T>,
    /// Normalized time, 1 at the start of sampling and 0 at the end.
    pub t: T,
}

impl<T: Scalar> LatentState<T> {
    pub fn new(shape: LatticeShape, x: Vec<T>, t: T) -> Result<Self, SamplerError> {
        if x.len() != shape.len() {
            return Err(param_err("state", format!("{} values for {:?}", x.len(), shape)));
        }
        Ok(Self { shape, x, t })
    }

    pub fn filled(shape: LatticeShape, v: T) -> Self {
        Self {
            shape,
            x: vec![v; shape.len()],
            t: T::one(),
        }
    }

    /// Cell (row-major `i * w + j`) of a flat index.
    pub fn cell_of(&self, index: usize) -> usize {
        index % self.shape.cells()
    }
}

/// Anything that predicts an update field for a latent state.
pub trait VelocityProvider<T: Scalar> {
    fn id(&self) -> &str;
    fn evaluate(&self, state: &LatentState<T>) -> Result<Vec<T>, SamplerError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateMode {
    /// `x <- x - (m * v) dt` while the gate is active.
    #[default]
    Attenuate,
    /// `m * v + (1 - m) * stopgrad(v)`, which equals `v` at sampling time:
    /// the update is the plain one for any mask.
    Literal,
}

fn check_velocity<T: Scalar>(provider: &str, v: &[T], expected: usize) -> Result<(), SamplerError> {
    if v.len() != expected {
        return Err(SamplerError::VelocityLength {
            provider: provider.to_string(),
            expected,
            got: v.len(),
        });
    }
    if let Some(index) = v.iter().position(|x| !x.is_finite()) {
        return Err(SamplerError::NonFinite {
            provider: provider.to_string(),
            index,
        });
    }
    Ok(())
}

fn apply_update<T: Scalar>(
    state: &LatentState<T>,
    v: &[T],
    mask: &AttenuationMask<T>,
    masked: bool,
    dt: T,
) -> LatentState<T> {
    let cells = state.shape.cells();
    let x = if masked {
        state
            .x
            .iter()
            .zip(v)
            .enumerate()
            .map(|(idx, (&x, &v))| x - (mask.values[idx % cells] * v) * dt)
            .collect()
    } else {
        state.x.iter().zip(v).map(|(&x, &v)| x - v * dt).collect()
    };
    LatentState {
        shape: state.shape,
        x,
        t: (state.t - dt).max(T::zero()),
    }
}

fn check_shapes<T: Scalar>(state: &LatentState<T>, mask: &AttenuationMask<T>) -> Result<(), SamplerError> {
    let (s, m) = (state.shape, mask.shape);
    if s.h != m.h || s.w != m.w || mask.values.len() != m.cells() || state.x.len() != s.len() {
        return Err(SamplerError::ShapeMismatch { expected: s, got: m });
    }
    Ok(())
}

/// One update step at index `k` of the schedule.
pub fn gated_step<T: Scalar, P: VelocityProvider<T> + ?Sized>(
    state: &LatentState<T>,
    provider: &P,
    mask: &AttenuationMask<T>,
    schedule: &GateSchedule<T>,
    k: usize,
    dt: T,
    mode: UpdateMode,
) -> Result<LatentState<T>, SamplerError> {
    if dt.is_nan() || dt <= T::zero() {
        return Err(param_err("dt", format!("{dt} must be positive")));
    }
    check_shapes(state, mask)?;
    let v = provider.evaluate(state)?;
    check_velocity(provider.id(), &v, state.shape.len())?;
    let masked = mode == UpdateMode::Attenuate && gate_active(k, schedule);
    Ok(apply_update(state, &v, mask, masked, dt))
}

/// Per-step diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub step: usize,
    pub t: f64,
    pub gate_active: bool,
    pub mean_abs_v_inside: f64,
    pub mean_abs_v_outside: f64,
    pub mean_abs_disp_inside: f64,
    pub mean_abs_disp_outside: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct SamplerRun<T: Scalar> {
    pub state: LatentState<T>,
    pub trace: Vec<StepTrace>,
}

fn mean_abs_split<T: Scalar>(vals: impl Iterator<Item = (usize, T)>, mask: &AttenuationMask<T>) -> (f64, f64) {
    let cells = mask.shape.cells();
    let (mut si, mut ni, mut so, mut no) = (0.0, 0usize, 0.0, 0usize);
    for (idx, v) in vals {
        let a = v.abs().to_f64_lossy();
        if mask.is_masked(idx % cells) {
            si += a;
            ni += 1;
        } else {
            so += a;
            no += 1;
        }
    }
    let mean = |s: f64, n: usize| if n == 0 { 0.0 } else { s / n as f64 };
    (mean(si, ni), mean(so, no))
}

/// Runs `K` steps with `dt = 1/K` from `t = 1` towards 0.
pub fn run_sampler<T: Scalar, P: VelocityProvider<T> + ?Sized>(
    x0: &LatentState<T>,
    provider: &P,
    mask: &AttenuationMask<T>,
    schedule: &GateSchedule<T>,
    mode: UpdateMode,
) -> Result<SamplerRun<T>, SamplerError> {
    check_shapes(x0, mask)?;
    let k_total = schedule.total_steps;
    let dt = T::one() / T::from_usize_lossy(k_total);
    let mut state = x0.clone();
    let mut trace = Vec::with_capacity(k_total);
    for k in 0..k_total {
        let v = provider.evaluate(&state)?;
        check_velocity(provider.id(), &v, state.shape.len())?;
        let active = gate_active(k, schedule);
        let masked = mode == UpdateMode::Attenuate && active;
        let next = apply_update(&state, &v, mask, masked, dt);
        let (vi, vo) = mean_abs_split(v.iter().copied().enumerate(), mask);
        let (di, d_o) = mean_abs_split(next.x.iter().zip(&state.x).map(|(&a, &b)| a - b).enumerate(), mask);
        trace.push(StepTrace {
            step: k,
            t: state.t.to_f64_lossy(),
            gate_active: active,
            mean_abs_v_inside: vi,
            mean_abs_v_outside: vo,
            mean_abs_disp_inside: di,
            mean_abs_disp_outside: d_o,
        });
        state = next;
    }
    Ok(SamplerRun { state, trace })
}

// ---------------------------------------------------------------------------
// Toy providers

/// Spatially uniform field.
#[derive(Debug, Clone)]
pub struct ConstantVelocity<T: Scalar> {
    pub value: T,
}

impl<T: Scalar> VelocityProvider<T> for ConstantVelocity<T> {
    fn id(&self) -> &str {
        "constant"
    }

    fn evaluate(&self, state: &LatentState<T>) -> Result<Vec<T>, SamplerError> {
        Ok(vec![self.value; state.x.len()])
    }
}

/// Straight-path field `v = source - target`: integrating from `t = 1` to 0
/// carries `source` exactly onto `target` where unmasked.
#[derive(Debug, Clone)]
pub struct StraightPath<T: Scalar> {
    velocity: Vec<T>,
}

impl<T: Scalar> StraightPath<T> {
    pub fn new(source: &[T], target: &[T]) -> Self {
        Self {
            velocity: source.iter().zip(target).map(|(&s, &t)| s - t).collect(),
        }
    }
}

impl<T: Scalar> VelocityProvider<T> for StraightPath<T> {
    fn id(&self) -> &str {
        "straight_path"
    }

    fn evaluate(&self, _state: &LatentState<T>) -> Result<Vec<T>, SamplerError> {
        Ok(self.velocity.clone())
    }
}

/// State-dependent flow toward a target field: `v = (x - target) / t`.
/// Cells that lag behind (masked) are pulled harder on later steps.
#[derive(Debug, Clone)]
pub struct TextureFlow<T: Scalar> {
    pub target: Vec<T>,
}

impl<T: Scalar> VelocityProvider<T> for TextureFlow<T> {
    fn id(&self) -> &str {
        "texture_flow"
    }

    fn evaluate(&self, state: &LatentState<T>) -> Result<Vec<T>, SamplerError> {
        if self.target.len() != state.x.len() {
            return Err(SamplerError::VelocityLength {
                provider: self.id().into(),
                expected: state.x.len(),
                got: self.target.len(),
            });
        }
        let t = state.t.max(T::lit(1e-6));
        Ok(state.x.iter().zip(&self.target).map(|(&x, &g)| (x - g) / t).collect())
    }
}

/// Seeded procedural texture in `[0, 1]`: a two-color palette modulated by
/// a few random sinusoidal waves. Channels beyond RGB carry the raw wave.
pub fn procedural_texture<T: Scalar>(shape: LatticeShape, seed: u64) -> Vec<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a: [f64; 3] = [rng.gen(), rng.gen(), rng.gen()];
    let b: [f64; 3] = [rng.gen(), rng.gen(), rng.gen()];
    let waves: Vec<(f64, f64, f64, f64)> = (0..4)
        .map(|_| {
            (
                rng.gen_range(0.5..6.0),
                rng.gen_range(0.5..6.0),
                rng.gen_range(0.0..std::f64::consts::TAU),
                rng.gen_range(0.2..1.0),
            )
        })
        .collect();
    let weight: f64 = waves.iter().map(|w| w.3).sum();
    let mut out = Vec::with_capacity(shape.len());
    for c in 0..shape.channels {
        for i in 0..shape.h {
            for j in 0..shape.w {
                let (u, v) = (j as f64 / shape.w as f64, i as f64 / shape.h as f64);
                let s: f64 = waves
                    .iter()
                    .map(|&(fx, fy, ph, amp)| amp * (std::f64::consts::TAU * (fx * u + fy * v) + ph).sin())
                    .sum::<f64>()
                    / weight;
                let m = 0.5 + 0.5 * s;
                let val = if c < 3 { a[c] * (1.0 - m) + b[c] * m } else { m };
                out.push(T::lit(val.clamp(0.0, 1.0)));
            }
        }
    }
    out
}

/// Bilinear upsampling of channels 0..3 into an RGB raster.
pub fn decode_rgb<T: Scalar>(
    state: &LatentState<T>,
    width: usize,
    height: usize,
) -> Result<RasterImage<T>, RasterError> {
    let LatticeShape { h, w, channels } = state.shape;
    let at = |c: usize, i: usize, j: usize| -> T {
        let c = c.min(channels - 1);
        state.x[(c * h + i) * w + j]
    };
    let sample = |c: usize, fy: f64, fx: f64| -> T {
        let y = (fy - 0.5).clamp(0.0, (h - 1) as f64);
        let x = (fx - 0.5).clamp(0.0, (w - 1) as f64);
        let (i0, j0) = (y.floor() as usize, x.floor() as usize);
        let (i1, j1) = ((i0 + 1).min(h - 1), (j0 + 1).min(w - 1));
        let (ty, tx) = (T::lit(y - i0 as f64), T::lit(x - j0 as f64));
        let one = T::one();
        let top = at(c, i0, j0) * (one - tx) + at(c, i0, j1) * tx;
        let bot = at(c, i1, j0) * (one - tx) + at(c, i1, j1) * tx;
        top * (one - ty) + bot * ty
    };
    RasterImage::from_fn(width, height, |x, y| {
        let fy = (y as f64 + 0.5) * h as f64 / height as f64;
        let fx = (x as f64 + 0.5) * w as f64 / width as f64;
        Rgb::new(sample(0, fy, fx), sample(1, fy, fx), sample(2, fy, fx))
    })
}
