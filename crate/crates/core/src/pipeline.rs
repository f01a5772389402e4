//! End-to-end document runs: extraction, summaries and instructions,
//! backgrounds (supplied or toy-generated under a latent mask), backings,
//! composition, evaluation, and single-page refinement. Every run directory
//! carries a `manifest.json` with content hashes of all artifacts.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::aro::{build_overlay, AroParams, BackingOverlay};
use crate::color::Rgb;
use crate::compose::{compose_page, evaluate_wcag_per_box, PageLayers, ReadabilityReport};
use crate::geometry::Rect;
use crate::latentmask::{
    build_mask_from_boxes, decode_rgb, procedural_texture, run_sampler, AttenuationMask, GateSchedule, LatentState,
    LatticeShape, StepTrace, TextureFlow, UpdateMode,
};
use crate::layout::{extract, Extraction, ExtractionParams, LayoutDocument};
use crate::narrative::{
    instruct, run_document, summarize, Instruction, NarrativeBank, NarrativeError, OpenAiProvider, PageSummary,
    ProviderConfig, StubProvider, TextProvider, DEFAULT_WINDOW,
};
use crate::raster::Raster;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

// ---------------------------------------------------------------------------
// Configuration

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskConfig {
    pub lambda: f64,
    pub start_fraction: f64,
    pub mode: UpdateMode,
    pub lattice: LatticeShape,
    /// Sampler steps for toy backgrounds.
    pub steps: usize,
}

impl Default for MaskConfig {
    fn default() -> Self {
        Self {
            lambda: 0.2,
            start_fraction: 0.29,
            mode: UpdateMode::Attenuate,
            lattice: LatticeShape::default(),
            steps: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatingMode {
    /// Page summaries plus the optional user prompt.
    #[default]
    PromptText,
    /// User prompt only; page text is not summarized.
    PromptOnly,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderChoice {
    #[default]
    Stub,
    Openai(ProviderConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NarrativeConfig {
    pub window: usize,
    pub provider: ProviderChoice,
    pub mode: OperatingMode,
    pub prompt: Option<String>,
}

impl Default for NarrativeConfig {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            provider: ProviderChoice::Stub,
            mode: OperatingMode::PromptText,
            prompt: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    /// Pixels per layout point for toy backgrounds.
    pub pixels_per_point: f64,
    /// Text color for lines that do not carry their own.
    pub text_color: Rgb<f64>,
    /// Starting color of toy backgrounds.
    pub page_color: Rgb<f64>,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            pixels_per_point: 1.0,
            text_color: Rgb::black(),
            page_color: Rgb::white(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub threshold: f64,
    /// Fraction of box pixels that must reach the threshold; defaults to the
    /// backing coverage target.
    pub coverage: Option<f64>,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            threshold: crate::compose::AA_THRESHOLD,
            coverage: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub extraction: ExtractionParams<f64>,
    pub aro: AroParams<f64>,
    pub mask: MaskConfig,
    pub narrative: NarrativeConfig,
    pub render: RenderConfig,
    pub evaluation: EvaluationConfig,
    /// Worker threads for per-page stages; 0 uses every core.
    pub workers: usize,
}

impl PipelineConfig {
    pub fn from_json_str(src: &str) -> Result<Self, PipelineError> {
        let de = &mut serde_json::Deserializer::from_str(src);
        let config: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            PipelineError::config(format!("config field {path}: {}", e.into_inner()))
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::config(format!("reading {}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::config(m));
        self.extraction
            .validate()
            .map_err(|e| PipelineError::config(e.to_string()))?;
        self.aro.validate().map_err(|e| PipelineError::config(e.to_string()))?;
        let m = &self.mask;
        if !(m.lambda > 0.0 && m.lambda <= 1.0) {
            return bad(format!("mask.lambda {} not in (0, 1]", m.lambda));
        }
        if !(0.0..=1.0).contains(&m.start_fraction) {
            return bad(format!("mask.start_fraction {} not in [0, 1]", m.start_fraction));
        }
        if m.steps == 0 {
            return bad("mask.steps must be at least 1".into());
        }
        LatticeShape::new(m.lattice.h, m.lattice.w, m.lattice.channels)
            .map_err(|e| PipelineError::config(format!("mask.lattice: {e}")))?;
        if m.lattice.channels < 3 {
            return bad("mask.lattice needs at least 3 channels to decode color".into());
        }
        let prompt_given = self.narrative.prompt.as_deref().is_some_and(|p| !p.trim().is_empty());
        if self.narrative.mode == OperatingMode::PromptOnly && !prompt_given {
            return bad("narrative.mode prompt_only requires narrative.prompt".into());
        }
        let ppp = self.render.pixels_per_point;
        if !(ppp > 0.0 && ppp.is_finite()) {
            return bad(format!("render.pixels_per_point {ppp} must be positive"));
        }
        if !(self.evaluation.threshold >= 1.0 && self.evaluation.threshold <= 21.0) {
            return bad(format!(
                "evaluation.threshold {} not in [1, 21]",
                self.evaluation.threshold
            ));
        }
        if let Some(c) = self.evaluation.coverage {
            if !(c > 0.0 && c <= 1.0) {
                return bad(format!("evaluation.coverage {c} not in (0, 1]"));
            }
        }
        Ok(())
    }

    pub fn required_coverage(&self) -> f64 {
        self.evaluation.coverage.unwrap_or(self.aro.coverage)
    }

    /// Canonical JSON form; its hash identifies the configuration.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    /// Builds the configured text provider. Network providers read their key
    /// from the environment.
    pub fn provider(&self) -> Result<Box<dyn TextProvider>, PipelineError> {
        match &self.narrative.provider {
            ProviderChoice::Stub => Ok(Box::new(StubProvider)),
            ProviderChoice::Openai(cfg) => OpenAiProvider::from_env(cfg.clone())
                .map(|p| Box::new(p) as Box<dyn TextProvider>)
                .map_err(|e| PipelineError::config(e.to_string())),
        }
    }

    fn pool(&self) -> Result<rayon::ThreadPool, PipelineError> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| PipelineError::new(Stage::Config, None, ErrorClass::Other, e.to_string()))
    }
}

// ---------------------------------------------------------------------------
// Errors

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Config,
    Extract,
    Summarize,
    Instruct,
    Background,
    Aro,
    Compose,
    Evaluate,
    Write,
    Refine,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("stage serializes");
        f.write_str(s.as_str().unwrap_or("unknown"))
    }
}

/// Coarse error kind, mapped to process exit codes by the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Provider,
    Other,
}

#[derive(Debug, Clone, Error)]
#[error("{stage} stage failed{}: {message}", on_page(.page))]
pub struct PipelineError {
    pub stage: Stage,
    pub page: Option<usize>,
    pub class: ErrorClass,
    pub message: String,
}

fn on_page(page: &Option<usize>) -> String {
    page.map(|p| format!(" on page {p}")).unwrap_or_default()
}

impl PipelineError {
    pub fn new(stage: Stage, page: Option<usize>, class: ErrorClass, message: impl Into<String>) -> Self {
        Self {
            stage,
            page,
            class,
            message: message.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(Stage::Config, None, ErrorClass::Config, message)
    }

    fn other(stage: Stage, page: Option<usize>, e: impl fmt::Display) -> Self {
        Self::new(stage, page, ErrorClass::Other, e.to_string())
    }

    fn narrative(stage: Stage, page: Option<usize>, e: NarrativeError) -> Self {
        let class = if e.is_provider_error() {
            ErrorClass::Provider
        } else {
            ErrorClass::Other
        };
        Self::new(stage, page, class, e.to_string())
    }
}

// ---------------------------------------------------------------------------
// Manifest

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactRef {
    /// Relative to the run directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RunStatus {
    #[serde(rename = "ok")]
    Ok,
    #[serde(rename = "FAILED")]
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub stage: Stage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub page: Option<usize>,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackgroundMode {
    Supplied,
    Toy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageReadability {
    pub page_pass_rate: f64,
    pub pixel_pass_rate: f64,
    pub boxes: usize,
    pub unattainable_boxes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageEntry {
    pub index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instruction: Option<String>,
    pub artifacts: BTreeMap<String, ArtifactRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub readability: Option<PageReadability>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Refinement {
    pub page: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<FailureRecord>,
    pub config_sha256: String,
    pub layout_sha256: String,
    pub background_mode: BackgroundMode,
    pub provider_id: String,
    /// Document-level artifacts by name.
    pub artifacts: BTreeMap<String, ArtifactRef>,
    pub pages: Vec<PageEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub refinements: Vec<Refinement>,
}

impl Manifest {
    pub fn load(run_dir: &Path) -> Result<Self, PipelineError> {
        read_json(&run_dir.join(MANIFEST_FILE), Stage::Refine)
    }

    pub fn unattainable_boxes(&self) -> usize {
        self.pages
            .iter()
            .filter_map(|p| p.readability.as_ref())
            .map(|r| r.unattainable_boxes)
            .sum()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_artifact(run_dir: &Path, rel: &str, bytes: &[u8], page: Option<usize>) -> Result<ArtifactRef, PipelineError> {
    let path = run_dir.join(rel);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| PipelineError::other(Stage::Write, page, e))?;
    }
    std::fs::write(&path, bytes)
        .map_err(|e| PipelineError::other(Stage::Write, page, format!("{}: {e}", path.display())))?;
    Ok(ArtifactRef {
        path: rel.to_string(),
        sha256: sha256_hex(bytes),
    })
}

fn json_bytes<S: Serialize>(value: &S) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("artifact serializes");
    s.push('\n');
    s.into_bytes()
}

fn read_json<D: DeserializeOwned>(path: &Path, stage: Stage) -> Result<D, PipelineError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| PipelineError::other(stage, None, format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::other(stage, None, format!("{}: {e}", path.display())))
}

fn write_manifest(run_dir: &Path, manifest: &Manifest) -> Result<String, PipelineError> {
    Ok(write_artifact(run_dir, MANIFEST_FILE, &json_bytes(manifest), None)?.sha256)
}

// ---------------------------------------------------------------------------
// Per-page rendering

/// Where page backgrounds come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackgroundSource {
    /// `page_<index>.png` files in a directory.
    Dir(PathBuf),
    /// Toy flow sampler toward an instruction-seeded procedural texture.
    Toy,
}

impl BackgroundSource {
    pub fn mode(&self) -> BackgroundMode {
        match self {
            BackgroundSource::Dir(_) => BackgroundMode::Supplied,
            BackgroundSource::Toy => BackgroundMode::Toy,
        }
    }
}

pub fn background_file_name(page_index: usize) -> String {
    format!("page_{page_index}.png")
}

fn page_dir(page_index: usize) -> String {
    format!("page_{page_index}")
}

/// Everything produced for one page after its instruction is known.
#[derive(Debug, Clone)]
pub struct RenderedPage {
    pub page_index: usize,
    pub background: Raster,
    pub mask: AttenuationMask<f64>,
    pub trace: Option<Vec<StepTrace>>,
    pub text_boxes_px: Vec<Rect<f64>>,
    pub overlays: Vec<BackingOverlay<f64>>,
    pub composited: Raster,
    pub report: ReadabilityReport<f64>,
}

impl RenderedPage {
    pub fn unattainable_boxes(&self) -> usize {
        self.overlays.iter().filter(|o| o.unattainable).count()
    }
}

/// Deterministic 64-bit seed from an instruction.
pub fn instruction_seed(text: &str) -> u64 {
    let digest = Sha256::digest(text.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Toy background: samples from the page color toward a procedural texture
/// seeded by the instruction, attenuating the update on masked cells.
pub fn toy_background(
    instruction: &str,
    mask: &AttenuationMask<f64>,
    config: &PipelineConfig,
    width: usize,
    height: usize,
) -> Result<(Raster, Vec<StepTrace>), PipelineError> {
    let fail = |e: &dyn fmt::Display| PipelineError::other(Stage::Background, None, e);
    let shape = config.mask.lattice;
    let target = procedural_texture(shape, instruction_seed(instruction));
    let c = config.render.page_color;
    let init: Vec<f64> = (0..shape.channels)
        .flat_map(|ch| {
            let v = [c.r, c.g, c.b].get(ch).copied().unwrap_or(0.5);
            std::iter::repeat_n(v, shape.cells())
        })
        .collect();
    let x0 = LatentState::new(shape, init, 1.0).map_err(|e| fail(&e))?;
    let schedule = GateSchedule::new(config.mask.steps, config.mask.start_fraction).map_err(|e| fail(&e))?;
    let run = run_sampler(&x0, &TextureFlow { target }, mask, &schedule, config.mask.mode).map_err(|e| fail(&e))?;
    let image = decode_rgb(&run.state, width, height).map_err(|e| fail(&e))?;
    Ok((image, run.trace))
}

fn toy_size(ex: &Extraction<f64>, ppp: f64) -> (usize, usize) {
    (
        ((ex.width * ppp).round() as usize).max(1),
        ((ex.height * ppp).round() as usize).max(1),
    )
}

/// Produces background, backings, composite, and report for one page.
/// `supplied` is used as the background when present; otherwise a toy
/// background is generated from `instruction`.
pub fn render_page(
    ex: &Extraction<f64>,
    instruction: &str,
    supplied: Option<Raster>,
    config: &PipelineConfig,
) -> Result<RenderedPage, PipelineError> {
    let page = Some(ex.page_index);
    let with_page = |mut e: PipelineError| {
        e.page = page;
        e
    };
    let mask = build_mask_from_boxes(
        config.mask.lattice,
        &ex.representative_boxes,
        ex.width,
        ex.height,
        config.mask.lambda,
    )
    .map_err(|e| PipelineError::other(Stage::Background, page, e))?;
    let (background, trace) = match supplied {
        Some(bg) => (bg, None),
        None => {
            let (w, h) = toy_size(ex, config.render.pixels_per_point);
            let (bg, trace) = toy_background(instruction, &mask, config, w, h).map_err(with_page)?;
            (bg, Some(trace))
        }
    };
    let sx = background.width() as f64 / ex.width;
    let sy = background.height() as f64 / ex.height;
    let text_boxes_px: Vec<Rect<f64>> = ex.text_boxes.iter().map(|b| b.scale(sx, sy)).collect();
    let colors: Vec<Rgb<f64>> = ex
        .text_colors
        .iter()
        .map(|c| c.unwrap_or(config.render.text_color))
        .collect();
    let overlays = text_boxes_px
        .iter()
        .zip(&colors)
        .map(|(b, c)| build_overlay(b, c, &background, &config.aro))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| PipelineError::other(Stage::Aro, page, e))?;
    let composited = compose_page(&PageLayers {
        background: background.clone(),
        backings: overlays.clone(),
        foreground: None,
    })
    .map_err(|e| PipelineError::other(Stage::Compose, page, e))?;
    let report = evaluate_wcag_per_box(
        &composited,
        &text_boxes_px,
        &colors,
        config.evaluation.threshold,
        config.required_coverage(),
    );
    Ok(RenderedPage {
        page_index: ex.page_index,
        background,
        mask,
        trace,
        text_boxes_px,
        overlays,
        composited,
        report,
    })
}

fn png_bytes(image: &Raster, page: Option<usize>) -> Result<Vec<u8>, PipelineError> {
    image
        .encode_png()
        .map_err(|e| PipelineError::other(Stage::Write, page, e))
}

/// Writes a rendered page's artifacts under `page_<index>/`.
fn write_page(
    run_dir: &Path,
    rendered: &RenderedPage,
    instruction: &Instruction,
    bank_before: &NarrativeBank,
) -> Result<PageEntry, PipelineError> {
    let idx = rendered.page_index;
    let page = Some(idx);
    let dir = page_dir(idx);
    let mut artifacts = BTreeMap::new();
    let mut put = |name: &str, file: &str, bytes: Vec<u8>| -> Result<(), PipelineError> {
        let r = write_artifact(run_dir, &format!("{dir}/{file}"), &bytes, page)?;
        artifacts.insert(name.to_string(), r);
        Ok(())
    };
    put("instruction", "instruction.json", json_bytes(instruction))?;
    put("bank_before", "bank_before.json", json_bytes(bank_before))?;
    put("background", "background.png", png_bytes(&rendered.background, page)?)?;
    put("mask", "mask.json", json_bytes(&rendered.mask))?;
    let mask_img = rendered
        .mask
        .to_raster()
        .map_err(|e| PipelineError::other(Stage::Write, page, e))?;
    put("mask_png", "mask.png", png_bytes(&mask_img, page)?)?;
    if let Some(trace) = &rendered.trace {
        put("trace", "trace.json", json_bytes(trace))?;
    }
    put("overlays", "overlays.json", json_bytes(&rendered.overlays))?;
    put("composited", "composited.png", png_bytes(&rendered.composited, page)?)?;
    put("readability", "readability.json", json_bytes(&rendered.report))?;
    Ok(PageEntry {
        index: idx,
        instruction: Some(instruction.text.clone()),
        artifacts,
        readability: Some(PageReadability {
            page_pass_rate: rendered.report.page_pass_rate,
            pixel_pass_rate: rendered.report.pixel_pass_rate,
            boxes: rendered.report.per_box.len(),
            unattainable_boxes: rendered.unattainable_boxes(),
        }),
    })
}

// ---------------------------------------------------------------------------
// Full run

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub manifest: Manifest,
    pub manifest_sha256: String,
}

impl RunOutcome {
    pub fn unattainable_boxes(&self) -> usize {
        self.manifest.unattainable_boxes()
    }
}

/// Runs every stage for `layout` and writes the results under `run_dir`.
///
/// On failure the manifest is still written, with status `FAILED` and the
/// failing stage, and every artifact finished so far is kept.
pub fn run_pipeline(
    layout_src: &str,
    config: &PipelineConfig,
    source: &BackgroundSource,
    run_dir: &Path,
    provider: &dyn TextProvider,
) -> Result<RunOutcome, PipelineError> {
    config.validate()?;
    if let BackgroundSource::Dir(dir) = source {
        if !dir.is_dir() {
            return Err(PipelineError::config(format!(
                "backgrounds directory {} does not exist",
                dir.display()
            )));
        }
    }
    let doc = LayoutDocument::<f64>::from_json_str(layout_src).map_err(|e| PipelineError::config(e.to_string()))?;
    std::fs::create_dir_all(run_dir).map_err(|e| PipelineError::other(Stage::Write, None, e))?;

    let mut manifest = Manifest {
        version: MANIFEST_VERSION,
        status: RunStatus::Ok,
        failure: None,
        config_sha256: String::new(),
        layout_sha256: sha256_hex(layout_src.as_bytes()),
        background_mode: source.mode(),
        provider_id: provider.id().to_string(),
        artifacts: BTreeMap::new(),
        pages: doc
            .pages
            .iter()
            .map(|p| PageEntry {
                index: p.page_index,
                instruction: None,
                artifacts: BTreeMap::new(),
                readability: None,
            })
            .collect(),
        refinements: Vec::new(),
    };
    let cfg_ref = write_artifact(run_dir, "config.json", config.canonical_json().as_bytes(), None)?;
    manifest.config_sha256 = cfg_ref.sha256.clone();
    manifest.artifacts.insert("config".into(), cfg_ref);

    match run_stages(&doc, config, source, run_dir, provider, &mut manifest) {
        Ok(()) => {
            let manifest_sha256 = write_manifest(run_dir, &manifest)?;
            Ok(RunOutcome {
                manifest,
                manifest_sha256,
            })
        }
        Err(e) => {
            manifest.status = RunStatus::Failed;
            manifest.failure = Some(FailureRecord {
                stage: e.stage,
                page: e.page,
                message: e.message.clone(),
            });
            write_manifest(run_dir, &manifest)?;
            Err(e)
        }
    }
}

fn run_stages(
    doc: &LayoutDocument<f64>,
    config: &PipelineConfig,
    source: &BackgroundSource,
    run_dir: &Path,
    provider: &dyn TextProvider,
    manifest: &mut Manifest,
) -> Result<(), PipelineError> {
    let pool = config.pool()?;
    let extractions: Vec<Extraction<f64>> =
        pool.install(|| doc.pages.par_iter().map(|p| extract(p, &config.extraction)).collect());
    manifest.artifacts.insert(
        "regions".into(),
        write_artifact(run_dir, "regions.json", &json_bytes(&extractions), None)?,
    );

    let summaries: Vec<Option<PageSummary>> = match config.narrative.mode {
        OperatingMode::PromptOnly => vec![None; extractions.len()],
        OperatingMode::PromptText => extractions
            .iter()
            .map(|ex| {
                summarize(ex.page_index, &ex.page_text, provider)
                    .map(Some)
                    .map_err(|e| PipelineError::narrative(Stage::Summarize, Some(ex.page_index), e))
            })
            .collect::<Result<_, _>>()?,
    };
    manifest.artifacts.insert(
        "summaries".into(),
        write_artifact(run_dir, "summaries.json", &json_bytes(&summaries), None)?,
    );

    let indices: Vec<usize> = extractions.iter().map(|e| e.page_index).collect();
    let run = run_document(
        &summaries,
        &indices,
        config.narrative.prompt.as_deref(),
        NarrativeBank::new(config.narrative.window),
        provider,
    )
    .map_err(|e| {
        let page = match &e {
            NarrativeError::Document { failed_at, .. } => indices.get(*failed_at).copied(),
            _ => None,
        };
        PipelineError::narrative(Stage::Instruct, page, e)
    })?;
    manifest.artifacts.insert(
        "instructions".into(),
        write_artifact(run_dir, "instructions.json", &json_bytes(&run.instructions), None)?,
    );
    manifest.artifacts.insert(
        "bank".into(),
        write_artifact(run_dir, "bank.json", &json_bytes(&run.bank), None)?,
    );

    let results: Vec<Result<PageEntry, PipelineError>> = pool.install(|| {
        extractions
            .par_iter()
            .enumerate()
            .map(|(pos, ex)| {
                let supplied = load_supplied(source, ex.page_index)?;
                let rendered = render_page(ex, &run.instructions[pos].text, supplied, config)?;
                write_page(run_dir, &rendered, &run.instructions[pos], &run.banks_before[pos])
            })
            .collect()
    });
    let mut first_err = None;
    for (slot, result) in manifest.pages.iter_mut().zip(results) {
        match result {
            Ok(entry) => *slot = entry,
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    first_err.map_or(Ok(()), Err)
}

fn load_supplied(source: &BackgroundSource, page_index: usize) -> Result<Option<Raster>, PipelineError> {
    match source {
        BackgroundSource::Toy => Ok(None),
        BackgroundSource::Dir(dir) => Raster::read_png(&dir.join(background_file_name(page_index)))
            .map(Some)
            .map_err(|e| PipelineError::other(Stage::Background, Some(page_index), e)),
    }
}

// ---------------------------------------------------------------------------
// Refinement

/// Re-instructs one page with `prompt` against the bank state it originally
/// saw, regenerates its background (toy mode) and re-runs backing, compose,
/// and evaluation for that page only. Other pages' files are not touched.
pub fn refine(
    run_dir: &Path,
    page_index: usize,
    prompt: Option<&str>,
    provider: &dyn TextProvider,
) -> Result<RunOutcome, PipelineError> {
    let refine_err = |m: String| PipelineError::new(Stage::Refine, Some(page_index), ErrorClass::Config, m);
    let mut manifest = Manifest::load(run_dir)?;
    if manifest.status != RunStatus::Ok {
        return Err(refine_err("cannot refine a failed run".into()));
    }
    let config_text =
        std::fs::read_to_string(run_dir.join("config.json")).map_err(|e| refine_err(format!("config.json: {e}")))?;
    if sha256_hex(config_text.as_bytes()) != manifest.config_sha256 {
        return Err(refine_err("config.json does not match the manifest".into()));
    }
    let config = PipelineConfig::from_json_str(&config_text)?;
    let pos = manifest
        .pages
        .iter()
        .position(|p| p.index == page_index)
        .ok_or_else(|| refine_err(format!("unknown page {page_index}")))?;
    let dir = page_dir(page_index);
    let bank_path = run_dir.join(&dir).join("bank_before.json");
    let bank = NarrativeBank::load(&bank_path).map_err(|e| refine_err(format!("missing bank state: {e}")))?;

    let extractions: Vec<Extraction<f64>> = read_json(&run_dir.join("regions.json"), Stage::Refine)?;
    let summaries: Vec<Option<PageSummary>> = read_json(&run_dir.join("summaries.json"), Stage::Refine)?;
    let mut instructions: Vec<Instruction> = read_json(&run_dir.join("instructions.json"), Stage::Refine)?;
    let ex = extractions
        .iter()
        .find(|e| e.page_index == page_index)
        .ok_or_else(|| refine_err(format!("page {page_index} missing from regions.json")))?;
    let summary = summaries.get(pos).and_then(|s| s.as_ref());
    let prompt = prompt.or(config.narrative.prompt.as_deref());

    let instruction = instruct(page_index, summary, prompt, &bank, provider)
        .map_err(|e| PipelineError::narrative(Stage::Instruct, Some(page_index), e))?;
    let supplied = match manifest.background_mode {
        BackgroundMode::Toy => None,
        BackgroundMode::Supplied => Some(
            Raster::read_png(&run_dir.join(&dir).join("background.png"))
                .map_err(|e| PipelineError::other(Stage::Background, Some(page_index), e))?,
        ),
    };
    let rendered = render_page(ex, &instruction.text, supplied, &config)?;
    manifest.pages[pos] = write_page(run_dir, &rendered, &instruction, &bank)?;

    if let Some(slot) = instructions.iter_mut().find(|u| u.page_index == page_index) {
        *slot = instruction;
    }
    manifest.artifacts.insert(
        "instructions".into(),
        write_artifact(run_dir, "instructions.json", &json_bytes(&instructions), None)?,
    );
    manifest.refinements.push(Refinement {
        page: page_index,
        prompt: prompt.map(str::to_string),
    });
    let manifest_sha256 = write_manifest(run_dir, &manifest)?;
    Ok(RunOutcome {
        manifest,
        manifest_sha256,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const LAYOUT: &str = r#"{"pages":[
        {"index":0,"width":200,"height":150,"lines":[
            {"bbox":[20,20,150,32],"text":"Volcanic eruption mechanisms"},
            {"bbox":[20,36,160,48],"text":"explained in depth"}],
         "images":[{"bbox":[20,80,120,140]}]},
        {"index":1,"width":200,"height":150,"lines":[
            {"bbox":[30,40,170,52],"text":"Lava flows and ash"}]}
    ]}"#;

    fn small_config() -> PipelineConfig {
        let mut c = PipelineConfig::default();
        c.mask.lattice = LatticeShape::new(16, 16, 4).unwrap();
        c.mask.steps = 20;
        c.workers = 2;
        c
    }

    #[test]
    fn config_defaults_and_validation() {
        let c = PipelineConfig::from_json_str("{}").unwrap();
        assert_eq!(c.mask.lambda, 0.2);
        assert_eq!(c.mask.start_fraction, 0.29);
        assert_eq!(c.narrative.window, 3);
        assert_eq!(c.aro.target_contrast, 7.0);
        assert_eq!(c.required_coverage(), 0.98);

        let e = PipelineConfig::from_json_str(r#"{"narrative":{"mode":"prompt_only"}}"#).unwrap_err();
        assert_eq!(e.class, ErrorClass::Config);
        assert!(e.message.contains("prompt_only"));

        let e = PipelineConfig::from_json_str(r#"{"mask":{"lambda":0.2,"gamma":1}}"#).unwrap_err();
        assert!(e.message.contains("mask"), "{}", e.message);

        let c = PipelineConfig::from_json_str(
            r#"{"narrative":{"provider":{"openai":{"endpoint_url":"http://x","model":"m"}}}}"#,
        )
        .unwrap();
        assert!(matches!(c.narrative.provider, ProviderChoice::Openai(_)));
        let back = PipelineConfig::from_json_str(&c.canonical_json()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn toy_run_writes_manifest_and_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let out = run_pipeline(
            LAYOUT,
            &small_config(),
            &BackgroundSource::Toy,
            dir.path(),
            &StubProvider,
        )
        .unwrap();
        let m = &out.manifest;
        assert_eq!(m.status, RunStatus::Ok);
        assert_eq!(m.pages.len(), 2);
        for p in &m.pages {
            for a in p.artifacts.values() {
                let bytes = std::fs::read(dir.path().join(&a.path)).unwrap();
                assert_eq!(sha256_hex(&bytes), a.sha256);
            }
            assert!(p.artifacts.contains_key("trace"));
        }
        let instr: Vec<Instruction> = read_json(&dir.path().join("instructions.json"), Stage::Refine).unwrap();
        assert_eq!(
            instr[0].text,
            "background: volcanic eruption mechanisms explained in; style: none; continue: none"
        );
        assert!(instr[1].text.ends_with(&format!("continue: {}", instr[0].text)));
        let on_disk = std::fs::read(dir.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(sha256_hex(&on_disk), out.manifest_sha256);
    }

    #[test]
    fn failing_stage_marks_manifest() {
        struct Broken;
        impl TextProvider for Broken {
            fn id(&self) -> &str {
                "broken"
            }
            fn complete(&self, _: &str, _: &str) -> Result<String, crate::narrative::ProviderError> {
                Err(crate::narrative::ProviderError {
                    provider_id: "broken".into(),
                    message: "down".into(),
                    retriable: true,
                })
            }
        }
        let dir = tempfile::tempdir().unwrap();
        let e = run_pipeline(LAYOUT, &small_config(), &BackgroundSource::Toy, dir.path(), &Broken).unwrap_err();
        assert_eq!(e.stage, Stage::Summarize);
        assert_eq!(e.class, ErrorClass::Provider);
        let m = Manifest::load(dir.path()).unwrap();
        assert_eq!(m.status, RunStatus::Failed);
        assert_eq!(m.failure.unwrap().stage, Stage::Summarize);
        assert!(dir.path().join("regions.json").exists());
        let raw = std::fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap();
        assert!(raw.contains("\"FAILED\""));
    }

    #[test]
    fn missing_background_is_a_background_failure() {
        let dir = tempfile::tempdir().unwrap();
        let bgs = tempfile::tempdir().unwrap();
        let e = run_pipeline(
            LAYOUT,
            &small_config(),
            &BackgroundSource::Dir(bgs.path().to_path_buf()),
            dir.path(),
            &StubProvider,
        )
        .unwrap_err();
        assert_eq!(e.stage, Stage::Background);
        assert_eq!(e.page, Some(0));
    }

    #[test]
    fn refine_rejects_unknown_page() {
        let dir = tempfile::tempdir().unwrap();
        run_pipeline(
            LAYOUT,
            &small_config(),
            &BackgroundSource::Toy,
            dir.path(),
            &StubProvider,
        )
        .unwrap();
        let e = refine(dir.path(), 7, Some("x"), &StubProvider).unwrap_err();
        assert!(e.message.contains("unknown page"));
        std::fs::remove_file(dir.path().join("page_1/bank_before.json")).unwrap();
        let e = refine(dir.path(), 1, Some("x"), &StubProvider).unwrap_err();
        assert!(e.message.contains("missing bank state"));
    }
}
