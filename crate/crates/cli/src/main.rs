//! `docback` command-line interface.
//!
//! Exit codes: 0 success, 2 configuration or validation error, 3 text
//! provider error, 4 at least one backing could not reach its contrast
//! target, 1 anything else.

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use docback::aro::build_overlay;
use docback::compose::{compose_page, evaluate_wcag_per_box, PageLayers};
use docback::latentmask::{
    build_mask_centered, build_mask_from_boxes, decode_rgb, procedural_texture, run_sampler, GateSchedule, LatentState,
    LatticeShape, TextureFlow, UpdateMode,
};
use docback::layout::{extract, Extraction, LayoutDocument};
use docback::narrative::{run_document, summarize, NarrativeBank, PageSummary};
use docback::pipeline::{
    refine, run_pipeline, BackgroundSource, ErrorClass, OperatingMode, PipelineConfig, PipelineError, RunOutcome,
};
use docback::{BBox, BackingOverlay, Raster, Srgb};

const EXIT_OTHER: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_PROVIDER: u8 = 3;
const EXIT_UNATTAINABLE: u8 = 4;

#[derive(Debug)]
struct Exit {
    code: u8,
    message: String,
}

impl fmt::Display for Exit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Exit {}

fn exit(code: u8, message: impl Into<String>) -> anyhow::Error {
    Exit {
        code,
        message: message.into(),
    }
    .into()
}

fn from_pipeline(e: PipelineError) -> anyhow::Error {
    let code = match e.class {
        ErrorClass::Config => EXIT_CONFIG,
        ErrorClass::Provider => EXIT_PROVIDER,
        ErrorClass::Other => EXIT_OTHER,
    };
    exit(code, e.to_string())
}

#[derive(Parser, Debug)]
#[command(
    name = "docback",
    version,
    about = "Readable, multi-page-consistent document backgrounds"
)]
struct Cli {
    /// Pipeline configuration (JSON). Flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Attenuate,
    Literal,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OperatingArg {
    PromptText,
    PromptOnly,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Extract text boxes and representative regions from a layout file.
    Extract {
        #[arg(long)]
        layout: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize each page's text into at most five words.
    Summarize {
        #[arg(long)]
        layout: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate page instructions sequentially through the narrative bank.
    Instruct {
        /// Summaries written by `summarize`.
        #[arg(long, required_unless_present = "pages")]
        summaries: Option<PathBuf>,
        /// Page count for prompt-only runs without summaries.
        #[arg(long)]
        pages: Option<usize>,
        #[arg(long)]
        prompt: Option<String>,
        #[arg(long)]
        window: Option<usize>,
        /// Resume from a saved bank.
        #[arg(long)]
        bank_in: Option<PathBuf>,
        #[arg(long)]
        bank_out: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the toy sampler under an attenuation mask.
    MaskSim {
        /// Regions file; masks the representative boxes of `--page`.
        #[arg(long, requires = "page")]
        regions: Option<PathBuf>,
        #[arg(long)]
        page: Option<usize>,
        /// Centered-window mask covering this fraction of cells.
        #[arg(long, conflicts_with = "regions")]
        rho: Option<f64>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        start_fraction: Option<f64>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output image size in pixels, `WxH`.
        #[arg(long, default_value = "256x256")]
        size: String,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Solve backing opacities for one page and composite them.
    Aro {
        #[arg(long)]
        background: PathBuf,
        #[arg(long)]
        regions: PathBuf,
        #[arg(long)]
        page: usize,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Composite backings and an optional foreground over a background.
    Compose {
        #[arg(long)]
        background: PathBuf,
        #[arg(long)]
        overlays: Option<PathBuf>,
        #[arg(long)]
        foreground: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Measure contrast coverage under a page's text boxes.
    Evaluate {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        regions: PathBuf,
        #[arg(long)]
        page: usize,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        coverage: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every stage and write a run directory with a manifest.
    Pipeline {
        #[arg(long)]
        layout: PathBuf,
        /// Directory of `page_<index>.png` backgrounds.
        #[arg(long, conflicts_with = "toy")]
        backgrounds: Option<PathBuf>,
        /// Generate backgrounds with the toy sampler.
        #[arg(long)]
        toy: bool,
        #[arg(long)]
        prompt: Option<String>,
        #[arg(long)]
        window: Option<usize>,
        #[arg(long, value_enum)]
        operating_mode: Option<OperatingArg>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Re-instruct and regenerate one page of an existing run.
    Refine {
        #[arg(long)]
        run_dir: PathBuf,
        #[arg(long)]
        page: usize,
        #[arg(long)]
        prompt: Option<String>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<Exit>().map_or(EXIT_OTHER, |x| x.code);
            ExitCode::from(code)
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    match path {
        Some(p) => PipelineConfig::from_file(p).map_err(from_pipeline),
        None => Ok(PipelineConfig::default()),
    }
}

fn validated(config: PipelineConfig) -> Result<PipelineConfig> {
    config.validate().map_err(from_pipeline)?;
    Ok(config)
}

fn read_layout(path: &Path) -> Result<LayoutDocument<f64>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    LayoutDocument::from_json_str(&text).map_err(|e| exit(EXIT_CONFIG, format!("{}: {e}", path.display())))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| exit(EXIT_CONFIG, format!("{}: {e}", path.display())))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_png(path: &Path) -> Result<Raster> {
    Raster::read_png(path).map_err(|e| exit(EXIT_CONFIG, e.to_string()))
}

fn page_of(regions: &Path, page: usize) -> Result<Extraction<f64>> {
    let pages: Vec<Extraction<f64>> = read_json(regions)?;
    pages
        .into_iter()
        .find(|p| p.page_index == page)
        .ok_or_else(|| exit(EXIT_CONFIG, format!("page {page} not in {}", regions.display())))
}

/// Text boxes scaled from page points to `image` pixels, with their colors.
fn boxes_in_pixels(ex: &Extraction<f64>, image: &Raster, default_color: Srgb) -> (Vec<BBox>, Vec<Srgb>) {
    let sx = image.width() as f64 / ex.width;
    let sy = image.height() as f64 / ex.height;
    let boxes = ex.text_boxes.iter().map(|b| b.scale(sx, sy)).collect();
    let colors = ex.text_colors.iter().map(|c| c.unwrap_or(default_color)).collect();
    (boxes, colors)
}

fn parse_size(s: &str) -> Result<(usize, usize)> {
    let (w, h) = s
        .split_once('x')
        .ok_or_else(|| exit(EXIT_CONFIG, format!("size {s:?} is not WxH")))?;
    let parse = |v: &str| {
        v.parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| exit(EXIT_CONFIG, format!("size {s:?} is not WxH")))
    };
    Ok((parse(w)?, parse(h)?))
}

fn report_outcome(outcome: &RunOutcome, out_dir: &Path) -> u8 {
    println!("manifest: {}", out_dir.join(docback::pipeline::MANIFEST_FILE).display());
    println!("manifest sha256: {}", outcome.manifest_sha256);
    let flagged = outcome.unattainable_boxes();
    if flagged > 0 {
        eprintln!("{flagged} text box(es) could not reach the contrast target");
        EXIT_UNATTAINABLE
    } else {
        0
    }
}

fn run(cli: Cli) -> Result<u8> {
    let config_path = cli.config.as_deref();
    match cli.command {
        Command::Extract { layout, out } => {
            let config = load_config(config_path)?;
            let doc = read_layout(&layout)?;
            let pages: Vec<Extraction<f64>> = doc.pages.iter().map(|p| extract(p, &config.extraction)).collect();
            write_json(&out, &pages)?;
            println!("{} page(s) -> {}", pages.len(), out.display());
            Ok(0)
        }
        Command::Summarize { layout, out } => {
            let config = load_config(config_path)?;
            let provider = config.provider().map_err(from_pipeline)?;
            let doc = read_layout(&layout)?;
            let mut summaries = Vec::new();
            for page in &doc.pages {
                let ex = extract(page, &config.extraction);
                let s = summarize(ex.page_index, &ex.page_text, provider.as_ref())
                    .map_err(|e| exit(narrative_code(e.is_provider_error()), e.to_string()))?;
                println!("page {}: {}", s.page_index, s.phrase());
                summaries.push(Some(s));
            }
            write_json(&out, &summaries)?;
            Ok(0)
        }
        Command::Instruct {
            summaries,
            pages,
            prompt,
            window,
            bank_in,
            bank_out,
            out,
        } => {
            let mut config = load_config(config_path)?;
            if let Some(p) = prompt {
                config.narrative.prompt = Some(p);
            }
            if let Some(n) = window {
                config.narrative.window = n;
            }
            let config = validated(config)?;
            let provider = config.provider().map_err(from_pipeline)?;
            let summaries: Vec<Option<PageSummary>> = match (summaries, pages) {
                (Some(path), _) => read_json(&path)?,
                (None, Some(n)) => vec![None; n],
                (None, None) => unreachable!("clap requires one of them"),
            };
            let summaries = if config.narrative.mode == OperatingMode::PromptOnly {
                vec![None; summaries.len()]
            } else {
                summaries
            };
            let indices: Vec<usize> = summaries
                .iter()
                .enumerate()
                .map(|(i, s)| s.as_ref().map_or(i, |s| s.page_index))
                .collect();
            let bank = match bank_in {
                Some(p) => NarrativeBank::load(&p).map_err(|e| exit(EXIT_CONFIG, e.to_string()))?,
                None => NarrativeBank::new(config.narrative.window),
            };
            let run = run_document(
                &summaries,
                &indices,
                config.narrative.prompt.as_deref(),
                bank,
                provider.as_ref(),
            )
            .map_err(|e| exit(narrative_code(e.is_provider_error()), e.to_string()))?;
            for u in &run.instructions {
                println!("page {}: {}", u.page_index, u.text);
            }
            if let Some(p) = bank_out {
                run.bank.save(&p).map_err(|e| anyhow!(e.to_string()))?;
            }
            write_json(&out, &run)?;
            Ok(0)
        }
        Command::MaskSim {
            regions,
            page,
            rho,
            lambda,
            start_fraction,
            steps,
            mode,
            seed,
            size,
            out_dir,
        } => {
            let mut config = load_config(config_path)?;
            if let Some(v) = lambda {
                config.mask.lambda = v;
            }
            if let Some(v) = start_fraction {
                config.mask.start_fraction = v;
            }
            if let Some(v) = steps {
                config.mask.steps = v;
            }
            if let Some(m) = mode {
                config.mask.mode = match m {
                    ModeArg::Attenuate => UpdateMode::Attenuate,
                    ModeArg::Literal => UpdateMode::Literal,
                };
            }
            let config = validated(config)?;
            let (w, h) = parse_size(&size)?;
            let shape: LatticeShape = config.mask.lattice;
            let mask = match (regions, page, rho) {
                (Some(r), Some(p), _) => {
                    let ex = page_of(&r, p)?;
                    build_mask_from_boxes(shape, &ex.representative_boxes, ex.width, ex.height, config.mask.lambda)
                }
                (_, _, Some(rho)) => build_mask_centered(shape, rho, config.mask.lambda),
                _ => return Err(exit(EXIT_CONFIG, "give --regions with --page, or --rho")),
            }
            .map_err(|e| exit(EXIT_CONFIG, e.to_string()))?;
            let c = config.render.page_color;
            let init: Vec<f64> = (0..shape.channels)
                .flat_map(|ch| std::iter::repeat_n([c.r, c.g, c.b].get(ch).copied().unwrap_or(0.5), shape.cells()))
                .collect();
            let x0 = LatentState::new(shape, init, 1.0).map_err(|e| anyhow!(e.to_string()))?;
            let schedule = GateSchedule::new(config.mask.steps, config.mask.start_fraction)
                .map_err(|e| exit(EXIT_CONFIG, e.to_string()))?;
            let flow = TextureFlow {
                target: procedural_texture(shape, seed),
            };
            let run =
                run_sampler(&x0, &flow, &mask, &schedule, config.mask.mode).map_err(|e| anyhow!(e.to_string()))?;
            std::fs::create_dir_all(&out_dir)?;
            write_json(&out_dir.join("mask.json"), &mask)?;
            mask.to_raster()?.write_png(&out_dir.join("mask.png"))?;
            write_json(&out_dir.join("trace.json"), &run.trace)?;
            decode_rgb(&run.state, w, h)?.write_png(&out_dir.join("background.png"))?;
            println!(
                "{} masked cell(s); outputs in {}",
                mask.masked_cells(),
                out_dir.display()
            );
            Ok(0)
        }
        Command::Aro {
            background,
            regions,
            page,
            out_dir,
        } => {
            let config = load_config(config_path)?;
            let bg = read_png(&background)?;
            let ex = page_of(&regions, page)?;
            let (boxes, colors) = boxes_in_pixels(&ex, &bg, config.render.text_color);
            let overlays = boxes
                .iter()
                .zip(&colors)
                .map(|(b, c)| build_overlay(b, c, &bg, &config.aro))
                .collect::<Result<Vec<BackingOverlay>, _>>()
                .map_err(|e| exit(EXIT_OTHER, e.to_string()))?;
            std::fs::create_dir_all(&out_dir)?;
            write_json(&out_dir.join("overlays.json"), &overlays)?;
            let out = docback::aro::composite_overlays(&bg, &overlays);
            out.write_png(&out_dir.join("composited.png"))?;
            let flagged = overlays.iter().filter(|o| o.unattainable).count();
            for o in &overlays {
                println!(
                    "box {:?}: alpha* {:.3} -> alpha {:.3}{}",
                    o.text_box.as_array(),
                    o.solved_alpha_star,
                    o.alpha,
                    if o.unattainable { " (unattainable)" } else { "" }
                );
            }
            Ok(if flagged > 0 { EXIT_UNATTAINABLE } else { 0 })
        }
        Command::Compose {
            background,
            overlays,
            foreground,
            out,
        } => {
            let background = read_png(&background)?;
            let backings: Vec<BackingOverlay> = match overlays {
                Some(p) => read_json(&p)?,
                None => Vec::new(),
            };
            let foreground = foreground.as_deref().map(read_png).transpose()?;
            let image = compose_page(&PageLayers {
                background,
                backings,
                foreground,
            })
            .map_err(|e| exit(EXIT_CONFIG, e.to_string()))?;
            image.write_png(&out)?;
            println!("composited -> {}", out.display());
            Ok(0)
        }
        Command::Evaluate {
            image,
            regions,
            page,
            threshold,
            coverage,
            out,
        } => {
            let mut config = load_config(config_path)?;
            if let Some(t) = threshold {
                config.evaluation.threshold = t;
            }
            if coverage.is_some() {
                config.evaluation.coverage = coverage;
            }
            let config = validated(config)?;
            let img = read_png(&image)?;
            let ex = page_of(&regions, page)?;
            let (boxes, colors) = boxes_in_pixels(&ex, &img, config.render.text_color);
            let report = evaluate_wcag_per_box(
                &img,
                &boxes,
                &colors,
                config.evaluation.threshold,
                config.required_coverage(),
            );
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            println!(
                "page pass rate {:.4}, pixel pass rate {:.4}",
                report.page_pass_rate, report.pixel_pass_rate
            );
            write_json(&out, &report)?;
            Ok(0)
        }
        Command::Pipeline {
            layout,
            backgrounds,
            toy,
            prompt,
            window,
            operating_mode,
            workers,
            out_dir,
        } => {
            let mut config = load_config(config_path)?;
            if let Some(p) = prompt {
                config.narrative.prompt = Some(p);
            }
            if let Some(n) = window {
                config.narrative.window = n;
            }
            if let Some(m) = operating_mode {
                config.narrative.mode = match m {
                    OperatingArg::PromptText => OperatingMode::PromptText,
                    OperatingArg::PromptOnly => OperatingMode::PromptOnly,
                };
            }
            if let Some(w) = workers {
                config.workers = w;
            }
            let config = validated(config)?;
            let source = match (backgrounds, toy) {
                (Some(dir), false) => BackgroundSource::Dir(dir),
                (None, true) => BackgroundSource::Toy,
                _ => return Err(exit(EXIT_CONFIG, "give --backgrounds <dir> or --toy")),
            };
            let layout_src =
                std::fs::read_to_string(&layout).with_context(|| format!("reading {}", layout.display()))?;
            let provider = config.provider().map_err(from_pipeline)?;
            let outcome =
                run_pipeline(&layout_src, &config, &source, &out_dir, provider.as_ref()).map_err(from_pipeline)?;
            Ok(report_outcome(&outcome, &out_dir))
        }
        Command::Refine { run_dir, page, prompt } => {
            let config_text = std::fs::read_to_string(run_dir.join("config.json"))
                .map_err(|e| exit(EXIT_CONFIG, format!("{}: {e}", run_dir.display())))?;
            let config = PipelineConfig::from_json_str(&config_text).map_err(from_pipeline)?;
            let provider = config.provider().map_err(from_pipeline)?;
            let outcome = refine(&run_dir, page, prompt.as_deref(), provider.as_ref()).map_err(from_pipeline)?;
            Ok(report_outcome(&outcome, &run_dir))
        }
    }
}

fn narrative_code(provider: bool) -> u8 {
    if provider {
        EXIT_PROVIDER
    } else {
        EXIT_OTHER
    }
}
