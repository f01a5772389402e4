//! Acceptance gate. Prints one PASS/FAIL line per criterion to stderr
//! (uncaptured) and fails if any criterion fails.

mod support;

use std::collections::BTreeMap;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use docback::aro::{build_overlay, solve_alpha, AroParams};
use docback::color::{contrast_ratio, relative_luminance, srgb_to_linear, Luminance};
use docback::compose::{compose_page, evaluate_wcag, PageLayers};
use docback::geometry::Rect;
use docback::latentmask::{
    build_mask_centered, build_mask_from_boxes, procedural_texture, run_sampler, ConstantVelocity, GateSchedule,
    LatentState, LatticeShape, StraightPath, TextureFlow, UpdateMode, VelocityProvider,
};
use docback::layout::{group_paragraphs, merge_columns, partition_by_images, suppress, ExtractionParams};
use docback::narrative::{run_document, summarize, NarrativeBank, StubProvider};
use docback::pipeline::{refine, run_pipeline, BackgroundSource, PipelineConfig};
use docback::Region;
use docback::Srgb;
use rand::Rng;
use support::*;

const WCAG_AA: f64 = 4.5;
const RATIO_TOL: f64 = 1e-12;
const CONTINUITY_TOL: f64 = 1e-6;

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures/three_page")
        .join(rel)
}

// ---------------------------------------------------------------------------
// 1. WCAG coverage over a fuzzed background corpus

fn wcag_coverage() -> String {
    let start = Instant::now();
    let params = AroParams::<f64>::default();
    let (w, h) = (240, 180);
    let (mut boxes, mut flagged, mut failed) = (0usize, 0usize, Vec::new());
    let corpus = 240u64;
    for seed in 0..corpus {
        let kind = KINDS[seed as usize % KINDS.len()];
        let bg = background(kind, seed, w, h);
        let r = &mut rng(10_000 + seed);
        let text = if r.gen() { Srgb::black() } else { Srgb::white() };
        let text_boxes = text_boxes(r, w, h);
        let overlays: Vec<_> = text_boxes
            .iter()
            .map(|b| build_overlay(b, &text, &bg, &params).unwrap())
            .collect();
        let out = compose_page(&PageLayers {
            background: bg,
            backings: overlays.clone(),
            foreground: None,
        })
        .unwrap();
        let report = evaluate_wcag(&out, &text_boxes, &text, WCAG_AA, params.coverage);
        for (o, b) in overlays.iter().zip(&report.per_box) {
            boxes += 1;
            if o.unattainable {
                flagged += 1;
            } else if !b.pass {
                failed.push((seed, kind, b.coverage));
            }
        }
    }
    let elapsed = start.elapsed();
    let checked = boxes - flagged;
    assert!(
        failed.is_empty(),
        "{} of {checked} non-flagged boxes failed: {failed:?}",
        failed.len()
    );
    assert!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    format!(
        "{corpus} backgrounds, {boxes} boxes, {flagged} flagged, {checked}/{checked} pass at 4.5:1 in {elapsed:.1?}"
    )
}

// ---------------------------------------------------------------------------
// 2. solve_alpha against an exhaustive 1001-point scan

fn alpha_oracle() -> String {
    let start = Instant::now();
    let r = &mut rng(2);
    let mut unattainable = 0;
    for inst in 0..1000 {
        let mut params = AroParams::<f64>::default();
        if inst % 4 == 3 {
            params.target_contrast = r.gen_range(1.0..21.0);
            params.coverage = r.gen_range(0.3..=1.0);
        }
        let lo = match inst % 3 {
            0 => relative_luminance(&Srgb::gray(0.98)).value(),
            1 => relative_luminance(&Srgb::gray(0.06)).value(),
            _ => r.gen(),
        };
        let lt = match inst % 5 {
            0 => 0.0,
            1 => 1.0,
            _ => r.gen(),
        };
        let n = r.gen_range(1..1500);
        let tau = params.target_contrast;
        let bg: Vec<f64> = (0..n)
            .map(|_| match r.gen_range(0..4) {
                // land exactly on a band edge at some grid opacity
                0 => {
                    let a = r.gen_range(0..1000) as f64 / 1000.0;
                    let edge = if r.gen() {
                        (lt + 0.05) / tau - 0.05
                    } else {
                        tau * (lt + 0.05) - 0.05
                    };
                    ((edge - a * lo) / (1.0 - a)).clamp(0.0, 1.0)
                }
                1 => lo,
                _ => r.gen(),
            })
            .collect();
        let samples: Vec<Luminance<f64>> = bg.iter().map(|&v| Luminance::new(v)).collect();
        let got = solve_alpha(&samples, Luminance::new(lo), Luminance::new(lt), &params).unwrap();
        let want = scan_alpha(&bg, lo, lt, tau, params.coverage, 1000);
        match want {
            Some(i) => {
                assert!(
                    got.attainable,
                    "instance {inst}: expected index {i}, solver says unattainable"
                );
                assert_eq!(got.grid_index, i, "instance {inst}");
            }
            None => {
                unattainable += 1;
                assert!(!got.attainable, "instance {inst}: expected unattainable");
                assert_eq!(got.alpha_star, 1.0);
            }
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    format!("1000 instances agree ({unattainable} unattainable) in {elapsed:.1?}")
}

// ---------------------------------------------------------------------------
// 3. attenuation ratio

fn displacement_ratio(start_fraction: f64, steps: usize) -> f64 {
    let shape = LatticeShape::new(16, 16, 2).unwrap();
    let mask = build_mask_from_boxes(shape, &[Rect::from_f64(20.0, 20.0, 60.0, 80.0)], 100.0, 100.0, 0.2).unwrap();
    let x0 = LatentState::filled(shape, 0.0f64);
    let schedule = GateSchedule::new(steps, start_fraction).unwrap();
    let run = run_sampler(
        &x0,
        &ConstantVelocity { value: 1.0 },
        &mask,
        &schedule,
        UpdateMode::Attenuate,
    )
    .unwrap();
    let cells = shape.cells();
    let masked = (0..cells).find(|&c| mask.is_masked(c)).unwrap();
    let free = (0..cells).find(|&c| !mask.is_masked(c)).unwrap();
    let d = |c: usize| (run.state.x[c] - x0.x[c]).abs();
    d(masked) / d(free)
}

fn attenuation_ratio() -> String {
    let full = displacement_ratio(0.0, 100);
    let gated = displacement_ratio(0.29, 100);
    let expect_gated = 0.29 + 0.71 * 0.2;
    assert!((full - 0.2).abs() <= RATIO_TOL, "ratio {full}");
    assert!((gated - expect_gated).abs() <= RATIO_TOL, "ratio {gated}");
    format!("ratio {full:.15} (want 0.2), gated {gated:.15} (want {expect_gated:.15})")
}

// ---------------------------------------------------------------------------
// 4. literal mode equals the plain Euler sampler

fn vanilla<P: VelocityProvider<f64>>(x0: &LatentState<f64>, p: &P, steps: usize) -> Vec<f64> {
    let dt = 1.0 / steps as f64;
    let mut s = x0.clone();
    for _ in 0..steps {
        let v = p.evaluate(&s).unwrap();
        let x: Vec<f64> = s.x.iter().zip(&v).map(|(x, v)| x - v * dt).collect();
        s = LatentState::new(s.shape, x, (s.t - dt).max(0.0)).unwrap();
    }
    s.x
}

fn literal_fidelity() -> String {
    let r = &mut rng(4);
    for run in 0..50 {
        let shape = LatticeShape::new(r.gen_range(2..20), r.gen_range(2..20), r.gen_range(1..5)).unwrap();
        let lambda = r.gen_range(0.01..=1.0);
        let mask = if r.gen() {
            build_mask_centered(shape, r.gen_range(0.0..=1.0), lambda).unwrap()
        } else {
            let boxes: Vec<Rect<f64>> = (0..r.gen_range(0..4))
                .map(|_| {
                    let (x, y) = (r.gen_range(0.0..90.0), r.gen_range(0.0..90.0));
                    Rect::from_f64(x, y, x + r.gen_range(1.0..40.0), y + r.gen_range(1.0..40.0))
                })
                .collect();
            build_mask_from_boxes(shape, &boxes, 100.0, 100.0, lambda).unwrap()
        };
        let x: Vec<f64> = (0..shape.len()).map(|_| r.gen_range(-1.0..1.0)).collect();
        let x0 = LatentState::new(shape, x, 1.0).unwrap();
        let steps = r.gen_range(1..60);
        let schedule = GateSchedule::new(steps, r.gen_range(0.0..=1.0)).unwrap();
        let target: Vec<f64> = procedural_texture(shape, run);
        let got = match run % 3 {
            0 => {
                let p = TextureFlow { target };
                let a = run_sampler(&x0, &p, &mask, &schedule, UpdateMode::Literal).unwrap();
                (a.state.x, vanilla(&x0, &p, steps))
            }
            1 => {
                let p = StraightPath::new(&x0.x, &target);
                let a = run_sampler(&x0, &p, &mask, &schedule, UpdateMode::Literal).unwrap();
                (a.state.x, vanilla(&x0, &p, steps))
            }
            _ => {
                let p = ConstantVelocity {
                    value: r.gen_range(-2.0..2.0),
                };
                let a = run_sampler(&x0, &p, &mask, &schedule, UpdateMode::Literal).unwrap();
                (a.state.x, vanilla(&x0, &p, steps))
            }
        };
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&got.0), bits(&got.1), "run {run}");
    }
    "50 fuzzed runs bit-identical".into()
}

// ---------------------------------------------------------------------------
// 5. extraction oracles

fn suppress_oracle(regions: &[Region], tau_cont: f64, tau_iou: f64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..regions.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (&regions[a].bbox, &regions[b].bbox);
        area(rb)
            .partial_cmp(&area(ra))
            .unwrap()
            .then(ra.y0.partial_cmp(&rb.y0).unwrap())
            .then(ra.x0.partial_cmp(&rb.x0).unwrap())
            .then(ra.y1.partial_cmp(&rb.y1).unwrap())
            .then(ra.x1.partial_cmp(&rb.x1).unwrap())
            .then(regions[a].member_line_ids.cmp(&regions[b].member_line_ids))
    });
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        if !kept
            .iter()
            .any(|&k| redundant(&regions[i].bbox, &regions[k].bbox, tau_cont, tau_iou))
        {
            kept.push(i);
        }
    }
    kept.into_iter().map(|i| regions[i].member_line_ids.clone()).collect()
}

fn extraction_oracles() -> String {
    let (mut paragraphs, mut regions) = (0usize, 0usize);
    for seed in 0..500u64 {
        let page = random_page(seed);
        let r = &mut rng(50_000 + seed);
        let params = if seed % 2 == 0 {
            ExtractionParams::<f64>::default()
        } else {
            ExtractionParams {
                eta_x: r.gen_range(0.1..=1.0),
                tau_cont: r.gen_range(0.3..=1.0),
                tau_iou: r.gen_range(0.1..=1.0),
                left_margin_tol: r.gen_range(0.0..10.0),
                ..Default::default()
            }
        };
        let lines = &page.lines;

        // paragraphs
        let max_gap = 1.5 * median(lines.iter().map(|l| l.bbox.y1 - l.bbox.y0).collect());
        let want = flood_components(lines.len(), |i, j| {
            let (a, b) = (&lines[i].bbox, &lines[j].bbox);
            (a.x0 - b.x0).abs() <= params.left_margin_tol && vgap(a, b) <= max_gap
        });
        let paras = group_paragraphs(lines, &params);
        assert_eq!(id_sets(&paras), want, "page {seed}: paragraphs");
        paragraphs += paras.len();

        // columns, per band
        let part = partition_by_images(paras, &page.images);
        let mut merged = Vec::new();
        for band in part.groups() {
            let out = merge_columns(band, &params);
            let gap = 1.5 * median(band.iter().map(|p| p.line_height).collect());
            let comps = closure_components(band.len(), |i, j| {
                let (a, b) = (&band[i].bbox, &band[j].bbox);
                overlap_frac(a, b) >= params.eta_x && vgap(a, b) <= gap
            });
            let want: std::collections::BTreeSet<Vec<usize>> = comps
                .into_iter()
                .map(|c| {
                    let mut ids: Vec<usize> = c.iter().flat_map(|&i| band[i].member_line_ids.clone()).collect();
                    ids.sort_unstable();
                    ids
                })
                .collect();
            assert_eq!(id_sets(&out), want, "page {seed}: columns");
            merged.extend(out);
        }

        // suppression
        let kept = suppress(&merged, &params);
        let mut want = suppress_oracle(&merged, params.tau_cont, params.tau_iou);
        want.sort();
        let mut got: Vec<Vec<usize>> = kept.iter().map(|r| r.member_line_ids.clone()).collect();
        got.sort();
        assert_eq!(got, want, "page {seed}: suppression");
        for (i, a) in kept.iter().enumerate() {
            for b in &kept[i + 1..] {
                assert!(
                    !redundant(&a.bbox, &b.bbox, params.tau_cont, params.tau_iou),
                    "page {seed}: kept pair violates thresholds"
                );
            }
        }
        for m in &merged {
            let survived = kept.iter().any(|k| k.member_line_ids == m.member_line_ids);
            let covered = kept
                .iter()
                .any(|k| redundant(&m.bbox, &k.bbox, params.tau_cont, params.tau_iou));
            assert!(survived || covered, "page {seed}: dropped region has no witness");
        }
        assert_eq!(suppress(&kept, &params), kept, "page {seed}: idempotence");
        regions += kept.len();
    }
    format!("500 pages, {paragraphs} paragraphs, {regions} regions agree; suppression idempotent")
}

// ---------------------------------------------------------------------------
// 6. narrative recursion

fn narrative_recursion() -> String {
    let texts = [
        "Volcanic eruption mechanisms explained in depth",
        "Lava flows and pyroclastic density currents",
        "Ash clouds disrupt aviation worldwide today",
        "Monitoring networks forecast eruptions reliably now",
    ];
    let run_once = || {
        let summaries: Vec<_> = texts
            .iter()
            .enumerate()
            .map(|(i, t)| Some(summarize(i, t, &StubProvider).unwrap()))
            .collect();
        run_document(
            &summaries,
            &[0, 1, 2, 3],
            Some("muted"),
            NarrativeBank::new(2),
            &StubProvider,
        )
        .unwrap()
    };
    let first = run_once();
    let u: Vec<&str> = first.instructions.iter().map(|i| i.text.as_str()).collect();
    assert_eq!(first.payloads[3].history, vec![u[1].to_string(), u[2].to_string()]);
    assert_eq!(first.payloads[2].history, vec![u[0].to_string(), u[1].to_string()]);
    assert!(first.payloads[0].history.is_empty());
    let reference = serde_json::to_string(&first).unwrap();
    for _ in 0..10 {
        assert_eq!(serde_json::to_string(&run_once()).unwrap(), reference);
    }
    "page-4 payload is [u2, u3]; 10 repeats bit-identical".into()
}

// ---------------------------------------------------------------------------
// 7. golden pipeline run and refinement isolation

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn golden_pipeline() -> String {
    let golden = include_str!("../fixtures/three_page/golden_manifest.sha256").trim();
    let layout = std::fs::read_to_string(fixture("layout.json")).unwrap();
    let config = PipelineConfig::from_file(&fixture("config.json")).unwrap();

    let supplied = tempfile::tempdir().unwrap();
    let out = run_pipeline(
        &layout,
        &config,
        &BackgroundSource::Dir(fixture("backgrounds")),
        supplied.path(),
        &StubProvider,
    )
    .unwrap();
    assert_eq!(out.manifest_sha256, golden, "manifest hash drifted");

    let toy = tempfile::tempdir().unwrap();
    run_pipeline(&layout, &config, &BackgroundSource::Toy, toy.path(), &StubProvider).unwrap();
    let before = snapshot(toy.path());
    refine(toy.path(), 1, Some("bright coral reef palette"), &StubProvider).unwrap();
    let after = snapshot(toy.path());
    let changed: Vec<&PathBuf> = before.keys().filter(|k| before[*k] != after[*k]).collect();
    for page in ["page_0", "page_2"] {
        assert!(
            changed.iter().all(|p| !p.starts_with(page)),
            "{page} changed: {changed:?}"
        );
    }
    assert!(changed.iter().any(|p| p.ends_with("page_1/background.png")));
    format!(
        "manifest {}..., refine touched {} file(s), none outside page_1",
        &golden[..12],
        changed.len()
    )
}

// ---------------------------------------------------------------------------
// 8. color goldens

fn color_goldens() -> String {
    let c = 0.04045f64;
    let below = c / 12.92;
    let above = ((c + 0.055) / 1.055).powf(2.4);
    assert!(
        (below - above).abs() < CONTINUITY_TOL,
        "branch gap {}",
        (below - above).abs()
    );
    let step = (srgb_to_linear(c) - srgb_to_linear(f64::from_bits(c.to_bits() + 1))).abs();
    assert!(step < CONTINUITY_TOL);
    assert_eq!(contrast_ratio(Luminance::new(1.0f64), Luminance::new(0.0)), 21.0);
    assert_eq!(relative_luminance(&Srgb::new(0.0, 1.0, 0.0)).value(), 0.7152);
    format!("branch gap {:.2e}, CR(1,0) = 21, green = 0.7152", (below - above).abs())
}

// ---------------------------------------------------------------------------

fn panic_message(e: Box<dyn std::any::Any + Send>) -> String {
    e.downcast_ref::<String>()
        .cloned()
        .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "panic".into())
}

type Criterion = (&'static str, fn() -> String);

#[test]
fn acceptance() {
    let criteria: [Criterion; 8] = [
        ("WCAG coverage on fuzzed backgrounds", wcag_coverage),
        ("alpha* matches exhaustive grid scan", alpha_oracle),
        ("attenuation ratio closed form", attenuation_ratio),
        ("literal mode equals plain sampling", literal_fidelity),
        ("extraction oracles and suppression idempotence", extraction_oracles),
        ("narrative bank recursion", narrative_recursion),
        ("golden pipeline and refine isolation", golden_pipeline),
        ("color math goldens", color_goldens),
    ];
    let mut failures = 0;
    let mut lines = Vec::new();
    for (i, (name, f)) in criteria.into_iter().enumerate() {
        let line = match catch_unwind(AssertUnwindSafe(f)) {
            Ok(detail) => format!("PASS criterion {}: {name}: {detail}", i + 1),
            Err(e) => {
                failures += 1;
                format!("FAIL criterion {}: {name}: {}", i + 1, panic_message(e))
            }
        };
        let _ = writeln!(std::io::stderr(), "{line}");
        lines.push(line);
    }
    assert_eq!(failures, 0, "{}", lines.join("\n"));
}
