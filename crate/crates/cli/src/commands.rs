use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::Deserialize;
use stp_core::corpus::{generate_synthetic, read_manifest, write_jsonl, PatchSet};
use stp_core::evaluation::{render_table, Averaging};
use stp_core::imaging::load_image;
use stp_core::pipeline::{
    build_line_set, build_patch_set, evaluate_detections, evaluate_patch_model, read_detections,
    read_stage_dumps, render_sweep, standard_grid, sweep, train_line_model, train_patch_model,
    ImageDetections, KernelConfig, PatchFeatures, StageData, StageDump, StageTimings, SweepCell,
    STAGE_FORMAT,
};
use stp_core::rect::Rect;
use stp_core::svm::{load_model, save_model, SvmModel, TEXT};
use stp_core::{Detector, GeomThresholds, Image, Stage};

use crate::config::CliConfig;
use crate::{
    Cli, Command, CropArgs, DetectArgs, EvalArgs, KernelArgs, SweepArgs, SynthArgs, TrainLineArgs,
    TrainPatchArgs, UsageError,
};

/// Write a file, creating its directory first.
fn write_output(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    if let Some(jobs) = g.jobs {
        if jobs == 0 {
            return Err(usage("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .context("starting the worker pool")?;
    }
    let mut cfg = CliConfig::resolve(g.config.as_deref())?;
    if let Some(seed) = g.seed {
        cfg.set_seed(seed);
    }
    if let Some(profile) = &g.profile {
        cfg.pipeline.geometry = GeomThresholds::profile(profile)?;
    }
    let start = Instant::now();
    match &cli.command {
        Command::Synth(a) => synth(a, cfg),
        Command::Crop(a) => crop(a, cfg),
        Command::TrainPatch(a) => train_patch(a, cfg),
        Command::TrainLine(a) => train_line(a, cfg),
        Command::Sweep(a) => run_sweep(a, cfg),
        Command::Detect(a) => detect(a, cfg, g.verbose),
        Command::Eval(a) => eval(a),
    }?;
    if g.verbose {
        eprintln!("done in {:.2}s", start.elapsed().as_secs_f64());
    }
    Ok(())
}

fn synth(a: &SynthArgs, mut cfg: CliConfig) -> Result<()> {
    let s = &mut cfg.synth;
    if let Some(n) = a.count {
        s.count = n;
    }
    if let Some(d) = a.canvas {
        s.canvas = d;
    }
    if let Some(dir) = &a.glyph_dir {
        s.glyph_dir = Some(dir.clone());
    }
    let m = generate_synthetic(s, &a.out)?;
    println!(
        "wrote {} images with {} text lines to {}",
        m.entries.len(),
        m.total_rects(None),
        a.out.display()
    );
    Ok(())
}

fn crop(a: &CropArgs, mut cfg: CliConfig) -> Result<()> {
    let p = &mut cfg.pipeline;
    if let Some(d) = a.dims {
        p.patch_dims = d;
    }
    if let Some(n) = a.neg_per_image {
        p.sampling.neg_per_image = n;
    }
    if let Some(n) = a.mined_per_image {
        p.sampling.mined_per_image = n;
    }
    if a.no_gt {
        p.sampling.include_gt = false;
    }
    let m = read_manifest(&a.manifest)?;
    let set = build_patch_set(&m, a.split, p)?;
    set.write(&a.out)?;
    println!(
        "wrote {} text and {} non-text patches ({}) to {}; {} skipped",
        set.count(TEXT),
        set.items.len() - set.count(TEXT),
        p.patch_dims,
        a.out.display(),
        set.skipped
    );
    Ok(())
}

fn apply_kernel(args: &KernelArgs, kernel: &mut KernelConfig, cfg: &mut CliConfig) {
    if let Some(kind) = args.kernel {
        kernel.kind = kind;
    }
    if let Some(d) = args.degree {
        kernel.degree = d;
    }
    if args.gamma.is_some() {
        kernel.gamma = args.gamma;
    }
    if let Some(c) = args.c {
        cfg.pipeline.train.c = c;
    }
    if args.class_weighted {
        cfg.pipeline.train.class_weighted = true;
    }
}

fn report_model(kind: &str, m: &SvmModel, path: &Path) {
    println!(
        "{kind} model {} ({}, {} support vectors, converged: {}) -> {}",
        m.descriptor_id,
        m.kernel.label(),
        m.n_support(),
        m.metadata.converged,
        path.display()
    );
}

fn train_patch(a: &TrainPatchArgs, mut cfg: CliConfig) -> Result<()> {
    let mut kernel = cfg.pipeline.patch_kernel.clone();
    apply_kernel(&a.kernel, &mut kernel, &mut cfg);
    let p = &mut cfg.pipeline;
    p.patch_kernel = kernel;
    if let Some(d) = a.dims {
        p.patch_dims = d;
    }
    let features = a.features.as_deref().map(str::to_ascii_lowercase);
    p.patch_features = match (features.as_deref(), &p.patch_features) {
        (None | Some("hog"), PatchFeatures::Hog { cell_size }) => PatchFeatures::Hog {
            cell_size: a.cell_size.unwrap_or(*cell_size),
        },
        (Some("hog"), _) => PatchFeatures::Hog {
            cell_size: a.cell_size.unwrap_or(4),
        },
        (None | Some("kmeans"), PatchFeatures::Kmeans { k }) => PatchFeatures::Kmeans {
            k: a.k.unwrap_or(*k),
        },
        (Some("kmeans"), _) => PatchFeatures::Kmeans {
            k: a.k.unwrap_or(64),
        },
        (Some(other), _) => {
            return Err(usage(format!(
                "unknown feature kind `{other}` (hog or kmeans)"
            )))
        }
    };
    p.validate()?;
    let set = PatchSet::read(&a.patches)?;
    let model = train_patch_model(&set, p)?;
    save_model(&model, &a.out)?;
    report_model("patch", &model, &a.out);
    print_metrics("train", &evaluate_patch_model(&model, &set)?);
    if let Some(dir) = &a.test_patches {
        print_metrics(
            "test",
            &evaluate_patch_model(&model, &PatchSet::read(dir)?)?,
        );
    }
    Ok(())
}

fn print_metrics(name: &str, m: &stp_core::svm::ClassifierMetrics) {
    println!(
        "{name}: accuracy {:.4} precision {:.4} recall {:.4} F {:.4}",
        m.accuracy, m.precision, m.recall, m.f_measure
    );
}

fn model_path<'a>(
    flag: &'a Option<PathBuf>,
    config: &'a Option<PathBuf>,
    name: &str,
) -> Result<&'a Path> {
    flag.as_deref().or(config.as_deref()).ok_or_else(|| {
        usage(format!(
            "no {name} model: pass --{name}-model or set [models] {name}"
        ))
    })
}

fn train_line(a: &TrainLineArgs, mut cfg: CliConfig) -> Result<()> {
    let mut kernel = cfg.pipeline.line_kernel.clone();
    apply_kernel(&a.kernel, &mut kernel, &mut cfg);
    cfg.pipeline.line_kernel = kernel;
    cfg.pipeline.validate()?;
    let patch_path = model_path(&a.patch_model, &cfg.models.patch, "patch")?;
    let patch_model = load_model(patch_path)?;
    let m = read_manifest(&a.manifest)?;
    let set = build_line_set(&m, Some(a.split), &cfg.pipeline, &patch_model)?;
    println!(
        "line set: {} text and {} non-text crops",
        set.count(TEXT),
        set.labels.len() - set.count(TEXT)
    );
    let model = train_line_model(&set, &cfg.pipeline)?;
    save_model(&model, &a.out)?;
    report_model("line", &model, &a.out);
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GridFile {
    cells: Vec<SweepCell>,
}

fn load_grid(spec: &str) -> Result<Vec<SweepCell>> {
    if spec == "standard" {
        return Ok(standard_grid());
    }
    let path = Path::new(spec);
    let text = std::fs::read_to_string(path).with_context(|| format!("reading grid {spec}"))?;
    let parsed: std::result::Result<GridFile, String> = if path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"))
    {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.to_string())
    };
    let grid = parsed.map_err(|e| usage(format!("grid {spec}: {e}")))?;
    if grid.cells.is_empty() {
        return Err(usage(format!("grid {spec} has no cells")));
    }
    Ok(grid.cells)
}

fn run_sweep(a: &SweepArgs, cfg: CliConfig) -> Result<()> {
    let cells = load_grid(&a.grid)?;
    for c in &cells {
        c.kernel.resolve(1)?;
        stp_core::HogParams::with_cell(c.cell_size).validate()?;
    }
    let train = PatchSet::read(&a.train)?;
    let test = PatchSet::read(&a.test)?;
    let rows = sweep(&train, &test, &cells, &cfg.pipeline.train)?;
    let table = render_sweep(&rows);
    print!("{table}");
    write_output(&a.out, &(serde_json::to_string_pretty(&rows)? + "\n"))?;
    write_output(&a.out.with_extension("txt"), &table)?;
    Ok(())
}

/// `(id, path)` of every image to process.
fn detect_inputs(a: &DetectArgs) -> Result<Vec<(String, PathBuf)>> {
    match &a.manifest {
        Some(path) => {
            let m = read_manifest(path)?;
            Ok(m.split(a.split)
                .map(|e| (e.image.clone(), m.image_path(e)))
                .collect())
        }
        None if a.image.is_empty() => Err(usage("detect needs --image or --manifest")),
        None => Ok(a
            .image
            .iter()
            .map(|p| (p.display().to_string(), p.clone()))
            .collect()),
    }
}

fn draw_rect(img: &mut Image, r: &Rect, color: [u8; 3]) {
    let Some(r) = r.clamp_to(img.height(), img.width()) else {
        return;
    };
    let (top, left) = (r.top as usize, r.left as usize);
    let (bottom, right) = (r.bottom() as usize - 1, r.right() as usize - 1);
    for x in left..=right {
        img.set_pixel(top, x, color);
        img.set_pixel(bottom, x, color);
    }
    for y in top..=bottom {
        img.set_pixel(y, left, color);
        img.set_pixel(y, right, color);
    }
}

fn overlay_name(id: &str) -> String {
    let stem: String = id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{}.png", stem.trim_end_matches(".png"))
}

struct ImageResult {
    detections: ImageDetections,
    dump: Option<StageDump>,
    timings: StageTimings,
}

fn detect(a: &DetectArgs, cfg: CliConfig, verbose: bool) -> Result<()> {
    let patch_model = load_model(model_path(&a.patch_model, &cfg.models.patch, "patch")?)?;
    let line_model = load_model(model_path(&a.line_model, &cfg.models.line, "line")?)?;
    let detector = Detector::new(cfg.pipeline, patch_model, line_model)?;
    let inputs = detect_inputs(a)?;
    let from = Stage::try_from(a.from_stage.unwrap_or(1))?;
    let dump_stage = a.dump_stage.map(Stage::try_from).transpose()?;
    if let Some(d) = dump_stage {
        if d < from {
            return Err(usage("--dump-stage must not precede --from-stage"));
        }
    }
    let mut resume: BTreeMap<String, StageDump> = BTreeMap::new();
    if let Some(path) = &a.stage_input {
        for d in read_stage_dumps(path)? {
            if d.stage.next() != Some(from) {
                return Err(usage(format!(
                    "{} holds stage {} output but --from-stage is {}",
                    path.display(),
                    d.stage as u8,
                    from as u8
                )));
            }
            resume.insert(d.image.clone(), d);
        }
    }
    if let Some(dir) = &a.overlay {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let results = inputs
        .par_iter()
        .map(|(id, path)| -> Result<ImageResult> {
            let img = load_image(path)?;
            let input = if from == Stage::Extract {
                None
            } else {
                let d = resume.get(id).ok_or_else(|| {
                    anyhow::Error::new(stp_core::Error::IdMismatch(format!(
                        "no stage input for `{id}`"
                    )))
                })?;
                Some(d.data.clone())
            };
            let mut timings = StageTimings::default();
            let mut dump = None;
            let data = match dump_stage {
                Some(ds) => {
                    let mid = detector.run_stages(&img, from, ds, input, &mut timings)?;
                    dump = Some(StageDump {
                        format: STAGE_FORMAT.into(),
                        image: id.clone(),
                        stage: ds,
                        data: mid.clone(),
                    });
                    match ds.next() {
                        Some(next) => detector.run_stages(
                            &img,
                            next,
                            Stage::Verify,
                            Some(mid),
                            &mut timings,
                        )?,
                        None => mid,
                    }
                }
                None => detector.run_stages(&img, from, Stage::Verify, input, &mut timings)?,
            };
            let lines = match data {
                StageData::Lines(l) => l,
                StageData::Regions(_) => {
                    return Err(
                        stp_core::Error::Invariant("detection ended with regions".into()).into(),
                    )
                }
            };
            if let Some(dir) = &a.overlay {
                let mut canvas = img.clone();
                for l in &lines {
                    draw_rect(&mut canvas, &l.bbox, [255, 0, 0]);
                }
                canvas.save_png(&dir.join(overlay_name(id)))?;
            }
            Ok(ImageResult {
                detections: ImageDetections {
                    image: id.clone(),
                    lines: lines.iter().map(|l| l.summary()).collect(),
                },
                dump,
                timings,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut timings = StageTimings::default();
    for r in &results {
        timings.add(&r.timings);
    }
    let dets: Vec<ImageDetections> = results.iter().map(|r| r.detections.clone()).collect();
    if let Some(path) = &a.dump {
        let dumps: Vec<StageDump> = results.into_iter().filter_map(|r| r.dump).collect();
        write_jsonl(&dumps, path)?;
    }
    match &a.out {
        Some(path) => write_jsonl(&dets, path)?,
        None => {
            let mut out = std::io::stdout().lock();
            for d in &dets {
                writeln!(out, "{}", serde_json::to_string(d)?)?;
            }
        }
    }
    if verbose {
        let n: usize = dets.iter().map(|d| d.lines.len()).sum();
        eprintln!("{} images, {n} lines", dets.len());
        for s in Stage::ALL.into_iter().filter(|s| *s >= from) {
            eprintln!(
                "stage {} {:<8} {:>8.3}s (summed over workers)",
                s as u8,
                s.name(),
                timings.0[s as usize - 1].as_secs_f64()
            );
        }
    }
    Ok(())
}

fn eval(a: &EvalArgs) -> Result<()> {
    let dets = read_detections(&a.detections)?;
    let m = read_manifest(&a.manifest)?;
    let averaging = if a.macro_avg {
        Averaging::Macro
    } else {
        Averaging::Micro
    };
    let report = evaluate_detections(&dets, &m, a.split, averaging)?;
    print!("{}", render_table(&[(a.label.as_str(), &report)]));
    println!(
        "TP {} / detected {} / ground truth {}",
        report.totals.tp, report.totals.e, report.totals.t
    );
    if let Some(path) = &a.out {
        write_output(path, &(serde_json::to_string_pretty(&report)? + "\n"))?;
    }
    Ok(())
}
