//! Synthetic corpus to detection scores in one go.
//!
//! Usage: `end_to_end <work dir> [config.toml]`

use std::path::PathBuf;
use std::time::Instant;

use stp_core::corpus::{generate_synthetic, read_manifest, Split, SynthConfig};
use stp_core::evaluation::{render_table, Averaging};
use stp_core::imaging::load_image;
use stp_core::pipeline::{
    build_line_set, build_patch_set, evaluate_detections, evaluate_patch_model, train_line_model,
    train_patch_model, ImageDetections,
};
use stp_core::svm::{evaluate_classifier, TEXT};
use stp_core::{Detector, Extractor, PipelineConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "/tmp/e2e".into()));
    let cfg = match args.next() {
        Some(p) => PipelineConfig::load(p.as_ref())?,
        None => PipelineConfig::default(),
    };
    let t0 = Instant::now();
    let synth = SynthConfig {
        count: 150,
        ..SynthConfig::default()
    };
    if !dir.join("manifest.jsonl").exists() {
        generate_synthetic(&synth, &dir)?;
    }
    let m = read_manifest(&dir.join("manifest.jsonl"))?;
    println!("corpus {:.1}s", t0.elapsed().as_secs_f64());

    let t = Instant::now();
    let train = build_patch_set(&m, Some(Split::Train), &cfg)?;
    let test = build_patch_set(&m, Some(Split::Test), &cfg)?;
    println!(
        "patches train {}+/{}- test {}+/{}- ({:.1}s)",
        train.count(TEXT),
        train.items.len() - train.count(TEXT),
        test.count(TEXT),
        test.items.len() - test.count(TEXT),
        t.elapsed().as_secs_f64()
    );
    let t = Instant::now();
    let patch_model = train_patch_model(&train, &cfg)?;
    println!(
        "patch model: {} SVs, converged {} ({:.1}s)",
        patch_model.n_support(),
        patch_model.metadata.converged,
        t.elapsed().as_secs_f64()
    );
    println!(
        "patch train {:?}",
        evaluate_patch_model(&patch_model, &train)?
    );
    println!(
        "patch test  {:?}",
        evaluate_patch_model(&patch_model, &test)?
    );

    let t = Instant::now();
    let lines = build_line_set(&m, Some(Split::Train), &cfg, &patch_model)?;
    println!(
        "line set {}+/{}- ({:.1}s)",
        lines.count(TEXT),
        lines.labels.len() - lines.count(TEXT),
        t.elapsed().as_secs_f64()
    );
    let t = Instant::now();
    let line_model = train_line_model(&lines, &cfg)?;
    println!(
        "line model: {} SVs ({:.1}s)",
        line_model.n_support(),
        t.elapsed().as_secs_f64()
    );
    let test_lines = build_line_set(&m, Some(Split::Test), &cfg, &patch_model)?;
    let ex: &Extractor = line_model.extractor.as_ref().unwrap();
    let fv = test_lines
        .crops
        .iter()
        .map(|c| ex.extract(c))
        .collect::<Result<Vec<_>, _>>()?;
    println!(
        "line test {:?}",
        evaluate_classifier(&line_model, &fv, &test_lines.labels)?
    );

    let t = Instant::now();
    let det = Detector::new(cfg.clone(), patch_model, line_model)?;
    let mut dets = Vec::new();
    let mut unverified = Vec::new();
    for e in m.split(Some(Split::Test)) {
        let img = load_image(&m.image_path(e))?;
        let regions = det.filter(&img, &det.extract(&img))?;
        let linked = det.link(&regions);
        let verified = det.verify(&img, &linked)?;
        unverified.push(ImageDetections {
            image: e.image.clone(),
            lines: linked.iter().map(|l| l.summary()).collect(),
        });
        dets.push(ImageDetections {
            image: e.image.clone(),
            lines: verified.iter().map(|l| l.summary()).collect(),
        });
    }
    println!("detect {:.1}s", t.elapsed().as_secs_f64());
    let before = evaluate_detections(&unverified, &m, Some(Split::Test), Averaging::Micro)?;
    let after = evaluate_detections(&dets, &m, Some(Split::Test), Averaging::Micro)?;
    println!(
        "{}",
        render_table(&[("linked", &before), ("verified", &after)])
    );
    println!("totals before {:?} after {:?}", before.totals, after.totals);
    println!("total {:.1}s", t0.elapsed().as_secs_f64());
    Ok(())
}
