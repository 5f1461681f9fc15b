mod common;

use common::{end_to_end, first_difference};
use stp_core::corpus::SynthConfig;
use stp_core::PipelineConfig;

fn synth() -> SynthConfig {
    SynthConfig {
        seed: 3,
        count: 24,
        ..SynthConfig::default()
    }
}

#[test]
fn small_corpus_detects_and_is_thread_count_independent() {
    let cfg = PipelineConfig::default();
    let runs: Vec<_> = [1, 3]
        .iter()
        .map(|&threads| {
            let dir = tempfile::tempdir().unwrap();
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| end_to_end(dir.path(), &synth(), &cfg))
                .unwrap()
        })
        .collect();
    assert_eq!(
        first_difference(&runs[0].artifacts, &runs[1].artifacts),
        None
    );
    let r = &runs[0];
    assert!(
        r.patch_test_accuracy >= 0.85,
        "patch accuracy {}",
        r.patch_test_accuracy
    );
    assert!(r.report.f_measure >= 0.6, "{:?}", r.report);
}

#[test]
fn single_line_scene_is_found() {
    use stp_core::corpus::render_scene;
    use stp_core::pipeline::{
        build_line_set, build_patch_set, train_line_model, train_patch_model,
    };
    use stp_core::{overlap_ratio, Detector};

    let dir = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig::default();
    let synth = synth();
    let m = stp_core::corpus::generate_synthetic(&synth, dir.path()).unwrap();
    let patch = train_patch_model(&build_patch_set(&m, None, &cfg).unwrap(), &cfg).unwrap();
    let line = train_line_model(&build_line_set(&m, None, &cfg, &patch).unwrap(), &cfg).unwrap();
    let det = Detector::new(cfg, patch, line).unwrap();

    let one_line = SynthConfig {
        seed: 77,
        max_lines: 1,
        distractor_density: 0.0,
        ..synth
    };
    let (img, gt) = render_scene(&one_line, 0).unwrap();
    assert_eq!(gt.len(), 1);
    let lines = det.detect(&img).unwrap();
    let best = lines
        .iter()
        .map(|l| overlap_ratio(&l.bbox, &gt[0]).unwrap())
        .fold(0.0, f64::max);
    assert!(best > 0.5, "best overlap {best} from {} lines", lines.len());
}
