use std::fs;

use scenebias::detect::DetectorConfig;
use scenebias::pipeline::{self, RunConfig};
use scenebias::repeat::MatchParams;
use scenebias::xform::ScheduleConfig;

fn schedule() -> ScheduleConfig {
    ScheduleConfig::from_toml_str("gaussian-blur = [0.0, 1.0, 2.0, 3.0]\n", "test").unwrap()
}

/// A flat scene has no keypoints, so every rate for it is undefined: the
/// records keep it with an empty rate and the rankings leave it out.
#[test]
fn undefined_rates_flow_through() {
    let tmp = tempfile::tempdir().unwrap();
    let scenes = tmp.path().join("scenes");
    scenebias::synth::write_corpus(&scenes, 5, 3, 64, 64).unwrap();
    image::GrayImage::from_pixel(64, 64, image::Luma([90]))
        .save(scenes.join("scene_006.png"))
        .unwrap();
    let mut labels = fs::read_to_string(scenes.join("labels.csv")).unwrap();
    labels.push_str("scene_006.png,0,0,1\n");
    fs::write(scenes.join("labels.csv"), labels).unwrap();

    let ds = tmp.path().join("ds");
    let m = pipeline::cmd_generate(&scenes, &schedule(), &ds, false, 2).unwrap();
    assert_eq!(m.images.len(), 24);

    let cfg = RunConfig {
        detectors: vec![DetectorConfig::harris()],
        j: 2,
        jobs: 2,
        ..RunConfig::new(ds.join("manifest.json"), tmp.path().join("run"))
    };
    let records = pipeline::cmd_evaluate(&cfg, false).unwrap();
    assert_eq!(records.len(), 18);
    let flat: Vec<_> = records.iter().filter(|r| r.scene.0 == 6).collect();
    assert_eq!(flat.len(), 3);
    assert!(flat.iter().all(|r| r.n_ref == 0 && r.rate().is_none()));
    let text = fs::read_to_string(cfg.records_path()).unwrap();
    assert!(text.contains("harris,6,gaussian-blur,2,1,0,0,\n"));

    let vectors = pipeline::cmd_rank(&cfg).unwrap();
    assert_eq!(vectors.len(), 6);
    for v in &vectors {
        assert!(v.scenes.iter().all(|s| s.0 != 6));
        if v.polarity == scenebias::rank::Polarity::Top {
            assert!(v.available(), "5 defined rates allow j = 2");
        }
    }
    let files = pipeline::cmd_report(&cfg).unwrap();
    assert_eq!(files.len(), 3);
}

#[test]
fn overlap_matching_and_parameter_guard() {
    let tmp = tempfile::tempdir().unwrap();
    let scenes = tmp.path().join("scenes");
    scenebias::synth::write_corpus(&scenes, 4, 9, 64, 48).unwrap();
    let ds = tmp.path().join("ds");
    pipeline::cmd_generate(&scenes, &schedule(), &ds, false, 1).unwrap();
    assert!(pipeline::cmd_generate(&scenes, &schedule(), &ds, false, 1).is_err());

    let base = RunConfig {
        detectors: vec![DetectorConfig::hessian()],
        ..RunConfig::new(ds.join("manifest.json"), tmp.path().join("plain"))
    };
    let plain = pipeline::cmd_evaluate(&base, false).unwrap();
    let overlap = RunConfig {
        params: MatchParams { use_overlap: true, ..Default::default() },
        out: tmp.path().join("overlap"),
        ..base.clone()
    };
    let strict = pipeline::cmd_evaluate(&overlap, false).unwrap();
    assert_eq!(plain.len(), strict.len());
    for (a, b) in plain.iter().zip(&strict) {
        assert_eq!(a.n_ref, b.n_ref);
        assert!(b.n_rep <= a.n_rep);
    }

    // the overlap run cannot be resumed with different parameters
    let mixed = RunConfig { out: tmp.path().join("overlap"), ..base.clone() };
    assert!(pipeline::cmd_evaluate(&mixed, false).is_err());
    assert_eq!(pipeline::cmd_evaluate(&mixed, true).unwrap(), plain);
}
