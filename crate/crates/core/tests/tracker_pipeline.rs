use rgbt::geometry::BBox;
use rgbt::pixel::{synthetic_training_patches, train_projection};
use rgbt::pixel::latlrr::LatLrrOptions;
use rgbt::siamese::triplicate_tir;
use rgbt::sim::{synth_sequence, SynthConfig};
use rgbt::tensor::FeatureMap;
use rgbt::tracker::{FusionMode, Tracker, TrackerConfig};

fn small(seed: u64, frames: usize) -> SynthConfig {
    SynthConfig {
        seed,
        frames,
        width: 128,
        height: 96,
        target_w: 22.0,
        target_h: 18.0,
        ..SynthConfig::default()
    }
}

fn tracker(mode: FusionMode) -> Tracker<f64> {
    Tracker::new(TrackerConfig { mode, ..TrackerConfig::default() }, None).unwrap()
}

#[test]
fn static_scene_does_not_drift() {
    let (seq, gt) = synth_sequence("s", &small(1, 1)).unwrap();
    let frame = seq.frame::<f64>(0).unwrap();
    let t = tracker(FusionMode::RgbOnly);
    let out = t.run_sequence(20, |_| Ok(frame.clone()), &gt[0]).unwrap();
    for (b, _) in &out {
        assert!(b.center_distance(&gt[0]) < 1.0, "drifted to {b:?}");
    }
}

#[test]
fn equal_modalities_carry_no_bias() {
    let (seq, gt) = synth_sequence("s", &small(2, 8)).unwrap();
    let gray = |k: usize| {
        let (_, tir) = seq.frame::<f64>(k)?;
        Ok((triplicate_tir(&tir)?, tir))
    };
    let t = tracker(FusionMode::DecisionDfat);
    for (_, o) in t.run_sequence(8, gray, &gt[0]).unwrap().into_iter().skip(1) {
        let o = o.unwrap();
        assert_eq!(o.lambda12, o.lambda22);
        assert_eq!(o.bias_gap, Some(0.0));
        assert_eq!(o.modulated_gap, Some(0.0));
    }
}

#[test]
fn debias_diagnostics_are_consistent() {
    let (seq, gt) = synth_sequence("s", &small(3, 10)).unwrap();
    let t = tracker(FusionMode::DecisionDfat);
    let out = t.run_sequence(10, |k| seq.frame(k), &gt[0]).unwrap();
    for (_, o) in out.into_iter().skip(1) {
        let o = o.unwrap();
        let (l12, l22) = (o.lambda12.unwrap(), o.lambda22.unwrap());
        assert!(l12 > 0.0 && l22 > 0.0);
        // lambda12 is the TIR positive mean, lambda22 the RGB one
        assert!((o.bias_gap.unwrap() - (l22 - l12)).abs() < 1e-12);
        assert!(o.modulated_gap.unwrap().abs() < 1e-12 * l12.max(l22));
    }
}

#[test]
fn template_refreshes_on_cadence() {
    let (seq, gt) = synth_sequence("s", &small(4, 35)).unwrap();
    let t = tracker(FusionMode::DecisionDfat);
    let out = t.run_sequence(35, |k| seq.frame(k), &gt[0]).unwrap();
    let updated: Vec<usize> = out
        .iter()
        .enumerate()
        .filter(|(_, (_, o))| o.is_some_and(|o| o.template_updated))
        .map(|(k, _)| k)
        .collect();
    assert_eq!(updated, vec![10, 20, 30]);

    let frozen = Tracker::new(
        TrackerConfig {
            template_update: false,
            ..TrackerConfig::<f64>::default()
        },
        None,
    )
    .unwrap();
    let out = frozen.run_sequence(35, |k| seq.frame(k), &gt[0]).unwrap();
    assert!(out.iter().all(|(_, o)| o.is_none_or(|o| !o.template_updated)));
}

#[test]
fn every_mode_tracks() {
    let (seq, gt) = synth_sequence("s", &small(5, 4)).unwrap();
    let patches = synthetic_training_patches::<f64>(0, 48, 4);
    let opts = LatLrrOptions {
        max_iter: 200,
        ..LatLrrOptions::default()
    };
    let (proj, _) = train_projection(&patches, 4, &opts).unwrap();
    for mode in FusionMode::ALL {
        let projection = (mode == FusionMode::Pixel).then(|| proj.clone());
        let t = Tracker::new(TrackerConfig { mode, ..TrackerConfig::default() }, projection).unwrap();
        let out = t.run_sequence(4, |k| seq.frame(k), &gt[0]).unwrap();
        assert_eq!(out.len(), 4);
        // pixel mode keeps a fused stream and a thermal stream by default
        let two_stream = matches!(
            mode,
            FusionMode::DecisionDfat | FusionMode::DecisionAvg | FusionMode::AfterNorm | FusionMode::Pixel
        );
        for (b, o) in &out[1..] {
            assert!(b.w > 0.0 && b.h > 0.0, "{mode}");
            assert_eq!(o.unwrap().lambda12.is_some(), two_stream, "{mode}");
        }
    }
    assert!(Tracker::new(
        TrackerConfig::<f64> {
            mode: FusionMode::Pixel,
            ..TrackerConfig::default()
        },
        None
    )
    .is_err());
}

#[test]
fn single_frame_echoes_the_initial_box() {
    let (seq, gt) = synth_sequence("s", &small(6, 1)).unwrap();
    let out = tracker(FusionMode::DecisionDfat).run_sequence(1, |k| seq.frame(k), &gt[0]).unwrap();
    assert_eq!(out.len(), 1);
    assert_eq!(out[0].0, gt[0]);
    assert!(out[0].1.is_none());
}

#[test]
fn reruns_are_identical() {
    let (seq, gt) = synth_sequence("s", &small(7, 12)).unwrap();
    let t = tracker(FusionMode::DecisionDfat);
    let a = t.run_sequence(12, |k| seq.frame(k), &gt[0]).unwrap();
    let b = t.run_sequence(12, |k| seq.frame(k), &gt[0]).unwrap();
    assert_eq!(a, b);
    let again = tracker(FusionMode::DecisionDfat).run_sequence(12, |k| seq.frame(k), &gt[0]).unwrap();
    assert_eq!(a, again);
}

#[test]
fn symmetric_scene_has_no_mean_gap() {
    let cfg = SynthConfig {
        symmetric: true,
        bias: 0.0,
        ..small(8, 50)
    };
    let (seq, gt) = synth_sequence("s", &cfg).unwrap();
    let out = tracker(FusionMode::DecisionDfat).run_sequence(50, |k| seq.frame(k), &gt[0]).unwrap();
    let gaps: Vec<f64> = out.iter().filter_map(|(_, o)| o.and_then(|o| o.bias_gap)).collect();
    assert_eq!(gaps.len(), 49);
    let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
    assert!(mean.abs() < 0.05, "mean gap {mean}");
}

#[test]
fn mismatched_frames_are_rejected() {
    let t = tracker(FusionMode::DecisionDfat);
    let rgb = FeatureMap::<f64>::zeros(3, 64, 64);
    let tir = FeatureMap::<f64>::zeros(1, 64, 48);
    let b = BBox::new(32.0, 32.0, 16.0, 16.0).unwrap();
    assert!(t.init(&rgb, &tir, &b).is_err());
    let tir = FeatureMap::<f64>::zeros(1, 64, 64);
    let mut state = t.init(&rgb, &tir, &b).unwrap();
    let bigger = FeatureMap::<f64>::zeros(3, 80, 64);
    assert!(t.track_frame(&mut state, &bigger, &FeatureMap::zeros(1, 80, 64)).is_err());
}
