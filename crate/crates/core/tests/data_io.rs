use std::fs;
use std::path::Path;

use image::{GrayImage, Luma, Rgb, RgbImage};
use rgbt::data::{load_dataset, load_sequence, write_sequence_list, Sequence};
use rgbt::geometry::{Region, BBox};
use rgbt::sim::{synth_sequence, SynthConfig};
use rgbt::Error;

fn write_frames(dir: &Path, n_rgb: usize, n_ir: usize) {
    fs::create_dir_all(dir.join("color")).unwrap();
    fs::create_dir_all(dir.join("ir")).unwrap();
    for k in 0..n_rgb {
        RgbImage::from_pixel(16, 12, Rgb([k as u8 * 40, 10, 200]))
            .save(dir.join("color").join(format!("{:08}.png", k + 1)))
            .unwrap();
    }
    for k in 0..n_ir {
        GrayImage::from_pixel(16, 12, Luma([k as u8 * 50]))
            .save(dir.join("ir").join(format!("{:08}.png", k + 1)))
            .unwrap();
    }
}

#[test]
fn synthetic_sequence_survives_a_roundtrip() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = SynthConfig {
        frames: 5,
        width: 64,
        height: 48,
        target_w: 12.0,
        target_h: 10.0,
        ..SynthConfig::default()
    };
    let (seq, boxes) = synth_sequence("roundtrip", &cfg).unwrap();
    let dir = tmp.path().join("roundtrip");
    seq.write(&dir, "png").unwrap();
    let loaded = load_sequence(&dir).unwrap();
    assert_eq!(loaded.name, "roundtrip");
    assert_eq!(loaded.len(), 5);
    for k in 0..5 {
        assert_eq!(loaded.frame::<f64>(k).unwrap(), seq.frame::<f64>(k).unwrap());
        let b = loaded.gt_box(k).unwrap();
        assert!((b.cx - boxes[k].cx).abs() < 1e-9 && (b.w - boxes[k].w).abs() < 1e-9);
    }
}

#[test]
fn three_frame_directory_loads() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("tiny");
    write_frames(&dir, 3, 3);
    fs::write(dir.join("groundtruth.txt"), "2,3,6,4\n2.5,3,6,4\n3,3,6,4\n\n").unwrap();
    let seq = load_sequence(&dir).unwrap();
    assert_eq!(seq.len(), 3);
    let (rgb, tir) = seq.frame::<f64>(1).unwrap();
    assert_eq!(rgb.shape(), (3, 12, 16));
    assert_eq!(tir.shape(), (1, 12, 16));
    assert_eq!(seq.gt_boxes().unwrap()[0], BBox::new(5.0, 5.0, 6.0, 4.0).unwrap());
}

#[test]
fn polygon_maps_to_its_envelope() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("poly");
    write_frames(&dir, 1, 1);
    fs::write(dir.join("groundtruth.txt"), "4,2,10,3,9,8,3,7\n").unwrap();
    let seq = load_sequence(&dir).unwrap();
    assert!(matches!(seq.groundtruth[0], Region::Poly8(_)));
    assert_eq!(seq.gt_box(0).unwrap(), BBox::from_corners(3.0, 2.0, 10.0, 8.0).unwrap());
}

#[test]
fn frame_count_mismatch_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("uneven");
    write_frames(&dir, 3, 2);
    fs::write(dir.join("groundtruth.txt"), "1,1,4,4\n").unwrap();
    let err = load_sequence(&dir).unwrap_err();
    assert!(err.is_data(), "{err}");
}

#[test]
fn bad_groundtruth_reports_its_line() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("badgt");
    write_frames(&dir, 3, 3);
    fs::write(dir.join("groundtruth.txt"), "1,1,4,4\n1,1,4,4\n1,1,four,4\n").unwrap();
    match load_sequence(&dir).unwrap_err() {
        Error::Parse { line, .. } => assert_eq!(line, 3),
        other => panic!("unexpected {other}"),
    }
    fs::write(dir.join("groundtruth.txt"), "1,1,4,4\n1,1,4\n").unwrap();
    match load_sequence(&dir).unwrap_err() {
        Error::Parse { line, .. } => assert_eq!(line, 2),
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn dataset_follows_the_sequence_list() {
    let tmp = tempfile::tempdir().unwrap();
    for name in ["b", "a"] {
        let dir = tmp.path().join(name);
        write_frames(&dir, 2, 2);
        fs::write(dir.join("groundtruth.txt"), "1,1,4,4\n2,1,4,4\n").unwrap();
    }
    write_sequence_list(tmp.path(), &["b".into(), "a".into()]).unwrap();
    let seqs = load_dataset(tmp.path()).unwrap();
    let names: Vec<&str> = seqs.iter().map(|s| s.name.as_str()).collect();
    assert_eq!(names, ["b", "a"]);

    // a dataset root pointing at a single sequence loads just that one
    assert_eq!(load_dataset(&tmp.path().join("a")).unwrap().len(), 1);
    assert!(load_dataset(&tmp.path().join("missing")).unwrap_err().is_data());
}

#[test]
fn in_memory_sequences_are_checked() {
    let rgb = vec![RgbImage::new(8, 8); 2];
    let tir = vec![GrayImage::new(8, 8)];
    let gt = vec![Region::Rect4([1.0, 1.0, 2.0, 2.0])];
    assert!(Sequence::from_images("x", rgb, tir, gt.clone()).is_err());
    assert!(Sequence::from_images("x", vec![], vec![], gt).is_err());
}
