use std::fs;

use usar_core::{GrayImage, Mask, View};
use usar_providers::replay::{write_entry, ReplayMeta};
use usar_providers::{replay_open, SourceError};

fn gray(w: usize, h: usize, seed: u8) -> GrayImage {
    GrayImage::new(w, h, (0..w * h).map(|i| (i as u8).wrapping_mul(seed)).collect()).unwrap()
}

fn mask(w: usize, h: usize) -> Mask {
    Mask::new(w, h, (0..w * h).map(|i| (i % 3) as u8).collect(), 1.0).unwrap()
}

#[test]
fn pair_with_meta() {
    let dir = tempfile::tempdir().unwrap();
    let meta = ReplayMeta {
        pixel_spacing_mm: Some(0.4),
        view: Some(View::Coronal),
        length_mm: Some(101.5),
        ..Default::default()
    };
    write_entry(dir.path(), "frame0001", &gray(8, 6, 3), Some(&mask(8, 6)), Some(&meta)).unwrap();

    let frames: Vec<_> = replay_open(dir.path()).unwrap().collect();
    assert_eq!(frames.len(), 1);
    let f = frames[0].as_ref().unwrap();
    assert_eq!(f.name, "frame0001");
    assert_eq!(f.image, gray(8, 6, 3));
    let gt = f.ground_truth.as_ref().unwrap();
    assert_eq!(gt.labels(), mask(8, 6).labels());
    assert_eq!(gt.pixel_spacing(), 0.4);
    assert_eq!(f.view, Some(View::Coronal));
    assert_eq!(f.reference.unwrap().length_mm, Some(101.5));
}

#[test]
fn sorted_by_name_and_image_only_entries() {
    let dir = tempfile::tempdir().unwrap();
    for (stem, seed) in [("b", 2), ("a10", 3), ("a2", 4)] {
        write_entry(dir.path(), stem, &gray(4, 4, seed), None, None).unwrap();
    }
    fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
    let src = replay_open(dir.path()).unwrap().with_default_spacing(0.7);
    assert_eq!(src.stems(), ["a10", "a2", "b"]);
    for f in src {
        let f = f.unwrap();
        assert!(f.ground_truth.is_none());
        assert_eq!(f.pixel_spacing, 0.7);
        assert_eq!(f.view, None);
    }
}

#[test]
fn mismatched_mask_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    write_entry(dir.path(), "f", &gray(512, 512, 1), Some(&mask(256, 256)), None).unwrap();
    let err = replay_open(dir.path()).unwrap().next().unwrap().unwrap_err();
    assert!(
        matches!(err, SourceError::DimensionMismatch { image: (512, 512), mask: (256, 256), .. }),
        "{err}"
    );
}

#[test]
fn empty_and_missing_directories() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(replay_open(dir.path()).unwrap().count(), 0);
    let gone = dir.path().join("nope");
    assert_eq!(
        replay_open(&gone).err(),
        Some(SourceError::MissingDirectory(gone))
    );
}

#[test]
fn malformed_files_name_the_file() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("x.pgm"), b"P5\n4 4\n255\nshort").unwrap();
    let err = replay_open(dir.path()).unwrap().next().unwrap().unwrap_err();
    assert!(matches!(err, SourceError::MalformedFile { .. }));
    assert!(err.to_string().contains("x.pgm"), "{err}");

    let dir = tempfile::tempdir().unwrap();
    write_entry(dir.path(), "y", &gray(2, 2, 1), None, None).unwrap();
    fs::write(dir.path().join("y.mask.pgm"), b"P5\n2 2\n255\n\x00\x01\x02\x07").unwrap();
    let err = replay_open(dir.path()).unwrap().next().unwrap().unwrap_err();
    assert!(err.to_string().contains("y.mask.pgm"), "{err}");

    let dir = tempfile::tempdir().unwrap();
    write_entry(dir.path(), "z", &gray(2, 2, 1), None, None).unwrap();
    fs::write(dir.path().join("z.meta"), "view=oblique\n").unwrap();
    let err = replay_open(dir.path()).unwrap().next().unwrap().unwrap_err();
    assert!(err.to_string().contains("z.meta"), "{err}");

    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("lonely.mask.pgm"), b"P5\n1 1\n255\n\x00").unwrap();
    assert!(matches!(
        replay_open(dir.path()).err(),
        Some(SourceError::MalformedFile { .. })
    ));
}
