use std::path::Path;

use cephforge::io;
use cephforge::Error;
use cephforge_core::cephgeom::{DualRgbPatch, Quadrant};
use cephforge_core::metrics::LandmarkSet;
use cephforge_core::{Image2, IntegralImage, PlaneGrid, Raster, Volume};

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

#[test]
fn volume_round_trip_and_floor_clamp() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("vol.meta");
    let dims = [3, 4, 5];
    let v = Volume::from_fn(dims, [0.5, 1.0, 2.0], [1.0, -2.0, 3.0], |[x, y, z]| {
        x * 100.0 + y * 10.0 + z
    })
    .unwrap();
    io::save_volume(&path, &v).unwrap();
    let back = io::load_volume(&dir.path().join("vol.raw")).unwrap();
    assert_eq!(back.dims(), dims);
    assert_eq!(back.spacing(), v.spacing());
    assert_eq!(back.origin(), v.origin());
    for (a, b) in v.data().iter().zip(back.data()) {
        assert!((a - b).abs() <= 0.5);
    }

    // Values below the scanner floor are clamped on load.
    let raw: Vec<u8> = [-2000i16, 0, 3000, -1024]
        .iter()
        .flat_map(|x| x.to_le_bytes())
        .collect();
    std::fs::write(dir.path().join("low.raw"), raw).unwrap();
    write(
        &dir.path().join("low.meta"),
        "dims=2,2,1\nspacing_mm=1,1,1\ndtype=int16le\n",
    );
    let low = io::load_volume(&dir.path().join("low.meta")).unwrap();
    assert_eq!(low.data(), &[-1024.0, 0.0, 3000.0, -1024.0]);
    assert_eq!(low.origin(), Volume::centered_origin([2, 2, 1], [1.0; 3]));
}

#[test]
fn volume_payload_size_mismatch_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("v.raw"), [0u8; 6]).unwrap();
    write(
        &dir.path().join("v.meta"),
        "dims=2,2,1\nspacing_mm=1,1,1\ndtype=int16le\n",
    );
    let e = io::load_volume(&dir.path().join("v.meta")).unwrap_err();
    assert!(matches!(e, Error::Format { .. }), "{e}");
    assert_eq!(e.exit_code(), 1);

    write(
        &dir.path().join("v.meta"),
        "dims=3,1,1\nspacing_mm=1,1,1\ndtype=float32le\n",
    );
    assert!(io::load_volume(&dir.path().join("v.meta")).is_err());
    write(&dir.path().join("v.meta"), "dims=3,1,1\ndtype=int16le\n");
    assert!(io::load_volume(&dir.path().join("v.meta")).is_err());
}

#[test]
fn missing_input_is_a_validation_error() {
    let e = io::load_volume(Path::new("/nonexistent/v.meta")).unwrap_err();
    assert_eq!(e.exit_code(), 1);
}

#[test]
fn integral_round_trip_keeps_grid() {
    let dir = tempfile::tempdir().unwrap();
    let img = Image2::from_fn(5, 3, |u, v| u as f64 * 0.25 + v as f64).unwrap();
    let grid = PlaneGrid {
        spacing: [0.5, 0.75],
        origin: [-1.0, 2.0],
    };
    let g = IntegralImage::new(img, grid).unwrap();
    let path = dir.path().join("g.raw");
    io::save_integral(&path, &g).unwrap();
    let back = io::load_integral(&path).unwrap();
    assert_eq!(back.grid, grid);
    assert_eq!(back.image, g.image);
}

#[test]
fn png_rows_are_stored_bottom_first() {
    let dir = tempfile::tempdir().unwrap();
    let img = Image2::from_fn(4, 3, |u, v| (10 * v + u) as u8).unwrap();
    let path = dir.path().join("a.png");
    io::save_gray_png(&path, &img).unwrap();
    assert_eq!(io::load_gray_png(&path).unwrap(), img);
    // Top PNG row holds the last raster row.
    let decoded = image::open(&path).unwrap().to_luma8();
    assert_eq!(decoded.get_pixel(0, 0).0[0], 20);

    let rgb = DualRgbPatch {
        r: img.clone(),
        g: img.map(|x| x + 100),
        b: img.clone(),
        quadrant: Quadrant::Q3,
    };
    let path = dir.path().join("rgb.png");
    io::save_rgb_png(&path, &rgb).unwrap();
    assert_eq!(io::load_rgb_png(&path).unwrap(), [rgb.r, rgb.g, rgb.b]);
}

#[test]
fn cephalogram_sidecar_and_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let img = Image2::filled(6, 4, 7u8).unwrap();
    let c = Raster::new(img, PlaneGrid::centered(6, 4, [0.5, 0.5])).unwrap();
    let path = dir.path().join("c.png");
    io::save_cephalogram(&path, &c).unwrap();
    assert_eq!(io::load_cephalogram(&path, None).unwrap(), c);

    let bare = dir.path().join("bare.png");
    io::save_gray_png(&bare, &c.image).unwrap();
    assert!(io::load_cephalogram(&bare, None).is_err());
    let f = io::load_cephalogram(&bare, Some([0.1, 0.1])).unwrap();
    assert_eq!(f.grid.spacing, [0.1, 0.1]);

    write(
        &dir.path().join("c.meta"),
        "dims=5,4\nspacing_mm=0.5,0.5\ndtype=uint8\n",
    );
    assert!(io::load_cephalogram(&path, None).is_err());
}

#[test]
fn landmark_files() {
    let dir = tempfile::tempdir().unwrap();
    let labels: Vec<String> = (1..=19).map(|i| format!("L{i}")).collect();
    let points: Vec<[f64; 2]> = (0..19).map(|i| [i as f64, 2.0 * i as f64]).collect();
    let set = LandmarkSet::new(labels, points).unwrap();
    let path = dir.path().join("l.tsv");
    io::save_landmarks(&path, &set).unwrap();
    assert_eq!(io::load_landmarks(&path, None).unwrap(), set);
    let scaled = io::load_landmarks(&path, Some([0.1, 0.1])).unwrap();
    assert!((scaled.points()[18][1] - 3.6).abs() < 1e-12);

    write(&path, "L1\t1\t2\n");
    assert!(io::load_landmarks(&path, None).is_err());
    write(&path, "L1\t1\n");
    assert!(io::load_landmarks(&path, None).is_err());
}

#[test]
fn film_params_and_transform_files() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("film.txt");
    write(&p, "# fitted\nc1=35\nt=2.4\nc4=derived\n");
    let f = io::load_film_params(&p).unwrap();
    assert_eq!((f.base.c1, f.base.t, f.base.s), (35.0, 2.4, 1.5));
    write(&p, "c4=abc\n");
    assert!(io::load_film_params(&p).is_err());

    let t = dir.path().join("t.txt");
    write(&t, "translation_mm=1,2,3\n");
    let r = io::load_transform(&t).unwrap();
    assert_eq!(r.translation_vector(), [1.0, 2.0, 3.0]);
    write(&t, "rotation=2,0,0,0,1,0,0,0,1\n");
    assert!(io::load_transform(&t).is_err());

    let s = dir.path().join("s.txt");
    write(&s, "0 40\n1.5 90\n# note\n3 200\n");
    assert_eq!(io::load_fit_samples(&s).unwrap().len(), 3);
    write(&s, "0 40 1\n");
    assert!(io::load_fit_samples(&s).is_err());
}
