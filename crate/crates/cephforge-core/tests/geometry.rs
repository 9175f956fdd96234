use cephforge_core::cephgeom::{
    cone_project_point, denormalize_quadrant, magnification, normalize_quadrant, patch_envelope,
    rebin_to_vd, split_quadrants, stitch_quadrants, VirtualDetectorSpec,
};
use cephforge_core::projector::{
    to_zero_degree_frame, ConeGeometry, DetectorGrid, RayCaster, ViewAngle,
};
use cephforge_core::{Image2, IntegralImage, Volume};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn argmax(img: &IntegralImage) -> (usize, usize) {
    let w = img.dims().0;
    let i = (0..img.image.data().len())
        .max_by(|&a, &b| img.image.data()[a].total_cmp(&img.image.data()[b]))
        .unwrap();
    (i % w, i / w)
}

#[test]
fn magnification_closed_forms() {
    for (x, d0, m) in [
        (0.0, 650.0, 1.0),
        (325.0, 650.0, 2.0),
        (-650.0, 650.0, 0.5),
        (762.0, 1524.0, 2.0),
    ] {
        assert_eq!(magnification(x, d0).unwrap(), m);
    }
    assert!((magnification(65.0, 650.0).unwrap() - 1.1111).abs() < 1e-4);
}

#[test]
fn dual_projection_bracket_holds_for_random_points() {
    let g = ConeGeometry::dental_cbct(ViewAngle::Deg0);
    let g180 = g.with_angle(ViewAngle::Deg180);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut violations = 0;
    for _ in 0..10_000 {
        let lim = 0.8 * g.d0;
        let pt = [
            rng.random_range(-lim..lim),
            rng.random_range(-150.0..150.0),
            rng.random_range(-150.0..150.0),
        ];
        let a = cone_project_point(pt, &g).unwrap();
        let b = cone_project_point(pt, &g180).unwrap();
        for c in 0..2 {
            let (lo, hi) = (a[c].min(b[c]), a[c].max(b[c]));
            if !(lo <= pt[c + 1] && pt[c + 1] <= hi) {
                violations += 1;
            }
        }
    }
    assert_eq!(violations, 0);
}

#[test]
fn off_plane_point_projects_by_similar_triangles() {
    let g = ConeGeometry::dental_cbct(ViewAngle::Deg0);
    let (x, z) = (40.0, 30.0);
    let p0 = cone_project_point([x, 0.0, z], &g).unwrap();
    let p180 = cone_project_point([x, 0.0, z], &g.with_angle(ViewAngle::Deg180)).unwrap();
    assert!((p0[1] - z * 650.0 / (650.0 - x)).abs() < 1e-12);
    assert!((p180[1] - z * 650.0 / (650.0 + x)).abs() < 1e-12);
    assert!(p180[1] < z && z < p0[1]);
}

#[test]
fn midsagittal_point_rebins_to_same_pixel_in_both_views() {
    let dims = [65; 3];
    let (y0, z0) = (12.0, -8.0);
    let v = Volume::from_fn(
        dims,
        [1.0; 3],
        Volume::centered_origin(dims, [1.0; 3]),
        |[x, y, z]| {
            if x.abs() < 0.25 && (y - y0).abs() < 0.25 && (z - z0).abs() < 0.25 {
                3000.0
            } else {
                -1000.0
            }
        },
    )
    .unwrap();
    let det = DetectorGrid::new(128, 128, 0.73, 0.73).unwrap();
    let vd = VirtualDetectorSpec {
        nu: 128,
        nv: 128,
        su: 0.5,
        sv: 0.5,
    };
    let expected = vd.plane_grid().to_pixel([y0, z0]);
    let mut peaks = Vec::new();
    for angle in [ViewAngle::Deg0, ViewAngle::Deg180] {
        let g = ConeGeometry::new(650.0, 950.0, det, angle).unwrap();
        let proj = to_zero_degree_frame(&RayCaster::default().perspective(&v, &g).unwrap(), angle);
        let (u, w) = argmax(&rebin_to_vd(&proj, &g, &vd).unwrap());
        assert!((u as f64 - expected[0]).abs() <= 1.0 && (w as f64 - expected[1]).abs() <= 1.0);
        peaks.push((u, w));
    }
    let (a, b) = (peaks[0], peaks[1]);
    assert!(a.0.abs_diff(b.0) <= 1 && a.1.abs_diff(b.1) <= 1);
}

#[test]
fn rebin_of_zero_is_zero() {
    let g = ConeGeometry::dental_cbct(ViewAngle::Deg0);
    let proj = IntegralImage::new(
        Image2::filled(512, 512, 0.0).unwrap(),
        g.detector.plane_grid(),
    )
    .unwrap();
    let vd = rebin_to_vd(&proj, &g, &VirtualDetectorSpec::default()).unwrap();
    assert!(vd.image.data().iter().all(|&x| x == 0.0));
}

#[test]
fn envelope_vertex_counts() {
    assert_eq!(
        patch_envelope(0.0, 0.0, 30.0, 0.0, 80.0, 650.0)
            .unwrap()
            .vertices
            .len(),
        4
    );
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let (y0, z0) = (rng.random_range(0.5..100.0), rng.random_range(0.5..100.0));
        let x_min = rng.random_range(-100.0..50.0);
        let x_max = x_min + rng.random_range(1.0..100.0);
        let e = patch_envelope(y0, z0, rng.random_range(5.0..60.0), x_min, x_max, 650.0).unwrap();
        assert_eq!(e.vertices.len(), 6);
    }
}

proptest! {
    #[test]
    fn quadrant_normalization_is_an_involution(
        hw in 1usize..12,
        hh in 1usize..12,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut img = Image2::filled(2 * hw, 2 * hh, 0u8).unwrap();
        for x in img.data_mut() {
            *x = rng.random();
        }
        let quads = split_quadrants(&img).unwrap();
        let mut normalized = Vec::new();
        for q in &quads {
            let n = normalize_quadrant(q).unwrap();
            prop_assert_eq!(&denormalize_quadrant(&n).unwrap(), q);
            normalized.push(n);
        }
        prop_assert_eq!(stitch_quadrants(&normalized, true).unwrap(), img);
    }
}
