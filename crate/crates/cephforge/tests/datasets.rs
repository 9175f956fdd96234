use std::collections::BTreeMap;
use std::path::Path;

use cephforge::cache::ProjectionCache;
use cephforge::dataset::{
    export_pairs, make_sr_dataset, produce_type2_dataset, validate_pairs, PatchPair, Type2Input,
    Type2Options,
};
use cephforge::io;
use cephforge::manifest::{read_pairs, read_sr, resolve, PAIR_HEADER};
use cephforge_core::cephgeom::{DualRgbPatch, Quadrant, QuadrantPatch, VirtualDetectorSpec};
use cephforge_core::dataset::{downsample_avg, BlurLevel, Split, SplitPlan, SrConfig};
use cephforge_core::pipeline::Type2Config;
use cephforge_core::projector::{ConeGeometry, DetectorGrid, ViewAngle};
use cephforge_core::raster::to_u8;
use cephforge_core::{Image2, Volume};

fn tree_bytes(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn pair(patient: &str, q: Quadrant, split: Split, fill: u8) -> PatchPair {
    let img = Image2::from_fn(8, 6, |u, v| fill.wrapping_add((u + 8 * v) as u8)).unwrap();
    PatchPair {
        input: DualRgbPatch {
            r: img.clone(),
            g: img.map(|x| x / 2),
            b: img.clone(),
            quadrant: q,
        },
        target: QuadrantPatch {
            data: img,
            quadrant: q,
            normalized: true,
        },
        patient: patient.to_string(),
        split,
    }
}

#[test]
fn empty_export_writes_header_only_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let m = export_pairs(&[], dir.path()).unwrap();
    assert_eq!(
        std::fs::read_to_string(&m).unwrap(),
        format!("{PAIR_HEADER}\n")
    );
    assert!(validate_pairs(&m).unwrap().is_empty());
}

#[test]
fn export_of_460_patients_is_split_and_deterministic() {
    let ids: Vec<String> = (0..460).map(|i| format!("p{i:03}")).collect();
    let splits = SplitPlan::default().assign(ids.len()).unwrap();
    let mut pairs = Vec::new();
    for (i, (id, split)) in ids.iter().zip(&splits).enumerate() {
        for q in Quadrant::ALL {
            pairs.push(pair(id, q, *split, i as u8));
        }
    }
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ma = export_pairs(&pairs, a.path()).unwrap();
    // Input order must not matter.
    pairs.reverse();
    export_pairs(&pairs, b.path()).unwrap();
    assert_eq!(tree_bytes(a.path()), tree_bytes(b.path()));

    let records = validate_pairs(&ma).unwrap();
    assert_eq!(records.len(), 1840);
    let count = |s: Split| records.iter().filter(|r| r.split == s).count();
    assert_eq!(
        (count(Split::Train), count(Split::Val), count(Split::Test)),
        (1600, 40, 200)
    );
    // A patient never straddles splits.
    for w in records.chunks(4) {
        assert!(w
            .iter()
            .all(|r| r.patient == w[0].patient && r.split == w[0].split));
    }
}

#[test]
fn export_rejects_duplicates_and_mismatches() {
    let dir = tempfile::tempdir().unwrap();
    let p = pair("a", Quadrant::Q1, Split::Train, 0);
    assert!(export_pairs(&[p.clone(), p.clone()], dir.path()).is_err());
    let mut bad = p.clone();
    bad.target.quadrant = Quadrant::Q2;
    assert!(export_pairs(&[bad], dir.path()).is_err());
    let mut bad = p;
    bad.patient = "../x".into();
    assert!(export_pairs(&[bad], dir.path()).is_err());
}

fn small_sr_config() -> SrConfig {
    SrConfig {
        hr_patch: 40,
        factor: 5,
        per_image: 42,
        jitter: 4,
        seed: 11,
    }
}

fn textured(w: usize, h: usize, k: usize) -> Image2<u8> {
    Image2::from_fn(w, h, |u, v| ((u * 7 + v * 13 + k * 31) % 251) as u8).unwrap()
}

#[test]
fn sr_dataset_records_dims_and_reruns() {
    let images = vec![textured(200, 250, 0), textured(230, 210, 1)];
    let cfg = small_sr_config();
    let a = tempfile::tempdir().unwrap();
    let (manifest, records) = make_sr_dataset(&images, &cfg, a.path()).unwrap();
    assert_eq!(records.len(), 2 * 42);
    let (comments, parsed) = read_sr(&manifest).unwrap();
    assert_eq!(parsed, records);
    assert!(comments.contains(&("seed".to_string(), "11".to_string())));
    for level in BlurLevel::ALL {
        assert_eq!(records.iter().filter(|r| r.blur == level).count(), 42);
    }
    for r in records.iter().take(6) {
        let hr = io::load_gray_png(&resolve(&manifest, &r.hr)).unwrap();
        let lr = io::load_gray_png(&resolve(&manifest, &r.lr)).unwrap();
        let ilr = io::load_gray_png(&resolve(&manifest, &r.ilr)).unwrap();
        assert_eq!(
            (hr.dims(), lr.dims(), ilr.dims()),
            ((40, 40), (8, 8), (40, 40))
        );
        if r.blur == BlurLevel::X5 {
            assert_eq!(
                lr,
                downsample_avg(&hr.map(f64::from), 5).unwrap().map(to_u8)
            );
        }
    }

    let b = tempfile::tempdir().unwrap();
    make_sr_dataset(&images, &cfg, b.path()).unwrap();
    assert_eq!(tree_bytes(a.path()), tree_bytes(b.path()));

    let c = tempfile::tempdir().unwrap();
    make_sr_dataset(&images, &SrConfig { seed: 12, ..cfg }, c.path()).unwrap();
    assert_ne!(tree_bytes(a.path()), tree_bytes(c.path()));
}

#[test]
fn sr_dataset_default_patch_size() {
    let images = vec![textured(640, 800, 2)];
    let dir = tempfile::tempdir().unwrap();
    let (_, records) = make_sr_dataset(&images, &SrConfig::default(), dir.path()).unwrap();
    assert_eq!(records.len(), 42);
    let lr = io::load_gray_png(&dir.path().join(&records[0].lr)).unwrap();
    assert_eq!(lr.dims(), (64, 64));
    assert!(make_sr_dataset(&[textured(300, 800, 0)], &SrConfig::default(), dir.path()).is_err());
}

fn small_type2() -> Type2Config {
    let det = DetectorGrid::new(96, 96, 2.0, 2.0).unwrap();
    let vd = VirtualDetectorSpec {
        nu: 64,
        nv: 64,
        su: 2.0,
        sv: 2.0,
    };
    Type2Config {
        geometry: ConeGeometry::new(650.0, 950.0, det, ViewAngle::Deg0).unwrap(),
        vd,
        ..Type2Config::default()
    }
}

/// Soft-tissue ball with a dense rod crossing the midsagittal plane.
fn head(marker: [f64; 2], scale: f64) -> Volume {
    let dims = [40; 3];
    let s = [3.0; 3];
    Volume::from_fn(dims, s, Volume::centered_origin(dims, s), |[x, y, z]| {
        if x.abs() < 12.0 && (y - marker[0]).abs() < 2.0 && (z - marker[1]).abs() < 2.0 {
            3000.0
        } else if x * x + y * y + z * z < (50.0 * scale) * (50.0 * scale) {
            40.0
        } else {
            -1000.0
        }
    })
    .unwrap()
}

fn argmax(img: &Image2<u8>) -> (usize, usize) {
    let i = (0..img.data().len())
        .max_by_key(|&i| (img.data()[i], usize::MAX - i))
        .unwrap();
    (i % img.width(), i / img.width())
}

#[test]
fn type2_dataset_layout_marker_and_cache() {
    let dir = tempfile::tempdir().unwrap();
    let vols = dir.path().join("vols");
    let mut inputs = Vec::new();
    for (i, id) in ["c", "a", "b"].iter().enumerate() {
        let path = vols.join(format!("{id}.meta"));
        io::save_volume(&path, &head([20.0, 24.0], 0.8 + 0.1 * i as f64)).unwrap();
        inputs.push(Type2Input {
            patient: id.to_string(),
            volume: path,
        });
    }
    let cache_dir = dir.path().join("cache");
    let opts = Type2Options {
        config: small_type2(),
        plan: SplitPlan {
            train: 1.0,
            val: 1.0,
            test: 1.0,
        },
        cache: Some(ProjectionCache::new(&cache_dir).unwrap()),
    };
    let out1 = dir.path().join("out1");
    let manifest = produce_type2_dataset(&inputs, &opts, &out1).unwrap();
    let records = validate_pairs(&manifest).unwrap();
    assert_eq!(records.len(), 12);
    assert_eq!(records[0].patient, "a");
    assert_eq!(
        records
            .iter()
            .map(|r| r.split)
            .collect::<std::collections::BTreeSet<_>>()
            .len(),
        3
    );
    assert_eq!(std::fs::read_dir(&cache_dir).unwrap().count(), 3);

    // The marker sits in Q1 (y > 0, z > 0); both views and the target agree
    // on its position after rebinning.
    let q1 = records
        .iter()
        .find(|r| r.patient == "a" && r.quadrant == Quadrant::Q1)
        .unwrap();
    let [r, g, b] = io::load_rgb_png(&resolve(&manifest, &q1.input)).unwrap();
    assert_eq!(r.dims(), (32, 32));
    assert_eq!(r, b);
    let target = io::load_gray_png(&resolve(&manifest, &q1.target)).unwrap();
    let (pr, pg, pt) = (argmax(&r), argmax(&g), argmax(&target));
    for p in [pg, pt] {
        assert!(
            pr.0.abs_diff(p.0) <= 1 && pr.1.abs_diff(p.1) <= 1,
            "{pr:?} vs {p:?}"
        );
    }
    // Normalized Q1 keeps its orientation: marker at (20, 24) mm on a 2 mm grid.
    assert!(pr.0.abs_diff(10) <= 1 && pr.1.abs_diff(12) <= 1, "{pr:?}");

    let out2 = dir.path().join("out2");
    produce_type2_dataset(&inputs, &opts, &out2).unwrap();
    assert_eq!(tree_bytes(&out1), tree_bytes(&out2));
    let uncached = Type2Options {
        cache: None,
        ..opts.clone()
    };
    let out3 = dir.path().join("out3");
    produce_type2_dataset(&inputs, &uncached, &out3).unwrap();
    assert_eq!(tree_bytes(&out1), tree_bytes(&out3));
    assert_eq!(read_pairs(&manifest).unwrap(), records);
}

#[test]
fn type2_rejects_duplicate_patients_and_missing_volumes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.meta");
    io::save_volume(&path, &head([0.0, 0.0], 1.0)).unwrap();
    let opts = Type2Options {
        config: small_type2(),
        ..Type2Options::default()
    };
    let dup = vec![
        Type2Input {
            patient: "a".into(),
            volume: path.clone(),
        };
        2
    ];
    assert!(produce_type2_dataset(&dup, &opts, &dir.path().join("o")).is_err());
    let missing = vec![Type2Input {
        patient: "m".into(),
        volume: dir.path().join("missing.meta"),
    }];
    let e = produce_type2_dataset(&missing, &opts, &dir.path().join("o")).unwrap_err();
    assert_eq!(e.exit_code(), 1);
}
