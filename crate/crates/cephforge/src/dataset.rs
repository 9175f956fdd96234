//! Dataset production: patch-pair export, Type II datasets and
//! super-resolution triples.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use cephforge_core::cephgeom::{DualRgbPatch, QuadrantPatch};
use cephforge_core::dataset::{sr_samples, BlurLevel, Split, SplitPlan, SrConfig};
use cephforge_core::pipeline::{
    simulate_dual_views, synthesize_type1, type2_from_views, Type2Config,
};
use cephforge_core::{Image2, Volume};
use rayon::prelude::*;

use crate::cache::{projection_key, ProjectionCache};
use crate::error::{Error, Result};
use crate::io::{load_gray_png, load_rgb_png, load_volume, save_gray_png, save_rgb_png};
use crate::manifest::{
    check_patient_id, manifest_path, read_pairs, render_pairs, render_sr, resolve, PatchPairRecord,
    SrRecord, PAIR_MANIFEST, SR_MANIFEST,
};

/// An in-memory patch pair awaiting export.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchPair {
    pub input: DualRgbPatch,
    pub target: QuadrantPatch<u8>,
    pub patient: String,
    pub split: Split,
}

impl PatchPair {
    fn record(&self) -> PatchPairRecord {
        let q = self.target.quadrant;
        let rel =
            |kind: &str| manifest_path(&Path::new(&self.patient).join(format!("{q}_{kind}.png")));
        PatchPairRecord {
            input: rel("input"),
            target: rel("target"),
            quadrant: q,
            patient: self.patient.clone(),
            split: self.split,
        }
    }

    fn validate(&self) -> Result<()> {
        check_patient_id(&self.patient)?;
        if self.input.quadrant != self.target.quadrant {
            return Err(Error::Usage(format!(
                "patient {}: input is {} but target is {}",
                self.patient, self.input.quadrant, self.target.quadrant
            )));
        }
        if self.input.dims() != self.target.data.dims() {
            return Err(Error::Usage(format!(
                "patient {} {}: input {:?} and target {:?} differ in size",
                self.patient,
                self.target.quadrant,
                self.input.dims(),
                self.target.data.dims()
            )));
        }
        Ok(())
    }

    fn write(&self, root: &Path) -> Result<PatchPairRecord> {
        let rec = self.record();
        save_rgb_png(&root.join(&rec.input), &self.input)?;
        save_gray_png(&root.join(&rec.target), &self.target.data)?;
        Ok(rec)
    }
}

fn create_root(root: &Path) -> Result<()> {
    std::fs::create_dir_all(root).map_err(|e| Error::write(root, e))
}

fn write_manifest(path: &Path, text: &str) -> Result<PathBuf> {
    std::fs::write(path, text).map_err(|e| Error::write(path, e))?;
    Ok(path.to_path_buf())
}

/// Write every pair's images under `root` and a manifest listing them.
/// Returns the manifest path.
pub fn export_pairs(pairs: &[PatchPair], root: &Path) -> Result<PathBuf> {
    let mut seen = BTreeSet::new();
    for p in pairs {
        p.validate()?;
        if !seen.insert((p.patient.as_str(), p.target.quadrant)) {
            return Err(Error::Usage(format!(
                "duplicate output path for patient {} {}",
                p.patient, p.target.quadrant
            )));
        }
    }
    create_root(root)?;
    let records = pairs
        .par_iter()
        .map(|p| p.write(root))
        .collect::<Result<Vec<_>>>()?;
    write_manifest(&root.join(PAIR_MANIFEST), &render_pairs(&records)?)
}

/// Read a pair manifest and check that every referenced image exists and
/// that input and target dims agree.
pub fn validate_pairs(manifest: &Path) -> Result<Vec<PatchPairRecord>> {
    let records = read_pairs(manifest)?;
    records.par_iter().try_for_each(|r| {
        let [input, ..] = load_rgb_png(&resolve(manifest, &r.input))?;
        let target = load_gray_png(&resolve(manifest, &r.target))?;
        if input.dims() != target.dims() {
            return Err(Error::format(
                manifest,
                format!(
                    "{}: input {:?} vs target {:?}",
                    r.input,
                    input.dims(),
                    target.dims()
                ),
            ));
        }
        Ok(())
    })?;
    Ok(records)
}

/// One volume feeding a Type II dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Type2Input {
    pub patient: String,
    /// Volume sidecar (`.meta`) or payload (`.raw`) path.
    pub volume: PathBuf,
}

#[derive(Debug, Clone, Default)]
pub struct Type2Options {
    pub config: Type2Config,
    pub plan: SplitPlan,
    pub cache: Option<ProjectionCache>,
}

/// The four pairs of one volume.
pub fn type2_pairs(
    v: &Volume,
    patient: &str,
    split: Split,
    cfg: &Type2Config,
    cache: Option<&ProjectionCache>,
) -> Result<Vec<PatchPair>> {
    let views = match cache {
        Some(c) => {
            let key = projection_key(v, cfg);
            match c.get(&key, cfg) {
                Some(views) => {
                    log::debug!("{patient}: projections from cache");
                    views
                }
                None => {
                    let views = simulate_dual_views(v, cfg)?;
                    c.put(&key, &views)?;
                    views
                }
            }
        }
        None => simulate_dual_views(v, cfg)?,
    };
    let target = synthesize_type1(v, &cfg.target_config())?;
    let sample = type2_from_views(&views, &target, cfg)?;
    Ok(sample
        .inputs
        .into_iter()
        .zip(sample.targets)
        .map(|(input, target)| PatchPair {
            input,
            target,
            patient: patient.to_string(),
            split,
        })
        .collect())
}

/// Build a Type II dataset: four dual-projection/target pairs per volume.
/// Patients are assigned to splits in sorted id order.
pub fn produce_type2_dataset(
    inputs: &[Type2Input],
    opts: &Type2Options,
    root: &Path,
) -> Result<PathBuf> {
    let mut sorted: Vec<&Type2Input> = inputs.iter().collect();
    sorted.sort_by(|a, b| a.patient.cmp(&b.patient));
    for w in sorted.windows(2) {
        if w[0].patient == w[1].patient {
            return Err(Error::Usage(format!(
                "patient id {} appears twice",
                w[0].patient
            )));
        }
    }
    for i in &sorted {
        check_patient_id(&i.patient)?;
        if !i.volume.exists() && !crate::io::raw_pair(&i.volume).0.exists() {
            return Err(Error::read(&i.volume, std::io::ErrorKind::NotFound.into()));
        }
    }
    let c = &opts.config;
    c.geometry.validate()?;
    c.vd.validate()?;
    c.target_config().validate()?;
    let splits = opts.plan.assign(sorted.len())?;
    create_root(root)?;
    let per_volume = sorted
        .par_iter()
        .zip(splits)
        .map(|(input, split)| {
            let v = load_volume(&input.volume)?;
            log::info!("{}: simulating projections", input.patient);
            let pairs = type2_pairs(&v, &input.patient, split, c, opts.cache.as_ref())?;
            pairs
                .iter()
                .map(|p| p.write(root))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let records: Vec<PatchPairRecord> = per_volume.into_iter().flatten().collect();
    write_manifest(&root.join(PAIR_MANIFEST), &render_pairs(&records)?)
}

fn sr_comments(cfg: &SrConfig, levels: &[BlurLevel]) -> Vec<(String, String)> {
    let levels = levels
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",");
    [
        ("seed", cfg.seed.to_string()),
        ("hr_patch", cfg.hr_patch.to_string()),
        ("lr_patch", cfg.lr_patch().to_string()),
        ("factor", cfg.factor.to_string()),
        ("per_image", cfg.per_image.to_string()),
        ("jitter", cfg.jitter.to_string()),
        ("blur_levels", levels),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

/// Cut seeded HR/LR/ILR patch triples from HR cephalograms, write them as
/// PNGs under `root` and return the manifest path with the records.
pub fn make_sr_dataset(
    images: &[Image2<u8>],
    cfg: &SrConfig,
    root: &Path,
) -> Result<(PathBuf, Vec<SrRecord>)> {
    cfg.validate()?;
    for (i, img) in images.iter().enumerate() {
        if img.width() < cfg.hr_patch || img.height() < cfg.hr_patch {
            return Err(Error::Usage(format!(
                "image {i} is {}x{}, smaller than one {}x{} patch",
                img.width(),
                img.height(),
                cfg.hr_patch,
                cfg.hr_patch
            )));
        }
    }
    create_root(root)?;
    let per_image = images
        .par_iter()
        .enumerate()
        .map(|(i, img)| {
            let samples = sr_samples(img, i, cfg, &BlurLevel::ALL)?;
            samples
                .iter()
                .map(|s| {
                    let rel = |kind: &str| {
                        manifest_path(
                            &Path::new(&format!("img{i:04}"))
                                .join(format!("p{:02}_{}_{kind}.png", s.patch_index, s.blur)),
                        )
                    };
                    let rec = SrRecord {
                        hr: rel("hr"),
                        lr: rel("lr"),
                        ilr: rel("ilr"),
                        blur: s.blur,
                    };
                    save_gray_png(&root.join(&rec.hr), &s.hr)?;
                    save_gray_png(&root.join(&rec.lr), &s.lr)?;
                    save_gray_png(&root.join(&rec.ilr), &s.ilr)?;
                    Ok(rec)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let records: Vec<SrRecord> = per_image.into_iter().flatten().collect();
    let text = render_sr(&records, &sr_comments(cfg, &BlurLevel::ALL))?;
    Ok((write_manifest(&root.join(SR_MANIFEST), &text)?, records))
}
