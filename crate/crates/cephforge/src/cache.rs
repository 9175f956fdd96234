//! On-disk cache of simulated projection pairs, keyed by a SHA-256 of the
//! volume contents and every parameter that affects the projections.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use cephforge_core::pipeline::Type2Config;
use cephforge_core::projector::Integrand;
use cephforge_core::{Image2, IntegralImage, Raster, Volume};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const KEY_VERSION: &[u8] = b"cephforge-projections-v1";

#[derive(Debug, Clone)]
pub struct ProjectionCache {
    dir: PathBuf,
}

/// Cache key of the dual views of `v` under `cfg`.
pub fn projection_key(v: &Volume, cfg: &Type2Config) -> String {
    let mut h = Sha256::new();
    h.update(KEY_VERSION);
    for d in v.dims() {
        h.update((d as u64).to_le_bytes());
    }
    let g = &cfg.geometry;
    let caster = cfg.target.caster();
    let mu = match caster.integrand {
        Integrand::Attenuation(m) => m.mu_water,
        Integrand::Raw => f64::NAN,
    };
    let params = v.spacing().into_iter().chain(v.origin()).chain([
        g.d0,
        g.d1,
        g.detector.su,
        g.detector.sv,
        caster.samples_per_mm,
        mu,
    ]);
    for p in params {
        h.update(p.to_le_bytes());
    }
    h.update((g.detector.nu as u64).to_le_bytes());
    h.update((g.detector.nv as u64).to_le_bytes());
    for chunk in v.data().chunks(4096) {
        let bytes: Vec<u8> = chunk.iter().flat_map(|x| x.to_le_bytes()).collect();
        h.update(&bytes);
    }
    hex::encode(h.finalize())
}

impl ProjectionCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| Error::write(&dir, e))?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.f64"))
    }

    /// Cached views for `key`, or `None` on a miss or an unreadable entry.
    pub fn get(&self, key: &str, cfg: &Type2Config) -> Option<[IntegralImage; 2]> {
        let det = cfg.geometry.detector;
        let n = det.nu * det.nv;
        let bytes = std::fs::read(self.path(key)).ok()?;
        if bytes.len() != 2 * n * 8 {
            log::warn!("ignoring malformed cache entry {key}");
            return None;
        }
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("chunk of 8")))
            .collect();
        let view = |i: usize| {
            let img = Image2::new(det.nu, det.nv, values[i * n..(i + 1) * n].to_vec()).ok()?;
            Raster::new(img, det.plane_grid()).ok()
        };
        Some([view(0)?, view(1)?])
    }

    /// Store views; written to a temporary file and renamed into place.
    pub fn put(&self, key: &str, views: &[IntegralImage; 2]) -> Result<()> {
        let path = self.path(key);
        let tmp = self.dir.join(format!("{key}.{}.tmp", std::process::id()));
        let write = || -> std::io::Result<()> {
            let mut f = std::io::BufWriter::new(std::fs::File::create(&tmp)?);
            for v in views {
                for x in v.image.data() {
                    f.write_all(&x.to_le_bytes())?;
                }
            }
            f.into_inner().map_err(|e| e.into_error())?.sync_all()?;
            std::fs::rename(&tmp, &path)
        };
        write().map_err(|e| Error::write(&path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_depends_on_contents_and_geometry() {
        let dims = [4, 4, 4];
        let a = Volume::filled(dims, [1.0; 3], [0.0; 3], 0.0).unwrap();
        let b = Volume::filled(dims, [1.0; 3], [0.0; 3], 1.0).unwrap();
        let cfg = Type2Config::default();
        assert_eq!(projection_key(&a, &cfg), projection_key(&a, &cfg));
        assert_ne!(projection_key(&a, &cfg), projection_key(&b, &cfg));
        let mut far = cfg;
        far.geometry.d1 += 1.0;
        assert_ne!(projection_key(&a, &cfg), projection_key(&a, &far));
        assert_eq!(projection_key(&a, &cfg).len(), 64);
    }
}
