//! Training-data preparation: intensity quantisation, resampling and
//! super-resolution patch sampling.

use alloc::format;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::raster::{to_u8, Cephalogram8, Image2, IntegralImage, Raster};

/// Default integral range mapped onto the 8-bit scale.
pub const QUANT_LO: f64 = 0.0;
pub const QUANT_HI: f64 = 6.0;

fn check_range(lo: f64, hi: f64) -> Result<()> {
    if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Parameter(format!(
            "quantisation range [{lo}, {hi}] is empty"
        )));
    }
    Ok(())
}

/// Clamp to `[lo, hi]` and map linearly onto `[0, 255]`.
pub fn quantize(img: &Image2<f64>, lo: f64, hi: f64) -> Result<Image2<u8>> {
    check_range(lo, hi)?;
    let scale = 255.0 / (hi - lo);
    Ok(img.map(|x| to_u8((x.clamp(lo, hi) - lo) * scale)))
}

pub fn quantize_integral(g: &IntegralImage, lo: f64, hi: f64) -> Result<Cephalogram8> {
    Raster::new(quantize(&g.image, lo, hi)?, g.grid)
}

/// Inverse of [`quantize`] up to quantisation error.
pub fn dequantize(img: &Image2<u8>, lo: f64, hi: f64) -> Result<Image2<f64>> {
    check_range(lo, hi)?;
    let step = (hi - lo) / 255.0;
    Ok(img.map(|q| lo + q as f64 * step))
}

/// Window `[u0, u0 + width) × [v0, v0 + height)` of an image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropWindow {
    pub u0: usize,
    pub v0: usize,
    pub width: usize,
    pub height: usize,
}

/// Largest centred window whose dims are multiples of `factor`.
pub fn divisible_crop(width: usize, height: usize, factor: usize) -> Result<CropWindow> {
    if factor == 0 {
        return Err(Error::Parameter("resampling factor must be >= 1".into()));
    }
    let (w, h) = (width / factor * factor, height / factor * factor);
    if w == 0 || h == 0 {
        return Err(Error::Dimensions(format!(
            "{width}x{height} image is smaller than one {factor}x{factor} block"
        )));
    }
    Ok(CropWindow {
        u0: (width - w) / 2,
        v0: (height - h) / 2,
        width: w,
        height: h,
    })
}

/// Block-mean downsampling. Non-divisible images are centre-cropped to the
/// largest divisible size first (see [`divisible_crop`]).
pub fn downsample_avg(img: &Image2<f64>, factor: usize) -> Result<Image2<f64>> {
    let win = divisible_crop(img.width(), img.height(), factor)?;
    let (ow, oh) = (win.width / factor, win.height / factor);
    let n = (factor * factor) as f64;
    Image2::from_fn(ow, oh, |u, v| {
        let mut acc = 0.0;
        for dv in 0..factor {
            for du in 0..factor {
                acc += img.get(win.u0 + u * factor + du, win.v0 + v * factor + dv);
            }
        }
        acc / n
    })
}

/// Nearest-neighbour (pixel replication) upsampling.
pub fn upsample_replicate<T: Copy + Send + Sync + Default>(
    img: &Image2<T>,
    factor: usize,
) -> Result<Image2<T>> {
    if factor == 0 {
        return Err(Error::Parameter("resampling factor must be >= 1".into()));
    }
    Image2::from_fn(img.width() * factor, img.height() * factor, |u, v| {
        img.get(u / factor, v / factor)
    })
}

/// Catmull-Rom kernel parameter.
pub const BICUBIC_A: f64 = -0.5;

#[inline]
fn cubic_weight(x: f64) -> f64 {
    let a = BICUBIC_A;
    let x = x.abs();
    if x <= 1.0 {
        ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a
    } else {
        0.0
    }
}

/// Source taps and weights for every output coordinate along one axis,
/// using half-pixel-centre alignment and edge clamping.
fn cubic_taps(n_in: usize, factor: usize) -> Vec<([usize; 4], [f64; 4])> {
    (0..n_in * factor)
        .map(|o| {
            let src = (o as f64 + 0.5) / factor as f64 - 0.5;
            let base = libm::floor(src);
            let t = src - base;
            let mut idx = [0usize; 4];
            let mut w = [0.0; 4];
            for k in 0..4 {
                let i = base as i64 - 1 + k as i64;
                idx[k] = i.clamp(0, n_in as i64 - 1) as usize;
                w[k] = cubic_weight(t - (k as f64 - 1.0));
            }
            (idx, w)
        })
        .collect()
}

/// Bicubic upsampling (Catmull-Rom, `a = −0.5`, half-pixel-centre
/// alignment, edge clamping). Reproduces linear ramps away from the border.
pub fn upsample_bicubic(img: &Image2<f64>, factor: usize) -> Result<Image2<f64>> {
    if factor == 0 {
        return Err(Error::Parameter("resampling factor must be >= 1".into()));
    }
    if factor == 1 {
        return Ok(img.clone());
    }
    let cols = cubic_taps(img.width(), factor);
    let rows = cubic_taps(img.height(), factor);
    // separable: columns first, then rows
    let horiz = Image2::from_fn(img.width() * factor, img.height(), |u, v| {
        let (idx, w) = &cols[u];
        (0..4).map(|k| w[k] * img.get(idx[k], v)).sum::<f64>()
    })?;
    Image2::from_fn(img.width() * factor, img.height() * factor, |u, v| {
        let (idx, w) = &rows[v];
        (0..4).map(|k| w[k] * horiz.get(u, idx[k])).sum::<f64>()
    })
}

/// Super-resolution degradation applied to the high-resolution patch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BlurLevel {
    /// Block-mean ×5 down.
    X5,
    /// Block-mean ×10 down, then bicubic ×2 up.
    X10X2,
}

impl BlurLevel {
    pub const ALL: [BlurLevel; 2] = [BlurLevel::X5, BlurLevel::X10X2];
}

impl fmt::Display for BlurLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BlurLevel::X5 => "x5",
            BlurLevel::X10X2 => "x10x2",
        })
    }
}

impl FromStr for BlurLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x5" => Ok(BlurLevel::X5),
            "x10x2" => Ok(BlurLevel::X10X2),
            _ => Err(Error::Parameter(format!("unknown blur level {s:?}"))),
        }
    }
}

/// Patch geometry of the super-resolution dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SrConfig {
    /// HR (and ILR) patch edge in pixels.
    pub hr_patch: usize,
    /// HR / LR resolution ratio.
    pub factor: usize,
    pub per_image: usize,
    /// Maximum jitter (pixels) applied to each grid position.
    pub jitter: i64,
    pub seed: u64,
}

impl Default for SrConfig {
    fn default() -> Self {
        Self {
            hr_patch: 320,
            factor: 5,
            per_image: 42,
            jitter: 16,
            seed: 0,
        }
    }
}

impl SrConfig {
    pub fn lr_patch(&self) -> usize {
        self.hr_patch / self.factor
    }

    pub fn validate(&self) -> Result<()> {
        if self.factor == 0 || self.hr_patch == 0 || self.hr_patch % (2 * self.factor) != 0 {
            return Err(Error::Parameter(format!(
                "HR patch {} must be a positive multiple of 2 x factor {}",
                self.hr_patch, self.factor
            )));
        }
        if self.per_image == 0 || self.jitter < 0 {
            return Err(Error::Parameter(
                "per_image must be >= 1 and jitter >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Top-left corners of `count` patches of edge `patch` on a regular grid
/// over a `width × height` image, each moved by a seeded jitter of at most
/// `jitter` pixels and clamped inside the image.
pub fn patch_origins(
    width: usize,
    height: usize,
    patch: usize,
    count: usize,
    jitter: i64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(usize, usize)>> {
    if width < patch || height < patch {
        return Err(Error::Dimensions(format!(
            "{width}x{height} image is smaller than one {patch}x{patch} patch"
        )));
    }
    let aspect = width as f64 / height as f64;
    let cols = (libm::round(libm::sqrt(count as f64 * aspect)) as usize).clamp(1, count);
    let rows = count.div_ceil(cols);
    let (span_u, span_v) = ((width - patch) as i64, (height - patch) as i64);
    let place = |i: usize, n: usize, span: i64| -> i64 {
        if n == 1 {
            span / 2
        } else {
            libm::round(i as f64 * span as f64 / (n - 1) as f64) as i64
        }
    };
    let mut out = Vec::with_capacity(count);
    'grid: for r in 0..rows {
        for c in 0..cols {
            if out.len() == count {
                break 'grid;
            }
            let du = if jitter > 0 {
                rng.random_range(-jitter..=jitter)
            } else {
                0
            };
            let dv = if jitter > 0 {
                rng.random_range(-jitter..=jitter)
            } else {
                0
            };
            let u = (place(c, cols, span_u) + du).clamp(0, span_u) as usize;
            let v = (place(r, rows, span_v) + dv).clamp(0, span_v) as usize;
            out.push((u, v));
        }
    }
    Ok(out)
}

/// One aligned (HR, LR, ILR) patch triple.
#[derive(Debug, Clone, PartialEq)]
pub struct SrSample {
    pub image_index: usize,
    pub patch_index: usize,
    /// Top-left corner of the HR patch in the source image.
    pub origin: (usize, usize),
    pub blur: BlurLevel,
    pub hr: Image2<u8>,
    pub lr: Image2<u8>,
    pub ilr: Image2<u8>,
}

fn to_f64(img: &Image2<u8>) -> Image2<f64> {
    img.map(|x| x as f64)
}

fn to_gray(img: &Image2<f64>) -> Image2<u8> {
    img.map(to_u8)
}

/// Degrade an HR patch into its LR and ILR counterparts.
pub fn degrade(
    hr: &Image2<u8>,
    blur: BlurLevel,
    factor: usize,
) -> Result<(Image2<u8>, Image2<u8>)> {
    let hr_f = to_f64(hr);
    let lr = match blur {
        BlurLevel::X5 => to_gray(&downsample_avg(&hr_f, factor)?),
        BlurLevel::X10X2 => to_gray(&upsample_bicubic(&downsample_avg(&hr_f, 2 * factor)?, 2)?),
    };
    let ilr = to_gray(&upsample_bicubic(&to_f64(&lr), factor)?);
    Ok((lr, ilr))
}

/// Seeded RNG for one source image.
pub fn image_rng(seed: u64, image_index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ image_index as u64)
}

/// Cut `cfg.per_image` patch triples from one HR cephalogram. Blur levels
/// cycle through `levels` patch by patch.
pub fn sr_samples(
    image: &Image2<u8>,
    image_index: usize,
    cfg: &SrConfig,
    levels: &[BlurLevel],
) -> Result<Vec<SrSample>> {
    cfg.validate()?;
    if levels.is_empty() {
        return Err(Error::Parameter(
            "at least one blur level is required".into(),
        ));
    }
    let mut rng = image_rng(cfg.seed, image_index);
    let origins = patch_origins(
        image.width(),
        image.height(),
        cfg.hr_patch,
        cfg.per_image,
        cfg.jitter,
        &mut rng,
    )?;
    origins
        .into_iter()
        .enumerate()
        .map(|(i, (u, v))| {
            let hr = image.crop(u, v, cfg.hr_patch, cfg.hr_patch)?;
            let blur = levels[i % levels.len()];
            let (lr, ilr) = degrade(&hr, blur, cfg.factor)?;
            Ok(SrSample {
                image_index,
                patch_index: i,
                origin: (u, v),
                blur,
                hr,
                lr,
                ilr,
            })
        })
        .collect()
}

/// Dataset split tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::Parameter(format!("unknown split {s:?}"))),
        }
    }
}

/// Relative sizes of the train/val/test splits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitPlan {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitPlan {
    /// 1600 / 40 / 200.
    fn default() -> Self {
        Self {
            train: 1600.0,
            val: 40.0,
            test: 200.0,
        }
    }
}

impl SplitPlan {
    /// Split tags for `n` items in order: train first, then val, then test.
    pub fn assign(&self, n: usize) -> Result<Vec<Split>> {
        let total = self.train + self.val + self.test;
        if !(self.train >= 0.0 && self.val >= 0.0 && self.test >= 0.0 && total > 0.0) {
            return Err(Error::Parameter(format!("split plan {self:?}")));
        }
        let n_train = (libm::round(n as f64 * self.train / total) as usize).min(n);
        let n_val = (libm::round(n as f64 * self.val / total) as usize).min(n - n_train);
        Ok((0..n)
            .map(|i| {
                if i < n_train {
                    Split::Train
                } else if i < n_train + n_val {
                    Split::Val
                } else {
                    Split::Test
                }
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn quantize_anchor_values() {
        let img = Image2::new(5, 1, vec![0.0, 6.0, 3.0, 7.0, -1.0]).unwrap();
        let q = quantize(&img, QUANT_LO, QUANT_HI).unwrap();
        assert_eq!(q.data(), &[0, 255, 128, 255, 0]);
        assert!(quantize(&img, 1.0, 1.0).is_err());
    }

    #[test]
    fn downsample_identity_and_checkerboard() {
        let img = Image2::from_fn(4, 4, |u, v| ((u + v) % 2) as f64 * 255.0).unwrap();
        assert_eq!(downsample_avg(&img, 1).unwrap(), img);
        let d = downsample_avg(&img, 2).unwrap();
        assert!(d.data().iter().all(|&x| x == 127.5));
        assert!(downsample_avg(&img, 0).is_err());
    }

    #[test]
    fn downsample_center_crops() {
        let w = divisible_crop(12, 7, 5).unwrap();
        assert_eq!(
            w,
            CropWindow {
                u0: 1,
                v0: 1,
                width: 10,
                height: 5
            }
        );
        let img = Image2::from_fn(12, 7, |u, v| (u + 100 * v) as f64).unwrap();
        assert_eq!(downsample_avg(&img, 5).unwrap().dims(), (2, 1));
        assert!(divisible_crop(3, 3, 5).is_err());
    }

    #[test]
    fn bicubic_constant_and_identity() {
        let img = Image2::filled(5, 4, 42.0).unwrap();
        let up = upsample_bicubic(&img, 3).unwrap();
        assert_eq!(up.dims(), (15, 12));
        assert!(up.data().iter().all(|&x| (x - 42.0).abs() < 1e-9));
        let ramp = Image2::from_fn(4, 4, |u, v| (u * 7 + v) as f64).unwrap();
        assert_eq!(upsample_bicubic(&ramp, 1).unwrap(), ramp);
    }

    #[test]
    fn cubic_kernel_partition_of_unity() {
        for i in 0..=10 {
            let t = i as f64 / 10.0;
            let s: f64 = (0..4).map(|k| cubic_weight(t - (k as f64 - 1.0))).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        assert_eq!(cubic_weight(0.0), 1.0);
        assert_eq!(cubic_weight(1.0), 0.0);
        assert_eq!(cubic_weight(2.0), 0.0);
    }

    #[test]
    fn patch_grid_fits_full_size_cephalogram() {
        let mut rng = image_rng(3, 0);
        let o = patch_origins(1935, 2400, 320, 42, 16, &mut rng).unwrap();
        assert_eq!(o.len(), 42);
        assert!(o.iter().all(|&(u, v)| u + 320 <= 1935 && v + 320 <= 2400));
        assert!(patch_origins(300, 2400, 320, 42, 16, &mut rng).is_err());
    }

    #[test]
    fn split_plan_counts() {
        let tags = SplitPlan::default().assign(460).unwrap();
        let count = |s| tags.iter().filter(|&&t| t == s).count();
        assert_eq!(
            (count(Split::Train), count(Split::Val), count(Split::Test)),
            (400, 10, 50)
        );
    }

    #[test]
    fn degrade_dims() {
        let hr = Image2::from_fn(320, 320, |u, v| ((u * 3 + v) % 256) as u8).unwrap();
        for blur in BlurLevel::ALL {
            let (lr, ilr) = degrade(&hr, blur, 5).unwrap();
            assert_eq!(lr.dims(), (64, 64));
            assert_eq!(ilr.dims(), (320, 320));
        }
    }
}
