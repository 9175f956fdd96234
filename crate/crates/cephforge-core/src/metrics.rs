//! Image-quality and landmark-accuracy metrics.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::raster::{Image2, Raster};

fn check_dims<A, B>(a: &Image2<A>, b: &Image2<B>) -> Result<()> {
    if !a.same_dims(b) {
        return Err(Error::DimensionMismatch(format!(
            "{:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    Ok(())
}

/// Root-mean-square difference, accumulated in `f64`.
pub fn rmse<T: Copy + Into<f64>>(a: &Image2<T>, b: &Image2<T>) -> Result<f64> {
    check_dims(a, b)?;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x.into() - y.into();
            d * d
        })
        .sum();
    Ok(libm::sqrt(sum / a.data().len() as f64))
}

/// `20 · log10(peak / rmse)`; `+∞` when the error is zero.
pub fn psnr_from_rmse(rmse: f64, peak: f64) -> f64 {
    if rmse == 0.0 {
        f64::INFINITY
    } else {
        20.0 * libm::log10(peak / rmse)
    }
}

/// Peak signal-to-noise ratio in dB. Identical images give `+∞`.
pub fn psnr<T: Copy + Into<f64>>(a: &Image2<T>, b: &Image2<T>, peak: f64) -> Result<f64> {
    if !(peak > 0.0) {
        return Err(Error::Parameter(format!(
            "PSNR peak {peak} must be positive"
        )));
    }
    Ok(psnr_from_rmse(rmse(a, b)?, peak))
}

/// `n` bilinear samples, endpoints inclusive, on the segment `p0 → p1`
/// given in world mm `(y, z)`.
pub fn line_profile(img: &Raster<f64>, p0: [f64; 2], p1: [f64; 2], n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::Parameter(format!(
            "profile needs at least 2 samples, got {n}"
        )));
    }
    let a = img.grid.to_pixel(p0);
    let b = img.grid.to_pixel(p1);
    for (p, px) in [(p0, a), (p1, b)] {
        if img.image.sample_bilinear(px[0], px[1]).is_none() {
            return Err(Error::OutOfBounds(format!("profile endpoint {p:?} mm")));
        }
    }
    Ok((0..n)
        .map(|i| {
            let t = i as f64 / (n - 1) as f64;
            let x = a[0] + t * (b[0] - a[0]);
            let y = a[1] + t * (b[1] - a[1]);
            img.image.sample_bilinear(x, y).unwrap_or(0.0)
        })
        .collect())
}

/// Number of landmarks in a cephalometric annotation.
pub const LANDMARK_COUNT: usize = 19;

/// Radii (mm) of the standard detection-rate table.
pub const DEFAULT_SDR_RADII: [f64; 4] = [2.0, 2.5, 3.0, 4.0];

/// Ordered, labelled landmark positions in mm.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSet {
    points: Vec<[f64; 2]>,
    labels: Vec<String>,
}

impl LandmarkSet {
    pub fn new(labels: Vec<String>, points: Vec<[f64; 2]>) -> Result<Self> {
        if points.len() != LANDMARK_COUNT || labels.len() != points.len() {
            return Err(Error::Landmarks(format!(
                "expected {LANDMARK_COUNT} labelled landmarks, got {} points and {} labels",
                points.len(),
                labels.len()
            )));
        }
        if let Some(p) = points
            .iter()
            .find(|p| !(p[0].is_finite() && p[1].is_finite()))
        {
            return Err(Error::Landmarks(format!("non-finite landmark {p:?}")));
        }
        Ok(Self { points, labels })
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn translated(&self, d: [f64; 2]) -> Self {
        Self {
            points: self
                .points
                .iter()
                .map(|p| [p[0] + d[0], p[1] + d[1]])
                .collect(),
            labels: self.labels.clone(),
        }
    }
}

/// Radial errors (mm) between matching landmarks.
pub fn radial_errors(detected: &LandmarkSet, reference: &LandmarkSet) -> Result<Vec<f64>> {
    if detected.labels != reference.labels {
        return Err(Error::Landmarks(
            "detected and reference labels differ".into(),
        ));
    }
    Ok(detected
        .points
        .iter()
        .zip(&reference.points)
        .map(|(a, b)| libm::hypot(a[0] - b[0], a[1] - b[1]))
        .collect())
}

/// Successful detection rate (%) per radius.
#[derive(Debug, Clone, PartialEq)]
pub struct SdrTable {
    pub radii: Vec<f64>,
    pub rates: Vec<f64>,
}

/// A landmark counts as detected when its error is `<= r`. Radii are
/// reported in ascending order.
pub fn sdr(detected: &LandmarkSet, reference: &LandmarkSet, radii: &[f64]) -> Result<SdrTable> {
    if radii.is_empty() || radii.iter().any(|r| !(*r >= 0.0)) {
        return Err(Error::Parameter(format!("SDR radii {radii:?}")));
    }
    let errors = radial_errors(detected, reference)?;
    let mut radii = radii.to_vec();
    radii.sort_by(f64::total_cmp);
    let rates = radii
        .iter()
        .map(|&r| 100.0 * errors.iter().filter(|&&e| e <= r).count() as f64 / errors.len() as f64)
        .collect();
    Ok(SdrTable { radii, rates })
}
