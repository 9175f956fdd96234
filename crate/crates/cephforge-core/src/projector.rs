//! Ray-driven forward projection of HU volumes.
//!
//! Rays are sampled at a fixed rate (3 samples/mm by default) at the
//! midpoints of equal sub-intervals of the segment inside the volume
//! footprint, and each sample is weighted by the step length.
//!
//! Cone-beam frame: the isocenter is the world origin. At 0° the source sits
//! at `(+d0, 0, 0)` and the detector plane at `x = −(d1 − d0)`, with detector
//! columns along `+Y`. At 180° everything is rotated about Z: the source is
//! at `(−d0, 0, 0)` and detector columns run along `−Y` (the *native* 180°
//! frame); [`to_zero_degree_frame`] flips such an image back to the 0°
//! orientation.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::raster::{Image2, IntegralImage, PlaneGrid, Raster};
use crate::volume::{Volume, AIR_HU};

pub const DEFAULT_SAMPLES_PER_MM: f64 = 3.0;

/// Linear HU → linear attenuation conversion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttenuationModel {
    /// Attenuation of water in 1/mm.
    pub mu_water: f64,
}

impl Default for AttenuationModel {
    fn default() -> Self {
        Self { mu_water: 0.0203 }
    }
}

impl AttenuationModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu_water > 0.0 && self.mu_water.is_finite()) {
            return Err(Error::Parameter(format!(
                "mu_water must be positive, got {}",
                self.mu_water
            )));
        }
        Ok(())
    }
}

/// `μ = μ_water · (1 + HU/1000)`, never negative.
#[inline]
pub fn hu_to_mu(hu: f64, m: &AttenuationModel) -> f64 {
    (m.mu_water * (1.0 + hu / 1000.0)).max(0.0)
}

/// Pixel layout of a detector centred on the central ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorGrid {
    pub nu: usize,
    pub nv: usize,
    pub su: f64,
    pub sv: f64,
}

impl DetectorGrid {
    pub fn new(nu: usize, nv: usize, su: f64, sv: f64) -> Result<Self> {
        let d = Self { nu, nv, su, sv };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nu == 0 || self.nv == 0 || !(self.su > 0.0 && self.sv > 0.0) {
            return Err(Error::Geometry(format!(
                "degenerate detector grid {}x{} @ {}x{} mm",
                self.nu, self.nv, self.su, self.sv
            )));
        }
        Ok(())
    }

    pub fn plane_grid(&self) -> PlaneGrid {
        PlaneGrid::centered(self.nu, self.nv, [self.su, self.sv])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ViewAngle {
    #[default]
    Deg0,
    Deg180,
}

impl ViewAngle {
    pub fn from_degrees(deg: f64) -> Result<Self> {
        if deg == 0.0 {
            Ok(Self::Deg0)
        } else if deg == 180.0 {
            Ok(Self::Deg180)
        } else {
            Err(Error::Geometry(format!(
                "only 0° and 180° views are supported, got {deg}°"
            )))
        }
    }

    pub fn degrees(self) -> f64 {
        match self {
            Self::Deg0 => 0.0,
            Self::Deg180 => 180.0,
        }
    }

    /// +1 at 0°, −1 at 180°: the world X of the source divided by d0, and
    /// the world Y direction of detector columns.
    fn sign(self) -> f64 {
        match self {
            Self::Deg0 => 1.0,
            Self::Deg180 => -1.0,
        }
    }
}

/// Cone-beam acquisition geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConeGeometry {
    /// Source-to-isocenter distance (mm).
    pub d0: f64,
    /// Source-to-detector distance (mm).
    pub d1: f64,
    pub detector: DetectorGrid,
    pub angle: ViewAngle,
}

/// Wehmer cephalostat: 152.4 cm source-to-isocenter, 11.5 cm
/// isocenter-to-detector.
pub const WEHMER_D0: f64 = 1524.0;
pub const WEHMER_D1: f64 = 1524.0 + 115.0;
/// Dental CBCT system.
pub const CBCT_D0: f64 = 650.0;
pub const CBCT_D1: f64 = 950.0;

impl ConeGeometry {
    pub fn new(d0: f64, d1: f64, detector: DetectorGrid, angle: ViewAngle) -> Result<Self> {
        let g = Self {
            d0,
            d1,
            detector,
            angle,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn wehmer(detector: DetectorGrid) -> Self {
        Self {
            d0: WEHMER_D0,
            d1: WEHMER_D1,
            detector,
            angle: ViewAngle::Deg0,
        }
    }

    /// Dental CBCT preset: d0 = 650 mm, d1 = 950 mm, 512² detector at 0.73 mm.
    pub fn dental_cbct(angle: ViewAngle) -> Self {
        Self {
            d0: CBCT_D0,
            d1: CBCT_D1,
            detector: DetectorGrid {
                nu: 512,
                nv: 512,
                su: 0.73,
                sv: 0.73,
            },
            angle,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d0 > 0.0 && self.d0 < self.d1 && self.d1.is_finite()) {
            return Err(Error::Geometry(format!(
                "need 0 < d0 < d1 (source-to-isocenter < source-to-detector), got d0={} d1={}",
                self.d0, self.d1
            )));
        }
        self.detector.validate()
    }

    pub fn with_angle(self, angle: ViewAngle) -> Self {
        Self { angle, ..self }
    }

    pub fn source(&self) -> [f64; 3] {
        [self.angle.sign() * self.d0, 0.0, 0.0]
    }

    /// World position of the centre of detector pixel `(u, v)` in the native
    /// frame of this view.
    pub fn detector_pixel(&self, u: usize, v: usize) -> [f64; 3] {
        let s = self.angle.sign();
        let [du, dv] = self.detector.plane_grid().pixel_center(u, v);
        [-s * (self.d1 - self.d0), s * du, dv]
    }
}

/// What a ray accumulates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Integrand {
    /// Line integral of `μ(HU)`.
    Attenuation(AttenuationModel),
    /// Line integral of the raw voxel values (used for linearity checks).
    Raw,
}

impl Integrand {
    #[inline]
    fn eval(&self, hu: f64) -> f64 {
        match self {
            Self::Attenuation(m) => hu_to_mu(hu, m),
            Self::Raw => hu,
        }
    }
}

/// Fixed-step ray caster.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayCaster {
    pub samples_per_mm: f64,
    pub integrand: Integrand,
}

impl Default for RayCaster {
    fn default() -> Self {
        Self {
            samples_per_mm: DEFAULT_SAMPLES_PER_MM,
            integrand: Integrand::Attenuation(AttenuationModel::default()),
        }
    }
}

impl RayCaster {
    pub fn with_attenuation(m: AttenuationModel) -> Self {
        Self {
            integrand: Integrand::Attenuation(m),
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.samples_per_mm > 0.0 && self.samples_per_mm.is_finite()) {
            return Err(Error::Parameter(format!(
                "sampling rate {} per mm",
                self.samples_per_mm
            )));
        }
        if let Integrand::Attenuation(m) = &self.integrand {
            m.validate()?;
        }
        Ok(())
    }

    /// Parallel projection along X onto a detector parallel to the Y–Z plane.
    pub fn orthogonal(&self, v: &Volume, detector: &DetectorGrid) -> Result<IntegralImage> {
        self.validate()?;
        detector.validate()?;
        let grid = detector.plane_grid();
        let (lo, hi) = v.bounds();
        let image = Image2::from_fn(detector.nu, detector.nv, |u, w| {
            let [y, z] = grid.pixel_center(u, w);
            self.integrate(v, [lo[0], y, z], [hi[0], y, z])
        })?;
        Raster::new(image, grid)
    }

    /// Cone-beam projection in the native detector frame of `g.angle`.
    pub fn perspective(&self, v: &Volume, g: &ConeGeometry) -> Result<IntegralImage> {
        self.validate()?;
        g.validate()?;
        let src = g.source();
        let image = Image2::from_fn(g.detector.nu, g.detector.nv, |u, w| {
            self.integrate(v, src, g.detector_pixel(u, w))
        })?;
        Raster::new(image, g.detector.plane_grid())
    }

    /// Mean of the `k` largest HU samples along each X-parallel ray. Rays
    /// that miss the volume read as air.
    pub fn mip(&self, v: &Volume, k: usize, detector: &DetectorGrid) -> Result<IntegralImage> {
        self.validate()?;
        detector.validate()?;
        if k == 0 {
            return Err(Error::Parameter("MIP needs k >= 1".into()));
        }
        let grid = detector.plane_grid();
        let (lo, hi) = v.bounds();
        let image = Image2::from_fn(detector.nu, detector.nv, |u, w| {
            let [y, z] = grid.pixel_center(u, w);
            let mut samples = Vec::new();
            self.walk(v, [lo[0], y, z], [hi[0], y, z], |hu, _| samples.push(hu));
            top_k_mean(&mut samples, k).unwrap_or(AIR_HU)
        })?;
        Raster::new(image, grid)
    }

    /// Integral of the integrand along the segment `a → b`.
    pub fn integrate(&self, v: &Volume, a: [f64; 3], b: [f64; 3]) -> f64 {
        let mut acc = 0.0;
        self.walk(v, a, b, |hu, step| acc += self.integrand.eval(hu) * step);
        acc
    }

    /// Visit the samples of segment `a → b` that fall inside the volume,
    /// passing the interpolated HU and the step length.
    fn walk(&self, v: &Volume, a: [f64; 3], b: [f64; 3], mut visit: impl FnMut(f64, f64)) {
        let Some((t0, t1)) = clip_to_box(a, b, v.bounds()) else {
            return;
        };
        let dir: [f64; 3] = core::array::from_fn(|i| b[i] - a[i]);
        let seg_len = libm::sqrt(dir.iter().map(|d| d * d).sum::<f64>()) * (t1 - t0);
        if !(seg_len > 0.0) {
            return;
        }
        let n = libm::ceil(seg_len * self.samples_per_mm).max(1.0) as usize;
        let step = seg_len / n as f64;
        let start = v.to_voxel(core::array::from_fn(|i| a[i] + t0 * dir[i]));
        let end = v.to_voxel(core::array::from_fn(|i| a[i] + t1 * dir[i]));
        let delta: [f64; 3] = core::array::from_fn(|i| (end[i] - start[i]) / n as f64);
        for s in 0..n {
            let f = s as f64 + 0.5;
            let c = core::array::from_fn(|i| start[i] + f * delta[i]);
            if let Some(hu) = v.sample_footprint(c) {
                visit(hu, step);
            }
        }
    }
}

/// Parametric range `[t0, t1] ⊆ [0, 1]` of segment `a → b` inside `bounds`.
fn clip_to_box(a: [f64; 3], b: [f64; 3], (lo, hi): ([f64; 3], [f64; 3])) -> Option<(f64, f64)> {
    let mut t0: f64 = 0.0;
    let mut t1: f64 = 1.0;
    for i in 0..3 {
        let d = b[i] - a[i];
        if d == 0.0 {
            if a[i] < lo[i] || a[i] > hi[i] {
                return None;
            }
            continue;
        }
        let (mut ta, mut tb) = ((lo[i] - a[i]) / d, (hi[i] - a[i]) / d);
        if ta > tb {
            core::mem::swap(&mut ta, &mut tb);
        }
        t0 = t0.max(ta);
        t1 = t1.min(tb);
    }
    (t1 > t0).then_some((t0, t1))
}

/// Mean of the `k` largest values (of all values when fewer than `k`).
pub fn top_k_mean(values: &mut [f64], k: usize) -> Option<f64> {
    if values.is_empty() || k == 0 {
        return None;
    }
    let top = if k >= values.len() {
        &values[..]
    } else {
        values.select_nth_unstable_by(k - 1, |a, b| b.total_cmp(a));
        &values[..k]
    };
    Some(top.iter().sum::<f64>() / top.len() as f64)
}

pub fn project_orthogonal(
    v: &Volume,
    detector: &DetectorGrid,
    m: &AttenuationModel,
) -> Result<IntegralImage> {
    RayCaster::with_attenuation(*m).orthogonal(v, detector)
}

pub fn project_perspective(
    v: &Volume,
    g: &ConeGeometry,
    m: &AttenuationModel,
) -> Result<IntegralImage> {
    RayCaster::with_attenuation(*m).perspective(v, g)
}

pub fn project_mip(v: &Volume, k: usize, detector: &DetectorGrid) -> Result<IntegralImage> {
    RayCaster::default().mip(v, k, detector)
}

/// Bring a projection taken at `angle` into the 0° orientation (horizontal
/// flip for 180°).
pub fn to_zero_degree_frame(img: &IntegralImage, angle: ViewAngle) -> IntegralImage {
    match angle {
        ViewAngle::Deg0 => img.clone(),
        ViewAngle::Deg180 => Raster {
            image: img.image.flip_horizontal(),
            grid: img.grid,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn hu_to_mu_anchor_values() {
        let m = AttenuationModel::default();
        assert!((hu_to_mu(0.0, &m) - 0.0203).abs() < 1e-15);
        assert_eq!(hu_to_mu(-1000.0, &m), 0.0);
        assert_eq!(hu_to_mu(-1024.0, &m), 0.0);
        assert!((hu_to_mu(1000.0, &m) - 0.0406).abs() < 1e-15);
    }

    #[test]
    fn geometry_validation() {
        let det = DetectorGrid::new(4, 4, 1.0, 1.0).unwrap();
        assert!(ConeGeometry::new(950.0, 650.0, det, ViewAngle::Deg0).is_err());
        assert!(ConeGeometry::new(650.0, 650.0, det, ViewAngle::Deg0).is_err());
        assert!(ConeGeometry::new(650.0, 950.0, det, ViewAngle::Deg0).is_ok());
        assert!(ViewAngle::from_degrees(90.0).is_err());
        assert!(DetectorGrid::new(0, 4, 1.0, 1.0).is_err());
        assert!(DetectorGrid::new(4, 4, 0.0, 1.0).is_err());
    }

    #[test]
    fn source_and_detector_sit_on_opposite_sides() {
        let g = ConeGeometry::dental_cbct(ViewAngle::Deg0);
        assert_eq!(g.source(), [650.0, 0.0, 0.0]);
        assert_eq!(g.detector_pixel(0, 0)[0], -300.0);
        let g = g.with_angle(ViewAngle::Deg180);
        assert_eq!(g.source(), [-650.0, 0.0, 0.0]);
        assert_eq!(g.detector_pixel(0, 0)[0], 300.0);
        // native 180° columns run along −Y
        assert!(g.detector_pixel(0, 0)[1] > 0.0);
    }

    #[test]
    fn top_k_mean_cases() {
        let mut v = vec![1.0, 5.0, 3.0, 4.0];
        assert_eq!(top_k_mean(&mut v, 1), Some(5.0));
        assert_eq!(top_k_mean(&mut v, 2), Some(4.5));
        assert_eq!(top_k_mean(&mut v, 10), Some(3.25));
        assert_eq!(top_k_mean(&mut [], 3), None);
    }

    #[test]
    fn clip_misses_and_hits() {
        let bounds = ([-1.0; 3], [1.0; 3]);
        assert_eq!(
            clip_to_box([-2.0, 0.0, 0.0], [2.0, 0.0, 0.0], bounds),
            Some((0.25, 0.75))
        );
        assert_eq!(clip_to_box([-2.0, 3.0, 0.0], [2.0, 3.0, 0.0], bounds), None);
    }
}
