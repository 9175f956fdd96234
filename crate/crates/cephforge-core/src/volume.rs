//! HU volumes, rigid resampling and skeleton/airway enhancement.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::par;
use crate::raster::lerp;

/// Lowest representable HU; anything below is clamped on construction.
pub const HU_FLOOR: f64 = -1024.0;
/// HU of air, used as fill value outside the volume.
pub const AIR_HU: f64 = -1000.0;

/// Tolerance for snapping resampling coordinates onto the voxel lattice.
const SNAP_EPS: f64 = 1e-9;

/// A 3D scalar grid in Hounsfield units.
///
/// Voxels are stored X fastest, then Y, then Z. `origin` is the world
/// position (mm) of the centre of voxel (0, 0, 0); the isocenter is the
/// world origin. The volume occupies the box extending half a voxel beyond
/// the outermost voxel centres.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    data: Vec<f64>,
    dims: [usize; 3],
    spacing: [f64; 3],
    origin: [f64; 3],
}

impl Volume {
    /// Validate the grid and clamp values below [`HU_FLOOR`].
    pub fn new(
        dims: [usize; 3],
        spacing: [f64; 3],
        origin: [f64; 3],
        mut data: Vec<f64>,
    ) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::Dimensions(format!("volume dims {dims:?}")));
        }
        if !spacing.iter().all(|&s| s > 0.0 && s.is_finite()) {
            return Err(Error::Spacing(format!(
                "voxel spacing {spacing:?} must be positive"
            )));
        }
        if !origin.iter().all(|o| o.is_finite()) {
            return Err(Error::Parameter(format!("volume origin {origin:?}")));
        }
        let n = dims[0] * dims[1] * dims[2];
        if data.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "volume {}x{}x{} needs {n} voxels, got {}",
                dims[0],
                dims[1],
                dims[2],
                data.len()
            )));
        }
        for x in data.iter_mut() {
            if !x.is_finite() {
                return Err(Error::Parameter(format!("non-finite voxel value {x}")));
            }
            if *x < HU_FLOOR {
                *x = HU_FLOOR;
            }
        }
        Ok(Self {
            data,
            dims,
            spacing,
            origin,
        })
    }

    pub fn filled(
        dims: [usize; 3],
        spacing: [f64; 3],
        origin: [f64; 3],
        value: f64,
    ) -> Result<Self> {
        Self::new(
            dims,
            spacing,
            origin,
            alloc::vec![value; dims[0] * dims[1] * dims[2]],
        )
    }

    /// Build a volume by evaluating `f` at every voxel centre (world mm).
    pub fn from_fn(
        dims: [usize; 3],
        spacing: [f64; 3],
        origin: [f64; 3],
        f: impl Fn([f64; 3]) -> f64 + Sync + Send,
    ) -> Result<Self> {
        let mut vol = Self::filled(dims, spacing, origin, 0.0)?;
        let nx = dims[0];
        let ny = dims[1];
        let (sp, org) = (spacing, origin);
        let mut data = core::mem::take(&mut vol.data);
        par::fill_rows(&mut data, nx, |row, out| {
            let (j, k) = (row % ny, row / ny);
            for (i, x) in out.iter_mut().enumerate() {
                *x = f([
                    org[0] + i as f64 * sp[0],
                    org[1] + j as f64 * sp[1],
                    org[2] + k as f64 * sp[2],
                ]);
            }
        });
        Self::new(dims, spacing, origin, data)
    }

    /// Origin that puts the volume centre on the isocenter.
    pub fn centered_origin(dims: [usize; 3], spacing: [f64; 3]) -> [f64; 3] {
        core::array::from_fn(|a| -((dims[a] as f64 - 1.0) / 2.0) * spacing[a])
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.dims[1] + j) * self.dims[0] + i
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.index(i, j, k)]
    }

    pub fn voxel_center(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        [
            self.origin[0] + i as f64 * self.spacing[0],
            self.origin[1] + j as f64 * self.spacing[1],
            self.origin[2] + k as f64 * self.spacing[2],
        ]
    }

    /// Continuous voxel coordinates of a world position.
    #[inline]
    pub fn to_voxel(&self, p: [f64; 3]) -> [f64; 3] {
        core::array::from_fn(|a| (p[a] - self.origin[a]) / self.spacing[a])
    }

    /// World-space bounding box `(min, max)` of the voxel footprint.
    pub fn bounds(&self) -> ([f64; 3], [f64; 3]) {
        let lo = core::array::from_fn(|a| self.origin[a] - 0.5 * self.spacing[a]);
        let hi = core::array::from_fn(|a| {
            self.origin[a] + (self.dims[a] as f64 - 0.5) * self.spacing[a]
        });
        (lo, hi)
    }

    /// Pointwise map; the result is re-clamped at [`HU_FLOOR`].
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(
            self.dims,
            self.spacing,
            self.origin,
            self.data.iter().map(|&x| f(x)).collect(),
        )
    }

    /// Pointwise combination of two volumes on the same grid.
    pub fn zip_map(&self, other: &Volume, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.dims != other.dims || self.spacing != other.spacing || self.origin != other.origin {
            return Err(Error::DimensionMismatch(
                "volumes live on different grids".into(),
            ));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Self::new(self.dims, self.spacing, self.origin, data)
    }

    /// Trilinear sample at continuous voxel coordinates. Defined on the
    /// lattice hull `[0, n-1]` per axis (coordinates within 1e-9 of a lattice
    /// point are snapped onto it).
    pub fn sample_trilinear(&self, c: [f64; 3]) -> Option<f64> {
        let mut idx = [(0usize, 0usize, 0.0f64); 3];
        for a in 0..3 {
            let x = snap(c[a]);
            let last = (self.dims[a] - 1) as f64;
            if !(x >= 0.0 && x <= last) {
                return None;
            }
            let i0 = libm::floor(x) as usize;
            idx[a] = if i0 >= self.dims[a] - 1 {
                (i0, i0, 0.0)
            } else {
                (i0, i0 + 1, x - i0 as f64)
            };
        }
        Some(self.blend(idx))
    }

    /// Trilinear sample that clamps to the edge inside the voxel footprint,
    /// i.e. up to half a voxel beyond the outermost centres. Used by the ray
    /// casters so that a slab of `n` voxels integrates to `n · spacing`.
    #[inline]
    pub(crate) fn sample_footprint(&self, c: [f64; 3]) -> Option<f64> {
        let mut idx = [(0usize, 0usize, 0.0f64); 3];
        for a in 0..3 {
            let n = self.dims[a];
            let last = (n - 1) as f64;
            let x = c[a];
            if !(x >= -0.5 && x <= last + 0.5) {
                return None;
            }
            let x = x.clamp(0.0, last);
            let i0 = x as usize;
            idx[a] = if i0 >= n - 1 {
                (n - 1, n - 1, 0.0)
            } else {
                (i0, i0 + 1, x - i0 as f64)
            };
        }
        Some(self.blend(idx))
    }

    pub fn sample_nearest(&self, c: [f64; 3]) -> Option<f64> {
        let mut ijk = [0usize; 3];
        for a in 0..3 {
            let x = libm::round(snap(c[a]));
            if !(x >= 0.0 && x <= (self.dims[a] - 1) as f64) {
                return None;
            }
            ijk[a] = x as usize;
        }
        Some(self.get(ijk[0], ijk[1], ijk[2]))
    }

    #[inline]
    fn blend(&self, [(i0, i1, fx), (j0, j1, fy), (k0, k1, fz)]: [(usize, usize, f64); 3]) -> f64 {
        let line = |j, k| lerp(self.get(i0, j, k), self.get(i1, j, k), fx);
        let plane = |k| lerp(line(j0, k), line(j1, k), fy);
        lerp(plane(k0), plane(k1), fz)
    }
}

#[inline]
fn snap(x: f64) -> f64 {
    let r = libm::round(x);
    if (x - r).abs() < SNAP_EPS {
        r
    } else {
        x
    }
}

/// A rigid transform `p ↦ R·p + t` about the isocenter (world origin).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
}

impl RigidTransform {
    pub const ORTHONORMAL_TOL: f64 = 1e-9;

    pub fn new(rotation: [[f64; 3]; 3], translation: [f64; 3]) -> Result<Self> {
        let mut dev: f64 = 0.0;
        for r in 0..3 {
            for c in 0..3 {
                let dot: f64 = (0..3).map(|k| rotation[r][k] * rotation[c][k]).sum();
                let want = if r == c { 1.0 } else { 0.0 };
                dev = dev.max((dot - want).abs());
            }
        }
        dev = dev.max((det3(&rotation) - 1.0).abs());
        if !(dev <= Self::ORTHONORMAL_TOL) || !translation.iter().all(|t| t.is_finite()) {
            return Err(Error::NonOrthonormal(dev));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
        }
    }

    pub fn translation(t: [f64; 3]) -> Self {
        Self {
            translation: t,
            ..Self::identity()
        }
    }

    /// Rotation by `deg` degrees about the Z axis. Multiples of 90° produce
    /// exact matrix entries.
    pub fn rotation_z(deg: f64) -> Self {
        let (s, c) = exact_sin_cos(deg);
        Self {
            rotation: [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
        }
    }

    pub fn rotation_matrix(&self) -> [[f64; 3]; 3] {
        self.rotation
    }

    pub fn translation_vector(&self) -> [f64; 3] {
        self.translation
    }

    /// `self` applied after `first`.
    pub fn compose(&self, first: &RigidTransform) -> Self {
        let r = &self.rotation;
        let rotation = core::array::from_fn(|i| {
            core::array::from_fn(|j| (0..3).map(|k| r[i][k] * first.rotation[k][j]).sum())
        });
        let moved = self.apply_rotation(first.translation);
        Self {
            rotation,
            translation: core::array::from_fn(|a| moved[a] + self.translation[a]),
        }
    }

    fn apply_rotation(&self, p: [f64; 3]) -> [f64; 3] {
        core::array::from_fn(|i| (0..3).map(|k| self.rotation[i][k] * p[k]).sum())
    }

    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let q = self.apply_rotation(p);
        core::array::from_fn(|a| q[a] + self.translation[a])
    }

    pub fn apply_inverse(&self, q: [f64; 3]) -> [f64; 3] {
        let d: [f64; 3] = core::array::from_fn(|a| q[a] - self.translation[a]);
        core::array::from_fn(|i| (0..3).map(|k| self.rotation[k][i] * d[k]).sum())
    }
}

fn exact_sin_cos(deg: f64) -> (f64, f64) {
    let quarter = deg / 90.0;
    if quarter == libm::round(quarter) {
        match (quarter as i64).rem_euclid(4) {
            0 => (0.0, 1.0),
            1 => (1.0, 0.0),
            2 => (0.0, -1.0),
            _ => (-1.0, 0.0),
        }
    } else {
        let rad = deg.to_radians();
        (libm::sin(rad), libm::cos(rad))
    }
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Interpolation {
    #[default]
    Trilinear,
    Nearest,
}

/// Resample `v` under the rigid transform `t` onto its own grid.
///
/// Output voxel at world `p` takes the input value at `t⁻¹(p)`; samples that
/// fall outside the input lattice are filled with [`AIR_HU`].
pub fn resample_rigid(v: &Volume, t: &RigidTransform, interp: Interpolation) -> Result<Volume> {
    // Re-validate in case the transform was built field by field.
    RigidTransform::new(t.rotation, t.translation)?;
    let [nx, ny, _] = v.dims;
    let mut data = alloc::vec![0.0; v.data.len()];
    par::fill_rows(&mut data, nx, |row, out| {
        let (j, k) = (row % ny, row / ny);
        for (i, x) in out.iter_mut().enumerate() {
            let q = t.apply_inverse(v.voxel_center(i, j, k));
            let c = v.to_voxel(q);
            let s = match interp {
                Interpolation::Trilinear => v.sample_trilinear(c),
                Interpolation::Nearest => v.sample_nearest(c),
            };
            *x = s.unwrap_or(AIR_HU);
        }
    });
    Volume::new(v.dims, v.spacing, v.origin, data)
}

/// Thresholds and bone weight of the skeleton/airway enhancement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnhanceParams {
    /// HU above which voxels count as bone (default 1000).
    pub bone_threshold: f64,
    /// HU below which voxels count as air (default −500).
    pub air_threshold: f64,
    /// Multiplier applied to bone voxels (default 1.3).
    pub bone_weight: f64,
}

impl Default for EnhanceParams {
    fn default() -> Self {
        Self {
            bone_threshold: 1000.0,
            air_threshold: -500.0,
            bone_weight: 1.3,
        }
    }
}

impl EnhanceParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.air_threshold < self.bone_threshold) || !(self.bone_weight > 0.0) {
            return Err(Error::Parameter(format!(
                "enhancement needs air_threshold < bone_threshold and bone_weight > 0 (got {}, {}, {})",
                self.air_threshold, self.bone_threshold, self.bone_weight
            )));
        }
        Ok(())
    }

    /// Enhance a single HU value.
    #[inline]
    pub fn apply(&self, hu: f64) -> f64 {
        if hu > self.bone_threshold {
            hu * self.bone_weight
        } else if hu < self.air_threshold {
            AIR_HU
        } else {
            hu
        }
    }
}

/// Scale bone above the bone threshold and flatten everything below the air
/// threshold to −1000 HU; soft tissue in between is kept.
///
/// Not idempotent: a once-enhanced bone voxel is still above the threshold
/// and would be scaled again, so pipelines apply this exactly once.
pub fn enhance_skeleton(v: &Volume, p: &EnhanceParams) -> Result<Volume> {
    p.validate()?;
    v.map(|hu| p.apply(hu))
}
