//! Cone-beam geometry for dual-projection cephalogram synthesis.
//!
//! Projections are rebinned to a *virtual detector* (VD) in the midsagittal
//! plane `x = 0`, which removes the `d1/d0` magnification of midsagittal
//! structures. Anything at depth `x` towards the source keeps a residual
//! magnification `d0 / (d0 − x)`; [`patch_envelope`] describes where a
//! square volume patch lands on the VD over a range of depths, and the
//! quadrant helpers flip patches so every quadrant shares the first
//! quadrant's deformation pattern.

mod envelope;
mod quadrant;

pub use envelope::{patch_envelope, PatchEnvelope};
pub use quadrant::{
    denormalize_quadrant, normalize_quadrant, pack_dual, split_quadrants, stitch_quadrants,
    DualRgbPatch, Quadrant, QuadrantPatch,
};

use alloc::format;

use crate::error::{Error, Result};
use crate::projector::{ConeGeometry, ViewAngle};
use crate::raster::{Image2, IntegralImage, PlaneGrid, Raster};

/// Residual magnification on the VD of a structure at depth `x` (mm,
/// measured from the VD towards the source).
pub fn magnification(x: f64, d0: f64) -> Result<f64> {
    if !(d0 > 0.0) {
        return Err(Error::Geometry(format!(
            "source-to-isocenter distance {d0} must be positive"
        )));
    }
    if !(x < d0) {
        return Err(Error::Geometry(format!(
            "depth {x} mm is at or behind the source (d0 = {d0} mm)"
        )));
    }
    Ok(d0 / (d0 - x))
}

/// Pixel layout of the virtual detector, centred on the isocenter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VirtualDetectorSpec {
    pub nu: usize,
    pub nv: usize,
    pub su: f64,
    pub sv: f64,
}

impl Default for VirtualDetectorSpec {
    fn default() -> Self {
        Self {
            nu: 512,
            nv: 512,
            su: 0.5,
            sv: 0.5,
        }
    }
}

impl VirtualDetectorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.nu == 0 || self.nv == 0 || self.nu % 2 != 0 || self.nv % 2 != 0 {
            return Err(Error::Dimensions(format!(
                "virtual detector {}x{} must have even, non-zero dims",
                self.nu, self.nv
            )));
        }
        if !(self.su > 0.0 && self.sv > 0.0) {
            return Err(Error::Spacing(format!(
                "virtual detector pitch {}x{}",
                self.su, self.sv
            )));
        }
        Ok(())
    }

    pub fn plane_grid(&self) -> PlaneGrid {
        PlaneGrid::centered(self.nu, self.nv, [self.su, self.sv])
    }
}

/// Resample a cone-beam projection (already in the 0° orientation) onto the
/// virtual detector. VD position `(y, z)` reads the detector at
/// `(y, z) · d1/d0` with bilinear interpolation; samples off the detector
/// are 0.
pub fn rebin_to_vd(
    proj: &IntegralImage,
    g: &ConeGeometry,
    vd: &VirtualDetectorSpec,
) -> Result<IntegralImage> {
    g.validate()?;
    vd.validate()?;
    if proj.dims() != (g.detector.nu, g.detector.nv) {
        return Err(Error::DimensionMismatch(format!(
            "projection is {:?} but the geometry's detector is {}x{}",
            proj.dims(),
            g.detector.nu,
            g.detector.nv
        )));
    }
    let scale = g.d1 / g.d0;
    let vd_grid = vd.plane_grid();
    let image = Image2::from_fn(vd.nu, vd.nv, |u, v| {
        let [y, z] = vd_grid.pixel_center(u, v);
        let [pu, pv] = proj.grid.to_pixel([y * scale, z * scale]);
        proj.image.sample_bilinear(pu, pv).unwrap_or(0.0)
    })?;
    Raster::new(image, vd_grid)
}

/// Project a world point onto the VD plane from the source of `g.angle`.
/// The result is expressed in the 0° frame for both views.
pub fn cone_project_point(pt: [f64; 3], g: &ConeGeometry) -> Result<[f64; 2]> {
    g.validate()?;
    // depth towards this view's source
    let depth = match g.angle {
        ViewAngle::Deg0 => pt[0],
        ViewAngle::Deg180 => -pt[0],
    };
    let m = magnification(depth, g.d0)?;
    Ok([m * pt[1], m * pt[2]])
}
