//! End-to-end compositions.
//!
//! *Type I*: enhance the volume, ray-cast it and apply a film curve.
//! *Type II*: simulate the 0° and 180° cone-beam projections, rebin them to
//! the virtual detector and pack them into dual-channel quadrant patches,
//! paired with quadrant patches of the orthogonal Type I cephalogram.

use alloc::borrow::Cow;
use alloc::format;
use alloc::vec::Vec;

use crate::cephgeom::{
    normalize_quadrant, pack_dual, rebin_to_vd, split_quadrants, DualRgbPatch, QuadrantPatch,
    VirtualDetectorSpec,
};
use crate::dataset::{quantize, QUANT_HI, QUANT_LO};
use crate::error::{Error, Result};
use crate::film::{
    modified_sigmoid_transform, sigmoid_transform, ModifiedSigmoidParams, SigmoidParams,
};
use crate::projector::{
    to_zero_degree_frame, AttenuationModel, ConeGeometry, DetectorGrid, Integrand, RayCaster,
    ViewAngle, DEFAULT_SAMPLES_PER_MM, WEHMER_D0, WEHMER_D1,
};
use crate::raster::{Cephalogram8, IntegralImage, Raster};
use crate::volume::{enhance_skeleton, EnhanceParams, Volume};

/// HU window used to display MIP images.
pub const MIP_WINDOW: [f64; 2] = [-1000.0, 3000.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProjectionMode {
    Orthogonal,
    /// Cone-beam projection with the given source-to-isocenter and
    /// source-to-detector distances (see [`ProjectionMode::wehmer`]).
    Perspective {
        d0: f64,
        d1: f64,
    },
    /// Mean of the `k` largest HU samples per orthogonal ray.
    Mip {
        k: usize,
    },
}

impl ProjectionMode {
    pub fn wehmer() -> Self {
        Self::Perspective {
            d0: WEHMER_D0,
            d1: WEHMER_D1,
        }
    }
}

/// Intensity mapping from integrals to gray levels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FilmCurve {
    Modified(ModifiedSigmoidParams),
    Original(SigmoidParams),
    /// Plain linear window `[lo, hi] → [0, 255]`.
    Linear {
        lo: f64,
        hi: f64,
    },
}

impl Default for FilmCurve {
    fn default() -> Self {
        Self::Modified(ModifiedSigmoidParams::default())
    }
}

impl FilmCurve {
    pub fn apply(&self, g: &IntegralImage) -> Result<Cephalogram8> {
        match self {
            FilmCurve::Modified(p) => modified_sigmoid_transform(g, p),
            FilmCurve::Original(p) => sigmoid_transform(g, p),
            FilmCurve::Linear { lo, hi } => Raster::new(quantize(&g.image, *lo, *hi)?, g.grid),
        }
    }
}

/// Type I synthesis settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Type1Config {
    /// `None` skips skeleton enhancement.
    pub enhance: Option<EnhanceParams>,
    pub projection: ProjectionMode,
    /// Ignored for MIP, which is always shown through [`MIP_WINDOW`].
    pub film: FilmCurve,
    pub output: VirtualDetectorSpec,
    pub attenuation: AttenuationModel,
    pub samples_per_mm: f64,
}

impl Default for Type1Config {
    fn default() -> Self {
        Self {
            enhance: Some(EnhanceParams::default()),
            projection: ProjectionMode::Orthogonal,
            film: FilmCurve::default(),
            output: VirtualDetectorSpec::default(),
            attenuation: AttenuationModel::default(),
            samples_per_mm: DEFAULT_SAMPLES_PER_MM,
        }
    }
}

impl Type1Config {
    pub fn caster(&self) -> RayCaster {
        RayCaster {
            samples_per_mm: self.samples_per_mm,
            integrand: Integrand::Attenuation(self.attenuation),
        }
    }

    fn detector(&self) -> Result<DetectorGrid> {
        if self.output.nu == 0 || self.output.nv == 0 {
            return Err(Error::Dimensions(format!(
                "output grid {}x{}",
                self.output.nu, self.output.nv
            )));
        }
        DetectorGrid::new(
            self.output.nu,
            self.output.nv,
            self.output.su,
            self.output.sv,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(p) = &self.enhance {
            p.validate()?;
        }
        match &self.film {
            FilmCurve::Modified(p) => p.validate()?,
            FilmCurve::Original(p) => p.validate()?,
            FilmCurve::Linear { lo, hi } => {
                if !(hi > lo) {
                    return Err(Error::Parameter(format!("linear window [{lo}, {hi}]")));
                }
            }
        }
        if let ProjectionMode::Perspective { d0, d1 } = self.projection {
            ConeGeometry::new(d0, d1, self.detector()?, ViewAngle::Deg0)?;
        }
        self.attenuation.validate()?;
        self.detector().map(|_| ())
    }
}

/// Integral (or MIP) image of a Type I synthesis, before the film curve.
pub fn type1_integral(v: &Volume, cfg: &Type1Config) -> Result<IntegralImage> {
    cfg.validate()?;
    let enhanced = match &cfg.enhance {
        Some(p) => Cow::Owned(enhance_skeleton(v, p)?),
        None => Cow::Borrowed(v),
    };
    let det = cfg.detector()?;
    let caster = cfg.caster();
    match cfg.projection {
        ProjectionMode::Orthogonal => caster.orthogonal(&enhanced, &det),
        ProjectionMode::Perspective { d0, d1 } => {
            caster.perspective(&enhanced, &ConeGeometry::new(d0, d1, det, ViewAngle::Deg0)?)
        }
        ProjectionMode::Mip { k } => caster.mip(&enhanced, k, &det),
    }
}

/// Gray-level rendering of a [`type1_integral`] output.
pub fn render_type1(g: &IntegralImage, cfg: &Type1Config) -> Result<Cephalogram8> {
    match cfg.projection {
        ProjectionMode::Mip { .. } => {
            Raster::new(quantize(&g.image, MIP_WINDOW[0], MIP_WINDOW[1])?, g.grid)
        }
        _ => cfg.film.apply(g),
    }
}

/// Enhance → project → film curve.
pub fn synthesize_type1(v: &Volume, cfg: &Type1Config) -> Result<Cephalogram8> {
    render_type1(&type1_integral(v, cfg)?, cfg)
}

/// Type II dataset settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Type2Config {
    /// CBCT geometry; the view angle is ignored (both views are simulated).
    pub geometry: ConeGeometry,
    pub vd: VirtualDetectorSpec,
    /// Integral range quantised onto `[0, 255]`.
    pub quant_range: [f64; 2],
    /// Target synthesis; its projection is forced to orthogonal and its
    /// output grid to `vd`.
    pub target: Type1Config,
}

impl Default for Type2Config {
    fn default() -> Self {
        Self {
            geometry: ConeGeometry::dental_cbct(ViewAngle::Deg0),
            vd: VirtualDetectorSpec::default(),
            quant_range: [QUANT_LO, QUANT_HI],
            target: Type1Config::default(),
        }
    }
}

impl Type2Config {
    pub fn target_config(&self) -> Type1Config {
        Type1Config {
            projection: ProjectionMode::Orthogonal,
            output: self.vd,
            ..self.target
        }
    }
}

/// Simulated 0° and 180° projections, both flipped into the 0° orientation.
pub fn simulate_dual_views(v: &Volume, cfg: &Type2Config) -> Result<[IntegralImage; 2]> {
    let caster = cfg.target.caster();
    let mut views = Vec::with_capacity(2);
    for angle in [ViewAngle::Deg0, ViewAngle::Deg180] {
        let g = cfg.geometry.with_angle(angle);
        views.push(to_zero_degree_frame(&caster.perspective(v, &g)?, angle));
    }
    let [a, b]: [IntegralImage; 2] = views
        .try_into()
        .map_err(|_| Error::Geometry("view count".into()))?;
    Ok([a, b])
}

/// Input/target quadrant pairs of one volume, ordered Q1..Q4.
#[derive(Debug, Clone, PartialEq)]
pub struct Type2Sample {
    pub inputs: Vec<DualRgbPatch>,
    pub targets: Vec<QuadrantPatch<u8>>,
}

/// Assemble Type II pairs from simulated views and the Type I target.
pub fn type2_from_views(
    views: &[IntegralImage; 2],
    target: &Cephalogram8,
    cfg: &Type2Config,
) -> Result<Type2Sample> {
    cfg.vd.validate()?;
    if target.dims() != (cfg.vd.nu, cfg.vd.nv) {
        return Err(Error::DimensionMismatch(format!(
            "target {:?} does not match the virtual detector {}x{}",
            target.dims(),
            cfg.vd.nu,
            cfg.vd.nv
        )));
    }
    let [lo, hi] = cfg.quant_range;
    let mut quads = Vec::with_capacity(2);
    for view in views {
        let vd = rebin_to_vd(view, &cfg.geometry, &cfg.vd)?;
        quads.push(split_quadrants(&quantize(&vd.image, lo, hi)?)?);
    }
    let target_quads = split_quadrants(&target.image)?;
    let mut inputs = Vec::with_capacity(4);
    let mut targets = Vec::with_capacity(4);
    for q in 0..4 {
        inputs.push(pack_dual(
            &normalize_quadrant(&quads[0][q])?,
            &normalize_quadrant(&quads[1][q])?,
        )?);
        targets.push(normalize_quadrant(&target_quads[q])?);
    }
    Ok(Type2Sample { inputs, targets })
}

pub fn type2_sample(v: &Volume, cfg: &Type2Config) -> Result<Type2Sample> {
    let views = simulate_dual_views(v, cfg)?;
    let target = synthesize_type1(v, &cfg.target_config())?;
    type2_from_views(&views, &target, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg() -> Type1Config {
        Type1Config {
            output: VirtualDetectorSpec {
                nu: 16,
                nv: 16,
                su: 2.0,
                sv: 2.0,
            },
            ..Default::default()
        }
    }

    #[test]
    fn air_volume_gives_black_cephalogram() {
        let dims = [16, 16, 16];
        let v = Volume::filled(
            dims,
            [2.0; 3],
            Volume::centered_origin(dims, [2.0; 3]),
            -1000.0,
        )
        .unwrap();
        let ceph = synthesize_type1(&v, &tiny_cfg()).unwrap();
        assert_eq!(ceph.dims(), (16, 16));
        assert!(ceph.image.data().iter().all(|&x| x == 0));
    }

    #[test]
    fn mip_mode_uses_window() {
        let dims = [8, 8, 8];
        let v = Volume::filled(
            dims,
            [4.0; 3],
            Volume::centered_origin(dims, [4.0; 3]),
            1000.0,
        )
        .unwrap();
        let cfg = Type1Config {
            projection: ProjectionMode::Mip { k: 5 },
            enhance: None,
            ..tiny_cfg()
        };
        let ceph = synthesize_type1(&v, &cfg).unwrap();
        // 1000 HU sits at the middle of [−1000, 3000]
        assert_eq!(ceph.image.get(8, 8), 128);
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = Type1Config {
            projection: ProjectionMode::Perspective {
                d0: 900.0,
                d1: 600.0,
            },
            ..tiny_cfg()
        };
        let v = Volume::filled([2, 2, 2], [1.0; 3], [0.0; 3], 0.0).unwrap();
        assert!(synthesize_type1(&v, &cfg).is_err());
    }
}
