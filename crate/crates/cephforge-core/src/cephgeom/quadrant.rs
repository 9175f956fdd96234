use alloc::format;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::raster::Image2;

/// Detector quadrant, in mm coordinates centred on the isocenter
/// projection: Q1 `(y ≥ 0, z ≥ 0)`, Q2 `(y < 0, z ≥ 0)`, Q3 `(y < 0, z < 0)`,
/// Q4 `(y ≥ 0, z < 0)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Quadrant {
    Q1,
    Q2,
    Q3,
    Q4,
}

impl Quadrant {
    pub const ALL: [Quadrant; 4] = [Quadrant::Q1, Quadrant::Q2, Quadrant::Q3, Quadrant::Q4];

    /// `(flip columns, flip rows)` that map this quadrant onto Q1's
    /// orientation.
    fn flips(self) -> (bool, bool) {
        match self {
            Quadrant::Q1 => (false, false),
            Quadrant::Q2 => (true, false),
            Quadrant::Q3 => (true, true),
            Quadrant::Q4 => (false, true),
        }
    }

    /// Whether the quadrant covers the upper half of columns / rows.
    fn upper_halves(self) -> (bool, bool) {
        match self {
            Quadrant::Q1 => (true, true),
            Quadrant::Q2 => (false, true),
            Quadrant::Q3 => (false, false),
            Quadrant::Q4 => (true, false),
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Quadrant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Q{}", self.index() + 1)
    }
}

impl FromStr for Quadrant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "Q1" | "1" => Ok(Quadrant::Q1),
            "Q2" | "2" => Ok(Quadrant::Q2),
            "Q3" | "3" => Ok(Quadrant::Q3),
            "Q4" | "4" => Ok(Quadrant::Q4),
            _ => Err(Error::Quadrant(format!("unknown quadrant {s:?}"))),
        }
    }
}

/// One quarter of a virtual-detector image.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadrantPatch<T> {
    pub data: Image2<T>,
    pub quadrant: Quadrant,
    /// Set once the patch has been flipped into Q1's orientation.
    pub normalized: bool,
}

fn apply_flips<T: Copy>(img: &Image2<T>, (h, v): (bool, bool)) -> Image2<T> {
    match (h, v) {
        (false, false) => img.clone(),
        (true, false) => img.flip_horizontal(),
        (false, true) => img.flip_vertical(),
        (true, true) => img.flip_horizontal().flip_vertical(),
    }
}

/// Cut an even-sized image into its four quadrants, returned Q1..Q4.
pub fn split_quadrants<T: Copy>(img: &Image2<T>) -> Result<[QuadrantPatch<T>; 4]> {
    let (w, h) = img.dims();
    if w % 2 != 0 || h % 2 != 0 {
        return Err(Error::Dimensions(format!(
            "quadrant split needs even dims, got {w}x{h}"
        )));
    }
    let (hw, hh) = (w / 2, h / 2);
    let cut = |q: Quadrant| -> Result<QuadrantPatch<T>> {
        let (right, top) = q.upper_halves();
        Ok(QuadrantPatch {
            data: img.crop(if right { hw } else { 0 }, if top { hh } else { 0 }, hw, hh)?,
            quadrant: q,
            normalized: false,
        })
    };
    Ok([
        cut(Quadrant::Q1)?,
        cut(Quadrant::Q2)?,
        cut(Quadrant::Q3)?,
        cut(Quadrant::Q4)?,
    ])
}

/// Flip a patch into Q1's deformation orientation: Q2 horizontally, Q3
/// horizontally and vertically, Q4 vertically.
pub fn normalize_quadrant<T: Copy>(p: &QuadrantPatch<T>) -> Result<QuadrantPatch<T>> {
    if p.normalized {
        return Err(Error::Quadrant(format!(
            "{} patch is already normalized",
            p.quadrant
        )));
    }
    Ok(QuadrantPatch {
        data: apply_flips(&p.data, p.quadrant.flips()),
        quadrant: p.quadrant,
        normalized: true,
    })
}

/// Undo [`normalize_quadrant`] (the flips are involutions).
pub fn denormalize_quadrant<T: Copy>(p: &QuadrantPatch<T>) -> Result<QuadrantPatch<T>> {
    if !p.normalized {
        return Err(Error::Quadrant(format!(
            "{} patch is not normalized",
            p.quadrant
        )));
    }
    Ok(QuadrantPatch {
        data: apply_flips(&p.data, p.quadrant.flips()),
        quadrant: p.quadrant,
        normalized: false,
    })
}

/// Reassemble four patches (one per quadrant, any order). With
/// `denormalize`, normalized patches are flipped back first; otherwise
/// patch data is placed as stored.
pub fn stitch_quadrants<T: Copy>(
    patches: &[QuadrantPatch<T>],
    denormalize: bool,
) -> Result<Image2<T>> {
    if patches.len() != 4 {
        return Err(Error::Quadrant(format!(
            "need 4 patches, got {}",
            patches.len()
        )));
    }
    let mut slots: [Option<&QuadrantPatch<T>>; 4] = [None; 4];
    for p in patches {
        let slot = &mut slots[p.quadrant.index()];
        if slot.is_some() {
            return Err(Error::Quadrant(format!("duplicate {} patch", p.quadrant)));
        }
        *slot = Some(p);
    }
    let dims = patches[0].data.dims();
    if patches.iter().any(|p| p.data.dims() != dims) {
        return Err(Error::DimensionMismatch(
            "quadrant patches differ in size".into(),
        ));
    }
    let (hw, hh) = dims;
    let first = patches[0].data.get(0, 0);
    let mut out = Image2::filled(2 * hw, 2 * hh, first)?;
    for p in slots.into_iter().flatten() {
        let data = if denormalize && p.normalized {
            apply_flips(&p.data, p.quadrant.flips())
        } else {
            p.data.clone()
        };
        let (right, top) = p.quadrant.upper_halves();
        out.paste(&data, if right { hw } else { 0 }, if top { hh } else { 0 })?;
    }
    Ok(out)
}

/// Dual-projection RGB patch: red and blue carry the 0° patch, green the
/// 180° patch. Equal channels read as gray, a brighter 180° patch as green
/// and a brighter 0° patch as magenta.
#[derive(Debug, Clone, PartialEq)]
pub struct DualRgbPatch {
    pub r: Image2<u8>,
    pub g: Image2<u8>,
    pub b: Image2<u8>,
    pub quadrant: Quadrant,
}

impl DualRgbPatch {
    /// Interleaved `RGBRGB…` bytes in storage row order.
    pub fn interleaved(&self) -> Vec<u8> {
        self.r
            .data()
            .iter()
            .zip(self.g.data())
            .zip(self.b.data())
            .flat_map(|((&r, &g), &b)| [r, g, b])
            .collect()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.r.dims()
    }
}

pub fn pack_dual(p0: &QuadrantPatch<u8>, p180: &QuadrantPatch<u8>) -> Result<DualRgbPatch> {
    if !(p0.normalized && p180.normalized) {
        return Err(Error::Quadrant(
            "dual packing needs normalized patches".into(),
        ));
    }
    if p0.quadrant != p180.quadrant {
        return Err(Error::Quadrant(format!(
            "0° patch is {} but 180° patch is {}",
            p0.quadrant, p180.quadrant
        )));
    }
    if !p0.data.same_dims(&p180.data) {
        return Err(Error::DimensionMismatch(format!(
            "0° patch {:?} vs 180° patch {:?}",
            p0.data.dims(),
            p180.data.dims()
        )));
    }
    Ok(DualRgbPatch {
        r: p0.data.clone(),
        g: p180.data.clone(),
        b: p0.data.clone(),
        quadrant: p0.quadrant,
    })
}
