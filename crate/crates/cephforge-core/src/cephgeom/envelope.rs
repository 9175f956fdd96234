use alloc::format;
use alloc::vec::Vec;

use super::magnification;
use crate::error::{Error, Result};

/// Convex footprint (mm, on the VD) of a square volume patch swept through
/// a depth range. Vertices run counter-clockwise from the lowest-left one.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchEnvelope {
    pub vertices: Vec<[f64; 2]>,
}

impl PatchEnvelope {
    pub fn area(&self) -> f64 {
        let n = self.vertices.len();
        0.5 * (0..n)
            .map(|i| {
                let (a, b) = (self.vertices[i], self.vertices[(i + 1) % n]);
                a[0] * b[1] - a[1] * b[0]
            })
            .sum::<f64>()
    }

    /// Point-in-polygon (boundary inclusive) with tolerance `eps` mm.
    pub fn contains(&self, p: [f64; 2], eps: f64) -> bool {
        let n = self.vertices.len();
        (0..n).all(|i| {
            let (a, b) = (self.vertices[i], self.vertices[(i + 1) % n]);
            let len = libm::hypot(b[0] - a[0], b[1] - a[1]);
            cross(a, b, p) >= -eps * len
        })
    }
}

/// Footprint of the patch with lower-left corner `(y0, z0)` and edge `edge`
/// when its depth varies over `[x_min, x_max]`.
///
/// Each depth scales the square about the VD origin by its magnification,
/// so the union over the range is the convex hull of the two extreme
/// squares: a square when the corner is at the origin, a hexagon when both
/// corner coordinates are positive and the range is non-degenerate (a
/// pentagon when exactly one is zero).
pub fn patch_envelope(
    y0: f64,
    z0: f64,
    edge: f64,
    x_min: f64,
    x_max: f64,
    d0: f64,
) -> Result<PatchEnvelope> {
    if !(y0 >= 0.0 && z0 >= 0.0 && edge > 0.0) {
        return Err(Error::Geometry(format!(
            "patch corner ({y0}, {z0}) must be non-negative and edge {edge} positive"
        )));
    }
    if !(x_min <= x_max) {
        return Err(Error::Geometry(format!(
            "invalid depth range [{x_min}, {x_max}]"
        )));
    }
    let lo = magnification(x_min, d0)?;
    let hi = magnification(x_max, d0)?;
    let mut pts = Vec::with_capacity(8);
    for m in [lo, hi] {
        let (y, z, l) = (m * y0, m * z0, m * edge);
        pts.extend_from_slice(&[[y, z], [y + l, z], [y + l, z + l], [y, z + l]]);
    }
    Ok(PatchEnvelope {
        vertices: convex_hull(pts),
    })
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Andrew's monotone chain; collinear and duplicate points are dropped.
fn convex_hull(mut pts: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let scale = pts
        .iter()
        .flat_map(|p| p.iter())
        .fold(1.0f64, |m, v| m.max(v.abs()));
    let eps = 1e-12 * scale * scale;
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: &mut dyn Iterator<Item = &[f64; 2]> = if pass == 0 {
            &mut pts.iter()
        } else {
            &mut pts.iter().rev()
        };
        for &p in iter {
            while hull.len() >= start + 2
                && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= eps
            {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}
