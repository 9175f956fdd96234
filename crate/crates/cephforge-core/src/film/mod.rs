//! Film characteristic curves.
//!
//! X-ray film responds to log exposure (equivalently the attenuation line
//! integral) with a sigmoid-shaped density curve. These transforms map an
//! [`IntegralImage`] to an 8-bit cephalogram with that response:
//!
//! * [`sigmoid_transform`]: `c1 + (255 − c1 − c2) · σ(s · (g − t))`.
//! * [`modified_sigmoid_transform`]: zero below `tau1` (air), a second,
//!   gentler sigmoid on `[tau1, tau2]` (soft tissue), and the main curve
//!   above `tau2`.

mod fit;

pub use fit::{fit_sigmoid, fit_sigmoid_from, FitOptions, SigmoidFit, MIN_FIT_SAMPLES};

use alloc::format;

use crate::error::{Error, Result};
use crate::raster::{to_u8, Cephalogram8, IntegralImage, Raster};

/// Logistic function `1 / (1 + e^(−x))`, evaluated without overflow.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// Parameters of the general sigmoid curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmoidParams {
    /// Base gray level (film base plus fog).
    pub c1: f64,
    /// Distance of the saturation level below 255.
    pub c2: f64,
    /// Integral at the curve midpoint.
    pub t: f64,
    /// Slope scale.
    pub s: f64,
}

impl Default for SigmoidParams {
    fn default() -> Self {
        Self {
            c1: 40.0,
            c2: 5.0,
            t: 2.6,
            s: 1.5,
        }
    }
}

impl SigmoidParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.c1 >= 0.0
            && self.c2 >= 0.0
            && self.c1 + self.c2 < 255.0
            && self.s > 0.0
            && self.t.is_finite();
        if !ok {
            return Err(Error::Parameter(format!(
                "sigmoid needs c1, c2 >= 0, c1 + c2 < 255, s > 0 (got c1={} c2={} t={} s={})",
                self.c1, self.c2, self.t, self.s
            )));
        }
        Ok(())
    }

    /// Unrounded curve value at integral `g`.
    #[inline]
    pub fn eval(&self, g: f64) -> f64 {
        self.c1 + (255.0 - self.c1 - self.c2) * sigmoid(self.s * (g - self.t))
    }
}

/// How the soft-tissue span `c4` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum C4 {
    /// Solve for continuity with the main curve at `tau2`.
    #[default]
    Derived,
    Fixed(f64),
}

/// Parameters of the piecewise (air / soft tissue / main) film curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModifiedSigmoidParams {
    pub base: SigmoidParams,
    /// Soft-tissue base gray level.
    pub c3: f64,
    pub c4: C4,
    /// Integrals below this are air and map to 0.
    pub tau1: f64,
    /// Upper end of the soft-tissue range.
    pub tau2: f64,
}

impl Default for ModifiedSigmoidParams {
    fn default() -> Self {
        Self {
            base: SigmoidParams::default(),
            c3: 18.0,
            c4: C4::Derived,
            tau1: 0.1,
            tau2: 1.2,
        }
    }
}

impl ModifiedSigmoidParams {
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if !(self.tau1 >= 0.0 && self.tau1 < self.tau2 && self.c3 >= 0.0) {
            return Err(Error::Parameter(format!(
                "modified sigmoid needs 0 <= tau1 < tau2 and c3 >= 0 (got tau1={} tau2={} c3={})",
                self.tau1, self.tau2, self.c3
            )));
        }
        if let C4::Fixed(c4) = self.c4 {
            if !c4.is_finite() {
                return Err(Error::Parameter(format!("c4 = {c4}")));
            }
        }
        Ok(())
    }

    /// Resolve `c4` and return the evaluable curve.
    pub fn curve(&self) -> Result<ModifiedCurve> {
        self.validate()?;
        let c4 = match self.c4 {
            C4::Derived => derive_c4(self)?,
            C4::Fixed(c4) => c4,
        };
        Ok(ModifiedCurve { params: *self, c4 })
    }
}

/// [`ModifiedSigmoidParams`] with a concrete `c4`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModifiedCurve {
    params: ModifiedSigmoidParams,
    c4: f64,
}

impl ModifiedCurve {
    pub fn c4(&self) -> f64 {
        self.c4
    }

    /// Soft-tissue branch.
    #[inline]
    pub fn low(&self, g: f64) -> f64 {
        let p = &self.params;
        p.c3 + self.c4 * sigmoid(g - (p.tau1 + p.tau2) / 2.0)
    }

    /// Unrounded curve value at integral `g`.
    #[inline]
    pub fn eval(&self, g: f64) -> f64 {
        let p = &self.params;
        if g < p.tau1 {
            0.0
        } else if g <= p.tau2 {
            self.low(g)
        } else {
            p.base.eval(g)
        }
    }

    /// `|low(tau2) − main(tau2)|`.
    pub fn continuity_residual(&self) -> f64 {
        let tau2 = self.params.tau2;
        (self.low(tau2) - self.params.base.eval(tau2)).abs()
    }
}

/// `c4` that makes the soft-tissue branch meet the main curve at `tau2`.
pub fn derive_c4(p: &ModifiedSigmoidParams) -> Result<f64> {
    p.base.validate()?;
    let at_tau2 = p.base.eval(p.tau2);
    if at_tau2 < p.c3 {
        return Err(Error::Parameter(format!(
            "main curve at tau2 ({at_tau2:.3}) lies below c3 ({}); c4 would be negative",
            p.c3
        )));
    }
    let mid = (p.tau1 + p.tau2) / 2.0;
    Ok((at_tau2 - p.c3) * (1.0 + libm::exp(-(p.tau2 - mid))))
}

pub fn sigmoid_transform(g: &IntegralImage, p: &SigmoidParams) -> Result<Cephalogram8> {
    p.validate()?;
    Raster::new(g.image.map(|x| to_u8(p.eval(x))), g.grid)
}

pub fn modified_sigmoid_transform(
    g: &IntegralImage,
    p: &ModifiedSigmoidParams,
) -> Result<Cephalogram8> {
    let curve = p.curve()?;
    Raster::new(g.image.map(|x| to_u8(curve.eval(x))), g.grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{Image2, PlaneGrid};
    use alloc::vec::Vec;

    fn line(values: &[f64]) -> IntegralImage {
        Raster::new(
            Image2::new(values.len(), 1, values.to_vec()).unwrap(),
            PlaneGrid::centered(values.len(), 1, [0.5, 0.5]),
        )
        .unwrap()
    }

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(-2.0) - 0.1192029).abs() < 1e-6);
        assert!(sigmoid(800.0) == 1.0);
        assert!(sigmoid(-800.0) >= 0.0);
    }

    #[test]
    fn sigmoid_transform_anchors() {
        let out = sigmoid_transform(&line(&[2.6, 50.0, 0.0]), &SigmoidParams::default()).unwrap();
        assert_eq!(out.image.data(), &[145, 250, 44]);
    }

    #[test]
    fn derived_c4_and_midpoint() {
        let p = ModifiedSigmoidParams::default();
        let c4 = derive_c4(&p).unwrap();
        // (40 + 210/(1+e^2.1) − 18) · (1 + e^−0.55)
        assert!((c4 - 70.83).abs() < 0.05, "c4 = {c4}");
        let curve = p.curve().unwrap();
        assert!(curve.continuity_residual() < 1e-9);
        let out = modified_sigmoid_transform(&line(&[0.05, 0.65, 3.0]), &p).unwrap();
        let plain = sigmoid_transform(&line(&[3.0]), &p.base).unwrap();
        assert_eq!(out.image.data()[..2], [0, 53]);
        assert_eq!(out.image.data()[2], plain.image.data()[0]);
    }

    #[test]
    fn c4_zero_span_and_negative_span() {
        let mut p = ModifiedSigmoidParams::default();
        p.c3 = p.base.eval(p.tau2);
        assert!(derive_c4(&p).unwrap().abs() < 1e-12);
        p.c3 += 1.0;
        assert!(derive_c4(&p).is_err());
    }

    #[test]
    fn fixed_c4_override_is_used() {
        let p = ModifiedSigmoidParams {
            c4: C4::Fixed(23.0),
            ..Default::default()
        };
        let curve = p.curve().unwrap();
        assert_eq!(curve.c4(), 23.0);
        assert!((curve.eval(0.65) - 29.5).abs() < 1e-12);
        // the literal constant leaves a visible step at tau2
        assert!(curve.continuity_residual() > 30.0);
    }

    #[test]
    fn original_curve_never_zero_and_modified_zero_only_in_air() {
        let gs: Vec<f64> = (0..200).map(|i| i as f64 * 0.05).collect();
        let orig = sigmoid_transform(&line(&gs), &SigmoidParams::default()).unwrap();
        assert!(orig.image.data().iter().all(|&x| x >= 40));
        let p = ModifiedSigmoidParams::default();
        let modi = modified_sigmoid_transform(&line(&gs), &p).unwrap();
        for (&g, &q) in gs.iter().zip(modi.image.data()) {
            assert_eq!(q == 0, g < p.tau1, "g={g} q={q}");
        }
    }

    #[test]
    fn invalid_params() {
        let p = SigmoidParams {
            c1: 200.0,
            c2: 60.0,
            ..Default::default()
        };
        assert!(p.validate().is_err());
        let m = ModifiedSigmoidParams {
            tau1: 2.0,
            ..Default::default()
        };
        assert!(m.curve().is_err());
    }
}
