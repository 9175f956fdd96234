//! Synthetic lateral cephalograms from CBCT head volumes.
//!
//! The crate is `no_std` (with `alloc`) when built without the default
//! features. The processing chain is:
//!
//! 1. [`volume`]: rigid alignment and skeleton/airway enhancement of HU volumes.
//! 2. [`projector`]: orthogonal, cone-beam and MIP-K ray casting.
//! 3. [`film`]: sigmoid film-curve transforms to 8-bit cephalograms and
//!    least-squares curve fitting.
//! 4. [`cephgeom`]: virtual-detector rebinning, magnification geometry,
//!    quadrant normalisation and dual-projection RGB packing.
//! 5. [`dataset`]: quantisation, resampling and super-resolution patch
//!    sampling.
//! 6. [`metrics`]: RMSE/PSNR, line profiles and landmark detection rates.
//! 7. [`pipeline`]: end-to-end compositions of the above.

#![cfg_attr(not(feature = "std"), no_std)]
// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod cephgeom;
pub mod dataset;
pub mod error;
pub mod film;
pub mod metrics;
pub mod pipeline;
pub mod projector;
pub mod raster;
pub mod volume;

mod par;

pub use error::{Error, Result};
pub use raster::{Cephalogram8, Image2, IntegralImage, PlaneGrid, Raster};
pub use volume::{EnhanceParams, Interpolation, RigidTransform, Volume};
