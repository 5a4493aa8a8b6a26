//! Holomorphic null curves in `C^3` and the constructions built on them.

mod fft;
pub mod holo;
pub mod null;
pub mod rh;
pub mod period;
pub mod constructions;
pub mod transforms;

pub use holo::{C64, Domain, FitMode, HoloError, LaurentPoly};
