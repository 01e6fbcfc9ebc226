//! Decomposition of truncated multivariate moment sequences into
//! polynomial-exponential models `Σ ω_i(y) e^{ξ_i·y}`.
//!
//! The pipeline reads a [`MomentSequence`], builds biorthogonal bases of the
//! associated quotient algebra ([`orthobasis`]), forms the multiplication
//! matrices and recovers frequencies and polynomial weights from their joint
//! eigenstructure ([`decompose`]). The [`applications`] module maps univariate
//! Prony, grid sampling, Fourier spikes and sparse interpolation onto it.

pub mod algebra;
pub mod applications;
pub mod decompose;
pub mod error;
pub mod hankel;
pub mod io;
pub mod numlin;
pub mod orthobasis;
pub mod polexp;

pub use algebra::{inner_product, pairing, star_shift, MomentSequence, MonomialOrder, MultiIndex, OrderKind, Poly};
pub use error::{Error, Result};
pub use polexp::{PolExpModel, PolExpTerm};
