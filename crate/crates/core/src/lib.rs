//! Spectral toolkit for Schrödinger operators `-Δ + λV` on regular rooted
//! metric trees with radial potentials.
//!
//! The operator splits into weighted half-line channels
//! ([`decomposition`]), each solved by a finite-element Sturm count
//! ([`halfline`]). A direct discretisation of the truncated tree
//! ([`direct`]) serves as an independent check. [`bs`] holds the
//! Birman–Schwinger kernels and count bounds, [`asymptotics`] the coupling
//! sweeps.
//!
//! Everything numerical is generic over [`num::Real`]; the aliases below
//! fix the scalar.

#![allow(clippy::excessive_precision, clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod bs;
pub mod decomposition;
pub mod direct;
pub mod error;
pub mod halfline;
pub mod linalg;
pub mod num;
pub mod potential;
pub mod quadrature;
pub mod special;
pub mod tree;

pub use error::{Error, Result};
pub use num::Real;

pub type Tree64 = tree::RegularTree<f64>;
pub type Tree32 = tree::RegularTree<f32>;
pub type Potential64 = potential::RadialPotential<f64>;
pub type Potential32 = potential::RadialPotential<f32>;
pub type Channel64 = halfline::Channel<f64>;
pub type Channel32 = halfline::Channel<f32>;
pub type Numerics64 = halfline::Numerics<f64>;
pub type Numerics32 = halfline::Numerics<f32>;
pub type TreeSpectrum64 = decomposition::TreeSpectrum<f64>;
pub type SweepReport64 = asymptotics::SweepReport<f64>;
