//! Resonance geometry and Birkhoff normal form toolkit for the nonlinear
//! beam equation u_tt + Delta^2 u + m u = -g(x, u) on the d-torus.
//!
//! The crate builds, at desk scale, every explicitly computable object of
//! the quartic normal-form analysis: the integer resonance geometry of the
//! excited set, the small-divisor arithmetic in the mass parameter, the
//! exact polynomial Birkhoff step, the normal-form matrices Omega / Lambda /
//! K, the spectral stability classification of the invariant tori, and
//! numerical dynamics giving independent evidence for the verdicts.

pub mod dynamics;
pub mod frequencies;
pub mod hamalg;
pub mod lattice;
pub mod normalform;
pub mod norms;
pub mod spectral;
