//! Exact polynomial-Hamiltonian algebra on a truncated mode set.
//!
//! Coefficients carry the rational scalar, the (2pi)^-d prefactor, the
//! lambda^(+-1/2) factors and the divisor denominators symbolically, so the
//! Birkhoff identity h4 + {chi4, h2} = z4 + q4^3 can be checked exactly,
//! independently of the mass. Floats appear only through an explicit
//! collapse at a given mass.

pub mod builders;
pub mod coeff;
pub mod poly;

pub use builders::{
    build_chi4, build_h2, build_h4, build_q4, build_z4, split_z4, universe, verify_normal_form,
    z4_minus2_closed_form, z4_plus_closed_form, NormalFormCheck, QuarticParts,
};
pub use coeff::{rational, Atom, CoeffRing, LinForm, SymCoeff};
pub use poly::{Monomial, PolyHamiltonian, TermRow, VarKind};
