//! Monomials in the complex mode variables (xi_a, eta_a) and finite
//! polynomial Hamiltonians over them, with the Poisson bracket
//!
//! ```text
//!     {F, G} = i <grad_eta F, grad_xi G> - i <grad_xi F, grad_eta G>
//! ```
//!
//! of the symplectic form -i dxi ^ deta.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;
use serde::Serialize;

use super::coeff::{CoeffRing, SymCoeff};
use crate::frequencies::Mass;
use crate::lattice::LatticeVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum VarKind {
    Xi,
    Eta,
}

impl VarKind {
    fn flip(self) -> Self {
        match self {
            VarKind::Xi => VarKind::Eta,
            VarKind::Eta => VarKind::Xi,
        }
    }

    /// Momentum sign: +1 for xi, -1 for eta.
    fn momentum_sign(self) -> i64 {
        match self {
            VarKind::Xi => 1,
            VarKind::Eta => -1,
        }
    }
}

/// A product of mode variables in canonical order (mode lex, then xi < eta).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Monomial {
    factors: Vec<(LatticeVector, VarKind)>,
}

impl Monomial {
    pub fn new(mut factors: Vec<(LatticeVector, VarKind)>) -> Self {
        factors.sort();
        Self { factors }
    }

    pub fn one() -> Self {
        Self { factors: vec![] }
    }

    pub fn degree(&self) -> usize {
        self.factors.len()
    }

    pub fn factors(&self) -> &[(LatticeVector, VarKind)] {
        &self.factors
    }

    /// Momentum sum_j sigma_j a_j with sigma(xi) = +1, sigma(eta) = -1.
    pub fn momentum(&self) -> Vec<i64> {
        let d = self.factors.first().map_or(0, |(v, _)| v.dim());
        let mut total = vec![0i64; d];
        for (v, kind) in &self.factors {
            for (t, c) in total.iter_mut().zip(v.coords()) {
                *t += kind.momentum_sign() * c;
            }
        }
        total
    }

    pub fn zero_momentum(&self) -> bool {
        self.momentum().iter().all(|&c| c == 0)
    }

    /// Swap xi <-> eta on every factor (the conjugation involution).
    pub fn conj_swap(&self) -> Self {
        Self::new(
            self.factors
                .iter()
                .map(|(v, k)| (v.clone(), k.flip()))
                .collect(),
        )
    }

    /// Multiplicity of the variable (mode, kind).
    pub fn multiplicity(&self, mode: &LatticeVector, kind: VarKind) -> u64 {
        self.factors
            .iter()
            .filter(|(v, k)| v == mode && *k == kind)
            .count() as u64
    }

    /// Remove one occurrence of (mode, kind); None when absent.
    fn without(&self, mode: &LatticeVector, kind: VarKind) -> Option<Self> {
        let pos = self
            .factors
            .iter()
            .position(|(v, k)| v == mode && *k == kind)?;
        let mut factors = self.factors.clone();
        factors.remove(pos);
        Some(Self { factors })
    }

    fn concat(&self, other: &Self) -> Self {
        let mut factors = self.factors.clone();
        factors.extend(other.factors.iter().cloned());
        Self::new(factors)
    }

    /// Distinct variables appearing, with multiplicities.
    fn support(&self) -> Vec<(LatticeVector, VarKind, u64)> {
        let mut out: Vec<(LatticeVector, VarKind, u64)> = Vec::new();
        for (v, k) in &self.factors {
            if let Some(last) = out.last_mut() {
                if &last.0 == v && last.1 == *k {
                    last.2 += 1;
                    continue;
                }
            }
            out.push((v.clone(), *k, 1));
        }
        out
    }

    /// The xi-modes and eta-modes as sorted multisets.
    pub fn split_modes(&self) -> (Vec<LatticeVector>, Vec<LatticeVector>) {
        let mut xi = Vec::new();
        let mut eta = Vec::new();
        for (v, k) in &self.factors {
            match k {
                VarKind::Xi => xi.push(v.clone()),
                VarKind::Eta => eta.push(v.clone()),
            }
        }
        (xi, eta)
    }

    /// Number of factor slots whose mode lies in `set` (with multiplicity).
    pub fn slots_in<'a, I: IntoIterator<Item = &'a LatticeVector>>(&self, set: I) -> usize {
        let set: Vec<&LatticeVector> = set.into_iter().collect();
        self.factors
            .iter()
            .filter(|(v, _)| set.contains(&v))
            .count()
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.factors.is_empty() {
            return write!(f, "1");
        }
        for (v, k) in &self.factors {
            let sym = match k {
                VarKind::Xi => "xi",
                VarKind::Eta => "eta",
            };
            write!(f, " {sym}{:?}", v.coords())?;
        }
        Ok(())
    }
}

/// A finite sum of monomials with coefficients in `C`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyHamiltonian<C: CoeffRing> {
    terms: BTreeMap<Monomial, C>,
}

impl<C: CoeffRing> Default for PolyHamiltonian<C> {
    fn default() -> Self {
        Self {
            terms: BTreeMap::new(),
        }
    }
}

impl<C: CoeffRing> PolyHamiltonian<C> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn terms(&self) -> &BTreeMap<Monomial, C> {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, m: &Monomial) -> Option<&C> {
        self.terms.get(m)
    }

    pub fn add_term(&mut self, mono: Monomial, coeff: C) {
        if coeff.is_zero() {
            return;
        }
        match self.terms.entry(mono) {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(coeff);
            }
            std::collections::btree_map::Entry::Occupied(mut e) => {
                let sum = e.get().add(&coeff);
                if sum.is_zero() {
                    e.remove();
                } else {
                    *e.get_mut() = sum;
                }
            }
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), c.clone());
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), c.neg());
        }
        out
    }

    pub fn scale(&self, c: &C) -> Self {
        let mut out = Self::new();
        for (m, v) in &self.terms {
            out.add_term(m.clone(), v.mul(c));
        }
        out
    }

    pub fn product(&self, other: &Self) -> Self {
        let mut out = Self::new();
        for (m1, c1) in &self.terms {
            for (m2, c2) in &other.terms {
                out.add_term(m1.concat(m2), c1.mul(c2));
            }
        }
        out
    }

    /// {self, other} = i <grad_eta F, grad_xi G> - i <grad_xi F, grad_eta G>.
    pub fn poisson_bracket(&self, other: &Self) -> Self {
        let mut out = Self::new();
        for (m1, c1) in &self.terms {
            for (v, k1, mult1) in m1.support() {
                // d/d(eta_v) F pairs with d/d(xi_v) G and vice versa.
                let k2 = k1.flip();
                for (m2, c2) in &other.terms {
                    let mult2 = m2.multiplicity(&v, k2);
                    if mult2 == 0 {
                        continue;
                    }
                    let body = m1
                        .without(&v, k1)
                        .expect("factor present")
                        .concat(&m2.without(&v, k2).expect("factor present"));
                    let scalar = c1.mul(c2).scale_int(mult1 * mult2).times_i();
                    // +i for the (eta, xi) pairing, -i for (xi, eta).
                    let signed = match k1 {
                        VarKind::Eta => scalar,
                        VarKind::Xi => scalar.neg(),
                    };
                    out.add_term(body, signed);
                }
            }
        }
        out
    }

    /// True when the Hamiltonian is invariant under the xi <-> eta swap with
    /// coefficient conjugation (takes real values on eta = conj(xi)).
    pub fn is_real(&self) -> bool {
        self.terms.iter().all(|(m, c)| {
            let swapped = m.conj_swap();
            match self.terms.get(&swapped) {
                Some(c2) => c2.add(&c.conj().neg()).is_zero(),
                None => c.conj().is_zero(),
            }
        })
    }

    pub fn all_zero_momentum(&self) -> bool {
        self.terms.keys().all(Monomial::zero_momentum)
    }

    /// Exact zero test (symbolic mode: identity in m).
    pub fn is_zero(&self) -> bool {
        self.terms.values().all(CoeffRing::is_zero)
    }
}

impl PolyHamiltonian<SymCoeff> {
    /// Collapse every coefficient to a complex float at mass `m`,
    /// dimension `d`.
    pub fn to_numeric(&self, m: Mass, d: usize) -> Result<PolyHamiltonian<Complex64>, String> {
        let mut out = PolyHamiltonian::new();
        for (mono, c) in &self.terms {
            out.add_term(mono.clone(), c.eval(m, d)?);
        }
        Ok(out)
    }
}

impl PolyHamiltonian<Complex64> {
    /// Coefficient-wise max modulus.
    pub fn max_abs(&self) -> f64 {
        self.terms
            .values()
            .map(|c| c.norm())
            .fold(0.0, f64::max)
    }

    /// Sorted term list for golden-file serialization: one row per monomial,
    /// fixed 17-significant-digit floats.
    pub fn to_term_list(&self) -> Vec<TermRow> {
        self.terms
            .iter()
            .map(|(m, c)| TermRow {
                monomial: m.to_string().trim().to_string(),
                re: c.re,
                im: c.im,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, serde::Deserialize)]
pub struct TermRow {
    pub monomial: String,
    pub re: f64,
    pub im: f64,
}
