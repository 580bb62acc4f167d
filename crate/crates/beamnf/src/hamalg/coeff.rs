//! Exact coefficient arithmetic for polynomial Hamiltonians.
//!
//! A coefficient is a sum of atoms
//!
//! ```text
//!     (re + i im) * (2pi)^(-d*t) * prod_s lambda_s^(h_s / 2) * prod_D D^(-1)
//! ```
//!
//! where `s` ranges over squared norms, `lambda_s = sqrt(s^2 + m)` is kept
//! symbolic, `(2pi)^(-d)` is never expanded, and each `D` is an integer
//! linear form `sum_s c_s lambda_s` (a divisor). Rationals are exact.
//! Collapsing to a complex float happens only at evaluation, given `m`
//! and the dimension.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::frequencies::{lambda_from_norm2, Mass};

/// A coefficient ring usable as the scalar type of a polynomial Hamiltonian.
pub trait CoeffRing: Clone + PartialEq + fmt::Debug {
    fn zero() -> Self;
    fn is_zero(&self) -> bool;
    fn add(&self, other: &Self) -> Self;
    fn mul(&self, other: &Self) -> Self;
    fn neg(&self) -> Self;
    /// Multiplication by a nonnegative integer (derivative multiplicities).
    fn scale_int(&self, k: u64) -> Self;
    /// Multiplication by the imaginary unit.
    fn times_i(&self) -> Self;
    fn conj(&self) -> Self;
}

impl CoeffRing for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn is_zero(&self) -> bool {
        self.re == 0.0 && self.im == 0.0
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn mul(&self, other: &Self) -> Self {
        self * other
    }
    fn neg(&self) -> Self {
        -self
    }
    fn scale_int(&self, k: u64) -> Self {
        self * k as f64
    }
    fn times_i(&self) -> Self {
        Complex64::new(-self.im, self.re)
    }
    fn conj(&self) -> Self {
        Complex64::new(self.re, -self.im)
    }
}

/// An integer linear form `sum_s c_s lambda_s` over squared norms, used as a
/// symbolic divisor. The form is trivially resonant exactly when the map is
/// empty after cancellation.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct LinForm(pub BTreeMap<i64, i64>);

impl LinForm {
    pub fn add_term(&mut self, norm2: i64, coeff: i64) {
        let e = self.0.entry(norm2).or_insert(0);
        *e += coeff;
        if *e == 0 {
            self.0.remove(&norm2);
        }
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn eval(&self, m: Mass) -> f64 {
        self.0
            .iter()
            .map(|(&s, &c)| c as f64 * lambda_from_norm2(s, m))
            .sum()
    }
}

impl fmt::Display for LinForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (&s, &c) in &self.0 {
            if !first {
                write!(f, " + ")?;
            }
            write!(f, "{c}*lam[{s}]")?;
            first = false;
        }
        Ok(())
    }
}

/// Structural key of an atom: everything except the Gaussian-rational scalar.
type AtomKey = (i32, BTreeMap<i64, i32>, BTreeMap<LinForm, u32>);

#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub re: BigRational,
    pub im: BigRational,
    /// Exponent t of (2pi)^(-d*t).
    pub twopi: i32,
    /// lambda_s exponents in half units: value h means lambda_s^(h/2).
    pub lam: BTreeMap<i64, i32>,
    /// Divisor factors, each to power -mult.
    pub div: BTreeMap<LinForm, u32>,
}

impl Atom {
    fn key(&self) -> AtomKey {
        (self.twopi, self.lam.clone(), self.div.clone())
    }

    fn scalar_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }
}

pub fn rational(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Exact symbolic coefficient: a merged sum of atoms.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SymCoeff {
    atoms: Vec<Atom>,
}

impl SymCoeff {
    pub fn from_atom(atom: Atom) -> Self {
        let mut c = Self { atoms: vec![atom] };
        c.normalize();
        c
    }

    /// re + i im, no symbolic factors.
    pub fn gaussian(re: BigRational, im: BigRational) -> Self {
        Self::from_atom(Atom {
            re,
            im,
            twopi: 0,
            lam: BTreeMap::new(),
            div: BTreeMap::new(),
        })
    }

    pub fn one() -> Self {
        Self::gaussian(BigRational::one(), BigRational::zero())
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    fn normalize(&mut self) {
        self.atoms.sort_by(|a, b| a.key().cmp(&b.key()));
        let mut merged: Vec<Atom> = Vec::with_capacity(self.atoms.len());
        for atom in self.atoms.drain(..) {
            if let Some(last) = merged.last_mut() {
                if last.key() == atom.key() {
                    last.re += atom.re;
                    last.im += atom.im;
                    continue;
                }
            }
            merged.push(atom);
        }
        merged.retain(|a| !a.scalar_zero());
        self.atoms = merged;
    }

    /// lambda_s to the power `half/2` times `scale`.
    pub fn lambda_power(norm2: i64, half: i32) -> Self {
        let mut lam = BTreeMap::new();
        if half != 0 {
            lam.insert(norm2, half);
        }
        Self::from_atom(Atom {
            re: BigRational::one(),
            im: BigRational::zero(),
            twopi: 0,
            lam,
            div: BTreeMap::new(),
        })
    }

    /// Exact zero test as a function of m, treating the lambda_s as
    /// independent symbols: put all atoms over the common divisor
    /// denominator, expand the numerators into lambda-polynomials and check
    /// that every monomial cancels.
    pub fn is_zero_exact(&self) -> bool {
        if self.atoms.is_empty() {
            return true;
        }
        // Common denominator: max multiplicity of every divisor form.
        let mut denom: BTreeMap<LinForm, u32> = BTreeMap::new();
        for atom in &self.atoms {
            for (d, &mult) in &atom.div {
                let e = denom.entry(d.clone()).or_insert(0);
                *e = (*e).max(mult);
            }
        }
        // Accumulate numerator monomials keyed by (twopi, lam exponents).
        type MonoKey = (i32, BTreeMap<i64, i32>);
        let mut acc: BTreeMap<MonoKey, (BigRational, BigRational)> = BTreeMap::new();
        for atom in &self.atoms {
            // Expand atom * prod (missing divisor factors).
            let mut terms: Vec<(BigRational, BigRational, BTreeMap<i64, i32>)> =
                vec![(atom.re.clone(), atom.im.clone(), atom.lam.clone())];
            for (d, &mult) in &denom {
                let have = atom.div.get(d).copied().unwrap_or(0);
                for _ in 0..(mult - have) {
                    let mut next = Vec::with_capacity(terms.len() * d.0.len());
                    for (re, im, lam) in &terms {
                        for (&s, &c) in &d.0 {
                            let mut lam2 = lam.clone();
                            let e = lam2.entry(s).or_insert(0);
                            *e += 2; // one full power of lambda_s
                            if *e == 0 {
                                lam2.remove(&s);
                            }
                            let factor = BigRational::from(BigInt::from(c));
                            next.push((re * &factor, im * &factor, lam2));
                        }
                    }
                    terms = next;
                }
            }
            for (re, im, lam) in terms {
                let entry = acc
                    .entry((atom.twopi, lam))
                    .or_insert_with(|| (BigRational::zero(), BigRational::zero()));
                entry.0 += re;
                entry.1 += im;
            }
        }
        acc.values().all(|(re, im)| re.is_zero() && im.is_zero())
    }

    /// Collapse to a complex float at mass `m` in dimension `d`.
    /// Fails when a divisor factor vanishes numerically (m in the excluded
    /// set at this truncation), naming the offending form.
    pub fn eval(&self, m: Mass, d: usize) -> Result<Complex64, String> {
        let two_pi_d = (2.0 * std::f64::consts::PI).powi(d as i32);
        let mut total = Complex64::new(0.0, 0.0);
        for atom in &self.atoms {
            let mut v = Complex64::new(rat_to_f64(&atom.re), rat_to_f64(&atom.im));
            v *= two_pi_d.powi(-atom.twopi);
            for (&s, &h) in &atom.lam {
                let base = (s * s) as f64 + m.value();
                v *= base.powf(h as f64 / 4.0);
            }
            for (form, &mult) in &atom.div {
                let dv = form.eval(m);
                if dv.abs() < 1e-12 {
                    return Err(format!("vanishing divisor {form} at m = {}", m.value()));
                }
                v /= dv.powi(mult as i32);
            }
            total += v;
        }
        Ok(total)
    }
}

fn rat_to_f64(r: &BigRational) -> f64 {
    // Exact-to-nearest conversion is unnecessary here: numerators and
    // denominators stay tiny (products of small integers).
    let num = r.numer().to_string().parse::<f64>().unwrap_or(f64::NAN);
    let den = r.denom().to_string().parse::<f64>().unwrap_or(f64::NAN);
    num / den
}

impl CoeffRing for SymCoeff {
    fn zero() -> Self {
        Self::default()
    }

    fn is_zero(&self) -> bool {
        self.is_zero_exact()
    }

    fn add(&self, other: &Self) -> Self {
        let mut atoms = self.atoms.clone();
        atoms.extend(other.atoms.iter().cloned());
        let mut c = Self { atoms };
        c.normalize();
        c
    }

    fn mul(&self, other: &Self) -> Self {
        let mut atoms = Vec::with_capacity(self.atoms.len() * other.atoms.len());
        for a in &self.atoms {
            for b in &other.atoms {
                let re = &a.re * &b.re - &a.im * &b.im;
                let im = &a.re * &b.im + &a.im * &b.re;
                let mut lam = a.lam.clone();
                for (&s, &h) in &b.lam {
                    let e = lam.entry(s).or_insert(0);
                    *e += h;
                    if *e == 0 {
                        lam.remove(&s);
                    }
                }
                let mut div = a.div.clone();
                for (d, &mult) in &b.div {
                    *div.entry(d.clone()).or_insert(0) += mult;
                }
                atoms.push(Atom {
                    re,
                    im,
                    twopi: a.twopi + b.twopi,
                    lam,
                    div,
                });
            }
        }
        let mut c = Self { atoms };
        c.normalize();
        c
    }

    fn neg(&self) -> Self {
        let atoms = self
            .atoms
            .iter()
            .map(|a| Atom {
                re: -a.re.clone(),
                im: -a.im.clone(),
                ..a.clone()
            })
            .collect();
        Self { atoms }
    }

    fn scale_int(&self, k: u64) -> Self {
        let factor = BigRational::from(BigInt::from(k));
        let atoms = self
            .atoms
            .iter()
            .map(|a| Atom {
                re: &a.re * &factor,
                im: &a.im * &factor,
                ..a.clone()
            })
            .collect();
        let mut c = Self { atoms };
        c.normalize();
        c
    }

    fn times_i(&self) -> Self {
        let atoms = self
            .atoms
            .iter()
            .map(|a| Atom {
                re: -a.im.clone(),
                im: a.re.clone(),
                ..a.clone()
            })
            .collect();
        Self { atoms }
    }

    fn conj(&self) -> Self {
        let atoms = self
            .atoms
            .iter()
            .map(|a| Atom {
                re: a.re.clone(),
                im: -a.im.clone(),
                ..a.clone()
            })
            .collect();
        Self { atoms }
    }
}

impl fmt::Display for SymCoeff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.atoms.is_empty() {
            return write!(f, "0");
        }
        for (i, a) in self.atoms.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            write!(f, "({}+{}i)", a.re, a.im)?;
            if a.twopi != 0 {
                write!(f, "*(2pi)^(-{}d)", a.twopi)?;
            }
            for (&s, &h) in &a.lam {
                write!(f, "*lam[{s}]^({h}/2)")?;
            }
            for (d, &mult) in &a.div {
                write!(f, "/({d})^{mult}")?;
            }
        }
        Ok(())
    }
}
