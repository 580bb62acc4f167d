//! Constructors for the quartic normal-form computation on a truncated mode
//! universe: the diagonal quadratic h2, the quartic h4 = h40 + h41 + h42,
//! the generating Hamiltonian chi4, the resonant part z4 with its integrable
//! and coupled components, and the remainder q4 (at least cubic in the
//! directions transversal to the excited set).
//!
//! Index convention: a quartic monomial is assigned to chi4 (and hence
//! eliminated) when at least two of its four mode slots, counted with
//! multiplicity, lie in the excited set A; the published index sets carry a
//! sign on one slot of the xi xi xi eta family, and this reading is the one
//! that keeps the remainder cubic in the transversal directions. Within the
//! xi xi eta eta family, tuples whose xi and eta squared-norm multisets agree
//! are exactly the trivially resonant ones; they stay in z4.
//!
//! Everything here is built over index tuples drawn entirely from the
//! universe, so the bracket with the diagonal h2 is exact on that universe.

use std::collections::BTreeMap;
use std::collections::HashSet;

use num_rational::BigRational;
use num_traits::{One, Zero};

use super::coeff::{rational, Atom, LinForm, SymCoeff};
use super::poly::{Monomial, PolyHamiltonian, VarKind};
use crate::lattice::{ball_points, LatticeVector, ModeSet};

/// All modes with |a|^2 <= cutoff^2, lexicographic.
pub fn universe(d: usize, cutoff: i64) -> Vec<LatticeVector> {
    ball_points(d, cutoff * cutoff)
}

/// h2 = sum_a lambda_a xi_a eta_a over the universe.
pub fn build_h2(universe: &[LatticeVector]) -> PolyHamiltonian<SymCoeff> {
    let mut h2 = PolyHamiltonian::new();
    for a in universe {
        h2.add_term(
            Monomial::new(vec![(a.clone(), VarKind::Xi), (a.clone(), VarKind::Eta)]),
            SymCoeff::lambda_power(a.norm2(), 2),
        );
    }
    h2
}

#[derive(Debug, Clone)]
pub struct QuarticParts {
    pub h40: PolyHamiltonian<SymCoeff>,
    pub h41: PolyHamiltonian<SymCoeff>,
    pub h42: PolyHamiltonian<SymCoeff>,
}

impl QuarticParts {
    pub fn total(&self) -> PolyHamiltonian<SymCoeff> {
        self.h40.add(&self.h41).add(&self.h42)
    }
}

// 1/sqrt(lambda_i lambda_j lambda_k lambda_l) as half exponents.
fn inv_sqrt_lams(norms: [i64; 4]) -> BTreeMap<i64, i32> {
    let mut lam = BTreeMap::new();
    for s in norms {
        let e = lam.entry(s).or_insert(0);
        *e -= 1;
        if *e == 0 {
            lam.remove(&s);
        }
    }
    lam
}

fn plain_atom(re: BigRational, im: BigRational, norms: [i64; 4]) -> SymCoeff {
    SymCoeff::from_atom(Atom {
        re,
        im,
        twopi: 1,
        lam: inv_sqrt_lams(norms),
        div: BTreeMap::new(),
    })
}

fn divided_atom(re: BigRational, im: BigRational, norms: [i64; 4], form: LinForm) -> SymCoeff {
    SymCoeff::from_atom(Atom {
        re,
        im,
        twopi: 1,
        lam: inv_sqrt_lams(norms),
        div: BTreeMap::from([(form, 1)]),
    })
}

/// Visit all ordered tuples (i, j, k, l = i + j + sign_k * k) with every
/// entry in the universe.
fn for_tuples<F: FnMut(&LatticeVector, &LatticeVector, &LatticeVector, LatticeVector)>(
    universe: &[LatticeVector],
    in_universe: &HashSet<LatticeVector>,
    combine: impl Fn(&LatticeVector, &LatticeVector, &LatticeVector) -> LatticeVector,
    mut f: F,
) {
    for i in universe {
        for j in universe {
            for k in universe {
                let l = combine(i, j, k);
                if in_universe.contains(&l) {
                    f(i, j, k, l);
                }
            }
        }
    }
}

/// The quartic part of the beam Hamiltonian over the universe,
/// split into the pure (h40), 3+1 (h41) and 2+2 (h42) families.
pub fn build_h4(universe: &[LatticeVector]) -> QuarticParts {
    let set: HashSet<LatticeVector> = universe.iter().cloned().collect();
    let mut h40 = PolyHamiltonian::new();
    let mut h41 = PolyHamiltonian::new();
    let mut h42 = PolyHamiltonian::new();

    // h40: i + j + k + l = 0, (xi^4 + eta^4) / 4.
    for_tuples(
        universe,
        &set,
        |i, j, k| i.add(j).unwrap().add(k).unwrap().neg(),
        |i, j, k, l| {
            let norms = [i.norm2(), j.norm2(), k.norm2(), l.norm2()];
            let c = plain_atom(rational(1, 4), BigRational::zero(), norms);
            for kind in [VarKind::Xi, VarKind::Eta] {
                h40.add_term(
                    Monomial::new(vec![
                        (i.clone(), kind),
                        (j.clone(), kind),
                        (k.clone(), kind),
                        (l.clone(), kind),
                    ]),
                    c.clone(),
                );
            }
        },
    );

    // h41: i + j + k = l, xi xi xi eta + eta eta eta xi.
    for_tuples(
        universe,
        &set,
        |i, j, k| i.add(j).unwrap().add(k).unwrap(),
        |i, j, k, l| {
            let norms = [i.norm2(), j.norm2(), k.norm2(), l.norm2()];
            let c = plain_atom(BigRational::one(), BigRational::zero(), norms);
            for (kijk, kl) in [(VarKind::Xi, VarKind::Eta), (VarKind::Eta, VarKind::Xi)] {
                h41.add_term(
                    Monomial::new(vec![
                        (i.clone(), kijk),
                        (j.clone(), kijk),
                        (k.clone(), kijk),
                        (l.clone(), kl),
                    ]),
                    c.clone(),
                );
            }
        },
    );

    // h42: i + j = k + l, (3/2) xi_i xi_j eta_k eta_l.
    for_tuples(
        universe,
        &set,
        |i, j, k| i.add(j).unwrap().sub(k).unwrap(),
        |i, j, k, l| {
            let norms = [i.norm2(), j.norm2(), k.norm2(), l.norm2()];
            h42.add_term(
                Monomial::new(vec![
                    (i.clone(), VarKind::Xi),
                    (j.clone(), VarKind::Xi),
                    (k.clone(), VarKind::Eta),
                    (l.clone(), VarKind::Eta),
                ]),
                plain_atom(rational(3, 2), BigRational::zero(), norms),
            );
        },
    );

    QuarticParts { h40, h41, h42 }
}

fn slots_in_a(modes: [&LatticeVector; 4], a_set: &ModeSet) -> usize {
    modes.iter().filter(|v| a_set.contains(v)).count()
}

// Multiset equality of squared norms {s_i, s_j} vs {s_k, s_l}.
fn norms_match(si: i64, sj: i64, sk: i64, sl: i64) -> bool {
    (si == sk && sj == sl) || (si == sl && sj == sk)
}

/// The generating Hamiltonian chi4 whose time-one flow removes the
/// non-resonant quartic terms. Every stored denominator is a
/// non-trivially-resonant divisor (the linear form is nonzero after formal
/// cancellation over squared norms).
pub fn build_chi4(universe: &[LatticeVector], a_set: &ModeSet) -> PolyHamiltonian<SymCoeff> {
    let set: HashSet<LatticeVector> = universe.iter().cloned().collect();
    let mut chi = PolyHamiltonian::new();

    // First sum: all of h40, divisor lam_i + lam_j + lam_k + lam_l.
    for_tuples(
        universe,
        &set,
        |i, j, k| i.add(j).unwrap().add(k).unwrap().neg(),
        |i, j, k, l| {
            let norms = [i.norm2(), j.norm2(), k.norm2(), l.norm2()];
            let mut form = LinForm::default();
            for s in norms {
                form.add_term(s, 1);
            }
            for (kind, im) in [
                (VarKind::Xi, rational(-1, 4)),
                (VarKind::Eta, rational(1, 4)),
            ] {
                chi.add_term(
                    Monomial::new(vec![
                        (i.clone(), kind),
                        (j.clone(), kind),
                        (k.clone(), kind),
                        (l.clone(), kind),
                    ]),
                    divided_atom(BigRational::zero(), im, norms, form.clone()),
                );
            }
        },
    );

    // Second sum: 3+1 monomials with at least two slots in A,
    // divisor lam_i + lam_j + lam_k - lam_l (never formally zero).
    for_tuples(
        universe,
        &set,
        |i, j, k| i.add(j).unwrap().add(k).unwrap(),
        |i, j, k, l| {
            if slots_in_a([i, j, k, &l], a_set) < 2 {
                return;
            }
            let norms = [i.norm2(), j.norm2(), k.norm2(), l.norm2()];
            let mut form = LinForm::default();
            for s in &norms[..3] {
                form.add_term(*s, 1);
            }
            form.add_term(norms[3], -1);
            debug_assert!(!form.is_empty());
            for (kijk, kl, im) in [
                (VarKind::Xi, VarKind::Eta, rational(-1, 1)),
                (VarKind::Eta, VarKind::Xi, rational(1, 1)),
            ] {
                chi.add_term(
                    Monomial::new(vec![
                        (i.clone(), kijk),
                        (j.clone(), kijk),
                        (k.clone(), kijk),
                        (l.clone(), kl),
                    ]),
                    divided_atom(BigRational::zero(), im, norms, form.clone()),
                );
            }
        },
    );

    // Third sum: 2+2 monomials with at least two slots in A and
    // non-matching norm multisets, divisor lam_i + lam_j - lam_k - lam_l.
    for_tuples(
        universe,
        &set,
        |i, j, k| i.add(j).unwrap().sub(k).unwrap(),
        |i, j, k, l| {
            if slots_in_a([i, j, k, &l], a_set) < 2 {
                return;
            }
            let norms = [i.norm2(), j.norm2(), k.norm2(), l.norm2()];
            if norms_match(norms[0], norms[1], norms[2], norms[3]) {
                return;
            }
            let mut form = LinForm::default();
            form.add_term(norms[0], 1);
            form.add_term(norms[1], 1);
            form.add_term(norms[2], -1);
            form.add_term(norms[3], -1);
            // Formal cancellation is exactly multiset equality of the norms.
            debug_assert!(!form.is_empty());
            chi.add_term(
                Monomial::new(vec![
                    (i.clone(), VarKind::Xi),
                    (j.clone(), VarKind::Xi),
                    (k.clone(), VarKind::Eta),
                    (l.clone(), VarKind::Eta),
                ]),
                divided_atom(BigRational::zero(), rational(-3, 2), norms, form),
            );
        },
    );

    chi
}

/// z4: the resonant 2+2 part that survives the Birkhoff step — at least two
/// slots in A and matching norm multisets, coefficient (3/2)(2pi)^-d /
/// (lam_i lam_j).
pub fn build_z4(universe: &[LatticeVector], a_set: &ModeSet) -> PolyHamiltonian<SymCoeff> {
    let set: HashSet<LatticeVector> = universe.iter().cloned().collect();
    let mut z4 = PolyHamiltonian::new();
    for_tuples(
        universe,
        &set,
        |i, j, k| i.add(j).unwrap().sub(k).unwrap(),
        |i, j, k, l| {
            if slots_in_a([i, j, k, &l], a_set) < 2 {
                return;
            }
            let norms = [i.norm2(), j.norm2(), k.norm2(), l.norm2()];
            if !norms_match(norms[0], norms[1], norms[2], norms[3]) {
                return;
            }
            z4.add_term(
                Monomial::new(vec![
                    (i.clone(), VarKind::Xi),
                    (j.clone(), VarKind::Xi),
                    (k.clone(), VarKind::Eta),
                    (l.clone(), VarKind::Eta),
                ]),
                plain_atom(rational(3, 2), BigRational::zero(), norms),
            );
        },
    );
    z4
}

/// The remainder q4^3 = q41 + q42: quartic terms with at most one slot in A,
/// hence at least cubic in the transversal directions.
pub fn build_q4(
    universe: &[LatticeVector],
    a_set: &ModeSet,
) -> (PolyHamiltonian<SymCoeff>, PolyHamiltonian<SymCoeff>) {
    let set: HashSet<LatticeVector> = universe.iter().cloned().collect();
    let mut q41 = PolyHamiltonian::new();
    let mut q42 = PolyHamiltonian::new();
    for_tuples(
        universe,
        &set,
        |i, j, k| i.add(j).unwrap().add(k).unwrap(),
        |i, j, k, l| {
            if slots_in_a([i, j, k, &l], a_set) >= 2 {
                return;
            }
            let norms = [i.norm2(), j.norm2(), k.norm2(), l.norm2()];
            let c = plain_atom(BigRational::one(), BigRational::zero(), norms);
            for (kijk, kl) in [(VarKind::Xi, VarKind::Eta), (VarKind::Eta, VarKind::Xi)] {
                q41.add_term(
                    Monomial::new(vec![
                        (i.clone(), kijk),
                        (j.clone(), kijk),
                        (k.clone(), kijk),
                        (l.clone(), kl),
                    ]),
                    c.clone(),
                );
            }
        },
    );
    for_tuples(
        universe,
        &set,
        |i, j, k| i.add(j).unwrap().sub(k).unwrap(),
        |i, j, k, l| {
            if slots_in_a([i, j, k, &l], a_set) >= 2 {
                return;
            }
            let norms = [i.norm2(), j.norm2(), k.norm2(), l.norm2()];
            q42.add_term(
                Monomial::new(vec![
                    (i.clone(), VarKind::Xi),
                    (j.clone(), VarKind::Xi),
                    (k.clone(), VarKind::Eta),
                    (l.clone(), VarKind::Eta),
                ]),
                plain_atom(rational(3, 2), BigRational::zero(), norms),
            );
        },
    );
    (q41, q42)
}

/// Split z4 into its integrable part (xi and eta mode multisets equal,
/// a polynomial in the actions) and the coupled rest.
pub fn split_z4(
    z4: &PolyHamiltonian<SymCoeff>,
) -> (PolyHamiltonian<SymCoeff>, PolyHamiltonian<SymCoeff>) {
    let mut plus = PolyHamiltonian::new();
    let mut minus = PolyHamiltonian::new();
    for (m, c) in z4.terms() {
        let (xi, eta) = m.split_modes();
        if xi == eta {
            plus.add_term(m.clone(), c.clone());
        } else {
            minus.add_term(m.clone(), c.clone());
        }
    }
    (plus, minus)
}

/// Closed form of the integrable part: the monomial I_c I_e carries
/// (3/2)(2pi)^-d (4 - 3 delta_{c,e}) / (lambda_c lambda_e), each unordered
/// pair counted once, with at least one of c, e excited.
pub fn z4_plus_closed_form(
    universe: &[LatticeVector],
    a_set: &ModeSet,
) -> PolyHamiltonian<SymCoeff> {
    let mut out = PolyHamiltonian::new();
    for (ci, c) in universe.iter().enumerate() {
        for e in &universe[ci..] {
            let in_a = (a_set.contains(c), a_set.contains(e));
            if !(in_a.0 || in_a.1) {
                continue;
            }
            let (factor, ok) = if c == e {
                (rational(3, 2), in_a.0)
            } else {
                (rational(6, 1), true)
            };
            if !ok {
                continue;
            }
            let norms = [c.norm2(), c.norm2(), e.norm2(), e.norm2()];
            out.add_term(
                Monomial::new(vec![
                    (c.clone(), VarKind::Xi),
                    (e.clone(), VarKind::Xi),
                    (c.clone(), VarKind::Eta),
                    (e.clone(), VarKind::Eta),
                ]),
                plain_atom(factor, BigRational::zero(), norms),
            );
        }
    }
    out
}

/// Closed form of the coupled part z4^{-2} over the resonance geometry:
/// plus pairs contribute xi_{l(a)} xi_{l(b)} eta_a eta_b (and the swapped
/// mirror), minus pairs contribute xi_a xi_{l(b)} eta_{l(a)} eta_b, all with
/// coefficient 6 (2pi)^-d / (lambda_a lambda_b).
pub fn z4_minus2_closed_form(
    universe: &[LatticeVector],
    geom: &crate::lattice::ResonanceGeometry,
) -> PolyHamiltonian<SymCoeff> {
    let set: HashSet<LatticeVector> = universe.iter().cloned().collect();
    let mut out = PolyHamiltonian::new();
    let lf = &geom.lambda_f;
    let coeff = |a: &LatticeVector, b: &LatticeVector| {
        plain_atom(
            rational(6, 1),
            BigRational::zero(),
            [a.norm2(), a.norm2(), b.norm2(), b.norm2()],
        )
    };
    for &(i, j) in &geom.plus_pairs {
        if i > j {
            continue; // the pair set is symmetric; count each couple once
        }
        let (a, b) = (&lf[i], &lf[j]);
        let (la, lb) = (geom.ell_point(i), geom.ell_point(j));
        if ![a, b, la, lb].iter().all(|v| set.contains(v)) {
            continue;
        }
        out.add_term(
            Monomial::new(vec![
                (la.clone(), VarKind::Xi),
                (lb.clone(), VarKind::Xi),
                (a.clone(), VarKind::Eta),
                (b.clone(), VarKind::Eta),
            ]),
            coeff(a, b),
        );
        out.add_term(
            Monomial::new(vec![
                (la.clone(), VarKind::Eta),
                (lb.clone(), VarKind::Eta),
                (a.clone(), VarKind::Xi),
                (b.clone(), VarKind::Xi),
            ]),
            coeff(a, b),
        );
    }
    for &(i, j) in &geom.minus_pairs {
        let (a, b) = (&lf[i], &lf[j]);
        let (la, lb) = (geom.ell_point(i), geom.ell_point(j));
        if ![a, b, la, lb].iter().all(|v| set.contains(v)) {
            continue;
        }
        out.add_term(
            Monomial::new(vec![
                (a.clone(), VarKind::Xi),
                (lb.clone(), VarKind::Xi),
                (la.clone(), VarKind::Eta),
                (b.clone(), VarKind::Eta),
            ]),
            coeff(a, b),
        );
    }
    out
}

#[derive(Debug)]
pub struct NormalFormCheck {
    /// h4 + {chi4, h2} - (z4 + q4), which must vanish identically.
    pub residual: PolyHamiltonian<SymCoeff>,
    pub residual_exactly_zero: bool,
    pub z4: PolyHamiltonian<SymCoeff>,
    pub z4_plus: PolyHamiltonian<SymCoeff>,
    pub z4_minus2: PolyHamiltonian<SymCoeff>,
}

/// Verify the Birkhoff identity h4 + {chi4, h2} = z4 + q4^3 exactly on the
/// truncated universe and return the resonant parts.
pub fn verify_normal_form(universe: &[LatticeVector], a_set: &ModeSet) -> NormalFormCheck {
    let h2 = build_h2(universe);
    let h4 = build_h4(universe).total();
    let chi4 = build_chi4(universe, a_set);
    let z4 = build_z4(universe, a_set);
    let (q41, q42) = build_q4(universe, a_set);
    let bracket = chi4.poisson_bracket(&h2);
    let residual = h4.add(&bracket).sub(&z4).sub(&q41).sub(&q42);
    let residual_exactly_zero = residual.is_zero();
    let (z4_plus, z4_minus2) = split_z4(&z4);
    NormalFormCheck {
        residual,
        residual_exactly_zero,
        z4,
        z4_plus,
        z4_minus2,
    }
}
