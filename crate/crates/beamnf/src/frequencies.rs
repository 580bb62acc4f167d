//! Linear frequencies lambda_a(m) = sqrt(|a|^4 + m) of the beam equation,
//! their m-derivatives, divisor arithmetic with exact trivial-resonance
//! classification, and empirical small-divisor scans over the mass.
//!
//! Trivial resonance is a formal notion: substitute lambda_a -> x_{|a|^2}
//! and ask whether the integer combination of the x's cancels. It is decided
//! here in exact integer multiset arithmetic, never by a float comparison.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::lattice::{ball_points, LatticeVector, ModeSet};

#[derive(Debug, Error, PartialEq)]
pub enum FrequencyError {
    #[error("mass {0} outside the standing interval [1,2]")]
    MassOutOfRange(f64),
    #[error("divisor k-vector length {0} does not match |A| = {1}")]
    BadKVector(usize, usize),
    #[error("divisor of kind {0:?} is missing a lattice point")]
    MissingPoint(DivisorKind),
    #[error("mode set is not admissible")]
    NotAdmissible,
}

/// The mass parameter, constrained to the standing interval [1,2].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Mass(f64);

impl Mass {
    pub fn new(m: f64) -> Result<Self, FrequencyError> {
        if !(1.0..=2.0).contains(&m) {
            return Err(FrequencyError::MassOutOfRange(m));
        }
        Ok(Self(m))
    }

    pub fn value(&self) -> f64 {
        self.0
    }

    /// The points 4/3 and 5/3 always belong to the excluded mass set; warn
    /// when m is within 1e-6 of either.
    pub fn near_exceptional(&self) -> Option<f64> {
        for bad in [4.0 / 3.0, 5.0 / 3.0] {
            if (self.0 - bad).abs() < 1e-6 {
                return Some(bad);
            }
        }
        None
    }
}

/// lambda over a squared norm: sqrt(s^2 + m) where s = |a|^2.
pub fn lambda_from_norm2(n2: i64, m: Mass) -> f64 {
    let s = n2 as f64;
    (s * s + m.value()).sqrt()
}

/// lambda_a(m) = sqrt(|a|^4 + m).
pub fn eigenfrequency(a: &LatticeVector, m: Mass) -> f64 {
    lambda_from_norm2(a.norm2(), m)
}

/// Upsilon_j = prod_{l=0}^{j-1} (2l-1)/2.
pub fn upsilon(j: u32) -> f64 {
    (0..j).map(|l| (2.0 * l as f64 - 1.0) / 2.0).product()
}

/// d^j omega / dm^j = (-1)^j Upsilon_j (|a|^4 + m)^(1/2 - j).
pub fn freq_derivative(n2: i64, m: Mass, j: u32) -> f64 {
    let s = n2 as f64;
    let base = s * s + m.value();
    let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
    sign * upsilon(j) * base.powf(0.5 - j as f64)
}

/// Derivatives for j = 1..=j_max.
pub fn freq_derivatives(a: &LatticeVector, m: Mass, j_max: u32) -> Vec<f64> {
    (1..=j_max).map(|j| freq_derivative(a.norm2(), m, j)).collect()
}

/// The p x p determinant det [ d^j omega_{a_l} / dm^j ]_{j,l=1..p},
/// evaluated numerically.
pub fn derivative_determinant(points: &[LatticeVector], m: Mass) -> f64 {
    let p = points.len();
    let mat = nalgebra::DMatrix::from_fn(p, p, |j, l| {
        freq_derivative(points[l].norm2(), m, (j + 1) as u32)
    });
    mat.determinant()
}

/// The same determinant through its closed-form factorization:
/// prod_j (-1)^j Upsilon_j  *  prod_l omega_l^{-1}  *  Vandermonde(x),
/// with x_a = omega_a^{-2}.
pub fn vandermonde_factorization(points: &[LatticeVector], m: Mass) -> f64 {
    let p = points.len();
    let mut prefactor = 1.0;
    for j in 1..=p as u32 {
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        prefactor *= sign * upsilon(j);
    }
    let omegas: Vec<f64> = points.iter().map(|a| eigenfrequency(a, m)).collect();
    let xs: Vec<f64> = omegas.iter().map(|w| 1.0 / (w * w)).collect();
    let mut vandermonde = 1.0;
    for l in 0..p {
        for k in l + 1..p {
            vandermonde *= xs[k] - xs[l];
        }
    }
    prefactor * omegas.iter().map(|w| 1.0 / w).product::<f64>() * vandermonde
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DivisorKind {
    D0,
    D1,
    D2Plus,
    D2Minus,
}

/// A linear combination <omega, k> (+ lambda_a) (+/- lambda_b).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Divisor {
    pub kind: DivisorKind,
    /// Integer vector indexed by the mode set A.
    pub k: Vec<i64>,
    pub a: Option<LatticeVector>,
    pub b: Option<LatticeVector>,
}

impl fmt::Display for Divisor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} k={:?}", self.kind, self.k)?;
        if let Some(a) = &self.a {
            write!(f, " a={:?}", a.coords())?;
        }
        if let Some(b) = &self.b {
            write!(f, " b={:?}", b.coords())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DivisorValue {
    pub value: f64,
    pub trivial_resonance: bool,
}

fn add_norm(map: &mut BTreeMap<i64, i64>, n2: i64, coeff: i64) {
    let e = map.entry(n2).or_insert(0);
    *e += coeff;
    if *e == 0 {
        map.remove(&n2);
    }
}

/// Evaluate a divisor and classify trivial resonance by the formal
/// substitution lambda_a -> x_{|a|^2}.
pub fn divisor_eval(dv: &Divisor, set: &ModeSet, m: Mass) -> Result<DivisorValue, FrequencyError> {
    if dv.k.len() != set.n() {
        return Err(FrequencyError::BadKVector(dv.k.len(), set.n()));
    }
    let mut value = 0.0;
    let mut formal: BTreeMap<i64, i64> = BTreeMap::new();
    for (ka, a) in dv.k.iter().zip(set.points()) {
        value += *ka as f64 * eigenfrequency(a, m);
        if *ka != 0 {
            add_norm(&mut formal, a.norm2(), *ka);
        }
    }
    let need_a = !matches!(dv.kind, DivisorKind::D0);
    if need_a {
        let a = dv.a.as_ref().ok_or(FrequencyError::MissingPoint(dv.kind))?;
        value += eigenfrequency(a, m);
        add_norm(&mut formal, a.norm2(), 1);
    }
    match dv.kind {
        DivisorKind::D2Plus | DivisorKind::D2Minus => {
            let b = dv.b.as_ref().ok_or(FrequencyError::MissingPoint(dv.kind))?;
            let sign = if dv.kind == DivisorKind::D2Plus { 1 } else { -1 };
            value += sign as f64 * eigenfrequency(b, m);
            add_norm(&mut formal, b.norm2(), sign);
        }
        _ => {}
    }
    Ok(DivisorValue {
        value,
        trivial_resonance: formal.is_empty(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanRow {
    pub divisor: Divisor,
    pub value: f64,
    pub trivial: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanResult {
    pub min_abs: f64,
    pub argmin: Divisor,
    pub scanned: u64,
}

fn k_vectors(n: usize, kmax: i64) -> Vec<Vec<i64>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        let mut next = Vec::new();
        for k in &out {
            let used: i64 = k.iter().map(|x: &i64| x.abs()).sum();
            for c in -(kmax - used)..=(kmax - used) {
                let mut kk = k.clone();
                kk.push(c);
                next.push(kk);
            }
        }
        out = next;
    }
    out
}

/// Visit every divisor with |k|_1 <= kmax and |a|,|b| <= nmax (a, b outside
/// A), in a fixed deterministic order.
pub fn scan_divisors<F: FnMut(&Divisor, DivisorValue)>(
    set: &ModeSet,
    m: Mass,
    kmax: i64,
    nmax: i64,
    mut visit: F,
) -> Result<u64, FrequencyError> {
    let ks = k_vectors(set.n(), kmax);
    let outside: Vec<LatticeVector> = ball_points(set.dim(), nmax * nmax)
        .into_iter()
        .filter(|p| !set.contains(p))
        .collect();
    let mut scanned = 0u64;
    let emit = |dv: Divisor, visit: &mut F| -> Result<(), FrequencyError> {
        let val = divisor_eval(&dv, set, m)?;
        visit(&dv, val);
        Ok(())
    };
    for k in &ks {
        if k.iter().any(|&c| c != 0) {
            scanned += 1;
            emit(
                Divisor {
                    kind: DivisorKind::D0,
                    k: k.clone(),
                    a: None,
                    b: None,
                },
                &mut visit,
            )?;
        }
        for a in &outside {
            scanned += 1;
            emit(
                Divisor {
                    kind: DivisorKind::D1,
                    k: k.clone(),
                    a: Some(a.clone()),
                    b: None,
                },
                &mut visit,
            )?;
            for b in &outside {
                for kind in [DivisorKind::D2Plus, DivisorKind::D2Minus] {
                    scanned += 1;
                    emit(
                        Divisor {
                            kind,
                            k: k.clone(),
                            a: Some(a.clone()),
                            b: Some(b.clone()),
                        },
                        &mut visit,
                    )?;
                }
            }
        }
    }
    Ok(scanned)
}

/// Minimum |value| over all non-trivially-resonant divisors in range.
/// Exhaustive and deterministic; ties resolve to the first divisor visited.
pub fn min_divisor_scan(
    set: &ModeSet,
    m: Mass,
    kmax: i64,
    nmax: i64,
) -> Result<ScanResult, FrequencyError> {
    let mut best: Option<(f64, Divisor)> = None;
    let scanned = scan_divisors(set, m, kmax, nmax, |dv, val| {
        if !val.trivial_resonance {
            let abs = val.value.abs();
            if best.as_ref().map_or(true, |(b, _)| abs < *b) {
                best = Some((abs, dv.clone()));
            }
        }
    })?;
    let (min_abs, argmin) = best.expect("scan range always contains a non-resonant divisor");
    Ok(ScanResult {
        min_abs,
        argmin,
        scanned,
    })
}

/// Fraction of masses m in [1,2] whose minimal non-resonant divisor falls
/// below kappa. Masses come from a seeded golden-ratio low-discrepancy
/// sequence so estimates are stable across seeds.
pub fn mass_exclusion_estimate(
    set: &ModeSet,
    kappa: f64,
    kmax: i64,
    nmax: i64,
    samples: u64,
    seed: u64,
) -> Result<f64, FrequencyError> {
    let golden = 0.618_033_988_749_894_9_f64;
    let offset = (seed as f64 * golden).fract();
    let mut hits = 0u64;
    for i in 0..samples {
        let t = (offset + i as f64 * golden).fract();
        let m = Mass::new(1.0 + t)?;
        if min_divisor_scan(set, m, kmax, nmax)?.min_abs < kappa {
            hits += 1;
        }
    }
    Ok(hits as f64 / samples as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::lv;
    use approx::assert_relative_eq;

    fn mass(m: f64) -> Mass {
        Mass::new(m).unwrap()
    }

    #[test]
    fn eigenfrequency_values() {
        assert_relative_eq!(eigenfrequency(&lv(&[1]), mass(1.0)), 2f64.sqrt());
        assert_relative_eq!(eigenfrequency(&lv(&[1, 1]), mass(2.0)), 6f64.sqrt());
        let l0 = eigenfrequency(&lv(&[0, 0]), mass(1.5));
        assert_relative_eq!(l0, 1.5f64.sqrt());
        assert!(1.0 < l0 && l0 < 1.0 + 0.75);
    }

    #[test]
    fn mass_validation() {
        assert!(Mass::new(0.5).is_err());
        assert!(Mass::new(2.5).is_err());
        assert_eq!(mass(4.0 / 3.0).near_exceptional(), Some(4.0 / 3.0));
        assert_eq!(mass(1.5).near_exceptional(), None);
    }

    /// <a>^2 <= lambda_a < <a>^2 + m / (2 <a>^2); the lower bound is an
    /// equality only at a = 0, m = 1.
    #[test]
    fn elementary_estimates_hold() {
        for n2 in 0..=1600i64 {
            for i in 0..=100 {
                let m = mass(1.0 + i as f64 / 100.0);
                let lam = lambda_from_norm2(n2, m);
                let br2 = n2.max(1) as f64;
                assert!(lam >= br2, "lower bound fails at n2={n2} m={}", m.value());
                if !(n2 == 0 && m.value() == 1.0) {
                    assert!(lam > br2);
                }
                assert!(
                    lam < br2 + m.value() / (2.0 * br2),
                    "upper bound fails at n2={n2} m={}",
                    m.value()
                );
            }
        }
    }

    #[test]
    fn derivative_closed_form_examples() {
        // j=1 at |a|^2=1, m=1: 1/(2 sqrt 2).
        assert_relative_eq!(
            freq_derivative(1, mass(1.0), 1),
            1.0 / (2.0 * 2f64.sqrt()),
            max_relative = 1e-15
        );
        // j=2: -1/(4 * 2^(3/2)).
        assert_relative_eq!(
            freq_derivative(1, mass(1.0), 2),
            -1.0 / (4.0 * 2f64.powf(1.5)),
            max_relative = 1e-15
        );
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let h = 1e-5;
        for n2 in [1i64, 2, 4, 9] {
            for m0 in [1.2, 1.5, 1.8] {
                // j = 1: central difference of lambda.
                let f = |m: f64| ((n2 * n2) as f64 + m).sqrt();
                let fd1 = (f(m0 + h) - f(m0 - h)) / (2.0 * h);
                assert_relative_eq!(
                    freq_derivative(n2, mass(m0), 1),
                    fd1,
                    max_relative = 1e-6
                );
                // j = 2, 3: central differences of the (j-1)-th derivative.
                for j in 2..=3u32 {
                    let g = |m: f64| freq_derivative(n2, mass(m).clone(), j - 1);
                    let fd = (g(m0 + h) - g(m0 - h)) / (2.0 * h);
                    assert_relative_eq!(
                        freq_derivative(n2, mass(m0), j),
                        fd,
                        max_relative = 1e-6
                    );
                }
            }
        }
    }

    #[test]
    fn determinant_matches_vandermonde_factorization() {
        let pools: Vec<Vec<LatticeVector>> = vec![
            vec![lv(&[1, 0])],
            vec![lv(&[1, 0]), lv(&[1, 1])],
            vec![lv(&[1, 0]), lv(&[1, 1]), lv(&[2, 0])],
            vec![lv(&[1, 0]), lv(&[1, 1]), lv(&[2, 0]), lv(&[2, 1])],
        ];
        for points in pools {
            for m0 in [1.0, 1.37, 2.0] {
                let d = derivative_determinant(&points, mass(m0));
                let v = vandermonde_factorization(&points, mass(m0));
                assert_relative_eq!(d, v, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn p1_determinant_is_half_inverse_omega() {
        let a = lv(&[1, 1]);
        let m = mass(1.5);
        let d = derivative_determinant(std::slice::from_ref(&a), m);
        assert_relative_eq!(d, 0.5 / eigenfrequency(&a, m), max_relative = 1e-14);
        assert!(d > 0.0);
    }

    #[test]
    fn trivial_resonance_cases() {
        let set = ModeSet::new(vec![lv(&[0, 1]), lv(&[1, -1])]).unwrap();
        let m = mass(1.5);
        // D2minus, k=0, |a|=|b|, a != b: formally zero.
        let dv = Divisor {
            kind: DivisorKind::D2Minus,
            k: vec![0, 0],
            a: Some(lv(&[1, 0])),
            b: Some(lv(&[0, -1])),
        };
        let v = divisor_eval(&dv, &set, m).unwrap();
        assert!(v.trivial_resonance);
        assert_relative_eq!(v.value, 0.0);

        // D1 with k = -e_b, a in L_f on the sphere of b.
        let dv = Divisor {
            kind: DivisorKind::D1,
            k: vec![-1, 0],
            a: Some(lv(&[0, -1])),
            b: None,
        };
        let v = divisor_eval(&dv, &set, m).unwrap();
        assert!(v.trivial_resonance);
        assert_relative_eq!(v.value, 0.0);

        // D2minus with distinct norms: non-resonant, |value| >= 1/4.
        let dv = Divisor {
            kind: DivisorKind::D2Minus,
            k: vec![0, 0],
            a: Some(lv(&[1, 1])),
            b: Some(lv(&[0, -1])),
        };
        let v = divisor_eval(&dv, &set, m).unwrap();
        assert!(!v.trivial_resonance);
        assert!(v.value.abs() >= 0.25);
    }

    /// |lambda_a - lambda_b| >= 1/4 whenever |a| != |b| (exhaustive over
    /// squared norms up to 30^2 and a 5-point mass grid).
    #[test]
    fn small_divisor_floor_exhaustive() {
        for m0 in [1.0, 1.25, 1.5, 1.75, 2.0] {
            let m = mass(m0);
            let lams: Vec<f64> = (0..=900).map(|n2| lambda_from_norm2(n2, m)).collect();
            for s1 in 0..=900usize {
                for s2 in s1 + 1..=900 {
                    assert!(
                        (lams[s1] - lams[s2]).abs() >= 0.25,
                        "floor violated at {s1},{s2},m={m0}"
                    );
                }
            }
        }
    }

    #[test]
    fn divisor_eval_agrees_with_formal_sum_oracle() {
        // Oracle: expand the divisor into a signed list of squared norms and
        // cancel; compare against divisor_eval's flag, over the K,N <= 3 box.
        let set = ModeSet::new(vec![lv(&[1]), lv(&[2])]).unwrap();
        let m = mass(1.3);
        scan_divisors(&set, m, 3, 3, |dv, val| {
            let mut terms: Vec<(i64, i64)> = Vec::new();
            for (ka, p) in dv.k.iter().zip(set.points()) {
                for _ in 0..ka.abs() {
                    terms.push((p.norm2(), ka.signum()));
                }
            }
            if let Some(a) = &dv.a {
                terms.push((a.norm2(), 1));
            }
            if let Some(b) = &dv.b {
                let s = if dv.kind == DivisorKind::D2Plus { 1 } else { -1 };
                terms.push((b.norm2(), s));
            }
            let mut acc: BTreeMap<i64, i64> = BTreeMap::new();
            for (n2, s) in terms {
                *acc.entry(n2).or_insert(0) += s;
            }
            acc.retain(|_, v| *v != 0);
            assert_eq!(acc.is_empty(), val.trivial_resonance, "divisor {dv}");
        })
        .unwrap();
    }

    #[test]
    fn scan_monotone_in_k_and_never_zero() {
        let set = ModeSet::new(vec![lv(&[0, 1]), lv(&[1, -1])]).unwrap();
        let m = mass(1.5);
        let r3 = min_divisor_scan(&set, m, 3, 3).unwrap();
        let r5 = min_divisor_scan(&set, m, 5, 3).unwrap();
        assert!(r3.min_abs > 0.0);
        assert!(r5.min_abs <= r3.min_abs);
    }

    #[test]
    fn exclusion_fraction_monotone_in_kappa() {
        let set = ModeSet::new(vec![lv(&[1])]).unwrap();
        let f0 = mass_exclusion_estimate(&set, 0.0, 3, 3, 200, 0).unwrap();
        let f1 = mass_exclusion_estimate(&set, 1e-3, 3, 3, 200, 0).unwrap();
        let f2 = mass_exclusion_estimate(&set, 1e-1, 3, 3, 200, 0).unwrap();
        assert_eq!(f0, 0.0);
        assert!(f0 <= f1 && f1 <= f2);
        assert!(f1 < 0.5, "kappa = 1e-3 should exclude only a small fraction");
    }
}
