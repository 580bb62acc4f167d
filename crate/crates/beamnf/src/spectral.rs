//! Spectral analysis of the Hamiltonian operator H(rho) = i J K(rho):
//! block splitting along the equivalence classes, eigenvalue classification
//! (elliptic / hyperbolic / complex quadruple), symplectic diagonalization
//! with the conjugate-reality normalization, and second-order eigenvalue
//! perturbation coefficients around the corner points rho* = e_{j*}.
//!
//! Spectra are written as { +- i Lambda }: the Lambda are the eigenvalues of
//! the real matrix JK. Lambda real means an elliptic pair, Lambda purely
//! imaginary a hyperbolic real pair of H-eigenvalues, anything else belongs
//! to a complex quadruple { +- i Lambda, +- i conj(Lambda) }.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::frequencies::Mass;
use crate::lattice::{LatticeVector, ResonanceGeometry};
use crate::normalform::{c_star, mu, KMatrix};

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("K is not symmetric (max asymmetry {0:e})")]
    AsymmetricK(f64),
    #[error("H couples modes across equivalence classes (entry {0:e})")]
    OffBlockCoupling(f64),
    #[error("near-degenerate block spectrum: gap {gap:e} <= tol {tol:e}")]
    NearDegenerate { gap: f64, tol: f64 },
    #[error("eigensolver failure: {0}")]
    EigensolverFailure(String),
    #[error("vanishing denominator mu({a:?}) {sign} mu({b:?}) = {value:e}")]
    VanishingDenominator {
        a: Vec<i64>,
        b: Vec<i64>,
        sign: char,
        value: f64,
    },
    #[error("invalid perturbation direction: {0}")]
    BadDirection(String),
}

/// H = i J K over L_f, carried together with its real generator JK and the
/// invariant class blocks.
#[derive(Debug, Clone)]
pub struct HamiltonianOperator {
    pub k: KMatrix,
    /// JK in the (xi, eta) convention; H = i * this matrix.
    pub jk: DMatrix<f64>,
}

/// J in the per-mode (xi, eta) block convention.
fn apply_j(k: &DMatrix<f64>) -> DMatrix<f64> {
    let n = k.nrows();
    let mut jk = DMatrix::zeros(n, n);
    for i in (0..n).step_by(2) {
        for c in 0..n {
            jk[(i, c)] = k[(i + 1, c)];
            jk[(i + 1, c)] = -k[(i, c)];
        }
    }
    jk
}

/// i J as a complex matrix of the same size.
fn i_j_matrix(n: usize) -> DMatrix<Complex64> {
    let mut m = DMatrix::zeros(n, n);
    for i in (0..n).step_by(2) {
        m[(i, i + 1)] = Complex64::new(0.0, 1.0);
        m[(i + 1, i)] = Complex64::new(0.0, -1.0);
    }
    m
}

/// Build H(rho) = i J K(rho), verifying symmetry and that every equivalence
/// class spans an invariant subspace (off-class entries vanish).
pub fn build_h(k: &KMatrix) -> Result<HamiltonianOperator, SpectralError> {
    let asym = (&k.xi_eta - k.xi_eta.transpose()).amax();
    if asym > 0.0 {
        return Err(SpectralError::AsymmetricK(asym));
    }
    let jk = apply_j(&k.xi_eta);
    // Class membership per mode index.
    let n_modes = k.n_modes();
    let mut class_of = vec![usize::MAX; n_modes];
    for (c, class) in k.geometry.classes.iter().enumerate() {
        for &i in class {
            class_of[i] = c;
        }
    }
    for i in 0..n_modes {
        for j in 0..n_modes {
            if class_of[i] != class_of[j] {
                for (r, c) in [(2 * i, 2 * j), (2 * i, 2 * j + 1), (2 * i + 1, 2 * j)] {
                    if jk[(r, c)] != 0.0 {
                        return Err(SpectralError::OffBlockCoupling(jk[(r, c)].abs()));
                    }
                }
            }
        }
    }
    Ok(HamiltonianOperator {
        k: k.clone(),
        jk,
    })
}

impl HamiltonianOperator {
    pub fn h_matrix(&self) -> DMatrix<Complex64> {
        self.jk.map(|v| Complex64::new(0.0, v))
    }

    pub fn n_classes(&self) -> usize {
        self.k.geometry.classes.len()
    }

    /// The real JK sub-block of one equivalence class.
    pub fn jk_block(&self, class: usize) -> DMatrix<f64> {
        let idx = self.k.class_indices(class);
        DMatrix::from_fn(idx.len(), idx.len(), |r, c| self.jk[(idx[r], idx[c])])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockClass {
    Elliptic,
    HyperbolicRealPair,
    ComplexQuadruple,
    Degenerate,
}

#[derive(Debug, Clone, Serialize)]
pub struct BlockSpectrum {
    pub class_index: usize,
    pub members: Vec<Vec<i64>>,
    /// One Lambda per +- pair (eigenvalues of JK).
    pub lambdas: Vec<(f64, f64)>,
    pub classification: BlockClass,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumReport {
    pub blocks: Vec<BlockSpectrum>,
    pub stable: bool,
    pub tol: f64,
}

/// Pair the spectrum { +-Lambda } of one block: returns one representative
/// per pair. Representatives are chosen with nonnegative real part (then
/// nonnegative imaginary part), except that singleton classes report
/// mu(b, rho) with its sign.
fn pair_lambdas(raw: &[Complex64], tol: f64) -> Result<Vec<Complex64>, SpectralError> {
    let mut used = vec![false; raw.len()];
    let mut reps = Vec::new();
    let scale = raw.iter().map(|l| l.norm()).fold(1.0, f64::max);
    for i in 0..raw.len() {
        if used[i] {
            continue;
        }
        used[i] = true;
        let mut best: Option<(usize, f64)> = None;
        for (j, u) in used.iter().enumerate() {
            if !u {
                let gap = (raw[i] + raw[j]).norm();
                if best.as_ref().is_none_or(|(_, g)| gap < *g) {
                    best = Some((j, gap));
                }
            }
        }
        let (j, gap) = best.ok_or_else(|| {
            SpectralError::EigensolverFailure("odd spectrum cannot be paired".into())
        })?;
        if gap > 1e-7 * scale {
            return Err(SpectralError::EigensolverFailure(format!(
                "spectrum not symmetric under negation (gap {gap:e})"
            )));
        }
        used[j] = true;
        let l = raw[i];
        let rep = if l.re > tol * scale || (l.re.abs() <= tol * scale && l.im >= 0.0) {
            l
        } else {
            -l
        };
        reps.push(rep);
    }
    Ok(reps)
}

fn classify_lambda(l: Complex64, tol: f64) -> BlockClass {
    let s = 1.0 + l.norm();
    let real = l.im.abs() <= tol * s;
    let imag = l.re.abs() <= tol * s;
    match (real, imag) {
        (true, true) => BlockClass::Degenerate,
        (true, false) => BlockClass::Elliptic,
        (false, true) => BlockClass::HyperbolicRealPair,
        (false, false) => BlockClass::ComplexQuadruple,
    }
}

/// Classify the spectrum of H block by block. The verdict is stable exactly
/// when every Lambda is real within tol (no hyperbolic content).
pub fn classify_spectrum(
    h: &HamiltonianOperator,
    tol: f64,
) -> Result<SpectrumReport, SpectralError> {
    assert!(tol > 0.0);
    let geom = &h.k.geometry;
    let mut blocks = Vec::new();
    let mut stable = true;
    for (ci, class) in geom.classes.iter().enumerate() {
        let lambdas: Vec<Complex64> = if class.len() == 1 {
            // Singleton: spectrum is { +- i mu(b, rho) }, reported with the
            // sign of mu.
            vec![Complex64::new(mu(geom, h.k.m, &h.k.rho, class[0]), 0.0)]
        } else {
            let block = h.jk_block(ci);
            let raw: Vec<Complex64> = block.complex_eigenvalues().iter().copied().collect();
            pair_lambdas(&raw, tol)?
        };
        let mut classification = BlockClass::Elliptic;
        for &l in &lambdas {
            let c = classify_lambda(l, tol);
            if c != BlockClass::Elliptic {
                stable = false;
            }
            classification = match (classification, c) {
                (BlockClass::Elliptic, c) => c,
                (acc, BlockClass::Elliptic) => acc,
                (BlockClass::Degenerate, c) => c,
                (acc, BlockClass::Degenerate) => acc,
                (BlockClass::ComplexQuadruple, _) | (_, BlockClass::ComplexQuadruple) => {
                    BlockClass::ComplexQuadruple
                }
                (acc, _) => acc,
            };
        }
        blocks.push(BlockSpectrum {
            class_index: ci,
            members: class
                .iter()
                .map(|&i| geom.lambda_f[i].coords().to_vec())
                .collect(),
            lambdas: lambdas.iter().map(|l| (l.re, l.im)).collect(),
            classification,
        });
    }
    Ok(SpectrumReport {
        blocks,
        stable,
        tol,
    })
}

/// Complex eigenvector by inverse iteration at an eigenvalue estimate.
fn eigenvector_for(
    a: &DMatrix<Complex64>,
    lambda: Complex64,
    scale: f64,
) -> Result<DVector<Complex64>, SpectralError> {
    let n = a.nrows();
    for attempt in 0..4 {
        let shift = lambda + Complex64::new(1e-10 * scale * (attempt + 1) as f64, 0.0);
        let shifted = a - DMatrix::from_diagonal_element(n, n, shift);
        let lu = shifted.lu();
        let mut v = DVector::from_fn(n, |i, _| {
            Complex64::new(1.0 + (i as f64 + attempt as f64) * 0.137, 0.211 * (i as f64 + 1.0))
        });
        v /= Complex64::new(v.norm(), 0.0);
        let mut ok = false;
        for _ in 0..8 {
            match lu.solve(&v) {
                Some(w) => {
                    let nrm = w.norm();
                    if !nrm.is_finite() || nrm == 0.0 {
                        break;
                    }
                    v = w / Complex64::new(nrm, 0.0);
                    let residual = (a * &v - &v * lambda).norm();
                    if residual <= 1e-11 * scale.max(1.0) {
                        ok = true;
                        break;
                    }
                }
                None => break,
            }
        }
        if ok {
            return Ok(v);
        }
    }
    Err(SpectralError::EigensolverFailure(format!(
        "inverse iteration failed at lambda = {lambda}"
    )))
}

/// The conjugate-reality involution I(xi, eta) = (conj eta, conj xi),
/// applied per 2-block.
fn involution(z: &DVector<Complex64>) -> DVector<Complex64> {
    let n = z.len();
    DVector::from_fn(n, |i, _| {
        if i % 2 == 0 {
            z[i + 1].conj()
        } else {
            z[i - 1].conj()
        }
    })
}

/// Bilinear pairing  t(z1) (iJ) z2.
fn ij_pairing(z1: &DVector<Complex64>, z2: &DVector<Complex64>) -> Complex64 {
    let ij = i_j_matrix(z1.len());
    (z1.transpose() * ij * z2)[(0, 0)]
}

#[derive(Debug, Clone)]
pub struct SymplecticDiag {
    /// Complex diagonalizer with tU (iJ) U = J.
    pub u: DMatrix<Complex64>,
    /// Eigenvalues of H in column order: (i L_1, -i L_1, i L_2, ...).
    pub diag: Vec<Complex64>,
    /// |det U| of the unit-eigenvector matrix, equal to the product of the
    /// pairing moduli |pi_l|.
    pub det_check: (f64, f64),
    /// Real-form columns (fixed by the involution) built from u per case.
    pub real_columns: DMatrix<Complex64>,
}

/// Symplectically diagonalize one block of H = iJK with simple spectrum:
/// U^-1 H U = i diag(+-Lambda) and tU (iJ) U = J, with the per-case
/// (real / imaginary / quadruple) conjugate-reality normalization.
pub fn symplectic_diagonalize_block(
    jk_block: &DMatrix<f64>,
    tol: f64,
) -> Result<SymplecticDiag, SpectralError> {
    let n = jk_block.nrows();
    let a_c: DMatrix<Complex64> = jk_block.map(|v| Complex64::new(v, 0.0));
    let h: DMatrix<Complex64> = jk_block.map(|v| Complex64::new(0.0, v));
    let scale = jk_block.amax().max(1e-300);
    let raw: Vec<Complex64> = jk_block.complex_eigenvalues().iter().copied().collect();

    // Simplicity: all H-eigenvalues pairwise separated.
    for i in 0..raw.len() {
        for j in i + 1..raw.len() {
            let gap = (raw[i] - raw[j]).norm();
            if gap <= tol * scale {
                return Err(SpectralError::NearDegenerate {
                    gap,
                    tol: tol * scale,
                });
            }
        }
    }

    let mut reps = pair_lambdas(&raw, tol)?;
    // Eigenvectors for +Lambda and -Lambda of JK; H-eigenvalues are i(+-L).
    let mut columns: Vec<DVector<Complex64>> = Vec::with_capacity(n);
    let mut diag: Vec<Complex64> = Vec::with_capacity(n);
    for &l in &reps {
        let zp = eigenvector_for(&a_c, l, scale)?;
        let zm = eigenvector_for(&a_c, -l, scale)?;
        columns.push(zp);
        columns.push(zm);
        diag.push(Complex64::new(0.0, 1.0) * l);
        diag.push(Complex64::new(0.0, -1.0) * l);
    }

    // det |U| = prod |pi_l| on the unit-eigenvector matrix.
    let u_unit = DMatrix::from_columns(&columns.iter().map(|c| c.clone()).collect::<Vec<_>>());
    let det_u = u_unit.clone().lu().determinant().norm();
    let mut prod_pi = 1.0;
    for p in 0..reps.len() {
        prod_pi *= ij_pairing(&columns[2 * p], &columns[2 * p + 1]).norm();
    }

    // Symplectic normalization: make t(z_{2p-1}) (iJ) z_{2p} = 1.
    for p in 0..reps.len() {
        let s = ij_pairing(&columns[2 * p], &columns[2 * p + 1]);
        if s.norm() < 1e-14 {
            return Err(SpectralError::EigensolverFailure(
                "defective symplectic pairing".into(),
            ));
        }
        columns[2 * p + 1] /= s;
    }

    // Conjugate-reality normalization, case by case per pair.
    let mut real_cols: Vec<DVector<Complex64>> = Vec::with_capacity(n);
    let mut p = 0;
    while p < reps.len() {
        let l = reps[p];
        let cls = classify_lambda(l, tol);
        match cls {
            BlockClass::Elliptic | BlockClass::Degenerate => {
                // Lambda real: arrange z2 = i I(z1).
                let w = involution(&columns[2 * p]).map(|c| Complex64::new(0.0, 1.0) * c);
                let alpha = {
                    let s = ij_pairing(&columns[2 * p], &w);
                    s.re
                };
                let (z1, z2) = if alpha > 0.0 {
                    let beta = (1.0 / alpha).sqrt();
                    let z1 = &columns[2 * p] * Complex64::new(beta, 0.0);
                    let z2 = involution(&z1).map(|c| Complex64::new(0.0, 1.0) * c);
                    (z1, z2)
                } else {
                    // Swap the pair roles and retry with -Lambda first.
                    let w2 =
                        involution(&columns[2 * p + 1]).map(|c| Complex64::new(0.0, 1.0) * c);
                    let alpha2 = ij_pairing(&columns[2 * p + 1], &w2).re;
                    if alpha2 <= 0.0 {
                        return Err(SpectralError::EigensolverFailure(
                            "no positive symplectic pairing in the real case".into(),
                        ));
                    }
                    let beta = (1.0 / alpha2).sqrt();
                    let z1 = &columns[2 * p + 1] * Complex64::new(beta, 0.0);
                    let z2 = involution(&z1).map(|c| Complex64::new(0.0, 1.0) * c);
                    diag.swap(2 * p, 2 * p + 1);
                    (z1, z2)
                };
                // p = -(i/sqrt2)(z1 + i z2), q = -(1/sqrt2)(z1 - i z2).
                let i_c = Complex64::new(0.0, 1.0);
                let s2 = Complex64::new(1.0 / 2f64.sqrt(), 0.0);
                real_cols.push((&z1 + &z2 * i_c) * (-i_c) * s2);
                real_cols.push((&z1 - &z2 * i_c) * Complex64::new(-1.0, 0.0) * s2);
                columns[2 * p] = z1;
                columns[2 * p + 1] = z2;
                p += 1;
            }
            BlockClass::HyperbolicRealPair => {
                // Lambda purely imaginary: z1 = alpha I(z1) with unit alpha;
                // scale so that z1 = I(z1) and z2 = I(z2).
                let z1 = columns[2 * p].clone();
                let z2 = columns[2 * p + 1].clone();
                let iz1 = involution(&z1);
                let idx = (0..z1.len())
                    .max_by(|&a, &b| z1[a].norm().total_cmp(&z1[b].norm()))
                    .unwrap();
                let mut alpha = z1[idx] / iz1[idx];
                alpha /= Complex64::new(alpha.norm(), 0.0);
                let gamma = alpha.sqrt();
                let z1n = &z1 * gamma.conj();
                let z2n = &z2 / gamma.conj();
                real_cols.push(z1n.clone());
                real_cols.push(z2n.clone());
                columns[2 * p] = z1n;
                columns[2 * p + 1] = z2n;
                p += 1;
            }
            BlockClass::ComplexQuadruple => {
                // Find the conjugate partner pair q with L_q ~ +- conj(L_p).
                let mut partner = None;
                for q in p + 1..reps.len() {
                    if (reps[q] - l.conj()).norm() <= 1e-6 * (1.0 + l.norm())
                        || (reps[q] + l.conj()).norm() <= 1e-6 * (1.0 + l.norm())
                    {
                        partner = Some(q);
                        break;
                    }
                }
                let q = partner.ok_or_else(|| {
                    SpectralError::EigensolverFailure(
                        "complex eigenvalue without conjugate partner".into(),
                    )
                })?;
                if q != p + 1 {
                    columns.swap(2 * p + 2, 2 * q);
                    columns.swap(2 * p + 3, 2 * q + 1);
                    diag.swap(2 * p + 2, 2 * q);
                    diag.swap(2 * p + 3, 2 * q + 1);
                    reps.swap(p + 1, q);
                }
                // Orient the partner pair so that z3 ~ I(z1), z4 ~ I(z2):
                // I(z1) has H-eigenvalue conj(i L) = -i conj(L).
                let want = Complex64::new(0.0, -1.0) * l.conj();
                if (diag[2 * p + 2] - want).norm() > (diag[2 * p + 3] - want).norm() {
                    columns.swap(2 * p + 2, 2 * p + 3);
                    diag.swap(2 * p + 2, 2 * p + 3);
                }
                // Re-normalize the swapped pair pairing to 1.
                let s = ij_pairing(&columns[2 * p + 2], &columns[2 * p + 3]);
                columns[2 * p + 3] /= s;
                let z1 = columns[2 * p].clone();
                let iz1 = involution(&z1);
                let z3 = columns[2 * p + 2].clone();
                let idx = (0..z3.len())
                    .max_by(|&a, &b| z3[a].norm().total_cmp(&z3[b].norm()))
                    .unwrap();
                let alpha = z3[idx] / iz1[idx];
                let gamma = alpha.sqrt();
                let gc = gamma.conj();
                let z1n = &z1 * gc;
                let z2n = &columns[2 * p + 1] / gc;
                let z3n = involution(&z1n);
                let z4n = involution(&z2n);
                // I-fixed symplectic 4-frame: I(z + I(z)) = z + I(z) and
                // I(i(z - I(z))) = i(z - I(z)); the pairings
                // t(z1 + z3)(iJ)(z2 + z4) = 2 and
                // t(i(z1 - z3))(iJ)(-i(z2 - z4)) = 2 fix the scaling.
                let i_c = Complex64::new(0.0, 1.0);
                let s2 = Complex64::new(1.0 / 2f64.sqrt(), 0.0);
                real_cols.push((&z1n + &z3n) * s2);
                real_cols.push((&z2n + &z4n) * s2);
                real_cols.push((&z1n - &z3n) * i_c * s2);
                real_cols.push((&z2n - &z4n) * (-i_c) * s2);
                columns[2 * p] = z1n;
                columns[2 * p + 1] = z2n;
                columns[2 * p + 2] = z3n;
                columns[2 * p + 3] = z4n;
                p += 2;
            }
        }
    }

    let u = DMatrix::from_columns(&columns);
    // Residual check: U^-1 H U = i diag.
    let u_inv = u
        .clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| SpectralError::EigensolverFailure("U not invertible".into()))?;
    let mut d = DMatrix::zeros(n, n);
    for (i, &l) in diag.iter().enumerate() {
        d[(i, i)] = l;
    }
    let res = (&u_inv * &h * &u - &d).map(|c| c.norm()).max();
    if res > 1e-6 * scale.max(1.0) {
        return Err(SpectralError::EigensolverFailure(format!(
            "diagonalization residual {res:e}"
        )));
    }
    Ok(SymplecticDiag {
        u,
        diag,
        det_check: (det_u, prod_pi),
        real_columns: DMatrix::from_columns(&real_cols),
    })
}

/// Diagonalize every non-singleton block; returns per-class results keyed by
/// class index (singleton blocks are already diagonal).
pub fn symplectic_diagonalize(
    h: &HamiltonianOperator,
    tol: f64,
) -> Result<Vec<(usize, SymplecticDiag)>, SpectralError> {
    let mut out = Vec::new();
    for ci in 0..h.n_classes() {
        let block = h.jk_block(ci);
        out.push((ci, symplectic_diagonalize_block(&block, tol)?));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct PerturbationCoefficients {
    pub k1: f64,
    pub k2: f64,
    /// The tracked eigenvalue at epsilon = 0, i.e. mu(a_1, rho*).
    pub lambda0: f64,
}

/// Second-order expansion Lambda(eps) = Lambda(0) + (1/2) eps^2 (k1 + k2)
/// + O(eps^3) of the block eigenvalue tracked from mu(a_1, rho*), where
/// rho* is the unit vector at j_star and rho_j(eps) = eps^2 x_j^2 off j_star.
///
/// k1 is the second derivative of mu(a_1, rho(eps)). k2 is the coupling
/// term -2 <(M - Lambda)^-1 dM zeta, t(dM) zeta>: the chi+- selector picks
/// the denominator mu(a_j) -+ mu(a_1) per coupled class member, and the
/// whole bracket enters with the factor -2 coming from
/// d(zeta)/d(eps) = -(M - Lambda)^-1 dM zeta and the mixed term of the
/// second derivative (checked against finite differences).
///
/// Requires x[j_star] = 0 and x_j > 0 elsewhere; k2 vanishes on singleton
/// blocks.
pub fn eigen_perturbation(
    geom: &ResonanceGeometry,
    m: Mass,
    j_star: usize,
    x: &[f64],
    class_index: usize,
) -> Result<PerturbationCoefficients, SpectralError> {
    let set = &geom.mode_set;
    let n = set.n();
    if x.len() != n || j_star >= n {
        return Err(SpectralError::BadDirection(format!(
            "direction length {} / j_star {j_star} incompatible with |A| = {n}",
            x.len()
        )));
    }
    if x[j_star] != 0.0 {
        return Err(SpectralError::BadDirection(
            "x[j_star] must vanish".into(),
        ));
    }
    if x.iter().enumerate().any(|(j, &v)| j != j_star && v <= 0.0) {
        return Err(SpectralError::BadDirection(
            "off-corner components must be positive".into(),
        ));
    }
    let d = set.dim();
    let cst = c_star(d);
    let lam: Vec<f64> = set
        .points()
        .iter()
        .map(|a| crate::frequencies::eigenfrequency(a, m))
        .collect();
    let rho_star: Vec<f64> = (0..n).map(|j| if j == j_star { 1.0 } else { 0.0 }).collect();

    let class = &geom.classes[class_index];
    let a1 = class[0];
    let j_sharp = geom.ell[a1];
    let lam_sharp = lam[j_sharp];

    // k1 = C_* lam_sharp^-1 (3 lam_sharp^-1 x_sharp^2 - 2 sum_j x_j^2 / lam_j).
    let sum: f64 = (0..n)
        .filter(|&j| j != j_star)
        .map(|j| x[j] * x[j] / lam[j])
        .sum();
    let k1 = cst / lam_sharp * (3.0 / lam_sharp * x[j_sharp] * x[j_sharp] - 2.0 * sum);

    // k2 over the remaining class members.
    let mu1 = mu(geom, m, &rho_star, a1);
    let mut k2 = 0.0;
    for &aj in &class[1..] {
        let phi = if j_sharp == j_star {
            x[geom.ell[aj]]
        } else if geom.ell[aj] == j_star {
            x[j_sharp]
        } else {
            0.0
        };
        if phi == 0.0 {
            continue;
        }
        let lam_aj = crate::frequencies::lambda_from_norm2(geom.lambda_f[aj].norm2(), m);
        let mu_j = mu(geom, m, &rho_star, aj);
        let mut term = 0.0;
        if geom.is_minus_pair(a1, aj) {
            let den = mu_j - mu1;
            if den.abs() < 1e-12 {
                return Err(SpectralError::VanishingDenominator {
                    a: geom.lambda_f[aj].coords().to_vec(),
                    b: geom.lambda_f[a1].coords().to_vec(),
                    sign: '-',
                    value: den,
                });
            }
            term += 1.0 / den;
        }
        if geom.is_plus_pair(a1, aj) {
            let den = mu_j + mu1;
            if den.abs() < 1e-12 {
                return Err(SpectralError::VanishingDenominator {
                    a: geom.lambda_f[aj].coords().to_vec(),
                    b: geom.lambda_f[a1].coords().to_vec(),
                    sign: '+',
                    value: den,
                });
            }
            term += 1.0 / den;
        }
        k2 += -2.0 * cst * cst / (lam_sharp * lam_sharp) * phi * phi / (lam_aj * lam_aj) * term;
    }
    Ok(PerturbationCoefficients {
        k1,
        k2,
        lambda0: mu1,
    })
}

/// The block eigenvalue at rho(eps) tracked from mu(a_1, rho*): the
/// finite-difference oracle for `eigen_perturbation`.
pub fn tracked_eigenvalue(
    geom: &ResonanceGeometry,
    m: Mass,
    j_star: usize,
    x: &[f64],
    class_index: usize,
    eps: f64,
) -> Result<f64, SpectralError> {
    let n = geom.mode_set.n();
    let rho: Vec<f64> = (0..n)
        .map(|j| {
            if j == j_star {
                1.0
            } else {
                (eps * x[j]).powi(2)
            }
        })
        .collect();
    let rho_star: Vec<f64> = (0..n).map(|j| if j == j_star { 1.0 } else { 0.0 }).collect();
    let target = mu(geom, m, &rho_star, geom.classes[class_index][0]);
    let k = crate::normalform::assemble_k(geom, m, &rho)
        .map_err(|e| SpectralError::EigensolverFailure(e.to_string()))?;
    let h = build_h(&k)?;
    let block = h.jk_block(class_index);
    let eigs = block.complex_eigenvalues();
    let best = eigs
        .iter()
        .min_by(|a, b| (*a - target).norm().total_cmp(&(*b - target).norm()))
        .ok_or_else(|| SpectralError::EigensolverFailure("empty block".into()))?;
    if best.im.abs() > 1e-8 * (1.0 + best.norm()) {
        return Err(SpectralError::EigensolverFailure(format!(
            "tracked eigenvalue left the real axis: {best}"
        )));
    }
    Ok(best.re)
}
