//! Assembly of the normal-form data: the dressed tangential frequencies
//! Omega(rho) with their invertible matrix M, the external frequencies
//! Lambda_a(rho), and the symmetric coupling matrix K(rho) on the resonant
//! modes L_f, in 2x2 block layout.
//!
//! K is assembled in the complex (xi, eta) block convention: diagonal blocks
//! [[0, mu], [mu, 0]], plus-pair blocks c*I, minus-pair blocks c*antidiag,
//! all entries real. `to_real_pq` converts to the real (p, q) convention
//! (diagonal mu*I, plus c*diag(1,-1), minus c*I) used by the dynamics
//! module; both give the same JK spectrum. The quadratic form <K z, z>
//! doubles cross entries, so the xi_a eta_a coefficient of mode a is
//! 2 mu(a, rho).
//!
//! nu enters only Omega and the overall scale of the K term; K itself is
//! returned nu-free.

use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

use crate::frequencies::{eigenfrequency, lambda_from_norm2, Mass};
use crate::lattice::{LatticeVector, ModeSet, ResonanceGeometry};

#[derive(Debug, Error, PartialEq)]
pub enum NormalFormError {
    #[error("rho has {0} components, expected {1}")]
    BadRhoLength(usize, usize),
    #[error("rho component {0} = {1} outside [0, 1]")]
    RhoOutOfRange(usize, f64),
    #[error("frequency matrix M is singular (|det| = {0:e}); arithmetic bug")]
    SingularM(f64),
    #[error("point {0:?} is excited or resonant; Lambda_a is defined on L \\ L_f")]
    NotExternal(Vec<i64>),
}

fn check_rho(rho: &[f64], n: usize) -> Result<(), NormalFormError> {
    if rho.len() != n {
        return Err(NormalFormError::BadRhoLength(rho.len(), n));
    }
    for (i, &r) in rho.iter().enumerate() {
        if !(0.0..=1.0).contains(&r) {
            return Err(NormalFormError::RhoOutOfRange(i, r));
        }
    }
    Ok(())
}

/// C_* = 3 (2 pi)^-d.
pub fn c_star(d: usize) -> f64 {
    3.0 * (2.0 * std::f64::consts::PI).powi(-(d as i32))
}

#[derive(Debug, Clone, Serialize)]
pub struct OmegaData {
    pub omega: Vec<f64>,
    /// M^l_k = 3 (4 - 3 delta_{lk}) / ((2pi)^d lambda_k lambda_l), row k.
    #[serde(skip)]
    pub m_matrix: DMatrix<f64>,
    pub det_m: f64,
}

/// Omega_k = omega_k + nu sum_l M^l_k rho_l. The determinant of the integer
/// factor (4 - 3 delta) is (4n - 3)(-3)^(n-1), never zero.
pub fn assemble_omega(
    set: &ModeSet,
    m: Mass,
    rho: &[f64],
    nu: f64,
) -> Result<OmegaData, NormalFormError> {
    let n = set.n();
    check_rho(rho, n)?;
    let d = set.dim();
    let lam: Vec<f64> = set.points().iter().map(|a| eigenfrequency(a, m)).collect();
    let cst = c_star(d);
    let m_matrix = DMatrix::from_fn(n, n, |k, l| {
        let delta = if k == l { 1.0 } else { 0.0 };
        cst * (4.0 - 3.0 * delta) / (lam[k] * lam[l])
    });
    let det_m = m_matrix.determinant();
    if det_m == 0.0 || !det_m.is_finite() {
        return Err(NormalFormError::SingularM(det_m.abs()));
    }
    let omega: Vec<f64> = (0..n)
        .map(|k| {
            lam[k]
                + nu * (0..n)
                    .map(|l| m_matrix[(k, l)] * rho[l])
                    .sum::<f64>()
        })
        .collect();
    Ok(OmegaData {
        omega,
        m_matrix,
        det_m,
    })
}

/// Integer factor determinant det(4 - 3 delta)_{n x n} = (4n - 3)(-3)^(n-1).
pub fn integer_factor_det(n: usize) -> i64 {
    (4 * n as i64 - 3) * (-3i64).pow(n as u32 - 1)
}

/// Lambda_a = lambda_a + 6 nu (2pi)^-d sum_l rho_l / (lambda_l lambda_a),
/// defined for external modes a in L \ L_f.
pub fn assemble_lambda(
    set: &ModeSet,
    m: Mass,
    rho: &[f64],
    nu: f64,
    a: &LatticeVector,
) -> Result<f64, NormalFormError> {
    check_rho(rho, set.n())?;
    if set.contains(a) || set.points().iter().any(|p| p.norm2() == a.norm2()) {
        return Err(NormalFormError::NotExternal(a.coords().to_vec()));
    }
    let d = set.dim();
    let lam_a = eigenfrequency(a, m);
    let c = 2.0 * c_star(d); // 6 (2pi)^-d
    let shift: f64 = set
        .points()
        .iter()
        .zip(rho)
        .map(|(l, &r)| r / (eigenfrequency(l, m) * lam_a))
        .sum();
    Ok(lam_a + nu * c * shift)
}

/// mu(a, rho) = C_* ( (3/2) rho_{l(a)} lambda_a^-2
///                    - lambda_a^-1 sum_l rho_l lambda_l^-1 ),
/// a function of |a| and rho only.
pub fn mu(geom: &ResonanceGeometry, m: Mass, rho: &[f64], idx: usize) -> f64 {
    let set = &geom.mode_set;
    let d = set.dim();
    let lam_a = lambda_from_norm2(geom.lambda_f[idx].norm2(), m);
    let rho_ell = rho[geom.ell[idx]];
    let sum: f64 = set
        .points()
        .iter()
        .zip(rho)
        .map(|(l, &r)| r / eigenfrequency(l, m))
        .sum();
    c_star(d) * (1.5 * rho_ell / (lam_a * lam_a) - sum / lam_a)
}

/// The assembled coupling matrix over L_f with its geometry.
#[derive(Debug, Clone)]
pub struct KMatrix {
    /// 2N x 2N real symmetric matrix, (xi, eta) block layout:
    /// row/col 2i is xi of lambda_f[i], 2i+1 is eta.
    pub xi_eta: DMatrix<f64>,
    pub geometry: ResonanceGeometry,
    pub m: Mass,
    pub rho: Vec<f64>,
}

impl KMatrix {
    pub fn n_modes(&self) -> usize {
        self.geometry.lambda_f.len()
    }

    /// Convert to the real (p, q) convention through xi = (p - i q)/sqrt 2,
    /// eta = (p + i q)/sqrt 2.
    pub fn to_real_pq(&self) -> DMatrix<f64> {
        let n = self.n_modes();
        let mut k = DMatrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            let mu_i = self.xi_eta[(2 * i, 2 * i + 1)];
            k[(2 * i, 2 * i)] = mu_i;
            k[(2 * i + 1, 2 * i + 1)] = mu_i;
            for j in 0..n {
                if i == j {
                    continue;
                }
                // plus block c*I -> c*diag(1,-1); minus c*antidiag -> c*I.
                let c_plus = self.xi_eta[(2 * i, 2 * j)];
                let c_minus = self.xi_eta[(2 * i, 2 * j + 1)];
                k[(2 * i, 2 * j)] = c_plus + c_minus;
                k[(2 * i + 1, 2 * j + 1)] = -c_plus + c_minus;
            }
        }
        k
    }

    /// Index set (into the 2N grid) of an equivalence class.
    pub fn class_indices(&self, class: usize) -> Vec<usize> {
        self.geometry.classes[class]
            .iter()
            .flat_map(|&i| [2 * i, 2 * i + 1])
            .collect()
    }

    /// The 2n_j x 2n_j sub-block of a class, (xi, eta) convention.
    pub fn class_block(&self, class: usize) -> DMatrix<f64> {
        let idx = self.class_indices(class);
        DMatrix::from_fn(idx.len(), idx.len(), |r, c| self.xi_eta[(idx[r], idx[c])])
    }
}

/// Assemble K(rho): diagonal blocks [[0, mu],[mu, 0]]; off-diagonal block
/// (a, b) equal to C_* sqrt(rho_{l(a)} rho_{l(b)}) / (lambda_a lambda_b)
/// times I on plus pairs and antidiag on minus pairs.
pub fn assemble_k(
    geom: &ResonanceGeometry,
    m: Mass,
    rho: &[f64],
) -> Result<KMatrix, NormalFormError> {
    check_rho(rho, geom.mode_set.n())?;
    let n = geom.lambda_f.len();
    let d = geom.mode_set.dim();
    let cst = c_star(d);
    let lam: Vec<f64> = geom
        .lambda_f
        .iter()
        .map(|b| lambda_from_norm2(b.norm2(), m))
        .collect();
    let mut k = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        let mu_i = mu(geom, m, rho, i);
        k[(2 * i, 2 * i + 1)] = mu_i;
        k[(2 * i + 1, 2 * i)] = mu_i;
    }
    let coupling = |i: usize, j: usize| {
        cst * (rho[geom.ell[i]] * rho[geom.ell[j]]).sqrt() / (lam[i] * lam[j])
    };
    for &(i, j) in &geom.plus_pairs {
        let c = coupling(i, j);
        k[(2 * i, 2 * j)] = c;
        k[(2 * i + 1, 2 * j + 1)] = c;
    }
    for &(i, j) in &geom.minus_pairs {
        let c = coupling(i, j);
        k[(2 * i, 2 * j + 1)] = c;
        k[(2 * i + 1, 2 * j)] = c;
    }
    debug_assert_eq!(k, k.transpose());
    Ok(KMatrix {
        xi_eta: k,
        geometry: geom.clone(),
        m,
        rho: rho.to_vec(),
    })
}

/// Full normal-form data for serialization.
#[derive(Debug, Clone, Serialize)]
pub struct NormalFormData {
    pub omega: Vec<f64>,
    pub det_m: f64,
    pub m_matrix_rows: Vec<Vec<f64>>,
    /// Lambda_a on the external modes with |a| <= lambda_cutoff.
    pub big_lambda: Vec<(Vec<i64>, f64)>,
    /// Row-major K in the (xi, eta) convention with block index labels.
    pub k_labels: Vec<String>,
    pub k_rows: Vec<Vec<f64>>,
    pub mu_values: Vec<f64>,
    pub rho: Vec<f64>,
    pub nu: f64,
    pub mass: f64,
}

pub fn assemble_all(
    geom: &ResonanceGeometry,
    m: Mass,
    rho: &[f64],
    nu: f64,
    lambda_cutoff: i64,
) -> Result<NormalFormData, NormalFormError> {
    let set = &geom.mode_set;
    let omega = assemble_omega(set, m, rho, nu)?;
    let k = assemble_k(geom, m, rho)?;
    let mut big_lambda = Vec::new();
    for a in crate::lattice::ball_points(set.dim(), lambda_cutoff * lambda_cutoff) {
        if let Ok(v) = assemble_lambda(set, m, rho, nu, &a) {
            big_lambda.push((a.coords().to_vec(), v));
        }
    }
    let labels: Vec<String> = geom
        .lambda_f
        .iter()
        .flat_map(|b| {
            [
                format!("xi{:?}", b.coords()),
                format!("eta{:?}", b.coords()),
            ]
        })
        .collect();
    let k_rows: Vec<Vec<f64>> = (0..k.xi_eta.nrows())
        .map(|r| k.xi_eta.row(r).iter().copied().collect())
        .collect();
    let mu_values: Vec<f64> = (0..geom.lambda_f.len())
        .map(|i| mu(geom, m, rho, i))
        .collect();
    Ok(NormalFormData {
        omega: omega.omega,
        det_m: omega.det_m,
        m_matrix_rows: (0..set.n())
            .map(|r| omega.m_matrix.row(r).iter().copied().collect())
            .collect(),
        big_lambda,
        k_labels: labels,
        k_rows,
        mu_values,
        rho: rho.to_vec(),
        nu,
        mass: m.value(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{lv, resonance_geometry};
    use approx::assert_relative_eq;

    fn mass(m: f64) -> Mass {
        Mass::new(m).unwrap()
    }

    fn appendix_2d() -> ResonanceGeometry {
        let set = ModeSet::new(vec![lv(&[0, 1]), lv(&[1, -1])]).unwrap();
        resonance_geometry(&set).unwrap()
    }

    #[test]
    fn omega_reduces_to_frequencies_at_nu_zero() {
        let set = ModeSet::new(vec![lv(&[0, 1]), lv(&[1, -1])]).unwrap();
        let m = mass(1.5);
        let data = assemble_omega(&set, m, &[0.5, 0.5], 0.0).unwrap();
        assert_relative_eq!(data.omega[0], 2.5f64.sqrt());
        assert_relative_eq!(data.omega[1], 5.5f64.sqrt());
    }

    #[test]
    fn m_matrix_examples() {
        // n = 1: M = 3 / ((2pi)^d lambda^2).
        let set = ModeSet::new(vec![lv(&[1])]).unwrap();
        let data = assemble_omega(&set, mass(1.0), &[1.0], 0.0).unwrap();
        assert_relative_eq!(
            data.m_matrix[(0, 0)],
            3.0 / (2.0 * std::f64::consts::PI * 2.0),
            max_relative = 1e-14
        );
        assert_eq!(integer_factor_det(1), 1);
        assert_eq!(integer_factor_det(2), -15);

        // n = 2: det M = 3^n (2pi)^{-dn} (prod lambda_k)^{-2} det(4-3delta).
        let set2 = ModeSet::new(vec![lv(&[0, 1]), lv(&[1, -1])]).unwrap();
        let data2 = assemble_omega(&set2, mass(1.5), &[0.5, 0.5], 0.01).unwrap();
        let lam_prod_sq = 2.5 * 5.5;
        let closed =
            9.0 * (2.0 * std::f64::consts::PI).powi(-4) * (-15.0) / lam_prod_sq;
        assert_relative_eq!(data2.det_m, closed, max_relative = 1e-12);
    }

    #[test]
    fn lambda_external_examples() {
        let set = ModeSet::new(vec![lv(&[1])]).unwrap();
        let m = mass(1.0);
        // nu = 0 leaves lambda_a.
        assert_relative_eq!(
            assemble_lambda(&set, m, &[1.0], 0.0, &lv(&[2])).unwrap(),
            17f64.sqrt()
        );
        // d=1, A={1}, a=2, rho=1, nu=0.01:
        // lambda_a + 0.06 / (2pi sqrt2 sqrt17).
        let got = assemble_lambda(&set, m, &[1.0], 0.01, &lv(&[2])).unwrap();
        let expect = 17f64.sqrt()
            + 0.06 / (2.0 * std::f64::consts::PI * 2f64.sqrt() * 17f64.sqrt());
        assert_relative_eq!(got, expect, max_relative = 1e-14);
        // Rejections: excited or resonant points.
        assert!(assemble_lambda(&set, m, &[1.0], 0.0, &lv(&[1])).is_err());
        assert!(assemble_lambda(&set, m, &[1.0], 0.0, &lv(&[-1])).is_err());
    }

    #[test]
    fn lambda_shift_decays_like_inverse_bracket_squared() {
        let set = ModeSet::new(vec![lv(&[1])]).unwrap();
        let m = mass(1.5);
        let nu = 0.01;
        let mut bound: f64 = 0.0;
        for a in crate::lattice::ball_points(1, 900) {
            if let Ok(lam_big) = assemble_lambda(&set, m, &[1.0], nu, &a) {
                let shift = (lam_big - eigenfrequency(&a, m)).abs();
                bound = bound.max(shift * a.bracket2() as f64);
            }
        }
        // |Lambda_a - lambda_a| <a>^2 stays uniformly bounded by C nu.
        assert!(bound <= 10.0 * nu, "decay bound {bound} too large");
    }

    #[test]
    fn k_matches_appendix_beta_and_alpha() {
        let geom = appendix_2d();
        let m = mass(1.5);
        let rho = [0.5, 0.5];
        let k = assemble_k(&geom, m, &rho).unwrap();
        let (l1, l2) = (2.5f64.sqrt(), 5.5f64.sqrt());
        let pre = 3.0 / (4.0 * std::f64::consts::PI * std::f64::consts::PI);
        let beta = pre / l1 * (rho[0] / l1 - 2.0 * rho[1] / l2);
        let i = geom
            .lambda_f
            .iter()
            .position(|p| p == &lv(&[0, -1]))
            .unwrap();
        // Quadratic-form coefficient of xi eta = 2 mu = beta.
        assert_relative_eq!(2.0 * mu(&geom, m, &rho, i), beta, max_relative = 1e-12);
        assert_relative_eq!(
            2.0 * k.xi_eta[(2 * i, 2 * i + 1)],
            beta,
            max_relative = 1e-12
        );
        // alpha on the coupled pair.
        let j = geom.lambda_f.iter().position(|p| p == &lv(&[1, 1])).unwrap();
        let alpha = 2.0 * pre * (rho[0] * rho[1]).sqrt() / (l1 * l2);
        assert_relative_eq!(2.0 * k.xi_eta[(2 * i, 2 * j)], alpha, max_relative = 1e-12);
    }

    #[test]
    fn k_symmetric_with_exact_coupling_support() {
        let geom = appendix_2d();
        let k = assemble_k(&geom, mass(1.3), &[0.7, 0.2]).unwrap();
        assert_eq!(k.xi_eta, k.xi_eta.transpose());
        let n = k.n_modes();
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let block_nonzero = k.xi_eta[(2 * i, 2 * j)] != 0.0
                    || k.xi_eta[(2 * i, 2 * j + 1)] != 0.0
                    || k.xi_eta[(2 * i + 1, 2 * j)] != 0.0
                    || k.xi_eta[(2 * i + 1, 2 * j + 1)] != 0.0;
                let coupled = geom.is_plus_pair(i, j) || geom.is_minus_pair(i, j);
                assert_eq!(block_nonzero, coupled, "support mismatch at ({i},{j})");
            }
        }
    }

    #[test]
    fn k_zero_at_rho_zero_and_sqrt_rho_scaling() {
        let geom = appendix_2d();
        let m = mass(1.5);
        let k0 = assemble_k(&geom, m, &[0.0, 0.0]).unwrap();
        assert_eq!(k0.xi_eta.amax(), 0.0);
        // Off-diagonal blocks scale as sqrt(rho_l(a) rho_l(b)):
        // scaling rho by 4 quadruples them.
        let ka = assemble_k(&geom, m, &[0.25, 0.2]).unwrap();
        let kb = assemble_k(&geom, m, &[1.0, 0.8]).unwrap();
        let (i, j) = geom.plus_pairs[0];
        assert_relative_eq!(
            kb.xi_eta[(2 * i, 2 * j)],
            4.0 * ka.xi_eta[(2 * i, 2 * j)],
            max_relative = 1e-13
        );
    }

    #[test]
    fn mu_depends_only_on_norm() {
        let geom = appendix_2d();
        let m = mass(1.7);
        let rho = [0.4, 0.9];
        for i in 0..geom.lambda_f.len() {
            for j in 0..geom.lambda_f.len() {
                if geom.lambda_f[i].norm2() == geom.lambda_f[j].norm2() {
                    assert_relative_eq!(
                        mu(&geom, m, &rho, i),
                        mu(&geom, m, &rho, j),
                        max_relative = 1e-15
                    );
                }
            }
        }
    }

    #[test]
    fn d1_k_is_block_diagonal() {
        let set = ModeSet::new(vec![lv(&[1]), lv(&[2])]).unwrap();
        let geom = resonance_geometry(&set).unwrap();
        let k = assemble_k(&geom, mass(1.5), &[0.5, 0.5]).unwrap();
        let n = k.n_modes();
        for i in 0..2 * n {
            for j in 0..2 * n {
                if i / 2 != j / 2 {
                    assert_eq!(k.xi_eta[(i, j)], 0.0);
                }
            }
        }
    }

    /// The coupling blocks of K are exactly the z4^{-2} coefficients of the
    /// Birkhoff step, after substituting the excited modes by their actions
    /// (the quadratic form doubles matrix entries).
    #[test]
    fn k_couplings_match_hamalg_z4_minus2() {
        use crate::hamalg::{universe, verify_normal_form, Monomial, VarKind};
        let geom = appendix_2d();
        let m = mass(1.5);
        let rho = [0.5, 0.5];
        let u = universe(2, 2);
        let check = verify_normal_form(&u, &geom.mode_set);
        let z4m2 = check.z4_minus2.to_numeric(m, 2).unwrap();
        let k = assemble_k(&geom, m, &rho).unwrap();
        for &(i, j) in &geom.plus_pairs {
            let (a, b) = (&geom.lambda_f[i], &geom.lambda_f[j]);
            let mono = Monomial::new(vec![
                (geom.ell_point(i).clone(), VarKind::Xi),
                (geom.ell_point(j).clone(), VarKind::Xi),
                (a.clone(), VarKind::Eta),
                (b.clone(), VarKind::Eta),
            ]);
            let c = z4m2.coeff(&mono).expect("coupled monomial present");
            // xi_l(a) xi_l(b) -> sqrt(rho_a rho_b) after the action-angle
            // substitution at r = 0 and the phase-removing change; the
            // eta_a eta_b quadratic-form coefficient doubles the K entry.
            let form_coeff = c.re * (rho[geom.ell[i]] * rho[geom.ell[j]]).sqrt();
            assert_relative_eq!(
                form_coeff,
                2.0 * k.xi_eta[(2 * i, 2 * j)],
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn rho_validation() {
        let set = ModeSet::new(vec![lv(&[1])]).unwrap();
        assert!(matches!(
            assemble_omega(&set, mass(1.0), &[1.5], 0.0),
            Err(NormalFormError::RhoOutOfRange(0, _))
        ));
        assert!(matches!(
            assemble_omega(&set, mass(1.0), &[0.5, 0.5], 0.0),
            Err(NormalFormError::BadRhoLength(2, 1))
        ));
    }
}
