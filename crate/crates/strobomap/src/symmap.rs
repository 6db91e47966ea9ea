//! Reduction of a monodromy matrix to the elliptic-hyperbolic normal form,
//! the discrete-time symplectic eigenbasis, and the effective quadratic
//! Hamiltonian whose time-T flow equals the linearized map.

use nalgebra::{Matrix2, Matrix4, Matrix4x2, Vector2, Vector4};
use serde::Serialize;

use crate::error::{Error, Result};

/// Symplectic structure matrix for the physical ordering (x, y, px, py).
pub fn j_phys() -> Matrix4<f64> {
    Matrix4::new(
        0.0, 0.0, 1.0, 0.0, //
        0.0, 0.0, 0.0, 1.0, //
        -1.0, 0.0, 0.0, 0.0, //
        0.0, -1.0, 0.0, 0.0,
    )
}

/// Symplectic structure matrix for the local ordering (q1, p1, q2, p2).
pub fn j_canon() -> Matrix4<f64> {
    Matrix4::new(
        0.0, 1.0, 0.0, 0.0, //
        -1.0, 0.0, 0.0, 0.0, //
        0.0, 0.0, 0.0, 1.0, //
        0.0, 0.0, -1.0, 0.0,
    )
}

/// ||M^T J M - J||_F / ||M||_F^2 — the scaled symplecticity defect with
/// respect to the physical form.
pub fn symplecticity_residual(m: &Matrix4<f64>) -> f64 {
    symplecticity_residual_wrt(m, &j_phys())
}

fn symplecticity_residual_wrt(m: &Matrix4<f64>, j: &Matrix4<f64>) -> f64 {
    (m.transpose() * j * m - j).norm() / m.norm().powi(2)
}

#[derive(Debug, Clone, Serialize)]
pub struct NormalForm {
    /// Real multiplier > 1.
    pub sigma: f64,
    /// Rotation angle: principal argument of the unit-circle eigenvalue,
    /// in (0, pi). The orientation of the actual rotation relative to a
    /// canonically paired center basis is carried by `MapEigenbasis`.
    pub psi: f64,
    /// Block-diagonal Lambda built from (sigma, psi) with the +sin psi
    /// convention.
    #[serde(skip)]
    pub lambda_matrix: Matrix4<f64>,
}

impl NormalForm {
    pub fn from_parts(sigma: f64, psi: f64) -> Self {
        Self { sigma, psi, lambda_matrix: lambda_of(sigma, psi, 1.0) }
    }
}

/// Lambda with center rotation block [[cos, e*sin], [-e*sin, cos]] for
/// orientation e = +-1.
pub fn lambda_of(sigma: f64, psi: f64, orientation: f64) -> Matrix4<f64> {
    let (s, c) = psi.sin_cos();
    let e = orientation.signum();
    Matrix4::new(
        sigma, 0.0, 0.0, 0.0, //
        0.0, 1.0 / sigma, 0.0, 0.0, //
        0.0, 0.0, c, e * s, //
        0.0, 0.0, -e * s, c,
    )
}

/// Extracts (sigma, psi) from the monodromy matrix through the invariants of
/// the reciprocal characteristic polynomial: with a = tr M and
/// b = (a^2 - tr M^2)/2, the pair sums s_i = eig + 1/eig solve
/// s^2 - a s + (b - 2) = 0. This avoids forming O(sigma^2) intermediates.
pub fn normal_form(m: &Matrix4<f64>, period: f64) -> Result<NormalForm> {
    if period <= 0.0 {
        return Err(Error::Validation("period must be positive".into()));
    }
    // Accept a matrix symplectic in either coordinate ordering: physical
    // (x, y, px, py) or canonical pair-blocked (q1, p1, q2, p2). The trace
    // invariants below are ordering-independent.
    let symp = symplecticity_residual_wrt(m, &j_phys()).min(symplecticity_residual_wrt(m, &j_canon()));
    if symp > 1e-6 {
        return Err(Error::Validation(format!(
            "matrix is not symplectic (scaled residual {symp:.3e})"
        )));
    }
    let a = m.trace();
    let b = (a * a - (m * m).trace()) / 2.0;
    let disc = a * a - 4.0 * (b - 2.0);
    if disc < 0.0 {
        return Err(Error::Classification(
            "no real eigenvalue pair sums: spectrum is a complex quadruple or doubly elliptic".into(),
        ));
    }
    // Larger-|.| root first for numerical stability, partner via Vieta.
    let s1 = if a >= 0.0 { 0.5 * (a + disc.sqrt()) } else { 0.5 * (a - disc.sqrt()) };
    let s2 = if s1 != 0.0 { (b - 2.0) / s1 } else { 0.5 * (a + disc.sqrt()) };
    let (sh, se) = if s1.abs() >= s2.abs() { (s1, s2) } else { (s2, s1) };
    if (sh.abs() - 2.0).abs() < 1e-9 || (se.abs() - 2.0).abs() < 1e-9 {
        return Err(Error::Degenerate(
            "an eigenvalue pair sits at the boundary between real and unit-circle".into(),
        ));
    }
    if sh.abs() < 2.0 {
        return Err(Error::Classification("spectrum is fully elliptic".into()));
    }
    if se.abs() > 2.0 {
        return Err(Error::Classification("spectrum is fully hyperbolic".into()));
    }
    if sh < 0.0 {
        return Err(Error::Classification(
            "real pair is negative (sigma < 0); not the elliptic-hyperbolic form".into(),
        ));
    }
    let sigma = 0.5 * (sh + (sh * sh - 4.0).sqrt());
    let psi = (se / 2.0).clamp(-1.0, 1.0).acos();
    Ok(NormalForm::from_parts(sigma, psi))
}

#[derive(Debug, Clone)]
pub struct MapEigenbasis {
    /// Columns: (unstable, stable, center-q, center-p).
    pub c: Matrix4<f64>,
    /// Exact symplectic inverse -J_canon C^T J.
    pub c_inv: Matrix4<f64>,
    /// Krein orientation of the center rotation: C^-1 M C has center block
    /// [[cos psi, orientation*sin psi], [-orientation*sin psi, cos psi]].
    pub orientation: f64,
    /// ||C^T J C - J_canon||_F.
    pub symplecticity: f64,
    /// ||C^-1 M C - Lambda_oriented||_F / ||Lambda||_F.
    pub similarity: f64,
}

impl MapEigenbasis {
    /// The Lambda this basis actually realizes under similarity.
    pub fn oriented_lambda(&self, nf: &NormalForm) -> Matrix4<f64> {
        lambda_of(nf.sigma, nf.psi, self.orientation)
    }
}

fn power_iterate(m: &Matrix4<f64>) -> Vector4<f64> {
    let mut v = Vector4::new(0.5, 0.5, 0.5, 0.5);
    for _ in 0..200 {
        v = (m * v).normalize();
    }
    v
}

/// Eigenbasis with respect to the physical symplectic form.
pub fn symplectic_eigenbasis(m: &Matrix4<f64>, nf: &NormalForm) -> Result<MapEigenbasis> {
    symplectic_eigenbasis_with_form(m, nf, &j_phys())
}

/// Same construction for a matrix already expressed in coordinates with
/// symplectic form `j` (e.g. j_canon for a matrix in local ordering).
pub fn symplectic_eigenbasis_with_form(
    m: &Matrix4<f64>,
    nf: &NormalForm,
    j: &Matrix4<f64>,
) -> Result<MapEigenbasis> {
    // Stable direction from the exact symplectic inverse -J M^T J: exact to
    // rounding, no extra integration or linear solve.
    let minv = -j * m.transpose() * j;
    let mut u = power_iterate(m);
    if u.x < 0.0 {
        u = -u;
    }
    let mut s = power_iterate(&minv);
    let mut gamma = u.dot(&(j * s));
    if gamma < 0.0 {
        s = -s;
        gamma = -gamma;
    }
    if gamma < 1e-14 {
        return Err(Error::Degenerate("vanishing symplectic pairing of the saddle pair".into()));
    }
    let c1 = u / gamma.sqrt();
    let c2 = s / gamma.sqrt();

    // Center plane: J-orthogonal complement of span(u, s), i.e. the ordinary
    // orthogonal complement of {J u, J s}.
    let g1 = (j * u).normalize();
    let mut g2 = j * s - g1 * (j * s).dot(&g1);
    g2 = g2.normalize();
    let mut cols: Vec<Vector4<f64>> = Vec::with_capacity(2);
    for i in 0..4 {
        let mut r = Vector4::zeros();
        r[i] = 1.0;
        r -= g1 * g1[i] + g2 * g2[i];
        for c in &cols {
            r -= c * c.dot(&r);
        }
        if r.norm() > 0.25 {
            cols.push(r.normalize());
            if cols.len() == 2 {
                break;
            }
        }
    }
    if cols.len() < 2 {
        return Err(Error::Degenerate("could not span the center plane".into()));
    }
    let b_mat = Matrix4x2::from_columns(&[cols[0], cols[1]]);
    let g: Matrix2<f64> = b_mat.transpose() * m * b_mat;
    let tr2 = g.trace() / 2.0;
    let sn2 = g.determinant() - tr2 * tr2;
    if sn2 <= 0.0 {
        return Err(Error::Degenerate("center restriction has no elliptic rotation".into()));
    }
    let sn = sn2.sqrt();
    // Complex eigenvector of G for eigenvalue tr2 + i*sn.
    let (vre, vim) = if g[(0, 1)].abs() >= g[(1, 0)].abs() {
        (Vector2::new(g[(0, 1)], tr2 - g[(0, 0)]), Vector2::new(0.0, sn))
    } else {
        (Vector2::new(tr2 - g[(1, 1)], g[(1, 0)]), Vector2::new(sn, 0.0))
    };
    let mut wre = b_mat * vre;
    let mut wim = b_mat * vim;
    // Deterministic complex phase: make the largest-modulus component real
    // and positive.
    let mut k = 0;
    let mut best = 0.0;
    for i in 0..4 {
        let mag = wre[i] * wre[i] + wim[i] * wim[i];
        if mag > best {
            best = mag;
            k = i;
        }
    }
    let mag = best.sqrt();
    if mag < 1e-14 {
        return Err(Error::Degenerate("vanishing center eigenvector".into()));
    }
    let (re_k, im_k) = (wre[k] / mag, wim[k] / mag);
    let new_re = wre * re_k + wim * im_k;
    let new_im = wim * re_k - wre * im_k;
    wre = new_re;
    wim = new_im;

    let p = wre.dot(&(j * wim));
    if p.abs() < 1e-14 {
        return Err(Error::Degenerate("vanishing symplectic pairing of the center pair".into()));
    }
    // Krein orientation: a canonical pair (a^T J b = +1) built from the
    // e^{+i psi} eigenvector represents the rotation as +psi when p > 0 and
    // as -psi (equivalently 2 pi - psi) when p < 0.
    let orientation = p.signum();
    let a = wre / p.abs().sqrt();
    let b = wim * orientation / p.abs().sqrt();

    let c = Matrix4::from_columns(&[c1, c2, a, b]);
    let c_inv = -j_canon() * c.transpose() * j;
    let symplecticity = (c.transpose() * j * c - j_canon()).norm();
    let lam = lambda_of(nf.sigma, nf.psi, orientation);
    let similarity = (c_inv * m * c - lam).norm() / lam.norm();
    Ok(MapEigenbasis { c, c_inv, orientation, symplecticity, similarity })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EffectiveHamiltonian {
    pub lambda_tilde: f64,
    pub nu_tilde: f64,
    pub period: f64,
}

impl EffectiveHamiltonian {
    /// H~2 = lambda~ q1 p1 + (nu~/2)(q2^2 + p2^2).
    pub fn h2(&self, q1: f64, p1: f64, q2: f64, p2: f64) -> f64 {
        self.lambda_tilde * q1 * p1 + 0.5 * self.nu_tilde * (q2 * q2 + p2 * p2)
    }
}

/// lambda~ = ln(sigma)/T, nu~ = psi/T.
pub fn effective_hamiltonian(nf: &NormalForm, period: f64) -> Result<EffectiveHamiltonian> {
    if nf.sigma <= 1.0 {
        return Err(Error::Validation(format!("sigma must exceed 1, got {}", nf.sigma)));
    }
    if period <= 0.0 {
        return Err(Error::Validation("period must be positive".into()));
    }
    Ok(EffectiveHamiltonian {
        lambda_tilde: nf.sigma.ln() / period,
        nu_tilde: nf.psi / period,
        period,
    })
}

/// ||exp(A T) - Lambda||_F / ||Lambda||_F with A the generator of H~2 in
/// block form; exp computed by a general matrix exponential, so the identity
/// is checked numerically rather than by construction.
pub fn verify_proposition_1(eh: &EffectiveHamiltonian, nf: &NormalForm) -> f64 {
    let mut a = Matrix4::zeros();
    a[(0, 0)] = eh.lambda_tilde;
    a[(1, 1)] = -eh.lambda_tilde;
    a[(2, 3)] = eh.nu_tilde;
    a[(3, 2)] = -eh.nu_tilde;
    let e = (a * eh.period).exp();
    (e - nf.lambda_matrix).norm() / nf.lambda_matrix.norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn normal_form_is_its_own_reduction() {
        let lam = lambda_of(2.0, 1.0, 1.0);
        let nf = normal_form(&lam, 1.0).unwrap();
        assert_abs_diff_eq!(nf.sigma, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(nf.psi, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn eigenbasis_of_a_normal_form_is_the_identity() {
        let lam = lambda_of(2.0, 1.0, 1.0);
        let nf = normal_form(&lam, 1.0).unwrap();
        let eb = symplectic_eigenbasis_with_form(&lam, &nf, &j_canon()).unwrap();
        assert!((eb.c - Matrix4::identity()).amax() < 1e-10);
        assert_eq!(eb.orientation, 1.0);
        assert!(eb.symplecticity < 1e-12);
        assert!(eb.similarity < 1e-12);
    }

    #[test]
    fn eigenbasis_recovers_a_conjugated_normal_form() {
        // S = exp(J_c * Sym) is symplectic for symmetric Sym.
        let sym = Matrix4::new(
            0.3, 0.1, -0.2, 0.05, //
            0.1, -0.4, 0.12, 0.2, //
            -0.2, 0.12, 0.25, -0.1, //
            0.05, 0.2, -0.1, 0.15,
        );
        let s = (j_canon() * sym).exp();
        let lam = lambda_of(7.0, 2.2, 1.0);
        let m = s * lam * s.try_inverse().unwrap();
        let nf = normal_form(&m, 3.0).unwrap();
        assert_abs_diff_eq!(nf.sigma, 7.0, epsilon = 1e-9);
        assert_abs_diff_eq!(nf.psi, 2.2, epsilon = 1e-10);
        let eb = symplectic_eigenbasis_with_form(&m, &nf, &j_canon()).unwrap();
        assert!(eb.symplecticity < 1e-9, "symplecticity {}", eb.symplecticity);
        assert!(eb.similarity < 1e-9, "similarity {}", eb.similarity);
    }

    #[test]
    fn spectrum_classification_errors() {
        // fully hyperbolic (both pairs real)
        let m = Matrix4::from_diagonal(&Vector4::new(2.0, 0.5, 3.0, 1.0 / 3.0));
        assert!(matches!(normal_form(&m, 1.0), Err(Error::Classification(_))));
        // fully elliptic (two rotations)
        let mut m = Matrix4::zeros();
        let (s1, c1) = 0.7_f64.sin_cos();
        let (s2, c2) = 1.9_f64.sin_cos();
        m[(0, 0)] = c1;
        m[(0, 1)] = s1;
        m[(1, 0)] = -s1;
        m[(1, 1)] = c1;
        m[(2, 2)] = c2;
        m[(2, 3)] = s2;
        m[(3, 2)] = -s2;
        m[(3, 3)] = c2;
        assert!(matches!(normal_form(&m, 1.0), Err(Error::Classification(_))));
        // degenerate: real pair hugging the unit circle
        let m = lambda_of(1.0 + 1e-12, 1.0, 1.0);
        assert!(matches!(normal_form(&m, 1.0), Err(Error::Degenerate(_))));
        // non-symplectic input rejected
        let m = Matrix4::identity() * 1.7;
        assert!(matches!(normal_form(&m, 1.0), Err(Error::Validation(_))));
    }

    #[test]
    fn effective_hamiltonian_arithmetic() {
        let t = 2.7_f64;
        let nf = NormalForm::from_parts(t.exp(), 1.3);
        let eh = effective_hamiltonian(&nf, t).unwrap();
        assert_abs_diff_eq!(eh.lambda_tilde, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(eh.nu_tilde, 1.3 / t, epsilon = 1e-15);
        let bad = NormalForm::from_parts(0.9, 1.0);
        assert!(effective_hamiltonian(&bad, t).is_err());
    }

    #[test]
    fn proposition_1_residual_for_constructed_parameters() {
        for (sigma, psi, t) in [(4.2874e8, 3.0273, 6.79), (2.0, 1.0, 1.0), (1.0e4, 0.1, 10.0)] {
            let nf = NormalForm::from_parts(sigma, psi);
            let eh = effective_hamiltonian(&nf, t).unwrap();
            assert!(verify_proposition_1(&eh, &nf) < 1e-12);
        }
        // psi = 0 edge: center block degenerates to the identity.
        let nf = NormalForm::from_parts(5.0, 0.0);
        let eh = effective_hamiltonian(&nf, 2.0).unwrap();
        assert!(verify_proposition_1(&eh, &nf) < 1e-12);
    }

    #[test]
    fn lambda_iteration_conserves_h2_and_never_mixes_blocks() {
        let nf = NormalForm::from_parts(3.0, 2.0);
        let eh = effective_hamiltonian(&nf, 1.0).unwrap();
        let lam = nf.lambda_matrix;
        assert_eq!(lam.fixed_view::<2, 2>(0, 2).into_owned(), Matrix2::zeros());
        assert_eq!(lam.fixed_view::<2, 2>(2, 0).into_owned(), Matrix2::zeros());
        let mut x = Vector4::new(0.01, -0.02, 0.03, 0.005);
        let h0 = eh.h2(x[0], x[1], x[2], x[3]);
        for _ in 0..5 {
            x = lam * x;
            let h = eh.h2(x[0], x[1], x[2], x[3]);
            assert!((h - h0).abs() < 1e-12 * h0.abs().max(1e-10));
        }
    }
}
