//! Property tests: invariants that must hold for arbitrary inputs, not just
//! the reference orbits.

use nalgebra::{Matrix4, Vector4};
use proptest::prelude::*;

use strobomap::integrate::{dp54, IntegratorSettings};
use strobomap::models::{true_anomaly, true_anomaly_rate, Er3bpParams, Model, PhaseState, MU_EARTH_MOON};
use strobomap::symmap::{j_canon, j_phys, lambda_of, normal_form, NormalForm};

/// exp(J_canon S) for symmetric S is symplectic; used to generate arbitrary
/// canonical changes of coordinates.
fn random_symplectic(entries: &[f64; 10]) -> Matrix4<f64> {
    let mut s = Matrix4::zeros();
    let mut k = 0;
    for i in 0..4 {
        for j in i..4 {
            s[(i, j)] = entries[k];
            s[(j, i)] = entries[k];
            k += 1;
        }
    }
    (j_canon() * s).exp()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// The trace-based reduction recovers (sigma, psi) from any symplectic
    /// conjugate of Lambda, since the invariants only depend on the
    /// conjugacy class.
    #[test]
    fn conjugated_lambda_recovers_its_invariants(
        log_sigma in 2.0_f64..18.0,
        psi in 0.05_f64..3.0,
        entries in prop::array::uniform10(-0.4_f64..0.4),
    ) {
        let sigma = log_sigma.exp();
        let lambda = lambda_of(sigma, psi, 1.0);
        let c = random_symplectic(&entries);
        let m = c * lambda * c.try_inverse().unwrap();
        let nf = normal_form(&m, std::f64::consts::TAU).unwrap();
        prop_assert!((nf.sigma / sigma - 1.0).abs() < 1e-6, "sigma {} vs {}", nf.sigma, sigma);
        prop_assert!((nf.psi - psi).abs() < 1e-6, "psi {} vs {}", nf.psi, psi);
    }

    /// Every model's vector field is Hamiltonian: F = J grad H, checked
    /// against a central finite difference of the implemented Hamiltonian at
    /// random states and times.
    #[test]
    fn vector_field_is_j_grad_h(
        x in 0.3_f64..1.4,
        y in -0.5_f64..0.5,
        px in -0.5_f64..0.5,
        py in -0.5_f64..1.5,
        t in 0.0_f64..6.0,
        which in 0_u8..3,
    ) {
        let model = match which {
            0 => Model::cr3bp(MU_EARTH_MOON),
            1 => Model::bcp_default(),
            _ => Model::er3bp_default(),
        };
        let s = PhaseState::new(x, y, px, py);
        // Stay away from the primaries, where the 1/r potential makes the
        // finite difference meaningless.
        let mu = model.mu();
        for (cx, cy) in [(-mu, 0.0), (1.0 - mu, 0.0)] {
            prop_assume!(((x - cx).powi(2) + (y - cy).powi(2)).sqrt() > 0.15);
        }
        let f = model.vector_field(&s, t).unwrap();
        let eps = 1e-6;
        let mut grad = Vector4::zeros();
        for i in 0..4 {
            let mut vp = s.to_vector();
            let mut vm = s.to_vector();
            vp[i] += eps;
            vm[i] -= eps;
            let hp = model.hamiltonian(&PhaseState::from_vector(&vp), t).unwrap();
            let hm = model.hamiltonian(&PhaseState::from_vector(&vm), t).unwrap();
            grad[i] = (hp - hm) / (2.0 * eps);
        }
        let expected = j_phys() * grad;
        let scale = 1.0 + f.amax();
        prop_assert!((f - expected).amax() / scale < 1e-7, "F {f:?} vs J grad H {expected:?}");
    }

    /// The closed-form (Kepler-equation) true anomaly agrees with direct
    /// integration of phi' = (1 + e cos phi)^2 / (1 - e^2)^{3/2}.
    #[test]
    fn true_anomaly_matches_its_ode(
        e in 0.0_f64..0.3,
        phi0 in 0.0_f64..std::f64::consts::TAU,
        t in 0.0_f64..12.0,
    ) {
        let p = Er3bpParams { mu: MU_EARTH_MOON, e, phi0 };
        let cfg = IntegratorSettings::default();
        let from_kepler = true_anomaly(&p, t);
        let (_, y, _) = dp54::<1, _>(
            |_, y| Ok(nalgebra::SVector::<f64, 1>::new(true_anomaly_rate(e, y[0]))),
            0.0,
            t,
            nalgebra::SVector::<f64, 1>::new(phi0),
            &cfg,
            |_, _| false,
        ).unwrap();
        prop_assert!((from_kepler - y[0]).abs() < 1e-9, "kepler {} ode {}", from_kepler, y[0]);
    }

    /// H~2 level sets are exactly invariant under the closed-form saddle x
    /// rotation iteration used by the cap map.
    #[test]
    fn quadratic_energy_is_invariant_under_the_linear_map(
        q1 in -1e-3_f64..1e-3,
        p1 in -1e-3_f64..1e-3,
        r in 0.0_f64..1e-3,
        angle in 0.0_f64..std::f64::consts::TAU,
        k in 1_i64..12,
    ) {
        use strobomap::symmap::effective_hamiltonian;
        use strobomap::transit::{iterate_region, BoundarySide, LocalState};
        let nf = NormalForm::from_parts(4.2874e8, 3.0273);
        let eh = effective_hamiltonian(&nf, std::f64::consts::TAU).unwrap();
        let s = LocalState { q1, p1, q2: r * angle.cos(), p2: r * angle.sin() };
        let h0 = eh.h2(s.q1, s.p1, s.q2, s.p2);
        let (it, _) = iterate_region(&s, &nf, k, 1e-4, BoundarySide::N1);
        let h1 = eh.h2(it.q1, it.p1, it.q2, it.p2);
        let scale = h0.abs().max(1e-12);
        prop_assert!((h1 - h0).abs() / scale < 1e-9, "h0 {h0} h1 {h1}");
    }
}
