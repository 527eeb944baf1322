use bihamil::bundle::{chern_number, TriangulatedSurface};
use bihamil::calc3::{Mat3, Vec3, VectorFn};
use bihamil::framekit::{bracket, flow_brackets, frame_from_value, jet_from, EPS_V};
use bihamil::riccati::{solve_mu, solve_mu_direct, MuInit, RiccatiCoefficients, SGrid};
use proptest::prelude::*;

fn vec3(range: f64) -> impl Strategy<Value = Vec3> {
    prop::array::uniform3(-range..range).prop_map(Vec3::from)
}

fn mat3() -> impl Strategy<Value = Mat3> {
    prop::array::uniform9(-2.0..2.0f64).prop_map(|a| Mat3::from_row_slice(&a))
}

/// A vector and a unit axis at least 0.1 rad away from the line through it.
fn value_and_axis() -> impl Strategy<Value = (Vec3, Vec3)> {
    (vec3(3.0), vec3(1.0)).prop_filter("well separated", |(v, a)| {
        let (vn, an) = (v.norm(), a.norm());
        vn > 0.1 && an > 0.1 && (v.dot(a) / (vn * an)).abs() < 0.1f64.cos()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn frames_are_orthonormal_and_adapted((v, axis) in value_and_axis()) {
        let axis = axis.normalize();
        let f = frame_from_value(&v, &axis, &Vec3::zeros(), EPS_V).unwrap();
        prop_assert!(f.orthonormality_defect() < 1e-12);
        prop_assert!((f.e1 - v.normalize()).norm() < 1e-12);
        prop_assert!((f.speed - v.norm()).abs() < 1e-12 * v.norm());
        // ê₂ lies in the plane of the axis and ê₁, on the axis side
        prop_assert!(f.e3.dot(&axis).abs() < 1e-12);
        prop_assert!(f.e2.dot(&axis) > 0.0);
    }

    #[test]
    fn streamline_brackets_agree_with_the_full_jet((v, axis) in value_and_axis(), dv in mat3()) {
        let axis = axis.normalize();
        let f = frame_from_value(&v, &axis, &Vec3::zeros(), EPS_V).unwrap();
        let jet = jet_from(&f, &axis, &dv);
        let (b12, b13) = flow_brackets(&f, &axis, &dv);
        let scale = 1.0 + dv.amax() / v.norm() / (1.0 - axis.dot(&f.e1).powi(2)).sqrt();
        prop_assert!((b12 - bracket(&jet, 1, 2)).amax() < 1e-12 * scale);
        prop_assert!((b13 - bracket(&jet, 1, 3)).amax() < 1e-12 * scale);
    }

    #[test]
    fn projective_and_direct_riccati_agree(a in -0.5..0.5f64, b in -0.5..0.5f64, c in -0.5..0.5f64, mu0 in -1.0..1.0f64) {
        let g = SGrid::new(1.0, 1e-2).unwrap();
        let coeffs = RiccatiCoefficients::from_abc(g, |_| (a, b, c));
        let lifted = solve_mu(&coeffs, MuInit::Value(mu0)).unwrap();
        let direct = solve_mu_direct(&coeffs, mu0).unwrap();
        prop_assert!(lifted.crossings.is_empty());
        // two fourth-order schemes, so they agree to O(h⁴)
        let bound = 10.0 * g.step.powi(4);
        for (k, d) in direct.iter().enumerate() {
            prop_assert!((lifted.mu(k).unwrap() - d).abs() < bound);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn uniform_flow_has_trivial_normal_bundle(dir in vec3(1.0).prop_filter("nonzero", |d| d.norm() > 0.1)) {
        let v = VectorFn::new(move |_| dir);
        let sphere = TriangulatedSurface::icosphere(2, 1.0, Vec3::zeros());
        prop_assert_eq!(chern_number(&v, &sphere).unwrap().number, 0);
    }

    #[test]
    fn radial_flow_from_any_interior_point_has_chern_two(c in vec3(0.3)) {
        let v = VectorFn::new(move |x: &Vec3| x - c);
        let sphere = TriangulatedSurface::icosphere(3, 1.0, Vec3::zeros());
        let r = chern_number(&v, &sphere).unwrap();
        prop_assert_eq!(r.number, 2);
        prop_assert!(r.defect < 1e-6);
    }
}
