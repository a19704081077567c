use std::sync::Arc;

use nalgebra::DMatrix;

use spectral_collapse::builders::{build_icosphere, build_s3_600cell};
use spectral_collapse::feec::{
    integrate_inverse_rho, projected_fields, rho_from_orbit_gram, rho_on_quotient_algebra, MassFamily,
};
use spectral_collapse::sparse::{asymmetry, csr_to_dense, max_abs};

#[test]
fn weighted_masses_are_symmetric_positive_definite() {
    let (_, g, a) = build_icosphere(1).unwrap();
    let family = MassFamily::new(Arc::new(g), Some(a)).unwrap();
    for eps in [1.0, 0.3, 0.05] {
        for p in 0..=2 {
            let m = family.weighted_mass_matrix(eps, p).unwrap();
            assert!(asymmetry(&m) <= 1e-12 * max_abs(&m));
            assert!(csr_to_dense(&m).cholesky().is_some(), "eps {eps} p {p}");
        }
        for p in 1..=2 {
            let a = family.coboundary_stiffness(eps, p).unwrap();
            assert!(asymmetry(&a) <= 1e-12 * max_abs(&a));
        }
    }
}

#[test]
fn constants_are_in_the_stiffness_kernel() {
    let (_, g, a) = build_icosphere(1).unwrap();
    let family = MassFamily::new(Arc::new(g), Some(a)).unwrap();
    let stiffness = family.coboundary_stiffness(0.2, 1).unwrap();
    let ones = DMatrix::from_element(stiffness.ncols(), 1, 1.0);
    assert!((&stiffness * &ones).abs().max() < 1e-10 * max_abs(&stiffness));
}

#[test]
fn free_action_rho_agrees_with_quotient_formula() {
    let (_, g, a) = build_s3_600cell(0).unwrap();
    for (i, cell) in g.cells().iter().enumerate().step_by(37) {
        for node in &g.quadrature().nodes {
            let comps = projected_fields(&a, &g, cell, node);
            let og = DMatrix::from_fn(comps.len(), comps.len(), |r, c| comps[r].dot(&(&cell.gram * &comps[c])));
            for eps in [1.0, 0.3] {
                let full = rho_from_orbit_gram(&og, eps).unwrap();
                let reduced = rho_on_quotient_algebra(&og, 0, eps).unwrap();
                assert!((full - reduced).abs() <= 1e-12 * full, "cell {i}");
            }
        }
    }
}

#[test]
fn projected_fields_are_tangent() {
    let (_, g, a) = build_icosphere(2).unwrap();
    for v in g.vertices() {
        let x = &a.evaluate(v)[0];
        let dot: f64 = x.iter().zip(v).map(|(a, b)| a * b).sum();
        assert!(dot.abs() <= 1e-10);
    }
    let (_, g, a) = build_s3_600cell(0).unwrap();
    for v in g.vertices() {
        let x = &a.evaluate(v)[0];
        assert!((x.norm() - 1.0).abs() <= 1e-12);
        let dot: f64 = x.iter().zip(v).map(|(a, b)| a * b).sum();
        assert!(dot.abs() <= 1e-10);
    }
}

#[test]
fn inverse_rho_is_integrable_on_the_rotating_sphere() {
    // ρ_0⁻¹ = 1/r with r the distance to the axis; its integral over S² is 2π²
    let mut limits = Vec::new();
    for level in [2, 3] {
        let (_, g, a) = build_icosphere(level).unwrap();
        let coarse = integrate_inverse_rho(&a, &g, 1e-3).unwrap();
        let fine = integrate_inverse_rho(&a, &g, 1e-6).unwrap();
        assert!((coarse - fine).abs() < 0.02 * fine);
        limits.push(fine);
    }
    assert!((limits[0] - limits[1]).abs() < 0.05 * limits[1]);
    let exact = 2.0 * std::f64::consts::PI.powi(2);
    assert!((limits[1] - exact).abs() < 0.05 * exact, "{} vs {exact}", limits[1]);
}
