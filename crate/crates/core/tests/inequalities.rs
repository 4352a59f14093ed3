//! Inequality checks against closed forms and limiting configurations.

use std::f64::consts::PI;

use serde_json::json;
use spectral_perturb::coefficients::{preset, DiscreteField};
use spectral_perturb::eigensolve::{smallest_eigenpairs, EigenPair};
use spectral_perturb::fem::{assemble_mass, assemble_stiffness};
use spectral_perturb::geometry::{build_base, build_dumbbell, build_rectangle, CutoffField, DomainSpec, Mesh, Rect};
use spectral_perturb::inequalities::{
    check_caccioppoli, check_korn_ball, check_monotonicity, check_near_orthonormality, check_quasimode_residual,
    check_sobolev_poincare, cutoff_product, Ball, Spectrum, TrialBasis,
};
use spectral_perturb::Error;

fn unit_square(h: f64) -> Mesh {
    build_rectangle(Rect::new(0.0, 0.0, 1.0, 1.0), h).unwrap()
}

fn laplacian_pairs(mesh: &Mesh, k: usize) -> Vec<EigenPair> {
    let t = preset("laplacian", &json!({})).unwrap();
    let b = assemble_stiffness(mesh, &t).unwrap();
    let m = assemble_mass(mesh, 1).unwrap();
    smallest_eigenpairs(&b, &m, k, 1e-10).unwrap()
}

fn ones(mesh: &Mesh, epsilon: f64) -> CutoffField {
    CutoffField {
        epsilon,
        values: vec![1.0; mesh.num_vertices()],
        gradient_bound: 0.0,
    }
}

#[test]
fn sobolev_poincare_linear_ramp_matches_closed_form() {
    let mesh = unit_square(1.0 / 256.0);
    let ball = Ball::new([0.5, 0.5], 0.3);
    let u = DiscreteField::interpolate(&mesh, 1, |x| vec![x[0] - 0.5]);
    let rec = check_sobolev_poincare(&mesh, &u, &ball, 0.5).unwrap();
    let r = ball.radius;
    let lhs = PI * r.powi(6) / 8.0;
    let rhs = (PI * r * r).powi(3);
    assert!((rec.lhs / lhs - 1.0).abs() < 0.01, "{} vs {lhs}", rec.lhs);
    assert!((rec.rhs_components["gradient_lp"] / rhs - 1.0).abs() < 0.01);
}

#[test]
fn sobolev_poincare_rejects_thin_subsets() {
    let mesh = unit_square(1.0 / 32.0);
    let u = DiscreteField::interpolate(&mesh, 1, |x| vec![x[0]]);
    let err = check_sobolev_poincare(&mesh, &u, &Ball::new([0.5, 0.5], 0.3), 0.1).unwrap_err();
    assert!(matches!(err, Error::BadSubset { .. }));
}

#[test]
fn korn_constant_is_stable_under_refinement() {
    let field = |x: [f64; 2]| {
        vec![
            (PI * x[0]).sin() * (PI * x[1]).sin(),
            x[0] * x[1] * (1.0 - x[0]) * (1.0 - x[1]) * (x[0] - x[1]),
        ]
    };
    let ball = Ball::new([0.5, 0.5], 0.25);
    let constant = |h: f64| {
        let mesh = unit_square(h);
        let u = DiscreteField::interpolate(&mesh, 2, field);
        check_korn_ball(&mesh, &u, &ball).unwrap().empirical_constant
    };
    let (coarse, fine) = (constant(1.0 / 32.0), constant(1.0 / 64.0));
    assert!(coarse > 0.0 && fine > 0.0);
    assert!((coarse - fine).abs() <= 0.2 * fine, "{coarse} vs {fine}");
}

#[test]
fn caccioppoli_handles_degenerate_balls() {
    let mesh = unit_square(1.0 / 32.0);
    let pairs = laplacian_pairs(&mesh, 1);
    let outside = check_caccioppoli(&mesh, 1, &pairs[0], &[Ball::new([5.0, 5.0], 0.1)], 0.5).unwrap();
    assert_eq!(outside.empirical_constant, 0.0);
    assert!(outside.pass);
    // B_2r swallows the whole domain
    let whole = check_caccioppoli(&mesh, 1, &pairs[0], &[Ball::new([0.5, 0.5], 0.75)], 0.5).unwrap();
    assert!(whole.empirical_constant.is_finite());
    assert!(whole.pass);
    assert!(matches!(check_caccioppoli(&mesh, 1, &pairs[0], &[], 0.5), Err(Error::EmptyBall)));
}

#[test]
fn exact_eigenfunction_with_unit_cutoff_is_a_quasimode() {
    let spec = DomainSpec::symmetric_dumbbell(0.25);
    let mesh = build_base(&spec, 1.0 / 32.0).unwrap();
    let t = preset("laplacian", &json!({})).unwrap();
    let b = assemble_stiffness(&mesh, &t).unwrap();
    let m = assemble_mass(&mesh, 1).unwrap();
    let pairs = smallest_eigenpairs(&b, &m, 3, 1e-12).unwrap();
    let eta = ones(&mesh, 0.125);
    for p in &pairs {
        let eta_phi = cutoff_product(&mesh, &eta, 1, &p.vector).unwrap();
        assert_eq!(eta_phi, p.vector);
        let full = check_quasimode_residual(&b, &m, &eta_phi, p.sigma, &TrialBasis::Full).unwrap();
        assert!(full <= 1e-9, "{full:e}");
        let sampled =
            check_quasimode_residual(&b, &m, &eta_phi, p.sigma, &TrialBasis::Random { count: 20, seed: 3 }).unwrap();
        assert!(sampled <= full + 1e-12);
    }
    let (rec, gram) = check_near_orthonormality(&mesh, &eta, 1, &pairs, 2.25, 1.0).unwrap();
    assert!(rec.lhs <= 1e-10, "{:e}", rec.lhs);
    assert!(rec.pass);
    assert_eq!(gram.nrows(), 3);
}

#[test]
fn opening_the_tube_strictly_lowers_the_spectrum() {
    let h = 1.0 / 32.0;
    let spec = DomainSpec::symmetric_dumbbell(0.25);
    let s0: Vec<f64> = laplacian_pairs(&build_base(&spec, h).unwrap(), 6).iter().map(|p| p.sigma).collect();
    let se: Vec<f64> = laplacian_pairs(&build_dumbbell(&spec, 0.125, h).unwrap(), 6)
        .iter()
        .map(|p| p.sigma)
        .collect();
    let rec = check_monotonicity(&Spectrum { h, sigma: &se }, &Spectrum { h, sigma: &s0 }, 6).unwrap();
    assert!(rec.pass);
    assert!(se.iter().zip(&s0).all(|(a, b)| a < b), "{se:?} vs {s0:?}");
    let mismatch = check_monotonicity(&Spectrum { h: h / 2.0, sigma: &se }, &Spectrum { h, sigma: &s0 }, 6);
    assert!(matches!(mismatch, Err(Error::NotNested(_))));
}
