//! Property tests for the invariants of every module.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use spectral_perturb::coefficients::{
    check_legendre_hadamard, lame_tensor, preset, strain, symmetry_defect, DiscreteField, ScalarField, PRESET_NAMES,
};
use spectral_perturb::eigensolve::{dense_oracle, smallest_eigenpairs};
use spectral_perturb::fem::{assemble_mass, assemble_stiffness, inner_l2, rayleigh_quotient};
use spectral_perturb::geometry::{
    build_base, build_dumbbell, check_corkscrew, check_corkscrew_with_resolution, cutoff_eta, tube_measure, Component,
    DomainSpec, Mesh,
};
use spectral_perturb::inequalities::{check_monotonicity, projector_distance, Spectrum};
use spectral_perturb::sparse::{EnvelopeCholesky, SparseSymMatrix};
use spectral_perturb::study::{detect_clusters, fit_rate};

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        ..ProptestConfig::default()
    }
}

/// `(h, tube_length, ε, ε')` with every length a multiple of `2h`, `4h ≤ ε' ≤ ε ≤ 1/2`.
fn admissible() -> impl Strategy<Value = (f64, f64, f64, f64)> {
    (prop_oneof![Just(8usize), Just(16), Just(32)], 1usize..4)
        .prop_flat_map(|(inv_h, len_units)| {
            let max_units = inv_h / 4;
            (Just(inv_h), Just(len_units), 2usize..=max_units.max(2))
                .prop_flat_map(|(inv_h, len_units, e)| (Just(inv_h), Just(len_units), Just(e), 2usize..=e))
        })
        .prop_map(|(inv_h, len_units, e, e2)| {
            let h = 1.0 / inv_h as f64;
            (h, 2.0 * h * len_units as f64, 2.0 * h * e as f64, 2.0 * h * e2 as f64)
        })
}

fn keys_with_label(mesh: &Mesh, keep: impl Fn(Component) -> bool) -> BTreeSet<[[i64; 2]; 3]> {
    mesh.triangles
        .iter()
        .zip(&mesh.labels)
        .filter(|(_, &l)| keep(l))
        .map(|(t, _)| t.map(|v| mesh.lattice_coords(v)))
        .collect()
}

proptest! {
    #![proptest_config(config(24))]

    #[test]
    fn meshes_are_nested((h, len, eps, eps2) in admissible()) {
        let spec = DomainSpec::symmetric_dumbbell(len);
        let wide = build_dumbbell(&spec, eps, h).unwrap();
        let narrow = build_dumbbell(&spec, eps2, h).unwrap();
        let base = build_base(&spec, h).unwrap();
        prop_assert!(narrow.triangle_keys().is_subset(&wide.triangle_keys()));
        prop_assert_eq!(base.triangle_keys(), keys_with_label(&wide, |l| l != Component::Tube));
        for &v in &base.interior_nodes {
            let w = wide.vertex_at(base.lattice_coords(v)).unwrap();
            prop_assert!(wide.is_interior(w));
        }
    }

    #[test]
    fn mesh_geometry_invariants((h, len, eps, _e2) in admissible()) {
        let spec = DomainSpec::symmetric_dumbbell(len);
        let mesh = build_dumbbell(&spec, eps, h).unwrap();
        let expected = spec.base_area() + tube_measure(&spec, eps);
        prop_assert!((mesh.total_area() - expected).abs() <= 1e-12 * expected);
        for t in 0..mesh.triangles.len() {
            prop_assert!((mesh.triangle_area(t) - 0.5 * h * h).abs() <= 1e-14);
        }
        // vertices ordered row-major
        for w in mesh.vertices.windows(2) {
            prop_assert!(w[0][1] < w[1][1] || (w[0][1] == w[1][1] && w[0][0] < w[1][0]));
        }
        // tube triangles meet the closed end rectangles only near the attachment points
        let tol = 1e-12;
        for (tri, &l) in mesh.triangles.iter().zip(&mesh.labels) {
            if l != Component::Tube {
                continue;
            }
            for &v in tri {
                let p = mesh.vertices[v];
                if spec.omega.contains_closed(p, tol) || spec.omega_tilde.contains_closed(p, tol) {
                    let d = |q: [f64; 2]| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
                    prop_assert!(d(spec.p1).min(d(spec.p2)) <= 0.5 * eps + tol);
                }
            }
        }
    }

    #[test]
    fn cutoff_invariants((h, len, eps, _e2) in admissible()) {
        let spec = DomainSpec::symmetric_dumbbell(len);
        let mesh = build_dumbbell(&spec, eps, h).unwrap();
        let eta = cutoff_eta(&spec, eps, &mesh).unwrap();
        let tube = spec.tube(eps).unwrap();
        for (v, &x) in mesh.vertices.iter().enumerate() {
            let e = eta.values[v];
            prop_assert!((0.0..=1.0).contains(&e));
            if tube.contains_closed(x, 1e-12) {
                prop_assert_eq!(e, 0.0);
            }
            let d = |q: [f64; 2]| ((x[0] - q[0]).powi(2) + (x[1] - q[1]).powi(2)).sqrt();
            if d(spec.p1).min(d(spec.p2)) >= eps && !tube.contains_closed(x, 1e-12) {
                prop_assert_eq!(e, 1.0);
            }
        }
        let field = DiscreteField { m: 1, values: eta.values.clone() };
        for t in 0..mesh.triangles.len() {
            let g = field.gradient(&mesh, t)[0];
            let norm = (g[0] * g[0] + g[1] * g[1]).sqrt();
            // interpolating a 2/ε-Lipschitz ramp on right triangles costs at most a factor √2
            prop_assert!(norm <= std::f64::consts::SQRT_2 * eta.gradient_bound * (1.0 + 1e-12));
        }
    }

    #[test]
    fn tensors_are_symmetric(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points: Vec<[f64; 2]> = (0..1000).map(|_| [rng.gen_range(-1.0..3.0), rng.gen_range(-1.0..2.0)]).collect();
        for name in PRESET_NAMES {
            let t = preset(name, &json!({})).unwrap();
            prop_assert!(symmetry_defect(&t, &points) <= 1e-14, "{}", name);
        }
    }

    #[test]
    fn lame_pointwise_energy(upsilon in 0.0f64..5.0, mu in 0.05f64..5.0, seed in any::<u64>()) {
        let tensor = lame_tensor(ScalarField::Constant(upsilon), ScalarField::Constant(mu)).unwrap();
        let mesh = build_base(&DomainSpec::symmetric_dumbbell(0.25), 0.125).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = DiscreteField::random(&mesh, 2, &mut rng);
        let kappa = strain(&mesh, &u).unwrap();
        let tau = tensor.tau.unwrap();
        for t in 0..mesh.triangles.len() {
            let g = u.gradient(&mesh, t);
            let x = mesh.centroid(t);
            let mut energy = 0.0;
            for a in 0..2 {
                for b in 0..2 {
                    for i in 0..2 {
                        for j in 0..2 {
                            energy += tensor.entry(x, a, b, i, j) * g[a][i] * g[b][j];
                        }
                    }
                }
            }
            let k = kappa[t];
            let k2 = k[0][0].powi(2) + 2.0 * k[0][1].powi(2) + k[1][1].powi(2);
            let div = k[0][0] + k[1][1];
            let expected = upsilon * div * div + 2.0 * mu * k2;
            prop_assert!((energy - expected).abs() <= 1e-10 * (1.0 + expected.abs()));
            prop_assert!(energy >= tau * k2 - 1e-10 * (1.0 + k2));
        }
        prop_assert!(check_legendre_hadamard(&tensor, &[[0.0, 0.0]], 720) > 0.0);
    }

    #[test]
    fn strong_and_garding_coercivity(seed in any::<u64>()) {
        let mesh = build_dumbbell(&DomainSpec::symmetric_dumbbell(0.25), 0.25, 1.0 / 16.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for name in ["laplacian", "general_const", "lame_const", "lame_checkerboard"] {
            let tensor = preset(name, &json!({})).unwrap();
            let bound = tensor.theta.or(tensor.delta).unwrap();
            let b = assemble_stiffness(&mesh, &tensor).unwrap();
            let u = DiscreteField::random(&mesh, tensor.m, &mut rng);
            let grad: f64 = (0..mesh.triangles.len())
                .map(|t| mesh.triangle_area(t) * u.gradient(&mesh, t).iter().map(|g| g[0] * g[0] + g[1] * g[1]).sum::<f64>())
                .sum();
            prop_assert!(b.quadratic(&u.to_dofs(&mesh)) >= (bound - 1e-8) * grad, "{}", name);
        }
    }

    #[test]
    fn sparse_cholesky_solves_random_spd(n in 2usize..40, density in 0.05f64..0.5, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut triplets = Vec::new();
        let mut rowsum = vec![0.0; n];
        for i in 0..n {
            for j in 0..i {
                if rng.gen::<f64>() < density {
                    let v: f64 = rng.gen_range(-1.0..1.0);
                    triplets.push((i, j, v));
                    rowsum[i] += v.abs();
                    rowsum[j] += v.abs();
                }
            }
        }
        for (i, s) in rowsum.iter().enumerate() {
            triplets.push((i, i, s + 1.0));
        }
        let a = SparseSymMatrix::from_triplets(n, &triplets);
        prop_assert!(a.is_symmetric());
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b = a.mul_vec(&x);
        let y = EnvelopeCholesky::factor(&a).unwrap().solve(&b);
        for (p, q) in x.iter().zip(&y) {
            prop_assert!((p - q).abs() <= 1e-10);
        }
        let dense = a.to_dense();
        prop_assert!((&dense - dense.transpose()).amax() == 0.0);
    }

    #[test]
    fn eigenpairs_are_sorted_orthonormal_and_match_dense(n in 6usize..60, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // random SPD tridiagonal-plus stiffness, SPD diagonal-dominant mass
        let mut tb = Vec::new();
        let mut tm = Vec::new();
        for i in 0..n {
            tb.push((i, i, 2.0 + rng.gen_range(0.0..1.0)));
            tm.push((i, i, 1.0 + rng.gen_range(0.0..0.5)));
            if i > 0 {
                tb.push((i, i - 1, -rng.gen_range(0.0..0.9)));
                tm.push((i, i - 1, rng.gen_range(-0.2..0.2)));
            }
        }
        let b = SparseSymMatrix::from_triplets(n, &tb);
        let m = SparseSymMatrix::from_triplets(n, &tm);
        let k = (n / 3).max(1);
        let pairs = smallest_eigenpairs(&b, &m, k, 1e-10).unwrap();
        let dense = dense_oracle(&b, &m).unwrap();
        for w in pairs.windows(2) {
            prop_assert!(w[0].sigma <= w[1].sigma);
        }
        for (i, p) in pairs.iter().enumerate() {
            prop_assert!(p.residual <= 1e-10);
            prop_assert!(((p.sigma - dense.values[i]) / dense.values[i]).abs() <= 1e-8);
            for (j, q) in pairs.iter().enumerate() {
                let g = m.bilinear(&p.vector, &q.vector);
                let target = if i == j { 1.0 } else { 0.0 };
                prop_assert!((g - target).abs() <= 1e-10);
            }
            let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            prop_assert!(rayleigh_quotient(&b, &m, &u).unwrap() >= pairs[0].sigma * (1.0 - 1e-12));
        }
    }

    #[test]
    fn fit_rate_recovers_power_laws(a in 0.1f64..4.0, c in 0.01f64..100.0, n in 2usize..6) {
        let points: Vec<(f64, f64)> = (0..n).map(|i| {
            let e = 0.5f64.powi(i as i32 + 1);
            (e, c * e.powf(a))
        }).collect();
        let fit = fit_rate(&points).unwrap();
        prop_assert!((fit.a - a).abs() <= 1e-9);
        prop_assert!((fit.log_c - c.ln()).abs() <= 1e-8);
        prop_assert!(fit.r2 >= 1.0 - 1e-12);
    }

    #[test]
    fn clusters_partition_the_spectrum(mut values in prop::collection::vec(0.0f64..10.0, 1..30), gap in 1e-8f64..1e-1) {
        values.sort_by(f64::total_cmp);
        let clusters = detect_clusters(&values, gap);
        prop_assert_eq!(clusters.iter().map(|c| c.size).sum::<usize>(), values.len());
        let mut next = 1;
        for c in &clusters {
            prop_assert_eq!(c.start, next);
            next += c.size;
        }
    }

    #[test]
    fn projector_distance_is_a_symmetric_value_in_unit_interval(seed in any::<u64>(), ka in 1usize..4, kb in 1usize..4) {
        let n = 10;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = SparseSymMatrix::from_triplets(n, &(0..n).map(|i| (i, i, rng.gen_range(0.5..2.0))).collect::<Vec<_>>());
        let basis = |k: usize, rng: &mut ChaCha8Rng| (0..k).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect::<Vec<Vec<f64>>>();
        let a = basis(ka, &mut rng);
        let b = basis(kb, &mut rng);
        let dab = projector_distance(&a, &b, &m).unwrap();
        let dba = projector_distance(&b, &a, &m).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&dab));
        prop_assert!((dab - dba).abs() <= 1e-12);
        prop_assert!(projector_distance(&a, &a, &m).unwrap() <= 1e-12);
    }
}

proptest! {
    #![proptest_config(config(6))]

    #[test]
    fn discrete_eigenvalues_only_decrease_when_the_tube_opens(e_units in 2usize..5, lame in any::<bool>()) {
        let h = 1.0 / 16.0;
        let eps = 2.0 * h * e_units as f64;
        let spec = DomainSpec::symmetric_dumbbell(0.25);
        let tensor = preset(if lame { "lame_const" } else { "laplacian" }, &json!({})).unwrap();
        let solve = |mesh: &Mesh| {
            let b = assemble_stiffness(mesh, &tensor).unwrap();
            let m = assemble_mass(mesh, tensor.m).unwrap();
            smallest_eigenpairs(&b, &m, 6, 1e-10).unwrap().iter().map(|p| p.sigma).collect::<Vec<_>>()
        };
        let s0 = solve(&build_base(&spec, h).unwrap());
        let se = solve(&build_dumbbell(&spec, eps, h).unwrap());
        let rec = check_monotonicity(&Spectrum { h, sigma: &se }, &Spectrum { h, sigma: &s0 }, 6).unwrap();
        prop_assert!(rec.pass);
    }
}

#[test]
fn assembly_is_bitwise_independent_of_thread_count() {
    let mesh = build_dumbbell(&DomainSpec::symmetric_dumbbell(0.25), 0.25, 1.0 / 32.0).unwrap();
    let tensor = preset("lame_checkerboard", &json!({})).unwrap();
    let assemble = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| assemble_stiffness(&mesh, &tensor).unwrap())
    };
    let one = assemble(1);
    let many = assemble(4);
    assert_eq!(one, many);
}

#[test]
fn constant_field_integrates_to_the_area() {
    let spec = DomainSpec::symmetric_dumbbell(0.25);
    let mesh = build_dumbbell(&spec, 0.125, 1.0 / 32.0).unwrap();
    let one = DiscreteField::interpolate_all(&mesh, 2, |_| vec![1.0, 1.0]);
    let total = inner_l2(&mesh, &one, &one);
    let area = spec.base_area() + tube_measure(&spec, 0.125);
    assert!((total - 2.0 * area).abs() <= 1e-12 * area);
    // interior-only mass sees the domain minus the boundary layer
    let m = assemble_mass(&mesh, 1).unwrap();
    let ones = vec![1.0; m.dim()];
    assert!(m.quadratic(&ones) < area);
    let dense: DMatrix<f64> = m.to_dense();
    assert!(dense.iter().all(|&x| x >= 0.0));
}

#[test]
fn rasterisation_counts_whole_cells() {
    let spec = DomainSpec::symmetric_dumbbell(0.25);
    let mesh = build_dumbbell(&spec, 0.125, 1.0 / 32.0).unwrap();
    assert_eq!(mesh.triangles.len(), 2 * (1024 + 1024 + 32));
    let tube = mesh.labels.iter().filter(|&&l| l == Component::Tube).count();
    assert_eq!(tube, 64);
}

#[test]
fn corkscrew_constant_is_positive_and_resolution_stable() {
    let spec = DomainSpec::symmetric_dumbbell(0.25);
    let radii = [0.05, 0.1, 0.2, 0.4];
    let coarse = check_corkscrew(&spec, 0.125, &radii, 400).unwrap();
    let fine = check_corkscrew_with_resolution(&spec, 0.125, &radii, 400, 128).unwrap();
    assert!(coarse > 0.0 && fine > 0.0);
    assert!((coarse - fine).abs() <= 0.1 * fine, "{coarse} vs {fine}");
}
