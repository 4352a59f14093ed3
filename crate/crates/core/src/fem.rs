//! P1 finite elements: stiffness `B_ε(u, v) = ∫ a^{αβ}_{ij} u^α_i v^β_j`,
//! consistent mass, Rayleigh quotients and discrete norms.
//!
//! Degrees of freedom are ordered node-major: coefficient `d·m + α` is
//! component `α` at the `d`-th interior node of the mesh.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::{flat, CoefficientTensor, DiscreteField, DIM};
use crate::error::{Error, Result};
use crate::geometry::Mesh;
pub use crate::sparse::SparseSymMatrix;

/// Element stiffness `K[(a,α),(b,β)] = |T| a^{αβ}_{ij}(centroid) ∂_iφ_a ∂_jφ_b`.
pub fn element_stiffness(mesh: &Mesh, t: usize, tensor: &CoefficientTensor) -> DMatrix<f64> {
    let m = tensor.m;
    let area = mesh.triangle_area(t);
    let grads = mesh.shape_gradients(t);
    let a = tensor.evaluate(mesh.centroid(t));
    DMatrix::from_fn(3 * m, 3 * m, |r, c| {
        let (na, alpha) = (r / m, r % m);
        let (nb, beta) = (c / m, c % m);
        let mut v = 0.0;
        for i in 0..DIM {
            for j in 0..DIM {
                v += a[(flat(DIM, alpha, i), flat(DIM, beta, j))] * grads[na][i] * grads[nb][j];
            }
        }
        area * v
    })
}

/// Consistent P1 mass on one triangle for a single component: `|T|/12 · [[2,1,1],[1,2,1],[1,1,2]]`.
pub fn element_mass(area: f64) -> [[f64; 3]; 3] {
    let d = area / 6.0;
    let o = area / 12.0;
    [[d, o, o], [o, d, o], [o, o, d]]
}

fn check_interior(mesh: &Mesh) -> Result<()> {
    if mesh.num_interior() == 0 {
        Err(Error::EmptyInterior)
    } else {
        Ok(())
    }
}

fn scatter(mesh: &Mesh, m: usize, t: usize, local: &DMatrix<f64>, out: &mut Vec<(usize, usize, f64)>) {
    let tri = mesh.triangles[t];
    for (ka, &va) in tri.iter().enumerate() {
        let Some(da) = mesh.dof_index(va) else { continue };
        for (kb, &vb) in tri.iter().enumerate() {
            let Some(db) = mesh.dof_index(vb) else { continue };
            for alpha in 0..m {
                for beta in 0..m {
                    let (r, c) = (da * m + alpha, db * m + beta);
                    if c <= r {
                        out.push((r, c, local[(ka * m + alpha, kb * m + beta)]));
                    }
                }
            }
        }
    }
}

/// Assembles the stiffness matrix on interior degrees of freedom.
///
/// Element matrices are computed in parallel and scattered in triangle order, so the
/// result is bitwise independent of the thread count.
pub fn assemble_stiffness(mesh: &Mesh, tensor: &CoefficientTensor) -> Result<SparseSymMatrix> {
    check_interior(mesh)?;
    let m = tensor.m;
    let locals: Vec<DMatrix<f64>> = (0..mesh.triangles.len())
        .into_par_iter()
        .map(|t| element_stiffness(mesh, t, tensor))
        .collect();
    let mut triplets = Vec::with_capacity(mesh.triangles.len() * 6 * m * m);
    for (t, local) in locals.iter().enumerate() {
        scatter(mesh, m, t, local, &mut triplets);
    }
    Ok(SparseSymMatrix::from_triplets(m * mesh.num_interior(), &triplets))
}

/// Consistent mass matrix, block diagonal over components.
pub fn assemble_mass(mesh: &Mesh, m: usize) -> Result<SparseSymMatrix> {
    check_interior(mesh)?;
    if m == 0 {
        return Err(Error::DimensionMismatch("m must be at least 1".into()));
    }
    let mut triplets = Vec::with_capacity(mesh.triangles.len() * 6 * m);
    for t in 0..mesh.triangles.len() {
        let e = element_mass(mesh.triangle_area(t));
        let local = DMatrix::from_fn(3 * m, 3 * m, |r, c| if r % m == c % m { e[r / m][c / m] } else { 0.0 });
        scatter(mesh, m, t, &local, &mut triplets);
    }
    Ok(SparseSymMatrix::from_triplets(m * mesh.num_interior(), &triplets))
}

/// `uᵀBu / uᵀMu`.
pub fn rayleigh_quotient(b: &SparseSymMatrix, m: &SparseSymMatrix, u: &[f64]) -> Result<f64> {
    if b.dim() != m.dim() || u.len() != b.dim() {
        return Err(Error::DimensionMismatch(format!(
            "B is {}, M is {}, u has {} entries",
            b.dim(),
            m.dim(),
            u.len()
        )));
    }
    let den = m.quadratic(u);
    if den == 0.0 || u.iter().all(|&x| x == 0.0) {
        return Err(Error::ZeroVector);
    }
    Ok(b.quadratic(u) / den)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscreteNorms {
    pub l2: f64,
    pub h1_seminorm: f64,
    pub lp_gradient: f64,
    pub p: f64,
}

/// Exact `∫_T f·g` for P1 vector fields.
pub fn triangle_inner(mesh: &Mesh, f: &DiscreteField, g: &DiscreteField, t: usize) -> f64 {
    let tri = mesh.triangles[t];
    let area = mesh.triangle_area(t);
    let m = f.m;
    let mut acc = 0.0;
    for alpha in 0..m {
        let fv = tri.map(|v| f.values[v * m + alpha]);
        let gv = tri.map(|v| g.values[v * m + alpha]);
        let diag: f64 = (0..3).map(|k| fv[k] * gv[k]).sum();
        let sums = fv.iter().sum::<f64>() * gv.iter().sum::<f64>();
        acc += diag + sums;
    }
    area / 12.0 * acc
}

/// `∫ f·g` over the whole mesh.
pub fn inner_l2(mesh: &Mesh, f: &DiscreteField, g: &DiscreteField) -> f64 {
    (0..mesh.triangles.len()).map(|t| triangle_inner(mesh, f, g, t)).sum()
}

/// `|∇u|` (Frobenius) on triangle `t`.
pub fn gradient_norm(mesh: &Mesh, u: &DiscreteField, t: usize) -> f64 {
    u.gradient(mesh, t)
        .iter()
        .map(|g| g[0] * g[0] + g[1] * g[1])
        .sum::<f64>()
        .sqrt()
}

/// Barycentric points and weights of the 7-point degree-5 rule on a triangle.
const QUAD7: [([f64; 3], f64); 7] = {
    const A1: f64 = 0.059_715_871_789_769_82;
    const B1: f64 = 0.470_142_064_105_115_1;
    const A2: f64 = 0.797_426_985_353_087_3;
    const B2: f64 = 0.101_286_507_323_456_34;
    const W0: f64 = 0.225;
    const W1: f64 = 0.132_394_152_788_506_18;
    const W2: f64 = 0.125_939_180_544_827_15;
    [
        ([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], W0),
        ([A1, B1, B1], W1),
        ([B1, A1, B1], W1),
        ([B1, B1, A1], W1),
        ([A2, B2, B2], W2),
        ([B2, A2, B2], W2),
        ([B2, B2, A2], W2),
    ]
};

/// `∫_T |u - shift|^p`, exact for even integer `p ≤ 4` and quadrature-accurate otherwise.
pub fn triangle_power_integral(mesh: &Mesh, u: &DiscreteField, t: usize, p: f64, shift: &[f64]) -> f64 {
    let tri = mesh.triangles[t];
    let area = mesh.triangle_area(t);
    let m = u.m;
    QUAD7
        .iter()
        .map(|(bary, w)| {
            let mut norm2 = 0.0;
            for alpha in 0..m {
                let v: f64 = (0..3).map(|k| bary[k] * u.values[tri[k] * m + alpha]).sum::<f64>() - shift[alpha];
                norm2 += v * v;
            }
            w * norm2.powf(0.5 * p)
        })
        .sum::<f64>()
        * area
}

/// `∫_T u` per component.
pub fn triangle_mean_integral(mesh: &Mesh, u: &DiscreteField, t: usize) -> Vec<f64> {
    let tri = mesh.triangles[t];
    let area = mesh.triangle_area(t);
    (0..u.m)
        .map(|alpha| area / 3.0 * tri.iter().map(|&v| u.values[v * u.m + alpha]).sum::<f64>())
        .collect()
}

/// L², H¹-seminorm and `L^p` gradient norms of a P1 field.
pub fn norms(mesh: &Mesh, u: &DiscreteField, p: f64) -> Result<DiscreteNorms> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::InvalidParameter(format!("p = {p} must be finite and >= 1")));
    }
    let mut l2 = 0.0;
    let mut h1 = 0.0;
    let mut lp = 0.0;
    for t in 0..mesh.triangles.len() {
        let area = mesh.triangle_area(t);
        l2 += triangle_inner(mesh, u, u, t);
        let g = gradient_norm(mesh, u, t);
        h1 += area * g * g;
        lp += area * g.powf(p);
    }
    Ok(DiscreteNorms {
        l2: l2.max(0.0).sqrt(),
        h1_seminorm: h1.sqrt(),
        lp_gradient: lp.powf(1.0 / p),
        p,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{laplacian_tensor, preset};
    use crate::geometry::{build_rectangle, Rect};

    fn unit_square(h: f64) -> Mesh {
        build_rectangle(Rect::new(0.0, 0.0, 1.0, 1.0), h).unwrap()
    }

    #[test]
    fn reference_triangle_stiffness() {
        // one cell of pitch 1 holds the triangle (0,0),(1,0),(1,1); use the other half
        let mesh = build_rectangle(Rect::new(0.0, 0.0, 1.0, 1.0), 1.0).unwrap();
        let lap = laplacian_tensor(1).unwrap();
        // triangle 1 is (0,0),(1,1),(0,1): right angle at (0,1)
        let k = element_stiffness(&mesh, 1, &lap);
        let expected = [[0.5, 0.0, -0.5], [0.0, 0.5, -0.5], [-0.5, -0.5, 1.0]];
        for r in 0..3 {
            for c in 0..3 {
                assert!((k[(r, c)] - expected[r][c]).abs() < 1e-15, "{r} {c}");
            }
        }
        let mm = element_mass(0.5);
        assert!((mm[0][0] - 2.0 / 24.0).abs() < 1e-15);
        assert!((mm[0][1] - 1.0 / 24.0).abs() < 1e-15);
    }

    #[test]
    fn centre_node_entries() {
        let mesh = unit_square(0.5);
        let b = assemble_stiffness(&mesh, &laplacian_tensor(1).unwrap()).unwrap();
        assert_eq!(b.dim(), 1);
        assert!((b.get(0, 0) - 4.0).abs() < 1e-14);
        let m = assemble_mass(&mesh, 1).unwrap();
        // all eight triangles touch the centre node: 8 · (1/8)/6
        assert!((m.get(0, 0) - 1.0 / 6.0).abs() < 1e-15);
        let u = [1.0];
        assert!((rayleigh_quotient(&b, &m, &u).unwrap() - 24.0).abs() < 1e-12);
    }

    #[test]
    fn empty_interior() {
        let mesh = build_rectangle(Rect::new(0.0, 0.0, 1.0, 1.0), 1.0).unwrap();
        assert!(matches!(assemble_mass(&mesh, 1), Err(Error::EmptyInterior)));
        assert!(matches!(
            assemble_stiffness(&mesh, &laplacian_tensor(1).unwrap()),
            Err(Error::EmptyInterior)
        ));
    }

    #[test]
    fn rayleigh_quotient_edge_cases() {
        let mesh = unit_square(0.25);
        let m = assemble_mass(&mesh, 1).unwrap();
        let u: Vec<f64> = (0..m.dim()).map(|i| 1.0 + i as f64).collect();
        assert!((rayleigh_quotient(&m, &m, &u).unwrap() - 1.0).abs() < 1e-14);
        assert!(matches!(rayleigh_quotient(&m, &m, &vec![0.0; m.dim()]), Err(Error::ZeroVector)));
    }

    #[test]
    fn norms_examples() {
        let mesh = unit_square(0.5);
        let zero = DiscreteField::zeros(&mesh, 1);
        let n = norms(&mesh, &zero, 2.0).unwrap();
        assert_eq!((n.l2, n.h1_seminorm, n.lp_gradient), (0.0, 0.0, 0.0));
        let hat = DiscreteField::from_dofs(&mesh, 1, &[1.0]).unwrap();
        let n = norms(&mesh, &hat, 2.0).unwrap();
        assert!((n.h1_seminorm.powi(2) - 4.0).abs() < 1e-13);
        assert!((n.lp_gradient - n.h1_seminorm).abs() < 1e-12);
        assert!((n.l2.powi(2) - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn power_integral_exact_for_quartic() {
        let mesh = unit_square(0.5);
        let f = DiscreteField::interpolate_all(&mesh, 1, |x| vec![x[0]]);
        // ∫_0^1∫_0^1 x^4 = 1/5
        let total: f64 = (0..mesh.triangles.len()).map(|t| triangle_power_integral(&mesh, &f, t, 4.0, &[0.0])).sum();
        assert!((total - 0.2).abs() < 1e-14);
    }

    #[test]
    fn lame_symmetric() {
        let mesh = unit_square(0.125);
        let t = preset("lame_checkerboard", &serde_json::json!({})).unwrap();
        let b = assemble_stiffness(&mesh, &t).unwrap();
        let d = b.to_dense();
        assert!((&d - d.transpose()).amax() <= 1e-12);
    }
}
