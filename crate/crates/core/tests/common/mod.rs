//! Shared test oracles.

use nalgebra::{DMatrix, Matrix2, Vector2};
use spectral_perturb::coefficients::CoefficientTensor;
use spectral_perturb::geometry::Mesh;

/// Dense stiffness and mass built entry by entry from the bilinear forms.
///
/// Gradients come from inverting the element Jacobian and the mass from the
/// edge-midpoint rule, which is exact for products of linear functions.
pub fn brute_force(mesh: &Mesh, tensor: &CoefficientTensor) -> (DMatrix<f64>, DMatrix<f64>) {
    let m = tensor.m;
    let index: Vec<Option<usize>> = (0..mesh.num_vertices())
        .map(|v| mesh.interior_nodes.iter().position(|&w| w == v))
        .collect();
    let n = m * mesh.interior_nodes.len();
    let mut b = DMatrix::zeros(n, n);
    let mut mm = DMatrix::zeros(n, n);
    for tri in &mesh.triangles {
        let p = tri.map(|v| mesh.vertices[v]);
        let jac = Matrix2::new(p[1][0] - p[0][0], p[2][0] - p[0][0], p[1][1] - p[0][1], p[2][1] - p[0][1]);
        let area = 0.5 * jac.determinant().abs();
        let inv_t = jac.try_inverse().unwrap().transpose();
        let ref_grads = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];
        let grads: Vec<[f64; 2]> = ref_grads
            .iter()
            .map(|g| {
                let v = inv_t * Vector2::new(g[0], g[1]);
                [v[0], v[1]]
            })
            .collect();
        let centroid = [
            (p[0][0] + p[1][0] + p[2][0]) / 3.0,
            (p[0][1] + p[1][1] + p[2][1]) / 3.0,
        ];
        // barycentric values at the three edge midpoints
        let mid = [[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]];
        for a in 0..3 {
            let Some(da) = index[tri[a]] else { continue };
            for c in 0..3 {
                let Some(dc) = index[tri[c]] else { continue };
                let phi_phi: f64 = mid.iter().map(|q| q[a] * q[c]).sum::<f64>() * area / 3.0;
                for alpha in 0..m {
                    mm[(da * m + alpha, dc * m + alpha)] += phi_phi;
                    for beta in 0..m {
                        let mut v = 0.0;
                        for i in 0..2 {
                            for j in 0..2 {
                                v += tensor.entry(centroid, alpha, beta, i, j) * grads[a][i] * grads[c][j];
                            }
                        }
                        b[(da * m + alpha, dc * m + beta)] += area * v;
                    }
                }
            }
        }
    }
    (b, mm)
}

pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0, |acc: f64, x| acc.max(x.abs()))
}
