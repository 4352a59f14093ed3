//! Coefficient tensors `a^{αβ}_{ij}(x)` for the three ellipticity regimes,
//! plus piecewise-linear vector fields and their strain.
//!
//! A tensor evaluated at a point is stored as the `(m·n) × (m·n)` matrix whose
//! row `(α, i)` and column `(β, j)` hold `a^{αβ}_{ij}`; the quadratic form
//! `a^{αβ}_{ij} ξ^α_i ξ^β_j` is then `ξᵀ A ξ` with `ξ` flattened component-major.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Mesh;

/// Spatial dimension handled by the library.
pub const DIM: usize = 2;

/// Names accepted by [`preset`].
pub const PRESET_NAMES: [&str; 5] = [
    "laplacian",
    "lame_const",
    "lame_checkerboard",
    "general_const",
    "lh_null_lagrangian",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    StrongLegendre,
    Lame,
    LegendreHadamard,
}

/// Bounded measurable scalar coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalarField {
    Constant(f64),
    /// `values[0]` on cells `(⌊x/cell⌋ + ⌊y/cell⌋)` even, `values[1]` on odd cells.
    Checkerboard { values: [f64; 2], cell: f64 },
}

impl ScalarField {
    pub fn eval(&self, x: [f64; 2]) -> f64 {
        match self {
            ScalarField::Constant(c) => *c,
            ScalarField::Checkerboard { values, cell } => {
                let parity = ((x[0] / cell).floor() as i64 + (x[1] / cell).floor() as i64).rem_euclid(2);
                values[parity as usize]
            }
        }
    }

    pub fn inf(&self) -> f64 {
        match self {
            ScalarField::Constant(c) => *c,
            ScalarField::Checkerboard { values, .. } => values[0].min(values[1]),
        }
    }

    pub fn sup(&self) -> f64 {
        match self {
            ScalarField::Constant(c) => *c,
            ScalarField::Checkerboard { values, .. } => values[0].max(values[1]),
        }
    }

    fn samples(&self) -> Vec<f64> {
        match self {
            ScalarField::Constant(c) => vec![*c],
            ScalarField::Checkerboard { values, .. } => values.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum TensorKind {
    Constant(DMatrix<f64>),
    Lame { upsilon: ScalarField, mu: ScalarField },
}

/// `a^{αβ}_{ij}(x)` with its regime and ellipticity metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTensor {
    pub m: usize,
    pub regime: Regime,
    /// `M = sup |a^{αβ}_{ij}|`.
    pub sup_bound: f64,
    /// Strong or Legendre–Hadamard constant, when known.
    pub theta: Option<f64>,
    /// Lamé: `δ = inf μ` and `τ = 2δ`.
    pub delta: Option<f64>,
    pub tau: Option<f64>,
    kind: TensorKind,
}

#[inline]
pub fn flat(n: usize, alpha: usize, i: usize) -> usize {
    alpha * n + i
}

fn lame_matrix(upsilon: f64, mu: f64) -> DMatrix<f64> {
    let n = DIM;
    let mut a = DMatrix::zeros(n * n, n * n);
    let d = |p: usize, q: usize| if p == q { 1.0 } else { 0.0 };
    for alpha in 0..n {
        for beta in 0..n {
            for i in 0..n {
                for j in 0..n {
                    a[(flat(n, alpha, i), flat(n, beta, j))] = upsilon * d(i, alpha) * d(j, beta)
                        + mu * d(i, j) * d(alpha, beta)
                        + mu * d(i, beta) * d(j, alpha);
                }
            }
        }
    }
    a
}

fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

impl CoefficientTensor {
    /// Constant tensor from its `(m·n) × (m·n)` form matrix.
    pub fn constant(m: usize, form: DMatrix<f64>, regime: Regime, theta: Option<f64>) -> Result<Self> {
        let size = m * DIM;
        if m == 0 || form.nrows() != size || form.ncols() != size {
            return Err(Error::InvalidParameters(format!("form matrix must be {size}x{size}")));
        }
        let asym = (&form - form.transpose()).amax();
        if asym > 1e-14 * (1.0 + max_abs(&form)) {
            return Err(Error::InvalidParameters(format!("form matrix is not symmetric ({asym:e})")));
        }
        Ok(CoefficientTensor {
            m,
            regime,
            sup_bound: max_abs(&form),
            theta,
            delta: None,
            tau: None,
            kind: TensorKind::Constant(form),
        })
    }

    pub fn component_count(&self) -> usize {
        self.m
    }

    /// Form matrix at `x`.
    pub fn evaluate(&self, x: [f64; 2]) -> DMatrix<f64> {
        match &self.kind {
            TensorKind::Constant(a) => a.clone(),
            TensorKind::Lame { upsilon, mu } => lame_matrix(upsilon.eval(x), mu.eval(x)),
        }
    }

    /// `a^{αβ}_{ij}(x)`.
    pub fn entry(&self, x: [f64; 2], alpha: usize, beta: usize, i: usize, j: usize) -> f64 {
        self.evaluate(x)[(flat(DIM, alpha, i), flat(DIM, beta, j))]
    }

    pub fn is_piecewise_constant(&self) -> bool {
        true
    }

    /// Lamé moduli, when this is a Lamé tensor.
    pub fn lame_moduli(&self) -> Option<(&ScalarField, &ScalarField)> {
        match &self.kind {
            TensorKind::Lame { upsilon, mu } => Some((upsilon, mu)),
            TensorKind::Constant(_) => None,
        }
    }
}

/// Lamé tensor `υ δ_{iα}δ_{jβ} + μ δ_{ij}δ_{αβ} + μ δ_{iβ}δ_{jα}`.
pub fn lame_tensor(upsilon: ScalarField, mu: ScalarField) -> Result<CoefficientTensor> {
    let delta = mu.inf();
    if !(delta > 0.0) {
        return Err(Error::NonPositiveMu(delta));
    }
    if upsilon.inf() < 0.0 {
        return Err(Error::NegativeUpsilon(upsilon.inf()));
    }
    let mut sup = 0.0f64;
    for u in upsilon.samples() {
        for m in mu.samples() {
            sup = sup.max(max_abs(&lame_matrix(u, m)));
        }
    }
    Ok(CoefficientTensor {
        m: DIM,
        regime: Regime::Lame,
        sup_bound: sup,
        theta: None,
        delta: Some(delta),
        tau: Some(2.0 * delta),
        kind: TensorKind::Lame { upsilon, mu },
    })
}

/// Scalar Laplacian applied componentwise: `a^{αβ}_{ij} = δ_{αβ} δ_{ij}`.
pub fn laplacian_tensor(m: usize) -> Result<CoefficientTensor> {
    CoefficientTensor::constant(m, DMatrix::identity(m * DIM, m * DIM), Regime::StrongLegendre, Some(1.0))
}

/// `|ξ|² + γ det ξ` (m = n = 2), constant coefficients.
pub fn null_lagrangian_tensor(gamma: f64) -> Result<CoefficientTensor> {
    let mut a = DMatrix::identity(4, 4);
    let half = 0.5 * gamma;
    // det ξ = ξ^1_1 ξ^2_2 - ξ^1_2 ξ^2_1
    let (x11, x12, x21, x22) = (flat(2, 0, 0), flat(2, 0, 1), flat(2, 1, 0), flat(2, 1, 1));
    a[(x11, x22)] += half;
    a[(x22, x11)] += half;
    a[(x12, x21)] -= half;
    a[(x21, x12)] -= half;
    let regime = if gamma.abs() < 2.0 {
        Regime::StrongLegendre
    } else {
        Regime::LegendreHadamard
    };
    let theta = if gamma.abs() < 2.0 { 1.0 - 0.5 * gamma.abs() } else { 1.0 };
    CoefficientTensor::constant(2, a, regime, Some(theta))
}

/// Default anisotropic form used by `general_const` when no matrix is supplied.
pub fn default_general_form() -> DMatrix<f64> {
    DMatrix::from_row_slice(
        4,
        4,
        &[
            3.0, 0.5, 0.2, 0.4, //
            0.5, 1.5, 0.3, 0.1, //
            0.2, 0.3, 1.5, 0.2, //
            0.4, 0.1, 0.2, 2.5,
        ],
    )
}

fn one() -> usize {
    1
}
fn unit() -> f64 {
    1.0
}
fn default_checker_upsilon() -> [f64; 2] {
    [0.0, 1.0]
}
fn default_checker_mu() -> [f64; 2] {
    [1.0, 2.0]
}
fn default_cell() -> f64 {
    0.25
}
fn default_gamma() -> f64 {
    3.0
}

/// Preset selection, serialized as `{"preset": "<name>", ...params}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum Preset {
    Laplacian {
        #[serde(default = "one")]
        m: usize,
    },
    LameConst {
        #[serde(default = "unit")]
        upsilon: f64,
        #[serde(default = "unit")]
        mu: f64,
    },
    LameCheckerboard {
        #[serde(default = "default_checker_upsilon")]
        upsilon: [f64; 2],
        #[serde(default = "default_checker_mu")]
        mu: [f64; 2],
        #[serde(default = "default_cell")]
        cell: f64,
    },
    GeneralConst {
        #[serde(default)]
        matrix: Option<Vec<Vec<f64>>>,
    },
    LhNullLagrangian {
        #[serde(default = "default_gamma")]
        gamma: f64,
    },
}

impl Preset {
    pub fn name(&self) -> &'static str {
        match self {
            Preset::Laplacian { .. } => "laplacian",
            Preset::LameConst { .. } => "lame_const",
            Preset::LameCheckerboard { .. } => "lame_checkerboard",
            Preset::GeneralConst { .. } => "general_const",
            Preset::LhNullLagrangian { .. } => "lh_null_lagrangian",
        }
    }

    pub fn component_count(&self) -> usize {
        match self {
            Preset::Laplacian { m } => *m,
            _ => 2,
        }
    }

    /// Parses `{"preset": name, ...}`, reporting unknown names as [`Error::UnknownPreset`].
    pub fn from_json(value: &serde_json::Value) -> Result<Preset> {
        let name = value
            .get("preset")
            .and_then(|v| v.as_str())
            .ok_or_else(|| Error::InvalidParameters("missing \"preset\" key".into()))?;
        if !PRESET_NAMES.contains(&name) {
            return Err(Error::UnknownPreset(name.to_string()));
        }
        serde_json::from_value(value.clone()).map_err(|e| Error::InvalidParameters(e.to_string()))
    }

    pub fn build(&self) -> Result<CoefficientTensor> {
        match self {
            Preset::Laplacian { m } => laplacian_tensor(*m),
            Preset::LameConst { upsilon, mu } => lame_tensor(ScalarField::Constant(*upsilon), ScalarField::Constant(*mu)),
            Preset::LameCheckerboard { upsilon, mu, cell } => {
                if !(*cell > 0.0) {
                    return Err(Error::InvalidParameters("checkerboard cell must be positive".into()));
                }
                lame_tensor(
                    ScalarField::Checkerboard { values: *upsilon, cell: *cell },
                    ScalarField::Checkerboard { values: *mu, cell: *cell },
                )
            }
            Preset::GeneralConst { matrix } => {
                let form = match matrix {
                    None => default_general_form(),
                    Some(rows) => {
                        let size = rows.len();
                        if size == 0 || size % DIM != 0 || rows.iter().any(|r| r.len() != size) {
                            return Err(Error::InvalidParameters("matrix must be square with side m*2".into()));
                        }
                        DMatrix::from_fn(size, size, |i, j| rows[i][j])
                    }
                };
                let m = form.nrows() / DIM;
                let probe = CoefficientTensor::constant(m, form.clone(), Regime::StrongLegendre, None)?;
                let strong = check_strong_ellipticity(&probe, &[[0.0, 0.0]], 1);
                if strong > 0.0 {
                    return CoefficientTensor::constant(m, form, Regime::StrongLegendre, Some(strong));
                }
                let lh = check_legendre_hadamard(&probe, &[[0.0, 0.0]], 720);
                if lh > 0.0 {
                    CoefficientTensor::constant(m, form, Regime::LegendreHadamard, Some(lh))
                } else {
                    Err(Error::InvalidParameters(format!(
                        "general_const form is not elliptic (strong {strong:e}, LH {lh:e})"
                    )))
                }
            }
            Preset::LhNullLagrangian { gamma } => null_lagrangian_tensor(*gamma),
        }
    }
}

/// Builds a named preset from a parameter object (the `preset` key is optional there).
pub fn preset(name: &str, params: &serde_json::Value) -> Result<CoefficientTensor> {
    let mut obj = match params {
        serde_json::Value::Object(map) => map.clone(),
        serde_json::Value::Null => serde_json::Map::new(),
        _ => return Err(Error::InvalidParameters("parameters must be a JSON object".into())),
    };
    obj.insert("preset".into(), serde_json::Value::String(name.to_string()));
    Preset::from_json(&serde_json::Value::Object(obj))?.build()
}

fn sample_set(points: &[[f64; 2]], extra: usize, seed: u64) -> Vec<[f64; 2]> {
    let mut all = points.to_vec();
    if extra > 0 && !points.is_empty() {
        let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        for p in points {
            x0 = x0.min(p[0]);
            y0 = y0.min(p[1]);
            x1 = x1.max(p[0]);
            y1 = y1.max(p[1]);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..extra {
            let fx: f64 = rng.gen();
            let fy: f64 = rng.gen();
            all.push([x0 + fx * (x1 - x0), y0 + fy * (y1 - y0)]);
        }
    }
    all
}

/// Smallest eigenvalue of the form matrix, minimized over the sample points plus
/// `trial_count` seeded points drawn from their bounding box.
///
/// Equals `inf_ξ a ξ ξ / |ξ|²`; a negative value means the strong condition fails.
pub fn check_strong_ellipticity(tensor: &CoefficientTensor, sample_points: &[[f64; 2]], trial_count: usize) -> f64 {
    let pts = sample_set(sample_points, trial_count.saturating_sub(1), 0x5eed);
    pts.par_iter()
        .map(|&x| SymmetricEigen::new(tensor.evaluate(x)).eigenvalues.min())
        .reduce(|| f64::INFINITY, f64::min)
}

/// `min a^{αβ}_{ij} ξ_α ξ_β ψ_i ψ_j` over unit `ξ`, unit `ψ` and the sample points.
///
/// `ψ` ranges over `direction_grid` angles in `[0, π)`; for each `ψ` the minimum over
/// unit `ξ ∈ R^m` is the smallest eigenvalue of `Q_{αβ}(ψ) = a^{αβ}_{ij} ψ_i ψ_j`.
pub fn check_legendre_hadamard(tensor: &CoefficientTensor, sample_points: &[[f64; 2]], direction_grid: usize) -> f64 {
    let m = tensor.m;
    let steps = direction_grid.max(1);
    sample_points
        .par_iter()
        .map(|&x| {
            let a = tensor.evaluate(x);
            let mut best = f64::INFINITY;
            for s in 0..steps {
                let t = std::f64::consts::PI * s as f64 / steps as f64;
                let psi = [t.cos(), t.sin()];
                let q = DMatrix::from_fn(m, m, |alpha, beta| {
                    let mut v = 0.0;
                    for i in 0..DIM {
                        for j in 0..DIM {
                            v += a[(flat(DIM, alpha, i), flat(DIM, beta, j))] * psi[i] * psi[j];
                        }
                    }
                    v
                });
                best = best.min(SymmetricEigen::new(q).eigenvalues.min());
            }
            best
        })
        .reduce(|| f64::INFINITY, f64::min)
}

/// Largest symmetry defect `|a^{αβ}_{ij} - a^{βα}_{ji}|` over the given points.
pub fn symmetry_defect(tensor: &CoefficientTensor, points: &[[f64; 2]]) -> f64 {
    points
        .iter()
        .map(|&x| {
            let a = tensor.evaluate(x);
            (&a - a.transpose()).amax()
        })
        .fold(0.0, f64::max)
}

/// Piecewise-linear vector field: one `m`-vector per mesh vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteField {
    pub m: usize,
    pub values: Vec<f64>,
}

impl DiscreteField {
    pub fn zeros(mesh: &Mesh, m: usize) -> Self {
        DiscreteField {
            m,
            values: vec![0.0; m * mesh.num_vertices()],
        }
    }

    /// Interpolates `f` at interior vertices; boundary vertices are left at zero.
    pub fn interpolate(mesh: &Mesh, m: usize, f: impl Fn([f64; 2]) -> Vec<f64>) -> Self {
        let mut field = Self::zeros(mesh, m);
        for &v in &mesh.interior_nodes {
            let val = f(mesh.vertices[v]);
            field.values[v * m..(v + 1) * m].copy_from_slice(&val[..m]);
        }
        field
    }

    /// Interpolates `f` at every vertex, boundary included (not an `H¹_0` field).
    pub fn interpolate_all(mesh: &Mesh, m: usize, f: impl Fn([f64; 2]) -> Vec<f64>) -> Self {
        let mut field = Self::zeros(mesh, m);
        for (v, &x) in mesh.vertices.iter().enumerate() {
            let val = f(x);
            field.values[v * m..(v + 1) * m].copy_from_slice(&val[..m]);
        }
        field
    }

    /// Expands interior coefficients (`node * m + α` layout) to all vertices.
    pub fn from_dofs(mesh: &Mesh, m: usize, dofs: &[f64]) -> Result<Self> {
        if dofs.len() != m * mesh.num_interior() {
            return Err(Error::DimensionMismatch(format!(
                "{} coefficients for {} interior nodes with m = {m}",
                dofs.len(),
                mesh.num_interior()
            )));
        }
        let mut field = Self::zeros(mesh, m);
        for (d, &v) in mesh.interior_nodes.iter().enumerate() {
            field.values[v * m..(v + 1) * m].copy_from_slice(&dofs[d * m..(d + 1) * m]);
        }
        Ok(field)
    }

    pub fn to_dofs(&self, mesh: &Mesh) -> Vec<f64> {
        let m = self.m;
        let mut out = Vec::with_capacity(m * mesh.num_interior());
        for &v in &mesh.interior_nodes {
            out.extend_from_slice(&self.values[v * m..(v + 1) * m]);
        }
        out
    }

    /// Seeded random values at interior vertices, uniform in `[-1, 1]`.
    pub fn random(mesh: &Mesh, m: usize, rng: &mut impl Rng) -> Self {
        let mut field = Self::zeros(mesh, m);
        for &v in &mesh.interior_nodes {
            for a in 0..m {
                field.values[v * m + a] = rng.gen_range(-1.0..1.0);
            }
        }
        field
    }

    pub fn at(&self, v: usize) -> &[f64] {
        &self.values[v * self.m..(v + 1) * self.m]
    }

    /// Constant gradient on triangle `t`: `grad[α][i] = ∂_i u^α`.
    pub fn gradient(&self, mesh: &Mesh, t: usize) -> Vec<[f64; 2]> {
        let g = mesh.shape_gradients(t);
        let tri = mesh.triangles[t];
        (0..self.m)
            .map(|alpha| {
                let mut d = [0.0; 2];
                for (k, &v) in tri.iter().enumerate() {
                    let val = self.values[v * self.m + alpha];
                    d[0] += val * g[k][0];
                    d[1] += val * g[k][1];
                }
                d
            })
            .collect()
    }

    /// True when every non-interior vertex carries zero.
    pub fn satisfies_dirichlet(&self, mesh: &Mesh) -> bool {
        (0..mesh.num_vertices())
            .filter(|&v| !mesh.is_interior(v))
            .all(|v| self.at(v).iter().all(|&x| x == 0.0))
    }
}

/// Per-triangle strain `κ_{ij} = (u^i_j + u^j_i)/2`.
pub fn strain(mesh: &Mesh, u: &DiscreteField) -> Result<Vec<[[f64; 2]; 2]>> {
    if u.m != DIM {
        return Err(Error::ComponentMismatch { expected: DIM, got: u.m });
    }
    Ok((0..mesh.triangles.len())
        .map(|t| {
            let g = u.gradient(mesh, t);
            let mut k = [[0.0; 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    k[i][j] = 0.5 * (g[i][j] + g[j][i]);
                }
            }
            k
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_rectangle, Rect};

    fn lame11() -> CoefficientTensor {
        lame_tensor(ScalarField::Constant(1.0), ScalarField::Constant(1.0)).unwrap()
    }

    #[test]
    fn lame_entries() {
        let t = lame11();
        let x = [0.3, 0.7];
        assert_eq!(t.entry(x, 0, 0, 0, 0), 3.0);
        assert_eq!(t.entry(x, 0, 1, 0, 1), 1.0);
        assert_eq!(t.entry(x, 0, 1, 1, 0), 1.0);
        let t0 = lame_tensor(ScalarField::Constant(0.0), ScalarField::Constant(1.0)).unwrap();
        assert_eq!(t0.entry(x, 0, 0, 0, 0), 2.0);
        assert_eq!(t.tau, Some(2.0));
        assert_eq!(t.sup_bound, 3.0);
    }

    #[test]
    fn lame_rejects_bad_moduli() {
        assert!(matches!(
            lame_tensor(ScalarField::Constant(1.0), ScalarField::Constant(0.0)),
            Err(Error::NonPositiveMu(_))
        ));
        assert!(matches!(
            lame_tensor(ScalarField::Constant(-1.0), ScalarField::Constant(1.0)),
            Err(Error::NegativeUpsilon(_))
        ));
    }

    #[test]
    fn strain_examples() {
        let mesh = build_rectangle(Rect::new(0.0, 0.0, 1.0, 1.0), 0.25).unwrap();
        let rot = DiscreteField::interpolate_all(&mesh, 2, |x| vec![x[1], -x[0]]);
        for k in strain(&mesh, &rot).unwrap() {
            assert!(k.iter().flatten().all(|v| v.abs() < 1e-12));
        }
        let dil = DiscreteField::interpolate_all(&mesh, 2, |x| vec![x[0], x[1]]);
        for k in strain(&mesh, &dil).unwrap() {
            let norm2: f64 = k.iter().flatten().map(|v| v * v).sum();
            assert!((norm2 - 2.0).abs() < 1e-12);
        }
        let zero = DiscreteField::zeros(&mesh, 2);
        assert!(strain(&mesh, &zero).unwrap().iter().flatten().flatten().all(|&v| v == 0.0));
        let scalar = DiscreteField::zeros(&mesh, 1);
        assert!(matches!(strain(&mesh, &scalar), Err(Error::ComponentMismatch { .. })));
    }

    #[test]
    fn strong_ellipticity_values() {
        let pts = [[0.5, 0.5]];
        let lap = preset("laplacian", &serde_json::json!({"m": 1})).unwrap();
        assert!((check_strong_ellipticity(&lap, &pts, 1) - 1.0).abs() < 1e-14);
        let nl = preset("lh_null_lagrangian", &serde_json::json!({"gamma": 3.0})).unwrap();
        assert!((check_strong_ellipticity(&nl, &pts, 1) + 0.5).abs() < 1e-12);
        assert_eq!(nl.regime, Regime::LegendreHadamard);
        // the Lamé form vanishes on skew-symmetric matrices
        assert!(check_strong_ellipticity(&lame11(), &pts, 1).abs() < 1e-12);
    }

    #[test]
    fn legendre_hadamard_values() {
        let pts = [[0.5, 0.5]];
        let lap = laplacian_tensor(1).unwrap();
        assert!((check_legendre_hadamard(&lap, &pts, 720) - 1.0).abs() < 1e-12);
        let nl = null_lagrangian_tensor(3.0).unwrap();
        assert!((check_legendre_hadamard(&nl, &pts, 720) - 1.0).abs() < 1e-6);
        assert!((check_legendre_hadamard(&lame11(), &pts, 720) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn unknown_preset() {
        assert!(matches!(preset("nope", &serde_json::json!({})), Err(Error::UnknownPreset(_))));
        let p = Preset::from_json(&serde_json::json!({"preset": "lame_const", "upsilon": 1.0, "mu": 1.0})).unwrap();
        assert_eq!(p, Preset::LameConst { upsilon: 1.0, mu: 1.0 });
        assert!(Preset::from_json(&serde_json::json!({"preset": "lame_const", "nu": 1.0})).is_err());
    }

    #[test]
    fn checkerboard_symmetry() {
        let t = preset("lame_checkerboard", &serde_json::json!({"upsilon": [0.0, 1.0], "mu": [1.0, 2.0]})).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<[f64; 2]> = (0..1000).map(|_| [rng.gen_range(0.0..2.25), rng.gen_range(0.0..1.0)]).collect();
        assert!(symmetry_defect(&t, &pts) <= 1e-14);
        assert_eq!(t.delta, Some(1.0));
        let a = t.evaluate([0.1, 0.1]);
        let b = t.evaluate([0.3, 0.1]);
        assert_ne!(a, b);
    }

    #[test]
    fn general_const_default_is_strong() {
        let t = preset("general_const", &serde_json::Value::Null).unwrap();
        assert_eq!(t.regime, Regime::StrongLegendre);
        assert!(t.theta.unwrap() > 0.0);
        assert!(preset("general_const", &serde_json::json!({"matrix": [[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]})).is_err());
    }

    #[test]
    fn dofs_round_trip() {
        let mesh = build_rectangle(Rect::new(0.0, 0.0, 1.0, 1.0), 0.25).unwrap();
        let dofs: Vec<f64> = (0..2 * mesh.num_interior()).map(|i| i as f64).collect();
        let f = DiscreteField::from_dofs(&mesh, 2, &dofs).unwrap();
        assert!(f.satisfies_dirichlet(&mesh));
        assert_eq!(f.to_dofs(&mesh), dofs);
        assert!(DiscreteField::from_dofs(&mesh, 2, &dofs[1..]).is_err());
    }
}
