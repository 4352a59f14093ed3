//! Empirical checks of the eigenvalue and eigenfunction inequalities on computed
//! discrete data.
//!
//! Each check returns an [`InequalityRecord`] holding the left side, the itemized
//! right side and the smallest constant that makes the inequality hold on the data.
//! Ball integrals use the triangles whose centroid lies in the ball; fields are
//! extended by zero outside the mesh, so ball averages divide by `πr²`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::{strain, DiscreteField};
use crate::eigensolve::EigenPair;
use crate::error::{Error, Result};
use crate::fem::{gradient_norm, inner_l2, triangle_inner, triangle_power_integral};
use crate::geometry::{CutoffField, Mesh};
use crate::sparse::{dot, EnvelopeCholesky, SparseSymMatrix};

/// Relative slack for the discrete monotonicity check.
pub const MONOTONICITY_TOL: f64 = 1e-10;
pub const KORN_BUDGET: f64 = 25.0;
pub const SOBOLEV_POINCARE_BUDGET: f64 = 1.0;
pub const CACCIOPPOLI_BUDGET: f64 = 100.0;
pub const REVERSE_HOLDER_BUDGET: f64 = 10.0;
pub const GRADIENT_LP_BUDGET: f64 = 10.0;
/// Sobolev–Poincaré exponent pair used in two dimensions.
pub const SP_P: f64 = 4.0 / 3.0;
pub const SP_Q: f64 = 4.0;
/// Required `|S| / r²` for the averaging subset.
pub const SUBSET_DENSITY: f64 = 0.25;
pub const P_TILDE_RANGE: (f64, f64) = (2.0, 2.5);
pub const DEFAULT_P_TILDE: f64 = 2.25;
pub const DEFAULT_Q: f64 = 1.9;
pub const DEFAULT_C3: f64 = 0.5;

pub const CHECK_NAMES: [&str; 10] = [
    "monotonicity",
    "korn_ball",
    "sobolev_poincare",
    "caccioppoli",
    "reverse_holder",
    "gradient_lp",
    "near_orthonormality",
    "quasimode_residual",
    "projector_distance",
    "garding",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: [f64; 2],
    pub radius: f64,
}

impl Ball {
    pub fn new(center: [f64; 2], radius: f64) -> Self {
        Ball { center, radius }
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        let dx = p[0] - self.center[0];
        let dy = p[1] - self.center[1];
        dx * dx + dy * dy < self.radius * self.radius
    }

    pub fn area(&self) -> f64 {
        PI * self.radius * self.radius
    }

    pub fn scaled(&self, factor: f64) -> Ball {
        Ball::new(self.center, factor * self.radius)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityRecord {
    pub name: String,
    pub epsilon: Option<f64>,
    pub parameters: BTreeMap<String, f64>,
    pub lhs: f64,
    pub rhs_components: BTreeMap<String, f64>,
    pub rhs: f64,
    /// Smallest constant making the inequality hold on the sample set; never negative.
    pub empirical_constant: f64,
    /// Largest acceptable constant; `None` when only the trend across a schedule is judged.
    pub budget: Option<f64>,
    pub pass: bool,
}

impl InequalityRecord {
    /// Record for `lhs ≤ C · Σ components`, passing iff the required `C` is within `budget`.
    pub fn ratio(name: &str, lhs: f64, components: &[(&str, f64)], budget: f64) -> Self {
        let rhs: f64 = components.iter().map(|(_, v)| v).sum();
        let constant = required_constant(lhs, rhs);
        InequalityRecord {
            name: name.to_string(),
            epsilon: None,
            parameters: BTreeMap::new(),
            lhs,
            rhs_components: components.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            rhs,
            empirical_constant: constant,
            budget: Some(budget),
            pass: constant <= budget,
        }
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = Some(epsilon);
        self
    }

    pub fn with_param(mut self, key: &str, value: f64) -> Self {
        self.parameters.insert(key.to_string(), value);
        self
    }

    pub fn to_json_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

fn required_constant(lhs: f64, rhs: f64) -> f64 {
    if lhs <= 0.0 {
        0.0
    } else if rhs <= 0.0 {
        f64::INFINITY
    } else {
        lhs / rhs
    }
}

/// One JSON object per line.
pub fn records_jsonl(records: &[InequalityRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&r.to_json_line()?);
        out.push('\n');
    }
    Ok(out)
}

/// CSV with header `name,epsilon,constant,pass`; a missing epsilon is an empty cell.
pub fn records_summary_csv(records: &[InequalityRecord]) -> String {
    let mut out = String::from("name,epsilon,constant,pass\n");
    for r in records {
        let eps = r.epsilon.map(|e| format!("{e}")).unwrap_or_default();
        out.push_str(&format!("{},{},{:e},{}\n", r.name, eps, r.empirical_constant, r.pass));
    }
    out
}

/// A spectrum together with the mesh width it was computed at.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum<'a> {
    pub h: f64,
    pub sigma: &'a [f64],
}

fn same_h(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

/// `σ^ε_k ≤ σ^0_k + tol·|σ^0_k|` for `k ≤ k_max`; the record's constant is `max σ^ε_k / σ^0_k`.
pub fn check_monotonicity(sigma_eps: &Spectrum, sigma_0: &Spectrum, k_max: usize) -> Result<InequalityRecord> {
    if !same_h(sigma_eps.h, sigma_0.h) {
        return Err(Error::NotNested(format!(
            "spectra computed at h = {} and h = {}",
            sigma_eps.h, sigma_0.h
        )));
    }
    if k_max == 0 || sigma_eps.sigma.len() < k_max || sigma_0.sigma.len() < k_max {
        return Err(Error::InvalidParameter(format!(
            "k_max = {k_max} with spectra of length {} and {}",
            sigma_eps.sigma.len(),
            sigma_0.sigma.len()
        )));
    }
    let mut worst_excess = f64::NEG_INFINITY;
    let mut ratio = f64::NEG_INFINITY;
    let mut components = BTreeMap::new();
    for k in 0..k_max {
        let (se, s0) = (sigma_eps.sigma[k], sigma_0.sigma[k]);
        worst_excess = worst_excess.max((se - s0) / s0.abs().max(f64::MIN_POSITIVE));
        ratio = ratio.max(se / s0);
        components.insert(format!("sigma_0_{}", k + 1), s0);
        components.insert(format!("sigma_eps_{}", k + 1), se);
    }
    Ok(InequalityRecord {
        name: "monotonicity".into(),
        epsilon: None,
        parameters: BTreeMap::from([("k_max".to_string(), k_max as f64), ("h".to_string(), sigma_0.h)]),
        lhs: worst_excess,
        rhs_components: components,
        rhs: MONOTONICITY_TOL,
        empirical_constant: ratio.max(0.0),
        budget: Some(1.0 + MONOTONICITY_TOL),
        pass: worst_excess <= MONOTONICITY_TOL,
    })
}

/// Checks that `coarse` is a sub-mesh of `fine` with identical width and compatible interior.
pub fn verify_nested(coarse: &Mesh, fine: &Mesh) -> Result<()> {
    if !same_h(coarse.h, fine.h) {
        return Err(Error::NotNested(format!("mesh widths {} and {}", coarse.h, fine.h)));
    }
    let fine_keys = fine.triangle_keys();
    if let Some(t) = coarse.triangle_keys().iter().find(|t| !fine_keys.contains(*t)) {
        return Err(Error::NotNested(format!("triangle {t:?} missing from the larger mesh")));
    }
    for &v in &coarse.interior_nodes {
        let g = coarse.lattice_coords(v);
        match fine.vertex_at(g) {
            Some(w) if fine.is_interior(w) => {}
            _ => return Err(Error::NotNested(format!("interior node {g:?} is not interior in the larger mesh"))),
        }
    }
    Ok(())
}

/// Zero extension of `Ω_0` coefficients to the `Ω_ε` degrees of freedom.
pub fn extend_by_zero(coarse: &Mesh, fine: &Mesh, m: usize, dofs: &[f64]) -> Result<Vec<f64>> {
    verify_nested(coarse, fine)?;
    if dofs.len() != m * coarse.num_interior() {
        return Err(Error::DimensionMismatch(format!(
            "{} coefficients for {} interior nodes",
            dofs.len(),
            coarse.num_interior()
        )));
    }
    let mut out = vec![0.0; m * fine.num_interior()];
    for (d, &v) in coarse.interior_nodes.iter().enumerate() {
        let w = fine.vertex_at(coarse.lattice_coords(v)).expect("nested");
        let e = fine.dof_index(w).expect("nested");
        out[e * m..(e + 1) * m].copy_from_slice(&dofs[d * m..(d + 1) * m]);
    }
    Ok(out)
}

/// `η·φ` at the vertices of the larger mesh, as `Ω_ε` coefficients.
pub fn cutoff_product(fine: &Mesh, eta: &CutoffField, m: usize, dofs: &[f64]) -> Result<Vec<f64>> {
    if eta.values.len() != fine.num_vertices() || dofs.len() != m * fine.num_interior() {
        return Err(Error::DimensionMismatch("cutoff or coefficients do not match the mesh".into()));
    }
    let mut out = dofs.to_vec();
    for (d, &v) in fine.interior_nodes.iter().enumerate() {
        out[d * m..(d + 1) * m].iter_mut().for_each(|x| *x *= eta.values[v]);
    }
    Ok(out)
}

/// Restriction of `Ω_ε` coefficients to the interior nodes of the nested `Ω_0` mesh.
pub fn restrict(fine: &Mesh, coarse: &Mesh, m: usize, dofs: &[f64]) -> Result<Vec<f64>> {
    verify_nested(coarse, fine)?;
    if dofs.len() != m * fine.num_interior() {
        return Err(Error::DimensionMismatch(format!(
            "{} coefficients for {} interior nodes",
            dofs.len(),
            fine.num_interior()
        )));
    }
    let mut out = Vec::with_capacity(m * coarse.num_interior());
    for &v in &coarse.interior_nodes {
        let e = fine.dof_index(fine.vertex_at(coarse.lattice_coords(v)).expect("nested")).expect("nested");
        out.extend_from_slice(&dofs[e * m..(e + 1) * m]);
    }
    Ok(out)
}

/// Triangles whose centroid lies in `ball`.
pub fn ball_triangles(mesh: &Mesh, ball: &Ball) -> Vec<usize> {
    (0..mesh.triangles.len())
        .filter(|&t| ball.contains(mesh.centroid(t)))
        .collect()
}

fn integrate<F: Fn(usize) -> f64>(tris: &[usize], f: F) -> f64 {
    tris.iter().map(|&t| f(t)).sum()
}

/// `‖∇u‖² ≤ C(‖κ(u)‖² + r⁻²‖u‖²)` on `B_r`.
pub fn check_korn_ball(mesh: &Mesh, u: &DiscreteField, ball: &Ball) -> Result<InequalityRecord> {
    let kappa = strain(mesh, u)?;
    let tris = ball_triangles(mesh, ball);
    if tris.is_empty() {
        return Err(Error::EmptyBall);
    }
    let grad = integrate(&tris, |t| mesh.triangle_area(t) * gradient_norm(mesh, u, t).powi(2));
    let sym = integrate(&tris, |t| {
        let k = kappa[t];
        mesh.triangle_area(t) * (k[0][0].powi(2) + 2.0 * k[0][1].powi(2) + k[1][1].powi(2))
    });
    let mass = integrate(&tris, |t| triangle_inner(mesh, u, u, t));
    Ok(InequalityRecord::ratio(
        "korn_ball",
        grad,
        &[("strain_l2", sym), ("scaled_l2", mass / ball.radius.powi(2))],
        KORN_BUDGET,
    )
    .with_param("radius", ball.radius)
    .with_param("center_x", ball.center[0])
    .with_param("center_y", ball.center[1]))
}

/// `∫_{B_r}|u − u_S|^q ≤ C (∫_{B_r}|∇u|^p)^{q/p}` with `(p, q) = (4/3, 4)` and
/// `S = B_{fr}` intersected with the mesh.
pub fn check_sobolev_poincare(mesh: &Mesh, u: &DiscreteField, ball: &Ball, s_fraction: f64) -> Result<InequalityRecord> {
    if !(s_fraction > 0.0 && s_fraction <= 1.0) {
        return Err(Error::InvalidParameter(format!("subset fraction {s_fraction} not in (0, 1]")));
    }
    let tris = ball_triangles(mesh, ball);
    if tris.is_empty() {
        return Err(Error::EmptyBall);
    }
    let subset = ball_triangles(mesh, &ball.scaled(s_fraction));
    let measure = integrate(&subset, |t| mesh.triangle_area(t));
    let required = SUBSET_DENSITY * ball.radius.powi(2);
    if measure < required {
        return Err(Error::BadSubset { measure, required });
    }
    let mut mean = vec![0.0; u.m];
    for &t in &subset {
        let part = crate::fem::triangle_mean_integral(mesh, u, t);
        mean.iter_mut().zip(part).for_each(|(a, b)| *a += b);
    }
    mean.iter_mut().for_each(|x| *x /= measure);
    // the zero-extended part of B_r outside the mesh only adds |u_S|^q and is left out
    let lhs = integrate(&tris, |t| triangle_power_integral(mesh, u, t, SP_Q, &mean));
    let grad = integrate(&tris, |t| mesh.triangle_area(t) * gradient_norm(mesh, u, t).powf(SP_P));
    Ok(
        InequalityRecord::ratio("sobolev_poincare", lhs, &[("gradient_lp", grad.powf(SP_Q / SP_P))], SOBOLEV_POINCARE_BUDGET)
            .with_param("radius", ball.radius)
            .with_param("p", SP_P)
            .with_param("q", SP_Q)
            .with_param("subset_fraction", s_fraction)
            .with_param("subset_measure", measure),
    )
}

struct BallAverages {
    grad_sq: f64,
    grad_l1: f64,
    mass: f64,
}

fn ball_averages(mesh: &Mesh, u: &DiscreteField, ball: &Ball) -> BallAverages {
    let tris = ball_triangles(mesh, ball);
    let area = ball.area();
    let mut grad_sq = 0.0;
    let mut grad_l1 = 0.0;
    let mut mass = 0.0;
    for &t in &tris {
        let a = mesh.triangle_area(t);
        let g = gradient_norm(mesh, u, t);
        grad_sq += a * g * g;
        grad_l1 += a * g;
        mass += triangle_inner(mesh, u, u, t);
    }
    BallAverages {
        grad_sq: grad_sq / area,
        grad_l1: grad_l1 / area,
        mass: mass / area,
    }
}

/// Caccioppoli inequality for an eigenfunction:
/// `avg_{B_r}|∇u|² ≤ C₁(avg_{B_2r}|∇u|)² + C₂|σ| avg_{B_2r}|u|² + c₃ avg_{B_2r}|∇u|²`.
///
/// Reports the smallest common `C = C₁ = C₂` over all balls for the given `c₃ < 1`.
pub fn check_caccioppoli(mesh: &Mesh, m: usize, pair: &EigenPair, balls: &[Ball], c3: f64) -> Result<InequalityRecord> {
    if balls.is_empty() {
        return Err(Error::EmptyBall);
    }
    if !(0.0..1.0).contains(&c3) {
        return Err(Error::InvalidParameter(format!("c3 = {c3} not in [0, 1)")));
    }
    let u = DiscreteField::from_dofs(mesh, m, &pair.vector)?;
    let per_ball: Vec<(f64, f64, f64, f64, f64)> = balls
        .par_iter()
        .map(|ball| {
            let inner = ball_averages(mesh, &u, ball);
            let outer = ball_averages(mesh, &u, &ball.scaled(2.0));
            let a = outer.grad_l1 * outer.grad_l1;
            let b = pair.sigma.abs() * outer.mass;
            let c = outer.grad_sq;
            let excess = (inner.grad_sq - c3 * c).max(0.0);
            (required_constant(excess, a + b), inner.grad_sq, a, b, c)
        })
        .collect();
    let (worst, &(constant, lhs, a, b, c)) = per_ball
        .iter()
        .enumerate()
        .max_by(|x, y| x.1 .0.total_cmp(&y.1 .0).then(y.0.cmp(&x.0)))
        .expect("non-empty");
    let radii: Vec<f64> = balls.iter().map(|b| b.radius).collect();
    Ok(InequalityRecord {
        name: "caccioppoli".into(),
        epsilon: None,
        parameters: BTreeMap::from([
            ("balls".to_string(), balls.len() as f64),
            ("c3".to_string(), c3),
            ("worst_ball".to_string(), worst as f64),
            ("worst_radius".to_string(), balls[worst].radius),
            ("min_radius".to_string(), radii.iter().cloned().fold(f64::INFINITY, f64::min)),
            ("max_radius".to_string(), radii.iter().cloned().fold(0.0, f64::max)),
            ("sigma".to_string(), pair.sigma),
        ]),
        lhs,
        rhs_components: BTreeMap::from([
            ("gradient_l1_squared".to_string(), a),
            ("sigma_l2".to_string(), b),
            ("c3_gradient_l2".to_string(), c3 * c),
        ]),
        rhs: constant * (a + b) + c3 * c,
        empirical_constant: constant,
        budget: Some(CACCIOPPOLI_BUDGET),
        pass: constant <= CACCIOPPOLI_BUDGET,
    })
}

fn check_p_tilde(p_tilde: f64) -> Result<()> {
    if !(P_TILDE_RANGE.0..=P_TILDE_RANGE.1).contains(&p_tilde) {
        return Err(Error::InvalidParameter(format!(
            "p_tilde = {p_tilde} outside [{}, {}]",
            P_TILDE_RANGE.0, P_TILDE_RANGE.1
        )));
    }
    Ok(())
}

/// `avg|∇u|^p̃ ≤ C((avg|∇u|²)^{p̃/2} + |σ|^{p̃/2} avg|u|^p̃)` over the whole domain.
pub fn check_reverse_holder(mesh: &Mesh, m: usize, pair: &EigenPair, p_tilde: f64) -> Result<InequalityRecord> {
    check_p_tilde(p_tilde)?;
    let u = DiscreteField::from_dofs(mesh, m, &pair.vector)?;
    let zero = vec![0.0; m];
    let mut area = 0.0;
    let mut grad_p = 0.0;
    let mut grad_2 = 0.0;
    let mut mass_p = 0.0;
    for t in 0..mesh.triangles.len() {
        let a = mesh.triangle_area(t);
        let g = gradient_norm(mesh, &u, t);
        area += a;
        grad_p += a * g.powf(p_tilde);
        grad_2 += a * g * g;
        mass_p += triangle_power_integral(mesh, &u, t, p_tilde, &zero);
    }
    Ok(InequalityRecord::ratio(
        "reverse_holder",
        grad_p / area,
        &[
            ("gradient_l2", (grad_2 / area).powf(0.5 * p_tilde)),
            ("sigma_lp", pair.sigma.abs().powf(0.5 * p_tilde) * mass_p / area),
        ],
        REVERSE_HOLDER_BUDGET,
    )
    .with_param("p_tilde", p_tilde)
    .with_param("sigma", pair.sigma))
}

/// Exponent of `|σ⁰|` in the leading gradient budget term for two dimensions.
pub fn gradient_budget_exponent(p_tilde: f64, q: f64) -> f64 {
    (q * p_tilde + 2.0 * (p_tilde - q)) / (2.0 * q)
}

/// `∫|∇φ|^p̃ ≤ C(|σ⁰|^e + |σ⁰|^{p̃/2} + 1)` with the leading exponent from [`gradient_budget_exponent`].
pub fn check_gradient_lp(
    mesh: &Mesh,
    m: usize,
    pair: &EigenPair,
    p_tilde: f64,
    sigma_0: f64,
    q: f64,
) -> Result<InequalityRecord> {
    check_p_tilde(p_tilde)?;
    if !(q > 1.0 && q < 2.0) {
        return Err(Error::InvalidParameter(format!("q = {q} not in (1, 2)")));
    }
    let u = DiscreteField::from_dofs(mesh, m, &pair.vector)?;
    let lhs: f64 = (0..mesh.triangles.len())
        .map(|t| mesh.triangle_area(t) * gradient_norm(mesh, &u, t).powf(p_tilde))
        .sum();
    let s = sigma_0.abs();
    let e = gradient_budget_exponent(p_tilde, q);
    Ok(InequalityRecord::ratio(
        "gradient_lp",
        lhs,
        &[("sigma_leading", s.powf(e)), ("sigma_half", s.powf(0.5 * p_tilde)), ("one", 1.0)],
        GRADIENT_LP_BUDGET,
    )
    .with_param("p_tilde", p_tilde)
    .with_param("q", q)
    .with_param("exponent", e)
    .with_param("sigma_0", sigma_0))
}

/// Gram deficiencies of `{η φ_k}`.
///
/// Returns the record and the Gram array `G_kl = ∫ η² φ_k·φ_l`. The record's left
/// side is the largest deficiency, compared against `ε^{d(p̃−2)/p̃}`; it passes when
/// the Gram array is strictly diagonally dominant.
pub fn check_near_orthonormality(
    mesh: &Mesh,
    eta: &CutoffField,
    m: usize,
    pairs: &[EigenPair],
    p_tilde: f64,
    d: f64,
) -> Result<(InequalityRecord, DMatrix<f64>)> {
    check_p_tilde(p_tilde)?;
    let fields = pairs
        .iter()
        .map(|p| DiscreteField::from_dofs(mesh, m, &cutoff_product(mesh, eta, m, &p.vector)?))
        .collect::<Result<Vec<_>>>()?;
    let k = fields.len();
    let gram = DMatrix::from_fn(k, k, |a, b| inner_l2(mesh, &fields[a], &fields[b]));
    let mut diag_def: f64 = 0.0;
    let mut offdiag: f64 = 0.0;
    for a in 0..k {
        diag_def = diag_def.max(1.0 - gram[(a, a)]);
        for b in 0..k {
            if a != b {
                offdiag = offdiag.max(gram[(a, b)].abs());
            }
        }
    }
    let scale = eta.epsilon.powf(d * (p_tilde - 2.0) / p_tilde);
    let lhs = diag_def.max(offdiag);
    let record = InequalityRecord {
        name: "near_orthonormality".into(),
        epsilon: Some(eta.epsilon),
        parameters: BTreeMap::from([
            ("cluster_size".to_string(), k as f64),
            ("p_tilde".to_string(), p_tilde),
            ("d".to_string(), d),
        ]),
        lhs,
        rhs_components: BTreeMap::from([
            ("diag_deficiency".to_string(), diag_def),
            ("offdiag".to_string(), offdiag),
            ("epsilon_power".to_string(), scale),
        ]),
        rhs: scale,
        empirical_constant: required_constant(lhs, scale),
        budget: None,
        pass: check_diag_dominance(&gram),
    };
    Ok((record, gram))
}

/// Test functions for the quasimode residual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrialBasis {
    /// Supremum over the whole `Ω_0` discrete space (exact dual norm).
    Full,
    /// Maximum over seeded random trial vectors.
    Random { count: usize, seed: u64 },
}

/// `max_w |q(ηφ, w) − σ⟨ηφ, w⟩| / (‖ηφ‖_{L²} ‖w‖₁)` on the `Ω_0` discrete space.
pub fn check_quasimode_residual(
    stiff_0: &SparseSymMatrix,
    mass_0: &SparseSymMatrix,
    eta_phi: &[f64],
    sigma_eps: f64,
    trial: &TrialBasis,
) -> Result<f64> {
    QuasimodeOperator::new(stiff_0, mass_0)?.residual(eta_phi, sigma_eps, trial)
}

/// The `Ω_0` forms with a factorized energy matrix `B_0 + M_0`, reusable across fields.
pub struct QuasimodeOperator<'a> {
    stiff: &'a SparseSymMatrix,
    mass: &'a SparseSymMatrix,
    energy: SparseSymMatrix,
    factor: EnvelopeCholesky,
}

impl<'a> QuasimodeOperator<'a> {
    pub fn new(stiff: &'a SparseSymMatrix, mass: &'a SparseSymMatrix) -> Result<Self> {
        let energy = stiff.add_scaled(mass, 1.0)?;
        let factor = EnvelopeCholesky::factor(&energy)?;
        Ok(QuasimodeOperator {
            stiff,
            mass,
            energy,
            factor,
        })
    }

    pub fn residual(&self, eta_phi: &[f64], sigma_eps: f64, trial: &TrialBasis) -> Result<f64> {
        let n = self.stiff.dim();
        if eta_phi.len() != n {
            return Err(Error::DimensionMismatch(format!("field has {} entries, forms {n}", eta_phi.len())));
        }
        let norm = self.mass.quadratic(eta_phi).max(0.0).sqrt();
        if norm == 0.0 {
            return Err(Error::ZeroVector);
        }
        let bu = self.stiff.mul_vec(eta_phi);
        let mu = self.mass.mul_vec(eta_phi);
        let r: Vec<f64> = bu.iter().zip(&mu).map(|(b, m)| b - sigma_eps * m).collect();
        match *trial {
            TrialBasis::Full => {
                let z = self.factor.solve(&r);
                Ok(dot(&r, &z).max(0.0).sqrt() / norm)
            }
            TrialBasis::Random { count, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut worst: f64 = 0.0;
                for _ in 0..count {
                    let w: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    let wn = self.energy.quadratic(&w);
                    worst = worst.max(dot(&w, &r).abs() / (norm * wn.sqrt()));
                }
                Ok(worst)
            }
        }
    }
}

/// Seeded balls centred at centroids of random triangles, radii drawn from `radii`.
pub fn sample_balls(mesh: &Mesh, count: usize, radii: &[f64], seed: u64) -> Vec<Ball> {
    if mesh.triangles.is_empty() || radii.is_empty() {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let t = rng.gen_range(0..mesh.triangles.len());
            let r = radii[rng.gen_range(0..radii.len())];
            Ball::new(mesh.centroid(t), r)
        })
        .collect()
}

/// Strict row diagonal dominance `Σ_{i≠l}|A_li| < |A_ll|`.
pub fn check_diag_dominance(gram: &DMatrix<f64>) -> bool {
    if !gram.is_square() {
        return false;
    }
    (0..gram.nrows()).all(|l| {
        let off: f64 = (0..gram.ncols()).filter(|&i| i != l).map(|i| gram[(l, i)].abs()).sum();
        off < gram[(l, l)].abs()
    })
}

/// M-orthonormalizes `vectors` in place with two Gram–Schmidt passes, dropping
/// vectors that fall below `drop_tol` relative to their original norm.
fn m_orthonormalize(mass: &SparseSymMatrix, vectors: &[Vec<f64>], start: &[Vec<f64>], drop_tol: f64) -> (Vec<Vec<f64>>, usize) {
    let mut basis: Vec<Vec<f64>> = start.to_vec();
    let mut dropped = 0;
    for v in vectors {
        let mut w = v.clone();
        let norm0 = mass.quadratic(&w).max(0.0).sqrt();
        if norm0 == 0.0 {
            dropped += 1;
            continue;
        }
        for _ in 0..2 {
            for b in &basis {
                let c = mass.bilinear(b, &w);
                w.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
        }
        let norm = mass.quadratic(&w).max(0.0).sqrt();
        if norm <= drop_tol * norm0 {
            dropped += 1;
            continue;
        }
        w.iter_mut().for_each(|x| *x /= norm);
        basis.push(w);
    }
    (basis, dropped)
}

/// `‖P_A − P_B‖` in the `M` inner product, computed on the joint span.
pub fn projector_distance(basis_a: &[Vec<f64>], basis_b: &[Vec<f64>], mass: &SparseSymMatrix) -> Result<f64> {
    if basis_a.is_empty() || basis_b.is_empty() {
        return Err(Error::DegenerateBasis);
    }
    let n = mass.dim();
    if basis_a.iter().chain(basis_b).any(|v| v.len() != n) {
        return Err(Error::DimensionMismatch(format!("basis vectors must have length {n}")));
    }
    let (qa, da) = m_orthonormalize(mass, basis_a, &[], 1e-8);
    let (qb, db) = m_orthonormalize(mass, basis_b, &[], 1e-8);
    if da > 0 || db > 0 {
        return Err(Error::DegenerateBasis);
    }
    let (joint, _) = m_orthonormalize(mass, &qb, &qa, 1e-12);
    let coords = |q: &[Vec<f64>]| {
        DMatrix::from_fn(joint.len(), q.len(), |i, j| mass.bilinear(&joint[i], &q[j]))
    };
    let ca = coords(&qa);
    let cb = coords(&qb);
    let diff = &ca * ca.transpose() - &cb * cb.transpose();
    let diff = (&diff + diff.transpose()) * 0.5;
    let eig = SymmetricEigen::new(diff);
    Ok(eig.eigenvalues.iter().fold(0.0, |acc: f64, x| acc.max(x.abs())))
}

/// Gårding lower bound `uᵀBu ≥ δ‖∇u‖²` over seeded random interior fields.
///
/// The record's constant is the smallest observed `uᵀBu / ‖∇u‖²`; the check
/// passes when it is at least `δ − 1e−8`.
pub fn check_garding(
    mesh: &Mesh,
    stiff: &SparseSymMatrix,
    m: usize,
    delta: f64,
    trials: usize,
    seed: u64,
) -> Result<InequalityRecord> {
    if stiff.dim() != m * mesh.num_interior() {
        return Err(Error::DimensionMismatch("stiffness does not match the mesh".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fields: Vec<DiscreteField> = (0..trials).map(|_| DiscreteField::random(mesh, m, &mut rng)).collect();
    let ratios: Vec<(f64, f64)> = fields
        .par_iter()
        .map(|u| {
            let grad: f64 = (0..mesh.triangles.len())
                .map(|t| mesh.triangle_area(t) * gradient_norm(mesh, u, t).powi(2))
                .sum();
            (stiff.quadratic(&u.to_dofs(mesh)), grad)
        })
        .collect();
    let failures = ratios.iter().filter(|(q, g)| *q < (delta - 1e-8) * g).count();
    let (q, g) = ratios
        .iter()
        .cloned()
        .min_by(|a, b| (a.0 / a.1).total_cmp(&(b.0 / b.1)))
        .unwrap_or((0.0, 0.0));
    let worst = if g > 0.0 { q / g } else { f64::INFINITY };
    Ok(InequalityRecord {
        name: "garding".into(),
        epsilon: None,
        parameters: BTreeMap::from([
            ("delta".to_string(), delta),
            ("trials".to_string(), trials as f64),
            ("failures".to_string(), failures as f64),
        ]),
        lhs: delta * g,
        rhs_components: BTreeMap::from([("energy".to_string(), q)]),
        rhs: q,
        empirical_constant: worst.max(0.0),
        budget: Some(delta - 1e-8),
        pass: failures == 0,
    })
}
