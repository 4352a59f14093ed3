//! Dumbbell domains `Ω_ε = Ω ∪ Ω̃ ∪ T_ε` built from axis-aligned rectangles,
//! their structured triangulations, and the attachment cutoff `η_ε`.
//!
//! All meshes live on the global lattice `x = i·h, y = j·h`. Because the two
//! rectangles and every admissible tube snap to that lattice, the mesh of
//! `Ω_0` is literally the mesh of `Ω_ε` with the tube triangles removed, and
//! vertices are identified across meshes by their lattice coordinates.
//! Each cell is split along the diagonal through its lattice corner of even
//! parity.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SNAP_TOL: f64 = 1e-9;

/// Axis-aligned rectangle `(x0, x1) × (y0, y1)`, serialized as `[x0, y0, x1, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl From<[f64; 4]> for Rect {
    fn from(a: [f64; 4]) -> Self {
        Rect::new(a[0], a[1], a[2], a[3])
    }
}

impl From<Rect> for [f64; 4] {
    fn from(r: Rect) -> Self {
        [r.x0, r.y0, r.x1, r.y1]
    }
}

impl Rect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Rect { x0, y0, x1, y1 }
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Open-set membership.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] > self.x0 && p[0] < self.x1 && p[1] > self.y0 && p[1] < self.y1
    }

    pub fn contains_closed(&self, p: [f64; 2], tol: f64) -> bool {
        p[0] >= self.x0 - tol && p[0] <= self.x1 + tol && p[1] >= self.y0 - tol && p[1] <= self.y1 + tol
    }

    fn on_boundary(&self, p: [f64; 2], tol: f64) -> bool {
        self.contains_closed(p, tol)
            && ((p[0] - self.x0).abs() <= tol
                || (p[0] - self.x1).abs() <= tol
                || (p[1] - self.y0).abs() <= tol
                || (p[1] - self.y1).abs() <= tol)
    }
}

/// Which piece of the dumbbell a triangle belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    Omega,
    OmegaTilde,
    Tube,
}

fn default_n() -> usize {
    2
}

fn default_m() -> usize {
    1
}

fn default_d() -> f64 {
    1.0
}

/// Geometry of the dumbbell family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub omega: Rect,
    pub omega_tilde: Rect,
    pub p1: [f64; 2],
    pub p2: [f64; 2],
    pub tube_length: f64,
    #[serde(default = "default_d")]
    pub d_exponent: f64,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_m")]
    pub m: usize,
}

/// Orientation of the tube axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Axis {
    X,
    Y,
}

impl DomainSpec {
    /// Two unit squares `(0,1)²` and `(1+L, 2+L) × (0,1)` joined at mid-height.
    pub fn symmetric_dumbbell(tube_length: f64) -> Self {
        DomainSpec {
            omega: Rect::new(0.0, 0.0, 1.0, 1.0),
            omega_tilde: Rect::new(1.0 + tube_length, 0.0, 2.0 + tube_length, 1.0),
            p1: [1.0, 0.5],
            p2: [1.0 + tube_length, 0.5],
            tube_length,
            d_exponent: 1.0,
            n: 2,
            m: 1,
        }
    }

    /// Checks the structural invariants (disjointness, gap, attachment points).
    pub fn validate(&self) -> Result<()> {
        if self.n != 2 {
            return Err(Error::InvalidDomain(format!("only n = 2 is supported, got {}", self.n)));
        }
        if self.m == 0 {
            return Err(Error::InvalidDomain("m must be at least 1".into()));
        }
        for (name, r) in [("omega", &self.omega), ("omega_tilde", &self.omega_tilde)] {
            if !(r.width() > 0.0 && r.height() > 0.0) {
                return Err(Error::InvalidDomain(format!("{name} is empty")));
            }
        }
        if !(self.tube_length > 0.0) {
            return Err(Error::InvalidDomain("tube_length must be positive".into()));
        }
        if !(self.d_exponent > 0.0 && self.d_exponent <= self.n as f64) {
            return Err(Error::InvalidDomain(format!("d_exponent {} not in (0, n]", self.d_exponent)));
        }
        let tol = SNAP_TOL * (1.0 + self.tube_length);
        if !self.omega.on_boundary(self.p1, tol) {
            return Err(Error::InvalidDomain("p1 is not on the boundary of omega".into()));
        }
        if !self.omega_tilde.on_boundary(self.p2, tol) {
            return Err(Error::InvalidDomain("p2 is not on the boundary of omega_tilde".into()));
        }
        let axis = self.axis()?;
        let len = match axis {
            Axis::X => (self.p2[0] - self.p1[0]).abs(),
            Axis::Y => (self.p2[1] - self.p1[1]).abs(),
        };
        if (len - self.tube_length).abs() > tol {
            return Err(Error::InvalidDomain(format!(
                "|p2 - p1| = {len} differs from tube_length {}",
                self.tube_length
            )));
        }
        // the gap between the rectangles along the tube axis must equal the tube length
        let gap = match axis {
            Axis::X => (self.omega_tilde.x0 - self.omega.x1).max(self.omega.x0 - self.omega_tilde.x1),
            Axis::Y => (self.omega_tilde.y0 - self.omega.y1).max(self.omega.y0 - self.omega_tilde.y1),
        };
        if (gap - self.tube_length).abs() > tol {
            return Err(Error::InvalidDomain(format!(
                "rectangle gap {gap} differs from tube_length {}",
                self.tube_length
            )));
        }
        Ok(())
    }

    fn axis(&self) -> Result<Axis> {
        let dx = (self.p2[0] - self.p1[0]).abs();
        let dy = (self.p2[1] - self.p1[1]).abs();
        let tol = SNAP_TOL * (1.0 + dx + dy);
        if dy <= tol && dx > tol {
            Ok(Axis::X)
        } else if dx <= tol && dy > tol {
            Ok(Axis::Y)
        } else {
            Err(Error::InvalidDomain("segment p1-p2 is not axis-aligned".into()))
        }
    }

    /// The tube `T_ε`: a rectangle of width ε centred on the segment p1–p2.
    pub fn tube(&self, epsilon: f64) -> Result<Rect> {
        let half = 0.5 * epsilon;
        Ok(match self.axis()? {
            Axis::X => Rect::new(
                self.p1[0].min(self.p2[0]),
                self.p1[1] - half,
                self.p1[0].max(self.p2[0]),
                self.p1[1] + half,
            ),
            Axis::Y => Rect::new(
                self.p1[0] - half,
                self.p1[1].min(self.p2[1]),
                self.p1[0] + half,
                self.p1[1].max(self.p2[1]),
            ),
        })
    }

    /// Membership in `Ω_ε` (`epsilon = None` gives `Ω_0`), up to a measure-zero set.
    pub fn contains(&self, epsilon: Option<f64>, p: [f64; 2]) -> bool {
        if self.omega.contains(p) || self.omega_tilde.contains(p) {
            return true;
        }
        match epsilon {
            Some(e) => self.tube(e).map(|t| t.contains_closed(p, 0.0)).unwrap_or(false),
            None => false,
        }
    }

    pub fn base_area(&self) -> f64 {
        self.omega.area() + self.omega_tilde.area()
    }

    /// Bounding box of `Ω_ε` for any admissible ε.
    pub fn bounding_box(&self) -> Rect {
        Rect::new(
            self.omega.x0.min(self.omega_tilde.x0),
            self.omega.y0.min(self.omega_tilde.y0),
            self.omega.x1.max(self.omega_tilde.x1),
            self.omega.y1.max(self.omega_tilde.y1),
        )
    }
}

/// `|T_ε| = tube_length · ε`, which realises `|T_ε| ≤ C ε^d` with `d = 1`.
pub fn tube_measure(spec: &DomainSpec, epsilon: f64) -> f64 {
    spec.tube_length * epsilon.max(0.0)
}

/// Structured triangulation on the lattice of pitch `h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    pub h: f64,
    pub vertices: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub interior_nodes: Vec<usize>,
    pub labels: Vec<Component>,
    #[serde(skip)]
    lattice: Vec<[i64; 2]>,
    #[serde(skip)]
    lookup: HashMap<[i64; 2], usize>,
    #[serde(skip)]
    dof_of_vertex: Vec<Option<usize>>,
}

fn snap(value: f64, pitch: f64, what: &str) -> Result<i64> {
    let q = value / pitch;
    let r = q.round();
    if (q - r).abs() > SNAP_TOL * (1.0 + q.abs()) {
        return Err(Error::GridMisaligned(format!("{what} = {value} is not a multiple of {pitch}")));
    }
    Ok(r as i64)
}

fn snap_rect(r: &Rect, pitch: f64, h: f64, what: &str) -> Result<[i64; 4]> {
    let scale = (pitch / h).round() as i64;
    Ok([
        snap(r.x0, pitch, what)? * scale,
        snap(r.y0, pitch, what)? * scale,
        snap(r.x1, pitch, what)? * scale,
        snap(r.y1, pitch, what)? * scale,
    ])
}

impl Mesh {
    fn from_cells(h: f64, cells: BTreeMap<(i64, i64), Component>) -> Mesh {
        let mut corners = BTreeSet::new();
        for &(cj, ci) in cells.keys() {
            for (dj, di) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                corners.insert((cj + dj, ci + di));
            }
        }
        let lattice: Vec<[i64; 2]> = corners.iter().map(|&(j, i)| [i, j]).collect();
        let lookup: HashMap<[i64; 2], usize> = lattice.iter().enumerate().map(|(k, &g)| (g, k)).collect();
        let vertices = lattice.iter().map(|&[i, j]| [i as f64 * h, j as f64 * h]).collect();

        let mut triangles = Vec::with_capacity(2 * cells.len());
        let mut labels = Vec::with_capacity(2 * cells.len());
        for (&(cj, ci), &label) in &cells {
            let v00 = lookup[&[ci, cj]];
            let v10 = lookup[&[ci + 1, cj]];
            let v11 = lookup[&[ci + 1, cj + 1]];
            let v01 = lookup[&[ci, cj + 1]];
            // diagonal alternates with cell parity so squares of even size keep their full symmetry
            if (ci + cj).rem_euclid(2) == 0 {
                triangles.push([v00, v10, v11]);
                triangles.push([v00, v11, v01]);
            } else {
                triangles.push([v00, v10, v01]);
                triangles.push([v10, v11, v01]);
            }
            labels.push(label);
            labels.push(label);
        }

        let interior_nodes: Vec<usize> = lattice
            .iter()
            .enumerate()
            .filter(|(_, &[i, j])| {
                [(j - 1, i - 1), (j - 1, i), (j, i - 1), (j, i)]
                    .iter()
                    .all(|c| cells.contains_key(c))
            })
            .map(|(k, _)| k)
            .collect();
        let mut dof_of_vertex = vec![None; lattice.len()];
        for (d, &v) in interior_nodes.iter().enumerate() {
            dof_of_vertex[v] = Some(d);
        }

        Mesh {
            h,
            vertices,
            triangles,
            interior_nodes,
            labels,
            lattice,
            lookup,
            dof_of_vertex,
        }
    }

    /// Rebuilds the lattice index after deserialization.
    pub fn reindex(&mut self) {
        let h = self.h;
        self.lattice = self
            .vertices
            .iter()
            .map(|p| [(p[0] / h).round() as i64, (p[1] / h).round() as i64])
            .collect();
        self.lookup = self.lattice.iter().enumerate().map(|(k, &g)| (g, k)).collect();
        self.dof_of_vertex = vec![None; self.vertices.len()];
        for (d, &v) in self.interior_nodes.iter().enumerate() {
            self.dof_of_vertex[v] = Some(d);
        }
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_interior(&self) -> usize {
        self.interior_nodes.len()
    }

    pub fn lattice_coords(&self, v: usize) -> [i64; 2] {
        self.lattice[v]
    }

    pub fn vertex_at(&self, g: [i64; 2]) -> Option<usize> {
        self.lookup.get(&g).copied()
    }

    /// Position of vertex `v` among the interior nodes, if it is one.
    pub fn dof_index(&self, v: usize) -> Option<usize> {
        self.dof_of_vertex[v]
    }

    pub fn is_interior(&self, v: usize) -> bool {
        self.dof_of_vertex[v].is_some()
    }

    /// Signed area (positive for counter-clockwise triangles).
    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        let (pa, pb, pc) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        0.5 * ((pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]))
    }

    pub fn centroid(&self, t: usize) -> [f64; 2] {
        let [a, b, c] = self.triangles[t];
        let (pa, pb, pc) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        [(pa[0] + pb[0] + pc[0]) / 3.0, (pa[1] + pb[1] + pc[1]) / 3.0]
    }

    /// Gradients of the three barycentric hat functions on triangle `t`.
    pub fn shape_gradients(&self, t: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.triangles[t];
        let (pa, pb, pc) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        let two_area = (pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]);
        [
            [(pb[1] - pc[1]) / two_area, (pc[0] - pb[0]) / two_area],
            [(pc[1] - pa[1]) / two_area, (pa[0] - pc[0]) / two_area],
            [(pa[1] - pb[1]) / two_area, (pb[0] - pa[0]) / two_area],
        ]
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Lattice keys of all triangles, usable for set comparisons between meshes.
    pub fn triangle_keys(&self) -> BTreeSet<[[i64; 2]; 3]> {
        self.triangles
            .iter()
            .map(|tri| [self.lattice[tri[0]], self.lattice[tri[1]], self.lattice[tri[2]]])
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Mesh> {
        let mut mesh: Mesh = serde_json::from_str(s)?;
        mesh.reindex();
        Ok(mesh)
    }
}

fn cells_of(rect: [i64; 4], label: Component, cells: &mut BTreeMap<(i64, i64), Component>) {
    for cj in rect[1]..rect[3] {
        for ci in rect[0]..rect[2] {
            cells.entry((cj, ci)).or_insert(label);
        }
    }
}

fn base_cells(spec: &DomainSpec, h: f64, pitch: f64) -> Result<BTreeMap<(i64, i64), Component>> {
    let mut cells = BTreeMap::new();
    cells_of(snap_rect(&spec.omega, pitch, h, "omega")?, Component::Omega, &mut cells);
    cells_of(snap_rect(&spec.omega_tilde, pitch, h, "omega_tilde")?, Component::OmegaTilde, &mut cells);
    Ok(cells)
}

fn check_h(h: f64) -> Result<()> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::GridMisaligned(format!("cell size h = {h} must be positive")));
    }
    Ok(())
}

/// Mesh of `Ω_ε` at pitch `h`.
pub fn build_dumbbell(spec: &DomainSpec, epsilon: f64, h: f64) -> Result<Mesh> {
    spec.validate()?;
    check_h(h)?;
    if !(epsilon > 0.0) {
        return Err(Error::InvalidDomain(format!("epsilon = {epsilon} must be positive")));
    }
    let pitch = 2.0 * h;
    let mut cells = base_cells(spec, h, pitch)?;
    snap(epsilon, pitch, "epsilon")?;
    if epsilon < 4.0 * h * (1.0 - SNAP_TOL) {
        return Err(Error::GridMisaligned(format!("epsilon = {epsilon} is below 4h = {}", 4.0 * h)));
    }
    let tube = spec.tube(epsilon)?;
    let axis = spec.axis()?;
    let tol = SNAP_TOL * (1.0 + epsilon);
    for (name, r) in [("omega", &spec.omega), ("omega_tilde", &spec.omega_tilde)] {
        let fits = match axis {
            Axis::X => tube.y0 >= r.y0 - tol && tube.y1 <= r.y1 + tol,
            Axis::Y => tube.x0 >= r.x0 - tol && tube.x1 <= r.x1 + tol,
        };
        if !fits {
            return Err(Error::TubeTooWide(format!("tube of width {epsilon} does not fit on the side of {name}")));
        }
    }
    let tube_cells = [
        snap(tube.x0, h, "tube x0")?,
        snap(tube.y0, h, "tube y0")?,
        snap(tube.x1, h, "tube x1")?,
        snap(tube.y1, h, "tube y1")?,
    ];
    cells_of(tube_cells, Component::Tube, &mut cells);
    Ok(Mesh::from_cells(h, cells))
}

/// Mesh of `Ω_0 = Ω ∪ Ω̃` at pitch `h`.
pub fn build_base(spec: &DomainSpec, h: f64) -> Result<Mesh> {
    spec.validate()?;
    check_h(h)?;
    Ok(Mesh::from_cells(h, base_cells(spec, h, 2.0 * h)?))
}

/// Mesh of a single rectangle, snapped to pitch `h`.
pub fn build_rectangle(rect: Rect, h: f64) -> Result<Mesh> {
    check_h(h)?;
    let mut cells = BTreeMap::new();
    cells_of(snap_rect(&rect, h, h, "rectangle")?, Component::Omega, &mut cells);
    Ok(Mesh::from_cells(h, cells))
}

/// Mesh of two disjoint rectangles, snapped to pitch `h`.
pub fn build_two_rectangles(a: Rect, b: Rect, h: f64) -> Result<Mesh> {
    check_h(h)?;
    let mut cells = BTreeMap::new();
    cells_of(snap_rect(&a, h, h, "rectangle")?, Component::Omega, &mut cells);
    cells_of(snap_rect(&b, h, h, "rectangle")?, Component::OmegaTilde, &mut cells);
    Ok(Mesh::from_cells(h, cells))
}

/// Per-vertex cutoff `η_ε`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffField {
    pub epsilon: f64,
    pub values: Vec<f64>,
    pub gradient_bound: f64,
}

/// Radial ramp `clamp(2|x - p|/ε - 1, 0, 1)` around the attachment points, zero on the closed tube.
pub fn eta_value(spec: &DomainSpec, tube: &Rect, epsilon: f64, x: [f64; 2]) -> f64 {
    let tol = SNAP_TOL * epsilon;
    if tube.contains_closed(x, tol) {
        return 0.0;
    }
    let dist = |p: [f64; 2]| ((x[0] - p[0]).powi(2) + (x[1] - p[1]).powi(2)).sqrt();
    let d = dist(spec.p1).min(dist(spec.p2));
    (2.0 * d / epsilon - 1.0).clamp(0.0, 1.0)
}

pub fn cutoff_eta(spec: &DomainSpec, epsilon: f64, mesh: &Mesh) -> Result<CutoffField> {
    let tube = spec.tube(epsilon)?;
    let tol = SNAP_TOL * (1.0 + mesh.h);
    for p in &mesh.vertices {
        let inside = spec.omega.contains_closed(*p, tol)
            || spec.omega_tilde.contains_closed(*p, tol)
            || tube.contains_closed(*p, tol);
        if !inside {
            return Err(Error::MeshMismatch(format!("vertex {p:?} lies outside the closure of the domain")));
        }
    }
    let tube_triangles = mesh.labels.iter().filter(|&&l| l == Component::Tube).count();
    if tube_triangles > 0 {
        let expected = (2.0 * tube.area() / (mesh.h * mesh.h)).round() as usize;
        if tube_triangles != expected {
            return Err(Error::MeshMismatch(format!(
                "mesh has {tube_triangles} tube triangles, a tube of width {epsilon} needs {expected}"
            )));
        }
    }
    let values = mesh.vertices.iter().map(|&x| eta_value(spec, &tube, epsilon, x)).collect();
    Ok(CutoffField {
        epsilon,
        values,
        gradient_bound: 2.0 / epsilon,
    })
}

/// `|B_{2r}(c) ∩ Ω_ε^c|` and `|B_r(c) ∩ Ω_ε^c|` by midpoint cell counting with `resolution²` cells.
pub fn complement_measure(spec: &DomainSpec, epsilon: Option<f64>, center: [f64; 2], r: f64, resolution: usize) -> (f64, f64) {
    let big = 2.0 * r;
    let cell = 2.0 * big / resolution as f64;
    let mut outer = 0usize;
    let mut inner = 0usize;
    for a in 0..resolution {
        let x = center[0] - big + (a as f64 + 0.5) * cell;
        for b in 0..resolution {
            let y = center[1] - big + (b as f64 + 0.5) * cell;
            let d2 = (x - center[0]).powi(2) + (y - center[1]).powi(2);
            if d2 < big * big && !spec.contains(epsilon, [x, y]) {
                outer += 1;
                if d2 < r * r {
                    inner += 1;
                }
            }
        }
    }
    let da = cell * cell;
    (outer as f64 * da, inner as f64 * da)
}

/// Ratio `|B_{2r}(c) ∩ Ω_ε^c| / r²` for one ball.
pub fn corkscrew_ratio(spec: &DomainSpec, epsilon: Option<f64>, center: [f64; 2], r: f64, resolution: usize) -> f64 {
    complement_measure(spec, epsilon, center, r, resolution).0 / (r * r)
}

/// Empirical lower bound on the measure-density constant `C_0`.
///
/// Candidate centres form a regular `s × s` lattice (`s² ≈ center_samples`) over the
/// bounding box of the domain widened by the largest radius; only balls `B_r` that
/// intersect both the domain and its complement are kept.
pub fn check_corkscrew(spec: &DomainSpec, epsilon: f64, r_samples: &[f64], center_samples: usize) -> Result<f64> {
    check_corkscrew_with_resolution(spec, epsilon, r_samples, center_samples, 64)
}

pub fn check_corkscrew_with_resolution(
    spec: &DomainSpec,
    epsilon: f64,
    r_samples: &[f64],
    center_samples: usize,
    resolution: usize,
) -> Result<f64> {
    spec.validate()?;
    let bbox = spec.bounding_box();
    let diameter = (bbox.width().powi(2) + bbox.height().powi(2)).sqrt();
    if r_samples.iter().any(|&r| !(r > 0.0) || r > diameter) {
        return Err(Error::InvalidParameter("radii must lie in (0, diam]".into()));
    }
    let rmax = r_samples.iter().cloned().fold(0.0, f64::max);
    let side = (center_samples as f64).sqrt().ceil().max(1.0) as usize;
    let mut centers = Vec::with_capacity(side * side);
    for a in 0..side {
        for b in 0..side {
            let fx = (a as f64 + 0.5) / side as f64;
            let fy = (b as f64 + 0.5) / side as f64;
            centers.push([
                bbox.x0 - rmax + fx * (bbox.width() + 2.0 * rmax),
                bbox.y0 - rmax + fy * (bbox.height() + 2.0 * rmax),
            ]);
        }
    }
    let eps = Some(epsilon);
    let best = centers
        .par_iter()
        .flat_map_iter(|&c| r_samples.iter().map(move |&r| (c, r)))
        .filter_map(|(c, r)| {
            let (outer, inner) = complement_measure(spec, eps, c, r, resolution);
            let meets_domain = spec.contains(eps, c) || inner < std::f64::consts::PI * r * r * 0.999;
            (inner > 0.0 && meets_domain).then_some(outer / (r * r))
        })
        .reduce_with(f64::min);
    best.ok_or(Error::NoBoundaryBallFound)
}
