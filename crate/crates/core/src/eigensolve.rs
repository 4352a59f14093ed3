//! Lowest eigenpairs of `B u = σ M u` for sparse symmetric `B` and SPD `M`.
//!
//! The sparse path grows an `M`-orthonormal search space by applying the
//! shift-inverted operator `(B - sM)⁻¹ M` to blocks of current Ritz vectors,
//! and extracts Ritz pairs with respect to `B` itself. Every basis vector is
//! orthogonalized against the whole space twice, and convergence is judged on
//! true residuals, so exactly degenerate clusters converge as a subspace.

use log::debug;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::{dot, EnvelopeCholesky, SparseSymMatrix};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_RESTARTS: usize = 500;
pub const DEFAULT_SEED: u64 = 0x0dd5_eed5;
/// Largest problem accepted by [`dense_oracle`].
pub const DENSE_LIMIT: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenPair {
    pub sigma: f64,
    /// Coefficients over interior degrees of freedom, `‖u‖_M = 1`.
    #[serde(skip)]
    pub vector: Vec<f64>,
    /// `‖Bu − σMu‖₂ / ‖u‖_M`.
    pub residual: f64,
}

impl EigenPair {
    /// Plain-text dump of the vector, one coefficient per line.
    pub fn vector_text(&self) -> String {
        let mut s = String::with_capacity(24 * self.vector.len());
        for v in &self.vector {
            s.push_str(&format!("{v:e}\n"));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_restarts: usize,
    pub seed: u64,
    pub shift: f64,
    pub block_size: Option<usize>,
    pub max_subspace: Option<usize>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: DEFAULT_TOL,
            max_restarts: DEFAULT_MAX_RESTARTS,
            seed: DEFAULT_SEED,
            shift: 0.0,
            block_size: None,
            max_subspace: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveInfo {
    pub shift: f64,
    pub restarts: usize,
    pub operator_applications: usize,
}

/// Eigenvalue residual `‖Bu − σMu‖₂ / ‖u‖_M`.
pub fn residual(b: &SparseSymMatrix, m: &SparseSymMatrix, sigma: f64, u: &[f64]) -> f64 {
    let bu = b.mul_vec(u);
    let mu = m.mul_vec(u);
    let r: f64 = bu.iter().zip(&mu).map(|(x, y)| (x - sigma * y).powi(2)).sum();
    r.sqrt() / dot(u, &mu).sqrt()
}

/// `(B − sM)`, factorized; falls back to a Gårding shift `s = −c` when `B − s₀M` is not positive definite.
fn factor_shifted(b: &SparseSymMatrix, m: &SparseSymMatrix, shift: f64) -> Result<(EnvelopeCholesky, f64)> {
    let first = b.add_scaled(m, -shift)?;
    match EnvelopeCholesky::factor(&first) {
        Ok(f) => return Ok((f, shift)),
        Err(e) => debug!("factorization at shift {shift} failed ({e}); trying Garding shifts"),
    }
    // coercivity scale: largest diagonal ratio of B to M
    let scale = b
        .diagonal()
        .iter()
        .zip(m.diagonal())
        .map(|(bi, mi)| (bi / mi).abs())
        .fold(1.0, f64::max);
    let mut c = 1e-3 * scale;
    let mut last = String::new();
    for _ in 0..12 {
        let s = -c;
        match EnvelopeCholesky::factor(&b.add_scaled(m, -s)?) {
            Ok(f) => return Ok((f, s)),
            Err(e) => last = e.to_string(),
        }
        c *= 10.0;
    }
    Err(Error::FactorizationFailed(format!(
        "B - sM not positive definite for shift {shift} or any Garding shift down to {:e}: {last}",
        -c / 10.0
    )))
}

fn validate(b: &SparseSymMatrix, m: &SparseSymMatrix, k: usize) -> Result<()> {
    if b.dim() != m.dim() {
        return Err(Error::DimensionMismatch(format!("B is {}, M is {}", b.dim(), m.dim())));
    }
    if k == 0 || k > b.dim() {
        return Err(Error::InvalidRequest(format!("k = {k} not in 1..={}", b.dim())));
    }
    Ok(())
}

/// The `k` smallest eigenpairs with default options and the given residual tolerance.
pub fn smallest_eigenpairs(b: &SparseSymMatrix, m: &SparseSymMatrix, k: usize, tol: f64) -> Result<Vec<EigenPair>> {
    let opts = SolverOptions {
        tol,
        ..SolverOptions::default()
    };
    smallest_eigenpairs_with(b, m, k, &opts).map(|(pairs, _)| pairs)
}

struct SearchSpace {
    v: Vec<Vec<f64>>,
    bv: Vec<Vec<f64>>,
    mv: Vec<Vec<f64>>,
    h: Vec<Vec<f64>>,
}

impl SearchSpace {
    fn len(&self) -> usize {
        self.v.len()
    }

    /// M-orthogonalizes `w` against the space (two passes) and appends it if it is independent.
    fn push(&mut self, b: &SparseSymMatrix, m: &SparseSymMatrix, mut w: Vec<f64>) -> bool {
        let mut mw = m.mul_vec(&w);
        let norm0 = dot(&w, &mw).max(0.0).sqrt();
        if norm0 == 0.0 || !norm0.is_finite() {
            return false;
        }
        for _ in 0..2 {
            for (vj, mvj) in self.v.iter().zip(&self.mv) {
                let c = dot(mvj, &w);
                w.iter_mut().zip(vj).for_each(|(x, y)| *x -= c * y);
            }
            mw = m.mul_vec(&w);
        }
        let norm = dot(&w, &mw).max(0.0).sqrt();
        if norm <= 1e-10 * norm0 {
            return false;
        }
        w.iter_mut().for_each(|x| *x /= norm);
        mw.iter_mut().for_each(|x| *x /= norm);
        let bw = b.mul_vec(&w);
        let row: Vec<f64> = self.v.iter().map(|vj| dot(vj, &bw)).collect();
        let diag = dot(&w, &bw);
        for (hrow, &x) in self.h.iter_mut().zip(&row) {
            hrow.push(x);
        }
        let mut new_row = row;
        new_row.push(diag);
        self.h.push(new_row);
        self.v.push(w);
        self.bv.push(bw);
        self.mv.push(mw);
        true
    }

    fn ritz(&self) -> (Vec<f64>, DMatrix<f64>) {
        let d = self.len();
        let h = DMatrix::from_fn(d, d, |i, j| 0.5 * (self.h[i][j] + self.h[j][i]));
        let eig = SymmetricEigen::new(h);
        let mut idx: Vec<usize> = (0..d).collect();
        idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vectors = DMatrix::from_fn(d, d, |r, c| eig.eigenvectors[(r, idx[c])]);
        (values, vectors)
    }

    fn combine(basis: &[Vec<f64>], coeffs: &DMatrix<f64>, col: usize) -> Vec<f64> {
        let n = basis[0].len();
        let mut out = vec![0.0; n];
        for (j, bj) in basis.iter().enumerate() {
            let c = coeffs[(j, col)];
            if c != 0.0 {
                out.iter_mut().zip(bj).for_each(|(x, y)| *x += c * y);
            }
        }
        out
    }
}

/// The `k` smallest eigenpairs, sorted ascending, with full solver control.
pub fn smallest_eigenpairs_with(
    b: &SparseSymMatrix,
    m: &SparseSymMatrix,
    k: usize,
    opts: &SolverOptions,
) -> Result<(Vec<EigenPair>, SolveInfo)> {
    validate(b, m, k)?;
    let n = b.dim();
    let (factor, shift) = factor_shifted(b, m, opts.shift)?;
    let apply = |x: &[f64]| factor.solve(&m.mul_vec(x));

    let block = opts.block_size.unwrap_or_else(|| k.clamp(2, 8)).min(n).max(1);
    let max_dim = opts
        .max_subspace
        .unwrap_or_else(|| (3 * k).max(k + 3 * block) + 10)
        .max(k + block)
        .min(n);
    let keep = (k + block).min(max_dim);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let random_vec = |rng: &mut ChaCha8Rng| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
    let mut space = SearchSpace {
        v: Vec::new(),
        bv: Vec::new(),
        mv: Vec::new(),
        h: Vec::new(),
    };
    let mut applications = 0usize;
    let mut attempts = 0;
    while space.len() < block.min(n) && attempts < 10 * block + 10 {
        let w = apply(&random_vec(&mut rng));
        applications += 1;
        space.push(b, m, w);
        attempts += 1;
    }

    let mut restarts = 0usize;
    loop {
        let (values, coeffs) = space.ritz();
        let d = space.len();
        let wanted = k.min(d);
        let mut residuals = Vec::with_capacity(d);
        let mut residual_vectors = Vec::with_capacity(d);
        let mut ritz_vectors = Vec::with_capacity(d);
        for c in 0..d {
            let x = SearchSpace::combine(&space.v, &coeffs, c);
            let bx = SearchSpace::combine(&space.bv, &coeffs, c);
            let mx = SearchSpace::combine(&space.mv, &coeffs, c);
            let r: Vec<f64> = bx.iter().zip(&mx).map(|(p, q)| p - values[c] * q).collect();
            residuals.push(dot(&r, &r).sqrt());
            residual_vectors.push(r);
            ritz_vectors.push(x);
        }
        let converged = residuals[..wanted].iter().take_while(|&&r| r <= opts.tol).count();
        let exhausted = d == n;
        if (converged >= k) || exhausted {
            let pairs = finalize(b, m, &values[..k.min(d)], &ritz_vectors[..k.min(d)]);
            if pairs.len() < k {
                return Err(Error::NoConvergence {
                    iterations: restarts,
                    converged: pairs.len(),
                    wanted: k,
                    worst_residual: f64::INFINITY,
                });
            }
            debug!(
                "converged {k} pairs: dim {n}, shift {shift}, {restarts} restarts, {applications} solves"
            );
            return Ok((
                pairs,
                SolveInfo {
                    shift,
                    restarts,
                    operator_applications: applications,
                },
            ));
        }

        // expansion directions: unconverged wanted Ritz vectors first, then the next ones
        let mut picks: Vec<usize> = (0..wanted).filter(|&c| residuals[c] > opts.tol).collect();
        picks.extend((wanted..d).filter(|&c| residuals[c] > opts.tol));
        picks.truncate(block);

        if d + picks.len() > max_dim {
            restarts += 1;
            if restarts > opts.max_restarts {
                let worst = residuals[..wanted].iter().cloned().fold(0.0, f64::max);
                return Err(Error::NoConvergence {
                    iterations: restarts - 1,
                    converged,
                    wanted: k,
                    worst_residual: worst,
                });
            }
            let kept = keep.min(d);
            let mut next = SearchSpace {
                v: Vec::with_capacity(max_dim),
                bv: Vec::with_capacity(max_dim),
                mv: Vec::with_capacity(max_dim),
                h: Vec::with_capacity(max_dim),
            };
            for x in ritz_vectors.into_iter().take(kept) {
                next.push(b, m, x);
            }
            space = next;
            continue;
        }

        // (B − sM)⁻¹ r spans the same expansion as (B − sM)⁻¹ M x modulo x, without cancellation
        let mut added = 0;
        for &c in &picks {
            let w = factor.solve(&residual_vectors[c]);
            applications += 1;
            if space.push(b, m, w) {
                added += 1;
            }
        }
        if added == 0 {
            // stagnation: widen the space with fresh random directions
            let w = apply(&random_vec(&mut rng));
            applications += 1;
            if !space.push(b, m, w) && space.len() < n {
                let raw = random_vec(&mut rng);
                space.push(b, m, raw);
            }
        }
    }
}

fn finalize(b: &SparseSymMatrix, m: &SparseSymMatrix, values: &[f64], vectors: &[Vec<f64>]) -> Vec<EigenPair> {
    values
        .iter()
        .zip(vectors)
        .map(|(&sigma, x)| {
            let mut x = x.clone();
            let norm = m.quadratic(&x).sqrt();
            x.iter_mut().for_each(|v| *v /= norm);
            let res = residual(b, m, sigma, &x);
            EigenPair {
                sigma,
                vector: x,
                residual: res,
            }
        })
        .collect()
}

/// Full generalized spectrum via Cholesky reduction `L⁻¹ B L⁻ᵀ` of a dense copy.
#[derive(Debug, Clone)]
pub struct DenseSpectrum {
    pub values: Vec<f64>,
    /// Columns are `M`-orthonormal eigenvectors in ascending eigenvalue order.
    pub vectors: DMatrix<f64>,
}

pub fn dense_oracle(b: &SparseSymMatrix, m: &SparseSymMatrix) -> Result<DenseSpectrum> {
    if b.dim() != m.dim() {
        return Err(Error::DimensionMismatch(format!("B is {}, M is {}", b.dim(), m.dim())));
    }
    let n = b.dim();
    if n > DENSE_LIMIT {
        return Err(Error::TooLarge(n));
    }
    let chol = m
        .to_dense()
        .cholesky()
        .ok_or_else(|| Error::FactorizationFailed("mass matrix is not positive definite".into()))?;
    let l = chol.l();
    let linv_b = l
        .solve_lower_triangular(&b.to_dense())
        .ok_or_else(|| Error::FactorizationFailed("singular mass factor".into()))?;
    let c = l
        .solve_lower_triangular(&linv_b.transpose())
        .ok_or_else(|| Error::FactorizationFailed("singular mass factor".into()))?;
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let y = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, idx[c])]);
    let vectors = l
        .transpose()
        .solve_upper_triangular(&y)
        .ok_or_else(|| Error::FactorizationFailed("singular mass factor".into()))?;
    Ok(DenseSpectrum { values, vectors })
}

/// Largest `σ_k − R(w)` over seeded random `w` that are `M`-orthogonal to `u_1..u_{k−1}`,
/// where `k = pairs.len()`; a value above round-off contradicts the min-max characterization.
pub fn minmax_witness(b: &SparseSymMatrix, m: &SparseSymMatrix, pairs: &[EigenPair], trials: usize, seed: u64) -> f64 {
    let Some(last) = pairs.last() else { return 0.0 };
    let n = b.dim();
    let lower = &pairs[..pairs.len() - 1];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..trials {
        let mut w: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for _ in 0..2 {
            for p in lower {
                let c = m.bilinear(&p.vector, &w);
                w.iter_mut().zip(&p.vector).for_each(|(x, y)| *x -= c * y);
            }
        }
        let r = b.quadratic(&w) / m.quadratic(&w);
        worst = worst.max(last.sigma - r);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(values: &[f64]) -> SparseSymMatrix {
        let t: Vec<_> = values.iter().enumerate().map(|(i, &v)| (i, i, v)).collect();
        SparseSymMatrix::from_triplets(values.len(), &t)
    }

    #[test]
    fn one_by_one() {
        let b = diag(&[2.0]);
        let m = diag(&[1.0]);
        let pairs = smallest_eigenpairs(&b, &m, 1, 1e-12).unwrap();
        assert!((pairs[0].sigma - 2.0).abs() < 1e-14);
        let dense = dense_oracle(&b, &m).unwrap();
        assert!((dense.values[0] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn bad_requests() {
        let b = diag(&[1.0, 2.0]);
        assert!(matches!(smallest_eigenpairs(&b, &b, 0, 1e-10), Err(Error::InvalidRequest(_))));
        assert!(matches!(smallest_eigenpairs(&b, &b, 3, 1e-10), Err(Error::InvalidRequest(_))));
        assert!(matches!(
            smallest_eigenpairs(&b, &diag(&[1.0]), 1, 1e-10),
            Err(Error::DimensionMismatch(_))
        ));
        let big = SparseSymMatrix::identity(DENSE_LIMIT + 1);
        assert!(matches!(dense_oracle(&big, &big), Err(Error::TooLarge(_))));
    }

    #[test]
    fn diagonal_with_repeated_values() {
        let vals: Vec<f64> = (0..60).map(|i| 1.0 + (i / 2) as f64).collect();
        let b = diag(&vals);
        let m = SparseSymMatrix::identity(60);
        let pairs = smallest_eigenpairs(&b, &m, 5, 1e-10).unwrap();
        let got: Vec<f64> = pairs.iter().map(|p| p.sigma).collect();
        for (g, e) in got.iter().zip([1.0, 1.0, 2.0, 2.0, 3.0]) {
            assert!((g - e).abs() < 1e-10, "{got:?}");
        }
    }

    #[test]
    fn indefinite_uses_garding_shift() {
        let vals: Vec<f64> = (0..30).map(|i| i as f64 - 3.5).collect();
        let b = diag(&vals);
        let m = SparseSymMatrix::identity(30);
        let (pairs, info) = smallest_eigenpairs_with(&b, &m, 3, &SolverOptions::default()).unwrap();
        assert!(info.shift < -3.5);
        for (p, e) in pairs.iter().zip([-3.5, -2.5, -1.5]) {
            assert!((p.sigma - e).abs() < 1e-10);
        }
    }

    #[test]
    fn witness_of_exact_pair_is_zero() {
        let b = diag(&[1.0, 2.0, 3.0, 4.0]);
        let m = SparseSymMatrix::identity(4);
        let pairs = smallest_eigenpairs(&b, &m, 2, 1e-12).unwrap();
        assert!(minmax_witness(&b, &m, &pairs, 200, 1) <= 1e-12);
        assert!(minmax_witness(&b, &m, &pairs[..1], 200, 2) <= 1e-12);
    }
}
