//! Symmetric sparse storage (lower triangle, row-compressed) and an envelope
//! Cholesky factorization under reverse Cuthill–McKee ordering.

use std::collections::VecDeque;
use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Symmetric matrix stored as the lower triangle (`col <= row`) in CSR form.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseSymMatrix {
    /// Builds from `(row, col, value)` triplets; entries above the diagonal are mirrored
    /// into the lower triangle and duplicates are summed in input order.
    pub fn from_triplets(dim: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut lower: Vec<(usize, usize, f64)> = triplets
            .iter()
            .map(|&(r, c, v)| if c <= r { (r, c, v) } else { (c, r, v) })
            .collect();
        // stable sort keeps the summation order deterministic
        lower.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; dim + 1];
        let mut col_idx = Vec::with_capacity(lower.len());
        let mut values: Vec<f64> = Vec::with_capacity(lower.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in lower {
            assert!(r < dim, "row {r} out of range {dim}");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..dim {
            row_ptr[i + 1] += row_ptr[i];
        }
        SparseSymMatrix {
            dim,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn from_dense(a: &DMatrix<f64>) -> Self {
        let mut t = Vec::new();
        for i in 0..a.nrows() {
            for j in 0..=i {
                if a[(i, j)] != 0.0 {
                    t.push((i, j, a[(i, j)]));
                }
            }
        }
        Self::from_triplets(a.nrows(), &t)
    }

    pub fn identity(dim: usize) -> Self {
        let t: Vec<_> = (0..dim).map(|i| (i, i, 1.0)).collect();
        Self::from_triplets(dim, &t)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Stored entries (lower triangle including the diagonal).
    pub fn nnz_lower(&self) -> usize {
        self.values.len()
    }

    /// Always true: storage is the lower triangle of a symmetric matrix.
    pub fn is_symmetric(&self) -> bool {
        true
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()].iter().copied().zip(self.values[range].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if j <= i { (i, j) } else { (j, i) };
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[range.clone()].binary_search(&c) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.dim);
        assert_eq!(y.len(), self.dim);
        y.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.dim {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[k];
                let a = self.values[k];
                acc += a * x[j];
                if j != i {
                    y[j] += a * x[i];
                }
            }
            y[i] += acc;
        }
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        dot(x, &self.mul_vec(y))
    }

    pub fn quadratic(&self, x: &[f64]) -> f64 {
        self.bilinear(x, x)
    }

    /// `self + alpha * other`.
    pub fn add_scaled(&self, other: &SparseSymMatrix, alpha: f64) -> Result<SparseSymMatrix> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch(format!("{} vs {}", self.dim, other.dim)));
        }
        let mut t = Vec::with_capacity(self.values.len() + other.values.len());
        for i in 0..self.dim {
            t.extend(self.row(i).map(|(j, v)| (i, j, v)));
            t.extend(other.row(i).map(|(j, v)| (i, j, alpha * v)));
        }
        Ok(Self::from_triplets(self.dim, &t))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            for (j, v) in self.row(i) {
                a[(i, j)] = v;
                a[(j, i)] = v;
            }
        }
        a
    }

    /// Coordinate text: a `# dim nnz` header, then `row col value` (0-based, lower triangle).
    pub fn to_coordinate_text(&self) -> String {
        let mut s = String::with_capacity(32 * self.values.len());
        let _ = writeln!(s, "# {} {} symmetric-lower", self.dim, self.values.len());
        for i in 0..self.dim {
            for (j, v) in self.row(i) {
                let _ = writeln!(s, "{i} {j} {v:e}");
            }
        }
        s
    }

    fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.dim];
        for i in 0..self.dim {
            for (j, _) in self.row(i) {
                if j != i {
                    adj[i].push(j);
                    adj[j].push(i);
                }
            }
        }
        adj
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Breadth-first traversal from `start`; returns the visit order and the level of each visited node.
fn bfs_levels(adj: &[Vec<usize>], start: usize, level: &mut [usize]) -> Vec<usize> {
    let mut order = vec![start];
    level[start] = 0;
    let mut head = 0;
    while head < order.len() {
        let v = order[head];
        head += 1;
        for &w in &adj[v] {
            if level[w] == usize::MAX {
                level[w] = level[v] + 1;
                order.push(w);
            }
        }
    }
    order
}

/// Reverse Cuthill–McKee ordering; `perm[new] = old`.
pub fn reverse_cuthill_mckee(a: &SparseSymMatrix) -> Vec<usize> {
    let n = a.dim();
    let mut adj = a.adjacency();
    for list in adj.iter_mut() {
        list.sort_unstable();
        list.dedup();
    }
    let degree: Vec<usize> = adj.iter().map(|l| l.len()).collect();
    for list in adj.iter_mut() {
        list.sort_by_key(|&w| (degree[w], w));
    }
    let mut visited = vec![false; n];
    let mut level = vec![usize::MAX; n];
    let mut order = Vec::with_capacity(n);
    for seed in 0..n {
        if visited[seed] {
            continue;
        }
        // pseudo-peripheral start node
        let mut start = seed;
        let mut depth = 0;
        for _ in 0..8 {
            let comp = bfs_levels(&adj, start, &mut level);
            let d = comp.iter().map(|&v| level[v]).max().unwrap_or(0);
            let next = comp
                .iter()
                .copied()
                .filter(|&v| level[v] == d)
                .min_by_key(|&v| (degree[v], v))
                .unwrap();
            for &v in &comp {
                level[v] = usize::MAX;
            }
            if d <= depth && start != seed {
                break;
            }
            depth = d;
            start = next;
        }
        let mut queue = VecDeque::new();
        queue.push_back(start);
        visited[start] = true;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &w in &adj[v] {
                if !visited[w] {
                    visited[w] = true;
                    queue.push_back(w);
                }
            }
        }
    }
    order.reverse();
    order
}

/// `P A Pᵀ = L Lᵀ` with `L` stored row-wise over its envelope.
#[derive(Debug, Clone)]
pub struct EnvelopeCholesky {
    dim: usize,
    perm: Vec<usize>,
    first: Vec<usize>,
    offset: Vec<usize>,
    data: Vec<f64>,
}

impl EnvelopeCholesky {
    pub fn factor(a: &SparseSymMatrix) -> Result<Self> {
        let perm = reverse_cuthill_mckee(a);
        Self::factor_with_ordering(a, perm)
    }

    pub fn factor_with_ordering(a: &SparseSymMatrix, perm: Vec<usize>) -> Result<Self> {
        let n = a.dim();
        if perm.len() != n {
            return Err(Error::DimensionMismatch("ordering length".into()));
        }
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for i in 0..n {
            for (j, _) in a.row(i) {
                let (pi, pj) = (inv[i], inv[j]);
                let (r, c) = if pj <= pi { (pi, pj) } else { (pj, pi) };
                first[r] = first[r].min(c);
            }
        }
        let mut offset = vec![0usize; n + 1];
        for i in 0..n {
            offset[i + 1] = offset[i] + (i - first[i] + 1);
        }
        let mut data = vec![0.0; offset[n]];
        for i in 0..n {
            for (j, v) in a.row(i) {
                let (pi, pj) = (inv[i], inv[j]);
                let (r, c) = if pj <= pi { (pi, pj) } else { (pj, pi) };
                data[offset[r] + c - first[r]] += v;
            }
        }

        for i in 0..n {
            let fi = first[i];
            let oi = offset[i];
            let diag_orig = data[oi + i - fi];
            for j in fi..i {
                let fj = first[j];
                let oj = offset[j];
                let lo = fi.max(fj);
                let s = {
                    let (head, tail) = data.split_at(oi);
                    let ri = &tail[lo - fi..j - fi];
                    let rj = &head[oj + lo - fj..oj + j - fj];
                    dot(ri, rj)
                };
                let ljj = data[oj + j - fj];
                data[oi + j - fi] = (data[oi + j - fi] - s) / ljj;
            }
            let row = &data[oi..oi + i - fi];
            let d = diag_orig - dot(row, row);
            if !(d > 1e-14 * diag_orig.abs().max(f64::MIN_POSITIVE)) {
                return Err(Error::FactorizationFailed(format!(
                    "non-positive pivot {d:e} at row {i} of {n}"
                )));
            }
            data[oi + i - fi] = d.sqrt();
        }
        Ok(EnvelopeCholesky {
            dim: n,
            perm,
            first,
            offset,
            data,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of stored factor entries.
    pub fn envelope_size(&self) -> usize {
        self.data.len()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim;
        assert_eq!(b.len(), n);
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        for i in 0..n {
            let fi = self.first[i];
            let oi = self.offset[i];
            let s = dot(&self.data[oi..oi + i - fi], &y[fi..i]);
            y[i] = (y[i] - s) / self.data[oi + i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let oi = self.offset[i];
            let xi = y[i] / self.data[oi + i - fi];
            y[i] = xi;
            for (c, l) in (fi..i).zip(&self.data[oi..oi + i - fi]) {
                y[c] -= l * xi;
            }
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}
