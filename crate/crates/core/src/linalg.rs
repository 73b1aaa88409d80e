//! Sparse symmetric storage, a direct sparse Cholesky factorization, Jacobi-preconditioned
//! conjugate gradients, and a small dense LU for saddle point systems.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not positive definite (pivot {pivot:e} at column {column})")]
    NotPositiveDefinite { column: usize, pivot: f64 },
    #[error("matrix is singular to working precision")]
    Singular,
    #[error("conjugate gradients did not converge after {iterations} iterations (relative residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Square sparse matrix in compressed row storage with sorted column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Assembles from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; n + 1];
        for &(r, _, _) in triplets {
            counts[r + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        let mut next = counts.clone();
        for &(r, c, v) in triplets {
            cols[next[r]] = c;
            vals[next[r]] = v;
            next[r] += 1;
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        let mut row: Vec<(usize, f64)> = Vec::new();
        for i in 0..n {
            row.clear();
            row.extend((counts[i]..counts[i + 1]).map(|p| (cols[p], vals[p])));
            row.sort_unstable_by_key(|e| e.0);
            for &(c, v) in &row {
                if col_idx.len() > row_ptr[i] && *col_idx.last().unwrap() == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self { n, row_ptr, col_idx, values }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |p| (self.col_idx[p], self.values[p]))
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let cols = &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]];
        cols.binary_search(&j).map(|k| self.values[self.row_ptr[i] + k]).unwrap_or(0.0)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    /// Replaces the rows and columns listed in `pinned` by those of the identity. The
    /// sparsity pattern is kept, so factorizations of the result can reuse a symbolic
    /// analysis of `self`.
    pub fn with_identity_rows(&self, pinned: &[bool]) -> CsrMatrix {
        let mut out = self.clone();
        for i in 0..self.n {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[p];
                if pinned[i] || pinned[j] {
                    out.values[p] = if i == j { 1.0 } else { 0.0 };
                }
            }
        }
        out
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.n).all(|i| self.row(i).all(|(j, v)| (v - self.get(j, i)).abs() <= tol * (1.0 + v.abs())))
    }
}

/// Fill-reducing ordering by minimum degree on the explicit elimination graph.
/// Ties are broken by the lower node index, so the result is deterministic.
pub fn minimum_degree_ordering(a: &CsrMatrix) -> Vec<usize> {
    let n = a.dim();
    let mut adj: Vec<Vec<usize>> = (0..n).map(|i| a.row(i).map(|(j, _)| j).filter(|&j| j != i).collect()).collect();
    let mut eliminated = vec![false; n];
    let mut heap: BinaryHeap<Reverse<(usize, usize)>> = (0..n).map(|i| Reverse((adj[i].len(), i))).collect();
    let mut order = Vec::with_capacity(n);
    let mut merged = Vec::new();
    while let Some(Reverse((deg, v))) = heap.pop() {
        if eliminated[v] || deg != adj[v].len() {
            continue;
        }
        eliminated[v] = true;
        order.push(v);
        let clique = std::mem::take(&mut adj[v]);
        for &u in &clique {
            merged.clear();
            let (mut p, mut q) = (0, 0);
            let (left, right) = (&adj[u], &clique);
            while p < left.len() || q < right.len() {
                let next = match (left.get(p), right.get(q)) {
                    (Some(&x), Some(&y)) if x == y => {
                        p += 1;
                        q += 1;
                        x
                    }
                    (Some(&x), Some(&y)) if x < y => {
                        p += 1;
                        x
                    }
                    (Some(&x), None) => {
                        p += 1;
                        x
                    }
                    (_, Some(&y)) => {
                        q += 1;
                        y
                    }
                    (None, None) => unreachable!(),
                };
                if next != u && next != v {
                    merged.push(next);
                }
            }
            std::mem::swap(&mut adj[u], &mut merged);
            heap.push(Reverse((adj[u].len(), u)));
        }
    }
    order
}

/// Sparse Cholesky factor `P A P^T = L L^T` with a reusable symbolic analysis.
#[derive(Debug, Clone)]
pub struct SparseCholesky {
    n: usize,
    perm: Vec<usize>,
    // Upper triangle of the permuted matrix in column storage, plus the source of each entry.
    c_ptr: Vec<usize>,
    c_idx: Vec<usize>,
    c_src: Vec<usize>,
    parent: Vec<usize>,
    l_ptr: Vec<usize>,
    l_idx: Vec<usize>,
    l_val: Vec<f64>,
    nnz_pattern: usize,
}

const NONE: usize = usize::MAX;

impl SparseCholesky {
    /// Symbolic analysis followed by a numeric factorization of `a`.
    pub fn new(a: &CsrMatrix) -> Result<Self, LinalgError> {
        let mut chol = Self::analyze(a);
        chol.refactor(a)?;
        Ok(chol)
    }

    /// Ordering, elimination tree and column counts for the pattern of `a`.
    pub fn analyze(a: &CsrMatrix) -> Self {
        let n = a.dim();
        let perm = minimum_degree_ordering(a);
        let mut pinv = vec![0usize; n];
        for (k, &i) in perm.iter().enumerate() {
            pinv[i] = k;
        }
        // Column j of C holds the entries (i, j) of P A P^T with i <= j.
        let mut counts = vec![0usize; n + 1];
        for r in 0..n {
            for (c, _) in a.row(r) {
                let (pr, pc) = (pinv[r], pinv[c]);
                if pr <= pc {
                    counts[pc + 1] += 1;
                }
            }
        }
        for j in 0..n {
            counts[j + 1] += counts[j];
        }
        let c_ptr = counts.clone();
        let mut next = counts;
        let mut c_idx = vec![0usize; c_ptr[n]];
        let mut c_src = vec![0usize; c_ptr[n]];
        for r in 0..n {
            for p in a.row_ptr()[r]..a.row_ptr()[r + 1] {
                let (pr, pc) = (pinv[r], pinv[a.col_idx()[p]]);
                if pr <= pc {
                    c_idx[next[pc]] = pr;
                    c_src[next[pc]] = p;
                    next[pc] += 1;
                }
            }
        }

        // Elimination tree with path compression.
        let mut parent = vec![NONE; n];
        let mut ancestor = vec![NONE; n];
        for k in 0..n {
            for &i0 in &c_idx[c_ptr[k]..c_ptr[k + 1]] {
                let mut i = i0;
                while i != NONE && i < k {
                    let next = ancestor[i];
                    ancestor[i] = k;
                    if next == NONE {
                        parent[i] = k;
                    }
                    i = next;
                }
            }
        }

        // Column counts from the row patterns.
        let mut col_count = vec![1usize; n];
        let mut stack = vec![0usize; n];
        let mut mark = vec![NONE; n];
        for k in 0..n {
            let top = ereach(&c_ptr, &c_idx, k, &parent, &mut stack, &mut mark);
            for &i in &stack[top..] {
                col_count[i] += 1;
            }
        }
        let mut l_ptr = vec![0usize; n + 1];
        for j in 0..n {
            l_ptr[j + 1] = l_ptr[j] + col_count[j];
        }
        let nnz = l_ptr[n];
        Self {
            n,
            perm,
            c_ptr,
            c_idx,
            c_src,
            parent,
            l_ptr,
            l_idx: vec![0; nnz],
            l_val: vec![0.0; nnz],
            nnz_pattern: a.nnz(),
        }
    }

    /// Numeric factorization of a matrix with the same pattern as the analyzed one.
    pub fn refactor(&mut self, a: &CsrMatrix) -> Result<(), LinalgError> {
        if a.dim() != self.n || a.nnz() != self.nnz_pattern {
            return Err(LinalgError::DimensionMismatch { expected: self.n, got: a.dim() });
        }
        let n = self.n;
        let values = a.values();
        let mut x = vec![0.0; n];
        let mut next = self.l_ptr[..n].to_vec();
        let mut stack = vec![0usize; n];
        let mut mark = vec![NONE; n];
        for k in 0..n {
            let top = ereach(&self.c_ptr, &self.c_idx, k, &self.parent, &mut stack, &mut mark);
            for q in self.c_ptr[k]..self.c_ptr[k + 1] {
                x[self.c_idx[q]] += values[self.c_src[q]];
            }
            let mut d = x[k];
            x[k] = 0.0;
            for &i in &stack[top..] {
                let lki = x[i] / self.l_val[self.l_ptr[i]];
                x[i] = 0.0;
                for p in self.l_ptr[i] + 1..next[i] {
                    x[self.l_idx[p]] -= self.l_val[p] * lki;
                }
                d -= lki * lki;
                let p = next[i];
                next[i] += 1;
                self.l_idx[p] = k;
                self.l_val[p] = lki;
            }
            if d <= 0.0 || !d.is_finite() {
                return Err(LinalgError::NotPositiveDefinite { column: self.perm[k], pivot: d });
            }
            let p = next[k];
            next[k] += 1;
            self.l_idx[p] = k;
            self.l_val[p] = d.sqrt();
        }
        Ok(())
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&i| b[i]).collect();
        for j in 0..n {
            x[j] /= self.l_val[self.l_ptr[j]];
            let xj = x[j];
            for p in self.l_ptr[j] + 1..self.l_ptr[j + 1] {
                x[self.l_idx[p]] -= self.l_val[p] * xj;
            }
        }
        for j in (0..n).rev() {
            let mut s = x[j];
            for p in self.l_ptr[j] + 1..self.l_ptr[j + 1] {
                s -= self.l_val[p] * x[self.l_idx[p]];
            }
            x[j] = s / self.l_val[self.l_ptr[j]];
        }
        let mut out = vec![0.0; n];
        for (k, &i) in self.perm.iter().enumerate() {
            out[i] = x[k];
        }
        out
    }

    pub fn factor_nnz(&self) -> usize {
        self.l_ptr[self.n]
    }
}

/// Nonzero pattern of row `k` of `L`, returned in `stack[top..]` in topological order.
fn ereach(
    c_ptr: &[usize],
    c_idx: &[usize],
    k: usize,
    parent: &[usize],
    stack: &mut [usize],
    mark: &mut [usize],
) -> usize {
    let n = parent.len();
    let mut top = n;
    mark[k] = k;
    for &i0 in &c_idx[c_ptr[k]..c_ptr[k + 1]] {
        if i0 > k {
            continue;
        }
        let mut i = i0;
        let mut len = 0;
        while mark[i] != k {
            stack[len] = i;
            len += 1;
            mark[i] = k;
            i = parent[i];
        }
        while len > 0 {
            top -= 1;
            len -= 1;
            stack[top] = stack[len];
        }
    }
    top
}

/// Result of a conjugate gradient solve.
#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub solution: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Jacobi-preconditioned conjugate gradients for a symmetric positive definite matrix.
pub fn pcg(a: &CsrMatrix, b: &[f64], x0: Option<&[f64]>, tol: f64, max_iter: usize) -> Result<CgOutcome, LinalgError> {
    let n = a.dim();
    if b.len() != n {
        return Err(LinalgError::DimensionMismatch { expected: n, got: b.len() });
    }
    let inv_diag: Vec<f64> = a.diagonal().iter().map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 }).collect();
    let mut x = x0.map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; n]);
    let ax = a.mul_vec(&x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let b_norm = norm(b).max(f64::MIN_POSITIVE);
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut res = norm(&r) / b_norm;
    for it in 0..max_iter {
        if res <= tol {
            return Ok(CgOutcome { solution: x, iterations: it, relative_residual: res });
        }
        a.mul_vec_into(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        res = norm(&r) / b_norm;
    }
    if res <= tol {
        return Ok(CgOutcome { solution: x, iterations: max_iter, relative_residual: res });
    }
    Err(LinalgError::NoConvergence { iterations: max_iter, residual: res })
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Which algorithm solves the symmetric positive definite systems.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum SolverKind {
    #[default]
    Cholesky,
    Cg { tol: f64, max_iter: usize },
}

/// Dense row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] += v;
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.data.chunks(self.n).map(|row| dot(row, x)).collect()
    }

    /// Solves `A x = b` by LU factorization with partial pivoting.
    pub fn lu_solve(&self, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
        let n = self.n;
        if b.len() != n {
            return Err(LinalgError::DimensionMismatch { expected: n, got: b.len() });
        }
        let mut a = self.data.clone();
        let mut x = b.to_vec();
        let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        for k in 0..n {
            let piv = (k..n).max_by(|&i, &j| a[i * n + k].abs().total_cmp(&a[j * n + k].abs())).unwrap();
            if a[piv * n + k].abs() <= 1e-14 * scale {
                return Err(LinalgError::Singular);
            }
            if piv != k {
                for j in 0..n {
                    a.swap(k * n + j, piv * n + j);
                }
                x.swap(k, piv);
            }
            let akk = a[k * n + k];
            for i in k + 1..n {
                let f = a[i * n + k] / akk;
                if f != 0.0 {
                    for j in k + 1..n {
                        a[i * n + j] -= f * a[k * n + j];
                    }
                    x[i] -= f * x[k];
                }
            }
        }
        for k in (0..n).rev() {
            let s: f64 = (k + 1..n).map(|j| a[k * n + j] * x[j]).sum();
            x[k] = (x[k] - s) / a[k * n + k];
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn laplacian_2d(m: usize) -> CsrMatrix {
        let id = |i: usize, j: usize| i * m + j;
        let mut t = Vec::new();
        for i in 0..m {
            for j in 0..m {
                t.push((id(i, j), id(i, j), 4.0));
                if i > 0 {
                    t.push((id(i, j), id(i - 1, j), -1.0));
                }
                if i + 1 < m {
                    t.push((id(i, j), id(i + 1, j), -1.0));
                }
                if j > 0 {
                    t.push((id(i, j), id(i, j - 1), -1.0));
                }
                if j + 1 < m {
                    t.push((id(i, j), id(i, j + 1), -1.0));
                }
            }
        }
        CsrMatrix::from_triplets(m * m, &t)
    }

    fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 1.0));
        }
        for _ in 0..3 * n {
            let (i, j) = (rng.random_range(0..n), rng.random_range(0..n));
            if i != j {
                let v: f64 = rng.random_range(-1.0..1.0);
                t.push((i, j, v));
                t.push((j, i, v));
                t.push((i, i, v.abs() + 0.1));
                t.push((j, j, v.abs() + 0.1));
            }
        }
        CsrMatrix::from_triplets(n, &t)
    }

    fn residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
        let ax = a.mul_vec(x);
        norm(&ax.iter().zip(b).map(|(p, q)| p - q).collect::<Vec<_>>()) / norm(b)
    }

    #[test]
    fn triplets_sum_duplicates() {
        let a = CsrMatrix::from_triplets(2, &[(0, 0, 1.0), (0, 0, 2.0), (1, 0, -1.0), (0, 1, -1.0), (1, 1, 5.0)]);
        assert_eq!(a.get(0, 0), 3.0);
        assert_eq!(a.get(1, 0), -1.0);
        assert_eq!(a.nnz(), 4);
        assert!(a.is_symmetric(0.0));
    }

    #[test]
    fn ordering_is_a_permutation() {
        let a = laplacian_2d(9);
        let mut p = minimum_degree_ordering(&a);
        p.sort_unstable();
        assert_eq!(p, (0..81).collect::<Vec<_>>());
    }

    #[test]
    fn cholesky_solves_laplacian() {
        let a = laplacian_2d(30);
        let b: Vec<f64> = (0..900).map(|i| (i as f64).sin()).collect();
        let chol = SparseCholesky::new(&a).unwrap();
        assert!(residual(&a, &chol.solve(&b), &b) < 1e-13);
        // Minimum degree keeps the fill well below the dense count.
        assert!(chol.factor_nnz() < 900 * 60);
    }

    #[test]
    fn refactor_reuses_pattern() {
        let a = laplacian_2d(8);
        let mut chol = SparseCholesky::new(&a).unwrap();
        let mut pinned = vec![false; 64];
        pinned[5] = true;
        pinned[40] = true;
        let pinned_a = a.with_identity_rows(&pinned);
        chol.refactor(&pinned_a).unwrap();
        let b = vec![1.0; 64];
        let x = chol.solve(&b);
        assert!(residual(&pinned_a, &x, &b) < 1e-13);
        assert!((x[5] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn indefinite_matrix_is_reported() {
        let a = CsrMatrix::from_triplets(2, &[(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 1.0)]);
        assert!(matches!(SparseCholesky::new(&a), Err(LinalgError::NotPositiveDefinite { .. })));
    }

    #[test]
    fn pcg_matches_cholesky() {
        let a = laplacian_2d(20);
        let b: Vec<f64> = (0..400).map(|i| 1.0 + (i % 7) as f64).collect();
        let direct = SparseCholesky::new(&a).unwrap().solve(&b);
        let iter = pcg(&a, &b, None, 1e-12, 1000).unwrap();
        let diff = direct.iter().zip(&iter.solution).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-9);
    }

    #[test]
    fn pcg_reports_failure() {
        let a = laplacian_2d(20);
        let b = vec![1.0; 400];
        assert!(matches!(pcg(&a, &b, None, 1e-14, 3), Err(LinalgError::NoConvergence { .. })));
    }

    #[test]
    fn dense_lu_solves_saddle_system() {
        // [[2, 1], [1, 0]] is indefinite but nonsingular.
        let mut m = DenseMatrix::zeros(2);
        m.set(0, 0, 2.0);
        m.set(0, 1, 1.0);
        m.set(1, 0, 1.0);
        let x = m.lu_solve(&[3.0, 1.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
        let singular = DenseMatrix::zeros(3);
        assert_eq!(singular.lu_solve(&[1.0, 0.0, 0.0]), Err(LinalgError::Singular));
    }

    proptest! {
        #[test]
        fn cholesky_solves_random_spd(seed in 0u64..500, n in 1usize..60) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_spd(n, &mut rng);
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let x = SparseCholesky::new(&a).unwrap().solve(&b);
            prop_assert!(residual(&a, &x, &b) < 1e-10);
        }
    }
}
