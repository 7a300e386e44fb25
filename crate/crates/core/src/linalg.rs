//! Sparse matrices on a shared pattern, and a reusable SPD factorization.

use std::sync::Arc;

use sprs::CsMat;
use sprs_ldl::{Ldl, LdlNumeric};

use crate::error::{Error, Result};

/// Row-compressed sparsity pattern with sorted column indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pattern {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
}

impl Pattern {
    /// Pattern from per-row column lists; lists are sorted and deduplicated.
    pub fn from_rows(mut rows: Vec<Vec<usize>>) -> Self {
        let n = rows.len();
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        indptr.push(0);
        for row in rows.iter_mut() {
            row.sort_unstable();
            row.dedup();
            indices.extend_from_slice(row);
            indptr.push(indices.len());
        }
        Self { n, indptr, indices }
    }

    /// Vertex adjacency (including the diagonal) of a triangle mesh.
    pub fn from_triangles(n: usize, triangles: &[[usize; 3]]) -> Self {
        let mut rows: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for t in triangles {
            for &a in t {
                for &b in t {
                    rows[a].push(b);
                }
            }
        }
        Self::from_rows(rows)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.indices[self.indptr[i]..self.indptr[i + 1]]
    }

    pub fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        self.indptr[i]..self.indptr[i + 1]
    }

    /// Storage offset of entry `(i, j)`, if present.
    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        let start = self.indptr[i];
        self.row(i).binary_search(&j).ok().map(|k| start + k)
    }
}

/// Square sparse matrix stored on a (possibly shared) [`Pattern`].
#[derive(Debug, Clone)]
pub struct SparseMatrix {
    pattern: Arc<Pattern>,
    data: Vec<f64>,
}

impl SparseMatrix {
    pub fn zeros(pattern: Arc<Pattern>) -> Self {
        let data = vec![0.0; pattern.nnz()];
        Self { pattern, data }
    }

    pub fn pattern(&self) -> &Arc<Pattern> {
        &self.pattern
    }

    pub fn n(&self) -> usize {
        self.pattern.n
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Adds `value` to entry `(i, j)`; the entry must be in the pattern.
    pub fn add(&mut self, i: usize, j: usize, value: f64) {
        let k = self
            .pattern
            .position(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) not in sparsity pattern"));
        self.data[k] += value;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.pattern.position(i, j).map_or(0.0, |k| self.data[k])
    }

    /// `sum_k c_k A_k` for matrices on the same pattern.
    pub fn combination(terms: &[(f64, &SparseMatrix)]) -> Self {
        let first = terms.first().expect("at least one term").1;
        let mut data = vec![0.0; first.data.len()];
        for (c, m) in terms {
            assert!(Arc::ptr_eq(&m.pattern, &first.pattern) || *m.pattern == *first.pattern);
            for (d, v) in data.iter_mut().zip(&m.data) {
                *d += c * v;
            }
        }
        Self {
            pattern: first.pattern.clone(),
            data,
        }
    }

    /// `y = A x`.
    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.pattern.row_range(i) {
                acc += self.data[k] * x[self.pattern.indices[k]];
            }
            *yi = acc;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n()];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// `Y = A X` for row-major `X` with `m` columns.
    pub fn mul_block_into(&self, x: &[f64], m: usize, y: &mut [f64]) {
        for i in 0..self.n() {
            let yi = &mut y[i * m..(i + 1) * m];
            yi.fill(0.0);
            for k in self.pattern.row_range(i) {
                let a = self.data[k];
                let xj = &x[self.pattern.indices[k] * m..(self.pattern.indices[k] + 1) * m];
                for (t, s) in yi.iter_mut().zip(xj) {
                    *t += a * s;
                }
            }
        }
    }

    /// Largest `|A_ij - A_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n() {
            for k in self.pattern.row_range(i) {
                let j = self.pattern.indices[k];
                worst = worst.max((self.data[k] - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn to_csmat(&self) -> CsMat<f64> {
        CsMat::new(
            (self.n(), self.n()),
            self.pattern.indptr.clone(),
            self.pattern.indices.clone(),
            self.data.clone(),
        )
    }
}

/// `L D L^T` factorization of a symmetric positive definite matrix, computed once
/// and reused for many right-hand sides.
pub struct SpdFactor {
    ldl: LdlNumeric<f64, usize>,
    n: usize,
}

impl std::fmt::Debug for SpdFactor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpdFactor")
            .field("n", &self.n)
            .field("nnz_l", &self.ldl.nnz())
            .finish()
    }
}

impl SpdFactor {
    pub fn new(matrix: &CsMat<f64>) -> Result<Self> {
        let n = matrix.rows();
        let ldl = Ldl::new()
            .check_symmetry(sprs::SymmetryCheck::DontCheckSymmetry)
            .numeric(matrix.view())
            .map_err(|e| Error::Solver(format!("factorization failed: {e}")))?;
        if let Some((i, d)) = ldl
            .d()
            .iter()
            .enumerate()
            .find(|(_, d)| !(**d > 0.0 && d.is_finite()))
        {
            return Err(Error::Solver(format!(
                "matrix is not positive definite (pivot {i} = {d})"
            )));
        }
        Ok(Self { ldl, n })
    }

    pub fn from_sparse(matrix: &SparseMatrix) -> Result<Self> {
        Self::new(&matrix.to_csmat())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of stored entries in the triangular factor.
    pub fn factor_nnz(&self) -> usize {
        self.ldl.nnz()
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        self.ldl.solve(rhs)
    }

    /// Solves in place for each column of a row-major block with `m` columns.
    pub fn solve_block(&self, block: &mut [f64], m: usize) {
        let mut col = vec![0.0; self.n];
        for c in 0..m {
            for (i, v) in col.iter_mut().enumerate() {
                *v = block[i * m + c];
            }
            let x = self.ldl.solve(&col);
            for (i, v) in x.iter().enumerate() {
                block[i * m + c] = *v;
            }
        }
    }
}
