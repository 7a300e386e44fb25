//! Orthonormal Legendre chaos basis in two uniform parameters.
//!
//! Each parameter is uniform on `[-sqrt(3), sqrt(3)]` (zero mean, unit
//! variance). The univariate factors satisfy the orthonormal three-term
//! recurrence `y p_n = c_{n+1} p_{n+1} + c_n p_{n-1}` with
//! `c_n = sqrt(3) n / sqrt((2n - 1)(2n + 1))`, which also gives the entries of
//! the multiplication (coupling) matrices directly.

use std::sync::Arc;

use crate::error::{invalid, Result};
use crate::linalg::{Pattern, SparseMatrix};

/// Half-width of the parameter interval, `sqrt(3)`.
pub const GAMMA_HALF_WIDTH: f64 = 1.732_050_807_568_877_2;

/// Recurrence coefficient `c_n` (`c_0 = 0`).
pub fn recurrence_coefficient(n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    GAMMA_HALF_WIDTH * n / ((2.0 * n - 1.0) * (2.0 * n + 1.0)).sqrt()
}

/// Writes `p_0(y), ..., p_k(y)` into `out` (length `k + 1`).
pub fn legendre_orthonormal_into(y: f64, out: &mut [f64]) {
    let Some(first) = out.first_mut() else { return };
    *first = 1.0;
    if out.len() == 1 {
        return;
    }
    out[1] = y;
    for n in 1..out.len() - 1 {
        out[n + 1] =
            (y * out[n] - recurrence_coefficient(n) * out[n - 1]) / recurrence_coefficient(n + 1);
    }
}

pub fn legendre_orthonormal(k: usize, y: f64) -> Vec<f64> {
    let mut out = vec![0.0; k + 1];
    legendre_orthonormal_into(y, &mut out);
    out
}

/// Total-degree tensor basis `Psi_j(y) = p_{a1}(y1) p_{a2}(y2)`, `a1 + a2 <= k`.
#[derive(Debug, Clone)]
pub struct PceBasis {
    degree: usize,
    indices: Vec<[usize; 2]>,
    coupling: [SparseMatrix; 2],
}

/// Position of multi-index `(a1, a2)` in degree-graded order, lexicographic
/// (descending `a1`) within each degree.
fn graded_position(a: [usize; 2]) -> usize {
    let d = a[0] + a[1];
    d * (d + 1) / 2 + a[1]
}

pub fn build_basis(degree: usize) -> PceBasis {
    let mut indices = Vec::with_capacity((degree + 1) * (degree + 2) / 2);
    for d in 0..=degree {
        for a2 in 0..=d {
            indices.push([d - a2, a2]);
        }
    }
    debug_assert!(indices
        .iter()
        .enumerate()
        .all(|(j, a)| graded_position(*a) == j));

    let n = indices.len();
    let mut rows: Vec<Vec<usize>> = (0..n).map(|j| vec![j]).collect();
    let mut entries = Vec::new();
    for (j, a) in indices.iter().enumerate() {
        for m in 0..2 {
            // raise component m by one; the lowered neighbour is the transpose
            let mut up = *a;
            up[m] += 1;
            if up[0] + up[1] <= degree {
                let s = graded_position(up);
                let c = recurrence_coefficient(up[m]);
                rows[j].push(s);
                rows[s].push(j);
                entries.push((m, j, s, c));
            }
        }
    }
    let pattern = Arc::new(Pattern::from_rows(rows));
    let mut coupling = [
        SparseMatrix::zeros(pattern.clone()),
        SparseMatrix::zeros(pattern),
    ];
    for (m, j, s, c) in entries {
        coupling[m].add(j, s, c);
        coupling[m].add(s, j, c);
    }
    PceBasis {
        degree,
        indices,
        coupling,
    }
}

impl PceBasis {
    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Basis dimension `n_k = (k + 1)(k + 2) / 2`.
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[[usize; 2]] {
        &self.indices
    }

    pub fn position(&self, index: [usize; 2]) -> Option<usize> {
        (index[0] + index[1] <= self.degree).then(|| graded_position(index))
    }

    /// `(G_m)_{js} = <y_m Psi_j Psi_s>` for `m` in {0, 1}.
    pub fn coupling(&self, m: usize) -> &SparseMatrix {
        &self.coupling[m]
    }

    /// Evaluates every basis function at `y`.
    pub fn eval(&self, y: [f64; 2]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.len()];
        self.eval_into(y, &mut out)?;
        Ok(out)
    }

    pub fn eval_into(&self, y: [f64; 2], out: &mut [f64]) -> Result<()> {
        if !(y[0].is_finite() && y[1].is_finite()) {
            return Err(invalid(format!(
                "basis evaluation point ({}, {}) is not finite",
                y[0], y[1]
            )));
        }
        let k = self.degree;
        let mut p1 = [0.0; 32];
        let mut p2 = [0.0; 32];
        let (mut v1, mut v2);
        let (u1, u2): (&mut [f64], &mut [f64]) = if k < 32 {
            (&mut p1[..=k], &mut p2[..=k])
        } else {
            v1 = vec![0.0; k + 1];
            v2 = vec![0.0; k + 1];
            (&mut v1[..], &mut v2[..])
        };
        legendre_orthonormal_into(y[0], u1);
        legendre_orthonormal_into(y[1], u2);
        for (o, a) in out.iter_mut().zip(&self.indices) {
            *o = u1[a[0]] * u2[a[1]];
        }
        Ok(())
    }
}
