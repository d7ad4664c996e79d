//! Compressed-row sparse operators with complex entries.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Rows below this count are multiplied serially.
const PAR_MATVEC_MIN_DIM: usize = 4096;
const PAR_ROW_CHUNK: usize = 512;

pub(crate) const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub(crate) const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Square sparse matrix in canonical CSR form: columns sorted within each
/// row, no duplicates, no stored zeros.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseOp {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<Complex64>,
    hermitian: bool,
}

impl SparseOp {
    /// Build from coordinate triplets; duplicates are summed.
    pub fn from_triplets(dim: usize, mut triplets: Vec<(usize, usize, Complex64)>, hermitian: bool) -> Self {
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; dim + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals: Vec<Complex64> = Vec::with_capacity(triplets.len());
        let mut rows = Vec::with_capacity(triplets.len());
        for (r, c, v) in triplets {
            assert!(r < dim && c < dim, "triplet ({r}, {c}) outside dimension {dim}");
            if rows.last() == Some(&r) && cols.last() == Some(&c) {
                *vals.last_mut().unwrap() += v;
            } else {
                rows.push(r);
                cols.push(c);
                vals.push(v);
            }
        }
        let mut out_cols = Vec::with_capacity(cols.len());
        let mut out_vals = Vec::with_capacity(vals.len());
        for ((r, c), v) in rows.into_iter().zip(cols).zip(vals) {
            if v != ZERO {
                row_ptr[r + 1] += 1;
                out_cols.push(c);
                out_vals.push(v);
            }
        }
        for i in 0..dim {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            dim,
            row_ptr,
            cols: out_cols,
            vals: out_vals,
            hermitian,
        }
    }

    fn from_rows(dim: usize, rows: Vec<Vec<(usize, Complex64)>>, hermitian: bool) -> Self {
        let mut row_ptr = Vec::with_capacity(dim + 1);
        row_ptr.push(0);
        let nnz = rows.iter().map(Vec::len).sum();
        let mut cols = Vec::with_capacity(nnz);
        let mut vals = Vec::with_capacity(nnz);
        for row in rows {
            for (c, v) in row {
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        Self {
            dim,
            row_ptr,
            cols,
            vals,
            hermitian,
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            row_ptr: vec![0; dim + 1],
            cols: Vec::new(),
            vals: Vec::new(),
            hermitian: true,
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_real_diagonal(&vec![1.0; dim])
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let t = diag
            .iter()
            .enumerate()
            .map(|(i, &d)| (i, i, Complex64::new(d, 0.0)))
            .collect();
        Self::from_triplets(diag.len(), t, true)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// The Hermitian flag as declared at construction.
    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn with_hermitian(mut self, hermitian: bool) -> Self {
        self.hermitian = hermitian;
        self
    }

    /// True when every stored entry has zero imaginary part.
    pub fn is_real(&self) -> bool {
        self.vals.iter().all(|v| v.im == 0.0)
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[r.clone()].binary_search(&j) {
            Ok(p) => self.vals[r.start + p],
            Err(_) => ZERO,
        }
    }

    /// All stored entries as `(row, col, value)`.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        (0..self.dim).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn diagonal(&self) -> Vec<Complex64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.vals.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut y = vec![ZERO; self.dim];
        self.matvec_into(x, &mut y);
        y
    }

    /// `y = A x`, rows split into fixed chunks when the operator is large.
    /// Each row is reduced serially, so results do not depend on thread count.
    pub fn matvec_into(&self, x: &[Complex64], y: &mut [Complex64]) {
        assert_eq!(x.len(), self.dim);
        assert_eq!(y.len(), self.dim);
        let row_dot = |i: usize| {
            let mut acc = ZERO;
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[p] * x[self.cols[p]];
            }
            acc
        };
        if self.dim >= PAR_MATVEC_MIN_DIM {
            y.par_chunks_mut(PAR_ROW_CHUNK).enumerate().for_each(|(c, chunk)| {
                let base = c * PAR_ROW_CHUNK;
                for (o, yi) in chunk.iter_mut().enumerate() {
                    *yi = row_dot(base + o);
                }
            });
        } else {
            for (i, yi) in y.iter_mut().enumerate() {
                *yi = row_dot(i);
            }
        }
    }

    /// `⟨x, A x⟩`.
    pub fn expectation(&self, x: &[Complex64]) -> Complex64 {
        crate::vector::dot(x, &self.matvec(x))
    }

    pub fn adjoint(&self) -> Self {
        let t = self.triplets().map(|(i, j, v)| (j, i, v.conj())).collect();
        Self::from_triplets(self.dim, t, self.hermitian)
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        let hermitian = self.hermitian && c.im == 0.0;
        let t = self.triplets().map(|(i, j, v)| (i, j, v * c)).collect();
        Self::from_triplets(self.dim, t, hermitian)
    }

    pub fn scaled_real(&self, c: f64) -> Self {
        self.scaled(Complex64::new(c, 0.0))
    }

    /// `Σ c_i A_i`; Hermitian when every term is Hermitian with a real weight.
    pub fn linear_combination(dim: usize, terms: &[(Complex64, &SparseOp)]) -> Self {
        let mut t = Vec::with_capacity(terms.iter().map(|(_, a)| a.nnz()).sum());
        let mut hermitian = true;
        for (c, a) in terms {
            assert_eq!(a.dim, dim, "dimension mismatch in linear combination");
            hermitian &= a.hermitian && c.im == 0.0;
            t.extend(a.triplets().map(|(i, j, v)| (i, j, v * c)));
        }
        Self::from_triplets(dim, t, hermitian)
    }

    pub fn add(&self, other: &SparseOp) -> Self {
        Self::linear_combination(self.dim, &[(ONE, self), (ONE, other)])
    }

    pub fn sub(&self, other: &SparseOp) -> Self {
        Self::linear_combination(self.dim, &[(ONE, self), (-ONE, other)])
    }

    /// Sparse product `A B` (row-wise Gustavson with a dense accumulator).
    /// The Hermitian flag of the product is not asserted.
    pub fn matmul(&self, other: &SparseOp) -> Self {
        assert_eq!(self.dim, other.dim);
        let n = self.dim;
        let rows: Vec<Vec<(usize, Complex64)>> = (0..n)
            .into_par_iter()
            .chunks(PAR_ROW_CHUNK)
            .flat_map_iter(|chunk| {
                let mut acc = vec![ZERO; n];
                let mut mark = vec![false; n];
                let mut touched = Vec::new();
                chunk
                    .into_iter()
                    .map(|i| {
                        for (k, a) in self.row(i) {
                            for (j, b) in other.row(k) {
                                if !mark[j] {
                                    mark[j] = true;
                                    touched.push(j);
                                }
                                acc[j] += a * b;
                            }
                        }
                        touched.sort_unstable();
                        let row: Vec<_> = touched
                            .iter()
                            .filter_map(|&j| {
                                let v = acc[j];
                                acc[j] = ZERO;
                                mark[j] = false;
                                (v != ZERO).then_some((j, v))
                            })
                            .collect();
                        touched.clear();
                        row
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
        Self::from_rows(n, rows, false)
    }

    /// `A^p` for `p >= 1`, Hermitian when `A` is.
    pub fn power(&self, p: usize) -> Self {
        assert!(p >= 1, "matrix power needs p >= 1");
        let mut out = self.clone();
        for _ in 1..p {
            out = out.matmul(self);
        }
        out.hermitian = self.hermitian;
        out
    }

    /// `[A, B] = AB − BA`.
    pub fn commutator(&self, other: &SparseOp) -> Self {
        self.matmul(other).sub(&other.matmul(self)).with_hermitian(false)
    }

    /// `max_ij |A_ij − conj(A_ji)|`.
    pub fn hermitian_defect(&self) -> f64 {
        self.triplets()
            .map(|(i, j, v)| (v - self.get(j, i).conj()).norm())
            .fold(0.0, f64::max)
    }

    /// Check Hermiticity to `rel_tol · max|A|`.
    pub fn verify_hermitian(&self, rel_tol: f64) -> Result<()> {
        let defect = self.hermitian_defect();
        if defect > rel_tol * self.max_abs().max(f64::MIN_POSITIVE) {
            Err(Error::NotHermitian { defect })
        } else {
            Ok(())
        }
    }

    /// `max_ij |A_ij − B_ij|`.
    pub fn max_abs_diff(&self, other: &SparseOp) -> f64 {
        assert_eq!(self.dim, other.dim);
        let a = self.triplets().map(|(i, j, v)| (v - other.get(i, j)).norm());
        let b = other
            .triplets()
            .filter(|&(i, j, _)| self.get(i, j) == ZERO)
            .map(|(_, _, v)| v.norm());
        a.chain(b).fold(0.0, f64::max)
    }

    /// Largest magnitude among entries `(i, j)` with `keep(i, j)`.
    pub fn max_abs_where(&self, mut keep: impl FnMut(usize, usize) -> bool) -> f64 {
        self.triplets()
            .filter(|&(i, j, _)| keep(i, j))
            .map(|(_, _, v)| v.norm())
            .fold(0.0, f64::max)
    }

    /// The principal block on rows and columns `start..start+len`.
    pub fn principal_block(&self, start: usize, len: usize) -> Self {
        let end = start + len;
        let t = (start..end)
            .flat_map(|i| {
                self.row(i)
                    .filter(move |&(j, _)| j >= start && j < end)
                    .map(move |(j, v)| (i - start, j - start, v))
            })
            .collect();
        Self::from_triplets(len, t, self.hermitian)
    }

    /// `s ⊗ A` for a 2×2 matrix `s` (spin-major ordering).
    pub fn kron_spin(s: [[Complex64; 2]; 2], a: &SparseOp, hermitian: bool) -> Self {
        let d = a.dim;
        let mut t = Vec::with_capacity(4 * a.nnz());
        for (r, srow) in s.iter().enumerate() {
            for (c, &sv) in srow.iter().enumerate() {
                if sv != ZERO {
                    t.extend(a.triplets().map(|(i, j, v)| (r * d + i, c * d + j, sv * v)));
                }
            }
        }
        Self::from_triplets(2 * d, t, hermitian)
    }

    /// Dense row-major copy.
    pub fn to_dense(&self) -> Vec<Vec<Complex64>> {
        let mut m = vec![vec![ZERO; self.dim]; self.dim];
        for (i, j, v) in self.triplets() {
            m[i][j] = v;
        }
        m
    }
}
