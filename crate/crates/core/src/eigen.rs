//! Hermitian eigensolvers and shifted linear solves.
//!
//! Small operators go through a dense self-adjoint decomposition; larger ones
//! through a block Lanczos iteration with full reorthogonalization and thick
//! restarts. Start blocks come from a seeded generator, so a solve is a pure
//! function of the operator and the options.

use faer::{c64, Mat, Side};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fock::FockVector;
use crate::sparse::{SparseOp, ZERO};
use crate::vector;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_DENSE_THRESHOLD: usize = 2500;
pub const DEFAULT_SEED: u64 = 0x5eed_2024;

/// Relative Hermiticity tolerance accepted by the solvers.
const HERMITIAN_TOL: f64 = 1e-13;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Auto,
    Dense,
    Lanczos,
}

#[derive(Clone, Debug)]
pub struct EigenOptions {
    pub tol: f64,
    pub method: Method,
    pub dense_threshold: usize,
    pub seed: u64,
    /// Restart cycles allowed per requested eigenpair.
    pub restarts_per_pair: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            method: Method::Auto,
            dense_threshold: DEFAULT_DENSE_THRESHOLD,
            seed: DEFAULT_SEED,
            restarts_per_pair: 50,
        }
    }
}

impl EigenOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }

    pub fn method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SolverInfo {
    pub method: Method,
    pub restarts: usize,
    pub matvecs: usize,
    pub tol: f64,
}

/// Lowest eigenpairs of a Hermitian operator.
#[derive(Clone, Debug)]
pub struct SpectralResult {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<FockVector>,
    pub residuals: Vec<f64>,
    pub requested: usize,
    pub info: SolverInfo,
}

impl SpectralResult {
    pub fn ground_energy(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn ground_state(&self) -> &FockVector {
        &self.eigenvectors[0]
    }
}

/// Full dense spectral decomposition; `vectors[p]` belongs to `values[p]`.
#[derive(Clone, Debug)]
pub struct DenseEigen {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<Complex64>>,
}

fn linalg_err(e: impl std::fmt::Debug) -> Error {
    Error::Linalg(format!("{e:?}"))
}

/// Dense decomposition of a Hermitian operator, eigenvalues ascending.
/// Purely real operators take the real symmetric path.
pub fn dense_hermitian_eigen(op: &SparseOp) -> Result<DenseEigen> {
    op.verify_hermitian(HERMITIAN_TOL)?;
    let n = op.dim();
    if n == 0 {
        return Ok(DenseEigen { values: vec![], vectors: vec![] });
    }
    if op.is_real() {
        let mut m = Mat::<f64>::zeros(n, n);
        for (i, j, v) in op.triplets() {
            m[(i, j)] = v.re;
        }
        let e = m.self_adjoint_eigen(Side::Lower).map_err(linalg_err)?;
        let s = e.S().column_vector();
        let u = e.U();
        Ok(DenseEigen {
            values: (0..n).map(|p| s[p]).collect(),
            vectors: (0..n)
                .map(|p| (0..n).map(|i| Complex64::new(u[(i, p)], 0.0)).collect())
                .collect(),
        })
    } else {
        let mut m = Mat::<c64>::zeros(n, n);
        for (i, j, v) in op.triplets() {
            m[(i, j)] = v;
        }
        let e = m.self_adjoint_eigen(Side::Lower).map_err(linalg_err)?;
        let s = e.S().column_vector();
        let u = e.U();
        Ok(DenseEigen {
            values: (0..n).map(|p| s[p].re).collect(),
            vectors: (0..n).map(|p| (0..n).map(|i| u[(i, p)]).collect()).collect(),
        })
    }
}

/// Every eigenvalue of a Hermitian operator, ascending.
pub fn all_eigenvalues(op: &SparseOp) -> Result<Vec<f64>> {
    Ok(dense_hermitian_eigen(op)?.values)
}

/// Real roots of `Σ c_j x^j` (coefficients lowest degree first) from the
/// companion matrix, keeping eigenvalues with `|Im| ≤ imag_tol·(1+|z|)`.
pub fn polynomial_real_roots(coeffs: &[f64], imag_tol: f64) -> Result<Vec<f64>> {
    let mut c = coeffs.to_vec();
    while c.last() == Some(&0.0) {
        c.pop();
    }
    let deg = c.len().saturating_sub(1);
    if deg == 0 {
        return Ok(vec![]);
    }
    let lead = c[deg];
    let mut m = Mat::<f64>::zeros(deg, deg);
    for i in 1..deg {
        m[(i, i - 1)] = 1.0;
    }
    for i in 0..deg {
        m[(i, deg - 1)] = -c[i] / lead;
    }
    let eig = m.eigenvalues().map_err(linalg_err)?;
    let mut roots: Vec<f64> = eig
        .iter()
        .filter(|z| z.im.abs() <= imag_tol * (1.0 + z.norm()))
        .map(|z| z.re)
        .collect();
    roots.sort_by(f64::total_cmp);
    Ok(roots)
}

/// The `k` lowest eigenpairs with the default options at tolerance `tol`.
pub fn eigensolve(op: &SparseOp, k: usize, tol: f64) -> Result<SpectralResult> {
    eigensolve_with(op, k, &EigenOptions::with_tol(tol))
}

pub fn eigensolve_with(op: &SparseOp, k: usize, opts: &EigenOptions) -> Result<SpectralResult> {
    let n = op.dim();
    if k == 0 || k > n {
        return Err(Error::Precondition(format!(
            "requested {k} eigenpairs of a {n}-dimensional operator"
        )));
    }
    let method = match opts.method {
        Method::Auto if n <= opts.dense_threshold => Method::Dense,
        Method::Auto => Method::Lanczos,
        m => m,
    };
    if op.triplets().all(|(i, j, _)| i == j) {
        op.verify_hermitian(HERMITIAN_TOL)?;
        return Ok(diagonal_lowest(op, k, opts));
    }
    match method {
        Method::Dense => dense_lowest(op, k, opts),
        _ => {
            op.verify_hermitian(HERMITIAN_TOL)?;
            lanczos(op, k, opts)
        }
    }
}

/// Eigenpairs of a diagonal operator, read off exactly.
fn diagonal_lowest(op: &SparseOp, k: usize, opts: &EigenOptions) -> SpectralResult {
    let n = op.dim();
    let d: Vec<f64> = op.diagonal().iter().map(|z| z.re).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]).then(a.cmp(&b)));
    order.truncate(k);
    SpectralResult {
        eigenvalues: order.iter().map(|&i| d[i]).collect(),
        eigenvectors: order
            .iter()
            .map(|&i| {
                let mut v = vec![Complex64::new(0.0, 0.0); n];
                v[i] = Complex64::new(1.0, 0.0);
                FockVector::new(v)
            })
            .collect(),
        residuals: vec![0.0; k],
        requested: k,
        info: SolverInfo {
            method: Method::Dense,
            restarts: 0,
            matvecs: 0,
            tol: opts.tol,
        },
    }
}

fn dense_lowest(op: &SparseOp, k: usize, opts: &EigenOptions) -> Result<SpectralResult> {
    let eig = dense_hermitian_eigen(op)?;
    let mut residuals = Vec::with_capacity(k);
    for p in 0..k {
        let mut r = op.matvec(&eig.vectors[p]);
        vector::axpy(Complex64::new(-eig.values[p], 0.0), &eig.vectors[p], &mut r);
        residuals.push(vector::norm(&r));
    }
    Ok(SpectralResult {
        eigenvalues: eig.values[..k].to_vec(),
        eigenvectors: eig.vectors.into_iter().take(k).map(FockVector::new).collect(),
        residuals,
        requested: k,
        info: SolverInfo {
            method: Method::Dense,
            restarts: 0,
            matvecs: k,
            tol: opts.tol,
        },
    })
}

/// Two-pass classical Gram-Schmidt of `w` against `basis`; returns the
/// remaining norm before normalization.
fn orthogonalize(basis: &[Vec<Complex64>], w: &mut [Complex64]) -> f64 {
    for _ in 0..2 {
        let coeffs: Vec<Complex64> = basis.iter().map(|v| vector::dot(v, w)).collect();
        for (v, c) in basis.iter().zip(coeffs) {
            vector::axpy(-c, v, w);
        }
    }
    vector::norm(w)
}

struct Krylov<'a> {
    op: &'a SparseOp,
    v: Vec<Vec<Complex64>>,
    av: Vec<Vec<Complex64>>,
    matvecs: usize,
    rng_counter: u64,
    seed: u64,
    real: bool,
}

impl Krylov<'_> {
    /// Append `w` after orthogonalization; returns false when it deflates.
    fn push(&mut self, mut w: Vec<Complex64>, scale: f64) -> bool {
        let r = orthogonalize(&self.v, &mut w);
        if !(r > 1e-10 * scale.max(f64::MIN_POSITIVE)) {
            return false;
        }
        vector::scale(Complex64::new(1.0 / r, 0.0), &mut w);
        let aw = self.op.matvec(&w);
        self.matvecs += 1;
        self.v.push(w);
        self.av.push(aw);
        true
    }

    fn push_random(&mut self) -> bool {
        for _ in 0..8 {
            self.rng_counter += 1;
            let w = vector::seeded_vector(self.op.dim(), self.seed.wrapping_add(self.rng_counter), self.real);
            let s = vector::norm(&w);
            if self.push(w, s) {
                return true;
            }
        }
        false
    }
}

/// Ritz pairs of the current basis: values ascending and coefficient vectors.
fn rayleigh_ritz(k: &Krylov) -> Result<DenseEigen> {
    let m = k.v.len();
    let mut t = Vec::with_capacity(m * m);
    for i in 0..m {
        for j in 0..m {
            let a = vector::dot(&k.v[i], &k.av[j]);
            let b = vector::dot(&k.v[j], &k.av[i]).conj();
            t.push((i, j, (a + b) * 0.5));
        }
    }
    dense_hermitian_eigen(&SparseOp::from_triplets(m, t, true))
}

fn combine(cols: &[Vec<Complex64>], y: &[Complex64]) -> Vec<Complex64> {
    let mut out = vector::zeros(cols[0].len());
    for (c, yi) in cols.iter().zip(y) {
        if *yi != ZERO {
            vector::axpy(*yi, c, &mut out);
        }
    }
    out
}

fn lanczos(op: &SparseOp, k: usize, opts: &EigenOptions) -> Result<SpectralResult> {
    let n = op.dim();
    let block = k.max(2).min(n);
    let max_basis = (4 * k + 20).max(40).min(n);
    let keep = (k + block).min(max_basis.saturating_sub(block)).max(k);
    let budget = opts.restarts_per_pair.max(1) * k;
    let mut kr = Krylov {
        op,
        v: Vec::with_capacity(max_basis),
        av: Vec::with_capacity(max_basis),
        matvecs: 0,
        rng_counter: 0,
        seed: opts.seed,
        real: op.is_real(),
    };
    for _ in 0..block {
        kr.push_random();
    }
    let mut frontier: Vec<usize> = (0..kr.v.len()).collect();
    let mut restarts = 0;
    loop {
        // expand with A times the newest block
        while kr.v.len() < max_basis {
            let before = kr.v.len();
            for &j in &frontier {
                if kr.v.len() >= max_basis {
                    break;
                }
                let w = kr.av[j].clone();
                let s = vector::norm(&w);
                kr.push(w, s);
            }
            if kr.v.len() == before {
                // invariant subspace: continue from a fresh direction
                if kr.v.len() >= n || !kr.push_random() {
                    break;
                }
            }
            frontier = (before..kr.v.len()).collect();
        }

        let ritz = rayleigh_ritz(&kr)?;
        let m = kr.v.len();
        let kept = keep.min(m);
        let mut xs = Vec::with_capacity(kept);
        let mut axs = Vec::with_capacity(kept);
        let mut res = Vec::with_capacity(kept);
        for p in 0..kept {
            let x = combine(&kr.v, &ritz.vectors[p]);
            let ax = combine(&kr.av, &ritz.vectors[p]);
            let mut r = ax.clone();
            vector::axpy(Complex64::new(-ritz.values[p], 0.0), &x, &mut r);
            res.push(vector::norm(&r));
            xs.push(x);
            axs.push(ax);
        }
        let worst = (0..k)
            .map(|p| res[p] / (1.0 + ritz.values[p].abs()))
            .fold(0.0, f64::max);
        let exhausted = m >= n;
        if worst <= opts.tol || exhausted {
            return finish(op, xs, k, restarts, kr.matvecs, opts);
        }
        if restarts >= budget {
            return Err(Error::NoConvergence {
                iterations: restarts,
                worst_residual: worst,
                tol: opts.tol,
            });
        }
        restarts += 1;

        // thick restart on the lowest Ritz vectors, then continue from the
        // residual directions of the least converged among them
        let mut order: Vec<usize> = (0..kept).collect();
        order.sort_by(|&a, &b| {
            let ra = res[a] / (1.0 + ritz.values[a].abs());
            let rb = res[b] / (1.0 + ritz.values[b].abs());
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        kr.v = xs;
        kr.av = axs;
        let start = kr.v.len();
        for &p in order.iter().take(block) {
            let w = kr.av[p].clone();
            let s = vector::norm(&w);
            kr.push(w, s);
        }
        if kr.v.len() == start {
            kr.push_random();
        }
        frontier = (start..kr.v.len()).collect();
    }
}

fn finish(
    op: &SparseOp,
    mut xs: Vec<Vec<Complex64>>,
    k: usize,
    restarts: usize,
    mut matvecs: usize,
    opts: &EigenOptions,
) -> Result<SpectralResult> {
    xs.truncate(k);
    let mut pairs = Vec::with_capacity(k);
    for mut x in xs {
        vector::normalize(&mut x);
        let ax = op.matvec(&x);
        matvecs += 1;
        let theta = vector::dot(&x, &ax).re;
        let mut r = ax;
        vector::axpy(Complex64::new(-theta, 0.0), &x, &mut r);
        pairs.push((theta, x, vector::norm(&r)));
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut eigenvalues = Vec::with_capacity(k);
    let mut eigenvectors = Vec::with_capacity(k);
    let mut residuals = Vec::with_capacity(k);
    for (t, x, r) in pairs {
        eigenvalues.push(t);
        eigenvectors.push(FockVector::new(x));
        residuals.push(r);
    }
    Ok(SpectralResult {
        eigenvalues,
        eigenvectors,
        residuals,
        requested: k,
        info: SolverInfo {
            method: Method::Lanczos,
            restarts,
            matvecs,
            tol: opts.tol,
        },
    })
}

#[derive(Clone, Debug)]
pub struct CgOutcome {
    pub x: Vec<Complex64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum CgFailure {
    /// A search direction with non-positive curvature `pᴴ(A+s)p`.
    Indefinite { curvature: f64 },
    NoConvergence { iterations: usize, relative_residual: f64 },
}

impl std::fmt::Display for CgFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CgFailure::Indefinite { curvature } => {
                write!(f, "non-positive curvature {curvature:e} in conjugate gradient")
            }
            CgFailure::NoConvergence { iterations, relative_residual } => write!(
                f,
                "conjugate gradient stalled after {iterations} iterations at relative residual {relative_residual:e}"
            ),
        }
    }
}

/// Solve `(A + shift) x = b` for Hermitian positive-definite `A + shift` by
/// conjugate gradients, to `‖r‖ ≤ tol·‖b‖`.
pub fn conjugate_gradient(
    op: &SparseOp,
    shift: f64,
    b: &[Complex64],
    x0: Option<&[Complex64]>,
    tol: f64,
    max_iter: usize,
) -> std::result::Result<CgOutcome, CgFailure> {
    let n = op.dim();
    let bnorm = vector::norm(b);
    if bnorm == 0.0 {
        return Ok(CgOutcome {
            x: vector::zeros(n),
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let apply = |v: &[Complex64]| {
        let mut y = op.matvec(v);
        vector::axpy(Complex64::new(shift, 0.0), v, &mut y);
        y
    };
    let mut x = x0.map_or_else(|| vector::zeros(n), <[Complex64]>::to_vec);
    let mut r = b.to_vec();
    if x0.is_some() {
        let ax = apply(&x);
        vector::axpy(Complex64::new(-1.0, 0.0), &ax, &mut r);
        // a poor warm start is discarded
        if vector::norm(&r) > bnorm {
            x = vector::zeros(n);
            r = b.to_vec();
        }
    }
    let mut p = r.clone();
    let mut rr = vector::norm_sqr(&r);
    for it in 0..max_iter {
        let rel = rr.sqrt() / bnorm;
        if rel <= tol {
            return Ok(CgOutcome {
                x,
                iterations: it,
                relative_residual: rel,
            });
        }
        let ap = apply(&p);
        let curvature = vector::dot(&p, &ap).re;
        if !(curvature > 0.0) {
            return Err(CgFailure::Indefinite { curvature });
        }
        let a = rr / curvature;
        vector::axpy(Complex64::new(a, 0.0), &p, &mut x);
        vector::axpy(Complex64::new(-a, 0.0), &ap, &mut r);
        let rr_new = vector::norm_sqr(&r);
        let beta = rr_new / rr;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + *pi * beta;
        }
        rr = rr_new;
    }
    let rel = rr.sqrt() / bnorm;
    if rel <= tol {
        return Ok(CgOutcome {
            x,
            iterations: max_iter,
            relative_residual: rel,
        });
    }
    Err(CgFailure::NoConvergence {
        iterations: max_iter,
        relative_residual: rel,
    })
}
