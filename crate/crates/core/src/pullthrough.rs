//! Pull-through identities for the ground state of `F_{−|η|}`.
//!
//! With `ψ` the ground state of `F_{−|η|}` at energy `E`,
//!
//! ```text
//! (A₁ψ)(k)   = −(F_{|η|} − E + ω_k)^{-1} Σ_j j α_j f_j(k) φ(f_j)^{j−1} ψ
//! (A₂ψ)(k,q) = −(F_{−|η|} − E + ω_k + ω_q)^{-1} Σ_j j α_j [ f_j(q) φ(f_j)^{j−1} (A₁ψ)(k)
//!                  + f_j(k) φ(f_j)^{j−1} (A₁ψ)(q) + (j−1) f_j(k) f_j(q) φ(f_j)^{j−2} ψ ]
//! ```
//!
//! Both hold exactly without truncation; at finite cutoff the residual is a
//! truncation effect that shrinks as the cutoff grows.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::eigen::{conjugate_gradient, eigensolve_with, CgFailure};
use crate::error::{Error, Result};
use crate::fock::{field, number_operator, pointwise_annihilation, FockBasis, FockVector};
use crate::model::build_fiber;
use crate::onebody::ModelParams;
use crate::sparse::SparseOp;
use crate::spectra::AnalysisConfig;
use crate::vector;

/// Relative tolerance of the shifted linear solves.
pub const CG_TOL: f64 = 1e-10;
/// Modes per warm-started chunk; chunks run in parallel.
const MODE_CHUNK: usize = 8;

#[derive(Clone, Debug, Serialize)]
pub struct PullThroughReport {
    pub n_max: usize,
    pub energy: f64,
    pub per_mode_residual: Vec<f64>,
    pub rhs_norms: Vec<f64>,
    pub lhs_norms: Vec<f64>,
    /// `sqrt(Σ_k w_k residual_k²)`.
    pub aggregate: f64,
    /// Aggregate divided by the weighted norm of the larger side.
    pub relative: f64,
    pub cg_iterations: Vec<usize>,
    /// `⟨ψ, N ψ⟩` and `⟨ψ, N² ψ⟩` for the normalized ground state.
    pub moments: [f64; 2],
}

#[derive(Clone, Debug, Serialize)]
pub struct SecondOrderReport {
    pub n_max: usize,
    pub energy: f64,
    /// `((k, q), ‖lhs − rhs‖)` for `k ≤ q`.
    pub residuals: Vec<((usize, usize), f64)>,
    /// `sqrt(Σ_{k,q} w_k w_q residual_{kq}²)` over all ordered pairs.
    pub aggregate: f64,
    pub relative: f64,
}

/// Ground state of `F_{−|η|}` and the opposite fiber `F_{|η|}`.
struct Fibers {
    basis: FockBasis,
    low: SparseOp,
    high: SparseOp,
    psi: FockVector,
    energy: f64,
}

fn fibers(params: &ModelParams, cfg: &AnalysisConfig) -> Result<Fibers> {
    let basis = cfg.basis(params.modes().len())?;
    let low_sign: i8 = if params.eta >= 0.0 { -1 } else { 1 };
    let low = build_fiber(params, &basis, low_sign)?;
    let high = build_fiber(params, &basis, -low_sign)?;
    let ground = eigensolve_with(&low, 1, &cfg.eigen)?;
    Ok(Fibers {
        basis,
        psi: ground.ground_state().clone(),
        energy: ground.ground_energy(),
        low,
        high,
    })
}

/// `φ(f_j)^p v` by repeated application.
fn apply_power(phi: &SparseOp, p: usize, v: &[Complex64]) -> Vec<Complex64> {
    let mut out = v.to_vec();
    for _ in 0..p {
        out = phi.matvec(&out);
    }
    out
}

/// `(F + shift)^{-1} b` for each source, modes chunked with warm starts.
fn shifted_solves(
    op: &SparseOp,
    shifts: &[f64],
    sources: &[Vec<Complex64>],
    labels: &[usize],
) -> Result<Vec<(Vec<Complex64>, usize)>> {
    let max_iter = 20 * op.dim().max(50);
    let chunks: Vec<Result<Vec<(Vec<Complex64>, usize)>>> = (0..shifts.len())
        .collect::<Vec<_>>()
        .par_chunks(MODE_CHUNK)
        .map(|idx| {
            let mut out = Vec::with_capacity(idx.len());
            let mut warm: Option<Vec<Complex64>> = None;
            for &t in idx {
                let sol = conjugate_gradient(op, shifts[t], &sources[t], warm.as_deref(), CG_TOL, max_iter)
                    .map_err(|e| Error::Singular {
                        mode: labels[t],
                        detail: match e {
                            CgFailure::Indefinite { .. } => format!("shifted operator is not positive definite: {e}"),
                            CgFailure::NoConvergence { .. } => e.to_string(),
                        },
                    })?;
                warm = Some(sol.x.clone());
                out.push((sol.x, sol.iterations));
            }
            Ok(out)
        })
        .collect();
    let mut all = Vec::with_capacity(shifts.len());
    for c in chunks {
        all.extend(c?);
    }
    Ok(all)
}

/// Nonzero-coefficient terms `(j, α_j, φ(f_j))`.
fn coupling_terms(params: &ModelParams, basis: &FockBasis) -> Result<Vec<(usize, f64, SparseOp)>> {
    let mut out = Vec::new();
    for j in 1..=params.coupling().degree() {
        let a = params.alpha_at(j);
        if a != 0.0 {
            out.push((j, a, field(basis, params.coupling().get(j), params.modes())?));
        }
    }
    Ok(out)
}

fn moments(basis: &FockBasis, psi: &[Complex64]) -> [f64; 2] {
    let nrm = vector::norm_sqr(psi);
    let n = number_operator(basis);
    let npsi = n.matvec(psi);
    let m1 = vector::dot(psi, &npsi).re / nrm;
    let m2 = vector::norm_sqr(&npsi) / nrm;
    [m1, m2]
}

/// First-order identity at the ground state of `F_{−|η|}`.
pub fn pull_through_residual(params: &ModelParams, cfg: &AnalysisConfig) -> Result<PullThroughReport> {
    let f = fibers(params, cfg)?;
    pull_through_residual_for(params, &f.basis, &f.high, &f.psi, f.energy)
}

/// First-order identity for an explicit vector `psi` and energy `energy`,
/// with `high` the opposite-sign fiber.
pub fn pull_through_residual_for(
    params: &ModelParams,
    basis: &FockBasis,
    high: &SparseOp,
    psi: &FockVector,
    energy: f64,
) -> Result<PullThroughReport> {
    let modes = params.modes();
    let m = modes.len();
    let terms = coupling_terms(params, basis)?;
    // u_j = j α_j φ(f_j)^{j−1} ψ
    let u: Vec<(usize, Vec<Complex64>)> = terms
        .iter()
        .map(|(j, a, phi)| {
            let mut v = apply_power(phi, j - 1, psi.coeffs());
            vector::scale(Complex64::new(*j as f64 * a, 0.0), &mut v);
            (*j, v)
        })
        .collect();
    let sources: Vec<Vec<Complex64>> = (0..m)
        .map(|k| {
            let mut b = vector::zeros(basis.dim());
            for (j, uj) in &u {
                let c = params.coupling().get(*j)[k];
                if c != Complex64::new(0.0, 0.0) {
                    vector::axpy(c, uj, &mut b);
                }
            }
            b
        })
        .collect();
    let shifts: Vec<f64> = modes.energies().iter().map(|w| w - energy).collect();
    let labels: Vec<usize> = (0..m).collect();
    let solved = shifted_solves(high, &shifts, &sources, &labels)?;
    let a1 = pointwise_annihilation(basis, modes, psi, 1)?;
    let weights = modes.weights();

    let mut per_mode_residual = Vec::with_capacity(m);
    let mut rhs_norms = Vec::with_capacity(m);
    let mut lhs_norms = Vec::with_capacity(m);
    let mut cg_iterations = Vec::with_capacity(m);
    for (k, (x, it)) in solved.iter().enumerate() {
        let lhs = a1.get(&[k]).coeffs();
        // rhs = −x
        let res = lhs.iter().zip(x).map(|(l, r)| (l + r).norm_sqr()).sum::<f64>().sqrt();
        per_mode_residual.push(res);
        rhs_norms.push(vector::norm(x));
        lhs_norms.push(vector::norm(lhs));
        cg_iterations.push(*it);
    }
    let weighted = |v: &[f64]| v.iter().zip(&weights).map(|(r, w)| w * r * r).sum::<f64>().sqrt();
    let aggregate = weighted(&per_mode_residual);
    let scale = weighted(&rhs_norms).max(weighted(&lhs_norms));
    Ok(PullThroughReport {
        n_max: basis.n_max(),
        energy,
        relative: if scale > 0.0 { aggregate / scale } else { aggregate },
        aggregate,
        per_mode_residual,
        rhs_norms,
        lhs_norms,
        cg_iterations,
        moments: moments(basis, psi.coeffs()),
    })
}

/// Second-order identity at the ground state of `F_{−|η|}`, evaluated for
/// `k ≤ q` only.
pub fn pull_through_second_order(params: &ModelParams, cfg: &AnalysisConfig) -> Result<SecondOrderReport> {
    let f = fibers(params, cfg)?;
    let modes = params.modes();
    let m = modes.len();
    let energies = modes.energies();
    let weights = modes.weights();
    let terms = coupling_terms(params, &f.basis)?;
    let a1 = pointwise_annihilation(&f.basis, modes, &f.psi, 1)?;
    let a2 = pointwise_annihilation(&f.basis, modes, &f.psi, 2)?;

    // g_j(k) = j α_j φ(f_j)^{j−1} (A₁ψ)(k) and h_j = j (j−1) α_j φ(f_j)^{j−2} ψ
    let g: Vec<Vec<Vec<Complex64>>> = terms
        .iter()
        .map(|(j, a, phi)| {
            (0..m)
                .map(|k| {
                    let mut v = apply_power(phi, j - 1, a1.get(&[k]).coeffs());
                    vector::scale(Complex64::new(*j as f64 * a, 0.0), &mut v);
                    v
                })
                .collect()
        })
        .collect();
    let h: Vec<Option<Vec<Complex64>>> = terms
        .iter()
        .map(|(j, a, phi)| {
            (*j >= 2).then(|| {
                let mut v = apply_power(phi, j - 2, f.psi.coeffs());
                vector::scale(Complex64::new((*j * (*j - 1)) as f64 * a, 0.0), &mut v);
                v
            })
        })
        .collect();

    let pairs: Vec<(usize, usize)> = (0..m).flat_map(|k| (k..m).map(move |q| (k, q))).collect();
    let sources: Vec<Vec<Complex64>> = pairs
        .iter()
        .map(|&(k, q)| {
            let mut b = vector::zeros(f.basis.dim());
            for (t, (j, _, _)) in terms.iter().enumerate() {
                let fj = params.coupling().get(*j);
                vector::axpy(fj[q], &g[t][k], &mut b);
                vector::axpy(fj[k], &g[t][q], &mut b);
                if let Some(ht) = &h[t] {
                    vector::axpy(fj[k] * fj[q], ht, &mut b);
                }
            }
            b
        })
        .collect();
    let shifts: Vec<f64> = pairs.iter().map(|&(k, q)| energies[k] + energies[q] - f.energy).collect();
    let labels: Vec<usize> = pairs.iter().map(|&(k, _)| k).collect();
    let solved = shifted_solves(&f.low, &shifts, &sources, &labels)?;

    let mut residuals = Vec::with_capacity(pairs.len());
    let mut agg = 0.0;
    let mut scale = 0.0;
    for (&(k, q), (x, _)) in pairs.iter().zip(&solved) {
        let lhs = a2.get(&[k, q]).coeffs();
        let res = lhs.iter().zip(x).map(|(l, r)| (l + r).norm_sqr()).sum::<f64>().sqrt();
        let mult = if k == q { 1.0 } else { 2.0 };
        agg += mult * weights[k] * weights[q] * res * res;
        scale += mult * weights[k] * weights[q] * vector::norm_sqr(lhs).max(vector::norm_sqr(x));
        residuals.push(((k, q), res));
    }
    let aggregate = agg.sqrt();
    Ok(SecondOrderReport {
        n_max: f.basis.n_max(),
        energy: f.energy,
        residuals,
        relative: if scale > 0.0 { aggregate / scale.sqrt() } else { aggregate },
        aggregate,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct MomentRow {
    pub n_max: usize,
    /// `(a, ⟨ψ, N^a ψ⟩)` for each requested exponent.
    pub moments: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct MomentTable {
    pub rows: Vec<MomentRow>,
    /// Exponents whose moments keep growing at the end of the schedule.
    pub unbounded: Vec<f64>,
}

/// Relative increment above which a final step counts as still growing.
pub const PLATEAU_TOL: f64 = 1e-3;

/// `⟨ψ, N^a ψ⟩` for the ground state of `F_{−|η|}` along a schedule.
///
/// An exponent is flagged when its moments increase at every step and the
/// last relative increment exceeds [`PLATEAU_TOL`] without shrinking.
pub fn moment_stability(
    schedule: &[(ModelParams, usize)],
    a_values: &[f64],
    cfg: &AnalysisConfig,
) -> Result<MomentTable> {
    if schedule.is_empty() {
        return Err(Error::Precondition("empty moment schedule".into()));
    }
    let mut rows = Vec::with_capacity(schedule.len());
    for (params, n_max) in schedule {
        let step = AnalysisConfig {
            n_max: *n_max,
            ..cfg.clone()
        };
        let f = fibers(params, &step)?;
        let psi = f.psi.coeffs();
        let nrm = vector::norm_sqr(psi);
        let counts: Vec<f64> = (0..f.basis.dim()).map(|i| f.basis.grade(i) as f64).collect();
        let moments = a_values
            .iter()
            .map(|&a| {
                let v = psi
                    .iter()
                    .zip(&counts)
                    .map(|(z, n)| if *n == 0.0 { 0.0 } else { n.powf(a) * z.norm_sqr() })
                    .sum::<f64>();
                (a, v / nrm)
            })
            .collect();
        rows.push(MomentRow { n_max: *n_max, moments });
    }
    let unbounded = a_values
        .iter()
        .enumerate()
        .filter(|&(i, _)| {
            let seq: Vec<f64> = rows.iter().map(|r: &MomentRow| r.moments[i].1).collect();
            if seq.len() < 3 {
                return false;
            }
            let inc: Vec<f64> = seq.windows(2).map(|w| w[1] - w[0]).collect();
            let last = *inc.last().unwrap();
            let prev = inc[inc.len() - 2];
            inc.iter().all(|d| *d > 0.0) && last / seq.last().unwrap().abs() > PLATEAU_TOL && last >= prev
        })
        .map(|(_, a)| *a)
        .collect();
    Ok(MomentTable { rows, unbounded })
}
