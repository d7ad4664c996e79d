//! The spin-boson Hamiltonian on spin ⊗ Fock and its two parity fibers.
//!
//! Spin ordering is `(e₁, e₋₁)` with `σ_z e_j = j e_j`; composite indices are
//! spin-major, `s·D + i` with `s = 0` for `e₁`.

use num_complex::Complex64;

use crate::eigen::all_eigenvalues;
use crate::error::{Error, Result};
use crate::fock::{dgamma, enumerate_basis_with_limit, field, gamma_parity, FockBasis, DEFAULT_CAPACITY};
use crate::onebody::{validate_hypotheses, ModelParams};
use crate::sparse::{SparseOp, ONE, ZERO};

/// Largest admissible off-block magnitude after conjugation by `U`.
pub const OFFBLOCK_TOL: f64 = 1e-12;
/// Largest admissible mismatch between the extracted blocks and the fibers.
pub const BLOCK_TOL: f64 = 1e-13;

#[derive(Clone, Debug)]
pub struct SpinFockBasis {
    fock: FockBasis,
}

impl SpinFockBasis {
    pub fn new(fock: FockBasis) -> Self {
        Self { fock }
    }

    pub fn fock(&self) -> &FockBasis {
        &self.fock
    }

    pub fn dim(&self) -> usize {
        2 * self.fock.dim()
    }

    /// Composite index of `e_j ⊗ |i⟩` with `spin = 0` for `e₁` and `1` for `e₋₁`.
    pub fn index(&self, spin: usize, i: usize) -> usize {
        spin * self.fock.dim() + i
    }

    /// The `σ_z` eigenvalue of spin slot `s`.
    pub fn spin_value(s: usize) -> i8 {
        if s == 0 {
            1
        } else {
            -1
        }
    }
}

/// `H_η`, the fibers `F_{±η}` and the parity unitary at one cutoff.
#[derive(Clone, Debug)]
pub struct OperatorBundle {
    pub h_full: SparseOp,
    pub f_plus: SparseOp,
    pub f_minus: SparseOp,
    pub u_parity: SparseOp,
    pub fingerprint: u64,
    pub n_max: usize,
}

/// Parity-even and parity-odd pieces of the fiber, without the `η` term:
/// `dΓ(ω) + Σ_{i even} α_i φ(f_i)^i` and `Σ_{i odd} α_i φ(f_i)^i`.
struct FiberParts {
    even: SparseOp,
    odd: SparseOp,
}

fn check_model(params: &ModelParams, basis: &FockBasis) -> Result<()> {
    if basis.mode_count() != params.modes().len() {
        return Err(Error::Dimension {
            expected: params.modes().len(),
            got: basis.mode_count(),
        });
    }
    let report = validate_hypotheses(params);
    if let Some(h1) = report.checks.iter().find(|c| c.number == 1 && !c.passed) {
        return Err(Error::Model(format!("hypothesis 1 fails: {}", h1.reason)));
    }
    Ok(())
}

fn fiber_parts(params: &ModelParams, basis: &FockBasis) -> Result<FiberParts> {
    check_model(params, basis)?;
    let dim = basis.dim();
    let modes = params.modes();
    let coupling = params.coupling();
    let degree = coupling.degree();

    // group exponents that share a coupling vector so each field is powered once
    let mut done = vec![false; degree + 1];
    let mut even_terms: Vec<(Complex64, SparseOp)> = Vec::new();
    let mut odd_terms: Vec<(Complex64, SparseOp)> = Vec::new();
    for i in 1..=degree {
        if done[i] {
            continue;
        }
        let g = coupling.get(i);
        let group: Vec<usize> = (i..=degree)
            .filter(|&j| !done[j] && coupling.get(j) == g)
            .collect();
        let phi = field(basis, g, modes)?;
        let mut power = phi.clone();
        let mut p = 1;
        for &j in &group {
            done[j] = true;
            while p < j {
                power = power.matmul(&phi);
                p += 1;
            }
            let a = params.alpha_at(j);
            if a == 0.0 {
                continue;
            }
            let term = (Complex64::new(a, 0.0), power.clone().with_hermitian(true));
            if j % 2 == 0 {
                even_terms.push(term);
            } else {
                odd_terms.push(term);
            }
        }
    }

    let free = dgamma(basis, &modes.energies())?;
    let mut even_refs: Vec<(Complex64, &SparseOp)> = vec![(ONE, &free)];
    even_refs.extend(even_terms.iter().map(|(c, op)| (*c, op)));
    let odd_refs: Vec<(Complex64, &SparseOp)> = odd_terms.iter().map(|(c, op)| (*c, op)).collect();
    Ok(FiberParts {
        even: SparseOp::linear_combination(dim, &even_refs),
        odd: SparseOp::linear_combination(dim, &odd_refs).with_hermitian(true),
    })
}

fn assemble_fiber(parts: &FiberParts, parity: &SparseOp, eta: f64) -> SparseOp {
    SparseOp::linear_combination(
        parts.even.dim(),
        &[(ONE, &parts.even), (Complex64::new(eta, 0.0), parity), (ONE, &parts.odd)],
    )
}

fn assemble_full(parts: &FiberParts, eta: f64) -> SparseOp {
    let d = parts.even.dim();
    let id = SparseOp::identity(d);
    let one = SparseOp::kron_spin([[ONE, ZERO], [ZERO, ONE]], &parts.even, true);
    let z = SparseOp::kron_spin([[ONE, ZERO], [ZERO, -ONE]], &id, true);
    let x = SparseOp::kron_spin([[ZERO, ONE], [ONE, ZERO]], &parts.odd, true);
    SparseOp::linear_combination(2 * d, &[(ONE, &one), (Complex64::new(eta, 0.0), &z), (ONE, &x)])
}

/// `sign·η Γ(−1) + dΓ(ω) + Σ α_i φ(f_i)^i` with `sign = ±1`.
pub fn build_fiber(params: &ModelParams, basis: &FockBasis, sign: i8) -> Result<SparseOp> {
    let parts = fiber_parts(params, basis)?;
    Ok(assemble_fiber(&parts, &gamma_parity(basis), f64::from(sign.signum()) * params.eta))
}

/// `η σ_z⊗1 + 1⊗dΓ(ω) + Σ α_i (σ_x⊗φ(f_i))^i`, using `σ_x^i = σ_x^{i mod 2}`.
pub fn build_full(params: &ModelParams, spin_basis: &SpinFockBasis) -> Result<SparseOp> {
    let parts = fiber_parts(params, spin_basis.fock())?;
    Ok(assemble_full(&parts, params.eta))
}

/// Fixes `e_j ⊗ |n⟩` for even `|n|` and swaps `j ↔ −j` for odd `|n|`.
pub fn parity_unitary(spin_basis: &SpinFockBasis) -> SparseOp {
    let fock = spin_basis.fock();
    let d = fock.dim();
    let mut t = Vec::with_capacity(2 * d);
    for i in 0..d {
        let odd = fock.grade(i) % 2 == 1;
        for s in 0..2 {
            let target = if odd { 1 - s } else { s };
            t.push((spin_basis.index(s, i), spin_basis.index(target, i), ONE));
        }
    }
    SparseOp::from_triplets(2 * d, t, true)
}

/// `σ_x ⊗ 1`.
pub fn spin_flip(spin_basis: &SpinFockBasis) -> SparseOp {
    SparseOp::kron_spin([[ZERO, ONE], [ONE, ZERO]], &SparseOp::identity(spin_basis.fock().dim()), true)
}

/// Build all operators of the model at the cutoff of `basis`.
pub fn build_bundle(params: &ModelParams, basis: &FockBasis) -> Result<OperatorBundle> {
    let parts = fiber_parts(params, basis)?;
    let parity = gamma_parity(basis);
    let spin_basis = SpinFockBasis::new(basis.clone());
    Ok(OperatorBundle {
        h_full: assemble_full(&parts, params.eta),
        f_plus: assemble_fiber(&parts, &parity, params.eta),
        f_minus: assemble_fiber(&parts, &parity, -params.eta),
        u_parity: parity_unitary(&spin_basis),
        fingerprint: params.fingerprint(),
        n_max: basis.n_max(),
    })
}

#[derive(Clone, Debug)]
pub struct Decomposition {
    pub offblock: f64,
    pub block_defect: f64,
    pub blocks: (SparseOp, SparseOp),
}

/// Conjugate `H` by `U`, measure the off-diagonal spin blocks and compare the
/// diagonal ones with the fibers.
pub fn decompose(bundle: &OperatorBundle) -> Result<Decomposition> {
    let d = bundle.f_plus.dim();
    if bundle.h_full.dim() != 2 * d || bundle.f_minus.dim() != d || bundle.u_parity.dim() != 2 * d {
        return Err(Error::Dimension {
            expected: 2 * d,
            got: bundle.h_full.dim(),
        });
    }
    let conj = bundle.u_parity.matmul(&bundle.h_full).matmul(&bundle.u_parity).with_hermitian(true);
    let offblock = conj.max_abs_where(|i, j| (i < d) != (j < d));
    let upper = conj.principal_block(0, d);
    let lower = conj.principal_block(d, d);
    let block_defect = upper.max_abs_diff(&bundle.f_plus).max(lower.max_abs_diff(&bundle.f_minus));
    if offblock > OFFBLOCK_TOL || block_defect > BLOCK_TOL {
        return Err(Error::Decomposition { offblock, block_defect });
    }
    Ok(Decomposition {
        offblock,
        block_defect,
        blocks: (upper, lower),
    })
}

/// Sums of `k` free-mode energies over all multisets, pruned above `ceiling`.
fn free_sums(energies: &[f64], k: usize, ceiling: f64) -> Vec<f64> {
    fn rec(e: &[f64], start: usize, left: usize, acc: f64, ceiling: f64, out: &mut Vec<f64>) {
        if left == 0 {
            out.push(acc);
            return;
        }
        for j in start..e.len() {
            // energies are sorted, so everything further along is larger
            if acc + left as f64 * e[j] > ceiling {
                break;
            }
            rec(e, j, left - 1, acc + e[j], ceiling, out);
        }
    }
    let mut sorted = energies.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut out = Vec::new();
    rec(&sorted, 0, k, 0.0, ceiling, &mut out);
    out
}

/// Spectrum of `F_η` on all modes assembled from the coupled modes alone:
/// `⊎_k { μ + λ_{j_1} + ⋯ + λ_{j_k} }` with `μ` running over the spectrum of
/// `F_{(−1)^k η}` on the coupled modes at cutoff `N_max − k`.
///
/// Sector `k` uses the reduced cutoff so that the result equals the spectrum
/// of the full truncated fiber when `free_cap = N_max`. Values above
/// `ceiling` are dropped.
pub fn decoupled_spectrum(
    params: &ModelParams,
    coupled: &[usize],
    n_max: usize,
    free_cap: usize,
    ceiling: Option<f64>,
) -> Result<Vec<f64>> {
    let m = params.modes().len();
    let mut is_coupled = vec![false; m];
    for &k in coupled {
        if k >= m {
            return Err(Error::ModeIndex { index: k, count: m });
        }
        is_coupled[k] = true;
    }
    let free: Vec<usize> = (0..m).filter(|&k| !is_coupled[k]).collect();
    if let Some(&k) = free.iter().find(|&&k| !params.coupling().vanishes_at(k)) {
        return Err(Error::Precondition(format!(
            "mode {k} is treated as free but carries a nonzero coupling"
        )));
    }
    let free_energies: Vec<f64> = free.iter().map(|&k| params.modes().modes()[k].energy).collect();
    let ceiling = ceiling.unwrap_or(f64::INFINITY);
    let cap = if free.is_empty() { 0 } else { free_cap.min(n_max) };
    let restricted = if coupled.is_empty() {
        None
    } else {
        let mut sorted = coupled.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        Some(params.restrict(&sorted)?)
    };

    let mut out = Vec::new();
    for k in 0..=cap {
        let sign: i8 = if k % 2 == 0 { 1 } else { -1 };
        let mu = match &restricted {
            Some(p) => {
                let basis = enumerate_basis_with_limit(p.modes().len(), n_max - k, DEFAULT_CAPACITY)?;
                all_eigenvalues(&build_fiber(p, &basis, sign)?)?
            }
            None => vec![f64::from(sign) * params.eta],
        };
        let lowest = mu[0];
        for s in free_sums(&free_energies, k, ceiling - lowest) {
            out.extend(mu.iter().map(|x| x + s).filter(|&v| v <= ceiling));
        }
    }
    out.sort_by(f64::total_cmp);
    Ok(out)
}
