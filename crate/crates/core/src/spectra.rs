//! Ground-state structure, energy ordering, threshold diagnostics and
//! convergence in the cutoff.

use std::collections::BTreeSet;

use num_complex::Complex64;
use serde::Serialize;

use crate::eigen::{all_eigenvalues, eigensolve_with, polynomial_real_roots, EigenOptions, SpectralResult};
use crate::error::{Error, Result};
use crate::fock::{enumerate_basis_with_limit, field_power, FockBasis, FockVector, DEFAULT_CAPACITY};
use crate::model::{build_bundle, build_fiber, OperatorBundle};
use crate::onebody::{masses, validate_hypotheses, HypothesisReport, ModeTag, ModelParams};
use crate::sparse::{SparseOp, ONE};
use crate::vector;

/// Relative tolerance for calling two eigenvalues degenerate.
pub const DEGENERACY_TOL: f64 = 1e-9;

/// Truncation and solver settings shared by the analyses.
#[derive(Clone, Debug)]
pub struct AnalysisConfig {
    pub n_max: usize,
    pub eigen: EigenOptions,
    pub capacity: usize,
}

impl AnalysisConfig {
    pub fn new(n_max: usize) -> Self {
        Self {
            n_max,
            eigen: EigenOptions::default(),
            capacity: DEFAULT_CAPACITY,
        }
    }

    pub fn with_eigen(mut self, eigen: EigenOptions) -> Self {
        self.eigen = eigen;
        self
    }

    pub fn tol(&self) -> f64 {
        self.eigen.tol
    }

    pub fn basis(&self, mode_count: usize) -> Result<FockBasis> {
        enumerate_basis_with_limit(mode_count, self.n_max, self.capacity)
    }
}

/// `−‖ω^{−1/2} g‖²`, the bottom of `dΓ(ω) + φ(g)`.
pub fn linear_lower_bound(g: &[Complex64], energies: &[f64], weights: &[f64]) -> f64 {
    -g.iter()
        .zip(energies.iter().zip(weights))
        .map(|(z, (e, w))| z.norm_sqr() * w / e)
        .sum::<f64>()
}

fn eval_poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, a| acc * x + a)
}

fn derivative(c: &[f64]) -> Vec<f64> {
    c.iter().enumerate().skip(1).map(|(j, a)| j as f64 * a).collect()
}

/// Global minimum over ℝ of a polynomial with even degree and positive
/// leading coefficient (coefficients lowest degree first).
fn polynomial_minimum(c: &[f64]) -> Result<f64> {
    let d1 = derivative(c);
    let d2 = derivative(&d1);
    let lead = *d1.last().expect("degree at least one");
    let radius = 1.0 + d1.iter().map(|a| (a / lead).abs()).fold(0.0, f64::max);
    let mut best = eval_poly(c, 0.0);
    let polish = |mut x: f64| {
        for _ in 0..50 {
            let s = eval_poly(&d2, x);
            if s == 0.0 {
                break;
            }
            let step = eval_poly(&d1, x) / s;
            x -= step;
            if step.abs() <= 1e-15 * (1.0 + x.abs()) {
                break;
            }
        }
        x
    };
    for r in polynomial_real_roots(&d1, 1e-6)? {
        let x = polish(r);
        if x.is_finite() && x.abs() <= 2.0 * radius {
            best = best.min(eval_poly(c, x)).min(eval_poly(c, r));
        } else {
            best = best.min(eval_poly(c, r));
        }
    }
    // grid bracketing as a fallback against lost roots
    let steps = 4000;
    let h = 2.0 * radius / steps as f64;
    let mut prev = eval_poly(c, -radius);
    let mut cur = eval_poly(c, -radius + h);
    for s in 1..steps {
        let x = -radius + s as f64 * h;
        let next = eval_poly(c, x + h);
        if cur <= prev && cur <= next {
            // golden-section refinement inside [x − h, x + h]
            let (mut a, mut b) = (x - h, x + h);
            let g = (5f64.sqrt() - 1.0) / 2.0;
            for _ in 0..80 {
                let l = b - g * (b - a);
                let r = a + g * (b - a);
                if eval_poly(c, l) < eval_poly(c, r) {
                    b = r;
                } else {
                    a = l;
                }
            }
            best = best.min(eval_poly(c, 0.5 * (a + b))).min(cur);
        }
        prev = cur;
        cur = next;
    }
    Ok(best)
}

/// A constant `C(α)` with `Σ_{j≥2} α_j A(f_j)^j ≥ C` for every family of
/// self-adjoint `A(f_j)` compatible with the leading-term structure.
///
/// For each even `i_b` with `α_{i_b} > 0`, every polynomial
/// `α_{i_b} X^{i_b} + Σ_{2≤j<i_b} α̃_j X^j` with `α̃_j ∈ {0, α_j}` is
/// minimized globally; the result is `n · min(0, all minima)` less a small
/// safety margin.
pub fn interaction_lower_bound(alpha: &[f64], leading: &BTreeSet<usize>) -> Result<f64> {
    if alpha.is_empty() || alpha.len() % 2 != 0 {
        return Err(Error::Precondition(format!(
            "alpha must have even positive length, got {}",
            alpha.len()
        )));
    }
    let n = alpha.len() / 2;
    for &i in leading {
        if i < 2 || i > alpha.len() {
            return Err(Error::Precondition(format!("leading term {i} outside 2..={}", alpha.len())));
        }
        let a = alpha[i - 1];
        if i % 2 == 1 {
            return Err(Error::Precondition(format!("leading term {i} is odd")));
        }
        if (i == 2 && a < 0.0) || (i != 2 && a <= 0.0) {
            return Err(Error::Precondition(format!(
                "leading coefficient alpha_{i} = {a} is not positive"
            )));
        }
    }
    if n > 8 {
        return Err(Error::Precondition(format!("order n = {n} is too large for the subset enumeration")));
    }
    let mut c0: f64 = 0.0;
    for ib in (2..=alpha.len()).step_by(2) {
        let top = alpha[ib - 1];
        if top <= 0.0 {
            continue;
        }
        let lower: Vec<usize> = (2..ib).filter(|&j| alpha[j - 1] != 0.0).collect();
        for mask in 0u32..(1u32 << lower.len()) {
            let mut coeffs = vec![0.0; ib + 1];
            coeffs[ib] = top;
            for (bit, &j) in lower.iter().enumerate() {
                if mask & (1 << bit) != 0 {
                    coeffs[j] = alpha[j - 1];
                }
            }
            c0 = c0.min(polynomial_minimum(&coeffs)?);
        }
    }
    let c = n as f64 * c0;
    Ok(c - 1e-10 * (1.0 + c.abs()))
}

/// `Σ_{j=2}^{2n} α_j φ(f_j)^j` on a truncated basis.
pub fn interaction_operator(params: &ModelParams, basis: &FockBasis) -> Result<SparseOp> {
    let mut terms = Vec::new();
    for j in 2..=params.coupling().degree() {
        let a = params.alpha_at(j);
        if a != 0.0 {
            terms.push((Complex64::new(a, 0.0), field_power(basis, params.coupling().get(j), params.modes(), j)?));
        }
    }
    let refs: Vec<_> = terms.iter().map(|(c, op)| (*c, op)).collect();
    Ok(SparseOp::linear_combination(basis.dim(), &refs).with_hermitian(true))
}

/// Largest matched distance between the spectrum of `H` and the union of the
/// fiber spectra (dense).
pub fn spectrum_union_defect(bundle: &OperatorBundle) -> Result<f64> {
    let h = all_eigenvalues(&bundle.h_full)?;
    let mut union = all_eigenvalues(&bundle.f_plus)?;
    union.extend(all_eigenvalues(&bundle.f_minus)?);
    union.sort_by(f64::total_cmp);
    Ok(h.iter().zip(&union).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
}

/// Number of leading eigenvalues within `DEGENERACY_TOL·(1+|λ₀|)` of `λ₀`.
pub fn degeneracy(eigenvalues: &[f64]) -> usize {
    let e0 = eigenvalues[0];
    eigenvalues
        .iter()
        .take_while(|&&e| (e - e0).abs() <= DEGENERACY_TOL * (1.0 + e0.abs()))
        .count()
}

#[derive(Clone, Debug, Serialize)]
pub struct GroundStateReport {
    pub n_max: usize,
    pub eta: f64,
    /// Ground energy of `H_η`.
    pub e_full: f64,
    /// Ground energy of `F_{−|η|}`.
    pub e_minus: f64,
    /// Ground energy of `F_{|η|}`.
    pub e_plus: f64,
    /// Distance from the ground level of `H_η` to the next distinct level.
    pub gap: Option<f64>,
    pub degeneracy: usize,
    /// Squared weight of `U ψ` in the `e₁` and `e₋₁` blocks.
    pub block_weights: [f64; 2],
    /// Weight in the block that should be empty; `None` when `η = 0`.
    pub leakage: Option<f64>,
    pub excited_state_flag: bool,
    pub m: f64,
    pub m_ess: f64,
    /// `|E_full − min(E_minus, E_plus)|`.
    pub consistency: f64,
    pub max_residual: f64,
    pub tol: f64,
    #[serde(skip)]
    pub ground_minus: FockVector,
    #[serde(skip)]
    pub ground_plus: FockVector,
}

impl GroundStateReport {
    /// `E_plus − E_minus`.
    pub fn fiber_gap(&self) -> f64 {
        self.e_plus - self.e_minus
    }

    /// `0 ≤ E_plus − E_minus ≤ 2|η|` up to solver tolerance.
    pub fn ordering_holds(&self) -> bool {
        let slack = 10.0 * self.tol * (1.0 + self.e_minus.abs());
        self.fiber_gap() >= -slack && self.fiber_gap() <= 2.0 * self.eta.abs() + slack
    }

    /// Whether the strict inequality `E_minus < E_plus` is asserted for this
    /// instance, and if so whether it holds.
    pub fn strict_gap(&self) -> Option<bool> {
        (self.m >= 0.5 && self.eta.abs() >= 0.1).then(|| self.fiber_gap() > 10.0 * self.tol)
    }

    pub fn degeneracy_expected(&self) -> usize {
        if self.eta == 0.0 {
            2
        } else {
            1
        }
    }
}

fn solve(op: &SparseOp, k: usize, opts: &EigenOptions) -> Result<SpectralResult> {
    eigensolve_with(op, k.min(op.dim()), opts)
}

fn require_hypotheses(params: &ModelParams, up_to: u8) -> Result<HypothesisReport> {
    let report = validate_hypotheses(params);
    if let Some(fail) = report.failures().find(|c| c.number <= up_to) {
        return Err(Error::Precondition(format!(
            "hypothesis {} fails: {}",
            fail.number, fail.reason
        )));
    }
    Ok(report)
}

/// Solve both fibers and the full operator at one cutoff and report the
/// ground-state structure.
pub fn ground_state_analysis(params: &ModelParams, cfg: &AnalysisConfig) -> Result<GroundStateReport> {
    require_hypotheses(params, 4)?;
    let basis = cfg.basis(params.modes().len())?;
    let bundle = build_bundle(params, &basis)?;
    analyze_bundle(params, &bundle, cfg)
}

/// As [`ground_state_analysis`] on an already built bundle.
pub fn analyze_bundle(params: &ModelParams, bundle: &OperatorBundle, cfg: &AnalysisConfig) -> Result<GroundStateReport> {
    let eta = params.eta;
    let (m, m_ess) = masses(params.modes());
    let plus = solve(&bundle.f_plus, 1, &cfg.eigen)?;
    let minus = solve(&bundle.f_minus, 1, &cfg.eigen)?;
    let full = solve(&bundle.h_full, 4, &cfg.eigen)?;

    // F_plus carries +η; map to ±|η|
    let (low, high) = if eta >= 0.0 { (&minus, &plus) } else { (&plus, &minus) };
    let e_minus = low.ground_energy();
    let e_plus = high.ground_energy();
    let e_full = full.ground_energy();

    let deg = degeneracy(&full.eigenvalues);
    let gap = full.eigenvalues.get(deg).map(|e| e - e_full);
    let u_psi = bundle.u_parity.matvec(full.ground_state().coeffs());
    let d = bundle.f_plus.dim();
    let w_up = vector::norm_sqr(&u_psi[..d]);
    let w_down = vector::norm_sqr(&u_psi[d..]);
    let total = w_up + w_down;
    let block_weights = [w_up / total, w_down / total];
    // the ground state belongs to e_{−sign η}: e₋₁ for η > 0, e₁ for η < 0
    let leakage = if eta > 0.0 {
        Some(block_weights[0])
    } else if eta < 0.0 {
        Some(block_weights[1])
    } else {
        None
    };
    let max_residual = [&plus, &minus, &full]
        .iter()
        .flat_map(|r| r.residuals.iter().zip(&r.eigenvalues).map(|(res, e)| res / (1.0 + e.abs())))
        .fold(0.0, f64::max);
    Ok(GroundStateReport {
        n_max: bundle.n_max,
        eta,
        e_full,
        e_minus,
        e_plus,
        gap,
        degeneracy: deg,
        block_weights,
        leakage,
        excited_state_flag: m > 0.0 && eta != 0.0 && 2.0 * eta.abs() < m_ess,
        m,
        m_ess,
        consistency: (e_full - e_minus.min(e_plus)).abs(),
        max_residual,
        tol: cfg.tol(),
        ground_minus: low.ground_state().clone(),
        ground_plus: high.ground_state().clone(),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ExcitedStateCheck {
    pub flag: bool,
    pub e_full: f64,
    pub e_plus: f64,
    pub window: (f64, f64),
    /// Whether `E_plus ∈ (E_full, E_full + m_ess]`; only asserted when the
    /// flag is set.
    pub in_window: Option<bool>,
}

/// Absolute slack used for the upper end of the excited-state window.
pub const WINDOW_TOL: f64 = 1e-8;

pub fn excited_state_from_report(report: &GroundStateReport) -> ExcitedStateCheck {
    let window = (report.e_full, report.e_full + report.m_ess);
    let in_window = report.excited_state_flag.then(|| {
        report.e_plus > report.e_full && report.e_plus <= window.1 + WINDOW_TOL
    });
    ExcitedStateCheck {
        flag: report.excited_state_flag,
        e_full: report.e_full,
        e_plus: report.e_plus,
        window,
        in_window,
    }
}

/// Whether `2|η| < m_ess` and, if so, whether `E_plus` lies in the window above
/// the ground energy.
pub fn excited_state_check(params: &ModelParams, cfg: &AnalysisConfig) -> Result<ExcitedStateCheck> {
    let (m, _) = masses(params.modes());
    if m <= 0.0 || params.eta == 0.0 {
        return Err(Error::Precondition("the excited-state criterion needs m > 0 and eta != 0".into()));
    }
    Ok(excited_state_from_report(&ground_state_analysis(params, cfg)?))
}

#[derive(Clone, Debug, Serialize)]
pub struct HvzEntry {
    pub mode: usize,
    pub lambda: f64,
    pub q: usize,
    /// `𝓔_{(−1)^q η} + qλ` computed on the remaining modes at cutoff `N − q`.
    pub target: f64,
    /// `‖(F_{+η} − t)v‖` for the embedded trial vector, an upper bound on the
    /// distance from the target to the spectrum.
    pub residual_bound: f64,
    /// Distance to the nearest eigenvalue of `F_{+η}` when a dense solve ran.
    pub nearest_distance: Option<f64>,
    pub found: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct HvzReport {
    pub e_full: f64,
    pub m_ess: f64,
    pub threshold: f64,
    pub entries: Vec<HvzEntry>,
    /// Essential modes skipped because the coupling does not vanish there.
    pub coupled_essential_modes: Vec<usize>,
    pub tol: f64,
}

impl HvzReport {
    pub fn all_found(&self) -> bool {
        self.entries.iter().all(|e| e.found)
    }
}

/// Absolute tolerance for locating threshold values in the fiber spectrum.
pub const HVZ_TOL: f64 = 1e-10;

/// Threshold `E + m_ess` together with the lattice points
/// `𝓔_{(−1)^q η} + qλ` (q = 1, 2) for every decoupled essential mode `λ`,
/// located in the spectrum of `F_{+η}`.
pub fn hvz_threshold_diagnostic(params: &ModelParams, cfg: &AnalysisConfig) -> Result<HvzReport> {
    let m_count = params.modes().len();
    let essential: Vec<usize> = (0..m_count)
        .filter(|&k| params.modes().modes()[k].tag == ModeTag::Essential)
        .collect();
    if essential.is_empty() {
        return Err(Error::Unavailable("no essential-tagged modes".into()));
    }
    let (_, m_ess) = masses(params.modes());
    let basis = cfg.basis(m_count)?;
    let f_plus = build_fiber(params, &basis, 1)?;
    let f_minus = build_fiber(params, &basis, -1)?;
    let e_full = solve(&f_plus, 1, &cfg.eigen)?
        .ground_energy()
        .min(solve(&f_minus, 1, &cfg.eigen)?.ground_energy());
    let dense_spectrum = if basis.dim() <= cfg.eigen.dense_threshold {
        Some(all_eigenvalues(&f_plus)?)
    } else {
        None
    };

    let mut entries = Vec::new();
    let mut coupled_essential_modes = Vec::new();
    for &k in &essential {
        if !params.coupling().vanishes_at(k) {
            coupled_essential_modes.push(k);
            continue;
        }
        let lambda = params.modes().modes()[k].energy;
        let rest: Vec<usize> = (0..m_count).filter(|&j| j != k).collect();
        for q in 1..=2usize.min(cfg.n_max) {
            let sign: i8 = if q % 2 == 0 { 1 } else { -1 };
            let n_red = cfg.n_max - q;
            let (mu, reduced_vec, reduced_basis) = if rest.is_empty() {
                (f64::from(sign) * params.eta, vec![ONE], None)
            } else {
                let p = params.restrict(&rest)?;
                let b = enumerate_basis_with_limit(rest.len(), n_red, cfg.capacity)?;
                let r = solve(&build_fiber(&p, &b, sign)?, 1, &cfg.eigen)?;
                (r.ground_energy(), r.ground_state().coeffs().to_vec(), Some(b))
            };
            let target = mu + q as f64 * lambda;

            // embed the reduced ground state with q quanta in mode k
            let mut v = vector::zeros(basis.dim());
            let mut occ = vec![0u16; m_count];
            match &reduced_basis {
                None => {
                    occ[k] = q as u16;
                    v[basis.index_of(&occ).expect("state within cutoff")] = ONE;
                }
                Some(b) => {
                    for (i, n) in b.states().enumerate() {
                        for (slot, &j) in rest.iter().enumerate() {
                            occ[j] = n[slot];
                        }
                        occ[k] = q as u16;
                        v[basis.index_of(&occ).expect("state within cutoff")] = reduced_vec[i];
                    }
                }
            }
            vector::normalize(&mut v);
            let mut r = f_plus.matvec(&v);
            vector::axpy(Complex64::new(-target, 0.0), &v, &mut r);
            let residual_bound = vector::norm(&r);
            let nearest_distance = dense_spectrum.as_ref().map(|s| {
                s.iter().map(|x| (x - target).abs()).fold(f64::INFINITY, f64::min)
            });
            let tol = HVZ_TOL.max(cfg.tol()) * (1.0 + target.abs());
            let found = nearest_distance.map_or(residual_bound <= tol, |d| d <= tol);
            entries.push(HvzEntry {
                mode: k,
                lambda,
                q,
                target,
                residual_bound,
                nearest_distance,
                found,
            });
        }
    }
    Ok(HvzReport {
        e_full,
        m_ess,
        threshold: e_full + m_ess,
        entries,
        coupled_essential_modes,
        tol: HVZ_TOL,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceRow {
    pub n_max: usize,
    pub dim: usize,
    pub e_minus: f64,
    pub e_plus: f64,
    pub delta_minus: Option<f64>,
    pub delta_plus: Option<f64>,
    /// Mass of the `F_{−|η|}` ground state in the two highest grades.
    pub boundary_weight: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    /// Set when successive differences grow instead of shrinking.
    pub non_cauchy: bool,
}

/// Ground energies of both fibers along a cutoff schedule; each step may
/// carry its own (refined) parameters.
pub fn convergence_study(schedule: &[(ModelParams, usize)], eigen: &EigenOptions) -> Result<ConvergenceTable> {
    if schedule.is_empty() {
        return Err(Error::Precondition("empty convergence schedule".into()));
    }
    if schedule.windows(2).any(|w| w[1].1 < w[0].1) {
        return Err(Error::Precondition("cutoff schedule must be nondecreasing".into()));
    }
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(schedule.len());
    for (params, n_max) in schedule {
        let basis = enumerate_basis_with_limit(params.modes().len(), *n_max, DEFAULT_CAPACITY)?;
        let sign_low: i8 = if params.eta >= 0.0 { -1 } else { 1 };
        let low = solve(&build_fiber(params, &basis, sign_low)?, 1, eigen)?;
        let high = solve(&build_fiber(params, &basis, -sign_low)?, 1, eigen)?;
        let psi = low.ground_state().coeffs();
        let boundary_weight = (0..basis.dim())
            .filter(|&i| basis.grade(i) + 2 > *n_max)
            .map(|i| psi[i].norm_sqr())
            .sum();
        let prev = rows.last();
        rows.push(ConvergenceRow {
            n_max: *n_max,
            dim: basis.dim(),
            e_minus: low.ground_energy(),
            e_plus: high.ground_energy(),
            delta_minus: prev.map(|p| low.ground_energy() - p.e_minus),
            delta_plus: prev.map(|p| high.ground_energy() - p.e_plus),
            boundary_weight,
        });
    }
    let slack = 10.0 * eigen.tol;
    let non_cauchy = rows.windows(2).any(|w| {
        let grow = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (Some(a), Some(b)) => b.abs() > a.abs() + slack,
            _ => false,
        };
        grow(w[0].delta_minus, w[1].delta_minus) || grow(w[0].delta_plus, w[1].delta_plus)
    });
    Ok(ConvergenceTable { rows, non_cauchy })
}

/// Convenience schedule in the cutoff only.
pub fn convergence_in_cutoff(params: &ModelParams, cutoffs: &[usize], eigen: &EigenOptions) -> Result<ConvergenceTable> {
    let schedule: Vec<_> = cutoffs.iter().map(|&n| (params.clone(), n)).collect();
    convergence_study(&schedule, eigen)
}
