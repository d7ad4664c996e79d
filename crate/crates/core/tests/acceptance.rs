//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on failure.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spinboson::eigen::{all_eigenvalues, eigensolve_with, EigenOptions, Method};
use spinboson::fock::{dgamma, enumerate_basis, field, number_operator, pointwise_annihilation};
use spinboson::harness::{parse_config, run_sweep};
use spinboson::model::{build_bundle, build_fiber, decompose, decoupled_spectrum};
use spinboson::onebody::{leading_terms, validate_hypotheses, CouplingFamily, Mode, ModeSet, ModeTag, ModelParams};
use spinboson::pullthrough::pull_through_residual;
use spinboson::spectra::{
    excited_state_check, ground_state_analysis, interaction_lower_bound, interaction_operator, linear_lower_bound,
    spectrum_union_defect, AnalysisConfig,
};
use spinboson::vector::seeded_vector;
use spinboson::{Error, FockVector};

type Outcome = Result<String, String>;

fn random_modes(rng: &mut ChaCha8Rng, count: usize) -> ModeSet {
    let mut energies: Vec<f64> = Vec::with_capacity(count);
    while energies.len() < count {
        let e = 0.5 + 1.5 * rng.random::<f64>();
        if energies.iter().all(|x| (x - e).abs() > 1e-3) {
            energies.push(e);
        }
    }
    let modes = energies
        .iter()
        .enumerate()
        .map(|(k, &e)| {
            let tag = if k + 1 == count && rng.random_bool(0.5) { ModeTag::Essential } else { ModeTag::Discrete };
            Mode::new(e, 0.5 + rng.random::<f64>(), tag)
        })
        .collect();
    ModeSet::new(modes, "random").unwrap()
}

fn real_vec(rng: &mut ChaCha8Rng, len: usize, amp: f64) -> Vec<f64> {
    (0..len).map(|_| amp * (2.0 * rng.random::<f64>() - 1.0)).collect()
}

/// Real couplings of order 1 or 2 with even, positively weighted leading terms.
fn random_params(rng: &mut ChaCha8Rng, max_modes: usize) -> ModelParams {
    loop {
        let m = rng.random_range(1..=max_modes);
        let modes = random_modes(rng, m);
        let n = rng.random_range(1..=2);
        let eta = 2.0 * rng.random::<f64>() - 1.0;
        let f1 = real_vec(rng, m, 0.6);
        let f2 = real_vec(rng, m, 0.5);
        let (vectors, alpha) = if n == 1 {
            (vec![f1, f2], vec![real_vec(rng, 1, 0.8)[0], 0.3 * rng.random::<f64>()])
        } else {
            let h = real_vec(rng, m, 0.4);
            let alpha = vec![
                real_vec(rng, 1, 0.8)[0],
                0.3 * rng.random::<f64>(),
                real_vec(rng, 1, 0.2)[0],
                0.02 + 0.1 * rng.random::<f64>(),
            ];
            (vec![f1, f2, h.clone(), h], alpha)
        };
        let coupling = CouplingFamily::from_real(n, vectors).unwrap();
        let p = ModelParams::new(eta, alpha, coupling, modes).unwrap();
        if validate_hypotheses(&p).all_pass(4) {
            return p;
        }
    }
}

fn quartic(eta: f64, modes: ModeSet) -> ModelParams {
    let m = modes.len();
    let f1: Vec<f64> = (0..m).map(|k| 0.3 / (k + 1) as f64).collect();
    let f4: Vec<f64> = (0..m).map(|k| 0.2 + 0.05 * k as f64).collect();
    let coupling = CouplingFamily::from_real(2, vec![f1, f4.clone(), f4.clone(), f4]).unwrap();
    ModelParams::new(eta, vec![0.5, 0.3, 0.0, 0.05], coupling, modes).unwrap()
}

fn max_matched_distance(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn check(ok: bool, msg: String) -> Outcome {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn within(elapsed: Duration, limit: Duration, msg: String) -> Outcome {
    check(elapsed < limit, format!("{msg}, {:.2} s (limit {} s)", elapsed.as_secs_f64(), limit.as_secs()))
}

fn parity_decomposition() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..25 {
        let p = random_params(&mut rng, 3);
        let n_max = rng.random_range(1..=8);
        let b = enumerate_basis(p.modes().len(), n_max).map_err(|e| e.to_string())?;
        let bundle = build_bundle(&p, &b).map_err(|e| e.to_string())?;
        let (off, def) = match decompose(&bundle) {
            Ok(d) => (d.offblock, d.block_defect),
            Err(Error::Decomposition { offblock, block_defect }) => (offblock, block_defect),
            Err(e) => return Err(e.to_string()),
        };
        worst = worst.max(off).max(def);
    }
    if worst > 1e-13 {
        return Err(format!("max entry defect {worst:.3e} > 1e-13"));
    }
    within(start.elapsed(), Duration::from_secs(10), format!("25 instances, max defect {worst:.3e}"))
}

fn spectrum_union() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    let mut largest = 0;
    for (m, n_max) in [(1, 8), (2, 8), (3, 6), (3, 8), (4, 9)] {
        let mut p = random_params(&mut rng, m);
        while p.modes().len() != m {
            p = random_params(&mut rng, m);
        }
        let b = enumerate_basis(m, n_max).map_err(|e| e.to_string())?;
        let bundle = build_bundle(&p, &b).map_err(|e| e.to_string())?;
        largest = largest.max(bundle.h_full.dim());
        worst = worst.max(spectrum_union_defect(&bundle).map_err(|e| e.to_string())?);
    }
    if worst > 1e-10 {
        return Err(format!("max matched distance {worst:.3e} > 1e-10"));
    }
    within(
        start.elapsed(),
        Duration::from_secs(60),
        format!("5 instances up to dimension {largest}, max matched distance {worst:.3e}"),
    )
}

fn ground_state_structure() -> Outcome {
    let modes = ModeSet::uniform(&[0.8, 1.3], ModeTag::Discrete).unwrap();
    let cfg = AnalysisConfig::new(10);
    let mut worst_leak: f64 = 0.0;
    for eta in [-0.5, -0.2, 0.2, 0.5] {
        let r = ground_state_analysis(&quartic(eta, modes.clone()), &cfg).map_err(|e| e.to_string())?;
        let leak = r.leakage.unwrap_or(f64::INFINITY);
        if r.degeneracy != 1 || !(leak <= 1e-10) {
            return Err(format!("eta = {eta}: degeneracy {}, leakage {leak:.3e}", r.degeneracy));
        }
        worst_leak = worst_leak.max(leak);
    }
    let r = ground_state_analysis(&quartic(0.0, modes), &cfg).map_err(|e| e.to_string())?;
    check(
        r.degeneracy == 2,
        format!("eta = 0 degeneracy {}; eta = +-0.2, +-0.5 degeneracy 1, max leakage {worst_leak:.3e}", r.degeneracy),
    )
}

fn ordering_and_gap() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut strict = 0;
    let mut min_gap = f64::INFINITY;
    let count = 40;
    for i in 0..count {
        let p = random_params(&mut rng, 3);
        let n_max = rng.random_range(2..=8);
        let r = ground_state_analysis(&p, &AnalysisConfig::new(n_max)).map_err(|e| e.to_string())?;
        if !r.ordering_holds() {
            return Err(format!("instance {i}: E+ - E- = {:.6e}, 2|eta| = {:.6e}", r.fiber_gap(), 2.0 * p.eta.abs()));
        }
        if let Some(ok) = r.strict_gap() {
            strict += 1;
            min_gap = min_gap.min(r.fiber_gap());
            if !ok {
                return Err(format!("instance {i}: strict gap fails, E+ - E- = {:.3e}", r.fiber_gap()));
            }
        }
    }
    check(
        strict > 0,
        format!("{count} instances ordered, {strict} strict-gap instances with min gap {min_gap:.3e}"),
    )
}

fn excited_state() -> Outcome {
    let modes = ModeSet::new(
        vec![Mode::new(1.0, 1.0, ModeTag::Essential), Mode::new(1.3, 0.8, ModeTag::Discrete)],
        "m_ess = 1",
    )
    .unwrap();
    let cfg = AnalysisConfig::new(10);
    let mut checked = 0;
    for k in 1..=9 {
        for sign in [-1.0, 1.0] {
            let eta = sign * 0.05 * k as f64;
            let ex = excited_state_check(&quartic(eta, modes.clone()), &cfg).map_err(|e| e.to_string())?;
            if 2.0 * eta.abs() < 1.0 {
                checked += 1;
                if ex.in_window != Some(true) {
                    return Err(format!(
                        "eta = {eta}: E+ = {:.12e} outside ({:.12e}, {:.12e}]",
                        ex.e_plus, ex.window.0, ex.window.1
                    ));
                }
            }
        }
    }
    check(checked == 18, format!("{checked} values of eta with 2|eta| < 1, all inside the window"))
}

fn decoupling() -> Outcome {
    let modes = ModeSet::new(
        vec![
            Mode::new(1.0, 1.0, ModeTag::Discrete),
            Mode::new(1.4, 0.7, ModeTag::Discrete),
            Mode::new(0.75, 1.0, ModeTag::Essential),
        ],
        "two coupled, one free",
    )
    .unwrap();
    let f1 = vec![0.4, 0.25, 0.0];
    let f4 = vec![0.3, 0.2, 0.0];
    let coupling = CouplingFamily::from_real(2, vec![f1, f4.clone(), f4.clone(), f4]).unwrap();
    let p = ModelParams::new(0.35, vec![0.6, 0.2, 0.0, 0.05], coupling, modes).unwrap();
    let n_max = 7;
    let b = enumerate_basis(3, n_max).map_err(|e| e.to_string())?;
    let bundle = build_bundle(&p, &b).map_err(|e| e.to_string())?;
    let full = all_eigenvalues(&bundle.h_full).map_err(|e| e.to_string())?;
    let mut dec = decoupled_spectrum(&p, &[0, 1], n_max, n_max, None).map_err(|e| e.to_string())?;
    dec.extend(decoupled_spectrum(&p.with_eta(-p.eta), &[0, 1], n_max, n_max, None).map_err(|e| e.to_string())?);
    let d = max_matched_distance(&full, &dec);
    check(d <= 1e-10, format!("{} eigenvalues, max matched distance {d:.3e}", full.len()))
}

fn lower_bounds() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut violations = 0;
    let mut checks = 0;
    let mut min_margin = f64::INFINITY;
    for _ in 0..50 {
        let m = rng.random_range(1..=3);
        let modes = random_modes(&mut rng, m);
        let g: Vec<Complex64> = (0..m)
            .map(|_| Complex64::new(2.0 * rng.random::<f64>() - 1.0, 2.0 * rng.random::<f64>() - 1.0))
            .collect();
        let linear = linear_lower_bound(&g, &modes.energies(), &modes.weights());
        let f2 = real_vec(&mut rng, m, 0.7);
        let h = real_vec(&mut rng, m, 0.7);
        let alpha = vec![0.0, 0.5 * rng.random::<f64>(), 2.0 * rng.random::<f64>() - 1.0, 0.05 + rng.random::<f64>()];
        let coupling = CouplingFamily::from_real(2, vec![vec![0.0; m], f2, h.clone(), h]).unwrap();
        let p = ModelParams::new(0.0, alpha.clone(), coupling, modes.clone()).unwrap();
        let leading: BTreeSet<usize> = leading_terms(p.coupling());
        let bound = interaction_lower_bound(&alpha, &leading).map_err(|e| e.to_string())?;
        for n_max in 1..=6 {
            let b = enumerate_basis(m, n_max).map_err(|e| e.to_string())?;
            let op = dgamma(&b, &modes.energies()).unwrap().add(&field(&b, &g, &modes).unwrap());
            let lo = all_eigenvalues(&op).map_err(|e| e.to_string())?[0];
            let lo_int = all_eigenvalues(&interaction_operator(&p, &b).unwrap()).map_err(|e| e.to_string())?[0];
            checks += 2;
            min_margin = min_margin.min(lo - linear).min(lo_int - bound);
            if lo < linear {
                violations += 1;
            }
            if lo_int < bound {
                violations += 1;
            }
        }
    }
    check(
        violations == 0,
        format!("50 instances, {checks} truncations, {violations} violations, min margin {min_margin:.3e}"),
    )
}

fn van_hove() -> Outcome {
    let modes = ModeSet::uniform(&[1.0], ModeTag::Discrete).unwrap();
    let coupling = CouplingFamily::from_real(1, vec![vec![1.0], vec![0.0]]).unwrap();
    let p = ModelParams::new(0.0, vec![0.4, 0.0], coupling, modes).unwrap();
    let cfg = AnalysisConfig::new(20);
    let r = ground_state_analysis(&p, &cfg).map_err(|e| e.to_string())?;
    let de = (r.e_full + 0.16).abs();
    let pt = pull_through_residual(&p, &cfg).map_err(|e| e.to_string())?;
    let dn = (pt.moments[0] - 0.16).abs();
    check(de <= 1e-8 && dn <= 1e-6, format!("|E + 0.16| = {de:.3e}, |<N> - 0.16| = {dn:.3e}"))
}

fn pull_through() -> Outcome {
    let modes = ModeSet::uniform(&[1.0], ModeTag::Discrete).unwrap();
    let coupling = CouplingFamily::from_real(1, vec![vec![1.0], vec![0.0]]).unwrap();
    let vh = ModelParams::new(0.0, vec![0.4, 0.0], coupling, modes).unwrap();
    let rel_vh = pull_through_residual(&vh, &AnalysisConfig::new(20)).map_err(|e| e.to_string())?.relative;
    let q = quartic(0.3, ModeSet::uniform(&[1.0, 1.4], ModeTag::Discrete).unwrap());
    let rel: Vec<f64> = [6, 8, 10, 12]
        .iter()
        .map(|&n| pull_through_residual(&q, &AnalysisConfig::new(n)).map(|r| r.relative))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let decreasing = rel.windows(2).all(|w| w[1] < w[0]);
    let seq = rel.iter().map(|x| format!("{x:.2e}")).collect::<Vec<_>>().join(" ");
    check(
        rel_vh <= 1e-8 && decreasing && rel[3] <= 1e-6,
        format!("van Hove {rel_vh:.3e}; quartic along N = 6 8 10 12: {seq}"),
    )
}

fn form_identities() -> Outcome {
    let modes = ModeSet::new(
        vec![
            Mode::new(0.6, 0.4, ModeTag::Discrete),
            Mode::new(1.1, 1.3, ModeTag::Discrete),
            Mode::new(2.0, 0.8, ModeTag::Essential),
        ],
        "",
    )
    .unwrap();
    let w = modes.weights();
    let bvals = [0.3, -1.2, 2.5];
    let mut worst: f64 = 0.0;
    for s in 0..100u64 {
        let n_max = 1 + (s % 5) as usize;
        let b = enumerate_basis(3, n_max).unwrap();
        let psi = FockVector::new(seeded_vector(b.dim(), 1000 + s, s % 2 == 0));
        let a1 = pointwise_annihilation(&b, &modes, &psi, 1).map_err(|e| e.to_string())?;
        let a2 = pointwise_annihilation(&b, &modes, &psi, 2).map_err(|e| e.to_string())?;
        let n_op = number_operator(&b);
        let lhs_n = n_op.expectation(psi.coeffs()).re;
        let lhs_b = dgamma(&b, &bvals).unwrap().expectation(psi.coeffs()).re;
        let n_psi = n_op.matvec(psi.coeffs());
        let lhs_nn = spinboson::vector::norm_sqr(&n_psi) - lhs_n;
        let rhs_n: f64 = (0..3).map(|k| w[k] * a1.get(&[k]).norm().powi(2)).sum();
        let rhs_b: f64 = (0..3).map(|k| bvals[k] * w[k] * a1.get(&[k]).norm().powi(2)).sum();
        let rhs_nn: f64 = (0..3)
            .flat_map(|k| (0..3).map(move |q| (k, q)))
            .map(|(k, q)| w[k] * w[q] * a2.get(&[k, q]).norm().powi(2))
            .sum();
        for (l, r) in [(lhs_n, rhs_n), (lhs_b, rhs_b), (lhs_nn, rhs_nn)] {
            worst = worst.max((l - r).abs() / (1.0 + l.abs()));
        }
    }
    check(worst <= 1e-12, format!("100 states, max relative defect {worst:.3e}"))
}

fn solver_cross_validation() -> Outcome {
    let energies: Vec<f64> = (0..4).map(|k| 0.8 + 0.35 * k as f64).collect();
    let p = quartic(0.4, ModeSet::uniform(&energies, ModeTag::Discrete).unwrap());
    let b = enumerate_basis(4, 12).map_err(|e| e.to_string())?;
    let f = build_fiber(&p, &b, 1).map_err(|e| e.to_string())?;
    let dense = all_eigenvalues(&f).map_err(|e| e.to_string())?;
    let lz = eigensolve_with(&f, 4, &EigenOptions::default().method(Method::Lanczos)).map_err(|e| e.to_string())?;
    let rel = lz
        .eigenvalues
        .iter()
        .zip(&dense)
        .map(|(a, d)| (a - d).abs() / d.abs().max(1.0))
        .fold(0.0, f64::max);
    if rel > 1e-9 {
        return Err(format!("dimension {}: Lanczos vs dense relative difference {rel:.3e}", f.dim()));
    }

    let start = Instant::now();
    let m = 8;
    let energies: Vec<f64> = (0..m).map(|k| 0.8 + 0.2 * k as f64).collect();
    let modes = ModeSet::uniform(&energies, ModeTag::Discrete).unwrap();
    let g: Vec<f64> = (0..m).map(|k| 0.4 / (1.0 + k as f64)).collect();
    let h: Vec<f64> = (0..m).map(|k| if k < 3 { 0.25 - 0.05 * k as f64 } else { 0.0 }).collect();
    let coupling = CouplingFamily::from_real(2, vec![g.clone(), g, h.clone(), h]).unwrap();
    let big = ModelParams::new(0.3, vec![0.4, 0.1, 0.0, 0.05], coupling, modes).unwrap();
    let bb = enumerate_basis(m, 10).map_err(|e| e.to_string())?;
    let fb = build_fiber(&big, &bb, -1).map_err(|e| e.to_string())?;
    let r = eigensolve_with(&fb, 3, &EigenOptions::default().method(Method::Lanczos)).map_err(|e| e.to_string())?;
    let worst = r.residuals.iter().copied().fold(0.0, f64::max);
    if worst > 1e-8 {
        return Err(format!("dimension {}: residual {worst:.3e} > 1e-8", fb.dim()));
    }
    within(
        start.elapsed(),
        Duration::from_secs(300),
        format!(
            "dimension {} agrees to {rel:.3e}; dimension {} lowest 3 residual {worst:.3e}, {} matvecs",
            f.dim(),
            fb.dim(),
            r.info.matvecs
        ),
    )
}

fn determinism() -> Outcome {
    let text = "\
name = determinism
order = 2
alpha = 0.5 0.3 0 0.05
n_max = 8
cutoffs = 4 6 8
checks = decompose ground excited hvz pullthrough convergence
seed = 99

[modes]
1.0 1.0 essential
1.3 0.8 discrete

[couplings]
f1 = 0.3 0.15
f2 = 0.2 0.25
f3 = 0.2 0.25
f4 = 0.2 0.25

[sweep]
eta = -0.4 -0.1 0 0.15 0.3 0.45
scale = 0.5 1
";
    let cfg = parse_config(text).map_err(|e| e.to_string())?;
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    run_sweep(&cfg, a.path(), 1).map_err(|e| e.to_string())?;
    run_sweep(&cfg, b.path(), 4).map_err(|e| e.to_string())?;
    let x = std::fs::read(a.path().join("results.csv")).map_err(|e| e.to_string())?;
    let y = std::fs::read(b.path().join("results.csv")).map_err(|e| e.to_string())?;
    check(x == y, format!("{} grid points, {} bytes, 1 vs 4 workers", cfg.grid_size(), x.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("parity decomposition exactness", parity_decomposition),
        ("spectrum union", spectrum_union),
        ("ground-state structure", ground_state_structure),
        ("energy ordering and gap bound", ordering_and_gap),
        ("excited-state criterion", excited_state),
        ("decoupling identity", decoupling),
        ("lower bounds", lower_bounds),
        ("van Hove closed form", van_hove),
        ("pull-through residual", pull_through),
        ("dGamma form and Parseval identities", form_identities),
        ("solver cross-validation", solver_cross_validation),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("criterion {:>2} PASS  {name}: {msg} [{secs:.2} s]", i + 1),
            Err(msg) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {msg} [{secs:.2} s]", i + 1)
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
