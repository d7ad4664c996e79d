//! The discretized one-boson space.
//!
//! The single-boson Hilbert space is a finite set of modes, each carrying a
//! dispersion value `ω_k > 0`, a quadrature weight `w_k > 0` and a tag saying
//! whether the mode belongs to the discrete or the essential part of the
//! spectrum of `ω`. Functions on the mode set are stored as raw amplitudes;
//! the weights only enter through [`inner_product`] and the Fock-level
//! embedding `c_k = g_k √w_k`.

use std::collections::BTreeSet;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance for the phase and reality checks of couplings.
pub const PHASE_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeTag {
    Discrete,
    Essential,
}

impl fmt::Display for ModeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModeTag::Discrete => f.write_str("discrete"),
            ModeTag::Essential => f.write_str("essential"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub energy: f64,
    pub weight: f64,
    pub tag: ModeTag,
}

impl Mode {
    pub fn new(energy: f64, weight: f64, tag: ModeTag) -> Self {
        Self { energy, weight, tag }
    }
}

/// A finite, validated set of boson modes.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModeSet {
    modes: Vec<Mode>,
    label: String,
}

impl ModeSet {
    pub fn new(modes: Vec<Mode>, label: impl Into<String>) -> Result<Self> {
        if modes.is_empty() {
            return Err(Error::InvalidModes("at least one mode is required".into()));
        }
        for (k, m) in modes.iter().enumerate() {
            if !(m.energy.is_finite() && m.energy > 0.0) {
                return Err(Error::InvalidModes(format!(
                    "mode {k}: energy must be finite and positive, got {}",
                    m.energy
                )));
            }
            if !(m.weight.is_finite() && m.weight > 0.0) {
                return Err(Error::InvalidModes(format!(
                    "mode {k}: weight must be finite and positive, got {}",
                    m.weight
                )));
            }
        }
        Ok(Self {
            modes,
            label: label.into(),
        })
    }

    /// Modes with unit weights, all tagged `tag`.
    pub fn uniform(energies: &[f64], tag: ModeTag) -> Result<Self> {
        let modes = energies.iter().map(|&e| Mode::new(e, 1.0, tag)).collect();
        Self::new(modes, "")
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn get(&self, k: usize) -> Option<&Mode> {
        self.modes.get(k)
    }

    pub fn energies(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.energy).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.weight).collect()
    }

    /// The sub-mode-set on the given indices, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let modes = indices
            .iter()
            .map(|&k| {
                self.modes.get(k).copied().ok_or(Error::ModeIndex {
                    index: k,
                    count: self.len(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(modes, self.label.clone())
    }

    pub(crate) fn check_amplitudes(&self, g: &[Complex64]) -> Result<()> {
        if g.len() != self.len() {
            return Err(Error::Dimension {
                expected: self.len(),
                got: g.len(),
            });
        }
        Ok(())
    }
}

/// `⟨g, h⟩ = Σ_k conj(g_k) h_k w_k`.
pub fn inner_product(g: &[Complex64], h: &[Complex64], modes: &ModeSet) -> Result<Complex64> {
    modes.check_amplitudes(g)?;
    modes.check_amplitudes(h)?;
    Ok(g.iter()
        .zip(h)
        .zip(modes.modes())
        .map(|((a, b), m)| a.conj() * b * m.weight)
        .sum())
}

/// Weighted L² norm of `g`.
pub fn norm(g: &[Complex64], modes: &ModeSet) -> Result<f64> {
    Ok(inner_product(g, g, modes)?.re.max(0.0).sqrt())
}

/// Bottom of the spectrum and bottom of the essential spectrum of `ω`.
///
/// `m_ess` is `+∞` when no mode carries the essential tag.
pub fn masses(modes: &ModeSet) -> (f64, f64) {
    let m = modes
        .modes()
        .iter()
        .map(|m| m.energy)
        .fold(f64::INFINITY, f64::min);
    let m_ess = modes
        .modes()
        .iter()
        .filter(|m| m.tag == ModeTag::Essential)
        .map(|m| m.energy)
        .fold(f64::INFINITY, f64::min);
    (m, m_ess)
}

/// The coupling functions `f_1, …, f_{2n}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CouplingFamily {
    order: usize,
    vectors: Vec<Vec<Complex64>>,
}

impl CouplingFamily {
    /// `vectors[i-1]` holds `f_i`; there must be exactly `2 * order` of them,
    /// all of the same length.
    pub fn new(order: usize, vectors: Vec<Vec<Complex64>>) -> Result<Self> {
        if order == 0 {
            return Err(Error::Model("coupling order n must be at least 1".into()));
        }
        if vectors.len() != 2 * order {
            return Err(Error::Model(format!(
                "order n={order} needs {} coupling vectors, got {}",
                2 * order,
                vectors.len()
            )));
        }
        let len = vectors[0].len();
        if let Some((i, v)) = vectors.iter().enumerate().find(|(_, v)| v.len() != len) {
            return Err(Error::Model(format!(
                "coupling f_{} has {} entries, f_1 has {len}",
                i + 1,
                v.len()
            )));
        }
        if let Some(i) = vectors
            .iter()
            .position(|v| v.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())))
        {
            return Err(Error::Model(format!("coupling f_{} has a non-finite entry", i + 1)));
        }
        Ok(Self { order, vectors })
    }

    /// Real-valued couplings.
    pub fn from_real(order: usize, vectors: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(
            order,
            vectors
                .into_iter()
                .map(|v| v.into_iter().map(|x| Complex64::new(x, 0.0)).collect())
                .collect(),
        )
    }

    /// All `2n` couplings equal to `g`.
    pub fn repeated(order: usize, g: Vec<Complex64>) -> Result<Self> {
        Self::new(order, vec![g; 2 * order])
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// `2n`, the highest field power.
    pub fn degree(&self) -> usize {
        2 * self.order
    }

    pub fn mode_count(&self) -> usize {
        self.vectors[0].len()
    }

    /// `f_i` with the 1-based index used throughout the model.
    pub fn get(&self, i: usize) -> &[Complex64] {
        &self.vectors[i - 1]
    }

    pub fn vectors(&self) -> &[Vec<Complex64>] {
        &self.vectors
    }

    pub fn is_real(&self) -> bool {
        self.vectors.iter().flatten().all(|z| z.im == 0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.vectors.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Every `f_i` multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            order: self.order,
            vectors: self
                .vectors
                .iter()
                .map(|v| v.iter().map(|z| z * s).collect())
                .collect(),
        }
    }

    /// The couplings restricted to the given modes.
    pub fn restrict(&self, indices: &[usize]) -> Self {
        Self {
            order: self.order,
            vectors: self
                .vectors
                .iter()
                .map(|v| indices.iter().map(|&k| v[k]).collect())
                .collect(),
        }
    }

    /// True when every `f_i` vanishes at mode `k`.
    pub fn vanishes_at(&self, k: usize) -> bool {
        self.vectors.iter().all(|v| v[k] == Complex64::new(0.0, 0.0))
    }
}

/// The full parameterization `(η, α, f, ω)` of the Hamiltonian.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelParams {
    pub eta: f64,
    alpha: Vec<f64>,
    coupling: CouplingFamily,
    modes: ModeSet,
}

impl ModelParams {
    pub fn new(eta: f64, alpha: Vec<f64>, coupling: CouplingFamily, modes: ModeSet) -> Result<Self> {
        if alpha.len() != coupling.degree() {
            return Err(Error::Model(format!(
                "alpha has {} entries but the coupling order requires 2n = {}",
                alpha.len(),
                coupling.degree()
            )));
        }
        if coupling.mode_count() != modes.len() {
            return Err(Error::Dimension {
                expected: modes.len(),
                got: coupling.mode_count(),
            });
        }
        if !eta.is_finite() || alpha.iter().any(|a| !a.is_finite()) {
            return Err(Error::Model("eta and alpha must be finite".into()));
        }
        Ok(Self {
            eta,
            alpha,
            coupling,
            modes,
        })
    }

    /// `α` as stored, `alpha()[i-1] = α_i`.
    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// `α_i` with a 1-based index.
    pub fn alpha_at(&self, i: usize) -> f64 {
        self.alpha[i - 1]
    }

    pub fn coupling(&self) -> &CouplingFamily {
        &self.coupling
    }

    pub fn modes(&self) -> &ModeSet {
        &self.modes
    }

    pub fn order(&self) -> usize {
        self.coupling.order()
    }

    pub fn with_eta(&self, eta: f64) -> Self {
        Self { eta, ..self.clone() }
    }

    pub fn with_alpha(&self, alpha: Vec<f64>) -> Result<Self> {
        Self::new(self.eta, alpha, self.coupling.clone(), self.modes.clone())
    }

    pub fn with_coupling_scale(&self, s: f64) -> Self {
        Self {
            coupling: self.coupling.scaled(s),
            ..self.clone()
        }
    }

    /// The model restricted to a subset of modes.
    pub fn restrict(&self, indices: &[usize]) -> Result<Self> {
        Self::new(
            self.eta,
            self.alpha.clone(),
            self.coupling.restrict(indices),
            self.modes.subset(indices)?,
        )
    }

    /// Hash of the parameters, used to tag operator bundles.
    pub fn fingerprint(&self) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.eta.to_bits().hash(&mut h);
        for a in &self.alpha {
            a.to_bits().hash(&mut h);
        }
        for z in self.coupling.vectors().iter().flatten() {
            z.re.to_bits().hash(&mut h);
            z.im.to_bits().hash(&mut h);
        }
        for m in self.modes.modes() {
            m.energy.to_bits().hash(&mut h);
            m.weight.to_bits().hash(&mut h);
            m.tag.hash(&mut h);
        }
        h.finish()
    }
}

/// `L(f) = { i ∈ {2,…,2n} | f_i ≠ f_j for all j > i }`, with exact equality.
pub fn leading_terms(coupling: &CouplingFamily) -> BTreeSet<usize> {
    let deg = coupling.degree();
    (2..=deg)
        .filter(|&i| ((i + 1)..=deg).all(|j| coupling.get(i) != coupling.get(j)))
        .collect()
}

/// A unit-modulus `h` with `h_k f_i(k)` real for every `i` and `k`, if one exists.
///
/// Each `h_k` is taken from the largest entry at mode `k` and normalized to
/// the half plane `Re h > 0` (or `h = i`), so real couplings give `h ≡ 1`.
pub fn phase_function(coupling: &CouplingFamily) -> Option<Vec<Complex64>> {
    let scale = coupling.max_abs();
    let tol = PHASE_TOL * scale;
    let one = Complex64::new(1.0, 0.0);
    (0..coupling.mode_count())
        .map(|k| {
            let pivot = coupling
                .vectors()
                .iter()
                .map(|v| v[k])
                .max_by(|a, b| a.norm().total_cmp(&b.norm()))?;
            if pivot.norm() == 0.0 {
                return Some(one);
            }
            let mut h = pivot.conj() / pivot.norm();
            if h.re < 0.0 || (h.re == 0.0 && h.im < 0.0) {
                h = -h;
            }
            let ok = coupling.vectors().iter().all(|v| (h * v[k]).im.abs() <= tol);
            ok.then_some(h)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HypothesisCheck {
    pub number: u8,
    pub passed: bool,
    pub reason: String,
}

/// Outcome of checking the five structural hypotheses on a parameter set.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HypothesisReport {
    pub checks: Vec<HypothesisCheck>,
    pub leading_terms: BTreeSet<usize>,
    pub phase_function: Option<Vec<Complex64>>,
}

impl HypothesisReport {
    pub fn passed(&self, number: u8) -> bool {
        self.checks.iter().any(|c| c.number == number && c.passed)
    }

    /// True when hypotheses `1..=up_to` all pass.
    pub fn all_pass(&self, up_to: u8) -> bool {
        (1..=up_to).all(|n| self.passed(n))
    }

    pub fn failures(&self) -> impl Iterator<Item = &HypothesisCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

fn hyp1(params: &ModelParams, leading: &BTreeSet<usize>) -> HypothesisCheck {
    let mut problems = Vec::new();
    let odd: Vec<_> = leading.iter().filter(|i| *i % 2 == 1).collect();
    if !odd.is_empty() {
        problems.push(format!("leading terms {odd:?} are odd"));
    }
    for &i in leading {
        let a = params.alpha_at(i);
        if i == 2 {
            if a < 0.0 {
                problems.push(format!("alpha_2 = {a} < 0 while 2 is a leading term"));
            }
        } else if a <= 0.0 {
            problems.push(format!("alpha_{i} = {a} is not positive for leading term {i}"));
        }
    }
    HypothesisCheck {
        number: 1,
        passed: problems.is_empty(),
        reason: if problems.is_empty() {
            format!("leading terms {leading:?} are even with admissible coefficients; all mode energies positive")
        } else {
            problems.join("; ")
        },
    }
}

fn hyp2(coupling: &CouplingFamily) -> HypothesisCheck {
    let scale = coupling.max_abs().powi(2);
    let tol = PHASE_TOL * scale;
    let mut worst = (0.0f64, 0, 0, 0);
    for k in 0..coupling.mode_count() {
        for (i, fi) in coupling.vectors().iter().enumerate() {
            for (j, fj) in coupling.vectors().iter().enumerate().skip(i + 1) {
                let im = (fi[k].conj() * fj[k]).im.abs();
                if im > worst.0 {
                    worst = (im, i + 1, j + 1, k);
                }
            }
        }
    }
    let passed = worst.0 <= tol;
    HypothesisCheck {
        number: 2,
        passed,
        reason: if passed {
            "per-mode products conj(f_i(k)) f_j(k) are real (sufficient condition; stricter than the spectral-measure condition)".into()
        } else {
            format!(
                "conj(f_{}(k)) f_{}(k) has imaginary part {:e} at mode {}",
                worst.1, worst.2, worst.0, worst.3
            )
        },
    }
}

/// Evaluate the five hypotheses; failures are recorded, never raised.
pub fn validate_hypotheses(params: &ModelParams) -> HypothesisReport {
    let coupling = params.coupling();
    let leading = leading_terms(coupling);
    let phase = phase_function(coupling);
    let n = params.order();
    let (m, _) = masses(params.modes());

    let h1 = hyp1(params, &leading);
    let h2 = hyp2(coupling);
    let h3 = if n <= 2 {
        HypothesisCheck {
            number: 3,
            passed: true,
            reason: format!("n = {n} <= 2"),
        }
    } else {
        let passed = m > 0.0 && h2.passed;
        HypothesisCheck {
            number: 3,
            passed,
            reason: if passed {
                format!("m = {m} > 0 and hypothesis 2 holds")
            } else {
                format!("n = {n} > 2 requires m > 0 and hypothesis 2")
            },
        }
    };
    let h4 = if n <= 2 {
        HypothesisCheck {
            number: 4,
            passed: true,
            reason: format!("n = {n} <= 2"),
        }
    } else {
        HypothesisCheck {
            number: 4,
            passed: phase.is_some(),
            reason: if phase.is_some() {
                "phase function exists".into()
            } else {
                "no phase function: coupling phases disagree modulo pi at some mode".into()
            },
        }
    };
    let h5 = HypothesisCheck {
        number: 5,
        passed: true,
        reason: "finitely many modes with positive energies: every coupling lies in the domain of 1/omega".into(),
    };
    HypothesisReport {
        checks: vec![h1, h2, h3, h4, h5],
        leading_terms: leading,
        phase_function: phase,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn real_family(vs: &[&[f64]]) -> CouplingFamily {
        CouplingFamily::from_real(vs.len() / 2, vs.iter().map(|v| v.to_vec()).collect()).unwrap()
    }

    #[test]
    fn inner_product_examples() {
        let one = ModeSet::uniform(&[1.0], ModeTag::Discrete).unwrap();
        assert_eq!(inner_product(&[c(1.0, 0.0)], &[c(1.0, 0.0)], &one).unwrap(), c(1.0, 0.0));

        let two = ModeSet::new(
            vec![
                Mode::new(1.0, 0.3, ModeTag::Discrete),
                Mode::new(2.0, 1.7, ModeTag::Discrete),
            ],
            "",
        )
        .unwrap();
        let z = inner_product(&[c(1.0, 0.0), c(0.0, 0.0)], &[c(0.0, 0.0), c(1.0, 0.0)], &two).unwrap();
        assert_eq!(z, c(0.0, 0.0));

        let w2 = ModeSet::new(vec![Mode::new(1.0, 2.0, ModeTag::Discrete)], "").unwrap();
        assert_eq!(inner_product(&[c(1.0, 1.0)], &[c(1.0, 0.0)], &w2).unwrap(), c(2.0, -2.0));

        assert!(matches!(
            inner_product(&[c(1.0, 0.0)], &[c(1.0, 0.0), c(0.0, 0.0)], &one),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn mode_set_rejects_nonpositive() {
        assert!(ModeSet::uniform(&[1.0, 0.0], ModeTag::Discrete).is_err());
        assert!(ModeSet::new(vec![Mode::new(1.0, 0.0, ModeTag::Discrete)], "").is_err());
        assert!(ModeSet::new(vec![], "").is_err());
    }

    #[test]
    fn leading_terms_examples() {
        let f = real_family(&[&[0.3], &[0.7]]);
        assert_eq!(leading_terms(&f), BTreeSet::from([2]));

        let g = real_family(&[&[1.0], &[1.0], &[1.0], &[1.0]]);
        assert_eq!(leading_terms(&g), BTreeSet::from([4]));

        let h = real_family(&[&[1.0], &[2.0], &[3.0], &[2.0]]);
        assert_eq!(leading_terms(&h), BTreeSet::from([3, 4]));
    }

    #[test]
    fn masses_examples() {
        let ms = ModeSet::new(
            vec![
                Mode::new(0.5, 1.0, ModeTag::Discrete),
                Mode::new(1.0, 1.0, ModeTag::Essential),
                Mode::new(1.3, 1.0, ModeTag::Essential),
            ],
            "",
        )
        .unwrap();
        assert_eq!(masses(&ms), (0.5, 1.0));
        assert_eq!(masses(&ModeSet::uniform(&[1.0, 2.0], ModeTag::Essential).unwrap()), (1.0, 1.0));
        let (m, me) = masses(&ModeSet::uniform(&[2.0, 0.7], ModeTag::Discrete).unwrap());
        assert_eq!(m, 0.7);
        assert!(me.is_infinite());
    }

    #[test]
    fn phase_function_examples() {
        let f = real_family(&[&[1.0, -2.0], &[0.5, 3.0]]);
        assert_eq!(phase_function(&f).unwrap(), vec![c(1.0, 0.0); 2]);

        let g = CouplingFamily::new(1, vec![vec![c(0.0, 1.0)], vec![c(0.0, 2.0)]]).unwrap();
        let h = phase_function(&g).unwrap();
        assert!((h[0] - c(0.0, 1.0)).norm() < 1e-15 || (h[0] - c(0.0, -1.0)).norm() < 1e-15);
        for v in g.vectors() {
            assert!((h[0] * v[0]).im.abs() < 1e-15);
        }

        let bad = CouplingFamily::new(1, vec![vec![c(1.0, 0.0)], vec![c(0.0, 1.0)]]).unwrap();
        assert!(phase_function(&bad).is_none());
    }

    #[test]
    fn hypothesis_examples() {
        let modes = ModeSet::uniform(&[1.0], ModeTag::Essential).unwrap();
        let f = real_family(&[&[1.0], &[2.0], &[3.0], &[2.0]]);
        let p = ModelParams::new(0.2, vec![0.1, 0.1, 0.1, 0.1], f, modes.clone()).unwrap();
        let r = validate_hypotheses(&p);
        assert!(!r.passed(1));
        assert!(r.checks[0].reason.contains("odd"));

        let f2 = real_family(&[&[1.0], &[2.0]]);
        let p2 = ModelParams::new(0.2, vec![0.1, -0.1], f2.clone(), modes.clone()).unwrap();
        assert!(!validate_hypotheses(&p2).passed(1));

        let p3 = ModelParams::new(0.2, vec![0.4, 0.0], f2, modes).unwrap();
        let r3 = validate_hypotheses(&p3);
        assert!(r3.all_pass(5), "{r3:?}");
    }

    #[test]
    fn hyp3_and_hyp4_for_high_order() {
        let modes = ModeSet::uniform(&[1.0, 2.0], ModeTag::Essential).unwrap();
        let g = vec![c(1.0, 0.0), c(0.0, 1.0)];
        let fam = CouplingFamily::repeated(3, g).unwrap();
        let p = ModelParams::new(0.1, vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0], fam, modes.clone()).unwrap();
        let r = validate_hypotheses(&p);
        // one complex vector repeated: per-mode products are |g_k|^2, real
        assert!(r.all_pass(5), "{r:?}");

        let mixed = CouplingFamily::new(
            3,
            vec![
                vec![c(1.0, 0.0), c(1.0, 0.0)],
                vec![c(0.0, 1.0), c(1.0, 0.0)],
                vec![c(1.0, 0.0), c(1.0, 0.0)],
                vec![c(1.0, 0.0), c(1.0, 0.0)],
                vec![c(1.0, 0.0), c(1.0, 0.0)],
                vec![c(1.0, 0.0), c(1.0, 0.0)],
            ],
        )
        .unwrap();
        let p = ModelParams::new(0.1, vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0], mixed, modes).unwrap();
        let r = validate_hypotheses(&p);
        assert!(!r.passed(2) && !r.passed(3) && !r.passed(4));
    }

    #[test]
    fn model_params_checks_alpha_length() {
        let modes = ModeSet::uniform(&[1.0], ModeTag::Discrete).unwrap();
        let f = real_family(&[&[1.0], &[1.0]]);
        assert!(ModelParams::new(0.0, vec![1.0, 0.0, 1.0, 1.0], f, modes).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn top_index_always_leading(vals in proptest::collection::vec(-2i32..3, 4), fresh in 10i32..20) {
                let mut vs: Vec<Vec<f64>> = vals.iter().map(|&v| vec![v as f64]).collect();
                let fam = CouplingFamily::from_real(2, vs.clone()).unwrap();
                prop_assert!(leading_terms(&fam).contains(&4));
                vs[3] = vec![fresh as f64];
                let fam = CouplingFamily::from_real(2, vs).unwrap();
                prop_assert!(leading_terms(&fam).contains(&4));
            }

            #[test]
            fn m_below_m_ess(energies in proptest::collection::vec(0.01f64..5.0, 1..6), tags in proptest::collection::vec(any::<bool>(), 6)) {
                let modes = energies.iter().zip(&tags).map(|(&e, &t)| Mode::new(e, 1.0, if t { ModeTag::Essential } else { ModeTag::Discrete })).collect();
                let ms = ModeSet::new(modes, "").unwrap();
                let (m, me) = masses(&ms);
                prop_assert!(m <= me);
            }

            #[test]
            fn phase_function_makes_couplings_real(
                phases in proptest::collection::vec(0.0f64..std::f64::consts::TAU, 3),
                amps in proptest::collection::vec(-2.0f64..2.0, 12),
            ) {
                let vectors: Vec<Vec<Complex64>> = (0..4)
                    .map(|i| (0..3).map(|k| Complex64::from_polar(1.0, phases[k]) * amps[i * 3 + k]).collect())
                    .collect();
                let fam = CouplingFamily::new(2, vectors).unwrap();
                let h = phase_function(&fam).expect("common phase per mode");
                let scale = fam.max_abs();
                for v in fam.vectors() {
                    for (hk, z) in h.iter().zip(v) {
                        prop_assert!((hk.norm() - 1.0).abs() < 1e-14);
                        prop_assert!((hk * z).im.abs() <= 1e-12 * scale);
                    }
                }
            }
        }
    }
}
