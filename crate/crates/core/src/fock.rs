//! Truncated bosonic Fock space and second-quantized operators.
//!
//! States are occupation multi-indices `n ∈ ℕ^M` with `|n| ≤ N_max`. The
//! basis is graded by `|n|` and lexicographic within a grade, so position 0 is
//! the vacuum and each grade occupies a contiguous index range. Field powers
//! are powers of the truncated field matrix, which keeps every grade-parity
//! identity exact at finite cutoff.

use std::collections::{BTreeMap, HashMap};
use std::ops::Range;

use num_complex::Complex64;

use crate::eigen::dense_hermitian_eigen;
use crate::error::{Error, Result};
use crate::onebody::ModeSet;
use crate::sparse::{SparseOp, ZERO};
use crate::vector;

/// Default ceiling on the basis dimension.
pub const DEFAULT_CAPACITY: usize = 4_000_000;

/// Occupation-number basis with a total-number cutoff.
#[derive(Clone, Debug)]
pub struct FockBasis {
    mode_count: usize,
    n_max: usize,
    occupations: Vec<u16>,
    grade_starts: Vec<usize>,
    index: HashMap<Vec<u16>, usize>,
}

/// `binomial(M + N, M)` without overflow for any realistic input.
pub fn basis_dimension(mode_count: usize, n_max: usize) -> u128 {
    let mut d: u128 = 1;
    for i in 1..=mode_count as u128 {
        d = d.saturating_mul(n_max as u128 + i) / i;
    }
    d
}

pub fn enumerate_basis(mode_count: usize, n_max: usize) -> Result<FockBasis> {
    enumerate_basis_with_limit(mode_count, n_max, DEFAULT_CAPACITY)
}

pub fn enumerate_basis_with_limit(mode_count: usize, n_max: usize, limit: usize) -> Result<FockBasis> {
    if mode_count == 0 {
        return Err(Error::InvalidModes("a Fock basis needs at least one mode".into()));
    }
    if n_max > u16::MAX as usize {
        return Err(Error::Capacity {
            dim: basis_dimension(mode_count, n_max),
            limit,
        });
    }
    let dim = basis_dimension(mode_count, n_max);
    if dim > limit as u128 {
        return Err(Error::Capacity { dim, limit });
    }
    let dim = dim as usize;
    let mut occupations = Vec::with_capacity(dim * mode_count);
    let mut grade_starts = Vec::with_capacity(n_max + 2);
    let mut current = vec![0u16; mode_count];
    for grade in 0..=n_max {
        grade_starts.push(occupations.len() / mode_count);
        compositions(grade, 0, &mut current, &mut occupations);
    }
    grade_starts.push(dim);
    let index = occupations
        .chunks(mode_count)
        .enumerate()
        .map(|(i, s)| (s.to_vec(), i))
        .collect();
    Ok(FockBasis {
        mode_count,
        n_max,
        occupations,
        grade_starts,
        index,
    })
}

/// Append all compositions of `remaining` into the slots `pos..` in
/// ascending lexicographic order.
fn compositions(remaining: usize, pos: usize, current: &mut [u16], out: &mut Vec<u16>) {
    if pos + 1 == current.len() {
        current[pos] = remaining as u16;
        out.extend_from_slice(current);
        return;
    }
    for first in 0..=remaining {
        current[pos] = first as u16;
        compositions(remaining - first, pos + 1, current, out);
    }
    current[pos] = 0;
}

impl FockBasis {
    pub fn dim(&self) -> usize {
        self.occupations.len() / self.mode_count
    }

    pub fn mode_count(&self) -> usize {
        self.mode_count
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn state(&self, i: usize) -> &[u16] {
        &self.occupations[i * self.mode_count..(i + 1) * self.mode_count]
    }

    pub fn states(&self) -> impl Iterator<Item = &[u16]> {
        self.occupations.chunks(self.mode_count)
    }

    pub fn index_of(&self, occupation: &[u16]) -> Option<usize> {
        self.index.get(occupation).copied()
    }

    /// `|n|` for state `i`.
    pub fn grade(&self, i: usize) -> usize {
        self.state(i).iter().map(|&x| x as usize).sum()
    }

    /// Index range of the states with `|n| = g`.
    pub fn grade_range(&self, g: usize) -> Range<usize> {
        self.grade_starts[g]..self.grade_starts[g + 1]
    }

    /// True when state `i` lies in the guard sector `|n| ≤ N_max − degree`.
    pub fn in_guard(&self, i: usize, degree: usize) -> bool {
        self.grade(i) + degree <= self.n_max
    }

    fn check_modes(&self, modes: &ModeSet) -> Result<()> {
        if modes.len() != self.mode_count {
            return Err(Error::Dimension {
                expected: self.mode_count,
                got: modes.len(),
            });
        }
        Ok(())
    }
}

/// A vector of Fock-space coefficients, one per basis state.
#[derive(Clone, Debug, PartialEq)]
pub struct FockVector {
    coeffs: Vec<Complex64>,
}

impl FockVector {
    pub fn new(coeffs: Vec<Complex64>) -> Self {
        Self { coeffs }
    }

    pub fn zeros(dim: usize) -> Self {
        Self::new(vec![ZERO; dim])
    }

    pub fn vacuum(dim: usize) -> Self {
        let mut v = Self::zeros(dim);
        v.coeffs[0] = Complex64::new(1.0, 0.0);
        v
    }

    pub fn basis_state(dim: usize, i: usize) -> Self {
        let mut v = Self::zeros(dim);
        v.coeffs[i] = Complex64::new(1.0, 0.0);
        v
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn norm(&self) -> f64 {
        vector::norm(&self.coeffs)
    }

    pub fn dot(&self, other: &FockVector) -> Complex64 {
        vector::dot(&self.coeffs, &other.coeffs)
    }
}

/// `a_k` for a single basis mode: `⟨n−δ_k| a_k |n⟩ = √n_k`.
pub fn mode_annihilator(basis: &FockBasis, k: usize) -> Result<SparseOp> {
    if k >= basis.mode_count {
        return Err(Error::ModeIndex {
            index: k,
            count: basis.mode_count,
        });
    }
    let mut scratch = vec![0u16; basis.mode_count];
    let mut t = Vec::new();
    for (i, n) in basis.states().enumerate() {
        if n[k] == 0 {
            continue;
        }
        scratch.copy_from_slice(n);
        scratch[k] -= 1;
        let j = basis.index_of(&scratch).expect("lowered state is in the basis");
        t.push((j, i, Complex64::new((n[k] as f64).sqrt(), 0.0)));
    }
    Ok(SparseOp::from_triplets(basis.dim(), t, false))
}

/// All single-mode annihilators, indexed by mode.
pub fn mode_annihilators(basis: &FockBasis) -> Vec<SparseOp> {
    (0..basis.mode_count)
        .map(|k| mode_annihilator(basis, k).expect("mode index in range"))
        .collect()
}

/// Fock-level amplitudes `c_k = g_k √w_k`.
pub fn embed(g: &[Complex64], modes: &ModeSet) -> Result<Vec<Complex64>> {
    modes.check_amplitudes(g)?;
    Ok(g.iter().zip(modes.modes()).map(|(z, m)| z * m.weight.sqrt()).collect())
}

/// `a(g) = Σ_k conj(g_k √w_k) a_k`.
pub fn annihilation(basis: &FockBasis, g: &[Complex64], modes: &ModeSet) -> Result<SparseOp> {
    basis.check_modes(modes)?;
    let c = embed(g, modes)?;
    let mut scratch = vec![0u16; basis.mode_count];
    let mut t = Vec::new();
    for (i, n) in basis.states().enumerate() {
        for (k, ck) in c.iter().enumerate() {
            if n[k] == 0 || *ck == ZERO {
                continue;
            }
            scratch.copy_from_slice(n);
            scratch[k] -= 1;
            let j = basis.index_of(&scratch).expect("lowered state is in the basis");
            t.push((j, i, ck.conj() * (n[k] as f64).sqrt()));
        }
    }
    Ok(SparseOp::from_triplets(basis.dim(), t, false))
}

/// `a†(g)`, the adjoint of [`annihilation`].
pub fn creation(basis: &FockBasis, g: &[Complex64], modes: &ModeSet) -> Result<SparseOp> {
    Ok(annihilation(basis, g, modes)?.adjoint().with_hermitian(false))
}

/// `φ(g) = a(g) + a†(g)`.
pub fn field(basis: &FockBasis, g: &[Complex64], modes: &ModeSet) -> Result<SparseOp> {
    let a = annihilation(basis, g, modes)?;
    Ok(a.add(&a.adjoint()).with_hermitian(true))
}

/// `φ(g)^i` as the power of the truncated field matrix.
pub fn field_power(basis: &FockBasis, g: &[Complex64], modes: &ModeSet, i: usize) -> Result<SparseOp> {
    if i == 0 {
        return Err(Error::Precondition("field power exponent must be at least 1".into()));
    }
    Ok(field(basis, g, modes)?.power(i))
}

/// `dΓ(b)`: diagonal with entry `Σ_k n_k b_k`.
pub fn dgamma(basis: &FockBasis, b: &[f64]) -> Result<SparseOp> {
    if b.len() != basis.mode_count {
        return Err(Error::Dimension {
            expected: basis.mode_count,
            got: b.len(),
        });
    }
    let diag: Vec<f64> = basis
        .states()
        .map(|n| n.iter().zip(b).map(|(&nk, bk)| nk as f64 * bk).sum())
        .collect();
    Ok(SparseOp::from_real_diagonal(&diag))
}

/// The number operator `N = dΓ(1)`.
pub fn number_operator(basis: &FockBasis) -> SparseOp {
    dgamma(basis, &vec![1.0; basis.mode_count]).expect("length matches")
}

/// `Γ(−1)`: diagonal with entry `(−1)^{|n|}`.
pub fn gamma_parity(basis: &FockBasis) -> SparseOp {
    let diag: Vec<f64> = (0..basis.dim())
        .map(|i| if basis.grade(i) % 2 == 0 { 1.0 } else { -1.0 })
        .collect();
    SparseOp::from_real_diagonal(&diag)
}

/// Exponential vector `ε(g)` truncated at `N_max` (not normalized): the
/// coefficient at `n` is `Π_k c_k^{n_k} / √(n_k!)` with `c_k = g_k √w_k`.
pub fn exponential_vector(basis: &FockBasis, g: &[Complex64], modes: &ModeSet) -> Result<FockVector> {
    basis.check_modes(modes)?;
    let c = embed(g, modes)?;
    let coeffs = basis
        .states()
        .map(|n| {
            let mut z = Complex64::new(1.0, 0.0);
            for (&nk, ck) in n.iter().zip(&c) {
                for j in 1..=nk {
                    z *= ck / (j as f64).sqrt();
                }
            }
            z
        })
        .collect();
    Ok(FockVector::new(coeffs))
}

/// Weyl operator `W(h) = exp(a†(h) − a(h))` of the truncated space, by dense
/// diagonalization of the Hermitian generator `−i(a†(h) − a(h))`.
pub fn weyl(basis: &FockBasis, h: &[Complex64], modes: &ModeSet) -> Result<SparseOp> {
    let a = annihilation(basis, h, modes)?;
    let generator = SparseOp::linear_combination(
        basis.dim(),
        &[(Complex64::new(0.0, -1.0), &a.adjoint()), (Complex64::new(0.0, 1.0), &a)],
    )
    .with_hermitian(true);
    let eig = dense_hermitian_eigen(&generator)?;
    let n = basis.dim();
    let phases: Vec<Complex64> = eig.values.iter().map(|&l| Complex64::from_polar(1.0, l)).collect();
    let mut t = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let v: Complex64 = (0..n)
                .map(|p| eig.vectors[p][i] * phases[p] * eig.vectors[p][j].conj())
                .sum();
            if v != ZERO {
                t.push((i, j, v));
            }
        }
    }
    Ok(SparseOp::from_triplets(n, t, false))
}

/// Mode-resolved `ℓ`-fold annihilation of a Fock vector.
///
/// Only nondecreasing index tuples are stored; [`get`](Self::get) sorts its
/// argument, so the array is exactly symmetric.
#[derive(Clone, Debug)]
pub struct PointwiseAnnihilation {
    order: usize,
    mode_count: usize,
    entries: BTreeMap<Vec<usize>, FockVector>,
}

impl PointwiseAnnihilation {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn mode_count(&self) -> usize {
        self.mode_count
    }

    pub fn get(&self, ks: &[usize]) -> &FockVector {
        let mut key = ks.to_vec();
        key.sort_unstable();
        &self.entries[&key]
    }

    /// Stored `(sorted indices, vector)` pairs.
    pub fn iter(&self) -> impl Iterator<Item = (&[usize], &FockVector)> {
        self.entries.iter().map(|(k, v)| (k.as_slice(), v))
    }
}

fn nondecreasing_tuples(len: usize, modes: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(len);
    fn rec(len: usize, modes: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == len {
            out.push(cur.clone());
            return;
        }
        for k in start..modes {
            cur.push(k);
            rec(len, modes, k, cur, out);
            cur.pop();
        }
    }
    rec(len, modes, 0, &mut cur, &mut out);
    out
}

/// `(A_ℓ ψ)(k_1, …, k_ℓ) = a_{k_1} ⋯ a_{k_ℓ} ψ / √(w_{k_1} ⋯ w_{k_ℓ})`.
///
/// With this normalization `Σ_k w_k ‖(A_1 ψ)(k)‖² = ⟨ψ, N ψ⟩`.
pub fn pointwise_annihilation(
    basis: &FockBasis,
    modes: &ModeSet,
    psi: &FockVector,
    ell: usize,
) -> Result<PointwiseAnnihilation> {
    basis.check_modes(modes)?;
    if psi.len() != basis.dim() {
        return Err(Error::Dimension {
            expected: basis.dim(),
            got: psi.len(),
        });
    }
    if ell == 0 {
        return Err(Error::Precondition("annihilation order must be at least 1".into()));
    }
    let ladders = mode_annihilators(basis);
    let weights = modes.weights();
    let mut entries = BTreeMap::new();
    for key in nondecreasing_tuples(ell, basis.mode_count) {
        let mut v = psi.coeffs().to_vec();
        let mut w = 1.0;
        for &k in key.iter().rev() {
            v = ladders[k].matvec(&v);
            w *= weights[k];
        }
        vector::scale(Complex64::new(1.0 / w.sqrt(), 0.0), &mut v);
        entries.insert(key, FockVector::new(v));
    }
    Ok(PointwiseAnnihilation {
        order: ell,
        mode_count: basis.mode_count,
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::onebody::{inner_product, Mode, ModeTag};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn unit_modes(m: usize) -> ModeSet {
        ModeSet::uniform(&(1..=m).map(|k| k as f64).collect::<Vec<_>>(), ModeTag::Discrete).unwrap()
    }

    /// Max entry of `op − target` over columns in the guard sector.
    fn guard_defect(basis: &FockBasis, op: &SparseOp, target: &SparseOp, degree: usize) -> f64 {
        op.sub(target).max_abs_where(|_, j| basis.in_guard(j, degree))
    }

    #[test]
    fn basis_dimensions() {
        assert_eq!(enumerate_basis(1, 3).unwrap().dim(), 4);
        assert_eq!(enumerate_basis(2, 2).unwrap().dim(), 6);
        assert_eq!(enumerate_basis(4, 8).unwrap().dim(), 495);
        assert!(matches!(
            enumerate_basis_with_limit(8, 10, 1000),
            Err(Error::Capacity { .. })
        ));
    }

    #[test]
    fn basis_ordering_is_graded_lexicographic() {
        let b = enumerate_basis(2, 2).unwrap();
        let states: Vec<_> = b.states().map(|s| s.to_vec()).collect();
        assert_eq!(
            states,
            vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![0, 2], vec![1, 1], vec![2, 0]]
        );
        for (i, s) in b.states().enumerate() {
            assert_eq!(b.index_of(s), Some(i));
        }
        assert_eq!(b.grade_range(1), 1..3);
    }

    #[test]
    fn annihilator_ladder_and_vacuum() {
        let b = enumerate_basis(1, 3).unwrap();
        let a = mode_annihilator(&b, 0).unwrap();
        assert_eq!(a.get(1, 2), c(2f64.sqrt(), 0.0));
        assert!(a.matvec(FockVector::vacuum(b.dim()).coeffs()).iter().all(|z| *z == ZERO));
        assert!(matches!(mode_annihilator(&b, 1), Err(Error::ModeIndex { .. })));
    }

    #[test]
    fn ccr_on_guard_sector() {
        let b = enumerate_basis(3, 4).unwrap();
        let ladders = mode_annihilators(&b);
        let id = SparseOp::identity(b.dim());
        let zero = SparseOp::zeros(b.dim());
        for j in 0..3 {
            for k in 0..3 {
                let ccr = ladders[j].commutator(&ladders[k].adjoint());
                let target = if j == k { &id } else { &zero };
                assert!(guard_defect(&b, &ccr, target, 1) <= 1e-13);
                assert!(ladders[j].commutator(&ladders[k]).max_abs() <= 1e-13);
            }
        }
    }

    #[test]
    fn smeared_annihilation_matches_basis_mode() {
        let b = enumerate_basis(2, 3).unwrap();
        let modes = unit_modes(2);
        let a = annihilation(&b, &[c(0.0, 0.0), c(1.0, 0.0)], &modes).unwrap();
        assert_eq!(a, mode_annihilator(&b, 1).unwrap());
    }

    #[test]
    fn creation_on_vacuum_embeds_one_particle_state() {
        let b = enumerate_basis(2, 3).unwrap();
        let modes = ModeSet::new(
            vec![Mode::new(1.0, 0.5, ModeTag::Discrete), Mode::new(2.0, 2.0, ModeTag::Discrete)],
            "",
        )
        .unwrap();
        let g = [c(0.3, -0.2), c(1.1, 0.4)];
        let h = [c(-0.7, 0.1), c(0.2, 0.9)];
        let vac = FockVector::vacuum(b.dim());
        let ag = creation(&b, &g, &modes).unwrap().matvec(vac.coeffs());
        let ah = creation(&b, &h, &modes).unwrap().matvec(vac.coeffs());
        let emb = embed(&g, &modes).unwrap();
        for (k, ek) in emb.iter().enumerate() {
            let mut n = vec![0u16; 2];
            n[k] = 1;
            assert!((ag[b.index_of(&n).unwrap()] - ek).norm() < 1e-15);
        }
        let lhs = vector::dot(&ag, &ah);
        let rhs = inner_product(&g, &h, &modes).unwrap();
        assert!((lhs - rhs).norm() < 1e-14);
    }

    #[test]
    fn field_single_mode_entries() {
        let b = enumerate_basis(1, 2).unwrap();
        let modes = unit_modes(1);
        let phi = field(&b, &[c(1.0, 0.0)], &modes).unwrap();
        let want = [
            [0.0, 1.0, 0.0],
            [1.0, 0.0, 2f64.sqrt()],
            [0.0, 2f64.sqrt(), 0.0],
        ];
        for i in 0..3 {
            for j in 0..3 {
                assert!((phi.get(i, j) - c(want[i][j], 0.0)).norm() < 1e-15);
            }
        }
        assert!(phi.verify_hermitian(1e-13).is_ok());
        assert_eq!(field(&b, &[c(0.0, 0.0)], &modes).unwrap().nnz(), 0);
    }

    #[test]
    fn field_commutator_is_imaginary_part_of_inner_product() {
        let b = enumerate_basis(2, 5).unwrap();
        let modes = ModeSet::new(
            vec![Mode::new(1.0, 0.7, ModeTag::Discrete), Mode::new(2.0, 1.3, ModeTag::Discrete)],
            "",
        )
        .unwrap();
        let f = [c(0.4, 0.3), c(-0.2, 0.8)];
        let g = [c(1.0, -0.5), c(0.6, 0.1)];
        let comm = field(&b, &f, &modes).unwrap().commutator(&field(&b, &g, &modes).unwrap());
        let ip = inner_product(&f, &g, &modes).unwrap();
        let target = SparseOp::identity(b.dim()).scaled(c(0.0, 2.0 * ip.im));
        assert!(guard_defect(&b, &comm, &target, 2) <= 1e-13);
    }

    #[test]
    fn field_square_diagonal_oracle() {
        // dense multiplication of the tridiagonal field matrix
        let n_max = 6;
        let b = enumerate_basis(1, n_max).unwrap();
        let phi2 = field_power(&b, &[c(1.0, 0.0)], &unit_modes(1), 2).unwrap();
        let dense = field(&b, &[c(1.0, 0.0)], &unit_modes(1)).unwrap().to_dense();
        for n in 0..=n_max {
            let want: Complex64 = (0..=n_max).map(|k| dense[n][k] * dense[k][n]).sum();
            assert!((phi2.get(n, n) - want).norm() < 1e-14);
            if n + 2 <= n_max {
                assert!((phi2.get(n, n).re - (2 * n + 1) as f64).abs() < 1e-13);
            }
        }
        assert!(phi2.verify_hermitian(1e-13).is_ok());
        let phi1 = field_power(&b, &[c(1.0, 0.0)], &unit_modes(1), 1).unwrap();
        assert_eq!(phi1, field(&b, &[c(1.0, 0.0)], &unit_modes(1)).unwrap());
    }

    #[test]
    fn dgamma_examples() {
        let b = enumerate_basis(2, 3).unwrap();
        let d = dgamma(&b, &[1.0, 2.0]).unwrap();
        assert_eq!(d.get(0, 0), ZERO);
        let i11 = b.index_of(&[1, 1]).unwrap();
        assert_eq!(d.get(i11, i11), c(3.0, 0.0));
        let zero_count = d.diagonal().iter().filter(|z| z.norm() == 0.0).count();
        assert_eq!(zero_count, 1);
    }

    #[test]
    fn dgamma_field_commutator() {
        let b = enumerate_basis(2, 4).unwrap();
        let modes = unit_modes(2);
        let omega = modes.energies();
        let v = [c(0.5, 0.2), c(-0.3, 0.9)];
        let iwv: Vec<Complex64> = v.iter().zip(&omega).map(|(z, w)| z * c(0.0, *w)).collect();
        let lhs = dgamma(&b, &omega).unwrap().commutator(&field(&b, &v, &modes).unwrap());
        let rhs = field(&b, &iwv, &modes).unwrap().scaled(c(0.0, -1.0));
        assert!(guard_defect(&b, &lhs, &rhs, 1) <= 1e-13);
    }

    #[test]
    fn parity_properties() {
        let b = enumerate_basis(2, 5).unwrap();
        let p = gamma_parity(&b);
        assert_eq!(p.get(0, 0), c(1.0, 0.0));
        assert!(p.matmul(&p).max_abs_diff(&SparseOp::identity(b.dim())) == 0.0);
        let modes = unit_modes(2);
        let v = [c(0.5, 0.2), c(-0.3, 0.9)];
        let minus_v: Vec<_> = v.iter().map(|z| -z).collect();
        let conj = p.matmul(&field(&b, &v, &modes).unwrap()).matmul(&p);
        assert!(conj.max_abs_diff(&field(&b, &minus_v, &modes).unwrap()) <= 1e-15);
    }

    #[test]
    fn exponential_vector_examples() {
        let b = enumerate_basis(1, 2).unwrap();
        let modes = unit_modes(1);
        let e = exponential_vector(&b, &[c(1.0, 0.0)], &modes).unwrap();
        assert_eq!(e.coeffs()[0], c(1.0, 0.0));
        assert_eq!(e.coeffs()[1], c(1.0, 0.0));
        assert!((e.coeffs()[2] - c(0.5f64.sqrt(), 0.0)).norm() < 1e-15);

        let b3 = enumerate_basis(3, 4).unwrap();
        let zero = exponential_vector(&b3, &[c(0.0, 0.0); 3], &unit_modes(3)).unwrap();
        assert_eq!(zero, FockVector::vacuum(b3.dim()));
    }

    #[test]
    fn exponential_vector_overlap_within_tail_bound() {
        let modes = ModeSet::new(
            vec![Mode::new(1.0, 0.5, ModeTag::Discrete), Mode::new(2.0, 1.5, ModeTag::Discrete)],
            "",
        )
        .unwrap();
        let g = [c(0.4, 0.1), c(-0.2, 0.3)];
        let h = [c(0.1, -0.5), c(0.3, 0.2)];
        let ip = inner_product(&g, &h, &modes).unwrap();
        for n_max in [2, 4, 8, 12] {
            let b = enumerate_basis(2, n_max).unwrap();
            let eg = exponential_vector(&b, &g, &modes).unwrap();
            let eh = exponential_vector(&b, &h, &modes).unwrap();
            let x = ip.norm();
            let mut tail = 0.0;
            let mut term = 1.0;
            for n in 1..200 {
                term *= x / n as f64;
                if n > n_max {
                    tail += term;
                }
            }
            assert!((eg.dot(&eh) - ip.exp()).norm() <= tail + 1e-14, "n_max {n_max}");
        }
    }

    #[test]
    fn exponential_vector_factorizes_across_mode_split() {
        // ε(f ⊕ g) at (n1, n2) equals the product of the split coefficients.
        let modes = ModeSet::new(
            vec![
                Mode::new(1.0, 0.5, ModeTag::Discrete),
                Mode::new(2.0, 1.5, ModeTag::Discrete),
                Mode::new(3.0, 0.8, ModeTag::Discrete),
            ],
            "",
        )
        .unwrap();
        let fg = [c(0.4, 0.1), c(-0.2, 0.3), c(0.7, -0.6)];
        let n_max = 6;
        let full = enumerate_basis(3, n_max).unwrap();
        let left = enumerate_basis(2, n_max).unwrap();
        let right = enumerate_basis(1, n_max).unwrap();
        let e = exponential_vector(&full, &fg, &modes).unwrap();
        let el = exponential_vector(&left, &fg[..2], &modes.subset(&[0, 1]).unwrap()).unwrap();
        let er = exponential_vector(&right, &fg[2..], &modes.subset(&[2]).unwrap()).unwrap();
        for (i, n) in full.states().enumerate() {
            let l = el.coeffs()[left.index_of(&n[..2]).unwrap()];
            let r = er.coeffs()[right.index_of(&n[2..]).unwrap()];
            assert!((e.coeffs()[i] - l * r).norm() <= 1e-15 * (1.0 + e.coeffs()[i].norm()));
        }
    }

    #[test]
    fn weyl_identity_and_coherent_state() {
        let b = enumerate_basis(1, 25).unwrap();
        let modes = unit_modes(1);
        let w0 = weyl(&b, &[c(0.0, 0.0)], &modes).unwrap();
        assert!(w0.max_abs_diff(&SparseOp::identity(b.dim())) < 1e-13);

        // Taylor-series oracle for exp(a† h − a h) applied to the vacuum.
        let h = [c(0.3, -0.2)];
        let a = annihilation(&b, &h, &modes).unwrap();
        let gen = a.adjoint().sub(&a);
        let mut term = FockVector::vacuum(b.dim()).into_coeffs();
        let mut sum = term.clone();
        for k in 1..80 {
            term = gen.matvec(&term);
            vector::scale(c(1.0 / k as f64, 0.0), &mut term);
            vector::axpy(c(1.0, 0.0), &term, &mut sum);
        }
        let w = weyl(&b, &h, &modes).unwrap();
        let wv = w.matvec(FockVector::vacuum(b.dim()).coeffs());
        assert!(vector::distance(&wv, &sum) < 1e-12);

        let hn2 = inner_product(&h, &h, &modes).unwrap().re;
        let mut coherent = exponential_vector(&b, &h, &modes).unwrap().into_coeffs();
        vector::scale(c((-hn2 / 2.0).exp(), 0.0), &mut coherent);
        assert!(vector::distance(&wv, &coherent) < 1e-10);
    }

    #[test]
    fn weyl_action_on_exponential_vectors_converges() {
        let modes = unit_modes(2);
        let h = [c(0.2, 0.1), c(-0.1, 0.15)];
        let g = [c(0.1, -0.2), c(0.25, 0.05)];
        let hg: Vec<_> = h.iter().zip(&g).map(|(a, b)| a + b).collect();
        let pref = (-inner_product(&h, &h, &modes).unwrap().re / 2.0 - inner_product(&h, &g, &modes).unwrap()).exp();
        let mut last = f64::INFINITY;
        for n_max in [3, 5, 7, 9] {
            let b = enumerate_basis(2, n_max).unwrap();
            let w = weyl(&b, &h, &modes).unwrap();
            let lhs = w.matvec(exponential_vector(&b, &g, &modes).unwrap().coeffs());
            let mut rhs = exponential_vector(&b, &hg, &modes).unwrap().into_coeffs();
            vector::scale(pref, &mut rhs);
            let err = vector::distance(&lhs, &rhs);
            assert!(err < last, "n_max {n_max}: {err} !< {last}");
            last = err;
        }
        assert!(last < 1e-5);
    }

    #[test]
    fn pointwise_annihilation_examples() {
        let modes = ModeSet::new(vec![Mode::new(1.0, 0.25, ModeTag::Discrete)], "").unwrap();
        let b = enumerate_basis(1, 4).unwrap();
        let a1 = pointwise_annihilation(&b, &modes, &FockVector::vacuum(b.dim()), 1).unwrap();
        assert!(a1.get(&[0]).norm() == 0.0);

        let psi = FockVector::basis_state(b.dim(), 2);
        let a1 = pointwise_annihilation(&b, &modes, &psi, 1).unwrap();
        let v = a1.get(&[0]).coeffs();
        assert!((v[1] - c(2f64.sqrt() / 0.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn second_order_is_symmetric() {
        let b = enumerate_basis(3, 4).unwrap();
        let modes = unit_modes(3);
        let psi = FockVector::new(vector::seeded_vector(b.dim(), 5, false));
        let a2 = pointwise_annihilation(&b, &modes, &psi, 2).unwrap();
        for k in 0..3 {
            for q in 0..3 {
                assert_eq!(a2.get(&[k, q]), a2.get(&[q, k]));
            }
        }
        assert_eq!(a2.iter().count(), 6);
    }
}
