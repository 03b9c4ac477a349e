//! Symmetric-group machinery and exact Haar twirls.
//!
//! Convention: `P_π |i_1 … i_t⟩ = |i_{π⁻¹(1)} … i_{π⁻¹(t)}⟩`, so the content of
//! slot `j` moves to slot `π(j)` and `P_π P_σ = P_{π∘σ}`. The twirl is
//!
//! `E[U^⊗t O U†^⊗t] = Σ_{π,η} Wg(η⁻¹π, d) tr(O P_π†) P_η`.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::qcore::linalg::{self, CMatrix, C64};
use crate::qcore::{DensityMatrix, QubitPartition};

pub const MAX_COPIES: usize = 6;
/// Largest twirled operator dimension.
pub const MAX_MOMENT_DIM: usize = 4096;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Permutation {
    images: Vec<usize>,
}

impl Permutation {
    /// `images[j]` is the image of `j` (0-based).
    pub fn new(images: Vec<usize>) -> Result<Self> {
        let t = images.len();
        let mut seen = vec![false; t];
        for &i in &images {
            if i >= t || std::mem::replace(&mut seen[i], true) {
                return Err(Error::param("images", format!("{images:?} is not a bijection")));
            }
        }
        Ok(Permutation { images })
    }

    pub fn identity(t: usize) -> Self {
        Permutation { images: (0..t).collect() }
    }

    pub fn transposition(t: usize, i: usize, j: usize) -> Self {
        let mut p = Self::identity(t);
        p.images.swap(i, j);
        p
    }

    /// `0 → 1 → … → t-1 → 0`.
    pub fn cyclic_shift(t: usize) -> Self {
        Permutation { images: (0..t).map(|j| (j + 1) % t).collect() }
    }

    pub fn t(&self) -> usize {
        self.images.len()
    }

    pub fn images(&self) -> &[usize] {
        &self.images
    }

    pub fn apply(&self, j: usize) -> usize {
        self.images[j]
    }

    pub fn is_identity(&self) -> bool {
        self.images.iter().enumerate().all(|(j, &i)| i == j)
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Permutation) -> Permutation {
        assert_eq!(self.t(), other.t(), "permutations of different degree");
        Permutation { images: other.images.iter().map(|&j| self.images[j]).collect() }
    }

    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0; self.t()];
        for (j, &i) in self.images.iter().enumerate() {
            inv[i] = j;
        }
        Permutation { images: inv }
    }

    /// Cycles as `[k, π(k), π²(k), …]`, each starting at its smallest element.
    pub fn cycle_decomposition(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.t()];
        let mut out = Vec::new();
        for start in 0..self.t() {
            if seen[start] {
                continue;
            }
            let mut cyc = Vec::new();
            let mut k = start;
            while !seen[k] {
                seen[k] = true;
                cyc.push(k);
                k = self.images[k];
            }
            out.push(cyc);
        }
        out
    }

    /// Number of cycles, fixed points included.
    pub fn cycles(&self) -> usize {
        self.cycle_decomposition().len()
    }

    /// Lexicographic rank in `S_t` (Lehmer code).
    pub fn rank(&self) -> usize {
        let t = self.t();
        let mut rank = 0;
        for i in 0..t {
            let smaller = self.images[i + 1..].iter().filter(|&&x| x < self.images[i]).count();
            rank = rank * (t - i) + smaller;
        }
        rank
    }

    /// All of `S_t` in lexicographic (rank) order.
    pub fn all(t: usize) -> Vec<Permutation> {
        let mut out = Vec::with_capacity(factorial(t) as usize);
        let mut cur: Vec<usize> = (0..t).collect();
        loop {
            out.push(Permutation { images: cur.clone() });
            // next lexicographic permutation
            let Some(i) = (1..t).rev().find(|&i| cur[i - 1] < cur[i]) else { break };
            let j = (i..t).rev().find(|&j| cur[j] > cur[i - 1]).unwrap();
            cur.swap(i - 1, j);
            cur[i..].reverse();
        }
        out
    }
}

pub fn cycles(p: &Permutation) -> usize {
    p.cycles()
}

fn factorial(n: usize) -> u64 {
    (1..=n as u64).product()
}

fn check_copies(t: usize) -> Result<()> {
    if t == 0 {
        return Err(Error::param("t", "need at least one copy"));
    }
    if t > MAX_COPIES {
        return Err(Error::SizeLimit(format!("t = {t} exceeds {MAX_COPIES}")));
    }
    Ok(())
}

fn checked_pow(d: usize, t: usize) -> Result<usize> {
    d.checked_pow(t as u32)
        .filter(|&p| p <= MAX_MOMENT_DIM)
        .ok_or_else(|| Error::SizeLimit(format!("d^t = {d}^{t} exceeds {MAX_MOMENT_DIM}")))
}

/// `P_π` on `(C^d)^⊗t`, stored as a basis-index map.
#[derive(Clone, Debug)]
pub struct PermutationOperator {
    perm: Permutation,
    d: usize,
    map: Vec<usize>,
}

impl PermutationOperator {
    pub fn new(perm: &Permutation, d: usize) -> Result<Self> {
        let t = perm.t();
        let dim = checked_pow(d, t)?;
        let inv = perm.inverse();
        let map = (0..dim)
            .map(|idx| {
                // slot 0 is the most significant digit
                let digits: Vec<usize> = (0..t).map(|k| (idx / d.pow((t - 1 - k) as u32)) % d).collect();
                (0..t).fold(0, |acc, k| acc * d + digits[inv.apply(k)])
            })
            .collect();
        Ok(PermutationOperator { perm: perm.clone(), d, map })
    }

    pub fn permutation(&self) -> &Permutation {
        &self.perm
    }

    pub fn local_dim(&self) -> usize {
        self.d
    }

    /// `P_π |j⟩ = |map[j]⟩`.
    pub fn map(&self) -> &[usize] {
        &self.map
    }

    pub fn dim(&self) -> usize {
        self.map.len()
    }

    pub fn matrix(&self) -> CMatrix {
        let mut m = CMatrix::zeros(self.dim(), self.dim());
        for (j, &i) in self.map.iter().enumerate() {
            m[(i, j)] = C64::new(1.0, 0.0);
        }
        m
    }

    /// Integer trace: the number of fixed basis states.
    pub fn trace(&self) -> u64 {
        self.map.iter().enumerate().filter(|(j, &i)| i == *j).count() as u64
    }

    /// `tr(O P_π†)`.
    pub fn trace_against(&self, o: &CMatrix) -> C64 {
        self.map.iter().enumerate().map(|(j, &i)| o[(i, j)]).sum()
    }
}

/// Weingarten coefficients for `S_t` at dimension `d`, indexed by rank.
#[derive(Clone, Debug)]
pub struct WeingartenTable {
    d: usize,
    t: usize,
    perms: Vec<Permutation>,
    values: Vec<f64>,
}

impl WeingartenTable {
    /// Inverts the Gram matrix `G[π,σ] = d^{#cycles(πσ⁻¹)}`.
    pub fn new(d: usize, t: usize) -> Result<Self> {
        check_copies(t)?;
        if d < t {
            return Err(Error::Unsupported(format!(
                "Weingarten function needs d >= t (got d = {d}, t = {t})"
            )));
        }
        let perms = Permutation::all(t);
        let k = perms.len();
        let df = d as f64;
        let gram = DMatrix::from_fn(k, k, |a, b| {
            df.powi(perms[a].compose(&perms[b].inverse()).cycles() as i32)
        });
        let inv = gram
            .try_inverse()
            .ok_or_else(|| Error::Unsupported("singular Gram matrix".into()))?;
        // row of the identity (rank 0)
        let values = (0..k).map(|b| inv[(0, b)]).collect();
        Ok(WeingartenTable { d, t, perms, values })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn perms(&self) -> &[Permutation] {
        &self.perms
    }

    pub fn value(&self, p: &Permutation) -> f64 {
        self.values[p.rank()]
    }

    pub fn sum_abs(&self) -> f64 {
        self.values.iter().map(|x| x.abs()).sum()
    }

    /// `a_η = Σ_π Wg(η⁻¹π) c_π` for every η, indexed by rank.
    fn mix<T>(&self, c: &[T]) -> Vec<T>
    where
        T: Clone + Send + Sync + std::ops::Mul<C64, Output = T> + std::ops::Add<Output = T>,
    {
        self.perms
            .par_iter()
            .map(|eta| {
                let ei = eta.inverse();
                let mut terms = self
                    .perms
                    .iter()
                    .zip(c)
                    .map(|(pi, cp)| cp.clone() * C64::new(self.values[ei.compose(pi).rank()], 0.0));
                let first = terms.next().expect("S_t is nonempty");
                terms.fold(first, |acc, x| acc + x)
            })
            .collect()
    }
}

pub fn weingarten(p: &Permutation, d: usize) -> Result<f64> {
    Ok(WeingartenTable::new(d, p.t())?.value(p))
}

pub fn sum_abs_weingarten(d: usize, t: usize) -> Result<f64> {
    Ok(WeingartenTable::new(d, t)?.sum_abs())
}

/// `(d-t)!/d!`.
pub fn falling_factorial_ratio(d: usize, t: usize) -> f64 {
    (0..t).map(|k| 1.0 / (d - k) as f64).product()
}

/// `Σ_{π ≠ e} d^{#cycles(π)}` by enumeration.
pub fn sum_cycles_nonidentity(d: usize, t: usize) -> f64 {
    Permutation::all(t)
        .iter()
        .filter(|p| !p.is_identity())
        .map(|p| (d as f64).powi(p.cycles() as i32))
        .sum()
}

/// `(d+t-1)!/(d-1)! - d^t`.
pub fn sum_cycles_nonidentity_closed(d: usize, t: usize) -> f64 {
    (0..t).map(|k| (d + k) as f64).product::<f64>() - (d as f64).powi(t as i32)
}

/// Exact `E[U^⊗t O U†^⊗t]` over Haar `U` on `C^d`.
pub fn haar_moment(o: &CMatrix, d: usize, t: usize) -> Result<CMatrix> {
    haar_moment_with_environment(o, d, t, 1)
}

/// Twirl of the first `t` tensor factors of `O` on `(C^d)^⊗t ⊗ C^e`, leaving
/// the trailing `e`-dimensional environment untouched.
pub fn haar_moment_with_environment(o: &CMatrix, d: usize, t: usize, e: usize) -> Result<CMatrix> {
    check_copies(t)?;
    let sys = checked_pow(d, t)?;
    let dim = sys * e;
    if dim > MAX_MOMENT_DIM {
        return Err(Error::SizeLimit(format!("operator dimension {dim} exceeds {MAX_MOMENT_DIM}")));
    }
    if o.nrows() != dim || o.ncols() != dim {
        return Err(Error::DimensionMismatch { expected: dim, found: o.nrows() });
    }
    let table = WeingartenTable::new(d, t)?;
    let ops: Vec<PermutationOperator> =
        table.perms.iter().map(|p| PermutationOperator::new(p, d)).collect::<Result<_>>()?;

    // C_π[e1, e2] = Σ_j O[(map_π[j], e1), (j, e2)]
    let blocks: Vec<CMatrix> = ops
        .par_iter()
        .map(|op| {
            CMatrix::from_fn(e, e, |e1, e2| {
                op.map.iter().enumerate().map(|(j, &i)| o[(i * e + e1, j * e + e2)]).sum()
            })
        })
        .collect();
    let coeffs = table.mix(&blocks);

    let mut out = CMatrix::zeros(dim, dim);
    for (op, a) in ops.iter().zip(&coeffs) {
        for (j, &i) in op.map.iter().enumerate() {
            for e2 in 0..e {
                for e1 in 0..e {
                    out[(i * e + e1, j * e + e2)] += a[(e1, e2)];
                }
            }
        }
    }
    Ok(out)
}

fn moment_size(partition: &QubitPartition, t: usize) -> Result<usize> {
    check_copies(t)?;
    checked_pow(partition.dim(), t)
}

/// Exact `E_U[Φ_U(ρ)^⊗t]` from the structured permutation sum: the weight of
/// `π` factorizes into cycle traces `tr(ρ^len)` on the message block and
/// `d_B^{#cycles(π) - t}` on the mixed block.
pub fn encrypted_moment_exact(partition: &QubitPartition, rho: &DensityMatrix, t: usize) -> Result<CMatrix> {
    moment_size(partition, t)?;
    if rho.dim() != 1 << partition.n {
        return Err(Error::DimensionMismatch { expected: 1 << partition.n, found: rho.dim() });
    }
    let d = partition.dim();
    let d_b = (1usize << partition.m) as f64;
    let mut powers = vec![rho.matrix().clone()];
    for k in 1..t {
        powers.push(&powers[k - 1] * rho.matrix());
    }
    let tr_pow: Vec<f64> = powers.iter().map(|p| linalg::trace(p).re).collect();
    let table = WeingartenTable::new(d, t)?;
    let c: Vec<C64> = table
        .perms
        .iter()
        .map(|p| {
            let cyc = p.cycle_decomposition();
            let a: f64 = cyc.iter().map(|c| tr_pow[c.len() - 1]).product();
            C64::new(a * d_b.powi(cyc.len() as i32 - t as i32), 0.0)
        })
        .collect();
    let coeffs = table.mix(&c);
    let dim = d.pow(t as u32);
    let mut out = CMatrix::zeros(dim, dim);
    for (p, a) in table.perms.iter().zip(coeffs) {
        if a.norm() == 0.0 {
            continue;
        }
        let op = PermutationOperator::new(p, d)?;
        for (j, &i) in op.map.iter().enumerate() {
            out[(i, j)] += a;
        }
    }
    Ok(out)
}

/// `‖E_U[Φ_U(ρ)^⊗t] − σ_z^⊗t‖₁`.
pub fn closeness_exact(partition: &QubitPartition, rho: &DensityMatrix, t: usize) -> Result<f64> {
    let mut diff = encrypted_moment_exact(partition, rho, t)?;
    let dim = diff.nrows();
    let inv = 1.0 / dim as f64;
    for i in 0..dim {
        diff[(i, i)] -= C64::new(inv, 0.0);
    }
    Ok(linalg::trace_norm_hermitian(&diff))
}

/// `ρ_g ⊗ pad^⊗t` reordered to `(msg_1, pad_1, …, msg_t, pad_t, purifier)`,
/// where `ρ_g` lives on `(msg_1, …, msg_t, purifier)`.
pub fn padded_joint_input(partition: &QubitPartition, rho_g: &DensityMatrix, t: usize, q: usize) -> Result<DensityMatrix> {
    let n = partition.n;
    if rho_g.qubits() != t * n + q {
        return Err(Error::DimensionMismatch { expected: 1 << (t * n + q), found: rho_g.dim() });
    }
    let pad = partition.padding();
    let mut ext = rho_g.clone();
    for _ in 0..t {
        ext = ext.tensor(&pad)?;
    }
    let mut layout = vec![n; t];
    layout.push(q);
    layout.resize(layout.len() + t, partition.l + partition.m);
    let mut order = Vec::with_capacity(2 * t + 1);
    for i in 0..t {
        order.push(i);
        order.push(t + 1 + i);
    }
    order.push(t);
    ext.permute_registers(&layout, &order)
}

/// `σ_z^⊗t ⊗ tr_{nt}(ρ_g)`.
pub fn joint_target(partition: &QubitPartition, rho_g: &DensityMatrix, t: usize, q: usize) -> Result<CMatrix> {
    let rho_p = rho_g.partial_trace(&[t * partition.n, q], &[0])?;
    let dsys = partition.dim().pow(t as u32);
    let mixed = CMatrix::from_diagonal_element(dsys, dsys, C64::new(1.0 / dsys as f64, 0.0));
    Ok(linalg::kron(&mixed, rho_p.matrix()))
}

/// Exact `E_U[(Φ_U^⊗t ⊗ id_q)(ρ_g)]`, copies first, purifier last.
pub fn joint_moment_exact(partition: &QubitPartition, rho_g: &DensityMatrix, t: usize, q: usize) -> Result<CMatrix> {
    let ext = padded_joint_input(partition, rho_g, t, q)?;
    haar_moment_with_environment(ext.matrix(), partition.dim(), t, 1 << q)
}

/// `‖E_U[(Φ_U^⊗t ⊗ id)(ρ_g)] − σ_z^⊗t ⊗ tr_{nt}(ρ_g)‖₁`.
pub fn joint_closeness_exact(partition: &QubitPartition, rho_g: &DensityMatrix, t: usize, q: usize) -> Result<f64> {
    let moment = joint_moment_exact(partition, rho_g, t, q)?;
    let target = joint_target(partition, rho_g, t, q)?;
    Ok(linalg::trace_norm_hermitian(&(moment - target)))
}

/// `tr(O P_σ†)` for every σ, a helper for covariance checks.
pub fn permutation_overlaps(o: &CMatrix, d: usize, t: usize) -> Result<Vec<C64>> {
    Permutation::all(t)
        .iter()
        .map(|p| Ok(PermutationOperator::new(p, d)?.trace_against(o)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::linalg::max_abs_diff;
    use crate::qcore::PureState;

    #[test]
    fn cycle_examples() {
        assert_eq!(Permutation::identity(3).cycles(), 3);
        assert_eq!(Permutation::transposition(2, 0, 1).cycles(), 1);
        assert_eq!(Permutation::cyclic_shift(3).cycles(), 1);
    }

    #[test]
    fn enumeration_is_rank_ordered() {
        for t in 1..=5 {
            let all = Permutation::all(t);
            assert_eq!(all.len() as u64, factorial(t));
            for (r, p) in all.iter().enumerate() {
                assert_eq!(p.rank(), r);
            }
        }
    }

    #[test]
    fn operator_composition_matches_group() {
        let d = 2;
        let a = Permutation::new(vec![1, 2, 0]).unwrap();
        let b = Permutation::transposition(3, 0, 2);
        let pa = PermutationOperator::new(&a, d).unwrap().matrix();
        let pb = PermutationOperator::new(&b, d).unwrap().matrix();
        let pab = PermutationOperator::new(&a.compose(&b), d).unwrap().matrix();
        assert!(max_abs_diff(&(&pa * &pb), &pab) < 1e-15);
    }

    #[test]
    fn permutation_operator_moves_slots() {
        // P_π |x, y, z⟩ with π = (0→1→2→0) puts slot-0 content in slot 1
        let d = 3;
        let p = Permutation::cyclic_shift(3);
        let op = PermutationOperator::new(&p, d).unwrap();
        let (x, y, z) = (0usize, 1usize, 2usize);
        let input = (x * d + y) * d + z;
        let out = (z * d + x) * d + y;
        assert_eq!(op.map()[input], out);
    }

    #[test]
    fn weingarten_examples() {
        assert!((weingarten(&Permutation::identity(1), 5).unwrap() - 0.2).abs() < 1e-15);
        let e = weingarten(&Permutation::identity(2), 4).unwrap();
        let s = weingarten(&Permutation::transposition(2, 0, 1), 4).unwrap();
        assert!((e - 1.0 / 15.0).abs() < 1e-15);
        assert!((s + 1.0 / 60.0).abs() < 1e-15);
        assert!((sum_abs_weingarten(4, 2).unwrap() - 1.0 / 12.0).abs() < 1e-15);
        assert!(matches!(WeingartenTable::new(2, 3), Err(Error::Unsupported(_))));
        assert!(matches!(WeingartenTable::new(8, 7), Err(Error::SizeLimit(_))));
    }

    #[test]
    fn nonidentity_cycle_sum() {
        for d in 1..6 {
            assert_eq!(sum_cycles_nonidentity(d, 2), d as f64);
            for t in 1..=5 {
                assert!((sum_cycles_nonidentity(d, t) - sum_cycles_nonidentity_closed(d, t)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn first_moment_is_depolarizing() {
        let o = CMatrix::from_fn(4, 4, |i, j| C64::new((i + 2 * j) as f64, i as f64 - j as f64));
        let r = haar_moment(&o, 4, 1).unwrap();
        let want = CMatrix::identity(4, 4) * (linalg::trace(&o) / 4.0);
        assert!(max_abs_diff(&r, &want) < 1e-13);
    }

    #[test]
    fn twirl_preserves_permutation_overlaps() {
        let d = 3;
        let t = 3;
        let dim = 27;
        let o = CMatrix::from_fn(dim, dim, |i, j| C64::new(((i * 7 + j * 3) % 11) as f64, ((i + j) % 5) as f64));
        let r = haar_moment(&o, d, t).unwrap();
        let before = permutation_overlaps(&o, d, t).unwrap();
        let after = permutation_overlaps(&r, d, t).unwrap();
        for (a, b) in before.iter().zip(&after) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn structured_moment_agrees_with_generic_twirl() {
        let part = QubitPartition::new(1, 1, 1).unwrap();
        let psi = PureState::normalized(nalgebra::DVector::from_vec(vec![C64::new(0.6, 0.0), C64::new(0.0, 0.8)])).unwrap();
        let rho = psi.to_density();
        for t in 1..=2 {
            let fast = encrypted_moment_exact(&part, &rho, t).unwrap();
            let padded = part.pad(&rho).unwrap();
            let mut pt = padded.matrix().clone();
            for _ in 1..t {
                pt = linalg::kron(&pt, padded.matrix());
            }
            let slow = haar_moment(&pt, part.dim(), t).unwrap();
            assert!(max_abs_diff(&fast, &slow) < 1e-12);
        }
    }

    #[test]
    fn closeness_first_moment_is_zero() {
        let part = QubitPartition::new(2, 1, 0).unwrap();
        let rho = DensityMatrix::basis(2, 3).unwrap();
        assert!(closeness_exact(&part, &rho, 1).unwrap() < 1e-12);
    }
}
