//! Adversary games and meta-information probes.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensembles::{haar_state, seeded_rng, ScramblerSpec, SecretKey};
use crate::error::{Error, Result};
use crate::moments::{self, Permutation};
use crate::pqas::{Ciphertext, Pqas};
use crate::qcore::linalg::{self, CMatrix, C64};
use crate::qcore::{check_cap, DensityMatrix, PureState, QubitPartition, UnitaryMatrix};
use crate::stats::{rate, Estimate};

pub const MAX_LR_QUERIES: usize = 8;
pub const DEFAULT_DELTA: f64 = 0.1;
pub const DEFAULT_SHOTS: u64 = 10_000;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AttackReport {
    pub trials: usize,
    pub success: Estimate,
    /// `2 Pr[success] − 1`.
    pub advantage: f64,
    pub advantage_stderr: f64,
    pub abstained: f64,
}

impl AttackReport {
    fn from_successes(successes: usize, trials: usize, abstentions: usize) -> Self {
        let success = rate(successes, trials);
        AttackReport {
            trials,
            success,
            advantage: 2.0 * success.mean - 1.0,
            advantage_stderr: 2.0 * success.stderr,
            abstained: abstentions as f64 / trials.max(1) as f64,
        }
    }
}

/// `tr(P_π ρ_1 ⊗ … ⊗ ρ_t)`: a product of traces over the cycles
/// `(k, πk, π²k, …)` of `tr(ρ_{π^{L−1}k} ⋯ ρ_{πk} ρ_k)`.
pub fn permutation_expectation(states: &[&CMatrix], p: &Permutation) -> C64 {
    CycleTraces::new(states).expectation(p)
}

/// Memoized cycle traces. Cycles of length up to four cost at most one
/// cached pair product plus an `O(d²)` contraction.
struct CycleTraces<'a> {
    states: &'a [&'a CMatrix],
    pairs: HashMap<(usize, usize), CMatrix>,
    cycles: HashMap<Vec<usize>, C64>,
}

impl<'a> CycleTraces<'a> {
    fn new(states: &'a [&'a CMatrix]) -> Self {
        CycleTraces { states, pairs: HashMap::new(), cycles: HashMap::new() }
    }

    /// `ρ_a ρ_b`.
    fn pair(&mut self, a: usize, b: usize) -> &CMatrix {
        let s = self.states;
        self.pairs.entry((a, b)).or_insert_with(|| s[a] * s[b])
    }

    /// `tr(ρ_{c_{L−1}} ⋯ ρ_{c_1} ρ_{c_0})`.
    fn cycle(&mut self, c: &[usize]) -> C64 {
        // traces are invariant under rotation, so key on the rotation starting at the minimum
        let start = (0..c.len()).min_by_key(|&i| c[i]).unwrap_or(0);
        let key: Vec<usize> = c[start..].iter().chain(&c[..start]).copied().collect();
        if let Some(&v) = self.cycles.get(&key) {
            return v;
        }
        let s = self.states;
        let v = match key[..] {
            [a] => linalg::trace(s[a]),
            [a, b] => linalg::trace_of_product(s[b], s[a]),
            [a, b, c] => {
                let ba = self.pair(b, a).clone();
                linalg::trace_of_product(s[c], &ba)
            }
            [a, b, c, d] => {
                let ba = self.pair(b, a).clone();
                linalg::trace_of_product(self.pair(d, c), &ba)
            }
            _ => {
                let mut acc = s[key[0]].clone();
                for &k in &key[1..] {
                    acc = s[k] * acc;
                }
                linalg::trace(&acc)
            }
        };
        self.cycles.insert(key, v);
        v
    }

    fn expectation(&mut self, p: &Permutation) -> C64 {
        p.cycle_decomposition().iter().map(|c| self.cycle(c)).product()
    }
}

/// Probability that sequential SWAP tests on `pairs` all accept, for the
/// product state `ρ_1 ⊗ … ⊗ ρ_t`.
///
/// With accept projectors `A_i = (I + S_i)/2` the probability is
/// `4^−k Σ_{a,b} tr(L(b)⁻¹ L(a) ρ)` where `L(a) = S_k^{a_k} ⋯ S_1^{a_1}`.
pub fn swap_sequence_accept_prob(states: &[&CMatrix], pairs: &[(usize, usize)]) -> Result<f64> {
    let t = states.len();
    if t == 0 || t > MAX_LR_QUERIES {
        return Err(Error::param("t", format!("need 1..={MAX_LR_QUERIES} states, got {t}")));
    }
    let d = states[0].nrows();
    if let Some(s) = states.iter().find(|s| s.nrows() != d) {
        return Err(Error::DimensionMismatch { expected: d, found: s.nrows() });
    }
    if let Some(&(i, j)) = pairs.iter().find(|&&(i, j)| i >= t || j >= t || i == j) {
        return Err(Error::param("pairs", format!("invalid pair ({i}, {j}) for {t} states")));
    }
    let k = pairs.len();
    let words: Vec<Permutation> = (0..1usize << k)
        .map(|a| {
            (0..k).fold(Permutation::identity(t), |acc, i| {
                if a >> i & 1 == 1 {
                    Permutation::transposition(t, pairs[i].0, pairs[i].1).compose(&acc)
                } else {
                    acc
                }
            })
        })
        .collect();
    let mut hist: HashMap<Vec<usize>, usize> = HashMap::new();
    for lb in &words {
        let inv = lb.inverse();
        for la in &words {
            *hist.entry(inv.compose(la).images().to_vec()).or_default() += 1;
        }
    }
    let mut traces = CycleTraces::new(states);
    let mut hist: Vec<(Vec<usize>, usize)> = hist.into_iter().collect();
    hist.sort();
    let total: C64 = hist
        .iter()
        .map(|(img, count)| {
            let p = Permutation::new(img.clone()).expect("composition of permutations");
            traces.expectation(&p) * *count as f64
        })
        .sum();
    Ok((total.re / 4f64.powi(k as i32)).clamp(0.0, 1.0))
}

/// `(0,1), (1,2), …, (t−1,0)`; a single pair for `t = 2`.
pub fn ring_pairs(t: usize) -> Vec<(usize, usize)> {
    match t {
        0 | 1 => vec![],
        2 => vec![(0, 1)],
        _ => (0..t).map(|i| (i, (i + 1) % t)).collect(),
    }
}

#[derive(Clone, Debug)]
pub struct LrGameConfig {
    pub partition: QubitPartition,
    pub spec: ScramblerSpec,
    pub left: Vec<PureState>,
    pub right: Vec<PureState>,
    pub trials: usize,
    pub seed: u64,
}

impl LrGameConfig {
    /// Left: `t` copies of `|0⟩`. Right: `|0⟩, |1⟩, …, |t−1⟩`.
    pub fn standard(partition: QubitPartition, t: usize, trials: usize, seed: u64) -> Result<Self> {
        if t > 1 << partition.n {
            return Err(Error::param("t", format!("{t} orthogonal messages need more than {} message qubits", partition.n)));
        }
        let left = (0..t).map(|_| PureState::basis(partition.n, 0)).collect::<Result<_>>()?;
        let right = (0..t).map(|i| PureState::basis(partition.n, i)).collect::<Result<_>>()?;
        Ok(LrGameConfig { partition, spec: ScramblerSpec::haar_exact(), left, right, trials, seed })
    }

    pub fn t(&self) -> usize {
        self.left.len()
    }

    fn validate(&self) -> Result<()> {
        let t = self.t();
        if t == 0 || t > MAX_LR_QUERIES {
            return Err(Error::param("t", format!("need 1..={MAX_LR_QUERIES} queries")));
        }
        if self.right.len() != t {
            return Err(Error::param("right", "left and right lists differ in length"));
        }
        let dn = 1usize << self.partition.n;
        if let Some(s) = self.left.iter().chain(&self.right).find(|s| s.dim() != dn) {
            return Err(Error::DimensionMismatch { expected: dn, found: s.dim() });
        }
        if self.trials == 0 {
            return Err(Error::param("trials", "must be positive"));
        }
        Ok(())
    }
}

/// Left-or-right chosen-plaintext game against a SWAP-test adversary.
///
/// The adversary runs SWAP tests around the ring of received ciphertexts and
/// answers "left" iff every test accepts. With one query it guesses.
pub fn lr_cpa_game(cfg: &LrGameConfig) -> Result<AttackReport> {
    cfg.validate()?;
    let t = cfg.t();
    let scheme = Pqas::new(cfg.partition, cfg.spec);
    let pairs = ring_pairs(t);
    let wins: Vec<bool> = (0..cfg.trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = seeded_rng(cfg.seed, "lr-cpa", &[i as u64]);
            let key = SecretKey::derive(cfg.seed, "lr-cpa", i as u64);
            let b: bool = rng.gen();
            let msgs = if b { &cfg.right } else { &cfg.left };
            let u = scheme.scrambler(&key)?;
            let mut cts: Vec<Ciphertext> = Vec::with_capacity(t);
            for (j, msg) in msgs.iter().enumerate() {
                let c = match msgs[..j].iter().position(|x| x == msg) {
                    Some(k) => cts[k].clone(),
                    None => scheme.encrypt_pure_with(msg, &u)?,
                };
                cts.push(c);
            }
            let guess_right = if t == 1 {
                rng.gen::<bool>()
            } else {
                let mats: Vec<&CMatrix> = cts.iter().map(|c| c.state().matrix()).collect();
                let p_all = swap_sequence_accept_prob(&mats, &pairs)?;
                rng.gen::<f64>() >= p_all
            };
            Ok(guess_right == b)
        })
        .collect::<Result<_>>()?;
    Ok(AttackReport::from_successes(wins.iter().filter(|&&w| w).count(), cfg.trials, 0))
}

/// Purity estimate `2 Pr[accept] − 1` from one SWAP test per disjoint pair of copies.
pub fn purity_probe<C: AsRef<DensityMatrix>, R: Rng + ?Sized>(copies: &[C], rng: &mut R) -> Result<Estimate> {
    if copies.len() < 2 || copies.len() % 2 == 1 {
        return Err(Error::param("copies", format!("need an even number of at least two copies, got {}", copies.len())));
    }
    let pairs = copies.len() / 2;
    let mut accepts = 0;
    for pair in copies.chunks(2) {
        let p = crate::qcore::swap_test_accept(pair[0].as_ref(), pair[1].as_ref())?;
        if rng.gen::<f64>() < p {
            accepts += 1;
        }
    }
    let r = rate(accepts, pairs);
    Ok(Estimate { mean: 2.0 * r.mean - 1.0, stderr: 2.0 * r.stderr, samples: pairs })
}

impl AsRef<DensityMatrix> for Ciphertext {
    fn as_ref(&self) -> &DensityMatrix {
        self.state()
    }
}

impl AsRef<DensityMatrix> for DensityMatrix {
    fn as_ref(&self) -> &DensityMatrix {
        self
    }
}

/// Bell-basis rotation for pairs `(i, b+i)` on `2b` qubits: CNOT then H on
/// the first qubit of each pair.
fn bell_rotation(b: usize) -> CMatrix {
    let q = 2 * b;
    let d = 1usize << q;
    let bit = |k: usize| 1usize << (q - 1 - k);
    let mut w = linalg::identity(d);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..b {
        let (c, t) = (bit(i), bit(b + i));
        for r in (0..d).filter(|r| r & c != 0 && r & t == 0) {
            w.swap_rows(r, r | t);
        }
        for r in (0..d).filter(|r| r & c == 0) {
            for col in 0..d {
                let (x, y) = (w[(r, col)], w[(r | c, col)]);
                w[(r, col)] = (x + y) * s;
                w[(r | c, col)] = (x - y) * s;
            }
        }
    }
    w
}

fn prefix_pairs(state: &DensityMatrix, b: usize) -> Result<(DensityMatrix, usize)> {
    let q = state.qubits();
    if q % 2 == 1 {
        return Err(Error::param("state", "needs two halves of equal length"));
    }
    let h = q / 2;
    if b == 0 || b > h {
        return Err(Error::param("b", format!("prefix length {b} outside 1..={h}")));
    }
    Ok((state.partial_trace(&[b, h - b, b, h - b], &[1, 3])?, h))
}

/// Exact probability that the first `b` bits of `ν = x AND y` have odd parity.
pub fn bell_odd_parity_prob(state: &DensityMatrix, b: usize) -> Result<f64> {
    let (reduced, _) = prefix_pairs(state, b)?;
    let w = bell_rotation(b);
    let rotated = &w * reduced.matrix() * w.adjoint();
    let mut odd = 0.0;
    for idx in 0..rotated.nrows() {
        let x = idx >> b;
        let y = idx & ((1 << b) - 1);
        if (x & y).count_ones() % 2 == 1 {
            odd += rotated[(idx, idx)].re;
        }
    }
    Ok(odd.clamp(0.0, 1.0))
}

/// Analytic mean of the Bell-parity estimator, `1 − 2 P_odd(b)`.
pub fn bell_parity_expectation(state: &DensityMatrix, b: usize) -> Result<f64> {
    Ok(1.0 - 2.0 * bell_odd_parity_prob(state, b)?)
}

/// Sampled `Z_b = 1 − 2 P̂_odd(b)` from `shots` transversal Bell measurements.
pub fn bell_parity_purity<R: Rng + ?Sized>(state: &DensityMatrix, b: usize, shots: u64, rng: &mut R) -> Result<Estimate> {
    if shots == 0 {
        return Err(Error::param("shots", "must be positive"));
    }
    let p = bell_odd_parity_prob(state, b)?;
    let odd = Binomial::new(shots, p).map_err(|e| Error::param("shots", e.to_string()))?.sample(rng);
    let r = odd as f64 / shots as f64;
    Ok(Estimate {
        mean: 1.0 - 2.0 * r,
        stderr: 2.0 * (r * (1.0 - r) / shots as f64).sqrt(),
        samples: shots as usize,
    })
}

/// The first `qubits` qubits of a stream of back-to-back ciphertexts.
pub fn ciphertext_stream(ciphertext: &DensityMatrix, qubits: usize) -> Result<DensityMatrix> {
    check_cap(qubits)?;
    let z = ciphertext.qubits();
    if z == 0 {
        return Err(Error::param("ciphertext", "empty register"));
    }
    let mut out = DensityMatrix::maximally_mixed(0)?;
    let mut remaining = qubits;
    while remaining > 0 {
        let piece = if z <= remaining {
            ciphertext.clone()
        } else {
            ciphertext.partial_trace(&[remaining, z - remaining], &[1])?
        };
        remaining -= piece.qubits();
        out = out.tensor(&piece)?;
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QubitCountOutcome {
    /// `Z_{n s′}` for `s′ = 1..=S_max`.
    pub z_values: Vec<f64>,
    /// Smallest `s′` with `Z ≥ 1 − δ`; the operational decision.
    pub smallest: Option<usize>,
    /// Largest qualifying `s′`, reported for comparison.
    pub largest: Option<usize>,
}

fn factorial(n: usize) -> usize {
    (1..=n).product()
}

/// Intercepted-qubit count `2 n S_max!`.
pub fn intercepted_qubits(n: usize, s_max: usize) -> usize {
    2 * n * factorial(s_max)
}

/// Bell-parity qubit-number attack on an intercepted stream.
pub fn qubit_count_attack<R: Rng + ?Sized>(
    intercepted: &DensityMatrix,
    n: usize,
    s_max: usize,
    delta: f64,
    shots: u64,
    rng: &mut R,
) -> Result<QubitCountOutcome> {
    if s_max == 0 || s_max > 3 {
        return Err(Error::param("s_max", "must be in 1..=3"));
    }
    if n == 0 || n > 2 {
        return Err(Error::param("n", "must be in 1..=2"));
    }
    let need = intercepted_qubits(n, s_max);
    if intercepted.qubits() < need {
        return Err(Error::param("intercepted", format!("need {need} qubits, got {}", intercepted.qubits())));
    }
    let state = if intercepted.qubits() > need {
        intercepted.partial_trace(&[need, intercepted.qubits() - need], &[1])?
    } else {
        intercepted.clone()
    };
    let z_values = (1..=s_max)
        .map(|s| Ok(bell_parity_purity(&state, n * s, shots, rng)?.mean))
        .collect::<Result<Vec<f64>>>()?;
    let qualifying: Vec<usize> = (1..=s_max).filter(|&s| z_values[s - 1] >= 1.0 - delta).collect();
    Ok(QubitCountOutcome {
        smallest: qualifying.first().copied(),
        largest: qualifying.last().copied(),
        z_values,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QubitCountReport {
    pub trials: usize,
    pub true_s: usize,
    /// Success of the smallest-qualifying rule.
    pub correct: Estimate,
    /// Success of the largest-qualifying rule.
    pub correct_largest: Estimate,
    pub abstained: Estimate,
}

#[derive(Clone, Copy, Debug)]
pub struct QubitCountGame {
    pub n: usize,
    pub true_s: usize,
    pub s_max: usize,
    pub l: usize,
    pub m: usize,
    pub spec: ScramblerSpec,
    pub delta: f64,
    pub shots: u64,
    pub trials: usize,
    pub seed: u64,
}

/// Each trial encrypts a fresh Haar message of `n·s` qubits under a fresh key
/// and streams identical ciphertexts to the adversary.
pub fn qubit_count_game(g: &QubitCountGame) -> Result<QubitCountReport> {
    let partition = QubitPartition::new(g.n * g.true_s, g.l, g.m)?;
    let scheme = Pqas::new(partition, g.spec);
    let need = intercepted_qubits(g.n, g.s_max);
    check_cap(need)?;
    let outcomes: Vec<QubitCountOutcome> = (0..g.trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = seeded_rng(g.seed, "qubit-count", &[i as u64]);
            let key = SecretKey::derive(g.seed, "qubit-count", i as u64);
            let msg = haar_state(partition.n, &mut rng)?.to_density();
            let c = scheme.encrypt(&msg, &key)?;
            let stream = ciphertext_stream(c.state(), need)?;
            qubit_count_attack(&stream, g.n, g.s_max, g.delta, g.shots, &mut rng)
        })
        .collect::<Result<_>>()?;
    let count = |f: &dyn Fn(&QubitCountOutcome) -> bool| outcomes.iter().filter(|o| f(o)).count();
    Ok(QubitCountReport {
        trials: g.trials,
        true_s: g.true_s,
        correct: rate(count(&|o| o.smallest == Some(g.true_s)), g.trials),
        correct_largest: rate(count(&|o| o.largest == Some(g.true_s)), g.trials),
        abstained: rate(count(&|o| o.smallest.is_none()), g.trials),
    })
}

/// Declares 1 ("all plaintexts equal") iff SWAP tests on the disjoint pairs
/// `(0,1), (2,3), …` all accept, otherwise 2.
pub fn multi_state_attack<C: AsRef<DensityMatrix>, R: Rng + ?Sized>(ciphertexts: &[C], rng: &mut R) -> Result<usize> {
    if ciphertexts.len() < 2 {
        return Err(Error::param("ciphertexts", "need at least two ciphertexts"));
    }
    for pair in ciphertexts.chunks_exact(2) {
        let p = crate::qcore::swap_test_accept(pair[0].as_ref(), pair[1].as_ref())?;
        if rng.gen::<f64>() >= p {
            return Ok(2);
        }
    }
    Ok(1)
}

/// Multi-state game: hypothesis 1 sends `count` encryptions of `|0⟩`,
/// hypothesis 2 alternates `|0⟩` and `|1⟩`.
pub fn multi_state_game(partition: &QubitPartition, spec: &ScramblerSpec, count: usize, trials: usize, seed: u64) -> Result<AttackReport> {
    if count < 2 {
        return Err(Error::param("count", "need at least two ciphertexts"));
    }
    let scheme = Pqas::new(*partition, *spec);
    let zero = DensityMatrix::basis(partition.n, 0)?;
    let one = DensityMatrix::basis(partition.n, 1)?;
    let wins: Vec<bool> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = seeded_rng(seed, "multistate", &[i as u64]);
            let key = SecretKey::derive(seed, "multistate", i as u64);
            let b = if rng.gen::<bool>() { 2 } else { 1 };
            let u = scheme.scrambler(&key)?;
            let c0 = scheme.encrypt_with(&zero, &u)?;
            let c1 = scheme.encrypt_with(&one, &u)?;
            let cts: Vec<&Ciphertext> = (0..count).map(|k| if b == 2 && k % 2 == 1 { &c1 } else { &c0 }).collect();
            Ok(multi_state_attack(&cts, &mut rng)? == b)
        })
        .collect::<Result<_>>()?;
    Ok(AttackReport::from_successes(wins.iter().filter(|&&w| w).count(), trials, 0))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecoyReport {
    pub t: usize,
    /// `‖E[Φ(ρ)^⊗t] − σ_z^⊗t‖₁` against maximally mixed decoys.
    pub closeness: f64,
    /// Entanglement entropy (bits) across the middle cut of one ciphertext.
    pub ciphertext_cut_entropy: f64,
    /// The same quantity for a maximally mixed decoy.
    pub decoy_cut_entropy: f64,
    pub note: String,
}

/// Distinguishability of genuine ciphertexts of `|0…0⟩` from maximally mixed decoys.
pub fn decoy_indistinguishability(partition: &QubitPartition, t: usize, key: &SecretKey) -> Result<DecoyReport> {
    let rho = DensityMatrix::basis(partition.n, 0)?;
    let closeness = moments::closeness_exact(partition, &rho, t)?;
    let c = Pqas::new(*partition, ScramblerSpec::haar_exact()).encrypt(&rho, key)?;
    let z = partition.z();
    let cut = [z / 2, z - z / 2];
    let ciphertext_cut_entropy = c.state().partial_trace(&cut, &[1])?.vn_entropy();
    let decoy_cut_entropy = DensityMatrix::maximally_mixed(z)?.partial_trace(&cut, &[1])?.vn_entropy();
    Ok(DecoyReport {
        t,
        closeness,
        ciphertext_cut_entropy,
        decoy_cut_entropy,
        note: "maximally mixed decoys cost no preparation: send qubits entangled with discarded partners or drawn from fresh classical randomness".into(),
    })
}

/// Encrypts a batch under one key, for probes that need many copies.
pub fn encrypt_copies(scheme: &Pqas, rho: &DensityMatrix, u: &UnitaryMatrix, copies: usize) -> Result<Vec<Ciphertext>> {
    let c = scheme.encrypt_with(rho, u)?;
    Ok(vec![c; copies])
}
