//! Keyed and random unitary samplers.
//!
//! Keyed samplers draw from a ChaCha20 stream whose 32-byte seed is
//! `SHA-256(len(domain) || domain || key material)`, with the length as a
//! little-endian u64. Complex Gaussian entries are drawn row-major, real part
//! before imaginary part, using `rand_distr::StandardNormal`. The generator
//! identity is [`GENERATOR_ID`].

use nalgebra::DVector;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::qcore::linalg::{self, CMatrix, C64};
use crate::qcore::{check_cap, DensityMatrix, PureState, UnitaryMatrix};

pub const GENERATOR_ID: &str = "chacha20-sha256-v1";

/// Three 16-byte seeds: PRU factor, 4-design factor and 2-design factor.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub struct SecretKey {
    pub k1: [u8; 16],
    pub k2: [u8; 16],
    pub k3: [u8; 16],
}

impl SecretKey {
    pub const BITS: usize = 384;

    pub fn from_bytes(b: [u8; 48]) -> Self {
        let mut k = SecretKey { k1: [0; 16], k2: [0; 16], k3: [0; 16] };
        k.k1.copy_from_slice(&b[..16]);
        k.k2.copy_from_slice(&b[16..32]);
        k.k3.copy_from_slice(&b[32..]);
        k
    }

    pub fn to_bytes(&self) -> [u8; 48] {
        let mut b = [0u8; 48];
        b[..16].copy_from_slice(&self.k1);
        b[16..32].copy_from_slice(&self.k2);
        b[32..].copy_from_slice(&self.k3);
        b
    }

    pub fn random<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        let mut b = [0u8; 48];
        rng.fill_bytes(&mut b);
        Self::from_bytes(b)
    }

    /// Deterministic key number `index` of a labelled family.
    pub fn derive(master: u64, label: &str, index: u64) -> Self {
        let mut rng = seeded_rng(master, &format!("key/{label}"), &[index]);
        Self::random(&mut rng)
    }
}

fn hash_seed(domain: &str, material: &[u8]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update((domain.len() as u64).to_le_bytes());
    h.update(domain.as_bytes());
    h.update(material);
    h.finalize().into()
}

/// Keyed pseudorandom stream for a sampling domain.
pub fn keyed_stream(domain: &str, material: &[u8]) -> ChaCha20Rng {
    ChaCha20Rng::from_seed(hash_seed(domain, material))
}

/// Stream for `(master seed, label, indices)`; used for per-trial randomness.
pub fn seeded_rng(master: u64, label: &str, indices: &[u64]) -> ChaCha20Rng {
    let mut material = master.to_le_bytes().to_vec();
    for i in indices {
        material.extend_from_slice(&i.to_le_bytes());
    }
    keyed_stream(label, &material)
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im)
}

fn ginibre<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CMatrix {
    let mut g = CMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            g[(i, j)] = gaussian(rng);
        }
    }
    g
}

fn haar_matrix<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CMatrix {
    let qr = ginibre(d, rng).qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..d {
        let rjj = r[(j, j)];
        let phase = if rjj.norm() > 0.0 { rjj / rjj.norm() } else { C64::new(1.0, 0.0) };
        for i in 0..d {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// Haar-random unitary on `z` qubits (Ginibre, QR, phase-fixed diagonal).
pub fn sample_haar<R: Rng + ?Sized>(z: usize, rng: &mut R) -> Result<UnitaryMatrix> {
    check_cap(z)?;
    Ok(UnitaryMatrix::from_raw(haar_matrix(1 << z, rng)))
}

/// Haar-random pure state.
pub fn haar_state<R: Rng + ?Sized>(qubits: usize, rng: &mut R) -> Result<PureState> {
    check_cap(qubits)?;
    let v = DVector::from_fn(1 << qubits, |_, _| gaussian(rng));
    PureState::normalized(v)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Gate {
    H(usize),
    S(usize),
    Cnot(usize, usize),
    Swap(usize, usize),
}

/// Pauli operator modulo phase, as x and z bit vectors.
#[derive(Clone, Debug, PartialEq, Eq)]
struct Pauli {
    x: Vec<bool>,
    z: Vec<bool>,
}

impl Pauli {
    fn anticommutes(&self, o: &Pauli) -> bool {
        let s = (0..self.x.len()).filter(|&j| (self.x[j] && o.z[j]) ^ (self.z[j] && o.x[j])).count();
        s % 2 == 1
    }

    fn conjugate(&mut self, g: Gate) {
        match g {
            Gate::H(q) => std::mem::swap(&mut self.x[q], &mut self.z[q]),
            Gate::S(q) => self.z[q] ^= self.x[q],
            Gate::Cnot(c, t) => {
                self.x[t] ^= self.x[c];
                self.z[c] ^= self.z[t];
            }
            Gate::Swap(p, q) => {
                self.x.swap(p, q);
                self.z.swap(p, q);
            }
        }
    }

    fn is_single(&self, q: usize, x: bool, z: bool) -> bool {
        (0..self.x.len()).all(|j| if j == q { self.x[j] == x && self.z[j] == z } else { !self.x[j] && !self.z[j] })
    }
}

fn random_pauli<R: Rng + ?Sized>(n: usize, from: usize, rng: &mut R) -> Pauli {
    let mut p = Pauli { x: vec![false; n], z: vec![false; n] };
    for j in from..n {
        p.x[j] = rng.gen();
        p.z[j] = rng.gen();
    }
    p
}

fn emit(g: Gate, gates: &mut Vec<Gate>, a: &mut Pauli, b: &mut Pauli) {
    gates.push(g);
    a.conjugate(g);
    b.conjugate(g);
}

/// Gates `G` on qubits `k..` with `G a G† ∝ X_k` and `G b G† ∝ Z_k`.
fn sweep(k: usize, mut a: Pauli, mut b: Pauli) -> Vec<Gate> {
    let n = a.x.len();
    let mut gates = Vec::new();
    for j in k..n {
        if a.z[j] {
            let g = if a.x[j] { Gate::S(j) } else { Gate::H(j) };
            emit(g, &mut gates, &mut a, &mut b);
        }
    }
    let support: Vec<usize> = (k..n).filter(|&j| a.x[j]).collect();
    let j0 = support[0];
    for &j in &support[1..] {
        emit(Gate::Cnot(j0, j), &mut gates, &mut a, &mut b);
    }
    if j0 != k {
        emit(Gate::Swap(j0, k), &mut gates, &mut a, &mut b);
    }
    debug_assert!(a.is_single(k, true, false));
    if !b.is_single(k, false, true) {
        emit(Gate::H(k), &mut gates, &mut a, &mut b);
        for j in k..n {
            if b.z[j] {
                // b has x_k = 1 here, so qubit k only ever receives S
                let g = if b.x[j] { Gate::S(j) } else { Gate::H(j) };
                emit(g, &mut gates, &mut a, &mut b);
            }
        }
        for j in k + 1..n {
            if b.x[j] {
                emit(Gate::Cnot(k, j), &mut gates, &mut a, &mut b);
            }
        }
        emit(Gate::H(k), &mut gates, &mut a, &mut b);
    }
    debug_assert!(a.is_single(k, true, false) && b.is_single(k, false, true));
    gates
}

/// Left-multiplies `m` by the adjoint of `g`.
fn apply_gate_adjoint(m: &mut CMatrix, g: Gate, n: usize) {
    let bit = |q: usize| 1usize << (n - 1 - q);
    let d = m.nrows();
    match g {
        Gate::H(q) => {
            let s = std::f64::consts::FRAC_1_SQRT_2;
            for r in (0..d).filter(|r| r & bit(q) == 0) {
                let r1 = r | bit(q);
                for c in 0..d {
                    let (x, y) = (m[(r, c)], m[(r1, c)]);
                    m[(r, c)] = (x + y) * s;
                    m[(r1, c)] = (x - y) * s;
                }
            }
        }
        Gate::S(q) => {
            let mi = C64::new(0.0, -1.0);
            for r in (0..d).filter(|r| r & bit(q) != 0) {
                for c in 0..d {
                    m[(r, c)] *= mi;
                }
            }
        }
        Gate::Cnot(c, t) => {
            for r in (0..d).filter(|r| r & bit(c) != 0 && r & bit(t) == 0) {
                m.swap_rows(r, r | bit(t));
            }
        }
        Gate::Swap(p, q) => {
            for r in (0..d).filter(|r| r & bit(p) != 0 && r & bit(q) == 0) {
                m.swap_rows(r, (r & !bit(p)) | bit(q));
            }
        }
    }
}

/// Uniformly random element of the `z`-qubit Clifford group (modulo global
/// phase) as a dense matrix.
///
/// For each qubit `k` a uniformly random anticommuting Pauli pair `(a, b)` on
/// qubits `k..` is drawn and a gate sweep mapping it to `(X_k, Z_k)` is
/// recorded. The product of the inverted sweeps, times a uniform random Pauli
/// that fixes signs, is uniform over the group.
pub fn sample_clifford<R: Rng + ?Sized>(z: usize, rng: &mut R) -> Result<UnitaryMatrix> {
    check_cap(z)?;
    let mut sweeps = Vec::with_capacity(z);
    for k in 0..z {
        let a = loop {
            let p = random_pauli(z, k, rng);
            if (k..z).any(|j| p.x[j] || p.z[j]) {
                break p;
            }
        };
        let b = loop {
            let p = random_pauli(z, k, rng);
            if a.anticommutes(&p) {
                break p;
            }
        };
        sweeps.push(sweep(k, a, b));
    }
    let signs: Vec<u8> = (0..z).map(|_| rng.gen_range(0..4u8)).collect();
    let mut m = linalg::pauli_string(&signs);
    for gates in sweeps.iter().rev() {
        for &g in gates.iter().rev() {
            apply_gate_adjoint(&mut m, g, z);
        }
    }
    Ok(UnitaryMatrix::from_raw(m))
}

/// Keyed 4-design factor: an exact Haar sample seeded by `seed`.
pub fn sample_design4_surrogate(z: usize, seed: &[u8]) -> Result<UnitaryMatrix> {
    check_cap(z)?;
    let mut rng = keyed_stream("design4", seed);
    sample_haar(z, &mut rng)
}

/// Keyed exact 2-design factor: a uniformly random Clifford seeded by `seed`.
pub fn sample_design2(z: usize, seed: &[u8]) -> Result<UnitaryMatrix> {
    check_cap(z)?;
    let mut rng = keyed_stream("design2", seed);
    sample_clifford(z, &mut rng)
}

/// Heuristic PRU stand-in: a brickwork of keyed Haar two-qubit gates.
///
/// Even layers act on pairs `(0,1), (2,3), …`, odd layers on `(1,2), (3,4), …`.
/// With two qubits every layer acts on `(0,1)`; with one qubit each layer is a
/// single keyed 2×2 Haar gate. Gates are drawn layer by layer, left to right.
pub fn sample_pru_surrogate(z: usize, seed: &[u8], depth: usize) -> Result<UnitaryMatrix> {
    check_cap(z)?;
    if depth == 0 {
        return Err(Error::param("pru_depth", "must be at least 1"));
    }
    let mut rng = keyed_stream("pru-brickwork", seed);
    let d = 1usize << z;
    let mut u = linalg::identity(d);
    if z <= 1 {
        for _ in 0..depth {
            u = haar_matrix(d, &mut rng) * u;
        }
        return Ok(UnitaryMatrix::from_raw(u));
    }
    for layer in 0..depth {
        let start = if z == 2 { 0 } else { layer % 2 };
        let mut q = start;
        while q + 1 < z {
            let g = haar_matrix(4, &mut rng);
            u = linalg::left_apply(&u, &g, &[q, 2, z - q - 2], 1)?;
            q += 2;
        }
    }
    Ok(UnitaryMatrix::from_raw(u))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScramblerMode {
    /// `V_pru(k1) · V4(k2) · V2(k3)`.
    Composed,
    /// One keyed Haar unitary; the reference ensemble for theorem checks.
    HaarExact,
    PruOnly,
}

impl ScramblerMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScramblerMode::Composed => "composed",
            ScramblerMode::HaarExact => "haar_exact",
            ScramblerMode::PruOnly => "pru_only",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "composed" => Ok(ScramblerMode::Composed),
            "haar_exact" => Ok(ScramblerMode::HaarExact),
            "pru_only" => Ok(ScramblerMode::PruOnly),
            other => Err(Error::param("mode", format!("unknown scrambler mode `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScramblerSpec {
    pub mode: ScramblerMode,
    /// Brickwork depth of the PRU stand-in; `None` means `4z`.
    pub pru_depth: Option<usize>,
}

impl Default for ScramblerSpec {
    fn default() -> Self {
        ScramblerSpec::haar_exact()
    }
}

impl ScramblerSpec {
    pub fn haar_exact() -> Self {
        ScramblerSpec { mode: ScramblerMode::HaarExact, pru_depth: None }
    }

    pub fn composed() -> Self {
        ScramblerSpec { mode: ScramblerMode::Composed, pru_depth: None }
    }

    pub fn depth_for(&self, z: usize) -> usize {
        self.pru_depth.unwrap_or(4 * z.max(1))
    }
}

/// `U_k` for the requested mode. The 2-design factor acts first.
pub fn build_scrambler(key: &SecretKey, z: usize, spec: &ScramblerSpec) -> Result<UnitaryMatrix> {
    check_cap(z)?;
    let depth = spec.depth_for(z);
    match spec.mode {
        ScramblerMode::HaarExact => {
            let mut rng = keyed_stream("haar-exact", &key.to_bytes());
            sample_haar(z, &mut rng)
        }
        ScramblerMode::PruOnly => sample_pru_surrogate(z, &key.k1, depth),
        ScramblerMode::Composed => {
            let v2 = sample_design2(z, &key.k3)?;
            let v4 = sample_design4_surrogate(z, &key.k2)?;
            let vp = sample_pru_surrogate(z, &key.k1, depth)?;
            Ok(UnitaryMatrix::from_raw(vp.matrix() * (v4.matrix() * v2.matrix())))
        }
    }
}

/// `tr_m |ψ⟩⟨ψ|` for Haar `|ψ⟩` on `n + m` qubits.
pub fn sample_ghse<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Result<DensityMatrix> {
    check_cap(n + m)?;
    haar_state(n + m, rng)?.to_density().partial_trace(&[n, m], &[1])
}
