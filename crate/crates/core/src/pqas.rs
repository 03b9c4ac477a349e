//! The authentication scheme: pad, scramble, unscramble, project the tag.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensembles::{build_scrambler, sample_haar, seeded_rng, ScramblerSpec, SecretKey};
use crate::error::{Error, Result};
use crate::moments;
use crate::qcore::linalg::{self, CMatrix, C64, ZERO};
use crate::qcore::{DensityMatrix, PureState, QuantumChannel, QubitPartition, UnitaryMatrix, REJECT_FLOOR};
use crate::stats::Estimate;

#[derive(Clone, Debug, PartialEq)]
pub struct Ciphertext {
    state: DensityMatrix,
    partition: QubitPartition,
}

impl Ciphertext {
    pub fn new(state: DensityMatrix, partition: QubitPartition) -> Result<Self> {
        if state.dim() != partition.dim() {
            return Err(Error::DimensionMismatch { expected: partition.dim(), found: state.dim() });
        }
        Ok(Ciphertext { state, partition })
    }

    pub fn state(&self) -> &DensityMatrix {
        &self.state
    }

    pub fn partition(&self) -> QubitPartition {
        self.partition
    }

    /// The ciphertext after an adversary applies `ch`.
    pub fn tampered(&self, ch: &dyn QuantumChannel) -> Result<Ciphertext> {
        Ok(Ciphertext { state: self.state.apply_channel(ch)?, partition: self.partition })
    }
}

#[derive(Clone, Debug)]
pub struct AuthOutcome {
    pub accept_prob: f64,
    pub accepted: bool,
    /// Normalized message state, present iff accepted.
    pub post_message: Option<DensityMatrix>,
    /// `tr_{ℓ,m}(Π₀ ρ_dec Π₀)`, unnormalized.
    block: CMatrix,
}

impl AuthOutcome {
    /// `⟨ψ|ρ₀|ψ⟩`, or `None` on reject.
    pub fn fidelity_with(&self, psi: &PureState) -> Option<f64> {
        self.post_message.as_ref().and_then(|r| r.fidelity_with_pure(psi).ok())
    }

    /// `F′ = P₀ ⟨ψ|ρ₀|ψ⟩`, computed without normalizing so that `F′ ≤ P₀`.
    pub fn unnormalized_fidelity(&self, psi: &PureState) -> Result<f64> {
        if psi.dim() != self.block.nrows() {
            return Err(Error::DimensionMismatch { expected: self.block.nrows(), found: psi.dim() });
        }
        let a = psi.amplitudes();
        Ok(a.dotc(&(&self.block * a)).re)
    }
}

/// `Π₀ = I_n ⊗ |0_ℓ⟩⟨0_ℓ| ⊗ I_m`.
pub fn tag_projector(partition: &QubitPartition) -> CMatrix {
    let d = partition.dim();
    let tail = partition.l + partition.m;
    let tag_mask = ((1usize << partition.l) - 1) << partition.m;
    let mut p = CMatrix::zeros(d, d);
    for i in 0..d {
        if (i & ((1 << tail) - 1)) & tag_mask == 0 {
            p[(i, i)] = C64::new(1.0, 0.0);
        }
    }
    p
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pqas {
    pub partition: QubitPartition,
    pub spec: ScramblerSpec,
}

impl Pqas {
    pub fn new(partition: QubitPartition, spec: ScramblerSpec) -> Self {
        Pqas { partition, spec }
    }

    pub fn scrambler(&self, key: &SecretKey) -> Result<UnitaryMatrix> {
        build_scrambler(key, self.partition.z(), &self.spec)
    }

    pub fn encrypt(&self, rho: &DensityMatrix, key: &SecretKey) -> Result<Ciphertext> {
        self.encrypt_with(rho, &self.scrambler(key)?)
    }

    /// `U (ρ ⊗ |0_ℓ⟩⟨0_ℓ| ⊗ σ_m) U†`.
    pub fn encrypt_with(&self, rho: &DensityMatrix, u: &UnitaryMatrix) -> Result<Ciphertext> {
        let ext = self.partition.pad(rho)?;
        Ciphertext::new(ext.apply_unitary(u)?, self.partition)
    }

    /// `encrypt_with` for a pure message through the rank-`2^m` factor
    /// `W = U (|ψ⟩ ⊗ |0_ℓ⟩ ⊗ I_m)`, giving `W W† / 2^m`.
    pub fn encrypt_pure_with(&self, psi: &PureState, u: &UnitaryMatrix) -> Result<Ciphertext> {
        let p = &self.partition;
        if psi.qubits() != p.n {
            return Err(Error::DimensionMismatch { expected: 1 << p.n, found: psi.dim() });
        }
        if u.qubits() != p.z() {
            return Err(Error::DimensionMismatch { expected: p.dim(), found: u.dim() });
        }
        let tail = p.l + p.m;
        let dm = 1usize << p.m;
        let amps = psi.amplitudes();
        let w = CMatrix::from_fn(p.dim(), dm, |r, b| {
            (0..amps.len()).map(|i| u.matrix()[(r, (i << tail) | b)] * amps[i]).sum::<C64>()
        });
        let rho = &w * w.adjoint() / C64::new(dm as f64, 0.0);
        Ciphertext::new(DensityMatrix::from_raw(rho), *p)
    }

    pub fn decrypt(&self, c: &Ciphertext, key: &SecretKey) -> Result<DensityMatrix> {
        self.decrypt_with(c, &self.scrambler(key)?)
    }

    /// `tr_m(U† c U)` on the message and tag registers.
    pub fn decrypt_with(&self, c: &Ciphertext, u: &UnitaryMatrix) -> Result<DensityMatrix> {
        self.check(c)?;
        let p = &self.partition;
        c.state.apply_unitary(&u.adjoint())?.partial_trace(&[p.n + p.l, p.m], &[1])
    }

    pub fn authenticate(&self, c: &Ciphertext, key: &SecretKey) -> Result<AuthOutcome> {
        self.authenticate_with(c, &self.scrambler(key)?)
    }

    pub fn authenticate_with(&self, c: &Ciphertext, u: &UnitaryMatrix) -> Result<AuthOutcome> {
        self.check(c)?;
        let dec = c.state.apply_unitary(&u.adjoint())?;
        Ok(project_tag(&self.partition, dec.matrix()))
    }

    fn check(&self, c: &Ciphertext) -> Result<()> {
        if c.partition != self.partition {
            return Err(Error::param("partition", "ciphertext layout does not match the scheme"));
        }
        Ok(())
    }
}

fn project_tag(p: &QubitPartition, dec: &CMatrix) -> AuthOutcome {
    let dn = 1usize << p.n;
    let tail = p.l + p.m;
    let dm = 1usize << p.m;
    // tag bits are zero, so the full index is (message << tail) | mixed
    let mut block = CMatrix::from_element(dn, dn, ZERO);
    for j in 0..dn {
        for i in 0..dn {
            let mut acc = ZERO;
            for b in 0..dm {
                acc += dec[((i << tail) | b, (j << tail) | b)];
            }
            block[(i, j)] = acc;
        }
    }
    let block = linalg::hermitize(&block);
    let accept_prob = linalg::trace(&block).re.clamp(0.0, 1.0);
    let accepted = accept_prob > REJECT_FLOOR;
    let post_message = accepted.then(|| DensityMatrix::from_raw(&block / C64::new(accept_prob, 0.0)));
    AuthOutcome { accept_prob, accepted, post_message, block }
}

/// `F_e = d⁻² Σ|tr K_i|²`.
pub fn entanglement_fidelity(ch: &dyn QuantumChannel) -> f64 {
    ch.entanglement_fidelity()
}

/// `F_c = (d⁻¹ Σ|tr K_i|² + 1)/(d + 1) = (d F_e + 1)/(d + 1)`.
pub fn channel_fidelity(ch: &dyn QuantumChannel) -> f64 {
    let d = (1usize << ch.qubits()) as f64;
    (d * ch.entanglement_fidelity() + 1.0) / (d + 1.0)
}

/// Leading-order Haar average of `P₀`: `(1 − 2^−ℓ) F_c + 2^−ℓ`.
pub fn leading_order_p0(p: &QubitPartition, fc: f64) -> f64 {
    let a = 0.5f64.powi(p.l as i32);
    (1.0 - a) * fc + a
}

/// Leading-order Haar average of `F′`: `(1 − 2^−(n+ℓ)) F_c + 2^−(n+ℓ)`.
pub fn leading_order_fprime(p: &QubitPartition, fc: f64) -> f64 {
    let a = 0.5f64.powi((p.n + p.l) as i32);
    (1.0 - a) * fc + a
}

/// Weight of the identity in the Haar twirl of a channel with entanglement
/// fidelity `fe` on dimension `d`: the twirled channel is
/// `X ↦ q X + (1 − q) tr(X) I/d` with `q = (d² F_e − 1)/(d² − 1)`.
pub fn twirl_weight(d: usize, fe: f64) -> f64 {
    let d2 = (d * d) as f64;
    (d2 * fe - 1.0) / (d2 - 1.0)
}

/// Exact Haar average of `P₀`: `(1 − 2^−ℓ) q + 2^−ℓ`.
pub fn exact_haar_p0(p: &QubitPartition, fe: f64) -> f64 {
    let q = twirl_weight(p.dim(), fe);
    let a = 0.5f64.powi(p.l as i32);
    (1.0 - a) * q + a
}

/// Exact Haar average of `F′`: `(1 − 2^−(n+ℓ)) q + 2^−(n+ℓ)`.
pub fn exact_haar_fprime(p: &QubitPartition, fe: f64) -> f64 {
    let q = twirl_weight(p.dim(), fe);
    let a = 0.5f64.powi((p.n + p.l) as i32);
    (1.0 - a) * q + a
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AuthStats {
    pub trials: usize,
    pub p0: Estimate,
    pub fprime: Estimate,
    /// Normalized fidelity over accepted trials.
    pub fidelity: Estimate,
    /// `1 − F` over accepted trials.
    pub infidelity: Estimate,
    pub accepted: usize,
    /// Largest `F′ − P₀` seen; non-positive when `F′ ≤ P₀` held in every trial.
    pub max_fprime_excess: f64,
    pub fe: f64,
    pub fc: f64,
    /// Set when `F_c < 1e−6`: success probability collapses and `F` is noise.
    pub degenerate: bool,
}

impl AuthStats {
    pub fn fprime_le_p0(&self) -> bool {
        self.max_fprime_excess <= 1e-12
    }
}

/// Monte Carlo over keys of `authenticate(Γ(encrypt(ψ)))`.
pub fn auth_sweep(
    psi: &PureState,
    partition: &QubitPartition,
    channel: &dyn QuantumChannel,
    trials: usize,
    spec: &ScramblerSpec,
    seed: u64,
) -> Result<AuthStats> {
    if trials < 100 {
        return Err(Error::param("trials", "auth sweeps need at least 100 trials"));
    }
    if channel.qubits() != partition.z() {
        return Err(Error::DimensionMismatch { expected: partition.z(), found: channel.qubits() });
    }
    let scheme = Pqas::new(*partition, *spec);
    let rho = psi.to_density();
    let per_trial: Vec<(f64, f64, Option<f64>)> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let key = SecretKey::derive(seed, "auth-sweep", i as u64);
            let c = scheme.encrypt(&rho, &key)?.tampered(channel)?;
            let out = scheme.authenticate(&c, &key)?;
            Ok((out.accept_prob, out.unnormalized_fidelity(psi)?, out.fidelity_with(psi)))
        })
        .collect::<Result<_>>()?;
    let p0: Vec<f64> = per_trial.iter().map(|t| t.0).collect();
    let fp: Vec<f64> = per_trial.iter().map(|t| t.1).collect();
    let f: Vec<f64> = per_trial.iter().filter_map(|t| t.2).collect();
    let inf: Vec<f64> = f.iter().map(|x| 1.0 - x).collect();
    let fe = channel.entanglement_fidelity();
    let fc = channel_fidelity(channel);
    Ok(AuthStats {
        trials,
        p0: Estimate::from_samples(&p0),
        fprime: Estimate::from_samples(&fp),
        fidelity: Estimate::from_samples(&f),
        infidelity: Estimate::from_samples(&inf),
        accepted: f.len(),
        max_fprime_excess: per_trial.iter().map(|t| t.1 - t.0).fold(f64::NEG_INFINITY, f64::max),
        fe,
        fc,
        degenerate: fc < 1e-6,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SecurityScan {
    pub trials: usize,
    /// `½‖mean − target‖₁` of the empirical average (biased upward by noise).
    pub plug_in: f64,
    /// Unbiased estimate of the exact trace distance along the optimal
    /// Helstrom measurement of the exact moment; present when the oracle fits.
    pub witness: Option<Estimate>,
    /// Exact trace distance from the Weingarten oracle.
    pub exact: Option<f64>,
    /// `‖mean − M‖_F` against the exact moment `M`. The witness commutes
    /// with every `U^⊗t`, so its samples are constant; this is the check
    /// that exercises the sampler.
    pub moment_distance: f64,
    /// `sqrt(mean ‖Y_i − M‖²_F / trials)`, the expected size of `moment_distance`.
    pub moment_sigma: f64,
}

/// Monte Carlo estimate of `TD(E_U[(Φ_U^⊗t ⊗ id_q)(ρ_g)], σ_z^⊗t ⊗ tr_{nt}(ρ_g))`
/// with Haar scramblers. `ρ_g` lives on `(msg_1, …, msg_t, purifier)`.
pub fn security_scan(
    rho_g: &DensityMatrix,
    partition: &QubitPartition,
    t: usize,
    q: usize,
    trials: usize,
    seed: u64,
) -> Result<SecurityScan> {
    if trials == 0 {
        return Err(Error::param("trials", "must be positive"));
    }
    let ext = moments::padded_joint_input(partition, rho_g, t, q)?;
    let z = partition.z();
    let dim = ext.dim();
    if dim > moments::MAX_MOMENT_DIM {
        return Err(Error::SizeLimit(format!("joint state dimension {dim} exceeds {}", moments::MAX_MOMENT_DIM)));
    }
    let target = moments::joint_target(partition, rho_g, t, q)?;
    let exact_moment = moments::joint_moment_exact(partition, rho_g, t, q)?;
    let gap = &exact_moment - &target;
    let exact = 0.5 * linalg::trace_norm_hermitian(&gap);
    let witness_op = linalg::positive_part_projector(&gap);

    let mut layout = vec![z; t];
    layout.push(q);
    let mut sum = CMatrix::zeros(dim, dim);
    let mut w = Vec::with_capacity(trials);
    let mut spread = 0.0;
    // bounded memory at large dimensions; chunk order keeps sums deterministic
    let ids: Vec<usize> = (0..trials).collect();
    for chunk in ids.chunks(64) {
        let part: Vec<(CMatrix, f64, f64)> = chunk
            .par_iter()
            .map(|&i| {
                let mut rng = seeded_rng(seed, "security-scan", &[i as u64]);
                let u = sample_haar(z, &mut rng)?;
                let mut y = ext.matrix().clone();
                for copy in 0..t {
                    y = linalg::conjugate_register(&y, u.matrix(), &layout, copy)?;
                }
                let wi = linalg::trace_of_product(&witness_op, &(&y - &target)).re;
                let dev = (&y - &exact_moment).norm_squared();
                Ok((y, wi, dev))
            })
            .collect::<Result<_>>()?;
        for (y, wi, dev) in part {
            sum += y;
            w.push(wi);
            spread += dev;
        }
    }
    let mean = sum / C64::new(trials as f64, 0.0);
    let plug_in = 0.5 * linalg::trace_norm_hermitian(&(&mean - &target));
    let moment_distance = (&mean - &exact_moment).norm();
    let moment_sigma = (spread / trials as f64 / trials as f64).sqrt();
    Ok(SecurityScan {
        trials,
        plug_in,
        witness: Some(Estimate::from_samples(&w)),
        exact: Some(exact),
        moment_distance,
        moment_sigma,
    })
}

/// `ρ^⊗t` as a joint input with no purifier.
pub fn product_input(rho: &DensityMatrix, t: usize) -> Result<DensityMatrix> {
    let mut out = rho.clone();
    for _ in 1..t {
        out = out.tensor(rho)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::haar_state;
    use crate::qcore::{Depolarizing, KrausChannel, UnitaryChannel};

    fn scheme(n: usize, l: usize, m: usize) -> Pqas {
        Pqas::new(QubitPartition::new(n, l, m).unwrap(), ScramblerSpec::haar_exact())
    }

    #[test]
    fn pure_path_matches_dense_encryption() {
        for (n, l, m) in [(1, 0, 0), (2, 1, 2), (1, 2, 1)] {
            let s = scheme(n, l, m);
            let mut rng = seeded_rng(5, "pure-path", &[n as u64, l as u64, m as u64]);
            let psi = haar_state(n, &mut rng).unwrap();
            let u = s.scrambler(&SecretKey::random(&mut rng)).unwrap();
            let a = s.encrypt_with(&psi.to_density(), &u).unwrap();
            let b = s.encrypt_pure_with(&psi, &u).unwrap();
            assert!(linalg::max_abs_diff(a.state().matrix(), b.state().matrix()) < 1e-13);
        }
    }

    #[test]
    fn round_trip_and_completeness() {
        let s = scheme(2, 1, 1);
        let mut rng = seeded_rng(1, "rt", &[]);
        let psi = haar_state(2, &mut rng).unwrap();
        let rho = psi.to_density();
        let key = SecretKey::derive(1, "rt", 0);
        let c = s.encrypt(&rho, &key).unwrap();
        assert!((c.state().purity() - 0.5).abs() < 1e-12);
        let dec = s.decrypt(&c, &key).unwrap();
        let want = rho.tensor(&DensityMatrix::basis(1, 0).unwrap()).unwrap();
        assert!(dec.trace_distance(&want).unwrap() < 1e-9);
        let out = s.authenticate(&c, &key).unwrap();
        assert!((out.accept_prob - 1.0).abs() < 1e-9);
        assert!((out.fidelity_with(&psi).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn deterministic_mode_is_pure() {
        let s = scheme(1, 1, 0);
        let rho = DensityMatrix::basis(1, 1).unwrap();
        let c = s.encrypt(&rho, &SecretKey::derive(0, "p", 0)).unwrap();
        assert!((c.state().purity() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fully_depolarized_tag_is_uniform() {
        for l in 0..3 {
            let s = scheme(1, l, 1);
            let key = SecretKey::derive(3, "dep", l as u64);
            let c = s.encrypt(&DensityMatrix::basis(1, 0).unwrap(), &key).unwrap();
            let full = Depolarizing::new(s.partition.z(), 1.0).unwrap();
            let out = s.authenticate(&c.tampered(&full).unwrap(), &key).unwrap();
            assert!((out.accept_prob - 0.5f64.powi(l as i32)).abs() < 1e-12);
        }
    }

    #[test]
    fn projector_route_matches_index_route() {
        let s = scheme(1, 2, 1);
        let key = SecretKey::derive(4, "proj", 0);
        let c = s.encrypt(&DensityMatrix::basis(1, 1).unwrap(), &key).unwrap();
        let noisy = c.tampered(&Depolarizing::new(4, 0.4).unwrap()).unwrap();
        let u = s.scrambler(&key).unwrap();
        let dec = noisy.state().apply_unitary(&u.adjoint()).unwrap();
        let proj = dec.project(&tag_projector(&s.partition)).unwrap();
        let out = s.authenticate(&noisy, &key).unwrap();
        assert!((proj.prob - out.accept_prob).abs() < 1e-12);
    }

    #[test]
    fn wrong_key_decrypts_maximally_mixed_input() {
        let s = scheme(1, 1, 1);
        let c = Ciphertext::new(DensityMatrix::maximally_mixed(3).unwrap(), s.partition).unwrap();
        let dec = s.decrypt(&c, &SecretKey::derive(0, "mm", 0)).unwrap();
        assert!(dec.trace_distance(&DensityMatrix::maximally_mixed(2).unwrap()).unwrap() < 1e-12);
    }

    #[test]
    fn fidelity_identities() {
        let id = KrausChannel::identity(2).unwrap();
        assert!((channel_fidelity(&id) - 1.0).abs() < 1e-15);
        let full = Depolarizing::new(2, 1.0).unwrap();
        assert!((channel_fidelity(&full) - 0.25).abs() < 1e-15);
        assert!((entanglement_fidelity(&full) - 1.0 / 16.0).abs() < 1e-15);
        let mut rng = seeded_rng(5, "fid", &[]);
        let v = UnitaryChannel::new(sample_haar(2, &mut rng).unwrap());
        let k = v.kraus();
        let d = 4.0;
        let s: f64 = k.ops().iter().map(|o| linalg::trace(o).norm_sqr()).sum();
        assert!((channel_fidelity(&v) - (s / d + 1.0) / (d + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn exact_averages_reduce_to_leading_order_for_identity() {
        let p = QubitPartition::new(2, 2, 1).unwrap();
        assert!((exact_haar_p0(&p, 1.0) - leading_order_p0(&p, 1.0)).abs() < 1e-15);
        assert!((exact_haar_fprime(&p, 1.0) - 1.0).abs() < 1e-15);
        // fully depolarizing channel: q = 0, P₀ = 2^−ℓ
        let fe = 1.0 / (p.dim() * p.dim()) as f64;
        assert!((exact_haar_p0(&p, fe) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn sweep_requires_enough_trials() {
        let p = QubitPartition::new(1, 1, 1).unwrap();
        let psi = PureState::basis(1, 0).unwrap();
        let id = KrausChannel::identity(3).unwrap();
        assert!(auth_sweep(&psi, &p, &id, 10, &ScramblerSpec::haar_exact(), 0).is_err());
        let s = auth_sweep(&psi, &p, &id, 100, &ScramblerSpec::haar_exact(), 0).unwrap();
        assert!((s.p0.mean - 1.0).abs() < 1e-9 && (s.fidelity.mean - 1.0).abs() < 1e-9);
        assert!(s.fprime_le_p0());
    }

    #[test]
    fn first_moment_scan_is_zero() {
        let p = QubitPartition::new(1, 1, 1).unwrap();
        let rho = DensityMatrix::basis(1, 0).unwrap();
        let s = security_scan(&rho, &p, 1, 0, 50, 0).unwrap();
        assert!(s.exact.unwrap() < 1e-12);
        let w = s.witness.unwrap();
        assert!(w.mean.abs() <= 3.0 * w.stderr + 1e-12);
    }
}
