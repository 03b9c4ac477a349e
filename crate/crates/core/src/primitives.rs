//! VPRDM states, the OWSG interface and EFI pairs built from them.

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensembles::{build_scrambler, ScramblerSpec, SecretKey};
use crate::error::{Error, Result};
use crate::moments::{self, PermutationOperator, Permutation};
use crate::qcore::linalg::{self, CMatrix, C64, ZERO};
use crate::qcore::{check_cap, DensityMatrix, QuantumChannel};
use crate::stats::shannon_bits;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VprdmParams {
    pub n: usize,
    pub m: usize,
    pub key: SecretKey,
}

impl VprdmParams {
    pub fn new(n: usize, m: usize, key: SecretKey) -> Result<Self> {
        if m >= n {
            return Err(Error::param("m", format!("mixedness {m} must be below n = {n}")));
        }
        check_cap(n)?;
        Ok(VprdmParams { n, m, key })
    }
}

/// `(|0⟩⟨0|)^⊗(n−m) ⊗ σ_m`.
fn reference_state(n: usize, m: usize) -> CMatrix {
    let d = 1usize << n;
    let dm = 1usize << m;
    let mut r = CMatrix::from_element(d, d, ZERO);
    for b in 0..dm {
        r[(b, b)] = C64::new(1.0 / dm as f64, 0.0);
    }
    r
}

/// `U_k ((|0⟩⟨0|)^⊗(n−m) ⊗ σ_m) U_k†`.
pub fn vprdm_generate(p: &VprdmParams, spec: &ScramblerSpec) -> Result<DensityMatrix> {
    let u = build_scrambler(&p.key, p.n, spec)?;
    DensityMatrix::from_raw(reference_state(p.n, p.m)).apply_unitary(&u)
}

/// `tr((|0⟩⟨0|)^⊗(n−m) tr_m(U_k† ρ U_k))`.
pub fn vprdm_verify(rho: &DensityMatrix, key: &SecretKey, n: usize, m: usize, spec: &ScramblerSpec) -> Result<f64> {
    if rho.qubits() != n {
        return Err(Error::DimensionMismatch { expected: 1 << n, found: rho.dim() });
    }
    if m > n {
        return Err(Error::param("m", "mixedness exceeds n"));
    }
    let u = build_scrambler(key, n, spec)?;
    let back = rho.apply_unitary(&u.adjoint())?;
    Ok((0..1usize << m).map(|b| back.matrix()[(b, b)].re).sum::<f64>().clamp(0.0, 1.0))
}

/// `‖E_{η_{n,m}}[ρ^⊗t] − E_{ζ_{n,m}}[ρ^⊗t]‖₁` between the GHSE and the
/// Haar-twirled fixed-spectrum ensemble.
///
/// The GHSE moment is `(D−1)!/(D+t−1)! Σ_π d_B^{#cycles(π)} P_π` with
/// `D = d_A d_B`; the other side comes from the generic twirl.
pub fn ghse_closeness(n: usize, m: usize, t: usize) -> Result<f64> {
    if m > n {
        return Err(Error::param("m", "GHSE comparison needs m <= n"));
    }
    let d_a = 1usize << n;
    let dim = d_a
        .checked_pow(t as u32)
        .filter(|&x| x <= moments::MAX_MOMENT_DIM)
        .ok_or_else(|| Error::SizeLimit(format!("2^(n t) with n = {n}, t = {t} exceeds {}", moments::MAX_MOMENT_DIM)))?;
    let big_d = (d_a << m) as f64;
    let d_b = (1usize << m) as f64;
    let norm: f64 = (0..t).map(|k| 1.0 / (big_d + k as f64)).product();
    let mut eta = CMatrix::zeros(dim, dim);
    for p in Permutation::all(t) {
        let w = norm * d_b.powi(p.cycles() as i32);
        let op = PermutationOperator::new(&p, d_a)?;
        for (j, &i) in op.map().iter().enumerate() {
            eta[(i, j)] += C64::new(w, 0.0);
        }
    }
    let r = reference_state(n, m);
    let mut o = r.clone();
    for _ in 1..t {
        o = linalg::kron(&o, &r);
    }
    let zeta = moments::haar_moment(&o, d_a, t)?;
    Ok(linalg::trace_norm_hermitian(&(eta - zeta)))
}

/// One-way state generator over VPRDM states.
#[derive(Clone, Copy, Debug)]
pub struct Owsg {
    pub n: usize,
    pub m: usize,
    pub spec: ScramblerSpec,
    pub threshold: f64,
}

impl Owsg {
    pub fn new(n: usize, m: usize, spec: ScramblerSpec) -> Result<Self> {
        VprdmParams::new(n, m, SecretKey::from_bytes([0; 48]))?;
        Ok(Owsg { n, m, spec, threshold: 0.5 })
    }

    pub fn with_threshold(mut self, threshold: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&threshold) {
            return Err(Error::param("threshold", "must lie in [0, 1]"));
        }
        self.threshold = threshold;
        Ok(self)
    }

    pub fn keygen<R: RngCore + ?Sized>(&self, rng: &mut R) -> SecretKey {
        SecretKey::random(rng)
    }

    pub fn stategen(&self, key: &SecretKey) -> Result<DensityMatrix> {
        vprdm_generate(&VprdmParams::new(self.n, self.m, *key)?, &self.spec)
    }

    pub fn ver(&self, key: &SecretKey, state: &DensityMatrix) -> Result<bool> {
        let v = vprdm_verify(state, key, self.n, self.m, &self.spec)?;
        Ok(v >= self.threshold - 1e-9)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EfiParams {
    pub n: usize,
    pub m0: usize,
    pub gamma: f64,
    pub c: f64,
    /// The key ensemble is truncated to `2^lambda_eff` keys.
    pub lambda_eff: usize,
    pub seed: u64,
    pub spec: ScramblerSpec,
}

pub const MAX_EFI_QUBITS: usize = 6;
pub const MAX_LAMBDA_EFF: usize = 12;

impl EfiParams {
    pub fn m1(&self) -> usize {
        (self.gamma * self.n as f64).floor() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.n > MAX_EFI_QUBITS {
            return Err(Error::param("n", format!("must be in 1..={MAX_EFI_QUBITS}")));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::param("gamma", "must lie in (0, 1)"));
        }
        if !(self.c > 0.0 && self.c < self.gamma) {
            return Err(Error::param("c", "must lie in (0, gamma)"));
        }
        if !(self.m0 < self.m1() && self.m1() < self.n) {
            return Err(Error::param("m0", format!("need m0 < m1 < n, got m0 = {}, m1 = {}, n = {}", self.m0, self.m1(), self.n)));
        }
        if self.lambda_eff > MAX_LAMBDA_EFF {
            return Err(Error::param("lambda_eff", format!("must be at most {MAX_LAMBDA_EFF}")));
        }
        Ok(())
    }
}

/// Exact average of VPRDM states over the truncated key set.
pub fn key_averaged_vprdm(n: usize, m: usize, lambda_eff: usize, seed: u64, arm: &str, spec: &ScramblerSpec) -> Result<DensityMatrix> {
    let keys = 1usize << lambda_eff;
    let d = 1usize << n;
    let states: Vec<CMatrix> = (0..keys)
        .into_par_iter()
        .map(|i| {
            let key = SecretKey::derive(seed, arm, i as u64);
            Ok(vprdm_generate(&VprdmParams::new(n, m, key)?, spec)?.into_matrix())
        })
        .collect::<Result<_>>()?;
    let mut sum = CMatrix::zeros(d, d);
    for s in &states {
        sum += s;
    }
    Ok(DensityMatrix::from_raw(sum / C64::new(keys as f64, 0.0)))
}

/// `(ν₀, ν₁)`: key-averaged VPRDMs with mixedness `m0` and `m1`.
pub fn efi_pair(p: &EfiParams) -> Result<(DensityMatrix, DensityMatrix)> {
    p.validate()?;
    let nu0 = key_averaged_vprdm(p.n, p.m0, p.lambda_eff, p.seed, "efi-arm0", &p.spec)?;
    let nu1 = key_averaged_vprdm(p.n, p.m1(), p.lambda_eff, p.seed, "efi-arm1", &p.spec)?;
    Ok((nu0, nu1))
}

pub fn binary_entropy(x: f64) -> f64 {
    shannon_bits(&[x, 1.0 - x])
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EfiReport {
    pub n: usize,
    pub m0: usize,
    pub m1: usize,
    pub lambda_eff: usize,
    /// Entropies in bits.
    pub s0: f64,
    pub s1: f64,
    pub t_exact: f64,
    /// `1 − (S₀ + 1)/S₁`.
    pub t_lower_bound: f64,
    /// `|S₁ − S₀|`.
    pub entropy_gap: f64,
    /// `T log₂(2ⁿ − 1) + H({T, 1 − T})`.
    pub fannes_rhs: f64,
}

impl EfiReport {
    pub fn fannes_holds(&self) -> bool {
        self.entropy_gap <= self.fannes_rhs + 1e-9
    }

    pub fn lower_bound_holds(&self) -> bool {
        self.t_exact >= self.t_lower_bound - 1e-9
    }

    pub fn s1_at_least_m1(&self) -> bool {
        self.s1 >= self.m1 as f64 - 1e-9
    }

    pub fn s0_within_key_budget(&self) -> bool {
        self.s0 <= (self.lambda_eff + self.m0) as f64 + 1e-9
    }
}

pub fn efi_report(p: &EfiParams, nu0: &DensityMatrix, nu1: &DensityMatrix) -> Result<EfiReport> {
    let s0 = nu0.vn_entropy();
    let s1 = nu1.vn_entropy();
    let t = nu0.trace_distance(nu1)?;
    let log_term = ((1u64 << p.n) as f64 - 1.0).log2();
    Ok(EfiReport {
        n: p.n,
        m0: p.m0,
        m1: p.m1(),
        lambda_eff: p.lambda_eff,
        s0,
        s1,
        t_exact: t,
        t_lower_bound: if s1 > 0.0 { 1.0 - (s0 + 1.0) / s1 } else { f64::NEG_INFINITY },
        entropy_gap: (s1 - s0).abs(),
        fannes_rhs: t * log_term + binary_entropy(t.clamp(0.0, 1.0)),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EfiNoiseReport {
    pub noisy: EfiReport,
    pub t_noiseless: f64,
    /// `TD(Γ(ν₀), Γ(ν₁))`.
    pub t_noisy: f64,
    /// `TD(Γ(ν₀), ν₁)`, noise on the low-entropy arm only.
    pub t_one_arm: f64,
    /// Shannon entropy of the mixing weights, `None` if not mixed-unitary.
    pub noise_entropy: Option<f64>,
    /// `n(1 − c) − m₀ − 2`.
    pub budget_theorem: f64,
    /// `n(γ − c) − m₀ − 2`.
    pub budget_derivation: f64,
    /// Per-qubit entropy when the weights factor over qubits.
    pub per_qubit_entropy: Option<f64>,
    /// `γ − c − m₀/n`.
    pub per_qubit_budget: f64,
}

impl EfiNoiseReport {
    pub fn contracts(&self) -> bool {
        self.t_noisy <= self.t_noiseless + 1e-9
    }

    pub fn within_theorem_budget(&self) -> Option<bool> {
        self.noise_entropy.map(|h| h <= self.budget_theorem)
    }

    pub fn within_per_qubit_budget(&self) -> Option<bool> {
        self.per_qubit_entropy.map(|h| h <= self.per_qubit_budget)
    }
}

/// Applies `Γ` to both arms, recomputes the report and evaluates the entropy
/// budget. `per_qubit_weights` gives the single-qubit mixing distribution for
/// product noise such as local depolarizing.
pub fn efi_noise_check(
    p: &EfiParams,
    nu0: &DensityMatrix,
    nu1: &DensityMatrix,
    channel: &dyn QuantumChannel,
    per_qubit_weights: Option<&[f64]>,
) -> Result<EfiNoiseReport> {
    if channel.qubits() != p.n {
        return Err(Error::DimensionMismatch { expected: p.n, found: channel.qubits() });
    }
    let n0 = nu0.apply_channel(channel)?;
    let n1 = nu1.apply_channel(channel)?;
    let noisy = efi_report(p, &n0, &n1)?;
    let n = p.n as f64;
    Ok(EfiNoiseReport {
        t_noiseless: nu0.trace_distance(nu1)?,
        t_noisy: noisy.t_exact,
        t_one_arm: n0.trace_distance(nu1)?,
        noise_entropy: channel.mixed_unitary_weights().map(|w| shannon_bits(&w)),
        budget_theorem: n * (1.0 - p.c) - p.m0 as f64 - 2.0,
        budget_derivation: n * (p.gamma - p.c) - p.m0 as f64 - 2.0,
        per_qubit_entropy: per_qubit_weights.map(shannon_bits),
        per_qubit_budget: p.gamma - p.c - p.m0 as f64 / n,
        noisy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::seeded_rng;
    use crate::qcore::LocalDepolarizing;

    #[test]
    fn vprdm_examples() {
        let spec = ScramblerSpec::haar_exact();
        let key = SecretKey::derive(0, "vprdm", 0);
        let pure = vprdm_generate(&VprdmParams::new(3, 0, key).unwrap(), &spec).unwrap();
        assert!((pure.purity() - 1.0).abs() < 1e-12);
        let p = VprdmParams::new(3, 2, key).unwrap();
        let rho = vprdm_generate(&p, &spec).unwrap();
        assert!((rho.purity() - 0.25).abs() < 1e-12);
        assert_eq!(rho, vprdm_generate(&p, &spec).unwrap());
        assert!((vprdm_verify(&rho, &key, 3, 2, &spec).unwrap() - 1.0).abs() < 1e-9);
        let mixed = DensityMatrix::maximally_mixed(4).unwrap();
        assert!((vprdm_verify(&mixed, &key, 4, 1, &spec).unwrap() - 0.125).abs() < 1e-12);
        assert!(VprdmParams::new(2, 2, key).is_err());
    }

    #[test]
    fn ghse_trivial_cases() {
        assert!(ghse_closeness(2, 1, 1).unwrap() < 1e-12);
        assert!(ghse_closeness(3, 0, 2).unwrap() < 1e-12);
        assert!(ghse_closeness(2, 2, 2).unwrap() > 1e-3);
    }

    #[test]
    fn owsg_threshold_one_accepts_exact_match_only() {
        let o = Owsg::new(3, 1, ScramblerSpec::haar_exact()).unwrap().with_threshold(1.0).unwrap();
        let mut rng = seeded_rng(0, "owsg", &[]);
        let k = o.keygen(&mut rng);
        let s = o.stategen(&k).unwrap();
        assert!(o.ver(&k, &s).unwrap());
        let k2 = o.keygen(&mut rng);
        assert!(!o.ver(&k2, &s).unwrap());
    }

    #[test]
    fn efi_zero_distance_case() {
        let p = EfiParams { n: 3, m0: 0, gamma: 0.67, c: 0.1, lambda_eff: 2, seed: 1, spec: ScramblerSpec::haar_exact() };
        let (nu0, _) = efi_pair(&p).unwrap();
        let r = efi_report(&p, &nu0, &nu0).unwrap();
        assert_eq!(r.t_exact, 0.0);
        assert!(r.entropy_gap == 0.0 && r.fannes_rhs == 0.0 && r.fannes_holds());
    }

    #[test]
    fn efi_noise_zero_strength_is_noiseless() {
        let p = EfiParams { n: 3, m0: 0, gamma: 0.67, c: 0.1, lambda_eff: 2, seed: 1, spec: ScramblerSpec::haar_exact() };
        let (nu0, nu1) = efi_pair(&p).unwrap();
        let base = efi_report(&p, &nu0, &nu1).unwrap();
        let ch = LocalDepolarizing::new(3, 0.0).unwrap();
        let r = efi_noise_check(&p, &nu0, &nu1, &ch, Some(&ch.single_qubit_weights())).unwrap();
        assert!((r.noisy.t_exact - base.t_exact).abs() < 1e-12);
        assert!((r.noisy.s0 - base.s0).abs() < 1e-9);
        assert_eq!(r.noise_entropy, Some(0.0));
    }

    #[test]
    fn efi_validation() {
        let mut p = EfiParams { n: 4, m0: 1, gamma: 0.5, c: 0.2, lambda_eff: 2, seed: 0, spec: ScramblerSpec::haar_exact() };
        assert!(p.validate().is_ok());
        p.m0 = 2;
        assert!(matches!(p.validate(), Err(Error::InvalidParameter { field, .. }) if field == "m0"));
        p.m0 = 1;
        p.c = 0.6;
        assert!(p.validate().is_err());
    }
}
