use std::fmt;

use super::linalg::{self, CMatrix, C64, ZERO};
use super::{check_cap, UnitaryMatrix};
use crate::error::{Error, Result};

pub const TP_TOL: f64 = 1e-9;

/// A CPTP map on a fixed number of qubits.
///
/// `apply_operator` is the linear extension, so it may be applied to any
/// operator, not only to states. Implementors with structure (Pauli noise,
/// unitaries) avoid materializing Kraus operators.
pub trait QuantumChannel: Send + Sync + fmt::Debug {
    fn qubits(&self) -> usize;

    fn apply_operator(&self, op: &CMatrix) -> CMatrix;

    fn kraus(&self) -> KrausChannel;

    /// `d⁻² Σ |tr K_i|²`.
    fn entanglement_fidelity(&self) -> f64 {
        self.kraus().entanglement_fidelity()
    }

    /// Mixing weights when every Kraus operator is proportional to a unitary.
    fn mixed_unitary_weights(&self) -> Option<Vec<f64>> {
        self.kraus().mixed_unitary_weights()
    }

    fn label(&self) -> String;
}

#[derive(Clone, Debug)]
pub struct KrausChannel {
    qubits: usize,
    ops: Vec<CMatrix>,
}

impl KrausChannel {
    pub fn new(ops: Vec<CMatrix>) -> Result<Self> {
        let first = ops.first().ok_or_else(|| Error::param("kraus_ops", "empty Kraus list"))?;
        let d = first.nrows();
        let qubits = linalg::log2_dim(d)?;
        check_cap(qubits)?;
        for k in &ops {
            if k.nrows() != d || k.ncols() != d {
                return Err(Error::DimensionMismatch { expected: d, found: k.nrows() });
            }
        }
        let sum = ops.iter().fold(CMatrix::zeros(d, d), |acc, k| acc + k.adjoint() * k);
        let err = linalg::max_abs_diff(&sum, &linalg::identity(d));
        if err > TP_TOL {
            return Err(Error::NotTracePreserving(err));
        }
        Ok(KrausChannel { qubits, ops })
    }

    pub fn identity(qubits: usize) -> Result<Self> {
        check_cap(qubits)?;
        Ok(KrausChannel { qubits, ops: vec![linalg::identity(1 << qubits)] })
    }

    /// Convex combination `Σ w_i Γ_i`, realized by scaling Kraus operators.
    pub fn mixture(parts: &[(f64, &KrausChannel)]) -> Result<Self> {
        let total: f64 = parts.iter().map(|(w, _)| w).sum();
        if parts.iter().any(|(w, _)| *w < 0.0) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::param("weights", "mixture weights must be a probability vector"));
        }
        let ops = parts
            .iter()
            .flat_map(|(w, ch)| ch.ops.iter().map(move |k| k * C64::new(w.sqrt(), 0.0)))
            .collect();
        KrausChannel::new(ops)
    }

    pub fn ops(&self) -> &[CMatrix] {
        &self.ops
    }
}

impl QuantumChannel for KrausChannel {
    fn qubits(&self) -> usize {
        self.qubits
    }

    fn apply_operator(&self, op: &CMatrix) -> CMatrix {
        let d = op.nrows();
        self.ops.iter().fold(CMatrix::zeros(d, d), |acc, k| acc + k * op * k.adjoint())
    }

    fn kraus(&self) -> KrausChannel {
        self.clone()
    }

    fn entanglement_fidelity(&self) -> f64 {
        let d = (1usize << self.qubits) as f64;
        self.ops.iter().map(|k| linalg::trace(k).norm_sqr()).sum::<f64>() / (d * d)
    }

    fn mixed_unitary_weights(&self) -> Option<Vec<f64>> {
        let d = 1usize << self.qubits;
        let id = linalg::identity(d);
        let mut w = Vec::with_capacity(self.ops.len());
        for k in &self.ops {
            let g = k.adjoint() * k;
            let p = linalg::trace(&g).re / d as f64;
            if linalg::max_abs_diff(&g, &(&id * C64::new(p, 0.0))) > TP_TOL {
                return None;
            }
            w.push(p);
        }
        Some(w)
    }

    fn label(&self) -> String {
        format!("kraus({})", self.ops.len())
    }
}

/// Global depolarizing noise `(1-p)ρ + p tr(ρ) I/d`.
#[derive(Clone, Debug)]
pub struct Depolarizing {
    qubits: usize,
    p: f64,
}

impl Depolarizing {
    pub fn new(qubits: usize, p: f64) -> Result<Self> {
        check_cap(qubits)?;
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::param("p", format!("{p} is outside [0, 1]")));
        }
        Ok(Depolarizing { qubits, p })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    fn pauli_weights(&self) -> Vec<f64> {
        let d2 = (1usize << (2 * self.qubits)) as f64;
        let mut w = vec![self.p / d2; 1 << (2 * self.qubits)];
        w[0] += 1.0 - self.p;
        w
    }
}

impl QuantumChannel for Depolarizing {
    fn qubits(&self) -> usize {
        self.qubits
    }

    fn apply_operator(&self, op: &CMatrix) -> CMatrix {
        let d = op.nrows();
        let tr = linalg::trace(op);
        let mut out = op * C64::new(1.0 - self.p, 0.0);
        for i in 0..d {
            out[(i, i)] += tr * (self.p / d as f64);
        }
        out
    }

    fn kraus(&self) -> KrausChannel {
        pauli_kraus(self.qubits, &self.pauli_weights())
    }

    fn entanglement_fidelity(&self) -> f64 {
        let d2 = (1usize << (2 * self.qubits)) as f64;
        1.0 - self.p + self.p / d2
    }

    fn mixed_unitary_weights(&self) -> Option<Vec<f64>> {
        Some(self.pauli_weights())
    }

    fn label(&self) -> String {
        format!("depolarizing({})", self.p)
    }
}

/// Independent single-qubit depolarizing noise: Pauli weights
/// `{1-3p/4, p/4, p/4, p/4}` on every qubit.
#[derive(Clone, Debug)]
pub struct LocalDepolarizing {
    qubits: usize,
    p: f64,
}

impl LocalDepolarizing {
    pub fn new(qubits: usize, p: f64) -> Result<Self> {
        check_cap(qubits)?;
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::param("p", format!("{p} is outside [0, 1]")));
        }
        Ok(LocalDepolarizing { qubits, p })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn single_qubit_weights(&self) -> [f64; 4] {
        let q = self.p / 4.0;
        [1.0 - 3.0 * q, q, q, q]
    }
}

impl QuantumChannel for LocalDepolarizing {
    fn qubits(&self) -> usize {
        self.qubits
    }

    fn apply_operator(&self, op: &CMatrix) -> CMatrix {
        // per qubit: X -> (1-p) X + p tr_j(X) ⊗ I/2
        let d = op.nrows();
        let mut x = op.clone();
        for j in 0..self.qubits {
            let bit = 1usize << (self.qubits - 1 - j);
            let mut y = &x * C64::new(1.0 - self.p, 0.0);
            for c in 0..d {
                for r in 0..d {
                    if (r & bit) == (c & bit) {
                        let (r0, c0) = (r & !bit, c & !bit);
                        let avg = (x[(r0, c0)] + x[(r0 | bit, c0 | bit)]) * 0.5;
                        y[(r, c)] += avg * self.p;
                    }
                }
            }
            x = y;
        }
        x
    }

    fn kraus(&self) -> KrausChannel {
        pauli_kraus(self.qubits, &self.mixed_unitary_weights().expect("Pauli channel"))
    }

    fn entanglement_fidelity(&self) -> f64 {
        (1.0 - 0.75 * self.p).powi(self.qubits as i32)
    }

    fn mixed_unitary_weights(&self) -> Option<Vec<f64>> {
        let single = self.single_qubit_weights();
        let mut w = vec![1.0];
        for _ in 0..self.qubits {
            w = w.iter().flat_map(|a| single.iter().map(move |b| a * b)).collect();
        }
        Some(w)
    }

    fn label(&self) -> String {
        format!("local-depolarizing({})", self.p)
    }
}

#[derive(Clone, Debug)]
pub struct UnitaryChannel {
    u: UnitaryMatrix,
}

impl UnitaryChannel {
    pub fn new(u: UnitaryMatrix) -> Self {
        UnitaryChannel { u }
    }

    pub fn unitary(&self) -> &UnitaryMatrix {
        &self.u
    }
}

impl QuantumChannel for UnitaryChannel {
    fn qubits(&self) -> usize {
        self.u.qubits()
    }

    fn apply_operator(&self, op: &CMatrix) -> CMatrix {
        self.u.matrix() * op * self.u.matrix().adjoint()
    }

    fn kraus(&self) -> KrausChannel {
        KrausChannel { qubits: self.u.qubits(), ops: vec![self.u.matrix().clone()] }
    }

    fn entanglement_fidelity(&self) -> f64 {
        let d = self.u.dim() as f64;
        linalg::trace(self.u.matrix()).norm_sqr() / (d * d)
    }

    fn mixed_unitary_weights(&self) -> Option<Vec<f64>> {
        Some(vec![1.0])
    }

    fn label(&self) -> String {
        "unitary".into()
    }
}

/// `Σ p_i U_i ρ U_i†`.
#[derive(Clone, Debug)]
pub struct MixedUnitary {
    weights: Vec<f64>,
    unitaries: Vec<UnitaryMatrix>,
}

impl MixedUnitary {
    pub fn new(weights: Vec<f64>, unitaries: Vec<UnitaryMatrix>) -> Result<Self> {
        if weights.is_empty() || weights.len() != unitaries.len() {
            return Err(Error::param("weights", "need one weight per unitary"));
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|&w| w < 0.0) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::param("weights", "not a probability vector"));
        }
        let d = unitaries[0].dim();
        if let Some(u) = unitaries.iter().find(|u| u.dim() != d) {
            return Err(Error::DimensionMismatch { expected: d, found: u.dim() });
        }
        Ok(MixedUnitary { weights, unitaries })
    }
}

impl QuantumChannel for MixedUnitary {
    fn qubits(&self) -> usize {
        self.unitaries[0].qubits()
    }

    fn apply_operator(&self, op: &CMatrix) -> CMatrix {
        let d = op.nrows();
        self.weights.iter().zip(&self.unitaries).fold(CMatrix::zeros(d, d), |acc, (w, u)| {
            acc + u.matrix() * op * u.matrix().adjoint() * C64::new(*w, 0.0)
        })
    }

    fn kraus(&self) -> KrausChannel {
        KrausChannel {
            qubits: self.qubits(),
            ops: self
                .weights
                .iter()
                .zip(&self.unitaries)
                .map(|(w, u)| u.matrix() * C64::new(w.sqrt(), 0.0))
                .collect(),
        }
    }

    fn entanglement_fidelity(&self) -> f64 {
        let d = self.unitaries[0].dim() as f64;
        self.weights
            .iter()
            .zip(&self.unitaries)
            .map(|(w, u)| w * linalg::trace(u.matrix()).norm_sqr())
            .sum::<f64>()
            / (d * d)
    }

    fn mixed_unitary_weights(&self) -> Option<Vec<f64>> {
        Some(self.weights.clone())
    }

    fn label(&self) -> String {
        format!("mixed-unitary({})", self.weights.len())
    }
}

/// Kraus form of a Pauli channel; `weights` is indexed by base-4 Pauli strings
/// with qubit 0 as the most significant digit.
fn pauli_kraus(qubits: usize, weights: &[f64]) -> KrausChannel {
    let ops = weights
        .iter()
        .enumerate()
        .filter(|(_, &w)| w > 0.0)
        .map(|(idx, &w)| {
            let ks: Vec<u8> = (0..qubits).map(|j| ((idx >> (2 * (qubits - 1 - j))) & 3) as u8).collect();
            linalg::pauli_string(&ks) * C64::new(w.sqrt(), 0.0)
        })
        .collect::<Vec<_>>();
    let ops = if ops.is_empty() { vec![CMatrix::from_element(1 << qubits, 1 << qubits, ZERO)] } else { ops };
    KrausChannel { qubits, ops }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::{DensityMatrix, PureState};

    fn random_state(q: usize, seed: u64) -> DensityMatrix {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let d = 1 << q;
        let g = CMatrix::from_fn(d, d, |_, _| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
        let m = &g * g.adjoint();
        let t = linalg::trace(&m);
        DensityMatrix::new(m / t).unwrap()
    }

    #[test]
    fn structured_channels_match_kraus_form() {
        let rho = random_state(3, 11);
        let chans: Vec<Box<dyn QuantumChannel>> = vec![
            Box::new(Depolarizing::new(3, 0.37).unwrap()),
            Box::new(LocalDepolarizing::new(3, 0.21).unwrap()),
        ];
        for ch in &chans {
            let fast = ch.apply_operator(rho.matrix());
            let k = ch.kraus();
            KrausChannel::new(k.ops().to_vec()).unwrap();
            let slow = k.apply_operator(rho.matrix());
            assert!(linalg::max_abs_diff(&fast, &slow) < 1e-12, "{}", ch.label());
            assert!((ch.entanglement_fidelity() - k.entanglement_fidelity()).abs() < 1e-12);
        }
    }

    #[test]
    fn fidelities_of_reference_channels() {
        let full = Depolarizing::new(2, 1.0).unwrap();
        assert!((full.entanglement_fidelity() - 1.0 / 16.0).abs() < 1e-15);
        let id = KrausChannel::identity(2).unwrap();
        assert!((id.entanglement_fidelity() - 1.0).abs() < 1e-15);
        let ld = LocalDepolarizing::new(2, 0.4).unwrap();
        assert!((ld.entanglement_fidelity() - 0.7f64 * 0.7).abs() < 1e-15);
    }

    #[test]
    fn mixed_unitary_detection() {
        let w = Depolarizing::new(1, 0.5).unwrap().kraus().mixed_unitary_weights().unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // amplitude damping is not mixed-unitary
        let g = 0.3f64;
        let k0 = CMatrix::from_row_slice(2, 2, &[C64::new(1.0, 0.0), ZERO, ZERO, C64::new((1.0 - g).sqrt(), 0.0)]);
        let k1 = CMatrix::from_row_slice(2, 2, &[ZERO, C64::new(g.sqrt(), 0.0), ZERO, ZERO]);
        let ad = KrausChannel::new(vec![k0, k1]).unwrap();
        assert!(ad.mixed_unitary_weights().is_none());
    }

    #[test]
    fn rejects_non_trace_preserving() {
        let k = linalg::identity(2) * C64::new(0.5, 0.0);
        assert!(matches!(KrausChannel::new(vec![k]), Err(Error::NotTracePreserving(_))));
        assert!(KrausChannel::new(vec![]).is_err());
    }

    #[test]
    fn local_depolarizing_full_strength_is_global_for_one_qubit() {
        let psi = PureState::basis(1, 0).unwrap().to_density();
        let a = LocalDepolarizing::new(1, 1.0).unwrap().apply_operator(psi.matrix());
        let b = Depolarizing::new(1, 1.0).unwrap().apply_operator(psi.matrix());
        assert!(linalg::max_abs_diff(&a, &b) < 1e-15);
    }
}
