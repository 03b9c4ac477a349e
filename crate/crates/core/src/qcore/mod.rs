//! Dense multi-qubit states, unitaries, channels and metrics.

mod channel;
pub mod linalg;

use std::ops::Mul;
use std::sync::OnceLock;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

pub use channel::{
    Depolarizing, KrausChannel, LocalDepolarizing, MixedUnitary, QuantumChannel, UnitaryChannel,
};
pub use linalg::{CMatrix, C64};

use crate::error::{Error, Result};
use linalg::{hermitian_eigenvalues, ONE, ZERO};

pub const DEFAULT_QUBIT_CAP: usize = 10;
pub const HERMITIAN_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-10;
pub const PSD_TOL: f64 = 1e-9;
pub const UNITARY_TOL: f64 = 1e-9;
pub const PROJECTOR_TOL: f64 = 1e-9;
/// Eigenvalues below this are treated as zero before taking logarithms.
pub const EIGEN_CLIP: f64 = 1e-12;
/// Acceptance probabilities at or below this are a hard reject.
pub const REJECT_FLOOR: f64 = 1e-12;

/// Qubit cap, read once from `PQASLAB_CAP`.
pub fn qubit_cap() -> usize {
    static CAP: OnceLock<usize> = OnceLock::new();
    *CAP.get_or_init(|| {
        std::env::var("PQASLAB_CAP")
            .ok()
            .and_then(|s| s.trim().parse().ok())
            .unwrap_or(DEFAULT_QUBIT_CAP)
    })
}

pub fn check_cap(qubits: usize) -> Result<()> {
    let cap = qubit_cap();
    if qubits > cap {
        return Err(Error::CapExceeded { qubits, cap });
    }
    Ok(())
}

fn expect_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// Message, tag and mixed register sizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QubitPartition {
    pub n: usize,
    pub l: usize,
    pub m: usize,
}

impl QubitPartition {
    pub fn new(n: usize, l: usize, m: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::param("n", "message register needs at least one qubit"));
        }
        check_cap(n + l + m)?;
        Ok(QubitPartition { n, l, m })
    }

    pub fn z(&self) -> usize {
        self.n + self.l + self.m
    }

    pub fn dim(&self) -> usize {
        1 << self.z()
    }

    pub fn layout(&self) -> [usize; 3] {
        [self.n, self.l, self.m]
    }

    /// `|0_ℓ⟩⟨0_ℓ| ⊗ σ_m`, the state appended to every message.
    pub fn padding(&self) -> DensityMatrix {
        let d_l = 1usize << self.l;
        let d_m = 1usize << self.m;
        let mut mat = CMatrix::zeros(d_l * d_m, d_l * d_m);
        for b in 0..d_m {
            mat[(b, b)] = C64::new(1.0 / d_m as f64, 0.0);
        }
        DensityMatrix { qubits: self.l + self.m, mat }
    }

    /// `ρ ⊗ |0_ℓ⟩⟨0_ℓ| ⊗ σ_m`.
    pub fn pad(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        expect_dim(1 << self.n, rho.dim())?;
        rho.tensor(&self.padding())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    qubits: usize,
    amps: DVector<C64>,
}

impl PureState {
    pub fn new(amps: DVector<C64>) -> Result<Self> {
        let qubits = linalg::log2_dim(amps.len())?;
        check_cap(qubits)?;
        let norm2 = amps.norm_squared();
        if (norm2 - 1.0).abs() > TRACE_TOL {
            return Err(Error::InvalidState(format!("squared norm {norm2} is not 1")));
        }
        Ok(PureState { qubits, amps })
    }

    pub fn normalized(amps: DVector<C64>) -> Result<Self> {
        let norm = amps.norm();
        if norm == 0.0 {
            return Err(Error::InvalidState("zero vector".into()));
        }
        Self::new(amps / C64::new(norm, 0.0))
    }

    pub fn basis(qubits: usize, index: usize) -> Result<Self> {
        check_cap(qubits)?;
        let d = 1usize << qubits;
        if index >= d {
            return Err(Error::param("index", format!("{index} out of range for {qubits} qubits")));
        }
        let mut amps = DVector::from_element(d, ZERO);
        amps[index] = ONE;
        Ok(PureState { qubits, amps })
    }

    /// `(|0…0⟩ + |1…1⟩)/√2`.
    pub fn ghz(qubits: usize) -> Result<Self> {
        check_cap(qubits)?;
        let d = 1usize << qubits;
        let mut amps = DVector::from_element(d, ZERO);
        let a = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        amps[0] += a;
        amps[d - 1] += a;
        Self::normalized(amps)
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amps
    }

    pub fn tensor(&self, other: &PureState) -> Result<PureState> {
        check_cap(self.qubits + other.qubits)?;
        Ok(PureState {
            qubits: self.qubits + other.qubits,
            amps: self.amps.kronecker(&other.amps),
        })
    }

    pub fn apply(&self, u: &UnitaryMatrix) -> Result<PureState> {
        expect_dim(self.dim(), u.dim())?;
        Ok(PureState { qubits: self.qubits, amps: &u.mat * &self.amps })
    }

    pub fn to_density(&self) -> DensityMatrix {
        DensityMatrix::from_raw(&self.amps * self.amps.adjoint())
    }

    pub fn inner(&self, other: &PureState) -> Result<C64> {
        expect_dim(self.dim(), other.dim())?;
        Ok(self.amps.dotc(&other.amps))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UnitaryMatrix {
    qubits: usize,
    mat: CMatrix,
}

impl UnitaryMatrix {
    pub fn new(mat: CMatrix) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::DimensionMismatch { expected: mat.nrows(), found: mat.ncols() });
        }
        let qubits = linalg::log2_dim(mat.nrows())?;
        check_cap(qubits)?;
        let err = linalg::unitarity_error(&mat);
        if err > UNITARY_TOL {
            return Err(Error::NotUnitary(err));
        }
        Ok(UnitaryMatrix { qubits, mat })
    }

    pub(crate) fn from_raw(mat: CMatrix) -> Self {
        let qubits = mat.nrows().trailing_zeros() as usize;
        debug_assert!(mat.nrows().is_power_of_two());
        debug_assert!(linalg::unitarity_error(&mat) <= UNITARY_TOL);
        UnitaryMatrix { qubits, mat }
    }

    pub fn identity(qubits: usize) -> Result<Self> {
        check_cap(qubits)?;
        Ok(UnitaryMatrix { qubits, mat: linalg::identity(1 << qubits) })
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.mat
    }

    pub fn into_matrix(self) -> CMatrix {
        self.mat
    }

    pub fn adjoint(&self) -> UnitaryMatrix {
        UnitaryMatrix { qubits: self.qubits, mat: self.mat.adjoint() }
    }

    pub fn kron(&self, other: &UnitaryMatrix) -> Result<UnitaryMatrix> {
        check_cap(self.qubits + other.qubits)?;
        Ok(UnitaryMatrix {
            qubits: self.qubits + other.qubits,
            mat: linalg::kron(&self.mat, &other.mat),
        })
    }

    pub fn compose(&self, other: &UnitaryMatrix) -> Result<UnitaryMatrix> {
        expect_dim(self.dim(), other.dim())?;
        Ok(UnitaryMatrix { qubits: self.qubits, mat: &self.mat * &other.mat })
    }

    pub fn unitarity_error(&self) -> f64 {
        linalg::unitarity_error(&self.mat)
    }
}

impl Mul for &UnitaryMatrix {
    type Output = UnitaryMatrix;

    /// Panics on dimension mismatch; use [`UnitaryMatrix::compose`] for a checked product.
    fn mul(self, rhs: &UnitaryMatrix) -> UnitaryMatrix {
        self.compose(rhs).expect("unitary dimensions must match")
    }
}

/// Outcome of a projective measurement.
#[derive(Clone, Debug)]
pub struct Projection {
    pub prob: f64,
    /// Normalized post-measurement state, `None` when `prob <= REJECT_FLOOR`.
    pub post: Option<DensityMatrix>,
}

impl Projection {
    pub fn rejected(&self) -> bool {
        self.post.is_none()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    qubits: usize,
    mat: CMatrix,
}

impl DensityMatrix {
    /// Validates shape, hermiticity, trace and positivity.
    pub fn new(mat: CMatrix) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::DimensionMismatch { expected: mat.nrows(), found: mat.ncols() });
        }
        let qubits = linalg::log2_dim(mat.nrows())?;
        check_cap(qubits)?;
        let herr = linalg::hermiticity_error(&mat);
        if herr > HERMITIAN_TOL {
            return Err(Error::InvalidState(format!("not Hermitian (deviation {herr:.3e})")));
        }
        let tr = linalg::trace(&mat).re;
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace {tr} is not 1")));
        }
        let min = hermitian_eigenvalues(&mat)[0];
        if min < -PSD_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {min:.3e}")));
        }
        Ok(DensityMatrix { qubits, mat })
    }

    /// Internal constructor for outputs of invariant-preserving operations.
    /// Re-symmetrizes to stop Hermitian drift from accumulating.
    pub(crate) fn from_raw(mat: CMatrix) -> Self {
        debug_assert!(mat.nrows().is_power_of_two() && mat.nrows() == mat.ncols());
        let mat = linalg::hermitize(&mat);
        debug_assert!(
            (linalg::trace(&mat).re - 1.0).abs() <= 1e-8,
            "trace drifted to {}",
            linalg::trace(&mat).re
        );
        DensityMatrix { qubits: mat.nrows().trailing_zeros() as usize, mat }
    }

    pub fn maximally_mixed(qubits: usize) -> Result<Self> {
        check_cap(qubits)?;
        let d = 1usize << qubits;
        Ok(DensityMatrix {
            qubits,
            mat: CMatrix::from_diagonal_element(d, d, C64::new(1.0 / d as f64, 0.0)),
        })
    }

    pub fn basis(qubits: usize, index: usize) -> Result<Self> {
        Ok(PureState::basis(qubits, index)?.to_density())
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.mat
    }

    pub fn into_matrix(self) -> CMatrix {
        self.mat
    }

    pub fn tensor(&self, other: &DensityMatrix) -> Result<DensityMatrix> {
        check_cap(self.qubits + other.qubits)?;
        Ok(DensityMatrix {
            qubits: self.qubits + other.qubits,
            mat: linalg::kron(&self.mat, &other.mat),
        })
    }

    /// `layout` lists register sizes in qubits; registers in `discard` are traced out.
    pub fn partial_trace(&self, layout: &[usize], discard: &[usize]) -> Result<DensityMatrix> {
        Ok(DensityMatrix::from_raw(linalg::partial_trace(&self.mat, layout, discard)?))
    }

    pub fn apply_unitary(&self, u: &UnitaryMatrix) -> Result<DensityMatrix> {
        expect_dim(self.dim(), u.dim())?;
        Ok(DensityMatrix::from_raw(&u.mat * &self.mat * u.mat.adjoint()))
    }

    /// Applies `u` to one register of `layout`, identity elsewhere.
    pub fn apply_on_register(&self, u: &UnitaryMatrix, layout: &[usize], reg: usize) -> Result<DensityMatrix> {
        Ok(DensityMatrix::from_raw(linalg::conjugate_register(&self.mat, &u.mat, layout, reg)?))
    }

    pub fn apply_channel(&self, ch: &dyn QuantumChannel) -> Result<DensityMatrix> {
        expect_dim(self.dim(), 1 << ch.qubits())?;
        Ok(DensityMatrix::from_raw(ch.apply_operator(&self.mat)))
    }

    pub fn permute_registers(&self, layout: &[usize], order: &[usize]) -> Result<DensityMatrix> {
        Ok(DensityMatrix { qubits: self.qubits, mat: linalg::permute_registers(&self.mat, layout, order)? })
    }

    pub fn project(&self, projector: &CMatrix) -> Result<Projection> {
        expect_dim(self.dim(), projector.nrows())?;
        expect_dim(self.dim(), projector.ncols())?;
        let dev = linalg::max_abs_diff(&(projector * projector), projector)
            .max(linalg::hermiticity_error(projector));
        if dev > PROJECTOR_TOL {
            return Err(Error::NotAProjector(dev));
        }
        let sandwiched = projector * &self.mat * projector;
        let prob = linalg::trace(&sandwiched).re.clamp(0.0, 1.0);
        let post = (prob > REJECT_FLOOR)
            .then(|| DensityMatrix::from_raw(sandwiched / C64::new(prob, 0.0)));
        Ok(Projection { prob, post })
    }

    pub fn trace(&self) -> f64 {
        linalg::trace(&self.mat).re
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.mat)
    }

    pub fn purity(&self) -> f64 {
        self.mat.iter().map(|x| x.norm_sqr()).sum()
    }

    /// Von Neumann entropy in bits.
    pub fn vn_entropy(&self) -> f64 {
        self.eigenvalues()
            .into_iter()
            .filter(|&x| x > EIGEN_CLIP)
            .map(|x| -x * x.log2())
            .sum()
    }

    pub fn trace_distance(&self, other: &DensityMatrix) -> Result<f64> {
        expect_dim(self.dim(), other.dim())?;
        Ok(0.5 * linalg::trace_norm_hermitian(&(&self.mat - &other.mat)))
    }

    /// `tr(ρσ)`.
    pub fn overlap(&self, other: &DensityMatrix) -> Result<f64> {
        expect_dim(self.dim(), other.dim())?;
        Ok(linalg::trace_of_product(&self.mat, &other.mat).re)
    }

    /// `⟨ψ|ρ|ψ⟩`.
    pub fn fidelity_with_pure(&self, psi: &PureState) -> Result<f64> {
        expect_dim(self.dim(), psi.dim())?;
        Ok(psi.amps.dotc(&(&self.mat * &psi.amps)).re)
    }

    pub fn validate(&self) -> Result<()> {
        DensityMatrix::new(self.mat.clone()).map(|_| ())
    }
}

/// Bundle of pairwise metrics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    pub trace_distance: f64,
    pub overlap: f64,
    pub purity: f64,
    pub vn_entropy_bits: f64,
}

/// Metrics of `rho` relative to `sigma`; purity and entropy refer to `rho`.
pub fn metrics(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<Metrics> {
    Ok(Metrics {
        trace_distance: rho.trace_distance(sigma)?,
        overlap: rho.overlap(sigma)?,
        purity: rho.purity(),
        vn_entropy_bits: rho.vn_entropy(),
    })
}

pub fn maximally_mixed(qubits: usize) -> Result<DensityMatrix> {
    DensityMatrix::maximally_mixed(qubits)
}

pub fn tensor(a: &DensityMatrix, b: &DensityMatrix) -> Result<DensityMatrix> {
    a.tensor(b)
}

/// SWAP-test acceptance probability `(1 + tr ρσ)/2`.
pub fn swap_test_accept(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    Ok(0.5 * (1.0 + rho.overlap(sigma)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bell() -> DensityMatrix {
        PureState::ghz(2).unwrap().to_density()
    }

    #[test]
    fn maximally_mixed_examples() {
        let s1 = maximally_mixed(1).unwrap();
        assert_eq!(s1.matrix()[(0, 0)], C64::new(0.5, 0.0));
        assert_eq!(s1.matrix()[(0, 1)], ZERO);
        let s0 = maximally_mixed(0).unwrap();
        assert_eq!(s0.dim(), 1);
        assert_eq!(s0.matrix()[(0, 0)], ONE);
        assert!((maximally_mixed(2).unwrap().purity() - 0.25).abs() < 1e-15);
        assert!(matches!(maximally_mixed(64), Err(Error::CapExceeded { .. })));
    }

    #[test]
    fn tensor_examples() {
        let zero = DensityMatrix::basis(1, 0).unwrap();
        let t = tensor(&zero, &maximally_mixed(1).unwrap()).unwrap();
        let diag: Vec<f64> = t.matrix().diagonal().iter().map(|x| x.re).collect();
        assert_eq!(diag, vec![0.5, 0.5, 0.0, 0.0]);
        let scalar = maximally_mixed(0).unwrap();
        assert_eq!(bell().tensor(&scalar).unwrap(), bell());
        assert!((t.trace() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn partial_trace_examples() {
        let r = bell().partial_trace(&[1, 1], &[1]).unwrap();
        assert!(r.trace_distance(&maximally_mixed(1).unwrap()).unwrap() < 1e-15);
        assert_eq!(bell().partial_trace(&[1, 1], &[]).unwrap(), bell());
    }

    #[test]
    fn unitary_and_channel_examples() {
        let rho = bell();
        let id = UnitaryMatrix::identity(2).unwrap();
        assert!(rho.apply_unitary(&id).unwrap().trace_distance(&rho).unwrap() < 1e-15);
        let full = Depolarizing::new(2, 1.0).unwrap();
        let out = rho.apply_channel(&full).unwrap();
        assert!(out.trace_distance(&maximally_mixed(2).unwrap()).unwrap() < 1e-15);
        assert!(matches!(
            rho.apply_unitary(&UnitaryMatrix::identity(1).unwrap()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn projection_examples() {
        let mixed = maximally_mixed(1).unwrap();
        let p0 = DensityMatrix::basis(1, 0).unwrap().into_matrix();
        let out = mixed.project(&p0).unwrap();
        assert!((out.prob - 0.5).abs() < 1e-15);
        assert!(out.post.unwrap().trace_distance(&DensityMatrix::basis(1, 0).unwrap()).unwrap() < 1e-15);
        let all = mixed.project(&linalg::identity(2)).unwrap();
        assert!((all.prob - 1.0).abs() < 1e-15);
        let zero = DensityMatrix::basis(1, 0).unwrap();
        let p1 = DensityMatrix::basis(1, 1).unwrap().into_matrix();
        assert!(zero.project(&p1).unwrap().rejected());
        let not_proj = linalg::identity(2) * C64::new(2.0, 0.0);
        assert!(matches!(zero.project(&not_proj), Err(Error::NotAProjector(_))));
    }

    #[test]
    fn metric_examples() {
        let zero = DensityMatrix::basis(1, 0).unwrap();
        let mixed = maximally_mixed(1).unwrap();
        assert!((zero.trace_distance(&mixed).unwrap() - 0.5).abs() < 1e-15);
        for m in 0..4 {
            let s = maximally_mixed(m).unwrap();
            assert!((s.vn_entropy() - m as f64).abs() < 1e-12);
            assert!((s.purity() - 0.5f64.powi(m as i32)).abs() < 1e-15);
        }
        let plus = PureState::normalized(DVector::from_vec(vec![ONE, ONE])).unwrap();
        assert!((mixed.fidelity_with_pure(&plus).unwrap() - 0.5).abs() < 1e-15);
        let m = metrics(&zero, &mixed).unwrap();
        assert!((m.overlap - 0.5).abs() < 1e-15);
        assert_eq!(m.vn_entropy_bits, 0.0);
    }

    #[test]
    fn swap_test_examples() {
        let zero = DensityMatrix::basis(1, 0).unwrap();
        let one = DensityMatrix::basis(1, 1).unwrap();
        let mixed = maximally_mixed(1).unwrap();
        assert!((swap_test_accept(&zero, &zero).unwrap() - 1.0).abs() < 1e-15);
        assert!((swap_test_accept(&zero, &one).unwrap() - 0.5).abs() < 1e-15);
        assert!((swap_test_accept(&mixed, &mixed).unwrap() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn constructor_validation() {
        let bad_trace = linalg::identity(2);
        assert!(matches!(DensityMatrix::new(bad_trace), Err(Error::InvalidState(_))));
        let mut neg = CMatrix::zeros(2, 2);
        neg[(0, 0)] = C64::new(1.5, 0.0);
        neg[(1, 1)] = C64::new(-0.5, 0.0);
        assert!(matches!(DensityMatrix::new(neg), Err(Error::InvalidState(_))));
        assert!(matches!(DensityMatrix::new(CMatrix::zeros(3, 3)), Err(Error::NotPowerOfTwo(3))));
        assert!(matches!(UnitaryMatrix::new(linalg::identity(2) * C64::new(2.0, 0.0)), Err(Error::NotUnitary(_))));
        assert!(QubitPartition::new(0, 1, 1).is_err());
        assert_eq!(QubitPartition::new(2, 1, 3).unwrap().z(), 6);
    }
}
