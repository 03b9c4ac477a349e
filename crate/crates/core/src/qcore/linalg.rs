//! Matrix helpers shared by every layer. Functions here work on raw
//! `CMatrix` values and do not enforce state invariants.

use faer::{Mat, Side};
use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<Complex64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

pub fn log2_dim(dim: usize) -> Result<usize> {
    if dim == 0 || !dim.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(dim));
    }
    Ok(dim.trailing_zeros() as usize)
}

pub fn identity(dim: usize) -> CMatrix {
    CMatrix::identity(dim, dim)
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn trace(m: &CMatrix) -> C64 {
    m.diagonal().iter().sum()
}

pub fn hermitize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn hermiticity_error(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut err = 0.0f64;
    for j in 0..n {
        for i in 0..=j {
            err = err.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    err
}

pub fn unitarity_error(u: &CMatrix) -> f64 {
    let g = u.adjoint() * u;
    max_abs_diff(&g, &identity(u.nrows()))
}

/// Eigenvalues of a Hermitian matrix in ascending order.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let mut ev: Vec<f64> = to_faer(m)
        .self_adjoint_eigenvalues(Side::Lower)
        .expect("Hermitian eigenvalues converge");
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

// nalgebra's complex tridiagonalization loses accuracy on some sparse,
// highly degenerate moment operators; faer's solver does not.
fn to_faer(m: &CMatrix) -> Mat<C64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Trace norm of a Hermitian matrix.
pub fn trace_norm_hermitian(m: &CMatrix) -> f64 {
    hermitian_eigenvalues(m).iter().map(|x| x.abs()).sum()
}

/// Projector onto the strictly positive eigenspace of a Hermitian matrix.
/// For `h = rho - sigma` this is the optimal Helstrom measurement.
pub fn positive_part_projector(h: &CMatrix) -> CMatrix {
    let eig = to_faer(h).self_adjoint_eigen(Side::Lower).expect("Hermitian eigendecomposition converges");
    let (s, u) = (eig.S(), eig.U());
    let n = h.nrows();
    let keep: Vec<usize> = (0..n).filter(|&k| s[k].re > 0.0).collect();
    let v = CMatrix::from_fn(n, keep.len(), |i, c| u[(i, keep[c])]);
    &v * v.adjoint()
}

/// `tr(a b)` without forming the product.
pub fn trace_of_product(a: &CMatrix, b: &CMatrix) -> C64 {
    let n = a.nrows();
    let mut acc = ZERO;
    for i in 0..n {
        for k in 0..n {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

pub fn pauli(k: u8) -> CMatrix {
    let (o, z, i) = (ONE, ZERO, C64::new(0.0, 1.0));
    match k & 3 {
        0 => CMatrix::from_row_slice(2, 2, &[o, z, z, o]),
        1 => CMatrix::from_row_slice(2, 2, &[z, o, o, z]),
        2 => CMatrix::from_row_slice(2, 2, &[z, -i, i, z]),
        _ => CMatrix::from_row_slice(2, 2, &[o, z, z, -o]),
    }
}

/// Kronecker product of single-qubit Paulis, qubit 0 leftmost.
pub fn pauli_string(ks: &[u8]) -> CMatrix {
    ks.iter().fold(CMatrix::identity(1, 1), |acc, &k| kron(&acc, &pauli(k)))
}

/// Bit offsets of each register (shift from the least significant end).
fn register_shifts(layout: &[usize]) -> Vec<usize> {
    let mut shifts = vec![0; layout.len()];
    let mut acc = 0;
    for r in (0..layout.len()).rev() {
        shifts[r] = acc;
        acc += layout[r];
    }
    shifts
}

fn check_layout(dim: usize, layout: &[usize]) -> Result<usize> {
    let q = log2_dim(dim)?;
    let total: usize = layout.iter().sum();
    if total != q {
        return Err(Error::InvalidLayout(format!(
            "register sizes {layout:?} sum to {total}, matrix has {q} qubits"
        )));
    }
    Ok(q)
}

/// Reduced operator on the registers not listed in `discard`.
pub fn partial_trace(m: &CMatrix, layout: &[usize], discard: &[usize]) -> Result<CMatrix> {
    let dim = m.nrows();
    check_layout(dim, layout)?;
    if let Some(&bad) = discard.iter().find(|&&r| r >= layout.len()) {
        return Err(Error::InvalidLayout(format!(
            "register {bad} out of range for layout {layout:?}"
        )));
    }
    if discard.is_empty() {
        return Ok(m.clone());
    }
    let shifts = register_shifts(layout);
    let keep: Vec<usize> = (0..layout.len()).filter(|r| !discard.contains(r)).collect();
    let dq: usize = discard.iter().map(|&r| layout[r]).sum();
    let kq: usize = keep.iter().map(|&r| layout[r]).sum();
    let (dk, dd) = (1usize << kq, 1usize << dq);

    // full index of (kept value, discarded value)
    let mut table = vec![0usize; dim];
    for f in 0..dim {
        let (mut k, mut d) = (0usize, 0usize);
        for r in 0..layout.len() {
            let v = (f >> shifts[r]) & ((1 << layout[r]) - 1);
            if discard.contains(&r) {
                d = (d << layout[r]) | v;
            } else {
                k = (k << layout[r]) | v;
            }
        }
        table[k * dd + d] = f;
    }
    let mut out = CMatrix::zeros(dk, dk);
    for j in 0..dk {
        for i in 0..dk {
            let mut acc = ZERO;
            for d in 0..dd {
                acc += m[(table[i * dd + d], table[j * dd + d])];
            }
            out[(i, j)] = acc;
        }
    }
    Ok(out)
}

/// `(I ⊗ op ⊗ I) m`, with `op` acting on register `reg` of `layout`.
pub fn left_apply(m: &CMatrix, op: &CMatrix, layout: &[usize], reg: usize) -> Result<CMatrix> {
    let dim = m.nrows();
    check_layout(dim, layout)?;
    if reg >= layout.len() {
        return Err(Error::InvalidLayout(format!("register {reg} out of range")));
    }
    let dr = 1usize << layout[reg];
    if op.nrows() != dr || op.ncols() != dr {
        return Err(Error::DimensionMismatch { expected: dr, found: op.nrows() });
    }
    let lo: usize = 1 << layout[reg + 1..].iter().sum::<usize>();
    let hi = dim / (dr * lo);
    let ncols = m.ncols();
    let src = m.as_slice();
    let mut out = CMatrix::zeros(dim, ncols);
    let dst = out.as_mut_slice();
    let mut buf = vec![ZERO; dr];
    for c in 0..ncols {
        let col = &src[c * dim..(c + 1) * dim];
        let ocol = &mut dst[c * dim..(c + 1) * dim];
        for h in 0..hi {
            for l in 0..lo {
                let base = h * dr * lo + l;
                for (r, b) in buf.iter_mut().enumerate() {
                    *b = col[base + r * lo];
                }
                for rp in 0..dr {
                    let mut acc = ZERO;
                    for (r, b) in buf.iter().enumerate() {
                        acc += op[(rp, r)] * b;
                    }
                    ocol[base + rp * lo] = acc;
                }
            }
        }
    }
    Ok(out)
}

/// `(I ⊗ op ⊗ I) m (I ⊗ op ⊗ I)†`.
pub fn conjugate_register(m: &CMatrix, op: &CMatrix, layout: &[usize], reg: usize) -> Result<CMatrix> {
    let y = left_apply(m, op, layout, reg)?;
    Ok(left_apply(&y.adjoint(), op, layout, reg)?.adjoint())
}

/// Reorders registers: output register `k` is input register `order[k]`.
pub fn permute_registers(m: &CMatrix, layout: &[usize], order: &[usize]) -> Result<CMatrix> {
    let dim = m.nrows();
    check_layout(dim, layout)?;
    let mut seen = vec![false; layout.len()];
    if order.len() != layout.len() || order.iter().any(|&r| r >= layout.len() || std::mem::replace(&mut seen[r], true)) {
        return Err(Error::InvalidLayout(format!("{order:?} is not a permutation of the registers")));
    }
    let shifts = register_shifts(layout);
    let map: Vec<usize> = (0..dim)
        .map(|f| {
            order.iter().fold(0usize, |acc, &r| {
                (acc << layout[r]) | ((f >> shifts[r]) & ((1 << layout[r]) - 1))
            })
        })
        .collect();
    let mut out = CMatrix::zeros(dim, dim);
    for j in 0..dim {
        for i in 0..dim {
            out[(map[i], map[j])] = m[(i, j)];
        }
    }
    Ok(out)
}
