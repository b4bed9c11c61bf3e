//! Reference solvers for `L u = λ M u`: a dense oracle and block LOBPCG.

mod lobpcg;

pub use lobpcg::{smallest_eigenpairs_lobpcg, LobpcgOptions, LobpcgResult, Preconditioner};

use crate::error::{Error, Result};
use crate::laplacian::DiagonalMass;
use crate::numerics::{dense_sym_eig_smallest, dense_sym_eigvals, SparseSymmetric};
use crate::subspace::{FieldMatrix, FieldRole};

/// Densification bound of the oracle.
pub const DENSE_MAX_N: usize = 8192;

/// `k` smallest eigenpairs, ascending, with `UᵀMU = I`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub values: Vec<f64>,
    pub vectors: FieldMatrix,
}

impl Spectrum {
    pub fn k(&self) -> usize {
        self.values.len()
    }

    /// Per-pair `‖L u - λ M u‖_{M⁻¹}` and `‖L u - λ M u‖₂`.
    pub fn residuals(&self, l: &SparseSymmetric, m: &DiagonalMass) -> (Vec<f64>, Vec<f64>) {
        let u = self.vectors.matrix();
        let lu = l.mul_dense(u);
        let w = m.weights();
        self.values
            .iter()
            .enumerate()
            .map(|(j, &lam)| {
                let (mut wn, mut en) = (0.0, 0.0);
                for ((a, b), wi) in lu.col(j).iter().zip(u.col(j)).zip(w) {
                    let r = a - lam * wi * b;
                    wn += r * r / wi;
                    en += r * r;
                }
                (wn.sqrt(), en.sqrt())
            })
            .unzip()
    }
}

pub(crate) fn check_problem(l: &SparseSymmetric, m: &DiagonalMass, k: usize) -> Result<()> {
    if m.len() != l.n() {
        return Err(Error::DimensionMismatch {
            expected: l.n(),
            found: m.len(),
        });
    }
    if k == 0 || k > l.n() {
        return Err(Error::InvalidInput(format!(
            "requested k = {k} eigenpairs for N = {}",
            l.n()
        )));
    }
    Ok(())
}

fn check_dense(n: usize) -> Result<()> {
    if n > DENSE_MAX_N {
        return Err(Error::InvalidInput(format!(
            "dense oracle limited to N <= {DENSE_MAX_N}, got {n}"
        )));
    }
    Ok(())
}

/// Dense oracle: eigen-decomposes `M^{-1/2} L M^{-1/2}` and maps back with
/// `u = M^{-1/2} v`.
pub fn smallest_eigenpairs_dense(
    l: &SparseSymmetric,
    m: &DiagonalMass,
    k: usize,
) -> Result<Spectrum> {
    check_problem(l, m, k)?;
    check_dense(l.n())?;
    let s = m.inv_sqrt();
    let a = l.congruence_diagonal(&s).to_dense().symmetrized();
    let eig = dense_sym_eig_smallest(&a, k)?;
    Ok(Spectrum {
        values: eig.values,
        vectors: FieldMatrix::tagged(eig.vectors.scale_rows(&s), FieldRole::EigvecU),
    })
}

/// All eigenvalues of the pencil, ascending.
pub fn eigenvalues_dense(l: &SparseSymmetric, m: &DiagonalMass) -> Result<Vec<f64>> {
    check_problem(l, m, 1)?;
    check_dense(l.n())?;
    let s = m.inv_sqrt();
    dense_sym_eigvals(&l.congruence_diagonal(&s).to_dense().symmetrized())
}
