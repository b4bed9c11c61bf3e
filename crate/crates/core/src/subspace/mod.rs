//! Subspace refinement: weighted QR of raw fields, Rayleigh–Ritz projection
//! and lifting of the small eigenvectors.

mod field;

pub use field::{FieldMatrix, FieldRole};

use std::time::Instant;

use crate::error::{Error, Result};
use crate::laplacian::DiagonalMass;
use crate::numerics::{dense_sym_eig, thin_qr, DenseMatrix, SparseSymmetric};

/// Outcome of the rank check in [`weighted_orthonormalize`].
#[derive(Debug, Clone, PartialEq)]
pub struct RankReport {
    pub requested: usize,
    pub rank: usize,
    /// Input columns dropped as numerically dependent.
    pub dropped: Vec<usize>,
}

impl RankReport {
    pub fn is_full_rank(&self) -> bool {
        self.dropped.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct Orthonormalized {
    pub basis: FieldMatrix,
    pub report: RankReport,
}

/// `Z = √M F = QR`, `Y = M^{-1/2} Q`.
///
/// Columns whose `R` diagonal falls below `1e-10` of their own norm are
/// dropped and the factorization is redone on the survivors.
pub fn weighted_orthonormalize(f: &FieldMatrix, m: &DiagonalMass) -> Result<Orthonormalized> {
    let (n, cols) = (f.n_points(), f.n_fields());
    if m.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: m.len(),
        });
    }
    if n < cols {
        return Err(Error::InvalidInput(format!(
            "need at least as many points as fields (N = {n}, m = {cols})"
        )));
    }
    let sqrt_w = m.sqrt();
    let mut kept: Vec<usize> = (0..cols).collect();
    let mut z = f.matrix().scale_rows(&sqrt_w);
    loop {
        if kept.is_empty() {
            return Err(Error::Numerical("all fields are numerically zero".into()));
        }
        let qr = thin_qr(&z)?;
        if qr.deficient.is_empty() {
            let y = qr.q.scale_rows(&m.inv_sqrt());
            let dropped = (0..cols).filter(|c| !kept.contains(c)).collect::<Vec<_>>();
            if !dropped.is_empty() {
                log::warn!(
                    "field matrix rank {} < {cols}; dropped columns {dropped:?}",
                    kept.len()
                );
            }
            return Ok(Orthonormalized {
                basis: FieldMatrix::tagged(y, FieldRole::OrthoY),
                report: RankReport {
                    requested: cols,
                    rank: kept.len(),
                    dropped,
                },
            });
        }
        let survivors: Vec<usize> = (0..kept.len())
            .filter(|j| !qr.deficient.contains(j))
            .collect();
        z = z.select_columns(&survivors);
        kept = survivors.iter().map(|&j| kept[j]).collect();
    }
}

/// Ritz pairs of `(L, M)` on an M-orthonormal basis.
#[derive(Debug, Clone)]
pub struct RitzResult {
    pub values: Vec<f64>,
    pub vectors: FieldMatrix,
    /// The M-orthonormal basis the pairs were extracted from.
    pub basis: FieldMatrix,
    /// Per pair `‖L û - λ̂ M û‖_{M⁻¹}`.
    pub residuals: Vec<f64>,
    /// Per pair `‖L û - λ̂ M û‖₂`.
    pub residuals_l2: Vec<f64>,
}

impl RitzResult {
    pub fn subspace_dim(&self) -> usize {
        self.basis.n_fields()
    }

    pub fn retained(&self) -> usize {
        self.values.len()
    }
}

/// `L̂ = YᵀLY` (symmetrized), `L̂ v = λ̂ v`, `û = Y v`; keeps the `k` smallest.
pub fn rayleigh_ritz(
    y: &FieldMatrix,
    l: &SparseSymmetric,
    m: &DiagonalMass,
    k: usize,
) -> Result<RitzResult> {
    let mut t = StageTimings::default();
    rayleigh_ritz_timed(y, l, m, k, &mut t)
}

fn rayleigh_ritz_timed(
    y: &FieldMatrix,
    l: &SparseSymmetric,
    m: &DiagonalMass,
    k: usize,
    timings: &mut StageTimings,
) -> Result<RitzResult> {
    if y.role() == FieldRole::RawF {
        return Err(Error::InvalidInput(
            "Rayleigh–Ritz needs an M-orthonormal basis, got raw fields".into(),
        ));
    }
    if y.n_points() != l.n() || m.len() != l.n() {
        return Err(Error::DimensionMismatch {
            expected: l.n(),
            found: y.n_points(),
        });
    }
    if k > y.n_fields() {
        return Err(Error::InvalidInput(format!(
            "k = {k} exceeds the basis dimension {}",
            y.n_fields()
        )));
    }
    let ym = y.matrix();

    let start = Instant::now();
    let ly = l.mul_dense(ym);
    let lhat = ym.t_matmul(&ly).symmetrized();
    timings.projection = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let eig = dense_sym_eig(&lhat)?;
    timings.dense_eig = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let v = eig.vectors.columns(0, k);
    let u = ym.matmul(&v);
    timings.lift = start.elapsed().as_secs_f64();

    let values = eig.values[..k].to_vec();
    let lu = ly.matmul(&v);
    let w = m.weights();
    let (residuals, residuals_l2) = values
        .iter()
        .enumerate()
        .map(|(j, &lam)| {
            let (mut a, mut b) = (0.0, 0.0);
            for ((x, y), wi) in lu.col(j).iter().zip(u.col(j)).zip(w) {
                let r = x - lam * wi * y;
                a += r * r / wi;
                b += r * r;
            }
            (a.sqrt(), b.sqrt())
        })
        .unzip();
    Ok(RitzResult {
        values,
        vectors: FieldMatrix::tagged(u, FieldRole::EigvecU),
        basis: y.clone(),
        residuals,
        residuals_l2,
    })
}

/// Wall time per non-network stage, in seconds.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StageTimings {
    pub qr: f64,
    pub projection: f64,
    pub dense_eig: f64,
    pub lift: f64,
}

impl StageTimings {
    pub const CSV_HEADER: &'static str = "stage,name,N,m,seconds";

    pub fn stages(&self) -> [(&'static str, f64); 4] {
        [
            ("qr", self.qr),
            ("projection", self.projection),
            ("dense_eig", self.dense_eig),
            ("lift", self.lift),
        ]
    }

    /// One CSV row per stage, without header.
    pub fn csv_rows(&self, n: usize, m: usize) -> String {
        self.stages()
            .iter()
            .enumerate()
            .map(|(i, (name, s))| format!("{},{name},{n},{m},{s:e}\n", i + 1))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Recovery {
    pub ritz: RitzResult,
    pub rank: RankReport,
    pub timings: StageTimings,
}

/// Weighted orthonormalization followed by Rayleigh–Ritz, timed per stage.
pub fn recover_eigenpairs(
    f: &FieldMatrix,
    l: &SparseSymmetric,
    m: &DiagonalMass,
    k: usize,
) -> Result<Recovery> {
    let mut timings = StageTimings::default();
    let start = Instant::now();
    let ortho = weighted_orthonormalize(f, m)?;
    timings.qr = start.elapsed().as_secs_f64();
    let ritz = rayleigh_ritz_timed(&ortho.basis, l, m, k, &mut timings)?;
    Ok(Recovery {
        ritz,
        rank: ortho.report,
        timings,
    })
}

/// `(FᵀMF)` for quick orthonormality diagnostics.
pub fn mass_gram(f: &DenseMatrix, m: &DiagonalMass) -> DenseMatrix {
    f.t_matmul(&f.scale_rows(m.weights())).symmetrized()
}
