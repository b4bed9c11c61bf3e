//! Span and orthogonality objectives with their analytic gradient.

use crate::error::{Error, Result};
use crate::laplacian::DiagonalMass;
use crate::numerics::{dense_sym_eigvals, Cholesky, DenseMatrix};
use crate::subspace::{weighted_orthonormalize, FieldMatrix, FieldRole};

pub const DEFAULT_ALPHA: f64 = 1e-3;

/// Gram condition number above which the Gram path refuses to run.
pub const MAX_GRAM_CONDITION: f64 = 1e12;

/// Tolerance for the target's `UᵀMU = I` check.
const TARGET_ORTHO_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    /// Raw (unclamped) `1 - (1/k) Σ_j ‖Yᵀ M u_j‖²`.
    pub span_loss: f64,
    pub ortho_loss: f64,
    pub total: f64,
    pub alpha: f64,
    /// Energy of each target mode outside the candidate span.
    pub per_mode_residuals: Vec<f64>,
    /// Condition number of `FᵀMF` (1 on the QR path).
    pub gram_condition: f64,
}

impl LossReport {
    /// Span loss clamped to `[0, 1]` for display.
    pub fn span_loss_clamped(&self) -> f64 {
        self.span_loss.clamp(0.0, 1.0)
    }
}

fn check_target(u: &FieldMatrix, m: &DiagonalMass, n: usize) -> Result<()> {
    if u.n_points() != n || m.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: u.n_points(),
        });
    }
    if u.n_fields() == 0 {
        return Err(Error::InvalidInput("target has no modes".into()));
    }
    let dev = u.orthonormality_error(m)?;
    if !(dev <= TARGET_ORTHO_TOL) {
        return Err(Error::Numerical(format!(
            "target modes are not M-orthonormal (deviation {dev:e})"
        )));
    }
    Ok(())
}

/// Span loss of the subspace spanned by `f` against target modes `u`.
///
/// Raw fields are orthonormalized first (weighted QR); bases tagged
/// orthonormal are used as given.
pub fn span_loss(f: &FieldMatrix, m: &DiagonalMass, u: &FieldMatrix) -> Result<LossReport> {
    check_target(u, m, f.n_points())?;
    let y = match f.role() {
        FieldRole::RawF => weighted_orthonormalize(f, m)?.basis,
        _ => f.clone(),
    };
    let proj = y.matrix().t_matmul(&u.matrix().scale_rows(m.weights()));
    let per_mode: Vec<f64> = (0..proj.cols())
        .map(|j| 1.0 - proj.col(j).iter().map(|c| c * c).sum::<f64>())
        .collect();
    let span = per_mode.iter().sum::<f64>() / per_mode.len() as f64;
    Ok(LossReport {
        span_loss: span,
        ortho_loss: 0.0,
        total: span,
        alpha: 0.0,
        per_mode_residuals: per_mode,
        gram_condition: 1.0,
    })
}

/// `‖FᵀMF - I‖_F²`.
pub fn ortho_loss(f: &DenseMatrix, m: &DiagonalMass) -> f64 {
    let g = f.t_matmul(&f.scale_rows(m.weights()));
    let mut s = 0.0;
    for j in 0..g.cols() {
        for i in 0..g.rows() {
            let d = g[(i, j)] - if i == j { 1.0 } else { 0.0 };
            s += d * d;
        }
    }
    s
}

struct GramPath {
    g: DenseMatrix,
    s: DenseMatrix,
    per_mode: Vec<f64>,
    condition: f64,
}

fn gram_path(f: &DenseMatrix, m: &DiagonalMass, u: &DenseMatrix) -> Result<GramPath> {
    let mf = f.scale_rows(m.weights());
    let g = f.t_matmul(&mf).symmetrized();
    let c = mf.t_matmul(u);
    let ev = dense_sym_eigvals(&g)?;
    let (lo, hi) = (ev[0], *ev.last().unwrap());
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition <= MAX_GRAM_CONDITION) {
        return Err(Error::IllConditioned { condition });
    }
    let chol = Cholesky::new(&g)?;
    let mut s = c.clone();
    for j in 0..s.cols() {
        chol.solve_in_place(s.col_mut(j));
    }
    let per_mode = (0..c.cols())
        .map(|j| 1.0 - c.col(j).iter().zip(s.col(j)).map(|(a, b)| a * b).sum::<f64>())
        .collect();
    Ok(GramPath {
        g,
        s,
        per_mode,
        condition,
    })
}

/// Span loss through the Gram projector `F (FᵀMF)⁻¹ FᵀM`:
/// `r_j = 1 - c_jᵀ G⁻¹ c_j` with `C = FᵀMU`, `G = FᵀMF`.
pub fn span_loss_gram(f: &FieldMatrix, m: &DiagonalMass, u: &FieldMatrix) -> Result<LossReport> {
    check_target(u, m, f.n_points())?;
    let gp = gram_path(f.matrix(), m, u.matrix())?;
    let span = gp.per_mode.iter().sum::<f64>() / gp.per_mode.len() as f64;
    Ok(LossReport {
        span_loss: span,
        ortho_loss: 0.0,
        total: span,
        alpha: 0.0,
        per_mode_residuals: gp.per_mode,
        gram_condition: gp.condition,
    })
}

/// Gradient of `span + α·ortho` with respect to `F` (Gram path):
/// `(2/k) M (F S - U) Sᵀ + 4α M F (G - I)`, `S = G⁻¹ C`.
pub fn loss_gradient(
    f: &FieldMatrix,
    m: &DiagonalMass,
    u: &FieldMatrix,
    alpha: f64,
) -> Result<(DenseMatrix, LossReport)> {
    check_target(u, m, f.n_points())?;
    let (fm, um) = (f.matrix(), u.matrix());
    let k = um.cols() as f64;
    let gp = gram_path(fm, m, um)?;

    let mut resid = fm.matmul(&gp.s).sub(um);
    resid.scale(2.0 / k);
    let span_grad = resid.matmul_t(&gp.s);
    let g_minus_i = gp.g.sub(&DenseMatrix::identity(gp.g.rows()));
    let ortho_grad = fm.matmul(&g_minus_i).scaled(4.0 * alpha);
    let grad = span_grad.add(&ortho_grad).scale_rows(m.weights());

    let ortho: f64 = g_minus_i.as_slice().iter().map(|v| v * v).sum();
    let span = gp.per_mode.iter().sum::<f64>() / gp.per_mode.len() as f64;
    Ok((
        grad,
        LossReport {
            span_loss: span,
            ortho_loss: ortho,
            total: span + alpha * ortho,
            alpha,
            per_mode_residuals: gp.per_mode,
            gram_condition: gp.condition,
        },
    ))
}

/// Total Gram-path loss without the gradient.
pub fn total_loss(f: &FieldMatrix, m: &DiagonalMass, u: &FieldMatrix, alpha: f64) -> Result<LossReport> {
    let mut r = span_loss_gram(f, m, u)?;
    r.alpha = alpha;
    r.ortho_loss = ortho_loss(f.matrix(), m);
    r.total = r.span_loss + alpha * r.ortho_loss;
    Ok(r)
}
