use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{check_problem, Spectrum};
use crate::deflation::ic0_factor;
use crate::error::{Error, Result};
use crate::laplacian::DiagonalMass;
use crate::numerics::eig::dense_sym_eig_fast;
use crate::numerics::{norm2, Cholesky, DenseMatrix, SparseSymmetric};
use crate::subspace::{FieldMatrix, FieldRole};

/// Consecutive orthonormalization breakdowns tolerated before giving up.
const MAX_BREAKDOWNS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preconditioner {
    None,
    /// IC(0) of `L + τM`, `τ = 1e-4 · tr(L) / tr(M)`.
    Ic0,
}

#[derive(Debug, Clone)]
pub struct LobpcgOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub preconditioner: Preconditioner,
    pub seed: u64,
}

impl Default for LobpcgOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 1000,
            preconditioner: Preconditioner::Ic0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LobpcgResult {
    pub spectrum: Spectrum,
    /// Leading pairs meeting the tolerance.
    pub converged: usize,
    pub iterations: usize,
    pub block_size: usize,
    /// `‖L u - λ M u‖_{M⁻¹} / (|λ| + 1)` per returned pair.
    pub relative_residuals: Vec<f64>,
}

impl LobpcgResult {
    pub fn all_converged(&self) -> bool {
        self.converged == self.spectrum.k()
    }
}

/// Block LOBPCG for the `k` smallest pairs.
///
/// Works on `A = M^{-1/2} L M^{-1/2}` so every inner product is Euclidean;
/// the Euclidean residual there equals `‖L u - λ M u‖_{M⁻¹}`. The block
/// carries `min(k, 32)` extra columns. Running out of iterations is not an
/// error: the result reports how many leading pairs converged.
pub fn smallest_eigenpairs_lobpcg(
    l: &SparseSymmetric,
    m: &DiagonalMass,
    k: usize,
    opts: &LobpcgOptions,
) -> Result<LobpcgResult> {
    check_problem(l, m, k)?;
    let n = l.n();
    if 4 * k > n {
        return Err(Error::InvalidInput(format!(
            "LOBPCG needs k <= N/4 (k = {k}, N = {n})"
        )));
    }
    let bs = k + k.min(32);
    let s = m.inv_sqrt();
    let sqrt_w = m.sqrt();
    let a = l.congruence_diagonal(&s);

    let ic = match opts.preconditioner {
        Preconditioner::None => None,
        Preconditioner::Ic0 => {
            let tau = 1e-4 * l.diagonal().iter().sum::<f64>() / m.total();
            let shifted: Vec<f64> = m.weights().iter().map(|w| tau * w).collect();
            Some(ic0_factor(&l.add_diagonal(&shifted))?)
        }
    };
    let precondition = |r: &DenseMatrix| -> DenseMatrix {
        match &ic {
            None => r.clone(),
            Some(ic) => {
                let mut w = r.scale_rows(&sqrt_w);
                for j in 0..w.cols() {
                    ic.apply_in_place(w.col_mut(j));
                }
                w.scale_rows(&sqrt_w)
            }
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let x0 = DenseMatrix::from_fn(n, bs, |_, _| StandardNormal.sample(&mut rng));
    let ax0 = a.mul_dense(&x0);
    let (x0, ax0) = orthonormalize(&x0, &ax0)
        .ok_or_else(|| Error::Numerical("initial block is rank deficient".into()))?
        .pair();
    let (mut x, mut ax, mut lambda) = rayleigh_ritz(&x0, &ax0, bs)?;

    let mut p: Option<(DenseMatrix, DenseMatrix)> = None;
    let mut breakdowns = 0;
    let mut iterations = 0;
    let mut res = relative_residuals(&x, &ax, &lambda);
    while iterations < opts.max_iter {
        if res[..k].iter().all(|&r| r <= opts.tol) {
            break;
        }
        iterations += 1;
        let active: Vec<usize> = (0..bs).filter(|&j| res[j] > opts.tol).collect();
        let mut r = ax.select_columns(&active);
        for (c, &j) in active.iter().enumerate() {
            let (xj, lj) = (x.col(j), lambda[j]);
            r.col_mut(c).iter_mut().zip(xj).for_each(|(ri, xi)| *ri -= lj * xi);
        }
        let mut w = precondition(&r);
        for _ in 0..2 {
            let c = x.t_matmul(&w);
            w = w.sub(&x.matmul(&c));
        }
        for j in 0..w.cols() {
            let nrm = norm2(w.col(j));
            if nrm > 0.0 {
                w.col_mut(j).iter_mut().for_each(|v| *v /= nrm);
            }
        }
        let aw = a.mul_dense(&w);

        let xw = x.hcat(&w)?;
        let axw = ax.hcat(&aw)?;
        let mut basis = None;
        if let Some((pp, app)) = &p {
            basis = orthonormalize(&xw.hcat(pp)?, &axw.hcat(app)?);
        }
        if basis.is_none() {
            if p.is_some() {
                log::debug!("LOBPCG iteration {iterations}: dropping P after breakdown");
                breakdowns += 1;
            }
            basis = orthonormalize(&xw, &axw);
        }
        let basis = match basis {
            Some(b) => b,
            None => {
                breakdowns += 1;
                svqb(&xw, &axw).ok_or_else(|| {
                    Error::Numerical("LOBPCG search space collapsed".into())
                })?
            }
        };
        if breakdowns > MAX_BREAKDOWNS {
            return Err(Error::Numerical(format!(
                "LOBPCG: {breakdowns} orthonormalization breakdowns"
            )));
        }
        if let Basis::Cholesky(..) = basis {
            breakdowns = 0;
        }

        let (s_t, as_t) = (basis.s(), basis.a_s());
        let h = s_t.t_matmul(as_t).symmetrized();
        let eig = dense_sym_eig_fast(&h)?;
        let c = eig.vectors.columns(0, bs);
        let x_new = s_t.matmul(&c);
        let ax_new = as_t.matmul(&c);

        p = match &basis {
            Basis::Cholesky(s_t, as_t) => {
                let tail = s_t.cols() - bs;
                let rows: Vec<usize> = (bs..s_t.cols()).collect();
                let ct = c.select_rows(&rows).select_columns(&active);
                let st = s_t.columns(bs, bs + tail);
                let ast = as_t.columns(bs, bs + tail);
                Some((st.matmul(&ct), ast.matmul(&ct)))
            }
            Basis::Svqb(..) => {
                let xa = x_new.select_columns(&active);
                let axa = ax_new.select_columns(&active);
                let coef = x.t_matmul(&xa);
                Some((xa.sub(&x.matmul(&coef)), axa.sub(&ax.matmul(&coef))))
            }
        };
        x = x_new;
        ax = ax_new;
        lambda = eig.values[..bs].to_vec();
        res = relative_residuals(&x, &ax, &lambda);
    }

    // Clean up accumulated drift: re-orthonormalize and project once more.
    let (xc, axc) = orthonormalize(&x, &ax)
        .unwrap_or_else(|| svqb(&x, &ax).expect("orthonormal block"))
        .pair();
    let (x, ax, lambda) = rayleigh_ritz(&xc, &axc, bs)?;
    let res = relative_residuals(&x, &ax, &lambda);
    let converged = res[..k].iter().take_while(|&&r| r <= opts.tol).count();
    if converged < k {
        log::warn!("LOBPCG: {converged}/{k} pairs converged after {iterations} iterations");
    }
    let idx: Vec<usize> = (0..k).collect();
    let u = x.select_columns(&idx).scale_rows(&s);
    Ok(LobpcgResult {
        spectrum: Spectrum {
            values: lambda[..k].to_vec(),
            vectors: FieldMatrix::tagged(u, FieldRole::EigvecU),
        },
        converged,
        iterations,
        block_size: bs,
        relative_residuals: res[..k].to_vec(),
    })
}

fn relative_residuals(x: &DenseMatrix, ax: &DenseMatrix, lambda: &[f64]) -> Vec<f64> {
    lambda
        .iter()
        .enumerate()
        .map(|(j, &lam)| {
            let r: f64 = ax
                .col(j)
                .iter()
                .zip(x.col(j))
                .map(|(a, b)| (a - lam * b).powi(2))
                .sum();
            r.sqrt() / (lam.abs() + 1.0)
        })
        .collect()
}

fn rayleigh_ritz(
    x: &DenseMatrix,
    ax: &DenseMatrix,
    keep: usize,
) -> Result<(DenseMatrix, DenseMatrix, Vec<f64>)> {
    let h = x.t_matmul(ax).symmetrized();
    let eig = dense_sym_eig_fast(&h)?;
    let c = eig.vectors.columns(0, keep);
    Ok((x.matmul(&c), ax.matmul(&c), eig.values[..keep].to_vec()))
}

enum Basis {
    /// Cholesky QR; column `j` mixes only input columns `0..=j`.
    Cholesky(DenseMatrix, DenseMatrix),
    Svqb(DenseMatrix, DenseMatrix),
}

impl Basis {
    fn s(&self) -> &DenseMatrix {
        match self {
            Basis::Cholesky(s, _) | Basis::Svqb(s, _) => s,
        }
    }

    fn a_s(&self) -> &DenseMatrix {
        match self {
            Basis::Cholesky(_, a) | Basis::Svqb(_, a) => a,
        }
    }

    fn pair(self) -> (DenseMatrix, DenseMatrix) {
        match self {
            Basis::Cholesky(s, a) | Basis::Svqb(s, a) => (s, a),
        }
    }
}

fn lower_inverse(g: &DenseMatrix) -> DenseMatrix {
    let n = g.rows();
    let mut inv = DenseMatrix::zeros(n, n);
    for j in 0..n {
        inv[(j, j)] = 1.0 / g[(j, j)];
        for i in j + 1..n {
            let mut s = 0.0;
            for p in j..i {
                s += g[(i, p)] * inv[(p, j)];
            }
            inv[(i, j)] = -s / g[(i, i)];
        }
    }
    inv
}

/// Cholesky QR, repeated once if needed. `None` on breakdown.
fn orthonormalize(s: &DenseMatrix, a_s: &DenseMatrix) -> Option<Basis> {
    let mut s = s.clone();
    let mut a_s = a_s.clone();
    for _ in 0..3 {
        let gram = s.t_matmul(&s).symmetrized();
        let chol = Cholesky::new(&gram).ok()?;
        let d = chol.factor();
        let min_pivot = (0..d.rows()).map(|i| d[(i, i)]).fold(f64::INFINITY, f64::min);
        let max_pivot = (0..d.rows()).map(|i| d[(i, i)]).fold(0.0, f64::max);
        if !(min_pivot > 1e-7 * max_pivot) {
            return None;
        }
        let inv_t = lower_inverse(d);
        s = s.matmul_t(&inv_t);
        a_s = a_s.matmul_t(&inv_t);
        let dev = s
            .t_matmul(&s)
            .sub(&DenseMatrix::identity(s.cols()))
            .max_abs();
        if dev < 1e-12 {
            return Some(Basis::Cholesky(s, a_s));
        }
    }
    None
}

/// Eigen-based orthonormalization that drops near-dependent directions.
fn svqb(s: &DenseMatrix, a_s: &DenseMatrix) -> Option<Basis> {
    let gram = s.t_matmul(s).symmetrized();
    let d: Vec<f64> = (0..gram.rows())
        .map(|i| 1.0 / gram[(i, i)].max(f64::MIN_POSITIVE).sqrt())
        .collect();
    let scaled = gram.scale_rows(&d).scale_cols(&d).symmetrized();
    let eig = dense_sym_eig_fast(&scaled).ok()?;
    let top = eig.values.last().copied().unwrap_or(0.0);
    let keep: Vec<usize> = (0..eig.values.len())
        .filter(|&i| eig.values[i] > 1e-12 * top)
        .collect();
    if keep.is_empty() {
        return None;
    }
    let inv_sqrt: Vec<f64> = keep.iter().map(|&i| 1.0 / eig.values[i].sqrt()).collect();
    let t = eig
        .vectors
        .select_columns(&keep)
        .scale_rows(&d)
        .scale_cols(&inv_sqrt);
    Some(Basis::Svqb(s.matmul(&t), a_s.matmul(&t)))
}
