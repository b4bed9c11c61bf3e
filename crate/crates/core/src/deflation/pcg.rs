use super::ic0::{ic0_factor, IcFactor};
use crate::error::{Error, Result};
use crate::numerics::{axpy, dense_sym_eig, dot, norm2, DenseMatrix, SparseSymmetric};

/// Coarse-solve condition number above which `E` is rejected.
pub const MAX_COARSE_CONDITION: f64 = 1e12;

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub residual_norm: f64,
    /// `‖r_k‖₂` for `k = 0..=iterations` (the recursively updated residual).
    pub history: Vec<f64>,
    pub converged: bool,
    /// Diagonal shift the IC(0) factorization needed.
    pub ic_shift: f64,
}

impl SolveReport {
    /// `iter,residual` lines with a header.
    pub fn history_csv(&self) -> String {
        let mut s = String::from("iter,residual\n");
        for (i, r) in self.history.iter().enumerate() {
            s.push_str(&format!("{i},{r:e}\n"));
        }
        s
    }
}

/// Coarse space `Y` with `E = YᵀAY` and its dense inverse.
#[derive(Debug, Clone)]
pub struct DeflationSpace {
    pub basis: DenseMatrix,
    pub coarse: DenseMatrix,
    pub coarse_inv: DenseMatrix,
    pub condition: f64,
}

impl DeflationSpace {
    pub fn new(a: &SparseSymmetric, basis: DenseMatrix) -> Result<Self> {
        if basis.rows() != a.n() {
            return Err(Error::DimensionMismatch {
                expected: a.n(),
                found: basis.rows(),
            });
        }
        let k = basis.cols();
        if k == 0 {
            return Ok(Self {
                basis,
                coarse: DenseMatrix::zeros(0, 0),
                coarse_inv: DenseMatrix::zeros(0, 0),
                condition: 1.0,
            });
        }
        let e = basis.t_matmul(&a.mul_dense(&basis));
        let scale = e.max_abs().max(f64::MIN_POSITIVE);
        let asym = e.sub(&e.transpose()).max_abs() / scale;
        if asym > 1e-10 {
            return Err(Error::NotSymmetric { deviation: asym });
        }
        let e = e.symmetrized();
        let eig = dense_sym_eig(&e)?;
        let (lo, hi) = eig
            .values
            .iter()
            .fold((f64::INFINITY, 0f64), |(lo, hi), v| (lo.min(v.abs()), hi.max(v.abs())));
        let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        if !(condition <= MAX_COARSE_CONDITION) {
            return Err(Error::IllConditioned { condition });
        }
        let inv_vals: Vec<f64> = eig.values.iter().map(|v| 1.0 / v).collect();
        let coarse_inv = eig
            .vectors
            .scale_cols(&inv_vals)
            .matmul_t(&eig.vectors)
            .symmetrized();
        Ok(Self {
            basis,
            coarse: e,
            coarse_inv,
            condition,
        })
    }

    pub fn dim(&self) -> usize {
        self.basis.cols()
    }

    /// `Y E⁻¹ Yᵀ v`.
    pub fn coarse_solve(&self, v: &[f64]) -> Vec<f64> {
        let c = self.coarse_inv.matvec(&self.basis.t_matvec(v));
        self.basis.matvec(&c)
    }
}

/// Incomplete-Cholesky preconditioned CG from `x₀ = 0`, stopping once
/// `‖r‖₂ < tol·‖b‖₂`.
pub fn icpcg_solve(
    a: &SparseSymmetric,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<SolveReport> {
    check(a, b, tol)?;
    let ic = ic0_factor(a)?;
    Ok(pcg(a, b, vec![0.0; b.len()], &ic, None, tol, max_iter))
}

/// Two-level additive preconditioned CG: warm start `x₀ = 𝒞(b)` and
/// `z = (GGᵀ)⁻¹ r + 𝒞(r)` with `𝒞(v) = Y E⁻¹ Yᵀ v`.
///
/// With an empty basis the coarse path is skipped and the iterates are
/// those of [`icpcg_solve`].
pub fn deflated_icpcg_solve(
    a: &SparseSymmetric,
    b: &[f64],
    basis: &DenseMatrix,
    tol: f64,
    max_iter: usize,
) -> Result<SolveReport> {
    check(a, b, tol)?;
    let space = DeflationSpace::new(a, basis.clone())?;
    let ic = ic0_factor(a)?;
    Ok(deflated_with(a, b, &space, &ic, tol, max_iter))
}

/// Same as [`deflated_icpcg_solve`] with a prebuilt coarse space and factor.
pub fn deflated_with(
    a: &SparseSymmetric,
    b: &[f64],
    space: &DeflationSpace,
    ic: &IcFactor,
    tol: f64,
    max_iter: usize,
) -> SolveReport {
    if space.dim() == 0 {
        return pcg(a, b, vec![0.0; b.len()], ic, None, tol, max_iter);
    }
    let x0 = space.coarse_solve(b);
    let report = pcg(a, b, x0, ic, Some(space), tol, max_iter);
    if let Some(&r0) = report.history.first() {
        if r0 > norm2(b) {
            // Expected with non-uniform mass: the coarse projector is
            // orthogonal in the M⁻¹ inner product, not the Euclidean one.
            log::info!("coarse warm start raised the 2-norm residual: {r0:e} > {:e}", norm2(b));
        }
    }
    report
}

fn check(a: &SparseSymmetric, b: &[f64], tol: f64) -> Result<()> {
    if b.len() != a.n() {
        return Err(Error::DimensionMismatch {
            expected: a.n(),
            found: b.len(),
        });
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance must be positive, got {tol}")));
    }
    Ok(())
}

fn pcg(
    a: &SparseSymmetric,
    b: &[f64],
    mut x: Vec<f64>,
    ic: &IcFactor,
    coarse: Option<&DeflationSpace>,
    tol: f64,
    max_iter: usize,
) -> SolveReport {
    let n = b.len();
    let eps = tol * norm2(b);
    let precondition = |r: &[f64]| -> Vec<f64> {
        let mut z = ic.apply(r);
        if let Some(c) = coarse {
            let zc = c.coarse_solve(r);
            axpy(1.0, &zc, &mut z);
        }
        z
    };

    let mut ap = vec![0.0; n];
    a.spmv_into(&x, &mut ap);
    let mut r: Vec<f64> = b.iter().zip(&ap).map(|(bi, ai)| bi - ai).collect();
    let mut history = vec![norm2(&r)];
    let report = |x, iterations, history: Vec<f64>| {
        let residual_norm = *history.last().unwrap();
        SolveReport {
            x,
            iterations,
            residual_norm,
            converged: residual_norm < eps || residual_norm == 0.0,
            history,
            ic_shift: ic.shift(),
        }
    };
    if history[0] < eps || history[0] == 0.0 {
        return report(x, 0, history);
    }

    let mut z = precondition(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for it in 0..max_iter {
        a.spmv_into(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        let rn = norm2(&r);
        history.push(rn);
        if rn < eps || !rn.is_finite() {
            return report(x, it + 1, history);
        }
        z = precondition(&r);
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    report(x, max_iter, history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::lu_solve;

    fn grid_laplacian(nx: usize, shift: f64) -> SparseSymmetric {
        let n = nx * nx;
        let id = |i: usize, j: usize| j * nx + i;
        let mut t = Vec::new();
        for j in 0..nx {
            for i in 0..nx {
                let mut deg = 0.0;
                for (di, dj) in [(1i64, 0i64), (-1, 0), (0, 1), (0, -1)] {
                    let (a, b) = (i as i64 + di, j as i64 + dj);
                    if a >= 0 && b >= 0 && (a as usize) < nx && (b as usize) < nx {
                        t.push((id(i, j), id(a as usize, b as usize), -1.0));
                        deg += 1.0;
                    }
                }
                t.push((id(i, j), id(i, j), deg + shift));
            }
        }
        SparseSymmetric::from_triplets(n, &t).unwrap()
    }

    fn rhs(n: usize) -> Vec<f64> {
        (0..n).map(|i| ((i * 7919) % 101) as f64 / 50.0 - 1.0).collect()
    }

    #[test]
    fn zero_rhs_needs_no_iterations() {
        let a = grid_laplacian(5, 0.1);
        let rep = icpcg_solve(&a, &[0.0; 25], 1e-10, 100).unwrap();
        assert_eq!(rep.iterations, 0);
        assert!(rep.converged);
        assert!(rep.x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_converges_in_one_step() {
        let a = SparseSymmetric::identity(10);
        let rep = icpcg_solve(&a, &rhs(10), 1e-12, 100).unwrap();
        assert_eq!(rep.iterations, 1);
    }

    #[test]
    fn grid_matches_dense_solve() {
        let a = grid_laplacian(12, 1e-3);
        let b = rhs(144);
        let rep = icpcg_solve(&a, &b, 1e-12, 500).unwrap();
        assert!(rep.converged);
        let exact = lu_solve(&a.to_dense(), &b).unwrap();
        let err = norm2(&rep.x.iter().zip(&exact).map(|(u, v)| u - v).collect::<Vec<_>>());
        assert!(err / norm2(&exact) < 1e-8);
        let r = a.spmv(&rep.x).unwrap();
        let res = norm2(&r.iter().zip(&b).map(|(u, v)| u - v).collect::<Vec<_>>());
        assert!(res <= 1e-12 * norm2(&b) * 10.0);
    }

    #[test]
    fn empty_basis_reproduces_icpcg_bitwise() {
        let a = grid_laplacian(10, 1e-2);
        let b = rhs(100);
        let plain = icpcg_solve(&a, &b, 1e-10, 300).unwrap();
        let defl = deflated_icpcg_solve(&a, &b, &DenseMatrix::zeros(100, 0), 1e-10, 300).unwrap();
        assert_eq!(plain.iterations, defl.iterations);
        assert_eq!(plain.history, defl.history);
        assert_eq!(plain.x, defl.x);
    }

    #[test]
    fn rhs_in_coarse_range_converges_immediately() {
        let a = grid_laplacian(10, 1e-2);
        let y = DenseMatrix::from_fn(100, 4, |i, j| ((i * (j + 3)) as f64 * 0.37).sin());
        let b = a.spmv(&y.matvec(&[1.0, -2.0, 0.5, 3.0])).unwrap();
        let rep = deflated_icpcg_solve(&a, &b, &y, 1e-8, 100).unwrap();
        assert!(rep.converged);
        assert!(rep.iterations <= 2);
    }

    #[test]
    fn singular_coarse_matrix_rejected() {
        let a = grid_laplacian(4, 1e-2);
        let c: Vec<f64> = (0..16).map(|i| i as f64).collect();
        let y = DenseMatrix::from_columns(&[c.clone(), c]).unwrap();
        assert!(matches!(
            deflated_icpcg_solve(&a, &rhs(16), &y, 1e-8, 10),
            Err(Error::IllConditioned { .. })
        ));
    }

    #[test]
    fn coarse_inverse_is_accurate() {
        let a = grid_laplacian(6, 0.5);
        let y = DenseMatrix::from_fn(36, 5, |i, j| ((i + 1) as f64 * (j + 1) as f64 * 0.21).cos());
        let s = DeflationSpace::new(&a, y).unwrap();
        let eye = s.coarse_inv.matmul(&s.coarse);
        assert!(eye.sub(&DenseMatrix::identity(5)).max_abs() < 1e-8);
    }
}
