//! Dense symmetric eigendecomposition.
//!
//! Small matrices (n <= [`JACOBI_MAX`]) use cyclic Jacobi, which keeps high
//! relative accuracy on the m x m Ritz problems. Larger ones are reduced to
//! tridiagonal form by Householder reflections and solved by implicit QL;
//! when only a few eigenvectors are requested they come from inverse
//! iteration on the tridiagonal matrix followed by back-transformation.

use crate::error::{Error, Result};
use crate::numerics::dense::{axpy, dot, norm2, DenseMatrix};

pub const JACOBI_MAX: usize = 512;

const SYMMETRY_TOL: f64 = 1e-10;

/// Eigenvalues in ascending order with orthonormal eigenvector columns.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: DenseMatrix,
}

fn check_square_symmetric(a: &DenseMatrix) -> Result<()> {
    if a.rows() != a.cols() {
        return Err(Error::DimensionMismatch {
            expected: a.rows(),
            found: a.cols(),
        });
    }
    let n = a.rows();
    let scale = a.max_abs();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in j + 1..n {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    if worst > SYMMETRY_TOL * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::NotSymmetric { deviation: worst });
    }
    if !a.is_finite() {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    Ok(())
}

/// All eigenpairs of a symmetric matrix, eigenvalues ascending.
pub fn dense_sym_eig(a: &DenseMatrix) -> Result<SymmetricEigen> {
    check_square_symmetric(a)?;
    let n = a.rows();
    let (values, vectors) = if n <= JACOBI_MAX {
        jacobi(a)?
    } else {
        let tri = Tridiagonal::reduce(a);
        let mut z = tri.explicit_q();
        let mut d = tri.diag.clone();
        let mut e = tri.sub.clone();
        implicit_ql(&mut d, &mut e, Some(&mut z))?;
        (d, z)
    };
    Ok(sorted(values, vectors, n))
}

/// Like [`dense_sym_eig`] but on the Householder + QL path for all but tiny
/// sizes; cheaper than Jacobi for the repeated mid-sized problems of block
/// eigensolvers.
pub(crate) fn dense_sym_eig_fast(a: &DenseMatrix) -> Result<SymmetricEigen> {
    check_square_symmetric(a)?;
    let n = a.rows();
    if n <= 32 {
        let (values, vectors) = jacobi(a)?;
        return Ok(sorted(values, vectors, n));
    }
    let tri = Tridiagonal::reduce(a);
    let mut z = tri.explicit_q();
    let mut d = tri.diag.clone();
    let mut e = tri.sub.clone();
    implicit_ql(&mut d, &mut e, Some(&mut z))?;
    Ok(sorted(d, z, n))
}

/// Eigenvalues only, ascending.
pub fn dense_sym_eigvals(a: &DenseMatrix) -> Result<Vec<f64>> {
    check_square_symmetric(a)?;
    if a.rows() <= JACOBI_MAX {
        let (mut v, _) = jacobi(a)?;
        v.sort_by(f64::total_cmp);
        return Ok(v);
    }
    let tri = Tridiagonal::reduce(a);
    let mut d = tri.diag.clone();
    let mut e = tri.sub.clone();
    implicit_ql(&mut d, &mut e, None)?;
    d.sort_by(f64::total_cmp);
    Ok(d)
}

/// The `k` smallest eigenpairs.
pub fn dense_sym_eig_smallest(a: &DenseMatrix, k: usize) -> Result<SymmetricEigen> {
    check_square_symmetric(a)?;
    let n = a.rows();
    if k > n {
        return Err(Error::InvalidInput(format!("requested {k} eigenpairs of a {n}x{n} matrix")));
    }
    if n <= JACOBI_MAX || 4 * k > n {
        let full = dense_sym_eig(a)?;
        let idx: Vec<usize> = (0..k).collect();
        return Ok(SymmetricEigen {
            values: full.values[..k].to_vec(),
            vectors: full.vectors.select_columns(&idx),
        });
    }
    let tri = Tridiagonal::reduce(a);
    let mut d = tri.diag.clone();
    let mut e = tri.sub.clone();
    implicit_ql(&mut d, &mut e, None)?;
    d.sort_by(f64::total_cmp);
    let values = d[..k].to_vec();
    let mut z = tri.inverse_iteration(&values);
    tri.back_transform(&mut z);
    normalize_signs(&mut z);
    Ok(SymmetricEigen { values, vectors: z })
}

fn sorted(values: Vec<f64>, vectors: DenseMatrix, n: usize) -> SymmetricEigen {
    let mut order: Vec<usize> = (0..n).collect();
    // Stable: ties keep solver output order.
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let values = order.iter().map(|&i| values[i]).collect();
    let mut vectors = vectors.select_columns(&order);
    normalize_signs(&mut vectors);
    SymmetricEigen { values, vectors }
}

/// Makes the largest-magnitude entry of each column positive.
fn normalize_signs(v: &mut DenseMatrix) {
    for j in 0..v.cols() {
        let col = v.col_mut(j);
        let mut best = 0.0f64;
        let mut sign = 1.0;
        for &x in col.iter() {
            if x.abs() > best {
                best = x.abs();
                sign = x.signum();
            }
        }
        if sign < 0.0 {
            col.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Cyclic Jacobi; returns unsorted eigenvalues and eigenvector columns.
fn jacobi(a: &DenseMatrix) -> Result<(Vec<f64>, DenseMatrix)> {
    let n = a.rows();
    let mut a = a.symmetrized();
    let mut v = DenseMatrix::identity(n);
    let total = a.frobenius_norm();
    if n <= 1 || total == 0.0 {
        return Ok(((0..n).map(|i| a[(i, i)]).collect(), v));
    }
    for _sweep in 0..100 {
        let mut off = 0.0;
        for j in 0..n {
            for i in j + 1..n {
                off += a[(i, j)] * a[(i, j)];
            }
        }
        if off.sqrt() <= f64::EPSILON * 1e-2 * total {
            return Ok(((0..n).map(|i| a[(i, i)]).collect(), v));
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let (app, aqq) = (a[(p, p)], a[(q, q)]);
                if apq.abs() < 1e-18 * (app.abs() + aqq.abs()) {
                    a[(p, q)] = 0.0;
                    a[(q, p)] = 0.0;
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + theta.hypot(1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / t.hypot(1.0);
                let s = t * c;
                rotate_cols(&mut a, p, q, c, s);
                for k in 0..n {
                    let akp = a[(p, k)];
                    let akq = a[(q, k)];
                    a[(p, k)] = c * akp - s * akq;
                    a[(q, k)] = s * akp + c * akq;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                rotate_cols(&mut v, p, q, c, s);
            }
        }
    }
    Err(Error::Numerical("Jacobi eigensolver did not converge in 100 sweeps".into()))
}

#[inline]
fn rotate_cols(m: &mut DenseMatrix, p: usize, q: usize, c: f64, s: f64) {
    let (cp, cq) = m.cols_pair_mut(p, q);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

/// Householder tridiagonal reduction `Qᵀ A Q = T`.
struct Tridiagonal {
    n: usize,
    diag: Vec<f64>,
    /// `sub[i] = T[i+1, i]`.
    sub: Vec<f64>,
    /// Reflector `j` acts on rows `j+1..`; column `j` holds its unit-leading
    /// vector in rows `j+1..`.
    reflectors: DenseMatrix,
    tau: Vec<f64>,
}

impl Tridiagonal {
    fn reduce(a: &DenseMatrix) -> Self {
        let n = a.rows();
        let mut a = a.clone();
        let mut tau = vec![0.0; n.saturating_sub(1)];
        let mut sub = vec![0.0; n.saturating_sub(1)];
        let mut p = vec![0.0; n];
        for j in 0..n.saturating_sub(1) {
            let col = a.col_mut(j);
            let alpha = col[j + 1];
            let xnorm = norm2(&col[j + 2..]);
            if xnorm == 0.0 {
                tau[j] = 0.0;
                sub[j] = alpha;
                col[j + 1] = 1.0;
                continue;
            }
            let h = alpha.hypot(xnorm);
            let beta = if alpha >= 0.0 { -h } else { h };
            let t = (beta - alpha) / beta;
            let s = 1.0 / (alpha - beta);
            col[j + 2..].iter_mut().for_each(|x| *x *= s);
            col[j + 1] = 1.0;
            tau[j] = t;
            sub[j] = beta;

            // p = tau * A22 v using the lower triangle of A22 (rows/cols j+1..).
            let lo = j + 1;
            let m = n - lo;
            let v: Vec<f64> = a.col(j)[lo..].to_vec();
            let pv = &mut p[..m];
            pv.iter_mut().for_each(|x| *x = 0.0);
            for c in 0..m {
                let colc = &a.col(lo + c)[lo + c..];
                pv[c] += colc[0] * v[c];
                let tail = &colc[1..];
                pv[c] += dot(tail, &v[c + 1..]);
                axpy(v[c], tail, &mut pv[c + 1..]);
            }
            pv.iter_mut().for_each(|x| *x *= t);
            // w = p - (tau/2)(pᵀv) v
            let k = 0.5 * t * dot(pv, &v);
            let w: Vec<f64> = pv.iter().zip(&v).map(|(pi, vi)| pi - k * vi).collect();
            // Lower-triangle rank-2 update A22 -= v wᵀ + w vᵀ.
            for c in 0..m {
                let (vc, wc) = (v[c], w[c]);
                let colc = &mut a.col_mut(lo + c)[lo + c..];
                for ((x, vi), wi) in colc.iter_mut().zip(&v[c..]).zip(&w[c..]) {
                    *x -= vi * wc + wi * vc;
                }
            }
        }
        let diag = (0..n).map(|i| a[(i, i)]).collect();
        // Column j rows j+1.. hold v_j; everything else is stale.
        Self {
            n,
            diag,
            sub,
            reflectors: a,
            tau,
        }
    }

    /// Applies `Q = H_0 H_1 ... H_{n-2}` to the columns of `z` (rows = n).
    fn back_transform(&self, z: &mut DenseMatrix) {
        let n = self.n;
        for j in (0..n.saturating_sub(1)).rev() {
            let t = self.tau[j];
            if t == 0.0 {
                continue;
            }
            let v = &self.reflectors.col(j)[j + 1..];
            for c in 0..z.cols() {
                let col = &mut z.col_mut(c)[j + 1..];
                let f = t * dot(v, col);
                axpy(-f, v, col);
            }
        }
    }

    fn explicit_q(&self) -> DenseMatrix {
        let mut q = DenseMatrix::identity(self.n);
        self.back_transform(&mut q);
        q
    }

    /// Eigenvectors of the tridiagonal matrix for the given (accurate)
    /// eigenvalues, reorthogonalized within clusters.
    fn inverse_iteration(&self, values: &[f64]) -> DenseMatrix {
        let n = self.n;
        let tnorm = (0..n)
            .map(|i| {
                self.diag[i].abs()
                    + if i > 0 { self.sub[i - 1].abs() } else { 0.0 }
                    + if i + 1 < n { self.sub[i].abs() } else { 0.0 }
            })
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
        let cluster_tol = 1e-3 * tnorm;
        let sep = 10.0 * f64::EPSILON * tnorm;
        let mut z = DenseMatrix::zeros(n, values.len());
        let mut cluster_start = 0;
        let mut prev_shift = f64::NEG_INFINITY;
        let mut seed: u64 = 0x9E37_79B9_7F4A_7C15;
        for (k, &lambda) in values.iter().enumerate() {
            if k > 0 && lambda - values[k - 1] > cluster_tol {
                cluster_start = k;
            }
            // Separate coincident shifts so each solve sees a distinct pole.
            let shift = if k > cluster_start && lambda - prev_shift < sep {
                prev_shift + sep
            } else {
                lambda
            };
            prev_shift = shift;
            let lu = TridiagLu::new(&self.diag, &self.sub, shift, tnorm);
            let mut x: Vec<f64> = (0..n)
                .map(|_| {
                    seed ^= seed << 13;
                    seed ^= seed >> 7;
                    seed ^= seed << 17;
                    (seed >> 11) as f64 / (1u64 << 53) as f64 - 0.5
                })
                .collect();
            for _ in 0..4 {
                let nx = norm2(&x);
                x.iter_mut().for_each(|v| *v /= nx);
                lu.solve(&mut x);
                for c in cluster_start..k {
                    let prev = z.col(c);
                    let f = dot(prev, &x);
                    axpy(-f, prev, &mut x);
                }
            }
            for c in cluster_start..k {
                let prev = z.col(c);
                let f = dot(prev, &x);
                axpy(-f, prev, &mut x);
            }
            let nx = norm2(&x);
            z.col_mut(k).iter_mut().zip(&x).for_each(|(d, s)| *d = s / nx);
        }
        z
    }
}

/// LU with partial pivoting of `T - shift I` for a symmetric tridiagonal `T`.
struct TridiagLu {
    /// Row i of U: u0[i] (diagonal), u1[i], u2[i] (two superdiagonals).
    u0: Vec<f64>,
    u1: Vec<f64>,
    u2: Vec<f64>,
    /// Multipliers and whether rows i, i+1 were swapped.
    mult: Vec<f64>,
    swap: Vec<bool>,
}

impl TridiagLu {
    fn new(diag: &[f64], sub: &[f64], shift: f64, tnorm: f64) -> Self {
        let n = diag.len();
        let tiny = f64::EPSILON * tnorm;
        let mut u0 = vec![0.0; n];
        let mut u1 = vec![0.0; n];
        let mut u2 = vec![0.0; n];
        let mut mult = vec![0.0; n];
        let mut swap = vec![false; n];
        // Current row being eliminated: (a, b, c) = entries at cols i, i+1, i+2.
        let mut a = diag.first().map_or(0.0, |d| d - shift);
        let mut b = if n > 1 { sub[0] } else { 0.0 };
        for i in 0..n {
            if i + 1 == n {
                u0[i] = if a.abs() < tiny { tiny } else { a };
                break;
            }
            let lower = sub[i];
            let (nd, nsup) = (diag[i + 1] - shift, if i + 2 < n { sub[i + 1] } else { 0.0 });
            if lower.abs() > a.abs() {
                // Swap current row with next row (lower, nd, nsup).
                swap[i] = true;
                u0[i] = lower;
                u1[i] = nd;
                u2[i] = nsup;
                let m = a / lower;
                mult[i] = m;
                a = b - m * nd;
                b = -m * nsup;
            } else {
                let piv = if a.abs() < tiny { tiny } else { a };
                u0[i] = piv;
                u1[i] = b;
                u2[i] = 0.0;
                let m = lower / piv;
                mult[i] = m;
                a = nd - m * b;
                b = nsup;
            }
        }
        Self {
            u0,
            u1,
            u2,
            mult,
            swap,
        }
    }

    fn solve(&self, x: &mut [f64]) {
        let n = x.len();
        for i in 0..n.saturating_sub(1) {
            if self.swap[i] {
                x.swap(i, i + 1);
            }
            x[i + 1] -= self.mult[i] * x[i];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            if i + 1 < n {
                s -= self.u1[i] * x[i + 1];
            }
            if i + 2 < n {
                s -= self.u2[i] * x[i + 2];
            }
            x[i] = s / self.u0[i];
        }
    }
}

/// Implicit QL with Wilkinson shifts on a symmetric tridiagonal matrix.
/// Accumulates rotations into the columns of `z` when given.
fn implicit_ql(d: &mut [f64], sub: &mut [f64], mut z: Option<&mut DenseMatrix>) -> Result<()> {
    let n = d.len();
    if n == 0 {
        return Ok(());
    }
    let mut e = vec![0.0; n];
    e[..n - 1].copy_from_slice(&sub[..n - 1]);
    let eps = f64::EPSILON;
    let mut f = 0.0;
    let mut tst1 = 0.0f64;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > 60 {
                    return Err(Error::Numerical("implicit QL did not converge".into()));
                }
                let g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    if let Some(z) = z.as_deref_mut() {
                        let (zi, zi1) = z.cols_pair_mut(i, i + 1);
                        for (a, b) in zi.iter_mut().zip(zi1.iter_mut()) {
                            let hb = *b;
                            *b = s * *a + c * hb;
                            *a = c * *a - s * hb;
                        }
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}
