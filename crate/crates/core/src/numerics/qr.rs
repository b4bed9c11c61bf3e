//! Thin Householder QR with blocked (compact WY) updates.

use crate::error::{Error, Result};
use crate::numerics::dense::{dot, DenseMatrix};

const PANEL: usize = 32;

/// Relative threshold on `|R_jj| / ‖Z_j‖` below which column `j` is flagged.
pub const RANK_TOL: f64 = 1e-10;

/// Result of [`thin_qr`].
#[derive(Debug, Clone)]
pub struct ThinQr {
    /// `N x m` with orthonormal columns.
    pub q: DenseMatrix,
    /// `m x m` upper triangular with nonnegative diagonal.
    pub r: DenseMatrix,
    /// Columns whose diagonal fell below `RANK_TOL` times the input column norm.
    pub deficient: Vec<usize>,
}

impl ThinQr {
    pub fn is_full_rank(&self) -> bool {
        self.deficient.is_empty()
    }
}

/// Thin QR factorization `Z = Q R` via Householder reflections.
///
/// Signs are fixed so that `diag(R) >= 0`.
pub fn thin_qr(z: &DenseMatrix) -> Result<ThinQr> {
    let (n, m) = z.shape();
    if n < m {
        return Err(Error::InvalidInput(format!(
            "thin QR needs rows >= cols, got {n}x{m}"
        )));
    }
    let col_norms: Vec<f64> = (0..m).map(|j| dot(z.col(j), z.col(j)).sqrt()).collect();

    let mut a = z.clone();
    let mut tau = vec![0.0; m];
    let mut panels = Vec::new();

    let mut j0 = 0;
    while j0 < m {
        let jb = PANEL.min(m - j0);
        factor_panel(&mut a, j0, jb, &mut tau);
        let v = panel_reflectors(&a, j0, jb);
        let t = block_triangle(&v, &tau[j0..j0 + jb]);
        if j0 + jb < m {
            // Trailing update with Hᵀ = I - V Tᵀ Vᵀ.
            apply_block(&mut a, j0, j0 + jb, m, &v, &t, true);
        }
        panels.push((j0, v, t));
        j0 += jb;
    }

    let mut r = DenseMatrix::zeros(m, m);
    for j in 0..m {
        for i in 0..=j {
            r[(i, j)] = a[(i, j)];
        }
    }

    // Q = H_1 ... H_m [I; 0], accumulated backwards panel by panel.
    let mut q = DenseMatrix::zeros(n, m);
    for i in 0..m {
        q[(i, i)] = 1.0;
    }
    for (j0, v, t) in panels.iter().rev() {
        apply_block(&mut q, *j0, *j0, m, v, t, false);
    }

    for j in 0..m {
        if r[(j, j)] < 0.0 {
            for c in j..m {
                r[(j, c)] = -r[(j, c)];
            }
            q.col_mut(j).iter_mut().for_each(|x| *x = -*x);
        }
    }

    let deficient = (0..m)
        .filter(|&j| r[(j, j)].abs() <= RANK_TOL * col_norms[j])
        .collect();

    Ok(ThinQr { q, r, deficient })
}

/// Unblocked Householder factorization of columns `j0..j0+jb`, rows `j0..`.
/// Reflector tails are stored below the diagonal, as in LAPACK.
fn factor_panel(a: &mut DenseMatrix, j0: usize, jb: usize, tau: &mut [f64]) {
    let n = a.rows();
    for j in j0..j0 + jb {
        let col = a.col_mut(j);
        let alpha = col[j];
        let xnorm = dot(&col[j + 1..], &col[j + 1..]).sqrt();
        if xnorm == 0.0 {
            tau[j] = 0.0;
            continue;
        }
        let h = alpha.hypot(xnorm);
        let beta = if alpha >= 0.0 { -h } else { h };
        tau[j] = (beta - alpha) / beta;
        let s = 1.0 / (alpha - beta);
        col[j + 1..].iter_mut().for_each(|x| *x *= s);
        col[j] = beta;

        for l in j + 1..j0 + jb {
            let (vcol, target) = a.cols_pair_mut(j, l);
            let mut w = target[j];
            w += dot(&vcol[j + 1..n], &target[j + 1..n]);
            let f = tau[j] * w;
            target[j] -= f;
            for (t, v) in target[j + 1..n].iter_mut().zip(&vcol[j + 1..n]) {
                *t -= f * v;
            }
        }
    }
}

/// Explicit unit lower trapezoidal `V` ((n - j0) x jb) for the panel.
fn panel_reflectors(a: &DenseMatrix, j0: usize, jb: usize) -> DenseMatrix {
    let rows = a.rows() - j0;
    let mut v = DenseMatrix::zeros(rows, jb);
    for c in 0..jb {
        let src = a.col(j0 + c);
        let dst = v.col_mut(c);
        dst[c] = 1.0;
        dst[c + 1..].copy_from_slice(&src[j0 + c + 1..]);
    }
    v
}

/// Upper triangular `T` with `H_1 ... H_jb = I - V T Vᵀ`.
fn block_triangle(v: &DenseMatrix, tau: &[f64]) -> DenseMatrix {
    let jb = tau.len();
    let mut t = DenseMatrix::zeros(jb, jb);
    for i in 0..jb {
        t[(i, i)] = tau[i];
        if i == 0 || tau[i] == 0.0 {
            continue;
        }
        // w = -tau_i * V[:, :i]ᵀ v_i, then T[:i, i] = T[:i, :i] w.
        let vi = v.col(i);
        let w: Vec<f64> = (0..i)
            .map(|c| -tau[i] * dot(&v.col(c)[i..], &vi[i..]))
            .collect();
        for r in 0..i {
            let mut s = 0.0;
            for c in r..i {
                s += t[(r, c)] * w[c];
            }
            t[(r, i)] = s;
        }
    }
    t
}

/// Applies `I - V T Vᵀ` (or its transpose) to `a[row0.., c0..c1]`.
fn apply_block(
    a: &mut DenseMatrix,
    row0: usize,
    c0: usize,
    c1: usize,
    v: &DenseMatrix,
    t: &DenseMatrix,
    transpose_t: bool,
) {
    let nr = a.rows() - row0;
    let nc = c1 - c0;
    let jb = v.cols();
    if nc == 0 || jb == 0 {
        return;
    }
    debug_assert_eq!(v.rows(), nr);
    let lda = a.rows() as isize;
    let off = c0 * a.rows() + row0;
    // W = Vᵀ C  (jb x nc)
    let mut w = DenseMatrix::zeros(jb, nc);
    // SAFETY: the sub-block [row0.., c0..c1] lies inside `a`; strides are column-major.
    unsafe {
        matrixmultiply::dgemm(
            jb,
            nr,
            nc,
            1.0,
            v.as_slice().as_ptr(),
            nr as isize,
            1,
            a.as_slice().as_ptr().add(off),
            1,
            lda,
            0.0,
            w.as_mut_slice().as_mut_ptr(),
            1,
            jb as isize,
        );
    }
    let tw = if transpose_t { t.t_matmul(&w) } else { t.matmul(&w) };
    // C -= V (T W)
    // SAFETY: as above.
    unsafe {
        matrixmultiply::dgemm(
            nr,
            jb,
            nc,
            -1.0,
            v.as_slice().as_ptr(),
            1,
            nr as isize,
            tw.as_slice().as_ptr(),
            1,
            jb as isize,
            1.0,
            a.as_mut_slice().as_mut_ptr().add(off),
            1,
            lda,
        );
    }
}
