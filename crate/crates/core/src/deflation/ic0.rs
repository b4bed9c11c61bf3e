use crate::error::{Error, Result};
use crate::numerics::SparseSymmetric;

const MAX_RESTARTS: usize = 30;

/// Zero-fill incomplete Cholesky factor `A + shift·I ≈ G Gᵀ`.
///
/// `G` is stored row-wise on the lower-triangular pattern of `A`, with the
/// diagonal as the last entry of each row.
#[derive(Debug, Clone)]
pub struct IcFactor {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    shift: f64,
}

impl IcFactor {
    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Solves `G Gᵀ z = r`.
    pub fn apply(&self, r: &[f64]) -> Vec<f64> {
        let mut z = r.to_vec();
        self.apply_in_place(&mut z);
        z
    }

    pub fn apply_in_place(&self, z: &mut [f64]) {
        assert_eq!(z.len(), self.n);
        // Forward: G y = r.
        for i in 0..self.n {
            let (start, end) = (self.row_ptr[i], self.row_ptr[i + 1]);
            let mut s = z[i];
            for p in start..end - 1 {
                s -= self.values[p] * z[self.col_idx[p]];
            }
            z[i] = s / self.values[end - 1];
        }
        // Backward: Gᵀ x = y, sweeping rows of G as columns of Gᵀ.
        for i in (0..self.n).rev() {
            let (start, end) = (self.row_ptr[i], self.row_ptr[i + 1]);
            let xi = z[i] / self.values[end - 1];
            z[i] = xi;
            for p in start..end - 1 {
                z[self.col_idx[p]] -= self.values[p] * xi;
            }
        }
    }

    /// Dense `G`, for tests.
    pub fn to_dense_lower(&self) -> crate::numerics::DenseMatrix {
        let mut g = crate::numerics::DenseMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                g[(i, self.col_idx[p])] = self.values[p];
            }
        }
        g
    }
}

/// Zero-fill incomplete Cholesky with shifted restarts.
///
/// On a non-positive pivot the factorization restarts on `A + βI`, with `β`
/// starting at `1e-8 · mean(diag A)` and doubling, at most 30 times.
pub fn ic0_factor(a: &SparseSymmetric) -> Result<IcFactor> {
    let n = a.n();
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::new();
    let mut base = Vec::new();
    row_ptr.push(0);
    for i in 0..n {
        let (cols, vals) = a.row(i);
        for (&c, &v) in cols.iter().zip(vals) {
            if c <= i {
                col_idx.push(c);
                base.push(v);
            }
        }
        row_ptr.push(col_idx.len());
    }
    let mean_diag = a.diagonal().iter().map(|d| d.abs()).sum::<f64>() / n.max(1) as f64;

    let mut shift = 0.0;
    for attempt in 0..=MAX_RESTARTS {
        if let Some(values) = try_factor(n, &row_ptr, &col_idx, &base, shift) {
            return Ok(IcFactor {
                n,
                row_ptr,
                col_idx,
                values,
                shift,
            });
        }
        shift = if attempt == 0 {
            1e-8 * mean_diag.max(f64::MIN_POSITIVE)
        } else {
            2.0 * shift
        };
        log::debug!("IC(0) breakdown, restarting with shift {shift:e}");
    }
    Err(Error::FactorizationBreakdown {
        restarts: MAX_RESTARTS,
    })
}

fn try_factor(
    n: usize,
    row_ptr: &[usize],
    col_idx: &[usize],
    base: &[f64],
    shift: f64,
) -> Option<Vec<f64>> {
    let mut g = base.to_vec();
    for i in 0..n {
        let (start, end) = (row_ptr[i], row_ptr[i + 1]);
        let diag_pos = end - 1;
        debug_assert_eq!(col_idx[diag_pos], i);
        for p in start..diag_pos {
            let k = col_idx[p];
            // s = a_ik - Σ_{j<k} g_ij g_kj over the shared pattern.
            let mut s = g[p];
            let (ks, ke) = (row_ptr[k], row_ptr[k + 1] - 1);
            let (mut pi, mut pk) = (start, ks);
            while pi < p && pk < ke {
                let (ci, ck) = (col_idx[pi], col_idx[pk]);
                if ci == ck {
                    s -= g[pi] * g[pk];
                    pi += 1;
                    pk += 1;
                } else if ci < ck {
                    pi += 1;
                } else {
                    pk += 1;
                }
            }
            g[p] = s / g[ke];
        }
        let aii = g[diag_pos] + shift;
        let d = aii - g[start..diag_pos].iter().map(|v| v * v).sum::<f64>();
        if !(d > f64::EPSILON * aii.abs()) || !d.is_finite() {
            return None;
        }
        g[diag_pos] = d.sqrt();
    }
    Some(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{Cholesky, DenseMatrix};

    #[test]
    fn diagonal_gives_square_roots() {
        let a = SparseSymmetric::from_triplets(3, &[(0, 0, 4.0), (1, 1, 9.0), (2, 2, 2.0)]).unwrap();
        let f = ic0_factor(&a).unwrap();
        assert_eq!(f.shift(), 0.0);
        let g = f.to_dense_lower();
        assert_eq!(g[(0, 0)], 2.0);
        assert_eq!(g[(1, 1)], 3.0);
        assert_eq!(g[(2, 2)], 2f64.sqrt());
    }

    #[test]
    fn tridiagonal_matches_exact_cholesky() {
        let n = 20;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.5 + (i % 3) as f64 * 0.1));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        let a = SparseSymmetric::from_triplets(n, &t).unwrap();
        let f = ic0_factor(&a).unwrap();
        let g = f.to_dense_lower();
        let exact = Cholesky::new(&a.to_dense()).unwrap();
        assert!(g.sub(exact.factor()).max_abs() < 1e-12);
        assert!(g.matmul_t(&g).sub(&a.to_dense()).max_abs() < 1e-12);
        // The preconditioner is then an exact solve.
        let b: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
        let x = f.apply(&b);
        let r = a.spmv(&x).unwrap();
        assert!(r.iter().zip(&b).all(|(u, v)| (u - v).abs() < 1e-12));
    }

    #[test]
    fn shifted_graph_laplacian_needs_no_restart() {
        // Path graph Laplacian + 1e-6 I: an M-matrix, IC(0) cannot break down.
        let n = 50;
        let mut t = Vec::new();
        for i in 0..n {
            let deg = if i == 0 || i == n - 1 { 1.0 } else { 2.0 };
            t.push((i, i, deg + 1e-6));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        let a = SparseSymmetric::from_triplets(n, &t).unwrap();
        assert_eq!(ic0_factor(&a).unwrap().shift(), 0.0);
    }

    #[test]
    fn indefinite_triggers_shift() {
        let a = SparseSymmetric::from_dense(&DenseMatrix::from_rows(&[
            &[1.0, 2.0],
            &[2.0, 1.0],
        ]))
        .unwrap();
        let f = ic0_factor(&a).unwrap();
        assert!(f.shift() > 0.0);
        // Needs a shift above 9, beyond 1e-8 · 2^29 · mean(diag).
        let a = SparseSymmetric::from_dense(&DenseMatrix::from_rows(&[&[1.0, 10.0], &[10.0, 1.0]])).unwrap();
        assert!(matches!(ic0_factor(&a), Err(Error::FactorizationBreakdown { .. })));
    }
}
