//! Compressed sparse row storage for symmetric operators.

use crate::error::{Error, Result};
use crate::numerics::dense::DenseMatrix;

/// Symmetric sparse matrix stored in CSR with both triangles present.
///
/// Column indices are sorted within each row and every diagonal entry is
/// stored explicitly (possibly as zero).
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymmetric {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseSymmetric {
    /// Assembles from `(row, col, value)` triplets. Duplicates are summed and
    /// missing diagonal entries are inserted as zeros. The triplets must
    /// describe both triangles; symmetry is verified to `1e-12` relative.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut counts = vec![0usize; n + 1];
        for &(i, j, v) in triplets {
            if i >= n || j >= n {
                return Err(Error::InvalidInput(format!(
                    "triplet ({i}, {j}) outside {n}x{n}"
                )));
            }
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!("non-finite entry at ({i}, {j})")));
            }
            counts[i + 1] += 1;
        }
        // Diagonal slots.
        for c in counts.iter_mut().skip(1) {
            *c += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let mut cols = vec![0usize; counts[n]];
        let mut vals = vec![0.0; counts[n]];
        let mut fill = counts.clone();
        for i in 0..n {
            cols[fill[i]] = i;
            fill[i] += 1;
        }
        for &(i, j, v) in triplets {
            cols[fill[i]] = j;
            vals[fill[i]] = v;
            fill[i] += 1;
        }

        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::with_capacity(cols.len());
        let mut values = Vec::with_capacity(cols.len());
        row_ptr.push(0);
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for i in 0..n {
            scratch.clear();
            scratch.extend((counts[i]..counts[i + 1]).map(|p| (cols[p], vals[p])));
            scratch.sort_by_key(|&(c, _)| c);
            for &(c, v) in &scratch {
                if col_idx.len() > row_ptr[i] && *col_idx.last().unwrap() == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        let m = Self {
            n,
            row_ptr,
            col_idx,
            values,
        };
        m.check_symmetric(1e-12)?;
        Ok(m)
    }

    /// Wraps raw CSR arrays after validating structure and symmetry.
    pub fn from_csr(
        n: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_ptr.len() != n + 1 || row_ptr[0] != 0 {
            return Err(Error::InvalidInput("malformed row pointer".into()));
        }
        if col_idx.len() != values.len() || *row_ptr.last().unwrap() != col_idx.len() {
            return Err(Error::InvalidInput("CSR array lengths disagree".into()));
        }
        for i in 0..n {
            if row_ptr[i] > row_ptr[i + 1] {
                return Err(Error::InvalidInput("row pointer not monotone".into()));
            }
            let row = &col_idx[row_ptr[i]..row_ptr[i + 1]];
            if row.windows(2).any(|w| w[0] >= w[1]) || row.iter().any(|&c| c >= n) {
                return Err(Error::InvalidInput(format!("row {i} has unsorted or out-of-range columns")));
            }
            if row.binary_search(&i).is_err() {
                return Err(Error::InvalidInput(format!("row {i} lacks a diagonal entry")));
            }
        }
        let m = Self {
            n,
            row_ptr,
            col_idx,
            values,
        };
        m.check_symmetric(1e-12)?;
        Ok(m)
    }

    /// Sparse identity.
    pub fn identity(n: usize) -> Self {
        Self {
            n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Converts a dense symmetric matrix, keeping the nonzero pattern.
    pub fn from_dense(a: &DenseMatrix) -> Result<Self> {
        if a.rows() != a.cols() {
            return Err(Error::DimensionMismatch {
                expected: a.rows(),
                found: a.cols(),
            });
        }
        let n = a.rows();
        let mut trip = Vec::new();
        for j in 0..n {
            for i in 0..n {
                let v = a[(i, j)];
                if v != 0.0 && i != j {
                    trip.push((i, j, v));
                } else if i == j {
                    trip.push((i, i, v));
                }
            }
        }
        Self::from_triplets(n, &trip)
    }

    fn check_symmetric(&self, rel_tol: f64) -> Result<()> {
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[p];
                let mirrored = self.get(j, i);
                let dev = (self.values[p] - mirrored).abs();
                worst = worst.max(dev);
            }
        }
        if worst > rel_tol * scale {
            return Err(Error::NotSymmetric { deviation: worst });
        }
        Ok(())
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of row `i`.
    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    /// Entry `(i, j)`, zero when outside the pattern.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(p) => vals[p],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `y = A x`.
    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: x.len(),
            });
        }
        let mut y = vec![0.0; self.n];
        self.spmv_into(x, &mut y);
        Ok(y)
    }

    /// `y = A x` into a preallocated buffer. Panics on length mismatch.
    pub fn spmv_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        for (i, yi) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            let mut s = 0.0;
            for (&c, &v) in cols.iter().zip(vals) {
                s += v * x[c];
            }
            *yi = s;
        }
    }

    /// `A X` for a dense block of columns.
    pub fn mul_dense(&self, x: &DenseMatrix) -> DenseMatrix {
        assert_eq!(x.rows(), self.n);
        let mut out = DenseMatrix::zeros(self.n, x.cols());
        for j in 0..x.cols() {
            let (src, dst) = (x.col(j), out.col_mut(j));
            self.spmv_into(src, dst);
        }
        out
    }

    /// `xᵀ A x`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for (i, &xi) in x.iter().enumerate() {
            let (cols, vals) = self.row(i);
            let mut r = 0.0;
            for (&c, &v) in cols.iter().zip(vals) {
                r += v * x[c];
            }
            s += xi * r;
        }
        s
    }

    /// `A + diag(d)` on the same pattern.
    pub fn add_diagonal(&self, d: &[f64]) -> SparseSymmetric {
        assert_eq!(d.len(), self.n);
        let mut out = self.clone();
        for (i, &di) in d.iter().enumerate() {
            let p = self.row_ptr[i] + self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]]
                .binary_search(&i)
                .expect("diagonal present");
            out.values[p] += di;
        }
        out
    }

    /// `D A D` for `D = diag(d)`, on the same pattern.
    pub fn congruence_diagonal(&self, d: &[f64]) -> SparseSymmetric {
        assert_eq!(d.len(), self.n);
        let mut out = self.clone();
        for i in 0..self.n {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                out.values[p] *= d[i] * d[self.col_idx[p]];
            }
        }
        out
    }

    /// `s A`.
    pub fn scaled(&self, s: f64) -> SparseSymmetric {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// `A + s B` for matrices of equal dimension (patterns may differ).
    pub fn add_scaled(&self, s: f64, other: &SparseSymmetric) -> Result<SparseSymmetric> {
        if other.n != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: other.n,
            });
        }
        let mut trip = Vec::with_capacity(self.nnz() + other.nnz());
        for i in 0..self.n {
            let (c, v) = self.row(i);
            trip.extend(c.iter().zip(v).map(|(&j, &x)| (i, j, x)));
            let (c, v) = other.row(i);
            trip.extend(c.iter().zip(v).map(|(&j, &x)| (i, j, s * x)));
        }
        Self::from_triplets(self.n, &trip)
    }

    /// Symmetric permutation `P A Pᵀ` where row `i` of the result is row
    /// `perm[i]` of `A`.
    pub fn permuted(&self, perm: &[usize]) -> Result<SparseSymmetric> {
        let mut inv = vec![0usize; self.n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut trip = Vec::with_capacity(self.nnz());
        for (new_i, &old_i) in perm.iter().enumerate() {
            let (c, v) = self.row(old_i);
            trip.extend(c.iter().zip(v).map(|(&j, &x)| (new_i, inv[j], x)));
        }
        Self::from_triplets(self.n, &trip)
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut a = DenseMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            let (c, v) = self.row(i);
            for (&j, &x) in c.iter().zip(v) {
                a[(i, j)] = x;
            }
        }
        a
    }
}
