//! Dense and sparse kernels shared by the rest of the crate.

pub mod chol;
pub mod dense;
pub mod eig;
pub mod qr;
pub mod sparse;

pub use chol::{lu_solve, Cholesky};
pub use dense::{axpy, dot, norm2, weighted_dot, DenseMatrix};
pub use eig::{dense_sym_eig, dense_sym_eig_smallest, dense_sym_eigvals, SymmetricEigen};
pub use qr::{thin_qr, ThinQr};
pub use sparse::SparseSymmetric;
