pub mod deflation;
pub mod eigensolver;
pub mod error;
pub mod laplacian;
pub mod losses;
pub mod metrics;
pub mod neural;
pub mod numerics;
pub mod shapes;
pub mod subspace;

pub use error::{Error, Result};
