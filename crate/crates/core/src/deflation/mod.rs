//! Incomplete-Cholesky PCG, its spectrally deflated two-level variant, and
//! the heat-method geodesic solver built on them.

mod heat;
mod ic0;
mod pcg;

pub use heat::{heat_geodesic, HeatGeodesic, HeatOptions, PoissonSolver};
pub use ic0::{ic0_factor, IcFactor};
pub use pcg::{
    deflated_icpcg_solve, deflated_with, icpcg_solve, DeflationSpace, SolveReport,
    MAX_COARSE_CONDITION,
};
