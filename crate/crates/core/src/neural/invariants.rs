use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{neo_forward, BackboneConfig, BackboneWeights};
use crate::error::Result;
use crate::laplacian::PointCloud;
use crate::numerics::DenseMatrix;

/// Outcome of one end-to-end identity check on the backbone.
#[derive(Debug, Clone, PartialEq)]
pub struct InvariantCheck {
    pub name: &'static str,
    /// Largest absolute entry difference between the paired outputs.
    pub deviation: f64,
    pub tolerance: f64,
}

impl InvariantCheck {
    pub fn passed(&self) -> bool {
        self.deviation <= self.tolerance
    }
}

pub const CONSTANT_MASS_TOL: f64 = 1e-15;
pub const MASS_SCALE_TOL: f64 = 1e-12;
pub const POINT_SPLIT_TOL: f64 = 1e-12;
pub const PERMUTATION_TOL: f64 = 1e-10;

fn max_row_deviation(a: &DenseMatrix, b: &DenseMatrix, rows: impl Iterator<Item = (usize, usize)>) -> f64 {
    let mut dev: f64 = 0.0;
    for (ra, rb) in rows {
        for j in 0..a.cols() {
            let d = (a[(ra, j)] - b[(rb, j)]).abs();
            dev = if d.is_nan() { f64::INFINITY } else { dev.max(d) };
        }
    }
    dev
}

fn forward(positions: &[[f64; 3]], mass: Vec<f64>, config: &BackboneConfig, weights: &BackboneWeights) -> Result<DenseMatrix> {
    let cloud = PointCloud::new(positions.to_vec(), mass)?;
    Ok(neo_forward(&cloud, config, weights)?.into_matrix())
}

/// Constant masses with injection on vs off.
pub fn constant_mass_check(cloud: &PointCloud, config: &BackboneConfig, weights: &BackboneWeights) -> Result<InvariantCheck> {
    let c = cloud.weights.iter().sum::<f64>() / cloud.len() as f64;
    let on = BackboneConfig { mass_injection: true, ..config.clone() };
    let off = BackboneConfig { mass_injection: false, ..config.clone() };
    let a = forward(&cloud.positions, vec![c; cloud.len()], &on, weights)?;
    let b = forward(&cloud.positions, vec![c; cloud.len()], &off, weights)?;
    Ok(InvariantCheck {
        name: "constant_mass",
        deviation: max_row_deviation(&a, &b, (0..cloud.len()).map(|i| (i, i))),
        tolerance: CONSTANT_MASS_TOL,
    })
}

/// `w` vs `scale·w`.
pub fn mass_scale_check(
    cloud: &PointCloud,
    scale: f64,
    config: &BackboneConfig,
    weights: &BackboneWeights,
) -> Result<InvariantCheck> {
    let a = forward(&cloud.positions, cloud.weights.clone(), config, weights)?;
    let scaled = cloud.weights.iter().map(|w| w * scale).collect();
    let b = forward(&cloud.positions, scaled, config, weights)?;
    Ok(InvariantCheck {
        name: "mass_scale",
        deviation: max_row_deviation(&a, &b, (0..cloud.len()).map(|i| (i, i))),
        tolerance: MASS_SCALE_TOL,
    })
}

/// Point `j` is replaced by two coincident copies carrying `fraction·w_j`
/// and `(1 - fraction)·w_j`; rows of the original points must not move.
pub fn point_split_check(
    cloud: &PointCloud,
    j: usize,
    fraction: f64,
    config: &BackboneConfig,
    weights: &BackboneWeights,
) -> Result<InvariantCheck> {
    let n = cloud.len();
    let a = forward(&cloud.positions, cloud.weights.clone(), config, weights)?;
    let mut pos = cloud.positions.clone();
    let mut mass = cloud.weights.clone();
    pos.push(pos[j]);
    mass.push((1.0 - fraction) * mass[j]);
    mass[j] *= fraction;
    let b = forward(&pos, mass, config, weights)?;
    Ok(InvariantCheck {
        name: "point_split",
        deviation: max_row_deviation(&a, &b, (0..n).map(|i| (i, i))),
        tolerance: POINT_SPLIT_TOL,
    })
}

/// `F(PX, Pw)` vs `P F(X, w)`.
pub fn permutation_check(
    cloud: &PointCloud,
    perm: &[usize],
    config: &BackboneConfig,
    weights: &BackboneWeights,
) -> Result<InvariantCheck> {
    let a = forward(&cloud.positions, cloud.weights.clone(), config, weights)?;
    let pos: Vec<_> = perm.iter().map(|&p| cloud.positions[p]).collect();
    let mass = perm.iter().map(|&p| cloud.weights[p]).collect();
    let b = forward(&pos, mass, config, weights)?;
    Ok(InvariantCheck {
        name: "permutation",
        deviation: max_row_deviation(&a, &b, perm.iter().enumerate().map(|(i, &p)| (p, i))),
        tolerance: PERMUTATION_TOL,
    })
}

/// The four checks with seeded choices: scale factor 10, an even split of a
/// random point, a random permutation.
pub fn check_invariants(
    cloud: &PointCloud,
    config: &BackboneConfig,
    weights: &BackboneWeights,
    seed: u64,
) -> Result<Vec<InvariantCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let j = rng.random_range(0..cloud.len());
    let mut perm: Vec<usize> = (0..cloud.len()).collect();
    perm.shuffle(&mut rng);
    Ok(vec![
        constant_mass_check(cloud, config, weights)?,
        mass_scale_check(cloud, 10.0, config, weights)?,
        point_split_check(cloud, j, 0.5, config, weights)?,
        permutation_check(cloud, &perm, config, weights)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes::random_sphere_points;

    fn setup(n: usize, injection: bool) -> (PointCloud, BackboneConfig, BackboneWeights) {
        let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
        let w = (0..n).map(|_| rng.random_range(0.2..2.0)).collect();
        let cloud = PointCloud::new(random_sphere_points(n, 9), w).unwrap();
        let config = BackboneConfig { depth: 2, mass_injection: injection, ..BackboneConfig::tiny(6) };
        let weights = BackboneWeights::random(&config).unwrap();
        (cloud, config, weights)
    }

    #[test]
    fn all_hold_with_injection() {
        let (cloud, config, weights) = setup(50, true);
        for c in check_invariants(&cloud, &config, &weights, 3).unwrap() {
            assert!(c.passed(), "{c:?}");
        }
    }

    #[test]
    fn split_breaks_without_injection() {
        let (cloud, config, weights) = setup(50, false);
        let checks = check_invariants(&cloud, &config, &weights, 3).unwrap();
        let split = checks.iter().find(|c| c.name == "point_split").unwrap();
        assert!(!split.passed(), "{split:?}");
        assert!(checks.iter().filter(|c| c.name != "point_split").all(InvariantCheck::passed));
    }

    #[test]
    fn uneven_split_also_holds() {
        let (cloud, config, weights) = setup(30, true);
        assert!(point_split_check(&cloud, 4, 0.2, &config, &weights).unwrap().passed());
    }

    #[test]
    fn single_point() {
        let (cloud, config, weights) = setup(1, true);
        assert!(check_invariants(&cloud, &config, &weights, 0).unwrap().iter().all(InvariantCheck::passed));
    }
}
