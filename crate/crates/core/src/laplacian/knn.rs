use kiddo::{KdTree, SquaredEuclidean};

use super::{Point3, UnionFind, DiagonalMass, PointCloud};
use crate::error::{Error, Result};
use crate::numerics::SparseSymmetric;

pub const DEFAULT_K_NEIGHBORS: usize = 12;

/// Heat-kernel bandwidth `t` in `exp(-d² / 4t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    /// `t = (mean k-NN distance)²`, the k-NN distance of a point being the
    /// distance to its `k`-th nearest neighbor.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone)]
pub struct KnnLaplacian {
    pub stiffness: SparseSymmetric,
    pub mass: DiagonalMass,
    /// Connected components of the symmetrized k-NN graph; equals the
    /// multiplicity of the zero eigenvalue.
    pub components: usize,
    pub bandwidth: f64,
}

/// Sorted `(distance, index)` lists of the `k` nearest other points.
fn neighbors(points: &[Point3], k: usize) -> Vec<Vec<(f64, usize)>> {
    let mut tree: KdTree<f64, 3> = KdTree::with_capacity(points.len().max(1));
    for (i, p) in points.iter().enumerate() {
        tree.add(p, i as u64);
    }
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut nn: Vec<(f64, usize)> = tree
                .nearest_n::<SquaredEuclidean>(p, k + 1)
                .into_iter()
                .map(|n| (n.distance, n.item as usize))
                .filter(|&(_, j)| j != i)
                .collect();
            nn.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            nn.truncate(k);
            nn.into_iter().map(|(d2, j)| (d2.sqrt(), j)).collect()
        })
        .collect()
}

fn mean_distances(nbrs: &[Vec<(f64, usize)>]) -> Vec<f64> {
    nbrs.iter()
        .map(|nn| nn.iter().map(|(d, _)| d).sum::<f64>() / nn.len().max(1) as f64)
        .collect()
}

/// Local disk-area estimate `π (mean distance to k nearest)²` per point.
pub fn knn_area_weights(points: &[Point3], k_neighbors: usize) -> Result<Vec<f64>> {
    check_k(points.len(), k_neighbors)?;
    let nbrs = neighbors(points, k_neighbors);
    let w: Vec<f64> = mean_distances(&nbrs)
        .iter()
        .map(|d| std::f64::consts::PI * d * d)
        .collect();
    if let Some((index, &value)) = w.iter().enumerate().find(|(_, w)| !(**w > 0.0)) {
        return Err(Error::NonPositiveMass { index, value });
    }
    Ok(w)
}

fn check_k(n: usize, k: usize) -> Result<()> {
    if k < 3 || n <= k {
        return Err(Error::InvalidInput(format!(
            "k-NN Laplacian needs N > k >= 3 (N = {n}, k = {k})"
        )));
    }
    Ok(())
}

/// Gaussian-weighted k-NN graph Laplacian with disk-area mass.
///
/// Edges are the union of the directed k-NN relations, weighted by
/// `exp(-‖x_i - x_j‖² / 4t)`; `L = D - W`. The point weights stored in the
/// cloud are not used: the mass comes from the neighbor distances.
pub fn build_knn_laplacian(
    cloud: &PointCloud,
    k_neighbors: usize,
    bandwidth: Bandwidth,
) -> Result<KnnLaplacian> {
    let points = &cloud.positions;
    let n = points.len();
    check_k(n, k_neighbors)?;
    let nbrs = neighbors(points, k_neighbors);
    let mean_d = mean_distances(&nbrs);

    let t = match bandwidth {
        Bandwidth::Auto => {
            let m = nbrs.iter().map(|nn| nn.last().map_or(0.0, |p| p.0)).sum::<f64>() / n as f64;
            m * m
        }
        Bandwidth::Fixed(t) => t,
    };
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidInput(format!("bandwidth must be positive, got {t}")));
    }

    let mut pairs: Vec<(usize, usize, f64)> = nbrs
        .iter()
        .enumerate()
        .flat_map(|(i, nn)| nn.iter().map(move |&(d, j)| (i.min(j), i.max(j), d)))
        .collect();
    pairs.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    pairs.dedup_by(|a, b| a.0 == b.0 && a.1 == b.1);

    let mut uf = UnionFind::new(n);
    let mut degree = vec![0.0; n];
    let mut trip = Vec::with_capacity(2 * pairs.len() + n);
    for &(i, j, d) in &pairs {
        let w = (-d * d / (4.0 * t)).exp();
        trip.push((i, j, -w));
        trip.push((j, i, -w));
        degree[i] += w;
        degree[j] += w;
        uf.union(i, j);
    }
    for (i, &d) in degree.iter().enumerate() {
        trip.push((i, i, d));
    }
    let stiffness = SparseSymmetric::from_triplets(n, &trip)?;
    let weights = mean_d
        .iter()
        .map(|d| std::f64::consts::PI * d * d)
        .collect();
    let mass = DiagonalMass::new(weights)?;
    let (components, _) = uf.labels();
    if components > 1 {
        log::info!("k-NN graph has {components} connected components");
    }
    Ok(KnnLaplacian {
        stiffness,
        mass,
        components,
        bandwidth: t,
    })
}
