//! Discrete Laplacian and lumped mass construction.
//!
//! Both builders return a stiffness matrix `L` (symmetric, PSD, zero row
//! sums) and a diagonal mass `M`, so that the generalized problem
//! `L u = λ M u` approximates the Laplace–Beltrami spectrum.

mod cotan;
pub mod io;
mod knn;

pub use cotan::{build_cotan_laplacian, CotanLaplacian, CotanReport};
pub use knn::{build_knn_laplacian, knn_area_weights, Bandwidth, KnnLaplacian, DEFAULT_K_NEIGHBORS};

use crate::error::{Error, Result};

pub type Point3 = [f64; 3];

/// Positive diagonal mass matrix stored as its diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalMass {
    weights: Vec<f64>,
}

impl DiagonalMass {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if let Some((index, &value)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !(**w > 0.0 && w.is_finite()))
        {
            return Err(Error::NonPositiveMass { index, value });
        }
        Ok(Self { weights })
    }

    pub fn uniform(n: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; n])
    }

    #[inline]
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn sqrt(&self) -> Vec<f64> {
        self.weights.iter().map(|w| w.sqrt()).collect()
    }

    pub fn inv_sqrt(&self) -> Vec<f64> {
        self.weights.iter().map(|w| 1.0 / w.sqrt()).collect()
    }

    /// `⟨u, v⟩_M = uᵀ M v`.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        crate::numerics::weighted_dot(u, &self.weights, v)
    }

    pub fn norm(&self, u: &[f64]) -> f64 {
        self.inner(u, u).sqrt()
    }

    /// `M x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.weights).map(|(a, w)| a * w).collect()
    }

    pub fn scaled(&self, s: f64) -> Result<Self> {
        Self::new(self.weights.iter().map(|w| w * s).collect())
    }

    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            weights: perm.iter().map(|&i| self.weights[i]).collect(),
        }
    }
}

/// Sampled surface: positions with per-point area weights.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub positions: Vec<Point3>,
    pub weights: Vec<f64>,
}

impl PointCloud {
    pub fn new(positions: Vec<Point3>, weights: Vec<f64>) -> Result<Self> {
        if positions.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: positions.len(),
                found: weights.len(),
            });
        }
        if positions.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("non-finite coordinate".into()));
        }
        if let Some((index, &value)) = weights.iter().enumerate().find(|(_, w)| !(**w > 0.0)) {
            return Err(Error::NonPositiveMass { index, value });
        }
        Ok(Self { positions, weights })
    }

    /// Unit weights.
    pub fn uniform(positions: Vec<Point3>) -> Result<Self> {
        let n = positions.len();
        Self::new(positions, vec![1.0; n])
    }

    /// Weights from the local disk-area estimate used by the k-NN builder.
    pub fn with_estimated_weights(positions: Vec<Point3>, k_neighbors: usize) -> Result<Self> {
        let w = knn_area_weights(&positions, k_neighbors)?;
        Self::new(positions, w)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Triangle mesh with degenerate faces removed at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    pub positions: Vec<Point3>,
    pub faces: Vec<[usize; 3]>,
    dropped_degenerate: usize,
}

/// Faces with area below this are dropped.
pub const DEGENERATE_AREA: f64 = 1e-14;

impl TriangleMesh {
    pub fn new(positions: Vec<Point3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let n = positions.len();
        if let Some(f) = faces.iter().find(|f| f.iter().any(|&i| i >= n)) {
            return Err(Error::InvalidInput(format!(
                "face {f:?} references a vertex outside 0..{n}"
            )));
        }
        let before = faces.len();
        let faces: Vec<[usize; 3]> = faces
            .into_iter()
            .filter(|f| {
                f[0] != f[1]
                    && f[1] != f[2]
                    && f[0] != f[2]
                    && triangle_area(&positions[f[0]], &positions[f[1]], &positions[f[2]])
                        >= DEGENERATE_AREA
            })
            .collect();
        let dropped_degenerate = before - faces.len();
        if dropped_degenerate > 0 {
            log::warn!("dropped {dropped_degenerate} degenerate faces");
        }
        Ok(Self {
            positions,
            faces,
            dropped_degenerate,
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.positions.len()
    }

    pub fn dropped_degenerate(&self) -> usize {
        self.dropped_degenerate
    }

    pub fn total_area(&self) -> f64 {
        self.faces
            .iter()
            .map(|f| {
                triangle_area(
                    &self.positions[f[0]],
                    &self.positions[f[1]],
                    &self.positions[f[2]],
                )
            })
            .sum()
    }

    /// Unique undirected edges, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut e: Vec<(usize, usize)> = self
            .faces
            .iter()
            .flat_map(|f| {
                [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])]
                    .map(|(a, b)| (a.min(b), a.max(b)))
            })
            .collect();
        e.sort_unstable();
        e.dedup();
        e
    }

    pub fn mean_edge_length(&self) -> f64 {
        let e = self.edges();
        if e.is_empty() {
            return 0.0;
        }
        e.iter()
            .map(|&(a, b)| dist(&self.positions[a], &self.positions[b]))
            .sum::<f64>()
            / e.len() as f64
    }

    /// Connected components over face adjacency; `labels[v]` per vertex.
    /// Vertices not referenced by any face form their own components.
    pub fn components(&self) -> (usize, Vec<usize>) {
        let mut uf = UnionFind::new(self.num_vertices());
        for f in &self.faces {
            uf.union(f[0], f[1]);
            uf.union(f[1], f[2]);
        }
        uf.labels()
    }
}

/// Centers the bounding box at the origin and scales uniformly so the longest
/// axis spans `[-1, 1]`.
pub fn normalize_cloud(points: &[Point3]) -> Result<Vec<Point3>> {
    if points.is_empty() {
        return Err(Error::InvalidInput("empty point set".into()));
    }
    if points.iter().flatten().any(|c| !c.is_finite()) {
        return Err(Error::InvalidInput("non-finite coordinate".into()));
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in points {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let extent = (0..3).map(|a| hi[a] - lo[a]).fold(0.0, f64::max);
    if extent <= 0.0 {
        return Err(Error::InvalidInput(
            "all points coincide (zero diameter)".into(),
        ));
    }
    let center = [0, 1, 2].map(|a| 0.5 * (lo[a] + hi[a]));
    let scale = 2.0 / extent;
    Ok(points
        .iter()
        .map(|p| [0, 1, 2].map(|a| ((p[a] - center[a]) * scale).clamp(-1.0, 1.0)))
        .collect())
}

#[inline]
pub(crate) fn sub3(a: &Point3, b: &Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub(crate) fn dot3(a: &Point3, b: &Point3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub(crate) fn cross3(a: &Point3, b: &Point3) -> Point3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub(crate) fn norm3(a: &Point3) -> f64 {
    dot3(a, a).sqrt()
}

#[inline]
pub(crate) fn dist(a: &Point3, b: &Point3) -> f64 {
    norm3(&sub3(a, b))
}

pub(crate) fn triangle_area(a: &Point3, b: &Point3, c: &Point3) -> f64 {
    0.5 * norm3(&cross3(&sub3(b, a), &sub3(c, a)))
}

pub(crate) struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub(crate) fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }

    /// Component count and dense labels in order of first appearance.
    pub(crate) fn labels(&mut self) -> (usize, Vec<usize>) {
        let n = self.parent.len();
        let mut map = vec![usize::MAX; n];
        let mut labels = vec![0; n];
        let mut count = 0;
        for i in 0..n {
            let r = self.find(i);
            if map[r] == usize::MAX {
                map[r] = count;
                count += 1;
            }
            labels[i] = map[r];
        }
        (count, labels)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cube_corners_map_to_unit_cube() {
        let pts: Vec<Point3> = (0..8)
            .map(|i| [0, 1, 2].map(|a| if i >> a & 1 == 1 { 2.0 } else { 0.0 }))
            .collect();
        let out = normalize_cloud(&pts).unwrap();
        for (p, q) in pts.iter().zip(&out) {
            for a in 0..3 {
                assert_eq!(q[a], p[a] - 1.0);
            }
        }
    }

    #[test]
    fn planar_input_is_centered_and_scaled() {
        let pts = vec![[0.0, 0.0, 5.0], [4.0, 0.0, 5.0], [0.0, 2.0, 5.0], [4.0, 2.0, 5.0]];
        let out = normalize_cloud(&pts).unwrap();
        assert_eq!(out[0], [-1.0, -0.5, 0.0]);
        assert_eq!(out[3], [1.0, 0.5, 0.0]);
    }

    #[test]
    fn random_cloud_touches_unit_bound() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let pts: Vec<Point3> = (0..500)
            .map(|_| [rng.random_range(-3.0..7.0), rng.random_range(0.0..1.0), rng.random_range(2.0..4.0)])
            .collect();
        let out = normalize_cloud(&pts).unwrap();
        let m = out.iter().flatten().fold(0.0f64, |m, c| m.max(c.abs()));
        assert!((m - 1.0).abs() <= 1e-15);
        assert!(out.iter().flatten().all(|c| c.abs() <= 1.0));
    }

    #[test]
    fn coincident_points_rejected() {
        assert!(normalize_cloud(&[[1.0, 1.0, 1.0]; 3]).is_err());
        assert!(normalize_cloud(&[]).is_err());
    }

    #[test]
    fn mass_rejects_nonpositive() {
        assert!(matches!(
            DiagonalMass::new(vec![1.0, 0.0]),
            Err(Error::NonPositiveMass { index: 1, .. })
        ));
        assert!(PointCloud::new(vec![[0.0; 3]], vec![-1.0]).is_err());
    }

    #[test]
    fn degenerate_faces_dropped() {
        let mesh = TriangleMesh::new(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [2.0, 0.0, 0.0]],
            vec![[0, 1, 2], [0, 1, 3], [0, 0, 2]],
        )
        .unwrap();
        assert_eq!(mesh.faces.len(), 1);
        assert_eq!(mesh.dropped_degenerate(), 2);
        assert!(TriangleMesh::new(vec![[0.0; 3]], vec![[0, 1, 2]]).is_err());
    }
}
