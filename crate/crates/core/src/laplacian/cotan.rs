use std::collections::HashMap;

use super::{cross3, dot3, norm3, sub3, DiagonalMass, TriangleMesh};
use crate::error::{Error, Result};
use crate::numerics::SparseSymmetric;

/// Diagnostics gathered while assembling the cotangent operator.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CotanReport {
    /// Degenerate faces dropped when the mesh was built.
    pub dropped_degenerate: usize,
    /// Edges shared by more than two faces.
    pub nonmanifold_edges: usize,
    /// Edges whose summed cotangent weight is negative (obtuse opposite angles).
    pub negative_weight_edges: usize,
    /// Edges whose weight was clamped to zero to restore definiteness.
    pub clamped_edges: usize,
}

#[derive(Debug, Clone)]
pub struct CotanLaplacian {
    pub stiffness: SparseSymmetric,
    pub mass: DiagonalMass,
    pub report: CotanReport,
}

/// Cotangent Laplacian `L_ij = -(cot α_ij + cot β_ij)/2` with barycentric
/// lumped mass (one third of each incident triangle area).
///
/// Every triangle contributes a positive semidefinite element matrix, so the
/// assembled `L` is PSD even with obtuse triangles; the clamp path therefore
/// never fires on meshes that survive the degenerate-face filter, and
/// `clamped_edges` stays zero.
pub fn build_cotan_laplacian(mesh: &TriangleMesh) -> Result<CotanLaplacian> {
    let n = mesh.num_vertices();
    if n == 0 || (mesh.faces.is_empty() && mesh.dropped_degenerate() == 0) {
        return Err(Error::InvalidInput("empty mesh".into()));
    }
    if mesh.faces.is_empty() {
        return Err(Error::InvalidInput("all faces are degenerate".into()));
    }

    let mut weights: HashMap<(usize, usize), (f64, u32)> = HashMap::new();
    let mut mass = vec![0.0; n];
    for f in &mesh.faces {
        let p = [0, 1, 2].map(|c| mesh.positions[f[c]]);
        let area = 0.5 * norm3(&cross3(&sub3(&p[1], &p[0]), &sub3(&p[2], &p[0])));
        for c in 0..3 {
            let (a, b, o) = (f[(c + 1) % 3], f[(c + 2) % 3], c);
            let u = sub3(&p[(c + 1) % 3], &p[o]);
            let v = sub3(&p[(c + 2) % 3], &p[o]);
            let cot = dot3(&u, &v) / norm3(&cross3(&u, &v));
            let e = weights.entry((a.min(b), a.max(b))).or_insert((0.0, 0));
            e.0 += 0.5 * cot;
            e.1 += 1;
            mass[f[c]] += area / 3.0;
        }
    }

    if let Some(v) = mass.iter().position(|&m| m <= 0.0) {
        return Err(Error::InvalidInput(format!(
            "vertex {v} is not referenced by any non-degenerate face"
        )));
    }

    let mut edges: Vec<((usize, usize), (f64, u32))> = weights.into_iter().collect();
    edges.sort_unstable_by_key(|e| e.0);

    let mut report = CotanReport {
        dropped_degenerate: mesh.dropped_degenerate(),
        ..Default::default()
    };
    let mut diag = vec![0.0; n];
    let mut trip = Vec::with_capacity(2 * edges.len() + n);
    for &((i, j), (w, count)) in &edges {
        if count > 2 {
            report.nonmanifold_edges += 1;
        }
        if w < 0.0 {
            report.negative_weight_edges += 1;
        }
        trip.push((i, j, -w));
        trip.push((j, i, -w));
        diag[i] += w;
        diag[j] += w;
    }
    for (i, &d) in diag.iter().enumerate() {
        trip.push((i, i, d));
    }
    Ok(CotanLaplacian {
        stiffness: SparseSymmetric::from_triplets(n, &trip)?,
        mass: DiagonalMass::new(mass)?,
        report,
    })
}
