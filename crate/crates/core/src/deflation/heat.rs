use super::ic0::ic0_factor;
use super::pcg::{deflated_with, icpcg_solve, DeflationSpace, SolveReport};
use crate::error::{Error, Result};
use crate::laplacian::{build_cotan_laplacian, Point3, TriangleMesh};
use crate::numerics::DenseMatrix;

/// Solver for the Poisson stage.
#[derive(Debug, Clone, Copy)]
pub enum PoissonSolver<'a> {
    Icpcg,
    /// Two-level additive preconditioner with the given coarse basis.
    Deflated(&'a DenseMatrix),
}

#[derive(Debug, Clone)]
pub struct HeatOptions {
    pub t_factor: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for HeatOptions {
    fn default() -> Self {
        Self {
            t_factor: 1.0,
            tol: 1e-8,
            max_iter: 10_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct HeatGeodesic {
    pub distances: Vec<f64>,
    pub heat: SolveReport,
    pub poisson: SolveReport,
}

/// Heat-method geodesic distance from `sources`.
///
/// Stage one solves `(M + tL) u = M δ` with `t = t_factor · h²`, `h` the mean
/// edge length. Stage two normalizes `-∇u` per face. Stage three solves
/// `(L + εM) φ = -div X` after removing the right-hand side's component along
/// `M·1`, then shifts `φ` so its minimum over the sources is zero.
pub fn heat_geodesic(
    mesh: &TriangleMesh,
    sources: &[usize],
    solver: PoissonSolver<'_>,
    opts: &HeatOptions,
) -> Result<HeatGeodesic> {
    let n = mesh.num_vertices();
    if sources.is_empty() {
        return Err(Error::InvalidInput("no source vertices".into()));
    }
    if let Some(&s) = sources.iter().find(|&&s| s >= n) {
        return Err(Error::InvalidInput(format!("source {s} out of range (N = {n})")));
    }
    let (count, labels) = mesh.components();
    if count > 1 {
        let mut reached = vec![false; count];
        for &s in sources {
            reached[labels[s]] = true;
        }
        let unreachable: Vec<usize> = (0..count).filter(|&c| !reached[c]).collect();
        if !unreachable.is_empty() {
            return Err(Error::InvalidInput(format!(
                "mesh has {count} components; components {unreachable:?} contain no source"
            )));
        }
        return Err(Error::InvalidInput(format!(
            "mesh has {count} connected components"
        )));
    }

    let lap = build_cotan_laplacian(mesh)?;
    let w = lap.mass.weights();
    let h = mesh.mean_edge_length();
    let t = opts.t_factor * h * h;

    let heat_op = lap.stiffness.scaled(t).add_diagonal(w);
    let mut delta = vec![0.0; n];
    for &s in sources {
        delta[s] = w[s];
    }
    let heat = icpcg_solve(&heat_op, &delta, opts.tol.min(1e-10), opts.max_iter)?;
    if !heat.converged {
        return Err(Error::Numerical(format!(
            "heat solve did not converge in {} iterations",
            heat.iterations
        )));
    }

    let field = normalized_gradient(&mesh.positions, &mesh.faces, &heat.x);
    let div = divergence(&mesh.positions, &mesh.faces, &field, n);

    let eps = 1e-8 * lap.stiffness.diagonal().iter().sum::<f64>() / lap.mass.total();
    let poisson_op = lap.stiffness.add_diagonal(&w.iter().map(|m| eps * m).collect::<Vec<_>>());
    let mut b: Vec<f64> = div.iter().map(|d| -d).collect();
    let shift = b.iter().sum::<f64>() / lap.mass.total();
    for (bi, wi) in b.iter_mut().zip(w) {
        *bi -= shift * wi;
    }

    let ic = ic0_factor(&poisson_op)?;
    let space = match solver {
        PoissonSolver::Icpcg => DeflationSpace::new(&poisson_op, DenseMatrix::zeros(n, 0))?,
        PoissonSolver::Deflated(y) => DeflationSpace::new(&poisson_op, y.clone())?,
    };
    let poisson = deflated_with(&poisson_op, &b, &space, &ic, opts.tol, opts.max_iter);
    if !poisson.converged {
        return Err(Error::Numerical(format!(
            "Poisson solve did not converge in {} iterations (residual {:e})",
            poisson.iterations, poisson.residual_norm
        )));
    }

    let base = sources
        .iter()
        .map(|&s| poisson.x[s])
        .fold(f64::INFINITY, f64::min);
    let distances = poisson.x.iter().map(|p| p - base).collect();
    Ok(HeatGeodesic {
        distances,
        heat,
        poisson,
    })
}

fn sub(a: &Point3, b: &Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: &Point3, b: &Point3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: &Point3, b: &Point3) -> Point3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Per-face `-∇u / |∇u|`; zero where the gradient vanishes.
fn normalized_gradient(pos: &[Point3], faces: &[[usize; 3]], u: &[f64]) -> Vec<Point3> {
    faces
        .iter()
        .map(|f| {
            let p = f.map(|v| pos[v]);
            let normal = cross(&sub(&p[1], &p[0]), &sub(&p[2], &p[0]));
            let twice_area = dot(&normal, &normal).sqrt();
            let nhat = normal.map(|c| c / twice_area);
            let mut g = [0.0; 3];
            for c in 0..3 {
                let e = sub(&p[(c + 2) % 3], &p[(c + 1) % 3]);
                let ne = cross(&nhat, &e);
                for a in 0..3 {
                    g[a] += u[f[c]] * ne[a];
                }
            }
            let len = dot(&g, &g).sqrt();
            if len > 0.0 {
                g.map(|c| -c / len)
            } else {
                [0.0; 3]
            }
        })
        .collect()
}

/// Integrated divergence per vertex:
/// `½ Σ (cot θ₁ ⟨e₁, X⟩ + cot θ₂ ⟨e₂, X⟩)` over incident faces.
fn divergence(pos: &[Point3], faces: &[[usize; 3]], field: &[Point3], n: usize) -> Vec<f64> {
    let mut div = vec![0.0; n];
    for (f, x) in faces.iter().zip(field) {
        let p = f.map(|v| pos[v]);
        let cot = |c: usize| {
            let u = sub(&p[(c + 1) % 3], &p[c]);
            let v = sub(&p[(c + 2) % 3], &p[c]);
            let cr = cross(&u, &v);
            dot(&u, &v) / dot(&cr, &cr).sqrt()
        };
        let cots = [cot(0), cot(1), cot(2)];
        for c in 0..3 {
            let (j, k) = ((c + 1) % 3, (c + 2) % 3);
            let e1 = sub(&p[j], &p[c]);
            let e2 = sub(&p[k], &p[c]);
            div[f[c]] += 0.5 * (cots[k] * dot(&e1, x) + cots[j] * dot(&e2, x));
        }
    }
    div
}
