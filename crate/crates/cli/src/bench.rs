use std::collections::BTreeMap;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use neo_core::laplacian::{build_knn_laplacian, normalize_cloud, Bandwidth, KnnLaplacian, PointCloud};
use neo_core::neural::{neo_forward, BackboneConfig, BackboneWeights};
use neo_core::numerics::DenseMatrix;
use neo_core::shapes::random_sphere_points;
use neo_core::subspace::{recover_eigenpairs, FieldMatrix};
use neo_core::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub n: usize,
    pub stage: &'static str,
    pub seconds: f64,
    pub repeat: usize,
}

pub const CSV_HEADER: &str = "N,stage,seconds,repeat";

impl BenchRow {
    pub fn csv(&self) -> String {
        format!("{},{},{:e},{}", self.n, self.stage, self.seconds, self.repeat)
    }
}

/// Network timed in the `forward` stage; its output replaces the Gaussian fields.
pub struct Network<'a> {
    pub config: &'a BackboneConfig,
    pub weights: &'a BackboneWeights,
}

/// Seeded uniform sphere samples with their k-NN Laplacian.
pub fn synthetic_problem(n: usize, k_neighbors: usize, seed: u64) -> Result<(Vec<[f64; 3]>, KnnLaplacian)> {
    let pts = random_sphere_points(n, seed);
    let lap = build_knn_laplacian(&PointCloud::uniform(pts.clone())?, k_neighbors, Bandwidth::Auto)?;
    Ok((pts, lap))
}

pub fn gaussian_fields(n: usize, m: usize, seed: u64) -> FieldMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    FieldMatrix::raw(DenseMatrix::from_fn(n, m, |_, _| StandardNormal.sample(&mut rng)))
}

/// Times the refinement stages (and the forward pass when a network is given)
/// `repeat` times per size.
pub fn bench_scaling(
    sizes: &[usize],
    m: usize,
    k: usize,
    k_neighbors: usize,
    repeat: usize,
    seed: u64,
    network: Option<&Network<'_>>,
) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    for &n in sizes {
        let (pts, lap) = synthetic_problem(n, k_neighbors, seed)?;
        let cloud = PointCloud::new(normalize_cloud(&pts)?, lap.mass.weights().to_vec())?;
        let gaussian = gaussian_fields(n, m, seed.wrapping_add(1));
        for r in 0..repeat {
            let f = match network {
                Some(net) => {
                    let start = Instant::now();
                    let f = neo_forward(&cloud, net.config, net.weights)?;
                    rows.push(BenchRow { n, stage: "forward", seconds: start.elapsed().as_secs_f64(), repeat: r });
                    f
                }
                None => gaussian.clone(),
            };
            let rec = recover_eigenpairs(&f, &lap.stiffness, &lap.mass, k)?;
            for (stage, seconds) in rec.timings.stages() {
                rows.push(BenchRow { n, stage, seconds, repeat: r });
            }
        }
    }
    Ok(rows)
}

/// Least-squares slope of `ln y` against `ln x`; NaN with fewer than two
/// distinct `x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    if lx.len() < 2 {
        return f64::NAN;
    }
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return f64::NAN;
    }
    sxy / sxx
}

/// Per-stage slopes of mean time vs `N`, plus the combined `qr+projection`.
pub fn stage_slopes(rows: &[BenchRow]) -> Vec<(String, f64)> {
    // stage -> N -> (sum, count)
    let mut acc: BTreeMap<String, BTreeMap<usize, (f64, usize)>> = BTreeMap::new();
    let mut combined: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for r in rows {
        let e = acc.entry(r.stage.to_string()).or_default().entry(r.n).or_default();
        e.0 += r.seconds;
        e.1 += 1;
        if r.stage == "qr" || r.stage == "projection" {
            *combined.entry((r.n, r.repeat)).or_default() += r.seconds;
        }
    }
    if !combined.is_empty() {
        let e = acc.entry("qr+projection".to_string()).or_default();
        for ((n, _), s) in combined {
            let c = e.entry(n).or_default();
            c.0 += s;
            c.1 += 1;
        }
    }
    acc.into_iter()
        .map(|(stage, by_n)| {
            let (x, y): (Vec<f64>, Vec<f64>) = by_n
                .iter()
                .map(|(&n, &(s, c))| (n as f64, s / c as f64))
                .unzip();
            (stage, loglog_slope(&x, &y))
        })
        .collect()
}
