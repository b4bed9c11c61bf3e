//! Forward pass of the latent-bottleneck field predictor: positional
//! encoding, lift, mass-aware attention blocks and the output projection.

mod attention;
mod config;
pub mod invariants;
mod spsa;
mod weights;

pub use attention::{
    log_mass_bias, mass_down_attention, multi_head_attention, standard_down_attention,
};
pub use config::BackboneConfig;
pub use spsa::{micro_overfit_demo, OverfitOptions, OverfitTrace};
pub use weights::BackboneWeights;

use crate::error::{Error, Result};
use crate::laplacian::{Point3, PointCloud};
use crate::numerics::DenseMatrix;
use crate::subspace::FieldMatrix;

const LN_EPS: f64 = 1e-6;

/// `[x, y, z, sin(2^j π x), sin(2^j π y), sin(2^j π z), cos(…)×3, …]` for
/// `j = lo..=hi`.
pub fn positional_encoding(points: &[Point3], config: &BackboneConfig) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(points.len(), config.pe_dim());
    for a in 0..3 {
        for (i, p) in points.iter().enumerate() {
            out[(i, a)] = p[a];
        }
    }
    let mut col = 3;
    for j in config.pe_freq_lo..=config.pe_freq_hi {
        let f = 2f64.powi(j) * std::f64::consts::PI;
        for a in 0..3 {
            for (i, p) in points.iter().enumerate() {
                out[(i, col + a)] = (f * p[a]).sin();
                out[(i, col + 3 + a)] = (f * p[a]).cos();
            }
        }
        col += 6;
    }
    out
}

fn layer_norm(x: &DenseMatrix, gain: &DenseMatrix, bias: &DenseMatrix) -> DenseMatrix {
    let (n, d) = x.shape();
    let mut mean = vec![0.0; n];
    for j in 0..d {
        for (m, v) in mean.iter_mut().zip(x.col(j)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= d as f64);
    let mut var = vec![0.0; n];
    for j in 0..d {
        for ((s, v), m) in var.iter_mut().zip(x.col(j)).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let inv: Vec<f64> = var.iter().map(|s| 1.0 / (s / d as f64 + LN_EPS).sqrt()).collect();
    let mut out = DenseMatrix::zeros(n, d);
    for j in 0..d {
        let (g, b) = (gain[(0, j)], bias[(0, j)]);
        for (((o, v), m), s) in out.col_mut(j).iter_mut().zip(x.col(j)).zip(&mean).zip(&inv) {
            *o = (v - m) * s * g + b;
        }
    }
    out
}

fn add_row_bias(x: &mut DenseMatrix, bias: &DenseMatrix) {
    for j in 0..x.cols() {
        let b = bias[(0, j)];
        x.col_mut(j).iter_mut().for_each(|v| *v += b);
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn add_in_place(a: &mut DenseMatrix, b: &DenseMatrix) {
    a.as_mut_slice()
        .iter_mut()
        .zip(b.as_slice())
        .for_each(|(x, y)| *x += y);
}

fn attention_sublayer(
    queries: &DenseMatrix,
    context: &DenseMatrix,
    name: &str,
    weights: &BackboneWeights,
    heads: usize,
    bias: Option<&[f64]>,
) -> DenseMatrix {
    let q = queries.matmul(weights.get(&format!("{name}.wq")));
    let k = context.matmul(weights.get(&format!("{name}.wk")));
    let v = context.matmul(weights.get(&format!("{name}.wv")));
    multi_head_attention(&q, &k, &v, heads, bias).matmul(weights.get(&format!("{name}.wo")))
}

fn norm(x: &DenseMatrix, name: &str, weights: &BackboneWeights) -> DenseMatrix {
    layer_norm(x, weights.get(&format!("{name}.g")), weights.get(&format!("{name}.b")))
}

/// One pre-norm block: latents gather from points (mass-biased when enabled),
/// process among themselves with self-attention and a gated feed-forward,
/// then points read back from latents. Residual connections throughout.
pub fn lrsa_block_forward(
    h: &DenseMatrix,
    mass: &[f64],
    block: usize,
    config: &BackboneConfig,
    weights: &BackboneWeights,
) -> Result<DenseMatrix> {
    if h.cols() != config.width {
        return Err(Error::DimensionMismatch {
            expected: config.width,
            found: h.cols(),
        });
    }
    if mass.len() != h.rows() {
        return Err(Error::DimensionMismatch {
            expected: h.rows(),
            found: mass.len(),
        });
    }
    if block >= config.depth {
        return Err(Error::InvalidInput(format!("block {block} beyond depth {}", config.depth)));
    }
    let p = format!("block{block}");
    let bias = if config.mass_injection {
        Some(log_mass_bias(mass)?)
    } else {
        None
    };

    let mut z = weights.get(&format!("{p}.latents")).clone();
    let zq = norm(&z, &format!("{p}.down.ln_q"), weights);
    let hkv = norm(h, &format!("{p}.down.ln_kv"), weights);
    let down = attention_sublayer(&zq, &hkv, &format!("{p}.down"), weights, config.heads, bias.as_deref());
    add_in_place(&mut z, &down);

    let zn = norm(&z, &format!("{p}.self.ln"), weights);
    let selfa = attention_sublayer(&zn, &zn, &format!("{p}.self"), weights, config.heads, None);
    add_in_place(&mut z, &selfa);

    let zn = norm(&z, &format!("{p}.ffn.ln"), weights);
    let mut val = zn.matmul(weights.get(&format!("{p}.ffn.w_val")));
    let gate = zn.matmul(weights.get(&format!("{p}.ffn.w_gate")));
    val.as_mut_slice()
        .iter_mut()
        .zip(gate.as_slice())
        .for_each(|(v, g)| *v *= sigmoid(*g));
    add_in_place(&mut z, &val.matmul(weights.get(&format!("{p}.ffn.w_out"))));

    let hq = norm(h, &format!("{p}.up.ln_q"), weights);
    let zkv = norm(&z, &format!("{p}.up.ln_kv"), weights);
    let up = attention_sublayer(&hq, &zkv, &format!("{p}.up"), weights, config.heads, None);
    let mut out = h.clone();
    add_in_place(&mut out, &up);
    Ok(out)
}

/// `F = 𝓕_θ(X, w)`: encoding, SiLU lift, `depth` blocks, linear head.
pub fn neo_forward(
    cloud: &PointCloud,
    config: &BackboneConfig,
    weights: &BackboneWeights,
) -> Result<FieldMatrix> {
    config.validate()?;
    let mut h = positional_encoding(&cloud.positions, config).matmul(weights.get("lift.w"));
    add_row_bias(&mut h, weights.get("lift.b"));
    h.as_mut_slice().iter_mut().for_each(|x| *x *= sigmoid(*x));
    for b in 0..config.depth {
        h = lrsa_block_forward(&h, &cloud.weights, b, config, weights)?;
    }
    let mut f = h.matmul(weights.get("head.w"));
    add_row_bias(&mut f, weights.get("head.b"));
    Ok(FieldMatrix::raw(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes::random_sphere_points;

    fn cloud(n: usize, seed: u64) -> PointCloud {
        let pts = random_sphere_points(n, seed);
        let w = (0..n).map(|i| 0.5 + ((i * 37) % 11) as f64 / 10.0).collect();
        PointCloud::new(pts, w).unwrap()
    }

    #[test]
    fn origin_encoding() {
        let c = BackboneConfig::default();
        let e = positional_encoding(&[[0.0; 3]], &c);
        for j in 0..9 {
            for a in 0..3 {
                assert_eq!(e[(0, 3 + 6 * j + a)], 0.0);
                assert_eq!(e[(0, 6 + 6 * j + a)], 1.0);
            }
        }
    }

    #[test]
    fn zero_block_is_identity() {
        let c = BackboneConfig::tiny(4);
        let w = BackboneWeights::zeros(&c).unwrap();
        let h = DenseMatrix::from_fn(10, c.width, |i, j| (i * 3 + j) as f64 * 0.1);
        let out = lrsa_block_forward(&h, &[1.0; 10], 0, &c, &w).unwrap();
        assert_eq!(out, h);
    }

    #[test]
    fn single_point_forward_is_finite() {
        let c = BackboneConfig::tiny(6);
        let w = BackboneWeights::random(&c).unwrap();
        let f = neo_forward(&cloud(1, 1), &c, &w).unwrap();
        assert_eq!(f.matrix().shape(), (1, 6));
        assert!(f.matrix().is_finite());
    }

    #[test]
    fn forward_is_deterministic() {
        let c = BackboneConfig::tiny(6);
        let w = BackboneWeights::random(&c).unwrap();
        let x = cloud(40, 2);
        assert_eq!(neo_forward(&x, &c, &w).unwrap(), neo_forward(&x, &c, &w).unwrap());
    }
}
