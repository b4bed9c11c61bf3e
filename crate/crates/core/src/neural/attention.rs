use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;

/// Multi-head scaled dot-product attention on already projected inputs.
///
/// `q` is `n_q x (h·d_h)`, `k` and `v` are `n_k x (h·d_h)`; head `i` uses
/// columns `i·d_h .. (i+1)·d_h`. `log_bias[j]`, when given, is added to every
/// logit of key `j` in every head.
pub fn multi_head_attention(
    q: &DenseMatrix,
    k: &DenseMatrix,
    v: &DenseMatrix,
    heads: usize,
    log_bias: Option<&[f64]>,
) -> DenseMatrix {
    let (nq, inner) = q.shape();
    let nk = k.rows();
    assert!(heads > 0 && inner % heads == 0);
    assert_eq!(k.shape(), (nk, inner));
    assert_eq!(v.shape(), (nk, inner));
    if let Some(b) = log_bias {
        assert_eq!(b.len(), nk);
    }
    let dh = inner / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut out = DenseMatrix::zeros(nq, inner);
    let mut row_max = vec![0.0; nq];
    let mut row_sum = vec![0.0; nq];
    for h in 0..heads {
        let (c0, c1) = (h * dh, (h + 1) * dh);
        let mut logits = q.columns(c0, c1).matmul_t(&k.columns(c0, c1));
        logits.scale(scale);
        if let Some(b) = log_bias {
            for (j, &bj) in b.iter().enumerate() {
                logits.col_mut(j).iter_mut().for_each(|x| *x += bj);
            }
        }
        row_max.fill(f64::NEG_INFINITY);
        for j in 0..nk {
            for (m, &x) in row_max.iter_mut().zip(logits.col(j)) {
                *m = m.max(x);
            }
        }
        row_sum.fill(0.0);
        for j in 0..nk {
            for ((x, m), s) in logits.col_mut(j).iter_mut().zip(&row_max).zip(row_sum.iter_mut()) {
                *x = (*x - m).exp();
                *s += *x;
            }
        }
        for j in 0..nk {
            for (x, s) in logits.col_mut(j).iter_mut().zip(&row_sum) {
                *x /= s;
            }
        }
        let head_out = logits.matmul(&v.columns(c0, c1));
        for c in 0..dh {
            out.col_mut(c0 + c).copy_from_slice(head_out.col(c));
        }
    }
    out
}

/// Latent queries attend to all points with plain softmax weights.
pub fn standard_down_attention(
    q_lat: &DenseMatrix,
    k: &DenseMatrix,
    v: &DenseMatrix,
    heads: usize,
) -> DenseMatrix {
    multi_head_attention(q_lat, k, v, heads, None)
}

/// `log w_j` with `w` normalized by its maximum first, so constant masses
/// give a bias of exactly zero.
pub fn log_mass_bias(w: &[f64]) -> Result<Vec<f64>> {
    if let Some((index, &value)) = w.iter().enumerate().find(|(_, w)| !(**w > 0.0 && w.is_finite())) {
        return Err(Error::NonPositiveMass { index, value });
    }
    let top = w.iter().copied().fold(0.0, f64::max);
    Ok(w.iter().map(|x| (x / top).ln()).collect())
}

/// Mass-injected down-projection: logits of key `j` shifted by `log w_j`, so
/// the attention weights become `κ_ij w_j / Σ_n κ_in w_n`.
pub fn mass_down_attention(
    q_lat: &DenseMatrix,
    k: &DenseMatrix,
    v: &DenseMatrix,
    w: &[f64],
    heads: usize,
) -> Result<DenseMatrix> {
    if w.len() != k.rows() {
        return Err(Error::DimensionMismatch {
            expected: k.rows(),
            found: w.len(),
        });
    }
    let bias = log_mass_bias(w)?;
    Ok(multi_head_attention(q_lat, k, v, heads, Some(&bias)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn rand_mat(r: usize, c: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
        DenseMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
    }

    fn brute_force(q: &DenseMatrix, k: &DenseMatrix, v: &DenseMatrix, heads: usize, w: Option<&[f64]>) -> DenseMatrix {
        let dh = q.cols() / heads;
        let mut out = DenseMatrix::zeros(q.rows(), q.cols());
        for h in 0..heads {
            for i in 0..q.rows() {
                let mut kappa = Vec::new();
                for j in 0..k.rows() {
                    let mut s = 0.0;
                    for c in h * dh..(h + 1) * dh {
                        s += q[(i, c)] * k[(j, c)];
                    }
                    let weight = w.map_or(1.0, |w| w[j]);
                    kappa.push((s / (dh as f64).sqrt()).exp() * weight);
                }
                let total: f64 = kappa.iter().sum();
                for c in h * dh..(h + 1) * dh {
                    out[(i, c)] = (0..k.rows()).map(|j| kappa[j] / total * v[(j, c)]).sum();
                }
            }
        }
        out
    }

    #[test]
    fn single_key_returns_its_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (q, k, v) = (rand_mat(3, 4, &mut rng), rand_mat(1, 4, &mut rng), rand_mat(1, 4, &mut rng));
        let z = standard_down_attention(&q, &k, &v, 2);
        for i in 0..3 {
            for c in 0..4 {
                assert_eq!(z[(i, c)], v[(0, c)]);
            }
        }
    }

    #[test]
    fn identical_keys_average_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q = rand_mat(2, 6, &mut rng);
        let k1 = rand_mat(1, 6, &mut rng);
        let k = DenseMatrix::from_fn(5, 6, |_, c| k1[(0, c)]);
        let v = rand_mat(5, 6, &mut rng);
        let z = standard_down_attention(&q, &k, &v, 3);
        for c in 0..6 {
            let mean = v.col(c).iter().sum::<f64>() / 5.0;
            assert!((z[(0, c)] - mean).abs() < 1e-15);
        }
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (q, k, v) = (rand_mat(4, 6, &mut rng), rand_mat(9, 6, &mut rng), rand_mat(9, 6, &mut rng));
        let z = standard_down_attention(&q, &k, &v, 2);
        assert!(z.sub(&brute_force(&q, &k, &v, 2, None)).max_abs() < 1e-12);
        let w: Vec<f64> = (0..9).map(|i| 0.1 + i as f64 * 0.3).collect();
        let zm = mass_down_attention(&q, &k, &v, &w, 2).unwrap();
        assert!(zm.sub(&brute_force(&q, &k, &v, 2, Some(&w))).max_abs() < 1e-12);
    }

    #[test]
    fn constant_mass_is_bitwise_standard() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (q, k, v) = (rand_mat(4, 8, &mut rng), rand_mat(30, 8, &mut rng), rand_mat(30, 8, &mut rng));
        let a = standard_down_attention(&q, &k, &v, 2);
        let b = mass_down_attention(&q, &k, &v, &[0.37; 30], 2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn non_positive_mass_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (q, k, v) = (rand_mat(1, 2, &mut rng), rand_mat(2, 2, &mut rng), rand_mat(2, 2, &mut rng));
        assert!(mass_down_attention(&q, &k, &v, &[1.0, 0.0], 1).is_err());
        assert!(mass_down_attention(&q, &k, &v, &[1.0, -2.0], 1).is_err());
    }
}
