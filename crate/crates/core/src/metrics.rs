//! Evaluation of recovered eigenpairs against a reference spectrum.

use serde::{Deserialize, Serialize};

use crate::eigensolver::Spectrum;
use crate::error::{Error, Result};
use crate::laplacian::DiagonalMass;
use crate::numerics::DenseMatrix;
use crate::subspace::RitzResult;

/// Eigenvalues at or below this are treated as zero modes in `E_val`.
const ZERO_EIGENVALUE: f64 = 1e-10;

/// Predicted pairs reordered and sign-flipped to match the reference.
#[derive(Debug, Clone)]
pub struct AlignedModes {
    pub values: Vec<f64>,
    pub vectors: DenseMatrix,
    /// `permutation[i]` is the predicted mode matched to reference mode `i`.
    pub permutation: Vec<usize>,
    pub signs: Vec<f64>,
}

/// Greedy matching on `|λ̂ - λ|`: all pairs are visited by increasing cost
/// (ties by reference index, then predicted index), then each matched vector
/// is flipped so that `u_iᵀ M û_i ≥ 0`.
pub fn align_modes(
    predicted: &RitzResult,
    truth: &Spectrum,
    m: &DiagonalMass,
) -> Result<AlignedModes> {
    let k = truth.k();
    if predicted.retained() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: predicted.retained(),
        });
    }
    let (pv, tv) = (&predicted.values, &truth.values);
    let mut pairs: Vec<(f64, usize, usize)> = (0..k)
        .flat_map(|i| (0..k).map(move |j| ((pv[j] - tv[i]).abs(), i, j)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut permutation = vec![usize::MAX; k];
    let mut taken = vec![false; k];
    for (_, i, j) in pairs {
        if permutation[i] == usize::MAX && !taken[j] {
            permutation[i] = j;
            taken[j] = true;
        }
    }
    let mut vectors = predicted.vectors.matrix().select_columns(&permutation);
    let u = truth.vectors.matrix();
    let w = m.weights();
    let signs: Vec<f64> = (0..k)
        .map(|i| {
            let ip: f64 = u.col(i).iter().zip(vectors.col(i)).zip(w).map(|((a, b), c)| a * b * c).sum();
            if ip < 0.0 {
                -1.0
            } else {
                1.0
            }
        })
        .collect();
    for (i, &s) in signs.iter().enumerate() {
        if s < 0.0 {
            vectors.col_mut(i).iter_mut().for_each(|v| *v = -*v);
        }
    }
    Ok(AlignedModes {
        values: permutation.iter().map(|&j| pv[j]).collect(),
        vectors,
        permutation,
        signs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricMeans {
    pub span: f64,
    pub evec_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub span_per_mode: Vec<f64>,
    pub evec_mse_per_mode: Vec<f64>,
    pub eval_rel_err: f64,
    pub means: MetricMeans,
    /// Reference modes beyond the first left out of `eval_rel_err` because
    /// their eigenvalue is zero.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub eval_excluded_modes: Vec<usize>,
}

impl MetricReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metric report serializes")
    }
}

/// `E_span(i) = 1 - ‖YᵀM u_i‖²` on the predicted basis, `E_vec(i) =
/// ‖u_i - û_i‖_M²` after alignment, and `E_val`, the mean relative
/// eigenvalue error over modes `i ≥ 1`.
pub fn evaluate(predicted: &RitzResult, truth: &Spectrum, m: &DiagonalMass) -> Result<MetricReport> {
    let n = m.len();
    if truth.vectors.n_points() != n || predicted.basis.n_points() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: truth.vectors.n_points(),
        });
    }
    let aligned = align_modes(predicted, truth, m)?;
    let u = truth.vectors.matrix();
    let w = m.weights();
    let proj = predicted.basis.matrix().t_matmul(&u.scale_rows(w));
    let span_per_mode: Vec<f64> = (0..truth.k())
        .map(|i| 1.0 - proj.col(i).iter().map(|c| c * c).sum::<f64>())
        .collect();
    let evec_mse_per_mode: Vec<f64> = (0..truth.k())
        .map(|i| {
            u.col(i)
                .iter()
                .zip(aligned.vectors.col(i))
                .zip(w)
                .map(|((a, b), c)| (a - b) * (a - b) * c)
                .sum()
        })
        .collect();

    let mut excluded = Vec::new();
    let mut rel = Vec::new();
    for i in 1..truth.k() {
        let lam = truth.values[i];
        if lam.abs() <= ZERO_EIGENVALUE {
            excluded.push(i);
        } else {
            rel.push((lam - aligned.values[i]).abs() / lam.abs());
        }
    }
    if !excluded.is_empty() {
        log::warn!("reference modes {excluded:?} have zero eigenvalue; excluded from E_val");
    }
    let mean = |v: &[f64]| {
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    Ok(MetricReport {
        eval_rel_err: mean(&rel),
        means: MetricMeans {
            span: mean(&span_per_mode),
            evec_mse: mean(&evec_mse_per_mode),
        },
        span_per_mode,
        evec_mse_per_mode,
        eval_excluded_modes: excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigensolver::smallest_eigenpairs_dense;
    use crate::laplacian::{build_knn_laplacian, Bandwidth, PointCloud};
    use crate::numerics::SparseSymmetric;
    use crate::shapes::fibonacci_sphere;
    use crate::subspace::{rayleigh_ritz, FieldMatrix, FieldRole};

    fn oracle() -> (DiagonalMass, Spectrum) {
        let cloud = PointCloud::uniform(fibonacci_sphere(200)).unwrap();
        let lap = build_knn_laplacian(&cloud, 8, Bandwidth::Auto).unwrap();
        let s = smallest_eigenpairs_dense(&lap.stiffness, &lap.mass, 6).unwrap();
        (lap.mass, s)
    }

    fn as_ritz(values: Vec<f64>, vectors: DenseMatrix) -> RitzResult {
        let k = values.len();
        RitzResult {
            values,
            basis: FieldMatrix::tagged(vectors.clone(), FieldRole::OrthoY),
            vectors: FieldMatrix::tagged(vectors, FieldRole::EigvecU),
            residuals: vec![0.0; k],
            residuals_l2: vec![0.0; k],
        }
    }

    #[test]
    fn identical_spectra_give_zero_metrics() {
        let (m, s) = oracle();
        let pred = as_ritz(s.values.clone(), s.vectors.matrix().clone());
        let a = align_modes(&pred, &s, &m).unwrap();
        assert_eq!(a.permutation, (0..6).collect::<Vec<_>>());
        assert!(a.signs.iter().all(|&x| x == 1.0));
        let r = evaluate(&pred, &s, &m).unwrap();
        assert!(r.span_per_mode.iter().all(|v| v.abs() < 1e-12));
        assert!(r.evec_mse_per_mode.iter().all(|v| v.abs() < 1e-24));
        assert_eq!(r.eval_rel_err, 0.0);
    }

    #[test]
    fn swapped_and_flipped_modes_realigned() {
        let (m, s) = oracle();
        let mut v = s.vectors.matrix().select_columns(&[0, 1, 2, 4, 3, 5]);
        v.col_mut(2).iter_mut().for_each(|x| *x = -*x);
        let vals = [0, 1, 2, 4, 3, 5].map(|j| s.values[j]).to_vec();
        let pred = as_ritz(vals, v);
        let a = align_modes(&pred, &s, &m).unwrap();
        assert_eq!(a.permutation, vec![0, 1, 2, 4, 3, 5]);
        assert_eq!(a.signs[2], -1.0);
        let r = evaluate(&pred, &s, &m).unwrap();
        assert!(r.evec_mse_per_mode.iter().all(|v| v.abs() < 1e-24));
    }

    #[test]
    fn mixed_pair_has_closed_form_error() {
        // û_i = (u_i + u_j)/√2: ‖u_i - û_i‖_M² = (1 - 1/√2)² + 1/2 = 2 - √2.
        let (m, s) = oracle();
        let u = s.vectors.matrix();
        let mut v = u.clone();
        let mix: Vec<f64> = u.col(2).iter().zip(u.col(3)).map(|(a, b)| (a + b) / 2f64.sqrt()).collect();
        v.col_mut(2).copy_from_slice(&mix);
        let pred = as_ritz(s.values.clone(), v);
        let r = evaluate(&pred, &s, &m).unwrap();
        assert!((r.evec_mse_per_mode[2] - (2.0 - 2f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn json_keys() {
        let (m, s) = oracle();
        let y = FieldMatrix::tagged(s.vectors.matrix().clone(), FieldRole::OrthoY);
        let l = SparseSymmetric::identity(m.len());
        let pred = rayleigh_ritz(&y, &l, &m, 6).unwrap();
        let json = evaluate(&pred, &s, &m).unwrap().to_json();
        for key in ["span_per_mode", "evec_mse_per_mode", "eval_rel_err", "means"] {
            assert!(json.contains(key));
        }
    }

    #[test]
    fn mismatched_k_rejected() {
        let (m, s) = oracle();
        let pred = as_ritz(s.values[..3].to_vec(), s.vectors.matrix().columns(0, 3));
        assert!(evaluate(&pred, &s, &m).is_err());
    }
}
