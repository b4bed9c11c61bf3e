use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{neo_forward, BackboneConfig, BackboneWeights};
use crate::error::{Error, Result};
use crate::laplacian::{DiagonalMass, PointCloud};
use crate::losses::{total_loss, DEFAULT_ALPHA};
use crate::subspace::FieldMatrix;

#[derive(Debug, Clone)]
pub struct OverfitOptions {
    pub iterations: usize,
    /// Step gain `a` in `a_k = a / (k + 1 + A)^0.602`.
    pub step: f64,
    /// Perturbation gain `c` in `c_k = c / (k + 1)^0.101`.
    pub perturbation: f64,
    /// Stability constant `A`.
    pub stability: f64,
    /// Simultaneous perturbations averaged per step.
    pub samples: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for OverfitOptions {
    fn default() -> Self {
        Self {
            iterations: 500,
            step: 0.3,
            perturbation: 1e-2,
            stability: 50.0,
            samples: 2,
            alpha: DEFAULT_ALPHA,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OverfitTrace {
    /// Total loss at the initial weights and after every step.
    pub losses: Vec<f64>,
    /// Running minimum of `losses`.
    pub best: Vec<f64>,
    pub best_weights: BackboneWeights,
    pub diverged: bool,
}

impl OverfitTrace {
    pub fn initial(&self) -> f64 {
        self.losses[0]
    }

    pub fn best_loss(&self) -> f64 {
        *self.best.last().unwrap()
    }
}

/// Fits the backbone weights to the span of `target` with simultaneous
/// perturbation stochastic approximation (Rademacher directions). The cloud's
/// point weights serve both as attention masses and as the loss mass; the
/// default gains assume they sum to about one.
pub fn micro_overfit_demo(
    cloud: &PointCloud,
    target: &FieldMatrix,
    config: &BackboneConfig,
    opts: &OverfitOptions,
) -> Result<OverfitTrace> {
    let mut weights = BackboneWeights::random(config)?;
    let params = weights.parameter_count();
    if params > 5000 {
        return Err(Error::InvalidInput(format!("demo limited to 5000 parameters, config has {params}")));
    }
    if cloud.len() > 512 || target.n_fields() > 8 || config.output_fields > 16 {
        return Err(Error::InvalidInput("demo limited to N <= 512, k <= 8, m <= 16".into()));
    }
    let mass = DiagonalMass::new(cloud.weights.clone())?;
    let eval = |w: &BackboneWeights| -> Result<f64> {
        let f = neo_forward(cloud, config, w)?;
        Ok(total_loss(&f, &mass, target, opts.alpha)?.total)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut theta = weights.to_flat();
    let initial = eval(&weights)?;
    let mut losses = vec![initial];
    let mut best = vec![initial];
    let mut best_weights = weights.clone();
    let mut probe = weights.clone();
    let mut diverged = false;
    let mut delta = vec![0.0; theta.len()];
    let mut grad = vec![0.0; theta.len()];
    let mut shifted = vec![0.0; theta.len()];

    for k in 0..opts.iterations {
        let ak = opts.step / (k as f64 + 1.0 + opts.stability).powf(0.602);
        let ck = opts.perturbation / (k as f64 + 1.0).powf(0.101);
        grad.fill(0.0);
        for _ in 0..opts.samples.max(1) {
            delta
                .iter_mut()
                .for_each(|d| *d = if rng.random::<bool>() { 1.0 } else { -1.0 });
            for (s, (t, d)) in shifted.iter_mut().zip(theta.iter().zip(&delta)) {
                *s = t + ck * d;
            }
            probe.set_flat(&shifted);
            let plus = eval(&probe)?;
            for (s, (t, d)) in shifted.iter_mut().zip(theta.iter().zip(&delta)) {
                *s = t - ck * d;
            }
            probe.set_flat(&shifted);
            let minus = eval(&probe)?;
            let g = (plus - minus) / (2.0 * ck);
            for (gi, d) in grad.iter_mut().zip(&delta) {
                *gi += g * d;
            }
        }
        let scale = ak / opts.samples.max(1) as f64;
        for (t, g) in theta.iter_mut().zip(&grad) {
            *t -= scale * g;
        }
        weights.set_flat(&theta);
        let loss = eval(&weights)?;
        losses.push(loss);
        let prev = *best.last().unwrap();
        if loss < prev {
            best_weights = weights.clone();
        }
        best.push(prev.min(loss));
        if !(loss <= 10.0 * initial) {
            log::warn!("SPSA diverged at step {k}: loss {loss:e}");
            diverged = true;
            break;
        }
    }
    Ok(OverfitTrace {
        losses,
        best,
        best_weights,
        diverged,
    })
}
