use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::BackboneConfig;
use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;

/// Named parameter tensors. Vectors are stored as `1 x n` matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct BackboneWeights {
    tensors: BTreeMap<String, DenseMatrix>,
}

/// Kind of initialization for a tensor.
#[derive(Clone, Copy)]
enum Init {
    /// Gaussian with standard deviation `1/√fan_in` (fan-in = rows).
    Linear,
    Ones,
    Zeros,
    /// Unit Gaussian.
    Latent,
}

fn layout(c: &BackboneConfig) -> Vec<(String, usize, usize, Init)> {
    let (d, inner, ffn) = (c.width, c.inner_dim(), c.ffn_dim());
    let mut v = vec![
        ("lift.w".to_string(), c.pe_dim(), d, Init::Linear),
        ("lift.b".to_string(), 1, d, Init::Zeros),
    ];
    let norm = |v: &mut Vec<_>, name: String| {
        v.push((format!("{name}.g"), 1, d, Init::Ones));
        v.push((format!("{name}.b"), 1, d, Init::Zeros));
    };
    let attn = |v: &mut Vec<_>, name: String| {
        for p in ["wq", "wk", "wv"] {
            v.push((format!("{name}.{p}"), d, inner, Init::Linear));
        }
        v.push((format!("{name}.wo"), inner, d, Init::Linear));
    };
    for b in 0..c.depth {
        let p = format!("block{b}");
        v.push((format!("{p}.latents"), c.latent_tokens, d, Init::Latent));
        norm(&mut v, format!("{p}.down.ln_q"));
        norm(&mut v, format!("{p}.down.ln_kv"));
        attn(&mut v, format!("{p}.down"));
        norm(&mut v, format!("{p}.self.ln"));
        attn(&mut v, format!("{p}.self"));
        norm(&mut v, format!("{p}.ffn.ln"));
        v.push((format!("{p}.ffn.w_val"), d, ffn, Init::Linear));
        v.push((format!("{p}.ffn.w_gate"), d, ffn, Init::Linear));
        v.push((format!("{p}.ffn.w_out"), ffn, d, Init::Linear));
        norm(&mut v, format!("{p}.up.ln_q"));
        norm(&mut v, format!("{p}.up.ln_kv"));
        attn(&mut v, format!("{p}.up"));
    }
    v.push(("head.w".to_string(), d, c.output_fields, Init::Linear));
    v.push(("head.b".to_string(), 1, c.output_fields, Init::Zeros));
    v
}

impl BackboneWeights {
    /// Scaled-Gaussian initialization from `config.seed`.
    pub fn random(config: &BackboneConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let tensors = layout(config)
            .into_iter()
            .map(|(name, r, c, init)| {
                let m = match init {
                    Init::Linear => {
                        let s = 1.0 / (r as f64).sqrt();
                        DenseMatrix::from_fn(r, c, |_, _| {
                            let g: f64 = StandardNormal.sample(&mut rng);
                            s * g
                        })
                    }
                    Init::Latent => DenseMatrix::from_fn(r, c, |_, _| StandardNormal.sample(&mut rng)),
                    Init::Ones => DenseMatrix::from_fn(r, c, |_, _| 1.0),
                    Init::Zeros => DenseMatrix::zeros(r, c),
                };
                (name, m)
            })
            .collect();
        Ok(Self { tensors })
    }

    /// Every weight and bias zero, norm gains one.
    pub fn zeros(config: &BackboneConfig) -> Result<Self> {
        config.validate()?;
        let tensors = layout(config)
            .into_iter()
            .map(|(name, r, c, init)| {
                let m = match init {
                    Init::Ones => DenseMatrix::from_fn(r, c, |_, _| 1.0),
                    _ => DenseMatrix::zeros(r, c),
                };
                (name, m)
            })
            .collect();
        Ok(Self { tensors })
    }

    /// Wraps loaded tensors after checking names and shapes against `config`.
    pub fn from_tensors(config: &BackboneConfig, tensors: BTreeMap<String, DenseMatrix>) -> Result<Self> {
        config.validate()?;
        let expected = layout(config);
        if expected.len() != tensors.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} weight tensors, found {}",
                expected.len(),
                tensors.len()
            )));
        }
        for (name, r, c, _) in &expected {
            let t = tensors
                .get(name)
                .ok_or_else(|| Error::InvalidInput(format!("missing weight tensor {name}")))?;
            if t.shape() != (*r, *c) {
                return Err(Error::InvalidInput(format!(
                    "weight {name} has shape {:?}, expected {:?}",
                    t.shape(),
                    (r, c)
                )));
            }
            if !t.is_finite() {
                return Err(Error::InvalidInput(format!("weight {name} has non-finite entries")));
            }
        }
        Ok(Self { tensors })
    }

    pub fn tensors(&self) -> &BTreeMap<String, DenseMatrix> {
        &self.tensors
    }

    pub fn get(&self, name: &str) -> &DenseMatrix {
        self.tensors
            .get(name)
            .unwrap_or_else(|| panic!("weight tensor {name} missing"))
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut DenseMatrix> {
        self.tensors.get_mut(name)
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.values().map(|t| t.rows() * t.cols()).sum()
    }

    /// All parameters concatenated in name order.
    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors
            .values()
            .flat_map(|t| t.as_slice().iter().copied())
            .collect()
    }

    /// Inverse of [`to_flat`](Self::to_flat).
    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.parameter_count());
        let mut off = 0;
        for t in self.tensors.values_mut() {
            let len = t.as_slice().len();
            t.as_mut_slice().copy_from_slice(&flat[off..off + len]);
            off += len;
        }
    }
}
