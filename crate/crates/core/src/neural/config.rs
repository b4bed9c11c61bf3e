use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Architecture hyperparameters of the backbone.
#[derive(Debug, Clone, PartialEq)]
pub struct BackboneConfig {
    pub width: usize,
    pub depth: usize,
    pub heads: usize,
    pub head_dim: usize,
    pub latent_tokens: usize,
    pub output_fields: usize,
    /// Positional-encoding frequencies are `2^j π` for `j` in
    /// `pe_freq_lo..=pe_freq_hi`.
    pub pe_freq_lo: i32,
    pub pe_freq_hi: i32,
    pub mass_injection: bool,
    pub seed: u64,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        Self {
            width: 192,
            depth: 4,
            heads: 4,
            head_dim: 48,
            latent_tokens: 64,
            output_fields: 192,
            pe_freq_lo: -2,
            pe_freq_hi: 6,
            mass_injection: true,
            seed: 0,
        }
    }
}

impl BackboneConfig {
    /// Small enough for the SPSA demo (about 3.7k parameters at 12 outputs).
    /// Outputs beyond `width + 1` are linearly dependent.
    pub fn tiny(output_fields: usize) -> Self {
        Self {
            width: 12,
            depth: 1,
            heads: 2,
            head_dim: 4,
            latent_tokens: 8,
            output_fields,
            pe_freq_lo: -2,
            pe_freq_hi: 2,
            mass_injection: true,
            seed: 0,
        }
    }

    /// NeRF-style encoding with ten octaves `2^0 π … 2^9 π`.
    pub fn with_nerf_encoding(mut self) -> Self {
        self.pe_freq_lo = 0;
        self.pe_freq_hi = 9;
        self
    }

    pub fn pe_dim(&self) -> usize {
        3 + 6 * (self.pe_freq_hi - self.pe_freq_lo + 1).max(0) as usize
    }

    pub fn inner_dim(&self) -> usize {
        self.heads * self.head_dim
    }

    pub fn ffn_dim(&self) -> usize {
        4 * self.width
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("width", self.width),
            ("depth", self.depth),
            ("heads", self.heads),
            ("head_dim", self.head_dim),
            ("latent_tokens", self.latent_tokens),
            ("output_fields", self.output_fields),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidInput(format!("{name} must be positive")));
        }
        if self.pe_freq_hi < self.pe_freq_lo {
            return Err(Error::InvalidInput(format!(
                "pe_freq_hi ({}) below pe_freq_lo ({})",
                self.pe_freq_hi, self.pe_freq_lo
            )));
        }
        if !(-30..=30).contains(&self.pe_freq_lo) || !(-30..=30).contains(&self.pe_freq_hi) {
            return Err(Error::InvalidInput("positional-encoding exponents outside [-30, 30]".into()));
        }
        Ok(())
    }

    /// `key=value` lines; `#` starts a comment. Unlisted keys keep defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: format!("expected key=value, found {line:?}"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |what: &str| Error::Parse {
                line: i + 1,
                message: format!("{key}: expected {what}, found {value:?}"),
            };
            let uint = || value.parse::<usize>().map_err(|_| bad("a non-negative integer"));
            let int = || value.parse::<i32>().map_err(|_| bad("an integer"));
            match key {
                "width" => c.width = uint()?,
                "depth" => c.depth = uint()?,
                "heads" => c.heads = uint()?,
                "head_dim" => c.head_dim = uint()?,
                "latent_tokens" => c.latent_tokens = uint()?,
                "output_fields" => c.output_fields = uint()?,
                "pe_freq_lo" => c.pe_freq_lo = int()?,
                "pe_freq_hi" => c.pe_freq_hi = int()?,
                "seed" => c.seed = value.parse().map_err(|_| bad("an integer"))?,
                "mass_injection" => {
                    c.mass_injection = match value {
                        "on" | "true" | "1" => true,
                        "off" | "false" | "0" => false,
                        _ => return Err(bad("on or off")),
                    }
                }
                _ => {
                    return Err(Error::Parse {
                        line: i + 1,
                        message: format!("unknown key {key:?}"),
                    })
                }
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in [
            ("width", self.width.to_string()),
            ("depth", self.depth.to_string()),
            ("heads", self.heads.to_string()),
            ("head_dim", self.head_dim.to_string()),
            ("latent_tokens", self.latent_tokens.to_string()),
            ("output_fields", self.output_fields.to_string()),
            ("pe_freq_lo", self.pe_freq_lo.to_string()),
            ("pe_freq_hi", self.pe_freq_hi.to_string()),
            ("mass_injection", if self.mass_injection { "on" } else { "off" }.to_string()),
            ("seed", self.seed.to_string()),
        ] {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encoding_dims() {
        assert_eq!(BackboneConfig::default().pe_dim(), 57);
        assert_eq!(BackboneConfig::default().with_nerf_encoding().pe_dim(), 63);
    }

    #[test]
    fn text_roundtrip() {
        let mut c = BackboneConfig::tiny(12);
        c.mass_injection = false;
        c.seed = 77;
        assert_eq!(BackboneConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn parse_errors() {
        assert!(BackboneConfig::parse("width=abc").is_err());
        assert!(BackboneConfig::parse("colour=red").is_err());
        assert!(BackboneConfig::parse("heads=0").is_err());
        assert!(BackboneConfig::parse("pe_freq_lo=3\npe_freq_hi=1").is_err());
        let c = BackboneConfig::parse("# comment\n\nheads = 8  # inline\n").unwrap();
        assert_eq!(c.heads, 8);
    }
}
