use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Training-time noise injected after every hidden nonlinearity.
///
/// Activations are multiplied by `N(1, sqrt(p_m / (1 - p_m)))` samples
/// (Gaussian dropout) and then offset by `N(0, p_a)` samples; both second
/// parameters are standard deviations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub p_m: f64,
    pub p_a: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig { p_m: 0.1, p_a: 0.01 }
    }
}

impl NoiseConfig {
    pub const DISABLED: NoiseConfig = NoiseConfig { p_m: 0.0, p_a: 0.0 };

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.p_m) {
            return Err(Error::config(format!("p_m = {} must lie in [0, 1)", self.p_m)));
        }
        if !(self.p_a >= 0.0 && self.p_a.is_finite()) {
            return Err(Error::config(format!("p_a = {} must be finite and >= 0", self.p_a)));
        }
        Ok(())
    }

    pub fn is_disabled(&self) -> bool {
        self.p_m == 0.0 && self.p_a == 0.0
    }

    pub fn multiplicative_std(&self) -> f64 {
        (self.p_m / (1.0 - self.p_m)).sqrt()
    }

    /// Samplers for the multiplicative and additive components.
    pub fn samplers(&self) -> Result<NoiseSampler> {
        self.validate()?;
        Ok(NoiseSampler {
            multiplicative: Normal::new(1.0, self.multiplicative_std())
                .map_err(|e| Error::config(e.to_string()))?,
            additive: Normal::new(0.0, self.p_a).map_err(|e| Error::config(e.to_string()))?,
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NoiseSampler {
    multiplicative: Normal<f64>,
    additive: Normal<f64>,
}

impl NoiseSampler {
    pub fn multiplicative<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.multiplicative.sample(rng)
    }

    pub fn additive<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.additive.sample(rng)
    }
}
