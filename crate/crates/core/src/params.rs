use crate::error::{Error, Result};
use crate::C64;
use serde::{Deserialize, Serialize};

/// Impurity parameters: hopping amplitude `tau` and dot level `epsilon`.
///
/// The Fermi velocity is set to 1 throughout, so momenta, energies and
/// inverse lengths share units. The hybridization width is
/// `Gamma = tau^2 / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub tau: f64,
    pub epsilon: f64,
}

impl ModelParams {
    pub fn new(tau: f64, epsilon: f64) -> Result<Self> {
        let p = ModelParams { tau, epsilon };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "tau must be a positive finite number, got {}",
                self.tau
            )));
        }
        if !self.epsilon.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "epsilon must be finite, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }

    /// Hybridization half-width `Gamma = tau^2 / 2`.
    pub fn gamma(&self) -> f64 {
        0.5 * self.tau * self.tau
    }

    /// Complex decay constant `b = tau^2/2 + i epsilon` of the dot amplitude.
    pub fn b(&self) -> C64 {
        C64::new(self.gamma(), self.epsilon)
    }
}
