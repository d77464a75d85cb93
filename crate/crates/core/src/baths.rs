//! Reservoir and initial-state description: Fermi occupations of the two
//! leads, derived non-equilibrium parameters (beta, V, W), the 2x2
//! occupation block in even/odd mode space, and the dense initial
//! correlation matrix of the decoupled system.

use crate::basis::{BasisKind, FiniteLBasis, SectorTag};
use crate::error::{Error, Result};
use crate::{C64, CMatrix};
use serde::{Deserialize, Deserializer, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lead {
    One,
    Two,
}

fn de_beta<'de, D>(d: D) -> std::result::Result<f64, D::Error>
where
    D: Deserializer<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum BetaRepr {
        Num(f64),
        Str(String),
    }
    match BetaRepr::deserialize(d)? {
        BetaRepr::Num(x) => Ok(x),
        BetaRepr::Str(s) => match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
            other => other.parse::<f64>().map_err(serde::de::Error::custom),
        },
    }
}

/// Two reservoir temperatures/potentials plus the initial dot occupation.
/// Inverse temperatures accept `inf` (T = 0, sharp Fermi steps).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BathConfig {
    #[serde(deserialize_with = "de_beta")]
    pub beta1: f64,
    #[serde(deserialize_with = "de_beta")]
    pub beta2: f64,
    pub mu1: f64,
    pub mu2: f64,
    /// One-particle content of the initial dot state, in [0, 1].
    pub n_d: f64,
}

impl BathConfig {
    pub fn new(beta1: f64, beta2: f64, mu1: f64, mu2: f64, n_d: f64) -> Result<Self> {
        let cfg = BathConfig {
            beta1,
            beta2,
            mu1,
            mu2,
            n_d,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Equal temperatures and potentials in both leads.
    pub fn equilibrium(beta: f64, mu: f64, n_d: f64) -> Result<Self> {
        Self::new(beta, beta, mu, mu, n_d)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be positive (or inf), got {b}"
                )));
            }
        }
        for (name, m) in [("mu1", self.mu1), ("mu2", self.mu2)] {
            if !m.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be finite, got {m}")));
            }
        }
        if !(0.0..=1.0).contains(&self.n_d) {
            return Err(Error::InvalidConfig(format!(
                "n_d must lie in [0, 1], got {}",
                self.n_d
            )));
        }
        Ok(())
    }

    pub fn temperature(&self, lead: Lead) -> f64 {
        let b = match lead {
            Lead::One => self.beta1,
            Lead::Two => self.beta2,
        };
        if b.is_infinite() {
            0.0
        } else {
            1.0 / b
        }
    }

    /// Mean inverse temperature `beta = (beta1 + beta2)/2`.
    pub fn beta(&self) -> f64 {
        0.5 * (self.beta1 + self.beta2)
    }

    /// Inverse-temperature difference `W = beta1 - beta2`.
    pub fn w_param(&self) -> f64 {
        self.beta1 - self.beta2
    }

    /// Internal energy shift `s` with `beta1 (mu1 - s) + beta2 (mu2 - s) = 0`;
    /// all spectral formulas written in terms of (beta, V, W) are evaluated
    /// at shifted energies, while occupations themselves are shift-free.
    pub fn shift(&self) -> f64 {
        match (self.beta1.is_infinite(), self.beta2.is_infinite()) {
            (true, true) => 0.5 * (self.mu1 + self.mu2),
            (true, false) => self.mu1,
            (false, true) => self.mu2,
            (false, false) => (self.beta1 * self.mu1 + self.beta2 * self.mu2) / (self.beta1 + self.beta2),
        }
    }

    /// Potential parameter `V = beta1 mu1' - beta2 mu2'` in shifted
    /// coordinates (where it equals `-2 beta1 mu1'` with opposite sign on
    /// the other lead... the shifted potentials balance by construction).
    pub fn v_param(&self) -> f64 {
        let s = self.shift();
        self.beta1 * (self.mu1 - s) - self.beta2 * (self.mu2 - s)
    }

    /// Fermi occupation of one lead at (real) energy `omega`; at zero
    /// temperature this is the sharp step with value 1/2 on the edge.
    pub fn occupation(&self, omega: f64, lead: Lead) -> f64 {
        let (beta, mu) = match lead {
            Lead::One => (self.beta1, self.mu1),
            Lead::Two => (self.beta2, self.mu2),
        };
        if beta.is_infinite() {
            return if omega < mu {
                1.0
            } else if omega > mu {
                0.0
            } else {
                0.5
            };
        }
        let x = beta * (omega - mu);
        if x >= 0.0 {
            let e = (-x).exp();
            e / (1.0 + e)
        } else {
            1.0 / (1.0 + x.exp())
        }
    }

    /// `(n1 + n2)/2` at energy `omega`.
    pub fn n_plus(&self, omega: f64) -> f64 {
        0.5 * (self.occupation(omega, Lead::One) + self.occupation(omega, Lead::Two))
    }

    /// `(n1 - n2)/2` at energy `omega`.
    pub fn n_minus(&self, omega: f64) -> f64 {
        0.5 * (self.occupation(omega, Lead::One) - self.occupation(omega, Lead::Two))
    }

    /// Occupation block in the (even, odd) mode basis:
    /// `n(p) = [(n1+n2) 1 + (n1-n2) sigma_x] / 2`.
    pub fn nhat_block(&self, p: f64) -> SpectralBlock2 {
        let np = self.n_plus(p);
        let nm = self.n_minus(p);
        SpectralBlock2 {
            p,
            m: [
                [C64::new(np, 0.0), C64::new(nm, 0.0)],
                [C64::new(nm, 0.0), C64::new(np, 0.0)],
            ],
        }
    }

    /// Largest thermal scale of the two leads.
    pub fn max_temperature(&self) -> f64 {
        self.temperature(Lead::One).max(self.temperature(Lead::Two))
    }

    /// Potential range covered by the leads.
    pub fn mu_range(&self) -> (f64, f64) {
        (self.mu1.min(self.mu2), self.mu1.max(self.mu2))
    }
}

/// A momentum-labelled 2x2 complex matrix in the (even, odd) mode block.
#[derive(Debug, Clone, Copy)]
pub struct SpectralBlock2 {
    pub p: f64,
    pub m: [[C64; 2]; 2],
}

impl SpectralBlock2 {
    pub fn determinant(&self) -> C64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        (self.m[0][0].im).abs() < tol
            && (self.m[1][1].im).abs() < tol
            && (self.m[0][1] - self.m[1][0].conj()).norm() < tol
    }

    /// Eigenvalues of a Hermitian 2x2 block.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let a = self.m[0][0].re;
        let d = self.m[1][1].re;
        let od = self.m[0][1].norm();
        let mean = 0.5 * (a + d);
        let disc = (0.25 * (a - d) * (a - d) + od * od).sqrt();
        (mean + disc, mean - disc)
    }
}

/// Dense correlation matrix of the decoupled initial state over the free
/// basis: blocks `nhat(p_k)` on every shared even/odd momentum, `n_d` on the
/// dot, zeros elsewhere. Entries follow the convention
/// `G[m][n] = <c_n^dag c_m>`.
pub fn free_correlation_matrix(basis: &FiniteLBasis, cfg: &BathConfig) -> Result<CMatrix> {
    if basis.kind != BasisKind::Free {
        return Err(Error::InvalidConfig(
            "free_correlation_matrix needs the tau = 0 basis".into(),
        ));
    }
    let dot = basis
        .states
        .iter()
        .position(|s| s.sector == SectorTag::Dot)
        .ok_or_else(|| Error::InvalidConfig("free basis lacks the dot state".into()))?;
    let evens: Vec<usize> = (0..basis.states.len())
        .filter(|&i| basis.states[i].sector == SectorTag::Even)
        .collect();
    let odds: Vec<usize> = (0..basis.states.len())
        .filter(|&i| basis.states[i].sector == SectorTag::Odd)
        .collect();
    if evens.len() != odds.len() {
        return Err(Error::InvalidConfig(format!(
            "free basis must pair even/odd momenta, got {} vs {}",
            evens.len(),
            odds.len()
        )));
    }
    for (&e, &o) in evens.iter().zip(&odds) {
        if (basis.states[e].momentum - basis.states[o].momentum).abs() > 1e-12 {
            return Err(Error::InvalidConfig(
                "free basis even/odd momenta mismatch".into(),
            ));
        }
    }
    let n = basis.states.len();
    let mut g = CMatrix::zeros((n, n));
    for (&e, &o) in evens.iter().zip(&odds) {
        let blk = cfg.nhat_block(basis.states[e].momentum);
        g[[e, e]] = blk.m[0][0];
        g[[e, o]] = blk.m[0][1];
        g[[o, e]] = blk.m[1][0];
        g[[o, o]] = blk.m[1][1];
    }
    g[[dot, dot]] = C64::new(cfg.n_d, 0.0);
    Ok(g)
}
