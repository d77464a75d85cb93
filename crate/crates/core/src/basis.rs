//! Finite-size one-particle eigenbases.
//!
//! The interacting basis consists of even-sector eigenvectors
//! `(e_p + i w_p/tau |dot>) / sqrt(2L + |w_p|^2/tau^2)` at quantized momenta
//! together with odd plane waves; the dot is hybridized into the even
//! states, so there is no separate dot state. The free (tau = 0) basis is
//! even/odd plane waves on the shared grid `k pi / L` plus the isolated dot
//! state at energy epsilon.

use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::scattering::{self, Sector};
use crate::C64;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BasisKind {
    Interacting,
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SectorTag {
    Even,
    Odd,
    Dot,
}

#[derive(Debug, Clone, Copy)]
pub struct BasisState {
    pub sector: SectorTag,
    /// Momentum of the state; doubles as its energy (the dot state carries
    /// energy epsilon).
    pub momentum: f64,
    /// Scattering factor v_p (1 for free/odd states).
    pub v: C64,
    /// w_p = v_p - 1 (0 for free/odd states).
    pub w: C64,
    /// Norm-square before normalization: 2L + |w|^2/tau^2 (even,
    /// interacting), 2L (plane waves), 1 (dot).
    pub norm2: f64,
    /// Dot amplitude of the normalized state.
    pub dot_amp: C64,
}

#[derive(Debug, Clone)]
pub struct FiniteLBasis {
    pub kind: BasisKind,
    pub length: f64,
    pub window: f64,
    pub params: ModelParams,
    pub states: Vec<BasisState>,
    pub n_even: usize,
    pub n_odd: usize,
}

/// Build the finite-size eigenbasis of the given kind on `|p| <= window`.
pub fn build_basis(
    kind: BasisKind,
    length: f64,
    window: f64,
    params: &ModelParams,
) -> Result<FiniteLBasis> {
    params.validate()?;
    if !(length > 0.0) || !(window > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "need L > 0 and window > 0, got L={length}, window={window}"
        )));
    }
    let mut states = Vec::new();
    let n_even;
    match kind {
        BasisKind::Interacting => {
            let spec = scattering::solve_quantization(length, params, window)?;
            n_even = spec.momenta.len();
            for (&p, &n2) in spec.momenta.iter().zip(&spec.norms2) {
                let w = scattering::w_coeff(p, params);
                states.push(BasisState {
                    sector: SectorTag::Even,
                    momentum: p,
                    v: scattering::phase_factor(p, params),
                    w,
                    norm2: n2,
                    dot_amp: C64::new(0.0, 1.0) * w / (params.tau * n2.sqrt()),
                });
            }
        }
        BasisKind::Free => {
            let grid = scattering::free_spectrum(length, window, Sector::Even);
            n_even = grid.momenta.len();
            for &p in &grid.momenta {
                states.push(BasisState {
                    sector: SectorTag::Even,
                    momentum: p,
                    v: C64::new(1.0, 0.0),
                    w: C64::new(0.0, 0.0),
                    norm2: 2.0 * length,
                    dot_amp: C64::new(0.0, 0.0),
                });
            }
        }
    }
    let odd = scattering::free_spectrum(length, window, Sector::Odd);
    let n_odd = odd.momenta.len();
    for &p in &odd.momenta {
        states.push(BasisState {
            sector: SectorTag::Odd,
            momentum: p,
            v: C64::new(1.0, 0.0),
            w: C64::new(0.0, 0.0),
            norm2: 2.0 * length,
            dot_amp: C64::new(0.0, 0.0),
        });
    }
    if kind == BasisKind::Free {
        states.push(BasisState {
            sector: SectorTag::Dot,
            momentum: params.epsilon,
            v: C64::new(1.0, 0.0),
            w: C64::new(0.0, 0.0),
            norm2: 1.0,
            dot_amp: C64::new(1.0, 0.0),
        });
    }
    Ok(FiniteLBasis {
        kind,
        length,
        window,
        params: *params,
        states,
        n_even,
        n_odd,
    })
}

impl FiniteLBasis {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn energies(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.momentum).collect()
    }

    /// Indices of the even-sector states.
    pub fn even_range(&self) -> std::ops::Range<usize> {
        0..self.n_even
    }

    /// Indices of the odd-sector states.
    pub fn odd_range(&self) -> std::ops::Range<usize> {
        self.n_even..self.n_even + self.n_odd
    }

    pub fn dot_index(&self) -> Option<usize> {
        (self.kind == BasisKind::Free).then_some(self.n_even + self.n_odd)
    }

    /// Normalized (even-flavor, odd-flavor) wavefunction components of
    /// state `i` at position `x`.
    pub fn wavefunction(&self, i: usize, x: f64) -> (C64, C64) {
        let s = &self.states[i];
        let zero = C64::new(0.0, 0.0);
        match s.sector {
            SectorTag::Even => {
                let val = match self.kind {
                    BasisKind::Interacting => scattering::basis_function(s.momentum, x, &self.params),
                    BasisKind::Free => C64::new(0.0, s.momentum * x).exp(),
                };
                (val / s.norm2.sqrt(), zero)
            }
            SectorTag::Odd => (zero, C64::new(0.0, s.momentum * x).exp() / s.norm2.sqrt()),
            SectorTag::Dot => (zero, zero),
        }
    }

    /// Flavor-1 wavefunction value at the impurity, `(psi_e(0) + psi_o(0)) /
    /// sqrt(2)` with the symmetric rule at x = 0.
    pub fn flavor1_at_origin(&self, i: usize) -> C64 {
        let (e, o) = self.wavefunction(i, 0.0);
        (e + o) / 2.0f64.sqrt()
    }

    /// Largest norm deviation from 1 over all states, measured with the
    /// closed-form overlaps (wavefunction part plus dot amplitude).
    pub fn max_norm_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for s in &self.states {
            let norm = match s.sector {
                SectorTag::Even => {
                    let wf = match self.kind {
                        BasisKind::Interacting => {
                            2.0 * self.length
                                + s.w.norm_sqr() / (self.params.tau * self.params.tau)
                        }
                        BasisKind::Free => 2.0 * self.length,
                    };
                    wf / s.norm2
                }
                SectorTag::Odd => 2.0 * self.length / s.norm2,
                SectorTag::Dot => s.dot_amp.norm_sqr(),
            };
            worst = worst.max((norm - 1.0).abs());
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interacting_basis_structure() {
        let params = ModelParams::new(1.0, 0.3).unwrap();
        let b = build_basis(BasisKind::Interacting, 30.0, 3.0, &params).unwrap();
        assert!(b.dot_index().is_none());
        assert!(b.n_even > 0 && b.n_odd > 0);
        assert_eq!(b.len(), b.n_even + b.n_odd);
        // Per-sector state count ~ 2 * floor(window L / pi) + O(1).
        let per_sector = 2 * ((3.0 * 30.0 / std::f64::consts::PI).floor() as i64);
        assert!((b.len() as i64 - 2 * per_sector).abs() <= 4, "{} vs {}", b.len(), 2 * per_sector);
        assert!(b.max_norm_defect() < 1e-10);
    }

    #[test]
    fn free_basis_structure() {
        let params = ModelParams::new(1.0, 0.3).unwrap();
        let b = build_basis(BasisKind::Free, 30.0, 3.0, &params).unwrap();
        let dot = b.dot_index().unwrap();
        assert_eq!(dot, b.len() - 1);
        assert_eq!(b.states[dot].momentum, 0.3);
        assert_eq!(b.n_even, b.n_odd);
        assert!(b.max_norm_defect() < 1e-12);
    }

    #[test]
    fn tau_to_zero_momenta_match_free() {
        // As tau -> 0 the interacting even sector holds the free grid plus
        // one extra root pinned at the resonance: the state that carries the
        // decoupling dot. Total dimensions of the two bases then agree.
        let params = ModelParams::new(1e-7, 0.0).unwrap();
        let int = build_basis(BasisKind::Interacting, 25.0, 2.0, &params).unwrap();
        let free = build_basis(BasisKind::Free, 25.0, 2.0, &params).unwrap();
        assert_eq!(int.n_even, free.n_even + 1);
        assert_eq!(int.len(), free.len());
        let mut residual: Vec<f64> = int.states[..int.n_even].iter().map(|s| s.momentum).collect();
        for b in &free.states[..free.n_even] {
            let (idx, _) = residual
                .iter()
                .enumerate()
                .min_by(|(_, x), (_, y)| {
                    (*x - b.momentum).abs().partial_cmp(&(*y - b.momentum).abs()).unwrap()
                })
                .unwrap();
            assert!((residual[idx] - b.momentum).abs() < 1e-6);
            residual.remove(idx);
        }
        assert_eq!(residual.len(), 1);
        assert!((residual[0] - params.epsilon).abs() < 1e-6);
    }
}
