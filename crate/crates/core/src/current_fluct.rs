//! Cutoff-regularized stationary expectations and the three-peak structure
//! of the integrated-current characteristic function.
//!
//! The local current on the impurity is a highly fluctuating variable: its
//! characteristic function splits into a central peak plus two satellites
//! whose positions grow with the square root of the momentum cutoff, while
//! the mean stays cutoff-convergent.

use crate::baths::BathConfig;
use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::quad::{self, QuadratureSpec};
use crate::scattering::w_coeff;
use crate::C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Sharp momentum cutoff `|p| <= Lambda`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CutoffSpec {
    pub lambda: f64,
}

impl CutoffSpec {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "cutoff must be positive and finite, got {lambda}"
            )));
        }
        Ok(CutoffSpec { lambda })
    }
}

/// Stationary expectations under the sharp cutoff, from Wick contractions
/// of the mode expansions against the steady-state mode traces:
/// `<d^dag d>  = int dp/2pi |w_p|^2/tau^2 (n1+n2)/2`,
/// `<psi_o^dag d> = (i/tau) int dp/2pi w_p (n1-n2)/2`,
/// `<psi_o^dag psi_o> = int dp/2pi (n1+n2)/2`.
#[derive(Debug, Clone, Copy)]
pub struct StatExpectations {
    pub dd: f64,
    pub od: C64,
    pub oo: f64,
}

fn integration_points(cut: &CutoffSpec, cfg: &BathConfig, params: &ModelParams) -> Vec<f64> {
    let lam = cut.lambda;
    let mut pts = vec![-lam, cfg.mu1, cfg.mu2, params.epsilon, lam];
    pts.retain(|&x| (-lam..=lam).contains(&x));
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    pts
}

pub fn stat_expectations(
    cut: &CutoffSpec,
    cfg: &BathConfig,
    params: &ModelParams,
    spec: &QuadratureSpec,
) -> Result<StatExpectations> {
    cfg.validate()?;
    params.validate()?;
    let tau2 = params.tau * params.tau;
    let pts = integration_points(cut, cfg, params);

    let dd = quad::integrate_complex_segmented(
        |p| Ok(C64::new(w_coeff(p, params).norm_sqr() / tau2 * cfg.n_plus(p), 0.0)),
        &pts,
        spec,
    )?
    .re
        / (2.0 * PI);

    let od = quad::integrate_complex_segmented(
        |p| Ok(C64::new(0.0, 1.0) / params.tau * w_coeff(p, params) * cfg.n_minus(p)),
        &pts,
        spec,
    )? / (2.0 * PI);

    let oo = quad::integrate_complex_segmented(
        |p| Ok(C64::new(cfg.n_plus(p), 0.0)),
        &pts,
        spec,
    )?
    .re
        / (2.0 * PI);

    Ok(StatExpectations { dd, od, oo })
}

/// Cutoff extrapolation of `<d^dag d>`: the tail beyond Lambda falls off as
/// 1/Lambda, so a two-point Richardson step removes the leading term.
/// Returns (extrapolated value, tail estimate at the given cutoff).
pub fn dot_occupation_extrapolated(
    cut: &CutoffSpec,
    cfg: &BathConfig,
    params: &ModelParams,
    spec: &QuadratureSpec,
) -> Result<(f64, f64)> {
    let a = stat_expectations(cut, cfg, params, spec)?.dd;
    let doubled = CutoffSpec::new(2.0 * cut.lambda)?;
    let b = stat_expectations(&doubled, cfg, params, spec)?.dd;
    Ok((2.0 * b - a, (b - a).abs()))
}

/// Three-peak structure of the integrated-current characteristic function:
/// a central amplitude `A0` and satellites `A+-` at positions
/// `+- t sqrt(Lambda tau^2 / 4 pi)`.
#[derive(Debug, Clone, Copy)]
pub struct PeakStructure {
    pub a0: f64,
    pub a_plus: C64,
    pub a_minus: C64,
    /// Satellite position for the given time window.
    pub position: f64,
}

pub fn peak_structure(
    t: f64,
    cut: &CutoffSpec,
    cfg: &BathConfig,
    params: &ModelParams,
    spec: &QuadratureSpec,
) -> Result<PeakStructure> {
    let ex = stat_expectations(cut, cfg, params, spec)?;
    let lam = cut.lambda;
    let diff = 2.0 * (PI / lam).sqrt() * ex.od.im;
    let sum = PI / lam * (ex.oo - 2.0 * ex.oo * ex.dd + 2.0 * ex.od.norm_sqr()) + ex.dd;
    let a_plus = C64::new(0.5 * (sum + diff), 0.0);
    let a_minus = C64::new(0.5 * (sum - diff), 0.0);
    Ok(PeakStructure {
        a0: 1.0 - sum,
        a_plus,
        a_minus,
        position: t * (lam * params.tau * params.tau / (4.0 * PI)).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baths::Lead;
    use crate::scattering::{phase_factor, solve_quantization};
    use approx::assert_abs_diff_eq;

    fn setup() -> (ModelParams, BathConfig, QuadratureSpec) {
        (
            ModelParams::new(1.0, 0.3).unwrap(),
            BathConfig::new(2.5, 4.0, 0.5, -0.5, 0.0).unwrap(),
            QuadratureSpec::default(),
        )
    }

    #[test]
    fn equilibrium_cross_expectation_vanishes() {
        let params = ModelParams::new(1.0, 0.1).unwrap();
        let cfg = BathConfig::equilibrium(2.0, 0.3, 0.0).unwrap();
        let quad = QuadratureSpec::default();
        let ex = stat_expectations(&CutoffSpec::new(60.0).unwrap(), &cfg, &params, &quad).unwrap();
        assert!(ex.od.norm() < 1e-13);
    }

    #[test]
    fn finite_size_mode_sum_oracle() {
        // Direct mode sums at finite L against the cutoff integrals: each
        // expectation is a double sum over mode pairs collapsed by the
        // diagonal mode traces, sampled on the grid k pi / L. The
        // discretization error must also shrink when L grows.
        let (params, cfg, quad) = setup();
        let cut = CutoffSpec::new(12.0).unwrap();
        let ex = stat_expectations(&cut, &cfg, &params, &quad).unwrap();

        let sums = |length: f64| {
            let grid =
                crate::scattering::free_spectrum(length, cut.lambda, crate::scattering::Sector::Odd);
            let tau2 = params.tau * params.tau;
            let mut dd = 0.0;
            let mut od = C64::new(0.0, 0.0);
            let mut oo = 0.0;
            for &p in &grid.momenta {
                let w = w_coeff(p, &params);
                dd += w.norm_sqr() / tau2 * cfg.n_plus(p) / (2.0 * length);
                od += C64::new(0.0, 1.0) / params.tau * w * cfg.n_minus(p) / (2.0 * length);
                oo += cfg.n_plus(p) / (2.0 * length);
            }
            (dd, od, oo)
        };

        let (dd, od, oo) = sums(100.0);
        assert!((dd - ex.dd).abs() < 0.01 * ex.dd.abs(), "{dd} vs {}", ex.dd);
        assert!((od - ex.od).norm() < 0.01 * ex.od.norm(), "{od} vs {}", ex.od);
        assert!((oo - ex.oo).abs() < 0.01 * ex.oo.abs(), "{oo} vs {}", ex.oo);

        let (dd4, od4, oo4) = sums(400.0);
        assert!((dd4 - ex.dd).abs() < 0.0025 * ex.dd.abs());
        assert!((od4 - ex.od).norm() < 0.0025 * ex.od.norm());
        assert!((oo4 - ex.oo).abs() < 0.0025 * ex.oo.abs());

        // The quantized even spectrum gives the same sums within the
        // first-order finite-size shift of its roots.
        let even = solve_quantization(100.0, &params, cut.lambda).unwrap();
        let tau2 = params.tau * params.tau;
        let mut dd_even = 0.0;
        for &p in &even.momenta {
            let w = w_coeff(p, &params);
            dd_even += w.norm_sqr() / tau2 * cfg.n_plus(p) / (2.0 * length_of(&even));
        }
        assert!((dd_even - ex.dd).abs() < 0.03 * ex.dd.abs());
    }

    fn length_of(s: &crate::scattering::QuantizedSpectrum) -> f64 {
        s.length
    }

    #[test]
    fn dot_occupation_tail_and_extrapolation() {
        let (params, cfg, quad) = setup();
        let mut prev_tail = f64::INFINITY;
        let (base, _) = dot_occupation_extrapolated(
            &CutoffSpec::new(800.0).unwrap(),
            &cfg,
            &params,
            &quad,
        )
        .unwrap();
        for lam in [50.0, 100.0, 200.0] {
            let ex = stat_expectations(&CutoffSpec::new(lam).unwrap(), &cfg, &params, &quad).unwrap();
            let tail = (ex.dd - base).abs();
            assert!(tail < prev_tail);
            // Tail ~ tau^2 / (2 pi Lambda) within a factor of 2.
            let bound = params.tau * params.tau / (2.0 * PI * lam);
            assert!(tail < 2.0 * bound, "lam={lam}: tail {tail:e}, bound {bound:e}");
            prev_tail = tail;
        }
    }

    #[test]
    fn odd_density_grows_linearly() {
        let (params, cfg, quad) = setup();
        // Fitted slope of <psi_o^dag psi_o> vs Lambda equals 1/2pi within 1%.
        let lams = [50.0, 100.0, 200.0, 400.0];
        let vals: Vec<f64> = lams
            .iter()
            .map(|&l| {
                stat_expectations(&CutoffSpec::new(l).unwrap(), &cfg, &params, &quad)
                    .unwrap()
                    .oo
            })
            .collect();
        let n = lams.len() as f64;
        let sx: f64 = lams.iter().sum();
        let sy: f64 = vals.iter().sum();
        let sxx: f64 = lams.iter().map(|x| x * x).sum();
        let sxy: f64 = lams.iter().zip(&vals).map(|(x, y)| x * y).sum();
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        assert!(
            (slope - 1.0 / (2.0 * PI)).abs() < 0.01 / (2.0 * PI),
            "slope {slope}"
        );
    }

    #[test]
    fn peak_sum_rule_and_scaling() {
        let (params, cfg, quad) = setup();
        let cut = CutoffSpec::new(150.0).unwrap();
        let pk = peak_structure(3.0, &cut, &cfg, &params, &quad).unwrap();
        let total = pk.a0 + (pk.a_plus + pk.a_minus).re;
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-14);
        for a in [pk.a0, pk.a_plus.re, pk.a_minus.re] {
            assert!((-1e-12..=1.0).contains(&a), "amplitude {a}");
        }

        // Doubling the cutoff scales positions by sqrt(2).
        let pk2 = peak_structure(3.0, &CutoffSpec::new(300.0).unwrap(), &cfg, &params, &quad).unwrap();
        assert_abs_diff_eq!(pk2.position / pk.position, 2.0f64.sqrt(), epsilon = 1e-12);

        // Equilibrium: satellites balance.
        let eq = BathConfig::equilibrium(2.0, 0.0, 0.0).unwrap();
        let pk = peak_structure(1.0, &cut, &eq, &params, &quad).unwrap();
        assert!((pk.a_plus - pk.a_minus).norm() < 1e-13);
    }

    #[test]
    fn mean_current_is_cutoff_stable() {
        // (A+ - A-) * position = t tau Im<psi_o^dag d>, convergent in Lambda,
        // and equal to t times the Landauer current (gain of lead 1).
        let (params, cfg, quad) = setup();
        let t = 2.0;
        let mut means = Vec::new();
        for lam in [50.0, 100.0, 200.0, 500.0] {
            let pk = peak_structure(t, &CutoffSpec::new(lam).unwrap(), &cfg, &params, &quad).unwrap();
            means.push(((pk.a_plus - pk.a_minus) * pk.position).re);
        }
        let last = means[means.len() - 1];
        for &m in &means {
            assert!((m - last).abs() <= 0.02 * last.abs(), "{means:?}");
        }
        let c1 = crate::fcs::cumulant(1, &cfg, &params, &quad, crate::fcs::Direction::GainLead1).unwrap();
        assert!((last - t * c1).abs() < 0.01 * (t * c1).abs(), "{last} vs {}", t * c1);
        // Physical sanity: lead 1 at higher potential drains.
        assert!(last < 0.0);
        let _ = (cfg.occupation(0.0, Lead::One), phase_factor(0.0, &params));
    }
}
