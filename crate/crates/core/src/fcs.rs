//! The large-time analytic route to the counting statistics.
//!
//! `large_deviation` integrates the logarithm of the 2x2 block determinant
//! `det(1 + sin(lambda/2) M(p) n(p))` over momenta;
//! `levitov_lesovik_closed` integrates the closed form written with the
//! transmission probability. Both are exposed, and their pointwise
//! equivalence (up to `lambda -> -lambda`) is the arbiter for the
//! transmission-exponent convention.
//!
//! Charge-direction convention: the determinant route counts the charge
//! gained by reservoir 1, the closed form counts transfer from lead 1 to
//! lead 2; `F_det(lambda) = F_closed(-lambda)`. [`Direction`] selects which
//! sign cumulant-type outputs use.

use crate::baths::BathConfig;
use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::quad::{self, QuadratureSpec};
use crate::scattering::{phase_shift, transmission_prob};
use crate::C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Counting parameter `lambda` (complex values are used by the fluctuation
/// relation and Cauchy differentiation) and measurement angle `mu`,
/// reduced modulo 2 pi.
#[derive(Debug, Clone, Copy)]
pub struct CountingFields {
    pub lambda: C64,
    pub mu: f64,
}

impl CountingFields {
    pub fn new(lambda: C64, mu: f64) -> Self {
        CountingFields {
            lambda,
            mu: mu.rem_euclid(2.0 * PI),
        }
    }

    pub fn real(lambda: f64) -> Self {
        Self::new(C64::new(lambda, 0.0), 0.0)
    }
}

/// Which transferred charge the sign conventions follow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Charge gained by reservoir 1 (the determinant route).
    GainLead1,
    /// Charge moved from lead 1 to lead 2 (the closed-form route).
    Transfer1To2,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::GainLead1 => -1.0,
            Direction::Transfer1To2 => 1.0,
        }
    }
}

/// 2x2 counting block
/// `M(p) = R_mu [ i sigma_y sin(phi) - 2 sin^2(phi/2) (1 sin(lambda/2) + i sigma_x cos(lambda/2)) ] R_mu^dag`
/// with `R_mu = exp(i mu sigma_x / 2)` and `phi` the scattering phase.
pub fn m_matrix(p: f64, fields: &CountingFields, params: &ModelParams) -> [[C64; 2]; 2] {
    let phi = phase_shift(p, params);
    let sin_phi = phi.sin();
    let t = transmission_prob(p, params); // sin^2(phi/2)
    let half = 0.5 * fields.lambda;
    let (sl, cl) = (half.sin(), half.cos());
    let i = C64::new(0.0, 1.0);

    // Core matrix before the mu rotation.
    let d = -2.0 * t * sl;
    let core = [
        [d, C64::new(sin_phi, 0.0) - 2.0 * i * t * cl],
        [C64::new(-sin_phi, 0.0) - 2.0 * i * t * cl, d],
    ];

    // R = exp(i mu sigma_x / 2) = cos(mu/2) 1 + i sin(mu/2) sigma_x.
    let (c, s) = ((0.5 * fields.mu).cos(), (0.5 * fields.mu).sin());
    let r = [[C64::new(c, 0.0), C64::new(0.0, s)], [C64::new(0.0, s), C64::new(c, 0.0)]];
    let rd = [[C64::new(c, 0.0), C64::new(0.0, -s)], [C64::new(0.0, -s), C64::new(c, 0.0)]];

    let mut tmp = [[C64::new(0.0, 0.0); 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            tmp[a][b] = r[a][0] * core[0][b] + r[a][1] * core[1][b];
        }
    }
    let mut out = [[C64::new(0.0, 0.0); 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            out[a][b] = tmp[a][0] * rd[0][b] + tmp[a][1] * rd[1][b];
        }
    }
    out
}

/// `det(1 + sin(lambda/2) M(p) n(p))` without the logarithm.
pub fn det_point(p: f64, fields: &CountingFields, cfg: &BathConfig, params: &ModelParams) -> C64 {
    let m = m_matrix(p, fields, params);
    let n = cfg.nhat_block(p).m;
    let s = (0.5 * fields.lambda).sin();
    let mut a = [[C64::new(0.0, 0.0); 2]; 2];
    for r in 0..2 {
        for c in 0..2 {
            a[r][c] = s * (m[r][0] * n[0][c] + m[r][1] * n[1][c]);
            if r == c {
                a[r][c] += 1.0;
            }
        }
    }
    a[0][0] * a[1][1] - a[0][1] * a[1][0]
}

/// Follow `log f(s lambda)` continuously for `s` in [0, 1], starting on the
/// principal branch at `f(0) = 1`. Refines the path until consecutive
/// samples rotate by less than pi/2; errors out if the value reaches zero.
fn tracked_log<F>(f: F, lambda: C64, p_report: f64) -> Result<C64>
where
    F: Fn(C64) -> C64,
{
    let mut steps = 8usize;
    loop {
        let mut arg = 0.0f64;
        let mut prev = C64::new(1.0, 0.0);
        let mut ok = true;
        let mut last = prev;
        for j in 1..=steps {
            let z = f(lambda * (j as f64 / steps as f64));
            if z.norm() < 1e-290 {
                return Err(Error::BranchPointCollision { p: p_report, lambda });
            }
            let dphi = (z / prev).arg();
            if dphi.abs() > 0.5 * PI {
                ok = false;
                break;
            }
            arg += dphi;
            prev = z;
            last = z;
        }
        if ok {
            return Ok(C64::new(last.norm().ln(), arg));
        }
        steps *= 2;
        if steps > 1 << 14 {
            return Err(Error::BranchAmbiguity(format!(
                "branch of log det unresolved at p={p_report}, lambda={lambda}"
            )));
        }
    }
}

/// Branch-tracked integrand `log det(1 + sin(lambda/2) M(p) n(p))` of the
/// determinant route.
pub fn integrand(p: f64, fields: &CountingFields, cfg: &BathConfig, params: &ModelParams) -> Result<C64> {
    tracked_log(
        |lam| det_point(p, &CountingFields { lambda: lam, mu: fields.mu }, cfg, params),
        fields.lambda,
        p,
    )
}

/// Branch-tracked closed-form integrand
/// `log(1 + T(w) [n1 (n2 - 1)(1 - e^{i lambda}) + n2 (n1 - 1)(1 - e^{-i lambda})])`.
pub fn ll_integrand(
    omega: f64,
    lambda: C64,
    cfg: &BathConfig,
    params: &ModelParams,
) -> Result<C64> {
    ll_integrand_with(omega, lambda, transmission_prob(omega, params), cfg)
}

fn ll_integrand_with(omega: f64, lambda: C64, t: f64, cfg: &BathConfig) -> Result<C64> {
    let n1 = cfg.occupation(omega, crate::baths::Lead::One);
    let n2 = cfg.occupation(omega, crate::baths::Lead::Two);
    tracked_log(
        |lam| {
            let i = C64::new(0.0, 1.0);
            let up = 1.0 - (i * lam).exp();
            let dn = 1.0 - (-i * lam).exp();
            1.0 + t * (n1 * (n2 - 1.0) * up + n2 * (n1 - 1.0) * dn)
        },
        lambda,
        omega,
    )
}

/// Integration window: guaranteed span around the lead potentials plus
/// adaptive extension until the integrand is negligible, with breakpoints
/// on the potentials (Fermi steps at T = 0) and the resonance.
fn window_breakpoints<F>(
    cfg: &BathConfig,
    params: &ModelParams,
    spec: &QuadratureSpec,
    f: &F,
) -> Result<Vec<f64>>
where
    F: Fn(f64) -> Result<C64>,
{
    let scale = cfg.max_temperature().max(params.gamma());
    let (mu_lo, mu_hi) = cfg.mu_range();
    let mut lo = mu_lo - spec.window_factor * scale;
    let mut hi = mu_hi + spec.window_factor * scale;
    for _ in 0..12 {
        if f(lo)?.norm() < spec.abs_tol {
            break;
        }
        lo -= spec.window_factor * scale;
    }
    for _ in 0..12 {
        if f(hi)?.norm() < spec.abs_tol {
            break;
        }
        hi += spec.window_factor * scale;
    }
    let mut pts = vec![lo, mu_lo, mu_hi, params.epsilon, hi];
    pts.retain(|&x| (lo..=hi).contains(&x));
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    Ok(pts)
}

/// Large-deviation function from the block-determinant route,
/// `F(lambda) = int dp/2pi log det(1 + sin(lambda/2) M(p) n(p))`.
///
/// Counts the charge gained by reservoir 1. Independent of `mu` pointwise.
pub fn large_deviation(
    fields: &CountingFields,
    cfg: &BathConfig,
    params: &ModelParams,
    spec: &QuadratureSpec,
) -> Result<C64> {
    cfg.validate()?;
    params.validate()?;
    let f = |p: f64| integrand(p, fields, cfg, params);
    let pts = window_breakpoints(cfg, params, spec, &f)?;
    Ok(quad::integrate_complex_segmented(f, &pts, spec)? / (2.0 * PI))
}

/// Large-deviation function from the closed form,
/// `F(lambda) = int dw/2pi log(1 + T(w)[n1(n2-1)(1-e^{i lambda}) + n2(n1-1)(1-e^{-i lambda})])`.
///
/// Counts transfer from lead 1 to lead 2; equals `large_deviation` at
/// `-lambda`.
pub fn levitov_lesovik_closed(
    lambda: C64,
    cfg: &BathConfig,
    params: &ModelParams,
    spec: &QuadratureSpec,
) -> Result<C64> {
    cfg.validate()?;
    params.validate()?;
    let f = |w: f64| ll_integrand(w, lambda, cfg, params);
    let pts = window_breakpoints(cfg, params, spec, &f)?;
    Ok(quad::integrate_complex_segmented(f, &pts, spec)? / (2.0 * PI))
}

/// Closed form with an externally supplied transmission function over an
/// explicit window; used by degenerate-case oracles and convention tests.
pub fn levitov_lesovik_with_transmission<T>(
    lambda: C64,
    transmission: T,
    cfg: &BathConfig,
    spec: &QuadratureSpec,
    lo: f64,
    hi: f64,
) -> Result<C64>
where
    T: Fn(f64) -> f64,
{
    let f = |w: f64| ll_integrand_with(w, lambda, transmission(w), cfg);
    Ok(quad::integrate_complex(f, lo, hi, spec)? / (2.0 * PI))
}

/// k-th charge cumulant per unit time, `d^k F / d(i lambda)^k` at
/// `lambda = 0`, with the sign fixed by `direction`.
///
/// Orders 1 and 2 use analytically differentiated integrands; higher orders
/// use Cauchy differentiation on a circle in the complex lambda plane,
/// shrinking the radius away from integrand singularities.
pub fn cumulant(
    k: u32,
    cfg: &BathConfig,
    params: &ModelParams,
    spec: &QuadratureSpec,
    direction: Direction,
) -> Result<f64> {
    if k == 0 || k > 6 {
        return Err(Error::InvalidConfig(format!(
            "cumulant order must be between 1 and 6, got {k}"
        )));
    }
    cfg.validate()?;
    params.validate()?;
    let sgn = direction.sign();
    match k {
        1 => {
            let f = |w: f64| {
                Ok(C64::new(
                    transmission_prob(w, params) * 2.0 * cfg.n_minus(w),
                    0.0,
                ))
            };
            let pts = window_breakpoints(cfg, params, spec, &f)?;
            let v = quad::integrate_complex_segmented(f, &pts, spec)? / (2.0 * PI);
            Ok(sgn * v.re)
        }
        2 => {
            // d^2/d(i lambda)^2 of the closed-form integrand at 0:
            // T (n1 + n2 - 2 n1 n2) - T^2 (n1 - n2)^2; even in the direction.
            let f = |w: f64| {
                let t = transmission_prob(w, params);
                let n1 = cfg.occupation(w, crate::baths::Lead::One);
                let n2 = cfg.occupation(w, crate::baths::Lead::Two);
                let v = t * (n1 + n2 - 2.0 * n1 * n2) - t * t * (n1 - n2) * (n1 - n2);
                Ok(C64::new(v, 0.0))
            };
            let pts = window_breakpoints(cfg, params, spec, &f)?;
            let v = quad::integrate_complex_segmented(f, &pts, spec)? / (2.0 * PI);
            Ok(v.re)
        }
        _ => {
            let mut radius = 1.0f64;
            'radius: for _ in 0..8 {
                let m = (8 * k + 16) as usize;
                let mut acc = C64::new(0.0, 0.0);
                for j in 0..m {
                    let theta = 2.0 * PI * j as f64 / m as f64;
                    let s = radius * C64::new(0.0, theta).exp();
                    // lambda = -i s so that s = i lambda.
                    let lambda = -C64::new(0.0, 1.0) * s;
                    let fval = match levitov_lesovik_closed(lambda, cfg, params, spec) {
                        Ok(v) => v,
                        Err(Error::BranchPointCollision { .. }) | Err(Error::BranchAmbiguity(_)) => {
                            radius *= 0.5;
                            continue 'radius;
                        }
                        Err(e) => return Err(e),
                    };
                    acc += fval * C64::new(0.0, -(k as f64) * theta).exp();
                }
                let fact: f64 = (1..=k).map(|i| i as f64).product();
                let c = acc * fact / (m as f64 * radius.powi(k as i32));
                return Ok(sgn.powi(k as i32) * c.re);
            }
            Err(Error::BranchAmbiguity(
                "Cauchy radius collapsed while avoiding integrand singularities".into(),
            ))
        }
    }
}

/// Fluctuation-relation defect `|F(lambda) - F(-lambda - i V/T)|` at equal
/// temperatures, with `V = mu1 - mu2` and `F` the determinant-route
/// large-deviation function.
pub fn fluctuation_gap(
    lambda: C64,
    cfg: &BathConfig,
    params: &ModelParams,
    spec: &QuadratureSpec,
) -> Result<f64> {
    if cfg.beta1 != cfg.beta2 || cfg.beta1.is_infinite() {
        return Err(Error::UnequalTemperatures {
            beta1: cfg.beta1,
            beta2: cfg.beta2,
        });
    }
    let beta_v = cfg.beta1 * (cfg.mu1 - cfg.mu2);
    let a = large_deviation(&CountingFields::new(lambda, 0.0), cfg, params, spec)?;
    let mirrored = -lambda - C64::new(0.0, beta_v);
    let b = large_deviation(&CountingFields::new(mirrored, 0.0), cfg, params, spec)?;
    Ok((a - b).norm())
}
