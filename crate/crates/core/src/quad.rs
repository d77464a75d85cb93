//! Adaptive panel quadrature for complex-valued integrands on the real line.
//!
//! Each panel is estimated with a low- and a high-order Gauss-Legendre rule;
//! the difference drives recursive bisection. Panels are accumulated
//! depth-first in a fixed order with compensated summation, so results are
//! reproducible bit-for-bit regardless of how sweeps are parallelized
//! around this module.

use crate::error::{Error, Result};
use crate::C64;
use once_cell::sync::Lazy;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Maximum bisection depth per panel.
    pub max_subdivisions: u32,
    /// Half-width of the guaranteed integration window, in units of the
    /// largest thermal/hybridization scale (window extension beyond it is
    /// adaptive).
    pub window_factor: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_subdivisions: 48,
            window_factor: 40.0,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) || !(self.abs_tol > 0.0) {
            return Err(Error::InvalidConfig(
                "quadrature tolerances must be positive".into(),
            ));
        }
        if self.window_factor <= 0.0 {
            return Err(Error::InvalidConfig(
                "window_factor must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1], generated by Newton
/// iteration on the Legendre recurrence.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

static RULE_LOW: Lazy<(Vec<f64>, Vec<f64>)> = Lazy::new(|| gauss_legendre(10));
static RULE_HIGH: Lazy<(Vec<f64>, Vec<f64>)> = Lazy::new(|| gauss_legendre(21));

fn panel<F>(f: &F, lo: f64, hi: f64, rule: &(Vec<f64>, Vec<f64>)) -> Result<C64>
where
    F: Fn(f64) -> Result<C64>,
{
    let c = 0.5 * (lo + hi);
    let h = 0.5 * (hi - lo);
    let mut acc = C64::new(0.0, 0.0);
    for (x, w) in rule.0.iter().zip(&rule.1) {
        acc += *w * f(c + h * x)?;
    }
    Ok(acc * h)
}

struct Kahan {
    sum: C64,
    carry: C64,
}

impl Kahan {
    fn new() -> Self {
        Kahan {
            sum: C64::new(0.0, 0.0),
            carry: C64::new(0.0, 0.0),
        }
    }
    fn add(&mut self, v: C64) {
        let y = v - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }
}

fn adapt<F>(
    f: &F,
    lo: f64,
    hi: f64,
    tol: f64,
    depth: u32,
    spec: &QuadratureSpec,
    out: &mut Kahan,
) -> Result<()>
where
    F: Fn(f64) -> Result<C64>,
{
    let coarse = panel(f, lo, hi, &RULE_LOW)?;
    let fine = panel(f, lo, hi, &RULE_HIGH)?;
    let err = (fine - coarse).norm();
    if err <= tol || (hi - lo) < 1e-14 * (lo.abs() + hi.abs()).max(1.0) {
        if err > tol {
            return Err(Error::QuadratureNonConvergence { lo, hi, err });
        }
        out.add(fine);
        return Ok(());
    }
    if depth >= spec.max_subdivisions {
        return Err(Error::QuadratureNonConvergence { lo, hi, err });
    }
    let mid = 0.5 * (lo + hi);
    adapt(f, lo, mid, 0.5 * tol, depth + 1, spec, out)?;
    adapt(f, mid, hi, 0.5 * tol, depth + 1, spec, out)
}

/// Integrate a complex-valued function over [lo, hi].
pub fn integrate_complex<F>(f: F, lo: f64, hi: f64, spec: &QuadratureSpec) -> Result<C64>
where
    F: Fn(f64) -> Result<C64>,
{
    integrate_complex_segmented(f, &[lo, hi], spec)
}

/// Integrate over consecutive segments given by sorted breakpoints; interior
/// breakpoints let the subdivision land on known kinks or steps.
pub fn integrate_complex_segmented<F>(f: F, breakpoints: &[f64], spec: &QuadratureSpec) -> Result<C64>
where
    F: Fn(f64) -> Result<C64>,
{
    spec.validate()?;
    if breakpoints.len() < 2 {
        return Err(Error::InvalidConfig(
            "need at least two breakpoints".into(),
        ));
    }
    let total: f64 = breakpoints
        .windows(2)
        .map(|w| (w[1] - w[0]).abs())
        .sum();
    let mut out = Kahan::new();
    // First pass estimate to scale the relative tolerance.
    let mut rough = Kahan::new();
    for w in breakpoints.windows(2) {
        rough.add(panel(&f, w[0], w[1], &RULE_HIGH)?);
    }
    let scale = rough.sum.norm().max(spec.abs_tol / spec.rel_tol);
    for w in breakpoints.windows(2) {
        if w[1] <= w[0] {
            continue;
        }
        let frac = (w[1] - w[0]) / total;
        let tol = (spec.abs_tol + spec.rel_tol * scale) * frac;
        adapt(&f, w[0], w[1], tol, 0, spec, &mut out)?;
    }
    Ok(out.sum)
}

/// Integrate a real-valued function over [lo, hi].
pub fn integrate_real<F>(f: F, lo: f64, hi: f64, spec: &QuadratureSpec) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    Ok(integrate_complex(|x| Ok(C64::new(f(x)?, 0.0)), lo, hi, spec)?.re)
}
