//! Exact finite-size, finite-time counting statistics.
//!
//! The decoupled initial state is transported into the interacting
//! eigenbasis through closed-form overlaps, evolved over the preparation
//! window, and contracted against the counting exponential
//! `E = e^{-i(lambda/2+mu) q} e^{i lambda q(t)} e^{-i(lambda/2-mu) q}`
//! built from the one-particle charge projector `q` of reservoir 1. The
//! generating function is the dense determinant `det(1 + G0 (E - 1))`.
//!
//! `q` is compressed onto a momentum window, so its matrix is only
//! approximately idempotent; the counting exponential is therefore built
//! spectrally (matrix functions of the compressed `q`), which preserves the
//! normalization `P(lambda = 0) = 1` exactly at finite truncation, while
//! the projector-algebra three-factor and four-term forms are kept as
//! cross-checks agreeing to the measured idempotency defect.

use crate::basis::{build_basis, BasisKind, FiniteLBasis, SectorTag};
use crate::baths::{free_correlation_matrix, BathConfig};
use crate::error::{Error, Result};
use crate::fcs::CountingFields;
use crate::params::ModelParams;
use crate::scattering::{self, overlap_ee};
use crate::{C64, CMatrix, CVector};
use ndarray::Array1;
use ndarray_linalg::{Determinant, Eigh, UPLO};
use std::f64::consts::PI;

/// Dense one-particle operator together with the eigenenergies of the basis
/// it is expressed in.
#[derive(Debug, Clone)]
pub struct OnePartMatrix {
    pub m: CMatrix,
    pub energies: Vec<f64>,
}

impl OnePartMatrix {
    pub fn new(m: CMatrix, energies: Vec<f64>) -> Self {
        assert_eq!(m.nrows(), energies.len());
        assert_eq!(m.ncols(), energies.len());
        OnePartMatrix { m, energies }
    }

    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    /// Hermiticity defect, max over entries.
    pub fn hermiticity_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.dim() {
            for j in i..self.dim() {
                worst = worst.max((self.m[[i, j]] - self.m[[j, i]].conj()).norm());
            }
        }
        worst
    }

    /// Idempotency defect `max |(m^2 - m)_{ij}|`.
    pub fn projector_defect(&self) -> f64 {
        let sq = self.m.dot(&self.m);
        let mut worst: f64 = 0.0;
        for (idx, v) in sq.indexed_iter() {
            worst = worst.max((v - self.m[idx]).norm());
        }
        worst
    }
}

pub fn adjoint(m: &CMatrix) -> CMatrix {
    m.t().map(|z| z.conj())
}

/// Hermitian eigendecomposition `h = V diag(d) V^dag` with eigenvectors in
/// the columns of `V`. The backend diagonalizes the transpose on row-major
/// complex input, so its output must be conjugated to get eigenvector
/// columns; this wrapper owns that convention.
pub fn eigh_cols(h: &CMatrix) -> Result<(Array1<f64>, CMatrix)> {
    let (d, v) = h.eigh(UPLO::Lower)?;
    Ok((d, v.mapv(|z| z.conj())))
}

/// Heisenberg evolution of a one-particle operator: entry `(m, n)` picks up
/// `exp(i (p_m - p_n) t)`. States (correlation matrices) evolve with the
/// opposite sign, `evolve(g, -t)`.
pub fn evolve(op: &OnePartMatrix, t: f64) -> OnePartMatrix {
    let ph: Vec<C64> = op.energies.iter().map(|&p| C64::new(0.0, p * t).exp()).collect();
    let mut m = op.m.clone();
    for ((i, j), v) in m.indexed_iter_mut() {
        *v *= ph[i] * ph[j].conj();
    }
    OnePartMatrix {
        m,
        energies: op.energies.clone(),
    }
}

/// Overlap matrix `O[m][n] = <f_m, u_n>` between the free and interacting
/// bases at the same system size. All entries are closed forms: the
/// even-even block is `i w_p / ((p - k) sqrt(2L) N_p)`, the dot row is
/// `i w_p / (tau N_p)`, the odd block is the identity.
pub fn overlap_matrix(free: &FiniteLBasis, inter: &FiniteLBasis) -> Result<CMatrix> {
    check_pairing(free, inter)?;
    let (nf, ni) = (free.len(), inter.len());
    let mut o = CMatrix::zeros((nf, ni));
    let root2l = (2.0 * free.length).sqrt();
    for (n, un) in inter.states.iter().enumerate() {
        match un.sector {
            SectorTag::Even => {
                let p = un.momentum;
                let norm = un.norm2.sqrt();
                for (m, fm) in free.states.iter().enumerate() {
                    match fm.sector {
                        SectorTag::Even => {
                            o[[m, n]] = C64::new(0.0, 1.0) * un.w
                                / ((p - fm.momentum) * root2l * norm);
                        }
                        SectorTag::Dot => {
                            o[[m, n]] = un.dot_amp;
                        }
                        SectorTag::Odd => {}
                    }
                }
            }
            SectorTag::Odd => {
                // Shared grid: the odd block is diagonal.
                let m = free
                    .states
                    .iter()
                    .position(|fm| {
                        fm.sector == SectorTag::Odd && (fm.momentum - un.momentum).abs() < 1e-12
                    })
                    .ok_or_else(|| {
                        Error::InvalidConfig("odd grids of the two bases do not match".into())
                    })?;
                o[[m, n]] = C64::new(1.0, 0.0);
            }
            SectorTag::Dot => unreachable!("interacting basis has no dot state"),
        }
    }
    Ok(o)
}

fn check_pairing(free: &FiniteLBasis, inter: &FiniteLBasis) -> Result<()> {
    if free.kind != BasisKind::Free || inter.kind != BasisKind::Interacting {
        return Err(Error::InvalidConfig(
            "overlap_matrix takes (free, interacting) bases".into(),
        ));
    }
    if (free.length - inter.length).abs() > 1e-12 || (free.window - inter.window).abs() > 1e-12 {
        return Err(Error::InvalidConfig(
            "bases must share L and the momentum window".into(),
        ));
    }
    Ok(())
}

/// Apply the overlap matrix (or its adjoint) without materializing it.
pub fn overlap_apply(free: &FiniteLBasis, inter: &FiniteLBasis, x: &CVector, dagger: bool) -> CVector {
    let root2l = (2.0 * free.length).sqrt();
    let (rows, cols) = (free.len(), inter.len());
    let mut y = CVector::zeros(if dagger { cols } else { rows });
    let odd_free: Vec<usize> = (0..rows).filter(|&m| free.states[m].sector == SectorTag::Odd).collect();
    let odd_int: Vec<usize> = (0..cols).filter(|&n| inter.states[n].sector == SectorTag::Odd).collect();
    if dagger {
        for (n, un) in inter.states.iter().enumerate() {
            if un.sector != SectorTag::Even {
                continue;
            }
            let norm = un.norm2.sqrt();
            let mut acc = C64::new(0.0, 0.0);
            for (m, fm) in free.states.iter().enumerate() {
                match fm.sector {
                    SectorTag::Even => {
                        acc += (C64::new(0.0, 1.0) * un.w
                            / ((un.momentum - fm.momentum) * root2l * norm))
                            .conj()
                            * x[m];
                    }
                    SectorTag::Dot => acc += un.dot_amp.conj() * x[m],
                    SectorTag::Odd => {}
                }
            }
            y[n] = acc;
        }
        for (&m, &n) in odd_free.iter().zip(&odd_int) {
            y[n] = x[m];
        }
    } else {
        for (n, un) in inter.states.iter().enumerate() {
            if un.sector != SectorTag::Even {
                continue;
            }
            let norm = un.norm2.sqrt();
            let xv = x[n];
            for (m, fm) in free.states.iter().enumerate() {
                match fm.sector {
                    SectorTag::Even => {
                        y[m] += C64::new(0.0, 1.0) * un.w
                            / ((un.momentum - fm.momentum) * root2l * norm)
                            * xv;
                    }
                    SectorTag::Dot => y[m] += un.dot_amp * xv,
                    SectorTag::Odd => {}
                }
            }
        }
        for (&m, &n) in odd_free.iter().zip(&odd_int) {
            y[m] = x[n];
        }
    }
    y
}

/// One-particle matrix of the reservoir-1 charge projector,
/// `q = (P_wave + S_eo)/2` with `S_eo` the even/odd flavor swap. All
/// entries are closed-form overlaps; the dot row and column vanish.
pub fn charge_matrix(basis: &FiniteLBasis) -> OnePartMatrix {
    let n = basis.len();
    let mut q = CMatrix::zeros((n, n));
    let root2l = (2.0 * basis.length).sqrt();
    let tau2 = basis.params.tau * basis.params.tau;
    for i in 0..n {
        let si = &basis.states[i];
        for j in 0..n {
            let sj = &basis.states[j];
            let val = match (si.sector, sj.sector) {
                (SectorTag::Even, SectorTag::Even) => {
                    if basis.kind == BasisKind::Free {
                        if i == j {
                            C64::new(0.5, 0.0)
                        } else {
                            C64::new(0.0, 0.0)
                        }
                    } else {
                        // <u_i | P_wave | u_j> / 2 from the closed-form
                        // wavefunction overlap.
                        let ov = if i == j {
                            C64::new(2.0 * basis.length, 0.0)
                        } else {
                            overlap_ee(si.momentum, sj.momentum, basis.length, &basis.params)
                        };
                        0.5 * ov / (si.norm2.sqrt() * sj.norm2.sqrt())
                    }
                }
                (SectorTag::Odd, SectorTag::Odd) => {
                    if (si.momentum - sj.momentum).abs() < 1e-12 {
                        C64::new(0.5, 0.0)
                    } else {
                        C64::new(0.0, 0.0)
                    }
                }
                (SectorTag::Even, SectorTag::Odd) => {
                    // <u_i | S | o_j> / 2 = <e_i, plane_j> / (2 N_i sqrt(2L))
                    let half = match basis.kind {
                        BasisKind::Interacting => {
                            -C64::new(0.0, 1.0) * si.w.conj()
                                / (si.momentum - sj.momentum)
                        }
                        BasisKind::Free => {
                            if (si.momentum - sj.momentum).abs() < 1e-12 {
                                C64::new(2.0 * basis.length, 0.0)
                            } else {
                                C64::new(0.0, 0.0)
                            }
                        }
                    };
                    0.5 * half / (si.norm2.sqrt() * root2l)
                }
                (SectorTag::Odd, SectorTag::Even) => {
                    let half = match basis.kind {
                        BasisKind::Interacting => {
                            C64::new(0.0, 1.0) * sj.w / (sj.momentum - si.momentum)
                        }
                        BasisKind::Free => {
                            if (si.momentum - sj.momentum).abs() < 1e-12 {
                                C64::new(2.0 * basis.length, 0.0)
                            } else {
                                C64::new(0.0, 0.0)
                            }
                        }
                    };
                    0.5 * half / (sj.norm2.sqrt() * root2l)
                }
                (SectorTag::Dot, _) | (_, SectorTag::Dot) => C64::new(0.0, 0.0),
            };
            q[[i, j]] = val;
        }
    }
    let tau2 = tau2; // silence unused when all branches inline
    let _ = tau2;
    OnePartMatrix::new(q, basis.energies())
}

/// One-particle kernel of the reservoir-1 current
/// `J_1 = tau sqrt(2) Im[psi_1(0)^dag d]`: the rank-2 Hermitian matrix
/// `(tau sqrt(2)/2i) (|x=0,1><dot| - |dot><x=0,1|)` with the symmetric
/// wavefunction value at the impurity.
pub fn current_matrix(basis: &FiniteLBasis) -> OnePartMatrix {
    let n = basis.len();
    let tau = basis.params.tau;
    let phi1: Vec<C64> = (0..n).map(|i| basis.flavor1_at_origin(i)).collect();
    let damp: Vec<C64> = basis.states.iter().map(|s| s.dot_amp).collect();
    let pref = C64::new(0.0, -0.5) * tau * 2.0f64.sqrt(); // tau sqrt(2) / (2i)
    let mut j = CMatrix::zeros((n, n));
    for a in 0..n {
        for b in 0..n {
            j[[a, b]] = pref * (phi1[a].conj() * damp[b] - damp[a].conj() * phi1[b]);
        }
    }
    OnePartMatrix::new(j, basis.energies())
}

/// Counting exponential
/// `E = e^{-i(lambda/2+mu) q} e^{i lambda q_t} e^{-i(lambda/2-mu) q}`
/// built from the spectral decompositions of `q` and `q_t`.
pub fn theta_exponential(
    q: &OnePartMatrix,
    qt: &OnePartMatrix,
    fields: &CountingFields,
) -> Result<OnePartMatrix> {
    let (dq, vq) = eigh_cols(&q.m)?;
    let (dt, vt) = eigh_cols(&qt.m)?;
    let i = C64::new(0.0, 1.0);
    let lam = fields.lambda;
    let mu = C64::new(fields.mu, 0.0);
    let f1 = matrix_function(&vq, &dq, |d| (-i * (0.5 * lam + mu) * d).exp());
    let f2 = matrix_function(&vt, &dt, |d| (i * lam * d).exp());
    let f3 = matrix_function(&vq, &dq, |d| (-i * (0.5 * lam - mu) * d).exp());
    Ok(OnePartMatrix::new(
        f1.dot(&f2).dot(&f3),
        q.energies.clone(),
    ))
}

fn matrix_function<F>(v: &CMatrix, d: &Array1<f64>, f: F) -> CMatrix
where
    F: Fn(f64) -> C64,
{
    let mut scaled = v.clone();
    for (j, mut col) in scaled.columns_mut().into_iter().enumerate() {
        let fv = f(d[j]);
        col.mapv_inplace(|z| z * fv);
    }
    scaled.dot(&adjoint(v))
}

/// Four-term projector-algebra form of the counting exponential:
/// `E = 1 + c_d delta + c_d2 delta^2 + c_d' [q, delta] + c_d'' [q,[q,delta]]`
/// with `delta = q_t - q`; exact when `q` and `q_t` are idempotent.
pub fn theta_four_term(
    q: &OnePartMatrix,
    qt: &OnePartMatrix,
    fields: &CountingFields,
) -> OnePartMatrix {
    let lam = fields.lambda;
    let mu = fields.mu;
    let c_d = C64::new(0.0, 1.0) * lam.sin();
    let c_d2 = -2.0 * (0.5 * lam).sin() * (0.5 * lam).sin();
    let c_dp = 2.0 * mu.sin() * (0.5 * lam).sin();
    let c_dpp = C64::new(0.0, 4.0)
        * (0.25 * lam + C64::new(0.5 * mu, 0.0)).sin()
        * (0.25 * lam - C64::new(0.5 * mu, 0.0)).sin()
        * (0.5 * lam).sin();
    let delta = &qt.m - &q.m;
    let qd = q.m.dot(&delta);
    let dq = delta.dot(&q.m);
    let comm = &qd - &dq;
    let qc = q.m.dot(&comm);
    let cq = comm.dot(&q.m);
    let comm2 = &qc - &cq;
    let mut e = delta.mapv(|z| z * c_d) + delta.dot(&delta).mapv(|z| z * c_d2);
    e = e + comm.mapv(|z| z * c_dp) + comm2.mapv(|z| z * c_dpp);
    for k in 0..e.nrows() {
        e[[k, k]] += 1.0;
    }
    OnePartMatrix::new(e, q.energies.clone())
}

/// Three-factor projector-algebra form, `[1 + (e^{-i(lambda/2+mu)} - 1) q]
/// [1 + (e^{i lambda} - 1) q_t] [1 + (e^{-i(lambda/2-mu)} - 1) q]`; exact
/// when `q^2 = q`.
pub fn theta_three_factor(
    q: &OnePartMatrix,
    qt: &OnePartMatrix,
    fields: &CountingFields,
) -> OnePartMatrix {
    let i = C64::new(0.0, 1.0);
    let lam = fields.lambda;
    let mu = C64::new(fields.mu, 0.0);
    let lin = |m: &CMatrix, c: C64| {
        let mut out = m.mapv(|z| z * c);
        for k in 0..out.nrows() {
            out[[k, k]] += 1.0;
        }
        out
    };
    let f1 = lin(&q.m, (-i * (0.5 * lam + mu)).exp() - 1.0);
    let f2 = lin(&qt.m, (i * lam).exp() - 1.0);
    let f3 = lin(&q.m, (-i * (0.5 * lam - mu)).exp() - 1.0);
    OnePartMatrix::new(f1.dot(&f2).dot(&f3), q.energies.clone())
}

/// Which definition of the transferred-charge generating function to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectorScheme {
    /// Two charge measurements (von Neumann): uniform average over the
    /// measurement angle mu.
    TwoProjector,
    /// Spin-coupling definition: single evaluation at mu = 0.
    OneProjector,
}

/// Preparation and measurement envelope of an engine run.
#[derive(Debug, Clone, Copy)]
pub struct EngineRun {
    /// Preparation time (<= 0): the decoupled state is evolved by |t0|
    /// before counting starts.
    pub t0: f64,
    /// Order of the uniform mu average for the two-projector scheme.
    pub mu_points: usize,
}

impl EngineRun {
    pub fn validate(&self) -> Result<()> {
        if self.t0 > 0.0 || !self.t0.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "preparation time t0 must be <= 0, got {}",
                self.t0
            )));
        }
        if self.mu_points == 0 {
            return Err(Error::InvalidConfig("mu_points must be positive".into()));
        }
        Ok(())
    }
}

/// Diagnostics of the truncated representation, reported in run manifests.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct EngineDiagnostics {
    pub n_states_interacting: usize,
    pub n_states_free: usize,
    pub projector_defect: f64,
    pub overlap_defect: f64,
}

/// Finite-size counting-statistics engine: bases, transported initial
/// correlation matrix, charge projector spectral data.
pub struct Engine {
    pub params: ModelParams,
    pub cfg: BathConfig,
    pub run: EngineRun,
    pub free: FiniteLBasis,
    pub inter: FiniteLBasis,
    pub q: OnePartMatrix,
    energies: Vec<f64>,
    /// Interacting-basis correlation matrix at counting time 0.
    g0: CMatrix,
    /// Eigenvectors of q (columns) and its adjoint.
    v: CMatrix,
    vh: CMatrix,
    d: Array1<f64>,
    /// V^dag G0 V.
    h0: CMatrix,
    diagnostics: EngineDiagnostics,
}

impl Engine {
    pub fn new(
        params: &ModelParams,
        cfg: &BathConfig,
        length: f64,
        window: f64,
        run: EngineRun,
    ) -> Result<Self> {
        params.validate()?;
        cfg.validate()?;
        run.validate()?;
        if -run.t0 >= length {
            return Err(Error::WindowViolation(format!(
                "|t0| = {} must stay below L = {length}",
                -run.t0
            )));
        }
        check_window_consistency(cfg, window)?;

        let free = build_basis(BasisKind::Free, length, window, params)?;
        let inter = build_basis(BasisKind::Interacting, length, window, params)?;
        let energies = inter.energies();

        let o = overlap_matrix(&free, &inter)?;
        let gf = free_correlation_matrix(&free, cfg)?;
        let oh = adjoint(&o);
        let g_int = oh.dot(&gf.dot(&o));
        // State evolution over the preparation window |t0|.
        let g0 = {
            let op = OnePartMatrix::new(g_int, energies.clone());
            evolve(&op, run.t0).m
        };

        let q = charge_matrix(&inter);
        let projector_defect = q.projector_defect();
        let overlap_defect = overlap_unitarity_defect(&o, &inter);
        let (d, v) = eigh_cols(&q.m)?;
        let vh = adjoint(&v);
        let h0 = vh.dot(&g0.dot(&v));

        let diagnostics = EngineDiagnostics {
            n_states_interacting: inter.len(),
            n_states_free: free.len(),
            projector_defect,
            overlap_defect,
        };
        Ok(Engine {
            params: *params,
            cfg: *cfg,
            run,
            free,
            inter,
            q,
            energies,
            g0,
            v,
            vh,
            d,
            h0,
            diagnostics,
        })
    }

    pub fn diagnostics(&self) -> EngineDiagnostics {
        self.diagnostics
    }

    pub fn length(&self) -> f64 {
        self.inter.length
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if t < 0.0 {
            return Err(Error::WindowViolation(format!("t must be >= 0, got {t}")));
        }
        if t - self.run.t0 >= self.length() {
            return Err(Error::WindowViolation(format!(
                "t + |t0| = {} must stay below L = {} (ballistic fronts wrap around)",
                t - self.run.t0,
                self.length()
            )));
        }
        Ok(())
    }

    /// `U_t = V^dag Ph(t) V` with `Ph(t) = diag(e^{i p t})`.
    fn u_t(&self, t: f64) -> CMatrix {
        let mut pv = self.v.clone();
        for (i, mut row) in pv.rows_mut().into_iter().enumerate() {
            let ph = C64::new(0.0, self.energies[i] * t).exp();
            row.mapv_inplace(|z| z * ph);
        }
        self.vh.dot(&pv)
    }

    /// `K = e^{-i lambda D/2} U_t e^{i lambda D} U_t^dag e^{-i lambda D/2} - 1`
    /// in the projector eigenframe; the counting exponential is
    /// `E - 1 = e^{-i mu D} K e^{i mu D}`.
    fn k_matrix(&self, lambda: C64, t: f64) -> CMatrix {
        let ut = self.u_t(t);
        let i = C64::new(0.0, 1.0);
        let mut scaled = ut.clone();
        for (j, mut col) in scaled.columns_mut().into_iter().enumerate() {
            let f = (i * lambda * self.d[j]).exp();
            col.mapv_inplace(|z| z * f);
        }
        let mut k = scaled.dot(&adjoint(&ut));
        let half: Vec<C64> = self.d.iter().map(|&dj| (-i * 0.5 * lambda * dj).exp()).collect();
        for ((r, c), v) in k.indexed_iter_mut() {
            *v *= half[r] * half[c];
        }
        for r in 0..k.nrows() {
            k[[r, r]] -= 1.0;
        }
        k
    }

    fn log_det_from(&self, w: &CMatrix, lambda: C64, mu: f64, t: f64) -> Result<C64> {
        let mut a = w.clone();
        for r in 0..a.nrows() {
            a[[r, r]] += 1.0;
        }
        let (sign, ln) = a.sln_det()?;
        if !ln.is_finite() || sign.norm() < 0.5 {
            return Err(Error::SingularDeterminant { lambda, mu, t });
        }
        Ok(C64::new(ln, sign.arg()))
    }

    /// Counting determinant `P(lambda, mu, t) = det(1 + G0 (E - 1))`.
    pub fn generating_function(&self, fields: &CountingFields, t: f64) -> Result<C64> {
        let lp = self.log_generating(fields, t)?;
        Ok(lp.exp())
    }

    /// `log P(lambda, mu, t)` on the principal branch.
    pub fn log_generating(&self, fields: &CountingFields, t: f64) -> Result<C64> {
        self.check_time(t)?;
        let k = self.k_matrix(fields.lambda, t);
        self.log_generating_with_k(&k, fields.lambda, fields.mu, t)
    }

    fn log_generating_with_k(&self, k: &CMatrix, lambda: C64, mu: f64, t: f64) -> Result<C64> {
        let hmu = if mu == 0.0 {
            self.h0.clone()
        } else {
            let mut h = self.h0.clone();
            let ph: Vec<C64> = self.d.iter().map(|&dj| C64::new(0.0, mu * dj).exp()).collect();
            for ((r, c), v) in h.indexed_iter_mut() {
                *v *= ph[r] * ph[c].conj();
            }
            h
        };
        let w = hmu.dot(k);
        self.log_det_from(&w, lambda, mu, t)
    }

    /// Per-angle `log P(lambda, mu_j, t)` on the uniform grid
    /// `mu_j = 2 pi j / M`.
    pub fn mu_resolved_log(&self, lambda: C64, t: f64) -> Result<Vec<C64>> {
        self.check_time(t)?;
        let k = self.k_matrix(lambda, t);
        (0..self.run.mu_points)
            .map(|j| {
                let mu = 2.0 * PI * j as f64 / self.run.mu_points as f64;
                self.log_generating_with_k(&k, lambda, mu, t)
            })
            .collect()
    }

    /// `log P(lambda, t)` of the chosen transferred-charge definition. The
    /// two-projector variant averages `P` over the measurement angle
    /// (trapezoid on the periodic grid, exact for trigonometric polynomials
    /// up to degree M - 1); the one-projector variant evaluates at mu = 0.
    pub fn log_pdf(&self, lambda: C64, t: f64, scheme: ProjectorScheme) -> Result<C64> {
        match scheme {
            ProjectorScheme::OneProjector => {
                self.log_generating(&CountingFields { lambda, mu: 0.0 }, t)
            }
            ProjectorScheme::TwoProjector => {
                if self.run.mu_points < 8 {
                    return Err(Error::InvalidConfig(format!(
                        "two-projector average needs mu_points >= 8, got {}",
                        self.run.mu_points
                    )));
                }
                let logs = self.mu_resolved_log(lambda, t)?;
                Ok(mean_from_logs(&logs))
            }
        }
    }

    /// Mean reservoir-1 current `Re tr(G(t) j)` from the rank-2 structure
    /// of the current kernel.
    pub fn mean_current(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        let n = self.inter.len();
        let tau = self.params.tau;
        let mut dvec = CVector::zeros(n);
        let mut phivec = CVector::zeros(n);
        for i in 0..n {
            let ph = C64::new(0.0, self.energies[i] * t).exp();
            dvec[i] = ph * self.inter.states[i].dot_amp;
            phivec[i] = ph * self.inter.flavor1_at_origin(i);
        }
        let gphi = self.g0.dot(&phivec);
        let z: C64 = dvec
            .iter()
            .zip(gphi.iter())
            .map(|(a, b)| a.conj() * b)
            .sum();
        Ok(tau * 2.0f64.sqrt() * z.im)
    }
}

fn check_window_consistency(cfg: &BathConfig, window: f64) -> Result<()> {
    // Occupations must be settled (essentially 0 or 1) at the window edges;
    // otherwise transport features leak out of the truncated basis.
    const SETTLE: f64 = 1e-6;
    for lead in [crate::baths::Lead::One, crate::baths::Lead::Two] {
        for edge in [window, -window] {
            let n = cfg.occupation(edge, lead);
            if n > SETTLE && n < 1.0 - SETTLE {
                return Err(Error::WindowViolation(format!(
                    "occupation {n:.3e} at window edge {edge}: enlarge the momentum window"
                )));
            }
        }
    }
    Ok(())
}

/// Max deviation of `O^dag O` from the identity over bulk states (momenta
/// at least one hybridization width away from the window edges).
pub fn overlap_unitarity_defect(o: &CMatrix, inter: &FiniteLBasis) -> f64 {
    let prod = adjoint(o).dot(o);
    let margin = (0.2 * inter.window).max(2.0 * inter.params.gamma());
    let bulk: Vec<usize> = (0..inter.len())
        .filter(|&n| inter.states[n].momentum.abs() <= inter.window - margin)
        .collect();
    let mut worst: f64 = 0.0;
    for &a in &bulk {
        for &b in &bulk {
            let target = if a == b { 1.0 } else { 0.0 };
            worst = worst.max((prod[[a, b]] - target).norm());
        }
    }
    worst
}

/// Stable `log` of the arithmetic mean of `exp(log_j)`.
pub fn mean_from_logs(logs: &[C64]) -> C64 {
    let max_re = logs.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    let sum: C64 = logs.iter().map(|z| (z - max_re).exp()).sum();
    max_re + (sum / logs.len() as f64).ln()
}

/// Least-squares slope report of `log P` against `t`.
#[derive(Debug, Clone)]
pub struct SlopeReport {
    pub slope: C64,
    pub intercept: C64,
    /// Root-mean-square residual of the fit.
    pub residual: f64,
    /// Branch-unwrapped sample values.
    pub points: Vec<(f64, C64)>,
}

/// Fit `log P = slope t + intercept` after unwrapping the imaginary parts
/// along the grid (branch jumps beyond pi/2 per step are rejected as
/// ambiguous).
pub fn slope_from_logs(ts: &[f64], logs: &[C64]) -> Result<SlopeReport> {
    if ts.len() != logs.len() || ts.len() < 3 {
        return Err(Error::InvalidConfig(
            "slope extraction needs at least three samples".into(),
        ));
    }
    let mut unwrapped = Vec::with_capacity(logs.len());
    let mut offset = 0.0f64;
    for (i, z) in logs.iter().enumerate() {
        if i > 0 {
            let prev: C64 = unwrapped[i - 1];
            let mut im = z.im + offset;
            while im - prev.im > PI {
                im -= 2.0 * PI;
                offset -= 2.0 * PI;
            }
            while im - prev.im < -PI {
                im += 2.0 * PI;
                offset += 2.0 * PI;
            }
            // Per-step drift beyond pi/2 cannot be told apart from a
            // winding miscount on this grid.
            let dt = ts[i] - ts[i - 1];
            let expected = (im - prev.im).abs();
            if i > 1 {
                let prev_rate = (unwrapped[i - 1].im - unwrapped[i - 2].im) / (ts[i - 1] - ts[i - 2]);
                if (im - prev.im - prev_rate * dt).abs() > 0.5 * PI {
                    return Err(Error::BranchAmbiguity(format!(
                        "imaginary part of log P jumps by {expected:.3} between t = {} and {}",
                        ts[i - 1],
                        ts[i]
                    )));
                }
            }
            unwrapped.push(C64::new(z.re, im));
        } else {
            unwrapped.push(*z);
        }
    }
    let n = ts.len() as f64;
    let tbar: f64 = ts.iter().sum::<f64>() / n;
    let ybar: C64 = unwrapped.iter().sum::<C64>() / n;
    let mut num = C64::new(0.0, 0.0);
    let mut den = 0.0;
    for (t, y) in ts.iter().zip(&unwrapped) {
        num += (t - tbar) * (y - ybar);
        den += (t - tbar) * (t - tbar);
    }
    let slope = num / den;
    let intercept = ybar - slope * tbar;
    let mut ss = 0.0;
    for (t, y) in ts.iter().zip(&unwrapped) {
        ss += (y - (slope * *t + intercept)).norm_sqr();
    }
    Ok(SlopeReport {
        slope,
        intercept,
        residual: (ss / n).sqrt(),
        points: ts.iter().copied().zip(unwrapped).collect(),
    })
}

/// Matrix-free probe of the mean current for large momentum windows: the
/// correlation matrix is never materialized; each sample costs two
/// overlap applications.
pub struct CurrentProbe {
    pub free: FiniteLBasis,
    pub inter: FiniteLBasis,
    cfg: BathConfig,
    dvec: CVector,
    phivec: CVector,
}

impl CurrentProbe {
    pub fn new(params: &ModelParams, cfg: &BathConfig, length: f64, window: f64) -> Result<Self> {
        params.validate()?;
        cfg.validate()?;
        check_window_consistency(cfg, window)?;
        let free = build_basis(BasisKind::Free, length, window, params)?;
        let inter = build_basis(BasisKind::Interacting, length, window, params)?;
        let n = inter.len();
        let dvec = CVector::from_shape_fn(n, |i| inter.states[i].dot_amp);
        let phivec = CVector::from_shape_fn(n, |i| inter.flavor1_at_origin(i));
        Ok(CurrentProbe {
            free,
            inter,
            cfg: *cfg,
            dvec,
            phivec,
        })
    }

    fn gf_apply(&self, x: &CVector) -> CVector {
        let mut y = CVector::zeros(x.len());
        let n_even = self.free.n_even;
        for i in 0..n_even {
            let p = self.free.states[i].momentum;
            let np = self.cfg.n_plus(p);
            let nm = self.cfg.n_minus(p);
            let o = n_even + i; // paired odd state
            y[i] = np * x[i] + nm * x[o];
            y[o] = nm * x[i] + np * x[o];
        }
        if let Some(dot) = self.free.dot_index() {
            y[dot] = self.cfg.n_d * x[dot];
        }
        y
    }

    /// `Re tr(G(t) j) = tau sqrt(2) Im <d(t)| G_int |phi_1(t)>`, evaluated
    /// through the free-basis correlation blocks.
    pub fn mean_current(&self, t: f64) -> Result<f64> {
        if t < 0.0 || t >= self.inter.length {
            return Err(Error::WindowViolation(format!(
                "t = {t} outside [0, L)"
            )));
        }
        let n = self.inter.len();
        let mut dt = CVector::zeros(n);
        let mut pt = CVector::zeros(n);
        for i in 0..n {
            let ph = C64::new(0.0, self.inter.states[i].momentum * t).exp();
            dt[i] = ph * self.dvec[i];
            pt[i] = ph * self.phivec[i];
        }
        let od = overlap_apply(&self.free, &self.inter, &dt, false);
        let op = overlap_apply(&self.free, &self.inter, &pt, false);
        let gop = self.gf_apply(&op);
        let z: C64 = od.iter().zip(gop.iter()).map(|(a, b)| a.conj() * b).sum();
        Ok(self.inter.params.tau * 2.0f64.sqrt() * z.im)
    }
}

/// Deviation report of the evolved dot state against its closed-form
/// image: amplitude `-i tau e^{-b(t+x)}` on the segment (-t, 0), zero
/// elsewhere, dot component `e^{-b t}`.
#[derive(Debug, Clone)]
pub struct DotCheck {
    /// Max deviation on the support, sampled away from the edges.
    pub wavefunction_dev: f64,
    /// Max magnitude outside the support.
    pub outside_dev: f64,
    /// Deviation of the dot amplitude from `e^{-bt}`.
    pub dot_amp_dev: f64,
}

/// Compare the dot row of the evolution operator, expanded over the even
/// eigenmodes, with the closed-form image of the dot operator at time
/// `t`. Only even-sector sums enter, so very large momentum windows are
/// cheap.
pub fn dot_wavefunction_check(
    params: &ModelParams,
    length: f64,
    window: f64,
    t: f64,
    edge_margin: f64,
    n_points: usize,
) -> Result<DotCheck> {
    if !(t >= 0.0) || t >= length {
        return Err(Error::WindowViolation(format!("need 0 <= t < L, got t={t}")));
    }
    let spec = scattering::solve_quantization(length, params, window)?;
    let tau = params.tau;
    let b = params.b();
    // Heisenberg coefficients: R(x) = sum_n dotamp_n e^{-i p_n t} conj(u_n(x)).
    let terms: Vec<(f64, C64)> = spec
        .momenta
        .iter()
        .zip(&spec.norms2)
        .map(|(&p, &n2)| {
            let w = scattering::w_coeff(p, params);
            let damp = C64::new(0.0, 1.0) * w / (tau * n2.sqrt());
            (p, damp / n2.sqrt())
        })
        .collect();
    let r_at = |x: f64| -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for (&(p, coef), _) in terms.iter().zip(0..) {
            let u = scattering::basis_function(p, x, params);
            acc += coef * C64::new(0.0, -p * t).exp() * u.conj();
        }
        acc
    };

    let mut wavefunction_dev: f64 = 0.0;
    if t > 2.0 * edge_margin {
        for k in 0..n_points {
            let x = -t + edge_margin + (t - 2.0 * edge_margin) * k as f64 / (n_points - 1).max(1) as f64;
            let expect = -C64::new(0.0, 1.0) * tau * (-b * (t + x)).exp();
            wavefunction_dev = wavefunction_dev.max((r_at(x) - expect).norm());
        }
    }
    let mut outside_dev: f64 = 0.0;
    for k in 0..(n_points / 4).max(2) {
        let x = edge_margin + k as f64 * 0.5;
        if x < length - 1.0 {
            outside_dev = outside_dev.max(r_at(x).norm());
        }
        let x = -t - edge_margin - k as f64 * 0.5;
        if x > -(length - 1.0) {
            outside_dev = outside_dev.max(r_at(x).norm());
        }
    }
    let mut dot_amp = C64::new(0.0, 0.0);
    for (&p, &n2) in spec.momenta.iter().zip(&spec.norms2) {
        let w = scattering::w_coeff(p, params);
        let damp2 = w.norm_sqr() / (tau * tau * n2);
        dot_amp += damp2 * C64::new(0.0, -p * t).exp();
    }
    let dot_amp_dev = (dot_amp - (-b * t).exp()).norm();
    Ok(DotCheck {
        wavefunction_dev,
        outside_dev,
        dot_amp_dev,
    })
}

/// Cyclic delta-kernel trace on a uniform momentum grid:
/// `Tr[(A B(t))^k]` with unit internal matrices and
/// `delta_t(p) = (e^{ipt} - 1) / (2 pi i p)`; grows linearly with slope
/// `(grid measure) / 2 pi`.
#[derive(Debug, Clone)]
pub struct AppendixReport {
    pub ts: Vec<f64>,
    pub traces: Vec<f64>,
    pub predicted_slope: f64,
    pub fitted_slope: f64,
    pub max_remainder: f64,
}

fn delta_t(p: f64, t: f64) -> C64 {
    if p.abs() < 1e-14 {
        C64::new(t / (2.0 * PI), 0.0)
    } else {
        ((C64::new(0.0, p * t)).exp() - 1.0) / C64::new(0.0, 2.0 * PI * p)
    }
}

pub fn cyclic_trace_check(k: u32, ts: &[f64], spacing: f64, halfwidth: f64) -> Result<AppendixReport> {
    if !(1..=3).contains(&k) {
        return Err(Error::InvalidConfig(format!(
            "cyclic trace check supports k in 1..=3, got {k}"
        )));
    }
    if ts.len() < 2 {
        return Err(Error::InvalidConfig("need at least two times".into()));
    }
    let g = (2.0 * halfwidth / spacing).round() as i64;
    let g = g.max(2);
    let measure = g as f64 * spacing;
    let mut traces = Vec::with_capacity(ts.len());
    for &t in ts {
        let tr: C64 = match k {
            1 => C64::new(g as f64 * delta_t(0.0, t).re * spacing, 0.0),
            2 => {
                let mut acc = C64::new(0.0, 0.0);
                for m in -(g - 1)..g {
                    let count = (g - m.abs()) as f64;
                    let d = delta_t(m as f64 * spacing, t);
                    acc += count * d * d.conj();
                }
                acc * spacing * spacing
            }
            3 => {
                let deltas: Vec<C64> = (-(g - 1)..g).map(|m| delta_t(m as f64 * spacing, t)).collect();
                let idx = |m: i64| (m + g - 1) as usize;
                let mut acc = C64::new(0.0, 0.0);
                for m in -(g - 1)..g {
                    for n in -(g - 1)..g {
                        let s = m + n;
                        if s.abs() > g - 1 {
                            continue;
                        }
                        // Count of base points with all three indices in range.
                        let lo = 0.max(m).max(-n);
                        let hi = (g - 1).min(g - 1 + m).min(g - 1 - n);
                        if hi < lo {
                            continue;
                        }
                        let count = (hi - lo + 1) as f64;
                        acc += count * deltas[idx(m)] * deltas[idx(n)] * deltas[idx(-s)];
                    }
                }
                acc * spacing.powi(3)
            }
            _ => unreachable!(),
        };
        traces.push(tr.re);
    }
    let predicted_slope = measure / (2.0 * PI);
    // Least squares in t.
    let n = ts.len() as f64;
    let tbar: f64 = ts.iter().sum::<f64>() / n;
    let ybar: f64 = traces.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (t, y) in ts.iter().zip(&traces) {
        num += (t - tbar) * (y - ybar);
        den += (t - tbar) * (t - tbar);
    }
    let fitted_slope = num / den;
    let max_remainder = ts
        .iter()
        .zip(&traces)
        .map(|(t, y)| (y - predicted_slope * t).abs())
        .fold(0.0f64, f64::max);
    Ok(AppendixReport {
        ts: ts.to_vec(),
        traces,
        predicted_slope,
        fitted_slope,
        max_remainder,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn small_params() -> ModelParams {
        ModelParams::new(1.0, 0.3).unwrap()
    }

    fn small_cfg() -> BathConfig {
        BathConfig::new(2.5, 4.0, 0.5, -0.5, 0.5).unwrap()
    }

    fn small_engine() -> Engine {
        Engine::new(
            &small_params(),
            &small_cfg(),
            40.0,
            4.0,
            EngineRun {
                t0: -8.0,
                mu_points: 8,
            },
        )
        .unwrap()
    }

    #[test]
    fn evolve_group_law_and_trace() {
        let basis = build_basis(BasisKind::Interacting, 20.0, 3.0, &small_params()).unwrap();
        let q = charge_matrix(&basis);
        let e0 = evolve(&q, 0.0);
        let mut maxdev: f64 = 0.0;
        for (idx, v) in e0.m.indexed_iter() {
            maxdev = maxdev.max((v - q.m[idx]).norm());
        }
        assert!(maxdev < 1e-14);

        let a = evolve(&evolve(&q, 1.3), 2.1);
        let b = evolve(&q, 3.4);
        let mut maxdev: f64 = 0.0;
        for (idx, v) in a.m.indexed_iter() {
            maxdev = maxdev.max((v - b.m[idx]).norm());
        }
        assert!(maxdev < 1e-12);

        let tr0: C64 = q.m.diag().iter().sum();
        let tr1: C64 = evolve(&q, 5.0).m.diag().iter().sum();
        assert!((tr0 - tr1).norm() < 1e-12);
    }

    #[test]
    fn free_charge_matrix_is_projector() {
        let basis = build_basis(BasisKind::Free, 20.0, 3.0, &small_params()).unwrap();
        let q = charge_matrix(&basis);
        assert!(q.hermiticity_defect() < 1e-14);
        assert!(q.projector_defect() < 1e-14);
        let dot = basis.dot_index().unwrap();
        for i in 0..basis.len() {
            assert_eq!(q.m[[dot, i]], C64::new(0.0, 0.0));
            assert_eq!(q.m[[i, dot]], C64::new(0.0, 0.0));
        }
        let tr: f64 = q.m.diag().iter().map(|z| z.re).sum();
        assert_abs_diff_eq!(tr, (basis.len() - 1) as f64 / 2.0, epsilon = 1e-10);
    }

    #[test]
    fn interacting_charge_matrix_structure() {
        let basis = build_basis(BasisKind::Interacting, 40.0, 4.0, &small_params()).unwrap();
        let q = charge_matrix(&basis);
        assert!(q.hermiticity_defect() < 1e-13);
        // Odd-odd block is exactly identity/2.
        for i in basis.odd_range() {
            for j in basis.odd_range() {
                let expect = if i == j { 0.5 } else { 0.0 };
                assert!((q.m[[i, j]] - expect).norm() < 1e-14);
            }
        }
        // Flavor symmetry: trace = (dimension - 1)/2 up to truncation.
        let tr: f64 = q.m.diag().iter().map(|z| z.re).sum();
        assert!(
            (tr - (basis.len() as f64 - 1.0) / 2.0).abs() < 0.05,
            "trace {tr}, dim {}",
            basis.len()
        );
        // Compressed projector: small but nonzero defect.
        let defect = q.projector_defect();
        assert!(defect > 0.0 && defect < 5e-3, "defect {defect:e}");
    }

    #[test]
    fn overlap_near_identity_at_small_tau() {
        let params = ModelParams::new(1e-6, 0.0).unwrap();
        let free = build_basis(BasisKind::Free, 20.0, 2.0, &params).unwrap();
        let inter = build_basis(BasisKind::Interacting, 20.0, 2.0, &params).unwrap();
        let o = overlap_matrix(&free, &inter).unwrap();
        // Every interacting state matches one free state up to phase.
        for n in 0..inter.len() {
            let col = o.column(n);
            let mut mags: Vec<f64> = col.iter().map(|z| z.norm()).collect();
            mags.sort_by(|a, b| b.partial_cmp(a).unwrap());
            assert!(mags[0] > 1.0 - 1e-6, "state {n}: {mags:?}");
            assert!(mags[1] < 1e-3);
        }
    }

    #[test]
    fn overlap_apply_matches_matrix() {
        let params = small_params();
        let free = build_basis(BasisKind::Free, 24.0, 3.0, &params).unwrap();
        let inter = build_basis(BasisKind::Interacting, 24.0, 3.0, &params).unwrap();
        let o = overlap_matrix(&free, &inter).unwrap();
        let x = CVector::from_shape_fn(inter.len(), |i| C64::new((i % 5) as f64 - 2.0, (i % 3) as f64));
        let direct = o.dot(&x);
        let applied = overlap_apply(&free, &inter, &x, false);
        for (a, b) in direct.iter().zip(applied.iter()) {
            assert!((a - b).norm() < 1e-12);
        }
        let y = CVector::from_shape_fn(free.len(), |i| C64::new((i % 7) as f64, -((i % 2) as f64)));
        let direct = adjoint(&o).dot(&y);
        let applied = overlap_apply(&free, &inter, &y, true);
        for (a, b) in direct.iter().zip(applied.iter()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn theta_identities() {
        let basis = build_basis(BasisKind::Interacting, 30.0, 3.5, &small_params()).unwrap();
        let q = charge_matrix(&basis);
        let qt = evolve(&q, 2.0);
        // lambda = 0, mu = 0: identity to machine precision.
        let e = theta_exponential(&q, &qt, &CountingFields::new(C64::new(0.0, 0.0), 0.0)).unwrap();
        let mut dev: f64 = 0.0;
        for (idx, v) in e.m.indexed_iter() {
            let target = if idx.0 == idx.1 { 1.0 } else { 0.0 };
            dev = dev.max((v - target).norm());
        }
        assert!(dev < 1e-11, "identity deviation {dev:e}");

        // lambda = 0, mu != 0: still identity on the spectral form.
        let e = theta_exponential(&q, &qt, &CountingFields::new(C64::new(0.0, 0.0), 1.1)).unwrap();
        let mut dev: f64 = 0.0;
        for (idx, v) in e.m.indexed_iter() {
            let target = if idx.0 == idx.1 { 1.0 } else { 0.0 };
            dev = dev.max((v - target).norm());
        }
        assert!(dev < 1e-11);

        // Four-term and three-factor forms agree with the spectral one to
        // within a small multiple of the idempotency defect.
        let defect = q.projector_defect();
        let fields = CountingFields::new(C64::new(0.9, 0.0), 0.7);
        let spectral = theta_exponential(&q, &qt, &fields).unwrap();
        let four = theta_four_term(&q, &qt, &fields);
        let three = theta_three_factor(&q, &qt, &fields);
        let mut dev_four: f64 = 0.0;
        let mut dev_three: f64 = 0.0;
        for (idx, v) in spectral.m.indexed_iter() {
            dev_four = dev_four.max((four.m[idx] - v).norm());
            dev_three = dev_three.max((three.m[idx] - v).norm());
        }
        assert!(dev_four <= 10.0 * defect, "{dev_four:e} vs defect {defect:e}");
        assert!(dev_three <= 10.0 * defect, "{dev_three:e} vs defect {defect:e}");
    }

    #[test]
    fn theta_forms_exact_on_true_projectors() {
        // Build exact commensurate projectors from plane-wave structure:
        // q = diag(1,1,0,0), qt = u q u^dag for a unitary u mixing modes.
        let n = 6;
        let mut qm = CMatrix::zeros((n, n));
        for i in 0..3 {
            qm[[i, i]] = C64::new(1.0, 0.0);
        }
        // A deterministic unitary from the exponential of an antihermitian.
        let mut a = CMatrix::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                if i < j {
                    let v = C64::new(0.1 * (i as f64 - 0.3), 0.07 * (j as f64 + 0.4));
                    a[[i, j]] = v;
                    a[[j, i]] = -v.conj();
                }
            }
        }
        let (d, v) = eigh_cols(&a.map(|z| z * C64::new(0.0, 1.0))).unwrap();
        let u = matrix_function(&v, &d, |x| C64::new(0.0, -x).exp());
        let qtm = u.dot(&qm).dot(&adjoint(&u));
        let ens = vec![0.0; n];
        let q = OnePartMatrix::new(qm, ens.clone());
        let qt = OnePartMatrix::new(qtm, ens);
        assert!(q.projector_defect() < 1e-12);
        assert!(qt.projector_defect() < 1e-10);
        let fields = CountingFields::new(C64::new(1.3, 0.0), 2.1);
        let spectral = theta_exponential(&q, &qt, &fields).unwrap();
        let four = theta_four_term(&q, &qt, &fields);
        let three = theta_three_factor(&q, &qt, &fields);
        for (idx, v) in spectral.m.indexed_iter() {
            assert!((four.m[idx] - v).norm() < 1e-9);
            assert!((three.m[idx] - v).norm() < 1e-9);
        }
    }

    #[test]
    fn normalization_at_lambda_zero() {
        let engine = small_engine();
        for t in [0.0, 3.0, 11.0] {
            for mu in [0.0, 1.3, 4.4] {
                let p = engine
                    .generating_function(&CountingFields::new(C64::new(0.0, 0.0), mu), t)
                    .unwrap();
                assert!(
                    (p - 1.0).norm() < 1e-8,
                    "t={t}, mu={mu}: P = {p}"
                );
            }
        }
    }

    #[test]
    fn empty_baths_give_unit_generating_function() {
        let params = small_params();
        // Potentials far below the window at T = 0: no particles anywhere.
        let cfg = BathConfig::new(f64::INFINITY, f64::INFINITY, -50.0, -50.0, 0.0).unwrap();
        let engine = Engine::new(
            &params,
            &cfg,
            30.0,
            3.0,
            EngineRun {
                t0: -5.0,
                mu_points: 8,
            },
        )
        .unwrap();
        for lam in [0.5, 2.0] {
            let p = engine
                .generating_function(&CountingFields::real(lam), 6.0)
                .unwrap();
            assert!((p - 1.0).norm() < 1e-9, "lambda={lam}: {p}");
        }
    }

    #[test]
    fn window_and_time_validation() {
        let params = small_params();
        let cfg = small_cfg();
        // Window too small: occupations unsettled at the edge.
        let err = Engine::new(&params, &cfg, 30.0, 1.0, EngineRun { t0: -2.0, mu_points: 8 });
        assert!(matches!(err, Err(Error::WindowViolation(_))));
        let engine = small_engine();
        assert!(matches!(
            engine.log_generating(&CountingFields::real(0.5), 35.0),
            Err(Error::WindowViolation(_))
        ));
        // Two-projector average requires mu_points >= 8.
        let small_m = Engine::new(&params, &cfg, 30.0, 4.0, EngineRun { t0: -2.0, mu_points: 4 }).unwrap();
        assert!(small_m.log_pdf(C64::new(0.5, 0.0), 3.0, ProjectorScheme::TwoProjector).is_err());
        assert!(small_m.log_pdf(C64::new(0.5, 0.0), 3.0, ProjectorScheme::OneProjector).is_ok());
    }

    #[test]
    fn probability_conjugation_identity() {
        // conj(P(-lambda, mu, t)) = P(lambda, mu, t): probabilities are real.
        let engine = small_engine();
        let t = 9.0;
        for mu in [0.0, 2.2] {
            for lam in [0.6, 2.9] {
                let a = engine
                    .generating_function(&CountingFields::new(C64::new(lam, 0.0), mu), t)
                    .unwrap();
                let b = engine
                    .generating_function(&CountingFields::new(C64::new(-lam, 0.0), mu), t)
                    .unwrap();
                assert!((a - b.conj()).norm() < 1e-9 * a.norm().max(1e-3), "lam={lam}, mu={mu}");
            }
        }
    }

    #[test]
    fn current_matrix_shape() {
        let basis = build_basis(BasisKind::Interacting, 30.0, 3.0, &small_params()).unwrap();
        let j = current_matrix(&basis);
        assert!(j.hermiticity_defect() < 1e-14);
        // tau -> 0 kills the kernel.
        let tiny = ModelParams::new(1e-8, 0.3).unwrap();
        let basis = build_basis(BasisKind::Interacting, 30.0, 3.0, &tiny).unwrap();
        let j = current_matrix(&basis);
        let mx = j.m.iter().map(|z| z.norm()).fold(0.0f64, f64::max);
        assert!(mx < 1e-8);
    }

    #[test]
    fn mean_current_engine_vs_probe() {
        let params = small_params();
        let cfg = small_cfg();
        let engine = small_engine();
        let probe = CurrentProbe::new(&params, &cfg, 40.0, 4.0).unwrap();
        // The engine includes the preparation evolution; compare at matched
        // total times.
        let t_engine = 4.0;
        let t_total = t_engine - engine.run.t0;
        let a = engine.mean_current(t_engine).unwrap();
        let b = probe.mean_current(t_total).unwrap();
        assert!((a - b).abs() < 1e-10, "{a} vs {b}");
    }

    #[test]
    fn slope_extraction_unwraps_branches() {
        let ts: Vec<f64> = (0..8).map(|i| 10.0 + 2.0 * i as f64).collect();
        let slope = C64::new(-0.05, 0.9);
        let intercept = C64::new(0.3, -0.1);
        // Principal-branch logs of exp(slope t + intercept).
        let logs: Vec<C64> = ts
            .iter()
            .map(|&t| {
                let z = (slope * t + intercept).exp();
                C64::new(z.norm().ln(), z.arg())
            })
            .collect();
        let rep = slope_from_logs(&ts, &logs).unwrap();
        assert!((rep.slope - slope).norm() < 1e-10, "{:?}", rep.slope);
        assert!((rep.intercept - intercept).norm() < 1e-9);
        assert!(rep.residual < 1e-10);
    }

    #[test]
    fn dot_wavefunction_trivial_time() {
        let params = small_params();
        let chk = dot_wavefunction_check(&params, 60.0, 30.0, 0.0, 0.5, 16).unwrap();
        // At t = 0 the dot amplitude is the completeness sum of |dotamp|^2.
        assert!(chk.dot_amp_dev < 2e-2, "{:?}", chk);
        assert!(chk.wavefunction_dev == 0.0);
    }

    #[test]
    fn cyclic_trace_k1_exact_and_k2_linear() {
        let ts: Vec<f64> = (0..8).map(|i| 50.0 + 20.0 * i as f64).collect();
        let rep = cyclic_trace_check(1, &ts, 0.01, std::f64::consts::PI).unwrap();
        for (t, tr) in rep.ts.iter().zip(&rep.traces) {
            assert_abs_diff_eq!(*tr, rep.predicted_slope * t, epsilon = 1e-9);
        }
        let rep = cyclic_trace_check(2, &ts, 0.01, std::f64::consts::PI).unwrap();
        assert!(
            (rep.fitted_slope - rep.predicted_slope).abs() < 0.02 * rep.predicted_slope,
            "fitted {} vs predicted {}",
            rep.fitted_slope,
            rep.predicted_slope
        );
        assert!(rep.max_remainder < 0.05 * rep.traces[0].abs() + 1.0);
    }
}
