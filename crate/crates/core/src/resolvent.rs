//! The resolvent (A_T − λ)^{−1} = Q_{λ,+} + G^D_λ + G^T_λ: frozen symbol
//! assembly, grid application by tangential FFT and exact exponential
//! integrals in x_n, sectoriality scans, decay-slope probes and the I_θ
//! probe.
//!
//! Spectral parameter: −λ = e^{iθ}μ², with ζ = μ in Agmon's trick.

use crate::degenerate::{frozen_s_phi1, gt_principal};
use crate::dirichlet::{dirichlet_correction, free_normal_kernel, FreeNormalKernel, SeparableNormalKernel};
use crate::error::{DbvpError, Result};
use crate::fd::FdOperator;
use crate::field::{weighted_norm, DiscreteField, NormalGrid, TangentialGrid};
use crate::operator::{BoundaryOperatorSpec, EllipticOperatorSpec};
use crate::roots::{ellipticity_margin, kappa_pair, kappa_symbol, validate_theta, KappaPair, RootSign, THETA_MAX};
use crate::symbol::{agmon_restrict, loglog_slope, SymbolLattice, SymbolPoint};
use faer::prelude::*;
use faer::Mat;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;
use std::sync::Arc;

const ZERO: C64 = C64::new(0.0, 0.0);

/// A point λ = −e^{iθ}μ² of the resolvent set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SpectralPoint {
    pub theta: f64,
    pub mu: f64,
    pub lambda: C64,
}

impl SpectralPoint {
    pub fn new(theta: f64, mu: f64) -> Result<Self> {
        validate_theta(theta)?;
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(DbvpError::Argument(format!("mu = {mu} must be finite and >= 0")));
        }
        Ok(SpectralPoint { theta, mu, lambda: -C64::from_polar(mu * mu, theta) })
    }

    /// (θ, μ) from λ (θ = arg(−λ) ∈ (−π, π]).
    pub fn from_lambda(lambda: C64) -> Result<Self> {
        let m = -lambda;
        let theta = if m.norm() == 0.0 { 0.0 } else { m.arg() };
        if theta.abs() > THETA_MAX {
            return Err(DbvpError::Argument(format!(
                "lambda = {lambda} lies within 0.01 rad of the positive real axis"
            )));
        }
        Ok(SpectralPoint { theta, mu: m.norm().sqrt(), lambda })
    }

    /// Frozen covariable ζ = μ.
    pub fn zeta(&self) -> f64 {
        self.mu
    }
}

/// The three frozen normal kernels at one (x′, ξ′, λ).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ResolventKernels {
    pub kappa: KappaPair,
    pub free: FreeNormalKernel,
    pub green_d: SeparableNormalKernel,
    pub green_t: SeparableNormalKernel,
}

fn kernels_from_pair(kp: KappaPair, bspec: &BoundaryOperatorSpec, x: &[f64]) -> Result<ResolventKernels> {
    kp.check_decay()?;
    let free = free_normal_kernel(&kp)?;
    let green_d = dirichlet_correction(&kp)?;
    let green_t = if bspec.is_dirichlet() {
        SeparableNormalKernel::zero(kp.kplus, kp.kminus)
    } else {
        gt_principal(&kp, frozen_s_phi1(&kp, bspec.phi0_at(x), bspec.phi1_at(x)))?
    };
    Ok(ResolventKernels { kappa: kp, free, green_d, green_t })
}

/// Frozen-coefficient kernels of Q_{λ,+}, G^D_λ and G^T_λ at (x′, ξ′) with
/// ζ = μ.
pub fn assemble_resolvent_symbol(
    spec: &EllipticOperatorSpec,
    bspec: &BoundaryOperatorSpec,
    sp: &SpectralPoint,
    x: &[f64],
    xi: &[f64],
) -> Result<ResolventKernels> {
    let kp = kappa_pair(spec, x, xi, sp.zeta(), sp.theta, false)?;
    kernels_from_pair(kp, bspec, x)
}

/// Same kernels through the symbol pipeline: κ±_θ as tangential symbols,
/// Agmon-restricted to ζ = μ, then evaluated at (x′, ξ′).
pub fn assemble_resolvent_symbol_agmon(
    spec: &EllipticOperatorSpec,
    bspec: &BoundaryOperatorSpec,
    sp: &SpectralPoint,
    x: &[f64],
    xi: &[f64],
) -> Result<ResolventKernels> {
    let kplus = agmon_restrict(&kappa_symbol(spec, sp.theta, RootSign::Plus, false)?, sp.mu);
    let kminus = agmon_restrict(&kappa_symbol(spec, sp.theta, RootSign::Minus, false)?, sp.mu);
    let pt = SymbolPoint::new(x.to_vec(), xi.to_vec(), 0.0);
    let mut xf = x.to_vec();
    xf.push(0.0);
    let d = spec.n - 1;
    let a_n = C64::new(spec.a_at(&xf)[d][d], 0.0);
    let mut kp = KappaPair::new(kplus.eval(&pt)?, kminus.eval(&pt)?, a_n);
    kp.theta = sp.theta;
    kernels_from_pair(kp, bspec, x)
}

/// How the engine treats the coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum EngineMode {
    /// Constant coefficients: per-frequency kernels are exact.
    Exact,
    /// Tangentially constant coefficients frozen at x_n = 0 (approximate).
    FrozenNormal,
    /// Tangentially varying coefficients: left quantization with kernels
    /// frozen at every (x′_j, 0) (approximate).
    FrozenTangential,
}

/// Anything that applies (A − λ)^{−1} to a field on a fixed grid.
pub trait ResolventOperator: Sync {
    fn tgrid(&self) -> TangentialGrid;
    fn ngrid(&self) -> &NormalGrid;
    /// (A − λ)^{−1}f for tangential-major values on the grid.
    fn resolve(&self, lambda: C64, f: &[C64]) -> Result<Vec<C64>>;
    /// True when results carry a frozen-coefficient approximation.
    fn approximate(&self) -> bool {
        false
    }
    /// Weighted discrete L² norm on the grid.
    fn norm2(&self, v: &[C64]) -> f64 {
        weighted_norm(v, &self.ngrid().weights(), self.tgrid().spacing(), 2.0)
    }
}

impl ResolventOperator for FdOperator {
    fn tgrid(&self) -> TangentialGrid {
        self.tgrid
    }
    fn ngrid(&self) -> &NormalGrid {
        &self.ngrid
    }
    fn resolve(&self, lambda: C64, f: &[C64]) -> Result<Vec<C64>> {
        let field = DiscreteField::from_values(self.tgrid, self.ngrid.clone(), f.to_vec())?;
        Ok(crate::fd::solve_resolvent(self, lambda, &field)?.values)
    }
}

/// Grid resolvent built from the frozen kernels.
pub struct ResolventEngine {
    pub spec: EllipticOperatorSpec,
    pub bspec: BoundaryOperatorSpec,
    pub tgrid: TangentialGrid,
    pub ngrid: NormalGrid,
    pub mode: EngineMode,
    freqs: Vec<f64>,
    phi0: Vec<f64>,
    phi1: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for ResolventEngine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ResolventEngine")
            .field("mode", &self.mode)
            .field("tgrid", &self.tgrid)
            .field("normal_points", &self.ngrid.len())
            .finish()
    }
}

/// E1(z) = (1 − e^{−z})/z and E2(z) = (1 − e^{−z} − ze^{−z})/z².
fn e12(z: C64) -> (C64, C64, C64) {
    let ez = (-z).exp();
    if z.norm() < 0.5 {
        let mut e1 = ZERO;
        let mut e2 = ZERO;
        let mut term = C64::new(1.0, 0.0); // (−z)^k/k!
        for k in 0..24 {
            e1 += term / (k as f64 + 1.0);
            e2 += term / (k as f64 + 2.0);
            term *= -z / (k as f64 + 1.0);
        }
        (ez, e1, e2)
    } else {
        let e1 = (C64::new(1.0, 0.0) - ez) / z;
        let e2 = (C64::new(1.0, 0.0) - ez - z * ez) / (z * z);
        (ez, e1, e2)
    }
}

/// I⁺_i = ∫_0^{y_i} e^{−κ(y_i − y)}f dy and I⁻_i = ∫_{y_i}^{L} e^{−κ(y − y_i)}f dy
/// for the piecewise-linear interpolant of f.
fn forward_integrals(nodes: &[f64], f: &[C64], k: C64) -> Vec<C64> {
    let m = nodes.len();
    let mut out = vec![ZERO; m];
    for i in 1..m {
        let d = nodes[i] - nodes[i - 1];
        let (ez, e1, e2) = e12(k * d);
        out[i] = ez * out[i - 1] + (f[i] * (e1 - e2) + f[i - 1] * e2) * d;
    }
    out
}

fn backward_integrals(nodes: &[f64], f: &[C64], k: C64) -> Vec<C64> {
    let m = nodes.len();
    let mut out = vec![ZERO; m];
    for i in (0..m - 1).rev() {
        let d = nodes[i + 1] - nodes[i];
        let (ez, e1, e2) = e12(k * d);
        out[i] = ez * out[i + 1] + (f[i] * (e1 - e2) + f[i + 1] * e2) * d;
    }
    out
}

/// (Q + G^D)f on the nodes and t = γ₁(Q + G^D)f for one frequency.
fn dirichlet_solve(nodes: &[f64], f: &[C64], k: &ResolventKernels) -> (Vec<C64>, C64) {
    let ip = forward_integrals(nodes, f, k.kappa.kplus);
    let im = backward_integrals(nodes, f, k.kappa.kminus);
    let nrm = k.free.normalizer;
    let j0 = im[0];
    let v = nodes
        .iter()
        .enumerate()
        .map(|(i, &y)| nrm * (ip[i] + im[i]) + k.green_d.amplitude * (-k.kappa.kplus * y).exp() * j0)
        .collect();
    (v, -j0 / k.kappa.a_n)
}

impl ResolventEngine {
    pub fn new(
        spec: &EllipticOperatorSpec,
        bspec: &BoundaryOperatorSpec,
        tgrid: TangentialGrid,
        ngrid: NormalGrid,
    ) -> Result<Self> {
        if spec.n != 2 {
            return Err(DbvpError::Unsupported(format!(
                "grid resolvent supports n = 2 only (operator has n = {})",
                spec.n
            )));
        }
        let mode = if spec.is_constant() {
            EngineMode::Exact
        } else if spec.is_tangentially_constant() {
            EngineMode::FrozenNormal
        } else {
            EngineMode::FrozenTangential
        };
        let xs = tgrid.nodes();
        let phi0: Vec<f64> = xs.iter().map(|&x| bspec.phi0_at(&[x])).collect();
        let phi1: Vec<f64> = xs.iter().map(|&x| bspec.phi1_at(&[x])).collect();
        for (j, (&a, &b)) in phi0.iter().zip(&phi1).enumerate() {
            if !(a >= 0.0 && b >= 0.0 && a + b >= bspec.floor) {
                return Err(DbvpError::Precondition(format!(
                    "boundary coefficients at x'={}: phi0={a}, phi1={b} violate phi >= 0, phi0+phi1 >= {}",
                    xs[j], bspec.floor
                )));
            }
        }
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(tgrid.points);
        let ifft = planner.plan_fft_inverse(tgrid.points);
        Ok(ResolventEngine {
            spec: spec.clone(),
            bspec: bspec.clone(),
            tgrid,
            freqs: tgrid.frequencies(),
            ngrid,
            mode,
            phi0,
            phi1,
            fft,
            ifft,
        })
    }

    fn fft_rows(&self, values: &[C64], inverse: bool) -> Vec<C64> {
        // Transform along the tangential index for every normal level.
        let (mt, mn) = (self.tgrid.points, self.ngrid.len());
        let mut out = vec![ZERO; mt * mn];
        let mut buf = vec![ZERO; mt];
        for i in 0..mn {
            for j in 0..mt {
                buf[j] = values[j * mn + i];
            }
            if inverse {
                self.ifft.process(&mut buf);
                for v in buf.iter_mut() {
                    *v /= mt as f64;
                }
            } else {
                self.fft.process(&mut buf);
            }
            for j in 0..mt {
                out[j * mn + i] = buf[j];
            }
        }
        out
    }

    fn fft_vec(&self, v: &[C64], inverse: bool) -> Vec<C64> {
        let mut buf = v.to_vec();
        if inverse {
            self.ifft.process(&mut buf);
            let m = buf.len() as f64;
            for x in buf.iter_mut() {
                *x /= m;
            }
        } else {
            self.fft.process(&mut buf);
        }
        buf
    }

    fn kernels(&self, sp: &SpectralPoint, x: f64, k: usize) -> Result<ResolventKernels> {
        assemble_resolvent_symbol(&self.spec, &self.bspec, sp, &[x], &[self.freqs[k]]).map_err(|e| {
            DbvpError::Precondition(format!("assembly failed at frequency xi'={} (x'={x}): {e}", self.freqs[k]))
        })
    }

    /// (A_T − λ)^{−1}f at the spectral point `sp`.
    pub fn apply(&self, sp: &SpectralPoint, f: &[C64]) -> Result<Vec<C64>> {
        let (mt, mn) = (self.tgrid.points, self.ngrid.len());
        if f.len() != mt * mn {
            return Err(DbvpError::Argument(format!("field has {} values, grid needs {}", f.len(), mt * mn)));
        }
        let fhat = self.fft_rows(f, false);
        match self.mode {
            EngineMode::Exact | EngineMode::FrozenNormal => self.apply_diagonal(sp, &fhat),
            EngineMode::FrozenTangential => self.apply_left_quantized(sp, &fhat),
        }
    }

    fn apply_diagonal(&self, sp: &SpectralPoint, fhat: &[C64]) -> Result<Vec<C64>> {
        let (mt, mn) = (self.tgrid.points, self.ngrid.len());
        let nodes = &self.ngrid.nodes;
        let per: Vec<Result<(Vec<C64>, C64, ResolventKernels)>> = (0..mt)
            .into_par_iter()
            .map(|k| {
                let ker = self.kernels(sp, 0.0, k)?;
                let (v, t) = dirichlet_solve(nodes, &fhat[k * mn..(k + 1) * mn], &ker);
                Ok((v, t, ker))
            })
            .collect();
        let mut per_ok = Vec::with_capacity(mt);
        for p in per {
            per_ok.push(p?);
        }
        let mut uhat = vec![ZERO; mt * mn];
        for (k, (v, _, _)) in per_ok.iter().enumerate() {
            uhat[k * mn..(k + 1) * mn].copy_from_slice(v);
        }
        if !self.bspec.is_dirichlet() {
            // Boundary amplitudes ĝ_k of the K^D correction.
            let ghat: Vec<C64> = if self.bspec.is_constant() {
                let (p0, p1) = (self.phi0[0], self.phi1[0]);
                per_ok.iter().map(|(_, t, ker)| -(t * p1) / (ker.kappa.kplus * p1 + p0)).collect()
            } else {
                self.boundary_solve(&per_ok)?
            };
            for (k, (_, _, ker)) in per_ok.iter().enumerate() {
                let g = ghat[k];
                for (i, &y) in nodes.iter().enumerate() {
                    uhat[k * mn + i] += g * (-ker.kappa.kplus * y).exp();
                }
            }
        }
        Ok(self.fft_rows(&uhat, true))
    }

    /// Solve (φ₀ + φ₁Π)g = −φ₁t on the torus, Π = op(κ⁺) (dense LU).
    fn boundary_solve(&self, per: &[(Vec<C64>, C64, ResolventKernels)]) -> Result<Vec<C64>> {
        let mt = self.tgrid.points;
        let t_hat: Vec<C64> = per.iter().map(|p| p.1).collect();
        let kap: Vec<C64> = per.iter().map(|p| p.2.kappa.kplus).collect();
        let t_phys = self.fft_vec(&t_hat, true);
        let c = self.fft_vec(&kap, true);
        let m = Mat::<C64>::from_fn(mt, mt, |j, l| {
            let circ = c[(j + mt - l) % mt] * self.phi1[j];
            if j == l {
                circ + self.phi0[j]
            } else {
                circ
            }
        });
        let lu = m.partial_piv_lu();
        let mut rhs = Mat::<C64>::from_fn(mt, 1, |j, _| -t_phys[j] * self.phi1[j]);
        lu.solve_in_place(rhs.as_mut());
        let g: Vec<C64> = (0..mt).map(|j| rhs[(j, 0)]).collect();
        if g.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(DbvpError::Solver("boundary system (phi0 + phi1*DtN) is singular".into()));
        }
        Ok(self.fft_vec(&g, false))
    }

    fn apply_left_quantized(&self, sp: &SpectralPoint, fhat: &[C64]) -> Result<Vec<C64>> {
        let (mt, mn) = (self.tgrid.points, self.ngrid.len());
        let nodes = &self.ngrid.nodes;
        let xs = self.tgrid.nodes();
        let rows: Vec<Result<Vec<C64>>> = (0..mt)
            .into_par_iter()
            .map(|j| {
                let x = xs[j];
                let mut row = vec![ZERO; mn];
                for k in 0..mt {
                    let ker = self.kernels(sp, x, k)?;
                    let (mut v, t) = dirichlet_solve(nodes, &fhat[k * mn..(k + 1) * mn], &ker);
                    if !self.bspec.is_dirichlet() {
                        let (p0, p1) = (self.phi0[j], self.phi1[j]);
                        let g = -(t * p1) / (ker.kappa.kplus * p1 + p0);
                        for (i, &y) in nodes.iter().enumerate() {
                            v[i] += g * (-ker.kappa.kplus * y).exp();
                        }
                    }
                    let phase = C64::from_polar(1.0 / mt as f64, self.freqs[k] * x);
                    for i in 0..mn {
                        row[i] += phase * v[i];
                    }
                }
                Ok(row)
            })
            .collect();
        let mut out = Vec::with_capacity(mt * mn);
        for r in rows {
            out.extend(r?);
        }
        Ok(out)
    }

    /// Boundary residual T u at x_n = 0 (φ₀u₀ + φ₁γ₁u with a second-order
    /// one-sided difference), as a vector over x′.
    pub fn boundary_residual(&self, u: &[C64]) -> Vec<C64> {
        let mn = self.ngrid.len();
        let y = &self.ngrid.nodes;
        let (h1, h2) = (y[1] - y[0], y[2] - y[0]);
        // Derivative weights for nodes 0, 1, 2 on a possibly nonuniform grid.
        let w0 = -(h1 + h2) / (h1 * h2);
        let w1 = h2 / (h1 * (h2 - h1));
        let w2 = -h1 / (h2 * (h2 - h1));
        (0..self.tgrid.points)
            .map(|j| {
                let r = &u[j * mn..];
                let du = r[0] * w0 + r[1] * w1 + r[2] * w2;
                r[0] * self.phi0[j] - du * self.phi1[j]
            })
            .collect()
    }
}

impl ResolventOperator for ResolventEngine {
    fn tgrid(&self) -> TangentialGrid {
        self.tgrid
    }
    fn ngrid(&self) -> &NormalGrid {
        &self.ngrid
    }
    fn resolve(&self, lambda: C64, f: &[C64]) -> Result<Vec<C64>> {
        let sp = SpectralPoint::from_lambda(lambda)?;
        self.apply(&sp, f)
    }
    fn approximate(&self) -> bool {
        self.mode != EngineMode::Exact
    }
}

/// Result of [`apply_resolvent`].
#[derive(Clone, Debug)]
pub struct ResolventApplication {
    pub field: DiscreteField,
    pub approximate: bool,
}

/// One-shot (A_T − λ)^{−1}f on the grid of `f`.
pub fn apply_resolvent(
    spec: &EllipticOperatorSpec,
    bspec: &BoundaryOperatorSpec,
    sp: &SpectralPoint,
    f: &DiscreteField,
) -> Result<ResolventApplication> {
    let eng = ResolventEngine::new(spec, bspec, f.tgrid, f.ngrid.clone())?;
    let v = eng.apply(sp, &f.values)?;
    Ok(ResolventApplication { field: f.with_values(v), approximate: eng.approximate() })
}

/// Smallest c ∈ {1, 2, 4, …, 1024} such that, for A + c, every θ has a
/// positive ellipticity margin on the lattice and Re κ⁺ ≥ 1 at every
/// lattice point and at (ξ′, ζ) = 0 (which gives Re σ ≥ φ₀ + φ₁).
pub fn select_shift(spec: &EllipticOperatorSpec, thetas: &[f64], lattice: &SymbolLattice) -> Result<f64> {
    let mut pts = lattice.all_points();
    for x in &lattice.x_points {
        pts.push(SymbolPoint::new(x.clone(), vec![0.0; lattice.dim], 0.0));
    }
    let mut c = 1.0;
    while c <= 1024.0 {
        let s = spec.with_shift(c);
        let ok = thetas.iter().all(|&th| {
            ellipticity_margin(&s, th, lattice).map(|m| m > 0.0).unwrap_or(false)
                && pts.par_iter().all(|pt| {
                    kappa_pair(&s, &pt.x, &pt.xi, pt.zeta, th, false).map(|k| k.kplus.re >= 1.0).unwrap_or(false)
                })
        });
        if ok {
            return Ok(c);
        }
        c *= 2.0;
    }
    Err(DbvpError::Precondition("no shift c <= 1024 satisfies the margin and lower-bound checks".into()))
}

/// Deterministic random test field with entries uniform in the unit
/// square, drawn from stream `stream` of `seed`.
pub fn random_values(len: usize, seed: u64, stream: u64) -> Vec<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    (0..len).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()
}

/// One row of a sectoriality scan.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SectorRow {
    pub theta: f64,
    pub mu: f64,
    pub lambda: C64,
    /// max ‖λR(λ)f‖₂/‖f‖₂ over trials and power steps; None if the point
    /// failed.
    pub norm_est: Option<f64>,
}

/// Power iteration on R(λ̄)R(λ) (the adjoint is approximated by R(λ̄),
/// exact for formally self-adjoint problems) from a given start vector;
/// returns the largest observed |λ|‖R(λ)v‖/‖v‖.
pub fn resolvent_norm_trial<R: ResolventOperator + ?Sized>(
    op: &R,
    lambda: C64,
    start: &[C64],
    power_steps: usize,
) -> Result<f64> {
    let mut v = start.to_vec();
    let mut best = 0.0f64;
    for step in 0..=power_steps {
        let nv = op.norm2(&v);
        if nv == 0.0 {
            break;
        }
        let w = op.resolve(lambda, &v)?;
        best = best.max(lambda.norm() * op.norm2(&w) / nv);
        if step == power_steps {
            break;
        }
        let z = op.resolve(lambda.conj(), &w)?;
        let nz = op.norm2(&z);
        if nz == 0.0 {
            break;
        }
        v = z.iter().map(|x| x / nz).collect();
    }
    Ok(best)
}

/// ‖λ(A_T − λ)^{−1}‖ estimates on the (θ, μ) grid. Trial i uses stream i
/// of `seed`; the estimate is the maximum over trials and power steps, so
/// it is non-decreasing in `trials`.
pub fn sector_scan<R: ResolventOperator + ?Sized>(
    op: &R,
    thetas: &[f64],
    mus: &[f64],
    trials: usize,
    power_steps: usize,
    seed: u64,
) -> Result<Vec<SectorRow>> {
    if trials == 0 {
        return Err(DbvpError::Argument("sector_scan needs trials >= 1".into()));
    }
    let len = op.tgrid().points * op.ngrid().len();
    let starts: Vec<Vec<C64>> = (0..trials as u64).map(|i| random_values(len, seed, i)).collect();
    let pts: Vec<(f64, f64)> = thetas.iter().flat_map(|&t| mus.iter().map(move |&m| (t, m))).collect();
    let rows: Vec<SectorRow> = pts
        .par_iter()
        .map(|&(theta, mu)| {
            let sp = SpectralPoint::new(theta, mu);
            let lambda = sp.as_ref().map(|s| s.lambda).unwrap_or(C64::new(f64::NAN, f64::NAN));
            let est = sp.ok().and_then(|sp| {
                let mut best = None::<f64>;
                for s in &starts {
                    match resolvent_norm_trial(op, sp.lambda, s, power_steps) {
                        Ok(v) => best = Some(best.map_or(v, |b| b.max(v))),
                        Err(_) => return None,
                    }
                }
                best
            });
            SectorRow { theta, mu, lambda, norm_est: est }
        })
        .collect();
    Ok(rows)
}

/// Relative variation (max − min)/max and log-log slope against μ of the
/// estimates of one θ-row.
pub fn scan_variation(rows: &[SectorRow], theta: f64) -> Option<(f64, f64)> {
    let sel: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.theta == theta)
        .map(|r| r.norm_est.map(|v| (r.mu, v)))
        .collect::<Option<Vec<_>>>()?;
    if sel.len() < 2 {
        return None;
    }
    let max = sel.iter().map(|s| s.1).fold(f64::MIN, f64::max);
    let min = sel.iter().map(|s| s.1).fold(f64::MAX, f64::min);
    let xs: Vec<f64> = sel.iter().map(|s| s.0).collect();
    let ys: Vec<f64> = sel.iter().map(|s| s.1).collect();
    Some(((max - min) / max, loglog_slope(&xs, &ys)))
}

/// Component of the resolvent probed by [`decay_probe`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DecayComponent {
    /// Q_{λ,+}: L²(ℝ₊) → L²(ℝ₊).
    Pseudo,
    /// G^D + G^T: L²(ℝ₊) → L²(ℝ₊).
    Green,
    /// K^D: boundary H^{−1/2}_μ → L²(ℝ₊).
    Poisson,
    /// γ₁(Q + G^D): L²(ℝ₊) → boundary H^{1/2}_μ.
    Trace,
}

impl DecayComponent {
    pub fn name(&self) -> &'static str {
        match self {
            DecayComponent::Pseudo => "pseudo",
            DecayComponent::Green => "green",
            DecayComponent::Poisson => "poisson",
            DecayComponent::Trace => "trace",
        }
    }
    /// Expected slope for a second-order operator (m = 2 resolvent orders,
    /// potential and trace in μ-weighted Sobolev norms).
    pub fn expected_slope(&self) -> f64 {
        match self {
            DecayComponent::Pseudo | DecayComponent::Green => -2.0,
            DecayComponent::Poisson | DecayComponent::Trace => 0.0,
        }
    }
    pub const ALL: [DecayComponent; 4] =
        [DecayComponent::Pseudo, DecayComponent::Green, DecayComponent::Poisson, DecayComponent::Trace];
}

/// Outcome of a decay probe.
#[derive(Clone, Debug, Serialize)]
pub struct DecayResult {
    pub component: DecayComponent,
    pub mus: Vec<f64>,
    /// Operator-norm estimate per μ (μ-weighted norms for poisson/trace).
    pub norms: Vec<f64>,
    /// Fitted slope of log norm against log⟨μ⟩.
    pub slope: f64,
    /// Same with plain boundary L² norms (poisson/trace only; −1/2 expected).
    pub boundary_l2_slope: Option<f64>,
}

/// Per-frequency operator norms of one component, sup over the x′ and ξ′
/// samples; fitted against ⟨μ⟩ = (1 + μ²)^{1/2}.
pub fn decay_probe(
    component: DecayComponent,
    spec: &EllipticOperatorSpec,
    bspec: &BoundaryOperatorSpec,
    theta: f64,
    mus: &[f64],
    x_samples: &[f64],
    xi_samples: &[f64],
) -> Result<DecayResult> {
    validate_theta(theta)?;
    if mus.len() < 2 {
        return Err(DbvpError::Argument("decay_probe needs at least two mu values".into()));
    }
    let per_mu: Vec<Result<(f64, f64)>> = mus
        .par_iter()
        .map(|&mu| {
            let sp = SpectralPoint::new(theta, mu)?;
            let mut best = 0.0f64;
            let mut best_l2 = 0.0f64;
            for &x in x_samples {
                for &xi in xi_samples {
                    let k = assemble_resolvent_symbol(spec, bspec, &sp, &[x], &[xi])?;
                    let (kp, km) = (k.kappa.kplus, k.kappa.kminus);
                    let br = (1.0 + xi * xi + mu * mu).sqrt();
                    let (v, l2) = match component {
                        DecayComponent::Pseudo => {
                            let q = crate::roots::boundary_quadratic(spec, &[x], &[xi], mu, theta, false)?;
                            let r = 10.0 * (1.0 + xi.abs() + mu);
                            let (_, m) = crate::quadrature::maximize_scan_golden(
                                |t| 1.0 / q.eval(C64::new(t, 0.0)).norm(),
                                -r,
                                r,
                                401,
                            );
                            (m, m)
                        }
                        DecayComponent::Green => {
                            let amp = k.green_d.amplitude + k.green_t.amplitude;
                            let n = amp.norm() / (2.0 * (kp.re * km.re).sqrt());
                            (n, n)
                        }
                        DecayComponent::Poisson => {
                            let n = 1.0 / (2.0 * kp.re).sqrt();
                            (n * br.sqrt(), n)
                        }
                        DecayComponent::Trace => {
                            let n = 1.0 / (k.kappa.a_n.norm() * (2.0 * km.re).sqrt());
                            (n * br.sqrt(), n)
                        }
                    };
                    best = best.max(v);
                    best_l2 = best_l2.max(l2);
                }
            }
            Ok((best, best_l2))
        })
        .collect();
    let mut norms = Vec::with_capacity(mus.len());
    let mut l2 = Vec::with_capacity(mus.len());
    for r in per_mu {
        let (a, b) = r?;
        norms.push(a);
        l2.push(b);
    }
    let br: Vec<f64> = mus.iter().map(|m| (1.0 + m * m).sqrt()).collect();
    let slope = loglog_slope(&br, &norms);
    let boundary_l2_slope = matches!(component, DecayComponent::Poisson | DecayComponent::Trace)
        .then(|| loglog_slope(&br, &l2));
    Ok(DecayResult { component, mus: mus.to_vec(), norms, slope, boundary_l2_slope })
}

/// One row of the I_θ truncation table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HilbertRow {
    pub mu_max: f64,
    /// ‖∫_0^{μmax} μG^T_{(−2),μ}u dμ‖₂.
    pub norm: f64,
    /// norm/‖u‖₂.
    pub ratio: f64,
}

/// μ-grid parameters of [`hilbert_bound_probe`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HilbertQuadrature {
    pub mu_min: f64,
    /// Geometric ratio r of μ_j = μ_min r^j.
    pub ratio: f64,
    /// Tolerance of the r vs r² convergence check (relative).
    pub tol: f64,
}

impl Default for HilbertQuadrature {
    fn default() -> Self {
        HilbertQuadrature { mu_min: 2f64.powi(-12), ratio: 2f64.powf(1.0 / 8.0), tol: 1e-3 }
    }
}

/// G^T_{(−2),μ}u with the principal pair κ± (lower-order terms dropped) and
/// amplitude φ₁/(φ₀ + φ₁κ⁺)/a_n frozen at each x′_j (left quantization).
fn gt_principal_apply(
    spec: &EllipticOperatorSpec,
    bspec: &BoundaryOperatorSpec,
    theta: f64,
    mu: f64,
    tgrid: TangentialGrid,
    ngrid: &NormalGrid,
    uhat: &[C64],
) -> Result<Vec<C64>> {
    let (mt, mn) = (tgrid.points, ngrid.len());
    let freqs = tgrid.frequencies();
    let xs = tgrid.nodes();
    let nodes = &ngrid.nodes;
    let mut pairs = Vec::with_capacity(mt);
    let mut proj = Vec::with_capacity(mt);
    for k in 0..mt {
        let kp = kappa_pair(spec, &[0.0], &[freqs[k]], mu, theta, true)?;
        kp.check_decay()?;
        // ∫ e^{−κ⁻y}û_k(y) dy.
        proj.push(backward_integrals(nodes, &uhat[k * mn..(k + 1) * mn], kp.kminus)[0]);
        pairs.push(kp);
    }
    let mut out = vec![ZERO; mt * mn];
    for j in 0..mt {
        let (p0, p1) = (bspec.phi0_at(&[xs[j]]), bspec.phi1_at(&[xs[j]]));
        for k in 0..mt {
            let kp = &pairs[k];
            let amp = frozen_s_phi1(kp, p0, p1) / kp.a_n * proj[k] * C64::from_polar(1.0 / mt as f64, freqs[k] * xs[j]);
            if amp.norm() == 0.0 {
                continue;
            }
            for (i, &y) in nodes.iter().enumerate() {
                out[j * mn + i] += amp * (-kp.kplus * y).exp();
            }
        }
    }
    Ok(out)
}

/// Truncated I_θu = ∫_0^{μmax} μG^T_{(−2),μ}u dμ for every requested μ_max
/// (trapezoid in ln μ on μ_j = μ_min r^j, head ∫_0^{μmin} by the μ_min
/// value). The rule is checked against the r² sub-grid.
pub fn hilbert_bound_probe(
    spec: &EllipticOperatorSpec,
    bspec: &BoundaryOperatorSpec,
    theta: f64,
    mu_maxes: &[f64],
    u: &DiscreteField,
    quad: HilbertQuadrature,
) -> Result<Vec<HilbertRow>> {
    validate_theta(theta)?;
    let un = u.norm_p(2.0);
    if un == 0.0 {
        return Err(DbvpError::Argument("hilbert_bound_probe needs a nonzero field".into()));
    }
    if spec.n != 2 {
        return Err(DbvpError::Unsupported("hilbert probe supports n = 2 only".into()));
    }
    if !(quad.mu_min > 0.0 && quad.ratio > 1.0) {
        return Err(DbvpError::Argument("hilbert quadrature needs mu_min > 0 and ratio > 1".into()));
    }
    let top = mu_maxes.iter().cloned().fold(0.0, f64::max);
    let lr = quad.ratio.ln();
    let nsteps = ((top / quad.mu_min).ln() / lr).ceil() as usize;
    // Requested μ_max must lie on the grid with an even index.
    let mut idx = Vec::new();
    for &m in mu_maxes {
        let s = (m / quad.mu_min).ln() / lr;
        let r = s.round();
        if (s - r).abs() > 1e-9 || !(r as usize).is_multiple_of(2) || m <= quad.mu_min {
            return Err(DbvpError::Argument(format!(
                "mu_max = {m} is not an even grid point mu_min*r^(2j) (mu_min = {}, r = {})",
                quad.mu_min, quad.ratio
            )));
        }
        idx.push(r as usize);
    }
    let eng = ResolventEngine::new(spec, bspec, u.tgrid, u.ngrid.clone())?;
    let uhat = eng.fft_rows(&u.values, false);
    let mus: Vec<f64> = (0..=nsteps).map(|j| quad.mu_min * quad.ratio.powi(j as i32)).collect();
    // Integrand μ²·G(μ) (in d ln μ) in spectral-x′/physical-x_n form.
    let samples: Vec<Result<Vec<C64>>> = mus
        .par_iter()
        .map(|&mu| {
            let g = gt_principal_apply(spec, bspec, theta, mu, u.tgrid, &u.ngrid, &uhat)?;
            Ok(g.into_iter().map(|v| v * (mu * mu)).collect())
        })
        .collect();
    let mut vals = Vec::with_capacity(samples.len());
    for s in samples {
        vals.push(s?);
    }
    let len = u.values.len();
    let w = u.ngrid.weights();
    let h = u.tgrid.spacing();
    let head: Vec<C64> = vals[0].iter().map(|v| v * 0.5).collect(); // ∫_0^{μ0} μ dμ·G(μ0) = μ0²/2·G
    let mut rows = Vec::new();
    for (&m, &end) in mu_maxes.iter().zip(&idx) {
        let mut acc_r = head.clone();
        let mut acc_r2 = head.clone();
        for j in 0..end {
            for p in 0..len {
                acc_r[p] += (vals[j][p] + vals[j + 1][p]) * (0.5 * lr);
            }
        }
        for j in (0..end).step_by(2) {
            for p in 0..len {
                acc_r2[p] += (vals[j][p] + vals[j + 2][p]) * lr;
            }
        }
        let n1 = weighted_norm(&acc_r, &w, h, 2.0);
        let n2 = weighted_norm(&acc_r2, &w, h, 2.0);
        let scale = n1.max(1e-300);
        if n1 > 1e-14 * un && (n1 - n2).abs() / scale > quad.tol {
            return Err(DbvpError::Instability(format!(
                "I_theta quadrature not converged at mu_max = {m}: r-rule {n1:.6e} vs r^2-rule {n2:.6e}"
            )));
        }
        rows.push(HilbertRow { mu_max: m, norm: n1, ratio: n1 / un });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fd::{assemble, solve_resolvent};
    use std::f64::consts::PI;

    fn c(v: f64) -> C64 {
        C64::new(v, 0.0)
    }

    #[test]
    fn spectral_point_round_trip() {
        let sp = SpectralPoint::new(0.7, 3.0).unwrap();
        let back = SpectralPoint::from_lambda(sp.lambda).unwrap();
        assert!((back.theta - 0.7).abs() < 1e-15 && (back.mu - 3.0).abs() < 1e-14);
        let sp = SpectralPoint::from_lambda(c(-1.0)).unwrap();
        assert_eq!((sp.theta, sp.mu), (0.0, 1.0));
        assert!(SpectralPoint::from_lambda(c(2.0)).is_err());
        assert!(SpectralPoint::new(3.2, 1.0).is_err());
    }

    #[test]
    fn dirichlet_has_no_gt_and_neumann_matches_ode_green() {
        let spec = EllipticOperatorSpec::laplace(2, 1.0, 0.0);
        let sp = SpectralPoint::from_lambda(c(-1.0)).unwrap();
        let k = assemble_resolvent_symbol(&spec, &BoundaryOperatorSpec::dirichlet(), &sp, &[0.0], &[1.3]).unwrap();
        assert_eq!(k.green_t.amplitude, c(0.0));
        // Neumann: total kernel = (e^{−κ|x−y|} + e^{−κ(x+y)})/(2κ), κ = √(2+ξ²).
        let xi = 0.8;
        let k = assemble_resolvent_symbol(&spec, &BoundaryOperatorSpec::neumann(), &sp, &[0.0], &[xi]).unwrap();
        let kap = (2.0 + xi * xi).sqrt();
        for &(x, y) in &[(0.2, 1.0), (1.5, 0.3), (0.0, 0.0)] {
            let total = k.free.eval(x, y) + k.green_d.eval(x, y) + k.green_t.eval(x, y);
            let exact = ((-kap * (x - y).abs()).exp() + (-kap * (x + y)).exp()) / (2.0 * kap);
            assert!((total - c(exact)).norm() < 1e-14, "{total} vs {exact}");
        }
    }

    #[test]
    fn agmon_consistency() {
        let spec = EllipticOperatorSpec::constant(vec![vec![1.5, 0.2], vec![0.2, 1.1]], vec![0.3, -0.1], 0.4, 1.0).unwrap();
        for b in [BoundaryOperatorSpec::robin(1.0, 2.0), BoundaryOperatorSpec::degenerate_sin2()] {
            for &(th, mu, x, xi) in &[(0.5, 2.0, 0.3, -1.5), (2.0, 7.0, 1.1, 4.0), (-1.2, 0.5, 2.0, 0.0)] {
                let sp = SpectralPoint::new(th, mu).unwrap();
                let a = assemble_resolvent_symbol(&spec, &b, &sp, &[x], &[xi]).unwrap();
                let g = assemble_resolvent_symbol_agmon(&spec, &b, &sp, &[x], &[xi]).unwrap();
                for (p, q) in [
                    (a.kappa.kplus, g.kappa.kplus),
                    (a.kappa.kminus, g.kappa.kminus),
                    (a.green_d.amplitude, g.green_d.amplitude),
                    (a.green_t.amplitude, g.green_t.amplitude),
                ] {
                    assert!((p - q).norm() <= 1e-12 * p.norm().max(1e-300), "{p} vs {q}");
                }
            }
        }
    }

    fn gaussian(tg: TangentialGrid, ng: NormalGrid, x0: f64, y0: f64, w: f64) -> DiscreteField {
        DiscreteField::from_fn(tg, ng, move |x, y| c((-((x - x0).powi(2) + (y - y0).powi(2)) / (2.0 * w * w)).exp()))
    }

    #[test]
    fn zero_in_zero_out_and_linear_exactness() {
        let spec = EllipticOperatorSpec::laplace(2, 1.0, 0.0);
        let tg = TangentialGrid::new(2.0 * PI, 16).unwrap();
        let ng = NormalGrid::uniform(6.0, 61).unwrap();
        let f = DiscreteField::zeros(tg, ng.clone());
        let sp = SpectralPoint::from_lambda(c(-1.0)).unwrap();
        let u = apply_resolvent(&spec, &BoundaryOperatorSpec::neumann(), &sp, &f).unwrap();
        assert!(u.field.values.iter().all(|v| v.norm() == 0.0));
        assert!(!u.approximate);
    }

    #[test]
    fn matches_fd_oracle_small_grid() {
        let spec = EllipticOperatorSpec::laplace(2, 1.0, 0.0);
        let tg = TangentialGrid::new(8.0, 64).unwrap();
        let ng = NormalGrid::uniform(8.0, 129).unwrap();
        let f = gaussian(tg, ng.clone(), 4.0, 2.0, 0.6);
        let sp = SpectralPoint::from_lambda(c(-1.0)).unwrap();
        for b in [BoundaryOperatorSpec::dirichlet(), BoundaryOperatorSpec::neumann(), BoundaryOperatorSpec::robin(1.0, 1.0)] {
            let u = apply_resolvent(&spec, &b, &sp, &f).unwrap().field;
            let op = assemble(&spec, &b, tg, &ng).unwrap();
            let r = solve_resolvent(&op, c(-1.0), &f).unwrap();
            let e = u.relative_l2_error(&r).unwrap();
            assert!(e < 0.02, "{}: {e}", b.name);
        }
    }

    #[test]
    fn degenerate_boundary_condition_is_satisfied() {
        let spec = EllipticOperatorSpec::laplace(2, 1.0, 0.0);
        let tg = TangentialGrid::new(PI, 32).unwrap();
        let ng = NormalGrid::geometric(12.0, 200, 2e-3).unwrap();
        let f = gaussian(tg, ng.clone(), 1.5, 1.0, 0.4);
        let b = BoundaryOperatorSpec::degenerate_sin2();
        let eng = ResolventEngine::new(&spec, &b, tg, ng.clone()).unwrap();
        let sp = SpectralPoint::new(PI / 2.0, 2.0).unwrap();
        let u = eng.apply(&sp, &f.values).unwrap();
        let res = eng.boundary_residual(&u);
        let scale = f.norm();
        for r in res {
            assert!(r.norm() < 1e-3 * scale, "{r}");
        }
    }

    #[test]
    fn resolvent_identity_fine_grid() {
        let spec = EllipticOperatorSpec::laplace(2, 1.0, 0.0);
        let tg = TangentialGrid::new(2.0 * PI, 16).unwrap();
        let ng = NormalGrid::uniform(20.0, 8001).unwrap();
        let f = DiscreteField::from_fn(tg, ng.clone(), |x, y| c((-(y - 3.0).powi(2)).exp() * (1.0 + x.sin())));
        let eng = ResolventEngine::new(&spec, &BoundaryOperatorSpec::robin(1.0, 1.0), tg, ng).unwrap();
        let (l1, l2) = (C64::new(-1.0, 2.0), C64::new(-3.0, -1.0));
        let r1 = eng.resolve(l1, &f.values).unwrap();
        let r2 = eng.resolve(l2, &f.values).unwrap();
        let r12 = eng.resolve(l1, &r2).unwrap();
        let lhs: Vec<C64> = r1.iter().zip(&r2).map(|(a, b)| a - b).collect();
        let rhs: Vec<C64> = r12.iter().map(|v| v * (l1 - l2)).collect();
        let d: Vec<C64> = lhs.iter().zip(&rhs).map(|(a, b)| a - b).collect();
        let rel = eng.norm2(&d) / eng.norm2(&lhs);
        assert!(rel < 1e-6, "{rel}");
    }

    #[test]
    fn frozen_mode_reduces_to_exact_for_constant_data() {
        let spec = EllipticOperatorSpec::laplace(2, 1.0, 0.0);
        let mut varying = spec.clone();
        varying.c0 = crate::expr::Expr::parse("1 + 0*sin(x1)", 2).unwrap();
        let tg = TangentialGrid::new(2.0 * PI, 16).unwrap();
        let ng = NormalGrid::uniform(8.0, 81).unwrap();
        let f = gaussian(tg, ng.clone(), 3.0, 1.0, 0.7);
        let b = BoundaryOperatorSpec::robin(1.0, 1.0);
        let sp = SpectralPoint::new(1.0, 1.5).unwrap();
        let a = apply_resolvent(&spec, &b, &sp, &f).unwrap();
        let z = apply_resolvent(&varying, &b, &sp, &f).unwrap();
        assert!(z.approximate);
        assert!(z.field.relative_l2_error(&a.field).unwrap() < 1e-12);
    }

    #[test]
    fn sector_scan_monotone_in_trials() {
        let spec = EllipticOperatorSpec::laplace(2, 1.0, 0.0);
        let tg = TangentialGrid::new(2.0 * PI, 16).unwrap();
        let ng = NormalGrid::geometric(20.0, 64, 0.01).unwrap();
        let eng = ResolventEngine::new(&spec, &BoundaryOperatorSpec::dirichlet(), tg, ng).unwrap();
        let a = sector_scan(&eng, &[PI / 2.0], &[1.0, 4.0], 1, 2, 7).unwrap();
        let b = sector_scan(&eng, &[PI / 2.0], &[1.0, 4.0], 3, 2, 7).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!(y.norm_est.unwrap() >= x.norm_est.unwrap());
            assert!(y.norm_est.unwrap() <= 1.0 + 1e-6);
        }
        // λR(λ) → 0 as μ → 0 for the invertible operator.
        let s = sector_scan(&eng, &[PI / 2.0], &[1e-3], 1, 1, 7).unwrap();
        assert!(s[0].norm_est.unwrap() < 1e-5);
    }

    #[test]
    fn decay_slopes() {
        let spec = EllipticOperatorSpec::laplace(2, 1.0, 0.0);
        let mus: Vec<f64> = (0..=8).map(|k| 10f64.powf(k as f64 / 4.0)).collect();
        let xis = [0.0, 1.0, 3.0];
        let b = BoundaryOperatorSpec::dirichlet();
        for comp in DecayComponent::ALL {
            let r = decay_probe(comp, &spec, &b, 0.0, &mus, &[0.0], &xis).unwrap();
            assert!((r.slope - comp.expected_slope()).abs() < 0.15, "{comp:?}: {}", r.slope);
        }
    }

    #[test]
    fn hilbert_probe_dirichlet_is_zero() {
        let spec = EllipticOperatorSpec::laplace(2, 1.0, 0.0);
        let tg = TangentialGrid::new(2.0 * PI, 8).unwrap();
        let ng = NormalGrid::uniform(4.0, 33).unwrap();
        let u = gaussian(tg, ng, 3.0, 1.0, 0.25);
        let q = HilbertQuadrature { mu_min: 0.25, ..Default::default() };
        let rows = hilbert_bound_probe(&spec, &BoundaryOperatorSpec::dirichlet(), PI / 2.0, &[4.0, 16.0], &u, q).unwrap();
        assert!(rows.iter().all(|r| r.norm == 0.0));
    }
}
