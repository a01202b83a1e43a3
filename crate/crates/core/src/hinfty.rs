//! Contour functional calculus f(A) = (i/2π)∫_{∂Λ_{θ′}} f(λ)(A − λ)^{−1}dλ,
//! the H∞* test family and the uniform-bound probe.
//!
//! Contour: the rays λ = e^{∓iθ′}μ², the lower one traversed outward and
//! the upper one inward (counterclockwise around the spectrum). In
//! t = ln μ the rays are discretised by composite 8-point Gauss–Legendre
//! panels on [ln μ_min, ln μ_max]; the pieces μ < μ_min and μ > μ_max are
//! extrapolated with R(λ) ≈ R(λ_min) and λR(λ) ≈ λ_max R(λ_max).

use crate::error::{DbvpError, Result};
use crate::quadrature::{composite_gauss, maximize_scan_golden};
use crate::resolvent::{random_values, ResolventOperator};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;
use std::sync::Arc;

const ZERO: C64 = C64::new(0.0, 0.0);
/// Gauss–Legendre points per panel.
pub const PANEL_ORDER: usize = 8;
/// Extent (in t = ln μ) of the scalar head/tail integrals.
pub const EXTRAPOLATION_SPAN: f64 = 40.0;
/// Resolvent applications computed together before accumulation.
const BATCH: usize = 32;

type ScalarFn = dyn Fn(C64) -> C64 + Send + Sync;

/// A holomorphic function on the sector with its decay exponent.
#[derive(Clone)]
pub struct HInftyFunction {
    pub name: String,
    /// Decay exponent ε of the H∞* bound; None for functions outside H∞*
    /// (e.g. semigroups), which skip the mesh validation.
    pub epsilon: Option<f64>,
    /// sup |f| over the closed sector |arg λ| ≤ θ′ (see `with_sup_norm`).
    pub sup_norm: f64,
    f: Arc<ScalarFn>,
}

impl std::fmt::Debug for HInftyFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HInftyFunction")
            .field("name", &self.name)
            .field("epsilon", &self.epsilon)
            .field("sup_norm", &self.sup_norm)
            .finish()
    }
}

impl HInftyFunction {
    pub fn new(name: impl Into<String>, epsilon: Option<f64>, f: impl Fn(C64) -> C64 + Send + Sync + 'static) -> Self {
        HInftyFunction { name: name.into(), epsilon, sup_norm: f64::NAN, f: Arc::new(f) }
    }

    pub fn eval(&self, lambda: C64) -> C64 {
        (self.f)(lambda)
    }

    /// Estimate ‖f‖_∞ on the sector |arg λ| ≤ θ′ by maximising |f| along
    /// both boundary rays (maximum principle; scan + golden section in ln|λ|
    /// over [−30, 30]).
    pub fn with_sup_norm(mut self, theta_prime: f64) -> Self {
        let mut best = 0.0f64;
        for s in [-1.0, 1.0] {
            let g = |t: f64| self.eval(C64::from_polar(t.exp(), s * theta_prime)).norm();
            best = best.max(maximize_scan_golden(g, -30.0, 30.0, 1201).1);
        }
        self.sup_norm = best;
        self
    }

    /// max over the contour mesh of |f(λ)|(|λ|^ε + |λ|^{−ε}): the constant C
    /// of the H∞* bound (None if ε is not set).
    pub fn hstar_constant(&self, q: &ContourQuadrature) -> Option<f64> {
        let eps = self.epsilon?;
        Some(q.nodes.iter().fold(0.0, |m, n| {
            let r = n.lambda.norm();
            m.max(self.eval(n.lambda).norm() * (r.powf(eps) + r.powf(-eps)))
        }))
    }
}

/// f_s(λ) = (sλ)^ε/(1 + sλ)^{2ε} (principal branches on the cut plane).
pub fn hstar_member(eps: f64, s: f64) -> HInftyFunction {
    HInftyFunction::new(format!("hstar(eps={eps},s={s:.6e})"), Some(eps), move |l: C64| {
        let z = l * s;
        (z.ln() * eps - (z + 1.0).ln() * (2.0 * eps)).exp()
    })
}

/// `count` members with s on a geometric sweep of [1e−2, 1e2], sup norms
/// taken on the sector of half-angle θ′.
pub fn hstar_family(eps: f64, count: usize, theta_prime: f64) -> Result<Vec<HInftyFunction>> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(DbvpError::Argument(format!("epsilon = {eps} must lie in (0, 1)")));
    }
    Ok((0..count)
        .map(|k| {
            let s = if count == 1 { 1.0 } else { 10f64.powf(-2.0 + 4.0 * k as f64 / (count - 1) as f64) };
            hstar_member(eps, s).with_sup_norm(theta_prime)
        })
        .collect())
}

/// Which ray a node sits on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Ray {
    /// λ = e^{−iθ′}μ², traversed outward.
    Lower,
    /// λ = e^{+iθ′}μ², traversed inward.
    Upper,
}

impl Ray {
    fn angle(self, theta_prime: f64) -> f64 {
        match self {
            Ray::Lower => -theta_prime,
            Ray::Upper => theta_prime,
        }
    }
    fn orientation(self) -> f64 {
        match self {
            Ray::Lower => 1.0,
            Ray::Upper => -1.0,
        }
    }
}

/// One quadrature node: ∫ g dλ ≈ Σ weight·g(lambda).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ContourNode {
    pub ray: Ray,
    pub mu: f64,
    pub lambda: C64,
    /// Includes dλ = 2λ dt and the orientation.
    pub weight: C64,
}

/// Truncated two-ray contour.
#[derive(Clone, Debug, Serialize)]
pub struct ContourQuadrature {
    pub theta_prime: f64,
    pub mu_min: f64,
    pub mu_max: f64,
    /// Nodes per ray.
    pub n: usize,
    pub nodes: Vec<ContourNode>,
}

/// Geometric (Gauss panels in ln μ) contour with N nodes per ray.
pub fn build_contour(theta_prime: f64, mu_min: f64, mu_max: f64, n: usize) -> Result<ContourQuadrature> {
    if !(theta_prime > 0.0 && theta_prime < PI) {
        return Err(DbvpError::Argument(format!("contour angle {theta_prime} must lie in (0, pi)")));
    }
    if !(mu_min > 0.0 && mu_min < mu_max && mu_max.is_finite()) {
        return Err(DbvpError::Argument(format!("need 0 < mu_min < mu_max (got {mu_min}, {mu_max})")));
    }
    if n < 16 || !n.is_multiple_of(PANEL_ORDER) {
        return Err(DbvpError::Argument(format!("node count {n} must be >= 16 and a multiple of {PANEL_ORDER}")));
    }
    let (ts, ws) = composite_gauss(mu_min.ln(), mu_max.ln(), n / PANEL_ORDER, PANEL_ORDER);
    let mut nodes = Vec::with_capacity(2 * n);
    for ray in [Ray::Lower, Ray::Upper] {
        for (&t, &w) in ts.iter().zip(&ws) {
            let mu = t.exp();
            let lambda = C64::from_polar(mu * mu, ray.angle(theta_prime));
            nodes.push(ContourNode { ray, mu, lambda, weight: lambda * (2.0 * w * ray.orientation()) });
        }
    }
    Ok(ContourQuadrature { theta_prime, mu_min, mu_max, n, nodes })
}

impl ContourQuadrature {
    /// Σ weight·g(λ) over the truncated contour.
    pub fn integrate(&self, g: impl Fn(C64) -> C64) -> C64 {
        self.nodes.iter().fold(ZERO, |s, n| s + n.weight * g(n.lambda))
    }

    fn endpoint(&self, ray: Ray, mu: f64) -> C64 {
        C64::from_polar(mu * mu, ray.angle(self.theta_prime))
    }

    /// Scalar head integral ∫ f dλ over the ray piece μ < μ_min and tail
    /// integral ∫ f/λ dλ over μ > μ_max (oriented).
    fn head_tail(&self, f: &HInftyFunction, ray: Ray) -> (C64, C64) {
        let panels = (EXTRAPOLATION_SPAN as usize) * 2;
        let a = self.mu_min.ln();
        let (ts, ws) = composite_gauss(a - EXTRAPOLATION_SPAN, a, panels, PANEL_ORDER);
        let mut head = ZERO;
        for (&t, &w) in ts.iter().zip(&ws) {
            let l = C64::from_polar((2.0 * t).exp(), ray.angle(self.theta_prime));
            head += f.eval(l) * l * (2.0 * w);
        }
        let b = self.mu_max.ln();
        let (ts, ws) = composite_gauss(b, b + EXTRAPOLATION_SPAN, panels, PANEL_ORDER);
        let mut tail = ZERO;
        for (&t, &w) in ts.iter().zip(&ws) {
            let l = C64::from_polar((2.0 * t).exp(), ray.angle(self.theta_prime));
            tail += f.eval(l) * (2.0 * w);
        }
        (head * ray.orientation(), tail * ray.orientation())
    }
}

/// Breakdown of one contour evaluation.
#[derive(Clone, Debug)]
pub struct FunctionApplication {
    /// f(A)u.
    pub values: Vec<C64>,
    /// Contribution of nodes with μ > μ_max/2 plus the extrapolated tail.
    pub tail: Vec<C64>,
    /// Extrapolated head (μ < μ_min) contribution.
    pub head: Vec<C64>,
}

/// f(A)u for several functions sharing the resolvent applications.
/// Node contributions are accumulated in a fixed order, so results do not
/// depend on the number of worker threads.
pub fn apply_functions<R: ResolventOperator + ?Sized>(
    fs: &[HInftyFunction],
    q: &ContourQuadrature,
    op: &R,
    u: &[C64],
) -> Result<Vec<FunctionApplication>> {
    for f in fs {
        if let Some(c) = f.hstar_constant(q) {
            if !c.is_finite() {
                return Err(DbvpError::Precondition(format!("{} fails the H-infinity* mesh validation", f.name)));
            }
        }
    }
    let len = u.len();
    let pref = C64::new(0.0, 1.0 / (2.0 * PI));
    let mut out: Vec<FunctionApplication> = fs
        .iter()
        .map(|_| FunctionApplication { values: vec![ZERO; len], tail: vec![ZERO; len], head: vec![ZERO; len] })
        .collect();
    let resolve = |lambda: C64| {
        op.resolve(lambda, u).map_err(|e| DbvpError::Precondition(format!("resolvent failed at lambda = {lambda}: {e}")))
    };
    for chunk in q.nodes.chunks(BATCH) {
        let rs: Vec<Result<Vec<C64>>> = chunk.par_iter().map(|n| resolve(n.lambda)).collect();
        for (n, r) in chunk.iter().zip(rs) {
            let r = r?;
            let in_tail = n.mu > 0.5 * q.mu_max;
            for (f, acc) in fs.iter().zip(out.iter_mut()) {
                let c = pref * n.weight * f.eval(n.lambda);
                if c == ZERO {
                    continue;
                }
                for (a, v) in acc.values.iter_mut().zip(&r) {
                    *a += c * v;
                }
                if in_tail {
                    for (a, v) in acc.tail.iter_mut().zip(&r) {
                        *a += c * v;
                    }
                }
            }
        }
    }
    // Head/tail extrapolation per ray.
    for ray in [Ray::Lower, Ray::Upper] {
        let l0 = q.endpoint(ray, q.mu_min);
        let l1 = q.endpoint(ray, q.mu_max);
        let r0 = resolve(l0)?;
        let r1: Vec<C64> = resolve(l1)?.into_iter().map(|v| v * l1).collect();
        for (f, acc) in fs.iter().zip(out.iter_mut()) {
            let (h, t) = q.head_tail(f, ray);
            let (h, t) = (pref * h, pref * t);
            for k in 0..len {
                acc.values[k] += h * r0[k] + t * r1[k];
                acc.head[k] += h * r0[k];
                acc.tail[k] += t * r1[k];
            }
        }
    }
    Ok(out)
}

/// f(A)u by the contour rule.
pub fn apply_function<R: ResolventOperator + ?Sized>(
    f: &HInftyFunction,
    q: &ContourQuadrature,
    op: &R,
    u: &[C64],
) -> Result<Vec<C64>> {
    Ok(apply_functions(std::slice::from_ref(f), q, op, u)?.remove(0).values)
}

/// Per-member result of a bound probe.
#[derive(Clone, Debug, Serialize)]
pub struct MemberBound {
    pub name: String,
    pub eps: f64,
    pub sup_norm: f64,
    /// max over trials of ‖f(A)u‖/(‖f‖_∞‖u‖).
    pub ratio: f64,
}

/// C_est with its refinement check.
#[derive(Clone, Debug, Serialize)]
pub struct BoundProbe {
    pub members: Vec<MemberBound>,
    pub c_est: f64,
    /// C_est with N → 2N nodes per ray.
    pub c_est_refined: f64,
    /// |C_N − C_{2N}|/C_{2N}.
    pub refinement_delta: f64,
}

fn probe_once<R: ResolventOperator + ?Sized>(
    family: &[HInftyFunction],
    q: &ContourQuadrature,
    op: &R,
    trials: &[Vec<C64>],
) -> Result<Vec<f64>> {
    let mut ratios = vec![0.0f64; family.len()];
    for u in trials {
        let un = op.norm2(u);
        let apps = apply_functions(family, q, op, u)?;
        for (k, (f, a)) in family.iter().zip(&apps).enumerate() {
            ratios[k] = ratios[k].max(op.norm2(&a.values) / (f.sup_norm * un));
        }
    }
    Ok(ratios)
}

/// max over family members and random trial fields of
/// ‖f(A)u‖/(‖f‖_∞‖u‖) on contour `q` and on its 2N refinement. Fails with
/// an instability error if the refinement changes C_est by more than 1%.
pub fn bound_probe<R: ResolventOperator + ?Sized>(
    family: &[HInftyFunction],
    q: &ContourQuadrature,
    op: &R,
    trials: usize,
    seed: u64,
) -> Result<BoundProbe> {
    if family.is_empty() {
        return Err(DbvpError::Argument("bound_probe needs a nonempty family".into()));
    }
    let len = op.tgrid().points * op.ngrid().len();
    let fields: Vec<Vec<C64>> = (0..trials.max(1) as u64).map(|i| random_values(len, seed, i)).collect();
    let coarse = probe_once(family, q, op, &fields)?;
    let q2 = build_contour(q.theta_prime, q.mu_min, q.mu_max, 2 * q.n)?;
    let fine = probe_once(family, &q2, op, &fields)?;
    let c_est = coarse.iter().cloned().fold(0.0, f64::max);
    let c_ref = fine.iter().cloned().fold(0.0, f64::max);
    let delta = (c_est - c_ref).abs() / c_ref.max(f64::MIN_POSITIVE);
    let members = family
        .iter()
        .zip(&fine)
        .map(|(f, &r)| MemberBound { name: f.name.clone(), eps: f.epsilon.unwrap_or(0.0), sup_norm: f.sup_norm, ratio: r })
        .collect();
    let probe = BoundProbe { members, c_est, c_est_refined: c_ref, refinement_delta: delta };
    if !(c_est.is_finite() && delta <= 0.01) {
        return Err(DbvpError::Instability(format!(
            "C_est not stable under contour refinement: {c_est:.6e} (N) vs {c_ref:.6e} (2N)"
        )));
    }
    Ok(probe)
}
