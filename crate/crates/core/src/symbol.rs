//! Tangential symbols p(x′, ξ′, ζ) with Hörmander metadata, seminorm
//! estimation on dyadic shell lattices, truncated Leibniz products, Agmon
//! restriction ζ = μ and the Neumann-type hypoelliptic parametrix iteration.
//!
//! Symbols are evaluated as jets in the variables `(x′, ξ′, ζ)` (in that
//! order, `2d + 1` variables for tangential dimension `d`), so derivatives
//! are exact in [`DerivativeMode::Exact`]. Symbols given only by values use
//! central differences ([`DerivativeMode::FiniteDifference`]) and support
//! derivatives up to order 2.

use crate::error::{DbvpError, Result};
use crate::jet::Jet;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;
use std::sync::Arc;

/// Values below this are treated as exact zeros in slope fits (rounding floor).
pub const ROUNDING_FLOOR: f64 = 64.0 * f64::EPSILON;

/// Hörmander type (ρ, δ) with 0 ≤ δ ≤ ρ ≤ 1, δ < 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HType {
    pub rho: f64,
    pub delta: f64,
}

impl HType {
    pub const CLASSICAL: HType = HType { rho: 1.0, delta: 0.0 };
    pub const HALF: HType = HType { rho: 1.0, delta: 0.5 };

    pub fn new(rho: f64, delta: f64) -> Result<HType> {
        if !(0.0..=1.0).contains(&delta) || !(delta..=1.0).contains(&rho) || delta >= 1.0 {
            return Err(DbvpError::Argument(format!("invalid Hörmander type ({rho}, {delta})")));
        }
        Ok(HType { rho, delta })
    }

    /// Componentwise maximum.
    pub fn max(self, o: HType) -> HType {
        HType { rho: self.rho.max(o.rho), delta: self.delta.max(o.delta) }
    }

    pub fn gap(self) -> f64 {
        self.rho - self.delta
    }
}

/// How derivatives of a symbol are obtained.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum DerivativeMode {
    /// Exact (automatic) differentiation.
    Exact,
    /// Central differences with step `rel_step·⟨ξ′,ζ⟩` in covariables and
    /// `x_step` in x′.
    FiniteDifference { rel_step: f64, x_step: f64 },
}

impl DerivativeMode {
    pub fn default_fd() -> Self {
        DerivativeMode::FiniteDifference { rel_step: 1e-4, x_step: 1e-4 }
    }
}

/// Evaluation point (x′, ξ′, ζ).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SymbolPoint {
    pub x: Vec<f64>,
    pub xi: Vec<f64>,
    pub zeta: f64,
}

impl SymbolPoint {
    pub fn new(x: Vec<f64>, xi: Vec<f64>, zeta: f64) -> Self {
        SymbolPoint { x, xi, zeta }
    }
    pub fn dim(&self) -> usize {
        self.x.len()
    }
    /// |(ξ′, ζ)|.
    pub fn radius(&self) -> f64 {
        (self.xi.iter().map(|v| v * v).sum::<f64>() + self.zeta * self.zeta).sqrt()
    }
    /// ⟨ξ′, ζ⟩ = (1 + |ξ′|² + ζ²)^{1/2}.
    pub fn bracket(&self) -> f64 {
        (1.0 + self.radius().powi(2)).sqrt()
    }
    pub fn describe(&self) -> String {
        format!("(x'={:?}, xi'={:?}, zeta={})", self.x, self.xi, self.zeta)
    }
    /// Seed jets for all variables (x′, ξ′, ζ) at this point.
    pub fn seed(&self, order: usize) -> Vec<Jet> {
        let d = self.dim();
        let nv = 2 * d + 1;
        let mut v = Vec::with_capacity(nv);
        for (k, &x) in self.x.iter().enumerate() {
            v.push(Jet::var(nv, order, k, x));
        }
        for (k, &xi) in self.xi.iter().enumerate() {
            v.push(Jet::var(nv, order, d + k, xi));
        }
        v.push(Jet::var(nv, order, 2 * d, self.zeta));
        v
    }
}

/// Jet-valued symbol function.
pub type JetFn = dyn Fn(&SymbolPoint, usize) -> Result<Jet> + Send + Sync;
/// Value-only symbol function.
pub type ValueFn = dyn Fn(&SymbolPoint) -> C64 + Send + Sync;

#[derive(Clone)]
enum Kind {
    Jet(Arc<JetFn>),
    Values(Arc<ValueFn>),
}

/// Complex symbol of (x′, ξ′, ζ) with order and type metadata.
#[derive(Clone)]
pub struct TangentialSymbol {
    pub order: f64,
    pub htype: HType,
    /// Tangential dimension d = n − 1.
    pub dim: usize,
    pub mode: DerivativeMode,
    /// Set when ζ has been frozen by [`agmon_restrict`].
    pub frozen_zeta: Option<f64>,
    kind: Kind,
}

impl std::fmt::Debug for TangentialSymbol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TangentialSymbol")
            .field("order", &self.order)
            .field("htype", &self.htype)
            .field("dim", &self.dim)
            .field("mode", &self.mode)
            .field("frozen_zeta", &self.frozen_zeta)
            .finish()
    }
}

impl TangentialSymbol {
    /// Symbol with exact derivatives given by a jet function.
    pub fn from_jet_fn<F>(order: f64, htype: HType, dim: usize, f: F) -> Self
    where
        F: Fn(&SymbolPoint, usize) -> Result<Jet> + Send + Sync + 'static,
    {
        TangentialSymbol {
            order,
            htype,
            dim,
            mode: DerivativeMode::Exact,
            frozen_zeta: None,
            kind: Kind::Jet(Arc::new(f)),
        }
    }

    /// Symbol known by values only; derivatives by central differences.
    pub fn from_value_fn<F>(order: f64, htype: HType, dim: usize, mode: DerivativeMode, f: F) -> Self
    where
        F: Fn(&SymbolPoint) -> C64 + Send + Sync + 'static,
    {
        let mode = match mode {
            DerivativeMode::Exact => DerivativeMode::default_fd(),
            m => m,
        };
        TangentialSymbol { order, htype, dim, mode, frozen_zeta: None, kind: Kind::Values(Arc::new(f)) }
    }

    /// Constant symbol.
    pub fn constant(dim: usize, v: C64) -> Self {
        Self::from_jet_fn(0.0, HType::CLASSICAL, dim, move |pt, o| {
            Ok(Jet::constant(2 * pt.dim() + 1, o, v))
        })
    }

    /// ⟨ξ′, ζ⟩^m.
    pub fn bracket_power(dim: usize, m: f64) -> Self {
        Self::from_jet_fn(m, HType::CLASSICAL, dim, move |pt, o| {
            let v = pt.seed(o);
            let d = pt.dim();
            let mut s = Jet::constant(2 * d + 1, o, C64::new(1.0, 0.0));
            for j in v.iter().skip(d) {
                s = &s + &(j * j);
            }
            Ok(s.powf(m / 2.0))
        })
    }

    pub fn nvars(&self) -> usize {
        2 * self.dim + 1
    }

    /// Jet of order `order` at `pt`.
    pub fn jet(&self, pt: &SymbolPoint, order: usize) -> Result<Jet> {
        if pt.dim() != self.dim || pt.xi.len() != self.dim {
            return Err(DbvpError::Argument(format!(
                "symbol of dimension {} evaluated at {}",
                self.dim,
                pt.describe()
            )));
        }
        match &self.kind {
            Kind::Jet(f) => f(pt, order),
            Kind::Values(g) => fd_jet(g.as_ref(), pt, order, self.mode),
        }
    }

    /// Value at `pt`.
    pub fn eval(&self, pt: &SymbolPoint) -> Result<C64> {
        Ok(self.jet(pt, 0)?.value())
    }

    /// ∂^β_{x′} ∂^α_{(ξ′,ζ)} at `pt`; `alpha` has length d+1, `beta` length d.
    pub fn derivative(&self, pt: &SymbolPoint, alpha: &[u8], beta: &[u8]) -> Result<C64> {
        let mi = full_index(self.dim, alpha, beta)?;
        let ord: usize = mi.iter().map(|&a| a as usize).sum();
        Ok(self.jet(pt, ord)?.derivative(&mi))
    }
}

fn full_index(dim: usize, alpha: &[u8], beta: &[u8]) -> Result<Vec<u8>> {
    if alpha.len() != dim + 1 || beta.len() != dim {
        return Err(DbvpError::Argument(format!(
            "multi-index lengths ({}, {}) do not match dimension {dim}",
            alpha.len(),
            beta.len()
        )));
    }
    let mut mi = beta.to_vec();
    mi.extend_from_slice(alpha);
    Ok(mi)
}

fn fd_jet(g: &ValueFn, pt: &SymbolPoint, order: usize, mode: DerivativeMode) -> Result<Jet> {
    let (rel, xs) = match mode {
        DerivativeMode::FiniteDifference { rel_step, x_step } => (rel_step, x_step),
        DerivativeMode::Exact => (1e-4, 1e-4),
    };
    if order > 2 {
        return Err(DbvpError::Unsupported(format!(
            "finite-difference symbols support derivative order <= 2 (requested {order})"
        )));
    }
    let d = pt.dim();
    let nv = 2 * d + 1;
    let br = pt.bracket();
    let steps: Vec<f64> = (0..nv).map(|v| if v < d { xs } else { rel * br }).collect();
    let shifted = |moves: &[(usize, f64)]| -> C64 {
        let mut q = pt.clone();
        for &(v, s) in moves {
            let h = s * steps[v];
            if v < d {
                q.x[v] += h;
            } else if v < 2 * d {
                q.xi[v - d] += h;
            } else {
                q.zeta += h;
            }
        }
        g(&q)
    };
    let f0 = g(pt);
    let mut j = Jet::constant(nv, order, f0);
    if order == 0 {
        return Ok(j);
    }
    let space = j.space().clone();
    let mut c = j.coeffs().to_vec();
    for (k, m) in space.monomials().iter().enumerate().skip(1) {
        let vars: Vec<usize> = m
            .iter()
            .enumerate()
            .flat_map(|(v, &e)| std::iter::repeat_n(v, e as usize))
            .collect();
        c[k] = match vars.as_slice() {
            [v] => (shifted(&[(*v, 1.0)]) - shifted(&[(*v, -1.0)])) / (2.0 * steps[*v]),
            [v, w] if v == w => {
                (shifted(&[(*v, 1.0)]) - f0 * 2.0 + shifted(&[(*v, -1.0)])) / (steps[*v] * steps[*v]) / 2.0
            }
            [v, w] => {
                (shifted(&[(*v, 1.0), (*w, 1.0)]) - shifted(&[(*v, 1.0), (*w, -1.0)])
                    - shifted(&[(*v, -1.0), (*w, 1.0)])
                    + shifted(&[(*v, -1.0), (*w, -1.0)]))
                    / (4.0 * steps[*v] * steps[*w])
            }
            _ => C64::new(0.0, 0.0),
        };
    }
    j.coeffs_mut().copy_from_slice(&c);
    Ok(j)
}

/// Sample lattice: x′ points × dyadic shells × unit directions in (ξ′, ζ)
/// with ζ ≥ 0.
#[derive(Clone, Debug, Serialize)]
pub struct SymbolLattice {
    pub dim: usize,
    pub x_points: Vec<Vec<f64>>,
    pub shells: Vec<f64>,
    pub directions: Vec<Vec<f64>>,
}

/// Default base radius R₀.
pub const DEFAULT_R0: f64 = 4.0;
/// Default number of dyadic shells J.
pub const DEFAULT_SHELLS: usize = 6;

fn default_directions(dim: usize, count: usize) -> Vec<Vec<f64>> {
    if dim == 1 {
        let k = count.max(3);
        return (0..k)
            .map(|j| {
                let a = std::f64::consts::PI * j as f64 / (k - 1) as f64;
                vec![a.cos(), a.sin()]
            })
            .collect();
    }
    // Components of ξ′ in {−1, 0, 1}, ζ in {0, 1}; normalized, nonzero.
    let mut out: Vec<Vec<f64>> = Vec::new();
    let total = 3usize.pow(dim as u32);
    for zeta in [0.0, 1.0] {
        for code in 0..total {
            let mut v = Vec::with_capacity(dim + 1);
            let mut c = code;
            for _ in 0..dim {
                v.push((c % 3) as f64 - 1.0);
                c /= 3;
            }
            v.push(zeta);
            let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if n > 0.0 {
                out.push(v.iter().map(|a| a / n).collect());
            }
        }
    }
    out
}

impl SymbolLattice {
    /// Lattice with shells `r0·2^j`, `j < shells`.
    pub fn new(dim: usize, x_points: Vec<Vec<f64>>, r0: f64, shells: usize, directions: usize) -> Result<Self> {
        if !(r0 > 0.0) {
            return Err(DbvpError::Argument("lattice base radius must be positive".into()));
        }
        if shells < 3 {
            return Err(DbvpError::Argument("a lattice needs at least 3 shells".into()));
        }
        if x_points.is_empty() || x_points.iter().any(|p| p.len() != dim) {
            return Err(DbvpError::Argument("lattice x' points missing or of wrong dimension".into()));
        }
        let sh = (0..shells).map(|j| r0 * 2f64.powi(j as i32)).collect();
        Ok(SymbolLattice { dim, x_points, shells: sh, directions: default_directions(dim, directions) })
    }

    /// Defaults R₀ = 4, J = 6, 9 directions (d = 1).
    pub fn with_defaults(dim: usize, x_points: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(dim, x_points, DEFAULT_R0, DEFAULT_SHELLS, 9)
    }

    /// Uniform x′ grid on the torus [0, L)^d (d = 1 only uses one axis).
    pub fn torus_points(dim: usize, length: f64, per_axis: usize) -> Vec<Vec<f64>> {
        let mut out = vec![vec![]];
        for _ in 0..dim {
            let mut next = Vec::new();
            for p in &out {
                for k in 0..per_axis {
                    let mut q = p.clone();
                    q.push(length * k as f64 / per_axis as f64);
                    next.push(q);
                }
            }
            out = next;
        }
        out
    }

    /// Points `a + t/√r` for anchors `a`, offsets `t` and shell radii `r`
    /// (d = 1): resolves the √⟨ξ⟩-scale boundary layers of degenerate
    /// symbols near zeros of φ₁ identically on every shell.
    pub fn scaled_points(anchors: &[f64], offsets: &[f64], shells: &[f64]) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        for &a in anchors {
            for &r in shells {
                for &t in offsets {
                    out.push(vec![a + t / r.sqrt()]);
                }
            }
        }
        out
    }

    /// Check the structural invariants.
    pub fn validate(&self) -> Result<()> {
        if self.shells.len() < 3 || self.shells.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(DbvpError::Argument("shells must be strictly increasing, at least 3".into()));
        }
        Ok(())
    }

    /// All points on shell index `j`.
    pub fn shell_points(&self, j: usize) -> Vec<SymbolPoint> {
        let r = self.shells[j];
        let mut out = Vec::with_capacity(self.x_points.len() * self.directions.len());
        for x in &self.x_points {
            for dir in &self.directions {
                let xi = dir[..self.dim].iter().map(|v| v * r).collect();
                out.push(SymbolPoint::new(x.clone(), xi, dir[self.dim] * r));
            }
        }
        out
    }

    /// All lattice points.
    pub fn all_points(&self) -> Vec<SymbolPoint> {
        (0..self.shells.len()).flat_map(|j| self.shell_points(j)).collect()
    }

    /// Refinement keeping every existing point: adds x′ midpoints between
    /// consecutive points and bisected directions.
    pub fn refine(&self) -> SymbolLattice {
        let mut xs = self.x_points.clone();
        for w in self.x_points.windows(2) {
            xs.push(w[0].iter().zip(&w[1]).map(|(a, b)| 0.5 * (a + b)).collect());
        }
        let mut dirs = self.directions.clone();
        for w in self.directions.windows(2) {
            let m: Vec<f64> = w[0].iter().zip(&w[1]).map(|(a, b)| a + b).collect();
            let n = m.iter().map(|a| a * a).sum::<f64>().sqrt();
            if n > 1e-12 {
                dirs.push(m.iter().map(|a| a / n).collect());
            }
        }
        SymbolLattice { dim: self.dim, x_points: xs, shells: self.shells.clone(), directions: dirs }
    }
}

/// sup over the lattice of |∂^β_{x′}∂^α_{(ξ′,ζ)} s|·⟨ξ′,ζ⟩^{−m+ρ|α|−δ|β|}.
pub fn estimate_seminorm(s: &TangentialSymbol, alpha: &[u8], beta: &[u8], lattice: &SymbolLattice) -> Result<f64> {
    let mi = full_index(s.dim, alpha, beta)?;
    let na: f64 = alpha.iter().map(|&a| a as f64).sum();
    let nb: f64 = beta.iter().map(|&a| a as f64).sum();
    let expo = -s.order + s.htype.rho * na - s.htype.delta * nb;
    let ord: usize = mi.iter().map(|&a| a as usize).sum();
    let pts = lattice.all_points();
    let vals: Vec<Result<f64>> = pts
        .par_iter()
        .map(|pt| {
            let d = s.jet(pt, ord)?.derivative(&mi);
            if !(d.re.is_finite() && d.im.is_finite()) {
                return Err(DbvpError::eval(pt.describe(), "non-finite symbol derivative"));
            }
            Ok(d.norm() * pt.bracket().powf(expo))
        })
        .collect();
    let mut sup = 0.0f64;
    for v in vals {
        sup = sup.max(v?);
    }
    Ok(sup)
}

/// Multi-indices of length `len` with |α| < n (graded order).
pub fn multi_indices_below(len: usize, n: usize) -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    for total in 0..n {
        fn rec(len: usize, left: usize, cur: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
            if cur.len() == len {
                if left == 0 {
                    out.push(cur.clone());
                }
                return;
            }
            for e in (0..=left).rev() {
                cur.push(e as u8);
                rec(len, left - e, cur, out);
                cur.pop();
            }
        }
        rec(len, total, &mut Vec::new(), &mut out);
    }
    out
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |a, k| a * k as f64)
}

/// Σ_{|α|<N} (1/α!) ∂^α_{ξ′} P · D^α_{x′} Q on jets of sufficient order,
/// returned at order `order` (D = −i∂).
pub fn leibniz_jets(p: &Jet, q: &Jet, dim: usize, n_terms: usize, order: usize) -> Jet {
    let nv = 2 * dim + 1;
    let mut acc = Jet::constant(nv, order, C64::new(0.0, 0.0));
    for alpha in multi_indices_below(dim, n_terms) {
        let k: usize = alpha.iter().map(|&a| a as usize).sum();
        let mut dxi = vec![0u8; nv];
        let mut dx = vec![0u8; nv];
        for (j, &a) in alpha.iter().enumerate() {
            dx[j] = a;
            dxi[dim + j] = a;
        }
        let fac: f64 = alpha.iter().map(|&a| factorial(a as usize)).product();
        let mi = C64::new(0.0, -1.0).powi(k as i32) / fac;
        let term = &p.diff_multi(&dxi).truncate(order) * &q.diff_multi(&dx).truncate(order);
        acc = &acc + &term.scale(mi);
    }
    acc
}

/// Truncated Leibniz product p #_N q.
pub fn leibniz_truncate(p: &TangentialSymbol, q: &TangentialSymbol, n: usize) -> Result<TangentialSymbol> {
    if n == 0 {
        return Err(DbvpError::Argument("Leibniz truncation order N must be >= 1".into()));
    }
    if p.dim != q.dim {
        return Err(DbvpError::Argument("Leibniz product of symbols of different dimension".into()));
    }
    let (pc, qc) = (p.clone(), q.clone());
    let dim = p.dim;
    let mode = if p.mode == DerivativeMode::Exact && q.mode == DerivativeMode::Exact {
        DerivativeMode::Exact
    } else {
        DerivativeMode::default_fd()
    };
    let mut out = TangentialSymbol::from_jet_fn(p.order + q.order, p.htype.max(q.htype), dim, move |pt, o| {
        let pj = pc.jet(pt, o + n - 1)?;
        let qj = qc.jet(pt, o + n - 1)?;
        Ok(leibniz_jets(&pj, &qj, dim, n, o))
    });
    out.mode = mode;
    out.frozen_zeta = p.frozen_zeta.or(q.frozen_zeta);
    Ok(out)
}

/// Agmon restriction: (x′, ξ′) ↦ p(x′, ξ′, μ). Jets of the result carry no
/// ζ-dependence (all coefficients with positive ζ-degree vanish).
pub fn agmon_restrict(p: &TangentialSymbol, mu: f64) -> TangentialSymbol {
    let pc = p.clone();
    let dim = p.dim;
    let mut out = TangentialSymbol::from_jet_fn(p.order, p.htype, dim, move |pt, o| {
        let mut q = pt.clone();
        q.zeta = mu;
        Ok(pc.jet(&q, o)?.drop_var(2 * dim))
    });
    out.mode = p.mode;
    out.frozen_zeta = Some(mu);
    out
}

/// Quintic smoothstep cutoff χ(r): 0 for r ≤ R, 1 for r ≥ 2R, as a jet in
/// the radius jet `r`.
pub fn cutoff_jet(r: &Jet, big_r: f64) -> Jet {
    let t0 = (r.value().re - big_r) / big_r;
    let nv = r.nvars();
    let o = r.order();
    if t0 <= 0.0 {
        return Jet::constant(nv, o, C64::new(0.0, 0.0));
    }
    if t0 >= 1.0 {
        return Jet::constant(nv, o, C64::new(1.0, 0.0));
    }
    let t = r.add_scalar(C64::new(-big_r, 0.0)).scale(C64::new(1.0 / big_r, 0.0));
    let t3 = t.powi(3);
    let poly = (&t * &t.scale(C64::new(6.0, 0.0))).add_scalar(C64::new(10.0, 0.0))
        - t.scale(C64::new(15.0, 0.0));
    &t3 * &poly
}

/// Radius jet |ξ′, ζ| (ζ constant when frozen).
fn radius_jet(pt: &SymbolPoint, order: usize, frozen: Option<f64>) -> Jet {
    let v = pt.seed(order);
    let d = pt.dim();
    let mut s = Jet::constant(2 * d + 1, order, C64::new(0.0, 0.0));
    for j in v.iter().skip(d).take(d) {
        s = &s + &(j * j);
    }
    match frozen {
        Some(mu) => s = s.add_scalar(C64::new(mu * mu, 0.0)),
        None => s = &s + &(&v[2 * d] * &v[2 * d]),
    }
    s.sqrt()
}

/// Parametrix q_N of p by q₀ = χ/p, q_{k+1} = q_k + q_k·(1 − p #_{k+1} q_k).
///
/// Evaluation checks |p| ≥ c wherever |ξ′, ζ| ≥ R and fails with the
/// offending point otherwise.
pub fn hypoelliptic_parametrix(
    p: &TangentialSymbol,
    n: usize,
    c: f64,
    big_r: f64,
    htype: HType,
) -> Result<TangentialSymbol> {
    if n == 0 {
        return Err(DbvpError::Argument("parametrix order N must be >= 1".into()));
    }
    if !(big_r > 0.0) || !(c > 0.0) {
        return Err(DbvpError::Argument("parametrix needs c > 0 and R > 0".into()));
    }
    let dim = p.dim;
    let frozen = p.frozen_zeta;
    let pc = p.clone();
    let mut q = TangentialSymbol::from_jet_fn(-p.order, htype, dim, move |pt, o| {
        let r = radius_jet(pt, o, frozen);
        let rv = r.value().re;
        if rv <= big_r {
            return Ok(Jet::constant(2 * dim + 1, o, C64::new(0.0, 0.0)));
        }
        let pj = pc.jet(pt, o)?;
        if pj.value().norm() < c {
            return Err(DbvpError::Precondition(format!(
                "|p| = {:.6e} < c = {c} at {} (radius {rv:.4} >= R = {big_r})",
                pj.value().norm(),
                pt.describe()
            )));
        }
        Ok(&cutoff_jet(&r, big_r) * &pj.recip())
    });
    q.frozen_zeta = frozen;
    for k in 0..n {
        let (qk, pk) = (q.clone(), p.clone());
        let mut next = TangentialSymbol::from_jet_fn(-p.order, htype, dim, move |pt, o| {
            let qj = qk.jet(pt, o + k)?;
            let pj = pk.jet(pt, o + k)?;
            let comp = leibniz_jets(&pj, &qj, dim, k + 1, o);
            let one_minus = (-&comp).add_scalar(C64::new(1.0, 0.0));
            let qo = qj.truncate(o);
            Ok(&qo + &(&qo * &one_minus))
        });
        next.frozen_zeta = frozen;
        q = next;
    }
    q.mode = p.mode;
    Ok(q)
}

/// Residual symbol 1 − p #_{terms} q.
pub fn parametrix_residual(p: &TangentialSymbol, q: &TangentialSymbol, terms: usize) -> Result<TangentialSymbol> {
    let comp = leibniz_truncate(p, q, terms)?;
    let mut out = TangentialSymbol::from_jet_fn(0.0, comp.htype, p.dim, move |pt, o| {
        Ok((-&comp.jet(pt, o)?).add_scalar(C64::new(1.0, 0.0)))
    });
    out.frozen_zeta = p.frozen_zeta;
    Ok(out)
}

/// Result of a log–log shell fit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Slope {
    Finite(f64),
    /// All sampled sups are zero (at rounding level): slope −∞.
    IdenticallyZero,
}

impl Slope {
    /// Slope value with −∞ for identically zero data.
    pub fn value(&self) -> f64 {
        match self {
            Slope::Finite(s) => *s,
            Slope::IdenticallyZero => f64::NEG_INFINITY,
        }
    }
}

/// Least-squares slope of (ln x, ln y).
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Per-shell sup of |s| over the lattice, for shells with radius ≥ `min_radius`.
pub fn shell_sups(s: &TangentialSymbol, lattice: &SymbolLattice, min_radius: f64) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    for (j, &r) in lattice.shells.iter().enumerate() {
        if r < min_radius {
            continue;
        }
        let pts = lattice.shell_points(j);
        let vals: Vec<Result<f64>> = pts
            .par_iter()
            .map(|pt| {
                let v = s.eval(pt)?;
                if !(v.re.is_finite() && v.im.is_finite()) {
                    return Err(DbvpError::eval(pt.describe(), "non-finite symbol value"));
                }
                Ok(v.norm())
            })
            .collect();
        let mut sup = 0.0f64;
        for v in vals {
            sup = sup.max(v?);
        }
        out.push((r, sup));
    }
    Ok(out)
}

/// Fit the log-sup slope over the shells with radius ≥ `min_radius`.
/// Values at or below the rounding floor (relative to `scale`) count as 0.
pub fn fit_shell_slope(s: &TangentialSymbol, lattice: &SymbolLattice, min_radius: f64, scale: f64) -> Result<Slope> {
    let sups = shell_sups(s, lattice, min_radius)?;
    if sups.len() < 3 {
        return Err(DbvpError::Argument(format!(
            "slope fit needs at least 3 shells with radius >= {min_radius}"
        )));
    }
    Ok(slope_from_sups(&sups, scale))
}

/// Slope from (radius, sup) pairs, treating rounding-level sups as zero.
pub fn slope_from_sups(sups: &[(f64, f64)], scale: f64) -> Slope {
    let floor = ROUNDING_FLOOR * scale.max(f64::MIN_POSITIVE);
    let pos: Vec<(f64, f64)> = sups.iter().copied().filter(|&(_, v)| v > floor).collect();
    if pos.len() < 2 {
        return Slope::IdenticallyZero;
    }
    let xs: Vec<f64> = pos.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pos.iter().map(|p| p.1).collect();
    Slope::Finite(loglog_slope(&xs, &ys))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lattice1() -> SymbolLattice {
        SymbolLattice::with_defaults(1, SymbolLattice::torus_points(1, std::f64::consts::PI, 8)).unwrap()
    }

    /// p(x, ξ, ζ) = (2 + sin x)(1 + ξ² + ζ²)
    fn variable_p() -> TangentialSymbol {
        TangentialSymbol::from_jet_fn(2.0, HType::CLASSICAL, 1, |pt, o| {
            let v = pt.seed(o);
            let a = v[0].sin().add_scalar(C64::new(2.0, 0.0));
            let b = (&v[1] * &v[1] + &v[2] * &v[2]).add_scalar(C64::new(1.0, 0.0));
            Ok(&a * &b)
        })
    }

    /// q(x, ξ, ζ) = cos(x) ξ / ⟨ξ, ζ⟩
    fn variable_q() -> TangentialSymbol {
        TangentialSymbol::from_jet_fn(0.0, HType::CLASSICAL, 1, |pt, o| {
            let v = pt.seed(o);
            let br = (&v[1] * &v[1] + &v[2] * &v[2]).add_scalar(C64::new(1.0, 0.0)).sqrt();
            Ok(&(&v[0].cos() * &v[1]) * &br.recip())
        })
    }

    #[test]
    fn seminorm_of_bracket_squared_is_one() {
        let s = TangentialSymbol::bracket_power(1, 2.0);
        let v = estimate_seminorm(&s, &[0, 0], &[0], &lattice1()).unwrap();
        assert!((v - 1.0).abs() < 1e-14);
        let one = TangentialSymbol::constant(1, C64::new(1.0, 0.0));
        assert_eq!(estimate_seminorm(&one, &[0, 0], &[0], &lattice1()).unwrap(), 1.0);
    }

    #[test]
    fn seminorm_reports_nonfinite_point() {
        let s = TangentialSymbol::from_value_fn(0.0, HType::CLASSICAL, 1, DerivativeMode::default_fd(), |pt| {
            if pt.zeta > 60.0 { C64::new(f64::NAN, 0.0) } else { C64::new(1.0, 0.0) }
        });
        match estimate_seminorm(&s, &[0, 0], &[0], &lattice1()) {
            Err(DbvpError::Evaluation { point, .. }) => assert!(point.contains("zeta")),
            other => panic!("expected evaluation error, got {other:?}"),
        }
    }

    #[test]
    fn leibniz_toy_x_xi() {
        // p = ξ, q = x, N = 2: xξ − i.
        let p = TangentialSymbol::from_jet_fn(1.0, HType::CLASSICAL, 1, |pt, o| Ok(pt.seed(o)[1].clone()));
        let q = TangentialSymbol::from_jet_fn(0.0, HType::CLASSICAL, 1, |pt, o| Ok(pt.seed(o)[0].clone()));
        let r = leibniz_truncate(&p, &q, 2).unwrap();
        let pt = SymbolPoint::new(vec![0.7], vec![3.0], 1.0);
        let v = r.eval(&pt).unwrap();
        assert!((v - C64::new(2.1, -1.0)).norm() < 1e-15);
        assert!(leibniz_truncate(&p, &q, 0).is_err());
    }

    #[test]
    fn leibniz_n1_is_pointwise_product() {
        let p = variable_p();
        let q = TangentialSymbol::bracket_power(1, -1.0);
        let r = leibniz_truncate(&p, &q, 1).unwrap();
        for pt in lattice1().all_points().iter().step_by(7) {
            let a = r.eval(pt).unwrap();
            let b = p.eval(pt).unwrap() * q.eval(pt).unwrap();
            assert!((a - b).norm() <= 1e-14 * b.norm());
        }
        assert_eq!(r.order, 1.0);
    }

    #[test]
    fn agmon_commutes_with_leibniz() {
        let p = variable_p();
        let q = variable_q();
        for n in 1..=4 {
            for mu in [0.0, 1.5, 20.0] {
                let a = agmon_restrict(&leibniz_truncate(&p, &q, n).unwrap(), mu);
                let b = leibniz_truncate(&agmon_restrict(&p, mu), &agmon_restrict(&q, mu), n).unwrap();
                for pt in lattice1().all_points().iter().step_by(5) {
                    let d = (a.eval(pt).unwrap() - b.eval(pt).unwrap()).norm();
                    assert!(d <= 1e-10, "n={n} mu={mu} diff={d}");
                }
            }
        }
    }

    #[test]
    fn agmon_restrict_value() {
        let p = TangentialSymbol::bracket_power(1, 2.0);
        let r = agmon_restrict(&p, 2.0);
        let v = r.eval(&SymbolPoint::new(vec![0.0], vec![0.0], 123.0)).unwrap();
        assert!((v.re - 5.0).abs() < 1e-15);
        // ζ-derivatives vanish after restriction.
        let d = r.derivative(&SymbolPoint::new(vec![0.0], vec![1.0], 0.0), &[0, 1], &[0]).unwrap();
        assert_eq!(d.norm(), 0.0);
    }

    #[test]
    fn exact_derivatives_match_central_differences() {
        let p = variable_q();
        let fd = {
            let pc = p.clone();
            TangentialSymbol::from_value_fn(0.0, HType::CLASSICAL, 1, DerivativeMode::default_fd(), move |pt| {
                pc.eval(pt).unwrap()
            })
        };
        for pt in lattice1().all_points().iter().step_by(3) {
            for (alpha, beta) in [([1u8, 0u8], [0u8]), ([0, 1], [0]), ([0, 0], [1]), ([1, 0], [1]), ([2, 0], [0]), ([0, 0], [2])] {
                let e = p.derivative(pt, &alpha, &beta).unwrap();
                let f = fd.derivative(pt, &alpha, &beta).unwrap();
                let ord = alpha.iter().chain(beta.iter()).map(|&a| a as i32).sum::<i32>();
                let scale = pt.bracket().powi(-(alpha[0] as i32 + alpha[1] as i32)).max(1e-3);
                // O(h²) with h = 1e-4 relative; second differences lose ~1e-8.
                let tol = if ord == 1 { 1e-7 } else { 1e-5 };
                assert!((e - f).norm() <= tol * (1.0 + scale), "{alpha:?} {beta:?} at {pt:?}: {e} vs {f}");
            }
        }
        assert!(fd.derivative(&SymbolPoint::new(vec![0.1], vec![1.0], 1.0), &[3, 0], &[0]).is_err());
    }

    #[test]
    fn parametrix_of_constant_and_bracket() {
        let lat = lattice1();
        let two = TangentialSymbol::constant(1, C64::new(2.0, 0.0));
        let q = hypoelliptic_parametrix(&two, 2, 1.0, 4.0, HType::CLASSICAL).unwrap();
        let pt = SymbolPoint::new(vec![0.3], vec![10.0], 0.0);
        assert!((q.eval(&pt).unwrap() - C64::new(0.5, 0.0)).norm() < 1e-15);
        let res = parametrix_residual(&two, &q, 3).unwrap();
        assert_eq!(fit_shell_slope(&res, &lat, 8.0, 1.0).unwrap(), Slope::IdenticallyZero);

        let p = TangentialSymbol::bracket_power(1, 1.0);
        let q = hypoelliptic_parametrix(&p, 3, 1.0, 4.0, HType::CLASSICAL).unwrap();
        let v = q.eval(&pt).unwrap();
        assert!((v.re - 1.0 / pt.bracket()).abs() < 1e-14);
        let res = parametrix_residual(&p, &q, 4).unwrap();
        assert!(fit_shell_slope(&res, &lat, 8.0, 1.0).unwrap().value() <= -3.0 + 0.15);
    }

    #[test]
    fn parametrix_variable_elliptic_residual_order() {
        // Elliptic x-dependent symbol of type (1,0): residual order ≤ −N.
        let lat = lattice1();
        let p = TangentialSymbol::from_jet_fn(1.0, HType::CLASSICAL, 1, |pt, o| {
            let v = pt.seed(o);
            let br = (&v[1] * &v[1] + &v[2] * &v[2]).add_scalar(C64::new(1.0, 0.0)).sqrt();
            let a = (&v[0].sin() * &v[1]).scale(C64::new(0.0, 0.5));
            Ok(&(&v[0].cos().scale(C64::new(0.5, 0.0)).add_scalar(C64::new(1.5, 0.0)) * &br) + &a)
        });
        for n in [1usize, 2] {
            let q = hypoelliptic_parametrix(&p, n, 0.5, 4.0, HType::CLASSICAL).unwrap();
            let res = parametrix_residual(&p, &q, n + 1).unwrap();
            let s = fit_shell_slope(&res, &lat, 8.0, 1.0).unwrap().value();
            assert!(s <= -(n as f64) + 0.15, "N={n}: slope {s}");
        }
    }

    #[test]
    fn parametrix_precondition_error() {
        let p = TangentialSymbol::constant(1, C64::new(0.1, 0.0));
        let q = hypoelliptic_parametrix(&p, 1, 1.0, 4.0, HType::CLASSICAL).unwrap();
        let e = q.eval(&SymbolPoint::new(vec![0.0], vec![10.0], 0.0));
        assert!(matches!(e, Err(DbvpError::Precondition(_))));
    }

    #[test]
    fn refinement_keeps_points() {
        let lat = lattice1();
        let r = lat.refine();
        assert!(r.x_points.len() > lat.x_points.len());
        assert!(r.directions.len() > lat.directions.len());
        for x in &lat.x_points {
            assert!(r.x_points.contains(x));
        }
        assert!(SymbolLattice::new(1, vec![vec![0.0]], 4.0, 2, 9).is_err());
    }

    #[test]
    fn cutoff_is_smoothstep() {
        let r = Jet::var(1, 2, 0, 6.0);
        let c = cutoff_jet(&r, 4.0);
        assert!((c.value().re - 0.5).abs() < 1e-15);
        assert!((c.derivative(&[1]).re - 30.0 * 0.0625 / 4.0).abs() < 1e-14);
    }
}
