//! Roots κ±_θ of the boundary quadratic in ξ_n and ellipticity margins.
//!
//! At x_n = 0 the parameter-dependent symbol a_θ(x′, 0, ξ′, ξ_n, ζ) is a
//! quadratic c₂ξ_n² + c₁ξ_n + c₀. Its root in the open upper half-plane is
//! iκ⁺, the one in the lower half-plane −iκ⁻ (so Re κ± > 0).

use crate::error::{DbvpError, Result};
use crate::jet::Jet;
use crate::operator::EllipticOperatorSpec;
use crate::symbol::{HType, SymbolLattice, SymbolPoint, TangentialSymbol};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;

/// Largest admissible |θ| (the sector degenerates at π).
pub const THETA_MAX: f64 = std::f64::consts::PI - 0.01;

/// Coefficients (c₂, c₁, c₀) of c₂ξ_n² + c₁ξ_n + c₀.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Quadratic {
    pub c2: C64,
    pub c1: C64,
    pub c0: C64,
}

impl Quadratic {
    pub fn eval(&self, t: C64) -> C64 {
        (self.c2 * t + self.c1) * t + self.c0
    }
    /// |q(t)| / (|c₂||t|² + |c₁||t| + |c₀|).
    pub fn relative_residual(&self, t: C64) -> f64 {
        let scale = self.c2.norm() * t.norm_sqr() + self.c1.norm() * t.norm() + self.c0.norm();
        self.eval(t).norm() / scale.max(f64::MIN_POSITIVE)
    }
}

/// Root pair with metadata.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KappaPair {
    pub kplus: C64,
    pub kminus: C64,
    /// a^{nn}(x′, 0) (the leading coefficient c₂).
    pub a_n: C64,
    pub theta: f64,
    /// Ellipticity margin ω, if computed (0 otherwise).
    pub margin: f64,
}

impl KappaPair {
    /// Pair from explicit values (used for frozen model problems).
    pub fn new(kplus: C64, kminus: C64, a_n: C64) -> Self {
        KappaPair { kplus, kminus, a_n, theta: 0.0, margin: 0.0 }
    }
    /// Symmetric real pair κ± = κ, a_n = 1.
    pub fn symmetric(kappa: f64) -> Self {
        Self::new(C64::new(kappa, 0.0), C64::new(kappa, 0.0), C64::new(1.0, 0.0))
    }
    /// Check Re κ± > 0.
    pub fn check_decay(&self) -> Result<()> {
        if !(self.kplus.re > 0.0 && self.kminus.re > 0.0) {
            return Err(DbvpError::DegeneratePair(format!(
                "Re kappa must be positive (kplus = {}, kminus = {})",
                self.kplus, self.kminus
            )));
        }
        Ok(())
    }
}

/// Check |θ| ≤ π − 0.01.
pub fn validate_theta(theta: f64) -> Result<()> {
    if !(theta.abs() <= THETA_MAX) {
        return Err(DbvpError::Argument(format!("theta = {theta} outside [-(pi-0.01), pi-0.01]")));
    }
    Ok(())
}

fn check_point(spec: &EllipticOperatorSpec, x: &[f64], xi: &[f64]) -> Result<()> {
    if x.len() != spec.n - 1 || xi.len() != spec.n - 1 {
        return Err(DbvpError::Argument(format!(
            "boundary point needs {} tangential coordinates",
            spec.n - 1
        )));
    }
    Ok(())
}

/// Coefficients of a_θ(x′, 0, ξ′, ·, ζ) as a polynomial in ξ_n. With
/// `principal_only` the b and c⁰ (and shift) contributions are dropped.
pub fn boundary_quadratic(
    spec: &EllipticOperatorSpec,
    x: &[f64],
    xi: &[f64],
    zeta: f64,
    theta: f64,
    principal_only: bool,
) -> Result<Quadratic> {
    check_point(spec, x, xi)?;
    let n = spec.n;
    let mut xf = x.to_vec();
    xf.push(0.0);
    let a = spec.a_at(&xf);
    let d = n - 1;
    let mut c1 = 0.0;
    let mut c0 = 0.0;
    for k in 0..d {
        c1 += 2.0 * a[k][d] * xi[k];
        for l in 0..d {
            c0 += a[k][l] * xi[k] * xi[l];
        }
    }
    if !principal_only {
        let b = spec.b_at(&xf);
        c1 += b[d];
        for k in 0..d {
            c0 += b[k] * xi[k];
        }
        c0 += spec.c_at(&xf);
    }
    let c0 = C64::new(c0, 0.0) + C64::from_polar(zeta * zeta, theta);
    Ok(Quadratic { c2: C64::new(a[d][d], 0.0), c1: C64::new(c1, 0.0), c0 })
}

/// Jet version in the symbol variables (x′, ξ′, ζ).
pub fn boundary_quadratic_jet(
    spec: &EllipticOperatorSpec,
    pt: &SymbolPoint,
    order: usize,
    theta: f64,
    principal_only: bool,
) -> Result<(Jet, Jet, Jet)> {
    check_point(spec, &pt.x, &pt.xi)?;
    let d = spec.n - 1;
    let nv = 2 * d + 1;
    let v = pt.seed(order);
    let mut xj: Vec<Jet> = v[..d].to_vec();
    xj.push(Jet::constant(nv, order, C64::new(0.0, 0.0)));
    let zero = || Jet::constant(nv, order, C64::new(0.0, 0.0));
    let mut c1 = zero();
    let mut c0 = zero();
    for k in 0..d {
        let akn = spec.a_jet(k, d, &xj);
        c1 = &c1 + &(&akn * &v[d + k]).scale(C64::new(2.0, 0.0));
        for l in 0..d {
            c0 = &c0 + &(&spec.a_jet(k, l, &xj) * &(&v[d + k] * &v[d + l]));
        }
    }
    if !principal_only {
        c1 = &c1 + &spec.b[d].eval_jet(&xj);
        for k in 0..d {
            c0 = &c0 + &(&spec.b[k].eval_jet(&xj) * &v[d + k]);
        }
        c0 = (&c0 + &spec.c0.eval_jet(&xj)).add_scalar(C64::new(spec.shift, 0.0));
    }
    let z2 = &v[2 * d] * &v[2 * d];
    c0 = &c0 + &z2.scale(C64::from_polar(1.0, theta));
    Ok((spec.a_jet(d, d, &xj), c1, c0))
}

/// Stable roots (big, small) of the quadratic plus the sign s with
/// big = −(c₁ + s·√disc)/(2c₂), √ principal.
fn stable_roots(q: &Quadratic) -> Result<(C64, C64, f64)> {
    if q.c2.norm() == 0.0 {
        return Err(DbvpError::Ellipticity("leading coefficient a^nn vanishes".into()));
    }
    let disc = q.c1 * q.c1 - q.c2 * q.c0 * 4.0;
    let sq = disc.sqrt();
    let s = if (q.c1.conj() * sq).re >= 0.0 { 1.0 } else { -1.0 };
    let qq = -(q.c1 + sq * s) * 0.5;
    if qq.norm() == 0.0 {
        return Err(DbvpError::Ellipticity("double root at 0 (|xi', zeta| = 0 with no lower-order term)".into()));
    }
    Ok((qq / q.c2, q.c0 / qq, s))
}

/// Solve the quadratic and label the roots.
pub fn kappa_roots(q: &Quadratic) -> Result<KappaPair> {
    let (r1, r2, _) = stable_roots(q)?;
    let tol = |r: C64| 1e-14 * r.norm().max(f64::MIN_POSITIVE);
    for r in [r1, r2] {
        if r.im.abs() <= tol(r) {
            return Err(DbvpError::Ellipticity(format!("real root {r} of the boundary quadratic")));
        }
    }
    let (up, low) = if r1.im > 0.0 && r2.im < 0.0 {
        (r1, r2)
    } else if r2.im > 0.0 && r1.im < 0.0 {
        (r2, r1)
    } else {
        return Err(DbvpError::Ellipticity(format!(
            "roots {r1}, {r2} lie in the same half-plane (no Lopatinskii splitting)"
        )));
    };
    let i = C64::new(0.0, 1.0);
    Ok(KappaPair { kplus: -i * up, kminus: i * low, a_n: q.c2, theta: 0.0, margin: 0.0 })
}

/// κ± at a boundary point: `boundary_quadratic` followed by `kappa_roots`.
pub fn kappa_pair(
    spec: &EllipticOperatorSpec,
    x: &[f64],
    xi: &[f64],
    zeta: f64,
    theta: f64,
    principal_only: bool,
) -> Result<KappaPair> {
    validate_theta(theta)?;
    let q = boundary_quadratic(spec, x, xi, zeta, theta, principal_only)?;
    let mut kp = kappa_roots(&q).map_err(|e| match e {
        DbvpError::Ellipticity(m) => {
            DbvpError::Ellipticity(format!("{m} at x'={x:?}, xi'={xi:?}, zeta={zeta}, theta={theta}"))
        }
        other => other,
    })?;
    kp.theta = theta;
    Ok(kp)
}

/// Which root.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum RootSign {
    Plus,
    Minus,
}

/// κ±_θ as an (order 1, type (1,0)) tangential symbol with exact jets.
pub fn kappa_symbol(spec: &EllipticOperatorSpec, theta: f64, sign: RootSign, principal_only: bool) -> Result<TangentialSymbol> {
    validate_theta(theta)?;
    let spec = spec.clone();
    let d = spec.n - 1;
    Ok(TangentialSymbol::from_jet_fn(1.0, HType::CLASSICAL, d, move |pt, o| {
        let (c2, c1, c0) = boundary_quadratic_jet(&spec, pt, o, theta, principal_only)?;
        let q = Quadratic { c2: c2.value(), c1: c1.value(), c0: c0.value() };
        let kp = kappa_roots(&q).map_err(|e| DbvpError::eval(pt.describe(), e.to_string()))?;
        let (big, _small, s) = stable_roots(&q)?;
        let disc = &(&c1 * &c1) - &(&c2 * &c0).scale(C64::new(4.0, 0.0));
        let sq = disc.sqrt_branch(disc.value().sqrt() * s);
        let big_j = (&c1 + &sq).scale(C64::new(-0.5, 0.0)).div(&c2);
        let small_j = c0.div(&(&c2 * &big_j));
        let i = C64::new(0.0, 1.0);
        let want_up = sign == RootSign::Plus;
        let big_is_up = big.im > 0.0;
        let root = if want_up == big_is_up { big_j } else { small_j };
        let k = if want_up { root.scale(-i) } else { root.scale(i) };
        debug_assert!((k.value() - if want_up { kp.kplus } else { kp.kminus }).norm() <= 1e-10 * (1.0 + kp.kplus.norm()));
        Ok(k)
    }))
}

/// ω = (1/5)·min over the lattice of Re κ±_θ/|(ξ′, ζ)| (principal symbol).
pub fn ellipticity_margin(spec: &EllipticOperatorSpec, theta: f64, lattice: &SymbolLattice) -> Result<f64> {
    validate_theta(theta)?;
    let pts = lattice.all_points();
    let vals: Vec<Result<(f64, String)>> = pts
        .par_iter()
        .map(|pt| {
            let r = pt.radius();
            if r == 0.0 {
                return Err(DbvpError::Argument("lattice contains (xi', zeta) = 0".into()));
            }
            let kp = kappa_pair(spec, &pt.x, &pt.xi, pt.zeta, theta, true)?;
            Ok((kp.kplus.re.min(kp.kminus.re) / r, pt.describe()))
        })
        .collect();
    let mut best = (f64::INFINITY, String::new());
    for v in vals {
        let v = v?;
        if v.0 < best.0 {
            best = v;
        }
    }
    let omega = best.0 / 5.0;
    if !(omega > 0.0) {
        return Err(DbvpError::Ellipticity(format!("margin omega = {omega} <= 0 at witness {}", best.1)));
    }
    Ok(omega)
}
