//! The degenerate boundary symbol σ_θ = φ₁π_θ + φ₀, its hypoellipticity
//! certificate, its (1, ½)-parametrix s_θ, the order gain of s_θ#φ₁ and the
//! principal symbol-kernel of G^T.

use crate::dirichlet::SeparableNormalKernel;
use crate::error::{DbvpError, Result};
use crate::jet::Jet;
use crate::operator::{BoundaryOperatorSpec, EllipticOperatorSpec};
use crate::roots::{kappa_symbol, KappaPair, RootSign};
use crate::symbol::{
    fit_shell_slope, hypoelliptic_parametrix, leibniz_truncate, HType, Slope, SymbolLattice, SymbolPoint,
    TangentialSymbol,
};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;

/// Default parametrix iteration depth.
pub const DEFAULT_PARAMETRIX_N: usize = 4;
/// Leibniz terms used for s_θ#φ₁.
pub const ORDER_GAIN_TERMS: usize = 3;

/// σ = φ₁π + φ₀ together with its ingredients.
#[derive(Clone, Debug)]
pub struct SigmaSymbol {
    pub symbol: TangentialSymbol,
    pub pi: TangentialSymbol,
    pub bspec: BoundaryOperatorSpec,
}

/// φ as an x′-only symbol of order 0.
pub fn boundary_coefficient_symbol(phi: &crate::expr::Expr, dim: usize) -> TangentialSymbol {
    let e = phi.clone();
    TangentialSymbol::from_jet_fn(0.0, HType::CLASSICAL, dim, move |pt, o| {
        let v = pt.seed(o);
        Ok(e.eval_jet(&v[..pt.dim()]))
    })
}

/// π_θ = κ⁺_θ of the full boundary quadratic (principal-level DtN).
pub fn pi_symbol(spec: &EllipticOperatorSpec, theta: f64) -> Result<TangentialSymbol> {
    kappa_symbol(spec, theta, RootSign::Plus, false)
}

/// σ(x′, ξ′, ζ) = φ₁(x′)π(x′, ξ′, ζ) + φ₀(x′); order 1, type (1, 0).
pub fn sigma_symbol(bspec: &BoundaryOperatorSpec, pi: &TangentialSymbol) -> Result<SigmaSymbol> {
    if (pi.order - 1.0).abs() > 1e-12 {
        return Err(DbvpError::Argument(format!("pi must have order 1 (got {})", pi.order)));
    }
    let (p0, p1, pc) = (bspec.phi0.clone(), bspec.phi1.clone(), pi.clone());
    let mut symbol = TangentialSymbol::from_jet_fn(1.0, HType::CLASSICAL, pi.dim, move |pt, o| {
        let v = pt.seed(o);
        let x = &v[..pt.dim()];
        let pj = pc.jet(pt, o)?;
        Ok(&(&p1.eval_jet(x) * &pj) + &p0.eval_jet(x))
    });
    symbol.frozen_zeta = pi.frozen_zeta;
    Ok(SigmaSymbol { symbol, pi: pi.clone(), bspec: bspec.clone() })
}

/// One row of the hypoellipticity table: sup over each shell of
/// |∂^β_{x′}∂^α_{ξ′}∂^l_ζ σ · σ^{−1}| · ⟨ξ′,ζ⟩^{|α|+l−|β|/2}.
#[derive(Clone, Debug, Serialize)]
pub struct HypoEntry {
    pub alpha: Vec<u8>,
    pub l: u8,
    pub beta: Vec<u8>,
    /// (shell radius, scaled sup) for shells ≥ R.
    pub shell_sups: Vec<(f64, f64)>,
    /// Best constant C (max over shells).
    pub constant: f64,
    /// Relative change (C_J − C_{J−1})/C_J of the cumulative constant
    /// C_j = max_{i ≤ j} sup_i between the two largest shells.
    pub variation: f64,
    pub finite: bool,
    pub pass: bool,
}

/// Hypoellipticity certificate.
#[derive(Clone, Debug, Serialize)]
pub struct HypoellipticityReport {
    /// min |σ| over lattice points with |ξ′, ζ| ≥ R.
    pub lower_bound_c: f64,
    /// Smallest shell radius from which Re π ≥ 1 on the lattice.
    pub radius_r: f64,
    /// |σ| ≥ φ₀ + φ₁ held at every point beyond R.
    pub lower_bound_pass: bool,
    /// Witness of a lower-bound failure, if any.
    pub lower_bound_witness: Option<String>,
    pub entries: Vec<HypoEntry>,
    /// Best constant for |∂_{x′}σ·σ^{−1}|⟨ξ′,ζ⟩^{−1/2} and the reference
    /// 2√‖φ₁″‖_∞.
    pub x_derivative_constant: f64,
    pub x_derivative_reference: f64,
    pub max_order: usize,
    pub pass: bool,
}

impl HypoellipticityReport {
    /// Recompute every pass flag from the table.
    pub fn recompute_pass(&self) -> bool {
        self.lower_bound_pass && self.entries.iter().all(|e| e.finite && entry_variation_ok(&e.shell_sups))
    }
}

/// Relative variation tolerance across the two top shells.
pub const HYPO_VARIATION_TOL: f64 = 0.10;
const ZERO_FLOOR: f64 = 1e-12;

fn top_variation(sups: &[(f64, f64)]) -> f64 {
    if sups.len() < 2 {
        return 0.0;
    }
    let k = sups.len();
    let below = sups[..k - 1].iter().map(|s| s.1).fold(0.0, f64::max);
    let top = below.max(sups[k - 1].1);
    if top <= ZERO_FLOOR {
        0.0
    } else {
        (top - below) / top
    }
}

fn entry_variation_ok(sups: &[(f64, f64)]) -> bool {
    sups.iter().all(|s| s.1.is_finite()) && top_variation(sups) <= HYPO_VARIATION_TOL
}

/// Certify the hypoellipticity estimates for σ on the lattice up to
/// |α| + l + |β| ≤ `max_order`.
pub fn verify_hypoellipticity(
    sig: &SigmaSymbol,
    lattice: &SymbolLattice,
    max_order: usize,
) -> Result<HypoellipticityReport> {
    lattice.validate()?;
    let d = sig.symbol.dim;
    let nsh = lattice.shells.len();
    // Radius R: smallest shell from which Re π ≥ 1 on every later shell.
    let mut ok_from = nsh;
    for j in (0..nsh).rev() {
        let pts = lattice.shell_points(j);
        let good: Vec<Result<bool>> = pts.par_iter().map(|pt| Ok(sig.pi.eval(pt)?.re >= 1.0)).collect();
        let mut all = true;
        for g in good {
            all &= g?;
        }
        if all {
            ok_from = j;
        } else {
            break;
        }
    }
    if ok_from == nsh {
        return Err(DbvpError::Precondition("Re pi >= 1 fails on the outermost shell".into()));
    }
    let radius_r = lattice.shells[ok_from];

    // Lower bound |σ| ≥ φ₀ + φ₁ beyond R, and min |σ|.
    let mut lower_c = f64::INFINITY;
    let mut lb_pass = true;
    let mut witness = None;
    for j in ok_from..nsh {
        let pts = lattice.shell_points(j);
        let vals: Vec<Result<(f64, f64, String)>> = pts
            .par_iter()
            .map(|pt| {
                let s = sig.symbol.eval(pt)?;
                let floor = sig.bspec.phi0_at(&pt.x) + sig.bspec.phi1_at(&pt.x);
                Ok((s.norm(), floor, pt.describe()))
            })
            .collect();
        for v in vals {
            let (s, f, w) = v?;
            lower_c = lower_c.min(s);
            if !(s >= f) && lb_pass {
                lb_pass = false;
                witness = Some(format!("|sigma| = {s:.6e} < phi0+phi1 = {f:.6e} at {w}"));
            }
        }
    }

    // Derivative table.
    let mut entries = Vec::new();
    let nv = 2 * d + 1;
    let all_mi = crate::symbol::multi_indices_below(nv, max_order + 1);
    for mi in all_mi.iter().filter(|m| m.iter().any(|&a| a > 0)) {
        let beta = mi[..d].to_vec();
        let alpha = mi[d..2 * d].to_vec();
        let l = mi[2 * d];
        let na: f64 = alpha.iter().map(|&a| a as f64).sum::<f64>() + l as f64;
        let nb: f64 = beta.iter().map(|&a| a as f64).sum();
        let expo = na - nb / 2.0;
        let ord: usize = mi.iter().map(|&a| a as usize).sum();
        let mut sups = Vec::new();
        for j in ok_from..nsh {
            let pts = lattice.shell_points(j);
            let vals: Vec<Result<f64>> = pts
                .par_iter()
                .map(|pt| {
                    let jet = sig.symbol.jet(pt, ord)?;
                    let v = (jet.derivative(mi) / jet.value()).norm() * pt.bracket().powf(expo);
                    Ok(v)
                })
                .collect();
            let mut sup = 0.0f64;
            for v in vals {
                let v = v?;
                sup = if v.is_finite() { sup.max(v) } else { f64::INFINITY };
            }
            sups.push((lattice.shells[j], sup));
        }
        let finite = sups.iter().all(|s| s.1.is_finite());
        let constant = sups.iter().map(|s| s.1).fold(0.0, f64::max);
        let variation = top_variation(&sups);
        let pass = entry_variation_ok(&sups);
        entries.push(HypoEntry { alpha, l, beta, shell_sups: sups, constant, variation, finite, pass });
    }

    // x-derivative constant vs 2√‖φ₁″‖_∞ (d = 1 reference only).
    let mut x_const = 0.0f64;
    for e in &entries {
        if e.alpha.iter().all(|&a| a == 0) && e.l == 0 && e.beta.iter().map(|&b| b as usize).sum::<usize>() == 1 {
            x_const = x_const.max(e.constant);
        }
    }
    let phi1_dd = lattice
        .x_points
        .iter()
        .map(|x| {
            let seeds: Vec<Jet> = (0..d).map(|k| Jet::var(d, 2, k, x[k])).collect();
            let j = sig.bspec.phi1.eval_jet(&seeds);
            (0..d)
                .map(|k| {
                    let mut e = vec![0u8; d];
                    e[k] = 2;
                    j.derivative(&e).norm()
                })
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);
    let mut rep = HypoellipticityReport {
        lower_bound_c: lower_c,
        radius_r,
        lower_bound_pass: lb_pass,
        lower_bound_witness: witness,
        entries,
        x_derivative_constant: x_const,
        x_derivative_reference: 2.0 * phi1_dd.sqrt(),
        max_order,
        pass: false,
    };
    rep.pass = rep.recompute_pass();
    Ok(rep)
}

/// s_θ: parametrix of σ in S⁰_{1,1/2} (order-0 metadata).
pub fn parametrix_sigma(sig: &SigmaSymbol, report: &HypoellipticityReport, n: usize) -> Result<TangentialSymbol> {
    if !report.lower_bound_pass {
        return Err(DbvpError::Precondition(format!(
            "hypoellipticity lower bound failed: {}",
            report.lower_bound_witness.clone().unwrap_or_default()
        )));
    }
    let mut s = hypoelliptic_parametrix(&sig.symbol, n, sig.bspec.floor, report.radius_r, HType::HALF)?;
    s.order = 0.0;
    Ok(s)
}

/// s_θ # φ₁ (Leibniz, [`ORDER_GAIN_TERMS`] terms).
pub fn s_sharp_phi1(s: &TangentialSymbol, bspec: &BoundaryOperatorSpec) -> Result<TangentialSymbol> {
    let phi1 = boundary_coefficient_symbol(&bspec.phi1, s.dim);
    let mut r = leibniz_truncate(s, &phi1, ORDER_GAIN_TERMS)?;
    r.order = -1.0;
    Ok(r)
}

/// Shell-slope of sup |s_θ#φ₁| over shells with radius ≥ `min_radius`.
pub fn order_gain(s: &TangentialSymbol, bspec: &BoundaryOperatorSpec, lattice: &SymbolLattice, min_radius: f64) -> Result<Slope> {
    let sp = s_sharp_phi1(s, bspec)?;
    fit_shell_slope(&sp, lattice, min_radius, 1.0)
}

/// Frozen principal value of s_θ#φ₁: φ₁/(φ₀ + φ₁κ⁺).
pub fn frozen_s_phi1(kp: &KappaPair, phi0: f64, phi1: f64) -> C64 {
    C64::new(phi1, 0.0) / (kp.kplus * phi1 + phi0)
}

/// G^T principal kernel: amplitude (s_θ#φ₁)/a_n, rates (κ⁺, κ⁻).
pub fn gt_principal(kp: &KappaPair, s_phi1: C64) -> Result<SeparableNormalKernel> {
    kp.check_decay()?;
    SeparableNormalKernel::new(s_phi1 / kp.a_n, kp.kplus, kp.kminus)
}

/// Lattice for the sin²-degenerate family on [0, π): a uniform grid plus
/// points t/√r near the zero of φ₁ on every shell r.
pub fn degenerate_lattice(uniform: usize, r0: f64, shells: usize) -> Result<SymbolLattice> {
    let sh: Vec<f64> = (0..shells).map(|j| r0 * 2f64.powi(j as i32)).collect();
    let mut xs = SymbolLattice::torus_points(1, std::f64::consts::PI, uniform);
    xs.extend(SymbolLattice::scaled_points(&[0.0], &[0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0], &sh));
    SymbolLattice::new(1, xs, r0, shells, 9)
}

/// Evaluate the frozen boundary residual T(free + G^D + G^T)(·, y) at x_n = 0
/// for a principal model with pair `kp` and constants φ₀, φ₁.
pub fn boundary_residual(kp: &KappaPair, phi0: f64, phi1: f64, y: f64) -> Result<C64> {
    let g = crate::dirichlet::dirichlet_green(kp)?;
    let gt = gt_principal(kp, frozen_s_phi1(kp, phi0, phi1))?;
    // Values and exterior normal derivatives of each piece at x = 0.
    let v0 = g.eval(0.0, y) + gt.eval(0.0, y);
    let d_dirichlet = crate::dirichlet::trace_gamma1_kernel(kp)(y);
    let d_gt = kp.kplus * gt.eval(0.0, y);
    Ok(v0 * phi0 + (d_dirichlet + d_gt) * phi1)
}

/// Point helper.
pub fn pt1(x: f64, xi: f64, zeta: f64) -> SymbolPoint {
    SymbolPoint::new(vec![x], vec![xi], zeta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dirichlet::dirichlet_green;
    use std::f64::consts::PI;

    fn lap1() -> EllipticOperatorSpec {
        EllipticOperatorSpec::laplace(2, 1.0, 0.0)
    }

    #[test]
    fn sigma_examples() {
        let pi = pi_symbol(&lap1(), 0.0).unwrap();
        let s = sigma_symbol(&BoundaryOperatorSpec::dirichlet(), &pi).unwrap();
        assert_eq!(s.symbol.eval(&pt1(0.3, 5.0, 2.0)).unwrap(), C64::new(1.0, 0.0));
        let s = sigma_symbol(&BoundaryOperatorSpec::neumann(), &pi).unwrap();
        let p = pt1(0.3, 5.0, 2.0);
        assert!((s.symbol.eval(&p).unwrap() - pi.eval(&p).unwrap()).norm() < 1e-15);
        let s = sigma_symbol(&BoundaryOperatorSpec::degenerate_sin2(), &pi).unwrap();
        assert!((s.symbol.eval(&pt1(PI / 4.0, 0.0, 0.0)).unwrap() - C64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn hypo_dirichlet_and_neumann() {
        let lat = SymbolLattice::with_defaults(1, SymbolLattice::torus_points(1, PI, 8)).unwrap();
        let pi = pi_symbol(&lap1(), 0.0).unwrap();
        let s = sigma_symbol(&BoundaryOperatorSpec::dirichlet(), &pi).unwrap();
        let rep = verify_hypoellipticity(&s, &lat, 3).unwrap();
        assert!(rep.pass);
        assert_eq!(rep.lower_bound_c, 1.0);
        assert!(rep.entries.iter().all(|e| e.constant == 0.0));
        let s = sigma_symbol(&BoundaryOperatorSpec::neumann(), &pi).unwrap();
        let rep = verify_hypoellipticity(&s, &lat, 3).unwrap();
        assert!(rep.pass, "{:#?}", rep.entries.iter().filter(|e| !e.pass).collect::<Vec<_>>());
        assert_eq!(rep.radius_r, 4.0);
    }

    #[test]
    fn gt_examples() {
        // Dirichlet → zero; Neumann → e^{−κ(x+y)}/κ and total is the Neumann Green.
        let kp = KappaPair::symmetric(1.7);
        let g = gt_principal(&kp, frozen_s_phi1(&kp, 1.0, 0.0)).unwrap();
        assert_eq!(g.amplitude, C64::new(0.0, 0.0));
        let g = gt_principal(&kp, frozen_s_phi1(&kp, 0.0, 1.0)).unwrap();
        let gd = dirichlet_green(&kp).unwrap();
        for &(x, y) in &[(0.2f64, 0.9f64), (1.5, 0.3), (0.0, 0.4)] {
            let k = 1.7f64;
            let exact = ((-k * (x - y).abs()).exp() + (-k * (x + y)).exp()) / (2.0 * k);
            assert!((gd.eval(x, y) + g.eval(x, y) - C64::new(exact, 0.0)).norm() < 1e-14);
        }
        // Robin φ₀ = φ₁ = 1: amplitude 1/(κ+1) and T(Green) = 0.
        let g = gt_principal(&kp, frozen_s_phi1(&kp, 1.0, 1.0)).unwrap();
        assert!((g.amplitude - C64::new(1.0 / 2.7, 0.0)).norm() < 1e-15);
        for y in [0.0, 0.5, 2.0] {
            assert!(boundary_residual(&kp, 1.0, 1.0, y).unwrap().norm() <= 1e-10);
        }
        let bad = KappaPair::new(C64::new(-1.0, 0.0), C64::new(1.0, 0.0), C64::new(1.0, 0.0));
        assert!(gt_principal(&bad, C64::new(1.0, 0.0)).is_err());
    }
}
