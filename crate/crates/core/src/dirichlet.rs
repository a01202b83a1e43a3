//! Frozen-coefficient normal kernels of the Dirichlet problem: free
//! resolvent kernel, singular Green correction G^D, Poisson kernel K^D,
//! γ₁-trace kernel and the Dirichlet-to-Neumann principal symbol.
//!
//! Conventions: Fourier transform with e^{−ixξ}; γ₁ = −∂_{x_n} at x_n = 0
//! (exterior normal derivative on {x_n ≥ 0}).

use crate::error::{DbvpError, Result};
use crate::roots::KappaPair;
use num_complex::Complex64 as C64;
use serde::Serialize;

/// Rank-one kernel s·e^{−κ⁺x_n}·e^{−κ⁻y_n}.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SeparableNormalKernel {
    pub amplitude: C64,
    pub rate_x: C64,
    pub rate_y: C64,
}

impl SeparableNormalKernel {
    pub fn new(amplitude: C64, rate_x: C64, rate_y: C64) -> Result<Self> {
        if !(rate_x.re > 0.0 && rate_y.re > 0.0) {
            return Err(DbvpError::DegeneratePair(format!(
                "separable kernel rates must have positive real part ({rate_x}, {rate_y})"
            )));
        }
        Ok(SeparableNormalKernel { amplitude, rate_x, rate_y })
    }
    pub fn zero(rate_x: C64, rate_y: C64) -> Self {
        SeparableNormalKernel { amplitude: C64::new(0.0, 0.0), rate_x, rate_y }
    }
    pub fn eval(&self, x: f64, y: f64) -> C64 {
        self.amplitude * (-self.rate_x * x - self.rate_y * y).exp()
    }
    /// L²(ℝ₊)→L²(ℝ₊) norm |s|/(2√(Re κ⁺ Re κ⁻)).
    pub fn l2_norm(&self) -> f64 {
        self.amplitude.norm() / (2.0 * (self.rate_x.re * self.rate_y.re).sqrt())
    }
}

/// Two-sided exponential kernel of the frozen normal ODE on ℝ.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FreeNormalKernel {
    pub kplus: C64,
    pub kminus: C64,
    /// 1/(a_n(κ⁺ + κ⁻)).
    pub normalizer: C64,
}

impl FreeNormalKernel {
    pub fn eval(&self, x: f64, y: f64) -> C64 {
        if x >= y {
            self.normalizer * (-self.kplus * (x - y)).exp()
        } else {
            self.normalizer * (-self.kminus * (y - x)).exp()
        }
    }
}

/// Free kernel plus G^D correction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NormalGreenKernel {
    pub free: FreeNormalKernel,
    pub correction: SeparableNormalKernel,
}

impl NormalGreenKernel {
    pub fn eval(&self, x: f64, y: f64) -> C64 {
        self.free.eval(x, y) + self.correction.eval(x, y)
    }
}

fn normalizer(kp: &KappaPair) -> Result<C64> {
    let s = kp.a_n * (kp.kplus + kp.kminus);
    if s.norm() == 0.0 || !(s.re.is_finite() && s.im.is_finite()) {
        return Err(DbvpError::DegeneratePair(format!(
            "a_n(kplus + kminus) = {s} (kplus = {}, kminus = {})",
            kp.kplus, kp.kminus
        )));
    }
    Ok(C64::new(1.0, 0.0) / s)
}

/// q̃(x, y) = e^{−κ⁺(x−y)}/(a_n(κ⁺+κ⁻)) for x ≥ y, e^{−κ⁻(y−x)}/(…) for x < y.
pub fn free_normal_kernel(kp: &KappaPair) -> Result<FreeNormalKernel> {
    Ok(FreeNormalKernel { kplus: kp.kplus, kminus: kp.kminus, normalizer: normalizer(kp)? })
}

/// G^D with amplitude −1/(a_n(κ⁺+κ⁻)), fixed by γ₀(free + G^D) = 0.
pub fn dirichlet_correction(kp: &KappaPair) -> Result<SeparableNormalKernel> {
    Ok(SeparableNormalKernel { amplitude: -normalizer(kp)?, rate_x: kp.kplus, rate_y: kp.kminus })
}

/// Free + G^D.
pub fn dirichlet_green(kp: &KappaPair) -> Result<NormalGreenKernel> {
    Ok(NormalGreenKernel { free: free_normal_kernel(kp)?, correction: dirichlet_correction(kp)? })
}

/// Poisson kernel x_n ↦ e^{−κ⁺x_n}.
pub fn poisson_normal_kernel(kp: &KappaPair) -> impl Fn(f64) -> C64 {
    let k = kp.kplus;
    move |x| (-k * x).exp()
}

/// γ₁(Q + G^D) kernel y_n ↦ −a_n^{−1} e^{−κ⁻y_n}.
pub fn trace_gamma1_kernel(kp: &KappaPair) -> impl Fn(f64) -> C64 {
    let (k, a) = (kp.kminus, kp.a_n);
    move |y| -(-k * y).exp() / a
}

/// Principal symbol of the Dirichlet-to-Neumann operator: κ⁺.
pub fn dtn_principal(kp: &KappaPair) -> C64 {
    kp.kplus
}
