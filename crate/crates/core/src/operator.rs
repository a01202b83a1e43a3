//! Coefficient data of the elliptic operator
//! A = Σ a^{kl}(x) D_k D_l + Σ b^k(x) D_k + c⁰(x) + c (D = −i∂)
//! and of the boundary operator T = φ₀γ₀ + φ₁γ₁ on x_n = 0.

use crate::error::{DbvpError, Result};
use crate::expr::Expr;
use crate::jet::Jet;
use serde::Serialize;

/// How the shift constant c of "A + c" is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum ShiftPolicy {
    /// Use the given constant.
    Fixed,
    /// Scan c ∈ {1, 2, 4, ...} (see [`crate::resolvent::select_shift`]).
    Auto,
}

/// Second-order operator on ℝⁿ₊ with expression coefficients in x1..xn.
#[derive(Clone, Debug)]
pub struct EllipticOperatorSpec {
    pub n: usize,
    /// Symmetric coefficient matrix a^{kl} (row-major, n×n).
    pub a: Vec<Vec<Expr>>,
    pub b: Vec<Expr>,
    pub c0: Expr,
    pub shift: f64,
    pub policy: ShiftPolicy,
}

/// Frozen constant coefficients (2-D grid engines).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConstCoeffs2 {
    pub a11: f64,
    pub a12: f64,
    pub a22: f64,
    pub b1: f64,
    pub b2: f64,
    /// c⁰ + shift.
    pub c: f64,
}

impl EllipticOperatorSpec {
    /// −Δ + c0 + shift in dimension n.
    pub fn laplace(n: usize, c0: f64, shift: f64) -> Self {
        let a = (0..n)
            .map(|k| (0..n).map(|l| Expr::constant(if k == l { 1.0 } else { 0.0 })).collect())
            .collect();
        EllipticOperatorSpec {
            n,
            a,
            b: vec![Expr::constant(0.0); n],
            c0: Expr::constant(c0),
            shift,
            policy: ShiftPolicy::Fixed,
        }
    }

    /// Constant-coefficient operator.
    pub fn constant(a: Vec<Vec<f64>>, b: Vec<f64>, c0: f64, shift: f64) -> Result<Self> {
        let n = a.len();
        if a.iter().any(|r| r.len() != n) || b.len() != n {
            return Err(DbvpError::Config("coefficient shapes do not match dimension".into()));
        }
        let spec = EllipticOperatorSpec {
            n,
            a: a.iter().map(|r| r.iter().map(|&v| Expr::constant(v)).collect()).collect(),
            b: b.iter().map(|&v| Expr::constant(v)).collect(),
            c0: Expr::constant(c0),
            shift,
            policy: ShiftPolicy::Fixed,
        };
        Ok(spec)
    }

    /// Coefficient matrix at x (symmetrized).
    pub fn a_at(&self, x: &[f64]) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|k| (0..self.n).map(|l| 0.5 * (self.a[k][l].eval(x) + self.a[l][k].eval(x))).collect())
            .collect()
    }

    pub fn b_at(&self, x: &[f64]) -> Vec<f64> {
        self.b.iter().map(|e| e.eval(x)).collect()
    }

    /// c⁰(x) + shift.
    pub fn c_at(&self, x: &[f64]) -> f64 {
        self.c0.eval(x) + self.shift
    }

    /// a^{kl} as a jet (symmetrized); `x` are jets of all n coordinates.
    pub fn a_jet(&self, k: usize, l: usize, x: &[Jet]) -> Jet {
        let s = &self.a[k][l].eval_jet(x) + &self.a[l][k].eval_jet(x);
        s.scale(num_complex::Complex64::new(0.5, 0.0))
    }

    /// True if no coefficient depends on the tangential variables x1..x_{n−1}.
    pub fn is_tangentially_constant(&self) -> bool {
        let deps = |e: &Expr| (0..self.n - 1).any(|v| e.depends_on(v));
        !(self.a.iter().flatten().any(deps) || self.b.iter().any(deps) || deps(&self.c0))
    }

    /// True if no coefficient depends on any variable.
    pub fn is_constant(&self) -> bool {
        let deps = |e: &Expr| (0..self.n).any(|v| e.depends_on(v));
        !(self.a.iter().flatten().any(deps) || self.b.iter().any(deps) || deps(&self.c0))
    }

    /// Same operator with another shift.
    pub fn with_shift(&self, shift: f64) -> Self {
        let mut s = self.clone();
        s.shift = shift;
        s
    }

    /// Frozen 2-D coefficients at x = (x1, x2).
    pub fn const2_at(&self, x: &[f64]) -> Result<ConstCoeffs2> {
        if self.n != 2 {
            return Err(DbvpError::Unsupported(format!(
                "grid engines support n = 2 only (operator has n = {})",
                self.n
            )));
        }
        let a = self.a_at(x);
        let b = self.b_at(x);
        Ok(ConstCoeffs2 { a11: a[0][0], a12: a[0][1], a22: a[1][1], b1: b[0], b2: b[1], c: self.c_at(x) })
    }

    /// Check symmetry-derived positivity (smallest eigenvalue ≥ a_min > 0)
    /// and finiteness at the sample points. Returns the observed a_min.
    pub fn validate(&self, points: &[Vec<f64>]) -> Result<f64> {
        if self.n < 2 {
            return Err(DbvpError::Config("dimension n must be at least 2".into()));
        }
        if !(self.shift >= 0.0) {
            return Err(DbvpError::Config("shift c must be >= 0".into()));
        }
        let mut amin = f64::INFINITY;
        for x in points {
            if x.len() != self.n {
                return Err(DbvpError::Config("validation point of wrong dimension".into()));
            }
            let a = self.a_at(x);
            let b = self.b_at(x);
            let c = self.c_at(x);
            if a.iter().flatten().chain(b.iter()).chain(std::iter::once(&c)).any(|v| !v.is_finite()) {
                return Err(DbvpError::eval(format!("x={x:?}"), "non-finite coefficient"));
            }
            let m = faer::Mat::<f64>::from_fn(self.n, self.n, |i, j| a[i][j]);
            let ev = m
                .self_adjoint_eigenvalues(faer::Side::Lower)
                .map_err(|e| DbvpError::Solver(format!("eigenvalues of a(x): {e:?}")))?;
            let lo = ev.iter().cloned().fold(f64::INFINITY, f64::min);
            amin = amin.min(lo);
        }
        if !(amin > 0.0) {
            return Err(DbvpError::Ellipticity(format!(
                "coefficient matrix not positive definite (smallest eigenvalue {amin:.3e})"
            )));
        }
        Ok(amin)
    }
}

/// Boundary operator T = φ₀γ₀ + φ₁γ₁ with γ₁ = −∂_{x_n} (exterior normal).
#[derive(Clone, Debug)]
pub struct BoundaryOperatorSpec {
    pub name: String,
    /// φ₀ as an expression in x1..x_{n−1}.
    pub phi0: Expr,
    pub phi1: Expr,
    /// Degeneracy floor c_T with φ₀ + φ₁ ≥ c_T.
    pub floor: f64,
}

/// Glaeser constant for |f′|² ≤ C‖f″‖_∞ f (f ≥ 0); C = 2 is sharp.
pub const KATO_CONSTANT: f64 = 2.0;

/// Outcome of the Kato-type check |∂_jφ₁|² ≤ C‖∂_j²φ₁‖_∞φ₁.
#[derive(Clone, Debug, Serialize)]
pub struct KatoReport {
    /// max over points and directions of |∂_jφ₁|²/(‖∂_j²φ₁‖_∞ φ₁) (0/0 := 0).
    pub max_ratio: f64,
    pub constant: f64,
    pub pass: bool,
}

impl BoundaryOperatorSpec {
    pub fn dirichlet() -> Self {
        Self::robin(1.0, 0.0).named("dirichlet")
    }
    pub fn neumann() -> Self {
        Self::robin(0.0, 1.0).named("neumann")
    }
    /// φ₀ ≡ a, φ₁ ≡ b.
    pub fn robin(a: f64, b: f64) -> Self {
        BoundaryOperatorSpec {
            name: format!("robin({a},{b})"),
            phi0: Expr::constant(a),
            phi1: Expr::constant(b),
            floor: (a + b).min(1.0) * 0.5,
        }
    }
    /// φ₁ = sin²(x1), φ₀ = cos²(x1).
    pub fn degenerate_sin2() -> Self {
        BoundaryOperatorSpec {
            name: "degenerate-sin2".into(),
            phi0: Expr::parse("cos(x1)^2", 1).expect("static expression"),
            phi1: Expr::parse("sin(x1)^2", 1).expect("static expression"),
            floor: 0.5,
        }
    }

    fn named(mut self, n: &str) -> Self {
        self.name = n.into();
        self
    }

    pub fn phi0_at(&self, x: &[f64]) -> f64 {
        self.phi0.eval(x)
    }
    pub fn phi1_at(&self, x: &[f64]) -> f64 {
        self.phi1.eval(x)
    }

    /// True if φ₀, φ₁ are constants.
    pub fn is_constant(&self) -> bool {
        self.phi0.as_constant().is_some() && self.phi1.as_constant().is_some()
    }

    /// True if φ₁ ≡ 0 (Dirichlet).
    pub fn is_dirichlet(&self) -> bool {
        self.phi1.as_constant() == Some(0.0)
    }

    /// Kato/Glaeser check with constant C on the given tangential points.
    pub fn kato_check(&self, points: &[Vec<f64>], constant: f64) -> KatoReport {
        let d = points.first().map(|p| p.len()).unwrap_or(1);
        let mut sup2 = vec![0.0f64; d];
        let mut firsts = Vec::with_capacity(points.len());
        for x in points {
            let seeds: Vec<Jet> = (0..d).map(|k| Jet::var(d, 2, k, x[k])).collect();
            let j = self.phi1.eval_jet(&seeds);
            let mut row = Vec::with_capacity(d);
            for k in 0..d {
                let mut e1 = vec![0u8; d];
                e1[k] = 1;
                let mut e2 = vec![0u8; d];
                e2[k] = 2;
                row.push(j.derivative(&e1).re);
                sup2[k] = sup2[k].max(j.derivative(&e2).re.abs());
            }
            firsts.push((j.value().re, row));
        }
        let mut max_ratio = 0.0f64;
        let mut pass = true;
        for (phi, row) in &firsts {
            for k in 0..d {
                let lhs = row[k] * row[k];
                let rhs = sup2[k] * phi.max(0.0);
                if lhs > constant * rhs + 1e-8 {
                    pass = false;
                }
                if rhs > 0.0 {
                    max_ratio = max_ratio.max(lhs / rhs);
                } else if lhs > 1e-8 {
                    max_ratio = f64::INFINITY;
                }
            }
        }
        KatoReport { max_ratio, constant, pass }
    }

    /// Validate φ₁ ≥ 0, φ₀ + φ₁ ≥ floor and the Kato bound (constant
    /// [`KATO_CONSTANT`]) on tangential points.
    pub fn validate(&self, points: &[Vec<f64>]) -> Result<KatoReport> {
        if !(self.floor > 0.0) {
            return Err(DbvpError::Config("boundary degeneracy floor must be > 0".into()));
        }
        for x in points {
            let (p0, p1) = (self.phi0_at(x), self.phi1_at(x));
            if !(p0.is_finite() && p1.is_finite()) {
                return Err(DbvpError::eval(format!("x'={x:?}"), "non-finite boundary coefficient"));
            }
            if p1 < 0.0 {
                return Err(DbvpError::Precondition(format!("phi1 = {p1} < 0 at x' = {x:?}")));
            }
            if p0 + p1 < self.floor {
                return Err(DbvpError::Precondition(format!(
                    "phi0 + phi1 = {} below floor {} at x' = {x:?}",
                    p0 + p1,
                    self.floor
                )));
            }
        }
        let rep = self.kato_check(points, KATO_CONSTANT);
        if !rep.pass {
            return Err(DbvpError::Precondition(format!(
                "Kato bound |phi1'|^2 <= {}·|phi1''|·phi1 violated (max ratio {:.4})",
                KATO_CONSTANT, rep.max_ratio
            )));
        }
        Ok(rep)
    }
}
