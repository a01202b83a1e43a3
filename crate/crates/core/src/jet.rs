//! Truncated multivariate Taylor jets with complex coefficients.
//!
//! A [`Jet`] of order `o` in `n` variables stores the Taylor coefficients
//! `c_α = ∂^α f(x₀)/α!` for all multi-indices `|α| ≤ o`. Arithmetic on jets
//! is exact forward-mode differentiation to order `o`, which is how symbol
//! derivatives are computed in "exact" mode.

use num_complex::Complex64 as C64;
use std::collections::HashMap;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::{Arc, Mutex, OnceLock};

/// Monomial bookkeeping for a fixed (variable count, order).
#[derive(Debug)]
pub struct JetSpace {
    nvars: usize,
    order: usize,
    monos: Vec<Vec<u8>>,
    index: HashMap<Vec<u8>, usize>,
    /// Multiplication table: (i, j, k) with mono_i + mono_j = mono_k.
    mul: Vec<(u32, u32, u32)>,
    /// Prefix length of `monos` for each total degree bound 0..=order.
    prefix: Vec<usize>,
}

fn graded_monomials(nvars: usize, order: usize) -> Vec<Vec<u8>> {
    fn rec(nvars: usize, left: usize, cur: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
        if cur.len() == nvars {
            if left == 0 {
                out.push(cur.clone());
            }
            return;
        }
        for e in (0..=left).rev() {
            cur.push(e as u8);
            rec(nvars, left - e, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    for deg in 0..=order {
        let mut cur = Vec::with_capacity(nvars);
        rec(nvars, deg, &mut cur, &mut out);
    }
    out
}

impl JetSpace {
    fn build(nvars: usize, order: usize) -> Self {
        let monos = graded_monomials(nvars, order);
        let index: HashMap<Vec<u8>, usize> =
            monos.iter().enumerate().map(|(i, m)| (m.clone(), i)).collect();
        let degs: Vec<usize> = monos.iter().map(|m| m.iter().map(|&e| e as usize).sum()).collect();
        let mut prefix = vec![0usize; order + 1];
        for (d, p) in prefix.iter_mut().enumerate() {
            *p = degs.iter().filter(|&&g| g <= d).count();
        }
        let mut mul = Vec::new();
        for (i, mi) in monos.iter().enumerate() {
            for (j, mj) in monos.iter().enumerate() {
                if degs[i] + degs[j] > order {
                    continue;
                }
                let s: Vec<u8> = mi.iter().zip(mj).map(|(a, b)| a + b).collect();
                mul.push((i as u32, j as u32, index[&s] as u32));
            }
        }
        JetSpace { nvars, order, monos, index, mul, prefix }
    }

    /// Shared, cached space for `(nvars, order)`.
    pub fn get(nvars: usize, order: usize) -> Arc<JetSpace> {
        type Cache = Mutex<HashMap<(usize, usize), Arc<JetSpace>>>;
        static CACHE: OnceLock<Cache> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("jet space cache poisoned");
        guard
            .entry((nvars, order))
            .or_insert_with(|| Arc::new(JetSpace::build(nvars, order)))
            .clone()
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }
    pub fn order(&self) -> usize {
        self.order
    }
    pub fn len(&self) -> usize {
        self.monos.len()
    }
    pub fn is_empty(&self) -> bool {
        self.monos.is_empty()
    }
    pub fn monomials(&self) -> &[Vec<u8>] {
        &self.monos
    }
    pub fn index_of(&self, alpha: &[u8]) -> Option<usize> {
        self.index.get(alpha).copied()
    }
}

/// Truncated Taylor jet.
#[derive(Clone, Debug)]
pub struct Jet {
    space: Arc<JetSpace>,
    c: Vec<C64>,
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |a, k| a * k as f64)
}

/// Generalized binomial coefficient binom(p, k) for complex p.
fn binom(p: C64, k: usize) -> C64 {
    let mut r = C64::new(1.0, 0.0);
    for j in 0..k {
        r = r * (p - j as f64) / (j as f64 + 1.0);
    }
    r
}

impl Jet {
    /// Constant jet.
    pub fn constant(nvars: usize, order: usize, v: C64) -> Jet {
        let space = JetSpace::get(nvars, order);
        let mut c = vec![C64::new(0.0, 0.0); space.len()];
        c[0] = v;
        Jet { space, c }
    }

    /// Independent variable `var` with base value `v`.
    pub fn var(nvars: usize, order: usize, var: usize, v: f64) -> Jet {
        let mut j = Jet::constant(nvars, order, C64::new(v, 0.0));
        if order >= 1 {
            let mut a = vec![0u8; nvars];
            a[var] = 1;
            let idx = j.space.index_of(&a).expect("first-order monomial");
            j.c[idx] = C64::new(1.0, 0.0);
        }
        j
    }

    /// Jet from raw Taylor coefficients in the space's monomial order.
    pub fn from_coeffs(nvars: usize, order: usize, c: Vec<C64>) -> Jet {
        let space = JetSpace::get(nvars, order);
        assert_eq!(c.len(), space.len(), "coefficient count mismatch");
        Jet { space, c }
    }

    pub fn space(&self) -> &Arc<JetSpace> {
        &self.space
    }
    pub fn nvars(&self) -> usize {
        self.space.nvars
    }
    pub fn order(&self) -> usize {
        self.space.order
    }
    pub fn coeffs(&self) -> &[C64] {
        &self.c
    }
    pub fn coeffs_mut(&mut self) -> &mut [C64] {
        &mut self.c
    }
    /// Value at the expansion point.
    pub fn value(&self) -> C64 {
        self.c[0]
    }

    /// Taylor coefficient of `alpha` (zero if beyond the order).
    pub fn coeff(&self, alpha: &[u8]) -> C64 {
        self.space.index_of(alpha).map(|i| self.c[i]).unwrap_or(C64::new(0.0, 0.0))
    }

    /// Partial derivative ∂^α f at the expansion point (= α!·c_α).
    pub fn derivative(&self, alpha: &[u8]) -> C64 {
        let f: f64 = alpha.iter().map(|&a| factorial(a as usize)).product();
        self.coeff(alpha) * f
    }

    /// Truncate to a lower order.
    pub fn truncate(&self, order: usize) -> Jet {
        if order >= self.order() {
            return self.clone();
        }
        let space = JetSpace::get(self.nvars(), order);
        let c = self.c[..self.space.prefix[order]].to_vec();
        Jet { space, c }
    }

    fn aligned(&self, other: &Jet) -> (Jet, Jet) {
        assert_eq!(self.nvars(), other.nvars(), "jet variable count mismatch");
        let o = self.order().min(other.order());
        (self.truncate(o), other.truncate(o))
    }

    /// ∂/∂x_var as a jet of one order less (order 0 stays order 0 with value 0
    /// only if the input had order 0; callers should request enough order).
    pub fn diff(&self, var: usize) -> Jet {
        let o = self.order();
        if o == 0 {
            return Jet::constant(self.nvars(), 0, C64::new(0.0, 0.0));
        }
        let space = JetSpace::get(self.nvars(), o - 1);
        let mut c = vec![C64::new(0.0, 0.0); space.len()];
        for (k, m) in space.monos.iter().enumerate() {
            let mut up = m.clone();
            up[var] += 1;
            let src = self.space.index[&up];
            c[k] = self.c[src] * (up[var] as f64);
        }
        Jet { space, c }
    }

    /// Mixed derivative ∂^α (multi-index over all variables).
    pub fn diff_multi(&self, alpha: &[u8]) -> Jet {
        let mut j = self.clone();
        for (v, &a) in alpha.iter().enumerate() {
            for _ in 0..a {
                j = j.diff(v);
            }
        }
        j
    }

    /// Zero every coefficient with a positive power of `var`.
    pub fn drop_var(&self, var: usize) -> Jet {
        let mut out = self.clone();
        for (k, m) in self.space.monos.iter().enumerate() {
            if m[var] > 0 {
                out.c[k] = C64::new(0.0, 0.0);
            }
        }
        out
    }

    pub fn scale(&self, s: C64) -> Jet {
        Jet { space: self.space.clone(), c: self.c.iter().map(|v| v * s).collect() }
    }

    pub fn add_scalar(&self, s: C64) -> Jet {
        let mut out = self.clone();
        out.c[0] += s;
        out
    }

    fn mul_raw(&self, other: &Jet) -> Jet {
        let mut c = vec![C64::new(0.0, 0.0); self.space.len()];
        for &(i, j, k) in &self.space.mul {
            c[k as usize] += self.c[i as usize] * other.c[j as usize];
        }
        Jet { space: self.space.clone(), c }
    }

    /// Compose with a univariate function given its Taylor coefficients
    /// d_k = f^{(k)}(a₀)/k! at the value a₀ of this jet.
    pub fn compose(&self, d: &[C64]) -> Jet {
        let o = self.order();
        let mut nil = self.clone();
        nil.c[0] = C64::new(0.0, 0.0);
        let coef = |k: usize| d.get(k).copied().unwrap_or(C64::new(0.0, 0.0));
        // Horner in the nilpotent part: Σ_k d_k n^k, n^{o+1} = 0.
        let mut acc = Jet::constant(self.nvars(), o, coef(o));
        for k in (0..o).rev() {
            acc = nil.mul_raw(&acc).add_scalar(coef(k));
        }
        acc
    }

    fn poly_coeffs<F: Fn(usize) -> C64>(&self, f: F) -> Vec<C64> {
        (0..=self.order()).map(f).collect()
    }

    pub fn recip(&self) -> Jet {
        let a0 = self.value();
        let d = self.poly_coeffs(|k| {
            let s = if k % 2 == 0 { 1.0 } else { -1.0 };
            a0.powi(-(k as i32) - 1) * s
        });
        self.compose(&d)
    }

    pub fn exp(&self) -> Jet {
        let e = self.value().exp();
        let d = self.poly_coeffs(|k| e / factorial(k));
        self.compose(&d)
    }

    pub fn ln(&self) -> Jet {
        let a0 = self.value();
        let d = self.poly_coeffs(|k| {
            if k == 0 {
                a0.ln()
            } else {
                let s = if k % 2 == 1 { 1.0 } else { -1.0 };
                a0.powi(-(k as i32)) * (s / k as f64)
            }
        });
        self.compose(&d)
    }

    /// Power with the branch fixed by the supplied value `base_pow = a₀^p`.
    pub fn pow_branch(&self, p: C64, base_pow: C64) -> Jet {
        let a0 = self.value();
        let d = self.poly_coeffs(|k| binom(p, k) * base_pow * a0.powi(-(k as i32)));
        self.compose(&d)
    }

    /// Principal power.
    pub fn powf(&self, p: f64) -> Jet {
        let pc = C64::new(p, 0.0);
        self.pow_branch(pc, self.value().powc(pc))
    }

    /// Square root on the branch whose value is `root` (root² = a₀).
    pub fn sqrt_branch(&self, root: C64) -> Jet {
        self.pow_branch(C64::new(0.5, 0.0), root)
    }

    /// Principal square root.
    pub fn sqrt(&self) -> Jet {
        self.sqrt_branch(self.value().sqrt())
    }

    pub fn sin(&self) -> Jet {
        let a0 = self.value();
        let d = self.poly_coeffs(|k| {
            let v = match k % 4 {
                0 => a0.sin(),
                1 => a0.cos(),
                2 => -a0.sin(),
                _ => -a0.cos(),
            };
            v / factorial(k)
        });
        self.compose(&d)
    }

    pub fn cos(&self) -> Jet {
        let a0 = self.value();
        let d = self.poly_coeffs(|k| {
            let v = match k % 4 {
                0 => a0.cos(),
                1 => -a0.sin(),
                2 => -a0.cos(),
                _ => a0.sin(),
            };
            v / factorial(k)
        });
        self.compose(&d)
    }

    /// Integer power by repeated multiplication.
    pub fn powi(&self, n: u32) -> Jet {
        let mut r = Jet::constant(self.nvars(), self.order(), C64::new(1.0, 0.0));
        for _ in 0..n {
            r = &r * self;
        }
        r
    }

    pub fn is_finite(&self) -> bool {
        self.c.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }
}

impl Add for &Jet {
    type Output = Jet;
    fn add(self, o: &Jet) -> Jet {
        let (a, b) = self.aligned(o);
        Jet { space: a.space.clone(), c: a.c.iter().zip(&b.c).map(|(x, y)| x + y).collect() }
    }
}
impl Sub for &Jet {
    type Output = Jet;
    fn sub(self, o: &Jet) -> Jet {
        let (a, b) = self.aligned(o);
        Jet { space: a.space.clone(), c: a.c.iter().zip(&b.c).map(|(x, y)| x - y).collect() }
    }
}
impl Mul for &Jet {
    type Output = Jet;
    fn mul(self, o: &Jet) -> Jet {
        let (a, b) = self.aligned(o);
        a.mul_raw(&b)
    }
}
impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(C64::new(-1.0, 0.0))
    }
}
impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        &self + &o
    }
}
impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        &self - &o
    }
}
impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        &self * &o
    }
}
impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        -&self
    }
}

impl Jet {
    pub fn div(&self, o: &Jet) -> Jet {
        self * &o.recip()
    }
}
