//! Finite-difference oracle on the tangential torus × [0, L_n]: 5-point
//! stencil, ghost-point elimination of φ₀u + φ₁γ₁u = 0 at x_n = 0 and
//! homogeneous Dirichlet at x_n = L_n.
//!
//! The discrete operator is the pencil (A_h, B): interior rows of B are 1,
//! the boundary row of node j is scaled by 1/(φ₁ + 2hφ₀) so that it tends
//! to the Dirichlet row u₀ = 0 continuously as φ₁ → 0, and B carries the
//! matching weight b₀ = φ₁/(φ₁ + 2hφ₀). The resolvent is
//! u = (A_h − λB)^{−1}Bf, i.e. (M − λ)^{−1}f with M = B^{−1}A_h on the
//! nodes where b > 0.

use crate::error::{DbvpError, Result};
use crate::field::{DiscreteField, NormalGrid, TangentialGrid};
use crate::operator::{BoundaryOperatorSpec, EllipticOperatorSpec};
use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use num_complex::Complex64 as C64;

/// Largest system handled by the dense eigendecomposition.
pub const DENSE_LIMIT: usize = 4096;
/// Eigenbasis condition number above which `matrix_function` refuses.
pub const MAX_EIGEN_CONDITION: f64 = 1e8;
/// Relative residual required from every sparse solve.
pub const SOLVE_RESIDUAL_TOL: f64 = 1e-10;
/// Boundary weights b₀ at or below this value are treated as Dirichlet
/// nodes (u₀ = 0) by the dense matrix functions.
const DIRICHLET_WEIGHT: f64 = 1e-12;

/// Assembled finite-difference operator.
#[derive(Clone, Debug)]
pub struct FdOperator {
    pub tgrid: TangentialGrid,
    pub ngrid: NormalGrid,
    /// Normal spacing h.
    pub h: f64,
    /// Number of unknown normal levels (M_n − 1; the last node is 0).
    pub levels: usize,
    /// Entries of A_h (duplicates already accumulated), (row, col, value).
    entries: Vec<(usize, usize, C64)>,
    /// Diagonal of B.
    pub mass: Vec<f64>,
    /// Coefficient of the boundary datum g in each boundary row
    /// (inhomogeneous condition φ₀u + φ₁γ₁u = g).
    boundary_data_coeff: Vec<C64>,
}

impl FdOperator {
    pub fn unknowns(&self) -> usize {
        self.tgrid.points * self.levels
    }

    fn index(&self, j: usize, i: usize) -> usize {
        j * self.levels + i
    }

    /// Field values → unknown vector (drops the Dirichlet node at L_n).
    pub fn restrict(&self, f: &DiscreteField) -> Result<Vec<C64>> {
        if f.tgrid != self.tgrid || f.ngrid != self.ngrid {
            return Err(DbvpError::Argument("field grid does not match the FD operator grid".into()));
        }
        let mn = self.ngrid.len();
        let mut v = Vec::with_capacity(self.unknowns());
        for j in 0..self.tgrid.points {
            v.extend_from_slice(&f.values[j * mn..j * mn + self.levels]);
        }
        Ok(v)
    }

    /// Unknown vector → field (zero at L_n).
    pub fn extend(&self, v: &[C64]) -> DiscreteField {
        let mn = self.ngrid.len();
        let mut values = vec![C64::new(0.0, 0.0); self.tgrid.points * mn];
        for j in 0..self.tgrid.points {
            values[j * mn..j * mn + self.levels].copy_from_slice(&v[j * self.levels..(j + 1) * self.levels]);
        }
        DiscreteField { tgrid: self.tgrid, ngrid: self.ngrid.clone(), values, p: 2.0 }
    }

    /// y = A_h x.
    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![C64::new(0.0, 0.0); self.unknowns()];
        for &(r, c, v) in &self.entries {
            y[r] += v * x[c];
        }
        y
    }

    /// Sparse matrix α·A_h + β·B.
    fn pencil(&self, alpha: C64, beta: C64) -> Result<SparseColMat<usize, C64>> {
        let n = self.unknowns();
        let mut trip: Vec<Triplet<usize, usize, C64>> =
            self.entries.iter().map(|&(r, c, v)| Triplet::new(r, c, alpha * v)).collect();
        for (k, &b) in self.mass.iter().enumerate() {
            trip.push(Triplet::new(k, k, beta * b));
        }
        let trip = accumulate(trip);
        SparseColMat::try_new_from_triplets(n, n, &trip)
            .map_err(|e| DbvpError::Solver(format!("sparse assembly failed: {e:?}")))
    }

    fn solve_pencil(&self, alpha: C64, beta: C64, rhs: &[C64]) -> Result<Vec<C64>> {
        let m = self.pencil(alpha, beta)?;
        let lu = m.sp_lu().map_err(|e| DbvpError::Solver(format!("sparse LU failed: {e:?}")))?;
        let mut x = Mat::<C64>::from_fn(rhs.len(), 1, |i, _| rhs[i]);
        lu.solve_in_place(x.as_mut());
        let sol: Vec<C64> = (0..rhs.len()).map(|i| x[(i, 0)]).collect();
        // Residual check.
        let ax = self.apply(&sol);
        let mut rn = 0.0;
        let mut bn = 0.0;
        for k in 0..rhs.len() {
            let r = alpha * ax[k] + beta * self.mass[k] * sol[k] - rhs[k];
            rn += r.norm_sqr();
            bn += rhs[k].norm_sqr();
        }
        let rel = (rn / bn.max(f64::MIN_POSITIVE)).sqrt();
        if !(rel <= SOLVE_RESIDUAL_TOL) && bn > 0.0 {
            return Err(DbvpError::Solver(format!("relative residual {rel:.3e} exceeds {SOLVE_RESIDUAL_TOL:e}")));
        }
        Ok(sol)
    }

    /// Solve (A_h − λB)u = Bf (+ boundary data term).
    pub fn solve_vec(&self, lambda: C64, f: &[C64]) -> Result<Vec<C64>> {
        let rhs: Vec<C64> = f.iter().zip(&self.mass).map(|(v, b)| v * b).collect();
        self.solve_pencil(C64::new(1.0, 0.0), -lambda, &rhs)
    }

    /// Dirichlet-type nodes (b ≤ threshold) removed by the dense routines.
    fn active(&self) -> Vec<usize> {
        (0..self.unknowns()).filter(|&k| self.mass[k] > DIRICHLET_WEIGHT).collect()
    }

    /// Dense M = B^{−1}A_h on the active nodes.
    pub fn dense_reduced(&self) -> Result<(Vec<usize>, Mat<C64>)> {
        let act = self.active();
        if act.len() > DENSE_LIMIT {
            return Err(DbvpError::Precondition(format!(
                "dense matrix functions need <= {DENSE_LIMIT} unknowns (have {})",
                act.len()
            )));
        }
        let mut pos = vec![usize::MAX; self.unknowns()];
        for (p, &k) in act.iter().enumerate() {
            pos[k] = p;
        }
        let mut m = Mat::<C64>::zeros(act.len(), act.len());
        for &(r, c, v) in &self.entries {
            if pos[r] != usize::MAX && pos[c] != usize::MAX {
                m[(pos[r], pos[c])] += v / self.mass[r];
            }
        }
        Ok((act, m))
    }
}

fn accumulate(mut trip: Vec<Triplet<usize, usize, C64>>) -> Vec<Triplet<usize, usize, C64>> {
    trip.sort_by_key(|t| (t.col, t.row));
    let mut out: Vec<Triplet<usize, usize, C64>> = Vec::with_capacity(trip.len());
    for t in trip {
        match out.last_mut() {
            Some(l) if l.row == t.row && l.col == t.col => l.val += t.val,
            _ => out.push(t),
        }
    }
    out
}

/// Assemble the 5-point operator (n = 2, uniform normal grid).
pub fn assemble(
    spec: &EllipticOperatorSpec,
    bspec: &BoundaryOperatorSpec,
    tgrid: TangentialGrid,
    ngrid: &NormalGrid,
) -> Result<FdOperator> {
    if spec.n != 2 {
        return Err(DbvpError::Unsupported(format!("FD oracle supports n = 2 only (got {})", spec.n)));
    }
    let h = ngrid
        .uniform_spacing()
        .ok_or_else(|| DbvpError::Argument("FD oracle needs a uniform normal grid".into()))?;
    if ngrid.len() < 3 {
        return Err(DbvpError::Argument("FD oracle needs M_n >= 3".into()));
    }
    let mt = tgrid.points;
    let hx = tgrid.spacing();
    let levels = ngrid.len() - 1;
    let mut op = FdOperator {
        tgrid,
        ngrid: ngrid.clone(),
        h,
        levels,
        entries: Vec::new(),
        mass: vec![1.0; mt * levels],
        boundary_data_coeff: vec![C64::new(0.0, 0.0); mt],
    };
    let i_unit = C64::new(0.0, 1.0);
    let mut raw: Vec<Triplet<usize, usize, C64>> = Vec::new();
    let jp = |j: usize| (j + 1) % mt;
    let jm = |j: usize| (j + mt - 1) % mt;
    for j in 0..mt {
        let x = tgrid.node(j);
        let phi0 = bspec.phi0_at(&[x]);
        let phi1 = bspec.phi1_at(&[x]);
        if !(phi0 >= 0.0 && phi1 >= 0.0 && phi0 + phi1 >= bspec.floor) {
            return Err(DbvpError::Precondition(format!(
                "boundary coefficients at x'={x}: phi0={phi0}, phi1={phi1} violate phi >= 0, phi0+phi1 >= {}",
                bspec.floor
            )));
        }
        for i in 0..levels {
            let y = ngrid.nodes[i];
            let c = spec.const2_at(&[x, y])?;
            let row = op.index(j, i);
            // Stencil contributions (neighbour offset → coefficient); the
            // ghost neighbour (i − 1 < 0) is collected separately.
            let mut local: Vec<((usize, isize), C64)> = Vec::with_capacity(9);
            let a11 = c.a11 / (hx * hx);
            let a22 = c.a22 / (h * h);
            let cen = C64::new(2.0 * a11 + 2.0 * a22 + c.c, 0.0);
            local.push(((j, 0), cen));
            let bx = i_unit * c.b1 / (2.0 * hx);
            local.push(((jp(j), 0), C64::new(-a11, 0.0) - bx));
            local.push(((jm(j), 0), C64::new(-a11, 0.0) + bx));
            let by = i_unit * c.b2 / (2.0 * h);
            let up = C64::new(-a22, 0.0) - by;
            let gamma = C64::new(-a22, 0.0) + by;
            local.push(((j, 1), up));
            if i > 0 {
                local.push(((j, -1), gamma));
            }
            if c.a12 != 0.0 {
                if i > 0 {
                    let k = C64::new(-2.0 * c.a12 / (4.0 * hx * h), 0.0);
                    local.push(((jp(j), 1), k));
                    local.push(((jp(j), -1), -k));
                    local.push(((jm(j), 1), -k));
                    local.push(((jm(j), -1), k));
                } else {
                    // One-sided u_y at the boundary.
                    let k = C64::new(-2.0 * c.a12 / (2.0 * hx * h), 0.0);
                    local.push(((jp(j), 1), k));
                    local.push(((jp(j), 0), -k));
                    local.push(((jm(j), 1), -k));
                    local.push(((jm(j), 0), k));
                }
            }
            if i == 0 {
                // Ghost: u_{−1} = u_1 − 2h(φ₀u₀ − g)/φ₁, row scaled by
                // φ₁/(φ₁ + 2hφ₀).
                let den = phi1 + 2.0 * h * phi0;
                let s = phi1 / den;
                for ((jj, di), v) in local.iter_mut() {
                    let _ = (jj, di);
                    *v *= s;
                }
                local.push(((j, 1), gamma * s));
                local.push(((j, 0), -gamma * (2.0 * h * phi0 / den)));
                op.mass[row] = s;
                // Datum g enters the right-hand side with −(−2hγ/den)·g
                // moved across: rhs += −2hγ g/den.
                op.boundary_data_coeff[j] = -gamma * (2.0 * h / den);
            }
            for ((jj, di), v) in local {
                let ii = i as isize + di;
                if ii < 0 {
                    continue;
                }
                let ii = ii as usize;
                if ii >= levels {
                    continue; // Dirichlet node at L_n.
                }
                raw.push(Triplet::new(row, op.index(jj, ii), v));
            }
        }
    }
    op.entries = accumulate(raw).into_iter().map(|t| (t.row, t.col, t.val)).collect();
    Ok(op)
}

/// Solve (A_h − λ)u = f (generalized pencil with boundary weights).
pub fn solve_resolvent(op: &FdOperator, lambda: C64, f: &DiscreteField) -> Result<DiscreteField> {
    let v = op.restrict(f)?;
    Ok(op.extend(&op.solve_vec(lambda, &v)?))
}

/// Solve (A_h − λ)u = 0 in the interior with boundary datum
/// φ₀u + φ₁γ₁u = g at x_n = 0 (Dirichlet data for Dirichlet bspec).
pub fn harmonic_extension(op: &FdOperator, lambda: C64, g: &[C64]) -> Result<DiscreteField> {
    if g.len() != op.tgrid.points {
        return Err(DbvpError::Argument("boundary datum length must equal M'".into()));
    }
    let mut rhs = vec![C64::new(0.0, 0.0); op.unknowns()];
    for j in 0..op.tgrid.points {
        rhs[op.index(j, 0)] = op.boundary_data_coeff[j] * g[j];
    }
    Ok(op.extend(&op.solve_pencil(C64::new(1.0, 0.0), -lambda, &rhs)?))
}

/// Discrete DtN map g ↦ γ₁u (second-order one-sided difference) for the
/// Dirichlet harmonic extension u.
pub fn dtn_map(op: &FdOperator, lambda: C64, g: &[C64]) -> Result<Vec<C64>> {
    let u = harmonic_extension(op, lambda, g)?;
    let h = op.h;
    Ok((0..op.tgrid.points)
        .map(|j| -(u.at(j, 0) * -3.0 + u.at(j, 1) * 4.0 - u.at(j, 2)) / (2.0 * h))
        .collect())
}

/// f(M)u by dense eigendecomposition M = VΛV^{−1} on the active nodes
/// (Dirichlet-type nodes stay 0).
pub fn matrix_function(op: &FdOperator, f: impl Fn(C64) -> C64, u: &DiscreteField) -> Result<DiscreteField> {
    let v = op.restrict(u)?;
    let (act, m) = op.dense_reduced()?;
    let n = act.len();
    let evd = m.eigen().map_err(|e| DbvpError::Solver(format!("eigendecomposition failed: {e:?}")))?;
    let vecs = evd.U();
    let vals = evd.S();
    let lu = vecs.partial_piv_lu();
    // Condition estimate ‖V‖₁‖V^{−1}‖₁.
    let mut inv = Mat::<C64>::identity(n, n);
    lu.solve_in_place(inv.as_mut());
    let norm1 = |a: MatRef<'_, C64>| {
        (0..a.ncols()).map(|c| (0..a.nrows()).map(|r| a[(r, c)].norm()).sum::<f64>()).fold(0.0, f64::max)
    };
    let cond = norm1(vecs) * norm1(inv.as_ref());
    if !(cond <= MAX_EIGEN_CONDITION) {
        return Err(DbvpError::Solver(format!("eigenbasis condition {cond:.3e} exceeds {MAX_EIGEN_CONDITION:e}")));
    }
    let mut y = Mat::<C64>::from_fn(n, 1, |p, _| v[act[p]]);
    lu.solve_in_place(y.as_mut());
    for p in 0..n {
        y[(p, 0)] *= f(vals[p]);
    }
    let z = vecs * &y;
    let mut out = vec![C64::new(0.0, 0.0); op.unknowns()];
    for p in 0..n {
        out[act[p]] = z[(p, 0)];
    }
    Ok(op.extend(&out))
}

/// Eigenvalues of M (dense; active nodes only), sorted by real part.
pub fn eigenvalues(op: &FdOperator) -> Result<Vec<C64>> {
    let (_, m) = op.dense_reduced()?;
    let mut ev = m.eigenvalues().map_err(|e| DbvpError::Solver(format!("eigenvalues failed: {e:?}")))?;
    ev.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok(ev)
}

fn time_march(op: &FdOperator, t: f64, u0: &[C64], steps: usize, cn: bool) -> Result<Vec<C64>> {
    let tau = t / steps as f64;
    let (alpha, beta_rhs) = if cn { (0.5 * tau, -0.5 * tau) } else { (tau, 0.0) };
    let m = op.pencil(C64::new(alpha, 0.0), C64::new(1.0, 0.0))?;
    let lu = m.sp_lu().map_err(|e| DbvpError::Solver(format!("sparse LU failed: {e:?}")))?;
    let mut u = u0.to_vec();
    for _ in 0..steps {
        let au = if cn { op.apply(&u) } else { vec![C64::new(0.0, 0.0); u.len()] };
        let mut x = Mat::<C64>::from_fn(u.len(), 1, |k, _| op.mass[k] * u[k] + au[k] * beta_rhs);
        lu.solve_in_place(x.as_mut());
        for (k, v) in u.iter_mut().enumerate() {
            *v = x[(k, 0)];
        }
    }
    Ok(u)
}

/// e^{−tM}u₀ by implicit Euler with Richardson extrapolation
/// 2·IE(2·steps) − IE(steps); error O((t/steps)²).
pub fn semigroup_step(op: &FdOperator, t: f64, u0: &DiscreteField, steps: usize) -> Result<DiscreteField> {
    if !(t > 0.0) || steps == 0 {
        return Err(DbvpError::Argument("semigroup_step needs t > 0 and steps >= 1".into()));
    }
    let v = op.restrict(u0)?;
    let coarse = time_march(op, t, &v, steps, false)?;
    let fine = time_march(op, t, &v, 2 * steps, false)?;
    let out: Vec<C64> = fine.iter().zip(&coarse).map(|(f, c)| f * 2.0 - c).collect();
    Ok(op.extend(&out))
}

/// e^{−tM}u₀ by Crank–Nicolson.
pub fn crank_nicolson(op: &FdOperator, t: f64, u0: &DiscreteField, steps: usize) -> Result<DiscreteField> {
    if !(t > 0.0) || steps == 0 {
        return Err(DbvpError::Argument("crank_nicolson needs t > 0 and steps >= 1".into()));
    }
    let v = op.restrict(u0)?;
    Ok(op.extend(&time_march(op, t, &v, steps, true)?))
}
