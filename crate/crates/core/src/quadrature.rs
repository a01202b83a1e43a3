//! Small quadrature and 1-D optimisation helpers.

/// Gauss–Legendre nodes and weights on [−1, 1] (Newton on P_n).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Legendre needs at least one node");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Composite Gauss–Legendre rule on [a, b] with `panels` panels of
/// `order` nodes each. Nodes are increasing.
pub fn composite_gauss(a: f64, b: f64, panels: usize, order: usize) -> (Vec<f64>, Vec<f64>) {
    let (gx, gw) = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut xs = Vec::with_capacity(panels * order);
    let mut ws = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let c = a + (p as f64 + 0.5) * h;
        for (x, w) in gx.iter().zip(&gw) {
            xs.push(c + 0.5 * h * x);
            ws.push(0.5 * h * w);
        }
    }
    (xs, ws)
}

/// Maximise a function on [a, b] by a coarse scan with `scan` points
/// followed by golden-section refinement around the best sample.
/// Returns (argmax, max).
pub fn maximize_scan_golden(f: impl Fn(f64) -> f64, a: f64, b: f64, scan: usize) -> (f64, f64) {
    let scan = scan.max(3);
    let h = (b - a) / (scan - 1) as f64;
    let mut best = (a, f(a));
    let mut best_k = 0;
    for k in 1..scan {
        let x = a + k as f64 * h;
        let v = f(x);
        if v > best.1 {
            best = (x, v);
            best_k = k;
        }
    }
    let lo = a + (best_k.saturating_sub(1)) as f64 * h;
    let hi = (a + (best_k + 1) as f64 * h).min(b);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut l, mut r) = (lo, hi);
    let mut c = r - g * (r - l);
    let mut d = l + g * (r - l);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..100 {
        if (r - l).abs() <= 1e-12 * (1.0 + l.abs() + r.abs()) {
            break;
        }
        if fc > fd {
            r = d;
            d = c;
            fd = fc;
            c = r - g * (r - l);
            fc = f(c);
        } else {
            l = c;
            c = d;
            fc = fd;
            d = l + g * (r - l);
            fd = f(d);
        }
    }
    for (x, v) in [(c, fc), (d, fd)] {
        if v > best.1 {
            best = (x, v);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_exactness() {
        for n in [1, 2, 5, 8] {
            let (x, w) = gauss_legendre(n);
            for k in 0..2 * n {
                let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(k as i32)).sum();
                let exact = if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
                assert!((s - exact).abs() < 1e-13, "n={n} k={k}");
            }
        }
        let (x, w) = composite_gauss(0.0, std::f64::consts::PI, 4, 8);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.sin()).sum();
        assert!((s - 2.0).abs() < 1e-13);
    }

    #[test]
    fn golden_finds_interior_max() {
        let (x, v) = maximize_scan_golden(|t| -(t - 0.3).powi(2) + 1.0, -2.0, 2.0, 17);
        assert!((x - 0.3).abs() < 1e-6 && (v - 1.0).abs() < 1e-12);
        let (x, _) = maximize_scan_golden(|t| t, 0.0, 1.0, 5);
        assert!((x - 1.0).abs() < 1e-9);
    }
}
