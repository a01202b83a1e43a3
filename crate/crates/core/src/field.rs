//! Discrete fields on a tangential torus × truncated normal interval, their
//! L_p norms and the flat binary / JSON-sidecar file format.
//!
//! Layout: values are stored tangential-major, `values[j * M_n + i]` is the
//! value at (x′_j, x_n = y_i). Binary files start with a 32-byte header
//! (`b"DBVPFLD\0"`, u32 version, u32 dtype, u64 M′, u64 M_n) followed by
//! little-endian f32 (re, im) pairs in the same order.

use crate::error::{DbvpError, Result};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

/// Magic bytes of the binary field format.
pub const FIELD_MAGIC: [u8; 8] = *b"DBVPFLD\0";
/// Binary format version.
pub const FIELD_VERSION: u32 = 1;
/// dtype code for complex64 (f32 re, f32 im).
pub const DTYPE_COMPLEX64: u32 = 1;

/// Periodic tangential grid x′_j = j·L′/M′, j = 0..M′.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TangentialGrid {
    pub length: f64,
    pub points: usize,
}

impl TangentialGrid {
    pub fn new(length: f64, points: usize) -> Result<Self> {
        if !(length > 0.0 && length.is_finite()) || points == 0 {
            return Err(DbvpError::Argument(format!(
                "tangential grid needs L' > 0 and M' >= 1 (got {length}, {points})"
            )));
        }
        Ok(TangentialGrid { length, points })
    }
    pub fn spacing(&self) -> f64 {
        self.length / self.points as f64
    }
    pub fn node(&self, j: usize) -> f64 {
        j as f64 * self.spacing()
    }
    pub fn nodes(&self) -> Vec<f64> {
        (0..self.points).map(|j| self.node(j)).collect()
    }
    /// Angular frequencies in DFT order (the Nyquist mode is negative).
    pub fn frequencies(&self) -> Vec<f64> {
        let m = self.points as i64;
        let w = 2.0 * std::f64::consts::PI / self.length;
        (0..m).map(|k| if k < (m + 1) / 2 { k } else { k - m }).map(|k| w * k as f64).collect()
    }
}

/// Normal grid 0 = y_0 < … < y_{M_n−1} = L_n.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalGrid {
    pub nodes: Vec<f64>,
}

impl NormalGrid {
    /// Uniform nodes on [0, L_n].
    pub fn uniform(length: f64, points: usize) -> Result<Self> {
        if !(length > 0.0 && length.is_finite()) || points < 2 {
            return Err(DbvpError::Argument(format!(
                "normal grid needs L_n > 0 and M_n >= 2 (got {length}, {points})"
            )));
        }
        let h = length / (points - 1) as f64;
        let mut nodes: Vec<f64> = (0..points).map(|i| i as f64 * h).collect();
        nodes[points - 1] = length;
        Ok(NormalGrid { nodes })
    }

    /// Geometric clustering at x_n = 0 with first spacing `first`.
    pub fn geometric(length: f64, points: usize, first: f64) -> Result<Self> {
        if !(length > 0.0 && length.is_finite()) || points < 2 || !(first > 0.0) {
            return Err(DbvpError::Argument(format!(
                "geometric normal grid needs L_n > 0, M_n >= 2, h_0 > 0 (got {length}, {points}, {first})"
            )));
        }
        let n = (points - 1) as f64;
        if first * n >= length {
            return Self::uniform(length, points);
        }
        // Solve first·(r^n − 1)/(r − 1) = length for r > 1 by bisection.
        let total = |r: f64| first * ((r.powf(n) - 1.0) / (r - 1.0));
        let (mut lo, mut hi) = (1.0 + 1e-12, 2.0);
        while total(hi) < length {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if total(mid) < length {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let r = 0.5 * (lo + hi);
        let mut nodes = Vec::with_capacity(points);
        let mut y = 0.0;
        let mut h = first;
        for _ in 0..points {
            nodes.push(y);
            y += h;
            h *= r;
        }
        let scale = length / nodes[points - 1];
        for v in nodes.iter_mut() {
            *v *= scale;
        }
        nodes[points - 1] = length;
        Ok(NormalGrid { nodes })
    }

    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 || nodes[0] != 0.0 || nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(DbvpError::Argument("normal nodes must start at 0 and increase strictly".into()));
        }
        Ok(NormalGrid { nodes })
    }
    pub fn len(&self) -> usize {
        self.nodes.len()
    }
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
    pub fn length(&self) -> f64 {
        *self.nodes.last().expect("nonempty grid")
    }
    /// Uniform spacing if the grid is uniform (relative tolerance 1e−12).
    pub fn uniform_spacing(&self) -> Option<f64> {
        let h = self.length() / (self.len() - 1) as f64;
        self.nodes
            .iter()
            .enumerate()
            .all(|(i, &y)| (y - i as f64 * h).abs() <= 1e-12 * self.length())
            .then_some(h)
    }
    /// Trapezoid weights.
    pub fn weights(&self) -> Vec<f64> {
        let m = self.len();
        let mut w = vec![0.0; m];
        for i in 0..m - 1 {
            let d = self.nodes[i + 1] - self.nodes[i];
            w[i] += 0.5 * d;
            w[i + 1] += 0.5 * d;
        }
        w
    }
}

/// Complex field on TangentialGrid × NormalGrid.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteField {
    pub tgrid: TangentialGrid,
    pub ngrid: NormalGrid,
    pub values: Vec<C64>,
    /// Exponent of the discrete L_p norm.
    pub p: f64,
}

impl DiscreteField {
    pub fn zeros(tgrid: TangentialGrid, ngrid: NormalGrid) -> Self {
        let n = tgrid.points * ngrid.len();
        DiscreteField { tgrid, ngrid, values: vec![C64::new(0.0, 0.0); n], p: 2.0 }
    }

    pub fn from_values(tgrid: TangentialGrid, ngrid: NormalGrid, values: Vec<C64>) -> Result<Self> {
        if values.len() != tgrid.points * ngrid.len() {
            return Err(DbvpError::Argument(format!(
                "field has {} values, grid needs {}",
                values.len(),
                tgrid.points * ngrid.len()
            )));
        }
        if values.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(DbvpError::Argument("field contains non-finite values".into()));
        }
        Ok(DiscreteField { tgrid, ngrid, values, p: 2.0 })
    }

    /// Sample g(x′, x_n) on the grid.
    pub fn from_fn(tgrid: TangentialGrid, ngrid: NormalGrid, g: impl Fn(f64, f64) -> C64) -> Self {
        let mut values = Vec::with_capacity(tgrid.points * ngrid.len());
        for j in 0..tgrid.points {
            let x = tgrid.node(j);
            for &y in &ngrid.nodes {
                values.push(g(x, y));
            }
        }
        DiscreteField { tgrid, ngrid, values, p: 2.0 }
    }

    pub fn with_values(&self, values: Vec<C64>) -> Self {
        DiscreteField { tgrid: self.tgrid, ngrid: self.ngrid.clone(), values, p: self.p }
    }

    pub fn m_normal(&self) -> usize {
        self.ngrid.len()
    }

    pub fn at(&self, j: usize, i: usize) -> C64 {
        self.values[j * self.m_normal() + i]
    }

    /// Discrete L_p norm (trapezoid in x_n, rectangle rule on the torus).
    pub fn norm_p(&self, p: f64) -> f64 {
        weighted_norm(&self.values, &self.ngrid.weights(), self.tgrid.spacing(), p)
    }

    /// Norm with the field's own exponent.
    pub fn norm(&self) -> f64 {
        self.norm_p(self.p)
    }

    /// Boundary trace x_n = 0 (length M′).
    pub fn boundary(&self) -> Vec<C64> {
        (0..self.tgrid.points).map(|j| self.at(j, 0)).collect()
    }

    pub fn same_grid(&self, o: &DiscreteField) -> bool {
        self.tgrid == o.tgrid && self.ngrid == o.ngrid
    }

    /// ‖self − o‖₂/‖o‖₂.
    pub fn relative_l2_error(&self, reference: &DiscreteField) -> Result<f64> {
        if !self.same_grid(reference) {
            return Err(DbvpError::Argument("fields live on different grids".into()));
        }
        let diff: Vec<C64> = self.values.iter().zip(&reference.values).map(|(a, b)| a - b).collect();
        let w = self.ngrid.weights();
        let h = self.tgrid.spacing();
        Ok(weighted_norm(&diff, &w, h, 2.0) / weighted_norm(&reference.values, &w, h, 2.0).max(f64::MIN_POSITIVE))
    }

    /// Write the binary file and its JSON sidecar (`<path>.json`).
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(32 + 8 * self.values.len());
        buf.extend_from_slice(&FIELD_MAGIC);
        buf.extend_from_slice(&FIELD_VERSION.to_le_bytes());
        buf.extend_from_slice(&DTYPE_COMPLEX64.to_le_bytes());
        buf.extend_from_slice(&(self.tgrid.points as u64).to_le_bytes());
        buf.extend_from_slice(&(self.ngrid.len() as u64).to_le_bytes());
        for v in &self.values {
            buf.extend_from_slice(&(v.re as f32).to_le_bytes());
            buf.extend_from_slice(&(v.im as f32).to_le_bytes());
        }
        std::fs::File::create(path)?.write_all(&buf)?;
        let side = FieldSidecar {
            format: "dbvp-field".into(),
            version: FIELD_VERSION,
            dtype: "complex64".into(),
            layout: "tangential-major".into(),
            m_tangential: self.tgrid.points,
            m_normal: self.ngrid.len(),
            l_tangential: self.tgrid.length,
            normal_nodes: self.ngrid.nodes.clone(),
            p: self.p,
        };
        let json = serde_json::to_string_pretty(&side).map_err(|e| DbvpError::Io(std::io::Error::other(e)))?;
        std::fs::write(sidecar_path(path), json + "\n")?;
        Ok(())
    }

    /// Read a binary file with its sidecar.
    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        let side_txt = std::fs::read_to_string(sidecar_path(path))?;
        let side: FieldSidecar = serde_json::from_str(&side_txt)
            .map_err(|e| DbvpError::Config(format!("field sidecar {}: {e}", sidecar_path(path).display())))?;
        if bytes.len() < 32 || bytes[..8] != FIELD_MAGIC {
            return Err(DbvpError::Config(format!("{}: not a field file (bad magic)", path.display())));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
        if u32_at(8) != FIELD_VERSION || u32_at(12) != DTYPE_COMPLEX64 {
            return Err(DbvpError::Config(format!(
                "{}: unsupported version/dtype {}/{}",
                path.display(),
                u32_at(8),
                u32_at(12)
            )));
        }
        let (mt, mn) = (u64_at(16) as usize, u64_at(24) as usize);
        if mt != side.m_tangential || mn != side.m_normal || side.normal_nodes.len() != mn {
            return Err(DbvpError::Config(format!("{}: header and sidecar dimensions disagree", path.display())));
        }
        if bytes.len() != 32 + 8 * mt * mn {
            return Err(DbvpError::Config(format!("{}: truncated payload", path.display())));
        }
        let f32_at = |o: usize| f32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes")) as f64;
        let values = (0..mt * mn).map(|k| C64::new(f32_at(32 + 8 * k), f32_at(36 + 8 * k))).collect();
        let tgrid = TangentialGrid::new(side.l_tangential, mt).map_err(|e| DbvpError::Config(e.to_string()))?;
        let ngrid = NormalGrid::from_nodes(side.normal_nodes).map_err(|e| DbvpError::Config(e.to_string()))?;
        let mut f = DiscreteField::from_values(tgrid, ngrid, values).map_err(|e| DbvpError::Config(e.to_string()))?;
        f.p = side.p;
        Ok(f)
    }
}

/// JSON descriptor written next to every binary field file.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FieldSidecar {
    pub format: String,
    pub version: u32,
    pub dtype: String,
    pub layout: String,
    pub m_tangential: usize,
    pub m_normal: usize,
    pub l_tangential: f64,
    pub normal_nodes: Vec<f64>,
    pub p: f64,
}

/// `<path>.json`.
pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

/// (Σ_j Σ_i h′ w_i |v_{ji}|^p)^{1/p} in fixed summation order.
pub fn weighted_norm(values: &[C64], normal_weights: &[f64], h: f64, p: f64) -> f64 {
    let mn = normal_weights.len();
    let mut total = 0.0;
    for row in values.chunks(mn) {
        let mut s = 0.0;
        for (v, w) in row.iter().zip(normal_weights) {
            s += w * v.norm().powf(p);
        }
        total += s;
    }
    (h * total).powf(1.0 / p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frequencies_follow_dft_order() {
        let g = TangentialGrid::new(2.0 * std::f64::consts::PI, 4).unwrap();
        assert_eq!(g.frequencies(), vec![0.0, 1.0, -2.0, -1.0]);
        let g = TangentialGrid::new(2.0 * std::f64::consts::PI, 5).unwrap();
        assert_eq!(g.frequencies(), vec![0.0, 1.0, 2.0, -2.0, -1.0]);
    }

    #[test]
    fn geometric_grid_properties() {
        let g = NormalGrid::geometric(40.0, 200, 1e-3).unwrap();
        assert_eq!(g.nodes[0], 0.0);
        assert_eq!(g.length(), 40.0);
        assert!((g.nodes[1] - 1e-3).abs() < 1e-6);
        assert!(g.nodes.windows(3).all(|w| w[2] - w[1] > w[1] - w[0]));
        assert!(g.uniform_spacing().is_none());
        assert!(NormalGrid::uniform(2.0, 5).unwrap().uniform_spacing().is_some());
    }

    #[test]
    fn norms_of_known_functions() {
        let t = TangentialGrid::new(2.0, 8).unwrap();
        let n = NormalGrid::uniform(3.0, 31).unwrap();
        let f = DiscreteField::from_fn(t, n, |_, _| C64::new(1.0, 0.0));
        assert!((f.norm_p(2.0) - 6f64.sqrt()).abs() < 1e-12);
        assert!((f.norm_p(1.5) - 6f64.powf(1.0 / 1.5)).abs() < 1e-12);
        let z = DiscreteField::zeros(f.tgrid, f.ngrid.clone());
        assert_eq!(z.norm(), 0.0);
        assert_eq!(f.relative_l2_error(&f).unwrap(), 0.0);
    }

    #[test]
    fn binary_round_trip_and_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.bin");
        let t = TangentialGrid::new(1.0, 3).unwrap();
        let n = NormalGrid::geometric(2.0, 4, 0.1).unwrap();
        let f = DiscreteField::from_fn(t, n, |x, y| C64::new(x + 0.5, -y));
        f.save(&p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(&bytes[..8], b"DBVPFLD\0");
        assert_eq!(bytes.len(), 32 + 8 * 12);
        let g = DiscreteField::load(&p).unwrap();
        assert_eq!(g.ngrid, f.ngrid);
        for (a, b) in f.values.iter().zip(&g.values) {
            assert!((a - b).norm() < 1e-6);
        }
        std::fs::write(&p, b"garbage").unwrap();
        assert!(matches!(DiscreteField::load(&p), Err(DbvpError::Config(_))));
    }
}
