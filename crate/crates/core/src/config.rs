//! Run configuration: a line-oriented `key = value` format with
//! `[section]` headers and `#` comments.
//!
//! ```text
//! [operator]
//! preset = laplace
//! c0 = 1
//! [boundary]
//! preset = degenerate-sin2
//! [grid]
//! tangential_points = 64
//! ```
//!
//! Every key has a default; unknown sections or keys, duplicate keys and
//! unparsable values are rejected with the offending line number.
//! [`RunConfig::to_text`] writes every key, and parsing its output gives
//! back an equal configuration.

use crate::error::{DbvpError, Result};
use crate::expr::Expr;
use crate::field::{NormalGrid, TangentialGrid};
use crate::operator::{BoundaryOperatorSpec, EllipticOperatorSpec, ShiftPolicy};
use crate::resolvent::DecayComponent;
use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fmt::Write as _;

/// Shift constant of A + c.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ShiftSetting {
    Fixed(f64),
    /// Smallest admissible power of two (see `select_shift`).
    Auto,
}

/// `[operator]`: −Δ + c0 (`preset = laplace`) or explicit coefficient
/// expressions in x1, x2 (`preset = custom`).
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorConfig {
    pub preset: String,
    pub a11: String,
    pub a12: String,
    pub a22: String,
    pub b1: String,
    pub b2: String,
    pub c0: String,
    pub shift: ShiftSetting,
}

/// `[boundary]`: dirichlet, neumann, robin (φ₀ = robin_a, φ₁ = robin_b),
/// degenerate-sin2, or custom expressions in x1.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryConfig {
    pub preset: String,
    pub robin_a: f64,
    pub robin_b: f64,
    pub phi0: String,
    pub phi1: String,
    /// Lower bound required of φ₀ + φ₁ (custom preset only).
    pub floor: f64,
}

/// `[grid]`: periodic tangential grid and normal grid on [0, normal_length].
#[derive(Clone, Debug, PartialEq)]
pub struct GridConfig {
    pub tangential_length: f64,
    pub tangential_points: usize,
    pub normal_length: f64,
    pub normal_points: usize,
    /// `uniform` or `geometric`.
    pub normal_spacing: String,
    /// First spacing of the geometric grid.
    pub normal_first: f64,
}

/// `[contour]`: two-ray contour of the functional calculus.
#[derive(Clone, Debug, PartialEq)]
pub struct ContourConfig {
    pub theta_prime: f64,
    pub mu_min: f64,
    pub mu_max: f64,
    /// Nodes per ray.
    pub nodes: usize,
}

/// `[probe]`: parameters of all probes.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeConfig {
    pub seed: Option<u64>,
    pub lambda_re: f64,
    pub lambda_im: f64,
    /// `gaussian`, `random` or `file` (then `input` is read).
    pub source: String,
    pub input: String,
    pub thetas: Vec<f64>,
    pub mu_min: f64,
    pub mu_max: f64,
    pub mu_count: usize,
    pub trials: usize,
    pub power_steps: usize,
    pub eps: Vec<f64>,
    pub family_size: usize,
    pub components: Vec<String>,
    pub decay_theta: f64,
    pub x_samples: Vec<f64>,
    pub xi_samples: Vec<f64>,
    pub hilbert_theta: f64,
    pub hilbert_mu_max: Vec<f64>,
    pub lattice_uniform: usize,
    pub lattice_r0: f64,
    pub lattice_shells: usize,
    pub max_order: usize,
    pub parametrix_terms: usize,
    /// Sector angle θ of the parametrix report.
    pub parametrix_theta: f64,
}

/// Complete run configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub operator: OperatorConfig,
    pub boundary: BoundaryConfig,
    pub grid: GridConfig,
    pub contour: ContourConfig,
    pub probe: ProbeConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            operator: OperatorConfig {
                preset: "laplace".into(),
                a11: "1".into(),
                a12: "0".into(),
                a22: "1".into(),
                b1: "0".into(),
                b2: "0".into(),
                c0: "1".into(),
                shift: ShiftSetting::Fixed(0.0),
            },
            boundary: BoundaryConfig {
                preset: "dirichlet".into(),
                robin_a: 1.0,
                robin_b: 1.0,
                phi0: "1".into(),
                phi1: "0".into(),
                floor: 0.5,
            },
            grid: GridConfig {
                tangential_length: PI,
                tangential_points: 32,
                normal_length: 12.0,
                normal_points: 96,
                normal_spacing: "geometric".into(),
                normal_first: 2e-3,
            },
            contour: ContourConfig { theta_prime: PI / 2.0, mu_min: 1e-3, mu_max: 1e3, nodes: 128 },
            probe: ProbeConfig {
                seed: None,
                lambda_re: -1.0,
                lambda_im: 0.0,
                source: "gaussian".into(),
                input: String::new(),
                thetas: vec![PI / 2.0, 3.0 * PI / 4.0],
                mu_min: 1.0,
                mu_max: 100.0,
                mu_count: 9,
                trials: 2,
                power_steps: 3,
                eps: vec![0.25, 0.5, 0.75],
                family_size: 20,
                components: DecayComponent::ALL.iter().map(|c| c.name().to_string()).collect(),
                decay_theta: PI / 2.0,
                x_samples: vec![0.0, 0.5, 1.0],
                xi_samples: vec![0.0, 1.0, 3.0],
                hilbert_theta: PI / 2.0,
                hilbert_mu_max: vec![16.0, 32.0, 64.0, 128.0],
                lattice_uniform: 8,
                lattice_r0: 4.0,
                lattice_shells: 5,
                max_order: 3,
                parametrix_terms: 4,
                parametrix_theta: 0.0,
            },
        }
    }
}

fn cfg_err(line: usize, msg: impl std::fmt::Display) -> DbvpError {
    DbvpError::Config(format!("line {line}: {msg}"))
}

fn parse_f64(line: usize, key: &str, v: &str) -> Result<f64> {
    match v.trim() {
        "pi" => Ok(PI),
        s => s.parse::<f64>().map_err(|_| cfg_err(line, format!("{key}: '{v}' is not a number"))),
    }
}

fn parse_usize(line: usize, key: &str, v: &str) -> Result<usize> {
    v.trim().parse::<usize>().map_err(|_| cfg_err(line, format!("{key}: '{v}' is not a nonnegative integer")))
}

fn parse_list(line: usize, key: &str, v: &str) -> Result<Vec<f64>> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| parse_f64(line, key, s)).collect()
}

fn parse_words(v: &str) -> Vec<String> {
    v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
}

fn check_expr(line: usize, key: &str, v: &str, nvars: usize) -> Result<String> {
    Expr::parse(v, nvars).map_err(|e| cfg_err(line, format!("{key}: {e}")))?;
    Ok(v.trim().to_string())
}

fn choice(line: usize, key: &str, v: &str, allowed: &[&str]) -> Result<String> {
    let v = v.trim();
    if allowed.contains(&v) {
        Ok(v.to_string())
    } else {
        Err(cfg_err(line, format!("{key}: '{v}' is not one of {}", allowed.join(", "))))
    }
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ")
}

const OPERATOR_COEFF_KEYS: [&str; 5] = ["a11", "a12", "a22", "b1", "b2"];

impl RunConfig {
    /// Parse configuration text.
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut c = RunConfig::default();
        let mut section: Option<String> = None;
        let mut seen = BTreeSet::new();
        let mut coeff_line = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let s = raw.split('#').next().unwrap_or("").trim();
            if s.is_empty() {
                continue;
            }
            if let Some(rest) = s.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| cfg_err(line, format!("malformed section header '{s}'")))?
                    .trim();
                if !["operator", "boundary", "grid", "contour", "probe"].contains(&name) {
                    return Err(cfg_err(line, format!("unknown section [{name}]")));
                }
                section = Some(name.to_string());
                continue;
            }
            let (key, value) =
                s.split_once('=').ok_or_else(|| cfg_err(line, format!("expected 'key = value', got '{s}'")))?;
            let (key, value) = (key.trim(), value.trim());
            let sec = section.as_deref().ok_or_else(|| cfg_err(line, format!("key '{key}' outside any section")))?;
            if !seen.insert(format!("{sec}.{key}")) {
                return Err(cfg_err(line, format!("duplicate key '{key}' in [{sec}]")));
            }
            let unknown = || cfg_err(line, format!("unknown key '{key}' in [{sec}]"));
            match sec {
                "operator" => {
                    let o = &mut c.operator;
                    match key {
                        "preset" => o.preset = choice(line, key, value, &["laplace", "custom"])?,
                        "a11" => o.a11 = check_expr(line, key, value, 2)?,
                        "a12" => o.a12 = check_expr(line, key, value, 2)?,
                        "a22" => o.a22 = check_expr(line, key, value, 2)?,
                        "b1" => o.b1 = check_expr(line, key, value, 2)?,
                        "b2" => o.b2 = check_expr(line, key, value, 2)?,
                        "c0" => o.c0 = check_expr(line, key, value, 2)?,
                        "shift" => {
                            o.shift = if value == "auto" {
                                ShiftSetting::Auto
                            } else {
                                ShiftSetting::Fixed(parse_f64(line, key, value)?)
                            }
                        }
                        _ => return Err(unknown()),
                    }
                    if OPERATOR_COEFF_KEYS.contains(&key) {
                        coeff_line.get_or_insert(line);
                    }
                }
                "boundary" => {
                    let b = &mut c.boundary;
                    match key {
                        "preset" => {
                            b.preset =
                                choice(line, key, value, &["dirichlet", "neumann", "robin", "degenerate-sin2", "custom"])?
                        }
                        "robin_a" => b.robin_a = parse_f64(line, key, value)?,
                        "robin_b" => b.robin_b = parse_f64(line, key, value)?,
                        "phi0" => b.phi0 = check_expr(line, key, value, 1)?,
                        "phi1" => b.phi1 = check_expr(line, key, value, 1)?,
                        "floor" => b.floor = parse_f64(line, key, value)?,
                        _ => return Err(unknown()),
                    }
                }
                "grid" => {
                    let g = &mut c.grid;
                    match key {
                        "tangential_length" => g.tangential_length = parse_f64(line, key, value)?,
                        "tangential_points" => g.tangential_points = parse_usize(line, key, value)?,
                        "normal_length" => g.normal_length = parse_f64(line, key, value)?,
                        "normal_points" => g.normal_points = parse_usize(line, key, value)?,
                        "normal_spacing" => g.normal_spacing = choice(line, key, value, &["uniform", "geometric"])?,
                        "normal_first" => g.normal_first = parse_f64(line, key, value)?,
                        _ => return Err(unknown()),
                    }
                }
                "contour" => {
                    let q = &mut c.contour;
                    match key {
                        "theta_prime" => q.theta_prime = parse_f64(line, key, value)?,
                        "mu_min" => q.mu_min = parse_f64(line, key, value)?,
                        "mu_max" => q.mu_max = parse_f64(line, key, value)?,
                        "nodes" => q.nodes = parse_usize(line, key, value)?,
                        _ => return Err(unknown()),
                    }
                }
                "probe" => {
                    let p = &mut c.probe;
                    match key {
                        "seed" => {
                            p.seed = Some(value.parse::<u64>().map_err(|_| {
                                cfg_err(line, format!("seed: '{value}' is not an unsigned integer"))
                            })?)
                        }
                        "lambda_re" => p.lambda_re = parse_f64(line, key, value)?,
                        "lambda_im" => p.lambda_im = parse_f64(line, key, value)?,
                        "source" => p.source = choice(line, key, value, &["gaussian", "random", "file"])?,
                        "input" => p.input = value.to_string(),
                        "thetas" => p.thetas = parse_list(line, key, value)?,
                        "mu_min" => p.mu_min = parse_f64(line, key, value)?,
                        "mu_max" => p.mu_max = parse_f64(line, key, value)?,
                        "mu_count" => p.mu_count = parse_usize(line, key, value)?,
                        "trials" => p.trials = parse_usize(line, key, value)?,
                        "power_steps" => p.power_steps = parse_usize(line, key, value)?,
                        "eps" => p.eps = parse_list(line, key, value)?,
                        "family_size" => p.family_size = parse_usize(line, key, value)?,
                        "components" => {
                            let words = parse_words(value);
                            for w in &words {
                                choice(line, key, w, &["pseudo", "green", "poisson", "trace"])?;
                            }
                            p.components = words;
                        }
                        "decay_theta" => p.decay_theta = parse_f64(line, key, value)?,
                        "x_samples" => p.x_samples = parse_list(line, key, value)?,
                        "xi_samples" => p.xi_samples = parse_list(line, key, value)?,
                        "hilbert_theta" => p.hilbert_theta = parse_f64(line, key, value)?,
                        "hilbert_mu_max" => p.hilbert_mu_max = parse_list(line, key, value)?,
                        "lattice_uniform" => p.lattice_uniform = parse_usize(line, key, value)?,
                        "lattice_r0" => p.lattice_r0 = parse_f64(line, key, value)?,
                        "lattice_shells" => p.lattice_shells = parse_usize(line, key, value)?,
                        "max_order" => p.max_order = parse_usize(line, key, value)?,
                        "parametrix_terms" => p.parametrix_terms = parse_usize(line, key, value)?,
                        "parametrix_theta" => p.parametrix_theta = parse_f64(line, key, value)?,
                        _ => return Err(unknown()),
                    }
                }
                _ => unreachable!("section names are validated"),
            }
        }
        if c.operator.preset == "laplace" {
            if let Some(line) = coeff_line {
                return Err(cfg_err(line, "coefficient keys a11..b2 require preset = custom"));
            }
        }
        Ok(c)
    }

    /// Canonical text with every key; `parse(to_text())` reproduces `self`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let o = &self.operator;
        let shift = match o.shift {
            ShiftSetting::Auto => "auto".to_string(),
            ShiftSetting::Fixed(v) => format!("{v:?}"),
        };
        let _ = writeln!(s, "[operator]\npreset = {}", o.preset);
        if o.preset == "custom" {
            let _ = writeln!(s, "a11 = {}\na12 = {}\na22 = {}\nb1 = {}\nb2 = {}", o.a11, o.a12, o.a22, o.b1, o.b2);
        }
        let _ = writeln!(s, "c0 = {}\nshift = {shift}", o.c0);
        let b = &self.boundary;
        let _ = writeln!(
            s,
            "\n[boundary]\npreset = {}\nrobin_a = {:?}\nrobin_b = {:?}\nphi0 = {}\nphi1 = {}\nfloor = {:?}",
            b.preset, b.robin_a, b.robin_b, b.phi0, b.phi1, b.floor
        );
        let g = &self.grid;
        let _ = writeln!(
            s,
            "\n[grid]\ntangential_length = {:?}\ntangential_points = {}\nnormal_length = {:?}\nnormal_points = {}\nnormal_spacing = {}\nnormal_first = {:?}",
            g.tangential_length, g.tangential_points, g.normal_length, g.normal_points, g.normal_spacing, g.normal_first
        );
        let q = &self.contour;
        let _ = writeln!(
            s,
            "\n[contour]\ntheta_prime = {:?}\nmu_min = {:?}\nmu_max = {:?}\nnodes = {}",
            q.theta_prime, q.mu_min, q.mu_max, q.nodes
        );
        let p = &self.probe;
        let _ = writeln!(s, "\n[probe]");
        if let Some(seed) = p.seed {
            let _ = writeln!(s, "seed = {seed}");
        }
        let _ = writeln!(s, "lambda_re = {:?}\nlambda_im = {:?}\nsource = {}", p.lambda_re, p.lambda_im, p.source);
        if !p.input.is_empty() {
            let _ = writeln!(s, "input = {}", p.input);
        }
        let _ = writeln!(
            s,
            "thetas = {}\nmu_min = {:?}\nmu_max = {:?}\nmu_count = {}\ntrials = {}\npower_steps = {}",
            fmt_list(&p.thetas),
            p.mu_min,
            p.mu_max,
            p.mu_count,
            p.trials,
            p.power_steps
        );
        let _ = writeln!(
            s,
            "eps = {}\nfamily_size = {}\ncomponents = {}\ndecay_theta = {:?}\nx_samples = {}\nxi_samples = {}",
            fmt_list(&p.eps),
            p.family_size,
            p.components.join(", "),
            p.decay_theta,
            fmt_list(&p.x_samples),
            fmt_list(&p.xi_samples)
        );
        let _ = writeln!(
            s,
            "hilbert_theta = {:?}\nhilbert_mu_max = {}\nlattice_uniform = {}\nlattice_r0 = {:?}\nlattice_shells = {}\nmax_order = {}\nparametrix_terms = {}\nparametrix_theta = {:?}",
            p.hilbert_theta,
            fmt_list(&p.hilbert_mu_max),
            p.lattice_uniform,
            p.lattice_r0,
            p.lattice_shells,
            p.max_order,
            p.parametrix_terms,
            p.parametrix_theta
        );
        s
    }

    /// The elliptic operator (shift `auto` is resolved later and starts at 0).
    pub fn operator_spec(&self) -> Result<EllipticOperatorSpec> {
        let o = &self.operator;
        let shift = match o.shift {
            ShiftSetting::Fixed(v) => v,
            ShiftSetting::Auto => 0.0,
        };
        let mut spec = EllipticOperatorSpec::laplace(2, 0.0, shift);
        spec.c0 = Expr::parse(&o.c0, 2)?;
        if o.preset == "custom" {
            let a12 = Expr::parse(&o.a12, 2)?;
            spec.a = vec![vec![Expr::parse(&o.a11, 2)?, a12.clone()], vec![a12, Expr::parse(&o.a22, 2)?]];
            spec.b = vec![Expr::parse(&o.b1, 2)?, Expr::parse(&o.b2, 2)?];
        }
        if o.shift == ShiftSetting::Auto {
            spec.policy = ShiftPolicy::Auto;
        }
        Ok(spec)
    }

    /// The boundary operator T = φ₀γ₀ + φ₁γ₁.
    pub fn boundary_spec(&self) -> Result<BoundaryOperatorSpec> {
        let b = &self.boundary;
        Ok(match b.preset.as_str() {
            "dirichlet" => BoundaryOperatorSpec::dirichlet(),
            "neumann" => BoundaryOperatorSpec::neumann(),
            "robin" => BoundaryOperatorSpec::robin(b.robin_a, b.robin_b),
            "degenerate-sin2" => BoundaryOperatorSpec::degenerate_sin2(),
            _ => BoundaryOperatorSpec {
                name: "custom".into(),
                phi0: Expr::parse(&b.phi0, 1)?,
                phi1: Expr::parse(&b.phi1, 1)?,
                floor: b.floor,
            },
        })
    }

    pub fn tangential_grid(&self) -> Result<TangentialGrid> {
        TangentialGrid::new(self.grid.tangential_length, self.grid.tangential_points)
            .map_err(|e| DbvpError::Config(format!("[grid]: {e}")))
    }

    pub fn normal_grid(&self) -> Result<NormalGrid> {
        let g = &self.grid;
        let r = if g.normal_spacing == "uniform" {
            NormalGrid::uniform(g.normal_length, g.normal_points)
        } else {
            NormalGrid::geometric(g.normal_length, g.normal_points, g.normal_first)
        };
        r.map_err(|e| DbvpError::Config(format!("[grid]: {e}")))
    }

    /// Geometric μ grid of the probe section.
    pub fn probe_mus(&self) -> Result<Vec<f64>> {
        let p = &self.probe;
        if !(p.mu_min > 0.0 && p.mu_max >= p.mu_min && p.mu_count >= 2) {
            return Err(DbvpError::Config(format!(
                "[probe]: need 0 < mu_min <= mu_max and mu_count >= 2 (got {}, {}, {})",
                p.mu_min, p.mu_max, p.mu_count
            )));
        }
        let r = (p.mu_max / p.mu_min).ln() / (p.mu_count - 1) as f64;
        Ok((0..p.mu_count).map(|k| p.mu_min * (r * k as f64).exp()).collect())
    }

    /// Decay components named in the probe section.
    pub fn decay_components(&self) -> Vec<DecayComponent> {
        DecayComponent::ALL.iter().copied().filter(|c| self.probe.components.iter().any(|n| n == c.name())).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::parse(&c.to_text()).unwrap(), c);
        assert_eq!(RunConfig::parse("").unwrap(), c);
    }

    #[test]
    fn custom_round_trip() {
        let text = "# comment\n[operator]\npreset = custom\na11 = 1 + 0.5*sin(x1)^2\na12 = 0.1\nshift = auto\n\
                    [boundary]\npreset = custom\nphi0 = cos(x1)^2\nphi1 = sin(x1)^2 # trailing\n\
                    [probe]\nseed = 42\nthetas = 1.0, pi\ncomponents = green, trace\neps =\n";
        let c = RunConfig::parse(text).unwrap();
        assert_eq!(c.operator.shift, ShiftSetting::Auto);
        assert_eq!(c.probe.seed, Some(42));
        assert_eq!(c.probe.thetas, vec![1.0, PI]);
        assert!(c.probe.eps.is_empty());
        assert_eq!(c.decay_components(), vec![DecayComponent::Green, DecayComponent::Trace]);
        assert_eq!(RunConfig::parse(&c.to_text()).unwrap(), c);
        let spec = c.operator_spec().unwrap();
        assert!(!spec.is_tangentially_constant());
        assert_eq!(c.boundary_spec().unwrap().name, "custom");
    }

    #[test]
    fn rejects_with_line_numbers() {
        let cases = [
            ("[operator]\nfoo = 1\n", "line 2"),
            ("[nope]\n", "line 1"),
            ("x = 1\n", "line 1"),
            ("[grid]\ntangential_points = -3\n", "line 2"),
            ("[grid]\n\ntangential_points = 3\ntangential_points = 4\n", "line 4"),
            ("[boundary]\npreset = weird\n", "line 2"),
            ("[operator]\nc0 = 1 +\n", "line 2"),
            ("[operator]\na11 = 2\n", "line 2"),
            ("[probe]\nnonsense\n", "line 2"),
        ];
        for (text, want) in cases {
            match RunConfig::parse(text) {
                Err(DbvpError::Config(m)) => assert!(m.starts_with(want), "{text:?}: {m}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn mu_grid() {
        let m = RunConfig::default().probe_mus().unwrap();
        assert_eq!(m.len(), 9);
        assert!((m[0] - 1.0).abs() < 1e-15 && (m[8] - 100.0).abs() < 1e-12);
    }
}
