//! Command-line front end: `dbvp --config FILE --out DIR --probe NAME`.
//!
//! Probes and their outputs (all written to `--out`):
//!
//! | probe         | files                                                        |
//! |---------------|--------------------------------------------------------------|
//! | `resolvent`   | `solution.bin` (+ `solution.bin.json`), `resolvent_report.json` |
//! | `sector-scan` | `sector_scan.csv` (`theta,mu,lambda_re,lambda_im,norm_est`), `sector_summary.json` |
//! | `hinfty`      | `hinfty.csv` (`family_member,eps,sup_norm,ratio`), `hinfty_summary.json` |
//! | `decay`       | `decay.csv` (`component,mu,norm`), `decay_slopes.json`        |
//! | `parametrix`  | `parametrix_report.json`                                     |
//! | `hilbert`     | `hilbert.csv` (`mu_max,norm,ratio`), `hilbert_summary.json`   |
//!
//! Exit codes: 0 success, 1 I/O error, 2 configuration or usage error,
//! 3 numerical precondition failure, 4 probe instability. Given the same
//! configuration and seed, every probe writes byte-identical files.

use crate::config::{RunConfig, ShiftSetting};
use crate::degenerate::{
    degenerate_lattice, order_gain, parametrix_sigma, pi_symbol, sigma_symbol, verify_hypoellipticity,
};
use crate::error::{DbvpError, Result};
use crate::fd::{assemble, solve_resolvent};
use crate::field::DiscreteField;
use crate::hinfty::{bound_probe, build_contour, hstar_family};
use crate::operator::EllipticOperatorSpec;
use crate::resolvent::{
    decay_probe, hilbert_bound_probe, random_values, scan_variation, sector_scan, select_shift, HilbertQuadrature,
    ResolventEngine, ResolventOperator, SpectralPoint,
};
use crate::symbol::{fit_shell_slope, parametrix_residual, shell_sups, slope_from_sups, Slope};
use clap::{Parser, ValueEnum};
use num_complex::Complex64 as C64;
use serde_json::{json, Value};
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Probe selected with `--probe`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ProbeName {
    Resolvent,
    SectorScan,
    Hinfty,
    Decay,
    Parametrix,
    Hilbert,
}

/// Resolvents and H-infinity calculus probes for degenerate elliptic
/// boundary problems on the half-plane.
#[derive(Debug, Parser)]
#[command(name = "dbvp", version)]
pub struct Cli {
    /// Run configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
    /// Random seed (overrides `seed` in the [probe] section).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Probe to run.
    #[arg(long, value_enum)]
    pub probe: ProbeName,
}

/// Process exit code of an error.
pub fn exit_code(e: &DbvpError) -> i32 {
    match e {
        DbvpError::Io(_) => 1,
        DbvpError::Config(_) | DbvpError::Argument(_) => 2,
        DbvpError::Instability(_) => 4,
        _ => 3,
    }
}

/// Parse arguments, run the probe and return the exit code. Errors are
/// reported on stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run_cli(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("dbvp: error: {e}");
            exit_code(&e)
        }
    }
}

/// Run a parsed command line.
pub fn run_cli(cli: &Cli) -> Result<()> {
    let text = std::fs::read_to_string(&cli.config)?;
    let mut cfg = RunConfig::parse(&text)?;
    if cli.seed.is_some() {
        cfg.probe.seed = cli.seed;
    }
    if cli.threads == Some(0) {
        return Err(DbvpError::Config("--threads must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
        .map_err(|e| DbvpError::Solver(format!("cannot start thread pool: {e}")))?;
    pool.install(|| run_probe(&cfg, cli.probe, &cli.out))
}

/// Run one probe with an already parsed configuration.
pub fn run_probe(cfg: &RunConfig, probe: ProbeName, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    match probe {
        ProbeName::Resolvent => cmd_resolvent(cfg, out),
        ProbeName::SectorScan => cmd_sector_scan(cfg, out),
        ProbeName::Hinfty => cmd_hinfty(cfg, out),
        ProbeName::Decay => cmd_decay_probe(cfg, out),
        ProbeName::Parametrix => cmd_parametrix_report(cfg, out),
        ProbeName::Hilbert => cmd_hilbert_probe(cfg, out),
    }
}

fn num(v: f64) -> String {
    format!("{v:.12e}")
}

fn write_json(path: &Path, v: &Value) -> Result<()> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| DbvpError::Solver(format!("JSON encoding: {e}")))?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

fn require_seed(cfg: &RunConfig, probe: &str) -> Result<u64> {
    cfg.probe
        .seed
        .ok_or_else(|| DbvpError::Config(format!("probe '{probe}' uses random fields: set seed in [probe] or pass --seed")))
}

/// Operator with the shift policy resolved.
pub fn resolved_operator(cfg: &RunConfig) -> Result<EllipticOperatorSpec> {
    let spec = cfg.operator_spec()?;
    if cfg.operator.shift != ShiftSetting::Auto {
        return Ok(spec);
    }
    let p = &cfg.probe;
    let lattice = degenerate_lattice(p.lattice_uniform, p.lattice_r0, p.lattice_shells)?;
    let mut thetas = p.thetas.clone();
    thetas.push(0.0);
    let c = select_shift(&spec, &thetas, &lattice)?;
    Ok(spec.with_shift(c))
}

/// Source field on the configured grid.
fn source_field(cfg: &RunConfig) -> Result<DiscreteField> {
    let tg = cfg.tangential_grid()?;
    let ng = cfg.normal_grid()?;
    match cfg.probe.source.as_str() {
        "random" => {
            let seed = require_seed(cfg, "random source")?;
            let len = tg.points * ng.len();
            DiscreteField::from_values(tg, ng, random_values(len, seed, 0))
        }
        "file" => {
            if cfg.probe.input.is_empty() {
                return Err(DbvpError::Config("source = file needs 'input' in [probe]".into()));
            }
            let f = DiscreteField::load(Path::new(&cfg.probe.input))?;
            if f.tgrid != tg || f.ngrid != ng {
                return Err(DbvpError::Config(format!(
                    "input field {} does not live on the configured grid",
                    cfg.probe.input
                )));
            }
            Ok(f)
        }
        _ => {
            let (xc, yc) = (0.5 * tg.length, (0.25 * ng.length()).min(1.0));
            Ok(DiscreteField::from_fn(tg, ng, move |x, y| {
                C64::new((-((x - xc).powi(2) + (y - yc).powi(2)) / 0.5).exp(), 0.0)
            }))
        }
    }
}

/// (A_T − λ)^{−1}f with solution file and defect report.
pub fn cmd_resolvent(cfg: &RunConfig, out: &Path) -> Result<()> {
    let spec = resolved_operator(cfg)?;
    let bspec = cfg.boundary_spec()?;
    let f = source_field(cfg)?;
    let lambda = C64::new(cfg.probe.lambda_re, cfg.probe.lambda_im);
    let sp = SpectralPoint::from_lambda(lambda)?;
    let eng = ResolventEngine::new(&spec, &bspec, f.tgrid, f.ngrid.clone())?;
    let u = f.with_values(eng.apply(&sp, &f.values)?);
    let fnorm = f.norm();
    let bres = eng.boundary_residual(&u.values).iter().map(|r| r.norm()).fold(0.0, f64::max);
    let oracle = if f.ngrid.uniform_spacing().is_some() {
        let op = assemble(&spec, &bspec, f.tgrid, &f.ngrid)?;
        Some(u.relative_l2_error(&solve_resolvent(&op, lambda, &f)?)?)
    } else {
        None
    };
    u.save(&out.join("solution.bin"))?;
    let report = json!({
        "boundary": bspec.name,
        "lambda_re": lambda.re,
        "lambda_im": lambda.im,
        "theta": sp.theta,
        "mu": sp.mu,
        "shift": spec.shift,
        "approximate": eng.approximate(),
        "input_l2": fnorm,
        "output_l2": u.norm(),
        "boundary_residual_max": bres,
        "boundary_residual_relative": if fnorm > 0.0 { bres / fnorm } else { 0.0 },
        "oracle_relative_difference": oracle,
    });
    write_json(&out.join("resolvent_report.json"), &report)
}

/// ‖λ(A_T − λ)^{−1}‖ estimates on the (θ, μ) grid.
pub fn cmd_sector_scan(cfg: &RunConfig, out: &Path) -> Result<()> {
    let seed = require_seed(cfg, "sector-scan")?;
    let spec = resolved_operator(cfg)?;
    let bspec = cfg.boundary_spec()?;
    let eng = ResolventEngine::new(&spec, &bspec, cfg.tangential_grid()?, cfg.normal_grid()?)?;
    let mus = cfg.probe_mus()?;
    let p = &cfg.probe;
    let rows = sector_scan(&eng, &p.thetas, &mus, p.trials, p.power_steps, seed)?;
    let mut csv = String::from("theta,mu,lambda_re,lambda_im,norm_est\n");
    for r in &rows {
        let est = r.norm_est.map(num).unwrap_or_default();
        let _ = writeln!(csv, "{},{},{},{},{}", num(r.theta), num(r.mu), num(r.lambda.re), num(r.lambda.im), est);
    }
    std::fs::write(out.join("sector_scan.csv"), csv)?;
    let summary: Vec<Value> = p
        .thetas
        .iter()
        .map(|&t| {
            let v = scan_variation(&rows, t);
            json!({"theta": t, "variation": v.map(|v| v.0), "slope": v.map(|v| v.1)})
        })
        .collect();
    write_json(&out.join("sector_summary.json"), &json!({"boundary": bspec.name, "seed": seed, "thetas": summary}))
}

/// H∞ bound probe over the family sweep for every configured ε.
pub fn cmd_hinfty(cfg: &RunConfig, out: &Path) -> Result<()> {
    let seed = require_seed(cfg, "hinfty")?;
    let spec = resolved_operator(cfg)?;
    let bspec = cfg.boundary_spec()?;
    let eng = ResolventEngine::new(&spec, &bspec, cfg.tangential_grid()?, cfg.normal_grid()?)?;
    let c = &cfg.contour;
    let q = build_contour(c.theta_prime, c.mu_min, c.mu_max, c.nodes)?;
    let mut csv = String::from("family_member,eps,sup_norm,ratio\n");
    let mut per_eps = Vec::new();
    let (mut c_max, mut c_min, mut delta_max) = (None::<f64>, None::<f64>, None::<f64>);
    for &eps in &cfg.probe.eps {
        let family = hstar_family(eps, cfg.probe.family_size, c.theta_prime)?;
        if family.is_empty() {
            continue;
        }
        let probe = bound_probe(&family, &q, &eng, cfg.probe.trials, seed)?;
        for (k, m) in probe.members.iter().enumerate() {
            let _ = writeln!(csv, "{k},{},{},{}", num(eps), num(m.sup_norm), num(m.ratio));
        }
        c_max = Some(c_max.map_or(probe.c_est, |v| v.max(probe.c_est)));
        c_min = Some(c_min.map_or(probe.c_est, |v| v.min(probe.c_est)));
        delta_max = Some(delta_max.map_or(probe.refinement_delta, |v| v.max(probe.refinement_delta)));
        per_eps.push(json!({
            "eps": eps,
            "c_est": probe.c_est,
            "c_est_refined": probe.c_est_refined,
            "refinement_delta": probe.refinement_delta,
        }));
    }
    std::fs::write(out.join("hinfty.csv"), csv)?;
    let spread = match (c_max, c_min) {
        (Some(a), Some(b)) if b > 0.0 => Some(a / b),
        _ => None,
    };
    let summary = json!({
        "boundary": bspec.name,
        "seed": seed,
        "theta_prime": c.theta_prime,
        "nodes_per_ray": c.nodes,
        "c_est": c_max,
        "refinement_delta": delta_max,
        "eps_spread": spread,
        "per_eps": per_eps,
    });
    write_json(&out.join("hinfty_summary.json"), &summary)
}

/// Decay slopes of the resolvent components against ⟨μ⟩.
pub fn cmd_decay_probe(cfg: &RunConfig, out: &Path) -> Result<()> {
    let spec = resolved_operator(cfg)?;
    let bspec = cfg.boundary_spec()?;
    let mus = cfg.probe_mus()?;
    let p = &cfg.probe;
    let mut csv = String::from("component,mu,norm\n");
    let mut slopes = serde_json::Map::new();
    for comp in cfg.decay_components() {
        let r = decay_probe(comp, &spec, &bspec, p.decay_theta, &mus, &p.x_samples, &p.xi_samples)?;
        for (m, n) in r.mus.iter().zip(&r.norms) {
            let _ = writeln!(csv, "{},{},{}", comp.name(), num(*m), num(*n));
        }
        slopes.insert(
            comp.name().to_string(),
            json!({"slope": r.slope, "expected": comp.expected_slope(), "boundary_l2_slope": r.boundary_l2_slope}),
        );
    }
    std::fs::write(out.join("decay.csv"), csv)?;
    write_json(&out.join("decay_slopes.json"), &json!({"boundary": bspec.name, "theta": p.decay_theta, "components": slopes}))
}

fn slope_json(s: &Slope) -> Value {
    match s {
        Slope::Finite(v) => json!(v),
        Slope::IdenticallyZero => json!("identically-zero"),
    }
}

/// Hypoellipticity certificate and parametrix order report.
pub fn cmd_parametrix_report(cfg: &RunConfig, out: &Path) -> Result<()> {
    let spec = resolved_operator(cfg)?;
    let bspec = cfg.boundary_spec()?;
    let p = &cfg.probe;
    let lattice = degenerate_lattice(p.lattice_uniform, p.lattice_r0, p.lattice_shells)?;
    let pi = pi_symbol(&spec, p.parametrix_theta)?;
    let sig = sigma_symbol(&bspec, &pi)?;
    let rep = verify_hypoellipticity(&sig, &lattice, p.max_order)?;
    let s = parametrix_sigma(&sig, &rep, p.parametrix_terms)?;
    let min_r = 2.0 * rep.radius_r;
    let s_slope = fit_shell_slope(&s, &lattice, min_r, 1.0)?;
    let gain = order_gain(&s, &bspec, &lattice, min_r)?;
    let res = parametrix_residual(&sig.symbol, &s, p.parametrix_terms + 1)?;
    let res_sups = shell_sups(&res, &lattice, min_r)?;
    let report = json!({
        "boundary": bspec.name,
        "theta": p.parametrix_theta,
        "hypoellipticity": rep,
        "parametrix_slope": slope_json(&s_slope),
        "s_sharp_phi1_slope": slope_json(&gain),
        "residual_slope": slope_json(&slope_from_sups(&res_sups, 1.0)),
        "residual_shell_sups": res_sups,
    });
    write_json(&out.join("parametrix_report.json"), &report)
}

/// Truncation study of the Hilbert-transform-type integral I_θ.
pub fn cmd_hilbert_probe(cfg: &RunConfig, out: &Path) -> Result<()> {
    let spec = resolved_operator(cfg)?;
    let bspec = cfg.boundary_spec()?;
    let u = source_field(cfg)?;
    let p = &cfg.probe;
    let rows = hilbert_bound_probe(&spec, &bspec, p.hilbert_theta, &p.hilbert_mu_max, &u, HilbertQuadrature::default())?;
    let mut csv = String::from("mu_max,norm,ratio\n");
    for r in &rows {
        let _ = writeln!(csv, "{},{},{}", num(r.mu_max), num(r.norm), num(r.ratio));
    }
    std::fs::write(out.join("hilbert.csv"), csv)?;
    let change = if rows.len() >= 2 {
        let (a, b) = (rows[rows.len() - 2].norm, rows[rows.len() - 1].norm);
        Some((b - a).abs() / b.max(f64::MIN_POSITIVE))
    } else {
        None
    };
    write_json(
        &out.join("hilbert_summary.json"),
        &json!({"boundary": bspec.name, "theta": p.hilbert_theta, "last_relative_change": change}),
    )
}
