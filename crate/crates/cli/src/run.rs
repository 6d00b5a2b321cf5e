//! Command implementations: each runs one analysis, writes CSV/JSON
//! artifacts plus a hash manifest, and optionally applies its check-mode
//! assertions.

use crate::config::*;
use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;
use timobeam::control::{project_target, symmetrize_conjugate, HumProblem, SpaceSpec};
use timobeam::fractional::{build_diffusive_grid, recommended_cutoff};
use timobeam::model::{check_condition_a1, classify_speeds, resonance_class, SpeedTag};
use timobeam::observability::{
    assemble_moment_system, classify_ratio, gap_report, ingham_threshold, ExpMode, RatioInput,
};
use timobeam::simulator::{
    assemble, evolve_scheme, fit_decay_exponent, modal_initial_data, TimeScheme,
};
use timobeam::spectrum::{conservative_spectrum, find_eigenvalues};
use timobeam::SystemParams;

#[derive(Debug, Error)]
pub enum RunError {
    /// Exit code 2.
    #[error("config error: {0}")]
    Config(String),
    /// Exit code 3.
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// Exit code 4.
    #[error("check failed: {0}")]
    CheckFailed(String),
}

impl RunError {
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Config(_) => 2,
            RunError::Numerical(_) => 3,
            RunError::CheckFailed(_) => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Spectrum,
    Decay,
    Gaps,
    Observability,
    Control,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Decay => "decay",
            Command::Gaps => "gaps",
            Command::Observability => "observability",
            Command::Control => "control",
        }
    }
}

/// Deterministic 17-significant-digit float formatting for CSV fields.
fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

/// Collects artifacts and writes the manifest at the end.
struct OutputDir {
    dir: PathBuf,
    files: Vec<(String, String, usize)>,
}

impl OutputDir {
    fn new(dir: &Path) -> Result<Self, RunError> {
        fs::create_dir_all(dir)
            .map_err(|e| RunError::Config(format!("cannot create output dir: {e}")))?;
        Ok(OutputDir {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<(), RunError> {
        let path = self.dir.join(name);
        fs::write(&path, contents)
            .map_err(|e| RunError::Config(format!("cannot write {name}: {e}")))?;
        let hash = Sha256::digest(contents.as_bytes());
        self.files
            .push((name.to_string(), format!("{hash:x}"), contents.len()));
        Ok(())
    }

    fn write_json(&mut self, name: &str, value: &serde_json::Value) -> Result<(), RunError> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| RunError::Config(format!("json encode: {e}")))?;
        text.push('\n');
        self.write(name, &text)
    }

    fn finish(mut self, command: Command, seed: u64) -> Result<(), RunError> {
        let files: Vec<serde_json::Value> = self
            .files
            .iter()
            .map(|(name, hash, bytes)| json!({"name": name, "sha256": hash, "bytes": bytes}))
            .collect();
        let manifest = json!({
            "schema_version": SCHEMA_VERSION,
            "command": command.name(),
            "seed": seed,
            "files": files,
        });
        self.write_json("manifest.json", &manifest)
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig, RunError> {
    let text = fs::read_to_string(path)
        .map_err(|e| RunError::Config(format!("cannot read {}: {e}", path.display())))?;
    let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| {
        RunError::Config(format!(
            "malformed config at line {} column {}: {e}",
            e.line(),
            e.column()
        ))
    })?;
    if cfg.schema_version != SCHEMA_VERSION {
        return Err(RunError::Config(format!(
            "schema_version {} unsupported (expected {SCHEMA_VERSION})",
            cfg.schema_version
        )));
    }
    cfg.params
        .validate()
        .map_err(|e| RunError::Config(format!("invalid params: {e}")))?;
    Ok(cfg)
}

fn parse_space(name: &str) -> Result<SpaceSpec, RunError> {
    match name {
        "H2" => Ok(SpaceSpec::H2),
        "D" => Ok(SpaceSpec::D),
        "D1" => Ok(SpaceSpec::D1),
        "D1log" | "D1Log" => Ok(SpaceSpec::D1Log),
        other => {
            if let Some(s) = other.strip_prefix("Vs:") {
                s.parse::<f64>()
                    .map(SpaceSpec::Vs)
                    .map_err(|_| RunError::Config(format!("bad Vs exponent in space '{other}'")))
            } else {
                Err(RunError::Config(format!(
                    "unknown space '{other}' (H2, D, D1, D1log, Vs:<s>)"
                )))
            }
        }
    }
}

/// Predicted polynomial decay exponent `delta(alpha)` of the configuration.
fn predicted_delta(p: &SystemParams) -> f64 {
    let equal = classify_speeds(p).tag == SpeedTag::EqualSpeeds;
    if equal && !resonance_class(p).is_resonant() {
        2.0 / (1.0 - p.alpha)
    } else {
        2.0 / (5.0 - p.alpha)
    }
}

/// Run one command against a loaded config; artifacts go to `out_dir`.
pub fn run(command: Command, cfg: &RunConfig, out_dir: &Path, check: bool) -> Result<(), RunError> {
    let mut out = OutputDir::new(out_dir)?;
    match command {
        Command::Spectrum => run_spectrum(cfg, &mut out, check)?,
        Command::Decay => run_decay(cfg, &mut out, check)?,
        Command::Gaps => run_gaps(cfg, &mut out, check)?,
        Command::Observability => run_observability(cfg, &mut out, check)?,
        Command::Control => run_control(cfg, &mut out, check)?,
    }
    out.finish(command, cfg.seed)
}

fn require<'a, T>(block: &'a Option<T>, name: &str) -> Result<&'a T, RunError> {
    block
        .as_ref()
        .ok_or_else(|| RunError::Config(format!("config is missing the '{name}' block")))
}

fn run_spectrum(cfg: &RunConfig, out: &mut OutputDir, check: bool) -> Result<(), RunError> {
    let sc = require(&cfg.spectrum, "spectrum")?;
    if sc.n_min > sc.n_max || sc.tol <= 0.0 {
        return Err(RunError::Config("need n_min <= n_max and tol > 0".into()));
    }
    let result = find_eigenvalues(&cfg.params, sc.n_min..=sc.n_max, sc.tol);
    let mut csv = String::from("branch,n,re_lambda,im_lambda,residual,seed_re,seed_im,dist\n");
    for m in &result.modes {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            m.branch,
            m.n,
            fmt(m.lambda.re),
            fmt(m.lambda.im),
            fmt(m.residual),
            fmt(m.seed.re),
            fmt(m.seed.im),
            fmt((m.lambda - m.seed).norm()),
        ));
    }
    out.write("spectrum.csv", &csv)?;
    let summary = json!({
        "schema_version": SCHEMA_VERSION,
        "n_modes": result.modes.len(),
        "n_failures": result.failures.len(),
        "failures": result.failures.iter().map(|f| f.to_string()).collect::<Vec<_>>(),
        "tol": sc.tol,
    });
    out.write_json("spectrum_summary.json", &summary)?;
    if !result.failures.is_empty() {
        return Err(RunError::Numerical(format!(
            "{} eigenvalue searches failed (first: {})",
            result.failures.len(),
            result.failures[0]
        )));
    }
    if check {
        for m in &result.modes {
            if m.residual > sc.tol {
                return Err(RunError::CheckFailed(format!(
                    "residual {} above tol at branch {} n {}",
                    m.residual, m.branch, m.n
                )));
            }
            if cfg.params.gamma > 0.0 && m.lambda.re >= 0.0 {
                return Err(RunError::CheckFailed(format!(
                    "nonnegative real part at branch {} n {}",
                    m.branch, m.n
                )));
            }
        }
    }
    Ok(())
}

fn run_decay(cfg: &RunConfig, out: &mut OutputDir, check: bool) -> Result<(), RunError> {
    let dc = require(&cfg.decay, "decay")?;
    let scheme = match dc.scheme.as_str() {
        "midpoint" => TimeScheme::ImplicitMidpoint,
        "backward_euler" => TimeScheme::BackwardEuler,
        other => return Err(RunError::Config(format!("unknown scheme '{other}'"))),
    };
    let p = &cfg.params;
    let grid = build_diffusive_grid(
        p.alpha,
        p.eta,
        dc.n_nodes,
        recommended_cutoff(p.alpha, 1e-12),
    )
    .map_err(|e| RunError::Numerical(e.to_string()))?;
    let mut gcsv = String::from("node,weight,mu\n");
    for j in 0..grid.len() {
        gcsv.push_str(&format!(
            "{},{},{}\n",
            fmt(grid.nodes[j]),
            fmt(grid.weights[j]),
            fmt(grid.mu_values[j])
        ));
    }
    out.write("grid.csv", &gcsv)?;

    let op = assemble(p, dc.n_elems, &grid).map_err(|e| RunError::Numerical(e.to_string()))?;
    let init = modal_initial_data(&op, dc.n_modes, dc.modal_exponent);
    let (mut trace, _) = evolve_scheme(&op, &init, dc.dt, dc.t_end, scheme)
        .map_err(|e| RunError::Numerical(e.to_string()))?;
    let mut tcsv = String::from("t,e1\n");
    for (t, e) in trace.times.iter().zip(&trace.energies) {
        tcsv.push_str(&format!("{},{}\n", fmt(*t), fmt(*e)));
    }
    out.write("trace.csv", &tcsv)?;

    let window = dc.window.map(|w| (w[0], w[1])).unwrap_or_else(|| {
        // skip the first five fundamental periods; late-time behavior only
        let mu1 = conservative_spectrum(p, 1..=1)[1].mu_squared.sqrt();
        (5.0 * 2.0 * std::f64::consts::PI / mu1, 0.95 * dc.t_end)
    });
    let fit = fit_decay_exponent(&trace, window).map_err(|e| RunError::Numerical(e.to_string()))?;
    trace.fitted_exponent = Some(fit.exponent);
    trace.fit_window = Some(window);
    let summary = json!({
        "schema_version": SCHEMA_VERSION,
        "fitted_exponent": trace.fitted_exponent,
        "fit_window": trace.fit_window,
        "predicted_delta": predicted_delta(p),
        "poly_residual": fit.poly_residual,
        "exp_residual": fit.exp_residual,
        "not_polynomial": fit.not_polynomial,
        "max_energy_increase": trace.max_energy_increase,
        "max_boundary_residual": trace.max_boundary_residual,
        "energy_initial": trace.energies.first(),
        "energy_final": trace.energies.last(),
        "grid": {
            "n_nodes": grid.len(),
            "cutoff": grid.cutoff,
            "tolerance": grid.tolerance,
            "achieved": grid.achieved,
            "validated_imag_range": grid.validated_imag_range,
        },
    });
    out.write_json("decay_summary.json", &summary)?;
    if check {
        if trace.max_energy_increase > 1e-12 {
            return Err(RunError::CheckFailed(format!(
                "energy increased by {} of E(0)",
                trace.max_energy_increase
            )));
        }
        if p.gamma == 0.0 {
            let e0 = trace.energies[0];
            let ef = trace.energies.last().unwrap();
            if (ef - e0).abs() > 1e-8 * e0 {
                return Err(RunError::CheckFailed(
                    "conservative run failed to conserve energy".into(),
                ));
            }
        } else if fit.not_polynomial {
            return Err(RunError::CheckFailed(
                "exponential model beat the polynomial model on the fit window".into(),
            ));
        }
    }
    Ok(())
}

fn run_gaps(cfg: &RunConfig, out: &mut OutputDir, check: bool) -> Result<(), RunError> {
    let gc = require(&cfg.gaps, "gaps")?;
    let p = &cfg.params;
    let modes = conservative_spectrum(p, -gc.n_max..=gc.n_max);
    let fam: Vec<ExpMode> = modes.iter().map(ExpMode::from_conservative).collect();
    let report = gap_report(&fam, gc.gamma_gap).map_err(|e| RunError::Numerical(e.to_string()))?;

    let mut csv = String::from("im_lo,gap,branch_lo,n_lo,branch_hi,n_hi,is_chain\n");
    for i in 0..report.sorted_modes.len() - 1 {
        let a = &report.sorted_modes[i];
        let b = &report.sorted_modes[i + 1];
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            fmt(a.lambda.im),
            fmt(b.lambda.im - a.lambda.im),
            a.branch,
            a.n,
            b.branch,
            b.n,
            report.chains.contains(&i) as u8,
        ));
    }
    out.write("gaps.csv", &csv)?;

    let speeds = classify_speeds(p);
    let dioph = classify_ratio(RatioInput::MachineReal(speeds.ratio));
    let a1 = check_condition_a1(p, gc.a1_scan_limit);
    let summary = json!({
        "schema_version": SCHEMA_VERSION,
        "speed_class": format!("{:?}", speeds.tag),
        "ratio": speeds.ratio,
        "resonance": format!("{:?}", resonance_class(p)),
        "diophantine": dioph,
        "ingham_threshold": ingham_threshold(p),
        "gamma_gap": report.gamma_gap,
        "n_chains": report.chains.len(),
        "min_same_branch_gap": report.min_same_branch_gap,
        "min_cross_branch_gap": report.min_cross_branch_gap,
        "scaling_fit": report.scaling_fit,
        "a1": a1,
    });
    out.write_json("gaps_summary.json", &summary)?;

    if check {
        if !a1.holds_on_range {
            return Err(RunError::CheckFailed(format!(
                "condition (A1) violated at {:?}",
                a1.witness
            )));
        }
        // when chains exist, the fitted gap law should be near an integer
        // exponent in [0, 2]
        if let Some(s) = report.scaling_fit {
            let near_integer = [0.0_f64, 1.0, 2.0]
                .iter()
                .any(|&b| (s.beta - b).abs() <= 0.3);
            if !near_integer {
                return Err(RunError::CheckFailed(format!(
                    "fitted gap exponent {} far from every predicted law",
                    s.beta
                )));
            }
        }
    }
    Ok(())
}

fn run_observability(cfg: &RunConfig, out: &mut OutputDir, check: bool) -> Result<(), RunError> {
    let oc = require(&cfg.observability, "observability")?;
    let p = &cfg.params;
    let space = parse_space(&oc.space)?;
    let t0 = ingham_threshold(p);
    let t_end = oc.t_factor * t0;
    if t_end <= t0 {
        return Err(RunError::Numerical(format!(
            "horizon {t_end} at or below the Ingham threshold {t0}"
        )));
    }
    let mut csv = String::from("truncation,n_chains,lambda_min_raw,lambda_min_adapted,ell0,ell1\n");
    let mut rows = Vec::new();
    for &n_max in &oc.truncations {
        if n_max < 1 {
            return Err(RunError::Config("truncations must be >= 1".into()));
        }
        let modes = conservative_spectrum(p, -n_max..=n_max);
        let fam: Vec<ExpMode> = modes.iter().map(ExpMode::from_conservative).collect();
        let report =
            gap_report(&fam, oc.gamma_gap).map_err(|e| RunError::Numerical(e.to_string()))?;
        let ms = assemble_moment_system(&report.sorted_modes, &report.chains, t_end, Some(t0))
            .map_err(|e| RunError::Numerical(e.to_string()))?;
        let raw_min = {
            let ms_raw = assemble_moment_system(&report.sorted_modes, &[], t_end, Some(t0))
                .map_err(|e| RunError::Numerical(e.to_string()))?;
            ms_raw.condition.0
        };
        let weights: Vec<f64> = ms
            .modes
            .iter()
            .map(|m| space.weight(m.branch, m.n))
            .collect();
        let ells = timobeam::observability::observability_constants(&ms, &weights);
        let (ell0, ell1) = match ells {
            Ok(v) => v,
            Err(e) => return Err(RunError::Numerical(e.to_string())),
        };
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            n_max,
            report.chains.len(),
            fmt(raw_min),
            fmt(ms.condition.0),
            fmt(ell0),
            fmt(ell1)
        ));
        rows.push(json!({
            "truncation": n_max,
            "n_chains": report.chains.len(),
            "lambda_min_raw": raw_min,
            "lambda_min_adapted": ms.condition.0,
            "lambda_max_adapted": ms.condition.1,
            "ell0": ell0,
            "ell1": ell1,
        }));
        if check && !(ell0 >= ell1 && ell1 > 0.0) {
            return Err(RunError::CheckFailed(format!(
                "observability constants out of order at truncation {n_max}: ({ell0}, {ell1})"
            )));
        }
    }
    out.write("observability.csv", &csv)?;
    let summary = json!({
        "schema_version": SCHEMA_VERSION,
        "space": oc.space,
        "horizon": t_end,
        "ingham_threshold": t0,
        "truncations": rows,
    });
    out.write_json("observability_summary.json", &summary)?;
    Ok(())
}

fn run_control(cfg: &RunConfig, out: &mut OutputDir, check: bool) -> Result<(), RunError> {
    let cc = require(&cfg.control, "control")?;
    let p = cfg.params;
    let space = parse_space(&cc.space)?;
    if let Some(n) = cc.n_samples {
        if n < 3 || (n - 1) % 2 != 0 {
            return Err(RunError::Config(
                "n_samples must be odd and at least 3".into(),
            ));
        }
    }
    let t0 = ingham_threshold(&p);
    let t_end = cc.t.unwrap_or(cc.t_factor * t0);
    let modes = conservative_spectrum(&p, -cc.n_max..=cc.n_max);
    let fam: Vec<ExpMode> = modes.iter().map(ExpMode::from_conservative).collect();
    let report = gap_report(&fam, None).map_err(|e| RunError::Numerical(e.to_string()))?;
    let sorted_modes: Vec<_> = report
        .sorted_modes
        .iter()
        .map(|em| {
            *modes
                .iter()
                .find(|m| m.branch.index() == em.branch && m.n == em.n)
                .expect("sorted family is a permutation of the input modes")
        })
        .collect();
    let min_horizon = if cc.allow_below_threshold {
        None
    } else {
        Some(t0)
    };
    let ms = assemble_moment_system(&report.sorted_modes, &report.chains, t_end, min_horizon)
        .map_err(|e| RunError::Numerical(e.to_string()))?;
    let hum = HumProblem::new(p, sorted_modes, ms, space)
        .map_err(|e| RunError::Numerical(e.to_string()))?;

    let target = if cc.random_target {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut t: Vec<Complex64> = (0..hum.len())
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        symmetrize_conjugate(&mut t, &hum.ms.modes);
        t
    } else {
        let entries: Vec<(u8, i32, Complex64)> = cc
            .target
            .iter()
            .map(|e| (e.branch, e.n, Complex64::new(e.re, e.im)))
            .collect();
        project_target(&entries, &hum.ms.modes).map_err(|e| RunError::Config(e.to_string()))?
    };

    let n_samples = cc.n_samples.unwrap_or_else(|| {
        // at least 40 samples per shortest modal period, rounded to an odd
        // count so the verification quadrature can halve its resolution
        let mu_max = hum
            .ms
            .modes
            .iter()
            .map(|m| m.lambda.im.abs())
            .fold(0.0, f64::max);
        let per_period = 40.0 * mu_max * t_end / (2.0 * std::f64::consts::PI);
        let m = (per_period.ceil() as usize).max(2048);
        2 * m.next_power_of_two() + 1
    });
    let result = hum
        .control_result(&target, n_samples)
        .map_err(|e| RunError::Numerical(e.to_string()))?;

    let mut csv = String::from("t,v_re,v_im\n");
    for (t, v) in result.control.times.iter().zip(&result.control.values) {
        csv.push_str(&format!("{},{},{}\n", fmt(*t), fmt(v.re), fmt(v.im)));
    }
    out.write("control.csv", &csv)?;

    let dual = hum
        .dual_target_norm(&target)
        .map_err(|e| RunError::Numerical(e.to_string()))?;
    let duality_bound = dual / hum.ell.1.sqrt();
    let summary = json!({
        "schema_version": SCHEMA_VERSION,
        "horizon": t_end,
        "ingham_threshold": t0,
        "space": cc.space,
        "n_modes": hum.len(),
        "control_l2_norm": result.control_l2_norm,
        "residual_norm": result.residual_norm,
        "target_norm": result.target_norm,
        "residual_over_target": result.residual_norm / result.target_norm,
        "gram_condition": result.gram_condition,
        "ell0": hum.ell.0,
        "ell1": hum.ell.1,
        "duality_bound": duality_bound,
        "duality_ratio": result.control_l2_norm / duality_bound,
        "declared_tolerance": hum.declared_tolerance,
    });
    out.write_json("control_summary.json", &summary)?;

    if check {
        if result.residual_norm > hum.declared_tolerance * result.target_norm {
            return Err(RunError::CheckFailed(format!(
                "null-control residual {} above tolerance",
                result.residual_norm / result.target_norm
            )));
        }
        if result.control_l2_norm > 1.1 * duality_bound {
            return Err(RunError::CheckFailed(format!(
                "control norm {} breaks the duality bound {}",
                result.control_l2_norm, duality_bound
            )));
        }
    }
    Ok(())
}
