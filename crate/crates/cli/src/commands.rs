//! Subcommand implementations. Each returns the text written to stdout; file outputs go
//! under the configured directory with names stamped by the command and configuration.

use std::fs;
use std::path::PathBuf;

use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};
use trapped_pressure::fixtures::{make_cat_suspension, make_toy};
use trapped_pressure::flow::{integrate_sampled, FlowSystem, IntegratorConfig};
use trapped_pressure::pressure::{
    agreement_tolerance, log_unstable_jacobian, nh_check, prepare_pressure, JacobianRecord,
    NHReport, PressureEstimate, VariationalEstimate,
};
use trapped_pressure::spacetime::{horizon_roots, SpacetimeParams, IDX_R};
use trapped_pressure::trapped::{photon_region_bounds, spherical_orbit_constants, KerrFlow};

use crate::config::{RunConfig, SystemKind};
use crate::error::CliError;

/// First 12 hex digits of the SHA-256 of the command name and the resolved configuration.
pub fn run_stamp(command: &str, config: &RunConfig) -> Result<String, CliError> {
    let mut h = Sha256::new();
    h.update(command.as_bytes());
    h.update(b"\n");
    h.update(serde_json::to_vec(config)?);
    Ok(hex::encode(h.finalize())[..12].to_string())
}

struct Outputs {
    dir: PathBuf,
    prefix: String,
    written: Vec<PathBuf>,
}

impl Outputs {
    fn new(command: &str, config: &RunConfig) -> Result<Self, CliError> {
        fs::create_dir_all(&config.output_dir)?;
        Ok(Self {
            dir: config.output_dir.clone(),
            prefix: format!("{command}-{}", run_stamp(command, config)?),
            written: Vec::new(),
        })
    }

    fn write(&mut self, ext: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(format!("{}.{ext}", self.prefix));
        fs::write(&path, bytes)?;
        self.written.push(path);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, value: &T) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write("json", &bytes)
    }

    fn listing(&self) -> String {
        self.written
            .iter()
            .map(|p| format!("wrote {}\n", p.display()))
            .collect()
    }
}

pub fn spacetime_params(config: &RunConfig) -> Result<SpacetimeParams, CliError> {
    let s = &config.spacetime;
    Ok(SpacetimeParams::new(s.mass, s.spin, s.lambda)?)
}

pub fn build_system(config: &RunConfig) -> Result<Box<dyn FlowSystem>, CliError> {
    Ok(match config.system {
        SystemKind::Kerr | SystemKind::Schwarzschild => {
            Box::new(KerrFlow::new(spacetime_params(config)?))
        }
        SystemKind::Toy => {
            let t = &config.toy;
            Box::new(make_toy(t.nu, t.omega1, t.omega2)?)
        }
        SystemKind::Cat => Box::new(make_cat_suspension()),
    })
}

pub fn integrator(config: &RunConfig) -> Result<IntegratorConfig, CliError> {
    let i = &config.integrator;
    let kerr = matches!(config.system, SystemKind::Kerr | SystemKind::Schwarzschild);
    let cfg = IntegratorConfig {
        rel_tol: i.rel_tol,
        abs_tol: i.abs_tol,
        max_step: i.max_step,
        renorm_interval: i.renorm_interval,
        shadow_tol: (kerr && i.shadow_tol > 0.0).then_some(i.shadow_tol),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn samples(system: &dyn FlowSystem, n: usize, seed: u64) -> Result<Vec<Vec<f64>>, CliError> {
    let s = system.sample_trapped(n, seed);
    if s.is_empty() {
        return Err(CliError::Invalid(format!("{} yielded no trapped samples", system.name())));
    }
    Ok(s)
}

fn pretty<T: Serialize>(value: &T) -> Result<String, CliError> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

pub fn horizons(config: &RunConfig) -> Result<String, CliError> {
    let params = spacetime_params(config)?;
    pretty(&json!({
        "spacetime": config.spacetime,
        "horizons": horizon_roots(&params),
    }))
}

#[derive(Serialize)]
struct RegionRow {
    r: f64,
    phi: f64,
    eta: f64,
}

pub fn photon_region(config: &RunConfig) -> Result<String, CliError> {
    let params = spacetime_params(config)?;
    let [r1, r2] = photon_region_bounds(&params);
    let mut radii: Vec<f64> = if r1 == r2 || config.photon_region.rows <= 1 {
        vec![r1]
    } else {
        let n = config.photon_region.rows;
        (0..n).map(|i| r1 + (r2 - r1) * i as f64 / (n - 1) as f64).collect()
    };
    radii.extend(&config.photon_region.radii);
    radii.sort_by(f64::total_cmp);
    radii.dedup();
    let rows = radii
        .iter()
        .map(|&r| {
            let o = spherical_orbit_constants(&params, r)?;
            Ok(RegionRow { r, phi: o.phi, eta: o.eta })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    pretty(&json!({
        "spacetime": config.spacetime,
        "bounds": [r1, r2],
        "rows": rows,
    }))
}

pub fn orbit(config: &RunConfig) -> Result<String, CliError> {
    let system = build_system(config)?;
    let cfg = integrator(config)?;
    let o = &config.orbit;
    let pool = samples(system.as_ref(), config.sampling.count.max(o.sample + 1), config.sampling.seed)?;
    let start = pool.get(o.sample).ok_or_else(|| {
        CliError::Invalid(format!("orbit.sample = {} but only {} samples exist", o.sample, pool.len()))
    })?;
    let traj = integrate_sampled(system.as_ref(), start, o.horizon, o.h_out, &cfg)?;

    let mut out = Outputs::new("orbit", config)?;
    let mut csv = Vec::new();
    traj.write_csv(system.as_ref(), &mut csv)?;
    out.write("csv", &csv)?;
    let summary = json!({
        "config": config,
        "system": system.name(),
        "initial_state": start,
        "final_state": traj.last_state(),
        "conserved": traj.conserved_names,
        "max_drift": traj.max_drift,
        "escape_time": traj.escape_time,
        "points": traj.states.len(),
    });
    out.json(&summary)?;
    let mut text = format!("{} points, escape_time {:?}\n", traj.states.len(), traj.escape_time);
    for (n, d) in traj.conserved_names.iter().zip(&traj.max_drift) {
        text += &format!("max drift {n}: {d:.3e}\n");
    }
    Ok(text + &out.listing())
}

pub fn lyapunov(config: &RunConfig) -> Result<String, CliError> {
    use rayon::prelude::*;
    let system = build_system(config)?;
    let cfg = integrator(config)?;
    let l = &config.lyapunov;
    let pool = samples(system.as_ref(), l.samples, config.sampling.seed)?;
    let records = pool
        .par_iter()
        .enumerate()
        .map(|(i, p)| log_unstable_jacobian(system.as_ref(), p, i, l.horizon, &cfg))
        .collect::<Result<Vec<JacobianRecord>, _>>()?;

    let mut out = Outputs::new("lyapunov", config)?;
    let mut table = String::from("sample,horizon,lambda_u,rate,asymptotic_rate,alignment_spread,aligned\n");
    for r in &records {
        table += &format!(
            "{},{},{},{},{},{},{}\n",
            r.sample, r.horizon, r.lambda_u, r.rate, r.asymptotic_rate, r.alignment_spread, r.aligned
        );
    }
    out.write("csv", table.as_bytes())?;
    out.json(&json!({ "config": config, "system": system.name(), "records": records }))?;
    Ok(table + &out.listing())
}

fn run_nh(config: &RunConfig, system: &dyn FlowSystem, cfg: &IntegratorConfig) -> Result<NHReport, CliError> {
    let n = &config.nh;
    let pool = samples(system, n.samples, config.sampling.seed)?;
    Ok(nh_check(system, &pool, n.r_cap, n.horizon, cfg)?)
}

fn nh_summary(nh: &NHReport) -> String {
    format!(
        "nu_min {:.6}  nu_s {:.6}  mu_max {:.6}  r_star {} (cap {})  samples {}  ambiguous {}\n",
        nh.nu_min, nh.nu_s, nh.mu_max, nh.r_star, nh.r_cap, nh.n_samples, nh.ambiguous_samples
    )
}

pub fn nh(config: &RunConfig) -> Result<String, CliError> {
    let system = build_system(config)?;
    let cfg = integrator(config)?;
    let report = run_nh(config, system.as_ref(), &cfg)?;
    let mut out = Outputs::new("nh-check", config)?;
    out.json(&json!({ "config": config, "system": system.name(), "report": report }))?;
    Ok(nh_summary(&report) + &out.listing())
}

#[derive(Serialize)]
struct Agreement {
    s: f64,
    separated: f64,
    variational: f64,
    gap: f64,
    tolerance: f64,
    agree: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    minimizer_r_sphere: Option<f64>,
}

#[derive(Serialize)]
struct PressureReport<'a> {
    config: &'a RunConfig,
    system: String,
    estimates: Vec<PressureEstimate>,
    nh: Option<NhSummary>,
    variational: Vec<VariationalEstimate>,
    variational_refused: Option<String>,
    agreement: Vec<Agreement>,
}

#[derive(Serialize)]
struct NhSummary {
    nu_min: f64,
    mu_max: f64,
    r_star: u32,
    r_cap: u32,
    horizon: f64,
    n_samples: usize,
}

/// Separated-set estimates for every `s` of the configuration and, when requested, the
/// variational estimates with their cross-agreement. With `strict`, a coverage warning
/// or a failed agreement is a quality-gate failure.
pub fn pressure(config: &RunConfig, strict: bool) -> Result<String, CliError> {
    let system = build_system(config)?;
    let cfg = integrator(config)?;
    let p = &config.pressure;
    if p.s.is_empty() {
        return Err(CliError::Invalid("pressure.s is empty".into()));
    }
    let pool = samples(system.as_ref(), config.sampling.count, config.sampling.seed)?;
    let inputs = prepare_pressure(system.as_ref(), &pool, &p.eps, &p.t, p.h_sep, &cfg)?;
    let estimates: Vec<PressureEstimate> = p.s.iter().map(|s| inputs.estimate(*s)).collect();

    let mut report = PressureReport {
        config,
        system: system.name(),
        estimates,
        nh: None,
        variational: Vec::new(),
        variational_refused: None,
        agreement: Vec::new(),
    };
    if p.variational {
        let kerr = matches!(config.system, SystemKind::Kerr | SystemKind::Schwarzschild);
        let nh = run_nh(config, system.as_ref(), &cfg)?;
        report.nh = Some(NhSummary {
            nu_min: nh.nu_min,
            mu_max: nh.mu_max,
            r_star: nh.r_star,
            r_cap: nh.r_cap,
            horizon: nh.horizon,
            n_samples: nh.n_samples,
        });
        for est in &report.estimates {
            match inputs.variational(est.s, &nh) {
                Ok(v) => {
                    let tolerance = agreement_tolerance(est, v.value);
                    let gap = (est.p_hat - v.value).abs();
                    report.agreement.push(Agreement {
                        s: est.s,
                        separated: est.p_hat,
                        variational: v.value,
                        gap,
                        tolerance,
                        agree: gap <= tolerance,
                        minimizer_r_sphere: kerr.then(|| pool[v.argmin][IDX_R]),
                    });
                    report.variational.push(v);
                }
                Err(e) => {
                    report.variational_refused = Some(e.to_string());
                    break;
                }
            }
        }
    }

    let mut out = Outputs::new("pressure", config)?;
    let mut csv = Vec::new();
    for (i, est) in report.estimates.iter().enumerate() {
        let mut part = Vec::new();
        est.write_csv(&mut part)?;
        let skip = if i == 0 { 0 } else { part.iter().position(|b| *b == b'\n').map_or(0, |n| n + 1) };
        csv.extend_from_slice(&part[skip..]);
    }
    out.write("csv", &csv)?;
    out.json(&report)?;

    let mut text = format!(
        "{}: {} samples used, {} escaped\n{:>8} {:>12} {:>12}  coverage\n",
        report.system,
        report.estimates[0].samples_used,
        report.estimates[0].samples_escaped,
        "s",
        "P_hat",
        "stderr"
    );
    for est in &report.estimates {
        text += &format!(
            "{:>8} {:>12.6} {:>12.6}  {}\n",
            est.s,
            est.p_hat,
            est.stderr,
            if est.coverage_warning { "WARNING" } else { "ok" }
        );
    }
    if let Some(nh) = &report.nh {
        text += &format!("normal hyperbolicity: r_star {} of {}\n", nh.r_star, nh.r_cap);
    }
    for a in &report.agreement {
        text += &format!(
            "s = {}: variational {:.6}, gap {:.2e} (tolerance {:.2e}) {}\n",
            a.s,
            a.variational,
            a.gap,
            a.tolerance,
            if a.agree { "agree" } else { "DISAGREE" }
        );
    }
    if let Some(msg) = &report.variational_refused {
        text += &format!("variational estimate refused: {msg}\n");
    }
    text += &out.listing();

    if strict {
        let gate = if report.estimates.iter().any(|e| e.coverage_warning) {
            Some("coverage warning under --strict")
        } else if report.agreement.iter().any(|a| !a.agree) {
            Some("estimators disagree under --strict")
        } else {
            None
        };
        if let Some(msg) = gate {
            print!("{text}");
            return Err(CliError::Quality(msg.into()));
        }
    }
    Ok(text)
}
