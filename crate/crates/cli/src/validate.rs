//! Fixture and oracle checks with known answers.

use std::f64::consts::FRAC_PI_2;
use std::fs;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};
use trapped_pressure::fixtures::{analytic_pressure, cat_entropy, make_cat_suspension, make_toy};
use trapped_pressure::flow::{integrate, top_lyapunov, FlowSystem, IntegratorConfig};
use trapped_pressure::pressure::{nh_check, prepare_pressure, telescoping_check, PressureInputs};
use trapped_pressure::spacetime::{
    dual_metric_g, horizon_roots, inverse_metric, PhasePoint, SpacetimeParams, IDX_PR, IDX_R,
};
use trapped_pressure::trapped::{spherical_orbit_constants, KerrFlow, SHADOW_TOL};

use crate::error::CliError;

pub const RTOL_ENV: &str = "TRAPPED_PRESSURE_RTOL";

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub reference: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Serialize)]
struct ValidateReport<'a> {
    rel_tol: f64,
    checks: &'a [Check],
    passed: usize,
    failed: usize,
}

struct Suite {
    checks: Vec<Check>,
}

impl Suite {
    fn near(&mut self, name: &str, value: f64, reference: f64, tolerance: f64) {
        self.checks.push(Check {
            name: name.into(),
            value,
            reference,
            tolerance,
            pass: (value - reference).abs() <= tolerance,
        });
    }

    fn below(&mut self, name: &str, value: f64, bound: f64) {
        self.checks.push(Check {
            name: name.into(),
            value,
            reference: 0.0,
            tolerance: bound,
            pass: value.abs() < bound,
        });
    }

    fn holds(&mut self, name: &str, ok: bool) {
        self.checks.push(Check {
            name: name.into(),
            value: if ok { 1.0 } else { 0.0 },
            reference: 1.0,
            tolerance: 0.0,
            pass: ok,
        });
    }

    /// Records a failed check when a computation errors instead of aborting the suite.
    fn attempt(&mut self, name: &str, f: impl FnOnce(&mut Self) -> trapped_pressure::Result<()>) {
        if let Err(e) = f(self) {
            eprintln!("{name}: {e}");
            self.checks.push(Check {
                name: name.into(),
                value: f64::NAN,
                reference: f64::NAN,
                tolerance: 0.0,
                pass: false,
            });
        }
    }
}

pub fn rel_tol_override() -> Result<Option<f64>, CliError> {
    match std::env::var(RTOL_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Invalid(format!("{RTOL_ENV} = {v:?} is not a number"))),
        Err(_) => Ok(None),
    }
}

fn toy_inputs(cfg: &IntegratorConfig) -> trapped_pressure::Result<PressureInputs> {
    let toy = make_toy(0.5, 1.0, 2f64.sqrt())?;
    prepare_pressure(
        &toy,
        &toy.sample_trapped(400, 1),
        &[0.2, 0.1, 0.05],
        &[10.0, 20.0, 30.0, 40.0, 60.0],
        0.5,
        cfg,
    )
}

fn run_checks(base: IntegratorConfig) -> Vec<Check> {
    let mut suite = Suite { checks: Vec::new() };
    let shadowed = base.shadowed(SHADOW_TOL);
    let photon_sphere = vec![0.0, 3.0, FRAC_PI_2, 0.0, -1.0, 0.0, 0.0, 27f64.sqrt()];

    suite.attempt("horizons.schwarzschild_event", |s| {
        let r = horizon_roots(&SpacetimeParams::schwarzschild(1.0)?);
        s.near("horizons.schwarzschild_event", r.r_event, 2.0, 1e-12);
        Ok(())
    });
    suite.attempt("horizons.de_sitter_ordering", |s| {
        let r = horizon_roots(&SpacetimeParams::new(1.0, 0.5, 0.03)?);
        s.holds(
            "horizons.de_sitter_ordering",
            r.r_minus < r.r_cauchy && r.r_cauchy < r.r_event && r.r_event < r.r_cosmo,
        );
        Ok(())
    });
    suite.attempt("photon_region.kerr_row_r3", |s| {
        let o = spherical_orbit_constants(&SpacetimeParams::kerr(1.0, 0.9)?, 3.0)?;
        s.near("photon_region.kerr_row_r3.phi", o.phi, -1.8, 1e-9);
        s.near("photon_region.kerr_row_r3.eta", o.eta, 27.0, 1e-9);
        Ok(())
    });
    suite.attempt("photon_sphere.invariance", |s| {
        let flow = KerrFlow::new(SpacetimeParams::schwarzschild(1.0)?);
        let tr = integrate(&flow, &photon_sphere, 200.0, &base)?;
        let dev = tr.states.iter().map(|z| (z[IDX_R] - 3.0).abs()).fold(0.0, f64::max);
        s.below("photon_sphere.invariance", dev, 1e-6);
        let drift = tr.max_drift.iter().copied().fold(0.0, f64::max);
        s.below("photon_sphere.conserved_drift", drift, 1e-8);
        Ok(())
    });
    suite.attempt("kerr.conserved_drift", |s| {
        let params = SpacetimeParams::kerr(1.0, 0.9)?;
        let mut z = [0.0, 6.0, 1.2, 0.0, -1.0, 0.0, 2.0, 1.5];
        let rest = dual_metric_g(&params, &PhasePoint::from_array(z))?;
        let grr = inverse_metric(&params, &PhasePoint::from_array(z))?[(1, 1)];
        z[IDX_PR] = (-rest / grr).sqrt();
        let tr = integrate(&KerrFlow::new(params), &z, 100.0, &base)?;
        let drift = tr.max_drift.iter().copied().fold(0.0, f64::max);
        s.below("kerr.conserved_drift", drift, 1e-8);
        Ok(())
    });
    suite.attempt("schwarzschild.top_exponent", |s| {
        let flow = KerrFlow::new(SpacetimeParams::schwarzschild(1.0)?);
        let l = top_lyapunov(&flow, &photon_sphere, 60.0, &shadowed)?;
        s.near("schwarzschild.top_exponent", l, 1.0 / 3f64.sqrt(), 1e-3);
        Ok(())
    });
    suite.attempt("cat.top_exponent", |s| {
        let cat = make_cat_suspension();
        let l = top_lyapunov(&cat, &[0.3, 0.6, 0.0], 20.0, &base)?;
        s.near("cat.top_exponent", l, cat_entropy(), 1e-3);
        Ok(())
    });
    suite.attempt("cat.r_star", |s| {
        let cat = make_cat_suspension();
        let nh = nh_check(&cat, &cat.sample_trapped(4, 1), 10, 20.0, &base)?;
        s.near("cat.r_star", nh.r_star as f64, 0.0, 0.0);
        Ok(())
    });
    suite.attempt("toy.pressure", |s| {
        let toy = make_toy(0.5, 1.0, 2f64.sqrt())?;
        let inputs = toy_inputs(&base)?;
        let nh = nh_check(&toy, &toy.sample_trapped(9, 1), 10, 40.0, &base)?;
        for sv in [0.0, 0.5, 1.0, 2.0] {
            let exact = analytic_pressure(&toy, sv)?;
            let tol = 0.05_f64.max(0.1 * exact.abs());
            s.near(&format!("toy.pressure_separated.s{sv}"), inputs.estimate(sv).p_hat, exact, tol);
            s.near(&format!("toy.pressure_variational.s{sv}"), inputs.variational(sv, &nh)?.value, exact, 1e-6);
        }
        Ok(())
    });
    suite.attempt("toy.telescoping", |s| {
        let toy = make_toy(0.5, 1.0, 2f64.sqrt())?;
        let tight = IntegratorConfig { rel_tol: 1e-14, abs_tol: 1e-14, ..base };
        let worst = (1..=10)
            .map(|k| telescoping_check(&toy, &[0.0, 0.0, 0.25, 0.5], k, &tight))
            .collect::<trapped_pressure::Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        s.below("toy.telescoping", worst, 1e-12);
        Ok(())
    });
    suite.attempt("schwarzschild.pressure", |s| {
        let flow = KerrFlow::new(SpacetimeParams::schwarzschild(1.0)?);
        let samples = flow.sample_trapped(200, 1);
        let inputs = prepare_pressure(
            &flow,
            &samples,
            &[0.2, 0.1, 0.05],
            &[10.0, 20.0, 30.0, 40.0, 60.0],
            0.5,
            &shadowed,
        )?;
        let exact = -0.5 / 3f64.sqrt();
        s.near("schwarzschild.pressure_separated", inputs.estimate(0.5).p_hat, exact, 0.1 * exact.abs());
        let nh = nh_check(&flow, &samples[..3], 10, 200.0, &shadowed)?;
        s.near("schwarzschild.pressure_variational", inputs.variational(0.5, &nh)?.value, exact, 1e-3);
        Ok(())
    });
    suite.attempt("pressure.determinism", |s| {
        let run = |threads: usize| -> trapped_pressure::Result<Vec<u8>> {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| trapped_pressure::Error::Estimator(e.to_string()))?;
            let est = pool.install(|| toy_inputs(&base))?.estimate(1.0);
            serde_json::to_vec(&est).map_err(|e| trapped_pressure::Error::Estimator(e.to_string()))
        };
        s.holds("pressure.determinism", run(1)? == run(3)?);
        Ok(())
    });
    suite.checks
}

/// Runs the suite, writes the JSON report and returns the table. Any failed check is a
/// quality-gate failure.
pub fn validate(out_dir: &Path) -> Result<String, CliError> {
    let mut base = IntegratorConfig::default();
    if let Some(tol) = rel_tol_override()? {
        base.rel_tol = tol;
        base.abs_tol = tol;
    }
    base.validate()?;
    let checks = run_checks(base);
    let failed = checks.iter().filter(|c| !c.pass).count();
    let report = ValidateReport {
        rel_tol: base.rel_tol,
        checks: &checks,
        passed: checks.len() - failed,
        failed,
    };
    let body = serde_json::to_vec_pretty(&report)?;
    let stamp = hex::encode(Sha256::digest(format!("validate\n{}", base.rel_tol)))[..12].to_string();
    fs::create_dir_all(out_dir)?;
    let path = out_dir.join(format!("validate-{stamp}.json"));
    fs::write(&path, [body.as_slice(), b"\n"].concat())?;

    let mut text = format!("{:<40} {:>14} {:>14} {:>10}  result\n", "check", "value", "reference", "tolerance");
    for c in &checks {
        text += &format!(
            "{:<40} {:>14.6e} {:>14.6e} {:>10.1e}  {}\n",
            c.name,
            c.value,
            c.reference,
            c.tolerance,
            if c.pass { "PASS" } else { "FAIL" }
        );
    }
    text += &format!("{} passed, {} failed\nwrote {}\n", report.passed, failed, path.display());
    if failed > 0 {
        print!("{text}");
        let names: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
        return Err(CliError::Quality(format!("failed: {}", names.join(", "))));
    }
    Ok(text)
}
