//! Flow integration with error control, plus the tangent (variational) flow.

mod rk;
mod tangent;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub(crate) use rk::{advance, Advance, StepHooks, Workspace};
pub use tangent::{
    alignment_time, flow_with_tangent, orthonormalize, top_lyapunov, GrowthCheckpoint,
    TangentBundleState,
};
pub(crate) use tangent::{random_direction, tangent_run};

/// One coordinate of a packing key: a value whose (circular, if `period` is set)
/// difference between two states never exceeds their distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyCoord {
    pub value: f64,
    pub period: Option<f64>,
}

/// A flow on phase space together with everything the estimators need from it.
///
/// States are plain `n`-vectors. Jacobians are written row-major into an `n×n` buffer.
/// Default shortest alignment transient for unstable directions.
pub const ALIGN_MIN: f64 = 30.0;

pub trait FlowSystem: Send + Sync {
    fn name(&self) -> String;

    fn dim(&self) -> usize;

    fn state_labels(&self) -> Vec<String> {
        (0..self.dim()).map(|i| format!("x{i}")).collect()
    }

    fn vector_field(&self, state: &[f64], out: &mut [f64]);

    fn jacobian(&self, state: &[f64], out: &mut [f64]);

    /// Phase-space distance; symmetric, zero only for identical states.
    fn distance(&self, a: &[f64], b: &[f64]) -> f64;

    /// Whether the state has left the compact region that carries the trapped set.
    fn escaped(&self, state: &[f64]) -> bool;

    /// Candidate points of the trapped set, deterministic in `seed`.
    fn sample_trapped(&self, n: usize, seed: u64) -> Vec<Vec<f64>>;

    /// Dimensions `(n_u, n_s)` of the normal unstable and stable bundles over the
    /// trapped set. A system whose trapped set is the whole space reports `(0, 0)`.
    fn normal_dims(&self) -> (usize, usize);

    /// Shortest transient that aligns a random tangent vector with the unstable bundle.
    fn alignment_floor(&self) -> f64 {
        ALIGN_MIN
    }

    fn conserved_names(&self) -> Vec<String> {
        Vec::new()
    }

    fn conserved(&self, _state: &[f64]) -> Vec<f64> {
        Vec::new()
    }

    /// Chart identifications applied after every accepted step. `frame` holds `k`
    /// tangent columns of length `dim` and must be transported with the state.
    /// Returns true when the state changed.
    fn canonicalize(&self, _state: &mut [f64], _frame: &mut [f64], _k: usize) -> bool {
        false
    }

    /// Snaps a state lying within `tol` of the trapped set back onto it, removing
    /// round-off and truncation drift along the unstable directions. States farther
    /// than `tol` are left untouched. Returns true when a correction was applied.
    fn shadow(&self, _state: &mut [f64], _tol: f64) -> bool {
        false
    }

    /// Lower-bound coordinates for neighbour search during packing.
    fn packing_key(&self, _state: &[f64]) -> Vec<KeyCoord> {
        Vec::new()
    }

    /// Closed-form pressure `P(s)`, for systems where it is known.
    fn analytic_pressure(&self, _s: f64) -> Option<f64> {
        None
    }
}

/// Difference `d` reduced to `[-period/2, period/2]`.
pub fn circular_diff(d: f64, period: f64) -> f64 {
    d - period * (d / period).round()
}

/// Integrator tolerances and spacing of tangent renormalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub renorm_interval: f64,
    /// Shadowing tolerance for orbits on the trapped set; `None` integrates the raw flow.
    pub shadow_tol: Option<f64>,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-10,
            max_step: 0.1,
            renorm_interval: 1.0,
            shadow_tol: None,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("rel_tol", self.rel_tol), ("abs_tol", self.abs_tol)] {
            if !(v > 0.0 && v <= 1e-2) {
                return Err(Error::IntegratorConfig(format!(
                    "{name} = {v} outside (0, 1e-2]"
                )));
            }
        }
        if !(self.max_step > 0.0 && self.max_step.is_finite()) {
            return Err(Error::IntegratorConfig(format!(
                "max_step = {} must be positive",
                self.max_step
            )));
        }
        if !(self.renorm_interval > 0.0 && self.renorm_interval.is_finite()) {
            return Err(Error::IntegratorConfig(format!(
                "renorm_interval = {} must be positive",
                self.renorm_interval
            )));
        }
        if let Some(s) = self.shadow_tol {
            if !(s > 0.0) {
                return Err(Error::IntegratorConfig(format!("shadow_tol = {s} must be positive")));
            }
        }
        Ok(())
    }

    /// Same tolerances with trapped-set shadowing enabled.
    pub fn shadowed(self, tol: f64) -> Self {
        Self {
            shadow_tol: Some(tol),
            ..self
        }
    }
}

/// A sampled orbit segment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    /// Affine parameter values, strictly monotone in the direction of integration.
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub conserved_names: Vec<String>,
    /// Largest deviation of each conserved functional from its initial value.
    pub max_drift: Vec<f64>,
    /// Time at which the escape test first tripped, if it did.
    pub escape_time: Option<f64>,
}

impl Trajectory {
    pub fn last_state(&self) -> &[f64] {
        self.states.last().expect("trajectory holds at least one state")
    }

    /// Drift of each conserved functional at every sample.
    pub fn drifts(&self, system: &dyn FlowSystem) -> Vec<Vec<f64>> {
        let c0 = system.conserved(&self.states[0]);
        self.states
            .iter()
            .map(|s| {
                system
                    .conserved(s)
                    .iter()
                    .zip(&c0)
                    .map(|(c, c0)| c - c0)
                    .collect()
            })
            .collect()
    }

    /// CSV with columns `s`, state components, and conserved drifts.
    pub fn write_csv<W: Write>(&self, system: &dyn FlowSystem, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["s".to_string()];
        header.extend(system.state_labels());
        header.extend(self.conserved_names.iter().map(|n| format!("drift_{n}")));
        w.write_record(&header)?;
        for ((t, s), d) in self.times.iter().zip(&self.states).zip(self.drifts(system)) {
            let mut row = vec![format!("{t}")];
            row.extend(s.iter().map(|x| format!("{x}")));
            row.extend(d.iter().map(|x| format!("{x}")));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

struct TrajectoryHooks<'a> {
    system: &'a dyn FlowSystem,
    record_steps: bool,
    times: Vec<f64>,
    states: Vec<Vec<f64>>,
}

impl StepHooks for TrajectoryHooks<'_> {
    fn after_step(&mut self, y: &mut [f64]) -> bool {
        self.system.canonicalize(y, &mut [], 0)
    }
    fn should_stop(&self, y: &[f64]) -> bool {
        self.system.escaped(y)
    }
    fn wants_stop_check(&self) -> bool {
        true
    }
    fn on_accept(&mut self, t: f64, y: &[f64]) {
        if self.record_steps {
            self.times.push(t);
            self.states.push(y.to_vec());
        }
    }
}

/// Integrates the flow from `state` for affine time `t_total` (negative values run
/// backward), recording every accepted step. Stops early when the escape test trips.
pub fn integrate(
    system: &dyn FlowSystem,
    state: &[f64],
    t_total: f64,
    config: &IntegratorConfig,
) -> Result<Trajectory> {
    run_trajectory(system, state, t_total, None, config)
}

/// Like [`integrate`] but records states only at multiples of `h_out`.
pub fn integrate_sampled(
    system: &dyn FlowSystem,
    state: &[f64],
    t_total: f64,
    h_out: f64,
    config: &IntegratorConfig,
) -> Result<Trajectory> {
    if !(h_out > 0.0) {
        return Err(Error::IntegratorConfig(format!("output spacing {h_out} must be positive")));
    }
    run_trajectory(system, state, t_total, Some(h_out), config)
}

fn run_trajectory(
    system: &dyn FlowSystem,
    state: &[f64],
    t_total: f64,
    h_out: Option<f64>,
    config: &IntegratorConfig,
) -> Result<Trajectory> {
    config.validate()?;
    if !t_total.is_finite() {
        return Err(Error::IntegratorConfig(format!("horizon {t_total} is not finite")));
    }
    if state.len() != system.dim() {
        return Err(Error::IntegratorConfig(format!(
            "state has {} components, system expects {}",
            state.len(),
            system.dim()
        )));
    }
    let rhs = |y: &[f64], d: &mut [f64]| system.vector_field(y, d);
    let mut y = state.to_vec();
    let mut hooks = TrajectoryHooks {
        system,
        record_steps: h_out.is_none(),
        times: vec![0.0],
        states: vec![y.clone()],
    };
    let mut ws = Workspace::new(y.len());
    let (mut t, mut h) = (0.0, 0.0);
    let dir = t_total.signum();
    let mut escape_time = None;

    // Checkpoints: output samples, and shadowing corrections every renorm_interval.
    let spacing = match (h_out, config.shadow_tol) {
        (Some(ho), Some(_)) => ho.min(config.renorm_interval),
        (Some(ho), None) => ho,
        (None, Some(_)) => config.renorm_interval,
        (None, None) => t_total.abs().max(1.0),
    };
    let n_checks = (t_total.abs() / spacing - 1e-9).ceil().max(0.0) as usize;
    for i in 1..=n_checks {
        let target = if i == n_checks {
            t_total
        } else {
            dir * spacing * i as f64
        };
        match advance(&rhs, &mut y, &mut t, target, &mut h, config, &mut ws, &mut hooks)? {
            Advance::Stopped { time } => {
                escape_time = Some(time);
                hooks.times.push(time);
                hooks.states.push(y.clone());
                break;
            }
            Advance::Reached => {}
        }
        if let Some(tol) = config.shadow_tol {
            if system.shadow(&mut y, tol) {
                ws.invalidate();
            }
        }
        if let Some(ho) = h_out {
            let k = (t.abs() / ho).round();
            if (t.abs() - k * ho).abs() < 1e-9 * ho.max(1.0) {
                hooks.times.push(t);
                hooks.states.push(y.clone());
            }
        }
    }

    let c0 = system.conserved(state);
    let mut max_drift = vec![0.0_f64; c0.len()];
    for s in &hooks.states {
        for (m, (c, c0)) in max_drift.iter_mut().zip(system.conserved(s).iter().zip(&c0)) {
            *m = m.max((c - c0).abs());
        }
    }
    Ok(Trajectory {
        times: hooks.times,
        states: hooks.states,
        conserved_names: system.conserved_names(),
        max_drift,
        escape_time,
    })
}
