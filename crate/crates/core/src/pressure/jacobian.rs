use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::{
    alignment_time, flow_with_tangent, integrate, random_direction, tangent_run, FlowSystem,
    IntegratorConfig,
};

/// Largest rate disagreement between two independently aligned directions.
pub const ALIGNMENT_AGREEMENT: f64 = 1e-4;

/// Alignment transient for a measurement over `horizon`: `max(T/5, floor)` rounded up
/// to a whole number of renormalization intervals.
pub fn unstable_alignment_time(horizon: f64, floor: f64, renorm_interval: f64) -> f64 {
    let t = alignment_time(horizon).max(floor);
    (t / renorm_interval - 1e-9).ceil() * renorm_interval
}

/// A unit tangent vector at `p` close to `E^u_p`: the base point is flowed back for
/// `align`, a seeded random vector is transported forward to `p`.
pub fn unstable_direction(
    system: &dyn FlowSystem,
    p: &[f64],
    align: f64,
    config: &IntegratorConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    let back = integrate(system, p, -align, config)?;
    if let Some(te) = back.escape_time {
        return Err(Error::Estimator(format!(
            "backward orbit escaped at s = {te} during alignment"
        )));
    }
    let v0 = random_direction(system.dim(), seed);
    let run = flow_with_tangent(system, back.last_state(), &[v0], align, config)?;
    if let Some(te) = run.escape_time {
        return Err(Error::Estimator(format!("orbit escaped at s = {te} during alignment")));
    }
    Ok(run.column(0).to_vec())
}

/// Cumulative unstable log growth along the forward orbit of `p`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct UnstableProfile {
    pub times: Vec<f64>,
    pub log_growth: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub escape_time: Option<f64>,
}

impl UnstableProfile {
    /// Index of the checkpoint at elapsed time `t`.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        self.times
            .iter()
            .position(|x| (x.abs() - t).abs() <= 1e-9 * t.max(1.0))
    }
}

/// Asymptotic growth rate from a cumulative log-growth profile `g(t_k)`: the increments
/// are averaged with the bump weight `w(x) = exp(−1/(x(1−x)))` on `x = t/T`. Bounded
/// endpoint terms `c(φ_T p) − c(p)` decay faster than any power of `1/T` along
/// quasi-periodic orbits.
pub fn asymptotic_rate(times: &[f64], log_growth: &[f64]) -> f64 {
    let total = times.last().copied().unwrap_or(0.0).abs();
    if times.len() < 2 || total == 0.0 {
        return 0.0;
    }
    let (mut num, mut den) = (0.0, 0.0);
    for k in 0..times.len() - 1 {
        let dt = (times[k + 1] - times[k]).abs();
        let x = 0.5 * (times[k].abs() + times[k + 1].abs()) / total;
        let w = (-1.0 / (x * (1.0 - x))).exp();
        num += w * (log_growth[k + 1] - log_growth[k]);
        den += w * dt;
    }
    if den > 0.0 {
        num / den
    } else {
        log_growth[log_growth.len() - 1] / total
    }
}

pub(crate) fn unstable_profile(
    system: &dyn FlowSystem,
    p: &[f64],
    horizon: f64,
    marks: &[f64],
    config: &IntegratorConfig,
    seed: u64,
) -> Result<UnstableProfile> {
    let align = unstable_alignment_time(horizon, system.alignment_floor(), config.renorm_interval);
    let v = unstable_direction(system, p, align, config, seed)?;
    let run = tangent_run(system, p, &[v], horizon, config, marks)?;
    let g0 = run.checkpoints[0].log_growth[0];
    let mut out = UnstableProfile {
        times: Vec::with_capacity(run.checkpoints.len()),
        log_growth: Vec::with_capacity(run.checkpoints.len()),
        states: Vec::with_capacity(run.checkpoints.len()),
        escape_time: run.escape_time,
    };
    for c in run.checkpoints {
        out.times.push(c.time);
        out.log_growth.push(c.log_growth[0] - g0);
        out.states.push(c.state);
    }
    Ok(out)
}

/// Log unstable Jacobian `λ^u_T` of one sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JacobianRecord {
    pub sample: usize,
    pub horizon: f64,
    pub lambda_u: f64,
    pub rate: f64,
    /// Bump-weighted average of the growth increments; see [`asymptotic_rate`].
    pub asymptotic_rate: f64,
    /// Rate difference between two independently seeded alignments.
    pub alignment_spread: f64,
    pub aligned: bool,
}

/// `λ^u_T(p)`: log growth over `[0, T]` of the tangent direction aligned onto `E^u_p`.
/// Alignment is repeated from a second random direction and flagged when the two
/// rates differ by more than [`ALIGNMENT_AGREEMENT`].
pub fn log_unstable_jacobian(
    system: &dyn FlowSystem,
    sample: &[f64],
    index: usize,
    horizon: f64,
    config: &IntegratorConfig,
) -> Result<JacobianRecord> {
    if !(horizon > 0.0) {
        return Err(Error::InvalidParameter(format!("horizon {horizon} must be positive")));
    }
    let mut rates = [0.0; 2];
    let mut lambda = 0.0;
    let mut weighted = 0.0;
    for (k, seed) in [0x51u64, 0xa7].into_iter().enumerate() {
        let prof = unstable_profile(system, sample, horizon, &[], config, seed)?;
        if let Some(te) = prof.escape_time {
            return Err(Error::Estimator(format!("sample {index} escaped at s = {te}")));
        }
        let g = *prof.log_growth.last().expect("profile has checkpoints");
        if k == 0 {
            lambda = g;
            weighted = asymptotic_rate(&prof.times, &prof.log_growth);
        }
        rates[k] = g / horizon;
    }
    let spread = (rates[0] - rates[1]).abs();
    Ok(JacobianRecord {
        sample: index,
        horizon,
        lambda_u: lambda,
        rate: lambda / horizon,
        asymptotic_rate: weighted,
        alignment_spread: spread,
        aligned: spread <= ALIGNMENT_AGREEMENT,
    })
}

/// `|λ^u_k(p) − Σ_{j<k} λ^u_1(φ^j p)|`, with the unit-time legs integrated separately
/// and chained through the transported unstable direction.
pub fn telescoping_check(
    system: &dyn FlowSystem,
    sample: &[f64],
    k: usize,
    config: &IntegratorConfig,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidParameter("telescoping needs k ≥ 1".into()));
    }
    let align = unstable_alignment_time(k as f64, system.alignment_floor(), config.renorm_interval);
    let v = unstable_direction(system, sample, align, config, 0x51)?;
    let whole = flow_with_tangent(system, sample, &[v.clone()], k as f64, config)?;
    let mut state = sample.to_vec();
    let mut dir = v;
    let mut sum = 0.0;
    for _ in 0..k {
        let leg = flow_with_tangent(system, &state, &[dir], 1.0, config)?;
        sum += leg.log_growth[0];
        state = leg.base.clone();
        dir = leg.column(0).to_vec();
    }
    Ok((whole.log_growth[0] - sum).abs())
}
