//! Variational equation along an orbit, with periodic Gram–Schmidt renormalization.

use std::cell::RefCell;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{advance, Advance, FlowSystem, IntegratorConfig, StepHooks, Workspace};
use crate::error::{Error, Result};

/// Condition number of the frame between renormalizations above which it is flagged.
const DEGENERACY_LIMIT: f64 = 1e12;

/// Cumulative log growth per tracked direction at one renormalization time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthCheckpoint {
    pub time: f64,
    pub log_growth: Vec<f64>,
    pub state: Vec<f64>,
}

/// Base point, orthonormal tangent frame (column-major, `dim × k`) and the
/// log growth accumulated by each frame direction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TangentBundleState {
    pub dim: usize,
    pub k: usize,
    pub time: f64,
    pub base: Vec<f64>,
    pub frame: Vec<f64>,
    pub log_growth: Vec<f64>,
    pub checkpoints: Vec<GrowthCheckpoint>,
    /// Set when the frame condition number exceeded 1e12 between renormalizations.
    pub degenerate: bool,
    pub escape_time: Option<f64>,
}

impl TangentBundleState {
    pub fn column(&self, j: usize) -> &[f64] {
        &self.frame[j * self.dim..(j + 1) * self.dim]
    }

    /// Growth rates `log_growth / time`.
    pub fn rates(&self) -> Vec<f64> {
        self.log_growth.iter().map(|g| g / self.time).collect()
    }
}

/// Discarded transient before exponent averaging.
pub fn alignment_time(horizon: f64) -> f64 {
    horizon / 5.0
}

/// Modified Gram–Schmidt with one reorthogonalization pass on the `k` columns of a
/// column-major `n × k` frame. Returns the diagonal of the triangular factor.
pub fn orthonormalize(frame: &mut [f64], n: usize, k: usize) -> Vec<f64> {
    let mut diag = vec![0.0; k];
    for j in 0..k {
        let (done, rest) = frame.split_at_mut(j * n);
        let col = &mut rest[..n];
        for _ in 0..2 {
            for i in 0..j {
                let q = &done[i * n..(i + 1) * n];
                let proj: f64 = q.iter().zip(col.iter()).map(|(a, b)| a * b).sum();
                for (c, qv) in col.iter_mut().zip(q) {
                    *c -= proj * qv;
                }
            }
        }
        let norm = col.iter().map(|x| x * x).sum::<f64>().sqrt();
        diag[j] = norm;
        if norm > 0.0 {
            for c in col.iter_mut() {
                *c /= norm;
            }
        }
    }
    diag
}

struct TangentHooks<'a> {
    system: &'a dyn FlowSystem,
    n: usize,
    k: usize,
}

impl StepHooks for TangentHooks<'_> {
    fn after_step(&mut self, y: &mut [f64]) -> bool {
        let (base, frame) = y.split_at_mut(self.n);
        self.system.canonicalize(base, frame, self.k)
    }
    fn should_stop(&self, y: &[f64]) -> bool {
        self.system.escaped(&y[..self.n])
    }
    fn wants_stop_check(&self) -> bool {
        true
    }
}

/// Integrates `state` together with the tangent vectors `directions` for time `horizon`
/// (negative runs backward). The frame is orthonormalized at the start and every
/// `renorm_interval`, and the logs of the diagonal factors are accumulated, so the
/// result reproduces `dφ^T` applied to the initial frame up to the recorded factors.
pub fn flow_with_tangent(
    system: &dyn FlowSystem,
    state: &[f64],
    directions: &[Vec<f64>],
    horizon: f64,
    config: &IntegratorConfig,
) -> Result<TangentBundleState> {
    tangent_run(system, state, directions, horizon, config, &[])
}

/// Renormalization times: multiples of `spacing` plus the extra `marks` (all measured
/// as elapsed `|s|`), ending at `|horizon|`.
fn schedule(horizon: f64, spacing: f64, marks: &[f64]) -> Vec<f64> {
    let total = horizon.abs();
    let n = (total / spacing - 1e-9).ceil().max(0.0) as usize;
    let mut times: Vec<f64> = (1..n).map(|i| spacing * i as f64).collect();
    times.extend(marks.iter().copied().filter(|m| *m > 0.0 && *m < total));
    if total > 0.0 {
        times.push(total);
    }
    times.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
    times.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.max(1.0));
    times
}

/// [`flow_with_tangent`] with additional checkpoints at the elapsed times `marks`.
pub(crate) fn tangent_run(
    system: &dyn FlowSystem,
    state: &[f64],
    directions: &[Vec<f64>],
    horizon: f64,
    config: &IntegratorConfig,
    marks: &[f64],
) -> Result<TangentBundleState> {
    config.validate()?;
    let n = system.dim();
    let k = directions.len();
    if state.len() != n || directions.iter().any(|d| d.len() != n) {
        return Err(Error::InvalidParameter(format!(
            "state and directions must have {n} components"
        )));
    }
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!(
            "need between 1 and {n} tangent directions, got {k}"
        )));
    }
    if !horizon.is_finite() {
        return Err(Error::IntegratorConfig(format!("horizon {horizon} is not finite")));
    }

    let mut y = Vec::with_capacity(n * (k + 1));
    y.extend_from_slice(state);
    for d in directions {
        y.extend_from_slice(d);
    }
    let diag = orthonormalize(&mut y[n..], n, k);
    let scale = diag.iter().fold(0.0_f64, |m, d| m.max(*d));
    if diag.iter().any(|d| !(*d > 1e-14 * scale)) {
        return Err(Error::InvalidParameter(
            "tangent directions are linearly dependent".into(),
        ));
    }
    let mut log_growth: Vec<f64> = diag.iter().map(|d| d.ln()).collect();

    let jac = RefCell::new(vec![0.0; n * n]);
    let rhs = |z: &[f64], dz: &mut [f64]| {
        let (x, v) = z.split_at(n);
        let (dx, dv) = dz.split_at_mut(n);
        system.vector_field(x, dx);
        let mut j = jac.borrow_mut();
        system.jacobian(x, &mut j);
        for c in 0..k {
            let col = &v[c * n..(c + 1) * n];
            let out = &mut dv[c * n..(c + 1) * n];
            for (r, o) in out.iter_mut().enumerate() {
                let row = &j[r * n..(r + 1) * n];
                *o = row.iter().zip(col).map(|(a, b)| a * b).sum();
            }
        }
    };

    let mut hooks = TangentHooks { system, n, k };
    let mut ws = Workspace::new(y.len());
    let (mut t, mut h) = (0.0_f64, 0.0_f64);
    let dir = horizon.signum();
    let mut checkpoints = vec![GrowthCheckpoint {
        time: 0.0,
        log_growth: log_growth.clone(),
        state: state.to_vec(),
    }];
    let mut degenerate = false;
    let mut escape_time = None;

    for elapsed in schedule(horizon, config.renorm_interval, marks) {
        let target = dir * elapsed;
        let outcome = advance(&rhs, &mut y, &mut t, target, &mut h, config, &mut ws, &mut hooks)?;
        if let Some(tol) = config.shadow_tol {
            if system.shadow(&mut y[..n], tol) {
                ws.invalidate();
            }
        }
        let diag = orthonormalize(&mut y[n..], n, k);
        ws.invalidate();
        let (lo, hi) = diag
            .iter()
            .fold((f64::INFINITY, 0.0_f64), |(lo, hi), d| (lo.min(*d), hi.max(*d)));
        if !(lo > 0.0) || hi / lo > DEGENERACY_LIMIT {
            degenerate = true;
        }
        for (g, d) in log_growth.iter_mut().zip(&diag) {
            *g += d.ln();
        }
        checkpoints.push(GrowthCheckpoint {
            time: t,
            log_growth: log_growth.clone(),
            state: y[..n].to_vec(),
        });
        if let Advance::Stopped { time } = outcome {
            escape_time = Some(time);
            break;
        }
    }

    Ok(TangentBundleState {
        dim: n,
        k,
        time: t,
        base: y[..n].to_vec(),
        frame: y[n..].to_vec(),
        log_growth,
        checkpoints,
        degenerate,
        escape_time,
    })
}

/// A unit vector drawn deterministically from `seed`.
pub(crate) fn random_direction(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

/// Largest Lyapunov exponent along the orbit of `state`: one tangent direction is
/// aligned for `alignment_time(horizon)`, then its log growth is averaged over a
/// window of length `horizon`.
pub fn top_lyapunov(
    system: &dyn FlowSystem,
    state: &[f64],
    horizon: f64,
    config: &IntegratorConfig,
) -> Result<f64> {
    if !(horizon > 0.0) {
        return Err(Error::InvalidParameter(format!("horizon {horizon} must be positive")));
    }
    let v0 = random_direction(system.dim(), 0x5eed);
    let aligned = flow_with_tangent(system, state, &[v0], alignment_time(horizon), config)?;
    if let Some(te) = aligned.escape_time {
        return Err(Error::Estimator(format!("orbit escaped at s = {te} during alignment")));
    }
    let measured = flow_with_tangent(
        system,
        &aligned.base,
        &[aligned.column(0).to_vec()],
        horizon,
        config,
    )?;
    if let Some(te) = measured.escape_time {
        return Err(Error::Estimator(format!("orbit escaped at s = {te}")));
    }
    Ok(measured.log_growth[0] / horizon)
}
