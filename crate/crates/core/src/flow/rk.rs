//! Dormand-Prince 5(4) with the standard fourth-order continuous extension.

use super::IntegratorConfig;
use crate::error::{Error, Result};

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Scratch storage for one system size.
pub(crate) struct Workspace {
    k: [Vec<f64>; 7],
    ytmp: Vec<f64>,
    ynew: Vec<f64>,
    yold: Vec<f64>,
    k1_valid: bool,
}

impl Workspace {
    pub fn new(n: usize) -> Self {
        Self {
            k: std::array::from_fn(|_| vec![0.0; n]),
            ytmp: vec![0.0; n],
            ynew: vec![0.0; n],
            yold: vec![0.0; n],
            k1_valid: false,
        }
    }

    /// Forces the next step to re-evaluate the derivative at its start point.
    pub fn invalidate(&mut self) {
        self.k1_valid = false;
    }
}

/// Outcome of [`advance`].
pub(crate) enum Advance {
    Reached,
    /// Stopped at the first sampled time where the predicate holds (bisected on dense output).
    Stopped { time: f64 },
}

/// Observer hooks invoked by [`advance`].
pub(crate) trait StepHooks {
    /// Called after each accepted step; may modify the state (chart changes).
    /// Returns true when it did.
    fn after_step(&mut self, _y: &mut [f64]) -> bool {
        false
    }
    /// Stop predicate on the state.
    fn should_stop(&self, _y: &[f64]) -> bool {
        false
    }
    fn wants_stop_check(&self) -> bool {
        false
    }
    fn on_accept(&mut self, _t: f64, _y: &[f64]) {}
}

#[cfg(test)]
pub(crate) struct NoHooks;
#[cfg(test)]
impl StepHooks for NoHooks {}

fn axpy_stage(out: &mut [f64], y: &[f64], h: f64, terms: &[(f64, &[f64])]) {
    for i in 0..y.len() {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        out[i] = y[i] + h * acc;
    }
}

/// Advances `y` from `*t` to `t_end` (either direction) with adaptive steps.
/// `h` carries the step-size estimate between calls.
pub(crate) fn advance<F, H>(
    rhs: &F,
    y: &mut [f64],
    t: &mut f64,
    t_end: f64,
    h: &mut f64,
    cfg: &IntegratorConfig,
    ws: &mut Workspace,
    hooks: &mut H,
) -> Result<Advance>
where
    F: Fn(&[f64], &mut [f64]),
    H: StepHooks,
{
    let n = y.len();
    let dir = if t_end >= *t { 1.0 } else { -1.0 };
    if *h == 0.0 || !h.is_finite() {
        *h = 0.1 * cfg.max_step;
    }
    let mut rejected_last = false;
    while dir * (t_end - *t) > 0.0 {
        if !ws.k1_valid {
            rhs(y, &mut ws.k[0]);
            ws.k1_valid = true;
        }
        let remaining = (t_end - *t).abs();
        let mut hs = h.abs().min(cfg.max_step);
        let last = hs >= remaining * (1.0 - 1e-12);
        if last {
            hs = remaining;
        }
        let step = dir * hs;

        let [k1, k2, k3, k4, k5, k6, k7] = &mut ws.k;
        axpy_stage(&mut ws.ytmp, y, step, &[(A21, k1)]);
        rhs(&ws.ytmp, k2);
        axpy_stage(&mut ws.ytmp, y, step, &[(A31, k1), (A32, k2)]);
        rhs(&ws.ytmp, k3);
        axpy_stage(&mut ws.ytmp, y, step, &[(A41, k1), (A42, k2), (A43, k3)]);
        rhs(&ws.ytmp, k4);
        axpy_stage(&mut ws.ytmp, y, step, &[(A51, k1), (A52, k2), (A53, k3), (A54, k4)]);
        rhs(&ws.ytmp, k5);
        axpy_stage(
            &mut ws.ytmp,
            y,
            step,
            &[(A61, k1), (A62, k2), (A63, k3), (A64, k4), (A65, k5)],
        );
        rhs(&ws.ytmp, k6);
        axpy_stage(
            &mut ws.ynew,
            y,
            step,
            &[(A71, k1), (A73, k3), (A74, k4), (A75, k5), (A76, k6)],
        );
        rhs(&ws.ynew, k7);

        let mut err2 = 0.0;
        let mut finite = true;
        for i in 0..n {
            let e = step
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = cfg.abs_tol + cfg.rel_tol * y[i].abs().max(ws.ynew[i].abs());
            err2 += (e / sc) * (e / sc);
            finite &= ws.ynew[i].is_finite();
        }
        let err = (err2 / n as f64).sqrt();
        if !finite || !err.is_finite() {
            if hs <= min_step(*t) {
                return Err(Error::NonFinite { time: *t });
            }
            *h = dir * hs * 0.1;
            rejected_last = true;
            continue;
        }

        if err <= 1.0 {
            let t_old = *t;
            ws.yold.copy_from_slice(y);
            y.copy_from_slice(&ws.ynew);
            *t = if last { t_end } else { *t + step };
            ws.k.swap(0, 6);

            if hooks.wants_stop_check() && hooks.should_stop(y) {
                let ts = locate_crossing(ws, step, t_old, hooks);
                dense_eval(ws, step, (ts - t_old) / step, y);
                *t = ts;
                ws.k1_valid = false;
                return Ok(Advance::Stopped { time: ts });
            }
            if hooks.after_step(y) {
                ws.k1_valid = false;
            }
            hooks.on_accept(*t, y);

            let mut fac = 0.9 * err.max(1e-10).powf(-0.2);
            fac = fac.clamp(0.2, 5.0);
            if rejected_last {
                fac = fac.min(1.0);
            }
            rejected_last = false;
            if !last {
                *h = dir * hs * fac;
            }
        } else {
            let fac = (0.9 * err.powf(-0.2)).max(0.2);
            let hn = hs * fac;
            if hn <= min_step(*t) {
                return Err(Error::StepUnderflow {
                    time: *t,
                    step: hn,
                    last_state: y.to_vec(),
                });
            }
            *h = dir * hn;
            rejected_last = true;
        }
    }
    Ok(Advance::Reached)
}

fn min_step(t: f64) -> f64 {
    1e-13 * t.abs().max(1.0)
}

/// Dense output at fraction `theta` of the last accepted step. After the k-swap,
/// `k[0]` holds the end-point derivative (k7) and `k[6]` the start-point one (k1).
fn dense_eval(ws: &Workspace, step: f64, theta: f64, out: &mut [f64]) {
    let k1 = &ws.k[6];
    let k7 = &ws.k[0];
    let (k3, k4, k5, k6) = (&ws.k[2], &ws.k[3], &ws.k[4], &ws.k[5]);
    let th1 = 1.0 - theta;
    for i in 0..out.len() {
        let y0 = ws.yold[i];
        let y1 = ws.ynew[i];
        let r2 = y1 - y0;
        let r3 = step * k1[i] - r2;
        let r4 = r2 - step * k7[i] - r3;
        let r5 = step * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
        out[i] = y0 + theta * (r2 + th1 * (r3 + theta * (r4 + th1 * r5)));
    }
}

fn locate_crossing<H: StepHooks>(ws: &Workspace, step: f64, t_old: f64, hooks: &H) -> f64 {
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut buf = vec![0.0; ws.yold.len()];
    while (hi - lo) * step.abs() > 1e-9 {
        let mid = 0.5 * (lo + hi);
        dense_eval(ws, step, mid, &mut buf);
        if hooks.should_stop(&buf) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    t_old + hi * step
}

/// Dense-output interpolation of the last step, exposed for tests.
#[cfg(test)]
pub(crate) fn interpolate_last(ws: &Workspace, step: f64, theta: f64) -> Vec<f64> {
    let mut out = vec![0.0; ws.yold.len()];
    dense_eval(ws, step, theta, &mut out);
    out
}
