use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use super::jacobian::{asymptotic_rate, unstable_profile};
use super::packing::greedy_separated_set;
use super::spectrum::NHReport;
use crate::error::{Error, Result};
use crate::flow::{FlowSystem, IntegratorConfig};

/// Ratio between the packing sizes at the smallest and the largest `ε` below which the
/// sample is considered too thin to resolve entropy growth.
pub const COVERAGE_RATIO: usize = 10;

/// Orbit samples and unstable Jacobians of one trapped sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleData {
    pub index: usize,
    /// States at `k·h_sep`, `k = 0..=T_max/h_sep`.
    pub states: Vec<Vec<f64>>,
    /// `λ^u_T` for each `T` of the grid.
    pub lambda_u: Vec<f64>,
    /// Asymptotic unstable rate over `[0, T_max]`; see [`asymptotic_rate`].
    pub rate: f64,
    pub escaped: bool,
}

/// Everything the separated-set estimator needs, computed once and reused for every `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct PressureInputs {
    pub eps_grid: Vec<f64>,
    pub t_grid: Vec<f64>,
    pub h_sep: f64,
    pub data: Vec<SampleData>,
    /// Selected sample indices per `(ε, T)`.
    pub packings: Vec<Vec<Vec<usize>>>,
}

fn check_grid(name: &str, g: &[f64], ordered: bool) -> Result<()> {
    if g.is_empty() || g.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
        return Err(Error::InvalidParameter(format!("{name} must be non-empty and positive")));
    }
    let up = g.windows(2).all(|w| w[1] > w[0]);
    let down = g.windows(2).all(|w| w[1] < w[0]);
    if !(up || (!ordered && down)) {
        return Err(Error::InvalidParameter(format!("{name} must be strictly monotone")));
    }
    Ok(())
}

/// Integrates every sample with its unstable direction (in parallel, results kept in
/// sample order) and builds the greedy packings for every `(ε, T)`.
pub fn prepare_pressure(
    system: &dyn FlowSystem,
    samples: &[Vec<f64>],
    eps_grid: &[f64],
    t_grid: &[f64],
    h_sep: f64,
    config: &IntegratorConfig,
) -> Result<PressureInputs> {
    check_grid("epsilon grid", eps_grid, false)?;
    check_grid("T grid", t_grid, true)?;
    if !(h_sep > 0.0) {
        return Err(Error::InvalidParameter(format!("h_sep = {h_sep} must be positive")));
    }
    for t in t_grid {
        let k = t / h_sep;
        if (k - k.round()).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "T = {t} is not a multiple of h_sep = {h_sep}"
            )));
        }
    }
    if samples.is_empty() {
        return Err(Error::InvalidParameter("no samples".into()));
    }
    let t_max = *t_grid.last().expect("non-empty grid");
    let n_sep = (t_max / h_sep).round() as usize;
    let marks: Vec<f64> = (1..=n_sep).map(|k| k as f64 * h_sep).collect();

    let data = samples
        .par_iter()
        .enumerate()
        .map(|(index, p)| -> Result<SampleData> {
            let prof = unstable_profile(system, p, t_max, &marks, config, 0x51 ^ index as u64)?;
            if prof.escape_time.is_some() {
                return Ok(SampleData {
                    index,
                    states: Vec::new(),
                    lambda_u: Vec::new(),
                    rate: f64::NAN,
                    escaped: true,
                });
            }
            let mut states = Vec::with_capacity(n_sep + 1);
            for k in 0..=n_sep {
                let i = prof.index_of(k as f64 * h_sep).expect("mark scheduled");
                states.push(prof.states[i].clone());
            }
            let lambda_u = t_grid
                .iter()
                .map(|t| prof.log_growth[prof.index_of(*t).expect("mark scheduled")])
                .collect();
            Ok(SampleData {
                index,
                states,
                lambda_u,
                rate: asymptotic_rate(&prof.times, &prof.log_growth),
                escaped: false,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let live: Vec<usize> = (0..data.len()).filter(|i| !data[*i].escaped).collect();
    let jobs: Vec<(usize, usize)> = (0..eps_grid.len())
        .flat_map(|e| (0..t_grid.len()).map(move |t| (e, t)))
        .collect();
    let packed: Vec<Vec<usize>> = jobs
        .par_iter()
        .map(|&(e, t)| {
            let len = (t_grid[t] / h_sep).round() as usize + 1;
            let orbits: Vec<&[Vec<f64>]> = live.iter().map(|&i| &data[i].states[..len]).collect();
            greedy_separated_set(system, &orbits, eps_grid[e])
                .into_iter()
                .map(|j| live[j])
                .collect()
        })
        .collect();
    let mut it = packed.into_iter();
    let packings = (0..eps_grid.len())
        .map(|_| (0..t_grid.len()).map(|_| it.next().expect("one packing per job")).collect())
        .collect();

    Ok(PressureInputs {
        eps_grid: eps_grid.to_vec(),
        t_grid: t_grid.to_vec(),
        h_sep,
        data,
        packings,
    })
}

/// Ordinary least squares `y ≈ a + b x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub intercept_stderr: f64,
    pub residual_rms: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    let n = x.len() as f64;
    if x.len() == 1 {
        return LinearFit {
            slope: 0.0,
            intercept: y[0],
            slope_stderr: 0.0,
            intercept_stderr: 0.0,
            residual_rms: 0.0,
        };
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let sigma2 = if x.len() > 2 { ss / (n - 2.0) } else { 0.0 };
    LinearFit {
        slope,
        intercept,
        slope_stderr: (sigma2 / sxx).sqrt(),
        intercept_stderr: (sigma2 * (1.0 / n + mx * mx / sxx)).sqrt(),
        residual_rms: (ss / n).sqrt(),
    }
}

/// Separated-set pressure estimate at one `s`, with all intermediate tables.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PressureEstimate {
    pub s: f64,
    pub eps_grid: Vec<f64>,
    pub t_grid: Vec<f64>,
    pub h_sep: f64,
    /// Size of the separated set per `(ε, T)`.
    pub counts: Vec<Vec<usize>>,
    /// `log Z_T(ε, s)` per `(ε, T)`.
    pub log_z: Vec<Vec<f64>>,
    /// The `T` values entering the slope fits.
    pub fit_window: Vec<f64>,
    /// Per-`ε` fits of `log Z_T` against `T`.
    pub slope_fits: Vec<LinearFit>,
    /// Fit of the per-`ε` slopes against `ε`; its intercept is `P̂`.
    pub extrapolation: LinearFit,
    pub p_hat: f64,
    /// `sqrt(se(intercept)² + max se(slope)²)`.
    pub stderr: f64,
    pub coverage_warning: bool,
    pub samples_used: usize,
    pub samples_escaped: usize,
}

fn log_sum_exp(v: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.collect();
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

impl PressureInputs {
    /// `Z_T(ε, s) = Σ exp(−s λ^u_T)` over each packing, slopes over the top half of the
    /// `T` grid, and the linear extrapolation of the slopes to `ε = 0`.
    pub fn estimate(&self, s: f64) -> PressureEstimate {
        let n_t = self.t_grid.len();
        let window_start = n_t - n_t.div_ceil(2);
        let window = &self.t_grid[window_start..];
        let counts: Vec<Vec<usize>> = self
            .packings
            .iter()
            .map(|row| row.iter().map(Vec::len).collect())
            .collect();
        let log_z: Vec<Vec<f64>> = self
            .packings
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .map(|(t, sel)| log_sum_exp(sel.iter().map(|&i| -s * self.data[i].lambda_u[t])))
                    .collect()
            })
            .collect();
        let slope_fits: Vec<LinearFit> = log_z
            .iter()
            .map(|row| linear_fit(window, &row[window_start..]))
            .collect();
        let slopes: Vec<f64> = slope_fits.iter().map(|f| f.slope).collect();
        let extrapolation = if self.eps_grid.len() == 1 {
            LinearFit {
                intercept: slopes[0],
                ..linear_fit(&self.eps_grid, &slopes)
            }
        } else {
            linear_fit(&self.eps_grid, &slopes)
        };
        let max_slope_se = slope_fits.iter().map(|f| f.slope_stderr).fold(0.0, f64::max);
        let stderr = extrapolation.intercept_stderr.hypot(max_slope_se);
        let last = n_t - 1;
        let (fine, coarse) = if self.eps_grid[0] < self.eps_grid[self.eps_grid.len() - 1] {
            (0, self.eps_grid.len() - 1)
        } else {
            (self.eps_grid.len() - 1, 0)
        };
        let coverage_warning = counts[fine][last] < COVERAGE_RATIO * counts[coarse][last];
        let samples_escaped = self.data.iter().filter(|d| d.escaped).count();
        PressureEstimate {
            s,
            eps_grid: self.eps_grid.clone(),
            t_grid: self.t_grid.clone(),
            h_sep: self.h_sep,
            counts,
            log_z,
            fit_window: window.to_vec(),
            slope_fits,
            p_hat: extrapolation.intercept,
            extrapolation,
            stderr,
            coverage_warning,
            samples_used: self.data.len() - samples_escaped,
            samples_escaped,
        }
    }

    /// Asymptotic unstable rates over `[0, T_max]`, per surviving sample.
    pub fn rates(&self) -> Vec<(usize, f64)> {
        self.data
            .iter()
            .filter(|d| !d.escaped)
            .map(|d| (d.index, d.rate))
            .collect()
    }

    /// Variational pressure from the stored Jacobians; see [`pressure_variational`].
    pub fn variational(&self, s: f64, nh: &NHReport) -> Result<VariationalEstimate> {
        variational_from_rates(s, &self.rates(), *self.t_grid.last().unwrap(), nh)
    }
}

/// Separated-set pressure `P̂(s)` for a single `s`.
pub fn pressure_separated(
    system: &dyn FlowSystem,
    s: f64,
    eps_grid: &[f64],
    t_grid: &[f64],
    samples: &[Vec<f64>],
    h_sep: f64,
    config: &IntegratorConfig,
) -> Result<PressureEstimate> {
    Ok(prepare_pressure(system, samples, eps_grid, t_grid, h_sep, config)?.estimate(s))
}

/// Pressure from the variational principle with vanishing entropy,
/// `−s · min` over the samples of the asymptotic unstable rate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariationalEstimate {
    pub s: f64,
    pub value: f64,
    pub min_rate: f64,
    /// Sample attaining the minimal rate.
    pub argmin: usize,
    pub horizon: f64,
}

fn variational_from_rates(
    s: f64,
    rates: &[(usize, f64)],
    horizon: f64,
    nh: &NHReport,
) -> Result<VariationalEstimate> {
    if nh.r_star < nh.r_cap {
        return Err(Error::NotNormallyHyperbolic {
            r_star: nh.r_star,
            mu_max: nh.mu_max,
        });
    }
    let (argmin, min_rate) = rates
        .iter()
        .copied()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| Error::Estimator("no trapped samples".into()))?;
    Ok(VariationalEstimate {
        s,
        value: -s * min_rate,
        min_rate,
        argmin,
        horizon,
    })
}

/// `−s · min_p` of the asymptotic rate of `λ^u_T(p)`, refused unless `nh` certifies
/// normal hyperbolicity up to its cap (the zero-entropy reduction needs it).
pub fn pressure_variational(
    system: &dyn FlowSystem,
    s: f64,
    samples: &[Vec<f64>],
    horizon: f64,
    nh: &NHReport,
    config: &IntegratorConfig,
) -> Result<VariationalEstimate> {
    if nh.r_star < nh.r_cap {
        return Err(Error::NotNormallyHyperbolic {
            r_star: nh.r_star,
            mu_max: nh.mu_max,
        });
    }
    let rates = samples
        .par_iter()
        .enumerate()
        .map(|(i, p)| -> Result<Option<(usize, f64)>> {
            let prof = unstable_profile(system, p, horizon, &[], config, 0x51 ^ i as u64)?;
            Ok(prof
                .escape_time
                .is_none()
                .then(|| (i, asymptotic_rate(&prof.times, &prof.log_growth))))
        })
        .collect::<Result<Vec<_>>>()?;
    let rates: Vec<(usize, f64)> = rates.into_iter().flatten().collect();
    variational_from_rates(s, &rates, horizon, nh)
}

/// Allowed gap between the two estimators: `max(0.05, 10%·|P_var|) + 3·stderr`.
pub fn agreement_tolerance(separated: &PressureEstimate, variational: f64) -> f64 {
    0.05_f64.max(0.1 * variational.abs()) + 3.0 * separated.stderr
}

impl PressureEstimate {
    /// Summary table: one row per `(ε, T)` with the packing size, `log Z` and the
    /// per-`ε` slope.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["s", "eps", "T", "count", "log_z", "slope", "p_hat"])?;
        for (e, eps) in self.eps_grid.iter().enumerate() {
            for (t, tv) in self.t_grid.iter().enumerate() {
                w.write_record([
                    format!("{}", self.s),
                    format!("{eps}"),
                    format!("{tv}"),
                    format!("{}", self.counts[e][t]),
                    format!("{}", self.log_z[e][t]),
                    format!("{}", self.slope_fits[e].slope),
                    format!("{}", self.p_hat),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}
