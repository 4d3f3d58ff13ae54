use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::{tangent_run, FlowSystem, IntegratorConfig};

/// Lyapunov spectrum of one sample, split into normal and tangent parts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumReport {
    pub sample: usize,
    pub horizon: f64,
    /// All exponents, in decreasing order.
    pub exponents: Vec<f64>,
    /// Half the difference between the rates over the two halves of the window.
    pub half_widths: Vec<f64>,
    pub unstable: Vec<f64>,
    pub stable: Vec<f64>,
    pub tangent: Vec<f64>,
    /// Largest `|λ| + half-width` over the tangent exponents.
    pub mu_max: f64,
    /// A normal exponent sits within three half-widths of a tangent one.
    pub ambiguous: bool,
    pub degenerate: bool,
}

/// Transient discarded before a full-frame spectrum over `horizon`: `max(T, floor)`
/// rounded up to whole renormalization intervals. Neutral directions grow polynomially, and a
/// transient as long as the window keeps that growth below `2 log 2 / T` per power.
pub fn spectrum_alignment_time(horizon: f64, floor: f64, renorm_interval: f64) -> f64 {
    let t = horizon.max(floor);
    (t / renorm_interval - 1e-9).ceil() * renorm_interval
}

/// Full spectrum along the orbit of `sample` from a complete orthonormalized frame,
/// averaged over `[T_align, T_align + T]`.
pub fn tangent_spectrum(
    system: &dyn FlowSystem,
    sample: &[f64],
    index: usize,
    horizon: f64,
    config: &IntegratorConfig,
) -> Result<SpectrumReport> {
    if !(horizon > 0.0) {
        return Err(Error::InvalidParameter(format!("horizon {horizon} must be positive")));
    }
    let n = system.dim();
    let align = spectrum_alignment_time(horizon, system.alignment_floor(), config.renorm_interval);
    let frame: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let mid = align + 0.5 * horizon;
    let end = align + horizon;
    let run = tangent_run(system, sample, &frame, end, config, &[align, mid])?;
    if let Some(te) = run.escape_time {
        return Err(Error::Estimator(format!("sample {index} escaped at s = {te}")));
    }
    let at = |t: f64| {
        run.checkpoints
            .iter()
            .find(|c| (c.time - t).abs() <= 1e-9 * t.max(1.0))
            .expect("checkpoint scheduled")
    };
    let (g0, g1, g2) = (at(align), at(mid), at(end));
    let half = 0.5 * horizon;
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let total = (g2.log_growth[i] - g0.log_growth[i]) / horizon;
            let first = (g1.log_growth[i] - g0.log_growth[i]) / half;
            let second = (g2.log_growth[i] - g1.log_growth[i]) / half;
            (total, 0.5 * (first - second).abs())
        })
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (exponents, half_widths): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();

    let (n_u, n_s) = system.normal_dims();
    let tangent_range = n_u..n - n_s;
    let mu_max = tangent_range
        .clone()
        .map(|i| exponents[i].abs() + half_widths[i])
        .fold(0.0, f64::max);
    let close = |i: usize, j: usize| {
        exponents[i] - exponents[j] < 3.0 * (half_widths[i] + half_widths[j])
    };
    let ambiguous = !tangent_range.is_empty()
        && ((n_u > 0 && close(n_u - 1, n_u)) || (n_s > 0 && close(n - n_s - 1, n - n_s)));

    Ok(SpectrumReport {
        sample: index,
        horizon,
        unstable: exponents[..n_u].to_vec(),
        stable: exponents[n - n_s..].to_vec(),
        tangent: exponents[tangent_range].to_vec(),
        exponents,
        half_widths,
        mu_max,
        ambiguous,
        degenerate: run.degenerate,
    })
}

/// Estimated rates of the normally hyperbolic splitting over a sample of the trapped set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NHReport {
    pub nu_min: f64,
    pub nu_s: f64,
    pub mu_max: f64,
    pub mu_half_width: f64,
    pub r_star: u32,
    pub r_cap: u32,
    pub horizon: f64,
    pub n_samples: usize,
    pub ambiguous_samples: usize,
    pub degenerate_samples: usize,
    pub spectra: Vec<SpectrumReport>,
}

/// Largest `r ≤ r_cap` with `ν > r·μ`.
pub fn r_star(nu: f64, mu: f64, r_cap: u32) -> u32 {
    if mu <= 0.0 {
        return r_cap;
    }
    let bound = (nu / mu).ceil() - 1.0;
    if bound <= 0.0 {
        0
    } else {
        bound.min(r_cap as f64) as u32
    }
}

/// Spectra of every sample (in parallel) reduced to `ν_min`, `ν_s`, `μ_max` and the
/// order `r*` of normal hyperbolicity they certify.
pub fn nh_check(
    system: &dyn FlowSystem,
    samples: &[Vec<f64>],
    r_cap: u32,
    horizon: f64,
    config: &IntegratorConfig,
) -> Result<NHReport> {
    if r_cap < 1 {
        return Err(Error::InvalidParameter("r_cap must be at least 1".into()));
    }
    if samples.is_empty() {
        return Err(Error::InvalidParameter("no samples".into()));
    }
    let spectra = samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| tangent_spectrum(system, s, i, horizon, config))
        .collect::<Result<Vec<_>>>()?;

    let (n_u, n_s) = system.normal_dims();
    let mut nu_min = f64::INFINITY;
    let mut nu_s = f64::INFINITY;
    let (mut mu_max, mut mu_hw) = (0.0_f64, 0.0_f64);
    for sp in &spectra {
        let top = if n_u > 0 { sp.unstable[n_u - 1] } else { sp.exponents[0] };
        let bottom = if n_s > 0 { sp.stable[0] } else { *sp.exponents.last().unwrap() };
        nu_min = nu_min.min(top);
        nu_s = nu_s.min(-bottom);
        let n = sp.exponents.len();
        for i in n_u..n - n_s {
            let bound = sp.exponents[i].abs() + sp.half_widths[i];
            if bound > mu_max {
                mu_max = bound;
                mu_hw = sp.half_widths[i];
            }
        }
    }
    if !(nu_min > 0.0) {
        return Err(Error::DegenerateReport { nu_min });
    }
    Ok(NHReport {
        nu_min,
        nu_s,
        mu_max,
        mu_half_width: mu_hw,
        r_star: r_star(nu_min, mu_max, r_cap),
        r_cap,
        horizon,
        n_samples: spectra.len(),
        ambiguous_samples: spectra.iter().filter(|s| s.ambiguous).count(),
        degenerate_samples: spectra.iter().filter(|s| s.degenerate).count(),
        spectra,
    })
}
