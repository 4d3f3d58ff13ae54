//! The trapped set of the Kerr(-de Sitter) null geodesic flow: spherical photon
//! orbits, their sampling, and the finite-horizon trappedness test.

mod orbits;

use serde::Serialize;

use crate::error::Result;
use crate::flow::{circular_diff, integrate, FlowSystem, IntegratorConfig, KeyCoord};
use crate::spacetime::{
    conserved_unchecked, dual_metric_jet, SpacetimeParams, IDX_PHI, IDX_PPHI, IDX_PR, IDX_PT,
    IDX_PTHETA, IDX_R, IDX_THETA,
};

pub use orbits::{
    kerr_circular_photon_radii, photon_region_bounds, radial_potential, sample_trapped_set,
    spherical_orbit_constants, theta_band, trapped_point, write_samples_csv, PhotonOrbitParams,
    TrappedSample, AXIS_CLEARANCE, PHI_PHASES,
};

/// Default distance kept from the horizons by the escape test.
pub const DEFAULT_MARGIN: f64 = 0.1;
/// Default finite horizon of the trappedness test.
pub const DEFAULT_T_MAX: f64 = 150.0;
/// Default shadowing tolerance for integrations on the trapped set.
pub const SHADOW_TOL: f64 = 1e-6;

/// Integrator settings for orbits on the trapped set: defaults plus shadowing.
pub fn trapped_config() -> IntegratorConfig {
    IntegratorConfig::default().shadowed(SHADOW_TOL)
}

/// The null geodesic flow of Kerr(-de Sitter) in the affine parameter `s`, i.e. the
/// vector field `½ H_G` on `(t, r, θ, φ, p_t, p_r, p_θ, p_φ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KerrFlow {
    params: SpacetimeParams,
    margin: f64,
    r_out: f64,
    bounds: [f64; 2],
}

impl KerrFlow {
    pub fn new(params: SpacetimeParams) -> Self {
        Self::with_margin(params, DEFAULT_MARGIN)
    }

    pub fn with_margin(params: SpacetimeParams, margin: f64) -> Self {
        Self {
            params,
            margin,
            r_out: 50.0 * params.mass(),
            bounds: photon_region_bounds(&params),
        }
    }

    pub fn params(&self) -> &SpacetimeParams {
        &self.params
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    /// Radial band `(r_event + δ, min(r_cosmo − δ, 50m))` outside which an orbit has escaped.
    pub fn escape_band(&self) -> [f64; 2] {
        let h = self.params.horizons();
        [
            h.r_event + self.margin,
            (h.r_cosmo - self.margin).min(self.r_out),
        ]
    }
}

impl FlowSystem for KerrFlow {
    fn name(&self) -> String {
        format!(
            "kerr(m={}, a={}, lambda={})",
            self.params.mass(),
            self.params.spin(),
            self.params.lambda()
        )
    }

    fn dim(&self) -> usize {
        8
    }

    fn state_labels(&self) -> Vec<String> {
        ["t", "r", "theta", "phi", "p_t", "p_r", "p_theta", "p_phi"]
            .map(String::from)
            .to_vec()
    }

    fn vector_field(&self, z: &[f64], out: &mut [f64]) {
        let g = dual_metric_jet(&self.params, z, false).grad;
        for i in 0..4 {
            out[i] = 0.5 * g[4 + i];
            out[4 + i] = -0.5 * g[i];
        }
    }

    fn jacobian(&self, z: &[f64], out: &mut [f64]) {
        let h = dual_metric_jet(&self.params, z, true).hess;
        for j in 0..8 {
            for i in 0..4 {
                out[i * 8 + j] = 0.5 * h[4 + i][j];
                out[(4 + i) * 8 + j] = -0.5 * h[i][j];
            }
        }
    }

    /// Euclidean distance in `(r, θ, φ, p)` with `φ` periodic; `t` is dropped since
    /// the flow commutes with time translation.
    fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in [IDX_R, IDX_THETA, IDX_PT, IDX_PR, IDX_PTHETA, IDX_PPHI] {
            s += (a[i] - b[i]).powi(2);
        }
        s += circular_diff(a[IDX_PHI] - b[IDX_PHI], std::f64::consts::TAU).powi(2);
        s.sqrt()
    }

    fn escaped(&self, z: &[f64]) -> bool {
        let [lo, hi] = self.escape_band();
        !(z[IDX_R] > lo && z[IDX_R] < hi)
    }

    fn sample_trapped(&self, n: usize, seed: u64) -> Vec<Vec<f64>> {
        sample_trapped_set(&self.params, n, seed)
            .iter()
            .map(TrappedSample::state)
            .collect()
    }

    fn normal_dims(&self) -> (usize, usize) {
        (1, 1)
    }

    fn conserved_names(&self) -> Vec<String> {
        ["E", "L_z", "Q", "G"].map(String::from).to_vec()
    }

    fn conserved(&self, z: &[f64]) -> Vec<f64> {
        conserved_unchecked(&self.params, z).as_array().to_vec()
    }

    fn canonicalize(&self, z: &mut [f64], _frame: &mut [f64], _k: usize) -> bool {
        let phi = &mut z[IDX_PHI];
        if !(0.0..std::f64::consts::TAU).contains(phi) {
            *phi = phi.rem_euclid(std::f64::consts::TAU);
            return true;
        }
        false
    }

    /// Projects onto the spherical orbit with the same `E` and `L_z`: sets `r` to the
    /// orbit radius, `p_r = 0`, and rescales `p_θ` so that `G = 0`.
    fn shadow(&self, z: &mut [f64], tol: f64) -> bool {
        let energy = -z[IDX_PT];
        if !(energy > 0.0) {
            return false;
        }
        let Some(rs) = orbits::radius_for_impact(&self.params, self.bounds, z[IDX_PPHI] / energy)
        else {
            return false;
        };
        let c = conserved_unchecked(&self.params, z);
        let Ok(orbit) = spherical_orbit_constants(&self.params, rs) else {
            return false;
        };
        let eta = if self.params.spin() == 0.0 {
            orbit.eta - (z[IDX_PPHI] / energy).powi(2)
        } else {
            orbit.eta
        };
        let target_q = eta * energy * energy;
        let near = (z[IDX_R] - rs).abs() < tol
            && z[IDX_PR].abs() < tol
            && c.hamiltonian.abs() < tol
            && (c.carter - target_q).abs() < tol * (1.0 + target_q.abs());
        if !near {
            return false;
        }
        let p2 = orbits::p_theta_squared(&self.params, rs, z[IDX_THETA], z[IDX_PPHI] / energy)
            * energy
            * energy;
        if !(p2 >= 0.0) {
            return false;
        }
        z[IDX_R] = rs;
        z[IDX_PR] = 0.0;
        let sign = if z[IDX_PTHETA] < 0.0 { -1.0 } else { 1.0 };
        z[IDX_PTHETA] = sign * p2.sqrt();
        true
    }

    fn packing_key(&self, z: &[f64]) -> Vec<KeyCoord> {
        vec![
            KeyCoord { value: z[IDX_THETA], period: None },
            KeyCoord { value: z[IDX_PHI], period: Some(std::f64::consts::TAU) },
            KeyCoord { value: z[IDX_R], period: None },
        ]
    }
}

/// Outcome of the finite-horizon trappedness test. `forward` means no escape for
/// `0 ≤ s ≤ T_max`, `backward` no escape for `−T_max ≤ s ≤ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TrappedStatus {
    pub forward: bool,
    pub backward: bool,
    pub trapped: bool,
}

impl TrappedStatus {
    /// Membership in `Γ₋`, the points that stay in the compact region as `s → +∞`.
    pub fn gamma_minus(&self) -> bool {
        self.forward
    }

    /// Membership in `Γ₊`, the points that stay in the compact region as `s → −∞`.
    pub fn gamma_plus(&self) -> bool {
        self.backward
    }
}

/// Integrates `p` forward and backward for `t_max` and reports whether the orbit
/// stays inside the band `(r_event + δ, min(r_cosmo − δ, 50m))`.
pub fn is_trapped(
    params: &SpacetimeParams,
    p: &[f64],
    t_max: f64,
    margin: f64,
    config: &IntegratorConfig,
) -> Result<TrappedStatus> {
    let flow = KerrFlow::with_margin(*params, margin);
    if flow.escaped(p) {
        return Ok(TrappedStatus {
            forward: false,
            backward: false,
            trapped: false,
        });
    }
    let forward = integrate(&flow, p, t_max, config)?.escape_time.is_none();
    let backward = integrate(&flow, p, -t_max, config)?.escape_time.is_none();
    Ok(TrappedStatus {
        forward,
        backward,
        trapped: forward && backward,
    })
}
