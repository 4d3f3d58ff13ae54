use std::f64::consts::PI;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::spacetime::{conserved, PhasePoint, SpacetimeParams};

/// Smallest `sin θ` a sampled spherical orbit may reach.
pub const AXIS_CLEARANCE: f64 = 0.1;

/// Constants of the spherical photon orbit at radius `r_sphere`, for `E = 1`.
///
/// When the spin vanishes every orbit lies on the photon sphere and only
/// `η + Φ²` is fixed; the polar representative `Φ = 0` is returned.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhotonOrbitParams {
    pub r_sphere: f64,
    /// Impact parameter `L_z / E`.
    pub phi: f64,
    /// `Q / E²`.
    pub eta: f64,
}

/// Radial potential `R(r) = Δ₀²((r²+a²) − aΦ)² − Δ(r)·(η + Δ₀²(Φ − a)²)` for `E = 1`,
/// with its first derivative.
pub fn radial_potential(params: &SpacetimeParams, orbit: &PhotonOrbitParams, r: f64) -> (f64, f64) {
    let a = params.spin();
    let d0sq = params.delta0().powi(2);
    let (delta, d1, _) = params.delta_derivs(r);
    let k = orbit.eta + d0sq * (orbit.phi - a).powi(2);
    let w = r * r + a * a - a * orbit.phi;
    (d0sq * w * w - delta * k, 4.0 * d0sq * w * r - d1 * k)
}

fn photon_sphere_radius(params: &SpacetimeParams) -> f64 {
    3.0 * params.mass()
}

fn schwarzschild_total(params: &SpacetimeParams) -> f64 {
    let m = params.mass();
    27.0 * m * m / (1.0 - 9.0 * params.lambda() * m * m)
}

/// Closed-form `(Φ, η)` from `R = R′ = 0`; no bounds check.
fn spin_orbit(params: &SpacetimeParams, r: f64) -> (f64, f64) {
    let a = params.spin();
    let d0sq = params.delta0().powi(2);
    let (delta, d1, _) = params.delta_derivs(r);
    let w = 4.0 * r * delta / d1;
    let phi = (r * r + a * a - w) / a;
    let k = d0sq * w * w / delta;
    (phi, k - d0sq * (phi - a).powi(2))
}

/// `(Φ, η)` of the spherical photon orbit at radius `r`.
pub fn spherical_orbit_constants(params: &SpacetimeParams, r: f64) -> Result<PhotonOrbitParams> {
    let [r1, r2] = photon_region_bounds(params);
    if params.spin() == 0.0 {
        let rs = photon_sphere_radius(params);
        if (r - rs).abs() > 1e-12 * rs {
            return Err(Error::NoPhotonOrbit {
                r,
                reason: format!("the only spherical orbits lie at r = {rs}"),
            });
        }
        return Ok(PhotonOrbitParams {
            r_sphere: rs,
            phi: 0.0,
            eta: schwarzschild_total(params),
        });
    }
    let slack = 1e-12 * r2;
    if !(r >= r1 - slack && r <= r2 + slack) {
        return Err(Error::NoPhotonOrbit {
            r,
            reason: format!("outside the photon region [{r1}, {r2}]"),
        });
    }
    let (phi, eta) = spin_orbit(params, r);
    Ok(PhotonOrbitParams {
        r_sphere: r,
        phi,
        eta: eta.max(0.0),
    })
}

/// Upper end of the radial search interval: the maximum of Δ when Λ > 0, where the
/// closed forms become singular.
fn search_upper(params: &SpacetimeParams) -> f64 {
    let h = params.horizons();
    if params.lambda() == 0.0 {
        return 5.0 * params.mass();
    }
    let (mut lo, mut hi) = (h.r_event, h.r_cosmo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if params.delta_derivs(mid).1 > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> f64 {
    let flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if (f(mid) < 0.0) == (flo < 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Radial extent `[r₁, r₂]` of the photon region (radii carrying spherical photon
/// orbits with `η ≥ 0`). Degenerates to `[3m, 3m]` without spin.
pub fn photon_region_bounds(params: &SpacetimeParams) -> [f64; 2] {
    if params.spin() == 0.0 {
        let rs = photon_sphere_radius(params);
        return [rs, rs];
    }
    let lo = params.horizons().r_event;
    let hi = search_upper(params);
    let eta = |r: f64| spin_orbit(params, r).1;
    let n = 4000;
    let width = hi - lo;
    let mut best = (f64::NEG_INFINITY, 0.5 * (lo + hi));
    for i in 1..n {
        let r = lo + width * i as f64 / n as f64;
        let e = eta(r);
        if e > best.0 {
            best = (e, r);
        }
    }
    // Golden-section refinement of the maximum.
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (best.1 - width / n as f64, best.1 + width / n as f64);
    for _ in 0..100 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if eta(c) > eta(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let peak = 0.5 * (a + b);
    let edge = 1e-9 * width;
    let r1 = bisect(eta, lo + edge, peak);
    let r2 = bisect(eta, peak, hi - edge);
    [r1, r2]
}

/// Boundary radii of the equatorial photon orbits in Kerr, `2m(1 + cos(⅔ arccos(∓a/m)))`.
pub fn kerr_circular_photon_radii(mass: f64, spin: f64) -> [f64; 2] {
    let f = |s: f64| 2.0 * mass * (1.0 + ((2.0 / 3.0) * (s * spin / mass).acos()).cos());
    [f(-1.0), f(1.0)]
}

/// Inverse of the monotone map `r ↦ Φ(r)` on the photon region.
pub(crate) fn radius_for_impact(params: &SpacetimeParams, bounds: [f64; 2], phi: f64) -> Option<f64> {
    if params.spin() == 0.0 {
        return Some(photon_sphere_radius(params));
    }
    let f = |r: f64| spin_orbit(params, r).0 - phi;
    let (f1, f2) = (f(bounds[0]), f(bounds[1]));
    if f1 * f2 > 0.0 {
        return None;
    }
    Some(bisect(f, bounds[0], bounds[1]))
}

/// Smallest `sin²θ` reached by the orbit: the root in `(0, 1]` of
/// `K S (1 + c(1−S)) − Δ₀²(Φ − aS)²`, with `c = Λa²/3` and `K = η + Δ₀²(Φ − a)²`.
fn min_sin2(params: &SpacetimeParams, orbit: &PhotonOrbitParams) -> f64 {
    let a = params.spin();
    let d0sq = params.delta0().powi(2);
    let c = params.lambda() * a * a / 3.0;
    let k = orbit.eta + d0sq * (orbit.phi - a).powi(2);
    let g = |s: f64| k * s * (1.0 + c * (1.0 - s)) - d0sq * (orbit.phi - a * s).powi(2);
    if g(0.0) >= 0.0 {
        return 0.0;
    }
    if g(1.0) < 0.0 {
        return 1.0;
    }
    bisect(g, 0.0, 1.0)
}

/// Latitude band `[θ_min, π − θ_min]` swept by the spherical orbit.
pub fn theta_band(params: &SpacetimeParams, orbit: &PhotonOrbitParams) -> [f64; 2] {
    let th = min_sin2(params, orbit).sqrt().min(1.0).asin();
    [th, PI - th]
}

/// `p_θ` of the null covector at `(r, θ)` with `p_r = 0`, `E = 1`, `L_z = Φ`.
pub(crate) fn p_theta_squared(params: &SpacetimeParams, r: f64, theta: f64, phi: f64) -> f64 {
    let a = params.spin();
    let d0sq = params.delta0().powi(2);
    let delta = params.delta(r);
    let (dth, _, _) = params.delta_theta_derivs(theta);
    let s2 = theta.sin().powi(2);
    let x = -(r * r + a * a) + a * phi;
    let y = -a * s2 + phi;
    let f = -d0sq * x * x / delta;
    (-f - d0sq * y * y / (dth * s2)) / dth
}

/// A point of the trapped set on the section `{G = 0, E = 1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrappedSample {
    pub point: PhasePoint,
    pub r_sphere: f64,
    pub theta: f64,
    pub phi: f64,
    pub sign_p_theta: f64,
}

impl TrappedSample {
    pub fn state(&self) -> Vec<f64> {
        self.point.to_array().to_vec()
    }
}

/// Builds the trapped point on the spherical orbit of radius `r` at latitude `theta`.
pub fn trapped_point(
    params: &SpacetimeParams,
    orbit: &PhotonOrbitParams,
    theta: f64,
    phi: f64,
    sign: f64,
) -> Option<TrappedSample> {
    let p2 = p_theta_squared(params, orbit.r_sphere, theta, orbit.phi);
    if !(p2 > -1e-12) {
        return None;
    }
    let point = PhasePoint {
        t: 0.0,
        r: orbit.r_sphere,
        theta,
        phi,
        p_t: -1.0,
        p_r: 0.0,
        p_theta: sign * p2.max(0.0).sqrt(),
        p_phi: orbit.phi,
    };
    let g = conserved(params, &point).ok()?.hamiltonian;
    (g.abs() < 1e-10).then_some(TrappedSample {
        point,
        r_sphere: orbit.r_sphere,
        theta,
        phi,
        sign_p_theta: sign,
    })
}

/// Number of azimuthal phases sampled per spherical orbit.
pub const PHI_PHASES: usize = 4;

/// The one-parameter family of spherical orbits: radius across the photon region
/// when the spin is nonzero, impact parameter `Φ` on the photon sphere otherwise.
fn orbit_family(params: &SpacetimeParams) -> ([f64; 2], impl Fn(f64) -> Option<PhotonOrbitParams> + '_) {
    let spinning = params.spin() != 0.0;
    let range = if spinning {
        photon_region_bounds(params)
    } else {
        let b = schwarzschild_total(params).sqrt();
        [-b, b]
    };
    let orbit = move |u: f64| {
        if spinning {
            spherical_orbit_constants(params, u).ok()
        } else {
            Some(PhotonOrbitParams {
                r_sphere: photon_sphere_radius(params),
                phi: u,
                eta: schwarzschild_total(params) - u * u,
            })
        }
    };
    (range, orbit)
}

/// `n` orbits placed at stratified quantiles of the family parameter, restricted to
/// orbits whose latitude band keeps `sin θ ≥ AXIS_CLEARANCE`.
fn clear_orbits(params: &SpacetimeParams, n: usize, offset: f64) -> Vec<PhotonOrbitParams> {
    let ([u0, u1], orbit) = orbit_family(params);
    let clear = |u: f64| {
        orbit(u).is_some_and(|o| theta_band(params, &o)[0].sin() >= AXIS_CLEARANCE)
    };
    if u0 == u1 {
        return if clear(u0) { orbit(u0).into_iter().collect() } else { Vec::new() };
    }
    let fine = 4096;
    let du = (u1 - u0) / fine as f64;
    let cells: Vec<f64> = (0..fine)
        .map(|i| u0 + (i as f64 + 0.5) * du)
        .filter(|u| clear(*u))
        .collect();
    if cells.is_empty() {
        return Vec::new();
    }
    (0..n)
        .filter_map(|i| {
            let q = (i as f64 + offset) / n as f64 * cells.len() as f64;
            let c = (q.floor() as usize).min(cells.len() - 1);
            let u = cells[c] + (q - c as f64 - 0.5) * du;
            orbit(u).filter(|o| theta_band(params, o)[0].sin() >= AXIS_CLEARANCE)
        })
        .collect()
}

/// Deterministic stratified grid over the trapped set: spherical orbits across the
/// photon region, latitudes inside each orbit's band, both signs of `p_θ`, and
/// [`PHI_PHASES`] azimuths. Orbits that come within [`AXIS_CLEARANCE`] of the axis
/// are left out.
pub fn sample_trapped_set(params: &SpacetimeParams, n: usize, seed: u64) -> Vec<TrappedSample> {
    if n == 0 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let off: [f64; 3] = [rng.random(), rng.random(), rng.random()];
    let cells = n.div_ceil(2 * PHI_PHASES);
    let n_orbits = (cells as f64).sqrt().ceil() as usize;
    let n_th = cells.div_ceil(n_orbits);

    let mut out = Vec::with_capacity(n);
    'outer: for orbit in clear_orbits(params, n_orbits, off[0]) {
        let band = theta_band(params, &orbit);
        for j in 0..n_th {
            let theta = band[0] + (band[1] - band[0]) * (j as f64 + off[1]) / n_th as f64;
            for sign in [1.0, -1.0] {
                for k in 0..PHI_PHASES {
                    let phi = 2.0 * PI * (k as f64 + off[2]) / PHI_PHASES as f64;
                    if let Some(s) = trapped_point(params, &orbit, theta, phi, sign) {
                        out.push(s);
                        if out.len() == n {
                            break 'outer;
                        }
                    }
                }
            }
        }
    }
    out
}

/// CSV export: provenance columns followed by the eight phase-space coordinates.
pub fn write_samples_csv<W: Write>(samples: &[TrappedSample], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "r_sphere", "theta", "phi", "sign_p_theta", "t", "r", "theta", "phi", "p_t", "p_r",
        "p_theta", "p_phi",
    ])?;
    for s in samples {
        let mut row = vec![s.r_sphere, s.theta, s.phi, s.sign_p_theta];
        row.extend(s.point.to_array());
        w.write_record(row.iter().map(|x| format!("{x}")))?;
    }
    w.flush()?;
    Ok(())
}
