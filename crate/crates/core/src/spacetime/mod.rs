//! Kerr and Kerr-de Sitter geometry in Boyer-Lindquist coordinates.
//!
//! Geometric units (G = c = 1). The line element is
//!
//! ```text
//! g = ρ²(dr²/Δ + dθ²/Δ_θ) + Δ_θ sin²θ/(Δ₀² ρ²) (a dt − (r²+a²) dφ)²
//!     − Δ/(Δ₀² ρ²) (dt − a sin²θ dφ)²
//! Δ(r) = (r²+a²)(1 − Λr²/3) − 2mr,  Δ_θ = 1 + (Λa²/3)cos²θ,  Δ₀ = 1 + Λa²/3
//! ```
//!
//! with ρ² = r² + a² cos²θ. Phase-space points are covectors over the
//! coordinate chart, ordered `(t, r, θ, φ, p_t, p_r, p_θ, p_φ)`.

mod metric;
pub mod poly;

pub use metric::{
    conserved, dual_metric_g, hamiltonian_field, inverse_metric, metric, ConservedSet,
};
pub(crate) use metric::{conserved_unchecked, dual_metric_jet};

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};

pub const IDX_T: usize = 0;
pub const IDX_R: usize = 1;
pub const IDX_THETA: usize = 2;
pub const IDX_PHI: usize = 3;
pub const IDX_PT: usize = 4;
pub const IDX_PR: usize = 5;
pub const IDX_PTHETA: usize = 6;
pub const IDX_PPHI: usize = 7;

/// Black-hole parameters: mass `m`, spin `a` and cosmological constant `Λ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpacetimeParams {
    mass: f64,
    spin: f64,
    lambda: f64,
    #[serde(skip)]
    roots: HorizonRoots,
}

impl SpacetimeParams {
    /// Validates subextremality, `Λ ≥ 0`, and (for `Λ > 0`) the four-root horizon structure.
    pub fn new(mass: f64, spin: f64, lambda: f64) -> Result<Self> {
        if !(mass.is_finite() && mass > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "mass must be positive and finite, got {mass}"
            )));
        }
        if !spin.is_finite() || spin.abs() >= mass {
            return Err(Error::Subextremal { mass, spin });
        }
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "cosmological constant must be nonnegative, got {lambda}"
            )));
        }
        let roots = compute_horizon_roots(mass, spin, lambda)?;
        Ok(Self {
            mass,
            spin,
            lambda,
            roots,
        })
    }

    pub fn schwarzschild(mass: f64) -> Result<Self> {
        Self::new(mass, 0.0, 0.0)
    }

    pub fn kerr(mass: f64, spin: f64) -> Result<Self> {
        Self::new(mass, spin, 0.0)
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn spin(&self) -> f64 {
        self.spin
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn horizons(&self) -> HorizonRoots {
        self.roots
    }

    /// `Δ₀ = 1 + Λa²/3`.
    pub fn delta0(&self) -> f64 {
        1.0 + self.lambda * self.spin * self.spin / 3.0
    }

    /// `Δ(r)`, written out exactly as the product form.
    pub fn delta(&self, r: f64) -> f64 {
        delta(self, r)
    }

    /// `Δ(r), Δ'(r), Δ''(r)`.
    pub fn delta_derivs(&self, r: f64) -> (f64, f64, f64) {
        let (a2, l, m) = (self.spin * self.spin, self.lambda, self.mass);
        let d = (r * r + a2) * (1.0 - l * r * r / 3.0) - 2.0 * m * r;
        let d1 = 2.0 * r - 4.0 * l * r * r * r / 3.0 - 2.0 * l * a2 * r / 3.0 - 2.0 * m;
        let d2 = 2.0 - 4.0 * l * r * r - 2.0 * l * a2 / 3.0;
        (d, d1, d2)
    }

    /// `Δ_θ, Δ_θ', Δ_θ''` with respect to θ.
    pub fn delta_theta_derivs(&self, theta: f64) -> (f64, f64, f64) {
        let c = self.lambda * self.spin * self.spin / 3.0;
        let (s, co) = theta.sin_cos();
        let d = 1.0 + c * co * co;
        let d1 = -2.0 * c * s * co;
        let d2 = -2.0 * c * (co * co - s * s);
        (d, d1, d2)
    }

    /// Ascending coefficients of Δ as a polynomial in r.
    pub fn delta_coefficients(&self) -> [f64; 5] {
        delta_coefficients(self.mass, self.spin, self.lambda)
    }

    /// Whether `r` lies strictly between the event and cosmological horizons.
    pub fn in_exterior(&self, r: f64) -> bool {
        r > self.roots.r_event && r < self.roots.r_cosmo
    }
}

/// `Δ(r) = (r²+a²)(1−Λr²/3) − 2mr`.
pub fn delta(params: &SpacetimeParams, r: f64) -> f64 {
    let a2 = params.spin * params.spin;
    (r * r + a2) * (1.0 - params.lambda * r * r / 3.0) - 2.0 * params.mass * r
}

fn delta_coefficients(m: f64, a: f64, l: f64) -> [f64; 5] {
    let a2 = a * a;
    [a2, -2.0 * m, 1.0 - l * a2 / 3.0, 0.0, -l / 3.0]
}

/// Real roots of Δ. `r_cosmo = +∞` (and `r_minus = −∞`) when Λ = 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HorizonRoots {
    #[serde(serialize_with = "serialize_extended")]
    pub r_minus: f64,
    pub r_cauchy: f64,
    pub r_event: f64,
    #[serde(serialize_with = "serialize_extended")]
    pub r_cosmo: f64,
}

/// Finite values as JSON numbers, infinities as the strings `"inf"` / `"-inf"`.
pub fn serialize_extended<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_f64(*x)
    } else if x.is_nan() {
        s.serialize_str("nan")
    } else if *x > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}

/// Horizon structure of the given parameters.
pub fn horizon_roots(params: &SpacetimeParams) -> HorizonRoots {
    params.roots
}

fn compute_horizon_roots(m: f64, a: f64, l: f64) -> Result<HorizonRoots> {
    if l == 0.0 {
        let disc = (m * m - a * a).sqrt();
        let r_event = m + disc;
        return Ok(HorizonRoots {
            r_minus: f64::NEG_INFINITY,
            r_cauchy: a * a / r_event,
            r_event,
            r_cosmo: f64::INFINITY,
        });
    }
    let coeffs = delta_coefficients(m, a, l);
    let roots = poly::real_roots(&coeffs);
    if roots.len() != 4 {
        return Err(Error::RootCount { found: roots.len() });
    }
    Ok(HorizonRoots {
        r_minus: roots[0],
        r_cauchy: roots[1],
        r_event: roots[2],
        r_cosmo: roots[3],
    })
}

/// A point of the cotangent bundle over the exterior region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhasePoint {
    pub t: f64,
    pub r: f64,
    pub theta: f64,
    pub phi: f64,
    pub p_t: f64,
    pub p_r: f64,
    pub p_theta: f64,
    pub p_phi: f64,
}

impl PhasePoint {
    pub fn from_array(z: [f64; 8]) -> Self {
        Self {
            t: z[0],
            r: z[1],
            theta: z[2],
            phi: z[3],
            p_t: z[4],
            p_r: z[5],
            p_theta: z[6],
            p_phi: z[7],
        }
    }

    pub fn to_array(&self) -> [f64; 8] {
        [
            self.t,
            self.r,
            self.theta,
            self.phi,
            self.p_t,
            self.p_r,
            self.p_theta,
            self.p_phi,
        ]
    }

    /// Builds a point and checks it lies in the exterior chart of `params`.
    pub fn checked(params: &SpacetimeParams, z: [f64; 8]) -> Result<Self> {
        let p = Self::from_array(z);
        p.check_chart(params)?;
        Ok(p)
    }

    pub fn check_chart(&self, params: &SpacetimeParams) -> Result<()> {
        if self.theta.sin() == 0.0 || !self.theta.is_finite() {
            return Err(Error::Chart(format!(
                "theta = {} lies on the symmetry axis",
                self.theta
            )));
        }
        if !params.in_exterior(self.r) {
            let h = params.horizons();
            return Err(Error::Chart(format!(
                "r = {} outside ({}, {})",
                self.r, h.r_event, h.r_cosmo
            )));
        }
        Ok(())
    }
}
