use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::flow::{circular_diff, FlowSystem, KeyCoord};

/// `ẋ = νx`, `ẏ = −νy`, `θ̇ᵢ = ωᵢ` on `ℝ² × T²`, angles measured in turns (period 1).
///
/// The trapped set is the torus `{x = y = 0}`, with unstable direction `∂x` and
/// stable direction `∂y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyNHFlow {
    pub nu: f64,
    pub omega: [f64; 2],
}

pub fn make_toy(nu: f64, omega1: f64, omega2: f64) -> Result<ToyNHFlow> {
    if !(nu > 0.0 && nu.is_finite()) {
        return Err(Error::InvalidParameter(format!("normal rate ν = {nu} must be positive")));
    }
    if !(omega1.is_finite() && omega2.is_finite()) {
        return Err(Error::InvalidParameter("rotation frequencies must be finite".into()));
    }
    Ok(ToyNHFlow {
        nu,
        omega: [omega1, omega2],
    })
}

/// `n` points of a regular grid on the unit square, shifted by a seed-dependent offset.
pub(crate) fn shifted_grid(n: usize, seed: u64) -> Vec<[f64; 2]> {
    let m = (n as f64).sqrt().ceil().max(1.0) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let off: [f64; 2] = [rng.random(), rng.random()];
    (0..n)
        .map(|idx| {
            let (i, j) = (idx / m, idx % m);
            [(i as f64 + off[0]) / m as f64, (j as f64 + off[1]) / m as f64]
        })
        .collect()
}

impl FlowSystem for ToyNHFlow {
    fn name(&self) -> String {
        format!("toy(nu={}, omega=({}, {}))", self.nu, self.omega[0], self.omega[1])
    }

    fn dim(&self) -> usize {
        4
    }

    fn state_labels(&self) -> Vec<String> {
        ["x", "y", "theta1", "theta2"].map(String::from).to_vec()
    }

    fn vector_field(&self, s: &[f64], out: &mut [f64]) {
        out[0] = self.nu * s[0];
        out[1] = -self.nu * s[1];
        out[2] = self.omega[0];
        out[3] = self.omega[1];
    }

    fn jacobian(&self, _s: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        out[0] = self.nu;
        out[5] = -self.nu;
    }

    fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        let dx = a[0] - b[0];
        let dy = a[1] - b[1];
        let d1 = circular_diff(a[2] - b[2], 1.0);
        let d2 = circular_diff(a[3] - b[3], 1.0);
        (dx * dx + dy * dy + d1 * d1 + d2 * d2).sqrt()
    }

    fn escaped(&self, s: &[f64]) -> bool {
        s[0].abs() + s[1].abs() > 1.0
    }

    fn sample_trapped(&self, n: usize, seed: u64) -> Vec<Vec<f64>> {
        shifted_grid(n, seed)
            .into_iter()
            .map(|[a, b]| vec![0.0, 0.0, a, b])
            .collect()
    }

    fn normal_dims(&self) -> (usize, usize) {
        (1, 1)
    }

    fn conserved_names(&self) -> Vec<String> {
        vec!["xy".into()]
    }

    fn conserved(&self, s: &[f64]) -> Vec<f64> {
        vec![s[0] * s[1]]
    }

    fn canonicalize(&self, s: &mut [f64], _frame: &mut [f64], _k: usize) -> bool {
        let mut changed = false;
        for a in &mut s[2..4] {
            if !(0.0..1.0).contains(a) {
                *a = a.rem_euclid(1.0);
                changed = true;
            }
        }
        changed
    }

    fn packing_key(&self, s: &[f64]) -> Vec<KeyCoord> {
        vec![
            KeyCoord { value: s[2], period: Some(1.0) },
            KeyCoord { value: s[3], period: Some(1.0) },
        ]
    }

    fn analytic_pressure(&self, s: f64) -> Option<f64> {
        Some(-s * self.nu)
    }
}
