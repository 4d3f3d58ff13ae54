use crate::flow::{circular_diff, FlowSystem, KeyCoord};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const A: [[f64; 2]; 2] = [[2.0, 1.0], [1.0, 1.0]];
const A_INV: [[f64; 2]; 2] = [[1.0, -1.0], [-1.0, 2.0]];
const SNAP: f64 = 1e-9;

/// Suspension of the cat map `A = [[2,1],[1,1]]` under the unit roof.
///
/// States are `(z₁, z₂, u)` with `z ∈ T²` and `u ∈ [0, 1)`; the flow is `u̇ = 1`
/// and reaching `u = 1` applies `z ↦ Az mod 1`. The whole space is trapped and
/// hyperbolic, with expansion rate `log((3+√5)/2)` carried by the tangent bundle.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CatSuspension;

pub fn make_cat_suspension() -> CatSuspension {
    CatSuspension
}

/// `log((3+√5)/2)`, the logarithm of the expanding eigenvalue of `A`.
pub fn cat_entropy() -> f64 {
    ((3.0 + 5f64.sqrt()) / 2.0).ln()
}

fn apply(m: &[[f64; 2]; 2], v: &mut [f64]) {
    let (a, b) = (v[0], v[1]);
    v[0] = m[0][0] * a + m[0][1] * b;
    v[1] = m[1][0] * a + m[1][1] * b;
}

impl FlowSystem for CatSuspension {
    fn name(&self) -> String {
        "cat-suspension".into()
    }

    fn dim(&self) -> usize {
        3
    }

    fn state_labels(&self) -> Vec<String> {
        ["z1", "z2", "u"].map(String::from).to_vec()
    }

    fn vector_field(&self, _s: &[f64], out: &mut [f64]) {
        out[0] = 0.0;
        out[1] = 0.0;
        out[2] = 1.0;
    }

    fn jacobian(&self, _s: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }

    /// Fibre metric `|(I + u(A − I))(Δz + k)|` minimized over lattice shifts, plus `|Δu|`.
    /// It interpolates between the flat metric at `u = 0` and its pullback by `A` at
    /// `u = 1`, matching across the identification.
    fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        let w = [circular_diff(a[0] - b[0], 1.0), circular_diff(a[1] - b[1], 1.0)];
        let du = (a[2] - b[2]).abs();
        let u = 0.5 * (a[2] + b[2]);
        if u.abs() < SNAP {
            return w[0].hypot(w[1]) + du;
        }
        let m = [[1.0 + u, u], [u, 1.0]];
        let mut best = f64::INFINITY;
        for k0 in -1..=1 {
            for k1 in -1..=1 {
                let mut v = [w[0] + k0 as f64, w[1] + k1 as f64];
                apply(&m, &mut v);
                best = best.min(v[0].hypot(v[1]));
            }
        }
        best + du
    }

    fn escaped(&self, _s: &[f64]) -> bool {
        false
    }

    fn sample_trapped(&self, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| vec![rng.random(), rng.random(), 0.0])
            .collect()
    }

    fn normal_dims(&self) -> (usize, usize) {
        (0, 0)
    }

    /// The exponent gap is `2 log φ²`, so ten time units align to about `1e-8`.
    fn alignment_floor(&self) -> f64 {
        10.0
    }

    fn canonicalize(&self, s: &mut [f64], frame: &mut [f64], k: usize) -> bool {
        let (map, shift) = if s[2] >= 1.0 - SNAP {
            (&A, -1.0)
        } else if s[2] < -SNAP {
            (&A_INV, 1.0)
        } else {
            return false;
        };
        s[2] += shift;
        if s[2].abs() < SNAP {
            s[2] = 0.0;
        }
        apply(map, &mut s[..2]);
        s[0] = s[0].rem_euclid(1.0);
        s[1] = s[1].rem_euclid(1.0);
        for c in 0..k {
            apply(map, &mut frame[c * 3..c * 3 + 2]);
        }
        true
    }

    fn packing_key(&self, s: &[f64]) -> Vec<KeyCoord> {
        // Smallest eigenvalue of the symmetric matrix I + u(A − I).
        let u = s[2].clamp(0.0, 1.0);
        let sigma = (2.0 + u - 5f64.sqrt() * u) / 2.0;
        vec![
            KeyCoord { value: sigma * s[0], period: Some(sigma) },
            KeyCoord { value: sigma * s[1], period: Some(sigma) },
        ]
    }

    fn analytic_pressure(&self, s: f64) -> Option<f64> {
        Some((1.0 - s) * cat_entropy())
    }
}
