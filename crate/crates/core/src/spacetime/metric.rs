use nalgebra::Matrix4;
use serde::Serialize;

use super::{PhasePoint, SpacetimeParams};
use crate::error::Result;

/// Gradient and (optionally) Hessian of the dual metric function G
/// over the phase-space coordinates `(t, r, θ, φ, p_t, p_r, p_θ, p_φ)`.
#[derive(Debug, Clone)]
pub(crate) struct DualMetricJet {
    pub grad: [f64; 8],
    pub hess: [[f64; 8]; 8],
}

/// Derivatives of `X²/D` where `X = c₀(x)·y₀ + c₁(x)·y₁` is linear in two momenta
/// and `D = D(x)` depends on the single configuration variable `x`.
struct RatioSquare {
    v: f64,
    dx: f64,
    dxx: f64,
    dy: [f64; 2],
    dxy: [f64; 2],
    dyy: [[f64; 2]; 2],
}

fn ratio_square(y: [f64; 2], c: [[f64; 3]; 2], d: [f64; 3]) -> RatioSquare {
    let x = c[0][0] * y[0] + c[1][0] * y[1];
    let xx = c[0][1] * y[0] + c[1][1] * y[1];
    let xxx = c[0][2] * y[0] + c[1][2] * y[1];
    let (dd, d1, d2) = (d[0], d[1], d[2]);
    let inv = 1.0 / dd;
    let inv2 = inv * inv;
    let v = x * x * inv;
    let dx = 2.0 * x * xx * inv - x * x * d1 * inv2;
    let dxx = 2.0 * xx * xx * inv + 2.0 * x * xxx * inv - 4.0 * x * xx * d1 * inv2
        - x * x * d2 * inv2
        + 2.0 * x * x * d1 * d1 * inv2 * inv;
    let mut dy = [0.0; 2];
    let mut dxy = [0.0; 2];
    let mut dyy = [[0.0; 2]; 2];
    for i in 0..2 {
        dy[i] = 2.0 * x * c[i][0] * inv;
        dxy[i] = 2.0 * c[i][0] * xx * inv + 2.0 * x * c[i][1] * inv - 2.0 * x * c[i][0] * d1 * inv2;
        for j in 0..2 {
            dyy[i][j] = 2.0 * c[i][0] * c[j][0] * inv;
        }
    }
    RatioSquare {
        v,
        dx,
        dxx,
        dy,
        dxy,
        dyy,
    }
}

/// Radial part `F`, angular part `Θ` and `ρ²`, with `ρ² G = F + Θ`.
pub(crate) fn separated_parts(params: &SpacetimeParams, z: &[f64]) -> (f64, f64, f64) {
    let a = params.spin();
    let d0sq = params.delta0().powi(2);
    let (r, theta) = (z[1], z[2]);
    let (p_t, p_r, p_th, p_ph) = (z[4], z[5], z[6], z[7]);
    let delta = params.delta(r);
    let (dth, _, _) = params.delta_theta_derivs(theta);
    let (s, c) = theta.sin_cos();
    let s2 = s * s;
    let x = (r * r + a * a) * p_t + a * p_ph;
    let y = a * s2 * p_t + p_ph;
    let f = delta * p_r * p_r - d0sq * x * x / delta;
    let th = dth * p_th * p_th + d0sq * y * y / (dth * s2);
    (f, th, r * r + a * a * c * c)
}

pub(crate) fn dual_metric_jet(params: &SpacetimeParams, z: &[f64], with_hessian: bool) -> DualMetricJet {
    let a = params.spin();
    let a2 = a * a;
    let d0sq = params.delta0().powi(2);
    let (r, theta) = (z[1], z[2]);
    let (p_t, p_r, p_th, p_ph) = (z[4], z[5], z[6], z[7]);

    let (dl, dl1, dl2) = params.delta_derivs(r);
    let (dth, dth1, dth2) = params.delta_theta_derivs(theta);
    let (sn, cs) = theta.sin_cos();
    let s = sn * sn;
    let s1 = 2.0 * sn * cs;
    let s2 = 2.0 * (cs * cs - sn * sn);

    // F = Δ p_r² − Δ₀² X²/Δ,  X = (r²+a²) p_t + a p_φ
    let q = ratio_square(
        [p_t, p_ph],
        [[r * r + a2, 2.0 * r, 2.0], [a, 0.0, 0.0]],
        [dl, dl1, dl2],
    );
    // Θ = Δ_θ p_θ² + Δ₀² Y²/(Δ_θ sin²θ),  Y = a sin²θ p_t + p_φ
    let dd = [dth * s, dth1 * s + dth * s1, dth2 * s + 2.0 * dth1 * s1 + dth * s2];
    let u = ratio_square([p_t, p_ph], [[a * s, a * s1, a * s2], [1.0, 0.0, 0.0]], dd);

    let n = dl * p_r * p_r - d0sq * q.v + dth * p_th * p_th + d0sq * u.v;
    let mut ng = [0.0; 8];
    ng[1] = dl1 * p_r * p_r - d0sq * q.dx;
    ng[2] = dth1 * p_th * p_th + d0sq * u.dx;
    ng[4] = d0sq * (u.dy[0] - q.dy[0]);
    ng[5] = 2.0 * dl * p_r;
    ng[6] = 2.0 * dth * p_th;
    ng[7] = d0sq * (u.dy[1] - q.dy[1]);

    let rho2 = r * r + a2 * cs * cs;
    let w = 1.0 / rho2;
    let mut pg = [0.0; 8];
    pg[1] = 2.0 * r;
    pg[2] = -a2 * s1;
    let mut wg = [0.0; 8];
    wg[1] = -pg[1] * w * w;
    wg[2] = -pg[2] * w * w;

    let mut grad = [0.0; 8];
    for i in 0..8 {
        grad[i] = ng[i] * w + n * wg[i];
    }

    let mut hess = [[0.0; 8]; 8];
    if with_hessian {
        let mut nh = [[0.0; 8]; 8];
        nh[1][1] = dl2 * p_r * p_r - d0sq * q.dxx;
        nh[1][5] = 2.0 * dl1 * p_r;
        nh[5][5] = 2.0 * dl;
        nh[1][4] = -d0sq * q.dxy[0];
        nh[1][7] = -d0sq * q.dxy[1];
        nh[2][2] = dth2 * p_th * p_th + d0sq * u.dxx;
        nh[2][6] = 2.0 * dth1 * p_th;
        nh[6][6] = 2.0 * dth;
        nh[2][4] = d0sq * u.dxy[0];
        nh[2][7] = d0sq * u.dxy[1];
        nh[4][4] = d0sq * (u.dyy[0][0] - q.dyy[0][0]);
        nh[4][7] = d0sq * (u.dyy[0][1] - q.dyy[0][1]);
        nh[7][7] = d0sq * (u.dyy[1][1] - q.dyy[1][1]);
        for i in 0..8 {
            for j in 0..i {
                nh[i][j] = nh[j][i];
            }
        }
        // w = 1/ρ²: w_ij = 2 P_i P_j / P³ − P_ij / P²
        let mut wh = [[0.0; 8]; 8];
        let mut ph = [[0.0; 8]; 8];
        ph[1][1] = 2.0;
        ph[2][2] = -2.0 * a2 * (cs * cs - sn * sn);
        for &i in &[1usize, 2] {
            for &j in &[1usize, 2] {
                wh[i][j] = 2.0 * pg[i] * pg[j] * w * w * w - ph[i][j] * w * w;
            }
        }
        for i in 0..8 {
            for j in 0..8 {
                hess[i][j] = nh[i][j] * w + ng[i] * wg[j] + ng[j] * wg[i] + n * wh[i][j];
            }
        }
    }

    DualMetricJet {
        grad,
        hess,
    }
}

/// Components `g^{μν}` in the `(t, r, θ, φ)` coordinate basis.
pub fn inverse_metric(params: &SpacetimeParams, point: &PhasePoint) -> Result<Matrix4<f64>> {
    point.check_chart(params)?;
    let a = params.spin();
    let a2 = a * a;
    let d0sq = params.delta0().powi(2);
    let r = point.r;
    let delta = params.delta(r);
    let (dth, _, _) = params.delta_theta_derivs(point.theta);
    let (sn, cs) = point.theta.sin_cos();
    let s = sn * sn;
    let rho2 = r * r + a2 * cs * cs;
    let w = 1.0 / rho2;
    let ra = r * r + a2;

    let mut g = Matrix4::zeros();
    g[(0, 0)] = w * d0sq * (a2 * s / dth - ra * ra / delta);
    g[(0, 3)] = w * d0sq * (a / dth - a * ra / delta);
    g[(3, 0)] = g[(0, 3)];
    g[(3, 3)] = w * d0sq * (1.0 / (dth * s) - a2 / delta);
    g[(1, 1)] = delta / rho2;
    g[(2, 2)] = dth / rho2;
    Ok(g)
}

/// Components `g_{μν}` of the line element.
pub fn metric(params: &SpacetimeParams, point: &PhasePoint) -> Result<Matrix4<f64>> {
    point.check_chart(params)?;
    let a = params.spin();
    let a2 = a * a;
    let d0sq = params.delta0().powi(2);
    let r = point.r;
    let delta = params.delta(r);
    let (dth, _, _) = params.delta_theta_derivs(point.theta);
    let (sn, cs) = point.theta.sin_cos();
    let s = sn * sn;
    let rho2 = r * r + a2 * cs * cs;
    let ra = r * r + a2;
    let big_a = dth * s / (d0sq * rho2);
    let big_b = delta / (d0sq * rho2);

    let mut g = Matrix4::zeros();
    g[(0, 0)] = big_a * a2 - big_b;
    g[(0, 3)] = -big_a * a * ra + big_b * a * s;
    g[(3, 0)] = g[(0, 3)];
    g[(3, 3)] = big_a * ra * ra - big_b * a2 * s * s;
    g[(1, 1)] = rho2 / delta;
    g[(2, 2)] = rho2 / dth;
    Ok(g)
}

/// `G(z, ζ) = g^{μν} p_μ p_ν`.
pub fn dual_metric_g(params: &SpacetimeParams, point: &PhasePoint) -> Result<f64> {
    point.check_chart(params)?;
    let (f, th, rho2) = separated_parts(params, &point.to_array());
    Ok((f + th) / rho2)
}

/// Hamilton vector field `H_G = (∂G/∂p_μ, −∂G/∂x^μ)`.
pub fn hamiltonian_field(params: &SpacetimeParams, point: &PhasePoint) -> Result<[f64; 8]> {
    point.check_chart(params)?;
    let jet = dual_metric_jet(params, &point.to_array(), false);
    let g = jet.grad;
    Ok([g[4], g[5], g[6], g[7], -g[0], -g[1], -g[2], -g[3]])
}

/// Energy, axial angular momentum, Carter constant and the value of G.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConservedSet {
    pub energy: f64,
    pub angular_momentum: f64,
    pub carter: f64,
    pub hamiltonian: f64,
}

impl ConservedSet {
    pub fn as_array(&self) -> [f64; 4] {
        [self.energy, self.angular_momentum, self.carter, self.hamiltonian]
    }
}

/// Conserved quantities of the point.
///
/// With `ρ² G = F(r) + Θ(θ)`, the separation constant is `K = Θ − a²cos²θ G`
/// and the Carter constant is `Q = K − Δ₀²(L_z − aE)²`, which reduces to the
/// familiar Kerr form when Λ = 0.
pub fn conserved(params: &SpacetimeParams, point: &PhasePoint) -> Result<ConservedSet> {
    point.check_chart(params)?;
    Ok(conserved_unchecked(params, &point.to_array()))
}

pub(crate) fn conserved_unchecked(params: &SpacetimeParams, z: &[f64]) -> ConservedSet {
    let a = params.spin();
    let (f, th, rho2) = separated_parts(params, z);
    let g = (f + th) / rho2;
    let energy = -z[4];
    let lz = z[7];
    let c = z[2].cos();
    let k = th - a * a * c * c * g;
    let carter = k - params.delta0().powi(2) * (lz - a * energy).powi(2);
    ConservedSet {
        energy,
        angular_momentum: lz,
        carter,
        hamiltonian: g,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn pt(z: [f64; 8]) -> PhasePoint {
        PhasePoint::from_array(z)
    }

    #[test]
    fn schwarzschild_inverse_metric() {
        let p = SpacetimeParams::schwarzschild(1.0).unwrap();
        let g = inverse_metric(&p, &pt([0.0, 4.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0])).unwrap();
        assert!((g[(0, 0)] + 2.0).abs() < 1e-15);
        assert!((g[(1, 1)] - 0.5).abs() < 1e-15);
        assert!((g[(2, 2)] - 1.0 / 16.0).abs() < 1e-15);
        assert_eq!(g[(0, 3)], 0.0);
    }

    #[test]
    fn frame_dragging_off_diagonal() {
        let p = SpacetimeParams::kerr(1.0, 0.9).unwrap();
        let g = inverse_metric(&p, &pt([0.0, 3.0, FRAC_PI_2, 0.0, 0.0, 0.0, 0.0, 0.0])).unwrap();
        assert!(g[(0, 3)].abs() > 1e-3);
    }

    #[test]
    fn grr_is_delta_over_rho2() {
        let p = SpacetimeParams::new(1.0, 0.6, 0.01).unwrap();
        let (r, th) = (3.3_f64, 0.8_f64);
        let g = inverse_metric(&p, &pt([0.0, r, th, 0.0, 0.0, 0.0, 0.0, 0.0])).unwrap();
        let expect = p.delta(r) / (r * r + 0.6 * 0.6 * th.cos().powi(2));
        assert_eq!(g[(1, 1)], expect);
    }

    #[test]
    fn radial_photon_is_null() {
        let p = SpacetimeParams::schwarzschild(1.0).unwrap();
        let g = dual_metric_g(&p, &pt([0.0, 4.0, 1.0, 0.0, -1.0, 2.0, 0.0, 0.0])).unwrap();
        assert!(g.abs() < 1e-15);
        let zero = dual_metric_g(&p, &pt([0.0, 4.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0])).unwrap();
        assert_eq!(zero, 0.0);
    }

    #[test]
    fn photon_sphere_is_critical() {
        let p = SpacetimeParams::schwarzschild(1.0).unwrap();
        let z = [0.0, 3.0, FRAC_PI_2, 0.0, -1.0, 0.0, 0.0, 27f64.sqrt()];
        let h = hamiltonian_field(&p, &pt(z)).unwrap();
        assert!(h[1].abs() < 1e-10);
        assert!(h[5].abs() < 1e-10);
        let c = conserved(&p, &pt(z)).unwrap();
        assert!(c.carter.abs() < 1e-12);
        assert!((c.angular_momentum - 27f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn equatorial_motion_stays_equatorial() {
        let p = SpacetimeParams::kerr(1.0, 0.9).unwrap();
        let z = [0.0, 5.0, FRAC_PI_2, 0.0, -1.0, 0.3, 0.0, 2.0];
        let h = hamiltonian_field(&p, &pt(z)).unwrap();
        assert_eq!(h[2], 0.0);
        assert!(h[6].abs() < 1e-14);
    }

    #[test]
    fn carter_constant_schwarzschild_form() {
        let p = SpacetimeParams::schwarzschild(1.0).unwrap();
        let (th, pth, pph) = (0.7_f64, 1.3, -2.2);
        // null covector: solve for p_r
        let mut z = [0.0, 5.0, th, 0.0, -1.0, 0.0, pth, pph];
        let (f, tpart, _) = separated_parts(&p, &z);
        let delta = p.delta(5.0);
        z[5] = (-(f + tpart) / delta).sqrt();
        let c = conserved(&p, &pt(z)).unwrap();
        assert!(c.hamiltonian.abs() < 1e-13);
        let expect = pth * pth + pph * pph / th.tan().powi(2);
        assert!((c.carter - expect).abs() < 1e-12);
        assert!(c.carter >= 0.0);
    }
}
