use std::f64::consts::FRAC_PI_2;
use std::sync::OnceLock;

use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trapped_pressure::fixtures::{cat_entropy, make_cat_suspension, make_toy, ToyNHFlow};
use trapped_pressure::flow::{integrate_sampled, FlowSystem, IntegratorConfig};
use trapped_pressure::pressure::{
    agreement_tolerance, asymptotic_rate, greedy_separated_set, linear_fit, log_unstable_jacobian, nh_check,
    pressure_separated, pressure_variational, prepare_pressure, r_star, tangent_spectrum,
    telescoping_check, PressureInputs, ScaledMetric,
};
use trapped_pressure::spacetime::SpacetimeParams;
use trapped_pressure::trapped::{
    photon_region_bounds, spherical_orbit_constants, trapped_config, trapped_point, KerrFlow,
};
use trapped_pressure::Error;

const EPS: [f64; 3] = [0.2, 0.1, 0.05];
const TS: [f64; 5] = [10.0, 20.0, 30.0, 40.0, 60.0];

fn toy() -> ToyNHFlow {
    make_toy(0.5, 1.0, 2f64.sqrt()).unwrap()
}

fn schwarzschild() -> KerrFlow {
    KerrFlow::new(SpacetimeParams::schwarzschild(1.0).unwrap())
}

fn kerr09() -> KerrFlow {
    KerrFlow::new(SpacetimeParams::kerr(1.0, 0.9).unwrap())
}

fn toy_inputs() -> &'static PressureInputs {
    static CELL: OnceLock<PressureInputs> = OnceLock::new();
    CELL.get_or_init(|| {
        let sys = toy();
        let samples = sys.sample_trapped(400, 1);
        prepare_pressure(&sys, &samples, &EPS, &TS, 0.5, &IntegratorConfig::default()).unwrap()
    })
}

fn schwarzschild_inputs() -> &'static PressureInputs {
    static CELL: OnceLock<PressureInputs> = OnceLock::new();
    CELL.get_or_init(|| {
        let sys = schwarzschild();
        let samples = sys.sample_trapped(60, 2);
        prepare_pressure(&sys, &samples, &EPS, &TS, 0.5, &trapped_config()).unwrap()
    })
}

fn cat_inputs() -> &'static PressureInputs {
    static CELL: OnceLock<PressureInputs> = OnceLock::new();
    CELL.get_or_init(|| {
        let sys = make_cat_suspension();
        let samples = sys.sample_trapped(3000, 3);
        prepare_pressure(&sys, &samples, &[0.3, 0.2], &[1.0, 2.0, 3.0], 1.0, &IntegratorConfig::default())
            .unwrap()
    })
}

fn brute_force_greedy(sys: &dyn FlowSystem, orbits: &[Vec<Vec<f64>>], eps: f64) -> Vec<usize> {
    let mut chosen: Vec<usize> = Vec::new();
    for (i, o) in orbits.iter().enumerate() {
        let separated = chosen.iter().all(|&j| {
            orbits[j]
                .iter()
                .zip(o)
                .any(|(a, b)| sys.distance(a, b) >= eps)
        });
        if separated {
            chosen.push(i);
        }
    }
    chosen
}

fn sampled_orbits(sys: &dyn FlowSystem, samples: &[Vec<f64>], horizon: f64, h: f64, cfg: &IntegratorConfig) -> Vec<Vec<Vec<f64>>> {
    samples
        .iter()
        .map(|p| integrate_sampled(sys, p, horizon, h, cfg).unwrap().states)
        .collect()
}

#[test]
fn toy_unstable_jacobian_is_linear_in_time() {
    let sys = toy();
    let p = vec![0.0, 0.0, 0.3, 0.7];
    for t in [1.0, 10.0, 37.5] {
        let rec = log_unstable_jacobian(&sys, &p, 0, t, &IntegratorConfig::default()).unwrap();
        assert_abs_diff_eq!(rec.lambda_u, 0.5 * t, epsilon = 1e-8);
        assert!(rec.aligned && rec.alignment_spread < 1e-9);
        assert_abs_diff_eq!(rec.rate, 0.5, epsilon = 1e-9);
    }
}

#[test]
fn schwarzschild_unstable_jacobian_matches_closed_rate() {
    let p = vec![0.0, 3.0, FRAC_PI_2, 0.0, -1.0, 0.0, 0.0, 27f64.sqrt()];
    let rec = log_unstable_jacobian(&schwarzschild(), &p, 0, 50.0, &trapped_config()).unwrap();
    assert!((rec.lambda_u - 50.0 / 3f64.sqrt()).abs() < 0.05, "{}", rec.lambda_u);
    assert!(rec.aligned);
}

#[test]
fn kerr_boundary_orbits_have_distinct_positive_rates() {
    let params = SpacetimeParams::kerr(1.0, 0.9).unwrap();
    let sys = kerr09();
    let [r1, r2] = photon_region_bounds(&params);
    assert_abs_diff_eq!(r1, 1.558, epsilon = 1e-3);
    assert_abs_diff_eq!(r2, 3.910, epsilon = 1e-3);
    let rate = |r: f64| {
        let orbit = spherical_orbit_constants(&params, r).unwrap();
        let p = trapped_point(&params, &orbit, FRAC_PI_2, 0.0, 1.0).unwrap().state();
        log_unstable_jacobian(&sys, &p, 0, 40.0, &trapped_config()).unwrap().rate
    };
    let (a, b) = (rate(r1 + 1e-3), rate(r2 - 1e-3));
    assert!(a > 0.0 && b > 0.0);
    assert!((a - b).abs() > 0.05, "prograde {a}, retrograde {b}");
}

#[test]
fn telescoping_on_toy_is_exact() {
    let sys = toy();
    let p = vec![0.0, 0.0, 0.1, 0.9];
    let cfg = IntegratorConfig {
        rel_tol: 1e-14,
        abs_tol: 1e-14,
        ..IntegratorConfig::default()
    };
    assert_eq!(telescoping_check(&sys, &p, 1, &cfg).unwrap(), 0.0);
    assert!(telescoping_check(&sys, &p, 7, &cfg).unwrap() < 1e-12);
    assert!(matches!(telescoping_check(&sys, &p, 0, &cfg), Err(Error::InvalidParameter(_))));
}

#[test]
fn telescoping_on_kerr_sample() {
    let sys = kerr09();
    let p = &sys.sample_trapped(8, 4)[5];
    let r = telescoping_check(&sys, p, 10, &trapped_config()).unwrap();
    assert!(r < 1e-6, "{r}");
}

#[test]
fn toy_spectrum() {
    let rep = tangent_spectrum(&toy(), &[0.0, 0.0, 0.2, 0.4], 0, 50.0, &IntegratorConfig::default()).unwrap();
    for (x, want) in rep.exponents.iter().zip([0.5, 0.0, 0.0, -0.5]) {
        assert_abs_diff_eq!(*x, want, epsilon = 1e-9);
    }
    assert_eq!(rep.unstable.len(), 1);
    assert_eq!(rep.tangent.len(), 2);
    assert!(rep.mu_max < 1e-9 && !rep.ambiguous && !rep.degenerate);
}

#[test]
fn schwarzschild_spectrum() {
    let sys = schwarzschild();
    let p = sys.sample_trapped(8, 3)[5].clone();
    let rep = tangent_spectrum(&sys, &p, 0, 200.0, &trapped_config()).unwrap();
    let k = 1.0 / 3f64.sqrt();
    assert!((rep.unstable[0] - k).abs() < 1e-3, "{:?}", rep.exponents);
    assert!((rep.stable[0] + k).abs() < 1e-3, "{:?}", rep.exponents);
    assert!(rep.tangent.iter().all(|x| x.abs() < 0.01), "{:?}", rep.tangent);
}

#[test]
fn r_star_cases() {
    assert_eq!(r_star(0.5, 0.0, 10), 10);
    assert_eq!(r_star(0.5, 0.1, 10), 4);
    assert_eq!(r_star(0.5, 0.11, 10), 4);
    assert_eq!(r_star(0.5, 0.5, 10), 0);
    assert_eq!(r_star(0.5, 0.001, 10), 10);
}

#[test]
fn nh_check_classifies_fixtures() {
    let sys = toy();
    let rep = nh_check(&sys, &sys.sample_trapped(9, 1), 10, 40.0, &IntegratorConfig::default()).unwrap();
    assert_abs_diff_eq!(rep.nu_min, 0.5, epsilon = 1e-9);
    assert!(rep.mu_max < 1e-9);
    assert_eq!(rep.r_star, rep.r_cap);

    let cat = make_cat_suspension();
    let rep = nh_check(&cat, &cat.sample_trapped(4, 1), 10, 20.0, &IntegratorConfig::default()).unwrap();
    assert_abs_diff_eq!(rep.nu_min, cat_entropy(), epsilon = 1e-6);
    assert_abs_diff_eq!(rep.mu_max, rep.nu_min, epsilon = 1e-6);
    assert_eq!(rep.r_star, 0);

    assert!(matches!(
        nh_check(&sys, &sys.sample_trapped(1, 1), 0, 10.0, &IntegratorConfig::default()),
        Err(Error::InvalidParameter(_))
    ));
}

#[test]
fn packing_extremes() {
    let sys = make_cat_suspension();
    let samples = sys.sample_trapped(200, 9);
    let orbits = sampled_orbits(&sys, &samples, 3.0, 1.0, &IntegratorConfig::default());
    let refs: Vec<&[Vec<f64>]> = orbits.iter().map(Vec::as_slice).collect();
    assert_eq!(greedy_separated_set(&sys, &refs, 100.0), vec![0]);
    assert_eq!(greedy_separated_set(&sys, &refs, 1e-12).len(), 200);
}

#[test]
fn packing_matches_brute_force() {
    let cfg = IntegratorConfig::default();
    let cat = make_cat_suspension();
    let orbits = sampled_orbits(&cat, &cat.sample_trapped(600, 5), 3.0, 1.0, &cfg);
    let refs: Vec<&[Vec<f64>]> = orbits.iter().map(Vec::as_slice).collect();
    for eps in [0.3, 0.1, 0.05] {
        assert_eq!(greedy_separated_set(&cat, &refs, eps), brute_force_greedy(&cat, &orbits, eps));
    }
    let kerr = kerr09();
    let orbits = sampled_orbits(&kerr, &kerr.sample_trapped(120, 5), 5.0, 0.5, &trapped_config());
    let refs: Vec<&[Vec<f64>]> = orbits.iter().map(Vec::as_slice).collect();
    for eps in [2.0, 0.5, 0.2] {
        assert_eq!(greedy_separated_set(&kerr, &refs, eps), brute_force_greedy(&kerr, &orbits, eps));
    }
}

#[test]
fn packing_is_separated_and_maximal() {
    let cat = make_cat_suspension();
    let orbits = sampled_orbits(&cat, &cat.sample_trapped(400, 6), 2.0, 1.0, &IntegratorConfig::default());
    let refs: Vec<&[Vec<f64>]> = orbits.iter().map(Vec::as_slice).collect();
    let eps = 0.15;
    let chosen = greedy_separated_set(&cat, &refs, eps);
    let sep = |i: usize, j: usize| orbits[i].iter().zip(&orbits[j]).any(|(a, b)| cat.distance(a, b) >= eps);
    for (a, &i) in chosen.iter().enumerate() {
        for &j in &chosen[a + 1..] {
            assert!(sep(i, j));
        }
    }
    for i in 0..orbits.len() {
        assert!(chosen.contains(&i) || chosen.iter().any(|&j| !sep(i, j)));
    }
}

#[test]
fn toy_packing_scales_like_inverse_area() {
    let sys = toy();
    let orbits = sampled_orbits(&sys, &sys.sample_trapped(4900, 1), 10.0, 0.5, &IntegratorConfig::default());
    let refs: Vec<&[Vec<f64>]> = orbits.iter().map(Vec::as_slice).collect();
    let counts: Vec<usize> = [0.2, 0.1, 0.05]
        .iter()
        .map(|e| greedy_separated_set(&sys, &refs, *e).len())
        .collect();
    for (k, w) in counts.windows(2).enumerate() {
        let ratio = w[1] as f64 / w[0] as f64;
        assert!((2.0..=8.0).contains(&ratio), "step {k}: {counts:?}");
    }
    for (c, e) in counts.iter().zip([0.2f64, 0.1, 0.05]) {
        let net = 1.0 / (e * e);
        assert!(*c as f64 >= 0.5 * net && *c as f64 <= 2.0 * net, "{counts:?}");
    }
}

#[test]
fn toy_separated_pressure() {
    let inp = toy_inputs();
    for s in [0.0, 0.5, 1.0, 2.0] {
        let est = inp.estimate(s);
        assert!((est.p_hat + 0.5 * s).abs() <= 0.05f64.max(0.05 * s), "s={s}: {}", est.p_hat);
    }
    assert!(!inp.estimate(1.0).coverage_warning);
}

#[test]
fn schwarzschild_separated_pressure() {
    let est = schwarzschild_inputs().estimate(0.5);
    let want = -0.5 / 3f64.sqrt();
    assert!((est.p_hat - want).abs() < 0.1 * want.abs(), "{}", est.p_hat);
    assert_eq!(est.samples_escaped, 0);
}

#[test]
fn cat_counts_grow_with_entropy() {
    let est = cat_inputs().estimate(0.0);
    for row in &est.counts {
        assert!(row.windows(2).all(|w| w[1] > w[0]), "{:?}", est.counts);
    }
    let slope = est.slope_fits[0].slope;
    assert!(slope > 0.5 * cat_entropy() && slope < 1.2 * cat_entropy(), "{slope}");
}

#[test]
fn coverage_warning_for_thin_samples() {
    let sys = toy();
    let samples = sys.sample_trapped(100, 1);
    let est = pressure_separated(&sys, 1.0, &EPS, &TS, &samples, 0.5, &IntegratorConfig::default()).unwrap();
    assert!(est.coverage_warning);
}

#[test]
fn variational_pressure() {
    let sys = toy();
    let cfg = IntegratorConfig::default();
    let samples = sys.sample_trapped(16, 1);
    let nh = nh_check(&sys, &samples, 10, 20.0, &cfg).unwrap();
    let v = pressure_variational(&sys, 2.0, &samples, 20.0, &nh, &cfg).unwrap();
    assert_abs_diff_eq!(v.value, -1.0, epsilon = 1e-9);
    let from_inputs = toy_inputs().variational(2.0, &nh).unwrap();
    assert_abs_diff_eq!(from_inputs.value, -1.0, epsilon = 1e-9);

    let schw = schwarzschild();
    let samples = schw.sample_trapped(12, 2);
    let nh = nh_check(&schw, &samples[..3], 10, 200.0, &trapped_config()).unwrap();
    let v = pressure_variational(&schw, 0.5, &samples, 60.0, &nh, &trapped_config()).unwrap();
    assert!((v.value + 0.5 / 3f64.sqrt()).abs() < 1e-3, "{}", v.value);
}

#[test]
fn variational_refuses_hyperbolic_fixture() {
    let cat = make_cat_suspension();
    let cfg = IntegratorConfig::default();
    let samples = cat.sample_trapped(4, 1);
    let nh = nh_check(&cat, &samples, 10, 10.0, &cfg).unwrap();
    assert!(matches!(
        pressure_variational(&cat, 0.5, &samples, 10.0, &nh, &cfg),
        Err(Error::NotNormallyHyperbolic { r_star: 0, .. })
    ));
}

#[test]
fn estimators_agree_on_schwarzschild() {
    let schw = schwarzschild();
    let inp = schwarzschild_inputs();
    let samples = schw.sample_trapped(6, 2);
    let nh = nh_check(&schw, &samples[..2], 10, 200.0, &trapped_config()).unwrap();
    let var = inp.variational(0.5, &nh).unwrap();
    let sep = inp.estimate(0.5);
    assert!((sep.p_hat - var.value).abs() <= agreement_tolerance(&sep, var.value));
}

#[test]
fn reusing_inputs_matches_fresh_estimate() {
    let sys = toy();
    let samples = sys.sample_trapped(400, 1);
    let fresh = pressure_separated(&sys, 0.7, &EPS, &TS, &samples, 0.5, &IntegratorConfig::default()).unwrap();
    assert_eq!(fresh, toy_inputs().estimate(0.7));
}

#[test]
fn deterministic_across_thread_counts() {
    let sys = kerr09();
    let samples = sys.sample_trapped(24, 7);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                let inp = prepare_pressure(&sys, &samples, &[0.5, 0.2], &[2.0, 4.0], 0.5, &trapped_config()).unwrap();
                serde_json::to_string(&inp.estimate(0.5)).unwrap()
            })
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn metric_scaling_keeps_estimate() {
    let sys = toy();
    let samples = sys.sample_trapped(400, 1);
    let cfg = IntegratorConfig::default();
    let base = toy_inputs().estimate(1.0);
    for c in [0.5, 2.0] {
        let scaled = ScaledMetric { inner: &sys, factor: c };
        let est = pressure_separated(&scaled, 1.0, &EPS, &TS, &samples, 0.5, &cfg).unwrap();
        let tol = 3.0 * (base.stderr + est.stderr) + base.extrapolation.residual_rms + 1e-9;
        assert!((est.p_hat - base.p_hat).abs() <= tol);
    }
}

#[test]
fn estimate_csv() {
    let est = toy_inputs().estimate(1.0);
    let mut buf = Vec::new();
    est.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "s,eps,T,count,log_z,slope,p_hat");
    assert_eq!(lines.len(), 1 + EPS.len() * TS.len());
}

#[test]
fn invalid_pressure_inputs() {
    let sys = toy();
    let samples = sys.sample_trapped(4, 1);
    let cfg = IntegratorConfig::default();
    let bad = |eps: &[f64], ts: &[f64], h: f64, s: &[Vec<f64>]| prepare_pressure(&sys, s, eps, ts, h, &cfg).is_err();
    assert!(bad(&[], &TS, 0.5, &samples));
    assert!(bad(&EPS, &[20.0, 10.0], 0.5, &samples));
    assert!(bad(&[0.1, 0.2, 0.1], &TS, 0.5, &samples));
    assert!(bad(&EPS, &[1.0, 1.3], 0.5, &samples));
    assert!(bad(&EPS, &TS, 0.0, &samples));
    assert!(bad(&EPS, &TS, 0.5, &[]));
}

#[test]
fn escaped_samples_are_dropped() {
    let sys = toy();
    let mut samples = sys.sample_trapped(4, 1);
    samples.push(vec![0.2, 0.0, 0.0, 0.0]);
    let inp = prepare_pressure(&sys, &samples, &[0.1], &[10.0], 0.5, &IntegratorConfig::default()).unwrap();
    let est = inp.estimate(1.0);
    assert_eq!((est.samples_used, est.samples_escaped), (4, 1));
}

#[test]
fn linear_fit_recovers_line() {
    let x = [1.0, 2.0, 4.0, 7.0];
    let y: Vec<f64> = x.iter().map(|v| 3.0 - 0.25 * v).collect();
    let f = linear_fit(&x, &y);
    assert_abs_diff_eq!(f.slope, -0.25, epsilon = 1e-12);
    assert_abs_diff_eq!(f.intercept, 3.0, epsilon = 1e-12);
    assert!(f.residual_rms < 1e-12 && f.slope_stderr < 1e-12);
}

#[test]
fn asymptotic_rate_removes_bounded_endpoint_terms() {
    let times: Vec<f64> = (0..=120).map(|k| 0.5 * k as f64).collect();
    let g: Vec<f64> = times.iter().map(|t| 0.6 * t + 0.8 * (1.3 * t).sin()).collect();
    let plain = g[120] / 60.0;
    let weighted = asymptotic_rate(&times, &g);
    assert!((plain - 0.6).abs() > 5e-3, "{plain}");
    assert!((weighted - 0.6).abs() < 1e-5, "{weighted}");
    let line: Vec<f64> = times.iter().map(|t| -0.25 * t).collect();
    assert_abs_diff_eq!(asymptotic_rate(&times, &line), -0.25, epsilon = 1e-12);
}

#[test]
fn schwarzschild_variational_over_many_samples() {
    let schw = schwarzschild();
    let inp = schwarzschild_inputs();
    let samples = schw.sample_trapped(6, 2);
    let nh = nh_check(&schw, &samples[..2], 10, 200.0, &trapped_config()).unwrap();
    let var = inp.variational(0.5, &nh).unwrap();
    assert!((var.value + 0.5 / 3f64.sqrt()).abs() < 1e-3, "{}", var.value);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weight_sum_is_bounded_below(s in 0.0f64..3.0) {
        for inp in [toy_inputs(), cat_inputs()] {
            let est = inp.estimate(s);
            for (e, row) in est.log_z.iter().enumerate() {
                for (t, lz) in row.iter().enumerate() {
                    let max_lambda = inp.packings[e][t]
                        .iter()
                        .map(|&i| inp.data[i].lambda_u[t])
                        .fold(f64::NEG_INFINITY, f64::max);
                    prop_assert!(lz.is_finite());
                    prop_assert!(*lz >= -s * max_lambda - 1e-9);
                }
            }
        }
    }

    #[test]
    fn pressure_is_monotone_in_s(s1 in 0.0f64..3.0, ds in 0.0f64..2.0) {
        for inp in [toy_inputs(), cat_inputs(), schwarzschild_inputs()] {
            prop_assert!(inp.estimate(s1).p_hat >= inp.estimate(s1 + ds).p_hat - 1e-9);
        }
    }

    #[test]
    fn log_z_is_a_reweighting(s in 0.0f64..3.0) {
        let inp = cat_inputs();
        let est = inp.estimate(s);
        for (e, row) in est.log_z.iter().enumerate() {
            for (t, lz) in row.iter().enumerate() {
                let direct: f64 = inp.packings[e][t]
                    .iter()
                    .map(|&i| (-s * inp.data[i].lambda_u[t]).exp())
                    .sum();
                prop_assert!((lz - direct.ln()).abs() < 1e-9 * lz.abs().max(1.0));
            }
        }
    }

    #[test]
    fn variational_is_linear_in_s(s in 0.0f64..4.0) {
        let sys = toy();
        let cfg = IntegratorConfig::default();
        let nh = nh_check(&sys, &sys.sample_trapped(1, 1), 10, 10.0, &cfg).unwrap();
        let inp = toy_inputs();
        let one = inp.variational(1.0, &nh).unwrap().value;
        prop_assert!((inp.variational(s, &nh).unwrap().value - s * one).abs() < 1e-12);
    }

    #[test]
    fn packing_is_permutation_deterministic(seed in any::<u64>()) {
        let cat = make_cat_suspension();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let orbits: Vec<Vec<Vec<f64>>> = (0..80)
            .map(|_| {
                let p = vec![rng.random(), rng.random(), 0.0];
                integrate_sampled(&cat, &p, 2.0, 1.0, &IntegratorConfig::default()).unwrap().states
            })
            .collect();
        let refs: Vec<&[Vec<f64>]> = orbits.iter().map(Vec::as_slice).collect();
        let a = greedy_separated_set(&cat, &refs, 0.2);
        prop_assert_eq!(&a, &greedy_separated_set(&cat, &refs, 0.2));
        prop_assert_eq!(a, brute_force_greedy(&cat, &orbits, 0.2));
    }
}
