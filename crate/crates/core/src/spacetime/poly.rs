//! Real-root isolation for low-degree polynomials.
//!
//! Roots of the derivative split the real line into monotone pieces; each piece
//! with a sign change holds exactly one simple root, found by Newton steps kept
//! inside a shrinking bisection bracket. Multiple roots (no sign change) are not
//! reported, which is what the horizon code wants: a double root is a degenerate
//! horizon and must be rejected.

/// Evaluate a polynomial with ascending coefficients at `x` (Horner).
pub fn eval(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// Value and first derivative at `x`.
pub fn eval_with_derivative(coeffs: &[f64], x: f64) -> (f64, f64) {
    let mut p = 0.0;
    let mut dp = 0.0;
    for &c in coeffs.iter().rev() {
        dp = dp * x + p;
        p = p * x + c;
    }
    (p, dp)
}

pub fn derivative(coeffs: &[f64]) -> Vec<f64> {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, &c)| k as f64 * c)
        .collect()
}

fn trimmed(coeffs: &[f64]) -> &[f64] {
    let scale = coeffs.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
    let mut end = coeffs.len();
    while end > 0 && coeffs[end - 1].abs() <= 1e-300_f64.max(scale * 1e-15) {
        end -= 1;
    }
    &coeffs[..end]
}

/// Simple real roots of the polynomial, sorted ascending.
pub fn real_roots(coeffs: &[f64]) -> Vec<f64> {
    let c = trimmed(coeffs);
    match c.len() {
        0 | 1 => return Vec::new(),
        2 => return vec![-c[0] / c[1]],
        _ => {}
    }
    let lead = c[c.len() - 1];
    let bound = 1.0
        + c[..c.len() - 1]
            .iter()
            .fold(0.0_f64, |m, x| m.max((x / lead).abs()));

    let mut knots = vec![-bound];
    knots.extend(
        real_roots(&derivative(c))
            .into_iter()
            .filter(|x| x.abs() < bound),
    );
    knots.push(bound);

    let mut roots: Vec<f64> = Vec::new();
    for w in knots.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        // Knots are critical points (or the outer bound), so a zero sitting on a
        // knot is a multiple root and is skipped.
        if eval(c, lo) * eval(c, hi) < 0.0 {
            push_distinct(&mut roots, bracketed_root(c, lo, hi));
        }
    }
    roots
}

fn push_distinct(roots: &mut Vec<f64>, x: f64) {
    if roots
        .last()
        .map_or(true, |&r| (x - r).abs() > 1e-14 * x.abs().max(1.0))
    {
        roots.push(x);
    }
}

/// Safeguarded Newton iteration on a sign-changing bracket.
pub fn bracketed_root(coeffs: &[f64], mut lo: f64, mut hi: f64) -> f64 {
    let flo = eval(coeffs, lo);
    let increasing = flo < 0.0;
    let mut x = 0.5 * (lo + hi);
    for _ in 0..300 {
        let (f, df) = eval_with_derivative(coeffs, x);
        if f == 0.0 {
            return x;
        }
        if (f < 0.0) == increasing {
            lo = x;
        } else {
            hi = x;
        }
        if (hi - lo).abs() <= 4.0 * f64::EPSILON * x.abs().max(1e-300) {
            return x;
        }
        let newton = x - f / df;
        x = if df != 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    x
}
