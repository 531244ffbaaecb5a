//! Gauss-Legendre quadrature and closed slice integrals on the unit ball.

use std::f64::consts::PI;

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
/// Newton iteration on the Legendre recurrence; accurate to ~1e-15.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2, "need at least a two point rule");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Legendre polynomial `P_n(x)` and its derivative.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Integrate `f` over `[a, b]` with an `n`-point Gauss-Legendre rule.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    if b <= a {
        return 0.0;
    }
    let (nodes, weights) = gauss_legendre(n);
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut acc = 0.0;
    for (x, w) in nodes.iter().zip(&weights) {
        acc += w * f(mid + half * x);
    }
    acc * half
}

/// Volume of the unit ball in `R^k` (`k = 0` gives 1).
pub fn unit_ball_volume(k: usize) -> f64 {
    match k {
        0 => 1.0,
        1 => 2.0,
        _ => unit_ball_volume(k - 2) * 2.0 * PI / k as f64,
    }
}

/// Squared `L2(B^d)` norm of the ridge atom `(xi . x - t)_+` by slice
/// reduction: the cross-section at height `s` along `xi` is a `(d-1)`-ball of
/// radius `sqrt(1 - s^2)`, so
/// `||phi||^2 = v_{d-1} * int_t^1 (s - t)^2 (1 - s^2)^((d-1)/2) ds`.
///
/// The substitution `s = cos(theta)` removes the endpoint singularity of the
/// half-integer power, so Gauss-Legendre converges spectrally.
pub fn ball_atom_norm_sq(dim: usize, t: f64, points: usize) -> f64 {
    if t >= 1.0 {
        return 0.0;
    }
    let lo = t.max(-1.0);
    let d = dim as i32;
    let v = unit_ball_volume(dim - 1);
    v * integrate(
        |th| {
            let (sin, cos) = th.sin_cos();
            (cos - t) * (cos - t) * sin.powi(d)
        },
        0.0,
        lo.acos(),
        points.max(16),
    )
}

/// `d`-volume of the slab `{x in B^d : a <= xi . x <= b}`,
/// i.e. `v_{d-1} * int_a^b (1 - s^2)^((d-1)/2) ds`.
pub fn ball_slab_volume(dim: usize, a: f64, b: f64, points: usize) -> f64 {
    let lo = a.max(-1.0);
    let hi = b.min(1.0);
    if hi <= lo {
        return 0.0;
    }
    let d = dim as i32;
    unit_ball_volume(dim - 1)
        * integrate(
            |th| th.sin().powi(d),
            hi.acos(),
            lo.acos(),
            points.max(16),
        )
}
