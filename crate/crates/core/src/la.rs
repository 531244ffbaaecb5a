//! Small dense vector helpers shared across the crate.

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn scale(a: &[f64], c: f64) -> Vec<f64> {
    a.iter().map(|x| c * x).collect()
}

pub fn normalized(a: &[f64]) -> Option<Vec<f64>> {
    let n = norm(a);
    if n <= 0.0 || !n.is_finite() {
        return None;
    }
    Some(scale(a, 1.0 / n))
}

/// Counter-clockwise quarter turn in the plane.
pub fn rot90(a: [f64; 2]) -> [f64; 2] {
    [-a[1], a[0]]
}

/// An orthonormal basis of the hyperplane orthogonal to the unit vector `xi`,
/// returned as `d - 1` row vectors. Householder construction: the columns of
/// `H = I - 2 v v^T / (v^T v)` with `v = xi - sign(xi_1) e_1` are orthonormal
/// and the first column is `±xi`; the remaining ones span the complement.
pub fn orthonormal_complement(xi: &[f64]) -> Vec<Vec<f64>> {
    let d = xi.len();
    let sign = if xi[0] >= 0.0 { 1.0 } else { -1.0 };
    let mut v = xi.to_vec();
    v[0] += sign;
    let vv = dot(&v, &v);
    let mut basis = Vec::with_capacity(d - 1);
    for col in 1..d {
        let mut h = vec![0.0; d];
        h[col] = 1.0;
        let f = 2.0 * v[col] / vv;
        for (hk, vk) in h.iter_mut().zip(&v) {
            *hk -= f * vk;
        }
        basis.push(h);
    }
    basis
}
