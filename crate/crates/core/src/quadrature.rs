//! Gauss rules on the interval, triangle and tetrahedron.
//!
//! Simplex rules are conical (collapsed-coordinate) products of Gauss-Legendre
//! rules, so any polynomial degree can be requested. Points are stored in
//! barycentric coordinates and weights are normalized to sum to one; the
//! integral over an element is `measure * sum(w * f)`.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // Chebyshev guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                let (_, d) = legendre_with_derivative(n, x);
                dp = d;
                break;
            }
        }
        nodes[i] = 0.5 * (1.0 - x);
        weights[i] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    // Sort ascending for reproducible ordering.
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| nodes[a].total_cmp(&nodes[b]));
    (
        idx.iter().map(|&i| nodes[i]).collect(),
        idx.iter().map(|&i| weights[i]).collect(),
    )
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { p0 } else { p1 };
    let prev = if n == 0 { 0.0 } else { p0 };
    let d = n as f64 * (x * p - prev) / (x * x - 1.0);
    (p, d)
}

/// A rule on a simplex in barycentric coordinates.
#[derive(Debug, Clone)]
pub struct SimplexRule<const N: usize> {
    pub degree: usize,
    pub points: Vec<[f64; N]>,
    pub weights: Vec<f64>,
}

pub type TetRule = SimplexRule<4>;
pub type TriRule = SimplexRule<3>;

fn points_for(degree: usize, extra: usize) -> usize {
    (degree + extra + 2) / 2
}

/// Conical product rule on the reference tetrahedron, exact for polynomials
/// of total degree `degree`.
pub fn tet_rule(degree: usize) -> TetRule {
    let (xa, wa) = gauss_legendre(points_for(degree, 0));
    let (xb, wb) = gauss_legendre(points_for(degree, 1));
    let (xc, wc) = gauss_legendre(points_for(degree, 2));
    let mut points = Vec::with_capacity(xa.len() * xb.len() * xc.len());
    let mut weights = Vec::with_capacity(points.capacity());
    for (c, wcc) in xc.iter().zip(&wc) {
        for (b, wbb) in xb.iter().zip(&wb) {
            for (a, waa) in xa.iter().zip(&wa) {
                let z = *c;
                let y = b * (1.0 - c);
                let x = a * (1.0 - b) * (1.0 - c);
                points.push([1.0 - x - y - z, x, y, z]);
                // Jacobian (1-b)(1-c)^2, reference volume 1/6.
                weights.push(6.0 * waa * wbb * wcc * (1.0 - b) * (1.0 - c) * (1.0 - c));
            }
        }
    }
    TetRule { degree, points, weights }
}

/// Conical product rule on the reference triangle.
pub fn tri_rule(degree: usize) -> TriRule {
    let (xa, wa) = gauss_legendre(points_for(degree, 0));
    let (xb, wb) = gauss_legendre(points_for(degree, 1));
    let mut points = Vec::with_capacity(xa.len() * xb.len());
    let mut weights = Vec::with_capacity(points.capacity());
    for (b, wbb) in xb.iter().zip(&wb) {
        for (a, waa) in xa.iter().zip(&wa) {
            let y = *b;
            let x = a * (1.0 - b);
            points.push([1.0 - x - y, x, y]);
            weights.push(2.0 * waa * wbb * (1.0 - b));
        }
    }
    TriRule { degree, points, weights }
}

/// Cached tetrahedral rules, shared across assembly routines.
pub fn cached_tet_rule(degree: usize) -> &'static TetRule {
    static CACHE: OnceLock<Mutex<HashMap<usize, &'static TetRule>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("quadrature cache poisoned");
    guard
        .entry(degree)
        .or_insert_with(|| Box::leak(Box::new(tet_rule(degree))))
}

pub fn cached_tri_rule(degree: usize) -> &'static TriRule {
    static CACHE: OnceLock<Mutex<HashMap<usize, &'static TriRule>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("quadrature cache poisoned");
    guard
        .entry(degree)
        .or_insert_with(|| Box::leak(Box::new(tri_rule(degree))))
}
