//! Gauss-Legendre edge rules and collapsed (Duffy) Gauss rules on the
//! reference triangle `{(x, y) : x, y >= 0, x + y <= 1}`.

use crate::error::{Error, Result};

/// Highest polynomial degree for which rules are generated.
pub const MAX_QUADRATURE_DEGREE: usize = 30;

/// A quadrature rule on a reference element.
///
/// Triangle rules store reference coordinates `(x, y)`; the barycentric
/// triple of a point is `(1 - x - y, x, y)`. Edge rules store the
/// parameter `s` in `[0, 1]` in the first slot and `0.0` in the second.
/// Weights sum to the reference measure (1/2 for the triangle, 1 for the edge).
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub degree: usize,
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Applies the rule to `f` evaluated at the reference points.
    pub fn integrate(&self, mut f: impl FnMut([f64; 2]) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(&p, &w)| w * f(p))
            .sum()
    }
}

fn check_degree(degree: usize) -> Result<()> {
    if degree == 0 || degree > MAX_QUADRATURE_DEGREE {
        return Err(Error::UnsupportedQuadrature {
            degree,
            max: MAX_QUADRATURE_DEGREE,
        });
    }
    Ok(())
}

/// Gauss-Legendre nodes and weights on `[0, 1]` with `m` points.
pub fn gauss_legendre_unit(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    for i in 0..m.div_ceil(2) {
        // Chebyshev-like initial guess for the i-th root on [-1, 1].
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(m, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(m, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = 0.5 * (1.0 - x);
        nodes[m - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[m - 1 - i] = 0.5 * w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(m: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if m == 0 {
        return (1.0, 0.0);
    }
    for j in 2..=m {
        let jf = j as f64;
        let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
        p0 = p1;
        p1 = p2;
    }
    let d = m as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Rule on `[0, 1]` exact for polynomials of degree `degree`.
pub fn edge_quadrature(degree: usize) -> Result<QuadratureRule> {
    check_degree(degree)?;
    let m = (degree + 2) / 2;
    let (nodes, weights) = gauss_legendre_unit(m);
    Ok(QuadratureRule {
        degree,
        points: nodes.into_iter().map(|s| [s, 0.0]).collect(),
        weights,
    })
}

/// Rule on the reference triangle exact for polynomials of total degree `degree`.
///
/// Tensor Gauss rule on the unit square collapsed by `x = u (1 - v), y = v`;
/// the Jacobian `1 - v` raises the degree in `v` by one.
pub fn triangle_quadrature(degree: usize) -> Result<QuadratureRule> {
    check_degree(degree)?;
    let mu = (degree + 2) / 2;
    let mv = (degree + 3) / 2;
    let (un, uw) = gauss_legendre_unit(mu);
    let (vn, vw) = gauss_legendre_unit(mv);
    let mut points = Vec::with_capacity(mu * mv);
    let mut weights = Vec::with_capacity(mu * mv);
    for (&v, &wv) in vn.iter().zip(&vw) {
        for (&u, &wu) in un.iter().zip(&uw) {
            points.push([u * (1.0 - v), v]);
            weights.push(wu * wv * (1.0 - v));
        }
    }
    Ok(QuadratureRule {
        degree,
        points,
        weights,
    })
}
