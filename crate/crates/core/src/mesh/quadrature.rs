//! Quadrature on the reference triangle `{(ξ, η) : ξ, η ≥ 0, ξ + η ≤ 1}` and
//! on the unit interval.

use std::f64::consts::PI;

use super::MeshError;

/// Symmetric positive-weight rule on the reference triangle. Points are
/// stored in barycentric form `(λ0, λ1, λ2)`; weights sum to the reference
/// area `1/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub order: usize,
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    /// Reference coordinates `(ξ, η) = (λ1, λ2)` of point `q`.
    pub fn xi(&self, q: usize) -> [f64; 2] {
        [self.points[q][1], self.points[q][2]]
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// 1D Gauss–Legendre rule on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LineRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

// (orbit type, weight relative to unit area, parameters)
enum Orbit {
    Centroid(f64),
    /// `(1 − 2a, a, a)` and permutations.
    Three(f64, f64),
    /// `(a, b, 1 − a − b)` and permutations.
    Six(f64, f64, f64),
}

fn dunavant(order: usize) -> &'static [Orbit] {
    use Orbit::*;
    match order {
        1 => &[Centroid(1.0)],
        2 => &[Three(1.0 / 3.0, 1.0 / 6.0)],
        3 | 4 => &[
            Three(0.223381589678011, 0.445948490915965),
            Three(0.109951743655322, 0.091576213509771),
        ],
        5 => &[
            Centroid(0.225),
            Three(0.132394152788506, 0.470142064105115),
            Three(0.125939180544827, 0.101286507323456),
        ],
        6 => &[
            Three(0.116786275726379, 0.249286745170910),
            Three(0.050844906370207, 0.063089014491502),
            Six(0.082851075618374, 0.053145049844817, 0.310352451033784),
        ],
        _ => &[
            Centroid(0.144315607677787),
            Three(0.095091634267285, 0.459292588292723),
            Three(0.103217370534718, 0.170569307751760),
            Three(0.032458497623198, 0.050547228317031),
            Six(0.027230314174435, 0.008394777409958, 0.263112829634638),
        ],
    }
}

/// Symmetric Gauss rule on the reference triangle exact for polynomials of
/// total degree `order` (orders 3 and 7 use the next positive-weight rule).
pub fn ref_quadrature(order: usize) -> Result<QuadratureRule, MeshError> {
    if !(1..=8).contains(&order) {
        return Err(MeshError::Unsupported(format!("triangle quadrature of order {order}")));
    }
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for orbit in dunavant(order) {
        match *orbit {
            Orbit::Centroid(w) => {
                points.push([1.0 / 3.0; 3]);
                weights.push(w);
            }
            Orbit::Three(w, a) => {
                let b = 1.0 - 2.0 * a;
                for p in [[b, a, a], [a, b, a], [a, a, b]] {
                    points.push(p);
                    weights.push(w);
                }
            }
            Orbit::Six(w, a, b) => {
                let c = 1.0 - a - b;
                for p in [[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]] {
                    points.push(p);
                    weights.push(w);
                }
            }
        }
    }
    // Tabulated weights carry 15 digits; renormalize to the exact area.
    let sum: f64 = weights.iter().sum();
    for w in &mut weights {
        *w *= 0.5 / sum;
    }
    Ok(QuadratureRule { order, points, weights })
}

/// Gauss–Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pnm1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = 0.5 * (1.0 - z);
        w[i] = 1.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

/// Gauss–Legendre rule exact for degree `order` on `[0, 1]`.
pub fn line_quadrature(order: usize) -> LineRule {
    let (points, weights) = gauss_legendre(order / 2 + 1);
    LineRule { points, weights }
}
