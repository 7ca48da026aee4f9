//! Fold curves in the reference plane.
//!
//! A [`FoldCurve`] is a parametrization `σ : [0, 1] → ℝ²` of a crease. Four
//! kinds are supported: quadratic (parabolic) arcs through an apex, circular
//! arcs about a center, cubic Bézier curves and polylines. All of them expose
//! the same evaluation / derivative interface, which is what the closest-point
//! projection and the mesh snapper rely on.

use std::f64::consts::PI;

use nalgebra::Vector2;
use thiserror::Error;

use crate::mesh::quadrature::gauss_legendre;

pub type Vec2 = Vector2<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("degenerate curve: {0}")]
    DegenerateCurve(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CurveKind {
    Parabolic,
    CircularArc,
    CubicBezier,
    Polyline,
}

#[derive(Debug, Clone, PartialEq)]
enum Shape {
    /// Quadratic Bézier `p0, c, p1`.
    Quadratic([Vec2; 3]),
    Arc {
        center: Vec2,
        radius: f64,
        theta0: f64,
        sweep: f64,
        ends: [Vec2; 2],
    },
    Cubic([Vec2; 4]),
    /// Uniform parametrization: segment `i` covers `[i/n, (i+1)/n]`.
    Polyline(Vec<Vec2>),
}

/// Result of [`FoldCurve::closest_point`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub t: f64,
    pub point: Vec2,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldCurve {
    kind: CurveKind,
    control: Vec<Vec2>,
    shape: Shape,
}

const SCAN_SAMPLES: usize = 64;
const NEWTON_ITERS: usize = 20;

impl FoldCurve {
    /// Quadratic arc through `p0`, `apex` and `p1` with the apex at `t = 1/2`.
    pub fn parabolic(p0: Vec2, p1: Vec2, apex: Vec2) -> Result<Self, GeometryError> {
        let chord = p1 - p0;
        if chord.norm() == 0.0 {
            return Err(GeometryError::DegenerateCurve("parabolic arc endpoints coincide".into()));
        }
        let cross = chord.x * (apex.y - p0.y) - chord.y * (apex.x - p0.x);
        let scale = chord.norm() * (apex - p0).norm().max(chord.norm());
        if cross.abs() <= 1e-12 * scale {
            return Err(GeometryError::DegenerateCurve("apex is collinear with the endpoints".into()));
        }
        let middle = 2.0 * apex - 0.5 * (p0 + p1);
        Ok(Self {
            kind: CurveKind::Parabolic,
            control: vec![p0, apex, p1],
            shape: Shape::Quadratic([p0, middle, p1]),
        })
    }

    /// Minor circular arc from `p0` to `p1` about `center`.
    pub fn circular_arc(p0: Vec2, p1: Vec2, center: Vec2) -> Result<Self, GeometryError> {
        let r0 = (p0 - center).norm();
        let r1 = (p1 - center).norm();
        if r0 == 0.0 || (r0 - r1).abs() > 1e-9 * r0.max(r1) {
            return Err(GeometryError::DegenerateCurve(format!(
                "arc endpoints are not equidistant from the center ({r0} vs {r1})"
            )));
        }
        if (p0 - p1).norm() == 0.0 {
            return Err(GeometryError::DegenerateCurve("arc endpoints coincide".into()));
        }
        let theta0 = (p0.y - center.y).atan2(p0.x - center.x);
        let theta1 = (p1.y - center.y).atan2(p1.x - center.x);
        let mut sweep = theta1 - theta0;
        while sweep > PI {
            sweep -= 2.0 * PI;
        }
        while sweep <= -PI {
            sweep += 2.0 * PI;
        }
        Ok(Self {
            kind: CurveKind::CircularArc,
            control: vec![p0, p1, center],
            shape: Shape::Arc { center, radius: r0, theta0, sweep, ends: [p0, p1] },
        })
    }

    pub fn cubic_bezier(p0: Vec2, c1: Vec2, c2: Vec2, p3: Vec2) -> Result<Self, GeometryError> {
        if p0 == p3 {
            return Err(GeometryError::DegenerateCurve("Bézier endpoints coincide".into()));
        }
        Ok(Self {
            kind: CurveKind::CubicBezier,
            control: vec![p0, c1, c2, p3],
            shape: Shape::Cubic([p0, c1, c2, p3]),
        })
    }

    pub fn polyline(points: Vec<Vec2>) -> Result<Self, GeometryError> {
        if points.len() < 2 {
            return Err(GeometryError::DegenerateCurve("polyline needs at least two points".into()));
        }
        if points.windows(2).any(|w| w[0] == w[1]) {
            return Err(GeometryError::DegenerateCurve("polyline has a zero-length segment".into()));
        }
        Ok(Self { kind: CurveKind::Polyline, control: points.clone(), shape: Shape::Polyline(points) })
    }

    pub fn kind(&self) -> CurveKind {
        self.kind
    }

    /// Control data as given to the constructor (endpoints first/last except
    /// for circular arcs, which store `[p0, p1, center]`).
    pub fn control_points(&self) -> &[Vec2] {
        &self.control
    }

    pub fn start(&self) -> Vec2 {
        self.eval(0.0)
    }

    pub fn end(&self) -> Vec2 {
        self.eval(1.0)
    }

    /// Radius of a circular arc.
    pub fn radius(&self) -> Option<f64> {
        match &self.shape {
            Shape::Arc { radius, .. } => Some(*radius),
            _ => None,
        }
    }

    pub fn center(&self) -> Option<Vec2> {
        match &self.shape {
            Shape::Arc { center, .. } => Some(*center),
            _ => None,
        }
    }

    /// Parameters in `(0, 1)` where the tangent may jump.
    pub fn kink_parameters(&self) -> Vec<f64> {
        match &self.shape {
            Shape::Polyline(p) => {
                let n = p.len() - 1;
                (1..n).map(|i| i as f64 / n as f64).collect()
            }
            _ => Vec::new(),
        }
    }

    pub fn eval(&self, t: f64) -> Vec2 {
        match &self.shape {
            Shape::Quadratic([a, b, c]) => {
                let s = 1.0 - t;
                s * s * a + 2.0 * s * t * b + t * t * c
            }
            Shape::Arc { center, radius, theta0, sweep, ends } => {
                if t == 0.0 {
                    return ends[0];
                }
                if t == 1.0 {
                    return ends[1];
                }
                let th = theta0 + t * sweep;
                center + *radius * Vec2::new(th.cos(), th.sin())
            }
            Shape::Cubic([a, b, c, d]) => {
                let s = 1.0 - t;
                s * s * s * a + 3.0 * s * s * t * b + 3.0 * s * t * t * c + t * t * t * d
            }
            Shape::Polyline(p) => {
                let (i, u) = polyline_segment(p.len() - 1, t);
                if u == 0.0 {
                    return p[i];
                }
                if u == 1.0 {
                    return p[i + 1];
                }
                p[i] + u * (p[i + 1] - p[i])
            }
        }
    }

    pub fn deriv(&self, t: f64) -> Vec2 {
        match &self.shape {
            Shape::Quadratic([a, b, c]) => 2.0 * (1.0 - t) * (b - a) + 2.0 * t * (c - b),
            Shape::Arc { radius, theta0, sweep, .. } => {
                let th = theta0 + t * sweep;
                *radius * sweep * Vec2::new(-th.sin(), th.cos())
            }
            Shape::Cubic([a, b, c, d]) => {
                let s = 1.0 - t;
                3.0 * s * s * (b - a) + 6.0 * s * t * (c - b) + 3.0 * t * t * (d - c)
            }
            Shape::Polyline(p) => {
                let n = p.len() - 1;
                let (i, _) = polyline_segment(n, t);
                n as f64 * (p[i + 1] - p[i])
            }
        }
    }

    pub fn second_deriv(&self, t: f64) -> Vec2 {
        match &self.shape {
            Shape::Quadratic([a, b, c]) => 2.0 * (a - 2.0 * b + c),
            Shape::Arc { radius, theta0, sweep, .. } => {
                let th = theta0 + t * sweep;
                -*radius * sweep * sweep * Vec2::new(th.cos(), th.sin())
            }
            Shape::Cubic([a, b, c, d]) => {
                let s = 1.0 - t;
                6.0 * s * (c - 2.0 * b + a) + 6.0 * t * (d - 2.0 * c + b)
            }
            Shape::Polyline(_) => Vec2::zeros(),
        }
    }

    /// Closest point on the curve: a coarse scan over 64 samples followed by
    /// Newton iterations on `(σ(t) − p)·σ'(t) = 0`. Ties go to the smallest
    /// parameter.
    pub fn closest_point(&self, p: Vec2) -> Projection {
        let mut best_t = 0.0;
        let mut best_d = (self.eval(0.0) - p).norm();
        for i in 1..SCAN_SAMPLES {
            let t = i as f64 / (SCAN_SAMPLES - 1) as f64;
            let d = (self.eval(t) - p).norm();
            if d < best_d * (1.0 - 1e-12) {
                best_d = d;
                best_t = t;
            }
        }

        let mut t = best_t;
        for _ in 0..NEWTON_ITERS {
            let r = self.eval(t) - p;
            let d1 = self.deriv(t);
            let g = r.dot(&d1);
            let dg = d1.norm_squared() + r.dot(&self.second_deriv(t));
            if dg <= 0.0 {
                break;
            }
            let next = (t - g / dg).clamp(0.0, 1.0);
            let step = (next - t).abs();
            t = next;
            if step < 1e-15 {
                break;
            }
        }
        let d = (self.eval(t) - p).norm();
        if d < best_d {
            best_d = d;
            best_t = t;
        }
        Projection { t: best_t, point: self.eval(best_t), distance: best_d }
    }

    /// Arc length by composite Gauss–Legendre quadrature of `|σ'|`.
    pub fn arclength(&self) -> f64 {
        self.arclength_between(0.0, 1.0)
    }

    pub fn arclength_between(&self, t0: f64, t1: f64) -> f64 {
        let (x, w) = gauss_legendre(8);
        // Split at kinks so that each panel integrates a smooth integrand.
        let mut breaks = vec![t0];
        breaks.extend(self.kink_parameters().into_iter().filter(|&k| k > t0 && k < t1));
        breaks.push(t1);
        let panels = 64;
        let mut total = 0.0;
        for win in breaks.windows(2) {
            let (a, b) = (win[0], win[1]);
            let h = (b - a) / panels as f64;
            for k in 0..panels {
                let lo = a + k as f64 * h;
                for (xi, wi) in x.iter().zip(&w) {
                    total += wi * h * self.deriv(lo + xi * h).norm();
                }
            }
        }
        total
    }

    /// Diameter of the control polygon bounding box.
    pub fn extent(&self) -> f64 {
        let mut lo = Vec2::repeat(f64::INFINITY);
        let mut hi = Vec2::repeat(f64::NEG_INFINITY);
        for i in 0..=256 {
            let q = self.eval(i as f64 / 256.0);
            lo = lo.inf(&q);
            hi = hi.sup(&q);
        }
        (hi - lo).norm()
    }

    /// Sampling check for injectivity: no two samples whose parameters differ
    /// by more than `1e-3` coincide within `1e-12`.
    pub fn is_injective_sampled(&self, samples: usize) -> bool {
        let pts: Vec<(f64, Vec2)> = (0..=samples)
            .map(|i| {
                let t = i as f64 / samples as f64;
                (t, self.eval(t))
            })
            .collect();
        for (i, (ti, pi)) in pts.iter().enumerate() {
            for (tj, pj) in &pts[i + 1..] {
                if tj - ti > 1e-3 && (pi - pj).norm() < 1e-12 {
                    return false;
                }
            }
        }
        true
    }

    /// Polyline through `segments + 1` points of this curve, equally spaced in
    /// parameter.
    pub fn polyline_approximation(&self, segments: usize) -> Result<FoldCurve, GeometryError> {
        let segments = segments.max(1);
        let pts = (0..=segments).map(|i| self.eval(i as f64 / segments as f64)).collect();
        FoldCurve::polyline(pts)
    }
}

fn polyline_segment(n: usize, t: f64) -> (usize, f64) {
    let s = t.clamp(0.0, 1.0) * n as f64;
    let i = (s.floor() as usize).min(n - 1);
    (i, s - i as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: f64, y: f64) -> Vec2 {
        Vec2::new(x, y)
    }

    #[test]
    fn parabola_apex_at_half() {
        let c = FoldCurve::parabolic(v(0.0, 2.0), v(9.6, 2.0), v(4.8, 6.0)).unwrap();
        assert!((c.eval(0.5) - v(4.8, 6.0)).norm() < 1e-14);
        assert_eq!(c.eval(0.0), v(0.0, 2.0));
        assert_eq!(c.eval(1.0), v(9.6, 2.0));
    }

    #[test]
    fn parabola_rejects_collinear_apex() {
        let err = FoldCurve::parabolic(v(0.0, 0.0), v(2.0, 0.0), v(1.0, 0.0)).unwrap_err();
        assert!(matches!(err, GeometryError::DegenerateCurve(_)));
    }

    #[test]
    fn circle_radius_and_quarter() {
        let c = FoldCurve::circular_arc(v(0.0, 2.0), v(9.6, 2.0), v(4.8, -2.0)).unwrap();
        let r = c.radius().unwrap();
        assert!((r * r - 39.04).abs() < 1e-12);
        let q = FoldCurve::circular_arc(v(1.0, 0.0), v(0.0, 1.0), v(0.0, 0.0)).unwrap();
        let h = 0.5f64.sqrt();
        assert!((q.eval(0.5) - v(h, h)).norm() < 1e-15);
    }

    #[test]
    fn circle_rejects_unequal_radii() {
        assert!(FoldCurve::circular_arc(v(1.0, 0.0), v(0.0, 2.0), v(0.0, 0.0)).is_err());
    }

    #[test]
    fn arc_stays_on_circle() {
        let c = FoldCurve::circular_arc(v(0.0, 2.0), v(9.6, 2.0), v(4.8, -2.0)).unwrap();
        let r = c.radius().unwrap();
        for i in 0..=100 {
            let q = c.eval(i as f64 / 100.0);
            assert!(((q - v(4.8, -2.0)).norm() - r).abs() / r < 1e-12);
        }
        // minor arc passes above the chord
        assert!(c.eval(0.5).y > 2.0);
    }

    #[test]
    fn bezier_rejects_closed() {
        assert!(FoldCurve::cubic_bezier(v(1.0, 1.0), v(2.0, 0.0), v(0.0, 3.0), v(1.0, 1.0)).is_err());
    }

    #[test]
    fn collinear_bezier_is_segment() {
        let c = FoldCurve::cubic_bezier(v(0.0, 0.0), v(1.0, 1.0), v(2.5, 2.5), v(3.0, 3.0)).unwrap();
        for i in 0..=50 {
            let q = c.eval(i as f64 / 50.0);
            assert!((q.x - q.y).abs() < 1e-12);
        }
    }

    #[test]
    fn projection_of_center_is_first_sample() {
        let c = FoldCurve::circular_arc(v(0.0, 2.0), v(9.6, 2.0), v(4.8, -2.0)).unwrap();
        let p = c.closest_point(v(4.8, -2.0));
        assert!((p.distance - c.radius().unwrap()).abs() < 1e-12);
        assert_eq!(p.t, 0.0);
    }

    #[test]
    fn projection_of_curve_point_is_exact() {
        let c = FoldCurve::cubic_bezier(v(0.0, 0.0), v(1.0, 2.0), v(3.0, -1.0), v(4.0, 1.0)).unwrap();
        let p = c.closest_point(c.eval(0.37));
        assert!(p.distance < 1e-10);
        assert!((p.t - 0.37).abs() < 1e-8);
    }

    #[test]
    fn polyline_kinks_and_ends() {
        let c = FoldCurve::polyline(vec![v(0.0, 0.0), v(1.0, 1.0), v(2.0, 0.0)]).unwrap();
        assert_eq!(c.kink_parameters(), vec![0.5]);
        assert_eq!(c.eval(0.5), v(1.0, 1.0));
        assert_eq!(c.end(), v(2.0, 0.0));
        assert!((c.arclength() - 2.0 * 2f64.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn curves_are_injective() {
        let c = FoldCurve::parabolic(v(0.0, 2.0), v(9.6, 2.0), v(4.8, 6.0)).unwrap();
        assert!(c.is_injective_sampled(500));
    }
}
