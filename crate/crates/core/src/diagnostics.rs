//! Scalar summaries of deformed configurations.

use nalgebra::Vector3;

use crate::dgspace::{DgField, DgSpace};

/// Area-weighted mean unit normal of each region label.
pub fn region_normals(space: &DgSpace, field: &DgField, labels: &[usize]) -> Vec<(f64, Vector3<f64>)> {
    let n_regions = labels.iter().max().map_or(0, |m| m + 1);
    let mut out = vec![(0.0, Vector3::zeros()); n_regions];
    for t in 0..space.n_elements() {
        let slot = &mut out[labels[t]];
        for qp in space.quad_points(t) {
            let g = space.combine(field, t, &qp.basis).1;
            let n = g.column(0).cross(&g.column(1));
            let len = n.norm();
            if len > 0.0 {
                slot.1 += qp.jxw * n / len;
            }
            slot.0 += qp.jxw;
        }
    }
    out
}

/// Angle in radians between the mean normals of the two largest regions
/// separated by fold edges; 0 without a fold.
pub fn flap_angle(space: &DgSpace, field: &DgField) -> f64 {
    let labels = space.mesh().fold_regions();
    let mut regions = region_normals(space, field, &labels);
    if regions.len() < 2 {
        return 0.0;
    }
    regions.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (a, b) = (regions[0].1, regions[1].1);
    let denom = a.norm() * b.norm();
    if denom == 0.0 {
        return 0.0;
    }
    (a.dot(&b) / denom).clamp(-1.0, 1.0).acos()
}

/// Largest `|z|` over all nodal values.
pub fn max_abs_height(field: &DgField) -> f64 {
    field.as_slice().iter().skip(2).step_by(3).fold(0.0, |m, z| m.max(z.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgspace::DEFAULT_QUAD_ORDER;
    use crate::geometry::{FoldCurve, Vec2};
    use crate::mesh::{build_rect_mesh, snap_to_curve};

    fn folded_space() -> DgSpace {
        let mesh = build_rect_mesh(1.0, 1.0, 0.25).unwrap();
        let line = FoldCurve::polyline(vec![Vec2::new(0.0, 0.5), Vec2::new(1.0, 0.5)]).unwrap();
        DgSpace::new(snap_to_curve(&mesh, &line).unwrap(), DEFAULT_QUAD_ORDER).unwrap()
    }

    #[test]
    fn flat_sheet_has_no_flap_angle() {
        let sp = folded_space();
        let id = sp.interpolate(|x| Vector3::new(x.x, x.y, 0.0));
        assert!(flap_angle(&sp, &id).abs() < 1e-10);
    }

    #[test]
    fn right_angle_fold() {
        let sp = folded_space();
        let y = sp.interpolate(|x| {
            if x.y <= 0.5 {
                Vector3::new(x.x, x.y, 0.0)
            } else {
                Vector3::new(x.x, 0.5, x.y - 0.5)
            }
        });
        assert!((flap_angle(&sp, &y) - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        assert!((max_abs_height(&y) - 0.5).abs() < 1e-15);
    }
}
