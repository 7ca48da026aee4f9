use crate::geometry::Vec2;

use super::{FoldMesh, MeshError};

/// Structured crisscross triangulation of `(0, width) × (0, height)`: each
/// grid cell is split into four triangles through its center.
pub fn build_rect_mesh(width: f64, height: f64, target_h: f64) -> Result<FoldMesh, MeshError> {
    if !(width > 0.0 && height > 0.0 && target_h > 0.0) {
        return Err(MeshError::MeshResolution(format!(
            "rectangle {width} x {height} with mesh size {target_h} is not valid"
        )));
    }
    if target_h >= width.min(height) {
        return Err(MeshError::MeshResolution(format!(
            "mesh size {target_h} must be smaller than min({width}, {height})"
        )));
    }
    let nx = (width / target_h - 1e-9).ceil() as usize;
    let ny = (height / target_h - 1e-9).ceil() as usize;
    let (dx, dy) = (width / nx as f64, height / ny as f64);

    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1) + nx * ny);
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push(Vec2::new(i as f64 * dx, j as f64 * dy));
        }
    }
    let grid = |i: usize, j: usize| j * (nx + 1) + i;
    let mut triangles = Vec::with_capacity(4 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let c = vertices.len();
            vertices.push(Vec2::new((i as f64 + 0.5) * dx, (j as f64 + 0.5) * dy));
            let (a, b, d, e) = (grid(i, j), grid(i + 1, j), grid(i + 1, j + 1), grid(i, j + 1));
            triangles.extend([[a, b, c], [b, d, c], [d, e, c], [e, a, c]]);
        }
    }
    FoldMesh::from_linear(vertices, &triangles, &[])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::EdgeTag;

    #[test]
    fn unit_square_count() {
        let m = build_rect_mesh(1.0, 1.0, 0.5).unwrap();
        assert_eq!(m.n_elements(), 16);
        assert!((m.area() - 1.0).abs() < 1e-12);
        assert!(m.edges().iter().all(|e| e.tag != EdgeTag::Fold));
    }

    #[test]
    fn too_coarse_is_rejected() {
        assert!(matches!(build_rect_mesh(1.0, 2.0, 1.0), Err(MeshError::MeshResolution(_))));
    }

    #[test]
    fn straight_edge_sizes_are_chords() {
        let m = build_rect_mesh(2.0, 1.0, 0.3).unwrap();
        for (e, edge) in m.edges().iter().enumerate() {
            assert!((edge.h - m.edge_length(e)).abs() < 1e-14);
        }
    }
}
