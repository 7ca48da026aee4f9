//! Six-node quadratic Lagrange triangle.
//!
//! Local numbering: corners 0, 1, 2 (counterclockwise) at reference points
//! `(0,0)`, `(1,0)`, `(0,1)`, then the midpoints of the edges opposite to
//! corners 0, 1 and 2. Local edge `i` is the edge opposite corner `i`,
//! traversed counterclockwise from corner `i+1` to corner `i+2`, with midpoint
//! node `3 + i`.

use nalgebra::{Matrix2, Vector2};

use crate::geometry::Vec2;

pub const NODES: usize = 6;

pub const REF_CORNERS: [[f64; 2]; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];

/// `(start corner, end corner, midpoint node)` of local edge `i`.
pub const fn local_edge(i: usize) -> (usize, usize, usize) {
    ((i + 1) % 3, (i + 2) % 3, 3 + i)
}

const GRAD_LAMBDA: [[f64; 2]; 3] = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];

fn lambdas(xi: [f64; 2]) -> [f64; 3] {
    [1.0 - xi[0] - xi[1], xi[0], xi[1]]
}

// midpoint node 3 + i couples barycentrics (j, k) of the opposite edge
const MID_PAIRS: [(usize, usize); 3] = [(1, 2), (2, 0), (0, 1)];

pub fn shape(xi: [f64; 2]) -> [f64; NODES] {
    let l = lambdas(xi);
    let mut n = [0.0; NODES];
    for i in 0..3 {
        n[i] = l[i] * (2.0 * l[i] - 1.0);
        let (j, k) = MID_PAIRS[i];
        n[3 + i] = 4.0 * l[j] * l[k];
    }
    n
}

/// Reference gradients `∂N_a/∂(ξ, η)`.
pub fn shape_grad(xi: [f64; 2]) -> [[f64; 2]; NODES] {
    let l = lambdas(xi);
    let mut g = [[0.0; 2]; NODES];
    for i in 0..3 {
        for d in 0..2 {
            g[i][d] = (4.0 * l[i] - 1.0) * GRAD_LAMBDA[i][d];
            let (j, k) = MID_PAIRS[i];
            g[3 + i][d] = 4.0 * (l[k] * GRAD_LAMBDA[j][d] + l[j] * GRAD_LAMBDA[k][d]);
        }
    }
    g
}

/// Reference Hessians (constant over the element).
pub fn shape_hess() -> [[[f64; 2]; 2]; NODES] {
    let mut h = [[[0.0; 2]; 2]; NODES];
    for i in 0..3 {
        let (j, k) = MID_PAIRS[i];
        for a in 0..2 {
            for b in 0..2 {
                h[i][a][b] = 4.0 * GRAD_LAMBDA[i][a] * GRAD_LAMBDA[i][b];
                h[3 + i][a][b] =
                    4.0 * (GRAD_LAMBDA[j][a] * GRAD_LAMBDA[k][b] + GRAD_LAMBDA[k][a] * GRAD_LAMBDA[j][b]);
            }
        }
    }
    h
}

/// Reference coordinates of the point at parameter `s ∈ [0, 1]` along local
/// edge `i` (in its counterclockwise direction).
pub fn edge_ref_point(i: usize, s: f64) -> [f64; 2] {
    let (a, b, _) = local_edge(i);
    let (pa, pb) = (REF_CORNERS[a], REF_CORNERS[b]);
    [(1.0 - s) * pa[0] + s * pb[0], (1.0 - s) * pa[1] + s * pb[1]]
}

/// Geometric map `F_T` evaluated at a reference point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapData {
    pub x: Vec2,
    /// Columns are `∂x/∂ξ` and `∂x/∂η`.
    pub jac: Matrix2<f64>,
    pub det: f64,
}

pub fn map_data(coords: &[Vec2; NODES], xi: [f64; 2]) -> MapData {
    let n = shape(xi);
    let g = shape_grad(xi);
    let mut x = Vec2::zeros();
    let mut jac = Matrix2::zeros();
    for a in 0..NODES {
        x += n[a] * coords[a];
        for d in 0..2 {
            jac[(0, d)] += coords[a].x * g[a][d];
            jac[(1, d)] += coords[a].y * g[a][d];
        }
    }
    MapData { x, jac, det: jac.determinant() }
}

/// Physical gradients and Hessians of the six isoparametric basis functions at
/// a reference point, via the Jacobian inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalBasis {
    pub map: MapData,
    pub values: [f64; NODES],
    pub grads: [Vector2<f64>; NODES],
    pub hessians: [Matrix2<f64>; NODES],
}

pub fn physical_basis(coords: &[Vec2; NODES], xi: [f64; 2]) -> PhysicalBasis {
    let map = map_data(coords, xi);
    let values = shape(xi);
    let rg = shape_grad(xi);
    let rh = shape_hess();
    let jinv = map.jac.try_inverse().unwrap_or_else(Matrix2::zeros);
    let jinv_t = jinv.transpose();

    // second derivatives of the map, one 2x2 reference Hessian per coordinate
    let mut map_hess = [Matrix2::zeros(), Matrix2::zeros()];
    for a in 0..NODES {
        let ha = Matrix2::new(rh[a][0][0], rh[a][0][1], rh[a][1][0], rh[a][1][1]);
        map_hess[0] += coords[a].x * ha;
        map_hess[1] += coords[a].y * ha;
    }

    let mut grads = [Vector2::zeros(); NODES];
    let mut hessians = [Matrix2::zeros(); NODES];
    for a in 0..NODES {
        let gref = Vector2::new(rg[a][0], rg[a][1]);
        let g = jinv_t * gref;
        let href = Matrix2::new(rh[a][0][0], rh[a][0][1], rh[a][1][0], rh[a][1][1]);
        // D̂²N = Jᵀ D²N J + Σ_k ∂_k N D̂²F_k
        let corrected = href - g.x * map_hess[0] - g.y * map_hess[1];
        grads[a] = g;
        hessians[a] = jinv_t * corrected * jinv;
    }
    PhysicalBasis { map, values, grads, hessians }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ref_nodes() -> [[f64; 2]; NODES] {
        [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.5, 0.5], [0.0, 0.5], [0.5, 0.0]]
    }

    #[test]
    fn kronecker_property() {
        for (b, xi) in ref_nodes().iter().enumerate() {
            let n = shape(*xi);
            for a in 0..NODES {
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((n[a] - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let xi = [0.23, 0.41];
        let g = shape_grad(xi);
        let eps = 1e-6;
        for d in 0..2 {
            let mut p = xi;
            let mut m = xi;
            p[d] += eps;
            m[d] -= eps;
            let (np, nm) = (shape(p), shape(m));
            for a in 0..NODES {
                assert!(((np[a] - nm[a]) / (2.0 * eps) - g[a][d]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn identity_map_has_unit_determinant() {
        let coords = ref_nodes().map(|p| Vec2::new(p[0], p[1]));
        let m = map_data(&coords, [1.0 / 3.0, 1.0 / 3.0]);
        assert!((m.det - 1.0).abs() < 1e-15);
    }

    #[test]
    fn curved_element_reproduces_quadratics() {
        // bend one edge; physical Hessians of the isoparametric basis must
        // reproduce f = x² exactly only for affine maps, but linear fields
        // are reproduced on any isoparametric element.
        let mut coords = ref_nodes().map(|p| Vec2::new(p[0], p[1]));
        coords[3] += Vec2::new(0.08, 0.05);
        for xi in [[0.2, 0.3], [0.6, 0.1], [0.1, 0.7]] {
            let pb = physical_basis(&coords, xi);
            let mut grad = Vector2::zeros();
            let mut hess = Matrix2::zeros();
            for a in 0..NODES {
                let f = 2.0 * coords[a].x - 3.0 * coords[a].y;
                grad += f * pb.grads[a];
                hess += f * pb.hessians[a];
            }
            assert!((grad - Vector2::new(2.0, -3.0)).norm() < 1e-13);
            assert!(hess.norm() < 1e-12);
        }
    }
}
