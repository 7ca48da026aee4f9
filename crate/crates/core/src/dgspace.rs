//! The discontinuous space of elementwise quadratic `ℝ³`-valued functions.
//!
//! Degrees of freedom are nodal values, stored element by element:
//! index `(6 t + a) * 3 + c` holds component `c` at local node `a` of element
//! `t`. No continuity between elements is imposed by the layout.

use nalgebra::{Matrix2, Matrix3x2, SMatrix, Vector3};
use thiserror::Error;

use crate::geometry::Vec2;
use crate::mesh::element::{edge_ref_point, physical_basis, PhysicalBasis, NODES};
use crate::mesh::{line_quadrature, ref_quadrature, EdgeSide, FoldMesh, MeshError};
use crate::sparse::{CsrMatrix, TripletBuilder};

pub const COMPONENTS: usize = 3;
pub const ELEMENT_DOFS: usize = NODES * COMPONENTS;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DgError {
    #[error("edge {0} is not an interior edge")]
    NotInterior(usize),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// Coefficients of a field in `Ṽ³`.
#[derive(Debug, Clone, PartialEq)]
pub struct DgField {
    coeffs: Vec<f64>,
}

impl DgField {
    pub fn zeros(n_elements: usize) -> Self {
        Self { coeffs: vec![0.0; n_elements * ELEMENT_DOFS] }
    }

    pub fn from_vec(coeffs: Vec<f64>) -> Self {
        assert_eq!(coeffs.len() % ELEMENT_DOFS, 0, "coefficient count must be a multiple of 18");
        Self { coeffs }
    }

    pub fn n_elements(&self) -> usize {
        self.coeffs.len() / ELEMENT_DOFS
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn node(&self, t: usize, a: usize) -> Vector3<f64> {
        let i = (t * NODES + a) * COMPONENTS;
        Vector3::new(self.coeffs[i], self.coeffs[i + 1], self.coeffs[i + 2])
    }

    pub fn set_node(&mut self, t: usize, a: usize, v: Vector3<f64>) {
        let i = (t * NODES + a) * COMPONENTS;
        self.coeffs[i..i + 3].copy_from_slice(v.as_slice());
    }

    pub fn element(&self, t: usize) -> &[f64] {
        &self.coeffs[t * ELEMENT_DOFS..(t + 1) * ELEMENT_DOFS]
    }

    /// `self + s * other`.
    pub fn add_scaled(&self, s: f64, other: &DgField) -> DgField {
        DgField { coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + s * b).collect() }
    }

    pub fn scaled(&self, s: f64) -> DgField {
        DgField { coeffs: self.coeffs.iter().map(|a| s * a).collect() }
    }

    pub fn dot(&self, other: &DgField) -> f64 {
        self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Applies a linear map to every nodal value.
    pub fn map_nodes(&self, f: impl Fn(Vector3<f64>) -> Vector3<f64>) -> DgField {
        let mut out = self.clone();
        for chunk in out.coeffs.chunks_exact_mut(COMPONENTS) {
            let v = f(Vector3::new(chunk[0], chunk[1], chunk[2]));
            chunk.copy_from_slice(v.as_slice());
        }
        out
    }

    /// Scalar coefficient vector of component `c`.
    pub fn component(&self, c: usize) -> Vec<f64> {
        self.coeffs.iter().skip(c).step_by(COMPONENTS).copied().collect()
    }
}

/// Element quadrature point with physical basis data.
#[derive(Debug, Clone)]
pub struct QuadPoint {
    pub x: Vec2,
    /// Quadrature weight times Jacobian determinant.
    pub jxw: f64,
    pub basis: PhysicalBasis,
}

/// Edge quadrature point with traces of the basis on both sides.
#[derive(Debug, Clone)]
pub struct EdgePoint {
    /// Parameter along the edge, start vertex at 0.
    pub s: f64,
    pub x: Vec2,
    /// Quadrature weight times `|x'(s)|`.
    pub ds: f64,
    /// Unit normal from left (`T⁺`) into right (`T⁻`).
    pub normal: Vec2,
    pub left: PhysicalBasis,
    pub right: Option<PhysicalBasis>,
}

/// Traces of a field on an interior edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpAverage {
    pub value_jump: Vector3<f64>,
    pub grad_jump: Matrix3x2<f64>,
    pub value_avg: Vector3<f64>,
    pub grad_avg: Matrix3x2<f64>,
}

/// Mesh plus cached element and edge quadrature data.
#[derive(Debug, Clone)]
pub struct DgSpace {
    mesh: FoldMesh,
    quad_order: usize,
    elements: Vec<Vec<QuadPoint>>,
    edges: Vec<Vec<EdgePoint>>,
}

pub const DEFAULT_QUAD_ORDER: usize = 6;

impl DgSpace {
    pub fn new(mesh: FoldMesh, quad_order: usize) -> Result<Self, DgError> {
        let quad = ref_quadrature(quad_order)?;
        let line = line_quadrature(quad_order);
        let elements = (0..mesh.n_elements())
            .map(|t| {
                let coords = mesh.element_coords(t);
                (0..quad.len())
                    .map(|q| {
                        let basis = physical_basis(&coords, quad.xi(q));
                        QuadPoint { x: basis.map.x, jxw: quad.weights[q] * basis.map.det, basis }
                    })
                    .collect()
            })
            .collect();
        let side_basis = |side: EdgeSide, s: f64| {
            physical_basis(&mesh.element_coords(side.element), edge_ref_point(side.local, s))
        };
        let edges = (0..mesh.edges().len())
            .map(|e| {
                let edge = &mesh.edges()[e];
                line.points
                    .iter()
                    .zip(&line.weights)
                    .map(|(&s, &w)| EdgePoint {
                        s,
                        x: mesh.edge_point(e, s),
                        ds: w * mesh.edge_tangent(e, s).norm(),
                        normal: mesh.edge_normal(e, s),
                        left: side_basis(edge.left, s),
                        right: edge.right.map(|r| side_basis(r, 1.0 - s)),
                    })
                    .collect()
            })
            .collect();
        Ok(Self { mesh, quad_order, elements, edges })
    }

    pub fn mesh(&self) -> &FoldMesh {
        &self.mesh
    }

    pub fn quad_order(&self) -> usize {
        self.quad_order
    }

    pub fn n_elements(&self) -> usize {
        self.mesh.n_elements()
    }

    pub fn n_dofs(&self) -> usize {
        self.n_elements() * ELEMENT_DOFS
    }

    pub fn n_scalar_dofs(&self) -> usize {
        self.n_elements() * NODES
    }

    pub fn quad_points(&self, t: usize) -> &[QuadPoint] {
        &self.elements[t]
    }

    pub fn edge_points(&self, e: usize) -> &[EdgePoint] {
        &self.edges[e]
    }

    pub fn zero_field(&self) -> DgField {
        DgField::zeros(self.n_elements())
    }

    /// Nodal Lagrange interpolant of `f`.
    pub fn interpolate(&self, f: impl Fn(Vec2) -> Vector3<f64>) -> DgField {
        let mut field = self.zero_field();
        for (t, el) in self.mesh.elements().iter().enumerate() {
            for (a, &n) in el.iter().enumerate() {
                field.set_node(t, a, f(self.mesh.nodes()[n]));
            }
        }
        field
    }

    /// Value and gradient of element `t`'s polynomial for the given basis data.
    pub fn combine(&self, field: &DgField, t: usize, basis: &PhysicalBasis) -> (Vector3<f64>, Matrix3x2<f64>) {
        let mut value = Vector3::zeros();
        let mut grad = Matrix3x2::zeros();
        for a in 0..NODES {
            let y = field.node(t, a);
            value += basis.values[a] * y;
            grad += y * basis.grads[a].transpose();
        }
        (value, grad)
    }

    /// Elementwise Hessian of component `c`.
    pub fn hessian_of(&self, field: &DgField, t: usize, c: usize, basis: &PhysicalBasis) -> Matrix2<f64> {
        (0..NODES).map(|a| field.node(t, a)[c] * basis.hessians[a]).sum()
    }

    pub fn gradient_at(&self, field: &DgField, t: usize, q: usize) -> Matrix3x2<f64> {
        self.combine(field, t, &self.elements[t][q].basis).1
    }

    pub fn value_at(&self, field: &DgField, t: usize, q: usize) -> Vector3<f64> {
        self.combine(field, t, &self.elements[t][q].basis).0
    }

    /// Value and gradient of element `t` at an arbitrary reference point.
    pub fn eval_reference(&self, field: &DgField, t: usize, xi: [f64; 2]) -> (Vector3<f64>, Matrix3x2<f64>) {
        let basis = physical_basis(&self.mesh.element_coords(t), xi);
        self.combine(field, t, &basis)
    }

    /// Jumps `left − right` and averages on interior edge `e` at parameter `s`.
    pub fn eval_jump_avg(&self, field: &DgField, e: usize, s: f64) -> Result<JumpAverage, DgError> {
        let edge = &self.mesh.edges()[e];
        let right = edge.right.ok_or(DgError::NotInterior(e))?;
        let (vl, gl) = self.eval_reference(field, edge.left.element, edge_ref_point(edge.left.local, s));
        let (vr, gr) = self.eval_reference(field, right.element, edge_ref_point(right.local, 1.0 - s));
        Ok(JumpAverage {
            value_jump: vl - vr,
            grad_jump: gl - gr,
            value_avg: 0.5 * (vl + vr),
            grad_avg: 0.5 * (gl + gr),
        })
    }

    /// Per-element 6×6 scalar mass matrices.
    pub fn element_mass(&self, t: usize) -> SMatrix<f64, NODES, NODES> {
        let mut m = SMatrix::<f64, NODES, NODES>::zeros();
        for qp in &self.elements[t] {
            let v = &qp.basis.values;
            for a in 0..NODES {
                for b in 0..NODES {
                    m[(a, b)] += qp.jxw * v[a] * v[b];
                }
            }
        }
        m
    }

    /// Block-diagonal scalar L² Gram matrix (acts per component).
    pub fn assemble_l2_mass(&self) -> CsrMatrix {
        let n = self.n_scalar_dofs();
        let mut t = TripletBuilder::new(n, n);
        for el in 0..self.n_elements() {
            let m = self.element_mass(el);
            let idx: Vec<usize> = (0..NODES).map(|a| el * NODES + a).collect();
            let block: Vec<f64> = (0..NODES * NODES).map(|k| m[(k / NODES, k % NODES)]).collect();
            t.push_block(&idx, &idx, &block);
        }
        t.build()
    }

    /// `∫_T |∇̃Y|²` per element and their sum.
    pub fn elementwise_gradient_norms(&self, field: &DgField) -> (Vec<f64>, f64) {
        let per: Vec<f64> = (0..self.n_elements())
            .map(|t| {
                self.elements[t]
                    .iter()
                    .map(|qp| qp.jxw * self.combine(field, t, &qp.basis).1.norm_squared())
                    .sum()
            })
            .collect();
        let total = per.iter().sum();
        (per, total)
    }

    /// `‖Y‖²_{L²}`.
    pub fn l2_norm_squared(&self, field: &DgField) -> f64 {
        (0..self.n_elements())
            .map(|t| {
                self.elements[t]
                    .iter()
                    .map(|qp| qp.jxw * self.combine(field, t, &qp.basis).0.norm_squared())
                    .sum::<f64>()
            })
            .sum()
    }

    /// Area of element `t`.
    pub fn element_area(&self, t: usize) -> f64 {
        self.elements[t].iter().map(|qp| qp.jxw).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_rect_mesh;

    fn space(h: f64) -> DgSpace {
        DgSpace::new(build_rect_mesh(1.0, 1.0, h).unwrap(), DEFAULT_QUAD_ORDER).unwrap()
    }

    #[test]
    fn identity_gradient_everywhere() {
        let sp = space(0.25);
        let y = sp.interpolate(|x| Vector3::new(x.x, x.y, 0.0));
        let id = Matrix3x2::new(1.0, 0.0, 0.0, 1.0, 0.0, 0.0);
        for t in 0..sp.n_elements() {
            for q in 0..sp.quad_points(t).len() {
                assert!((sp.gradient_at(&y, t, q) - id).norm() < 1e-13);
            }
        }
        let (_, total) = sp.elementwise_gradient_norms(&y);
        assert!((total - 2.0).abs() < 1e-10);
    }

    #[test]
    fn quadratic_has_no_jumps() {
        let sp = space(0.25);
        let y = sp.interpolate(|x| Vector3::new(x.x * x.x - x.y, x.x * x.y, 3.0 * x.y * x.y + x.x));
        for e in 0..sp.mesh().edges().len() {
            if let Ok(j) = sp.eval_jump_avg(&y, e, 0.3) {
                assert!(j.value_jump.norm() < 1e-12);
                assert!(j.grad_jump.norm() < 1e-12);
            }
        }
    }

    #[test]
    fn boundary_edge_has_no_jump() {
        let sp = space(0.5);
        let e = sp.mesh().edges().iter().position(|e| !e.is_interior()).unwrap();
        assert_eq!(sp.eval_jump_avg(&sp.zero_field(), e, 0.5), Err(DgError::NotInterior(e)));
    }

    #[test]
    fn indicator_jump_sign() {
        let sp = space(0.5);
        let e = sp.mesh().edges().iter().position(|e| e.is_interior()).unwrap();
        let left = sp.mesh().edges()[e].left.element;
        let mut y = sp.zero_field();
        for a in 0..NODES {
            y.set_node(left, a, Vector3::new(1.0, 1.0, 1.0));
        }
        let j = sp.eval_jump_avg(&y, e, 0.7).unwrap();
        assert!((j.value_jump - Vector3::new(1.0, 1.0, 1.0)).norm() < 1e-14);
        assert!((j.value_avg - Vector3::repeat(0.5)).norm() < 1e-14);
    }

    #[test]
    fn constant_field_mass() {
        let sp = space(0.25);
        let m = sp.assemble_l2_mass();
        let one = vec![1.0; sp.n_dofs()];
        assert!((m.quad_form3(&one) - 3.0).abs() < 1e-10);
        assert!(m.asymmetry() < 1e-16);
    }

    #[test]
    fn constant_field_has_zero_gradient() {
        let sp = space(0.5);
        let y = sp.interpolate(|_| Vector3::new(1.0, -2.0, 0.5));
        assert!(sp.elementwise_gradient_norms(&y).1 < 1e-24);
    }
}
