//! Discrete bending energy
//!
//! ```text
//! Ẽ_K(Y) = 1/24 ∫ |H̃(Y)|² + γ₀/2 Σ_e ∫_e h⁻³ |⟦Y⟧|² + γ₁/2 Σ_{e ∉ Σ̃} ∫_e h⁻¹ |⟦∇̃Y⟧|²
//!        + γ₂/2 Σ_i h_i⁻² |Y(x_i) − g_i|²
//! ```
//!
//! together with its exact quadratic representation `½ uᵀ(A ⊗ I₃)u − bᵀu + c`
//! and the isometry defect functionals.

use nalgebra::{Matrix2, Matrix3x2};
use thiserror::Error;

use crate::dgspace::{DgField, DgSpace, COMPONENTS, DEFAULT_QUAD_ORDER};
use crate::hessian::{jump_integrals, HessianError, HessianField, HessianOperator};
use crate::mesh::element::NODES;
use crate::mesh::{DirichletPoint, EdgeTag};
use crate::sparse::{CsrMatrix, TripletBuilder};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnergyError {
    #[error("invalid energy parameter: {0}")]
    InvalidParams(String),
    #[error("Dirichlet vertex {0} belongs to no element")]
    DetachedVertex(usize),
    #[error(transparent)]
    Hessian(#[from] HessianError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyParams {
    pub gamma0: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub quad_order: usize,
}

impl Default for EnergyParams {
    fn default() -> Self {
        Self { gamma0: 1.0, gamma1: 1.0, gamma2: 1.0, quad_order: DEFAULT_QUAD_ORDER }
    }
}

impl EnergyParams {
    pub fn validate(&self) -> Result<(), EnergyError> {
        for (name, v) in [("gamma0", self.gamma0), ("gamma1", self.gamma1), ("gamma2", self.gamma2)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(EnergyError::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyBreakdown {
    pub bending: f64,
    pub jump0: f64,
    pub jump1: f64,
    pub dirichlet: f64,
    pub total: f64,
}

/// Pointwise constraint in scalar-DOF form: node `dof = 6 t + a` of the
/// lowest-index element containing the vertex.
#[derive(Debug, Clone)]
struct PinnedDof {
    dof: usize,
    point: DirichletPoint,
}

/// Energy of a fixed mesh, parameter set and boundary data, with its
/// assembled quadratic form.
#[derive(Debug, Clone)]
pub struct EnergyModel<'a> {
    space: &'a DgSpace,
    params: EnergyParams,
    hessian: HessianOperator,
    pins: Vec<PinnedDof>,
    a: CsrMatrix,
    b: Vec<f64>,
    c: f64,
}

impl<'a> EnergyModel<'a> {
    pub fn new(space: &'a DgSpace, params: EnergyParams, bc: &[DirichletPoint]) -> Result<Self, EnergyError> {
        params.validate()?;
        let hessian = HessianOperator::new(space)?;
        let pins = bc
            .iter()
            .map(|p| {
                let (t, a) = space.mesh().first_element_of_vertex(p.vertex).ok_or(EnergyError::DetachedVertex(p.vertex))?;
                Ok(PinnedDof { dof: t * NODES + a, point: p.clone() })
            })
            .collect::<Result<Vec<_>, EnergyError>>()?;
        let mut model = Self { space, params, hessian, pins, a: CsrMatrix::zeros(0, 0), b: Vec::new(), c: 0.0 };
        model.assemble();
        Ok(model)
    }

    /// Uses the Dirichlet points stored on the mesh.
    pub fn from_mesh(space: &'a DgSpace, params: EnergyParams) -> Result<Self, EnergyError> {
        Self::new(space, params, space.mesh().dirichlet())
    }

    fn assemble(&mut self) {
        let sp = self.space;
        let mesh = sp.mesh();
        let n = sp.n_scalar_dofs();
        let mut trip = TripletBuilder::new(n, n);

        for t in 0..mesh.n_elements() {
            let gram = self.hessian.local_gram(sp, t);
            let idx: Vec<usize> =
                self.hessian.block(t).patch.iter().flat_map(|&p| (0..NODES).map(move |a| p * NODES + a)).collect();
            let vals: Vec<f64> = (0..idx.len() * idx.len()).map(|k| gram[(k / idx.len(), k % idx.len())] / 12.0).collect();
            trip.push_block(&idx, &idx, &vals);
        }

        let (g0, g1) = (self.params.gamma0, self.params.gamma1);
        for (e, edge) in mesh.edges().iter().enumerate() {
            let Some(right) = edge.right else { continue };
            let idx: Vec<usize> = (0..NODES)
                .map(|a| edge.left.element * NODES + a)
                .chain((0..NODES).map(|a| right.element * NODES + a))
                .collect();
            let mut local = vec![0.0; 4 * NODES * NODES];
            let mut rank_one = |w: f64, v: &[f64]| {
                for (i, vi) in v.iter().enumerate() {
                    for (j, vj) in v.iter().enumerate() {
                        local[i * 2 * NODES + j] += w * vi * vj;
                    }
                }
            };
            for p in sp.edge_points(e) {
                let rb = p.right.as_ref().expect("interior edge");
                let jump: Vec<f64> = p.left.values.iter().copied().chain(rb.values.iter().map(|v| -v)).collect();
                rank_one(g0 * p.ds / edge.h.powi(3), &jump);
                if edge.tag != EdgeTag::Fold {
                    for i in 0..2 {
                        let gj: Vec<f64> =
                            p.left.grads.iter().map(|g| g[i]).chain(rb.grads.iter().map(|g| -g[i])).collect();
                        rank_one(g1 * p.ds / edge.h, &gj);
                    }
                }
            }
            trip.push_block(&idx, &idx, &local);
        }

        let mut b = vec![0.0; n * COMPONENTS];
        let mut c = 0.0;
        for pin in &self.pins {
            let w = self.params.gamma2 / pin.point.h.powi(2);
            trip.push(pin.dof, pin.dof, w);
            for k in 0..COMPONENTS {
                b[pin.dof * COMPONENTS + k] += w * pin.point.target[k];
            }
            c += 0.5 * w * pin.point.target.norm_squared();
        }
        self.a = trip.build();
        self.b = b;
        self.c = c;
    }

    pub fn space(&self) -> &'a DgSpace {
        self.space
    }

    pub fn params(&self) -> &EnergyParams {
        &self.params
    }

    pub fn hessian(&self) -> &HessianOperator {
        &self.hessian
    }

    /// Scalar matrix `A`; the energy acts through `A ⊗ I₃`.
    pub fn matrix(&self) -> &CsrMatrix {
        &self.a
    }

    pub fn rhs(&self) -> &[f64] {
        &self.b
    }

    pub fn constant(&self) -> f64 {
        self.c
    }

    /// `½ uᵀ(A ⊗ I₃)u − bᵀu + c`.
    pub fn quadratic_value(&self, field: &DgField) -> f64 {
        let u = field.as_slice();
        0.5 * self.a.quad_form3(u) - self.b.iter().zip(u).map(|(b, u)| b * u).sum::<f64>() + self.c
    }

    /// `(A ⊗ I₃)u − b`, the first variation of the energy.
    pub fn gradient(&self, field: &DgField) -> DgField {
        let mut g = self.a.mul_vec3(field.as_slice());
        g.iter_mut().zip(&self.b).for_each(|(g, b)| *g -= b);
        DgField::from_vec(g)
    }

    /// Direct quadrature evaluation of every term.
    pub fn energy(&self, field: &DgField) -> EnergyBreakdown {
        let h = self.hessian.apply(field);
        let bending = h.l2_norm_squared(self.space) / 24.0;
        let (j0, j1) = jump_integrals(self.space, field);
        let dirichlet: f64 = self
            .pins
            .iter()
            .map(|pin| {
                let y = field.node(pin.dof / NODES, pin.dof % NODES);
                0.5 * self.params.gamma2 * (y - pin.point.target).norm_squared() / pin.point.h.powi(2)
            })
            .sum();
        let jump0 = 0.5 * self.params.gamma0 * j0;
        let jump1 = 0.5 * self.params.gamma1 * j1;
        EnergyBreakdown { bending, jump0, jump1, dirichlet, total: bending + jump0 + jump1 + dirichlet }
    }

    pub fn discrete_hessian(&self, field: &DgField) -> HessianField {
        self.hessian.apply(field)
    }

    /// Quadrature average of `|H̃(Y)|` over each element.
    pub fn elementwise_curvature(&self, field: &DgField) -> Vec<f64> {
        let h = self.hessian.apply(field);
        (0..self.space.n_elements())
            .map(|t| {
                let qps = self.space.quad_points(t);
                let integral: f64 = qps
                    .iter()
                    .map(|qp| {
                        let sq: f64 = (0..COMPONENTS).map(|c| h.eval(t, c, &qp.basis).norm_squared()).sum();
                        qp.jxw * sq.sqrt()
                    })
                    .sum();
                integral / self.space.element_area(t)
            })
            .collect()
    }
}

/// Per-element integrated defects `∫_T ∇Yᵀ∇Y − I` and `Σ_T |·|_F`.
pub fn isometry_violation(space: &DgSpace, field: &DgField) -> (Vec<Matrix2<f64>>, f64) {
    let per: Vec<Matrix2<f64>> = (0..space.n_elements())
        .map(|t| {
            space
                .quad_points(t)
                .iter()
                .map(|qp| {
                    let g = space.combine(field, t, &qp.basis).1;
                    qp.jxw * (g.transpose() * g - Matrix2::identity())
                })
                .sum()
        })
        .collect();
    let total = per.iter().map(|d| d.norm()).sum();
    (per, total)
}

/// `½ ∫ |∇Yᵀ∇Y − I|²`.
pub fn isometry_defect_l2(space: &DgSpace, field: &DgField) -> f64 {
    (0..space.n_elements())
        .map(|t| {
            space
                .quad_points(t)
                .iter()
                .map(|qp| {
                    let g = space.combine(field, t, &qp.basis).1;
                    0.5 * qp.jxw * (g.transpose() * g - Matrix2::identity()).norm_squared()
                })
                .sum::<f64>()
        })
        .sum()
}

/// Coefficient gradient of [`isometry_defect_l2`]: `2 ∫ ∇Y D : ∇ψ_a e_c`.
pub fn isometry_defect_gradient(space: &DgSpace, field: &DgField) -> DgField {
    let mut out = space.zero_field();
    for t in 0..space.n_elements() {
        for qp in space.quad_points(t) {
            let g = space.combine(field, t, &qp.basis).1;
            let gd: Matrix3x2<f64> = 2.0 * qp.jxw * g * (g.transpose() * g - Matrix2::identity());
            for a in 0..NODES {
                let v = out.node(t, a) + gd * qp.basis.grads[a];
                out.set_node(t, a, v);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_rect_mesh;
    use nalgebra::Vector3;

    fn space(h: f64) -> DgSpace {
        DgSpace::new(build_rect_mesh(1.0, 1.0, h).unwrap(), DEFAULT_QUAD_ORDER).unwrap()
    }

    #[test]
    fn identity_with_matching_targets_has_zero_energy() {
        let sp = space(0.25);
        let corners: Vec<(usize, Vector3<f64>)> = [(0.0, 0.0), (1.0, 1.0)]
            .iter()
            .map(|&(x, y)| {
                let v = sp.mesh().nearest_vertex(nalgebra::Vector2::new(x, y));
                (v, Vector3::new(x, y, 0.0))
            })
            .collect();
        let mesh = sp.mesh().clone().with_dirichlet(&corners).unwrap();
        let sp = DgSpace::new(mesh, DEFAULT_QUAD_ORDER).unwrap();
        let model = EnergyModel::from_mesh(&sp, EnergyParams::default()).unwrap();
        let id = sp.interpolate(|x| Vector3::new(x.x, x.y, 0.0));
        assert!(model.energy(&id).total.abs() < 1e-12);
        assert!(model.quadratic_value(&id).abs() < 1e-12 * model.constant());
        assert!(model.gradient(&id).norm() < 1e-10);
    }

    #[test]
    fn uniform_stretch_defects() {
        let sp = space(0.25);
        let y = sp.interpolate(|x| Vector3::new(1.1 * x.x, x.y, 0.0));
        let (per, total) = isometry_violation(&sp, &y);
        assert!((total - 0.21).abs() < 1e-12);
        for (t, d) in per.iter().enumerate() {
            let area = sp.element_area(t);
            assert!((d - Matrix2::new(0.21 * area, 0.0, 0.0, 0.0)).norm() < 1e-14);
        }
        assert!((isometry_defect_l2(&sp, &y) - 0.02205).abs() < 1e-12);
        assert!((isometry_defect_l2(&sp, &sp.zero_field()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn defect_gradient_matches_finite_differences() {
        let sp = space(0.5);
        let y = sp.interpolate(|x| Vector3::new(x.x + 0.1 * x.y * x.y, x.y, 0.2 * x.x * x.y));
        let g = isometry_defect_gradient(&sp, &y);
        let dir = DgField::from_vec((0..sp.n_dofs()).map(|i| ((i * 37 % 11) as f64 - 5.0) / 5.0).collect());
        let eps = 1e-6;
        let fd = (isometry_defect_l2(&sp, &y.add_scaled(eps, &dir)) - isometry_defect_l2(&sp, &y.add_scaled(-eps, &dir)))
            / (2.0 * eps);
        assert!((fd - g.dot(&dir)).abs() < 1e-6 * (1.0 + fd.abs()));
    }

    #[test]
    fn invalid_gamma_is_rejected() {
        let p = EnergyParams { gamma1: 0.0, ..Default::default() };
        assert!(matches!(p.validate(), Err(EnergyError::InvalidParams(_))));
    }
}
