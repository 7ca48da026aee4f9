//! Reconstructed Hessian `H̃(V) = D̃²V + S_E(V) − R_E(∇̃V)`.
//!
//! For an interior edge `e = T⁺ ∩ T⁻` with normal `μ` from `T⁺` into `T⁻`,
//! the liftings `s_e(v̂), r_e(ŵ) ∈ Ṽ^{2×2}|_{ω_e}` are the Riesz
//! representatives of
//!
//! ```text
//! φ ↦ ∫_e v̂ {Div φ · μ} ds        and        φ ↦ ∫_e ŵ · {φ μ} ds
//! ```
//!
//! in the L² inner product of the edge patch, with `(Div φ)_i = Σ_j ∂_j φ_ij`.
//! Value-jump liftings are taken over every interior edge, gradient-jump
//! liftings skip fold edges so that a crease costs no bending energy.
//!
//! The elementwise Hessian of a curved element is not polynomial; it enters
//! through its L² projection onto the quadratic space, which leaves all
//! pairings with discrete test fields unchanged.

use nalgebra::{Cholesky, DMatrix, Matrix2, SMatrix, Vector2, U6};
use thiserror::Error;

use crate::dgspace::{DgField, DgSpace, EdgePoint, COMPONENTS};
use crate::mesh::element::{PhysicalBasis, NODES};
use crate::mesh::EdgeTag;

/// Entries of a 2×2 matrix in row-major order.
pub const ENTRIES: usize = 4;
const HESS_DOFS: usize = NODES * ENTRIES;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HessianError {
    #[error("edge {0} is not an interior edge")]
    NotInterior(usize),
    #[error("edge {0} lies on the fold and carries no gradient-jump lifting")]
    ExcludedEdge(usize),
    #[error("internal error: {0}")]
    Internal(String),
}

type ElementMass = SMatrix<f64, NODES, NODES>;

/// Matrix-valued quadratic field on an edge patch `ω_e`, zero elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchField {
    pub elements: [usize; 2],
    /// Nodal 2×2 coefficients on each patch element.
    pub coeffs: [[Matrix2<f64>; NODES]; 2],
}

impl PatchField {
    /// `∫_{ω_e} self : φ` for a test field given by nodal coefficients on the
    /// two patch elements.
    pub fn pair(&self, space: &DgSpace, test: &[[Matrix2<f64>; NODES]; 2]) -> f64 {
        let mut total = 0.0;
        for side in 0..2 {
            let t = self.elements[side];
            for qp in space.quad_points(t) {
                let a = eval_matrix(&self.coeffs[side], &qp.basis);
                let b = eval_matrix(&test[side], &qp.basis);
                total += qp.jxw * a.component_mul(&b).sum();
            }
        }
        total
    }
}

fn eval_matrix(coeffs: &[Matrix2<f64>; NODES], basis: &PhysicalBasis) -> Matrix2<f64> {
    (0..NODES).map(|a| basis.values[a] * coeffs[a]).sum()
}

/// Row-wise divergence of a nodal matrix field: `(Div φ)_i = Σ_j ∂_j φ_ij`.
fn eval_div(coeffs: &[Matrix2<f64>; NODES], basis: &PhysicalBasis) -> Vector2<f64> {
    let mut d = Vector2::zeros();
    for a in 0..NODES {
        d += coeffs[a] * basis.grads[a];
    }
    d
}

/// Element Hessian rows: local matrix from patch scalar coefficients to the
/// 24 Hessian coefficients (`6 nodes × 4 entries`, index `4 a + 2 i + j`).
#[derive(Debug, Clone)]
pub struct HessianBlock {
    /// Element itself first, then its edge neighbours.
    pub patch: Vec<usize>,
    pub matrix: DMatrix<f64>,
}

/// Per-component Hessian coefficients, index `((6 t + a) * 3 + c) * 4 + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct HessianField {
    coeffs: Vec<f64>,
}

impl HessianField {
    pub fn n_elements(&self) -> usize {
        self.coeffs.len() / (NODES * COMPONENTS * ENTRIES)
    }

    pub fn node(&self, t: usize, a: usize, c: usize) -> Matrix2<f64> {
        let i = ((t * NODES + a) * COMPONENTS + c) * ENTRIES;
        Matrix2::new(self.coeffs[i], self.coeffs[i + 1], self.coeffs[i + 2], self.coeffs[i + 3])
    }

    /// Value of component `c` at a point of element `t`.
    pub fn eval(&self, t: usize, c: usize, basis: &PhysicalBasis) -> Matrix2<f64> {
        (0..NODES).map(|a| basis.values[a] * self.node(t, a, c)).sum()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coeffs
    }

    /// `∫_T |H̃|²` per element, Frobenius over components and entries.
    pub fn element_norms_squared(&self, space: &DgSpace) -> Vec<f64> {
        (0..self.n_elements())
            .map(|t| {
                space
                    .quad_points(t)
                    .iter()
                    .map(|qp| {
                        qp.jxw * (0..COMPONENTS).map(|c| self.eval(t, c, &qp.basis).norm_squared()).sum::<f64>()
                    })
                    .sum()
            })
            .collect()
    }

    pub fn l2_norm_squared(&self, space: &DgSpace) -> f64 {
        self.element_norms_squared(space).iter().sum()
    }
}

/// The assembled linear map `V ↦ H̃(V)` on scalar coefficients.
#[derive(Debug, Clone)]
pub struct HessianOperator {
    blocks: Vec<HessianBlock>,
    mass: Vec<Cholesky<f64, U6>>,
}

impl HessianOperator {
    pub fn new(space: &DgSpace) -> Result<Self, HessianError> {
        let mesh = space.mesh();
        let mut mass = Vec::with_capacity(mesh.n_elements());
        for t in 0..mesh.n_elements() {
            let m: ElementMass = space.element_mass(t);
            mass.push(
                Cholesky::new(m).ok_or_else(|| HessianError::Internal(format!("singular mass on element {t}")))?,
            );
        }

        let mut blocks = Vec::with_capacity(mesh.n_elements());
        for t in 0..mesh.n_elements() {
            let mut patch = vec![t];
            patch.extend(mesh.neighbors(t));
            let col = |el: usize, b: usize| patch.iter().position(|&p| p == el).unwrap() * NODES + b;
            let mut rhs = DMatrix::zeros(HESS_DOFS, patch.len() * NODES);

            for qp in space.quad_points(t) {
                for a in 0..NODES {
                    for b in 0..NODES {
                        let h = qp.basis.hessians[b];
                        for i in 0..2 {
                            for j in 0..2 {
                                rhs[(a * ENTRIES + 2 * i + j, col(t, b))] += qp.jxw * qp.basis.values[a] * h[(i, j)];
                            }
                        }
                    }
                }
            }

            for e in mesh.element_edges(t) {
                let edge = &mesh.edges()[e];
                let Some(right) = edge.right else { continue };
                let t_is_left = edge.left.element == t;
                let other = if t_is_left { right.element } else { edge.left.element };
                let sign = if t_is_left { 1.0 } else { -1.0 };
                let with_gradient = edge.tag != EdgeTag::Fold;
                for p in space.edge_points(e) {
                    let (own, nb) = sides(p, t_is_left);
                    for a in 0..NODES {
                        for i in 0..2 {
                            for j in 0..2 {
                                let row = a * ENTRIES + 2 * i + j;
                                // s_e: ½ μ_i ∂_j ψ_a ⟦V⟧
                                let sw = 0.5 * p.ds * p.normal[i] * own.grads[a][j] * sign;
                                // r_e: ½ μ_j ψ_a ⟦∂_i V⟧, subtracted
                                let rw = 0.5 * p.ds * p.normal[j] * own.values[a] * sign;
                                for b in 0..NODES {
                                    let mut vt = sw * own.values[b];
                                    let mut vo = -sw * nb.values[b];
                                    if with_gradient {
                                        vt -= rw * own.grads[b][i];
                                        vo += rw * nb.grads[b][i];
                                    }
                                    rhs[(row, col(t, b))] += vt;
                                    rhs[(row, col(other, b))] += vo;
                                }
                            }
                        }
                    }
                }
            }

            solve_entrywise(&mass[t], &mut rhs);
            blocks.push(HessianBlock { patch, matrix: rhs });
        }
        Ok(Self { blocks, mass })
    }

    pub fn block(&self, t: usize) -> &HessianBlock {
        &self.blocks[t]
    }

    pub fn element_mass_cholesky(&self, t: usize) -> &Cholesky<f64, U6> {
        &self.mass[t]
    }

    /// Applies the operator to every component of `field`.
    pub fn apply(&self, field: &DgField) -> HessianField {
        let n_el = self.blocks.len();
        let mut coeffs = vec![0.0; n_el * NODES * COMPONENTS * ENTRIES];
        for (t, block) in self.blocks.iter().enumerate() {
            for c in 0..COMPONENTS {
                let local: Vec<f64> = block
                    .patch
                    .iter()
                    .flat_map(|&p| (0..NODES).map(move |b| (p, b)))
                    .map(|(p, b)| field.node(p, b)[c])
                    .collect();
                for a in 0..NODES {
                    for k in 0..ENTRIES {
                        let row = a * ENTRIES + k;
                        let v: f64 = (0..local.len()).map(|j| block.matrix[(row, j)] * local[j]).sum();
                        coeffs[((t * NODES + a) * COMPONENTS + c) * ENTRIES + k] = v;
                    }
                }
            }
        }
        HessianField { coeffs }
    }

    /// Local bending matrix `Σ_k G_kᵀ M_T G_k` of element `t` on its patch
    /// scalar coefficients, so that `∫_T |H̃(v)|² = v_patchᵀ B v_patch`.
    pub fn local_gram(&self, space: &DgSpace, t: usize) -> DMatrix<f64> {
        let block = &self.blocks[t];
        let m = space.element_mass(t);
        let n = block.matrix.ncols();
        let mut out = DMatrix::zeros(n, n);
        for k in 0..ENTRIES {
            let rows = DMatrix::from_fn(NODES, n, |a, j| block.matrix[(a * ENTRIES + k, j)]);
            let m_dyn = DMatrix::from_fn(NODES, NODES, |a, b| m[(a, b)]);
            out += rows.transpose() * m_dyn * &rows;
        }
        out
    }
}

fn sides(p: &EdgePoint, t_is_left: bool) -> (&PhysicalBasis, &PhysicalBasis) {
    let right = p.right.as_ref().expect("interior edge");
    if t_is_left {
        (&p.left, right)
    } else {
        (right, &p.left)
    }
}

/// Solves `M c = rhs` for every (entry, column) pair, in place.
fn solve_entrywise(mass: &Cholesky<f64, U6>, rhs: &mut DMatrix<f64>) {
    for k in 0..ENTRIES {
        for j in 0..rhs.ncols() {
            let b = nalgebra::Vector6::from_fn(|a, _| rhs[(a * ENTRIES + k, j)]);
            let x = mass.solve(&b);
            for a in 0..NODES {
                rhs[(a * ENTRIES + k, j)] = x[a];
            }
        }
    }
}

fn patch_of(space: &DgSpace, e: usize) -> Result<([usize; 2], bool), HessianError> {
    let edge = &space.mesh().edges()[e];
    let right = edge.right.ok_or(HessianError::NotInterior(e))?;
    Ok(([edge.left.element, right.element], edge.tag == EdgeTag::Fold))
}

fn solve_patch(
    space: &DgSpace,
    elements: [usize; 2],
    mut rhs: [[Matrix2<f64>; NODES]; 2],
) -> Result<PatchField, HessianError> {
    for side in 0..2 {
        let m: ElementMass = space.element_mass(elements[side]);
        let chol = Cholesky::new(m).ok_or_else(|| HessianError::Internal("singular patch mass".into()))?;
        for i in 0..2 {
            for j in 0..2 {
                let b = nalgebra::Vector6::from_fn(|a, _| rhs[side][a][(i, j)]);
                let x = chol.solve(&b);
                for a in 0..NODES {
                    rhs[side][a][(i, j)] = x[a];
                }
            }
        }
    }
    Ok(PatchField { elements, coeffs: rhs })
}

/// Value-jump lifting `s_e(v̂)`; `v̂` is given as a function of the edge
/// parameter (start vertex at 0).
pub fn lift_value_jump(space: &DgSpace, e: usize, v: impl Fn(f64) -> f64) -> Result<PatchField, HessianError> {
    let (elements, _) = patch_of(space, e)?;
    let mut rhs = [[Matrix2::zeros(); NODES]; 2];
    for p in space.edge_points(e) {
        let vs = v(p.s);
        let bases = [&p.left, p.right.as_ref().expect("interior edge")];
        for side in 0..2 {
            for a in 0..NODES {
                // φ = ψ_a E_ij: Div φ · μ = μ_i ∂_j ψ_a, averaged over the two sides
                let g = bases[side].grads[a];
                rhs[side][a] += 0.5 * p.ds * vs * p.normal * g.transpose();
            }
        }
    }
    solve_patch(space, elements, rhs)
}

/// Gradient-jump lifting `r_e(ŵ)`. Fold edges are rejected.
pub fn lift_gradient_jump(
    space: &DgSpace,
    e: usize,
    w: impl Fn(f64) -> Vector2<f64>,
) -> Result<PatchField, HessianError> {
    let (elements, fold) = patch_of(space, e)?;
    if fold {
        return Err(HessianError::ExcludedEdge(e));
    }
    let mut rhs = [[Matrix2::zeros(); NODES]; 2];
    for p in space.edge_points(e) {
        let ws = w(p.s);
        let bases = [&p.left, p.right.as_ref().expect("interior edge")];
        for side in 0..2 {
            for a in 0..NODES {
                // φ = ψ_a E_ij: ŵ · φ μ = ŵ_i μ_j ψ_a
                rhs[side][a] += 0.5 * p.ds * bases[side].values[a] * ws * p.normal.transpose();
            }
        }
    }
    solve_patch(space, elements, rhs)
}

/// Right-hand side of the value-jump identity, `∫_e v̂ {Div φ · μ} ds`.
pub fn value_jump_functional(
    space: &DgSpace,
    e: usize,
    v: impl Fn(f64) -> f64,
    test: &[[Matrix2<f64>; NODES]; 2],
) -> f64 {
    space
        .edge_points(e)
        .iter()
        .map(|p| {
            let r = p.right.as_ref().expect("interior edge");
            let avg = 0.5 * (eval_div(&test[0], &p.left) + eval_div(&test[1], r));
            p.ds * v(p.s) * avg.dot(&p.normal)
        })
        .sum()
}

/// Right-hand side of the gradient-jump identity, `∫_e ŵ · {φ μ} ds`.
pub fn gradient_jump_functional(
    space: &DgSpace,
    e: usize,
    w: impl Fn(f64) -> Vector2<f64>,
    test: &[[Matrix2<f64>; NODES]; 2],
) -> f64 {
    space
        .edge_points(e)
        .iter()
        .map(|p| {
            let r = p.right.as_ref().expect("interior edge");
            let avg = 0.5 * (eval_matrix(&test[0], &p.left) + eval_matrix(&test[1], r)) * p.normal;
            p.ds * w(p.s).dot(&avg)
        })
        .sum()
}

/// `H̃(V)` for every component of `field`.
pub fn discrete_hessian(space: &DgSpace, field: &DgField) -> Result<HessianField, HessianError> {
    Ok(HessianOperator::new(space)?.apply(field))
}

/// Squared discrete H²-seminorm
/// `‖D̃²V‖² + Σ_e ∫_e h⁻³ |⟦V⟧|² + Σ_{e ∉ fold} ∫_e h⁻¹ |⟦∇̃V⟧|²`.
pub fn h2_seminorm_squared(space: &DgSpace, field: &DgField) -> f64 {
    let mesh = space.mesh();
    let mut total = 0.0;
    for t in 0..mesh.n_elements() {
        for qp in space.quad_points(t) {
            for c in 0..COMPONENTS {
                total += qp.jxw * space.hessian_of(field, t, c, &qp.basis).norm_squared();
            }
        }
    }
    let (jump0, jump1) = jump_integrals(space, field);
    total + jump0 + jump1
}

pub fn h2_seminorm(space: &DgSpace, field: &DgField) -> f64 {
    h2_seminorm_squared(space, field).sqrt()
}

/// `(Σ_e ∫ h⁻³|⟦V⟧|², Σ_{e ∉ fold} ∫ h⁻¹|⟦∇̃V⟧|²)` over interior edges.
pub fn jump_integrals(space: &DgSpace, field: &DgField) -> (f64, f64) {
    let mesh = space.mesh();
    let (mut j0, mut j1) = (0.0, 0.0);
    for (e, edge) in mesh.edges().iter().enumerate() {
        let Some(right) = edge.right else { continue };
        for p in space.edge_points(e) {
            let (vl, gl) = space.combine(field, edge.left.element, &p.left);
            let (vr, gr) = space.combine(field, right.element, p.right.as_ref().expect("interior edge"));
            j0 += p.ds * (vl - vr).norm_squared() / edge.h.powi(3);
            if edge.tag != EdgeTag::Fold {
                j1 += p.ds * (gl - gr).norm_squared() / edge.h;
            }
        }
    }
    (j0, j1)
}
