//! Isometry-constrained discrete gradient flow.
//!
//! Each step solves
//!
//! ```text
//! (d_tY, V)_* + a_K(Y^{k−1} + τ d_tY, V) = ℓ(V)   for all V ∈ F̃[Y^{k−1}],   d_tY ∈ F̃[Y^{k−1}]
//! ```
//!
//! where `F̃[Z]` is the space of variations whose integrated linearized
//! isometry defect `∫_T ∇Zᵀ∇W + ∇Wᵀ∇Z` vanishes on every element. The
//! constraint is element-local, so the saddle system is reduced to a
//! positive definite system on a per-element basis of `F̃[Z]` and factored
//! with a sparse Cholesky decomposition.

use std::collections::BTreeMap;

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};
use nalgebra::{DMatrix, DVector, Matrix2, SMatrix, Vector3};
use thiserror::Error;

use crate::dgspace::{DgField, DgSpace, COMPONENTS, ELEMENT_DOFS};
use crate::energy::{isometry_defect_gradient, isometry_defect_l2, isometry_violation, EnergyBreakdown, EnergyError, EnergyModel};
use crate::geometry::Vec2;
use crate::mesh::element::NODES;
use crate::mesh::quadrature::gauss_legendre;
use crate::mesh::FoldMesh;
use crate::sparse::{CsrMatrix, TripletBuilder};

/// Rows per element: the 11, 22 and 12 entries of the integrated defect.
pub const CONSTRAINTS_PER_ELEMENT: usize = 3;
const ROW_ENTRIES: [(usize, usize); 3] = [(0, 0), (1, 1), (0, 1)];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("invalid flow configuration: {0}")]
    InvalidConfig(String),
    #[error("initial isometry violation {violation} exceeds tolerance {rho}")]
    Admissibility { violation: f64, rho: f64 },
    #[error("linear solve failed: {0}")]
    SolveFailure(String),
    #[error("invariant violated at step {step}: {reason}")]
    InvariantBreach { step: usize, reason: String },
    #[error(transparent)]
    Energy(#[from] EnergyError),
}

/// Backtracking line search used by the preprocessing descent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmijoRule {
    pub c: f64,
    pub shrink: f64,
    pub initial_step: f64,
    pub max_backtracks: usize,
}

impl Default for ArmijoRule {
    fn default() -> Self {
        Self { c: 1e-4, shrink: 0.5, initial_step: 1.0, max_backtracks: 40 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowConfig {
    pub tau: f64,
    pub rho_tilde: f64,
    pub eps_pp: f64,
    pub eps_stop: f64,
    /// Weight of `a_K` in the flow metric.
    pub alpha_e: f64,
    /// Weight of the L² product in the flow metric.
    pub alpha_m: f64,
    pub max_iters: usize,
    pub pp_max_iters: usize,
    pub armijo: ArmijoRule,
    /// L² weight of the identity prior that fixes the kernel of the
    /// biharmonic extension.
    pub pp_regularization: f64,
    /// Scale of the out-of-plane arch added before the defect descent.
    pub pp_seed_scale: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            tau: 0.01,
            rho_tilde: 1.0,
            eps_pp: 1.0,
            eps_stop: 0.01,
            alpha_e: 1.0,
            alpha_m: 1.0,
            max_iters: 1000,
            pp_max_iters: 500,
            armijo: ArmijoRule::default(),
            pp_regularization: 1e-6,
            pp_seed_scale: 1.0,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<(), FlowError> {
        let positive = [
            ("tau", self.tau),
            ("rho_tilde", self.rho_tilde),
            ("eps_pp", self.eps_pp),
            ("eps_stop", self.eps_stop),
            ("pp_regularization", self.pp_regularization),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(FlowError::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.alpha_e >= 0.0 && self.alpha_m >= 0.0 && self.alpha_e + self.alpha_m > 0.0) {
            return Err(FlowError::InvalidConfig(format!(
                "metric weights must be nonnegative and not both zero, got ({}, {})",
                self.alpha_e, self.alpha_m
            )));
        }
        let a = &self.armijo;
        if !(a.c > 0.0 && a.c < 1.0 && a.shrink > 0.0 && a.shrink < 1.0 && a.initial_step > 0.0) {
            return Err(FlowError::InvalidConfig("armijo parameters out of range".into()));
        }
        if !(self.pp_seed_scale >= 0.0) {
            return Err(FlowError::InvalidConfig("pp_seed_scale must be nonnegative".into()));
        }
        Ok(())
    }
}

type ElementConstraint = SMatrix<f64, CONSTRAINTS_PER_ELEMENT, ELEMENT_DOFS>;

/// Linearized isometry constraint of element `t` at `y`, on the element's
/// 18 local DOFs (`3 a + c`).
pub fn element_constraint(space: &DgSpace, y: &DgField, t: usize) -> ElementConstraint {
    let mut b = ElementConstraint::zeros();
    for qp in space.quad_points(t) {
        let g = space.combine(y, t, &qp.basis).1;
        for (r, &(i, j)) in ROW_ENTRIES.iter().enumerate() {
            for a in 0..NODES {
                let dpsi = qp.basis.grads[a];
                for c in 0..COMPONENTS {
                    b[(r, a * COMPONENTS + c)] += qp.jxw * (g[(c, i)] * dpsi[j] + g[(c, j)] * dpsi[i]);
                }
            }
        }
    }
    b
}

/// Global constraint matrix `B(Y)`, `3 n_T × 18 n_T`; `B W = 0 ⇔ W ∈ F̃[Y]`.
pub fn constraint_matrix(space: &DgSpace, y: &DgField) -> CsrMatrix {
    let n = space.n_elements();
    let mut trip = TripletBuilder::new(CONSTRAINTS_PER_ELEMENT * n, ELEMENT_DOFS * n);
    for t in 0..n {
        let b = element_constraint(space, y, t);
        let rows: Vec<usize> = (0..CONSTRAINTS_PER_ELEMENT).map(|r| t * CONSTRAINTS_PER_ELEMENT + r).collect();
        let cols: Vec<usize> = (0..ELEMENT_DOFS).map(|k| t * ELEMENT_DOFS + k).collect();
        let vals: Vec<f64> = (0..CONSTRAINTS_PER_ELEMENT * ELEMENT_DOFS).map(|k| b[(k / ELEMENT_DOFS, k % ELEMENT_DOFS)]).collect();
        trip.push_block(&rows, &cols, &vals);
    }
    trip.build()
}

/// Orthonormal kernel basis and pseudo-inverse data of one element constraint.
struct ElementKernel {
    z: DMatrix<f64>,
    u: DMatrix<f64>,
    sigma: Vec<f64>,
    v: DMatrix<f64>,
}

fn element_kernel(b: &ElementConstraint) -> ElementKernel {
    // SVD of the 18×3 transpose: Bᵀ = V Σ Uᵀ, so range(Bᵀ) = span(V)
    let bt = DMatrix::from_fn(ELEMENT_DOFS, CONSTRAINTS_PER_ELEMENT, |i, j| b[(j, i)]);
    let full = bt.clone() * bt.transpose();
    let eig = full.symmetric_eigen();
    let mut order: Vec<usize> = (0..ELEMENT_DOFS).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    // eigenvalues are squared singular values
    let top = eig.eigenvalues[order[0]];
    let rank = if top > 0.0 {
        order.iter().take(CONSTRAINTS_PER_ELEMENT).filter(|&&k| eig.eigenvalues[k] > 1e-20 * top).count()
    } else {
        0
    };
    let v = DMatrix::from_fn(ELEMENT_DOFS, rank, |i, j| eig.eigenvectors[(i, order[j])]);
    let z = DMatrix::from_fn(ELEMENT_DOFS, ELEMENT_DOFS - rank, |i, j| eig.eigenvectors[(i, order[rank + j])]);
    // u_k = B v_k / σ_k
    let sigma: Vec<f64> = (0..rank).map(|k| eig.eigenvalues[order[k]].sqrt()).collect();
    let u = DMatrix::from_fn(CONSTRAINTS_PER_ELEMENT, rank, |i, k| {
        (0..ELEMENT_DOFS).map(|d| bt[(d, i)] * v[(d, k)]).sum::<f64>() / sigma[k]
    });
    ElementKernel { z, u, sigma, v }
}

/// Scalar system matrices of the flow, grouped into element blocks.
#[derive(Debug, Clone)]
struct BlockMatrix {
    blocks: Vec<(usize, usize, SMatrix<f64, NODES, NODES>)>,
}

impl BlockMatrix {
    fn from_csr(m: &CsrMatrix) -> Self {
        let mut map: BTreeMap<(usize, usize), SMatrix<f64, NODES, NODES>> = BTreeMap::new();
        for (r, c, v) in m.iter() {
            map.entry((r / NODES, c / NODES)).or_insert_with(SMatrix::zeros)[(r % NODES, c % NODES)] += v;
        }
        Self { blocks: map.into_iter().map(|((t, s), b)| (t, s, b)).collect() }
    }
}

/// Result of one flow step.
#[derive(Debug, Clone)]
pub struct FlowStep {
    pub next: DgField,
    /// `d_tY`.
    pub direction: DgField,
    /// `‖d_tY‖_*`.
    pub step_norm: f64,
    /// Three multipliers per element.
    pub multipliers: Vec<f64>,
    /// `‖K d + Bᵀλ − r‖ / ‖r‖` of the saddle system.
    pub residual: f64,
    /// `‖B d‖ / ‖d‖`.
    pub constraint_residual: f64,
}

/// Reusable data for repeated flow steps on a fixed energy model.
pub struct FlowSolver<'m, 'a> {
    model: &'m EnergyModel<'a>,
    cfg: FlowConfig,
    /// `α_E A + α_M M`.
    metric: CsrMatrix,
    /// `(α_E + τ) A + α_M M`.
    system: CsrMatrix,
    system_blocks: BlockMatrix,
}

impl<'m, 'a> FlowSolver<'m, 'a> {
    pub fn new(model: &'m EnergyModel<'a>, cfg: FlowConfig) -> Result<Self, FlowError> {
        cfg.validate()?;
        let mass = model.space().assemble_l2_mass();
        let metric = model.matrix().linear_combination(cfg.alpha_e, &mass, cfg.alpha_m);
        let system = model.matrix().linear_combination(cfg.alpha_e + cfg.tau, &mass, cfg.alpha_m);
        let system_blocks = BlockMatrix::from_csr(&system);
        Ok(Self { model, cfg, metric, system, system_blocks })
    }

    pub fn config(&self) -> &FlowConfig {
        &self.cfg
    }

    /// `‖v‖²_*`.
    pub fn metric_norm_squared(&self, v: &DgField) -> f64 {
        self.metric.quad_form3(v.as_slice())
    }

    pub fn step(&self, y_prev: &DgField) -> Result<FlowStep, FlowError> {
        let space = self.model.space();
        let n_el = space.n_elements();
        let kernels: Vec<ElementKernel> =
            (0..n_el).map(|t| element_kernel(&element_constraint(space, y_prev, t))).collect();
        let mut offsets = Vec::with_capacity(n_el + 1);
        offsets.push(0);
        for k in &kernels {
            offsets.push(offsets.last().unwrap() + k.z.ncols());
        }
        let n_red = *offsets.last().unwrap();

        let mut triplets = Vec::new();
        for (t, s, blk) in &self.system_blocks.blocks {
            let (zt, zs) = (&kernels[*t].z, &kernels[*s].z);
            if zt.ncols() == 0 || zs.ncols() == 0 {
                continue;
            }
            let full = DMatrix::from_fn(ELEMENT_DOFS, ELEMENT_DOFS, |i, j| {
                if i % COMPONENTS == j % COMPONENTS {
                    blk[(i / COMPONENTS, j / COMPONENTS)]
                } else {
                    0.0
                }
            });
            let red = zt.transpose() * full * zs;
            for i in 0..red.nrows() {
                for j in 0..red.ncols() {
                    let (gi, gj) = (offsets[*t] + i, offsets[*s] + j);
                    if gi >= gj && red[(i, j)] != 0.0 {
                        triplets.push(Triplet::new(gi, gj, red[(i, j)]));
                    }
                }
            }
        }

        // r = −(A Y − b)
        let rhs: Vec<f64> = self.model.gradient(y_prev).as_slice().iter().map(|g| -g).collect();
        let rhs_norm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
        let direction = if n_red == 0 || rhs_norm == 0.0 {
            vec![0.0; rhs.len()]
        } else {
            let kmat = SparseColMat::<usize, f64>::try_new_from_triplets(n_red, n_red, &triplets)
                .map_err(|e| FlowError::SolveFailure(format!("{e:?}")))?;
            let llt = kmat
                .sp_cholesky(Side::Lower)
                .map_err(|e| FlowError::SolveFailure(format!("reduced system is not positive definite: {e:?}")))?;
            let mut x = vec![0.0; n_red];
            let mut d = vec![0.0; rhs.len()];
            for _ in 0..3 {
                let kd = self.system.mul_vec3(&d);
                let res: Vec<f64> = rhs.iter().zip(&kd).map(|(r, k)| r - k).collect();
                let red_res = restrict(&kernels, &offsets, &res);
                let red_norm = red_res.iter().map(|v| v * v).sum::<f64>().sqrt();
                if red_norm <= 1e-14 * rhs_norm {
                    break;
                }
                let b = Mat::<f64>::from_fn(n_red, 1, |i, _| red_res[i]);
                let dx = llt.solve(&b);
                for i in 0..n_red {
                    x[i] += dx[(i, 0)];
                }
                d = prolong(&kernels, &offsets, &x);
            }
            d
        };

        // multipliers from the range component of the residual
        let kd = self.system.mul_vec3(&direction);
        let res: Vec<f64> = rhs.iter().zip(&kd).map(|(r, k)| r - k).collect();
        let mut multipliers = vec![0.0; CONSTRAINTS_PER_ELEMENT * n_el];
        let mut saddle_res = 0.0;
        let mut bd_norm = 0.0;
        for (t, k) in kernels.iter().enumerate() {
            let w = DVector::from_column_slice(&res[t * ELEMENT_DOFS..(t + 1) * ELEMENT_DOFS]);
            let vw = k.v.transpose() * &w;
            let mut lambda = DVector::zeros(CONSTRAINTS_PER_ELEMENT);
            for j in 0..k.sigma.len() {
                lambda += k.u.column(j) * (vw[j] / k.sigma[j]);
            }
            multipliers[t * CONSTRAINTS_PER_ELEMENT..(t + 1) * CONSTRAINTS_PER_ELEMENT].copy_from_slice(lambda.as_slice());
            let b = element_constraint(space, y_prev, t);
            let bt_lambda = b.transpose() * nalgebra::Vector3::from_column_slice(lambda.as_slice());
            saddle_res += (w - DVector::from_column_slice(bt_lambda.as_slice())).norm_squared();
            let dt = nalgebra::SVector::<f64, ELEMENT_DOFS>::from_column_slice(
                &direction[t * ELEMENT_DOFS..(t + 1) * ELEMENT_DOFS],
            );
            bd_norm += (b * dt).norm_squared();
        }
        let direction = DgField::from_vec(direction);
        let d_norm = direction.norm();
        let residual = if rhs_norm > 0.0 { saddle_res.sqrt() / rhs_norm } else { 0.0 };
        if residual > 1e-10 {
            return Err(FlowError::SolveFailure(format!("saddle residual {residual:.3e} above 1e-10")));
        }
        let step_norm = self.metric_norm_squared(&direction).max(0.0).sqrt();
        Ok(FlowStep {
            next: y_prev.add_scaled(self.cfg.tau, &direction),
            step_norm,
            multipliers,
            residual,
            constraint_residual: if d_norm > 0.0 { bd_norm.sqrt() / d_norm } else { 0.0 },
            direction,
        })
    }
}

fn restrict(kernels: &[ElementKernel], offsets: &[usize], v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; *offsets.last().unwrap()];
    for (t, k) in kernels.iter().enumerate() {
        let w = DVector::from_column_slice(&v[t * ELEMENT_DOFS..(t + 1) * ELEMENT_DOFS]);
        let r = k.z.transpose() * w;
        out[offsets[t]..offsets[t + 1]].copy_from_slice(r.as_slice());
    }
    out
}

fn prolong(kernels: &[ElementKernel], offsets: &[usize], x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; kernels.len() * ELEMENT_DOFS];
    for (t, k) in kernels.iter().enumerate() {
        let d = &k.z * DVector::from_column_slice(&x[offsets[t]..offsets[t + 1]]);
        out[t * ELEMENT_DOFS..(t + 1) * ELEMENT_DOFS].copy_from_slice(d.as_slice());
    }
    out
}

/// One step of the flow from `y_prev`.
pub fn flow_step(model: &EnergyModel, y_prev: &DgField, cfg: &FlowConfig) -> Result<FlowStep, FlowError> {
    FlowSolver::new(model, *cfg)?.step(y_prev)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Stationary,
    MaxIters,
}

/// Per-step record handed to observers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub energy: EnergyBreakdown,
    pub step_norm: f64,
    pub violation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowReport {
    /// `Ẽ_K(Y^k)` for `k = 0, 1, …` including the final stationary step.
    pub energies: Vec<EnergyBreakdown>,
    /// `‖d_tY^k‖_*` for `k = 1, …`.
    pub step_norms: Vec<f64>,
    /// `Σ_T |∫_T ∇Yᵀ∇Y − I|` for `k = 0, 1, …`.
    pub violations: Vec<f64>,
    pub initial_violation: f64,
    /// `|Ẽ_K(Y^k) + τ‖d‖²_* + τ²/2 dᵀA d − Ẽ_K(Y^{k−1})| / Ẽ_K(Y^{k−1})`.
    pub decay_residuals: Vec<f64>,
    /// Largest per-element deviation from the telescoping defect identity.
    pub telescoping_residuals: Vec<f64>,
    /// `‖∇̃d_tY^k‖²_{L²}`.
    pub gradient_norms_squared: Vec<f64>,
    pub saddle_residuals: Vec<f64>,
    /// A posteriori `max_k ‖∇̃d_tY^k‖² / ‖d_tY^k‖²_*`.
    pub c_star: f64,
    /// Steps before the stopping criterion was met.
    pub iterations: usize,
    pub steps_taken: usize,
    pub termination: Termination,
    pub final_multipliers: Vec<f64>,
}

impl FlowReport {
    pub fn initial_energy(&self) -> f64 {
        self.energies[0].total
    }

    pub fn final_energy(&self) -> &EnergyBreakdown {
        self.energies.last().expect("at least the initial energy")
    }

    pub fn final_violation(&self) -> f64 {
        *self.violations.last().expect("at least the initial violation")
    }

    /// `ε⁰ + c_* Ẽ_K⁰ τ`.
    pub fn violation_bound(&self, tau: f64) -> f64 {
        self.initial_violation + self.c_star * self.initial_energy() * tau
    }
}

/// Energies below this are round-off of an exactly stationary field.
const ENERGY_FLOOR: f64 = 1e-12;

pub fn run_flow(model: &EnergyModel, y0: &DgField, cfg: &FlowConfig) -> Result<(DgField, FlowReport), FlowError> {
    run_flow_with(model, y0, cfg, |_, _| {})
}

/// Runs the flow, calling `observer` on the initial state and after every step.
pub fn run_flow_with(
    model: &EnergyModel,
    y0: &DgField,
    cfg: &FlowConfig,
    mut observer: impl FnMut(&IterationRecord, &DgField),
) -> Result<(DgField, FlowReport), FlowError> {
    let solver = FlowSolver::new(model, *cfg)?;
    let space = model.space();
    let (defect0, eps0) = isometry_violation(space, y0);
    if eps0 > cfg.rho_tilde {
        return Err(FlowError::Admissibility { violation: eps0, rho: cfg.rho_tilde });
    }
    let e0 = model.energy(y0);
    observer(&IterationRecord { iter: 0, energy: e0, step_norm: 0.0, violation: eps0 }, y0);

    let mut report = FlowReport {
        energies: vec![e0],
        step_norms: Vec::new(),
        violations: vec![eps0],
        initial_violation: eps0,
        decay_residuals: Vec::new(),
        telescoping_residuals: Vec::new(),
        gradient_norms_squared: Vec::new(),
        saddle_residuals: Vec::new(),
        c_star: 0.0,
        iterations: 0,
        steps_taken: 0,
        termination: Termination::MaxIters,
        final_multipliers: Vec::new(),
    };
    let mut accumulated: Vec<Matrix2<f64>> = vec![Matrix2::zeros(); space.n_elements()];
    let mut y = y0.clone();
    let tau = cfg.tau;

    for k in 1..=cfg.max_iters {
        let step = solver.step(&y)?;
        let prev_energy = report.final_energy().total;
        let energy = model.energy(&step.next);
        let norm_sq = step.step_norm * step.step_norm;
        let remainder = 0.5 * tau * tau * model.matrix().quad_form3(step.direction.as_slice());
        let decay = (energy.total + tau * norm_sq + remainder - prev_energy).abs() / prev_energy.max(ENERGY_FLOOR);
        if energy.total > prev_energy + 1e-10 * e0.total.max(ENERGY_FLOOR) {
            return Err(FlowError::InvariantBreach {
                step: k,
                reason: format!("energy increased from {prev_energy} to {}", energy.total),
            });
        }

        let (grads, grad_sq) = element_gradient_grams(space, &step.direction);
        for (acc, g) in accumulated.iter_mut().zip(&grads) {
            *acc += tau * tau * g;
        }
        let (defects, violation) = isometry_violation(space, &step.next);
        let telescoping = defects
            .iter()
            .zip(&defect0)
            .zip(&accumulated)
            .map(|((d, d0), acc)| (d - d0 - acc).norm())
            .fold(0.0, f64::max);

        if norm_sq > 0.0 {
            report.c_star = report.c_star.max(grad_sq / norm_sq);
        }
        report.energies.push(energy);
        report.step_norms.push(step.step_norm);
        report.violations.push(violation);
        report.decay_residuals.push(decay);
        report.telescoping_residuals.push(telescoping);
        report.gradient_norms_squared.push(grad_sq);
        report.saddle_residuals.push(step.residual);
        report.final_multipliers = step.multipliers;
        report.steps_taken = k;
        y = step.next;
        observer(&IterationRecord { iter: k, energy, step_norm: step.step_norm, violation }, &y);

        if (energy.total - prev_energy).abs() / tau <= cfg.eps_stop {
            report.iterations = k - 1;
            report.termination = Termination::Stationary;
            return Ok((y, report));
        }
    }
    report.iterations = cfg.max_iters;
    Ok((y, report))
}

/// Per-element `∫_T ∇̃dᵀ∇̃d` and `‖∇̃d‖²_{L²}`.
fn element_gradient_grams(space: &DgSpace, d: &DgField) -> (Vec<Matrix2<f64>>, f64) {
    let grams: Vec<Matrix2<f64>> = (0..space.n_elements())
        .map(|t| {
            space
                .quad_points(t)
                .iter()
                .map(|qp| {
                    let g = space.combine(d, t, &qp.basis).1;
                    qp.jxw * g.transpose() * g
                })
                .sum()
        })
        .collect();
    let total = grams.iter().map(|g| g.trace()).sum();
    (grams, total)
}

/// A prescribed point displacement `Y(point) = target`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointTarget {
    pub point: Vec2,
    pub target: Vector3<f64>,
}

/// Moves `x_d` and `x_d2` towards each other by `s/2 · |x_d2 − x_d|` each.
pub fn compression_bc(s: f64, x_d: Vec2, x_d2: Vec2) -> Result<[PointTarget; 2], FlowError> {
    if !(0.0..=1.0).contains(&s) {
        return Err(FlowError::InvalidConfig(format!("compression rate must lie in [0, 1], got {s}")));
    }
    let moved = |x: Vec2, other: Vec2| {
        let p = x + 0.5 * s * (other - x);
        PointTarget { point: x, target: Vector3::new(p.x, p.y, 0.0) }
    };
    Ok([moved(x_d, x_d2), moved(x_d2, x_d)])
}

/// Out-of-plane arch `z = a sin(π t)` over the segment `from → to`, `t` the
/// clamped projection parameter. The amplitude balances the mean metric of a
/// sheet compressed by `rate` along the segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArchSeed {
    pub from: Vec2,
    pub to: Vec2,
    pub rate: f64,
}

impl ArchSeed {
    pub fn amplitude(&self) -> f64 {
        let len = (self.to - self.from).norm();
        let keep = 1.0 - self.rate;
        len / std::f64::consts::PI * (2.0 * (1.0 - keep * keep)).max(0.0).sqrt()
    }

    pub fn height(&self, x: Vec2) -> f64 {
        let axis = self.to - self.from;
        let t = ((x - self.from).dot(&axis) / axis.norm_squared()).clamp(0.0, 1.0);
        self.amplitude() * (std::f64::consts::PI * t).sin()
    }
}

/// Folded isometric seed for a sheet crossed by one crease.
///
/// The sheet is rolled into a cylinder with generators perpendicular to
/// `from → to` whose profile is the crease itself, `z = κ (v_c(u) − v₀)`
/// in coordinates `u` along and `v` across the segment. The plane
/// `z = κ (v − v₀)` then cuts the cylinder exactly along the crease, and
/// reflecting the region that contains `from` across it folds the sheet
/// without stretching. `κ` is chosen so the segment shortens by `rate`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FoldSeed {
    pub from: Vec2,
    pub to: Vec2,
    pub rate: f64,
}

/// Crease profile of a [`FoldSeed`] on a given mesh: a natural cubic
/// spline through the crease nodes, extended linearly.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldProfile {
    /// Crease node coordinates `(u, v)`, sorted by `u`.
    knots: Vec<(f64, f64)>,
    /// Spline second derivatives at the knots.
    curvature: Vec<f64>,
    v0: f64,
    pub kappa: f64,
    /// Extra in-plane shortening along the segment when the crease is too
    /// steep to absorb `rate` by rolling alone; 1 otherwise.
    pub in_plane_scale: f64,
}

impl FoldProfile {
    fn new(knots: Vec<(f64, f64)>) -> Self {
        let n = knots.len();
        let mut curvature = vec![0.0; n];
        if n > 2 {
            // tridiagonal system for the interior second derivatives
            let h: Vec<f64> = knots.windows(2).map(|w| w[1].0 - w[0].0).collect();
            let slope: Vec<f64> = knots.windows(2).zip(&h).map(|(w, h)| (w[1].1 - w[0].1) / h).collect();
            let m = n - 2;
            let mut diag: Vec<f64> = (0..m).map(|i| 2.0 * (h[i] + h[i + 1])).collect();
            let mut rhs: Vec<f64> = (0..m).map(|i| 6.0 * (slope[i + 1] - slope[i])).collect();
            for i in 1..m {
                let f = h[i] / diag[i - 1];
                diag[i] -= f * h[i];
                rhs[i] -= f * rhs[i - 1];
            }
            for i in (0..m).rev() {
                let upper = if i + 1 < m { h[i + 1] * curvature[i + 2] } else { 0.0 };
                curvature[i + 1] = (rhs[i] - upper) / diag[i];
            }
        }
        let v0 = 0.5 * (knots[0].1 + knots[n - 1].1);
        Self { knots, curvature, v0, kappa: 0.0, in_plane_scale: 1.0 }
    }

    /// Spline value and slope at `u`.
    fn eval(&self, u: f64) -> (f64, f64) {
        let (k, c) = (&self.knots, &self.curvature);
        let last = k.len() - 1;
        let i = k.partition_point(|&(ku, _)| ku <= u).clamp(1, last);
        let (u0, v0, u1, v1) = (k[i - 1].0, k[i - 1].1, k[i].0, k[i].1);
        let h = u1 - u0;
        let (c0, c1) = (c[i - 1], c[i]);
        let t = ((u - u0) / h).clamp(0.0, 1.0);
        let s = 1.0 - t;
        let value = s * v0 + t * v1 + h * h / 6.0 * ((s * s * s - s) * c0 + (t * t * t - t) * c1);
        let slope = (v1 - v0) / h + h / 6.0 * (-(3.0 * s * s - 1.0) * c0 + (3.0 * t * t - 1.0) * c1);
        // linear beyond the end knots
        let outside = if u < k[0].0 { u - k[0].0 } else if u > k[last].0 { u - k[last].0 } else { 0.0 };
        (value + slope * outside, slope)
    }

    fn steepest(&self) -> f64 {
        let (x, _) = gauss_legendre(SPLINE_QUAD);
        self.knots
            .windows(2)
            .flat_map(|w| x.iter().map(move |&t| w[0].0 + t * (w[1].0 - w[0].0)).chain([w[0].0, w[1].0]))
            .map(|u| self.eval(u).1.abs())
            .fold(0.0, f64::max)
    }

    fn height(&self, u: f64) -> f64 {
        self.kappa * (self.eval(u).0 - self.v0)
    }

    /// Arc length coordinate along the rolled profile, `∫₀ᵘ √(1 − z′²)`.
    fn arc(&self, kappa: f64, u: f64) -> f64 {
        let (x, w) = gauss_legendre(SPLINE_QUAD);
        let stretch = |at: f64| (1.0 - (kappa * self.eval(at).1).powi(2)).max(0.0).sqrt();
        let (lo, hi, sign) = if u >= 0.0 { (0.0, u, 1.0) } else { (u, 0.0, -1.0) };
        let mut cuts: Vec<f64> = vec![lo];
        cuts.extend(self.knots.iter().map(|k| k.0).filter(|&ku| ku > lo && ku < hi));
        cuts.push(hi);
        let integral: f64 = cuts
            .windows(2)
            .map(|c| {
                let len = c[1] - c[0];
                x.iter().zip(&w).map(|(t, wt)| wt * len * stretch(c[0] + t * len)).sum::<f64>()
            })
            .sum();
        sign * integral
    }
}

const SPLINE_QUAD: usize = 8;

impl FoldSeed {
    fn frame(&self) -> Result<(Vec2, Vec2, f64), FlowError> {
        let axis = self.to - self.from;
        let len = axis.norm();
        if !(len > 0.0) {
            return Err(FlowError::InvalidConfig("fold seed needs two distinct points".into()));
        }
        let e = axis / len;
        Ok((e, Vec2::new(-e.y, e.x), len))
    }

    /// Reads the crease off the fold edges of `mesh` and solves for `κ`.
    pub fn profile(&self, mesh: &FoldMesh) -> Result<FoldProfile, FlowError> {
        if !(0.0..1.0).contains(&self.rate) {
            return Err(FlowError::InvalidConfig(format!("fold seed rate must lie in [0, 1), got {}", self.rate)));
        }
        let (e, n, len) = self.frame()?;
        let mut knots: Vec<(f64, f64)> = mesh
            .fold_edges()
            .flat_map(|f| mesh.edges()[f].nodes)
            .map(|i| {
                let d = mesh.nodes()[i] - self.from;
                (d.dot(&e), d.dot(&n))
            })
            .collect();
        knots.sort_by(|a, b| a.0.total_cmp(&b.0));
        knots.dedup_by(|a, b| (a.0 - b.0).abs() <= 1e-12 * len && (a.1 - b.1).abs() <= 1e-12 * len);
        if knots.len() < 2 || knots.windows(2).any(|w| w[1].0 - w[0].0 <= 1e-9 * len) {
            return Err(FlowError::InvalidConfig("fold seed needs a crease that is a graph over the segment".into()));
        }
        let mut profile = FoldProfile::new(knots);
        let steepest = profile.steepest();
        let target = (1.0 - self.rate) * len;
        if self.rate == 0.0 || steepest == 0.0 {
            profile.in_plane_scale = 1.0 - self.rate;
            return Ok(profile);
        }
        let cap = 0.999 / steepest;
        let chord = |k: f64| profile.arc(k, len);
        let at_cap = chord(cap);
        if at_cap > target {
            profile.kappa = cap;
            profile.in_plane_scale = target / at_cap;
            return Ok(profile);
        }
        let (mut lo, mut hi) = (0.0, cap);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if chord(mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        profile.kappa = 0.5 * (lo + hi);
        Ok(profile)
    }

    /// The seeded field, rigidly placed so `from` and `to` land on their
    /// compressed targets.
    pub fn field(&self, space: &DgSpace) -> Result<(DgField, FoldProfile), FlowError> {
        let mesh = space.mesh();
        let profile = self.profile(mesh)?;
        let (e, n, _) = self.frame()?;
        let labels = mesh.fold_regions();
        let flap = mesh
            .first_element_of_vertex(mesh.nearest_vertex(self.from))
            .map(|(t, _)| labels[t])
            .ok_or_else(|| FlowError::InvalidConfig("fold seed point is not on the mesh".into()))?;
        let k = profile.kappa;
        let normal = Vector3::new(0.0, -k, 1.0).normalize();
        let through = Vector3::new(0.0, profile.v0, 0.0);
        let local = |x: Vec2, folded: bool| {
            let d = x - self.from;
            let u = d.dot(&e);
            let mut p = Vector3::new(profile.in_plane_scale * profile.arc(k, u), d.dot(&n), profile.height(u));
            if folded {
                p -= 2.0 * (p - through).dot(&normal) * normal;
            }
            let w = p.x * e + p.y * n;
            Vector3::new(w.x, w.y, p.z)
        };
        // `to` sits on the folded side whenever it shares the region of `from`
        let to_folded = mesh.first_element_of_vertex(mesh.nearest_vertex(self.to)).map(|(t, _)| labels[t]) == Some(flap);
        let (a, b) = (local(self.from, true), local(self.to, to_folded));
        let [ga, gb] = compression_bc(self.rate, self.from, self.to)?.map(|p| p.target);
        let rot = nalgebra::Rotation3::rotation_between(&(b - a), &(gb - ga)).unwrap_or_else(nalgebra::Rotation3::identity);
        let shift = ga - rot * a;
        let mut y = space.zero_field();
        for (t, el) in mesh.elements().iter().enumerate() {
            for (i, &node) in el.iter().enumerate() {
                y.set_node(t, i, rot * local(mesh.nodes()[node], labels[t] == flap) + shift);
            }
        }
        Ok((y, profile))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PpTermination {
    Converged,
    MaxIters,
    /// Line search found no decrease.
    Stalled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessReport {
    /// `J` after the biharmonic extension and seeding.
    pub initial_defect: f64,
    /// `J` after every accepted descent step.
    pub defect_history: Vec<f64>,
    pub final_defect: f64,
    pub energy: EnergyBreakdown,
    pub descent_steps: usize,
    /// Largest `|z|` of the field entering the descent.
    pub seed_height: f64,
    pub termination: PpTermination,
}

/// Sparse Cholesky factor of a scalar SPD matrix applied per component.
pub struct ScalarFactor {
    llt: faer::sparse::linalg::solvers::Llt<usize, f64>,
    n: usize,
}

impl ScalarFactor {
    pub fn new(m: &CsrMatrix) -> Result<Self, FlowError> {
        let llt = m
            .to_faer()
            .sp_cholesky(Side::Lower)
            .map_err(|e| FlowError::SolveFailure(format!("matrix is not positive definite: {e:?}")))?;
        Ok(Self { llt, n: m.n_rows() })
    }

    /// Solves `(M ⊗ I₃) x = b` for interleaved `b`.
    pub fn solve3(&self, b: &[f64]) -> Vec<f64> {
        let rhs = Mat::<f64>::from_fn(self.n, COMPONENTS, |i, c| b[i * COMPONENTS + c]);
        let x = self.llt.solve(&rhs);
        let mut out = vec![0.0; b.len()];
        for i in 0..self.n {
            for c in 0..COMPONENTS {
                out[i * COMPONENTS + c] = x[(i, c)];
            }
        }
        out
    }
}

/// Minimizer of `Ẽ_K(Y) + δ/2 ‖Y − id‖²_{L²}`: the discrete biharmonic
/// extension of the point data, with the identity prior selecting among the
/// affine fields the energy cannot see.
pub fn biharmonic_extension(model: &EnergyModel, delta: f64) -> Result<DgField, FlowError> {
    let space = model.space();
    let mass = space.assemble_l2_mass();
    let system = model.matrix().linear_combination(1.0, &mass, delta);
    let factor = ScalarFactor::new(&system)?;
    let id = space.interpolate(|x| Vector3::new(x.x, x.y, 0.0));
    let rhs: Vec<f64> =
        model.rhs().iter().zip(mass.mul_vec3(id.as_slice())).map(|(b, p)| b + delta * p).collect();
    // correct the identity rather than solving from zero, then refine once
    let mut y = id;
    for _ in 0..2 {
        let residual: Vec<f64> = rhs.iter().zip(system.mul_vec3(y.as_slice())).map(|(r, l)| r - l).collect();
        y = y.add_scaled(1.0, &DgField::from_vec(factor.solve3(&residual)));
    }
    Ok(y)
}

/// Armijo descent on `J = ½∫|∇Yᵀ∇Y − I|²` along `−P⁻¹∇J`.
pub fn isometry_descent(
    space: &DgSpace,
    y0: &DgField,
    precond: &ScalarFactor,
    target: f64,
    max_iters: usize,
    rule: &ArmijoRule,
) -> (DgField, Vec<f64>, PpTermination) {
    let mut y = y0.clone();
    let mut j = isometry_defect_l2(space, &y);
    let mut history = Vec::new();
    for _ in 0..max_iters {
        if j <= target {
            return (y, history, PpTermination::Converged);
        }
        let grad = isometry_defect_gradient(space, &y);
        let dir = DgField::from_vec(precond.solve3(grad.as_slice())).scaled(-1.0);
        let slope = grad.dot(&dir);
        if slope >= 0.0 {
            return (y, history, PpTermination::Stalled);
        }
        let mut step = rule.initial_step;
        let mut accepted = None;
        for _ in 0..=rule.max_backtracks {
            let trial = y.add_scaled(step, &dir);
            let jt = isometry_defect_l2(space, &trial);
            if jt <= j + rule.c * step * slope && jt < j {
                accepted = Some((trial, jt));
                break;
            }
            step *= rule.shrink;
        }
        let Some((next, jn)) = accepted else {
            return (y, history, PpTermination::Stalled);
        };
        y = next;
        j = jn;
        history.push(j);
    }
    let term = if j <= target { PpTermination::Converged } else { PpTermination::MaxIters };
    (y, history, term)
}

/// Out-of-plane start for the preprocessing. Point data that only moves
/// in-plane has an in-plane biharmonic extension, and the defect descent
/// keeps a flat field flat.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Seed {
    /// Added to the biharmonic extension.
    Arch(ArchSeed),
    /// Replaces the biharmonic extension.
    Fold(FoldSeed),
}

/// Biharmonic extension or seed, then defect descent.
pub fn preprocess(
    model: &EnergyModel,
    cfg: &FlowConfig,
    seed: Option<&Seed>,
) -> Result<(DgField, PreprocessReport), FlowError> {
    cfg.validate()?;
    let space = model.space();
    let y = match seed {
        Some(Seed::Fold(fold)) => fold.field(space)?.0,
        Some(Seed::Arch(arch)) => {
            let bump = space.interpolate(|x| Vector3::new(0.0, 0.0, cfg.pp_seed_scale * arch.height(x)));
            biharmonic_extension(model, cfg.pp_regularization)?.add_scaled(1.0, &bump)
        }
        None => biharmonic_extension(model, cfg.pp_regularization)?,
    };
    let seed_height = crate::diagnostics::max_abs_height(&y);
    let initial_defect = isometry_defect_l2(space, &y);
    let mass = space.assemble_l2_mass();
    let precond = ScalarFactor::new(&model.matrix().linear_combination(1.0, &mass, 1.0))?;
    let (y, history, termination) = isometry_descent(space, &y, &precond, cfg.eps_pp, cfg.pp_max_iters, &cfg.armijo);
    let final_defect = history.last().copied().unwrap_or(initial_defect);
    let report = PreprocessReport {
        initial_defect,
        descent_steps: history.len(),
        defect_history: history,
        final_defect,
        energy: model.energy(&y),
        seed_height,
        termination,
    };
    Ok((y, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgspace::DEFAULT_QUAD_ORDER;
    use crate::energy::EnergyParams;
    use crate::mesh::build_rect_mesh;

    fn space(h: f64) -> DgSpace {
        DgSpace::new(build_rect_mesh(1.0, 1.0, h).unwrap(), DEFAULT_QUAD_ORDER).unwrap()
    }

    #[test]
    fn zero_deformation_has_no_constraints() {
        let sp = space(0.5);
        assert_eq!(constraint_matrix(&sp, &sp.zero_field()).nnz(), 0);
    }

    #[test]
    fn shear_constraint_rows() {
        let sp = space(0.5);
        let id = sp.interpolate(|x| Vector3::new(x.x, x.y, 0.0));
        let w = sp.interpolate(|x| Vector3::new(x.y, 0.0, 0.0));
        let bw = constraint_matrix(&sp, &id).mul_vec(w.as_slice());
        for t in 0..sp.n_elements() {
            let area = sp.element_area(t);
            assert!(bw[3 * t].abs() < 1e-14 && bw[3 * t + 1].abs() < 1e-14);
            assert!((bw[3 * t + 2] - area).abs() < 1e-14);
        }
    }

    #[test]
    fn stationary_start_does_not_move() {
        let sp = space(0.5);
        let model = EnergyModel::new(&sp, EnergyParams::default(), &[]).unwrap();
        let step = flow_step(&model, &sp.zero_field(), &FlowConfig::default()).unwrap();
        assert_eq!(step.step_norm, 0.0);
        assert_eq!(step.direction.norm(), 0.0);
    }

    #[test]
    fn compression_targets() {
        let [a, b] = compression_bc(0.3, Vec2::new(0.0, 0.0), Vec2::new(9.6, 0.0)).unwrap();
        assert!((a.target - Vector3::new(1.44, 0.0, 0.0)).norm() < 1e-12);
        assert!((b.target - Vector3::new(8.16, 0.0, 0.0)).norm() < 1e-12);
        let [a, b] = compression_bc(1.0, Vec2::new(0.0, 0.0), Vec2::new(9.6, 0.0)).unwrap();
        assert_eq!(a.target, Vector3::new(4.8, 0.0, 0.0));
        assert_eq!(b.target, Vector3::new(4.8, 0.0, 0.0));
        let [a, _] = compression_bc(0.0, Vec2::new(1.0, 2.0), Vec2::new(3.0, 2.0)).unwrap();
        assert_eq!(a.target, Vector3::new(1.0, 2.0, 0.0));
        assert!(compression_bc(1.5, Vec2::zeros(), Vec2::new(1.0, 0.0)).is_err());
    }

    #[test]
    fn flat_seed_has_no_height() {
        let seed = ArchSeed { from: Vec2::new(0.0, 0.0), to: Vec2::new(2.0, 0.0), rate: 0.0 };
        assert_eq!(seed.amplitude(), 0.0);
        assert_eq!(seed.height(Vec2::new(1.0, 0.3)), 0.0);
    }
}
