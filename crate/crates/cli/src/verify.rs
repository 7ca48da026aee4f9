//! Property checks on small built-in cases. The `verify` subcommand runs
//! [`builtin_suite`]; the acceptance tests reuse the individual checks at
//! full size.

use nalgebra::{Matrix2, Vector2, Vector3};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use thinfold::dgspace::{DgField, DgSpace, DEFAULT_QUAD_ORDER};
use thinfold::energy::{isometry_violation, EnergyBreakdown, EnergyModel, EnergyParams};
use thinfold::flow::{compression_bc, preprocess, run_flow, FlowConfig, FlowReport, FoldSeed, Seed};
use thinfold::geometry::{FoldCurve, Vec2};
use thinfold::hessian::{
    discrete_hessian, gradient_jump_functional, lift_gradient_jump, lift_value_jump, value_jump_functional,
};
use thinfold::mesh::element::NODES;
use thinfold::mesh::{build_rect_mesh, snap_to_curve, EdgeTag, FoldMesh};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn space_of(mesh: FoldMesh) -> DgSpace {
    DgSpace::new(mesh, DEFAULT_QUAD_ORDER).expect("built-in mesh is valid")
}

/// Unit square with a straight crease at `y = 1/2`.
pub fn creased_square(h: f64) -> FoldMesh {
    let mesh = build_rect_mesh(1.0, 1.0, h).expect("valid size");
    let line = FoldCurve::polyline(vec![Vec2::new(0.0, 0.5), Vec2::new(1.0, 0.5)]).expect("valid line");
    snap_to_curve(&mesh, &line).expect("line follows grid edges")
}

fn random_patch(rng: &mut StdRng) -> [[Matrix2<f64>; NODES]; 2] {
    std::array::from_fn(|_| std::array::from_fn(|_| Matrix2::from_fn(|_, _| rng.random_range(-1.0..1.0))))
}

/// Largest residual of the two lifting identities over all interior edges,
/// `pairs` random (edge data, test field) pairs per edge. Fold edges only
/// check the value lifting.
pub fn lifting_residual(space: &DgSpace, pairs: usize, seed: u64) -> f64 {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for (e, edge) in space.mesh().edges().iter().enumerate() {
        if !edge.is_interior() {
            continue;
        }
        for _ in 0..pairs {
            let c: [f64; 6] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            let v = move |s: f64| c[0] + c[1] * s + c[2] * s * s;
            let w = move |s: f64| Vector2::new(c[3] + c[4] * s, c[5] * s * s - c[0]);
            let phi = random_patch(&mut rng);
            let s_e = lift_value_jump(space, e, v).expect("interior edge");
            worst = worst.max((s_e.pair(space, &phi) - value_jump_functional(space, e, v, &phi)).abs());
            if edge.tag != EdgeTag::Fold {
                let r_e = lift_gradient_jump(space, e, w).expect("non-fold edge");
                worst = worst.max((r_e.pair(space, &phi) - gradient_jump_functional(space, e, w, &phi)).abs());
            }
        }
    }
    worst
}

/// Largest `‖H̃(q) − D²q‖_{L²}` over `count` random vector-valued quadratics.
pub fn hessian_consistency_error(space: &DgSpace, count: usize, seed: u64) -> f64 {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let coeffs: [[f64; 6]; 3] = std::array::from_fn(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0)));
        let q = |x: Vec2| {
            Vector3::from_fn(|c, _| {
                let k = &coeffs[c];
                k[0] + k[1] * x.x + k[2] * x.y + 0.5 * k[3] * x.x * x.x + k[4] * x.x * x.y + 0.5 * k[5] * x.y * x.y
            })
        };
        let exact: [Matrix2<f64>; 3] = std::array::from_fn(|c| {
            let k = &coeffs[c];
            Matrix2::new(k[3], k[4], k[4], k[5])
        });
        let h = discrete_hessian(space, &space.interpolate(q)).expect("valid space");
        let mut err = 0.0;
        for t in 0..space.n_elements() {
            for qp in space.quad_points(t) {
                for (c, ex) in exact.iter().enumerate() {
                    err += qp.jxw * (h.eval(t, c, &qp.basis) - ex).norm_squared();
                }
            }
        }
        worst = worst.max(err.sqrt());
    }
    worst
}

/// Sheet bent up by 90° along `y = 1/2`.
pub fn right_angle_fold(x: Vec2) -> Vector3<f64> {
    if x.y <= 0.5 {
        Vector3::new(x.x, x.y, 0.0)
    } else {
        Vector3::new(x.x, 0.5, x.y - 0.5)
    }
}

/// Energy of [`right_angle_fold`] with and without the crease tagged.
pub fn roof_energies(h: f64) -> (EnergyBreakdown, EnergyBreakdown) {
    let energy = |mesh: FoldMesh| {
        let sp = space_of(mesh);
        let model = EnergyModel::new(&sp, EnergyParams::default(), &[]).expect("no boundary data");
        model.energy(&sp.interpolate(right_angle_fold))
    };
    (energy(creased_square(h)), energy(build_rect_mesh(1.0, 1.0, h).expect("valid size")))
}

pub fn unit_cylinder(x: Vec2) -> Vector3<f64> {
    Vector3::new(x.x.sin(), x.y, x.x.cos())
}

/// Energy and isometry violation of the interpolated unit cylinder on the
/// unit square.
pub fn cylinder(h: f64) -> (EnergyBreakdown, f64) {
    let sp = space_of(build_rect_mesh(1.0, 1.0, h).expect("valid size"));
    let model = EnergyModel::new(&sp, EnergyParams::default(), &[]).expect("no boundary data");
    let y = sp.interpolate(unit_cylinder);
    (model.energy(&y), isometry_violation(&sp, &y).1)
}

/// Checks the per-step identities recorded in a flow report. Returns the
/// first failure.
pub fn flow_report_invariants(report: &FlowReport, cfg: &FlowConfig, y0: &DgField) -> Result<(), String> {
    if let Some((k, r)) = report.decay_residuals.iter().enumerate().find(|(_, r)| **r > 1e-9) {
        return Err(format!("energy decay identity off by {r:.3e} at step {}", k + 1));
    }
    let tol = 1e-8 * (1.0 + y0.norm());
    if let Some((k, r)) = report.telescoping_residuals.iter().enumerate().find(|(_, r)| **r > tol) {
        return Err(format!("telescoping identity off by {r:.3e} at step {}", k + 1));
    }
    let bound = report.violation_bound(cfg.tau);
    if report.final_violation() > bound * (1.0 + 1e-12) {
        return Err(format!("final violation {:.3e} exceeds bound {bound:.3e}", report.final_violation()));
    }
    if bound <= cfg.rho_tilde {
        if let Some(v) = report.violations.iter().find(|v| **v > cfg.rho_tilde) {
            return Err(format!("violation {v:.3e} left the admissible set {:.3e}", cfg.rho_tilde));
        }
    }
    let dissipated: f64 = report.step_norms.iter().map(|n| cfg.tau * n * n).sum();
    if dissipated > report.initial_energy() * (1.0 + 1e-9) {
        return Err(format!("dissipation {dissipated:.6e} exceeds initial energy {:.6e}", report.initial_energy()));
    }
    if report.step_norms.len() >= 2 && report.step_norms.last() >= report.step_norms.first() {
        return Err("step norms did not decrease".into());
    }
    if report.energies.windows(2).any(|w| w[1].total > w[0].total + 1e-10 * report.initial_energy()) {
        return Err("energy increased".into());
    }
    Ok(())
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

/// Small versions of the operator, energy and flow properties.
pub fn builtin_suite() -> Vec<Check> {
    let mut out = Vec::new();

    let lift = lifting_residual(&space_of(creased_square(0.5)), 10, 1);
    out.push(check("lifting identities", lift < 1e-11, format!("max residual {lift:.3e}")));

    let hess = hessian_consistency_error(&space_of(build_rect_mesh(1.0, 1.0, 0.25).unwrap()), 5, 2);
    out.push(check("hessian of quadratics", hess < 1e-10, format!("max L2 error {hess:.3e}")));

    let (tagged, plain) = roof_energies(0.25);
    let fold_cost = tagged.bending + tagged.jump0 + tagged.jump1;
    out.push(check(
        "fold transparency",
        fold_cost < 1e-8 && plain.bending > 0.1,
        format!("tagged {fold_cost:.3e}, untagged bending {:.3e}", plain.bending),
    ));

    let (e, v1) = cylinder(1.0 / 8.0);
    let (_, v2) = cylinder(1.0 / 16.0);
    out.push(check(
        "cylinder energy",
        (e.total * 24.0 - 1.0).abs() < 0.1 && v1 / v2 >= 12.0,
        format!("energy {:.5} (1/24 = {:.5}), violation ratio {:.2}", e.total, 1.0 / 24.0, v1 / v2),
    ));

    out.push(small_flow_check());
    out
}

fn small_flow_check() -> Check {
    let run = || -> Result<String, String> {
        let mesh = build_rect_mesh(4.0, 3.0, 0.5).map_err(|e| e.to_string())?;
        let arc = FoldCurve::parabolic(Vec2::new(0.0, 1.0), Vec2::new(4.0, 1.0), Vec2::new(2.0, 2.0))
            .map_err(|e| e.to_string())?;
        let mesh = snap_to_curve(&mesh, &arc).map_err(|e| e.to_string())?;
        let (from, to, s) = (Vec2::new(0.0, 0.0), Vec2::new(4.0, 0.0), 0.2);
        let bc: Vec<_> = compression_bc(s, from, to)
            .map_err(|e| e.to_string())?
            .iter()
            .map(|p| mesh.dirichlet_point(mesh.nearest_vertex(p.point), p.target))
            .collect();
        let sp = space_of(mesh);
        let model = EnergyModel::new(&sp, EnergyParams::default(), &bc).map_err(|e| e.to_string())?;
        let cfg = FlowConfig { rho_tilde: 10.0, eps_pp: 0.05, max_iters: 20, ..Default::default() };
        let seed = Seed::Fold(FoldSeed { from, to, rate: s });
        let (y0, _) = preprocess(&model, &cfg, Some(&seed)).map_err(|e| e.to_string())?;
        let (_, report) = run_flow(&model, &y0, &cfg).map_err(|e| e.to_string())?;
        flow_report_invariants(&report, &cfg, &y0)?;
        Ok(format!("{} steps, energy {:.4} -> {:.4}", report.steps_taken, report.initial_energy(), report.final_energy().total))
    };
    match run() {
        Ok(detail) => check("flow invariants", true, detail),
        Err(detail) => check("flow invariants", false, detail),
    }
}
