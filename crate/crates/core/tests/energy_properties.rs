use nalgebra::{Rotation3, Vector3};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use thinfold::dgspace::{DgField, DgSpace, DEFAULT_QUAD_ORDER};
use thinfold::energy::{isometry_violation, EnergyModel, EnergyParams};
use thinfold::geometry::{FoldCurve, Vec2};
use thinfold::hessian::h2_seminorm_squared;
use thinfold::mesh::{build_rect_mesh, snap_to_curve, DirichletPoint, FoldMesh};

fn space_of(mesh: FoldMesh) -> DgSpace {
    DgSpace::new(mesh, DEFAULT_QUAD_ORDER).unwrap()
}

fn cylinder(x: Vec2) -> Vector3<f64> {
    Vector3::new(x.x.sin(), x.y, x.x.cos())
}

fn random_field(rng: &mut StdRng, n_el: usize) -> DgField {
    DgField::from_vec((0..n_el * 18).map(|_| rng.random_range(-1.0..1.0)).collect())
}

fn random_bc(rng: &mut StdRng, mesh: &FoldMesh, count: usize) -> Vec<DirichletPoint> {
    let verts: Vec<usize> = mesh.vertex_ids().collect();
    (0..count)
        .map(|_| {
            let v = verts[rng.random_range(0..verts.len())];
            let g = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            mesh.dirichlet_point(v, g)
        })
        .collect()
}

#[test]
fn cylinder_bending_approaches_one_over_24() {
    let sp = space_of(build_rect_mesh(1.0, 1.0, 1.0 / 16.0).unwrap());
    let model = EnergyModel::new(&sp, EnergyParams::default(), &[]).unwrap();
    let y = sp.interpolate(cylinder);
    let e = model.energy(&y);
    assert!((e.bending - 1.0 / 24.0).abs() < 0.05 / 24.0, "bending {}", e.bending);
    assert!(e.jump0 < 1e-8 && e.jump1 < 1e-4, "{e:?}");

    let curv = model.elementwise_curvature(&y);
    for (t, k) in curv.iter().enumerate() {
        let interior = sp.mesh().neighbors(t).count() == 3;
        if interior {
            assert!((k - 1.0).abs() < 0.1, "element {t}: {k}");
        }
    }
}

#[test]
fn cylinder_violation_is_fourth_order() {
    let totals: Vec<f64> = [0.25, 0.125, 0.0625]
        .iter()
        .map(|&h| {
            let sp = space_of(build_rect_mesh(1.0, 1.0, h).unwrap());
            isometry_violation(&sp, &sp.interpolate(cylinder)).1
        })
        .collect();
    for w in totals.windows(2) {
        let ratio = w[0] / w[1];
        assert!((12.0..=20.0).contains(&ratio), "ratio {ratio}, totals {totals:?}");
    }
}

#[test]
fn roof_fold_costs_nothing_on_aligned_mesh() {
    let mesh = build_rect_mesh(1.0, 1.0, 0.125).unwrap();
    let line = FoldCurve::polyline(vec![Vec2::new(0.0, 0.5), Vec2::new(1.0, 0.5)]).unwrap();
    let mesh = snap_to_curve(&mesh, &line).unwrap();
    // folded by 90 degrees about y = 1/2
    let fold = |x: Vec2| {
        if x.y <= 0.5 {
            Vector3::new(x.x, x.y, 0.0)
        } else {
            Vector3::new(x.x, 0.5, x.y - 0.5)
        }
    };
    let corners = [Vec2::new(0.0, 0.0), Vec2::new(1.0, 1.0)];
    let bc: Vec<DirichletPoint> =
        corners.iter().map(|&p| mesh.dirichlet_point(mesh.nearest_vertex(p), fold(p))).collect();
    let sp = space_of(mesh);
    let model = EnergyModel::new(&sp, EnergyParams::default(), &bc).unwrap();
    let e = model.energy(&sp.interpolate(fold));
    assert!(e.total < 1e-8, "{e:?}");
}

#[test]
fn quadratic_form_matches_direct_evaluation() {
    let mut rng = StdRng::seed_from_u64(17);
    let mesh = build_rect_mesh(9.6, 15.0, 2.5).unwrap();
    let arc = FoldCurve::circular_arc(Vec2::new(0.0, 2.0), Vec2::new(9.6, 2.0), Vec2::new(4.8, -4.0)).unwrap();
    let mesh = snap_to_curve(&mesh, &arc).unwrap();
    let sp = space_of(mesh);
    for _ in 0..5 {
        let bc = random_bc(&mut rng, sp.mesh(), 3);
        let params = EnergyParams {
            gamma0: rng.random_range(0.5..2.0),
            gamma1: rng.random_range(0.5..2.0),
            gamma2: rng.random_range(0.5..2.0),
            ..Default::default()
        };
        let model = EnergyModel::new(&sp, params, &bc).unwrap();
        assert!(model.matrix().asymmetry() < 1e-12 * (1.0 + model.matrix().iter().map(|(_, _, v)| v.abs()).fold(0.0, f64::max)));
        let y = random_field(&mut rng, sp.n_elements());
        let direct = model.energy(&y);
        let sum = direct.bending + direct.jump0 + direct.jump1 + direct.dirichlet;
        assert!((sum - direct.total).abs() <= 1e-14 * direct.total);
        let quad = model.quadratic_value(&y);
        assert!((quad - direct.total).abs() < 1e-10 * direct.total, "{quad} vs {}", direct.total);
    }
}

#[test]
fn no_boundary_data_means_no_linear_part() {
    let sp = space_of(build_rect_mesh(1.0, 1.0, 0.25).unwrap());
    let model = EnergyModel::new(&sp, EnergyParams::default(), &[]).unwrap();
    assert!(model.rhs().iter().all(|&b| b == 0.0));
    assert_eq!(model.constant(), 0.0);
    assert_eq!(model.quadratic_value(&sp.zero_field()), 0.0);
    for c in 0..3 {
        let mut v = Vector3::zeros();
        v[c] = 1.0;
        let shift = sp.interpolate(|_| v);
        assert!(model.gradient(&shift).norm() < 1e-10);
    }
}

#[test]
fn bending_and_jumps_are_frame_invariant() {
    let mut rng = StdRng::seed_from_u64(23);
    let sp = space_of(build_rect_mesh(1.0, 1.0, 0.25).unwrap());
    let model = EnergyModel::new(&sp, EnergyParams::default(), &[]).unwrap();
    let y = random_field(&mut rng, sp.n_elements());
    let rot = Rotation3::from_euler_angles(0.3, -1.1, 2.0);
    let e0 = model.energy(&y);
    let e1 = model.energy(&y.map_nodes(|v| rot * v));
    for (a, b) in [(e0.bending, e1.bending), (e0.jump0, e1.jump0), (e0.jump1, e1.jump1)] {
        assert!((a - b).abs() < 1e-12 * (1.0 + a));
    }
}

#[test]
fn energy_is_uniformly_coercive() {
    let mut rng = StdRng::seed_from_u64(29);
    let ratios: Vec<f64> = [0.5, 0.25, 0.125]
        .iter()
        .map(|&h| {
            let mesh = build_rect_mesh(1.0, 1.0, h).unwrap();
            let line = FoldCurve::polyline(vec![Vec2::new(0.0, 0.5), Vec2::new(1.0, 0.5)]).unwrap();
            let mesh = snap_to_curve(&mesh, &line).unwrap();
            let bc: Vec<DirichletPoint> = [Vec2::new(0.0, 0.0), Vec2::new(1.0, 1.0)]
                .iter()
                .map(|&p| mesh.dirichlet_point(mesh.nearest_vertex(p), Vector3::zeros()))
                .collect();
            let sp = space_of(mesh);
            let model = EnergyModel::new(&sp, EnergyParams::default(), &bc).unwrap();
            (0..5)
                .map(|_| {
                    let y = random_field(&mut rng, sp.n_elements());
                    h2_seminorm_squared(&sp, &y) / model.energy(&y).total
                })
                .fold(0.0, f64::max)
        })
        .collect();
    for w in ratios.windows(2) {
        assert!(w[1] <= w[0] * 1.05, "ratios {ratios:?}");
    }
}

#[test]
fn gradient_is_controlled_by_violation() {
    let mut rng = StdRng::seed_from_u64(31);
    let sp = space_of(build_rect_mesh(2.0, 1.0, 0.25).unwrap());
    let area = 2.0;
    for scale in [0.01, 0.3, 2.0] {
        let id = sp.interpolate(|x| Vector3::new(x.x, x.y, 0.0));
        let y = id.add_scaled(scale, &random_field(&mut rng, sp.n_elements()));
        let (_, grad_sq) = sp.elementwise_gradient_norms(&y);
        let (_, violation) = isometry_violation(&sp, &y);
        assert!(grad_sq <= 2.0 * area + 2f64.sqrt() * violation + 1e-12);
    }
}
