use nalgebra::{DMatrix, DVector, Matrix2, Vector2, Vector3};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use thinfold::dgspace::{DgField, DgSpace, DEFAULT_QUAD_ORDER};
use thinfold::geometry::{FoldCurve, Vec2};
use thinfold::hessian::{
    discrete_hessian, gradient_jump_functional, h2_seminorm_squared, lift_gradient_jump, lift_value_jump,
    value_jump_functional, HessianError, HessianOperator,
};
use thinfold::mesh::element::NODES;
use thinfold::mesh::{build_rect_mesh, snap_to_curve, FoldMesh};

fn space_of(mesh: FoldMesh) -> DgSpace {
    DgSpace::new(mesh, DEFAULT_QUAD_ORDER).unwrap()
}

fn folded_square(h: f64) -> FoldMesh {
    let mesh = build_rect_mesh(1.0, 1.0, h).unwrap();
    let line = FoldCurve::polyline(vec![Vec2::new(0.0, 0.5), Vec2::new(1.0, 0.5)]).unwrap();
    snap_to_curve(&mesh, &line).unwrap()
}

fn roof(pitch: f64) -> impl Fn(Vec2) -> Vector3<f64> {
    move |x| Vector3::new(x.x, x.y, pitch * (x.y - 0.5).abs())
}

fn random_field(rng: &mut StdRng, n_el: usize) -> DgField {
    DgField::from_vec((0..n_el * 18).map(|_| rng.random_range(-1.0..1.0)).collect())
}

fn random_patch(rng: &mut StdRng) -> [[Matrix2<f64>; NODES]; 2] {
    let mut out = [[Matrix2::zeros(); NODES]; 2];
    for side in out.iter_mut() {
        for m in side.iter_mut() {
            *m = Matrix2::from_fn(|_, _| rng.random_range(-1.0..1.0));
        }
    }
    out
}

#[test]
fn value_lifting_matches_dense_patch_solve() {
    let sp = space_of(build_rect_mesh(1.0, 1.0, 0.5).unwrap());
    let e = sp.mesh().edges().iter().position(|e| e.is_interior()).unwrap();
    let edge = &sp.mesh().edges()[e];
    let elements = [edge.left.element, edge.right.unwrap().element];
    let lifted = lift_value_jump(&sp, e, |_| 1.0).unwrap();

    // basis index: ((side * 6 + a) * 2 + i) * 2 + j
    let n = 2 * NODES * 4;
    let unit = |k: usize| {
        let mut f = [[Matrix2::zeros(); NODES]; 2];
        let (side, a, i, j) = (k / 24, (k / 4) % 6, (k / 2) % 2, k % 2);
        f[side][a][(i, j)] = 1.0;
        f
    };
    let mut gram = DMatrix::zeros(n, n);
    let mut rhs = DVector::zeros(n);
    for k in 0..n {
        let fk = unit(k);
        rhs[k] = value_jump_functional(&sp, e, |_| 1.0, &fk);
        for l in 0..n {
            let fl = unit(l);
            let mut g = 0.0;
            for side in 0..2 {
                for qp in sp.quad_points(elements[side]) {
                    let a: Matrix2<f64> = (0..NODES).map(|a| qp.basis.values[a] * fk[side][a]).sum();
                    let b: Matrix2<f64> = (0..NODES).map(|a| qp.basis.values[a] * fl[side][a]).sum();
                    g += qp.jxw * a.component_mul(&b).sum();
                }
            }
            gram[(k, l)] = g;
        }
    }
    let x = gram.lu().solve(&rhs).unwrap();
    for k in 0..n {
        let (side, a, i, j) = (k / 24, (k / 4) % 6, (k / 2) % 2, k % 2);
        assert!((lifted.coeffs[side][a][(i, j)] - x[k]).abs() < 1e-12, "coefficient {k}");
    }
}

#[test]
fn lifting_adjoint_identities() {
    let sp = space_of(folded_square(0.25));
    let mut rng = StdRng::seed_from_u64(7);
    for (e, edge) in sp.mesh().edges().iter().enumerate() {
        if !edge.is_interior() {
            continue;
        }
        let fold = edge.tag == thinfold::mesh::EdgeTag::Fold;
        for _ in 0..5 {
            let c: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            let v = move |s: f64| c[0] + c[1] * s + c[2] * s * s;
            let w = move |s: f64| Vector2::new(c[0] - s, c[2] * s + c[1]);
            let s_e = lift_value_jump(&sp, e, v).unwrap();
            let r_e = lift_gradient_jump(&sp, e, w);
            if fold {
                assert_eq!(r_e.clone().unwrap_err(), HessianError::ExcludedEdge(e));
            }
            for _ in 0..10 {
                let phi = random_patch(&mut rng);
                let res = s_e.pair(&sp, &phi) - value_jump_functional(&sp, e, v, &phi);
                assert!(res.abs() < 1e-11, "s_e residual {res} on edge {e}");
                if let Ok(r) = &r_e {
                    let res = r.pair(&sp, &phi) - gradient_jump_functional(&sp, e, w, &phi);
                    assert!(res.abs() < 1e-11, "r_e residual {res} on edge {e}");
                }
            }
        }
    }
}

#[test]
fn roof_fold_is_invisible_on_tagged_mesh() {
    let sp = space_of(folded_square(0.125));
    let y = sp.interpolate(roof(1.0));
    let h = discrete_hessian(&sp, &y).unwrap();
    assert!(h.l2_norm_squared(&sp).sqrt() < 1e-10);

    let steep = discrete_hessian(&sp, &sp.interpolate(roof(10.0))).unwrap();
    assert!((steep.l2_norm_squared(&sp).sqrt() - h.l2_norm_squared(&sp).sqrt()).abs() < 1e-10);
}

#[test]
fn untagged_roof_hessian_grows_under_refinement() {
    let norms: Vec<f64> = [0.25, 0.125, 0.0625]
        .iter()
        .map(|&h| {
            let sp = space_of(build_rect_mesh(1.0, 1.0, h).unwrap());
            discrete_hessian(&sp, &sp.interpolate(roof(1.0))).unwrap().l2_norm_squared(&sp).sqrt()
        })
        .collect();
    for w in norms.windows(2) {
        let ratio = w[1] / w[0];
        // ‖H̃‖ ~ h^{-1/2}
        assert!((ratio - 2f64.sqrt()).abs() < 0.1, "ratio {ratio}, norms {norms:?}");
    }
}

#[test]
fn hessian_is_linear_and_local() {
    let sp = space_of(folded_square(0.25));
    let op = HessianOperator::new(&sp).unwrap();
    let mut rng = StdRng::seed_from_u64(3);
    let n = sp.n_elements();
    let (u, v) = (random_field(&mut rng, n), random_field(&mut rng, n));
    let (a, b) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
    let lhs = op.apply(&u.scaled(a).add_scaled(b, &v));
    let (hu, hv) = (op.apply(&u), op.apply(&v));
    for ((l, x), y) in lhs.as_slice().iter().zip(hu.as_slice()).zip(hv.as_slice()) {
        assert!((l - (a * x + b * y)).abs() < 1e-12 * (1.0 + l.abs()));
    }

    let t0 = n / 2;
    let mut bumped = u.clone();
    bumped.set_node(t0, 2, u.node(t0, 2) + Vector3::new(1.0, -2.0, 0.5));
    let hb = op.apply(&bumped);
    let patch: Vec<usize> = std::iter::once(t0).chain(sp.mesh().neighbors(t0)).collect();
    for t in 0..n {
        let changed = (0..NODES).any(|a| (0..3).any(|c| (hb.node(t, a, c) - hu.node(t, a, c)).norm() > 0.0));
        assert!(!changed || patch.contains(&t), "element {t}");
        assert!(changed || t != t0);
    }
}

#[test]
fn constant_test_field_consistency() {
    // ∫ H̃(V) : C = Σ_∂S ∫ ∇V·C n + Σ_fold ∫ ⟦∇V⟧·C μ for constant C
    let mesh = build_rect_mesh(9.6, 15.0, 1.07).unwrap();
    let arc = FoldCurve::parabolic(Vec2::new(0.0, 2.0), Vec2::new(9.6, 2.0), Vec2::new(4.8, 6.0)).unwrap();
    let sp = space_of(snap_to_curve(&mesh, &arc).unwrap());
    let mut rng = StdRng::seed_from_u64(11);
    let y = random_field(&mut rng, sp.n_elements());
    let h = discrete_hessian(&sp, &y).unwrap();
    let cmat = Matrix2::new(0.3, -1.2, 0.7, 2.0);
    for comp in 0..3 {
        let lhs: f64 = (0..sp.n_elements())
            .map(|t| {
                sp.quad_points(t).iter().map(|qp| qp.jxw * h.eval(t, comp, &qp.basis).component_mul(&cmat).sum()).sum::<f64>()
            })
            .sum();
        let mut rhs = 0.0;
        for (e, edge) in sp.mesh().edges().iter().enumerate() {
            let fold = edge.tag == thinfold::mesh::EdgeTag::Fold;
            if edge.is_interior() && !fold {
                continue;
            }
            for p in sp.edge_points(e) {
                let gl = sp.combine(&y, edge.left.element, &p.left).1.row(comp).transpose();
                let g = match (&p.right, edge.right) {
                    (Some(rb), Some(r)) => gl - sp.combine(&y, r.element, rb).1.row(comp).transpose(),
                    _ => gl,
                };
                rhs += p.ds * g.dot(&(cmat * p.normal));
            }
        }
        assert!((lhs - rhs).abs() < 1e-9 * (1.0 + rhs.abs()), "component {comp}: {lhs} vs {rhs}");
    }
}

#[test]
fn hessian_is_bounded_by_seminorm() {
    let mut rng = StdRng::seed_from_u64(5);
    let ratios: Vec<f64> = [0.5, 0.25, 0.125]
        .iter()
        .map(|&h| {
            let sp = space_of(folded_square(h));
            let op = HessianOperator::new(&sp).unwrap();
            (0..5)
                .map(|_| {
                    let y = random_field(&mut rng, sp.n_elements());
                    (op.apply(&y).l2_norm_squared(&sp) / h2_seminorm_squared(&sp, &y)).sqrt()
                })
                .fold(0.0, f64::max)
        })
        .collect();
    for w in ratios.windows(2) {
        assert!(w[1] <= w[0] * 1.05, "ratios {ratios:?}");
    }
}
