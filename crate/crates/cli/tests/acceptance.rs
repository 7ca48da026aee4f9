//! Acceptance suite: one PASS/FAIL line per criterion. Tolerances and
//! runtime limits are fixed below.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use thinfold::dgspace::{DgSpace, DEFAULT_QUAD_ORDER};
use thinfold::mesh::build_rect_mesh;
use thinfold_cli::config::{load_config, RunConfig};
use thinfold_cli::runner::{execute, RunOutcome};
use thinfold_cli::verify::{creased_square, cylinder, flow_report_invariants, hessian_consistency_error, lifting_residual, roof_energies};

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: String) -> Verdict {
    Verdict { passed, detail }
}

fn preset(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("presets").join(name)
}

/// Flow run of a preset with parameter overrides.
#[derive(Debug, Clone)]
struct RunStats {
    iterations: usize,
    stationary: bool,
    flap_deg: f64,
    max_curvature: f64,
    energy_monotone: bool,
    invariants: Result<(), String>,
    region_heights: Vec<f64>,
    elements: usize,
}

struct Runs {
    cache: BTreeMap<String, Result<RunStats, String>>,
}

impl Runs {
    fn get(&mut self, name: &str, params: &[(&str, f64)]) -> Result<RunStats, String> {
        let key = format!("{name}{params:?}");
        if let Some(hit) = self.cache.get(&key) {
            return hit.clone();
        }
        let started = Instant::now();
        let result = run(name, params);
        match &result {
            Ok(s) => println!(
                "      {name} {params:?}: {} iterations, flap {:.2} deg, max curvature {:.3} ({:.1} s)",
                s.iterations,
                s.flap_deg,
                s.max_curvature,
                started.elapsed().as_secs_f64()
            ),
            Err(e) => println!("      {name} {params:?}: failed: {e}"),
        }
        self.cache.insert(key, result.clone());
        result
    }
}

fn run(name: &str, params: &[(&str, f64)]) -> Result<RunStats, String> {
    let mut cfg: RunConfig = load_config(&preset(name)).map_err(|e| e.to_string())?;
    for (p, v) in params {
        cfg.set_param(p, *v).map_err(|e| e.to_string())?;
    }
    let out: RunOutcome = execute(&cfg, None).map_err(|e| e.to_string())?;
    let e0 = out.report.initial_energy();
    let labels = out.space.mesh().fold_regions();
    let n_regions = labels.iter().max().map_or(0, |m| m + 1);
    let mut region_heights = vec![0.0f64; n_regions];
    for (t, &l) in labels.iter().enumerate() {
        for a in 0..6 {
            region_heights[l] = region_heights[l].max(out.field.node(t, a).z.abs());
        }
    }
    Ok(RunStats {
        iterations: out.report.iterations,
        stationary: out.summary.termination == "stationary",
        flap_deg: out.summary.flap_angle_deg,
        max_curvature: out.summary.max_curvature,
        energy_monotone: out.report.energies.windows(2).all(|w| w[1].total <= w[0].total + 1e-10 * e0),
        invariants: flow_report_invariants(&out.report, &out.flow, &out.initial),
        region_heights,
        elements: out.summary.elements,
    })
}

fn space(mesh: thinfold::mesh::FoldMesh) -> DgSpace {
    DgSpace::new(mesh, DEFAULT_QUAD_ORDER).unwrap()
}

fn operator_identities() -> Verdict {
    let sp = space(creased_square(0.5));
    let residual = lifting_residual(&sp, 50, 2024);
    verdict(
        sp.n_elements() == 16 && residual < 1e-11,
        format!("{} elements, max residual {residual:.2e} (limit 1e-11)", sp.n_elements()),
    )
}

fn hessian_consistency() -> Verdict {
    let sp = space(build_rect_mesh(2.0, 1.0, 0.25).unwrap());
    let err = hessian_consistency_error(&sp, 20, 2025);
    verdict(sp.n_elements() == 128 && err < 1e-10, format!("{} elements, max L2 error {err:.2e} (limit 1e-10)", sp.n_elements()))
}

fn fold_transparency() -> Verdict {
    let (tagged, plain) = roof_energies(0.125);
    let cost = tagged.bending + tagged.jump0 + tagged.jump1;
    verdict(
        cost < 1e-8 && plain.bending > 0.1,
        format!("tagged bending+jumps {cost:.2e} (limit 1e-8), untagged bending {:.3} (needs > 0.1)", plain.bending),
    )
}

fn cylinder_energy() -> Verdict {
    let runs: Vec<_> = [8.0, 16.0, 32.0].iter().map(|n| cylinder(1.0 / n)).collect();
    let energy = runs[2].0.total;
    let rel = (energy * 24.0 - 1.0).abs();
    let ratios: Vec<f64> = runs.windows(2).map(|w| w[0].1 / w[1].1).collect();
    verdict(
        rel < 0.05 && ratios.iter().all(|&r| r >= 12.0),
        format!("energy {energy:.6} at h=1/32, off by {:.2}% (limit 5%), violation ratios {ratios:.2?} (need >= 12)", 100.0 * rel),
    )
}

fn flow_invariants(runs: &mut Runs) -> Verdict {
    match runs.get("arc_parabola.cfg", &[("s", 0.2)]) {
        Ok(s) => verdict(
            s.invariants.is_ok(),
            match &s.invariants {
                Ok(()) => format!("{} elements, decay, telescoping and violation bound hold every step", s.elements),
                Err(e) => e.clone(),
            },
        ),
        Err(e) => verdict(false, e),
    }
}

fn parabola_sweep(runs: &mut Runs) -> Verdict {
    let rates = [0.0, 0.1, 0.2, 0.3];
    let reference = [0.0, 5.0, 10.0, 15.0];
    let stats: Result<Vec<RunStats>, String> = rates.iter().map(|&s| runs.get("arc_parabola.cfg", &[("s", s)])).collect();
    let stats = match stats {
        Ok(s) => s,
        Err(e) => return verdict(false, e),
    };
    let counts: Vec<usize> = stats.iter().map(|s| s.iterations).collect();
    let flaps: Vec<f64> = stats.iter().map(|s| s.flap_deg).collect();
    let in_window = counts[0] == 0
        && counts[1..].iter().zip(&reference[1..]).all(|(&c, &r)| (r / 3.0..=3.0 * r).contains(&(c as f64)));
    let monotone = counts.windows(2).all(|w| w[0] <= w[1]);
    let flap_increasing = flaps.windows(2).all(|w| w[0] < w[1]);
    let stationary = stats.iter().all(|s| s.stationary);
    verdict(
        in_window && monotone && flap_increasing && stationary,
        format!(
            "iterations {counts:?} (window: 0, then within 3x of 5/10/15: {}), monotone {monotone}, flap angles {flaps:.2?} increasing {flap_increasing}",
            if in_window { "yes" } else { "no" }
        ),
    )
}

fn arc_approximation(runs: &mut Runs) -> Verdict {
    let curved = runs.get("arc_circle.cfg", &[("s", 0.2)]);
    let poly = runs.get("arc_circle_polyline.cfg", &[("s", 0.2)]);
    let (curved, poly) = match (curved, poly) {
        (Ok(c), Ok(p)) => (c, p),
        (Err(e), _) | (_, Err(e)) => return verdict(false, e),
    };
    let ratio = poly.max_curvature / curved.max_curvature;
    let flap_diff = (poly.flap_deg - curved.flap_deg).abs() / curved.flap_deg;
    verdict(
        ratio > 1.5 && flap_diff < 0.2,
        format!(
            "max curvature {:.3} polyline / {:.3} curved = {ratio:.2} (needs > 1.5), flap angles {:.2} / {:.2} deg differ by {:.1}% (limit 20%)",
            poly.max_curvature,
            curved.max_curvature,
            poly.flap_deg,
            curved.flap_deg,
            100.0 * flap_diff
        ),
    )
}

fn stabilization(runs: &mut Runs) -> Verdict {
    let gammas = [0.5, 1.0, 2.0];
    let mut flaps = Vec::new();
    for &g0 in &gammas {
        for &g1 in &gammas {
            match runs.get("arc_parabola.cfg", &[("s", 0.2), ("gamma0", g0), ("gamma1", g1)]) {
                Ok(s) => flaps.push(s.flap_deg),
                Err(e) => return verdict(false, e),
            }
        }
    }
    let reference = flaps[4];
    let lo = flaps.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = flaps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let spread = (hi - lo) / reference;
    verdict(spread < 0.15, format!("flap angles {flaps:.2?} deg, spread {:.1}% of the (1,1) value (limit 15%)", 100.0 * spread))
}

fn flower(runs: &mut Runs) -> Verdict {
    let s = match runs.get("flower.cfg", &[]) {
        Ok(s) => s,
        Err(e) => return verdict(false, e),
    };
    let limit = 0.05 * 16.0;
    let lifted = s.region_heights.len() == 4 && s.region_heights.iter().all(|&z| z > limit);
    verdict(
        s.elements == 1904 && s.stationary && s.energy_monotone && lifted,
        format!(
            "{} elements, stopped by tolerance {}, monotone energy {}, region max |z| {:.2?} (need > {limit})",
            s.elements, s.stationary, s.energy_monotone, s.region_heights
        ),
    )
}

fn main() -> ExitCode {
    let mut runs = Runs { cache: BTreeMap::new() };
    type Check<'a> = Box<dyn FnMut(&mut Runs) -> Verdict + 'a>;
    let criteria: Vec<(&str, Duration, Check)> = vec![
        ("operator identities", Duration::from_secs(10), Box::new(|_| operator_identities())),
        ("hessian consistency", Duration::from_secs(10), Box::new(|_| hessian_consistency())),
        ("fold transparency", Duration::from_secs(10), Box::new(|_| fold_transparency())),
        ("cylinder energy", Duration::from_secs(60), Box::new(|_| cylinder_energy())),
        ("flow invariants", Duration::from_secs(300), Box::new(flow_invariants)),
        ("run reproduction", Duration::from_secs(900), Box::new(parabola_sweep)),
        ("arc approximation", Duration::from_secs(900), Box::new(arc_approximation)),
        ("stabilization robustness", Duration::from_secs(1800), Box::new(stabilization)),
        ("flower", Duration::from_secs(1800), Box::new(flower)),
    ];
    let mut failed = 0;
    for (k, (name, limit, mut check)) in criteria.into_iter().enumerate() {
        let started = Instant::now();
        let v = check(&mut runs);
        let elapsed = started.elapsed();
        let passed = v.passed && elapsed <= limit;
        failed += usize::from(!passed);
        println!(
            "{} {} {name}: {} [{:.1} s, limit {} s]",
            if passed { "PASS" } else { "FAIL" },
            k + 1,
            v.detail,
            elapsed.as_secs_f64(),
            limit.as_secs()
        );
    }
    println!("acceptance: {} of 9 criteria passed", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
