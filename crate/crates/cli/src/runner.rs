//! Turns a [`RunConfig`] into a mesh, boundary data, a seed and a flow run,
//! and writes the run's artifacts.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::Serialize;
use thiserror::Error;

use thinfold::dgspace::{DgError, DgField, DgSpace};
use thinfold::diagnostics::{flap_angle, max_abs_height};
use thinfold::energy::{EnergyBreakdown, EnergyError, EnergyModel, EnergyParams};
use thinfold::flow::{
    compression_bc, preprocess, run_flow_with, ArchSeed, FlowConfig, FlowError, FlowReport, FoldSeed, PreprocessReport,
    Seed, Termination,
};
use thinfold::geometry::{FoldCurve, GeometryError, Vec2};
use thinfold::mesh::{build_rect_mesh, polyline_snap, snap_to_curve, DirichletPoint, FoldMesh, MeshError};

use crate::config::{ConfigError, CurveKind, CurveSpec, OutputFormat, RunConfig, SeedKind, SnapMode};
use crate::csvlog::CsvLog;
use crate::meshio::{load_mesh, MeshFileError};
use crate::vtk::write_vtk;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    MeshFile(#[from] MeshFileError),
    #[error("mesh: {0}")]
    Mesh(#[from] MeshError),
    #[error("curve: {0}")]
    Geometry(#[from] GeometryError),
    #[error("space: {0}")]
    Space(#[from] DgError),
    #[error("energy: {0}")]
    Energy(#[from] EnergyError),
    #[error("flow: {0}")]
    Flow(#[from] FlowError),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot write log: {0}")]
    Csv(#[from] csv::Error),
}

impl RunError {
    /// Short category for machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            RunError::Config(_) => "config",
            RunError::MeshFile(_) | RunError::Mesh(_) | RunError::Geometry(_) => "mesh",
            RunError::Space(_) | RunError::Energy(_) => "model",
            RunError::Flow(_) => "flow",
            RunError::Io { .. } | RunError::Csv(_) => "io",
        }
    }
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io { path: path.to_path_buf(), source }
}

fn vec2(p: [f64; 2]) -> Vec2 {
    Vec2::new(p[0], p[1])
}

pub fn build_curve(spec: &CurveSpec) -> Result<FoldCurve, GeometryError> {
    let p: Vec<Vec2> = spec.points.iter().copied().map(vec2).collect();
    let curve = match spec.kind {
        CurveKind::Parabolic => FoldCurve::parabolic(p[0], p[1], p[2])?,
        CurveKind::Circular => FoldCurve::circular_arc(p[0], p[1], p[2])?,
        CurveKind::Bezier => FoldCurve::cubic_bezier(p[0], p[1], p[2], p[3])?,
        CurveKind::Polyline => FoldCurve::polyline(p)?,
    };
    if spec.segments > 0 {
        curve.polyline_approximation(spec.segments)
    } else {
        Ok(curve)
    }
}

/// Mesh of the configured domain with every curve snapped in.
pub fn build_mesh(cfg: &RunConfig) -> Result<FoldMesh, RunError> {
    let mut mesh = match (&cfg.domain.rectangle, &cfg.domain.mesh) {
        (Some(r), _) => build_rect_mesh(r.width, r.height, r.h)?,
        (None, Some(path)) => load_mesh(path)?,
        (None, None) => unreachable!("validated config has a domain"),
    };
    for spec in &cfg.curves {
        let curve = build_curve(spec)?;
        mesh = match spec.snap {
            SnapMode::Curved => snap_to_curve(&mesh, &curve)?,
            SnapMode::Polyline => polyline_snap(&mesh, &curve)?,
        };
    }
    Ok(mesh)
}

/// Point conditions from the config; the mesh's own conditions when the
/// config has none.
pub fn build_bc(cfg: &RunConfig, mesh: &FoldMesh) -> Result<Vec<DirichletPoint>, RunError> {
    let mut bc = Vec::new();
    if let Some(c) = &cfg.bc.compression {
        for p in compression_bc(c.s, vec2(c.xd), vec2(c.xd2))? {
            bc.push(mesh.dirichlet_point(mesh.nearest_vertex(p.point), p.target));
        }
    }
    for p in &cfg.bc.points {
        let target = Vector3::new(p.target[0], p.target[1], p.target[2]);
        bc.push(mesh.dirichlet_point(mesh.nearest_vertex(vec2(p.at)), target));
    }
    if bc.is_empty() {
        bc = mesh.dirichlet().to_vec();
    }
    Ok(bc)
}

pub fn choose_seed(cfg: &RunConfig, mesh: &FoldMesh) -> Option<Seed> {
    let c = cfg.bc.compression.as_ref()?;
    let (from, to, rate) = (vec2(c.xd), vec2(c.xd2), c.s);
    let two_regions = || mesh.fold_regions().iter().max() == Some(&1);
    match cfg.flow.seed {
        SeedKind::None => None,
        SeedKind::Fold => Some(Seed::Fold(FoldSeed { from, to, rate })),
        SeedKind::Arch => Some(Seed::Arch(ArchSeed { from, to, rate })),
        SeedKind::Auto if two_regions() => Some(Seed::Fold(FoldSeed { from, to, rate })),
        SeedKind::Auto => Some(Seed::Arch(ArchSeed { from, to, rate })),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub elements: usize,
    pub area: f64,
    pub seed: String,
    pub rho_tilde: f64,
    pub preprocess_steps: usize,
    pub preprocess_defect: f64,
    pub iterations: usize,
    pub steps_taken: usize,
    pub termination: String,
    pub initial_energy: f64,
    pub final_energy: Energy,
    pub initial_violation: f64,
    pub final_violation: f64,
    pub violation_bound: f64,
    pub c_star: f64,
    pub flap_angle_deg: f64,
    pub max_abs_height: f64,
    pub max_curvature: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Energy {
    pub bending: f64,
    pub jump0: f64,
    pub jump1: f64,
    pub dirichlet: f64,
    pub total: f64,
}

impl From<&EnergyBreakdown> for Energy {
    fn from(e: &EnergyBreakdown) -> Self {
        Self { bending: e.bending, jump0: e.jump0, jump1: e.jump1, dirichlet: e.dirichlet, total: e.total }
    }
}

impl RunSummary {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("summary serializes")
    }
}

/// Everything a finished run produced.
pub struct RunOutcome {
    pub space: DgSpace,
    pub initial: DgField,
    pub field: DgField,
    pub curvature: Vec<f64>,
    pub preprocess: PreprocessReport,
    pub report: FlowReport,
    pub flow: FlowConfig,
    pub summary: RunSummary,
}

/// Runs the configured experiment. With `out` set, writes
/// `resolved.toml`, `log.csv`, `final.vtk`, snapshots and `summary.toml`
/// there.
pub fn execute(cfg: &RunConfig, out: Option<&Path>) -> Result<RunOutcome, RunError> {
    cfg.validate()?;
    let mesh = build_mesh(cfg)?;
    let bc = build_bc(cfg, &mesh)?;
    let seed = choose_seed(cfg, &mesh);
    let flow = cfg.flow.to_flow_config(mesh.area());
    let params = EnergyParams::from(cfg.energy);
    let space = DgSpace::new(mesh, params.quad_order)?;
    let model = EnergyModel::new(&space, params, &bc)?;

    let wants = |f: OutputFormat| out.is_some() && cfg.output.formats.contains(&f);
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(io_error(dir))?;
        let path = dir.join("resolved.toml");
        std::fs::write(&path, cfg.resolved_dump()).map_err(io_error(&path))?;
    }

    let (initial, pp) = preprocess(&model, &flow, seed.as_ref())?;

    let mut log = match out {
        Some(dir) if wants(OutputFormat::Csv) => {
            let path = dir.join("log.csv");
            Some(CsvLog::new(BufWriter::new(File::create(&path).map_err(io_error(&path))?)))
        }
        _ => None,
    };
    let stride = cfg.output.snapshot_stride;
    let mut deferred: Option<RunError> = None;
    let (field, report) = run_flow_with(&model, &initial, &flow, |rec, y| {
        if deferred.is_some() {
            return;
        }
        if let Some(log) = log.as_mut() {
            if let Err(e) = log.record(rec) {
                deferred = Some(e.into());
            }
        }
        if let (Some(dir), true) = (out, stride > 0 && rec.iter % stride == 0 && wants(OutputFormat::Vtk)) {
            let path = dir.join(format!("snapshot_{:05}.vtk", rec.iter));
            let title = format!("thinfold step {}", rec.iter);
            if let Err(e) = write_vtk(&space, y, &model.elementwise_curvature(y), &title, &path) {
                deferred = Some(RunError::Io { path, source: e });
            }
        }
    })?;
    if let Some(e) = deferred {
        return Err(e);
    }
    if let Some(log) = log {
        log.finish()?;
    }

    let curvature = model.elementwise_curvature(&field);
    let seed_name = match seed {
        None => "none",
        Some(Seed::Arch(_)) => "arch",
        Some(Seed::Fold(_)) => "fold",
    };
    let summary = RunSummary {
        elements: space.n_elements(),
        area: space.mesh().area(),
        seed: seed_name.into(),
        rho_tilde: flow.rho_tilde,
        preprocess_steps: pp.descent_steps,
        preprocess_defect: pp.final_defect,
        iterations: report.iterations,
        steps_taken: report.steps_taken,
        termination: match report.termination {
            Termination::Stationary => "stationary".into(),
            Termination::MaxIters => "max_iters".into(),
        },
        initial_energy: report.initial_energy(),
        final_energy: report.final_energy().into(),
        initial_violation: report.initial_violation,
        final_violation: report.final_violation(),
        violation_bound: report.violation_bound(flow.tau),
        c_star: report.c_star,
        flap_angle_deg: flap_angle(&space, &field).to_degrees(),
        max_abs_height: max_abs_height(&field),
        max_curvature: curvature.iter().copied().fold(0.0, f64::max),
    };

    if let Some(dir) = out {
        if wants(OutputFormat::Vtk) {
            let path = dir.join("final.vtk");
            write_vtk(&space, &field, &curvature, "thinfold final state", &path).map_err(io_error(&path))?;
        }
        let path = dir.join("summary.toml");
        std::fs::write(&path, summary.to_toml()).map_err(io_error(&path))?;
    }
    Ok(RunOutcome { space, initial, field, curvature, preprocess: pp, report, flow, summary })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"
[domain]
rectangle = { width = 4.0, height = 3.0, h = 0.5 }

[[curve]]
kind = "parabolic"
points = [[0.0, 1.0], [4.0, 1.0], [2.0, 2.0]]

[bc]
compression = { s = 0.0, xd = [0.0, 0.0], xd2 = [4.0, 0.0] }
"#;

    #[test]
    fn seed_choice_follows_regions() {
        let cfg = RunConfig::parse(SMALL, "small").unwrap();
        let mesh = build_mesh(&cfg).unwrap();
        assert!(matches!(choose_seed(&cfg, &mesh), Some(Seed::Fold(_))));
        let mut flat = cfg.clone();
        flat.curves.clear();
        let plain = build_mesh(&flat).unwrap();
        assert!(matches!(choose_seed(&flat, &plain), Some(Seed::Arch(_))));
        flat.bc.compression = None;
        assert!(choose_seed(&flat, &plain).is_none());
    }

    #[test]
    fn bc_targets_nearest_vertices() {
        let cfg = RunConfig::parse(SMALL, "small").unwrap();
        let mesh = build_mesh(&cfg).unwrap();
        let bc = build_bc(&cfg, &mesh).unwrap();
        assert_eq!(bc.len(), 2);
        assert_eq!(mesh.nodes()[bc[1].vertex], Vec2::new(4.0, 0.0));
    }

    #[test]
    fn uncompressed_run_does_not_move() {
        let cfg = RunConfig::parse(SMALL, "small").unwrap();
        let outcome = execute(&cfg, None).unwrap();
        assert_eq!(outcome.summary.iterations, 0);
        assert_eq!(outcome.summary.termination, "stationary");
        assert!(outcome.summary.flap_angle_deg.abs() < 1e-6);
    }
}
