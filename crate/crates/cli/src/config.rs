//! Run configuration: TOML text with `domain`, `curve`, `bc`, `energy`,
//! `flow` and `output` sections. See `docs/formats.md` for the grammar.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use thinfold::energy::EnergyParams;
use thinfold::flow::{ArmijoRule, FlowConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}:{line}:{column}: {message}")]
    Parse { path: String, line: usize, column: usize, message: String },
    #[error("invalid value for `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

fn invalid(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field: field.into(), reason: reason.into() }
}

pub type Point2 = [f64; 2];
pub type Point3 = [f64; 3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RectangleSpec {
    pub width: f64,
    pub height: f64,
    /// Target element diameter.
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rectangle: Option<RectangleSpec>,
    /// Native mesh file, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    /// `points = [p0, p1, apex]`
    Parabolic,
    /// `points = [p0, p1, center]`
    Circular,
    /// `points = [p0, c1, c2, p3]`
    Bezier,
    /// `points = [v0, v1, ...]`
    Polyline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnapMode {
    /// Crease edges are quadratic and interpolate the curve.
    #[default]
    Curved,
    /// Crease edges are straight.
    Polyline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveSpec {
    pub kind: CurveKind,
    pub points: Vec<Point2>,
    #[serde(default)]
    pub snap: SnapMode,
    /// Replace the curve by an inscribed polyline with this many segments
    /// before snapping; 0 keeps the curve.
    #[serde(default)]
    pub segments: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompressionSpec {
    pub s: f64,
    pub xd: Point2,
    pub xd2: Point2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointBc {
    /// Located at the nearest mesh vertex.
    pub at: Point2,
    pub target: Point3,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BcSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compression: Option<CompressionSpec>,
    #[serde(default)]
    pub points: Vec<PointBc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergySpec {
    #[serde(default = "one")]
    pub gamma0: f64,
    #[serde(default = "one")]
    pub gamma1: f64,
    #[serde(default = "one")]
    pub gamma2: f64,
    #[serde(default = "default_quad_order")]
    pub quad_order: usize,
}

fn one() -> f64 {
    1.0
}

fn default_quad_order() -> usize {
    EnergyParams::default().quad_order
}

impl Default for EnergySpec {
    fn default() -> Self {
        let p = EnergyParams::default();
        Self { gamma0: p.gamma0, gamma1: p.gamma1, gamma2: p.gamma2, quad_order: p.quad_order }
    }
}

impl From<EnergySpec> for EnergyParams {
    fn from(e: EnergySpec) -> Self {
        EnergyParams { gamma0: e.gamma0, gamma1: e.gamma1, gamma2: e.gamma2, quad_order: e.quad_order }
    }
}

/// `rho_tilde = "auto"` or a number.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Tolerance {
    /// `√(2 ε_pp |S|)`, the largest violation a field with defect `J ≤ ε_pp`
    /// can have.
    #[default]
    Auto,
    Value(f64),
}

impl Tolerance {
    pub fn resolve(self, eps_pp: f64, area: f64) -> f64 {
        match self {
            Tolerance::Auto => (2.0 * eps_pp * area).sqrt(),
            Tolerance::Value(v) => v,
        }
    }
}

impl Serialize for Tolerance {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Tolerance::Auto => s.serialize_str("auto"),
            Tolerance::Value(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for Tolerance {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Number(f64),
            Int(i64),
        }
        match Raw::deserialize(d)? {
            Raw::Text(t) if t == "auto" => Ok(Tolerance::Auto),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("expected a number or \"auto\", found \"{t}\""))),
            Raw::Number(v) => Ok(Tolerance::Value(v)),
            Raw::Int(v) => Ok(Tolerance::Value(v as f64)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedKind {
    /// `fold` on meshes with two crease regions, `arch` otherwise; `none`
    /// without compression.
    #[default]
    Auto,
    Fold,
    Arch,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmijoSpec {
    pub c: f64,
    pub shrink: f64,
    pub initial_step: f64,
    pub max_backtracks: usize,
}

impl Default for ArmijoSpec {
    fn default() -> Self {
        let a = FlowConfig::default().armijo;
        Self { c: a.c, shrink: a.shrink, initial_step: a.initial_step, max_backtracks: a.max_backtracks }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowSpec {
    pub tau: f64,
    pub rho_tilde: Tolerance,
    pub eps_pp: f64,
    pub eps_stop: f64,
    pub alpha_e: f64,
    pub alpha_m: f64,
    pub max_iters: usize,
    pub pp_max_iters: usize,
    pub pp_regularization: f64,
    pub seed: SeedKind,
    pub seed_scale: f64,
    pub armijo: ArmijoSpec,
}

impl Default for FlowSpec {
    fn default() -> Self {
        let f = FlowConfig::default();
        Self {
            tau: f.tau,
            rho_tilde: Tolerance::Auto,
            eps_pp: f.eps_pp,
            eps_stop: f.eps_stop,
            alpha_e: f.alpha_e,
            alpha_m: f.alpha_m,
            max_iters: f.max_iters,
            pp_max_iters: f.pp_max_iters,
            pp_regularization: f.pp_regularization,
            seed: SeedKind::Auto,
            seed_scale: f.pp_seed_scale,
            armijo: ArmijoSpec::default(),
        }
    }
}

impl FlowSpec {
    /// Core flow configuration for a domain of the given area.
    pub fn to_flow_config(&self, area: f64) -> FlowConfig {
        FlowConfig {
            tau: self.tau,
            rho_tilde: self.rho_tilde.resolve(self.eps_pp, area),
            eps_pp: self.eps_pp,
            eps_stop: self.eps_stop,
            alpha_e: self.alpha_e,
            alpha_m: self.alpha_m,
            max_iters: self.max_iters,
            pp_max_iters: self.pp_max_iters,
            armijo: ArmijoRule {
                c: self.armijo.c,
                shrink: self.armijo.shrink,
                initial_step: self.armijo.initial_step,
                max_backtracks: self.armijo.max_backtracks,
            },
            pp_regularization: self.pp_regularization,
            pp_seed_scale: self.seed_scale,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Vtk,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    /// Relative to the config file.
    pub directory: PathBuf,
    /// Write a VTK snapshot every this many flow steps; 0 disables.
    pub snapshot_stride: usize,
    pub formats: Vec<OutputFormat>,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { directory: PathBuf::from("out"), snapshot_stride: 0, formats: vec![OutputFormat::Vtk, OutputFormat::Csv] }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub domain: DomainSpec,
    #[serde(default, rename = "curve")]
    pub curves: Vec<CurveSpec>,
    #[serde(default)]
    pub bc: BcSpec,
    #[serde(default)]
    pub energy: EnergySpec,
    #[serde(default)]
    pub flow: FlowSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

const BOUNDARY_TOL: f64 = 1e-6;

impl RunConfig {
    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let (line, column) = e.span().map_or((0, 0), |span| line_column(text, span.start));
            ConfigError::Parse { path: origin.into(), line, column, message: e.message().trim().to_string() }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        match (&self.domain.rectangle, &self.domain.mesh) {
            (Some(_), Some(_)) => return Err(invalid("domain", "give either `rectangle` or `mesh`, not both")),
            (None, None) => return Err(invalid("domain", "one of `rectangle` or `mesh` is required")),
            _ => {}
        }
        if let Some(r) = &self.domain.rectangle {
            for (name, v) in [("width", r.width), ("height", r.height), ("h", r.h)] {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(invalid(&format!("domain.rectangle.{name}"), format!("must be positive, got {v}")));
                }
            }
        }
        for (i, c) in self.curves.iter().enumerate() {
            let field = |f: &str| format!("curve[{i}].{f}");
            let need = match c.kind {
                CurveKind::Parabolic | CurveKind::Circular => Some(3),
                CurveKind::Bezier => Some(4),
                CurveKind::Polyline => None,
            };
            match need {
                Some(n) if c.points.len() != n => {
                    return Err(invalid(&field("points"), format!("{:?} needs {n} points, got {}", c.kind, c.points.len())));
                }
                None if c.points.len() < 2 => return Err(invalid(&field("points"), "a polyline needs at least 2 points")),
                _ => {}
            }
            if let Some(r) = &self.domain.rectangle {
                let ends = match c.kind {
                    CurveKind::Parabolic | CurveKind::Circular => [c.points[0], c.points[1]],
                    _ => [c.points[0], c.points[c.points.len() - 1]],
                };
                for p in ends {
                    let d = (p[0].min(r.width - p[0])).min(p[1].min(r.height - p[1]));
                    let inside = p[0] >= -BOUNDARY_TOL && p[1] >= -BOUNDARY_TOL && p[0] <= r.width + BOUNDARY_TOL && p[1] <= r.height + BOUNDARY_TOL;
                    if !inside || d.abs() > BOUNDARY_TOL {
                        return Err(invalid(&field("points"), format!("endpoint ({}, {}) is not on the domain boundary", p[0], p[1])));
                    }
                }
            }
        }
        if let Some(c) = &self.bc.compression {
            if !(0.0..1.0).contains(&c.s) {
                return Err(invalid("bc.compression.s", format!("must lie in [0, 1), got {}", c.s)));
            }
            if c.xd == c.xd2 {
                return Err(invalid("bc.compression.xd2", "must differ from xd"));
            }
        }
        let e = &self.energy;
        for (name, v) in [("gamma0", e.gamma0), ("gamma1", e.gamma1), ("gamma2", e.gamma2)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(&format!("energy.{name}"), format!("must be positive, got {v}")));
            }
        }
        if let Tolerance::Value(v) = self.flow.rho_tilde {
            if !(v > 0.0) {
                return Err(invalid("flow.rho_tilde", format!("must be positive or \"auto\", got {v}")));
            }
        }
        self.flow
            .to_flow_config(1.0)
            .validate()
            .map_err(|e| invalid("flow", e.to_string()))?;
        if self.flow.seed == SeedKind::Fold && self.bc.compression.is_none() {
            return Err(invalid("flow.seed", "`fold` needs `bc.compression`"));
        }
        Ok(())
    }

    /// Fully defaulted TOML text; identical input gives identical bytes.
    pub fn resolved_dump(&self) -> String {
        let mut out = String::from("# resolved thinfold configuration\n");
        let body = toml::to_string(self).expect("configuration serializes");
        let _ = write!(out, "{body}");
        out
    }

    /// Sets one sweep parameter by name.
    pub fn set_param(&mut self, name: &str, value: f64) -> Result<(), ConfigError> {
        match name {
            "s" => {
                let c = self.bc.compression.as_mut().ok_or_else(|| invalid("s", "config has no `bc.compression`"))?;
                c.s = value;
            }
            "gamma0" => self.energy.gamma0 = value,
            "gamma1" => self.energy.gamma1 = value,
            "gamma2" => self.energy.gamma2 = value,
            "tau" => self.flow.tau = value,
            "eps_stop" => self.flow.eps_stop = value,
            "eps_pp" => self.flow.eps_pp = value,
            "alpha_e" => self.flow.alpha_e = value,
            "alpha_m" => self.flow.alpha_m = value,
            other => return Err(invalid(other, "unknown sweep parameter")),
        }
        self.validate()
    }
}

/// Reads and validates a config file; relative paths inside it are
/// resolved against its directory.
pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
    let mut cfg = RunConfig::parse(&text, &path.display().to_string())?;
    let base = path.parent().unwrap_or(Path::new("."));
    if let Some(mesh) = &cfg.domain.mesh {
        if mesh.is_relative() {
            cfg.domain.mesh = Some(base.join(mesh));
        }
    }
    if cfg.output.directory.is_relative() {
        cfg.output.directory = base.join(&cfg.output.directory);
    }
    Ok(cfg)
}

/// One-based line and column of a byte offset.
fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.len(), |i| before.len() - i - 1) + 1;
    (line, column)
}
