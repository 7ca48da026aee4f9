use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use thinfold_cli::config::{load_config, ConfigError};
use thinfold_cli::meshio::load_mesh;
use thinfold_cli::runner::{execute, RunError};
use thinfold_cli::verify::builtin_suite;

#[derive(Parser)]
#[command(name = "thinfold", version, about = "Thin sheets folding along curved creases")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment.
    Run {
        config: PathBuf,
        /// Output directory; overrides `output.directory`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Repeat an experiment over a list of parameter values.
    Sweep {
        config: PathBuf,
        /// `name=v1,v2,...`, e.g. `s=0,0.1,0.2,0.3`.
        #[arg(long)]
        param: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print statistics of a native mesh file.
    MeshInfo { mesh: PathBuf },
    /// Run the built-in property checks.
    Verify,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Run(#[from] RunError),
    #[error("bad --param `{0}`: expected name=v1,v2,...")]
    Param(String),
    #[error("{0} check(s) failed")]
    Verify(usize),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Run(e) => e.kind(),
            CliError::Param(_) => "usage",
            CliError::Verify(_) => "verify",
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Run(e.into())
    }
}

fn run(config: &Path, out: Option<PathBuf>) -> Result<(), CliError> {
    let cfg = load_config(config)?;
    let dir = out.unwrap_or_else(|| cfg.output.directory.clone());
    let outcome = execute(&cfg, Some(&dir))?;
    print!("{}", outcome.summary.to_toml());
    println!("output = {:?}", dir.display().to_string());
    Ok(())
}

#[derive(Serialize)]
struct SweepRow {
    param: String,
    value: f64,
    iterations: usize,
    termination: String,
    initial_energy: f64,
    final_energy: f64,
    final_violation: f64,
    flap_angle_deg: f64,
}

fn sweep(config: &Path, param: &str, out: Option<PathBuf>) -> Result<(), CliError> {
    let (name, values) = param.split_once('=').ok_or_else(|| CliError::Param(param.into()))?;
    let values: Vec<f64> = values
        .split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Param(param.into()))?;
    let base = load_config(config)?;
    let root = out.unwrap_or_else(|| base.output.directory.clone());
    std::fs::create_dir_all(&root).map_err(|source| RunError::Io { path: root.clone(), source })?;
    let table = root.join("sweep.csv");
    let io = |source: std::io::Error| RunError::Io { path: table.clone(), source };
    let mut writer = csv::Writer::from_path(&table).map_err(RunError::Csv)?;
    for v in values {
        let mut cfg = base.clone();
        cfg.set_param(name, v)?;
        let dir = root.join(format!("{name}_{v}"));
        let s = execute(&cfg, Some(&dir))?.summary;
        println!(
            "{name}={v} iterations={} termination={} energy={:.6e} flap_angle_deg={:.3}",
            s.iterations, s.termination, s.final_energy.total, s.flap_angle_deg
        );
        writer
            .serialize(SweepRow {
                param: name.into(),
                value: v,
                iterations: s.iterations,
                termination: s.termination,
                initial_energy: s.initial_energy,
                final_energy: s.final_energy.total,
                final_violation: s.final_violation,
                flap_angle_deg: s.flap_angle_deg,
            })
            .map_err(RunError::Csv)?;
    }
    writer.flush().map_err(io)?;
    Ok(())
}

fn mesh_info(path: &Path) -> Result<(), CliError> {
    let mesh = load_mesh(path).map_err(RunError::from)?;
    let (lo, hi) = mesh.bounding_box();
    let regions = mesh.fold_regions().iter().max().map_or(0, |m| m + 1);
    println!("elements = {}", mesh.n_elements());
    println!("nodes = {}", mesh.nodes().len());
    println!("vertices = {}", mesh.vertex_ids().count());
    println!("edges = {}", mesh.edges().len());
    println!("fold_edges = {}", mesh.fold_edges().count());
    println!("fold_regions = {regions}");
    println!("dirichlet_vertices = {}", mesh.dirichlet().len());
    println!("area = {}", mesh.area());
    println!("bounding_box = [[{}, {}], [{}, {}]]", lo.x, lo.y, hi.x, hi.y);
    Ok(())
}

fn verify() -> Result<(), CliError> {
    let checks = builtin_suite();
    let failed = checks.iter().filter(|c| !c.passed).count();
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    if failed > 0 {
        return Err(CliError::Verify(failed));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out } => run(&config, out),
        Command::Sweep { config, param, out } => sweep(&config, &param, out),
        Command::MeshInfo { mesh } => mesh_info(&mesh),
        Command::Verify => verify(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error kind={} message={:?}", e.kind(), e.to_string());
            ExitCode::FAILURE
        }
    }
}
