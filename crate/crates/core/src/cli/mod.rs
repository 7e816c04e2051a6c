//! Batch front end: configuration, single runs, sweeps, reduced problems,
//! classification and export.
//!
//! Exit codes: 0 success, 2 configuration error, 3 convergence failure,
//! 4 IO error.

pub mod config;
pub mod sweep;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

pub use config::RunConfig;
pub use sweep::{sweep_bifurcation, sweep_escaped, Probe, RowStatus, SweepKind, SweepResult, SweepRow};

use crate::energy::{EnergyBreakdown, WellProblem};
use crate::error::{Error, Result};
use crate::io::coeffs::load_field_for;
use crate::io::{
    export_vtk, load_restart, problem_hash, save_coeffs, save_restart, write_iter_log, write_json, write_reduced_csv,
    write_slices, ArtifactMeta, CoeffFormat, CoeffHeader,
};
use crate::minimize::{classify_detailed, lbfgs, make_initial, smallest_eigenvalue, Classification, SolutionClass, StabilityReport};
use crate::reduced2d::{minimize_j, solve_wors_quadrant, verify_bounds, BoundsReport, ReducedSolve};
use crate::spectral::SpectralField;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_CONVERGENCE: i32 = 3;
pub const EXIT_IO: i32 = 4;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Domain(_) | Error::Shape(_) => EXIT_CONFIG,
        Error::Convergence(_) => EXIT_CONVERGENCE,
        Error::Io(_) | Error::Json(_) | Error::Format(_) => EXIT_IO,
    }
}

#[derive(Debug, Parser)]
#[command(name = "nematic-well", version, about = "Landau-de Gennes equilibria in square wells")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON configuration; missing keys take their defaults.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Worker threads for sweeps (default: available cores).
    #[arg(long, global = true, value_name = "N")]
    pub workers: Option<usize>,
    /// Overrides `seed` and the seed of a random initial condition.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Minimize, check stability, classify and write all artifacts.
    Run,
    /// Critical lambda_bar_sq of the WORS for each lateral anchoring strength.
    SweepBifurcation,
    /// Critical plate anchoring of the escaped branch for each well height.
    SweepEscaped,
    /// Solve the reduced two-dimensional problem.
    Reduced2d,
    /// Solve the reduced problem and check the pointwise bounds.
    VerifyBounds,
    /// Classify a stored field.
    Classify {
        /// Coefficient or restart file.
        #[arg(long, value_name = "PATH")]
        field: PathBuf,
    },
    /// Write VTK, slices and coefficient CSV for a stored field.
    Export {
        #[arg(long, value_name = "PATH")]
        field: PathBuf,
    },
}

/// Configuration with command-line overrides applied.
pub fn effective_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
        if let crate::minimize::InitialCondition::Random { seed } = &mut cfg.initial {
            *seed = s;
        }
        if let crate::reduced2d::ReducedInit::Random { seed } = &mut cfg.reduced2d.init {
            *seed = s;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn workers(cli: &Cli) -> usize {
    cli.workers.unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

fn prepare_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn file_names(paths: &[PathBuf]) -> Vec<String> {
    paths.iter().map(|p| p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub problem_hash: String,
    pub lambda_bar_sq: f64,
    pub eps: f64,
    pub initial: String,
    pub converged: bool,
    pub iterations: usize,
    pub grad_norm: f64,
    pub message: String,
    pub energy: EnergyBreakdown,
    pub lambda1: Option<f64>,
    pub stability: Option<StabilityReport>,
    pub class: SolutionClass,
    pub classification: Classification,
    pub artifacts: Vec<String>,
}

/// Field exports shared by `run` and `export`.
fn write_field_artifacts(dir: &Path, cfg: &RunConfig, prob: &WellProblem, f: &SpectralField, meta: &ArtifactMeta) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    if cfg.output.coefficients_csv {
        let p = dir.join("coefficients.csv");
        save_coeffs(&p, CoeffFormat::Csv, &CoeffHeader::new(&prob.grid, meta), f)?;
        paths.push(p);
    }
    paths.extend(write_slices(dir, f, prob, cfg.output.slice_points, meta)?);
    if cfg.output.vtk {
        let p = dir.join("field.vtk");
        export_vtk(&p, f, prob, cfg.lattice(), meta)?;
        paths.push(p);
    }
    Ok(paths)
}

/// The `run` command. Artifacts are written even when L-BFGS stops early;
/// the summary records it and the caller maps it to exit code 3.
pub fn run(cfg: &RunConfig, dir: &Path) -> Result<RunSummary> {
    let meta = cfg.meta();
    let prob = cfg.problem()?;
    let f0 = match &cfg.restart {
        Some(p) => load_restart(p, &prob)?,
        None => make_initial(&cfg.initial, &prob)?,
    };
    prepare_out(dir)?;
    let res = lbfgs(&prob, &f0, &cfg.lbfgs)?;
    let stability = if cfg.stability.enabled {
        let mut opts = cfg.stability.options;
        opts.seed = cfg.seed;
        Some(smallest_eigenvalue(&prob, &res.field, cfg.stability.method, &opts)?)
    } else {
        None
    };
    let classification = classify_detailed(&res.field, &prob)?;
    let mut paths = vec![dir.join("field.bin"), dir.join("iterations.csv")];
    save_restart(&paths[0], &prob, &res.field, &meta)?;
    write_iter_log(&paths[1], &meta, &res.log)?;
    paths.extend(write_field_artifacts(dir, cfg, &prob, &res.field, &meta)?);
    paths.push(dir.join("summary.json"));
    let summary = RunSummary {
        problem_hash: problem_hash(&prob),
        lambda_bar_sq: prob.lambda_bar_sq,
        eps: prob.eps,
        initial: match &cfg.restart {
            Some(p) => format!("restart:{}", p.display()),
            None => cfg.initial.name(),
        },
        converged: res.converged,
        iterations: res.iterations,
        grad_norm: res.grad_norm,
        message: res.message,
        energy: res.breakdown,
        lambda1: stability.as_ref().map(|s| s.lambda1),
        stability,
        class: classification.class,
        classification,
        artifacts: file_names(&paths),
    };
    write_json(&dir.join("summary.json"), &meta, &summary)?;
    Ok(summary)
}

#[derive(Clone, Debug, Serialize)]
pub struct ReducedSummary {
    pub lambda_bar_sq: f64,
    pub n: usize,
    pub eta: f64,
    pub energy: f64,
    pub converged: bool,
    pub iterations: usize,
    pub grad_norm: f64,
    pub message: String,
    /// Largest strong-form Euler-Lagrange residual at interior nodes.
    pub el_residual: f64,
    pub bounds: BoundsReport,
    pub artifacts: Vec<String>,
}

pub fn solve_reduced(cfg: &RunConfig) -> Result<ReducedSolve> {
    let r = &cfg.reduced2d;
    let grid = cfg.reduced_grid()?;
    if r.quadrant {
        solve_wors_quadrant(&grid, cfg.material(), cfg.lambda_bar_sq, &r.options)
    } else {
        minimize_j(&grid, cfg.material(), cfg.lambda_bar_sq, r.constrain_q3_nonpositive, r.init, &r.options)
    }
}

/// The `reduced2d` command: field dump, iterate log and summary.
pub fn reduced2d(cfg: &RunConfig, dir: &Path) -> Result<(ReducedSummary, ReducedSolve)> {
    let meta = cfg.meta();
    prepare_out(dir)?;
    let sol = solve_reduced(cfg)?;
    let paths = [dir.join("reduced2d.csv"), dir.join("reduced2d_iterations.csv"), dir.join("reduced2d_summary.json")];
    write_reduced_csv(&paths[0], &meta, &sol.state)?;
    write_iter_log(&paths[1], &meta, &sol.log)?;
    let summary = ReducedSummary {
        lambda_bar_sq: cfg.lambda_bar_sq,
        n: sol.state.grid.n,
        eta: sol.state.grid.eta,
        energy: sol.energy,
        converged: sol.converged,
        iterations: sol.iterations,
        grad_norm: sol.grad_norm,
        message: sol.message.clone(),
        el_residual: sol.state.el_residual(),
        bounds: verify_bounds(&sol.state),
        artifacts: file_names(&paths),
    };
    write_json(&paths[2], &meta, &summary)?;
    Ok((summary, sol))
}

/// The `verify-bounds` command: solves the reduced problem and writes the
/// bounds report.
pub fn verify_bounds_cmd(cfg: &RunConfig, dir: &Path) -> Result<(BoundsReport, ReducedSolve)> {
    let meta = cfg.meta();
    prepare_out(dir)?;
    let sol = solve_reduced(cfg)?;
    let report = verify_bounds(&sol.state);
    write_reduced_csv(&dir.join("reduced2d.csv"), &meta, &sol.state)?;
    write_json(&dir.join("bounds.json"), &meta, &report)?;
    Ok((report, sol))
}

pub fn classify_cmd(cfg: &RunConfig, field: &Path, dir: &Path) -> Result<Classification> {
    let meta = cfg.meta();
    let prob = cfg.problem()?;
    let f = load_field_for(field, &prob)?;
    prepare_out(dir)?;
    let c = classify_detailed(&f, &prob)?;
    write_json(&dir.join("classification.json"), &meta, &c)?;
    Ok(c)
}

pub fn export_cmd(cfg: &RunConfig, field: &Path, dir: &Path) -> Result<Vec<PathBuf>> {
    let meta = cfg.meta();
    let prob = cfg.problem()?;
    let f = load_field_for(field, &prob)?;
    prepare_out(dir)?;
    write_field_artifacts(dir, cfg, &prob, &f, &meta)
}

fn dispatch(cli: &Cli) -> Result<i32> {
    let cfg = effective_config(cli)?;
    let dir = &cli.out;
    match &cli.command {
        Command::Run => {
            let s = run(&cfg, dir)?;
            println!(
                "class {}  energy {:.10e}  lambda1 {}  iterations {}  converged {}",
                s.class,
                s.energy.total,
                s.lambda1.map_or("-".into(), |l| format!("{l:.6e}")),
                s.iterations,
                s.converged
            );
            Ok(if s.converged { EXIT_OK } else { EXIT_CONVERGENCE })
        }
        Command::SweepBifurcation | Command::SweepEscaped => {
            cfg.validate_sweep_grids()?;
            prepare_out(dir)?;
            let (res, stem) = if matches!(cli.command, Command::SweepBifurcation) {
                (sweep_bifurcation(&cfg, workers(cli))?, "sweep_bifurcation")
            } else {
                (sweep_escaped(&cfg, workers(cli))?, "sweep_escaped")
            };
            sweep::write_sweep(dir, stem, &res, &cfg.meta())?;
            for r in &res.rows {
                println!(
                    "{} = {:e}: {:?}  critical {}  probes {}  converged {}",
                    res.parameter,
                    r.parameter,
                    r.status,
                    r.critical.map_or("-".into(), |c| format!("{c:.6e}")),
                    r.probes.len(),
                    r.converged
                );
            }
            Ok(if res.rows.iter().all(|r| r.converged) { EXIT_OK } else { EXIT_CONVERGENCE })
        }
        Command::Reduced2d => {
            let (s, _) = reduced2d(&cfg, dir)?;
            println!("energy {:.12e}  iterations {}  converged {}  bounds {}", s.energy, s.iterations, s.converged, s.bounds.all_pass);
            Ok(if s.converged { EXIT_OK } else { EXIT_CONVERGENCE })
        }
        Command::VerifyBounds => {
            let (r, sol) = verify_bounds_cmd(&cfg, dir)?;
            for c in &r.checks {
                println!("{} {}: {:.6e} vs {:.6e}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.value, c.bound);
            }
            Ok(if sol.converged { EXIT_OK } else { EXIT_CONVERGENCE })
        }
        Command::Classify { field } => {
            let c = classify_cmd(&cfg, field, dir)?;
            println!("{}", c.class);
            Ok(EXIT_OK)
        }
        Command::Export { field } => {
            for p in export_cmd(&cfg, field, dir)? {
                println!("{}", p.display());
            }
            Ok(EXIT_OK)
        }
    }
}

/// Parses `args` and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn error_kinds_map_to_documented_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(exit_code(&Error::Domain("x".into())), 2);
        assert_eq!(exit_code(&Error::Convergence("x".into())), 3);
        assert_eq!(exit_code(&Error::Io(std::io::Error::other("x"))), 4);
        assert_eq!(exit_code(&Error::Format("x".into())), 4);
    }

    #[test]
    fn bad_flags_are_configuration_errors() {
        assert_eq!(main_with_args(["nematic-well", "run", "--workers", "many"]), EXIT_CONFIG);
        assert_eq!(main_with_args(["nematic-well", "frobnicate"]), EXIT_CONFIG);
        assert_eq!(main_with_args(["nematic-well", "--help"]), EXIT_OK);
    }
}
