//! `peq` — build, transform, solve, verify, and export plasma equilibria.
//!
//! Exit codes: 0 all checks pass, 1 check failure, 2 usage/config error,
//! 3 numerical failure (non-convergence, domain/transform errors).

mod build;
mod config;
mod report;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use peq_core::bobnev::{bobnev_roots, eigenvalue_residual};
use peq_core::export::{
    write_csv_cgl, write_csv_mhd, write_slice_cgl, write_slice_mhd, write_vtk_cgl,
    write_vtk_flux_grid, write_vtk_mhd, BoxGrid,
};
use peq_core::gs::{solve_gs, FluxGrid, SolverConfig, SourceTerm};

use build::{apply_chain, build_solution, run_checks, AnyState, BuiltSolution, CheckContext};
use config::{RunConfig, SolutionSpec};
use report::RunReport;

#[derive(Parser)]
#[command(name = "peq", version, about = "static plasma equilibrium toolkit")]
struct Cli {
    /// TOML run configuration; defaults to the built-in vortex setup.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config's output.dir).
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Multiplies every check tolerance.
    #[arg(long, global = true, default_value_t = 1.0)]
    tolerance_scale: f64,
    /// Worker threads for parallel sweeps (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for randomized checks.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Eigenvalue table of the vortex boundary condition.
    Roots {
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
        #[arg(long, default_value_t = 3)]
        n_max: usize,
    },
    /// Run the configured verification checks.
    Verify,
    /// Apply the configured transform chain, re-verify, export the result.
    Transform,
    /// Solve the axisymmetric flux equation; print a convergence table.
    SolveGs,
    /// Export the configured (and transformed) state.
    Export,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .is_err()
        {
            eprintln!("error: could not configure {n} worker threads");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(all_pass) => {
            if all_pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(error_code(&e))
        }
    }
}

/// 2 for usage/config problems, 3 for numerical failures.
fn error_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(core) = cause.downcast_ref::<peq_core::Error>() {
            return match core {
                peq_core::Error::InvalidParameter(_)
                | peq_core::Error::InvalidLabel(_)
                | peq_core::Error::Parse(_)
                | peq_core::Error::Io(_) => 2,
                _ => 3,
            };
        }
    }
    2
}

fn run(cli: &Cli) -> anyhow::Result<bool> {
    let (mut cfg, hash) = RunConfig::load(cli.config.as_deref())?;
    if let Some(dir) = &cli.output {
        cfg.output.dir = dir.clone();
    }
    let ctx = CheckContext {
        verify: &cfg.verify,
        tolerance_scale: cli.tolerance_scale,
        seed: cli.seed,
    };
    match &cli.cmd {
        Cmd::Roots { radius, n_max } => {
            let roots = bobnev_roots(*radius, *n_max)?;
            println!("{:>3} {:>20} {:>20} {:>14}", "n", "lambda", "R*lambda", "residual");
            for (i, lambda) in roots.iter().enumerate() {
                let m = lambda * radius;
                println!(
                    "{:>3} {:>20.12} {:>20.12} {:>14.3e}",
                    i + 1,
                    lambda,
                    m,
                    eigenvalue_residual(m)
                );
            }
            Ok(true)
        }
        Cmd::Verify => {
            let built = build_solution(&cfg)?;
            let state = apply_chain_of(&cfg, &built)?;
            let mut report = RunReport::new(&hash);

            run_checks(&built, &state, &ctx, &mut report)?;
            print!("{}", report.render());
            Ok(report.all_pass())
        }
        Cmd::Transform => {
            let built = build_solution(&cfg)?;
            let state = apply_chain_of(&cfg, &built)?;
            let mut report = RunReport::new(&hash);

            run_checks(&built, &state, &ctx, &mut report)?;
            export_state(&cfg, &built, &state)?;
            let dir = &cfg.output.dir;
            fs::write(dir.join("report.txt"), report.render())?;
            fs::write(dir.join("report.csv"), report.render_csv())?;
            print!("{}", report.render());
            Ok(report.all_pass())
        }
        Cmd::SolveGs => {
            let SolutionSpec::GsSolve {
                alpha,
                beta,
                r_range,
                z_range,
                nr,
                nz,
                max_iterations,
                omega,
            } = &cfg.solution
            else {
                bail!("solve-gs needs a [solution] of kind \"gs-solve\"");
            };
            let mut solver = SolverConfig::default();
            if let Some(it) = max_iterations {
                solver.max_iterations = *it;
            }
            if let Some(w) = omega {
                solver.omega = *w;
            }
            let (a, b) = (*alpha, *beta);
            let exact = move |r: f64, z: f64| b / 8.0 * r.powi(4) + a * r * r * z * z;
            let source = SourceTerm::LinearProfiles {
                ii0: 0.0,
                ii1: 0.0,
                pp0: -(b + 2.0 * a),
                pp1: 0.0,
            };
            println!("{:>10} {:>14} {:>12} {:>8}", "grid", "max error", "order", "iters");
            let mut prev: Option<f64> = None;
            let mut finest: Option<FluxGrid> = None;
            for level in 0..3 {
                let scale = 1 << level;
                let (nr_l, nz_l) = ((nr - 1) * scale + 1, (nz - 1) * scale + 1);
                let dr = (r_range[1] - r_range[0]) / (nr_l as f64 - 1.0);
                let dz = (z_range[1] - z_range[0]) / (nz_l as f64 - 1.0);
                let mut grid = FluxGrid::new(r_range[0], z_range[0], dr, dz, nr_l, nz_l)?;
                for j in 0..nz_l {
                    for i in 0..nr_l {
                        if i == 0 || j == 0 || i == nr_l - 1 || j == nz_l - 1 {
                            grid.set(i, j, exact(grid.r(i), grid.z(j)));
                        }
                    }
                }
                let (solved, stats) = solve_gs(grid, &source, &solver)?;
                let mut err = 0.0_f64;
                for j in 0..nz_l {
                    for i in 0..nr_l {
                        err = err.max((solved.get(i, j) - exact(solved.r(i), solved.z(j))).abs());
                    }
                }
                let order = prev
                    .map(|p| (p / err).log2())
                    .map(|o| format!("{o:.3}"))
                    .unwrap_or_else(|| "-".into());
                println!(
                    "{:>10} {:>14.6e} {:>12} {:>8}",
                    format!("{nr_l}x{nz_l}"),
                    err,
                    order,
                    stats.iterations
                );
                prev = Some(err);
                finest = Some(solved);
            }
            let dir = ensure_outdir(&cfg)?;
            let solved = finest.expect("three refinement levels");
            let mut csv = Vec::new();
            solved.write_csv(&mut csv)?;
            fs::write(dir.join("flux_grid.csv"), csv)?;
            let mut vtk = Vec::new();
            write_vtk_flux_grid(&mut vtk, &solved)?;
            fs::write(dir.join("flux_grid.vtk"), vtk)?;
            Ok(true)
        }
        Cmd::Export => {
            let built = build_solution(&cfg)?;
            let state = apply_chain_of(&cfg, &built)?;
            export_state(&cfg, &built, &state)?;
            Ok(true)
        }
    }
}

fn apply_chain_of(cfg: &RunConfig, built: &BuiltSolution) -> anyhow::Result<AnyState> {
    let state = match &built.state {
        AnyState::Mhd(st) => AnyState::Mhd(st.clone()),
        AnyState::Cgl(st) => AnyState::Cgl(st.clone()),
    };
    apply_chain(state, &cfg.transforms, &built.samples)
}

fn ensure_outdir(cfg: &RunConfig) -> anyhow::Result<PathBuf> {
    let dir = cfg.output.dir.clone();
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn export_state(cfg: &RunConfig, built: &BuiltSolution, state: &AnyState) -> anyhow::Result<()> {
    let dir = ensure_outdir(cfg)?;
    let extent = built.flux_scale.unwrap_or(1.0);
    let n = cfg.output.resolution;
    let lattice = BoxGrid::centered_cube(extent, n)?;
    for format in &cfg.output.formats {
        match (format.as_str(), state) {
            ("vtk", AnyState::Mhd(st)) => {
                let mut buf = Vec::new();
                write_vtk_mhd(&mut buf, st, &lattice)?;
                fs::write(dir.join("state.vtk"), buf)?;
            }
            ("vtk", AnyState::Cgl(st)) => {
                let mut buf = Vec::new();
                write_vtk_cgl(&mut buf, st, &lattice)?;
                fs::write(dir.join("state.vtk"), buf)?;
            }
            ("csv", AnyState::Mhd(st)) => {
                let mut buf = Vec::new();
                write_csv_mhd(&mut buf, st, &built.samples)?;
                fs::write(dir.join("state.csv"), buf)?;
            }
            ("csv", AnyState::Cgl(st)) => {
                let mut buf = Vec::new();
                write_csv_cgl(&mut buf, st, &built.samples)?;
                fs::write(dir.join("state.csv"), buf)?;
            }
            ("slice", AnyState::Mhd(st)) => {
                let mut buf = Vec::new();
                write_slice_mhd(&mut buf, st, 0.999 * extent, 0.999 * extent, 101)?;
                fs::write(dir.join("slice.csv"), buf)?;
            }
            ("slice", AnyState::Cgl(st)) => {
                let mut buf = Vec::new();
                write_slice_cgl(&mut buf, st, 0.999 * extent, 0.999 * extent, 101)?;
                fs::write(dir.join("slice.csv"), buf)?;
            }
            _ => unreachable!("formats validated at load"),
        }
    }
    if let Some(grid) = &built.grid {
        let mut csv = Vec::new();
        grid.write_csv(&mut csv)?;
        fs::write(dir.join("flux_grid.csv"), csv)?;
    }
    Ok(())
}
