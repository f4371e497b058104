use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use ctd_core::bulk::{BulkDomain, BulkStepper};
use ctd_core::config::ExperimentConfig;
use ctd_core::error::{Error, Result};
use ctd_core::study;
use ctd_core::surface::{SurfaceDomain, SurfaceStepper};

#[derive(Parser)]
#[command(name = "ctd", version, about = "Cahn-Hilliard in curved thin domains and the thin-film limit")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment configuration (flat `key = value` file); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Directory receiving CSV output.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,

    /// Seed for random initial data; overrides `bulk.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the verification suite, one line per check.
    Verify,
    /// Integrate the bulk problem on the reference grid.
    SimulateBulk,
    /// Integrate the weighted surface problem.
    SimulateSurface,
    /// Thin-film convergence study over `study.epsilons`.
    Converge,
    /// Averaged-Laplacian and nonlinear residuals over `study.epsilons`.
    ResidualSweep,
    /// Write the pullback coefficients of the configured grid.
    DumpCoefficients,
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn run(cli: &Cli) -> Result<bool> {
    let config = match &cli.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    let seed = cli.seed.unwrap_or(config.bulk_seed);
    let out = cli.out_dir.as_path();
    fs::create_dir_all(out)?;

    match cli.command {
        Command::Verify => {
            let report = study::run_verification_suite(&config, seed);
            let mut w = create(out, "verification.csv")?;
            use std::io::Write;
            writeln!(w, "check,status,detail")?;
            for c in &report.checks {
                println!("{c}");
                writeln!(w, "{},{:?},\"{}\"", c.name, c.status, c.detail.replace('"', "'"))?;
            }
            Ok(report.all_passed())
        }
        Command::SimulateBulk => {
            let domain = BulkDomain::new(config.chart, config.thickness, config.reference_grid()?)?;
            let v0 = study::initial_profile(&domain.surface, &config, seed);
            let u0 = study::matched_bulk_data(&domain, &v0, config.alpha)?;
            let stepper = BulkStepper::new(Arc::clone(&domain), config.bulk, config.potential.clone())?;
            let run = stepper.run_until(&u0, config.bulk_t, &config.snapshot_times(config.bulk_t))?;
            run.write_log(create(out, "bulk_log.csv")?)?;
            for (step, u) in &run.snapshots {
                u.write_snapshot(
                    create(out, &format!("bulk_snapshot_{step:06}.csv"))?,
                    *step as f64 * config.bulk.tau,
                )?;
            }
            let last = run.log.last().expect("log holds the initial row");
            println!(
                "bulk: {} steps, mass {:.12e}, energy {:.6e}, normal derivative norm {:.3e}",
                last.step, last.mass, last.energy, last.normal_deriv_norm
            );
            Ok(true)
        }
        Command::SimulateSurface => {
            let domain = SurfaceDomain::new(config.chart, config.thickness, config.n1, config.n2)?;
            let v0 = study::initial_profile(&domain, &config, seed);
            let stepper = SurfaceStepper::new(Arc::clone(&domain), config.surface, config.potential.clone())?;
            let steps = (config.surface_t / config.surface.tau).round() as usize;
            let run = stepper.run(&v0, steps, &[])?;
            run.write_log(create(out, "surface_log.csv")?)?;
            run.final_state.write_csv(create(out, "surface_final.csv")?)?;
            let last = run.log.last().expect("log holds the initial row");
            println!(
                "surface: {} steps, weighted mass {:.12e}, weighted energy {:.6e}",
                last.step, last.weighted_mass, last.weighted_energy
            );
            Ok(true)
        }
        Command::Converge => {
            let s = study::run_convergence_study(&config, seed)?;
            s.report.write_csv(create(out, "convergence.csv")?)?;
            s.surface_run.write_log(create(out, "surface_log.csv")?)?;
            for f in &s.report.failures {
                println!("FAIL entry {f}");
            }
            for c in &s.report.checks {
                let name = ctd_core::analysis::ERROR_COLUMNS[c.column];
                let slope = c.slope.map_or("n/a".to_string(), |s| format!("{s:.3}"));
                println!(
                    "{} rate {name}: slope {slope} (threshold {})",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.min_slope
                );
            }
            Ok(s.report.all_passed())
        }
        Command::ResidualSweep => {
            let r = study::residual_sweep(&config, seed)?;
            r.write_csv(create(out, "residuals.csv")?)?;
            for row in &r.rows {
                println!(
                    "epsilon {:.4}: |zeta_delta| {:.4e}, |zeta_F| {:.4e}",
                    row.epsilon, row.zeta_delta_l2, row.zeta_f_l2
                );
            }
            Ok(true)
        }
        Command::DumpCoefficients => {
            let grid = config.reference_grid()?;
            let coef = ctd_core::pullback::build_coefficients(&config.chart, &config.thickness, &grid)?;
            coef.write_csv(create(out, "coefficients.csv")?)?;
            println!("{} nodes, smallest eigenvalue {:.4e}", coef.det_jac.len(), coef.c_ell);
            Ok(coef.det_mismatch <= 1e-6)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::Step { .. } | Error::SolverDivergence { .. } = e {
                eprintln!("hint: reduce the time step or raise the stabilization");
            }
            ExitCode::from(2)
        }
    }
}
