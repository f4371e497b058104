//! Experiment drivers: the thin-film convergence study, the residual sweep
//! and the verification suite.

use std::f64::consts::TAU;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::analysis::{self, ConvergenceEntry, ConvergenceReport, NormKind};
use crate::averaging::AveragingContext;
use crate::bulk::{BulkDomain, BulkField, BulkStepper};
use crate::config::{ExperimentConfig, InitialProfile};
use crate::error::{Error, Result};
use crate::geometry::{SurfaceChart, ThicknessProfile};
use crate::oracle::{spectral_step, SpectralState};
use crate::potential::Potential;
use crate::pullback::ReferenceGrid;
use crate::rng::Lcg;
use crate::scheme::StepperConfig;
use crate::surface::{SurfaceDomain, SurfaceField, SurfaceRun, SurfaceStepper};

/// Builds the configured initial surface profile.
pub fn initial_profile(domain: &Arc<SurfaceDomain>, config: &ExperimentConfig, seed: u64) -> SurfaceField {
    let (a, m) = (config.v0_amplitude, config.v0_mean);
    match config.v0 {
        InitialProfile::Fourier { mode } => domain.field_from_fn(|s| m + a * (TAU * mode as f64 * s[0]).sin()),
        InitialProfile::TanhStripe => domain.field_from_fn(|s| m + a * ((TAU * s[0]).cos() / 0.2).tanh()),
        InitialProfile::Random => {
            let mut g = Lcg::new(seed);
            let values = (0..domain.len()).map(|_| m + a * g.symmetric()).collect();
            SurfaceField { values, domain: Arc::clone(domain) }
        }
    }
}

/// Matched bulk data. For `alpha > 0` a thin-direction oscillation of
/// amplitude `ε^{1-α}` is added whose average is removed, so that
/// `M_ε u0 = v0` still holds.
pub fn matched_bulk_data(domain: &Arc<BulkDomain>, v0: &SurfaceField, alpha: f64) -> Result<BulkField> {
    let mut u = domain.init_from_surface(v0)?;
    if alpha > 0.0 {
        let eps = domain.grid.eps;
        let amp = eps.powf(1.0 - alpha);
        let osc = domain.field_from_fn(|s| amp * (TAU * s[2] / eps).cos());
        let ctx = AveragingContext::new(Arc::clone(domain));
        let avg = ctx.average_values(&osc.values);
        let cols = domain.shape().columns();
        for (p, x) in u.values.iter_mut().enumerate() {
            *x += osc.values[p] - avg[p % cols] / domain.coefficients.jval[p];
        }
    }
    Ok(u)
}

fn snapshot_steps(times: &[f64], tau: f64) -> Vec<usize> {
    times.iter().map(|t| (t / tau).round() as usize).collect()
}

/// Convergence report plus the shared surface trajectory.
#[derive(Debug, Clone)]
pub struct ConvergenceStudy {
    pub report: ConvergenceReport,
    pub surface_run: SurfaceRun,
    pub tau: f64,
}

/// Errors of one ε-entry, sup over the snapshot times.
fn study_entry(
    surface: &Arc<SurfaceDomain>,
    config: &ExperimentConfig,
    eps: f64,
    v0: &SurfaceField,
    surf_snaps: &[(usize, SurfaceField)],
    stepper_config: StepperConfig,
    steps: usize,
) -> Result<ConvergenceEntry> {
    let grid = ReferenceGrid::new(config.n1, config.n2, config.n3, eps)?;
    let domain = BulkDomain::with_surface(Arc::clone(surface), grid)?;
    let ctx = AveragingContext::new(Arc::clone(&domain));
    let u0 = matched_bulk_data(&domain, v0, config.alpha)?;
    let stepper = BulkStepper::new(Arc::clone(&domain), stepper_config, config.potential.clone())?;
    let snap_steps: Vec<usize> = surf_snaps.iter().map(|(n, _)| *n).collect();
    let run = stepper.run(&u0, steps, &snap_steps)?;
    let mut e = ConvergenceEntry {
        epsilon: eps,
        err_l2: 0.0,
        err_h1: 0.0,
        err_lg: 0.0,
        err_bulk_u: 0.0,
        err_bulk_grad: 0.0,
        nd_scaled: 0.0,
    };
    for ((_, u), (_, v)) in run.snapshots.iter().zip(surf_snaps) {
        let avg = ctx.average(u)?;
        let diff = surface.field(avg.values.iter().zip(&v.values).map(|(a, b)| a - b).collect())?;
        let bd = analysis::bulk_difference(u, v)?;
        e.err_l2 = e.err_l2.max(analysis::surface_norm(&diff, NormKind::L2)?);
        e.err_h1 = e.err_h1.max(analysis::surface_norm(&diff, NormKind::H1)?);
        e.err_lg = e.err_lg.max(analysis::surface_norm(&diff, NormKind::LgSemi)?);
        e.err_bulk_u = e.err_bulk_u.max(bd.e_u);
        e.err_bulk_grad = e.err_bulk_grad.max(bd.e_grad);
        e.nd_scaled = e.nd_scaled.max(analysis::scaled_normal_derivative(u));
    }
    Ok(e)
}

/// Co-evolves the bulk problem for every configured ε and the surface
/// problem once, comparing at the snapshot times. Entries run in parallel.
pub fn run_convergence_study(config: &ExperimentConfig, seed: u64) -> Result<ConvergenceStudy> {
    config.validate_study()?;
    let surface = SurfaceDomain::new(config.chart, config.thickness, config.n1, config.n2)?;
    for &eps in &config.epsilons {
        ReferenceGrid::new(config.n1, config.n2, config.n3, eps)?.check_tubular(&config.chart, &config.thickness)?;
    }
    let tau = config.matched_tau();
    let bulk_cfg = StepperConfig { tau, ..config.bulk };
    let surf_cfg = StepperConfig { tau, ..config.surface };
    let steps = (config.study_t / tau).round() as usize;
    let snaps = snapshot_steps(&config.snapshot_times(config.study_t), tau);
    let v0 = initial_profile(&surface, config, seed);
    let surface_run =
        SurfaceStepper::new(Arc::clone(&surface), surf_cfg, config.potential.clone())?.run(&v0, steps, &snaps)?;

    let results: Vec<(f64, Result<ConvergenceEntry>)> = config
        .epsilons
        .par_iter()
        .map(|&eps| (eps, study_entry(&surface, config, eps, &v0, &surface_run.snapshots, bulk_cfg, steps)))
        .collect();
    let mut entries = Vec::new();
    let mut failures = Vec::new();
    for (eps, r) in results {
        match r {
            Ok(e) => entries.push(e),
            Err(err) => failures.push(format!("epsilon {eps}: {err}")),
        }
    }
    let mut report = ConvergenceReport::new(entries, 1e-12);
    report.incomplete = !failures.is_empty();
    report.failures = failures;
    if config.chart != SurfaceChart::FlatSheet && config.alpha == 0.0 {
        for col in ["err_L2", "err_Lg", "err_bulk_u", "err_bulk_grad", "nd_scaled"] {
            report.require(col, 0.8)?;
        }
    }
    Ok(ConvergenceStudy { report, surface_run, tau })
}

/// One row of `residuals.csv`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualRow {
    pub epsilon: f64,
    pub zeta_delta_l2: f64,
    pub zeta_f_l2: f64,
    pub grad_zeta_delta_l2: f64,
}

#[derive(Debug, Clone)]
pub struct ResidualSweep {
    pub rows: Vec<ResidualRow>,
    /// Fitted slopes of the three residual columns.
    pub slopes: [Option<f64>; 3],
}

impl ResidualSweep {
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "epsilon,zeta_delta_L2,zeta_F_L2,grad_zeta_delta_L2")?;
        for r in &self.rows {
            writeln!(
                w,
                "{:.10e},{:.10e},{:.10e},{:.10e}",
                r.epsilon, r.zeta_delta_l2, r.zeta_f_l2, r.grad_zeta_delta_l2
            )?;
        }
        let s: Vec<String> = self.slopes.iter().map(|s| s.map_or("nan".into(), |x| format!("{x:.6}"))).collect();
        writeln!(w, "slope,{}", s.join(","))?;
        Ok(())
    }
}

/// `ζ_Δ` and `ζ_{F'}` of the manufactured fields `u = v̄0/J` for every ε.
pub fn residual_sweep(config: &ExperimentConfig, seed: u64) -> Result<ResidualSweep> {
    config.validate_study()?;
    let surface = SurfaceDomain::new(config.chart, config.thickness, config.n1, config.n2)?;
    let v0 = initial_profile(&surface, config, seed);
    let rows = config
        .epsilons
        .par_iter()
        .map(|&eps| -> Result<ResidualRow> {
            let grid = ReferenceGrid::new(config.n1, config.n2, config.n3, eps)?;
            let domain = BulkDomain::with_surface(Arc::clone(&surface), grid)?;
            let ctx = AveragingContext::new(Arc::clone(&domain));
            let u = domain.init_from_surface(&v0)?;
            let zd = ctx.residual_zeta_delta(&u)?;
            let zf = ctx.residual_zeta_f(&u, &config.potential)?;
            Ok(ResidualRow {
                epsilon: eps,
                zeta_delta_l2: analysis::surface_norm(&zd, NormKind::L2)?,
                zeta_f_l2: analysis::surface_norm(&zf, NormKind::L2)?,
                grad_zeta_delta_l2: surface.plain.bilinear(&zd.values, &zd.values).max(0.0).sqrt(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let fit = |f: fn(&ResidualRow) -> f64| -> Option<f64> {
        let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.epsilon, f(r))).collect();
        analysis::fit_rate(&pts).ok().map(|r| r.slope)
    };
    let slopes = [fit(|r| r.zeta_delta_l2), fit(|r| r.zeta_f_l2), fit(|r| r.grad_zeta_delta_l2)];
    Ok(ResidualSweep { rows, slopes })
}

/// Outcome of one verification check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub status: CheckStatus,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.status {
            CheckStatus::Pass => "PASS",
            CheckStatus::Fail => "FAIL",
            CheckStatus::Skipped => "SKIP",
        };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

#[derive(Debug, Clone, Default)]
pub struct VerificationReport {
    pub checks: Vec<CheckResult>,
}

impl VerificationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    fn push(&mut self, name: &'static str, result: Result<(bool, String)>) {
        let (status, detail) = match result {
            Ok((true, d)) => (CheckStatus::Pass, d),
            Ok((false, d)) => (CheckStatus::Fail, d),
            Err(e) => (CheckStatus::Fail, format!("error: {e}")),
        };
        self.checks.push(CheckResult { name, status, detail });
    }
}

const CHECK_NAMES: [&str; 8] = [
    "geometry_identities",
    "ellipticity",
    "pairing_exactness",
    "matched_data",
    "conservation",
    "energy_monotonicity",
    "lg_round_trip",
    "oracle_equivalence",
];

/// Relative drift `max |m_n - m_0| / scale` of a logged quantity.
fn drift(values: impl Iterator<Item = f64>, scale: f64) -> f64 {
    let v: Vec<f64> = values.collect();
    v.iter().map(|m| (m - v[0]).abs()).fold(0.0, f64::max) / scale
}

/// Largest per-step energy increase.
fn max_increase(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    v.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max)
}

/// Runs every module invariant on the configured geometry and reports one
/// line per check. A geometry-validity failure skips the remaining checks.
pub fn run_verification_suite(config: &ExperimentConfig, seed: u64) -> VerificationReport {
    let mut report = VerificationReport::default();
    let built = config.reference_grid().and_then(|grid| {
        grid.check_tubular(&config.chart, &config.thickness)?;
        BulkDomain::new(config.chart, config.thickness, grid)
    });
    let domain = match built {
        Ok(d) => d,
        Err(e) => {
            report.push(CHECK_NAMES[0], Err(e));
            for name in &CHECK_NAMES[1..] {
                report.checks.push(CheckResult {
                    name,
                    status: CheckStatus::Skipped,
                    detail: "geometry invalid".into(),
                });
            }
            return report;
        }
    };
    let coef = &domain.coefficients;
    report.push(
        CHECK_NAMES[0],
        Ok((coef.det_mismatch <= 1e-6, format!("max relative determinant mismatch {:.3e}", coef.det_mismatch))),
    );
    let rq = coef.min_rayleigh_quotient(1, 4, seed);
    report.push(
        CHECK_NAMES[1],
        Ok((
            rq > 0.0 && coef.c_ell > 0.0,
            format!("min eigenvalue {:.4e}, min sampled Rayleigh quotient {rq:.4e}", coef.c_ell),
        )),
    );
    let ctx = AveragingContext::new(Arc::clone(&domain));
    report.push(CHECK_NAMES[2], pairing_check(&ctx, seed));
    let surface = Arc::clone(&domain.surface);
    let v0 = initial_profile(&surface, config, seed);
    report.push(CHECK_NAMES[3], matched_check(&ctx, &v0));

    let dynamics = dynamics_checks(config, &domain, seed);
    match dynamics {
        Ok((cons, energy)) => {
            report.push(CHECK_NAMES[4], Ok(cons));
            report.push(CHECK_NAMES[5], Ok(energy));
        }
        Err(e) => {
            report.push(CHECK_NAMES[4], Err(Error::Evaluation(e.to_string())));
            report.push(CHECK_NAMES[5], Err(e));
        }
    }
    report.push(CHECK_NAMES[6], lg_check(&surface, seed));
    report.push(CHECK_NAMES[7], oracle_check(config, seed));
    report
}

fn pairing_check(ctx: &AveragingContext, seed: u64) -> Result<(bool, String)> {
    let d = ctx.domain();
    let mut g = Lcg::new(seed);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let u = d.field((0..d.len()).map(|_| g.symmetric()).collect())?;
        let eta = d.surface.field((0..d.surface.len()).map(|_| g.symmetric()).collect())?;
        let (lhs, _, res) = ctx.pairing_sides(&u, &eta)?;
        worst = worst.max(res / lhs.abs().max(f64::MIN_POSITIVE));
    }
    Ok((worst <= 1e-12, format!("max relative residual over 20 pairs {worst:.3e}")))
}

fn matched_check(ctx: &AveragingContext, v0: &SurfaceField) -> Result<(bool, String)> {
    let d = ctx.domain();
    let u0 = d.init_from_surface(v0)?;
    let back = ctx.average(&u0)?;
    let inf = back.values.iter().zip(&v0.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let bulk_mass = u0.mass();
    let surf_mass = d.grid.eps * v0.weighted_mass();
    let mass_err = (bulk_mass - surf_mass).abs() / bulk_mass.abs().max(d.volume());
    Ok((inf <= 1e-12 && mass_err <= 1e-12, format!("max |M u0 - v0| {inf:.3e}, relative mass mismatch {mass_err:.3e}")))
}

type Line = (bool, String);

fn dynamics_checks(config: &ExperimentConfig, domain: &Arc<BulkDomain>, seed: u64) -> Result<(Line, Line)> {
    let steps = config.verify_steps;
    let mut g = Lcg::new(seed);
    let u0 = domain.field((0..domain.len()).map(|_| config.v0_mean + 0.1 * g.symmetric()).collect())?;
    let bulk = BulkStepper::new(Arc::clone(domain), config.bulk, config.potential.clone())?.run(&u0, steps, &[])?;
    let surface = &domain.surface;
    let v0 = surface.field((0..surface.len()).map(|_| config.v0_mean + 0.1 * g.symmetric()).collect())?;
    let surf =
        SurfaceStepper::new(Arc::clone(surface), config.surface, config.potential.clone())?.run(&v0, steps, &[])?;

    let scale_b = domain.volume() * (1.0 + config.v0_mean.abs());
    let scale_s = surface.weighted.total_mass() * (1.0 + config.v0_mean.abs());
    let db = drift(bulk.log.iter().map(|r| r.mass), scale_b);
    let ds = drift(surf.log.iter().map(|r| r.weighted_mass), scale_s);
    let cons =
        (db <= 1e-10 && ds <= 1e-10, format!("{steps} steps: bulk mass drift {db:.3e}, surface mass drift {ds:.3e}"));
    let ib = max_increase(bulk.log.iter().map(|r| r.energy));
    let is = max_increase(surf.log.iter().map(|r| r.weighted_energy));
    let energy = (
        ib <= 1e-10 && is <= 1e-10,
        format!("{steps} steps: max per-step energy change bulk {ib:.3e}, surface {is:.3e}"),
    );
    Ok((cons, energy))
}

fn lg_check(surface: &Arc<SurfaceDomain>, seed: u64) -> Result<(bool, String)> {
    let mut g = Lcg::new(seed ^ 0x5eed);
    let (mut worst, mut worst_mean) = (0.0f64, 0.0f64);
    for _ in 0..10 {
        let mut f = surface.field((0..surface.len()).map(|_| g.symmetric()).collect())?;
        surface.weighted.remove_mean(&mut f.values);
        let phi = f.solve_lg(1e-13, 5000)?.phi;
        let back = phi.apply_ag();
        let res = surface.field(back.values.iter().zip(&f.values).map(|(a, b)| -a - b).collect())?;
        worst = worst.max(analysis::surface_norm(&res, NormKind::L2)?);
        worst_mean = worst_mean.max(phi.weighted_mean().abs());
    }
    Ok((
        worst <= 1e-8 && worst_mean <= 1e-12,
        format!("max ||-A_g L_g f - f|| {worst:.3e}, max weighted mean {worst_mean:.3e}"),
    ))
}

/// Flat-sheet grid solution against the spectral oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleComparison {
    pub n: usize,
    pub max_difference: f64,
}

/// Band-limited initial data for the oracle comparison.
pub fn oracle_initial_data(s: [f64; 2]) -> f64 {
    0.1 * (TAU * s[0]).sin() + 0.08 * (TAU * s[1]).cos() + 0.05 * (TAU * (s[0] + 2.0 * s[1])).sin()
}

/// Runs the bulk grid solver on a flat sheet with `s3`-independent data and
/// the spectral oracle on the same `n × n` grid to time `t_final`.
pub fn compare_with_oracle(
    n: usize,
    tau: f64,
    t_final: f64,
    potential: &Potential,
    tol_lin: f64,
) -> Result<OracleComparison> {
    let grid = ReferenceGrid::new(n, n, 2, 0.1)?;
    let domain = BulkDomain::new(SurfaceChart::FlatSheet, ThicknessProfile::constant(0.0, 1.0)?, grid)?;
    let cfg = StepperConfig { tau, stabilization: 2.0, tol_lin, max_iter: 2000 };
    let steps = (t_final / tau).round() as usize;
    let u0 = domain.field_from_fn(|s| oracle_initial_data([s[0], s[1]]));
    let bulk = BulkStepper::new(Arc::clone(&domain), cfg, potential.clone())?.run(&u0, steps, &[])?;
    let mut spec = SpectralState::from_fn(n, oracle_initial_data)?;
    for _ in 0..steps {
        spec = spectral_step(&spec, tau, potential, 2.0);
    }
    let cols = n * n;
    let mut worst = 0.0f64;
    let ref_vals = spec.values();
    for (p, v) in bulk.final_state.values.iter().enumerate() {
        worst = worst.max((v - ref_vals[p % cols]).abs());
    }
    Ok(OracleComparison { n, max_difference: worst })
}

fn oracle_check(config: &ExperimentConfig, _seed: u64) -> Result<(bool, String)> {
    let n = config.oracle_modes;
    let t = (config.verify_steps as f64 * config.oracle_tau).min(0.01);
    let c = compare_with_oracle(n, config.oracle_tau, t, &config.potential, config.bulk.tol_lin)?;
    Ok((c.max_difference <= 1e-3, format!("{n}x{n}, T = {t:.3e}: max |grid - spectral| {:.3e}", c.max_difference)))
}
