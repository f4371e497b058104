//! Acceptance suite: one PASS/FAIL line per criterion. Runs without the
//! libtest harness so the lines are always printed; exits nonzero when any
//! criterion fails.

use std::f64::consts::TAU;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use ctd_core::analysis::{self, NormKind};
use ctd_core::averaging::AveragingContext;
use ctd_core::bulk::{BulkDomain, BulkStepper};
use ctd_core::config::ExperimentConfig;
use ctd_core::geometry::{SurfaceChart, ThicknessProfile};
use ctd_core::potential::Potential;
use ctd_core::pullback::{build_coefficients, ReferenceGrid};
use ctd_core::rng::Lcg;
use ctd_core::scheme::StepperConfig;
use ctd_core::study;
use ctd_core::surface::{SurfaceDomain, SurfaceStepper};

type Outcome = Result<(bool, String), Box<dyn std::error::Error>>;

fn torus() -> SurfaceChart {
    SurfaceChart::torus(2.0, 1.0).unwrap()
}

fn unit_thickness() -> ThicknessProfile {
    ThicknessProfile::constant(0.0, 1.0).unwrap()
}

fn geometry_identities() -> Outcome {
    let start = Instant::now();
    let grid = ReferenceGrid::new(32, 32, 8, 0.1)?;
    let c = build_coefficients(&torus(), &unit_thickness(), &grid)?;
    let t = start.elapsed();
    Ok((
        c.det_mismatch <= 1e-6 && t < Duration::from_secs(5),
        format!("max relative |det3x3 - g J sqrt(det theta)| = {:.2e}, {:.2?}", c.det_mismatch, t),
    ))
}

fn ellipticity() -> Outcome {
    let mut consts = Vec::new();
    for eps in [0.2, 0.1, 0.05] {
        let c = build_coefficients(&torus(), &unit_thickness(), &ReferenceGrid::new(32, 32, 8, eps)?)?;
        let rq = c.min_rayleigh_quotient(1, 8, 11);
        if !(rq > 0.0 && c.c_ell > 0.0) {
            return Ok((false, format!("epsilon {eps}: nonpositive Rayleigh quotient {rq:.3e}")));
        }
        consts.push((eps, rq, c.c_ell));
    }
    let reference = consts[1].2;
    let spread = consts.iter().map(|c| (c.2 - reference).abs() / reference).fold(0.0, f64::max);
    let detail: Vec<String> =
        consts.iter().map(|(e, rq, ce)| format!("eps {e}: min RQ {rq:.4}, c_ell {ce:.4}")).collect();
    Ok((spread <= 0.1, format!("{}; spread {:.1}%", detail.join(", "), 100.0 * spread)))
}

fn pairing() -> Outcome {
    let mut worst = 0.0f64;
    let mut g = Lcg::new(2024);
    for (chart, profile, eps) in
        [(torus(), ThicknessProfile::sinusoidal(0.3, 1)?, 0.1), (SurfaceChart::FlatSheet, unit_thickness(), 0.1)]
    {
        let d = BulkDomain::new(chart, profile, ReferenceGrid::new(32, 16, 8, eps)?)?;
        let ctx = AveragingContext::new(Arc::clone(&d));
        for _ in 0..20 {
            let u = d.field((0..d.len()).map(|_| g.symmetric()).collect())?;
            let eta = d.surface.field((0..d.surface.len()).map(|_| g.symmetric()).collect())?;
            let (lhs, _, res) = ctx.pairing_sides(&u, &eta)?;
            worst = worst.max(res / lhs.abs());
        }
    }
    Ok((worst <= 1e-12, format!("max relative residual over 2 x 20 pairs {worst:.2e}")))
}

fn matched_data() -> Outcome {
    let (mut inf, mut mass) = (0.0f64, 0.0f64);
    for profile in [unit_thickness(), ThicknessProfile::sinusoidal(0.3, 2)?] {
        let d = BulkDomain::new(torus(), profile, ReferenceGrid::new(48, 24, 8, 0.1)?)?;
        let ctx = AveragingContext::new(Arc::clone(&d));
        let v0 = d.surface.field_from_fn(|s| 0.1 * (TAU * s[0]).sin() + 0.05 * (TAU * s[1]).cos() + 0.2);
        let u0 = d.init_from_surface(&v0)?;
        let back = ctx.average(&u0)?;
        inf = inf.max(back.values.iter().zip(&v0.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        let (bm, sm) = (u0.mass(), d.grid.eps * v0.weighted_mass());
        mass = mass.max((bm - sm).abs() / bm.abs());
    }
    Ok((
        inf <= 1e-12 && mass <= 1e-12,
        format!("max |M u0 - v0| {inf:.2e}, relative weighted-mass mismatch {mass:.2e}"),
    ))
}

fn random_bulk(d: &Arc<BulkDomain>, seed: u64, mean: f64) -> ctd_core::bulk::BulkField {
    let mut g = Lcg::new(seed);
    d.field((0..d.len()).map(|_| mean + 0.1 * g.symmetric()).collect()).unwrap()
}

fn random_surface(d: &Arc<SurfaceDomain>, seed: u64, mean: f64) -> ctd_core::surface::SurfaceField {
    let mut g = Lcg::new(seed);
    d.field((0..d.len()).map(|_| mean + 0.1 * g.symmetric()).collect()).unwrap()
}

fn conservation() -> Outcome {
    let cfg = StepperConfig { tau: 1e-5, stabilization: 2.0, tol_lin: 1e-11, max_iter: 2000 };
    let pot = Potential::quartic_double_well();
    let d = BulkDomain::new(torus(), ThicknessProfile::sinusoidal(0.3, 1)?, ReferenceGrid::new(32, 16, 4, 0.1)?)?;
    let u0 = random_bulk(&d, 5, 0.1);
    let scale: f64 = u0.values.iter().zip(d.stencil.mass()).map(|(u, m)| (u * m).abs()).sum();
    let run = BulkStepper::new(Arc::clone(&d), cfg, pot.clone())?.run(&u0, 1000, &[])?;
    let db = run.log.iter().map(|r| (r.mass - run.log[0].mass).abs()).fold(0.0, f64::max) / scale;
    let s = Arc::clone(&d.surface);
    let v0 = random_surface(&s, 6, 0.1);
    let sscale: f64 = v0.values.iter().zip(s.weighted.mass()).map(|(u, m)| (u * m).abs()).sum();
    let srun = SurfaceStepper::new(Arc::clone(&s), cfg, pot)?.run(&v0, 1000, &[])?;
    let ds = srun.log.iter().map(|r| (r.weighted_mass - srun.log[0].weighted_mass).abs()).fold(0.0, f64::max) / sscale;
    Ok((db <= 1e-10 && ds <= 1e-10, format!("1000 steps: bulk drift {db:.2e}, surface drift {ds:.2e}")))
}

fn energy_dissipation() -> Outcome {
    let start = Instant::now();
    let cfg = StepperConfig { tau: 1e-5, stabilization: 2.0, tol_lin: 1e-11, max_iter: 2000 };
    let pot = Potential::quartic_double_well();
    let d = BulkDomain::new(torus(), unit_thickness(), ReferenceGrid::new(64, 32, 8, 0.1)?)?;
    let run = BulkStepper::new(Arc::clone(&d), cfg, pot.clone())?.run(&random_bulk(&d, 7, 0.0), 500, &[])?;
    let ib = run.log.windows(2).map(|w| w[1].energy - w[0].energy).fold(f64::NEG_INFINITY, f64::max);
    let s = Arc::clone(&d.surface);
    let srun = SurfaceStepper::new(Arc::clone(&s), cfg, pot)?.run(&random_surface(&s, 8, 0.0), 500, &[])?;
    let is = srun.log.windows(2).map(|w| w[1].weighted_energy - w[0].weighted_energy).fold(f64::NEG_INFINITY, f64::max);
    let t = start.elapsed();
    Ok((
        ib <= 1e-10 && is <= 1e-10 && t < Duration::from_secs(120),
        format!("500 steps at 64x32x8: max per-step change bulk {ib:.2e}, surface {is:.2e}, {t:.2?}"),
    ))
}

fn oracle_equivalence() -> Outcome {
    let pot = Potential::quartic_double_well();
    let mut pts = Vec::new();
    for n in [32, 64, 128] {
        let c = study::compare_with_oracle(n, 1e-5, 0.01, &pot, 1e-13)?;
        pts.push((1.0 / n as f64, c.max_difference));
    }
    let slope = analysis::fit_rate(&pts)?.slope;
    let at64 = pts[1].1;
    Ok((
        at64 <= 1e-3 && (slope - 2.0).abs() <= 0.3,
        format!("L_inf at 32/64/128: {:.2e}/{:.2e}/{:.2e}, slope {slope:.3}", pts[0].1, pts[1].1, pts[2].1),
    ))
}

fn residual_rates() -> Outcome {
    let cfg = ExperimentConfig::parse("study.epsilons = 0.2, 0.1, 0.05")?;
    let sweep = study::residual_sweep(&cfg, 1)?;
    let (sd, sf) = (sweep.slopes[0].unwrap_or(f64::NAN), sweep.slopes[1].unwrap_or(f64::NAN));

    let eps = 0.1;
    let d = BulkDomain::new(SurfaceChart::FlatSheet, unit_thickness(), ReferenceGrid::new(8, 8, 8192, eps)?)?;
    let ctx = AveragingContext::new(Arc::clone(&d));
    let lin = d.field_from_fn(|s| s[2]);
    let z = ctx.residual_zeta(&lin, |x| x * x)?;
    let dev = z.values.iter().map(|v| (v - eps * eps / 12.0).abs()).fold(0.0, f64::max);
    Ok((
        sd >= 0.8 && sf >= 0.8 && dev <= 1e-10,
        format!("slopes zeta_delta {sd:.3}, zeta_F {sf:.3}; |zeta - eps^2/12| = {dev:.2e}"),
    ))
}

fn lg_operator() -> Outcome {
    let s = SurfaceDomain::new(torus(), ThicknessProfile::sinusoidal(0.3, 1)?, 48, 24)?;
    let mut g = Lcg::new(12);
    let (mut worst, mut mean) = (0.0f64, 0.0f64);
    for _ in 0..10 {
        let mut f = s.field((0..s.len()).map(|_| g.symmetric()).collect())?;
        s.weighted.remove_mean(&mut f.values);
        let phi = f.solve_lg(1e-13, 5000)?.phi;
        let back = phi.apply_ag();
        let r = s.field(back.values.iter().zip(&f.values).map(|(a, b)| -a - b).collect())?;
        worst = worst.max(analysis::surface_norm(&r, NormKind::L2)?);
        mean = mean.max(phi.weighted_mean().abs());
    }
    Ok((worst <= 1e-8 && mean <= 1e-12, format!("max residual {worst:.2e}, max weighted mean {mean:.2e}")))
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |n: usize, name: &str, out: Outcome| {
        let (ok, detail) = out.unwrap_or_else(|e| (false, format!("error: {e}")));
        if !ok {
            failed += 1;
        }
        println!("criterion {n:2} {} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    };
    report(1, "geometry identities", geometry_identities());
    report(2, "ellipticity", ellipticity());
    report(3, "averaging pairing identity", pairing());
    report(4, "matched initial data", matched_data());
    report(5, "conservation", conservation());
    report(6, "energy dissipation", energy_dissipation());
    report(7, "oracle equivalence", oracle_equivalence());

    let start = Instant::now();
    let cfg = ExperimentConfig::default();
    let study = study::run_convergence_study(&cfg, 1);
    let elapsed = start.elapsed();
    match study {
        Ok(s) => {
            let r = &s.report;
            let slope = |c: &str| r.slope(c).unwrap_or(f64::NAN);
            let complete = !r.incomplete && r.entries.len() == 4;
            let (l2, lg) = (slope("err_L2"), slope("err_Lg"));
            report(
                8,
                "thin-film convergence",
                Ok((
                    complete && l2 >= 0.8 && lg >= 0.8 && elapsed <= Duration::from_secs(900),
                    format!("slopes L2 {l2:.3}, L_g {lg:.3} (H1 {:.3}); {elapsed:.1?}", slope("err_H1")),
                )),
            );
            let (bu, bg) = (slope("err_bulk_u"), slope("err_bulk_grad"));
            report(
                9,
                "bulk difference",
                Ok((complete && bu >= 0.8 && bg >= 0.8, format!("slopes u {bu:.3}, grad {bg:.3}"))),
            );
            let nd = slope("nd_scaled");
            report(10, "normal derivative", Ok((complete && nd >= 0.8, format!("slope {nd:.3}"))));
        }
        Err(e) => {
            for (n, name) in [(8, "thin-film convergence"), (9, "bulk difference"), (10, "normal derivative")] {
                report(n, name, Ok((false, format!("study failed: {e}"))));
            }
        }
    }
    report(11, "residual rates", residual_rates());
    report(12, "L_g operator", lg_operator());

    if failed == 0 {
        println!("acceptance: all 12 criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} criteria failed");
        ExitCode::FAILURE
    }
}
