//! Norms, bulk–surface difference metrics and log–log rate fitting.

use std::io::Write;

use crate::bulk::BulkField;
use crate::error::{Error, Result};
use crate::surface::{SurfaceDomain, SurfaceField};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    L2,
    H1,
    /// `‖√g ∇_Γ L_g v‖`, defined for weighted-mean-zero `v`.
    LgSemi,
}

/// Tolerance of the inner `L_g` solve used by [`NormKind::LgSemi`].
const LG_TOL: f64 = 1e-12;

pub fn surface_norm(v: &SurfaceField, kind: NormKind) -> Result<f64> {
    let d = &v.domain;
    let l2sq: f64 = d.plain.mass().iter().zip(&v.values).map(|(m, x)| m * x * x).sum();
    match kind {
        NormKind::L2 => Ok(l2sq.sqrt()),
        NormKind::H1 => Ok((l2sq + d.plain.bilinear(&v.values, &v.values).max(0.0)).sqrt()),
        NormKind::LgSemi => {
            let mean = v.weighted_mean();
            if mean.abs() > 1e-9 {
                return Err(Error::Precondition(format!(
                    "L_g seminorm needs a weighted-mean-zero argument, mean is {mean:e}"
                )));
            }
            let phi = v.solve_lg(LG_TOL, 5000)?.phi;
            Ok(phi.weighted_gradient_norm())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BulkDifference {
    /// `ε^{-1/2} ‖u - v̄‖_{L²(Ω_ε)}`.
    pub e_u: f64,
    /// `ε^{-1/2} ‖P̄∇u - ∇_Γ v‖_{L²(Ω_ε)}`.
    pub e_grad: f64,
}

pub fn bulk_difference(u: &BulkField, v: &SurfaceField) -> Result<BulkDifference> {
    let d = &u.domain;
    if v.values.len() != d.surface.len() {
        return Err(Error::Precondition("surface field does not match the bulk grid".into()));
    }
    let cols = d.shape().columns();
    let mass = d.stencil.mass();
    let [dv1, dv2] = crate::averaging::chart_derivatives(v);
    let grad_v: Vec<_> = (0..cols).map(|c| d.surface.samples[c].tangential_gradient([dv1[c], dv2[c]])).collect();
    let grad_u = u.ambient_gradient();
    let (mut su, mut sg) = (0.0, 0.0);
    for p in 0..u.values.len() {
        let c = p % cols;
        let du = u.values[p] - v.values[c];
        su += mass[p] * du * du;
        let dg = d.surface.samples[c].projection * grad_u[p] - grad_v[c];
        sg += mass[p] * dg.norm_squared();
    }
    let scale = d.grid.eps.powf(-0.5);
    Ok(BulkDifference { e_u: scale * su.sqrt(), e_grad: scale * sg.sqrt() })
}

/// `ε^{-1/2} ‖∂_ν u‖_{L²(Ω_ε)}`.
pub fn scaled_normal_derivative(u: &BulkField) -> f64 {
    u.normal_derivative_norm() / u.domain.grid.eps.sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual in `log(error)`.
    pub residual: f64,
}

/// Least-squares fit of `log(error) = slope·log(ε) + intercept`.
pub fn fit_rate(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 3 {
        return Err(Error::Fitting(format!("need at least 3 points, got {}", points.len())));
    }
    if let Some((e, err)) = points.iter().find(|(e, err)| !(*e > 0.0 && *err > 0.0 && err.is_finite())) {
        return Err(Error::Fitting(format!("nonpositive entry ({e}, {err})")));
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Fitting("all epsilon values coincide".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (xs.iter().zip(&ys).map(|(x, y)| (y - slope * x - intercept).powi(2)).sum::<f64>() / n).sqrt();
    Ok(RateFit { slope, intercept, residual })
}

/// Smallest nonzero eigenvalue of `-A_g` by inverse power iteration with
/// `L_g`, started from a deterministic pseudo-random vector.
pub fn smallest_weighted_eigenvalue(domain: &std::sync::Arc<SurfaceDomain>, iterations: usize) -> Result<f64> {
    let mut rng = crate::rng::Lcg::new(7);
    let mut x = domain.field((0..domain.len()).map(|_| rng.symmetric()).collect())?;
    domain.weighted.remove_mean(&mut x.values);
    let wdot = |a: &[f64], b: &[f64]| -> f64 {
        a.iter().zip(b).zip(domain.weighted.mass()).map(|((x, y), m)| x * y * m).sum()
    };
    let mut mu = 0.0;
    for _ in 0..iterations.max(1) {
        let nrm = wdot(&x.values, &x.values).sqrt();
        x.values.iter_mut().for_each(|v| *v /= nrm);
        let y = x.solve_lg(1e-12, 5000)?.phi;
        mu = wdot(&x.values, &y.values);
        x = y;
    }
    if !(mu > 0.0) {
        return Err(Error::Evaluation("power iteration did not find a positive eigenvalue".into()));
    }
    Ok(1.0 / mu)
}

/// Error columns of a convergence study, in CSV order.
pub const ERROR_COLUMNS: [&str; 6] = ["err_L2", "err_H1", "err_Lg", "err_bulk_u", "err_bulk_grad", "nd_scaled"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceEntry {
    pub epsilon: f64,
    pub err_l2: f64,
    pub err_h1: f64,
    pub err_lg: f64,
    pub err_bulk_u: f64,
    pub err_bulk_grad: f64,
    pub nd_scaled: f64,
}

impl ConvergenceEntry {
    pub fn errors(&self) -> [f64; 6] {
        [self.err_l2, self.err_h1, self.err_lg, self.err_bulk_u, self.err_bulk_grad, self.nd_scaled]
    }
}

/// A threshold on the fitted slope of one error column.
#[derive(Debug, Clone, PartialEq)]
pub struct RateCheck {
    pub column: usize,
    pub min_slope: f64,
    pub slope: Option<f64>,
    pub passed: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConvergenceReport {
    pub entries: Vec<ConvergenceEntry>,
    /// One fit per error column; `None` when not applicable (too few
    /// entries or errors at round-off).
    pub fitted_rates: Vec<Option<RateFit>>,
    pub checks: Vec<RateCheck>,
    /// Set when some ε-entry failed.
    pub incomplete: bool,
    pub failures: Vec<String>,
}

impl ConvergenceReport {
    /// Sorts entries by decreasing ε and fits every column. Columns whose
    /// errors all fall below `floor` are reported as not applicable.
    pub fn new(mut entries: Vec<ConvergenceEntry>, floor: f64) -> Self {
        entries.sort_by(|a, b| b.epsilon.total_cmp(&a.epsilon));
        let fitted_rates = (0..ERROR_COLUMNS.len())
            .map(|c| {
                let pts: Vec<(f64, f64)> = entries.iter().map(|e| (e.epsilon, e.errors()[c])).collect();
                if pts.iter().all(|p| p.1 <= floor) {
                    None
                } else {
                    fit_rate(&pts).ok()
                }
            })
            .collect();
        Self { entries, fitted_rates, checks: Vec::new(), incomplete: false, failures: Vec::new() }
    }

    pub fn slope(&self, column: &str) -> Option<f64> {
        let c = ERROR_COLUMNS.iter().position(|n| *n == column)?;
        self.fitted_rates.get(c).copied().flatten().map(|f| f.slope)
    }

    /// Adds a slope threshold on a column; missing fits fail.
    pub fn require(&mut self, column: &str, min_slope: f64) -> Result<bool> {
        let c = ERROR_COLUMNS
            .iter()
            .position(|n| *n == column)
            .ok_or_else(|| Error::Config(format!("unknown error column {column}")))?;
        let slope = self.fitted_rates.get(c).copied().flatten().map(|f| f.slope);
        let passed = !self.incomplete && slope.is_some_and(|s| s >= min_slope);
        self.checks.push(RateCheck { column: c, min_slope, slope, passed });
        Ok(passed)
    }

    pub fn all_passed(&self) -> bool {
        !self.incomplete && self.checks.iter().all(|c| c.passed)
    }

    /// `convergence.csv`: one row per ε, then `slope` and `intercept` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "epsilon,{}", ERROR_COLUMNS.join(","))?;
        for e in &self.entries {
            let cols: Vec<String> = e.errors().iter().map(|x| format!("{x:.10e}")).collect();
            writeln!(w, "{:.10e},{}", e.epsilon, cols.join(","))?;
        }
        let fmt = |f: &dyn Fn(&RateFit) -> f64| -> String {
            self.fitted_rates
                .iter()
                .map(|r| r.as_ref().map_or_else(|| "nan".to_string(), |r| format!("{:.6}", f(r))))
                .collect::<Vec<_>>()
                .join(",")
        };
        writeln!(w, "slope,{}", fmt(&|r| r.slope))?;
        writeln!(w, "intercept,{}", fmt(&|r| r.intercept))?;
        Ok(())
    }
}
