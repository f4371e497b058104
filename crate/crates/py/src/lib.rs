//! Python bindings: surface and shell geometries, the two time integrators,
//! the averaging operator, the verification suite and a few oracles.

use std::sync::Arc;

use ctd_core::averaging::AveragingContext;
use ctd_core::bulk::{BulkDomain, BulkStepper};
use ctd_core::config::ExperimentConfig;
use ctd_core::geometry::{SurfaceChart, ThicknessProfile};
use ctd_core::oracle::{spectral_step as core_spectral_step, SpectralState};
use ctd_core::potential::Potential;
use ctd_core::pullback::ReferenceGrid;
use ctd_core::scheme::StepperConfig;
use ctd_core::surface::{SurfaceDomain, SurfaceStepper};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

create_exception!(ctd, CtdError, PyException);

type SurfaceLog = Vec<(usize, f64, f64, f64, f64)>;
type BulkLog = Vec<(usize, f64, f64, f64, f64, f64)>;

fn err(e: ctd_core::error::Error) -> PyErr {
    CtdError::new_err(e.to_string())
}

fn chart(kind: &str, major: f64, minor: f64) -> PyResult<SurfaceChart> {
    match kind {
        "torus" => SurfaceChart::torus(major, minor).map_err(err),
        "flat_sheet" => Ok(SurfaceChart::FlatSheet),
        "unit_sphere_patch" => Ok(SurfaceChart::UnitSpherePatch),
        other => Err(CtdError::new_err(format!("unknown surface '{other}'"))),
    }
}

fn thickness(preset: &str, params: &[f64]) -> PyResult<ThicknessProfile> {
    match (preset, params) {
        ("constant", [g0, g1]) => ThicknessProfile::constant(*g0, *g1).map_err(err),
        ("sinusoidal", [a, f]) if *f >= 0.0 && f.fract() == 0.0 => {
            ThicknessProfile::sinusoidal(*a, *f as u32).map_err(err)
        }
        _ => Err(CtdError::new_err(format!("bad thickness preset '{preset}' with params {params:?}"))),
    }
}

/// Principal curvatures `(kappa1, kappa2, H, K)` at chart point `(s1, s2)`.
#[pyfunction]
#[pyo3(signature = (s1, s2, kind = "torus", major = 2.0, minor = 1.0))]
fn shape_data(s1: f64, s2: f64, kind: &str, major: f64, minor: f64) -> PyResult<(f64, f64, f64, f64)> {
    let d = chart(kind, major, minor)?.shape_data([s1, s2]).map_err(err)?;
    Ok((d.kappa1, d.kappa2, d.mean_curvature, d.gauss_curvature))
}

/// A closed surface sampled on a periodic `n1 x n2` chart grid.
#[pyclass(frozen)]
struct Surface {
    inner: Arc<SurfaceDomain>,
}

#[pymethods]
impl Surface {
    #[new]
    #[pyo3(signature = (n1 = 48, n2 = 24, kind = "torus", major = 2.0, minor = 1.0, thickness_preset = "constant", params = vec![0.0, 1.0]))]
    fn new(
        n1: usize,
        n2: usize,
        kind: &str,
        major: f64,
        minor: f64,
        thickness_preset: &str,
        params: Vec<f64>,
    ) -> PyResult<Self> {
        let inner = SurfaceDomain::new(chart(kind, major, minor)?, thickness(thickness_preset, &params)?, n1, n2)
            .map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.inner.n1, self.inner.n2)
    }

    fn area(&self) -> f64 {
        self.inner.area()
    }

    /// Chart coordinates of every node, `s1` fastest.
    fn points(&self) -> Vec<(f64, f64)> {
        (0..self.inner.len()).map(|p| self.inner.point(p)).map(|s| (s[0], s[1])).collect()
    }

    fn weighted_mass(&self, values: Vec<f64>) -> PyResult<f64> {
        Ok(self.inner.field(values).map_err(err)?.weighted_mass())
    }

    fn apply_ag(&self, values: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.inner.field(values).map_err(err)?.apply_ag().values)
    }

    /// `L_g f`; a nonzero weighted mean of `f` is projected off first.
    #[pyo3(signature = (values, tol = 1e-12))]
    fn solve_lg(&self, values: Vec<f64>, tol: f64) -> PyResult<Vec<f64>> {
        let f = self.inner.field(values).map_err(err)?;
        Ok(f.solve_lg(tol, 5000).map_err(err)?.phi.values)
    }

    /// Integrates the weighted surface equation. Returns the final state and
    /// rows `(step, time, weighted_mass, weighted_energy, grad_mu_norm)`.
    #[pyo3(signature = (v0, steps, tau = 1e-5, stabilization = 2.0, tol_lin = 1e-11))]
    fn simulate(
        &self,
        py: Python<'_>,
        v0: Vec<f64>,
        steps: usize,
        tau: f64,
        stabilization: f64,
        tol_lin: f64,
    ) -> PyResult<(Vec<f64>, SurfaceLog)> {
        let v0 = self.inner.field(v0).map_err(err)?;
        let cfg = StepperConfig { tau, stabilization, tol_lin, max_iter: 2000 };
        let stepper =
            SurfaceStepper::new(Arc::clone(&self.inner), cfg, Potential::quartic_double_well()).map_err(err)?;
        let run = py.detach(|| stepper.run(&v0, steps, &[])).map_err(err)?;
        let log =
            run.log.iter().map(|r| (r.step, r.time, r.weighted_mass, r.weighted_energy, r.grad_mu_norm)).collect();
        Ok((run.final_state.values, log))
    }
}

/// The thin shell of thickness `eps` over a [`Surface`], on an
/// `n1 x n2 x (n3 + 1)` reference grid.
#[pyclass(frozen)]
struct Shell {
    inner: Arc<BulkDomain>,
    averaging: AveragingContext,
}

#[pymethods]
impl Shell {
    #[new]
    #[pyo3(signature = (surface, n3 = 8, eps = 0.1))]
    fn new(surface: &Surface, n3: usize, eps: f64) -> PyResult<Self> {
        let grid = ReferenceGrid::new(surface.inner.n1, surface.inner.n2, n3, eps).map_err(err)?;
        let inner = BulkDomain::with_surface(Arc::clone(&surface.inner), grid).map_err(err)?;
        let averaging = AveragingContext::new(Arc::clone(&inner));
        Ok(Self { inner, averaging })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn eps(&self) -> f64 {
        self.inner.grid.eps
    }

    /// Largest relative mismatch between the two Jacobian determinants.
    #[getter]
    fn det_mismatch(&self) -> f64 {
        self.inner.coefficients.det_mismatch
    }

    /// Smallest eigenvalue of the pulled-back coefficient matrix.
    #[getter]
    fn ellipticity(&self) -> f64 {
        self.inner.coefficients.c_ell
    }

    fn volume(&self) -> f64 {
        self.inner.volume()
    }

    fn init_from_surface(&self, v0: Vec<f64>) -> PyResult<Vec<f64>> {
        let v0 = self.inner.surface.field(v0).map_err(err)?;
        Ok(self.inner.init_from_surface(&v0).map_err(err)?.values)
    }

    fn average(&self, u: Vec<f64>) -> PyResult<Vec<f64>> {
        let u = self.inner.field(u).map_err(err)?;
        Ok(self.averaging.average(&u).map_err(err)?.values)
    }

    fn pairing_residual(&self, u: Vec<f64>, eta: Vec<f64>) -> PyResult<f64> {
        let u = self.inner.field(u).map_err(err)?;
        let eta = self.inner.surface.field(eta).map_err(err)?;
        self.averaging.pairing_residual(&u, &eta).map_err(err)
    }

    fn laplacian(&self, u: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.inner.field(u).map_err(err)?.discrete_laplacian().values)
    }

    fn mass(&self, u: Vec<f64>) -> PyResult<f64> {
        Ok(self.inner.field(u).map_err(err)?.mass())
    }

    fn zeta_delta(&self, u: Vec<f64>) -> PyResult<Vec<f64>> {
        let u = self.inner.field(u).map_err(err)?;
        Ok(self.averaging.residual_zeta_delta(&u).map_err(err)?.values)
    }

    fn zeta_f(&self, u: Vec<f64>) -> PyResult<Vec<f64>> {
        let u = self.inner.field(u).map_err(err)?;
        Ok(self.averaging.residual_zeta_f(&u, &Potential::quartic_double_well()).map_err(err)?.values)
    }

    /// Integrates the bulk equation. Returns the final state and rows
    /// `(step, time, mass, energy, grad_w_norm, normal_deriv_norm)`.
    #[pyo3(signature = (u0, steps, tau = 1e-5, stabilization = 2.0, tol_lin = 1e-11))]
    fn simulate(
        &self,
        py: Python<'_>,
        u0: Vec<f64>,
        steps: usize,
        tau: f64,
        stabilization: f64,
        tol_lin: f64,
    ) -> PyResult<(Vec<f64>, BulkLog)> {
        let u0 = self.inner.field(u0).map_err(err)?;
        let cfg = StepperConfig { tau, stabilization, tol_lin, max_iter: 2000 };
        let stepper = BulkStepper::new(Arc::clone(&self.inner), cfg, Potential::quartic_double_well()).map_err(err)?;
        let run = py.detach(|| stepper.run(&u0, steps, &[])).map_err(err)?;
        let log =
            run.log.iter().map(|r| (r.step, r.time, r.mass, r.energy, r.grad_w_norm, r.normal_deriv_norm)).collect();
        Ok((run.final_state.values, log))
    }
}

/// Least-squares slope, intercept and residual of `log(error)` vs `log(eps)`.
#[pyfunction]
fn fit_rate(points: Vec<(f64, f64)>) -> PyResult<(f64, f64, f64)> {
    let r = ctd_core::analysis::fit_rate(&points).map_err(err)?;
    Ok((r.slope, r.intercept, r.residual))
}

/// Runs the verification suite; returns `(name, status, detail)` triples.
#[pyfunction]
#[pyo3(signature = (config = "", seed = 1))]
fn verify(py: Python<'_>, config: &str, seed: u64) -> PyResult<Vec<(String, String, String)>> {
    let cfg = ExperimentConfig::parse(config).map_err(err)?;
    let report = py.detach(|| ctd_core::study::run_verification_suite(&cfg, seed));
    Ok(report
        .checks
        .into_iter()
        .map(|c| (c.name.to_string(), format!("{:?}", c.status).to_lowercase(), c.detail))
        .collect())
}

/// One stabilized spectral step of the quartic Cahn-Hilliard equation on
/// the flat `n x n` periodic grid.
#[pyfunction]
#[pyo3(signature = (values, n, tau, stabilization = 2.0))]
fn spectral_step(values: Vec<f64>, n: usize, tau: f64, stabilization: f64) -> PyResult<Vec<f64>> {
    let s = SpectralState::from_values(n, &values).map_err(err)?;
    Ok(core_spectral_step(&s, tau, &Potential::quartic_double_well(), stabilization).values())
}

#[pymodule]
fn ctd(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("CtdError", m.py().get_type::<CtdError>())?;
    m.add_class::<Surface>()?;
    m.add_class::<Shell>()?;
    m.add_function(wrap_pyfunction!(shape_data, m)?)?;
    m.add_function(wrap_pyfunction!(fit_rate, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(spectral_step, m)?)?;
    Ok(())
}
