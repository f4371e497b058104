//! Cahn–Hilliard dynamics in the thin shell, discretized on the reference box.
//!
//! Nodes carry `U = u∘Ψ_ε`. The Laplacian is the divergence-form stencil of
//! `(1/det∇Ψ) div_s(A_ε ∇_s U)`; Neumann conditions are natural (no boundary
//! flux) and `s1, s2` wrap periodically.

use std::io::Write;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{Mat3, SurfaceChart, ThicknessProfile, Vec3};
use crate::potential::Potential;
use crate::pullback::{build_coefficients, pullback_gradient, PullbackCoefficients, ReferenceGrid};
use crate::scheme::{self, StabilizedScheme, StepperConfig};
use crate::stencil::{DivStencil, GridShape};
use crate::surface::{SurfaceDomain, SurfaceField};

/// Geometry, coefficients and operator of one thin shell at one `ε`.
#[derive(Debug)]
pub struct BulkDomain {
    pub grid: ReferenceGrid,
    pub coefficients: PullbackCoefficients,
    pub surface: Arc<SurfaceDomain>,
    pub stencil: DivStencil,
    /// `(∇_sΨ)⁻¹` per node; maps chart gradients to ambient gradients.
    pub inverse_gradient: Vec<Mat3>,
}

impl BulkDomain {
    pub fn new(chart: SurfaceChart, profile: ThicknessProfile, grid: ReferenceGrid) -> Result<Arc<Self>> {
        let surface = SurfaceDomain::new(chart, profile, grid.n1, grid.n2)?;
        Self::with_surface(surface, grid)
    }

    /// Builds the shell over an existing surface grid of the same size.
    pub fn with_surface(surface: Arc<SurfaceDomain>, grid: ReferenceGrid) -> Result<Arc<Self>> {
        if surface.n1 != grid.n1 || surface.n2 != grid.n2 {
            return Err(Error::Precondition("surface grid and reference grid differ".into()));
        }
        let coefficients = build_coefficients(&surface.chart, &surface.profile, &grid)?;
        let shape = grid.shape();
        let stencil = DivStencil::new(shape, grid.h(), coefficients.det_jac.clone(), &coefficients.aeps);
        let mut inverse_gradient = Vec::with_capacity(shape.len());
        for k in 0..shape.nl {
            for c in 0..shape.columns() {
                let smp = &surface.samples[c];
                let th = &surface.thickness[c];
                let m = pullback_gradient(smp, grid.eps, grid.s3(k), th.g0, th.g1, th.chart_grad_g0, th.chart_grad_g1);
                inverse_gradient.push(m.try_inverse().ok_or_else(|| {
                    Error::GeometryValidity(format!("singular pullback gradient at node {}", k * shape.columns() + c))
                })?);
            }
        }
        Ok(Arc::new(Self { grid, coefficients, surface, stencil, inverse_gradient }))
    }

    pub fn shape(&self) -> GridShape {
        self.grid.shape()
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Shell volume `Σ w det∇Ψ`.
    pub fn volume(&self) -> f64 {
        self.stencil.total_mass()
    }

    pub fn field(self: &Arc<Self>, values: Vec<f64>) -> Result<BulkField> {
        BulkField::new(Arc::clone(self), values)
    }

    /// Field from a function of `(s1, s2, s3)`.
    pub fn field_from_fn(self: &Arc<Self>, f: impl Fn([f64; 3]) -> f64) -> BulkField {
        let shape = self.shape();
        let mut values = Vec::with_capacity(shape.len());
        for k in 0..shape.nl {
            for j in 0..shape.n2 {
                for i in 0..shape.n1 {
                    let sp = self.grid.surface_point(i, j);
                    values.push(f([sp[0], sp[1], self.grid.s3(k)]));
                }
            }
        }
        BulkField { values, domain: Arc::clone(self) }
    }

    /// Matched initial data `U(s', s3) = v0(s') / J(ψ(s'), r(s))`.
    pub fn init_from_surface(self: &Arc<Self>, v0: &SurfaceField) -> Result<BulkField> {
        if !Arc::ptr_eq(&v0.domain, &self.surface) && v0.values.len() != self.surface.len() {
            return Err(Error::Precondition("surface field lives on a different grid".into()));
        }
        let cols = self.shape().columns();
        let jv = &self.coefficients.jval;
        if jv.iter().any(|&j| !(j > 0.0)) {
            return Err(Error::GeometryValidity("non-positive J".into()));
        }
        let values = (0..self.len()).map(|p| v0.values[p % cols] / jv[p]).collect();
        self.field(values)
    }

    /// Constant extension of a surface field.
    pub fn extend(self: &Arc<Self>, v: &SurfaceField) -> BulkField {
        let cols = self.shape().columns();
        BulkField { values: (0..self.len()).map(|p| v.values[p % cols]).collect(), domain: Arc::clone(self) }
    }
}

/// Scalar field on the reference grid.
#[derive(Debug, Clone)]
pub struct BulkField {
    pub values: Vec<f64>,
    pub domain: Arc<BulkDomain>,
}

impl BulkField {
    pub fn new(domain: Arc<BulkDomain>, values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.len() {
            return Err(Error::Precondition(format!(
                "field has {} values, grid has {} nodes",
                values.len(),
                domain.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Evaluation("bulk field contains non-finite values".into()));
        }
        Ok(Self { values, domain })
    }

    fn with_values(&self, values: Vec<f64>) -> Self {
        Self { values, domain: Arc::clone(&self.domain) }
    }

    pub fn discrete_laplacian(&self) -> BulkField {
        let mut out = vec![0.0; self.values.len()];
        self.domain.stencil.apply_operator(&self.values, &mut out);
        self.with_values(out)
    }

    /// `∫_Ω u`.
    pub fn mass(&self) -> f64 {
        self.domain.stencil.integrate(&self.values)
    }

    /// `E_ε(u) = ∫ (|∇u|²/2 + F(u))`.
    pub fn bulk_energy(&self, potential: &Potential) -> f64 {
        scheme::energy(&self.domain.stencil, &self.values, potential)
    }

    pub fn gradient_norm(&self) -> f64 {
        scheme::gradient_norm(&self.domain.stencil, &self.values)
    }

    /// `L²(Ω_ε)` norm.
    pub fn l2_norm(&self) -> f64 {
        let st = &self.domain.stencil;
        st.mass().iter().zip(&self.values).map(|(m, v)| m * v * v).sum::<f64>().sqrt()
    }

    /// Chart derivatives `∂_{s_d} U` per node: centred in the periodic
    /// directions and the interior, second-order one-sided at `s3 ∈ {0, ε}`.
    pub fn chart_gradient(&self) -> Vec<[f64; 3]> {
        let shape = self.domain.shape();
        let h = self.domain.grid.h();
        let (n1, n2, nl) = (shape.n1, shape.n2, shape.nl);
        let u = &self.values;
        let mut out = vec![[0.0; 3]; u.len()];
        for k in 0..nl {
            for j in 0..n2 {
                for i in 0..n1 {
                    let p = shape.idx(i, j, k);
                    let d1 = (u[shape.idx((i + 1) % n1, j, k)] - u[shape.idx((i + n1 - 1) % n1, j, k)]) / (2.0 * h[0]);
                    let d2 = (u[shape.idx(i, (j + 1) % n2, k)] - u[shape.idx(i, (j + n2 - 1) % n2, k)]) / (2.0 * h[1]);
                    let at = |kk: usize| u[shape.idx(i, j, kk)];
                    let d3 = if k == 0 {
                        (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * h[2])
                    } else if k == nl - 1 {
                        (3.0 * at(k) - 4.0 * at(k - 1) + at(k - 2)) / (2.0 * h[2])
                    } else {
                        (at(k + 1) - at(k - 1)) / (2.0 * h[2])
                    };
                    out[p] = [d1, d2, d3];
                }
            }
        }
        out
    }

    /// Ambient gradient `∇u = (∇_sΨ)⁻¹ ∇_s U` per node.
    pub fn ambient_gradient(&self) -> Vec<Vec3> {
        self.chart_gradient()
            .iter()
            .zip(&self.domain.inverse_gradient)
            .map(|(d, minv)| minv * Vec3::new(d[0], d[1], d[2]))
            .collect()
    }

    /// `∂_ν u = (1/g) ∂_{s3} U` per node.
    pub fn normal_derivative(&self) -> Vec<f64> {
        let cols = self.domain.shape().columns();
        let g = &self.domain.coefficients.g;
        self.chart_gradient().iter().enumerate().map(|(p, d)| d[2] / g[p % cols]).collect()
    }

    /// `‖∂_ν u‖_{L²(Ω_ε)}`.
    pub fn normal_derivative_norm(&self) -> f64 {
        let st = &self.domain.stencil;
        self.normal_derivative().iter().zip(st.mass()).map(|(d, m)| m * d * d).sum::<f64>().sqrt()
    }

    /// Node values with a five-line header (grid dims, ε, time).
    pub fn write_snapshot<W: Write>(&self, mut w: W, time: f64) -> Result<()> {
        let g = &self.domain.grid;
        writeln!(w, "# n1 = {}", g.n1)?;
        writeln!(w, "# n2 = {}", g.n2)?;
        writeln!(w, "# n3 = {}", g.n3)?;
        writeln!(w, "# epsilon = {:e}", g.eps)?;
        writeln!(w, "# time = {time:e}")?;
        writeln!(w, "i,j,k,value")?;
        let shape = g.shape();
        for (p, v) in self.values.iter().enumerate() {
            let k = p / shape.columns();
            let j = (p / shape.n1) % shape.n2;
            let i = p % shape.n1;
            writeln!(w, "{i},{j},{k},{v:.17e}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BulkLogRow {
    pub step: usize,
    pub time: f64,
    pub mass: f64,
    pub energy: f64,
    pub grad_w_norm: f64,
    pub normal_deriv_norm: f64,
}

#[derive(Debug, Clone)]
pub struct BulkRun {
    pub log: Vec<BulkLogRow>,
    pub snapshots: Vec<(usize, BulkField)>,
    pub final_state: BulkField,
}

impl BulkRun {
    pub fn write_log<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "step,time,mass,energy,grad_w_norm,normal_deriv_norm")?;
        for r in &self.log {
            writeln!(
                w,
                "{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
                r.step, r.time, r.mass, r.energy, r.grad_w_norm, r.normal_deriv_norm
            )?;
        }
        Ok(())
    }

    /// `E(uⁿ) + Σ_{m<=n} τ ‖∇w^m‖² - E(u⁰)` per step.
    pub fn energy_law_residual(&self, tau: f64) -> Vec<f64> {
        let e0 = self.log[0].energy;
        let mut dissipated = 0.0;
        self.log
            .iter()
            .map(|r| {
                if r.step > 0 {
                    dissipated += tau * r.grad_w_norm * r.grad_w_norm;
                }
                r.energy + dissipated - e0
            })
            .collect()
    }
}

/// Time integrator of the bulk problem.
#[derive(Debug)]
pub struct BulkStepper {
    domain: Arc<BulkDomain>,
    scheme: StabilizedScheme,
    potential: Potential,
}

impl BulkStepper {
    pub fn new(domain: Arc<BulkDomain>, config: StepperConfig, potential: Potential) -> Result<Self> {
        let scheme = StabilizedScheme::new(&domain.stencil, config)?;
        Ok(Self { domain, scheme, potential })
    }

    pub fn config(&self) -> &StepperConfig {
        self.scheme.config()
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    /// Returns `(uⁿ⁺¹, wⁿ⁺¹)`.
    pub fn step(&self, u: &BulkField) -> Result<(BulkField, BulkField)> {
        let out = self.scheme.step(&self.domain.stencil, &u.values, &self.potential)?;
        Ok((u.with_values(out.u), u.with_values(out.w)))
    }

    fn row(&self, step: usize, u: &BulkField, w: &BulkField) -> BulkLogRow {
        BulkLogRow {
            step,
            time: step as f64 * self.config().tau,
            mass: u.mass(),
            energy: u.bulk_energy(&self.potential),
            grad_w_norm: w.gradient_norm(),
            normal_deriv_norm: u.normal_derivative_norm(),
        }
    }

    /// Integrates `steps` steps, logging every step and keeping the states
    /// at `snapshot_steps`.
    pub fn run(&self, u0: &BulkField, steps: usize, snapshot_steps: &[usize]) -> Result<BulkRun> {
        let mut u = u0.clone();
        let w0 = {
            let lu = u.discrete_laplacian();
            u.with_values(lu.values.iter().zip(&u.values).map(|(l, &z)| -l + self.potential.df(z)).collect())
        };
        let mut log = vec![self.row(0, &u, &w0)];
        let mut snapshots = Vec::new();
        if snapshot_steps.contains(&0) {
            snapshots.push((0, u.clone()));
        }
        for n in 1..=steps {
            let (un, w) = self.step(&u).map_err(|e| Error::Step { step: n, source: Box::new(e) })?;
            u = un;
            log.push(self.row(n, &u, &w));
            if snapshot_steps.contains(&n) {
                snapshots.push((n, u.clone()));
            }
        }
        Ok(BulkRun { log, snapshots, final_state: u })
    }

    /// Runs to final time `t_final` (rounded to whole steps).
    pub fn run_until(&self, u0: &BulkField, t_final: f64, snapshot_times: &[f64]) -> Result<BulkRun> {
        if !(t_final >= 0.0) {
            return Err(Error::Precondition(format!("final time must be nonnegative, got {t_final}")));
        }
        let tau = self.config().tau;
        let steps = (t_final / tau).round() as usize;
        let snaps: Vec<usize> = snapshot_times.iter().map(|t| (t / tau).round() as usize).collect();
        self.run(u0, steps, &snaps)
    }
}
