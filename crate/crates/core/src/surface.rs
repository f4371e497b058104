//! The limit problem on the surface: the weighted Laplacian
//! `A_g v = (1/g) div_Γ(g ∇_Γ v)`, its inverse `L_g` on weighted-mean-zero
//! functions and the weighted Cahn–Hilliard dynamics.
//!
//! In chart coordinates `A_g v = (1/(g√θ)) ∂_i(√θ g θ^{ij} ∂_j v)`, discretized
//! on the periodic `n1 × n2` grid by the shared divergence-form stencil.

use std::io::Write;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{SurfaceChart, SurfaceSample, ThicknessProfile, ThicknessValues};
use crate::potential::Potential;
use crate::scheme::{self, StabilizedScheme, StepperConfig};
use crate::stencil::{pcg, DivStencil, GridShape, SolveStats, SpectralPreconditioner, SymCoef};

/// Cached surface geometry on the periodic grid.
pub struct SurfaceDomain {
    pub chart: SurfaceChart,
    pub profile: ThicknessProfile,
    pub n1: usize,
    pub n2: usize,
    pub samples: Vec<SurfaceSample>,
    pub thickness: Vec<ThicknessValues>,
    /// Stencil of `A_g` (density `g√θ`).
    pub weighted: DivStencil,
    /// Stencil of the Laplace–Beltrami operator (density `√θ`).
    pub plain: DivStencil,
    lg_prec: SpectralPreconditioner,
}

impl std::fmt::Debug for SurfaceDomain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SurfaceDomain")
            .field("chart", &self.chart)
            .field("profile", &self.profile)
            .field("n1", &self.n1)
            .field("n2", &self.n2)
            .finish()
    }
}

impl SurfaceDomain {
    pub fn new(chart: SurfaceChart, profile: ThicknessProfile, n1: usize, n2: usize) -> Result<Arc<Self>> {
        if !chart.is_periodic() {
            return Err(Error::Construction(format!("{} cannot carry a periodic grid", chart.name())));
        }
        if n1 < 8 || n2 < 8 || !n1.is_multiple_of(2) || !n2.is_multiple_of(2) {
            return Err(Error::Construction(format!("n1, n2 must be even and >= 8, got {n1} x {n2}")));
        }
        let shape = GridShape { n1, n2, nl: 1 };
        let mut samples = Vec::with_capacity(shape.len());
        let mut thickness = Vec::with_capacity(shape.len());
        for j in 0..n2 {
            for i in 0..n1 {
                let s = [i as f64 / n1 as f64, j as f64 / n2 as f64];
                let smp = chart.sample(s)?;
                thickness.push(profile.eval_on(&smp, s));
                samples.push(smp);
            }
        }
        let coef = |weight: &dyn Fn(usize) -> f64| -> (Vec<f64>, Vec<SymCoef>) {
            let mut density = Vec::with_capacity(shape.len());
            let mut c = Vec::with_capacity(shape.len());
            for (p, smp) in samples.iter().enumerate() {
                let wgt = weight(p) * smp.sqrt_det_metric;
                let ti = smp.metric_inv * wgt;
                density.push(wgt);
                c.push([ti[(0, 0)], ti[(1, 1)], 0.0, 0.5 * (ti[(0, 1)] + ti[(1, 0)]), 0.0, 0.0]);
            }
            (density, c)
        };
        let h = [1.0 / n1 as f64, 1.0 / n2 as f64, 0.0];
        let (dw, cw) = coef(&|p| thickness[p].g);
        let weighted = DivStencil::new(shape, h, dw, &cw);
        let (dp, cp) = coef(&|_| 1.0);
        let plain = DivStencil::new(shape, h, dp, &cp);
        let lg_prec = SpectralPreconditioner::new(&weighted, |mu| -mu, false);
        Ok(Arc::new(Self { chart, profile, n1, n2, samples, thickness, weighted, plain, lg_prec }))
    }

    pub fn shape(&self) -> GridShape {
        GridShape { n1: self.n1, n2: self.n2, nl: 1 }
    }

    pub fn len(&self) -> usize {
        self.n1 * self.n2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn point(&self, p: usize) -> [f64; 2] {
        [(p % self.n1) as f64 / self.n1 as f64, (p / self.n1) as f64 / self.n2 as f64]
    }

    /// Surface area `Σ √θ h1 h2`.
    pub fn area(&self) -> f64 {
        self.plain.total_mass()
    }

    pub fn field(self: &Arc<Self>, values: Vec<f64>) -> Result<SurfaceField> {
        SurfaceField::new(Arc::clone(self), values)
    }

    pub fn field_from_fn(self: &Arc<Self>, f: impl Fn([f64; 2]) -> f64) -> SurfaceField {
        let values = (0..self.len()).map(|p| f(self.point(p))).collect();
        SurfaceField { values, domain: Arc::clone(self) }
    }

    pub fn zeros(self: &Arc<Self>) -> SurfaceField {
        SurfaceField { values: vec![0.0; self.len()], domain: Arc::clone(self) }
    }
}

/// Scalar field on the surface grid.
#[derive(Debug, Clone)]
pub struct SurfaceField {
    pub values: Vec<f64>,
    pub domain: Arc<SurfaceDomain>,
}

impl SurfaceField {
    pub fn new(domain: Arc<SurfaceDomain>, values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.len() {
            return Err(Error::Precondition(format!(
                "field has {} values, grid has {} nodes",
                values.len(),
                domain.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Evaluation("surface field contains non-finite values".into()));
        }
        Ok(Self { values, domain })
    }

    fn with_values(&self, values: Vec<f64>) -> Self {
        Self { values, domain: Arc::clone(&self.domain) }
    }

    /// `∫_Γ g v`.
    pub fn weighted_mass(&self) -> f64 {
        self.domain.weighted.integrate(&self.values)
    }

    /// `∫_Γ g v / ∫_Γ g`.
    pub fn weighted_mean(&self) -> f64 {
        self.weighted_mass() / self.domain.weighted.total_mass()
    }

    pub fn apply_ag(&self) -> SurfaceField {
        let mut out = vec![0.0; self.values.len()];
        self.domain.weighted.apply_operator(&self.values, &mut out);
        self.with_values(out)
    }

    /// `L_g f`: the weighted-mean-zero solution of `-A_g φ = f`. A nonzero
    /// weighted mean of `f` (beyond `1e-10`) is projected off and returned.
    pub fn solve_lg(&self, tol_lin: f64, max_iter: usize) -> Result<LgSolution> {
        let st = &self.domain.weighted;
        let mean = self.weighted_mean();
        let mut f = self.values.clone();
        let projected = if mean.abs() > 1e-10 {
            f.iter_mut().for_each(|x| *x -= mean);
            mean
        } else {
            0.0
        };
        let b: Vec<f64> = f.iter().zip(st.mass()).map(|(x, m)| x * m).collect();
        let mut phi = vec![0.0; f.len()];
        let stats = pcg(
            |x, out| st.apply_stiffness(x, out),
            |r, z| self.domain.lg_prec.apply(r, z),
            &b,
            &mut phi,
            tol_lin,
            max_iter,
        )?;
        st.remove_mean(&mut phi);
        Ok(LgSolution { phi: self.with_values(phi), projected_mean: projected, stats })
    }

    /// `E_g(v) = ∫ g (|∇_Γ v|²/2 + F(v))`.
    pub fn surface_energy(&self, potential: &Potential) -> f64 {
        scheme::energy(&self.domain.weighted, &self.values, potential)
    }

    /// `‖√g ∇_Γ v‖`.
    pub fn weighted_gradient_norm(&self) -> f64 {
        scheme::gradient_norm(&self.domain.weighted, &self.values)
    }

    /// CSV rows `i,j,value`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "i,j,value")?;
        for (p, v) in self.values.iter().enumerate() {
            writeln!(w, "{},{},{v:.17e}", p % self.domain.n1, p / self.domain.n1)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LgSolution {
    pub phi: SurfaceField,
    pub projected_mean: f64,
    pub stats: SolveStats,
}

/// Time integrator of the weighted surface Cahn–Hilliard equation.
#[derive(Debug)]
pub struct SurfaceStepper {
    domain: Arc<SurfaceDomain>,
    scheme: StabilizedScheme,
    potential: Potential,
}

impl SurfaceStepper {
    pub fn new(domain: Arc<SurfaceDomain>, config: StepperConfig, potential: Potential) -> Result<Self> {
        let scheme = StabilizedScheme::new(&domain.weighted, config)?;
        Ok(Self { domain, scheme, potential })
    }

    pub fn config(&self) -> &StepperConfig {
        self.scheme.config()
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    /// Returns `(vⁿ⁺¹, μⁿ⁺¹)`.
    pub fn step(&self, v: &SurfaceField) -> Result<(SurfaceField, SurfaceField)> {
        let out = self.scheme.step(&self.domain.weighted, &v.values, &self.potential)?;
        Ok((v.with_values(out.u), v.with_values(out.w)))
    }

    /// Chemical potential `-A_g v + F'(v)` of a state (used at `t = 0`).
    pub fn chemical_potential(&self, v: &SurfaceField) -> SurfaceField {
        let lv = v.apply_ag();
        let w = lv.values.iter().zip(&v.values).map(|(l, &z)| -l + self.potential.df(z)).collect();
        v.with_values(w)
    }

    /// Integrates to `t_final`, recording one log row per step and the
    /// states at the requested step indices.
    pub fn run(&self, v0: &SurfaceField, steps: usize, snapshot_steps: &[usize]) -> Result<SurfaceRun> {
        let tau = self.config().tau;
        let mut v = v0.clone();
        let mu0 = self.chemical_potential(&v);
        let mut log = vec![SurfaceLogRow {
            step: 0,
            time: 0.0,
            weighted_mass: v.weighted_mass(),
            weighted_energy: v.surface_energy(&self.potential),
            grad_mu_norm: mu0.weighted_gradient_norm(),
        }];
        let mut snapshots = Vec::new();
        if snapshot_steps.contains(&0) {
            snapshots.push((0, v.clone()));
        }
        for n in 1..=steps {
            let (vn, mu) = self.step(&v).map_err(|e| Error::Step { step: n, source: Box::new(e) })?;
            v = vn;
            log.push(SurfaceLogRow {
                step: n,
                time: n as f64 * tau,
                weighted_mass: v.weighted_mass(),
                weighted_energy: v.surface_energy(&self.potential),
                grad_mu_norm: mu.weighted_gradient_norm(),
            });
            if snapshot_steps.contains(&n) {
                snapshots.push((n, v.clone()));
            }
        }
        Ok(SurfaceRun { log, snapshots, final_state: v })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceLogRow {
    pub step: usize,
    pub time: f64,
    pub weighted_mass: f64,
    pub weighted_energy: f64,
    pub grad_mu_norm: f64,
}

#[derive(Debug, Clone)]
pub struct SurfaceRun {
    pub log: Vec<SurfaceLogRow>,
    pub snapshots: Vec<(usize, SurfaceField)>,
    pub final_state: SurfaceField,
}

impl SurfaceRun {
    pub fn write_log<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "step,time,weighted_mass,weighted_energy,grad_mu_norm")?;
        for r in &self.log {
            writeln!(
                w,
                "{},{:.17e},{:.17e},{:.17e},{:.17e}",
                r.step, r.time, r.weighted_mass, r.weighted_energy, r.grad_mu_norm
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Lcg;
    use std::f64::consts::{PI, TAU};

    fn flat(n: usize, g1: f64) -> Arc<SurfaceDomain> {
        SurfaceDomain::new(SurfaceChart::FlatSheet, ThicknessProfile::constant(0.0, g1).unwrap(), n, n).unwrap()
    }

    fn torus(n1: usize, n2: usize) -> Arc<SurfaceDomain> {
        SurfaceDomain::new(
            SurfaceChart::torus(2.0, 1.0).unwrap(),
            ThicknessProfile::sinusoidal(0.2, 1).unwrap(),
            n1,
            n2,
        )
        .unwrap()
    }

    fn random(d: &Arc<SurfaceDomain>, seed: u64) -> SurfaceField {
        let mut g = Lcg::new(seed);
        d.field((0..d.len()).map(|_| g.symmetric()).collect()).unwrap()
    }

    #[test]
    fn ag_of_constant_vanishes() {
        let d = torus(16, 16);
        let v = d.field(vec![3.5; d.len()]).unwrap();
        assert!(v.apply_ag().values.iter().all(|x| x.abs() < 1e-10));
    }

    #[test]
    fn ag_on_flat_modes() {
        for g in [1.0, 2.0] {
            let d = flat(64, g);
            let v = d.field_from_fn(|s| (TAU * s[0]).sin());
            let lv = v.apply_ag();
            let h = 1.0 / 64.0;
            for (a, b) in lv.values.iter().zip(&v.values) {
                assert!((a + 4.0 * PI * PI * b).abs() <= 4.0 * PI.powi(4) * h * h);
            }
        }
    }

    #[test]
    fn weighted_mean_of_ag_vanishes_and_constants_commute() {
        let d = torus(24, 16);
        let v = random(&d, 5);
        let lv = v.apply_ag();
        let scale: f64 = lv.values.iter().map(|x| x.abs()).sum::<f64>() * d.weighted.mass()[0];
        assert!(lv.weighted_mass().abs() <= 1e-12 * scale);
        let shifted = d.field(v.values.iter().map(|x| x + 0.7).collect()).unwrap().apply_ag();
        for (a, b) in shifted.values.iter().zip(&lv.values) {
            assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
        }
    }

    #[test]
    fn discrete_integration_by_parts() {
        let d = torus(24, 16);
        for seed in 0..5 {
            let v = random(&d, 2 * seed);
            let w = random(&d, 2 * seed + 1);
            let lhs = d
                .weighted
                .integrate(&v.apply_ag().values.iter().zip(&w.values).map(|(a, b)| a * b).collect::<Vec<_>>());
            let form = d.weighted.bilinear(&v.values, &w.values);
            let nv = d.plain.integrate(&v.values.iter().map(|x| x * x).collect::<Vec<_>>()).sqrt();
            let nw = d.plain.integrate(&w.values.iter().map(|x| x * x).collect::<Vec<_>>()).sqrt();
            assert!((lhs + form).abs() <= 1e-10 * nv * nw * (1.0 + form.abs()));
        }
    }

    #[test]
    fn lg_examples() {
        let d = flat(32, 1.0);
        let zero = d.zeros().solve_lg(1e-11, 500).unwrap();
        assert!(zero.phi.values.iter().all(|x| *x == 0.0));
        let f = d.field_from_fn(|s| (TAU * s[0]).cos());
        let sol = f.solve_lg(1e-12, 500).unwrap();
        let h = 1.0 / 32.0;
        let discrete = 2.0 / (h * h) * (1.0 - (TAU * h).cos());
        for (p, v) in sol.phi.values.iter().zip(&f.values) {
            assert!((p - v / discrete).abs() < 1e-10);
            assert!((p - 0.0253303 * v).abs() < 1e-4);
        }
    }

    #[test]
    fn lg_round_trip_on_torus() {
        let d = torus(24, 16);
        for seed in 0..4 {
            let mut f = random(&d, 100 + seed);
            let m = f.weighted_mean();
            f.values.iter_mut().for_each(|x| *x -= m);
            let sol = f.solve_lg(1e-11, 1000).unwrap();
            assert!(sol.phi.weighted_mean().abs() <= 1e-12);
            let back = sol.phi.apply_ag();
            let err = back.values.iter().zip(&f.values).map(|(a, b)| (a + b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-8, "{err}");
        }
        let off = d.field(vec![1.0; d.len()]).unwrap();
        let sol = off.solve_lg(1e-11, 100).unwrap();
        assert!((sol.projected_mean - 1.0).abs() < 1e-12);
    }

    #[test]
    fn energies() {
        let d = flat(16, 1.0);
        let p = Potential::quartic_double_well();
        assert!((d.zeros().surface_energy(&p) - 0.25).abs() < 1e-14);
        assert!(d.field(vec![1.0; d.len()]).unwrap().surface_energy(&p).abs() < 1e-14);
    }

    #[test]
    fn constant_state_is_fixed_point() {
        let d = torus(16, 16);
        let p = Potential::quartic_double_well();
        let st = SurfaceStepper::new(Arc::clone(&d), StepperConfig::default(), p.clone()).unwrap();
        let v = d.field(vec![0.3; d.len()]).unwrap();
        let (vn, mu) = st.step(&v).unwrap();
        for (a, m) in vn.values.iter().zip(&mu.values) {
            assert!((a - 0.3).abs() < 1e-14);
            assert!((m - p.df(0.3)).abs() < 1e-10);
        }
    }

    #[test]
    fn linear_mode_decay_factor() {
        let n = 32;
        let d = flat(n, 1.0);
        let tau = 1e-4;
        let cfg = StepperConfig { tau, stabilization: 0.0, tol_lin: 1e-13, max_iter: 100 };
        let st = SurfaceStepper::new(Arc::clone(&d), cfg, Potential::zero()).unwrap();
        let v = d.field_from_fn(|s| (TAU * 2.0 * s[0]).cos());
        let (vn, _) = st.step(&v).unwrap();
        let h = 1.0 / n as f64;
        let k2 = 2.0 / (h * h) * (1.0 - (2.0 * TAU * h).cos());
        let factor = 1.0 / (1.0 + tau * k2 * k2);
        for (a, b) in vn.values.iter().zip(&v.values) {
            assert!((a - factor * b).abs() < 1e-11);
        }
    }

    #[test]
    fn mass_and_energy_along_run() {
        let d = torus(24, 16);
        let mut g = Lcg::new(7);
        let v0 = d.field((0..d.len()).map(|_| 0.05 * g.symmetric()).collect()).unwrap();
        let cfg = StepperConfig { tau: 1e-4, ..StepperConfig::default() };
        let st = SurfaceStepper::new(Arc::clone(&d), cfg, Potential::quartic_double_well()).unwrap();
        let run = st.run(&v0, 50, &[25]).unwrap();
        let m0 = run.log[0].weighted_mass;
        let scale = d.weighted.total_mass() * 0.05;
        for w in run.log.windows(2) {
            assert!((w[1].weighted_mass - m0).abs() <= 1e-10 * scale);
            assert!(w[1].weighted_energy <= w[0].weighted_energy + 1e-10);
        }
        assert_eq!(run.snapshots.len(), 1);
        let mut buf = Vec::new();
        run.write_log(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 52);
    }
}
