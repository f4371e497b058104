//! Linearly implicit stabilized time step for the mixed Cahn–Hilliard system
//! on a [`DivStencil`]:
//!
//! ```text
//! (uⁿ⁺¹ - uⁿ)/τ = L wⁿ⁺¹,    wⁿ⁺¹ = -L uⁿ⁺¹ + F'(uⁿ) + S (uⁿ⁺¹ - uⁿ)
//! ```
//!
//! Eliminating `w` leaves one symmetric positive definite solve for the
//! increment `δ = uⁿ⁺¹ - uⁿ`:
//! `(D + τ K D⁻¹ K + τ S K) δ = -τ K (F'(uⁿ) - L uⁿ)` with `D` the lumped mass.

use crate::error::{Error, Result};
use crate::potential::Potential;
use crate::stencil::{pcg, DivStencil, SolveStats, SpectralPreconditioner};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepperConfig {
    pub tau: f64,
    pub stabilization: f64,
    pub tol_lin: f64,
    pub max_iter: usize,
}

impl StepperConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Precondition(format!("time step must be positive, got {}", self.tau)));
        }
        if !(self.stabilization >= 0.0) {
            return Err(Error::Precondition("stabilization must be nonnegative".into()));
        }
        if !(self.tol_lin > 0.0 && self.tol_lin <= 1e-6) {
            return Err(Error::Precondition(format!("linear tolerance must lie in (0, 1e-6], got {}", self.tol_lin)));
        }
        Ok(())
    }
}

impl Default for StepperConfig {
    fn default() -> Self {
        Self { tau: 1e-5, stabilization: 2.0, tol_lin: 1e-11, max_iter: 2000 }
    }
}

/// Result of one step: new state, new chemical potential and solver stats.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub u: Vec<f64>,
    pub w: Vec<f64>,
    pub stats: SolveStats,
}

pub struct StabilizedScheme {
    config: StepperConfig,
    prec: SpectralPreconditioner,
}

impl std::fmt::Debug for StabilizedScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StabilizedScheme").field("config", &self.config).finish()
    }
}

impl StabilizedScheme {
    pub fn new(stencil: &DivStencil, config: StepperConfig) -> Result<Self> {
        config.validate()?;
        let (tau, s) = (config.tau, config.stabilization);
        let prec = SpectralPreconditioner::new(stencil, |mu| 1.0 + tau * mu * mu - tau * s * mu, true);
        Ok(Self { config, prec })
    }

    pub fn config(&self) -> &StepperConfig {
        &self.config
    }

    /// The symmetric system operator `D + τ K D⁻¹ K + τ S K`.
    pub fn apply_system(&self, stencil: &DivStencil, x: &[f64], out: &mut [f64]) {
        let n = x.len();
        let (tau, s) = (self.config.tau, self.config.stabilization);
        let mass = stencil.mass();
        let mut kx = vec![0.0; n];
        stencil.apply_stiffness(x, &mut kx);
        let t: Vec<f64> = kx.iter().zip(mass).map(|(a, m)| a / m).collect();
        stencil.apply_stiffness(&t, out);
        for i in 0..n {
            out[i] = mass[i] * x[i] + tau * out[i] + tau * s * kx[i];
        }
    }

    pub fn step(&self, stencil: &DivStencil, u: &[f64], potential: &Potential) -> Result<StepOutput> {
        let n = u.len();
        let (tau, s) = (self.config.tau, self.config.stabilization);
        let fu: Vec<f64> = u.iter().map(|&z| potential.df(z)).collect();
        let mut lu = vec![0.0; n];
        stencil.apply_operator(u, &mut lu);
        let g: Vec<f64> = fu.iter().zip(&lu).map(|(a, b)| a - b).collect();
        let mut rhs = vec![0.0; n];
        stencil.apply_stiffness(&g, &mut rhs);
        rhs.iter_mut().for_each(|r| *r *= -tau);

        let mut delta = vec![0.0; n];
        let stats = pcg(
            |x, out| self.apply_system(stencil, x, out),
            |r, z| self.prec.apply(r, z),
            &rhs,
            &mut delta,
            self.config.tol_lin,
            self.config.max_iter,
        )?;
        // the exact increment lies in the range of L and carries no mass
        stencil.remove_mean(&mut delta);

        let unew: Vec<f64> = u.iter().zip(&delta).map(|(a, d)| a + d).collect();
        let mut lnew = vec![0.0; n];
        stencil.apply_operator(&unew, &mut lnew);
        let w: Vec<f64> = (0..n).map(|i| -lnew[i] + fu[i] + s * delta[i]).collect();
        if unew.iter().any(|x| !x.is_finite()) {
            return Err(Error::Evaluation("non-finite state after step".into()));
        }
        Ok(StepOutput { u: unew, w, stats })
    }
}

/// `½ B(u, u) + Σ mass F(u)`.
pub fn energy(stencil: &DivStencil, u: &[f64], potential: &Potential) -> f64 {
    let grad = 0.5 * stencil.bilinear(u, u);
    let bulk: f64 = stencil.mass().iter().zip(u).map(|(m, &z)| m * potential.f(z)).sum();
    grad + bulk
}

/// `sqrt(B(w, w))`, the discrete `‖∇w‖`.
pub fn gradient_norm(stencil: &DivStencil, w: &[f64]) -> f64 {
    stencil.bilinear(w, w).max(0.0).sqrt()
}
