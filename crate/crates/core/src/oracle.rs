//! Reference solvers on the flat periodic unit square: a pseudo-spectral
//! integrator using the same stabilized time discretization as the grid
//! solvers, and a small Fourier–Galerkin system integrated with RK4.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::potential::Potential;

/// Fourier coefficients of a real field on an `n × n` periodic grid.
/// Index `p = j n + i` with `i` along `s1`.
#[derive(Clone)]
pub struct SpectralState {
    n: usize,
    coeffs: Vec<Complex64>,
    pub time: f64,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SpectralState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralState").field("n", &self.n).field("time", &self.time).finish()
    }
}

/// Wavenumber of FFT index `m` on a grid of `n` points.
fn wavenumber(m: usize, n: usize) -> f64 {
    let m = if m <= n / 2 { m as f64 } else { m as f64 - n as f64 };
    TAU * m
}

impl SpectralState {
    pub fn from_values(n: usize, values: &[f64]) -> Result<Self> {
        if n < 4 || !n.is_multiple_of(2) {
            return Err(Error::Oracle(format!("grid size must be even and >= 4, got {n}")));
        }
        if values.len() != n * n {
            return Err(Error::Oracle(format!("expected {} values, got {}", n * n, values.len())));
        }
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let mut s = Self { n, coeffs: values.iter().map(|&v| Complex64::new(v, 0.0)).collect(), time: 0.0, fwd, inv };
        s.transform(true);
        let scale = 1.0 / (n * n) as f64;
        s.coeffs.iter_mut().for_each(|c| *c *= scale);
        Ok(s)
    }

    pub fn from_fn(n: usize, f: impl Fn([f64; 2]) -> f64) -> Result<Self> {
        let values: Vec<f64> = (0..n * n).map(|p| f([(p % n) as f64 / n as f64, (p / n) as f64 / n as f64])).collect();
        Self::from_values(n, &values)
    }

    fn transform(&mut self, forward: bool) {
        let n = self.n;
        let plan = if forward { &self.fwd } else { &self.inv };
        for row in self.coeffs.chunks_mut(n) {
            plan.process(row);
        }
        let mut col = vec![Complex64::new(0.0, 0.0); n];
        for i in 0..n {
            for j in 0..n {
                col[j] = self.coeffs[j * n + i];
            }
            plan.process(&mut col);
            for j in 0..n {
                self.coeffs[j * n + i] = col[j];
            }
        }
    }

    fn grid_values(coeffs: &[Complex64], template: &Self) -> Vec<f64> {
        let mut t = template.clone();
        t.coeffs = coeffs.to_vec();
        t.transform(false);
        t.coeffs.iter().map(|c| c.re).collect()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Coefficient of `exp(2πi(m1 s1 + m2 s2))`.
    pub fn mode(&self, m1: i64, m2: i64) -> Complex64 {
        let n = self.n as i64;
        self.coeffs[(m2.rem_euclid(n) * n + m1.rem_euclid(n)) as usize]
    }

    /// Mean value (the zero mode).
    pub fn mean(&self) -> f64 {
        self.coeffs[0].re
    }

    pub fn values(&self) -> Vec<f64> {
        Self::grid_values(&self.coeffs, self)
    }

    /// `|k|²` for every coefficient.
    fn k2(&self) -> Vec<f64> {
        let n = self.n;
        (0..n * n)
            .map(|p| {
                let (a, b) = (wavenumber(p % n, n), wavenumber(p / n, n));
                a * a + b * b
            })
            .collect()
    }

    /// `∫ (|∇u|²/2 + F(u))` with the gradient term exact in Fourier space and
    /// the potential by the periodic trapezoid rule.
    pub fn energy(&self, potential: &Potential) -> f64 {
        let grad: f64 = self.k2().iter().zip(&self.coeffs).map(|(k2, c)| 0.5 * k2 * c.norm_sqr()).sum();
        let vals = self.values();
        grad + vals.iter().map(|&v| potential.f(v)).sum::<f64>() / vals.len() as f64
    }

    /// Maximum nodal difference to grid values.
    pub fn max_difference(&self, values: &[f64]) -> f64 {
        self.values().iter().zip(values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// One stabilized step:
/// `û ← (û - τ|k|² F̂'(u) + τS|k|² û) / (1 + τ|k|⁴ + τS|k|²)`,
/// with `F'(u)` evaluated pseudo-spectrally.
pub fn spectral_step(state: &SpectralState, tau: f64, potential: &Potential, stabilization: f64) -> SpectralState {
    let vals = state.values();
    let mut nl = state.clone();
    nl.coeffs = vals.iter().map(|&v| Complex64::new(potential.df(v), 0.0)).collect();
    nl.transform(true);
    let scale = 1.0 / (state.n * state.n) as f64;
    let mut out = state.clone();
    for (p, k2) in state.k2().into_iter().enumerate() {
        if p == 0 {
            continue;
        }
        let fp = nl.coeffs[p] * scale;
        let u = state.coeffs[p];
        let num = u - fp * (tau * k2) + u * (tau * stabilization * k2);
        out.coeffs[p] = num / (1.0 + tau * k2 * k2 + tau * stabilization * k2);
    }
    out.time = state.time + tau;
    out
}

/// Mode magnitudes recorded along a spectral run.
#[derive(Debug, Clone)]
pub struct ModeTrajectory {
    pub modes: Vec<[i64; 2]>,
    pub rows: Vec<(f64, Vec<f64>)>,
}

impl ModeTrajectory {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let head: Vec<String> = self.modes.iter().map(|m| format!("mode_{}_{}", m[0], m[1])).collect();
        writeln!(w, "time,{}", head.join(","))?;
        for (t, mags) in &self.rows {
            let cols: Vec<String> = mags.iter().map(|m| format!("{m:.17e}")).collect();
            writeln!(w, "{t:.17e},{}", cols.join(","))?;
        }
        Ok(())
    }
}

/// Runs `steps` spectral steps, recording `|û_m|` every `every` steps.
pub fn spectral_run(
    state: &SpectralState,
    tau: f64,
    potential: &Potential,
    stabilization: f64,
    steps: usize,
    modes: &[[i64; 2]],
    every: usize,
) -> Result<(SpectralState, ModeTrajectory)> {
    let record = |s: &SpectralState| modes.iter().map(|m| s.mode(m[0], m[1]).norm()).collect::<Vec<_>>();
    let mut s = state.clone();
    let mut traj = ModeTrajectory { modes: modes.to_vec(), rows: vec![(s.time, record(&s))] };
    for n in 1..=steps {
        s = spectral_step(&s, tau, potential, stabilization);
        if s.coeffs.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::Oracle(format!("spectral run blew up at step {n}")));
        }
        if every > 0 && n % every == 0 {
            traj.rows.push((s.time, record(&s)));
        }
    }
    Ok((s, traj))
}

/// Sparse Fourier series `Σ c_k exp(2πi k·s)`.
type Series = BTreeMap<[i32; 2], Complex64>;

fn multiply(a: &Series, b: &Series) -> Series {
    let mut out = Series::new();
    for (ka, ca) in a {
        for (kb, cb) in b {
            *out.entry([ka[0] + kb[0], ka[1] + kb[1]]).or_default() += ca * cb;
        }
    }
    out
}

/// `Σ coeffs[j] u^j` as a full (untruncated) series.
fn polynomial_of(coeffs: &[f64], u: &Series) -> Series {
    let mut out = Series::new();
    let mut power = Series::from([([0, 0], Complex64::new(1.0, 0.0))]);
    for (j, &c) in coeffs.iter().enumerate() {
        if j > 0 {
            power = multiply(&power, u);
        }
        if c != 0.0 {
            for (k, v) in &power {
                *out.entry(*k).or_default() += v * c;
            }
        }
    }
    out
}

fn k2_of(k: &[i32; 2]) -> f64 {
    TAU * TAU * ((k[0] * k[0] + k[1] * k[1]) as f64)
}

/// Result of [`galerkin_ode`].
#[derive(Debug, Clone)]
pub struct GalerkinSolution {
    pub modes: Vec<[i32; 2]>,
    pub coeffs: Vec<Complex64>,
    /// Energy after every substep, starting with the initial energy.
    pub energies: Vec<f64>,
}

/// Galerkin energy `Σ |k|²|α_k|²/2 + ∫ F(u_K)`, the integral exact.
pub fn galerkin_energy(modes: &[[i32; 2]], coeffs: &[Complex64], potential: &Potential) -> f64 {
    let u: Series = modes.iter().copied().zip(coeffs.iter().copied()).collect();
    let grad: f64 = modes.iter().zip(coeffs).map(|(k, c)| 0.5 * k2_of(k) * c.norm_sqr()).sum();
    grad + polynomial_of(potential.coeffs(), &u).get(&[0, 0]).map_or(0.0, |c| c.re)
}

/// Integrates `dα_k/dt = -|k|²(|k|² α_k + P_K F'(u_K)_k)` over `[0, t_final]`
/// with `substeps` classical RK4 steps. `modes` (at most 16) must be closed
/// under negation.
pub fn galerkin_ode(
    modes: &[[i32; 2]],
    u0: &[Complex64],
    t_final: f64,
    substeps: usize,
    potential: &Potential,
) -> Result<GalerkinSolution> {
    if modes.is_empty() || modes.len() > 16 {
        return Err(Error::Oracle(format!("mode count must lie in 1..=16, got {}", modes.len())));
    }
    if modes.len() != u0.len() {
        return Err(Error::Oracle("mode list and coefficients differ in length".into()));
    }
    let mut index = BTreeMap::new();
    for (i, k) in modes.iter().enumerate() {
        if index.insert(*k, i).is_some() {
            return Err(Error::Oracle(format!("duplicate mode {k:?}")));
        }
    }
    if modes.iter().any(|k| !index.contains_key(&[-k[0], -k[1]])) {
        return Err(Error::Oracle("mode set must be closed under negation".into()));
    }
    if substeps == 0 || !(t_final >= 0.0) {
        return Err(Error::Oracle("need positive substeps and nonnegative final time".into()));
    }
    let dfc = potential.derivative_coeffs();
    let rhs = |a: &[Complex64]| -> Vec<Complex64> {
        let u: Series = modes.iter().copied().zip(a.iter().copied()).collect();
        let f = polynomial_of(dfc, &u);
        modes
            .iter()
            .zip(a)
            .map(|(k, ak)| {
                let k2 = k2_of(k);
                let fk = f.get(k).copied().unwrap_or_default();
                -(ak * (k2 * k2) + fk * k2)
            })
            .collect()
    };
    let h = t_final / substeps as f64;
    let axpy = |a: &[Complex64], b: &[Complex64], s: f64| -> Vec<Complex64> {
        a.iter().zip(b).map(|(x, y)| x + y * s).collect()
    };
    let initial_norm: f64 = u0.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    let mut a = u0.to_vec();
    let mut energies = vec![galerkin_energy(modes, &a, potential)];
    for step in 1..=substeps {
        let k1 = rhs(&a);
        let k2 = rhs(&axpy(&a, &k1, 0.5 * h));
        let k3 = rhs(&axpy(&a, &k2, 0.5 * h));
        let k4 = rhs(&axpy(&a, &k3, h));
        for i in 0..a.len() {
            a[i] += (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (h / 6.0);
        }
        let norm: f64 = a.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if !norm.is_finite() || norm > 1e6 * (1.0 + initial_norm) {
            return Err(Error::Oracle(format!(
                "Galerkin integration unstable at substep {step}; reduce the step size"
            )));
        }
        energies.push(galerkin_energy(modes, &a, potential));
    }
    Ok(GalerkinSolution { modes: modes.to_vec(), coeffs: a, energies })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Lcg;

    #[test]
    fn round_trip_and_modes() {
        let s = SpectralState::from_fn(16, |x| 0.3 + (TAU * x[0]).cos()).unwrap();
        assert!((s.mean() - 0.3).abs() < 1e-15);
        assert!((s.mode(1, 0).re - 0.5).abs() < 1e-15);
        assert!((s.mode(-1, 0).re - 0.5).abs() < 1e-15);
        let back = s.values();
        let direct: Vec<f64> = (0..256).map(|p| 0.3 + (TAU * (p % 16) as f64 / 16.0).cos()).collect();
        assert!(s.max_difference(&direct) < 1e-14);
        assert_eq!(back.len(), 256);
    }

    #[test]
    fn step_examples() {
        let p = Potential::quartic_double_well();
        let c = SpectralState::from_fn(8, |_| 0.2).unwrap();
        let c1 = spectral_step(&c, 1e-3, &p, 2.0);
        assert!(c1.coeffs().iter().zip(c.coeffs()).all(|(a, b)| (a - b).norm() < 1e-16));

        let s = SpectralState::from_fn(16, |x| (TAU * x[0]).sin()).unwrap();
        let s1 = spectral_step(&s, 1e-4, &Potential::zero(), 0.0);
        let factor = s1.mode(1, 0).im / s.mode(1, 0).im;
        assert!((factor - 1.0 / (1.0 + 1e-4 * TAU.powi(4))).abs() < 1e-12);
        assert!((factor - 0.865160).abs() < 1e-6);
    }

    #[test]
    fn deterministic_and_mass_conserving() {
        let p = Potential::quartic_double_well();
        let run = || {
            let mut g = Lcg::new(5);
            let vals: Vec<f64> = (0..32 * 32).map(|_| 0.1 * g.symmetric()).collect();
            let s = SpectralState::from_values(32, &vals).unwrap();
            spectral_run(&s, 1e-5, &p, 2.0, 50, &[[1, 0]], 10).unwrap()
        };
        let (a, ta) = run();
        let (b, _) = run();
        assert_eq!(a.coeffs(), b.coeffs());
        assert_eq!(ta.rows.len(), 6);
        let mut g = Lcg::new(5);
        let mean0 = (0..32 * 32).map(|_| 0.1 * g.symmetric()).sum::<f64>() / 1024.0;
        assert!((a.mean() - mean0).abs() < 1e-16);
    }

    #[test]
    fn galerkin_constant_mode() {
        let p = Potential::quartic_double_well();
        let sol = galerkin_ode(&[[0, 0]], &[Complex64::new(0.3, 0.0)], 1.0, 100, &p).unwrap();
        assert_eq!(sol.coeffs[0], Complex64::new(0.3, 0.0));
    }

    #[test]
    fn galerkin_rejects_bad_input() {
        let p = Potential::quartic_double_well();
        let z = Complex64::default();
        assert!(galerkin_ode(&[[1, 0]], &[z], 1.0, 10, &p).is_err());
        let modes: Vec<[i32; 2]> = (0..17).map(|i| [i, 0]).collect();
        assert!(galerkin_ode(&modes, &vec![z; 17], 1.0, 10, &p).is_err());
        let unstable = galerkin_ode(&[[3, 0], [-3, 0]], &[Complex64::new(0.1, 0.0); 2], 1.0, 2, &p);
        assert!(matches!(unstable, Err(Error::Oracle(_))));
    }

    fn modes_and_data() -> (Vec<[i32; 2]>, Vec<Complex64>) {
        let modes = vec![[0, 0], [1, 0], [-1, 0], [0, 1], [0, -1], [1, 1], [-1, -1], [2, 0], [-2, 0]];
        let mut a = vec![Complex64::default(); modes.len()];
        a[1] = Complex64::new(0.0, -0.005);
        a[2] = Complex64::new(0.0, 0.005);
        a[3] = Complex64::new(0.003, 0.0);
        a[4] = Complex64::new(0.003, 0.0);
        (modes, a)
    }

    #[test]
    fn galerkin_energy_decreases() {
        let p = Potential::quartic_double_well();
        let (modes, mut a) = modes_and_data();
        a.iter_mut().for_each(|c| *c *= 40.0);
        let sol = galerkin_ode(&modes, &a, 0.01, 2000, &p).unwrap();
        for w in sol.energies.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn galerkin_matches_spectral() {
        let p = Potential::quartic_double_well();
        let (modes, a) = modes_and_data();
        let t = 0.005;
        let sol = galerkin_ode(&modes, &a, t, 2000, &p).unwrap();
        let n = 32;
        let field = |x: [f64; 2]| -> f64 {
            modes
                .iter()
                .zip(&a)
                .map(|(k, c)| (c * Complex64::from_polar(1.0, TAU * (k[0] as f64 * x[0] + k[1] as f64 * x[1]))).re)
                .sum()
        };
        let s0 = SpectralState::from_fn(n, field).unwrap();
        let tau = 1e-7;
        let (s, _) = spectral_run(&s0, tau, &p, 0.0, (t / tau).round() as usize, &[], 0).unwrap();
        let mut worst = 0.0f64;
        for (k, c) in modes.iter().zip(&sol.coeffs) {
            worst = worst.max((s.mode(k[0] as i64, k[1] as i64) - c).norm());
        }
        assert!(worst < 1e-6, "{worst}");
    }
}
