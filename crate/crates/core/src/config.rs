//! Flat `key = value` experiment configuration. Lines starting with `#` and
//! blank lines are ignored; lists are comma separated. Unknown keys and
//! repeated keys are errors.

use std::collections::BTreeSet;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{SurfaceChart, ThicknessProfile};
use crate::potential::{GrowthConstants, Potential};
use crate::pullback::ReferenceGrid;
use crate::scheme::StepperConfig;

/// Initial surface profile of a study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialProfile {
    /// `mean + amplitude · sin(2π m s1)`.
    Fourier { mode: u32 },
    /// `mean + amplitude · ξ` with `ξ` uniform on `[-1, 1)` per node.
    Random,
    /// `mean + amplitude · tanh(cos(2π s1) / 0.2)`.
    TanhStripe,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub chart: SurfaceChart,
    pub thickness: ThicknessProfile,
    pub potential: Potential,
    pub n1: usize,
    pub n2: usize,
    pub n3: usize,
    pub epsilon: f64,
    pub bulk: StepperConfig,
    pub bulk_seed: u64,
    pub bulk_t: f64,
    pub bulk_snapshot_times: Vec<f64>,
    pub surface: StepperConfig,
    pub surface_t: f64,
    pub oracle_modes: usize,
    pub oracle_tau: f64,
    pub epsilons: Vec<f64>,
    pub study_t: f64,
    pub v0: InitialProfile,
    pub v0_amplitude: f64,
    pub v0_mean: f64,
    pub alpha: f64,
    pub c_tau: f64,
    pub verify_steps: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            chart: SurfaceChart::Torus { major: 2.0, minor: 1.0 },
            thickness: ThicknessProfile::Constant { g0: 0.0, g1: 1.0 },
            potential: Potential::quartic_double_well(),
            n1: 48,
            n2: 24,
            n3: 8,
            epsilon: 0.1,
            bulk: StepperConfig::default(),
            bulk_seed: 1,
            bulk_t: 0.01,
            bulk_snapshot_times: Vec::new(),
            surface: StepperConfig::default(),
            surface_t: 0.01,
            oracle_modes: 64,
            oracle_tau: 1e-5,
            epsilons: vec![0.2, 0.1, 0.05, 0.025],
            study_t: 0.5,
            v0: InitialProfile::Fourier { mode: 1 },
            v0_amplitude: 0.1,
            v0_mean: 0.0,
            alpha: 0.0,
            c_tau: 100.0,
            verify_steps: 200,
        }
    }
}

pub const KEYS: &[&str] = &[
    "surface.kind",
    "surface.R",
    "surface.a",
    "thickness.preset",
    "thickness.params",
    "potential.preset",
    "potential.coeffs",
    "potential.c0",
    "potential.c2",
    "potential.c3",
    "grid.n1",
    "grid.n2",
    "grid.n3",
    "epsilon",
    "bulk.tau",
    "bulk.stabilization",
    "bulk.tol_lin",
    "bulk.max_iter",
    "bulk.seed",
    "bulk.T",
    "bulk.snapshot_times",
    "surface.tau",
    "surface.stabilization",
    "surface.tol_lin",
    "surface.T",
    "oracle.modes",
    "oracle.tau",
    "study.epsilons",
    "study.T",
    "study.v0",
    "study.v0_mode",
    "study.v0_amplitude",
    "study.v0_mean",
    "study.alpha",
    "study.c_tau",
    "verify.steps",
];

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("{key}: cannot parse '{v}'")))
}

fn list(key: &str, v: &str) -> Result<Vec<f64>> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|x| num(key, x.trim())).collect()
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        let mut seen = BTreeSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", lineno + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                return Err(Error::Config(format!("line {}: unknown key '{k}'", lineno + 1)));
            }
            if !seen.insert(k.to_string()) {
                return Err(Error::Config(format!("line {}: duplicate key '{k}'", lineno + 1)));
            }
            entries.push((k.to_string(), v.to_string()));
        }
        let get = |k: &str| entries.iter().find(|(kk, _)| kk == k).map(|(_, v)| v.as_str());

        let mut c = Self::default();

        let (mut major, mut minor) = (2.0, 1.0);
        if let Some(v) = get("surface.R") {
            major = num("surface.R", v)?;
        }
        if let Some(v) = get("surface.a") {
            minor = num("surface.a", v)?;
        }
        c.chart = match get("surface.kind").unwrap_or("torus") {
            "torus" => SurfaceChart::torus(major, minor)?,
            "flat_sheet" => SurfaceChart::FlatSheet,
            "unit_sphere_patch" => SurfaceChart::UnitSpherePatch,
            other => return Err(Error::Config(format!("surface.kind: unknown surface '{other}'"))),
        };

        let params = get("thickness.params").map(|v| list("thickness.params", v)).transpose()?;
        c.thickness = match get("thickness.preset").unwrap_or("constant") {
            "constant" => {
                let p = params.unwrap_or_else(|| vec![0.0, 1.0]);
                if p.len() != 2 {
                    return Err(Error::Config("thickness.params: constant needs g0, g1".into()));
                }
                ThicknessProfile::constant(p[0], p[1])?
            }
            "sinusoidal" => {
                let p = params.unwrap_or_else(|| vec![0.3, 1.0]);
                if p.len() != 2 || p[1] < 0.0 || p[1].fract() != 0.0 {
                    return Err(Error::Config(
                        "thickness.params: sinusoidal needs amplitude, integer frequency".into(),
                    ));
                }
                ThicknessProfile::sinusoidal(p[0], p[1] as u32)?
            }
            other => return Err(Error::Config(format!("thickness.preset: unknown preset '{other}'"))),
        };

        let mut constants = None;
        if ["potential.c0", "potential.c2", "potential.c3"].iter().any(|k| get(k).is_some()) {
            let q = |k: &str| get(k).map(|v| num::<f64>(k, v)).transpose();
            constants = Some(GrowthConstants {
                c0: q("potential.c0")?.unwrap_or(0.0),
                c2: q("potential.c2")?.unwrap_or(0.0),
                c3: q("potential.c3")?.unwrap_or(0.0),
            });
        }
        c.potential = match (get("potential.preset"), get("potential.coeffs")) {
            (Some(_), Some(_)) => {
                return Err(Error::Config("give either potential.preset or potential.coeffs".into()));
            }
            (_, Some(v)) => {
                let consts = constants.ok_or_else(|| {
                    Error::Config("potential.coeffs needs potential.c0, potential.c2, potential.c3".into())
                })?;
                Potential::polynomial(list("potential.coeffs", v)?, consts)?
            }
            (Some("quartic_double_well") | None, None) => Potential::quartic_double_well(),
            (Some(other), None) => return Err(Error::Config(format!("potential.preset: unknown preset '{other}'"))),
        };

        macro_rules! set {
            ($key:literal, $field:expr) => {
                if let Some(v) = get($key) {
                    $field = num($key, v)?;
                }
            };
        }
        set!("grid.n1", c.n1);
        set!("grid.n2", c.n2);
        set!("grid.n3", c.n3);
        set!("epsilon", c.epsilon);
        set!("bulk.tau", c.bulk.tau);
        set!("bulk.stabilization", c.bulk.stabilization);
        set!("bulk.tol_lin", c.bulk.tol_lin);
        set!("bulk.max_iter", c.bulk.max_iter);
        set!("bulk.seed", c.bulk_seed);
        set!("bulk.T", c.bulk_t);
        set!("surface.tau", c.surface.tau);
        set!("surface.stabilization", c.surface.stabilization);
        set!("surface.tol_lin", c.surface.tol_lin);
        set!("surface.T", c.surface_t);
        set!("oracle.modes", c.oracle_modes);
        set!("oracle.tau", c.oracle_tau);
        set!("study.T", c.study_t);
        set!("study.v0_amplitude", c.v0_amplitude);
        set!("study.v0_mean", c.v0_mean);
        set!("study.alpha", c.alpha);
        set!("study.c_tau", c.c_tau);
        set!("verify.steps", c.verify_steps);
        c.surface.max_iter = c.bulk.max_iter;
        if let Some(v) = get("bulk.snapshot_times") {
            c.bulk_snapshot_times = list("bulk.snapshot_times", v)?;
        }
        if let Some(v) = get("study.epsilons") {
            c.epsilons = list("study.epsilons", v)?;
        }
        let mode = get("study.v0_mode").map(|v| num::<u32>("study.v0_mode", v)).transpose()?.unwrap_or(1);
        c.v0 = match get("study.v0").unwrap_or("fourier") {
            "fourier" => InitialProfile::Fourier { mode },
            "random" => InitialProfile::Random,
            "tanh_stripe" => InitialProfile::TanhStripe,
            other => return Err(Error::Config(format!("study.v0: unknown profile '{other}'"))),
        };
        c.validate()?;
        Ok(c)
    }

    /// Field-level checks that do not need geometry construction.
    pub fn validate(&self) -> Result<()> {
        self.bulk.validate()?;
        self.surface.validate()?;
        ReferenceGrid::new(self.n1, self.n2, self.n3, self.epsilon)?;
        if !(self.bulk_t >= 0.0 && self.surface_t >= 0.0 && self.study_t >= 0.0) {
            return Err(Error::Config("final times must be nonnegative".into()));
        }
        if !(self.alpha >= 0.0 && self.alpha < 1.0 / 3.0) {
            return Err(Error::Config(format!("study.alpha must lie in [0, 1/3), got {}", self.alpha)));
        }
        if !(self.c_tau > 0.0) {
            return Err(Error::Config("study.c_tau must be positive".into()));
        }
        if !(self.oracle_tau > 0.0) || self.oracle_modes < 4 || !self.oracle_modes.is_multiple_of(2) {
            return Err(Error::Config("oracle.tau must be positive and oracle.modes even and >= 4".into()));
        }
        Ok(())
    }

    /// Study-level checks: at least three strictly decreasing ε values.
    pub fn validate_study(&self) -> Result<()> {
        if self.epsilons.len() < 3 {
            return Err(Error::Config(format!("study.epsilons needs at least 3 values, got {}", self.epsilons.len())));
        }
        if self.epsilons.windows(2).any(|w| !(w[0] > w[1])) {
            return Err(Error::Config("study.epsilons must be strictly decreasing".into()));
        }
        for &e in &self.epsilons {
            ReferenceGrid::new(self.n1, self.n2, self.n3, e)?;
        }
        Ok(())
    }

    pub fn reference_grid(&self) -> Result<ReferenceGrid> {
        ReferenceGrid::new(self.n1, self.n2, self.n3, self.epsilon)
    }

    /// Matched step `c_τ h⁴` capped at `1e-4`, with `h = max(1/n1, 1/n2)`.
    pub fn matched_tau(&self) -> f64 {
        let h = (1.0 / self.n1 as f64).max(1.0 / self.n2 as f64);
        (self.c_tau * h.powi(4)).min(1e-4)
    }

    /// Snapshot times, defaulting to `{T/4, T/2, 3T/4, T}`.
    pub fn snapshot_times(&self, t: f64) -> Vec<f64> {
        if self.bulk_snapshot_times.is_empty() {
            vec![0.25 * t, 0.5 * t, 0.75 * t, t]
        } else {
            self.bulk_snapshot_times.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let c = ExperimentConfig::parse("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert!((c.matched_tau() - 1e-4).abs() < 1e-18);
        let c = ExperimentConfig::parse(
            "# comment\nsurface.kind = flat_sheet\ngrid.n1 = 64 # trailing\nstudy.epsilons = 0.4, 0.2, 0.1\nthickness.preset = sinusoidal\nthickness.params = 0.5, 2\n",
        )
        .unwrap();
        assert_eq!(c.chart, SurfaceChart::FlatSheet);
        assert_eq!(c.n1, 64);
        assert_eq!(c.epsilons, vec![0.4, 0.2, 0.1]);
        assert_eq!(c.thickness, ThicknessProfile::sinusoidal(0.5, 2).unwrap());
        assert_eq!(c.snapshot_times(1.0), vec![0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn rejects_bad_input() {
        for text in [
            "grid.nl = 4",
            "epsilon = 0.1\nepsilon = 0.2",
            "epsilon",
            "grid.n1 = abc",
            "bulk.tol_lin = 1e-3",
            "surface.kind = klein_bottle",
            "potential.coeffs = 0, 1",
            "study.alpha = 0.5",
        ] {
            assert!(
                matches!(
                    ExperimentConfig::parse(text),
                    Err(Error::Config(_) | Error::Precondition(_) | Error::Construction(_))
                ),
                "{text}"
            );
        }
        let single = ExperimentConfig::parse("study.epsilons = 0.1").unwrap();
        assert!(matches!(single.validate_study(), Err(Error::Config(_))));
        let unsorted = ExperimentConfig::parse("study.epsilons = 0.1, 0.2, 0.05").unwrap();
        assert!(unsorted.validate_study().is_err());
    }

    #[test]
    fn user_polynomial() {
        let c = ExperimentConfig::parse(
            "potential.coeffs = 0.25, 0, -0.5, 0, 0.25\npotential.c0 = 0\npotential.c2 = 1\npotential.c3 = 6",
        )
        .unwrap();
        assert!((c.potential.f(0.0) - 0.25).abs() < 1e-15);
    }
}
