//! Homogeneous free-energy potentials with polynomial growth.

use crate::error::{Error, Result};

/// Growth constants: `F >= -C0`, `F'' >= -C2`, `|F'''(z)| <= C3 (|z| + 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthConstants {
    pub c0: f64,
    pub c2: f64,
    pub c3: f64,
}

/// A polynomial potential `F(z) = Σ coeffs[k] z^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    coeffs: Vec<f64>,
    d1: Vec<f64>,
    d2: Vec<f64>,
    constants: GrowthConstants,
}

fn derivative(c: &[f64]) -> Vec<f64> {
    c.iter().enumerate().skip(1).map(|(k, a)| k as f64 * a).collect()
}

fn horner(c: &[f64], z: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, a| acc * z + a)
}

impl Potential {
    pub fn polynomial(coeffs: Vec<f64>, constants: GrowthConstants) -> Result<Self> {
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Construction("potential coefficients must be finite".into()));
        }
        if constants.c0 < 0.0 || constants.c2 < 0.0 || constants.c3 < 0.0 {
            return Err(Error::Construction("growth constants must be nonnegative".into()));
        }
        let d1 = derivative(&coeffs);
        let d2 = derivative(&d1);
        Ok(Self { coeffs, d1, d2, constants })
    }

    /// `F(z) = (z² - 1)² / 4` with `C0 = 0`, `C2 = 1`, `C3 = 6`.
    pub fn quartic_double_well() -> Self {
        Self::polynomial(vec![0.25, 0.0, -0.5, 0.0, 0.25], GrowthConstants { c0: 0.0, c2: 1.0, c3: 6.0 })
            .expect("preset is valid")
    }

    /// `F ≡ 0`: switches the nonlinearity off for linear tests.
    pub fn zero() -> Self {
        Self::polynomial(vec![0.0], GrowthConstants { c0: 0.0, c2: 0.0, c3: 0.0 }).expect("preset is valid")
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Coefficients of `F'`.
    pub fn derivative_coeffs(&self) -> &[f64] {
        &self.d1
    }

    pub fn constants(&self) -> GrowthConstants {
        self.constants
    }

    #[inline]
    pub fn f(&self, z: f64) -> f64 {
        horner(&self.coeffs, z)
    }

    #[inline]
    pub fn df(&self, z: f64) -> f64 {
        horner(&self.d1, z)
    }

    #[inline]
    pub fn d2f(&self, z: f64) -> f64 {
        horner(&self.d2, z)
    }

    pub fn eval(&self, z: f64, order: u8) -> Result<f64> {
        match order {
            0 => Ok(self.f(z)),
            1 => Ok(self.df(z)),
            2 => Ok(self.d2f(z)),
            _ => Err(Error::Precondition(format!("derivative order {order} not in 0..=2"))),
        }
    }

    /// Sweeps `[lo, hi]` and checks the three growth inequalities.
    pub fn verify_growth(&self, range: (f64, f64), step: f64) -> Result<GrowthReport> {
        let (lo, hi) = range;
        if !(lo.is_finite() && hi.is_finite() && lo < hi && step > 0.0) {
            return Err(Error::Precondition(format!("bad sweep range {range:?}, step {step}")));
        }
        let n = ((hi - lo) / step).round() as usize;
        let GrowthConstants { c0, c2, c3 } = self.constants;
        let mut report = GrowthReport {
            c0_ok: true,
            c2_ok: true,
            c3_ok: true,
            worst_c0: (lo, f64::INFINITY),
            worst_c2: (lo, f64::INFINITY),
            worst_c3: (lo, f64::NEG_INFINITY),
        };
        for i in 0..=n {
            let z = lo + i as f64 * step;
            let f = self.f(z);
            let f2 = self.d2f(z);
            if !f.is_finite() || !f2.is_finite() {
                return Err(Error::Evaluation(format!("potential not finite at z = {z}")));
            }
            // margins: positive means the inequality holds
            let m0 = f + c0;
            let m2 = f2 + c2;
            let f3 = (self.d2f(z + step) - self.d2f(z - step)) / (2.0 * step);
            let m3 = f3.abs() - c3 * (z.abs() + 1.0);
            if m0 < report.worst_c0.1 {
                report.worst_c0 = (z, m0);
            }
            if m2 < report.worst_c2.1 {
                report.worst_c2 = (z, m2);
            }
            if m3 > report.worst_c3.1 {
                report.worst_c3 = (z, m3);
            }
        }
        // slack for the finite-difference third derivative
        let tol = 1e-9 * (1.0 + c3);
        report.c0_ok = report.worst_c0.1 >= 0.0;
        report.c2_ok = report.worst_c2.1 >= 0.0;
        report.c3_ok = report.worst_c3.1 <= tol;
        Ok(report)
    }
}

/// Outcome of [`Potential::verify_growth`]. Each `worst_*` pair is the point
/// with the smallest margin and that margin (for C3 the largest excess).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthReport {
    pub c0_ok: bool,
    pub c2_ok: bool,
    pub c3_ok: bool,
    pub worst_c0: (f64, f64),
    pub worst_c2: (f64, f64),
    pub worst_c3: (f64, f64),
}

impl GrowthReport {
    pub fn all_ok(&self) -> bool {
        self.c0_ok && self.c2_ok && self.c3_ok
    }
}
