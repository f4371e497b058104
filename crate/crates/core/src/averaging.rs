//! The weighted thin-direction average
//! `M_ε u(s') = (1/ε) ∫₀^ε U(s', s3) J(ψ(s'), r(s)) ds3`
//! and the residuals that measure how far averaged bulk quantities are from
//! their surface counterparts.

use std::sync::Arc;

use crate::bulk::{BulkDomain, BulkField};
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::potential::Potential;
use crate::surface::SurfaceField;

/// Trapezoid rule in `s3` tied to one bulk domain.
#[derive(Debug, Clone)]
pub struct AveragingContext {
    domain: Arc<BulkDomain>,
    weights: Vec<f64>,
}

impl AveragingContext {
    pub fn new(domain: Arc<BulkDomain>) -> Self {
        let h = domain.grid.h();
        let weights = domain.stencil.layer_weights().iter().map(|w| w / (h[0] * h[1])).collect();
        Self { domain, weights }
    }

    pub fn domain(&self) -> &Arc<BulkDomain> {
        &self.domain
    }

    /// Quadrature weights on the `n3 + 1` layers; they sum to `ε`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn check(&self, u: &BulkField) -> Result<()> {
        if !Arc::ptr_eq(&u.domain, &self.domain) {
            return Err(Error::Precondition("field belongs to a different bulk domain".into()));
        }
        Ok(())
    }

    /// Averages arbitrary node values.
    pub fn average_values(&self, values: &[f64]) -> Vec<f64> {
        let cols = self.domain.shape().columns();
        let eps = self.domain.grid.eps;
        let jv = &self.domain.coefficients.jval;
        let mut out = vec![0.0; cols];
        for (k, q) in self.weights.iter().enumerate() {
            for (c, o) in out.iter_mut().enumerate() {
                let p = k * cols + c;
                *o += q * values[p] * jv[p];
            }
        }
        out.iter_mut().for_each(|o| *o /= eps);
        out
    }

    fn average_vectors(&self, values: &[Vec3]) -> Vec<Vec3> {
        let cols = self.domain.shape().columns();
        let eps = self.domain.grid.eps;
        let jv = &self.domain.coefficients.jval;
        let mut out = vec![Vec3::zeros(); cols];
        for (k, q) in self.weights.iter().enumerate() {
            for (c, o) in out.iter_mut().enumerate() {
                let p = k * cols + c;
                *o += values[p] * (q * jv[p]);
            }
        }
        out.iter_mut().for_each(|o| *o /= eps);
        out
    }

    pub fn average(&self, u: &BulkField) -> Result<SurfaceField> {
        self.check(u)?;
        self.domain.surface.field(self.average_values(&u.values))
    }

    /// `|∫_Ω u η̄ - ε ∫_Γ g (M_ε u) η|`.
    pub fn pairing_residual(&self, u: &BulkField, eta: &SurfaceField) -> Result<f64> {
        Ok(self.pairing_sides(u, eta)?.2)
    }

    /// Bulk side, surface side and their difference.
    pub fn pairing_sides(&self, u: &BulkField, eta: &SurfaceField) -> Result<(f64, f64, f64)> {
        self.check(u)?;
        if eta.values.len() != self.domain.surface.len() {
            return Err(Error::Precondition("surface field has the wrong size".into()));
        }
        let cols = self.domain.shape().columns();
        let mass = self.domain.stencil.mass();
        let lhs: f64 = u.values.iter().enumerate().map(|(p, x)| mass[p] * x * eta.values[p % cols]).sum();
        let avg = self.average_values(&u.values);
        let smass = self.domain.surface.weighted.mass();
        let rhs =
            self.domain.grid.eps * avg.iter().zip(&eta.values).zip(smass).map(|((a, e), m)| m * a * e).sum::<f64>();
        Ok((lhs, rhs, (lhs - rhs).abs()))
    }

    /// Chart components of
    /// `M_ε(B ∇u) + M_ε((∂_ν u + u f_J) b_ε) + M_ε(u b_J)`, which equals
    /// `∇_Γ M_ε u`. Here `B = P - d W`, `f_J = (-H + 2dK)/J`,
    /// `b_J = (d/J)(-∇_Γ H + d ∇_Γ K)` and
    /// `b_ε = ((d - εg0) ∇_Γ g1 + (εg1 - d) ∇_Γ g0)/g`, with `d = r(s)` and
    /// all surface quantities extended constantly along normals.
    pub fn average_tangential_gradient(&self, u: &BulkField) -> Result<[SurfaceField; 2]> {
        self.check(u)?;
        let d = &self.domain;
        let cols = d.shape().columns();
        let eps = d.grid.eps;
        let grad = u.ambient_gradient();
        let dnu = u.normal_derivative();
        let integrand: Vec<Vec3> = (0..u.values.len())
            .map(|p| {
                let c = p % cols;
                let smp = &d.surface.samples[c];
                let th = &d.surface.thickness[c];
                let r = d.coefficients.offset[p];
                let jv = d.coefficients.jval[p];
                let b = smp.projection - smp.weingarten * r;
                let f_j = (-smp.mean_curvature + 2.0 * r * smp.gauss_curvature) / jv;
                let b_j = (-smp.grad_mean_curvature + smp.grad_gauss_curvature * r) * (r / jv);
                let b_eps = (th.grad_g1 * (r - eps * th.g0) + th.grad_g0 * (eps * th.g1 - r)) / th.g;
                b * grad[p] + b_eps * (dnu[p] + u.values[p] * f_j) + b_j * u.values[p]
            })
            .collect();
        let avg = self.average_vectors(&integrand);
        let mut comps = [vec![0.0; cols], vec![0.0; cols]];
        for (c, v) in avg.iter().enumerate() {
            let cc = d.surface.samples[c].chart_components(v);
            comps[0][c] = cc[0];
            comps[1][c] = cc[1];
        }
        let [a, b] = comps;
        Ok([d.surface.field(a)?, d.surface.field(b)?])
    }

    /// `ζ_Δ = M_ε(Δu) - A_g M_ε u`.
    pub fn residual_zeta_delta(&self, u: &BulkField) -> Result<SurfaceField> {
        self.check(u)?;
        let lap = self.average(&u.discrete_laplacian())?;
        let ag = self.average(u)?.apply_ag();
        let values = lap.values.iter().zip(&ag.values).map(|(a, b)| a - b).collect();
        self.domain.surface.field(values)
    }

    /// `ζ_G = M_ε(G(u)) - G(M_ε u)` for a pointwise nonlinearity `G`.
    pub fn residual_zeta<G: Fn(f64) -> f64>(&self, u: &BulkField, g: G) -> Result<SurfaceField> {
        self.check(u)?;
        let gu: Vec<f64> = u.values.iter().map(|&z| g(z)).collect();
        let mg = self.average_values(&gu);
        let mu = self.average_values(&u.values);
        let values = mg.iter().zip(&mu).map(|(a, &b)| a - g(b)).collect();
        self.domain.surface.field(values)
    }

    /// `ζ_{F'}`.
    pub fn residual_zeta_f(&self, u: &BulkField, potential: &Potential) -> Result<SurfaceField> {
        self.residual_zeta(u, |z| potential.df(z))
    }
}

/// Centred chart derivatives of a surface field.
pub fn chart_derivatives(v: &SurfaceField) -> [Vec<f64>; 2] {
    let (n1, n2) = (v.domain.n1, v.domain.n2);
    let mut d1 = vec![0.0; n1 * n2];
    let mut d2 = vec![0.0; n1 * n2];
    for j in 0..n2 {
        for i in 0..n1 {
            let p = j * n1 + i;
            d1[p] = (v.values[j * n1 + (i + 1) % n1] - v.values[j * n1 + (i + n1 - 1) % n1]) * n1 as f64 / 2.0;
            d2[p] = (v.values[((j + 1) % n2) * n1 + i] - v.values[((j + n2 - 1) % n2) * n1 + i]) * n2 as f64 / 2.0;
        }
    }
    [d1, d2]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{SurfaceChart, ThicknessProfile};
    use crate::pullback::ReferenceGrid;
    use crate::rng::Lcg;
    use std::f64::consts::TAU;

    fn domain(chart: SurfaceChart, profile: ThicknessProfile, n: [usize; 3], eps: f64) -> Arc<BulkDomain> {
        BulkDomain::new(chart, profile, ReferenceGrid::new(n[0], n[1], n[2], eps).unwrap()).unwrap()
    }

    fn flat(eps: f64) -> Arc<BulkDomain> {
        domain(SurfaceChart::FlatSheet, ThicknessProfile::constant(0.0, 1.0).unwrap(), [16, 16, 4], eps)
    }

    #[test]
    fn weights_sum_to_eps() {
        let ctx = AveragingContext::new(flat(0.1));
        assert!((ctx.weights().iter().sum::<f64>() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn average_examples() {
        let d = flat(0.1);
        let ctx = AveragingContext::new(Arc::clone(&d));
        let lin = d.field_from_fn(|s| s[2] / 0.1);
        assert!(ctx.average(&lin).unwrap().values.iter().all(|v| (v - 0.5).abs() < 1e-14));
        let one = d.field(vec![1.0; d.len()]).unwrap();
        assert!(ctx.average(&one).unwrap().values.iter().all(|v| (v - 1.0).abs() < 1e-14));
    }

    #[test]
    fn matched_data_round_trip() {
        let d = domain(
            SurfaceChart::torus(2.0, 1.0).unwrap(),
            ThicknessProfile::sinusoidal(0.3, 1).unwrap(),
            [16, 8, 4],
            0.1,
        );
        let ctx = AveragingContext::new(Arc::clone(&d));
        let v0 = d.surface.field_from_fn(|s| (TAU * s[0]).sin() + 0.3);
        let back = ctx.average(&d.init_from_surface(&v0).unwrap()).unwrap();
        for (a, b) in back.values.iter().zip(&v0.values) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn pairing_is_exact() {
        let mut g = Lcg::new(9);
        for d in [
            flat(0.1),
            domain(
                SurfaceChart::torus(2.0, 1.0).unwrap(),
                ThicknessProfile::sinusoidal(0.5, 2).unwrap(),
                [16, 8, 4],
                0.2,
            ),
        ] {
            let ctx = AveragingContext::new(Arc::clone(&d));
            let one = d.field(vec![1.0; d.len()]).unwrap();
            let (l, r, res) = ctx.pairing_sides(&one, &d.surface.field(vec![1.0; d.surface.len()]).unwrap()).unwrap();
            assert!(res <= 1e-13 * l && (l - r).abs() <= 1e-13 * l);
            let (l0, r0, _) = ctx.pairing_sides(&one, &d.surface.zeros()).unwrap();
            assert_eq!((l0, r0), (0.0, 0.0));
            for _ in 0..5 {
                let u = d.field((0..d.len()).map(|_| g.symmetric()).collect()).unwrap();
                let eta = d.surface.field((0..d.surface.len()).map(|_| g.symmetric()).collect()).unwrap();
                let (l, _, res) = ctx.pairing_sides(&u, &eta).unwrap();
                assert!(res <= 1e-12 * l.abs().max(1e-3), "{res} vs {l}");
            }
        }
        assert!((flat(0.1).volume() - 0.1).abs() < 1e-14);
    }

    #[test]
    fn tangential_gradient_flat() {
        let d = flat(0.1);
        let ctx = AveragingContext::new(Arc::clone(&d));
        let c = d.field(vec![3.0; d.len()]).unwrap();
        for f in ctx.average_tangential_gradient(&c).unwrap() {
            assert!(f.values.iter().all(|x| x.abs() < 1e-12));
        }
        let u = d.field_from_fn(|s| (TAU * s[0]).sin());
        let [g1, g2] = ctx.average_tangential_gradient(&u).unwrap();
        let direct = chart_derivatives(&ctx.average(&u).unwrap());
        for p in 0..g1.values.len() {
            assert!((g1.values[p] - direct[0][p]).abs() < 1e-12);
            assert!(g2.values[p].abs() < 1e-12);
        }
    }

    #[test]
    fn tangential_gradient_torus_converges() {
        let mut errs = Vec::new();
        for n in [16usize, 32, 64] {
            let d = domain(
                SurfaceChart::torus(2.0, 1.0).unwrap(),
                ThicknessProfile::sinusoidal(0.3, 1).unwrap(),
                [n, n, 8],
                0.1,
            );
            let ctx = AveragingContext::new(Arc::clone(&d));
            let v0 = d.surface.field_from_fn(|s| (TAU * s[0]).sin() + (TAU * s[1]).cos());
            let u = d.init_from_surface(&v0).unwrap();
            let [g1, g2] = ctx.average_tangential_gradient(&u).unwrap();
            let direct = chart_derivatives(&v0);
            let err = (0..g1.values.len())
                .map(|p| (g1.values[p] - direct[0][p]).abs().max((g2.values[p] - direct[1][p]).abs()))
                .fold(0.0, f64::max);
            errs.push(err);
        }
        assert!(errs[2] < errs[0] / 8.0, "{errs:?}");
    }

    #[test]
    fn zeta_examples() {
        let d = flat(0.1);
        let ctx = AveragingContext::new(Arc::clone(&d));
        let u = d.field_from_fn(|s| (TAU * s[0]).sin() * 0.5);
        assert!(ctx.residual_zeta_delta(&u).unwrap().values.iter().all(|x| x.abs() < 1e-9));
        let p = Potential::quartic_double_well();
        assert!(ctx.residual_zeta_f(&u, &p).unwrap().values.iter().all(|x| x.abs() < 1e-14));
        let lin = d.field_from_fn(|s| s[2]);
        assert!(ctx.residual_zeta(&lin, |z| z).unwrap().values.iter().all(|x| x.abs() < 1e-15));
        // the trapezoid rule adds h3²/6 to the exact ε²/12
        let z = ctx.residual_zeta(&lin, |z| z * z).unwrap();
        let expect = 0.01 / 12.0 + 0.025f64.powi(2) / 6.0;
        assert!(z.values.iter().all(|x| (x - expect).abs() < 1e-15), "{}", z.values[0]);
    }
}
