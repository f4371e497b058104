//! Reference coordinates of the thin shell.
//!
//! The box `[0,1)² × [0, ε]` is mapped onto the shell by
//! `Ψ(s) = ψ(s') + r(s) ν(s')` with the affine offset
//! `r(s) = (ε - s3) g0(s') + s3 g1(s')`. In these coordinates the Laplacian
//! becomes `(1/det ∇Ψ) div_s(A ∇_s ·)` with `A = det ∇Ψ · (∇Ψ ∇Ψᵀ)⁻¹`.

use std::io::Write;

use nalgebra::SymmetricEigen;

use crate::error::{Error, Result};
use crate::geometry::{offset_jacobian, Mat3, SurfaceChart, SurfaceSample, ThicknessProfile, Vec3};
use crate::stencil::{GridShape, SymCoef};

/// Vertex-centred grid on the reference box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceGrid {
    pub n1: usize,
    pub n2: usize,
    pub n3: usize,
    pub eps: f64,
}

impl ReferenceGrid {
    pub fn new(n1: usize, n2: usize, n3: usize, eps: f64) -> Result<Self> {
        if n1 < 8 || n2 < 8 || !n1.is_multiple_of(2) || !n2.is_multiple_of(2) {
            return Err(Error::Construction(format!("n1, n2 must be even and >= 8, got {n1} x {n2}")));
        }
        if n3 < 2 {
            return Err(Error::Construction(format!("n3 must be >= 2, got {n3}")));
        }
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::Construction(format!("epsilon must lie in (0, 1), got {eps}")));
        }
        Ok(Self { n1, n2, n3, eps })
    }

    pub fn h(&self) -> [f64; 3] {
        [1.0 / self.n1 as f64, 1.0 / self.n2 as f64, self.eps / self.n3 as f64]
    }

    pub fn shape(&self) -> GridShape {
        GridShape { n1: self.n1, n2: self.n2, nl: self.n3 + 1 }
    }

    pub fn len(&self) -> usize {
        self.shape().len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Chart point of column `(i, j)`.
    pub fn surface_point(&self, i: usize, j: usize) -> [f64; 2] {
        [i as f64 / self.n1 as f64, j as f64 / self.n2 as f64]
    }

    pub fn s3(&self, k: usize) -> f64 {
        self.eps * k as f64 / self.n3 as f64
    }

    /// Checks `ε · max|g_i| <= δ`.
    pub fn check_tubular(&self, chart: &SurfaceChart, profile: &ThicknessProfile) -> Result<()> {
        let reach = self.eps * profile.max_abs_offset();
        if reach > chart.tubular_radius() {
            return Err(Error::GeometryValidity(format!(
                "epsilon {} reaches offset {reach} beyond the tubular radius {}",
                self.eps,
                chart.tubular_radius()
            )));
        }
        Ok(())
    }
}

#[inline]
fn offset(eps: f64, s3: f64, g0: f64, g1: f64) -> f64 {
    (eps - s3) * g0 + s3 * g1
}

fn check_box(eps: f64, s: [f64; 3]) -> Result<()> {
    let slack = 1e-14 * eps;
    if !(s[2] >= -slack && s[2] <= eps + slack) {
        return Err(Error::Domain(format!("s3 = {} outside [0, {eps}]", s[2])));
    }
    Ok(())
}

/// `Ψ_ε(s)`.
pub fn map_psi(chart: &SurfaceChart, profile: &ThicknessProfile, eps: f64, s: [f64; 3]) -> Result<Vec3> {
    check_box(eps, s)?;
    let sp = [s[0], s[1]];
    let p = chart.chart_eval(sp)?;
    let (g0, g1, _, _) = profile.chart_values(sp);
    Ok(p.position + p.normal * offset(eps, s[2], g0, g1))
}

/// Closest-point chart coordinates and signed distance of an ambient point.
pub fn chart_inverse(chart: &SurfaceChart, x: &Vec3) -> Result<([f64; 2], f64)> {
    use std::f64::consts::TAU;
    let wrap = |t: f64| t.rem_euclid(1.0);
    match *chart {
        SurfaceChart::Torus { major, minor } => {
            let rho = x.x.hypot(x.y);
            let theta = x.y.atan2(x.x);
            let phi = x.z.atan2(rho - major);
            let d = (rho - major).hypot(x.z) - minor;
            Ok(([wrap(theta / TAU), wrap(phi / TAU)], d))
        }
        SurfaceChart::FlatSheet => Ok(([x.x, x.y], x.z)),
        SurfaceChart::UnitSpherePatch => {
            let n = x.norm();
            if n == 0.0 {
                return Err(Error::Domain("origin has no closest point on the sphere".into()));
            }
            let lon = x.y.atan2(x.x);
            let lat = (x.z / n).asin();
            Ok(([wrap(lon / TAU), lat / std::f64::consts::PI + 0.5], n - 1.0))
        }
    }
}

/// Maps `s` forward, inverts through the closest-point map and returns the
/// largest coordinate discrepancy (periodic directions compared modulo 1).
pub fn inverse_check(chart: &SurfaceChart, profile: &ThicknessProfile, eps: f64, s: [f64; 3]) -> Result<f64> {
    let x = map_psi(chart, profile, eps, s)?;
    let (sp, d) = chart_inverse(chart, &x)?;
    let (g0, g1, _, _) = profile.chart_values(sp);
    let s3 = (d - eps * g0) / (g1 - g0);
    let periodic = |a: f64, b: f64| {
        if chart.is_periodic() {
            let t = (a - b).rem_euclid(1.0);
            t.min(1.0 - t)
        } else {
            (a - b).abs()
        }
    };
    Ok(periodic(sp[0], s[0]).max(periodic(sp[1], s[1])).max((s3 - s[2]).abs()))
}

/// Rows `∂_{s_i}Ψ` of `∇_sΨ` at offset `r` over a surface sample.
pub fn pullback_gradient(
    sample: &SurfaceSample,
    eps: f64,
    s3: f64,
    g0: f64,
    g1: f64,
    dg0: [f64; 2],
    dg1: [f64; 2],
) -> Mat3 {
    let r = offset(eps, s3, g0, g1);
    let mut m = Mat3::zeros();
    for i in 0..2 {
        let dr = (eps - s3) * dg0[i] + s3 * dg1[i];
        let row = sample.tangents[i] + sample.normal * dr + sample.normal_derivatives[i] * r;
        m.set_row(i, &row.transpose());
    }
    m.set_row(2, &(sample.normal * (g1 - g0)).transpose());
    m
}

/// Per-node metric data of the reference coordinates.
#[derive(Debug, Clone)]
pub struct PullbackCoefficients {
    pub grid: ReferenceGrid,
    /// `det ∇_sΨ` from the closed form `g J √det θ` (normative).
    pub det_jac: Vec<f64>,
    /// `det ∇_sΨ` from the 3×3 determinant.
    pub det_jac_matrix: Vec<f64>,
    pub aeps: Vec<SymCoef>,
    /// `J(ψ(s'), r(s))` per node.
    pub jval: Vec<f64>,
    /// Offset `r(s)` per node.
    pub offset: Vec<f64>,
    pub g: Vec<f64>,
    pub g0: Vec<f64>,
    pub g1: Vec<f64>,
    /// Smallest eigenvalue of `A` over all nodes.
    pub c_ell: f64,
    /// Largest relative mismatch between the two determinants.
    pub det_mismatch: f64,
}

fn sym_to_mat(a: &SymCoef) -> Mat3 {
    Mat3::new(a[0], a[3], a[4], a[3], a[1], a[5], a[4], a[5], a[2])
}

pub fn build_coefficients(
    chart: &SurfaceChart,
    profile: &ThicknessProfile,
    grid: &ReferenceGrid,
) -> Result<PullbackCoefficients> {
    if !chart.is_periodic() {
        return Err(Error::Construction(format!(
            "{} has no global periodic chart and cannot carry a grid",
            chart.name()
        )));
    }
    grid.check_tubular(chart, profile)?;
    let shape = grid.shape();
    let n = shape.len();
    let cols = shape.columns();
    let mut out = PullbackCoefficients {
        grid: *grid,
        det_jac: vec![0.0; n],
        det_jac_matrix: vec![0.0; n],
        aeps: vec![[0.0; 6]; n],
        jval: vec![0.0; n],
        offset: vec![0.0; n],
        g: vec![0.0; cols],
        g0: vec![0.0; cols],
        g1: vec![0.0; cols],
        c_ell: f64::INFINITY,
        det_mismatch: 0.0,
    };
    for j in 0..grid.n2 {
        for i in 0..grid.n1 {
            let sp = grid.surface_point(i, j);
            let smp = chart.sample(sp)?;
            let (g0, g1, dg0, dg1) = profile.chart_values(sp);
            let c = j * grid.n1 + i;
            out.g[c] = g1 - g0;
            out.g0[c] = g0;
            out.g1[c] = g1;
            for k in 0..=grid.n3 {
                let p = shape.idx(i, j, k);
                let s3 = grid.s3(k);
                let r = offset(grid.eps, s3, g0, g1);
                let jv = offset_jacobian(smp.mean_curvature, smp.gauss_curvature, r);
                let closed = (g1 - g0) * jv * smp.sqrt_det_metric;
                let m = pullback_gradient(&smp, grid.eps, s3, g0, g1, dg0, dg1);
                let det3 = m.determinant();
                if !(det3 > 0.0 && closed > 0.0) {
                    return Err(Error::GeometryValidity(format!(
                        "non-positive Jacobian determinant at node ({i}, {j}, {k}); epsilon too large"
                    )));
                }
                let gram = m * m.transpose();
                let ginv = gram
                    .try_inverse()
                    .ok_or_else(|| Error::GeometryValidity(format!("singular pullback gradient at ({i}, {j}, {k})")))?;
                let a = ginv * closed;
                let sym = [
                    a[(0, 0)],
                    a[(1, 1)],
                    a[(2, 2)],
                    0.5 * (a[(0, 1)] + a[(1, 0)]),
                    0.5 * (a[(0, 2)] + a[(2, 0)]),
                    0.5 * (a[(1, 2)] + a[(2, 1)]),
                ];
                let lmin = SymmetricEigen::new(sym_to_mat(&sym)).eigenvalues.min();
                out.c_ell = out.c_ell.min(lmin);
                out.det_mismatch = out.det_mismatch.max((det3 - closed).abs() / closed);
                out.det_jac[p] = closed;
                out.det_jac_matrix[p] = det3;
                out.aeps[p] = sym;
                out.jval[p] = jv;
                out.offset[p] = r;
            }
        }
    }
    if !(out.c_ell > 0.0) {
        return Err(Error::GeometryValidity(format!(
            "coefficient matrix not elliptic (smallest eigenvalue {})",
            out.c_ell
        )));
    }
    Ok(out)
}

impl PullbackCoefficients {
    pub fn matrix(&self, p: usize) -> Mat3 {
        sym_to_mat(&self.aeps[p])
    }

    /// Smallest Rayleigh quotient `(A a)·a / |a|²` over `vectors_per_node`
    /// pseudo-random unit vectors at every `stride`-th node.
    pub fn min_rayleigh_quotient(&self, stride: usize, vectors_per_node: usize, seed: u64) -> f64 {
        let mut rng = crate::rng::Lcg::new(seed);
        let mut best = f64::INFINITY;
        for p in (0..self.aeps.len()).step_by(stride.max(1)) {
            let a = self.matrix(p);
            for _ in 0..vectors_per_node {
                let v = Vec3::new(rng.symmetric(), rng.symmetric(), rng.symmetric());
                let nv = v.norm();
                if nv < 1e-12 {
                    continue;
                }
                let u = v / nv;
                best = best.min((a * u).dot(&u));
            }
        }
        best
    }

    /// CSV dump: node index, detJac and the six entries of `A`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "node,det_jac,a11,a22,a33,a12,a13,a23")?;
        for (p, (d, a)) in self.det_jac.iter().zip(&self.aeps).enumerate() {
            writeln!(
                w,
                "{p},{d:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
                a[0], a[1], a[2], a[3], a[4], a[5]
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn torus() -> SurfaceChart {
        SurfaceChart::torus(2.0, 1.0).unwrap()
    }

    fn unit() -> ThicknessProfile {
        ThicknessProfile::constant(0.0, 1.0).unwrap()
    }

    #[test]
    fn map_psi_examples() {
        let flat = SurfaceChart::FlatSheet;
        let x = map_psi(&flat, &unit(), 0.1, [0.5, 0.5, 0.03]).unwrap();
        assert!((x - Vec3::new(0.5, 0.5, 0.03)).norm() < 1e-15);
        let x = map_psi(&torus(), &unit(), 0.1, [0.0, 0.0, 0.05]).unwrap();
        assert!((x - Vec3::new(3.05, 0.0, 0.0)).norm() < 1e-14);
        let prof = ThicknessProfile::constant(-0.5, 0.5).unwrap();
        let s = [0.3, 0.6];
        let x = map_psi(&torus(), &prof, 0.1, [s[0], s[1], 0.0]).unwrap();
        let p = torus().chart_eval(s).unwrap();
        assert!((x - (p.position + p.normal * (0.1 * -0.5))).norm() < 1e-14);
        assert!(matches!(map_psi(&flat, &unit(), 0.1, [0.0, 0.0, 0.2]), Err(Error::Domain(_))));
    }

    #[test]
    fn inverse_examples() {
        assert_eq!(inverse_check(&SurfaceChart::FlatSheet, &unit(), 0.1, [0.2, 0.4, 0.07]).unwrap(), 0.0);
        assert!(inverse_check(&torus(), &unit(), 0.1, [0.3, 0.7, 0.02]).unwrap() <= 1e-12);
        assert!(inverse_check(&torus(), &unit(), 0.1, [0.3, 0.7, 0.1]).unwrap() <= 1e-12);
        let sin = ThicknessProfile::sinusoidal(0.2, 2).unwrap();
        assert!(inverse_check(&torus(), &sin, 0.1, [0.81, 0.13, 0.04]).unwrap() <= 1e-12);
    }

    #[test]
    fn flat_sheet_coefficients_are_identity() {
        let grid = ReferenceGrid::new(8, 8, 2, 0.1).unwrap();
        let c = build_coefficients(&SurfaceChart::FlatSheet, &unit(), &grid).unwrap();
        for (d, a) in c.det_jac.iter().zip(&c.aeps) {
            assert!((d - 1.0).abs() < 1e-15);
            let dev =
                (a[0] - 1.0).abs() + (a[1] - 1.0).abs() + (a[2] - 1.0).abs() + a[3].abs() + a[4].abs() + a[5].abs();
            assert!(dev <= 1e-12);
        }
    }

    #[test]
    fn torus_determinant_identity_and_symmetry() {
        let grid = ReferenceGrid::new(32, 16, 4, 0.1).unwrap();
        let c = build_coefficients(&torus(), &unit(), &grid).unwrap();
        assert!(c.det_mismatch <= 1e-6);
        assert!(c.c_ell > 0.0);
        assert!(c.min_rayleigh_quotient(7, 100, 3) >= c.c_ell - 1e-12);
    }

    #[test]
    fn sinusoidal_profile_has_cross_terms() {
        let grid = ReferenceGrid::new(16, 16, 4, 0.1).unwrap();
        let prof = ThicknessProfile::sinusoidal(0.2, 1).unwrap();
        let c = build_coefficients(&torus(), &prof, &grid).unwrap();
        assert!(c.det_mismatch <= 1e-6);
        assert!(c.aeps.iter().any(|a| a[4].abs() > 1e-3));
    }

    #[test]
    fn pullback_gradient_matches_finite_differences() {
        let t = torus();
        let prof = ThicknessProfile::sinusoidal(0.3, 1).unwrap();
        let eps = 0.1;
        let s = [0.27, 0.61, 0.04];
        let smp = t.sample([s[0], s[1]]).unwrap();
        let (g0, g1, d0, d1) = prof.chart_values([s[0], s[1]]);
        let m = pullback_gradient(&smp, eps, s[2], g0, g1, d0, d1);
        let h = 1e-6;
        for d in 0..3 {
            let mut sp = s;
            let mut sm = s;
            sp[d] += h;
            sm[d] -= h;
            let fd = (map_psi(&t, &prof, eps, sp).unwrap() - map_psi(&t, &prof, eps, sm).unwrap()) / (2.0 * h);
            assert!((fd - m.row(d).transpose()).norm() < 1e-6 * fd.norm().max(1.0));
        }
    }

    #[test]
    fn too_thick_shell_rejected() {
        let grid = ReferenceGrid::new(8, 8, 2, 0.6).unwrap();
        assert!(matches!(build_coefficients(&torus(), &unit(), &grid), Err(Error::GeometryValidity(_))));
        let grid = ReferenceGrid::new(8, 8, 2, 0.1).unwrap();
        assert!(build_coefficients(&SurfaceChart::UnitSpherePatch, &unit(), &grid).is_err());
        assert!(ReferenceGrid::new(6, 8, 2, 0.1).is_err());
        assert!(ReferenceGrid::new(8, 9, 2, 0.1).is_err());
        assert!(ReferenceGrid::new(8, 8, 1, 0.1).is_err());
    }

    #[test]
    fn csv_dump_has_header_and_rows() {
        let grid = ReferenceGrid::new(8, 8, 2, 0.1).unwrap();
        let c = build_coefficients(&torus(), &unit(), &grid).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + grid.len());
        assert!(text.starts_with("node,det_jac,a11"));
    }
}
