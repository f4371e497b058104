//! Closed-form surfaces, their curvature data and the thickness profiles of
//! the thin shell built on top of them.
//!
//! Chart coordinates live on the unit square. The torus and the flat sheet are
//! doubly periodic there and may be handed to the solvers; the sphere patch is
//! an open chart used only for pointwise evaluation.
//!
//! The shape operator follows the convention `W = -grad_Γ ν` with the outward
//! unit normal, so convex surfaces carry negative principal curvatures.

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix2, Matrix3, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Stand-in for an unbounded tubular radius (flat sheet).
pub const UNBOUNDED_RADIUS: f64 = 1.0e6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SurfaceChart {
    /// Torus with major radius `major` and tube radius `minor`; `s1` runs
    /// around the long circle, `s2` around the tube.
    Torus { major: f64, minor: f64 },
    /// The plane `x3 = 0`, periodic with unit period in both directions.
    FlatSheet,
    /// Longitude/latitude patch of the unit sphere; the poles `s2 ∈ {0, 1}`
    /// are excluded.
    UnitSpherePatch,
}

/// Position, tangent frame and unit normal at one chart point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChartPoint {
    pub position: Vec3,
    pub tangents: [Vec3; 2],
    pub normal: Vec3,
}

/// Shape operator and curvature scalars at one chart point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeData {
    pub weingarten: Mat3,
    pub kappa1: f64,
    pub kappa2: f64,
    pub mean_curvature: f64,
    pub gauss_curvature: f64,
}

/// Everything the discretizations need to know about the surface at a node.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceSample {
    pub position: Vec3,
    pub tangents: [Vec3; 2],
    pub normal: Vec3,
    /// Chart derivatives of the normal, `∂_{s_i} ν`.
    pub normal_derivatives: [Vec3; 2],
    pub metric: Matrix2<f64>,
    pub metric_inv: Matrix2<f64>,
    pub sqrt_det_metric: f64,
    pub weingarten: Mat3,
    pub projection: Mat3,
    pub mean_curvature: f64,
    pub gauss_curvature: f64,
    pub grad_mean_curvature: Vec3,
    pub grad_gauss_curvature: Vec3,
}

impl SurfaceSample {
    /// Tangential gradient of a function given its chart derivatives:
    /// `grad_Γ f = θ^{ij} ∂_j f ∂_i ψ`.
    pub fn tangential_gradient(&self, chart_derivative: [f64; 2]) -> Vec3 {
        let c = self.metric_inv * nalgebra::Vector2::new(chart_derivative[0], chart_derivative[1]);
        self.tangents[0] * c[0] + self.tangents[1] * c[1]
    }

    /// Chart components `∂_{s_i}ψ · X` of an ambient vector.
    pub fn chart_components(&self, v: &Vec3) -> [f64; 2] {
        [self.tangents[0].dot(v), self.tangents[1].dot(v)]
    }
}

impl SurfaceChart {
    pub fn torus(major: f64, minor: f64) -> Result<Self> {
        if !(major.is_finite() && minor.is_finite()) || !(major > minor && minor > 0.0) {
            return Err(Error::Construction(format!("torus requires R > a > 0, got R = {major}, a = {minor}")));
        }
        Ok(SurfaceChart::Torus { major, minor })
    }

    /// Radius of the tubular neighbourhood in which offsets `r` are valid.
    pub fn tubular_radius(&self) -> f64 {
        match *self {
            SurfaceChart::Torus { minor, .. } => 0.5 * minor,
            SurfaceChart::FlatSheet => UNBOUNDED_RADIUS,
            SurfaceChart::UnitSpherePatch => 0.5,
        }
    }

    /// Only doubly periodic charts can carry the grid solvers.
    pub fn is_periodic(&self) -> bool {
        !matches!(self, SurfaceChart::UnitSpherePatch)
    }

    pub fn name(&self) -> &'static str {
        match self {
            SurfaceChart::Torus { .. } => "torus",
            SurfaceChart::FlatSheet => "flat_sheet",
            SurfaceChart::UnitSpherePatch => "unit_sphere_patch",
        }
    }

    fn check_domain(&self, s: [f64; 2]) -> Result<()> {
        if !(s[0].is_finite() && s[1].is_finite()) {
            return Err(Error::Domain(format!("non-finite chart point {s:?}")));
        }
        if let SurfaceChart::UnitSpherePatch = self {
            if s[1] <= 0.0 || s[1] >= 1.0 {
                return Err(Error::Domain(format!("sphere patch is singular at the poles (s2 = {})", s[1])));
            }
        }
        Ok(())
    }

    /// Returns `(ψ, ∂_1ψ, ∂_2ψ, ν, ∂_1ν, ∂_2ν)`.
    fn frame(&self, s: [f64; 2]) -> (Vec3, [Vec3; 2], Vec3, [Vec3; 2]) {
        match *self {
            SurfaceChart::Torus { major, minor } => {
                let (st, ct) = (TAU * s[0]).sin_cos();
                let (sp, cp) = (TAU * s[1]).sin_cos();
                let rho = major + minor * cp;
                let position = Vec3::new(rho * ct, rho * st, minor * sp);
                let e_theta = Vec3::new(-st, ct, 0.0);
                let e_phi = Vec3::new(-sp * ct, -sp * st, cp);
                let normal = Vec3::new(cp * ct, cp * st, sp);
                (position, [e_theta * (TAU * rho), e_phi * (TAU * minor)], normal, [e_theta * (TAU * cp), e_phi * TAU])
            }
            SurfaceChart::FlatSheet => {
                (Vec3::new(s[0], s[1], 0.0), [Vec3::x(), Vec3::y()], Vec3::z(), [Vec3::zeros(), Vec3::zeros()])
            }
            SurfaceChart::UnitSpherePatch => {
                let (sl, cl) = (TAU * s[0]).sin_cos();
                let (sb, cb) = (PI * (s[1] - 0.5)).sin_cos();
                let position = Vec3::new(cb * cl, cb * sl, sb);
                let d1 = Vec3::new(-sl, cl, 0.0) * (TAU * cb);
                let d2 = Vec3::new(-sb * cl, -sb * sl, cb) * PI;
                (position, [d1, d2], position, [d1, d2])
            }
        }
    }

    /// Chart derivatives of `(H, K)`.
    fn curvature_chart_derivatives(&self, s: [f64; 2]) -> ([f64; 2], [f64; 2]) {
        match *self {
            SurfaceChart::Torus { major, minor } => {
                let (sp, cp) = (TAU * s[1]).sin_cos();
                let rho = major + minor * cp;
                let dh = TAU * major * sp / (rho * rho);
                ([0.0, dh], [0.0, -dh / minor])
            }
            SurfaceChart::FlatSheet | SurfaceChart::UnitSpherePatch => ([0.0; 2], [0.0; 2]),
        }
    }

    pub fn chart_eval(&self, s: [f64; 2]) -> Result<ChartPoint> {
        self.check_domain(s)?;
        let (position, tangents, normal, _) = self.frame(s);
        Ok(ChartPoint { position, tangents, normal })
    }

    pub fn sample(&self, s: [f64; 2]) -> Result<SurfaceSample> {
        self.check_domain(s)?;
        let (position, tangents, normal, normal_derivatives) = self.frame(s);
        let metric = Matrix2::new(
            tangents[0].dot(&tangents[0]),
            tangents[0].dot(&tangents[1]),
            tangents[1].dot(&tangents[0]),
            tangents[1].dot(&tangents[1]),
        );
        let metric_inv = metric.try_inverse().ok_or_else(|| Error::Domain(format!("degenerate metric at {s:?}")))?;
        let sqrt_det_metric = metric.determinant().sqrt();
        let weingarten = weingarten_from_frame(&tangents, &normal_derivatives, &metric_inv);
        let projection = Mat3::identity() - normal * normal.transpose();
        let (mean_curvature, gauss_curvature) = mean_and_gauss(&tangents, &normal_derivatives, &metric_inv);
        let (dh, dk) = self.curvature_chart_derivatives(s);
        let mut sample = SurfaceSample {
            position,
            tangents,
            normal,
            normal_derivatives,
            metric,
            metric_inv,
            sqrt_det_metric,
            weingarten,
            projection,
            mean_curvature,
            gauss_curvature,
            grad_mean_curvature: Vec3::zeros(),
            grad_gauss_curvature: Vec3::zeros(),
        };
        sample.grad_mean_curvature = sample.tangential_gradient(dh);
        sample.grad_gauss_curvature = sample.tangential_gradient(dk);
        Ok(sample)
    }

    pub fn shape_data(&self, s: [f64; 2]) -> Result<ShapeData> {
        let sample = self.sample(s)?;
        let h = sample.mean_curvature;
        let k = sample.gauss_curvature;
        let disc = (0.25 * h * h - k).max(0.0).sqrt();
        Ok(ShapeData {
            weingarten: sample.weingarten,
            kappa1: 0.5 * h - disc,
            kappa2: 0.5 * h + disc,
            mean_curvature: h,
            gauss_curvature: k,
        })
    }

    /// `J(y, r) = 1 - r H(y) + r² K(y)`, valid for `|r| <= δ`.
    pub fn jacobian_j(&self, s: [f64; 2], r: f64) -> Result<f64> {
        if !(r.abs() <= self.tubular_radius()) {
            return Err(Error::GeometryValidity(format!(
                "offset r = {r} exceeds tubular radius {}",
                self.tubular_radius()
            )));
        }
        let shape = self.shape_data(s)?;
        Ok(offset_jacobian(shape.mean_curvature, shape.gauss_curvature, r))
    }
}

#[inline]
pub fn offset_jacobian(mean_curvature: f64, gauss_curvature: f64, r: f64) -> f64 {
    1.0 - r * mean_curvature + r * r * gauss_curvature
}

/// `W = -θ^{ij} ∂_i ν ⊗ ∂_j ψ`, symmetrized to remove round-off asymmetry.
pub fn weingarten_from_frame(tangents: &[Vec3; 2], normal_derivatives: &[Vec3; 2], metric_inv: &Matrix2<f64>) -> Mat3 {
    let mut w = Mat3::zeros();
    for i in 0..2 {
        for j in 0..2 {
            w -= normal_derivatives[i] * tangents[j].transpose() * metric_inv[(i, j)];
        }
    }
    0.5 * (w + w.transpose())
}

fn mean_and_gauss(tangents: &[Vec3; 2], normal_derivatives: &[Vec3; 2], metric_inv: &Matrix2<f64>) -> (f64, f64) {
    // b_ij = ∂_iψ · W ∂_jψ = -∂_iψ · ∂_jν; the shape operator in the chart
    // basis is θ^{-1} b.
    let b = Matrix2::new(
        -tangents[0].dot(&normal_derivatives[0]),
        -tangents[0].dot(&normal_derivatives[1]),
        -tangents[1].dot(&normal_derivatives[0]),
        -tangents[1].dot(&normal_derivatives[1]),
    );
    let s = metric_inv * b;
    (s.trace(), s.determinant())
}

/// Inner and outer offset profiles `g0 < g1` of the thin shell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThicknessProfile {
    Constant {
        g0: f64,
        g1: f64,
    },
    /// `g0 = 0`, `g1 = 1 + amplitude·cos(2π·frequency·s1)`.
    Sinusoidal {
        amplitude: f64,
        frequency: u32,
    },
}

/// Profile values and derivatives at one chart point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThicknessValues {
    pub g0: f64,
    pub g1: f64,
    pub g: f64,
    pub chart_grad_g0: [f64; 2],
    pub chart_grad_g1: [f64; 2],
    pub grad_g0: Vec3,
    pub grad_g1: Vec3,
}

impl ThicknessProfile {
    pub fn constant(g0: f64, g1: f64) -> Result<Self> {
        if !(g0.is_finite() && g1.is_finite()) || g1 - g0 <= 0.0 {
            return Err(Error::Construction(format!(
                "thickness g = g1 - g0 must be positive, got g0 = {g0}, g1 = {g1}"
            )));
        }
        Ok(ThicknessProfile::Constant { g0, g1 })
    }

    pub fn sinusoidal(amplitude: f64, frequency: u32) -> Result<Self> {
        if !amplitude.is_finite() || amplitude.abs() >= 1.0 {
            return Err(Error::Construction(format!("sinusoidal thickness needs |amplitude| < 1, got {amplitude}")));
        }
        Ok(ThicknessProfile::Sinusoidal { amplitude, frequency })
    }

    /// Constant `c` with `1/c <= g <= c` everywhere.
    pub fn bound_constant(&self) -> f64 {
        match *self {
            ThicknessProfile::Constant { g0, g1 } => {
                let g = g1 - g0;
                g.max(1.0 / g)
            }
            ThicknessProfile::Sinusoidal { amplitude, .. } => {
                let a = amplitude.abs();
                (1.0 + a).max(1.0 / (1.0 - a))
            }
        }
    }

    /// `max(|g0|, |g1|)` over the surface.
    pub fn max_abs_offset(&self) -> f64 {
        match *self {
            ThicknessProfile::Constant { g0, g1 } => g0.abs().max(g1.abs()),
            ThicknessProfile::Sinusoidal { amplitude, .. } => 1.0 + amplitude.abs(),
        }
    }

    /// Values and chart derivatives `(g0, g1, ∂g0, ∂g1)`.
    pub fn chart_values(&self, s: [f64; 2]) -> (f64, f64, [f64; 2], [f64; 2]) {
        match *self {
            ThicknessProfile::Constant { g0, g1 } => (g0, g1, [0.0; 2], [0.0; 2]),
            ThicknessProfile::Sinusoidal { amplitude, frequency } => {
                let omega = TAU * f64::from(frequency);
                let (sn, cs) = (omega * s[0]).sin_cos();
                (0.0, 1.0 + amplitude * cs, [0.0; 2], [-amplitude * omega * sn, 0.0])
            }
        }
    }

    pub fn eval(&self, chart: &SurfaceChart, s: [f64; 2]) -> Result<ThicknessValues> {
        let sample = chart.sample(s)?;
        Ok(self.eval_on(&sample, s))
    }

    pub fn eval_on(&self, sample: &SurfaceSample, s: [f64; 2]) -> ThicknessValues {
        let (g0, g1, d0, d1) = self.chart_values(s);
        ThicknessValues {
            g0,
            g1,
            g: g1 - g0,
            chart_grad_g0: d0,
            chart_grad_g1: d1,
            grad_g0: sample.tangential_gradient(d0),
            grad_g1: sample.tangential_gradient(d1),
        }
    }

    /// Checks `1/c <= g <= c` on an `n × n` sample grid.
    pub fn check_bounds(&self, n: usize) -> Result<()> {
        let c = self.bound_constant();
        for i in 0..n {
            for j in 0..n {
                let s = [i as f64 / n as f64, j as f64 / n as f64];
                let (g0, g1, _, _) = self.chart_values(s);
                let g = g1 - g0;
                if !(g >= 1.0 / c - 1e-14 && g <= c + 1e-14) {
                    return Err(Error::Construction(format!("thickness g = {g} violates bound c = {c} at {s:?}")));
                }
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self {
            ThicknessProfile::Constant { .. } => "constant",
            ThicknessProfile::Sinusoidal { .. } => "sinusoidal",
        }
    }
}

/// Convenience wrapper matching the free-function form used by the bindings.
pub fn thickness_eval(profile: &ThicknessProfile, chart: &SurfaceChart, s: [f64; 2]) -> Result<ThicknessValues> {
    profile.eval(chart, s)
}
