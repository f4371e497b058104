//! Divergence-form finite-difference operators on layered periodic grids, the
//! FFT-based preconditioner and the preconditioned conjugate-gradient solver
//! shared by the bulk and surface solvers.
//!
//! A grid has `n1 × n2` periodic nodes per layer and `nl` layers. With `nl = 1`
//! it is a surface grid; with `nl = n3 + 1` it is the vertex-centred grid of the
//! reference box, whose top and bottom layers carry half quadrature weight.
//!
//! The operator is defined through its quadratic form
//!
//! ```text
//! B(U, U) = Σ_edges ω a_dd (D_d U)² + Σ_cells ω Σ_{d≠e} a_de (G_d U)(G_e U)
//! ```
//!
//! where `D_d` are edge differences, `G_d` cell-centred averaged differences and
//! the coefficients are face (cell) averages of nodal values. The stiffness
//! `K = ∂(B/2)/∂U` is symmetric and the operator is `L U = -K U / mass`, so
//! `Σ mass · L U = 0` holds up to round-off with no boundary flux.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Shape of a layered periodic grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridShape {
    pub n1: usize,
    pub n2: usize,
    pub nl: usize,
}

impl GridShape {
    #[inline]
    pub fn len(&self) -> usize {
        self.n1 * self.n2 * self.nl
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn columns(&self) -> usize {
        self.n1 * self.n2
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.n2 + j) * self.n1 + i
    }
}

/// Symmetric coefficient matrix stored as `[a11, a22, a33, a12, a13, a23]`.
pub type SymCoef = [f64; 6];

#[derive(Debug, Clone)]
pub struct DivStencil {
    shape: GridShape,
    h: [f64; 3],
    layer_weight: Vec<f64>,
    density: Vec<f64>,
    mass: Vec<f64>,
    ex: Vec<f64>,
    ey: Vec<f64>,
    ez: Vec<f64>,
    cross: Option<Vec<[f64; 3]>>,
    /// Mean of `a_dd / density` per direction.
    mean_diffusivity: [f64; 3],
}

impl DivStencil {
    /// Builds the operator `(1/density) div(A grad ·)`.
    ///
    /// `h[2]` is ignored for single-layer grids. Cross coefficients below
    /// `1e-14` of the largest diagonal entry are treated as zero.
    pub fn new(shape: GridShape, h: [f64; 3], density: Vec<f64>, coef: &[SymCoef]) -> Self {
        let n = shape.len();
        assert_eq!(density.len(), n);
        assert_eq!(coef.len(), n);
        let three_d = shape.nl > 1;
        let cell_vol = if three_d { h[0] * h[1] * h[2] } else { h[0] * h[1] };
        let layer_weight: Vec<f64> = (0..shape.nl)
            .map(|k| if three_d && (k == 0 || k == shape.nl - 1) { 0.5 * cell_vol } else { cell_vol })
            .collect();
        let mass: Vec<f64> = (0..n).map(|p| layer_weight[p / shape.columns()] * density[p]).collect();

        let (n1, n2) = (shape.n1, shape.n2);
        let mut ex = vec![0.0; n];
        let mut ey = vec![0.0; n];
        let mut ez = vec![0.0; if three_d { n } else { 0 }];
        for k in 0..shape.nl {
            let w = layer_weight[k];
            for j in 0..n2 {
                for i in 0..n1 {
                    let p = shape.idx(i, j, k);
                    let px = shape.idx((i + 1) % n1, j, k);
                    let py = shape.idx(i, (j + 1) % n2, k);
                    ex[p] = w * 0.5 * (coef[p][0] + coef[px][0]) / (h[0] * h[0]);
                    ey[p] = w * 0.5 * (coef[p][1] + coef[py][1]) / (h[1] * h[1]);
                    if three_d && k + 1 < shape.nl {
                        let pz = shape.idx(i, j, k + 1);
                        ez[p] = cell_vol * 0.5 * (coef[p][2] + coef[pz][2]) / (h[2] * h[2]);
                    }
                }
            }
        }

        let max_diag = coef
            .iter()
            .map(|c| c[0].abs().max(c[1].abs()).max(if three_d { c[2].abs() } else { 0.0 }))
            .fold(0.0, f64::max);
        let max_cross = coef
            .iter()
            .map(|c| if three_d { c[3].abs().max(c[4].abs()).max(c[5].abs()) } else { c[3].abs() })
            .fold(0.0, f64::max);
        let cross = if max_cross > 1e-14 * max_diag {
            let cells = if three_d { shape.columns() * (shape.nl - 1) } else { shape.columns() };
            let mut out = vec![[0.0; 3]; cells];
            let corner_layers = if three_d { 2 } else { 1 };
            let ncorner = (4 * corner_layers) as f64;
            for (c, slot) in out.iter_mut().enumerate() {
                let k = c / shape.columns();
                let j = (c / n1) % n2;
                let i = c % n1;
                let mut acc = [0.0; 3];
                for dk in 0..corner_layers {
                    for dj in 0..2 {
                        for di in 0..2 {
                            let p = shape.idx((i + di) % n1, (j + dj) % n2, k + dk);
                            acc[0] += coef[p][3];
                            acc[1] += coef[p][4];
                            acc[2] += coef[p][5];
                        }
                    }
                }
                *slot = [
                    cell_vol * acc[0] / ncorner / (h[0] * h[1]),
                    if three_d { cell_vol * acc[1] / ncorner / (h[0] * h[2]) } else { 0.0 },
                    if three_d { cell_vol * acc[2] / ncorner / (h[1] * h[2]) } else { 0.0 },
                ];
            }
            Some(out)
        } else {
            None
        };

        let mut mean_diffusivity = [0.0; 3];
        for (c, rho) in coef.iter().zip(&density) {
            for d in 0..3 {
                mean_diffusivity[d] += c[d] / rho;
            }
        }
        for m in &mut mean_diffusivity {
            *m /= n as f64;
        }
        if !three_d {
            mean_diffusivity[2] = 0.0;
        }

        Self { shape, h, layer_weight, density, mass, ex, ey, ez, cross, mean_diffusivity }
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.h
    }

    /// Quadrature weight of each layer (node volume without the density).
    pub fn layer_weights(&self) -> &[f64] {
        &self.layer_weight
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    /// Lumped mass `layer weight × density` per node.
    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn has_cross_terms(&self) -> bool {
        self.cross.is_some()
    }

    pub fn mean_diffusivity(&self) -> [f64; 3] {
        self.mean_diffusivity
    }

    /// `out = K u`.
    pub fn apply_stiffness(&self, u: &[f64], out: &mut [f64]) {
        let s = self.shape;
        let (n1, n2) = (s.n1, s.n2);
        out.iter_mut().for_each(|o| *o = 0.0);
        for k in 0..s.nl {
            for j in 0..n2 {
                let jp = (j + 1) % n2;
                let row = s.idx(0, j, k);
                let row_y = s.idx(0, jp, k);
                for i in 0..n1 {
                    let p = row + i;
                    let px = row + if i + 1 == n1 { 0 } else { i + 1 };
                    let fx = self.ex[p] * (u[px] - u[p]);
                    out[p] -= fx;
                    out[px] += fx;
                    let py = row_y + i;
                    let fy = self.ey[p] * (u[py] - u[p]);
                    out[p] -= fy;
                    out[py] += fy;
                }
            }
        }
        if s.nl > 1 {
            let cols = s.columns();
            for p in 0..cols * (s.nl - 1) {
                let pz = p + cols;
                let fz = self.ez[p] * (u[pz] - u[p]);
                out[p] -= fz;
                out[pz] += fz;
            }
        }
        if let Some(cross) = &self.cross {
            self.apply_cross(cross, u, out);
        }
    }

    fn apply_cross(&self, cross: &[[f64; 3]], u: &[f64], out: &mut [f64]) {
        let s = self.shape;
        let (n1, n2) = (s.n1, s.n2);
        if s.nl > 1 {
            for (c, coef) in cross.iter().enumerate() {
                let k = c / s.columns();
                let j = (c / n1) % n2;
                let i = c % n1;
                let ip = (i + 1) % n1;
                let jp = (j + 1) % n2;
                let p = |a: usize, b: usize, d: usize| s.idx(a, b, k + d);
                let corners = [
                    p(i, j, 0),
                    p(ip, j, 0),
                    p(i, jp, 0),
                    p(ip, jp, 0),
                    p(i, j, 1),
                    p(ip, j, 1),
                    p(i, jp, 1),
                    p(ip, jp, 1),
                ];
                let v: Vec<f64> = corners.iter().map(|&q| u[q]).collect();
                let g1 = 0.25 * ((v[1] - v[0]) + (v[3] - v[2]) + (v[5] - v[4]) + (v[7] - v[6]));
                let g2 = 0.25 * ((v[2] - v[0]) + (v[3] - v[1]) + (v[6] - v[4]) + (v[7] - v[5]));
                let g3 = 0.25 * ((v[4] - v[0]) + (v[5] - v[1]) + (v[6] - v[2]) + (v[7] - v[3]));
                let f1 = 0.25 * (coef[0] * g2 + coef[1] * g3);
                let f2 = 0.25 * (coef[0] * g1 + coef[2] * g3);
                let f3 = 0.25 * (coef[1] * g1 + coef[2] * g2);
                // sign of each corner in G1, G2, G3
                const S1: [f64; 8] = [-1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0];
                const S2: [f64; 8] = [-1.0, -1.0, 1.0, 1.0, -1.0, -1.0, 1.0, 1.0];
                const S3: [f64; 8] = [-1.0, -1.0, -1.0, -1.0, 1.0, 1.0, 1.0, 1.0];
                for (m, &q) in corners.iter().enumerate() {
                    out[q] += S1[m] * f1 + S2[m] * f2 + S3[m] * f3;
                }
            }
        } else {
            for (c, coef) in cross.iter().enumerate() {
                let j = c / n1;
                let i = c % n1;
                let ip = (i + 1) % n1;
                let jp = (j + 1) % n2;
                let corners = [s.idx(i, j, 0), s.idx(ip, j, 0), s.idx(i, jp, 0), s.idx(ip, jp, 0)];
                let v = [u[corners[0]], u[corners[1]], u[corners[2]], u[corners[3]]];
                let g1 = 0.5 * ((v[1] - v[0]) + (v[3] - v[2]));
                let g2 = 0.5 * ((v[2] - v[0]) + (v[3] - v[1]));
                let f1 = 0.5 * coef[0] * g2;
                let f2 = 0.5 * coef[0] * g1;
                const S1: [f64; 4] = [-1.0, 1.0, -1.0, 1.0];
                const S2: [f64; 4] = [-1.0, -1.0, 1.0, 1.0];
                for (m, &q) in corners.iter().enumerate() {
                    out[q] += S1[m] * f1 + S2[m] * f2;
                }
            }
        }
    }

    /// `out = L u = -K u / mass`.
    pub fn apply_operator(&self, u: &[f64], out: &mut [f64]) {
        self.apply_stiffness(u, out);
        for (o, m) in out.iter_mut().zip(&self.mass) {
            *o = -*o / m;
        }
    }

    /// `B(u, v) = <u, K v>`.
    pub fn bilinear(&self, u: &[f64], v: &[f64]) -> f64 {
        let mut kv = vec![0.0; v.len()];
        self.apply_stiffness(v, &mut kv);
        dot(u, &kv)
    }

    /// Mass-weighted sum `Σ mass · u`.
    pub fn integrate(&self, u: &[f64]) -> f64 {
        dot(&self.mass, u)
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// Subtracts the mass-weighted mean.
    pub fn remove_mean(&self, u: &mut [f64]) {
        let m = self.integrate(u) / self.total_mass();
        u.iter_mut().for_each(|x| *x -= m);
    }
}

/// Sequential dot product; the fixed summation order keeps logs reproducible.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Approximate inverse of a function of a constant-coefficient separable
/// model of a [`DivStencil`], applied by FFT in the periodic directions and a
/// cosine transform across the layers.
pub struct SpectralPreconditioner {
    shape: GridShape,
    fwd1: Arc<dyn Fft<f64>>,
    inv1: Arc<dyn Fft<f64>>,
    fwd2: Arc<dyn Fft<f64>>,
    inv2: Arc<dyn Fft<f64>>,
    inv_factor: Vec<f64>,
    cosines: Vec<f64>,
    vnorm: Vec<f64>,
    vweight: Vec<f64>,
    scale_in: Vec<f64>,
    scale_out: Vec<f64>,
}

impl std::fmt::Debug for SpectralPreconditioner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralPreconditioner").field("shape", &self.shape).finish()
    }
}

impl SpectralPreconditioner {
    /// `factor(μ)` is the model operator's eigenvalue as a function of the
    /// eigenvalue `μ <= 0` of the separable model Laplacian; zero factors are
    /// treated as a null space. With `symmetric_scaling` the density variation
    /// is absorbed by a diagonal similarity scaling.
    pub fn new(stencil: &DivStencil, factor: impl Fn(f64) -> f64, symmetric_scaling: bool) -> Self {
        let shape = stencil.shape();
        let (n1, n2, nl) = (shape.n1, shape.n2, shape.nl);
        let mut planner = FftPlanner::new();
        let fwd1 = planner.plan_fft_forward(n1);
        let inv1 = planner.plan_fft_inverse(n1);
        let fwd2 = planner.plan_fft_forward(n2);
        let inv2 = planner.plan_fft_inverse(n2);
        let h = stencil.spacing();
        let a = stencil.mean_diffusivity();
        let lam =
            |k: usize, n: usize, h: f64| 2.0 / (h * h) * (1.0 - (std::f64::consts::TAU * k as f64 / n as f64).cos());
        let mut inv_factor = vec![0.0; shape.len()];
        for m in 0..nl {
            let l3 = if nl > 1 {
                2.0 / (h[2] * h[2]) * (1.0 - (std::f64::consts::PI * m as f64 / (nl - 1) as f64).cos())
            } else {
                0.0
            };
            for k2 in 0..n2 {
                for k1 in 0..n1 {
                    let mu = -(a[0] * lam(k1, n1, h[0]) + a[1] * lam(k2, n2, h[1]) + a[2] * l3);
                    let f = factor(mu);
                    inv_factor[shape.idx(k1, k2, m)] = if f.abs() > 1e-300 { 1.0 / f } else { 0.0 };
                }
            }
        }
        let mut cosines = vec![1.0; nl * nl];
        let mut vnorm = vec![1.0; nl];
        let mut vweight = vec![1.0; nl];
        if nl > 1 {
            let n3 = (nl - 1) as f64;
            for m in 0..nl {
                for k in 0..nl {
                    cosines[m * nl + k] = (std::f64::consts::PI * (m * k) as f64 / n3).cos();
                }
                vnorm[m] = if m == 0 || m == nl - 1 { n3 } else { 0.5 * n3 };
            }
            vweight[0] = 0.5;
            vweight[nl - 1] = 0.5;
        }
        let density = stencil.density();
        let mean_density = density.iter().sum::<f64>() / density.len() as f64;
        let lw = stencil.layer_weights();
        let mut scale_in = vec![0.0; shape.len()];
        let mut scale_out = vec![1.0; shape.len()];
        for p in 0..shape.len() {
            let w = lw[p / shape.columns()];
            if symmetric_scaling {
                scale_in[p] = 1.0 / (w * (mean_density * density[p]).sqrt());
                scale_out[p] = (mean_density / density[p]).sqrt();
            } else {
                scale_in[p] = 1.0 / (w * mean_density);
            }
        }
        Self { shape, fwd1, inv1, fwd2, inv2, inv_factor, cosines, vnorm, vweight, scale_in, scale_out }
    }

    pub fn apply(&self, r: &[f64], out: &mut [f64]) {
        let s = self.shape;
        let (n1, n2, nl) = (s.n1, s.n2, s.nl);
        let cols = s.columns();
        let mut buf: Vec<Complex64> = r.iter().zip(&self.scale_in).map(|(x, c)| Complex64::new(x * c, 0.0)).collect();
        let mut tmp = vec![Complex64::new(0.0, 0.0); cols];
        for k in 0..nl {
            let layer = &mut buf[k * cols..(k + 1) * cols];
            self.fwd1.process(layer);
            transform_columns(layer, &mut tmp, n1, n2, &*self.fwd2);
        }
        if nl > 1 {
            let mut col = vec![Complex64::new(0.0, 0.0); nl];
            let mut coef = vec![Complex64::new(0.0, 0.0); nl];
            for c in 0..cols {
                for k in 0..nl {
                    col[k] = buf[k * cols + c] * self.vweight[k];
                }
                for m in 0..nl {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for k in 0..nl {
                        acc += col[k] * self.cosines[m * nl + k];
                    }
                    coef[m] = acc * (self.inv_factor[m * cols + c] / self.vnorm[m]);
                }
                for k in 0..nl {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for m in 0..nl {
                        acc += coef[m] * self.cosines[m * nl + k];
                    }
                    buf[k * cols + c] = acc;
                }
            }
        } else {
            for (b, f) in buf.iter_mut().zip(&self.inv_factor) {
                *b *= *f;
            }
        }
        let norm = 1.0 / cols as f64;
        for k in 0..nl {
            let layer = &mut buf[k * cols..(k + 1) * cols];
            self.inv1.process(layer);
            transform_columns(layer, &mut tmp, n1, n2, &*self.inv2);
        }
        for ((o, b), c) in out.iter_mut().zip(&buf).zip(&self.scale_out) {
            *o = b.re * norm * c;
        }
    }
}

fn transform_columns(layer: &mut [Complex64], tmp: &mut [Complex64], n1: usize, n2: usize, fft: &dyn Fft<f64>) {
    for j in 0..n2 {
        for i in 0..n1 {
            tmp[i * n2 + j] = layer[j * n1 + i];
        }
    }
    fft.process(tmp);
    for j in 0..n2 {
        for i in 0..n1 {
            layer[j * n1 + i] = tmp[i * n2 + j];
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Preconditioned conjugate gradients for a symmetric positive
/// (semi)definite operator. `x` holds the initial guess on entry.
pub fn pcg(
    apply_a: impl Fn(&[f64], &mut [f64]),
    apply_prec: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<SolveStats> {
    let n = b.len();
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats { iterations: 0, relative_residual: 0.0 });
    }
    let mut r = vec![0.0; n];
    apply_a(x, &mut r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let mut z = vec![0.0; n];
    apply_prec(&r, &mut z);
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut res = dot(&r, &r).sqrt() / bnorm;
    let mut it = 0;
    while res > tol {
        if it >= max_iter || !res.is_finite() {
            return Err(Error::SolverDivergence { iterations: it, residual: res });
        }
        apply_a(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::SolverDivergence { iterations: it, residual: res });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        apply_prec(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        res = dot(&r, &r).sqrt() / bnorm;
        it += 1;
    }
    Ok(SolveStats { iterations: it, relative_residual: res })
}
