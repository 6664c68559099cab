//! Discrete chamber/plate geometry: the chamber grid over the unit
//! square/cube, the flat coupling face at the bottom, the Laplacian and
//! biharmonic stencils, and the quadrature-weighted norms that define every
//! energy functional downstream.
//!
//! Conventions, fixed once here and relied on everywhere:
//!
//! * The chamber is the unit square (reduced mode) or unit cube (full mode)
//!   with `n` nodes per axis, spacing `h = 1/(n-1)`. Nodes are row-major,
//!   last axis fastest.
//! * The coupling face Gamma is the full bottom side (last axis index 0).
//!   The rigid wall Gamma_0 is the rest of the boundary; the bottom
//!   corners/ring belong to Gamma_0, so the chamber field satisfies a
//!   Dirichlet row there while the plate is clamped at the same nodes.
//! * The Neumann coupling `du/dnu = w_t` on Gamma enters the bottom row of
//!   the Laplacian through the ghost value `u_ghost = u_inner + 2 h w_t`.
//! * Plate clamping enters the biharmonic through mirror ghost reflection.
//!   The biharmonic is assembled as `B = D^T diag(omega_Gamma) D / omega_Gamma`
//!   with `D` the ghost-reflected second difference, which makes it
//!   self-adjoint and positive semidefinite in the weighted inner product by
//!   construction and reproduces the classical clamped stencils at interior
//!   nodes.
//! * Quadrature is the tensor trapezoid rule; the discrete `H^1` seminorm is
//!   the face-difference sum that makes `<-L u, u> = |grad u|^2` an exact
//!   identity (summation by parts), so energies computed from stencils and
//!   from norms agree to rounding.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// 2D chamber with a 1D clamped beam along the bottom edge.
    #[serde(rename = "reduced-2d")]
    Reduced2d,
    /// 3D chamber with a 2D clamped plate on the bottom face.
    #[serde(rename = "full-3d")]
    Full3d,
}

/// Real-valued grid function on the chamber nodes.
pub type Field = Vec<f64>;
/// Real-valued grid function on the coupling-face nodes.
pub type BoundaryField = Vec<f64>;

#[derive(Debug, Clone)]
pub struct Geometry {
    pub mode: Mode,
    /// Chamber grid dimensions, x-major ([nx, ny] or [nx, ny, nz]).
    pub dims: Vec<usize>,
    /// Grid spacing per axis.
    pub h: Vec<f64>,
    /// Trapezoid weights per axis.
    axis_weights: Vec<Vec<f64>>,
    /// Gamma grid dimensions ([nx] or [nx, ny]).
    pub gamma_dims: Vec<usize>,
    /// Tensor trapezoid weights on Gamma nodes.
    gamma_weights: Vec<f64>,
    /// Tensor trapezoid weights on chamber nodes.
    omega_weights: Vec<f64>,
}

fn trapezoid_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; n];
    w[0] = 0.5 * h;
    w[n - 1] = 0.5 * h;
    w
}

/// Build the chamber/plate geometry over the unit square or cube.
pub fn build_geometry(mode: Mode, dims: &[usize]) -> Result<Geometry> {
    let expected = match mode {
        Mode::Reduced2d => 2,
        Mode::Full3d => 3,
    };
    if dims.len() != expected {
        return Err(Error::Validation(format!(
            "geometry mode expects {expected} grid dimensions, got {:?}",
            dims
        )));
    }
    for &n in dims {
        if n < 8 {
            return Err(Error::Validation(format!(
                "grid sizes must be >= 8 per axis, got {:?}",
                dims
            )));
        }
    }
    let h: Vec<f64> = dims.iter().map(|&n| 1.0 / (n - 1) as f64).collect();
    let axis_weights: Vec<Vec<f64>> = dims
        .iter()
        .zip(&h)
        .map(|(&n, &ha)| trapezoid_weights(n, ha))
        .collect();

    let gamma_dims: Vec<usize> = dims[..dims.len() - 1].to_vec();
    let gamma_axis_weights: Vec<Vec<f64>> = gamma_dims
        .iter()
        .zip(&h)
        .map(|(&n, &ha)| trapezoid_weights(n, ha))
        .collect();

    let omega_len: usize = dims.iter().product();
    let mut omega_weights = vec![0.0; omega_len];
    match mode {
        Mode::Reduced2d => {
            let (nx, ny) = (dims[0], dims[1]);
            for i in 0..nx {
                for j in 0..ny {
                    omega_weights[i * ny + j] = axis_weights[0][i] * axis_weights[1][j];
                }
            }
        }
        Mode::Full3d => {
            let (nx, ny, nz) = (dims[0], dims[1], dims[2]);
            for i in 0..nx {
                for j in 0..ny {
                    for k in 0..nz {
                        omega_weights[(i * ny + j) * nz + k] =
                            axis_weights[0][i] * axis_weights[1][j] * axis_weights[2][k];
                    }
                }
            }
        }
    }

    let gamma_len: usize = gamma_dims.iter().product();
    let mut gamma_weights = vec![0.0; gamma_len];
    match mode {
        Mode::Reduced2d => {
            gamma_weights.copy_from_slice(&gamma_axis_weights[0]);
        }
        Mode::Full3d => {
            let (nx, ny) = (gamma_dims[0], gamma_dims[1]);
            for i in 0..nx {
                for j in 0..ny {
                    gamma_weights[i * ny + j] = gamma_axis_weights[0][i] * gamma_axis_weights[1][j];
                }
            }
        }
    }

    Ok(Geometry {
        mode,
        dims: dims.to_vec(),
        h,
        axis_weights,
        gamma_dims,
        gamma_weights,
        omega_weights,
    })
}

impl Geometry {
    pub fn omega_len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn gamma_len(&self) -> usize {
        self.gamma_dims.iter().product()
    }

    pub fn zero_field(&self) -> Field {
        vec![0.0; self.omega_len()]
    }

    pub fn zero_boundary_field(&self) -> BoundaryField {
        vec![0.0; self.gamma_len()]
    }

    pub fn omega_weights(&self) -> &[f64] {
        &self.omega_weights
    }

    pub fn gamma_weights(&self) -> &[f64] {
        &self.gamma_weights
    }

    /// |Omega| under the discrete quadrature (1 for the unit domain).
    pub fn volume(&self) -> f64 {
        self.omega_weights.iter().sum()
    }

    /// |Gamma| under the discrete quadrature.
    pub fn gamma_area(&self) -> f64 {
        self.gamma_weights.iter().sum()
    }

    /// Smallest chamber spacing (CFL bookkeeping).
    pub fn h_omega(&self) -> f64 {
        self.h.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Smallest plate spacing.
    pub fn h_gamma(&self) -> f64 {
        self.h[..self.h.len() - 1]
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    /// Spacing along the coupling (last) axis, used by the ghost flux row.
    pub fn h_normal(&self) -> f64 {
        *self.h.last().unwrap()
    }

    pub fn check_field(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.omega_len() {
            return Err(Error::ShapeMismatch(format!(
                "chamber field has {} entries, geometry needs {}",
                u.len(),
                self.omega_len()
            )));
        }
        Ok(())
    }

    pub fn check_boundary_field(&self, w: &[f64]) -> Result<()> {
        if w.len() != self.gamma_len() {
            return Err(Error::ShapeMismatch(format!(
                "plate field has {} entries, geometry needs {}",
                w.len(),
                self.gamma_len()
            )));
        }
        Ok(())
    }

    /// True for chamber nodes on the rigid wall Gamma_0 (Dirichlet rows).
    /// The bottom ring shared with the clamped plate boundary counts as rigid.
    pub fn is_gamma0(&self, idx: usize) -> bool {
        match self.mode {
            Mode::Reduced2d => {
                let ny = self.dims[1];
                let (i, j) = (idx / ny, idx % ny);
                i == 0 || i == self.dims[0] - 1 || j == ny - 1
            }
            Mode::Full3d => {
                let (ny, nz) = (self.dims[1], self.dims[2]);
                let k = idx % nz;
                let j = (idx / nz) % ny;
                let i = idx / (ny * nz);
                i == 0 || i == self.dims[0] - 1 || j == 0 || j == ny - 1 || k == nz - 1
            }
        }
    }

    /// True for plate nodes on the clamped boundary of Gamma.
    pub fn is_gamma_boundary(&self, gidx: usize) -> bool {
        match self.mode {
            Mode::Reduced2d => gidx == 0 || gidx == self.gamma_dims[0] - 1,
            Mode::Full3d => {
                let ny = self.gamma_dims[1];
                let (i, j) = (gidx / ny, gidx % ny);
                i == 0 || i == self.gamma_dims[0] - 1 || j == 0 || j == ny - 1
            }
        }
    }

    /// Chamber index of a Gamma node (bottom face, last axis = 0).
    pub fn gamma_to_omega(&self, gidx: usize) -> usize {
        match self.mode {
            Mode::Reduced2d => gidx * self.dims[1],
            Mode::Full3d => gidx * self.dims[2],
        }
    }

    /// Zero out the rigid-wall rows of a chamber field.
    pub fn enforce_dirichlet(&self, u: &mut [f64]) {
        for idx in 0..u.len() {
            if self.is_gamma0(idx) {
                u[idx] = 0.0;
            }
        }
    }

    /// Zero out the clamped ring of a plate field.
    pub fn enforce_clamped(&self, w: &mut [f64]) {
        for g in 0..w.len() {
            if self.is_gamma_boundary(g) {
                w[g] = 0.0;
            }
        }
    }

    /// Evaluate a function of the physical coordinates on every chamber node.
    pub fn eval_on_omega(&self, f: impl Fn(&[f64]) -> f64) -> Field {
        let mut out = self.zero_field();
        match self.mode {
            Mode::Reduced2d => {
                let (nx, ny) = (self.dims[0], self.dims[1]);
                for i in 0..nx {
                    for j in 0..ny {
                        out[i * ny + j] = f(&[i as f64 * self.h[0], j as f64 * self.h[1]]);
                    }
                }
            }
            Mode::Full3d => {
                let (nx, ny, nz) = (self.dims[0], self.dims[1], self.dims[2]);
                for i in 0..nx {
                    for j in 0..ny {
                        for k in 0..nz {
                            out[(i * ny + j) * nz + k] = f(&[
                                i as f64 * self.h[0],
                                j as f64 * self.h[1],
                                k as f64 * self.h[2],
                            ]);
                        }
                    }
                }
            }
        }
        out
    }

    /// Evaluate a function of the in-face coordinates on every Gamma node.
    pub fn eval_on_gamma(&self, f: impl Fn(&[f64]) -> f64) -> BoundaryField {
        let mut out = self.zero_boundary_field();
        match self.mode {
            Mode::Reduced2d => {
                for i in 0..self.gamma_dims[0] {
                    out[i] = f(&[i as f64 * self.h[0]]);
                }
            }
            Mode::Full3d => {
                let (nx, ny) = (self.gamma_dims[0], self.gamma_dims[1]);
                for i in 0..nx {
                    for j in 0..ny {
                        out[i * ny + j] = f(&[i as f64 * self.h[0], j as f64 * self.h[1]]);
                    }
                }
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Stencils
// ---------------------------------------------------------------------------

/// Apply the chamber Laplacian with the coupling flux `w_t` on Gamma.
///
/// Interior rows are the centered second difference; the bottom rows fold in
/// the ghost value `u_ghost = u_inner + 2 h w_t`; rigid-wall rows are zero.
pub fn apply_laplacian(u: &[f64], w_t: &[f64], geom: &Geometry) -> Result<Field> {
    let mut out = geom.zero_field();
    apply_laplacian_into(u, w_t, geom, &mut out)?;
    Ok(out)
}

/// Allocation-free form of `apply_laplacian` for the integrator hot loop.
pub fn apply_laplacian_into(
    u: &[f64],
    w_t: &[f64],
    geom: &Geometry,
    out: &mut [f64],
) -> Result<()> {
    geom.check_field(u)?;
    geom.check_boundary_field(w_t)?;
    geom.check_field(out)?;
    out.iter_mut().for_each(|x| *x = 0.0);
    match geom.mode {
        Mode::Reduced2d => {
            let (nx, ny) = (geom.dims[0], geom.dims[1]);
            let ihx2 = 1.0 / (geom.h[0] * geom.h[0]);
            let ihy2 = 1.0 / (geom.h[1] * geom.h[1]);
            let hy = geom.h[1];
            for i in 1..nx - 1 {
                let row = i * ny;
                // Coupled bottom row (j = 0).
                out[row] = (u[row - ny] - 2.0 * u[row] + u[row + ny]) * ihx2
                    + (2.0 * u[row + 1] - 2.0 * u[row] + 2.0 * hy * w_t[i]) * ihy2;
                for j in 1..ny - 1 {
                    let c = row + j;
                    out[c] = (u[c - ny] - 2.0 * u[c] + u[c + ny]) * ihx2
                        + (u[c - 1] - 2.0 * u[c] + u[c + 1]) * ihy2;
                }
            }
        }
        Mode::Full3d => {
            let (nx, ny, nz) = (geom.dims[0], geom.dims[1], geom.dims[2]);
            let ihx2 = 1.0 / (geom.h[0] * geom.h[0]);
            let ihy2 = 1.0 / (geom.h[1] * geom.h[1]);
            let ihz2 = 1.0 / (geom.h[2] * geom.h[2]);
            let hz = geom.h[2];
            for i in 1..nx - 1 {
                for j in 1..ny - 1 {
                    let col = (i * ny + j) * nz;
                    let g = i * ny + j;
                    out[col] = (u[col - ny * nz] - 2.0 * u[col] + u[col + ny * nz]) * ihx2
                        + (u[col - nz] - 2.0 * u[col] + u[col + nz]) * ihy2
                        + (2.0 * u[col + 1] - 2.0 * u[col] + 2.0 * hz * w_t[g]) * ihz2;
                    for k in 1..nz - 1 {
                        let c = col + k;
                        out[c] = (u[c - ny * nz] - 2.0 * u[c] + u[c + ny * nz]) * ihx2
                            + (u[c - nz] - 2.0 * u[c] + u[c + nz]) * ihy2
                            + (u[c - 1] - 2.0 * u[c] + u[c + 1]) * ihz2;
                    }
                }
            }
        }
    }
    Ok(())
}

/// Ghost-reflected second difference on the plate grid, evaluated at every
/// Gamma node (boundary rows included; they see the mirror ghost).
fn gamma_second_diff(w: &[f64], geom: &Geometry) -> Vec<f64> {
    let mut out = geom.zero_boundary_field();
    match geom.mode {
        Mode::Reduced2d => {
            let n = geom.gamma_dims[0];
            let ih2 = 1.0 / (geom.h[0] * geom.h[0]);
            for i in 0..n {
                let im = if i == 0 { 1 } else { i - 1 };
                let ip = if i == n - 1 { n - 2 } else { i + 1 };
                out[i] = (w[im] - 2.0 * w[i] + w[ip]) * ih2;
            }
        }
        Mode::Full3d => {
            let (nx, ny) = (geom.gamma_dims[0], geom.gamma_dims[1]);
            let ihx2 = 1.0 / (geom.h[0] * geom.h[0]);
            let ihy2 = 1.0 / (geom.h[1] * geom.h[1]);
            for i in 0..nx {
                let im = if i == 0 { 1 } else { i - 1 };
                let ip = if i == nx - 1 { nx - 2 } else { i + 1 };
                for j in 0..ny {
                    let jm = if j == 0 { 1 } else { j - 1 };
                    let jp = if j == ny - 1 { ny - 2 } else { j + 1 };
                    out[i * ny + j] = (w[im * ny + j] - 2.0 * w[i * ny + j] + w[ip * ny + j])
                        * ihx2
                        + (w[i * ny + jm] - 2.0 * w[i * ny + j] + w[i * ny + jp]) * ihy2;
                }
            }
        }
    }
    out
}

/// Adjoint of `gamma_second_diff` (plain transpose, scatter form).
fn gamma_second_diff_adjoint(s: &[f64], geom: &Geometry) -> Vec<f64> {
    let mut out = geom.zero_boundary_field();
    match geom.mode {
        Mode::Reduced2d => {
            let n = geom.gamma_dims[0];
            let ih2 = 1.0 / (geom.h[0] * geom.h[0]);
            for i in 0..n {
                let im = if i == 0 { 1 } else { i - 1 };
                let ip = if i == n - 1 { n - 2 } else { i + 1 };
                out[im] += s[i] * ih2;
                out[i] -= 2.0 * s[i] * ih2;
                out[ip] += s[i] * ih2;
            }
        }
        Mode::Full3d => {
            let (nx, ny) = (geom.gamma_dims[0], geom.gamma_dims[1]);
            let ihx2 = 1.0 / (geom.h[0] * geom.h[0]);
            let ihy2 = 1.0 / (geom.h[1] * geom.h[1]);
            for i in 0..nx {
                let im = if i == 0 { 1 } else { i - 1 };
                let ip = if i == nx - 1 { nx - 2 } else { i + 1 };
                for j in 0..ny {
                    let jm = if j == 0 { 1 } else { j - 1 };
                    let jp = if j == ny - 1 { ny - 2 } else { j + 1 };
                    let c = i * ny + j;
                    out[im * ny + j] += s[c] * ihx2;
                    out[c] -= 2.0 * s[c] * ihx2;
                    out[ip * ny + j] += s[c] * ihx2;
                    out[i * ny + jm] += s[c] * ihy2;
                    out[c] -= 2.0 * s[c] * ihy2;
                    out[i * ny + jp] += s[c] * ihy2;
                }
            }
        }
    }
    out
}

/// Apply the clamped biharmonic operator to a plate field.
///
/// Assembled as `D^T diag(omega) D` pulled back to the weighted inner
/// product, so `<B w, w>_Gamma` equals the squared discrete `|Delta w|_2`
/// norm exactly and `B` is self-adjoint positive semidefinite. Interior rows
/// reduce to the classical 5-point (beam) / 13-point (plate) stencils.
pub fn apply_biharmonic(w: &[f64], geom: &Geometry) -> Result<BoundaryField> {
    geom.check_boundary_field(w)?;
    let t = gamma_second_diff(w, geom);
    let weights = geom.gamma_weights();
    let s: Vec<f64> = t.iter().zip(weights).map(|(ti, wi)| ti * wi).collect();
    let mut out = gamma_second_diff_adjoint(&s, geom);
    for g in 0..out.len() {
        if geom.is_gamma_boundary(g) {
            out[g] = 0.0;
        } else {
            out[g] /= weights[g];
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Discrete norms
// ---------------------------------------------------------------------------

pub fn inner_omega(a: &[f64], b: &[f64], geom: &Geometry) -> f64 {
    a.iter()
        .zip(b)
        .zip(geom.omega_weights())
        .map(|((x, y), w)| w * x * y)
        .sum()
}

pub fn inner_gamma(a: &[f64], b: &[f64], geom: &Geometry) -> f64 {
    a.iter()
        .zip(b)
        .zip(geom.gamma_weights())
        .map(|((x, y), w)| w * x * y)
        .sum()
}

pub fn l2_omega(u: &[f64], geom: &Geometry) -> f64 {
    inner_omega(u, u, geom).sqrt()
}

pub fn l2_gamma(w: &[f64], geom: &Geometry) -> f64 {
    inner_gamma(w, w, geom).sqrt()
}

/// Weighted L^r norm over the chamber.
pub fn lp_omega(u: &[f64], r: f64, geom: &Geometry) -> f64 {
    let s: f64 = u
        .iter()
        .zip(geom.omega_weights())
        .map(|(x, w)| w * x.abs().powf(r))
        .sum();
    s.powf(1.0 / r)
}

/// Weighted L^r norm over the plate.
pub fn lq_gamma(w: &[f64], r: f64, geom: &Geometry) -> f64 {
    let s: f64 = w
        .iter()
        .zip(geom.gamma_weights())
        .map(|(x, wt)| wt * x.abs().powf(r))
        .sum();
    s.powf(1.0 / r)
}

/// Restriction of a chamber field to the coupling face.
pub fn trace_gamma(u: &[f64], geom: &Geometry) -> BoundaryField {
    let mut out = geom.zero_boundary_field();
    for g in 0..out.len() {
        out[g] = u[geom.gamma_to_omega(g)];
    }
    out
}

/// Discrete `|grad u|_2`, defined by the face-difference sum that satisfies
/// `h1_semi(u)^2 = <-apply_laplacian(u, 0), u>` exactly.
pub fn h1_semi(u: &[f64], geom: &Geometry) -> f64 {
    h1_semi_sq(u, geom).sqrt()
}

pub fn h1_semi_sq(u: &[f64], geom: &Geometry) -> f64 {
    let mut acc = 0.0;
    match geom.mode {
        Mode::Reduced2d => {
            let (nx, ny) = (geom.dims[0], geom.dims[1]);
            let (hx, hy) = (geom.h[0], geom.h[1]);
            let (wx, wy) = (&geom.axis_weights[0], &geom.axis_weights[1]);
            for i in 0..nx - 1 {
                for j in 0..ny {
                    let d = (u[(i + 1) * ny + j] - u[i * ny + j]) / hx;
                    acc += wy[j] * hx * d * d;
                }
            }
            for i in 0..nx {
                for j in 0..ny - 1 {
                    let d = (u[i * ny + j + 1] - u[i * ny + j]) / hy;
                    acc += wx[i] * hy * d * d;
                }
            }
        }
        Mode::Full3d => {
            let (nx, ny, nz) = (geom.dims[0], geom.dims[1], geom.dims[2]);
            let (hx, hy, hz) = (geom.h[0], geom.h[1], geom.h[2]);
            let (wx, wy, wz) = (
                &geom.axis_weights[0],
                &geom.axis_weights[1],
                &geom.axis_weights[2],
            );
            let idx = |i: usize, j: usize, k: usize| (i * ny + j) * nz + k;
            for i in 0..nx - 1 {
                for j in 0..ny {
                    for k in 0..nz {
                        let d = (u[idx(i + 1, j, k)] - u[idx(i, j, k)]) / hx;
                        acc += wy[j] * wz[k] * hx * d * d;
                    }
                }
            }
            for i in 0..nx {
                for j in 0..ny - 1 {
                    for k in 0..nz {
                        let d = (u[idx(i, j + 1, k)] - u[idx(i, j, k)]) / hy;
                        acc += wx[i] * wz[k] * hy * d * d;
                    }
                }
            }
            for i in 0..nx {
                for j in 0..ny {
                    for k in 0..nz - 1 {
                        let d = (u[idx(i, j, k + 1)] - u[idx(i, j, k)]) / hz;
                        acc += wx[i] * wy[j] * hz * d * d;
                    }
                }
            }
        }
    }
    acc
}

/// Discrete `|Delta w|_2` on the plate (squared form), the quadratic form of
/// the assembled biharmonic: `h2_semi_sq(w) = <apply_biharmonic(w), w>_Gamma`.
pub fn h2_semi_sq(w: &[f64], geom: &Geometry) -> f64 {
    let t = gamma_second_diff(w, geom);
    t.iter()
        .zip(geom.gamma_weights())
        .map(|(ti, wi)| wi * ti * ti)
        .sum()
}

pub fn h2_semi(w: &[f64], geom: &Geometry) -> f64 {
    h2_semi_sq(w, geom).sqrt()
}

/// Graph norm of the pair state space: `(|grad u|^2 + |Delta w|^2)^{1/2}`.
pub fn x_norm_sq(u: &[f64], w: &[f64], geom: &Geometry) -> f64 {
    h1_semi_sq(u, geom) + h2_semi_sq(w, geom)
}

pub fn x_norm(u: &[f64], w: &[f64], geom: &Geometry) -> f64 {
    x_norm_sq(u, w, geom).sqrt()
}
