//! Small dense and structured solvers used by the constant-estimation searches.
//!
//! Nothing here is performance-critical at production scale: the biharmonic
//! systems are one-dimensional (or a coarse 2D plate) and the wave Laplacian
//! on a tensor grid diagonalizes axis by axis, so dense transforms suffice.

use crate::error::{Error, Result};

/// Dense Cholesky factorization of a symmetric positive definite matrix,
/// stored row-major.
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    pub fn factor(a: &[f64], n: usize) -> Result<Self> {
        assert_eq!(a.len(), n * n);
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut s = a[i * n + j];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if s <= 0.0 {
                        return Err(Error::Validation(format!(
                            "matrix not positive definite at pivot {i} (s = {s:.3e})"
                        )));
                    }
                    l[i * n + i] = s.sqrt();
                } else {
                    l[i * n + j] = s / l[j * n + j];
                }
            }
        }
        Ok(Cholesky { n, l })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        assert_eq!(b.len(), n);
        let mut y = b.to_vec();
        for i in 0..n {
            for k in 0..i {
                y[i] -= self.l[i * n + k] * y[k];
            }
            y[i] /= self.l[i * n + i];
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                y[i] -= self.l[k * n + i] * y[k];
            }
            y[i] /= self.l[i * n + i];
        }
        y
    }
}

/// One grid axis of the separable Laplacian.
///
/// `DirichletBoth` keeps the interior nodes 1..n-2 as unknowns. `NeumannBottom`
/// keeps 0..n-2: the node at index 0 carries the ghost-reflected flux row and
/// the top node is a Dirichlet row. The eigenvectors are exact discrete sine
/// (resp. half-integer cosine) modes, so a solve is two dense transforms per
/// axis.
#[derive(Clone, Copy, PartialEq, Eq)]
pub enum AxisKind {
    DirichletBoth,
    NeumannBottom,
}

struct Axis {
    m: usize,           // number of unknowns along this axis
    eigs: Vec<f64>,     // eigenvalues of the 1D -d^2/dx^2 stencil
    synth: Vec<f64>,    // m x m, synth[j*m+k] = phi_k(j)
    analysis: Vec<f64>, // m x m, coef_k = sum_j analysis[k*m+j] a_j
}

fn build_axis(n_nodes: usize, h: f64, kind: AxisKind) -> Axis {
    let big_n = n_nodes - 1; // number of cells
    match kind {
        AxisKind::DirichletBoth => {
            let m = n_nodes - 2;
            let mut eigs = vec![0.0; m];
            let mut synth = vec![0.0; m * m];
            let mut analysis = vec![0.0; m * m];
            for k in 0..m {
                let theta = (k + 1) as f64 * std::f64::consts::PI / big_n as f64;
                eigs[k] = (2.0 - 2.0 * theta.cos()) / (h * h);
                for j in 0..m {
                    let phi = (theta * (j + 1) as f64).sin();
                    synth[j * m + k] = phi;
                    analysis[k * m + j] = 2.0 / big_n as f64 * phi;
                }
            }
            Axis {
                m,
                eigs,
                synth,
                analysis,
            }
        }
        AxisKind::NeumannBottom => {
            // Unknowns j = 0..n-2; ghost row at j = 0, Dirichlet at j = n-1.
            // phi_k(j) = cos((k + 1/2) pi j / m) diagonalizes the stencil
            // including the ghost row, and is orthogonal under the trapezoid
            // half-weight at j = 0.
            let m = n_nodes - 1;
            let mut eigs = vec![0.0; m];
            let mut synth = vec![0.0; m * m];
            let mut analysis = vec![0.0; m * m];
            for k in 0..m {
                let theta = (k as f64 + 0.5) * std::f64::consts::PI / m as f64;
                eigs[k] = (2.0 - 2.0 * theta.cos()) / (h * h);
                for j in 0..m {
                    let phi = (theta * j as f64).cos();
                    let c = if j == 0 { 0.5 } else { 1.0 };
                    synth[j * m + k] = phi;
                    analysis[k * m + j] = 2.0 / m as f64 * c * phi;
                }
            }
            Axis {
                m,
                eigs,
                synth,
                analysis,
            }
        }
    }
}

/// Direct solver for `-L u = b` where `L` is the mixed Dirichlet/Neumann
/// Laplacian of the chamber grid (Dirichlet on the walls, ghost-flux row on
/// the coupling face taken with zero boundary velocity).
pub struct TensorLaplaceSolver {
    axes: Vec<Axis>,
}

impl TensorLaplaceSolver {
    /// `dims`/`h` per axis; the last axis is the one whose bottom end carries
    /// the Neumann ghost row.
    pub fn new(dims: &[usize], h: &[f64]) -> Self {
        let last = dims.len() - 1;
        let axes = dims
            .iter()
            .zip(h.iter())
            .enumerate()
            .map(|(a, (&n, &ha))| {
                let kind = if a == last {
                    AxisKind::NeumannBottom
                } else {
                    AxisKind::DirichletBoth
                };
                build_axis(n, ha, kind)
            })
            .collect();
        TensorLaplaceSolver { axes }
    }

    pub fn unknown_dims(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.m).collect()
    }

    /// Smallest eigenvalue of `-L`, exact for the separable stencil.
    pub fn min_eigenvalue(&self) -> f64 {
        self.axes
            .iter()
            .map(|a| a.eigs.iter().cloned().fold(f64::INFINITY, f64::min))
            .sum()
    }

    /// Solve `-L u = b` on the unknown (DOF) grid, row-major over
    /// `unknown_dims()`. Transform to the eigenbasis, scale, transform back.
    pub fn solve_dof(&self, b: &[f64]) -> Vec<f64> {
        let mut work = b.to_vec();
        for (a, axis) in self.axes.iter().enumerate() {
            work = self.apply_axis(&work, a, &axis.analysis);
        }
        // Divide by the sum of axis eigenvalues.
        let dims = self.unknown_dims();
        self.scale_spectral(&mut work, &dims);
        for (a, axis) in self.axes.iter().enumerate() {
            work = self.apply_axis(&work, a, &axis.synth);
        }
        work
    }

    fn scale_spectral(&self, work: &mut [f64], dims: &[usize]) {
        match dims.len() {
            2 => {
                let (mx, my) = (dims[0], dims[1]);
                for i in 0..mx {
                    for j in 0..my {
                        work[i * my + j] /= self.axes[0].eigs[i] + self.axes[1].eigs[j];
                    }
                }
            }
            3 => {
                let (mx, my, mz) = (dims[0], dims[1], dims[2]);
                for i in 0..mx {
                    for j in 0..my {
                        for k in 0..mz {
                            work[(i * my + j) * mz + k] /=
                                self.axes[0].eigs[i] + self.axes[1].eigs[j] + self.axes[2].eigs[k];
                        }
                    }
                }
            }
            _ => unreachable!("tensor solver supports 2 or 3 axes"),
        }
    }

    /// Contract `mat` (m_out x m_in) against axis `a` of the row-major array.
    fn apply_axis(&self, data: &[f64], a: usize, mat: &[f64]) -> Vec<f64> {
        let dims = self.unknown_dims();
        let m = dims[a];
        let stride: usize = dims[a + 1..].iter().product();
        let outer: usize = dims[..a].iter().product();
        let mut out = vec![0.0; data.len()];
        for o in 0..outer {
            let base = o * m * stride;
            for s in 0..stride {
                for k in 0..m {
                    let mut acc = 0.0;
                    for j in 0..m {
                        acc += mat[k * m + j] * data[base + j * stride + s];
                    }
                    out[base + k * stride + s] = acc;
                }
            }
        }
        out
    }
}
