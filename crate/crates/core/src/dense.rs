//! Dense-matrix reference for the hydrostatic limit operator on small grids.
//!
//! Unknowns are the interior samples in the physical ordering `j*nx + i`.
//! Horizontal derivatives use the periodic cotangent differentiation matrix,
//! vertical ones the same centred stencils as the solver, and the pressure is
//! the trapezoid projection `I - 11ᵀ/ny` applied column-wise.

use nalgebra::{DMatrix, DVector};

use crate::error::{LabError, Result};
use crate::field::ScalarField;
use crate::grid::StripGrid;
use crate::shear::ShearFlow;

/// Largest grid the dense oracle accepts.
pub const MAX_NX: usize = 32;
pub const MAX_NY: usize = 33;

pub struct DenseHydroOracle {
    grid: StripGrid,
    flow: ShearFlow,
    /// Time-independent diffusion block.
    a0: DMatrix<f64>,
    /// One block per shear mode, to be scaled by `e^{-m²π²t}`.
    a_modes: Vec<(u32, DMatrix<f64>)>,
}

/// Periodic spectral differentiation matrix on `n` points of period `lx`.
pub fn fourier_diff_matrix(n: usize, lx: f64) -> DMatrix<f64> {
    let scale = 2.0 * std::f64::consts::PI / lx;
    DMatrix::from_fn(n, n, |i, l| {
        if i == l {
            0.0
        } else {
            let d = i as f64 - l as f64;
            let sign = if (i + n - l).is_multiple_of(2) {
                1.0
            } else {
                -1.0
            };
            0.5 * sign / (d * std::f64::consts::PI / n as f64).tan() * scale
        }
    })
}

impl DenseHydroOracle {
    pub fn new(grid: &StripGrid, flow: &ShearFlow) -> Result<Self> {
        if grid.nx > MAX_NX || grid.ny > MAX_NY {
            return Err(LabError::InvalidGrid(format!(
                "dense oracle limited to {MAX_NX}x{MAX_NY}, got {}x{}",
                grid.nx, grid.ny
            )));
        }
        let (nx, ny) = (grid.nx, grid.ny);
        let dy = grid.dy();
        let a = 1.0 / (dy * dy);
        let ix = DMatrix::<f64>::identity(nx, nx);
        let dx = fourier_diff_matrix(nx, grid.lx);
        let d2 = DMatrix::from_fn(ny, ny, |i, j| match i.abs_diff(j) {
            0 => -2.0 * a,
            1 => a,
            _ => 0.0,
        });
        let proj = DMatrix::from_fn(
            ny,
            ny,
            |i, j| if i == j { 1.0 } else { 0.0 } - 1.0 / ny as f64,
        );
        let cum = DMatrix::from_fn(ny, ny, |i, j| {
            if j < i {
                dy
            } else if j == i {
                0.5 * dy
            } else {
                0.0
            }
        });
        let py = proj.kronecker(&ix);
        let a0 = &py * d2.kronecker(&ix);
        let y = grid.y_nodes();
        let a_modes = flow
            .coeffs()
            .iter()
            .map(|&(m, c)| {
                let k = m as f64 * std::f64::consts::PI;
                let u = DMatrix::from_fn(
                    ny,
                    ny,
                    |i, j| if i == j { c * (k * y[i]).sin() } else { 0.0 },
                );
                let uy = DMatrix::from_fn(ny, ny, |i, j| {
                    if i == j {
                        c * k * (k * y[i]).cos()
                    } else {
                        0.0
                    }
                });
                // -U∂x u - v∂yU with v = -C∂x u
                let op = -(u.kronecker(&dx)) + (uy * &cum).kronecker(&dx);
                (m, &py * op)
            })
            .collect();
        Ok(Self {
            grid: *grid,
            flow: flow.clone(),
            a0,
            a_modes,
        })
    }

    pub fn grid(&self) -> &StripGrid {
        &self.grid
    }

    /// Operator at time `t`.
    pub fn matrix(&self, t: f64) -> DMatrix<f64> {
        let mut m = self.a0.clone();
        for (k, am) in &self.a_modes {
            let w = (-((*k as f64) * std::f64::consts::PI).powi(2) * t).exp();
            m += am * w;
        }
        m
    }

    pub fn apply(&self, u: &ScalarField, t: f64) -> ScalarField {
        let x = DVector::from_column_slice(u.data());
        ScalarField::from_vec(self.grid, (self.matrix(t) * x).iter().copied().collect())
    }

    /// Reference solution at `t_end`: matrix exponential when the operator is
    /// autonomous, otherwise classical RK4 with step `dt`.
    pub fn evolve(&self, u0: &ScalarField, t_end: f64, dt: f64) -> ScalarField {
        let mut x = DVector::from_column_slice(u0.data());
        if self.flow.is_trivial() {
            let e = (&self.a0 * t_end).exp();
            x = e * x;
        } else {
            let n = (t_end / dt).ceil().max(1.0) as usize;
            let h = t_end / n as f64;
            for s in 0..n {
                let t = s as f64 * h;
                let am = self.matrix(t + 0.5 * h);
                let a0 = self.matrix(t);
                let a1 = self.matrix(t + h);
                let k1 = &a0 * &x;
                let k2 = &am * (&x + &k1 * (0.5 * h));
                let k3 = &am * (&x + &k2 * (0.5 * h));
                let k4 = &a1 * (&x + &k3 * h);
                x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            }
        }
        ScalarField::from_vec(self.grid, x.iter().copied().collect())
    }

    /// Eigenvalues of the operator at `t` restricted to compatible fields
    /// (zero trapezoid mean in `y` for every `x` sample).
    pub fn compatible_spectrum(&self, t: f64) -> Result<Vec<num_complex::Complex64>> {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        // basis e_j - e_{ny-1} in y, tensored with the identity in x
        let zy = DMatrix::from_fn(ny, ny - 1, |i, j| {
            if i == j {
                1.0
            } else if i == ny - 1 {
                -1.0
            } else {
                0.0
            }
        });
        let z = zy.kronecker(&DMatrix::<f64>::identity(nx, nx));
        let zt = z.transpose();
        let gram = (&zt * &z).try_inverse().expect("basis is independent");
        let reduced = gram * zt * self.matrix(t) * z;
        let schur = reduced
            .try_schur(1e-13, 200_000)
            .ok_or(LabError::SolverSingular {
                mode: 0,
                pivot: f64::NAN,
            })?;
        Ok(schur
            .complex_eigenvalues()
            .iter()
            .map(|c| num_complex::Complex64::new(c.re, c.im))
            .collect())
    }
}
