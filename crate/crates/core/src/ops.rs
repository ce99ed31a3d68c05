//! Differential and integral operators on strip fields.
//!
//! `x` derivatives are spectral; `y` derivatives are second-order centred
//! differences with the Dirichlet wall values implied (zero) unless explicit
//! wall rows are supplied. Vertical integrals use the composite trapezoid rule,
//! which is the adjoint partner of the centred stencil used here.

use num_complex::Complex64;

use crate::error::{LabError, Result};
use crate::field::{ScalarField, SpectralField};
use crate::grid::StripGrid;

/// Values of a field on the two walls, one sample per `x` node.
#[derive(Debug, Clone, PartialEq)]
pub struct WallRows {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl WallRows {
    pub fn zeros(nx: usize) -> Self {
        Self {
            lower: vec![0.0; nx],
            upper: vec![0.0; nx],
        }
    }

    pub fn map2(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        Self {
            lower: self
                .lower
                .iter()
                .zip(&other.lower)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            upper: self
                .upper
                .iter()
                .zip(&other.upper)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }
}

/// Spectral symbol `iξ` of bin `i`, with the Nyquist bin annihilated.
pub fn dx_symbol(grid: &StripGrid, i: usize) -> Complex64 {
    if grid.is_nyquist(i) {
        Complex64::new(0.0, 0.0)
    } else {
        Complex64::new(0.0, grid.wavenumber(i))
    }
}

pub fn ddx_spectral(f: &SpectralField) -> SpectralField {
    let g = *f.grid();
    f.with_symbol(|i| dx_symbol(&g, i))
}

/// `∂x f`, exact for band-limited data.
pub fn ddx(f: &ScalarField) -> ScalarField {
    ddx_spectral(&f.to_spectral()).to_physical()
}

/// `∂x² f` with symbol `-ξ²`.
pub fn ddxx(f: &ScalarField) -> ScalarField {
    let g = *f.grid();
    f.to_spectral()
        .with_symbol(|i| {
            let k = if g.is_nyquist(i) {
                0.0
            } else {
                g.wavenumber(i)
            };
            Complex64::new(-k * k, 0.0)
        })
        .to_physical()
}

/// Centred `∂y` with zero wall values.
pub fn ddy(f: &ScalarField) -> ScalarField {
    ddy_walled(f, &WallRows::zeros(f.grid().nx))
}

/// Centred `∂y` on interior nodes using the supplied wall rows.
pub fn ddy_walled(f: &ScalarField, walls: &WallRows) -> ScalarField {
    let g = *f.grid();
    let (nx, ny) = (g.nx, g.ny);
    let h = 0.5 / g.dy();
    let mut out = ScalarField::zeros(g);
    for j in 0..ny {
        let below: &[f64] = if j == 0 { &walls.lower } else { f.row(j - 1) };
        let above: &[f64] = if j + 1 == ny {
            &walls.upper
        } else {
            f.row(j + 1)
        };
        let row = out.row_mut(j);
        for i in 0..nx {
            row[i] = (above[i] - below[i]) * h;
        }
    }
    out
}

/// Centred `∂y²` with zero wall values.
pub fn dyy(f: &ScalarField) -> ScalarField {
    let g = *f.grid();
    let (nx, ny) = (g.nx, g.ny);
    let h2 = 1.0 / (g.dy() * g.dy());
    let zero = vec![0.0; nx];
    let mut out = ScalarField::zeros(g);
    for j in 0..ny {
        let below: &[f64] = if j == 0 { &zero } else { f.row(j - 1) };
        let above: &[f64] = if j + 1 == ny { &zero } else { f.row(j + 1) };
        let mid = f.row(j);
        let row = out.row_mut(j);
        for i in 0..nx {
            row[i] = (above[i] - 2.0 * mid[i] + below[i]) * h2;
        }
    }
    out
}

/// One-sided second-order `∂y` traces at `y = 0` and `y = 1` of a field with
/// the given wall values.
pub fn wall_dy_walled(f: &ScalarField, walls: &WallRows) -> WallRows {
    let g = *f.grid();
    let ny = g.ny;
    let h = 0.5 / g.dy();
    let (r1, r2) = (f.row(0), f.row(1));
    let (s1, s2) = (f.row(ny - 1), f.row(ny - 2));
    WallRows {
        lower: (0..g.nx)
            .map(|i| (-3.0 * walls.lower[i] + 4.0 * r1[i] - r2[i]) * h)
            .collect(),
        upper: (0..g.nx)
            .map(|i| (3.0 * walls.upper[i] - 4.0 * s1[i] + s2[i]) * h)
            .collect(),
    }
}

/// One-sided `∂y` wall traces of a Dirichlet field.
pub fn wall_dy(f: &ScalarField) -> WallRows {
    wall_dy_walled(f, &WallRows::zeros(f.grid().nx))
}

/// `Δ_ε f = ε²∂x²f + ∂y²f`.
pub fn laplacian_eps(f: &ScalarField, eps: f64) -> ScalarField {
    let mut out = dyy(f);
    if eps != 0.0 {
        out.axpy(eps * eps, &ddxx(f));
    }
    out
}

/// Trapezoid `∫₀¹ f dy` for every `x` sample, with zero wall values.
pub fn integrate_y(f: &ScalarField) -> Vec<f64> {
    let g = *f.grid();
    let dy = g.dy();
    let mut acc = vec![0.0; g.nx];
    for j in 0..g.ny {
        for (a, v) in acc.iter_mut().zip(f.row(j)) {
            *a += v;
        }
    }
    acc.iter().map(|a| a * dy).collect()
}

/// Cumulative trapezoid `∫₀^{y_j} f dy'` at every interior node.
pub fn cumulative_y(f: &ScalarField) -> ScalarField {
    let g = *f.grid();
    let dy = g.dy();
    let mut out = ScalarField::zeros(g);
    let mut prev = vec![0.0; g.nx];
    let mut acc = vec![0.0; g.nx];
    for j in 0..g.ny {
        let row = f.row(j);
        for i in 0..g.nx {
            acc[i] += 0.5 * dy * (prev[i] + row[i]);
        }
        out.row_mut(j).copy_from_slice(&acc);
        prev.copy_from_slice(row);
    }
    out
}

/// Cumulative trapezoid along a single complex profile.
pub fn cumulative_profile(f: &[Complex64], dy: f64) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(f.len());
    let mut acc = Complex64::new(0.0, 0.0);
    let mut prev = Complex64::new(0.0, 0.0);
    for &v in f {
        acc += 0.5 * dy * (prev + v);
        out.push(acc);
        prev = v;
    }
    out
}

/// Result of reconstructing the vertical velocity from `u`.
#[derive(Debug, Clone)]
pub struct VerticalVelocity {
    pub v: ScalarField,
    /// `v(x, 1)` per `x` sample; zero iff the compatibility condition holds.
    pub top: Vec<f64>,
}

impl VerticalVelocity {
    pub fn residual(&self) -> f64 {
        self.top.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// `v(x, y) = -∫₀^y ∂x u dy'`.
///
/// With `strict = Some(tol)` a top-wall residual above `tol` is an error.
pub fn v_from_u(u: &ScalarField, strict: Option<f64>) -> Result<VerticalVelocity> {
    let ux = ddx(u);
    let v = cumulative_y(&ux).scale(-1.0);
    let top: Vec<f64> = integrate_y(&ux).into_iter().map(|s| -s).collect();
    let out = VerticalVelocity { v, top };
    if let Some(tol) = strict {
        let r = out.residual();
        if r > tol {
            return Err(LabError::CompatibilityViolation {
                residual: r,
                tolerance: tol,
            });
        }
    }
    Ok(out)
}

/// Discrete divergence `∂x u + ∂y v` with the centred `y` stencil.
pub fn divergence(u: &ScalarField, v: &ScalarField) -> ScalarField {
    &ddx(u) + &ddy(v)
}

/// Centred first difference on a complex profile with zero walls.
pub fn d1_profile(f: &[Complex64], dy: f64) -> Vec<Complex64> {
    let n = f.len();
    let h = 0.5 / dy;
    let zero = Complex64::new(0.0, 0.0);
    (0..n)
        .map(|j| {
            let lo = if j == 0 { zero } else { f[j - 1] };
            let hi = if j + 1 == n { zero } else { f[j + 1] };
            (hi - lo) * h
        })
        .collect()
}

/// Centred second difference on a complex profile with zero walls.
pub fn d2_profile(f: &[Complex64], dy: f64) -> Vec<Complex64> {
    let n = f.len();
    let h2 = 1.0 / (dy * dy);
    let zero = Complex64::new(0.0, 0.0);
    (0..n)
        .map(|j| {
            let lo = if j == 0 { zero } else { f[j - 1] };
            let hi = if j + 1 == n { zero } else { f[j + 1] };
            (hi - 2.0 * f[j] + lo) * h2
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid(nx: usize, ny: usize) -> StripGrid {
        StripGrid::periodic(nx, ny).unwrap()
    }

    #[test]
    fn ddx_single_mode() {
        let g = grid(16, 15);
        let f = ScalarField::from_fn(g, |x, y| x.sin() * (PI * y).sin());
        let want = ScalarField::from_fn(g, |x, y| x.cos() * (PI * y).sin());
        assert!((&ddx(&f) - &want).max_abs() < 1e-12);
    }

    #[test]
    fn ddx_of_x_constant_is_zero() {
        let g = grid(16, 15);
        let f = ScalarField::from_fn(g, |_, y| 3.0 + y);
        assert!(ddx(&f).max_abs() < 1e-13);
    }

    #[test]
    fn ddy_sine_is_second_order() {
        let mut errs = Vec::new();
        for ny in [15, 31, 63] {
            let g = grid(8, ny);
            let f = ScalarField::from_fn(g, |_, y| (PI * y).sin());
            let want = ScalarField::from_fn(g, |_, y| PI * (PI * y).cos());
            let err = (&ddy(&f) - &want).max_abs();
            let dy = g.dy();
            assert!(
                err <= PI.powi(3) / 6.0 * dy * dy * 1.01,
                "ny={ny} err={err}"
            );
            errs.push(err);
        }
        assert!(errs[0] / errs[1] > 3.8 && errs[1] / errs[2] > 3.8);
    }

    #[test]
    fn wall_trace_of_sine() {
        let g = grid(8, 63);
        let f = ScalarField::from_fn(g, |_, y| (PI * y).sin());
        let t = wall_dy(&f);
        let dy = g.dy();
        let c = PI.powi(3) * dy * dy;
        assert!(t.lower.iter().all(|&v| (v - PI).abs() < c));
        assert!(t.upper.iter().all(|&v| (v + PI).abs() < c));
    }

    #[test]
    fn laplacian_eps_eigenfunction() {
        let g = grid(16, 63);
        let f = ScalarField::from_fn(g, |x, y| x.sin() * (PI * y).sin());
        let lap = laplacian_eps(&f, 1.0);
        let want = f.scale(-(1.0 + PI * PI));
        let dy = g.dy();
        assert!((&lap - &want).max_abs() < PI.powi(4) / 12.0 * dy * dy * 1.01);
        // ε = 0 degenerates to ∂y² exactly
        assert_eq!(laplacian_eps(&f, 0.0), dyy(&f));
    }

    #[test]
    fn v_from_u_matches_analytic_integral() {
        let g = grid(16, 63);
        let u = ScalarField::from_fn(g, |x, y| x.sin() * (2.0 * PI * y).sin());
        let vv = v_from_u(&u, Some(1e-8)).unwrap();
        let want = ScalarField::from_fn(g, |x, y| {
            x.cos() * ((2.0 * PI * y).cos() - 1.0) / (2.0 * PI)
        });
        let dy = g.dy();
        assert!((&vv.v - &want).max_abs() < 2.0 * PI * dy * dy);
        assert!(vv.residual() < 1e-13);
    }

    #[test]
    fn v_from_u_flags_incompatible_u() {
        let g = grid(16, 63);
        let u = ScalarField::from_fn(g, |x, y| x.sin() * (PI * y).sin());
        let vv = v_from_u(&u, None).unwrap();
        let dy = g.dy();
        for (i, &t) in vv.top.iter().enumerate() {
            let want = -g.x(i).cos() * 2.0 / PI;
            assert!((t - want).abs() < dy * dy);
        }
        assert!(matches!(
            v_from_u(&u, Some(1e-8)),
            Err(LabError::CompatibilityViolation { .. })
        ));
        let flat = ScalarField::from_fn(g, |_, y| y * (1.0 - y));
        assert!(v_from_u(&flat, None).unwrap().v.max_abs() < 1e-14);
    }

    #[test]
    fn integrate_y_examples() {
        let g = grid(8, 63);
        let dy = g.dy();
        let s2 = integrate_y(&ScalarField::from_fn(g, |_, y| (2.0 * PI * y).sin()));
        assert!(s2.iter().all(|v| v.abs() < dy * dy));
        let one = integrate_y(&ScalarField::from_fn(g, |_, _| 1.0));
        assert!(one.iter().all(|v| (v - 1.0).abs() <= dy + 1e-15));
        let s1 = integrate_y(&ScalarField::from_fn(g, |_, y| (PI * y).sin()));
        assert!(s1
            .iter()
            .all(|v| (v - 2.0 / PI).abs() < PI * dy * dy / 6.0 * 1.01));
    }

    #[test]
    fn stream_function_velocity_is_divergence_free() {
        let g = grid(16, 31);
        let psi = ScalarField::from_fn(g, |x, y| {
            (x.sin() + 0.2 * (3.0 * x).cos()) * (1.0 - (2.0 * PI * y).cos())
        });
        let u = ddy(&psi);
        let v = ddx(&psi).scale(-1.0);
        assert!(divergence(&u, &v).max_abs() < 1e-12);
    }
}
