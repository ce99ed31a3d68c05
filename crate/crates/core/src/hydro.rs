//! Solver for the hydrostatic limit system
//! `∂t u + U∂x u + v∂yU + ∂x p = ∂y²u`, `∂y p = 0`, `∂x u + ∂y v = 0`.
//!
//! `u` is the only prognostic field; `v` comes from [`v_from_u`] and the
//! `y`-independent `∂x p` is whatever keeps `∫₀¹ u dy = 0`. In discrete form the
//! pressure is the trapezoid projection `P f = f - m(f)/m(1)`, applied to both
//! the implicit diffusion and the explicit transport, so every stage of the
//! IMEX step stays compatible to round-off.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::banded::BandedLu;
use crate::error::{LabError, Result};
use crate::field::{ScalarField, SpectralField};
use crate::grid::StripGrid;
use crate::imex::{DELTA, GAMMA};
use crate::ops::{cumulative_profile, d2_profile, ddx, dyy, integrate_y, v_from_u, wall_dy};
use crate::shear::ShearFlow;
use crate::state::{SolverParams, TermSwitches};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone, PartialEq)]
pub struct HydroState {
    pub u: ScalarField,
    pub t: f64,
}

impl HydroState {
    pub fn new(u: ScalarField) -> Self {
        Self { u, t: 0.0 }
    }

    /// `v = -∫₀^y ∂x u dy'`.
    pub fn v(&self) -> ScalarField {
        v_from_u(&self.u, None)
            .expect("non-strict reconstruction")
            .v
    }
}

/// Transport part `-U∂x u - v∂yU` before projection.
fn transport(u: &ScalarField, flow: &ShearFlow, t: f64) -> ScalarField {
    let g = *u.grid();
    let v = v_from_u(u, None).expect("non-strict reconstruction").v;
    let mut out = ddx(u).mul_profile(&flow.profile(t, &g)).scale(-1.0);
    out.axpy(-1.0, &v.mul_profile(&flow.dy_profile(t, &g)));
    out
}

/// `∂x p` as the discrete compatibility multiplier: the `y`-constant that
/// removes the vertical mean of `∂y²u - U∂x u - v∂yU`.
pub fn pressure_gradient(u: &ScalarField, flow: &ShearFlow, t: f64) -> ScalarField {
    let g = *u.grid();
    let mut f = dyy(u);
    f.axpy(1.0, &transport(u, flow, t));
    let m1 = g.ny as f64 * g.dy();
    let px: Vec<f64> = integrate_y(&f).into_iter().map(|s| s / m1).collect();
    broadcast(g, &px)
}

fn broadcast(g: StripGrid, row: &[f64]) -> ScalarField {
    let mut out = ScalarField::zeros(g);
    for j in 0..g.ny {
        out.row_mut(j).copy_from_slice(row);
    }
    out
}

/// `∂x p = ∂y u(x,1) - ∂y u(x,0) - 2∂x∫₀¹ U u dy`, from one-sided wall traces
/// and the trapezoid rule; agrees with [`pressure_gradient`] to `O(dy²)`.
pub fn recover_pressure_gradient(u: &ScalarField, flow: &ShearFlow, t: f64) -> ScalarField {
    let g = *u.grid();
    let traces = wall_dy(u);
    let uu = u.mul_profile(&flow.profile(t, &g));
    let int = integrate_y(&uu);
    let int_field = broadcast(g, &int);
    let dint = ddx(&int_field);
    let row: Vec<f64> = (0..g.nx)
        .map(|i| traces.upper[i] - traces.lower[i] - 2.0 * dint.at(i, 0))
        .collect();
    broadcast(g, &row)
}

/// `∂t u` of the limit system.
pub fn hydro_rhs(u: &ScalarField, flow: &ShearFlow, t: f64) -> ScalarField {
    let mut du = dyy(u);
    du.axpy(1.0, &transport(u, flow, t));
    du.axpy(-1.0, &pressure_gradient(u, flow, t));
    du
}

/// Removes `c(x)w(y)` with `c = ∫₀¹ u dy` and `w ∝ sin(πy)` of unit discrete
/// mean; returns the corrected field and `max |c|`.
pub fn enforce_compat(u: &ScalarField) -> (ScalarField, f64) {
    let g = *u.grid();
    let c = integrate_y(u);
    let s: Vec<f64> = g
        .y_nodes()
        .iter()
        .map(|y| (std::f64::consts::PI * y).sin())
        .collect();
    let ms: f64 = s.iter().sum::<f64>() * g.dy();
    let mut out = u.clone();
    for (j, &sj) in s.iter().enumerate() {
        let w = sj / ms;
        for (o, ci) in out.row_mut(j).iter_mut().zip(&c) {
            *o -= ci * w;
        }
    }
    let size = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    (out, size)
}

/// Largest per-mode `|∫₀¹ û dy|`.
pub fn compat_residual(u: &ScalarField) -> f64 {
    let g = *u.grid();
    let s = u.to_spectral();
    (0..g.nx)
        .map(|i| (s.mode(i).iter().sum::<Complex64>() * g.dy()).norm())
        .fold(0.0, f64::max)
}

struct Factors {
    h: f64,
    lu: BandedLu,
    /// `A⁻¹1` and its trapezoid mean.
    a_inv_one: Vec<f64>,
    m_a_inv_one: f64,
}

pub struct HydroSolver {
    grid: StripGrid,
    flow: ShearFlow,
    params: SolverParams,
    switches: TermSwitches,
    u: SpectralField,
    t: f64,
    steps: u64,
    last_correction: f64,
    factors: Option<Factors>,
}

impl HydroSolver {
    pub fn new(u0: &ScalarField, flow: ShearFlow, params: SolverParams) -> Result<Self> {
        params.validate()?;
        let (u, _) = enforce_compat(u0);
        Ok(Self {
            grid: *u0.grid(),
            flow,
            params,
            switches: TermSwitches::default(),
            u: u.to_spectral(),
            t: 0.0,
            steps: 0,
            last_correction: 0.0,
            factors: None,
        })
    }

    /// Only `advection` and `diffusion` are meaningful here.
    pub fn set_switches(&mut self, switches: TermSwitches) {
        self.switches = switches;
        self.factors = None;
    }

    pub fn grid(&self) -> &StripGrid {
        &self.grid
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn flow(&self) -> &ShearFlow {
        &self.flow
    }

    pub fn params(&self) -> &SolverParams {
        &self.params
    }

    pub fn state(&self) -> HydroState {
        HydroState {
            u: self.u.to_physical(),
            t: self.t,
        }
    }

    pub fn u_spectral(&self) -> &SpectralField {
        &self.u
    }

    /// Size of the compatibility correction applied after the last step.
    pub fn last_correction(&self) -> f64 {
        self.last_correction
    }

    fn factors(&mut self, h: f64) -> Result<()> {
        if self.factors.as_ref().is_some_and(|f| f.h == h) {
            return Ok(());
        }
        let g = self.grid;
        let dy = g.dy();
        let a = if self.switches.diffusion {
            1.0 / (dy * dy)
        } else {
            0.0
        };
        let gh = GAMMA * h;
        let lu = BandedLu::tridiagonal(&vec![1.0 + 2.0 * gh * a; g.ny], -gh * a, 0)?;
        let mut one = vec![1.0; g.ny];
        lu.solve_in_place(&mut one);
        let m = one.iter().sum::<f64>() * dy;
        if m.abs() < 1e-300 {
            return Err(LabError::SolverSingular { mode: 0, pivot: m });
        }
        self.factors = Some(Factors {
            h,
            lu,
            a_inv_one: one,
            m_a_inv_one: m,
        });
        Ok(())
    }

    /// Projected transport, spectral, per mode.
    fn explicit(&self, u: &SpectralField, t: f64) -> SpectralField {
        let g = self.grid;
        if !self.switches.advection || self.flow.is_trivial() {
            return SpectralField::zeros(g);
        }
        let dy = g.dy();
        let up = self.flow.profile(t, &g);
        let uyp = self.flow.dy_profile(t, &g);
        let mut out = SpectralField::zeros(g);
        let modes: Vec<Vec<Complex64>> = (0..g.nx)
            .into_par_iter()
            .map(|i| {
                let ik = crate::ops::dx_symbol(&g, i);
                if ik == ZERO {
                    return vec![ZERO; g.ny];
                }
                let p = u.mode(i);
                let ux: Vec<Complex64> = p.iter().map(|&c| ik * c).collect();
                let v: Vec<Complex64> = cumulative_profile(&ux, dy)
                    .into_iter()
                    .map(|c| -c)
                    .collect();
                let f: Vec<Complex64> = (0..g.ny).map(|j| -up[j] * ux[j] - uyp[j] * v[j]).collect();
                project(&f)
            })
            .collect();
        for (i, m) in modes.into_iter().enumerate() {
            out.mode_mut(i).copy_from_slice(&m);
        }
        out
    }

    fn lin(&self, p: &[Complex64]) -> Vec<Complex64> {
        if !self.switches.diffusion {
            return vec![ZERO; p.len()];
        }
        project(&d2_profile(p, self.grid.dy()))
    }

    fn solve(&self, rhs: &SpectralField) -> SpectralField {
        let g = self.grid;
        let f = self.factors.as_ref().expect("factors prepared");
        let mut out = rhs.clone();
        out.modes_mut()
            .collect::<Vec<_>>()
            .into_par_iter()
            .for_each(|m| {
                let mr: Complex64 = m.iter().sum();
                f.lu.solve_in_place(m);
                let ma: Complex64 = m.iter().sum();
                let sigma = (ma - mr) / f.m_a_inv_one * g.dy();
                for (x, &w) in m.iter_mut().zip(&f.a_inv_one) {
                    *x -= sigma * w;
                }
            });
        out
    }

    /// One IMEX step followed by the compatibility clean-up.
    pub fn step(&mut self, h: f64) -> Result<()> {
        self.factors(h)?;
        let g = self.grid;
        let t = self.t;
        let un = self.u.clone();
        let e1 = self.explicit(&un, t);
        let mut r2 = un.clone();
        r2.axpy(GAMMA * h, &e1);
        let x2 = self.solve(&r2);
        let e2 = self.explicit(&x2, t + GAMMA * h);
        let mut r3 = un;
        r3.axpy(DELTA * h, &e1);
        r3.axpy((1.0 - DELTA) * h, &e2);
        let mut lx2 = SpectralField::zeros(g);
        for i in 0..g.nx {
            lx2.mode_mut(i).copy_from_slice(&self.lin(x2.mode(i)));
        }
        r3.axpy((1.0 - GAMMA) * h, &lx2);
        let x3 = self.solve(&r3);
        let (u, corr) = enforce_compat(&x3.to_physical());
        self.last_correction = corr;
        if !u.is_finite() || u.max_abs() > self.params.blowup_threshold {
            return Err(LabError::BlowupDetected {
                t: t + h,
                reason: format!("hydrostatic |u| = {:.3e}", u.max_abs()),
            });
        }
        self.u = u.to_spectral();
        self.t = t + h;
        self.steps += 1;
        Ok(())
    }

    /// Integrates to `t_end` in equal steps of at most `dt`.
    pub fn run_to(&mut self, t_end: f64, dt: f64, mut each: impl FnMut(&Self)) -> Result<()> {
        let n = ((t_end - self.t) / dt - 1e-9).ceil().max(0.0) as usize;
        if n == 0 {
            return Ok(());
        }
        let h = (t_end - self.t) / n as f64;
        for _ in 0..n {
            self.step(h)?;
            each(self);
        }
        Ok(())
    }
}

/// `f - m(f)/m(1)` on a single profile (the trapezoid weights are uniform).
fn project(f: &[Complex64]) -> Vec<Complex64> {
    let mean = f.iter().sum::<Complex64>() / f.len() as f64;
    f.iter().map(|&c| c - mean).collect()
}
