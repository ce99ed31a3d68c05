//! Flow state bundle and solver parameters shared by both solvers.

use serde::{Deserialize, Serialize};

use crate::band::CAL_R;
use crate::error::{LabError, Result};
use crate::field::ScalarField;
use crate::grid::StripGrid;

/// Perturbation `(u, v)` and scaled Q pair `(q₁, q₂) = (Q₁₁, εQ₁₂)` at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub eps: f64,
    pub t: f64,
    pub u: ScalarField,
    pub v: ScalarField,
    pub q1: ScalarField,
    pub q2: ScalarField,
}

impl FlowState {
    pub fn zeros(grid: StripGrid, eps: f64) -> Self {
        let z = ScalarField::zeros(grid);
        Self {
            eps,
            t: 0.0,
            u: z.clone(),
            v: z.clone(),
            q1: z.clone(),
            q2: z,
        }
    }

    pub fn grid(&self) -> &StripGrid {
        self.u.grid()
    }

    /// Unscaled `(Q₁₁, Q₁₂)`.
    pub fn q_tensor(&self) -> (ScalarField, ScalarField) {
        (self.q1.clone(), self.q2.scale(1.0 / self.eps))
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.v.is_finite() && self.q1.is_finite() && self.q2.is_finite()
    }

    pub fn max_abs(&self) -> f64 {
        [&self.u, &self.v, &self.q1, &self.q2]
            .iter()
            .map(|f| f.max_abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    pub a_prime: f64,
    pub c_prime: f64,
    pub dt: f64,
    pub t_end: f64,
    pub blowup_threshold: f64,
    pub cal_r: f64,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            a_prime: 1.0,
            c_prime: 1.0,
            dt: 2.5e-3,
            t_end: 2.0,
            blowup_threshold: 1e6,
            cal_r: CAL_R,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        let check = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(LabError::InvalidParameter(format!(
                    "{name} must be positive, got {v}"
                )))
            }
        };
        check("a'", self.a_prime)?;
        check("c'", self.c_prime)?;
        check("dt", self.dt)?;
        check("blowup_threshold", self.blowup_threshold)?;
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(LabError::InvalidParameter(format!(
                "t_end must be nonnegative, got {}",
                self.t_end
            )));
        }
        Ok(())
    }

    /// Number of steps of size close to `dt` that land exactly on `t_end`.
    pub fn step_count(&self) -> usize {
        (self.t_end / self.dt - 1e-9).ceil().max(0.0) as usize
    }
}

/// Which groups of terms the solvers include.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TermSwitches {
    /// Transport by, and shear of, the base flow `U`.
    pub advection: bool,
    /// Self-interaction terms of the perturbation.
    pub nonlinear: bool,
    /// Co-rotation of the Q pair at rate `κ`.
    pub rotation: bool,
    /// Elastic stress forcing of the momentum equations.
    pub stress: bool,
    pub diffusion: bool,
    /// `-a'q - 2c'q|q|²`
    pub reaction: bool,
}

impl Default for TermSwitches {
    fn default() -> Self {
        Self {
            advection: true,
            nonlinear: true,
            rotation: true,
            stress: true,
            diffusion: true,
            reaction: true,
        }
    }
}

impl TermSwitches {
    pub fn none() -> Self {
        Self {
            advection: false,
            nonlinear: false,
            rotation: false,
            stress: false,
            diffusion: false,
            reaction: false,
        }
    }
}
