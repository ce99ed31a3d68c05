//! Heat-equation shear flows `U(t,y) = Σ c_m e^{-m²π²t} sin(mπy)` and the
//! smallness gates they must pass.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::field::ScalarField;
use crate::grid::StripGrid;

/// Finite sine series solving `∂t U = ∂y² U` with `U(t,0) = U(t,1) = 0`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ShearFlow {
    coeffs: Vec<(u32, f64)>,
}

impl ShearFlow {
    pub fn new(coeffs: Vec<(u32, f64)>) -> Result<Self> {
        if let Some((m, _)) = coeffs.iter().find(|(m, _)| *m == 0) {
            return Err(LabError::InvalidParameter(format!(
                "shear-flow mode numbers must be positive, got {m}"
            )));
        }
        if coeffs.iter().any(|(_, c)| !c.is_finite()) {
            return Err(LabError::InvalidParameter(
                "non-finite shear-flow coefficient".into(),
            ));
        }
        Ok(Self { coeffs })
    }

    /// No base flow.
    pub fn none() -> Self {
        Self { coeffs: Vec::new() }
    }

    /// The default experiment flow: a single `m = 1` mode with `c = 0.05`.
    pub fn default_experiment() -> Self {
        Self {
            coeffs: vec![(1, 0.05)],
        }
    }

    pub fn coeffs(&self) -> &[(u32, f64)] {
        &self.coeffs
    }

    pub fn sum_abs(&self) -> f64 {
        self.coeffs.iter().map(|(_, c)| c.abs()).sum()
    }

    pub fn sum_m_abs(&self) -> f64 {
        self.coeffs.iter().map(|&(m, c)| m as f64 * c.abs()).sum()
    }

    pub fn sum_div_m(&self) -> f64 {
        self.coeffs.iter().map(|&(m, c)| c.abs() / m as f64).sum()
    }

    /// `Σ |c_m| e^{-m²π²t}`
    pub fn decay_sum(&self, t: f64) -> f64 {
        self.coeffs
            .iter()
            .map(|&(m, c)| c.abs() * decay(m, t))
            .sum()
    }

    /// `Σ m|c_m| e^{-m²π²t}`
    pub fn weighted_decay_sum(&self, t: f64) -> f64 {
        self.coeffs
            .iter()
            .map(|&(m, c)| m as f64 * c.abs() * decay(m, t))
            .sum()
    }

    pub fn is_trivial(&self) -> bool {
        self.coeffs.iter().all(|(_, c)| *c == 0.0)
    }

    pub fn value(&self, t: f64, y: f64) -> f64 {
        self.coeffs
            .iter()
            .map(|&(m, c)| c * decay(m, t) * (m as f64 * PI * y).sin())
            .sum()
    }

    pub fn dy_value(&self, t: f64, y: f64) -> f64 {
        self.coeffs
            .iter()
            .map(|&(m, c)| {
                let k = m as f64 * PI;
                k * c * decay(m, t) * (k * y).cos()
            })
            .sum()
    }

    pub fn dt_value(&self, t: f64, y: f64) -> f64 {
        self.coeffs
            .iter()
            .map(|&(m, c)| {
                let k = m as f64 * PI;
                -k * k * c * decay(m, t) * (k * y).sin()
            })
            .sum()
    }

    /// `U(t, y_j)` at the interior nodes.
    pub fn profile(&self, t: f64, grid: &StripGrid) -> Vec<f64> {
        grid.y_nodes()
            .into_iter()
            .map(|y| self.value(t, y))
            .collect()
    }

    /// `∂yU(t, y_j)` at the interior nodes.
    pub fn dy_profile(&self, t: f64, grid: &StripGrid) -> Vec<f64> {
        grid.y_nodes()
            .into_iter()
            .map(|y| self.dy_value(t, y))
            .collect()
    }

    pub fn eval_u(&self, t: f64, grid: &StripGrid) -> ScalarField {
        ScalarField::from_profile(*grid, &self.profile(t, grid))
    }

    pub fn eval_dy_u(&self, t: f64, grid: &StripGrid) -> ScalarField {
        ScalarField::from_profile(*grid, &self.dy_profile(t, grid))
    }

    /// Exact `L²(0,1)` norm of `U(t, ·)`.
    pub fn l2_norm(&self, t: f64) -> f64 {
        let mut acc = std::collections::BTreeMap::<u32, f64>::new();
        for &(m, c) in &self.coeffs {
            *acc.entry(m).or_default() += c * decay(m, t);
        }
        (0.5 * acc.values().map(|a| a * a).sum::<f64>()).sqrt()
    }

    pub fn check_gates(&self, threshold: f64) -> GateReport {
        let sum_m_abs = self.sum_m_abs();
        let sum_div_m = self.sum_div_m();
        GateReport {
            threshold,
            sum_abs: self.sum_abs(),
            sum_m_abs,
            sum_div_m,
            global_existence: sum_m_abs < threshold,
            hydro_weak: sum_div_m < threshold,
            hydro_strong: sum_m_abs < threshold,
            dy_u_nonzero: !self.is_trivial(),
        }
    }
}

fn decay(m: u32, t: f64) -> f64 {
    let k = m as f64 * PI;
    (-k * k * t).exp()
}

/// Outcome of the shear-flow smallness gates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateReport {
    pub threshold: f64,
    pub sum_abs: f64,
    /// `Σ m|c_m|`, gate for global existence of the anisotropic system and
    /// the strong hydrostatic estimate.
    pub sum_m_abs: f64,
    /// `Σ |c_m|/m`, gate for the weak hydrostatic estimate.
    pub sum_div_m: f64,
    pub global_existence: bool,
    pub hydro_weak: bool,
    pub hydro_strong: bool,
    /// False when `∂yU ≡ 0`: the argument forcing `Q ≡ 0` in the limit fails.
    pub dy_u_nonzero: bool,
}

impl GateReport {
    pub fn all_pass(&self) -> bool {
        self.global_existence && self.hydro_weak && self.hydro_strong && self.dy_u_nonzero
    }

    /// Smallest ratio `threshold / gate value` across the sum gates.
    pub fn slack(&self) -> f64 {
        let worst = self.sum_m_abs.max(self.sum_div_m);
        if worst == 0.0 {
            f64::INFINITY
        } else {
            self.threshold / worst
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::{ddy, dyy};

    #[test]
    fn midpoint_value() {
        let g = StripGrid::periodic(8, 63).unwrap();
        let f = ShearFlow::new(vec![(1, 0.1)]).unwrap();
        let p = f.profile(0.0, &g);
        assert!((p[31] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn analytic_norm() {
        let f = ShearFlow::new(vec![(1, 0.1)]).unwrap();
        let want = 0.1 * (-PI * PI * 0.1).exp() / 2f64.sqrt();
        assert!((f.l2_norm(0.1) - want).abs() < 1e-12);
    }

    #[test]
    fn norm_decays_monotonically() {
        let f = ShearFlow::new(vec![(1, 0.3), (2, -0.2), (5, 0.05)]).unwrap();
        let mut last = f64::INFINITY;
        for k in 0..50 {
            let n = f.l2_norm(k as f64 * 0.05);
            assert!(n <= last);
            last = n;
        }
        assert!(f.l2_norm(10.0) < 1e-20);
    }

    #[test]
    fn wall_derivative() {
        let f = ShearFlow::new(vec![(1, 0.3)]).unwrap();
        let t = 0.2;
        assert!((f.dy_value(t, 0.0) - 0.3 * PI * (-PI * PI * t).exp()).abs() < 1e-15);
        assert_eq!(ShearFlow::none().dy_value(t, 0.3), 0.0);
    }

    #[test]
    fn dy_profile_matches_stencil() {
        let g = StripGrid::periodic(8, 127).unwrap();
        let f = ShearFlow::new(vec![(1, 0.1), (3, 0.02)]).unwrap();
        let err = (&f.eval_dy_u(0.05, &g) - &ddy(&f.eval_u(0.05, &g))).max_abs();
        let dy = g.dy();
        // third derivative bound: Σ |c| (mπ)³ / 6
        let c = (0.1 * PI.powi(3) + 0.02 * (3.0 * PI).powi(3)) / 6.0;
        assert!(err <= c * dy * dy);
    }

    #[test]
    fn heat_residual_is_second_order() {
        let g = StripGrid::periodic(8, 127).unwrap();
        let f = ShearFlow::new(vec![(1, 0.1), (2, 0.05)]).unwrap();
        let t = 0.3;
        let dt = 1e-3;
        // fourth-order central difference in time of the analytic formula
        let ut = |tt: f64| f.eval_u(tt, &g);
        let mut dtu = ut(t - 2.0 * dt).scale(1.0 / 12.0);
        dtu.axpy(-8.0 / 12.0, &ut(t - dt));
        dtu.axpy(8.0 / 12.0, &ut(t + dt));
        dtu.axpy(-1.0 / 12.0, &ut(t + 2.0 * dt));
        let res = (&dtu.scale(1.0 / dt) - &dyy(&ut(t))).max_abs();
        assert!(res < 1e-3, "res {res}");
    }

    #[test]
    fn gates() {
        let empty = ShearFlow::none().check_gates(0.1);
        assert!(!empty.dy_u_nonzero);
        let small = ShearFlow::new(vec![(1, 0.01)]).unwrap().check_gates(0.1);
        assert!(small.all_pass());
        let big = ShearFlow::new(vec![(3, 0.2)]).unwrap().check_gates(0.1);
        assert!((big.sum_m_abs - 0.6).abs() < 1e-15);
        assert!(!big.global_existence && !big.hydro_strong);
        assert!(big.hydro_weak);
        assert!(ShearFlow::new(vec![(0, 1.0)]).is_err());
    }
}
