//! Analytic-band bookkeeping: the widths `a - λη(t)`, `a - λθ(t)`,
//! `a - μζ(t)`, the exponential Fourier weights they define, and time-integrated
//! (Chemin-Lerner) block norms.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::field::{ScalarField, SpectralField};
use crate::shear::ShearFlow;

/// Weighted amplitudes above this are reported as overflow.
pub const WEIGHT_OVERFLOW: f64 = 1e150;

/// `ℛ = π²/2`.
pub const CAL_R: f64 = PI * PI / 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BandKind {
    /// `η' = δe^{-ℛt} + Σ|c_m|e^{-m²π²t}`
    Eta,
    /// `θ' = Σ m|c_m|e^{-m²π²t}`
    Theta,
    /// `ζ'`: sampled solution norms plus `Σ m|c_m|e^{-m²π²t}`.
    Zeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandState {
    pub a: f64,
    /// `λ` for η and θ, `μ` for ζ.
    pub rate_coeff: f64,
    pub value: f64,
    pub kind: BandKind,
    pub delta: f64,
    pub cal_r: f64,
    pub t: f64,
}

impl BandState {
    pub fn new(kind: BandKind, a: f64, rate_coeff: f64, delta: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(LabError::InvalidParameter(format!(
                "band half-width must be positive, got {a}"
            )));
        }
        if !(rate_coeff >= 0.0 && rate_coeff.is_finite()) {
            return Err(LabError::InvalidParameter(format!(
                "band rate must be nonnegative, got {rate_coeff}"
            )));
        }
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(LabError::InvalidParameter(format!(
                "δ must be nonnegative, got {delta}"
            )));
        }
        Ok(Self {
            a,
            rate_coeff,
            value: 0.0,
            kind,
            delta,
            cal_r: CAL_R,
            t: 0.0,
        })
    }

    pub fn eta(a: f64, lambda: f64, delta: f64) -> Result<Self> {
        Self::new(BandKind::Eta, a, lambda, delta)
    }

    pub fn theta(a: f64, lambda: f64) -> Result<Self> {
        Self::new(BandKind::Theta, a, lambda, 0.0)
    }

    pub fn zeta(a: f64, mu: f64) -> Result<Self> {
        Self::new(BandKind::Zeta, a, mu, 0.0)
    }

    /// Current width `a - λ·value`.
    pub fn width(&self) -> f64 {
        self.a - self.rate_coeff * self.value
    }

    pub fn check(&self) -> Result<f64> {
        let w = self.width();
        if w > 0.0 {
            Ok(w)
        } else {
            Err(LabError::BandExhausted {
                t: self.t,
                remaining: w,
            })
        }
    }

    /// `lim_{t→∞} η(t) = δ/ℛ + Σ|c_m|/(m²π²)` (θ: `Σ|c_m|/(mπ²)`).
    pub fn limit(&self, flow: &ShearFlow) -> Option<f64> {
        let pi2 = PI * PI;
        match self.kind {
            BandKind::Eta => Some(
                self.delta / self.cal_r
                    + flow
                        .coeffs()
                        .iter()
                        .map(|&(m, c)| c.abs() / ((m * m) as f64 * pi2))
                        .sum::<f64>(),
            ),
            BandKind::Theta => Some(flow.sum_div_m() / pi2),
            BandKind::Zeta => None,
        }
    }

    /// Closed-form part of the band derivative.
    pub fn closed_rate(&self, flow: &ShearFlow, t: f64) -> f64 {
        match self.kind {
            BandKind::Eta => self.delta * (-self.cal_r * t).exp() + flow.decay_sum(t),
            BandKind::Theta | BandKind::Zeta => flow.weighted_decay_sum(t),
        }
    }

    /// Multiplies every bin by `e^{±width·|ξ|}` in place.
    pub fn weight_spectral(&self, f: &mut SpectralField, inverse: bool) -> Result<()> {
        let w = self.check()?;
        let g = *f.grid();
        let sign = if inverse { -1.0 } else { 1.0 };
        f.apply_symbol(|i| Complex64::new((sign * w * g.wavenumber(i).abs()).exp(), 0.0));
        if !inverse {
            let peak = f.data().iter().fold(0.0f64, |m, c| m.max(c.norm()));
            if !peak.is_finite() || peak > WEIGHT_OVERFLOW {
                return Err(LabError::Overflow {
                    value: peak,
                    threshold: WEIGHT_OVERFLOW,
                });
            }
        }
        Ok(())
    }
}

/// `f_ψ = ℱ⁻¹(e^{(a-λ·band)|ξ|} f̂)`.
pub fn apply_band_weight(f: &ScalarField, band: &BandState) -> Result<ScalarField> {
    let mut s = f.to_spectral();
    band.weight_spectral(&mut s, false)?;
    Ok(s.to_physical())
}

/// Inverse of [`apply_band_weight`].
pub fn remove_band_weight(f: &ScalarField, band: &BandState) -> Result<ScalarField> {
    let mut s = f.to_spectral();
    band.weight_spectral(&mut s, true)?;
    Ok(s.to_physical())
}

/// Sampled integrand for the ζ band at the two ends of a step (zero for η, θ).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BandInputs {
    pub start: f64,
    pub end: f64,
}

/// Advances the band by `dt`: RK4 on the closed-form rate, plus a trapezoid
/// over the sampled ζ integrand.
pub fn step_band_ode(band: &BandState, dt: f64, flow: &ShearFlow, inputs: BandInputs) -> BandState {
    let t = band.t;
    let f = |s: f64| band.closed_rate(flow, s);
    let k1 = f(t);
    let k2 = f(t + 0.5 * dt);
    let k4 = f(t + dt);
    let mut inc = dt * (k1 + 4.0 * k2 + k4) / 6.0;
    if band.kind == BandKind::Zeta {
        inc += 0.5 * dt * (inputs.start.max(0.0) + inputs.end.max(0.0));
    }
    BandState {
        value: band.value + inc.max(0.0),
        t: t + dt,
        ..band.clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TimeExponent {
    One,
    Two,
    Infinity,
}

/// Per-block time integrals `∫ f(t)‖Δ_k a(t)‖^p dt`, summed with weights `2^{ks}`
/// on [`Self::finalize`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheminLernerAccumulator {
    pub s: f64,
    pub p: TimeExponent,
    pub block_weights: Vec<f64>,
    pub per_block: Vec<f64>,
    pub elapsed: f64,
}

impl CheminLernerAccumulator {
    /// `block_weights` are the `2^{ks}` from [`crate::lp::DyadicFilterBank::block_weights`].
    pub fn new(s: f64, p: TimeExponent, block_weights: Vec<f64>) -> Self {
        let n = block_weights.len();
        Self {
            s,
            p,
            block_weights,
            per_block: vec![0.0; n],
            elapsed: 0.0,
        }
    }

    /// Left-endpoint update over `[t, t+dt]` with block norms sampled at `t`
    /// and time weight `weight = f(t)`.
    pub fn accumulate(&mut self, block_norms: &[f64], weight: f64, dt: f64) {
        assert_eq!(block_norms.len(), self.per_block.len());
        for (acc, &n) in self.per_block.iter_mut().zip(block_norms) {
            match self.p {
                TimeExponent::One => *acc += weight * n * dt,
                TimeExponent::Two => *acc += weight * n * n * dt,
                TimeExponent::Infinity => *acc = acc.max(weight * n),
            }
        }
        self.elapsed += dt;
    }

    /// Combines with an accumulator over a disjoint later interval.
    pub fn merge(&mut self, other: &Self) {
        for (a, b) in self.per_block.iter_mut().zip(&other.per_block) {
            match self.p {
                TimeExponent::Infinity => *a = a.max(*b),
                _ => *a += b,
            }
        }
        self.elapsed += other.elapsed;
    }

    pub fn finalize(&self) -> f64 {
        self.per_block
            .iter()
            .zip(&self.block_weights)
            .map(|(&i, &w)| {
                let r = match self.p {
                    TimeExponent::One | TimeExponent::Infinity => i,
                    TimeExponent::Two => i.sqrt(),
                };
                w * r
            })
            .sum()
    }
}
