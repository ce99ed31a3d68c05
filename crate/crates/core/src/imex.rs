//! Coefficients of the two-stage, second-order, L-stable IMEX Runge-Kutta
//! scheme used by both solvers.
//!
//! For `M X' = L X + E(X, t)` one step of size `h` reads
//!
//! ```text
//! (M - γhL) X₂ = M Xₙ + γh E(Xₙ, tₙ)
//! (M - γhL) X₃ = M Xₙ + h[δ E(Xₙ, tₙ) + (1-δ) E(X₂, tₙ + γh)] + (1-γ)h L X₂
//! Xₙ₊₁ = X₃
//! ```

/// `γ = 1 - 1/√2`
pub const GAMMA: f64 = 1.0 - std::f64::consts::FRAC_1_SQRT_2;

/// `δ = 1 - 1/(2γ)`
pub const DELTA: f64 = 1.0 - 1.0 / (2.0 * GAMMA);
