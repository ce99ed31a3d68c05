//! Experiments built on the two solvers: single runs with decay monitoring,
//! paired anisotropic/hydrostatic runs for the ε → 0 limit, and rate fits.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::aniso::{maxt_monitor, AnisoSolver};
use crate::band::{step_band_ode, BandInputs, BandState};
use crate::error::{LabError, Result};
use crate::field::{ScalarField, SpectralField};
use crate::grid::StripGrid;
use crate::hydro::{compat_residual, HydroSolver};
use crate::lp::DyadicFilterBank;
use crate::ops::{ddx_spectral, ddy};
use crate::shear::ShearFlow;
use crate::state::{FlowState, SolverParams, TermSwitches};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    /// Three horizontal modes on the lowest clamped vertical shape.
    ShearCell,
    /// Seeded random coefficients on a few modes, with `e^{-|k|}` decay.
    Random,
}

/// Initial perturbation. The velocity comes from a clamped stream function so
/// both solvers can start from the same `u₀`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialData {
    pub profile: Profile,
    pub amplitude: f64,
    pub q_amplitude: f64,
    pub seed: u64,
}

impl Default for InitialData {
    fn default() -> Self {
        Self {
            profile: Profile::ShearCell,
            amplitude: 3e-5,
            q_amplitude: 3e-5,
            seed: 0,
        }
    }
}

fn clamped(m: u32, y: f64) -> f64 {
    (1.0 - (2.0 * PI * m as f64 * y).cos()) / (2.0 * PI * m as f64)
}

impl InitialData {
    fn coefficients(&self) -> Vec<(i32, u32, f64, f64)> {
        match self.profile {
            Profile::ShearCell => vec![(1, 1, 1.0, 0.0), (2, 1, 0.0, 0.5), (3, 1, 0.25, 0.0)],
            Profile::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                let mut out = Vec::new();
                for k in 1..=4 {
                    for m in 1..=2 {
                        let w = (-(k as f64 - 1.0)).exp() / m as f64;
                        out.push((
                            k,
                            m,
                            w * rng.gen_range(-1.0..1.0),
                            w * rng.gen_range(-1.0..1.0),
                        ));
                    }
                }
                out
            }
        }
    }

    /// `Ψ₀` sampled on the grid; `Ψ₀` and `∂yΨ₀` vanish on both walls.
    pub fn stream(&self, grid: StripGrid) -> ScalarField {
        let c = self.coefficients();
        let a = self.amplitude;
        ScalarField::from_fn(grid, |x, y| {
            a * c
                .iter()
                .map(|&(k, m, ac, bs)| {
                    (ac * (k as f64 * x).cos() + bs * (k as f64 * x).sin()) * clamped(m, y)
                })
                .sum::<f64>()
        })
    }

    /// Horizontal velocity `∂yΨ₀` with the solvers' centred stencil.
    pub fn velocity(&self, grid: StripGrid) -> ScalarField {
        ddy(&self.stream(grid))
    }

    /// `v₀ = -∂xΨ₀`.
    pub fn vertical_velocity(&self, grid: StripGrid) -> ScalarField {
        crate::ops::ddx(&self.stream(grid)).scale(-1.0)
    }

    /// `(q₁, q₂)` at `t = 0`.
    pub fn q_pair(&self, grid: StripGrid) -> (ScalarField, ScalarField) {
        let c = self.coefficients();
        let a = self.q_amplitude;
        let make = |shift: f64, m: f64| {
            ScalarField::from_fn(grid, |x, y| {
                a * c
                    .iter()
                    .map(|&(k, _, ac, bs)| {
                        ac * (k as f64 * (x + shift)).cos() + bs * (k as f64 * (x + shift)).sin()
                    })
                    .sum::<f64>()
                    * (m * PI * y).sin()
            })
        };
        (make(0.0, 1.0), make(1.0, 2.0))
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("amplitude", self.amplitude),
            ("q_amplitude", self.q_amplitude),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(LabError::InvalidParameter(format!(
                    "{name} must be nonnegative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Parameters of the three analytic bands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BandParams {
    pub a: f64,
    pub lambda: f64,
    pub mu: f64,
    pub delta: f64,
    /// Use `‖∂y u_φ‖` instead of `‖u_φ‖` in the ζ rate.
    pub zeta_dy_hydro: bool,
}

impl Default for BandParams {
    fn default() -> Self {
        Self {
            a: 0.5,
            lambda: 1.0,
            mu: 1.0,
            delta: 0.01,
            zeta_dy_hydro: false,
        }
    }
}

impl BandParams {
    pub fn validate(&self) -> Result<()> {
        if self.mu < self.lambda {
            return Err(LabError::InvalidParameter(format!(
                "μ must be at least λ, got μ={} λ={}",
                self.mu, self.lambda
            )));
        }
        BandState::eta(self.a, self.lambda, self.delta)?;
        BandState::zeta(self.a, self.mu)?;
        Ok(())
    }
}

/// What the "anisotropic" side of a pair runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairMode {
    #[default]
    Aniso,
    /// Both sides are the limit system, so the difference must vanish.
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabConfig {
    pub grid: StripGrid,
    pub params: SolverParams,
    pub flow: ShearFlow,
    pub band: BandParams,
    pub initial: InitialData,
    pub switches: TermSwitches,
    pub sample_every: usize,
    pub pair_mode: PairMode,
}

impl Default for LabConfig {
    fn default() -> Self {
        Self {
            grid: StripGrid::periodic(64, 63).expect("valid default grid"),
            params: SolverParams::default(),
            flow: ShearFlow::default_experiment(),
            band: BandParams::default(),
            initial: InitialData::default(),
            switches: TermSwitches::default(),
            sample_every: 10,
            pair_mode: PairMode::Aniso,
        }
    }
}

impl LabConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.band.validate()?;
        self.initial.validate()?;
        if self.sample_every == 0 {
            return Err(LabError::InvalidParameter(
                "sample_every must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Named columns of sampled values; the first column is `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl TimeSeries {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    /// `(t, value)` pairs of one column.
    pub fn pairs(&self, name: &str) -> Option<Vec<(f64, f64)>> {
        let t = self.column("t")?;
        Some(t.into_iter().zip(self.column(name)?).collect())
    }

    pub fn max_of(&self, name: &str) -> Option<f64> {
        self.column(name)
            .map(|c| c.into_iter().fold(f64::NEG_INFINITY, f64::max))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Blowup { t: f64, reason: String },
    BandExhausted { t: f64 },
}

impl RunStatus {
    pub fn is_completed(&self) -> bool {
        matches!(self, RunStatus::Completed)
    }

    /// Maps solver failures to a terminal status; configuration errors pass through.
    fn from_error(e: LabError, t: f64) -> Result<Self> {
        match e {
            LabError::BlowupDetected { t, reason } => Ok(RunStatus::Blowup { t, reason }),
            LabError::Overflow { value, .. } => Ok(RunStatus::Blowup {
                t,
                reason: format!("weighted amplitude {value:.3e}"),
            }),
            LabError::BandExhausted { t, .. } => Ok(RunStatus::BandExhausted { t }),
            other => Err(other),
        }
    }
}

fn spec(f: &ScalarField) -> SpectralField {
    f.to_spectral()
}

fn scaled(mut f: SpectralField, s: f64) -> SpectralField {
    f.scale(s);
    f
}

/// `(ε∂x f, ∂y f)` as spectral fields.
fn eps_grad(f: &ScalarField, eps: f64) -> [SpectralField; 2] {
    [scaled(ddx_spectral(&spec(f)), eps), spec(&ddy(f))]
}

pub const ANISO_COLUMNS: [&str; 11] = [
    "t",
    "B12_u",
    "B12_eps_u_psi",
    "B12_dy_u_psi",
    "B12_q",
    "B12_q_psi",
    "eta",
    "band_width",
    "maxt_value",
    "maxt_margin",
    "divergence",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleRun {
    pub eps: Option<f64>,
    pub series: TimeSeries,
    pub status: RunStatus,
    /// Any sample had the maximal-time quantity above its bound.
    pub maxt_violated: bool,
    /// Smallest `a - λη(t)` seen.
    pub min_band_width: f64,
    pub steps: u64,
    /// Named fields at the last completed step.
    #[serde(skip)]
    pub final_fields: Vec<(String, ScalarField)>,
    #[serde(skip)]
    pub final_t: f64,
}

fn sample_steps(n: usize, every: usize) -> impl Fn(usize) -> bool {
    move |s| s % every == 0 || s == n
}

/// Runs the anisotropic solver alone with the η band and the maximal-time monitor.
pub fn run_aniso(cfg: &LabConfig, eps: f64) -> Result<SingleRun> {
    cfg.validate()?;
    let g = cfg.grid;
    let bank = DyadicFilterBank::new(&g);
    let (q1, q2) = cfg.initial.q_pair(g);
    let mut solver = AnisoSolver::from_stream(
        &cfg.initial.stream(g),
        &q1,
        &q2,
        eps,
        cfg.params.clone(),
        cfg.switches,
        cfg.flow.clone(),
    )?;
    let mut eta = BandState::eta(cfg.band.a, cfg.band.lambda, cfg.band.delta)?;
    let mut series = TimeSeries::new(&ANISO_COLUMNS);
    let mut maxt_violated = false;
    let mut min_width = eta.width();
    let n = cfg.params.step_count();
    let h = if n == 0 {
        0.0
    } else {
        cfg.params.t_end / n as f64
    };
    let sampled = sample_steps(n, cfg.sample_every);

    let mut record = |solver: &AnisoSolver, eta: &BandState| -> Result<()> {
        let st = solver.state();
        let w = eta.check()?;
        let (u, q1, q2) = (spec(&st.u), spec(&st.q1), spec(&st.q2));
        let uy = spec(&ddy(&st.u));
        let m = maxt_monitor(&st, &bank, eta)?;
        maxt_violated |= m.violated;
        series.push(vec![
            st.t,
            bank.besov_norm_spectral(&[&u], 0.5),
            eps * bank.weighted_besov_norm(&[&u], w, 0.5),
            bank.weighted_besov_norm(&[&uy], w, 0.5),
            bank.besov_norm_spectral(&[&q1, &q2], 0.5),
            bank.weighted_besov_norm(&[&q1, &q2], w, 0.5),
            eta.value,
            w,
            m.value,
            m.margin,
            solver.divergence(),
        ]);
        Ok(())
    };

    let mut status = RunStatus::Completed;
    let mut outcome = record(&solver, &eta);
    for s in 1..=n {
        if outcome.is_err() {
            break;
        }
        outcome = solver.step(h).and_then(|_| {
            eta = step_band_ode(&eta, h, &cfg.flow, BandInputs::default());
            min_width = min_width.min(eta.width());
            eta.check()?;
            if sampled(s) {
                record(&solver, &eta)?;
            }
            Ok(())
        });
    }
    if let Err(e) = outcome {
        status = RunStatus::from_error(e, solver.t())?;
    }
    let st = solver.state();
    Ok(SingleRun {
        eps: Some(eps),
        series,
        status,
        maxt_violated,
        min_band_width: min_width,
        steps: solver.steps(),
        final_fields: vec![
            ("u".into(), st.u),
            ("v".into(), st.v),
            ("q1".into(), st.q1),
            ("q2".into(), st.q2),
        ],
        final_t: st.t,
    })
}

pub const HYDRO_COLUMNS: [&str; 7] = [
    "t",
    "B12_u",
    "B12_u_phi",
    "B12_dy_u_phi",
    "theta",
    "band_width",
    "compat",
];

/// Runs the limit solver alone with the θ band.
pub fn run_hydro(cfg: &LabConfig) -> Result<SingleRun> {
    cfg.validate()?;
    let g = cfg.grid;
    let bank = DyadicFilterBank::new(&g);
    let mut solver = HydroSolver::new(
        &cfg.initial.velocity(g),
        cfg.flow.clone(),
        cfg.params.clone(),
    )?;
    solver.set_switches(cfg.switches);
    let mut theta = BandState::theta(cfg.band.a, cfg.band.lambda)?;
    let mut series = TimeSeries::new(&HYDRO_COLUMNS);
    let mut min_width = theta.width();
    let n = cfg.params.step_count();
    let h = if n == 0 {
        0.0
    } else {
        cfg.params.t_end / n as f64
    };
    let sampled = sample_steps(n, cfg.sample_every);

    let mut record = |solver: &HydroSolver, theta: &BandState| -> Result<()> {
        let w = theta.check()?;
        let u = solver.state().u;
        let us = solver.u_spectral();
        let uy = spec(&ddy(&u));
        series.push(vec![
            solver.t(),
            bank.besov_norm_spectral(&[us], 0.5),
            bank.weighted_besov_norm(&[us], w, 0.5),
            bank.weighted_besov_norm(&[&uy], w, 0.5),
            theta.value,
            w,
            compat_residual(&u),
        ]);
        Ok(())
    };

    let mut status = RunStatus::Completed;
    let mut outcome = record(&solver, &theta);
    for s in 1..=n {
        if outcome.is_err() {
            break;
        }
        outcome = solver.step(h).and_then(|_| {
            theta = step_band_ode(&theta, h, &cfg.flow, BandInputs::default());
            min_width = min_width.min(theta.width());
            theta.check()?;
            if sampled(s) {
                record(&solver, &theta)?;
            }
            Ok(())
        });
    }
    if let Err(e) = outcome {
        status = RunStatus::from_error(e, solver.t())?;
    }
    let st = solver.state();
    Ok(SingleRun {
        eps: None,
        series,
        status,
        maxt_violated: false,
        min_band_width: min_width,
        steps: solver.steps(),
        final_fields: vec![("v".into(), st.v()), ("u".into(), st.u)],
        final_t: st.t,
    })
}

pub const PAIR_COLUMNS: [&str; 9] = [
    "t",
    "B12_eps_w_Theta",
    "B12_eps_w_psi",
    "B12_q_Theta",
    "B12_eps_dq_Theta",
    "maxt_margin",
    "eta",
    "theta",
    "zeta",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub eps: f64,
    pub time_series: TimeSeries,
    pub terminal_status: RunStatus,
    /// `sup_t ‖(εw¹, ε²w²)_Θ‖_{B^{1/2}}` over the samples.
    pub y: f64,
    /// Same supremum with the ψ weight.
    pub y_psi: f64,
    /// `‖(εw¹, ε²w²)_Θ‖_{B^{1/2}}` at `t = 0`.
    pub initial_diff: f64,
    pub maxt_violated: bool,
}

enum Side {
    Aniso(Box<AnisoSolver>),
    Hydro(Box<HydroSolver>),
}

struct Snapshot {
    /// `None` on the limit side.
    eps: Option<f64>,
    u: ScalarField,
    v: ScalarField,
    q1: ScalarField,
    q2: ScalarField,
}

impl Side {
    fn step(&mut self, h: f64) -> Result<()> {
        match self {
            Side::Aniso(s) => s.step(h),
            Side::Hydro(s) => s.step(h),
        }
    }

    fn snapshot(&self) -> Snapshot {
        match self {
            Side::Aniso(s) => {
                let st = s.state();
                Snapshot {
                    eps: Some(st.eps),
                    u: st.u,
                    v: st.v,
                    q1: st.q1,
                    q2: st.q2,
                }
            }
            Side::Hydro(s) => {
                let st = s.state();
                let z = ScalarField::zeros(*s.grid());
                Snapshot {
                    eps: None,
                    v: st.v(),
                    u: st.u,
                    q1: z.clone(),
                    q2: z,
                }
            }
        }
    }

    fn t(&self) -> f64 {
        match self {
            Side::Aniso(s) => s.t(),
            Side::Hydro(s) => s.t(),
        }
    }
}

/// Co-advances the anisotropic system at `eps` and the limit system from the
/// same `u₀`, recording the weighted differences `w¹ = u^ε - u`, `w² = v^ε - v`.
pub fn run_pair(eps: f64, cfg: &LabConfig) -> Result<SweepRecord> {
    cfg.validate()?;
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(LabError::InvalidParameter(format!(
            "ε must be positive, got {eps}"
        )));
    }
    let g = cfg.grid;
    let bank = DyadicFilterBank::new(&g);
    let u0 = cfg.initial.velocity(g);
    let (q1, q2) = cfg.initial.q_pair(g);
    let mut hydro = HydroSolver::new(&u0, cfg.flow.clone(), cfg.params.clone())?;
    hydro.set_switches(cfg.switches);
    let mut left = match cfg.pair_mode {
        PairMode::Aniso => Side::Aniso(Box::new(AnisoSolver::from_stream(
            &cfg.initial.stream(g),
            &q1,
            &q2,
            eps,
            cfg.params.clone(),
            cfg.switches,
            cfg.flow.clone(),
        )?)),
        PairMode::Identity => {
            let mut s = HydroSolver::new(&u0, cfg.flow.clone(), cfg.params.clone())?;
            s.set_switches(cfg.switches);
            Side::Hydro(Box::new(s))
        }
    };

    let bp = &cfg.band;
    let mut eta = BandState::eta(bp.a, bp.lambda, bp.delta)?;
    let mut theta = BandState::theta(bp.a, bp.lambda)?;
    let mut zeta = BandState::zeta(bp.a, bp.mu)?;
    let mut series = TimeSeries::new(&PAIR_COLUMNS);
    let mut maxt_violated = false;

    // solution part of ζ'
    let zeta_input =
        |a: &Snapshot, hu: &ScalarField, eta: &BandState, theta: &BandState| -> Result<f64> {
            let psi = eta.check()?;
            let phi = theta.check()?;
            let du = eps_grad(&a.u, eps);
            let dq1 = eps_grad(&a.q1, eps);
            let dq2 = eps_grad(&a.q2, eps);
            let hydro_part = if bp.zeta_dy_hydro {
                spec(&ddy(hu))
            } else {
                spec(hu)
            };
            Ok(bank.weighted_besov_norm(&[&du[0], &du[1]], psi, 0.5)
                + bank.weighted_besov_norm(&[&dq1[0], &dq1[1], &dq2[0], &dq2[1]], psi, 0.5)
                + bank.weighted_besov_norm(&[&hydro_part], phi, 0.5))
        };

    let mut record =
        |t: f64, a: &Snapshot, h: &ScalarField, bands: [&BandState; 3]| -> Result<()> {
            let [eta, theta, zeta] = bands;
            let big_theta = zeta.check()?;
            let psi = eta.check()?;
            let hv = crate::hydro::HydroState::new(h.clone()).v();
            let w1 = scaled(spec(&(&a.u - h)), eps);
            let w2 = scaled(spec(&(&a.v - &hv)), eps * eps);
            let (q1, q2) = (spec(&a.q1), spec(&a.q2));
            let dq1 = [
                scaled(ddx_spectral(&q1), eps * eps),
                scaled(spec(&ddy(&a.q1)), eps),
            ];
            let dq2 = [
                scaled(ddx_spectral(&q2), eps * eps),
                scaled(spec(&ddy(&a.q2)), eps),
            ];
            let margin = match a.eps {
                Some(eps) => {
                    let st = FlowState {
                        eps,
                        t,
                        u: a.u.clone(),
                        v: a.v.clone(),
                        q1: a.q1.clone(),
                        q2: a.q2.clone(),
                    };
                    let m = maxt_monitor(&st, &bank, eta)?;
                    maxt_violated |= m.violated;
                    m.margin
                }
                None => f64::NAN,
            };
            series.push(vec![
                t,
                bank.weighted_besov_norm(&[&w1, &w2], big_theta, 0.5),
                bank.weighted_besov_norm(&[&w1, &w2], psi, 0.5),
                bank.weighted_besov_norm(&[&q1, &q2], big_theta, 0.5),
                bank.weighted_besov_norm(&[&dq1[0], &dq1[1], &dq2[0], &dq2[1]], big_theta, 0.5),
                margin,
                eta.value,
                theta.value,
                zeta.value,
            ]);
            Ok(())
        };

    let n = cfg.params.step_count();
    let h = if n == 0 {
        0.0
    } else {
        cfg.params.t_end / n as f64
    };
    let sampled = sample_steps(n, cfg.sample_every);
    let mut status = RunStatus::Completed;

    let snap = left.snapshot();
    let hu = hydro.state().u;
    let mut outcome = record(0.0, &snap, &hu, [&eta, &theta, &zeta]);
    let mut z_prev = match &outcome {
        Ok(()) => zeta_input(&snap, &hu, &eta, &theta)?,
        Err(_) => 0.0,
    };
    for s in 1..=n {
        if outcome.is_err() {
            break;
        }
        outcome = (|| {
            left.step(h)?;
            hydro.step(h)?;
            eta = step_band_ode(&eta, h, &cfg.flow, BandInputs::default());
            theta = step_band_ode(&theta, h, &cfg.flow, BandInputs::default());
            let snap = left.snapshot();
            let hu = hydro.state().u;
            let z_next = zeta_input(&snap, &hu, &eta, &theta)?;
            zeta = step_band_ode(
                &zeta,
                h,
                &cfg.flow,
                BandInputs {
                    start: z_prev,
                    end: z_next,
                },
            );
            z_prev = z_next;
            if sampled(s) {
                record(left.t(), &snap, &hu, [&eta, &theta, &zeta])?;
            }
            Ok(())
        })();
    }
    if let Err(e) = outcome {
        status = RunStatus::from_error(e, left.t())?;
    }
    let y = series.max_of("B12_eps_w_Theta").unwrap_or(f64::NAN);
    let y_psi = series.max_of("B12_eps_w_psi").unwrap_or(f64::NAN);
    let initial_diff = series.rows.first().map(|r| r[1]).unwrap_or(f64::NAN);
    Ok(SweepRecord {
        eps,
        time_series: series,
        terminal_status: status,
        y,
        y_psi,
        initial_diff,
        maxt_violated,
    })
}

/// Least-squares fit of a power law or an exponential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub pairs: Vec<(f64, f64)>,
    /// Exponent of `Y ∝ ε^slope`, or the decay rate `σ` of `N₀e^{-σt}`.
    pub slope: f64,
    pub r2: f64,
    /// `max Y(ε)/ε` for power fits, `N₀` for decay fits.
    pub m_hat: f64,
}

/// `(slope, intercept, r²)` of `ys` against `xs`.
fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    let r2 = if ss_tot <= f64::EPSILON * f64::EPSILON * n {
        1.0
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };
    (slope, intercept, r2)
}

/// Power-law fit `Y ≈ Cε^slope` over positive pairs `(ε, Y)`.
pub fn fit_power(pairs: &[(f64, f64)]) -> Result<RateFit> {
    let good: Vec<(f64, f64)> = pairs
        .iter()
        .copied()
        .filter(|&(e, y)| e > 0.0 && y > 0.0 && y.is_finite())
        .collect();
    if good.len() < 3 {
        return Err(LabError::InsufficientData(format!(
            "power fit needs 3 positive points, got {}",
            good.len()
        )));
    }
    let xs: Vec<f64> = good.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = good.iter().map(|p| p.1.ln()).collect();
    let (slope, _, r2) = linear_fit(&xs, &ys);
    let m_hat = good.iter().map(|&(e, y)| y / e).fold(0.0, f64::max);
    Ok(RateFit {
        pairs: good,
        slope,
        r2,
        m_hat,
    })
}

/// Fits `Y(ε)` across completed sweep records.
pub fn fit_rate(records: &[SweepRecord]) -> Result<RateFit> {
    let pairs: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| r.terminal_status.is_completed())
        .map(|r| (r.eps, r.y))
        .collect();
    fit_power(&pairs)
}

/// Fits `N(t) ≈ N₀e^{-σt}` over the second half of the sampled interval.
pub fn fit_decay(series: &[(f64, f64)]) -> Result<RateFit> {
    let (Some(first), Some(last)) = (series.first(), series.last()) else {
        return Err(LabError::InsufficientData("empty series".into()));
    };
    if last.0 - first.0 < 1.0 - 1e-9 {
        return Err(LabError::InsufficientData(format!(
            "decay fit needs a span of at least 1, got {}",
            last.0 - first.0
        )));
    }
    let mid = 0.5 * (first.0 + last.0);
    let tail: Vec<(f64, f64)> = series
        .iter()
        .copied()
        .filter(|&(t, n)| t >= mid && n > 0.0 && n.is_finite())
        .collect();
    if tail.len() < 3 {
        return Err(LabError::InsufficientData(format!(
            "decay fit needs 3 positive tail samples, got {}",
            tail.len()
        )));
    }
    let xs: Vec<f64> = tail.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = tail.iter().map(|p| p.1.ln()).collect();
    let (slope, intercept, r2) = linear_fit(&xs, &ys);
    Ok(RateFit {
        pairs: tail,
        slope: -slope,
        r2,
        m_hat: intercept.exp(),
    })
}

/// Outcome of an ε-ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    /// Ordered by decreasing ε.
    pub records: Vec<SweepRecord>,
    pub fit: Option<RateFit>,
    /// `max Y/ε` without the finest ε.
    pub m_hat_coarse: Option<f64>,
    /// `Y` never grows as ε decreases.
    pub y_monotone: bool,
}

impl SweepReport {
    /// Relative change of `M̂` when the finest ε is added.
    pub fn m_hat_drift(&self) -> Option<f64> {
        let full = self.fit.as_ref()?.m_hat;
        let coarse = self.m_hat_coarse?;
        Some((full / coarse - 1.0).abs())
    }
}

/// Runs every ε on the current rayon pool and merges the records by ε.
pub fn sweep(cfg: &LabConfig, ladder: &[f64]) -> Result<SweepReport> {
    cfg.validate()?;
    let mut records = ladder
        .par_iter()
        .map(|&eps| run_pair(eps, cfg))
        .collect::<Result<Vec<_>>>()?;
    records.sort_by(|a, b| b.eps.total_cmp(&a.eps));
    let fit = fit_rate(&records).ok();
    let done: Vec<&SweepRecord> = records
        .iter()
        .filter(|r| r.terminal_status.is_completed())
        .collect();
    let m_hat_coarse = (done.len() >= 2).then(|| {
        done[..done.len() - 1]
            .iter()
            .map(|r| r.y / r.eps)
            .fold(0.0, f64::max)
    });
    let y_monotone = done.windows(2).all(|w| w[1].y <= w[0].y);
    Ok(SweepReport {
        records,
        fit,
        m_hat_coarse,
        y_monotone,
    })
}

/// Random smooth field with zero wall values, for property checks.
pub fn random_field(grid: StripGrid, rng: &mut impl Rng, modes: usize) -> ScalarField {
    let coeffs: Vec<(f64, f64, f64)> = (0..modes)
        .map(|_| {
            (
                rng.gen_range(-1.0..1.0),
                rng.gen_range(0..grid.nx / 2) as f64,
                rng.gen_range(1..6) as f64,
            )
        })
        .collect();
    let phase: Vec<f64> = (0..modes).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
    let scale = 2.0 * PI / grid.lx;
    ScalarField::from_fn(grid, |x, y| {
        coeffs
            .iter()
            .zip(&phase)
            .map(|(&(a, k, m), &p)| a * (k * scale * x + p).cos() * (m * PI * y).sin())
            .sum()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> LabConfig {
        LabConfig {
            grid: StripGrid::periodic(16, 15).unwrap(),
            params: SolverParams {
                t_end: 0.1,
                dt: 5e-3,
                ..Default::default()
            },
            sample_every: 2,
            ..Default::default()
        }
    }

    #[test]
    fn power_fit_exact() {
        let pairs: Vec<(f64, f64)> = [0.2, 0.1, 0.05, 0.025]
            .iter()
            .map(|&e| (e, 3.0 * e))
            .collect();
        let f = fit_power(&pairs).unwrap();
        assert!((f.slope - 1.0).abs() < 1e-12);
        assert!((f.m_hat - 3.0).abs() < 1e-12);
        assert!((f.r2 - 1.0).abs() < 1e-12);
        let sq: Vec<(f64, f64)> = [0.2, 0.1, 0.05].iter().map(|&e| (e, e * e)).collect();
        assert!((fit_power(&sq).unwrap().slope - 2.0).abs() < 1e-12);
    }

    #[test]
    fn power_fit_needs_three_points() {
        assert!(matches!(
            fit_power(&[(0.1, 1.0), (0.2, 2.0)]),
            Err(LabError::InsufficientData(_))
        ));
    }

    #[test]
    fn decay_fit_heat_series() {
        let s: Vec<(f64, f64)> = (0..=200)
            .map(|i| {
                let t = i as f64 * 0.01;
                (t, 2.0 * (-PI * PI * t).exp())
            })
            .collect();
        let f = fit_decay(&s).unwrap();
        assert!((f.slope - PI * PI).abs() < 1e-6);
        assert!((f.m_hat - 2.0).abs() < 1e-6);
        let flat: Vec<(f64, f64)> = (0..=20).map(|i| (i as f64 * 0.1, 1.5)).collect();
        assert!(fit_decay(&flat).unwrap().slope.abs() < 1e-12);
        let short: Vec<(f64, f64)> = (0..5).map(|i| (i as f64 * 0.1, 1.0)).collect();
        assert!(fit_decay(&short).is_err());
    }

    #[test]
    fn initial_data_is_clamped_and_shared() {
        let g = StripGrid::periodic(16, 31).unwrap();
        let init = InitialData::default();
        let u = init.velocity(g);
        assert!(compat_residual(&u) < 1e-15);
        let s = AnisoSolver::from_stream(
            &init.stream(g),
            &ScalarField::zeros(g),
            &ScalarField::zeros(g),
            0.1,
            SolverParams::default(),
            TermSwitches::default(),
            ShearFlow::none(),
        )
        .unwrap();
        assert!((&s.state().u - &u).max_abs() < 1e-15);
    }

    #[test]
    fn random_profile_is_seeded() {
        let g = StripGrid::periodic(16, 15).unwrap();
        let a = InitialData {
            profile: Profile::Random,
            seed: 7,
            ..Default::default()
        };
        let b = InitialData {
            seed: 8,
            ..a.clone()
        };
        assert_eq!(a.stream(g), a.clone().stream(g));
        assert_ne!(a.stream(g), b.stream(g));
    }

    #[test]
    fn identity_pair_has_zero_difference() {
        let cfg = LabConfig {
            pair_mode: PairMode::Identity,
            initial: InitialData {
                q_amplitude: 0.0,
                ..Default::default()
            },
            ..small_cfg()
        };
        let r = run_pair(0.1, &cfg).unwrap();
        assert!(r.terminal_status.is_completed());
        assert_eq!(r.y, 0.0);
        assert!(r
            .time_series
            .column("t")
            .unwrap()
            .windows(2)
            .all(|w| w[1] > w[0]));
    }

    #[test]
    fn pair_is_finite_and_reproducible() {
        let cfg = small_cfg();
        let a = run_pair(0.1, &cfg).unwrap();
        let b = run_pair(0.1, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.terminal_status.is_completed());
        assert!(a.y.is_finite() && a.y > 0.0);
        assert!(a.time_series.rows.iter().flatten().all(|v| v.is_finite()));
        let zeta = a.time_series.column("zeta").unwrap();
        assert!(zeta.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn large_q_raises_maxt_flag() {
        let cfg = LabConfig {
            initial: InitialData {
                q_amplitude: 0.05,
                ..Default::default()
            },
            ..small_cfg()
        };
        let r = run_pair(0.1, &cfg).unwrap();
        assert!(r.maxt_violated);
        let quiet = run_pair(0.1, &small_cfg()).unwrap();
        assert!(!quiet.maxt_violated);
    }

    #[test]
    fn sweep_orders_records() {
        let cfg = small_cfg();
        let rep = sweep(&cfg, &[0.05, 0.2, 0.1]).unwrap();
        let eps: Vec<f64> = rep.records.iter().map(|r| r.eps).collect();
        assert_eq!(eps, vec![0.2, 0.1, 0.05]);
        assert!(rep.fit.is_some());
    }

    #[test]
    fn single_runs_sample_the_end() {
        let cfg = small_cfg();
        let a = run_aniso(&cfg, 0.1).unwrap();
        let t = a.series.column("t").unwrap();
        assert!((t.last().unwrap() - 0.1).abs() < 1e-12);
        assert_eq!(t.len(), 11);
        let h = run_hydro(&cfg).unwrap();
        assert!(h
            .series
            .column("compat")
            .unwrap()
            .iter()
            .all(|&c| c < 1e-10));
    }
}
