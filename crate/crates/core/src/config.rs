//! Run configuration read from TOML.
//!
//! ```toml
//! experiment = "sweep"
//! output = "out"
//!
//! [grid]
//! nx = 64
//! ny = 63
//!
//! [params]
//! eps = 0.1
//! eps_ladder = [0.2, 0.1, 0.05, 0.025]
//! t_end = 1.0
//!
//! [flow]
//! coeffs = [[1, 0.05]]
//! ```

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::grid::StripGrid;
use crate::lab::{BandParams, InitialData, LabConfig, PairMode};
use crate::shear::ShearFlow;
use crate::state::{SolverParams, TermSwitches};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    SimulateAniso,
    SimulateHydro,
    Sweep,
    Besov,
    Selftest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            nx: 64,
            ny: 63,
            lx: 2.0 * PI,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamsSection {
    pub eps: f64,
    pub eps_ladder: Vec<f64>,
    pub a_prime: f64,
    pub c_prime: f64,
    pub dt: f64,
    pub t_end: f64,
    pub blowup_threshold: f64,
    pub sample_every: usize,
}

impl Default for ParamsSection {
    fn default() -> Self {
        let p = SolverParams::default();
        Self {
            eps: 0.1,
            eps_ladder: vec![0.2, 0.1, 0.05, 0.025],
            a_prime: p.a_prime,
            c_prime: p.c_prime,
            dt: p.dt,
            t_end: p.t_end,
            blowup_threshold: p.blowup_threshold,
            sample_every: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowSection {
    /// `[m, c_m]` pairs.
    pub coeffs: Vec<(u32, f64)>,
    pub gate_threshold: f64,
}

impl Default for FlowSection {
    fn default() -> Self {
        Self {
            coeffs: ShearFlow::default_experiment().coeffs().to_vec(),
            gate_threshold: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    /// Replaces `initial.q_amplitude` in sweeps.
    pub q_amplitude: f64,
    pub pair_mode: PairMode,
    /// Acceptance thresholds for the fitted rate.
    pub min_slope: f64,
    pub min_r2: f64,
    pub max_m_hat_drift: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            q_amplitude: 0.0,
            pair_mode: PairMode::Aniso,
            min_slope: 0.9,
            min_r2: 0.95,
            max_m_hat_drift: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Option<Experiment>,
    pub output: Option<PathBuf>,
    pub grid: GridSection,
    pub params: ParamsSection,
    pub flow: FlowSection,
    pub band: BandParams,
    pub initial: InitialData,
    pub switches: TermSwitches,
    pub sweep: SweepSection,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| LabError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is serializable")
    }

    pub fn grid(&self) -> Result<StripGrid> {
        StripGrid::new(self.grid.nx, self.grid.ny, self.grid.lx)
    }

    pub fn flow(&self) -> Result<ShearFlow> {
        ShearFlow::new(self.flow.coeffs.clone())
    }

    pub fn solver_params(&self) -> SolverParams {
        let p = &self.params;
        SolverParams {
            a_prime: p.a_prime,
            c_prime: p.c_prime,
            dt: p.dt,
            t_end: p.t_end,
            blowup_threshold: p.blowup_threshold,
            ..SolverParams::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |e: LabError| LabError::Config(e.to_string());
        self.grid().map_err(bad)?;
        self.flow().map_err(bad)?;
        let p = &self.params;
        if !(p.eps > 0.0 && p.eps.is_finite()) {
            return Err(LabError::Config(format!(
                "eps must be positive, got {}",
                p.eps
            )));
        }
        if let Some(e) = p.eps_ladder.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
            return Err(LabError::Config(format!(
                "eps_ladder entries must be positive, got {e}"
            )));
        }
        if !(self.flow.gate_threshold > 0.0 && self.flow.gate_threshold.is_finite()) {
            return Err(LabError::Config("gate_threshold must be positive".into()));
        }
        if !(self.sweep.q_amplitude >= 0.0 && self.sweep.q_amplitude.is_finite()) {
            return Err(LabError::Config(
                "sweep.q_amplitude must be nonnegative".into(),
            ));
        }
        self.lab_config().and_then(|c| c.validate()).map_err(bad)
    }

    /// Settings for single runs.
    pub fn lab_config(&self) -> Result<LabConfig> {
        Ok(LabConfig {
            grid: self.grid()?,
            params: self.solver_params(),
            flow: self.flow()?,
            band: self.band.clone(),
            initial: self.initial.clone(),
            switches: self.switches,
            sample_every: self.params.sample_every,
            pair_mode: PairMode::Aniso,
        })
    }

    /// Settings for the ε-ladder.
    pub fn sweep_config(&self) -> Result<LabConfig> {
        let mut c = self.lab_config()?;
        c.initial.q_amplitude = self.sweep.q_amplitude;
        c.pair_mode = self.sweep.pair_mode;
        Ok(c)
    }
}
