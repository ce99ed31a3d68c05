//! Discrete strip: Fourier modes along a periodic `x`, uniform interior nodes
//! in `y ∈ (0, 1)` with homogeneous Dirichlet walls.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Sampling of the strip `[0, lx) × (0, 1)`.
///
/// Physical samples sit at `x_i = i·lx/nx` and `y_j = (j+1)·dy` for
/// `j = 0..ny`, with `dy = 1/(ny+1)`; the wall rows `y = 0, 1` are not stored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StripGrid {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
}

impl StripGrid {
    pub fn new(nx: usize, ny: usize, lx: f64) -> Result<Self> {
        if nx < 8 || !nx.is_power_of_two() {
            return Err(LabError::InvalidGrid(format!(
                "nx must be a power of two >= 8, got {nx}"
            )));
        }
        if ny < 7 {
            return Err(LabError::InvalidGrid(format!("ny must be >= 7, got {ny}")));
        }
        if !(lx.is_finite() && lx > 0.0) {
            return Err(LabError::InvalidGrid(format!(
                "lx must be positive, got {lx}"
            )));
        }
        Ok(Self { nx, ny, lx })
    }

    /// Grid with the default horizontal period `2π`.
    pub fn periodic(nx: usize, ny: usize) -> Result<Self> {
        Self::new(nx, ny, 2.0 * PI)
    }

    pub fn dy(&self) -> f64 {
        1.0 / (self.ny as f64 + 1.0)
    }

    pub fn dx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.dx()
    }

    /// Height of interior row `j` (zero based).
    pub fn y(&self, j: usize) -> f64 {
        (j as f64 + 1.0) * self.dy()
    }

    pub fn y_nodes(&self) -> Vec<f64> {
        (0..self.ny).map(|j| self.y(j)).collect()
    }

    /// Signed mode number of FFT bin `i`, in `-nx/2 ..= nx/2 - 1`.
    pub fn mode_number(&self, i: usize) -> i64 {
        if i < self.nx / 2 {
            i as i64
        } else {
            i as i64 - self.nx as i64
        }
    }

    /// Angular frequency `ξ = 2πm/lx` of bin `i`.
    pub fn wavenumber(&self, i: usize) -> f64 {
        2.0 * PI * self.mode_number(i) as f64 / self.lx
    }

    pub fn is_nyquist(&self, i: usize) -> bool {
        i == self.nx / 2
    }

    /// Largest mode number kept by the 2/3 truncation.
    pub fn dealias_cutoff(&self) -> usize {
        self.nx / 3
    }

    pub fn is_resolved(&self, i: usize) -> bool {
        !self.is_nyquist(i) && self.mode_number(i).unsigned_abs() as usize <= self.dealias_cutoff()
    }

    /// Smallest nonzero |ξ| on the grid.
    pub fn min_frequency(&self) -> f64 {
        2.0 * PI / self.lx
    }

    /// Largest |ξ| on the grid (the Nyquist bin).
    pub fn max_frequency(&self) -> f64 {
        PI * self.nx as f64 / self.lx
    }

    pub(crate) fn plans(&self) -> Arc<FftPair> {
        fft_pair(self.nx)
    }
}

pub(crate) struct FftPair {
    pub forward: Arc<dyn Fft<f64>>,
    pub inverse: Arc<dyn Fft<f64>>,
    pub scratch_len: usize,
}

impl FftPair {
    pub fn scratch(&self) -> Vec<Complex64> {
        vec![Complex64::new(0.0, 0.0); self.scratch_len]
    }
}

fn fft_pair(n: usize) -> Arc<FftPair> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<FftPair>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("fft plan cache poisoned");
    guard
        .entry(n)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            let forward = planner.plan_fft_forward(n);
            let inverse = planner.plan_fft_inverse(n);
            let scratch_len = forward
                .get_inplace_scratch_len()
                .max(inverse.get_inplace_scratch_len());
            Arc::new(FftPair {
                forward,
                inverse,
                scratch_len,
            })
        })
        .clone()
}
