//! Horizontal Littlewood-Paley analysis: dyadic blocks, Besov norms, Bony
//! paraproducts and the Bernstein ratio check.
//!
//! The profiles follow the usual telescoping construction: `χ` is a smooth
//! cutoff equal to one on `[0, 3/4]` and vanishing beyond `4/3`, and
//! `φ(r) = χ(r/2) - χ(r)`, so `supp φ ⊂ [3/4, 8/3]` and the dyadic sum
//! collapses exactly. On a finite grid every block below `j₀` is merged into
//! the low-pass `S_{j₀}`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::field::{ScalarField, SpectralField};
use crate::grid::StripGrid;

const INNER: f64 = 0.75;
const OUTER: f64 = 4.0 / 3.0;

fn glue(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        (-1.0 / t).exp()
    }
}

/// Smooth step: 0 for `t <= 0`, 1 for `t >= 1`.
fn smooth_step(t: f64) -> f64 {
    let a = glue(t);
    let b = glue(1.0 - t);
    a / (a + b)
}

/// Low-pass profile `χ(r)`.
pub fn chi(r: f64) -> f64 {
    let r = r.abs();
    if r <= INNER {
        1.0
    } else if r >= OUTER {
        0.0
    } else {
        smooth_step((OUTER - r) / (OUTER - INNER))
    }
}

/// Dyadic profile `φ(r) = χ(r/2) - χ(r)`.
pub fn phi(r: f64) -> f64 {
    chi(0.5 * r) - chi(r)
}

/// Identifies one piece of the decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Block {
    /// `S_{j₀}`: everything below the first retained dyadic block.
    LowPass,
    /// `Δ_k`, localized near `|ξ| ≈ 2^k`.
    Dyadic(i32),
}

/// Filter multipliers for every block at every grid frequency.
#[derive(Debug, Clone)]
pub struct DyadicFilterBank {
    grid: StripGrid,
    j0: i32,
    k_max: i32,
    /// `multipliers[b][i]`, `b = 0` is the low-pass, `b = 1 + (k - j0)`.
    multipliers: Vec<Vec<f64>>,
}

impl DyadicFilterBank {
    pub fn new(grid: &StripGrid) -> Self {
        let xi_min = grid.min_frequency();
        let xi_max = grid.max_frequency();
        // χ(2^{-j₀} ξ_min) must vanish, so 2^{-j₀} ξ_min >= 4/3
        let j0 = (xi_min / OUTER).log2().floor() as i32;
        // χ(2^{-(k_max+1)} ξ_max) must be one, so 2^{-(k_max+1)} ξ_max <= 3/4
        let k_max = ((xi_max / INNER).log2().ceil() as i32 - 1).max(j0);
        let mut multipliers = Vec::with_capacity((k_max - j0 + 2) as usize);
        let abs_xi: Vec<f64> = (0..grid.nx).map(|i| grid.wavenumber(i).abs()).collect();
        let scale_j0 = 2f64.powi(-j0);
        multipliers.push(abs_xi.iter().map(|&x| chi(scale_j0 * x)).collect());
        for k in j0..=k_max {
            let s = 2f64.powi(-k);
            multipliers.push(abs_xi.iter().map(|&x| phi(s * x)).collect());
        }
        Self {
            grid: *grid,
            j0,
            k_max,
            multipliers,
        }
    }

    pub fn grid(&self) -> &StripGrid {
        &self.grid
    }

    pub fn j0(&self) -> i32 {
        self.j0
    }

    pub fn k_max(&self) -> i32 {
        self.k_max
    }

    /// All blocks in increasing frequency order, low-pass first.
    pub fn blocks(&self) -> Vec<Block> {
        std::iter::once(Block::LowPass)
            .chain((self.j0..=self.k_max).map(Block::Dyadic))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.multipliers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.multipliers.is_empty()
    }

    /// Dyadic exponent used for weights: the low-pass counts as `j₀`.
    pub fn exponent(&self, block: Block) -> i32 {
        match block {
            Block::LowPass => self.j0,
            Block::Dyadic(k) => k,
        }
    }

    /// Ordering index used by the paraproducts; the low-pass sits at `j₀ - 1`.
    fn order_index(&self, block: Block) -> i32 {
        match block {
            Block::LowPass => self.j0 - 1,
            Block::Dyadic(k) => k,
        }
    }

    fn slot(&self, block: Block) -> Option<usize> {
        match block {
            Block::LowPass => Some(0),
            Block::Dyadic(k) if (self.j0..=self.k_max).contains(&k) => {
                Some((k - self.j0 + 1) as usize)
            }
            Block::Dyadic(_) => None,
        }
    }

    /// Multiplier of `block` at FFT bin `i` (zero for blocks outside the bank).
    pub fn multiplier(&self, block: Block, i: usize) -> f64 {
        self.slot(block).map_or(0.0, |b| self.multipliers[b][i])
    }

    /// `χ(2^{-j₀}|ξ|) + Σ_k φ(2^{-k}|ξ|) - 1` maximized over the grid.
    pub fn partition_defect(&self) -> f64 {
        (0..self.grid.nx)
            .map(|i| {
                let s: f64 = self.multipliers.iter().map(|m| m[i]).sum();
                (s - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn block_spectral(&self, f: &SpectralField, block: Block) -> SpectralField {
        match self.slot(block) {
            Some(b) => {
                let m = &self.multipliers[b];
                f.with_symbol(|i| Complex64::new(m[i], 0.0))
            }
            None => SpectralField::zeros(self.grid),
        }
    }

    /// `Δ_k f` (or `S_{j₀} f` for the low-pass block).
    pub fn block(&self, f: &ScalarField, block: Block) -> ScalarField {
        self.block_spectral(&f.to_spectral(), block).to_physical()
    }

    /// `Δ_k f` for a dyadic index; zero outside the bank's range.
    pub fn dyadic_block(&self, f: &ScalarField, k: i32) -> ScalarField {
        self.block(f, Block::Dyadic(k))
    }

    pub fn low_pass(&self, f: &ScalarField) -> ScalarField {
        self.block(f, Block::LowPass)
    }

    /// `‖Δ_b f‖_{L²}` for every block, from the spectral view by Parseval.
    pub fn block_norms_spectral(&self, fields: &[&SpectralField]) -> Vec<f64> {
        self.block_norms_weighted(fields, |_| 1.0)
    }

    /// Block norms of `ℱ⁻¹(w(ξ) f̂)` where `w` is given per FFT bin.
    pub fn block_norms_weighted(
        &self,
        fields: &[&SpectralField],
        weight: impl Fn(usize) -> f64,
    ) -> Vec<f64> {
        let g = self.grid;
        let ny = g.ny;
        let w = g.lx * g.dy();
        let mut energy = vec![0.0; g.nx];
        for f in fields {
            for (i, e) in energy.iter_mut().enumerate() {
                *e += f.data()[i * ny..(i + 1) * ny]
                    .iter()
                    .map(|c| c.norm_sqr())
                    .sum::<f64>();
            }
        }
        for (i, e) in energy.iter_mut().enumerate() {
            let w = weight(i);
            *e *= w * w;
        }
        self.multipliers
            .iter()
            .map(|m| {
                let s: f64 = m.iter().zip(&energy).map(|(&mi, &e)| mi * mi * e).sum();
                (w * s).sqrt()
            })
            .collect()
    }

    pub fn block_norms(&self, f: &ScalarField) -> Vec<f64> {
        self.block_norms_spectral(&[&f.to_spectral()])
    }

    /// `2^{ks}` for every block in [`Self::blocks`] order.
    pub fn block_weights(&self, s: f64) -> Vec<f64> {
        self.blocks()
            .into_iter()
            .map(|b| 2f64.powf(self.exponent(b) as f64 * s))
            .collect()
    }

    /// `‖f‖_{B^s} = Σ_k 2^{ks} ‖Δ_k f‖_{L²}`.
    pub fn besov_norm(&self, f: &ScalarField, s: f64) -> f64 {
        self.besov_norm_spectral(&[&f.to_spectral()], s)
    }

    /// Besov norm of a vector of fields: each block norm is the `L²` norm of
    /// the vector of blocks.
    pub fn besov_norm_spectral(&self, fields: &[&SpectralField], s: f64) -> f64 {
        self.block_norms_spectral(fields)
            .iter()
            .zip(self.block_weights(s))
            .map(|(n, w)| n * w)
            .sum()
    }

    /// `‖ℱ⁻¹(e^{width·|ξ|} f̂)‖_{B^s}` for a vector of fields.
    pub fn weighted_besov_norm(&self, fields: &[&SpectralField], width: f64, s: f64) -> f64 {
        let g = self.grid;
        self.block_norms_weighted(fields, |i| (width * g.wavenumber(i).abs()).exp())
            .iter()
            .zip(self.block_weights(s))
            .map(|(n, w)| n * w)
            .sum()
    }

    pub fn besov_norm_vec(&self, fields: &[&ScalarField], s: f64) -> f64 {
        let spec: Vec<SpectralField> = fields.iter().map(|f| f.to_spectral()).collect();
        let refs: Vec<&SpectralField> = spec.iter().collect();
        self.besov_norm_spectral(&refs, s)
    }

    /// Bony decomposition `fg = T_f g + T_g f + R(f, g)` on the grid.
    pub fn bony_decompose(&self, f: &ScalarField, g: &ScalarField) -> BonyParts {
        let blocks = self.blocks();
        let fs = f.to_spectral();
        let gs = g.to_spectral();
        let fb: Vec<ScalarField> = blocks
            .iter()
            .map(|&b| self.block_spectral(&fs, b).to_physical())
            .collect();
        let gb: Vec<ScalarField> = blocks
            .iter()
            .map(|&b| self.block_spectral(&gs, b).to_physical())
            .collect();
        let idx: Vec<i32> = blocks.iter().map(|&b| self.order_index(b)).collect();
        let grid = self.grid;
        let mut t_f_g = ScalarField::zeros(grid);
        let mut t_g_f = ScalarField::zeros(grid);
        let mut remainder = ScalarField::zeros(grid);
        for (a, &ka) in idx.iter().enumerate() {
            for (b, &kb) in idx.iter().enumerate() {
                let prod = &fb[a] * &gb[b];
                if ka <= kb - 2 {
                    t_f_g.axpy(1.0, &prod);
                } else if kb <= ka - 2 {
                    t_g_f.axpy(1.0, &prod);
                } else {
                    remainder.axpy(1.0, &prod);
                }
            }
        }
        BonyParts {
            t_f_g,
            t_g_f,
            remainder,
        }
    }

    /// Per-block ratio `‖∂x Δ_k f‖ / (2^k ‖Δ_k f‖)` for every occupied
    /// dyadic block.
    pub fn bernstein_check(&self, f: &ScalarField) -> BernsteinReport {
        let g = self.grid;
        let fs = f.to_spectral();
        let fx = crate::ops::ddx_spectral(&fs);
        let norms = self.block_norms_spectral(&[&fs]);
        let dnorms = self.block_norms_spectral(&[&fx]);
        let total: f64 = norms.iter().sum();
        let (low, high) = bernstein_bounds();
        let mut entries = Vec::new();
        for (b, block) in self.blocks().into_iter().enumerate() {
            let Block::Dyadic(k) = block else { continue };
            if norms[b] <= 1e-13 * total.max(f64::MIN_POSITIVE) {
                continue;
            }
            // an occupied block whose only content is the Nyquist bin has no
            // resolvable derivative; skip it like an empty block
            if (0..g.nx).all(|i| {
                g.is_nyquist(i)
                    || self.multiplier(block, i) == 0.0
                    || fs.mode(i).iter().all(|c| c.norm() == 0.0)
            }) {
                continue;
            }
            let ratio = dnorms[b] / (2f64.powi(k) * norms[b]);
            entries.push(BernsteinEntry {
                k,
                ratio,
                within: ratio >= low - 1e-12 && ratio <= high + 1e-12,
            });
        }
        BernsteinReport { low, high, entries }
    }
}

/// The support bounds of `φ`: any block-localized function has
/// `3/4 · 2^k ≤ |ξ| ≤ 8/3 · 2^k`.
pub fn bernstein_bounds() -> (f64, f64) {
    (INNER, 2.0 * OUTER)
}

#[derive(Debug, Clone)]
pub struct BonyParts {
    pub t_f_g: ScalarField,
    pub t_g_f: ScalarField,
    pub remainder: ScalarField,
}

impl BonyParts {
    pub fn sum(&self) -> ScalarField {
        let mut s = &self.t_f_g + &self.t_g_f;
        s.axpy(1.0, &self.remainder);
        s
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BernsteinEntry {
    pub k: i32,
    pub ratio: f64,
    pub within: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct BernsteinReport {
    pub low: f64,
    pub high: f64,
    pub entries: Vec<BernsteinEntry>,
}

impl BernsteinReport {
    pub fn all_within(&self) -> bool {
        self.entries.iter().all(|e| e.within)
    }

    /// Lower Bernstein constant `c` in `c·2^{2k}‖Δ_k u‖² ≤ ‖Δ_k ∂x u‖²`.
    pub fn lower_constant(&self) -> f64 {
        self.low * self.low
    }
}
