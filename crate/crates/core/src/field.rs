//! Scalar fields on a [`StripGrid`] and their horizontal-spectral view.
//!
//! Physical data is stored row by row (`data[j*nx + i]`, one row per interior
//! `y` level). Spectral data is stored mode by mode (`data[i*ny + j]`) so that
//! every vertical solve sees a contiguous profile. Spectral coefficients are
//! amplitudes: `f(x) = Σ_m f̂_m e^{iξ_m x}`.

use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;

use crate::grid::StripGrid;

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: StripGrid,
    data: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: StripGrid) -> Self {
        Self {
            grid,
            data: vec![0.0; grid.len()],
        }
    }

    pub fn from_vec(grid: StripGrid, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), grid.len(), "field length does not match grid");
        Self { grid, data }
    }

    /// Samples `f(x, y)` at the interior nodes.
    pub fn from_fn(grid: StripGrid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut data = Vec::with_capacity(grid.len());
        for j in 0..grid.ny {
            let y = grid.y(j);
            for i in 0..grid.nx {
                data.push(f(grid.x(i), y));
            }
        }
        Self { grid, data }
    }

    /// Broadcasts a vertical profile along `x`.
    pub fn from_profile(grid: StripGrid, profile: &[f64]) -> Self {
        assert_eq!(profile.len(), grid.ny);
        let mut data = Vec::with_capacity(grid.len());
        for &p in profile {
            data.extend(std::iter::repeat_n(p, grid.nx));
        }
        Self { grid, data }
    }

    pub fn grid(&self) -> &StripGrid {
        &self.grid
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.grid.nx + i]
    }

    pub fn row(&self, j: usize) -> &[f64] {
        let nx = self.grid.nx;
        &self.data[j * nx..(j + 1) * nx]
    }

    pub fn row_mut(&mut self, j: usize) -> &mut [f64] {
        let nx = self.grid.nx;
        &mut self.data[j * nx..(j + 1) * nx]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.grid, other.grid);
        Self {
            grid: self.grid,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| s * v)
    }

    /// `self += a·other`
    pub fn axpy(&mut self, a: f64, other: &Self) {
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x += a * y;
        }
    }

    /// Pointwise product with an `x`-independent profile.
    pub fn mul_profile(&self, profile: &[f64]) -> Self {
        let nx = self.grid.nx;
        let mut out = self.clone();
        for (j, &p) in profile.iter().enumerate() {
            for v in &mut out.data[j * nx..(j + 1) * nx] {
                *v *= p;
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `L²` norm over one period of the strip (trapezoid in `y` with zero
    /// walls, exact in `x`).
    pub fn l2_norm(&self) -> f64 {
        let w = self.grid.dx() * self.grid.dy();
        (w * self.data.iter().map(|v| v * v).sum::<f64>()).sqrt()
    }

    pub fn to_spectral(&self) -> SpectralField {
        let g = self.grid;
        let plans = g.plans();
        let mut scratch = plans.scratch();
        let mut buf = vec![Complex64::new(0.0, 0.0); g.nx];
        let mut out = SpectralField::zeros(g);
        let norm = 1.0 / g.nx as f64;
        for j in 0..g.ny {
            for (b, &v) in buf.iter_mut().zip(self.row(j)) {
                *b = Complex64::new(v, 0.0);
            }
            plans.forward.process_with_scratch(&mut buf, &mut scratch);
            for (i, b) in buf.iter().enumerate() {
                out.data[i * g.ny + j] = b * norm;
            }
        }
        out
    }
}

impl Add for &ScalarField {
    type Output = ScalarField;
    fn add(self, rhs: &ScalarField) -> ScalarField {
        self.zip_map(rhs, |a, b| a + b)
    }
}

impl Sub for &ScalarField {
    type Output = ScalarField;
    fn sub(self, rhs: &ScalarField) -> ScalarField {
        self.zip_map(rhs, |a, b| a - b)
    }
}

/// Pointwise product.
impl Mul for &ScalarField {
    type Output = ScalarField;
    fn mul(self, rhs: &ScalarField) -> ScalarField {
        self.zip_map(rhs, |a, b| a * b)
    }
}

/// Horizontal Fourier coefficients of a real field, one `y` profile per mode.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: StripGrid,
    data: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(grid: StripGrid) -> Self {
        Self {
            grid,
            data: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn grid(&self) -> &StripGrid {
        &self.grid
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    /// Vertical profile of bin `i`.
    pub fn mode(&self, i: usize) -> &[Complex64] {
        let ny = self.grid.ny;
        &self.data[i * ny..(i + 1) * ny]
    }

    pub fn mode_mut(&mut self, i: usize) -> &mut [Complex64] {
        let ny = self.grid.ny;
        &mut self.data[i * ny..(i + 1) * ny]
    }

    pub fn modes_mut(&mut self) -> std::slice::ChunksMut<'_, Complex64> {
        let ny = self.grid.ny;
        self.data.chunks_mut(ny)
    }

    /// Multiplies bin `i` by `symbol(i)`.
    pub fn apply_symbol(&mut self, symbol: impl Fn(usize) -> Complex64) {
        let ny = self.grid.ny;
        for (i, chunk) in self.data.chunks_mut(ny).enumerate() {
            let s = symbol(i);
            for c in chunk {
                *c *= s;
            }
        }
    }

    pub fn with_symbol(&self, symbol: impl Fn(usize) -> Complex64) -> Self {
        let mut out = self.clone();
        out.apply_symbol(symbol);
        out
    }

    /// 2/3-rule truncation: zeroes every bin with `|m| > nx/3` and the Nyquist bin.
    pub fn dealias(&mut self) {
        let g = self.grid;
        let ny = g.ny;
        for (i, chunk) in self.data.chunks_mut(ny).enumerate() {
            if !g.is_resolved(i) {
                chunk.fill(Complex64::new(0.0, 0.0));
            }
        }
    }

    pub fn axpy(&mut self, a: f64, other: &Self) {
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x += a * y;
        }
    }

    pub fn scale(&mut self, a: f64) {
        for x in &mut self.data {
            *x *= a;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data
            .iter()
            .all(|c| c.re.is_finite() && c.im.is_finite())
    }

    pub fn to_physical(&self) -> ScalarField {
        let g = self.grid;
        let plans = g.plans();
        let mut scratch = plans.scratch();
        let mut buf = vec![Complex64::new(0.0, 0.0); g.nx];
        let mut out = ScalarField::zeros(g);
        for j in 0..g.ny {
            for (i, b) in buf.iter_mut().enumerate() {
                *b = self.data[i * g.ny + j];
            }
            plans.inverse.process_with_scratch(&mut buf, &mut scratch);
            for (o, b) in out.row_mut(j).iter_mut().zip(&buf) {
                *o = b.re;
            }
        }
        out
    }
}

/// Forward-transforms `f`, zeroes unresolved bins and transforms back.
pub fn dealiased(f: &ScalarField) -> ScalarField {
    let mut s = f.to_spectral();
    s.dealias();
    s.to_physical()
}
