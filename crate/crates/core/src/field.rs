//! Real scalar fields on the torus and their Fourier coefficients.
//!
//! Transforms use the unitary-mean convention: the `k = 0` coefficient is
//! the spatial mean, and Parseval reads `Σ_k |c_k|² = mean(f²)`.
//! Spectra are always stored in full (not half-spectra) and kept exactly
//! Hermitian, `c(-k) = conj(c(k))`.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::grid::FourierGrid;

#[derive(Clone, Debug)]
pub struct SpectralField {
    grid: Arc<FourierGrid>,
    coeffs: Vec<Complex64>,
}

#[derive(Clone, Debug)]
pub struct RealField {
    grid: Arc<FourierGrid>,
    values: Vec<f64>,
}

/// Physical samples on the padded product grid (`3n/2` points per axis).
#[derive(Clone, Debug)]
pub struct PaddedField {
    grid: Arc<FourierGrid>,
    values: Vec<f64>,
}

pub(crate) fn check_same_grid(a: &FourierGrid, b: &FourierGrid) -> Result<()> {
    if a.n() == b.n() {
        Ok(())
    } else {
        Err(Error::GridMismatch {
            expected: a.n(),
            found: b.n(),
        })
    }
}

/// Averages every conjugate pair so the spectrum is exactly Hermitian.
fn symmetrize(grid: &FourierGrid, coeffs: &mut [Complex64]) {
    let conj = grid.conjugate();
    for idx in 0..coeffs.len() {
        let c = conj[idx];
        if c == idx {
            coeffs[idx].im = 0.0;
        } else if idx < c {
            let avg = (coeffs[idx] + coeffs[c].conj()) * 0.5;
            coeffs[idx] = avg;
            coeffs[c] = avg.conj();
        }
    }
}

impl SpectralField {
    pub fn zeros(grid: &Arc<FourierGrid>) -> Self {
        Self {
            grid: Arc::clone(grid),
            coeffs: vec![Complex64::default(); grid.len()],
        }
    }

    /// Wraps raw coefficients; rejects wrong lengths and non-Hermitian spectra.
    pub fn from_coeffs(grid: &Arc<FourierGrid>, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(invalid(format!(
                "expected {} coefficients, got {}",
                grid.len(),
                coeffs.len()
            )));
        }
        let field = Self {
            grid: Arc::clone(grid),
            coeffs,
        };
        if !field.is_hermitian() {
            return Err(invalid("coefficients are not Hermitian-symmetric"));
        }
        Ok(field)
    }

    pub(crate) fn from_coeffs_unchecked(grid: &Arc<FourierGrid>, coeffs: Vec<Complex64>) -> Self {
        debug_assert_eq!(coeffs.len(), grid.len());
        Self {
            grid: Arc::clone(grid),
            coeffs,
        }
    }

    pub fn constant(grid: &Arc<FourierGrid>, c: f64) -> Self {
        let mut f = Self::zeros(grid);
        f.coeffs[0] = Complex64::new(c, 0.0);
        f
    }

    /// `amplitude · cos(k·x)`.
    pub fn cosine(grid: &Arc<FourierGrid>, amplitude: f64, k: (i64, i64)) -> Result<Self> {
        let mut f = Self::zeros(grid);
        f.add_cosine(amplitude, k)?;
        Ok(f)
    }

    /// Adds `amplitude · cos(k·x)` in place.
    pub fn add_cosine(&mut self, amplitude: f64, k: (i64, i64)) -> Result<()> {
        let idx = self
            .grid
            .index_of(k)
            .ok_or_else(|| invalid(format!("wavenumber {k:?} not representable")))?;
        let c = self.grid.conjugate()[idx];
        if c == idx {
            self.coeffs[idx] += Complex64::new(amplitude, 0.0);
        } else {
            self.coeffs[idx] += Complex64::new(0.5 * amplitude, 0.0);
            self.coeffs[c] += Complex64::new(0.5 * amplitude, 0.0);
        }
        Ok(())
    }

    /// Samples `f` on the physical grid and transforms.
    pub fn from_fn(grid: &Arc<FourierGrid>, f: impl Fn(f64, f64) -> f64) -> Self {
        forward(&RealField::from_fn(grid, f))
    }

    pub fn grid(&self) -> &Arc<FourierGrid> {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeff(&self, k: (i64, i64)) -> Option<Complex64> {
        self.grid.index_of(k).map(|idx| self.coeffs[idx])
    }

    /// Exact check of `c(-k) = conj(c(k))` and a real mean.
    pub fn is_hermitian(&self) -> bool {
        let conj = self.grid.conjugate();
        self.coeffs
            .iter()
            .enumerate()
            .all(|(idx, c)| *c == self.coeffs[conj[idx]].conj())
    }

    /// `Σ_k |c_k|²`, i.e. the spatial mean of `f²`.
    pub fn l2_norm_sq(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_norm_sq().sqrt()
    }

    /// Mode-wise `m(k) · c(k)` for a real, centrally symmetric symbol.
    pub fn apply_multiplier(&self, m: &[f64]) -> Result<Self> {
        if m.len() != self.coeffs.len() {
            return Err(invalid(format!(
                "multiplier has {} entries, grid has {}",
                m.len(),
                self.coeffs.len()
            )));
        }
        let conj = self.grid.conjugate();
        if let Some(idx) = (0..m.len()).find(|&i| m[i] != m[conj[i]]) {
            return Err(invalid(format!(
                "multiplier is not symmetric at wavenumber {:?}",
                self.grid.wavenumbers()[idx]
            )));
        }
        Ok(self.apply_multiplier_unchecked(m))
    }

    pub(crate) fn apply_multiplier_unchecked(&self, m: &[f64]) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .zip(m)
            .map(|(c, &w)| c * w)
            .collect();
        Self::from_coeffs_unchecked(&self.grid, coeffs)
    }

    /// Zeroes every mode outside the dealias mask.
    pub fn masked(&self) -> Self {
        let mask = self.grid.dealias_mask();
        let coeffs = self
            .coeffs
            .iter()
            .zip(mask)
            .map(|(c, &keep)| if keep { *c } else { Complex64::default() })
            .collect();
        Self::from_coeffs_unchecked(&self.grid, coeffs)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, a: f64) -> Self {
        let coeffs = self.coeffs.iter().map(|c| c * a).collect();
        Self::from_coeffs_unchecked(&self.grid, coeffs)
    }

    /// Adds `c` to the mean.
    pub fn shift_mean(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.coeffs[0] += Complex64::new(c, 0.0);
        out
    }

    fn zip_with(&self, other: &Self, op: impl Fn(Complex64, Complex64) -> Complex64) -> Result<Self> {
        check_same_grid(&self.grid, &other.grid)?;
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(&a, &b)| op(a, b))
            .collect();
        Ok(Self::from_coeffs_unchecked(&self.grid, coeffs))
    }

    pub fn inverse(&self) -> RealField {
        inverse(self)
    }

    /// Evaluates the masked part of the field on the padded product grid.
    pub fn to_padded(&self) -> PaddedField {
        let grid = &self.grid;
        let m = grid.padded_n();
        let mut buf = vec![Complex64::default(); m * m];
        for &idx in grid.retained() {
            buf[grid.padded_index(idx)] = self.coeffs[idx];
        }
        grid.padded_fft().inverse(&mut buf);
        PaddedField {
            grid: Arc::clone(grid),
            values: buf.into_iter().map(|c| c.re).collect(),
        }
    }
}

impl RealField {
    pub fn new(grid: &Arc<FourierGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(invalid(format!(
                "expected {} samples, got {}",
                grid.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("physical field contains non-finite values"));
        }
        Ok(Self {
            grid: Arc::clone(grid),
            values,
        })
    }

    pub fn from_fn(grid: &Arc<FourierGrid>, f: impl Fn(f64, f64) -> f64) -> Self {
        let n = grid.n();
        let mut values = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let (x1, x2) = grid.point(i, j);
                values.push(f(x1, x2));
            }
        }
        Self {
            grid: Arc::clone(grid),
            values,
        }
    }

    pub fn grid(&self) -> &Arc<FourierGrid> {
        &self.grid
    }

    /// Row-major samples, `values[i * n + j] = f(x_ij)`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mean_square(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>() / self.values.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn forward(&self) -> SpectralField {
        forward(self)
    }
}

impl PaddedField {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Pointwise combination of two padded fields.
    pub fn zip_map(&self, other: &Self, op: impl Fn(f64, f64) -> f64) -> Result<Self> {
        check_same_grid(&self.grid, &other.grid)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| op(a, b))
            .collect();
        Ok(Self {
            grid: Arc::clone(&self.grid),
            values,
        })
    }

    pub fn map(&self, op: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: Arc::clone(&self.grid),
            values: self.values.iter().map(|&v| op(v)).collect(),
        }
    }

    /// Transforms back and keeps only the dealias-retained modes.
    pub fn to_spectral_masked(&self) -> SpectralField {
        let grid = &self.grid;
        let m = grid.padded_n();
        let mut buf: Vec<Complex64> = self.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        grid.padded_fft().forward(&mut buf);
        let scale = 1.0 / (m * m) as f64;
        let mut coeffs = vec![Complex64::default(); grid.len()];
        for &idx in grid.retained() {
            coeffs[idx] = buf[grid.padded_index(idx)] * scale;
        }
        symmetrize(grid, &mut coeffs);
        SpectralField::from_coeffs_unchecked(grid, coeffs)
    }
}

pub fn forward(f: &RealField) -> SpectralField {
    let grid = &f.grid;
    let mut buf: Vec<Complex64> = f.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    grid.fft().forward(&mut buf);
    let scale = 1.0 / grid.len() as f64;
    buf.iter_mut().for_each(|c| *c *= scale);
    symmetrize(grid, &mut buf);
    SpectralField::from_coeffs_unchecked(grid, buf)
}

pub fn inverse(s: &SpectralField) -> RealField {
    let grid = &s.grid;
    let mut buf = s.coeffs.clone();
    grid.fft().inverse(&mut buf);
    RealField {
        grid: Arc::clone(grid),
        values: buf.into_iter().map(|c| c.re).collect(),
    }
}

/// Spectral coefficients of `u³` on the dealias-retained modes.
///
/// The input is masked first; the cube is formed on the padded grid, so the
/// retained output modes equal the exact triple convolution.
pub fn dealiased_cube(u: &SpectralField) -> SpectralField {
    u.to_padded().map(|v| v * v * v).to_spectral_masked()
}

/// Spectral coefficients of `u²` on the dealias-retained modes.
pub fn dealiased_square(u: &SpectralField) -> SpectralField {
    u.to_padded().map(|v| v * v).to_spectral_masked()
}
