//! Fourier grid on the flat torus `[0, 2π)²`.
//!
//! Modes are laid out in the standard discrete-transform order: index
//! `a` along an axis carries the wavenumber `a` for `a < n/2` and `a - n`
//! otherwise. The mode with row `a` and column `b` lives at `a * n + b`.
//! The tables built here are the single source of truth for the
//! index ↔ wavenumber map.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{config_err, Result};

/// Row/column 2D FFT of a square, row-major buffer.
#[derive(Clone)]
pub(crate) struct Fft2d {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Fft2d {
    fn new(planner: &mut FftPlanner<f64>, n: usize) -> Self {
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    fn run(&self, fft: &dyn Fft<f64>, buf: &mut [Complex64]) {
        let n = self.n;
        debug_assert_eq!(buf.len(), n * n);
        let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        fft.process_with_scratch(buf, &mut scratch);
        let mut columns = vec![Complex64::default(); n * n];
        transpose(buf, &mut columns, n);
        fft.process_with_scratch(&mut columns, &mut scratch);
        transpose(&columns, buf, n);
    }

    /// Unnormalized `Σ_x f(x) e^{-ik·x}`.
    pub(crate) fn forward(&self, buf: &mut [Complex64]) {
        self.run(self.forward.as_ref(), buf);
    }

    /// Unnormalized `Σ_k c_k e^{ik·x}`.
    pub(crate) fn inverse(&self, buf: &mut [Complex64]) {
        self.run(self.inverse.as_ref(), buf);
    }
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in 0..n {
            dst[j * n + i] = src[i * n + j];
        }
    }
}

/// Signed wavenumber of axis index `a` on an axis of length `n`.
pub(crate) fn signed_wavenumber(a: usize, n: usize) -> i64 {
    if a < n / 2 {
        a as i64
    } else {
        a as i64 - n as i64
    }
}

/// Axis index of wavenumber `k` on an axis of length `n`.
pub(crate) fn axis_index(k: i64, n: usize) -> usize {
    k.rem_euclid(n as i64) as usize
}

/// Square Fourier grid with `n × n` modes and physical points
/// `x_ij = (2πi/n, 2πj/n)`.
pub struct FourierGrid {
    n: usize,
    padded_n: usize,
    wavenumbers: Vec<(i64, i64)>,
    mu: Vec<f64>,
    dealias_mask: Vec<bool>,
    conjugate: Vec<usize>,
    retained: Vec<usize>,
    fft: Fft2d,
    padded_fft: Fft2d,
}

impl fmt::Debug for FourierGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FourierGrid")
            .field("n", &self.n)
            .field("padded_n", &self.padded_n)
            .field("retained_modes", &self.retained.len())
            .finish()
    }
}

impl PartialEq for FourierGrid {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n
    }
}

/// Builds the shared grid for `n` modes per dimension.
pub fn make_grid(n: usize) -> Result<Arc<FourierGrid>> {
    FourierGrid::new(n).map(Arc::new)
}

impl FourierGrid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 8 || !n.is_multiple_of(2) {
            return Err(config_err(format!(
                "grid size must be an even integer >= 8, got {n}"
            )));
        }
        let cutoff = (n / 4) as i64;
        let mut wavenumbers = Vec::with_capacity(n * n);
        let mut mu = Vec::with_capacity(n * n);
        let mut dealias_mask = Vec::with_capacity(n * n);
        let mut conjugate = Vec::with_capacity(n * n);
        let mut retained = Vec::new();
        for a in 0..n {
            let k1 = signed_wavenumber(a, n);
            for b in 0..n {
                let k2 = signed_wavenumber(b, n);
                let idx = a * n + b;
                wavenumbers.push((k1, k2));
                mu.push((k1 * k1 + k2 * k2) as f64);
                let keep = k1.abs().max(k2.abs()) <= cutoff;
                dealias_mask.push(keep);
                if keep {
                    retained.push(idx);
                }
                conjugate.push(((n - a) % n) * n + (n - b) % n);
            }
        }

        // Products are formed on a finer grid so that cubes of retained
        // modes (|k_i| <= n/4, so |k_i| <= 3n/4 after cubing) never alias
        // back onto the retained shell.
        let padded_n = 3 * n / 2;
        let mut planner = FftPlanner::new();
        let fft = Fft2d::new(&mut planner, n);
        let padded_fft = Fft2d::new(&mut planner, padded_n);

        Ok(Self {
            n,
            padded_n,
            wavenumbers,
            mu,
            dealias_mask,
            conjugate,
            retained,
            fft,
            padded_fft,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Largest retained wavenumber component, `n/4`.
    pub fn dealias_cutoff(&self) -> usize {
        self.n / 4
    }

    pub fn padded_n(&self) -> usize {
        self.padded_n
    }

    pub fn wavenumbers(&self) -> &[(i64, i64)] {
        &self.wavenumbers
    }

    /// Eigenvalues `μ_k = |k|²` of `-Δ`, one per mode.
    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn dealias_mask(&self) -> &[bool] {
        &self.dealias_mask
    }

    /// Mode indices inside the dealias mask, in ascending order.
    pub fn retained(&self) -> &[usize] {
        &self.retained
    }

    /// Index of the mode `-k` for every mode `k`.
    pub fn conjugate(&self) -> &[usize] {
        &self.conjugate
    }

    pub fn is_self_conjugate(&self, idx: usize) -> bool {
        self.conjugate[idx] == idx
    }

    /// Index of wavenumber `k`, if representable on this grid.
    pub fn index_of(&self, k: (i64, i64)) -> Option<usize> {
        let half = (self.n / 2) as i64;
        let inside = |c: i64| (-half..half).contains(&c);
        if inside(k.0) && inside(k.1) {
            Some(axis_index(k.0, self.n) * self.n + axis_index(k.1, self.n))
        } else {
            None
        }
    }

    /// Physical coordinates of grid point `(i, j)`.
    pub fn point(&self, i: usize, j: usize) -> (f64, f64) {
        let h = 2.0 * std::f64::consts::PI / self.n as f64;
        (h * i as f64, h * j as f64)
    }

    pub(crate) fn fft(&self) -> &Fft2d {
        &self.fft
    }

    pub(crate) fn padded_fft(&self) -> &Fft2d {
        &self.padded_fft
    }

    /// Position of retained mode `idx` inside the padded spectrum.
    pub(crate) fn padded_index(&self, idx: usize) -> usize {
        let (k1, k2) = self.wavenumbers[idx];
        axis_index(k1, self.padded_n) * self.padded_n + axis_index(k2, self.padded_n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn n8_wavenumber_span_and_mode_count() {
        let g = FourierGrid::new(8).unwrap();
        assert_eq!(g.len(), 64);
        let mut ks: Vec<i64> = g.wavenumbers().iter().map(|k| k.0).collect();
        ks.sort();
        ks.dedup();
        assert_eq!(ks, vec![-4, -3, -2, -1, 0, 1, 2, 3]);
        // standard ordering: 0, 1, 2, 3, -4, -3, -2, -1 along each axis
        let row: Vec<i64> = (0..8).map(|b| g.wavenumbers()[b].1).collect();
        assert_eq!(row, vec![0, 1, 2, 3, -4, -3, -2, -1]);
    }

    #[test]
    fn n8_dealias_keeps_25_modes() {
        let g = FourierGrid::new(8).unwrap();
        assert_eq!(g.dealias_mask().iter().filter(|&&m| m).count(), 25);
        assert_eq!(g.retained().len(), 25);
    }

    #[test]
    fn rejects_odd_and_small() {
        assert!(FourierGrid::new(7).is_err());
        assert!(FourierGrid::new(6).is_err());
        assert!(FourierGrid::new(0).is_err());
    }

    #[test]
    fn mu_invariants() {
        let g = FourierGrid::new(16).unwrap();
        assert_eq!(g.mu()[0], 0.0);
        assert!(g.mu()[1..].iter().all(|&m| m >= 1.0));
    }

    #[test]
    fn mask_is_centrally_symmetric() {
        let g = FourierGrid::new(32).unwrap();
        for idx in 0..g.len() {
            let c = g.conjugate()[idx];
            assert_eq!(g.dealias_mask()[idx], g.dealias_mask()[c]);
            assert_eq!(g.conjugate()[c], idx);
        }
    }

    #[test]
    fn index_of_roundtrips() {
        let g = FourierGrid::new(16).unwrap();
        for (idx, &k) in g.wavenumbers().iter().enumerate() {
            assert_eq!(g.index_of(k), Some(idx));
        }
        assert_eq!(g.index_of((8, 0)), None);
    }
}
