//! Stochastic convolution `Z_ε` as a sum of independent per-mode
//! Ornstein–Uhlenbeck integrals, advanced with the exact transition law.
//!
//! Gaussian draws are counter-based: the increment for a given
//! `(master seed, sample, step)` comes from a ChaCha stream keyed by the
//! master seed, selected by the sample index and positioned by the step,
//! and modes are filled in ascending index order. Draws therefore never
//! depend on scheduling or on ε.

use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::field::SpectralField;
use crate::grid::FourierGrid;
use crate::models::ModelSpec;
use crate::trajectory::Trajectory;

/// Each step owns a window of 2^36 stream words (far more than any grid uses).
const STEP_WORD_SHIFT: u32 = 36;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NoiseSeed {
    pub master: u64,
    pub sample: u64,
}

impl NoiseSeed {
    pub fn new(master: u64, sample: u64) -> Self {
        Self { master, sample }
    }

    fn rng_at(&self, step: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(self.sample);
        rng.set_word_pos(u128::from(step) << STEP_WORD_SHIFT);
        rng
    }
}

/// Unit-variance complex Gaussian increments for every mode of `grid`.
///
/// Draws happen for the canonical half of the lattice only; `-k` receives
/// the exact conjugate. Self-conjugate modes (including `k = 0`) get a
/// real `N(0,1)` draw, all others independent `N(0,1/2)` real and
/// imaginary parts.
pub fn increments_for(grid: &FourierGrid, seed: NoiseSeed, step: u64) -> Vec<Complex64> {
    let mut rng = seed.rng_at(step);
    let conj = grid.conjugate();
    let mut out = vec![Complex64::default(); grid.len()];
    let half = std::f64::consts::FRAC_1_SQRT_2;
    for idx in 0..grid.len() {
        let c = conj[idx];
        if c == idx {
            out[idx] = Complex64::new(rng.sample(StandardNormal), 0.0);
        } else if idx < c {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            let z = Complex64::new(re * half, im * half);
            out[idx] = z;
            out[c] = z.conj();
        }
    }
    out
}

/// Variance `(1 - e^{-2λt}) / (2λ)` of the OU integral, `t` when `λ = 0`.
pub fn ou_variance(lambda: f64, t: f64) -> f64 {
    if lambda > 0.0 {
        -(-2.0 * lambda * t).exp_m1() / (2.0 * lambda)
    } else {
        t
    }
}

fn transition(lambda: f64, h: f64) -> (f64, f64) {
    ((-lambda * h).exp(), ou_variance(lambda, h).sqrt())
}

/// Exact one-step update of `dI = -λ I dt + dβ`.
pub fn ou_step(prev: Complex64, lambda: f64, h: f64, draw: Complex64) -> Result<Complex64> {
    if !(h > 0.0) {
        return Err(invalid(format!("time step must be > 0, got {h}")));
    }
    if !(lambda >= 0.0) {
        return Err(invalid(format!("lambda must be >= 0, got {lambda}")));
    }
    let (decay, scale) = transition(lambda, h);
    Ok(prev * decay + draw * scale)
}

/// The integrals `I_k(t)` of one sample, with the model's `λ` and `α` tables.
#[derive(Clone, Debug)]
pub struct OUState {
    grid: Arc<FourierGrid>,
    t: f64,
    values: Vec<Complex64>,
    lambda: Vec<f64>,
    alpha: Vec<f64>,
}

impl OUState {
    pub fn new(spec: &ModelSpec, grid: &Arc<FourierGrid>) -> Self {
        Self {
            grid: Arc::clone(grid),
            t: 0.0,
            values: vec![Complex64::default(); grid.len()],
            lambda: spec.lambda_table(grid),
            alpha: spec.noise_table(grid),
        }
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn advance(&mut self, h: f64, draws: &[Complex64]) -> Result<()> {
        if draws.len() != self.values.len() {
            return Err(invalid("draw count does not match the grid"));
        }
        for ((v, &lam), &d) in self.values.iter_mut().zip(&self.lambda).zip(draws) {
            *v = ou_step(*v, lam, h, d)?;
        }
        self.t += h;
        Ok(())
    }

    /// `Z = Σ α_k I_k e_k`.
    pub fn z(&self) -> SpectralField {
        let coeffs = self
            .values
            .iter()
            .zip(&self.alpha)
            .map(|(v, &a)| v * a)
            .collect();
        SpectralField::from_coeffs_unchecked(&self.grid, coeffs)
    }
}

/// Step-by-step sampler of one `Z_ε` path with a fixed step `h`.
#[derive(Clone, Debug)]
pub struct NoisePath {
    state: OUState,
    seed: NoiseSeed,
    step: u64,
    h: f64,
    decay: Vec<f64>,
    scale: Vec<f64>,
}

impl NoisePath {
    pub fn new(spec: &ModelSpec, grid: &Arc<FourierGrid>, h: f64, seed: NoiseSeed) -> Result<Self> {
        if !(h > 0.0) {
            return Err(invalid(format!("time step must be > 0, got {h}")));
        }
        let state = OUState::new(spec, grid);
        let (decay, scale) = state.lambda.iter().map(|&l| transition(l, h)).unzip();
        Ok(Self {
            state,
            seed,
            step: 0,
            h,
            decay,
            scale,
        })
    }

    pub fn t(&self) -> f64 {
        self.state.t
    }

    pub fn z(&self) -> SpectralField {
        self.state.z()
    }

    pub fn state(&self) -> &OUState {
        &self.state
    }

    pub fn advance(&mut self) {
        let draws = increments_for(&self.state.grid, self.seed, self.step);
        for (i, v) in self.state.values.iter_mut().enumerate() {
            *v = *v * self.decay[i] + draws[i] * self.scale[i];
        }
        self.step += 1;
        self.state.t = self.step as f64 * self.h;
    }
}

/// Samples `Z_ε` at `t_j = j·t_end/steps`, keeping every `save_every`-th snapshot.
pub fn sample_z_path_every(
    spec: &ModelSpec,
    grid: &Arc<FourierGrid>,
    t_end: f64,
    steps: usize,
    save_every: usize,
    seed: NoiseSeed,
) -> Result<Trajectory> {
    if steps == 0 || save_every == 0 || !steps.is_multiple_of(save_every) {
        return Err(invalid(format!(
            "need steps >= 1 divisible by save_every >= 1 (steps={steps}, save_every={save_every})"
        )));
    }
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(invalid(format!("t_end must be > 0, got {t_end}")));
    }
    let h = t_end / steps as f64;
    let mut path = NoisePath::new(spec, grid, h, seed)?;
    let mut traj = Trajectory::new(format!("z[{} eps={} seed={}:{}]", spec.model, spec.eps, seed.master, seed.sample));
    traj.push(0.0, path.z())?;
    for j in 1..=steps {
        path.advance();
        if j % save_every == 0 {
            traj.push(j as f64 * h, path.z())?;
        }
    }
    Ok(traj)
}

/// Samples `Z_ε` at every `t_j = j·t_end/steps`, `j = 0..=steps`.
pub fn sample_z_path(
    spec: &ModelSpec,
    grid: &Arc<FourierGrid>,
    t_end: f64,
    steps: usize,
    seed: NoiseSeed,
) -> Result<Trajectory> {
    sample_z_path_every(spec, grid, t_end, steps, 1, seed)
}

/// Exact `E Σ_k w_k |Z_k(t)|²` for per-mode weights `w`.
pub fn expected_weighted_sq(spec: &ModelSpec, grid: &FourierGrid, t: f64, weights: &[f64]) -> f64 {
    let lambda = spec.lambda_table(grid);
    let alpha = spec.noise_table(grid);
    lambda
        .iter()
        .zip(&alpha)
        .zip(weights)
        .map(|((&l, &a), &w)| w * a * a * ou_variance(l, t))
        .sum()
}

/// Exact `E‖Z_ε(t)‖²_{L²}`, equal to the mean of `Z²` at any point.
pub fn expected_l2_sq(spec: &ModelSpec, grid: &FourierGrid, t: f64) -> f64 {
    expected_weighted_sq(spec, grid, t, &vec![1.0; grid.len()])
}

/// Exact `E‖Z_ε(t)‖²_{H^{-1}}`.
pub fn expected_h_minus1_sq(spec: &ModelSpec, grid: &FourierGrid, t: f64) -> f64 {
    let w: Vec<f64> = grid.mu().iter().map(|m| 1.0 / (1.0 + m)).collect();
    expected_weighted_sq(spec, grid, t, &w)
}
