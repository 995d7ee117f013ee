//! Renormalization constants `C_ε = Σ_{k≠0} α_k²/(2λ_k)`, their ε → 0
//! limit, the Wick square, and the lattice series behind them.
//!
//! Lattice sums run over the box `0 < max(|k₁|,|k₂|) ≤ K`. Rows are summed
//! in parallel with compensated accumulation and then reduced in row order,
//! so results do not depend on the thread count.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{lp_time_norm, sobolev_weights, weighted_sq};
use crate::error::{config_err, invalid, Result};
use crate::field::{dealiased_cube, dealiased_square, SpectralField};
use crate::grid::FourierGrid;
use crate::models::{Model, ModelSpec, Mollifier, ScheduleKind, SigmaSchedule};
use crate::noise::{expected_l2_sq, sample_z_path, NoiseSeed};
use crate::stats::MeanSe;

/// Neumaier's compensated summation.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// `Σ_{0 < max|k_i| ≤ K} g(μ_k)`.
pub fn box_sum(cutoff: u64, g: impl Fn(f64) -> f64 + Sync) -> f64 {
    let k = cutoff as i64;
    let rows: Vec<f64> = (-k..=k)
        .into_par_iter()
        .map(|k1| {
            let mut acc = CompensatedSum::default();
            for k2 in -k..=k {
                if k1 != 0 || k2 != 0 {
                    acc.add(g((k1 * k1 + k2 * k2) as f64));
                }
            }
            acc.value()
        })
        .collect();
    let mut total = CompensatedSum::default();
    rows.into_iter().for_each(|r| total.add(r));
    total.value()
}

/// Mode set for `c_eps`.
#[derive(Clone, Copy, Debug)]
pub enum Cutoff<'a> {
    /// All `0 < max|k_i| ≤ K`.
    Box(u64),
    /// The nonzero dealias-retained modes of a simulation grid.
    Grid(&'a FourierGrid),
}

/// `C_ε = Σ_{k≠0} α_k(ε)²/(2λ_k(ε))` over the chosen modes.
pub fn c_eps(spec: &ModelSpec, cutoff: Cutoff<'_>) -> Result<f64> {
    spec.validate()?;
    Ok(match cutoff {
        Cutoff::Box(0) => return Err(invalid("cutoff K must be >= 1")),
        Cutoff::Box(k) => box_sum(k, |mu| {
            let a = spec.noise_amp(mu);
            a * a / (2.0 * spec.lambda(mu))
        }),
        Cutoff::Grid(grid) => c_eps_grid(spec, grid),
    })
}

pub fn c_eps_grid(spec: &ModelSpec, grid: &FourierGrid) -> f64 {
    let mut acc = CompensatedSum::default();
    for &idx in grid.retained() {
        let mu = grid.mu()[idx];
        if idx != 0 {
            let a = spec.noise_amp(mu);
            acc.add(a * a / (2.0 * spec.lambda(mu)));
        }
    }
    acc.value()
}

/// Exact `E mean(Z_ε(t)²) = Σ_k α_k²(1 - e^{-2λ_k t})/(2λ_k)` on the grid.
pub fn c_grid_at(spec: &ModelSpec, grid: &FourierGrid, t: f64) -> f64 {
    expected_l2_sq(spec, grid, t)
}

/// `Z² - c` with the square formed on the retained modes.
pub fn wick_square(z: &SpectralField, c: f64) -> SpectralField {
    dealiased_square(z).shift_mean(-c)
}

/// `Σ_{0<max|k_i|≤K} μ_k^{δ/2}/λ_k(ε)`.
pub fn series_sum(model: Model, eps: f64, delta: f64, cutoff: u64) -> Result<f64> {
    let spec = ModelSpec::new(model, eps, 1.0)?;
    check_delta(delta)?;
    Ok(box_sum(cutoff, |mu| mu.powf(0.5 * delta) / spec.lambda(mu)))
}

fn check_delta(delta: f64) -> Result<()> {
    if (0.0..2.0).contains(&delta) {
        Ok(())
    } else {
        Err(invalid(format!("delta must lie in [0, 2), got {delta}")))
    }
}

/// Coercivity constant `κ` with `λ_k(ε) ≥ κ μ_k²`.
fn quartic_coercivity(spec: &ModelSpec) -> Option<f64> {
    match spec.model {
        Model::ChAcHomotopy => Some(spec.eps),
        Model::AcBilaplacian => Some(spec.eps * spec.eps),
        Model::AcMollifiedNoise => None,
    }
}

/// Upper bound on `Σ_{max|k_i|>K} μ^{δ/2}/λ_k` (with `α²/σ²` weights for
/// the mollified model). A shell `max|k_i| = m` holds `8m` points with
/// `m² ≤ μ ≤ 2m²`.
fn tail_bound(spec: &ModelSpec, delta: f64, k: u64) -> Result<f64> {
    let kf = k as f64;
    if let Some(kappa) = quartic_coercivity(spec) {
        return Ok(8.0 * 2f64.powf(0.5 * delta) * kf.powf(delta - 2.0) / (kappa * (2.0 - delta)));
    }
    let e2 = spec.eps * spec.eps;
    match spec.mollifier {
        Mollifier::SharpCutoff if kf * kf * e2 >= 1.0 => Ok(0.0),
        Mollifier::SharpCutoff => Ok(f64::INFINITY),
        Mollifier::Exponential if delta == 0.0 => Ok(4.0 * (-e2 * kf * kf).exp() / (e2 * kf * kf)),
        _ => Err(config_err(
            "series diverges: ac_mollified_noise needs a mollifier and delta = 0",
        )),
    }
}

/// Largest box cutoff summed directly; beyond it the full-lattice value
/// comes from [`c_eps_lattice`].
pub const MAX_DIRECT_CUTOFF: u64 = 8192;

/// Smallest cutoff (up to one refinement pass) whose analytic tail is
/// below `rel_tol` times the partial sum.
pub fn tail_tight_cutoff(spec: &ModelSpec, delta: f64, rel_tol: f64) -> Result<u64> {
    tail_tight_cutoff_capped(spec, delta, rel_tol, u64::MAX)?
        .ok_or_else(|| invalid("tail-tight cutoff did not converge"))
}

/// As [`tail_tight_cutoff`], but `None` as soon as the cutoff would exceed
/// `cap`. Nothing beyond `cap` is summed.
pub fn tail_tight_cutoff_capped(spec: &ModelSpec, delta: f64, rel_tol: f64, cap: u64) -> Result<Option<u64>> {
    check_delta(delta)?;
    let unit = spec.clone().with_sigma(1.0)?;
    let weight = |mu: f64| unit.noise_amp(mu).powi(2) * mu.powf(0.5 * delta) / unit.lambda(mu);
    let mut k = 16u64;
    for _ in 0..60 {
        if k > cap {
            return Ok(None);
        }
        let partial = box_sum(k, weight);
        if tail_bound(spec, delta, k)? < rel_tol * partial {
            return Ok(Some(k));
        }
        let next = match quartic_coercivity(spec) {
            Some(kappa) => {
                let c = 8.0 * 2f64.powf(0.5 * delta) / (kappa * (2.0 - delta) * rel_tol * partial);
                c.powf(1.0 / (2.0 - delta)).min(u64::MAX as f64 / 4.0).ceil() as u64
            }
            None => 2 * k,
        };
        k = next.max(k + 1);
    }
    Ok(None)
}

/// `C_ε` to relative accuracy 1e-4: the box sum at the tail-tight cutoff
/// when that cutoff is at most [`MAX_DIRECT_CUTOFF`], else the full-lattice
/// value. The cutoff is `None` in the second case.
pub fn c_eps_converged(spec: &ModelSpec) -> Result<(f64, Option<u64>)> {
    match tail_tight_cutoff_capped(spec, 0.0, 1e-4, MAX_DIRECT_CUTOFF)? {
        Some(k) => Ok((c_eps(spec, Cutoff::Box(k))?, Some(k))),
        None => Ok((c_eps_lattice(spec)?, None)),
    }
}

/// `θ(t)² - 1` with `θ(t) = Σ_{n∈ℤ} e^{-tn²}`, using the Jacobi transform
/// for `t < 1`.
fn lattice_theta_minus_one(t: f64) -> f64 {
    if t >= 1.0 {
        let mut tail = 0.0;
        for n in 1.. {
            let term = (-t * (n * n) as f64).exp();
            tail += term;
            if term < 1e-18 * tail {
                break;
            }
        }
        let q = 2.0 * tail;
        q * (q + 2.0)
    } else {
        let mut e = 0.0;
        for n in 1.. {
            let term = (-std::f64::consts::PI.powi(2) * (n * n) as f64 / t).exp();
            e += term;
            if term <= 1e-18 * (1.0 + e) {
                break;
            }
        }
        let theta = (std::f64::consts::PI / t).sqrt() * (1.0 + 2.0 * e);
        theta * theta - 1.0
    }
}

/// Composite Simpson rule of `∫ f(t) dt` over `[t_lo, t_hi]` in `s = ln t`.
fn log_simpson(t_lo: f64, t_hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let (a, b) = (t_lo.ln(), t_hi.ln());
    let n = (((b - a) / 2e-3).ceil() as usize).max(2).next_multiple_of(2);
    let h = (b - a) / n as f64;
    let g = |s: f64| {
        let t = s.exp();
        t * f(t)
    };
    let mut acc = CompensatedSum::default();
    for i in 0..=n {
        let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
        acc.add(w * g(a + i as f64 * h));
    }
    acc.value() * h / 3.0
}

/// Upper end of the heat-kernel integrals: `θ(t)² - 1 < 5e-21` beyond it.
const THETA_T_MAX: f64 = 50.0;

/// `Σ_{k≠0} (1/μ_k - 1/(μ_k + m)) = ∫₀^∞ (θ(t)² - 1)(1 - e^{-tm}) dt`.
fn resolvent_difference_sum(m: f64) -> f64 {
    log_simpson(1e-16 / m, THETA_T_MAX, |t| lattice_theta_minus_one(t) * -(-t * m).exp_m1())
}

/// `C_ε` summed over all of `ℤ² \ {0}`, with no cutoff.
///
/// The quartic models factor as `1/λ = c(1/μ - 1/(μ + m))` and the
/// exponential mollifier as `e^{-ε²μ}/μ = ∫_{ε²}^∞ e^{-tμ} dt`, so each sum is
/// a one-dimensional integral of `θ(t)²`. The sharp mollifier is a finite
/// sum over `ε²μ ≤ 1`. Fails for the unmollified `ac_mollified_noise`,
/// whose constant is infinite.
pub fn c_eps_lattice(spec: &ModelSpec) -> Result<f64> {
    spec.validate()?;
    let (eps, half_s2) = (spec.eps, 0.5 * spec.sigma * spec.sigma);
    Ok(match (spec.model, spec.mollifier) {
        (Model::ChAcHomotopy, _) => half_s2 / (1.0 - eps) * resolvent_difference_sum((1.0 - eps) / eps),
        (Model::AcBilaplacian, _) => half_s2 * resolvent_difference_sum(1.0 / (eps * eps)),
        (Model::AcMollifiedNoise, Mollifier::Exponential) => {
            half_s2 * log_simpson(eps * eps, THETA_T_MAX, lattice_theta_minus_one)
        }
        (Model::AcMollifiedNoise, Mollifier::SharpCutoff) => c_eps(spec, Cutoff::Box((1.0 / eps).floor() as u64))?,
        (Model::AcMollifiedNoise, Mollifier::None) => {
            return Err(config_err("C_eps is infinite for ac_mollified_noise without a mollifier"))
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `σ_ε² log(1/ε) → 0`
    Zero,
    Finite,
    /// `σ_ε² log(1/ε) → ∞`
    Divergent,
}

impl Regime {
    pub fn of(schedule: &SigmaSchedule) -> Self {
        match schedule.kind {
            ScheduleKind::Power if schedule.exponent.unwrap_or(0.0) > 0.0 => Regime::Zero,
            ScheduleKind::Power | ScheduleKind::Constant => Regime::Divergent,
            ScheduleKind::LogInverse | ScheduleKind::LogInverseSqrt => Regime::Finite,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Regime::Zero => "C0=0",
            Regime::Finite => "C0 finite",
            Regime::Divergent => "C0 divergent",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CEpsRow {
    pub eps: f64,
    pub sigma: f64,
    /// Box cutoff, or `None` for the full-lattice value.
    pub cutoff: Option<u64>,
    pub c_eps: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CZeroEstimate {
    pub regime: Regime,
    pub rows: Vec<CEpsRow>,
    /// `|C_{ε_{i+1}} - C_{ε_i}|` along the ε grid.
    pub differences: Vec<f64>,
    /// `None` when the constant diverges.
    pub c_zero: Option<f64>,
}

/// Evaluates `C_ε` along a decreasing ε grid with [`c_eps_converged`] and
/// extrapolates to ε → 0 by fitting `a + b/log(1/ε)` through the last two
/// points.
pub fn c_zero_estimate(model: Model, schedule: &SigmaSchedule, eps_grid: &[f64]) -> Result<CZeroEstimate> {
    let mollifier = ModelSpec::new(model, 0.5, 0.0)?.mollifier;
    c_zero_estimate_mollified(model, mollifier, schedule, eps_grid)
}

/// [`c_zero_estimate`] with an explicit mollifier for `ac_mollified_noise`.
pub fn c_zero_estimate_mollified(
    model: Model,
    mollifier: Mollifier,
    schedule: &SigmaSchedule,
    eps_grid: &[f64],
) -> Result<CZeroEstimate> {
    schedule.validate()?;
    if eps_grid.len() < 2 {
        return Err(invalid("c_zero_estimate needs at least two eps values"));
    }
    if eps_grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(invalid("eps grid must be strictly decreasing"));
    }
    let regime = Regime::of(schedule);
    let mut rows = Vec::with_capacity(eps_grid.len());
    for &eps in eps_grid {
        let sigma = schedule.sigma(eps)?;
        let mut spec = ModelSpec::new(model, eps, sigma)?;
        if model == Model::AcMollifiedNoise {
            spec = spec.with_mollifier(mollifier)?;
        }
        let (c, cutoff) = c_eps_converged(&spec)?;
        rows.push(CEpsRow {
            eps,
            sigma,
            cutoff,
            c_eps: c,
        });
    }
    let differences = rows.windows(2).map(|w| (w[1].c_eps - w[0].c_eps).abs()).collect();
    let c_zero = match regime {
        Regime::Zero => Some(0.0),
        Regime::Divergent => None,
        Regime::Finite => {
            let (a, b) = (&rows[rows.len() - 2], &rows[rows.len() - 1]);
            let (xa, xb) = (1.0 / (1.0 / a.eps).ln(), 1.0 / (1.0 / b.eps).ln());
            let slope = (b.c_eps - a.c_eps) / (xb - xa);
            Some((b.c_eps - slope * xb).max(0.0))
        }
    };
    Ok(CZeroEstimate {
        regime,
        rows,
        differences,
        c_zero,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub eps: f64,
    /// Box cutoff, or `None` for the full-lattice value.
    pub cutoff: Option<u64>,
    pub sum: f64,
    /// `sum / log(1/ε)`
    pub ratio_to_log: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesReport {
    pub model: Model,
    pub delta: f64,
    pub rows: Vec<SeriesRow>,
    /// Least-squares slope of `log(sum)` against `log(ε)`.
    pub log_log_slope: f64,
    /// `(max - min)/mean` of `ratio_to_log`.
    pub ratio_spread: f64,
}

pub fn series_asymptotics(model: Model, eps_grid: &[f64], delta: f64) -> Result<SeriesReport> {
    check_delta(delta)?;
    if model == Model::AcMollifiedNoise {
        return Err(config_err("the unmollified series diverges for ac_mollified_noise"));
    }
    if eps_grid.is_empty() {
        return Err(invalid("empty eps grid"));
    }
    let mut rows = Vec::with_capacity(eps_grid.len());
    for &eps in eps_grid {
        if !(eps > 0.0 && eps < 0.5) {
            return Err(invalid(format!("series eps must lie in (0, 1/2), got {eps}")));
        }
        let spec = ModelSpec::new(model, eps, 1.0)?;
        let (sum, cutoff) = match tail_tight_cutoff_capped(&spec, delta, 1e-4, MAX_DIRECT_CUTOFF)? {
            Some(k) => (series_sum(model, eps, delta, k)?, Some(k)),
            None if delta == 0.0 => (2.0 * c_eps_lattice(&spec)?, None),
            None => {
                return Err(invalid(format!(
                    "series at eps = {eps} needs a box cutoff above {MAX_DIRECT_CUTOFF}"
                )))
            }
        };
        rows.push(SeriesRow {
            eps,
            cutoff,
            sum,
            ratio_to_log: sum / (1.0 / eps).ln(),
        });
    }
    let eps: Vec<f64> = rows.iter().map(|r| r.eps).collect();
    let sums: Vec<f64> = rows.iter().map(|r| r.sum).collect();
    let ratios: Vec<f64> = rows.iter().map(|r| r.ratio_to_log).collect();
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let spread = ratios.iter().copied().fold(f64::MIN, f64::max) - ratios.iter().copied().fold(f64::MAX, f64::min);
    Ok(SeriesReport {
        model,
        delta,
        log_log_slope: if rows.len() > 1 { crate::stats::log_log_slope(&eps, &sums) } else { f64::NAN },
        ratio_spread: spread / mean,
        rows,
    })
}

/// Monte Carlo statistics of the Wick square and the cube of `Z_ε` at one ε.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WickStats {
    pub eps: f64,
    pub sigma: f64,
    pub samples: usize,
    pub c_zero: f64,
    /// `E‖Z² - C_t^{grid}‖²_{L²([0,T],H^{-1})}`
    pub wick_grid: MeanSe,
    /// `E‖Z² - C₀‖²_{L²([0,T],H^{-1})}`
    pub wick_c_zero: MeanSe,
    /// `E‖Z³‖²_{L²([0,T],H^{-1})}`
    pub cube: MeanSe,
    /// Spatial mean of `Z²(T)`.
    pub mean_z2_end: MeanSe,
    /// Its exact expectation.
    pub exact_mean_z2_end: f64,
    /// Per snapshot, the mean over samples of the `k = 0` coefficient of
    /// `Z² - C_t^{grid}`, in units of its standard error.
    pub centering_z_scores: Vec<f64>,
}

struct WickSample {
    wick_grid: f64,
    wick_c_zero: f64,
    cube: f64,
    mean_z2_end: f64,
    k0: Vec<f64>,
}

fn wick_sample(
    spec: &ModelSpec,
    grid: &Arc<FourierGrid>,
    t_end: f64,
    steps: usize,
    seed: NoiseSeed,
    c_zero: f64,
    centering: &[f64],
) -> Result<WickSample> {
    let path = sample_z_path(spec, grid, t_end, steps, seed)?;
    let w = sobolev_weights(grid, -1.0);
    let mut grid_sq = Vec::with_capacity(path.len());
    let mut c0_sq = Vec::with_capacity(path.len());
    let mut cube_sq = Vec::with_capacity(path.len());
    let mut k0 = Vec::with_capacity(path.len());
    for (z, &c_t) in path.snapshots().iter().zip(centering) {
        let sq = dealiased_square(z);
        let centred = sq.shift_mean(-c_t);
        k0.push(centred.coeffs()[0].re);
        grid_sq.push(weighted_sq(&centred, &w).sqrt());
        c0_sq.push(weighted_sq(&sq.shift_mean(-c_zero), &w).sqrt());
        cube_sq.push(weighted_sq(&dealiased_cube(z), &w).sqrt());
    }
    Ok(WickSample {
        wick_grid: lp_time_norm(&grid_sq, 2.0, t_end)?.powi(2),
        wick_c_zero: lp_time_norm(&c0_sq, 2.0, t_end)?.powi(2),
        cube: lp_time_norm(&cube_sq, 2.0, t_end)?.powi(2),
        mean_z2_end: path.last().map(|z| z.l2_norm_sq()).unwrap_or(0.0),
        k0,
    })
}

/// Wick statistics over `samples` paths per spec; sample `i` uses the
/// seed `(master_seed, i)` for every spec, so paths are coupled across ε.
pub fn wick_convergence_study(
    specs: &[ModelSpec],
    grid: &Arc<FourierGrid>,
    t_end: f64,
    steps: usize,
    samples: usize,
    master_seed: u64,
    c_zero: f64,
) -> Result<Vec<WickStats>> {
    if samples == 0 {
        return Err(invalid("samples must be >= 1"));
    }
    specs
        .iter()
        .map(|spec| {
            let centering: Vec<f64> = (0..=steps)
                .map(|j| c_grid_at(spec, grid, j as f64 * t_end / steps as f64))
                .collect();
            let runs = (0..samples as u64)
                .into_par_iter()
                .map(|i| wick_sample(spec, grid, t_end, steps, NoiseSeed::new(master_seed, i), c_zero, &centering))
                .collect::<Result<Vec<_>>>()?;
            let col = |f: &dyn Fn(&WickSample) -> f64| -> MeanSe {
                MeanSe::from_samples(&runs.iter().map(f).collect::<Vec<_>>())
            };
            let centering_z_scores = (0..centering.len())
                .map(|j| {
                    let m = col(&|r| r.k0[j]);
                    if m.se > 0.0 {
                        m.mean / m.se
                    } else {
                        0.0
                    }
                })
                .collect();
            Ok(WickStats {
                eps: spec.eps,
                sigma: spec.sigma,
                samples,
                c_zero,
                wick_grid: col(&|r| r.wick_grid),
                wick_c_zero: col(&|r| r.wick_c_zero),
                cube: col(&|r| r.cube),
                mean_z2_end: col(&|r| r.mean_z2_end),
                exact_mean_z2_end: c_grid_at(spec, grid, t_end),
                centering_z_scores,
            })
        })
        .collect()
}
