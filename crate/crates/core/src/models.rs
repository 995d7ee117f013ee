//! Spectral symbols of the three example equations.
//!
//! Every model is diagonal in Fourier space, so the linear operator, the
//! noise covariance and the ε-dependent energy norms reduce to per-mode
//! tables indexed by `μ_k = |k|²`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{config_err, invalid, Result};
use crate::field::{dealiased_cube, SpectralField};
use crate::grid::FourierGrid;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    /// `∂u = (1-ε-εΔ)(Δu + f(u)) + σ dW`
    ChAcHomotopy,
    /// `∂u = -ε²Δ²u + Δu + f(u) + σ dW`
    AcBilaplacian,
    /// `∂u = Δu + f(u) + σ 𝒬_ε dW`
    AcMollifiedNoise,
}

impl Model {
    pub fn as_str(self) -> &'static str {
        match self {
            Model::ChAcHomotopy => "ch_ac_homotopy",
            Model::AcBilaplacian => "ac_bilaplacian",
            Model::AcMollifiedNoise => "ac_mollified_noise",
        }
    }

    /// Largest admissible ε for the model.
    pub fn eps_max(self) -> f64 {
        match self {
            Model::ChAcHomotopy => 0.5,
            Model::AcBilaplacian | Model::AcMollifiedNoise => 1.0,
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mollifier {
    #[default]
    None,
    /// `q(μ) = exp(-ε²μ/2)`
    Exponential,
    /// `q(μ) = 1{μ ≤ ε⁻²}`
    SharpCutoff,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Constant,
    /// `σ₀ / log(1/ε)`
    LogInverse,
    /// `σ₀ / sqrt(log(1/ε))`
    LogInverseSqrt,
    /// `σ₀ ε^exponent`
    Power,
}

impl ScheduleKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScheduleKind::Constant => "constant",
            ScheduleKind::LogInverse => "log_inverse",
            ScheduleKind::LogInverseSqrt => "log_inverse_sqrt",
            ScheduleKind::Power => "power",
        }
    }
}

/// Noise strength as a function of ε.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SigmaSchedule {
    pub kind: ScheduleKind,
    pub amplitude: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exponent: Option<f64>,
}

impl SigmaSchedule {
    pub fn constant(amplitude: f64) -> Self {
        Self {
            kind: ScheduleKind::Constant,
            amplitude,
            exponent: None,
        }
    }

    pub fn log_inverse(amplitude: f64) -> Self {
        Self {
            kind: ScheduleKind::LogInverse,
            amplitude,
            exponent: None,
        }
    }

    pub fn log_inverse_sqrt(amplitude: f64) -> Self {
        Self {
            kind: ScheduleKind::LogInverseSqrt,
            amplitude,
            exponent: None,
        }
    }

    pub fn power(amplitude: f64, exponent: f64) -> Self {
        Self {
            kind: ScheduleKind::Power,
            amplitude,
            exponent: Some(exponent),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude.is_finite() && self.amplitude >= 0.0) {
            return Err(config_err(format!(
                "sigma_schedule.amplitude must be finite and >= 0, got {}",
                self.amplitude
            )));
        }
        match (self.kind, self.exponent) {
            (ScheduleKind::Power, None) => {
                Err(config_err("sigma_schedule.exponent is required for kind = power"))
            }
            (ScheduleKind::Power, Some(e)) if !e.is_finite() => {
                Err(config_err("sigma_schedule.exponent must be finite"))
            }
            (ScheduleKind::Power, _) => Ok(()),
            (_, Some(_)) => Err(config_err(
                "sigma_schedule.exponent is only meaningful for kind = power",
            )),
            _ => Ok(()),
        }
    }

    pub fn sigma(&self, eps: f64) -> Result<f64> {
        self.validate()?;
        if !(eps > 0.0 && eps < 1.0) {
            return Err(invalid(format!("sigma schedule needs eps in (0,1), got {eps}")));
        }
        let log_inv = (1.0 / eps).ln();
        Ok(match self.kind {
            ScheduleKind::Constant => self.amplitude,
            ScheduleKind::LogInverse => self.amplitude / log_inv,
            ScheduleKind::LogInverseSqrt => self.amplitude / log_inv.sqrt(),
            ScheduleKind::Power => self.amplitude * eps.powf(self.exponent.unwrap_or(0.0)),
        })
    }
}

pub fn check_eps(model: Model, eps: f64) -> Result<()> {
    if eps.is_finite() && eps > 0.0 && eps <= model.eps_max() {
        Ok(())
    } else {
        Err(invalid(format!(
            "eps = {eps} outside (0, {}] for model {model}",
            model.eps_max()
        )))
    }
}

pub(crate) fn lambda_raw(model: Model, eps: f64, mu: f64) -> f64 {
    match model {
        Model::ChAcHomotopy => (1.0 - eps + eps * mu) * mu,
        Model::AcBilaplacian => mu + eps * eps * mu * mu,
        Model::AcMollifiedNoise => mu,
    }
}

/// Eigenvalue `λ_k(ε)` of `-A_ε` on a mode with `-Δ` eigenvalue `mu`.
pub fn lambda(model: Model, eps: f64, mu: f64) -> Result<f64> {
    check_eps(model, eps)?;
    if !(mu >= 0.0) {
        return Err(invalid(format!("mu must be >= 0, got {mu}")));
    }
    Ok(lambda_raw(model, eps, mu))
}

/// Noise amplitude `α_k(ε)` of the covariance operator on a mode.
pub fn noise_amp(model: Model, eps: f64, sigma: f64, mu: f64, mollifier: Mollifier) -> f64 {
    match model {
        Model::ChAcHomotopy | Model::AcBilaplacian => sigma,
        Model::AcMollifiedNoise => sigma * mollifier_weight(mollifier, eps, mu),
    }
}

pub fn mollifier_weight(mollifier: Mollifier, eps: f64, mu: f64) -> f64 {
    match mollifier {
        Mollifier::None => 1.0,
        Mollifier::Exponential => (-0.5 * eps * eps * mu).exp(),
        Mollifier::SharpCutoff => {
            if mu * eps * eps <= 1.0 {
                1.0
            } else {
                0.0
            }
        }
    }
}

/// Symbol of the operator in front of `f` in `F_ε`: `1-ε+εμ` for the
/// homotopy, identity otherwise.
pub fn nonlinearity_multiplier(model: Model, eps: f64, mu: f64) -> f64 {
    match model {
        Model::ChAcHomotopy => 1.0 - eps + eps * mu,
        Model::AcBilaplacian | Model::AcMollifiedNoise => 1.0,
    }
}

/// Per-mode weight of the squared `V_ε` norm, `1 + λ_k(ε)`.
pub fn v_eps_weight(model: Model, eps: f64, mu: f64) -> Result<f64> {
    Ok(1.0 + lambda(model, eps, mu)?)
}

/// The standard cubic `f(u) = u - u³`.
pub fn cubic(u: f64) -> f64 {
    u - u * u * u
}

/// `φ² - φ⁴/4 - (f(φ+ψ) - f(ψ))φ`; non-negative for every real pair.
pub fn cubic_gap(phi: f64, psi: f64) -> f64 {
    let p2 = phi * phi;
    p2 - 0.25 * p2 * p2 - (cubic(phi + psi) - cubic(psi)) * phi
}

/// Immutable parameter set for one ε-model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub model: Model,
    pub eps: f64,
    pub sigma: f64,
    #[serde(default)]
    pub mollifier: Mollifier,
    /// Renormalization constant of the limit equation, once resolved.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_zero: Option<f64>,
    /// Whether the Brownian `k = 0` noise mode is simulated.
    #[serde(default = "default_true")]
    pub include_zero_mode: bool,
}

fn default_true() -> bool {
    true
}

impl ModelSpec {
    pub fn new(model: Model, eps: f64, sigma: f64) -> Result<Self> {
        let spec = Self {
            model,
            eps,
            sigma,
            mollifier: match model {
                Model::AcMollifiedNoise => Mollifier::Exponential,
                _ => Mollifier::None,
            },
            c_zero: None,
            include_zero_mode: true,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_mollifier(mut self, mollifier: Mollifier) -> Result<Self> {
        self.mollifier = mollifier;
        self.validate()?;
        Ok(self)
    }

    pub fn with_c_zero(mut self, c_zero: f64) -> Result<Self> {
        self.c_zero = Some(c_zero);
        self.validate()?;
        Ok(self)
    }

    pub fn with_sigma(mut self, sigma: f64) -> Result<Self> {
        self.sigma = sigma;
        self.validate()?;
        Ok(self)
    }

    pub fn with_zero_mode(mut self, include: bool) -> Self {
        self.include_zero_mode = include;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_eps(self.model, self.eps)?;
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(invalid(format!("sigma must be finite and >= 0, got {}", self.sigma)));
        }
        if let Some(c0) = self.c_zero {
            if !(c0.is_finite() && c0 >= 0.0) {
                return Err(invalid(format!("c_zero must be finite and >= 0, got {c0}")));
            }
        }
        if self.model != Model::AcMollifiedNoise && self.mollifier != Mollifier::None {
            return Err(config_err(format!(
                "mollifier applies only to ac_mollified_noise, not {}",
                self.model
            )));
        }
        Ok(())
    }

    pub fn lambda(&self, mu: f64) -> f64 {
        lambda_raw(self.model, self.eps, mu)
    }

    pub fn noise_amp(&self, mu: f64) -> f64 {
        noise_amp(self.model, self.eps, self.sigma, mu, self.mollifier)
    }

    /// The constant `c_ε` of the one-sided cubic estimate.
    pub fn c_eps_threshold(&self) -> f64 {
        match self.model {
            Model::ChAcHomotopy => self.eps.powf(0.25),
            Model::AcBilaplacian | Model::AcMollifiedNoise => 0.0,
        }
    }

    pub fn lambda_table(&self, grid: &FourierGrid) -> Vec<f64> {
        grid.mu().iter().map(|&mu| self.lambda(mu)).collect()
    }

    /// Noise amplitudes per mode; zero outside the dealias mask and, when
    /// disabled, on the constant mode.
    pub fn noise_table(&self, grid: &FourierGrid) -> Vec<f64> {
        let mut alpha: Vec<f64> = grid
            .mu()
            .iter()
            .zip(grid.dealias_mask())
            .map(|(&mu, &keep)| if keep { self.noise_amp(mu) } else { 0.0 })
            .collect();
        if !self.include_zero_mode {
            alpha[0] = 0.0;
        }
        alpha
    }

    pub fn multiplier_table(&self, grid: &FourierGrid) -> Vec<f64> {
        grid.mu()
            .iter()
            .map(|&mu| nonlinearity_multiplier(self.model, self.eps, mu))
            .collect()
    }

    /// Reciprocal `V_ε` weights, i.e. the squared `V_ε'` weights.
    pub fn dual_weights(&self, grid: &FourierGrid) -> Vec<f64> {
        grid.mu().iter().map(|&mu| 1.0 / (1.0 + self.lambda(mu))).collect()
    }
}

/// `f(u) = u - u³` restricted to the dealias-retained modes.
pub(crate) fn cubic_spectral(u: &SpectralField) -> SpectralField {
    let masked = u.masked();
    let cube = dealiased_cube(&masked);
    masked.sub(&cube).expect("same grid")
}

/// Drift `G(u) = f(u) - 3C₀u` of the renormalized limit equation.
pub fn limit_drift(u: &SpectralField, c_zero: f64) -> SpectralField {
    let fu = cubic_spectral(u);
    fu.sub(&u.masked().scale(3.0 * c_zero)).expect("same grid")
}

/// `F_ε(u)` of the model, or the limit drift `G(u)` when `c_zero_term` is set.
pub fn nonlinearity(spec: &ModelSpec, u: &SpectralField, c_zero_term: bool) -> Result<SpectralField> {
    if c_zero_term {
        if spec.model == Model::ChAcHomotopy {
            return Err(config_err(
                "the -3C0 u term belongs to the limit equation and cannot be combined \
                 with the homotopy multiplier (1-eps+eps mu)",
            ));
        }
        let c0 = spec
            .c_zero
            .ok_or_else(|| config_err("c_zero requested but not set on the model spec"))?;
        return Ok(limit_drift(u, c0));
    }
    let fu = cubic_spectral(u);
    Ok(match spec.model {
        Model::ChAcHomotopy => fu.apply_multiplier_unchecked(&spec.multiplier_table(u.grid())),
        Model::AcBilaplacian | Model::AcMollifiedNoise => fu,
    })
}
