//! Declarative run configuration.
//!
//! One flat TOML document per run. Keys shared by all commands sit next to
//! command-specific keys; unknown keys are rejected, and every physical
//! parameter is checked before any computation starts.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::experiments::{default_regime_schedules, InitialData, StudyConfig, C_ZERO_EPS_GRID};
use crate::models::{check_eps, Model, ModelSpec, Mollifier, SigmaSchedule};
use crate::solver::Scheme;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyMode {
    #[default]
    Convergence,
    Theorem,
    Regimes,
}

fn default_n() -> usize {
    64
}

fn default_t() -> f64 {
    0.5
}

fn default_dt() -> f64 {
    1e-3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(rename = "T", default = "default_t")]
    pub t_end: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,

    pub model: Model,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_schedule: Option<SigmaSchedule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mollifier: Option<Mollifier>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_zero: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub big_k: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialData>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<Scheme>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub save_every: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub include_zero_mode: Option<bool>,

    /// `study` only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<StudyMode>,
    /// `study` with `mode = "regimes"`; defaults to power(1), log_inverse, constant.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedules: Option<Vec<SigmaSchedule>>,

    /// `simulate` only: times at which fields are dumped.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshots: Option<Vec<f64>>,
    /// `simulate` only: sample index of the noise seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample: Option<u64>,

    /// `renorm` only: box cutoffs for the `C_ε` table.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoffs: Option<Vec<u64>>,
    /// `renorm` only: exponents δ of the series `Σ μ^{δ/2}/λ`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deltas: Option<Vec<f64>>,
}

impl RunConfigFile {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate_common()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    fn validate_common(&self) -> Result<()> {
        if self.eps.is_some() && self.eps_grid.is_some() {
            return Err(config_err("give either eps or eps_grid, not both"));
        }
        if let Some(s) = &self.sigma_schedule {
            s.validate()?;
        }
        if let Some(i) = &self.initial {
            i.validate()?;
        }
        if let Some(c) = self.c_zero {
            if !(c.is_finite() && c >= 0.0) {
                return Err(config_err(format!("c_zero must be finite and >= 0, got {c}")));
            }
        }
        Ok(())
    }

    fn schedule(&self) -> Result<SigmaSchedule> {
        self.sigma_schedule
            .ok_or_else(|| config_err("missing key sigma_schedule"))
    }

    /// The ε values of the run, from `eps` or `eps_grid`.
    pub fn eps_values(&self) -> Result<Vec<f64>> {
        match (&self.eps, &self.eps_grid) {
            (Some(e), None) => Ok(vec![*e]),
            (None, Some(g)) if !g.is_empty() => Ok(g.clone()),
            (None, Some(_)) => Err(config_err("eps_grid must not be empty")),
            _ => Err(config_err("missing key eps or eps_grid")),
        }
    }

    pub fn study_config(&self) -> Result<StudyConfig> {
        let c = self.unchecked_study(self.eps_values()?)?;
        c.validate()?;
        Ok(c)
    }

    fn unchecked_study(&self, eps_grid: Vec<f64>) -> Result<StudyConfig> {
        let mut c = StudyConfig::new(self.model, eps_grid, self.schedule()?);
        c.n = self.n;
        c.t_end = self.t_end;
        c.dt = self.dt;
        c.master_seed = self.master_seed;
        c.gamma = self.gamma;
        c.big_k = self.big_k;
        c.c_zero = self.c_zero;
        if let Some(s) = self.samples {
            c.samples = s;
        }
        if let Some(p) = self.p {
            c.p = p;
        }
        if let Some(i) = &self.initial {
            c.initial = i.clone();
        }
        if let Some(m) = self.mollifier {
            c.mollifier = m;
        }
        if let Some(s) = self.scheme {
            c.scheme = s;
        }
        if let Some(s) = self.save_every {
            c.save_every = s;
        }
        if let Some(z) = self.include_zero_mode {
            c.include_zero_mode = z;
        }
        Ok(c)
    }

    pub fn study_mode(&self) -> StudyMode {
        self.mode.unwrap_or_default()
    }

    pub fn regime_schedules(&self) -> Result<Vec<SigmaSchedule>> {
        match &self.schedules {
            Some(s) if s.is_empty() => Err(config_err("schedules must not be empty")),
            Some(s) => {
                for x in s {
                    x.validate()?;
                }
                Ok(s.clone())
            }
            None => Ok(default_regime_schedules(self.schedule()?.amplitude).to_vec()),
        }
    }

    /// Configuration of a single coupled solve.
    pub fn simulate_config(&self) -> Result<SimulateConfig> {
        let eps = match (self.eps, &self.eps_grid) {
            (Some(e), None) => e,
            (None, Some(_)) => return Err(config_err("simulate takes a single eps, not eps_grid")),
            _ => return Err(config_err("missing key eps")),
        };
        check_eps(self.model, eps)?;
        // the study rule ε < 1/2 does not apply to a single solve
        let study = self.unchecked_study(vec![eps])?;
        study.initial.validate()?;
        let grid = crate::grid::make_grid(study.n)?;
        let steps = study.solve_config(&grid)?.steps()?;
        study.spec(eps, 0.0)?;
        let snapshots = self.snapshots.clone().unwrap_or_default();
        for &t in &snapshots {
            if !(t >= 0.0 && t <= self.t_end) {
                return Err(config_err(format!(
                    "snapshot time {t} lies outside [0, {}]",
                    self.t_end
                )));
            }
        }
        Ok(SimulateConfig {
            eps,
            sample: self.sample.unwrap_or(0),
            snapshots,
            steps,
            study,
        })
    }

    /// Parameters of the renormalization tables.
    pub fn renorm_config(&self) -> Result<RenormConfig> {
        let schedule = self.schedule()?;
        let eps = match (&self.eps, &self.eps_grid) {
            (None, None) => C_ZERO_EPS_GRID.to_vec(),
            _ => self.eps_values()?,
        };
        for &e in &eps {
            check_eps(self.model, e)?;
            schedule.sigma(e)?;
        }
        let cutoffs = self.cutoffs.clone().unwrap_or_else(|| vec![1, 8, 32, 128]);
        if cutoffs.contains(&0) {
            return Err(config_err("cutoffs must be >= 1"));
        }
        let deltas = self.deltas.clone().unwrap_or_else(|| vec![0.0]);
        if deltas.iter().any(|d| !(*d >= 0.0 && *d < 2.0)) {
            return Err(config_err("deltas must lie in [0, 2)"));
        }
        let mollifier = match (self.model, self.mollifier) {
            (Model::AcMollifiedNoise, m) => m.unwrap_or(Mollifier::Exponential),
            (_, None | Some(Mollifier::None)) => Mollifier::None,
            _ => return Err(config_err("mollifier applies only to ac_mollified_noise")),
        };
        Ok(RenormConfig {
            model: self.model,
            schedule,
            mollifier,
            eps,
            cutoffs,
            deltas,
            n: self.n,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulateConfig {
    pub eps: f64,
    pub sample: u64,
    pub snapshots: Vec<f64>,
    pub steps: usize,
    pub study: StudyConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenormConfig {
    pub model: Model,
    pub schedule: SigmaSchedule,
    pub mollifier: Mollifier,
    pub eps: Vec<f64>,
    pub cutoffs: Vec<u64>,
    pub deltas: Vec<f64>,
    pub n: usize,
}

impl RenormConfig {
    pub fn spec(&self, eps: f64) -> Result<ModelSpec> {
        let spec = ModelSpec::new(self.model, eps, self.schedule.sigma(eps)?)?;
        if self.model == Model::AcMollifiedNoise {
            spec.with_mollifier(self.mollifier)
        } else {
            Ok(spec)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const STUDY: &str = r#"
        n = 32
        T = 0.1
        dt = 0.01
        master_seed = 7
        model = "ch_ac_homotopy"
        eps_grid = [0.2, 0.1]
        samples = 4
        mode = "theorem"
        sigma_schedule = { kind = "log_inverse", amplitude = 0.5 }
        initial = { kind = "cosines", amplitudes = [0.2, 0.1] }
    "#;

    #[test]
    fn round_trip() {
        let a = RunConfigFile::from_toml_str(STUDY).unwrap();
        let b = RunConfigFile::from_toml_str(&a.to_toml_string().unwrap()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.study_config().unwrap(), b.study_config().unwrap());
    }

    #[test]
    fn unknown_key_rejected() {
        let text = format!("{STUDY}\nbogus = 1\n");
        assert!(RunConfigFile::from_toml_str(&text).unwrap_err().is_usage_error());
    }

    #[test]
    fn missing_model_rejected() {
        let text = STUDY.replace("model = \"ch_ac_homotopy\"", "");
        assert!(RunConfigFile::from_toml_str(&text).is_err());
    }

    #[test]
    fn snapshots_checked() {
        let base = STUDY.replace("eps_grid = [0.2, 0.1]", "eps = 0.2");
        let ok = RunConfigFile::from_toml_str(&format!("{base}\nsnapshots = [0.0, 0.1]\n")).unwrap();
        assert_eq!(ok.simulate_config().unwrap().steps, 10);
        let bad = RunConfigFile::from_toml_str(&format!("{base}\nsnapshots = [0.2]\n")).unwrap();
        assert!(bad.simulate_config().is_err());
    }

    #[test]
    fn eps_range_enforced() {
        let text = STUDY.replace("eps_grid = [0.2, 0.1]", "eps_grid = [0.7]");
        let cfg = RunConfigFile::from_toml_str(&text).unwrap();
        assert!(cfg.study_config().is_err());
    }
}
