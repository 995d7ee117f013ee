//! Time stepping for the transformed random PDE, the deterministic
//! ε-models and the renormalized limit equation.
//!
//! All equations share the diagonal form `∂w = -Λw + N(w)` and both schemes
//! reduce to `w⁺_k = a_k w_k + b_k N̂_k` with per-mode factors fixed by
//! `(λ_k, dt)`:
//!
//! * IMEX: `a = 1/(1+dtλ)`, `b = dt/(1+dtλ)`
//! * exponential Euler: `a = e^{-λdt}`, `b = dt·φ₁(-λdt)`

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::field::{check_same_grid, SpectralField};
use crate::grid::FourierGrid;
use crate::models::{cubic_spectral, limit_drift, Model, ModelSpec};
use crate::noise::{NoisePath, NoiseSeed};
use crate::trajectory::Trajectory;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    Imex,
    ExponentialEuler,
}

/// `φ₁(x) = (eˣ - 1)/x` with `φ₁(0) = 1`.
pub fn phi1(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        x.exp_m1() / x
    }
}

/// Which right-hand side a deterministic solve integrates.
#[derive(Clone, Debug, PartialEq)]
pub enum Equation {
    /// The ε-model with its own operator and `F_ε`, without noise.
    Model(ModelSpec),
    /// `∂u = Δu + f(u) - 3C₀u`.
    Limit { c_zero: f64 },
    /// The ε-model's linear part only.
    Linear(ModelSpec),
}

impl Equation {
    fn lambda_table(&self, grid: &FourierGrid) -> Vec<f64> {
        match self {
            Equation::Model(spec) | Equation::Linear(spec) => spec.lambda_table(grid),
            Equation::Limit { .. } => grid.mu().to_vec(),
        }
    }

    fn label(&self) -> String {
        match self {
            Equation::Model(spec) => format!("{}[eps={}]", spec.model, spec.eps),
            Equation::Limit { c_zero } => format!("limit[c0={c_zero}]"),
            Equation::Linear(spec) => format!("{}-linear[eps={}]", spec.model, spec.eps),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Equation::Model(spec) | Equation::Linear(spec) => spec.validate(),
            Equation::Limit { c_zero } if !(c_zero.is_finite() && *c_zero >= 0.0) => {
                Err(invalid(format!("c_zero must be finite and >= 0, got {c_zero}")))
            }
            Equation::Limit { .. } => Ok(()),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolveConfig {
    pub dt: f64,
    pub t_end: f64,
    pub scheme: Scheme,
    pub initial: SpectralField,
    /// Keep every `save_every`-th step as a snapshot.
    pub save_every: usize,
}

impl SolveConfig {
    pub fn new(dt: f64, t_end: f64, initial: SpectralField) -> Self {
        Self {
            dt,
            t_end,
            scheme: Scheme::Imex,
            initial,
            save_every: 1,
        }
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_save_every(mut self, save_every: usize) -> Self {
        self.save_every = save_every;
        self
    }

    pub fn grid(&self) -> &Arc<FourierGrid> {
        self.initial.grid()
    }

    /// Number of steps, after checking `dt`, `T` and the snapshot stride.
    pub fn steps(&self) -> Result<usize> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(invalid(format!("T must be > 0, got {}", self.t_end)));
        }
        if self.dt > self.t_end {
            return Err(invalid(format!("dt = {} exceeds T = {}", self.dt, self.t_end)));
        }
        let ratio = self.t_end / self.dt;
        let steps = ratio.round();
        if (ratio - steps).abs() > 1e-9 * ratio.max(1.0) {
            return Err(invalid(format!(
                "T/dt = {ratio} is not an integer (T = {}, dt = {})",
                self.t_end, self.dt
            )));
        }
        let steps = steps as usize;
        if self.save_every == 0 || !steps.is_multiple_of(self.save_every) {
            return Err(invalid(format!(
                "save_every = {} must divide the step count {steps}",
                self.save_every
            )));
        }
        Ok(steps)
    }

    fn time(&self, step: usize) -> f64 {
        step as f64 * self.dt
    }
}

/// Largest step recommended for the homotopy model, where the explicit
/// term carries the stiffness of `(1-ε+εμ)`.
pub fn dt_guidance(spec: &ModelSpec, grid: &FourierGrid, sup_u: f64) -> Option<f64> {
    match spec.model {
        Model::ChAcHomotopy => {
            let k = grid.dealias_cutoff() as f64;
            Some(0.5 / (1.0 + spec.eps * k * k * 3.0 * sup_u * sup_u))
        }
        Model::AcBilaplacian | Model::AcMollifiedNoise => None,
    }
}

fn warn_on_dt(spec: &ModelSpec, config: &SolveConfig) {
    let sup_u = config.initial.inverse().max_abs().max(1.0);
    if let Some(limit) = dt_guidance(spec, config.grid(), sup_u) {
        if config.dt > limit {
            log::warn!(
                "dt = {} exceeds the recommended {limit:.3e} for {} at eps = {}",
                config.dt,
                spec.model,
                spec.eps
            );
        }
    }
}

/// Precomputed per-mode factors for one equation, scheme and step size.
#[derive(Clone, Debug)]
pub struct Stepper {
    equation: Equation,
    dt: f64,
    decay: Vec<f64>,
    gain: Vec<f64>,
}

impl Stepper {
    pub fn new(equation: Equation, grid: &FourierGrid, dt: f64, scheme: Scheme) -> Result<Self> {
        equation.validate()?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(invalid(format!("dt must be > 0, got {dt}")));
        }
        let lambda = equation.lambda_table(grid);
        let (decay, gain) = lambda
            .iter()
            .map(|&l| match scheme {
                Scheme::Imex => (1.0 / (1.0 + dt * l), dt / (1.0 + dt * l)),
                Scheme::ExponentialEuler => ((-l * dt).exp(), dt * phi1(-l * dt)),
            })
            .unzip();
        Ok(Self {
            equation,
            dt,
            decay,
            gain,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn drift(&self, w: &SpectralField) -> Option<SpectralField> {
        match &self.equation {
            Equation::Model(spec) => Some(match spec.model {
                Model::ChAcHomotopy => {
                    cubic_spectral(w).apply_multiplier_unchecked(&spec.multiplier_table(w.grid()))
                }
                Model::AcBilaplacian | Model::AcMollifiedNoise => cubic_spectral(w),
            }),
            Equation::Limit { c_zero } => Some(limit_drift(w, *c_zero)),
            Equation::Linear(_) => None,
        }
    }

    /// One step of `v`, with the nonlinearity evaluated at `v + z`.
    pub fn step(&self, v: &SpectralField, z: Option<&SpectralField>) -> Result<SpectralField> {
        if v.coeffs().len() != self.decay.len() {
            return Err(invalid("field does not live on the stepper's grid"));
        }
        let forcing = match z {
            Some(z) => {
                check_same_grid(v.grid(), z.grid())?;
                self.drift(&v.add(z)?)
            }
            None => self.drift(v),
        };
        let coeffs = match forcing {
            Some(n) => v
                .coeffs()
                .iter()
                .zip(n.coeffs())
                .zip(self.decay.iter().zip(&self.gain))
                .map(|((&c, &f), (&a, &b))| c * a + f * b)
                .collect(),
            None => v.coeffs().iter().zip(&self.decay).map(|(&c, &a)| c * a).collect(),
        };
        Ok(SpectralField::from_coeffs_unchecked(v.grid(), coeffs))
    }
}

/// One step of the transformed equation `∂v = A_ε v + F_ε(v + Z)`.
pub fn step_v(
    spec: &ModelSpec,
    v: &SpectralField,
    z: &SpectralField,
    dt: f64,
    scheme: Scheme,
) -> Result<SpectralField> {
    Stepper::new(Equation::Model(spec.clone()), v.grid(), dt, scheme)?.step(v, Some(z))
}

fn check_finite(field: &SpectralField, t: f64, label: &str) -> Result<()> {
    if field.coeffs().iter().all(|c| c.re.is_finite() && c.im.is_finite()) {
        Ok(())
    } else {
        Err(invalid(format!("{label}: solution became non-finite at t = {t}")))
    }
}

/// Deterministic solve of `equation` from `config.initial`, projected onto
/// the dealias-retained modes.
pub fn solve(equation: &Equation, config: &SolveConfig) -> Result<Trajectory> {
    let steps = config.steps()?;
    if let Equation::Model(spec) = equation {
        warn_on_dt(spec, config);
    }
    let stepper = Stepper::new(equation.clone(), config.grid(), config.dt, config.scheme)?;
    let label = equation.label();
    let mut u = config.initial.masked();
    let mut traj = Trajectory::new(label.clone());
    traj.push(0.0, u.clone())?;
    for j in 1..=steps {
        u = stepper.step(&u, None)?;
        if j % config.save_every == 0 {
            let t = config.time(j);
            check_finite(&u, t, &label)?;
            traj.push(t, u.clone())?;
        }
    }
    Ok(traj)
}

/// The renormalized limit equation `∂u = Δu + f(u) - 3C₀u`.
pub fn solve_limit(c_zero: f64, config: &SolveConfig) -> Result<Trajectory> {
    solve(&Equation::Limit { c_zero }, config)
}

/// The noiseless ε-model.
pub fn solve_deterministic(spec: &ModelSpec, config: &SolveConfig) -> Result<Trajectory> {
    solve(&Equation::Model(spec.clone()), config)
}

/// Pathwise solution `u_ε = v_ε + Z_ε` of one sample.
#[derive(Clone, Debug)]
pub struct CoupledRun {
    pub z: Trajectory,
    pub v: Trajectory,
    pub u_eps: Trajectory,
}

impl CoupledRun {
    /// `φ_ε = v_ε - u = u_ε - u - Z_ε` against a limit trajectory.
    pub fn error_against(&self, limit: &Trajectory) -> Result<Trajectory> {
        error_trajectory(&self.v, limit)
    }
}

/// `v - u`, snapshot by snapshot.
pub fn error_trajectory(v: &Trajectory, u: &Trajectory) -> Result<Trajectory> {
    v.difference(u, format!("error[{} - {}]", v.label(), u.label()))
}

/// Samples `Z_ε` on the solver's time grid and integrates `v_ε` against it.
pub fn solve_coupled(spec: &ModelSpec, config: &SolveConfig, seed: NoiseSeed) -> Result<CoupledRun> {
    let steps = config.steps()?;
    warn_on_dt(spec, config);
    let grid = config.grid();
    let stepper = Stepper::new(Equation::Model(spec.clone()), grid, config.dt, config.scheme)?;
    let mut path = NoisePath::new(spec, grid, config.dt, seed)?;
    let tag = format!("{}[eps={} seed={}:{}]", spec.model, spec.eps, seed.master, seed.sample);

    let mut z_traj = Trajectory::new(format!("z:{tag}"));
    let mut v_traj = Trajectory::new(format!("v:{tag}"));
    let mut u_traj = Trajectory::new(format!("u_eps:{tag}"));
    let mut v = config.initial.masked();
    let mut z = path.z();
    let mut record = |t: f64, v: &SpectralField, z: &SpectralField| -> Result<()> {
        check_finite(v, t, &tag)?;
        u_traj.push(t, v.add(z)?)?;
        v_traj.push(t, v.clone())?;
        z_traj.push(t, z.clone())
    };
    record(0.0, &v, &z)?;
    for j in 1..=steps {
        v = stepper.step(&v, Some(&z))?;
        path.advance();
        z = path.z();
        if j % config.save_every == 0 {
            record(config.time(j), &v, &z)?;
        }
    }
    Ok(CoupledRun {
        z: z_traj,
        v: v_traj,
        u_eps: u_traj,
    })
}

/// Refinement report of a deterministic solve at `dt`, `dt/2` and `dt/4`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DtAudit {
    pub dt: f64,
    /// `max_t ‖u_dt - u_{dt/2}‖_{L²}`
    pub coarse_gap: f64,
    /// `max_t ‖u_{dt/2} - u_{dt/4}‖_{L²}`
    pub fine_gap: f64,
    /// `coarse_gap / fine_gap`; about 2 for a first-order scheme.
    pub ratio: f64,
}

fn max_l2_gap(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    let diff = a.difference(b, "gap")?;
    Ok(diff.series(|f| f.l2_norm()).into_iter().fold(0.0, f64::max))
}

pub fn step_dt_audit(equation: &Equation, config: &SolveConfig) -> Result<DtAudit> {
    config.steps()?;
    let refine = |factor: usize| {
        let mut c = config.clone();
        c.dt = config.dt / factor as f64;
        c.save_every = config.save_every * factor;
        solve(equation, &c)
    };
    let u1 = solve(equation, config)?;
    let u2 = refine(2)?;
    let u4 = refine(4)?;
    let coarse_gap = max_l2_gap(&u1, &u2)?;
    let fine_gap = max_l2_gap(&u2, &u4)?;
    let ratio = if fine_gap > 0.0 {
        coarse_gap / fine_gap
    } else if coarse_gap == 0.0 {
        f64::NAN
    } else {
        f64::INFINITY
    };
    Ok(DtAudit {
        dt: config.dt,
        coarse_gap,
        fine_gap,
        ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;

    fn single_mode(grid: &Arc<FourierGrid>) -> SpectralField {
        SpectralField::cosine(grid, 2.0, (1, 0)).unwrap()
    }

    #[test]
    fn linear_step_examples() {
        let g = make_grid(8).unwrap();
        let spec = ModelSpec::new(Model::ChAcHomotopy, 0.3, 0.0).unwrap();
        let v = single_mode(&g);
        let imex = Stepper::new(Equation::Linear(spec.clone()), &g, 1.0, Scheme::Imex).unwrap();
        let out = imex.step(&v, None).unwrap();
        assert!((out.coeff((1, 0)).unwrap().re - 0.5).abs() < 1e-15);
        let ee = Stepper::new(Equation::Linear(spec), &g, 1.0, Scheme::ExponentialEuler).unwrap();
        let out = ee.step(&v, None).unwrap();
        assert!((out.coeff((1, 0)).unwrap().re - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn rest_state_stays_at_rest() {
        let g = make_grid(8).unwrap();
        let spec = ModelSpec::new(Model::AcBilaplacian, 0.3, 1.0).unwrap();
        let zero = SpectralField::zeros(&g);
        for scheme in [Scheme::Imex, Scheme::ExponentialEuler] {
            let out = step_v(&spec, &zero, &zero, 0.1, scheme).unwrap();
            assert_eq!(out.l2_norm(), 0.0);
        }
    }

    #[test]
    fn step_rejects_grid_mismatch() {
        let spec = ModelSpec::new(Model::AcBilaplacian, 0.3, 1.0).unwrap();
        let a = SpectralField::zeros(&make_grid(8).unwrap());
        let b = SpectralField::zeros(&make_grid(16).unwrap());
        assert!(step_v(&spec, &a, &b, 0.1, Scheme::Imex).is_err());
    }

    #[test]
    fn phi1_values() {
        assert_eq!(phi1(0.0), 1.0);
        assert!((phi1(-1.0) - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        assert!((phi1(1e-12) - 1.0).abs() < 1e-11);
    }

    #[test]
    fn config_validation() {
        let g = make_grid(8).unwrap();
        let u0 = SpectralField::zeros(&g);
        assert!(SolveConfig::new(0.2, 0.1, u0.clone()).steps().is_err());
        assert!(SolveConfig::new(0.03, 0.1, u0.clone()).steps().is_err());
        assert!(SolveConfig::new(-0.01, 0.1, u0.clone()).steps().is_err());
        assert_eq!(SolveConfig::new(1e-3, 0.5, u0.clone()).steps().unwrap(), 500);
        assert!(SolveConfig::new(1e-3, 0.5, u0).with_save_every(3).steps().is_err());
    }

    #[test]
    fn limit_fixed_points() {
        let g = make_grid(8).unwrap();
        let zero = solve_limit(0.3, &SolveConfig::new(0.01, 1.0, SpectralField::zeros(&g))).unwrap();
        assert!(zero.snapshots().iter().all(|s| s.l2_norm() == 0.0));
        let one = solve_limit(0.0, &SolveConfig::new(0.01, 1.0, SpectralField::constant(&g, 1.0))).unwrap();
        for s in one.snapshots() {
            assert!((s.coeffs()[0].re - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn noiseless_coupling_matches_deterministic_solve() {
        let g = make_grid(16).unwrap();
        let spec = ModelSpec::new(Model::ChAcHomotopy, 0.1, 0.0).unwrap();
        let u0 = SpectralField::cosine(&g, 0.2, (1, 0)).unwrap();
        let config = SolveConfig::new(1e-3, 0.05, u0).with_save_every(10);
        let run = solve_coupled(&spec, &config, NoiseSeed::new(1, 0)).unwrap();
        let det = solve_deterministic(&spec, &config).unwrap();
        assert_eq!(run.u_eps.len(), det.len());
        for (a, b) in run.u_eps.snapshots().iter().zip(det.snapshots()) {
            assert_eq!(a.coeffs(), b.coeffs());
        }
    }

    #[test]
    fn coupling_identity_and_symmetry() {
        let g = make_grid(16).unwrap();
        let spec = ModelSpec::new(Model::ChAcHomotopy, 0.1, 0.5).unwrap();
        let u0 = SpectralField::cosine(&g, 0.2, (1, 0)).unwrap();
        let config = SolveConfig::new(1e-3, 0.02, u0);
        let run = solve_coupled(&spec, &config, NoiseSeed::new(4, 2)).unwrap();
        for ((u, v), z) in run.u_eps.snapshots().iter().zip(run.v.snapshots()).zip(run.z.snapshots()) {
            let gap = u.sub(v).unwrap().sub(z).unwrap().l2_norm();
            assert!(gap <= 1e-15 * (1.0 + u.l2_norm()), "{gap}");
            assert!(u.is_hermitian() && v.is_hermitian());
        }
    }
}
