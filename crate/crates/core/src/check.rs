//! Fast self-check of the numerical invariants, run by `spdelab check`.

use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::analysis::operator_bound_check;
use crate::field::RealField;
use crate::grid::make_grid;
use crate::models::{cubic_gap, Model, ModelSpec};
use crate::noise::{ou_step, ou_variance};
use crate::stats::{chi_square_normal, variance_with_se, MeanSe};
use crate::Result;

#[derive(Clone, Copy, Debug, Default)]
pub struct CheckOptions {
    /// Flips the sign of the linear symbol seen by the coercivity check.
    /// Exists only to prove that the check can fail.
    pub corrupt_lambda_sign: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    pub detail: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub results: Vec<CheckResult>,
}

impl CheckReport {
    pub fn pass(&self) -> bool {
        self.results.iter().all(|r| r.pass)
    }

    pub fn failures(&self) -> Vec<&str> {
        self.results.iter().filter(|r| !r.pass).map(|r| r.name.as_str()).collect()
    }
}

fn roundtrip() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst_rt = 0.0f64;
    let mut worst_parseval = 0.0f64;
    for n in [16, 64] {
        let g = make_grid(n)?;
        let values: Vec<f64> = (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let f = RealField::new(&g, values)?;
        let s = f.forward();
        let back = s.inverse();
        let rt = f
            .values()
            .iter()
            .zip(back.values())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        worst_rt = worst_rt.max(rt);
        worst_parseval = worst_parseval.max((s.l2_norm_sq() - f.mean_square()).abs() / f.mean_square());
    }
    Ok((
        worst_rt <= 1e-12 && worst_parseval <= 1e-12,
        format!("max error {worst_rt:.2e}, parseval rel {worst_parseval:.2e}"),
    ))
}

fn cubic() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut min_gap = f64::INFINITY;
    for _ in 0..100_000 {
        let phi = rng.random_range(-10.0..10.0);
        let psi = rng.random_range(-10.0..10.0);
        min_gap = min_gap.min(cubic_gap(phi, psi));
    }
    Ok((min_gap >= -1e-12, format!("min gap {min_gap:.3e}")))
}

fn ou_statistics() -> Result<(bool, String)> {
    let (lambda, h, steps, paths) = (1.0, 1e-2, 100, 20_000);
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut xs = Vec::with_capacity(paths);
    for _ in 0..paths {
        let mut x = Complex64::default();
        for _ in 0..steps {
            let d: f64 = rng.sample(StandardNormal);
            x = ou_step(x, lambda, h, Complex64::new(d, 0.0))?;
        }
        xs.push(x.re);
    }
    let target = ou_variance(lambda, h * steps as f64);
    let mean = MeanSe::from_samples(&xs);
    let (var, var_se) = variance_with_se(&xs);
    let chi = chi_square_normal(&xs, 0.0, target, 20)?;
    let pass = mean.within(0.0, 3.0) && (var - target).abs() <= 3.0 * var_se && chi.p_value > 0.01;
    Ok((
        pass,
        format!(
            "mean {:.4} (se {:.4}), var {var:.4} vs {target:.4}, chi2 p {:.3}",
            mean.mean, mean.se, chi.p_value
        ),
    ))
}

fn operator_bound() -> Result<(bool, String)> {
    let g = make_grid(64)?;
    let mut worst = 0.0f64;
    for eps in [1e-1, 1e-2, 1e-3, 1e-4] {
        let spec = ModelSpec::new(Model::ChAcHomotopy, eps, 0.0)?;
        worst = worst.max(operator_bound_check(&spec, &g)? * eps.sqrt());
    }
    Ok((worst <= 2.0, format!("max bound*eps^1/2 {worst:.4}")))
}

/// `λ_k(ε) ≥ μ_k` on every retained nonzero mode: the linear part
/// dissipates at least as fast as the heat semigroup.
fn coercivity(opts: CheckOptions) -> Result<(bool, String)> {
    let g = make_grid(64)?;
    let sign = if opts.corrupt_lambda_sign { -1.0 } else { 1.0 };
    let mut worst = f64::INFINITY;
    for model in [Model::ChAcHomotopy, Model::AcBilaplacian, Model::AcMollifiedNoise] {
        for eps in [0.4, 0.1, 0.01] {
            let spec = ModelSpec::new(model, eps, 0.0)?;
            for (&lambda, &mu) in spec.lambda_table(&g).iter().zip(g.mu()) {
                if mu > 0.0 {
                    worst = worst.min(sign * lambda - mu);
                }
            }
        }
    }
    Ok((worst >= 0.0, format!("min lambda - mu {worst:.3e}")))
}

type Check = Box<dyn Fn() -> Result<(bool, String)>>;

pub fn run_checks(opts: CheckOptions) -> CheckReport {
    let checks: [(&str, Check); 5] = [
        ("roundtrip", Box::new(roundtrip)),
        ("cubic_gap", Box::new(cubic)),
        ("ou_statistics", Box::new(ou_statistics)),
        ("operator_bound", Box::new(operator_bound)),
        ("coercivity", Box::new(move || coercivity(opts))),
    ];
    let results = checks
        .iter()
        .map(|(name, f)| {
            let clock = Instant::now();
            let (pass, detail) = f().unwrap_or_else(|e| (false, e.to_string()));
            CheckResult {
                name: name.to_string(),
                pass,
                detail,
                seconds: clock.elapsed().as_secs_f64(),
            }
        })
        .collect();
    CheckReport { results }
}
