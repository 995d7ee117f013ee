//! Norms of fields and trajectories, and the residual of the limit solution
//! inserted into the transformed ε-equation.
//!
//! Spatial norms use the normalized measure on the torus, matching the
//! unitary-mean transform: `‖f‖²_{L²} = mean(f²) = Σ|c_k|²`.

use serde::{Deserialize, Serialize};

use crate::error::{config_err, invalid, Result};
use crate::field::SpectralField;
use crate::grid::FourierGrid;
use crate::models::{cubic_spectral, Model, ModelSpec};
use crate::trajectory::Trajectory;

/// `Σ_k w_k |c_k|²`.
pub fn weighted_sq(field: &SpectralField, weights: &[f64]) -> f64 {
    field
        .coeffs()
        .iter()
        .zip(weights)
        .map(|(c, w)| w * c.norm_sqr())
        .sum()
}

/// `(1+μ_k)^s` per mode.
pub fn sobolev_weights(grid: &FourierGrid, s: f64) -> Vec<f64> {
    grid.mu().iter().map(|m| (1.0 + m).powf(s)).collect()
}

/// `(Σ_k (1+μ_k)^s |c_k|²)^{1/2}`.
pub fn sobolev_norm(field: &SpectralField, s: f64) -> f64 {
    weighted_sq(field, &sobolev_weights(field.grid(), s)).sqrt()
}

/// `‖w‖_{V_ε'} = (Σ_k |c_k|²/(1+λ_k(ε)))^{1/2}`.
pub fn v_eps_dual_norm(field: &SpectralField, spec: &ModelSpec) -> f64 {
    weighted_sq(field, &spec.dual_weights(field.grid())).sqrt()
}

/// `‖w‖_{V_ε} = (Σ_k (1+λ_k(ε))|c_k|²)^{1/2}`.
pub fn v_eps_norm(field: &SpectralField, spec: &ModelSpec) -> f64 {
    let w: Vec<f64> = spec.dual_weights(field.grid()).iter().map(|d| 1.0 / d).collect();
    weighted_sq(field, &w).sqrt()
}

/// Smallest `C` with `‖w‖_{V_ε'} ≤ C‖w‖_{H^{-1}}` on the grid.
pub fn dual_norm_constant(spec: &ModelSpec, grid: &FourierGrid) -> f64 {
    grid.mu()
        .iter()
        .map(|&mu| ((1.0 + mu) / (1.0 + spec.lambda(mu))).sqrt())
        .fold(0.0, f64::max)
}

/// Grid maximum of `|f|`, the discrete stand-in for the `C⁰` norm.
pub fn sup_norm(field: &SpectralField) -> f64 {
    field.inverse().max_abs()
}

/// `(mean |f|^p)^{1/p}` on the padded product grid.
pub fn lp_space_norm(field: &SpectralField, p: f64) -> f64 {
    let padded = field.to_padded();
    let v = padded.values();
    let mean = v.iter().map(|x| x.abs().powf(p)).sum::<f64>() / v.len() as f64;
    mean.powf(1.0 / p)
}

/// Left-endpoint `L^p([0,T])` norm of samples on a uniform grid
/// `t_j = jT/(len-1)`; `p = ∞` returns the maximum over all samples.
pub fn lp_time_norm(values: &[f64], p: f64, t_end: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(invalid(format!("time exponent must be >= 1, got {p}")));
    }
    if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(invalid("time-norm inputs must be finite and >= 0"));
    }
    if p.is_infinite() {
        return Ok(values.iter().copied().fold(0.0, f64::max));
    }
    if values.len() < 2 {
        return Err(invalid("time norms need at least two samples"));
    }
    if !(t_end > 0.0) {
        return Err(invalid(format!("T must be > 0, got {t_end}")));
    }
    let dt = t_end / (values.len() - 1) as f64;
    let sum: f64 = values[..values.len() - 1].iter().map(|v| v.powf(p)).sum();
    Ok((dt * sum).powf(1.0 / p))
}

/// `max_{k≠0} |1-μ_k| / ((1+μ_k)(1-ε+εμ_k))^{1/2}`, the norm of `1+Δ` from
/// `L²` into `V_ε'` for the homotopy, evaluated for any `ε ∈ (0, 1]`.
pub fn operator_bound(eps: f64, grid: &FourierGrid) -> f64 {
    grid.mu()
        .iter()
        .filter(|&&mu| mu > 0.0)
        .map(|&mu| (1.0 - mu).abs() / ((1.0 + mu) * (1.0 - eps + eps * mu)).sqrt())
        .fold(0.0, f64::max)
}

pub fn operator_bound_check(spec: &ModelSpec, grid: &FourierGrid) -> Result<f64> {
    if spec.model != Model::ChAcHomotopy {
        return Err(config_err(format!(
            "operator bound is defined for ch_ac_homotopy only, not {}",
            spec.model
        )));
    }
    Ok(operator_bound(spec.eps, grid))
}

/// Time-integrated squared `H^{-1}` norms of the pieces of
/// `F(u+Z) - G(u) = Z - 3u²Z - 3u(Z²-C₀) - Z³`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Term3Parts {
    pub z: f64,
    pub u2z: f64,
    pub u_wick: f64,
    pub z3: f64,
}

/// `∫‖·‖²_{V_ε'}dt` of the operator mismatch, the nonlinearity mismatch and
/// the renormalization term of the residual.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResidualBreakdown {
    pub term1: f64,
    pub term2: f64,
    pub term3: f64,
    pub total: f64,
    pub term3_parts: Term3Parts,
}

/// Per-snapshot residual pieces, each in `V_ε'` (or `H^{-1}` for the parts).
#[derive(Clone, Debug)]
struct ResidualSeries {
    term1: Vec<f64>,
    term2: Vec<f64>,
    term3: Vec<f64>,
    parts: [Vec<f64>; 4],
}

/// Symbol of `A - A_ε`, i.e. `λ_k(ε) - μ_k`.
pub fn operator_mismatch_symbol(spec: &ModelSpec, grid: &FourierGrid) -> Vec<f64> {
    grid.mu().iter().map(|&mu| spec.lambda(mu) - mu).collect()
}

/// `‖(A - A_ε)u‖_{V_ε'}`.
pub fn operator_mismatch_norm(u: &SpectralField, spec: &ModelSpec) -> f64 {
    let grid = u.grid();
    let sym = operator_mismatch_symbol(spec, grid);
    let dual = spec.dual_weights(grid);
    let w: Vec<f64> = sym.iter().zip(&dual).map(|(s, d)| s * s * d).collect();
    weighted_sq(u, &w).sqrt()
}

fn residual_series(u_traj: &Trajectory, z_traj: &Trajectory, spec: &ModelSpec) -> Result<ResidualSeries> {
    u_traj.check_same_time_grid(z_traj)?;
    let c0 = spec
        .c_zero
        .ok_or_else(|| config_err("residual needs c_zero on the model spec"))?;
    let Some(grid) = u_traj.grid() else {
        return Err(invalid("empty trajectory"));
    };
    let dual = spec.dual_weights(grid);
    let h_minus1 = sobolev_weights(grid, -1.0);
    let sym = operator_mismatch_symbol(spec, grid);
    let t1_weights: Vec<f64> = sym.iter().zip(&dual).map(|(s, d)| s * s * d).collect();
    let t2_weights: Option<Vec<f64>> = match spec.model {
        Model::ChAcHomotopy => Some(
            grid.mu()
                .iter()
                .zip(&dual)
                .map(|(&mu, d)| {
                    let s = spec.eps * (1.0 - mu);
                    s * s * d
                })
                .collect(),
        ),
        Model::AcBilaplacian | Model::AcMollifiedNoise => None,
    };

    let mut out = ResidualSeries {
        term1: Vec::with_capacity(u_traj.len()),
        term2: Vec::with_capacity(u_traj.len()),
        term3: Vec::with_capacity(u_traj.len()),
        parts: Default::default(),
    };
    for (u, z) in u_traj.snapshots().iter().zip(z_traj.snapshots()) {
        out.term1.push(weighted_sq(u, &t1_weights).sqrt());
        out.term2.push(match &t2_weights {
            Some(w) => weighted_sq(&cubic_spectral(&u.add(z)?), w).sqrt(),
            None => 0.0,
        });

        let up = u.to_padded();
        let zp = z.to_padded();
        let u2z = up.zip_map(&zp, |a, b| 3.0 * a * a * b)?;
        let u_wick = up.zip_map(&zp, |a, b| 3.0 * a * (b * b - c0))?;
        let z3 = zp.map(|b| b * b * b);
        let mut whole = zp.clone();
        for (i, w) in whole.values_mut().iter_mut().enumerate() {
            *w -= u2z.values()[i] + u_wick.values()[i] + z3.values()[i];
        }
        out.term3.push(weighted_sq(&whole.to_spectral_masked(), &dual).sqrt());
        for (slot, piece) in out.parts.iter_mut().zip([&zp, &u2z, &u_wick, &z3]) {
            slot.push(weighted_sq(&piece.to_spectral_masked(), &h_minus1).sqrt());
        }
    }
    Ok(out)
}

fn l2_time_sq(values: &[f64], t_end: f64) -> Result<f64> {
    Ok(lp_time_norm(values, 2.0, t_end)?.powi(2))
}

/// Residual budget of `u` (limit solution) against the noise path `z`.
pub fn residual_breakdown(
    u_traj: &Trajectory,
    z_traj: &Trajectory,
    spec: &ModelSpec,
) -> Result<ResidualBreakdown> {
    let s = residual_series(u_traj, z_traj, spec)?;
    let t = u_traj.t_end();
    let term1 = l2_time_sq(&s.term1, t)?;
    let term2 = l2_time_sq(&s.term2, t)?;
    let term3 = l2_time_sq(&s.term3, t)?;
    Ok(ResidualBreakdown {
        term1,
        term2,
        term3,
        total: term1 + term2 + term3,
        term3_parts: Term3Parts {
            z: l2_time_sq(&s.parts[0], t)?,
            u2z: l2_time_sq(&s.parts[1], t)?,
            u_wick: l2_time_sq(&s.parts[2], t)?,
            z3: l2_time_sq(&s.parts[3], t)?,
        },
    })
}

/// Per-snapshot norms of a trajectory and their time aggregates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub times: Vec<f64>,
    pub l2: Vec<f64>,
    pub h_minus1: Vec<f64>,
    pub sup: Vec<f64>,
    pub v_dual: Vec<f64>,
    pub sup_l2: f64,
    /// `∫‖·‖²_{V_ε'}dt`
    pub v_dual_sq_integral: f64,
    /// `‖·‖_{L^p([0,T],H^{-1})}`
    pub lp_h_minus1: f64,
    pub sup_c0: f64,
    pub p: f64,
}

pub fn norm_report(traj: &Trajectory, spec: &ModelSpec, p: f64) -> Result<NormReport> {
    let Some(grid) = traj.grid() else {
        return Err(invalid("empty trajectory"));
    };
    let h_minus1_w = sobolev_weights(grid, -1.0);
    let dual_w = spec.dual_weights(grid);
    let l2 = traj.series(|f| f.l2_norm());
    let h_minus1 = traj.series(|f| weighted_sq(f, &h_minus1_w).sqrt());
    let sup = traj.series(sup_norm);
    let v_dual = traj.series(|f| weighted_sq(f, &dual_w).sqrt());
    let t = traj.t_end();
    Ok(NormReport {
        times: traj.times().to_vec(),
        sup_l2: l2.iter().copied().fold(0.0, f64::max),
        v_dual_sq_integral: l2_time_sq(&v_dual, t)?,
        lp_h_minus1: lp_time_norm(&h_minus1, p, t)?,
        sup_c0: sup.iter().copied().fold(0.0, f64::max),
        l2,
        h_minus1,
        sup,
        v_dual,
        p,
    })
}
