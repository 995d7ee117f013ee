use num_complex::Complex64;
use spdelab::experiments::InitialData;
use spdelab::models::cubic;
use spdelab::solver::{solve, solve_coupled, solve_deterministic, solve_limit, step_dt_audit, Equation, Scheme, SolveConfig};
use spdelab::{make_grid, Model, ModelSpec, NoiseSeed, SpectralField};

/// Classical RK4 with step doubling, error per step below `tol`.
fn rk4_adaptive(f: impl Fn(f64) -> f64, y0: f64, t_end: f64, tol: f64) -> f64 {
    let step = |y: f64, h: f64| {
        let k1 = f(y);
        let k2 = f(y + 0.5 * h * k1);
        let k3 = f(y + 0.5 * h * k2);
        let k4 = f(y + h * k3);
        y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    };
    let (mut t, mut y, mut h) = (0.0f64, y0, 0.1f64);
    while t < t_end {
        h = h.min(t_end - t);
        let full = step(y, h);
        let half = step(step(y, h / 2.0), h / 2.0);
        if (full - half).abs() <= tol {
            t += h;
            y = half;
            h *= 1.5;
        } else {
            h /= 2.0;
        }
    }
    y
}

#[test]
fn constant_data_follow_the_scalar_ode() {
    let g = make_grid(8).unwrap();
    let cfg = SolveConfig::new(1e-4, 5.0, SpectralField::constant(&g, 0.1)).with_save_every(1000);
    let u = solve_limit(0.0, &cfg).unwrap();
    let oracle = rk4_adaptive(cubic, 0.1, 5.0, 1e-12);
    let got = u.last().unwrap().coeffs()[0].re;
    assert!((got - oracle).abs() < 1e-4, "{got} vs {oracle}");
    // the solution stays spatially constant
    assert!(u.last().unwrap().coeffs()[1..].iter().all(|c| c.norm() < 1e-14));
}

#[test]
fn renormalized_limit_damps_constants() {
    // u' = u - u³ - 3C₀u with C₀ = 1 decays to 0
    let g = make_grid(8).unwrap();
    let cfg = SolveConfig::new(1e-3, 2.0, SpectralField::constant(&g, 0.5)).with_save_every(100);
    let u = solve_limit(1.0, &cfg).unwrap();
    let oracle = rk4_adaptive(|y| cubic(y) - 3.0 * y, 0.5, 2.0, 1e-12);
    assert!((u.last().unwrap().coeffs()[0].re - oracle).abs() < 1e-3);
}

/// Spatial mean of `u³` by direct evaluation on a `2n` grid from the
/// retained Fourier modes.
fn mean_of_cube(u: &SpectralField) -> f64 {
    let g = u.grid();
    let m = 2 * g.n();
    let modes: Vec<((i64, i64), Complex64)> = g
        .retained()
        .iter()
        .map(|&i| (g.wavenumbers()[i], u.coeffs()[i]))
        .collect();
    let mut acc = 0.0;
    for i in 0..m {
        for j in 0..m {
            let (x, y) = (
                2.0 * std::f64::consts::PI * i as f64 / m as f64,
                2.0 * std::f64::consts::PI * j as f64 / m as f64,
            );
            let v: f64 = modes
                .iter()
                .map(|&((k1, k2), c)| (c * Complex64::from_polar(1.0, k1 as f64 * x + k2 as f64 * y)).re)
                .sum();
            acc += v * v * v;
        }
    }
    acc / (m * m) as f64
}

#[test]
fn spatial_mean_follows_discrete_recursion() {
    let g = make_grid(16).unwrap();
    let eps = 0.2;
    let dt = 1e-2;
    let spec = ModelSpec::new(Model::ChAcHomotopy, eps, 0.0).unwrap();
    let mut init = InitialData::cosines(0.6, 0.4).field(&g).unwrap();
    init = init.shift_mean(0.3);
    let cfg = SolveConfig::new(dt, 0.2, init);
    let u = solve_deterministic(&spec, &cfg).unwrap();
    for w in u.snapshots().windows(2) {
        let mean = w[0].coeffs()[0].re;
        // IMEX on k = 0: λ₀ = 0 and the nonlinear multiplier is 1 - ε
        let predicted = mean + dt * (1.0 - eps) * (mean - mean_of_cube(&w[0]));
        assert!((w[1].coeffs()[0].re - predicted).abs() < 1e-6);
    }
}

#[test]
fn dt_audit_is_first_order() {
    let g = make_grid(16).unwrap();
    let spec = ModelSpec::new(Model::ChAcHomotopy, 0.2, 0.0).unwrap();
    let init = InitialData::cosines(0.8, 0.5).field(&g).unwrap();
    for scheme in [Scheme::Imex, Scheme::ExponentialEuler] {
        let cfg = SolveConfig::new(1e-2, 0.5, init.clone()).with_scheme(scheme);
        let audit = step_dt_audit(&Equation::Model(spec.clone()), &cfg).unwrap();
        assert!((1.8..=2.2).contains(&audit.ratio), "{scheme:?}: {audit:?}");
    }
}

#[test]
fn deterministic_limit_is_first_order_in_eps() {
    let g = make_grid(32).unwrap();
    let cfg = SolveConfig::new(1e-3, 0.5, InitialData::default().field(&g).unwrap());
    let u = solve_limit(0.0, &cfg).unwrap();
    let errors: Vec<f64> = [0.2, 0.1, 0.05, 0.025]
        .iter()
        .map(|&eps| {
            let spec = ModelSpec::new(Model::ChAcHomotopy, eps, 0.0).unwrap();
            let ue = solve_deterministic(&spec, &cfg).unwrap();
            let d = ue.difference(&u, "d").unwrap();
            d.series(|f| f.l2_norm()).into_iter().fold(0.0, f64::max)
        })
        .collect();
    for w in errors.windows(2) {
        assert!(w[1] < w[0]);
        let ratio = w[0] / w[1];
        assert!((1.4..=2.6).contains(&ratio), "{errors:?}");
    }
}

#[test]
fn coupled_solution_splits_exactly() {
    let g = make_grid(16).unwrap();
    let spec = ModelSpec::new(Model::AcBilaplacian, 0.1, 0.3).unwrap();
    let cfg = SolveConfig::new(1e-2, 0.1, InitialData::default().field(&g).unwrap());
    let run = solve_coupled(&spec, &cfg, NoiseSeed::new(3, 1)).unwrap();
    for ((u, v), z) in run.u_eps.snapshots().iter().zip(run.v.snapshots()).zip(run.z.snapshots()) {
        let gap = u.sub(v).unwrap().sub(z).unwrap().l2_norm();
        assert!(gap <= 1e-15 * (1.0 + u.l2_norm()));
    }
    // σ = 0 reduces to the deterministic solve
    let quiet = spec.with_sigma(0.0).unwrap();
    let run = solve_coupled(&quiet, &cfg, NoiseSeed::new(3, 1)).unwrap();
    let det = solve_deterministic(&quiet, &cfg).unwrap();
    for (a, b) in run.u_eps.snapshots().iter().zip(det.snapshots()) {
        assert_eq!(a.coeffs(), b.coeffs());
    }
}

#[test]
fn linear_equation_decays_each_mode() {
    let g = make_grid(8).unwrap();
    let spec = ModelSpec::new(Model::ChAcHomotopy, 0.3, 0.0).unwrap();
    let init = SpectralField::cosine(&g, 1.0, (1, 1)).unwrap();
    let cfg = SolveConfig::new(1e-3, 0.5, init).with_scheme(Scheme::ExponentialEuler);
    let u = solve(&Equation::Linear(spec.clone()), &cfg).unwrap();
    let lambda = spec.lambda(2.0);
    let got = u.last().unwrap().coeff((1, 1)).unwrap().re;
    assert!((got - 0.5 * (-lambda * 0.5).exp()).abs() < 1e-12);
}

#[test]
fn solve_config_rejects_bad_grids() {
    let g = make_grid(8).unwrap();
    let init = SpectralField::zeros(&g);
    assert!(SolveConfig::new(0.3, 1.0, init.clone()).steps().is_err());
    assert!(SolveConfig::new(0.1, 1.0, init.clone()).with_save_every(3).steps().is_err());
    assert!(SolveConfig::new(-0.1, 1.0, init.clone()).steps().is_err());
    assert_eq!(SolveConfig::new(0.1, 1.0, init).with_save_every(5).steps().unwrap(), 10);
}
