use spdelab::models::ScheduleKind;
use spdelab::renorm::{
    c_eps, c_eps_converged, c_eps_grid, c_eps_lattice, c_zero_estimate, series_asymptotics, series_sum, wick_convergence_study, wick_square, Cutoff,
    Regime,
};
use spdelab::{make_grid, Model, ModelSpec, Mollifier, SigmaSchedule, SpectralField};

fn naive(spec: &ModelSpec, k: i64) -> f64 {
    let mut s = 0.0;
    for k1 in -k..=k {
        for k2 in -k..=k {
            if (k1, k2) != (0, 0) {
                let mu = (k1 * k1 + k2 * k2) as f64;
                s += spec.noise_amp(mu).powi(2) / (2.0 * spec.lambda(mu));
            }
        }
    }
    s
}

#[test]
fn c_eps_small_box() {
    let spec = ModelSpec::new(Model::ChAcHomotopy, 0.5, 1.0).unwrap();
    assert!((c_eps(&spec, Cutoff::Box(1)).unwrap() - 8.0 / 3.0).abs() < 1e-12);
    let quiet = spec.with_sigma(0.0).unwrap();
    assert_eq!(c_eps(&quiet, Cutoff::Box(4)).unwrap(), 0.0);
}

#[test]
fn c_eps_agrees_with_naive_loop() {
    for (model, mollifier) in [
        (Model::ChAcHomotopy, Mollifier::None),
        (Model::AcBilaplacian, Mollifier::None),
        (Model::AcMollifiedNoise, Mollifier::Exponential),
        (Model::AcMollifiedNoise, Mollifier::SharpCutoff),
    ] {
        let mut spec = ModelSpec::new(model, 0.05, 0.8).unwrap();
        if model == Model::AcMollifiedNoise {
            spec = spec.with_mollifier(mollifier).unwrap();
        }
        let mut prev = 0.0;
        for k in [1u64, 4, 8, 16] {
            let fast = c_eps(&spec, Cutoff::Box(k)).unwrap();
            let slow = naive(&spec, k as i64);
            assert!((fast - slow).abs() <= 1e-12 * slow, "{model:?} K={k}");
            assert!(fast > prev);
            prev = fast;
        }
    }
}

#[test]
fn grid_constant_sums_retained_modes() {
    let g = make_grid(16).unwrap();
    let spec = ModelSpec::new(Model::ChAcHomotopy, 0.1, 1.0).unwrap();
    // the retained set is exactly the box of side n/4
    let box4 = c_eps(&spec, Cutoff::Box(4)).unwrap();
    assert!((c_eps_grid(&spec, &g) - box4).abs() <= 1e-12 * box4);
    assert!((c_eps(&spec, Cutoff::Grid(&g)).unwrap() - box4).abs() <= 1e-12 * box4);
}

#[test]
fn wick_square_examples() {
    let g = make_grid(16).unwrap();
    let z = SpectralField::cosine(&g, 1.0, (1, 0)).unwrap();
    let w = wick_square(&z, 0.5);
    let expected = SpectralField::cosine(&g, 0.5, (2, 0)).unwrap();
    assert!(w.sub(&expected).unwrap().l2_norm() < 1e-15);
    let a = SpectralField::constant(&g, 1.5);
    assert!((wick_square(&a, 0.25).coeffs()[0].re - 2.0).abs() < 1e-15);
    let plain = wick_square(&z, 0.0);
    assert!((plain.coeffs()[0].re - 0.5).abs() < 1e-15);
}

#[test]
fn c_zero_regimes() {
    let est = c_zero_estimate(Model::ChAcHomotopy, &SigmaSchedule::power(1.0, 1.0), &[1e-1, 1e-2]).unwrap();
    assert_eq!(est.regime, Regime::Zero);
    assert_eq!(est.regime.tag(), "C0=0");
    assert_eq!(est.c_zero, Some(0.0));
    let est = c_zero_estimate(Model::ChAcHomotopy, &SigmaSchedule::constant(1.0), &[1e-1, 1e-2]).unwrap();
    assert_eq!(est.regime, Regime::Divergent);
    assert_eq!(est.c_zero, None);
    assert!(est.rows[1].c_eps > est.rows[0].c_eps);
    assert!(c_zero_estimate(Model::ChAcHomotopy, &SigmaSchedule::constant(1.0), &[1e-2, 1e-1]).is_err());
}

#[test]
fn c_zero_certificate_for_log_schedule() {
    let sched = SigmaSchedule::log_inverse(1.0);
    assert_eq!(sched.kind, ScheduleKind::LogInverse);
    let est = c_zero_estimate(Model::ChAcHomotopy, &sched, &[1e-2, 1e-3, 1e-4]).unwrap();
    assert_eq!(est.regime, Regime::Finite);
    assert!(est.differences[1] < est.differences[0]);
    // last row against the direct double sum at the same cutoff
    let last = est.rows.last().unwrap();
    let spec = ModelSpec::new(Model::ChAcHomotopy, 1e-4, last.sigma).unwrap();
    let direct = naive(&spec, last.cutoff.unwrap() as i64);
    assert!((last.c_eps - direct).abs() <= 1e-10 * direct);
}

#[test]
fn series_laws() {
    let a = series_sum(Model::ChAcHomotopy, 0.01, 0.0, 200).unwrap();
    let b = series_sum(Model::ChAcHomotopy, 0.005, 0.0, 200).unwrap();
    assert!(b > a);
    let c = series_sum(Model::ChAcHomotopy, 0.01, 0.5, 200).unwrap();
    assert!(c > a);
    let rep = series_asymptotics(Model::ChAcHomotopy, &[1e-2, 1e-3], 0.0).unwrap();
    assert!(rep.ratio_spread < 0.1);
    assert!(rep.log_log_slope < 0.0);
    assert!(series_asymptotics(Model::AcMollifiedNoise, &[1e-2], 0.0).is_err());
    assert!(series_asymptotics(Model::ChAcHomotopy, &[0.6], 0.0).is_err());
}

#[test]
fn wick_study_basics() {
    let g = make_grid(16).unwrap();
    let quiet = ModelSpec::new(Model::ChAcHomotopy, 0.1, 0.0).unwrap();
    let stats = wick_convergence_study(&[quiet], &g, 0.1, 10, 4, 0, 0.0).unwrap();
    assert_eq!(stats[0].wick_c_zero.mean, 0.0);
    assert_eq!(stats[0].cube.mean, 0.0);

    let spec = ModelSpec::new(Model::ChAcHomotopy, 0.1, 0.3).unwrap();
    let a = wick_convergence_study(std::slice::from_ref(&spec), &g, 0.1, 10, 3, 9, 0.0).unwrap();
    let b = wick_convergence_study(&[spec], &g, 0.1, 10, 3, 9, 0.0).unwrap();
    assert_eq!(a, b);
    assert!(a[0].mean_z2_end.within(a[0].exact_mean_z2_end, 4.0));
}

#[test]
fn lattice_value_inside_box_bracket() {
    // shells max|k_i| = m > K hold 8m points with λ ≥ κ m⁴
    for (model, eps, kappa) in [(Model::ChAcHomotopy, 0.05, 0.05), (Model::AcBilaplacian, 0.2, 0.04)] {
        let spec = ModelSpec::new(model, eps, 0.7).unwrap();
        let lattice = c_eps_lattice(&spec).unwrap();
        for k in [200, 400] {
            let inner = naive(&spec, k);
            let tail = 0.5 * 0.49 * 4.0 / (kappa * (k * k) as f64);
            assert!(inner < lattice && lattice < inner + tail, "{model:?} K={k}: {inner} {lattice} {tail}");
        }
    }
}

#[test]
fn lattice_value_for_mollifiers() {
    let spec = ModelSpec::new(Model::AcMollifiedNoise, 0.1, 1.3).unwrap();
    let exp = spec.clone().with_mollifier(Mollifier::Exponential).unwrap();
    let direct = naive(&exp, 100);
    assert!((c_eps_lattice(&exp).unwrap() - direct).abs() < 1e-9 * direct);
    let sharp = spec.clone().with_mollifier(Mollifier::SharpCutoff).unwrap();
    let direct = naive(&sharp, 12);
    assert!((c_eps_lattice(&sharp).unwrap() - direct).abs() < 1e-12 * direct);
    assert!(c_eps_lattice(&spec.with_mollifier(Mollifier::None).unwrap()).is_err());
}

#[test]
fn converged_switches_to_lattice_for_large_cutoffs() {
    let spec = ModelSpec::new(Model::AcBilaplacian, 1e-4, 1.0).unwrap();
    let (c, k) = c_eps_converged(&spec).unwrap();
    assert_eq!(k, None);
    // 1/λ ≤ 1/μ, and the heat sum up to |k| ~ 1/ε grows like π log(1/ε²)
    assert!(c > 0.5 * std::f64::consts::PI * (1e8f64).ln() * 0.9 && c < naive(&spec, 64) + 0.5 * 4.0 / (1e-8 * 4096.0));
    let chac = ModelSpec::new(Model::ChAcHomotopy, 1e-2, 1.0).unwrap();
    let (c_box, k) = c_eps_converged(&chac).unwrap();
    assert!(k.is_some());
    let lattice = c_eps_lattice(&chac).unwrap();
    assert!(c_box < lattice && lattice - c_box < 1e-4 * lattice);
}
