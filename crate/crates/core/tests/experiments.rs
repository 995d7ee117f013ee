use spdelab::experiments::{
    default_regime_schedules, regime_scan, run_convergence_study, theorem_inequality_check, StudyConfig,
    StudyContext, Verdict,
};
use spdelab::renorm::Regime;
use spdelab::stats::median;
use spdelab::{Model, NoiseSeed, SigmaSchedule};

fn small(model: Model, eps: Vec<f64>, schedule: SigmaSchedule) -> StudyConfig {
    let mut c = StudyConfig::new(model, eps, schedule);
    c.n = 16;
    c.t_end = 0.1;
    c.dt = 1e-2;
    c.samples = 4;
    c
}

#[test]
fn noiseless_runs_are_identical_across_samples() {
    let c = small(Model::ChAcHomotopy, vec![0.1], SigmaSchedule::constant(0.0));
    let mut c = c;
    c.c_zero = Some(0.0);
    let res = run_convergence_study(&c).unwrap();
    let first = res.records[0].sup_error;
    assert!(first > 0.0);
    assert!(res.records.iter().all(|r| r.sup_error == first));
}

#[test]
fn records_do_not_depend_on_worker_count() {
    let c = small(Model::ChAcHomotopy, vec![0.2, 0.1], SigmaSchedule::log_inverse(0.5));
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_convergence_study(&c).unwrap())
    };
    let a = run(1);
    let b = run(4);
    assert_eq!(a.records.len(), b.records.len());
    for (x, y) in a.records.iter().zip(&b.records) {
        assert!(x.same_result(y));
    }
    assert_eq!(a.summaries, b.summaries);
}

#[test]
fn single_run_is_reproducible() {
    let c = small(Model::AcBilaplacian, vec![0.1], SigmaSchedule::log_inverse(0.5));
    let ctx = StudyContext::new(&c).unwrap();
    let a = ctx.run(0.1, NoiseSeed::new(4, 0)).unwrap();
    let b = ctx.run(0.1, NoiseSeed::new(4, 0)).unwrap();
    assert!(a.same_result(&b));
}

#[test]
fn coupling_reduces_cross_eps_differences() {
    let mut c = small(Model::ChAcHomotopy, vec![0.1, 0.09], SigmaSchedule::log_inverse(0.5));
    c.samples = 8;
    let ctx = StudyContext::new(&c).unwrap();
    let errs = |eps: f64, shift: u64| -> Vec<f64> {
        (0..8)
            .map(|i| ctx.run(eps, NoiseSeed::new(0, i + shift)).unwrap().sup_error)
            .collect()
    };
    let a = errs(0.1, 0);
    let coupled = errs(0.09, 0);
    let uncoupled = errs(0.09, 100);
    let gap = |x: &[f64], y: &[f64]| median(&x.iter().zip(y).map(|(p, q)| (p - q).abs()).collect::<Vec<_>>());
    assert!(gap(&a, &coupled) < gap(&a, &uncoupled));
}

#[test]
fn theorem_check_trivial_cases() {
    // σ ≡ 0 and c_ε = 0
    let mut c = small(Model::AcBilaplacian, vec![0.1], SigmaSchedule::constant(0.0));
    c.c_zero = Some(0.0);
    c.gamma = Some(1e-3);
    c.big_k = Some(1.0);
    let rep = theorem_inequality_check(&c).unwrap();
    let row = &rep.rows[0];
    assert_eq!(row.lhs.p_hat, 0.0);
    assert_eq!(row.rhs_sum, 0.0);
    assert_eq!(rep.verdict, Verdict::Pass);

    // huge γ clears every γ-dependent event
    let mut c = small(Model::ChAcHomotopy, vec![0.1], SigmaSchedule::log_inverse(0.5));
    c.gamma = Some(1e12);
    c.big_k = Some(1.0);
    let rep = theorem_inequality_check(&c).unwrap();
    assert_eq!(rep.rows[0].lhs.p_hat, 0.0);
    assert_eq!(rep.rows[0].rhs_residual.p_hat, 0.0);
    assert_eq!(rep.verdict, Verdict::Pass);
}

#[test]
fn theorem_check_calibrates_missing_constants() {
    let c = small(Model::ChAcHomotopy, vec![0.2, 0.1], SigmaSchedule::log_inverse(0.5));
    let rep = theorem_inequality_check(&c).unwrap();
    assert!(rep.k_from_pilot && rep.gamma_from_pilot);
    assert_eq!(rep.pilot_eps, 0.2);
    assert!(rep.big_k > 0.0 && rep.gamma > 0.0);
    assert!(rep.records.iter().all(|r| r.events.is_some()));
    // identical initial data: the middle event never fires
    assert!(rep.rows.iter().all(|r| r.rhs_initial.p_hat == 0.0));
}

#[test]
fn regime_scan_blocks() {
    let mut c = small(Model::ChAcHomotopy, vec![0.1, 0.05, 0.025], SigmaSchedule::log_inverse(0.5));
    c.samples = 16;
    let rep = regime_scan(&c, &default_regime_schedules(0.5)).unwrap();
    assert_eq!(rep.blocks.len(), 3);
    let tags: Vec<Regime> = rep.blocks.iter().map(|b| b.regime).collect();
    assert_eq!(tags, vec![Regime::Zero, Regime::Finite, Regime::Divergent]);
    let constant = &rep.blocks[2];
    assert!(constant.l2_increasing);
    assert!(constant.h_minus1_bounded);
    assert!(rep.blocks[0].error_decreasing.is_some());
    assert!(regime_scan(&c, &[]).is_err());
}

#[test]
fn invalid_configs_are_rejected() {
    let c = small(Model::ChAcHomotopy, vec![0.6], SigmaSchedule::log_inverse(0.5));
    assert!(c.validate().is_err());
    let mut c = small(Model::ChAcHomotopy, vec![0.1], SigmaSchedule::log_inverse(0.5));
    c.samples = 0;
    assert!(c.validate().is_err());
    let c = small(Model::ChAcHomotopy, vec![0.1], SigmaSchedule::constant(0.5));
    // divergent constant without an explicit C₀
    assert!(StudyContext::new(&c).is_err());
}
