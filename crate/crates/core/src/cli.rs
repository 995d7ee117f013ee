//! `spdelab simulate | study | renorm | check`.
//!
//! Results go to files (and, for `renorm` and `check`, to stdout).
//! Diagnostics go to stderr; a failure ends with one JSON line there and
//! exit code 2 for bad input, 1 for anything else.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::analysis::{residual_breakdown, sobolev_weights, weighted_sq};
use crate::check::{run_checks, CheckOptions};
use crate::config::{RunConfigFile, StudyMode};
use crate::error::{config_err, Result};
use crate::experiments::{
    noise_norms, regime_scan, run_convergence_study_with, theorem_inequality_check_with, EpsSummary, RegimeReport,
    TheoremReport,
};
use crate::grid::make_grid;
use crate::noise::NoiseSeed;
use crate::output::{
    dump_field, prepare_output_dir, write_csv, write_json, Manifest, NdjsonWriter, WorkerSource, Workers,
};
use crate::renorm::{c_eps, c_eps_grid, c_zero_estimate_mollified, series_asymptotics, Cutoff, Regime};
use crate::solver::{solve_coupled, solve_limit};

pub const WORKERS_ENV: &str = "SPDELAB_WORKERS";

#[derive(Parser, Debug)]
#[command(name = "spdelab", version, about = "Pseudospectral lab for singular limits of SPDEs on the 2D torus")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// One coupled solve: norms over time and optional field dumps.
    Simulate(RunArgs),
    /// Monte Carlo study; `mode` selects convergence, theorem or regimes.
    Study(RunArgs),
    /// Renormalization constants, their ε → 0 limit and series asymptotics.
    Renorm(RunArgs),
    /// Fast invariant suite.
    Check {
        #[arg(long, hide = true)]
        corrupt_lambda_sign: bool,
    },
}

#[derive(Args, Debug)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; falls back to $SPDELAB_WORKERS, then to the core count.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Write into a non-empty output directory.
    #[arg(long)]
    pub force: bool,
}

pub fn main() -> ExitCode {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            return report_error("usage", first, 2);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            let code = if e.is_usage_error() { 2 } else { 1 };
            report_error(e.kind(), &e.to_string(), code)
        }
    }
}

fn report_error(kind: &str, message: &str, code: u8) -> ExitCode {
    let message = message.split_whitespace().collect::<Vec<_>>().join(" ");
    eprintln!("{}", json!({ "error": kind, "message": message }));
    ExitCode::from(code)
}

pub fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Check { corrupt_lambda_sign } => Ok(cmd_check(CheckOptions { corrupt_lambda_sign })),
        Command::Simulate(args) => with_run(&args, "simulate", true, cmd_simulate),
        Command::Study(args) => with_run(&args, "study", true, cmd_study),
        Command::Renorm(args) => with_run(&args, "renorm", false, cmd_renorm),
    }
}

fn resolve_workers(flag: Option<usize>) -> Result<Workers> {
    let w = match flag {
        Some(n) => Workers {
            count: n,
            source: WorkerSource::Flag,
        },
        None => match std::env::var(WORKERS_ENV) {
            Ok(v) => Workers {
                count: v
                    .trim()
                    .parse()
                    .map_err(|_| config_err(format!("{WORKERS_ENV} must be a positive integer, got {v:?}")))?,
                source: WorkerSource::Env,
            },
            Err(_) => Workers {
                count: std::thread::available_parallelism().map_or(1, |n| n.get()),
                source: WorkerSource::Default,
            },
        },
    };
    if w.count == 0 {
        return Err(config_err("worker count must be >= 1"));
    }
    Ok(w)
}

/// Per-command output: files written so far and manifest entries.
struct Run<'a> {
    dir: Option<&'a Path>,
    files: Vec<String>,
    manifest: Manifest,
}

impl Run<'_> {
    fn dir(&self) -> &Path {
        self.dir.expect("command requires an output directory")
    }

    fn file(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir().join(name)
    }
}

fn with_run(
    args: &RunArgs,
    command: &str,
    needs_dir: bool,
    body: fn(&RunConfigFile, &mut Run<'_>) -> Result<()>,
) -> Result<ExitCode> {
    let config = RunConfigFile::load(&args.config)?;
    let workers = resolve_workers(args.workers)?;
    let dir = args.out.clone().or_else(|| config.output_dir.clone());
    if needs_dir && dir.is_none() {
        return Err(config_err("no output directory: pass --out or set output_dir"));
    }
    // a pool may already exist when called in-process; the first one wins
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.count)
        .build_global();
    if let Some(d) = &dir {
        prepare_output_dir(d, args.force)?;
    }
    let mut run = Run {
        dir: dir.as_deref(),
        files: Vec::new(),
        manifest: Manifest::start(command, &config, workers),
    };
    if let Some(d) = run.dir {
        run.manifest.write_atomic(d)?;
    }
    let result = body(&config, &mut run);
    if let Some(d) = run.dir {
        let error = result.as_ref().err().map(|e| e.to_string());
        run.manifest.finish(d, &run.files, error)?;
        run.manifest.write_atomic(d)?;
    }
    result.map(|_| ExitCode::SUCCESS)
}

fn cmd_check(opts: CheckOptions) -> ExitCode {
    let report = run_checks(opts);
    for r in &report.results {
        println!(
            "{} {}: {} ({:.2}s)",
            if r.pass { "PASS" } else { "FAIL" },
            r.name,
            r.detail,
            r.seconds
        );
    }
    if report.pass() {
        ExitCode::SUCCESS
    } else {
        let failed = report.failures().join(", ");
        report_error("check", &format!("failed invariants: {failed}"), 1)
    }
}

fn cmd_simulate(config: &RunConfigFile, run: &mut Run<'_>) -> Result<()> {
    let sim = config.simulate_config()?;
    let c_zero = sim.study.resolve_c_zero()?;
    let spec = sim.study.spec(sim.eps, c_zero)?;
    let grid = make_grid(sim.study.n)?;
    let solve_cfg = sim.study.solve_config(&grid)?;
    let seed = NoiseSeed::new(config.master_seed, sim.sample);
    let coupled = solve_coupled(&spec, &solve_cfg, seed)?;
    let limit = solve_limit(c_zero, &solve_cfg)?;
    let error = coupled.error_against(&limit)?;
    run.manifest.derive("c_zero", c_zero)?;
    run.manifest.derive("sigma", spec.sigma)?;

    let norms = NdjsonWriter::create(&run.file("norms.ndjson"))?;
    let hm1 = sobolev_weights(&grid, -1.0);
    let times = coupled.u_eps.times();
    for (i, &t) in times.iter().enumerate() {
        let z = &coupled.z.snapshots()[i];
        norms.write(&json!({
            "t": t,
            "u_eps_l2": coupled.u_eps.snapshots()[i].l2_norm(),
            "u_l2": limit.snapshots()[i].l2_norm(),
            "z_l2": z.l2_norm(),
            "z_h_minus1": weighted_sq(z, &hm1).sqrt(),
            "v_l2": coupled.v.snapshots()[i].l2_norm(),
            "error_l2": error.snapshots()[i].l2_norm(),
        }))?;
    }
    let sup_error_sq = error.series(|f| f.l2_norm_sq()).into_iter().fold(0.0, f64::max);
    let summary = json!({
        "model": config.model,
        "eps": sim.eps,
        "sigma": spec.sigma,
        "c_zero": c_zero,
        "master_seed": config.master_seed,
        "sample": sim.sample,
        "steps": sim.steps,
        "sup_error_sq": sup_error_sq,
        "sup_error": sup_error_sq.sqrt(),
        "residual": residual_breakdown(&limit, &coupled.z, &spec)?,
        "noise": noise_norms(&coupled.z, &spec, c_zero, sim.study.p)?,
    });
    write_json(&run.file("summary.json"), &summary)?;

    for &ts in &sim.snapshots {
        let i = nearest_index(times, ts);
        let t = times[i];
        for (name, traj) in [("u_eps", &coupled.u_eps), ("u", &limit), ("z", &coupled.z), ("error", &error)] {
            let files = dump_field(run.dir(), &format!("{name}_{i:06}"), &traj.snapshots()[i], t)?;
            run.files.extend(files);
        }
    }
    println!("simulate: {} records in {}", times.len(), run.dir().display());
    Ok(())
}

fn nearest_index(times: &[f64], t: f64) -> usize {
    let mut best = 0;
    for (i, &s) in times.iter().enumerate() {
        if (s - t).abs() < (times[best] - t).abs() {
            best = i;
        }
    }
    best
}

fn cmd_study(config: &RunConfigFile, run: &mut Run<'_>) -> Result<()> {
    let study = config.study_config()?;
    let mode = config.study_mode();
    run.manifest.derive("mode", mode)?;
    match mode {
        StudyMode::Convergence => {
            let sink = NdjsonWriter::create(&run.file("records.ndjson"))?;
            let result = run_convergence_study_with(&study, &|r| sink.write(r))?;
            run.manifest.derive("c_zero", result.c_zero)?;
            write_json(&run.file("summary.json"), &result.summaries)?;
            write_summary_csv(&run.file("summary.csv"), &result.summaries)?;
            for s in &result.summaries {
                println!(
                    "eps {:<8} median sup error {:.4e}  p90 {:.4e}",
                    s.eps, s.median_sup_error, s.p90_sup_error
                );
            }
        }
        StudyMode::Theorem => {
            let sink = NdjsonWriter::create(&run.file("records.ndjson"))?;
            let report = theorem_inequality_check_with(&study, &|r| sink.write(r))?;
            run.manifest.derive("c_zero", report.c_zero)?;
            run.manifest.derive("gamma", report.gamma)?;
            run.manifest.derive("big_k", report.big_k)?;
            run.manifest.derive("gamma_from_pilot", report.gamma_from_pilot)?;
            run.manifest.derive("k_from_pilot", report.k_from_pilot)?;
            run.manifest.derive("pilot_eps", report.pilot_eps)?;
            run.manifest.derive("pilot_samples", report.pilot_samples)?;
            run.manifest.derive("verdict", report.verdict)?;
            write_json(&run.file("theorem.json"), &report)?;
            write_theorem_csv(&run.file("theorem.csv"), &report)?;
            for r in &report.rows {
                println!(
                    "eps {:<8} lhs {:.3}  rhs {:.3}  width {:.3}  {:?}",
                    r.eps, r.lhs.p_hat, r.rhs_sum, r.joint_width, r.verdict
                );
            }
        }
        StudyMode::Regimes => {
            let schedules = config.regime_schedules()?;
            let report = regime_scan(&study, &schedules)?;
            let blocks = NdjsonWriter::create(&run.file("regimes.ndjson"))?;
            for b in &report.blocks {
                blocks.write(b)?;
            }
            write_json(&run.file("regimes.json"), &report)?;
            write_regimes_csv(&run.file("regimes.csv"), &report)?;
            for b in &report.blocks {
                println!(
                    "{:<16} {:<13} l2 increasing {}  H^-1 bounded {}",
                    b.schedule.kind.as_str(),
                    b.tag,
                    b.l2_increasing,
                    b.h_minus1_bounded
                );
            }
        }
    }
    Ok(())
}

fn f(x: f64) -> String {
    format!("{x:e}")
}

fn write_summary_csv(path: &Path, summaries: &[EpsSummary]) -> Result<()> {
    let rows: Vec<Vec<String>> = summaries
        .iter()
        .map(|s| {
            vec![
                f(s.eps),
                f(s.sigma),
                s.samples.to_string(),
                f(s.median_sup_error),
                f(s.p90_sup_error),
                f(s.mean_residual.mean),
                f(s.mean_residual.se),
                s.eps_small.to_string(),
            ]
        })
        .collect();
    write_csv(
        path,
        &["eps", "sigma", "samples", "median_sup_error", "p90_sup_error", "mean_residual", "se_residual", "eps_small"],
        &rows,
    )
}

fn write_theorem_csv(path: &Path, report: &TheoremReport) -> Result<()> {
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![
                f(r.eps),
                r.samples.to_string(),
                f(r.lhs.p_hat),
                f(r.lhs.lower),
                f(r.lhs.upper),
                f(r.rhs_noise_sup.p_hat),
                f(r.rhs_initial.p_hat),
                f(r.rhs_residual.p_hat),
                f(r.rhs_sum),
                f(r.joint_width),
                r.gamma_admissible.to_string(),
                r.eps_small.to_string(),
                format!("{:?}", r.verdict).to_lowercase(),
            ]
        })
        .collect();
    write_csv(
        path,
        &[
            "eps",
            "samples",
            "lhs",
            "lhs_lower",
            "lhs_upper",
            "rhs_noise_sup",
            "rhs_initial",
            "rhs_residual",
            "rhs_sum",
            "joint_width",
            "gamma_admissible",
            "eps_small",
            "verdict",
        ],
        &rows,
    )
}

fn write_regimes_csv(path: &Path, report: &RegimeReport) -> Result<()> {
    let mut rows = Vec::new();
    for b in &report.blocks {
        for r in &b.rows {
            rows.push(vec![
                b.schedule.kind.as_str().to_string(),
                b.tag.clone(),
                f(r.eps),
                f(r.sigma),
                f(r.exact_l2_sq),
                f(r.mc_l2_sq.mean),
                f(r.mc_l2_sq.se),
                f(r.exact_h_minus1_sq),
                f(r.mc_h_minus1_sq.mean),
                f(r.mc_h_minus1_sq.se),
                r.median_error_plain_limit.map(f).unwrap_or_default(),
            ]);
        }
    }
    write_csv(
        path,
        &[
            "schedule",
            "tag",
            "eps",
            "sigma",
            "exact_l2_sq",
            "mc_l2_sq",
            "se_l2_sq",
            "exact_h_minus1_sq",
            "mc_h_minus1_sq",
            "se_h_minus1_sq",
            "median_error_plain_limit",
        ],
        &rows,
    )
}

fn cmd_renorm(config: &RunConfigFile, run: &mut Run<'_>) -> Result<()> {
    let rc = config.renorm_config()?;
    let mut lines: Vec<serde_json::Value> = Vec::new();
    let grid = make_grid(rc.n)?;

    println!("# C_eps over box cutoffs (model {}, schedule {})", rc.model, rc.schedule.kind.as_str());
    println!("{:>10} {:>12} {:>8} {:>16}", "eps", "sigma", "K", "C_eps");
    for &eps in &rc.eps {
        let spec = rc.spec(eps)?;
        for &k in &rc.cutoffs {
            let c = c_eps(&spec, Cutoff::Box(k))?;
            println!("{eps:>10} {:>12.6} {k:>8} {c:>16.10}", spec.sigma);
            lines.push(json!({"table": "c_eps", "eps": eps, "sigma": spec.sigma, "cutoff": k, "c_eps": c}));
        }
        let cg = c_eps_grid(&spec, &grid);
        println!("{eps:>10} {:>12.6} {:>8} {cg:>16.10}", spec.sigma, format!("n={}", rc.n));
        lines.push(json!({"table": "c_eps_grid", "eps": eps, "sigma": spec.sigma, "n": rc.n, "c_eps": cg}));
    }

    let regime = Regime::of(&rc.schedule);
    let mut eps_desc = rc.eps.clone();
    eps_desc.sort_by(|a, b| b.total_cmp(a));
    eps_desc.dedup();
    println!("# C0 ({})", regime.tag());
    if regime == Regime::Divergent {
        println!("divergent: true");
        lines.push(json!({"table": "c_zero", "regime": regime, "tag": regime.tag(), "divergent": true}));
    } else if eps_desc.len() >= 2
        && !(rc.model == crate::models::Model::AcMollifiedNoise && rc.mollifier == crate::models::Mollifier::None)
    {
        let est = c_zero_estimate_mollified(rc.model, rc.mollifier, &rc.schedule, &eps_desc)?;
        for r in &est.rows {
            let k = r.cutoff.map_or("lattice".to_string(), |k| k.to_string());
            println!("eps {:<10} K {:<8} C_eps {:.10}", r.eps, k, r.c_eps);
        }
        println!("differences {:?}", est.differences);
        println!("c_zero {}", est.c_zero.map_or("none".to_string(), |c| format!("{c:.10}")));
        lines.push(json!({
            "table": "c_zero",
            "regime": regime,
            "tag": regime.tag(),
            "divergent": false,
            "rows": est.rows,
            "differences": est.differences,
            "c_zero": est.c_zero,
        }));
    } else {
        println!("c_zero not estimated: needs two eps values and a finite C_eps");
    }

    let series_eps: Vec<f64> = eps_desc.iter().copied().filter(|&e| e < 0.5).collect();
    if rc.model != crate::models::Model::AcMollifiedNoise && !series_eps.is_empty() {
        println!("# series sum_k mu^(delta/2)/lambda");
        for &delta in &rc.deltas {
            let rep = match series_asymptotics(rc.model, &series_eps, delta) {
                Ok(rep) => rep,
                Err(e) => {
                    println!("delta {delta:<5} skipped: {e}");
                    lines.push(json!({"table": "series", "delta": delta, "skipped": e.to_string()}));
                    continue;
                }
            };
            for r in &rep.rows {
                println!(
                    "delta {delta:<5} eps {:<10} K {:<8} sum {:.8} ratio_to_log {:.6}",
                    r.eps,
                    r.cutoff.map_or("lattice".to_string(), |k| k.to_string()),
                    r.sum,
                    r.ratio_to_log
                );
            }
            println!(
                "delta {delta:<5} log-log slope {:.4} ratio spread {:.4}",
                rep.log_log_slope, rep.ratio_spread
            );
            lines.push(json!({"table": "series", "report": rep}));
        }
    }

    if run.dir.is_some() {
        let out = NdjsonWriter::create(&run.file("renorm.ndjson"))?;
        for l in &lines {
            out.write(l)?;
        }
    }
    Ok(())
}
