//! `run`: executes one experiment and writes its artifacts.
//!
//! Simulations fan out over rayon workers and hand back file contents; the
//! coordinator writes everything once all jobs have finished, so a fatal
//! error leaves no partial output behind.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use proxcmo::dynamics::{ClosedLoop, DynamicsVariant, GainSet};
use proxcmo::experiments::lasso::{build_lasso, run_lasso_method, LassoRun};
use proxcmo::experiments::shidoku::{run_shidoku, ShidokuRun};
use proxcmo::experiments::sysid::{
    build_sysid, build_sysid_noise_free, run_sysid_traced, SysidInstance, SysidResult,
};
use proxcmo::experiments::{default_gains, default_integrator, Experiment};
use proxcmo::gains::{
    theorem1_certify, theorem3_certify, theorem4_certify, Theorem, TheoremCertificate,
};
use proxcmo::integrate::{simulate, IntegratorConfig, StopReason, Trajectory};
use proxcmo::problem::{
    spectral_bounds, AffineConstraint, CompositeProblem, ConstraintMap, ProblemConstants,
    QuadraticForm, SystemState, Unconstrained,
};
use proxcmo::prox::L1Norm;
use rayon::prelude::*;

use crate::config::{CustomConfig, ExperimentKind, RunConfig};
use crate::summary::{
    finite, Aggregate, LassoMetrics, MethodSummary, RunRecord, RunSummary, ShidokuMetrics,
    SysidMetrics,
};
use crate::CliError;

const NONCONVEX_NOTE: &str = "outside theorem assumptions: g is the indicator of a nonconvex set";

/// Gains for `custom` runs before overrides. `k2 = k1 − k3` puts the
/// dynamic loop's rest point on the KKT point.
pub const CUSTOM_GAINS: GainSet = GainSet {
    mu: 1.0,
    kp: 1.0,
    ki: 1.0,
    k1: 1.0,
    k2: -2.0,
    k3: 3.0,
    gamma: 1.0,
};

pub fn custom_integrator() -> IntegratorConfig {
    IntegratorConfig {
        t_end: 100.0,
        max_step: 1.0,
        stop_residual: Some(1e-8),
        record_stride: 1,
        ..IntegratorConfig::default()
    }
}

pub fn summary_file_name(kind: ExperimentKind) -> String {
    format!("{kind}-summary.json")
}

/// Header and rows of a trajectory: time, state blocks, then the metrics.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut out = String::from("t");
    for name in traj.layout.column_names() {
        out.push(',');
        out.push_str(&name);
    }
    out.push_str(",res_stat,res_feas,obj\n");
    for ((t, s), m) in traj.times.iter().zip(&traj.states).zip(&traj.metrics) {
        write!(out, "{t}").unwrap();
        for v in s.to_flat().iter() {
            write!(out, ",{v}").unwrap();
        }
        writeln!(out, ",{},{},{}", m.res_stat, m.res_feas, m.objective).unwrap();
    }
    out
}

struct Job {
    record: RunRecord,
    files: Vec<(String, String)>,
    failures: usize,
}

struct MethodOutput {
    method: DynamicsVariant,
    integrator: IntegratorConfig,
    note: Option<String>,
    jobs: Vec<Job>,
}

fn empty_record(run: usize, seed: u64, gains: GainSet) -> RunRecord {
    RunRecord {
        run,
        gains,
        seed,
        trajectories: Vec::new(),
        final_time: None,
        stop: None,
        accepted_steps: 0,
        rejected_steps: 0,
        res_stat: None,
        res_feas: None,
        objective: None,
        failure: None,
        lasso: None,
        shidoku: None,
        sysid: None,
    }
}

fn fill_from_trajectory(rec: &mut RunRecord, traj: &Trajectory) {
    let m = traj.final_metrics();
    rec.final_time = finite(traj.final_time());
    rec.stop = Some(traj.stop);
    rec.accepted_steps = traj.stats.accepted;
    rec.rejected_steps = traj.stats.rejected;
    rec.res_stat = finite(m.res_stat);
    rec.res_feas = finite(m.res_feas);
    rec.objective = finite(m.objective);
}

fn integrator_for(cfg: &RunConfig, base: IntegratorConfig) -> Result<IntegratorConfig, CliError> {
    let c = cfg.integrator.apply(base);
    c.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(c)
}

fn check_gains(
    problem: &CompositeProblem,
    method: DynamicsVariant,
    gains: GainSet,
) -> Result<(), CliError> {
    ClosedLoop::new(problem, method, gains)
        .map(|_| ())
        .map_err(|e| CliError::Config(format!("{method}: {e}")))
}

fn instance_seed(seed: u64, run: usize) -> u64 {
    seed.wrapping_add(run as u64)
}

fn lasso_job(
    cfg: &RunConfig,
    method: DynamicsVariant,
    run: usize,
    icfg: &IntegratorConfig,
) -> Result<Job, CliError> {
    let seed = instance_seed(cfg.seed, run);
    let l = cfg.lasso;
    let (inst, problem) =
        build_lasso(l.n, l.m, l.s, l.rho, seed).map_err(|e| CliError::Config(e.to_string()))?;
    let gamma = problem.constants().map(|c| 1.0 / c.l_f);
    let gains = cfg
        .gains
        .apply(default_gains(Experiment::Lasso, method, gamma).expect("lasso method"));
    check_gains(&problem, method, gains)?;
    let mut rec = empty_record(run, seed, gains);
    let mut files = Vec::new();
    match run_lasso_method(&inst, &problem, method, gains, icfg)? {
        Ok(r) => {
            let LassoRun {
                trajectory, path, ..
            } = &r;
            fill_from_trajectory(&mut rec, trajectory);
            let stem = format!("lasso-{method}-run{run}");
            rec.trajectories.push(format!("{stem}.csv"));
            files.push((format!("{stem}.csv"), trajectory_csv(trajectory)));
            let mut fig = String::from("t,l1_norm,residual,l0_norm,support_error\n");
            for p in path {
                writeln!(
                    fig,
                    "{},{},{},{},{}",
                    p.t, p.l1, p.residual, p.l0, p.support_error
                )
                .unwrap();
            }
            files.push((format!("{stem}-path.csv"), fig));
            rec.lasso = Some(LassoMetrics {
                residual: r.final_residual,
                l0: r.final_l0,
                l1: r.final_l1,
                support_error: r.final_support_error,
                l1_overshoot: r.l1_overshoot,
                error_vs_true: r.error_vs_true,
            });
            Ok(Job {
                record: rec,
                files,
                failures: 0,
            })
        }
        Err(e) => {
            rec.failure = Some(e.to_string());
            Ok(Job {
                record: rec,
                files,
                failures: 1,
            })
        }
    }
}

fn run_lasso(cfg: &RunConfig, methods: &[DynamicsVariant]) -> Result<Vec<MethodOutput>, CliError> {
    let icfg = integrator_for(cfg, default_integrator(Experiment::Lasso))?;
    let pairs: Vec<(DynamicsVariant, usize)> = methods
        .iter()
        .flat_map(|&m| (0..cfg.runs).map(move |r| (m, r)))
        .collect();
    let mut jobs: Vec<Job> = pairs
        .par_iter()
        .map(|&(m, r)| lasso_job(cfg, m, r, &icfg))
        .collect::<Result<_, _>>()?;
    Ok(methods
        .iter()
        .map(|&method| MethodOutput {
            method,
            integrator: icfg,
            note: None,
            jobs: jobs.drain(..cfg.runs).collect(),
        })
        .collect())
}

fn grid_row(out: &mut String, r: &ShidokuRun) {
    write!(out, "{},{}", r.index, r.success as u8).unwrap();
    for row in 0..4 {
        for col in 0..4 {
            match r.grid {
                Some(g) => write!(out, ",{}", g[row][col]).unwrap(),
                None => out.push(','),
            }
        }
    }
    out.push('\n');
}

fn run_shidoku_experiment(
    cfg: &RunConfig,
    methods: &[DynamicsVariant],
) -> Result<Vec<MethodOutput>, CliError> {
    let icfg = integrator_for(cfg, default_integrator(Experiment::Shidoku))?;
    methods
        .iter()
        .map(|&method| {
            let gains = cfg
                .gains
                .apply(default_gains(Experiment::Shidoku, method, None).expect("shidoku method"));
            let report = run_shidoku(method, gains, cfg.runs, cfg.seed, &icfg)
                .map_err(|e| CliError::Config(format!("{method}: {e}")))?;
            let mut grids = String::from("run,success");
            for row in 0..4 {
                for col in 0..4 {
                    write!(grids, ",c{row}{col}").unwrap();
                }
            }
            grids.push('\n');
            let mut jobs: Vec<Job> = report
                .runs
                .iter()
                .map(|r| {
                    grid_row(&mut grids, r);
                    let mut rec = empty_record(r.index, cfg.seed, gains);
                    let mut files = Vec::new();
                    if let Some(traj) = &r.trajectory {
                        fill_from_trajectory(&mut rec, traj);
                        let name = format!("shidoku-{method}-run{}.csv", r.index);
                        rec.trajectories.push(name.clone());
                        files.push((name, trajectory_csv(traj)));
                    }
                    rec.failure = r.failure.clone();
                    rec.shidoku = Some(ShidokuMetrics {
                        success: r.success,
                        grid: r.grid,
                    });
                    Job {
                        record: rec,
                        failures: r.failure.is_some() as usize,
                        files,
                    }
                })
                .collect();
            if let Some(first) = jobs.first_mut() {
                first
                    .files
                    .push((format!("shidoku-{method}-grids.csv"), grids));
            }
            Ok(MethodOutput {
                method,
                integrator: icfg,
                note: Some(NONCONVEX_NOTE.to_string()),
                jobs,
            })
        })
        .collect()
}

fn sysid_instance(
    cfg: &RunConfig,
    seed: u64,
) -> Result<(SysidInstance, Option<DVector<f64>>), CliError> {
    if cfg.sysid.noise_free {
        let (inst, theta) = build_sysid_noise_free(seed, cfg.sysid.bound)
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok((inst, Some(theta)))
    } else {
        Ok((build_sysid(seed), None))
    }
}

fn opt_vec(v: &[f64]) -> Vec<Option<f64>> {
    v.iter().map(|&x| finite(x)).collect()
}

fn sysid_files(
    stem: &str,
    inst: &SysidInstance,
    res: &SysidResult,
    reference: Option<&DVector<f64>>,
) -> Vec<(String, String)> {
    let mut bounds = String::from("param,lower,upper,estimate");
    if reference.is_some() {
        bounds.push_str(",reference");
    }
    bounds.push('\n');
    for i in 0..res.theta_hat.len() {
        write!(
            bounds,
            "{i},{},{},{}",
            res.theta_lower[i], res.theta_upper[i], res.theta_hat[i]
        )
        .unwrap();
        if let Some(r) = reference {
            write!(bounds, ",{}", r[i]).unwrap();
        }
        bounds.push('\n');
    }
    let theta = DVector::from_column_slice(&res.theta_hat);
    let y_hat = &inst.phi_test * &theta;
    let mut output = String::from("k,u,y,y_hat\n");
    for k in 0..inst.y_test.len() {
        writeln!(
            output,
            "{k},{},{},{}",
            inst.u_test[k], inst.y_test[k], y_hat[k]
        )
        .unwrap();
    }
    vec![
        (format!("{stem}-bounds.csv"), bounds),
        (format!("{stem}-output.csv"), output),
    ]
}

fn sysid_job(
    cfg: &RunConfig,
    method: DynamicsVariant,
    run: usize,
    icfg: &IntegratorConfig,
) -> Result<Job, CliError> {
    let seed = instance_seed(cfg.seed, run);
    let (inst, reference) = sysid_instance(cfg, seed)?;
    let gains = cfg
        .gains
        .apply(default_gains(Experiment::Sysid, method, None).expect("sysid method"));
    let (res, trajs) = run_sysid_traced(&inst, method, gains, icfg)
        .map_err(|e| CliError::Config(format!("{method}: {e}")))?;
    let mut rec = empty_record(run, seed, gains);
    let mut files = Vec::new();
    let stem = format!("sysid-{method}-run{run}");
    let mut any_end_time = false;
    let mut total_time = 0.0;
    let (mut stat, mut feas) = (None::<f64>, None::<f64>);
    for (sub, traj) in res.subproblems.iter().zip(&trajs) {
        let Some(traj) = traj else { continue };
        let side = if sub.sign > 0.0 { "lower" } else { "upper" };
        let name = format!("{stem}-theta{}-{side}.csv", sub.index);
        rec.trajectories.push(name.clone());
        files.push((name, trajectory_csv(traj)));
        rec.accepted_steps += traj.stats.accepted;
        rec.rejected_steps += traj.stats.rejected;
        total_time += traj.final_time();
        any_end_time |= traj.stop == StopReason::EndTime;
        let m = traj.final_metrics();
        stat = Some(stat.map_or(m.res_stat, |s| s.max(m.res_stat)));
        feas = Some(feas.map_or(m.res_feas, |s| s.max(m.res_feas)));
    }
    if !rec.trajectories.is_empty() {
        rec.final_time = finite(total_time);
        rec.stop = Some(if any_end_time {
            StopReason::EndTime
        } else {
            StopReason::Residual
        });
    }
    rec.res_stat = stat.and_then(finite);
    rec.res_feas = feas.and_then(finite);
    let failures = res.failures();
    if failures > 0 {
        rec.failure = Some(format!(
            "{failures} of {} bound problems failed",
            res.subproblems.len()
        ));
    }
    files.extend(sysid_files(&stem, &inst, &res, reference.as_ref()));
    rec.sysid = Some(SysidMetrics {
        theta_lower: opt_vec(&res.theta_lower),
        theta_upper: opt_vec(&res.theta_upper),
        theta_hat: opt_vec(&res.theta_hat),
        fit: finite(res.fit),
        fit_standard: finite(res.fit_standard),
        max_constraint_residual: finite(res.max_constraint_residual),
        max_set_violation: finite(res.max_set_violation),
        failed_subproblems: failures,
    });
    Ok(Job {
        record: rec,
        files,
        failures,
    })
}

fn run_sysid_experiment(
    cfg: &RunConfig,
    methods: &[DynamicsVariant],
) -> Result<Vec<MethodOutput>, CliError> {
    let icfg = integrator_for(cfg, default_integrator(Experiment::Sysid))?;
    let pairs: Vec<(DynamicsVariant, usize)> = methods
        .iter()
        .flat_map(|&m| (0..cfg.runs).map(move |r| (m, r)))
        .collect();
    let mut jobs: Vec<Job> = pairs
        .par_iter()
        .map(|&(m, r)| sysid_job(cfg, m, r, &icfg))
        .collect::<Result<_, _>>()?;
    Ok(methods
        .iter()
        .map(|&method| MethodOutput {
            method,
            integrator: icfg,
            note: None,
            jobs: jobs.drain(..cfg.runs).collect(),
        })
        .collect())
}

fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>, CliError> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(CliError::Config(format!(
            "custom.{what}: expected a non-empty rectangular matrix"
        )));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

/// Builds the `custom` problem; constants are attached when `H ⪰ 0`.
pub fn custom_problem(c: &CustomConfig) -> Result<CompositeProblem, CliError> {
    let bad = |e: &dyn std::fmt::Display| CliError::Config(format!("custom: {e}"));
    let h = matrix_from_rows(&c.hessian, "hessian")?;
    let f = QuadraticForm::new(h.clone(), DVector::from_column_slice(&c.linear))
        .map_err(|e| bad(&e))?;
    let g = L1Norm::new(c.l1_weight);
    let n = h.nrows();
    let (map, a_bounds): (Box<dyn ConstraintMap>, Option<(f64, f64)>) =
        match (&c.constraint_matrix, &c.constraint_offset) {
            (Some(cm), off) => {
                let cm = matrix_from_rows(cm, "constraint_matrix")?;
                let b = match off {
                    Some(o) => DVector::from_column_slice(o),
                    None => DVector::zeros(cm.nrows()),
                };
                let sb = spectral_bounds(&(&cm * cm.transpose())).map_err(|e| bad(&e))?;
                (
                    Box::new(AffineConstraint::new(cm, b).map_err(|e| bad(&e))?),
                    Some((sb.lower, sb.upper)),
                )
            }
            (None, Some(_)) => {
                return Err(CliError::Config(
                    "custom.constraint_offset needs constraint_matrix".into(),
                ))
            }
            (None, None) => (Box::new(Unconstrained(n)), Some((0.0, 0.0))),
        };
    let mut problem = CompositeProblem::new(Box::new(f), Box::new(g), map).map_err(|e| bad(&e))?;
    let hb = spectral_bounds(&h).map_err(|e| bad(&e))?;
    if let Some((a1, a2)) = a_bounds {
        if let Ok(k) = ProblemConstants::new(hb.lower.max(0.0), hb.upper, a1.max(0.0), a2) {
            problem = problem.with_constants(k);
        }
    }
    Ok(problem)
}

fn run_custom(cfg: &RunConfig, methods: &[DynamicsVariant]) -> Result<Vec<MethodOutput>, CliError> {
    let c = cfg
        .custom
        .as_ref()
        .ok_or_else(|| CliError::Config("experiment custom needs a `custom` block".into()))?;
    let problem = custom_problem(c)?;
    let icfg = integrator_for(cfg, custom_integrator())?;
    let gains = cfg.gains.apply(CUSTOM_GAINS);
    let x0 = match &c.x0 {
        Some(v) if v.len() == problem.dim_x() => DVector::from_column_slice(v),
        Some(v) => {
            return Err(CliError::Config(format!(
                "custom.x0 has {} entries, expected {}",
                v.len(),
                problem.dim_x()
            )))
        }
        None => DVector::zeros(problem.dim_x()),
    };
    // with no explicit selection, skip variants that do not accept this problem
    let methods: Vec<DynamicsVariant> = if cfg.methods.is_empty() {
        methods
            .iter()
            .copied()
            .filter(|&m| ClosedLoop::new(&problem, m, gains).is_ok())
            .collect()
    } else {
        methods.to_vec()
    };
    methods
        .iter()
        .map(|&method| {
            let cl = ClosedLoop::new(&problem, method, gains)
                .map_err(|e| CliError::Config(format!("{method}: {e}")))?;
            let mut s0 = SystemState::zeros(&cl.layout());
            s0.x = x0.clone();
            let mut rec = empty_record(0, cfg.seed, gains);
            let mut files = Vec::new();
            let mut failures = 0;
            match simulate(&cl, &s0, &icfg) {
                Ok(traj) => {
                    fill_from_trajectory(&mut rec, &traj);
                    let name = format!("custom-{method}.csv");
                    rec.trajectories.push(name.clone());
                    files.push((name, trajectory_csv(&traj)));
                }
                Err(e) => {
                    rec.failure = Some(e.to_string());
                    failures = 1;
                }
            }
            Ok(MethodOutput {
                method,
                integrator: icfg,
                note: None,
                jobs: vec![Job {
                    record: rec,
                    files,
                    failures,
                }],
            })
        })
        .collect()
}

fn require(v: Option<f64>, flag: &str, theorem: Theorem) -> Result<f64, CliError> {
    v.ok_or_else(|| CliError::Config(format!("certify {theorem:?} needs --{flag}")))
}

/// Evaluates the requested certificate from the gain and certify blocks.
pub fn certify(cfg: &RunConfig) -> Result<TheoremCertificate, CliError> {
    let c = cfg.certify;
    let g = cfg.gains;
    let th = c
        .theorem
        .ok_or_else(|| CliError::Config("certify needs --theorem (t1, t3 or t4)".into()))?;
    let mf = require(c.mf, "mf", th)?;
    let lf = require(c.lf, "lf", th)?;
    let mu = require(g.mu, "mu", th)?;
    Ok(match th {
        Theorem::T1 => theorem1_certify(
            mf,
            lf,
            mu,
            require(g.ki, "ki", th)?,
            require(c.epsilon, "epsilon", th)?,
            require(c.a1, "a1", th)?,
        ),
        Theorem::T3 => theorem3_certify(
            require(g.k1, "k1", th)?,
            require(g.k2, "k2", th)?,
            require(g.k3, "k3", th)?,
            mu,
            mf,
            lf,
        ),
        Theorem::T4 => theorem4_certify(
            require(g.k1, "k1", th)?,
            require(g.k2, "k2", th)?,
            require(g.k3, "k3", th)?,
            mu,
            mf,
            lf,
            require(c.a1, "a1", th)?,
            require(g.ki, "ki", th)?,
            require(g.kp, "kp", th)?,
        ),
    })
}

/// Runs the experiment without touching the filesystem.
fn execute(cfg: &RunConfig) -> Result<(RunSummary, Vec<(String, String)>), CliError> {
    let kind = cfg.experiment()?;
    let methods = cfg.method_list()?;
    if kind != ExperimentKind::Certify && kind != ExperimentKind::Custom && cfg.runs == 0 {
        return Err(CliError::Config("runs must be at least 1".into()));
    }
    let mut echo = cfg.clone();
    echo.out_dir = None;
    let mut summary = RunSummary {
        experiment: kind,
        config: echo,
        methods: Vec::new(),
        certificate: None,
        artifacts: Vec::new(),
        integrator_failures: 0,
    };
    let outputs = match kind {
        ExperimentKind::Certify => {
            summary.certificate = Some(certify(cfg)?);
            Vec::new()
        }
        ExperimentKind::Lasso => run_lasso(cfg, &methods)?,
        ExperimentKind::Shidoku => run_shidoku_experiment(cfg, &methods)?,
        ExperimentKind::Sysid => run_sysid_experiment(cfg, &methods)?,
        ExperimentKind::Custom => run_custom(cfg, &methods)?,
    };
    let mut files = Vec::new();
    for out in outputs {
        let mut runs = Vec::with_capacity(out.jobs.len());
        for job in out.jobs {
            summary.integrator_failures += job.failures;
            files.extend(job.files);
            runs.push(job.record);
        }
        summary.methods.push(MethodSummary {
            method: out.method,
            integrator: out.integrator,
            note: out.note,
            aggregate: Aggregate::from_runs(&runs),
            runs,
        });
    }
    summary.artifacts = files.iter().map(|(name, _)| name.clone()).collect();
    Ok((summary, files))
}

/// Tracks written files so that a failed run can be rolled back.
struct Writer {
    dir: PathBuf,
    created_dir: bool,
    written: Vec<PathBuf>,
}

impl Writer {
    fn new(dir: &Path) -> Result<Self, CliError> {
        let created_dir = !dir.exists();
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            created_dir,
            written: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        self.written.push(path);
        Ok(())
    }

    fn roll_back(self) {
        for p in &self.written {
            let _ = std::fs::remove_file(p);
        }
        if self.created_dir {
            let _ = std::fs::remove_dir(&self.dir);
        }
    }
}

/// Executes `cfg` and writes the artifacts and `<experiment>-summary.json`
/// into `out_dir`.
pub fn cmd_run(cfg: &RunConfig, out_dir: &Path) -> Result<RunSummary, CliError> {
    let (summary, files) = execute(cfg)?;
    let mut writer = Writer::new(out_dir)?;
    let result = files
        .iter()
        .try_for_each(|(name, text)| writer.write(name, text))
        .and_then(|_| writer.write(&summary_file_name(summary.experiment), &summary.to_json()));
    match result {
        Ok(()) => Ok(summary),
        Err(e) => {
            writer.roll_back();
            Err(e)
        }
    }
}
