//! Set-membership identification of a second-order plant on a Laguerre basis.
//!
//! For each coefficient `θᵢ` two problems `min ±θᵢ + ι_C(η)` subject to
//! `ỹ − Φθ − η = 0` give the interval `[θ_lowerᵢ, θ_upperᵢ]`, where `C` is
//! the intersection of an ∞-norm and a 2-norm ball.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{seeded_rng, Experiment, ExperimentError};
use crate::dynamics::{ClosedLoop, DynamicsVariant, GainSet};
use crate::integrate::{simulate, IntegrationStats, IntegratorConfig, StopReason, Trajectory};
use crate::problem::{
    AffineConstraint, CompositeProblem, LinearObjective, ProblemConstants, SystemState,
};
use crate::prox::{BlockSeparable, IntersectionIndicator, IntersectionSet, ProxOperator, Zero};

/// Recursion of the true plant: `y[k] = 1.34 y[k−1] − 0.4368 y[k−2] + u[k−2]`.
pub const PLANT_A1: f64 = 1.34;
pub const PLANT_A2: f64 = -0.4368;

/// Shape of the first Laguerre filter.
///
/// `Delayed` is `√(1−a²) z⁻¹ / (1 − a z⁻¹)`, the usual orthonormal basis for
/// strictly proper plants. `Undelayed` drops the `z⁻¹`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LaguerreForm {
    #[default]
    Delayed,
    Undelayed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SysidSettings {
    /// Laguerre pole.
    pub a: f64,
    /// Number of basis functions.
    pub d: usize,
    /// Identification samples.
    pub n_samples: usize,
    pub n_test: usize,
    /// Signal-to-noise ratio of the realized noise, in dB.
    pub snr_db: f64,
    /// `γ = inf_factor · ‖η‖∞`.
    pub inf_factor: f64,
    /// `ε = two_factor · ‖η‖₂`.
    pub two_factor: f64,
    pub form: LaguerreForm,
}

impl Default for SysidSettings {
    fn default() -> Self {
        Self {
            a: 0.75,
            d: 5,
            n_samples: 50,
            n_test: 1000,
            snr_db: 20.0,
            inf_factor: 1.5,
            two_factor: 1.7,
            form: LaguerreForm::Delayed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SysidInstance {
    pub settings: SysidSettings,
    pub u: DVector<f64>,
    pub y_true: DVector<f64>,
    /// Measured output `ỹ = y_true + η`.
    pub y_noisy: DVector<f64>,
    pub eta: DVector<f64>,
    pub phi: DMatrix<f64>,
    pub gamma_inf: f64,
    pub eps_2: f64,
    pub u_test: DVector<f64>,
    pub y_test: DVector<f64>,
    pub phi_test: DMatrix<f64>,
}

/// Output of the true plant for input `u`, zero initial conditions.
pub fn simulate_plant(u: &DVector<f64>) -> DVector<f64> {
    let mut y = DVector::zeros(u.len());
    for k in 0..u.len() {
        let y1 = if k >= 1 { y[k - 1] } else { 0.0 };
        let y2 = if k >= 2 { y[k - 2] } else { 0.0 };
        let u2 = if k >= 2 { u[k - 2] } else { 0.0 };
        y[k] = PLANT_A1 * y1 + PLANT_A2 * y2 + u2;
    }
    y
}

/// `Φ[k, i]` is the response of the `i`-th Laguerre filter to `u`.
pub fn laguerre_regressors(u: &DVector<f64>, a: f64, d: usize, form: LaguerreForm) -> DMatrix<f64> {
    let n = u.len();
    let gain = (1.0 - a * a).sqrt();
    let mut phi = DMatrix::zeros(n, d);
    if d == 0 {
        return phi;
    }
    for k in 0..n {
        let prev = if k >= 1 { phi[(k - 1, 0)] } else { 0.0 };
        let input = match form {
            LaguerreForm::Delayed => {
                if k >= 1 {
                    u[k - 1]
                } else {
                    0.0
                }
            }
            LaguerreForm::Undelayed => u[k],
        };
        phi[(k, 0)] = a * prev + gain * input;
    }
    // all-pass section (z⁻¹ − a)/(1 − a z⁻¹)
    for i in 1..d {
        for k in 0..n {
            let out_prev = if k >= 1 { phi[(k - 1, i)] } else { 0.0 };
            let in_prev = if k >= 1 { phi[(k - 1, i - 1)] } else { 0.0 };
            phi[(k, i)] = a * out_prev + in_prev - a * phi[(k, i - 1)];
        }
    }
    phi
}

fn uniform_signal<R: Rng>(rng: &mut R, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-1.0..=1.0))
}

/// Instance with the default settings.
pub fn build_sysid(seed: u64) -> SysidInstance {
    build_sysid_with(seed, SysidSettings::default()).expect("default settings are valid")
}

/// Uniform input and noise; the noise is rescaled so that its realized
/// energy sits exactly `snr_db` below the output's.
pub fn build_sysid_with(
    seed: u64,
    settings: SysidSettings,
) -> Result<SysidInstance, ExperimentError> {
    if !(settings.a > 0.0 && settings.a < 1.0) {
        return Err(ExperimentError::InvalidArgument(format!(
            "Laguerre pole must be in (0, 1), got {}",
            settings.a
        )));
    }
    if settings.d == 0 || settings.n_samples < settings.d || settings.n_test == 0 {
        return Err(ExperimentError::InvalidArgument(format!(
            "need 1 <= d <= n_samples and n_test >= 1 (d={}, n_samples={}, n_test={})",
            settings.d, settings.n_samples, settings.n_test
        )));
    }
    let mut rng = seeded_rng(seed, 0);
    let u = uniform_signal(&mut rng, settings.n_samples);
    let y_true = simulate_plant(&u);
    let raw = uniform_signal(&mut rng, settings.n_samples);
    let scale = y_true.norm() / (raw.norm() * 10f64.powf(settings.snr_db / 20.0));
    let eta = raw * scale;
    let u_test = uniform_signal(&mut rng, settings.n_test);
    let y_test = simulate_plant(&u_test);
    let phi = laguerre_regressors(&u, settings.a, settings.d, settings.form);
    let phi_test = laguerre_regressors(&u_test, settings.a, settings.d, settings.form);
    Ok(SysidInstance {
        settings,
        y_noisy: &y_true + &eta,
        gamma_inf: settings.inf_factor * eta.amax(),
        eps_2: settings.two_factor * eta.norm(),
        u,
        y_true,
        eta,
        phi,
        u_test,
        y_test,
        phi_test,
    })
}

/// Noise-free variant: the measurement is replaced by `Φ θ_ref`, with
/// `θ_ref` the least-squares fit of the true output, and both noise bounds
/// set to `bound`.
pub fn build_sysid_noise_free(
    seed: u64,
    bound: f64,
) -> Result<(SysidInstance, DVector<f64>), ExperimentError> {
    let mut inst = build_sysid_with(seed, SysidSettings::default())?;
    let theta_ref = least_squares_theta(&inst.phi, &inst.y_true)?;
    inst.y_noisy = &inst.phi * &theta_ref;
    inst.eta = DVector::zeros(inst.y_noisy.len());
    inst.gamma_inf = bound;
    inst.eps_2 = bound;
    Ok((inst, theta_ref))
}

fn least_squares_theta(
    phi: &DMatrix<f64>,
    y: &DVector<f64>,
) -> Result<DVector<f64>, ExperimentError> {
    phi.clone()
        .svd(true, true)
        .solve(y, 1e-12)
        .map_err(|e| ExperimentError::InvalidArgument(format!("least-squares solve failed: {e}")))
}

/// `100 (1 − √(‖y − ŷ‖ / ‖y − ȳ‖))`.
pub fn fit_percentage(y: &DVector<f64>, y_hat: &DVector<f64>) -> f64 {
    100.0 * (1.0 - (fit_ratio(y, y_hat)).sqrt())
}

/// `100 (1 − ‖y − ŷ‖ / ‖y − ȳ‖)`, the more common normalized fit.
pub fn fit_percentage_standard(y: &DVector<f64>, y_hat: &DVector<f64>) -> f64 {
    100.0 * (1.0 - fit_ratio(y, y_hat))
}

fn fit_ratio(y: &DVector<f64>, y_hat: &DVector<f64>) -> f64 {
    let mean = y.mean();
    (y - y_hat).norm() / y.map(|v| v - mean).norm()
}

/// Problem `min sign·θᵢ + ι_C(η)` s.t. `ỹ − Φθ − η = 0` over `x = (θ, η)`.
pub fn sysid_problem(
    inst: &SysidInstance,
    index: usize,
    sign: f64,
) -> Result<CompositeProblem, ExperimentError> {
    let d = inst.phi.ncols();
    let n = inst.phi.nrows();
    if index >= d {
        return Err(ExperimentError::InvalidArgument(format!(
            "coefficient index {index} out of range 0..{d}"
        )));
    }
    let mut c = DVector::zeros(d + n);
    c[index] = sign;
    let set = IntersectionSet::new(inst.gamma_inf, inst.eps_2)?;
    let blocks: Vec<(usize, Box<dyn ProxOperator>)> = vec![
        (d, Box::new(Zero)),
        (n, Box::new(IntersectionIndicator::new(set))),
    ];
    let mut cm = DMatrix::zeros(n, d + n);
    cm.view_mut((0, 0), (n, d)).copy_from(&(-&inst.phi));
    cm.view_mut((0, d), (n, n)).fill_diagonal(-1.0);
    let h = AffineConstraint::new(cm, inst.y_noisy.clone())?;
    let bounds = h.constants()?;
    let constants = ProblemConstants::new(0.0, 0.0, bounds.lower, bounds.upper)?;
    Ok(CompositeProblem::new(
        Box::new(LinearObjective { c }),
        Box::new(BlockSeparable::new(blocks)),
        Box::new(h),
    )?
    .with_constants(constants))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubproblemRecord {
    pub index: usize,
    /// `+1` for the lower bound, `−1` for the upper bound.
    pub sign: f64,
    pub theta_value: f64,
    /// `‖ỹ − Φθ − η‖₂` at the endpoint.
    pub constraint_residual: f64,
    /// `max(‖η‖∞ − γ, ‖η‖₂ − ε, 0)` at the endpoint.
    pub set_violation: f64,
    pub final_time: f64,
    pub stop: Option<StopReason>,
    pub stats: IntegrationStats,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SysidResult {
    pub method: DynamicsVariant,
    pub gains: GainSet,
    pub theta_lower: Vec<f64>,
    pub theta_upper: Vec<f64>,
    pub theta_hat: Vec<f64>,
    pub fit: f64,
    pub fit_standard: f64,
    pub max_constraint_residual: f64,
    pub max_set_violation: f64,
    pub subproblems: Vec<SubproblemRecord>,
}

impl SysidResult {
    pub fn failures(&self) -> usize {
        self.subproblems
            .iter()
            .filter(|s| s.failure.is_some())
            .count()
    }
}

/// Solves the `2d` bound problems in order `θ₁ lower, θ₁ upper, θ₂ lower, …`,
/// each warm-started from the previous endpoint (the first from zero).
pub fn run_sysid(
    inst: &SysidInstance,
    method: DynamicsVariant,
    gains: GainSet,
    cfg: &IntegratorConfig,
) -> Result<SysidResult, ExperimentError> {
    run_sysid_traced(inst, method, gains, cfg).map(|(r, _)| r)
}

/// [`run_sysid`] plus the trajectory of every subproblem (`None` where the
/// integrator failed), in subproblem order.
pub fn run_sysid_traced(
    inst: &SysidInstance,
    method: DynamicsVariant,
    gains: GainSet,
    cfg: &IntegratorConfig,
) -> Result<(SysidResult, Vec<Option<Trajectory>>), ExperimentError> {
    if !Experiment::Sysid.methods().contains(&method) {
        return Err(ExperimentError::UnsupportedMethod(method));
    }
    let d = inst.phi.ncols();
    let set = IntersectionSet::new(inst.gamma_inf, inst.eps_2)?;
    let mut lower = vec![f64::NAN; d];
    let mut upper = vec![f64::NAN; d];
    let mut records = Vec::with_capacity(2 * d);
    let mut trajectories = Vec::with_capacity(2 * d);
    let mut warm: Option<SystemState> = None;

    for i in 0..d {
        for sign in [1.0, -1.0] {
            let problem = sysid_problem(inst, i, sign)?;
            let cl = ClosedLoop::new(&problem, method, gains)?;
            let s0 = warm
                .clone()
                .unwrap_or_else(|| SystemState::zeros(&cl.layout()));
            let record = match simulate(&cl, &s0, cfg) {
                Ok(traj) => {
                    let s = traj.final_state().clone();
                    let eta = s.x.rows(d, s.x.len() - d).into_owned();
                    let violation = (eta.amax() - set.inf_radius())
                        .max(eta.norm() - set.two_radius())
                        .max(0.0);
                    let value = s.x[i];
                    if sign > 0.0 {
                        lower[i] = value;
                    } else {
                        upper[i] = value;
                    }
                    let rec = SubproblemRecord {
                        index: i,
                        sign,
                        theta_value: value,
                        constraint_residual: problem.h_value(&s.x).norm(),
                        set_violation: violation,
                        final_time: traj.final_time(),
                        stop: Some(traj.stop),
                        stats: traj.stats,
                        failure: None,
                    };
                    warm = Some(s);
                    trajectories.push(Some(traj));
                    rec
                }
                Err(e) => {
                    trajectories.push(None);
                    SubproblemRecord {
                        index: i,
                        sign,
                        theta_value: f64::NAN,
                        constraint_residual: f64::NAN,
                        set_violation: f64::NAN,
                        final_time: f64::NAN,
                        stop: None,
                        stats: IntegrationStats::default(),
                        failure: Some(e.to_string()),
                    }
                }
            };
            records.push(record);
        }
    }

    let theta_hat: Vec<f64> = lower
        .iter()
        .zip(&upper)
        .map(|(l, u)| 0.5 * (l + u))
        .collect();
    let y_hat = &inst.phi_test * DVector::from_column_slice(&theta_hat);
    let max_of =
        |f: fn(&SubproblemRecord) -> f64| records.iter().map(f).fold(0.0, |a: f64, b| a.max(b));
    let result = SysidResult {
        method,
        gains,
        fit: fit_percentage(&inst.y_test, &y_hat),
        fit_standard: fit_percentage_standard(&inst.y_test, &y_hat),
        max_constraint_residual: max_of(|r| {
            if r.constraint_residual.is_nan() {
                f64::INFINITY
            } else {
                r.constraint_residual
            }
        }),
        max_set_violation: max_of(|r| {
            if r.set_violation.is_nan() {
                f64::INFINITY
            } else {
                r.set_violation
            }
        }),
        theta_lower: lower,
        theta_upper: upper,
        theta_hat,
        subproblems: records,
    };
    Ok((result, trajectories))
}
