//! ODE integration for the closed-loop vector fields.
//!
//! [`integrate_adaptive`] is a Dormand–Prince 5(4) pair with per-component
//! error control; [`integrate_fixed_rk4`] is the classical fixed-step
//! scheme used to cross-check it. [`simulate`] wraps either around a
//! [`ClosedLoop`] and records per-sample metrics.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::ClosedLoop;
use crate::problem::{StateLayout, SystemState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegrateError {
    #[error("step size underflow at t = {t}: required step {step:e} is below min_step (stiff or discontinuous dynamics)")]
    StepUnderflow { t: f64, step: f64 },
    #[error("state became non-finite at t = {t}")]
    NonFinite { t: f64 },
    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(String),
    #[error("initial state has length {got}, closed loop expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Simulated end time.
    pub t_end: f64,
    pub max_step: f64,
    pub min_step: f64,
    /// Stop early once the stationarity measure drops to this level.
    pub stop_residual: Option<f64>,
    /// Record every `record_stride`-th accepted step (initial and final states are always kept).
    pub record_stride: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            abs_tol: 1e-8,
            rel_tol: 1e-6,
            t_end: 1.0,
            max_step: 0.1,
            min_step: 1e-9,
            stop_residual: None,
            record_stride: 1,
        }
    }
}

impl IntegratorConfig {
    pub fn with_t_end(mut self, t_end: f64) -> Self {
        self.t_end = t_end;
        self
    }

    pub fn with_tolerances(mut self, abs_tol: f64, rel_tol: f64) -> Self {
        self.abs_tol = abs_tol;
        self.rel_tol = rel_tol;
        self
    }

    pub fn with_stop_residual(mut self, stop: Option<f64>) -> Self {
        self.stop_residual = stop;
        self
    }

    pub fn with_record_stride(mut self, stride: usize) -> Self {
        self.record_stride = stride;
        self
    }

    pub fn validate(&self) -> Result<(), IntegrateError> {
        let err = |msg: String| Err(IntegrateError::InvalidConfig(msg));
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return err(format!(
                "tolerances must be positive (abs {}, rel {})",
                self.abs_tol, self.rel_tol
            ));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return err(format!(
                "t_end must be positive and finite, got {}",
                self.t_end
            ));
        }
        if !(self.min_step > 0.0 && self.min_step <= self.max_step) {
            return err(format!(
                "need 0 < min_step <= max_step (min {}, max {})",
                self.min_step, self.max_step
            ));
        }
        if self.record_stride == 0 {
            return err("record_stride must be at least 1".into());
        }
        if let Some(s) = self.stop_residual {
            if !(s > 0.0) {
                return err(format!("stop_residual must be positive, got {s}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    EndTime,
    Residual,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegrationStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

/// Raw integrator output on flat state vectors.
#[derive(Debug, Clone)]
pub struct Solution {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub stop: StopReason,
    /// Residual at the final state when a residual function was supplied.
    pub final_residual: Option<f64>,
    pub stats: IntegrationStats,
}

impl Solution {
    pub fn final_state(&self) -> &DVector<f64> {
        self.states
            .last()
            .expect("a solution always holds the initial state")
    }

    pub fn final_time(&self) -> f64 {
        *self
            .times
            .last()
            .expect("a solution always holds the initial time")
    }
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// b − b̂ (fifth minus embedded fourth order weights)
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 5.0;

fn all_finite(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Adaptive Dormand–Prince integration of `ẏ = rhs(t, y)` on `[0, cfg.t_end]`.
///
/// A step is accepted when `max_i |errᵢ| / (abs_tol + rel_tol·max(|yᵢ|, |ŷᵢ|)) ≤ 1`.
/// When both `residual` and `cfg.stop_residual` are given, integration
/// stops at the first accepted state whose residual is at most the
/// threshold.
pub fn integrate_adaptive<F, R>(
    mut rhs: F,
    y0: &DVector<f64>,
    cfg: &IntegratorConfig,
    mut residual: Option<R>,
) -> Result<Solution, IntegrateError>
where
    F: FnMut(f64, &DVector<f64>) -> DVector<f64>,
    R: FnMut(&DVector<f64>) -> f64,
{
    cfg.validate()?;
    if !all_finite(y0) {
        return Err(IntegrateError::NonFinite { t: 0.0 });
    }
    let mut stats = IntegrationStats::default();
    let mut t = 0.0;
    let mut y = y0.clone();
    let mut times = vec![t];
    let mut states = vec![y.clone()];
    let mut last_residual = None;

    let mut check = |y: &DVector<f64>| -> (Option<f64>, bool) {
        match residual.as_mut() {
            Some(r) => {
                let value = r(y);
                (Some(value), cfg.stop_residual.is_some_and(|s| value <= s))
            }
            None => (None, false),
        }
    };

    let (r0, done) = check(&y);
    last_residual = r0.or(last_residual);
    if done {
        return Ok(Solution {
            times,
            states,
            stop: StopReason::Residual,
            final_residual: last_residual,
            stats,
        });
    }

    let mut k1 = rhs(t, &y);
    stats.rhs_evals += 1;
    if !all_finite(&k1) {
        return Err(IntegrateError::NonFinite { t });
    }

    let mut h = initial_step(&y, &k1, cfg);
    let mut since_record = 0usize;
    let mut last_rejected = false;

    loop {
        let remaining = cfg.t_end - t;
        if remaining <= 1e-14 * cfg.t_end.max(1.0) {
            break;
        }
        let is_last = h >= remaining;
        let step = if is_last { remaining } else { h };

        let k2 = rhs(t + C2 * step, &(&y + &k1 * (A21 * step)));
        let k3 = rhs(t + C3 * step, &(&y + (&k1 * A31 + &k2 * A32) * step));
        let k4 = rhs(
            t + C4 * step,
            &(&y + (&k1 * A41 + &k2 * A42 + &k3 * A43) * step),
        );
        let k5 = rhs(
            t + C5 * step,
            &(&y + (&k1 * A51 + &k2 * A52 + &k3 * A53 + &k4 * A54) * step),
        );
        let k6 = rhs(
            t + step,
            &(&y + (&k1 * A61 + &k2 * A62 + &k3 * A63 + &k4 * A64 + &k5 * A65) * step),
        );
        let y_new = &y + (&k1 * B1 + &k3 * B3 + &k4 * B4 + &k5 * B5 + &k6 * B6) * step;
        let k7 = rhs(t + step, &y_new);
        stats.rhs_evals += 6;

        let err_vec = (&k1 * E1 + &k3 * E3 + &k4 * E4 + &k5 * E5 + &k6 * E6 + &k7 * E7) * step;
        let mut err = 0.0f64;
        for i in 0..y.len() {
            let scale = cfg.abs_tol + cfg.rel_tol * y[i].abs().max(y_new[i].abs());
            err = err.max(err_vec[i].abs() / scale);
        }
        let finite = err.is_finite() && all_finite(&y_new) && all_finite(&k7);

        if finite && err <= 1.0 {
            t = if is_last { cfg.t_end } else { t + step };
            y = y_new;
            k1 = k7;
            stats.accepted += 1;
            since_record += 1;

            let (r, done) = check(&y);
            last_residual = r.or(last_residual);
            let at_end = is_last || done;
            if since_record >= cfg.record_stride || at_end {
                times.push(t);
                states.push(y.clone());
                since_record = 0;
            }
            if done {
                return Ok(Solution {
                    times,
                    states,
                    stop: StopReason::Residual,
                    final_residual: last_residual,
                    stats,
                });
            }
            if is_last {
                break;
            }
            let mut fac = if err > 0.0 {
                SAFETY * err.powf(-0.2)
            } else {
                FAC_MAX
            };
            fac = fac.clamp(FAC_MIN, FAC_MAX);
            if last_rejected {
                fac = fac.min(1.0);
            }
            h = (step * fac).min(cfg.max_step);
            last_rejected = false;
        } else {
            stats.rejected += 1;
            let fac = if finite {
                (SAFETY * err.powf(-0.2)).clamp(FAC_MIN, 1.0)
            } else {
                FAC_MIN
            };
            h = step * fac;
            last_rejected = true;
            if h < cfg.min_step {
                return Err(if finite {
                    IntegrateError::StepUnderflow { t, step: h }
                } else {
                    IntegrateError::NonFinite { t }
                });
            }
        }
    }

    if *times.last().unwrap() != t {
        times.push(t);
        states.push(y.clone());
    }
    Ok(Solution {
        times,
        states,
        stop: StopReason::EndTime,
        final_residual: last_residual,
        stats,
    })
}

fn initial_step(y: &DVector<f64>, f0: &DVector<f64>, cfg: &IntegratorConfig) -> f64 {
    let scale = |i: usize| cfg.abs_tol + cfg.rel_tol * y[i].abs();
    let n = y.len().max(1) as f64;
    let d0 = (y
        .iter()
        .enumerate()
        .map(|(i, v)| (v / scale(i)).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    let d1 = (f0
        .iter()
        .enumerate()
        .map(|(i, v)| (v / scale(i)).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    let h = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    h.clamp(cfg.min_step, cfg.max_step).min(cfg.t_end)
}

/// Classical fixed-step RK4 on `[0, t_end]`; the last step is shortened to land on `t_end`.
pub fn integrate_fixed_rk4<F>(
    mut rhs: F,
    y0: &DVector<f64>,
    dt: f64,
    t_end: f64,
) -> Result<Solution, IntegrateError>
where
    F: FnMut(f64, &DVector<f64>) -> DVector<f64>,
{
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(IntegrateError::InvalidConfig(format!(
            "dt must be positive, got {dt}"
        )));
    }
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(IntegrateError::InvalidConfig(format!(
            "t_end must be positive, got {t_end}"
        )));
    }
    if dt > t_end {
        return Err(IntegrateError::InvalidConfig(format!(
            "dt = {dt} exceeds t_end = {t_end}; refusing a single partial step"
        )));
    }
    let steps = (t_end / dt - 1e-9).ceil() as usize;
    let mut stats = IntegrationStats::default();
    let mut y = y0.clone();
    let mut t = 0.0;
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    times.push(t);
    states.push(y.clone());
    for k in 0..steps {
        let h = if k + 1 == steps { t_end - t } else { dt };
        let k1 = rhs(t, &y);
        let k2 = rhs(t + 0.5 * h, &(&y + &k1 * (0.5 * h)));
        let k3 = rhs(t + 0.5 * h, &(&y + &k2 * (0.5 * h)));
        let k4 = rhs(t + h, &(&y + &k3 * h));
        stats.rhs_evals += 4;
        y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        t = if k + 1 == steps { t_end } else { t + h };
        if !all_finite(&y) {
            return Err(IntegrateError::NonFinite { t });
        }
        stats.accepted += 1;
        times.push(t);
        states.push(y.clone());
    }
    Ok(Solution {
        times,
        states,
        stop: StopReason::EndTime,
        final_residual: None,
        stats,
    })
}

/// Metrics derived from one recorded state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub res_stat: f64,
    pub res_feas: f64,
    /// `f(x) + g(x)`; infinite outside the domain of `g`.
    pub objective: f64,
}

/// A recorded closed-loop trajectory.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub layout: StateLayout,
    pub times: Vec<f64>,
    pub states: Vec<SystemState>,
    pub metrics: Vec<SampleMetrics>,
    pub stop: StopReason,
    pub stats: IntegrationStats,
}

impl Trajectory {
    pub fn final_state(&self) -> &SystemState {
        self.states
            .last()
            .expect("trajectory holds the initial state")
    }

    pub fn final_metrics(&self) -> &SampleMetrics {
        self.metrics
            .last()
            .expect("trajectory holds the initial state")
    }

    pub fn final_time(&self) -> f64 {
        *self
            .times
            .last()
            .expect("trajectory holds the initial state")
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Metrics of `s` under the closed loop's stationarity measure.
pub fn sample_metrics(cl: &ClosedLoop<'_>, s: &SystemState) -> SampleMetrics {
    let r = cl.residual(s);
    SampleMetrics {
        res_stat: r.stationarity,
        res_feas: r.feasibility,
        objective: cl.problem.objective(&s.x),
    }
}

fn to_trajectory(cl: &ClosedLoop<'_>, sol: Solution) -> Trajectory {
    let layout = cl.layout();
    let states: Vec<SystemState> = sol.states.iter().map(|y| layout.unpack(y)).collect();
    let metrics = states.iter().map(|s| sample_metrics(cl, s)).collect();
    Trajectory {
        layout,
        times: sol.times,
        states,
        metrics,
        stop: sol.stop,
        stats: sol.stats,
    }
}

fn check_initial(cl: &ClosedLoop<'_>, s0: &SystemState) -> Result<DVector<f64>, IntegrateError> {
    let layout = cl.layout();
    let flat = s0.to_flat();
    if s0.layout() != layout {
        return Err(IntegrateError::DimensionMismatch {
            expected: layout.len(),
            got: flat.len(),
        });
    }
    Ok(flat)
}

/// Integrates a closed loop adaptively from `s0`. The stopping rule, when
/// configured, uses [`ClosedLoop::stop_measure`].
pub fn simulate(
    cl: &ClosedLoop<'_>,
    s0: &SystemState,
    cfg: &IntegratorConfig,
) -> Result<Trajectory, IntegrateError> {
    let y0 = check_initial(cl, s0)?;
    let layout = cl.layout();
    let residual = cfg
        .stop_residual
        .map(|_| |y: &DVector<f64>| cl.stop_measure(&layout.unpack(y)));
    let sol = integrate_adaptive(|_, y| cl.rhs_flat(y), &y0, cfg, residual)?;
    Ok(to_trajectory(cl, sol))
}

/// Fixed-step RK4 counterpart of [`simulate`].
pub fn simulate_fixed(
    cl: &ClosedLoop<'_>,
    s0: &SystemState,
    dt: f64,
    t_end: f64,
) -> Result<Trajectory, IntegrateError> {
    let y0 = check_initial(cl, s0)?;
    let sol = integrate_fixed_rk4(|_, y| cl.rhs_flat(y), &y0, dt, t_end)?;
    Ok(to_trajectory(cl, sol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::dvector;

    type NoResidual = fn(&DVector<f64>) -> f64;

    #[test]
    fn exponential_decay_adaptive() {
        let cfg = IntegratorConfig::default().with_tolerances(1e-12, 1e-12);
        let sol = integrate_adaptive(|_, y| -y, &dvector![1.0], &cfg, None::<NoResidual>).unwrap();
        assert_eq!(sol.final_time(), 1.0);
        assert_abs_diff_eq!(sol.final_state()[0], (-1.0f64).exp(), epsilon = 1e-8);
        assert_eq!(sol.stop, StopReason::EndTime);
        assert!(sol.times.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn exponential_decay_rk4() {
        let sol = integrate_fixed_rk4(|_, y| -y, &dvector![1.0], 1e-3, 1.0).unwrap();
        assert_abs_diff_eq!(sol.final_state()[0], (-1.0f64).exp(), epsilon = 1e-10);
        assert_eq!(sol.final_time(), 1.0);
    }

    #[test]
    fn rk4_rejects_degenerate_steps() {
        assert!(matches!(
            integrate_fixed_rk4(|_, y| -y, &dvector![1.0], 2.0, 1.0),
            Err(IntegrateError::InvalidConfig(_))
        ));
        assert!(integrate_fixed_rk4(|_, y| -y, &dvector![1.0], 0.0, 1.0).is_err());
    }

    #[test]
    fn harmonic_oscillator_energy() {
        let cfg = IntegratorConfig {
            t_end: 10.0,
            ..IntegratorConfig::default().with_tolerances(1e-9, 1e-9)
        };
        let sol = integrate_adaptive(
            |_, y| dvector![y[1], -y[0]],
            &dvector![1.0, 0.0],
            &cfg,
            None::<NoResidual>,
        )
        .unwrap();
        for y in &sol.states {
            assert!((y.norm_squared() - 1.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn residual_stop_fires() {
        let cfg = IntegratorConfig {
            t_end: 100.0,
            stop_residual: Some(1e-3),
            ..IntegratorConfig::default()
        };
        let sol = integrate_adaptive(
            |_, y| -y,
            &dvector![1.0],
            &cfg,
            Some(|y: &DVector<f64>| y.norm()),
        )
        .unwrap();
        assert_eq!(sol.stop, StopReason::Residual);
        assert!(sol.final_residual.unwrap() <= 1e-3);
        assert!(sol.final_state()[0] <= 1e-3);
        assert!(sol.final_time() < 10.0);
    }

    #[test]
    fn immediate_stop_at_solution() {
        let cfg = IntegratorConfig {
            stop_residual: Some(1e-9),
            ..IntegratorConfig::default()
        };
        let sol = integrate_adaptive(
            |_, y| -y,
            &dvector![0.0],
            &cfg,
            Some(|y: &DVector<f64>| y.norm()),
        )
        .unwrap();
        assert_eq!(sol.stop, StopReason::Residual);
        assert_eq!(sol.times, vec![0.0]);
    }

    #[test]
    fn blow_up_is_reported() {
        let cfg = IntegratorConfig {
            t_end: 2.0,
            ..IntegratorConfig::default()
        };
        // ẏ = y², y(0) = 1 blows up at t = 1.
        let err = integrate_adaptive(
            |_, y| y.map(|v| v * v),
            &dvector![1.0],
            &cfg,
            None::<NoResidual>,
        )
        .unwrap_err();
        match err {
            IntegrateError::StepUnderflow { t, .. } | IntegrateError::NonFinite { t } => {
                assert!(t > 0.9 && t < 1.01, "t = {t}")
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        let bad = IntegratorConfig {
            min_step: 1.0,
            max_step: 0.1,
            ..IntegratorConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!(IntegratorConfig::default()
            .with_record_stride(0)
            .validate()
            .is_err());
        assert!(IntegratorConfig::default()
            .with_stop_residual(Some(0.0))
            .validate()
            .is_err());
        assert!(IntegratorConfig::default()
            .with_tolerances(0.0, 1e-6)
            .validate()
            .is_err());
    }

    #[test]
    fn record_stride_keeps_endpoints() {
        let cfg = IntegratorConfig {
            t_end: 5.0,
            max_step: 0.01,
            record_stride: 7,
            ..IntegratorConfig::default()
        };
        let sol = integrate_adaptive(|_, y| -y, &dvector![1.0], &cfg, None::<NoResidual>).unwrap();
        assert_eq!(sol.times[0], 0.0);
        assert_eq!(sol.final_time(), 5.0);
        assert!(sol.times.len() < sol.stats.accepted);
    }
}
