//! Unbiased Lasso: `min ½‖Ax − b‖² + ρ‖x‖₁` subject to `Aᵀ(Ax − b) = 0`.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{count_nonzero, seeded_rng, support_mismatch, ExperimentError};
use crate::dynamics::{ClosedLoop, DynamicsVariant, GainSet};
use crate::integrate::{
    simulate, IntegrateError, IntegrationStats, IntegratorConfig, StopReason, Trajectory,
};
use crate::problem::{
    least_squares_constants, AffineConstraint, CompositeProblem, KktResidual, LeastSquares,
    ProblemConstants, SystemState,
};
use crate::prox::L1Norm;

/// `|xᵢ| > SUPPORT_THRESHOLD` counts as nonzero.
pub const SUPPORT_THRESHOLD: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct LassoInstance {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub rho: f64,
    pub x_true: DVector<f64>,
    pub support_true: Vec<usize>,
}

impl LassoInstance {
    /// Noiseless instance `b = A x_true`.
    pub fn new(a: DMatrix<f64>, x_true: DVector<f64>, rho: f64) -> Result<Self, ExperimentError> {
        if a.ncols() != x_true.len() {
            return Err(ExperimentError::InvalidArgument(format!(
                "A has {} columns but x_true has {} entries",
                a.ncols(),
                x_true.len()
            )));
        }
        if !(rho > 0.0) {
            return Err(ExperimentError::InvalidArgument(format!(
                "rho must be positive, got {rho}"
            )));
        }
        let b = &a * &x_true;
        let support_true = (0..x_true.len()).filter(|&i| x_true[i] != 0.0).collect();
        Ok(Self {
            a,
            b,
            rho,
            x_true,
            support_true,
        })
    }

    pub fn n(&self) -> usize {
        self.a.ncols()
    }

    pub fn m(&self) -> usize {
        self.a.nrows()
    }

    /// `f = ½‖Ax − b‖²`, `g = ρ‖·‖₁`, `h(x) = AᵀA x − Aᵀb`, with constants
    /// from the spectrum of `AᵀA`.
    pub fn problem(&self) -> Result<CompositeProblem, ExperimentError> {
        let bounds = least_squares_constants(&self.a, true)?;
        let gram = self.a.tr_mul(&self.a);
        let offset = -self.a.tr_mul(&self.b);
        let h = AffineConstraint::new(gram, offset)?;
        let constants = ProblemConstants::new(
            bounds.lower,
            bounds.upper,
            bounds.lower * bounds.lower,
            bounds.upper * bounds.upper,
        )?;
        let f = LeastSquares::new(self.a.clone(), self.b.clone())?;
        Ok(
            CompositeProblem::new(Box::new(f), Box::new(L1Norm::new(self.rho)), Box::new(h))?
                .with_constants(constants),
        )
    }

    pub fn residual_norm(&self, x: &DVector<f64>) -> f64 {
        (&self.a * x - &self.b).norm()
    }

    pub fn support_error(&self, x: &DVector<f64>) -> usize {
        support_mismatch(x, &self.x_true, SUPPORT_THRESHOLD)
    }
}

/// Random instance: `A` has i.i.d. `N(0, 1/m)` entries, `x_true` has `s`
/// nonzeros uniform on `[−1, −0.5] ∪ [0.5, 1]`.
pub fn build_lasso(
    n: usize,
    m: usize,
    s: usize,
    rho: f64,
    seed: u64,
) -> Result<(LassoInstance, CompositeProblem), ExperimentError> {
    if !(m >= n && n >= s && s >= 1) {
        return Err(ExperimentError::InvalidArgument(format!(
            "need m >= n >= s >= 1, got m={m}, n={n}, s={s}"
        )));
    }
    let mut rng = seeded_rng(seed, 0);
    let normal = Normal::new(0.0, 1.0 / (m as f64).sqrt()).expect("positive standard deviation");
    let a = DMatrix::from_fn(m, n, |_, _| normal.sample(&mut rng));
    let mut x_true = DVector::zeros(n);
    let mut support: Vec<usize> = sample(&mut rng, n, s).into_vec();
    support.sort_unstable();
    for &i in &support {
        let magnitude = rng.random_range(0.5..=1.0);
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        x_true[i] = sign * magnitude;
    }
    let instance = LassoInstance::new(a, x_true, rho)?;
    let problem = instance.problem()?;
    Ok((instance, problem))
}

/// The methods and gains of the standard comparison, with PI-PGD using `γ = 1/L_f`.
pub fn default_methods(problem: &CompositeProblem) -> Vec<(DynamicsVariant, GainSet)> {
    let gamma = problem.constants().map(|c| 1.0 / c.l_f);
    super::Experiment::Lasso
        .methods()
        .iter()
        .map(|&m| {
            (
                m,
                super::default_gains(super::Experiment::Lasso, m, gamma).expect("lasso defaults"),
            )
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LassoSample {
    pub t: f64,
    pub residual: f64,
    pub l1: f64,
    pub l0: usize,
    pub support_error: usize,
}

#[derive(Debug, Clone)]
pub struct LassoRun {
    pub method: DynamicsVariant,
    pub gains: GainSet,
    pub path: Vec<LassoSample>,
    pub final_x: DVector<f64>,
    /// `‖Ax − b‖₂` at the final state.
    pub final_residual: f64,
    pub final_support_error: usize,
    pub final_l0: usize,
    pub final_l1: f64,
    /// `max_t ‖x(t)‖₁ / ‖x(T)‖₁ − 1`.
    pub l1_overshoot: f64,
    /// `‖x(T) − x_true‖∞`.
    pub error_vs_true: f64,
    pub final_kkt: KktResidual,
    pub stop: StopReason,
    pub stats: IntegrationStats,
    pub trajectory: Trajectory,
}

#[derive(Debug, Clone)]
pub struct LassoMethodReport {
    pub method: DynamicsVariant,
    pub outcome: Result<LassoRun, IntegrateError>,
}

/// Simulates one method from the zero state.
pub fn run_lasso_method(
    instance: &LassoInstance,
    problem: &CompositeProblem,
    method: DynamicsVariant,
    gains: GainSet,
    cfg: &IntegratorConfig,
) -> Result<Result<LassoRun, IntegrateError>, ExperimentError> {
    let cl = ClosedLoop::new(problem, method, gains)?;
    let s0 = SystemState::zeros(&cl.layout());
    let trajectory = match simulate(&cl, &s0, cfg) {
        Ok(t) => t,
        Err(e) => return Ok(Err(e)),
    };
    let path: Vec<LassoSample> = trajectory
        .times
        .iter()
        .zip(&trajectory.states)
        .map(|(&t, s)| LassoSample {
            t,
            residual: instance.residual_norm(&s.x),
            l1: s.x.lp_norm(1),
            l0: count_nonzero(&s.x, SUPPORT_THRESHOLD),
            support_error: instance.support_error(&s.x),
        })
        .collect();
    let last = *path.last().expect("trajectory holds the initial state");
    let max_l1 = path.iter().map(|p| p.l1).fold(0.0, f64::max);
    let final_x = trajectory.final_state().x.clone();
    let error_vs_true = (&final_x - &instance.x_true).amax();
    let final_kkt = cl.residual(trajectory.final_state());
    Ok(Ok(LassoRun {
        method,
        gains,
        final_residual: last.residual,
        final_support_error: last.support_error,
        final_l0: last.l0,
        final_l1: last.l1,
        l1_overshoot: if last.l1 > 0.0 {
            max_l1 / last.l1 - 1.0
        } else {
            0.0
        },
        error_vs_true,
        final_kkt,
        stop: trajectory.stop,
        stats: trajectory.stats,
        path,
        final_x,
        trajectory,
    }))
}

/// Runs every `(method, gains)` pair; an integrator failure is recorded for
/// that method and the suite carries on.
pub fn run_lasso_suite(
    instance: &LassoInstance,
    problem: &CompositeProblem,
    methods: &[(DynamicsVariant, GainSet)],
    cfg: &IntegratorConfig,
) -> Result<Vec<LassoMethodReport>, ExperimentError> {
    methods
        .iter()
        .map(|&(method, gains)| {
            if !super::Experiment::Lasso.methods().contains(&method) {
                return Err(ExperimentError::UnsupportedMethod(method));
            }
            Ok(LassoMethodReport {
                method,
                outcome: run_lasso_method(instance, problem, method, gains, cfg)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::kkt_residual;
    use approx::assert_abs_diff_eq;
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn constraint_vanishes_at_truth() {
        let (inst, p) = build_lasso(12, 15, 3, 1.0, 5).unwrap();
        assert!(p.h_value(&inst.x_true).amax() < 1e-12);
        assert_eq!(inst.support_true.len(), 3);
        for &i in &inst.support_true {
            assert!((0.5..=1.0).contains(&inst.x_true[i].abs()));
        }
        let c = p.constants().unwrap();
        assert!(c.m_f > 0.0 && c.m_f <= c.l_f);
        assert_abs_diff_eq!(c.a1, c.m_f * c.m_f, epsilon = 1e-15);
    }

    #[test]
    fn same_seed_same_instance() {
        let (a, _) = build_lasso(10, 12, 4, 1.0, 9).unwrap();
        let (b, _) = build_lasso(10, 12, 4, 1.0, 9).unwrap();
        let (c, _) = build_lasso(10, 12, 4, 1.0, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn scalar_instance_kkt() {
        // A = [1], x_true = 0.7: the constraint pins x = 0.7, and stationarity
        // x − 0.7 + ρ sign(x) + λ = 0 gives λ = −1.
        let inst = LassoInstance::new(dmatrix![1.0], dvector![0.7], 1.0).unwrap();
        let p = inst.problem().unwrap();
        let s = SystemState::new(dvector![0.7], None, Some(dvector![-1.0]));
        let r = kkt_residual(&p, &s, 0.5).unwrap();
        assert!(r.max() < 1e-15);
        let off = SystemState::new(dvector![0.7], None, Some(dvector![-0.5]));
        assert!(kkt_residual(&p, &off, 0.5).unwrap().stationarity > 0.1);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(build_lasso(5, 4, 2, 1.0, 0).is_err());
        assert!(build_lasso(5, 6, 0, 1.0, 0).is_err());
        assert!(LassoInstance::new(dmatrix![1.0], dvector![1.0], 0.0).is_err());
    }

    #[test]
    fn small_dynamic_run_recovers_truth() {
        let (inst, p) = build_lasso(6, 10, 2, 1.0, 1).unwrap();
        let gains = super::super::default_gains(
            super::super::Experiment::Lasso,
            DynamicsVariant::DynamicProxCmo,
            None,
        )
        .unwrap();
        let cfg = IntegratorConfig {
            t_end: 2000.0,
            max_step: 1.0,
            stop_residual: Some(1e-9),
            record_stride: 50,
            ..IntegratorConfig::default()
        };
        let run = run_lasso_method(&inst, &p, DynamicsVariant::DynamicProxCmo, gains, &cfg)
            .unwrap()
            .unwrap();
        assert!(run.final_residual < 1e-6, "{}", run.final_residual);
        assert_eq!(run.final_support_error, 0);
        assert!(run.error_vs_true < 1e-6);
    }
}
