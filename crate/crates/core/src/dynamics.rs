//! Closed-loop vector fields.
//!
//! The plant is the gradient flow of the proximal augmented Lagrangian,
//! driven by the multipliers `α` (for the nonsmooth split `x = z`) and `λ`
//! (for `h(x) = 0`). Each [`DynamicsVariant`] closes the loop differently;
//! the PI law `λ̇ = k_p J_h(x) ẋ + k_i h(x)` always has `ẋ` substituted in so
//! every variant is an explicit ODE.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::problem::{
    kkt_residual, CompositeProblem, KktResidual, ProblemError, StateLayout, SystemState,
};
use crate::prox::moreau_gradient_from_prox;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("unknown dynamics variant `{0}`")]
    UnknownVariant(String),
    #[error("invalid gains for {variant}: {reason}")]
    InvalidGains {
        variant: DynamicsVariant,
        reason: String,
    },
    #[error("variant {variant} requires {requirement}")]
    Layout {
        variant: DynamicsVariant,
        requirement: &'static str,
    },
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

/// Controller parameters. Fields a variant does not use are ignored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainSet {
    pub mu: f64,
    pub kp: f64,
    pub ki: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub gamma: f64,
}

impl Default for GainSet {
    fn default() -> Self {
        Self {
            mu: 1.0,
            kp: 0.0,
            ki: 0.0,
            k1: 0.0,
            k2: 0.0,
            k3: 0.0,
            gamma: 1.0,
        }
    }
}

impl GainSet {
    /// Static Prox-CMO gains.
    pub fn static_cmo(mu: f64, kp: f64, ki: f64) -> Self {
        Self {
            mu,
            kp,
            ki,
            ..Self::default()
        }
    }

    /// Dynamic Prox-CMO gains.
    pub fn dynamic_cmo(mu: f64, k1: f64, k2: f64, k3: f64, kp: f64, ki: f64) -> Self {
        Self {
            mu,
            kp,
            ki,
            k1,
            k2,
            k3,
            ..Self::default()
        }
    }

    /// PI-PGD gains (`gamma` is the prox step).
    pub fn pi_pgd(gamma: f64, kp: f64, ki: f64) -> Self {
        Self {
            gamma,
            kp,
            ki,
            ..Self::default()
        }
    }

    /// PI-CMO gains.
    pub fn pi_cmo(kp: f64, ki: f64) -> Self {
        Self {
            kp,
            ki,
            ..Self::default()
        }
    }

    /// Checks the fields `variant` reads.
    pub fn validate(&self, variant: DynamicsVariant) -> Result<(), DynamicsError> {
        let bad = |reason: String| DynamicsError::InvalidGains { variant, reason };
        let finite = |name: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(bad(format!("{name} must be finite, got {v}")))
            }
        };
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(bad(format!("{name} must be positive, got {v}")))
            }
        };
        use DynamicsVariant::*;
        match variant {
            StaticProxCmo => {
                positive("mu", self.mu)?;
                finite("kp", self.kp)?;
                finite("ki", self.ki)
            }
            DynamicProxCmo => {
                positive("mu", self.mu)?;
                for (name, v) in [
                    ("k1", self.k1),
                    ("k2", self.k2),
                    ("k3", self.k3),
                    ("kp", self.kp),
                    ("ki", self.ki),
                ] {
                    finite(name, v)?;
                }
                Ok(())
            }
            DynamicProxCmoUnconstrained => {
                positive("mu", self.mu)?;
                for (name, v) in [("k1", self.k1), ("k2", self.k2), ("k3", self.k3)] {
                    finite(name, v)?;
                }
                Ok(())
            }
            ProxGradFlow | NsPdgd => positive("mu", self.mu),
            PiPgd => {
                positive("gamma", self.gamma)?;
                finite("kp", self.kp)?;
                finite("ki", self.ki)
            }
            PiCmo => {
                finite("kp", self.kp)?;
                finite("ki", self.ki)
            }
            GradFlow => Ok(()),
        }
    }
}

/// Which closed loop to simulate. The tag fixes the state layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DynamicsVariant {
    StaticProxCmo,
    DynamicProxCmo,
    DynamicProxCmoUnconstrained,
    ProxGradFlow,
    NsPdgd,
    PiPgd,
    PiCmo,
    GradFlow,
}

impl DynamicsVariant {
    pub const ALL: [DynamicsVariant; 8] = [
        Self::StaticProxCmo,
        Self::DynamicProxCmo,
        Self::DynamicProxCmoUnconstrained,
        Self::ProxGradFlow,
        Self::NsPdgd,
        Self::PiPgd,
        Self::PiCmo,
        Self::GradFlow,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::StaticProxCmo => "static-prox-cmo",
            Self::DynamicProxCmo => "dynamic-prox-cmo",
            Self::DynamicProxCmoUnconstrained => "dynamic-prox-cmo-unconstrained",
            Self::ProxGradFlow => "prox-grad-flow",
            Self::NsPdgd => "ns-pdgd",
            Self::PiPgd => "pi-pgd",
            Self::PiCmo => "pi-cmo",
            Self::GradFlow => "grad-flow",
        }
    }

    pub fn has_alpha(self) -> bool {
        matches!(
            self,
            Self::DynamicProxCmo | Self::DynamicProxCmoUnconstrained | Self::NsPdgd
        )
    }

    pub fn has_lambda(self) -> bool {
        matches!(
            self,
            Self::StaticProxCmo | Self::DynamicProxCmo | Self::PiPgd | Self::PiCmo
        )
    }

    /// Variants that ignore `h` entirely.
    pub fn is_unconstrained(self) -> bool {
        !self.has_lambda()
    }

    pub fn layout(self, n: usize, m: usize) -> StateLayout {
        StateLayout {
            n,
            alpha: self.has_alpha(),
            m: if self.has_lambda() { m } else { 0 },
        }
    }
}

impl fmt::Display for DynamicsVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DynamicsVariant {
    type Err = DynamicsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let v = match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "static-prox-cmo" | "static" => Self::StaticProxCmo,
            "dynamic-prox-cmo" | "dynamic" => Self::DynamicProxCmo,
            "dynamic-prox-cmo-unconstrained" | "dynamic-unconstrained" => {
                Self::DynamicProxCmoUnconstrained
            }
            "prox-grad-flow" | "pgf" => Self::ProxGradFlow,
            "ns-pdgd" | "nspdgd" => Self::NsPdgd,
            "pi-pgd" | "pipgd" => Self::PiPgd,
            "pi-cmo" | "picmo" => Self::PiCmo,
            "grad-flow" | "gradflow" | "gradient-descent" => Self::GradFlow,
            _ => return Err(DynamicsError::UnknownVariant(s.to_string())),
        };
        Ok(v)
    }
}

/// Plant output: `ẋ`, `y₁ = x − prox_{μg}(x + μα)` and `y₂ = h(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantOutput {
    pub xdot: DVector<f64>,
    pub y1: DVector<f64>,
    pub y2: DVector<f64>,
}

fn alpha_of<'s>(
    variant: DynamicsVariant,
    s: &'s SystemState,
) -> Result<&'s DVector<f64>, DynamicsError> {
    s.alpha.as_ref().ok_or(DynamicsError::Layout {
        variant,
        requirement: "an alpha block",
    })
}

fn lambda_of<'s>(
    variant: DynamicsVariant,
    p: &CompositeProblem,
    s: &'s SystemState,
) -> Result<Option<&'s DVector<f64>>, DynamicsError> {
    if p.dim_h() > 0 && s.lambda.is_none() {
        return Err(DynamicsError::Layout {
            variant,
            requirement: "a lambda block when h is present",
        });
    }
    Ok(s.lambda.as_ref())
}

/// `ẋ = −∇f − ∇M_{μg}(x+μα) − J_hᵀλ` with outputs `y₁`, `y₂`.
pub fn plant_rhs(
    p: &CompositeProblem,
    s: &SystemState,
    gains: &GainSet,
) -> Result<PlantOutput, DynamicsError> {
    p.check_state(s)?;
    let variant = DynamicsVariant::DynamicProxCmo;
    let alpha = alpha_of(variant, s)?;
    let lambda = lambda_of(variant, p, s)?;
    let mu = gains.mu;
    let x = &s.x;
    let v = x + alpha * mu;
    let z = p.prox(&v, mu);
    let grad_m = moreau_gradient_from_prox(&v, &z, mu);
    let xdot = -(p.f_grad(x) + grad_m + p.jt_lambda(x, lambda));
    Ok(PlantOutput {
        xdot,
        y1: x - z,
        y2: p.h_value(x),
    })
}

/// `λ̇ = k_p J_h(x) ẋ + k_i h(x)`.
fn pi_multiplier_rate(
    p: &CompositeProblem,
    x: &DVector<f64>,
    xdot: &DVector<f64>,
    gains: &GainSet,
) -> DVector<f64> {
    if p.dim_h() == 0 {
        return DVector::zeros(0);
    }
    p.h().jacobian_mul(x, xdot) * gains.kp + p.h_value(x) * gains.ki
}

/// Static Prox-CMO: `α = −∇f(x)` fed into the plant.
pub fn static_proxcmo_rhs(
    p: &CompositeProblem,
    s: &SystemState,
    gains: &GainSet,
) -> Result<(DVector<f64>, DVector<f64>), DynamicsError> {
    p.check_state(s)?;
    let variant = DynamicsVariant::StaticProxCmo;
    let lambda = lambda_of(variant, p, s)?;
    let mu = gains.mu;
    let x = &s.x;
    let w = x - p.f_grad(x) * mu;
    let xdot = (p.prox(&w, mu) - x) / mu - p.jt_lambda(x, lambda);
    let lambdadot = pi_multiplier_rate(p, x, &xdot, gains);
    Ok((xdot, lambdadot))
}

/// Dynamic Prox-CMO with `α̇ = k₁(∇f + J_hᵀλ) + k₂α + k₃∇M_{μg}(x+μα)`.
pub fn dynamic_proxcmo_rhs(
    p: &CompositeProblem,
    s: &SystemState,
    gains: &GainSet,
) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>), DynamicsError> {
    p.check_state(s)?;
    let variant = DynamicsVariant::DynamicProxCmo;
    let alpha = alpha_of(variant, s)?;
    let lambda = lambda_of(variant, p, s)?;
    let x = &s.x;
    let drift = p.f_grad(x) + p.jt_lambda(x, lambda);
    let (xdot, alphadot) = alpha_loop(p, x, alpha, &drift, gains);
    let lambdadot = pi_multiplier_rate(p, x, &xdot, gains);
    Ok((xdot, alphadot, lambdadot))
}

/// Dynamic Prox-CMO with every `λ`/`h` term dropped.
pub fn dynamic_unconstrained_rhs(
    p: &CompositeProblem,
    s: &SystemState,
    gains: &GainSet,
) -> Result<(DVector<f64>, DVector<f64>), DynamicsError> {
    p.check_state(s)?;
    let alpha = alpha_of(DynamicsVariant::DynamicProxCmoUnconstrained, s)?;
    let x = &s.x;
    Ok(alpha_loop(p, x, alpha, &p.f_grad(x), gains))
}

/// Shared `(ẋ, α̇)` for the dynamic controller given `drift = ∇f + J_hᵀλ`.
fn alpha_loop(
    p: &CompositeProblem,
    x: &DVector<f64>,
    alpha: &DVector<f64>,
    drift: &DVector<f64>,
    gains: &GainSet,
) -> (DVector<f64>, DVector<f64>) {
    let mu = gains.mu;
    let v = x + alpha * mu;
    let grad_m = moreau_gradient_from_prox(&v, &p.prox(&v, mu), mu);
    let xdot = -(drift + &grad_m);
    let alphadot = drift * gains.k1 + alpha * gains.k2 + grad_m * gains.k3;
    (xdot, alphadot)
}

/// Right-hand side of the comparison dynamics: proximal gradient flow,
/// NS-PDGD, PI-PGD, PI-CMO and plain gradient flow. The Prox-CMO variants
/// are accepted too and dispatch to their own functions.
pub fn baseline_rhs(
    variant: DynamicsVariant,
    p: &CompositeProblem,
    s: &SystemState,
    gains: &GainSet,
) -> Result<SystemState, DynamicsError> {
    p.check_state(s)?;
    let x = &s.x;
    use DynamicsVariant::*;
    let out = match variant {
        StaticProxCmo => {
            let (xdot, lambdadot) = static_proxcmo_rhs(p, s, gains)?;
            SystemState::new(xdot, None, nonempty(lambdadot))
        }
        DynamicProxCmo => {
            let (xdot, alphadot, lambdadot) = dynamic_proxcmo_rhs(p, s, gains)?;
            SystemState::new(xdot, Some(alphadot), nonempty(lambdadot))
        }
        DynamicProxCmoUnconstrained => {
            let (xdot, alphadot) = dynamic_unconstrained_rhs(p, s, gains)?;
            SystemState::new(xdot, Some(alphadot), None)
        }
        ProxGradFlow => {
            // ẋ = −∇f(x) − ∇M_{μg}(x − μ∇f(x))
            let mu = gains.mu;
            let grad = p.f_grad(x);
            let w = x - &grad * mu;
            let grad_m = moreau_gradient_from_prox(&w, &p.prox(&w, mu), mu);
            SystemState::new(-grad - grad_m, None, None)
        }
        NsPdgd => {
            let alpha = alpha_of(variant, s)?;
            let mu = gains.mu;
            let v = x + alpha * mu;
            let grad_m = moreau_gradient_from_prox(&v, &p.prox(&v, mu), mu);
            let xdot = -(p.f_grad(x) + &grad_m);
            let alphadot = grad_m * mu - alpha * mu;
            SystemState::new(xdot, Some(alphadot), None)
        }
        PiPgd => {
            let lambda = lambda_of(variant, p, s)?;
            let step = gains.gamma;
            let w = x - (p.f_grad(x) + p.jt_lambda(x, lambda)) * step;
            let xdot = p.prox(&w, step) - x;
            let lambdadot = pi_multiplier_rate(p, x, &xdot, gains);
            SystemState::new(xdot, None, nonempty(lambdadot))
        }
        PiCmo => {
            let lambda = lambda_of(variant, p, s)?;
            let xdot = -(p.f_grad(x) + p.jt_lambda(x, lambda));
            let lambdadot = pi_multiplier_rate(p, x, &xdot, gains);
            SystemState::new(xdot, None, nonempty(lambdadot))
        }
        GradFlow => SystemState::new(-p.f_grad(x), None, None),
    };
    Ok(out)
}

fn nonempty(v: DVector<f64>) -> Option<DVector<f64>> {
    (!v.is_empty()).then_some(v)
}

/// Any variant's right-hand side.
pub fn rhs(
    variant: DynamicsVariant,
    p: &CompositeProblem,
    s: &SystemState,
    gains: &GainSet,
) -> Result<SystemState, DynamicsError> {
    baseline_rhs(variant, p, s, gains)
}

/// A problem, a closed-loop variant and its gains.
#[derive(Debug, Clone, Copy)]
pub struct ClosedLoop<'a> {
    pub problem: &'a CompositeProblem,
    pub variant: DynamicsVariant,
    pub gains: GainSet,
}

impl<'a> ClosedLoop<'a> {
    pub fn new(
        problem: &'a CompositeProblem,
        variant: DynamicsVariant,
        gains: GainSet,
    ) -> Result<Self, DynamicsError> {
        gains.validate(variant)?;
        if variant == DynamicsVariant::DynamicProxCmoUnconstrained && problem.dim_h() > 0 {
            return Err(DynamicsError::Layout {
                variant,
                requirement: "a problem without equality constraints",
            });
        }
        Ok(Self {
            problem,
            variant,
            gains,
        })
    }

    pub fn layout(&self) -> StateLayout {
        self.variant
            .layout(self.problem.dim_x(), self.problem.dim_h())
    }

    pub fn rhs(&self, s: &SystemState) -> Result<SystemState, DynamicsError> {
        rhs(self.variant, self.problem, s, &self.gains)
    }

    /// Right-hand side on flat vectors. Panics on a layout mismatch, which
    /// [`ClosedLoop::layout`] rules out for vectors it produced.
    pub fn rhs_flat(&self, y: &DVector<f64>) -> DVector<f64> {
        let s = self.layout().unpack(y);
        match self.rhs(&s) {
            Ok(d) => d.to_flat(),
            Err(e) => panic!("closed-loop rhs failed on a well-formed state: {e}"),
        }
    }

    /// Proximal parameter used by this variant's stationarity measure.
    pub fn residual_mu(&self) -> f64 {
        match self.variant {
            DynamicsVariant::PiPgd => self.gains.gamma,
            DynamicsVariant::PiCmo | DynamicsVariant::GradFlow => 1.0,
            _ => self.gains.mu,
        }
    }

    /// Stationarity/feasibility of the primal-dual pair carried by `s`.
    ///
    /// Gradient flow ignores `g` and `h`, so its stationarity is `‖∇f(x)‖`.
    /// Variants without `λ` are measured with `λ = 0`.
    pub fn residual(&self, s: &SystemState) -> KktResidual {
        let p = self.problem;
        if self.variant == DynamicsVariant::GradFlow {
            return KktResidual {
                stationarity: p.f_grad(&s.x).norm(),
                feasibility: p.h_value(&s.x).norm(),
            };
        }
        let lambda = match (&s.lambda, p.dim_h()) {
            (Some(l), _) => Some(l.clone()),
            (None, 0) => None,
            (None, m) => Some(DVector::zeros(m)),
        };
        let probe = SystemState::new(s.x.clone(), None, lambda);
        kkt_residual(p, &probe, self.residual_mu())
            .expect("state checked against the problem layout")
    }

    /// The state the stopping rule and reports use: `max(r_stat, r_feas)`.
    pub fn stop_measure(&self, s: &SystemState) -> f64 {
        self.residual(s).max()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{AffineConstraint, QuadraticForm, Unconstrained};
    use crate::prox::{L1Norm, Zero};
    use approx::assert_abs_diff_eq;
    use nalgebra::{dmatrix, dvector, DMatrix};

    fn lasso_1d() -> CompositeProblem {
        CompositeProblem::new(
            Box::new(QuadraticForm::new(dmatrix![1.0], dvector![-2.0]).unwrap()),
            Box::new(L1Norm::default()),
            Box::new(Unconstrained(1)),
        )
        .unwrap()
    }

    #[test]
    fn variant_names_round_trip() {
        for v in DynamicsVariant::ALL {
            assert_eq!(v.name().parse::<DynamicsVariant>().unwrap(), v);
        }
        assert_eq!(
            "dynamic".parse::<DynamicsVariant>().unwrap(),
            DynamicsVariant::DynamicProxCmo
        );
        assert_eq!(
            "bogus".parse::<DynamicsVariant>(),
            Err(DynamicsError::UnknownVariant("bogus".into()))
        );
    }

    #[test]
    fn layouts_follow_the_tag() {
        assert_eq!(
            DynamicsVariant::DynamicProxCmo.layout(3, 2),
            StateLayout {
                n: 3,
                alpha: true,
                m: 2
            }
        );
        assert_eq!(
            DynamicsVariant::StaticProxCmo.layout(3, 2),
            StateLayout {
                n: 3,
                alpha: false,
                m: 2
            }
        );
        assert_eq!(
            DynamicsVariant::GradFlow.layout(3, 2),
            StateLayout {
                n: 3,
                alpha: false,
                m: 0
            }
        );
    }

    #[test]
    fn gain_validation() {
        let g = GainSet::static_cmo(0.0, 1.0, 1.0);
        assert!(g.validate(DynamicsVariant::StaticProxCmo).is_err());
        assert!(g.validate(DynamicsVariant::PiCmo).is_ok());
        let g = GainSet::dynamic_cmo(1.0, f64::NAN, -1.0, 1.0, 0.0, 0.0);
        assert!(g.validate(DynamicsVariant::DynamicProxCmo).is_err());
        assert!(GainSet::pi_pgd(-1.0, 1.0, 1.0)
            .validate(DynamicsVariant::PiPgd)
            .is_err());
    }

    #[test]
    fn plant_at_origin_optimum() {
        let p = CompositeProblem::new(
            Box::new(QuadraticForm::new(dmatrix![1.0], dvector![0.0]).unwrap()),
            Box::new(L1Norm::default()),
            Box::new(Unconstrained(1)),
        )
        .unwrap();
        let s = SystemState::new(dvector![0.0], Some(dvector![0.0]), None);
        let out = plant_rhs(&p, &s, &GainSet::default()).unwrap();
        assert_eq!(out.xdot, dvector![0.0]);
        assert_eq!(out.y1, dvector![0.0]);
        assert!(out.y2.is_empty());
    }

    #[test]
    fn plant_at_saddle_point() {
        // f = ½(x − 2)², g = |x|: x* = 1, α* = −∇f(x*) = 1.
        let p = lasso_1d();
        let s = SystemState::new(dvector![1.0], Some(dvector![1.0]), None);
        let out = plant_rhs(&p, &s, &GainSet::default()).unwrap();
        assert_abs_diff_eq!(out.xdot[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(out.y1[0], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn static_without_constraints_is_scaled_prox_gradient() {
        let p = lasso_1d();
        let gains = GainSet::static_cmo(0.5, 1.0, 1.0);
        let s = SystemState::new(dvector![0.3], None, None);
        let (xdot, lambdadot) = static_proxcmo_rhs(&p, &s, &gains).unwrap();
        assert!(lambdadot.is_empty());
        // w = 0.3 − 0.5(0.3 − 2) = 1.15, prox = 0.65
        assert_abs_diff_eq!(xdot[0], (0.65 - 0.3) / 0.5, epsilon = 1e-14);
    }

    #[test]
    fn pgf_with_zero_g_is_gradient_flow() {
        let p = CompositeProblem::new(
            Box::new(
                QuadraticForm::new(dmatrix![2.0, 0.5; 0.5, 1.0], dvector![1.0, -1.0]).unwrap(),
            ),
            Box::new(Zero),
            Box::new(Unconstrained(2)),
        )
        .unwrap();
        let s = SystemState::new(dvector![0.4, -1.3], None, None);
        let pgf = baseline_rhs(DynamicsVariant::ProxGradFlow, &p, &s, &GainSet::default()).unwrap();
        let gf = baseline_rhs(DynamicsVariant::GradFlow, &p, &s, &GainSet::default()).unwrap();
        assert_abs_diff_eq!(pgf.x, gf.x, epsilon = 1e-14);
    }

    #[test]
    fn pi_pgd_zero_at_kkt_point() {
        // min ½‖x‖² + |x₁| + |x₂| s.t. x₁ + x₂ = 2: x* = (1, 1), λ* = −2.
        let p = CompositeProblem::new(
            Box::new(QuadraticForm::new(DMatrix::identity(2, 2), DVector::zeros(2)).unwrap()),
            Box::new(L1Norm::default()),
            Box::new(AffineConstraint::new(dmatrix![1.0, 1.0], dvector![-2.0]).unwrap()),
        )
        .unwrap();
        let s = SystemState::new(dvector![1.0, 1.0], None, Some(dvector![-2.0]));
        let d = baseline_rhs(
            DynamicsVariant::PiPgd,
            &p,
            &s,
            &GainSet::pi_pgd(0.7, 1.0, 1.0),
        )
        .unwrap();
        assert_abs_diff_eq!(d.to_flat().norm(), 0.0, epsilon = 1e-14);
        // The static loop only rests at the KKT point while x − μ∇f stays
        // outside the soft-threshold dead zone.
        let d = baseline_rhs(
            DynamicsVariant::StaticProxCmo,
            &p,
            &s,
            &GainSet::static_cmo(0.1, 1.0, 1.0),
        )
        .unwrap();
        assert_abs_diff_eq!(d.to_flat().norm(), 0.0, epsilon = 1e-13);
        let d = baseline_rhs(
            DynamicsVariant::StaticProxCmo,
            &p,
            &s,
            &GainSet::static_cmo(0.7, 1.0, 1.0),
        )
        .unwrap();
        assert!(d.x.norm() > 0.1);
    }

    #[test]
    fn missing_blocks_are_reported() {
        let p = lasso_1d();
        let s = SystemState::new(dvector![1.0], None, None);
        assert!(matches!(
            dynamic_proxcmo_rhs(&p, &s, &GainSet::default()),
            Err(DynamicsError::Layout { .. })
        ));
        let constrained = CompositeProblem::new(
            Box::new(QuadraticForm::new(dmatrix![1.0], dvector![0.0]).unwrap()),
            Box::new(Zero),
            Box::new(AffineConstraint::new(dmatrix![1.0], dvector![0.0]).unwrap()),
        )
        .unwrap();
        assert!(ClosedLoop::new(
            &constrained,
            DynamicsVariant::DynamicProxCmoUnconstrained,
            GainSet::default()
        )
        .is_err());
        assert!(static_proxcmo_rhs(&constrained, &s, &GainSet::default()).is_err());
    }
}
