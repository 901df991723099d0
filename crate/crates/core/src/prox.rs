//! Proximal operators, Moreau envelopes and the Dykstra projection onto an
//! `ℓ∞ ∩ ℓ₂` ball intersection.
//!
//! Every operator here is a pure function of its inputs. A [`ProxOperator`]
//! bundles `prox_{μg}` with the value of `g`, which may be `+∞` for
//! indicator functions.

use nalgebra::DVector;
use thiserror::Error;

/// Default Dykstra tolerance on the max of iterate displacement and box infeasibility.
pub const DYKSTRA_DEFAULT_TOL: f64 = 1e-10;
/// Default Dykstra iteration budget.
pub const DYKSTRA_DEFAULT_MAX_ITER: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProxError {
    #[error("proximal parameter must be positive, got {0}")]
    NonPositiveMu(f64),
    #[error("g is +inf at the proximal point; the prox implementation is inconsistent with g")]
    InfiniteEnvelope,
    #[error("invalid intersection set: radii must be positive (inf_radius={inf_radius}, two_radius={two_radius})")]
    InvalidSet { inf_radius: f64, two_radius: f64 },
    #[error("tolerance must be positive, got {0}")]
    NonPositiveTolerance(f64),
    #[error(
        "Dykstra projection did not converge in {iterations} iterations (residual {residual:e})"
    )]
    DykstraNotConverged {
        iterations: usize,
        residual: f64,
        last: DVector<f64>,
    },
}

/// `g` together with its scaled proximal map `v ↦ argmin_x g(x) + ‖x − v‖²/(2μ)`.
pub trait ProxOperator: Send + Sync {
    /// `prox_{μg}(v)`; `mu` must be positive.
    fn prox(&self, v: &DVector<f64>, mu: f64) -> DVector<f64>;

    /// `g(x)`, possibly `f64::INFINITY`.
    fn value(&self, x: &DVector<f64>) -> f64;

    /// Whether `g` is convex. Nonconvex operators (Shidoku rounding) still
    /// expose a prox, but none of the convergence certificates apply.
    fn is_convex(&self) -> bool {
        true
    }
}

/// `g ≡ 0`; the prox is the identity.
#[derive(Debug, Clone, Copy, Default)]
pub struct Zero;

impl ProxOperator for Zero {
    fn prox(&self, v: &DVector<f64>, _mu: f64) -> DVector<f64> {
        v.clone()
    }

    fn value(&self, _x: &DVector<f64>) -> f64 {
        0.0
    }
}

/// `g(x) = weight · ‖x‖₁`.
#[derive(Debug, Clone, Copy)]
pub struct L1Norm {
    pub weight: f64,
}

impl L1Norm {
    pub fn new(weight: f64) -> Self {
        assert!(weight >= 0.0, "l1 weight must be non-negative");
        Self { weight }
    }
}

impl Default for L1Norm {
    fn default() -> Self {
        Self { weight: 1.0 }
    }
}

impl ProxOperator for L1Norm {
    fn prox(&self, v: &DVector<f64>, mu: f64) -> DVector<f64> {
        v.map(|vi| shrink(vi, mu * self.weight))
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        self.weight * x.lp_norm(1)
    }
}

/// Indicator of the box `[lower, upper]ⁿ`.
#[derive(Debug, Clone, Copy)]
pub struct BoxIndicator {
    pub lower: f64,
    pub upper: f64,
}

impl BoxIndicator {
    pub fn new(lower: f64, upper: f64) -> Self {
        assert!(lower <= upper, "empty box [{lower}, {upper}]");
        Self { lower, upper }
    }
}

impl ProxOperator for BoxIndicator {
    fn prox(&self, v: &DVector<f64>, _mu: f64) -> DVector<f64> {
        v.map(|vi| vi.clamp(self.lower, self.upper))
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        if x.iter().all(|&xi| xi >= self.lower && xi <= self.upper) {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// Indicator of `{1, 2, 3, 4}ⁿ`. Its "projection" rounds to the nearest
/// admissible digit with ties resolved downward. The set is not convex.
#[derive(Debug, Clone, Copy, Default)]
pub struct ShidokuRounding;

impl ProxOperator for ShidokuRounding {
    fn prox(&self, v: &DVector<f64>, _mu: f64) -> DVector<f64> {
        project_shidoku(v)
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        if x.iter().all(|&xi| matches!(xi, 1.0 | 2.0 | 3.0 | 4.0)) {
            0.0
        } else {
            f64::INFINITY
        }
    }

    fn is_convex(&self) -> bool {
        false
    }
}

/// The set `{η : ‖η‖∞ ≤ inf_radius, ‖η‖₂ ≤ two_radius}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntersectionSet {
    inf_radius: f64,
    two_radius: f64,
}

impl IntersectionSet {
    pub fn new(inf_radius: f64, two_radius: f64) -> Result<Self, ProxError> {
        if !(inf_radius > 0.0 && two_radius > 0.0)
            || !inf_radius.is_finite()
            || !two_radius.is_finite()
        {
            return Err(ProxError::InvalidSet {
                inf_radius,
                two_radius,
            });
        }
        Ok(Self {
            inf_radius,
            two_radius,
        })
    }

    pub fn inf_radius(&self) -> f64 {
        self.inf_radius
    }

    pub fn two_radius(&self) -> f64 {
        self.two_radius
    }

    pub fn contains(&self, v: &DVector<f64>, slack: f64) -> bool {
        v.amax() <= self.inf_radius + slack && v.norm() <= self.two_radius + slack
    }
}

/// Indicator of an [`IntersectionSet`], projected with Dykstra's algorithm.
#[derive(Debug, Clone, Copy)]
pub struct IntersectionIndicator {
    pub set: IntersectionSet,
    pub tol: f64,
    pub max_iter: usize,
}

impl IntersectionIndicator {
    pub fn new(set: IntersectionSet) -> Self {
        Self {
            set,
            tol: DYKSTRA_DEFAULT_TOL,
            max_iter: DYKSTRA_DEFAULT_MAX_ITER,
        }
    }
}

impl ProxOperator for IntersectionIndicator {
    fn prox(&self, v: &DVector<f64>, _mu: f64) -> DVector<f64> {
        match dykstra_project(v, &self.set, self.tol, self.max_iter) {
            Ok(p) => p,
            // Inside an ODE right-hand side there is no way to bail out; the
            // last iterate is within the budget's accuracy of the projection.
            Err(ProxError::DykstraNotConverged { last, .. }) => last,
            Err(e) => unreachable!("{e}"),
        }
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        // Dykstra output is feasible only up to its tolerance.
        if self.set.contains(x, self.tol) {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// A separable `g(x) = Σ_b g_b(x_b)` over consecutive blocks of `x`.
pub struct BlockSeparable {
    blocks: Vec<(usize, Box<dyn ProxOperator>)>,
}

impl BlockSeparable {
    pub fn new(blocks: Vec<(usize, Box<dyn ProxOperator>)>) -> Self {
        Self { blocks }
    }

    pub fn dim(&self) -> usize {
        self.blocks.iter().map(|(len, _)| len).sum()
    }
}

impl std::fmt::Debug for BlockSeparable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let lens: Vec<usize> = self.blocks.iter().map(|(len, _)| *len).collect();
        f.debug_struct("BlockSeparable")
            .field("blocks", &lens)
            .finish()
    }
}

impl ProxOperator for BlockSeparable {
    fn prox(&self, v: &DVector<f64>, mu: f64) -> DVector<f64> {
        assert_eq!(v.len(), self.dim(), "block prox dimension mismatch");
        let mut out = DVector::zeros(v.len());
        let mut start = 0;
        for (len, op) in &self.blocks {
            let block = v.rows(start, *len).into_owned();
            out.rows_mut(start, *len).copy_from(&op.prox(&block, mu));
            start += len;
        }
        out
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        let mut start = 0;
        let mut total = 0.0;
        for (len, op) in &self.blocks {
            total += op.value(&x.rows(start, *len).into_owned());
            start += len;
        }
        total
    }

    fn is_convex(&self) -> bool {
        self.blocks.iter().all(|(_, op)| op.is_convex())
    }
}

/// The Moreau envelope `M_{μg}` of a proximal operator.
#[derive(Clone, Copy)]
pub struct MoreauEnvelope<'a> {
    prox: &'a dyn ProxOperator,
    mu: f64,
}

impl<'a> MoreauEnvelope<'a> {
    pub fn new(prox: &'a dyn ProxOperator, mu: f64) -> Result<Self, ProxError> {
        if !(mu > 0.0) {
            return Err(ProxError::NonPositiveMu(mu));
        }
        Ok(Self { prox, mu })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn prox(&self, v: &DVector<f64>) -> DVector<f64> {
        self.prox.prox(v, self.mu)
    }

    /// `M(v) = g(p) + ‖p − v‖²/(2μ)` with `p = prox_{μg}(v)`.
    pub fn value(&self, v: &DVector<f64>) -> Result<f64, ProxError> {
        let p = self.prox(v);
        let g = self.prox.value(&p);
        if !g.is_finite() {
            return Err(ProxError::InfiniteEnvelope);
        }
        Ok(g + (p - v).norm_squared() / (2.0 * self.mu))
    }

    /// `∇M(v) = (v − prox_{μg}(v))/μ`.
    pub fn gradient(&self, v: &DVector<f64>) -> DVector<f64> {
        moreau_gradient_from_prox(v, &self.prox(v), self.mu)
    }
}

pub(crate) fn moreau_gradient_from_prox(
    v: &DVector<f64>,
    p: &DVector<f64>,
    mu: f64,
) -> DVector<f64> {
    (v - p) / mu
}

/// Value of the Moreau envelope; see [`MoreauEnvelope::value`].
pub fn moreau_value(env: &MoreauEnvelope<'_>, v: &DVector<f64>) -> Result<f64, ProxError> {
    env.value(v)
}

/// Gradient of the Moreau envelope; see [`MoreauEnvelope::gradient`].
pub fn moreau_grad(env: &MoreauEnvelope<'_>, v: &DVector<f64>) -> DVector<f64> {
    env.gradient(v)
}

#[inline]
fn shrink(v: f64, t: f64) -> f64 {
    v.signum() * (v.abs() - t).max(0.0)
}

/// Componentwise `sign(vᵢ)·max(|vᵢ| − μ, 0)`.
pub fn soft_threshold(v: &DVector<f64>, mu: f64) -> Result<DVector<f64>, ProxError> {
    if !(mu > 0.0) {
        return Err(ProxError::NonPositiveMu(mu));
    }
    Ok(v.map(|vi| shrink(vi, mu)))
}

/// Rounds each component onto `{1, 2, 3, 4}` using the half-open cells
/// `(-∞, 1.5]`, `(1.5, 2.5]`, `(2.5, 3.5]`, `(3.5, ∞)`.
pub fn project_shidoku(v: &DVector<f64>) -> DVector<f64> {
    v.map(|vi| {
        if vi <= 1.5 {
            1.0
        } else if vi <= 2.5 {
            2.0
        } else if vi <= 3.5 {
            3.0
        } else {
            4.0
        }
    })
}

/// Projects `v` onto `{‖η‖∞ ≤ γ} ∩ {‖η‖₂ ≤ ε}` by Dykstra's alternating
/// projections with correction terms.
///
/// Stops once both the displacement between successive iterates and the
/// box infeasibility of the current iterate drop below `tol`.
pub fn dykstra_project(
    v: &DVector<f64>,
    set: &IntersectionSet,
    tol: f64,
    max_iter: usize,
) -> Result<DVector<f64>, ProxError> {
    if !(tol > 0.0) {
        return Err(ProxError::NonPositiveTolerance(tol));
    }
    let (gamma, eps) = (set.inf_radius, set.two_radius);
    let n = v.len();
    let mut x = v.clone();
    let mut p: DVector<f64> = DVector::zeros(n);
    let mut q: DVector<f64> = DVector::zeros(n);
    let mut y: DVector<f64> = DVector::zeros(n);
    let mut residual = f64::INFINITY;

    for _ in 0..max_iter {
        // box step
        for i in 0..n {
            let w = x[i] + p[i];
            y[i] = w.clamp(-gamma, gamma);
            p[i] = w - y[i];
        }
        // ball step
        let mut w = &y + &q;
        let norm = w.norm();
        if norm > eps {
            w *= eps / norm;
        }
        q += &y;
        q -= &w;

        let displacement = (&w - &x).norm();
        let infeasibility = (w.amax() - gamma).max(0.0);
        residual = displacement.max(infeasibility);
        x = w;
        if residual < tol {
            return Ok(x);
        }
    }
    Err(ProxError::DykstraNotConverged {
        iterations: max_iter,
        residual,
        last: x,
    })
}
