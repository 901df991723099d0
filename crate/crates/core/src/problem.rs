//! Problem definitions: `min f(x) + g(x) s.t. h(x) = 0`, the proximal
//! augmented Lagrangian, optimality residuals and the spectral constants the
//! gain certificates need.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prox::{MoreauEnvelope, ProxError, ProxOperator};

/// Smallest singular value below which a constraint matrix counts as rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("state block `{0}` is required here but absent")]
    MissingBlock(&'static str),
    #[error("matrix is rank deficient (smallest singular value {smallest:e})")]
    RankDeficient { smallest: f64 },
    #[error("invalid problem constants: {0}")]
    InvalidConstants(String),
    #[error("empty matrix")]
    EmptyMatrix,
    #[error(transparent)]
    Prox(#[from] ProxError),
}

/// The smooth part `f`.
pub trait SmoothObjective: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &DVector<f64>) -> f64;
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64>;
}

/// The equality constraint map `h: ℝⁿ → ℝᵐ`.
pub trait ConstraintMap: Send + Sync {
    fn dim_in(&self) -> usize;
    fn dim_out(&self) -> usize;
    fn value(&self, x: &DVector<f64>) -> DVector<f64>;
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64>;

    /// `J_h(x)ᵀ λ`.
    fn jacobian_transpose_mul(&self, x: &DVector<f64>, lambda: &DVector<f64>) -> DVector<f64> {
        self.jacobian(x).tr_mul(lambda)
    }

    /// `J_h(x) v`.
    fn jacobian_mul(&self, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        self.jacobian(x) * v
    }

    fn as_affine(&self) -> Option<&AffineConstraint> {
        None
    }
}

/// `f(x) = ½‖Ax − b‖²`.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    a: DMatrix<f64>,
    b: DVector<f64>,
}

impl LeastSquares {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self, ProblemError> {
        if a.nrows() != b.len() {
            return Err(ProblemError::DimensionMismatch {
                what: "least-squares rhs",
                expected: a.nrows(),
                got: b.len(),
            });
        }
        Ok(Self { a, b })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn rhs(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn residual(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.a * x - &self.b
    }
}

impl SmoothObjective for LeastSquares {
    fn dim(&self) -> usize {
        self.a.ncols()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        0.5 * self.residual(x).norm_squared()
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        self.a.tr_mul(&self.residual(x))
    }
}

/// `f(x) = ½ xᵀHx + cᵀx` with symmetric `H`.
#[derive(Debug, Clone)]
pub struct QuadraticForm {
    hessian: DMatrix<f64>,
    linear: DVector<f64>,
}

impl QuadraticForm {
    pub fn new(hessian: DMatrix<f64>, linear: DVector<f64>) -> Result<Self, ProblemError> {
        if !hessian.is_square() || hessian.nrows() != linear.len() {
            return Err(ProblemError::DimensionMismatch {
                what: "quadratic form",
                expected: hessian.nrows(),
                got: linear.len(),
            });
        }
        let hessian = (&hessian + hessian.transpose()) * 0.5;
        Ok(Self { hessian, linear })
    }

    pub fn hessian(&self) -> &DMatrix<f64> {
        &self.hessian
    }

    pub fn linear(&self) -> &DVector<f64> {
        &self.linear
    }
}

impl SmoothObjective for QuadraticForm {
    fn dim(&self) -> usize {
        self.linear.len()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.hessian * x)) + self.linear.dot(x)
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.hessian * x + &self.linear
    }
}

/// `f(x) = cᵀx`.
#[derive(Debug, Clone)]
pub struct LinearObjective {
    pub c: DVector<f64>,
}

impl SmoothObjective for LinearObjective {
    fn dim(&self) -> usize {
        self.c.len()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        self.c.dot(x)
    }

    fn gradient(&self, _x: &DVector<f64>) -> DVector<f64> {
        self.c.clone()
    }
}

/// `f ≡ 0` on `ℝⁿ`.
#[derive(Debug, Clone, Copy)]
pub struct ZeroObjective(pub usize);

impl SmoothObjective for ZeroObjective {
    fn dim(&self) -> usize {
        self.0
    }

    fn value(&self, _x: &DVector<f64>) -> f64 {
        0.0
    }

    fn gradient(&self, _x: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(self.0)
    }
}

/// No equality constraints (`m = 0`).
#[derive(Debug, Clone, Copy)]
pub struct Unconstrained(pub usize);

impl ConstraintMap for Unconstrained {
    fn dim_in(&self) -> usize {
        self.0
    }

    fn dim_out(&self) -> usize {
        0
    }

    fn value(&self, _x: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(0)
    }

    fn jacobian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(0, self.0)
    }

    fn jacobian_transpose_mul(&self, _x: &DVector<f64>, _lambda: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(self.0)
    }

    fn jacobian_mul(&self, _x: &DVector<f64>, _v: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(0)
    }
}

/// `h(x) = Cx + b`.
#[derive(Debug, Clone)]
pub struct AffineConstraint {
    c: DMatrix<f64>,
    b: DVector<f64>,
}

impl AffineConstraint {
    pub fn new(c: DMatrix<f64>, b: DVector<f64>) -> Result<Self, ProblemError> {
        if c.nrows() != b.len() {
            return Err(ProblemError::DimensionMismatch {
                what: "affine constraint offset",
                expected: c.nrows(),
                got: b.len(),
            });
        }
        Ok(Self { c, b })
    }

    /// Like [`AffineConstraint::new`] but also requires `C` to have full row rank.
    pub fn full_rank(c: DMatrix<f64>, b: DVector<f64>) -> Result<Self, ProblemError> {
        let h = Self::new(c, b)?;
        h.constants()?;
        Ok(h)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn offset(&self) -> &DVector<f64> {
        &self.b
    }

    /// `(a₁, a₂)`: extreme eigenvalues of `CCᵀ`. Fails when `C` is not full row rank.
    pub fn constants(&self) -> Result<SpectralBounds, ProblemError> {
        let bounds = spectral_bounds(&(&self.c * self.c.transpose()))?;
        let smallest = bounds.lower.max(0.0).sqrt();
        if smallest <= RANK_TOLERANCE {
            return Err(ProblemError::RankDeficient { smallest });
        }
        Ok(bounds)
    }
}

impl ConstraintMap for AffineConstraint {
    fn dim_in(&self) -> usize {
        self.c.ncols()
    }

    fn dim_out(&self) -> usize {
        self.c.nrows()
    }

    fn value(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.c * x + &self.b
    }

    fn jacobian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        self.c.clone()
    }

    fn jacobian_transpose_mul(&self, _x: &DVector<f64>, lambda: &DVector<f64>) -> DVector<f64> {
        self.c.tr_mul(lambda)
    }

    fn jacobian_mul(&self, _x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        &self.c * v
    }

    fn as_affine(&self) -> Option<&AffineConstraint> {
        Some(self)
    }
}

/// Extreme eigenvalues of a symmetric positive semidefinite matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralBounds {
    pub lower: f64,
    pub upper: f64,
}

/// Extreme eigenvalues of the symmetric matrix `m` by dense eigendecomposition.
pub fn spectral_bounds(m: &DMatrix<f64>) -> Result<SpectralBounds, ProblemError> {
    if m.is_empty() {
        return Err(ProblemError::EmptyMatrix);
    }
    if !m.is_square() {
        return Err(ProblemError::DimensionMismatch {
            what: "symmetric matrix",
            expected: m.nrows(),
            got: m.ncols(),
        });
    }
    let eig = SymmetricEigen::new(m.clone()).eigenvalues;
    Ok(SpectralBounds {
        lower: eig.min(),
        upper: eig.max(),
    })
}

/// `(m_f, L_f)` of `f(x) = ½‖Ax − b‖²`: extreme eigenvalues of `AᵀA`.
pub fn least_squares_constants(
    a: &DMatrix<f64>,
    require_full_rank: bool,
) -> Result<SpectralBounds, ProblemError> {
    let bounds = spectral_bounds(&a.tr_mul(a))?;
    if require_full_rank {
        let smallest = bounds.lower.max(0.0).sqrt();
        if smallest <= RANK_TOLERANCE {
            return Err(ProblemError::RankDeficient { smallest });
        }
    }
    Ok(bounds)
}

/// Strong convexity / smoothness of `f` and the conditioning of an affine `h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemConstants {
    pub m_f: f64,
    pub l_f: f64,
    pub a1: f64,
    pub a2: f64,
}

impl ProblemConstants {
    pub fn new(m_f: f64, l_f: f64, a1: f64, a2: f64) -> Result<Self, ProblemError> {
        if !(m_f >= 0.0 && l_f >= m_f) {
            return Err(ProblemError::InvalidConstants(format!(
                "need 0 <= m_f <= L_f, got m_f={m_f}, L_f={l_f}"
            )));
        }
        // a1 = a2 = 0 describes a problem without constraints
        if !(a1 >= 0.0 && a2 >= a1) {
            return Err(ProblemError::InvalidConstants(format!(
                "need 0 <= a1 <= a2, got a1={a1}, a2={a2}"
            )));
        }
        Ok(Self { m_f, l_f, a1, a2 })
    }
}

/// Oracle bundle for `min f(x) + g(x) s.t. h(x) = 0`.
pub struct CompositeProblem {
    f: Box<dyn SmoothObjective>,
    g: Box<dyn ProxOperator>,
    h: Box<dyn ConstraintMap>,
    constants: Option<ProblemConstants>,
}

impl std::fmt::Debug for CompositeProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CompositeProblem")
            .field("dim_x", &self.dim_x())
            .field("dim_h", &self.dim_h())
            .field("constants", &self.constants)
            .finish_non_exhaustive()
    }
}

impl CompositeProblem {
    pub fn new(
        f: Box<dyn SmoothObjective>,
        g: Box<dyn ProxOperator>,
        h: Box<dyn ConstraintMap>,
    ) -> Result<Self, ProblemError> {
        if h.dim_in() != f.dim() {
            return Err(ProblemError::DimensionMismatch {
                what: "constraint input",
                expected: f.dim(),
                got: h.dim_in(),
            });
        }
        Ok(Self {
            f,
            g,
            h,
            constants: None,
        })
    }

    pub fn with_constants(mut self, constants: ProblemConstants) -> Self {
        self.constants = Some(constants);
        self
    }

    pub fn dim_x(&self) -> usize {
        self.f.dim()
    }

    pub fn dim_h(&self) -> usize {
        self.h.dim_out()
    }

    pub fn constants(&self) -> Option<&ProblemConstants> {
        self.constants.as_ref()
    }

    pub fn f_value(&self, x: &DVector<f64>) -> f64 {
        self.f.value(x)
    }

    pub fn f_grad(&self, x: &DVector<f64>) -> DVector<f64> {
        self.f.gradient(x)
    }

    pub fn g(&self) -> &dyn ProxOperator {
        self.g.as_ref()
    }

    pub fn g_value(&self, x: &DVector<f64>) -> f64 {
        self.g.value(x)
    }

    pub fn prox(&self, v: &DVector<f64>, mu: f64) -> DVector<f64> {
        self.g.prox(v, mu)
    }

    pub fn h(&self) -> &dyn ConstraintMap {
        self.h.as_ref()
    }

    pub fn h_value(&self, x: &DVector<f64>) -> DVector<f64> {
        self.h.value(x)
    }

    pub fn h_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        self.h.jacobian(x)
    }

    /// `J_h(x)ᵀ λ`, with an absent or empty `λ` contributing zero.
    pub fn jt_lambda(&self, x: &DVector<f64>, lambda: Option<&DVector<f64>>) -> DVector<f64> {
        match lambda {
            Some(l) if !l.is_empty() => self.h.jacobian_transpose_mul(x, l),
            _ => DVector::zeros(self.dim_x()),
        }
    }

    pub fn envelope(&self, mu: f64) -> Result<MoreauEnvelope<'_>, ProxError> {
        MoreauEnvelope::new(self.g.as_ref(), mu)
    }

    /// Objective `f(x) + g(x)`; `+∞` outside the domain of `g`.
    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        self.f_value(x) + self.g_value(x)
    }

    pub fn check_state(&self, s: &SystemState) -> Result<(), ProblemError> {
        let n = self.dim_x();
        if s.x.len() != n {
            return Err(ProblemError::DimensionMismatch {
                what: "x",
                expected: n,
                got: s.x.len(),
            });
        }
        if let Some(a) = &s.alpha {
            if a.len() != n {
                return Err(ProblemError::DimensionMismatch {
                    what: "alpha",
                    expected: n,
                    got: a.len(),
                });
            }
        }
        if let Some(l) = &s.lambda {
            if l.len() != self.dim_h() {
                return Err(ProblemError::DimensionMismatch {
                    what: "lambda",
                    expected: self.dim_h(),
                    got: l.len(),
                });
            }
        }
        Ok(())
    }

    fn require_lambda<'s>(
        &self,
        s: &'s SystemState,
    ) -> Result<Option<&'s DVector<f64>>, ProblemError> {
        match (&s.lambda, self.dim_h()) {
            (None, m) if m > 0 => Err(ProblemError::MissingBlock("lambda")),
            (l, _) => Ok(l.as_ref()),
        }
    }
}

/// Stacked primal/dual state `(x, α, λ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    pub x: DVector<f64>,
    pub alpha: Option<DVector<f64>>,
    pub lambda: Option<DVector<f64>>,
}

impl SystemState {
    pub fn new(x: DVector<f64>, alpha: Option<DVector<f64>>, lambda: Option<DVector<f64>>) -> Self {
        Self { x, alpha, lambda }
    }

    /// Origin with the block layout of `layout`.
    pub fn zeros(layout: &StateLayout) -> Self {
        layout.unpack(&DVector::zeros(layout.len()))
    }

    pub fn layout(&self) -> StateLayout {
        StateLayout {
            n: self.x.len(),
            alpha: self.alpha.is_some(),
            m: self.lambda.as_ref().map_or(0, |l| l.len()),
        }
    }

    pub fn to_flat(&self) -> DVector<f64> {
        let layout = self.layout();
        let mut out = DVector::zeros(layout.len());
        out.rows_mut(0, layout.n).copy_from(&self.x);
        if let Some(a) = &self.alpha {
            out.rows_mut(layout.n, layout.n).copy_from(a);
        }
        if let Some(l) = &self.lambda {
            out.rows_mut(layout.lambda_offset(), layout.m).copy_from(l);
        }
        out
    }
}

/// Block sizes of a flattened [`SystemState`]: `x ∈ ℝⁿ`, optional `α ∈ ℝⁿ`, `λ ∈ ℝᵐ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateLayout {
    pub n: usize,
    pub alpha: bool,
    pub m: usize,
}

impl StateLayout {
    pub fn len(&self) -> usize {
        self.lambda_offset() + self.m
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn lambda_offset(&self) -> usize {
        if self.alpha {
            2 * self.n
        } else {
            self.n
        }
    }

    /// Splits a flat vector; a zero-length λ block unpacks to `None`.
    pub fn unpack(&self, flat: &DVector<f64>) -> SystemState {
        assert_eq!(flat.len(), self.len(), "flat state length mismatch");
        let x = flat.rows(0, self.n).into_owned();
        let alpha = self.alpha.then(|| flat.rows(self.n, self.n).into_owned());
        let lambda = (self.m > 0).then(|| flat.rows(self.lambda_offset(), self.m).into_owned());
        SystemState { x, alpha, lambda }
    }

    /// Column names `x0.., a0.., l0..` in flat order.
    pub fn column_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (0..self.n).map(|i| format!("x{i}")).collect();
        if self.alpha {
            names.extend((0..self.n).map(|i| format!("a{i}")));
        }
        names.extend((0..self.m).map(|i| format!("l{i}")));
        names
    }
}

/// `L_μ(x, α, λ) = f(x) + M_{μg}(x + μα) − (μ/2)‖α‖² + λᵀh(x)`.
pub fn aug_lagrangian(p: &CompositeProblem, s: &SystemState, mu: f64) -> Result<f64, ProblemError> {
    p.check_state(s)?;
    let alpha = s
        .alpha
        .as_ref()
        .ok_or(ProblemError::MissingBlock("alpha"))?;
    let lambda = p.require_lambda(s)?;
    let env = p.envelope(mu)?;
    let v = &s.x + alpha * mu;
    let mut value = p.f_value(&s.x) + env.value(&v)? - 0.5 * mu * alpha.norm_squared();
    if let Some(l) = lambda {
        value += l.dot(&p.h_value(&s.x));
    }
    Ok(value)
}

/// Prox fixed-point stationarity and constraint violation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktResidual {
    pub stationarity: f64,
    pub feasibility: f64,
}

impl KktResidual {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.feasibility)
    }
}

/// `r_stat = ‖x − prox_{μg}(x − μ(∇f(x) + J_hᵀλ))‖`, `r_feas = ‖h(x)‖`.
pub fn kkt_residual(
    p: &CompositeProblem,
    s: &SystemState,
    mu: f64,
) -> Result<KktResidual, ProblemError> {
    p.check_state(s)?;
    if !(mu > 0.0) {
        return Err(ProxError::NonPositiveMu(mu).into());
    }
    let lambda = p.require_lambda(s)?;
    let x = &s.x;
    let step = p.f_grad(x) + p.jt_lambda(x, lambda);
    let w = x - step * mu;
    Ok(KktResidual {
        stationarity: (x - p.prox(&w, mu)).norm(),
        feasibility: p.h_value(x).norm(),
    })
}

/// Norm of the stacked saddle-point conditions of `L_μ`:
/// `∇f + ∇M(x+μα) + J_hᵀλ`, `μ∇M(x+μα) − μα` and `h(x)`.
pub fn saddle_residual(
    p: &CompositeProblem,
    s: &SystemState,
    mu: f64,
) -> Result<f64, ProblemError> {
    p.check_state(s)?;
    let alpha = s
        .alpha
        .as_ref()
        .ok_or(ProblemError::MissingBlock("alpha"))?;
    let lambda = p.require_lambda(s)?;
    let env = p.envelope(mu)?;
    let x = &s.x;
    let grad_m = env.gradient(&(x + alpha * mu));
    let first = p.f_grad(x) + &grad_m + p.jt_lambda(x, lambda);
    let second = (&grad_m - alpha) * mu;
    let third = p.h_value(x);
    Ok((first.norm_squared() + second.norm_squared() + third.norm_squared()).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prox::{L1Norm, Zero};
    use approx::assert_abs_diff_eq;
    use nalgebra::{dmatrix, dvector};

    fn half_norm_l1(n: usize) -> CompositeProblem {
        CompositeProblem::new(
            Box::new(QuadraticForm::new(DMatrix::identity(n, n), DVector::zeros(n)).unwrap()),
            Box::new(L1Norm::default()),
            Box::new(Unconstrained(n)),
        )
        .unwrap()
    }

    #[test]
    fn aug_lagrangian_examples() {
        let p = half_norm_l1(2);
        let s = SystemState::new(DVector::zeros(2), Some(DVector::zeros(2)), None);
        assert_eq!(aug_lagrangian(&p, &s, 1.0).unwrap(), 0.0);

        let p = half_norm_l1(1);
        let s = SystemState::new(dvector![0.5], Some(dvector![0.0]), None);
        assert_abs_diff_eq!(aug_lagrangian(&p, &s, 1.0).unwrap(), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn aug_lagrangian_requires_blocks() {
        let p = half_norm_l1(1);
        let s = SystemState::new(dvector![0.5], None, None);
        assert_eq!(
            aug_lagrangian(&p, &s, 1.0),
            Err(ProblemError::MissingBlock("alpha"))
        );
        let s = SystemState::new(dvector![0.5, 1.0], Some(dvector![0.0, 0.0]), None);
        assert!(matches!(
            aug_lagrangian(&p, &s, 1.0),
            Err(ProblemError::DimensionMismatch { what: "x", .. })
        ));

        let constrained = CompositeProblem::new(
            Box::new(ZeroObjective(2)),
            Box::new(Zero),
            Box::new(AffineConstraint::new(dmatrix![1.0, 1.0], dvector![0.0]).unwrap()),
        )
        .unwrap();
        let s = SystemState::new(dvector![0.5, 1.0], Some(dvector![0.0, 0.0]), None);
        assert_eq!(
            aug_lagrangian(&constrained, &s, 1.0),
            Err(ProblemError::MissingBlock("lambda"))
        );
    }

    #[test]
    fn kkt_residual_examples() {
        // f = ½(x − 2)², g = |x|, optimum x* = 1.
        let p = CompositeProblem::new(
            Box::new(QuadraticForm::new(dmatrix![1.0], dvector![-2.0]).unwrap()),
            Box::new(L1Norm::default()),
            Box::new(Unconstrained(1)),
        )
        .unwrap();
        let r = kkt_residual(&p, &SystemState::new(dvector![1.0], None, None), 1.0).unwrap();
        assert_eq!(
            r,
            KktResidual {
                stationarity: 0.0,
                feasibility: 0.0
            }
        );
        let r = kkt_residual(&p, &SystemState::new(dvector![0.0], None, None), 1.0).unwrap();
        assert_abs_diff_eq!(r.stationarity, 1.0, epsilon = 1e-15);
        assert!(kkt_residual(&p, &SystemState::new(dvector![0.0], None, None), 0.0).is_err());
    }

    #[test]
    fn saddle_residual_origin_is_optimal() {
        let p = half_norm_l1(3);
        let s = SystemState::new(DVector::zeros(3), Some(DVector::zeros(3)), None);
        assert_eq!(saddle_residual(&p, &s, 1.0).unwrap(), 0.0);
        let bumped = SystemState::new(dvector![1e-3, 0.0, 0.0], Some(DVector::zeros(3)), None);
        let r = saddle_residual(&p, &bumped, 1.0).unwrap();
        assert!(r > 1e-4 && r < 1e-2, "residual {r}");
    }

    #[test]
    fn spectral_constant_examples() {
        let c = least_squares_constants(&DMatrix::identity(3, 3), true).unwrap();
        assert_abs_diff_eq!(c.lower, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(c.upper, 1.0, epsilon = 1e-14);
        let c = least_squares_constants(&dmatrix![1.0, 0.0; 0.0, 2.0], true).unwrap();
        assert_abs_diff_eq!(c.lower, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(c.upper, 4.0, epsilon = 1e-14);
        assert!(matches!(
            least_squares_constants(&dmatrix![1.0, 1.0; 1.0, 1.0], true),
            Err(ProblemError::RankDeficient { .. })
        ));
        assert!(least_squares_constants(&dmatrix![1.0, 1.0; 1.0, 1.0], false).is_ok());
        assert_eq!(
            spectral_bounds(&DMatrix::zeros(0, 0)),
            Err(ProblemError::EmptyMatrix)
        );
    }

    #[test]
    fn affine_constraint_rank() {
        let h = AffineConstraint::new(dmatrix![1.0, 0.0, 0.0; 0.0, 2.0, 0.0], dvector![0.0, 1.0])
            .unwrap();
        let c = h.constants().unwrap();
        assert_abs_diff_eq!(c.lower, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(c.upper, 4.0, epsilon = 1e-14);
        assert!(
            AffineConstraint::full_rank(dmatrix![1.0, 1.0; 2.0, 2.0], dvector![0.0, 0.0]).is_err()
        );
        assert!(AffineConstraint::new(dmatrix![1.0, 1.0], dvector![0.0, 0.0]).is_err());
    }

    #[test]
    fn problem_constants_validation() {
        assert!(ProblemConstants::new(1.0, 2.0, 0.5, 1.0).is_ok());
        assert!(ProblemConstants::new(2.0, 1.0, 0.5, 1.0).is_err());
        assert!(ProblemConstants::new(1.0, 2.0, -0.1, 1.0).is_err());
        assert!(ProblemConstants::new(1.0, 2.0, 0.0, 0.0).is_ok());
        assert!(ProblemConstants::new(1.0, 2.0, 2.0, 1.0).is_err());
    }

    #[test]
    fn layout_round_trip() {
        let s = SystemState::new(
            dvector![1.0, 2.0],
            Some(dvector![3.0, 4.0]),
            Some(dvector![5.0]),
        );
        let layout = s.layout();
        assert_eq!(layout.len(), 5);
        assert_eq!(layout.column_names(), ["x0", "x1", "a0", "a1", "l0"]);
        assert_eq!(layout.unpack(&s.to_flat()), s);

        let bare = SystemState::new(dvector![1.0], None, None);
        assert_eq!(bare.layout().unpack(&bare.to_flat()), bare);
    }
}
