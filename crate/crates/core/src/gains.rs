//! Gain certificates: feasibility of a gain choice and the guaranteed
//! exponential rate, plus the quadratic Lyapunov function each certificate
//! induces.
//!
//! Infeasible gains are not an error. The certificate carries
//! `feasible = false` and names every inequality that failed.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::problem::SystemState;

/// Number of interior grid points used by the ε scan of [`theorem4_certify`].
pub const T4_EPSILON_GRID: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Theorem {
    T1,
    T3,
    T4,
}

impl std::str::FromStr for Theorem {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "t1" | "1" => Ok(Theorem::T1),
            "t3" | "3" => Ok(Theorem::T3),
            "t4" | "4" => Ok(Theorem::T4),
            other => Err(format!("unknown theorem `{other}` (expected t1, t3 or t4)")),
        }
    }
}

impl fmt::Display for Theorem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Theorem::T1 => "T1",
            Theorem::T3 => "T3",
            Theorem::T4 => "T4",
        };
        f.write_str(s)
    }
}

/// Block weights of `P` in `V(s) = (s − s*)ᵀ P (s − s*)`.
///
/// T1 weights `x` by `rho`; T3 and T4 weight `x` by `k3_over_mu`; T4
/// additionally weights `λ` by `gamma`. Unlisted blocks have unit weight.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LyapunovWeights {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub k3_over_mu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremCertificate {
    pub theorem: Theorem,
    pub feasible: bool,
    /// Guaranteed rate; zero when infeasible.
    pub rate_r: f64,
    pub lyapunov_weights: LyapunovWeights,
    pub violated_conditions: Vec<String>,
    /// Proportional gain derived by T1.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub kp: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub k2_crit: Option<f64>,
    /// ε used for the rate (T1 input, T4 scan winner).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub delta: Option<f64>,
}

impl TheoremCertificate {
    fn new(theorem: Theorem) -> Self {
        Self {
            theorem,
            feasible: false,
            rate_r: 0.0,
            lyapunov_weights: LyapunovWeights::default(),
            violated_conditions: Vec::new(),
            kp: None,
            k2_crit: None,
            epsilon: None,
            delta: None,
        }
    }

    fn violate(&mut self, name: &str) {
        self.violated_conditions.push(name.to_string());
    }

    fn finish(mut self, rate: f64) -> Self {
        if self.violated_conditions.is_empty() && !(rate > 0.0) {
            self.violate("r>0");
        }
        self.feasible = self.violated_conditions.is_empty();
        self.rate_r = if self.feasible { rate } else { 0.0 };
        self
    }

    pub fn violates(&self, name: &str) -> bool {
        self.violated_conditions.iter().any(|v| v == name)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GainsError {
    #[error("{theorem} certificate is infeasible (violations: {violations})")]
    Infeasible {
        theorem: Theorem,
        violations: String,
    },
    #[error("state layout mismatch: {0}")]
    Layout(String),
}

/// Upper bound on ε for T1: `3m_f / (4(L_f + 1/μ) − 3m_f)`.
pub fn theorem1_epsilon_bound(m_f: f64, l_f: f64, mu: f64) -> f64 {
    let c = l_f + 1.0 / mu;
    3.0 * m_f / (4.0 * c - 3.0 * m_f)
}

/// Certificate for the static loop. Derives `k_p = ε k_i / (L_f + 1/μ)` and
/// records `ρ = k_i − k_p (L_f + 1/μ)`.
pub fn theorem1_certify(
    m_f: f64,
    l_f: f64,
    mu: f64,
    k_i: f64,
    epsilon: f64,
    a1: f64,
) -> TheoremCertificate {
    let mut cert = TheoremCertificate::new(Theorem::T1);
    if !(m_f > 0.0) {
        cert.violate("mf>0");
    }
    if !(l_f >= m_f) {
        cert.violate("Lf>=mf");
    }
    if !(mu > 0.0) {
        cert.violate("mu>0");
    }
    if !(k_i > 0.0) {
        cert.violate("ki>0");
    }
    if !(a1 > 0.0) {
        cert.violate("a1>0");
    }
    if !(epsilon > 0.0) {
        cert.violate("epsilon>0");
    }
    if !cert.violated_conditions.is_empty() {
        return cert.finish(0.0);
    }
    let c = l_f + 1.0 / mu;
    if !(epsilon < theorem1_epsilon_bound(m_f, l_f, mu)) {
        cert.violate("epsilon<3mf/(4(Lf+1/mu)-3mf)");
    }
    let kp = epsilon * k_i / c;
    let rho = k_i - kp * c;
    let first = 1.5 * m_f * (1.0 + epsilon) / (1.0 - epsilon) - 2.0 * epsilon / (1.0 - epsilon) * c;
    let rate = first.min(kp * a1);
    cert.kp = Some(kp);
    cert.epsilon = Some(epsilon);
    cert.lyapunov_weights.rho = Some(rho);
    cert.finish(rate)
}

/// `k₂^crit = −k₃ − (k₁² μ / (2k₃)) L_f² / m_f`.
pub fn k2_critical(k1: f64, k3: f64, mu: f64, m_f: f64, l_f: f64) -> f64 {
    -k3 - k1 * k1 * mu / (2.0 * k3) * l_f * l_f / m_f
}

fn dynamic_preconditions(
    cert: &mut TheoremCertificate,
    k1: f64,
    k3: f64,
    mu: f64,
    m_f: f64,
    l_f: f64,
) {
    if !(k1 > 0.0) {
        cert.violate("k1>0");
    }
    if !(k3 > 0.0) {
        cert.violate("k3>0");
    }
    if !(mu > 0.0) {
        cert.violate("mu>0");
    }
    if !(m_f > 0.0) {
        cert.violate("mf>0");
    }
    if !(l_f >= m_f) {
        cert.violate("Lf>=mf");
    }
}

/// Certificate for the dynamic loop without constraints.
pub fn theorem3_certify(
    k1: f64,
    k2: f64,
    k3: f64,
    mu: f64,
    m_f: f64,
    l_f: f64,
) -> TheoremCertificate {
    let mut cert = TheoremCertificate::new(Theorem::T3);
    dynamic_preconditions(&mut cert, k1, k3, mu, m_f, l_f);
    if !cert.violated_conditions.is_empty() {
        return cert.finish(0.0);
    }
    let crit = k2_critical(k1, k3, mu, m_f, l_f);
    cert.k2_crit = Some(crit);
    if !(k2 < crit) {
        cert.violate("k2<k2crit");
    }
    cert.lyapunov_weights.k3_over_mu = Some(k3 / mu);
    cert.finish(m_f.min(-2.0 * (k2 - crit)))
}

/// Certificate for the dynamic loop with constraints.
///
/// Requires the couplings `k₃/μ = γ k_i` and `μ γ k_i = k₁` with
/// `γ = k₁/(μ k_i)`, i.e. `k₁ = k₃`. ε is scanned on
/// `ε_j = ε_max · j / (T4_EPSILON_GRID + 1)`, `ε_max = −k₂ (1/μ + L_f)²`,
/// and the best admissible rate is returned.
#[allow(clippy::too_many_arguments)]
pub fn theorem4_certify(
    k1: f64,
    k2: f64,
    k3: f64,
    mu: f64,
    m_f: f64,
    l_f: f64,
    a1: f64,
    k_i: f64,
    k_p: f64,
) -> TheoremCertificate {
    let mut cert = TheoremCertificate::new(Theorem::T4);
    dynamic_preconditions(&mut cert, k1, k3, mu, m_f, l_f);
    if !(k_i > 0.0) {
        cert.violate("ki>0");
    }
    if !(k_p > 0.0) {
        cert.violate("kp>0");
    }
    if !(a1 > 0.0) {
        cert.violate("a1>0");
    }
    if !cert.violated_conditions.is_empty() {
        return cert.finish(0.0);
    }
    let scale = (k1.abs().max(k3.abs())).max(1.0);
    if (k1 - k3).abs() > 1e-12 * scale {
        cert.violate("proof coupling k1=k3");
    }
    let gamma = k1 / (mu * k_i);
    let crit = k2_critical(k1, k3, mu, m_f, l_f);
    cert.k2_crit = Some(crit);
    cert.lyapunov_weights.k3_over_mu = Some(k3 / mu);
    cert.lyapunov_weights.gamma = Some(gamma);
    if !(k2 < crit) {
        cert.violate("k2<k2crit");
    }
    let cross = -2.0 * k1 * k1 / (gamma * k_p) - 2.0 * k_p * gamma;
    if !(k2 < cross) {
        cert.violate("k2<-2k1^2/(gamma kp)-2kp gamma");
    }
    if !cert.violated_conditions.is_empty() {
        return cert.finish(0.0);
    }

    let c2 = (l_f + 1.0 / mu).powi(2);
    let eps_max = -k2 * c2;
    let delta_bound = 2.0 * m_f * k1 / mu + k1 * k1 / (mu * k2);
    let fixed = (-2.0 * (k2 - crit)).min(k_p * a1).min(-k2 / 2.0);

    let mut best: Option<(f64, f64, f64)> = None;
    for j in 1..=T4_EPSILON_GRID {
        let eps = eps_max * j as f64 / (T4_EPSILON_GRID + 1) as f64;
        let delta = eps - eps * eps / (k2 * c2);
        if !(delta < delta_bound) {
            continue;
        }
        let rate = fixed.min(2.0 * m_f + k1 / k2 - mu * delta / k1);
        if best.is_none_or(|(r, _, _)| rate > r) {
            best = Some((rate, eps, delta));
        }
    }
    match best {
        Some((rate, eps, delta)) => {
            cert.epsilon = Some(eps);
            cert.delta = Some(delta);
            cert.finish(rate)
        }
        None => {
            cert.violate("delta<2mf k1/mu+k1^2/(mu k2)");
            cert.finish(0.0)
        }
    }
}

/// `V(s) = (s − s*)ᵀ P (s − s*)` with the certificate's block weights.
///
/// T1 expects `(x, λ)`, T3 expects `(x, α)` and T4 expects `(x, α, λ)`.
pub fn lyapunov_value(
    cert: &TheoremCertificate,
    s: &SystemState,
    s_star: &SystemState,
) -> Result<f64, GainsError> {
    if !cert.feasible {
        return Err(GainsError::Infeasible {
            theorem: cert.theorem,
            violations: cert.violated_conditions.join(", "),
        });
    }
    if s.x.len() != s_star.x.len() {
        return Err(GainsError::Layout(format!(
            "x has length {} vs {}",
            s.x.len(),
            s_star.x.len()
        )));
    }
    let w = &cert.lyapunov_weights;
    let dx = (&s.x - &s_star.x).norm_squared();
    let block = |name: &str,
                 a: &Option<nalgebra::DVector<f64>>,
                 b: &Option<nalgebra::DVector<f64>>| match (a, b) {
        (Some(a), Some(b)) if a.len() == b.len() => Ok((a - b).norm_squared()),
        (Some(a), Some(b)) => Err(GainsError::Layout(format!(
            "{name} has length {} vs {}",
            a.len(),
            b.len()
        ))),
        _ => Err(GainsError::Layout(format!(
            "{} certificate needs {name} in both states",
            cert.theorem
        ))),
    };
    let v = match cert.theorem {
        Theorem::T1 => w.rho.unwrap_or(1.0) * dx + block("lambda", &s.lambda, &s_star.lambda)?,
        Theorem::T3 => w.k3_over_mu.unwrap_or(1.0) * dx + block("alpha", &s.alpha, &s_star.alpha)?,
        Theorem::T4 => {
            w.k3_over_mu.unwrap_or(1.0) * dx
                + block("alpha", &s.alpha, &s_star.alpha)?
                + w.gamma.unwrap_or(1.0) * block("lambda", &s.lambda, &s_star.lambda)?
        }
    };
    Ok(v)
}
