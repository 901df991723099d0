//! Run configuration: a JSON document whose fields can be overridden from
//! the command line.

use std::path::{Path, PathBuf};

use proxcmo::dynamics::{DynamicsVariant, GainSet};
use proxcmo::gains::Theorem;
use proxcmo::integrate::IntegratorConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Environment variable that overrides the output directory of the config.
pub const OUT_DIR_ENV: &str = "PROXCMO_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "proxcmo-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Lasso,
    Shidoku,
    Sysid,
    Certify,
    Custom,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Lasso => "lasso",
            Self::Shidoku => "shidoku",
            Self::Sysid => "sysid",
            Self::Certify => "certify",
            Self::Custom => "custom",
        }
    }
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "lasso" => Ok(Self::Lasso),
            "shidoku" => Ok(Self::Shidoku),
            "sysid" => Ok(Self::Sysid),
            "certify" => Ok(Self::Certify),
            "custom" => Ok(Self::Custom),
            other => Err(format!(
                "unknown experiment `{other}` (expected lasso, shidoku, sysid, certify or custom)"
            )),
        }
    }
}

/// Gain fields to replace in every method's defaults.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GainOverrides {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kp: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ki: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k3: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
}

impl GainOverrides {
    pub fn apply(&self, mut g: GainSet) -> GainSet {
        let set = |field: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *field = v;
            }
        };
        set(&mut g.mu, self.mu);
        set(&mut g.kp, self.kp);
        set(&mut g.ki, self.ki);
        set(&mut g.k1, self.k1);
        set(&mut g.k2, self.k2);
        set(&mut g.k3, self.k3);
        set(&mut g.gamma, self.gamma);
        g
    }

    fn merge(&mut self, other: &GainOverrides) {
        for (dst, src) in [
            (&mut self.mu, other.mu),
            (&mut self.kp, other.kp),
            (&mut self.ki, other.ki),
            (&mut self.k1, other.k1),
            (&mut self.k2, other.k2),
            (&mut self.k3, other.k3),
            (&mut self.gamma, other.gamma),
        ] {
            if src.is_some() {
                *dst = src;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorOverrides {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub abs_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rel_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_step: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_step: Option<f64>,
    /// A non-positive value disables the residual stop.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stop_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub record_stride: Option<usize>,
}

impl IntegratorOverrides {
    pub fn apply(&self, mut c: IntegratorConfig) -> IntegratorConfig {
        if let Some(v) = self.t_end {
            c.t_end = v;
        }
        if let Some(v) = self.abs_tol {
            c.abs_tol = v;
        }
        if let Some(v) = self.rel_tol {
            c.rel_tol = v;
        }
        if let Some(v) = self.max_step {
            c.max_step = v;
        }
        if let Some(v) = self.min_step {
            c.min_step = v;
        }
        if let Some(v) = self.stop_residual {
            c.stop_residual = (v > 0.0).then_some(v);
        }
        if let Some(v) = self.record_stride {
            c.record_stride = v;
        }
        c
    }

    fn merge(&mut self, o: &IntegratorOverrides) {
        macro_rules! take {
            ($($f:ident),*) => {$(if o.$f.is_some() { self.$f = o.$f; })*};
        }
        take!(
            t_end,
            abs_tol,
            rel_tol,
            max_step,
            min_step,
            stop_residual,
            record_stride
        );
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LassoConfig {
    pub n: usize,
    pub m: usize,
    pub s: usize,
    pub rho: f64,
}

impl Default for LassoConfig {
    fn default() -> Self {
        Self {
            n: 40,
            m: 44,
            s: 8,
            rho: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SysidConfig {
    /// Replace the measurement by the least-squares fit of the clean output.
    pub noise_free: bool,
    /// Noise bounds of the noise-free instance.
    pub bound: f64,
}

impl Default for SysidConfig {
    fn default() -> Self {
        Self {
            noise_free: false,
            bound: 1e-6,
        }
    }
}

/// Problem constants for `certify`; the gains come from [`GainOverrides`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CertifyConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theorem: Option<Theorem>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mf: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lf: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

/// `½xᵀHx + cᵀx + w‖x‖₁`, optionally subject to `Cx + b = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomConfig {
    pub hessian: Vec<Vec<f64>>,
    pub linear: Vec<f64>,
    #[serde(default)]
    pub l1_weight: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint_matrix: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint_offset: Option<Vec<f64>>,
    /// Initial `x`; zero when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentKind>,
    /// Method tags; empty selects every method of the experiment.
    pub methods: Vec<String>,
    pub seed: u64,
    pub runs: usize,
    pub gains: GainOverrides,
    pub integrator: IntegratorOverrides,
    pub lasso: LassoConfig,
    pub sysid: SysidConfig,
    pub certify: CertifyConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub custom: Option<CustomConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            experiment: None,
            methods: Vec::new(),
            seed: 0,
            runs: 1,
            gains: GainOverrides::default(),
            integrator: IntegratorOverrides::default(),
            lasso: LassoConfig::default(),
            sysid: SysidConfig::default(),
            certify: CertifyConfig::default(),
            custom: None,
            out_dir: None,
        }
    }
}

impl RunConfig {
    pub fn from_json_str(text: &str, origin: &str) -> Result<Self, CliError> {
        serde_json::from_str(text)
            .map_err(|e| CliError::Config(format!("{origin}:{}:{}: {e}", e.line(), e.column())))
    }

    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json_str(&text, &path.display().to_string())
    }

    /// Folds command-line values over this config; `Some` fields win.
    pub fn merge_flags(&mut self, flags: &FlagOverrides) {
        if let Some(e) = flags.experiment {
            self.experiment = Some(e);
        }
        if !flags.methods.is_empty() {
            self.methods = flags.methods.clone();
        }
        if let Some(s) = flags.seed {
            self.seed = s;
        }
        if let Some(r) = flags.runs {
            self.runs = r;
        }
        self.gains.merge(&flags.gains);
        self.integrator.merge(&flags.integrator);
        for (dst, src) in [
            (&mut self.lasso.n, flags.n),
            (&mut self.lasso.m, flags.m),
            (&mut self.lasso.s, flags.s),
        ] {
            if let Some(v) = src {
                *dst = v;
            }
        }
        if let Some(rho) = flags.rho {
            self.lasso.rho = rho;
        }
        if flags.noise_free {
            self.sysid.noise_free = true;
        }
        let c = &mut self.certify;
        if flags.theorem.is_some() {
            c.theorem = flags.theorem;
        }
        for (dst, src) in [
            (&mut c.mf, flags.mf),
            (&mut c.lf, flags.lf),
            (&mut c.a1, flags.a1),
            (&mut c.epsilon, flags.epsilon),
        ] {
            if src.is_some() {
                *dst = src;
            }
        }
    }

    pub fn experiment(&self) -> Result<ExperimentKind, CliError> {
        self.experiment.ok_or_else(|| {
            CliError::Config(
                "no experiment given (use --experiment or the `experiment` field)".into(),
            )
        })
    }

    /// Parsed method tags, checked against the experiment.
    pub fn method_list(&self) -> Result<Vec<DynamicsVariant>, CliError> {
        let exp = self.experiment()?;
        let parsed: Vec<DynamicsVariant> = self
            .methods
            .iter()
            .map(|m| {
                m.parse::<DynamicsVariant>()
                    .map_err(|e| CliError::Config(e.to_string()))
            })
            .collect::<Result<_, _>>()?;
        let allowed: &[DynamicsVariant] = match exp {
            ExperimentKind::Lasso => proxcmo::experiments::Experiment::Lasso.methods(),
            ExperimentKind::Shidoku => proxcmo::experiments::Experiment::Shidoku.methods(),
            ExperimentKind::Sysid => proxcmo::experiments::Experiment::Sysid.methods(),
            ExperimentKind::Custom => &DynamicsVariant::ALL,
            ExperimentKind::Certify => &[],
        };
        if parsed.is_empty() {
            return Ok(allowed.to_vec());
        }
        for m in &parsed {
            if !allowed.contains(m) {
                return Err(CliError::Config(format!(
                    "method {m} is not available for experiment {exp}"
                )));
            }
        }
        Ok(parsed)
    }

    /// Output directory: explicit flag, then the environment, then the
    /// config, then [`DEFAULT_OUT_DIR`].
    pub fn resolve_out_dir(&self, flag: Option<&Path>) -> PathBuf {
        if let Some(p) = flag {
            return p.to_path_buf();
        }
        if let Some(p) = std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()) {
            return PathBuf::from(p);
        }
        self.out_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }
}

/// Values given on the command line; every field is optional.
#[derive(Debug, Clone, Default)]
pub struct FlagOverrides {
    pub experiment: Option<ExperimentKind>,
    pub methods: Vec<String>,
    pub seed: Option<u64>,
    pub runs: Option<usize>,
    pub gains: GainOverrides,
    pub integrator: IntegratorOverrides,
    pub n: Option<usize>,
    pub m: Option<usize>,
    pub s: Option<usize>,
    pub rho: Option<f64>,
    pub noise_free: bool,
    pub theorem: Option<Theorem>,
    pub mf: Option<f64>,
    pub lf: Option<f64>,
    pub a1: Option<f64>,
    pub epsilon: Option<f64>,
}
