//! Run configuration, read from a single JSON document.

use std::path::Path;

use depi_core::lagrangian::Side;
use depi_core::stepper::{NewtonConfig, ReducedState};
use depi_core::systems::{HeavyTopParams, RigidBodyParams, Scheme, System};
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Renormalizations larger than this are reported on stderr.
pub const RENORMALIZE_WARN: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    RigidBody,
    HeavyTop,
}

/// Either the three principal moments or a full symmetric matrix (rows).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InertiaSpec {
    Diagonal([f64; 3]),
    Full([[f64; 3]; 3]),
}

impl InertiaSpec {
    pub fn matrix(&self) -> Matrix3<f64> {
        match self {
            InertiaSpec::Diagonal(d) => Matrix3::from_diagonal(&Vector3::from(*d)),
            InertiaSpec::Full(rows) => Matrix3::from_fn(|i, j| rows[i][j]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSpec {
    pub inertia: Option<InertiaSpec>,
    pub mgl: Option<f64>,
    pub chi: Option<[f64; 3]>,
    pub anchor: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    pub m: [f64; 3],
    pub p: [f64; 3],
    /// Body angular velocity used to predict the first increment, `exp(eps * omega)`.
    #[serde(default)]
    pub omega_guess: Option<[f64; 3]>,
}

impl Default for InitialSpec {
    fn default() -> Self {
        Self {
            m: [0.3, -0.2, 4.0],
            p: [0.3, 0.1, 1.0],
            omega_guess: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    pub trajectory: String,
    pub report: String,
    pub verify_report: String,
    pub convergence_csv: String,
    pub convergence_json: String,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            trajectory: "trajectory.csv".into(),
            report: "report.json".into(),
            verify_report: "verify.json".into(),
            convergence_csv: "convergence.csv".into(),
            convergence_json: "convergence.json".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewtonSpec {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_fd_h")]
    pub fd_h: f64,
}

fn default_tol() -> f64 {
    NewtonConfig::default().tol
}

fn default_max_iter() -> usize {
    NewtonConfig::default().max_iter
}

fn default_fd_h() -> f64 {
    NewtonConfig::default().fd_h
}

impl Default for NewtonSpec {
    fn default() -> Self {
        Self {
            tol: default_tol(),
            max_iter: default_max_iter(),
            fd_h: default_fd_h(),
        }
    }
}

fn default_side() -> Side {
    Side::Left
}

fn default_scheme() -> Scheme {
    Scheme::Log
}

fn default_epsilon() -> f64 {
    1e-2
}

fn default_n_steps() -> usize {
    1000
}

fn default_epsilons() -> Vec<f64> {
    vec![2e-2, 1e-2, 5e-3, 2.5e-3]
}

fn default_t_end() -> f64 {
    1.0
}

/// Config file as written by the user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub system: SystemKind,
    #[serde(default = "default_side")]
    pub side: Side,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_n_steps")]
    pub n_steps: usize,
    /// Defaults to a tilted spinning top, `P` along `(0.3, 0.1, 1)`.
    #[serde(default)]
    pub initial: Option<InitialSpec>,
    #[serde(default)]
    pub params: ParamsSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub outputs: OutputSpec,
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default)]
    pub newton: NewtonSpec,
}

/// Validated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub system: System,
    pub side: Side,
    pub scheme: Scheme,
    pub epsilon: f64,
    pub n_steps: usize,
    pub initial: ReducedState,
    pub omega_guess: Vector3<f64>,
    pub seed: u64,
    pub outputs: OutputSpec,
    pub epsilons: Vec<f64>,
    pub t_end: f64,
    pub newton: NewtonConfig,
    /// Human-readable notes about adjustments made while loading.
    pub warnings: Vec<String>,
}

fn config_error(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Rescales `v` to length `target`, noting it when the change exceeds [`RENORMALIZE_WARN`].
fn renormalize(name: &str, v: [f64; 3], target: f64, warnings: &mut Vec<String>) -> Result<Vector3<f64>, CliError> {
    let v = Vector3::from(v);
    let n = v.norm();
    if !(n > 0.0) || !n.is_finite() {
        return Err(config_error(format!("field `{name}`: vector must be finite and nonzero")));
    }
    if (n - target).abs() > RENORMALIZE_WARN {
        warnings.push(format!("`{name}` renormalized from length {n} to {target}"));
    }
    Ok(v * (target / n))
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let raw: RawConfig = serde_json::from_str(text).map_err(|e| config_error(format!("line {}, column {}: {e}", e.line(), e.column())))?;
        Self::from_raw(raw)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| config_error(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_raw(raw: RawConfig) -> Result<Self, CliError> {
        let mut warnings = Vec::new();
        if !(raw.epsilon > 0.0) || !raw.epsilon.is_finite() {
            return Err(config_error(format!("field `epsilon`: must be positive, got {}", raw.epsilon)));
        }
        if raw.n_steps < 1 {
            return Err(config_error("field `n_steps`: must be at least 1"));
        }
        if !(raw.t_end > 0.0) || !raw.t_end.is_finite() {
            return Err(config_error(format!("field `t_end`: must be positive, got {}", raw.t_end)));
        }
        let newton = NewtonConfig {
            tol: raw.newton.tol,
            max_iter: raw.newton.max_iter,
            fd_h: raw.newton.fd_h,
        };
        newton.validate().map_err(|e| config_error(format!("field `newton`: {e}")))?;

        let p = &raw.params;
        let anchor = renormalize("params.anchor", p.anchor.unwrap_or([0.0, 0.0, 1.0]), 1.0, &mut warnings)?;
        let system = match raw.system {
            SystemKind::RigidBody => {
                if p.mgl.is_some() || p.chi.is_some() {
                    return Err(config_error("fields `params.mgl` and `params.chi` apply to heavy_top only"));
                }
                let inertia = p
                    .inertia
                    .clone()
                    .map(|i| i.matrix())
                    .unwrap_or_else(|| Matrix3::from_diagonal(&Vector3::new(1.0, 2.0, 3.0)));
                System::RigidBody(RigidBodyParams::with_anchor(inertia, anchor).map_err(|e| config_error(format!("field `params`: {e}")))?)
            }
            SystemKind::HeavyTop => {
                let defaults = HeavyTopParams::default();
                let params = HeavyTopParams {
                    inertia: p.inertia.clone().map(|i| i.matrix()).unwrap_or(defaults.inertia),
                    mgl: p.mgl.unwrap_or(defaults.mgl),
                    chi: match p.chi {
                        Some(c) => renormalize("params.chi", c, 1.0, &mut warnings)?,
                        None => defaults.chi,
                    },
                    anchor,
                };
                params.validate().map_err(|e| config_error(format!("field `params`: {e}")))?;
                System::HeavyTop(params)
            }
        };
        let (initial, warn_p) = match raw.initial {
            Some(i) => (i, true),
            None => (InitialSpec::default(), false),
        };
        let m = Vector3::from(initial.m);
        if !m.iter().all(|v| v.is_finite()) {
            return Err(config_error("field `initial.m`: must be finite"));
        }
        let mut p_warnings = Vec::new();
        let p0 = renormalize("initial.p", initial.p, anchor.norm(), &mut p_warnings)?;
        if warn_p {
            warnings.extend(p_warnings);
        }
        let omega_guess = Vector3::from(initial.omega_guess.unwrap_or([0.0; 3]));
        Ok(Self {
            system,
            side: raw.side,
            scheme: raw.scheme,
            epsilon: raw.epsilon,
            n_steps: raw.n_steps,
            initial: ReducedState::new(m, p0),
            omega_guess,
            seed: raw.seed,
            outputs: raw.outputs,
            epsilons: raw.epsilons,
            t_end: raw.t_end,
            newton,
            warnings,
        })
    }

    pub fn system_name(&self) -> &'static str {
        self.system.name()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = RunConfig::from_json(r#"{"system": "heavy_top"}"#).unwrap();
        assert_eq!(cfg.side, Side::Left);
        assert_eq!(cfg.scheme, Scheme::Log);
        assert_eq!(cfg.epsilon, 1e-2);
        assert_eq!(cfg.n_steps, 1000);
        assert!((cfg.initial.p.norm() - 1.0).abs() < 1e-15);
        assert!(cfg.warnings.is_empty());
        assert_eq!(cfg.system, System::HeavyTop(HeavyTopParams::default()));
    }

    #[test]
    fn rejects_bad_values() {
        for text in [
            r#"{"system": "heavy_top", "n_steps": 0}"#,
            r#"{"system": "heavy_top", "epsilon": 0.0}"#,
            r#"{"system": "heavy_top", "bogus": 1}"#,
            r#"{"system": "pendulum"}"#,
            r#"{"system": "rigid_body", "params": {"mgl": 1.0}}"#,
            r#"{"system": "heavy_top", "params": {"inertia": [1.0, -1.0, 2.0]}}"#,
            r#"{"system": "heavy_top", "initial": {"m": [0, 0, 1], "p": [0, 0, 0]}}"#,
        ] {
            assert!(matches!(RunConfig::from_json(text), Err(CliError::Config(_))), "{text}");
        }
    }

    #[test]
    fn explicit_unnormalized_p_warns() {
        let cfg = RunConfig::from_json(r#"{"system": "heavy_top", "initial": {"m": [0, 0, 1], "p": [0, 0, 2]}}"#).unwrap();
        assert_eq!(cfg.warnings.len(), 1);
        assert_eq!(cfg.initial.p, Vector3::z());
    }

    #[test]
    fn parse_errors_carry_position() {
        let Err(CliError::Config(msg)) = RunConfig::from_json("{\n  \"system\": \"heavy_top\",\n  \"epsilon\": \"x\"\n}") else {
            panic!("expected a config error");
        };
        assert!(msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn full_inertia_and_unit_p_accepted_silently() {
        let cfg = RunConfig::from_json(
            r#"{"system": "rigid_body", "params": {"inertia": [[1, 0, 0], [0, 2, 0], [0, 0, 3]]},
                "initial": {"m": [1, 2, 3], "p": [0, 0, 1]}}"#,
        )
        .unwrap();
        assert!(cfg.warnings.is_empty());
        let System::RigidBody(p) = &cfg.system else { panic!() };
        assert_eq!(p.inertia[(2, 2)], 3.0);
    }
}
