//! Run configuration: a single JSON document covering every command, with
//! defaults for everything a command does not need. Reports embed the
//! resolved configuration so a run is reproducible from its own output.

use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    pub coefficient: CoefficientSpec,
    #[serde(default)]
    pub mesh: MeshSpec,
    #[serde(default)]
    pub time: TimeSpec,
    #[serde(default)]
    pub regime: RegimeSpec,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default)]
    pub drive: Option<DriveSpec>,
    #[serde(default)]
    pub control: ControlSpec,
    #[serde(default)]
    pub observability: ObservabilitySpec,
    #[serde(default)]
    pub constants: ConstantsSpec,
    #[serde(default)]
    pub identities: IdentitiesSpec,
    #[serde(default)]
    pub elliptic: EllipticSpec,
}

fn default_schema() -> u32 {
    SCHEMA_VERSION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoefficientSpec {
    /// a(x) = x^alpha.
    Power { alpha: f64 },
    /// Explicit expressions for a(x) and its derivative.
    Expression { a: String, da: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSpec {
    #[serde(default = "default_elements")]
    pub n_elements: usize,
    #[serde(default)]
    pub grading: GradingSpec,
}

fn default_elements() -> usize {
    64
}

impl Default for MeshSpec {
    fn default() -> Self {
        Self { n_elements: default_elements(), grading: GradingSpec::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum GradingSpec {
    #[default]
    Uniform,
    Geometric {
        #[serde(default = "default_ratio")]
        ratio: f64,
    },
    Power {
        exponent: f64,
    },
}

fn default_ratio() -> f64 {
    0.7
}

impl GradingSpec {
    pub fn to_grading(&self) -> degenbeam::Grading {
        match *self {
            GradingSpec::Uniform => degenbeam::Grading::Uniform,
            GradingSpec::Geometric { ratio } => {
                degenbeam::Grading::GeometricTowardZero { ratio }
            }
            GradingSpec::Power { exponent } => degenbeam::Grading::PowerTowardZero { exponent },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    #[serde(default = "default_t_final")]
    pub t_final: f64,
    /// Step size; mesh width when omitted (rounded to divide t_final).
    #[serde(default)]
    pub dt: Option<f64>,
    /// Cap on the step count when dt is derived.
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
}

fn default_t_final() -> f64 {
    2.0
}

fn default_max_steps() -> usize {
    10_000
}

impl Default for TimeSpec {
    fn default() -> Self {
        Self { t_final: default_t_final(), dt: None, max_steps: default_max_steps() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum RegimeSpec {
    #[default]
    Adjoint,
    Controlled,
    Feedback {
        beta: f64,
        gamma: f64,
    },
}

impl RegimeSpec {
    pub fn to_regime(self) -> degenbeam::BoundaryRegime {
        match self {
            RegimeSpec::Adjoint => degenbeam::BoundaryRegime::Adjoint,
            RegimeSpec::Controlled => degenbeam::BoundaryRegime::Controlled,
            RegimeSpec::Feedback { beta, gamma } => {
                degenbeam::BoundaryRegime::Feedback { beta, gamma }
            }
        }
    }

    pub fn feedback_parameters(self) -> (f64, f64) {
        match self {
            RegimeSpec::Feedback { beta, gamma } => (beta, gamma),
            _ => (1.0, 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    #[serde(default = "default_displacement")]
    pub displacement: DataSpec,
    #[serde(default)]
    pub velocity: DataSpec,
}

fn default_displacement() -> DataSpec {
    DataSpec::Eigenmode { index: 1 }
}

impl Default for InitialSpec {
    fn default() -> Self {
        Self { displacement: default_displacement(), velocity: DataSpec::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSpec {
    #[default]
    Zero,
    /// 1-based index into the generalized eigenmodes of the regime.
    Eigenmode {
        index: usize,
    },
    /// Coefficients c_0 + c_1 x + c_2 x^2 + ...
    Polynomial {
        coeffs: Vec<f64>,
    },
    /// One DOF value per line, full numbering (2 per node).
    File {
        path: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriveSpec {
    Zero,
    Sine { amplitude: f64, frequency: f64 },
    /// One sample per line on the run's time grid.
    File { path: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSpec {
    #[serde(default = "default_cg_tol")]
    pub cg_tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_target_ratio")]
    pub target_ratio: f64,
    /// Also run the driven-DOF diagnostic propagation of the control.
    #[serde(default)]
    pub driven_diagnostic: bool,
}

fn default_cg_tol() -> f64 {
    1e-8
}

fn default_max_iter() -> usize {
    500
}

fn default_target_ratio() -> f64 {
    1e-6
}

impl Default for ControlSpec {
    fn default() -> Self {
        Self {
            cg_tol: default_cg_tol(),
            max_iter: default_max_iter(),
            target_ratio: default_target_ratio(),
            driven_diagnostic: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservabilitySpec {
    #[serde(default = "default_probes")]
    pub n_probes: usize,
    #[serde(default = "default_slack")]
    pub slack: f64,
}

fn default_probes() -> usize {
    5
}

fn default_slack() -> f64 {
    0.10
}

impl Default for ObservabilitySpec {
    fn default() -> Self {
        Self { n_probes: default_probes(), slack: default_slack() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ConstantsSpec {
    /// Override the grid-minimized delta of the stabilization chain.
    #[serde(default)]
    pub delta: Option<f64>,
    /// Override eps0 (at most 2-K).
    #[serde(default)]
    pub eps0: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentitiesSpec {
    /// Number of dyadic (h, dt) levels for the multiplier identities.
    #[serde(default = "default_refinements")]
    pub refinements: usize,
    #[serde(default = "default_final_tol")]
    pub final_residual_tol: f64,
}

fn default_refinements() -> usize {
    3
}

fn default_final_tol() -> f64 {
    1e-2
}

impl Default for IdentitiesSpec {
    fn default() -> Self {
        Self { refinements: default_refinements(), final_residual_tol: default_final_tol() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EllipticSpec {
    #[serde(default = "one")]
    pub lambda: f64,
    #[serde(default)]
    pub mu: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for EllipticSpec {
    fn default() -> Self {
        Self { lambda: 1.0, mu: 0.0 }
    }
}

impl RunConfig {
    pub fn from_str(text: &str) -> Result<Self, String> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                cfg.schema_version
            ));
        }
        Ok(cfg)
    }

    /// Canonical serialization: pretty JSON with struct field order.
    #[cfg(test)]
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> &'static str {
        r#"{"coefficient": {"form": "power", "alpha": 0.5}}"#
    }

    #[test]
    fn defaults_fill_in() {
        let cfg = RunConfig::from_str(minimal()).unwrap();
        assert_eq!(cfg.seed, 0);
        assert_eq!(cfg.mesh.n_elements, 64);
        assert_eq!(cfg.time.t_final, 2.0);
        assert_eq!(cfg.control.cg_tol, 1e-8);
        assert!(matches!(cfg.regime, RegimeSpec::Adjoint));
    }

    #[test]
    fn round_trip_is_stable() {
        let cfg = RunConfig::from_str(minimal()).unwrap();
        let text1 = cfg.to_canonical_json();
        let cfg2 = RunConfig::from_str(&text1).unwrap();
        assert_eq!(cfg, cfg2);
        // canonical form is a fixed point byte for byte
        assert_eq!(text1, cfg2.to_canonical_json());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let bad = r#"{"coefficient": {"form": "power", "alpha": 0.5}, "tyop": 1}"#;
        assert!(RunConfig::from_str(bad).is_err());
    }

    #[test]
    fn wrong_schema_version_is_rejected() {
        let bad = r#"{"schema_version": 99, "coefficient": {"form": "power", "alpha": 0.5}}"#;
        assert!(RunConfig::from_str(bad).is_err());
    }
}
