//! TOML experiment descriptions. Unknown keys are rejected; every error
//! names the offending field.

use std::path::Path;

use brenier::diagnostics::{Tolerances, CHECK_NAMES};
use brenier::oracle1d::OracleGrid;
use brenier::smoothing::{Level, Scheme};
use brenier::{GaussianSpace, QuadraturePolicy, ScalarTarget, SolveConfig, TargetKind};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::battery::BatteryConfig;
use crate::CliError;

/// Extra check emitted by the CLI for one-dimensional targets.
pub const ORACLE_CHECK: &str = "oracle-agreement";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub seed: u64,
    pub space: Option<SpaceConfig>,
    pub target: Option<TargetKind>,
    pub solver: Option<SolveConfig>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub checks: ChecksConfig,
    pub study: Option<StudyConfig>,
    pub battery: Option<BatteryConfig>,
    pub oracle: Option<OracleConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceConfig {
    pub dim: usize,
    /// Defaults to a tensor Gauss-Hermite rule sized for the dimension.
    pub quadrature: Option<QuadraturePolicy>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChecksConfig {
    /// Checks left out of the report and of the exit status.
    #[serde(default)]
    pub disabled: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub scheme: Scheme,
    pub levels: Vec<Level>,
    /// Bound on the final-row error (or on the last Cauchy increment when
    /// the reference is the finest row).
    #[serde(default = "default_study_threshold")]
    pub threshold: f64,
}

fn default_study_threshold() -> f64 {
    1e-2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    #[serde(default)]
    pub grid: OracleGrid,
    /// Table range, a sub-interval of the grid.
    #[serde(default = "default_lo")]
    pub lo: f64,
    #[serde(default = "default_hi")]
    pub hi: f64,
    /// Largest accepted `|T_oracle − T_solver|` on the table.
    #[serde(default = "default_oracle_threshold")]
    pub threshold: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            grid: OracleGrid::default(),
            lo: default_lo(),
            hi: default_hi(),
            threshold: default_oracle_threshold(),
        }
    }
}

fn default_lo() -> f64 {
    -3.0
}
fn default_hi() -> f64 {
    3.0
}
pub fn default_oracle_threshold() -> f64 {
    1e-3
}

/// Level of the default tensor rule in each dimension.
pub fn default_level(dim: usize) -> usize {
    match dim {
        1 => 40,
        2 => 30,
        3 => 12,
        _ => 8,
    }
}

/// A parsed config with its provenance.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: Config,
    /// Hex SHA-256 of the raw file.
    pub sha256: String,
    /// Config seed, or the command-line override.
    pub seed: u64,
}

pub fn load(path: &Path, seed: Option<u64>) -> Result<Loaded, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::config("--config", format!("{}: {e}", path.display())))?;
    let text = String::from_utf8(bytes.clone()).map_err(|_| CliError::config("--config", "file is not UTF-8"))?;
    let config = parse(&text)?;
    Ok(Loaded {
        seed: seed.unwrap_or(config.seed),
        sha256: sha256_hex(&bytes),
        config,
    })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn parse(text: &str) -> Result<Config, CliError> {
    let located = |e: &toml::de::Error| match e.span() {
        Some(span) => format!(
            "{} (line {})",
            e.message(),
            text[..span.start].matches('\n').count() + 1
        ),
        None => e.message().to_string(),
    };
    let de = toml::Deserializer::parse(text).map_err(|e| CliError::config("config", located(&e)))?;
    let config: Config = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let field = if path.is_empty() || path == "." {
            "config".to_string()
        } else {
            path
        };
        CliError::config(field, located(e.inner()))
    })?;
    config.validate_common()?;
    Ok(config)
}

impl Config {
    fn validate_common(&self) -> Result<(), CliError> {
        let t = &self.tolerances;
        for (name, v) in [
            ("identity", t.identity),
            ("inequality", t.inequality),
            ("gap", t.gap),
            ("divergence", t.divergence),
            ("young", t.young),
            ("trace", t.trace),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(CliError::config(
                    format!("tolerances.{name}"),
                    "must be a finite non-negative number",
                ));
            }
        }
        for name in &self.checks.disabled {
            if !CHECK_NAMES.contains(&name.as_str()) && name != ORACLE_CHECK {
                return Err(CliError::config("checks.disabled", format!("unknown check {name:?}")));
            }
        }
        if let Some(study) = &self.study {
            if study.levels.is_empty() {
                return Err(CliError::config("study.levels", "at least one level is required"));
            }
            if !(study.threshold.is_finite() && study.threshold > 0.0) {
                return Err(CliError::config("study.threshold", "must be positive"));
            }
        }
        if let Some(oracle) = &self.oracle {
            oracle.grid.validate().map_err(|e| CliError::config("oracle.grid", e))?;
            if !(oracle.lo < oracle.hi && oracle.lo >= oracle.grid.lo && oracle.hi <= oracle.grid.hi) {
                return Err(CliError::config(
                    "oracle.lo",
                    "table range must be a non-empty sub-interval of the grid",
                ));
            }
            if !(oracle.threshold.is_finite() && oracle.threshold > 0.0) {
                return Err(CliError::config("oracle.threshold", "must be positive"));
            }
        }
        if let Some(solver) = &self.solver {
            validate_solver(solver, "solver")?;
        }
        Ok(())
    }

    fn section<'a, T>(value: &'a Option<T>, name: &str, command: &str) -> Result<&'a T, CliError> {
        value
            .as_ref()
            .ok_or_else(|| CliError::config(name, format!("section is required for `{command}`")))
    }

    pub fn space(&self, command: &str) -> Result<GaussianSpace, CliError> {
        let space = Self::section(&self.space, "space", command)?;
        build_space(space.dim, space.quadrature, "space")
    }

    pub fn target(&self, space: &GaussianSpace, command: &str) -> Result<ScalarTarget, CliError> {
        let kind = Self::section(&self.target, "target", command)?;
        build_target(space, kind, "target")
    }

    pub fn solver(&self, command: &str) -> Result<&SolveConfig, CliError> {
        Self::section(&self.solver, "solver", command)
    }

    pub fn study(&self, command: &str) -> Result<&StudyConfig, CliError> {
        Self::section(&self.study, "study", command)
    }

    pub fn is_enabled(&self, check: &str) -> bool {
        !self.checks.disabled.iter().any(|d| d == check)
    }
}

pub fn validate_solver(solver: &SolveConfig, field: &str) -> Result<(), CliError> {
    if solver.degree == 0 {
        return Err(CliError::config(format!("{field}.degree"), "must be at least 1"));
    }
    solver.validate().map_err(|e| CliError::config(field, e))
}

pub fn build_space(dim: usize, quadrature: Option<QuadraturePolicy>, field: &str) -> Result<GaussianSpace, CliError> {
    if dim == 0 {
        return Err(CliError::config(format!("{field}.dim"), "must be at least 1"));
    }
    let policy = quadrature.unwrap_or(QuadraturePolicy::TensorHermite {
        level: default_level(dim),
    });
    GaussianSpace::new(dim, policy).map_err(|e| CliError::config(format!("{field}.quadrature"), e))
}

/// Builds the target and checks that `e^{−f}` is integrable on the rule.
pub fn build_target(space: &GaussianSpace, kind: &TargetKind, field: &str) -> Result<ScalarTarget, CliError> {
    let target = ScalarTarget::new(space.dim(), kind.clone()).map_err(|e| CliError::config(field, e))?;
    space.target_measure(&target).map_err(|e| CliError::config(field, e))?;
    Ok(target)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field_of(text: &str) -> String {
        match parse(text) {
            Err(CliError::Config { field, message }) => format!("{field}: {message}"),
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_solve_config() {
        let c = parse(
            "seed = 5\n[space]\ndim = 1\n[target]\nkind = \"gaussian\"\nmean = [1.0]\nsigma = [2.0]\n[solver]\ndegree = 2\n",
        )
        .unwrap();
        assert_eq!(c.seed, 5);
        assert_eq!(c.solver.unwrap().max_iters, 200);
        let space = c.space.unwrap();
        assert_eq!(space.quadrature, None);
    }

    #[test]
    fn unknown_keys_are_named() {
        assert!(field_of("sede = 1\n").contains("sede"));
        assert!(field_of("[solver]\ndegree = 2\nmax_iter = 4\n").starts_with("solver"));
        assert!(
            field_of("[space]\ndim = 1\nquadrature = { kind = \"tensor-hermite\", level = 4, extra = 1 }\n")
                .contains("extra")
        );
        assert!(field_of("[target]\nkind = \"quartic-well\"\na = 1.0\nb = 0.0\nc = 2.0\n").contains("`c`"));
    }

    #[test]
    fn invalid_values_are_named() {
        assert!(field_of("[solver]\ndegree = 0\n").starts_with("solver.degree"));
        assert!(field_of("[solver]\ndegree = \"two\"\n").starts_with("solver.degree"));
        assert!(field_of("[study]\nscheme = \"ou\"\nlevels = []\n").starts_with("study.levels"));
        assert!(field_of("[study]\nscheme = \"ou\"\nlevels = [0]\n").starts_with("study.levels"));
        assert!(field_of("[tolerances]\nidentity = -1.0\n").starts_with("tolerances.identity"));
        assert!(field_of("[checks]\ndisabled = [\"nope\"]\n").starts_with("checks.disabled"));
    }

    #[test]
    fn mixed_level_list() {
        let c = parse("[study]\nscheme = \"truncation\"\nlevels = [2, 4, \"inf\"]\n").unwrap();
        assert_eq!(
            c.study.unwrap().levels,
            vec![Level::Finite(2), Level::Finite(4), Level::Infinite]
        );
    }

    #[test]
    fn space_and_target_errors() {
        let c = parse("[space]\ndim = 0\n").unwrap();
        assert!(matches!(c.space("solve"), Err(CliError::Config { field, .. }) if field == "space.dim"));
        let c =
            parse("[space]\ndim = 1\n[target]\nkind = \"gaussian\"\nmean = [0.0, 1.0]\nsigma = [1.0, 1.0]\n").unwrap();
        let space = c.space("solve").unwrap();
        assert!(matches!(c.target(&space, "solve"), Err(CliError::Config { field, .. }) if field == "target"));
        assert!(matches!(c.solver("solve"), Err(CliError::Config { field, .. }) if field == "solver"));
    }

    #[test]
    fn hash_is_sha256() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
