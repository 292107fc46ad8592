//! Experiment configuration: schema, overrides and semantic validation.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::checks::Check;

/// Config problems; all of them map to exit code 2.
#[derive(Debug)]
pub enum ConfigError {
    Read { path: PathBuf, source: std::io::Error },
    Parse { origin: String, line: usize, column: usize, message: String },
    Invalid(String),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Read { path, source } => write!(f, "cannot read {}: {source}", path.display()),
            Self::Parse {
                origin,
                line,
                column,
                message,
            } => write!(f, "{origin}:{line}:{column}: {message}"),
            Self::Invalid(msg) => write!(f, "{msg}"),
        }
    }
}

impl std::error::Error for ConfigError {}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub kernel: KernelSpec,
    pub group: GroupSpec,
    pub action: ActionSpec,
    pub grid: GridSpec,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub checks: Vec<String>,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default)]
    pub output: OutputSpec,
}

fn default_rho() -> f64 {
    1.0
}

fn default_n_max() -> usize {
    4
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub name: String,
    #[serde(default)]
    pub params: KernelParams,
}

/// Optional kernel parameters. Torus kernels read `lattice` and `cutoff`;
/// the MGF check reads `lambda`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lattice: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKind {
    Trivial,
    Cyclic,
    Product,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupSpec {
    pub kind: GroupKind,
    /// Orders of the cyclic factors.
    #[serde(default)]
    pub factors: Vec<usize>,
}

impl GroupSpec {
    pub fn order(&self) -> usize {
        self.factors.iter().product()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionName {
    Identity,
    /// `t ↦ 1−t` on each interval axis.
    Reversal,
    /// `t ↦ −t` on the torus.
    Negation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionSpec {
    pub name: ActionName,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Points per axis.
    pub n: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
    Txt,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

fn default_dir() -> PathBuf {
    PathBuf::from("invdecomp-out")
}

fn default_formats() -> Vec<Format> {
    vec![Format::Json, Format::Csv, Format::Txt]
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            formats: default_formats(),
        }
    }
}

/// Kernels the runner can build.
pub const KERNELS: [&str; 5] = ["bridge", "watson", "sheet_tied", "sheet_compensated", "torus_watson"];

/// Tolerance keys with their defaults. `z_score` is a band width, not a
/// tolerance, and is not touched by `--tol-scale`.
pub const TOLERANCES: [(&str, f64); 13] = [
    ("invariance", 1e-10),
    ("projection", 1e-10),
    ("watson_relation", 1e-3),
    ("z2_condition", 1e-8),
    ("ks", 0.01),
    ("z_score", 4.0),
    ("mgf_spectral", 1e-3),
    ("mgf_mc", 0.02),
    ("kl_eigen", 0.01),
    ("cluster", 1e-6),
    ("eigenspace", 1e-8),
    ("stationarity", 1e-10),
    ("pathwise", 1e-10),
];

impl ExperimentConfig {
    pub fn from_json(text: &str, origin: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Parse {
            origin: origin.to_string(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Tolerance for `key`, with the default when not overridden.
    pub fn tol(&self, key: &str) -> f64 {
        self.tolerances.get(key).copied().unwrap_or_else(|| {
            TOLERANCES
                .iter()
                .find(|(k, _)| *k == key)
                .map(|(_, v)| *v)
                .unwrap_or_else(|| panic!("unknown tolerance key {key}"))
        })
    }

    /// Multiplies every tolerance except `z_score` by `scale`, making the
    /// defaults explicit.
    pub fn scale_tolerances(&mut self, scale: f64) -> Result<(), ConfigError> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(invalid(format!("--tol-scale must be positive, got {scale}")));
        }
        for (key, _) in TOLERANCES {
            if key != "z_score" {
                let v = self.tol(key) * scale;
                self.tolerances.insert(key.to_string(), v);
            }
        }
        Ok(())
    }

    /// Requested checks, parsed.
    pub fn parsed_checks(&self) -> Result<Vec<Check>, ConfigError> {
        self.checks
            .iter()
            .map(|c| c.parse::<Check>().map_err(|_| invalid(format!("unknown check {c:?}"))))
            .collect()
    }

    pub fn kernel_dim(&self) -> usize {
        match self.kernel.name.as_str() {
            "sheet_tied" | "sheet_compensated" => 2,
            _ => 1,
        }
    }

    pub fn is_torus(&self) -> bool {
        self.kernel.name == "torus_watson"
    }

    /// Semantic checks beyond the schema.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.name.trim().is_empty() {
            return Err(invalid("name must not be empty"));
        }
        let kernel = self.kernel.name.as_str();
        if !KERNELS.contains(&kernel) {
            return Err(invalid(format!("unknown kernel {kernel:?}; expected one of {KERNELS:?}")));
        }
        self.validate_grid()?;
        self.validate_group()?;
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(invalid(format!("rho {} outside [0, 1]", self.rho)));
        }
        if !(1..=12).contains(&self.n_max) {
            return Err(invalid(format!("n_max {} not in 1..=12", self.n_max)));
        }
        for (key, v) in &self.tolerances {
            if !TOLERANCES.iter().any(|(k, _)| k == key) {
                return Err(invalid(format!("unknown tolerance {key:?}")));
            }
            if !(v.is_finite() && *v > 0.0) {
                return Err(invalid(format!("tolerance {key} must be positive, got {v}")));
            }
        }
        if self.output.formats.is_empty() {
            return Err(invalid("output.formats must not be empty"));
        }
        let checks = self.parsed_checks()?;
        if checks.is_empty() {
            return Err(invalid("checks must not be empty"));
        }
        for c in &checks {
            self.validate_check(*c)?;
        }
        Ok(())
    }

    fn validate_grid(&self) -> Result<(), ConfigError> {
        let n = &self.grid.n;
        if n.is_empty() || n.iter().any(|&x| x < 2) {
            return Err(invalid(format!("grid.n must list at least 2 points per axis, got {n:?}")));
        }
        let entries = n.iter().product::<usize>().pow(2);
        if entries > 1 << 24 {
            return Err(invalid(format!("grid {n:?} gives a {entries}-entry kernel, above the 2^24 limit")));
        }
        if self.is_torus() {
            if n.iter().any(|x| x % 2 != 0) {
                return Err(invalid(format!("torus grid sizes must be even, got {n:?}")));
            }
            if let Some(l) = &self.kernel.params.lattice {
                if l.len() != n.len() || l.iter().any(|v| v.len() != n.len()) {
                    return Err(invalid(format!(
                        "lattice must have {d} basis vectors of length {d}",
                        d = n.len()
                    )));
                }
            }
            let cutoff = self.torus_cutoff();
            if let Some(&small) = n.iter().find(|&&x| 2 * cutoff >= x) {
                return Err(invalid(format!("cutoff {cutoff} needs more than {} points per axis, got {small}", 2 * cutoff)));
            }
        } else {
            if n.len() != self.kernel_dim() {
                return Err(invalid(format!(
                    "kernel {} needs {} grid axes, got {}",
                    self.kernel.name,
                    self.kernel_dim(),
                    n.len()
                )));
            }
            if self.kernel.params.lattice.is_some() || self.kernel.params.cutoff.is_some() {
                return Err(invalid("lattice and cutoff apply to torus kernels only"));
            }
        }
        Ok(())
    }

    fn validate_group(&self) -> Result<(), ConfigError> {
        let g = &self.group;
        match g.kind {
            GroupKind::Trivial if !g.factors.is_empty() => return Err(invalid("trivial group takes no factors")),
            GroupKind::Cyclic if g.factors.len() != 1 => return Err(invalid("cyclic group takes exactly one factor")),
            GroupKind::Product if g.factors.len() < 2 => return Err(invalid("product group takes at least two factors")),
            _ => {}
        }
        if g.factors.contains(&0) {
            return Err(invalid("group factors must be positive"));
        }
        let dim = self.grid.n.len();
        match self.action.name {
            ActionName::Identity if g.order() != 1 => {
                Err(invalid(format!("identity action needs the trivial group, got order {}", g.order())))
            }
            _ if self.is_torus() && self.action.name != ActionName::Negation => {
                Err(invalid("torus kernels use the negation action"))
            }
            ActionName::Reversal => {
                let want: Vec<usize> = vec![2; dim];
                let ok = match dim {
                    1 => g.kind == GroupKind::Cyclic && g.factors == want,
                    _ => g.kind == GroupKind::Product && g.factors == want,
                };
                if ok {
                    Ok(())
                } else {
                    Err(invalid(format!(
                        "reversal on {dim} axes acts through {}, got {:?} {:?}",
                        if dim == 1 { "cyclic [2]" } else { "product [2, 2]" },
                        g.kind,
                        g.factors
                    )))
                }
            }
            ActionName::Negation if !self.is_torus() => Err(invalid("negation applies to torus kernels only")),
            ActionName::Negation if !(g.kind == GroupKind::Cyclic && g.factors == [2]) => {
                Err(invalid("negation acts through cyclic [2]"))
            }
            _ => Ok(()),
        }
    }

    fn validate_check(&self, c: Check) -> Result<(), ConfigError> {
        let need = |ok: bool, why: &str| if ok { Ok(()) } else { Err(invalid(format!("check {c}: {why}"))) };
        if c.is_monte_carlo() {
            need(self.seed.is_some(), "a seed is required for Monte Carlo checks")?;
            need(self.samples.is_some_and(|s| s >= 10), "samples must be at least 10")?;
        }
        if c.needs_action() {
            need(self.group.order() > 1, "needs a non-trivial group action")?;
        }
        match c {
            Check::Projection | Check::WatsonRelation | Check::CanonicalDecomposition => need(
                self.group.factors.iter().all(|&f| f <= 2),
                "needs real characters; cyclic factors of order above 2 have complex ones",
            ),
            Check::Z2Condition => need(self.group.order() == 2, "needs a group of order 2"),
            Check::Duplication => {
                need(self.kernel.name == "watson", "runs on the watson kernel")
            }
            Check::Quadruplication => {
                need(self.kernel.name == "sheet_compensated", "runs on the sheet_compensated kernel")?;
                need(self.grid.n[0] == self.grid.n[1], "needs a square grid")
            }
            Check::Mgf => {
                need(self.kernel.name == "watson", "runs on the watson kernel")?;
                let lmax = invdecomp::cumulants::mgf_singularity(self.rho);
                let lambdas = self.mgf_lambdas();
                need(!lambdas.is_empty(), "kernel.params.lambda must not be empty")?;
                need(
                    lambdas.iter().all(|l| l.is_finite() && l.abs() < lmax),
                    &format!("every lambda must satisfy |lambda| < {lmax:.4}"),
                )
            }
            Check::Stationarity | Check::TorusWatson => need(self.is_torus(), "runs on torus kernels"),
            _ => Ok(()),
        }
    }

    /// Torus cutoff, defaulting to the largest one every axis resolves.
    pub fn torus_cutoff(&self) -> usize {
        self.kernel
            .params
            .cutoff
            .unwrap_or_else(|| self.grid.n.iter().map(|n| n / 2 - 1).min().unwrap_or(0))
    }

    pub fn mgf_lambdas(&self) -> Vec<f64> {
        self.kernel.params.lambda.clone().unwrap_or_else(|| vec![0.5, 1.0])
    }
}
