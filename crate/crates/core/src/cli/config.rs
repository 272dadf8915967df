use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::basis::{BasisKind, BasisSpec, DEFAULT_K};
use crate::corr::{DEFAULT_MAX_LAG, DEFAULT_REPLICATES};
use crate::error::{Error, Result};
use crate::gam::Term;
use crate::synth::SimSpec;

/// Declarative run configuration read from a TOML file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub roles: Roles,
    #[serde(default)]
    pub clean: CleanConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub corr: CorrConfig,
    pub synth: Option<SimSpec>,
    pub output: Option<PathBuf>,
    #[serde(skip)]
    base: PathBuf,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub input: Option<PathBuf>,
    pub flags: Option<PathBuf>,
    /// Declared grid spacing in seconds; inferred when absent.
    pub step: Option<i64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Roles {
    pub response: Option<String>,
    pub upstream: Option<String>,
    pub downstream: Option<String>,
    #[serde(default)]
    pub covariates: Vec<String>,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum PhaseSetting {
    Fixed(usize),
    Named(String),
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CleanConfig {
    #[serde(default)]
    pub range_flags: bool,
    pub wiper_variable: Option<String>,
    pub wiper_period: Option<usize>,
    pub wiper_phase: Option<PhaseSetting>,
    /// Target spacing in seconds.
    pub aggregate: Option<i64>,
    /// Variables gap-filled by linear interpolation.
    #[serde(default)]
    pub interpolate: Vec<String>,
    /// Drop negative imputations.
    #[serde(default)]
    pub nonnegative: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "default_basis")]
    pub basis: BasisKind,
    #[serde(default = "default_k")]
    pub k: usize,
    /// Per-covariate basis dimension.
    #[serde(default)]
    pub covariate_k: BTreeMap<String, usize>,
    #[serde(default = "default_ar_order")]
    pub max_ar_order: usize,
}

fn default_basis() -> BasisKind {
    BasisKind::NaturalCubic
}

fn default_k() -> usize {
    DEFAULT_K
}

fn default_ar_order() -> usize {
    crate::ar::DEFAULT_MAX_ORDER
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            basis: default_basis(),
            k: default_k(),
            covariate_k: BTreeMap::new(),
            max_ar_order: default_ar_order(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrConfig {
    #[serde(default = "default_max_lag")]
    pub max_lag: usize,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub threads: usize,
    #[serde(default)]
    pub burn_in: bool,
    /// Points per covariate in profile and smooth tables.
    #[serde(default = "default_points")]
    pub profile_points: usize,
}

fn default_max_lag() -> usize {
    DEFAULT_MAX_LAG
}

fn default_replicates() -> usize {
    DEFAULT_REPLICATES
}

fn default_alphas() -> Vec<f64> {
    vec![0.20, 0.05]
}

fn default_points() -> usize {
    50
}

impl Default for CorrConfig {
    fn default() -> Self {
        Self {
            max_lag: default_max_lag(),
            replicates: default_replicates(),
            alphas: default_alphas(),
            seed: 0,
            threads: 0,
            burn_in: false,
            profile_points: default_points(),
        }
    }
}

impl RunConfig {
    /// Loads a config; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| Error::Input {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        cfg.base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.corr.max_lag == 0 {
            return Err(Error::Config("corr.max_lag must be at least 1".into()));
        }
        if self.corr.replicates == 0 {
            return Err(Error::Config("corr.replicates must be at least 1".into()));
        }
        if self.corr.alphas.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
            return Err(Error::Config("corr.alphas must lie in (0, 1)".into()));
        }
        if self.corr.profile_points < 2 {
            return Err(Error::Config("corr.profile_points must be at least 2".into()));
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn input(&self) -> Result<PathBuf> {
        self.data
            .input
            .as_deref()
            .map(|p| self.resolve(p))
            .ok_or_else(|| Error::Config("data.input is required".into()))
    }

    pub fn config_output(&self) -> Option<PathBuf> {
        self.output.as_deref().map(|p| self.resolve(p))
    }

    /// One additive term per covariate.
    pub fn terms(&self) -> Vec<Term> {
        self.roles
            .covariates
            .iter()
            .map(|c| {
                let k = self.model.covariate_k.get(c).copied().unwrap_or(self.model.k);
                let spec = match self.model.basis {
                    BasisKind::CubicBspline => BasisSpec::cubic_bspline(k),
                    BasisKind::Linear => BasisSpec::linear(),
                    BasisKind::NaturalCubic => BasisSpec::natural_cubic(k),
                };
                Term::new(c.clone(), spec)
            })
            .collect()
    }

    pub fn role(&self, name: &str, value: &Option<String>) -> Result<String> {
        value
            .clone()
            .ok_or_else(|| Error::Config(format!("roles.{name} is required for this command")))
    }
}
