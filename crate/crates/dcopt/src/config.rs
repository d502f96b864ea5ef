//! Declarative experiment configuration.
//!
//! Experiments are described by a TOML file with nested sections; unknown
//! keys are rejected so silently misspelled settings cannot skew results.
//! The full grammar is documented in the repository README.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algorithms::{DamscoParams, DashcoParams, Derivation, Schedule};
use crate::compression::{CompressorKind, CompressorSpec, Sparsity};
use crate::problems::{FamilySpec, GradientOracle, HeterogeneityMode, NoiseModel};
use crate::topology::{Topology, Weighting};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("config validation error: {0}")]
    Validation(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Damsco,
    Dashco,
}

/// Top-level experiment description. Round-trips losslessly through TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub method: Method,
    /// Number of rounds.
    pub t: u64,
    /// Number of agents.
    pub n: usize,
    /// Model dimension.
    pub d: usize,
    #[serde(default = "default_record_every")]
    pub record_every: u64,
    #[serde(default)]
    pub master_seed: u64,
    /// Default output path for `run` (overridable on the command line).
    #[serde(default)]
    pub output: Option<String>,
    pub problem: ProblemSection,
    #[serde(default)]
    pub oracle: OracleSection,
    pub topology: TopologySection,
    /// Single compressor used for every channel (DAMSCo always uses this
    /// one; DaSHCo uses it for both channels unless the per-channel
    /// sections are present).
    #[serde(default)]
    pub compressor: Option<CompressorSection>,
    #[serde(default)]
    pub compressor_x: Option<CompressorSection>,
    #[serde(default)]
    pub compressor_g: Option<CompressorSection>,
    pub schedule: ScheduleSection,
}

fn default_record_every() -> u64 {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub family: ProblemFamilyName,
    /// hetero_quadratic: explicit per-agent centers (n rows of d values).
    #[serde(default)]
    pub centers: Option<Vec<Vec<f64>>>,
    /// hetero_quadratic: spread centers evenly over this span instead.
    #[serde(default)]
    pub span: Option<(f64, f64)>,
    #[serde(default)]
    pub samples_per_agent: Option<usize>,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub classes: Option<usize>,
    #[serde(default)]
    pub data_noise: Option<f64>,
    #[serde(default)]
    pub csv_path: Option<String>,
    #[serde(default)]
    pub heterogeneity: HeterogeneitySection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemFamilyName {
    HeteroQuadratic,
    NonconvexRegression,
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub struct HeterogeneitySection {
    #[serde(default = "default_mode")]
    pub mode: HeterogeneityModeName,
    #[serde(default)]
    pub classes_per_agent: Option<usize>,
}

impl Default for HeterogeneitySection {
    fn default() -> Self {
        Self {
            mode: HeterogeneityModeName::IidShuffle,
            classes_per_agent: None,
        }
    }
}

fn default_mode() -> HeterogeneityModeName {
    HeterogeneityModeName::IidShuffle
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeterogeneityModeName {
    IidShuffle,
    LabelPartition,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    #[serde(default)]
    pub sigma: f64,
    #[serde(default = "default_noise_model")]
    pub noise_model: NoiseModelName,
    #[serde(default)]
    pub batch_size: Option<usize>,
    #[serde(default)]
    pub clip_b_inf: Option<f64>,
}

impl Default for OracleSection {
    fn default() -> Self {
        Self {
            sigma: 0.0,
            noise_model: NoiseModelName::GaussianAdditive,
            batch_size: None,
            clip_b_inf: None,
        }
    }
}

fn default_noise_model() -> NoiseModelName {
    NoiseModelName::GaussianAdditive
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModelName {
    GaussianAdditive,
    Minibatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySection {
    pub kind: TopologyKindName,
    #[serde(default)]
    pub rows: Option<usize>,
    #[serde(default)]
    pub cols: Option<usize>,
    #[serde(default)]
    pub edges: Option<Vec<(usize, usize)>>,
    #[serde(default = "default_weighting")]
    pub weighting: Weighting,
}

fn default_weighting() -> Weighting {
    // The experiments never pin a ring weighting rule; lazy Metropolis is the
    // default and the choice stays exposed here.
    Weighting::LazyMetropolis
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKindName {
    Ring,
    Grid,
    Complete,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompressorSection {
    pub kind: CompressorKindName,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub ratio: Option<f64>,
    #[serde(default)]
    pub s: Option<u32>,
    #[serde(default)]
    pub p: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompressorKindName {
    Identity,
    TopK,
    RandomK,
    QsgdRescaled,
    Gossip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    pub derivation: DerivationName,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub beta1: Option<f64>,
    #[serde(default)]
    pub beta2: Option<f64>,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub gamma_x: Option<f64>,
    #[serde(default)]
    pub gamma_g: Option<f64>,
    #[serde(default)]
    pub theta: Option<f64>,
    #[serde(default)]
    pub theta1: Option<f64>,
    #[serde(default)]
    pub theta2: Option<f64>,
    #[serde(default)]
    pub theta3: Option<f64>,
    #[serde(default)]
    pub omega: Option<f64>,
    /// Constants for the theorem derivations; unspecified values are filled
    /// from the instantiated problem and topology.
    #[serde(default)]
    pub l: Option<f64>,
    #[serde(default)]
    pub b_inf: Option<f64>,
    #[serde(default)]
    pub sigma: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivationName {
    Manual,
    Theorem1,
    Theorem2CaseI,
    Theorem2CaseIi,
    Theorem4,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n == 0 || self.d == 0 {
            return Err(ConfigError::Validation("n and d must be >= 1".into()));
        }
        if self.record_every == 0 {
            return Err(ConfigError::Validation("record_every must be >= 1".into()));
        }
        self.topology_spec().map(|_| ())?;
        self.problem_spec().map(|_| ())?;
        self.oracle_spec().map(|_| ())?;
        match self.method {
            Method::Damsco => {
                if self.compressor_x.is_some() || self.compressor_g.is_some() {
                    return Err(ConfigError::Validation(
                        "damsco uses a single [compressor] section".into(),
                    ));
                }
            }
            Method::Dashco => {}
        }
        Ok(())
    }

    pub fn topology_spec(&self) -> Result<Topology, ConfigError> {
        let t = &self.topology;
        let topo = match t.kind {
            TopologyKindName::Ring => Topology::Ring { n: self.n },
            TopologyKindName::Complete => Topology::Complete { n: self.n },
            TopologyKindName::Grid => {
                let (rows, cols) = match (t.rows, t.cols) {
                    (Some(r), Some(c)) => (r, c),
                    _ => {
                        return Err(ConfigError::Validation(
                            "grid topology needs rows and cols".into(),
                        ))
                    }
                };
                if rows * cols != self.n {
                    return Err(ConfigError::Validation(format!(
                        "grid {rows}x{cols} does not match n = {}",
                        self.n
                    )));
                }
                Topology::Grid { rows, cols }
            }
            TopologyKindName::Custom => {
                let edges = t.edges.clone().ok_or_else(|| {
                    ConfigError::Validation("custom topology needs an edge list".into())
                })?;
                Topology::Custom { n: self.n, edges }
            }
        };
        Ok(topo)
    }

    pub fn problem_spec(&self) -> Result<FamilySpec, ConfigError> {
        let p = &self.problem;
        Ok(match p.family {
            ProblemFamilyName::HeteroQuadratic => FamilySpec::HeteroQuadratic {
                centers: p.centers.clone(),
                span: p.span,
            },
            ProblemFamilyName::NonconvexRegression => FamilySpec::NonconvexRegression {
                samples_per_agent: p.samples_per_agent.ok_or_else(|| {
                    ConfigError::Validation("nonconvex_regression needs samples_per_agent".into())
                })?,
                lambda: p.lambda.unwrap_or(0.1),
                classes: p.classes.unwrap_or(10),
                noise: p.data_noise.unwrap_or(0.0),
            },
            ProblemFamilyName::Logistic => FamilySpec::Logistic {
                samples_per_agent: p.samples_per_agent.unwrap_or(0),
                classes: p.classes.unwrap_or(10),
                csv_path: p.csv_path.clone(),
            },
        })
    }

    pub fn heterogeneity_mode(&self) -> Result<HeterogeneityMode, ConfigError> {
        Ok(match self.problem.heterogeneity.mode {
            HeterogeneityModeName::IidShuffle => HeterogeneityMode::IidShuffle,
            HeterogeneityModeName::LabelPartition => HeterogeneityMode::LabelPartition {
                classes_per_agent: self.problem.heterogeneity.classes_per_agent.ok_or_else(
                    || {
                        ConfigError::Validation(
                            "label_partition needs classes_per_agent".into(),
                        )
                    },
                )?,
            },
        })
    }

    pub fn oracle_spec(&self) -> Result<GradientOracle, ConfigError> {
        let o = &self.oracle;
        if o.sigma < 0.0 {
            return Err(ConfigError::Validation("sigma must be >= 0".into()));
        }
        let noise_model = match o.noise_model {
            NoiseModelName::GaussianAdditive => NoiseModel::GaussianAdditive,
            NoiseModelName::Minibatch => NoiseModel::Minibatch {
                batch_size: o.batch_size.ok_or_else(|| {
                    ConfigError::Validation("minibatch oracle needs batch_size".into())
                })?,
            },
        };
        Ok(GradientOracle {
            noise_sigma: o.sigma,
            noise_model,
            clip_b_inf: o.clip_b_inf,
        })
    }

    fn resolve_compressor(
        &self,
        section: &Option<CompressorSection>,
    ) -> Result<CompressorSpec, ConfigError> {
        let Some(s) = section else {
            return Ok(CompressorSpec::identity());
        };
        let sparsity = || -> Result<Sparsity, ConfigError> {
            match (s.k, s.ratio) {
                (Some(k), None) => Ok(Sparsity::Count(k)),
                (None, Some(r)) => Ok(Sparsity::Ratio(r)),
                _ => Err(ConfigError::Validation(
                    "sparsifier needs exactly one of k or ratio".into(),
                )),
            }
        };
        let kind = match s.kind {
            CompressorKindName::Identity => CompressorKind::Identity,
            CompressorKindName::TopK => CompressorKind::TopK(sparsity()?),
            CompressorKindName::RandomK => CompressorKind::RandomK(sparsity()?),
            CompressorKindName::QsgdRescaled => CompressorKind::QsgdRescaled {
                levels: s.s.ok_or_else(|| {
                    ConfigError::Validation("qsgd_rescaled needs s (levels)".into())
                })?,
            },
            CompressorKindName::Gossip => CompressorKind::Gossip {
                prob: s
                    .p
                    .ok_or_else(|| ConfigError::Validation("gossip needs p".into()))?,
            },
        };
        Ok(CompressorSpec { kind })
    }

    /// The model-channel compressor.
    pub fn compressor_x_spec(&self) -> Result<CompressorSpec, ConfigError> {
        if self.compressor_x.is_some() {
            self.resolve_compressor(&self.compressor_x)
        } else {
            self.resolve_compressor(&self.compressor)
        }
    }

    /// The gradient-channel compressor (DaSHCo only).
    pub fn compressor_g_spec(&self) -> Result<CompressorSpec, ConfigError> {
        if self.compressor_g.is_some() {
            self.resolve_compressor(&self.compressor_g)
        } else {
            self.resolve_compressor(&self.compressor)
        }
    }

    /// Assemble the schedule derivation, filling unspecified constants from
    /// the instantiated problem (`l`, `sigma`) and topology (`rho_hat`).
    pub fn derivation(
        &self,
        l: f64,
        rho: f64,
        eta_sq_x: f64,
        eta_sq_g: f64,
    ) -> Result<Derivation, ConfigError> {
        let s = &self.schedule;
        let beta1 = s.beta1.unwrap_or(0.9);
        let missing = |what: &str| ConfigError::Validation(format!("schedule needs {what}"));
        Ok(match s.derivation {
            DerivationName::Manual => match self.method {
                Method::Damsco => Derivation::Manual(Schedule::Damsco(DamscoParams {
                    alpha: s.alpha.ok_or_else(|| missing("alpha"))?,
                    beta1,
                    beta2: s.beta2.unwrap_or(0.999),
                    delta: s.delta.unwrap_or(1e-8),
                    gamma: s.gamma.unwrap_or(1.0),
                })),
                Method::Dashco => Derivation::Manual(Schedule::Dashco(DashcoParams {
                    alpha: s.alpha.ok_or_else(|| missing("alpha"))?,
                    beta1,
                    gamma_x: s.gamma_x.or(s.gamma).unwrap_or(1.0),
                    gamma_g: s.gamma_g.or(s.gamma).unwrap_or(1.0),
                })),
            },
            DerivationName::Theorem1 => Derivation::Theorem1 {
                l: s.l.unwrap_or(l),
                b_inf: s.b_inf.ok_or_else(|| missing("b_inf"))?,
                delta: s.delta.ok_or_else(|| missing("delta"))?,
                eta_sq: eta_sq_x,
                rho_hat: rho,
                beta1,
                beta2: s.beta2.unwrap_or(0.999),
            },
            DerivationName::Theorem2CaseI => Derivation::Theorem2CaseI {
                theta: s.theta.ok_or_else(|| missing("theta"))?,
                omega: s.omega.ok_or_else(|| missing("omega"))?,
                l: s.l.unwrap_or(l),
                b_inf: s.b_inf.ok_or_else(|| missing("b_inf"))?,
                eta_sq: eta_sq_x,
                rho_hat: rho,
                n: self.n,
                t: self.t,
                beta1,
            },
            DerivationName::Theorem2CaseIi => Derivation::Theorem2CaseII {
                theta: s.theta.ok_or_else(|| missing("theta"))?,
                delta: s.delta.ok_or_else(|| missing("delta"))?,
                l: s.l.unwrap_or(l),
                b_inf: s.b_inf.ok_or_else(|| missing("b_inf"))?,
                eta_sq: eta_sq_x,
                rho_hat: rho,
                n: self.n,
                t: self.t,
                beta1,
            },
            DerivationName::Theorem4 => Derivation::Theorem4 {
                theta1: s.theta1.ok_or_else(|| missing("theta1"))?,
                theta2: s.theta2.ok_or_else(|| missing("theta2"))?,
                theta3: s.theta3.ok_or_else(|| missing("theta3"))?,
                sigma: s.sigma.unwrap_or(self.oracle.sigma),
                l: s.l.unwrap_or(l),
                eta_sq: eta_sq_x.max(eta_sq_g),
                rho_hat_x: rho,
                rho_hat_g: rho,
                n: self.n,
                t: self.t,
                beta1,
            },
        })
    }
}
