//! JSON run configurations. Every schema rejects unknown keys so typos
//! fail loudly instead of silently falling back to defaults.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use qfkernels::encoding::PermutationStrategy;
use qfkernels::kernel::{median_pairwise_distance, KernelFamily, KernelSpec, PointSet};
use qfkernels::portfolio::{Conditioning, Strategy};
use qfkernels::pricing::BasketOption;
use qfkernels::timeseries::AnchorMode;

use crate::error::{config_err, CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub family: KernelFamily,
    /// Explicit length scale; omitted means the median pairwise distance
    /// of the fitted point set times `bandwidth_scale`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandwidth_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regularization: Option<f64>,
}

impl KernelConfig {
    pub fn defaulted(family: KernelFamily, scale: f64, regularization: f64) -> Self {
        KernelConfig {
            family,
            bandwidth: None,
            bandwidth_scale: Some(scale),
            regularization: Some(regularization),
        }
    }

    /// Materializes the spec, taking the bandwidth heuristic from `points`
    /// (the set the kernel system will actually be solved on).
    pub fn resolve(&self, points: &PointSet, default_reg: f64) -> Result<KernelSpec> {
        let h = match self.bandwidth {
            Some(h) => h,
            None => {
                median_pairwise_distance(points).max(1e-8) * self.bandwidth_scale.unwrap_or(1.0)
            }
        };
        KernelSpec::new(self.family, h, self.regularization.unwrap_or(default_reg))
            .map_err(config_err)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptionConfig {
    pub weights: Vec<f64>,
    pub strike: f64,
    pub maturity: f64,
    pub volatility: f64,
    #[serde(default)]
    pub rate: f64,
}

impl OptionConfig {
    pub fn build(&self) -> Result<BasketOption> {
        BasketOption::new(
            self.weights.clone(),
            self.strike,
            self.maturity,
            self.volatility,
            self.rate,
        )
        .map_err(config_err)
    }
}

/// Where stress scenarios come from: a time-series CSV (one scenario per
/// row) or a synthetic geometric-Brownian draw at the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ScenarioSource {
    Csv {
        path: PathBuf,
    },
    Gbm {
        spots: Vec<f64>,
        vols: Vec<f64>,
        #[serde(default)]
        drift: f64,
        count: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriceExtrapolateConfig {
    pub option: OptionConfig,
    pub train: ScenarioSource,
    pub test: ScenarioSource,
    pub horizon_days: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelConfig>,
    /// Drives synthetic scenario draws: train uses `seed`, test `seed + 1`.
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MatchStrategy {
    None,
    OtMmd,
    SpSmooth { budget: usize },
}

impl Default for MatchStrategy {
    fn default() -> Self {
        MatchStrategy::None
    }
}

impl MatchStrategy {
    pub fn build(&self, seed: u64) -> PermutationStrategy {
        match self {
            MatchStrategy::None => PermutationStrategy::None,
            MatchStrategy::OtMmd => PermutationStrategy::OtMmd,
            MatchStrategy::SpSmooth { budget } => PermutationStrategy::SpSmooth {
                budget: *budget,
                seed,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReverseStressConfig {
    pub option: OptionConfig,
    pub scenarios: ScenarioSource,
    pub horizon_days: u32,
    /// How PnL rows are matched to scenario rows before fitting the
    /// decoder.
    #[serde(default)]
    pub strategy: MatchStrategy,
    /// Number of sampled PnL targets in the round-trip benchmark.
    pub targets: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelConfig>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseMapConfig {
    RandomWalk,
    Returns,
    /// Fit GARCH(p, q) per asset on the input history.
    Garch { p: usize, q: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatentKindConfig {
    UniformCube,
    StandardGaussian,
    IdentityPassthrough,
}

impl Default for LatentKindConfig {
    fn default() -> Self {
        LatentKindConfig::UniformCube
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateConfig {
    /// Historical time-series CSV the generator is fitted on.
    pub input: PathBuf,
    pub noise_map: NoiseMapConfig,
    pub paths: usize,
    /// Steps per generated path.
    pub horizon: usize,
    #[serde(default = "default_anchor")]
    pub anchor: AnchorMode,
    #[serde(default)]
    pub latent: LatentKindConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelConfig>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

fn default_anchor() -> AnchorMode {
    AnchorMode::Continuation
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum StrategyConfig {
    IndexEqualWeight,
    LongShort,
    LongShortCapm {
        risk_free: f64,
    },
    LongShortConditioned {
        windows: Vec<usize>,
        draws: usize,
    },
}

impl StrategyConfig {
    pub fn build(&self) -> Strategy {
        match self {
            StrategyConfig::IndexEqualWeight => Strategy::IndexEqualWeight,
            StrategyConfig::LongShort => Strategy::LongShort,
            StrategyConfig::LongShortCapm { risk_free } => {
                Strategy::LongShortConditioned(Conditioning::Capm {
                    risk_free: *risk_free,
                })
            }
            StrategyConfig::LongShortConditioned { windows, draws } => {
                Strategy::LongShortConditioned(Conditioning::Indicators {
                    windows: windows.clone(),
                    draws: *draws,
                })
            }
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            StrategyConfig::IndexEqualWeight => "index_equal_weight",
            StrategyConfig::LongShort => "long_short",
            StrategyConfig::LongShortCapm { .. } => "long_short_capm",
            StrategyConfig::LongShortConditioned { .. } => "long_short_conditioned",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BacktestCliConfig {
    pub input: PathBuf,
    /// Rolling estimation window in steps; must leave room for at least
    /// one rebalancing step.
    pub window: usize,
    pub strategies: Vec<StrategyConfig>,
    pub risk_appetite: f64,
    #[serde(default)]
    pub cost_coeff: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub box_limit: Option<f64>,
    /// Condition on the indicator observed at the decision time itself
    /// instead of the prior step.
    #[serde(default)]
    pub same_time: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

pub fn parse<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
}
