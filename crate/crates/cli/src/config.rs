//! Experiment configuration: a flat TOML file with one `[[seller]]`
//! section per seller plus global sections. Unknown keys are rejected.
//!
//! ```toml
//! [market]
//! rounds = 500
//! noise = "independent"
//! seed = 1
//!
//! [policy]
//! lambda = 1.0
//! delta_exponent = 2.0
//! grid_points = 1001
//!
//! [experiment]
//! seeds = [1, 2, 3]
//! t_ladder = [500, 1000, 2000, 4000]
//!
//! [[seller]]
//! link = "identity-offset"
//! alpha = 1.0
//! beta = 1.0
//! gamma = [0.3]
//! price_min = 0.0
//! price_max = 1.0
//! beta_min = 0.5
//! beta_max = 1.0
//! gamma_min = [0.0]
//! gamma_max = [0.5]
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use glmarket::sim::{DeltaRule, InitialPrices, PolicyConfig};
use glmarket::{LinkKind, MarketConfig, NoiseMode, ParamSpace, PriceBox, SellerInput};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub market: MarketSection,
    #[serde(default)]
    pub policy: PolicySection,
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub lemmas: LemmaSection,
    pub seller: Vec<SellerSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketSection {
    /// Learning rounds after the initialization round.
    pub rounds: usize,
    #[serde(default = "default_noise")]
    pub noise: NoiseKind,
    /// Demand-noise covariance; required for `gaussian-correlated`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance: Option<Vec<Vec<f64>>>,
    pub seed: u64,
    #[serde(default = "default_initial_prices")]
    pub initial_prices: InitKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NoiseKind {
    #[serde(rename = "independent")]
    Independent,
    #[serde(rename = "gaussian-correlated")]
    GaussianCorrelated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InitKind {
    #[serde(rename = "midpoint")]
    Midpoint,
    #[serde(rename = "uniform-random")]
    UniformRandom,
}

fn default_noise() -> NoiseKind {
    NoiseKind::Independent
}

fn default_initial_prices() -> InitKind {
    InitKind::Midpoint
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySection {
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// `delta = 1 / T^delta_exponent`; must exceed one.
    #[serde(default = "default_delta_exponent")]
    pub delta_exponent: f64,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default = "default_br_tol")]
    pub br_tol: f64,
}

impl Default for PolicySection {
    fn default() -> Self {
        PolicySection {
            lambda: default_lambda(),
            delta_exponent: default_delta_exponent(),
            grid_points: default_grid_points(),
            br_tol: default_br_tol(),
        }
    }
}

fn default_lambda() -> f64 {
    1.0
}
fn default_delta_exponent() -> f64 {
    2.0
}
fn default_grid_points() -> usize {
    1001
}
fn default_br_tol() -> f64 {
    1e-10
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub seeds: Vec<u64>,
    /// Horizons for the scaling study; strictly increasing.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub t_ladder: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LemmaSection {
    #[serde(default = "default_coverage_delta")]
    pub coverage_delta: f64,
    #[serde(default = "default_coverage_runs")]
    pub coverage_runs: usize,
    /// Horizon used for the coverage episodes (kept short: the check
    /// replays full episodes).
    #[serde(default = "default_coverage_rounds")]
    pub coverage_rounds: usize,
}

impl Default for LemmaSection {
    fn default() -> Self {
        LemmaSection {
            coverage_delta: default_coverage_delta(),
            coverage_runs: default_coverage_runs(),
            coverage_rounds: default_coverage_rounds(),
        }
    }
}

fn default_coverage_delta() -> f64 {
    0.05
}
fn default_coverage_runs() -> usize {
    400
}
fn default_coverage_rounds() -> usize {
    200
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SellerSection {
    pub link: LinkName,
    /// Demand intercept; identity-offset links only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// True own-price sensitivity (positive).
    pub beta: f64,
    /// True cross sensitivities, rivals in increasing index order.
    pub gamma: Vec<f64>,
    pub price_min: f64,
    pub price_max: f64,
    pub beta_min: f64,
    pub beta_max: f64,
    pub gamma_min: Vec<f64>,
    pub gamma_max: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LinkName {
    #[serde(rename = "identity-offset")]
    IdentityOffset,
    #[serde(rename = "logistic")]
    Logistic,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("cannot read {}: {e}", path.display()))
        })?;
        let cfg: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |msg: String| Err(CliError::Config(msg));
        if self.seller.is_empty() {
            return fail("at least one [[seller]] section is required".into());
        }
        if self.experiment.seeds.is_empty() {
            return fail("experiment.seeds must not be empty".into());
        }
        if !self.experiment.t_ladder.windows(2).all(|w| w[0] < w[1]) {
            return fail("experiment.t_ladder must be strictly increasing".into());
        }
        if self.policy.delta_exponent <= 1.0 {
            return fail(format!(
                "policy.delta_exponent must exceed 1 (got {})",
                self.policy.delta_exponent
            ));
        }
        if self.policy.lambda <= 0.0 {
            return fail("policy.lambda must be positive".into());
        }
        if self.policy.grid_points < 2 {
            return fail("policy.grid_points must be at least 2".into());
        }
        match self.market.noise {
            NoiseKind::GaussianCorrelated if self.market.covariance.is_none() => {
                return fail("market.covariance is required for gaussian-correlated noise".into());
            }
            NoiseKind::Independent if self.market.covariance.is_some() => {
                return fail("market.covariance is only valid for gaussian-correlated noise".into());
            }
            _ => {}
        }
        let n = self.seller.len();
        for (i, s) in self.seller.iter().enumerate() {
            if s.gamma.len() != n - 1 || s.gamma_min.len() != n - 1 || s.gamma_max.len() != n - 1 {
                return fail(format!(
                    "seller {i}: gamma vectors must have {} entries for {n} sellers",
                    n - 1
                ));
            }
            match s.link {
                LinkName::IdentityOffset if s.alpha.is_none() => {
                    return fail(format!("seller {i}: identity-offset link requires alpha"));
                }
                LinkName::Logistic if s.alpha.is_some() => {
                    return fail(format!("seller {i}: alpha is only valid for identity-offset"));
                }
                _ => {}
            }
        }
        if !(self.lemmas.coverage_delta > 0.0 && self.lemmas.coverage_delta < 1.0) {
            return fail("lemmas.coverage_delta must lie in (0, 1)".into());
        }
        Ok(())
    }

    /// Builds the market, optionally overriding the horizon (used by the
    /// scaling ladder and the coverage check).
    pub fn market(&self, rounds_override: Option<usize>) -> Result<MarketConfig, CliError> {
        let lo: Vec<f64> = self.seller.iter().map(|s| s.price_min).collect();
        let hi: Vec<f64> = self.seller.iter().map(|s| s.price_max).collect();
        let prices = PriceBox::new(lo, hi).map_err(|e| CliError::Config(e.to_string()))?;
        let sellers = self
            .seller
            .iter()
            .map(|s| {
                let params = ParamSpace::new(
                    s.beta_min,
                    s.beta_max,
                    s.gamma_min.clone(),
                    s.gamma_max.clone(),
                )
                .map_err(|e| CliError::Config(e.to_string()))?;
                let link = match s.link {
                    LinkName::IdentityOffset => LinkKind::IdentityOffset {
                        alpha: s.alpha.unwrap_or_default(),
                    },
                    LinkName::Logistic => LinkKind::Logistic,
                };
                Ok(SellerInput {
                    beta0: s.beta,
                    gamma0: s.gamma.clone(),
                    link,
                    params,
                })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        let noise = match self.market.noise {
            NoiseKind::Independent => NoiseMode::Independent,
            NoiseKind::GaussianCorrelated => NoiseMode::GaussianCorrelated {
                covariance: self.market.covariance.clone().unwrap_or_default(),
            },
        };
        MarketConfig::new(
            prices,
            sellers,
            rounds_override.unwrap_or(self.market.rounds),
            noise,
            self.market.seed,
        )
        .map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn policy(&self) -> PolicyConfig {
        PolicyConfig {
            lambda: self.policy.lambda,
            delta: DeltaRule::HorizonPower(self.policy.delta_exponent),
            grid_points: self.policy.grid_points,
            br_tol: self.policy.br_tol,
            initial_prices: match self.market.initial_prices {
                InitKind::Midpoint => InitialPrices::Midpoint,
                InitKind::UniformRandom => InitialPrices::UniformRandom,
            },
            rho_override: None,
            pin_estimates_to_truth: false,
        }
    }

    /// Seed list for a run: the first `k` configured seeds, extended with
    /// consecutive values past the configured maximum when `k` exceeds the
    /// list length.
    pub fn seeds(&self, count: Option<usize>) -> Vec<u64> {
        let base = &self.experiment.seeds;
        match count {
            None => base.clone(),
            Some(k) if k <= base.len() => base[..k].to_vec(),
            Some(k) => {
                let mut out = base.clone();
                let mut next = base.iter().copied().max().unwrap_or(0);
                while out.len() < k {
                    next += 1;
                    out.push(next);
                }
                out
            }
        }
    }
}
