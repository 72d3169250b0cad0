//! Sequential price competition under generalized-linear demand.
//!
//! `N` sellers repeatedly post prices for a shared market. Seller `i`'s
//! expected demand is `mu_i(<theta_i, p>)` with a known increasing link
//! `mu_i` and an unknown parameter vector `theta_i`; each seller observes
//! rivals' prices but only their own demand. The library provides:
//!
//! - the market model and demand sampling ([`market`], [`link`]);
//! - ground-truth best responses, the Nash equilibrium, and
//!   dynamic-benchmark regret ([`oracle`]);
//! - a learner that pairs a penalized maximum-likelihood estimator with
//!   an upper-confidence pricing rule ([`estimator`], [`policy`]);
//! - a deterministic round-loop simulator with trajectory metrics
//!   ([`sim`]);
//! - numerical checks of the supporting inequalities ([`lemmas`]).

pub mod error;
pub mod estimator;
pub mod lemmas;
pub mod link;
pub mod market;
pub mod oracle;
pub mod policy;
pub mod sim;

pub use error::{Error, Result};
pub use link::{LinkFunction, LinkKind};
pub use market::{
    eval_mean_demand, index_bounds, sample_demand, validate_market, MarketConfig, NoiseMode,
    ParamSpace, PriceBox, SellerInput, SellerSpec, ValidationReport,
};
pub use oracle::{MarketOracle, NashResult};
pub use sim::{
    compute_metrics, config_digest, run_episode, DeltaRule, InitialPrices, Metrics, PolicyConfig,
    Trajectory,
};
