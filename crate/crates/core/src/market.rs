//! Market specification: price boxes, parameter spaces, sellers and demand.
//!
//! A market is `N` sellers, each with a true parameter vector
//! `theta_i = (-beta_i, gamma_i)` (own-price sensitivity in slot `i`,
//! cross sensitivities elsewhere), a known link, and a price interval.
//! Expected demand is `mu_i(<theta_i, p>)`. Everything here is immutable
//! once built; demand draws take an explicit RNG.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::link::{LinkFunction, LinkKind};

/// Per-seller price intervals `[lo_i, hi_i]` with `0 <= lo_i < hi_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl PriceBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: lo.len().max(1),
                got: hi.len(),
            });
        }
        for (&a, &b) in lo.iter().zip(&hi) {
            if !(a.is_finite() && b.is_finite()) || a < 0.0 || a >= b {
                return Err(Error::InvalidInterval { lo: a, hi: b });
            }
        }
        Ok(PriceBox { lo, hi })
    }

    /// Uniform box `[lo, hi]^n`.
    pub fn uniform(n: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; n], vec![hi; n])
    }

    pub fn n(&self) -> usize {
        self.lo.len()
    }

    pub fn interval(&self, seller: usize) -> (f64, f64) {
        (self.lo[seller], self.hi[seller])
    }

    /// `B_p = sqrt(sum_i hi_i^2)`, the joint price-norm bound.
    pub fn price_norm_bound(&self) -> f64 {
        self.hi.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Smallest lower bound across sellers; positive boxes enable the
    /// per-coordinate design-diagonal bound.
    pub fn min_price(&self) -> f64 {
        self.lo.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Largest upper bound across sellers.
    pub fn max_price(&self) -> f64 {
        self.hi.iter().cloned().fold(0.0, f64::max)
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.n()
            && p.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(&x, (&a, &b))| x >= a && x <= b)
    }

    pub fn check_contains(&self, seller: usize, p: &[f64]) -> Result<()> {
        if p.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                got: p.len(),
            });
        }
        for (j, &x) in p.iter().enumerate() {
            if x < self.lo[j] || x > self.hi[j] {
                return Err(Error::PriceOutOfBox {
                    seller,
                    price: x,
                    lo: self.lo[j],
                    hi: self.hi[j],
                });
            }
        }
        Ok(())
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(&a, &b)| 0.5 * (a + b))
            .collect()
    }

    pub fn clamp(&self, seller: usize, price: f64) -> f64 {
        price.clamp(self.lo[seller], self.hi[seller])
    }
}

/// Admissible parameter set for one seller: own-price bounds
/// `0 < beta_lo <= beta <= beta_hi` and an axis-aligned box for the
/// cross sensitivities (rivals in increasing index order).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpace {
    beta_lo: f64,
    beta_hi: f64,
    gamma_lo: Vec<f64>,
    gamma_hi: Vec<f64>,
}

impl ParamSpace {
    pub fn new(beta_lo: f64, beta_hi: f64, gamma_lo: Vec<f64>, gamma_hi: Vec<f64>) -> Result<Self> {
        if !(beta_lo > 0.0 && beta_lo <= beta_hi && beta_hi.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "own-price bounds need 0 < beta_lo <= beta_hi, got [{beta_lo}, {beta_hi}]"
            )));
        }
        if gamma_lo.len() != gamma_hi.len() {
            return Err(Error::DimensionMismatch {
                expected: gamma_lo.len(),
                got: gamma_hi.len(),
            });
        }
        for (&a, &b) in gamma_lo.iter().zip(&gamma_hi) {
            if !(a.is_finite() && b.is_finite()) || a > b {
                return Err(Error::InvalidInterval { lo: a, hi: b });
            }
        }
        Ok(ParamSpace {
            beta_lo,
            beta_hi,
            gamma_lo,
            gamma_hi,
        })
    }

    pub fn beta_bounds(&self) -> (f64, f64) {
        (self.beta_lo, self.beta_hi)
    }

    pub fn gamma_bounds(&self) -> (&[f64], &[f64]) {
        (&self.gamma_lo, &self.gamma_hi)
    }

    /// Number of sellers this space is sized for.
    pub fn n(&self) -> usize {
        self.gamma_lo.len() + 1
    }

    /// Tight Euclidean ball radius over the box, from its corners.
    pub fn ball_radius(&self) -> f64 {
        let mut s = self.beta_hi * self.beta_hi;
        for (&a, &b) in self.gamma_lo.iter().zip(&self.gamma_hi) {
            s += (a * a).max(b * b);
        }
        s.sqrt()
    }

    /// Full theta box for a seller in slot `own`: coordinate `own` spans
    /// `[-beta_hi, -beta_lo]`, the others take the gamma box in order.
    pub fn theta_box(&self, own: usize) -> (Vec<f64>, Vec<f64>) {
        let n = self.n();
        let mut lo = Vec::with_capacity(n);
        let mut hi = Vec::with_capacity(n);
        let mut g = 0;
        for j in 0..n {
            if j == own {
                lo.push(-self.beta_hi);
                hi.push(-self.beta_lo);
            } else {
                lo.push(self.gamma_lo[g]);
                hi.push(self.gamma_hi[g]);
                g += 1;
            }
        }
        (lo, hi)
    }

    pub fn contains(&self, own: usize, theta: &[f64]) -> bool {
        let (lo, hi) = self.theta_box(own);
        theta.len() == lo.len()
            && theta
                .iter()
                .zip(lo.iter().zip(&hi))
                .all(|(&x, (&a, &b))| x >= a && x <= b)
    }
}

/// Exact index range `U_i = [u_min, u_max]` of `<theta, p>` over
/// `theta_box x price_box`, computed coordinatewise from interval corners.
pub fn index_bounds(space: &ParamSpace, own: usize, prices: &PriceBox) -> Result<(f64, f64)> {
    if space.n() != prices.n() {
        return Err(Error::DimensionMismatch {
            expected: prices.n(),
            got: space.n(),
        });
    }
    let (tlo, thi) = space.theta_box(own);
    let mut u_min = 0.0;
    let mut u_max = 0.0;
    for j in 0..prices.n() {
        let (plo, phi) = prices.interval(j);
        let corners = [tlo[j] * plo, tlo[j] * phi, thi[j] * plo, thi[j] * phi];
        u_min += corners.iter().cloned().fold(f64::INFINITY, f64::min);
        u_max += corners.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    }
    Ok((u_min, u_max))
}

/// One seller's ground truth.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SellerSpec {
    index: usize,
    theta0: Vec<f64>,
    link: LinkFunction,
    params: ParamSpace,
    prices: PriceBox,
}

impl SellerSpec {
    pub fn new(
        index: usize,
        beta0: f64,
        gamma0: &[f64],
        link_kind: LinkKind,
        params: ParamSpace,
        prices: PriceBox,
    ) -> Result<Self> {
        let n = prices.n();
        if params.n() != n || gamma0.len() != n - 1 || index >= n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: gamma0.len() + 1,
            });
        }
        let mut theta0 = Vec::with_capacity(n);
        let mut g = 0;
        for j in 0..n {
            if j == index {
                theta0.push(-beta0);
            } else {
                theta0.push(gamma0[g]);
                g += 1;
            }
        }
        if !params.contains(index, &theta0) {
            return Err(Error::InvalidConfig(format!(
                "true parameters of seller {index} fall outside the admissible box"
            )));
        }
        let norm: f64 = theta0.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > params.ball_radius() + 1e-12 {
            return Err(Error::InvalidConfig(format!(
                "||theta_0|| = {norm} exceeds the ball radius for seller {index}"
            )));
        }
        let interval = index_bounds(&params, index, &prices)?;
        let link = LinkFunction::new(link_kind, interval)?;
        Ok(SellerSpec {
            index,
            theta0,
            link,
            params,
            prices,
        })
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn theta0(&self) -> &[f64] {
        &self.theta0
    }

    /// Own-price sensitivity `beta_0 = -theta0[i] > 0`.
    pub fn beta0(&self) -> f64 {
        -self.theta0[self.index]
    }

    /// Cross sensitivities, rivals in increasing index order.
    pub fn gamma0(&self) -> Vec<f64> {
        let mut g = Vec::with_capacity(self.theta0.len() - 1);
        for (j, &v) in self.theta0.iter().enumerate() {
            if j != self.index {
                g.push(v);
            }
        }
        g
    }

    pub fn link(&self) -> &LinkFunction {
        &self.link
    }

    pub fn params(&self) -> &ParamSpace {
        &self.params
    }

    pub fn prices(&self) -> &PriceBox {
        &self.prices
    }

    pub fn ball_radius(&self) -> f64 {
        self.params.ball_radius()
    }

    fn index_value(&self, p: &[f64]) -> f64 {
        self.theta0.iter().zip(p).map(|(t, x)| t * x).sum()
    }
}

/// Expected demand `mu_i(<theta_0, p>)`; rejects prices outside the box
/// because the link bounds are only certified there.
pub fn eval_mean_demand(spec: &SellerSpec, p: &[f64]) -> Result<f64> {
    spec.prices.check_contains(spec.index, p)?;
    Ok(spec.link.mu(spec.index_value(p)))
}

/// One demand draw for a single seller (independent-noise path).
///
/// Identity-offset links draw Gaussian noise with unit variance; logistic
/// links draw a Bernoulli outcome. Correlated Gaussian draws are handled
/// jointly by the simulator.
pub fn sample_demand<R: Rng + ?Sized>(spec: &SellerSpec, p: &[f64], rng: &mut R) -> Result<f64> {
    let mean = eval_mean_demand(spec, p)?;
    Ok(match spec.link.kind() {
        LinkKind::IdentityOffset { .. } => {
            let z: f64 = rng.sample(StandardNormal);
            mean + z
        }
        LinkKind::Logistic => {
            if rng.gen::<f64>() < mean {
                1.0
            } else {
                0.0
            }
        }
    })
}

/// How demand noise is drawn within a round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NoiseMode {
    /// Each seller's demand is drawn independently given the prices.
    Independent,
    /// Gaussian noise with a fixed covariance across sellers, drawn
    /// jointly per round. Identity-offset links only.
    GaussianCorrelated { covariance: Vec<Vec<f64>> },
}

/// Full market: sellers, horizon, noise mode and base seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarketConfig {
    sellers: Vec<SellerSpec>,
    horizon: usize,
    noise: NoiseMode,
    seed: u64,
}

impl MarketConfig {
    pub fn new(
        prices: PriceBox,
        sellers: Vec<SellerInput>,
        horizon: usize,
        noise: NoiseMode,
        seed: u64,
    ) -> Result<Self> {
        let n = prices.n();
        if sellers.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: sellers.len(),
            });
        }
        let specs = sellers
            .into_iter()
            .enumerate()
            .map(|(i, s)| {
                SellerSpec::new(i, s.beta0, &s.gamma0, s.link, s.params, prices.clone())
            })
            .collect::<Result<Vec<_>>>()?;
        if let NoiseMode::GaussianCorrelated { covariance } = &noise {
            if covariance.len() != n || covariance.iter().any(|row| row.len() != n) {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: covariance.len(),
                });
            }
            for spec in &specs {
                if !matches!(spec.link.kind(), LinkKind::IdentityOffset { .. }) {
                    return Err(Error::InvalidConfig(
                        "correlated noise requires identity-offset links for every seller".into(),
                    ));
                }
            }
            let m = DMatrix::from_fn(n, n, |r, c| covariance[r][c]);
            if (&m - m.transpose()).abs().max() > 1e-10 {
                return Err(Error::InvalidConfig("covariance must be symmetric".into()));
            }
            if nalgebra::Cholesky::new(m).is_none() {
                return Err(Error::InvalidConfig(
                    "covariance must be positive definite".into(),
                ));
            }
        }
        Ok(MarketConfig {
            sellers: specs,
            horizon,
            noise,
            seed,
        })
    }

    pub fn n(&self) -> usize {
        self.sellers.len()
    }

    pub fn sellers(&self) -> &[SellerSpec] {
        &self.sellers
    }

    pub fn seller(&self, i: usize) -> &SellerSpec {
        &self.sellers[i]
    }

    pub fn prices(&self) -> &PriceBox {
        self.sellers[0].prices()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn noise(&self) -> &NoiseMode {
        &self.noise
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Raw per-seller inputs consumed by [`MarketConfig::new`].
#[derive(Debug, Clone)]
pub struct SellerInput {
    pub beta0: f64,
    pub gamma0: Vec<f64>,
    pub link: LinkKind,
    pub params: ParamSpace,
}

/// Evidence gathered by [`validate_market`] for one seller.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SellerCheck {
    pub index_interval: (f64, f64),
    pub mu_prime_min: f64,
    pub mu_prime_max: f64,
    /// Grid minimum of `-d2 rev / dp_i^2`; positive certifies strong
    /// concavity of own revenue at the configured grid density.
    pub xi_hat: f64,
    pub min_mean_demand: f64,
    pub smoothness_ok: bool,
    pub concavity_ok: bool,
    pub demand_nonneg_ok: bool,
}

/// Model-assumption report. Failures never abort construction; runners
/// decide whether to proceed.
///
/// Assumption ids used in messages and docs:
/// A1 bounded prices, A2 bounded parameter space, A3 link smoothness,
/// A4 strong concavity of own revenue, A5 best-response contraction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub sellers: Vec<SellerCheck>,
    /// `L_Gamma = max_i ||gamma_i||_1 / beta_i`; `< 1` gives a unique
    /// equilibrium (A5).
    pub l_gamma: f64,
    pub contraction_ok: bool,
}

impl ValidationReport {
    pub fn all_ok(&self) -> bool {
        self.contraction_ok
            && self
                .sellers
                .iter()
                .all(|s| s.smoothness_ok && s.concavity_ok && s.demand_nonneg_ok)
    }

    /// Human-readable failure list, empty when everything passed.
    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.contraction_ok {
            out.push(format!(
                "A5 (best-response contraction): L_Gamma = {:.6} >= 1, no unique equilibrium",
                self.l_gamma
            ));
        }
        for (i, s) in self.sellers.iter().enumerate() {
            if !s.smoothness_ok {
                out.push(format!(
                    "A3 (link smoothness) fails for seller {i}: mu' in [{:.3e}, {:.3e}]",
                    s.mu_prime_min, s.mu_prime_max
                ));
            }
            if !s.concavity_ok {
                out.push(format!(
                    "A4 (strong concavity) fails for seller {i}: xi_hat = {:.3e}",
                    s.xi_hat
                ));
            }
            if !s.demand_nonneg_ok {
                out.push(format!(
                    "demand nonnegativity fails for seller {i}: min mean demand = {:.3e}",
                    s.min_mean_demand
                ));
            }
        }
        out
    }
}

/// Checks the model assumptions on a grid of the given density.
///
/// The concavity evidence scans `(p_i, u)` pairs rather than the full
/// `N`-dimensional price box: own revenue curvature depends on rival
/// prices only through the index `u`, whose range for a fixed own price
/// is an interval, so the scan loses nothing but grid resolution.
pub fn validate_market(config: &MarketConfig, grid_density: usize) -> ValidationReport {
    let g = grid_density.max(2);
    let mut sellers = Vec::with_capacity(config.n());
    let mut l_gamma: f64 = 0.0;

    for spec in config.sellers() {
        let beta = spec.beta0();
        let gamma_l1: f64 = spec.gamma0().iter().map(|x| x.abs()).sum();
        l_gamma = l_gamma.max(gamma_l1 / beta);

        let link = spec.link();
        let (u_lo, u_hi) = link.interval();
        let mut mu_prime_min = f64::INFINITY;
        let mut mu_prime_max = f64::NEG_INFINITY;
        for k in 0..g {
            let s = k as f64 / (g - 1) as f64;
            let u = u_lo * (1.0 - s) + u_hi * s;
            let d = link.mu_prime(u);
            mu_prime_min = mu_prime_min.min(d);
            mu_prime_max = mu_prime_max.max(d);
        }
        let smoothness_ok = mu_prime_min >= link.c_mu() - 1e-12
            && mu_prime_max <= link.l_mu() + 1e-12
            && mu_prime_min > 0.0;

        // rival-index range per own price, from the true cross terms
        let gamma0 = spec.gamma0();
        let mut cross_lo = 0.0;
        let mut cross_hi = 0.0;
        let mut r = 0;
        for j in 0..config.n() {
            if j == spec.index() {
                continue;
            }
            let (plo, phi) = spec.prices().interval(j);
            let (a, b) = (gamma0[r] * plo, gamma0[r] * phi);
            cross_lo += a.min(b);
            cross_hi += a.max(b);
            r += 1;
        }

        let (plo, phi) = spec.prices().interval(spec.index());
        let mut xi_hat = f64::INFINITY;
        let mut min_mean = f64::INFINITY;
        for a in 0..g {
            let sa = a as f64 / (g - 1) as f64;
            let p_i = plo * (1.0 - sa) + phi * sa;
            let u_min = -beta * p_i + cross_lo;
            let u_max = -beta * p_i + cross_hi;
            for b in 0..g {
                let sb = b as f64 / (g - 1) as f64;
                let u = u_min * (1.0 - sb) + u_max * sb;
                // -d2(p mu(u))/dp^2 = 2 beta mu'(u) - beta^2 p mu''(u)
                let neg_curv = 2.0 * beta * link.mu_prime(u) - beta * beta * p_i * link.mu_second(u);
                xi_hat = xi_hat.min(neg_curv);
                min_mean = min_mean.min(link.mu(u));
            }
        }

        sellers.push(SellerCheck {
            index_interval: (u_lo, u_hi),
            mu_prime_min,
            mu_prime_max,
            xi_hat,
            min_mean_demand: min_mean,
            smoothness_ok,
            concavity_ok: xi_hat > 0.0,
            demand_nonneg_ok: min_mean >= -1e-12,
        });
    }

    ValidationReport {
        sellers,
        l_gamma,
        contraction_ok: l_gamma < 1.0,
    }
}
