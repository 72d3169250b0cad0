//! Round-loop simulator and trajectory metrics.
//!
//! An episode runs the market for `T` rounds after an initialization
//! round 0. Within a round every seller, independently and in index
//! order: re-estimates from its own history, picks a price by UCB argmax
//! against the rivals' previous prices, observes its own demand drawn
//! jointly at the current price vector, sees the published prices, and
//! grows its design matrix. Demand values are delivered only to their
//! owning learner; prices are public.
//!
//! Episodes are deterministic functions of `(market, policy, seed)` and
//! embarrassingly parallel across seeds.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::link::LinkKind;
use crate::market::{MarketConfig, NoiseMode};
use crate::oracle::{MarketOracle, NashResult};
use crate::policy::{ConfidenceParams, SellerLearner};

/// How round-0 prices are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InitialPrices {
    /// Box midpoints (deterministic default).
    Midpoint,
    /// One uniform draw per seller from its interval.
    UniformRandom,
}

/// Failure-probability schedule for the confidence radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DeltaRule {
    Fixed(f64),
    /// `delta = T^-gamma`, clamped to at most 1/2 for tiny horizons.
    HorizonPower(f64),
}

impl DeltaRule {
    pub fn delta(&self, horizon: usize) -> f64 {
        match *self {
            DeltaRule::Fixed(d) => d,
            DeltaRule::HorizonPower(gamma) => {
                (1.0 / (horizon.max(1) as f64).powf(gamma)).min(0.5)
            }
        }
    }
}

/// Learner and experiment knobs shared by every seller.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicyConfig {
    /// Ridge weight of the penalized likelihood.
    pub lambda: f64,
    pub delta: DeltaRule,
    /// Price-grid size for the UCB argmax.
    pub grid_points: usize,
    /// Best-response solver tolerance used for regret accounting.
    pub br_tol: f64,
    pub initial_prices: InitialPrices,
    /// Diagnostics: force the bonus multiplier (0 disables exploration).
    pub rho_override: Option<f64>,
    /// Diagnostics: pin every estimate to the true parameters.
    pub pin_estimates_to_truth: bool,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            lambda: 1.0,
            delta: DeltaRule::HorizonPower(2.0),
            grid_points: 1001,
            br_tol: 1e-10,
            initial_prices: InitialPrices::Midpoint,
            rho_override: None,
            pin_estimates_to_truth: false,
        }
    }
}

/// Everything recorded about one round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub round: usize,
    pub prices: Vec<f64>,
    pub demands: Vec<f64>,
    /// Feasible estimate each seller priced with this round.
    pub estimates: Vec<Vec<f64>>,
    /// Exploration bonus at the chosen price; zero in round 0.
    pub bonuses: Vec<f64>,
    /// `||(p_i_now, rivals_prev)||` in the pre-round inverse design
    /// geometry; zero in round 0. Summing these gives the exploration
    /// potential of the trajectory.
    pub context_norms: Vec<f64>,
    pub inst_regret: Vec<f64>,
}

/// A full episode plus derived curves.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Digest of the generating configuration (market, policy).
    pub config_digest: u64,
    pub seed: u64,
    /// Records for rounds `0..=T`.
    pub rounds: Vec<RoundRecord>,
    pub nash: NashResult,
    /// Per-seller cumulative regret, aligned with `rounds` (round 0 is 0).
    pub cum_regret: Vec<Vec<f64>>,
    /// `||p_t - p*||_2^2` per round.
    pub nash_dist_sq: Vec<f64>,
    /// Running sum of all context norms up to each round.
    pub potential_running: Vec<f64>,
}

impl Trajectory {
    pub fn n(&self) -> usize {
        self.rounds[0].prices.len()
    }

    pub fn horizon(&self) -> usize {
        self.rounds.len() - 1
    }

    /// Total regret per seller over rounds `1..=T`.
    pub fn total_regret(&self) -> Vec<f64> {
        self.cum_regret.iter().map(|c| *c.last().unwrap()).collect()
    }

    /// `sum_{t=1..T} ||p_t - p*||_2^2`.
    pub fn nash_dist_sum(&self) -> f64 {
        self.nash_dist_sq.iter().skip(1).sum()
    }

    /// Final value of the exploration potential `K(T)`.
    pub fn potential(&self) -> f64 {
        *self.potential_running.last().unwrap()
    }
}

/// Aggregate per-trajectory metrics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Metrics {
    pub regret_total: Vec<f64>,
    pub nash_dist_sum: f64,
    pub potential: f64,
    /// Reference envelope for the potential:
    /// `N / sqrt(lambda) + N sqrt(lambda + T) + N^1.5 sqrt(T log(T / (N lambda) + 1))`.
    pub potential_envelope: f64,
    pub terminal_nash_dist: f64,
}

/// Aggregates the derived curves of a finished trajectory.
pub fn compute_metrics(traj: &Trajectory, lambda: f64) -> Metrics {
    let n = traj.n() as f64;
    let t = traj.horizon() as f64;
    let envelope = n / lambda.sqrt()
        + n * (lambda + t).sqrt()
        + n.powf(1.5) * (t * (t / (n * lambda) + 1.0).ln()).sqrt();
    let terminal = traj
        .rounds
        .last()
        .unwrap()
        .prices
        .iter()
        .zip(&traj.nash.prices)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Metrics {
        regret_total: traj.total_regret(),
        nash_dist_sum: traj.nash_dist_sum(),
        potential: traj.potential(),
        potential_envelope: envelope,
        terminal_nash_dist: terminal,
    }
}

/// In-flight episode: learners, public price board and bookkeeping.
pub struct EpisodeState {
    market: MarketConfig,
    policy: PolicyConfig,
    oracle: MarketOracle,
    learners: Vec<SellerLearner>,
    chol: Option<DMatrix<f64>>,
    prev_prices: Vec<f64>,
    round: usize,
    records: Vec<RoundRecord>,
}

impl EpisodeState {
    /// Runs round 0: initial prices, first demand draw, design seeding.
    pub fn new(
        market: &MarketConfig,
        policy: &PolicyConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if policy.lambda <= 0.0 {
            return Err(Error::InvalidConfig("lambda must be positive".into()));
        }
        if policy.grid_points < 2 {
            return Err(Error::InvalidConfig(
                "price grid needs at least two points".into(),
            ));
        }
        let n = market.n();
        let horizon = market.horizon();
        let delta = policy.delta.delta(horizon);
        let b_p = market.prices().price_norm_bound();

        let chol = match market.noise() {
            NoiseMode::GaussianCorrelated { covariance } => {
                let m = DMatrix::from_fn(n, n, |r, c| covariance[r][c]);
                let ch = nalgebra::Cholesky::new(m)
                    .ok_or_else(|| Error::InvalidConfig("covariance not PD".into()))?;
                Some(ch.l())
            }
            NoiseMode::Independent => None,
        };

        let mut learners = Vec::with_capacity(n);
        for spec in market.sellers() {
            let conf = ConfidenceParams {
                delta,
                horizon,
                lambda: policy.lambda,
                b_p,
                b_theta: spec.ball_radius(),
                l_mu: spec.link().l_mu(),
                c_mu: spec.link().c_mu(),
                n,
            };
            // admissible start: the parameter-box center
            let (lo, hi) = spec.params().theta_box(spec.index());
            let center: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
            let mut learner = SellerLearner::new(
                spec,
                conf,
                policy.grid_points,
                DVector::from_vec(center),
            );
            learner.set_rho_override(policy.rho_override);
            if policy.pin_estimates_to_truth {
                learner.pin_estimate(DVector::from_row_slice(spec.theta0()));
            }
            learners.push(learner);
        }

        let oracle = MarketOracle::with_tolerance(market.clone(), policy.br_tol);

        // round 0: any admissible initial prices
        let p0: Vec<f64> = match policy.initial_prices {
            InitialPrices::Midpoint => market.prices().midpoint(),
            InitialPrices::UniformRandom => (0..n)
                .map(|i| {
                    let (lo, hi) = market.prices().interval(i);
                    rng.gen_range(lo..=hi)
                })
                .collect(),
        };
        let y0 = draw_demands(market, &chol, &p0, rng)?;
        for (learner, &y) in learners.iter_mut().zip(&y0) {
            learner.observe(&p0, y);
        }
        let inst_regret = oracle.instantaneous_regret(&p0)?;
        let estimates = learners
            .iter()
            .map(|l| l.theta_tilde().iter().copied().collect())
            .collect();
        let record = RoundRecord {
            round: 0,
            prices: p0.clone(),
            demands: y0,
            estimates,
            bonuses: vec![0.0; n],
            context_norms: vec![0.0; n],
            inst_regret,
        };
        Ok(EpisodeState {
            market: market.clone(),
            policy: policy.clone(),
            oracle,
            learners,
            chol,
            prev_prices: p0,
            round: 0,
            records: vec![record],
        })
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn records(&self) -> &[RoundRecord] {
        &self.records
    }

    pub fn learners(&self) -> &[SellerLearner] {
        &self.learners
    }

    pub fn oracle(&self) -> &MarketOracle {
        &self.oracle
    }

    /// Executes one full round: estimate, price, demand draw, publish,
    /// design update. Estimator non-convergence is tolerated (the best
    /// iterate is feasible, which is all the pricing rule needs).
    pub fn step(&mut self, rng: &mut ChaCha8Rng) -> Result<&RoundRecord> {
        let n = self.market.n();
        let mut prices = vec![0.0; n];
        let mut bonuses = vec![0.0; n];
        let mut norms = vec![0.0; n];
        let mut estimates = Vec::with_capacity(n);
        for (i, learner) in self.learners.iter_mut().enumerate() {
            if !self.policy.pin_estimates_to_truth {
                learner.refresh_estimate();
            }
            let p_i = learner.choose_price(&self.prev_prices);
            let (_, _, bonus, norm) = learner.ucb_value(p_i, &self.prev_prices);
            prices[i] = p_i;
            bonuses[i] = bonus;
            norms[i] = norm;
            estimates.push(learner.theta_tilde().iter().copied().collect());
        }

        let demands = draw_demands(&self.market, &self.chol, &prices, rng)?;
        // prices become public; each learner sees only its own demand
        for (learner, &y) in self.learners.iter_mut().zip(&demands) {
            learner.observe(&prices, y);
        }
        let inst_regret = self.oracle.instantaneous_regret(&prices)?;

        self.round += 1;
        self.prev_prices = prices.clone();
        self.records.push(RoundRecord {
            round: self.round,
            prices,
            demands,
            estimates,
            bonuses,
            context_norms: norms,
            inst_regret,
        });
        Ok(self.records.last().unwrap())
    }
}

/// Joint per-round demand draw. Gaussian noise is correlated through the
/// Cholesky factor when configured; Bernoulli outcomes are independent.
fn draw_demands(
    market: &MarketConfig,
    chol: &Option<DMatrix<f64>>,
    prices: &[f64],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    let n = market.n();
    let mut means = Vec::with_capacity(n);
    for spec in market.sellers() {
        means.push(crate::market::eval_mean_demand(spec, prices)?);
    }
    let mut out = Vec::with_capacity(n);
    match chol {
        Some(l) => {
            let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let eta = l * z;
            for i in 0..n {
                out.push(means[i] + eta[i]);
            }
        }
        None => {
            for (i, spec) in market.sellers().iter().enumerate() {
                let y = match spec.link().kind() {
                    LinkKind::IdentityOffset { .. } => {
                        means[i] + rng.sample::<f64, _>(StandardNormal)
                    }
                    LinkKind::Logistic => {
                        if rng.gen::<f64>() < means[i] {
                            1.0
                        } else {
                            0.0
                        }
                    }
                };
                out.push(y);
            }
        }
    }
    Ok(out)
}

/// Runs a full episode: round 0 plus `market.horizon()` learning rounds.
pub fn run_episode(market: &MarketConfig, policy: &PolicyConfig, seed: u64) -> Result<Trajectory> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = EpisodeState::new(market, policy, &mut rng)?;
    for _ in 0..market.horizon() {
        state.step(&mut rng)?;
    }
    let nash = state.oracle.nash_equilibrium(1e-10, 200_000)?;

    let n = market.n();
    let records = state.records;
    let mut cum_regret = vec![Vec::with_capacity(records.len()); n];
    let mut nash_dist_sq = Vec::with_capacity(records.len());
    let mut potential_running = Vec::with_capacity(records.len());
    let mut pot = 0.0;
    for rec in &records {
        for (i, curve) in cum_regret.iter_mut().enumerate() {
            let prev = if rec.round == 0 { 0.0 } else { *curve.last().unwrap() };
            // round 0 precedes the benchmark window
            let add = if rec.round == 0 { 0.0 } else { rec.inst_regret[i] };
            curve.push(prev + add);
        }
        nash_dist_sq.push(
            rec.prices
                .iter()
                .zip(&nash.prices)
                .map(|(a, b)| (a - b) * (a - b))
                .sum(),
        );
        pot += rec.context_norms.iter().sum::<f64>();
        potential_running.push(pot);
    }

    Ok(Trajectory {
        config_digest: config_digest(market, policy),
        seed,
        rounds: records,
        nash,
        cum_regret,
        nash_dist_sq,
        potential_running,
    })
}

/// Dense-inversion recomputation of the exploration potential from raw
/// prices; the oracle counterpart of the maintained-inverse running sum.
pub fn replay_potential(prices: &[Vec<f64>], lambda: f64, c_mus: &[f64]) -> f64 {
    let t_max = prices.len().saturating_sub(1);
    if t_max == 0 {
        return 0.0;
    }
    let n = prices[0].len();
    let mut total = 0.0;
    for (j, &c_mu) in c_mus.iter().enumerate().take(n) {
        let mut v = DMatrix::<f64>::identity(n, n) * (lambda / c_mu);
        for t in 0..t_max {
            let p = DVector::from_row_slice(&prices[t]);
            v += &p * p.transpose();
            let mut q = prices[t].clone();
            q[j] = prices[t + 1][j];
            let qv = DVector::from_row_slice(&q);
            let sol = v
                .clone()
                .cholesky()
                .expect("design is positive definite")
                .solve(&qv);
            total += qv.dot(&sol).max(0.0).sqrt();
        }
    }
    total
}

/// Stable FNV-1a digest of the generating configuration.
pub fn config_digest(market: &MarketConfig, policy: &PolicyConfig) -> u64 {
    let mut h = Fnv::new();
    h.f64s(&[policy.lambda, policy.br_tol]);
    match policy.delta {
        DeltaRule::Fixed(d) => {
            h.u64(1);
            h.f64(d);
        }
        DeltaRule::HorizonPower(g) => {
            h.u64(2);
            h.f64(g);
        }
    }
    h.u64(policy.grid_points as u64);
    h.u64(match policy.initial_prices {
        InitialPrices::Midpoint => 0,
        InitialPrices::UniformRandom => 1,
    });
    h.u64(policy.rho_override.is_some() as u64);
    if let Some(r) = policy.rho_override {
        h.f64(r);
    }
    h.u64(policy.pin_estimates_to_truth as u64);

    h.u64(market.n() as u64);
    h.u64(market.horizon() as u64);
    h.u64(market.seed());
    for i in 0..market.n() {
        let (lo, hi) = market.prices().interval(i);
        h.f64s(&[lo, hi]);
    }
    for spec in market.sellers() {
        h.f64s(spec.theta0());
        match spec.link().kind() {
            LinkKind::IdentityOffset { alpha } => {
                h.u64(10);
                h.f64(alpha);
            }
            LinkKind::Logistic => h.u64(11),
        }
        let (blo, bhi) = spec.params().beta_bounds();
        h.f64s(&[blo, bhi]);
        let (glo, ghi) = spec.params().gamma_bounds();
        h.f64s(glo);
        h.f64s(ghi);
    }
    match market.noise() {
        NoiseMode::Independent => h.u64(0),
        NoiseMode::GaussianCorrelated { covariance } => {
            h.u64(1);
            for row in covariance {
                h.f64s(row);
            }
        }
    }
    h.finish()
}

struct Fnv(u64);

impl Fnv {
    fn new() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }
    fn byte(&mut self, b: u8) {
        self.0 ^= b as u64;
        self.0 = self.0.wrapping_mul(0x100_0000_01b3);
    }
    fn u64(&mut self, v: u64) {
        for b in v.to_le_bytes() {
            self.byte(b);
        }
    }
    fn f64(&mut self, v: f64) {
        self.u64(v.to_bits());
    }
    fn f64s(&mut self, vs: &[f64]) {
        for &v in vs {
            self.f64(v);
        }
    }
    fn finish(&self) -> u64 {
        self.0
    }
}
