//! The per-seller pricing rule: confidence radii, revenue UCB and grid
//! argmax over the own price interval.
//!
//! At round `t` a seller holds a feasible estimate `theta_tilde`, the
//! design `V` built from rounds `0..t-1`, and the rivals' previous price
//! vector. A candidate own price `x` scores
//!
//! ```text
//! UCB(x) = x * mu(<q, theta_tilde>) + rho * x * ||q||_{V^-1},
//! q = previous prices with the own slot replaced by x,
//! ```
//!
//! and the played price is the grid argmax. Prices are posted
//! simultaneously, so the rivals' entries in the context lag one round.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::estimator::{estimate, DesignState, EstimateBundle, History};
use crate::link::LinkFunction;
use crate::market::SellerSpec;

/// Constants entering the confidence radius.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ConfidenceParams {
    /// Failure probability, in (0, 1).
    pub delta: f64,
    /// Horizon the radius is tuned for.
    pub horizon: usize,
    /// Ridge weight.
    pub lambda: f64,
    /// Joint price-norm bound `B_p`.
    pub b_p: f64,
    /// Parameter ball radius `B_theta`.
    pub b_theta: f64,
    /// Global slope bound of the link.
    pub l_mu: f64,
    /// Slope lower bound of the link on its certified interval.
    pub c_mu: f64,
    /// Number of sellers.
    pub n: usize,
}

impl ConfidenceParams {
    /// Radius pair `(c_s, rho_s)` after `s` observations:
    ///
    /// ```text
    /// c_s   = L_mu sqrt(2 log(T / delta) + N log(1 + B_p^2 s / (N lambda)))
    /// rho_s = (2 L_mu / c_mu) (c_s + B_theta sqrt(c_mu lambda))
    /// ```
    pub fn radius(&self, s: usize) -> (f64, f64) {
        debug_assert!(self.delta > 0.0 && self.delta < 1.0);
        let t_over_delta = self.horizon.max(1) as f64 / self.delta;
        let data_term =
            self.n as f64 * (1.0 + self.b_p * self.b_p * s as f64 / (self.n as f64 * self.lambda)).ln();
        let c = self.l_mu * (2.0 * t_over_delta.ln() + data_term).sqrt();
        let rho = 2.0 * self.l_mu / self.c_mu * (c + self.b_theta * (self.c_mu * self.lambda).sqrt());
        (c, rho)
    }
}

/// One seller's learning state: history, design, current estimate and the
/// pricing knobs. Owns nothing about rivals beyond their public prices.
#[derive(Debug, Clone)]
pub struct SellerLearner {
    index: usize,
    link: LinkFunction,
    price_interval: (f64, f64),
    b_theta: f64,
    lambda: f64,
    conf: ConfidenceParams,
    grid_points: usize,
    /// Bonus multiplier override for diagnostics; `None` uses `rho_s`.
    rho_override: Option<f64>,
    history: History,
    design: DesignState,
    estimate: EstimateBundle,
    newton_warm: DVector<f64>,
    warned_nonconverged: bool,
}

impl SellerLearner {
    /// Builds a learner from the public side of a seller spec.
    ///
    /// `theta_init` stands in for the estimate until data arrives and must
    /// lie in the admissible set. The first Newton solve starts from zero;
    /// later rounds warm-start from the previous root.
    pub fn new(
        spec: &SellerSpec,
        conf: ConfidenceParams,
        grid_points: usize,
        theta_init: DVector<f64>,
    ) -> Self {
        assert!(grid_points >= 2, "price grid needs at least two points");
        let n = spec.prices().n();
        assert_eq!(theta_init.len(), n);
        let design = DesignState::new(n, conf.lambda, spec.link().c_mu());
        let estimate = EstimateBundle {
            theta_hat: theta_init.clone(),
            theta_tilde: theta_init,
            newton_iters: 0,
            score_norm_at_root: 0.0,
            newton_converged: true,
            projection_active: false,
            projection_converged: true,
        };
        SellerLearner {
            index: spec.index(),
            link: spec.link().clone(),
            price_interval: spec.prices().interval(spec.index()),
            b_theta: spec.ball_radius(),
            lambda: conf.lambda,
            conf,
            grid_points,
            rho_override: None,
            history: History::new(),
            design,
            estimate,
            newton_warm: DVector::zeros(n),
            warned_nonconverged: false,
        }
    }

    /// Forces the bonus multiplier (diagnostics: 0 disables exploration,
    /// a huge value makes the confidence event vacuous).
    pub fn set_rho_override(&mut self, rho: Option<f64>) {
        self.rho_override = rho;
    }

    /// Pins the working estimate (diagnostics against ground truth).
    pub fn pin_estimate(&mut self, theta: DVector<f64>) {
        self.estimate.theta_hat = theta.clone();
        self.estimate.theta_tilde = theta;
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn design(&self) -> &DesignState {
        &self.design
    }

    pub fn history_len(&self) -> usize {
        self.history.len()
    }

    pub fn estimate(&self) -> &EstimateBundle {
        &self.estimate
    }

    pub fn theta_tilde(&self) -> &DVector<f64> {
        &self.estimate.theta_tilde
    }

    /// Effective bonus multiplier at the current design age.
    pub fn rho(&self) -> f64 {
        match self.rho_override {
            Some(r) => r,
            None => {
                // radius index lags the design by one: at round t the
                // design holds rounds 0..t-1, i.e. t vectors, and the
                // policy uses rho^(t-1)
                let s = self.design.rounds().saturating_sub(1);
                self.conf.radius(s).1
            }
        }
    }

    /// Re-solves the penalized MLE from the warm start and projects onto
    /// the parameter ball. No-op before any data has arrived.
    ///
    /// Solver non-convergence is tolerated: the best iterate is feasible,
    /// which is all the pricing rule needs. It is reported once per
    /// learner on stderr.
    pub fn refresh_estimate(&mut self) {
        if self.history.is_empty() {
            return;
        }
        let bundle = estimate(
            &self.history,
            &self.link,
            self.lambda,
            &self.design,
            self.b_theta,
            &self.newton_warm,
        );
        if !bundle.newton_converged && !self.warned_nonconverged {
            self.warned_nonconverged = true;
            eprintln!(
                "warning: seller {} estimator stalled after round {} (score norm {:.3e}); using best iterate",
                self.index,
                self.history.len(),
                bundle.score_norm_at_root
            );
        }
        self.newton_warm = bundle.theta_hat.clone();
        self.estimate = bundle;
    }

    /// UCB pieces at a fully assembled context vector whose own slot holds
    /// the candidate price. Returns `(ucb, plug_in, bonus, context_norm)`.
    fn ucb_parts(&self, context: &[f64], rho: f64) -> (f64, f64, f64, f64) {
        let x = context[self.index];
        let index_value: f64 = context
            .iter()
            .zip(self.estimate.theta_tilde.iter())
            .map(|(a, b)| a * b)
            .sum();
        let plug_in = x * self.link.mu(index_value);
        let norm = self.design.inv_norm(context);
        let bonus = rho * x * norm;
        (plug_in + bonus, plug_in, bonus, norm)
    }

    /// Plug-in revenue, bonus and their sum at own price `x`, with the
    /// rivals' entries taken from `prev_prices`.
    ///
    /// Returns `(ucb, plug_in, bonus, context_norm)`.
    pub fn ucb_value(&self, x: f64, prev_prices: &[f64]) -> (f64, f64, f64, f64) {
        let (lo, hi) = self.price_interval;
        debug_assert!(
            x >= lo - 1e-12 && x <= hi + 1e-12,
            "candidate price {x} outside [{lo}, {hi}]"
        );
        let mut q = prev_prices.to_vec();
        q[self.index] = x;
        self.ucb_parts(&q, self.rho())
    }

    /// Grid argmax of the UCB over the own price interval; ties break
    /// toward the lowest price and the result is exactly a grid point.
    pub fn choose_price(&self, prev_prices: &[f64]) -> f64 {
        let (lo, hi) = self.price_interval;
        let g = self.grid_points;
        let rho = self.rho();
        let mut q = prev_prices.to_vec();
        let mut best_x = lo;
        let mut best_val = f64::NEG_INFINITY;
        for k in 0..g {
            let s = k as f64 / (g - 1) as f64;
            let x = (lo * (1.0 - s) + hi * s).clamp(lo, hi);
            q[self.index] = x;
            let (ucb, _, _, _) = self.ucb_parts(&q, rho);
            if ucb > best_val {
                best_val = ucb;
                best_x = x;
            }
        }
        best_x
    }

    /// Ingests the public price vector and the seller's own demand, then
    /// grows the design. This is the only way data enters a learner; rival
    /// demands have no path in.
    pub fn observe(&mut self, prices: &[f64], own_demand: f64) {
        self.history.push(prices, own_demand);
        self.design.update(prices);
        debug_assert_eq!(self.history.len(), self.design.rounds());
    }
}
