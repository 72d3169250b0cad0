//! Ground-truth machinery: true revenue, best responses, the Nash
//! equilibrium and per-round regret against the dynamic benchmark.
//!
//! Best responses are found by golden-section search, which only needs
//! unimodality (granted by strong concavity of own revenue). The Nash
//! point is the fixed point of the joint best-response operator, obtained
//! by plain Picard iteration; the contraction constant
//! `L_Gamma = max_i ||gamma_i||_1 / beta_i < 1` makes that converge
//! geometrically and provides a computable error bound.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::MarketConfig;

const GOLDEN_RATIO_INV: f64 = 0.618_033_988_749_894_9; // (sqrt(5) - 1) / 2

/// Default price tolerance for one-dimensional best-response solves.
pub const DEFAULT_BR_TOL: f64 = 1e-10;

/// Ground-truth solver over a fixed market.
#[derive(Debug, Clone)]
pub struct MarketOracle {
    market: MarketConfig,
    tol_br: f64,
}

/// Outcome of the Nash fixed-point solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NashResult {
    /// Equilibrium price vector (best iterate when not converged).
    pub prices: Vec<f64>,
    pub iterations: usize,
    /// `||Gamma(p) - p||_inf` at the returned point.
    pub residual: f64,
    /// A-priori distance bound `residual / (1 - L_Gamma)`; `NaN` when the
    /// contraction constant is not below one.
    pub error_bound: f64,
    pub converged: bool,
}

impl MarketOracle {
    pub fn new(market: MarketConfig) -> Self {
        Self::with_tolerance(market, DEFAULT_BR_TOL)
    }

    pub fn with_tolerance(market: MarketConfig, tol_br: f64) -> Self {
        assert!(tol_br > 0.0, "best-response tolerance must be positive");
        MarketOracle { market, tol_br }
    }

    pub fn market(&self) -> &MarketConfig {
        &self.market
    }

    pub fn tol_br(&self) -> f64 {
        self.tol_br
    }

    /// True expected revenue `p_i * mu_i(<theta_0, p>)`.
    pub fn true_revenue(&self, seller: usize, p: &[f64]) -> Result<f64> {
        let spec = self.market.seller(seller);
        let mean = crate::market::eval_mean_demand(spec, p)?;
        Ok(p[seller] * mean)
    }

    /// Unique revenue-maximizing own price given the rivals' prices.
    ///
    /// `p` supplies the rival prices; its own entry is ignored. Errors if
    /// the numerical second difference at the optimum is positive, which
    /// signals a strong-concavity violation in the configuration.
    pub fn best_response(&self, seller: usize, p: &[f64]) -> Result<f64> {
        if p.len() != self.market.n() {
            return Err(Error::DimensionMismatch {
                expected: self.market.n(),
                got: p.len(),
            });
        }
        let spec = self.market.seller(seller);
        let link = spec.link();
        let theta = spec.theta0();
        // own revenue as a function of the own price, rivals fixed
        let cross: f64 = theta
            .iter()
            .zip(p)
            .enumerate()
            .filter(|(j, _)| *j != seller)
            .map(|(_, (t, x))| t * x)
            .sum();
        let own_slope = theta[seller];
        let rev = |x: f64| x * link.mu(own_slope * x + cross);
        // d rev / dx; strictly decreasing under strong concavity
        let drev = |x: f64| {
            let u = own_slope * x + cross;
            link.mu(u) + x * own_slope * link.mu_prime(u)
        };

        let (lo, hi) = spec.prices().interval(seller);
        // Golden-section needs only unimodality but saturates near
        // sqrt(eps) on the argument; a derivative-sign bisection inside
        // the final bracket recovers the remaining digits.
        let coarse = self.tol_br.max(1e-6);
        let (a, b) = golden_section_bracket(&rev, lo, hi, coarse);
        let best = if drev(a) <= 0.0 {
            a
        } else if drev(b) >= 0.0 {
            b
        } else {
            bisect_decreasing(&drev, a, b, self.tol_br)
        };
        let best = best.clamp(lo, hi);

        // concavity sanity check away from the boundary
        let h = ((hi - lo) * 1e-5).max(1e-9);
        if best - h > lo && best + h < hi {
            let second = rev(best + h) + rev(best - h) - 2.0 * rev(best);
            if second > 1e-9 * (1.0 + rev(best).abs()) {
                return Err(Error::ConcavityViolation {
                    seller,
                    price: best,
                    second_difference: second,
                });
            }
        }
        Ok(best)
    }

    /// Joint best-response operator `Gamma(p)`, componentwise.
    pub fn best_response_operator(&self, p: &[f64]) -> Result<Vec<f64>> {
        (0..self.market.n())
            .map(|i| self.best_response(i, p))
            .collect()
    }

    /// `L_Gamma = max_i ||gamma_i||_1 / beta_i`, exact from true parameters.
    pub fn contraction_constant(&self) -> f64 {
        self.market
            .sellers()
            .iter()
            .map(|s| s.gamma0().iter().map(|x| x.abs()).sum::<f64>() / s.beta0())
            .fold(0.0, f64::max)
    }

    /// Picard iteration `p <- Gamma(p)` from the box midpoint.
    ///
    /// Stops when the iteration residual guarantees
    /// `||p - p*||_inf <= tol`, or after `max_iter` sweeps (then the
    /// best-effort point is returned with `converged = false`).
    pub fn nash_equilibrium(&self, tol: f64, max_iter: usize) -> Result<NashResult> {
        let start = self.market.prices().midpoint();
        self.nash_equilibrium_from(&start, tol, max_iter)
    }

    /// Same iteration from an explicit start point; under contraction any
    /// start reaches the same fixed point.
    pub fn nash_equilibrium_from(
        &self,
        start: &[f64],
        tol: f64,
        max_iter: usize,
    ) -> Result<NashResult> {
        assert!(tol > 0.0, "tolerance must be positive");
        let l_gamma = self.contraction_constant();
        let contractive = l_gamma < 1.0;
        // residual threshold that certifies ||p - p*|| <= tol
        let threshold = if contractive { tol * (1.0 - l_gamma) } else { tol };

        let mut p = start.to_vec();
        let mut iterations = 0;
        let mut converged = false;
        while iterations < max_iter {
            let next = self.best_response_operator(&p)?;
            let res = sup_distance(&next, &p);
            p = next;
            iterations += 1;
            if res <= threshold {
                converged = true;
                break;
            }
        }
        // residual at the returned point
        let image = self.best_response_operator(&p)?;
        let residual = sup_distance(&image, &p);
        let error_bound = if contractive {
            residual / (1.0 - l_gamma)
        } else {
            f64::NAN
        };
        Ok(NashResult {
            prices: p,
            iterations,
            residual,
            error_bound,
            converged,
        })
    }

    /// Per-seller gap to the best response against the rivals' actual
    /// prices: `rev_i(Gamma_i(p_-i) | p_-i) - rev_i(p_i | p_-i)`.
    ///
    /// Nonnegative up to solver tolerance.
    pub fn instantaneous_regret(&self, p: &[f64]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.market.n());
        for i in 0..self.market.n() {
            let star = self.best_response(i, p)?;
            let mut q = p.to_vec();
            q[i] = star;
            let best = self.true_revenue(i, &q)?;
            let got = self.true_revenue(i, p)?;
            out.push(best - got);
        }
        Ok(out)
    }
}

fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Golden-section search on `[lo, hi]` for a unimodal maximum; returns a
/// bracket of width at most `tol` containing the maximizer. The iteration
/// count is fixed up front: `ceil(log((hi - lo) / tol) / log(1 / r))`.
fn golden_section_bracket<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    let mut a = lo;
    let mut b = hi;
    if hi - lo <= tol {
        return (a, b);
    }
    let iters = (((hi - lo) / tol).ln() / (1.0 / GOLDEN_RATIO_INV).ln()).ceil() as usize;
    let mut x1 = b - GOLDEN_RATIO_INV * (b - a);
    let mut x2 = a + GOLDEN_RATIO_INV * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..iters {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + GOLDEN_RATIO_INV * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - GOLDEN_RATIO_INV * (b - a);
            f1 = f(x1);
        }
    }
    (a, b)
}

/// Root of a decreasing function by sign bisection, to within `tol` on the
/// argument. Assumes `g(a) > 0 > g(b)`.
fn bisect_decreasing<F: Fn(f64) -> f64>(g: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    while b - a > tol {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break; // interval at floating-point resolution
        }
        if g(mid) > 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}
