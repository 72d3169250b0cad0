//! Demand link functions from canonical exponential families.
//!
//! A link bundles the mean function `mu = b'`, its first two derivatives,
//! the log-partition `b`, and curvature bounds valid on a compact index
//! interval: `c_mu <= mu' <= L_mu`, `0 <= mu <= B`, `|mu''| <= B''`.
//! Two families are supported:
//!
//! - identity-offset, `mu(u) = alpha + u` (Gaussian observations, unit
//!   variance), with `mu' == 1` everywhere;
//! - logistic, `mu(u) = e^u / (1 + e^u)` (Bernoulli observations), with
//!   `mu' <= 1/4` everywhere.
//!
//! Both satisfy a global slope bound on all of the real line, which is what
//! the learner's confidence radii require. Exponential/Poisson links do not
//! and are intentionally not offered.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Grid density used to double-check the curvature bounds at construction.
const CURVATURE_GRID: usize = 1001;
const BOUND_SLACK: f64 = 1e-12;

/// Which exponential family the link belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LinkKind {
    /// `mu(u) = alpha + u`, Gaussian demand noise with unit variance.
    IdentityOffset { alpha: f64 },
    /// `mu(u) = e^u / (1 + e^u)`, Bernoulli demand.
    Logistic,
}

/// A mean function with certified curvature bounds on a compact interval.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinkFunction {
    kind: LinkKind,
    interval: (f64, f64),
    c_mu: f64,
    l_mu: f64,
    mean_max: f64,
    curvature_max: f64,
}

impl LinkFunction {
    /// Builds a link and computes its bounds on `interval = [u_min, u_max]`.
    ///
    /// Rejects empty or inverted intervals, and identity-offset links whose
    /// mean would go negative on the interval.
    pub fn new(kind: LinkKind, interval: (f64, f64)) -> Result<Self> {
        let (lo, hi) = interval;
        if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
            return Err(Error::InvalidInterval { lo, hi });
        }
        let link = match kind {
            LinkKind::IdentityOffset { alpha } => {
                if alpha + lo < 0.0 {
                    return Err(Error::NegativeMean { alpha, u_min: lo });
                }
                LinkFunction {
                    kind,
                    interval,
                    c_mu: 1.0,
                    l_mu: 1.0,
                    mean_max: alpha + hi,
                    curvature_max: 0.0,
                }
            }
            LinkKind::Logistic => {
                // mu' is unimodal with peak at 0, so its minimum over an
                // interval sits at an endpoint.
                let c_mu = logistic_prime(lo).min(logistic_prime(hi));
                LinkFunction {
                    kind,
                    interval,
                    c_mu,
                    l_mu: 0.25,
                    mean_max: logistic(hi),
                    curvature_max: logistic_curvature_max(lo, hi),
                }
            }
        };
        link.verify_bounds_on_grid(CURVATURE_GRID)?;
        Ok(link)
    }

    pub fn identity_offset(alpha: f64, interval: (f64, f64)) -> Result<Self> {
        Self::new(LinkKind::IdentityOffset { alpha }, interval)
    }

    pub fn logistic(interval: (f64, f64)) -> Result<Self> {
        Self::new(LinkKind::Logistic, interval)
    }

    /// Mean demand `mu(u)`.
    pub fn mu(&self, u: f64) -> f64 {
        match self.kind {
            LinkKind::IdentityOffset { alpha } => alpha + u,
            LinkKind::Logistic => logistic(u),
        }
    }

    /// Slope `mu'(u)`.
    pub fn mu_prime(&self, u: f64) -> f64 {
        match self.kind {
            LinkKind::IdentityOffset { .. } => 1.0,
            LinkKind::Logistic => logistic_prime(u),
        }
    }

    /// Curvature `mu''(u)`.
    pub fn mu_second(&self, u: f64) -> f64 {
        match self.kind {
            LinkKind::IdentityOffset { .. } => 0.0,
            LinkKind::Logistic => {
                let m = logistic(u);
                m * (1.0 - m) * (1.0 - 2.0 * m)
            }
        }
    }

    /// Log-partition `b(u)` with `b' = mu`.
    pub fn log_partition(&self, u: f64) -> f64 {
        match self.kind {
            LinkKind::IdentityOffset { alpha } => alpha * u + 0.5 * u * u,
            // softplus, stable in both tails
            LinkKind::Logistic => u.max(0.0) + (-u.abs()).exp().ln_1p(),
        }
    }

    pub fn kind(&self) -> LinkKind {
        self.kind
    }

    /// Compact index interval the bounds are certified on.
    pub fn interval(&self) -> (f64, f64) {
        self.interval
    }

    /// Lower slope bound on the interval.
    pub fn c_mu(&self) -> f64 {
        self.c_mu
    }

    /// Global slope bound, valid on all of the real line.
    pub fn l_mu(&self) -> f64 {
        self.l_mu
    }

    /// Upper bound `B` on the mean over the interval.
    pub fn mean_max(&self) -> f64 {
        self.mean_max
    }

    /// Upper bound `B''` on `|mu''|` over the interval.
    pub fn curvature_max(&self) -> f64 {
        self.curvature_max
    }

    /// Re-checks the certified bounds on an `n`-point grid over the interval.
    pub fn verify_bounds_on_grid(&self, n: usize) -> Result<()> {
        let (lo, hi) = self.interval;
        for k in 0..n.max(2) {
            let s = k as f64 / (n.max(2) - 1) as f64;
            let u = lo * (1.0 - s) + hi * s;
            let m = self.mu(u);
            let d1 = self.mu_prime(u);
            let d2 = self.mu_second(u);
            let ok = m >= -BOUND_SLACK
                && m <= self.mean_max + BOUND_SLACK
                && d1 >= self.c_mu - BOUND_SLACK
                && d1 <= self.l_mu + BOUND_SLACK
                && d2.abs() <= self.curvature_max + BOUND_SLACK
                && d1 > 0.0;
            if !ok {
                return Err(Error::InvalidConfig(format!(
                    "link bounds violated at u = {u}: mu = {m}, mu' = {d1}, mu'' = {d2}"
                )));
            }
        }
        Ok(())
    }
}

fn logistic(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

fn logistic_prime(u: f64) -> f64 {
    let m = logistic(u);
    m * (1.0 - m)
}

/// Exact `sup |mu''|` for the logistic link over `[lo, hi]`.
///
/// With `m = mu(u)`, `mu'' = m(1-m)(1-2m)`; its extrema in `m` are at
/// `1/2 +- 1/(2*sqrt(3))`, so it suffices to test those (when reachable)
/// and the interval endpoints.
fn logistic_curvature_max(lo: f64, hi: f64) -> f64 {
    let m_lo = logistic(lo);
    let m_hi = logistic(hi);
    let f = |m: f64| (m * (1.0 - m) * (1.0 - 2.0 * m)).abs();
    let mut best = f(m_lo).max(f(m_hi));
    let spread = 0.5 / 3f64.sqrt();
    for m_star in [0.5 - spread, 0.5 + spread] {
        if m_star >= m_lo && m_star <= m_hi {
            best = best.max(f(m_star));
        }
    }
    best
}
