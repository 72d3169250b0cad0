//! Penalized maximum-likelihood estimation with an online design matrix.
//!
//! Three pieces, matching the learner's per-round work:
//!
//! - [`DesignState`]: the regularized Gram matrix
//!   `V = sum_s p_s p_s' + (lambda / c_mu) I` with its inverse maintained by
//!   rank-one (Sherman-Morrison) updates and periodically re-inverted
//!   exactly to bound drift;
//! - [`solve_pmle`]: damped Newton on the penalized score
//!   `sum_s (y_s - mu(<p_s, theta>)) p_s - lambda theta`, whose Jacobian is
//!   negative definite for `lambda > 0`, so the root is unique;
//! - [`project_estimate`]: when the raw root leaves the admissible ball,
//!   minimize `||g(theta_hat) - g(theta)||_{V^-1}` over `||theta|| <= B`
//!   by projected gradient descent, where `g` is the data surrogate
//!   `sum_s mu(<p_s, theta>) p_s + lambda theta`.

use nalgebra::{DMatrix, DVector};

use crate::link::LinkFunction;

/// Exact re-inversion cadence for the maintained inverse.
const REINVERT_EVERY: usize = 1000;

const NEWTON_MAX_ITER: usize = 100;
const NEWTON_TOL: f64 = 1e-10;
const PROJECTION_MAX_ITER: usize = 500;
const PROJECTION_TOL: f64 = 1e-8;

/// Price/demand observations, append-only.
#[derive(Debug, Clone, Default)]
pub struct History {
    prices: Vec<DVector<f64>>,
    demands: Vec<f64>,
}

impl History {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, price: &[f64], demand: f64) {
        if let Some(first) = self.prices.first() {
            assert_eq!(first.len(), price.len(), "price dimension changed");
        }
        self.prices.push(DVector::from_row_slice(price));
        self.demands.push(demand);
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&DVector<f64>, f64)> {
        self.prices.iter().zip(self.demands.iter().copied())
    }

    /// `sum_s y_s p_s`, the scale reference for the Newton stop rule.
    fn demand_moment(&self, n: usize) -> DVector<f64> {
        let mut m = DVector::zeros(n);
        for (p, y) in self.iter() {
            m.axpy(y, p, 1.0);
        }
        m
    }
}

/// Regularized Gram matrix with a maintained inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignState {
    rounds: usize,
    v: DMatrix<f64>,
    v_inv: DMatrix<f64>,
    ridge: f64,
    since_reinvert: usize,
}

impl DesignState {
    /// Fresh design `V = (lambda / c_mu) I`.
    pub fn new(n: usize, lambda: f64, c_mu: f64) -> Self {
        assert!(lambda > 0.0 && c_mu > 0.0);
        let ridge = lambda / c_mu;
        DesignState {
            rounds: 0,
            v: DMatrix::identity(n, n) * ridge,
            v_inv: DMatrix::identity(n, n) / ridge,
            ridge,
            since_reinvert: 0,
        }
    }

    pub fn n(&self) -> usize {
        self.v.nrows()
    }

    /// Number of price vectors accumulated.
    pub fn rounds(&self) -> usize {
        self.rounds
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.v_inv
    }

    /// Rank-one update `V += p p'` with a Sherman-Morrison update of the
    /// inverse; `O(N^2)`. The denominator `1 + p' V^-1 p >= 1` always.
    pub fn update(&mut self, price: &[f64]) {
        assert_eq!(price.len(), self.n(), "price dimension changed");
        let p = DVector::from_row_slice(price);
        self.v.syger(1.0, &p, &p, 1.0);
        let vp = &self.v_inv * &p;
        let denom = 1.0 + p.dot(&vp);
        self.v_inv.syger(-1.0 / denom, &vp, &vp, 1.0);
        // syger touches the lower triangle; mirror it
        symmetrize(&mut self.v);
        symmetrize(&mut self.v_inv);
        self.rounds += 1;
        self.since_reinvert += 1;
        if self.since_reinvert >= REINVERT_EVERY {
            self.reinvert();
        }
    }

    /// Exact inverse recomputation; also the drift fallback.
    pub fn reinvert(&mut self) {
        self.v_inv = self
            .v
            .clone()
            .try_inverse()
            .expect("design matrix is positive definite by construction");
        self.since_reinvert = 0;
    }

    /// `max |V V^-1 - I|`, the maintained-inverse drift.
    pub fn inverse_drift(&self) -> f64 {
        let prod = &self.v * &self.v_inv;
        let n = self.n();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((prod[(i, j)] - target).abs());
            }
        }
        worst
    }

    /// `||x||_{V^-1}` via the maintained inverse; allocation-free, it sits
    /// on the pricing hot path.
    pub fn inv_norm(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.n());
        let n = self.n();
        let mut quad = 0.0;
        for i in 0..n {
            let mut row = 0.0;
            for (j, &xj) in x.iter().enumerate().take(n) {
                row += self.v_inv[(i, j)] * xj;
            }
            quad += x[i] * row;
        }
        quad.max(0.0).sqrt()
    }
}

// `syger` writes only the lower triangle; mirror it to the upper one.
fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            m[(j, i)] = m[(i, j)];
        }
    }
}

/// Raw and projected estimates plus solver diagnostics.
#[derive(Debug, Clone)]
pub struct EstimateBundle {
    /// Root of the penalized score equation.
    pub theta_hat: DVector<f64>,
    /// Feasible estimate, `||theta_tilde|| <= B_theta`.
    pub theta_tilde: DVector<f64>,
    pub newton_iters: usize,
    pub score_norm_at_root: f64,
    pub newton_converged: bool,
    /// Whether the ball projection had to move the raw root.
    pub projection_active: bool,
    pub projection_converged: bool,
}

/// Penalized score `sum_s (y_s - mu(<p_s, theta>)) p_s - lambda theta`.
pub fn score(theta: &DVector<f64>, history: &History, link: &LinkFunction, lambda: f64) -> DVector<f64> {
    let mut s = theta * (-lambda);
    for (p, y) in history.iter() {
        let resid = y - link.mu(p.dot(theta));
        s.axpy(resid, p, 1.0);
    }
    s
}

/// Score together with `J = sum_s mu'(<p_s, theta>) p_s p_s' + lambda I`
/// (the score Jacobian is `-J`, negative definite).
pub fn score_and_curvature(
    theta: &DVector<f64>,
    history: &History,
    link: &LinkFunction,
    lambda: f64,
) -> (DVector<f64>, DMatrix<f64>) {
    let n = theta.len();
    let mut s = theta * (-lambda);
    let mut j = DMatrix::identity(n, n) * lambda;
    for (p, y) in history.iter() {
        let u = p.dot(theta);
        s.axpy(y - link.mu(u), p, 1.0);
        j.syger(link.mu_prime(u), p, p, 1.0);
    }
    symmetrize(&mut j);
    (s, j)
}

/// Damped Newton solve of the penalized score equation.
///
/// Steps `theta += step * J^-1 s` with backtracking halving until the
/// score norm decreases; stops at
/// `||s|| <= 1e-10 (1 + ||sum_s y_s p_s||)` or 100 iterations. For the
/// identity link the first full step lands on the ridge closed form.
pub fn solve_pmle(
    history: &History,
    link: &LinkFunction,
    lambda: f64,
    theta_init: &DVector<f64>,
) -> (DVector<f64>, usize, f64, bool) {
    assert!(lambda > 0.0, "ridge weight must be positive");
    let n = theta_init.len();
    let tol = NEWTON_TOL * (1.0 + history.demand_moment(n).norm());

    let mut theta = theta_init.clone();
    let mut s_norm = score(&theta, history, link, lambda).norm();
    let mut iters = 0;
    while s_norm > tol && iters < NEWTON_MAX_ITER {
        let (s, j) = score_and_curvature(&theta, history, link, lambda);
        let step = j
            .cholesky()
            .map(|ch| ch.solve(&s))
            .unwrap_or_else(|| &s / lambda);
        // backtracking: halve until the score norm drops
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand = &theta + &step * scale;
            let cand_norm = score(&cand, history, link, lambda).norm();
            if cand_norm < s_norm {
                theta = cand;
                s_norm = cand_norm;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        iters += 1;
        if !accepted {
            break; // stalled; return the best iterate
        }
    }
    (theta, iters, s_norm, s_norm <= tol)
}

/// Data surrogate `g(theta) = sum_s mu(<p_s, theta>) p_s + lambda theta`.
pub fn surrogate(
    theta: &DVector<f64>,
    history: &History,
    link: &LinkFunction,
    lambda: f64,
) -> DVector<f64> {
    let mut g = theta * lambda;
    for (p, _) in history.iter() {
        g.axpy(link.mu(p.dot(theta)), p, 1.0);
    }
    g
}

/// Squared projection objective `F(theta) = ||g(theta_hat) - g(theta)||^2_{V^-1}`
/// and its gradient `-2 J_g(theta) V^-1 (g(theta_hat) - g(theta))`.
fn projection_objective(
    theta: &DVector<f64>,
    g_hat: &DVector<f64>,
    history: &History,
    link: &LinkFunction,
    lambda: f64,
    v_inv: &DMatrix<f64>,
) -> (f64, DVector<f64>) {
    let r = g_hat - surrogate(theta, history, link, lambda);
    let v_r = v_inv * &r;
    let value = r.dot(&v_r);
    // J_g = sum mu'(p.theta) p p' + lambda I, symmetric
    let mut grad = &v_r * (-2.0 * lambda);
    for (p, _) in history.iter() {
        let w = link.mu_prime(p.dot(theta)) * p.dot(&v_r);
        grad.axpy(-2.0 * w, p, 1.0);
    }
    (value, grad)
}

fn project_to_ball(theta: &DVector<f64>, radius: f64) -> DVector<f64> {
    let norm = theta.norm();
    if norm <= radius {
        theta.clone()
    } else {
        theta * (radius / norm)
    }
}

/// Feasible estimate from a raw root.
///
/// Inside the ball the root is returned unchanged (the objective is zero
/// there). Otherwise projected gradient descent runs from the radial
/// projection; only feasibility plus no regression below the radial start
/// is required downstream, so a non-converged best iterate is safe.
pub fn project_estimate(
    theta_hat: &DVector<f64>,
    history: &History,
    link: &LinkFunction,
    lambda: f64,
    design: &DesignState,
    b_theta: f64,
) -> (DVector<f64>, bool, bool) {
    assert!(b_theta > 0.0);
    if theta_hat.norm() <= b_theta {
        return (theta_hat.clone(), false, true);
    }
    let g_hat = surrogate(theta_hat, history, link, lambda);
    let v_inv = design.inverse();

    let mut theta = theta_hat * (b_theta / theta_hat.norm());
    let (mut f_val, mut grad) =
        projection_objective(&theta, &g_hat, history, link, lambda, v_inv);
    let mut eta = 1.0;
    let mut converged = false;

    // F only decreases along accepted moves, so theta is always the best
    // iterate seen.
    'outer: for _ in 0..PROJECTION_MAX_ITER {
        let mut moved = false;
        for _ in 0..60 {
            let cand = project_to_ball(&(&theta - &grad * eta), b_theta);
            let step = (&cand - &theta).norm();
            if step / eta <= PROJECTION_TOL {
                // gradient-mapping norm below tolerance
                converged = true;
                break 'outer;
            }
            let (cand_val, cand_grad) =
                projection_objective(&cand, &g_hat, history, link, lambda, v_inv);
            if cand_val < f_val {
                theta = cand;
                f_val = cand_val;
                grad = cand_grad;
                moved = true;
                eta = (eta * 1.5).min(4.0);
                break;
            }
            eta *= 0.5;
        }
        if !moved {
            break; // backtracking stalled; return the best iterate
        }
    }
    (theta, true, converged)
}

/// Full per-round estimation: Newton root, then ball projection.
pub fn estimate(
    history: &History,
    link: &LinkFunction,
    lambda: f64,
    design: &DesignState,
    b_theta: f64,
    theta_init: &DVector<f64>,
) -> EstimateBundle {
    let (theta_hat, newton_iters, score_norm_at_root, newton_converged) =
        solve_pmle(history, link, lambda, theta_init);
    let (theta_tilde, projection_active, projection_converged) =
        project_estimate(&theta_hat, history, link, lambda, design, b_theta);
    EstimateBundle {
        theta_hat,
        theta_tilde,
        newton_iters,
        score_norm_at_root,
        newton_converged,
        projection_active,
        projection_converged,
    }
}
