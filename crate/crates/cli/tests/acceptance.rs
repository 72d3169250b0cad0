//! Acceptance suite. One test per criterion; each prints a single
//! `criterion N: PASS/FAIL` line with the measured numbers before
//! asserting, so the full scorecard survives a red run.
//!
//! Criteria 1 and 2 are known red: with the confidence radius at its
//! theoretical value, the two sellers lock into a bonus-driven two-point
//! price cycle (each round the bonus rewards moving away from the rivals'
//! previous prices, but simultaneous moves keep the realized joint price
//! on the explored ray, so the off-ray direction never gets explored and
//! the bonus never decays). Cumulative regret is then linear at these
//! horizons. The `supplement_*` test shows the same pipeline with the
//! bonus disabled converges quickly, isolating the cause to the bonus
//! calibration, not the estimation or pricing machinery.

use std::sync::OnceLock;

use nalgebra::DVector;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use glmarket::estimator::{solve_pmle, DesignState, History};
use glmarket::lemmas::{
    check_concentration_coverage, check_contraction, check_elliptical_bound,
    check_subgaussian_mgf, check_summation_inequality,
};
use glmarket::policy::{ConfidenceParams, SellerLearner};
use glmarket::sim::{replay_potential, run_episode, PolicyConfig};
use glmarket::{
    LinkFunction, LinkKind, MarketConfig, MarketOracle, NoiseMode, ParamSpace, PriceBox,
    SellerInput,
};
use glmarket_cli::runner::{bootstrap_slope_ci, fit_loglog_slope, run_experiment};

// ---------------------------------------------------------------------
// shared fixtures
// ---------------------------------------------------------------------

/// The canonical symmetric linear market: demand_i = 1 - p_i + 0.3 p_j,
/// unit-variance Gaussian noise, prices in [0, 1].
fn linear_market(horizon: usize, price_floor: f64) -> MarketConfig {
    let prices = PriceBox::uniform(2, price_floor, 1.0).unwrap();
    let params = ParamSpace::new(0.5, 1.0, vec![0.0], vec![0.5]).unwrap();
    let mk = || SellerInput {
        beta0: 1.0,
        gamma0: vec![0.3],
        link: LinkKind::IdentityOffset { alpha: 1.0 },
        params: params.clone(),
    };
    MarketConfig::new(prices, vec![mk(), mk()], horizon, NoiseMode::Independent, 1).unwrap()
}

fn logistic_market(horizon: usize) -> MarketConfig {
    let prices = PriceBox::uniform(2, 0.05, 1.0).unwrap();
    let params = ParamSpace::new(1.0, 2.0, vec![0.0], vec![0.5]).unwrap();
    let mk = || SellerInput {
        beta0: 1.5,
        gamma0: vec![0.3],
        link: LinkKind::Logistic,
        params: params.clone(),
    };
    MarketConfig::new(prices, vec![mk(), mk()], horizon, NoiseMode::Independent, 1).unwrap()
}

const T_LADDER: [usize; 4] = [500, 1000, 2000, 4000];
const SEEDS_PER_POINT: usize = 20;

struct LadderStats {
    /// regret[k][i][s]: ladder point, seller, seed
    regret: Vec<Vec<Vec<f64>>>,
    /// mean equilibrium-distance sum per ladder point
    dist_sum_mean: Vec<f64>,
}

fn ladder(policy: &PolicyConfig) -> LadderStats {
    let mut regret = Vec::new();
    let mut dist_sum_mean = Vec::new();
    for &t in &T_LADDER {
        let market = linear_market(t, 0.0);
        let per_seed: Vec<(Vec<f64>, f64)> = (1..=SEEDS_PER_POINT as u64)
            .collect::<Vec<_>>()
            .par_iter()
            .map(|&seed| {
                let traj = run_episode(&market, policy, seed).unwrap();
                (traj.total_regret(), traj.nash_dist_sum())
            })
            .collect();
        let mut per_seller = vec![Vec::with_capacity(SEEDS_PER_POINT); 2];
        let mut ds = 0.0;
        for (reg, d) in per_seed {
            per_seller[0].push(reg[0]);
            per_seller[1].push(reg[1]);
            ds += d;
        }
        regret.push(per_seller);
        dist_sum_mean.push(ds / SEEDS_PER_POINT as f64);
    }
    LadderStats {
        regret,
        dist_sum_mean,
    }
}

static UCB_LADDER: OnceLock<LadderStats> = OnceLock::new();

fn ucb_ladder() -> &'static LadderStats {
    UCB_LADDER.get_or_init(|| ladder(&PolicyConfig::default()))
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

// ---------------------------------------------------------------------
// criteria
// ---------------------------------------------------------------------

#[test]
fn criterion_1_regret_scaling() {
    let stats = ucb_ladder();
    let ts: Vec<f64> = T_LADDER.iter().map(|&t| t as f64).collect();
    let mut slopes = Vec::new();
    let mut ci_uppers = Vec::new();
    for i in 0..2 {
        let means: Vec<f64> = stats.regret.iter().map(|r| {
            r[i].iter().sum::<f64>() / r[i].len() as f64
        }).collect();
        slopes.push(fit_loglog_slope(&ts, &means));
        let curves: Vec<Vec<f64>> = stats.regret.iter().map(|r| r[i].clone()).collect();
        let (_, hi) = bootstrap_slope_ci(&ts, &curves, 1000, 42 + i as u64);
        ci_uppers.push(hi);
    }
    let ok = slopes.iter().all(|&s| s <= 0.65) && ci_uppers.iter().all(|&u| u < 1.0);
    println!(
        "criterion 1 (regret scaling <= 0.65, CI excludes 1.0): {} - slopes {:?}, CI uppers {:?}",
        verdict(ok),
        slopes,
        ci_uppers
    );
    assert!(
        ok,
        "log-log regret slopes {slopes:?} (target <= 0.65), bootstrap CI uppers {ci_uppers:?} \
         (target < 1.0); the policy cycles between two price points at these horizons, see \
         the supplement test and README"
    );
}

#[test]
fn criterion_2_equilibrium_distance_sum() {
    let stats = ucb_ladder();
    let ratio = |k: usize| {
        let t = T_LADDER[k] as f64;
        stats.dist_sum_mean[k] / (t.sqrt() * t.ln())
    };
    let first = ratio(0);
    let last = ratio(T_LADDER.len() - 1);
    let ok = last <= 1.5 * first;
    println!(
        "criterion 2 (distance-sum ratio trend <= 1.5x): {} - ratio(500) = {first:.4}, \
         ratio(4000) = {last:.4}, growth {:.3}x",
        verdict(ok),
        last / first
    );
    assert!(
        ok,
        "sum ||p_t - p*||^2 / (sqrt(T) log T) grew {:.3}x from T=500 to T=4000 (limit 1.5x)",
        last / first
    );
}

#[test]
fn criterion_3_nash_oracle_exactness() {
    let oracle = MarketOracle::new(linear_market(10, 0.0));
    let nash = oracle.nash_equilibrium(1e-10, 100_000).unwrap();
    let expected = 0.5 / 0.85;
    let err = nash
        .prices
        .iter()
        .map(|p| (p - expected).abs())
        .fold(0.0f64, f64::max);
    let ok = nash.converged && err <= 1e-8;
    println!(
        "criterion 3 (Nash oracle = 0.5/0.85 within 1e-8): {} - max error {err:.2e}",
        verdict(ok)
    );
    assert!(ok, "equilibrium error {err} exceeds 1e-8");
}

#[test]
fn criterion_4_estimator_oracle_equivalence() {
    // identity-link PMLE vs ridge closed form, 100 random instances
    let mut rng = ChaCha8Rng::seed_from_u64(4001);
    let mut worst_ridge = 0.0f64;
    for _ in 0..100 {
        let n = 1 + (rng.next_u64() % 6) as usize;
        let t = (rng.next_u64() % 51) as usize;
        let uni = |r: &mut ChaCha8Rng| r.next_u64() as f64 / u64::MAX as f64;
        let alpha = uni(&mut rng) * 2.0;
        let lambda = 0.1 + uni(&mut rng) * 2.9;
        let link = LinkFunction::identity_offset(alpha, (0.0, 5.0)).unwrap();
        let mut h = History::new();
        let mut gram = nalgebra::DMatrix::<f64>::identity(n, n) * lambda;
        let mut moment = DVector::<f64>::zeros(n);
        for _ in 0..t {
            let p: Vec<f64> = (0..n).map(|_| uni(&mut rng)).collect();
            let y = uni(&mut rng) * 4.0 - 1.0;
            h.push(&p, y);
            let pv = DVector::from_row_slice(&p);
            gram += &pv * pv.transpose();
            moment += &pv * (y - alpha);
        }
        let (theta, _, _, ok) = solve_pmle(&h, &link, lambda, &DVector::zeros(n));
        assert!(ok);
        let ridge = gram.cholesky().unwrap().solve(&moment);
        worst_ridge = worst_ridge.max((&theta - &ridge).norm());
    }

    // logistic PMLE vs a 201^2 likelihood grid on [-3, 3]^2, 20 instances
    let link = LinkFunction::logistic((-5.0, 5.0)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4002);
    let spacing = 6.0 / 200.0;
    let mut worst_grid = 0.0f64;
    for _ in 0..20 {
        let uni = |r: &mut ChaCha8Rng| r.next_u64() as f64 / u64::MAX as f64;
        let theta0 = [-(0.3 + uni(&mut rng)), uni(&mut rng) - 0.5];
        let mut h = History::new();
        for _ in 0..20 {
            let p = [uni(&mut rng), uni(&mut rng)];
            let mean = link.mu(theta0[0] * p[0] + theta0[1] * p[1]);
            let y = if uni(&mut rng) < mean { 1.0 } else { 0.0 };
            h.push(&p, y);
        }
        let (theta, _, _, ok) = solve_pmle(&h, &link, 1.0, &DVector::zeros(2));
        assert!(ok);
        assert!(
            theta.amax() < 2.9,
            "instance drifted outside the brute-force window"
        );
        let mut best = (0.0, 0.0);
        let mut best_ll = f64::NEG_INFINITY;
        for a in 0..201 {
            let x = -3.0 + spacing * a as f64;
            for b in 0..201 {
                let yv = -3.0 + spacing * b as f64;
                let mut ll = -0.5 * (x * x + yv * yv);
                for (p, obs) in h.iter() {
                    let u = p[0] * x + p[1] * yv;
                    ll += obs * u - link.log_partition(u);
                }
                if ll > best_ll {
                    best_ll = ll;
                    best = (x, yv);
                }
            }
        }
        worst_grid = worst_grid
            .max((theta[0] - best.0).abs())
            .max((theta[1] - best.1).abs());
    }

    let ok = worst_ridge <= 1e-9 && worst_grid <= spacing + 1e-12;
    println!(
        "criterion 4 (estimator oracles): {} - ridge gap {worst_ridge:.2e} (<= 1e-9), \
         likelihood-grid gap {worst_grid:.4} (<= grid spacing {spacing:.3})",
        verdict(ok)
    );
    assert!(ok);
}

#[test]
fn criterion_5_sherman_morrison_fidelity() {
    // 10^4 rank-one updates at N = 5
    let mut rng = ChaCha8Rng::seed_from_u64(5001);
    let mut d = DesignState::new(5, 1.0, 1.0);
    for _ in 0..10_000 {
        let p: Vec<f64> = (0..5)
            .map(|_| rng.next_u64() as f64 / u64::MAX as f64)
            .collect();
        d.update(&p);
    }
    let drift = d.inverse_drift();

    // maintained-inverse potential vs dense replay on (N=2, T=10)
    let mut worst_k = 0.0f64;
    for seed in 1..=5u64 {
        let market = linear_market(10, 0.0);
        let traj = run_episode(&market, &PolicyConfig::default(), seed).unwrap();
        let prices: Vec<Vec<f64>> = traj.rounds.iter().map(|r| r.prices.clone()).collect();
        let c_mus: Vec<f64> = market.sellers().iter().map(|s| s.link().c_mu()).collect();
        let dense = replay_potential(&prices, 1.0, &c_mus);
        worst_k = worst_k.max((dense - traj.potential()).abs());
    }

    let ok = drift <= 1e-6 && worst_k <= 1e-8;
    println!(
        "criterion 5 (Sherman-Morrison fidelity): {} - drift {drift:.2e} (<= 1e-6), \
         potential gap {worst_k:.2e} (<= 1e-8)",
        verdict(ok)
    );
    assert!(ok);
}

#[test]
fn criterion_6_lemma_suite() {
    // (a) summation inequality on 10^4 randomized instances
    let mut rng = ChaCha8Rng::seed_from_u64(6001);
    let mut summation_fails = 0usize;
    for k in 0..10_000 {
        let t = 1 + (rng.next_u64() % 200) as usize;
        let q = [0.1, 0.5, 0.9][k % 3];
        let a: Vec<f64> = (0..t)
            .map(|_| (rng.next_u64() as f64 / u64::MAX as f64) * 4.0 - 2.0)
            .collect();
        if !check_summation_inequality(&a, q).unwrap().pass {
            summation_fails += 1;
        }
    }

    // (b) design-diagonal inequality at every round of the test
    // trajectories (positive price floors keep the bound non-degenerate)
    let mut diagonal_fails = 0usize;
    let mut diag_lines = Vec::new();
    let linear_floor = linear_market(300, 0.05);
    for seed in [1u64, 2, 3] {
        let traj = run_episode(&linear_floor, &PolicyConfig::default(), seed).unwrap();
        let rep = check_elliptical_bound(&traj, &linear_floor, 1.0);
        diag_lines.push(format!("linear seed {seed}: {}", verdict(rep.pass)));
        if !rep.pass {
            diagonal_fails += 1;
        }
    }
    let logistic = logistic_market(400);
    for seed in [1u64, 2] {
        let traj = run_episode(&logistic, &PolicyConfig::default(), seed).unwrap();
        let rep = check_elliptical_bound(&traj, &logistic, 1.0);
        diag_lines.push(format!("logistic seed {seed}: {}", verdict(rep.pass)));
        if !rep.pass {
            diagonal_fails += 1;
        }
    }
    // degenerate floor: reported, never failed
    let open = linear_market(300, 0.0);
    let traj = run_episode(&open, &PolicyConfig::default(), 1).unwrap();
    let rep = check_elliptical_bound(&traj, &open, 1.0);
    if !rep.pass {
        diagonal_fails += 1;
    }

    // (c) noise MGF on both link families, |s| <= 2
    let grid: Vec<f64> = (-8..=8).map(|k| k as f64 / 4.0).collect();
    let glink = LinkFunction::identity_offset(1.0, (-1.0, 0.5)).unwrap();
    let blink = LinkFunction::logistic((-2.0, 0.45)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6002);
    let mgf_g = check_subgaussian_mgf(&glink, -0.3, &grid, 200_000, &mut rng);
    let mgf_b = check_subgaussian_mgf(&blink, -0.6, &grid, 200_000, &mut rng);

    // (d) best-response contraction on 1000 random pairs per market
    let mut rng = ChaCha8Rng::seed_from_u64(6003);
    let con_lin = check_contraction(
        &MarketOracle::new(linear_market(10, 0.0)),
        1000,
        &mut rng,
    )
    .unwrap();
    let con_log = check_contraction(&MarketOracle::new(logistic_market(10)), 1000, &mut rng).unwrap();

    let ok = summation_fails == 0
        && diagonal_fails == 0
        && mgf_g.pass
        && mgf_b.pass
        && con_lin.pass
        && con_log.pass;
    println!(
        "criterion 6 (lemma suite): {} - summation fails {summation_fails}/10000, \
         diagonal [{}], mgf gaussian {}, mgf bernoulli {}, contraction linear {}, logistic {}",
        verdict(ok),
        diag_lines.join(", "),
        verdict(mgf_g.pass),
        verdict(mgf_b.pass),
        verdict(con_lin.pass),
        verdict(con_log.pass)
    );
    assert!(ok);
}

#[test]
fn criterion_7_concentration_coverage() {
    let market = linear_market(200, 0.0);
    let rep = check_concentration_coverage(&market, &PolicyConfig::default(), 0.05, 400, 7000)
        .unwrap();
    // required = 0.95 - 3 sqrt(0.05 * 0.95 / 400) ~= 0.917
    println!(
        "criterion 7 (concentration coverage >= {:.4}): {} - coverage {:.4}",
        rep.lhs,
        verdict(rep.pass),
        rep.rhs
    );
    assert!(rep.pass, "coverage {} below required {}", rep.rhs, rep.lhs);
}

#[test]
fn criterion_8_determinism() {
    let toml_text = r#"
[market]
rounds = 60
seed = 1

[experiment]
seeds = [1, 2, 3]

[[seller]]
link = "identity-offset"
alpha = 1.0
beta = 1.0
gamma = [0.3]
price_min = 0.0
price_max = 1.0
beta_min = 0.5
beta_max = 1.0
gamma_min = [0.0]
gamma_max = [0.5]

[[seller]]
link = "identity-offset"
alpha = 1.0
beta = 1.0
gamma = [0.3]
price_min = 0.0
price_max = 1.0
beta_min = 0.5
beta_max = 1.0
gamma_min = [0.0]
gamma_max = [0.5]
"#;
    let cfg: glmarket_cli::config::ExperimentConfig = toml::de::from_str(toml_text).unwrap();
    cfg.validate().unwrap();
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    run_experiment(&cfg, dir_a.path(), false, None, Some(2)).unwrap();
    run_experiment(&cfg, dir_b.path(), false, None, Some(1)).unwrap();

    let mut compared = 0;
    let mut mismatches = Vec::new();
    for name in [
        "trajectory_seed_1.csv",
        "trajectory_seed_2.csv",
        "trajectory_seed_3.csv",
        "summary.json",
        "lemmas.jsonl",
        "validation.json",
    ] {
        let a = std::fs::read(dir_a.path().join(name)).unwrap();
        let b = std::fs::read(dir_b.path().join(name)).unwrap();
        compared += 1;
        if a != b {
            mismatches.push(name);
        }
    }
    let ok = mismatches.is_empty();
    println!(
        "criterion 8 (byte-identical outputs): {} - {compared} files compared{}",
        verdict(ok),
        if ok {
            String::new()
        } else {
            format!(", mismatched: {mismatches:?}")
        }
    );
    assert!(ok);
}

#[test]
fn criterion_9_information_hygiene() {
    // structural: the only observation path into a learner takes the
    // public price vector and the learner's own scalar demand
    let _observe_signature: fn(&mut SellerLearner, &[f64], f64) = SellerLearner::observe;

    // behavioral: a seller's estimate path is reproducible from public
    // prices plus its own demands alone; any rival-demand leak inside the
    // simulator would make this offline replay diverge
    let market = linear_market(80, 0.0);
    let policy = PolicyConfig::default();
    let traj = run_episode(&market, &policy, 31).unwrap();

    let spec = market.seller(0);
    let conf = ConfidenceParams {
        delta: policy.delta.delta(market.horizon()),
        horizon: market.horizon(),
        lambda: policy.lambda,
        b_p: market.prices().price_norm_bound(),
        b_theta: spec.ball_radius(),
        l_mu: spec.link().l_mu(),
        c_mu: spec.link().c_mu(),
        n: market.n(),
    };
    let (lo, hi) = spec.params().theta_box(0);
    let center: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
    let mut replay = SellerLearner::new(spec, conf, policy.grid_points, DVector::from_vec(center));

    let mut worst = 0.0f64;
    for t in 0..traj.rounds.len() {
        if t > 0 {
            replay.refresh_estimate();
        }
        // the recorded estimate at round t is the one the seller priced with
        let recorded = &traj.rounds[t].estimates[0];
        for (a, b) in replay.theta_tilde().iter().zip(recorded) {
            worst = worst.max((a - b).abs());
        }
        let rec = &traj.rounds[t];
        replay.observe(&rec.prices, rec.demands[0]);
    }
    let ok = worst == 0.0;
    println!(
        "criterion 9 (information hygiene): {} - offline own-data replay matches recorded \
         estimates bitwise (max gap {worst:.1e}); observe() accepts only a scalar own demand",
        verdict(ok)
    );
    assert!(ok);
}

// ---------------------------------------------------------------------
// supplement: same pipeline, bonus disabled
// ---------------------------------------------------------------------

/// Not an acceptance criterion. Demonstrates that with the exploration
/// bonus turned off, the identical estimation/pricing machinery converges
/// and regret is strongly sublinear, so the criterion-1 failure is the
/// bonus calibration (which induces a persistent two-point price cycle),
/// not the implementation.
#[test]
fn supplement_greedy_baseline_is_sublinear() {
    let greedy = PolicyConfig {
        rho_override: Some(0.0),
        ..PolicyConfig::default()
    };
    let stats = ladder(&greedy);
    let ts: Vec<f64> = T_LADDER.iter().map(|&t| t as f64).collect();
    let mut slopes = Vec::new();
    for i in 0..2 {
        let means: Vec<f64> = stats
            .regret
            .iter()
            .map(|r| r[i].iter().sum::<f64>() / r[i].len() as f64)
            .collect();
        slopes.push(fit_loglog_slope(&ts, &means));
    }
    println!(
        "supplement (greedy baseline): slopes {slopes:?}, mean regret at T=4000: {:?}",
        stats
            .regret
            .last()
            .unwrap()
            .iter()
            .map(|r| r.iter().sum::<f64>() / r.len() as f64)
            .collect::<Vec<_>>()
    );
    // greedy certainty-equivalence occasionally self-confirms a wrong
    // estimate (the reason exploration exists), so a few seeds inflate the
    // mean; the slope still sits far below the cycling policy's ~0.97
    assert!(
        slopes.iter().all(|&s| s < 0.8),
        "greedy baseline should stay clearly sublinear, got {slopes:?}"
    );
}
