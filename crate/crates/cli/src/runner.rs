//! Experiment orchestration: multi-seed runs, the regret-scaling study
//! and the lemma battery. Seeds are dispatched to a rayon pool; every
//! output is a deterministic function of the configuration.

use std::path::Path;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use glmarket::lemmas::{
    check_concentration_coverage, check_contraction, check_elliptical_bound,
    check_subgaussian_mgf, check_summation_inequality, LemmaReport,
};
use glmarket::sim::{run_episode, PolicyConfig, Trajectory};
use glmarket::{validate_market, LinkKind, MarketConfig, MarketOracle};

use crate::config::ExperimentConfig;
use crate::output::{
    write_lemma_reports, write_summary, write_trajectory_csv, SlopeEstimate, Summary,
};
use crate::CliError;

/// Density of the validation grid used by the assumption gate.
const VALIDATION_GRID: usize = 101;
/// Randomized instances in the summation battery.
const SUMMATION_INSTANCES: usize = 10_000;
/// Price pairs in the contraction battery.
const CONTRACTION_PAIRS: usize = 1000;
/// Monte-Carlo draws per grid point in the noise-MGF battery.
const MGF_SAMPLES: usize = 100_000;

/// Worker pool honoring `--workers` or `GLMARKET_WORKERS`.
pub fn thread_pool(workers: Option<usize>) -> Result<rayon::ThreadPool, CliError> {
    let count = workers.or_else(|| {
        std::env::var("GLMARKET_WORKERS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(c) = count {
        builder = builder.num_threads(c.max(1));
    }
    builder
        .build()
        .map_err(|e| CliError::Io(format!("worker pool: {e}")))
}

/// Runs the assumption gate; failures abort unless forced.
pub fn gate(market: &MarketConfig, force: bool) -> Result<(), CliError> {
    let report = validate_market(market, VALIDATION_GRID);
    if report.all_ok() {
        return Ok(());
    }
    let msg = report.failures().join("; ");
    if force {
        eprintln!("warning: proceeding despite failed assumptions: {msg}");
        Ok(())
    } else {
        Err(CliError::Gate(msg))
    }
}

fn run_seeds(
    market: &MarketConfig,
    policy: &PolicyConfig,
    seeds: &[u64],
) -> Result<Vec<Trajectory>, CliError> {
    seeds
        .par_iter()
        .map(|&s| run_episode(market, policy, s).map_err(|e| CliError::Io(e.to_string())))
        .collect()
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// The cheap deterministic lemma battery run alongside every experiment:
/// summation, contraction, noise MGF per link family, and the design
/// diagonal on each produced trajectory.
pub fn lemma_battery(
    cfg: &ExperimentConfig,
    market: &MarketConfig,
    trajectories: &[Trajectory],
) -> Result<Vec<LemmaReport>, CliError> {
    let mut reports = Vec::new();
    let wrap = |e: glmarket::Error| CliError::Io(e.to_string());

    // geometric-weight summation bound on randomized sequences
    let mut rng = ChaCha8Rng::seed_from_u64(0x5e_ed_01);
    let mut worst: Option<LemmaReport> = None;
    for k in 0..SUMMATION_INSTANCES {
        let t = 1 + (k * 7919) % 200;
        let q = [0.1, 0.5, 0.9][k % 3];
        let a: Vec<f64> = (0..t)
            .map(|_| {
                use rand_chacha::rand_core::RngCore;
                // uniform in [-2, 2)
                (rng.next_u64() as f64 / u64::MAX as f64) * 4.0 - 2.0
            })
            .collect();
        let rep = check_summation_inequality(&a, q).map_err(wrap)?;
        worst = Some(match worst {
            None => rep,
            Some(w) if rep.margin < w.margin => rep,
            Some(w) => w,
        });
    }
    if let Some(mut w) = worst {
        w.instance = format!("{} randomized instances; worst: {}", SUMMATION_INSTANCES, w.instance);
        reports.push(w);
    }

    // best-response contraction on random price pairs
    let oracle = MarketOracle::with_tolerance(market.clone(), cfg.policy.br_tol);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5e_ed_02);
    reports.push(check_contraction(&oracle, CONTRACTION_PAIRS, &mut rng).map_err(wrap)?);

    // noise MGF per link family, evaluated at the equilibrium index
    let nash = oracle.nash_equilibrium(1e-10, 200_000).map_err(wrap)?;
    let grid: Vec<f64> = (-8..=8).map(|k| k as f64 / 4.0).collect();
    let mut seen = Vec::new();
    for spec in market.sellers() {
        let family = match spec.link().kind() {
            LinkKind::IdentityOffset { .. } => "identity-offset",
            LinkKind::Logistic => "logistic",
        };
        if seen.contains(&family) {
            continue;
        }
        seen.push(family);
        let u_star: f64 = spec
            .theta0()
            .iter()
            .zip(&nash.prices)
            .map(|(a, b)| a * b)
            .sum();
        let mut rng = ChaCha8Rng::seed_from_u64(0x5e_ed_03 + seen.len() as u64);
        let mut rep = check_subgaussian_mgf(spec.link(), u_star, &grid, MGF_SAMPLES, &mut rng);
        rep.instance = format!("{family} link; {}", rep.instance);
        reports.push(rep);
    }

    // design-diagonal bound on every produced trajectory
    for traj in trajectories {
        let mut rep = check_elliptical_bound(traj, market, cfg.policy.lambda);
        rep.instance = format!("seed {}; {}", traj.seed, rep.instance);
        reports.push(rep);
    }
    Ok(reports)
}

fn build_summary(
    cfg: &ExperimentConfig,
    market: &MarketConfig,
    trajectories: &[Trajectory],
    lemma_reports: Vec<LemmaReport>,
    slope: Option<SlopeEstimate>,
) -> Result<Summary, CliError> {
    let n = market.n();
    let oracle = MarketOracle::with_tolerance(market.clone(), cfg.policy.br_tol);
    let nash = oracle
        .nash_equilibrium(1e-10, 200_000)
        .map_err(|e| CliError::Io(e.to_string()))?;
    let report = validate_market(market, VALIDATION_GRID);

    let mut regret_mean = Vec::with_capacity(n);
    let mut regret_stderr = Vec::with_capacity(n);
    for i in 0..n {
        let per_seed: Vec<f64> = trajectories.iter().map(|t| t.total_regret()[i]).collect();
        let (m, s) = mean_and_stderr(&per_seed);
        regret_mean.push(m);
        regret_stderr.push(s);
    }
    let (nash_dist_sum_mean, _) = mean_and_stderr(
        &trajectories
            .iter()
            .map(|t| t.nash_dist_sum())
            .collect::<Vec<_>>(),
    );
    let (k_t_mean, _) = mean_and_stderr(
        &trajectories
            .iter()
            .map(|t| t.potential())
            .collect::<Vec<_>>(),
    );

    Ok(Summary {
        config_echo: cfg.clone(),
        nash_price: nash.prices,
        l_gamma: report.l_gamma,
        regret_mean,
        regret_stderr,
        nash_dist_sum_mean,
        k_t_mean,
        lemma_reports,
        slope,
    })
}

/// `run` verb: multi-seed episodes, per-seed CSVs, summary JSON and the
/// lemma battery. Returns the summary for inspection.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    force: bool,
    seeds_override: Option<usize>,
    workers: Option<usize>,
) -> Result<Summary, CliError> {
    let market = cfg.market(None)?;
    gate(&market, force)?;
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", out_dir.display())))?;

    let seeds = cfg.seeds(seeds_override);
    let policy = cfg.policy();
    let pool = thread_pool(workers)?;
    let trajectories = pool.install(|| run_seeds(&market, &policy, &seeds))?;

    // the evidence behind the gate decision travels with the results
    let validation = validate_market(&market, VALIDATION_GRID);
    let report_json =
        serde_json::to_string_pretty(&validation).map_err(|e| CliError::Io(e.to_string()))?;
    std::fs::write(out_dir.join("validation.json"), report_json + "\n")
        .map_err(|e| CliError::Io(e.to_string()))?;

    for traj in &trajectories {
        let path = out_dir.join(format!("trajectory_seed_{}.csv", traj.seed));
        write_trajectory_csv(&path, traj)?;
    }
    let lemma_reports = lemma_battery(cfg, &market, &trajectories)?;
    write_lemma_reports(&out_dir.join("lemmas.jsonl"), &lemma_reports)?;
    let summary = build_summary(cfg, &market, &trajectories, lemma_reports, None)?;
    write_summary(&out_dir.join("summary.json"), &summary)?;
    Ok(summary)
}

/// Ordinary least squares slope of `ln y` on `ln t`.
pub fn fit_loglog_slope(ts: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(ts.len(), ys.len());
    let n = ts.len() as f64;
    let xs: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let ls: Vec<f64> = ys.iter().map(|y| y.max(f64::MIN_POSITIVE).ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ls.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ls).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Percentile bootstrap over seeds: curves are paired by seed label across
/// the ladder, so a resample picks whole seed curves.
///
/// `regrets[k][s]` is the total regret at ladder point `k` for seed `s`.
pub fn bootstrap_slope_ci(
    t_ladder: &[f64],
    regrets: &[Vec<f64>],
    resamples: usize,
    seed: u64,
) -> (f64, f64) {
    use rand_chacha::rand_core::RngCore;
    let n_seeds = regrets[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut slopes = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let picks: Vec<usize> = (0..n_seeds)
            .map(|_| (rng.next_u64() % n_seeds as u64) as usize)
            .collect();
        let means: Vec<f64> = regrets
            .iter()
            .map(|per_seed| picks.iter().map(|&s| per_seed[s]).sum::<f64>() / n_seeds as f64)
            .collect();
        slopes.push(fit_loglog_slope(t_ladder, &means));
    }
    slopes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let lo = slopes[(resamples as f64 * 0.025) as usize];
    let hi = slopes[((resamples as f64 * 0.975) as usize).min(resamples - 1)];
    (lo, hi)
}

/// `scaling` verb: runs the seed set at every ladder horizon, fits the
/// log-log regret slope per seller with a bootstrap interval, and writes
/// `scaling.json` plus a summary (with slope) built from the largest
/// horizon.
pub fn regret_scaling_study(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    workers: Option<usize>,
) -> Result<SlopeEstimate, CliError> {
    if cfg.experiment.t_ladder.len() < 4 {
        return Err(CliError::Config(
            "experiment.t_ladder needs at least four horizons for a slope fit".into(),
        ));
    }
    let seeds = cfg.seeds(None);
    if seeds.len() < 10 {
        return Err(CliError::Config(format!(
            "the scaling study needs at least 10 seeds per ladder point, got {}",
            seeds.len()
        )));
    }
    let policy = cfg.policy();
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", out_dir.display())))?;
    let pool = thread_pool(workers)?;

    let n = cfg.seller.len();
    // regret[k][i][s]: ladder point, seller, seed
    let mut regret = Vec::with_capacity(cfg.experiment.t_ladder.len());
    let mut last_batch: Option<(MarketConfig, Vec<Trajectory>)> = None;
    for &t in &cfg.experiment.t_ladder {
        let market = cfg.market(Some(t))?;
        gate(&market, false)?;
        let trajectories = pool.install(|| run_seeds(&market, &policy, &seeds))?;
        let mut per_seller = vec![Vec::with_capacity(seeds.len()); n];
        for traj in &trajectories {
            for (i, r) in traj.total_regret().into_iter().enumerate() {
                per_seller[i].push(r);
            }
        }
        regret.push(per_seller);
        last_batch = Some((market, trajectories));
    }

    let ladder_f: Vec<f64> = cfg.experiment.t_ladder.iter().map(|&t| t as f64).collect();
    let mut per_seller_slope = Vec::with_capacity(n);
    let mut ci_lower = Vec::with_capacity(n);
    let mut ci_upper = Vec::with_capacity(n);
    let mut mean_regret = Vec::with_capacity(cfg.experiment.t_ladder.len());
    for k in 0..cfg.experiment.t_ladder.len() {
        let means: Vec<f64> = (0..n)
            .map(|i| regret[k][i].iter().sum::<f64>() / seeds.len() as f64)
            .collect();
        mean_regret.push(means);
    }
    for i in 0..n {
        let means: Vec<f64> = mean_regret.iter().map(|m| m[i]).collect();
        per_seller_slope.push(fit_loglog_slope(&ladder_f, &means));
        let curves: Vec<Vec<f64>> = regret.iter().map(|r| r[i].clone()).collect();
        let (lo, hi) = bootstrap_slope_ci(&ladder_f, &curves, 1000, 0x5e_ed_10 + i as u64);
        ci_lower.push(lo);
        ci_upper.push(hi);
    }
    let slope = SlopeEstimate {
        per_seller: per_seller_slope,
        ci_lower,
        ci_upper,
        t_ladder: cfg.experiment.t_ladder.clone(),
        mean_regret,
    };

    let json = serde_json::to_string_pretty(&slope).map_err(|e| CliError::Io(e.to_string()))?;
    std::fs::write(out_dir.join("scaling.json"), json + "\n")
        .map_err(|e| CliError::Io(e.to_string()))?;

    // summary with the slope attached, from the largest-horizon batch
    if let Some((market, trajectories)) = last_batch {
        let lemma_reports = lemma_battery(cfg, &market, &trajectories)?;
        let summary = build_summary(cfg, &market, &trajectories, lemma_reports, Some(slope.clone()))?;
        write_summary(&out_dir.join("summary.json"), &summary)?;
    }
    Ok(slope)
}

/// `lemmas` verb: the full battery including concentration coverage.
pub fn lemma_suite(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    workers: Option<usize>,
) -> Result<Vec<LemmaReport>, CliError> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", out_dir.display())))?;
    let market = cfg.market(None)?;
    gate(&market, false)?;
    let policy = cfg.policy();
    let seeds = cfg.seeds(None);
    let pool = thread_pool(workers)?;
    let trajectories = pool.install(|| run_seeds(&market, &policy, &seeds))?;
    let mut reports = lemma_battery(cfg, &market, &trajectories)?;

    // coverage runs with a short horizon; parallel over disjoint seed blocks
    let cov_market = cfg.market(Some(cfg.lemmas.coverage_rounds))?;
    let runs = cfg.lemmas.coverage_runs;
    let delta = cfg.lemmas.coverage_delta;
    let blocks: Vec<(u64, usize)> = {
        let workers = pool.current_num_threads().max(1);
        let per = runs.div_ceil(workers);
        (0..workers)
            .map(|w| (0x5e_ed_20 + (w * per) as u64, per.min(runs.saturating_sub(w * per))))
            .filter(|&(_, k)| k > 0)
            .collect()
    };
    let partials: Vec<LemmaReport> = pool.install(|| {
        blocks
            .par_iter()
            .map(|&(seed0, k)| {
                check_concentration_coverage(&cov_market, &policy, delta, k, seed0)
                    .map_err(|e| CliError::Io(e.to_string()))
            })
            .collect::<Result<_, _>>()
    })?;
    // merge block counts back into one report
    let mut held = 0.0;
    let mut total = 0usize;
    for (rep, &(_, k)) in partials.iter().zip(&blocks) {
        held += rep.rhs * k as f64;
        total += k;
    }
    let coverage = held / total as f64;
    let required = 1.0 - delta - 3.0 * (delta * (1.0 - delta) / total as f64).sqrt();
    reports.push(LemmaReport::evaluate(
        "concentration-coverage",
        format!(
            "delta = {delta}, runs = {total}, T = {}, coverage {coverage:.4}",
            cfg.lemmas.coverage_rounds
        ),
        required,
        coverage,
        0.0,
    ));

    write_lemma_reports(&out_dir.join("lemmas.jsonl"), &reports)?;
    Ok(reports)
}
